//! Two-level (field -> sub-field) classification trees, one per area.

use serde::{Deserialize, Serialize};

use crate::domain::TaxonomyPath;
use crate::error::{Error, Result};

const COMPUTING_SEED: &str = include_str!("../seed/computing.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyArea {
    pub area_id: String,
    pub name: String,
    pub fields: Vec<TaxonomyField>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyField {
    pub field_id: String,
    pub name: String,
    pub subfields: Vec<Subfield>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subfield {
    pub subfield_id: String,
    pub name: String,
}

/// Names-only shape of an area, as found in seed files and A4 requests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaSeed {
    pub name: String,
    #[serde(default)]
    pub fields: Vec<FieldSeed>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSeed {
    pub name: String,
    #[serde(default)]
    pub subfields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SubfieldAction {
    Add { name: String },
    Rename { subfield_id: String, name: String },
    Delete { subfield_id: String },
}

impl AreaSeed {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("taxonomy seed: {e}")))
    }

    pub fn computing() -> Self {
        Self::from_toml_str(COMPUTING_SEED).expect("bundled computing seed parses")
    }
}

/// Lowercase ASCII-alphanumeric words joined by `-`.
pub fn slugify(name: &str) -> String {
    name.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .collect::<Vec<_>>()
        .join("-")
}

fn unique_slug<'a>(name: &str, taken: impl Iterator<Item = &'a str> + Clone) -> String {
    let base = match slugify(name) {
        s if s.is_empty() => "item".to_string(),
        s => s,
    };
    if !taken.clone().any(|t| t == base) {
        return base;
    }
    (2..)
        .map(|n| format!("{base}-{n}"))
        .find(|candidate| !taken.clone().any(|t| t == candidate))
        .expect("unbounded suffix search")
}

fn same_name(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

fn check_name(name: &str, what: &str) -> Result<()> {
    if name.trim().is_empty() {
        Err(Error::validation(format!("{what} name must not be empty")))
    } else {
        Ok(())
    }
}

impl TaxonomyArea {
    /// Builds a tree with freshly derived identifiers.
    pub fn from_seed(seed: &AreaSeed) -> Result<Self> {
        check_name(&seed.name, "area")?;
        let area_id = slugify(&seed.name);
        if area_id.is_empty() {
            return Err(Error::validation("area name must contain letters or digits"));
        }
        if seed.fields.is_empty() {
            return Err(Error::validation("taxonomy tree must contain at least one field"));
        }
        let mut area = TaxonomyArea {
            area_id,
            name: seed.name.trim().to_string(),
            fields: Vec::with_capacity(seed.fields.len()),
        };
        for field in &seed.fields {
            let field_id = area.add_field(&field.name)?;
            for sub in &field.subfields {
                area.apply(&field_id, &SubfieldAction::Add { name: sub.clone() })?;
            }
        }
        Ok(area)
    }

    pub fn add_field(&mut self, name: &str) -> Result<String> {
        check_name(name, "field")?;
        if self.fields.iter().any(|f| same_name(&f.name, name)) {
            return Err(Error::Conflict(format!("field {name:?} already exists")));
        }
        let field_id = unique_slug(name, self.fields.iter().map(|f| f.field_id.as_str()));
        self.fields.push(TaxonomyField {
            field_id: field_id.clone(),
            name: name.trim().to_string(),
            subfields: Vec::new(),
        });
        Ok(field_id)
    }

    pub fn field(&self, field_id: &str) -> Option<&TaxonomyField> {
        self.fields.iter().find(|f| f.field_id == field_id)
    }

    pub fn validate_path(&self, field_id: &str, subfield_id: &str) -> bool {
        self.field(field_id)
            .is_some_and(|f| f.subfields.iter().any(|s| s.subfield_id == subfield_id))
    }

    pub fn contains(&self, path: &TaxonomyPath) -> bool {
        self.validate_path(&path.field_id, &path.subfield_id)
    }

    /// Every (field, sub-field) pair in tree order.
    pub fn paths(&self) -> Vec<TaxonomyPath> {
        self.fields
            .iter()
            .flat_map(|f| {
                f.subfields
                    .iter()
                    .map(move |s| TaxonomyPath::new(&f.field_id, &s.subfield_id))
            })
            .collect()
    }

    /// Applies a sub-field change to the in-memory tree. Referential checks
    /// for deletes are the caller's job since they need the record table.
    /// Returns the affected sub-field id.
    pub fn apply(&mut self, field_id: &str, action: &SubfieldAction) -> Result<String> {
        let field = self
            .fields
            .iter_mut()
            .find(|f| f.field_id == field_id)
            .ok_or_else(|| Error::not_found(format!("field {field_id:?}")))?;
        match action {
            SubfieldAction::Add { name } => {
                check_name(name, "sub-field")?;
                if field.subfields.iter().any(|s| same_name(&s.name, name)) {
                    return Err(Error::Conflict(format!(
                        "sub-field {name:?} already exists under {field_id:?}"
                    )));
                }
                let id = unique_slug(name, field.subfields.iter().map(|s| s.subfield_id.as_str()));
                field.subfields.push(Subfield {
                    subfield_id: id.clone(),
                    name: name.trim().to_string(),
                });
                Ok(id)
            }
            SubfieldAction::Rename { subfield_id, name } => {
                check_name(name, "sub-field")?;
                if field
                    .subfields
                    .iter()
                    .any(|s| s.subfield_id != *subfield_id && same_name(&s.name, name))
                {
                    return Err(Error::Conflict(format!(
                        "sub-field {name:?} already exists under {field_id:?}"
                    )));
                }
                let sub = field
                    .subfields
                    .iter_mut()
                    .find(|s| s.subfield_id == *subfield_id)
                    .ok_or_else(|| Error::not_found(format!("sub-field {subfield_id:?}")))?;
                sub.name = name.trim().to_string();
                Ok(subfield_id.clone())
            }
            SubfieldAction::Delete { subfield_id } => {
                let before = field.subfields.len();
                field.subfields.retain(|s| s.subfield_id != *subfield_id);
                if field.subfields.len() == before {
                    return Err(Error::not_found(format!("sub-field {subfield_id:?}")));
                }
                Ok(subfield_id.clone())
            }
        }
    }
}
