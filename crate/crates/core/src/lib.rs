//! Core of a collaborative bibliographic service for review and survey
//! articles: entities and lifecycle, classification trees, ratings, social
//! evaluation, bibliometrics, recommendations, accounts, and storage.

pub mod auth;
pub mod bibliometrics;
pub mod capability;
pub mod clock;
pub mod config;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod rating;
pub mod recommender;
pub mod service;
pub mod store;
pub mod taxonomy;

pub use error::{Error, Result};
pub use service::Bibliography;
