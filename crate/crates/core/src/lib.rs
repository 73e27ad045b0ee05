pub mod autodiff;
pub mod config;
pub mod csr;
pub mod data;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod graph;
pub mod layer;
pub mod models;
pub mod pooling;
pub mod run;
pub mod tensor;

pub use error::{Result, SamgcError};
