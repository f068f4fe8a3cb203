pub mod analysis;
pub mod codeanalysis;
pub mod config;
pub mod dataset;
pub mod discovery;
pub mod inventory;
pub mod retrieval;
pub mod secret;
pub mod workflow;
