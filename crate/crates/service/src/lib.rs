pub mod api;
pub mod config;
pub mod error;
pub mod jobs;
pub mod store;

pub use api::{router, serve, AppState};
pub use config::ServiceConfig;
pub use error::ServiceError;
pub use jobs::{GenerationJob, JobStatus};
pub use store::{ExampleSummary, FileStore, StoredExample};
