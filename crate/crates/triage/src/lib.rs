//! Review queue for deferred predictions.
//!
//! Items are loaded from a queue file (JSONL, most uncertain first), human
//! labels go to an append-only JSONL store that is replayed on start-up, and
//! live metrics treat every accepted human label as correct.

mod error;
mod server;
mod state;
mod store;
mod types;

pub use error::{Result, TriageError};
pub use server::{router, serve, AppState, ServeConfig};
pub use state::{StatusFilter, TriageState};
pub use store::LabelStore;
pub use types::{read_queue, write_queue, DocView, HumanLabel, LabelRequest, LiveMetrics, QueueRecord, Status, TriageItem};
