//! Participant-facing experiment service: stratified human subsets,
//! coverage-first session assignment, and an append-only response log
//! from which all state is rebuilt.

pub mod api;
pub mod state;
pub mod store;
pub mod subset;

pub use api::{router, serve, serve_on, AppState};
pub use state::{
    CoverageReport, Event, HumanResponseRecord, ResponseAck, ServiceConfig, ServiceError, ServiceState, Session,
    TrialCoverage,
};
pub use store::{EventLog, StoreError};
pub use subset::select_human_subset;
