pub mod classify;
pub mod corpus;
pub mod detect;
pub mod error;
pub mod explorer;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod trace;
pub mod types;
