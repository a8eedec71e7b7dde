//! Incomplete datasets: schema, missingness patterns, ingestion and tabulation.

mod combine;
mod dataset;
mod ingest;
mod registry;
mod schema;
mod table;

pub use combine::combine_sparse_patterns;
pub use dataset::{infer_patterns, ObservedDataset, ObservedRow, RawTable};
pub use ingest::{parse_csv, read_csv, write_csv, MISSING_TOKEN};
pub use registry::{Pattern, PatternRegistry};
pub use schema::{VariableKind, VariableSchema};
pub use table::{tabulate_patterns, PatternTable, PatternTableRow};
