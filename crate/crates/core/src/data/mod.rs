//! Datasets, splits, checkpoints and metrics files.

mod checkpoint;
mod clouds;
mod cora;
mod metrics_csv;
mod split;
mod synthetic;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use clouds::{
    gen_synthetic_clouds, normalize_unit_sphere, random_rotation, rotate, sample_shape, Shape,
    SyntheticCloudSet,
};
pub use cora::{load_cora, parse_citation, CitationDataset, LoadReport, CORA_CLASSES};
pub use metrics_csv::{
    format_metrics_csv, parse_metrics_csv, write_metrics_csv, write_metrics_csv_with, MetricsRow,
    HEADER as METRICS_HEADER,
};
pub use split::{make_split, Split, SplitMode};
pub use synthetic::SyntheticCitation;
