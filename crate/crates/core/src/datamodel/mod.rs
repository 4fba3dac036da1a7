//! Feature files, segment manifests and annotation tables.

pub mod annotations;
pub mod features;
pub mod records;

pub use annotations::{
    compute_stats, parse_annotation_csv, parse_annotations, parse_duration_csv, write_annotation_csv, ColumnMap, DatasetStats,
    ParsedAnnotations, RowError,
};
pub use features::{read_feature_file, write_feature_file, FeatureSequence};
pub use records::{
    load_manifest, split_records, write_manifest, Dominance, EventAnnotation, Intensity, SegmentRecord, Source,
    Split,
};
