//! From raw records to model-ready windows.

mod field;
mod spline;
mod store;
mod windows;

pub use field::{ingest_field_csv, read_field_csv, write_field_csv, FieldSeries};
pub use spline::{even_grid, spline_resample, NaturalSpline};
pub use store::{prepare, read_prepared, read_summary, write_prepared, Prepared, ResolutionEntry, INDEX_FILE};
pub use windows::{
    anchors, make_windows, record_parts, resample_database, resample_matrix, resample_record,
    split, split_counts, Anchor, Part, RecordSource, ResampledRecord, SplitMode, SplitSet,
    WindowRef, WindowSet, PROFILE_POINTS,
};
