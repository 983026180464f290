//! Synthetic staged-excavation records.

mod database;
mod field;
mod io;
mod sampling;
mod schedule;
mod surrogate;
mod tables;

pub use database::{generate_database, generate_record, record_stream, Database, SimulationRecord};
pub use field::{generate_field_like, FieldLikeConfig, MIN_FIELD_STEPS};
pub use io::{read_database, write_database, MANIFEST_FILE};
pub use sampling::{sample_parameters, ParameterDraw, SoilLayerDraw};
pub use schedule::{
    build_schedule, struts_installed, ExcavationCase, Installation, Phase, MONITOR_SPACING,
    PHASE_DEPTH_STEP,
};
pub use surrogate::{simulate_profile, SurrogateConfig, DISPLACEMENT_LIMIT};
pub use tables::{
    default_soil_profile, Constitutive, Normal, SoilLayerSpec, StrutSpec, WallSpec, STRUT_TYPES,
    WALL_TYPES,
};
