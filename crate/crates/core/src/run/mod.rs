//! End-to-end orchestration behind the command line tool.

mod charts;
mod config;
mod stages;

pub use charts::{line_chart, Series};
pub use config::{model_id, Paths, RunConfig, Scale, ShapSettings};
pub use stages::{
    cmd_eval, cmd_field, cmd_gen, cmd_gen_field, cmd_prep, cmd_report, cmd_rollout, cmd_shap,
    cmd_stack, cmd_train, forecast_anchors, BaseModels, FieldSummary, Forecast, GenSummary, Site,
    StackSummary, TrainSummary, CONTRIBUTIONS_FILE, ENSEMBLE_ID, METRICS_FILE, SHAP_RECORDS_FILE,
};
