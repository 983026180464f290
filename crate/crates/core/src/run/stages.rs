//! The pipeline stages. Each reads its inputs from disk and writes its
//! outputs to disk, so any stage can be rerun on its own.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::charts::{line_chart, Series};
use super::config::{model_id, RunConfig};
use crate::attribution::{
    read_contributions, stepwise_contributions, write_contributions, write_shap_records,
    ContributionTable, ShapConfig,
};
use crate::convlstm::{train_single_step, ConvLstmStack, EpochRecord, Sample};
use crate::datagen::{
    generate_database, generate_field_like, read_database, write_database, FieldLikeConfig,
};
use crate::ensemble::{
    build_stacking_dataset, ensemble_predict, train_meta, MetaNet, StackingSample,
    StackingSequence, META_INPUTS,
};
use crate::error::{Error, Result};
use crate::forecast::{multi_rollout, write_rollout_csv, OneStepModel, RolloutResult};
use crate::metrics::{read_step_metrics, stepwise_eval, write_step_metrics, Scored, StepMetrics};
use crate::persist::{ensure_dir, write_json, write_table};
use crate::pipeline::{
    anchors, ingest_field_csv, prepare, read_prepared, read_summary, write_field_csv,
    write_prepared, Anchor, Part, ResampledRecord, ResolutionEntry,
};
use crate::rng::{purpose, RngStream};
use crate::weights::{load_meta, load_stack, save_meta, save_stack};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONTRIBUTIONS_FILE: &str = "contributions.csv";
pub const SHAP_RECORDS_FILE: &str = "shap_records.csv";
pub const ENSEMBLE_ID: &str = "ensemble";

/// A seed for one consumer, derived from the run seed.
fn derived_seed(seed: u64, tag: u64) -> u64 {
    RngStream::new(seed, 0).substream(tag).next_u64()
}

#[derive(Debug, Clone, Serialize)]
pub struct GenSummary {
    pub records: usize,
    pub case_a: usize,
    pub case_b: usize,
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<GenSummary> {
    let db = generate_database(cfg.n_per_case, cfg.seed, &cfg.surrogate)?;
    write_database(&cfg.paths.data, &db)?;
    let case_a = db.records.iter().filter(|r| r.case == crate::datagen::ExcavationCase::A).count();
    Ok(GenSummary { records: db.records.len(), case_a, case_b: db.records.len() - case_a })
}

pub fn cmd_prep(cfg: &RunConfig) -> Result<Vec<ResolutionEntry>> {
    let db = read_database(&cfg.paths.data)?;
    let prep = prepare(&db, &cfg.resolutions, cfg.split_ratios, cfg.split_mode, cfg.seed)?;
    write_prepared(&cfg.paths.prepared(), &prep)?;
    read_summary(&cfg.paths.prepared())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub model: String,
    pub params: usize,
    pub epochs: usize,
    pub best_val_loss: f64,
}

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let header = ["epoch".to_string(), "train_loss".into(), "val_loss".into()];
    let rows: Vec<(String, [f64; 2])> =
        history.iter().map(|h| (h.epoch.to_string(), [h.train_loss, h.val_loss])).collect();
    write_table(path, &header, rows.iter().map(|(e, v)| (e.clone(), &v[..])))
}

fn best_val(history: &[EpochRecord]) -> f64 {
    history.iter().map(|h| h.val_loss).fold(f64::NAN, f64::min)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainSummary>> {
    let prep = read_prepared(&cfg.paths.prepared())?;
    let mut out = Vec::new();
    for &t in &cfg.resolutions {
        let split = prep.split_for(t)?;
        let train: Vec<Sample> = split.train.supervised().map(|(w, y)| Sample { window: w, target: y }).collect();
        let val: Vec<Sample> = split.val.supervised().map(|(w, y)| Sample { window: w, target: y }).collect();
        let mut model = ConvLstmStack::init(
            cfg.stack_config(t),
            &mut RngStream::new(cfg.seed, purpose::INIT).substream(t as u64),
        )?;
        model.fit_scale(train.iter().map(|s| s.target))?;
        let tc = crate::convlstm::TrainConfig { seed: derived_seed(cfg.seed, t as u64), ..cfg.train.clone() };
        let (model, history) =
            train_single_step(model, &train, &val, &tc).map_err(|e| e.context(&format!("training {}", model_id(t))))?;
        save_stack(&cfg.paths.base_model(t), &model)?;
        write_history(&cfg.paths.models.join(format!("history_{}.csv", model_id(t))), &history)?;
        out.push(TrainSummary {
            model: model_id(t),
            params: model.count_params(),
            epochs: history.len(),
            best_val_loss: best_val(&history),
        });
    }
    Ok(out)
}

/// The three trained base models, in resolution order.
pub struct BaseModels {
    pub ids: [String; META_INPUTS],
    pub models: Vec<ConvLstmStack>,
}

impl BaseModels {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let models = cfg
            .resolutions
            .iter()
            .map(|&t| {
                let path = cfg.paths.base_model(t);
                let m = load_stack(&path)?;
                if m.resolution() != t {
                    return Err(Error::data(format!(
                        "{}: resolution {} where {t} was expected",
                        path.display(),
                        m.resolution()
                    )));
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ids: cfg.model_ids(), models })
    }

    fn refs(&self) -> Vec<(&str, &dyn OneStepModel)> {
        self.ids.iter().zip(&self.models).map(|(id, m)| (id.as_str(), m as &dyn OneStepModel)).collect()
    }
}

/// Base-model rollouts from one origin, with the known future.
pub struct Forecast {
    pub anchor: Anchor,
    pub rollouts: Vec<RolloutResult>,
    pub truth: Vec<f64>,
}

impl Forecast {
    fn stacking(&self) -> StackingSequence<'_> {
        StackingSequence {
            rollouts: [&self.rollouts[0], &self.rollouts[1], &self.rollouts[2]],
            truth: &self.truth,
        }
    }

    fn ensemble(&self, meta: &MetaNet) -> Result<Vec<f64>> {
        ensemble_predict(meta, [&self.rollouts[0], &self.rollouts[1], &self.rollouts[2]])
    }
}

pub fn forecast_anchors(
    records: &[ResampledRecord],
    origins: &[Anchor],
    bases: &BaseModels,
    horizon: usize,
) -> Result<Vec<Forecast>> {
    let refs = bases.refs();
    origins
        .par_iter()
        .map(|&a| {
            let rec = &records[a.record];
            let history = rec.rows(0, a.end + 1);
            let truth = rec.rows(a.end + 1, a.end + 1 + horizon).to_vec();
            let rollouts = multi_rollout(&refs, history, horizon)
                .map_err(|e| e.context(&format!("record {} phase {}", rec.id, a.end + 1)))?;
            Ok(Forecast { anchor: a, rollouts, truth })
        })
        .collect()
}

/// Forecast origins in `part` of the shortest-resolution split.
fn split_forecasts(cfg: &RunConfig, part: Part, bases: &BaseModels) -> Result<Vec<Forecast>> {
    let prep = read_prepared(&cfg.paths.prepared())?;
    let ws = prep.split_for(cfg.min_resolution())?.part(part);
    let origins = anchors(ws, cfg.max_resolution(), cfg.horizon);
    if origins.is_empty() {
        return Err(Error::data(format!(
            "no {} forecast origins with {} past and {} future phases",
            part.name(),
            cfg.max_resolution(),
            cfg.horizon
        )));
    }
    forecast_anchors(&prep.records, &origins, bases, cfg.horizon)
}

fn stacking_samples(forecasts: &[Forecast]) -> Result<Vec<StackingSample>> {
    let seqs: Vec<StackingSequence> = forecasts.iter().map(Forecast::stacking).collect();
    build_stacking_dataset(&seqs)
}

#[derive(Debug, Clone, Serialize)]
pub struct StackSummary {
    pub sequences: usize,
    pub samples: usize,
    pub params: usize,
    pub epochs: usize,
    pub best_holdout_loss: f64,
}

pub fn cmd_stack(cfg: &RunConfig) -> Result<StackSummary> {
    let bases = BaseModels::load(cfg)?;
    let forecasts = split_forecasts(cfg, Part::Val, &bases)?;
    let samples = stacking_samples(&forecasts)?;
    let mut meta = MetaNet::init(cfg.meta.clone(), &mut RngStream::new(cfg.seed, purpose::INIT).substream(0))?;
    meta.fit_scale(samples.iter().map(|s| s.y))?;
    let mc = crate::ensemble::MetaTrainConfig { seed: derived_seed(cfg.seed, 0), ..cfg.meta_train.clone() };
    let (meta, history) = train_meta(meta, &samples, &mc).map_err(|e| e.context("training meta-learner"))?;
    save_meta(&cfg.paths.meta_model(), &meta)?;
    write_history(&cfg.paths.models.join("history_meta.csv"), &history)?;
    Ok(StackSummary {
        sequences: forecasts.len(),
        samples: samples.len(),
        params: meta.count_params(),
        epochs: history.len(),
        best_holdout_loss: best_val(&history),
    })
}

fn write_forecast_files(dir: &Path, f: &Forecast, meta: &MetaNet, horizon: usize) -> Result<()> {
    for r in &f.rollouts {
        write_rollout_csv(&dir.join(format!("{}.csv", r.model)), r)?;
    }
    let points = f.rollouts[0].points;
    let with = |model: &str, predictions: Vec<f64>| RolloutResult {
        model: model.into(),
        horizon,
        points,
        predictions,
        seed_window: Vec::new(),
    };
    write_rollout_csv(&dir.join(format!("{ENSEMBLE_ID}.csv")), &with(ENSEMBLE_ID, f.ensemble(meta)?))?;
    write_rollout_csv(&dir.join("truth.csv"), &with("truth", f.truth.clone()))
}

/// Writes full forecasts for a few evenly spread test origins.
pub fn cmd_rollout(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let bases = BaseModels::load(cfg)?;
    let meta = load_meta(&cfg.paths.meta_model())?;
    let prep = read_prepared(&cfg.paths.prepared())?;
    let ws = prep.split_for(cfg.min_resolution())?.part(Part::Test);
    let all = anchors(ws, cfg.max_resolution(), cfg.horizon);
    let picked = crate::convlstm::strided(&all, Some(cfg.rollout_examples));
    let forecasts = forecast_anchors(&prep.records, &picked, &bases, cfg.horizon)?;
    let mut dirs = Vec::new();
    for f in &forecasts {
        let rec = &prep.records[f.anchor.record];
        let dir = cfg.paths.reports.join("rollouts").join(format!("record{:05}_phase{}", rec.id, f.anchor.end + 1));
        ensure_dir(&dir)?;
        write_forecast_files(&dir, f, &meta, cfg.horizon)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

fn evaluate(
    forecasts: &[Forecast],
    ids: &[String; META_INPUTS],
    meta: &MetaNet,
    horizon: usize,
) -> Result<Vec<(String, Vec<StepMetrics>)>> {
    let points = forecasts.first().map_or(0, |f| f.rollouts[0].points);
    let mut tables = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let seqs: Vec<Scored> =
            forecasts.iter().map(|f| Scored { pred: &f.rollouts[i].predictions, truth: &f.truth }).collect();
        tables.push((id.clone(), stepwise_eval(&seqs, horizon, points).map_err(|e| e.context(id))?));
    }
    let ens: Vec<Vec<f64>> = forecasts.iter().map(|f| f.ensemble(meta)).collect::<Result<_>>()?;
    let seqs: Vec<Scored> =
        forecasts.iter().zip(&ens).map(|(f, e)| Scored { pred: e, truth: &f.truth }).collect();
    tables.push((ENSEMBLE_ID.to_string(), stepwise_eval(&seqs, horizon, points).map_err(|e| e.context(ENSEMBLE_ID))?));
    Ok(tables)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<(String, Vec<StepMetrics>)>> {
    let bases = BaseModels::load(cfg)?;
    let meta = load_meta(&cfg.paths.meta_model())?;
    let forecasts = split_forecasts(cfg, Part::Test, &bases)?;
    let tables = evaluate(&forecasts, &bases.ids, &meta, cfg.horizon)?;
    write_step_metrics(&cfg.paths.reports.join(METRICS_FILE), &tables)?;
    Ok(tables)
}

fn attribute(
    cfg: &RunConfig,
    forecasts: &[Forecast],
    ids: &[String; META_INPUTS],
    meta: &MetaNet,
    dir: &Path,
) -> Result<ContributionTable> {
    let samples = stacking_samples(forecasts)?;
    let shap_cfg = ShapConfig::from(&cfg.shap);
    let (table, records) = stepwise_contributions(
        meta,
        ids.clone(),
        &samples,
        cfg.horizon,
        &shap_cfg,
        &mut RngStream::new(cfg.seed, purpose::SHAP),
    )?;
    write_contributions(&dir.join(CONTRIBUTIONS_FILE), &table)?;
    write_shap_records(&dir.join(SHAP_RECORDS_FILE), ids, &records)?;
    Ok(table)
}

pub fn cmd_shap(cfg: &RunConfig) -> Result<ContributionTable> {
    let bases = BaseModels::load(cfg)?;
    let meta = load_meta(&cfg.paths.meta_model())?;
    let forecasts = split_forecasts(cfg, Part::Test, &bases)?;
    attribute(cfg, &forecasts, &bases.ids, &meta, &cfg.paths.reports)
}

#[derive(Debug, Clone, Serialize)]
struct ModelHeadline {
    model: String,
    ioa_first: f64,
    ioa_last: f64,
    mae_first: f64,
    mae_last: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ReportIndex {
    schema_version: u32,
    seed: u64,
    horizon: usize,
    headline: Vec<ModelHeadline>,
    files: Vec<String>,
}

fn write_charts(dir: &Path, tables: &[(String, Vec<StepMetrics>)], contrib: &ContributionTable) -> Result<Vec<PathBuf>> {
    let charts = dir.join("charts");
    ensure_dir(&charts)?;
    let mut written = Vec::new();
    type Column = fn(&StepMetrics) -> f64;
    let metric_charts: [(&str, &str, Column); 3] =
        [("ioa", "IoA", |m| m.ioa), ("mae", "MAE (m)", |m| m.mae), ("r2", "R²", |m| m.r2)];
    for (file, label, get) in metric_charts {
        let series: Vec<Series> = tables
            .iter()
            .map(|(name, rows)| Series { name, points: rows.iter().map(|m| (m.step as f64, get(m))).collect() })
            .collect();
        let path = charts.join(format!("{file}_vs_step.svg"));
        let svg = line_chart(&format!("{label} by prediction step"), "prediction step", label, &series);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let series: Vec<Series> = contrib
        .models
        .iter()
        .enumerate()
        .map(|(i, name)| Series { name, points: contrib.rows.iter().map(|r| (r.step as f64, r.share[i])).collect() })
        .collect();
    let path = charts.join("contribution_vs_step.svg");
    let svg = line_chart("Normalised contribution by prediction step", "prediction step", "share of mean |SHAP|", &series);
    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

fn headline(tables: &[(String, Vec<StepMetrics>)]) -> Vec<ModelHeadline> {
    tables
        .iter()
        .filter_map(|(model, rows)| {
            let (first, last) = (rows.first()?, rows.last()?);
            Some(ModelHeadline {
                model: model.clone(),
                ioa_first: first.ioa,
                ioa_last: last.ioa,
                mae_first: first.mae,
                mae_last: last.mae,
            })
        })
        .collect()
}

/// Charts and an index over the metrics and contribution tables.
pub fn cmd_report(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = &cfg.paths.reports;
    let tables = read_step_metrics(&dir.join(METRICS_FILE))?;
    let contrib = read_contributions(&dir.join(CONTRIBUTIONS_FILE))?;
    let charts = write_charts(dir, &tables, &contrib)?;
    let mut files: Vec<String> = [METRICS_FILE, CONTRIBUTIONS_FILE, SHAP_RECORDS_FILE]
        .iter()
        .filter(|f| dir.join(f).exists())
        .map(|f| f.to_string())
        .collect();
    files.extend(charts.iter().filter_map(|p| p.strip_prefix(dir).ok()).map(|p| p.display().to_string()));
    let index = ReportIndex {
        schema_version: crate::persist::SCHEMA_VERSION,
        seed: cfg.seed,
        horizon: cfg.horizon,
        headline: headline(&tables),
        files,
    };
    let path = dir.join("report.json");
    write_json(&path, &index)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    A,
    B,
}

impl std::str::FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Site::A),
            "b" | "B" => Ok(Site::B),
            other => Err(Error::invalid(format!("unknown site '{other}' (expected a or b)"))),
        }
    }
}

/// Writes a synthetic monitoring series in the field CSV layout.
pub fn cmd_gen_field(cfg: &RunConfig, site: Site, out: &Path) -> Result<()> {
    let fc = match site {
        Site::A => FieldLikeConfig::site_a(),
        Site::B => FieldLikeConfig::site_b(),
    };
    let tag = match site {
        Site::A => 0,
        Site::B => 1,
    };
    let series = generate_field_like(&fc, &mut RngStream::new(cfg.seed, purpose::FIELD).substream(tag))?;
    write_field_csv(out, &fc.depths(), &series)
}

#[derive(Debug, Clone)]
pub struct FieldSummary {
    pub dir: PathBuf,
    pub origins: usize,
    pub max_abs_prediction: f64,
    pub metrics: Vec<(String, Vec<StepMetrics>)>,
    pub contributions: ContributionTable,
}

/// Forecasts every usable origin of a monitoring series and scores,
/// attributes and writes them under `reports/field/<name>`.
pub fn cmd_field(cfg: &RunConfig, input: &Path) -> Result<FieldSummary> {
    let bases = BaseModels::load(cfg)?;
    let meta = load_meta(&cfg.paths.meta_model())?;
    let record = ingest_field_csv(input)?;
    let name = match &record.source {
        crate::pipeline::RecordSource::Field { name } => name.clone(),
        _ => "field".to_string(),
    };
    let (history, horizon) = (cfg.max_resolution(), cfg.horizon);
    if record.phases() < history + horizon {
        return Err(Error::data(format!(
            "{}: {} measurements, need at least {}",
            input.display(),
            record.phases(),
            history + horizon
        )));
    }
    let origins: Vec<Anchor> =
        (history - 1..record.phases() - horizon).map(|end| Anchor { record: 0, end }).collect();
    let records = Arc::new(vec![record]);
    let forecasts = forecast_anchors(&records, &origins, &bases, horizon)?;
    let dir = cfg.paths.reports.join("field").join(&name);
    ensure_dir(&dir)?;
    let metrics = evaluate(&forecasts, &bases.ids, &meta, horizon)?;
    write_step_metrics(&dir.join(METRICS_FILE), &metrics)?;
    let contributions = attribute(cfg, &forecasts, &bases.ids, &meta, &dir)?;
    let mut max_abs: f64 = 0.0;
    for f in &forecasts {
        for v in f.rollouts.iter().flat_map(|r| &r.predictions).chain(&f.ensemble(&meta)?) {
            max_abs = max_abs.max(v.abs());
        }
    }
    if let Some(first) = forecasts.first() {
        let sub = dir.join(format!("phase{}", first.anchor.end + 1));
        ensure_dir(&sub)?;
        write_forecast_files(&sub, first, &meta, horizon)?;
    }
    Ok(FieldSummary { dir, origins: forecasts.len(), max_abs_prediction: max_abs, metrics, contributions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::MetaConfig;

    fn forecast(truth: Vec<f64>, points: usize, horizon: usize, offsets: [f64; 3]) -> Forecast {
        let rollouts = offsets
            .iter()
            .enumerate()
            .map(|(i, d)| RolloutResult {
                model: model_id(i + 1),
                horizon,
                points,
                predictions: truth.iter().map(|v| v + d).collect(),
                seed_window: Vec::new(),
            })
            .collect();
        Forecast { anchor: Anchor { record: 0, end: 0 }, rollouts, truth }
    }

    /// A meta-learner that passes its first input through.
    fn first_input() -> MetaNet {
        MetaNet::from_params(MetaConfig::with_plan(vec![3, 1]), vec![1.0, 0.0, 0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn perfect_stub_scores_one() {
        let (points, horizon) = (5, 4);
        let forecasts: Vec<Forecast> = (0..3)
            .map(|s| {
                let truth = (0..points * horizon).map(|k| ((k + 7 * s) as f64 * 0.3).sin()).collect();
                forecast(truth, points, horizon, [0.0, 0.1, -0.2])
            })
            .collect();
        let ids = [model_id(1), model_id(2), model_id(3)];
        let tables = evaluate(&forecasts, &ids, &first_input(), horizon).unwrap();
        assert_eq!(tables.len(), 4);
        for (name, rows) in &tables {
            assert_eq!(rows.len(), horizon);
            let perfect = name == "t1" || name == ENSEMBLE_ID;
            for r in rows {
                assert_eq!(r.ioa == 1.0, perfect, "{name} step {}: {}", r.step, r.ioa);
                assert_eq!(r.n, 3);
            }
        }
    }

    #[test]
    fn site_names() {
        assert_eq!("b".parse::<Site>().unwrap(), Site::B);
        assert_eq!("A".parse::<Site>().unwrap(), Site::A);
        assert!(matches!("c".parse::<Site>(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn report_names_missing_upstream_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { paths: crate::run::Paths::under(dir.path()), ..RunConfig::desk() };
        match cmd_report(&cfg) {
            Err(Error::Missing(p)) => assert!(p.ends_with(METRICS_FILE)),
            other => panic!("expected a missing-file error, got {other:?}"),
        }
    }
}
