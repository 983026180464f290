use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spline::spline_resample;
use crate::datagen::{Database, ExcavationCase, SimulationRecord};
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::rng::{purpose, RngStream};

/// Spatial points every profile is resampled to.
pub const PROFILE_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RecordSource {
    Simulation { case: ExcavationCase },
    Field { name: String },
}

/// A phase series on the common 100-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledRecord {
    pub id: usize,
    pub source: RecordSource,
    /// `[phases, PROFILE_POINTS]`, metres.
    pub profiles: Tensor,
}

impl ResampledRecord {
    pub fn phases(&self) -> usize {
        self.profiles.shape()[0]
    }

    pub fn row(&self, phase: usize) -> &[f64] {
        let n = self.profiles.shape()[1];
        &self.profiles.data()[phase * n..(phase + 1) * n]
    }

    /// Rows `start..end`, contiguous.
    pub fn rows(&self, start: usize, end: usize) -> &[f64] {
        let n = self.profiles.shape()[1];
        &self.profiles.data()[start * n..end * n]
    }
}

/// Resamples every phase of a `[phases, points]` matrix sampled at `depths`.
pub fn resample_matrix(depths: &[f64], matrix: &[f64], phases: usize, n: usize) -> Result<Tensor> {
    let points = depths.len();
    if matrix.len() != phases * points {
        return Err(Error::shape(format!(
            "matrix of {} values is not {phases} x {points}",
            matrix.len()
        )));
    }
    let mut out = Vec::with_capacity(phases * n);
    for row in matrix.chunks_exact(points) {
        out.extend(spline_resample(depths, row, n)?);
    }
    Tensor::new(vec![phases, n], out)
}

pub fn resample_record(record: &SimulationRecord) -> Result<ResampledRecord> {
    let depths = record.case.monitoring_depths();
    let profiles = resample_matrix(&depths, record.displacement.data(), record.phases(), PROFILE_POINTS)?;
    Ok(ResampledRecord { id: record.id, source: RecordSource::Simulation { case: record.case }, profiles })
}

pub fn resample_database(db: &Database) -> Result<Vec<ResampledRecord>> {
    db.records.par_iter().map(resample_record).collect()
}

/// Position of one window: `record` indexes the shared record list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowRef {
    pub record: usize,
    pub start: usize,
}

/// Stride-1 sliding windows of `resolution` consecutive phases. Windows
/// borrow from the shared records, so slicing a set never copies profiles.
#[derive(Debug, Clone)]
pub struct WindowSet {
    resolution: usize,
    records: Arc<Vec<ResampledRecord>>,
    windows: Vec<WindowRef>,
}

impl WindowSet {
    pub fn from_refs(
        records: Arc<Vec<ResampledRecord>>,
        resolution: usize,
        windows: Vec<WindowRef>,
    ) -> Result<Self> {
        for w in &windows {
            let rec = records
                .get(w.record)
                .ok_or_else(|| Error::data(format!("window names missing record {}", w.record)))?;
            if w.start + resolution > rec.phases() {
                return Err(Error::data(format!(
                    "window at phase {} overruns record {} ({} phases)",
                    w.start,
                    rec.id,
                    rec.phases()
                )));
            }
        }
        Ok(Self { resolution, records, windows })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn records(&self) -> &Arc<Vec<ResampledRecord>> {
        &self.records
    }

    pub fn refs(&self) -> &[WindowRef] {
        &self.windows
    }

    /// Input windows N.
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// `[resolution, PROFILE_POINTS]` row-major.
    pub fn input(&self, i: usize) -> &[f64] {
        let w = self.windows[i];
        self.records[w.record].rows(w.start, w.start + self.resolution)
    }

    /// The phase after window `i`, if the record has one.
    pub fn target(&self, i: usize) -> Option<&[f64]> {
        let w = self.windows[i];
        let rec = &self.records[w.record];
        let next = w.start + self.resolution;
        (next < rec.phases()).then(|| rec.row(next))
    }

    /// `(record id, start phase)`.
    pub fn provenance(&self, i: usize) -> (usize, usize) {
        let w = self.windows[i];
        (self.records[w.record].id, w.start)
    }

    /// Windows with a next-step target, as `(input, target)` pairs.
    pub fn supervised(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        (0..self.len()).filter_map(move |i| self.target(i).map(|t| (self.input(i), t)))
    }

    /// Supervised pair count M.
    pub fn supervised_len(&self) -> usize {
        (0..self.len()).filter(|&i| self.target(i).is_some()).count()
    }

    fn subset(&self, windows: Vec<WindowRef>) -> Self {
        Self { resolution: self.resolution, records: Arc::clone(&self.records), windows }
    }
}

pub fn make_windows(records: Arc<Vec<ResampledRecord>>, resolution: usize) -> Result<WindowSet> {
    if resolution == 0 {
        return Err(Error::invalid("resolution must be at least 1"));
    }
    let mut windows = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        if rec.phases() < resolution + 1 {
            return Err(Error::data(format!(
                "record {} has {} phases, resolution {resolution} needs at least {}",
                rec.id,
                rec.phases(),
                resolution + 1
            )));
        }
        windows.extend((0..=rec.phases() - resolution).map(|start| WindowRef { record: r, start }));
    }
    Ok(WindowSet { resolution, records, windows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Windows are shuffled and cut; windows of one record can land in
    /// different parts.
    #[default]
    Sequence,
    /// Whole records are assigned to parts before windowing.
    Record,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Sequence => "sequence",
            SplitMode::Record => "record",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequence" => Ok(SplitMode::Sequence),
            "record" => Ok(SplitMode::Record),
            other => Err(Error::invalid(format!("unknown split mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Train, Part::Val, Part::Test];

    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

impl FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Part::Train),
            "val" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            other => Err(Error::data(format!("unknown split part '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitSet {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitSet {
    pub fn part(&self, part: Part) -> &WindowSet {
        match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        }
    }
}

/// Part sizes for `n` items: train and validation rounded, test the rest.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let train = ((n as f64) * ratios[0]).round() as usize;
    let val = (((n as f64) * ratios[1]).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    Ok([train, val, n - train - val])
}

/// Part of each index in `0..n` after a seeded shuffle.
fn assign(n: usize, ratios: [f64; 3], rng: &mut RngStream) -> Result<Vec<Part>> {
    let [train, val, _] = split_counts(n, ratios)?;
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut parts = vec![Part::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        parts[i] = if rank < train {
            Part::Train
        } else if rank < train + val {
            Part::Val
        } else {
            Part::Test
        };
    }
    Ok(parts)
}

/// Part of every record under record-level splitting. Shared by all
/// resolutions so a record never changes sides between them.
pub fn record_parts(n_records: usize, ratios: [f64; 3], seed: u64) -> Result<Vec<Part>> {
    assign(n_records, ratios, &mut RngStream::new(seed, purpose::SPLIT).substream(0))
}

/// Partitions `ws`; every part keeps the original window order.
pub fn split(ws: &WindowSet, ratios: [f64; 3], mode: SplitMode, seed: u64) -> Result<SplitSet> {
    if ws.is_empty() {
        return Err(Error::data("cannot split an empty window set"));
    }
    let parts = match mode {
        SplitMode::Sequence => {
            let mut rng = RngStream::new(seed, purpose::SPLIT).substream(ws.resolution as u64);
            assign(ws.len(), ratios, &mut rng)?
        }
        SplitMode::Record => {
            let by_record = record_parts(ws.records.len(), ratios, seed)?;
            ws.windows.iter().map(|w| by_record[w.record]).collect()
        }
    };
    Ok(partition(ws, &parts, mode, seed))
}

pub(crate) fn partition(ws: &WindowSet, parts: &[Part], mode: SplitMode, seed: u64) -> SplitSet {
    let pick = |p: Part| {
        ws.windows.iter().zip(parts).filter(|(_, &q)| q == p).map(|(w, _)| *w).collect::<Vec<_>>()
    };
    SplitSet {
        train: ws.subset(pick(Part::Train)),
        val: ws.subset(pick(Part::Val)),
        test: ws.subset(pick(Part::Test)),
        mode,
        seed,
    }
}

/// A point in a record from which all base models can forecast: the last
/// observed phase `end`, with at least `history` phases up to it and
/// `horizon` known phases after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Anchor {
    pub record: usize,
    pub end: usize,
}

/// Window ends of `ws` usable as forecast origins, deduplicated and ordered.
pub fn anchors(ws: &WindowSet, history: usize, horizon: usize) -> Vec<Anchor> {
    let set: BTreeSet<Anchor> = ws
        .windows
        .iter()
        .map(|w| Anchor { record: w.record, end: w.start + ws.resolution - 1 })
        .filter(|a| a.end + 1 >= history && a.end + horizon < ws.records[a.record].phases())
        .collect();
    set.into_iter().collect()
}
