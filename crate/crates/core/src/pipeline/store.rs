//! Prepared datasets on disk: resampled records as CSV, window membership
//! as CSV shards, and a JSON index tying them together.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::windows::{
    make_windows, partition, resample_database, split, Part, RecordSource, ResampledRecord,
    SplitMode, SplitSet, WindowRef, WindowSet, PROFILE_POINTS,
};
use crate::datagen::Database;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::persist::{check_schema, read_json, read_table, write_json, write_table, SCHEMA_VERSION};

pub const INDEX_FILE: &str = "index.json";

/// Resampled records plus one split window set per resolution.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub records: Arc<Vec<ResampledRecord>>,
    pub splits: Vec<SplitSet>,
    pub ratios: [f64; 3],
    pub mode: SplitMode,
    pub seed: u64,
}

impl Prepared {
    pub fn split_for(&self, resolution: usize) -> Result<&SplitSet> {
        self.splits
            .iter()
            .find(|s| s.train.resolution() == resolution)
            .ok_or_else(|| Error::data(format!("no prepared windows for resolution {resolution}")))
    }
}

pub fn prepare(
    db: &Database,
    resolutions: &[usize],
    ratios: [f64; 3],
    mode: SplitMode,
    seed: u64,
) -> Result<Prepared> {
    let records = Arc::new(resample_database(db)?);
    let splits = resolutions
        .iter()
        .map(|&t| split(&make_windows(Arc::clone(&records), t)?, ratios, mode, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { records, splits, ratios, mode, seed })
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    schema_version: u32,
    seed: u64,
    mode: SplitMode,
    ratios: [f64; 3],
    points: usize,
    records: Vec<RecordEntry>,
    resolutions: Vec<ResolutionEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordEntry {
    id: usize,
    source: RecordSource,
    phases: usize,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResolutionEntry {
    pub resolution: usize,
    pub windows: usize,
    pub supervised: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub shard: String,
}

fn shard_name(t: usize) -> String {
    format!("windows_t{t}.csv")
}

pub fn write_prepared(dir: &Path, prep: &Prepared) -> Result<()> {
    let mut header = vec!["phase".to_string()];
    header.extend((0..PROFILE_POINTS).map(|i| format!("p{i}")));
    let mut records = Vec::with_capacity(prep.records.len());
    for rec in prep.records.iter() {
        let file = format!("resampled/record_{:05}.csv", rec.id);
        let rows = (0..rec.phases()).map(|p| ((p + 1).to_string(), rec.row(p)));
        write_table(&dir.join(&file), &header, rows)?;
        records.push(RecordEntry { id: rec.id, source: rec.source.clone(), phases: rec.phases(), file });
    }

    let mut resolutions = Vec::new();
    for s in &prep.splits {
        let t = s.train.resolution();
        let shard = shard_name(t);
        let path = dir.join(&shard);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["record", "start", "part"])?;
        let mut all: Vec<(WindowRef, Part)> = Part::ALL
            .iter()
            .flat_map(|&p| s.part(p).refs().iter().map(move |w| (*w, p)))
            .collect();
        all.sort();
        for (win, part) in all {
            let id = prep.records[win.record].id;
            w.write_record([id.to_string(), win.start.to_string(), part.name().to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let windows = s.train.len() + s.val.len() + s.test.len();
        resolutions.push(ResolutionEntry {
            resolution: t,
            windows,
            supervised: s.train.supervised_len() + s.val.supervised_len() + s.test.supervised_len(),
            train: s.train.len(),
            val: s.val.len(),
            test: s.test.len(),
            shard,
        });
    }
    let index = Index {
        schema_version: SCHEMA_VERSION,
        seed: prep.seed,
        mode: prep.mode,
        ratios: prep.ratios,
        points: PROFILE_POINTS,
        records,
        resolutions,
    };
    write_json(&dir.join(INDEX_FILE), &index)
}

/// Per-resolution counts as recorded in the index.
pub fn read_summary(dir: &Path) -> Result<Vec<ResolutionEntry>> {
    let path = dir.join(INDEX_FILE);
    let index: Index = read_json(&path)?;
    check_schema(&path, index.schema_version)?;
    Ok(index.resolutions)
}

pub fn read_prepared(dir: &Path) -> Result<Prepared> {
    let path = dir.join(INDEX_FILE);
    let index: Index = read_json(&path)?;
    check_schema(&path, index.schema_version)?;
    if index.points != PROFILE_POINTS {
        return Err(Error::data(format!("{}: {} points per profile, expected {PROFILE_POINTS}", path.display(), index.points)));
    }
    let records = index
        .records
        .iter()
        .map(|e| {
            let file = dir.join(&e.file);
            let table = read_table(&file)?;
            if table.rows.len() != e.phases || table.rows.iter().any(|r| r.len() != PROFILE_POINTS) {
                return Err(Error::data(format!("{}: expected {} x {PROFILE_POINTS}", file.display(), e.phases)));
            }
            let profiles = Tensor::new(vec![e.phases, PROFILE_POINTS], table.rows.concat())
                .map_err(|err| Error::data(format!("{}: {err}", file.display())))?;
            Ok(ResampledRecord { id: e.id, source: e.source.clone(), profiles })
        })
        .collect::<Result<Vec<_>>>()?;
    let position: std::collections::HashMap<usize, usize> =
        records.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    let records = Arc::new(records);

    let mut splits = Vec::new();
    for entry in &index.resolutions {
        let shard = dir.join(&entry.shard);
        if !shard.exists() {
            return Err(Error::Missing(shard));
        }
        let mut r = csv::Reader::from_path(&shard)?;
        let mut refs = Vec::new();
        let mut parts = Vec::new();
        for (line, row) in r.records().enumerate() {
            let row = row?;
            let bad = || Error::data(format!("{}: malformed row {}", shard.display(), line + 2));
            let id: usize = row.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let start: usize = row.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let part: Part = row.get(2).ok_or_else(bad)?.parse()?;
            let record = *position.get(&id).ok_or_else(bad)?;
            refs.push(WindowRef { record, start });
            parts.push(part);
        }
        let ws = WindowSet::from_refs(Arc::clone(&records), entry.resolution, refs)?;
        splits.push(partition(&ws, &parts, index.mode, index.seed));
    }
    Ok(Prepared { records, splits, ratios: index.ratios, mode: index.mode, seed: index.seed })
}
