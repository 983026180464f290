use std::path::Path;

use serde::{Deserialize, Serialize};

use super::database::{Database, SimulationRecord};
use super::sampling::ParameterDraw;
use super::schedule::ExcavationCase;
use super::surrogate::SurrogateConfig;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::persist::{check_schema, read_json, read_table, write_json, write_table, SCHEMA_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    seed: u64,
    n_per_case: usize,
    surrogate: SurrogateConfig,
    records: Vec<RecordEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordEntry {
    id: usize,
    case: ExcavationCase,
    file: String,
    phases: usize,
    points: usize,
    seed: u64,
    attempt: u64,
    draw: ParameterDraw,
}

fn record_file(id: usize) -> String {
    format!("records/record_{id:05}.csv")
}

/// One CSV per record (a row per phase, a column per monitoring depth, metres)
/// plus a JSON manifest with the draws.
pub fn write_database(dir: &Path, db: &Database) -> Result<()> {
    let mut entries = Vec::with_capacity(db.records.len());
    for r in &db.records {
        let file = record_file(r.id);
        let mut header = vec!["phase".to_string()];
        header.extend(r.case.monitoring_depths().iter().map(|z| format!("z{z}")));
        let rows = (0..r.phases()).map(|p| ((p + 1).to_string(), r.row(p)));
        write_table(&dir.join(&file), &header, rows)?;
        entries.push(RecordEntry {
            id: r.id,
            case: r.case,
            file,
            phases: r.phases(),
            points: r.points(),
            seed: r.seed,
            attempt: r.attempt,
            draw: r.draw.clone(),
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: db.seed,
        n_per_case: db.n_per_case,
        surrogate: db.surrogate.clone(),
        records: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_database(dir: &Path) -> Result<Database> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = read_json(&manifest_path)?;
    check_schema(&manifest_path, manifest.schema_version)?;
    let records = manifest
        .records
        .into_iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let table = read_table(&path)?;
            if table.rows.len() != e.phases || table.rows.iter().any(|r| r.len() != e.points) {
                return Err(Error::data(format!(
                    "{}: expected {} phases x {} points",
                    path.display(),
                    e.phases,
                    e.points
                )));
            }
            let displacement = Tensor::new(vec![e.phases, e.points], table.rows.concat())
                .map_err(|err| Error::data(format!("{}: {err}", path.display())))?;
            Ok(SimulationRecord {
                id: e.id,
                case: e.case,
                draw: e.draw,
                seed: e.seed,
                attempt: e.attempt,
                displacement,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Database { seed: manifest.seed, n_per_case: manifest.n_per_case, surrogate: manifest.surrogate, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_database;

    #[test]
    fn round_trip_is_exact() {
        let db = generate_database(2, 5, &SurrogateConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_database(dir.path(), &db).unwrap();
        assert!(dir.path().join("records/record_00003.csv").exists());
        assert_eq!(read_database(dir.path()).unwrap(), db);
    }

    #[test]
    fn truncated_record_is_a_data_error() {
        let db = generate_database(1, 5, &SurrogateConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_database(dir.path(), &db).unwrap();
        let path = dir.path().join(record_file(0));
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: Vec<&str> = text.lines().take(5).collect();
        std::fs::write(&path, cut.join("\n")).unwrap();
        assert!(matches!(read_database(dir.path()), Err(Error::Data(_))));
    }
}
