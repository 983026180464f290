use rayon::prelude::*;

use super::sampling::{sample_parameters, ParameterDraw};
use super::schedule::ExcavationCase;
use super::surrogate::{simulate_profile, SurrogateConfig};
use super::tables::default_soil_profile;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::rng::{purpose, RngStream};

/// Rejected draws (displacement at the limit) are retried on a fresh
/// substream this many times before giving up.
const MAX_ATTEMPTS: u64 = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    /// Position in the database; case A records come first.
    pub id: usize,
    pub case: ExcavationCase,
    pub draw: ParameterDraw,
    pub seed: u64,
    /// Substream attempt that produced an in-range profile.
    pub attempt: u64,
    /// `[phases, monitoring points]`, metres.
    pub displacement: Tensor,
}

impl SimulationRecord {
    pub fn phases(&self) -> usize {
        self.displacement.shape()[0]
    }

    pub fn points(&self) -> usize {
        self.displacement.shape()[1]
    }

    pub fn row(&self, phase: usize) -> &[f64] {
        let n = self.points();
        &self.displacement.data()[phase * n..(phase + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    pub seed: u64,
    pub n_per_case: usize,
    pub surrogate: SurrogateConfig,
    pub records: Vec<SimulationRecord>,
}

/// The stream a record draws from: independent per record and attempt, so
/// generation order and thread count never matter.
pub fn record_stream(seed: u64, id: usize, attempt: u64) -> RngStream {
    RngStream::new(seed, purpose::DATAGEN).substream(id as u64).substream(attempt)
}

pub fn generate_record(
    id: usize,
    case: ExcavationCase,
    seed: u64,
    cfg: &SurrogateConfig,
) -> Result<SimulationRecord> {
    let specs = default_soil_profile();
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = record_stream(seed, id, attempt);
        let draw = sample_parameters(&specs, &mut rng);
        match simulate_profile(case, &draw, cfg, &mut rng) {
            Ok(displacement) => {
                return Ok(SimulationRecord { id, case, draw, seed, attempt, displacement })
            }
            Err(e @ Error::Numerical(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Numerical(format!("record {id}: no attempts"))))
}

/// `n_per_case` records of case A followed by as many of case B.
pub fn generate_database(n_per_case: usize, seed: u64, cfg: &SurrogateConfig) -> Result<Database> {
    if n_per_case < 1 {
        return Err(Error::invalid("n_per_case must be at least 1"));
    }
    cfg.validate()?;
    let records = (0..2 * n_per_case)
        .into_par_iter()
        .map(|id| {
            let case = if id < n_per_case { ExcavationCase::A } else { ExcavationCase::B };
            generate_record(id, case, seed, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Database { seed, n_per_case, surrogate: cfg.clone(), records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peak(rows: &[f64]) -> f64 {
        rows.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    #[test]
    fn counts_and_cases() {
        let db = generate_database(1, 7, &SurrogateConfig::default()).unwrap();
        assert_eq!(db.records.len(), 2);
        assert_eq!(db.records[0].phases(), 29);
        assert_eq!(db.records[1].phases(), 41);
        assert!(generate_database(0, 7, &SurrogateConfig::default()).is_err());
    }

    #[test]
    fn reproducible() {
        let a = generate_database(3, 21, &SurrogateConfig::default()).unwrap();
        let b = generate_database(3, 21, &SurrogateConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_database(3, 22, &SurrogateConfig::default()).unwrap();
        assert_ne!(a.records[0].displacement, c.records[0].displacement);
    }

    #[test]
    fn population_trends() {
        let n = 40;
        let db = generate_database(n, 3, &SurrogateConfig::default()).unwrap();
        for case in ExcavationCase::ALL {
            let recs: Vec<_> = db.records.iter().filter(|r| r.case == case).collect();
            let mean_peak: Vec<f64> = (0..case.phases())
                .map(|p| recs.iter().map(|r| peak(r.row(p))).sum::<f64>() / n as f64)
                .collect();
            assert!(mean_peak.windows(2).all(|w| w[1] >= w[0]));
            for r in &recs {
                assert!(r.row(0).iter().all(|&v| v == 0.0));
                assert!(r.displacement.data().iter().all(|v| v.abs() < 1.0));
            }
        }
        let final_mean = |case: ExcavationCase| {
            let recs: Vec<_> = db.records.iter().filter(|r| r.case == case).collect();
            recs.iter().map(|r| peak(r.row(r.phases() - 1))).sum::<f64>() / n as f64
        };
        assert!(final_mean(ExcavationCase::B) > final_mean(ExcavationCase::A));
    }
}
