use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depth removed per excavation phase, metres.
pub const PHASE_DEPTH_STEP: f64 = 0.5;
/// Spacing of wall monitoring points, metres.
pub const MONITOR_SPACING: f64 = 0.5;
const FIRST_STRUT_DEPTH: f64 = 1.0;
const STRUT_SPACING: f64 = 3.0;

/// The two synthetic excavation geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExcavationCase {
    /// 14 m dig, 18 m wall, free toe.
    A,
    /// 20 m dig, 26 m wall, toe socketed in bedrock.
    B,
}

impl ExcavationCase {
    pub const ALL: [ExcavationCase; 2] = [ExcavationCase::A, ExcavationCase::B];

    pub fn final_depth(self) -> f64 {
        match self {
            ExcavationCase::A => 14.0,
            ExcavationCase::B => 20.0,
        }
    }

    pub fn wall_length(self) -> f64 {
        match self {
            ExcavationCase::A => 18.0,
            ExcavationCase::B => 26.0,
        }
    }

    /// Phase count including the wall-installation phase at zero depth.
    pub fn phases(self) -> usize {
        (self.final_depth() / PHASE_DEPTH_STEP).round() as usize + 1
    }

    pub fn monitoring_points(self) -> usize {
        (self.wall_length() / MONITOR_SPACING).round() as usize + 1
    }

    pub fn tip_constrained(self) -> bool {
        matches!(self, ExcavationCase::B)
    }

    /// Monitoring depths from the wall head down, metres.
    pub fn monitoring_depths(self) -> Vec<f64> {
        (0..self.monitoring_points()).map(|j| j as f64 * MONITOR_SPACING).collect()
    }
}

impl fmt::Display for ExcavationCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExcavationCase::A => "A",
            ExcavationCase::B => "B",
        })
    }
}

impl FromStr for ExcavationCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ExcavationCase::A),
            "B" | "b" => Ok(ExcavationCase::B),
            other => Err(Error::invalid(format!("unknown excavation case '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Installation {
    Wall,
    /// `ordinal` is 1-based; `depth` in metres below the surface.
    Strut { ordinal: usize, depth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// 1-based phase number.
    pub number: usize,
    /// Excavation depth reached in this phase, metres.
    pub depth: f64,
    pub install: Option<Installation>,
}

/// Every phase of `case` in order. Struts go in 0.5 m above the current
/// excavation level, the first at 1.0 m and then every 3.0 m.
pub fn build_schedule(case: ExcavationCase) -> Vec<Phase> {
    (0..case.phases())
        .map(|i| {
            let depth = i as f64 * PHASE_DEPTH_STEP;
            let install = if i == 0 {
                Some(Installation::Wall)
            } else {
                let strut_depth = depth - PHASE_DEPTH_STEP;
                let k = (strut_depth - FIRST_STRUT_DEPTH) / STRUT_SPACING;
                (k >= 0.0 && (k - k.round()).abs() < 1e-9).then(|| Installation::Strut {
                    ordinal: k.round() as usize + 1,
                    depth: strut_depth,
                })
            };
            Phase { number: i + 1, depth, install }
        })
        .collect()
}

/// Struts in place at each phase (installed in or before it).
pub fn struts_installed(schedule: &[Phase]) -> Vec<usize> {
    let mut n = 0;
    schedule
        .iter()
        .map(|p| {
            if matches!(p.install, Some(Installation::Strut { .. })) {
                n += 1;
            }
            n
        })
        .collect()
}
