use serde::{Deserialize, Serialize};

use super::tables::{SoilLayerSpec, StrutSpec, WallSpec, STRUT_TYPES, WALL_TYPES};
use crate::rng::RngStream;

const MIN_UNIT_WEIGHT: f64 = 12.0;
const MIN_COHESION: f64 = 0.1;
const FRICTION_RANGE: (f64, f64) = (15.0, 50.0);
const MIN_STIFFNESS_FRACTION: f64 = 0.2;
const UNLOADING_RATIO: f64 = 3.0;

/// One realised soil layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoilLayerDraw {
    pub thickness: f64,
    pub unit_weight: f64,
    pub cohesion: f64,
    pub friction_angle: f64,
    pub e50_ref: f64,
    pub eoed_ref: f64,
    pub eur_ref: f64,
    pub void_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraw {
    pub soil: Vec<SoilLayerDraw>,
    pub wall: WallSpec,
    pub strut: StrutSpec,
}

impl ParameterDraw {
    /// Every soil value at its tabulated mean, with the given structure.
    pub fn at_means(specs: &[SoilLayerSpec], wall: WallSpec, strut: StrutSpec) -> Self {
        let soil = specs
            .iter()
            .map(|s| {
                layer_from(
                    s,
                    s.unit_weight.mean,
                    s.cohesion.mean,
                    s.friction_angle.mean,
                    s.stiffness.mean,
                )
            })
            .collect();
        Self { soil, wall, strut }
    }

    /// Thickness-weighted mean of `value` over the top `depth` metres. Layers
    /// below the profile bottom extend the last layer.
    pub fn depth_average(&self, depth: f64, value: impl Fn(&SoilLayerDraw) -> f64) -> f64 {
        if depth <= 0.0 || self.soil.is_empty() {
            return self.soil.first().map(&value).unwrap_or(0.0);
        }
        let mut top = 0.0;
        let mut acc = 0.0;
        for (i, layer) in self.soil.iter().enumerate() {
            let last = i + 1 == self.soil.len();
            let bottom = if last { f64::INFINITY } else { top + layer.thickness };
            let overlap = bottom.min(depth) - top;
            if overlap > 0.0 {
                acc += overlap * value(layer);
            }
            top = bottom;
            if top >= depth {
                break;
            }
        }
        acc / depth
    }
}

fn layer_from(spec: &SoilLayerSpec, g: f64, c: f64, phi: f64, e: f64) -> SoilLayerDraw {
    let e50 = e.max(MIN_STIFFNESS_FRACTION * spec.stiffness.mean);
    SoilLayerDraw {
        thickness: spec.thickness,
        unit_weight: g.max(MIN_UNIT_WEIGHT),
        cohesion: c.max(MIN_COHESION),
        friction_angle: phi.clamp(FRICTION_RANGE.0, FRICTION_RANGE.1),
        e50_ref: e50,
        eoed_ref: e50,
        eur_ref: UNLOADING_RATIO * e50,
        void_ratio: spec.void_ratio,
    }
}

/// Normal draws clipped to physical floors, then a uniformly chosen wall and
/// strut type. Always consumes the same number of draws.
pub fn sample_parameters(specs: &[SoilLayerSpec], rng: &mut RngStream) -> ParameterDraw {
    let soil = specs
        .iter()
        .map(|s| {
            let g = rng.gaussian(s.unit_weight.mean, s.unit_weight.sd);
            let c = rng.gaussian(s.cohesion.mean, s.cohesion.sd);
            let phi = rng.gaussian(s.friction_angle.mean, s.friction_angle.sd);
            let e = rng.gaussian(s.stiffness.mean, s.stiffness.sd);
            layer_from(s, g, c, phi, e)
        })
        .collect();
    let wall = WALL_TYPES[rng.index(WALL_TYPES.len())];
    let strut = STRUT_TYPES[rng.index(STRUT_TYPES.len())];
    ParameterDraw { soil, wall, strut }
}
