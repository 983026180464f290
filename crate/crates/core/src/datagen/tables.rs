//! Tabulated soil, wall and strut inputs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constitutive {
    HardeningSoil,
    MohrCoulomb,
}

/// Mean and standard deviation of a normally distributed input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normal {
    pub mean: f64,
    pub sd: f64,
}

const fn n(mean: f64, sd: f64) -> Normal {
    Normal { mean, sd }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoilLayerSpec {
    /// 1-based, counted from the surface.
    pub index: u8,
    pub model: Constitutive,
    /// Metres.
    pub thickness: f64,
    /// Total unit weight, kN/m³.
    pub unit_weight: Normal,
    /// Effective cohesion, kPa.
    pub cohesion: Normal,
    /// Effective friction angle, degrees.
    pub friction_angle: Normal,
    /// Reference secant stiffness (E50 for Hardening Soil, E' for the
    /// Mohr-Coulomb bedrock), kPa.
    pub stiffness: Normal,
    pub void_ratio: f64,
}

/// Four Hardening Soil layers over Mohr-Coulomb bedrock, 2/4/9/9/16 m thick.
///
/// The bedrock stiffness mean of 1,000 kPa is kept as tabulated even though it
/// is implausibly soft for rock.
pub fn default_soil_profile() -> Vec<SoilLayerSpec> {
    use Constitutive::*;
    let layer = |index, model, thickness, g, c, phi, e, void_ratio| SoilLayerSpec {
        index,
        model,
        thickness,
        unit_weight: g,
        cohesion: c,
        friction_angle: phi,
        stiffness: e,
        void_ratio,
    };
    vec![
        layer(1, HardeningSoil, 2.0, n(18.0, 2.0), n(1.8, 0.5), n(28.0, 2.5), n(15_000.0, 3_000.0), 0.6),
        layer(2, HardeningSoil, 4.0, n(19.0, 2.0), n(5.0, 1.5), n(28.0, 3.0), n(30_000.0, 6_000.0), 0.5),
        layer(3, HardeningSoil, 9.0, n(20.0, 2.0), n(20.0, 5.0), n(32.0, 3.0), n(40_000.0, 8_000.0), 0.4),
        layer(4, HardeningSoil, 9.0, n(21.0, 2.0), n(50.0, 10.0), n(32.0, 3.0), n(60_000.0, 15_000.0), 0.4),
        layer(5, MohrCoulomb, 16.0, n(23.0, 2.0), n(80.0, 20.0), n(35.0, 3.0), n(1_000.0, 200.0), 0.01),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    pub tag: char,
    /// Flexural stiffness, MN·m²/m.
    pub flexural_stiffness: f64,
    /// Metres.
    pub thickness: f64,
}

pub const WALL_TYPES: [WallSpec; 6] = [
    WallSpec { tag: 'A', flexural_stiffness: 100.0, thickness: 0.35 },
    WallSpec { tag: 'B', flexural_stiffness: 200.0, thickness: 0.49 },
    WallSpec { tag: 'C', flexural_stiffness: 400.0, thickness: 0.70 },
    WallSpec { tag: 'D', flexural_stiffness: 600.0, thickness: 0.85 },
    WallSpec { tag: 'E', flexural_stiffness: 800.0, thickness: 0.98 },
    WallSpec { tag: 'F', flexural_stiffness: 1200.0, thickness: 1.20 },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrutSpec {
    pub tag: char,
    /// Cross-sectional area, mm².
    pub area: f64,
    /// Axial stiffness EA, MN.
    pub axial_stiffness: f64,
    /// Elastic modulus, MPa.
    pub modulus: f64,
}

const STEEL: f64 = 200_500.0;

pub const STRUT_TYPES: [StrutSpec; 6] = [
    StrutSpec { tag: 'A', area: 3_270.0, axial_stiffness: 670.0, modulus: STEEL },
    StrutSpec { tag: 'B', area: 4_680.0, axial_stiffness: 959.0, modulus: STEEL },
    StrutSpec { tag: 'C', area: 5_620.0, axial_stiffness: 1_152.0, modulus: STEEL },
    StrutSpec { tag: 'D', area: 7_240.0, axial_stiffness: 1_484.0, modulus: STEEL },
    StrutSpec { tag: 'E', area: 8_820.0, axial_stiffness: 1_808.0, modulus: STEEL },
    StrutSpec { tag: 'F', area: 10_700.0, axial_stiffness: 2_194.0, modulus: STEEL },
];
