//! Model parameters, calibrated presets and prior supports.
//!
//! Units: µm, min, Pa·s; metabolite and ATP amounts are in abstract model
//! units so that the ATP thresholds compare directly against the ATP state.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of parameters in the exploration space.
pub const N_PARAMS: usize = 7;

/// Fixed parameter ordering shared by every sampling and sensitivity routine.
pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "k_glu",
    "k_aer",
    "k_ana",
    "k_ene",
    "k_prolif",
    "atp_prolif",
    "atp_death",
];

/// Indices (into [`PARAM_NAMES`]) of the parameters that are calibrated.
pub const CALIBRATED: [usize; 4] = [0, 3, 4, 5];

pub const IDX_K_GLU: usize = 0;
pub const IDX_K_AER: usize = 1;
pub const IDX_K_ANA: usize = 2;
pub const IDX_K_ENE: usize = 3;
pub const IDX_K_PROLIF: usize = 4;
pub const IDX_ATP_PROLIF: usize = 5;
pub const IDX_ATP_DEATH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanicalParams {
    /// Adhesion coefficient.
    pub c_cca: f64,
    /// Repulsion coefficient.
    pub c_ccr: f64,
    /// Cell radius (µm).
    pub radius: f64,
    /// Adhesion interaction range (µm).
    pub adhesion_radius: f64,
    /// Dynamic viscosity of the matrix (Pa·s).
    pub eta: f64,
    /// Model force units per unit of the locomotion polynomial.
    #[serde(default = "MechanicalParams::default_locomotion_unit")]
    pub locomotion_unit: f64,
}

impl MechanicalParams {
    pub const C_CCA: f64 = 7.2;
    pub const C_CCR: f64 = 380.0;
    pub const RADIUS: f64 = 6.0;
    /// Adhesion reaches a quarter radius beyond contact (`2R + R/4`).
    pub const ADHESION_REACH: f64 = 0.25;
    pub const DEFAULT_LOCOMOTION_UNIT: f64 = 60.0;

    fn default_locomotion_unit() -> f64 {
        Self::DEFAULT_LOCOMOTION_UNIT
    }

    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    /// Largest distance at which two cells interact.
    pub fn interaction_range(&self) -> f64 {
        self.adhesion_radius.max(2.0 * self.radius)
    }

    /// Stokes drag coefficient 6πRη.
    pub fn drag_coefficient(&self) -> f64 {
        6.0 * std::f64::consts::PI * self.radius * self.eta
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_cca", self.c_cca),
            ("c_ccr", self.c_ccr),
            ("radius", self.radius),
            ("adhesion_radius", self.adhesion_radius),
            ("eta", self.eta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.locomotion_unit.is_finite() && self.locomotion_unit >= 0.0) {
            return Err(Error::Config("locomotion_unit must be non-negative".into()));
        }
        if self.adhesion_radius <= self.radius {
            return Err(Error::Config(format!(
                "adhesion_radius ({}) must exceed radius ({})",
                self.adhesion_radius, self.radius
            )));
        }
        Ok(())
    }
}

impl Default for MechanicalParams {
    fn default() -> Self {
        Self {
            c_cca: Self::C_CCA,
            c_ccr: Self::C_CCR,
            radius: Self::RADIUS,
            adhesion_radius: 2.0 * Self::RADIUS + Self::ADHESION_REACH * Self::RADIUS,
            eta: CollagenDensity::Medium.eta(),
            locomotion_unit: Self::DEFAULT_LOCOMOTION_UNIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetabolicParams {
    /// Glycolysis rate.
    pub k_glu: f64,
    /// Lumped aerobic (pyruvate oxidation, Krebs, OXPHOS) rate.
    pub k_aer: f64,
    /// Lactic fermentation rate.
    pub k_ana: f64,
    /// ATP consumption rate.
    pub k_ene: f64,
}

impl MetabolicParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_glu", self.k_glu),
            ("k_aer", self.k_aer),
            ("k_ana", self.k_ana),
            ("k_ene", self.k_ene),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhenotypeParams {
    /// Proliferation rate (1/min).
    pub k_prolif: f64,
    /// ATP level at or above which a cell proliferates and migrates.
    pub atp_prolif: f64,
    /// ATP level strictly below which a cell dies.
    pub atp_death: f64,
}

impl PhenotypeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_prolif.is_finite() && self.k_prolif >= 0.0) {
            return Err(Error::Config(format!(
                "k_prolif must be non-negative, got {}",
                self.k_prolif
            )));
        }
        if !(self.atp_death.is_finite() && self.atp_prolif.is_finite()) {
            return Err(Error::Config("ATP thresholds must be finite".into()));
        }
        if self.atp_death >= self.atp_prolif {
            return Err(Error::Config(format!(
                "atp_death ({}) must be below atp_prolif ({})",
                self.atp_death, self.atp_prolif
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterVector {
    pub metabolic: MetabolicParams,
    pub phenotype: PhenotypeParams,
}

impl ParameterVector {
    pub fn validate(&self) -> Result<()> {
        self.metabolic.validate()?;
        self.phenotype.validate()
    }

    /// Values in [`PARAM_NAMES`] order.
    pub fn to_array(&self) -> [f64; N_PARAMS] {
        let m = &self.metabolic;
        let p = &self.phenotype;
        [
            m.k_glu,
            m.k_aer,
            m.k_ana,
            m.k_ene,
            p.k_prolif,
            p.atp_prolif,
            p.atp_death,
        ]
    }

    pub fn from_array(v: &[f64; N_PARAMS]) -> Self {
        Self {
            metabolic: MetabolicParams {
                k_glu: v[IDX_K_GLU],
                k_aer: v[IDX_K_AER],
                k_ana: v[IDX_K_ANA],
                k_ene: v[IDX_K_ENE],
            },
            phenotype: PhenotypeParams {
                k_prolif: v[IDX_K_PROLIF],
                atp_prolif: v[IDX_ATP_PROLIF],
                atp_death: v[IDX_ATP_DEATH],
            },
        }
    }

    /// Copy with the calibrated coordinates replaced (order of [`CALIBRATED`]).
    pub fn with_calibrated(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), CALIBRATED.len());
        let mut all = self.to_array();
        for (&idx, &v) in CALIBRATED.iter().zip(theta) {
            all[idx] = v;
        }
        Self::from_array(&all)
    }

    pub fn calibrated(&self) -> [f64; 4] {
        let all = self.to_array();
        CALIBRATED.map(|i| all[i])
    }
}

impl Default for ParameterVector {
    fn default() -> Self {
        SpheroidGroup::Large.parameters()
    }
}

/// Spheroid size classes used for per-group calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpheroidGroup {
    Small,
    Medium,
    Large,
}

impl SpheroidGroup {
    pub const ALL: [SpheroidGroup; 3] = [
        SpheroidGroup::Small,
        SpheroidGroup::Medium,
        SpheroidGroup::Large,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SpheroidGroup::Small => "small",
            SpheroidGroup::Medium => "medium",
            SpheroidGroup::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(SpheroidGroup::Small),
            "medium" => Ok(SpheroidGroup::Medium),
            "large" => Ok(SpheroidGroup::Large),
            other => Err(Error::InvalidInput(format!(
                "unknown spheroid group '{other}'"
            ))),
        }
    }

    /// Joint-MAP parameter sets used for the computational predictions.
    pub fn parameters(self) -> ParameterVector {
        let (k_glu, k_ene, k_prolif, atp_prolif) = match self {
            SpheroidGroup::Large => (0.66e-11, 0.033, 0.00061, 1040.0),
            SpheroidGroup::Medium => (0.66e-11, 0.065, 0.00057, 1025.0),
            SpheroidGroup::Small => (0.54e-11, 0.084, 0.0005, 1050.0),
        };
        ParameterVector {
            metabolic: MetabolicParams {
                k_glu,
                k_aer: FIXED_K_AER,
                k_ana: FIXED_K_ANA,
                k_ene,
            },
            phenotype: PhenotypeParams {
                k_prolif,
                atp_prolif,
                atp_death: FIXED_ATP_DEATH,
            },
        }
    }
}

impl fmt::Display for SpheroidGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub const FIXED_K_AER: f64 = 5e-12;
pub const FIXED_K_ANA: f64 = 5e-12;
pub const FIXED_ATP_DEATH: f64 = 500.0;

/// Collagen concentration of the surrounding gel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CollagenDensity {
    /// 2.5 mg/ml
    Low,
    /// 4 mg/ml
    Medium,
    /// 6 mg/ml
    High,
}

impl CollagenDensity {
    pub const ALL: [CollagenDensity; 3] = [
        CollagenDensity::Low,
        CollagenDensity::Medium,
        CollagenDensity::High,
    ];

    pub fn mg_per_ml(self) -> f64 {
        match self {
            CollagenDensity::Low => 2.5,
            CollagenDensity::Medium => 4.0,
            CollagenDensity::High => 6.0,
        }
    }

    pub fn eta(self) -> f64 {
        match self {
            CollagenDensity::Low => 7.96,
            CollagenDensity::Medium => 18.42,
            CollagenDensity::High => 39.15,
        }
    }

    pub fn from_label(mg_per_ml: f64) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| (d.mg_per_ml() - mg_per_ml).abs() < 1e-9)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown collagen density {mg_per_ml} mg/ml (expected 2.5, 4 or 6)"
                ))
            })
    }
}

/// Viscosity (Pa·s) of the gel at a collagen density label (mg/ml).
pub fn eta_for_density(mg_per_ml: f64) -> Result<f64> {
    CollagenDensity::from_label(mg_per_ml).map(CollagenDensity::eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Uniform { low: f64, high: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterBound {
    pub name: &'static str,
    pub support: Support,
}

impl ParameterBound {
    /// `(low, high)` of a uniform prior, `None` for fixed entries.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self.support {
            Support::Uniform { low, high } => Some((low, high)),
            Support::Fixed(_) => None,
        }
    }
}

/// Calibration priors in [`PARAM_NAMES`] order: uniform supports for the four
/// calibrated parameters, fixed values for the rest.
pub fn parameter_bounds() -> Vec<ParameterBound> {
    let uniform = |low, high| Support::Uniform { low, high };
    vec![
        ParameterBound {
            name: "k_glu",
            support: uniform(5e-16, 1e-11),
        },
        ParameterBound {
            name: "k_aer",
            support: Support::Fixed(FIXED_K_AER),
        },
        ParameterBound {
            name: "k_ana",
            support: Support::Fixed(FIXED_K_ANA),
        },
        ParameterBound {
            name: "k_ene",
            support: uniform(3e-5, 0.1),
        },
        ParameterBound {
            name: "k_prolif",
            support: uniform(3.5e-4, 9e-4),
        },
        ParameterBound {
            name: "atp_prolif",
            support: uniform(700.0, 1200.0),
        },
        ParameterBound {
            name: "atp_death",
            support: Support::Fixed(FIXED_ATP_DEATH),
        },
    ]
}

/// Look up one entry of [`parameter_bounds`] by name.
pub fn parameter_bound(name: &str) -> Option<ParameterBound> {
    parameter_bounds().into_iter().find(|b| b.name == name)
}

/// Box bounds of the full seven-parameter exploration space used for sweeps
/// and sensitivity analysis. The three fixed parameters are explored on ranges
/// whose midpoints are their fixed values.
pub fn exploration_bounds() -> [(f64, f64); N_PARAMS] {
    [
        (5e-16, 1e-11),
        (0.0, 1e-11),
        (0.0, 1e-11),
        (3e-5, 0.1),
        (3.5e-4, 9e-4),
        (700.0, 1200.0),
        (300.0, 700.0),
    ]
}

/// Prior box of the calibrated parameters, in [`CALIBRATED`] order.
pub fn calibration_bounds() -> Vec<(f64, f64)> {
    let all = parameter_bounds();
    CALIBRATED
        .iter()
        .map(|&i| all[i].range().expect("calibrated parameters have ranges"))
        .collect()
}
