//! Run configuration and its TOML representation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{eta_for_density, MechanicalParams, ParameterVector};

/// Nutrient supply and initial intracellular state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupplyConfig {
    /// Clamped intracellular glucose level.
    pub glucose: f64,
    /// Clamped intracellular oxygen level.
    pub oxygen: f64,
    /// Total NAD pool (NAD+ + NADH) of a fresh cell.
    pub nad_total: f64,
    /// Initial ATP; `None` starts midway between the two ATP thresholds.
    pub initial_atp: Option<f64>,
}

impl Default for SupplyConfig {
    fn default() -> Self {
        Self {
            glucose: 1530.0,
            oxygen: 1e11,
            nad_total: 1e4,
            initial_atp: None,
        }
    }
}

/// Mechanical constants other than the viscosity, which follows the
/// collagen density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechanicsConfig {
    pub c_cca: f64,
    pub c_ccr: f64,
    pub radius: f64,
    pub adhesion_radius: f64,
    pub locomotion_unit: f64,
    /// Minutes a sampled locomotive force is held before it is redrawn.
    pub locomotion_persistence: f64,
    /// Overrides the density-derived viscosity when set.
    pub eta: Option<f64>,
}

impl Default for MechanicsConfig {
    fn default() -> Self {
        let m = MechanicalParams::default();
        Self {
            c_cca: m.c_cca,
            c_ccr: m.c_ccr,
            radius: m.radius,
            adhesion_radius: m.adhesion_radius,
            locomotion_unit: m.locomotion_unit,
            locomotion_persistence: 10.0,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Simulated time (min).
    pub duration: f64,
    pub mechanics_dt: f64,
    pub metabolic_substep: f64,
    pub phenotype_dt: f64,
    /// Interval between cell snapshots (min).
    pub snapshot_interval: f64,
    /// Half side of the cubic domain centred on the origin (µm).
    pub domain_half_extent: f64,
    /// Collagen concentration label (mg/ml): 2.5, 4 or 6.
    pub collagen_density: f64,
    pub initial_cells: usize,
    /// Initial cells are placed uniformly in a ball of this radius (µm); a
    /// single cell at radius 0 sits at the origin.
    pub placement_radius: f64,
    pub seed: u64,
    /// Multiplier on the locomotive force, in [0, 1].
    pub locomotion_scale: f64,
    pub population_cap: usize,
    pub mechanics: MechanicsConfig,
    pub supply: SupplyConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 7.0 * 1440.0,
            mechanics_dt: 0.1,
            metabolic_substep: 0.01,
            phenotype_dt: 6.0,
            snapshot_interval: 1440.0,
            domain_half_extent: 1000.0,
            collagen_density: 4.0,
            initial_cells: 1,
            placement_radius: 0.0,
            seed: 1,
            locomotion_scale: 1.0,
            population_cap: 20_000,
            mechanics: MechanicsConfig::default(),
            supply: SupplyConfig::default(),
        }
    }
}

impl SimConfig {
    /// Coarser steps for parameter sweeps; the metabolic substep stays well
    /// inside the RK4 stability region for the whole prior box.
    pub fn desk_scale() -> Self {
        Self {
            mechanics_dt: 2.0,
            metabolic_substep: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::Config(format!(
                "duration must be non-negative, got {}",
                self.duration
            )));
        }
        positive("mechanics_dt", self.mechanics_dt)?;
        positive("metabolic_substep", self.metabolic_substep)?;
        positive("phenotype_dt", self.phenotype_dt)?;
        positive("snapshot_interval", self.snapshot_interval)?;
        positive("domain_half_extent", self.domain_half_extent)?;
        positive(
            "mechanics.locomotion_persistence",
            self.mechanics.locomotion_persistence,
        )?;
        if !(self.metabolic_substep <= self.mechanics_dt && self.mechanics_dt <= self.phenotype_dt)
        {
            return Err(Error::Config(format!(
                "timesteps must satisfy metabolic_substep <= mechanics_dt <= phenotype_dt, got {} / {} / {}",
                self.metabolic_substep, self.mechanics_dt, self.phenotype_dt
            )));
        }
        if !(0.0..=1.0).contains(&self.locomotion_scale) {
            return Err(Error::Config(format!(
                "locomotion_scale must lie in [0, 1], got {}",
                self.locomotion_scale
            )));
        }
        if !(self.placement_radius.is_finite() && self.placement_radius >= 0.0) {
            return Err(Error::Config(
                "placement_radius must be non-negative".into(),
            ));
        }
        if self.placement_radius >= self.domain_half_extent {
            return Err(Error::Config(
                "placement_radius must be smaller than the domain".into(),
            ));
        }
        if self.population_cap == 0 {
            return Err(Error::Config("population_cap must be at least 1".into()));
        }
        let s = &self.supply;
        for (name, v) in [
            ("supply.glucose", s.glucose),
            ("supply.oxygen", s.oxygen),
            ("supply.nad_total", s.nad_total),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if let Some(a) = s.initial_atp {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::Config(format!(
                    "supply.initial_atp must be non-negative, got {a}"
                )));
            }
        }
        self.mechanical_params()?.validate()
    }

    pub fn eta(&self) -> Result<f64> {
        match self.mechanics.eta {
            Some(eta) => Ok(eta),
            None => eta_for_density(self.collagen_density),
        }
    }

    pub fn mechanical_params(&self) -> Result<MechanicalParams> {
        let m = &self.mechanics;
        Ok(MechanicalParams {
            c_cca: m.c_cca,
            c_ccr: m.c_ccr,
            radius: m.radius,
            adhesion_radius: m.adhesion_radius,
            eta: self.eta()?,
            locomotion_unit: m.locomotion_unit,
        })
    }

    /// Number of mechanics steps covering `duration`.
    pub fn n_steps(&self) -> u64 {
        (self.duration / self.mechanics_dt).round() as u64
    }

    /// Mechanics steps per phenotype update.
    pub fn phenotype_stride(&self) -> u64 {
        ((self.phenotype_dt / self.mechanics_dt).round() as u64).max(1)
    }
}

/// Contents of a configuration file: run settings plus an optional parameter
/// set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub parameters: Option<ParameterVector>,
}

impl ConfigFile {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let parsed: ConfigFile = toml::from_str(text).map_err(|e| Error::Schema {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        parsed.simulation.validate()?;
        if let Some(p) = &parsed.parameters {
            p.validate()?;
        }
        Ok(parsed)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }
}

/// Reads a parameter set from a TOML file holding `[metabolic]` and
/// `[phenotype]` tables (or a full config with a `[parameters]` table).
pub fn load_parameters(path: &Path) -> Result<ParameterVector> {
    let text = read_text(path)?;
    let origin = path.display().to_string();
    let schema = |e: toml::de::Error| Error::Schema {
        path: origin.clone(),
        message: e.to_string(),
    };
    let value: toml::Table = toml::from_str(&text).map_err(schema)?;
    let params: ParameterVector = if value.contains_key("parameters") {
        let file: ConfigFile = toml::from_str(&text).map_err(schema)?;
        file.parameters.expect("checked above")
    } else {
        toml::from_str(&text).map_err(schema)?
    };
    params.validate()?;
    Ok(params)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SpheroidGroup;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        SimConfig::desk_scale().validate().unwrap();
    }

    #[test]
    fn timestep_ordering_enforced() {
        let cfg = SimConfig {
            metabolic_substep: 0.5,
            mechanics_dt: 0.1,
            ..SimConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn locomotion_scale_range() {
        let cfg = SimConfig {
            locomotion_scale: 1.5,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_density_rejected() {
        let cfg = SimConfig {
            collagen_density: 3.0,
            ..SimConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        let file = ConfigFile {
            simulation: SimConfig {
                seed: 99,
                collagen_density: 6.0,
                supply: SupplyConfig {
                    initial_atp: Some(812.5),
                    ..SupplyConfig::default()
                },
                ..SimConfig::default()
            },
            parameters: Some(SpheroidGroup::Small.parameters()),
        };
        let text = file.to_toml_string();
        let back = ConfigFile::from_toml_str(&text, "mem").unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let f = ConfigFile::from_toml_str("[simulation]\nseed = 5\n", "mem").unwrap();
        assert_eq!(f.simulation.seed, 5);
        assert_eq!(f.simulation.mechanics_dt, 0.1);
        assert!(f.parameters.is_none());
    }

    #[test]
    fn unknown_field_is_schema_error() {
        let err = ConfigFile::from_toml_str("[simulation]\nbogus = 1\n", "cfg.toml").unwrap_err();
        match err {
            Error::Schema { path, message } => {
                assert_eq!(path, "cfg.toml");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
