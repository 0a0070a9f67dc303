//! Experiment configuration (TOML).
//!
//! Every field has a default, so an empty file describes the reference
//! scenario: a 30×10 mm aluminium cantilever, 75×25 cells, 1 kN at mid-depth
//! of the free end, porous reference RVE (φ = 0.3 mm, vf = 0.15) and 5 %
//! measurement noise.

use std::path::PathBuf;

use microscale_core::homogenizer::Ingredients;
use microscale_core::inverse::{Alpha, Beta, StageSettings};
use microscale_core::macro_solver::{CantileverSetup, LoadPolicy};
use microscale_core::rve::RveSpec;
use microscale_core::voigt::lame_from_engineering;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadLocation {
    MidDepth,
    TopCorner,
    BottomCorner,
}

impl From<LoadLocation> for LoadPolicy {
    fn from(l: LoadLocation) -> Self {
        match l {
            LoadLocation::MidDepth => LoadPolicy::MidDepth,
            LoadLocation::TopCorner => LoadPolicy::TopCorner,
            LoadLocation::BottomCorner => LoadPolicy::BottomCorner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Beam {
    /// mm.
    pub length: f64,
    /// mm.
    pub depth: f64,
    pub nx: usize,
    pub ny: usize,
    /// Tip force, kN per unit thickness, pointing down.
    pub load: f64,
    pub load_location: LoadLocation,
}

impl Default for Beam {
    fn default() -> Self {
        Beam {
            length: 30.0,
            depth: 10.0,
            nx: 75,
            ny: 25,
            load: 1.0,
            load_location: LoadLocation::MidDepth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Material {
    /// Young's modulus of the matrix, GPa.
    pub young: f64,
    pub poisson: f64,
    /// Pore stiffness as a fraction of the matrix.
    pub pore_ratio: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material {
            young: 70.0,
            poisson: 0.3,
            pore_ratio: microscale_core::homogenizer::PORE_STIFFNESS_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Microstructure {
    /// Pore diameter, mm.
    pub phi: f64,
    pub vf: f64,
    /// RVE edge in pore diameters.
    pub size_factor: f64,
    pub raster_n: usize,
    pub seed: u64,
}

impl Default for Microstructure {
    fn default() -> Self {
        Microstructure {
            phi: 0.3,
            vf: 0.15,
            size_factor: 10.0,
            raster_n: 200,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    /// Relative amplitude (0.05 is 5 %).
    pub level: f64,
    pub seed: u64,
}

impl Default for Noise {
    fn default() -> Self {
        Noise { level: 0.05, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1 {
    /// `[λ GPa, μ GPa, l mm]`.
    pub guess: [f64; 3],
    pub max_iter: usize,
    pub tol_f: f64,
    pub tol_g: f64,
}

impl Default for Stage1 {
    fn default() -> Self {
        Stage1 {
            guess: [40.38, 26.92, 3.0],
            max_iter: 100,
            tol_f: 1e-10,
            tol_g: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2 {
    /// `[φ mm, vf]`.
    pub guess: [f64; 2],
    /// Packing seed of the trial RVEs; differs from the reference on purpose.
    pub seed: u64,
    pub max_iter: usize,
    pub tol_f: f64,
    pub tol_g: f64,
}

impl Default for Stage2 {
    fn default() -> Self {
        Stage2 {
            guess: [0.1, 0.05],
            seed: 2,
            max_iter: 50,
            tol_f: 1e-10,
            tol_g: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub beam: Beam,
    pub material: Material,
    pub reference: Microstructure,
    pub noise: Noise,
    pub stage1: Stage1,
    pub stage2: Stage2,
    pub output: Output,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Config(what.to_string()));
        let b = &self.beam;
        if !(b.length > 0.0 && b.depth > 0.0 && b.load > 0.0) || b.nx == 0 || b.ny == 0 {
            return bad("beam length, depth, load and cell counts must be positive");
        }
        let m = &self.material;
        if !(m.young > 0.0 && m.poisson > -1.0 && m.poisson < 0.5) {
            return bad("material needs young > 0 and -1 < poisson < 0.5");
        }
        if !(m.pore_ratio > 0.0 && m.pore_ratio < 1.0) {
            return bad("material.pore_ratio must lie in (0, 1)");
        }
        self.reference_spec()
            .validate()
            .map_err(|e| CliError::Config(format!("reference: {e}")))?;
        if !(self.noise.level >= 0.0 && self.noise.level.is_finite()) {
            return bad("noise.level must be >= 0");
        }
        let [l, mu, len] = self.stage1.guess;
        Alpha::new(l, mu, len).map_err(|e| CliError::Config(format!("stage1.guess: {e}")))?;
        let [phi, vf] = self.stage2.guess;
        Beta::new(phi, vf).map_err(|e| CliError::Config(format!("stage2.guess: {e}")))?;
        for (name, tol_f, tol_g, it) in [
            ("stage1", self.stage1.tol_f, self.stage1.tol_g, self.stage1.max_iter),
            ("stage2", self.stage2.tol_f, self.stage2.tol_g, self.stage2.max_iter),
        ] {
            if !(tol_f >= 0.0 && tol_g >= 0.0) || it == 0 {
                return Err(CliError::Config(format!("{name}: tolerances must be >= 0 and max_iter > 0")));
            }
        }
        Ok(())
    }

    pub fn setup(&self) -> CantileverSetup {
        let b = &self.beam;
        CantileverSetup {
            length: b.length,
            depth: b.depth,
            nx: b.nx,
            ny: b.ny,
            load: b.load,
            load_policy: b.load_location.into(),
        }
    }

    pub fn ingredients(&self) -> Result<Ingredients, CliError> {
        let m = lame_from_engineering(self.material.young, self.material.poisson)?;
        Ok(Ingredients {
            matrix: m,
            pore: m.scaled(self.material.pore_ratio),
        })
    }

    pub fn reference_spec(&self) -> RveSpec {
        let r = &self.reference;
        RveSpec {
            phi: r.phi,
            vf: r.vf,
            size_factor: r.size_factor,
            seed: r.seed,
            raster_n: r.raster_n,
        }
    }

    /// Trial RVE template for stage 2: reference geometry rules, stage-2 seed.
    pub fn trial_template(&self) -> RveSpec {
        RveSpec { seed: self.stage2.seed, ..self.reference_spec() }
    }

    pub fn stage1_settings(&self) -> StageSettings {
        let mut s = StageSettings::macro_defaults();
        s.optim.max_iter = self.stage1.max_iter;
        s.optim.tol_f = self.stage1.tol_f;
        s.optim.tol_g = self.stage1.tol_g;
        s
    }

    pub fn stage2_settings(&self) -> StageSettings {
        let mut s = StageSettings::micro_defaults();
        s.optim.max_iter = self.stage2.max_iter;
        s.optim.tol_f = self.stage2.tol_f;
        s.optim.tol_g = self.stage2.tol_g;
        s
    }

    pub fn stage1_guess(&self) -> Alpha {
        Alpha::from_slice(&self.stage1.guess)
    }

    pub fn stage2_guess(&self) -> Beta {
        Beta::from_slice(&self.stage2.guess)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_scenario() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.setup(), CantileverSetup::default());
        let m = cfg.ingredients().unwrap().matrix;
        assert!((m.lambda - 40.3846).abs() < 1e-3 && (m.mu - 26.9231).abs() < 1e-3);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.noise.seed = 99;
        cfg.beam.load_location = LoadLocation::TopCorner;
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        for text in [
            "[beam]\nlength = -1.0",
            "[material]\npoisson = 0.5",
            "[reference]\nvf = 0.6",
            "[noise]\nlevel = -0.1",
            "[stage1]\nguess = [1.0, 0.0, 1.0]",
            "[stage2]\nguess = [0.1, 0.7]",
            "[beam]\nwidth = 3.0",
            "[beam]\nload_location = \"centre\"",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(CliError::Config(_))), "{text}");
        }
    }
}
