//! The two identification stages.
//!
//! Stage 1 fits `α = (λ, μ, l)` of the gradient-elastic cantilever to sampled
//! deflections. Stage 2 fits `β = (φ, vf)` of the RVE so that its homogenized
//! `(C, D)` match the tangents built from `α`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::homogenizer::{Homogenizer, Ingredients, Tangents};
use crate::macro_solver::{assemble_and_solve, CantileverSetup, MacroMesh};
use crate::measurement::MeasurementSet;
use crate::optimize::{minimize_observed, FdObjective, FdScheme, IterationRecord, OptimConfig, OptimResult, StepRule};
use crate::rve::{circle_count, generate, MaterialGrid, RveSpec};
use crate::voigt::{gradient_d, isotropic_c, CMatrix, DMatrix, GradientModuli};

/// `u_i (1 + γ r_i)` with `r_i` uniform on `[−1, 1]`.
pub fn corrupt(u: &[f64], gamma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::param(format!("noise level must be >= 0, got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(u.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(u.iter().map(|&v| v * (1.0 + gamma * rng.gen_range(-1.0..=1.0))).collect())
}

/// Noisy copy of `clean` tagged with its noise parameters.
pub fn corrupt_measurements(clean: &MeasurementSet, gamma: f64, seed: u64) -> Result<MeasurementSet> {
    Ok(MeasurementSet {
        values: corrupt(&clean.values, gamma, seed)?,
        noise_level: gamma,
        noise_seed: Some(seed),
        ..clean.clone()
    })
}

/// Effective gradient-elastic moduli.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    pub lambda: f64,
    pub mu: f64,
    pub l: f64,
}

impl Alpha {
    pub fn new(lambda: f64, mu: f64, l: f64) -> Result<Self> {
        let a = Alpha { lambda, mu, l };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lambda, self.mu, self.l].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::param(format!("α components must be positive, got {self:?}")))
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.lambda, self.mu, self.l]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Alpha { lambda: x[0], mu: x[1], l: x[2] }
    }

    pub fn moduli(&self) -> Result<GradientModuli> {
        GradientModuli::new(self.lambda, self.mu, self.l)
    }

    pub fn target(&self) -> Result<Target> {
        let m = self.moduli()?;
        Ok(Target {
            c: isotropic_c(&m.classical()),
            d: gradient_d(&m),
        })
    }
}

/// Pore diameter (mm) and volume fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beta {
    pub phi: f64,
    pub vf: f64,
}

impl Beta {
    pub fn new(phi: f64, vf: f64) -> Result<Self> {
        let b = Beta { phi, vf };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi > 0.0 && self.phi.is_finite() && self.vf > 0.0 && self.vf < 0.5 {
            Ok(())
        } else {
            Err(Error::param(format!("β needs φ > 0 and 0 < vf < 0.5, got {self:?}")))
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.phi, self.vf]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Beta { phi: x[0], vf: x[1] }
    }
}

/// Effective tangents that stage 2 tries to reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub c: CMatrix,
    pub d: DMatrix,
}

impl From<&Tangents> for Target {
    fn from(t: &Tangents) -> Self {
        Target { c: t.c.clone(), d: t.d.clone() }
    }
}

/// `½ Σ (u_i − u_i^exp)² / Σ (u_i^exp)²`.
///
/// Terms are summed in order of sample location so the value does not depend
/// on how the samples are listed.
pub fn misfit(model: &[f64], data: &MeasurementSet) -> Result<f64> {
    if model.len() != data.len() {
        return Err(Error::param(format!("{} model values for {} samples", model.len(), data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (data.points[a], data.points[b]);
        pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1])).then(data.values[a].total_cmp(&data.values[b]))
    });
    let (mut num, mut den) = (0.0, 0.0);
    for &i in &order {
        let r = model[i] - data.values[i];
        num += r * r;
        den += data.values[i] * data.values[i];
    }
    if den == 0.0 {
        return Err(Error::Objective("measurement norm is zero".into()));
    }
    Ok(0.5 * num / den)
}

/// Stage-1 forward model: cantilever geometry and the mesh built from it.
pub struct MacroModel {
    pub setup: CantileverSetup,
    mesh: MacroMesh,
}

impl MacroModel {
    pub fn new(setup: CantileverSetup) -> Result<Self> {
        let mesh = setup.mesh()?;
        Ok(MacroModel { setup, mesh })
    }

    pub fn mesh(&self) -> &MacroMesh {
        &self.mesh
    }

    /// Vertical displacement at each sample point for the given tangents.
    pub fn predict(&self, c: &CMatrix, d: &DMatrix, points: &[[f64; 2]]) -> Result<Vec<f64>> {
        let problem = self.setup.problem(c.clone(), d.clone())?;
        let field = assemble_and_solve(&problem).map_err(|e| Error::Objective(format!("macro solve failed: {e}")))?;
        points.iter().map(|&p| field.vertical_at(&self.mesh, p)).collect()
    }

    pub fn psi1(&self, alpha: &Alpha, data: &MeasurementSet) -> Result<f64> {
        let m = alpha.moduli().map_err(|e| Error::Objective(e.to_string()))?;
        let u = self.predict(&isotropic_c(&m.classical()), &gradient_d(&m), &data.points)?;
        misfit(&u, data)
    }
}

pub fn psi1(alpha: &Alpha, data: &MeasurementSet, model: &MacroModel) -> Result<f64> {
    model.psi1(alpha, data)
}

/// `½‖C − C_eff‖²/‖C_eff‖² + ½‖D − D_eff‖²/‖D_eff‖²` (Frobenius).
pub fn tangent_misfit(c: &CMatrix, d: &DMatrix, target: &Target) -> Result<f64> {
    let (cn, dn) = (target.c.0.norm_squared(), target.d.0.norm_squared());
    if cn == 0.0 || dn == 0.0 {
        return Err(Error::Objective("target tangents must be nonzero".into()));
    }
    Ok(0.5 * (c.0 - target.c.0).norm_squared() / cn + 0.5 * (d.0 - target.d.0).norm_squared() / dn)
}

/// Stage-2 forward model.
///
/// Under a fixed seed the normalized microstructure depends on `vf` only
/// through the circle count, and `C` is independent of `φ` while `D` scales
/// with `φ²`. Tangents are therefore homogenized once per circle count at
/// `φ = 1 mm` and rescaled.
pub struct MicroModel {
    /// `phi` and `vf` are ignored; seed, size factor and raster are used.
    pub template: RveSpec,
    pub ingredients: Ingredients,
    cache: BTreeMap<usize, Tangents>,
}

impl MicroModel {
    pub fn new(template: RveSpec, ingredients: Ingredients) -> Self {
        MicroModel {
            template,
            ingredients,
            cache: BTreeMap::new(),
        }
    }

    pub fn spec(&self, beta: &Beta) -> RveSpec {
        RveSpec { phi: beta.phi, vf: beta.vf, ..self.template }
    }

    /// Number of distinct microstructures homogenized so far.
    pub fn cached(&self) -> usize {
        self.cache.len()
    }

    pub fn tangents(&mut self, beta: &Beta) -> Result<Tangents> {
        beta.validate().map_err(|e| Error::Objective(e.to_string()))?;
        let spec = self.spec(beta);
        spec.validate()?;
        let n = circle_count(beta.vf, spec.size_factor);
        if !self.cache.contains_key(&n) {
            let unit = RveSpec { phi: 1.0, ..spec };
            let t = Homogenizer::new(&unit, &self.ingredients)?.tangents()?;
            self.cache.insert(n, t);
        }
        Ok(self.cache[&n].rescaled(beta.phi))
    }

    pub fn psi2(&mut self, beta: &Beta, target: &Target) -> Result<f64> {
        let t = self.tangents(beta)?;
        tangent_misfit(&t.c, &t.d, target)
    }

    pub fn grid(&self, beta: &Beta) -> Result<MaterialGrid> {
        Ok(generate(&self.spec(beta))?.1)
    }
}

pub fn psi2(beta: &Beta, target: &Target, model: &mut MicroModel) -> Result<f64> {
    model.psi2(beta, target)
}

/// Optimizer settings for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSettings {
    pub optim: OptimConfig,
    pub steps: Vec<StepRule>,
    pub scheme: FdScheme,
}

impl StageSettings {
    /// λ, μ ≥ 0.001 GPa, l ≥ 1e-4 mm; central differences with relative
    /// steps of 1e-4.
    pub fn macro_defaults() -> Self {
        StageSettings {
            optim: OptimConfig {
                max_iter: 100,
                ..OptimConfig::bounded(vec![1e-3, 1e-3, 1e-4], vec![f64::INFINITY; 3])
            },
            steps: vec![StepRule::Relative(1e-4); 3],
            scheme: FdScheme::Central,
        }
    }

    /// φ ≥ 0.01 mm, vf in [0.005, 0.45]; central differences with δφ = 0.05 φ
    /// and δvf = 0.01, wider than one circle so the staircase in vf shows a
    /// slope.
    pub fn micro_defaults() -> Self {
        StageSettings {
            optim: OptimConfig {
                max_iter: 50,
                ..OptimConfig::bounded(vec![0.01, 0.005], vec![f64::INFINITY, 0.45])
            },
            steps: vec![StepRule::Relative(0.05), StepRule::Absolute(0.01)],
            scheme: FdScheme::Central,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MacroIdentification {
    pub alpha: Alpha,
    pub result: OptimResult,
}

pub fn identify_macro(
    data: &MeasurementSet,
    model: &MacroModel,
    guess: &Alpha,
    settings: &StageSettings,
) -> Result<MacroIdentification> {
    identify_macro_observed(data, model, guess, settings, &mut |_| {})
}

/// [`identify_macro`] reporting every accepted iterate.
pub fn identify_macro_observed(
    data: &MeasurementSet,
    model: &MacroModel,
    guess: &Alpha,
    settings: &StageSettings,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<MacroIdentification> {
    guess.validate()?;
    if data.is_empty() || data.norm() == 0.0 {
        return Err(Error::param("measurements are empty or identically zero"));
    }
    let f = |x: &[f64]| model.psi1(&Alpha::from_slice(x), data);
    let mut obj = FdObjective::new(f, settings.steps.clone())
        .with_scheme(settings.scheme)
        .with_bounds(settings.optim.lower.clone(), settings.optim.upper.clone());
    let result = minimize_observed(&mut obj, &guess.to_vec(), &settings.optim, observer)?;
    Ok(MacroIdentification {
        alpha: Alpha::from_slice(&result.x),
        result,
    })
}

#[derive(Debug, Clone)]
pub struct MicroIdentification {
    pub beta: Beta,
    pub result: OptimResult,
    /// RVE at each recorded iterate, keyed by iteration number.
    pub snapshots: Vec<(usize, MaterialGrid)>,
}

/// Stage 2 against the tangents implied by `alpha`.
pub fn identify_micro(
    alpha: &Alpha,
    model: &mut MicroModel,
    guess: &Beta,
    settings: &StageSettings,
) -> Result<MicroIdentification> {
    identify_micro_target(&alpha.target()?, model, guess, settings)
}

pub fn identify_micro_target(
    target: &Target,
    model: &mut MicroModel,
    guess: &Beta,
    settings: &StageSettings,
) -> Result<MicroIdentification> {
    identify_micro_observed(target, model, guess, settings, &mut |_| {})
}

/// [`identify_micro_target`] reporting every accepted iterate.
pub fn identify_micro_observed(
    target: &Target,
    model: &mut MicroModel,
    guess: &Beta,
    settings: &StageSettings,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<MicroIdentification> {
    guess.validate()?;
    let mut visited: Vec<IterationRecord> = Vec::new();
    let result = {
        let f = |x: &[f64]| model.psi2(&Beta::from_slice(x), target);
        let mut obj = FdObjective::new(f, settings.steps.clone())
            .with_scheme(settings.scheme)
            .with_bounds(settings.optim.lower.clone(), settings.optim.upper.clone());
        minimize_observed(&mut obj, &guess.to_vec(), &settings.optim, &mut |r| {
            observer(r);
            visited.push(r.clone())
        })?
    };
    let snapshots = visited
        .iter()
        .map(|r| Ok((r.iteration, model.grid(&Beta::from_slice(&r.x))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MicroIdentification {
        beta: Beta::from_slice(&result.x),
        result,
        snapshots,
    })
}
