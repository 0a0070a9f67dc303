//! Bound-constrained quasi-Newton minimization with forward-difference
//! gradients.
//!
//! Parameters are normalized by the initial guess (`z = x / |x0|`). Search
//! directions come from a BFGS inverse-Hessian estimate restricted to the
//! variables that are not pinned at a bound, and steps are accepted by Armijo
//! backtracking on the projected trial point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Finite-difference step for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `δ = r·|x|` (or `r` when `x = 0`).
    Relative(f64),
    /// `δ` fixed.
    Absolute(f64),
    /// `δ = r·|x|`, never below the floor.
    RelativeFloor(f64, f64),
}

impl StepRule {
    pub fn step(&self, x: f64) -> f64 {
        match *self {
            StepRule::Relative(r) => {
                if x == 0.0 {
                    r
                } else {
                    r * x.abs()
                }
            }
            StepRule::Absolute(d) => d,
            StepRule::RelativeFloor(r, floor) => (r * x.abs()).max(floor),
        }
    }
}

/// Forward differences `(f(x + δ_k e_k) − f(x)) / δ_k`.
///
/// `fx` is `f(x)` when the caller already has it.
pub fn fd_gradient<F>(f: &mut F, x: &[f64], steps: &[f64], fx: Option<f64>) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if steps.len() != x.len() {
        return Err(Error::param(format!("{} steps for {} parameters", steps.len(), x.len())));
    }
    let f0 = match fx {
        Some(v) => v,
        None => f(x)?,
    };
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for (k, &d) in steps.iter().enumerate() {
        if d == 0.0 || !d.is_finite() {
            return Err(Error::param(format!("finite-difference step {k} is {d}")));
        }
        xp[k] = x[k] + d;
        let fp = f(&xp)?;
        xp[k] = x[k];
        g.push((fp - f0) / d);
    }
    Ok(g)
}

/// Central differences `(f(x + δ_k e_k) − f(x − δ_k e_k)) / 2δ_k`.
pub fn central_gradient<F>(f: &mut F, x: &[f64], steps: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if steps.len() != x.len() {
        return Err(Error::param(format!("{} steps for {} parameters", steps.len(), x.len())));
    }
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for (k, &d) in steps.iter().enumerate() {
        if d == 0.0 || !d.is_finite() {
            return Err(Error::param(format!("finite-difference step {k} is {d}")));
        }
        xp[k] = x[k] + d;
        let fp = f(&xp)?;
        xp[k] = x[k] - d;
        let fm = f(&xp)?;
        xp[k] = x[k];
        g.push((fp - fm) / (2.0 * d));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdScheme {
    #[default]
    Forward,
    /// Used where it fits inside the bounds; otherwise one-sided.
    Central,
}

/// Something the optimizer can evaluate.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> Result<f64>;
    /// Gradient at `x`, where `f(x) = fx`.
    fn gradient(&mut self, x: &[f64], fx: f64) -> Result<Vec<f64>>;
}

/// Objective with finite-difference gradients.
///
/// A forward step that would leave `[lower, upper]` is taken backward instead.
pub struct FdObjective<F> {
    pub f: F,
    pub rules: Vec<StepRule>,
    pub scheme: FdScheme,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl<F> FdObjective<F>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    pub fn new(f: F, rules: Vec<StepRule>) -> Self {
        let n = rules.len();
        FdObjective {
            f,
            rules,
            scheme: FdScheme::Forward,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_scheme(mut self, scheme: FdScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn steps(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.rules)
            .enumerate()
            .map(|(k, (&xk, rule))| {
                let d = rule.step(xk);
                if xk + d > self.upper[k] && xk - d >= self.lower[k] {
                    -d
                } else {
                    d
                }
            })
            .collect()
    }
}

impl<F> Objective for FdObjective<F>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }

    fn gradient(&mut self, x: &[f64], fx: f64) -> Result<Vec<f64>> {
        let steps = self.steps(x);
        if self.scheme == FdScheme::Forward {
            return fd_gradient(&mut self.f, x, &steps, Some(fx));
        }
        let mut g = Vec::with_capacity(x.len());
        let mut xp = x.to_vec();
        for (k, &d) in steps.iter().enumerate() {
            let d = d.abs();
            let fits = x[k] - d >= self.lower[k] && x[k] + d <= self.upper[k];
            if fits {
                xp[k] = x[k] + d;
                let fp = (self.f)(&xp)?;
                xp[k] = x[k] - d;
                let fm = (self.f)(&xp)?;
                g.push((fp - fm) / (2.0 * d));
            } else {
                let d = steps[k];
                xp[k] = x[k] + d;
                g.push(((self.f)(&xp)? - fx) / d);
            }
            xp[k] = x[k];
        }
        Ok(g)
    }
}

/// Objective with a closed-form gradient.
pub struct AnalyticObjective<F, G> {
    pub f: F,
    pub g: G,
}

impl<F, G> Objective for AnalyticObjective<F, G>
where
    F: FnMut(&[f64]) -> Result<f64>,
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }

    fn gradient(&mut self, x: &[f64], _fx: f64) -> Result<Vec<f64>> {
        (self.g)(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    /// Stop once `f < tol_f`.
    pub tol_f: f64,
    /// Stop once `‖∇_z f‖ / |f| < tol_g` (projected gradient in normalized
    /// coordinates, relative to the current objective).
    pub tol_g: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Longest step in normalized coordinates.
    pub max_step: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl OptimConfig {
    pub fn unbounded(n: usize) -> Self {
        OptimConfig {
            tol_f: 1e-10,
            tol_g: 1e-6,
            max_iter: 100,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 25,
            max_step: 0.5,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn bounded(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        OptimConfig {
            lower,
            upper,
            ..Self::unbounded(0)
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::param(format!("bounds have {}/{} entries for {n} parameters", self.lower.len(), self.upper.len())));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::param("lower bound exceeds upper bound"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::param("line-search constants must lie in (0, 1)"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::param("max_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ObjectiveTolerance,
    GradientTolerance,
    MaxIterations,
    /// No step satisfied the Armijo condition; the best point is returned.
    LineSearchFailed,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ObjectiveTolerance => "objective-tolerance",
            Termination::GradientTolerance => "gradient-tolerance",
            Termination::MaxIterations => "max-iterations",
            Termination::LineSearchFailed => "line-search-failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub f: f64,
    /// Relative projected gradient norm at `x`.
    pub grad_norm: f64,
    /// Length of the accepted step in normalized coordinates.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Entry 0 is the initial guess; one entry per accepted iterate after that.
    pub history: Vec<IterationRecord>,
    pub iterations: usize,
    pub termination: Termination,
    pub evaluations: usize,
}

struct Counted<'a, O: Objective> {
    inner: &'a mut O,
    evaluations: usize,
}

impl<O: Objective> Counted<'_, O> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        let v = self.inner.value(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Objective(format!("objective is {v} at {x:?}")))
        }
    }

    fn gradient(&mut self, x: &[f64], fx: f64) -> Result<Vec<f64>> {
        let g = self.inner.gradient(x, fx)?;
        self.evaluations += g.len();
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(Error::Objective(format!("gradient is not finite at {x:?}")))
        }
    }
}

pub fn minimize<O: Objective>(objective: &mut O, x0: &[f64], config: &OptimConfig) -> Result<OptimResult> {
    minimize_observed(objective, x0, config, &mut |_| {})
}

/// [`minimize`] with a callback after every accepted iterate (and once for `x0`).
pub fn minimize_observed<O: Objective>(
    objective: &mut O,
    x0: &[f64],
    config: &OptimConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<OptimResult> {
    let n = x0.len();
    config.validate(n)?;
    let scale: Vec<f64> = x0.iter().map(|&v| if v != 0.0 { v.abs() } else { 1.0 }).collect();
    let lo = DVector::from_iterator(n, (0..n).map(|k| config.lower[k] / scale[k]));
    let hi = DVector::from_iterator(n, (0..n).map(|k| config.upper[k] / scale[k]));
    let to_x = |z: &DVector<f64>| -> Vec<f64> { (0..n).map(|k| z[k] * scale[k]).collect() };
    let project = |z: &DVector<f64>| DVector::from_iterator(n, (0..n).map(|k| z[k].clamp(lo[k], hi[k])));

    let mut obj = Counted { inner: objective, evaluations: 0 };
    let mut z = project(&DVector::from_iterator(n, (0..n).map(|k| x0[k] / scale[k])));
    let mut x = to_x(&z);
    let mut f = obj.value(&x)?;
    let mut history = Vec::new();

    let mut record = |history: &mut Vec<IterationRecord>, rec: IterationRecord| {
        observer(&rec);
        history.push(rec);
    };

    if f < config.tol_f {
        record(&mut history, IterationRecord { iteration: 0, x: x.clone(), f, grad_norm: f64::NAN, step: 0.0 });
        return Ok(OptimResult {
            x,
            f,
            history,
            iterations: 0,
            termination: Termination::ObjectiveTolerance,
            evaluations: obj.evaluations,
        });
    }

    let grad_z = |g: Vec<f64>| DVector::from_iterator(n, (0..n).map(|k| g[k] * scale[k]));
    let mut g = grad_z(obj.gradient(&x, f)?);
    let free_mask = |z: &DVector<f64>, g: &DVector<f64>| -> Vec<bool> {
        (0..n)
            .map(|k| !((z[k] <= lo[k] && g[k] > 0.0) || (z[k] >= hi[k] && g[k] < 0.0)))
            .collect()
    };
    let projected = |g: &DVector<f64>, free: &[bool]| DVector::from_iterator(n, (0..n).map(|k| if free[k] { g[k] } else { 0.0 }));

    let mut free = free_mask(&z, &g);
    let mut gnorm = projected(&g, &free).norm() / f.abs().max(f64::MIN_POSITIVE);
    record(&mut history, IterationRecord { iteration: 0, x: x.clone(), f, grad_norm: gnorm, step: 0.0 });

    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled_once = false;
    // H has not been updated since the last reset
    let mut fresh = true;
    let mut iterations = 0;
    let termination = loop {
        if gnorm < config.tol_g {
            break Termination::GradientTolerance;
        }
        if iterations >= config.max_iter {
            break Termination::MaxIterations;
        }
        let pg = projected(&g, &free);
        let mut hr = h.clone();
        for k in 0..n {
            if !free[k] {
                hr.row_mut(k).fill(0.0);
                hr.column_mut(k).fill(0.0);
            }
        }
        let mut d = -(&hr * &pg);
        if d.dot(&pg) >= 0.0 {
            h = DMatrix::identity(n, n);
            scaled_once = false;
            fresh = true;
            d = -pg.clone();
        }
        let dn = d.norm();
        if dn > config.max_step {
            d *= config.max_step / dn;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let zt = project(&(&z + &d * t));
            let s = &zt - &z;
            let slope = g.dot(&s);
            if slope < 0.0 {
                let xt = to_x(&zt);
                if let Ok(ft) = obj.value(&xt) {
                    if ft <= f + config.armijo * slope {
                        accepted = Some((zt, xt, ft, s));
                        break;
                    }
                }
            }
            t *= config.shrink;
        }
        let Some((zn, xn, fnew, s)) = accepted else {
            if fresh {
                break Termination::LineSearchFailed;
            }
            // retry once along steepest descent before giving up
            h = DMatrix::identity(n, n);
            scaled_once = false;
            fresh = true;
            continue;
        };
        iterations += 1;
        z = zn;
        x = xn;
        f = fnew;
        let step = s.norm();
        if f < config.tol_f {
            record(&mut history, IterationRecord { iteration: iterations, x: x.clone(), f, grad_norm: f64::NAN, step });
            break Termination::ObjectiveTolerance;
        }
        let g_new = grad_z(obj.gradient(&x, f)?);
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled_once {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
                scaled_once = true;
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - (&s * y.transpose()) * rho;
            h = &a * &h * a.transpose() + (&s * s.transpose()) * rho;
            fresh = false;
        }
        g = g_new;
        free = free_mask(&z, &g);
        gnorm = projected(&g, &free).norm() / f.abs().max(f64::MIN_POSITIVE);
        record(&mut history, IterationRecord { iteration: iterations, x: x.clone(), f, grad_norm: gnorm, step });
    };

    Ok(OptimResult {
        x,
        f,
        history,
        iterations,
        termination,
        evaluations: obj.evaluations,
    })
}

impl OptimResult {
    /// Whether recorded objective values never increase.
    pub fn is_monotone(&self) -> bool {
        self.history.windows(2).all(|w| w[1].f <= w[0].f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bowl(target: Vec<f64>) -> AnalyticObjective<impl FnMut(&[f64]) -> Result<f64>, impl FnMut(&[f64]) -> Result<Vec<f64>>> {
        let t2 = target.clone();
        AnalyticObjective {
            f: move |x: &[f64]| Ok(x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()),
            g: move |x: &[f64]| Ok(x.iter().zip(&t2).map(|(a, b)| 2.0 * (a - b)).collect()),
        }
    }

    fn rosenbrock() -> AnalyticObjective<impl FnMut(&[f64]) -> Result<f64>, impl FnMut(&[f64]) -> Result<Vec<f64>>> {
        AnalyticObjective {
            f: |x: &[f64]| Ok(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)),
            g: |x: &[f64]| {
                Ok(vec![
                    -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            },
        }
    }

    #[test]
    fn fd_square() {
        let mut f = |x: &[f64]| Ok(x[0] * x[0]);
        let g = fd_gradient(&mut f, &[1.0], &[1e-3], None).unwrap();
        assert!((g[0] - 2.001).abs() < 1e-9);
    }

    #[test]
    fn fd_linear_and_constant() {
        let a = [3.0, -1.5, 0.25];
        let mut lin = |x: &[f64]| Ok(x.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>());
        for d in [1e-6, 1e-3, 0.5] {
            let g = fd_gradient(&mut lin, &[0.5, 2.0, -1.0], &[d, d, d], None).unwrap();
            for k in 0..3 {
                assert!((g[k] - a[k]).abs() < 1e-9);
            }
        }
        let mut c = |_: &[f64]| Ok(7.0);
        assert_eq!(fd_gradient(&mut c, &[1.0, 2.0], &[1e-3, 1e-3], None).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn central_is_exact_for_quadratics() {
        let mut f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[0] * x[1]);
        let g = central_gradient(&mut f, &[1.0, 2.0], &[1e-2, 1e-2]).unwrap();
        assert!((g[0] - 8.0).abs() < 1e-9 && (g[1] - 3.0).abs() < 1e-9);
        let mut obj = FdObjective::new(f, vec![StepRule::Absolute(1e-2); 2]).with_scheme(FdScheme::Central);
        let fx = obj.value(&[1.0, 2.0]).unwrap();
        let h = obj.gradient(&[1.0, 2.0], fx).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn fd_steps_stay_inside_bounds() {
        let obj = FdObjective::new(|x: &[f64]| Ok(x[0]), vec![StepRule::Absolute(0.01), StepRule::Relative(1e-3)])
            .with_bounds(vec![0.005, 0.0], vec![0.45, 10.0]);
        let s = obj.steps(&[0.445, 0.0]);
        assert_eq!(s, vec![-0.01, 1e-3]);
    }

    #[test]
    fn quadratic_bowl() {
        let target = vec![1.0, -2.0, 0.5];
        let mut obj = bowl(target.clone());
        let cfg = OptimConfig { tol_f: 1e-20, ..OptimConfig::unbounded(3) };
        let r = minimize(&mut obj, &[4.0, 3.0, -7.0], &cfg).unwrap();
        assert!(r.iterations <= 30, "{}", r.iterations);
        for k in 0..3 {
            assert!((r.x[k] - target[k]).abs() < 1e-8);
        }
        assert!(r.is_monotone());
    }

    #[test]
    fn rosenbrock_benchmark() {
        let mut obj = rosenbrock();
        let cfg = OptimConfig { tol_f: 1e-12, tol_g: 0.0, max_iter: 200, ..OptimConfig::unbounded(2) };
        let r = minimize(&mut obj, &[-1.2, 1.0], &cfg).unwrap();
        assert!(r.f < 1e-6, "f = {} after {} ({:?})", r.f, r.iterations, r.termination);
        assert!(r.iterations <= 200);
        assert!(r.is_monotone());
    }

    #[test]
    fn already_converged() {
        let mut obj = bowl(vec![1.0]);
        let r = minimize(&mut obj, &[1.0], &OptimConfig::unbounded(1)).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::ObjectiveTolerance);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn active_bound() {
        let mut obj = bowl(vec![-1.0, 2.0]);
        let cfg = OptimConfig { tol_f: 0.0, ..OptimConfig::bounded(vec![0.5, 0.0], vec![5.0, 5.0]) };
        let r = minimize(&mut obj, &[3.0, 1.0], &cfg).unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-12);
        assert!((r.x[1] - 2.0).abs() < 1e-8);
        assert!(r.history.iter().all(|h| h.x[0] >= 0.5));
    }

    #[test]
    fn fd_driven_bowl() {
        let mut obj = FdObjective::new(
            |x: &[f64]| Ok((x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2)),
            vec![StepRule::Relative(1e-7); 2],
        );
        let cfg = OptimConfig { tol_f: 1e-14, ..OptimConfig::unbounded(2) };
        let r = minimize(&mut obj, &[1.0, 1.0], &cfg).unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-5 && (r.x[1] + 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn failing_objective_counts_as_rejection() {
        // undefined beyond x = 2; the minimizer must back off rather than abort
        let mut obj = AnalyticObjective {
            f: |x: &[f64]| if x[0] > 2.0 { Err(Error::Objective("out of range".into())) } else { Ok((x[0] - 1.9).powi(2)) },
            g: |x: &[f64]| Ok(vec![2.0 * (x[0] - 1.9)]),
        };
        let cfg = OptimConfig { tol_f: 1e-16, max_step: 10.0, ..OptimConfig::unbounded(1) };
        let r = minimize(&mut obj, &[0.1], &cfg).unwrap();
        assert!((r.x[0] - 1.9).abs() < 1e-6);
    }

    #[test]
    fn bad_config_rejected() {
        let mut obj = bowl(vec![1.0]);
        assert!(minimize(&mut obj, &[0.0], &OptimConfig::unbounded(2)).is_err());
        let cfg = OptimConfig { shrink: 1.0, ..OptimConfig::unbounded(1) };
        assert!(minimize(&mut obj, &[0.0], &cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn histories_never_increase(x0 in -3.0f64..3.0, y0 in -3.0f64..3.0) {
            let mut obj = rosenbrock();
            let cfg = OptimConfig { max_iter: 40, ..OptimConfig::unbounded(2) };
            let r = minimize(&mut obj, &[x0, y0], &cfg).unwrap();
            prop_assert!(r.is_monotone());
            prop_assert!(r.f <= r.history[0].f);
        }
    }
}
