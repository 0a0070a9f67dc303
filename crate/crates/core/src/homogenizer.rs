//! Second-order homogenization by unit probes.
//!
//! Column `m` of `C` is `σ̄` under the unit Voigt strain mode `m`; column `m`
//! of `D` is `τ̄` under the unit strain-gradient mode `m` (1/mm). The cross
//! blocks are kept for diagnostics only.

use nalgebra::{Matrix3x6, Matrix6x3, Vector3, Vector6};

use crate::error::Result;
use crate::micro_fem::{build_micro_mesh, MacroStrainState, RveSystem};
use crate::rve::{generate, MaterialGrid, RveSpec};
use crate::voigt::{CMatrix, DMatrix, IsotropicModuli};

/// Pore stiffness relative to the matrix.
pub const PORE_STIFFNESS_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ingredients {
    pub matrix: IsotropicModuli,
    pub pore: IsotropicModuli,
}

impl Ingredients {
    /// Matrix with soft-inclusion pores at [`PORE_STIFFNESS_RATIO`].
    pub fn porous(matrix: IsotropicModuli) -> Self {
        Ingredients {
            matrix,
            pore: matrix.scaled(PORE_STIFFNESS_RATIO),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tangents {
    /// GPa.
    pub c: CMatrix,
    /// GPa·mm².
    pub d: DMatrix,
    /// `∂σ̄/∂η̄` (GPa·mm).
    pub coupling: Matrix3x6<f64>,
    /// `∂τ̄/∂ε̄` (GPa·mm); transpose of `coupling` up to round-off.
    pub moment_coupling: Matrix6x3<f64>,
    pub edge_length: f64,
    pub circle_count: usize,
    pub pore_fraction: f64,
}

impl Tangents {
    /// Copy with `D` and the cross blocks rescaled for an RVE `s` times larger.
    pub fn rescaled(&self, s: f64) -> Tangents {
        Tangents {
            c: self.c.clone(),
            d: DMatrix(self.d.0 * (s * s)),
            coupling: self.coupling * s,
            moment_coupling: self.moment_coupling * s,
            edge_length: self.edge_length * s,
            circle_count: self.circle_count,
            pore_fraction: self.pore_fraction,
        }
    }
}

/// A factored RVE ready for probing.
pub struct Homogenizer {
    system: RveSystem,
    circle_count: usize,
}

impl Homogenizer {
    pub fn new(spec: &RveSpec, ingredients: &Ingredients) -> Result<Self> {
        spec.validate()?;
        let (circles, grid) = generate(spec)?;
        Self::from_grid(&grid, ingredients, circles.len())
    }

    pub fn from_grid(grid: &MaterialGrid, ingredients: &Ingredients, circle_count: usize) -> Result<Self> {
        let mesh = build_micro_mesh(grid, ingredients.matrix, ingredients.pore);
        let system = RveSystem::new(mesh)?;
        Ok(Homogenizer { system, circle_count })
    }

    pub fn system(&self) -> &RveSystem {
        &self.system
    }

    /// `(σ̄, τ̄)` for an arbitrary macro state.
    pub fn response(&self, e: &Vector3<f64>, h: &Vector6<f64>) -> Result<(Vector3<f64>, Vector6<f64>)> {
        self.system.response(&MacroStrainState::from_voigt(e, h))
    }

    pub fn tangents(&self) -> Result<Tangents> {
        let mut c = CMatrix::zeros();
        let mut moment_coupling = Matrix6x3::zeros();
        for m in 0..3 {
            let mut e = Vector3::zeros();
            e[m] = 1.0;
            let (s, t) = self.response(&e, &Vector6::zeros())?;
            c.0.set_column(m, &s);
            moment_coupling.set_column(m, &t);
        }
        let mut d = DMatrix::zeros();
        let mut coupling = Matrix3x6::zeros();
        for m in 0..6 {
            let mut h = Vector6::zeros();
            h[m] = 1.0;
            let (s, t) = self.response(&Vector3::zeros(), &h)?;
            d.0.set_column(m, &t);
            coupling.set_column(m, &s);
        }
        let mesh = self.system.mesh();
        Ok(Tangents {
            c,
            d,
            coupling,
            moment_coupling,
            edge_length: mesh.edge_length,
            circle_count: self.circle_count,
            pore_fraction: mesh.pore_fraction(),
        })
    }
}

pub fn homogenize(spec: &RveSpec, matrix: IsotropicModuli, pore: IsotropicModuli) -> Result<Tangents> {
    Homogenizer::new(spec, &Ingredients { matrix, pore })?.tangents()
}

/// Least-squares `l` in `D ≈ l²·blockdiag(C, C)` and the relative residual.
pub fn extract_length_scale(t: &Tangents) -> (f64, f64) {
    let b = DMatrix::block_diagonal(&t.c).0;
    let bb = b.dot(&b);
    let dn = t.d.0.norm();
    if bb == 0.0 || dn == 0.0 {
        return (0.0, 0.0);
    }
    let l2 = (t.d.0.dot(&b) / bb).max(0.0);
    let residual = (t.d.0 - b * l2).norm() / dn;
    (l2.sqrt(), residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voigt::{gradient_d, isotropic_c, GradientModuli};

    fn aluminium() -> IsotropicModuli {
        IsotropicModuli { lambda: 40.38, mu: 26.92 }
    }

    fn small_spec(phi: f64, vf: f64) -> RveSpec {
        RveSpec { raster_n: 60, ..RveSpec::new(phi, vf, 7) }
    }

    #[test]
    fn length_scale_of_constructed_d() {
        let g = GradientModuli::new(24.22, 17.09, 0.93).unwrap();
        let t = Tangents {
            c: isotropic_c(&g.classical()),
            d: gradient_d(&g),
            coupling: Matrix3x6::zeros(),
            moment_coupling: Matrix6x3::zeros(),
            edge_length: 3.0,
            circle_count: 0,
            pore_fraction: 0.0,
        };
        let (l, r) = extract_length_scale(&t);
        assert!((l - 0.93).abs() < 1e-14);
        assert!(r < 1e-14);
        let zero = Tangents { d: DMatrix::zeros(), ..t };
        assert_eq!(extract_length_scale(&zero), (0.0, 0.0));
    }

    #[test]
    fn probes_superpose() {
        let h = Homogenizer::new(&small_spec(0.3, 0.15), &Ingredients::porous(aluminium())).unwrap();
        let t = h.tangents().unwrap();
        let pairs = [((0, 4), 0.7, -1.3), ((2, 7), 2.0, 0.25), ((5, 8), -0.4, 1.1)];
        for ((i, j), a, b) in pairs {
            let mode = |m: usize| {
                let mut e = Vector3::zeros();
                let mut g = Vector6::zeros();
                if m < 3 {
                    e[m] = 1.0
                } else {
                    g[m - 3] = 1.0
                }
                (e, g)
            };
            let (ei, gi) = mode(i);
            let (ej, gj) = mode(j);
            let (s, tau) = h.response(&(ei * a + ej * b), &(gi * a + gj * b)).unwrap();
            let col_s = |m: usize| if m < 3 { t.c.0.column(m).into_owned() } else { t.coupling.column(m - 3).into_owned() };
            let col_t = |m: usize| if m < 3 { t.moment_coupling.column(m).into_owned() } else { t.d.0.column(m - 3).into_owned() };
            let es = col_s(i) * a + col_s(j) * b;
            let et = col_t(i) * a + col_t(j) * b;
            assert!((s - es).norm() <= 1e-9 * es.norm().max(t.c.frobenius()));
            assert!((tau - et).norm() <= 1e-9 * et.norm().max(t.d.frobenius()));
        }
    }

    #[test]
    fn tangents_are_symmetric_and_definite() {
        let t = homogenize(&small_spec(0.3, 0.15), aluminium(), aluminium().scaled(1e-6)).unwrap();
        assert!(t.c.asymmetry() <= 1e-6);
        assert!(t.d.asymmetry() <= 1e-6);
        let cross = (t.coupling - t.moment_coupling.transpose()).norm();
        assert!(cross <= 1e-8 * t.c.frobenius() * t.edge_length);
        let cs = (t.c.0 + t.c.0.transpose()) * 0.5;
        let ds = (t.d.0 + t.d.0.transpose()) * 0.5;
        assert!(cs.symmetric_eigenvalues().min() > 0.0);
        assert!(ds.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn deterministic() {
        let a = homogenize(&small_spec(0.3, 0.15), aluminium(), aluminium().scaled(1e-6)).unwrap();
        let b = homogenize(&small_spec(0.3, 0.15), aluminium(), aluminium().scaled(1e-6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pore_count_reported() {
        let t = homogenize(&small_spec(0.3, 0.15), aluminium(), aluminium().scaled(1e-6)).unwrap();
        assert_eq!(t.circle_count, 19);
        assert!(t.pore_fraction > 0.1 && t.pore_fraction < 0.2);
        assert!((t.edge_length - 3.0).abs() < 1e-12);
    }
}
