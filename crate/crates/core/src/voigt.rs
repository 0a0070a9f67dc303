//! Plane-strain Voigt conventions and isotropic constitutive tangents.
//!
//! Strain-side vectors carry engineering shear, stress-side vectors carry
//! plain components:
//!
//! * strain `e = [ε11, ε22, 2ε12]`, stress `s = [σ11, σ22, σ12]`
//! * strain gradient `h = [η111, η122, 2η112, η211, η222, 2η212]`,
//!   double stress `t = [τ111, τ122, τ112, τ211, τ222, τ212]`
//!
//! With these conventions `s·e = σ:ε` and `t·h = τ⋮η`, and the single
//! length-scale higher-order tangent is exactly `l²·blockdiag(C, C)`.
//!
//! Units are GPa, mm and kN throughout (1 GPa·mm² = 1 kN).

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

/// Second-order symmetric tensor in the plane, indexed `[i][j]`.
pub type Tensor2 = [[f64; 2]; 2];
/// Third-order tensor indexed `[k][i][j]`, symmetric in `(i, j)`.
pub type Tensor3 = [[[f64; 2]; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicModuli {
    pub lambda: f64,
    pub mu: f64,
}

impl IsotropicModuli {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda.is_finite() && mu.is_finite()) {
            return Err(Error::param("Lamé moduli must be finite"));
        }
        if mu <= 0.0 {
            return Err(Error::param(format!("shear modulus must be positive, got {mu}")));
        }
        if lambda <= -2.0 / 3.0 * mu {
            return Err(Error::param(format!(
                "lambda = {lambda} violates lambda > -2/3 mu (mu = {mu})"
            )));
        }
        Ok(Self { lambda, mu })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lambda: self.lambda * factor,
            mu: self.mu * factor,
        }
    }

    pub fn young_poisson(&self) -> (f64, f64) {
        let e = self.mu * (3.0 * self.lambda + 2.0 * self.mu) / (self.lambda + self.mu);
        let nu = self.lambda / (2.0 * (self.lambda + self.mu));
        (e, nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientModuli {
    pub lambda: f64,
    pub mu: f64,
    /// Internal length scale (mm).
    pub l: f64,
}

impl GradientModuli {
    pub fn new(lambda: f64, mu: f64, l: f64) -> Result<Self> {
        IsotropicModuli::new(lambda, mu)?;
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::param(format!("length scale must be >= 0, got {l}")));
        }
        Ok(Self { lambda, mu, l })
    }

    pub fn classical(&self) -> IsotropicModuli {
        IsotropicModuli {
            lambda: self.lambda,
            mu: self.mu,
        }
    }
}

/// 3×3 classical tangent acting on Voigt strain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMatrix(pub Matrix3<f64>);

/// 6×6 higher-order tangent acting on Voigt strain gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DMatrix(pub Matrix6<f64>);

impl CMatrix {
    pub fn zeros() -> Self {
        CMatrix(Matrix3::zeros())
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    /// Relative asymmetry `‖C − Cᵀ‖ / ‖C‖` (0 for the zero matrix).
    pub fn asymmetry(&self) -> f64 {
        relative_asymmetry(self.0.as_slice(), 3)
    }
}

impl DMatrix {
    pub fn zeros() -> Self {
        DMatrix(Matrix6::zeros())
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    pub fn asymmetry(&self) -> f64 {
        relative_asymmetry(self.0.as_slice(), 6)
    }

    /// `blockdiag(C, C)`, the structure of the single-length-scale law.
    pub fn block_diagonal(c: &CMatrix) -> Self {
        let mut d = Matrix6::zeros();
        d.fixed_view_mut::<3, 3>(0, 0).copy_from(&c.0);
        d.fixed_view_mut::<3, 3>(3, 3).copy_from(&c.0);
        DMatrix(d)
    }
}

fn relative_asymmetry(col_major: &[f64], n: usize) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for j in 0..n {
        for i in 0..n {
            let a = col_major[j * n + i];
            let b = col_major[i * n + j];
            diff += (a - b) * (a - b);
            norm += a * a;
        }
    }
    if norm == 0.0 {
        0.0
    } else {
        (diff / norm).sqrt()
    }
}

/// Lamé pair from Young's modulus and Poisson's ratio.
pub fn lame_from_engineering(e: f64, nu: f64) -> Result<IsotropicModuli> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::param(format!("Young's modulus must be positive, got {e}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::param(format!("Poisson's ratio must lie in (-1, 0.5), got {nu}")));
    }
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok(IsotropicModuli { lambda, mu })
}

pub fn isotropic_c(m: &IsotropicModuli) -> CMatrix {
    let (l, mu) = (m.lambda, m.mu);
    CMatrix(Matrix3::new(
        l + 2.0 * mu,
        l,
        0.0,
        l,
        l + 2.0 * mu,
        0.0,
        0.0,
        0.0,
        mu,
    ))
}

/// `D = l²·blockdiag(C, C)`; the blocks belong to gradient directions k = 1, 2.
pub fn gradient_d(m: &GradientModuli) -> DMatrix {
    let c = isotropic_c(&m.classical());
    DMatrix(DMatrix::block_diagonal(&c).0 * (m.l * m.l))
}

pub fn pack_strain(eps: &Tensor2) -> Vector3<f64> {
    Vector3::new(eps[0][0], eps[1][1], 2.0 * eps[0][1])
}

pub fn unpack_strain(e: &Vector3<f64>) -> Tensor2 {
    let shear = 0.5 * e[2];
    [[e[0], shear], [shear, e[1]]]
}

pub fn pack_stress(sigma: &Tensor2) -> Vector3<f64> {
    Vector3::new(sigma[0][0], sigma[1][1], sigma[0][1])
}

pub fn unpack_stress(s: &Vector3<f64>) -> Tensor2 {
    [[s[0], s[2]], [s[2], s[1]]]
}

pub fn pack_strain_gradient(eta: &Tensor3) -> Vector6<f64> {
    let mut h = Vector6::zeros();
    for k in 0..2 {
        h[3 * k] = eta[k][0][0];
        h[3 * k + 1] = eta[k][1][1];
        h[3 * k + 2] = 2.0 * eta[k][0][1];
    }
    h
}

pub fn unpack_strain_gradient(h: &Vector6<f64>) -> Tensor3 {
    let mut eta = [[[0.0; 2]; 2]; 2];
    for (k, block) in eta.iter_mut().enumerate() {
        let shear = 0.5 * h[3 * k + 2];
        *block = [[h[3 * k], shear], [shear, h[3 * k + 1]]];
    }
    eta
}

pub fn pack_double_stress(tau: &Tensor3) -> Vector6<f64> {
    let mut t = Vector6::zeros();
    for k in 0..2 {
        t[3 * k] = tau[k][0][0];
        t[3 * k + 1] = tau[k][1][1];
        t[3 * k + 2] = tau[k][0][1];
    }
    t
}

pub fn unpack_double_stress(t: &Vector6<f64>) -> Tensor3 {
    let mut tau = [[[0.0; 2]; 2]; 2];
    for (k, block) in tau.iter_mut().enumerate() {
        *block = [[t[3 * k], t[3 * k + 2]], [t[3 * k + 2], t[3 * k + 1]]];
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym2(rng: &mut impl Rng) -> Tensor2 {
        let s = rng.gen_range(-1.0..1.0);
        [[rng.gen_range(-1.0..1.0), s], [s, rng.gen_range(-1.0..1.0)]]
    }

    fn random_sym3(rng: &mut impl Rng) -> Tensor3 {
        [random_sym2(rng), random_sym2(rng)]
    }

    #[test]
    fn aluminium_lame_pair() {
        let m = lame_from_engineering(70.0, 0.3).unwrap();
        assert!((m.lambda - 40.38).abs() < 0.005, "{}", m.lambda);
        assert!((m.mu - 26.92).abs() < 0.005, "{}", m.mu);
    }

    #[test]
    fn lame_edge_cases() {
        let m = lame_from_engineering(3.0, 0.0).unwrap();
        assert_eq!(m.lambda, 0.0);
        assert_relative_eq!(m.mu, 1.5, max_relative = 1e-15);
        let m = lame_from_engineering(1.0, 0.25).unwrap();
        assert_relative_eq!(m.lambda, 0.4, max_relative = 1e-14);
        assert_relative_eq!(m.mu, 0.4, max_relative = 1e-14);
        assert!(lame_from_engineering(-1.0, 0.3).is_err());
        assert!(lame_from_engineering(1.0, 0.5).is_err());
        assert!(lame_from_engineering(1.0, -1.0).is_err());
    }

    #[test]
    fn moduli_validation() {
        assert!(IsotropicModuli::new(1.0, 0.0).is_err());
        assert!(IsotropicModuli::new(-0.7, 1.0).is_err());
        assert!(IsotropicModuli::new(-0.6, 1.0).is_ok());
        assert!(GradientModuli::new(1.0, 1.0, -0.1).is_err());
        assert!(GradientModuli::new(1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn isotropic_c_values() {
        let c = isotropic_c(&IsotropicModuli { lambda: 40.38, mu: 26.92 });
        let expected = Matrix3::new(94.22, 40.38, 0.0, 40.38, 94.22, 0.0, 0.0, 0.0, 26.92);
        assert_relative_eq!(c.0, expected, max_relative = 1e-14);
        let zero = isotropic_c(&IsotropicModuli { lambda: 0.0, mu: 0.0 });
        assert_eq!(zero.0, Matrix3::zeros());
        let shear = isotropic_c(&IsotropicModuli { lambda: 0.0, mu: 1.0 });
        assert_eq!(shear.0, Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 1.0)));
    }

    #[test]
    fn gradient_d_structure() {
        let zero = gradient_d(&GradientModuli { lambda: 40.38, mu: 26.92, l: 0.0 });
        assert_eq!(zero.0, Matrix6::zeros());
        let m = GradientModuli { lambda: 40.38, mu: 26.92, l: 1.0 };
        let d = gradient_d(&m);
        let c = isotropic_c(&m.classical());
        assert_eq!(d.0.fixed_view::<3, 3>(0, 0).into_owned(), c.0);
        assert_eq!(d.0.fixed_view::<3, 3>(3, 3).into_owned(), c.0);
        assert_eq!(d.0.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::zeros());
    }

    /// τ_kij = l² (λ η_kmm δ_ij + 2μ η_kij), contracted with η directly in
    /// index form, against the Voigt dot product t·h.
    #[test]
    fn double_stress_energy_matches_tensor_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = GradientModuli { lambda: 40.38, mu: 26.92, l: 0.93 };
        let d = gradient_d(&m);
        for _ in 0..100 {
            let eta = random_sym3(&mut rng);
            let mut tau = [[[0.0; 2]; 2]; 2];
            let mut contraction = 0.0;
            for k in 0..2 {
                let trace = eta[k][0][0] + eta[k][1][1];
                for i in 0..2 {
                    for j in 0..2 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        tau[k][i][j] = m.l * m.l * (m.lambda * trace * delta + 2.0 * m.mu * eta[k][i][j]);
                        contraction += tau[k][i][j] * eta[k][i][j];
                    }
                }
            }
            let h = pack_strain_gradient(&eta);
            let t = d.0 * h;
            assert_relative_eq!(t.dot(&h), contraction, max_relative = 1e-12);
            assert_relative_eq!(t, pack_double_stress(&tau), max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn voigt_conventions() {
        let ident = [[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(pack_strain(&ident), Vector3::new(1.0, 1.0, 0.0));
        let mut eta = [[[0.0; 2]; 2]; 2];
        eta[0][0][1] = 0.5;
        eta[0][1][0] = 0.5;
        assert_eq!(pack_strain_gradient(&eta), Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn positive_definite_when_admissible() {
        for &(lambda, mu) in &[(40.38, 26.92), (-0.5, 1.0), (0.0, 1e-3), (100.0, 0.1)] {
            let c = isotropic_c(&IsotropicModuli { lambda, mu });
            let eig = c.0.symmetric_eigenvalues();
            assert!(eig.min() > 0.0, "lambda={lambda} mu={mu}: {eig}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sym2() -> impl Strategy<Value = Tensor2> {
            (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64).prop_map(|(a, b, s)| [[a, s], [s, b]])
        }

        proptest! {
            #[test]
            fn strain_round_trip(t in sym2()) {
                prop_assert_eq!(unpack_strain(&pack_strain(&t)), t);
                prop_assert_eq!(unpack_stress(&pack_stress(&t)), t);
            }

            #[test]
            fn gradient_round_trip(a in sym2(), b in sym2()) {
                let t = [a, b];
                prop_assert_eq!(unpack_strain_gradient(&pack_strain_gradient(&t)), t);
                prop_assert_eq!(unpack_double_stress(&pack_double_stress(&t)), t);
            }

            #[test]
            fn d_is_scaled_block_c(lambda in -0.6..100.0f64, mu in 1.0..100.0f64, l in 0.0..5.0f64) {
                let m = GradientModuli { lambda, mu, l };
                let d = gradient_d(&m);
                let expect = DMatrix::block_diagonal(&isotropic_c(&m.classical())).0 * (l * l);
                for (x, y) in d.0.iter().zip(expect.iter()) {
                    prop_assert!((x - y).abs() <= 1e-14 * y.abs().max(1e-300));
                }
            }

            #[test]
            fn energy_survives_round_trip(a in sym2(), b in sym2(), e in sym2()) {
                let m = GradientModuli { lambda: 40.38, mu: 26.92, l: 0.93 };
                let c = isotropic_c(&m.classical());
                let d = gradient_d(&m);
                let ev = pack_strain(&e);
                let ev2 = pack_strain(&unpack_strain(&ev));
                let w1 = ev.dot(&(c.0 * ev));
                let w2 = ev2.dot(&(c.0 * ev2));
                prop_assert!((w1 - w2).abs() <= 1e-12 * w1.abs().max(1e-300));
                let hv = pack_strain_gradient(&[a, b]);
                let hv2 = pack_strain_gradient(&unpack_strain_gradient(&hv));
                let g1 = hv.dot(&(d.0 * hv));
                let g2 = hv2.dot(&(d.0 * hv2));
                prop_assert!((g1 - g2).abs() <= 1e-12 * g1.abs().max(1e-300));
            }
        }
    }
}
