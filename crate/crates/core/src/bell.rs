//! Bell reduced-quintic C1 triangle.
//!
//! Each vertex carries six scalar DOFs in global coordinates:
//! `(w, w,x, w,y, w,xx, w,xy, w,yy)`. The 18 basis functions span the
//! quintics whose normal derivative is cubic along every edge. They are
//! found per element by inverting the 21×21 matrix of the 18 nodal
//! functionals plus three edge constraints (the 4th Legendre moment of the
//! normal derivative vanishes), evaluated in centered, scaled coordinates.

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::quadrature::gauss_unit_interval;

/// Derivative slots: value, d/dx, d/dy, d²/dx², d²/dxdy, d²/dy².
pub const N_DERIV: usize = 6;
pub const N_BASIS: usize = 18;
const N_MONO: usize = 21;

const DERIV_ORDER: [i32; N_DERIV] = [0, 1, 1, 2, 2, 2];

/// Exponent pairs `(a, b)` of `ξ^a η^b`, ordered by total degree.
const MONOMIALS: [(i32, i32); N_MONO] = {
    let mut m = [(0, 0); N_MONO];
    let mut idx = 0;
    let mut d = 0;
    while d <= 5 {
        let mut a = d;
        loop {
            m[idx] = (a, d - a);
            idx += 1;
            if a == 0 {
                break;
            }
            a -= 1;
        }
        d += 1;
    }
    m
};

/// Value and derivatives (same slot order as the DOFs) of each basis function.
pub type BasisValues = [[f64; N_DERIV]; N_BASIS];

#[inline]
fn ipow(x: f64, k: i32) -> f64 {
    if k < 0 {
        0.0
    } else {
        x.powi(k)
    }
}

fn monomial_derivatives(xi: f64, eta: f64) -> [[f64; N_DERIV]; N_MONO] {
    let mut out = [[0.0; N_DERIV]; N_MONO];
    for (m, &(a, b)) in MONOMIALS.iter().enumerate() {
        let (af, bf) = (a as f64, b as f64);
        out[m] = [
            ipow(xi, a) * ipow(eta, b),
            af * ipow(xi, a - 1) * ipow(eta, b),
            bf * ipow(xi, a) * ipow(eta, b - 1),
            af * (af - 1.0) * ipow(xi, a - 2) * ipow(eta, b),
            af * bf * ipow(xi, a - 1) * ipow(eta, b - 1),
            bf * (bf - 1.0) * ipow(xi, a) * ipow(eta, b - 2),
        ];
    }
    out
}

/// Shifted Legendre polynomial of degree 4 on `[0, 1]`.
fn legendre4_unit(t: f64) -> f64 {
    let x = 2.0 * t - 1.0;
    (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0
}

#[derive(Debug, Clone)]
pub struct BellTriangle {
    vertices: [[f64; 2]; 3],
    center: [f64; 2],
    scale: f64,
    area: f64,
    coef: SMatrix<f64, N_MONO, N_BASIS>,
}

impl BellTriangle {
    pub fn new(vertices: [[f64; 2]; 3]) -> Result<Self> {
        let [p0, p1, p2] = vertices;
        let e1 = [p1[0] - p0[0], p1[1] - p0[1]];
        let e2 = [p2[0] - p0[0], p2[1] - p0[1]];
        let twice_area = e1[0] * e2[1] - e1[1] * e2[0];
        let scale = [e1, e2, [p2[0] - p1[0], p2[1] - p1[1]]]
            .iter()
            .map(|e| e[0].hypot(e[1]))
            .fold(0.0f64, f64::max);
        if !(scale > 0.0) || !(twice_area.abs() > 1e-12 * scale * scale) {
            return Err(Error::Geometry(format!(
                "triangle {vertices:?} has (near) zero area"
            )));
        }
        let center = [
            (p0[0] + p1[0] + p2[0]) / 3.0,
            (p0[1] + p1[1] + p2[1]) / 3.0,
        ];
        let local = |p: [f64; 2]| [(p[0] - center[0]) / scale, (p[1] - center[1]) / scale];
        let lv = [local(p0), local(p1), local(p2)];

        let mut a = SMatrix::<f64, N_MONO, N_MONO>::zeros();
        for (v, q) in lv.iter().enumerate() {
            let md = monomial_derivatives(q[0], q[1]);
            for k in 0..N_DERIV {
                for m in 0..N_MONO {
                    a[(6 * v + k, m)] = md[m][k];
                }
            }
        }
        let edge_rule = gauss_unit_interval(5);
        for (e, (ia, ib)) in [(0usize, 1usize), (1, 2), (2, 0)].into_iter().enumerate() {
            let (qa, qb) = (lv[ia], lv[ib]);
            let t = [qb[0] - qa[0], qb[1] - qa[1]];
            let len = t[0].hypot(t[1]);
            let n = [t[1] / len, -t[0] / len];
            for &(s, w) in &edge_rule {
                let md = monomial_derivatives(qa[0] + s * t[0], qa[1] + s * t[1]);
                let weight = w * legendre4_unit(s);
                for m in 0..N_MONO {
                    a[(N_BASIS + e, m)] += weight * (n[0] * md[m][1] + n[1] * md[m][2]);
                }
            }
        }
        let mut rhs = SMatrix::<f64, N_MONO, N_BASIS>::zeros();
        for j in 0..N_BASIS {
            rhs[(j, j)] = 1.0;
        }
        let coef = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Geometry("singular Bell interpolation system".into()))?;
        Ok(BellTriangle {
            vertices,
            center,
            scale,
            area: 0.5 * twice_area.abs(),
            coef,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]; 3] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Barycentric coordinates of `p`.
    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
        let l0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
        let l1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
        [l0, l1, 1.0 - l0 - l1]
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        self.barycentric(p).iter().all(|&l| l >= -tol)
    }

    /// Point on the triangle for reference coordinates `(r, s)`.
    pub fn map_reference(&self, r: f64, s: f64) -> [f64; 2] {
        let [a, b, c] = self.vertices;
        [
            a[0] + r * (b[0] - a[0]) + s * (c[0] - a[0]),
            a[1] + r * (b[1] - a[1]) + s * (c[1] - a[1]),
        ]
    }

    /// Basis values and global derivatives at `p`. Basis `j` belongs to
    /// vertex `j / 6` and derivative slot `j % 6`.
    pub fn eval(&self, p: [f64; 2]) -> BasisValues {
        let xi = (p[0] - self.center[0]) / self.scale;
        let eta = (p[1] - self.center[1]) / self.scale;
        let md = monomial_derivatives(xi, eta);
        let mut out = [[0.0; N_DERIV]; N_BASIS];
        for (j, row) in out.iter_mut().enumerate() {
            let dof_scale = self.scale.powi(DERIV_ORDER[j % N_DERIV]);
            for (d, slot) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (m, mdm) in md.iter().enumerate() {
                    acc += self.coef[(m, j)] * mdm[d];
                }
                *slot = acc * dof_scale / self.scale.powi(DERIV_ORDER[d]);
            }
        }
        out
    }

    /// Interpolate scalar nodal data (6 values per vertex) at `p`.
    pub fn interpolate(&self, dofs: &[f64; N_BASIS], p: [f64; 2]) -> [f64; N_DERIV] {
        let basis = self.eval(p);
        let mut out = [0.0; N_DERIV];
        for (j, b) in basis.iter().enumerate() {
            for d in 0..N_DERIV {
                out[d] += dofs[j] * b[d];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_triangles() -> Vec<[[f64; 2]; 3]> {
        vec![
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            [[0.0, 0.0], [0.4, 0.0], [0.4, 0.4]],
            [[10.0, 5.0], [10.4, 5.4], [10.0, 5.4]],
            [[-2.0, 1.0], [3.0, 0.5], [0.5, 4.0]],
            [[0.0, 0.0], [0.02, 0.001], [0.005, 0.013]],
        ]
    }

    #[test]
    fn rejects_degenerate() {
        assert!(matches!(
            BellTriangle::new([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn kronecker_property() {
        for verts in sample_triangles() {
            let tri = BellTriangle::new(verts).unwrap();
            let scale = tri.scale;
            for (v, p) in verts.iter().enumerate() {
                let vals = tri.eval(*p);
                for (j, row) in vals.iter().enumerate() {
                    for d in 0..N_DERIV {
                        let expect = if j == 6 * v + d { 1.0 } else { 0.0 };
                        // compare in scale-free units
                        let units = scale.powi(DERIV_ORDER[d] - DERIV_ORDER[j % 6]);
                        assert!(
                            (row[d] - expect).abs() * units < 1e-9,
                            "tri {verts:?} vertex {v} basis {j} slot {d}: {}",
                            row[d]
                        );
                    }
                }
            }
        }
    }

    fn poly_dofs(coef: &[f64; 6], p: [f64; 2]) -> [f64; 6] {
        let [a, b, c, d, e, f] = *coef;
        let (x, y) = (p[0], p[1]);
        [
            a + b * x + c * y + d * x * x + e * x * y + f * y * y,
            b + 2.0 * d * x + e * y,
            c + e * x + 2.0 * f * y,
            2.0 * d,
            e,
            2.0 * f,
        ]
    }

    #[test]
    fn reproduces_quadratics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for verts in sample_triangles() {
            let tri = BellTriangle::new(verts).unwrap();
            for _ in 0..5 {
                let coef: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
                let mut dofs = [0.0; N_BASIS];
                for (v, p) in verts.iter().enumerate() {
                    dofs[6 * v..6 * v + 6].copy_from_slice(&poly_dofs(&coef, *p));
                }
                for _ in 0..10 {
                    let (mut r, mut s) = (rng.gen::<f64>(), rng.gen::<f64>());
                    if r + s > 1.0 {
                        r = 1.0 - r;
                        s = 1.0 - s;
                    }
                    let p = tri.map_reference(r, s);
                    let got = tri.interpolate(&dofs, p);
                    let exact = poly_dofs(&coef, p);
                    let norm = exact.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                    for d in 0..N_DERIV {
                        assert!(
                            (got[d] - exact[d]).abs() <= 1e-9 * norm,
                            "slot {d}: {} vs {}",
                            got[d],
                            exact[d]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn reproduces_quartics() {
        // P4 lies inside the Bell space: normal derivatives of quartics are cubic.
        let verts = [[0.3, -0.2], [1.4, 0.1], [0.6, 0.9]];
        let tri = BellTriangle::new(verts).unwrap();
        let f = |p: [f64; 2]| -> [f64; 6] {
            let (x, y) = (p[0], p[1]);
            [
                x.powi(4) - 2.0 * x * x * y * y + 0.5 * y.powi(3) * x,
                4.0 * x.powi(3) - 4.0 * x * y * y + 0.5 * y.powi(3),
                -4.0 * x * x * y + 1.5 * y * y * x,
                12.0 * x * x - 4.0 * y * y,
                -8.0 * x * y + 1.5 * y * y,
                -4.0 * x * x + 3.0 * y * x,
            ]
        };
        let mut dofs = [0.0; N_BASIS];
        for (v, p) in verts.iter().enumerate() {
            dofs[6 * v..6 * v + 6].copy_from_slice(&f(*p));
        }
        let p = tri.map_reference(0.21, 0.33);
        let got = tri.interpolate(&dofs, p);
        let exact = f(p);
        for d in 0..N_DERIV {
            assert!((got[d] - exact[d]).abs() < 1e-9, "slot {d}");
        }
    }

    #[test]
    fn c1_continuity_across_shared_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // shared edge (a, b); c and d on opposite sides
        let a = [0.0, 0.0];
        let b = [0.4, 0.4];
        let c = [0.4, 0.0];
        let d = [0.0, 0.4];
        let left = BellTriangle::new([a, c, b]).unwrap();
        let right = BellTriangle::new([a, b, d]).unwrap();
        let shared: Vec<[f64; 6]> = (0..2)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        let own_l: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let own_r: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let mut dl = [0.0; N_BASIS];
        dl[0..6].copy_from_slice(&shared[0]);
        dl[6..12].copy_from_slice(&own_l);
        dl[12..18].copy_from_slice(&shared[1]);
        let mut dr = [0.0; N_BASIS];
        dr[0..6].copy_from_slice(&shared[0]);
        dr[6..12].copy_from_slice(&shared[1]);
        dr[12..18].copy_from_slice(&own_r);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
        for k in 0..5 {
            let t = (k as f64 + 0.5) / 5.0;
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let vl = left.interpolate(&dl, p);
            let vr = right.interpolate(&dr, p);
            assert!((vl[0] - vr[0]).abs() < 1e-9, "value mismatch at t={t}");
            let nl = n[0] * vl[1] + n[1] * vl[2];
            let nr = n[0] * vr[1] + n[1] * vr[2];
            assert!((nl - nr).abs() < 1e-9, "normal slope mismatch at t={t}");
        }
    }
}
