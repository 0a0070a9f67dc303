//! Classical plane-strain cantilever with 9-node Lagrange quadrilaterals.
//! Independent of the C1 element: different basis, different quadrature,
//! classical clamp (u = v = 0 only) and a nodal point load.

use microscale_core::skyline::SkylineMatrix;

pub struct Q9Cantilever {
    pub length: f64,
    pub depth: f64,
    pub nx: usize,
    pub ny: usize,
    pub lambda: f64,
    pub mu: f64,
    /// Downward force at mid-depth of the free end.
    pub load: f64,
}

fn lagrange3(t: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)],
        [t - 0.5, -2.0 * t, t + 0.5],
    )
}

impl Q9Cantilever {
    /// Vertical displacement of the top corner of the free end.
    pub fn tip_deflection(&self) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let (mx, my) = (2 * nx + 1, 2 * ny + 1);
        let node = |i: usize, j: usize| i * my + j;
        let hx = self.length / nx as f64;
        let hy = self.depth / ny as f64;
        let c = [
            [self.lambda + 2.0 * self.mu, self.lambda, 0.0],
            [self.lambda, self.lambda + 2.0 * self.mu, 0.0],
            [0.0, 0.0, self.mu],
        ];
        // Element stiffness on a rectangle hx × hy (identical for all cells).
        let g = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
        let w = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut ke = vec![[0.0f64; 18]; 18];
        for (a, &xa) in g.iter().enumerate() {
            for (b, &yb) in g.iter().enumerate() {
                let (nxv, dnx) = lagrange3(xa);
                let (nyv, dny) = lagrange3(yb);
                let mut bmat = [[0.0f64; 18]; 3];
                for p in 0..3 {
                    for q in 0..3 {
                        let k = 3 * p + q;
                        let dx = dnx[p] * nyv[q] * 2.0 / hx;
                        let dy = nxv[p] * dny[q] * 2.0 / hy;
                        bmat[0][2 * k] = dx;
                        bmat[1][2 * k + 1] = dy;
                        bmat[2][2 * k] = dy;
                        bmat[2][2 * k + 1] = dx;
                    }
                }
                let wt = w[a] * w[b] * hx * hy / 4.0;
                for i in 0..18 {
                    for j in 0..18 {
                        let mut s = 0.0;
                        for r in 0..3 {
                            for t in 0..3 {
                                s += bmat[r][i] * c[r][t] * bmat[t][j];
                            }
                        }
                        ke[i][j] += wt * s;
                    }
                }
            }
        }
        let ndof = 2 * mx * my;
        let mut eq = vec![usize::MAX; ndof];
        let mut neq = 0;
        for n in 0..mx * my {
            let clamped = n < my;
            for comp in 0..2 {
                if !clamped {
                    eq[2 * n + comp] = neq;
                    neq += 1;
                }
            }
        }
        let elem_dofs = |ci: usize, cj: usize| -> [usize; 18] {
            let mut d = [0; 18];
            for p in 0..3 {
                for q in 0..3 {
                    let n = node(2 * ci + p, 2 * cj + q);
                    d[2 * (3 * p + q)] = 2 * n;
                    d[2 * (3 * p + q) + 1] = 2 * n + 1;
                }
            }
            d
        };
        let mut first: Vec<usize> = (0..neq).collect();
        for ci in 0..nx {
            for cj in 0..ny {
                let d = elem_dofs(ci, cj);
                let m = d.iter().map(|&x| eq[x]).filter(|&e| e != usize::MAX).min().unwrap();
                for &x in &d {
                    if eq[x] != usize::MAX {
                        first[eq[x]] = first[eq[x]].min(m);
                    }
                }
            }
        }
        let mut k = SkylineMatrix::from_profile(first);
        for ci in 0..nx {
            for cj in 0..ny {
                let d = elem_dofs(ci, cj);
                for i in 0..18 {
                    for j in 0..18 {
                        let (ei, ej) = (eq[d[i]], eq[d[j]]);
                        if ei != usize::MAX && ej != usize::MAX && ei <= ej {
                            k.add(ei, ej, ke[i][j]);
                        }
                    }
                }
            }
        }
        let mut f = vec![0.0; neq];
        f[eq[2 * node(2 * nx, ny) + 1]] = -self.load;
        let u = k.factor().expect("classical system is SPD").solve(&f);
        u[eq[2 * node(2 * nx, 2 * ny) + 1]]
    }
}
