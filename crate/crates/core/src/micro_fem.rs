//! Classical plane-strain FEM on the pixel RVE.
//!
//! One bilinear quad per raster cell, 2×2 Gauss points, coordinates centered
//! on the RVE centroid. Boundary nodes carry the second-order displacement
//! `u_i = ε̄_ij x_j + ½ G_ijk x_j x_k` with `G_ijk = η̄_kij + η̄_jik − η̄_ijk`,
//! the displacement Hessian whose symmetrized gradient is exactly `η̄`.
//!
//! The unknown is the fluctuation `w` (zero on the boundary) on top of that
//! field, and each phase carries the body force `−div(C : ε̄(x))` that keeps
//! the imposed field in equilibrium on its own. What drives `w` is then the
//! material mismatch alone, and a uniform cell returns the Taylor moment
//! `τ̄_kij = (a²/12) C_ijpq η̄_kpq` exactly.
//!
//! The interior stiffness does not depend on the macro state, so a single
//! factorization serves every probe.

use nalgebra::{SMatrix, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::rve::MaterialGrid;
use crate::skyline::{SkylineFactor, SkylineMatrix};
use crate::voigt::{
    isotropic_c, pack_double_stress, unpack_strain, unpack_strain_gradient,
    IsotropicModuli, Tensor2, Tensor3,
};

type Quad8 = SMatrix<f64, 8, 8>;

const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

#[derive(Debug, Clone)]
pub struct MicroMesh {
    /// Cells per edge.
    pub n: usize,
    /// Physical edge length (mm).
    pub edge_length: f64,
    /// `[matrix, pore]` moduli.
    pub materials: [IsotropicModuli; 2],
    /// Phase per element (0 matrix, 1 pore), same layout as the grid.
    pub phase: Vec<u8>,
}

pub fn build_micro_mesh(grid: &MaterialGrid, matrix: IsotropicModuli, pore: IsotropicModuli) -> MicroMesh {
    MicroMesh {
        n: grid.n,
        edge_length: grid.edge_length,
        materials: [matrix, pore],
        phase: grid.pore.iter().map(|&p| u8::from(p)).collect(),
    }
}

impl MicroMesh {
    pub fn element_count(&self) -> usize {
        self.n * self.n
    }

    pub fn cell_size(&self) -> f64 {
        self.edge_length / self.n as f64
    }

    pub fn volume(&self) -> f64 {
        self.edge_length * self.edge_length
    }

    pub fn node_count(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn node_coords(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.cell_size();
        let half = 0.5 * self.edge_length;
        [i as f64 * h - half, j as f64 * h - half]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    pub fn element_moduli(&self, e: usize) -> &IsotropicModuli {
        &self.materials[self.phase[e] as usize]
    }

    pub fn pore_fraction(&self) -> f64 {
        self.phase.iter().filter(|&&p| p == 1).count() as f64 / self.element_count() as f64
    }

    pub fn centroid(&self) -> [f64; 2] {
        let (mut sx, mut sy) = (0.0, 0.0);
        for j in 0..self.n {
            for i in 0..self.n {
                let a = self.node_coords(i, j);
                let b = self.node_coords(i + 1, j + 1);
                sx += 0.5 * (a[0] + b[0]);
                sy += 0.5 * (a[1] + b[1]);
            }
        }
        let m = self.element_count() as f64;
        [sx / m, sy / m]
    }

    fn element_coords(&self, ci: usize, cj: usize) -> [[f64; 2]; 4] {
        [
            self.node_coords(ci, cj),
            self.node_coords(ci + 1, cj),
            self.node_coords(ci + 1, cj + 1),
            self.node_coords(ci, cj + 1),
        ]
    }

    /// Node ids of element `(ci, cj)` in counter-clockwise order.
    fn element_nodes(&self, ci: usize, cj: usize) -> [usize; 4] {
        [
            self.node_id(ci, cj),
            self.node_id(ci + 1, cj),
            self.node_id(ci + 1, cj + 1),
            self.node_id(ci, cj + 1),
        ]
    }
}

/// Macroscopic strain and strain gradient imposed on the RVE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroStrainState {
    pub eps: Tensor2,
    /// `eta[k][i][j] = η̄_kij` (1/mm).
    pub eta: Tensor3,
}

impl MacroStrainState {
    pub fn zero() -> Self {
        MacroStrainState {
            eps: [[0.0; 2]; 2],
            eta: [[[0.0; 2]; 2]; 2],
        }
    }

    pub fn from_voigt(e: &Vector3<f64>, h: &Vector6<f64>) -> Self {
        MacroStrainState {
            eps: unpack_strain(e),
            eta: unpack_strain_gradient(h),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sym = |a: f64, b: f64| (a - b).abs() <= 1e-14 * a.abs().max(b.abs()).max(1e-300);
        if !sym(self.eps[0][1], self.eps[1][0]) {
            return Err(Error::param("macro strain is not symmetric"));
        }
        for k in 0..2 {
            if !sym(self.eta[k][0][1], self.eta[k][1][0]) {
                return Err(Error::param("macro strain gradient is not symmetric in its last two indices"));
            }
        }
        Ok(())
    }

    /// Prescribed displacement at `x` (centroid-relative).
    pub fn displacement(&self, x: [f64; 2]) -> [f64; 2] {
        let eta = &self.eta;
        let mut u = [0.0; 2];
        for (i, ui) in u.iter_mut().enumerate() {
            for j in 0..2 {
                *ui += self.eps[i][j] * x[j];
                for k in 0..2 {
                    let g = eta[k][i][j] + eta[j][i][k] - eta[i][j][k];
                    *ui += 0.5 * g * x[j] * x[k];
                }
            }
        }
        u
    }

    /// Voigt strain of the imposed field at `x`: `ε_ij = ε̄_ij + η̄_kij x_k`.
    pub fn strain(&self, x: [f64; 2]) -> Vector3<f64> {
        let e = |i: usize, j: usize| self.eps[i][j] + self.eta[0][i][j] * x[0] + self.eta[1][i][j] * x[1];
        Vector3::new(e(0, 0), e(1, 1), 2.0 * e(0, 1))
    }

    /// Body force `−div σ` that equilibrates the imposed field in a phase.
    pub fn body_force(&self, m: &IsotropicModuli) -> [f64; 2] {
        let eta = &self.eta;
        std::array::from_fn(|i| {
            let dilatation = eta[i][0][0] + eta[i][1][1];
            let shear = eta[0][i][0] + eta[1][i][1];
            -(m.lambda * dilatation + 2.0 * m.mu * shear)
        })
    }
}

/// Stiffness parts of a square bilinear element: `K = λ K_λ + μ K_μ`.
fn square_stiffness_parts(h: f64) -> (Quad8, Quad8) {
    let c_lambda = isotropic_c(&IsotropicModuli { lambda: 1.0, mu: 0.0 }).0;
    let c_mu = isotropic_c(&IsotropicModuli { lambda: 0.0, mu: 1.0 }).0;
    let mut kl = Quad8::zeros();
    let mut km = Quad8::zeros();
    for &xi in &GAUSS_2 {
        for &eta in &GAUSS_2 {
            let b = strain_matrix(xi, eta, h);
            let w = 0.25 * h * h;
            kl += b.transpose() * c_lambda * b * w;
            km += b.transpose() * c_mu * b * w;
        }
    }
    (kl, km)
}

/// Reference-coordinate shape functions of the unit bilinear quad.
fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}

fn strain_matrix(xi: f64, eta: f64, h: f64) -> SMatrix<f64, 3, 8> {
    let dxi = [-(1.0 - eta), 1.0 - eta, 1.0 + eta, -(1.0 + eta)];
    let deta = [-(1.0 - xi), -(1.0 + xi), 1.0 + xi, 1.0 - xi];
    let mut b = SMatrix::<f64, 3, 8>::zeros();
    for a in 0..4 {
        let dx = 0.25 * dxi[a] * 2.0 / h;
        let dy = 0.25 * deta[a] * 2.0 / h;
        b[(0, 2 * a)] = dx;
        b[(1, 2 * a + 1)] = dy;
        b[(2, 2 * a)] = dy;
        b[(2, 2 * a + 1)] = dx;
    }
    b
}

/// Micro solution for one macro state.
///
/// Nodal vectors hold 2 entries per node in [`MicroMesh::node_id`] order.
#[derive(Debug, Clone)]
pub struct MicroField {
    pub state: MacroStrainState,
    /// Total displacement: nodal values of the imposed field plus fluctuation.
    pub u: Vec<f64>,
    /// Fluctuation, zero on the boundary.
    pub fluctuation: Vec<f64>,
    /// `‖K_ff w_f − F_f‖ / ‖F_f‖` of the interior system.
    pub relative_residual: f64,
}

/// Assembled and factored interior system of one RVE.
pub struct RveSystem {
    mesh: MicroMesh,
    equation: Vec<usize>,
    parts: (Quad8, Quad8),
    factor: SkylineFactor,
    fingerprint: u64,
    /// Fluctuations of the 3 unit strain modes then the 6 unit gradient modes.
    unit_modes: Vec<MicroField>,
}

impl RveSystem {
    pub fn new(mesh: MicroMesh) -> Result<Self> {
        let n = mesh.n;
        let nn = mesh.node_count();
        let mut equation = vec![usize::MAX; 2 * nn];
        let mut neq = 0;
        for j in 0..=n {
            for i in 0..=n {
                if !mesh.is_boundary(i, j) {
                    let id = mesh.node_id(i, j);
                    equation[2 * id] = neq;
                    equation[2 * id + 1] = neq + 1;
                    neq += 2;
                }
            }
        }
        if neq == 0 {
            return Err(Error::param("RVE mesh has no interior nodes"));
        }
        let mut first: Vec<usize> = (0..neq).collect();
        for cj in 0..n {
            for ci in 0..n {
                let dofs = element_dofs(&mesh.element_nodes(ci, cj));
                if let Some(m) = dofs.iter().map(|&d| equation[d]).filter(|&e| e != usize::MAX).min() {
                    for &d in &dofs {
                        let e = equation[d];
                        if e != usize::MAX {
                            first[e] = first[e].min(m);
                        }
                    }
                }
            }
        }
        let parts = square_stiffness_parts(mesh.cell_size());
        let mut k = SkylineMatrix::from_profile(first);
        for cj in 0..n {
            for ci in 0..n {
                let ke = element_matrix(&parts, mesh.element_moduli(cj * n + ci));
                let dofs = element_dofs(&mesh.element_nodes(ci, cj));
                for (a, &da) in dofs.iter().enumerate() {
                    let ea = equation[da];
                    if ea == usize::MAX {
                        continue;
                    }
                    for (b, &db) in dofs.iter().enumerate() {
                        let eb = equation[db];
                        if eb != usize::MAX && ea <= eb {
                            k.add(ea, eb, ke[(a, b)]);
                        }
                    }
                }
            }
        }
        let fingerprint = k.fingerprint();
        let factor = k.factor()?;
        let mut sys = RveSystem {
            mesh,
            equation,
            parts,
            factor,
            fingerprint,
            unit_modes: Vec::new(),
        };
        sys.unit_modes = (0..9).map(|m| sys.solve(&unit_state(m))).collect::<Result<_>>()?;
        Ok(sys)
    }

    pub fn mesh(&self) -> &MicroMesh {
        &self.mesh
    }

    /// Hash of the reduced stiffness before factorization.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn solve(&self, state: &MacroStrainState) -> Result<MicroField> {
        state.validate()?;
        let mesh = &self.mesh;
        let n = mesh.n;
        let h = mesh.cell_size();
        let neq = self.factor.dim();
        let samples = gauss_table(h);
        // load of the imposed quadratic field plus the phase body force that
        // equilibrates it; only material jumps survive assembly
        let mut load = vec![0.0; neq];
        for cj in 0..n {
            for ci in 0..n {
                let m = mesh.element_moduli(cj * n + ci);
                let c = isotropic_c(m).0;
                let body = state.body_force(m);
                let coords = mesh.element_coords(ci, cj);
                let mut fe = SMatrix::<f64, 8, 1>::zeros();
                for (b, nv) in &samples {
                    let x = interpolate(nv, &coords);
                    let sigma = c * state.strain(x);
                    fe += b.transpose() * sigma;
                    for a in 0..4 {
                        fe[2 * a] -= nv[a] * body[0];
                        fe[2 * a + 1] -= nv[a] * body[1];
                    }
                }
                fe *= 0.25 * h * h;
                for (k, &d) in element_dofs(&mesh.element_nodes(ci, cj)).iter().enumerate() {
                    let e = self.equation[d];
                    if e != usize::MAX {
                        load[e] -= fe[k];
                    }
                }
            }
        }
        let x = self.factor.solve(&load);
        let mut w = vec![0.0; 2 * mesh.node_count()];
        for (dof, &e) in self.equation.iter().enumerate() {
            if e != usize::MAX {
                w[dof] = x[e];
            }
        }

        let mut r = load.iter().map(|v| -v).collect::<Vec<_>>();
        for cj in 0..n {
            for ci in 0..n {
                let ke = element_matrix(&self.parts, mesh.element_moduli(cj * n + ci));
                let dofs = element_dofs(&mesh.element_nodes(ci, cj));
                for (a, &da) in dofs.iter().enumerate() {
                    let ea = self.equation[da];
                    if ea == usize::MAX {
                        continue;
                    }
                    for (b, &db) in dofs.iter().enumerate() {
                        r[ea] += ke[(a, b)] * w[db];
                    }
                }
            }
        }
        let r2: f64 = r.iter().map(|v| v * v).sum();
        let f2: f64 = load.iter().map(|v| v * v).sum();
        let relative_residual = if f2 > 0.0 { (r2 / f2).sqrt() } else { r2.sqrt() };

        let mut u = w.clone();
        for j in 0..=n {
            for i in 0..=n {
                let id = mesh.node_id(i, j);
                let q = state.displacement(mesh.node_coords(i, j));
                u[2 * id] += q[0];
                u[2 * id + 1] += q[1];
            }
        }
        Ok(MicroField {
            state: *state,
            u,
            fluctuation: w,
            relative_residual,
        })
    }

    /// `(σ̄, τ̄)` for one macro state.
    ///
    /// Both are energy conjugates: component `m` is `(1/V) ∫ σ : ε⁽ᵐ⁾ dV`
    /// with `ε⁽ᵐ⁾` the micro strain of unit mode `m`. They reduce to the
    /// volume average and the first moment `(1/V) ∫ σ_ij x_k dV` whenever the
    /// fluctuation vanishes, and make the probed tangent a Gram matrix.
    pub fn response(&self, state: &MacroStrainState) -> Result<(Vector3<f64>, Vector6<f64>)> {
        let field = self.solve(state)?;
        let mesh = &self.mesh;
        let n = mesh.n;
        let h = mesh.cell_size();
        let samples = gauss_table(h);
        let unit: [MacroStrainState; 9] = std::array::from_fn(unit_state);
        let mut acc = [0.0; 9];
        let gather = |w: &[f64], nodes: &[usize; 4]| SMatrix::<f64, 8, 1>::from_fn(|k, _| w[2 * nodes[k / 2] + k % 2]);
        for cj in 0..n {
            for ci in 0..n {
                let c = isotropic_c(mesh.element_moduli(cj * n + ci)).0;
                let nodes = mesh.element_nodes(ci, cj);
                let coords = mesh.element_coords(ci, cj);
                let we = gather(&field.fluctuation, &nodes);
                let wm: [SMatrix<f64, 8, 1>; 9] = std::array::from_fn(|m| gather(&self.unit_modes[m].fluctuation, &nodes));
                for (b, nv) in &samples {
                    let x = interpolate(nv, &coords);
                    let sigma = c * (state.strain(x) + b * we);
                    for m in 0..9 {
                        acc[m] += sigma.dot(&(unit[m].strain(x) + b * wm[m]));
                    }
                }
            }
        }
        let scale = 0.25 * h * h / mesh.volume();
        Ok((
            Vector3::from_fn(|m, _| acc[m] * scale),
            Vector6::from_fn(|m, _| acc[m + 3] * scale),
        ))
    }
}

/// Unit Voigt mode `m`: strains for `m < 3`, gradients (1/mm) after.
fn unit_state(m: usize) -> MacroStrainState {
    let mut e = Vector3::zeros();
    let mut g = Vector6::zeros();
    if m < 3 {
        e[m] = 1.0;
    } else {
        g[m - 3] = 1.0;
    }
    MacroStrainState::from_voigt(&e, &g)
}

fn element_dofs(nodes: &[usize; 4]) -> [usize; 8] {
    std::array::from_fn(|k| 2 * nodes[k / 2] + k % 2)
}

fn element_matrix(parts: &(Quad8, Quad8), m: &IsotropicModuli) -> Quad8 {
    parts.0 * m.lambda + parts.1 * m.mu
}

struct GaussSample {
    stress: Vector3<f64>,
    strain: Vector3<f64>,
    x: [f64; 2],
    weight: f64,
}

fn gauss_table(h: f64) -> Vec<(SMatrix<f64, 3, 8>, [f64; 4])> {
    GAUSS_2
        .iter()
        .flat_map(|&xi| GAUSS_2.iter().map(move |&eta| (strain_matrix(xi, eta, h), shape(xi, eta))))
        .collect()
}

fn interpolate(nv: &[f64; 4], coords: &[[f64; 2]; 4]) -> [f64; 2] {
    let mut x = [0.0; 2];
    for a in 0..4 {
        x[0] += nv[a] * coords[a][0];
        x[1] += nv[a] * coords[a][1];
    }
    x
}

fn for_each_gauss_point(field: &MicroField, mesh: &MicroMesh, mut visit: impl FnMut(&GaussSample)) {
    let n = mesh.n;
    let h = mesh.cell_size();
    let samples = gauss_table(h);
    for cj in 0..n {
        for ci in 0..n {
            let c = isotropic_c(mesh.element_moduli(cj * n + ci)).0;
            let nodes = mesh.element_nodes(ci, cj);
            let coords = mesh.element_coords(ci, cj);
            let we = SMatrix::<f64, 8, 1>::from_fn(|k, _| field.fluctuation[2 * nodes[k / 2] + k % 2]);
            for (b, nv) in &samples {
                let x = interpolate(nv, &coords);
                let strain = field.state.strain(x) + b * we;
                visit(&GaussSample {
                    stress: c * strain,
                    strain,
                    x,
                    weight: 0.25 * h * h,
                });
            }
        }
    }
}

/// `σ̄ = (1/V) ∫ σ dV` as a Voigt stress vector.
pub fn average_stress(field: &MicroField, mesh: &MicroMesh) -> Vector3<f64> {
    let mut acc = Vector3::zeros();
    for_each_gauss_point(field, mesh, |g| acc += g.stress * g.weight);
    acc / mesh.volume()
}

/// First moment `(1/V) ∫ σ_ij x_k dV`, packed as
/// `[τ̄111, τ̄122, τ̄112, τ̄211, τ̄222, τ̄212]`.
pub fn average_moment_stress(field: &MicroField, mesh: &MicroMesh) -> Vector6<f64> {
    let mut tau = [[[0.0; 2]; 2]; 2];
    for_each_gauss_point(field, mesh, |g| {
        let s = g.stress;
        let sigma = [[s[0], s[2]], [s[2], s[1]]];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    tau[k][i][j] += sigma[i][j] * g.x[k] * g.weight;
                }
            }
        }
    });
    pack_double_stress(&tau) / mesh.volume()
}

/// Volume-averaged Voigt strain.
pub fn average_strain(field: &MicroField, mesh: &MicroMesh) -> Vector3<f64> {
    let mut acc = Vector3::zeros();
    for_each_gauss_point(field, mesh, |g| acc += g.strain * g.weight);
    acc / mesh.volume()
}

pub fn solve_rve(mesh: &MicroMesh, state: &MacroStrainState) -> Result<MicroField> {
    RveSystem::new(mesh.clone())?.solve(state)
}
