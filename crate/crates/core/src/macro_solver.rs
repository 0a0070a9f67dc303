//! Plane-strain gradient-elasticity solver on a structured cantilever mesh
//! of Bell triangles.
//!
//! Every node carries 12 DOFs, `(c, c,x, c,y, c,xx, c,xy, c,yy)` for
//! `c ∈ {u, v}`, all in global coordinates. The element stiffness is
//! `∫ Bεᵀ C Bε + Bηᵀ D Bη dA` with the Voigt conventions of [`crate::voigt`].

use std::collections::{BTreeMap, HashMap};

use nalgebra::SMatrix;

use crate::bell::{BellTriangle, N_BASIS, N_DERIV};
use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::quadrature::element_rule;
use crate::skyline::SkylineMatrix;
use crate::voigt::{CMatrix, DMatrix};

pub const DOFS_PER_NODE: usize = 12;
pub const ELEMENT_DOFS: usize = 36;

pub type ElementMatrix = SMatrix<f64, ELEMENT_DOFS, ELEMENT_DOFS>;

/// Derivative slot inside a component block.
pub mod slot {
    pub const VALUE: usize = 0;
    pub const DX: usize = 1;
    pub const DY: usize = 2;
    pub const DXX: usize = 3;
    pub const DXY: usize = 4;
    pub const DYY: usize = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U = 0,
    V = 1,
}

#[inline]
pub fn dof_index(node: usize, component: Component, slot: usize) -> usize {
    DOFS_PER_NODE * node + N_DERIV * component as usize + slot
}

/// Structured grid of `nx × ny` cells on `[0, L] × [0, H]`, each cell split
/// along its lower-left to upper-right diagonal. Nodes are numbered column
/// by column (`id = i·(ny+1) + j`), which keeps the stiffness band narrow.
#[derive(Debug, Clone)]
pub struct MacroMesh {
    pub length: f64,
    pub depth: f64,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

pub fn build_cantilever(length: f64, depth: f64, nx: usize, ny: usize) -> Result<MacroMesh> {
    if !(length > 0.0 && depth > 0.0) {
        return Err(Error::param(format!(
            "beam dimensions must be positive, got L={length}, H={depth}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::param("grid counts must be at least 1"));
    }
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            nodes.push([
                length * i as f64 / nx as f64,
                depth * j as f64 / ny as f64,
            ]);
        }
    }
    let id = |i: usize, j: usize| i * (ny + 1) + j;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Ok(MacroMesh {
        length,
        depth,
        nx,
        ny,
        nodes,
        triangles,
    })
}

impl MacroMesh {
    pub fn node_id(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    pub fn dof_count(&self) -> usize {
        DOFS_PER_NODE * self.nodes.len()
    }

    pub fn triangle_vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Top-edge node ids ordered by increasing x.
    pub fn top_nodes(&self) -> Vec<usize> {
        (0..=self.nx).map(|i| self.node_id(i, self.ny)).collect()
    }

    pub fn left_nodes(&self) -> Vec<usize> {
        (0..=self.ny).map(|j| self.node_id(0, j)).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut ids = Vec::new();
        for i in 0..=self.nx {
            for j in 0..=self.ny {
                if i == 0 || j == 0 || i == self.nx || j == self.ny {
                    ids.push(self.node_id(i, j));
                }
            }
        }
        ids
    }

    /// Node within `tol` of `p`, if any.
    pub fn node_at(&self, p: [f64; 2], tol: f64) -> Option<usize> {
        let dx = self.length / self.nx as f64;
        let dy = self.depth / self.ny as f64;
        let i = (p[0] / dx).round();
        let j = (p[1] / dy).round();
        if i < 0.0 || j < 0.0 || i > self.nx as f64 || j > self.ny as f64 {
            return None;
        }
        let id = self.node_id(i as usize, j as usize);
        let q = self.nodes[id];
        ((q[0] - p[0]).hypot(q[1] - p[1]) <= tol).then_some(id)
    }

    /// Index of a triangle containing `p` (boundary points included).
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let dx = self.length / self.nx as f64;
        let dy = self.depth / self.ny as f64;
        let tol = 1e-10;
        if p[0] < -tol * self.length
            || p[1] < -tol * self.depth
            || p[0] > self.length * (1.0 + tol)
            || p[1] > self.depth * (1.0 + tol)
        {
            return None;
        }
        let ci = ((p[0] / dx).floor().max(0.0) as usize).min(self.nx - 1);
        let cj = ((p[1] / dy).floor().max(0.0) as usize).min(self.ny - 1);
        let first = 2 * (ci * self.ny + cj);
        (first..first + 2).find(|&t| {
            let [a, b, c] = self.triangle_vertices(t);
            barycentric_inside([a, b, c], p, tol)
        })
    }
}

fn barycentric_inside(v: [[f64; 2]; 3], p: [f64; 2], tol: f64) -> bool {
    let [a, b, c] = v;
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let l0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    l0 >= -tol && l1 >= -tol && 1.0 - l0 - l1 >= -tol
}

/// Where the tip load of the cantilever is applied on the free end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadPolicy {
    #[default]
    MidDepth,
    TopCorner,
    BottomCorner,
}

impl LoadPolicy {
    pub fn location(self, length: f64, depth: f64) -> [f64; 2] {
        match self {
            LoadPolicy::MidDepth => [length, 0.5 * depth],
            LoadPolicy::TopCorner => [length, depth],
            LoadPolicy::BottomCorner => [length, 0.0],
        }
    }
}

/// Concentrated force (kN per unit thickness) at an arbitrary point,
/// distributed with the element basis so it need not sit on a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLoad {
    pub at: [f64; 2],
    pub component: Component,
    pub magnitude: f64,
}

/// Body force is identically zero.
#[derive(Debug, Clone)]
pub struct MacroProblem {
    pub mesh: MacroMesh,
    pub c: CMatrix,
    pub d: DMatrix,
    /// Prescribed DOF values, keyed by global DOF index.
    pub essential: BTreeMap<usize, f64>,
    pub loads: Vec<PointLoad>,
}

/// Clamp of the `x = 0` edge: for both components fix the value, the first
/// derivatives and the mixed/tangential second derivatives; `c,xx` is left
/// free because the edge data do not determine it.
pub fn clamped_left_edge(mesh: &MacroMesh) -> BTreeMap<usize, f64> {
    let mut fixed = BTreeMap::new();
    for node in mesh.left_nodes() {
        for comp in [Component::U, Component::V] {
            for s in [slot::VALUE, slot::DX, slot::DY, slot::DXY, slot::DYY] {
                fixed.insert(dof_index(node, comp, s), 0.0);
            }
        }
    }
    fixed
}

impl MacroProblem {
    pub fn cantilever(mesh: MacroMesh, c: CMatrix, d: DMatrix, load: PointLoad) -> Result<Self> {
        let essential = clamped_left_edge(&mesh);
        let problem = MacroProblem {
            mesh,
            c,
            d,
            essential,
            loads: vec![load],
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.essential.is_empty() {
            return Err(Error::param("no essential boundary conditions"));
        }
        let n = self.mesh.dof_count();
        if let Some((&dof, _)) = self.essential.iter().find(|(&d, _)| d >= n) {
            return Err(Error::param(format!("prescribed dof {dof} out of range")));
        }
        for load in &self.loads {
            if self.mesh.locate(load.at).is_none() {
                return Err(Error::param(format!("load point {:?} outside the mesh", load.at)));
            }
        }
        Ok(())
    }
}

/// Strain (3×36) and strain-gradient (6×36) operators at one point.
pub fn strain_operators(
    basis: &[[f64; N_DERIV]; N_BASIS],
) -> (SMatrix<f64, 3, ELEMENT_DOFS>, SMatrix<f64, 6, ELEMENT_DOFS>) {
    let mut be = SMatrix::<f64, 3, ELEMENT_DOFS>::zeros();
    let mut bh = SMatrix::<f64, 6, ELEMENT_DOFS>::zeros();
    for (j, n) in basis.iter().enumerate() {
        let (vertex, k) = (j / N_DERIV, j % N_DERIV);
        let cu = DOFS_PER_NODE * vertex + k;
        let cv = cu + N_DERIV;
        let (nx, ny, nxx, nxy, nyy) = (n[1], n[2], n[3], n[4], n[5]);
        // e = [u,x, v,y, u,y + v,x]
        be[(0, cu)] = nx;
        be[(2, cu)] = ny;
        be[(1, cv)] = ny;
        be[(2, cv)] = nx;
        // h = [u,xx, v,xy, u,xy + v,xx, u,xy, v,yy, u,yy + v,xy]
        bh[(0, cu)] = nxx;
        bh[(2, cu)] = nxy;
        bh[(3, cu)] = nxy;
        bh[(5, cu)] = nyy;
        bh[(1, cv)] = nxy;
        bh[(2, cv)] = nxx;
        bh[(4, cv)] = nyy;
        bh[(5, cv)] = nxy;
    }
    (be, bh)
}

pub fn element_stiffness(tri: &BellTriangle, c: &CMatrix, d: &DMatrix) -> ElementMatrix {
    let mut k = ElementMatrix::zeros();
    let jac = 2.0 * tri.area();
    for q in element_rule() {
        let p = tri.map_reference(q.r, q.s);
        let basis = tri.eval(p);
        let (be, bh) = strain_operators(&basis);
        let w = q.weight * jac;
        let cb = c.0 * be;
        let db = d.0 * bh;
        k += (be.transpose() * cb + bh.transpose() * db) * w;
    }
    // exact symmetry; quadrature round-off only
    let sym = (k + k.transpose()) * 0.5;
    sym
}

/// Solved DOF vector plus solve diagnostics.
#[derive(Debug, Clone)]
pub struct MacroField {
    pub dofs: Vec<f64>,
    /// `‖K u − F‖ / ‖F‖` over the free equations.
    pub relative_residual: f64,
    /// `½ uᵀ K u` over the whole mesh.
    pub strain_energy: f64,
    /// `½ Fᵀ u` for the applied point loads.
    pub load_work: f64,
}

impl MacroField {
    pub fn node_dofs(&self, node: usize) -> &[f64] {
        &self.dofs[DOFS_PER_NODE * node..DOFS_PER_NODE * (node + 1)]
    }

    pub fn displacement(&self, node: usize) -> [f64; 2] {
        let d = self.node_dofs(node);
        [d[0], d[N_DERIV]]
    }

    pub fn is_finite(&self) -> bool {
        self.dofs.iter().all(|v| v.is_finite())
    }

    /// `u` and `v` with derivatives (slot order of [`slot`]) at any point.
    pub fn evaluate(&self, mesh: &MacroMesh, p: [f64; 2]) -> Result<[[f64; N_DERIV]; 2]> {
        let t = mesh
            .locate(p)
            .ok_or_else(|| Error::param(format!("point {p:?} outside the mesh")))?;
        let tri = BellTriangle::new(mesh.triangle_vertices(t))?;
        let conn = mesh.triangles[t];
        let mut out = [[0.0; N_DERIV]; 2];
        for (c, slot_out) in out.iter_mut().enumerate() {
            let mut local = [0.0; N_BASIS];
            for (a, &node) in conn.iter().enumerate() {
                let base = DOFS_PER_NODE * node + N_DERIV * c;
                local[N_DERIV * a..N_DERIV * (a + 1)].copy_from_slice(&self.dofs[base..base + N_DERIV]);
            }
            *slot_out = tri.interpolate(&local, p);
        }
        Ok(out)
    }

    /// Vertical displacement at `p`; exact nodal value when `p` is a node.
    pub fn vertical_at(&self, mesh: &MacroMesh, p: [f64; 2]) -> Result<f64> {
        let tol = 1e-9 * mesh.length.max(mesh.depth);
        match mesh.node_at(p, tol) {
            Some(node) => Ok(self.displacement(node)[1]),
            None => Ok(self.evaluate(mesh, p)?[1][0]),
        }
    }
}

/// Element matrices memoized on translation-invariant geometry; structured
/// meshes have only two distinct triangle shapes.
struct ElementCache<'a> {
    c: &'a CMatrix,
    d: &'a DMatrix,
    tol: f64,
    map: HashMap<[i64; 4], ElementMatrix>,
}

impl<'a> ElementCache<'a> {
    fn new(mesh: &MacroMesh, c: &'a CMatrix, d: &'a DMatrix) -> Self {
        ElementCache {
            c,
            d,
            tol: 1e-10 * mesh.length.max(mesh.depth),
            map: HashMap::new(),
        }
    }

    fn get(&mut self, verts: [[f64; 2]; 3]) -> Result<&ElementMatrix> {
        let [a, b, c] = verts;
        let q = |v: f64| (v / self.tol).round() as i64;
        let key = [q(b[0] - a[0]), q(b[1] - a[1]), q(c[0] - a[0]), q(c[1] - a[1])];
        if !self.map.contains_key(&key) {
            let tri = BellTriangle::new(verts)?;
            let k = element_stiffness(&tri, self.c, self.d);
            self.map.insert(key, k);
        }
        Ok(&self.map[&key])
    }
}

fn element_dofs(conn: &[usize; 3]) -> [usize; ELEMENT_DOFS] {
    std::array::from_fn(|e| DOFS_PER_NODE * conn[e / DOFS_PER_NODE] + e % DOFS_PER_NODE)
}

/// Consistent nodal forces of the point loads.
fn load_vector(problem: &MacroProblem) -> Result<Vec<f64>> {
    let mesh = &problem.mesh;
    let mut f = vec![0.0; mesh.dof_count()];
    for load in &problem.loads {
        let t = mesh
            .locate(load.at)
            .ok_or_else(|| Error::param(format!("load point {:?} outside the mesh", load.at)))?;
        let tri = BellTriangle::new(mesh.triangle_vertices(t))?;
        let basis = tri.eval(load.at);
        for (a, &node) in mesh.triangles[t].iter().enumerate() {
            for k in 0..N_DERIV {
                f[dof_index(node, load.component, k)] += load.magnitude * basis[N_DERIV * a + k][0];
            }
        }
    }
    Ok(f)
}

pub fn assemble_and_solve(problem: &MacroProblem) -> Result<MacroField> {
    problem.validate()?;
    let mesh = &problem.mesh;
    let ndof = mesh.dof_count();

    let mut equation = vec![usize::MAX; ndof];
    let mut free_dofs = Vec::with_capacity(ndof);
    for dof in 0..ndof {
        if !problem.essential.contains_key(&dof) {
            equation[dof] = free_dofs.len();
            free_dofs.push(dof);
        }
    }
    let neq = free_dofs.len();

    let mut first_row: Vec<usize> = (0..neq).collect();
    for conn in &mesh.triangles {
        let dofs = element_dofs(conn);
        let min_eq = dofs
            .iter()
            .map(|&d| equation[d])
            .filter(|&e| e != usize::MAX)
            .min();
        if let Some(m) = min_eq {
            for &d in &dofs {
                let e = equation[d];
                if e != usize::MAX && m < first_row[e] {
                    first_row[e] = m;
                }
            }
        }
    }

    let mut cache = ElementCache::new(mesh, &problem.c, &problem.d);
    let mut k = SkylineMatrix::from_profile(first_row);
    let loads = load_vector(problem)?;
    let mut rhs: Vec<f64> = free_dofs.iter().map(|&d| loads[d]).collect();
    for (t, conn) in mesh.triangles.iter().enumerate() {
        let ke = cache.get(mesh.triangle_vertices(t))?;
        let dofs = element_dofs(conn);
        for (a, &da) in dofs.iter().enumerate() {
            let ea = equation[da];
            if ea == usize::MAX {
                continue;
            }
            for (b, &db) in dofs.iter().enumerate() {
                let eb = equation[db];
                if eb == usize::MAX {
                    let ub = problem.essential[&db];
                    if ub != 0.0 {
                        rhs[ea] -= ke[(a, b)] * ub;
                    }
                } else if ea <= eb {
                    k.add(ea, eb, ke[(a, b)]);
                }
            }
        }
    }

    let factor = k.factor().map_err(|e| match e {
        Error::Solve { equation, pivot, .. } => Error::Solve {
            equation,
            dof: Some(free_dofs[equation]),
            pivot,
        },
        other => other,
    })?;
    let mut solution = factor.solve(&rhs);

    let mut dofs = vec![0.0; ndof];
    for (&dof, &value) in &problem.essential {
        dofs[dof] = value;
    }
    let lifted2: f64 = rhs.iter().map(|v| v * v).sum();
    let f2: f64 = free_dofs.iter().map(|&d| loads[d] * loads[d]).sum();
    let scale = f2.max(lifted2);
    let mut ku;
    let mut relative_residual = f64::INFINITY;
    let mut refinements = 0;
    loop {
        for (e, &dof) in free_dofs.iter().enumerate() {
            dofs[dof] = solution[e];
        }
        ku = element_product(mesh, &mut cache, &dofs)?;
        let residual: Vec<f64> = free_dofs.iter().map(|&d| loads[d] - ku[d]).collect();
        let res2: f64 = residual.iter().map(|r| r * r).sum();
        let previous = relative_residual;
        relative_residual = if scale > 0.0 { (res2 / scale).sqrt() } else { res2.sqrt() };
        // iterative refinement against round-off in the factorization,
        // until it stops paying off
        if relative_residual <= 1e-13 || refinements == 3 || relative_residual > 0.5 * previous {
            break;
        }
        let correction = factor.solve(&residual);
        for (x, dx) in solution.iter_mut().zip(&correction) {
            *x += dx;
        }
        refinements += 1;
    }
    let strain_energy = 0.5 * ku.iter().zip(&dofs).map(|(a, b)| a * b).sum::<f64>();
    let load_work = 0.5 * loads.iter().zip(&dofs).map(|(a, b)| a * b).sum::<f64>();

    let field = MacroField {
        dofs,
        relative_residual,
        strain_energy,
        load_work,
    };
    if !field.is_finite() {
        return Err(Error::Solve {
            equation: 0,
            dof: None,
            pivot: f64::NAN,
        });
    }
    Ok(field)
}

/// `K u` accumulated element by element over all DOFs, with error-free
/// product and sum transformations so the residual is not swamped by
/// cancellation.
fn element_product(mesh: &MacroMesh, cache: &mut ElementCache, dofs: &[f64]) -> Result<Vec<f64>> {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the feature was detected at runtime
            return unsafe { element_product_fma(mesh, cache, dofs) };
        }
    }
    element_product_generic(mesh, cache, dofs)
}

// `mul_add` is correctly rounded on both paths; only its speed differs.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "fma")]
unsafe fn element_product_fma(mesh: &MacroMesh, cache: &mut ElementCache, dofs: &[f64]) -> Result<Vec<f64>> {
    element_product_generic(mesh, cache, dofs)
}

#[inline(always)]
fn element_product_generic(mesh: &MacroMesh, cache: &mut ElementCache, dofs: &[f64]) -> Result<Vec<f64>> {
    let mut hi = vec![0.0; dofs.len()];
    let mut lo = vec![0.0; dofs.len()];
    for (t, conn) in mesh.triangles.iter().enumerate() {
        let ke = cache.get(mesh.triangle_vertices(t))?;
        let ed = element_dofs(conn);
        for (i, &di) in ed.iter().enumerate() {
            for (j, &dj) in ed.iter().enumerate() {
                let a = ke[(i, j)];
                let b = dofs[dj];
                let p = a * b;
                let perr = a.mul_add(b, -p);
                let s = hi[di] + p;
                let bp = s - hi[di];
                let serr = (hi[di] - (s - bp)) + (p - bp);
                hi[di] = s;
                lo[di] += serr + perr;
            }
        }
    }
    Ok(hi.iter().zip(&lo).map(|(h, l)| h + l).collect())
}

/// The sampling operator: vertical displacement at every top-edge node,
/// ordered by increasing x.
pub fn sample_top_surface(field: &MacroField, mesh: &MacroMesh) -> MeasurementSet {
    let nodes = mesh.top_nodes();
    let points = nodes.iter().map(|&n| mesh.nodes[n]).collect();
    let values = nodes.iter().map(|&n| field.displacement(n)[1]).collect();
    MeasurementSet {
        points,
        values,
        noise_level: 0.0,
        noise_seed: None,
    }
}

/// Geometry, mesh density and loading of the cantilever benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct CantileverSetup {
    pub length: f64,
    pub depth: f64,
    pub nx: usize,
    pub ny: usize,
    /// Downward tip force (kN per unit thickness).
    pub load: f64,
    pub load_policy: LoadPolicy,
}

impl Default for CantileverSetup {
    /// L/H = 3 with H = 10 mm, 75×25 cells, 1 kN at mid-depth of the free end.
    fn default() -> Self {
        CantileverSetup {
            length: 30.0,
            depth: 10.0,
            nx: 75,
            ny: 25,
            load: 1.0,
            load_policy: LoadPolicy::MidDepth,
        }
    }
}

impl CantileverSetup {
    pub fn mesh(&self) -> Result<MacroMesh> {
        build_cantilever(self.length, self.depth, self.nx, self.ny)
    }

    pub fn problem(&self, c: CMatrix, d: DMatrix) -> Result<MacroProblem> {
        let load = PointLoad {
            at: self.load_policy.location(self.length, self.depth),
            component: Component::V,
            magnitude: -self.load,
        };
        MacroProblem::cantilever(self.mesh()?, c, d, load)
    }

    pub fn solve(&self, c: CMatrix, d: DMatrix) -> Result<(MacroMesh, MacroField)> {
        let problem = self.problem(c, d)?;
        let field = assemble_and_solve(&problem)?;
        Ok((problem.mesh, field))
    }
}

/// Vertical displacement of the top corner of the free end.
pub fn tip_deflection(mesh: &MacroMesh, field: &MacroField) -> f64 {
    field.displacement(mesh.node_id(mesh.nx, mesh.ny))[1]
}
