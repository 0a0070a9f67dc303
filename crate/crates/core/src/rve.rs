//! Seeded random sequential adsorption of equal circles in the periodic
//! unit square and rasterization to a pore/matrix grid.
//!
//! The circle count depends only on `(vf, size_factor)` and the placement
//! only on `(count, seed)`, so the normalized geometry is independent of the
//! pore diameter. Circles are placed one after another from a single
//! ChaCha8 stream, which makes the packing for `n` circles a prefix of the
//! packing for `n + 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_CONSECUTIVE_REJECTIONS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RveSpec {
    /// Pore diameter (mm).
    pub phi: f64,
    /// Target pore volume fraction.
    pub vf: f64,
    /// RVE edge length in pore diameters.
    pub size_factor: f64,
    pub seed: u64,
    /// Pixels per RVE edge.
    pub raster_n: usize,
}

impl RveSpec {
    pub fn new(phi: f64, vf: f64, seed: u64) -> Self {
        RveSpec {
            phi,
            vf,
            size_factor: 10.0,
            seed,
            raster_n: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::param(format!("pore diameter must be positive, got {}", self.phi)));
        }
        if !(self.vf >= 0.0 && self.vf < 0.5) {
            return Err(Error::param(format!("volume fraction must lie in [0, 0.5), got {}", self.vf)));
        }
        if !(self.size_factor >= 4.0 && self.size_factor.is_finite()) {
            return Err(Error::param(format!("size factor must be >= 4, got {}", self.size_factor)));
        }
        if self.raster_n < 50 {
            return Err(Error::param(format!("raster must have >= 50 pixels per edge, got {}", self.raster_n)));
        }
        Ok(())
    }

    /// Physical RVE edge length (mm).
    pub fn edge_length(&self) -> f64 {
        self.size_factor * self.phi
    }

    pub fn circle_count(&self) -> usize {
        circle_count(self.vf, self.size_factor)
    }

    /// Normalized circle radius.
    pub fn radius(&self) -> f64 {
        0.5 / self.size_factor
    }
}

/// `floor(vf · size_factor² · 4/π)`.
pub fn circle_count(vf: f64, size_factor: f64) -> usize {
    (vf * size_factor * size_factor * 4.0 / std::f64::consts::PI).floor().max(0.0) as usize
}

/// Volume-fraction step between consecutive circle counts.
pub fn vf_granularity(size_factor: f64) -> f64 {
    std::f64::consts::PI / (4.0 * size_factor * size_factor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleSet {
    /// Centers in unit-square coordinates.
    pub centers: Vec<[f64; 2]>,
    /// Common normalized radius.
    pub radius: f64,
    pub periodic: bool,
}

impl CircleSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Exact area fraction `n π r²` (no overlaps by construction).
    pub fn area_fraction(&self) -> f64 {
        self.len() as f64 * std::f64::consts::PI * self.radius * self.radius
    }

    pub fn min_periodic_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.centers.iter().enumerate() {
            for b in &self.centers[i + 1..] {
                let d = periodic_distance2(*a, *b).sqrt();
                best = Some(best.map_or(d, |m| m.min(d)));
            }
        }
        best
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let r2 = self.radius * self.radius;
        self.centers.iter().any(|&c| {
            let d2 = if self.periodic {
                periodic_distance2(c, p)
            } else {
                (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)
            };
            d2 < r2
        })
    }
}

#[inline]
fn periodic_distance2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let mut dx = a[0] - b[0];
    let mut dy = a[1] - b[1];
    dx -= dx.round();
    dy -= dy.round();
    dx * dx + dy * dy
}

pub fn rsa_pack(spec: &RveSpec) -> Result<CircleSet> {
    spec.validate()?;
    let n = spec.circle_count();
    let r = spec.radius();
    let min_d2 = 4.0 * r * r;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(n);
    while centers.len() < n {
        let mut rejections = 0u64;
        loop {
            let candidate = [rng.gen::<f64>(), rng.gen::<f64>()];
            if centers.iter().all(|&c| periodic_distance2(c, candidate) >= min_d2) {
                centers.push(candidate);
                break;
            }
            rejections += 1;
            if rejections >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(Error::Packing(format!(
                    "placed {} of {n} circles (vf = {}); {MAX_CONSECUTIVE_REJECTIONS} consecutive rejections",
                    centers.len(),
                    spec.vf
                )));
            }
        }
    }
    Ok(CircleSet {
        centers,
        radius: r,
        periodic: true,
    })
}

/// Pixel grid of the RVE; cell `(ix, iy)` is stored at `iy · n + ix` with
/// `iy` counted from the bottom edge.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialGrid {
    pub n: usize,
    /// Physical edge length (mm).
    pub edge_length: f64,
    pub pore: Vec<bool>,
}

impl MaterialGrid {
    pub fn is_pore(&self, ix: usize, iy: usize) -> bool {
        self.pore[iy * self.n + ix]
    }

    pub fn pore_count(&self) -> usize {
        self.pore.iter().filter(|&&p| p).count()
    }

    pub fn pore_fraction(&self) -> f64 {
        self.pore_count() as f64 / (self.n * self.n) as f64
    }
}

/// A cell is pore iff its center lies inside a circle or a periodic image.
pub fn rasterize(circles: &CircleSet, raster_n: usize, edge_length: f64) -> MaterialGrid {
    let n = raster_n;
    let mut pore = vec![false; n * n];
    for iy in 0..n {
        let y = (iy as f64 + 0.5) / n as f64;
        for ix in 0..n {
            let x = (ix as f64 + 0.5) / n as f64;
            pore[iy * n + ix] = circles.contains([x, y]);
        }
    }
    MaterialGrid {
        n,
        edge_length,
        pore,
    }
}

pub fn generate(spec: &RveSpec) -> Result<(CircleSet, MaterialGrid)> {
    let circles = rsa_pack(spec)?;
    let grid = rasterize(&circles, spec.raster_n, spec.edge_length());
    Ok((circles, grid))
}

/// Binary PGM (P5): pore = 0, matrix = 255, top row first.
pub fn export_pgm(grid: &MaterialGrid) -> Vec<u8> {
    let n = grid.n;
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.reserve(n * n);
    for iy in (0..n).rev() {
        for ix in 0..n {
            out.push(if grid.is_pore(ix, iy) { 0 } else { 255 });
        }
    }
    out
}
