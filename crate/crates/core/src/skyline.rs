//! Symmetric skyline (profile) storage with an in-place LDLᵀ factorization.
//!
//! Column `j` stores the upper-triangle entries from its first nonzero row
//! down to the diagonal. With a banded node numbering the profile equals the
//! band, which is what the structured meshes in this crate produce.

use std::hash::{DefaultHasher, Hasher};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    first_row: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl SkylineMatrix {
    /// `first_row[j]` is the smallest row index coupled to column `j`
    /// (must be `<= j`).
    pub fn from_profile(first_row: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first_row.len() + 1);
        let mut total = 0;
        for (j, &m) in first_row.iter().enumerate() {
            debug_assert!(m <= j);
            start.push(total);
            total += j - m + 1;
        }
        start.push(total);
        SkylineMatrix {
            first_row,
            start,
            values: vec![0.0; total],
        }
    }

    pub fn dim(&self) -> usize {
        self.first_row.len()
    }

    pub fn stored_entries(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn column(&self, j: usize) -> &[f64] {
        &self.values[self.start[j]..self.start[j + 1]]
    }

    /// Adds `v` to entry `(i, j)`; only the upper triangle is stored so the
    /// pair is reordered.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let m = self.first_row[c];
        debug_assert!(r >= m, "entry ({r}, {c}) outside profile");
        self.values[self.start[c] + r - m] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let m = self.first_row[c];
        if r < m {
            0.0
        } else {
            self.values[self.start[c] + r - m]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for j in 0..n {
            let m = self.first_row[j];
            let col = self.column(j);
            let diag = col[col.len() - 1];
            y[j] += diag * x[j];
            for (k, &a) in col[..col.len() - 1].iter().enumerate() {
                let i = m + k;
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
        y
    }

    /// Hash of the profile and the bit patterns of every stored value.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for &m in &self.first_row {
            h.write_usize(m);
        }
        for &v in &self.values {
            h.write_u64(v.to_bits());
        }
        h.finish()
    }

    /// Crout LDLᵀ. Fails on the first non-positive pivot, so success also
    /// certifies positive definiteness.
    ///
    /// Columns are processed in panels of [`PANEL`] so each loaded entry of
    /// `L` updates every column of the panel.
    pub fn factor(mut self) -> Result<SkylineFactor> {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the feature was detected at runtime
                let diag = unsafe { factor_avx512(&mut self) }?;
                return Ok(SkylineFactor { lower: self, diag });
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the feature was detected at runtime
                let diag = unsafe { factor_avx2(&mut self) }?;
                return Ok(SkylineFactor { lower: self, diag });
            }
        }
        let diag = factor_columns(&mut self)?;
        Ok(SkylineFactor { lower: self, diag })
    }
}

// Same code compiled for wider vectors; no operation is reordered or fused,
// so every path returns identical bits.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn factor_avx512(a: &mut SkylineMatrix) -> Result<Vec<f64>> {
    factor_columns(a)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn factor_avx2(a: &mut SkylineMatrix) -> Result<Vec<f64>> {
    factor_columns(a)
}

#[inline(always)]
fn factor_columns(a: &mut SkylineMatrix) -> Result<Vec<f64>> {
    let n = a.dim();
    let mut diag = vec![0.0; n];
    let pivot_floor = {
        let max_diag = (0..n)
            .map(|j| a.values[a.start[j + 1] - 1].abs())
            .fold(0.0f64, f64::max);
        max_diag * 1e-15
    };
    let mut panel: Vec<f64> = Vec::new();
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + PANEL).min(n);
        let m = (j0..j1).map(|j| a.first_row[j]).min().unwrap_or(j0);
        panel.clear();
        panel.resize((j1 - m) * PANEL, 0.0);
        for (c, j) in (j0..j1).enumerate() {
            let (mj, sj) = (a.first_row[j], a.start[j]);
            for (r, &v) in a.values[sj..sj + j + 1 - mj].iter().enumerate() {
                panel[(mj + r - m) * PANEL + c] = v;
            }
        }
        for i in m..j1 {
            let first_col = if i >= j0 {
                // column i is complete up to its diagonal: turn g into l and pivot
                let c = i - j0;
                let mut d = panel[(i - m) * PANEL + c];
                for k in a.first_row[i]..i {
                    let g = panel[(k - m) * PANEL + c];
                    let l = g / diag[k];
                    d -= l * g;
                    panel[(k - m) * PANEL + c] = l;
                }
                if !(d > pivot_floor) || !d.is_finite() {
                    return Err(Error::Solve {
                        equation: i,
                        dof: None,
                        pivot: d,
                    });
                }
                diag[i] = d;
                panel[(i - m) * PANEL + c] = d;
                c + 1
            } else {
                0
            };
            if first_col >= j1 - j0 {
                continue;
            }
            let lo = a.first_row[i].max(m);
            if lo >= i {
                continue;
            }
            // g_ic -= Σ_k l_ki g_kc over the panel columns right of i
            let mut acc = [0.0f64; PANEL];
            if i < j0 {
                let (mi, si) = (a.first_row[i], a.start[i]);
                let lcol = &a.values[si + lo - mi..si + i - mi];
                for (t, &l) in lcol.iter().enumerate() {
                    let row = &panel[(lo - m + t) * PANEL..(lo - m + t + 1) * PANEL];
                    for c in 0..PANEL {
                        acc[c] += l * row[c];
                    }
                }
            } else {
                let ci = i - j0;
                for k in lo..i {
                    let row = &panel[(k - m) * PANEL..(k - m + 1) * PANEL];
                    let l = row[ci];
                    for c in 0..PANEL {
                        acc[c] += l * row[c];
                    }
                }
            }
            let row = &mut panel[(i - m) * PANEL..(i - m + 1) * PANEL];
            for c in first_col..j1 - j0 {
                row[c] -= acc[c];
            }
        }
        for (c, j) in (j0..j1).enumerate() {
            let (mj, sj) = (a.first_row[j], a.start[j]);
            for (r, v) in a.values[sj..sj + j + 1 - mj].iter_mut().enumerate() {
                *v = panel[(mj + r - m) * PANEL + c];
            }
        }
        j0 = j1;
    }
    Ok(diag)
}

/// Columns factored together.
const PANEL: usize = 16;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

/// Factored matrix; immutable and shareable for repeated solves.
#[derive(Debug, Clone)]
pub struct SkylineFactor {
    lower: SkylineMatrix,
    diag: Vec<f64>,
}

impl SkylineFactor {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn min_pivot(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for j in 0..n {
            let m = self.lower.first_row[j];
            let col = self.lower.column(j);
            let s = dot(&col[..col.len() - 1], &x[m..j]);
            x[j] -= s;
        }
        for (xj, d) in x.iter_mut().zip(&self.diag) {
            *xj /= d;
        }
        for j in (0..n).rev() {
            let m = self.lower.first_row[j];
            let xj = x[j];
            if xj != 0.0 {
                let col = self.lower.column(j);
                for (xi, &l) in x[m..j].iter_mut().zip(&col[..col.len() - 1]) {
                    *xi -= l * xj;
                }
            }
        }
        x
    }
}
