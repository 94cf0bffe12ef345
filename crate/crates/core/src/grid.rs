//! Uniform cell-centred grids and FFT-accelerated kernel convolution.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::geometry::{Vec3, C64, ZERO};
use crate::kernel;
use crate::{Error, Result};

/// Cubic voxels of side `spacing`; node `(i, j, l)` sits at the voxel centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl Grid {
    pub fn new(lower: Vec3, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidInput(format!("grid spacing {spacing} must be positive")));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidInput("grid dimensions must be positive".into()));
        }
        if !lower.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        Ok(Self { lower, spacing, dims })
    }

    /// Grid of `n^3` voxels exactly filling the cube `[lo, hi]^3`.
    pub fn cube(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n == 0 {
            return Err(Error::InvalidInput(format!("bad cube [{lo}, {hi}] with {n} cells")));
        }
        Self::new(Vec3::new(lo, lo, lo), (hi - lo) / n as f64, [n, n, n])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + l
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let l = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, l]
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        let [i, j, l] = self.coords(idx);
        self.node_at(i, j, l)
    }

    pub fn node_at(&self, i: usize, j: usize, l: usize) -> Vec3 {
        let h = self.spacing;
        self.lower + Vec3::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (l as f64 + 0.5) * h)
    }

    pub fn nodes(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn upper(&self) -> Vec3 {
        self.lower
            + Vec3::new(
                self.dims[0] as f64 * self.spacing,
                self.dims[1] as f64 * self.spacing,
                self.dims[2] as f64 * self.spacing,
            )
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    /// Voxel containing `x`, if any. Upper faces belong to the last voxel.
    pub fn locate(&self, x: &Vec3) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let t = (x[a] - self.lower[a]) / self.spacing;
            if !(t >= 0.0 && t <= self.dims[a] as f64) {
                return None;
            }
            c[a] = (t.floor() as usize).min(self.dims[a] - 1);
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// All voxels whose closed extent contains `x` (more than one on faces).
    pub fn voxels_touching(&self, x: &Vec3) -> Vec<usize> {
        let mut ranges = [(0usize, 0usize); 3];
        for a in 0..3 {
            let t = (x[a] - self.lower[a]) / self.spacing;
            if !(t >= 0.0 && t <= self.dims[a] as f64) {
                return Vec::new();
            }
            let f = t.floor();
            let lo = if t == f && f > 0.0 { f as usize - 1 } else { f as usize };
            let hi = (f as usize).min(self.dims[a] - 1);
            ranges[a] = (lo.min(hi), hi);
        }
        let mut out = Vec::new();
        for i in ranges[0].0..=ranges[0].1 {
            for j in ranges[1].0..=ranges[1].1 {
                for l in ranges[2].0..=ranges[2].1 {
                    out.push(self.index(i, j, l));
                }
            }
        }
        out
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        (self.upper() - self.lower).norm()
    }

    pub fn centre(&self) -> Vec3 {
        (self.upper() + self.lower) * 0.5
    }
}

/// Applies `out_i = sum_j K(x_i, x_j) in_j` on a grid, where `K` is the
/// Nystrom weight of the free kernel, in `O(n log n)` via zero-padded FFTs.
pub struct GridConvolution {
    dims: [usize; 3],
    padded: [usize; 3],
    spectrum: Vec<C64>,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for GridConvolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridConvolution")
            .field("dims", &self.dims)
            .field("padded", &self.padded)
            .finish()
    }
}

impl GridConvolution {
    pub fn new(grid: &Grid, k: f64) -> Self {
        let h = grid.spacing;
        Self::from_offsets(grid, |o| {
            if o == [0, 0, 0] {
                kernel::self_weight(h, k)
            } else {
                let r = h * ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt();
                kernel::g_of_r(r, k) * h.powi(3)
            }
        })
    }

    /// Convolution with `h^3 d g(x, y) / dy_axis`; the self term vanishes by symmetry.
    pub fn gradient_y(grid: &Grid, k: f64, axis: usize) -> Self {
        let h = grid.spacing;
        Self::from_offsets(grid, |o| {
            if o == [0, 0, 0] {
                ZERO
            } else {
                let d = Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64) * h;
                let r = d.norm();
                let g = kernel::g_of_r(r, k);
                // d/dy = -d/dx for a difference kernel
                -(g * (crate::geometry::I * k - 1.0 / r) / r) * d[axis] * h.powi(3)
            }
        })
    }

    /// Convolution with weights given as a function of the index offset `x - y`.
    pub fn from_offsets(grid: &Grid, weight: impl Fn([i64; 3]) -> C64) -> Self {
        let dims = grid.dims;
        let padded = [2 * dims[0], 2 * dims[1], 2 * dims[2]];
        let mut planner = FftPlanner::new();
        let forward = [
            planner.plan_fft_forward(padded[0]),
            planner.plan_fft_forward(padded[1]),
            planner.plan_fft_forward(padded[2]),
        ];
        let inverse = [
            planner.plan_fft_inverse(padded[0]),
            planner.plan_fft_inverse(padded[1]),
            planner.plan_fft_inverse(padded[2]),
        ];
        let total = padded[0] * padded[1] * padded[2];
        let mut spectrum = vec![ZERO; total];
        // Circulant embedding: offset o maps to index o mod 2n, the middle slot stays zero.
        for a in 0..padded[0] {
            let oa = wrap(a, dims[0], padded[0]);
            for b in 0..padded[1] {
                let ob = wrap(b, dims[1], padded[1]);
                for c in 0..padded[2] {
                    let oc = wrap(c, dims[2], padded[2]);
                    if let (Some(x), Some(y), Some(z)) = (oa, ob, oc) {
                        spectrum[(a * padded[1] + b) * padded[2] + c] = weight([x, y, z]);
                    }
                }
            }
        }
        let mut conv = Self {
            dims,
            padded,
            spectrum: Vec::new(),
            forward,
            inverse,
        };
        conv.transform(&mut spectrum, false);
        let scale = 1.0 / total as f64;
        for v in spectrum.iter_mut() {
            *v *= scale;
        }
        conv.spectrum = spectrum;
        conv
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Applies the kernel to a full-grid vector.
    pub fn apply(&self, input: &[C64]) -> Vec<C64> {
        let [n0, n1, n2] = self.dims;
        let [p0, p1, p2] = self.padded;
        assert_eq!(input.len(), n0 * n1 * n2);
        let mut work = vec![ZERO; p0 * p1 * p2];
        for i in 0..n0 {
            for j in 0..n1 {
                let src = (i * n1 + j) * n2;
                let dst = (i * p1 + j) * p2;
                work[dst..dst + n2].copy_from_slice(&input[src..src + n2]);
            }
        }
        self.transform(&mut work, false);
        for (w, s) in work.iter_mut().zip(&self.spectrum) {
            *w *= s;
        }
        self.transform(&mut work, true);
        let mut out = vec![ZERO; n0 * n1 * n2];
        for i in 0..n0 {
            for j in 0..n1 {
                let dst = (i * n1 + j) * n2;
                let src = (i * p1 + j) * p2;
                out[dst..dst + n2].copy_from_slice(&work[src..src + n2]);
            }
        }
        out
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        let [p0, p1, p2] = self.padded;
        let plans = if inverse { &self.inverse } else { &self.forward };
        // Last axis: contiguous rows.
        for row in data.chunks_exact_mut(p2) {
            plans[2].process(row);
        }
        let mut line = vec![ZERO; p0.max(p1)];
        // Middle axis.
        for a in 0..p0 {
            for c in 0..p2 {
                for b in 0..p1 {
                    line[b] = data[(a * p1 + b) * p2 + c];
                }
                plans[1].process(&mut line[..p1]);
                for b in 0..p1 {
                    data[(a * p1 + b) * p2 + c] = line[b];
                }
            }
        }
        // First axis.
        for b in 0..p1 {
            for c in 0..p2 {
                for a in 0..p0 {
                    line[a] = data[(a * p1 + b) * p2 + c];
                }
                plans[0].process(&mut line[..p0]);
                for a in 0..p0 {
                    data[(a * p1 + b) * p2 + c] = line[a];
                }
            }
        }
    }
}

fn wrap(idx: usize, n: usize, p: usize) -> Option<i64> {
    if idx < n {
        Some(idx as i64)
    } else if idx > p - n {
        Some(idx as i64 - p as i64)
    } else {
        None
    }
}

/// Centered finite-difference operators on grid fields.
///
/// Values outside the grid are taken as zero, which is exact for fields
/// multiplied by a weight vanishing on a boundary collar.
pub mod fd {
    use super::Grid;
    use crate::geometry::{CVec3, C64, ZERO};

    fn value(grid: &Grid, f: &[C64], i: isize, j: isize, l: isize) -> C64 {
        let [n0, n1, n2] = grid.dims;
        if i < 0 || j < 0 || l < 0 || i >= n0 as isize || j >= n1 as isize || l >= n2 as isize {
            ZERO
        } else {
            f[grid.index(i as usize, j as usize, l as usize)]
        }
    }

    pub fn gradient(grid: &Grid, f: &[C64]) -> Vec<CVec3> {
        let inv = 0.5 / grid.spacing;
        (0..grid.len())
            .map(|idx| {
                let [i, j, l] = grid.coords(idx);
                let (i, j, l) = (i as isize, j as isize, l as isize);
                CVec3::new(
                    (value(grid, f, i + 1, j, l) - value(grid, f, i - 1, j, l)) * inv,
                    (value(grid, f, i, j + 1, l) - value(grid, f, i, j - 1, l)) * inv,
                    (value(grid, f, i, j, l + 1) - value(grid, f, i, j, l - 1)) * inv,
                )
            })
            .collect()
    }

    pub fn laplacian(grid: &Grid, f: &[C64]) -> Vec<C64> {
        let inv = 1.0 / (grid.spacing * grid.spacing);
        (0..grid.len())
            .map(|idx| {
                let [i, j, l] = grid.coords(idx);
                let (i, j, l) = (i as isize, j as isize, l as isize);
                let c = f[idx];
                (value(grid, f, i + 1, j, l)
                    + value(grid, f, i - 1, j, l)
                    + value(grid, f, i, j + 1, l)
                    + value(grid, f, i, j - 1, l)
                    + value(grid, f, i, j, l + 1)
                    + value(grid, f, i, j, l - 1)
                    - c * 6.0)
                    * inv
            })
            .collect()
    }

    pub fn divergence(grid: &Grid, v: &[CVec3]) -> Vec<C64> {
        let inv = 0.5 / grid.spacing;
        let comp = |a: usize| -> Vec<C64> { v.iter().map(|w| w[a]).collect() };
        let (vx, vy, vz) = (comp(0), comp(1), comp(2));
        (0..grid.len())
            .map(|idx| {
                let [i, j, l] = grid.coords(idx);
                let (i, j, l) = (i as isize, j as isize, l as isize);
                (value(grid, &vx, i + 1, j, l) - value(grid, &vx, i - 1, j, l)
                    + value(grid, &vy, i, j + 1, l)
                    - value(grid, &vy, i, j - 1, l)
                    + value(grid, &vz, i, j, l + 1)
                    - value(grid, &vz, i, j, l - 1))
                    * inv
            })
            .collect()
    }
}
