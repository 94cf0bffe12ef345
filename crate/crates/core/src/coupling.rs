//! Background Green's function between particle centres, with the self
//! interaction of every particle removed.
//!
//! Each particle carries a value channel and, for hard particles, three
//! gradient channels. Entry `(j, a; m, b)` is `d_a d_b G(x_j, x_m)` with `a`
//! differentiating the first argument and `b` the second, channel 0 meaning
//! no derivative.

use faer::Mat;
use rayon::prelude::*;

use crate::geometry::{Vec3, C64, ZERO};
use crate::kernel;
use crate::medium::BackgroundMedium;
use crate::volume::VolumeOperator;
use crate::{Error, Result};

/// Largest unknown count assembled densely by the particle solvers.
pub const DIRECT_MAX: usize = 4000;

/// Source points solved together against the background.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Value,
    ValueGradient,
}

impl Channels {
    pub fn width(self) -> usize {
        match self {
            Channels::Value => 1,
            Channels::ValueGradient => 4,
        }
    }
}

type Block = [[C64; 4]; 4];

/// Coupling operator between particle centres.
pub struct PointCoupling<'a> {
    medium: &'a BackgroundMedium,
    points: Vec<Vec3>,
    channels: Channels,
    dense: Option<Mat<C64>>,
    /// Background part of the self interaction, subtracted in matrix-free mode.
    self_blocks: Vec<Block>,
}

impl<'a> PointCoupling<'a> {
    pub fn new(medium: &'a BackgroundMedium, points: &[Vec3], channels: Channels) -> Result<Self> {
        Self::with_direct_max(medium, points, channels, DIRECT_MAX)
    }

    /// Assembles densely only when the unknown count is at most `direct_max`.
    pub fn with_direct_max(
        medium: &'a BackgroundMedium,
        points: &[Vec3],
        channels: Channels,
        direct_max: usize,
    ) -> Result<Self> {
        let mut c = Self {
            medium,
            points: points.to_vec(),
            channels,
            dense: None,
            self_blocks: Vec::new(),
        };
        if c.dim() <= direct_max {
            c.dense = Some(c.assemble()?);
        } else if !medium.is_free() {
            c.self_blocks = c.background_blocks()?;
        }
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.points.len() * self.channels.width()
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn dense(&self) -> Option<&Mat<C64>> {
        self.dense.as_ref()
    }

    fn free_block(&self, j: usize, m: usize) -> Block {
        let k = self.medium.k();
        let (x, y) = (&self.points[j], &self.points[m]);
        let mut b = [[ZERO; 4]; 4];
        // Centres are distinct by construction, so the kernels are finite.
        b[0][0] = kernel::free_kernel(x, y, k).unwrap_or(ZERO);
        if self.channels == Channels::ValueGradient {
            let gy = kernel::free_kernel_grad_y(x, y, k).unwrap_or_default();
            let gx = kernel::free_kernel_grad_x(x, y, k).unwrap_or_default();
            let h = kernel::free_kernel_mixed_hessian(x, y, k).unwrap_or_default();
            for a in 0..3 {
                b[0][a + 1] = gy[a];
                b[a + 1][0] = gx[a];
                for c in 0..3 {
                    b[a + 1][c + 1] = h[(a, c)];
                }
            }
        }
        b
    }

    fn assemble(&self) -> Result<Mat<C64>> {
        let w = self.channels.width();
        let n = self.points.len();
        let rows: Vec<Vec<C64>> = (0..n)
            .into_par_iter()
            .flat_map_iter(|j| {
                let mut out = vec![vec![ZERO; n * w]; w];
                for m in 0..n {
                    if m == j {
                        continue;
                    }
                    let b = self.free_block(j, m);
                    for a in 0..w {
                        for c in 0..w {
                            out[a][m * w + c] = b[a][c];
                        }
                    }
                }
                out
            })
            .collect();
        let mut mat = Mat::from_fn(n * w, n * w, |r, c| rows[r][c]);
        if !self.medium.is_free() {
            self.add_background_dense(&mut mat)?;
        }
        Ok(mat)
    }

    /// Source vectors on the background support for point `m`, one per channel.
    fn source_columns(op: &VolumeOperator, y: &Vec3, w: usize) -> Vec<Vec<C64>> {
        let mut cols = vec![op.source_column(y)];
        if w == 4 {
            let g = op.source_column_grad(y);
            for b in 0..3 {
                cols.push(g.iter().map(|v| v[b]).collect());
            }
        }
        cols
    }

    /// `kappa(x, z_s) q_s` and its `x`-gradient channels.
    fn target_rows(op: &VolumeOperator, x: &Vec3, w: usize) -> Vec<Vec<C64>> {
        let grid = op.grid();
        let h = grid.spacing;
        let k = op.k();
        let q = op.potential();
        let mut rows = vec![Vec::with_capacity(op.support().len()); w];
        for &node in op.support() {
            let z = grid.node(node);
            rows[0].push(kernel::voxel_weight(x, &z, h, k) * q[node]);
            if w == 4 {
                let g = kernel::voxel_weight_grad(x, &z, h, k);
                for a in 0..3 {
                    rows[a + 1].push(g[a] * q[node]);
                }
            }
        }
        rows
    }

    fn add_background_dense(&self, mat: &mut Mat<C64>) -> Result<()> {
        let op = self.medium.operator();
        let w = self.channels.width();
        let n = self.points.len();
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let cols: Vec<Vec<C64>> = (start..end)
                .flat_map(|m| Self::source_columns(op, &self.points[m], w))
                .collect();
            let solved = op.solve_support_many(&cols)?;
            let entries: Vec<Vec<C64>> = (0..n)
                .into_par_iter()
                .flat_map_iter(|j| {
                    let rows = Self::target_rows(op, &self.points[j], w);
                    rows.into_iter()
                        .map(|row| solved.iter().map(|col| dotu(&row, col)).collect::<Vec<C64>>())
                        .collect::<Vec<_>>()
                })
                .collect();
            for j in 0..n {
                for a in 0..w {
                    let r = j * w + a;
                    for (ci, m) in (start..end).enumerate() {
                        if m == j {
                            continue;
                        }
                        for b in 0..w {
                            mat[(r, m * w + b)] -= entries[r][ci * w + b];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Background part `G - g` of the self interaction of every point.
    fn background_blocks(&self) -> Result<Vec<Block>> {
        let op = self.medium.operator();
        let w = self.channels.width();
        let n = self.points.len();
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let cols: Vec<Vec<C64>> = (start..end)
                .flat_map(|m| Self::source_columns(op, &self.points[m], w))
                .collect();
            let solved = op.solve_support_many(&cols)?;
            let blocks: Vec<Block> = (start..end)
                .into_par_iter()
                .map(|m| {
                    let rows = Self::target_rows(op, &self.points[m], w);
                    let ci = m - start;
                    let mut b = [[ZERO; 4]; 4];
                    for a in 0..w {
                        for c in 0..w {
                            b[a][c] = -dotu(&rows[a], &solved[ci * w + c]);
                        }
                    }
                    b
                })
                .collect();
            out.extend(blocks);
        }
        Ok(out)
    }

    /// `y_j = sum_{m != j} C_{jm} x_m` with `x` laid out point-major.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if let Some(mat) = &self.dense {
            return Ok(crate::linalg::matvec(mat, x));
        }
        let w = self.channels.width();
        let n = self.points.len();
        let mut y: Vec<C64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|j| {
                let mut acc = [ZERO; 4];
                for m in 0..n {
                    if m == j {
                        continue;
                    }
                    let b = self.free_block(j, m);
                    for a in 0..w {
                        for c in 0..w {
                            acc[a] += b[a][c] * x[m * w + c];
                        }
                    }
                }
                acc.into_iter().take(w)
            })
            .collect();
        if self.medium.is_free() {
            return Ok(y);
        }
        let op = self.medium.operator();
        let rhs = self.radiated_rhs(op, x);
        let (v, _) = op.solve_support(&rhs)?;
        let corr: Vec<C64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|j| {
                let rows = Self::target_rows(op, &self.points[j], w);
                rows.into_iter().map(|r| dotu(&r, &v)).collect::<Vec<_>>()
            })
            .collect();
        for j in 0..n {
            let d = &self.self_blocks[j];
            for a in 0..w {
                let mut s = corr[j * w + a];
                // Remove the self term, which the sum above includes.
                for c in 0..w {
                    s += d[a][c] * x[j * w + c];
                }
                y[j * w + a] -= s;
            }
        }
        Ok(y)
    }

    fn radiated_rhs(&self, op: &VolumeOperator, x: &[C64]) -> Vec<C64> {
        let w = self.channels.width();
        let mut rhs = vec![ZERO; op.support().len()];
        for (m, y) in self.points.iter().enumerate() {
            for (c, col) in Self::source_columns(op, y, w).into_iter().enumerate() {
                let s = x[m * w + c];
                if s == ZERO {
                    continue;
                }
                for (r, v) in rhs.iter_mut().zip(&col) {
                    *r += v * s;
                }
            }
        }
        rhs
    }
}

fn dotu(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Field `sum_m G(x, x_m) Q_m + grad_y G(x, x_m) . P_m` at each point.
pub fn radiate(
    medium: &BackgroundMedium,
    centers: &[Vec3],
    monopoles: &[C64],
    dipoles: Option<&[crate::geometry::CVec3]>,
    points: &[Vec3],
) -> Result<Vec<C64>> {
    let k = medium.k();
    let direct: Vec<C64> = points
        .par_iter()
        .map(|x| {
            let mut s = ZERO;
            for (m, y) in centers.iter().enumerate() {
                s += kernel::free_kernel(x, y, k)? * monopoles[m];
                if let Some(p) = dipoles {
                    s += kernel::free_kernel_grad_y(x, y, k)?.dot(&p[m]);
                }
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    if medium.is_free() || centers.is_empty() {
        return Ok(direct);
    }
    let op = medium.operator();
    let mut rhs = vec![ZERO; op.support().len()];
    for (m, y) in centers.iter().enumerate() {
        for (r, v) in rhs.iter_mut().zip(op.source_column(y)) {
            *r += v * monopoles[m];
        }
        if let Some(p) = dipoles {
            for (r, v) in rhs.iter_mut().zip(op.source_column_grad(y)) {
                *r += v.dot(&p[m]);
            }
        }
    }
    let (v, _) = op.solve_support(&rhs)?;
    Ok(points
        .par_iter()
        .zip(direct)
        .map(|(x, d)| d - op.potential_at(x, &v))
        .collect())
}

/// Rejects evaluation points closer than `d` to any centre.
pub fn check_far_from(centers: &[Vec3], points: &[Vec3], d: f64) -> Result<()> {
    for x in points {
        for y in centers {
            let r = (x - y).norm();
            if r < d {
                return Err(Error::NearField {
                    point: *x,
                    distance: r,
                    radius: d,
                });
            }
        }
    }
    Ok(())
}
