//! Nystrom discretisation of `u + K(q u) = f` on a grid, with `K` the free
//! volume potential.

use std::sync::OnceLock;

use faer::Mat;
use rayon::prelude::*;

use crate::geometry::{CVec3, Vec3, C64, ZERO};
use crate::grid::{Grid, GridConvolution};
use crate::kernel;
use crate::linalg::{self, DenseLu, LinearOperator, SolveMethod, SolveStats, SolverOptions};
use crate::Result;

/// Second-kind volume operator `I + K Q` for a potential sampled at nodes.
pub struct VolumeOperator {
    grid: Grid,
    k: f64,
    potential: Vec<C64>,
    support: Vec<usize>,
    opts: SolverOptions,
    lu: Option<DenseLu>,
    conv: OnceLock<GridConvolution>,
}

impl std::fmt::Debug for VolumeOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VolumeOperator")
            .field("dims", &self.grid.dims)
            .field("support", &self.support.len())
            .field("dense", &self.lu.is_some())
            .finish()
    }
}

struct SupportOperator<'a> {
    op: &'a VolumeOperator,
}

impl LinearOperator for SupportOperator<'_> {
    fn dim(&self) -> usize {
        self.op.support.len()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let kq = self.op.apply_kq_support(x);
        x.iter().zip(&kq).map(|(a, b)| a + b).collect()
    }
}

impl VolumeOperator {
    pub fn new(grid: &Grid, k: f64, potential: Vec<C64>, opts: SolverOptions) -> Result<Self> {
        assert_eq!(potential.len(), grid.len());
        let support: Vec<usize> = (0..grid.len()).filter(|&i| potential[i] != ZERO).collect();
        let mut op = Self {
            grid: grid.clone(),
            k,
            potential,
            support,
            opts,
            lu: None,
            conv: OnceLock::new(),
        };
        let n = op.support.len();
        if n > 0 && n <= opts.direct_max {
            op.lu = Some(DenseLu::factor(&op.dense_matrix())?);
        }
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn potential(&self) -> &[C64] {
        &self.potential
    }

    /// Nodes where the potential is non-zero, in increasing order.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_trivial(&self) -> bool {
        self.support.is_empty()
    }

    pub fn convolution(&self) -> &GridConvolution {
        self.conv.get_or_init(|| GridConvolution::new(&self.grid, self.k))
    }

    /// `I + K Q` restricted to the support.
    pub fn dense_matrix(&self) -> Mat<C64> {
        let h = self.grid.spacing;
        let nodes: Vec<Vec3> = self.support.iter().map(|&i| self.grid.node(i)).collect();
        let q: Vec<C64> = self.support.iter().map(|&i| self.potential[i]).collect();
        let n = nodes.len();
        let self_w = kernel::self_weight(h, self.k);
        let h3 = h * h * h;
        let rows: Vec<Vec<C64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let w = if i == j {
                            self_w
                        } else {
                            kernel::g_of_r((nodes[i] - nodes[j]).norm(), self.k) * h3
                        };
                        let d = if i == j { C64::from(1.0) } else { ZERO };
                        d + w * q[j]
                    })
                    .collect()
            })
            .collect();
        Mat::from_fn(n, n, |i, j| rows[i][j])
    }

    /// `(K Q x)` at support nodes for a support vector `x`.
    fn apply_kq_support(&self, x: &[C64]) -> Vec<C64> {
        let mut full = vec![ZERO; self.grid.len()];
        for (s, &node) in self.support.iter().enumerate() {
            full[node] = self.potential[node] * x[s];
        }
        let out = self.convolution().apply(&full);
        self.support.iter().map(|&node| out[node]).collect()
    }

    /// Solves on the support given the right-hand side at support nodes.
    pub fn solve_support(&self, rhs: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
        if self.support.is_empty() {
            return Ok((
                Vec::new(),
                SolveStats {
                    method: SolveMethod::Trivial,
                    iterations: 0,
                    residual: 0.0,
                },
            ));
        }
        match &self.lu {
            Some(lu) => {
                let x = lu.solve(rhs);
                let residual = self.residual(&x, rhs);
                Ok((
                    x,
                    SolveStats {
                        method: SolveMethod::DenseLu,
                        iterations: 1,
                        residual,
                    },
                ))
            }
            None => linalg::gmres(&SupportOperator { op: self }, rhs, None, &self.opts),
        }
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_support_many(&self, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        if self.support.is_empty() {
            return Ok(rhs.iter().map(|_| Vec::new()).collect());
        }
        match &self.lu {
            Some(lu) => Ok(lu.solve_many(rhs)),
            None => rhs
                .iter()
                .map(|b| self.solve_support(b).map(|(x, _)| x))
                .collect(),
        }
    }

    fn residual(&self, x: &[C64], rhs: &[C64]) -> f64 {
        let ax = SupportOperator { op: self }.apply(x);
        let r: Vec<C64> = ax.iter().zip(rhs).map(|(a, b)| b - a).collect();
        let nb = linalg::norm(rhs);
        if nb == 0.0 {
            linalg::norm(&r)
        } else {
            linalg::norm(&r) / nb
        }
    }

    /// Solves `u + K(q u) = f` for a right-hand side given on the whole grid
    /// and returns `u` on the whole grid.
    pub fn solve_full(&self, rhs: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
        let sub: Vec<C64> = self.support.iter().map(|&i| rhs[i]).collect();
        let (x, stats) = self.solve_support(&sub)?;
        Ok((self.extend(rhs, &x), stats))
    }

    /// Full-grid field `f - K(q u)` from support values of `u`.
    pub fn extend(&self, rhs: &[C64], x: &[C64]) -> Vec<C64> {
        if self.support.is_empty() {
            return rhs.to_vec();
        }
        let mut full = vec![ZERO; self.grid.len()];
        for (s, &node) in self.support.iter().enumerate() {
            full[node] = self.potential[node] * x[s];
        }
        let kq = self.convolution().apply(&full);
        let mut out: Vec<C64> = rhs.iter().zip(&kq).map(|(f, v)| f - v).collect();
        // Keep support values exactly as solved.
        for (s, &node) in self.support.iter().enumerate() {
            out[node] = x[s];
        }
        out
    }

    /// `sum_s kappa(x, z_s) q_s u_s` at an arbitrary point.
    pub fn potential_at(&self, x: &Vec3, values: &[C64]) -> C64 {
        let h = self.grid.spacing;
        let mut s = ZERO;
        for (j, &node) in self.support.iter().enumerate() {
            let z = self.grid.node(node);
            s += kernel::voxel_weight(x, &z, h, self.k) * (self.potential[node] * values[j]);
        }
        s
    }

    /// Gradient in `x` of [`Self::potential_at`].
    pub fn potential_grad_at(&self, x: &Vec3, values: &[C64]) -> CVec3 {
        let h = self.grid.spacing;
        let mut s = CVec3::zeros();
        for (j, &node) in self.support.iter().enumerate() {
            let z = self.grid.node(node);
            let w = kernel::voxel_weight_grad(x, &z, h, self.k);
            let c = self.potential[node] * values[j];
            s += w * c;
        }
        s
    }

    /// Support values of the voxel-consistent free kernel `g(., y)`.
    pub fn source_column(&self, y: &Vec3) -> Vec<C64> {
        let h = self.grid.spacing;
        let h3 = h * h * h;
        self.support
            .iter()
            .map(|&node| kernel::voxel_weight(y, &self.grid.node(node), h, self.k) / h3)
            .collect()
    }

    /// Support values of the `y`-gradient of [`Self::source_column`].
    pub fn source_column_grad(&self, y: &Vec3) -> Vec<CVec3> {
        let h = self.grid.spacing;
        let h3 = h * h * h;
        self.support
            .iter()
            .map(|&node| kernel::voxel_weight_grad(y, &self.grid.node(node), h, self.k) / C64::from(h3))
            .collect()
    }
}
