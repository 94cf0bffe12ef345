//! Dense LU and restarted GMRES for complex systems.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::{Mat, Par};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::geometry::{C64, ZERO};
use crate::{Error, Result};

/// Controls for the linear solvers shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Largest unknown count factorised densely.
    pub direct_max: usize,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            direct_max: 2000,
            restart: 60,
            max_iter: 2000,
        }
    }
}

/// Outcome of a linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub method: SolveMethod,
    pub iterations: usize,
    /// Relative residual `|b - Ax| / |b|`, recomputed after the solve.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Trivial,
    DenseLu,
    Gmres,
}

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn sequential_faer() {
    static INIT: Once = Once::new();
    // Fixed summation order keeps factorisations independent of the thread count.
    INIT.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// LU factorisation of a dense complex matrix.
pub struct DenseLu {
    n: usize,
    lu: faer::linalg::solvers::PartialPivLu<C64>,
    pub condition_estimate: f64,
}

impl std::fmt::Debug for DenseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseLu")
            .field("n", &self.n)
            .field("condition_estimate", &self.condition_estimate)
            .finish()
    }
}

/// Condition estimates above this are treated as numerically singular.
pub const MAX_CONDITION: f64 = 1e13;

impl DenseLu {
    pub fn factor(a: &Mat<C64>) -> Result<Self> {
        sequential_faer();
        let n = a.nrows();
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let mut dmax = 0.0f64;
        let mut dmin = f64::INFINITY;
        for i in 0..n {
            let d = u[(i, i)].norm();
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        let condition_estimate = if n == 0 { 1.0 } else { dmax / dmin };
        if !condition_estimate.is_finite() || condition_estimate > MAX_CONDITION {
            return Err(Error::IllConditioned {
                condition: condition_estimate,
            });
        }
        Ok(Self {
            n,
            lu,
            condition_estimate,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let rhs = Mat::<C64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solves for several right-hand sides stored as columns.
    pub fn solve_many(&self, columns: &[Vec<C64>]) -> Vec<Vec<C64>> {
        if columns.is_empty() {
            return Vec::new();
        }
        let rhs = Mat::<C64>::from_fn(self.n, columns.len(), |i, j| columns[j][i]);
        let x = self.lu.solve(&rhs);
        (0..columns.len())
            .map(|j| (0..self.n).map(|i| x[(i, j)]).collect())
            .collect()
    }
}

pub fn matvec(a: &Mat<C64>, x: &[C64]) -> Vec<C64> {
    let n = a.nrows();
    let m = a.ncols();
    (0..n)
        .map(|i| {
            let mut s = ZERO;
            for j in 0..m {
                s += a[(i, j)] * x[j];
            }
            s
        })
        .collect()
}

/// Dense direct solve with a recomputed residual.
pub fn solve_dense(a: &Mat<C64>, b: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
    let lu = DenseLu::factor(a)?;
    let x = lu.solve(b);
    let residual = relative_residual_dense(a, &x, b);
    debug!("dense LU n={} cond~{:.2e} residual={:.2e}", b.len(), lu.condition_estimate, residual);
    Ok((
        x,
        SolveStats {
            method: SolveMethod::DenseLu,
            iterations: 1,
            residual,
        },
    ))
}

fn relative_residual_dense(a: &Mat<C64>, x: &[C64], b: &[C64]) -> f64 {
    let ax = matvec(a, x);
    let r: Vec<C64> = ax.iter().zip(b).map(|(p, q)| q - p).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
pub fn gmres<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[C64],
    x0: Option<&[C64]>,
    opts: &SolverOptions,
) -> Result<(Vec<C64>, SolveStats)> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            vec![ZERO; n],
            SolveStats {
                method: SolveMethod::Trivial,
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![ZERO; n]);
    let m = opts.restart.max(1).min(n.max(1));
    let mut total = 0usize;
    let mut rel = f64::INFINITY;
    while total < opts.max_iter {
        let ax = op.apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            break;
        }
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|z| z / beta).collect());
        let mut hess = vec![vec![ZERO; m]; m + 1];
        let mut cs = vec![ZERO; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::from(beta);
        let mut used = 0;
        for j in 0..m {
            let mut w = op.apply(&basis[j]);
            for i in 0..=j {
                let h = dotc(&basis[i], &w);
                hess[i][j] = h;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= h * vk;
                }
            }
            let wn = norm(&w);
            hess[j + 1][j] = C64::from(wn);
            for i in 0..j {
                let t = cs[i].conj() * hess[i][j] + sn[i].conj() * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let (c, s) = givens(hess[j][j], hess[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            hess[j][j] = c.conj() * hess[j][j] + s.conj() * hess[j + 1][j];
            hess[j + 1][j] = ZERO;
            g[j + 1] = -s * g[j];
            g[j] = c.conj() * g[j];
            used = j + 1;
            total += 1;
            rel = g[j + 1].norm() / bnorm;
            if rel <= opts.tol || wn == 0.0 || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|z| z / wn).collect());
        }
        // Back substitution on the triangular part.
        let mut y = vec![ZERO; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= hess[i][l] * y[l];
            }
            y[i] = s / hess[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(&basis[i]) {
                *xk += yi * vk;
            }
        }
        if rel <= opts.tol {
            break;
        }
    }
    let ax = op.apply(&x);
    let r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let true_rel = norm(&r) / bnorm;
    debug!("gmres n={n} iterations={total} residual={true_rel:.2e}");
    if !(true_rel <= opts.tol * 10.0) {
        return Err(Error::NonConvergence {
            iterations: total,
            residual: true_rel.max(rel),
        });
    }
    Ok((
        x,
        SolveStats {
            method: SolveMethod::Gmres,
            iterations: total,
            residual: true_rel,
        },
    ))
}

/// Rotation `[c* s*; -s c]` with `c* a + s* b = r` and `-s a + c b = 0`.
fn givens(a: C64, b: C64) -> (C64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (C64::from(1.0), ZERO);
    }
    if an == 0.0 {
        return (ZERO, C64::from(1.0));
    }
    let r = (an * an + bn * bn).sqrt();
    let phase = a / an;
    (C64::from(an / r), phase.conj() * b / r)
}

/// Operator backed by a dense matrix.
pub struct DenseOperator<'a>(pub &'a Mat<C64>);

impl LinearOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        matvec(self.0, x)
    }
}
