//! Continuum equations reached as the particles shrink.
//!
//! The impedance limit adds a potential `p` to the background and solves
//! `u = u0 - int G p u`. The hard limit is the fixed point of
//! `U = u0 + int G (nu Lap U + div(nu beta grad U))`, iterated from `u0` with
//! centred finite differences for the derivatives of the iterate.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::geometry::{CVec3, Tensor3, Vec3, C64, I, ZERO};
use crate::grid::{fd, GridConvolution};
use crate::kernel;
use crate::linalg::{self, SolveStats};
use crate::medium::{plane_wave, BackgroundMedium, ComplexField};
use crate::particles::ShapeConstants;
use crate::quadrature::{DirectionSet, FarField};
use crate::volume::VolumeOperator;
use crate::{Error, Result};

/// Width in cells of the boundary layer on which `nu` must vanish.
pub const COLLAR_CELLS: usize = 2;

/// Limiting potential `p = 4 pi c1^2 N h / (c2 (1 + h))`.
pub fn potential_from_h_n(h: &[C64], n: &[f64], shape: &ShapeConstants) -> Result<Vec<C64>> {
    if h.len() != n.len() {
        return Err(Error::InvalidInput(format!("{} h samples but {} N samples", h.len(), n.len())));
    }
    let gamma = shape.coupling_factor();
    h.iter()
        .zip(n)
        .enumerate()
        .map(|(i, (hv, nv))| {
            if !(nv.is_finite() && *nv >= 0.0) {
                return Err(Error::Invariant(format!("N = {nv} at node {i} must be >= 0")));
            }
            if *nv == 0.0 {
                return Ok(ZERO);
            }
            let den = C64::from(1.0) + hv;
            if den == ZERO {
                return Err(Error::SingularImpedance {
                    location: format!("node {i}"),
                });
            }
            Ok(hv / den * (gamma * nv))
        })
        .collect()
}

/// Background medium plus the limiting potential `p`.
pub struct ImpedanceLimitProblem {
    medium: BackgroundMedium,
    p: Vec<C64>,
    total: VolumeOperator,
}

impl ImpedanceLimitProblem {
    pub fn new(medium: &BackgroundMedium, p: Vec<C64>) -> Result<Self> {
        let grid = medium.grid();
        if p.len() != grid.len() {
            return Err(Error::InvalidInput(format!("{} p samples for {} nodes", p.len(), grid.len())));
        }
        for (i, v) in p.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite p at node {i}")));
            }
            if *v != ZERO && !medium.region().contains(&grid.node(i)) {
                return Err(Error::Invariant(format!("p is non-zero at node {i} outside D")));
            }
        }
        let q: Vec<C64> = medium.q0().iter().zip(&p).map(|(a, b)| a + b).collect();
        let total = VolumeOperator::new(grid, medium.k(), q, *medium.solver())?;
        Ok(Self {
            medium: medium.clone(),
            p,
            total,
        })
    }

    pub fn medium(&self) -> &BackgroundMedium {
        &self.medium
    }

    pub fn p(&self) -> &[C64] {
        &self.p
    }

    /// Operator `I + K (q0 + p)`.
    pub fn operator(&self) -> &VolumeOperator {
        &self.total
    }
}

/// Grid solution of the impedance limit.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSolution {
    pub alpha: Vec3,
    /// Values at every grid node.
    pub field: ComplexField,
    pub stats: SolveStats,
    support_values: Vec<C64>,
}

pub fn solve_impedance_limit(problem: &ImpedanceLimitProblem, alpha: &Vec3) -> Result<LimitSolution> {
    crate::geometry::check_unit(alpha, "incident direction")?;
    let m = &problem.medium;
    let nodes = m.grid().nodes();
    let rhs: Vec<C64> = nodes.iter().map(|x| plane_wave(m.k(), alpha, x)).collect();
    let (u, stats) = problem.total.solve_full(&rhs)?;
    let support_values = problem.total.support().iter().map(|&i| u[i]).collect();
    Ok(LimitSolution {
        alpha: *alpha,
        field: ComplexField::new(nodes, u, *alpha)?,
        stats,
        support_values,
    })
}

/// Limit field at arbitrary points.
pub fn evaluate_limit(problem: &ImpedanceLimitProblem, solution: &LimitSolution, points: &[Vec3]) -> Result<ComplexField> {
    let k = problem.medium.k();
    let values = points
        .iter()
        .map(|x| plane_wave(k, &solution.alpha, x) - problem.total.potential_at(x, &solution.support_values))
        .collect();
    ComplexField::new(points.to_vec(), values, solution.alpha)
}

/// `A = A0 - (1/4pi) int u0(y, -beta) p(y) u(y) dy`, evaluated as the
/// amplitude of the total potential minus that of the background.
pub fn limiting_amplitude(problem: &ImpedanceLimitProblem, solution: &LimitSolution, directions: &DirectionSet) -> Result<FarField> {
    let m = &problem.medium;
    let wave = m.incident_wave(&solution.alpha)?;
    let background = m.background_amplitude(&wave, directions);
    let grid = m.grid();
    let q = problem.total.potential();
    let h3 = grid.voxel_volume();
    let support = problem.total.support();
    let scattered = directions
        .directions
        .iter()
        .zip(&background)
        .map(|(b, a0)| {
            let mut s = ZERO;
            for (j, &node) in support.iter().enumerate() {
                s += plane_wave(m.k(), &(-b), &grid.node(node)) * q[node] * solution.support_values[j];
            }
            -s * h3 / (4.0 * PI) - a0
        })
        .collect();
    Ok(FarField {
        incident: solution.alpha,
        directions: directions.clone(),
        background,
        scattered,
    })
}

/// Which integral form of the hard limit to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardLimitForm {
    /// `int G [nu Lap U + div(nu beta grad U)]`.
    #[default]
    ByParts,
    /// `int G nu Lap U - int grad_y G . (nu beta grad U)`.
    Gradient,
}

/// Background medium, volume density `nu` and polarizability field `beta`.
pub struct HardLimitProblem {
    medium: BackgroundMedium,
    nu: Vec<f64>,
    beta: Vec<Tensor3>,
    form: HardLimitForm,
    gradient_kernels: OnceLock<[GridConvolution; 3]>,
}

impl HardLimitProblem {
    pub fn new(medium: &BackgroundMedium, nu: Vec<f64>, beta: Vec<Tensor3>, form: HardLimitForm) -> Result<Self> {
        let grid = medium.grid();
        if nu.len() != grid.len() || beta.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} nu and {} beta samples for {} nodes",
                nu.len(),
                beta.len(),
                grid.len()
            )));
        }
        if beta.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite polarizability".into()));
        }
        let c = COLLAR_CELLS as isize;
        for (i, v) in nu.iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Invariant(format!("nu = {v} at node {i} must be >= 0")));
            }
            if *v == 0.0 {
                continue;
            }
            let [a, b, e] = grid.coords(i);
            for da in -c..=c {
                for db in -c..=c {
                    for de in -c..=c {
                        let (x, y, z) = (a as isize + da, b as isize + db, e as isize + de);
                        let inside = x >= 0
                            && y >= 0
                            && z >= 0
                            && (x as usize) < grid.dims[0]
                            && (y as usize) < grid.dims[1]
                            && (z as usize) < grid.dims[2]
                            && medium
                                .region()
                                .contains(&grid.node_at(x as usize, y as usize, z as usize));
                        if !inside {
                            return Err(Error::Invariant(format!(
                                "nu must vanish within {COLLAR_CELLS} cells of the boundary of D (node {i})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self {
            medium: medium.clone(),
            nu,
            beta,
            form,
            gradient_kernels: OnceLock::new(),
        })
    }

    /// Same tensor at every node.
    pub fn with_uniform_beta(medium: &BackgroundMedium, nu: Vec<f64>, beta: Tensor3, form: HardLimitForm) -> Result<Self> {
        let n = medium.grid().len();
        Self::new(medium, nu, vec![beta; n], form)
    }

    pub fn medium(&self) -> &BackgroundMedium {
        &self.medium
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn beta(&self) -> &[Tensor3] {
        &self.beta
    }

    pub fn form(&self) -> HardLimitForm {
        self.form
    }

    fn gradient_kernels(&self) -> &[GridConvolution; 3] {
        self.gradient_kernels.get_or_init(|| {
            let g = self.medium.grid();
            let k = self.medium.k();
            [0, 1, 2].map(|a| GridConvolution::gradient_y(g, k, a))
        })
    }
}

/// `int G(x, y) f(y) dy` at every node, for `f` given on the whole grid.
pub fn apply_green(medium: &BackgroundMedium, f: &[C64]) -> Result<Vec<C64>> {
    let w = medium.operator().convolution().apply(f);
    background_correct(medium, w)
}

fn background_correct(medium: &BackgroundMedium, w: Vec<C64>) -> Result<Vec<C64>> {
    if medium.is_free() {
        return Ok(w);
    }
    Ok(medium.operator().solve_full(&w)?.0)
}

/// Volume sources of the hard limit for the iterate `u`: the monopole density
/// and, for the gradient form, the dipole density `nu beta grad u`.
pub fn hard_limit_source(problem: &HardLimitProblem, u: &[C64]) -> (Vec<C64>, Option<Vec<CVec3>>) {
    let grid = problem.medium.grid();
    let lap = fd::laplacian(grid, u);
    let grad = fd::gradient(grid, u);
    let dipole: Vec<CVec3> = grad
        .iter()
        .zip(&problem.beta)
        .zip(&problem.nu)
        .map(|((g, b), nu)| {
            let mut v = CVec3::zeros();
            for p in 0..3 {
                for j in 0..3 {
                    v[p] += g[j] * b[p][j];
                }
            }
            v * C64::from(*nu)
        })
        .collect();
    match problem.form {
        HardLimitForm::ByParts => {
            let div = fd::divergence(grid, &dipole);
            let f = lap
                .iter()
                .zip(&problem.nu)
                .zip(&div)
                .map(|((l, nu), d)| l * nu + d)
                .collect();
            (f, None)
        }
        HardLimitForm::Gradient => {
            let f = lap.iter().zip(&problem.nu).map(|(l, nu)| l * nu).collect();
            (f, Some(dipole))
        }
    }
}

/// Scattered part `U_next - u0` produced by given sources.
fn radiate_sources(problem: &HardLimitProblem, f: &[C64], dipole: Option<&[CVec3]>) -> Result<Vec<C64>> {
    let m = &problem.medium;
    let mut w = m.operator().convolution().apply(f);
    if let Some(v) = dipole {
        for (axis, conv) in problem.gradient_kernels().iter().enumerate() {
            let comp: Vec<C64> = v.iter().map(|d| d[axis]).collect();
            for (a, b) in w.iter_mut().zip(conv.apply(&comp)) {
                *a -= b;
            }
        }
    }
    background_correct(m, w)
}

/// One fixed-point step `u0 + int G S(u)`.
pub fn hard_limit_step(problem: &HardLimitProblem, u0: &[C64], u: &[C64]) -> Result<Vec<C64>> {
    let (f, dipole) = hard_limit_source(problem, u);
    let v = radiate_sources(problem, &f, dipole.as_deref())?;
    Ok(u0.iter().zip(&v).map(|(a, b)| a + b).collect())
}

/// Hard-limit solution on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HardLimitSolution {
    pub alpha: Vec3,
    pub field: ComplexField,
    /// Result of the first step from `u0`.
    pub first_iterate: Vec<C64>,
    /// Relative change of every step.
    pub changes: Vec<f64>,
    source: Vec<C64>,
    dipole: Option<Vec<CVec3>>,
    scattered: Vec<C64>,
}

impl HardLimitSolution {
    pub fn iterations(&self) -> usize {
        self.changes.len()
    }
}

/// First step from `u0`.
pub fn born_first_iterate(problem: &HardLimitProblem, alpha: &Vec3) -> Result<Vec<C64>> {
    let u0 = problem.medium.incident_wave(alpha)?.grid_values();
    hard_limit_step(problem, &u0, &u0)
}

/// Iterates until the relative change drops to `tol`.
pub fn solve_hard_limit(problem: &HardLimitProblem, alpha: &Vec3, max_iter: usize, tol: f64) -> Result<HardLimitSolution> {
    let m = &problem.medium;
    let u0 = m.incident_wave(alpha)?.grid_values();
    let mut u = u0.clone();
    let mut changes: Vec<f64> = Vec::new();
    let mut first_iterate = None;
    let mut growth = 0usize;
    for n in 1..=max_iter {
        let (f, dipole) = hard_limit_source(problem, &u);
        let scattered = radiate_sources(problem, &f, dipole.as_deref())?;
        let next: Vec<C64> = u0.iter().zip(&scattered).map(|(a, b)| a + b).collect();
        let diff: Vec<C64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let scale = linalg::norm(&next);
        let change = if scale == 0.0 { 0.0 } else { linalg::norm(&diff) / scale };
        if first_iterate.is_none() {
            first_iterate = Some(next.clone());
        }
        if let Some(prev) = changes.last() {
            growth = if change > *prev { growth + 1 } else { 0 };
        }
        changes.push(change);
        log::debug!("hard limit step {n}: change {change:.3e}");
        if growth >= 3 {
            return Err(Error::NonContraction { iteration: n, change });
        }
        u = next;
        if change <= tol {
            return Ok(HardLimitSolution {
                alpha: *alpha,
                field: ComplexField::new(m.grid().nodes(), u, *alpha)?,
                first_iterate: first_iterate.unwrap_or_default(),
                changes,
                source: f,
                dipole,
                scattered,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: changes.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Effective volume densities radiating the scattered part of the solution:
/// monopoles `f - q0 v` and dipoles `-nu beta grad U`.
fn effective_sources(problem: &HardLimitProblem, sol: &HardLimitSolution) -> Vec<(Vec3, C64, CVec3)> {
    let m = &problem.medium;
    let grid = m.grid();
    let q0 = m.q0();
    (0..grid.len())
        .filter_map(|i| {
            let mono = sol.source[i] - q0[i] * sol.scattered[i];
            let dip = sol.dipole.as_ref().map(|d| -d[i]).unwrap_or_default();
            if mono == ZERO && dip == CVec3::zeros() {
                None
            } else {
                Some((grid.node(i), mono, dip))
            }
        })
        .collect()
}

/// Hard-limit field at arbitrary points.
pub fn evaluate_hard_limit(problem: &HardLimitProblem, solution: &HardLimitSolution, points: &[Vec3]) -> Result<ComplexField> {
    let m = &problem.medium;
    let grid = m.grid();
    let (h, k) = (grid.spacing, m.k());
    let wave = m.incident_wave(&solution.alpha)?;
    let sources = effective_sources(problem, solution);
    let values = points
        .iter()
        .map(|x| {
            let mut s = wave.value(x);
            for (z, mono, dip) in &sources {
                s += kernel::voxel_weight(x, z, h, k) * mono;
                if *dip != CVec3::zeros() {
                    // grad_y of the weight is minus its grad_x
                    s -= kernel::voxel_weight_grad(x, z, h, k).dot(dip);
                }
            }
            s
        })
        .collect();
    ComplexField::new(points.to_vec(), values, solution.alpha)
}

/// Amplitude of the hard-limit solution.
pub fn hard_limit_amplitude(problem: &HardLimitProblem, solution: &HardLimitSolution, directions: &DirectionSet) -> Result<FarField> {
    let m = &problem.medium;
    let k = m.k();
    let h3 = m.grid().voxel_volume();
    let wave = m.incident_wave(&solution.alpha)?;
    let sources = effective_sources(problem, solution);
    let scattered = directions
        .directions
        .iter()
        .map(|b| {
            let mut s = ZERO;
            for (z, mono, dip) in &sources {
                let e = plane_wave(k, &(-b), z);
                s += e * (mono - I * k * crate::geometry::rdot(b, dip));
            }
            s * h3 / (4.0 * PI)
        })
        .collect();
    Ok(FarField {
        incident: solution.alpha,
        directions: directions.clone(),
        background: m.background_amplitude(&wave, directions),
        scattered,
    })
}
