//! Many-body system for small acoustically hard particles. Each particle
//! radiates a monopole driven by the effective field and a dipole driven by
//! its gradient through the polarizability tensor.

use std::sync::Mutex;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::coupling::{self, Channels, PointCoupling};
use crate::foldy_impedance::exclusion_radius;
use crate::geometry::{CVec3, Tensor3, Vec3, C64, ZERO};
use crate::linalg::{self, LinearOperator, SolveMethod, SolveStats};
use crate::medium::{BackgroundMedium, ComplexField};
use crate::particles::{validate_cloud, ParticleCloud, ParticleKind};
use crate::quadrature::{DirectionSet, FarField};
use crate::{Error, Result};

/// Solution of the hard many-body system for one incident direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardSolveResult {
    pub alpha: Vec3,
    #[serde(with = "crate::cplx::vec")]
    pub effective_values: Vec<C64>,
    #[serde(with = "crate::cplx::vec3")]
    pub effective_gradients: Vec<CVec3>,
    /// `Q_m = V (q0(x_m) - k^2) u_e(x_m)`.
    #[serde(with = "crate::cplx::vec")]
    pub charges: Vec<C64>,
    /// `P_m = -V beta_m grad u_e(x_m)`.
    #[serde(with = "crate::cplx::vec3")]
    pub dipole_moments: Vec<CVec3>,
    pub stats: SolveStats,
}

/// Polarizability tensor of a ball, `-3/2` times the identity.
pub fn ball_polarizability() -> Tensor3 {
    [[-1.5, 0.0, 0.0], [0.0, -1.5, 0.0], [0.0, 0.0, -1.5]]
}

fn tensors(cloud: &ParticleCloud) -> Result<&[Tensor3]> {
    match &cloud.kind {
        ParticleKind::Hard { beta } => Ok(beta),
        ParticleKind::Impedance { .. } => Err(Error::InvalidInput("expected a hard cloud".into())),
    }
}

/// Per-particle map from `(u, grad u)` to `(Q, P)`.
fn source_maps(medium: &BackgroundMedium, cloud: &ParticleCloud) -> Result<Vec<[[C64; 4]; 4]>> {
    let v = cloud.shape.volume(cloud.radius);
    let k2 = medium.k() * medium.k();
    Ok(tensors(cloud)?
        .iter()
        .zip(&cloud.centers)
        .map(|(b, x)| {
            let mut s = [[ZERO; 4]; 4];
            s[0][0] = (medium.q0_at(x) - k2) * v;
            for p in 0..3 {
                for j in 0..3 {
                    s[p + 1][j + 1] = C64::from(-v * b[p][j]);
                }
            }
            s
        })
        .collect())
}

fn apply_maps(maps: &[[[C64; 4]; 4]], x: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; x.len()];
    for (m, s) in maps.iter().enumerate() {
        for a in 0..4 {
            let mut t = ZERO;
            for b in 0..4 {
                t += s[a][b] * x[4 * m + b];
            }
            out[4 * m + a] = t;
        }
    }
    out
}

struct HardOperator<'a> {
    coupling: &'a PointCoupling<'a>,
    maps: &'a [[[C64; 4]; 4]],
    failure: Mutex<Option<Error>>,
}

impl LinearOperator for HardOperator<'_> {
    fn dim(&self) -> usize {
        4 * self.maps.len()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        match self.coupling.apply(&apply_maps(self.maps, x)) {
            Ok(y) => x.iter().zip(&y).map(|(a, b)| a - b).collect(),
            Err(e) => {
                self.failure.lock().unwrap().get_or_insert(e);
                vec![ZERO; x.len()]
            }
        }
    }
}

/// Solves the value-and-gradient system for a given incident field and
/// gradient sampled at the centres.
pub fn solve_system(
    medium: &BackgroundMedium,
    cloud: &ParticleCloud,
    values: &[C64],
    gradients: &[CVec3],
) -> Result<(Vec<C64>, Vec<CVec3>, SolveStats)> {
    let n = cloud.len();
    if values.len() != n || gradients.len() != n {
        return Err(Error::InvalidInput(format!("incident samples do not match {n} particles")));
    }
    let maps = source_maps(medium, cloud)?;
    let mut rhs = Vec::with_capacity(4 * n);
    for (v, g) in values.iter().zip(gradients) {
        rhs.extend([*v, g.x, g.y, g.z]);
    }
    let (x, stats) = if n <= 1 {
        (
            rhs,
            SolveStats {
                method: SolveMethod::Trivial,
                iterations: 0,
                residual: 0.0,
            },
        )
    } else {
        let opts = medium.solver();
        let coupling = PointCoupling::new(medium, &cloud.centers, Channels::ValueGradient)?;
        let out = match coupling.dense() {
            Some(c) => {
                let dim = 4 * n;
                let a = Mat::from_fn(dim, dim, |r, col| {
                    let m = col / 4;
                    let bo = col % 4;
                    let mut s = ZERO;
                    for b in 0..4 {
                        s += c[(r, 4 * m + b)] * maps[m][b][bo];
                    }
                    let d = if r == col { C64::from(1.0) } else { ZERO };
                    d - s
                });
                linalg::solve_dense(&a, &rhs)?
            }
            None => {
                let op = HardOperator {
                    coupling: &coupling,
                    maps: &maps,
                    failure: Mutex::new(None),
                };
                let out = linalg::gmres(&op, &rhs, None, opts);
                if let Some(e) = op.failure.into_inner().unwrap() {
                    return Err(e);
                }
                out?
            }
        };
        if !(out.1.residual <= opts.tol) {
            return Err(Error::NonConvergence {
                iterations: out.1.iterations,
                residual: out.1.residual,
            });
        }
        out
    };
    let vals = (0..n).map(|m| x[4 * m]).collect();
    let grads = (0..n)
        .map(|m| CVec3::new(x[4 * m + 1], x[4 * m + 2], x[4 * m + 3]))
        .collect();
    Ok((vals, grads, stats))
}

pub fn assemble_and_solve_hard(medium: &BackgroundMedium, cloud: &ParticleCloud, alpha: &Vec3) -> Result<HardSolveResult> {
    tensors(cloud)?;
    validate_cloud(cloud, medium).require_valid()?;
    let wave = medium.incident_wave(alpha)?;
    let values: Vec<C64> = cloud.centers.iter().map(|x| wave.value(x)).collect();
    let gradients: Vec<CVec3> = cloud.centers.iter().map(|x| wave.gradient(x)).collect();
    let (effective_values, effective_gradients, stats) = solve_system(medium, cloud, &values, &gradients)?;
    let maps = source_maps(medium, cloud)?;
    let mut charges = Vec::with_capacity(cloud.len());
    let mut dipole_moments = Vec::with_capacity(cloud.len());
    for (m, s) in maps.iter().enumerate() {
        let g = effective_gradients[m];
        charges.push(s[0][0] * effective_values[m]);
        let mut p = CVec3::zeros();
        for a in 0..3 {
            for b in 0..3 {
                p[a] += s[a + 1][b + 1] * g[b];
            }
        }
        dipole_moments.push(p);
    }
    Ok(HardSolveResult {
        alpha: *alpha,
        effective_values,
        effective_gradients,
        charges,
        dipole_moments,
        stats,
    })
}

/// `u_M(x) = u0(x) + sum_m G(x, x_m) Q_m + grad_y G(x, x_m) . P_m`.
pub fn evaluate_field_hard(
    result: &HardSolveResult,
    medium: &BackgroundMedium,
    cloud: &ParticleCloud,
    points: &[Vec3],
) -> Result<ComplexField> {
    coupling::check_far_from(&cloud.centers, points, exclusion_radius(cloud))?;
    let wave = medium.incident_wave(&result.alpha)?;
    let scattered = coupling::radiate(
        medium,
        &cloud.centers,
        &result.charges,
        Some(&result.dipole_moments),
        points,
    )?;
    let values = points.iter().zip(scattered).map(|(x, s)| wave.value(x) + s).collect();
    ComplexField::new(points.to_vec(), values, result.alpha)
}

pub fn far_field_hard(
    result: &HardSolveResult,
    medium: &BackgroundMedium,
    cloud: &ParticleCloud,
    directions: &DirectionSet,
) -> Result<FarField> {
    let wave = medium.incident_wave(&result.alpha)?;
    Ok(FarField {
        incident: result.alpha,
        directions: directions.clone(),
        background: medium.background_amplitude(&wave, directions),
        scattered: medium.source_far_field(
            &cloud.centers,
            &result.charges,
            Some(&result.dipole_moments),
            directions,
        )?,
    })
}
