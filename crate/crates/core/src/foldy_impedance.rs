//! Many-body system for small impedance particles: effective fields at the
//! centres, point charges, the scattered field and its far-field amplitude.

use std::sync::Mutex;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::coupling::{self, Channels, PointCoupling};
use crate::geometry::{Vec3, C64, ZERO};
use crate::linalg::{self, LinearOperator, SolveMethod, SolveStats};
use crate::medium::{BackgroundMedium, ComplexField};
use crate::particles::{validate_cloud, ParticleCloud, ParticleKind, ShapeConstants, MIN_SPACING_RATIO};
use crate::quadrature::{DirectionSet, FarField};
use crate::{Error, Result};

/// Solution of the impedance many-body system for one incident direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceSolveResult {
    pub alpha: Vec3,
    /// Effective field `u_e(x_m)` acting on each particle.
    #[serde(with = "crate::cplx::vec")]
    pub effective_values: Vec<C64>,
    #[serde(with = "crate::cplx::vec")]
    pub charges: Vec<C64>,
    /// `c_m = 4 pi c1^2 c2^-1 a h_m / (1 + h_m)`, so that `Q_m = -c_m u_e(x_m)`.
    #[serde(with = "crate::cplx::vec")]
    pub coupling: Vec<C64>,
    pub stats: SolveStats,
}

/// Point charge of one impedance particle in a given effective field.
pub fn charge_from_effective_field(zeta: C64, a: f64, shape: &ShapeConstants, u_e: C64) -> Result<C64> {
    let area = shape.surface_area(a);
    let j = shape.surface_integral(a);
    let t = zeta * j / (4.0 * std::f64::consts::PI * area);
    let den = C64::from(1.0) + t;
    if den.norm() <= 1e-14 * t.norm().max(1.0) {
        return Err(Error::SingularImpedance {
            location: format!("zeta = {zeta}, a = {a}"),
        });
    }
    Ok(-zeta * area * u_e / den)
}

fn impedances(cloud: &ParticleCloud) -> Result<&[C64]> {
    match &cloud.kind {
        ParticleKind::Impedance { zeta } => Ok(zeta),
        ParticleKind::Hard { .. } => Err(Error::InvalidInput("expected an impedance cloud".into())),
    }
}

/// `c_m` for every particle.
pub fn coupling_constants(cloud: &ParticleCloud) -> Result<Vec<C64>> {
    let a = cloud.radius;
    let factor = cloud.shape.coupling_factor() * a;
    impedances(cloud)?
        .iter()
        .enumerate()
        .map(|(m, z)| {
            let h = cloud.shape.h_from_zeta(*z, a);
            let den = C64::from(1.0) + h;
            if den.norm() <= 1e-14 * h.norm().max(1.0) {
                return Err(Error::SingularImpedance {
                    location: format!("particle {m} at {:?}", cloud.centers[m]),
                });
            }
            Ok(h / den * factor)
        })
        .collect()
}

struct FoldyOperator<'a> {
    coupling: &'a PointCoupling<'a>,
    c: &'a [C64],
    failure: Mutex<Option<Error>>,
}

impl LinearOperator for FoldyOperator<'_> {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let s: Vec<C64> = x.iter().zip(self.c).map(|(v, c)| v * c).collect();
        match self.coupling.apply(&s) {
            Ok(y) => x.iter().zip(&y).map(|(a, b)| a + b).collect(),
            Err(e) => {
                self.failure.lock().unwrap().get_or_insert(e);
                vec![ZERO; x.len()]
            }
        }
    }
}

/// Solves `u_j + sum_{m != j} G(x_j, x_m) c_m u_m = f_j` for a given incident
/// field sampled at the centres.
pub fn solve_system(medium: &BackgroundMedium, cloud: &ParticleCloud, incident: &[C64]) -> Result<(Vec<C64>, Vec<C64>, SolveStats)> {
    let c = coupling_constants(cloud)?;
    let n = cloud.len();
    if incident.len() != n {
        return Err(Error::InvalidInput(format!("{} incident samples for {n} particles", incident.len())));
    }
    if n <= 1 || c.iter().all(|v| *v == ZERO) {
        let stats = SolveStats {
            method: SolveMethod::Trivial,
            iterations: 0,
            residual: 0.0,
        };
        return Ok((incident.to_vec(), c, stats));
    }
    let opts = medium.solver();
    let coupling = PointCoupling::new(medium, &cloud.centers, Channels::Value)?;
    let (u, stats) = match coupling.dense() {
        Some(g) => {
            let a = Mat::from_fn(n, n, |i, j| {
                let d = if i == j { C64::from(1.0) } else { ZERO };
                d + g[(i, j)] * c[j]
            });
            linalg::solve_dense(&a, incident)?
        }
        None => {
            let op = FoldyOperator {
                coupling: &coupling,
                c: &c,
                failure: Mutex::new(None),
            };
            let out = linalg::gmres(&op, incident, None, opts);
            if let Some(e) = op.failure.into_inner().unwrap() {
                return Err(e);
            }
            out?
        }
    };
    if !(stats.residual <= opts.tol) {
        return Err(Error::NonConvergence {
            iterations: stats.iterations,
            residual: stats.residual,
        });
    }
    Ok((u, c, stats))
}

/// Effective fields and charges for incidence along `alpha`.
pub fn assemble_and_solve(medium: &BackgroundMedium, cloud: &ParticleCloud, alpha: &Vec3) -> Result<ImpedanceSolveResult> {
    let zeta = impedances(cloud)?;
    validate_cloud(cloud, medium).require_valid()?;
    let wave = medium.incident_wave(alpha)?;
    let incident: Vec<C64> = cloud.centers.iter().map(|x| wave.value(x)).collect();
    let (effective_values, coupling, stats) = solve_system(medium, cloud, &incident)?;
    let charges = zeta
        .iter()
        .zip(&effective_values)
        .map(|(z, u)| charge_from_effective_field(*z, cloud.radius, &cloud.shape, *u))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImpedanceSolveResult {
        alpha: *alpha,
        effective_values,
        charges,
        coupling,
        stats,
    })
}

/// Smallest admissible distance between an evaluation point and a centre.
pub(crate) fn exclusion_radius(cloud: &ParticleCloud) -> f64 {
    cloud.min_spacing.unwrap_or(MIN_SPACING_RATIO * cloud.radius)
}

/// `u_M(x) = u0(x) + sum_m G(x, x_m) Q_m` away from the particles.
pub fn evaluate_field(
    result: &ImpedanceSolveResult,
    medium: &BackgroundMedium,
    cloud: &ParticleCloud,
    points: &[Vec3],
) -> Result<ComplexField> {
    coupling::check_far_from(&cloud.centers, points, exclusion_radius(cloud))?;
    let wave = medium.incident_wave(&result.alpha)?;
    let scattered = coupling::radiate(medium, &cloud.centers, &result.charges, None, points)?;
    let values = points.iter().zip(scattered).map(|(x, s)| wave.value(x) + s).collect();
    ComplexField::new(points.to_vec(), values, result.alpha)
}

/// Total amplitude `A0 + A_M` over the given directions.
pub fn far_field(
    result: &ImpedanceSolveResult,
    medium: &BackgroundMedium,
    cloud: &ParticleCloud,
    directions: &DirectionSet,
) -> Result<FarField> {
    let wave = medium.incident_wave(&result.alpha)?;
    Ok(FarField {
        incident: result.alpha,
        directions: directions.clone(),
        background: medium.background_amplitude(&wave, directions),
        scattered: medium.source_far_field(&cloud.centers, &result.charges, None, directions)?,
    })
}
