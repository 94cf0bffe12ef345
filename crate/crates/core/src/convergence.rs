//! Scale studies: particle clouds of shrinking radius compared with their
//! continuum limit, plus the counting-measure check and power-law fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::foldy_impedance::{self};
use crate::foldy_neumann::{self};
use crate::geometry::{Tensor3, Vec3, C64};
use crate::limit::{self, HardLimitForm, HardLimitProblem, ImpedanceLimitProblem};
use crate::medium::BackgroundMedium;
use crate::particles::{
    build_cloud_hard, build_cloud_impedance, CountingMeasure, CountingMode, LatticeOptions, ParticleCloud,
    ShapeConstants,
};
use crate::quadrature::DirectionSet;
use crate::{Error, Result};

/// Largest final error accepted by a successful study.
pub const TARGET_ERROR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    Impedance,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    pub lattice: LatticeOptions,
    pub shape: ShapeConstants,
    pub hard_form: HardLimitForm,
    pub hard_max_iter: usize,
    pub hard_tol: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            lattice: LatticeOptions::default(),
            shape: ShapeConstants::ball(),
            hard_form: HardLimitForm::ByParts,
            hard_max_iter: 200,
            hard_tol: 1e-10,
        }
    }
}

/// Weighted particle sum and the matching density integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingCheck {
    pub particle_sum: f64,
    pub integral: f64,
}

impl CountingCheck {
    pub fn relative_discrepancy(&self) -> f64 {
        if self.integral == 0.0 {
            self.particle_sum.abs()
        } else {
            (self.particle_sum - self.integral).abs() / self.integral.abs()
        }
    }
}

/// Results at one particle radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub a: f64,
    pub particles: usize,
    pub min_spacing: Option<f64>,
    /// `d / a^(1/3)` for impedance clouds, `d / a` for hard clouds.
    pub spacing_constant: Option<f64>,
    /// Max over probes of `|u_M - u| / |u|`.
    pub error_max: f64,
    pub error_rms: f64,
    /// Max over probes of `|u_M - u| / |u - u0|`.
    pub error_scattered: f64,
    pub max_charge: f64,
    /// Discrete forward amplitude of the cloud.
    #[serde(with = "crate::cplx")]
    pub forward_amplitude: C64,
    pub counting: CountingCheck,
    /// Counting check for a smooth non-constant test function.
    pub counting_smooth: CountingCheck,
}

/// Outcome of a scale study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStudy {
    pub mode: StudyMode,
    pub alpha: Vec3,
    pub probes: Vec<Vec3>,
    pub scales: Vec<ScaleRecord>,
    /// Radii that could not be realised or solved, with the reason.
    pub failures: Vec<(f64, String)>,
    pub fits: StudyFits,
}

/// Log-log slopes across the successful scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyFits {
    pub particles_exponent: Option<f64>,
    pub charge_exponent: Option<f64>,
    pub error_exponent: Option<f64>,
}

impl ScaleStudy {
    pub fn errors(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s.error_max).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.errors().windows(2).all(|w| w[1] < w[0])
    }

    /// No failed scale, strictly decreasing errors and a final error within
    /// [`TARGET_ERROR`].
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
            && !self.scales.is_empty()
            && self.strictly_decreasing()
            && self.scales.last().is_some_and(|s| s.error_max <= TARGET_ERROR)
    }
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Bounding box of the voxels where `density > 0`, or the whole grid.
pub fn occupied_box(medium: &BackgroundMedium, density: &[f64]) -> (Vec3, Vec3) {
    let grid = medium.grid();
    let half = Vec3::repeat(0.5 * grid.spacing);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for (i, d) in density.iter().enumerate() {
        if *d > 0.0 {
            let x = grid.node(i);
            lo = lo.inf(&(x - half));
            hi = hi.sup(&(x + half));
        }
    }
    if lo.x.is_finite() {
        (lo, hi)
    } else {
        (grid.lower, grid.upper())
    }
}

/// 26 points on a sphere of radius `5 diam` around the centre of a box.
pub fn default_probes(lower: &Vec3, upper: &Vec3) -> Vec<Vec3> {
    let centre = (lower + upper) * 0.5;
    let radius = 5.0 * (upper - lower).norm();
    let mut out = Vec::with_capacity(26);
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for l in -1i32..=1 {
                if i == 0 && j == 0 && l == 0 {
                    continue;
                }
                let d = Vec3::new(i as f64, j as f64, l as f64).normalize();
                out.push(centre + d * radius);
            }
        }
    }
    out
}

/// Weighted particle sum `w(a) sum f(x_m)` and the grid integral of `f`
/// times the density, both skipping an optional exclusion ball.
pub fn counting_measure_check(
    medium: &BackgroundMedium,
    cloud: &ParticleCloud,
    measure: &CountingMeasure,
    f: &(dyn Fn(&Vec3) -> f64 + Sync),
    exclusion: Option<(Vec3, f64)>,
) -> CountingCheck {
    let keep = |x: &Vec3| exclusion.is_none_or(|(c, r)| (x - c).norm() >= r);
    let w = measure.particle_weight(cloud.radius, &cloud.shape);
    let particle_sum = cloud.centers.iter().filter(|x| keep(x)).map(f).sum::<f64>() * w;
    let grid = medium.grid();
    let h3 = grid.voxel_volume();
    let integral = measure
        .density
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .map(|(i, d)| (grid.node(i), d))
        .filter(|(x, _)| keep(x))
        .map(|(x, d)| f(&x) * d)
        .sum::<f64>()
        * h3;
    CountingCheck { particle_sum, integral }
}

fn smooth_test_function(centre: Vec3, size: f64) -> impl Fn(&Vec3) -> f64 + Sync {
    move |x: &Vec3| {
        let d = (x - centre) / size;
        1.0 + 0.5 * (std::f64::consts::PI * d.x).cos() * (1.0 + d.y * d.z)
    }
}

fn check_scales(a: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidInput("empty radius sequence".into()));
    }
    if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) || a.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(format!("radii must be positive and strictly decreasing: {a:?}")));
    }
    Ok(())
}

fn field_errors(discrete: &[C64], limit: &[C64], incident: &[C64]) -> (f64, f64, f64) {
    let mut emax: f64 = 0.0;
    let mut esq = 0.0;
    let mut escat: f64 = 0.0;
    for ((d, l), u0) in discrete.iter().zip(limit).zip(incident) {
        let diff = (d - l).norm();
        let rel = diff / l.norm();
        emax = emax.max(rel);
        esq += rel * rel;
        escat = escat.max(diff / (l - u0).norm());
    }
    (emax, (esq / discrete.len().max(1) as f64).sqrt(), escat)
}

fn check_probes(cloud: &ParticleCloud, probes: &[Vec3]) -> Result<()> {
    if let Some(d) = cloud.min_spacing {
        crate::coupling::check_far_from(&cloud.centers, probes, 10.0 * d)?;
    }
    Ok(())
}

fn assemble_study(mode: StudyMode, alpha: Vec3, probes: Vec<Vec3>, outcomes: Vec<(f64, Result<ScaleRecord>)>) -> ScaleStudy {
    let mut scales = Vec::new();
    let mut failures = Vec::new();
    for (a, r) in outcomes {
        match r {
            Ok(rec) => scales.push(rec),
            Err(e) => failures.push((a, e.to_string())),
        }
    }
    let a: Vec<f64> = scales.iter().map(|s| s.a).collect();
    let m: Vec<f64> = scales.iter().map(|s| s.particles as f64).collect();
    let q: Vec<f64> = scales.iter().map(|s| s.max_charge).collect();
    let e: Vec<f64> = scales.iter().map(|s| s.error_max).collect();
    let fits = StudyFits {
        particles_exponent: fit_power_law(&a, &m),
        charge_exponent: fit_power_law(&a, &q),
        error_exponent: fit_power_law(&a, &e),
    };
    ScaleStudy {
        mode,
        alpha,
        probes,
        scales,
        failures,
        fits,
    }
}

/// Impedance clouds with fixed `(h, N)` against the limit with
/// `p = 4 pi c1^2 N h / (c2 (1 + h))`.
pub fn run_impedance_study(
    medium: &BackgroundMedium,
    h: &[C64],
    n: &[f64],
    a_sequence: &[f64],
    alpha: &Vec3,
    probes: Option<Vec<Vec3>>,
    options: &StudyOptions,
) -> Result<ScaleStudy> {
    check_scales(a_sequence)?;
    let (lo, hi) = occupied_box(medium, n);
    let probes = probes.unwrap_or_else(|| default_probes(&lo, &hi));
    let p = limit::potential_from_h_n(h, n, &options.shape)?;
    let problem = ImpedanceLimitProblem::new(medium, p)?;
    let sol = limit::solve_impedance_limit(&problem, alpha)?;
    let reference = limit::evaluate_limit(&problem, &sol, &probes)?.values;
    let incident = medium.incident_field(alpha, &probes)?.values;
    let measure = CountingMeasure::new(CountingMode::PerLength, n.to_vec(), &options.shape)?;
    let smooth = smooth_test_function((lo + hi) * 0.5, (hi - lo).max());
    let forward = DirectionSet::from_directions(vec![*alpha])?;
    let outcomes: Vec<(f64, Result<ScaleRecord>)> = a_sequence
        .par_iter()
        .map(|&a| {
            let run = || -> Result<ScaleRecord> {
                let cloud = build_cloud_impedance(medium, a, h, n, options.shape, &options.lattice)?;
                check_probes(&cloud, &probes)?;
                let res = foldy_impedance::assemble_and_solve(medium, &cloud, alpha)?;
                let field = foldy_impedance::evaluate_field(&res, medium, &cloud, &probes)?;
                let (error_max, error_rms, error_scattered) = field_errors(&field.values, &reference, &incident);
                let ff = foldy_impedance::far_field(&res, medium, &cloud, &forward)?;
                Ok(ScaleRecord {
                    a,
                    particles: cloud.len(),
                    min_spacing: cloud.min_spacing,
                    spacing_constant: cloud.min_spacing.map(|d| d / a.cbrt()),
                    error_max,
                    error_rms,
                    error_scattered,
                    max_charge: res.charges.iter().map(|q| q.norm()).fold(0.0, f64::max),
                    forward_amplitude: ff.scattered[0],
                    counting: counting_measure_check(medium, &cloud, &measure, &|_| 1.0, None),
                    counting_smooth: counting_measure_check(medium, &cloud, &measure, &smooth, None),
                })
            };
            (a, run())
        })
        .collect();
    Ok(assemble_study(StudyMode::Impedance, *alpha, probes, outcomes))
}

/// Hard clouds with fixed `nu` and `beta` against the hard limit.
#[allow(clippy::too_many_arguments)]
pub fn run_hard_study(
    medium: &BackgroundMedium,
    nu: &[f64],
    beta: Tensor3,
    a_sequence: &[f64],
    alpha: &Vec3,
    probes: Option<Vec<Vec3>>,
    options: &StudyOptions,
) -> Result<ScaleStudy> {
    check_scales(a_sequence)?;
    let (lo, hi) = occupied_box(medium, nu);
    let probes = probes.unwrap_or_else(|| default_probes(&lo, &hi));
    let measure = CountingMeasure::new(CountingMode::PerVolume, nu.to_vec(), &options.shape)?;
    let problem = HardLimitProblem::with_uniform_beta(medium, nu.to_vec(), beta, options.hard_form)?;
    let sol = limit::solve_hard_limit(&problem, alpha, options.hard_max_iter, options.hard_tol)?;
    let reference = limit::evaluate_hard_limit(&problem, &sol, &probes)?.values;
    let incident = medium.incident_field(alpha, &probes)?.values;
    let smooth = smooth_test_function((lo + hi) * 0.5, (hi - lo).max());
    let forward = DirectionSet::from_directions(vec![*alpha])?;
    let outcomes: Vec<(f64, Result<ScaleRecord>)> = a_sequence
        .par_iter()
        .map(|&a| {
            let run = || -> Result<ScaleRecord> {
                let cloud = build_cloud_hard(medium, a, nu, beta, options.shape, &options.lattice)?;
                check_probes(&cloud, &probes)?;
                let res = foldy_neumann::assemble_and_solve_hard(medium, &cloud, alpha)?;
                let field = foldy_neumann::evaluate_field_hard(&res, medium, &cloud, &probes)?;
                let (error_max, error_rms, error_scattered) = field_errors(&field.values, &reference, &incident);
                let ff = foldy_neumann::far_field_hard(&res, medium, &cloud, &forward)?;
                Ok(ScaleRecord {
                    a,
                    particles: cloud.len(),
                    min_spacing: cloud.min_spacing,
                    spacing_constant: cloud.min_spacing.map(|d| d / a),
                    error_max,
                    error_rms,
                    error_scattered,
                    max_charge: res.charges.iter().map(|q| q.norm()).fold(0.0, f64::max),
                    forward_amplitude: ff.scattered[0],
                    counting: counting_measure_check(medium, &cloud, &measure, &|_| 1.0, None),
                    counting_smooth: counting_measure_check(medium, &cloud, &measure, &smooth, None),
                })
            };
            (a, run())
        })
        .collect();
    Ok(assemble_study(StudyMode::Hard, *alpha, probes, outcomes))
}
