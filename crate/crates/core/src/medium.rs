//! Background medium: wavenumber, refraction coefficient on a grid, the
//! background Green's function and the background scattering solution.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{check_unit, complexify, CMat3, CVec3, Vec3, C64, I, ZERO};
use crate::grid::Grid;
use crate::kernel;
use crate::linalg::{SolveStats, SolverOptions};
use crate::quadrature::DirectionSet;
use crate::volume::VolumeOperator;
use crate::{Error, Result};

/// Closed region `D` in which the refraction coefficient may differ from 1.
/// Nodes are classified by their voxel centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    All,
    Box { lower: Vec3, upper: Vec3 },
    Ball { center: Vec3, radius: f64 },
}

impl Region {
    pub fn contains(&self, x: &Vec3) -> bool {
        match self {
            Region::All => true,
            Region::Box { lower, upper } => crate::geometry::in_box(x, lower, upper),
            Region::Ball { center, radius } => (x - center).norm() < *radius,
        }
    }
}

/// Complex samples at a point set, for one incident direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    pub points: Vec<Vec3>,
    #[serde(with = "crate::cplx::vec")]
    pub values: Vec<C64>,
    pub incident_direction: Vec3,
}

impl ComplexField {
    pub fn new(points: Vec<Vec3>, values: Vec<C64>, incident_direction: Vec3) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        check_unit(&incident_direction, "incident direction")?;
        Ok(Self {
            points,
            values,
            incident_direction,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MediumData {
    k: f64,
    grid: Grid,
    region: Region,
    #[serde(with = "crate::cplx::vec")]
    n0: Vec<C64>,
    #[serde(default)]
    solver: SolverOptions,
}

/// Wavenumber, refraction coefficient `n0` and potential `q0 = k^2 (1 - n0)`
/// sampled at the nodes of a grid covering `D`. Immutable once built.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "MediumData", into = "MediumData")]
pub struct BackgroundMedium {
    k: f64,
    grid: Grid,
    region: Region,
    n0: Vec<C64>,
    q0: Vec<C64>,
    solver: SolverOptions,
    operator: Arc<VolumeOperator>,
}

impl std::fmt::Debug for BackgroundMedium {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackgroundMedium")
            .field("k", &self.k)
            .field("grid", &self.grid)
            .field("region", &self.region)
            .field("support", &self.operator.support().len())
            .finish()
    }
}

impl PartialEq for BackgroundMedium {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.grid == other.grid
            && self.region == other.region
            && self.n0 == other.n0
            && self.solver == other.solver
    }
}

impl From<BackgroundMedium> for MediumData {
    fn from(m: BackgroundMedium) -> Self {
        MediumData {
            k: m.k,
            grid: m.grid,
            region: m.region,
            n0: m.n0,
            solver: m.solver,
        }
    }
}

impl TryFrom<MediumData> for BackgroundMedium {
    type Error = Error;
    fn try_from(d: MediumData) -> Result<Self> {
        BackgroundMedium::new(d.k, d.grid, d.region, d.n0, d.solver)
    }
}

impl BackgroundMedium {
    /// Builds the medium from refraction samples at every grid node.
    pub fn new(
        k: f64,
        grid: Grid,
        region: Region,
        n0: Vec<C64>,
        solver: SolverOptions,
    ) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidInput(format!("wavenumber {k} must be positive")));
        }
        if n0.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} refraction samples for {} grid nodes",
                n0.len(),
                grid.len()
            )));
        }
        for (i, n) in n0.iter().enumerate() {
            if !(n.re.is_finite() && n.im.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite n0 at node {i}")));
            }
            if n.im < 0.0 {
                return Err(Error::Invariant(format!(
                    "Im q0 > 0 at node {i} (n0 = {n}); the background must be passive"
                )));
            }
            if *n != C64::from(1.0) && !region.contains(&grid.node(i)) {
                return Err(Error::Invariant(format!(
                    "n0 = {n} differs from 1 at node {i} outside the region D"
                )));
            }
        }
        let q0: Vec<C64> = n0.iter().map(|n| (C64::from(1.0) - n) * (k * k)).collect();
        let operator = Arc::new(VolumeOperator::new(&grid, k, q0.clone(), solver)?);
        Ok(Self {
            k,
            grid,
            region,
            n0,
            q0,
            solver,
            operator,
        })
    }

    /// Free space (`n0 = 1`) on the given grid.
    pub fn homogeneous(k: f64, grid: Grid) -> Result<Self> {
        let n = grid.len();
        Self::new(k, grid, Region::All, vec![C64::from(1.0); n], SolverOptions::default())
    }

    /// Samples `n0` from a function inside `region`, 1 outside.
    pub fn from_fn(
        k: f64,
        grid: Grid,
        region: Region,
        n0: impl Fn(&Vec3) -> C64,
        solver: SolverOptions,
    ) -> Result<Self> {
        let samples = grid
            .nodes()
            .iter()
            .map(|x| if region.contains(x) { n0(x) } else { C64::from(1.0) })
            .collect();
        Self::new(k, grid, region, samples, solver)
    }

    /// Same medium with different solver controls.
    pub fn with_solver(&self, solver: SolverOptions) -> Result<Self> {
        Self::new(self.k, self.grid.clone(), self.region.clone(), self.n0.clone(), solver)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn n0(&self) -> &[C64] {
        &self.n0
    }

    pub fn q0(&self) -> &[C64] {
        &self.q0
    }

    pub fn solver(&self) -> &SolverOptions {
        &self.solver
    }

    pub fn operator(&self) -> &VolumeOperator {
        &self.operator
    }

    /// True when `q0` vanishes identically and every kernel is analytic.
    pub fn is_free(&self) -> bool {
        self.operator.is_trivial()
    }

    /// `q0` at the voxel containing `x`, zero outside the grid.
    pub fn q0_at(&self, x: &Vec3) -> C64 {
        self.grid.locate(x).map(|i| self.q0[i]).unwrap_or(ZERO)
    }

    /// Background Green's function `G(x, y)`.
    pub fn green(&self, x: &Vec3, y: &Vec3) -> Result<C64> {
        self.green_columns(std::slice::from_ref(y), false)?.value(x, 0)
    }

    /// Gradient of `G(x, y)` with respect to `y`.
    pub fn green_grad_y(&self, x: &Vec3, y: &Vec3) -> Result<CVec3> {
        self.green_columns(std::slice::from_ref(y), true)?.grad_y(x, 0)
    }

    /// Precomputes `G(., y)` for a set of source points.
    pub fn green_columns(&self, sources: &[Vec3], with_gradient: bool) -> Result<GreenColumns<'_>> {
        GreenColumns::new(self, sources, with_gradient)
    }

    /// Background scattering solution `u0(., alpha)`.
    pub fn incident_wave(&self, alpha: &Vec3) -> Result<IncidentWave<'_>> {
        check_unit(alpha, "incident direction")?;
        let op = &self.operator;
        let rhs: Vec<C64> = op
            .support()
            .iter()
            .map(|&i| plane_wave(self.k, alpha, &self.grid.node(i)))
            .collect();
        let (values, stats) = op.solve_support(&rhs)?;
        Ok(IncidentWave {
            medium: self,
            alpha: *alpha,
            support_values: values,
            stats,
        })
    }

    /// `u0(x, alpha)` at the given points.
    pub fn incident_field(&self, alpha: &Vec3, points: &[Vec3]) -> Result<ComplexField> {
        let wave = self.incident_wave(alpha)?;
        let values = points.iter().map(|x| wave.value(x)).collect();
        ComplexField::new(points.to_vec(), values, *alpha)
    }

    /// Far field of point monopoles `Q` and dipoles `P` radiating in the
    /// background: the amplitude of `sum G(., x_m) Q_m + grad_y G(., x_m) . P_m`.
    pub fn source_far_field(
        &self,
        centers: &[Vec3],
        monopoles: &[C64],
        dipoles: Option<&[CVec3]>,
        directions: &DirectionSet,
    ) -> Result<Vec<C64>> {
        let k = self.k;
        let mut out: Vec<C64> = directions
            .directions
            .iter()
            .map(|b| {
                let mut s = ZERO;
                for (m, x) in centers.iter().enumerate() {
                    let e = plane_wave(k, &(-b), x);
                    let mut t = monopoles[m];
                    if let Some(p) = dipoles {
                        t -= I * k * crate::geometry::rdot(b, &p[m]);
                    }
                    s += e * t;
                }
                s / (4.0 * PI)
            })
            .collect();
        if self.is_free() || centers.is_empty() {
            return Ok(out);
        }
        // One background solve for the radiated field, then its volume far field.
        let op = &self.operator;
        let mut rhs = vec![ZERO; op.support().len()];
        for (m, x) in centers.iter().enumerate() {
            let col = op.source_column(x);
            for (r, c) in rhs.iter_mut().zip(&col) {
                *r += c * monopoles[m];
            }
            if let Some(p) = dipoles {
                let colg = op.source_column_grad(x);
                for (r, c) in rhs.iter_mut().zip(&colg) {
                    *r += c.dot(&p[m]);
                }
            }
        }
        let (w, _) = op.solve_support(&rhs)?;
        let corr = self.volume_far_field(&w, directions);
        for (o, c) in out.iter_mut().zip(&corr) {
            *o -= c;
        }
        Ok(out)
    }

    /// `(1/4pi) sum_s exp(-ik b.z_s) q0_s v_s h^3` over the support.
    fn volume_far_field(&self, support_values: &[C64], directions: &DirectionSet) -> Vec<C64> {
        let op = &self.operator;
        let h3 = self.grid.voxel_volume();
        directions
            .directions
            .iter()
            .map(|b| {
                let mut s = ZERO;
                for (j, &node) in op.support().iter().enumerate() {
                    let z = self.grid.node(node);
                    s += plane_wave(self.k, &(-b), &z) * self.q0[node] * support_values[j];
                }
                s * h3 / (4.0 * PI)
            })
            .collect()
    }

    /// Amplitude `A0(beta, alpha)` of the background alone.
    pub fn background_amplitude(&self, wave: &IncidentWave<'_>, directions: &DirectionSet) -> Vec<C64> {
        if self.is_free() {
            return vec![ZERO; directions.len()];
        }
        self.volume_far_field(&wave.support_values, directions)
            .into_iter()
            .map(|v| -v)
            .collect()
    }

    /// Samples the smoothness ratios of `g` and `G` over `|t - x| <= a`,
    /// `d <= |x - y| <= 2d`.
    pub fn lemma_bounds_check(&self, a: f64, d: f64, samples: usize, seed: u64) -> Result<LemmaReport> {
        if !(a > 0.0 && d >= 10.0 * a) {
            return Err(Error::InvalidInput(format!(
                "lemma check needs d >= 10a (a = {a}, d = {d})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = self.grid.lower;
        let span = self.grid.upper() - lo;
        let pool_size = 8.min(samples.max(1));
        let sources: Vec<Vec3> = (0..pool_size)
            .map(|_| {
                lo + Vec3::new(
                    rng.random::<f64>() * span.x,
                    rng.random::<f64>() * span.y,
                    rng.random::<f64>() * span.z,
                )
            })
            .collect();
        let cols = self.green_columns(&sources, false)?;
        let scale = a / (d * d) + self.k * a / d;
        let mut report = LemmaReport {
            a,
            d,
            samples,
            max_ratio_free: 0.0,
            max_ratio_background: 0.0,
            max_difference_free: 0.0,
            max_difference_background: 0.0,
        };
        for s in 0..samples {
            let m = s % pool_size;
            let y = sources[m];
            let x = y + random_unit(&mut rng) * (d * (1.0 + rng.random::<f64>()));
            let t = x + random_unit(&mut rng) * (a * rng.random::<f64>().cbrt());
            let df = (kernel::free_kernel(&t, &y, self.k)? - kernel::free_kernel(&x, &y, self.k)?).norm();
            let db = (cols.value(&t, m)? - cols.value(&x, m)?).norm();
            report.max_difference_free = report.max_difference_free.max(df);
            report.max_difference_background = report.max_difference_background.max(db);
            report.max_ratio_free = report.max_ratio_free.max(df / scale);
            report.max_ratio_background = report.max_ratio_background.max(db / scale);
        }
        Ok(report)
    }
}

/// Maximum sampled ratios `|K(t,y) - K(x,y)| / (a/d^2 + ka/d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub a: f64,
    pub d: f64,
    pub samples: usize,
    pub max_ratio_free: f64,
    pub max_ratio_background: f64,
    pub max_difference_free: f64,
    pub max_difference_background: f64,
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            2.0 * rng.random::<f64>() - 1.0,
            2.0 * rng.random::<f64>() - 1.0,
            2.0 * rng.random::<f64>() - 1.0,
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

#[inline]
pub fn plane_wave(k: f64, alpha: &Vec3, x: &Vec3) -> C64 {
    let (s, c) = (k * alpha.dot(x)).sin_cos();
    C64::new(c, s)
}

/// Background scattering solution for one incident direction.
pub struct IncidentWave<'a> {
    medium: &'a BackgroundMedium,
    pub alpha: Vec3,
    /// Values at the support nodes of `q0`.
    pub support_values: Vec<C64>,
    pub stats: SolveStats,
}

impl IncidentWave<'_> {
    pub fn value(&self, x: &Vec3) -> C64 {
        let m = self.medium;
        let inc = plane_wave(m.k, &self.alpha, x);
        if m.is_free() {
            return inc;
        }
        inc - m.operator.potential_at(x, &self.support_values)
    }

    pub fn gradient(&self, x: &Vec3) -> CVec3 {
        let m = self.medium;
        let inc = plane_wave(m.k, &self.alpha, x) * I * m.k;
        let g = complexify(&self.alpha) * inc;
        if m.is_free() {
            return g;
        }
        g - m.operator.potential_grad_at(x, &self.support_values)
    }

    /// Values at every grid node.
    pub fn grid_values(&self) -> Vec<C64> {
        let m = self.medium;
        let rhs: Vec<C64> = m
            .grid
            .nodes()
            .iter()
            .map(|x| plane_wave(m.k, &self.alpha, x))
            .collect();
        m.operator.extend(&rhs, &self.support_values)
    }
}

/// `G(., y_m)` for a fixed set of sources, with optional `y`-gradients.
pub struct GreenColumns<'a> {
    medium: &'a BackgroundMedium,
    pub sources: Vec<Vec3>,
    values: Vec<Vec<C64>>,
    gradients: Option<Vec<[Vec<C64>; 3]>>,
}

impl<'a> GreenColumns<'a> {
    fn new(medium: &'a BackgroundMedium, sources: &[Vec3], with_gradient: bool) -> Result<Self> {
        let op = &medium.operator;
        if medium.is_free() {
            return Ok(Self {
                medium,
                sources: sources.to_vec(),
                values: Vec::new(),
                gradients: None,
            });
        }
        let rhs: Vec<Vec<C64>> = sources.iter().map(|y| op.source_column(y)).collect();
        let values = op.solve_support_many(&rhs)?;
        let gradients = if with_gradient {
            let mut cols = Vec::with_capacity(3 * sources.len());
            for y in sources {
                let g = op.source_column_grad(y);
                for a in 0..3 {
                    cols.push(g.iter().map(|v| v[a]).collect::<Vec<_>>());
                }
            }
            let mut solved = op.solve_support_many(&cols)?.into_iter();
            let mut out = Vec::with_capacity(sources.len());
            for _ in sources {
                let gx = solved.next().unwrap();
                let gy = solved.next().unwrap();
                let gz = solved.next().unwrap();
                out.push([gx, gy, gz]);
            }
            Some(out)
        } else {
            None
        };
        Ok(Self {
            medium,
            sources: sources.to_vec(),
            values,
            gradients,
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    fn require_gradient(&self) -> Result<&Vec<[Vec<C64>; 3]>> {
        self.gradients
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("Green columns were built without gradients".into()))
    }

    /// `G(x, y_m)`.
    pub fn value(&self, x: &Vec3, m: usize) -> Result<C64> {
        let y = self.sources[m];
        let g = kernel::free_kernel(x, &y, self.medium.k)?;
        if self.medium.is_free() {
            return Ok(g);
        }
        Ok(g - self.medium.operator.potential_at(x, &self.values[m]))
    }

    /// Gradient of `G(x, y_m)` in `x`.
    pub fn grad_x(&self, x: &Vec3, m: usize) -> Result<CVec3> {
        let y = self.sources[m];
        let g = kernel::free_kernel_grad_x(x, &y, self.medium.k)?;
        if self.medium.is_free() {
            return Ok(g);
        }
        Ok(g - self.medium.operator.potential_grad_at(x, &self.values[m]))
    }

    /// Gradient of `G(x, y_m)` in `y`.
    pub fn grad_y(&self, x: &Vec3, m: usize) -> Result<CVec3> {
        let y = self.sources[m];
        let g = kernel::free_kernel_grad_y(x, &y, self.medium.k)?;
        if self.medium.is_free() {
            return Ok(g);
        }
        let cols = &self.require_gradient()?[m];
        let op = &self.medium.operator;
        Ok(CVec3::new(
            g.x - op.potential_at(x, &cols[0]),
            g.y - op.potential_at(x, &cols[1]),
            g.z - op.potential_at(x, &cols[2]),
        ))
    }

    /// Mixed derivative `d^2 G / dx_a dy_b` at `(x, y_m)`.
    pub fn mixed_hessian(&self, x: &Vec3, m: usize) -> Result<CMat3> {
        let y = self.sources[m];
        let mut h = kernel::free_kernel_mixed_hessian(x, &y, self.medium.k)?;
        if self.medium.is_free() {
            return Ok(h);
        }
        let cols = &self.require_gradient()?[m];
        let op = &self.medium.operator;
        for b in 0..3 {
            let gx = op.potential_grad_at(x, &cols[b]);
            for a in 0..3 {
                h[(a, b)] -= gx[a];
            }
        }
        Ok(h)
    }
}
