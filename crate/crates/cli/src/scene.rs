//! Scene files: one JSON document describing the medium, the scatterers and
//! the parameters of every workflow.

use serde::{Deserialize, Serialize};
use smallbody::convergence::StudyOptions;
use smallbody::foldy_neumann::ball_polarizability;
use smallbody::geometry::{Tensor3, Vec3, C64};
use smallbody::grid::Grid;
use smallbody::limit::HardLimitForm;
use smallbody::linalg::SolverOptions;
use smallbody::medium::{BackgroundMedium, Region};
use smallbody::particles::{
    build_cloud_hard, build_cloud_impedance, LatticeOptions, ParticleCloud, ShapeConstants,
};
use smallbody::{Error, Result};

pub const SCENE_VERSION: u32 = 1;

/// Complex number as `{"re": .., "im": ..}`; `im` may be omitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cplx {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<Cplx> for C64 {
    fn from(c: Cplx) -> Self {
        C64::new(c.re, c.im)
    }
}

pub trait ProfileValue: Copy {
    fn lerp(a: Self, b: Self, t: f64) -> Self;
}

impl ProfileValue for f64 {
    fn lerp(a: Self, b: Self, t: f64) -> Self {
        a + (b - a) * t
    }
}

impl ProfileValue for Cplx {
    fn lerp(a: Self, b: Self, t: f64) -> Self {
        Cplx {
            re: f64::lerp(a.re, b.re, t),
            im: f64::lerp(a.im, b.im, t),
        }
    }
}

/// A scalar field on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile<V> {
    Constant { value: V },
    /// Piecewise linear in the distance from `center`, constant beyond the ends.
    Radial { center: Vec3, radii: Vec<f64>, values: Vec<V> },
    /// One value per node, `x` fastest.
    Table { values: Vec<V> },
    /// `inside` on the closed box, `outside` elsewhere.
    #[serde(rename = "box")]
    Block { lower: Vec3, upper: Vec3, inside: V, outside: V },
}

impl<V: ProfileValue> Profile<V> {
    fn check(&self, grid: &Grid, what: &str) -> Result<()> {
        match self {
            Profile::Radial { radii, values, .. } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return Err(Error::InvalidInput(format!(
                        "{what}: radial profile needs matching non-empty radii and values"
                    )));
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 0.0 {
                    return Err(Error::InvalidInput(format!("{what}: radii must be non-negative and increasing")));
                }
            }
            Profile::Table { values } if values.len() != grid.len() => {
                return Err(Error::InvalidInput(format!(
                    "{what}: table has {} values for {} nodes",
                    values.len(),
                    grid.len()
                )));
            }
            _ => {}
        }
        Ok(())
    }

    fn at(&self, idx: usize, x: &Vec3) -> V {
        match self {
            Profile::Constant { value } => *value,
            Profile::Radial { center, radii, values } => {
                let r = (x - center).norm();
                let j = radii.partition_point(|v| *v <= r);
                if j == 0 {
                    values[0]
                } else if j == radii.len() {
                    values[j - 1]
                } else {
                    let t = (r - radii[j - 1]) / (radii[j] - radii[j - 1]);
                    V::lerp(values[j - 1], values[j], t)
                }
            }
            Profile::Table { values } => values[idx],
            Profile::Block { lower, upper, inside, outside } => {
                if smallbody::geometry::in_box(x, lower, upper) {
                    *inside
                } else {
                    *outside
                }
            }
        }
    }

    /// Samples at every node.
    pub fn sample(&self, grid: &Grid, what: &str) -> Result<Vec<V>> {
        self.check(grid, what)?;
        Ok(grid.nodes().iter().enumerate().map(|(i, x)| self.at(i, x)).collect())
    }
}

fn complex_samples(p: &Profile<Cplx>, grid: &Grid, what: &str) -> Result<Vec<C64>> {
    Ok(p.sample(grid, what)?.into_iter().map(C64::from).collect())
}

fn real_samples(p: &Profile<f64>, grid: &Grid, what: &str) -> Result<Vec<f64>> {
    let v = p.sample(grid, what)?;
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what}: non-finite value at node {i}")));
    }
    Ok(v)
}

fn one() -> Profile<Cplx> {
    Profile::Constant {
        value: Cplx { re: 1.0, im: 0.0 },
    }
}

fn default_region() -> Region {
    Region::All
}

/// Axis-aligned box covered by cubic voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec3,
    pub upper: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub k: f64,
    #[serde(rename = "box")]
    pub bounds: BoxSpec,
    /// Voxels along the longest side of the box; every side must be a whole
    /// number of voxels.
    pub resolution: usize,
    #[serde(default = "default_region")]
    pub region: Region,
    /// Refraction coefficient inside the region; 1 outside.
    #[serde(default = "one")]
    pub n0: Profile<Cplx>,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl MediumSpec {
    pub fn grid(&self) -> Result<Grid> {
        let ext = self.bounds.upper - self.bounds.lower;
        if self.resolution == 0 || ext.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidInput("box must have positive extent and resolution".into()));
        }
        let h = ext.max() / self.resolution as f64;
        let mut dims = [0usize; 3];
        for (d, e) in dims.iter_mut().zip(ext.iter()) {
            let n = (e / h).round();
            if (n * h - e).abs() > 1e-9 * e || n < 1.0 {
                return Err(Error::InvalidInput(format!(
                    "box side {e} is not a whole number of voxels of side {h}"
                )));
            }
            *d = n as usize;
        }
        Grid::new(self.bounds.lower, h, dims)
    }

    pub fn build(&self, tol: Option<f64>) -> Result<BackgroundMedium> {
        let grid = self.grid()?;
        let mut solver = self.solver;
        if let Some(t) = tol {
            solver.tol = t;
        }
        let inside = complex_samples(&self.n0, &grid, "medium.n0")?;
        let n0 = grid
            .nodes()
            .iter()
            .zip(inside)
            .map(|(x, v)| if self.region.contains(x) { v } else { C64::from(1.0) })
            .collect();
        BackgroundMedium::new(self.k, grid, self.region.clone(), n0, solver)
    }
}

/// Values a profile takes outside the region are replaced by zero.
fn restrict<T: Copy + Default>(medium: &BackgroundMedium, v: Vec<T>) -> Vec<T> {
    medium
        .grid()
        .nodes()
        .iter()
        .zip(v)
        .map(|(x, s)| if medium.region().contains(x) { s } else { T::default() })
        .collect()
}

fn default_cell_voxels() -> usize {
    LatticeOptions::default().cell_voxels
}

/// Scatterers, listed explicitly or generated from densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CloudSpec {
    /// Exactly one of `zeta` (boundary impedances) or `h` (scaled, `zeta = h/a`).
    Impedance {
        radius: f64,
        centers: Vec<Vec3>,
        #[serde(default)]
        zeta: Option<Vec<Cplx>>,
        #[serde(default)]
        h: Option<Vec<Cplx>>,
        #[serde(default)]
        shape: ShapeConstants,
    },
    Hard {
        radius: f64,
        centers: Vec<Vec3>,
        #[serde(default)]
        beta: Option<Tensor3>,
        #[serde(default)]
        shape: ShapeConstants,
    },
    ImpedanceDensity {
        radius: f64,
        h: Profile<Cplx>,
        n: Profile<f64>,
        #[serde(default)]
        shape: ShapeConstants,
        #[serde(default = "default_cell_voxels")]
        cell_voxels: usize,
    },
    HardDensity {
        radius: f64,
        nu: Profile<f64>,
        #[serde(default)]
        beta: Option<Tensor3>,
        #[serde(default)]
        shape: ShapeConstants,
        #[serde(default = "default_cell_voxels")]
        cell_voxels: usize,
    },
}

fn lattice(cell_voxels: usize) -> LatticeOptions {
    LatticeOptions {
        cell_voxels,
        ..Default::default()
    }
}

impl CloudSpec {
    pub fn build(&self, medium: &BackgroundMedium) -> Result<ParticleCloud> {
        match self {
            CloudSpec::Impedance { radius, centers, zeta, h, shape } => {
                let zeta: Vec<C64> = match (zeta, h) {
                    (Some(z), None) => z.iter().map(|v| C64::from(*v)).collect(),
                    (None, Some(h)) => h.iter().map(|v| shape.zeta_from_h(C64::from(*v), *radius)).collect(),
                    _ => {
                        return Err(Error::InvalidInput(
                            "impedance cloud needs exactly one of `zeta` or `h`".into(),
                        ))
                    }
                };
                ParticleCloud::impedance(centers.clone(), *radius, zeta, *shape)
            }
            CloudSpec::Hard { radius, centers, beta, shape } => {
                let beta = beta.unwrap_or_else(ball_polarizability);
                ParticleCloud::hard(centers.clone(), *radius, vec![beta; centers.len()], *shape)
            }
            CloudSpec::ImpedanceDensity { radius, h, n, shape, cell_voxels } => {
                let g = medium.grid();
                let h = complex_samples(h, g, "cloud.h")?;
                let n = restrict(medium, real_samples(n, g, "cloud.n")?);
                build_cloud_impedance(medium, *radius, &h, &n, *shape, &lattice(*cell_voxels))
            }
            CloudSpec::HardDensity { radius, nu, beta, shape, cell_voxels } => {
                let nu = restrict(medium, real_samples(nu, medium.grid(), "cloud.nu")?);
                let beta = beta.unwrap_or_else(ball_polarizability);
                build_cloud_hard(medium, *radius, &nu, beta, *shape, &lattice(*cell_voxels))
            }
        }
    }
}

fn default_max_iter() -> usize {
    200
}

fn default_hard_tol() -> f64 {
    1e-10
}

/// Continuum limit to solve on the medium's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LimitSpec {
    /// Additional potential `p`, zeroed outside the region.
    Impedance { p: Profile<Cplx> },
    /// Potential generated by scaled impedance `h` and density `n`.
    ImpedanceDensity {
        h: Profile<Cplx>,
        n: Profile<f64>,
        #[serde(default)]
        shape: ShapeConstants,
    },
    Hard {
        nu: Profile<f64>,
        #[serde(default)]
        beta: Option<Tensor3>,
        #[serde(default)]
        form: HardLimitForm,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_hard_tol")]
        tol: f64,
    },
}

impl LimitSpec {
    pub fn potential(&self, medium: &BackgroundMedium) -> Result<Vec<C64>> {
        let g = medium.grid();
        match self {
            LimitSpec::Impedance { p } => Ok(restrict(medium, complex_samples(p, g, "limit.p")?)),
            LimitSpec::ImpedanceDensity { h, n, shape } => {
                let h = complex_samples(h, g, "limit.h")?;
                let n = restrict(medium, real_samples(n, g, "limit.n")?);
                smallbody::limit::potential_from_h_n(&h, &n, shape)
            }
            LimitSpec::Hard { .. } => Err(Error::InvalidInput("hard limit has no potential".into())),
        }
    }

    pub fn nu(&self, medium: &BackgroundMedium) -> Result<Vec<f64>> {
        match self {
            LimitSpec::Hard { nu, .. } => Ok(restrict(medium, real_samples(nu, medium.grid(), "limit.nu")?)),
            _ => Err(Error::InvalidInput("impedance limit has no nu".into())),
        }
    }
}

/// Scale study parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudySpec {
    Impedance {
        radii: Vec<f64>,
        h: Profile<Cplx>,
        n: Profile<f64>,
        #[serde(default)]
        probes: Option<Vec<Vec3>>,
        #[serde(default)]
        options: StudyOptions,
    },
    Hard {
        radii: Vec<f64>,
        nu: Profile<f64>,
        #[serde(default)]
        beta: Option<Tensor3>,
        #[serde(default)]
        probes: Option<Vec<Vec3>>,
        #[serde(default)]
        options: StudyOptions,
    },
}

impl StudySpec {
    pub fn impedance_fields(medium: &BackgroundMedium, h: &Profile<Cplx>, n: &Profile<f64>) -> Result<(Vec<C64>, Vec<f64>)> {
        let g = medium.grid();
        Ok((complex_samples(h, g, "study.h")?, restrict(medium, real_samples(n, g, "study.n")?)))
    }

    pub fn hard_field(medium: &BackgroundMedium, nu: &Profile<f64>) -> Result<Vec<f64>> {
        Ok(restrict(medium, real_samples(nu, medium.grid(), "study.nu")?))
    }
}

/// Material design parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSceneSpec {
    /// Target refraction coefficient inside the region; `n0` outside.
    pub target_n: Profile<Cplx>,
    /// Particle radius of the realised cloud.
    pub a: f64,
    #[serde(default)]
    pub shape: ShapeConstants,
    #[serde(default)]
    pub lattice: LatticeOptions,
    /// Radii for the verification study; empty skips it.
    #[serde(default)]
    pub verify_radii: Vec<f64>,
    #[serde(default)]
    pub probes: Option<Vec<Vec3>>,
}

impl DesignSceneSpec {
    pub fn target(&self, medium: &BackgroundMedium) -> Result<Vec<C64>> {
        let inside = complex_samples(&self.target_n, medium.grid(), "design.target_n")?;
        Ok(medium
            .grid()
            .nodes()
            .iter()
            .zip(inside)
            .zip(medium.n0())
            .map(|((x, t), n0)| if medium.region().contains(x) { t } else { *n0 })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarFieldSpec {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for FarFieldSpec {
    fn default() -> Self {
        Self { n_theta: 32, n_phi: 64 }
    }
}

fn default_incident() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub format_version: u32,
    pub medium: MediumSpec,
    /// Unit propagation direction of the incident plane wave.
    #[serde(default = "default_incident")]
    pub incident: Vec3,
    /// Points at which fields are reported.
    #[serde(default)]
    pub points: Vec<Vec3>,
    #[serde(default)]
    pub far_field: FarFieldSpec,
    #[serde(default)]
    pub cloud: Option<CloudSpec>,
    #[serde(default)]
    pub limit: Option<LimitSpec>,
    #[serde(default)]
    pub study: Option<StudySpec>,
    #[serde(default)]
    pub design: Option<DesignSceneSpec>,
}

impl Scene {
    pub fn parse(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("scene: {e}")))?;
        if scene.format_version != SCENE_VERSION {
            return Err(Error::InvalidInput(format!(
                "scene format_version {} is not supported (expected {SCENE_VERSION})",
                scene.format_version
            )));
        }
        smallbody::geometry::check_unit(&scene.incident, "incident direction")
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(scene)
    }

    pub fn hard_beta(beta: &Option<Tensor3>) -> Tensor3 {
        beta.unwrap_or_else(ball_polarizability)
    }

    pub fn hard_limit_params(&self) -> Option<(HardLimitForm, usize, f64)> {
        match &self.limit {
            Some(LimitSpec::Hard { form, max_iter, tol, .. }) => Some((*form, *max_iter, *tol)),
            _ => None,
        }
    }
}
