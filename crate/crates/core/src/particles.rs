//! Particle clouds: lattice placement from densities, impedances, and the
//! small-body admissibility checks.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{Tensor3, Vec3, C64};
use crate::medium::BackgroundMedium;
use crate::{Error, Result};

/// Largest `ka` accepted as small.
pub const MAX_KA: f64 = 0.1;
/// Smallest admissible ratio of centre spacing to radius.
pub const MIN_SPACING_RATIO: f64 = 10.0;
/// Largest admissible `(nu / c3)^(1/3)`, the radius-to-spacing ratio of a hard lattice.
pub const MAX_HARD_FILL_RATIO: f64 = 0.1;
/// Default cap on particle counts.
pub const DEFAULT_MAX_PARTICLES: usize = 200_000;

/// Shape constants: surface area `c1 a^2`, double surface integral `c2 a^3`, volume `c3 a^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for ShapeConstants {
    fn default() -> Self {
        Self::ball()
    }
}

impl ShapeConstants {
    pub fn ball() -> Self {
        Self {
            c1: 4.0 * PI,
            c2: 16.0 * PI * PI,
            c3: 4.0 * PI / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.c1, self.c2, self.c3].iter().all(|c| c.is_finite() && *c > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("shape constants must be positive: {self:?}")))
        }
    }

    pub fn surface_area(&self, a: f64) -> f64 {
        self.c1 * a * a
    }

    pub fn surface_integral(&self, a: f64) -> f64 {
        self.c2 * a * a * a
    }

    pub fn volume(&self, a: f64) -> f64 {
        self.c3 * a * a * a
    }

    /// `4 pi c1^2 / c2`, equal to `4 pi` for balls.
    pub fn coupling_factor(&self) -> f64 {
        4.0 * PI * self.c1 * self.c1 / self.c2
    }

    /// Boundary impedance `zeta = 4 pi c1 h / (c2 a)` for a scaled impedance `h`.
    pub fn zeta_from_h(&self, h: C64, a: f64) -> C64 {
        h * (4.0 * PI * self.c1 / (self.c2 * a))
    }

    /// Inverse of [`Self::zeta_from_h`].
    pub fn h_from_zeta(&self, zeta: C64, a: f64) -> C64 {
        zeta * (self.c2 * a / (4.0 * PI * self.c1))
    }
}

/// Per-particle data distinguishing the two boundary conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParticleKind {
    Impedance {
        #[serde(with = "crate::cplx::vec")]
        zeta: Vec<C64>,
    },
    Hard {
        beta: Vec<Tensor3>,
    },
}

/// How a cloud was derived from a density, cell by cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub cell_voxels: usize,
    pub cell_side: f64,
    pub cells: Vec<CellPlacement>,
    /// Target of the weighted count summed over cells.
    pub target_measure: f64,
    /// Weighted count actually placed.
    pub placed_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPlacement {
    pub cell: [usize; 3],
    /// Exact (unrounded) particle count the density asks for.
    pub target: f64,
    pub count: usize,
    pub box_lower: Vec3,
    pub box_upper: Vec3,
    /// Nearest-neighbour spacing of the lattice in this cell.
    pub spacing: Option<f64>,
}

/// A set of identical small particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub centers: Vec<Vec3>,
    /// Characteristic radius `a`.
    pub radius: f64,
    /// Minimum pairwise centre distance `d`, absent below two particles.
    pub min_spacing: Option<f64>,
    pub shape: ShapeConstants,
    #[serde(flatten)]
    pub kind: ParticleKind,
    /// Volume of the region the particles were spread over, when known.
    #[serde(default)]
    pub occupied_volume: Option<f64>,
    #[serde(default)]
    pub placement: Option<Placement>,
}

impl ParticleCloud {
    /// Impedance cloud from explicit centres and boundary impedances.
    pub fn impedance(centers: Vec<Vec3>, radius: f64, zeta: Vec<C64>, shape: ShapeConstants) -> Result<Self> {
        if centers.len() != zeta.len() {
            return Err(Error::InvalidInput(format!(
                "{} centres but {} impedances",
                centers.len(),
                zeta.len()
            )));
        }
        Self::assemble(centers, radius, shape, ParticleKind::Impedance { zeta })
    }

    /// Hard cloud from explicit centres and polarizability tensors.
    pub fn hard(centers: Vec<Vec3>, radius: f64, beta: Vec<Tensor3>, shape: ShapeConstants) -> Result<Self> {
        if centers.len() != beta.len() {
            return Err(Error::InvalidInput(format!(
                "{} centres but {} tensors",
                centers.len(),
                beta.len()
            )));
        }
        Self::assemble(centers, radius, shape, ParticleKind::Hard { beta })
    }

    fn assemble(centers: Vec<Vec3>, radius: f64, shape: ShapeConstants, kind: ParticleKind) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!("particle radius {radius} must be positive")));
        }
        shape.validate()?;
        if centers.iter().any(|c| !c.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("non-finite particle centre".into()));
        }
        if let ParticleKind::Impedance { zeta } = &kind {
            if let Some((m, z)) = zeta.iter().enumerate().find(|(_, z)| z.im > 0.0 || !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Invariant(format!(
                    "impedance of particle {m} is {z}; Im zeta must be <= 0"
                )));
            }
        }
        let min_spacing = min_pair_distance(&centers).map(|(d, _, _)| d);
        if min_spacing == Some(0.0) {
            return Err(Error::InvalidInput("coincident particle centres".into()));
        }
        Ok(Self {
            centers,
            radius,
            min_spacing,
            shape,
            kind,
            occupied_volume: None,
            placement: None,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn is_hard(&self) -> bool {
        matches!(self.kind, ParticleKind::Hard { .. })
    }

    /// Scaled impedances `h_m`, for impedance clouds.
    pub fn h_values(&self) -> Option<Vec<C64>> {
        match &self.kind {
            ParticleKind::Impedance { zeta } => Some(
                zeta.iter()
                    .map(|z| self.shape.h_from_zeta(*z, self.radius))
                    .collect(),
            ),
            ParticleKind::Hard { .. } => None,
        }
    }
}

/// Continuum density behind a cloud: `N` with weight `a` per particle, or
/// `nu` with weight `c3 a^3` per particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingMeasure {
    pub mode: CountingMode,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// Impedance particles, `M = O(1/a)`.
    PerLength,
    /// Hard particles, `M = O(1/a^3)`.
    PerVolume,
}

impl CountingMeasure {
    pub fn new(mode: CountingMode, density: Vec<f64>, shape: &ShapeConstants) -> Result<Self> {
        for (i, v) in density.iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Invariant(format!("density {v} at node {i} must be >= 0")));
            }
            if mode == CountingMode::PerVolume && *v > 0.0 {
                let ratio = (v / shape.c3).cbrt();
                if ratio > MAX_HARD_FILL_RATIO {
                    return Err(Error::Compatibility { node: i, ratio });
                }
            }
        }
        Ok(Self { mode, density })
    }

    /// Measure carried by one particle of radius `a`.
    pub fn particle_weight(&self, a: f64, shape: &ShapeConstants) -> f64 {
        match self.mode {
            CountingMode::PerLength => a,
            CountingMode::PerVolume => shape.volume(a),
        }
    }
}

/// Controls for lattice placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeOptions {
    /// Side of a placement cell, in voxels.
    pub cell_voxels: usize,
    pub max_particles: usize,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        Self {
            cell_voxels: 4,
            max_particles: DEFAULT_MAX_PARTICLES,
        }
    }
}

/// Impedance cloud with `round(integral_cell N / a)` particles per cell and
/// `zeta = 4 pi c1 h / (c2 a)`.
pub fn build_cloud_impedance(
    medium: &BackgroundMedium,
    a: f64,
    h: &[C64],
    n: &[f64],
    shape: ShapeConstants,
    opts: &LatticeOptions,
) -> Result<ParticleCloud> {
    let grid = medium.grid();
    check_common(medium, a, n.len(), &shape)?;
    if h.len() != grid.len() {
        return Err(Error::InvalidInput(format!("{} h samples for {} nodes", h.len(), grid.len())));
    }
    for (i, hv) in h.iter().enumerate() {
        if !(hv.re.is_finite() && hv.im.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite h at node {i}")));
        }
        if hv.im > 0.0 {
            return Err(Error::Invariant(format!("Im h = {} > 0 at node {i}", hv.im)));
        }
        if n[i] > 0.0 && *hv == C64::from(-1.0) {
            return Err(Error::SingularImpedance {
                location: format!("node {i} at {:?}", grid.node(i)),
            });
        }
    }
    let measure = CountingMeasure::new(CountingMode::PerLength, n.to_vec(), &shape)?;
    let (centers, placement, owners) = place(medium, a, &measure, &shape, opts)?;
    let zeta = centers
        .iter()
        .zip(&owners)
        .map(|(x, cell_nodes)| {
            let hv = match grid.locate(x) {
                Some(i) if n[i] > 0.0 => h[i],
                _ => weighted_mean(cell_nodes, h, n),
            };
            shape.zeta_from_h(hv, a)
        })
        .collect();
    let mut cloud = ParticleCloud::impedance(centers, a, zeta, shape)?;
    finish(&mut cloud, placement, a)?;
    Ok(cloud)
}

/// Hard cloud with `round(integral_cell nu / (c3 a^3))` particles per cell.
pub fn build_cloud_hard(
    medium: &BackgroundMedium,
    a: f64,
    nu: &[f64],
    beta: Tensor3,
    shape: ShapeConstants,
    opts: &LatticeOptions,
) -> Result<ParticleCloud> {
    check_common(medium, a, nu.len(), &shape)?;
    if beta.iter().flatten().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("non-finite polarizability tensor".into()));
    }
    let measure = CountingMeasure::new(CountingMode::PerVolume, nu.to_vec(), &shape)?;
    let (centers, placement, _) = place(medium, a, &measure, &shape, opts)?;
    let m = centers.len();
    let mut cloud = ParticleCloud::hard(centers, a, vec![beta; m], shape)?;
    finish(&mut cloud, placement, a)?;
    Ok(cloud)
}

fn check_common(medium: &BackgroundMedium, a: f64, len: usize, shape: &ShapeConstants) -> Result<()> {
    shape.validate()?;
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidInput(format!("particle radius {a} must be positive")));
    }
    if len != medium.grid().len() {
        return Err(Error::InvalidInput(format!(
            "{len} density samples for {} nodes",
            medium.grid().len()
        )));
    }
    let ka = medium.k() * a;
    if ka > MAX_KA {
        return Err(Error::Invariant(format!("ka = {ka} exceeds {MAX_KA}")));
    }
    Ok(())
}

fn weighted_mean(nodes: &[usize], h: &[C64], n: &[f64]) -> C64 {
    let mut s = C64::from(0.0);
    let mut w = 0.0;
    for &i in nodes {
        s += h[i] * n[i];
        w += n[i];
    }
    if w > 0.0 {
        s / w
    } else {
        C64::from(0.0)
    }
}

fn finish(cloud: &mut ParticleCloud, placement: Placement, a: f64) -> Result<()> {
    if let Some((d, i, _)) = min_pair_distance(&cloud.centers) {
        if d < MIN_SPACING_RATIO * a {
            let cell = placement
                .cells
                .iter()
                .find(|c| crate::geometry::in_box(&cloud.centers[i], &c.box_lower, &(c.box_upper + Vec3::repeat(1e-12))))
                .map(|c| (c.cell, c.count))
                .unwrap_or(([0, 0, 0], 0));
            return Err(Error::InfeasibleDensity {
                cell: cell.0,
                count: cell.1,
                spacing: d,
                required: MIN_SPACING_RATIO * a,
            });
        }
    }
    cloud.occupied_volume = Some(
        placement
            .cells
            .iter()
            .filter(|c| c.count > 0)
            .map(|c| {
                let e = c.box_upper - c.box_lower;
                e.x * e.y * e.z
            })
            .sum(),
    );
    cloud.placement = Some(placement);
    Ok(())
}

type Placed = (Vec<Vec3>, Placement, Vec<Vec<usize>>);

/// Places particles cell by cell on a stratified lattice inside the bounding
/// box of the voxels with positive density.
fn place(
    medium: &BackgroundMedium,
    a: f64,
    measure: &CountingMeasure,
    shape: &ShapeConstants,
    opts: &LatticeOptions,
) -> Result<Placed> {
    let grid = medium.grid();
    if opts.cell_voxels == 0 {
        return Err(Error::InvalidInput("cell_voxels must be positive".into()));
    }
    let cv = opts.cell_voxels;
    let ncell = [
        grid.dims[0].div_ceil(cv),
        grid.dims[1].div_ceil(cv),
        grid.dims[2].div_ceil(cv),
    ];
    let h3 = grid.voxel_volume();
    let weight = measure.particle_weight(a, shape);
    let mut cells = Vec::new();
    let mut target_measure = 0.0;
    let mut total = 0usize;
    for ci in 0..ncell[0] {
        for cj in 0..ncell[1] {
            for cl in 0..ncell[2] {
                let mut mass = 0.0;
                let mut lo = [usize::MAX; 3];
                let mut hi = [0usize; 3];
                let mut nodes = Vec::new();
                for i in ci * cv..((ci + 1) * cv).min(grid.dims[0]) {
                    for j in cj * cv..((cj + 1) * cv).min(grid.dims[1]) {
                        for l in cl * cv..((cl + 1) * cv).min(grid.dims[2]) {
                            let idx = grid.index(i, j, l);
                            let rho = measure.density[idx];
                            if rho > 0.0 {
                                mass += rho * h3;
                                nodes.push(idx);
                                for (ax, v) in [i, j, l].into_iter().enumerate() {
                                    lo[ax] = lo[ax].min(v);
                                    hi[ax] = hi[ax].max(v);
                                }
                            }
                        }
                    }
                }
                if nodes.is_empty() {
                    continue;
                }
                target_measure += mass;
                let target = mass / weight;
                let count = target.round() as usize;
                total += count;
                if total > opts.max_particles {
                    return Err(Error::TooManyParticles {
                        count: total,
                        cap: opts.max_particles,
                    });
                }
                let box_lower = grid.lower + Vec3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * grid.spacing;
                let box_upper = grid.lower
                    + Vec3::new((hi[0] + 1) as f64, (hi[1] + 1) as f64, (hi[2] + 1) as f64) * grid.spacing;
                cells.push((
                    CellPlacement {
                        cell: [ci, cj, cl],
                        target,
                        count,
                        box_lower,
                        box_upper,
                        spacing: None,
                    },
                    nodes,
                ));
            }
        }
    }
    let mut centers = Vec::with_capacity(total);
    let mut owners = Vec::with_capacity(total);
    let mut out_cells = Vec::with_capacity(cells.len());
    for (mut cell, nodes) in cells {
        let pts = stratified_points(&cell.box_lower, &cell.box_upper, cell.count);
        cell.spacing = min_pair_distance(&pts).map(|(d, _, _)| d);
        for p in pts {
            centers.push(p);
            owners.push(nodes.clone());
        }
        out_cells.push(cell);
    }
    let placed_measure = centers.len() as f64 * weight;
    Ok((
        centers,
        Placement {
            cell_voxels: cv,
            cell_side: cv as f64 * grid.spacing,
            cells: out_cells,
            target_measure,
            placed_measure,
        },
        owners,
    ))
}

/// Splits `n` into `parts` near-equal integers, larger shares first.
fn shares(n: usize, parts: usize) -> Vec<usize> {
    let q = n / parts;
    let r = n % parts;
    (0..parts).map(|i| if i < r { q + 1 } else { q }).collect()
}

/// Row count for `n` points on a rectangle, and the spacing it guarantees.
fn best_rows(w: f64, h: f64, n: usize) -> (usize, f64) {
    let guess = (w * (n as f64 / (w * h)).sqrt()).round() as usize;
    let mut best = (1, 0.0);
    for rows in 1..=n.min(2 * guess + 2) {
        let spacing = (w / rows as f64).min(h / n.div_ceil(rows) as f64);
        if spacing > best.1 {
            best = (rows, spacing);
        }
    }
    best
}

/// Deterministic stratified lattice of `n` points in a box: layers along x,
/// rows along y and evenly spaced points along z. Layer and row counts are
/// chosen to maximise the guaranteed spacing.
pub fn stratified_points(lower: &Vec3, upper: &Vec3, n: usize) -> Vec<Vec3> {
    if n == 0 {
        return Vec::new();
    }
    let ext = upper - lower;
    let vol = ext.x * ext.y * ext.z;
    let guess = (ext.x * (n as f64 / vol).cbrt()).round() as usize;
    let mut nx = 1;
    let mut best = 0.0;
    for layers in 1..=n.min(2 * guess + 2) {
        let spacing = (ext.x / layers as f64).min(best_rows(ext.y, ext.z, n.div_ceil(layers)).1);
        if spacing > best {
            best = spacing;
            nx = layers;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (ix, &nl) in shares(n, nx).iter().enumerate() {
        if nl == 0 {
            continue;
        }
        let x = lower.x + (ix as f64 + 0.5) * ext.x / nx as f64;
        let ny = best_rows(ext.y, ext.z, nl).0;
        for (iy, &nr) in shares(nl, ny).iter().enumerate() {
            if nr == 0 {
                continue;
            }
            let y = lower.y + (iy as f64 + 0.5) * ext.y / ny as f64;
            for iz in 0..nr {
                let z = lower.z + (iz as f64 + 0.5) * ext.z / nr as f64;
                out.push(Vec3::new(x, y, z));
            }
        }
    }
    out
}

/// Closest pair `(distance, i, j)` via a spatial hash with doubling cell size.
pub fn min_pair_distance(points: &[Vec3]) -> Option<(f64, usize, usize)> {
    if points.len() < 2 {
        return None;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    let vol = ext.x.max(1e-300) * ext.y.max(1e-300) * ext.z.max(1e-300);
    let mut cell = (vol / points.len() as f64).cbrt().min(ext.max()).max(1e-12 * ext.max().max(1.0));
    if !(cell.is_finite() && cell > 0.0) {
        cell = ext.max().max(1e-300);
    }
    loop {
        let mut map: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        let key = |p: &Vec3| {
            (
                ((p.x - lo.x) / cell).floor() as i64,
                ((p.y - lo.y) / cell).floor() as i64,
                ((p.z - lo.z) / cell).floor() as i64,
            )
        };
        for (i, p) in points.iter().enumerate() {
            map.entry(key(p)).or_default().push(i);
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            let (a, b, c) = key(p);
            for da in -1..=1 {
                for db in -1..=1 {
                    for dc in -1..=1 {
                        if let Some(list) = map.get(&(a + da, b + db, c + dc)) {
                            for &j in list {
                                if j <= i {
                                    continue;
                                }
                                let d = (points[j] - p).norm();
                                if best.is_none_or(|(bd, bi, bj)| d < bd || (d == bd && (i, j) < (bi, bj))) {
                                    best = Some((d, i, j));
                                }
                            }
                        }
                    }
                }
            }
        }
        if let Some(b) = best {
            if b.0 <= cell {
                return Some(b);
            }
        }
        cell *= 2.0;
    }
}

/// Diagnostics of a cloud against the small-body assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudReport {
    pub particles: usize,
    pub ka: f64,
    pub spacing_over_radius: Option<f64>,
    pub max_abs_zeta_times_radius: Option<f64>,
    pub volume_fraction: f64,
    pub violations: Vec<String>,
}

impl CloudReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Converts the first violation into an error.
    pub fn require_valid(&self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::Invariant(format!("cloud fails validation: {v}"))),
        }
    }
}

pub fn validate_cloud(cloud: &ParticleCloud, medium: &BackgroundMedium) -> CloudReport {
    let a = cloud.radius;
    let ka = medium.k() * a;
    let mut violations = Vec::new();
    if ka > MAX_KA {
        violations.push(format!("ka = {ka:.4} exceeds {MAX_KA}"));
    }
    let spacing_over_radius = cloud.min_spacing.map(|d| d / a);
    if let Some(r) = spacing_over_radius {
        if r < MIN_SPACING_RATIO {
            violations.push(format!("minimum spacing is {r:.3} radii, below {MIN_SPACING_RATIO}"));
        }
    }
    let max_abs_zeta_times_radius = match &cloud.kind {
        ParticleKind::Impedance { zeta } => {
            if let Some((m, z)) = zeta.iter().enumerate().find(|(_, z)| z.im > 0.0) {
                violations.push(format!("Im zeta > 0 at particle {m} ({z})"));
            }
            if zeta.is_empty() {
                None
            } else {
                Some(zeta.iter().map(|z| z.norm() * a).fold(0.0, f64::max))
            }
        }
        ParticleKind::Hard { .. } => None,
    };
    let occupied = cloud.occupied_volume.unwrap_or_else(|| {
        let e = medium.grid().upper() - medium.grid().lower;
        e.x * e.y * e.z
    });
    let volume_fraction = if cloud.is_empty() || occupied <= 0.0 {
        0.0
    } else {
        cloud.len() as f64 * cloud.shape.volume(a) / occupied
    };
    CloudReport {
        particles: cloud.len(),
        ka,
        spacing_over_radius,
        max_abs_zeta_times_radius,
        volume_fraction,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn unit_medium(k: f64, n: usize) -> BackgroundMedium {
        BackgroundMedium::homogeneous(k, Grid::cube(-0.5, 0.5, n).unwrap()).unwrap()
    }

    #[test]
    fn stratified_counts_are_exact() {
        let lo = Vec3::zeros();
        let hi = Vec3::new(1.0, 1.0, 1.0);
        for n in [1, 2, 7, 8, 16, 27, 32, 100, 1000] {
            let pts = stratified_points(&lo, &hi, n);
            assert_eq!(pts.len(), n);
            assert!(pts.iter().all(|p| crate::geometry::in_box(p, &lo, &hi)));
        }
        let cube = stratified_points(&lo, &hi, 27);
        let d = min_pair_distance(&cube).unwrap().0;
        assert!((d - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn min_pair_distance_matches_brute_force() {
        let pts: Vec<Vec3> = (0..200)
            .map(|i| {
                let t = i as f64;
                Vec3::new((t * 0.731).sin(), (t * 1.37).cos() * 2.0, (t * 0.291).sin() * 0.5)
            })
            .collect();
        let mut best = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.min((pts[i] - pts[j]).norm());
            }
        }
        assert_eq!(min_pair_distance(&pts).unwrap().0, best);
    }

    #[test]
    fn empty_density_gives_empty_cloud() {
        let m = unit_medium(1.0, 4);
        let cloud = build_cloud_impedance(
            &m,
            1e-3,
            &vec![C64::from(1.0); 64],
            &vec![0.0; 64],
            ShapeConstants::ball(),
            &LatticeOptions::default(),
        )
        .unwrap();
        assert!(cloud.is_empty());
        let hard = build_cloud_hard(&m, 1e-3, &vec![0.0; 64], [[0.0; 3]; 3], ShapeConstants::ball(), &LatticeOptions::default()).unwrap();
        assert!(hard.is_empty());
        let report = validate_cloud(&cloud, &m);
        assert_eq!(report.particles, 0);
        assert_eq!(report.volume_fraction, 0.0);
        assert!(report.spacing_over_radius.is_none());
    }

    #[test]
    fn uniform_density_on_unit_cube() {
        let m = unit_medium(1.0, 4);
        let opts = LatticeOptions {
            cell_voxels: 4,
            ..Default::default()
        };
        let cloud = build_cloud_impedance(&m, 1e-3, &vec![C64::from(1.0); 64], &vec![0.1; 64], ShapeConstants::ball(), &opts).unwrap();
        assert_eq!(cloud.len(), 100);
        assert!(cloud.min_spacing.unwrap() >= 10.0 * 1e-3);
    }

    #[test]
    fn singular_impedance_is_rejected() {
        let m = unit_medium(1.0, 2);
        let r = build_cloud_impedance(&m, 1e-3, &[C64::from(-1.0); 8], &[1.0; 8], ShapeConstants::ball(), &LatticeOptions::default());
        assert!(matches!(r, Err(Error::SingularImpedance { .. })));
    }

    #[test]
    fn dense_packing_is_rejected_with_cell() {
        let m = unit_medium(1.0, 2);
        let r = build_cloud_impedance(&m, 1e-2, &[C64::from(1.0); 8], &[100.0; 8], ShapeConstants::ball(), &LatticeOptions { cell_voxels: 1, ..Default::default() });
        assert!(matches!(r, Err(Error::InfeasibleDensity { .. })), "{r:?}");
    }

    #[test]
    fn hard_compatibility_bound() {
        let shape = ShapeConstants::ball();
        assert!(CountingMeasure::new(CountingMode::PerVolume, vec![4e-3], &shape).is_ok());
        let err = CountingMeasure::new(CountingMode::PerVolume, vec![0.5], &shape).unwrap_err();
        match err {
            Error::Compatibility { ratio, .. } => assert!((ratio - 0.49).abs() < 0.01),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn close_pair_is_flagged() {
        let m = unit_medium(1.0, 2);
        let a = 1e-3;
        let cloud = ParticleCloud::impedance(
            vec![Vec3::zeros(), Vec3::new(5.0 * a, 0.0, 0.0)],
            a,
            vec![C64::from(1.0 / a); 2],
            ShapeConstants::ball(),
        )
        .unwrap();
        let r = validate_cloud(&cloud, &m);
        assert!(!r.is_valid());
        assert!((r.spacing_over_radius.unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn ball_zeta_is_h_over_a() {
        let s = ShapeConstants::ball();
        let z = s.zeta_from_h(C64::new(2.0, -1.0), 0.01);
        assert!((z - C64::new(200.0, -100.0)).norm() < 1e-10);
        assert!((s.coupling_factor() - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn cloud_serde_round_trip() {
        let m = unit_medium(1.0, 4);
        let cloud = build_cloud_impedance(&m, 1e-3, &vec![C64::new(1.0, -0.5); 64], &vec![0.05; 64], ShapeConstants::ball(), &LatticeOptions::default()).unwrap();
        let s = serde_json::to_string(&cloud).unwrap();
        let back: ParticleCloud = serde_json::from_str(&s).unwrap();
        assert_eq!(cloud, back);
    }
}
