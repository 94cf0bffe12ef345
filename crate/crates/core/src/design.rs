//! Inverse recipe: from a target refraction coefficient to a potential `p`,
//! a choice of scaled impedance `h` and density `N` reproducing it, and a
//! particle cloud realising that choice.

use serde::{Deserialize, Serialize};

use crate::convergence::{self, ScaleStudy, StudyOptions};
use crate::geometry::{Vec3, C64, ZERO};
use crate::medium::BackgroundMedium;
use crate::particles::{build_cloud_impedance, validate_cloud, CloudReport, LatticeOptions, ParticleCloud, ShapeConstants};
use crate::{Error, Result};

/// Relative tolerance of the `(h, N) -> p` round trip.
pub const ROUND_TRIP_TOL: f64 = 1e-12;

/// Target refraction coefficient on the medium's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub medium: BackgroundMedium,
    #[serde(with = "crate::cplx::vec")]
    pub target_n: Vec<C64>,
    /// Intended particle radius.
    pub a: f64,
    #[serde(default)]
    pub shape: ShapeConstants,
}

impl DesignSpec {
    pub fn new(medium: BackgroundMedium, target_n: Vec<C64>, a: f64, shape: ShapeConstants) -> Result<Self> {
        let spec = Self {
            medium,
            target_n,
            a,
            shape,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.medium.grid();
        if self.target_n.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} target samples for {} nodes",
                self.target_n.len(),
                grid.len()
            )));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::InvalidInput(format!("radius {} must be positive", self.a)));
        }
        self.shape.validate()?;
        for (i, (n, n0)) in self.target_n.iter().zip(self.medium.n0()).enumerate() {
            if !(n.re.is_finite() && n.im.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite target at node {i}")));
            }
            if n == n0 {
                continue;
            }
            if n.im < 0.0 {
                return Err(Error::Invariant(format!("target n = {n} at node {i} is active (Im n < 0)")));
            }
            if !self.medium.region().contains(&grid.node(i)) {
                return Err(Error::Invariant(format!("target differs from n0 at node {i} outside D")));
            }
        }
        Ok(())
    }
}

/// `p = k^2 (n0 - n)`.
pub fn target_to_potential(spec: &DesignSpec) -> Vec<C64> {
    let k2 = spec.medium.k() * spec.medium.k();
    spec.medium
        .n0()
        .iter()
        .zip(&spec.target_n)
        .map(|(n0, n)| (n0 - n) * k2)
        .collect()
}

/// Rule used at a node to pick `(h, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignBranch {
    /// `Re p > 0`, `Im p < 0`: purely imaginary `h`.
    A,
    /// Real positive `p`: `h = 1`.
    B,
    /// Real negative `p`: `h = -1/2`.
    C,
    /// `p = 0`.
    D,
    /// `Re p <= 0`, `Im p < 0`: `Re h = -1/2`. Outside the constructive range
    /// of the recipe, so flagged as an extrapolation.
    E,
}

/// Node-wise `(h, N)` with the rule that produced each pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnChoice {
    #[serde(with = "crate::cplx::vec")]
    pub h: Vec<C64>,
    pub n: Vec<f64>,
    pub branches: Vec<DesignBranch>,
}

impl HnChoice {
    pub fn extrapolated(&self) -> bool {
        self.branches.contains(&DesignBranch::E)
    }
}

fn choose_node(p: C64, gamma: f64) -> std::result::Result<(C64, f64, DesignBranch), String> {
    let (p1, p2) = (p.re, p.im);
    if !(p1.is_finite() && p2.is_finite()) {
        return Err("non-finite p".into());
    }
    if p2 > 0.0 {
        return Err(format!("Im p = {p2} > 0"));
    }
    if p2 == 0.0 {
        return Ok(if p1 > 0.0 {
            (C64::from(1.0), 2.0 * p1 / gamma, DesignBranch::B)
        } else if p1 < 0.0 {
            (C64::from(-0.5), -p1 / gamma, DesignBranch::C)
        } else {
            (ZERO, 0.0, DesignBranch::D)
        });
    }
    if p1 > 0.0 {
        let h2 = p1 / p2;
        let n = (p1 * p1 + p2 * p2) / (gamma * p1);
        return Ok((C64::new(0.0, h2), n, DesignBranch::A));
    }
    let r = p1 / p2;
    let h2 = -0.5 / (r + (r * r + 1.0).sqrt());
    let n = p2 * (0.25 + h2 * h2) / (gamma * h2);
    Ok((C64::new(-0.5, h2), n, DesignBranch::E))
}

/// Picks `(h, N)` at every node so that `4 pi c1^2 N h / (c2 (1 + h)) = p`,
/// with `Im h <= 0` and `N >= 0`, and verifies the round trip.
pub fn choose_h_n(p: &[C64], shape: &ShapeConstants) -> Result<HnChoice> {
    let gamma = shape.coupling_factor();
    let mut h = Vec::with_capacity(p.len());
    let mut n = Vec::with_capacity(p.len());
    let mut branches = Vec::with_capacity(p.len());
    let mut bad = Vec::new();
    let mut reason = String::new();
    for (i, pv) in p.iter().enumerate() {
        match choose_node(*pv, gamma) {
            Ok((hv, nv, b)) => {
                let back = if nv == 0.0 { ZERO } else { hv / (C64::from(1.0) + hv) * (gamma * nv) };
                let ok = hv.im <= 0.0
                    && nv >= 0.0
                    && nv.is_finite()
                    && (back - pv).norm() <= ROUND_TRIP_TOL * pv.norm();
                if !ok {
                    if reason.is_empty() {
                        reason = format!("round trip of p = {pv} gives {back}");
                    }
                    bad.push(i);
                }
                h.push(hv);
                n.push(nv);
                branches.push(b);
            }
            Err(e) => {
                if reason.is_empty() {
                    reason = e;
                }
                bad.push(i);
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::InfeasibleDesign { nodes: bad, reason });
    }
    Ok(HnChoice { h, n, branches })
}

/// A second real choice, `h = 2`, giving the same positive real `p` as
/// branch B with a different density.
pub fn alternative_real_choice(p1: f64, shape: &ShapeConstants) -> (C64, f64) {
    (C64::from(2.0), 1.5 * p1 / shape.coupling_factor())
}

/// Designed potential, its `(h, N)` realisation and the particle cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    #[serde(with = "crate::cplx::vec")]
    pub p: Vec<C64>,
    #[serde(flatten)]
    pub choice: HnChoice,
    pub extrapolated: bool,
    pub cloud: ParticleCloud,
    pub feasibility: CloudReport,
}

/// Builds the cloud for a chosen `(h, N)` at the spec's radius.
pub fn realize(spec: &DesignSpec, choice: &HnChoice, lattice: &LatticeOptions) -> Result<DesignResult> {
    spec.validate()?;
    let p = target_to_potential(spec);
    let cloud = build_cloud_impedance(&spec.medium, spec.a, &choice.h, &choice.n, spec.shape, lattice)?;
    let feasibility = validate_cloud(&cloud, &spec.medium);
    Ok(DesignResult {
        p,
        extrapolated: choice.extrapolated(),
        choice: choice.clone(),
        cloud,
        feasibility,
    })
}

/// Full recipe: potential, `(h, N)` and cloud.
pub fn design(spec: &DesignSpec, lattice: &LatticeOptions) -> Result<DesignResult> {
    spec.validate()?;
    let p = target_to_potential(spec);
    let choice = choose_h_n(&p, &spec.shape)?;
    realize(spec, &choice, lattice)
}

/// Outcome of comparing designed clouds with the target continuum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVerification {
    pub study: ScaleStudy,
    /// Errors strictly decrease and the last is at most [`convergence::TARGET_ERROR`].
    pub success: bool,
    pub extrapolated: bool,
}

/// Solves the designed clouds over decreasing radii and compares them with
/// the target continuum at far-zone probes.
pub fn verify_design(
    result: &DesignResult,
    spec: &DesignSpec,
    alpha: &Vec3,
    scales: &[f64],
    probes: Option<Vec<Vec3>>,
    options: &StudyOptions,
) -> Result<DesignVerification> {
    let opts = StudyOptions {
        shape: spec.shape,
        ..options.clone()
    };
    let study = convergence::run_impedance_study(&spec.medium, &result.choice.h, &result.choice.n, scales, alpha, probes, &opts)?;
    let success = study.succeeded();
    Ok(DesignVerification {
        study,
        success,
        extrapolated: result.extrapolated,
    })
}
