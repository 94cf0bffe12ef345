//! Direction sets on the unit sphere and far-field containers.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::{Vec3, C64};
use crate::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Observation directions with optional spherical quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub directions: Vec<Vec3>,
    /// Polar and azimuthal angle of each direction.
    pub angles: Vec<(f64, f64)>,
    /// Quadrature weights summing to 4*pi, empty when the set is not a rule.
    pub weights: Vec<f64>,
}

impl DirectionSet {
    /// Gauss-Legendre in cos(theta) times a uniform trapezoidal rule in phi.
    pub fn gauss_latlon(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::InvalidInput(
                "direction grid needs at least one node per angle".into(),
            ));
        }
        let (x, w) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut angles = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        // Descending cos(theta) so that theta increases along the list.
        for i in (0..n_theta).rev() {
            let ct = x[i];
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let theta = ct.acos();
            for j in 0..n_phi {
                let phi = j as f64 * dphi;
                directions.push(Vec3::new(st * phi.cos(), st * phi.sin(), ct));
                angles.push((theta, phi));
                weights.push(w[i] * dphi);
            }
        }
        Ok(Self {
            directions,
            angles,
            weights,
        })
    }

    /// Arbitrary unit directions without integration weights.
    pub fn from_directions(directions: Vec<Vec3>) -> Result<Self> {
        for d in &directions {
            crate::geometry::check_unit(d, "observation direction")?;
        }
        let angles = directions
            .iter()
            .map(|d| (d.z.clamp(-1.0, 1.0).acos(), d.y.atan2(d.x).rem_euclid(2.0 * PI)))
            .collect();
        Ok(Self {
            directions,
            angles,
            weights: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn has_weights(&self) -> bool {
        self.weights.len() == self.directions.len() && !self.weights.is_empty()
    }

    /// Integral over the sphere of sampled values.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if !self.has_weights() {
            return Err(Error::InvalidInput(
                "direction set carries no quadrature weights".into(),
            ));
        }
        if values.len() != self.weights.len() {
            return Err(Error::InvalidInput("sample count mismatch".into()));
        }
        Ok(values.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
    }
}

/// Scattering amplitude samples A(beta, alpha) for one incident direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub incident: Vec3,
    pub directions: DirectionSet,
    /// Amplitude of the background medium alone.
    #[serde(with = "crate::cplx::vec")]
    pub background: Vec<C64>,
    /// Amplitude added by the scatterers.
    #[serde(with = "crate::cplx::vec")]
    pub scattered: Vec<C64>,
}

impl FarField {
    pub fn total(&self) -> Vec<C64> {
        self.background
            .iter()
            .zip(&self.scattered)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Scattered flux `k/(4 pi) * integral |A|^2` of the total amplitude.
    pub fn flux(&self, k: f64) -> Result<f64> {
        let sq: Vec<f64> = self.total().iter().map(|a| a.norm_sqr()).collect();
        Ok(self.directions.integrate(&sq)? * k / (4.0 * PI))
    }
}
