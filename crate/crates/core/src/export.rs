//! CSV and JSON output. CSV floats use the shortest round-trip decimal form,
//! so identical inputs give byte-identical files.

use std::io::Write;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::convergence::ScaleStudy;
use crate::medium::ComplexField;
use crate::particles::{ParticleCloud, ParticleKind};
use crate::quadrature::FarField;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// JSON envelope carrying the format version and a content tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format_version: u32,
    pub kind: String,
    pub data: T,
}

pub fn to_json<T: Serialize>(kind: &str, data: &T) -> Result<String> {
    let env = Envelope {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        data,
    };
    Ok(serde_json::to_string_pretty(&env)? + "\n")
}

/// Parses an envelope, checking its version and tag.
pub fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            env.format_version
        )));
    }
    if env.kind != kind {
        return Err(Error::InvalidInput(format!("expected a {kind} document, found {}", env.kind)));
    }
    Ok(env.data)
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn finish<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

/// `x,y,z,re,im`.
pub fn write_field_csv<W: Write>(field: &ComplexField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "z", "re", "im"])?;
    for (p, v) in field.points.iter().zip(&field.values) {
        w.write_record([num(p.x), num(p.y), num(p.z), num(v.re), num(v.im)])?;
    }
    finish(w)
}

/// `theta,phi,re,im` of the total amplitude.
pub fn write_far_field_csv<W: Write>(ff: &FarField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "phi", "re", "im"])?;
    for ((t, p), a) in ff.directions.angles.iter().zip(ff.total()) {
        w.write_record([num(*t), num(*p), num(a.re), num(a.im)])?;
    }
    finish(w)
}

/// `x,y,z` and, for impedance clouds, `zeta_re,zeta_im`.
pub fn write_centers_csv<W: Write>(cloud: &ParticleCloud, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match &cloud.kind {
        ParticleKind::Impedance { zeta } => {
            w.write_record(["x", "y", "z", "zeta_re", "zeta_im"])?;
            for (p, z) in cloud.centers.iter().zip(zeta) {
                w.write_record([num(p.x), num(p.y), num(p.z), num(z.re), num(z.im)])?;
            }
        }
        ParticleKind::Hard { .. } => {
            w.write_record(["x", "y", "z"])?;
            for p in &cloud.centers {
                w.write_record([num(p.x), num(p.y), num(p.z)])?;
            }
        }
    }
    finish(w)
}

/// One row per successful scale. The fitted exponents repeat on every row.
pub fn write_study_csv<W: Write>(study: &ScaleStudy, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "a",
        "particles",
        "min_spacing",
        "error_max",
        "error_rms",
        "error_scattered",
        "max_charge",
        "counting_sum",
        "counting_integral",
        "particles_exponent",
        "charge_exponent",
        "error_exponent",
    ])?;
    let f = &study.fits;
    for s in &study.scales {
        w.write_record([
            num(s.a),
            s.particles.to_string(),
            opt(s.min_spacing),
            num(s.error_max),
            num(s.error_rms),
            num(s.error_scattered),
            num(s.max_charge),
            num(s.counting.particle_sum),
            num(s.counting.integral),
            opt(f.particles_exponent),
            opt(f.charge_exponent),
            opt(f.error_exponent),
        ])?;
    }
    finish(w)
}

/// Renders a CSV writer into a string.
pub fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::InvalidInput(e.to_string()))
}
