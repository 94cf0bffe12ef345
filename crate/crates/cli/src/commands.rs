//! Subcommand bodies. Each returns every output file in memory together with
//! details for the run metadata; nothing touches the disk here.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use smallbody::convergence::{run_hard_study, run_impedance_study, StudyOptions};
use smallbody::design::{choose_h_n, design, target_to_potential, verify_design, DesignBranch, DesignSpec};
use smallbody::export::{
    csv_string, to_json, write_centers_csv, write_far_field_csv, write_field_csv, write_study_csv,
};
use smallbody::foldy_impedance;
use smallbody::foldy_neumann;
use smallbody::geometry::{Vec3, C64};
use smallbody::limit::{
    evaluate_hard_limit, evaluate_limit, hard_limit_amplitude, limiting_amplitude, solve_hard_limit,
    solve_impedance_limit, HardLimitProblem, ImpedanceLimitProblem,
};
use smallbody::medium::BackgroundMedium;
use smallbody::particles::{validate_cloud, CloudReport, CountingMeasure, CountingMode};
use smallbody::quadrature::{DirectionSet, FarField};
use smallbody::{Error, Result};

use crate::scene::{LimitSpec, Scene, StudySpec};

/// Files to write, by name, and details for the metadata document.
#[derive(Debug, Default)]
pub struct Products {
    pub files: Vec<(String, String)>,
    pub details: Value,
}

impl Products {
    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }
}

fn require<'a, T>(v: &'a Option<T>, what: &str, command: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("`{command}` needs a `{what}` section in the scene")))
}

fn directions(scene: &Scene) -> Result<DirectionSet> {
    DirectionSet::gauss_latlon(scene.far_field.n_theta, scene.far_field.n_phi)
}

fn forward(scene: &Scene) -> Result<DirectionSet> {
    DirectionSet::from_directions(vec![scene.incident])
}

/// `(Im A(alpha, alpha) - k/(4 pi) int |A|^2) / |Im A(alpha, alpha)|`.
fn optical_defect(k: f64, ff: &FarField, fwd: &FarField) -> Result<f64> {
    let im = fwd.total()[0].im;
    Ok((im - ff.flux(k)?).abs() / im.abs())
}

pub fn solve(scene: &Scene, tol: Option<f64>) -> Result<Products> {
    let medium = scene.medium.build(tol)?;
    let cloud = require(&scene.cloud, "cloud", "solve")?.build(&medium)?;
    let report = validate_cloud(&cloud, &medium);
    report.require_valid()?;
    let dirs = directions(scene)?;
    let alpha = scene.incident;
    let mut out = Products::default();
    let (ff, field, stats, solution) = if cloud.is_hard() {
        let res = foldy_neumann::assemble_and_solve_hard(&medium, &cloud, &alpha)?;
        let ff = foldy_neumann::far_field_hard(&res, &medium, &cloud, &dirs)?;
        let field = foldy_neumann::evaluate_field_hard(&res, &medium, &cloud, &scene.points)?;
        (ff, field, res.stats, to_json("hard_solution", &res)?)
    } else {
        let res = foldy_impedance::assemble_and_solve(&medium, &cloud, &alpha)?;
        let ff = foldy_impedance::far_field(&res, &medium, &cloud, &dirs)?;
        let field = foldy_impedance::evaluate_field(&res, &medium, &cloud, &scene.points)?;
        (ff, field, res.stats, to_json("impedance_solution", &res)?)
    };
    out.add("centers.csv", csv_string(|b| write_centers_csv(&cloud, b))?);
    out.add("far_field.csv", csv_string(|b| write_far_field_csv(&ff, b))?);
    if !scene.points.is_empty() {
        out.add("field.csv", csv_string(|b| write_field_csv(&field, b))?);
    }
    out.add("solution.json", solution);
    out.details = json!({
        "particles": cloud.len(),
        "hard": cloud.is_hard(),
        "stats": stats,
        "report": report,
    });
    Ok(out)
}

/// Born amplitude `-(1/4 pi) sum p(y) exp(i k (alpha - beta) . y) h^3` in free space.
fn born_amplitude(medium: &BackgroundMedium, p: &[C64], alpha: &Vec3, dirs: &DirectionSet) -> Vec<C64> {
    let g = medium.grid();
    let k = medium.k();
    let w = g.voxel_volume() / (4.0 * PI);
    let nodes = g.nodes();
    dirs.directions
        .iter()
        .map(|b| {
            let s = alpha - b;
            -nodes
                .iter()
                .zip(p)
                .map(|(y, pv)| pv * C64::new(0.0, k * s.dot(y)).exp())
                .sum::<C64>()
                * w
        })
        .collect()
}

pub fn limit(scene: &Scene, tol: Option<f64>) -> Result<Products> {
    let medium = scene.medium.build(tol)?;
    let spec = require(&scene.limit, "limit", "limit")?;
    let dirs = directions(scene)?;
    let fwd_dirs = forward(scene)?;
    let alpha = scene.incident;
    let k = medium.k();
    let mut out = Products::default();
    match spec {
        LimitSpec::Hard { beta, form, max_iter, tol: iter_tol, .. } => {
            let nu = spec.nu(&medium)?;
            let prob = HardLimitProblem::with_uniform_beta(&medium, nu, Scene::hard_beta(beta), *form)?;
            let sol = solve_hard_limit(&prob, &alpha, *max_iter, *iter_tol)?;
            let ff = hard_limit_amplitude(&prob, &sol, &dirs)?;
            out.add("grid_solution.csv", csv_string(|b| write_field_csv(&sol.field, b))?);
            out.add("amplitude.csv", csv_string(|b| write_far_field_csv(&ff, b))?);
            if !scene.points.is_empty() {
                let f = evaluate_hard_limit(&prob, &sol, &scene.points)?;
                out.add("field.csv", csv_string(|b| write_field_csv(&f, b))?);
            }
            out.details = json!({
                "kind": "hard",
                "iterations": sol.iterations(),
                "changes": sol.changes,
            });
        }
        _ => {
            let p = spec.potential(&medium)?;
            let prob = ImpedanceLimitProblem::new(&medium, p.clone())?;
            let sol = solve_impedance_limit(&prob, &alpha)?;
            let ff = limiting_amplitude(&prob, &sol, &dirs)?;
            let fwd = limiting_amplitude(&prob, &sol, &fwd_dirs)?;
            out.add("grid_solution.csv", csv_string(|b| write_field_csv(&sol.field, b))?);
            out.add("amplitude.csv", csv_string(|b| write_far_field_csv(&ff, b))?);
            if !scene.points.is_empty() {
                let f = evaluate_limit(&prob, &sol, &scene.points)?;
                out.add("field.csv", csv_string(|b| write_field_csv(&f, b))?);
            }
            let real = p.iter().chain(medium.q0()).all(|v| v.im == 0.0);
            let optical = if real && p.iter().any(|v| v.re != 0.0) {
                Some(optical_defect(k, &ff, &fwd)?)
            } else {
                None
            };
            let born = if medium.is_free() {
                let b = born_amplitude(&medium, &p, &alpha, &dirs);
                let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let dev = ff.scattered.iter().zip(&b).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max);
                (scale > 0.0).then(|| dev / scale)
            } else {
                None
            };
            out.details = json!({
                "kind": "impedance",
                "stats": sol.stats,
                "optical_theorem_defect": optical,
                "born_relative_deviation": born,
            });
        }
    }
    Ok(out)
}

pub fn design_cmd(scene: &Scene, tol: Option<f64>) -> Result<Products> {
    let medium = scene.medium.build(tol)?;
    let ds = require(&scene.design, "design", "design")?;
    let target = ds.target(&medium)?;
    let spec = DesignSpec::new(medium, target, ds.a, ds.shape)?;
    let result = design(&spec, &ds.lattice)?;
    let mut out = Products::default();
    out.add("design.json", to_json("design_result", &result)?);
    out.add("centers.csv", csv_string(|b| write_centers_csv(&result.cloud, b))?);
    let mut verification = Value::Null;
    if !ds.verify_radii.is_empty() {
        let opts = StudyOptions {
            lattice: ds.lattice,
            shape: ds.shape,
            ..Default::default()
        };
        let v = verify_design(&result, &spec, &scene.incident, &ds.verify_radii, ds.probes.clone(), &opts)?;
        out.add("verification.csv", csv_string(|b| write_study_csv(&v.study, b))?);
        out.add("verification.json", to_json("design_verification", &v)?);
        verification = json!({
            "success": v.success,
            "errors": v.study.errors(),
            "failures": v.study.failures,
        });
    }
    let count = |b: DesignBranch| result.choice.branches.iter().filter(|x| **x == b).count();
    out.details = json!({
        "particles": result.cloud.len(),
        "extrapolated": result.extrapolated,
        "branches": {
            "a": count(DesignBranch::A),
            "b": count(DesignBranch::B),
            "c": count(DesignBranch::C),
            "d": count(DesignBranch::D),
            "e": count(DesignBranch::E),
        },
        "cells": result.cloud.placement.as_ref().map(|p| p.cells.iter().map(|c| c.count).collect::<Vec<_>>()),
        "feasibility": result.feasibility,
        "verification": verification,
    });
    Ok(out)
}

pub fn study(scene: &Scene, tol: Option<f64>) -> Result<Products> {
    let medium = scene.medium.build(tol)?;
    let spec = require(&scene.study, "study", "study")?;
    let alpha = scene.incident;
    let study = match spec {
        StudySpec::Impedance { radii, h, n, probes, options } => {
            let (h, n) = StudySpec::impedance_fields(&medium, h, n)?;
            run_impedance_study(&medium, &h, &n, radii, &alpha, probes.clone(), options)?
        }
        StudySpec::Hard { radii, nu, beta, probes, options } => {
            let nu = StudySpec::hard_field(&medium, nu)?;
            run_hard_study(&medium, &nu, Scene::hard_beta(beta), radii, &alpha, probes.clone(), options)?
        }
    };
    let mut out = Products::default();
    out.add("study.csv", csv_string(|b| write_study_csv(&study, b))?);
    out.add("study.json", to_json("scale_study", &study)?);
    out.details = json!({
        "succeeded": study.succeeded(),
        "errors": study.errors(),
        "failures": study.failures,
        "fits": study.fits,
    });
    Ok(out)
}

/// Outcome of `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub valid: bool,
    pub nodes: usize,
    pub region_nodes: usize,
    pub cloud: Option<CloudReport>,
    pub violations: Vec<String>,
}

/// Checks every section of the scene without solving anything. Returns the
/// report and, when the scene is physically inadmissible, the first error.
pub fn validate(scene: &Scene, tol: Option<f64>) -> Result<(Products, Option<Error>)> {
    let medium = scene.medium.build(tol)?;
    let g = medium.grid();
    let mut violations = Vec::new();
    let mut first: Option<Error> = None;
    let mut note = |e: Error, first: &mut Option<Error>| {
        if e.class() == smallbody::ErrorClass::Input {
            return Err(e);
        }
        violations.push(e.to_string());
        first.get_or_insert(e);
        Ok(())
    };
    let mut cloud_report = None;
    if let Some(c) = &scene.cloud {
        match c.build(&medium) {
            Ok(cloud) => {
                let r = validate_cloud(&cloud, &medium);
                if let Err(e) = r.require_valid() {
                    note(e, &mut first)?;
                }
                cloud_report = Some(r);
            }
            Err(e) => note(e, &mut first)?,
        }
    }
    match &scene.limit {
        Some(spec @ LimitSpec::Hard { beta, form, .. }) => {
            let nu = spec.nu(&medium)?;
            if let Err(e) = HardLimitProblem::with_uniform_beta(&medium, nu, Scene::hard_beta(beta), *form) {
                note(e, &mut first)?;
            }
        }
        Some(spec) => {
            let p = spec.potential(&medium)?;
            if let Some(i) = p.iter().enumerate().position(|(i, v)| *v != C64::from(0.0) && !medium.region().contains(&g.node(i))) {
                note(Error::Invariant(format!("p is non-zero at node {i} outside D")), &mut first)?;
            }
        }
        None => {}
    }
    if let Some(ds) = &scene.design {
        let target = ds.target(&medium)?;
        match DesignSpec::new(medium.clone(), target, ds.a, ds.shape) {
            Ok(spec) => {
                if let Err(e) = choose_h_n(&target_to_potential(&spec), &spec.shape) {
                    note(e, &mut first)?;
                }
            }
            Err(e) => note(e, &mut first)?,
        }
    }
    if let Some(s) = &scene.study {
        let r = match s {
            StudySpec::Impedance { h, n, options, .. } => StudySpec::impedance_fields(&medium, h, n).and_then(|(h, n)| {
                CountingMeasure::new(CountingMode::PerLength, n.clone(), &options.shape)?;
                smallbody::limit::potential_from_h_n(&h, &n, &options.shape).map(|_| ())
            }),
            StudySpec::Hard { nu, options, .. } => StudySpec::hard_field(&medium, nu)
                .and_then(|nu| CountingMeasure::new(CountingMode::PerVolume, nu, &options.shape).map(|_| ())),
        };
        if let Err(e) = r {
            note(e, &mut first)?;
        }
    }
    let report = Validation {
        valid: violations.is_empty(),
        nodes: g.len(),
        region_nodes: g.nodes().iter().filter(|x| medium.region().contains(x)).count(),
        cloud: cloud_report,
        violations,
    };
    let mut out = Products::default();
    out.add("validation.json", to_json("validation", &report)?);
    out.details = json!({ "valid": report.valid });
    Ok((out, first))
}
