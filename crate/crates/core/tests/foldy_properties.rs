use std::f64::consts::PI;

use proptest::prelude::*;
use smallbody::convergence::{run_impedance_study, StudyOptions};
use smallbody::coupling::radiate;
use smallbody::foldy_impedance::{self, assemble_and_solve, coupling_constants, evaluate_field, far_field};
use smallbody::foldy_neumann::{self, assemble_and_solve_hard, ball_polarizability, evaluate_field_hard, far_field_hard};
use smallbody::geometry::{CVec3, Tensor3, Vec3, C64};
use smallbody::grid::Grid;
use smallbody::kernel::free_kernel;
use smallbody::linalg::SolverOptions;
use smallbody::medium::{plane_wave, BackgroundMedium, Region};
use smallbody::particles::{LatticeOptions, ParticleCloud, ShapeConstants};
use smallbody::quadrature::{gauss_legendre, DirectionSet};

fn free(k: f64) -> BackgroundMedium {
    BackgroundMedium::homogeneous(k, Grid::cube(-0.5, 0.5, 2).unwrap()).unwrap()
}

/// `n^3` points with spacing `s`, shifted so that no two axes align exactly.
fn block(n: usize, s: f64) -> Vec<Vec3> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let jitter = 0.1 * s * (((i * 7 + j * 3 + l * 5) % 5) as f64 / 5.0 - 0.4);
                out.push(Vec3::new(i as f64 * s + jitter, j as f64 * s - jitter, l as f64 * s + 0.5 * jitter));
            }
        }
    }
    out
}

fn impedance_cloud(h: &[C64], a: f64, pts: Vec<Vec3>) -> ParticleCloud {
    let s = ShapeConstants::ball();
    let zeta = h.iter().map(|hv| s.zeta_from_h(*hv, a)).collect();
    ParticleCloud::impedance(pts, a, zeta, s).unwrap()
}

fn rel(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn impedance_system_is_linear_in_the_incident_field(
        h in proptest::collection::vec((0.1f64..5.0, -3.0f64..0.0), 27),
        s in (-3.0f64..3.0, -3.0f64..3.0),
    ) {
        let m = free(2.0);
        let hv: Vec<C64> = h.iter().map(|(r, i)| C64::new(*r, *i)).collect();
        let cloud = impedance_cloud(&hv, 0.004, block(3, 0.15));
        let u0: Vec<C64> = cloud.centers.iter().map(|x| plane_wave(2.0, &Vec3::new(0.0, 0.6, 0.8), x)).collect();
        let scale = C64::new(s.0, s.1);
        let scaled: Vec<C64> = u0.iter().map(|v| v * scale).collect();
        let (u1, _, _) = foldy_impedance::solve_system(&m, &cloud, &u0).unwrap();
        let (u2, _, _) = foldy_impedance::solve_system(&m, &cloud, &scaled).unwrap();
        let expect: Vec<C64> = u1.iter().map(|v| v * scale).collect();
        prop_assert!(rel(&u2, &expect) < 1e-13);
    }

    #[test]
    fn hard_system_is_linear_in_the_incident_field(s in (-3.0f64..3.0, -3.0f64..3.0)) {
        let m = free(2.0);
        let a = 0.01;
        let pts = block(2, 0.2);
        let cloud = ParticleCloud::hard(pts.clone(), a, vec![ball_polarizability(); pts.len()], ShapeConstants::ball()).unwrap();
        let alpha = Vec3::new(0.6, 0.0, 0.8);
        let vals: Vec<C64> = pts.iter().map(|x| plane_wave(2.0, &alpha, x)).collect();
        let grads: Vec<CVec3> = vals.iter().map(|v| CVec3::new(v * C64::new(0.0, 1.2), C64::from(0.0), v * C64::new(0.0, 1.6))).collect();
        let scale = C64::new(s.0, s.1);
        let (u1, g1, _) = foldy_neumann::solve_system(&m, &cloud, &vals, &grads).unwrap();
        let sv: Vec<C64> = vals.iter().map(|v| v * scale).collect();
        let sg: Vec<CVec3> = grads.iter().map(|g| g * scale).collect();
        let (u2, g2, _) = foldy_neumann::solve_system(&m, &cloud, &sv, &sg).unwrap();
        let e1: Vec<C64> = u1.iter().map(|v| v * scale).collect();
        prop_assert!(rel(&u2, &e1) < 1e-13);
        for (x, y) in g1.iter().zip(&g2) {
            prop_assert!((x * scale - y).norm() < 1e-13 * x.norm().max(1.0));
        }
    }
}

#[test]
fn charges_are_of_order_radius() {
    let m = free(2.0);
    let a = 0.004;
    let hv: Vec<C64> = (0..27).map(|i| C64::new(0.5 + i as f64 * 0.1, -(i % 4) as f64 * 0.3)).collect();
    let cloud = impedance_cloud(&hv, a, block(3, 0.15));
    let r = assemble_and_solve(&m, &cloud, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
    let c = coupling_constants(&cloud).unwrap();
    for ((q, cm), u) in r.charges.iter().zip(&c).zip(&r.effective_values) {
        assert!((q + cm * u).norm() <= 1e-15 * q.norm().max(1e-300));
    }
    let sup_ratio = hv.iter().map(|h| (h / (C64::from(1.0) + h)).norm()).fold(0.0, f64::max);
    let umax = r.effective_values.iter().map(|u| u.norm()).fold(0.0, f64::max);
    let qmax = r.charges.iter().map(|q| q.norm()).fold(0.0, f64::max);
    assert!(qmax / (a * umax * 4.0 * PI * sup_ratio) <= 1.0 + 1e-10);
}

/// For real impedances the point-particle system obeys
/// `Im A(a,a) - k/(4pi) int |A|^2 = -k/(16 pi^2) sum |Q_m|^2` exactly.
#[test]
fn discrete_optical_identity() {
    let k = 2.0;
    let m = free(k);
    let hv: Vec<C64> = (0..27).map(|i| C64::from(0.5 + 0.2 * i as f64)).collect();
    let cloud = impedance_cloud(&hv, 0.02, block(3, 0.25));
    let alpha = Vec3::new(0.0, 0.6, 0.8);
    let r = assemble_and_solve(&m, &cloud, &alpha).unwrap();
    let dirs = DirectionSet::gauss_latlon(32, 64).unwrap();
    let ff = far_field(&r, &m, &cloud, &dirs).unwrap();
    let fwd = far_field(&r, &m, &cloud, &DirectionSet::from_directions(vec![alpha]).unwrap()).unwrap();
    let lhs = fwd.total()[0].im - ff.flux(k).unwrap();
    let rhs = -k / (16.0 * PI * PI) * r.charges.iter().map(|q| q.norm_sqr()).sum::<f64>();
    assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs(), "{lhs} vs {rhs}");
    let im_fwd = fwd.total()[0].im;
    assert!((lhs - rhs).abs() <= 1e-6 * im_fwd.abs());
}

#[test]
fn far_field_matches_field_at_large_distance() {
    let k = 2.0;
    let m = free(k);
    let hv = vec![C64::new(1.0, -0.3); 8];
    let cloud = impedance_cloud(&hv, 0.01, block(2, 0.3));
    let alpha = Vec3::new(0.0, 0.0, 1.0);
    let r = assemble_and_solve(&m, &cloud, &alpha).unwrap();
    let betas = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.6, -0.8), Vec3::new(0.0, 0.0, 1.0)];
    let ff = far_field(&r, &m, &cloud, &DirectionSet::from_directions(betas.clone()).unwrap()).unwrap();
    for kr in [100.0, 400.0] {
        let rr = kr / k;
        let pts: Vec<Vec3> = betas.iter().map(|b| b * rr).collect();
        let u = evaluate_field(&r, &m, &cloud, &pts).unwrap();
        for ((x, v), a) in pts.iter().zip(&u.values).zip(&ff.scattered) {
            let s = (v - plane_wave(k, &alpha, x)) * rr * C64::new(0.0, -kr).exp();
            assert!((s - a).norm() <= 3.0 / kr * a.norm(), "kr {kr}: {s} vs {a}");
        }
    }
}

#[test]
fn study_with_one_particle_reproduces_the_single_ball_amplitude() {
    let m = BackgroundMedium::homogeneous(1.0, Grid::cube(-0.5, 0.5, 4).unwrap()).unwrap();
    let a = 0.02;
    let n = vec![a; 64];
    let h = vec![C64::from(1.0); 64];
    let opts = StudyOptions {
        lattice: LatticeOptions {
            cell_voxels: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let s = run_impedance_study(&m, &h, &n, &[a], &Vec3::new(0.0, 0.0, 1.0), None, &opts).unwrap();
    assert_eq!(s.scales[0].particles, 1);
    let expected = -a * 0.5;
    assert!((s.scales[0].forward_amplitude - C64::from(expected)).norm() < 1e-15);
}

#[test]
fn background_two_body_closed_form() {
    let k = 2.0;
    let m = BackgroundMedium::from_fn(
        k,
        Grid::cube(-0.5, 0.5, 8).unwrap(),
        Region::Ball {
            center: Vec3::zeros(),
            radius: 0.45,
        },
        |x| C64::new(1.2 + 0.3 * x.x, 0.05),
        SolverOptions::default(),
    )
    .unwrap();
    let pts = vec![Vec3::new(-0.2, 0.1, 0.05), Vec3::new(0.25, -0.1, 0.2)];
    let hv = [C64::new(2.0, -0.5), C64::from(0.7)];
    let cloud = impedance_cloud(&hv, 0.01, pts.clone());
    let alpha = Vec3::new(0.0, 0.0, 1.0);
    let r = assemble_and_solve(&m, &cloud, &alpha).unwrap();
    let u0 = m.incident_field(&alpha, &pts).unwrap().values;
    let c = coupling_constants(&cloud).unwrap();
    let g12 = m.green(&pts[0], &pts[1]).unwrap();
    let g21 = m.green(&pts[1], &pts[0]).unwrap();
    let u1 = (u0[0] - g12 * c[1] * u0[1]) / (C64::from(1.0) - g12 * g21 * c[0] * c[1]);
    assert!((r.effective_values[0] - u1).norm() < 1e-9 * u1.norm());
    let single = impedance_cloud(&hv[..1], 0.01, pts[..1].to_vec());
    let r1 = assemble_and_solve(&m, &single, &alpha).unwrap();
    assert!((r1.effective_values[0] - u0[0]).norm() < 1e-12);
}

fn hard_pair(d: f64, a: f64) -> ParticleCloud {
    let pts = vec![Vec3::zeros(), Vec3::new(d * 0.6, d * 0.8, 0.0)];
    ParticleCloud::hard(pts, a, vec![ball_polarizability(); 2], ShapeConstants::ball()).unwrap()
}

#[test]
fn hard_gradients_match_finite_differences_of_the_other_particles() {
    let k = 2.0;
    let m = free(k);
    let a = 0.01;
    let pts = block(2, 0.15);
    let cloud = ParticleCloud::hard(pts.clone(), a, vec![ball_polarizability(); pts.len()], ShapeConstants::ball()).unwrap();
    let alpha = Vec3::new(0.48, 0.6, 0.64);
    let r = assemble_and_solve_hard(&m, &cloud, &alpha).unwrap();
    let step = 1e-4;
    for j in [0, 5] {
        let others: Vec<usize> = (0..pts.len()).filter(|&i| i != j).collect();
        let centers: Vec<Vec3> = others.iter().map(|&i| pts[i]).collect();
        let q: Vec<C64> = others.iter().map(|&i| r.charges[i]).collect();
        let p: Vec<CVec3> = others.iter().map(|&i| r.dipole_moments[i]).collect();
        let field = |x: Vec3| plane_wave(k, &alpha, &x) + radiate(&m, &centers, &q, Some(&p), &[x]).unwrap()[0];
        assert!((field(pts[j]) - r.effective_values[j]).norm() < 1e-12);
        for ax in 0..3 {
            let mut e = Vec3::zeros();
            e[ax] = step;
            let fd = (field(pts[j] + e) - field(pts[j] - e)) / (2.0 * step);
            let g = r.effective_gradients[j][ax];
            assert!((fd - g).norm() <= 1e-4 * r.effective_gradients[j].norm(), "{fd} vs {g}");
        }
    }
}

fn rotation_about(axis: &Vec3, angle: f64) -> nalgebra::Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}

#[test]
fn single_hard_ball_depends_on_the_scattering_angle_only() {
    let k = 2.0;
    let m = free(k);
    let cloud = ParticleCloud::hard(vec![Vec3::zeros()], 0.01, vec![ball_polarizability()], ShapeConstants::ball()).unwrap();
    let alpha = Vec3::new(0.0, 0.6, 0.8);
    let r = assemble_and_solve_hard(&m, &cloud, &alpha).unwrap();
    let perp = Vec3::new(1.0, 0.0, 0.0);
    let mut pairs = Vec::new();
    for i in 0..100 {
        let theta = PI * (i as f64 + 0.5) / 100.0;
        let b1 = rotation_about(&perp, theta) * alpha;
        let b2 = rotation_about(&alpha, 0.3 + 0.05 * i as f64) * b1;
        pairs.push((b1, b2));
    }
    let dirs = DirectionSet::from_directions(pairs.iter().flat_map(|(a, b)| [*a, *b]).collect()).unwrap();
    let ff = far_field_hard(&r, &m, &cloud, &dirs).unwrap().total();
    let pref = k * k * 1e-6 / 3.0;
    for (i, (b1, _)) in pairs.iter().enumerate() {
        let (a1, a2) = (ff[2 * i], ff[2 * i + 1]);
        assert!((a1 - a2).norm() <= 1e-12 * pref, "{a1} vs {a2}");
        let expected = pref * (1.5 * b1.dot(&alpha) - 1.0);
        assert!((a1.norm() - expected.abs()).abs() <= 1e-10 * pref);
    }
}

#[test]
fn monopole_only_hard_ball_matches_impedance_evaluation() {
    let k = 2.0;
    let m = free(k);
    let zero: Tensor3 = [[0.0; 3]; 3];
    let x1 = Vec3::new(0.1, 0.0, -0.1);
    let cloud = ParticleCloud::hard(vec![x1], 0.01, vec![zero], ShapeConstants::ball()).unwrap();
    let alpha = Vec3::new(0.0, 0.0, 1.0);
    let r = assemble_and_solve_hard(&m, &cloud, &alpha).unwrap();
    assert_eq!(r.dipole_moments[0], CVec3::zeros());
    let pts = [Vec3::new(1.0, 2.0, 0.5), Vec3::new(-3.0, 0.0, 1.0)];
    let u = evaluate_field_hard(&r, &m, &cloud, &pts).unwrap();
    for (x, v) in pts.iter().zip(&u.values) {
        let direct = plane_wave(k, &alpha, x) + free_kernel(x, &x1, k).unwrap() * r.charges[0];
        assert!((v - direct).norm() < 1e-15);
    }
}

#[test]
fn dipole_dominates_at_short_range() {
    let k = 1.0;
    let m = free(k);
    let a = 1e-3;
    let alpha = Vec3::new(0.6, 0.8, 0.0);
    let mut scaled = Vec::new();
    for d in [0.02, 0.04, 0.08] {
        let cloud = hard_pair(d, a);
        let r = assemble_and_solve_hard(&m, &cloud, &alpha).unwrap();
        // Field of particle 0 at the other centre, split by channel.
        let x = [cloud.centers[1]];
        let c = [cloud.centers[0]];
        let mono = radiate(&m, &c, &r.charges[..1], None, &x).unwrap()[0];
        let dip = radiate(&m, &c, &[C64::from(0.0)], Some(&r.dipole_moments[..1]), &x).unwrap()[0];
        scaled.push(dip.norm() / mono.norm() * k * d);
    }
    let spread = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1.1, "{scaled:?}");
}

#[test]
fn hard_perturbation_vanishes_with_volume() {
    let k = 2.0;
    let m = free(k);
    let alpha = Vec3::new(0.0, 0.0, 1.0);
    let mut dev = Vec::new();
    for a in [0.004, 0.002] {
        let cloud = hard_pair(0.1, a);
        let r = assemble_and_solve_hard(&m, &cloud, &alpha).unwrap();
        let u0 = plane_wave(k, &alpha, &cloud.centers[0]);
        dev.push((r.effective_values[0] - u0).norm());
    }
    let ratio = dev[0] / dev[1];
    assert!((ratio - 8.0).abs() < 0.01, "ratio {ratio}");
}

/// `|int_S (g(x,s) - g(x,c)) sigma ds| <= |Q| (a/d^2 + ka/d)` for a constant
/// layer on a sphere, integrated with a product Gauss rule.
#[test]
fn monopole_truncation_error_bound() {
    let k = 2.0;
    let (ct, wt) = gauss_legendre(24);
    let nphi = 48;
    let centre = Vec3::new(0.1, 0.0, -0.2);
    for a in [1e-3, 4e-3] {
        for d in [0.05, 0.1, 0.4] {
            let sigma = 1.0;
            let q = sigma * 4.0 * PI * a * a;
            let x = centre + Vec3::new(0.0, 0.6, 0.8) * d;
            let g0 = free_kernel(&x, &centre, k).unwrap();
            let mut s = C64::from(0.0);
            for (c, w) in ct.iter().zip(&wt) {
                let st = (1.0 - c * c).sqrt();
                for j in 0..nphi {
                    let phi = 2.0 * PI * j as f64 / nphi as f64;
                    let y = centre + Vec3::new(st * phi.cos(), st * phi.sin(), *c) * a;
                    s += (free_kernel(&x, &y, k).unwrap() - g0) * (w * 2.0 * PI / nphi as f64 * a * a * sigma);
                }
            }
            assert!(s.norm() <= q * (a / (d * d) + k * a / d), "a {a} d {d}: {}", s.norm());
        }
    }
}
