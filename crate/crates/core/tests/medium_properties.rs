use std::f64::consts::PI;

use proptest::prelude::*;
use smallbody::geometry::{Vec3, C64};
use smallbody::grid::Grid;
use smallbody::kernel::{free_kernel, free_kernel_grad_y};
use smallbody::linalg::SolverOptions;
use smallbody::medium::{BackgroundMedium, Region};
use smallbody::{Error, ErrorClass};

fn box_region(h: f64) -> Region {
    Region::Box {
        lower: Vec3::repeat(-h),
        upper: Vec3::repeat(h),
    }
}

fn constant_medium(k: f64, n: usize, n0: C64) -> BackgroundMedium {
    BackgroundMedium::from_fn(k, Grid::cube(-0.5, 0.5, n).unwrap(), box_region(0.5), |_| n0, SolverOptions::default())
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn admissible_media_round_trip(re in 0.3f64..2.5, im in 0.0f64..0.6, k in 0.5f64..4.0) {
        let g = Grid::cube(-0.5, 0.5, 3).unwrap();
        let m = BackgroundMedium::from_fn(k, g, box_region(0.2), |x| C64::new(re + 0.1 * x.x, im), SolverOptions::default()).unwrap();
        for (q, n) in m.q0().iter().zip(m.n0()) {
            prop_assert!(q.im <= 0.0);
            let back = C64::from(1.0) - q / (k * k);
            prop_assert!((back - n).norm() <= 1e-14 * n.norm().max(1.0));
        }
        for (i, x) in m.grid().nodes().iter().enumerate() {
            if !m.region().contains(x) {
                prop_assert_eq!(m.q0()[i], C64::from(0.0));
            }
        }
    }

    #[test]
    fn active_media_are_rejected(re in 0.3f64..2.5, im in -1.0f64..-1e-9) {
        let g = Grid::cube(-0.5, 0.5, 3).unwrap();
        let r = BackgroundMedium::from_fn(1.0, g, Region::All, |_| C64::new(re, im), SolverOptions::default());
        match r {
            Err(e) => prop_assert_eq!(e.class(), ErrorClass::Physics),
            Ok(_) => prop_assert!(false, "active medium accepted"),
        }
    }
}

#[test]
fn refraction_outside_region_is_rejected() {
    let g = Grid::cube(-0.5, 0.5, 4).unwrap();
    let n0 = vec![C64::from(1.2); g.len()];
    let r = BackgroundMedium::new(1.0, g, box_region(0.2), n0, SolverOptions::default());
    assert!(matches!(r, Err(Error::Invariant(_))));
}

/// Midpoint quadrature of `int g(x,z) q g(z,y) dz` over the grid voxels.
fn born_term(m: &BackgroundMedium, x: &Vec3, y: &Vec3) -> C64 {
    let k = m.k();
    let h3 = m.grid().voxel_volume();
    m.grid()
        .nodes()
        .iter()
        .zip(m.q0())
        .map(|(z, q)| free_kernel(x, z, k).unwrap() * q * free_kernel(z, y, k).unwrap() * h3)
        .sum()
}

#[test]
fn background_green_is_second_order_in_the_potential() {
    let k = 1.5;
    let x = Vec3::new(1.2, 0.3, -0.4);
    let y = Vec3::new(-0.9, -0.8, 1.1);
    let err = |eps: f64| {
        let m = constant_medium(k, 6, C64::from(1.0 - eps));
        let g = free_kernel(&x, &y, k).unwrap();
        (m.green(&x, &y).unwrap() - (g - born_term(&m, &x, &y))).norm()
    };
    let (e1, e2) = (err(0.2), err(0.1));
    assert!(e1 / e2 >= 3.5, "reduction {}", e1 / e2);
}

#[test]
fn free_green_decays_like_a_spherical_wave() {
    let k = 2.0;
    let m = BackgroundMedium::homogeneous(k, Grid::cube(-0.5, 0.5, 2).unwrap()).unwrap();
    let y = Vec3::new(0.3, -0.2, 0.4);
    for r in [10.0, 50.0, 200.0, 1000.0] {
        let x = Vec3::new(r, 0.0, 0.0);
        let v = r * m.green(&x, &y).unwrap().norm();
        assert!((v * 4.0 * PI - 1.0).abs() <= 2.0 / (k * r));
    }
}

#[test]
fn background_green_is_reciprocal_off_the_grid() {
    let m = BackgroundMedium::from_fn(
        2.0,
        Grid::cube(-0.5, 0.5, 9).unwrap(),
        Region::Ball {
            center: Vec3::zeros(),
            radius: 0.45,
        },
        |x| C64::from(1.5 - x.norm()),
        SolverOptions::default(),
    )
    .unwrap();
    let pts = [
        Vec3::new(0.11, -0.23, 0.07),
        Vec3::new(-0.31, 0.12, 0.29),
        Vec3::new(0.8, 0.4, -0.6),
        Vec3::new(-1.3, 0.2, 0.05),
    ];
    for x in &pts {
        for y in &pts {
            if x != y {
                let a = m.green(x, y).unwrap();
                let b = m.green(y, x).unwrap();
                assert!((a - b).norm() <= 1e-8 * a.norm().max(1.0), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn absorbing_slab_attenuates_transmitted_wave() {
    let k = 2.0;
    let m = BackgroundMedium::from_fn(
        k,
        Grid::new(Vec3::new(-1.0, -1.0, -0.25), 0.125, [16, 16, 4]).unwrap(),
        Region::All,
        |_| C64::new(1.0, 0.5),
        SolverOptions::default(),
    )
    .unwrap();
    assert!(m.q0().iter().all(|q| q.im < 0.0));
    let alpha = Vec3::new(0.0, 0.0, 1.0);
    let downstream: Vec<Vec3> = [0.5, 1.0, 2.0].iter().map(|z| Vec3::new(0.0, 0.0, *z)).collect();
    let u = m.incident_field(&alpha, &downstream).unwrap();
    for v in &u.values {
        assert!(v.norm() < 1.0, "|u0| = {}", v.norm());
    }
}

#[test]
fn smoothness_ratios_are_bounded() {
    let m = constant_medium(1.0, 6, C64::from(1.3));
    let r = m.lemma_bounds_check(1e-3, 0.1, 1000, 7).unwrap();
    assert!(r.max_ratio_free <= 5.0, "{r:?}");
    assert!(r.max_ratio_background <= 5.0, "{r:?}");
    assert!(m.lemma_bounds_check(1e-2, 0.05, 10, 0).is_err());
}

#[test]
fn smoothness_differences_shrink_with_distance_and_radius() {
    let m = constant_medium(1.0, 6, C64::from(1.3));
    let base = m.lemma_bounds_check(1e-3, 0.1, 500, 3).unwrap();
    let far = m.lemma_bounds_check(1e-3, 0.2, 500, 3).unwrap();
    let small = m.lemma_bounds_check(2.5e-4, 0.1, 500, 3).unwrap();
    assert!(far.max_difference_free < base.max_difference_free);
    assert!(far.max_difference_background < base.max_difference_background);
    assert!(small.max_difference_free < base.max_difference_free);
    assert!(small.max_ratio_free.is_finite() && small.max_ratio_free <= 5.0);
}

#[test]
fn gradient_estimate_is_uniform_in_distance() {
    let k = 1.0;
    let m = constant_medium(k, 6, C64::from(1.3));
    let y = Vec3::new(0.05, -0.1, 0.02);
    let dirs = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.6, 0.8), Vec3::new(-0.48, 0.6, -0.64)];
    let mut sup: Vec<f64> = Vec::new();
    for d in [0.5, 1.0, 2.0, 4.0] {
        let w = (d / k).min(d * d);
        let mut s: f64 = 0.0;
        for u in &dirs {
            let x = y + u * (d / k);
            let free = free_kernel_grad_y(&x, &y, k).unwrap().norm();
            let bg = m.green_grad_y(&x, &y).unwrap().norm();
            s = s.max(free * w).max(bg * w);
        }
        sup.push(s);
    }
    let hi = sup.iter().cloned().fold(0.0, f64::max);
    let lo = sup.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi / lo < 5.0, "{sup:?}");
}
