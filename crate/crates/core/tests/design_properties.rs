use std::f64::consts::PI;

use proptest::prelude::*;
use smallbody::convergence::StudyOptions;
use smallbody::design::{
    alternative_real_choice, choose_h_n, design, realize, target_to_potential, verify_design, DesignBranch, DesignSpec,
    HnChoice,
};
use smallbody::foldy_impedance::{assemble_and_solve, evaluate_field};
use smallbody::geometry::{Vec3, C64};
use smallbody::grid::Grid;
use smallbody::limit::{evaluate_limit, solve_impedance_limit, ImpedanceLimitProblem};
use smallbody::medium::BackgroundMedium;
use smallbody::particles::{LatticeOptions, ShapeConstants};
use smallbody::Error;

/// `4 pi N h / (1 + h)` for balls.
fn potential_of(h: C64, n: f64) -> C64 {
    if n == 0.0 {
        return C64::from(0.0);
    }
    h / (1.0 + h) * (4.0 * PI * n)
}

fn admissible_p() -> impl Strategy<Value = C64> {
    prop_oneof![
        (-10.0f64..10.0, -10.0f64..-1e-6).prop_map(|(a, b)| C64::new(a, b)),
        (-10.0f64..10.0).prop_map(C64::from),
        (-10.0f64..-1e-6).prop_map(|b| C64::new(0.0, b)),
        Just(C64::from(0.0)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn recipe_reproduces_the_potential(p in proptest::collection::vec(admissible_p(), 1..40)) {
        let c = choose_h_n(&p, &ShapeConstants::ball()).unwrap();
        for ((pv, h), n) in p.iter().zip(&c.h).zip(&c.n) {
            prop_assert!(h.im <= 0.0);
            prop_assert!(*n >= 0.0);
            let back = potential_of(*h, *n);
            prop_assert!((back - pv).norm() <= 1e-12 * pv.norm(), "{pv} -> {back}");
        }
        for (pv, b) in p.iter().zip(&c.branches) {
            let expected = if pv.im < 0.0 {
                if pv.re > 0.0 { DesignBranch::A } else { DesignBranch::E }
            } else if pv.re > 0.0 {
                DesignBranch::B
            } else if pv.re < 0.0 {
                DesignBranch::C
            } else {
                DesignBranch::D
            };
            prop_assert_eq!(*b, expected);
        }
        prop_assert_eq!(c.extrapolated(), c.branches.contains(&DesignBranch::E));
    }

    #[test]
    fn real_potentials_have_two_realisations(p1 in 1e-3f64..50.0) {
        let s = ShapeConstants::ball();
        let c = choose_h_n(&[C64::from(p1)], &s).unwrap();
        let (h, n) = alternative_real_choice(p1, &s);
        prop_assert!((n - 3.0 * p1 / (8.0 * PI)).abs() <= 1e-15 * n);
        prop_assert!(h != c.h[0] && n != c.n[0]);
        prop_assert!((potential_of(h, n) - p1).norm() <= 1e-12 * p1);
        prop_assert!((potential_of(c.h[0], c.n[0]) - p1).norm() <= 1e-12 * p1);
    }
}

fn spec(k: f64, grid: Grid, target: impl Fn(&Vec3) -> C64, a: f64) -> DesignSpec {
    let m = BackgroundMedium::homogeneous(k, grid).unwrap();
    let n = m.grid().nodes().iter().map(target).collect();
    DesignSpec::new(m, n, a, ShapeConstants::ball()).unwrap()
}

#[test]
fn target_potential_examples() {
    let s = spec(2.0, Grid::cube(-0.5, 0.5, 2).unwrap(), |_| C64::from(1.2), 1e-3);
    assert!(target_to_potential(&s).iter().all(|p| (p - C64::from(-0.8)).norm() < 1e-15));
    let s = spec(1.0, Grid::cube(-0.5, 0.5, 2).unwrap(), |_| C64::new(1.0, 0.1), 1e-3);
    for p in target_to_potential(&s) {
        assert!((p - C64::new(0.0, -0.1)).norm() < 1e-15);
    }
    let s = spec(1.0, Grid::cube(-0.5, 0.5, 2).unwrap(), |_| C64::from(1.0), 1e-3);
    assert!(target_to_potential(&s).iter().all(|p| *p == C64::from(0.0)));
}

#[test]
fn gaining_targets_are_rejected() {
    let m = BackgroundMedium::homogeneous(1.0, Grid::cube(-0.5, 0.5, 2).unwrap()).unwrap();
    let r = DesignSpec::new(m, vec![C64::new(1.1, -0.01); 8], 1e-3, ShapeConstants::ball());
    assert!(matches!(r, Err(Error::Invariant(_))));
}

#[test]
fn centimetre_cell_with_thousand_particles() {
    let k = 100.0;
    let s = spec(k, Grid::cube(0.0, 0.01, 2).unwrap(), |_| C64::from(1.0 + 4.0 * PI), 1e-5);
    let lattice = LatticeOptions {
        cell_voxels: 2,
        ..Default::default()
    };
    let r = design(&s, &lattice).unwrap();
    assert!(r.choice.branches.iter().all(|b| *b == DesignBranch::C));
    assert!(r.choice.n.iter().all(|n| (n - 1e4).abs() < 1e-9));
    let cells = &r.cloud.placement.as_ref().unwrap().cells;
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].count, 1000);
    assert!((r.feasibility.spacing_over_radius.unwrap() - 100.0).abs() < 1e-6);
    assert!((r.feasibility.volume_fraction - 4.18879e-6).abs() < 1e-11);
    assert!(r.feasibility.is_valid());
}

#[test]
fn overcrowded_design_is_rejected_with_cell_diagnostics() {
    let s = spec(1.0, Grid::cube(-0.5, 0.5, 4).unwrap(), |_| C64::from(1.0), 0.01);
    let choice = HnChoice {
        h: vec![C64::from(1.0); 64],
        n: vec![100.0; 64],
        branches: vec![DesignBranch::B; 64],
    };
    let lattice = LatticeOptions {
        cell_voxels: 4,
        ..Default::default()
    };
    match realize(&s, &choice, &lattice) {
        Err(Error::InfeasibleDensity { count, spacing, required, .. }) => {
            assert_eq!(count, 10_000);
            assert!(spacing < required);
        }
        r => panic!("{:?}", r.map(|d| d.cloud.len())),
    }
}

#[test]
fn unchanged_target_gives_empty_cloud_and_zero_error() {
    let s = spec(1.0, Grid::cube(-0.5, 0.5, 4).unwrap(), |_| C64::from(1.0), 0.01);
    let r = design(&s, &LatticeOptions::default()).unwrap();
    assert!(r.cloud.is_empty() && r.feasibility.is_valid());
    let v = verify_design(&r, &s, &Vec3::new(0.0, 0.0, 1.0), &[0.02, 0.01], None, &StudyOptions::default()).unwrap();
    assert!(v.study.errors().iter().all(|e| *e <= 1e-15), "{:?}", v.study.errors());
}

#[test]
fn absorbing_design_darkens_the_shadow() {
    let k = 1.0;
    let s = spec(k, Grid::cube(-0.5, 0.5, 8).unwrap(), |_| C64::new(0.95, 0.5), 1e-3);
    let lattice = LatticeOptions {
        cell_voxels: 8,
        ..Default::default()
    };
    let r = design(&s, &lattice).unwrap();
    assert!(r.choice.branches.iter().all(|b| *b == DesignBranch::A));
    assert!(!r.extrapolated);
    let alpha = Vec3::new(0.0, 0.0, 1.0);
    let shadow = [Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.1, -0.1, 1.2)];
    let sol = assemble_and_solve(&s.medium, &r.cloud, &alpha).unwrap();
    let um = evaluate_field(&sol, &s.medium, &r.cloud, &shadow).unwrap();
    let prob = ImpedanceLimitProblem::new(&s.medium, r.p.clone()).unwrap();
    let lim = solve_impedance_limit(&prob, &alpha).unwrap();
    let ul = evaluate_limit(&prob, &lim, &shadow).unwrap();
    for (a, b) in um.values.iter().zip(&ul.values) {
        assert!(a.norm() < 1.0, "|u_M| = {}", a.norm());
        assert!(b.norm() < 1.0, "|u| = {}", b.norm());
    }
}
