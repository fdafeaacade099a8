use std::f64::consts::PI;

use orthodeg::flux::DegeneracyParams;
use orthodeg::geometry::{BoundaryKind, Grid};
use orthodeg::solver::{
    solve, step_explicit, step_implicit, step_objective, weak_energy, Field, Problem, Scheme,
    ScenarioSpec, SolverError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{lattice_minimize, line, thomas_heat_step};

#[test]
fn heat_step_matches_tridiagonal_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (cells, h, tau) = (12, 0.1, 0.004);
    let grid = line(cells, h, tau, 1);
    let prev: Vec<f64> = (0..=cells).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let (left, right) = (0.3, -0.7);
    let params = DegeneracyParams::orthotropic(2.0, vec![0.0]).unwrap();
    let problem = Problem::new(grid, params, prev.clone(), Scheme::default())
        .with_boundary(move |x, _| if x[0] < 0.5 { left } else { right });
    let got = step_implicit(&problem, &prev, tau).unwrap();
    let want = thomas_heat_step(&prev, left, right, h, tau);
    for (a, b) in got.values.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn degenerate_step_matches_brute_force_minimum() {
    let (h, tau) = (0.25, 0.05);
    let grid = line(4, h, tau, 1);
    let params = DegeneracyParams::orthotropic(2.0, vec![1.0]).unwrap();
    let prev = vec![0.0, 1.2, -0.4, 0.9, 0.0];
    let problem = Problem::new(grid, params, prev.clone(), Scheme::default());
    let got = step_implicit(&problem, &prev, tau).unwrap().values;
    let objective = |x: &[f64; 3]| {
        let v = [0.0, x[0], x[1], x[2], 0.0];
        step_objective(&problem, &v, &prev, tau)
    };
    let best = lattice_minimize(objective, [prev[1], prev[2], prev[3]], 2.0);
    for (a, b) in got[1..4].iter().zip(&best) {
        assert!((a - b).abs() <= 1e-4, "{a} vs {b}");
    }
    assert!(objective(&[got[1], got[2], got[3]]) <= objective(&best) + 1e-12);
}

fn heat_error(level: usize) -> f64 {
    let h = PI / (8 * (1 << level)) as f64;
    let steps = 3 * (1 << (2 * level));
    let grid = Grid::new(vec![0.0, 0.0], &[PI, PI], h, h * h / 4.0, steps, BoundaryKind::Dirichlet).unwrap();
    let params = DegeneracyParams::orthotropic(2.0, vec![0.0, 0.0]).unwrap();
    let sc = ScenarioSpec::SinProduct { amplitude: 1.0 }.build(&grid, &params, 0).unwrap();
    let problem = Problem::from_scenario(grid.clone(), params, &sc, Scheme::default());
    let sol = solve(&problem).unwrap();
    let exact = sc.exact.unwrap();
    let last = grid.steps();
    let t = grid.time(last);
    (0..grid.node_count())
        .map(|i| (sol.field.at(last, i) - exact(&grid.node_coords(i), t)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn heat_converges_at_second_order() {
    let errs: Vec<f64> = (0..4).map(heat_error).collect();
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
    }
}

#[test]
fn degenerate_affine_state_is_steady() {
    let grid = Grid::new(vec![0.0, 0.0], &[1.0, 1.0], 0.0625, 0.01, 100, BoundaryKind::Dirichlet).unwrap();
    let params = DegeneracyParams::orthotropic(2.0, vec![1.0, 1.0]).unwrap();
    let sc = ScenarioSpec::AffineSlope {
        slopes: vec![0.5, 0.5],
        offset: 0.0,
    }
    .build(&grid, &params, 0)
    .unwrap();
    let sol = solve(&Problem::from_scenario(grid.clone(), params.clone(), &sc, Scheme::default())).unwrap();
    for m in 0..=100 {
        for (a, b) in sol.field.slice(m).iter().zip(sol.field.slice(0)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
    assert!(weak_energy(&sol.field, &params, 0..101).iter().all(|&e| e == 0.0));
}

fn parabola_error(level: usize) -> f64 {
    let h = 0.25 / (1 << level) as f64;
    let tau = h * h;
    let steps = (0.25 / tau).round() as usize;
    let grid = Grid::new(vec![0.0, 0.0], &[1.0, 1.0], h, tau, steps, BoundaryKind::Dirichlet).unwrap();
    let params = DegeneracyParams::orthotropic(3.0, vec![0.0, 0.4]).unwrap();
    let sc = ScenarioSpec::ParabolaDecay { amplitude: 1.0 }.build(&grid, &params, 0).unwrap();
    let sol = solve(&Problem::from_scenario(grid.clone(), params, &sc, Scheme::default())).unwrap();
    let exact = sc.exact.unwrap();
    let t = grid.t_end();
    (0..grid.node_count())
        .map(|i| (sol.field.at(steps, i) - exact(&grid.node_coords(i), t)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn manufactured_solution_error_vanishes_under_refinement() {
    let errs: Vec<f64> = (0..3).map(parabola_error).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 0.3 * errs[0], "{errs:?}");
}

fn bump_problem(params: DegeneracyParams, grid: Grid, seed: u64) -> Problem {
    let sc = ScenarioSpec::RandomBump {
        seed: Some(seed),
        bumps: 4,
        amplitude: 1.5,
    }
    .build(&grid, &params, 0)
    .unwrap();
    Problem::from_scenario(grid, params, &sc, Scheme::default())
}

#[test]
fn maximum_principle_and_objective_decrease() {
    let grid = Grid::new(vec![0.0, 0.0], &[1.0, 1.0], 1.0 / 24.0, 2e-3, 20, BoundaryKind::Dirichlet).unwrap();
    for params in [
        DegeneracyParams::orthotropic(2.0, vec![0.5, 1.5]).unwrap(),
        DegeneracyParams::orthotropic(3.0, vec![0.2, 0.0]).unwrap(),
        DegeneracyParams::isotropic(2.5, 0.7).unwrap(),
    ] {
        let problem = bump_problem(params, grid.clone(), 3);
        let sol = solve(&problem).unwrap();
        let lo = problem.initial.iter().copied().fold(0.0, f64::min);
        let hi = problem.initial.iter().copied().fold(0.0, f64::max);
        for d in &sol.diagnostics {
            assert!(d.min >= lo - 1e-10 && d.max <= hi + 1e-10, "{d:?}");
            assert!(d.objective_end <= d.objective_start, "{d:?}");
        }
        let energy = weak_energy(&sol.field, &problem.params, 0..grid.levels());
        for w in energy.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{energy:?}");
        }
    }
}

#[test]
fn negated_data_gives_negated_solution() {
    let grid = Grid::new(vec![0.0, 0.0], &[1.0, 1.0], 0.05, 2e-3, 10, BoundaryKind::Dirichlet).unwrap();
    for params in [
        DegeneracyParams::orthotropic(3.0, vec![0.3, 0.8]).unwrap(),
        DegeneracyParams::isotropic(2.0, 0.5).unwrap(),
    ] {
        let problem = bump_problem(params, grid.clone(), 5).with_source(|x, t| x[0] - t);
        let a = solve(&problem).unwrap().field;
        let b = solve(&problem.negated()).unwrap().field;
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x + y).abs() <= 1e-13);
        }
    }
}

#[test]
fn periodic_mass_is_conserved() {
    let grid = Grid::new(vec![0.0, 0.0], &[1.0, 1.0], 0.05, 1e-3, 20, BoundaryKind::Periodic).unwrap();
    let params = DegeneracyParams::orthotropic(3.0, vec![0.5, 0.1]).unwrap();
    let initial: Vec<f64> = (0..grid.node_count())
        .map(|i| {
            let x = grid.node_coords(i);
            (2.0 * PI * x[0]).sin() * 2.0 + (2.0 * PI * x[1]).cos() + 0.3
        })
        .collect();
    let sol = solve(&Problem::new(grid.clone(), params, initial, Scheme::default())).unwrap();
    let mass = |m: usize| sol.field.slice(m).iter().sum::<f64>() * grid.cell_volume();
    for m in 0..grid.steps() {
        assert!((mass(m + 1) - mass(m)).abs() <= 1e-12);
    }
    assert!(sol.field.slice(grid.steps()) != sol.field.slice(0));
}

#[test]
fn one_dimensional_isotropic_equals_orthotropic_bitwise() {
    let grid = line(40, 0.025, 5e-4, 30);
    let initial: Vec<f64> = (0..=40).map(|i| (7.0 * grid.coord(0, i)).sin() * 3.0).collect();
    let run = |params: DegeneracyParams| {
        solve(&Problem::new(grid.clone(), params, initial.clone(), Scheme::default()))
            .unwrap()
            .field
    };
    let iso = run(DegeneracyParams::isotropic(3.0, 0.8).unwrap());
    let ortho = run(DegeneracyParams::orthotropic(3.0, vec![0.8]).unwrap());
    assert_eq!(
        iso.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        ortho.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn explicit_and_implicit_agree_as_tau_shrinks() {
    let params = DegeneracyParams::orthotropic(3.0, vec![0.2, 0.2]).unwrap();
    let h = 1.0 / 16.0;
    let diff = |tau: f64| {
        let steps = (2e-3 / tau).round() as usize;
        let grid = Grid::new(vec![0.0, 0.0], &[1.0, 1.0], h, tau, steps, BoundaryKind::Dirichlet).unwrap();
        let base = bump_problem(params.clone(), grid, 9);
        let a = solve(&base).unwrap().field;
        let b = solve(&base.clone().with_scheme(Scheme::explicit())).unwrap().field;
        a.slice(steps)
            .iter()
            .zip(b.slice(steps))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let coarse = diff(2e-5);
    let fine = diff(1e-5);
    let ratio = coarse / fine;
    assert!(ratio > 1.6 && ratio < 2.5, "{coarse:e} {fine:e}");
}

#[test]
fn explicit_degenerate_state_is_fixed_and_heat_matches_stencil() {
    let grid = line(10, 0.1, 1e-3, 1);
    let params = DegeneracyParams::orthotropic(2.0, vec![1.0]).unwrap();
    let u0: Vec<f64> = (0..=10).map(|i| 0.9 * grid.coord(0, i)).collect();
    let problem = Problem::new(grid.clone(), params, u0.clone(), Scheme::explicit())
        .with_boundary(|x, _| 0.9 * x[0]);
    assert_eq!(step_explicit(&problem, &u0, 0.0).unwrap(), u0);

    let heat = DegeneracyParams::orthotropic(2.0, vec![0.0]).unwrap();
    let u0: Vec<f64> = (0..=10).map(|i| (i * i) as f64 * 0.01).collect();
    let problem = Problem::new(grid, heat, u0.clone(), Scheme::explicit())
        .with_boundary(|x, _| x[0] * x[0]);
    let next = step_explicit(&problem, &u0, 0.0).unwrap();
    for i in 1..10 {
        let want = u0[i] + 1e-3 * (u0[i - 1] - 2.0 * u0[i] + u0[i + 1]) / 0.01;
        assert!((next[i] - want).abs() < 1e-14);
    }
}

#[test]
fn energy_scales_quadratically_for_heat() {
    let grid = Grid::new(vec![0.0, 0.0], &[1.0, 1.0], 0.1, 0.01, 2, BoundaryKind::Dirichlet).unwrap();
    let params = DegeneracyParams::orthotropic(2.0, vec![0.0, 0.0]).unwrap();
    let u = Field::from_fn(grid, |x, t| (3.0 * x[0]).sin() * x[1] + t);
    let e1 = weak_energy(&u, &params, 0..3);
    let e2 = weak_energy(&u.map(|v| 2.0 * v), &params, 0..3);
    for (a, b) in e1.iter().zip(&e2) {
        assert!((b - 4.0 * a).abs() <= 1e-12 * b);
    }
}

#[test]
fn nonconvergence_is_reported() {
    let grid = line(20, 0.05, 0.01, 1);
    let params = DegeneracyParams::orthotropic(3.0, vec![0.0]).unwrap();
    let u0: Vec<f64> = (0..=20).map(|i| (i as f64).sin()).collect();
    let problem = Problem::new(
        grid,
        params,
        u0,
        Scheme::Implicit {
            tolerance: 1e-14,
            max_iterations: 2,
        },
    );
    match solve(&problem) {
        Err(SolverError::Step { index: 1, source }) => {
            assert!(matches!(*source, SolverError::NonConvergence { iterations: 2, .. }))
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}
