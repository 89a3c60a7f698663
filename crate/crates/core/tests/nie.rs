use pinn_spectral::gpr::ProblemData;
use pinn_spectral::nie::{
    effective_action, greens_function_toy, greens_single_pole, nie_solve_grid, toy_predict, EffectiveAction, ToyConfig,
};
use pinn_spectral::operators::{DomainGrid, End};
use pinn_spectral::{Error, KernelSpec, LinearDiffOp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_problem(g0: f64) -> ProblemData {
    ProblemData::new(|_| 0.0, move |_| g0, LinearDiffOp::partial(1, 0, 1), KernelSpec::cosine(1.0))
}

#[test]
fn green_at_origin_is_near_single_pole() {
    let cfg = ToyConfig::new(1.0, 2.5, 1024.0, 8192.0);
    let g = greens_function_toy(&cfg, 0.0, 0.0).unwrap();
    assert!((g - 0.031242).abs() / 0.031242 <= 0.02, "{g}");
    let g3 = greens_function_toy(&cfg, 4.0, 1.0).unwrap();
    let sp = greens_single_pole(&cfg, 4.0, 1.0);
    assert!((g3 - sp).abs() / sp <= 0.02);
}

#[test]
fn boundary_value_from_green_at_origin() {
    let cfg = ToyConfig::new(1.0, 2.5, 1024.0, 8192.0);
    let p = toy_predict(&cfg, &[0.0]).unwrap();
    let rho = 8192.0 * p.g00;
    assert!((p.f[0] - 2.5 * rho / (1.0 + rho)).abs() < 1e-12);
    assert!((rho - 255.9).abs() / 255.9 <= 0.02, "{rho}");
    assert!((p.f[0] - 2.490).abs() < 1e-3);
}

#[test]
fn grid_solver_matches_analytic_solution() {
    let cfg = ToyConfig::from_data_densities(1.0, 2.5, 1024, 0.125, 1, 1.0 / (64.0 * 1024.0), 512.0);
    let grid = DomainGrid::interval(0.0, 200.0, 2001, &[End::Lo]).unwrap();
    let (eb, ed) = cfg.grid_couplings(200.0);
    let sol = nie_solve_grid(&toy_problem(2.5), &grid, eb, ed).unwrap();
    let xs: Vec<f64> = (0..=60).map(|i| 0.1 * i as f64).collect();
    let exact = toy_predict(&cfg, &xs).unwrap();
    for (i, e) in exact.f.iter().enumerate() {
        assert!((sol.f0[i] - e).abs() <= 1e-4, "x={} {} vs {}", xs[i], sol.f0[i], e);
    }
    assert!(sol.residual_norm < 1e-8);
}

#[test]
fn grid_solution_minimizes_the_action() {
    let grid = DomainGrid::interval(0.0, 8.0, 17, &[End::Lo]).unwrap();
    let problem = ProblemData::new(|x| (0.5 * x[0]).cos(), |_| 1.5, LinearDiffOp::partial(1, 0, 1), KernelSpec::cosine(1.0));
    let f = nie_solve_grid(&problem, &grid, 3.0, 7.0).unwrap().f0;
    let action = EffectiveAction::new(&problem, &grid, 3.0, 7.0).unwrap();
    let s0 = action.value(&f).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let g: Vec<f64> = f.iter().map(|v| v + 1e-2 * rng.gen_range(-1.0..1.0)).collect();
        assert!(action.value(&g).unwrap() > s0);
    }
    let via_sigma = effective_action(&problem, &grid, 0.3, 0.7, 0.1, 0.1, &f).unwrap();
    assert!((via_sigma - s0).abs() <= 1e-12 * s0.abs());
}

#[test]
fn toy_inputs_are_validated() {
    let cfg = ToyConfig::new(1.0, 2.5, 1024.0, 8192.0);
    assert!(matches!(greens_function_toy(&cfg, -1.0, 0.0), Err(Error::Domain(_))));
    assert!(toy_predict(&ToyConfig::new(-1.0, 2.5, 1.0, 1.0), &[0.0]).is_err());
    let action = EffectiveAction::new(&toy_problem(1.0), &DomainGrid::interval(0.0, 4.0, 9, &[End::Lo]).unwrap(), 1.0, 1.0)
        .unwrap();
    assert!(action.value(&[0.0; 3]).is_err());
    assert!(matches!(action.value(&[f64::NAN; 9]), Err(Error::Domain(_))));
}
