use pinn_spectral::kernels::{DerivativeMethod, KernelSpec};
use pinn_spectral::operators::{
    apply_to_function, apply_to_function_with, apply_to_kernel, Axis, DomainGrid, End, Face, KernelSide, LinearDiffOp,
};
use proptest::prelude::*;

fn slab(nx: usize, nt: usize) -> DomainGrid {
    DomainGrid::new(
        vec![Axis::new(-1.0, 1.0, nx), Axis::new(0.0, 1.0, nt)],
        vec![Face { axis: 0, end: End::Lo }, Face { axis: 0, end: End::Hi }, Face { axis: 1, end: End::Lo }],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grid_application_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, p in 0.5f64..3.0, q in 0.5f64..3.0) {
        let grid = slab(17, 9);
        let op = LinearDiffOp::heat();
        let f = grid.eval(|x| (p * x[0]).sin() * (q * x[1]).cos());
        let g = grid.eval(|x| (x[0] * x[1] * q).exp());
        let combo: Vec<f64> = f.iter().zip(&g).map(|(u, v)| a * u + b * v).collect();
        let lf = apply_to_function(&op, &f, &grid).unwrap();
        let lg = apply_to_function(&op, &g, &grid).unwrap();
        let lc = apply_to_function(&op, &combo, &grid).unwrap();
        for i in 0..lc.len() {
            let expect = a * lf[i] + b * lg[i];
            prop_assert!((lc[i] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }
}

#[test]
fn low_degree_polynomials_are_differentiated_exactly() {
    let grid = slab(11, 7);
    let op = LinearDiffOp::heat();
    let u = grid.eval(|p| p[0].powi(4) - 2.0 * p[0] * p[1].powi(3) + p[1].powi(2));
    let lu = apply_to_function_with(&op, &u, &grid, 4).unwrap();
    for (p, v) in grid.points().iter().zip(&lu) {
        let (x, t) = (p[0], p[1]);
        let expect = (-6.0 * x * t * t + 2.0 * t) - 12.0 * x * x;
        assert!((v - expect).abs() < 1e-9, "at {p:?}: {v} vs {expect}");
    }
}

#[test]
fn kernel_application_matches_hand_formula() {
    let spec = KernelSpec::squared_exponential(0.7);
    let op = LinearDiffOp::partial(1, 0, 1);
    let (x, y) = (0.4, -0.3);
    let k = spec.eval(&[x], &[y]).unwrap();
    let s = spec.sigma_w2;
    let left = apply_to_kernel(&op, &spec, KernelSide::Left, &[x], &[y], DerivativeMethod::Auto).unwrap();
    let right = apply_to_kernel(&op, &spec, KernelSide::Right, &[x], &[y], DerivativeMethod::Auto).unwrap();
    let both = apply_to_kernel(&op, &spec, KernelSide::Both, &[x], &[y], DerivativeMethod::Auto).unwrap();
    assert!((left + s * (x - y) * k).abs() < 1e-14);
    assert!((right - s * (x - y) * k).abs() < 1e-14);
    assert!((both - (s - s * s * (x - y) * (x - y)) * k).abs() < 1e-14);
}

#[test]
fn identity_operator_leaves_kernel_unchanged() {
    let spec = KernelSpec::erf(1.0);
    let id = LinearDiffOp::identity(2);
    let v = apply_to_kernel(&id, &spec, KernelSide::Both, &[0.1, 0.2], &[0.5, -0.4], DerivativeMethod::Auto).unwrap();
    assert_eq!(v, spec.eval(&[0.1, 0.2], &[0.5, -0.4]).unwrap());
}

#[test]
fn operator_json_matches_documented_schema() {
    let op: LinearDiffOp =
        serde_json::from_str(r#"[{"orders":[0,1],"coeff":"const:1.0"},{"orders":[2,0],"coeff":"const:-1.0"}]"#).unwrap();
    assert_eq!(op.order(), 2);
    let text = serde_json::to_string(&op).unwrap();
    let back: LinearDiffOp = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
    assert!(serde_json::from_str::<LinearDiffOp>(r#"[{"orders":[1],"coeff":"sin:1"}]"#).is_err());
}

#[test]
fn one_dimensional_boundary_is_a_point_mass() {
    let grid = DomainGrid::interval(0.0, 2.0, 21, &[End::Lo, End::Hi]).unwrap();
    assert_eq!(grid.boundary_index(), &[0, 20]);
    assert_eq!(grid.boundary_weights(), &[1.0, 1.0]);
    assert_eq!(grid.boundary_measure_weights(), vec![0.5, 0.5]);
    let q: f64 = grid.quad_weights().iter().sum();
    let w: f64 = grid.measure_weights().iter().sum();
    assert!((q - 2.0).abs() < 1e-14 && (w - 1.0).abs() < 1e-14);
}
