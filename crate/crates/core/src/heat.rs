//! Heat equation `u_t - u_xx = phi` on `[-1, 1] x [0, 1]` with the
//! manufactured solution `u = exp(-t - x^2 / 2a) sin(pi x)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gpr::{Geometry, ProblemData};
use crate::kernels::KernelSpec;
use crate::operators::{apply_to_function_with, Axis, DomainGrid, End, Face, LinearDiffOp};

/// `sin(pi x)`, exactly zero at integers.
pub fn sin_pi(x: f64) -> f64 {
    if x.fract() == 0.0 {
        0.0
    } else {
        (PI * x).sin()
    }
}

pub fn heat_exact(a: f64, x: f64, t: f64) -> f64 {
    (-t - x * x / (2.0 * a)).exp() * sin_pi(x)
}

/// `u_t - u_xx` of [`heat_exact`].
pub fn heat_source(a: f64, x: f64, t: f64) -> f64 {
    let e = (-t - x * x / (2.0 * a)).exp();
    e / (a * a)
        * (2.0 * a * PI * x * (PI * x).cos() + (a + a * a * (PI * PI - 1.0) - x * x) * sin_pi(x))
}

/// Heat problem with inputs `(x, t)`; boundary data is the exact solution.
pub fn heat_problem(a: f64, kernel: KernelSpec) -> Result<ProblemData> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidInput("heat width a must be positive".into()));
    }
    Ok(ProblemData::new(
        move |p| heat_source(a, p[0], p[1]),
        move |p| heat_exact(a, p[0], p[1]),
        LinearDiffOp::heat(),
        kernel,
    ))
}

pub fn heat_geometry() -> Geometry {
    Geometry::heat_slab()
}

/// `nx x nt` grid on the slab with boundary `{x = +-1} u {t = 0}`.
pub fn heat_grid(nx: usize, nt: usize) -> Result<DomainGrid> {
    DomainGrid::new(
        vec![Axis::new(-1.0, 1.0, nx), Axis::new(0.0, 1.0, nt)],
        vec![
            Face { axis: 0, end: End::Lo },
            Face { axis: 0, end: End::Hi },
            Face { axis: 1, end: End::Lo },
        ],
    )
}

/// Finite-difference residual of the exact solution.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct FdResidual {
    pub max_abs: f64,
    pub max_source: f64,
}

impl FdResidual {
    pub fn relative(&self) -> f64 {
        self.max_abs / self.max_source
    }
}

/// `max |D u - phi|` over the grid, `D` the finite-difference heat operator.
pub fn fd_residual(a: f64, nx: usize, nt: usize, accuracy: usize) -> Result<FdResidual> {
    let grid = heat_grid(nx, nt)?;
    let u = grid.eval(|p| heat_exact(a, p[0], p[1]));
    let lu = apply_to_function_with(&LinearDiffOp::heat(), &u, &grid, accuracy)?;
    let phi = grid.eval(|p| heat_source(a, p[0], p[1]));
    let max_abs = lu.iter().zip(&phi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let max_source = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(FdResidual { max_abs, max_source })
}
