//! Python module `pinn_spectral`.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pinn_spectral::experiments::{
    parse_config, run_heat, run_kernel_check, run_spectral, run_toy, RunReport,
};
use pinn_spectral::gpr::{CollocationSet, GprModel, ProblemData};
use pinn_spectral::heat;
use pinn_spectral::kernels::monte_carlo_kernel;
use pinn_spectral::nie::{toy_predict, ToyConfig};
use pinn_spectral::spectral::{cumulative_curve, eig_kernel, eig_lkhatl};
use pinn_spectral::{DerivativeMethod, Error, KernelFamily, KernelSpec, LinearDiffOp, PointSet};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_family(name: &str) -> PyResult<KernelFamily> {
    Ok(match name {
        "CosineFeature" | "cosine" => KernelFamily::CosineFeature,
        "SineFeature" | "sine" => KernelFamily::SineFeature,
        "SquaredExponential" | "squared_exponential" => KernelFamily::SquaredExponential,
        "ErfArcsine" | "erf" => KernelFamily::ErfArcsine,
        _ => return Err(PyValueError::new_err(format!("unknown kernel family {name:?}"))),
    })
}

fn points(rows: &[Vec<f64>]) -> PyResult<PointSet> {
    let dim = rows.first().map_or(1, Vec::len);
    PointSet::from_rows(dim, rows).map_err(py_err)
}

/// NNGP kernel of a one-hidden-layer network.
#[pyclass(name = "Kernel", module = "pinn_spectral", skip_from_py_object)]
#[derive(Clone)]
struct PyKernel {
    spec: KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (family, l, sigma_a2=None, sigma_w2=None, bias_var=None))]
    fn new(family: &str, l: f64, sigma_a2: Option<f64>, sigma_w2: Option<f64>, bias_var: Option<f64>) -> PyResult<Self> {
        let mut spec = KernelSpec::with_defaults(parse_family(family)?, l);
        if let Some(v) = sigma_a2 {
            spec.sigma_a2 = v;
        }
        if let Some(v) = sigma_w2 {
            spec.sigma_w2 = v;
        }
        if let Some(v) = bias_var {
            spec.bias_var = v;
        }
        spec.validate().map_err(py_err)?;
        Ok(PyKernel { spec })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyKernel { spec: parse_config(text).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.spec).expect("kernel spec serializes")
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.spec.family.name()
    }

    #[getter]
    fn l(&self) -> f64 {
        self.spec.l
    }

    #[getter]
    fn sigma_a2(&self) -> f64 {
        self.spec.sigma_a2
    }

    #[getter]
    fn sigma_w2(&self) -> f64 {
        self.spec.sigma_w2
    }

    #[getter]
    fn bias_var(&self) -> f64 {
        self.spec.bias_var
    }

    fn scaled_init(&self, alpha: f64) -> PyResult<Self> {
        let spec = self.spec.scaled_init(alpha);
        spec.validate().map_err(py_err)?;
        Ok(PyKernel { spec })
    }

    fn __call__(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.spec.eval(&x, &y).map_err(py_err)
    }

    /// Gram matrix as a list of rows.
    fn gram(&self, rows: Vec<Vec<f64>>, cols: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let g = self.spec.gram(&points(&rows)?, &points(&cols)?).map_err(py_err)?;
        Ok((0..g.nrows()).map(|i| (0..g.ncols()).map(|j| g[(i, j)]).collect()).collect())
    }

    #[pyo3(signature = (x, alpha, y, beta, finite_difference=false))]
    fn derivative(&self, x: Vec<f64>, alpha: Vec<usize>, y: Vec<f64>, beta: Vec<usize>, finite_difference: bool) -> PyResult<f64> {
        let method = if finite_difference { DerivativeMethod::FiniteDifference } else { DerivativeMethod::Auto };
        self.spec.derivative(&x, &alpha, &y, &beta, method).map_err(py_err)
    }

    /// `(estimate, std_error)` from randomly initialized networks.
    #[pyo3(signature = (x, y, width=100, n_nets=100, seed=0))]
    fn monte_carlo(&self, x: Vec<f64>, y: Vec<f64>, width: usize, n_nets: usize, seed: u64) -> PyResult<(f64, f64)> {
        let mc = monte_carlo_kernel(&self.spec, &x, &y, width, n_nets, seed).map_err(py_err)?;
        Ok((mc.estimate, mc.std_error))
    }

    fn __repr__(&self) -> String {
        format!("Kernel({})", self.to_json())
    }
}

/// Linear differential operator.
#[pyclass(name = "LinearDiffOp", module = "pinn_spectral", skip_from_py_object)]
#[derive(Clone)]
struct PyOp {
    op: LinearDiffOp,
}

#[pymethods]
impl PyOp {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyOp { op: parse_config(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn heat() -> Self {
        PyOp { op: LinearDiffOp::heat() }
    }

    #[staticmethod]
    fn partial(dim: usize, axis: usize, order: usize) -> Self {
        PyOp { op: LinearDiffOp::partial(dim, axis, order) }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.op).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn order(&self) -> usize {
        self.op.order()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply_to_kernel(&self, kernel: &PyKernel, x: Vec<f64>, y: Vec<f64>, side: &str) -> PyResult<f64> {
        use pinn_spectral::operators::{apply_to_kernel, KernelSide};
        let side = match side {
            "left" => KernelSide::Left,
            "right" => KernelSide::Right,
            "both" => KernelSide::Both,
            _ => return Err(PyValueError::new_err("side must be 'left', 'right' or 'both'")),
        };
        apply_to_kernel(&self.op, &kernel.spec, side, &x, &y, DerivativeMethod::Auto).map_err(py_err)
    }
}

/// Analytic neurally-informed solution of the half-line toy problem.
#[pyfunction]
#[pyo3(signature = (l, g0, eta_bulk, eta_boundary, x_star))]
fn toy_nie(l: f64, g0: f64, eta_bulk: f64, eta_boundary: f64, x_star: Vec<f64>) -> PyResult<(Vec<f64>, f64, f64)> {
    let p = toy_predict(&ToyConfig::new(l, g0, eta_bulk, eta_boundary), &x_star).map_err(py_err)?;
    Ok((p.f, p.delta, p.g00))
}

/// GPR posterior mean for `d_x f = 0`, `f(0) = g0` with the cosine kernel.
#[pyfunction]
#[pyo3(signature = (l, g0, bulk, boundary, sigma2_bulk, sigma2_boundary, x_star))]
fn toy_gpr(
    l: f64,
    g0: f64,
    bulk: Vec<f64>,
    boundary: Vec<f64>,
    sigma2_bulk: f64,
    sigma2_boundary: f64,
    x_star: Vec<f64>,
) -> PyResult<Vec<f64>> {
    let problem = ProblemData::new(|_| 0.0, move |_| g0, LinearDiffOp::partial(1, 0, 1), KernelSpec::cosine(l));
    let colloc = CollocationSet::new(
        PointSet::from_scalars(&bulk),
        PointSet::from_scalars(&boundary),
        sigma2_bulk,
        sigma2_boundary,
    )
    .map_err(py_err)?;
    GprModel::fit(&problem, &colloc).and_then(|m| m.predict(&PointSet::from_scalars(&x_star))).map_err(py_err)
}

#[pyfunction]
fn heat_exact(a: f64, x: f64, t: f64) -> f64 {
    heat::heat_exact(a, x, t)
}

#[pyfunction]
fn heat_source(a: f64, x: f64, t: f64) -> f64 {
    heat::heat_source(a, x, t)
}

/// `(max_abs, max_source)` of the finite-difference residual of the exact heat solution.
#[pyfunction]
#[pyo3(signature = (a, nx, nt, accuracy=4))]
fn heat_fd_residual(a: f64, nx: usize, nt: usize, accuracy: usize) -> PyResult<(f64, f64)> {
    let r = heat::fd_residual(a, nx, nt, accuracy).map_err(py_err)?;
    Ok((r.max_abs, r.max_source))
}

/// Eigenvalues of the kernel on the heat grid and the cumulative curve of `u`.
#[pyfunction]
fn heat_kernel_spectrum(kernel: &PyKernel, a: f64, nx: usize, nt: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let grid = heat::heat_grid(nx, nt).map_err(py_err)?;
    let d = eig_kernel(&kernel.spec, &grid).map_err(py_err)?;
    let u = grid.eval(|p| heat::heat_exact(a, p[0], p[1]));
    let curve = cumulative_curve(&d, &u).map_err(py_err)?;
    Ok((d.eigvals, curve))
}

/// Eigenvalues of the boundary-corrected operator kernel on the heat grid.
#[pyfunction]
fn heat_operator_spectrum(kernel: &PyKernel, nx: usize, nt: usize, eta_boundary: f64) -> PyResult<Vec<f64>> {
    let grid = heat::heat_grid(nx, nt).map_err(py_err)?;
    let d = eig_lkhatl(&LinearDiffOp::heat(), &kernel.spec, &grid, eta_boundary).map_err(py_err)?;
    Ok(d.eigvals)
}

/// Runs an experiment and returns its summary as JSON text.
#[pyfunction]
fn run_experiment(name: &str, config_json: &str, out_dir: &str) -> PyResult<String> {
    let out = Path::new(out_dir);
    let report: RunReport = match name {
        "toy" => run_toy(&parse_config(config_json).map_err(py_err)?, out),
        "heat" => run_heat(&parse_config(config_json).map_err(py_err)?, out),
        "spectral" => run_spectral(&parse_config(config_json).map_err(py_err)?, out),
        "kernel-check" => run_kernel_check(&parse_config(config_json).map_err(py_err)?, out),
        _ => return Err(PyValueError::new_err(format!("unknown experiment {name:?}"))),
    }
    .map_err(py_err)?;
    Ok(report.summary.to_string())
}

#[pymodule]
#[pyo3(name = "pinn_spectral")]
fn pinn_spectral_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", pinn_spectral::VERSION)?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyOp>()?;
    m.add_function(wrap_pyfunction!(toy_nie, m)?)?;
    m.add_function(wrap_pyfunction!(toy_gpr, m)?)?;
    m.add_function(wrap_pyfunction!(heat_exact, m)?)?;
    m.add_function(wrap_pyfunction!(heat_source, m)?)?;
    m.add_function(wrap_pyfunction!(heat_fd_residual, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(heat_operator_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
