//! Linear differential operators, tensor grids, finite differences, and
//! operators acting on kernels.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernels::{fill_matrix, try_fill_matrix, DerivativeMethod, KernelFamily, KernelSpec};
use crate::points::PointSet;

/// Maximum input dimension handled by the allocation-free kernel paths.
pub const MAX_DIM: usize = 8;

pub type CoeffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Coefficient {
    Const(f64),
    Func(CoeffFn),
}

impl Coefficient {
    #[inline]
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Func(f) => f(x),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Coefficient::Const(_))
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(c) => write!(f, "const:{c}"),
            Coefficient::Func(_) => write!(f, "func"),
        }
    }
}

impl PartialEq for Coefficient {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Coefficient::Const(a), Coefficient::Const(b)) => a == b,
            (Coefficient::Func(a), Coefficient::Func(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Serialize for Coefficient {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Coefficient::Const(c) => s.serialize_str(&format!("const:{c:?}")),
            Coefficient::Func(_) => Err(serde::ser::Error::custom("only constant coefficients are serializable")),
        }
    }
}

impl<'de> Deserialize<'de> for Coefficient {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let v = s
            .strip_prefix("const:")
            .ok_or_else(|| D::Error::custom(format!("unsupported coefficient {s:?}, expected \"const:<number>\"")))?;
        let c: f64 = v.trim().parse().map_err(|_| D::Error::custom(format!("bad coefficient value {v:?}")))?;
        if !c.is_finite() {
            return Err(D::Error::custom("coefficient must be finite"));
        }
        Ok(Coefficient::Const(c))
    }
}

/// One term `coeff(x) * d^orders` of a linear operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub orders: Vec<usize>,
    pub coeff: Coefficient,
}

/// `L = sum_t coeff_t(x) d^{orders_t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearDiffOp {
    terms: Vec<Term>,
    dim: usize,
}

impl Serialize for LinearDiffOp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.terms.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearDiffOp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let terms = Vec::<Term>::deserialize(d)?;
        LinearDiffOp::new(terms).map_err(D::Error::custom)
    }
}

impl LinearDiffOp {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let dim = terms
            .first()
            .map(|t| t.orders.len())
            .ok_or_else(|| Error::InvalidInput("operator needs at least one term".into()))?;
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidInput(format!("operator dimension must be in 1..={MAX_DIM}")));
        }
        if terms.iter().any(|t| t.orders.len() != dim) {
            return Err(Error::InvalidInput("operator terms differ in dimension".into()));
        }
        Ok(LinearDiffOp { terms, dim })
    }

    pub fn identity(dim: usize) -> Self {
        Self::monomial(vec![0; dim], 1.0)
    }

    /// `coeff * d^orders`.
    pub fn monomial(orders: Vec<usize>, coeff: f64) -> Self {
        LinearDiffOp::new(vec![Term { orders, coeff: Coefficient::Const(coeff) }]).expect("valid monomial")
    }

    /// `d^k / dx_axis^k` in `dim` dimensions.
    pub fn partial(dim: usize, axis: usize, k: usize) -> Self {
        let mut orders = vec![0; dim];
        orders[axis] = k;
        Self::monomial(orders, 1.0)
    }

    /// `d_t - d_x^2` on inputs ordered `(x, t)`.
    pub fn heat() -> Self {
        LinearDiffOp::new(vec![
            Term { orders: vec![0, 1], coeff: Coefficient::Const(1.0) },
            Term { orders: vec![2, 0], coeff: Coefficient::Const(-1.0) },
        ])
        .expect("valid heat operator")
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest total derivative order.
    pub fn order(&self) -> usize {
        self.terms.iter().map(|t| t.orders.iter().sum::<usize>()).max().unwrap_or(0)
    }

    pub fn is_constant_coefficient(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.is_const())
    }

    pub fn is_identity(&self) -> bool {
        self.terms.len() == 1
            && self.terms[0].orders.iter().all(|&o| o == 0)
            && self.terms[0].coeff == Coefficient::Const(1.0)
    }

    /// Applies `L` to a smooth function by nested central differences.
    pub fn apply_fd<F: Fn(&[f64]) -> f64>(&self, f: F, x: &[f64], h: f64) -> f64 {
        let mut z = x.to_vec();
        let mut total = 0.0;
        for t in &self.terms {
            let mut dirs = Vec::new();
            for (k, &o) in t.orders.iter().enumerate() {
                dirs.extend(std::iter::repeat_n(k, o));
            }
            total += t.coeff.at(x) * nested_fd(&f, &mut z, &dirs, h);
        }
        total
    }
}

fn nested_fd<F: Fn(&[f64]) -> f64>(f: &F, z: &mut [f64], dirs: &[usize], h: f64) -> f64 {
    match dirs.split_first() {
        None => f(z),
        Some((&k, rest)) => {
            let z0 = z[k];
            z[k] = z0 + h;
            let fp = nested_fd(f, z, rest, h);
            z[k] = z0 - h;
            let fm = nested_fd(f, z, rest, h);
            z[k] = z0;
            (fp - fm) / (2.0 * h)
        }
    }
}

/// Uniform axis `lo..=hi` with `n` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Axis { lo, hi, n }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    fn trapezoid(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Lo,
    Hi,
}

/// A face `{x_axis = lo}` or `{x_axis = hi}` of a box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Face {
    pub axis: usize,
    pub end: End,
}

/// Tensor-product grid on a box with trapezoid weights and boundary nodes on
/// selected faces.
#[derive(Clone, Debug)]
pub struct DomainGrid {
    axes: Vec<Axis>,
    faces: Vec<Face>,
    points: PointSet,
    quad_weights: Vec<f64>,
    boundary_index: Vec<usize>,
    boundary_weights: Vec<f64>,
}

impl DomainGrid {
    /// Builds the grid. Bulk nodes are ordered with the first axis slowest.
    /// In one dimension each boundary face is a point mass of weight 1; in
    /// higher dimensions faces carry the trapezoid rule of the remaining axes.
    pub fn new(axes: Vec<Axis>, faces: Vec<Face>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::InvalidInput(format!("grid dimension must be in 1..={MAX_DIM}")));
        }
        for a in &axes {
            if a.n < 2 || !(a.lo.is_finite() && a.hi.is_finite()) || a.hi <= a.lo {
                return Err(Error::InvalidInput(format!("invalid grid axis {a:?}")));
            }
        }
        let d = axes.len();
        if faces.iter().any(|f| f.axis >= d) {
            return Err(Error::InvalidInput("boundary face axis out of range".into()));
        }
        let total: usize = axes.iter().map(|a| a.n).product();
        let rules: Vec<Vec<f64>> = axes.iter().map(Axis::trapezoid).collect();
        let mut coords = Vec::with_capacity(total * d);
        let mut quad_weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let mut w = 1.0;
            for k in 0..d {
                coords.push(axes[k].node(idx[k]));
                w *= rules[k][idx[k]];
            }
            quad_weights.push(w);
            increment(&mut idx, &axes);
        }
        let points = PointSet::new(d, coords)?;

        let mut bw = vec![0.0; total];
        let mut on_boundary = vec![false; total];
        for face in &faces {
            let fixed = match face.end {
                End::Lo => 0,
                End::Hi => axes[face.axis].n - 1,
            };
            let mut idx = vec![0usize; d];
            for flat in 0..total {
                if idx[face.axis] == fixed {
                    let w: f64 = (0..d).filter(|&k| k != face.axis).map(|k| rules[k][idx[k]]).product();
                    bw[flat] += w;
                    on_boundary[flat] = true;
                }
                increment(&mut idx, &axes);
            }
        }
        let boundary_index: Vec<usize> = (0..total).filter(|&i| on_boundary[i]).collect();
        let boundary_weights = boundary_index.iter().map(|&i| bw[i]).collect();
        Ok(DomainGrid { axes, faces, points, quad_weights, boundary_index, boundary_weights })
    }

    /// `[lo, hi]` with `n` nodes.
    pub fn interval(lo: f64, hi: f64, n: usize, faces: &[End]) -> Result<Self> {
        let faces = faces.iter().map(|&end| Face { axis: 0, end }).collect();
        DomainGrid::new(vec![Axis::new(lo, hi, n)], faces)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// Trapezoid weights summing to `|Omega|`.
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    /// Weights of the uniform probability measure on the bulk.
    pub fn measure_weights(&self) -> Vec<f64> {
        let v = self.volume();
        self.quad_weights.iter().map(|w| w / v).collect()
    }

    /// Bulk indices of the boundary nodes.
    pub fn boundary_index(&self) -> &[usize] {
        &self.boundary_index
    }

    pub fn boundary_points(&self) -> PointSet {
        let d = self.dim();
        let mut coords = Vec::with_capacity(self.boundary_index.len() * d);
        for &i in &self.boundary_index {
            coords.extend_from_slice(self.points.get(i));
        }
        PointSet::new(d, coords).expect("boundary points are finite")
    }

    /// Boundary quadrature weights summing to `|dOmega|`.
    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    pub fn boundary_size(&self) -> f64 {
        self.boundary_weights.iter().sum()
    }

    /// Weights of the uniform probability measure on the boundary.
    pub fn boundary_measure_weights(&self) -> Vec<f64> {
        let s = self.boundary_size();
        self.boundary_weights.iter().map(|w| w / s).collect()
    }

    pub fn eval<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        self.points.iter().map(f).collect()
    }

    /// Bulk-measure inner product.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let v = self.volume();
        a.iter().zip(b).zip(&self.quad_weights).map(|((x, y), w)| x * y * w).sum::<f64>() / v
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.axes).all(|(v, a)| *v >= a.lo - 1e-12 && *v <= a.hi + 1e-12)
    }
}

fn increment(idx: &mut [usize], axes: &[Axis]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < axes[k].n {
            return;
        }
        idx[k] = 0;
    }
}

/// Finite-difference weights for derivatives `0..=m` at `z` on nodes `x`.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

/// Stencil `(index, weight)` for the `m`-th derivative at node `i` of `axis`.
fn stencil(axis: &Axis, m: usize, accuracy: usize, i: usize) -> Result<Vec<(usize, f64)>> {
    if m == 0 {
        return Ok(vec![(i, 1.0)]);
    }
    let n = axis.n;
    let central = 2 * m.div_ceil(2) - 1 + accuracy;
    let r = central / 2;
    let (start, len) = if i >= r && i + r < n {
        (i - r, central)
    } else {
        let len = m + accuracy;
        if n < len {
            return Err(Error::GridTooSmall { points: n, required: len });
        }
        (if i < r { 0 } else { n - len }, len)
    };
    if n < central.min(m + accuracy) {
        return Err(Error::GridTooSmall { points: n, required: central });
    }
    let h = axis.spacing();
    // offsets in units of h keep the weights well scaled
    let nodes: Vec<f64> = (start..start + len).map(|j| j as f64 - i as f64).collect();
    let w = fornberg_weights(0.0, &nodes, m);
    let scale = h.powi(m as i32);
    Ok((0..len).map(|k| (start + k, w[k][m] / scale)).collect())
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k] * x[self.col_idx[k]]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.vals[k];
            }
        }
        m
    }

    /// `diag(s) S`.
    pub fn scale_rows(&self, s: &[f64]) -> SparseMatrix {
        let mut out = self.clone();
        for (r, sr) in s.iter().enumerate().take(self.nrows) {
            for v in &mut out.vals[self.row_ptr[r]..self.row_ptr[r + 1]] {
                *v *= sr;
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.vals.len()];
        let mut vals = vec![0.0; self.vals.len()];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                col_idx[next[c]] = r;
                vals[next[c]] = self.vals[k];
                next[c] += 1;
            }
        }
        SparseMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, vals }
    }

    /// `S B` for dense `B`.
    pub fn mul_dense(&self, b: &Mat<f64>) -> Mat<f64> {
        fill_matrix(self.nrows, b.ncols(), |r, j| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k] * b[(self.col_idx[k], j)]).sum()
        })
    }
}

/// Finite-difference matrix of `op` on `grid` with the given accuracy order.
pub fn diff_matrix(op: &LinearDiffOp, grid: &DomainGrid, accuracy: usize) -> Result<SparseMatrix> {
    if op.dim() != grid.dim() {
        return Err(Error::InvalidInput("operator and grid differ in dimension".into()));
    }
    if accuracy == 0 || accuracy % 2 == 1 {
        return Err(Error::InvalidInput("finite-difference accuracy must be a positive even number".into()));
    }
    let d = grid.dim();
    let axes = grid.axes();
    let n = grid.len();
    let strides: Vec<usize> = (0..d).map(|k| axes[k + 1..].iter().map(|a| a.n).product()).collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let mut idx = vec![0usize; d];
    let mut row: Vec<(usize, f64)> = Vec::new();
    for flat in 0..n {
        row.clear();
        let x = grid.points().get(flat);
        for t in op.terms() {
            let c = t.coeff.at(x);
            if c == 0.0 {
                continue;
            }
            let mut acc: Vec<(usize, f64)> = vec![(0, c)];
            for k in 0..d {
                let st = stencil(&axes[k], t.orders[k], accuracy, idx[k])?;
                let mut next = Vec::with_capacity(acc.len() * st.len());
                for &(base, w) in &acc {
                    for &(j, v) in &st {
                        next.push((base + j * strides[k], w * v));
                    }
                }
                acc = next;
            }
            row.extend(acc);
        }
        row.sort_by_key(|e| e.0);
        let mut last = usize::MAX;
        for &(j, w) in row.iter() {
            if j == last {
                *vals.last_mut().expect("non-empty") += w;
            } else {
                col_idx.push(j);
                vals.push(w);
                last = j;
            }
        }
        row_ptr.push(col_idx.len());
        increment(&mut idx, axes);
    }
    Ok(SparseMatrix { nrows: n, ncols: n, row_ptr, col_idx, vals })
}

pub const DEFAULT_FD_ACCURACY: usize = 4;

/// `L[f]` on the grid nodes by finite differences of the default accuracy.
pub fn apply_to_function(op: &LinearDiffOp, f_vals: &[f64], grid: &DomainGrid) -> Result<Vec<f64>> {
    apply_to_function_with(op, f_vals, grid, DEFAULT_FD_ACCURACY)
}

pub fn apply_to_function_with(
    op: &LinearDiffOp,
    f_vals: &[f64],
    grid: &DomainGrid,
    accuracy: usize,
) -> Result<Vec<f64>> {
    if f_vals.len() != grid.len() {
        return Err(Error::InvalidInput("grid function has the wrong length".into()));
    }
    Ok(diff_matrix(op, grid, accuracy)?.matvec(f_vals))
}

/// Which kernel argument an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSide {
    Left,
    Right,
    Both,
}

/// `[L K](x, y)`, `[K L^dagger](x, y)` or `[L K L^dagger](x, y)`.
pub fn apply_to_kernel(
    op: &LinearDiffOp,
    spec: &KernelSpec,
    side: KernelSide,
    x: &[f64],
    y: &[f64],
    method: DerivativeMethod,
) -> Result<f64> {
    if x.len() != op.dim() || y.len() != op.dim() {
        return Err(Error::InvalidInput("kernel arguments do not match the operator dimension".into()));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::Domain(format!("non-finite kernel argument {x:?}, {y:?}")));
    }
    let (left, right) = match side {
        KernelSide::Left => (Some(op), None),
        KernelSide::Right => (None, Some(op)),
        KernelSide::Both => (Some(op), Some(op)),
    };
    op_kernel(spec, left, x, right, y, method)
}

const ZEROS: [usize; MAX_DIM] = [0; MAX_DIM];

#[inline]
pub(crate) fn op_kernel(
    spec: &KernelSpec,
    left: Option<&LinearDiffOp>,
    x: &[f64],
    right: Option<&LinearDiffOp>,
    y: &[f64],
    method: DerivativeMethod,
) -> Result<f64> {
    let d = x.len();
    let zero = &ZEROS[..d];
    let one = [Term { orders: Vec::new(), coeff: Coefficient::Const(1.0) }];
    let lt: &[Term] = left.map(|o| o.terms()).unwrap_or(&one);
    let rt: &[Term] = right.map(|o| o.terms()).unwrap_or(&one);
    let mut total = 0.0;
    for a in lt {
        let ca = a.coeff.at(x);
        if ca == 0.0 {
            continue;
        }
        let alpha = if a.orders.is_empty() { zero } else { &a.orders[..] };
        for b in rt {
            let cb = b.coeff.at(y);
            if cb == 0.0 {
                continue;
            }
            let beta = if b.orders.is_empty() { zero } else { &b.orders[..] };
            total += ca * cb * spec.derivative(x, alpha, y, beta, method)?;
        }
    }
    Ok(total)
}

/// Dense block `[L_left K L_right^dagger](r_i, c_j)`; `None` means identity.
pub fn kernel_block(
    spec: &KernelSpec,
    rows: &PointSet,
    left: Option<&LinearDiffOp>,
    cols: &PointSet,
    right: Option<&LinearDiffOp>,
    method: DerivativeMethod,
) -> Result<Mat<f64>> {
    check_block_args(spec, rows, left, cols, right)?;
    if left.is_none() && right.is_none() && method == DerivativeMethod::Auto {
        return spec.gram(rows, cols);
    }
    try_fill_matrix(rows.len(), cols.len(), |i, j| op_kernel(spec, left, rows.get(i), right, cols.get(j), method))
}

/// Symmetric block `[L K L^dagger](p_i, p_j)`, computed on one triangle and
/// mirrored so the result is exactly symmetric.
pub fn kernel_block_symmetric(
    spec: &KernelSpec,
    pts: &PointSet,
    op: Option<&LinearDiffOp>,
    method: DerivativeMethod,
) -> Result<Mat<f64>> {
    check_block_args(spec, pts, op, pts, op)?;
    let n = pts.len();
    let mut m = Mat::<f64>::zeros(n, n);
    m.as_mut()
        .par_col_iter_mut()
        .enumerate()
        .try_for_each(|(j, mut col)| -> Result<()> {
            for i in 0..=j {
                col[i] = op_kernel(spec, op, pts.get(i), op, pts.get(j), method)?;
            }
            Ok(())
        })?;
    for j in 0..n {
        for i in 0..j {
            m[(j, i)] = m[(i, j)];
        }
    }
    Ok(m)
}

fn check_block_args(
    spec: &KernelSpec,
    rows: &PointSet,
    left: Option<&LinearDiffOp>,
    cols: &PointSet,
    right: Option<&LinearDiffOp>,
) -> Result<()> {
    spec.validate()?;
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidInput("kernel block needs non-empty point sets".into()));
    }
    if rows.dim() != cols.dim() || rows.dim() > MAX_DIM {
        return Err(Error::InvalidInput("kernel block point sets differ in dimension".into()));
    }
    for op in [left, right].into_iter().flatten() {
        if op.dim() != rows.dim() {
            return Err(Error::InvalidInput("operator and points differ in dimension".into()));
        }
    }
    if !rows.all_finite() || !cols.all_finite() {
        return Err(Error::Domain("non-finite point in kernel block".into()));
    }
    if spec.family == KernelFamily::ErfArcsine {
        let order = left.map_or(0, LinearDiffOp::order) + right.map_or(0, LinearDiffOp::order);
        if order > crate::dual::MAX_DEPTH.max(crate::kernels::MAX_FD_ORDER) {
            return Err(Error::DerivativeOrder { family: spec.family.name(), order });
        }
    }
    Ok(())
}

/// Parallel map over grid nodes.
pub fn par_eval<F: Fn(&[f64]) -> f64 + Sync>(pts: &PointSet, f: F) -> Vec<f64> {
    (0..pts.len()).into_par_iter().map(|i| f(pts.get(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn fornberg_reproduces_classic_stencils() {
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[0][1] + 0.5).abs() < 1e-15 && (w[2][1] - 0.5).abs() < 1e-15);
        assert!((w[0][2] - 1.0).abs() < 1e-15 && (w[1][2] + 2.0).abs() < 1e-15);
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (k, e) in expect.iter().enumerate() {
            assert!((w[k][1] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn first_derivative_of_linear_is_exact() {
        let grid = DomainGrid::interval(0.0, 1.0, 101, &[]).unwrap();
        let f = grid.eval(|x| x[0]);
        let df = apply_to_function(&LinearDiffOp::partial(1, 0, 1), &f, &grid).unwrap();
        assert!(df.iter().all(|v| (v - 1.0).abs() <= 1e-10));
    }

    #[test]
    fn second_derivative_of_sine() {
        let grid = DomainGrid::interval(0.0, PI, 201, &[]).unwrap();
        let f = grid.eval(|x| x[0].sin());
        let d2 = apply_to_function(&LinearDiffOp::partial(1, 0, 2), &f, &grid).unwrap();
        let err = d2.iter().zip(grid.points().iter()).map(|(v, x)| (v + x[0].sin()).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "err {err}");
    }

    #[test]
    fn too_small_grid_is_rejected() {
        let grid = DomainGrid::interval(0.0, 1.0, 3, &[]).unwrap();
        let r = apply_to_function(&LinearDiffOp::partial(1, 0, 2), &[0.0; 3], &grid);
        assert!(matches!(r, Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn bulk_measure_integrates_one() {
        let grid = DomainGrid::new(
            vec![Axis::new(-1.0, 1.0, 17), Axis::new(0.0, 1.0, 9)],
            vec![Face { axis: 0, end: End::Lo }, Face { axis: 0, end: End::Hi }, Face { axis: 1, end: End::Lo }],
        )
        .unwrap();
        let s: f64 = grid.measure_weights().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
        assert!((grid.boundary_size() - 4.0).abs() <= 1e-12);
        for p in grid.boundary_points().iter() {
            assert!(p[0] == -1.0 || p[0] == 1.0 || p[1] == 0.0);
        }
    }

    #[test]
    fn point_boundary_in_one_dimension() {
        let grid = DomainGrid::interval(0.0, 10.0, 11, &[End::Lo]).unwrap();
        assert_eq!(grid.boundary_index(), &[0]);
        assert_eq!(grid.boundary_weights(), &[1.0]);
    }

    #[test]
    fn operator_json_schema() {
        let op: LinearDiffOp = serde_json::from_str(r#"[{"orders":[1],"coeff":"const:1.0"}]"#).unwrap();
        assert_eq!(op, LinearDiffOp::partial(1, 0, 1));
        assert_eq!(op.order(), 1);
        let text = serde_json::to_string(&LinearDiffOp::heat()).unwrap();
        let back: LinearDiffOp = serde_json::from_str(&text).unwrap();
        assert_eq!(back, LinearDiffOp::heat());
        assert!(serde_json::from_str::<LinearDiffOp>(r#"[{"orders":[1],"coeff":"sin"}]"#).is_err());
        assert!(serde_json::from_str::<LinearDiffOp>(r#"[]"#).is_err());
        let f: CoeffFn = Arc::new(|x: &[f64]| x[0]);
        let op = LinearDiffOp::new(vec![Term { orders: vec![1], coeff: Coefficient::Func(f) }]).unwrap();
        assert!(serde_json::to_string(&op).is_err());
    }

    #[test]
    fn derivative_of_cosine_kernel_at_origin_vanishes() {
        let spec = KernelSpec::cosine(1.0);
        let dx = LinearDiffOp::partial(1, 0, 1);
        let v = apply_to_kernel(&dx, &spec, KernelSide::Left, &[0.0], &[0.0], DerivativeMethod::Auto).unwrap();
        assert_eq!(v, 0.0);
        let id = LinearDiffOp::identity(1);
        let v = apply_to_kernel(&id, &spec, KernelSide::Both, &[0.3], &[0.9], DerivativeMethod::Auto).unwrap();
        assert_eq!(v, spec.eval(&[0.3], &[0.9]).unwrap());
    }

    #[test]
    fn variable_coefficients_enter_pointwise() {
        let f: CoeffFn = Arc::new(|x: &[f64]| 1.0 + x[0] * x[0]);
        let op = LinearDiffOp::new(vec![Term { orders: vec![1], coeff: Coefficient::Func(f) }]).unwrap();
        let grid = DomainGrid::interval(0.0, 1.0, 41, &[]).unwrap();
        let vals = grid.eval(|x| x[0] * x[0]);
        let out = apply_to_function(&op, &vals, &grid).unwrap();
        for (o, p) in out.iter().zip(grid.points().iter()) {
            assert!((o - (1.0 + p[0] * p[0]) * 2.0 * p[0]).abs() < 1e-10);
        }
    }
}
