//! Periodic cell-centered grids and the staggered finite-difference
//! operators, inner products, and norms built on top of them.
//!
//! Scalar unknowns live at cell centers; the average `A` and difference `D`
//! of a cell field live at face points staggered by `h/2` along one axis,
//! and the conjugate operators `a`, `d` map face data back to cell centers.
//! Everything wraps periodically, so a face array has exactly the same
//! cardinality as the cell array it was derived from.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::util::CompensatedSum;

pub const MAX_DIM: usize = 3;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("need at least 2 cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("axis length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("malformed field dump: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coordinate axis of a tensor-product grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Uniform periodic tensor-product grid with cell-centered unknowns.
///
/// All axes share the cell count `n` and the spacing `h = length / n`.
/// Cell `(i, j, k)` is centered at `origin + (i + 1/2) h` per axis and the
/// flat storage order is row-major with `i` fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    h: f64,
    origin: [f64; MAX_DIM],
    length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, origin: [f64; MAX_DIM], length: f64) -> Result<Self, GridError> {
        if dim != 2 && dim != 3 {
            return Err(GridError::BadDimension(dim));
        }
        if n < 2 {
            return Err(GridError::TooFewCells(n));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(GridError::BadLength(length));
        }
        let mut origin = origin;
        for o in origin.iter_mut().skip(dim) {
            *o = 0.0;
        }
        Ok(GridSpec {
            dim,
            n,
            h: length / n as f64,
            origin,
            length,
        })
    }

    /// Unit square/cube `(0, 1)^dim`.
    pub fn unit(dim: usize, n: usize) -> Result<Self, GridError> {
        GridSpec::new(dim, n, [0.0; MAX_DIM], 1.0)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    #[inline]
    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    /// Mesh spacing `h`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn origin(&self) -> [f64; MAX_DIM] {
        self.origin
    }

    #[inline]
    pub fn axis_length(&self) -> f64 {
        self.length
    }

    /// Total number of cells, `n^dim`.
    #[inline]
    pub fn num_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Measure of one cell, `h^dim`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Measure of the whole domain.
    #[inline]
    pub fn domain_volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    pub fn axes(&self) -> &'static [Axis] {
        &Axis::ALL[..self.dim]
    }

    /// Flat-index stride of one step along `axis`.
    #[inline]
    pub fn stride(&self, axis: Axis) -> usize {
        self.n.pow(axis.index() as u32)
    }

    /// Physical coordinates of the center of the cell with flat index `c`.
    pub fn cell_center(&self, c: usize) -> [f64; MAX_DIM] {
        let mut coords = [0.0; MAX_DIM];
        let mut rest = c;
        for ax in 0..self.dim {
            let i = rest % self.n;
            rest /= self.n;
            coords[ax] = self.origin[ax] + (i as f64 + 0.5) * self.h;
        }
        coords
    }
}

/// Visits every grid line parallel to an axis: calls `f(base)` once per line,
/// where the line's cells are `base + k*stride` for `k = 0..n`.
#[inline]
pub(crate) fn for_each_line(n: usize, stride: usize, total: usize, mut f: impl FnMut(usize)) {
    let block = stride * n;
    let blocks = total / block;
    for b in 0..blocks {
        let b0 = b * block;
        for off in 0..stride {
            f(b0 + off);
        }
    }
}

/// Scalar grid function stored at cell centers with periodic indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: GridSpec) -> Self {
        CellField {
            grid,
            values: vec![0.0; grid.num_cells()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        CellField {
            grid,
            values: vec![c; grid.num_cells()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.num_cells(), "value count does not match grid");
        CellField { grid, values }
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.num_cells())
            .map(|c| {
                let x = grid.cell_center(c);
                f(&x[..grid.dim()])
            })
            .collect();
        CellField { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mean(&self) -> f64 {
        let mut s = CompensatedSum::new();
        for &v in &self.values {
            s.add(v);
        }
        s.value() / self.values.len() as f64
    }

    /// Discrete `L^2` inner product `<f, g> = h^dim sum f g`.
    pub fn inner(&self, other: &CellField) -> f64 {
        assert_eq!(self.grid, other.grid, "fields must share a grid");
        let mut s = CompensatedSum::new();
        for (&a, &b) in self.values.iter().zip(&other.values) {
            s.add(a * b);
        }
        s.value() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// `f - mean(f)`, with a second pass so the result's mean is zero to
    /// rounding even on large ill-scaled fields.
    pub fn project_mean_zero(&self) -> CellField {
        let mut out = self.clone();
        out.project_mean_zero_in_place();
        out
    }

    pub fn project_mean_zero_in_place(&mut self) {
        let m = self.mean();
        self.shift(-m);
        let m2 = self.mean();
        self.shift(-m2);
    }

    /// Adds the constant `c` to every value.
    pub fn shift(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &CellField) {
        assert_eq!(self.grid, x.grid, "fields must share a grid");
        for (v, &u) in self.values.iter_mut().zip(&x.values) {
            *v += a * u;
        }
    }

    pub fn add(&self, other: &CellField) -> CellField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &CellField) -> CellField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn scaled(&self, a: f64) -> CellField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> CellField {
        CellField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn copy_from(&mut self, other: &CellField) {
        assert_eq!(self.grid, other.grid, "fields must share a grid");
        self.values.copy_from_slice(&other.values);
    }

    pub fn fill(&mut self, c: f64) {
        self.values.fill(c);
    }
}

/// Scalar values at the face points staggered by `h/2` along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: GridSpec,
    axis: Axis,
    values: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: GridSpec, axis: Axis) -> Self {
        assert!(axis.index() < grid.dim(), "axis out of range for grid");
        FaceField {
            grid,
            axis,
            values: vec![0.0; grid.num_cells()],
        }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn axis(&self) -> Axis {
        self.axis
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn map_in_place(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.values {
            *v = f(*v);
        }
    }

    /// `self *= w` pointwise.
    pub fn mul_assign(&mut self, w: &FaceField) {
        assert_eq!(self.grid, w.grid);
        assert_eq!(self.axis, w.axis);
        for (v, &u) in self.values.iter_mut().zip(&w.values) {
            *v *= u;
        }
    }
}

/// One face field per axis: the vector `(f^x, f^y[, f^z])`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVector {
    grid: GridSpec,
    comps: Vec<FaceField>,
}

impl FaceVector {
    pub fn zeros(grid: GridSpec) -> Self {
        let comps = grid.axes().iter().map(|&ax| FaceField::zeros(grid, ax)).collect();
        FaceVector { grid, comps }
    }

    pub fn from_components(comps: Vec<FaceField>) -> Self {
        assert!(!comps.is_empty());
        let grid = comps[0].grid;
        assert_eq!(comps.len(), grid.dim(), "need one component per axis");
        for (i, c) in comps.iter().enumerate() {
            assert_eq!(c.grid, grid, "components must share a grid");
            assert_eq!(c.axis.index(), i, "components must be in axis order");
        }
        FaceVector { grid, comps }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn comp(&self, axis: Axis) -> &FaceField {
        &self.comps[axis.index()]
    }

    #[inline]
    pub fn comp_mut(&mut self, axis: Axis) -> &mut FaceField {
        &mut self.comps[axis.index()]
    }

    pub fn components(&self) -> &[FaceField] {
        &self.comps
    }

    /// Componentwise product, e.g. a mobility applied to a gradient.
    pub fn scaled_by(&self, w: &FaceVector) -> FaceVector {
        assert_eq!(self.grid, w.grid);
        let mut out = self.clone();
        for (c, wc) in out.comps.iter_mut().zip(&w.comps) {
            c.mul_assign(wc);
        }
        out
    }

    /// Smallest component value over all faces and axes.
    pub fn min_value(&self) -> f64 {
        self.comps.iter().fold(f64::INFINITY, |m, c| m.min(c.min_value()))
    }
}

// ---------------------------------------------------------------------------
// Staggered operators
// ---------------------------------------------------------------------------

/// `A f` at face `i+1/2`: the mean of the two adjacent cells.
pub fn face_average_into(f: &CellField, axis: Axis, out: &mut FaceField) {
    let g = f.grid();
    assert_eq!(g, out.grid());
    assert_eq!(axis, out.axis());
    let n = g.cells_per_axis();
    let s = g.stride(axis);
    let src = f.values();
    let dst = out.values_mut();
    for_each_line(n, s, src.len(), |base| {
        for k in 0..n - 1 {
            let c = base + k * s;
            dst[c] = 0.5 * (src[c + s] + src[c]);
        }
        let last = base + (n - 1) * s;
        dst[last] = 0.5 * (src[base] + src[last]);
    });
}

pub fn face_average(f: &CellField, axis: Axis) -> FaceField {
    let mut out = FaceField::zeros(f.grid(), axis);
    face_average_into(f, axis, &mut out);
    out
}

/// `D f` at face `i+1/2`: the difference quotient of the two adjacent cells.
pub fn face_difference_into(f: &CellField, axis: Axis, out: &mut FaceField) {
    let g = f.grid();
    assert_eq!(g, out.grid());
    assert_eq!(axis, out.axis());
    let n = g.cells_per_axis();
    let s = g.stride(axis);
    let inv_h = 1.0 / g.spacing();
    let src = f.values();
    let dst = out.values_mut();
    for_each_line(n, s, src.len(), |base| {
        for k in 0..n - 1 {
            let c = base + k * s;
            dst[c] = (src[c + s] - src[c]) * inv_h;
        }
        let last = base + (n - 1) * s;
        dst[last] = (src[base] - src[last]) * inv_h;
    });
}

pub fn face_difference(f: &CellField, axis: Axis) -> FaceField {
    let mut out = FaceField::zeros(f.grid(), axis);
    face_difference_into(f, axis, &mut out);
    out
}

/// `d v` at cell centers: difference of the two faces bounding the cell,
/// accumulated into `out` with a scale factor.
pub(crate) fn add_cell_difference_scaled(v: &FaceField, scale: f64, out: &mut CellField) {
    let g = v.grid();
    assert_eq!(g, out.grid());
    let n = g.cells_per_axis();
    let s = g.stride(v.axis());
    let factor = scale / g.spacing();
    let src = v.values();
    let dst = out.values_mut();
    for_each_line(n, s, src.len(), |base| {
        let last = base + (n - 1) * s;
        dst[base] += factor * (src[base] - src[last]);
        for k in 1..n {
            let c = base + k * s;
            dst[c] += factor * (src[c] - src[c - s]);
        }
    });
}

/// Discrete gradient: `(D_x f, D_y f[, D_z f])`.
pub fn gradient_into(f: &CellField, out: &mut FaceVector) {
    for &ax in f.grid().axes() {
        face_difference_into(f, ax, out.comp_mut(ax));
    }
}

pub fn gradient(f: &CellField) -> FaceVector {
    let mut out = FaceVector::zeros(f.grid());
    gradient_into(f, &mut out);
    out
}

/// Discrete divergence of a face vector, accumulated axis by axis in a
/// fixed order so compositions are reproducible bitwise.
pub fn divergence_into(v: &FaceVector, out: &mut CellField) {
    out.fill(0.0);
    for &ax in v.grid().axes() {
        add_cell_difference_scaled(v.comp(ax), 1.0, out);
    }
}

pub fn divergence(v: &FaceVector) -> CellField {
    let mut out = CellField::zeros(v.grid());
    divergence_into(v, &mut out);
    out
}

/// Discrete Laplacian, defined as the exact composition `div(grad f)`.
pub fn laplacian(f: &CellField) -> CellField {
    divergence(&gradient(f))
}

/// `div(A g . D f)`: divergence of the gradient of `f` weighted by the face
/// averages of the cell field `g`.
pub fn weighted_divergence(g: &CellField, f: &CellField) -> CellField {
    assert_eq!(g.grid(), f.grid(), "fields must share a grid");
    let grid = f.grid();
    let mut out = CellField::zeros(grid);
    for &ax in grid.axes() {
        let mut face = face_difference(f, ax);
        face.mul_assign(&face_average(g, ax));
        add_cell_difference_scaled(&face, 1.0, &mut out);
    }
    out
}

/// `div(m . grad f)` with weights already living on faces (e.g. a mobility).
pub fn flux_divergence(m: &FaceVector, f: &CellField) -> CellField {
    let mut out = CellField::zeros(f.grid());
    add_flux_divergence_scaled(m, f, 1.0, &mut out);
    out
}

/// `out += scale * div(m . grad f)` using caller scratch to avoid allocation.
pub(crate) fn add_flux_divergence_scaled_with(
    m: &FaceVector,
    f: &CellField,
    scale: f64,
    out: &mut CellField,
    scratch: &mut FaceVector,
) {
    let grid = f.grid();
    assert_eq!(grid, m.grid());
    assert_eq!(grid, out.grid());
    for &ax in grid.axes() {
        let face = scratch.comp_mut(ax);
        face_difference_into(f, ax, face);
        face.mul_assign(m.comp(ax));
        add_cell_difference_scaled(scratch.comp(ax), scale, out);
    }
}

pub(crate) fn add_flux_divergence_scaled(m: &FaceVector, f: &CellField, scale: f64, out: &mut CellField) {
    let mut scratch = FaceVector::zeros(f.grid());
    add_flux_divergence_scaled_with(m, f, scale, out, &mut scratch);
}

// ---------------------------------------------------------------------------
// Inner products and norms
// ---------------------------------------------------------------------------

/// Face-vector inner product `[u, v] = sum_axis <a(u v), 1>`, built from the
/// cell averages of the per-axis face products.
pub fn face_inner_product(u: &FaceVector, v: &FaceVector) -> f64 {
    let grid = u.grid();
    assert_eq!(grid, v.grid(), "fields must share a grid");
    let n = grid.cells_per_axis();
    let mut s = CompensatedSum::new();
    for &ax in grid.axes() {
        let a = u.comp(ax).values();
        let b = v.comp(ax).values();
        let stride = grid.stride(ax);
        for_each_line(n, stride, a.len(), |base| {
            let last = base + (n - 1) * stride;
            s.add(0.5 * (a[base] * b[base] + a[last] * b[last]));
            for k in 1..n {
                let c = base + k * stride;
                s.add(0.5 * (a[c] * b[c] + a[c - stride] * b[c - stride]));
            }
        });
    }
    s.value() * grid.cell_volume()
}

/// `|grad f|^2 = [grad f, grad f]`.
pub fn grad_norm_sq(f: &CellField) -> f64 {
    let g = gradient(f);
    face_inner_product(&g, &g)
}

/// Discrete `H^1` norm, `sqrt(|f|_2^2 + |grad f|_2^2)`.
pub fn h1_norm(f: &CellField) -> f64 {
    (f.inner(f) + grad_norm_sq(f)).max(0.0).sqrt()
}

// ---------------------------------------------------------------------------
// Text dumps
// ---------------------------------------------------------------------------

/// Writes `dim N h origin... extent` then all values row-major, one per
/// line, at 17 significant digits (value-exact for f64).
pub fn write_field<W: Write>(f: &CellField, w: &mut W) -> Result<(), GridError> {
    let g = f.grid();
    write!(w, "{} {} {:.16e}", g.dim(), g.cells_per_axis(), g.spacing())?;
    for ax in 0..g.dim() {
        write!(w, " {:.16e}", g.origin()[ax])?;
    }
    writeln!(w, " {:.16e}", g.axis_length())?;
    for &v in f.values() {
        writeln!(w, "{:.16e}", v)?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(r: &mut R) -> Result<CellField, GridError> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let mut it = header.split_whitespace();
    let mut next = |what: &str| {
        it.next()
            .ok_or_else(|| GridError::Parse(format!("missing {what} in header")))
    };
    let dim: usize = next("dim")?
        .parse()
        .map_err(|e| GridError::Parse(format!("bad dim: {e}")))?;
    let n: usize = next("cell count")?
        .parse()
        .map_err(|e| GridError::Parse(format!("bad cell count: {e}")))?;
    let _h: f64 = next("spacing")?
        .parse()
        .map_err(|e| GridError::Parse(format!("bad spacing: {e}")))?;
    let mut origin = [0.0; MAX_DIM];
    for (ax, o) in origin.iter_mut().enumerate().take(dim) {
        *o = next("origin")?
            .parse()
            .map_err(|e| GridError::Parse(format!("bad origin[{ax}]: {e}")))?;
    }
    let length: f64 = next("extent")?
        .parse()
        .map_err(|e| GridError::Parse(format!("bad extent: {e}")))?;
    let grid = GridSpec::new(dim, n, origin, length)?;
    let mut values = Vec::with_capacity(grid.num_cells());
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|e| GridError::Parse(format!("bad value: {e}")))?,
        );
    }
    if values.len() != grid.num_cells() {
        return Err(GridError::Parse(format!(
            "expected {} values, found {}",
            grid.num_cells(),
            values.len()
        )));
    }
    Ok(CellField::from_values(grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::test_fields::{smooth_positive, wavy};
    use approx::assert_relative_eq;

    #[test]
    fn constant_fields_average_and_difference() {
        let g = GridSpec::unit(2, 8).unwrap();
        let f = CellField::constant(g, 3.25);
        for &ax in g.axes() {
            let avg = face_average(&f, ax);
            let dif = face_difference(&f, ax);
            assert!(avg.values().iter().all(|&v| v == 3.25));
            assert!(dif.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn two_cell_difference_wraps() {
        // h = 1/2, f = (0, 1) along x: D_x f = (2, -2).
        let g = GridSpec::unit(2, 2).unwrap();
        let f = CellField::from_values(g, vec![0.0, 1.0, 0.0, 1.0]);
        let d = face_difference(&f, Axis::X);
        assert_eq!(d.values(), &[2.0, -2.0, 2.0, -2.0]);
    }

    #[test]
    fn face_difference_is_second_order_at_face_centers() {
        let tau = std::f64::consts::TAU;
        let g = GridSpec::unit(2, 64).unwrap();
        let f = CellField::from_fn(g, |x| (tau * x[0]).sin());
        let d = face_difference(&f, Axis::X);
        let h = g.spacing();
        let mut max_err = 0.0_f64;
        for c in 0..g.num_cells() {
            let x = g.cell_center(c);
            let exact = tau * (tau * (x[0] + 0.5 * h)).cos();
            max_err = max_err.max((d.values()[c] - exact).abs());
        }
        // |error| <= tau^3 h^2 / 24 with a margin
        assert!(max_err <= tau.powi(3) * h * h / 20.0, "max_err = {max_err}");
    }

    #[test]
    fn laplacian_is_divergence_of_gradient_bitwise() {
        for dim in [2, 3] {
            let g = GridSpec::unit(dim, 8).unwrap();
            let f = wavy(g, 3);
            let lap = laplacian(&f);
            let composed = divergence(&gradient(&f));
            assert_eq!(lap.values(), composed.values());
        }
    }

    #[test]
    fn unit_weight_reduces_to_laplacian_bitwise() {
        let g = GridSpec::unit(2, 16).unwrap();
        let f = wavy(g, 5);
        let ones = CellField::constant(g, 1.0);
        assert_eq!(weighted_divergence(&ones, &f).values(), laplacian(&f).values());
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = GridSpec::new(3, 4, [-1.0, -1.0, -1.0], 2.0).unwrap();
        let f = CellField::constant(g, 7.5);
        assert!(laplacian(&f).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn summation_by_parts_plain_and_weighted() {
        for dim in [2, 3] {
            for n in [4, 8, 16, 32] {
                if dim == 3 && n > 16 {
                    continue;
                }
                let g = GridSpec::unit(dim, n).unwrap();
                let psi = wavy(g, 2);
                let phi = wavy(g, 7);
                let w = smooth_positive(g, 11);
                // plain form with an arbitrary face vector v = grad(phi)
                let v = gradient(&phi);
                let lhs = psi.inner(&divergence(&v));
                let rhs = -face_inner_product(&gradient(&psi), &v);
                let scale = psi.l2_norm() * face_inner_product(&v, &v).sqrt() + 1.0;
                assert!((lhs - rhs).abs() <= 1e-12 * scale, "plain SBP: {lhs} vs {rhs}");
                // weighted form
                let lhs_w = psi.inner(&weighted_divergence(&w, &phi));
                let mut gphi = gradient(&phi);
                for &ax in g.axes() {
                    let aw = face_average(&w, ax);
                    gphi.comp_mut(ax).mul_assign(&aw);
                }
                let rhs_w = -face_inner_product(&gradient(&psi), &gphi);
                assert!((lhs_w - rhs_w).abs() <= 1e-12 * scale.max(lhs_w.abs()), "weighted SBP");
            }
        }
    }

    #[test]
    fn flux_divergence_has_zero_mean() {
        let g = GridSpec::unit(2, 16).unwrap();
        let w = smooth_positive(g, 3);
        let phi = wavy(g, 9);
        let d = weighted_divergence(&w, &phi);
        assert!(d.mean().abs() <= 1e-15 * d.linf_norm().max(1.0));
    }

    #[test]
    fn operators_ignore_additive_constants() {
        let g = GridSpec::unit(2, 12).unwrap();
        let f = wavy(g, 4);
        let w = smooth_positive(g, 6);
        let fc = f.map(|v| v + 2.5);
        let d1 = face_difference(&f, Axis::Y);
        let d2 = face_difference(&fc, Axis::Y);
        let scale = 1.0 / g.spacing();
        for (a, b) in d1.values().iter().zip(d2.values()) {
            assert!((a - b).abs() <= 1e-13 * scale);
        }
        let wd1 = weighted_divergence(&w, &f);
        let wd2 = weighted_divergence(&w, &fc);
        let scale2 = wd1.linf_norm().max(1.0);
        for (a, b) in wd1.values().iter().zip(wd2.values()) {
            assert!((a - b).abs() <= 1e-12 * scale2);
        }
    }

    #[test]
    fn laplacian_converges_at_second_order() {
        let tau = std::f64::consts::TAU;
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let g = GridSpec::unit(2, n).unwrap();
            let f = CellField::from_fn(g, |x| (tau * x[0]).sin() * (2.0 * tau * x[1]).cos());
            let lap = laplacian(&f);
            let exact = CellField::from_fn(g, |x| {
                -(tau * tau + 4.0 * tau * tau) * (tau * x[0]).sin() * (2.0 * tau * x[1]).cos()
            });
            errs.push(lap.sub(&exact).l2_norm());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "measured order {order}");
        }
    }

    #[test]
    fn inner_product_matches_direct_loops() {
        let g = GridSpec::unit(2, 8).unwrap();
        let f = wavy(g, 13);
        // measure of the unit square
        let ones = CellField::constant(g, 1.0);
        assert_relative_eq!(ones.inner(&ones), 1.0, max_relative = 1e-15);
        // independent plain-loop oracle
        let mut sq = 0.0;
        let mut maxabs = 0.0_f64;
        for &v in f.values() {
            sq += v * v;
            maxabs = maxabs.max(v.abs());
        }
        sq *= g.cell_volume();
        assert_relative_eq!(f.l2_norm() * f.l2_norm(), sq, max_relative = 1e-13);
        assert_eq!(f.linf_norm(), maxabs);
        assert_relative_eq!(f.inner(&f), sq, max_relative = 1e-13);
    }

    #[test]
    fn projection_is_idempotent_and_exact() {
        let g = GridSpec::new(2, 32, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let f = wavy(g, 21).map(|v| 50.0 * v + 3.0);
        let p = f.project_mean_zero();
        assert!(p.mean().abs() <= 1e-15 * f.linf_norm().max(1.0));
        let pp = p.project_mean_zero();
        for (a, b) in p.values().iter().zip(pp.values()) {
            assert!((a - b).abs() <= 1e-14 * f.linf_norm().max(1.0));
        }
    }

    #[test]
    fn grad_norm_matches_face_inner_product_definition() {
        let g = GridSpec::unit(3, 6).unwrap();
        let f = wavy(g, 2);
        let gf = gradient(&f);
        assert_eq!(grad_norm_sq(&f), face_inner_product(&gf, &gf));
        assert!(h1_norm(&f) >= f.l2_norm());
    }

    #[test]
    fn dump_roundtrip_is_bit_exact() {
        let g = GridSpec::new(2, 6, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let f = wavy(g, 17);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let back = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(back.grid().cells_per_axis(), 6);
        assert_eq!(back.values(), f.values());
    }
}
