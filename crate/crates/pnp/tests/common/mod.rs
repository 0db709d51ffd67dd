//! Shared helpers for the integration suites: dense-matrix oracles built by
//! independent index arithmetic (not by probing the solver's own operators)
//! and seeded random fields.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use pnp::grid::{CellField, FaceVector, GridSpec};

/// Periodic flat index for cell `(i, j)` of an `n x n` grid.
pub fn idx2(n: usize, i: i64, j: i64) -> usize {
    let ii = i.rem_euclid(n as i64) as usize;
    let jj = j.rem_euclid(n as i64) as usize;
    jj * n + ii
}

/// Dense `-Delta_h` on a 2D periodic grid, assembled from the 5-point
/// stencil directly.
pub fn dense_neg_laplacian(grid: GridSpec) -> DMatrix<f64> {
    assert_eq!(grid.dim(), 2);
    let n = grid.cells_per_axis();
    let total = n * n;
    let w = 1.0 / (grid.spacing() * grid.spacing());
    let mut a = DMatrix::zeros(total, total);
    for j in 0..n as i64 {
        for i in 0..n as i64 {
            let r = idx2(n, i, j);
            a[(r, r)] += 4.0 * w;
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                a[(r, idx2(n, i + di, j + dj))] -= w;
            }
        }
    }
    a
}

/// Dense `L_g = -div(A(g) grad .)` with the cell weight averaged to faces,
/// assembled face by face.
pub fn dense_weighted_operator(g: &CellField) -> DMatrix<f64> {
    let grid = g.grid();
    assert_eq!(grid.dim(), 2);
    let n = grid.cells_per_axis();
    let total = n * n;
    let w = 1.0 / (grid.spacing() * grid.spacing());
    let gv = g.values();
    let mut a = DMatrix::zeros(total, total);
    for j in 0..n as i64 {
        for i in 0..n as i64 {
            let r = idx2(n, i, j);
            // faces in +x, -x, +y, -y with averaged weights
            let neighbors = [(1, 0), (-1, 0), (0, 1), (0, -1)];
            for (di, dj) in neighbors {
                let nb = idx2(n, i + di, j + dj);
                let face_w = 0.5 * (gv[r] + gv[nb]) * w;
                a[(r, r)] += face_w;
                a[(r, nb)] -= face_w;
            }
        }
    }
    a
}

/// Dense operator of one linearized implicit sweep:
/// `x -> x - coeff * div( M grad(x / anchor) )` with face mobilities `M`.
pub fn dense_sweep_operator(mobility: &FaceVector, anchor: &CellField, coeff: f64) -> DMatrix<f64> {
    let grid = anchor.grid();
    assert_eq!(grid.dim(), 2);
    let n = grid.cells_per_axis();
    let total = n * n;
    let w = coeff / (grid.spacing() * grid.spacing());
    let mx = mobility.comp(pnp::grid::Axis::X).values();
    let my = mobility.comp(pnp::grid::Axis::Y).values();
    let av = anchor.values();
    let mut a = DMatrix::identity(total, total);
    for j in 0..n as i64 {
        for i in 0..n as i64 {
            let r = idx2(n, i, j);
            // div(M grad u)_r = [mx(r)(u_e - u_r) - mx(r-x)(u_r - u_w)
            //                  + my(r)(u_n - u_r) - my(r-y)(u_r - u_s)] / h^2
            // with u = x / anchor
            let e = idx2(n, i + 1, j);
            let wst = idx2(n, i - 1, j);
            let no = idx2(n, i, j + 1);
            let so = idx2(n, i, j - 1);
            let mxe = mx[r];
            let mxw = mx[idx2(n, i - 1, j)];
            let myn = my[r];
            let mys = my[idx2(n, i, j - 1)];
            a[(r, e)] -= w * mxe / av[e];
            a[(r, r)] += w * mxe / av[r];
            a[(r, wst)] -= w * mxw / av[wst];
            a[(r, r)] += w * mxw / av[r];
            a[(r, no)] -= w * myn / av[no];
            a[(r, r)] += w * myn / av[r];
            a[(r, so)] -= w * mys / av[so];
            a[(r, r)] += w * mys / av[r];
        }
    }
    a
}

pub fn field_to_vec(f: &CellField) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

pub fn vec_to_field(grid: GridSpec, v: &DVector<f64>) -> CellField {
    CellField::from_values(grid, v.as_slice().to_vec())
}

/// Applies the Moore-Penrose pseudoinverse of `a` to `b` (for the singular
/// periodic operators whose kernel is the constants).
pub fn pseudoinverse_apply(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let pinv = a.clone().pseudo_inverse(1e-11).expect("pseudoinverse");
    pinv * b
}

/// Random field with values in `[lo, hi]`.
pub fn random_field(grid: GridSpec, rng: &mut impl Rng, lo: f64, hi: f64) -> CellField {
    CellField::from_values(
        grid,
        (0..grid.num_cells()).map(|_| rng.gen_range(lo..hi)).collect(),
    )
}

/// Mean-zero random field with amplitude `amp`.
pub fn random_mean_zero(grid: GridSpec, rng: &mut impl Rng, amp: f64) -> CellField {
    random_field(grid, rng, -amp, amp).project_mean_zero()
}
