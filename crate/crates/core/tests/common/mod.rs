//! Dense reference constructions and random instances shared by the
//! integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use smoothhaz::basis::{build_basis, BasisMatrix, KnotGrid};
use smoothhaz::lexis::{bin_individuals, BinAxis, BinGrid, BinnedData3D, IndividualRecord};
use smoothhaz::linalg::kron;

/// Explicit `B = Bs ⊗ Bu`, rows `j + n_u k`, columns `l + c_u m`.
pub fn dense_tensor(bu: &BasisMatrix, bs: &BasisMatrix) -> Array2<f64> {
    kron(&bs.values, &bu.values)
}

pub fn vec_cm(a: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(a.t().iter().copied())
}

pub fn max_abs_diff<'a>(
    a: impl IntoIterator<Item = &'a f64>,
    b: impl IntoIterator<Item = &'a f64>,
) -> f64 {
    a.into_iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// A basis of `n` random points with at most `max_c` columns.
pub fn random_basis(rng: &mut ChaCha8Rng, n: usize, max_c: usize) -> BasisMatrix {
    let degree = rng.random_range(0..=3usize.min(max_c - 1));
    let max_seg = max_c - degree;
    let nseg = rng.random_range(1..=max_seg);
    let lo = rng.random_range(-2.0..2.0);
    let hi = lo + rng.random_range(0.5..5.0);
    let grid = KnotGrid::new(lo, hi, nseg, degree).unwrap();
    let pts: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    build_basis(&grid, &pts).unwrap()
}

pub fn random_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let m = random_matrix(rng, n, n, -1.0, 1.0);
    m.t().dot(&m) + Array2::<f64>::eye(n) * 0.1
}

/// Random individual-level data on `grid` with `p` covariates.
pub fn random_individuals(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    grid: &BinGrid,
) -> BinnedData3D {
    let records: Vec<IndividualRecord> = (0..n)
        .map(|i| {
            let u = rng.random_range(grid.u.origin..grid.u.end());
            let s_in = rng.random_range(grid.s.origin..grid.s.end() * 0.5);
            let s_out = rng.random_range(s_in + 1e-3..grid.s.end());
            let x = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            IndividualRecord::new(i.to_string(), u, s_in, s_out, rng.random_bool(0.6), x).unwrap()
        })
        .collect();
    bin_individuals(&records, grid).unwrap()
}

pub fn random_grid(rng: &mut ChaCha8Rng, max_bins: usize) -> BinGrid {
    let nu = rng.random_range(1..=max_bins);
    let ns = rng.random_range(1..=max_bins);
    BinGrid {
        u: BinAxis::new(0.0, rng.random_range(0.5..2.0), nu).unwrap(),
        s: BinAxis::new(0.0, rng.random_range(0.5..2.0), ns).unwrap(),
    }
}

/// Dense PH normal equations `CᵀVC` and `Cᵀ(y − μ + μ ⊙ η)` with
/// `C = [1_n ⊗ B | X ⊗ 1_{n_u n_s}]`, stacking one `n_u n_s` block per
/// individual.
pub fn dense_ph_system(
    data: &BinnedData3D,
    bu: &BasisMatrix,
    bs: &BasisMatrix,
    coef: &Array2<f64>,
    beta: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let b = dense_tensor(bu, bs);
    let (cells, c) = b.dim();
    let n = data.n_individuals();
    let p = beta.len();
    let nu = data.grid.u.count;
    let mut design = Array2::<f64>::zeros((n * cells, c + p));
    let mut y = Array1::<f64>::zeros(n * cells);
    let mut r = Array1::<f64>::zeros(n * cells);
    for (i, slice) in data.slices.iter().enumerate() {
        for row in 0..cells {
            design
                .row_mut(i * cells + row)
                .slice_mut(ndarray::s![..c])
                .assign(&b.row(row));
            for v in 0..p {
                design[[i * cells + row, c + v]] = data.x[[i, v]];
            }
        }
        for (q, k) in slice.s_bins().enumerate() {
            let row = slice.u_row + nu * k;
            y[i * cells + row] = slice.y[q];
            r[i * cells + row] = slice.r[q];
        }
    }
    let theta =
        ndarray::concatenate(ndarray::Axis(0), &[vec_cm(coef).view(), beta.view()]).unwrap();
    let eta = design.dot(&theta);
    let mu = &r * &eta.mapv(f64::exp);
    let weighted = &design * &mu.view().insert_axis(ndarray::Axis(1));
    let g = design.t().dot(&weighted);
    let z = &(&y - &mu) + &(&mu * &eta);
    (g, design.t().dot(&z))
}
