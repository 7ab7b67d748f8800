//! Array arithmetic for tensor-product bases `B = Bs ⊗ Bu`.
//!
//! Every kernel works from the marginal bases and never forms `B`. Vectors
//! of coefficients and bin arrays are column-major (`vec` stacks columns):
//! coefficient `(l, m)` of the `c_u x c_s` matrix `A` sits at `l + c_u·m`,
//! bin `(j, k)` of an `n_u x n_s` array at `j + n_u·k`. Row-tensor columns
//! are ordered `(l, l') -> l·c + l'`.

use ndarray::{Array1, Array2};

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};

/// Row-wise self outer products of a basis matrix, `n x c²`.
#[derive(Debug, Clone)]
pub struct RowTensor {
    pub values: Array2<f64>,
    pub n_basis: usize,
}

pub fn row_tensor(b: &BasisMatrix) -> RowTensor {
    let (n, c) = (b.nrows(), b.ncols());
    let mut values = Array2::zeros((n, c * c));
    for j in 0..n {
        let (start, band) = b.band(j);
        for (a, &va) in band.iter().enumerate() {
            for (bb, &vb) in band.iter().enumerate() {
                values[[j, (start + a) * c + start + bb]] = va * vb;
            }
        }
    }
    RowTensor { values, n_basis: c }
}

fn mismatch(context: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

fn check_shape(
    context: &'static str,
    m: &Array2<f64>,
    bu: &BasisMatrix,
    bs: &BasisMatrix,
) -> Result<()> {
    let expected = (bu.nrows(), bs.nrows());
    if m.dim() != expected {
        return Err(mismatch(
            context,
            format!("{expected:?}"),
            format!("{:?}", m.dim()),
        ));
    }
    Ok(())
}

/// `φ(Bu)ᵀ W`, restricted to the band pairs each row touches; `c_u² x n_s`.
fn left_row_tensor_product(bu: &BasisMatrix, w: &Array2<f64>) -> Array2<f64> {
    let cu = bu.ncols();
    let ns = w.ncols();
    let mut t = Array2::<f64>::zeros((cu * cu, ns));
    for j in 0..bu.nrows() {
        let (start, band) = bu.band(j);
        let wrow = w.row(j);
        if wrow.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (a, &va) in band.iter().enumerate() {
            for (b, &vb) in band.iter().enumerate() {
                let coef = va * vb;
                if coef == 0.0 {
                    continue;
                }
                let mut trow = t.row_mut((start + a) * cu + start + b);
                trow.scaled_add(coef, &wrow);
            }
        }
    }
    t
}

/// `Bᵀ diag(vec W) B` for `B = Bs ⊗ Bu`, computed as `φ(Bu)ᵀ W φ(Bs)`
/// re-dimensioned to `(c_u c_s) x (c_u c_s)`.
pub fn inner_product_2d(
    bu: &BasisMatrix,
    bs: &BasisMatrix,
    w: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_shape("inner_product_2d", w, bu, bs)?;
    let (cu, cs) = (bu.ncols(), bs.ncols());
    let t = left_row_tensor_product(bu, w);
    // S = T φ(Bs), c_u² x c_s², accumulated band by band.
    let mut s = Array2::<f64>::zeros((cu * cu, cs * cs));
    for k in 0..bs.nrows() {
        let (start, band) = bs.band(k);
        let tcol = t.column(k);
        for (a, &va) in band.iter().enumerate() {
            for (b, &vb) in band.iter().enumerate() {
                let coef = va * vb;
                if coef == 0.0 {
                    continue;
                }
                let mut scol = s.column_mut((start + a) * cs + start + b);
                scol.scaled_add(coef, &tcol);
            }
        }
    }
    let dim = cu * cs;
    let mut g = Array2::<f64>::zeros((dim, dim));
    for l in 0..cu {
        for lp in 0..cu {
            let srow = s.row(l * cu + lp);
            for m in 0..cs {
                for mp in 0..cs {
                    g[[l + cu * m, lp + cu * mp]] = srow[m * cs + mp];
                }
            }
        }
    }
    Ok(g)
}

/// `Buᵀ Z Bs`, `c_u x c_s`.
pub fn marginal_projection(
    bu: &BasisMatrix,
    z: &Array2<f64>,
    bs: &BasisMatrix,
) -> Result<Array2<f64>> {
    check_shape("marginal_projection", z, bu, bs)?;
    let (cu, cs) = (bu.ncols(), bs.ncols());
    let ns = bs.nrows();
    // Buᵀ Z: c_u x n_s
    let mut left = Array2::<f64>::zeros((cu, ns));
    for j in 0..bu.nrows() {
        let (start, band) = bu.band(j);
        let zrow = z.row(j);
        for (a, &va) in band.iter().enumerate() {
            if va != 0.0 {
                left.row_mut(start + a).scaled_add(va, &zrow);
            }
        }
    }
    let mut out = Array2::<f64>::zeros((cu, cs));
    for k in 0..ns {
        let (start, band) = bs.band(k);
        let col = left.column(k);
        for (b, &vb) in band.iter().enumerate() {
            if vb != 0.0 {
                out.column_mut(start + b).scaled_add(vb, &col);
            }
        }
    }
    Ok(out)
}

/// Column-major `vec` of a matrix.
pub fn vec_col_major(a: &Array2<f64>) -> Array1<f64> {
    Array1::from(a.t().iter().copied().collect::<Vec<_>>())
}

/// Inverse of [`vec_col_major`].
pub fn unvec_col_major(v: &Array1<f64>, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| v[i + rows * j])
}

/// IWLS right-hand side `vec(Buᵀ ((Y − M) + M ⊙ E) Bs)`.
pub fn rhs_2d(
    bu: &BasisMatrix,
    bs: &BasisMatrix,
    y: &Array2<f64>,
    m: &Array2<f64>,
    e: &Array2<f64>,
) -> Result<Array1<f64>> {
    check_shape("rhs_2d (Y)", y, bu, bs)?;
    check_shape("rhs_2d (M)", m, bu, bs)?;
    check_shape("rhs_2d (E)", e, bu, bs)?;
    let mut z = y - m;
    ndarray::Zip::from(&mut z)
        .and(m)
        .and(e)
        .for_each(|z, &m, &e| {
            if m != 0.0 {
                *z += m * e;
            }
        });
    Ok(vec_col_major(&marginal_projection(bu, &z, bs)?))
}

/// `E = Bu A Bsᵀ`, `n_u x n_s`.
pub fn linear_predictor_2d(
    bu: &BasisMatrix,
    a: &Array2<f64>,
    bs: &BasisMatrix,
) -> Result<Array2<f64>> {
    if a.dim() != (bu.ncols(), bs.ncols()) {
        return Err(mismatch(
            "linear_predictor_2d",
            format!("{:?}", (bu.ncols(), bs.ncols())),
            format!("{:?}", a.dim()),
        ));
    }
    let (nu, ns) = (bu.nrows(), bs.nrows());
    // Bu A: n_u x c_s
    let mut left = Array2::<f64>::zeros((nu, a.ncols()));
    for j in 0..nu {
        let (start, band) = bu.band(j);
        let mut row = left.row_mut(j);
        for (q, &v) in band.iter().enumerate() {
            if v != 0.0 {
                row.scaled_add(v, &a.row(start + q));
            }
        }
    }
    let mut e = Array2::<f64>::zeros((nu, ns));
    for k in 0..ns {
        let (start, band) = bs.band(k);
        let mut col = e.column_mut(k);
        for (r, &v) in band.iter().enumerate() {
            if v != 0.0 {
                col.scaled_add(v, &left.column(start + r));
            }
        }
    }
    Ok(e)
}

/// Re-arranges the `(c_u c_s)²` coefficient covariance into the
/// `c_u² x c_s²` array `S` with `S[(l,l'),(m,m')] = V[l + c_u m, l' + c_u m']`.
pub fn redimension_covariance(v: &Array2<f64>, cu: usize, cs: usize) -> Result<Array2<f64>> {
    let dim = cu * cs;
    if v.dim() != (dim, dim) {
        return Err(mismatch(
            "redimension_covariance",
            format!("{dim}x{dim}"),
            format!("{:?}", v.dim()),
        ));
    }
    Ok(Array2::from_shape_fn((cu * cu, cs * cs), |(ll, mm)| {
        let (l, lp) = (ll / cu, ll % cu);
        let (m, mp) = (mm / cs, mm % cs);
        v[[l + cu * m, lp + cu * mp]]
    }))
}

/// Pointwise variances `diag(B V Bᵀ)` of the linear predictor at the bin
/// grid, arranged `n_u x n_s`, computed as `φ(Bu) S φ(Bs)ᵀ`.
pub fn variance_diag_2d(
    bu: &BasisMatrix,
    bs: &BasisMatrix,
    v: &Array2<f64>,
) -> Result<Array2<f64>> {
    let (cu, cs) = (bu.ncols(), bs.ncols());
    let s = redimension_covariance(v, cu, cs)?;
    let (nu, ns) = (bu.nrows(), bs.nrows());
    // φ(Bu) S: n_u x c_s²
    let mut left = Array2::<f64>::zeros((nu, cs * cs));
    for j in 0..nu {
        let (start, band) = bu.band(j);
        let mut row = left.row_mut(j);
        for (a, &va) in band.iter().enumerate() {
            for (b, &vb) in band.iter().enumerate() {
                let coef = va * vb;
                if coef != 0.0 {
                    row.scaled_add(coef, &s.row((start + a) * cu + start + b));
                }
            }
        }
    }
    let mut out = Array2::<f64>::zeros((nu, ns));
    for k in 0..ns {
        let (start, band) = bs.band(k);
        for j in 0..nu {
            let lrow = left.row(j);
            let mut acc = 0.0;
            for (a, &va) in band.iter().enumerate() {
                for (b, &vb) in band.iter().enumerate() {
                    acc += va * vb * lrow[(start + a) * cs + start + b];
                }
            }
            out[[j, k]] = acc;
        }
    }
    Ok(out)
}

/// Variances `b_iᵀ V b_i` at paired evaluation rows, where `b_i` is the
/// tensor product of row `i` of `bu` and row `i` of `bs`.
pub fn variance_pointwise(
    bu: &BasisMatrix,
    bs: &BasisMatrix,
    v: &Array2<f64>,
) -> Result<Array1<f64>> {
    let (cu, cs) = (bu.ncols(), bs.ncols());
    if bu.nrows() != bs.nrows() {
        return Err(mismatch("variance_pointwise", bu.nrows(), bs.nrows()));
    }
    if v.dim() != (cu * cs, cu * cs) {
        return Err(mismatch(
            "variance_pointwise",
            format!("{0}x{0}", cu * cs),
            format!("{:?}", v.dim()),
        ));
    }
    let mut out = Array1::zeros(bu.nrows());
    for i in 0..bu.nrows() {
        let idx = tensor_band(bu, bs, i);
        let mut acc = 0.0;
        for &(p, wp) in &idx {
            for &(q, wq) in &idx {
                acc += wp * wq * v[[p, q]];
            }
        }
        out[i] = acc;
    }
    Ok(out)
}

/// Nonzero entries `(index, value)` of the tensor-product row pairing row
/// `i` of `bu` with row `i` of `bs`, using the column-major coefficient order.
pub fn tensor_band(bu: &BasisMatrix, bs: &BasisMatrix, i: usize) -> Vec<(usize, f64)> {
    let cu = bu.ncols();
    let (su, band_u) = bu.band(i);
    let (ss, band_s) = bs.band(i);
    let mut idx = Vec::with_capacity(band_u.len() * band_s.len());
    for (b, &vs) in band_s.iter().enumerate() {
        for (a, &vu) in band_u.iter().enumerate() {
            let w = vu * vs;
            if w != 0.0 {
                idx.push((su + a + cu * (ss + b), w));
            }
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, KnotGrid};
    use crate::linalg::kron;
    use ndarray::array;

    fn small_basis(n: usize, nseg: usize, lo: f64, hi: f64) -> BasisMatrix {
        let grid = KnotGrid::cubic(lo, hi, nseg).unwrap();
        let h = (hi - lo) / n as f64;
        let pts: Vec<f64> = (0..n).map(|j| lo + (j as f64 + 0.5) * h).collect();
        build_basis(&grid, &pts).unwrap()
    }

    #[test]
    fn row_tensor_of_single_row() {
        let b = BasisMatrix::from_dense(array![[2.0, 3.0]], 1).unwrap();
        let phi = row_tensor(&b);
        assert_eq!(phi.values.row(0).to_vec(), vec![4.0, 6.0, 6.0, 9.0]);
        let z = BasisMatrix::from_dense(array![[0.0, 0.0], [1.0, 0.0]], 1).unwrap();
        assert!(row_tensor(&z).values.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_cases() {
        let one = BasisMatrix::from_dense(array![[1.0]], 0).unwrap();
        let g = inner_product_2d(&one, &one, &array![[2.5]]).unwrap();
        assert_eq!(g, array![[2.5]]);
        let rhs = rhs_2d(&one, &one, &array![[2.0]], &array![[1.0]], &array![[0.5]]).unwrap();
        assert_eq!(rhs.to_vec(), vec![1.5]);
    }

    #[test]
    fn zero_inputs() {
        let bu = small_basis(7, 2, 0.0, 7.0);
        let bs = small_basis(6, 1, 0.0, 6.0);
        let g = inner_product_2d(&bu, &bs, &Array2::zeros((7, 6))).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let a = Array2::zeros((bu.ncols(), bs.ncols()));
        assert!(linear_predictor_2d(&bu, &a, &bs)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let dim = bu.ncols() * bs.ncols();
        let var = variance_diag_2d(&bu, &bs, &Array2::zeros((dim, dim))).unwrap();
        assert!(var.iter().all(|&v| v == 0.0));
        let y = Array2::from_elem((7, 6), 1.5);
        let rhs = rhs_2d(&bu, &bs, &y, &y, &Array2::zeros((7, 6))).unwrap();
        assert!(rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ones_reproduce_ones() {
        let bu = small_basis(9, 4, 0.0, 9.0);
        let bs = small_basis(5, 3, 0.0, 5.0);
        let a = Array2::ones((bu.ncols(), bs.ncols()));
        let e = linear_predictor_2d(&bu, &a, &bs).unwrap();
        assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn identity_covariance_expansion() {
        let bu = small_basis(4, 2, 0.0, 4.0);
        let bs = small_basis(3, 2, 0.0, 3.0);
        let dim = bu.ncols() * bs.ncols();
        let var = variance_diag_2d(&bu, &bs, &Array2::eye(dim)).unwrap();
        for j in 0..4 {
            for k in 0..3 {
                let su: f64 = bu.values.row(j).iter().map(|v| v * v).sum();
                let ss: f64 = bs.values.row(k).iter().map(|v| v * v).sum();
                assert!((var[[j, k]] - su * ss).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dense_oracle_tiny() {
        let bu = small_basis(7, 2, 0.0, 7.0);
        let bs = small_basis(6, 1, 0.0, 6.0);
        let (nu, ns) = (7, 6);
        let w = Array2::from_shape_fn((nu, ns), |(j, k)| ((j * 3 + k * 5) % 7) as f64 + 0.25);
        let b = kron(&bs.values, &bu.values);
        let wv = vec_col_major(&w);
        let dense = b.t().dot(&Array2::from_diag(&wv)).dot(&b);
        let g = inner_product_2d(&bu, &bs, &w).unwrap();
        assert!((&g - &dense).iter().all(|v| v.abs() < 1e-10));
        let phi = row_tensor(&bu);
        let gu = phi.values.t().dot(&w.column(0));
        let dense_u = bu
            .values
            .t()
            .dot(&Array2::from_diag(&w.column(0)))
            .dot(&bu.values);
        let gu = gu.into_shape_with_order((bu.ncols(), bu.ncols())).unwrap();
        assert!((&gu - &dense_u).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn shape_errors() {
        let bu = small_basis(4, 2, 0.0, 4.0);
        let bs = small_basis(3, 2, 0.0, 3.0);
        assert!(inner_product_2d(&bu, &bs, &Array2::zeros((3, 4))).is_err());
        assert!(linear_predictor_2d(&bu, &Array2::zeros((2, 2)), &bs).is_err());
        assert!(variance_diag_2d(&bu, &bs, &Array2::zeros((3, 3))).is_err());
    }
}
