//! B-spline bases on equally spaced knots and difference penalties.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_PENALTY_ORDER: usize = 2;

/// Equally spaced knots over `[domain_lo, domain_hi]`, extended by `degree`
/// knots on either side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub n_segments: usize,
    pub degree: usize,
}

impl KnotGrid {
    pub fn new(domain_lo: f64, domain_hi: f64, n_segments: usize, degree: usize) -> Result<Self> {
        if !domain_lo.is_finite() || !domain_hi.is_finite() || domain_lo >= domain_hi {
            return Err(Error::InvalidKnotGrid(format!(
                "domain [{domain_lo}, {domain_hi}] is empty or not finite"
            )));
        }
        if n_segments == 0 {
            return Err(Error::InvalidKnotGrid("n_segments must be positive".into()));
        }
        Ok(Self {
            domain_lo,
            domain_hi,
            n_segments,
            degree,
        })
    }

    pub fn cubic(domain_lo: f64, domain_hi: f64, n_segments: usize) -> Result<Self> {
        Self::new(domain_lo, domain_hi, n_segments, DEFAULT_DEGREE)
    }

    pub fn spacing(&self) -> f64 {
        (self.domain_hi - self.domain_lo) / self.n_segments as f64
    }

    /// Number of basis functions, `n_segments + degree`.
    pub fn n_basis(&self) -> usize {
        self.n_segments + self.degree
    }

    /// Knot `k` of the extended sequence; knot `degree` is `domain_lo`.
    pub fn knot(&self, k: usize) -> f64 {
        self.domain_lo + (k as f64 - self.degree as f64) * self.spacing()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.domain_lo && x <= self.domain_hi
    }

    /// Segment used to evaluate `x`; points outside the domain use the
    /// boundary segment, which extends its polynomial pieces.
    fn segment(&self, x: f64) -> usize {
        let raw = ((x - self.domain_lo) / self.spacing()).floor();
        if raw < 0.0 {
            0
        } else {
            (raw as usize).min(self.n_segments - 1)
        }
    }

    /// Nonzero basis values at `x`: returns the index of the first nonzero
    /// function and the `degree + 1` values starting there.
    pub fn eval_band(&self, x: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        let seg = self.segment(x);
        let span = seg + p;
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knot(span + 1 - j);
            right[j] = self.knot(span + j) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (seg, values)
    }
}

/// B-spline basis evaluated at a set of points.
///
/// Row `j` is nonzero only in columns `first[j] .. first[j] + degree + 1`.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: Array2<f64>,
    pub points: Array1<f64>,
    first: Vec<usize>,
    degree: usize,
}

impl BasisMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn band_width(&self) -> usize {
        self.degree + 1
    }

    /// First nonzero column of row `j`.
    pub fn band_start(&self, j: usize) -> usize {
        self.first[j]
    }

    /// `(first column, values)` of the nonzero band of row `j`.
    pub fn band(&self, j: usize) -> (usize, ArrayView1<'_, f64>) {
        let start = self.first[j];
        let row = self.values.row(j);
        (
            start,
            row.slice_move(ndarray::s![start..start + self.degree + 1]),
        )
    }

    /// Builds a basis matrix from dense values, detecting each row's band.
    /// Used for hand-made bases in tests; every row must fit in a band of
    /// `degree + 1` columns.
    pub fn from_dense(values: Array2<f64>, degree: usize) -> Result<Self> {
        let (n, c) = values.dim();
        if degree + 1 > c {
            return Err(Error::DimensionMismatch {
                context: "basis band",
                expected: format!("at least {} columns", degree + 1),
                found: c.to_string(),
            });
        }
        let mut first = Vec::with_capacity(n);
        for (j, row) in values.rows().into_iter().enumerate() {
            let nz: Vec<usize> = (0..c).filter(|&l| row[l] != 0.0).collect();
            let start = match (nz.first(), nz.last()) {
                (Some(&a), Some(&b)) => {
                    if b - a > degree {
                        return Err(Error::DimensionMismatch {
                            context: "basis band",
                            expected: format!("row {j} within {} columns", degree + 1),
                            found: format!("{} columns", b - a + 1),
                        });
                    }
                    a.min(c - degree - 1)
                }
                _ => 0,
            };
            first.push(start);
        }
        Ok(Self {
            points: Array1::from_elem(n, f64::NAN),
            values,
            first,
            degree,
        })
    }
}

/// Evaluates all `n_basis` B-splines of `grid` at `points`.
pub fn build_basis(grid: &KnotGrid, points: &[f64]) -> Result<BasisMatrix> {
    let c = grid.n_basis();
    let mut values = Array2::<f64>::zeros((points.len(), c));
    let mut first = Vec::with_capacity(points.len());
    for (j, &x) in points.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinitePoint { index: j, value: x });
        }
        let (start, band) = grid.eval_band(x);
        for (offset, v) in band.into_iter().enumerate() {
            values[[j, start + offset]] = v;
        }
        first.push(start);
    }
    Ok(BasisMatrix {
        values,
        points: Array1::from(points.to_vec()),
        first,
        degree: grid.degree,
    })
}

/// Difference matrix of order `order` for `size` coefficients, with
/// dimension `(size - order) x size`.
pub fn build_difference_matrix(size: usize, order: usize) -> Result<Array2<f64>> {
    if order == 0 {
        return Err(Error::ZeroPenaltyOrder);
    }
    if order >= size {
        return Err(Error::PenaltyOrderTooHigh { order, size });
    }
    let mut d = Array2::<f64>::eye(size);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        let mut next = Array2::<f64>::zeros((rows, size));
        for i in 0..rows {
            let diff = &d.row(i + 1) - &d.row(i);
            next.row_mut(i).assign(&diff);
        }
        d = next;
    }
    Ok(d)
}

/// `Dᵀ D` for the difference matrix of the given order.
pub fn penalty_gram(size: usize, order: usize) -> Result<Array2<f64>> {
    let d = build_difference_matrix(size, order)?;
    Ok(d.t().dot(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degree_zero_is_indicator() {
        let grid = KnotGrid::new(0.0, 4.0, 4, 0).unwrap();
        let b = build_basis(&grid, &[1.5]).unwrap();
        assert_eq!(b.values.row(0).to_vec(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn cubic_at_interior_knot() {
        let grid = KnotGrid::cubic(0.0, 10.0, 10).unwrap();
        let b = build_basis(&grid, &[4.0]).unwrap();
        let row = b.values.row(0);
        let nz: Vec<f64> = row.iter().copied().filter(|v| v.abs() > 1e-15).collect();
        assert_eq!(nz.len(), 3);
        assert!((nz[0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((nz[1] - 4.0 / 6.0).abs() < 1e-14);
        assert!((nz[2] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn domain_endpoints_sum_to_one() {
        let grid = KnotGrid::cubic(2.0, 7.0, 5).unwrap();
        let b = build_basis(&grid, &[2.0, 7.0]).unwrap();
        for row in b.values.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn extrapolation_extends_boundary_polynomials() {
        let grid = KnotGrid::cubic(0.0, 10.0, 5).unwrap();
        // Coefficients on a line reproduce the line, inside and outside.
        let c = grid.n_basis();
        let coef: Vec<f64> = (0..c).map(|l| 1.0 + 0.5 * l as f64).collect();
        let a = Array1::from(coef);
        let pts = [-3.0, 0.0, 5.0, 10.0, 14.0];
        let b = build_basis(&grid, &pts).unwrap();
        let eta = b.values.dot(&a);
        let h = grid.spacing();
        for (x, e) in pts.iter().zip(eta.iter()) {
            // Greville abscissa of coefficient l is knot(l+1)+.. ; line in x:
            let expected = 1.0 + 0.5 * ((x - grid.knot(0)) / h - 2.0);
            assert!((e - expected).abs() < 1e-10, "{x}: {e} vs {expected}");
        }
        for row in b.values.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_point_rejected() {
        let grid = KnotGrid::cubic(0.0, 1.0, 4).unwrap();
        let err = build_basis(&grid, &[0.1, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinitePoint { index: 1, .. }));
    }

    #[test]
    fn first_and_second_differences() {
        let d1 = build_difference_matrix(4, 1).unwrap();
        assert_eq!(
            d1,
            ndarray::array![
                [-1.0, 1.0, 0.0, 0.0],
                [0.0, -1.0, 1.0, 0.0],
                [0.0, 0.0, -1.0, 1.0]
            ]
        );
        let d2 = build_difference_matrix(5, 2).unwrap();
        assert_eq!(d2.dim(), (3, 5));
        assert_eq!(d2.row(0).to_vec(), vec![1.0, -2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn order_too_high() {
        let err = build_difference_matrix(3, 3).unwrap_err();
        assert_eq!(
            err.to_string(),
            "penalty order too high for basis size (order 3, 3 basis functions)"
        );
    }

    #[test]
    fn difference_is_product_of_first_differences() {
        let c = 9;
        for d in 1..5 {
            let mut prod = build_difference_matrix(c - d + 1, 1).unwrap();
            for k in (1..d).rev() {
                prod = prod.dot(&build_difference_matrix(c - k + 1, 1).unwrap());
            }
            assert_eq!(prod, build_difference_matrix(c, d).unwrap());
        }
    }

    #[test]
    fn local_support() {
        let grid = KnotGrid::cubic(0.0, 8.0, 8).unwrap();
        let pts: Vec<f64> = (0..=160).map(|i| i as f64 * 0.05).collect();
        let b = build_basis(&grid, &pts).unwrap();
        for (j, &x) in pts.iter().enumerate() {
            for l in 0..grid.n_basis() {
                let inside = x >= grid.knot(l) && x <= grid.knot(l + 4);
                if !inside {
                    assert_eq!(b.values[[j, l]], 0.0, "x={x} l={l}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(
            lo in -50.0f64..50.0,
            width in 0.1f64..100.0,
            nseg in 1usize..30,
            degree in 0usize..5,
            frac in proptest::collection::vec(0.0f64..=1.0, 1..40),
        ) {
            let grid = KnotGrid::new(lo, lo + width, nseg, degree).unwrap();
            let pts: Vec<f64> = frac.iter().map(|f| lo + f * width).collect();
            let b = build_basis(&grid, &pts).unwrap();
            for (j, row) in b.values.rows().into_iter().enumerate() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&v| v >= -1e-14));
                let nnz = row.iter().filter(|v| v.abs() > 0.0).count();
                prop_assert!(nnz <= degree + 1);
                let (start, band) = b.band(j);
                prop_assert!((band.sum() - 1.0).abs() < 1e-12);
                prop_assert!(start + degree < grid.n_basis());
            }
        }

        #[test]
        fn second_differences_annihilate_lines(a in -10.0f64..10.0, b in -10.0f64..10.0, c in 3usize..20) {
            let d = build_difference_matrix(c, 2).unwrap();
            let v = Array1::from((1..=c).map(|j| a + b * j as f64).collect::<Vec<_>>());
            let out = d.dot(&v);
            prop_assert!(out.iter().all(|x| x.abs() < 1e-9));
        }
    }
}
