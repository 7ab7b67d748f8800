//! Dense symmetric positive definite solves for the penalized normal
//! equations. The systems here have at most a few hundred unknowns, so a
//! plain row-oriented Cholesky factorization is sufficient.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "cholesky",
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        let mut l = Array2::<f64>::zeros((n, n));
        let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[[i, j]];
                {
                    let li = l.row(i);
                    let lj = l.row(j);
                    let li = li.as_slice().unwrap();
                    let lj = lj.as_slice().unwrap();
                    for k in 0..j {
                        sum -= li[k] * lj[k];
                    }
                }
                if i == j {
                    if !(sum > scale * 1e-15) || !sum.is_finite() {
                        let condition = if sum > 0.0 {
                            max_pivot.max(sum) / sum.min(min_pivot)
                        } else {
                            f64::INFINITY
                        };
                        return Err(Error::Singular {
                            pivot: i,
                            value: sum,
                            condition,
                        });
                    }
                    min_pivot = min_pivot.min(sum);
                    max_pivot = max_pivot.max(sum);
                    l[[i, i]] = sum.sqrt();
                } else {
                    l[[i, j]] = sum / l[[j, j]];
                }
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor_matrix(&self) -> &Array2<f64> {
        &self.l
    }

    /// Ratio of the largest to the smallest squared pivot.
    pub fn condition_estimate(&self) -> f64 {
        let d = self.l.diag();
        let max = d.iter().fold(0.0f64, |m, &v| m.max(v * v));
        let min = d.iter().fold(f64::INFINITY, |m, &v| m.min(v * v));
        max / min
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut z = b.to_owned();
        for i in 0..n {
            let row = self.l.row(i);
            let row = row.as_slice().unwrap();
            let mut sum = z[i];
            for k in 0..i {
                sum -= row[k] * z[k];
            }
            z[i] = sum / row[i];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn backward(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut x = z.to_owned();
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in i + 1..n {
                sum -= self.l[[k, i]] * x[k];
            }
            x[i] = sum / self.l[[i, i]];
        }
        x
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let z = self.forward(b);
        self.backward(z.view())
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            out.column_mut(j).assign(&self.solve(col));
        }
        out
    }

    /// `bᵀ A⁻¹ b`, computed as `‖L⁻¹ b‖²`.
    pub fn inverse_quadratic(&self, b: ArrayView1<f64>) -> f64 {
        self.forward(b).iter().map(|v| v * v).sum()
    }

    /// Explicit inverse `A⁻¹ = L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.dim();
        // Row i of `u` holds column i of L⁻¹, which is zero before index i.
        let mut u = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let mut col = vec![0.0; n];
            col[i] = 1.0 / self.l[[i, i]];
            for r in i + 1..n {
                let row = self.l.row(r);
                let row = row.as_slice().unwrap();
                let mut sum = 0.0;
                for k in i..r {
                    sum -= row[k] * col[k];
                }
                col[r] = sum / row[r];
            }
            u.row_mut(i).assign(&Array1::from(col));
        }
        let mut inv = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let ui = u.row(i);
            let ui = ui.as_slice().unwrap();
            for j in 0..=i {
                let uj = u.row(j);
                let uj = uj.as_slice().unwrap();
                let start = i.max(j);
                let mut sum = 0.0;
                for k in start..n {
                    sum += ui[k] * uj[k];
                }
                inv[[i, j]] = sum;
                inv[[j, i]] = sum;
            }
        }
        inv
    }
}

/// `tr(A B)` for symmetric `A`, `B` of equal shape.
pub fn trace_of_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `tr(X (XᵀX + RᵀR)⁻¹ Xᵀ)` from a Householder QR of the stacked `[X; R]`.
///
/// This is the squared norm of the `X` rows of the orthogonal factor, so it
/// stays accurate when `RᵀR` dwarfs `XᵀX`, unlike the trace of an explicit
/// inverse.
pub fn hat_trace(x: &Array2<f64>, r: &Array2<f64>) -> f64 {
    let c = x.ncols();
    let n = x.nrows();
    let mut a =
        ndarray::concatenate(ndarray::Axis(0), &[x.view(), r.view()]).expect("equal column counts");
    let m = a.nrows();
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(c);
    for k in 0..c.min(m) {
        let mut v = a.slice(ndarray::s![k.., k]).to_owned();
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            reflectors.push(Array1::zeros(m - k));
            continue;
        }
        v[0] += if v[0] >= 0.0 { norm } else { -norm };
        let vnorm = v.dot(&v).sqrt();
        v /= vnorm;
        let mut block = a.slice_mut(ndarray::s![k.., k..]);
        let proj = v.dot(&block);
        for (i, &vi) in v.iter().enumerate() {
            block.row_mut(i).scaled_add(-2.0 * vi, &proj);
        }
        reflectors.push(v);
    }
    // Thin Q: apply the reflectors in reverse to the first c unit columns.
    let mut q = Array2::<f64>::zeros((m, c));
    for k in 0..c.min(m) {
        q[[k, k]] = 1.0;
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        let mut block = q.slice_mut(ndarray::s![k.., ..]);
        let proj = v.dot(&block);
        for (i, &vi) in v.iter().enumerate() {
            block.row_mut(i).scaled_add(-2.0 * vi, &proj);
        }
    }
    q.slice(ndarray::s![..n, ..]).iter().map(|v| v * v).sum()
}

/// Dense Kronecker product, used for penalty construction and by test oracles.
pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let v = a[[i, j]];
            if v == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = v * b[[k, l]];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spd(n: usize) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = ((i * 7 + j * 3) % 5) as f64 * 0.1;
            }
        }
        let mut a = m.t().dot(&m);
        for i in 0..n {
            a[[i, i]] += 1.0;
        }
        a
    }

    #[test]
    fn solve_and_inverse_agree() {
        let a = spd(7);
        let chol = Cholesky::factor(&a).unwrap();
        let inv = chol.inverse();
        let eye = a.dot(&inv);
        for i in 0..7 {
            for j in 0..7 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - target).abs() < 1e-12);
            }
        }
        let b = Array1::from((0..7).map(|v| v as f64).collect::<Vec<_>>());
        let x = chol.solve(b.view());
        assert!((a.dot(&x) - &b).iter().all(|v| v.abs() < 1e-12));
        let q = chol.inverse_quadratic(b.view());
        assert!((q - b.dot(&inv.dot(&b))).abs() < 1e-10);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        match Cholesky::factor(&a) {
            Err(Error::Singular { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hat_trace_matches_explicit_inverse() {
        let x = array![
            [1.0, 0.5, 0.0],
            [0.2, 1.0, 0.3],
            [0.0, 0.4, 1.0],
            [0.7, 0.1, 0.2]
        ];
        let r = array![[1.0, -2.0, 1.0]] * 3.0;
        let g = x.t().dot(&x) + r.t().dot(&r);
        let explicit = trace_of_product(&Cholesky::factor(&g).unwrap().inverse(), &x.t().dot(&x));
        assert!((hat_trace(&x, &r) - explicit).abs() < 1e-12);
    }

    #[test]
    fn kron_layout() {
        let a = array![[1.0, 2.0]];
        let b = array![[1.0], [3.0]];
        assert_eq!(kron(&a, &b), array![[1.0, 2.0], [3.0, 6.0]]);
    }
}
