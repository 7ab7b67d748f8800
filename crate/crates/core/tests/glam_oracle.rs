mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smoothhaz::basis::KnotGrid;
use smoothhaz::fit2d::{Penalty2D, Smoother2D};
use smoothhaz::glam::{
    inner_product_2d, linear_predictor_2d, marginal_projection, variance_diag_2d,
};
use smoothhaz::iwls::IwlsControl;
use smoothhaz::lexis::{BinAxis, BinGrid, BinnedData2D};
use smoothhaz::linalg::Cholesky;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_match_kronecker_algebra(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nu = 1 + (seed % 8) as usize;
        let ns = 1 + ((seed / 8) % 8) as usize;
        let bu = random_basis(&mut rng, nu, 5);
        let bs = random_basis(&mut rng, ns, 5);
        let b = dense_tensor(&bu, &bs);
        let w = random_matrix(&mut rng, nu, ns, 0.0, 2.0);
        let a = random_matrix(&mut rng, bu.ncols(), bs.ncols(), -1.0, 1.0);
        let v = random_spd(&mut rng, bu.ncols() * bs.ncols());

        let weighted = &b * &vec_cm(&w).view().insert_axis(ndarray::Axis(1));
        prop_assert!(max_abs_diff(&inner_product_2d(&bu, &bs, &w).unwrap(), &b.t().dot(&weighted)) < 1e-10);
        prop_assert!(max_abs_diff(&vec_cm(&marginal_projection(&bu, &w, &bs).unwrap()), &b.t().dot(&vec_cm(&w))) < 1e-10);
        prop_assert!(max_abs_diff(&vec_cm(&linear_predictor_2d(&bu, &a, &bs).unwrap()), &b.dot(&vec_cm(&a))) < 1e-10);
        let dense_var = (&b.dot(&v) * &b).sum_axis(ndarray::Axis(1));
        prop_assert!(max_abs_diff(&vec_cm(&variance_diag_2d(&bu, &bs, &v).unwrap()), &dense_var) < 1e-10);
    }
}

/// Plain Newton iterations on the explicit tensor-product design.
fn dense_fit(data: &BinnedData2D, smoother: &Smoother2D, pen: &Penalty2D) -> ndarray::Array1<f64> {
    let basis = smoother.basis();
    let b = dense_tensor(&basis.bu, &basis.bs);
    let p = pen.matrix(basis.c_u(), basis.c_s()).unwrap();
    let y = vec_cm(&data.y);
    let r = vec_cm(&data.r);
    let mut alpha = vec_cm(&smoother.initial_coefficients(&p).unwrap());
    for _ in 0..200 {
        let eta = b.dot(&alpha);
        let mu = &r * &eta.mapv(f64::exp);
        let g = b.t().dot(&(&b * &mu.view().insert_axis(ndarray::Axis(1)))) + &p;
        let rhs = b.t().dot(&(&(&mu * &eta) + &(&y - &mu)));
        let next = Cholesky::factor(&g).unwrap().solve(rhs.view());
        let change = max_abs_diff(&next, &alpha);
        alpha = next;
        if change < 1e-13 {
            break;
        }
    }
    alpha
}

#[test]
fn glam_fit_matches_dense_fit() {
    for (nu, ns, su, ss) in [(10, 10, 2, 2), (6, 9, 1, 2), (10, 4, 2, 1), (3, 3, 1, 1)] {
        let grid = BinGrid {
            u: BinAxis::new(0.0, 1.0, nu).unwrap(),
            s: BinAxis::new(0.0, 1.0, ns).unwrap(),
        };
        let r = Array2::from_shape_fn((nu, ns), |(j, k)| 10.0 + ((3 * j + 5 * k) % 7) as f64);
        let y = Array2::from_shape_fn((nu, ns), |(j, k)| ((j * k + j) % 4) as f64);
        let data = BinnedData2D::new(grid, y, r).unwrap();
        let ku = KnotGrid::cubic(0.0, nu as f64, su).unwrap();
        let ks = KnotGrid::cubic(0.0, ns as f64, ss).unwrap();
        let smoother = Smoother2D::new(&data, ku, ks, 2, 2).unwrap();
        let pen = Penalty2D::new(0.8, 2.5, 2, 2).unwrap();
        let control = IwlsControl {
            tol: 1e-12,
            ..Default::default()
        };
        let fit = smoother.fit(&pen, &control, None).unwrap();
        let dense = dense_fit(&data, &smoother, &pen);
        let diff = max_abs_diff(&fit.alpha(), &dense);
        assert!(diff < 1e-8, "{nu}x{ns}: {diff}");
    }
}
