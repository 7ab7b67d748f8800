//! Hazard surfaces over two time scales: tensor-product P-splines fitted by
//! penalized Poisson IWLS, with all products against the tensor basis
//! carried out by the kernels in [`crate::glam`].

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, build_difference_matrix, penalty_gram, BasisMatrix, KnotGrid};
use crate::error::{Error, Result};
use crate::glam::{
    inner_product_2d, linear_predictor_2d, marginal_projection, unvec_col_major, variance_diag_2d,
    variance_pointwise, vec_col_major,
};
use crate::iwls::{accept_step, full_deviance, poisson_deviance, safe_exp, IwlsControl};
use crate::lexis::{transform_ts_to_us, BinGrid, BinnedData2D, Support};
use crate::linalg::{kron, trace_of_product, Cholesky};
use crate::select::{search, RhoEvaluation, RhoStrategy, Scored};

/// Anisotropic difference penalty
/// `P = ρ_u (I ⊗ D_uᵀD_u) + ρ_s (D_sᵀD_s ⊗ I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty2D {
    pub rho_u: f64,
    pub rho_s: f64,
    pub d_u: usize,
    pub d_s: usize,
}

impl Penalty2D {
    pub fn new(rho_u: f64, rho_s: f64, d_u: usize, d_s: usize) -> Result<Self> {
        for rho in [rho_u, rho_s] {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::InvalidRho(rho));
            }
        }
        Ok(Self {
            rho_u,
            rho_s,
            d_u,
            d_s,
        })
    }

    pub fn from_log10(log10_rho_u: f64, log10_rho_s: f64, d_u: usize, d_s: usize) -> Result<Self> {
        Self::new(10f64.powf(log10_rho_u), 10f64.powf(log10_rho_s), d_u, d_s)
    }

    pub fn matrix(&self, c_u: usize, c_s: usize) -> Result<Array2<f64>> {
        let parts = PenaltyParts::new(c_u, c_s, self.d_u, self.d_s)?;
        Ok(parts.combine(self))
    }
}

/// The two unscaled halves of the 2D penalty.
#[derive(Debug, Clone)]
pub(crate) struct PenaltyParts {
    along_u: Array2<f64>,
    along_s: Array2<f64>,
    diff_u: Array2<f64>,
    diff_s: Array2<f64>,
}

impl PenaltyParts {
    pub(crate) fn new(c_u: usize, c_s: usize, d_u: usize, d_s: usize) -> Result<Self> {
        let along_u = kron(&Array2::eye(c_s), &penalty_gram(c_u, d_u)?);
        let along_s = kron(&penalty_gram(c_s, d_s)?, &Array2::eye(c_u));
        Ok(Self {
            along_u,
            along_s,
            diff_u: build_difference_matrix(c_u, d_u)?,
            diff_s: build_difference_matrix(c_s, d_s)?,
        })
    }

    pub(crate) fn combine(&self, penalty: &Penalty2D) -> Array2<f64> {
        &self.along_u * penalty.rho_u + &self.along_s * penalty.rho_s
    }

    /// `αᵀPα` from the differences of `A`.
    pub(crate) fn value(&self, penalty: &Penalty2D, coef: &Array2<f64>) -> f64 {
        let du = self.diff_u.dot(coef);
        let ds = coef.dot(&self.diff_s.t());
        penalty.rho_u * du.iter().map(|v| v * v).sum::<f64>()
            + penalty.rho_s * ds.iter().map(|v| v * v).sum::<f64>()
    }

    /// `Pα`, computed as `Dᵀ(Dα)` per direction. Rounding then stays in the
    /// heavily penalized subspace, which keeps Newton steps accurate when a
    /// `ρ` is huge.
    pub(crate) fn gradient(&self, penalty: &Penalty2D, coef: &Array2<f64>) -> Array1<f64> {
        let gu = self.diff_u.t().dot(&self.diff_u.dot(coef)) * penalty.rho_u;
        let gs = coef.dot(&self.diff_s.t()).dot(&self.diff_s) * penalty.rho_s;
        vec_col_major(&(gu + gs))
    }
}

/// Marginal bases at the bin midpoints of a 2D grid.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    pub knots_u: KnotGrid,
    pub knots_s: KnotGrid,
    pub bu: BasisMatrix,
    pub bs: BasisMatrix,
}

impl TensorBasis {
    pub fn at_midpoints(grid: &BinGrid, knots_u: KnotGrid, knots_s: KnotGrid) -> Result<Self> {
        Ok(Self {
            knots_u,
            knots_s,
            bu: build_basis(&knots_u, &grid.u.midpoints())?,
            bs: build_basis(&knots_s, &grid.s.midpoints())?,
        })
    }

    pub fn c_u(&self) -> usize {
        self.bu.ncols()
    }

    pub fn c_s(&self) -> usize {
        self.bs.ncols()
    }

    pub fn n_coefficients(&self) -> usize {
        self.c_u() * self.c_s()
    }
}

#[derive(Debug, Clone)]
pub struct Fit2DResult {
    /// Coefficients `A`, `c_u x c_s`.
    pub coef: Array2<f64>,
    pub penalty: Penalty2D,
    pub knots_u: KnotGrid,
    pub knots_s: KnotGrid,
    pub grid: BinGrid,
    /// Log-hazard at the bin midpoints, `n_u x n_s`.
    pub eta_hat: Array2<f64>,
    pub mu_hat: Array2<f64>,
    pub aic: f64,
    pub deviance: f64,
    pub ed: f64,
    /// Cholesky factor of `BᵀŴB + P`; its inverse is the coefficient covariance.
    pub system: Cholesky,
    pub converged: bool,
    pub iterations: usize,
    pub support: Support,
}

impl Fit2DResult {
    pub fn cov_alpha(&self) -> Array2<f64> {
        self.system.inverse()
    }

    pub fn alpha(&self) -> Array1<f64> {
        vec_col_major(&self.coef)
    }

    fn basis(&self) -> Result<TensorBasis> {
        TensorBasis::at_midpoints(&self.grid, self.knots_u, self.knots_s)
    }

    /// Standard errors of `η̂` at the bin midpoints.
    pub fn se_eta_hat(&self) -> Result<Array2<f64>> {
        let basis = self.basis()?;
        let var = variance_diag_2d(&basis.bu, &basis.bs, &self.cov_alpha())?;
        Ok(var.mapv(|v| v.max(0.0).sqrt()))
    }
}

/// Precomputed bases and penalty halves for repeated fits of one data set.
#[derive(Debug, Clone)]
pub struct Smoother2D {
    data: BinnedData2D,
    basis: TensorBasis,
    parts: PenaltyParts,
    orders: (usize, usize),
}

impl Smoother2D {
    pub fn new(
        data: &BinnedData2D,
        knots_u: KnotGrid,
        knots_s: KnotGrid,
        d_u: usize,
        d_s: usize,
    ) -> Result<Self> {
        if data.total_events() <= 0.0 {
            return Err(Error::NoEvents);
        }
        let basis = TensorBasis::at_midpoints(&data.grid, knots_u, knots_s)?;
        let parts = PenaltyParts::new(basis.c_u(), basis.c_s(), d_u, d_s)?;
        Ok(Self {
            data: data.clone(),
            basis,
            parts,
            orders: (d_u, d_s),
        })
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn data(&self) -> &BinnedData2D {
        &self.data
    }

    pub fn penalty_matrix(&self, penalty: &Penalty2D) -> Array2<f64> {
        self.parts.combine(penalty)
    }

    fn check_orders(&self, penalty: &Penalty2D) -> Result<()> {
        if (penalty.d_u, penalty.d_s) != self.orders {
            return Err(Error::InvalidConfig(format!(
                "penalty orders {:?} differ from the smoother's {:?}",
                (penalty.d_u, penalty.d_s),
                self.orders
            )));
        }
        Ok(())
    }

    /// Exposure-weighted penalized least-squares projection of
    /// `ln((Y + 0.5) / (R + ε))`.
    pub fn initial_coefficients(&self, p: &Array2<f64>) -> Result<Array2<f64>> {
        let (y, r) = (&self.data.y, &self.data.r);
        let rmax = r.iter().copied().fold(0.0, f64::max);
        let w = r.mapv(|v| v / rmax);
        let eta0 = ndarray::Zip::from(y)
            .and(r)
            .map_collect(|&y, &r| ((y + 0.5) / (r + 1e-10)).ln());
        let b = &self.basis;
        let g = inner_product_2d(&b.bu, &b.bs, &w)? + p;
        let rhs = vec_col_major(&marginal_projection(&b.bu, &(&w * &eta0), &b.bs)?);
        let alpha = Cholesky::factor(&g)?.solve(rhs.view());
        Ok(unvec_col_major(&alpha, b.c_u(), b.c_s()))
    }

    fn mu(&self, eta: &Array2<f64>) -> Array2<f64> {
        ndarray::Zip::from(&self.data.r)
            .and(eta)
            .map_collect(|&r, &e| r * safe_exp(e))
    }

    pub fn fit(
        &self,
        penalty: &Penalty2D,
        control: &IwlsControl,
        start: Option<&Array2<f64>>,
    ) -> Result<Fit2DResult> {
        self.check_orders(penalty)?;
        let b = &self.basis;
        let (cu, cs) = (b.c_u(), b.c_s());
        let p = self.penalty_matrix(penalty);
        let y = &self.data.y;
        let mut coef = match start {
            Some(a) if a.dim() == (cu, cs) => a.clone(),
            _ => self.initial_coefficients(&p)?,
        };
        let mut alpha = vec_col_major(&coef);
        let objective = |coef: &Array2<f64>, mu: &Array2<f64>| {
            full_deviance(y.iter().zip(mu.iter())) + self.parts.value(penalty, coef)
        };
        let mut eta = linear_predictor_2d(&b.bu, &coef, &b.bs)?;
        let mut mu = self.mu(&eta);
        let mut current = objective(&coef, &mu);
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=control.max_iter {
            iterations = it;
            let g = inner_product_2d(&b.bu, &b.bs, &mu)? + &p;
            let score = vec_col_major(&marginal_projection(&b.bu, &(y - &mu), &b.bs)?)
                - self.parts.gradient(penalty, &coef);
            let step = Cholesky::factor(&g)?.solve(score.view());
            let mut scale = 1.0;
            let mut halvings = 0;
            let candidate = loop {
                let cand = &alpha + &(&step * scale);
                let cand_coef = unvec_col_major(&cand, cu, cs);
                let eta_c = linear_predictor_2d(&b.bu, &cand_coef, &b.bs)?;
                let mu_c = self.mu(&eta_c);
                let obj_c = objective(&cand_coef, &mu_c);
                if accept_step(obj_c, current) || halvings == control.max_halvings {
                    eta = eta_c;
                    mu = mu_c;
                    current = obj_c;
                    coef = cand_coef;
                    break cand;
                }
                scale *= 0.5;
                halvings += 1;
            };
            let change = (&candidate - &alpha)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            alpha = candidate;
            if change < control.tol {
                converged = true;
                break;
            }
        }
        let g0 = inner_product_2d(&b.bu, &b.bs, &mu)?;
        let system = Cholesky::factor(&(&g0 + &p))?;
        let ed = trace_of_product(&system.inverse(), &g0);
        let deviance = poisson_deviance(y.iter().zip(mu.iter()));
        Ok(Fit2DResult {
            coef,
            penalty: *penalty,
            knots_u: b.knots_u,
            knots_s: b.knots_s,
            grid: self.data.grid,
            eta_hat: eta,
            mu_hat: mu,
            aic: deviance + 2.0 * ed,
            deviance,
            ed,
            system,
            converged,
            iterations,
            support: self.data.support.clone(),
        })
    }
}

pub fn fit_2d(
    data: &BinnedData2D,
    knots: (KnotGrid, KnotGrid),
    penalty: &Penalty2D,
    control: &IwlsControl,
) -> Result<Fit2DResult> {
    Smoother2D::new(data, knots.0, knots.1, penalty.d_u, penalty.d_s)?.fit(penalty, control, None)
}

#[derive(Debug, Clone)]
pub struct Selection2D {
    pub best: Fit2DResult,
    pub trace: Vec<RhoEvaluation>,
    pub boundary_warning: bool,
}

/// Minimizes AIC over `(log10 ρ_u, log10 ρ_s)`. With `warm_start`, each fit
/// starts from the coefficients of the previous evaluation.
pub fn select_rho_2d(
    data: &BinnedData2D,
    knots: (KnotGrid, KnotGrid),
    orders: (usize, usize),
    strategy: &RhoStrategy,
    control: &IwlsControl,
    warm_start: bool,
) -> Result<Selection2D> {
    let smoother = Smoother2D::new(data, knots.0, knots.1, orders.0, orders.1)?;
    let mut previous: Option<Array2<f64>> = None;
    let outcome = search(strategy, |lu, ls| {
        let penalty = Penalty2D::from_log10(lu, ls, orders.0, orders.1)?;
        let start = if warm_start { previous.as_ref() } else { None };
        let fit = smoother.fit(&penalty, control, start)?;
        if warm_start {
            previous = Some(fit.coef.clone());
        }
        Ok(Scored {
            aic: fit.aic,
            ed: fit.ed,
            converged: fit.converged,
            fit,
        })
    })?;
    Ok(Selection2D {
        best: outcome.best,
        trace: outcome.trace,
        boundary_warning: outcome.boundary_warning,
    })
}

/// Evaluation point in either coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coordinates {
    Us { u: f64, s: f64 },
    Ts { t: f64, s: f64 },
}

impl Coordinates {
    pub fn to_us(self) -> Result<(f64, f64)> {
        match self {
            Coordinates::Us { u, s } => Ok((u, s)),
            Coordinates::Ts { t, s } => transform_ts_to_us(t, s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prediction2D {
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub eta: Array1<f64>,
    pub lambda: Array1<f64>,
    pub se_eta: Array1<f64>,
    pub extrapolated: Vec<bool>,
}

/// Bases at arbitrary `(u, s)` points, one row per point.
pub(crate) fn point_bases(
    knots_u: &KnotGrid,
    knots_s: &KnotGrid,
    points: &[Coordinates],
) -> Result<(Vec<f64>, Vec<f64>, BasisMatrix, BasisMatrix)> {
    let us = points
        .iter()
        .map(|p| p.to_us())
        .collect::<Result<Vec<_>>>()?;
    let u: Vec<f64> = us.iter().map(|p| p.0).collect();
    let s: Vec<f64> = us.iter().map(|p| p.1).collect();
    let bu = build_basis(knots_u, &u)?;
    let bs = build_basis(knots_s, &s)?;
    Ok((u, s, bu, bs))
}

pub(crate) fn pointwise_eta(bu: &BasisMatrix, bs: &BasisMatrix, coef: &Array2<f64>) -> Array1<f64> {
    let left = bu.values.dot(coef);
    Array1::from_shape_fn(bu.nrows(), |i| left.row(i).dot(&bs.values.row(i)))
}

pub fn predict_2d(fit: &Fit2DResult, points: &[Coordinates]) -> Result<Prediction2D> {
    let (u, s, bu, bs) = point_bases(&fit.knots_u, &fit.knots_s, points)?;
    let eta = pointwise_eta(&bu, &bs, &fit.coef);
    let var = variance_pointwise(&bu, &bs, &fit.cov_alpha())?;
    let extrapolated = u
        .iter()
        .zip(&s)
        .map(|(&u, &s)| fit.support.is_extrapolated(&fit.grid, u, s))
        .collect();
    Ok(Prediction2D {
        lambda: eta.mapv(f64::exp),
        se_eta: var.mapv(|v| v.max(0.0).sqrt()),
        eta,
        u,
        s,
        extrapolated,
    })
}

/// All bin midpoints of the fit's grid, `u` varying fastest.
pub fn midpoint_coordinates(grid: &BinGrid) -> Vec<Coordinates> {
    let mu = grid.u.midpoints();
    grid.s
        .midpoints()
        .into_iter()
        .flat_map(|s| mu.iter().map(move |&u| Coordinates::Us { u, s }))
        .collect()
}
