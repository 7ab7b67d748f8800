//! Smooth hazard along one time scale.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::basis::{build_basis, build_difference_matrix, BasisMatrix, KnotGrid};
use crate::error::{Error, Result};
use crate::iwls::{accept_step, full_deviance, poisson_deviance, safe_exp, IwlsControl};
use crate::lexis::BinnedData1D;
use crate::linalg::{hat_trace, Cholesky};

#[derive(Debug, Clone)]
pub struct Fit1DResult {
    pub alpha: Array1<f64>,
    pub rho: f64,
    pub order: usize,
    pub knots: KnotGrid,
    /// Log-hazard at the bin midpoints.
    pub eta_hat: Array1<f64>,
    /// Expected counts at the bin midpoints.
    pub mu_hat: Array1<f64>,
    pub aic: f64,
    pub deviance: f64,
    pub ed: f64,
    pub cov_alpha: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest exit time in the data; predictions beyond it are flagged.
    pub max_exit: f64,
}

impl Fit1DResult {
    pub fn n_coefficients(&self) -> usize {
        self.alpha.len()
    }
}

/// Precomputed basis and penalty for repeated fits of one data set.
#[derive(Debug, Clone)]
pub struct Smoother1D {
    data: BinnedData1D,
    knots: KnotGrid,
    order: usize,
    basis: BasisMatrix,
    d: Array2<f64>,
    dtd: Array2<f64>,
}

fn weighted_gram(b: &Array2<f64>, w: &Array1<f64>) -> Array2<f64> {
    let bw = b * &w.view().insert_axis(Axis(1));
    bw.t().dot(b)
}

impl Smoother1D {
    pub fn new(data: &BinnedData1D, knots: KnotGrid, order: usize) -> Result<Self> {
        if data.y.sum() <= 0.0 {
            return Err(Error::NoEvents);
        }
        let basis = build_basis(&knots, &data.axis.midpoints())?;
        let d = build_difference_matrix(knots.n_basis(), order)?;
        let dtd = d.t().dot(&d);
        Ok(Self {
            data: data.clone(),
            knots,
            order,
            basis,
            d,
            dtd,
        })
    }

    pub fn basis(&self) -> &BasisMatrix {
        &self.basis
    }

    pub fn penalty_gram(&self) -> &Array2<f64> {
        &self.dtd
    }

    /// Penalized least-squares projection of `ln((y + 0.5) / (r + ε))`,
    /// weighted by relative exposure so empty bins carry no weight.
    pub fn initial_coefficients(&self, rho: f64) -> Result<Array1<f64>> {
        let y = &self.data.y;
        let r = &self.data.r;
        let eta0 = Array1::from_shape_fn(y.len(), |j| ((y[j] + 0.5) / (r[j] + 1e-10)).ln());
        let rmax = r.iter().copied().fold(0.0, f64::max);
        let w = r.mapv(|v| v / rmax);
        let b = &self.basis.values;
        let g = weighted_gram(b, &w) + &(&self.dtd * rho);
        let rhs = b.t().dot(&(&w * &eta0));
        Ok(Cholesky::factor(&g)?.solve(rhs.view()))
    }

    fn mu(&self, eta: &Array1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(eta.len(), |j| self.data.r[j] * safe_exp(eta[j]))
    }

    fn objective(&self, alpha: &Array1<f64>, mu: &Array1<f64>, rho: f64) -> f64 {
        let pen = self.d.dot(alpha).iter().map(|v| v * v).sum::<f64>();
        full_deviance(self.data.y.iter().zip(mu.iter())) + rho * pen
    }

    pub fn fit(
        &self,
        rho: f64,
        control: &IwlsControl,
        start: Option<&Array1<f64>>,
    ) -> Result<Fit1DResult> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidRho(rho));
        }
        let b = &self.basis.values;
        let y = &self.data.y;
        let penalty = &self.dtd * rho;
        let mut alpha = match start {
            Some(a) if a.len() == b.ncols() => a.clone(),
            _ => self.initial_coefficients(rho)?,
        };
        let mut eta = b.dot(&alpha);
        let mut mu = self.mu(&eta);
        let mut objective = self.objective(&alpha, &mu, rho);
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=control.max_iter {
            iterations = it;
            let g = weighted_gram(b, &mu) + &penalty;
            // Newton increment, with the penalty term as `ρDᵀ(Dα)` so that
            // rounding stays small at huge `ρ`.
            let score = b.t().dot(&(y - &mu)) - self.d.t().dot(&self.d.dot(&alpha)) * rho;
            let step = Cholesky::factor(&g)?.solve(score.view());
            let mut scale = 1.0;
            let mut candidate;
            let mut halvings = 0;
            loop {
                candidate = &alpha + &(&step * scale);
                let eta_c = b.dot(&candidate);
                let mu_c = self.mu(&eta_c);
                let obj_c = self.objective(&candidate, &mu_c, rho);
                if accept_step(obj_c, objective) || halvings == control.max_halvings {
                    eta = eta_c;
                    mu = mu_c;
                    objective = obj_c;
                    break;
                }
                scale *= 0.5;
                halvings += 1;
            }
            let change = (&candidate - &alpha)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            alpha = candidate;
            if change < control.tol {
                converged = true;
                break;
            }
        }
        let g0 = weighted_gram(b, &mu);
        let g = &g0 + &penalty;
        let cov_alpha = Cholesky::factor(&g)?.inverse();
        let root_w = mu.mapv(f64::sqrt);
        let ed = hat_trace(
            &(b * &root_w.view().insert_axis(Axis(1))),
            &(&self.d * rho.sqrt()),
        );
        let deviance = poisson_deviance(y.iter().zip(mu.iter()));
        Ok(Fit1DResult {
            alpha,
            rho,
            order: self.order,
            knots: self.knots,
            eta_hat: eta,
            mu_hat: mu,
            aic: deviance + 2.0 * ed,
            deviance,
            ed,
            cov_alpha,
            converged,
            iterations,
            max_exit: self.data.max_exit,
        })
    }
}

pub fn fit_1d(
    data: &BinnedData1D,
    knots: KnotGrid,
    order: usize,
    rho: f64,
    control: &IwlsControl,
) -> Result<Fit1DResult> {
    Smoother1D::new(data, knots, order)?.fit(rho, control, None)
}

/// `log10 ρ` from −2 to 6 in steps of 0.2.
pub fn default_log10_rho_grid() -> Vec<f64> {
    (0..=40).map(|i| -2.0 + 0.2 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AicPoint {
    pub log10_rho: f64,
    pub aic: f64,
    pub ed: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Selection1D {
    pub best: Fit1DResult,
    pub profile: Vec<AicPoint>,
    /// The minimum sits on the first or last grid point.
    pub boundary_warning: bool,
}

/// Fits every `log10 ρ` on the grid, warm-starting from the previous fit,
/// and keeps the AIC minimizer. Ties go to the larger `ρ`.
pub fn select_rho_1d(
    data: &BinnedData1D,
    knots: KnotGrid,
    order: usize,
    log10_rho_grid: &[f64],
    control: &IwlsControl,
) -> Result<Selection1D> {
    if log10_rho_grid.is_empty() || log10_rho_grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "log10 rho grid must be non-empty and finite".into(),
        ));
    }
    let smoother = Smoother1D::new(data, knots, order)?;
    let mut order_idx: Vec<usize> = (0..log10_rho_grid.len()).collect();
    order_idx.sort_by(|&a, &b| log10_rho_grid[a].total_cmp(&log10_rho_grid[b]));
    let mut profile = Vec::with_capacity(order_idx.len());
    let mut best: Option<(usize, Fit1DResult)> = None;
    let mut previous: Option<Array1<f64>> = None;
    for (rank, &i) in order_idx.iter().enumerate() {
        let lr = log10_rho_grid[i];
        let fit = smoother.fit(10f64.powf(lr), control, previous.as_ref())?;
        profile.push(AicPoint {
            log10_rho: lr,
            aic: fit.aic,
            ed: fit.ed,
            converged: fit.converged,
        });
        previous = Some(fit.alpha.clone());
        let better = best.as_ref().is_none_or(|(_, b)| fit.aic <= b.aic);
        if better {
            best = Some((rank, fit));
        }
    }
    let (rank, best) = best.expect("non-empty grid");
    Ok(Selection1D {
        best,
        boundary_warning: order_idx.len() > 1 && (rank == 0 || rank == order_idx.len() - 1),
        profile,
    })
}

#[derive(Debug, Clone)]
pub struct Prediction1D {
    pub times: Vec<f64>,
    pub eta: Array1<f64>,
    pub lambda: Array1<f64>,
    pub se_eta: Array1<f64>,
    /// `exp(η̂ − 2 se)`.
    pub lower: Array1<f64>,
    /// `exp(η̂ + 2 se)`.
    pub upper: Array1<f64>,
    pub extrapolated: Vec<bool>,
}

pub fn predict_1d(fit: &Fit1DResult, times: &[f64]) -> Result<Prediction1D> {
    let b = build_basis(&fit.knots, times)?;
    let eta = b.values.dot(&fit.alpha);
    let bv = b.values.dot(&fit.cov_alpha);
    let var = (&bv * &b.values).sum_axis(Axis(1));
    let se_eta = var.mapv(|v| v.max(0.0).sqrt());
    let lambda = eta.mapv(f64::exp);
    let lower = (&eta - &(&se_eta * 2.0)).mapv(f64::exp);
    let upper = (&eta + &(&se_eta * 2.0)).mapv(f64::exp);
    let extrapolated = times
        .iter()
        .map(|&t| t > fit.max_exit || t < fit.knots.domain_lo)
        .collect();
    Ok(Prediction1D {
        times: times.to_vec(),
        eta,
        lambda,
        se_eta,
        lower,
        upper,
        extrapolated,
    })
}
