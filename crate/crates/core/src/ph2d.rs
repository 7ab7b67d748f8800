//! Proportional hazards with a two-dimensional baseline.
//!
//! The linear predictor of individual `i` in bin `(j, k)` is
//! `η_ijk = (Bu A Bsᵀ)_jk + x_iᵀβ`. The normal equations for `θ = [α | β]`
//! are assembled block by block from sums over individuals, so the
//! `n·n_u·n_s` design matrix is never formed.

use ndarray::{s, Array1, Array2, Axis};
use rayon::prelude::*;

use crate::basis::KnotGrid;
use crate::error::{Error, Result};
use crate::fit2d::{
    point_bases, pointwise_eta, Coordinates, Penalty2D, PenaltyParts, Smoother2D, TensorBasis,
};
use crate::glam::{
    inner_product_2d, linear_predictor_2d, marginal_projection, tensor_band, unvec_col_major,
    vec_col_major,
};
use crate::iwls::{accept_step, safe_exp, IwlsControl};
use crate::lexis::{BinGrid, BinnedData3D, Support};
use crate::linalg::{trace_of_product, Cholesky};
use crate::select::{search, RhoEvaluation, RhoStrategy, Scored};

/// Individuals are reduced in this many contiguous groups, in order, so
/// sums do not depend on the thread count.
const REDUCTION_GROUPS: usize = 8;

/// Unpenalized normal equations `G θ = rhs` at a given `θ`.
#[derive(Debug, Clone)]
pub struct PhSystem {
    /// `c x c`, `Bᵀ diag(Σ_i μ_i) B`.
    pub g11: Array2<f64>,
    /// `c x p`; column `v` is `vec(Buᵀ (Σ_i x_iv M_i) Bs)`.
    pub g12: Array2<f64>,
    /// `p x p`, `Xᵀ diag(v) X` with `v_i = Σ_jk μ_ijk`.
    pub g22: Array2<f64>,
    pub rhs_alpha: Array1<f64>,
    pub rhs_beta: Array1<f64>,
}

impl PhSystem {
    pub fn dense_g(&self) -> Array2<f64> {
        let (c, p) = self.g12.dim();
        let mut g = Array2::zeros((c + p, c + p));
        g.slice_mut(s![..c, ..c]).assign(&self.g11);
        g.slice_mut(s![..c, c..]).assign(&self.g12);
        g.slice_mut(s![c.., ..c]).assign(&self.g12.t());
        g.slice_mut(s![c.., c..]).assign(&self.g22);
        g
    }

    pub fn dense_rhs(&self) -> Array1<f64> {
        ndarray::concatenate(Axis(0), &[self.rhs_alpha.view(), self.rhs_beta.view()])
            .expect("1d concatenation")
    }
}

/// Sums over individuals needed for one IWLS step.
struct Aggregates {
    /// `Σ_i M_i`.
    w: Array2<f64>,
    /// `Σ_i x_iv M_i` per covariate.
    wx: Vec<Array2<f64>>,
    /// `Σ_i ((Y_i − M_i) + M_i ⊙ H_i)` with `H_i` the full predictor.
    z: Array2<f64>,
    /// `Σ_i (Y_i − M_i)`.
    resid: Array2<f64>,
    g22: Array2<f64>,
    rhs_beta: Array1<f64>,
    /// Unpenalized `β` score `Σ_i x_i Σ (y − μ)`.
    score_beta: Array1<f64>,
    /// `2 Σ y ln(y/μ)`.
    deviance: f64,
    /// Deviance including `−2 Σ (y − μ)`.
    full_deviance: f64,
}

impl Aggregates {
    fn zeros(shape: (usize, usize), p: usize) -> Self {
        Self {
            w: Array2::zeros(shape),
            wx: vec![Array2::zeros(shape); p],
            z: Array2::zeros(shape),
            resid: Array2::zeros(shape),
            g22: Array2::zeros((p, p)),
            rhs_beta: Array1::zeros(p),
            score_beta: Array1::zeros(p),
            deviance: 0.0,
            full_deviance: 0.0,
        }
    }

    fn add(&mut self, other: &Self) {
        self.w += &other.w;
        for (a, b) in self.wx.iter_mut().zip(&other.wx) {
            *a += b;
        }
        self.z += &other.z;
        self.resid += &other.resid;
        self.g22 += &other.g22;
        self.rhs_beta += &other.rhs_beta;
        self.score_beta += &other.score_beta;
        self.deviance += other.deviance;
        self.full_deviance += other.full_deviance;
    }
}

fn accumulate(
    data: &BinnedData3D,
    eta_base: &Array2<f64>,
    beta: &Array1<f64>,
    range: std::ops::Range<usize>,
) -> Aggregates {
    let p = beta.len();
    let mut agg = Aggregates::zeros(eta_base.dim(), p);
    for i in range {
        let slice = &data.slices[i];
        let x = data.x.row(i);
        let offset = x.dot(beta);
        let j = slice.u_row;
        let mut total_mu = 0.0;
        let mut total_z = 0.0;
        let mut total_resid = 0.0;
        for (q, k) in slice.s_bins().enumerate() {
            let (y, r) = (slice.y[q], slice.r[q]);
            if r <= 0.0 {
                continue;
            }
            let eta = eta_base[[j, k]] + offset;
            let mu = r * safe_exp(eta);
            let z = y - mu + mu * eta;
            agg.w[[j, k]] += mu;
            for (v, wx) in agg.wx.iter_mut().enumerate() {
                wx[[j, k]] += x[v] * mu;
            }
            agg.z[[j, k]] += z;
            agg.resid[[j, k]] += y - mu;
            total_mu += mu;
            total_z += z;
            total_resid += y - mu;
            let ylog = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
            agg.deviance += 2.0 * ylog;
            agg.full_deviance += 2.0 * (ylog - (y - mu));
        }
        for a in 0..p {
            agg.rhs_beta[a] += x[a] * total_z;
            agg.score_beta[a] += x[a] * total_resid;
            for b in 0..p {
                agg.g22[[a, b]] += x[a] * x[b] * total_mu;
            }
        }
    }
    agg
}

fn aggregate(data: &BinnedData3D, eta_base: &Array2<f64>, beta: &Array1<f64>) -> Aggregates {
    let n = data.n_individuals();
    let size = n.div_ceil(REDUCTION_GROUPS).max(1);
    let parts: Vec<Aggregates> = (0..n.div_ceil(size))
        .into_par_iter()
        .map(|g| accumulate(data, eta_base, beta, g * size..((g + 1) * size).min(n)))
        .collect();
    let mut total = Aggregates::zeros(eta_base.dim(), beta.len());
    for part in &parts {
        total.add(part);
    }
    total
}

fn system_from(basis: &TensorBasis, agg: &Aggregates) -> Result<PhSystem> {
    let (bu, bs) = (&basis.bu, &basis.bs);
    let c = basis.n_coefficients();
    let p = agg.wx.len();
    let mut g12 = Array2::zeros((c, p));
    let rhs_alpha = vec_col_major(&marginal_projection(bu, &agg.z, bs)?);
    for (v, wx) in agg.wx.iter().enumerate() {
        g12.column_mut(v)
            .assign(&vec_col_major(&marginal_projection(bu, wx, bs)?));
    }
    Ok(PhSystem {
        g11: inner_product_2d(bu, bs, &agg.w)?,
        g12,
        g22: agg.g22.clone(),
        rhs_alpha,
        rhs_beta: agg.rhs_beta.clone(),
    })
}

/// Normal equations at `(A, β)` for individual-level data; exposed for
/// checking against a dense construction.
pub fn assemble_system(
    data: &BinnedData3D,
    basis: &TensorBasis,
    coef: &Array2<f64>,
    beta: &Array1<f64>,
) -> Result<PhSystem> {
    if beta.len() != data.n_covariates() {
        return Err(Error::DimensionMismatch {
            context: "assemble_system (beta)",
            expected: data.n_covariates().to_string(),
            found: beta.len().to_string(),
        });
    }
    let eta_base = linear_predictor_2d(&basis.bu, coef, &basis.bs)?;
    system_from(basis, &aggregate(data, &eta_base, beta))
}

/// Greedy rank check of the `β` Schur complement. Returns the columns in the
/// first dependent group found, or `None` when all columns are independent.
fn collinear_columns(schur: &Array2<f64>, g22: &Array2<f64>) -> Option<Vec<usize>> {
    let p = schur.nrows();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..p {
        let scale = g22[[j, j]].abs().max(f64::MIN_POSITIVE);
        let (residual, weights) = if kept.is_empty() {
            (schur[[j, j]], Array1::zeros(0))
        } else {
            let sub = schur.select(Axis(0), &kept).select(Axis(1), &kept);
            let col = Array1::from_iter(kept.iter().map(|&k| schur[[k, j]]));
            match Cholesky::factor(&sub) {
                Ok(ch) => {
                    let w = ch.solve(col.view());
                    (schur[[j, j]] - col.dot(&w), w)
                }
                Err(_) => return Some(kept),
            }
        };
        if residual <= 1e-9 * scale {
            let mut cols: Vec<usize> = kept
                .iter()
                .zip(weights.iter())
                .filter(|(_, w)| w.abs() > 1e-8)
                .map(|(&k, _)| k)
                .collect();
            cols.push(j);
            return Some(cols);
        }
        kept.push(j);
    }
    None
}

/// Block solve of `[G11 + P, G12; G12ᵀ, G22] θ = rhs` by eliminating `α`.
struct SchurSolve {
    a: Cholesky,
    /// `A⁻¹ G12`.
    z: Array2<f64>,
    /// Factor of `G22 − G12ᵀ A⁻¹ G12`; `None` when `p = 0`.
    s: Option<Cholesky>,
}

impl SchurSolve {
    fn new(sys: &PhSystem, p_mat: &Array2<f64>, names: &[String]) -> Result<Self> {
        let a = Cholesky::factor(&(&sys.g11 + p_mat))?;
        let z = a.solve_matrix(&sys.g12);
        let s = if sys.g22.nrows() == 0 {
            None
        } else {
            let schur = &sys.g22 - &sys.g12.t().dot(&z);
            if let Some(cols) = collinear_columns(&schur, &sys.g22) {
                return Err(Error::CollinearCovariates {
                    columns: cols.into_iter().map(|c| names[c].clone()).collect(),
                });
            }
            Some(Cholesky::factor(&schur)?)
        };
        Ok(Self { a, z, s })
    }

    fn solve(&self, sys: &PhSystem) -> (Array1<f64>, Array1<f64>) {
        let a_ra = self.a.solve(sys.rhs_alpha.view());
        match &self.s {
            None => (a_ra, Array1::zeros(0)),
            Some(s) => {
                let beta = s.solve((&sys.rhs_beta - &self.z.t().dot(&sys.rhs_alpha)).view());
                (a_ra - self.z.dot(&beta), beta)
            }
        }
    }

    fn covariance(&self) -> Array2<f64> {
        let (c, p) = self.z.dim();
        let mut cov = Array2::zeros((c + p, c + p));
        let a_inv = self.a.inverse();
        match &self.s {
            None => cov.assign(&a_inv),
            Some(s) => {
                let s_inv = s.inverse();
                let zs = self.z.dot(&s_inv);
                cov.slice_mut(s![..c, ..c])
                    .assign(&(&a_inv + &zs.dot(&self.z.t())));
                let cross = zs.mapv(|v| -v);
                cov.slice_mut(s![..c, c..]).assign(&cross);
                cov.slice_mut(s![c.., ..c]).assign(&cross.t());
                cov.slice_mut(s![c.., c..]).assign(&s_inv);
            }
        }
        cov
    }
}

#[derive(Debug, Clone)]
pub struct PHFitResult {
    /// Baseline coefficients `A`, `c_u x c_s`.
    pub coef: Array2<f64>,
    pub beta: Array1<f64>,
    pub se_beta: Array1<f64>,
    pub covariate_names: Vec<String>,
    pub penalty: Penalty2D,
    pub knots_u: KnotGrid,
    pub knots_s: KnotGrid,
    pub grid: BinGrid,
    pub support: Support,
    /// Baseline log-hazard at the bin midpoints.
    pub eta_baseline: Array2<f64>,
    pub aic: f64,
    /// Individual-level deviance.
    pub deviance: f64,
    /// `ed_total − p`.
    pub ed_baseline: f64,
    pub ed_total: f64,
    /// Covariance of `[vec(A) | β]`.
    pub cov_theta: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl PHFitResult {
    pub fn n_coefficients(&self) -> usize {
        self.coef.len()
    }

    /// Fitted counts `μ̂_ijk` for each individual, over that individual's bins.
    pub fn fitted_counts(&self, data: &BinnedData3D) -> Result<Vec<Vec<f64>>> {
        let basis = TensorBasis::at_midpoints(&data.grid, self.knots_u, self.knots_s)?;
        let eta = linear_predictor_2d(&basis.bu, &self.coef, &basis.bs)?;
        Ok(data
            .slices
            .iter()
            .enumerate()
            .map(|(i, sl)| {
                let offset = data.x.row(i).dot(&self.beta);
                sl.s_bins()
                    .zip(&sl.r)
                    .map(|(k, &r)| {
                        if r > 0.0 {
                            r * safe_exp(eta[[sl.u_row, k]] + offset)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

/// Reusable bases and penalty for repeated PH fits of one data set.
#[derive(Debug, Clone)]
pub struct PhSmoother {
    data: BinnedData3D,
    baseline: Smoother2D,
    parts: PenaltyParts,
    orders: (usize, usize),
}

impl PhSmoother {
    pub fn new(
        data: &BinnedData3D,
        knots_u: KnotGrid,
        knots_s: KnotGrid,
        d_u: usize,
        d_s: usize,
    ) -> Result<Self> {
        let (n, p) = (data.n_individuals(), data.n_covariates());
        if n < p + 1 {
            return Err(Error::TooFewIndividuals { n, p });
        }
        let baseline = Smoother2D::new(&data.aggregate(), knots_u, knots_s, d_u, d_s)?;
        let b = baseline.basis();
        let parts = PenaltyParts::new(b.c_u(), b.c_s(), d_u, d_s)?;
        Ok(Self {
            data: data.clone(),
            baseline,
            parts,
            orders: (d_u, d_s),
        })
    }

    pub fn basis(&self) -> &TensorBasis {
        self.baseline.basis()
    }

    /// Fits from `start = (A, β)`, or from the covariate-free fit with `β = 0`.
    pub fn fit(
        &self,
        penalty: &Penalty2D,
        control: &IwlsControl,
        start: Option<(&Array2<f64>, &Array1<f64>)>,
    ) -> Result<PHFitResult> {
        if (penalty.d_u, penalty.d_s) != self.orders {
            return Err(Error::InvalidConfig(format!(
                "penalty orders {:?} differ from the smoother's {:?}",
                (penalty.d_u, penalty.d_s),
                self.orders
            )));
        }
        let basis = self.basis();
        let (cu, cs) = (basis.c_u(), basis.c_s());
        let c = cu * cs;
        let p = self.data.n_covariates();
        let p_mat = self.parts.combine(penalty);
        let names = &self.data.covariate_names;
        let (mut coef, mut beta) = match start {
            Some((a, b)) if a.dim() == (cu, cs) && b.len() == p => (a.clone(), b.clone()),
            _ => (
                self.baseline.fit(penalty, control, None)?.coef,
                Array1::zeros(p),
            ),
        };
        let mut alpha = vec_col_major(&coef);
        let objective = |coef: &Array2<f64>, agg: &Aggregates| {
            agg.full_deviance + self.parts.value(penalty, coef)
        };
        let mut eta_base = linear_predictor_2d(&basis.bu, &coef, &basis.bs)?;
        let mut agg = aggregate(&self.data, &eta_base, &beta);
        let mut current = objective(&coef, &agg);
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=control.max_iter {
            iterations = it;
            // Newton increment: the right-hand side is the penalized score.
            let mut sys = system_from(basis, &agg)?;
            sys.rhs_alpha = vec_col_major(&marginal_projection(&basis.bu, &agg.resid, &basis.bs)?)
                - self.parts.gradient(penalty, &coef);
            sys.rhs_beta = agg.score_beta.clone();
            let (step_a, step_b) = SchurSolve::new(&sys, &p_mat, names)?.solve(&sys);
            let mut scale = 1.0;
            let mut halvings = 0;
            let change = loop {
                let cand_a = &alpha + &(&step_a * scale);
                let cand_b = &beta + &(&step_b * scale);
                let cand_coef = unvec_col_major(&cand_a, cu, cs);
                let eta_c = linear_predictor_2d(&basis.bu, &cand_coef, &basis.bs)?;
                let agg_c = aggregate(&self.data, &eta_c, &cand_b);
                let obj_c = objective(&cand_coef, &agg_c);
                if accept_step(obj_c, current) || halvings == control.max_halvings {
                    let change = (&cand_a - &alpha)
                        .iter()
                        .chain((&cand_b - &beta).iter())
                        .fold(0.0f64, |m, v| m.max(v.abs()));
                    alpha = cand_a;
                    beta = cand_b;
                    coef = cand_coef;
                    eta_base = eta_c;
                    agg = agg_c;
                    current = obj_c;
                    break change;
                }
                scale *= 0.5;
                halvings += 1;
            };
            if change < control.tol {
                converged = true;
                break;
            }
        }
        let sys = system_from(basis, &agg)?;
        let cov_theta = SchurSolve::new(&sys, &p_mat, names)?.covariance();
        let ed_total = trace_of_product(&cov_theta, &sys.dense_g());
        let se_beta = Array1::from_shape_fn(p, |v| cov_theta[[c + v, c + v]].max(0.0).sqrt());
        let deviance = agg.deviance;
        Ok(PHFitResult {
            coef,
            beta,
            se_beta,
            covariate_names: names.clone(),
            penalty: *penalty,
            knots_u: basis.knots_u,
            knots_s: basis.knots_s,
            grid: self.data.grid,
            support: self.data.support.clone(),
            eta_baseline: eta_base,
            aic: deviance + 2.0 * ed_total,
            deviance,
            ed_baseline: ed_total - p as f64,
            ed_total,
            cov_theta,
            converged,
            iterations,
        })
    }
}

pub fn fit_ph(
    data: &BinnedData3D,
    knots: (KnotGrid, KnotGrid),
    penalty: &Penalty2D,
    control: &IwlsControl,
) -> Result<PHFitResult> {
    PhSmoother::new(data, knots.0, knots.1, penalty.d_u, penalty.d_s)?.fit(penalty, control, None)
}

#[derive(Debug, Clone)]
pub struct SelectionPh {
    pub best: PHFitResult,
    pub trace: Vec<RhoEvaluation>,
    pub boundary_warning: bool,
}

pub fn select_rho_ph(
    data: &BinnedData3D,
    knots: (KnotGrid, KnotGrid),
    orders: (usize, usize),
    strategy: &RhoStrategy,
    control: &IwlsControl,
    warm_start: bool,
) -> Result<SelectionPh> {
    let smoother = PhSmoother::new(data, knots.0, knots.1, orders.0, orders.1)?;
    let mut previous: Option<(Array2<f64>, Array1<f64>)> = None;
    let outcome = search(strategy, |lu, ls| {
        let penalty = Penalty2D::from_log10(lu, ls, orders.0, orders.1)?;
        let start = if warm_start {
            previous.as_ref().map(|(a, b)| (a, b))
        } else {
            None
        };
        let fit = smoother.fit(&penalty, control, start)?;
        if warm_start {
            previous = Some((fit.coef.clone(), fit.beta.clone()));
        }
        Ok(Scored {
            aic: fit.aic,
            ed: fit.ed_total,
            converged: fit.converged,
            fit,
        })
    })?;
    Ok(SelectionPh {
        best: outcome.best,
        trace: outcome.trace,
        boundary_warning: outcome.boundary_warning,
    })
}

#[derive(Debug, Clone)]
pub struct PredictionPh {
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub eta: Array1<f64>,
    pub lambda: Array1<f64>,
    pub se_eta: Array1<f64>,
    pub extrapolated: Vec<bool>,
}

/// `η̂ = baseline + xᵀβ̂` with standard errors from the full covariance of
/// `θ`, cross terms included.
pub fn predict_ph(fit: &PHFitResult, points: &[Coordinates], x: &[f64]) -> Result<PredictionPh> {
    let p = fit.beta.len();
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            context: "predict_ph (x)",
            expected: p.to_string(),
            found: x.len().to_string(),
        });
    }
    let c = fit.n_coefficients();
    let (u, s, bu, bs) = point_bases(&fit.knots_u, &fit.knots_s, points)?;
    let offset: f64 = x.iter().zip(&fit.beta).map(|(a, b)| a * b).sum();
    let eta = pointwise_eta(&bu, &bs, &fit.coef) + offset;
    let cov = &fit.cov_theta;
    let mut xx = 0.0;
    for a in 0..p {
        for b in 0..p {
            xx += x[a] * x[b] * cov[[c + a, c + b]];
        }
    }
    let se_eta = Array1::from_shape_fn(points.len(), |i| {
        let band = tensor_band(&bu, &bs, i);
        let mut var = xx;
        for &(q, wq) in &band {
            for &(r, wr) in &band {
                var += wq * wr * cov[[q, r]];
            }
            let cross: f64 = (0..p).map(|v| x[v] * cov[[q, c + v]]).sum();
            var += 2.0 * wq * cross;
        }
        var.max(0.0).sqrt()
    });
    let extrapolated = u
        .iter()
        .zip(&s)
        .map(|(&u, &s)| fit.support.is_extrapolated(&fit.grid, u, s))
        .collect();
    Ok(PredictionPh {
        lambda: eta.mapv(f64::exp),
        eta,
        se_eta,
        u,
        s,
        extrapolated,
    })
}
