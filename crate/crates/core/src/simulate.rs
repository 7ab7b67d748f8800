//! Synthetic two-time-scale data from known hazard surfaces, and Monte Carlo
//! studies of how well the estimators recover them.
//!
//! Every replicate draws from its own `ChaCha8` stream (`seed`, stream =
//! replicate index), so results do not depend on thread scheduling.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::KnotGrid;
use crate::error::{Error, Result};
use crate::fit2d::{predict_2d, select_rho_2d, Coordinates};
use crate::iwls::IwlsControl;
use crate::lexis::{bin_individuals, BinAxis, BinGrid, IndividualRecord};
use crate::ph2d::{predict_ph, select_rho_ph};
use crate::select::RhoStrategy;

/// Step of the cumulative-hazard grid used for inverse-transform sampling.
pub const INTEGRATION_STEP: f64 = 0.01;
/// Durations beyond this are returned as the cap itself.
pub const DURATION_CAP: f64 = 200.0;

type HazardFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A hazard `λ(u, s)` on the `(u, s)` plane.
#[derive(Clone)]
pub enum HazardSpec {
    /// `0.06 s e^{−0.3 s}`, constant in `u`.
    Hm1,
    /// `a(u) s e^{−b(u) s}`, `a = 0.09 − 0.002u`, `b = 0.4 − 0.01u`.
    Hm2,
    /// `a(u) e^{b(u) s}`, `a = 0.002 + 0.0008u`, `b = 0.15 − 0.003u`.
    Hm3,
    Constant(f64),
    Custom(Arc<HazardFn>),
}

impl fmt::Debug for HazardSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HazardSpec::Custom(_) => f.write_str("Custom(..)"),
            HazardSpec::Constant(v) => write!(f, "Constant({v})"),
            other => f.write_str(other.name()),
        }
    }
}

impl HazardSpec {
    pub const NAMES: [&'static str; 3] = ["HM1", "HM2", "HM3"];

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "HM1" => Ok(HazardSpec::Hm1),
            "HM2" => Ok(HazardSpec::Hm2),
            "HM3" => Ok(HazardSpec::Hm3),
            _ => Err(Error::InvalidConfig(format!(
                "unknown hazard {name:?}; expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HazardSpec::Hm1 => "HM1",
            HazardSpec::Hm2 => "HM2",
            HazardSpec::Hm3 => "HM3",
            HazardSpec::Constant(_) => "constant",
            HazardSpec::Custom(_) => "custom",
        }
    }

    pub fn eval(&self, u: f64, s: f64) -> f64 {
        match self {
            HazardSpec::Hm1 => 0.06 * s * (-0.3 * s).exp(),
            HazardSpec::Hm2 => (0.09 - 0.002 * u) * s * (-(0.4 - 0.01 * u) * s).exp(),
            HazardSpec::Hm3 => Self::hm3_params(u).0 * (Self::hm3_params(u).1 * s).exp(),
            HazardSpec::Constant(v) => *v,
            HazardSpec::Custom(f) => f(u, s),
        }
    }

    /// `(a(u), b(u))` of the Gompertz-type surface.
    pub fn hm3_params(u: f64) -> (f64, f64) {
        (0.002 + 0.0008 * u, 0.15 - 0.003 * u)
    }
}

/// Solves `∫₀ˢ m·λ(u, v) dv = e` on the fixed trapezoid grid, interpolating
/// linearly between grid points. Returns [`DURATION_CAP`] if the cumulative
/// hazard stays below `e`.
pub fn event_time_for_draw(spec: &HazardSpec, u: f64, multiplier: f64, e: f64) -> Result<f64> {
    if !(multiplier >= 0.0) || !multiplier.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "risk multiplier {multiplier} must be finite and >= 0"
        )));
    }
    let at_zero = spec.eval(u, 0.0);
    if !(at_zero >= 0.0) || !at_zero.is_finite() {
        return Err(Error::NonPositiveHazard {
            u,
            s: 0.0,
            value: at_zero,
        });
    }
    if multiplier == 0.0 {
        return Ok(DURATION_CAP);
    }
    let steps = (DURATION_CAP / INTEGRATION_STEP).round() as usize;
    let mut prev = multiplier * at_zero;
    let mut cum = 0.0;
    for k in 1..=steps {
        let s = k as f64 * INTEGRATION_STEP;
        let value = spec.eval(u, s);
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveHazard { u, s, value });
        }
        let current = multiplier * value;
        let next = cum + 0.5 * INTEGRATION_STEP * (prev + current);
        if next >= e {
            let s_prev = (k - 1) as f64 * INTEGRATION_STEP;
            return Ok(s_prev + INTEGRATION_STEP * (e - cum) / (next - cum));
        }
        cum = next;
        prev = current;
    }
    Ok(DURATION_CAP)
}

pub fn sample_event_time<R: Rng + ?Sized>(
    spec: &HazardSpec,
    u: f64,
    multiplier: f64,
    rng: &mut R,
) -> Result<f64> {
    let e: f64 = rng.sample(Exp1);
    event_time_for_draw(spec, u, multiplier, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObservationScheme {
    /// Censoring at `s = s_max`.
    A { s_max: f64 },
    /// Censoring at `t = u + s = t_max`.
    B { t_max: f64 },
    /// Scheme B, then a `fraction` of individuals get entry times
    /// `U(0, entry_max)`; those exiting before entry are dropped.
    C {
        t_max: f64,
        fraction: f64,
        entry_max: f64,
    },
}

impl ObservationScheme {
    pub fn a() -> Self {
        ObservationScheme::A { s_max: 20.0 }
    }

    pub fn b() -> Self {
        ObservationScheme::B { t_max: 30.0 }
    }

    pub fn c() -> Self {
        ObservationScheme::C {
            t_max: 30.0,
            fraction: 0.2,
            entry_max: 6.0,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::a()),
            "B" => Ok(Self::b()),
            "C" => Ok(Self::c()),
            _ => Err(Error::InvalidConfig(format!(
                "unknown observation scheme {name:?}; expected one of A, B, C"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObservationScheme::A { .. } => "A",
            ObservationScheme::B { .. } => "B",
            ObservationScheme::C { .. } => "C",
        }
    }

    /// Largest possible observed duration.
    pub fn s_extent(&self) -> f64 {
        match *self {
            ObservationScheme::A { s_max } => s_max,
            ObservationScheme::B { t_max } | ObservationScheme::C { t_max, .. } => t_max,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ObservationScheme::A { s_max } => s_max > 0.0,
            ObservationScheme::B { t_max } => t_max > 0.0,
            ObservationScheme::C {
                t_max,
                fraction,
                entry_max,
            } => t_max > 0.0 && (0.0..=1.0).contains(&fraction) && entry_max >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid observation scheme {self:?}"
            )))
        }
    }
}

/// An uncensored draw: offset `u`, event duration `s`, covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteObservation {
    pub u: f64,
    pub s: f64,
    pub covariates: Vec<f64>,
}

/// Applies censoring and truncation. Record ids are the indices into
/// `complete`; event durations are never altered.
pub fn apply_scheme<R: Rng + ?Sized>(
    complete: &[CompleteObservation],
    scheme: &ObservationScheme,
    rng: &mut R,
) -> Result<Vec<IndividualRecord>> {
    scheme.validate()?;
    let censor_at = |obs: &CompleteObservation| match *scheme {
        ObservationScheme::A { s_max } => s_max,
        ObservationScheme::B { t_max } | ObservationScheme::C { t_max, .. } => t_max - obs.u,
    };
    let mut entries = vec![0.0; complete.len()];
    if let ObservationScheme::C {
        fraction,
        entry_max,
        ..
    } = *scheme
    {
        let marked = (fraction * complete.len() as f64).round() as usize;
        let mut chosen = sample(rng, complete.len(), marked).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            entries[i] = rng.random_range(0.0..=entry_max);
        }
    }
    let mut records = Vec::with_capacity(complete.len());
    for (i, obs) in complete.iter().enumerate() {
        let limit = censor_at(obs);
        let (s_out, event) = if obs.s > limit {
            (limit, false)
        } else {
            (obs.s, true)
        };
        if s_out <= entries[i] {
            continue;
        }
        records.push(IndividualRecord::new(
            i.to_string(),
            obs.u,
            entries[i],
            s_out,
            event,
            obs.covariates.clone(),
        )?);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Draw `x₁ ~ N(0, 1)` and `x₂ = ±0.5` with effects `beta`.
    pub covariates: bool,
    pub beta: [f64; 2],
    /// `u ~ U(0, u_max)`.
    pub u_max: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            replicates: 20,
            seed: 1,
            covariates: false,
            beta: [0.5, 0.7],
            u_max: 20.0,
        }
    }
}

pub const COVARIATE_NAMES: [&str; 2] = ["x1", "x2"];

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub complete: Vec<CompleteObservation>,
    pub records: Vec<IndividualRecord>,
    pub covariate_names: Vec<String>,
}

pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

pub fn simulate_dataset(
    config: &SimConfig,
    spec: &HazardSpec,
    scheme: &ObservationScheme,
    replicate: u64,
) -> Result<SimulatedData> {
    if config.n == 0 || !(config.u_max > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sample size {} and u_max {} must be positive",
            config.n, config.u_max
        )));
    }
    let mut rng = replicate_rng(config.seed, replicate);
    let mut complete = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let u = rng.random_range(0.0..config.u_max);
        let (covariates, multiplier) = if config.covariates {
            let x1: f64 = rng.sample(StandardNormal);
            let x2 = if rng.random_bool(0.5) { 0.5 } else { -0.5 };
            let lp = config.beta[0] * x1 + config.beta[1] * x2;
            (vec![x1, x2], lp.exp())
        } else {
            (Vec::new(), 1.0)
        };
        let s = sample_event_time(spec, u, multiplier, &mut rng)?;
        complete.push(CompleteObservation { u, s, covariates });
    }
    let records = apply_scheme(&complete, scheme, &mut rng)?;
    let covariate_names = if config.covariates {
        COVARIATE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        Vec::new()
    };
    Ok(SimulatedData {
        complete,
        records,
        covariate_names,
    })
}

/// Estimator settings for a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub n_segments: usize,
    pub orders: (usize, usize),
    pub bin_width: f64,
    pub strategy: RhoStrategy,
    pub control: IwlsControl,
    /// Side of the square `(0, eval_extent)²` on which metrics are computed,
    /// at unit-spaced midpoints.
    pub eval_extent: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            n_segments: 12,
            orders: (2, 2),
            bin_width: 1.0,
            strategy: RhoStrategy::default_numeric(),
            control: IwlsControl::default(),
            eval_extent: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub bias: f64,
    pub rmse: f64,
    pub mean_se: f64,
    /// Fraction of replicates with `|β̂ − β| ≤ 2 se`.
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub retained: usize,
    pub log10_rho: (f64, f64),
    pub converged: bool,
    pub boundary_warning: bool,
    /// Estimated hazard on the evaluation grid, `u` by `s`.
    pub lambda: Array2<f64>,
    pub beta: Vec<f64>,
    pub se_beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyMetrics {
    pub hazard: String,
    pub scheme: String,
    pub config: SimConfig,
    /// Evaluation midpoints, shared by both axes.
    pub grid: Vec<f64>,
    pub truth: Array2<f64>,
    pub mean: Array2<f64>,
    pub bias: Array2<f64>,
    pub rmse: Array2<f64>,
    /// Monte Carlo standard error of the mean, `sd / √S`.
    pub mc_se: Array2<f64>,
    pub beta: Vec<BetaSummary>,
    pub replicates: Vec<ReplicateOutcome>,
    pub failures: Vec<(usize, String)>,
}

impl StudyMetrics {
    fn interior(&self, lo: f64, hi: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
        let idx: Vec<usize> = (0..self.grid.len())
            .filter(|&i| self.grid[i] >= lo && self.grid[i] <= hi)
            .collect();
        let cols = idx.clone();
        idx.into_iter()
            .flat_map(move |j| cols.clone().into_iter().map(move |k| (j, k)))
    }

    /// Fraction of grid points with both coordinates in `[lo, hi]` where
    /// `|bias| < factor · mc_se`.
    pub fn unbiased_fraction(&self, lo: f64, hi: f64, factor: f64) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for (j, k) in self.interior(lo, hi) {
            total += 1;
            if self.bias[[j, k]].abs() < factor * self.mc_se[[j, k]] {
                hit += 1;
            }
        }
        hit as f64 / total.max(1) as f64
    }

    pub fn mean_rmse(&self, lo: f64, hi: f64) -> f64 {
        let vals: Vec<f64> = self
            .interior(lo, hi)
            .map(|(j, k)| self.rmse[[j, k]])
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    /// Pooled `β ± 2 se` coverage over all parameters and replicates.
    pub fn pooled_coverage(&self) -> f64 {
        let n = self.beta.len() as f64;
        self.beta.iter().map(|b| b.coverage).sum::<f64>() / n.max(1.0)
    }
}

fn run_replicate(
    config: &SimConfig,
    spec: &HazardSpec,
    scheme: &ObservationScheme,
    settings: &StudySettings,
    replicate: usize,
    points: &[Coordinates],
) -> Result<ReplicateOutcome> {
    let data = simulate_dataset(config, spec, scheme, replicate as u64)?;
    let u_axis = BinAxis::covering(0.0, settings.bin_width, config.u_max)?;
    let s_axis = BinAxis::covering(0.0, settings.bin_width, scheme.s_extent())?;
    let grid = BinGrid {
        u: u_axis,
        s: s_axis,
    };
    let mut binned = bin_individuals(&data.records, &grid)?;
    binned.covariate_names = data.covariate_names.clone();
    let knots = (
        KnotGrid::cubic(0.0, u_axis.end(), settings.n_segments)?,
        KnotGrid::cubic(0.0, s_axis.end(), settings.n_segments)?,
    );
    let m = settings.eval_extent;
    let to_surface =
        |lambda: &Array1<f64>| Array2::from_shape_fn((m, m), |(j, k)| lambda[j + m * k]);
    if config.covariates {
        let sel = select_rho_ph(
            &binned,
            knots,
            settings.orders,
            &settings.strategy,
            &settings.control,
            true,
        )?;
        let fit = &sel.best;
        let pred = predict_ph(fit, points, &vec![0.0; fit.beta.len()])?;
        Ok(ReplicateOutcome {
            replicate,
            retained: data.records.len(),
            log10_rho: (fit.penalty.rho_u.log10(), fit.penalty.rho_s.log10()),
            converged: fit.converged,
            boundary_warning: sel.boundary_warning,
            lambda: to_surface(&pred.lambda),
            beta: fit.beta.to_vec(),
            se_beta: fit.se_beta.to_vec(),
        })
    } else {
        let agg = binned.aggregate();
        let sel = select_rho_2d(
            &agg,
            knots,
            settings.orders,
            &settings.strategy,
            &settings.control,
            true,
        )?;
        let fit = &sel.best;
        let pred = predict_2d(fit, points)?;
        Ok(ReplicateOutcome {
            replicate,
            retained: data.records.len(),
            log10_rho: (fit.penalty.rho_u.log10(), fit.penalty.rho_s.log10()),
            converged: fit.converged,
            boundary_warning: sel.boundary_warning,
            lambda: to_surface(&pred.lambda),
            beta: Vec::new(),
            se_beta: Vec::new(),
        })
    }
}

fn summarize_beta(name: &str, truth: f64, estimates: &[f64], ses: &[f64]) -> BetaSummary {
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = if estimates.len() > 1 {
        estimates.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mse = estimates.iter().map(|b| (b - truth).powi(2)).sum::<f64>() / n;
    let covered = estimates
        .iter()
        .zip(ses)
        .filter(|(b, se)| (*b - truth).abs() <= 2.0 * *se)
        .count();
    BetaSummary {
        name: name.to_string(),
        truth,
        mean,
        sd: var.sqrt(),
        bias: mean - truth,
        rmse: mse.sqrt(),
        mean_se: ses.iter().sum::<f64>() / n,
        coverage: covered as f64 / n,
    }
}

/// Simulates, fits and summarizes `config.replicates` data sets in
/// parallel. Individual failures are recorded; more than 10% failing is an
/// error.
pub fn run_study(
    config: &SimConfig,
    spec: &HazardSpec,
    scheme: &ObservationScheme,
    settings: &StudySettings,
) -> Result<StudyMetrics> {
    if config.replicates == 0 {
        return Err(Error::InvalidConfig(
            "at least one replicate is required".into(),
        ));
    }
    scheme.validate()?;
    let m = settings.eval_extent;
    let grid: Vec<f64> = (0..m).map(|i| i as f64 + 0.5).collect();
    let points: Vec<Coordinates> = grid
        .iter()
        .flat_map(|&s| grid.iter().map(move |&u| Coordinates::Us { u, s }))
        .collect();
    let results: Vec<Result<ReplicateOutcome>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, spec, scheme, settings, r, &points))
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(out) => replicates.push(out),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if failures.len() * 10 > config.replicates || replicates.is_empty() {
        return Err(Error::StudyFailed {
            failed: failures.len(),
            total: config.replicates,
        });
    }
    let truth = Array2::from_shape_fn((m, m), |(j, k)| spec.eval(grid[j], grid[k]));
    let s_count = replicates.len() as f64;
    let mut mean = Array2::zeros((m, m));
    for rep in &replicates {
        mean += &rep.lambda;
    }
    mean /= s_count;
    let mut sq_err = Array2::<f64>::zeros((m, m));
    let mut sq_dev = Array2::<f64>::zeros((m, m));
    for rep in &replicates {
        sq_err += &(&rep.lambda - &truth).mapv(|v| v * v);
        sq_dev += &(&rep.lambda - &mean).mapv(|v| v * v);
    }
    let rmse = (sq_err / s_count).mapv(f64::sqrt);
    let mc_se = if replicates.len() > 1 {
        (sq_dev / (s_count - 1.0)).mapv(|v| (v / s_count).sqrt())
    } else {
        Array2::zeros((m, m))
    };
    let beta = if config.covariates {
        COVARIATE_NAMES
            .iter()
            .enumerate()
            .map(|(v, name)| {
                let est: Vec<f64> = replicates.iter().map(|r| r.beta[v]).collect();
                let se: Vec<f64> = replicates.iter().map(|r| r.se_beta[v]).collect();
                summarize_beta(name, config.beta[v], &est, &se)
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(StudyMetrics {
        hazard: spec.name().to_string(),
        scheme: scheme.name().to_string(),
        config: *config,
        bias: &mean - &truth,
        grid,
        truth,
        mean,
        rmse,
        mc_se,
        beta,
        replicates,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_hazard_inverse() {
        let s = event_time_for_draw(&HazardSpec::Constant(0.5), 3.0, 1.0, 0.5).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
        let doubled = event_time_for_draw(&HazardSpec::Constant(0.5), 3.0, 2.0, 0.5).unwrap();
        assert!((doubled - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hm3_matches_closed_form_inverse() {
        for &u in &[0.5, 7.0, 19.0] {
            let (a, b) = HazardSpec::hm3_params(u);
            for &e in &[0.01, 0.3, 1.0, 2.5, 6.0] {
                let exact = (1.0 + b * e / a).ln() / b;
                let s = event_time_for_draw(&HazardSpec::Hm3, u, 1.0, e).unwrap();
                assert!((s - exact).abs() < 1e-3, "u {u} e {e}: {s} vs {exact}");
            }
        }
    }

    #[test]
    fn hazard_cap_and_errors() {
        let s = event_time_for_draw(&HazardSpec::Constant(1e-6), 0.0, 1.0, 5.0).unwrap();
        assert_eq!(s, DURATION_CAP);
        let neg = HazardSpec::Custom(Arc::new(|_, s| 0.1 - s));
        assert!(matches!(
            event_time_for_draw(&neg, 1.0, 1.0, 5.0),
            Err(Error::NonPositiveHazard { .. })
        ));
        assert!(HazardSpec::parse("hm4")
            .unwrap_err()
            .to_string()
            .contains("HM1, HM2, HM3"));
    }

    #[test]
    fn declared_hazards_are_positive() {
        for spec in [HazardSpec::Hm1, HazardSpec::Hm2, HazardSpec::Hm3] {
            for j in 0..=40 {
                for k in 1..=40 {
                    let v = spec.eval(j as f64 * 0.5, k as f64 * 0.5);
                    assert!(v > 0.0 && v.is_finite(), "{spec:?}");
                }
            }
        }
    }

    #[test]
    fn scheme_rules() {
        let mut rng = replicate_rng(1, 0);
        let obs = |u, s| CompleteObservation {
            u,
            s,
            covariates: vec![],
        };
        let a = apply_scheme(&[obs(5.0, 25.0)], &ObservationScheme::a(), &mut rng).unwrap();
        assert_eq!((a[0].s_out, a[0].event), (20.0, false));
        let b = apply_scheme(&[obs(12.0, 25.0)], &ObservationScheme::b(), &mut rng).unwrap();
        assert_eq!((b[0].s_out, b[0].event), (18.0, false));
        let kept = apply_scheme(&[obs(3.0, 4.0)], &ObservationScheme::b(), &mut rng).unwrap();
        assert_eq!((kept[0].s_out, kept[0].event), (4.0, true));
    }

    #[test]
    fn scheme_c_truncates_a_fifth() {
        let config = SimConfig {
            n: 1000,
            ..Default::default()
        };
        let data = simulate_dataset(&config, &HazardSpec::Hm1, &ObservationScheme::c(), 0).unwrap();
        let late = data.records.iter().filter(|r| r.s_in > 0.0).count();
        assert!(late > 150 && late <= 200, "{late}");
        let kept = data.records.len() as f64 / 1000.0;
        assert!(kept > 0.9 && kept < 1.0, "{kept}");
        for r in data.records.iter().filter(|r| r.event) {
            let i: usize = r.id.parse().unwrap();
            assert_eq!(r.s_out, data.complete[i].s);
        }
    }

    #[test]
    fn datasets_are_reproducible() {
        let config = SimConfig {
            n: 50,
            covariates: true,
            ..Default::default()
        };
        let a = simulate_dataset(&config, &HazardSpec::Hm2, &ObservationScheme::a(), 3).unwrap();
        let b = simulate_dataset(&config, &HazardSpec::Hm2, &ObservationScheme::a(), 3).unwrap();
        let c = simulate_dataset(&config, &HazardSpec::Hm2, &ObservationScheme::a(), 4).unwrap();
        assert_eq!(a.records, b.records);
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn single_replicate_study_mean_is_the_estimate() {
        let config = SimConfig {
            n: 300,
            replicates: 1,
            seed: 11,
            ..Default::default()
        };
        let settings = StudySettings {
            strategy: RhoStrategy::Grid {
                lo: 0.0,
                hi: 4.0,
                step: 2.0,
            },
            ..Default::default()
        };
        let m = run_study(
            &config,
            &HazardSpec::Hm1,
            &ObservationScheme::a(),
            &settings,
        )
        .unwrap();
        assert_eq!(m.mean, m.replicates[0].lambda);
        assert!(m.mc_se.iter().all(|&v| v == 0.0));
        assert_eq!(m.bias, &m.mean - &m.truth);
    }
}
