//! AIC minimization over `(log10 ρ_u, log10 ρ_s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box outside which a numeric optimum is reported as a boundary hit.
pub const LOG10_RHO_BOUNDS: (f64, f64) = (-4.0, 8.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RhoStrategy {
    /// Full lattice over `lo..=hi` in steps of `step`, on both axes.
    Grid { lo: f64, hi: f64, step: f64 },
    /// Nelder–Mead from `start`.
    Numeric(NelderMeadOptions),
}

impl RhoStrategy {
    pub fn default_grid() -> Self {
        RhoStrategy::Grid {
            lo: -2.0,
            hi: 6.0,
            step: 0.5,
        }
    }

    pub fn default_numeric() -> Self {
        RhoStrategy::Numeric(NelderMeadOptions::default())
    }

    pub fn numeric_from(start: (f64, f64)) -> Self {
        RhoStrategy::Numeric(NelderMeadOptions {
            start,
            ..NelderMeadOptions::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub start: (f64, f64),
    /// Edge of the initial simplex, in decades.
    pub initial_step: f64,
    /// Spread of `ln AIC` over the simplex.
    pub f_tol: f64,
    /// Largest distance of a vertex from the best vertex, in decades.
    pub x_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            start: (1.0, 1.0),
            initial_step: 1.0,
            f_tol: 1e-3,
            x_tol: 1e-2,
            max_evals: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEvaluation {
    pub log10_rho_u: f64,
    pub log10_rho_s: f64,
    pub aic: f64,
    pub ed: f64,
    pub converged: bool,
}

/// Summary of one fit handed back to the search.
pub(crate) struct Scored<T> {
    pub fit: T,
    pub aic: f64,
    pub ed: f64,
    pub converged: bool,
}

pub(crate) struct SearchOutcome<T> {
    pub best: T,
    pub trace: Vec<RhoEvaluation>,
    pub boundary_warning: bool,
}

fn lattice(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "rho grid lo {lo}, hi {hi}, step {step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

pub(crate) fn search<T, F>(strategy: &RhoStrategy, mut eval: F) -> Result<SearchOutcome<T>>
where
    F: FnMut(f64, f64) -> Result<Scored<T>>,
{
    match *strategy {
        RhoStrategy::Grid { lo, hi, step } => {
            let axis = lattice(lo, hi, step)?;
            let n = axis.len();
            let mut trace = Vec::with_capacity(n * n);
            let mut best: Option<(usize, usize, Scored<T>)> = None;
            for i in 0..n {
                // Serpentine order keeps consecutive fits close for warm starts.
                let cols: Vec<usize> = if i % 2 == 0 {
                    (0..n).collect()
                } else {
                    (0..n).rev().collect()
                };
                for k in cols {
                    let (lu, ls) = (axis[i], axis[k]);
                    let scored = eval(lu, ls)?;
                    trace.push(RhoEvaluation {
                        log10_rho_u: lu,
                        log10_rho_s: ls,
                        aic: scored.aic,
                        ed: scored.ed,
                        converged: scored.converged,
                    });
                    let better = match &best {
                        None => true,
                        Some((bi, bk, b)) => {
                            scored.aic < b.aic || (scored.aic == b.aic && i + k > bi + bk)
                        }
                    };
                    if better {
                        best = Some((i, k, scored));
                    }
                }
            }
            let (i, k, best) = best.expect("non-empty lattice");
            let edge = |v: usize| n > 1 && (v == 0 || v == n - 1);
            Ok(SearchOutcome {
                best: best.fit,
                trace,
                boundary_warning: edge(i) || edge(k),
            })
        }
        RhoStrategy::Numeric(opts) => nelder_mead(&opts, eval),
    }
}

fn clamp(p: [f64; 2]) -> [f64; 2] {
    let (lo, hi) = LOG10_RHO_BOUNDS;
    [p[0].clamp(lo, hi), p[1].clamp(lo, hi)]
}

fn nelder_mead<T, F>(opts: &NelderMeadOptions, mut eval: F) -> Result<SearchOutcome<T>>
where
    F: FnMut(f64, f64) -> Result<Scored<T>>,
{
    let mut trace = Vec::new();
    let mut best: Option<([f64; 2], Scored<T>)> = None;
    let mut objective = |p: [f64; 2], trace: &mut Vec<RhoEvaluation>| -> Result<f64> {
        let scored = eval(p[0], p[1])?;
        trace.push(RhoEvaluation {
            log10_rho_u: p[0],
            log10_rho_s: p[1],
            aic: scored.aic,
            ed: scored.ed,
            converged: scored.converged,
        });
        let value = if scored.aic > 0.0 {
            scored.aic.ln()
        } else {
            f64::INFINITY
        };
        if best.as_ref().is_none_or(|(_, b)| scored.aic < b.aic) {
            best = Some((p, scored));
        }
        Ok(value)
    };

    let max_evals = opts.max_evals.max(3);
    let start = clamp([opts.start.0, opts.start.1]);
    let h = opts.initial_step;
    let mut simplex: Vec<([f64; 2], f64)> = Vec::with_capacity(3);
    for p in [
        start,
        clamp([start[0] + h, start[1]]),
        clamp([start[0], start[1] + h]),
    ] {
        let f = objective(p, &mut trace)?;
        simplex.push((p, f));
    }

    while trace.len() < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[2].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(p, _)| {
                ((p[0] - simplex[0].0[0]).powi(2) + (p[1] - simplex[0].0[1]).powi(2)).sqrt()
            })
            .fold(0.0f64, f64::max);
        if spread.abs() < opts.f_tol && size < opts.x_tol {
            break;
        }
        let centroid = [
            (simplex[0].0[0] + simplex[1].0[0]) / 2.0,
            (simplex[0].0[1] + simplex[1].0[1]) / 2.0,
        ];
        let worst = simplex[2];
        let along = |t: f64| {
            clamp([
                centroid[0] + t * (worst.0[0] - centroid[0]),
                centroid[1] + t * (worst.0[1] - centroid[1]),
            ])
        };
        let reflected = along(-1.0);
        let fr = objective(reflected, &mut trace)?;
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = if trace.len() < max_evals {
                objective(expanded, &mut trace)?
            } else {
                f64::INFINITY
            };
            simplex[2] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
            continue;
        }
        if trace.len() >= max_evals {
            break;
        }
        let (contracted, fc) = if fr < worst.1 {
            let p = along(-0.5);
            (p, objective(p, &mut trace)?)
        } else {
            let p = along(0.5);
            (p, objective(p, &mut trace)?)
        };
        if fc < worst.1.min(fr) {
            simplex[2] = (contracted, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let b = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            if trace.len() >= max_evals {
                break;
            }
            let p = clamp([(v.0[0] + b[0]) / 2.0, (v.0[1] + b[1]) / 2.0]);
            *v = (p, objective(p, &mut trace)?);
        }
    }

    let (point, best) = best.expect("at least three evaluations");
    let (lo, hi) = LOG10_RHO_BOUNDS;
    let on_edge = |v: f64| (v - lo).abs() < 1e-9 || (v - hi).abs() < 1e-9;
    Ok(SearchOutcome {
        best: best.fit,
        trace,
        boundary_warning: on_edge(point[0]) || on_edge(point[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(lu: f64, ls: f64) -> Result<Scored<(f64, f64)>> {
        let aic = 100.0 + (lu - 2.3).powi(2) + 3.0 * (ls + 0.7).powi(2);
        Ok(Scored {
            fit: (lu, ls),
            aic,
            ed: 1.0,
            converged: true,
        })
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let out = search(&RhoStrategy::default_numeric(), quadratic).unwrap();
        assert!((out.best.0 - 2.3).abs() < 0.05, "{:?}", out.best);
        assert!((out.best.1 + 0.7).abs() < 0.05, "{:?}", out.best);
        assert!(out.trace.len() <= 200);
        assert!(!out.boundary_warning);
    }

    #[test]
    fn grid_finds_lattice_minimum() {
        let out = search(&RhoStrategy::default_grid(), quadratic).unwrap();
        assert_eq!(out.best, (2.5, -0.5));
        assert_eq!(out.trace.len(), 17 * 17);
    }

    #[test]
    fn boundary_is_flagged() {
        let slope = |lu: f64, ls: f64| -> Result<Scored<()>> {
            Ok(Scored {
                fit: (),
                aic: 50.0 - lu + (ls - 1.0).powi(2),
                ed: 1.0,
                converged: true,
            })
        };
        let out = search(&RhoStrategy::default_numeric(), slope).unwrap();
        assert!(out.boundary_warning);
        let out = search(&RhoStrategy::default_grid(), slope).unwrap();
        assert!(out.boundary_warning);
    }

    #[test]
    fn evaluation_budget() {
        let opts = NelderMeadOptions {
            max_evals: 7,
            f_tol: 0.0,
            x_tol: 0.0,
            ..Default::default()
        };
        let out = search(&RhoStrategy::Numeric(opts), quadratic).unwrap();
        assert!(out.trace.len() <= 7);
    }
}
