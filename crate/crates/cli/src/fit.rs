use serde_json::json;

use smoothhaz::fit2d::midpoint_coordinates;
use smoothhaz::lexis::{bin_1d, bin_2d, read_records_path, BinAxis, BinGrid, RecordTable};
use smoothhaz::{
    fit_1d, fit_2d, fit_ph, predict_1d, predict_2d, predict_ph, select_rho_1d, select_rho_2d,
    select_rho_ph, IwlsControl, KnotGrid, Penalty2D, RhoEvaluation, RhoStrategy,
};

use crate::output::{Cell, Failure, OutDir, Status};
use crate::{Fit1dArgs, Fit2dArgs, FitPhArgs, RhoArgs, Strategy, SurfaceArgs};

fn status(converged: bool) -> Status {
    if converged {
        Status::Ok
    } else {
        Status::NotConverged
    }
}

fn control(max_iter: usize) -> IwlsControl {
    IwlsControl {
        max_iter,
        ..IwlsControl::default()
    }
}

pub fn fit1d(a: &Fit1dArgs, out: &mut OutDir) -> Result<Status, Failure> {
    let table = read_records_path(&a.input)?;
    let axis = BinAxis::covering(0.0, a.bin_width_s, table.max_exit())?;
    let data = bin_1d(&table.records, &axis)?;
    let knots = KnotGrid::new(0.0, axis.end(), a.nseg_s, a.degree)?;
    let control = control(a.max_iter);
    let (fit, profile, boundary_warning) = match a.rho {
        Some(rho) => (
            fit_1d(&data, knots, a.pord_s, rho, &control)?,
            Vec::new(),
            false,
        ),
        None => {
            let sel = select_rho_1d(&data, knots, a.pord_s, &a.rho_grid.points(), &control)?;
            (sel.best, sel.profile, sel.boundary_warning)
        }
    };
    let pred = predict_1d(&fit, &axis.midpoints())?;
    out.json(
        "summary.json",
        &json!({
            "aic": fit.aic,
            "deviance": fit.deviance,
            "ed": fit.ed,
            "rho": fit.rho,
            "log10_rho": fit.rho.log10(),
            "converged": fit.converged,
            "iterations": fit.iterations,
            "n_coefficients": fit.n_coefficients(),
            "n_bins": axis.count,
            "bin_width": axis.width,
            "boundary_warning": boundary_warning,
            "aic_profile": profile,
        }),
    )?;
    let rows = (0..pred.times.len()).map(|i| {
        vec![
            Cell::F(pred.times[i]),
            Cell::F(pred.eta[i]),
            Cell::F(pred.lambda[i]),
            Cell::F(pred.se_eta[i]),
            Cell::F(pred.lower[i]),
            Cell::F(pred.upper[i]),
        ]
    });
    out.csv(
        "hazard.csv",
        &["time", "eta", "lambda", "se_eta", "lambda_lo", "lambda_hi"],
        rows,
    )?;
    Ok(status(fit.converged))
}

struct Prepared {
    table: RecordTable,
    grid: BinGrid,
    knots: (KnotGrid, KnotGrid),
    orders: (usize, usize),
    control: IwlsControl,
}

fn prepare(a: &SurfaceArgs) -> Result<Prepared, Failure> {
    let table = read_records_path(&a.input)?;
    let grid = table.covering_grid(a.bin_width_u, a.bin_width_s)?;
    let knots = (
        KnotGrid::new(0.0, grid.u.end(), a.nseg_u, a.degree)?,
        KnotGrid::new(0.0, grid.s.end(), a.nseg_s, a.degree)?,
    );
    Ok(Prepared {
        table,
        grid,
        knots,
        orders: (a.pord_u, a.pord_s),
        control: control(a.max_iter),
    })
}

fn fixed_penalty(rho: &RhoArgs, orders: (usize, usize)) -> Result<Option<Penalty2D>, Failure> {
    match (rho.rho_u, rho.rho_s) {
        (Some(u), Some(s)) => Ok(Some(Penalty2D::new(u, s, orders.0, orders.1)?)),
        _ => Ok(None),
    }
}

fn strategy(rho: &RhoArgs) -> RhoStrategy {
    match rho.rho_strategy {
        Strategy::Grid => RhoStrategy::Grid {
            lo: rho.rho_grid.lo,
            hi: rho.rho_grid.hi,
            step: rho.rho_grid.step,
        },
        Strategy::Numeric => RhoStrategy::numeric_from(rho.rho_start),
    }
}

struct Surface {
    u: Vec<f64>,
    s: Vec<f64>,
    eta: Vec<f64>,
    lambda: Vec<f64>,
    se_eta: Vec<f64>,
    extrapolated: Vec<bool>,
}

fn write_surface(out: &mut OutDir, sf: &Surface) -> Result<(), Failure> {
    let rows = (0..sf.u.len()).map(|i| {
        vec![
            Cell::F(sf.u[i]),
            Cell::F(sf.s[i]),
            Cell::F(sf.u[i] + sf.s[i]),
            Cell::F(sf.eta[i]),
            Cell::F(sf.lambda[i]),
            Cell::F(sf.se_eta[i]),
            Cell::Flag(sf.extrapolated[i]),
        ]
    });
    out.csv(
        "surface.csv",
        &["u", "s", "t", "eta", "lambda", "se_eta", "extrapolated"],
        rows,
    )
}

fn penalty_json(p: &Penalty2D) -> serde_json::Value {
    json!({
        "rho_u": p.rho_u,
        "rho_s": p.rho_s,
        "log10_rho_u": p.rho_u.log10(),
        "log10_rho_s": p.rho_s.log10(),
    })
}

fn grid_json(grid: &BinGrid) -> serde_json::Value {
    json!({
        "n_u": grid.u.count,
        "n_s": grid.s.count,
        "bin_width_u": grid.u.width,
        "bin_width_s": grid.s.width,
    })
}

pub fn fit2d(a: &Fit2dArgs, out: &mut OutDir) -> Result<Status, Failure> {
    let a = &a.surface;
    let prep = prepare(a)?;
    let data = bin_2d(&prep.table.records, &prep.grid)?;
    let (fit, trace, boundary_warning): (_, Vec<RhoEvaluation>, _) =
        match fixed_penalty(&a.rho, prep.orders)? {
            Some(pen) => (
                fit_2d(&data, prep.knots, &pen, &prep.control)?,
                Vec::new(),
                false,
            ),
            None => {
                let sel = select_rho_2d(
                    &data,
                    prep.knots,
                    prep.orders,
                    &strategy(&a.rho),
                    &prep.control,
                    true,
                )?;
                (sel.best, sel.trace, sel.boundary_warning)
            }
        };
    let pred = predict_2d(&fit, &midpoint_coordinates(&prep.grid))?;
    out.json(
        "summary.json",
        &json!({
            "aic": fit.aic,
            "deviance": fit.deviance,
            "ed": fit.ed,
            "penalty": penalty_json(&fit.penalty),
            "converged": fit.converged,
            "iterations": fit.iterations,
            "n_coefficients": fit.coef.len(),
            "grid": grid_json(&prep.grid),
            "boundary_warning": boundary_warning,
            "rho_trace": trace,
        }),
    )?;
    write_surface(
        out,
        &Surface {
            u: pred.u,
            s: pred.s,
            eta: pred.eta.to_vec(),
            lambda: pred.lambda.to_vec(),
            se_eta: pred.se_eta.to_vec(),
            extrapolated: pred.extrapolated,
        },
    )?;
    Ok(status(fit.converged))
}

pub fn fitph(a: &FitPhArgs, out: &mut OutDir) -> Result<Status, Failure> {
    let prep = prepare(&a.surface)?;
    let mut data = prep.table.bin_individuals(&prep.grid)?;
    if let Some(names) = &a.covariates {
        let columns = names
            .iter()
            .filter(|n| !n.is_empty())
            .map(|n| {
                data.covariate_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| {
                        Failure::Usage(format!(
                            "unknown covariate {n:?}; the input has {}",
                            data.covariate_names.join(", ")
                        ))
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        data = data.select_covariates(&columns);
    }
    let (fit, trace, boundary_warning): (_, Vec<RhoEvaluation>, _) =
        match fixed_penalty(&a.surface.rho, prep.orders)? {
            Some(pen) => (
                fit_ph(&data, prep.knots, &pen, &prep.control)?,
                Vec::new(),
                false,
            ),
            None => {
                let sel = select_rho_ph(
                    &data,
                    prep.knots,
                    prep.orders,
                    &strategy(&a.surface.rho),
                    &prep.control,
                    true,
                )?;
                (sel.best, sel.trace, sel.boundary_warning)
            }
        };
    let baseline = vec![0.0; fit.beta.len()];
    let pred = predict_ph(&fit, &midpoint_coordinates(&prep.grid), &baseline)?;
    out.json(
        "summary.json",
        &json!({
            "aic": fit.aic,
            "deviance": fit.deviance,
            "ed_total": fit.ed_total,
            "ed_baseline": fit.ed_baseline,
            "penalty": penalty_json(&fit.penalty),
            "converged": fit.converged,
            "iterations": fit.iterations,
            "n_coefficients": fit.n_coefficients(),
            "n_individuals": data.n_individuals(),
            "covariates": fit.covariate_names,
            "grid": grid_json(&prep.grid),
            "boundary_warning": boundary_warning,
            "rho_trace": trace,
        }),
    )?;
    write_surface(
        out,
        &Surface {
            u: pred.u,
            s: pred.s,
            eta: pred.eta.to_vec(),
            lambda: pred.lambda.to_vec(),
            se_eta: pred.se_eta.to_vec(),
            extrapolated: pred.extrapolated,
        },
    )?;
    let rows = (0..fit.beta.len()).map(|v| {
        vec![
            Cell::S(fit.covariate_names[v].clone()),
            Cell::F(fit.beta[v]),
            Cell::F(fit.se_beta[v]),
            Cell::F(fit.beta[v].exp()),
        ]
    });
    out.csv("beta.csv", &["name", "beta", "se", "hazard_ratio"], rows)?;
    Ok(status(fit.converged))
}
