use serde_json::json;

use smoothhaz::{
    run_study, simulate_dataset, HazardSpec, ObservationScheme, RhoStrategy, SimConfig,
    StudySettings,
};

use crate::output::{Cell, Failure, OutDir, Status};
use crate::{SimulateArgs, Strategy};

fn scheme(a: &SimulateArgs) -> Result<ObservationScheme, Failure> {
    let mut scheme = ObservationScheme::parse(&a.scheme)?;
    match &mut scheme {
        ObservationScheme::A { s_max } => {
            if let Some(v) = a.s_max {
                *s_max = v;
            }
        }
        ObservationScheme::B { t_max } | ObservationScheme::C { t_max, .. } => {
            if let Some(v) = a.t_max {
                *t_max = v;
            }
        }
    }
    Ok(scheme)
}

pub fn simulate(a: &SimulateArgs, out: &mut OutDir) -> Result<Status, Failure> {
    let spec = HazardSpec::parse(&a.hm)?;
    let scheme = scheme(a)?;
    let config = SimConfig {
        n: a.n,
        replicates: a.replicates.unwrap_or(if a.study { 20 } else { 1 }),
        seed: a.seed,
        covariates: a.covariates,
        beta: [a.beta.0, a.beta.1],
        u_max: a.u_max,
    };
    if !a.study {
        for r in 0..config.replicates {
            let data = simulate_dataset(&config, &spec, &scheme, r as u64)?;
            out.records(
                &format!("replicate_{r:03}.csv"),
                &data.records,
                &data.covariate_names,
            )?;
        }
        return Ok(Status::Ok);
    }

    let settings = StudySettings {
        n_segments: a.nseg,
        orders: (a.pord, a.pord),
        bin_width: a.bin_width,
        strategy: match a.rho_strategy {
            Strategy::Grid => RhoStrategy::Grid {
                lo: a.rho_grid.lo,
                hi: a.rho_grid.hi,
                step: a.rho_grid.step,
            },
            Strategy::Numeric => RhoStrategy::default_numeric(),
        },
        eval_extent: a.eval_extent,
        ..StudySettings::default()
    };
    let m = run_study(&config, &spec, &scheme, &settings)?;
    let (lo, hi) = (2.0, a.eval_extent as f64 - 2.0);
    out.json(
        "study.json",
        &json!({
            "hazard": m.hazard,
            "scheme": m.scheme,
            "config": m.config,
            "replicates_fitted": m.replicates.len(),
            "failures": m.failures.iter().map(|(r, e)| json!({"replicate": r, "error": e})).collect::<Vec<_>>(),
            "interior": {"lo": lo, "hi": hi},
            "unbiased_fraction_2se": m.unbiased_fraction(lo, hi, 2.0),
            "mean_interior_rmse": m.mean_rmse(lo, hi),
            "beta": m.beta,
            "pooled_coverage": if m.beta.is_empty() { None } else { Some(m.pooled_coverage()) },
        }),
    )?;
    let (g, m) = (&m.grid, &m);
    let rows = (0..g.len()).flat_map(|k| {
        (0..g.len()).map(move |j| {
            vec![
                Cell::F(g[j]),
                Cell::F(g[k]),
                Cell::F(m.truth[[j, k]]),
                Cell::F(m.mean[[j, k]]),
                Cell::F(m.bias[[j, k]]),
                Cell::F(m.rmse[[j, k]]),
                Cell::F(m.mc_se[[j, k]]),
            ]
        })
    });
    out.csv(
        "study_surface.csv",
        &["u", "s", "truth", "mean", "bias", "rmse", "mc_se"],
        rows,
    )?;
    let rows = m.replicates.iter().map(|r| {
        let mut row = vec![
            Cell::F(r.replicate as f64),
            Cell::F(r.retained as f64),
            Cell::F(r.log10_rho.0),
            Cell::F(r.log10_rho.1),
            Cell::Flag(r.converged),
            Cell::Flag(r.boundary_warning),
        ];
        row.extend(r.beta.iter().chain(&r.se_beta).map(|&v| Cell::F(v)));
        row
    });
    let mut header = vec![
        "replicate",
        "retained",
        "log10_rho_u",
        "log10_rho_s",
        "converged",
        "boundary_warning",
    ];
    if config.covariates {
        header.extend(["beta_x1", "beta_x2", "se_x1", "se_x2"]);
    }
    out.csv("study_replicates.csv", &header, rows)?;
    Ok(if !m.failures.is_empty() {
        Status::PartialStudy
    } else if m.replicates.iter().any(|r| !r.converged) {
        Status::NotConverged
    } else {
        Status::Ok
    })
}
