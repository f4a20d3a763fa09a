//! One function per subcommand. Each writes its report to `out` and returns
//! the process exit code.

use super::config::RunConfig;
use super::output::{Cell, Table};
use super::verify::{self, Perturbation, PoolGate};
use super::ExitCode;
use crate::disorder::{beta_schedule, initial_moment, BetaSchedule};
use crate::maps::{critical_constants, g_inverse, r_limit, r_limit_derivative, BranchingParams};
use crate::moments::{
    build_pm, gaussian_constant, iterate_moments, split_uv, structure_report, LimitTable, MomentSystem, MomentVector,
};
use crate::simulator::{empirical_moments, pool_evolve, write_pool_binary, write_pool_csv};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

fn critical(cfg: &RunConfig) -> Result<BranchingParams> {
    BranchingParams::critical(cfg.b)
}

pub fn constants(cfg: &RunConfig, out: &mut dyn Write) -> Result<ExitCode> {
    let c = critical_constants(critical(cfg)?);
    let mut t = Table::new(["b", "kappa", "eta", "m", "gaussian_constant"]);
    for m in (2..=cfg.m_max).step_by(2) {
        t.push(vec![cfg.b.into(), c.kappa.into(), c.eta.into(), m.into(), gaussian_constant(cfg.b, m)?.into()]);
    }
    t.write(cfg, out)?;
    Ok(ExitCode::Success)
}

/// Writes `p_b{b}_m{m}.json`, `u_...` and `v_...` under `dir` and a
/// structure summary to `out`.
pub fn pm(cfg: &RunConfig, out: &mut dyn Write) -> Result<ExitCode> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("pm_out"));
    fs::create_dir_all(&dir)?;
    let mut t = Table::new([
        "b",
        "m",
        "terms",
        "no_constant",
        "unique_linear",
        "nonnegative",
        "v_weights",
        "u_weights",
        "v_scaling",
        "degree",
        "claimed_degree",
    ]);
    for m in 2..=cfg.m_max {
        let pm = build_pm(cfg.b, m)?;
        write_json(&dir.join(format!("p_b{}_m{m}.json", cfg.b)), &pm.to_record(cfg.b, m))?;
        if m >= 3 {
            let (u, v) = split_uv(&pm, cfg.b, m)?;
            write_json(&dir.join(format!("u_b{}_m{m}.json", cfg.b)), &u.to_record(cfg.b, m))?;
            write_json(&dir.join(format!("v_b{}_m{m}.json", cfg.b)), &v.to_record(cfg.b, m))?;
        }
        let rep = structure_report(cfg.b, m)?;
        t.push(vec![
            cfg.b.into(),
            m.into(),
            (rep.terms as u64).into(),
            rep.no_constant.into(),
            rep.unique_linear.into(),
            rep.nonnegative.into(),
            rep.v_weights.into(),
            rep.u_weights.into(),
            rep.v_scaling.into(),
            rep.degree.into(),
            rep.claimed_degree.into(),
        ]);
    }
    t.write(cfg, out)?;
    Ok(ExitCode::Success)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `R_b(r)` by the ladder and by `G_b^{-1}(-r)` on the r grid.
pub fn maps(cfg: &RunConfig, out: &mut dyn Write) -> Result<ExitCode> {
    let params = critical(cfg)?;
    let mut t = Table::new([
        "r",
        "r_limit",
        "residual",
        "converged_n",
        "g_inverse",
        "route_difference",
        "derivative",
        "asymptote",
        "error",
    ]);
    let mut code = ExitCode::Success;
    for r in cfg.r_grid() {
        let abel = g_inverse(params, -r).ok();
        let asym = (r < 0.0).then(|| verify::variance_asymptote(cfg.b, r));
        match r_limit(params, r, &cfg.policy) {
            Ok(est) => {
                let deriv = r_limit_derivative(params, r, &cfg.policy).ok();
                t.push(vec![
                    r.into(),
                    est.value.into(),
                    est.residual.into(),
                    est.converged_n.into(),
                    abel.into(),
                    abel.map(|g| (g - est.value).abs()).into(),
                    deriv.into(),
                    asym.into(),
                    Cell::Empty,
                ]);
            }
            Err(e) => {
                code = code.max(ExitCode::from_error(&e));
                t.push(vec![
                    r.into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    abel.into(),
                    Cell::Empty,
                    Cell::Empty,
                    asym.into(),
                    e.to_string().into(),
                ]);
            }
        }
    }
    t.write(cfg, out)?;
    Ok(code)
}

/// One row per r with `R^(2..=m_max)`, residuals, the shift-equation
/// residual against the row at `r + 1` (when on the grid) and the scaled
/// columns `|r|^{ceil(m/2)} R^(m)`.
pub fn limits(cfg: &RunConfig, out: &mut dyn Write) -> Result<ExitCode> {
    let grid = cfg.r_grid();
    let (table, failures) = LimitTable::compute(cfg.b, cfg.m_max, &cfg.model, &grid, &cfg.policy);
    let sys = MomentSystem::<f64>::new(cfg.b, cfg.m_max)?;
    let ms: Vec<u32> = (2..=cfg.m_max).collect();
    let mut columns = vec!["r".to_string()];
    columns.extend(ms.iter().map(|m| format!("R{m}")));
    columns.extend(ms.iter().map(|m| format!("residual{m}")));
    columns.extend(["converged_n", "converged", "shift_residual"].map(String::from));
    columns.extend(ms.iter().map(|m| format!("scaled{m}")));
    columns.push("error".into());
    let mut t = Table::new(columns);
    let errors: BTreeMap<u64, String> = failures.iter().map(|(r, e)| (r.to_bits(), e.to_string())).collect();
    let mut code = failures.iter().map(|(_, e)| ExitCode::from_error(e)).max().unwrap_or(ExitCode::Success);
    let width = 2 * ms.len() + 4 + ms.len();
    for r in grid {
        let mut cells: Vec<Cell> = vec![r.into()];
        match table.row(r) {
            Some(row) => {
                if !row.converged {
                    code = code.max(ExitCode::NotConverged);
                }
                let shift = table.row(r + 1.0).map(|next| {
                    sys.step(&row.values)
                        .iter()
                        .zip(&next.values)
                        .map(|(a, c)| (a - c).abs() / c.abs().max(1.0))
                        .fold(0.0, f64::max)
                });
                cells.extend(row.values.iter().map(|&v| Cell::from(v)));
                cells.extend(row.residuals.iter().map(|&v| Cell::from(v)));
                cells.extend([row.converged_n.into(), row.converged.into(), shift.into()]);
                cells.extend(ms.iter().map(|&m| Cell::from(r.abs().powi(m.div_ceil(2) as i32) * row.get(m))));
                cells.push(Cell::Empty);
            }
            None => {
                cells.extend((0..width).map(|_| Cell::Empty));
                cells.push(errors.get(&r.to_bits()).cloned().unwrap_or_default().into());
            }
        }
        t.push(cells);
    }
    t.write(cfg, out)?;
    Ok(code)
}

/// Pool Monte Carlo against the exact recursion at 4 standard errors. The
/// inverse temperature is `beta` from the config, else the schedule at
/// `(n = generations, r = mc_r)`.
pub fn mc(cfg: &RunConfig, pool_out: Option<&Path>, out: &mut dyn Write) -> Result<ExitCode> {
    critical(cfg)?;
    let n = u64::from(cfg.generations);
    let beta = match cfg.beta {
        Some(beta) => beta,
        None => beta_schedule(&BetaSchedule::new(cfg.b, cfg.model, cfg.mc_r)?, n.max(2))?,
    };
    let init: Vec<f64> = (2..=cfg.m_max).map(|m| initial_moment(&cfg.model, beta, m)).collect::<Result<_>>()?;
    let exact = iterate_moments(cfg.b, cfg.m_max, &MomentVector::new(init)?, n)?;
    let pool = pool_evolve(cfg.b, &cfg.model, beta, cfg.generations, cfg.pool_size, cfg.seed)?;
    if let Some(path) = pool_out {
        let file = std::io::BufWriter::new(fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "bin") {
            write_pool_binary(&pool, file)?;
        } else {
            write_pool_csv(&pool, file)?;
        }
    }
    let emp = empirical_moments(&pool.samples, cfg.m_max)?;
    let mut t = Table::new(["quantity", "beta", "exact", "empirical", "std_error", "z_score", "gated", "pass"]);
    let mut all = true;
    let mut row = |name: String, exact: f64, est: f64, se: f64, gated: bool| {
        let z = if se > 0.0 { (est - exact).abs() / se } else if est == exact { 0.0 } else { f64::INFINITY };
        let pass = z <= 4.0;
        if gated {
            all &= pass;
        }
        vec![name.into(), beta.into(), exact.into(), est.into(), se.into(), z.into(), gated.into(), pass.into()]
    };
    let mut rows = Vec::new();
    let first = pool.history.first().map_or(1.0, |h| h.mean);
    let first_se = pool.history.first().map_or(0.0, |h| h.mean_se);
    rows.push(row("mean_generation_0".into(), 1.0, first, first_se, true));
    for m in 2..=cfg.m_max {
        let (v, se) = emp.get(m);
        rows.push(row(format!("rho{m}"), exact.get(m), v, se, m <= 3));
    }
    for r in rows {
        t.push(r);
    }
    t.write(cfg, out)?;
    Ok(if all { ExitCode::Success } else { ExitCode::VerifyFailed })
}

/// Runs the verification suite and writes the per-check JSON report.
pub fn verify(cfg: &RunConfig, perturb: Option<&Perturbation>, out: &mut dyn Write) -> Result<ExitCode> {
    let gate = PoolGate { seed: cfg.seed, ..PoolGate::default() };
    let checks = verify::run_suite(perturb, gate);
    let report = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": cfg.hash(),
        "passed": checks.iter().filter(|c| c.pass).count(),
        "failed": checks.iter().filter(|c| !c.pass).count(),
        "checks": checks,
    });
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out)?;
    for c in &checks {
        eprintln!("{}", c.line());
    }
    Ok(if checks.iter().all(|c| c.pass) { ExitCode::Success } else { ExitCode::VerifyFailed })
}

impl ExitCode {
    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParams(_) | Error::Domain(_) | Error::CapExceeded(_) => ExitCode::Config,
            Error::NotConverged { .. } | Error::Overflow { .. } | Error::SeriesDiverged { .. } => ExitCode::NotConverged,
            Error::BudgetExceeded { .. } => ExitCode::Budget,
            _ => ExitCode::Failure,
        }
    }
}
