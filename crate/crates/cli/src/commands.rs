use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use intermodal_core::econometrics::{
    build_design, gmm_two_step, ols, render_csv, render_text, two_stage_least_squares, EstimationResult, EstimatorKind,
    ReportDocument,
};
use intermodal_core::equilibrium::{
    comparative_statics_report, iterate_to_equilibrium, solve_closed_form, stability_product, EquilibriumResult,
    ShockKind,
};
use intermodal_core::instruments::{build_leave_one_out, Grouping};
use intermodal_core::model::{foc_residual, MarketEnv, Mode};
use intermodal_core::montecarlo::run_monte_carlo;
use intermodal_core::panel::{generate_panel, read_csv, write_csv, PanelDataset, Variable};
use serde::Serialize;

use crate::config::{DeflationSection, RunConfig};
use crate::error::CliError;

/// Where a command writes its files.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Output {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report types serialise");
        text.push('\n');
        self.write(name, &text)
    }
}

#[derive(Serialize)]
struct EquilibriumReport {
    stability_product: f64,
    closed_form: EquilibriumResult,
    iterative: EquilibriumResult,
    foc_residual_coach: f64,
    foc_residual_airline: f64,
}

pub fn cmd_equilibrium(cfg: &RunConfig, out: &Output) -> Result<String, CliError> {
    let sec = cfg.equilibrium()?;
    let env = MarketEnv::new(sec.income).map_err(|e| CliError::Config(e.to_string()))?;
    let product = stability_product(&sec.coach, &sec.airline);
    if product >= 1.0 {
        return Err(CliError::Solver(format!(
            "unstable reaction system: stability product s1*s2 = {product:.6} >= 1, \
             best-response iteration diverges and the interior equilibrium is not stable"
        )));
    }
    let closed = solve_closed_form(&sec.coach, &sec.airline, env)?;
    let iterative = iterate_to_equilibrium(&sec.coach, &sec.airline, env, &sec.iteration)?;
    if !iterative.converged {
        return Err(CliError::Solver(format!(
            "best-response iteration did not converge in {} sweeps (stability product {product:.6})",
            iterative.iterations
        )));
    }
    let foc = |mode| foc_residual(&sec.coach, &sec.airline, closed.prices, env, mode);
    let (foc1, foc2) = (
        foc(Mode::Coach).map_err(|e| CliError::Solver(e.to_string()))?,
        foc(Mode::Airline).map_err(|e| CliError::Solver(e.to_string()))?,
    );

    let mut text = String::new();
    let _ = writeln!(text, "Stability product s1*s2: {product:.12}");
    let _ = writeln!(text, "{:<28}{:>22}{:>22}", "", "coach", "airline");
    let _ = writeln!(
        text,
        "{:<28}{:>22.12}{:>22.12}",
        "Price (closed form)", closed.prices.p1, closed.prices.p2
    );
    let _ = writeln!(
        text,
        "{:<28}{:>22.12}{:>22.12}",
        "Price (iteration)", iterative.prices.p1, iterative.prices.p2
    );
    let _ = writeln!(
        text,
        "{:<28}{:>22.12}{:>22.12}",
        "Quantity", closed.quantities.q1, closed.quantities.q2
    );
    let _ = writeln!(text, "{:<28}{:>22.3e}{:>22.3e}", "FOC residual (relative)", foc1, foc2);
    let _ = writeln!(text, "Iteration converged in {} sweep(s).", iterative.iterations);
    out.write("equilibrium.txt", &text)?;
    out.write_json(
        "equilibrium.json",
        &EquilibriumReport {
            stability_product: product,
            closed_form: closed,
            iterative,
            foc_residual_coach: foc1,
            foc_residual_airline: foc2,
        },
    )?;
    Ok(text)
}

pub fn cmd_shock(cfg: &RunConfig, out: &Output) -> Result<String, CliError> {
    let sec = cfg.equilibrium()?;
    let scenarios = &cfg
        .shock
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [shock] section".into()))?
        .scenarios;
    let env = MarketEnv::new(sec.income).map_err(|e| CliError::Config(e.to_string()))?;
    let rows = comparative_statics_report(&sec.coach, &sec.airline, env, scenarios)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "scenario",
        "target",
        "kind",
        "old_coach",
        "old_airline",
        "new_coach",
        "new_airline",
        "pct_coach",
        "pct_airline",
        "status",
        "failure",
    ];
    w.write_record(header).expect("in-memory write");
    let mut text = String::new();
    let mut failures = 0;
    for (scenario, row) in scenarios.iter().zip(&rows) {
        let kind = match scenario.kind {
            ShockKind::Cost { .. } => "cost",
            ShockKind::Rivalry { .. } => "rivalry",
        };
        let target = serde_json::to_value(scenario.target)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let status = if row.failure.is_some() { "failed" } else { "ok" };
        failures += usize::from(row.failure.is_some());
        w.write_record([
            row.scenario.clone(),
            target,
            kind.to_string(),
            row.old_prices.p1.to_string(),
            row.old_prices.p2.to_string(),
            opt(row.new_prices.map(|p| p.p1)),
            opt(row.new_prices.map(|p| p.p2)),
            opt(row.pct_change.map(|c| c.0)),
            opt(row.pct_change.map(|c| c.1)),
            status.to_string(),
            row.failure.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
        match (row.pct_change, &row.failure) {
            (Some((c, a)), _) => {
                let _ = writeln!(text, "{:<24} coach {c:+.4}%  airline {a:+.4}%", row.scenario);
            }
            (None, Some(f)) => {
                let _ = writeln!(text, "{:<24} FAILED: {f}", row.scenario);
            }
            (None, None) => {}
        }
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8");
    let path = out.write("shocks.csv", &csv)?;
    let _ = writeln!(
        text,
        "{} scenario(s), {failures} failed; wrote {}",
        rows.len(),
        path.display()
    );
    Ok(text)
}

pub fn cmd_generate(cfg: &RunConfig, out: &Output) -> Result<String, CliError> {
    let g = &cfg.generate;
    let panel = generate_panel(&g.dgp, g.n_cities, g.n_months)?;
    let path = out.path(&g.file);
    write_csv(&panel, &path)?;
    Ok(format!(
        "wrote {} rows ({} cities x {} months, seed {}) to {}\n",
        panel.len(),
        panel.n_cities(),
        panel.n_months(),
        g.dgp.seed,
        path.display()
    ))
}

fn deflate(panel: &mut PanelDataset, sec: &DeflationSection, cfg: &RunConfig) -> Result<(), CliError> {
    let columns = sec
        .columns
        .iter()
        .map(|c| {
            Variable::from_column_name(c).ok_or_else(|| CliError::Config(format!("deflation: unknown column `{c}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let path = cfg.resolve(&sec.file);
    let data_err = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| data_err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| data_err(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| data_err(format!("missing column `{name}`")))
    };
    let (month_col, rate_col) = (find("month")?, find("inflation")?);
    let mut rates = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| data_err(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let month = record.get(month_col).unwrap_or("").trim().to_string();
        let raw = record.get(rate_col).unwrap_or("").trim();
        let rate: f64 = raw
            .parse()
            .map_err(|_| data_err(format!("line {line}, column `inflation`: non-numeric value `{raw}`")))?;
        rates.insert(month, rate);
    }
    if let Some(m) = panel.time_ids().iter().find(|m| !rates.contains_key(*m)) {
        return Err(data_err(format!("no inflation rate for month `{m}`")));
    }
    for var in columns {
        panel.map_column(var, |obs, v| v - rates[&obs.month]);
    }
    Ok(())
}

pub fn estimate_panel(cfg: &RunConfig, panel: &PanelDataset) -> Result<EstimationResult, CliError> {
    let est = &cfg.estimate;
    let design = build_design(panel, &est.design)?;
    if est.estimator == EstimatorKind::Ols {
        return Ok(ols(&design.all_exogenous())?);
    }
    let grouping = match &est.grouping {
        Some(g) => Grouping::new(g.clone())?,
        None => Grouping::halves(panel.city_ids()),
    };
    let z = build_leave_one_out(panel, &grouping)?.into_matrix();
    Ok(match est.estimator {
        EstimatorKind::Tsls => two_stage_least_squares(&design, &z)?,
        _ => gmm_two_step(&design, &z, est.gmm)?,
    })
}

pub fn cmd_estimate(cfg: &RunConfig, out: &Output) -> Result<String, CliError> {
    let path = match &cfg.estimate.panel {
        Some(p) => cfg.resolve(p),
        None => out.path(&cfg.generate.file),
    };
    let mut panel = read_csv(&path).map_err(|e| match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(sec) = &cfg.estimate.deflation {
        deflate(&mut panel, sec, cfg)?;
    }
    let result = estimate_panel(cfg, &panel)?;
    let text = render_text(&result);
    out.write("estimate.txt", &text)?;
    out.write("estimate.csv", &render_csv(&result))?;
    out.write_json("estimate.json", &ReportDocument::from(&result))?;
    Ok(text)
}

pub fn cmd_montecarlo(cfg: &RunConfig, out: &Output, threads: Option<usize>) -> Result<String, CliError> {
    let summary = run_monte_carlo(&cfg.montecarlo, threads)?;
    out.write("montecarlo_coefficients.csv", &summary.coefficients_csv())?;
    out.write("montecarlo_tests.csv", &summary.tests_csv())?;
    out.write_json("montecarlo.json", &summary)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{} replications, master seed {}, {} failed estimator run(s)",
        summary.replications,
        summary.master_seed,
        summary.failures.len()
    );
    let _ = writeln!(
        text,
        "{:<10}{:<12}{:>10}{:>10}{:>10}{:>10}",
        "estimator", "coefficient", "truth", "mean", "sd", "bias/se"
    );
    for c in summary.coefficients.iter().filter(|c| c.truth.is_some()) {
        let _ = writeln!(
            text,
            "{:<10}{:<12}{:>10.4}{:>10.4}{:>10.4}{:>10.2}",
            c.estimator.label(),
            c.name,
            c.truth.unwrap_or(f64::NAN),
            c.mean,
            c.sd,
            c.bias_z.unwrap_or(f64::NAN)
        );
    }
    for t in &summary.tests {
        let _ = writeln!(
            text,
            "{} {} rejection rate at {}: {:.3} ({}/{})",
            t.estimator.label(),
            t.test,
            t.level,
            t.rejection_rate,
            t.rejections,
            t.replications
        );
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn config(text: &str) -> RunConfig {
        RunConfig::from_str(text, Path::new(".")).unwrap()
    }

    const SYMMETRIC: &str = r#"
[equilibrium]
coach = { alpha = 1.3, beta_own = 2.2, beta_cross = 0.6, delta = 0.7, fixed_cost = 1.0, phi = 0.8 }
airline = { alpha = 1.3, beta_own = 2.2, beta_cross = 0.6, delta = 0.7, fixed_cost = 1.0, phi = 0.8 }
"#;

    #[test]
    fn symmetric_prices_print_identically() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output::new(dir.path().to_path_buf()).unwrap();
        let text = cmd_equilibrium(&config(SYMMETRIC), &out).unwrap();
        let line = text.lines().find(|l| l.starts_with("Price (closed form)")).unwrap();
        let cells: Vec<&str> = line.split_whitespace().skip(3).collect();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0], cells[1]);
        assert!(dir.path().join("equilibrium.json").exists());
    }

    #[test]
    fn unstable_system_is_a_solver_failure() {
        // beta_cross chosen so that s1 = s2 = sqrt(1.2).
        let b = 1.2f64.sqrt() * 3.0;
        let text = format!(
            "[equilibrium]\ncoach = {{ alpha = 1.0, beta_own = 2.0, beta_cross = {b}, delta = 0.5, fixed_cost = 1.0, phi = 1.0 }}\n\
             airline = {{ alpha = 1.0, beta_own = 2.0, beta_cross = {b}, delta = 0.5, fixed_cost = 1.0, phi = 1.0 }}\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let out = Output::new(dir.path().to_path_buf()).unwrap();
        let err = cmd_equilibrium(&config(&text), &out).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("stability product s1*s2 = 1.2"), "{err}");
    }

    #[test]
    fn deflation_subtracts_monthly_rates() {
        let dir = tempfile::tempdir().unwrap();
        let rates: String = std::iter::once("month,inflation\n".to_string())
            .chain((0..4).map(|i| format!("2000-0{},{}\n", i + 1, 0.5 * i as f64)))
            .collect();
        std::fs::write(dir.path().join("inflation.csv"), rates).unwrap();
        let mut cfg = RunConfig::from_str(
            "[estimate.deflation]\nfile = \"inflation.csv\"\ncolumns = [\"d_coach\"]\n",
            dir.path(),
        )
        .unwrap();
        cfg.generate.dgp.first_month = "2000-01".into();
        let panel = generate_panel(&cfg.generate.dgp, 2, 4).unwrap();
        let mut deflated = panel.clone();
        deflate(&mut deflated, cfg.estimate.deflation.as_ref().unwrap(), &cfg).unwrap();
        for (a, b) in panel.rows().iter().zip(deflated.rows()) {
            let t: usize = a.month[5..].parse::<usize>().unwrap() - 1;
            assert_eq!(b.d_coach, a.d_coach - 0.5 * t as f64);
            assert_eq!(b.d_airline, a.d_airline);
        }
        let short = generate_panel(&cfg.generate.dgp, 2, 5).unwrap();
        let err = deflate(&mut short.clone(), cfg.estimate.deflation.as_ref().unwrap(), &cfg).unwrap_err();
        assert!(err.to_string().contains("2000-05"), "{err}");
    }
}
