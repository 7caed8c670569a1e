use std::fmt::Write as _;

use serde::Serialize;

use super::estimate::{normal_p_value, AndersonTest, ChiSquareTest, EstimationResult, FTest};
use super::{EstimatorKind, TermRole};

const DAGGER: &str = "‡";
const LEVEL: f64 = 0.01;
const LABEL_WIDTH: usize = 26;

/// `‡` when the two-sided normal p-value is below 1%, else empty.
pub fn significance_marker(estimate: f64, std_error: f64) -> &'static str {
    if normal_p_value(estimate, std_error) < LEVEL {
        DAGGER
    } else {
        ""
    }
}

fn fixed3(v: f64) -> String {
    if v.is_nan() {
        return "n/a".into();
    }
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// `estimate[‡] (se)` with three decimals, e.g. `0.311‡ (0.105)`.
pub fn format_cell(estimate: f64, std_error: f64) -> String {
    format!(
        "{}{} ({})",
        fixed3(estimate),
        significance_marker(estimate, std_error),
        fixed3(std_error)
    )
}

fn stat_cell(statistic: f64, p_value: f64) -> String {
    let mark = if p_value < LEVEL { DAGGER } else { "" };
    format!("{}{mark}", fixed3(statistic))
}

fn term_label(name: &str, role: TermRole) -> String {
    match role {
        TermRole::Constant => "Constant".into(),
        TermRole::CityDummy | TermRole::TimeDummy => name
            .split_once('[')
            .and_then(|(_, rest)| rest.strip_suffix(']'))
            .unwrap_or(name)
            .to_string(),
        TermRole::Exogenous | TermRole::Endogenous => match name.strip_prefix("d_") {
            Some(rest) => format!("Δ{rest}"),
            None => name.to_string(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub label: String,
    pub role: TermRole,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub significant_1pct: bool,
}

/// Machine-readable form of an estimation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub estimator: EstimatorKind,
    pub dependent: String,
    pub n_obs: usize,
    pub n_params: usize,
    pub base_city: Option<String>,
    pub coefficients: Vec<CoefficientRow>,
    pub time_effects_omitted: usize,
    pub r2: f64,
    pub adj_r2: f64,
    pub mse: f64,
    pub f_test: Option<FTest>,
    pub anderson: Option<AndersonTest>,
    pub hansen_j: Option<ChiSquareTest>,
    pub first_stage_f: Vec<f64>,
    pub instruments: Vec<String>,
    pub hac_lags: Option<usize>,
}

impl From<&EstimationResult> for ReportDocument {
    fn from(r: &EstimationResult) -> Self {
        let coefficients = r
            .terms
            .iter()
            .enumerate()
            .filter(|(_, t)| t.role != TermRole::TimeDummy)
            .map(|(i, t)| {
                let p = r.p_value(i);
                CoefficientRow {
                    name: t.name.clone(),
                    label: term_label(&t.name, t.role),
                    role: t.role,
                    estimate: r.coefficients[i],
                    std_error: r.std_errors[i],
                    z: r.z_stat(i),
                    p_value: p,
                    significant_1pct: p < LEVEL,
                }
            })
            .collect();
        Self {
            estimator: r.kind,
            dependent: r.dependent.clone(),
            n_obs: r.n_obs,
            n_params: r.n_params,
            base_city: r.base_city.clone(),
            coefficients,
            time_effects_omitted: r.terms.iter().filter(|t| t.role == TermRole::TimeDummy).count(),
            r2: r.r2,
            adj_r2: r.adj_r2,
            mse: r.mse,
            f_test: r.f_test,
            anderson: r.anderson,
            hansen_j: r.hansen_j,
            first_stage_f: r.first_stage_f.clone(),
            instruments: r.instruments.clone(),
            hac_lags: r.hac_lags,
        }
    }
}

fn ordered_rows(doc: &ReportDocument) -> Vec<&CoefficientRow> {
    let rank = |role: TermRole| match role {
        TermRole::Constant => 0,
        TermRole::Exogenous => 1,
        TermRole::Endogenous => 2,
        TermRole::CityDummy => 3,
        TermRole::TimeDummy => 4,
    };
    let mut rows: Vec<&CoefficientRow> = doc.coefficients.iter().collect();
    rows.sort_by_key(|r| rank(r.role));
    rows
}

/// Plain-text table: coefficient rows (constant, exogenous regressors,
/// endogenous regressors, city dummies) then the statistics footer. Time
/// effects are estimated but not listed.
pub fn render_text(result: &EstimationResult) -> String {
    let doc = ReportDocument::from(result);
    let mut out = String::new();
    let rule = "-".repeat(LABEL_WIDTH + 22);
    let estimator = match (doc.estimator, doc.hac_lags) {
        (EstimatorKind::Gmm2Step, Some(l)) => format!("{} (Bartlett HAC, {l} lag(s))", doc.estimator.description()),
        (k, _) => k.description().to_string(),
    };
    let _ = writeln!(
        out,
        "Dependent variable: {}",
        term_label(&doc.dependent, TermRole::Exogenous)
    );
    let _ = writeln!(out, "Estimator: {estimator}");
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "{:<w$}Estimate (s.e.)", "Variable", w = LABEL_WIDTH);
    let _ = writeln!(out, "{rule}");
    let mut in_dummies = false;
    for row in ordered_rows(&doc) {
        if row.role == TermRole::CityDummy && !in_dummies {
            in_dummies = true;
            let base = doc.base_city.as_deref().unwrap_or("none");
            let _ = writeln!(out, "City dummies (base: {base})");
        }
        let label = if row.role == TermRole::CityDummy {
            format!("  {}", row.label)
        } else {
            row.label.clone()
        };
        let _ = writeln!(out, "{}{}", pad(&label), format_cell(row.estimate, row.std_error));
    }
    let _ = writeln!(out, "{rule}");
    let na = || "n/a".to_string();
    let footer = [
        ("Adjusted R²", fixed3(doc.adj_r2)),
        ("MSE", fixed3(doc.mse)),
        (
            "F statistic",
            doc.f_test.map_or_else(na, |f| stat_cell(f.statistic, f.p_value)),
        ),
        (
            "Anderson statistic",
            doc.anderson.map_or_else(na, |a| stat_cell(a.statistic, a.p_value)),
        ),
        (
            "Hansen J statistic",
            doc.hansen_j.map_or_else(na, |j| stat_cell(j.statistic, j.p_value)),
        ),
        ("Observations", doc.n_obs.to_string()),
    ];
    for (label, value) in footer {
        let _ = writeln!(out, "{}{value}", pad(label));
    }
    let _ = writeln!(out, "{rule}");
    let _ = write!(out, "{DAGGER} Significant at 1% level. Standard errors in parentheses.");
    if doc.time_effects_omitted > 0 {
        let _ = write!(out, " Estimated time effects ({}) omitted.", doc.time_effects_omitted);
    }
    out.push('\n');
    out
}

fn pad(label: &str) -> String {
    let width = label.chars().count();
    format!("{label}{}", " ".repeat(LABEL_WIDTH.saturating_sub(width).max(1)))
}

/// Shortest round-trip text for a float, switching to exponent notation for
/// very small or very large magnitudes.
pub(crate) fn csv_float(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// CSV form: one row per listed coefficient, then one per footer statistic.
pub fn render_csv(result: &EstimationResult) -> String {
    let doc = ReportDocument::from(result);
    let mut w = csv::Writer::from_writer(Vec::new());
    let num = csv_float;
    let opt = |v: Option<f64>| v.map(csv_float).unwrap_or_default();
    w.write_record(["row", "label", "estimate", "std_error", "p_value", "significant_1pct"])
        .expect("in-memory write");
    for row in ordered_rows(&doc) {
        w.write_record([
            row.name.clone(),
            row.label.clone(),
            num(row.estimate),
            num(row.std_error),
            num(row.p_value),
            row.significant_1pct.to_string(),
        ])
        .expect("in-memory write");
    }
    let stats: [(&str, &str, Option<f64>, Option<f64>); 6] = [
        ("adj_r2", "Adjusted R²", Some(doc.adj_r2), None),
        ("mse", "MSE", Some(doc.mse), None),
        (
            "f",
            "F statistic",
            doc.f_test.map(|f| f.statistic),
            doc.f_test.map(|f| f.p_value),
        ),
        (
            "anderson",
            "Anderson statistic",
            doc.anderson.map(|a| a.statistic),
            doc.anderson.map(|a| a.p_value),
        ),
        (
            "hansen_j",
            "Hansen J statistic",
            doc.hansen_j.map(|j| j.statistic),
            doc.hansen_j.map(|j| j.p_value),
        ),
        ("n", "Observations", Some(doc.n_obs as f64), None),
    ];
    for (name, label, value, p) in stats {
        let sig = p.map(|p| (p < LEVEL).to_string()).unwrap_or_default();
        w.write_record([
            name.to_string(),
            label.to_string(),
            opt(value),
            String::new(),
            opt(p),
            sig,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 labels")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::{Term, TermRole};
    use nalgebra::DMatrix;

    fn result_with(terms: Vec<Term>, coef: Vec<f64>, se: Vec<f64>) -> EstimationResult {
        let k = terms.len();
        EstimationResult {
            kind: EstimatorKind::Gmm2Step,
            dependent: "d_coach".into(),
            terms,
            coefficients: coef,
            std_errors: se,
            covariance: DMatrix::zeros(k, k),
            residuals: Vec::new(),
            n_obs: 525,
            n_params: k,
            r2: 0.84,
            adj_r2: 0.833,
            mse: 1.345,
            f_test: None,
            hansen_j: Some(ChiSquareTest::new(1.39, 1)),
            anderson: None,
            first_stage_f: Vec::new(),
            instruments: Vec::new(),
            hac_lags: Some(1),
            base_city: Some("Belo Horizonte".into()),
        }
    }

    #[test]
    fn worked_cell() {
        assert_eq!(format_cell(0.311, 0.105), "0.311‡ (0.105)");
        // |t| = 2.0 is below the 1% critical value.
        assert_eq!(format_cell(0.21, 0.105), "0.210 (0.105)");
        assert_eq!(format_cell(-0.0001, 0.2), "0.000 (0.200)");
    }

    #[test]
    fn zero_result_has_no_daggers() {
        let terms = vec![
            Term::new("const", TermRole::Constant),
            Term::new("d_diesel", TermRole::Exogenous),
            Term::new("d_airline", TermRole::Endogenous),
        ];
        let mut r = result_with(terms, vec![0.0; 3], vec![0.0; 3]);
        r.hansen_j = None;
        let text = render_text(&r);
        assert!(text.contains("Constant                  0.000 (0.000)"), "{text}");
        assert_eq!(text.matches(DAGGER).count(), 1, "only the footnote carries the mark");
    }

    #[test]
    fn rows_follow_table_order_and_skip_time_effects() {
        let terms = vec![
            Term::new("const", TermRole::Constant),
            Term::new("d_diesel", TermRole::Exogenous),
            Term::new("city[Curitiba]", TermRole::CityDummy),
            Term::new("month[1999-10]", TermRole::TimeDummy),
            Term::new("d_airline", TermRole::Endogenous),
        ];
        let r = result_with(
            terms,
            vec![3.186, 0.267, 0.5, 0.1, 0.311],
            vec![0.5, 0.05, 0.4, 0.1, 0.105],
        );
        let text = render_text(&r);
        let order: Vec<usize> = [
            "Constant",
            "Δdiesel",
            "Δairline",
            "  Curitiba",
            "Adjusted R²",
            "Hansen J",
        ]
        .iter()
        .map(|s| text.find(s).unwrap_or_else(|| panic!("{s} missing in\n{text}")))
        .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        assert!(!text.contains("1999-10"));
        assert!(text.contains("Δairline                  0.311‡ (0.105)"));
        assert!(text.contains("Hansen J statistic        1.390\n"));
        assert!(text.contains("Anderson statistic        n/a"));
        assert!(text.contains("time effects (1) omitted"));
        let csv = render_csv(&r);
        assert_eq!(csv.lines().count(), 1 + 4 + 6);
        assert!(csv
            .lines()
            .nth(3)
            .unwrap()
            .starts_with("d_airline,Δairline,0.311,0.105,"));
    }
}
