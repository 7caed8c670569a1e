use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{dependent_columns, hstack};
use super::{EstimationError, Term, TermRole};
use crate::panel::{PanelDataset, Variable};

/// Which city dummies enter the design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CityDummies {
    None,
    /// Every city except the first label.
    DropFirst,
    /// Every city except the named one.
    DropBase(String),
    /// One dummy per city; redundant together with a constant.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    pub dependent: String,
    pub exogenous: Vec<String>,
    pub endogenous: Vec<String>,
    pub include_constant: bool,
    pub city_dummies: CityDummies,
    /// One dummy per month except the first.
    pub time_dummies: bool,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            dependent: Variable::Coach.column_name().into(),
            exogenous: [Variable::Diesel, Variable::Tire, Variable::Toll]
                .iter()
                .map(|v| v.column_name().to_string())
                .collect(),
            endogenous: vec![Variable::Airline.column_name().into()],
            include_constant: true,
            city_dummies: CityDummies::DropFirst,
            time_dummies: true,
        }
    }
}

/// Regression inputs with named columns. Rows of one group (city) must be in
/// time order; HAC weights are accumulated within groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub y: DVector<f64>,
    pub dependent: String,
    /// Included exogenous regressors (constant, shifters, dummies).
    pub exog: DMatrix<f64>,
    pub exog_terms: Vec<Term>,
    pub endog: DMatrix<f64>,
    pub endog_terms: Vec<Term>,
    pub groups: Vec<usize>,
    pub base_city: Option<String>,
}

impl Design {
    /// A plain design with generic names `x1, x2, ...` for the exogenous
    /// columns and `w1, ...` for the endogenous ones; each row is its own group.
    pub fn from_matrices(y: DVector<f64>, exog: DMatrix<f64>, endog: DMatrix<f64>) -> Self {
        let n = y.len();
        let exog_terms = (1..=exog.ncols())
            .map(|i| Term::new(format!("x{i}"), TermRole::Exogenous))
            .collect();
        let endog_terms = (1..=endog.ncols())
            .map(|i| Term::new(format!("w{i}"), TermRole::Endogenous))
            .collect();
        let endog = if endog.nrows() == 0 {
            DMatrix::zeros(n, 0)
        } else {
            endog
        };
        Self {
            y,
            dependent: "y".into(),
            exog,
            exog_terms,
            endog,
            endog_terms,
            groups: (0..n).collect(),
            base_city: None,
        }
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Self {
        self.groups = groups;
        self
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// All regressors: included exogenous then endogenous.
    pub fn regressors(&self) -> DMatrix<f64> {
        hstack(&[&self.exog, &self.endog])
    }

    pub fn terms(&self) -> Vec<Term> {
        self.exog_terms.iter().chain(&self.endog_terms).cloned().collect()
    }

    /// Treats every regressor as exogenous (for OLS on the same columns).
    pub fn all_exogenous(&self) -> Design {
        let mut terms = self.exog_terms.clone();
        terms.extend(self.endog_terms.iter().cloned());
        Design {
            y: self.y.clone(),
            dependent: self.dependent.clone(),
            exog: self.regressors(),
            exog_terms: terms,
            endog: DMatrix::zeros(self.n_obs(), 0),
            endog_terms: Vec::new(),
            groups: self.groups.clone(),
            base_city: self.base_city.clone(),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), EstimationError> {
        let n = self.y.len();
        let mismatch =
            |what: &str, rows: usize| EstimationError::DimensionMismatch(format!("{what} has {rows} rows, y has {n}"));
        if self.exog.nrows() != n {
            return Err(mismatch("exogenous block", self.exog.nrows()));
        }
        if self.endog.nrows() != n {
            return Err(mismatch("endogenous block", self.endog.nrows()));
        }
        if self.groups.len() != n {
            return Err(mismatch("group index", self.groups.len()));
        }
        if self.exog.ncols() != self.exog_terms.len() || self.endog.ncols() != self.endog_terms.len() {
            return Err(EstimationError::DimensionMismatch("one term name per column".into()));
        }
        if self.exog.ncols() + self.endog.ncols() == 0 {
            return Err(EstimationError::EmptyDesign);
        }
        Ok(())
    }
}

fn variable(name: &str) -> Result<Variable, EstimationError> {
    Variable::from_column_name(name).ok_or_else(|| EstimationError::UnknownColumn(name.to_string()))
}

pub fn build_design(panel: &PanelDataset, spec: &DesignSpec) -> Result<Design, EstimationError> {
    let dependent = variable(&spec.dependent)?;
    let exogenous = spec
        .exogenous
        .iter()
        .map(|c| variable(c))
        .collect::<Result<Vec<_>, _>>()?;
    let endogenous = spec
        .endogenous
        .iter()
        .map(|c| variable(c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = std::collections::HashSet::new();
    for v in std::iter::once(dependent)
        .chain(exogenous.iter().copied())
        .chain(endogenous.iter().copied())
    {
        if !seen.insert(v) {
            return Err(EstimationError::DuplicateColumn(v.column_name().into()));
        }
    }

    let n = panel.len();
    let cities = panel.city_ids();
    let base_city = match &spec.city_dummies {
        CityDummies::None | CityDummies::All => None,
        CityDummies::DropFirst => cities.first().cloned(),
        CityDummies::DropBase(b) => {
            if panel.city_position(b).is_none() {
                return Err(EstimationError::UnknownCity(b.clone()));
            }
            Some(b.clone())
        }
    };

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut terms = Vec::new();
    if spec.include_constant {
        columns.push(vec![1.0; n]);
        terms.push(Term::new("const", TermRole::Constant));
    }
    for &v in &exogenous {
        columns.push(panel.column(v));
        terms.push(Term::new(v.column_name(), TermRole::Exogenous));
    }
    if spec.city_dummies != CityDummies::None {
        for (c, label) in cities.iter().enumerate() {
            if Some(label) == base_city.as_ref() {
                continue;
            }
            columns.push((0..n).map(|r| f64::from(u8::from(panel.city_of_row(r) == c))).collect());
            terms.push(Term::new(format!("city[{label}]"), TermRole::CityDummy));
        }
    }
    if spec.time_dummies {
        for (t, label) in panel.time_ids().iter().enumerate().skip(1) {
            columns.push(
                (0..n)
                    .map(|r| f64::from(u8::from(panel.month_of_row(r) == t)))
                    .collect(),
            );
            terms.push(Term::new(format!("month[{label}]"), TermRole::TimeDummy));
        }
    }
    let exog = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    let endog = DMatrix::from_fn(n, endogenous.len(), |i, j| panel.rows()[i].get(endogenous[j]));
    let endog_terms = endogenous
        .iter()
        .map(|v| Term::new(v.column_name(), TermRole::Endogenous))
        .collect();
    let design = Design {
        y: DVector::from_vec(panel.column(dependent)),
        dependent: dependent.column_name().into(),
        exog,
        exog_terms: terms,
        endog,
        endog_terms,
        groups: (0..n).map(|r| panel.city_of_row(r)).collect(),
        base_city,
    };
    design.validate()?;
    let x = design.regressors();
    let dependent_cols = dependent_columns(&x);
    if !dependent_cols.is_empty() {
        let names = design.terms();
        return Err(EstimationError::RankDeficient {
            matrix: "design",
            columns: dependent_cols.into_iter().map(|j| names[j].name.clone()).collect(),
        });
    }
    Ok(design)
}

/// Two-way within transformation of a balanced, city-major column:
/// `x_jt - mean_j - mean_t + grand mean`.
pub fn within_transform(values: &[f64], n_cities: usize, n_months: usize) -> Vec<f64> {
    assert_eq!(values.len(), n_cities * n_months, "balanced city-major layout");
    let at = |j: usize, t: usize| values[j * n_months + t];
    let city_mean: Vec<f64> = (0..n_cities)
        .map(|j| (0..n_months).map(|t| at(j, t)).sum::<f64>() / n_months as f64)
        .collect();
    let time_mean: Vec<f64> = (0..n_months)
        .map(|t| (0..n_cities).map(|j| at(j, t)).sum::<f64>() / n_cities as f64)
        .collect();
    let grand = city_mean.iter().sum::<f64>() / n_cities as f64;
    let mut out = Vec::with_capacity(values.len());
    for j in 0..n_cities {
        for t in 0..n_months {
            out.push(at(j, t) - city_mean[j] - time_mean[t] + grand);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{generate_panel, DgpConfig};

    fn default_panel() -> PanelDataset {
        generate_panel(&DgpConfig::default(), 7, 75).unwrap()
    }

    #[test]
    fn seven_cities_give_six_dummies() {
        let p = default_panel();
        let d = build_design(&p, &DesignSpec::default()).unwrap();
        let city: Vec<_> = d.exog_terms.iter().filter(|t| t.role == TermRole::CityDummy).collect();
        assert_eq!(city.len(), 6);
        assert_eq!(d.base_city.as_deref(), Some("Belo Horizonte"));
        assert!(city.iter().all(|t| t.name != "city[Belo Horizonte]"));
        let time = d.exog_terms.iter().filter(|t| t.role == TermRole::TimeDummy).count();
        assert_eq!(time, 74);
        assert_eq!(d.exog.ncols(), 1 + 3 + 6 + 74);
        assert_eq!(d.endog.ncols(), 1);
    }

    #[test]
    fn minimal_two_by_three_design() {
        let p = generate_panel(&DgpConfig::default(), 2, 3).unwrap();
        let spec = DesignSpec {
            include_constant: false,
            time_dummies: false,
            ..DesignSpec::default()
        };
        let d = build_design(&p, &spec).unwrap();
        assert_eq!(d.exog.ncols(), 3 + 1);
        let dummy: Vec<f64> = d.exog.column(3).iter().copied().collect();
        assert_eq!(dummy, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(d.exog[(4, 0)], p.rows()[4].d_diesel);
        assert_eq!(d.y[5], p.rows()[5].d_coach);
    }

    #[test]
    fn redundant_dummy_set_is_rejected() {
        let p = default_panel();
        let spec = DesignSpec {
            city_dummies: CityDummies::All,
            time_dummies: false,
            ..DesignSpec::default()
        };
        let err = build_design(&p, &spec).unwrap_err();
        assert_eq!(
            err,
            EstimationError::RankDeficient {
                matrix: "design",
                columns: vec!["city[São Paulo]".into()]
            }
        );
        // Independent check: the full dummy set sums to the constant, and the
        // SVD rank of [const, dummies] is one short of its width.
        let n = p.len();
        let x = DMatrix::from_fn(n, 8, |i, j| if j == 0 || p.city_of_row(i) == j - 1 { 1.0 } else { 0.0 });
        let rank = x.clone().svd(false, false).rank(1e-9);
        assert_eq!(rank, 7);
        let sum: DVector<f64> = x.columns(1, 7).column_sum();
        assert!(sum.iter().all(|v| *v == 1.0));
        // Without a constant the full set is fine.
        let no_const = DesignSpec {
            include_constant: false,
            ..spec
        };
        assert!(build_design(&p, &no_const).is_ok());
    }

    #[test]
    fn invalid_design_options_are_errors() {
        let p = default_panel();
        let unknown = DesignSpec {
            exogenous: vec!["d_fuel".into()],
            ..DesignSpec::default()
        };
        assert_eq!(
            build_design(&p, &unknown),
            Err(EstimationError::UnknownColumn("d_fuel".into()))
        );
        let dup = DesignSpec {
            exogenous: vec!["d_diesel".into(), "d_airline".into()],
            ..DesignSpec::default()
        };
        assert_eq!(
            build_design(&p, &dup),
            Err(EstimationError::DuplicateColumn("d_airline".into()))
        );
        let base = DesignSpec {
            city_dummies: CityDummies::DropBase("Recife".into()),
            ..DesignSpec::default()
        };
        assert_eq!(
            build_design(&p, &base),
            Err(EstimationError::UnknownCity("Recife".into()))
        );
    }

    #[test]
    fn named_base_city_is_dropped() {
        let p = default_panel();
        let spec = DesignSpec {
            city_dummies: CityDummies::DropBase("Salvador".into()),
            ..DesignSpec::default()
        };
        let d = build_design(&p, &spec).unwrap();
        assert!(d.exog_terms.iter().any(|t| t.name == "city[Belo Horizonte]"));
        assert!(!d.exog_terms.iter().any(|t| t.name == "city[Salvador]"));
    }

    #[test]
    fn within_transform_removes_both_means() {
        let v: Vec<f64> = (0..12).map(|i| ((i * 37) % 11) as f64).collect();
        let w = within_transform(&v, 3, 4);
        for j in 0..3 {
            assert!((0..4).map(|t| w[j * 4 + t]).sum::<f64>().abs() < 1e-12);
        }
        for t in 0..4 {
            assert!((0..3).map(|j| w[j * 4 + t]).sum::<f64>().abs() < 1e-12);
        }
        // An additive two-way structure is annihilated.
        let add: Vec<f64> = (0..12).map(|i| (i / 4) as f64 * 2.0 + (i % 4) as f64 * -0.5).collect();
        assert!(within_transform(&add, 3, 4).iter().all(|x| x.abs() < 1e-12));
    }
}
