use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use super::design::Design;
use super::linalg::{dependent_columns, hstack, least_squares, min_eigenvalue, project, residualize, symmetrize};
use super::{EstimationError, EstimatorKind, Term, TermRole};

/// `1 - r^2` is floored here in the Anderson statistic, so perfect
/// correlation gives a large finite value instead of infinity.
pub const ANDERSON_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn new(statistic: f64, df: usize) -> Self {
        let p_value = if df == 0 {
            1.0
        } else {
            ChiSquared::new(df as f64)
                .map(|d| d.sf(statistic.max(0.0)))
                .unwrap_or(f64::NAN)
        };
        Self { statistic, df, p_value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub statistic: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndersonTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub min_canonical_correlation: f64,
    /// Set when the statistic hit the [`ANDERSON_FLOOR`] cap.
    pub capped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmOptions {
    /// Bartlett bandwidth of the within-city HAC moment covariance.
    pub hac_lags: usize,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { hac_lags: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub kind: EstimatorKind,
    pub dependent: String,
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub n_obs: usize,
    pub n_params: usize,
    /// `1 - SSR/SST` with centred SST.
    pub r2: f64,
    pub adj_r2: f64,
    /// `SSR / (n - k)`.
    pub mse: f64,
    /// Joint test that all non-constant coefficients are zero.
    pub f_test: Option<FTest>,
    pub hansen_j: Option<ChiSquareTest>,
    pub anderson: Option<AndersonTest>,
    /// First-stage F of the excluded instruments, per endogenous regressor.
    pub first_stage_f: Vec<f64>,
    pub instruments: Vec<String>,
    pub hac_lags: Option<usize>,
    pub base_city: Option<String>,
}

impl EstimationResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.std_errors[i])
    }

    pub fn z_stat(&self, i: usize) -> f64 {
        self.coefficients[i] / self.std_errors[i]
    }

    /// Two-sided asymptotic normal p-value.
    pub fn p_value(&self, i: usize) -> f64 {
        normal_p_value(self.coefficients[i], self.std_errors[i])
    }

    pub fn fitted(&self, design: &Design) -> DVector<f64> {
        design.regressors() * DVector::from_column_slice(&self.coefficients)
    }
}

pub(crate) fn normal_p_value(estimate: f64, se: f64) -> f64 {
    let z = estimate / se;
    if !z.is_finite() {
        return if z.is_nan() { f64::NAN } else { 0.0 };
    }
    2.0 * Normal::standard().sf(z.abs())
}

fn check_rank(x: &DMatrix<f64>, names: &[String], matrix: &'static str) -> Result<(), EstimationError> {
    let dep = dependent_columns(x);
    if dep.is_empty() {
        Ok(())
    } else {
        Err(EstimationError::RankDeficient {
            matrix,
            columns: dep.into_iter().map(|j| names[j].clone()).collect(),
        })
    }
}

fn term_names(terms: &[Term]) -> Vec<String> {
    terms.iter().map(|t| t.name.clone()).collect()
}

struct Fit {
    beta: DVector<f64>,
    covariance: DMatrix<f64>,
    residuals: DVector<f64>,
}

fn finish(kind: EstimatorKind, design: &Design, fit: Fit) -> EstimationResult {
    let n = design.n_obs();
    let k = fit.beta.len();
    let terms = design.terms();
    let ssr = fit.residuals.norm_squared();
    let mean = design.y.mean();
    let sst: f64 = design.y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = (n - k) as f64;
    let r2 = 1.0 - ssr / sst;
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df;
    let covariance = symmetrize(fit.covariance);
    let std_errors = covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let f_test = wald_f(&terms, &fit.beta, &covariance, n - k);
    EstimationResult {
        kind,
        dependent: design.dependent.clone(),
        terms,
        coefficients: fit.beta.iter().copied().collect(),
        std_errors,
        covariance,
        residuals: fit.residuals.iter().copied().collect(),
        n_obs: n,
        n_params: k,
        r2,
        adj_r2,
        mse: ssr / df,
        f_test,
        hansen_j: None,
        anderson: None,
        first_stage_f: Vec::new(),
        instruments: Vec::new(),
        hac_lags: None,
        base_city: design.base_city.clone(),
    }
}

/// Wald form `b' V^{-1} b / q` over the non-constant coefficients; equals the
/// classical regression F when `V` is the homoskedastic OLS covariance.
fn wald_f(terms: &[Term], beta: &DVector<f64>, cov: &DMatrix<f64>, df_den: usize) -> Option<FTest> {
    let idx: Vec<usize> = (0..terms.len())
        .filter(|&i| terms[i].role != TermRole::Constant)
        .collect();
    let q = idx.len();
    if q == 0 || df_den == 0 {
        return None;
    }
    let b = DVector::from_fn(q, |i, _| beta[idx[i]]);
    let v = DMatrix::from_fn(q, q, |i, j| cov[(idx[i], idx[j])]);
    let statistic = match v.cholesky() {
        Some(ch) => b.dot(&ch.solve(&b)) / q as f64,
        None => f64::NAN,
    };
    let p_value = FisherSnedecor::new(q as f64, df_den as f64)
        .map(|d| {
            if statistic.is_finite() {
                d.sf(statistic)
            } else {
                f64::NAN
            }
        })
        .unwrap_or(f64::NAN);
    Some(FTest {
        statistic,
        df_num: q,
        df_den,
        p_value,
    })
}

fn check_obs(n: usize, k: usize) -> Result<(), EstimationError> {
    if n <= k {
        Err(EstimationError::TooFewObservations {
            observations: n,
            parameters: k,
        })
    } else {
        Ok(())
    }
}

/// OLS of `y` on all regressors (endogenous ones treated as exogenous).
/// Covariance is the homoskedastic `s^2 (X'X)^{-1}` with `s^2 = SSR/(n-k)`.
pub fn ols(design: &Design) -> Result<EstimationResult, EstimationError> {
    design.validate()?;
    let x = design.regressors();
    let (n, k) = x.shape();
    check_obs(n, k)?;
    check_rank(&x, &term_names(&design.terms()), "regressor matrix")?;
    let y = DMatrix::from_column_slice(n, 1, design.y.as_slice());
    let (beta, xtx_inv) = least_squares(&x, &y);
    let beta = beta.column(0).into_owned();
    let residuals = &design.y - &x * &beta;
    let s2 = residuals.norm_squared() / (n - k) as f64;
    Ok(finish(
        EstimatorKind::Ols,
        design,
        Fit {
            beta,
            covariance: xtx_inv * s2,
            residuals,
        },
    ))
}

struct IvInputs {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    instrument_names: Vec<String>,
}

fn iv_inputs(design: &Design, z_excluded: &DMatrix<f64>) -> Result<IvInputs, EstimationError> {
    design.validate()?;
    let n = design.n_obs();
    if z_excluded.nrows() != n {
        return Err(EstimationError::DimensionMismatch(format!(
            "instrument matrix has {} rows, y has {n}",
            z_excluded.nrows()
        )));
    }
    if z_excluded.ncols() < design.endog.ncols() {
        return Err(EstimationError::UnderIdentified {
            instruments: z_excluded.ncols(),
            endogenous: design.endog.ncols(),
        });
    }
    let x = design.regressors();
    let z = hstack(&[&design.exog, z_excluded]);
    check_obs(n, z.ncols().max(x.ncols()))?;
    check_rank(&x, &term_names(&design.terms()), "regressor matrix")?;
    let instrument_names: Vec<String> = (1..=z_excluded.ncols()).map(|i| format!("z{i}")).collect();
    let mut z_names = term_names(&design.exog_terms);
    z_names.extend(instrument_names.iter().cloned());
    check_rank(&z, &z_names, "instrument matrix")?;
    Ok(IvInputs { x, z, instrument_names })
}

fn first_stage_f(design: &Design, z: &DMatrix<f64>, n_excluded: usize) -> Vec<f64> {
    let n = design.n_obs();
    let df_den = (n - z.ncols()) as f64;
    (0..design.endog.ncols())
        .map(|k| {
            let w = design.endog.columns(k, 1).into_owned();
            let ssr_u = residualize(&w, z).norm_squared();
            let ssr_r = residualize(&w, &design.exog).norm_squared();
            ((ssr_r - ssr_u) / n_excluded as f64) / (ssr_u / df_den)
        })
        .collect()
}

fn iv_diagnostics(design: &Design, z_excluded: &DMatrix<f64>, z: &DMatrix<f64>) -> (Vec<f64>, Option<AndersonTest>) {
    if design.endog.ncols() == 0 {
        return (Vec::new(), None);
    }
    let fs = first_stage_f(design, z, z_excluded.ncols());
    for (f, t) in fs.iter().zip(&design.endog_terms) {
        if *f < 10.0 {
            log::warn!("weak instruments: first-stage F for `{}` is {f:.2} (< 10)", t.name);
        }
    }
    let x_res = residualize(&design.endog, &design.exog);
    let z_res = residualize(z_excluded, &design.exog);
    let anderson = anderson_test(&x_res, &z_res, design.n_obs()).ok();
    (fs, anderson)
}

fn tsls_fit(design: &Design, inputs: &IvInputs) -> Fit {
    let n = design.n_obs();
    let k = inputs.x.ncols();
    let x_hat = project(&inputs.x, &inputs.z);
    let y = DMatrix::from_column_slice(n, 1, design.y.as_slice());
    let (beta, inv) = least_squares(&x_hat, &y);
    let beta = beta.column(0).into_owned();
    let residuals = &design.y - &inputs.x * &beta;
    let s2 = residuals.norm_squared() / (n - k) as f64;
    Fit {
        beta,
        covariance: inv * s2,
        residuals,
    }
}

/// 2SLS with homoskedastic covariance `s^2 (X_hat' X_hat)^{-1}`.
pub fn two_stage_least_squares(
    design: &Design,
    z_excluded: &DMatrix<f64>,
) -> Result<EstimationResult, EstimationError> {
    let inputs = iv_inputs(design, z_excluded)?;
    let fit = tsls_fit(design, &inputs);
    let mut result = finish(EstimatorKind::Tsls, design, fit);
    let (fs, anderson) = iv_diagnostics(design, z_excluded, &inputs.z);
    result.first_stage_f = fs;
    result.anderson = anderson;
    result.instruments = inputs.instrument_names;
    Ok(result)
}

/// HAC covariance of the moments `z_i u_i`: Bartlett weights
/// `1 - l/(lags+1)` on within-group lags up to `lags`, groups independent,
/// divided by `n` (no degrees-of-freedom correction).
pub fn moment_covariance(z: &DMatrix<f64>, residuals: &[f64], groups: &[usize], lags: usize) -> DMatrix<f64> {
    let (n, l) = z.shape();
    assert_eq!(residuals.len(), n);
    assert_eq!(groups.len(), n);
    let h = DMatrix::from_fn(n, l, |i, j| z[(i, j)] * residuals[i]);
    let mut members: Vec<(usize, Vec<usize>)> = Vec::new();
    for (row, &g) in groups.iter().enumerate() {
        match members.iter_mut().find(|(id, _)| *id == g) {
            Some((_, rows)) => rows.push(row),
            None => members.push((g, vec![row])),
        }
    }
    let mut s = h.transpose() * &h;
    for lag in 1..=lags {
        let w = 1.0 - lag as f64 / (lags as f64 + 1.0);
        let mut gamma = DMatrix::zeros(l, l);
        for (_, rows) in &members {
            for t in lag..rows.len() {
                let a = h.row(rows[t]);
                let b = h.row(rows[t - lag]);
                gamma += a.transpose() * b;
            }
        }
        s += (&gamma + gamma.transpose()) * w;
    }
    symmetrize(s / n as f64)
}

/// GMM criterion `g(b)' W g(b)` with `g(b) = Z'(y - X b)/n`.
pub fn gmm_objective(design: &Design, z_excluded: &DMatrix<f64>, weight: &DMatrix<f64>, beta: &[f64]) -> f64 {
    let z = hstack(&[&design.exog, z_excluded]);
    let u = &design.y - design.regressors() * DVector::from_column_slice(beta);
    let g = z.transpose() * u / design.n_obs() as f64;
    (g.transpose() * weight * &g)[(0, 0)]
}

/// Two-step efficient GMM. Step one is 2SLS; its residuals give the HAC
/// moment covariance `S`, and step two minimises the criterion weighted by
/// `S^{-1}`. The covariance is `(G' S^{-1} G)^{-1} / (n - k)` with
/// `G = Z'X/n`, i.e. the asymptotic variance with an `n/(n-k)` correction.
/// Hansen's J is `n g' S^{-1} g` at the second-step estimate.
pub fn gmm_two_step(
    design: &Design,
    z_excluded: &DMatrix<f64>,
    options: GmmOptions,
) -> Result<EstimationResult, EstimationError> {
    let inputs = iv_inputs(design, z_excluded)?;
    let n = design.n_obs();
    let k = inputs.x.ncols();
    let step1 = tsls_fit(design, &inputs);
    let residuals1: Vec<f64> = step1.residuals.iter().copied().collect();
    let s = moment_covariance(&inputs.z, &residuals1, &design.groups, options.hac_lags);
    let lower = cholesky_factor(&s)?;
    // Whitened moments: with S = C C', minimise |C^{-1} (Z'y - Z'X b)/n|^2.
    let nf = n as f64;
    let zx = inputs.z.transpose() * &inputs.x / nf;
    let zy = inputs.z.transpose() * &design.y / nf;
    let a = lower
        .solve_lower_triangular(&zx)
        .expect("cholesky factor is invertible");
    let c = lower
        .solve_lower_triangular(&zy)
        .expect("cholesky factor is invertible");
    let c = DMatrix::from_column_slice(c.len(), 1, c.as_slice());
    let (beta, ata_inv) = least_squares(&a, &c);
    let beta = beta.column(0).into_owned();
    let residuals = &design.y - &inputs.x * &beta;
    let g = inputs.z.transpose() * &residuals / nf;
    let g_white = lower.solve_lower_triangular(&g).expect("cholesky factor is invertible");
    let j = nf * g_white.norm_squared();
    let covariance = ata_inv / (n - k) as f64;

    let mut result = finish(
        EstimatorKind::Gmm2Step,
        design,
        Fit {
            beta,
            covariance,
            residuals,
        },
    );
    result.hansen_j = Some(ChiSquareTest::new(j, z_excluded.ncols() - design.endog.ncols()));
    let (fs, anderson) = iv_diagnostics(design, z_excluded, &inputs.z);
    result.first_stage_f = fs;
    result.anderson = anderson;
    result.instruments = inputs.instrument_names;
    result.hac_lags = Some(options.hac_lags);
    Ok(result)
}

/// Lower Cholesky factor of a moment covariance, refusing matrices that are
/// singular or numerically indefinite.
pub(crate) fn cholesky_factor(s: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimationError> {
    let min_eig = min_eigenvalue(s);
    let scale = s.diagonal().amax();
    if !(scale > 0.0) || min_eig <= 1e-14 * scale {
        return Err(EstimationError::NotPositiveDefinite {
            min_eigenvalue: min_eig,
        });
    }
    s.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(EstimationError::NotPositiveDefinite {
            min_eigenvalue: min_eig,
        })
}

/// Anderson canonical-correlation likelihood-ratio test of instrument
/// relevance: `-n ln(1 - r_min^2)`, df `L - K + 1`. Inputs must already be
/// residualised on the included exogenous regressors.
pub fn anderson_test(
    x_endog: &DMatrix<f64>,
    z_excluded: &DMatrix<f64>,
    n_obs: usize,
) -> Result<AndersonTest, EstimationError> {
    if x_endog.nrows() != z_excluded.nrows() {
        return Err(EstimationError::DimensionMismatch(format!(
            "endogenous block has {} rows, instruments have {}",
            x_endog.nrows(),
            z_excluded.nrows()
        )));
    }
    let (kx, lz) = (x_endog.ncols(), z_excluded.ncols());
    if kx == 0 || lz == 0 {
        return Err(EstimationError::DimensionMismatch(
            "empty endogenous or instrument block".into(),
        ));
    }
    if lz < kx {
        return Err(EstimationError::UnderIdentified {
            instruments: lz,
            endogenous: kx,
        });
    }
    let names = |p: &str, m: usize| (1..=m).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    check_rank(x_endog, &names("w", kx), "endogenous block")?;
    check_rank(z_excluded, &names("z", lz), "instrument block")?;
    let sxx = x_endog.transpose() * x_endog;
    let szz = z_excluded.transpose() * z_excluded;
    let sxz = x_endog.transpose() * z_excluded;
    let lx = sxx.cholesky().expect("rank checked").l();
    let b = lx.solve_lower_triangular(&sxz).expect("rank checked");
    let szz_inv_bt = szz.cholesky().expect("rank checked").solve(&b.transpose());
    let m = symmetrize(&b * szz_inv_bt);
    let r2 = min_eigenvalue(&m).clamp(0.0, 1.0);
    let one_minus = 1.0 - r2;
    let capped = one_minus < ANDERSON_FLOOR;
    let statistic = -(n_obs as f64) * one_minus.max(ANDERSON_FLOOR).ln();
    let chi = ChiSquareTest::new(statistic, lz - kx + 1);
    Ok(AndersonTest {
        statistic,
        df: chi.df,
        p_value: chi.p_value,
        min_canonical_correlation: r2.sqrt(),
        capped,
    })
}
