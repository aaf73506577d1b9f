//! Model evaluation from Monte-Carlo archives: standard errors, orthogonalized
//! score-type tests, the parameter selection criterion and goodness of fit.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::effects::{EffectKind, Model, ModelSpec, Statistic};
use crate::error::{Error, Result};
use crate::estimation::{
    collinear_block, condition_number, covariance, from_rows, monte_carlo, to_rows,
    MonteCarloSummaries, MAX_CONDITION,
};
use crate::network::PanelData;
use crate::rng::Stage;
use crate::simulation::{ParameterPoint, VarianceParams};

fn require_independent(theta: &ParameterPoint) -> Result<()> {
    if matches!(theta.sigma, VarianceParams::Unrestricted(_)) {
        return Err(Error::Unsupported(
            "model evaluation requires independent random effects (scalar or diagonal variance)"
                .into(),
        ));
    }
    Ok(())
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    SigmaSquared,
    Sigma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub param_labels: Vec<String>,
    pub estimates: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    pub parameterization: Parameterization,
}

impl CovarianceReport {
    fn from_c(
        param_labels: Vec<String>,
        estimates: Vec<f64>,
        c: DMatrix<f64>,
        parameterization: Parameterization,
    ) -> Self {
        CovarianceReport {
            standard_errors: c.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
            c: to_rows(&c),
            param_labels,
            estimates,
            parameterization,
        }
    }
}

/// `C = D̂⁻¹ V̂ D̂⁻ᵀ` over the estimating statistics.
pub fn standard_errors(s: &MonteCarloSummaries) -> Result<CovarianceReport> {
    require_independent(&s.theta)?;
    let k = s.n_estimation;
    let d = s.d_hat_matrix();
    if d.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "derivative matrix has {} parameter columns for {k} estimating statistics",
            d.ncols()
        )));
    }
    let idx: Vec<usize> = (0..k).collect();
    let d11 = sub(&d, &idx, &idx);
    let v11 = sub(&s.v_hat_matrix(), &idx, &idx);
    standard_errors_from(&d11, &v11, s.param_labels.clone(), s.theta.to_vec())
}

pub fn standard_errors_from(
    d: &DMatrix<f64>,
    v: &DMatrix<f64>,
    param_labels: Vec<String>,
    estimates: Vec<f64>,
) -> Result<CovarianceReport> {
    if condition_number(d) > MAX_CONDITION {
        return Err(Error::Collinear(format!(
            "derivative matrix is singular; worst-conditioned parameters: {}",
            collinear_block(d, &param_labels)
        )));
    }
    let inv = d
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Collinear("derivative matrix is not invertible".into()))?;
    let c = &inv * v * inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(CovarianceReport::from_c(
        param_labels,
        estimates,
        c,
        Parameterization::SigmaSquared,
    ))
}

/// Transforms a covariance in variances to standard deviations by the delta
/// method, `C_σ = J⁻¹ C J⁻ᵀ` with `J = diag(1, …, 1, 2σ_h)`. The last
/// `sigma2_hat.len()` parameters are the variances.
pub fn reparametrize_to_sd(
    report: &CovarianceReport,
    sigma2_hat: &[f64],
) -> Result<CovarianceReport> {
    if report.parameterization != Parameterization::SigmaSquared {
        return Err(Error::InvalidConfig(
            "report is already in standard deviations".into(),
        ));
    }
    let dim = report.c.len();
    let q = sigma2_hat.len();
    if q > dim {
        return Err(Error::DimensionMismatch(
            "more variances than parameters".into(),
        ));
    }
    if let Some(v) = sigma2_hat.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Numerical(format!(
            "variance estimate {v} is not positive"
        )));
    }
    let jinv = DMatrix::from_fn(dim, dim, |i, j| {
        if i != j {
            0.0
        } else if i + q >= dim {
            1.0 / (2.0 * sigma2_hat[i + q - dim].sqrt())
        } else {
            1.0
        }
    });
    let c = &jinv * from_rows(&report.c) * &jinv;
    let mut estimates = report.estimates.clone();
    for (h, s2) in sigma2_hat.iter().enumerate() {
        if let Some(e) = estimates.get_mut(dim - q + h) {
            *e = s2.sqrt();
        }
    }
    let labels = report
        .param_labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if i + q >= dim {
                l.replacen("variance", "std.dev.", 1)
            } else {
                l.clone()
            }
        })
        .collect();
    Ok(CovarianceReport::from_c(
        labels,
        estimates,
        c,
        Parameterization::Sigma,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// One-sided `z`.
    Simple,
    /// Quadratic form `z²` against `χ²_df`.
    Composite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalizedTest {
    pub kind: TestKind,
    pub tested: Vec<String>,
    pub df: usize,
    pub gamma: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    /// Orthogonalized observed statistic `y`.
    pub y_obs: Vec<f64>,
    pub y_bar: Vec<f64>,
    /// `z` for the simple test, `z²` for the composite test.
    pub z_obs: f64,
    pub p_asymptotic: f64,
    pub p_empirical: f64,
    /// Binomial Monte-Carlo standard error of `p_empirical`.
    pub p_empirical_se: f64,
    pub t: usize,
    /// Replicate orthogonalized statistics `ŷ_t`.
    pub replicate_y: Vec<Vec<f64>>,
    /// Replicate test statistics (`ŷ_t` or their quadratic forms).
    pub replicate_z: Vec<f64>,
}

struct Orthogonalized {
    gamma: DMatrix<f64>,
    xi: DMatrix<f64>,
    y_obs: DVector<f64>,
    y_reps: Vec<DVector<f64>>,
    y_bar: DVector<f64>,
}

fn orthogonalize(s: &MonteCarloSummaries, tested: &[Statistic]) -> Result<Orthogonalized> {
    require_independent(&s.theta)?;
    if tested.is_empty() {
        return Err(Error::InvalidConfig("no statistic to test".into()));
    }
    let k = s.n_estimation;
    let mut t_idx = Vec::with_capacity(tested.len());
    for st in tested {
        let i = s.index_of(st).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "statistic `{}` was not archived under the null model",
                st.label()
            ))
        })?;
        if i < k {
            return Err(Error::InvalidConfig(format!(
                "statistic `{}` is an estimating statistic of the null model",
                st.label()
            )));
        }
        if t_idx.contains(&i) {
            return Err(Error::InvalidConfig(format!(
                "statistic `{}` listed twice",
                st.label()
            )));
        }
        t_idx.push(i);
    }
    let e_idx: Vec<usize> = (0..k).collect();
    let d = s.d_hat_matrix();
    if d.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "derivative matrix has {} parameter columns for {k} estimating statistics",
            d.ncols()
        )));
    }
    let cols: Vec<usize> = (0..k).collect();
    let d1 = sub(&d, &e_idx, &cols);
    let d2 = sub(&d, &t_idx, &cols);
    if condition_number(&d1) > MAX_CONDITION {
        return Err(Error::Collinear(format!(
            "null-model derivative matrix is singular; involved parameters: {}",
            collinear_block(&d1, &s.param_labels)
        )));
    }
    let d1_inv = d1
        .try_inverse()
        .ok_or_else(|| Error::Collinear("null-model derivative matrix is not invertible".into()))?;
    let gamma = d2 * d1_inv;
    let v = s.v_hat_matrix();
    let v11 = sub(&v, &e_idx, &e_idx);
    let v12 = sub(&v, &e_idx, &t_idx);
    let v22 = sub(&v, &t_idx, &t_idx);
    let gv12 = &gamma * &v12;
    let xi = &v22 - (&gv12 + gv12.transpose()) + &gamma * &v11 * gamma.transpose();
    let xi = (&xi + xi.transpose()) * 0.5;

    let project = |row: &[f64]| -> DVector<f64> {
        let g1 = DVector::from_iterator(k, e_idx.iter().map(|&i| row[i]));
        let g2 = DVector::from_iterator(t_idx.len(), t_idx.iter().map(|&i| row[i]));
        g2 - &gamma * g1
    };
    let y_obs = project(&s.observed);
    let y_reps: Vec<DVector<f64>> = s.rows.iter().map(|r| project(r)).collect();
    if y_reps.is_empty() {
        return Err(Error::InvalidConfig(
            "the archive holds no replicates".into(),
        ));
    }
    let mut y_bar = DVector::zeros(t_idx.len());
    for y in &y_reps {
        y_bar += y;
    }
    y_bar /= y_reps.len() as f64;
    Ok(Orthogonalized {
        gamma,
        xi,
        y_obs,
        y_reps,
        y_bar,
    })
}

fn binomial_se(p: f64, t: usize) -> f64 {
    (p * (1.0 - p) / t as f64).sqrt()
}

fn vec_rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|y| y.iter().copied().collect()).collect()
}

/// One-sided orthogonalized test of a single statistic archived under the
/// null model.
pub fn score_test(s: &MonteCarloSummaries, tested: &Statistic) -> Result<OrthogonalizedTest> {
    let o = orthogonalize(s, std::slice::from_ref(tested))?;
    let xi = o.xi[(0, 0)];
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::Numerical(format!(
            "residual variance of the orthogonalized statistic is {xi}; gamma = {:?}",
            o.gamma.as_slice()
        )));
    }
    let y = o.y_obs[0];
    let y_bar = o.y_bar[0];
    let z = (y - y_bar) / xi.sqrt();
    let normal = Normal::standard();
    let p_asym = 1.0 - normal.cdf(z);
    let reps: Vec<f64> = o.y_reps.iter().map(|v| v[0]).collect();
    let t = reps.len();
    let p_emp = reps.iter().filter(|&&v| v >= y).count() as f64 / t as f64;
    Ok(OrthogonalizedTest {
        kind: TestKind::Simple,
        tested: vec![tested.label()],
        df: 1,
        gamma: to_rows(&o.gamma),
        xi: to_rows(&o.xi),
        y_obs: vec![y],
        y_bar: vec![y_bar],
        z_obs: z,
        p_asymptotic: p_asym,
        p_empirical: p_emp,
        p_empirical_se: binomial_se(p_emp, t),
        t,
        replicate_y: vec_rows(&o.y_reps),
        replicate_z: reps,
    })
}

/// Test of `H₀: σ² = 0` for a random out-degree, using the dispersion row
/// archived with a model without random effects.
pub fn score_test_overdispersion(s: &MonteCarloSummaries) -> Result<OrthogonalizedTest> {
    score_test(s, &Statistic::Dispersion(EffectKind::OutDegree))
}

/// Quadratic-form test of several statistics jointly.
pub fn composite_score_test(
    s: &MonteCarloSummaries,
    tested: &[Statistic],
) -> Result<OrthogonalizedTest> {
    let o = orthogonalize(s, tested)?;
    let df = tested.len();
    let chol = o.xi.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "residual covariance of the tested statistics is singular: {:?}",
            o.xi.as_slice()
        ))
    })?;
    let quad = |y: &DVector<f64>| -> f64 {
        let d = y - &o.y_bar;
        d.dot(&chol.solve(&d))
    };
    let z2 = quad(&o.y_obs);
    let reps: Vec<f64> = o.y_reps.iter().map(quad).collect();
    let t = reps.len();
    let p_emp = reps.iter().filter(|&&v| v >= z2).count() as f64 / t as f64;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(OrthogonalizedTest {
        kind: TestKind::Composite,
        tested: tested.iter().map(|s| s.label()).collect(),
        df,
        gamma: to_rows(&o.gamma),
        xi: to_rows(&o.xi),
        y_obs: o.y_obs.iter().copied().collect(),
        y_bar: o.y_bar.iter().copied().collect(),
        z_obs: z2,
        p_asymptotic: 1.0 - chi.cdf(z2),
        p_empirical: p_emp,
        p_empirical_se: binomial_se(p_emp, t),
        t,
        replicate_y: vec_rows(&o.y_reps),
        replicate_z: reps,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    #[default]
    Aic,
    Bic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfMode {
    /// `df(N) = N`.
    #[default]
    Actors,
    /// `df(N) = N(N − 1)`.
    OrderedPairs,
}

impl DfMode {
    pub fn df(self, n: usize) -> f64 {
        match self {
            DfMode::Actors => n as f64,
            DfMode::OrderedPairs => (n * (n - 1)) as f64,
        }
    }
}

impl Penalty {
    pub fn value(self, df: f64) -> f64 {
        match self {
            Penalty::Aic => 2.0,
            Penalty::Bic => df.ln(),
        }
    }
}

/// Union of the statistics of several models: the rate, every fixed-effect
/// sum and every random-effect dispersion, in order of first appearance.
pub fn shared_statistics(specs: &[ModelSpec]) -> Vec<Statistic> {
    let mut out = vec![Statistic::Rate];
    for spec in specs {
        for e in &spec.fixed {
            let s = Statistic::Sum(e.clone());
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    for spec in specs {
        for e in &spec.random {
            let s = Statistic::Dispersion(e.clone());
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}

/// One model's archive scored on the shared statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PscInput {
    pub label: String,
    /// Rate plus fixed parameters.
    pub p: usize,
    /// Variance parameters.
    pub q: usize,
    pub observed: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

/// Simulates `t` periods at `theta` and records the shared statistics `g0`.
pub fn psc_archive(
    label: &str,
    model: &Model,
    panel: &PanelData,
    theta: &ParameterPoint,
    g0: &[Statistic],
    t: usize,
    seed: u64,
) -> Result<PscInput> {
    require_independent(theta)?;
    let scored = model.with_extra_statistics(g0.iter().cloned())?;
    let s = monte_carlo(&scored, panel, theta, t, seed, Stage::Phase3)?;
    let idx: Vec<usize> = g0
        .iter()
        .map(|st| s.index_of(st).expect("shared statistics were appended"))
        .collect();
    Ok(PscInput {
        label: label.to_string(),
        p: 1 + model.p(),
        q: model.q_star(),
        observed: idx.iter().map(|&i| s.observed[i]).collect(),
        rows: s
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i]).collect())
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PscEntry {
    pub label: String,
    pub p: usize,
    pub q: usize,
    /// `(1/T) Σ (ĝ_t − g⁰)ᵀ V̂₀⁻¹ (ĝ_t − g⁰)`.
    pub mean_mahalanobis: f64,
    /// `df(N)` times the excess of the mean distance over its null expectation `dim g⁰`.
    pub fit_term: f64,
    pub penalty_term: f64,
    pub psc: f64,
    pub ridge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PscReport {
    pub statistics: Vec<String>,
    pub p0: usize,
    pub q0: usize,
    pub df: f64,
    pub penalty: Penalty,
    pub penalty_unit: f64,
    pub entries: Vec<PscEntry>,
}

/// Parameter selection criterion; lower is better.
pub fn psc(
    inputs: &[PscInput],
    g0: &[Statistic],
    n_actors: usize,
    penalty: Penalty,
    df_mode: DfMode,
) -> Result<PscReport> {
    let dim = g0.len();
    let p0 = g0
        .iter()
        .filter(|s| matches!(s, Statistic::Rate | Statistic::Sum(_)))
        .count();
    let q0 = dim - p0;
    let df = df_mode.df(n_actors);
    let pen = penalty.value(df);
    let mut entries = Vec::with_capacity(inputs.len());
    for m in inputs {
        if m.observed.len() != dim || m.rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "archive of `{}` is not scored on the {dim} shared statistics",
                m.label
            )));
        }
        if m.p > p0 || m.q > q0 {
            return Err(Error::InvalidConfig(format!(
                "model `{}` has statistics outside the shared set",
                m.label
            )));
        }
        if m.rows.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "archive of `{}` is empty",
                m.label
            )));
        }
        let mean = {
            let mut a = vec![0.0; dim];
            for r in &m.rows {
                for (x, v) in a.iter_mut().zip(r) {
                    *x += v;
                }
            }
            a.iter()
                .map(|x| x / m.rows.len() as f64)
                .collect::<Vec<_>>()
        };
        let mut v = covariance(&m.rows, &mean);
        let mut ridge = 0.0;
        let chol = match v.clone().cholesky() {
            Some(c) if condition_number(&v) <= MAX_CONDITION => c,
            _ => {
                ridge = 1e-8 * v.trace() / dim as f64;
                warn!(
                    "covariance of `{}` is singular; adding ridge {ridge:.3e}",
                    m.label
                );
                v += DMatrix::identity(dim, dim) * ridge;
                v.clone().cholesky().ok_or_else(|| {
                    Error::Numerical(format!(
                        "covariance of `{}` is singular after the ridge",
                        m.label
                    ))
                })?
            }
        };
        let obs = DVector::from_column_slice(&m.observed);
        let total: f64 = m
            .rows
            .iter()
            .map(|r| {
                let d = DVector::from_column_slice(r) - &obs;
                d.dot(&chol.solve(&d))
            })
            .sum();
        let mean_mahalanobis = total / m.rows.len() as f64;
        let fit_term = df * (mean_mahalanobis - dim as f64);
        let penalty_term = (p0 - m.p + q0 - m.q) as f64 * pen;
        entries.push(PscEntry {
            label: m.label.clone(),
            p: m.p,
            q: m.q,
            mean_mahalanobis,
            fit_term,
            penalty_term,
            psc: fit_term - penalty_term,
            ridge,
        });
    }
    Ok(PscReport {
        statistics: g0.iter().map(|s| s.label()).collect(),
        p0,
        q0,
        df,
        penalty,
        penalty_unit: pen,
        entries,
    })
}

/// Proportions of actors with out-degree `0..=max_bin`, normalized to sum 1
/// over the bins.
pub fn out_degree_distribution(degrees: &[u32], max_bin: usize) -> Vec<f64> {
    let mut counts = vec![0.0; max_bin + 1];
    for &d in degrees {
        if let Some(c) = counts.get_mut(d as usize) {
            *c += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub ridge: f64,
    pub observed: Vec<f64>,
    pub mean: Vec<f64>,
    /// Covariance of the simulated auxiliary statistic, ridge included.
    pub omega: Vec<Vec<f64>>,
    pub distance_obs: f64,
    pub p_value: f64,
    pub p_value_se: f64,
    pub t: usize,
    pub replicate_distances: Vec<f64>,
}

/// Mahalanobis goodness of fit of an auxiliary statistic.
pub fn gof_from_auxiliary(
    observed: &[f64],
    simulated: &[Vec<f64>],
    ridge: f64,
) -> Result<GofReport> {
    let k = observed.len();
    if simulated.is_empty() || simulated.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch(
            "auxiliary statistics differ in length".into(),
        ));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ridge must be nonnegative, got {ridge}"
        )));
    }
    let t = simulated.len();
    let mut mean = vec![0.0; k];
    for r in simulated {
        for (a, v) in mean.iter_mut().zip(r) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= t as f64);
    let omega = covariance(simulated, &mean) + DMatrix::identity(k, k) * ridge;
    let chol = omega.clone().cholesky().ok_or_else(|| {
        Error::Numerical("auxiliary covariance is singular after the ridge".into())
    })?;
    let m = DVector::from_column_slice(&mean);
    let dist = |a: &[f64]| -> f64 {
        let d = DVector::from_column_slice(a) - &m;
        d.dot(&chol.solve(&d))
    };
    let distance_obs = dist(observed);
    let replicate_distances: Vec<f64> = simulated.iter().map(|r| dist(r)).collect();
    let p = replicate_distances
        .iter()
        .filter(|&&d| d >= distance_obs)
        .count() as f64
        / t as f64;
    Ok(GofReport {
        ridge,
        observed: observed.to_vec(),
        mean,
        omega: to_rows(&omega),
        distance_obs,
        p_value: p,
        p_value_se: binomial_se(p, t),
        t,
        replicate_distances,
    })
}

/// Goodness of fit on the out-degree distribution archived in phase 3.
pub fn gof(s: &MonteCarloSummaries, max_bin: usize, ridge: f64) -> Result<GofReport> {
    if s.out_degrees.is_empty() {
        return Err(Error::InvalidConfig(
            "the archive holds no out-degree sequences".into(),
        ));
    }
    let obs = out_degree_distribution(&s.observed_out_degrees, max_bin);
    let sims: Vec<Vec<f64>> = s
        .out_degrees
        .iter()
        .map(|d| out_degree_distribution(d, max_bin))
        .collect();
    gof_from_auxiliary(&obs, &sims, ridge)
}
