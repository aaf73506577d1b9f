//! Three-phase simulated method of moments: derivative preconditioning,
//! Robbins–Monro subphases, and Monte-Carlo summaries at the estimate.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::effects::{EffectKind, Model, ModelSpec, Statistic};
use crate::error::{Error, Result};
use crate::network::{Network, PanelData};
use crate::rng::{replicate, stream, Stage};
use crate::simulation::{simulate_period, ParameterPoint, VarianceParams, MAX_EXPECTED_MINISTEPS};

/// Condition number above which a derivative matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase2Schedule {
    pub subphase_lengths: Vec<usize>,
    pub tail_lengths: Vec<usize>,
    /// ε for the rate and fixed coefficients.
    pub initial_gain_theta: f64,
    /// ζ for the variance parameters; `None` scales it at the first iteration.
    pub initial_gain_sigma: Option<f64>,
    pub gain_reduction: f64,
    pub sigma_min: f64,
    /// Weight moved from the off-diagonal of `D₀` to its diagonal before inversion.
    pub diagonalize: f64,
    /// Fixed or variance parameter magnitude regarded as divergence.
    pub divergence_bound: f64,
}

impl Default for Phase2Schedule {
    fn default() -> Self {
        Phase2Schedule {
            subphase_lengths: vec![100, 100, 200, 1700],
            tail_lengths: vec![20, 40, 80, 1500],
            initial_gain_theta: 0.2,
            initial_gain_sigma: None,
            gain_reduction: 0.5,
            sigma_min: 1e-4,
            diagonalize: 0.2,
            divergence_bound: 50.0,
        }
    }
}

impl Phase2Schedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.subphase_lengths.is_empty() {
            return bad("at least one subphase is required");
        }
        if self.subphase_lengths.len() != self.tail_lengths.len() {
            return bad("subphase_lengths and tail_lengths differ in length");
        }
        for (&len, &tail) in self.subphase_lengths.iter().zip(&self.tail_lengths) {
            if tail == 0 || tail > len {
                return bad("every tail length must lie in 1..=subphase length");
            }
        }
        if !(self.initial_gain_theta > 0.0 && self.initial_gain_theta.is_finite()) {
            return bad("initial_gain_theta must be positive");
        }
        if let Some(z) = self.initial_gain_sigma {
            if !(z > 0.0 && z.is_finite()) {
                return bad("initial_gain_sigma must be positive");
            }
        }
        if !(self.gain_reduction > 0.0 && self.gain_reduction < 1.0) {
            return bad("gain_reduction must lie in (0, 1)");
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return bad("sigma_min must be positive");
        }
        if !(0.0..=1.0).contains(&self.diagonalize) {
            return bad("diagonalize must lie in [0, 1]");
        }
        if !(self.divergence_bound > 0.0) {
            return bad("divergence_bound must be positive");
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.subphase_lengths.iter().sum()
    }
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

/// Ratio of the extreme singular values; infinite for a singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Parameters dominating the right singular vector of the smallest singular
/// value, as a human-readable hint.
pub fn collinear_block(m: &DMatrix<f64>, labels: &[String]) -> String {
    let svd = m.clone().svd(false, true);
    let Some(vt) = svd.v_t else {
        return "unknown".into();
    };
    let k = svd.singular_values.imin();
    let v = vt.row(k);
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    idx.into_iter()
        .take_while(|&i| v[i].abs() >= 0.2)
        .map(|i| labels.get(i).cloned().unwrap_or_else(|| format!("#{i}")))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Clamps the eigenvalues of a symmetric matrix below `floor` to `floor`.
pub fn project_pd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let t = rows.len() as f64;
    let k = rows.first().map_or(0, |r| r.len());
    let mut m = vec![0.0; k];
    for r in rows {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= t);
    m
}

/// `(1/T) Σ (r_t − m)(r_t − m)ᵀ`.
pub fn covariance(rows: &[Vec<f64>], mean: &[f64]) -> DMatrix<f64> {
    let k = mean.len();
    let t = rows.len() as f64;
    let mut v = DMatrix::zeros(k, k);
    for r in rows {
        let d = DVector::from_iterator(k, r.iter().zip(mean).map(|(a, b)| a - b));
        v.ger(1.0, &d, &d, 1.0);
    }
    v / t
}

/// Score-function derivative estimate `(1/T) Σ (g_t − center) l_tᵀ`.
pub fn derivative_matrix(rows: &[Vec<f64>], scores: &[Vec<f64>], center: &[f64]) -> DMatrix<f64> {
    let k = center.len();
    let c = scores.first().map_or(0, |s| s.len());
    let t = rows.len() as f64;
    let mut d = DMatrix::zeros(k, c);
    for (r, l) in rows.iter().zip(scores) {
        let g = DVector::from_iterator(k, r.iter().zip(center).map(|(a, b)| a - b));
        let l = DVector::from_column_slice(l);
        d.ger(1.0, &g, &l, 1.0);
    }
    d / t
}

/// Preconditioning derivative of the rate and fixed-effect statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Phase1Result {
    pub d0: Vec<Vec<f64>>,
    pub d0_inv: Vec<Vec<f64>>,
    pub ridged: bool,
    pub replicates: usize,
}

impl Phase1Result {
    pub fn d0_inv_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.d0_inv)
    }
}

/// Estimates `D₀` over the (rate, fixed) block at `pp0` and inverts it after
/// partial diagonalization, with a ridge fallback.
pub fn phase1_precondition(
    model: &Model,
    x1: &Network,
    pp0: &ParameterPoint,
    n1: usize,
    diagonalize: f64,
    seed: u64,
) -> Result<Phase1Result> {
    if n1 < 50 {
        return Err(Error::InvalidConfig(format!(
            "phase 1 needs at least 50 replicates, got {n1}"
        )));
    }
    pp0.validate(model)?;
    let k = 1 + model.p();
    let sims = replicate(n1, seed, Stage::Phase1, |_, rng| {
        simulate_period(x1, pp0, model, rng)
            .map(|o| (o.g_hat[..k].to_vec(), o.scores.to_vec()[..k].to_vec()))
    });
    let mut rows = Vec::with_capacity(n1);
    let mut scores = Vec::with_capacity(n1);
    for s in sims {
        let (g, l) = s?;
        rows.push(g);
        scores.push(l);
    }
    let mean = mean_rows(&rows);
    let d0 = derivative_matrix(&rows, &scores, &mean);
    let diag = DMatrix::from_diagonal(&d0.diagonal());
    let mut blended = &d0 * (1.0 - diagonalize) + &diag * diagonalize;
    let labels = model.spec().param_labels();
    let mut ridged = false;
    if condition_number(&blended) > MAX_CONDITION {
        warn!("phase 1 derivative is ill-conditioned; adding a ridge");
        blended += DMatrix::from_diagonal(&d0.diagonal()) * 0.05;
        ridged = true;
    }
    if condition_number(&blended) > MAX_CONDITION {
        return Err(Error::Collinear(format!(
            "phase 1 derivative matrix is singular; involved parameters: {}",
            collinear_block(&blended, &labels[..k])
        )));
    }
    let inv = blended
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Collinear("phase 1 derivative matrix is not invertible".into()))?;
    debug!("phase 1 D0 diagonal {:?}", d0.diagonal().as_slice());
    Ok(Phase1Result {
        d0: to_rows(&d0),
        d0_inv: to_rows(&inv),
        ridged,
        replicates: n1,
    })
}

/// Output of the Robbins–Monro iterations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Phase2Result {
    pub theta_hat: ParameterPoint,
    /// Parameter vector after every update, in iteration order.
    pub chain: Vec<Vec<f64>>,
    /// ζ used in the first subphase.
    pub initial_gain_sigma: Option<f64>,
    /// ε in effect during each subphase.
    pub gains_theta: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn variance_update(
    sigma: &VarianceParams,
    dev: &[f64],
    zeta: f64,
    floor: f64,
    q: usize,
) -> VarianceParams {
    match sigma {
        VarianceParams::None => VarianceParams::None,
        VarianceParams::Scalar(s) => VarianceParams::Scalar((s - zeta * dev[0]).max(floor)),
        VarianceParams::Diagonal(d) => VarianceParams::Diagonal(
            d.iter()
                .zip(dev)
                .map(|(s, w)| (s - zeta * w).max(floor))
                .collect(),
        ),
        VarianceParams::Unrestricted(_) => {
            let cur = sigma.covariance(q);
            let mut step = DMatrix::zeros(q, q);
            let mut it = dev.iter();
            for h in 0..q {
                for k in h..q {
                    let w = *it.next().expect("one deviation per covariance entry");
                    step[(h, k)] = w;
                    step[(k, h)] = w;
                }
            }
            let proj = project_pd(&(cur - step * zeta), floor);
            VarianceParams::Unrestricted(to_rows(&proj))
        }
    }
}

/// Robbins–Monro iterations for `(λ, β)` and the variance parameters.
pub fn phase2(
    model: &Model,
    panel: &PanelData,
    pp0: &ParameterPoint,
    schedule: &Phase2Schedule,
    d0_inv: &DMatrix<f64>,
    seed: u64,
) -> Result<Phase2Result> {
    schedule.validate()?;
    pp0.validate(model)?;
    let p1 = 1 + model.p();
    let n_est = model.n_estimation_statistics();
    if d0_inv.nrows() != p1 || d0_inv.ncols() != p1 {
        return Err(Error::DimensionMismatch(format!(
            "preconditioner is {}x{}, expected {p1}x{p1}",
            d0_inv.nrows(),
            d0_inv.ncols()
        )));
    }
    let target = model.observed(panel)[..n_est].to_vec();
    let n = model.n_actors() as f64;
    let q = model.q();

    let mut pp = pp0.clone();
    let mut eps = schedule.initial_gain_theta;
    let mut zeta = schedule.initial_gain_sigma;
    let mut first_zeta: Option<f64> = None;
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(schedule.total_iterations());
    let mut gains = Vec::new();
    let mut iteration = 0usize;

    for (sub, (&len, &tail)) in schedule
        .subphase_lengths
        .iter()
        .zip(&schedule.tail_lengths)
        .enumerate()
    {
        gains.push(eps);
        let mut tail_sum = vec![0.0; model.n_params()];
        for it in 0..len {
            let mut rng = stream(seed, Stage::Phase2, iteration as u64);
            let out = match simulate_period(&panel.wave1, &pp, model, &mut rng) {
                Ok(o) => o,
                Err(Error::NonFinite { actor }) => {
                    return Err(Error::Diverged {
                        iteration,
                        reason: format!("non-finite evaluation function for actor {actor}"),
                        trace: chain,
                    })
                }
                Err(e) => return Err(e),
            };
            let dev = DVector::from_iterator(p1, (0..p1).map(|k| out.g_hat[k] - target[k]));
            let step = d0_inv * dev * eps;
            let old_lambda = pp.lambda;
            pp.lambda -= step[0];
            if pp.lambda <= 0.0 {
                pp.lambda = old_lambda / 2.0;
            }
            for k in 0..model.p() {
                pp.beta[k] -= step[k + 1];
            }
            if q > 0 {
                let dev_w: Vec<f64> = (p1..n_est).map(|k| out.g_hat[k] - target[k]).collect();
                let z = match zeta {
                    Some(z) => z,
                    None => {
                        let num = median(step.iter().map(|v| v.abs()).collect());
                        let den = median(dev_w.iter().map(|v| v.abs()).collect());
                        let z = if den > 0.0 && num > 0.0 {
                            num / den
                        } else {
                            eps
                        };
                        info!("variance gain scaled to {z:.3e}");
                        zeta = Some(z);
                        z
                    }
                };
                first_zeta.get_or_insert(z);
                pp.sigma = variance_update(&pp.sigma, &dev_w, z, schedule.sigma_min, q);
            }

            let row = pp.to_vec();
            let reason = if row.iter().any(|v| !v.is_finite()) {
                Some("non-finite parameter".to_string())
            } else if pp.lambda * n > MAX_EXPECTED_MINISTEPS {
                Some(format!("rate parameter {} out of range", pp.lambda))
            } else {
                row[1..]
                    .iter()
                    .position(|v| v.abs() > schedule.divergence_bound)
                    .map(|k| {
                        format!(
                            "parameter `{}` = {} exceeds {}",
                            model.spec().param_labels()[k + 1],
                            row[k + 1],
                            schedule.divergence_bound
                        )
                    })
            };
            chain.push(row.clone());
            if let Some(reason) = reason {
                return Err(Error::Diverged {
                    iteration,
                    reason,
                    trace: chain,
                });
            }
            if it >= len - tail {
                for (a, v) in tail_sum.iter_mut().zip(&row) {
                    *a += v;
                }
            }
            iteration += 1;
        }
        let avg: Vec<f64> = tail_sum.iter().map(|v| v / tail as f64).collect();
        pp = ParameterPoint::from_vec(model, &avg)?;
        debug!("subphase {} ends at {:?}", sub + 1, avg);
        eps *= schedule.gain_reduction;
        zeta = zeta.map(|z| z * schedule.gain_reduction);
    }
    Ok(Phase2Result {
        theta_hat: pp,
        chain,
        initial_gain_sigma: first_zeta,
        gains_theta: gains,
    })
}

/// Monte-Carlo archive at a fixed parameter point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloSummaries {
    pub theta: ParameterPoint,
    pub statistics: Vec<Statistic>,
    pub statistic_labels: Vec<String>,
    pub param_labels: Vec<String>,
    /// Leading rows of the statistic vector that are estimating functions.
    pub n_estimation: usize,
    pub observed: Vec<f64>,
    pub m_bar: Vec<f64>,
    pub v_hat: Vec<Vec<f64>>,
    /// Statistics × score columns, centered at the observed statistics.
    pub d_hat: Vec<Vec<f64>>,
    pub rows: Vec<Vec<f64>>,
    pub scores: Vec<Vec<f64>>,
    pub out_degrees: Vec<Vec<u32>>,
    pub observed_out_degrees: Vec<u32>,
    pub t: usize,
    pub n_failed: usize,
}

impl MonteCarloSummaries {
    /// Builds the summaries from per-replicate archives.
    #[allow(clippy::too_many_arguments)]
    pub fn from_archive(
        theta: ParameterPoint,
        statistics: Vec<Statistic>,
        param_labels: Vec<String>,
        n_estimation: usize,
        observed: Vec<f64>,
        rows: Vec<Vec<f64>>,
        scores: Vec<Vec<f64>>,
        out_degrees: Vec<Vec<u32>>,
        observed_out_degrees: Vec<u32>,
        n_failed: usize,
    ) -> Result<Self> {
        if rows.is_empty() || rows.len() != scores.len() {
            return Err(Error::DimensionMismatch(
                "archive rows and scores differ".into(),
            ));
        }
        let m_bar = mean_rows(&rows);
        let v_hat = covariance(&rows, &m_bar);
        let d_hat = derivative_matrix(&rows, &scores, &observed);
        Ok(MonteCarloSummaries {
            theta,
            statistic_labels: statistics.iter().map(|s| s.label()).collect(),
            statistics,
            param_labels,
            n_estimation,
            observed,
            m_bar,
            v_hat: to_rows(&v_hat),
            d_hat: to_rows(&d_hat),
            t: rows.len(),
            rows,
            scores,
            out_degrees,
            observed_out_degrees,
            n_failed,
        })
    }

    pub fn v_hat_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.v_hat)
    }

    pub fn d_hat_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.d_hat)
    }

    pub fn index_of(&self, s: &Statistic) -> Option<usize> {
        self.statistics.iter().position(|x| x == s)
    }

    /// Copy without the per-replicate archive, for compact reports.
    pub fn without_archive(&self) -> Self {
        MonteCarloSummaries {
            rows: Vec::new(),
            scores: Vec::new(),
            out_degrees: Vec::new(),
            ..self.clone()
        }
    }
}

/// Simulates `t` independent periods at `theta`. Models without random
/// effects also archive the out-degree dispersion so that overdispersion can
/// be tested without another pass.
pub fn phase3(
    model: &Model,
    panel: &PanelData,
    theta: &ParameterPoint,
    t: usize,
    seed: u64,
) -> Result<MonteCarloSummaries> {
    if t < 1000 {
        return Err(Error::InvalidConfig(format!(
            "phase 3 needs at least 1000 replicates, got {t}"
        )));
    }
    let extended;
    let model = if model.q() == 0 {
        extended = model.with_extra_statistics([Statistic::Dispersion(EffectKind::OutDegree)])?;
        &extended
    } else {
        model
    };
    monte_carlo(model, panel, theta, t, seed, Stage::Phase3)
}

/// Phase-3 style archive without the replicate-count floor or extra rows.
pub fn monte_carlo(
    model: &Model,
    panel: &PanelData,
    theta: &ParameterPoint,
    t: usize,
    seed: u64,
    stage: Stage,
) -> Result<MonteCarloSummaries> {
    theta.validate(model)?;
    let sims = replicate(t, seed, stage, |_, rng| {
        simulate_period(&panel.wave1, theta, model, rng).map(|o| {
            let deg: Vec<u32> = o
                .end_network
                .out_degrees()
                .into_iter()
                .map(|d| d as u32)
                .collect();
            (o.g_hat, o.scores.to_vec(), deg)
        })
    });
    let mut rows = Vec::with_capacity(t);
    let mut scores = Vec::with_capacity(t);
    let mut degrees = Vec::with_capacity(t);
    let mut failed = 0usize;
    let mut last_failure = None;
    for s in sims {
        match s {
            Ok((g, l, d)) => {
                rows.push(g);
                scores.push(l);
                degrees.push(d);
            }
            Err(e @ (Error::Degenerate(_) | Error::NonFinite { .. })) => {
                failed += 1;
                last_failure = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if failed as f64 > 0.01 * t as f64 {
        return Err(Error::Degenerate(format!(
            "{failed} of {t} replicates aborted; last: {}",
            last_failure.unwrap_or_default()
        )));
    }
    if failed > 0 {
        warn!("{failed} of {t} replicates aborted and were dropped");
    }
    MonteCarloSummaries::from_archive(
        theta.clone(),
        model.statistics().to_vec(),
        model.spec().param_labels(),
        model.n_estimation_statistics(),
        model.observed(panel),
        rows,
        scores,
        degrees,
        panel
            .wave2
            .out_degrees()
            .into_iter()
            .map(|d| d as u32)
            .collect(),
        failed,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `(m̄_k − g_k)/√V̂_kk` for the estimation statistics.
    pub t_ratios: Vec<f64>,
    /// `√((m̄ − g)ᵀ V̂⁻¹ (m̄ − g))` over the estimation statistics.
    pub overall_max_ratio: f64,
    pub converged: bool,
    /// Diagnosis when the estimating equations look collinear.
    pub collinearity: Option<String>,
}

pub const T_RATIO_THRESHOLD: f64 = 0.1;
pub const OVERALL_RATIO_THRESHOLD: f64 = 0.25;

pub fn convergence_check(s: &MonteCarloSummaries) -> Result<ConvergenceReport> {
    let k = s.n_estimation;
    let v = s.v_hat_matrix();
    let mut t_ratios = Vec::with_capacity(k);
    for j in 0..k {
        let sd = v[(j, j)].sqrt();
        if !(sd > 0.0) {
            return Err(Error::Degenerate(format!(
                "simulated statistic `{}` is constant",
                s.statistic_labels[j]
            )));
        }
        t_ratios.push((s.m_bar[j] - s.observed[j]) / sd);
    }
    let dev = DVector::from_iterator(k, (0..k).map(|j| s.m_bar[j] - s.observed[j]));
    let v11 = v.view((0, 0), (k, k)).into_owned();
    let labels: Vec<String> = s.statistic_labels[..k].to_vec();
    let mut collinearity = None;
    let overall = if condition_number(&v11) > MAX_CONDITION {
        collinearity = Some(format!(
            "covariance of the estimation statistics is singular; involved: {}",
            collinear_block(&v11, &labels)
        ));
        f64::INFINITY
    } else {
        let inv = v11
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular V".into()))?;
        dev.dot(&(inv * &dev)).max(0.0).sqrt()
    };
    let all_small = t_ratios.iter().all(|t| t.abs() < T_RATIO_THRESHOLD);
    let converged = all_small && overall < OVERALL_RATIO_THRESHOLD;
    if collinearity.is_none() {
        let d = s.d_hat_matrix();
        if d.ncols() == k {
            let d11 = d.view((0, 0), (k, k)).into_owned();
            if condition_number(&d11) > MAX_CONDITION {
                collinearity = Some(format!(
                    "derivative matrix is singular; involved parameters: {}",
                    collinear_block(&d11, &s.param_labels)
                ));
            }
        }
    }
    if collinearity.is_none() && all_small && !converged {
        collinearity = Some(format!(
            "every t-ratio is below {T_RATIO_THRESHOLD} but the overall ratio is {overall:.3}; \
             the estimating equations are nearly collinear"
        ));
    }
    Ok(ConvergenceReport {
        t_ratios,
        overall_max_ratio: overall,
        converged: converged && collinearity.is_none(),
        collinearity,
    })
}

/// Settings of a complete estimation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationSettings {
    pub schedule: Phase2Schedule,
    pub phase1_replicates: usize,
    pub phase3_replicates: usize,
    pub seed: u64,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings {
            schedule: Phase2Schedule::default(),
            phase1_replicates: 200,
            phase3_replicates: 5000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta_hat: ParameterPoint,
    pub param_labels: Vec<String>,
    pub chain: Vec<Vec<f64>>,
    pub converged: bool,
    pub t_ratios: Vec<f64>,
    pub convergence: ConvergenceReport,
    pub start: ParameterPoint,
    pub phase1: Phase1Result,
    pub phase2_gains: Vec<f64>,
    pub initial_gain_sigma: Option<f64>,
    pub summaries: MonteCarloSummaries,
}

/// Rate from the wave distance, density from the log-odds of the mean
/// density of both waves, other coefficients zero.
pub fn default_start(model: &Model, panel: &PanelData) -> ParameterPoint {
    let n = panel.n_actors() as f64;
    let pairs = n * (n - 1.0);
    let density =
        ((panel.wave1.n_ties() + panel.wave2.n_ties()) as f64 / (2.0 * pairs)).clamp(0.01, 0.99);
    let lambda = (panel.wave1.hamming(&panel.wave2) as f64 / n).max(0.1);
    let beta = model
        .spec()
        .fixed
        .iter()
        .map(|e| match e {
            EffectKind::OutDegree => (density / (1.0 - density)).ln(),
            _ => 0.0,
        })
        .collect();
    let sigma = VarianceParams::constant(model.spec().variance_model, model.q(), 1e-4);
    ParameterPoint::new(lambda, beta, sigma)
}

/// Phases 1 and 2 of an estimation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fit {
    pub start: ParameterPoint,
    pub phase1: Phase1Result,
    pub phase2: Phase2Result,
}

/// Seed offset separating the streams of the auxiliary fit without random
/// effects from those of the main fit.
const NULL_FIT_SALT: u64 = 0x6e75_6c6c_6669_7421;

/// Preconditioning and Robbins–Monro iterations. Models with random effects
/// start from the estimate of the same model without them, with the
/// variance at its floor, and reuse that model's preconditioner.
pub fn fit(
    model: &Model,
    panel: &PanelData,
    settings: &EstimationSettings,
    start: Option<&ParameterPoint>,
) -> Result<Fit> {
    settings.schedule.validate()?;
    let (start, phase1) = if model.q() > 0 {
        let null_spec = ModelSpec::fixed_only(model.spec().fixed.clone());
        let null = Model::with_covariates(null_spec, model.n_actors(), model.covariates())?;
        let null_start = match start {
            Some(s) => ParameterPoint::new(s.lambda, s.beta.clone(), VarianceParams::None),
            None => default_start(&null, panel),
        };
        let seed = settings.seed ^ NULL_FIT_SALT;
        info!("estimating the model without random effects for starting values");
        let p1 = phase1_precondition(
            &null,
            &panel.wave1,
            &null_start,
            settings.phase1_replicates,
            settings.schedule.diagonalize,
            seed,
        )?;
        let p2 = phase2(
            &null,
            panel,
            &null_start,
            &settings.schedule,
            &p1.d0_inv_matrix(),
            seed,
        )?;
        let sigma = match start {
            Some(s) if s.sigma != VarianceParams::None => s.sigma.clone(),
            _ => VarianceParams::constant(
                model.spec().variance_model,
                model.q(),
                settings.schedule.sigma_min,
            ),
        };
        (
            ParameterPoint::new(p2.theta_hat.lambda, p2.theta_hat.beta, sigma),
            p1,
        )
    } else {
        let s = start
            .cloned()
            .unwrap_or_else(|| default_start(model, panel));
        let p1 = phase1_precondition(
            model,
            &panel.wave1,
            &s,
            settings.phase1_replicates,
            settings.schedule.diagonalize,
            settings.seed,
        )?;
        (s, p1)
    };
    start.validate(model)?;
    info!("phase 2 from {:?}", start.to_vec());
    let phase2 = phase2(
        model,
        panel,
        &start,
        &settings.schedule,
        &phase1.d0_inv_matrix(),
        settings.seed,
    )?;
    Ok(Fit {
        start,
        phase1,
        phase2,
    })
}

/// Full estimation: [`fit`], then phase 3 and the convergence check at the
/// estimate.
pub fn estimate(
    model: &Model,
    panel: &PanelData,
    settings: &EstimationSettings,
    start: Option<&ParameterPoint>,
) -> Result<EstimationResult> {
    let Fit {
        start,
        phase1,
        phase2: p2,
    } = fit(model, panel, settings, start)?;
    info!("phase 3 at {:?}", p2.theta_hat.to_vec());
    let summaries = phase3(
        model,
        panel,
        &p2.theta_hat,
        settings.phase3_replicates,
        settings.seed,
    )?;
    let convergence = convergence_check(&summaries)?;
    Ok(EstimationResult {
        theta_hat: p2.theta_hat,
        param_labels: model.spec().param_labels(),
        chain: p2.chain,
        converged: convergence.converged,
        t_ratios: convergence.t_ratios.clone(),
        convergence,
        start,
        phase1,
        phase2_gains: p2.gains_theta,
        initial_gain_sigma: p2.initial_gain_sigma,
        summaries,
    })
}
