//! Continuous-time simulation of actor-oriented network change over one
//! period, with actor-level random coefficients and accumulation of the
//! complete-data score of the simulated trajectory.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::effects::{Model, VarianceModel};
use crate::error::{Error, Result};
use crate::network::Network;

/// Hard limit on the expected number of ministeps in one period.
pub const MAX_EXPECTED_MINISTEPS: f64 = 1e7;

/// Variance parameters in the parameterization of the variance model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceParams {
    None,
    Scalar(f64),
    Diagonal(Vec<f64>),
    Unrestricted(Vec<Vec<f64>>),
}

impl VarianceParams {
    /// All variances equal to `value` (zero covariances).
    pub fn constant(model: VarianceModel, q: usize, value: f64) -> Self {
        if q == 0 {
            return VarianceParams::None;
        }
        match model {
            VarianceModel::Scalar => VarianceParams::Scalar(value),
            VarianceModel::Diagonal => VarianceParams::Diagonal(vec![value; q]),
            VarianceModel::Unrestricted => VarianceParams::Unrestricted(
                (0..q)
                    .map(|h| (0..q).map(|k| if h == k { value } else { 0.0 }).collect())
                    .collect(),
            ),
        }
    }

    /// Free parameters: scalar, the diagonal, or the upper triangle row by row.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            VarianceParams::None => vec![],
            VarianceParams::Scalar(s) => vec![*s],
            VarianceParams::Diagonal(d) => d.clone(),
            VarianceParams::Unrestricted(m) => {
                let q = m.len();
                let mut out = Vec::with_capacity(q * (q + 1) / 2);
                for h in 0..q {
                    for k in h..q {
                        out.push(m[h][k]);
                    }
                }
                out
            }
        }
    }

    pub fn from_vec(model: VarianceModel, q: usize, v: &[f64]) -> Result<Self> {
        let expected = match (q, model) {
            (0, _) => 0,
            (_, VarianceModel::Scalar) => 1,
            (_, VarianceModel::Diagonal) => q,
            (_, VarianceModel::Unrestricted) => q * (q + 1) / 2,
        };
        if v.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} variance parameters, got {}",
                v.len()
            )));
        }
        Ok(match (q, model) {
            (0, _) => VarianceParams::None,
            (_, VarianceModel::Scalar) => VarianceParams::Scalar(v[0]),
            (_, VarianceModel::Diagonal) => VarianceParams::Diagonal(v.to_vec()),
            (_, VarianceModel::Unrestricted) => {
                let mut m = vec![vec![0.0; q]; q];
                let mut it = v.iter();
                for h in 0..q {
                    for k in h..q {
                        let x = *it.next().expect("length checked");
                        m[h][k] = x;
                        m[k][h] = x;
                    }
                }
                VarianceParams::Unrestricted(m)
            }
        })
    }

    /// `Σ` as a `q × q` matrix.
    pub fn covariance(&self, q: usize) -> DMatrix<f64> {
        match self {
            VarianceParams::None => DMatrix::zeros(q, q),
            VarianceParams::Scalar(s) => DMatrix::identity(q, q) * *s,
            VarianceParams::Diagonal(d) => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
            }
            VarianceParams::Unrestricted(m) => DMatrix::from_fn(q, q, |h, k| m[h][k]),
        }
    }

    fn matches(&self, model: VarianceModel, q: usize) -> bool {
        match (self, q, model) {
            (VarianceParams::None, 0, _) => true,
            (VarianceParams::Scalar(_), q, VarianceModel::Scalar) => q > 0,
            (VarianceParams::Diagonal(d), q, VarianceModel::Diagonal) => q > 0 && d.len() == q,
            (VarianceParams::Unrestricted(m), q, VarianceModel::Unrestricted) => {
                q > 0 && m.len() == q && m.iter().all(|r| r.len() == q)
            }
            _ => false,
        }
    }
}

/// One point of the parameter space: basic rate, fixed coefficients and the
/// variance of the random coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub sigma: VarianceParams,
}

impl ParameterPoint {
    pub fn new(lambda: f64, beta: Vec<f64>, sigma: VarianceParams) -> Self {
        ParameterPoint {
            lambda,
            beta,
            sigma,
        }
    }

    /// `(λ, β, σ-parameters)` flattened.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.beta.len());
        v.push(self.lambda);
        v.extend_from_slice(&self.beta);
        v.extend(self.sigma.to_vec());
        v
    }

    pub fn from_vec(model: &Model, v: &[f64]) -> Result<Self> {
        let p = model.p();
        if v.len() != model.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                model.n_params(),
                v.len()
            )));
        }
        Ok(ParameterPoint {
            lambda: v[0],
            beta: v[1..1 + p].to_vec(),
            sigma: VarianceParams::from_vec(model.spec().variance_model, model.q(), &v[1 + p..])?,
        })
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rate parameter must be positive, got {}",
                self.lambda
            )));
        }
        if self.beta.len() != model.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} fixed coefficients for {} fixed effects",
                self.beta.len(),
                model.p()
            )));
        }
        if !self.sigma.matches(model.spec().variance_model, model.q()) {
            return Err(Error::DimensionMismatch(format!(
                "variance parameters {:?} do not match {} random effects with the {:?} model",
                self.sigma,
                model.q(),
                model.spec().variance_model
            )));
        }
        Ok(())
    }
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn sqrt_psd(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite entry".into()));
    }
    let q = sigma.nrows();
    if q == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let diagonal = (0..q).all(|h| (0..q).all(|k| h == k || sigma[(h, k)] == 0.0));
    if diagonal {
        let mut out = DMatrix::zeros(q, q);
        for h in 0..q {
            let v = sigma[(h, h)];
            if v < 0.0 {
                return Err(Error::NotPositiveDefinite(format!("variance {v} < 0")));
            }
            out[(h, h)] = v.sqrt();
        }
        return Ok(out);
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
        return Err(Error::NotPositiveDefinite(format!(
            "eigenvalues {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Standard-normal draws and the actor coefficients derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomEffectsDraw {
    /// `n × q` standard normal draws.
    pub u: DMatrix<f64>,
    /// `n × q` actor coefficients; row `i` is `Σ^{1/2} u_i`.
    pub b: DMatrix<f64>,
}

impl RandomEffectsDraw {
    pub fn none(n: usize) -> Self {
        RandomEffectsDraw {
            u: DMatrix::zeros(n, 0),
            b: DMatrix::zeros(n, 0),
        }
    }

    /// Coefficients for given standard-normal draws.
    pub fn from_normals(u: DMatrix<f64>, sigma: &VarianceParams) -> Result<Self> {
        let q = u.ncols();
        let root = sqrt_psd(&sigma.covariance(q))?;
        let b = &u * root;
        Ok(RandomEffectsDraw { u, b })
    }
}

/// Draws `n` i.i.d. coefficient vectors from `N(0, Σ)`. Normals are consumed
/// actor by actor, effect by effect.
pub fn draw_random_effects<R: Rng + ?Sized>(
    sigma: &VarianceParams,
    n: usize,
    q: usize,
    rng: &mut R,
) -> Result<RandomEffectsDraw> {
    if q == 0 {
        return Ok(RandomEffectsDraw::none(n));
    }
    let mut u = DMatrix::zeros(n, q);
    for i in 0..n {
        for h in 0..q {
            u[(i, h)] = StandardNormal.sample(rng);
        }
    }
    RandomEffectsDraw::from_normals(u, sigma)
}

/// Derivatives of the log-probability of a simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreContribution {
    pub l_lambda: f64,
    pub l_beta: Vec<f64>,
    /// `n × q`, derivative with respect to the actor coefficients.
    pub l_b: DMatrix<f64>,
    /// Derivative with respect to the variance parameters (empty when the
    /// variance model has no diagonal parameterization).
    pub l_sigma: Vec<f64>,
}

impl ScoreContribution {
    pub fn zeros(n: usize, p: usize, q: usize) -> Self {
        ScoreContribution {
            l_lambda: 0.0,
            l_beta: vec![0.0; p],
            l_b: DMatrix::zeros(n, q),
            l_sigma: Vec::new(),
        }
    }

    /// `(l_λ, l_β, l_σ)` in parameter order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.l_beta.len() + self.l_sigma.len());
        v.push(self.l_lambda);
        v.extend_from_slice(&self.l_beta);
        v.extend_from_slice(&self.l_sigma);
        v
    }
}

/// Contraction of `l_b` with the coefficients: `(1/2σ²) Σ_i l_b,i b_i` per
/// variance parameter. Zero at a zero variance.
pub fn variance_scores(sigma: &VarianceParams, l_b: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let contract = |cols: std::ops::Range<usize>| -> f64 {
        cols.map(|h| l_b.column(h).dot(&b.column(h))).sum()
    };
    let q = l_b.ncols();
    match sigma {
        VarianceParams::None | VarianceParams::Unrestricted(_) => Vec::new(),
        VarianceParams::Scalar(s) => {
            if *s > 0.0 {
                vec![contract(0..q) / (2.0 * s)]
            } else {
                vec![0.0]
            }
        }
        VarianceParams::Diagonal(d) => d
            .iter()
            .enumerate()
            .map(|(h, &s)| {
                if s > 0.0 {
                    contract(h..h + 1) / (2.0 * s)
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// Scratch space reused across ministeps.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    /// candidate-major `n × p` fixed change statistics.
    ds: Vec<f64>,
    /// candidate-major `n × q` random change statistics.
    dr: Vec<f64>,
    weight: Vec<f64>,
    targets: Vec<usize>,
}

impl Workspace {
    fn fill(
        &mut self,
        model: &Model,
        x: &Network,
        i: usize,
        beta: &[f64],
        b_i: &[f64],
    ) -> Result<f64> {
        let n = x.n_actors();
        let (p, q) = (model.p(), model.q());
        self.ds.clear();
        self.ds.resize(n * p, 0.0);
        self.dr.clear();
        self.dr.resize(n * q, 0.0);
        self.weight.clear();
        self.weight.resize(n, 0.0);
        self.targets.clear();
        self.targets.extend((0..n).filter(|&j| j != i));

        let mut fmax = 0.0f64; // no-change candidate has f = 0
        for (c, &j) in self.targets.iter().enumerate() {
            let mut f = 0.0;
            for (k, e) in model.fixed_effects().iter().enumerate() {
                let d = e.change(x, i, j);
                self.ds[c * p + k] = d;
                f += beta[k] * d;
            }
            for (h, e) in model.random_effects().iter().enumerate() {
                let d = e.change(x, i, j);
                self.dr[c * q + h] = d;
                f += b_i[h] * d;
            }
            if !f.is_finite() {
                return Err(Error::NonFinite { actor: i });
            }
            self.weight[c] = f;
            fmax = fmax.max(f);
        }
        let mut total = 0.0;
        for w in self.weight.iter_mut() {
            *w = (*w - fmax).exp();
            total += *w;
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::NonFinite { actor: i });
        }
        Ok(total)
    }
}

/// Multinomial choice probabilities of actor `i` over its adjacency set, in
/// the order of [`crate::network::adjacency_candidates`].
pub fn choice_probabilities(
    x: &Network,
    i: usize,
    pp: &ParameterPoint,
    b_i: &[f64],
    model: &Model,
) -> Result<Vec<f64>> {
    if i >= x.n_actors() {
        return Err(Error::ActorOutOfRange {
            index: i,
            n: x.n_actors(),
        });
    }
    if pp.beta.len() != model.p() || b_i.len() != model.q() {
        return Err(Error::DimensionMismatch(
            "coefficients do not match the model".into(),
        ));
    }
    let mut ws = Workspace::default();
    let total = ws.fill(model, x, i, &pp.beta, b_i)?;
    Ok(ws.weight.iter().map(|w| w / total).collect())
}

/// Result of a single ministep.
#[derive(Clone, Debug, PartialEq)]
pub struct Ministep {
    pub actor: usize,
    /// Toggled receiver, `None` for the no-change move.
    pub toggled: Option<usize>,
}

/// Selects a focal actor uniformly, samples its move, applies it to `x`, and
/// adds the multinomial score of the choice to `scores`.
pub fn ministep_in_place<R: Rng + ?Sized>(
    x: &mut Network,
    pp: &ParameterPoint,
    draw: &RandomEffectsDraw,
    model: &Model,
    rng: &mut R,
    ws: &mut Workspace,
    scores: &mut ScoreContribution,
) -> Result<Ministep> {
    let n = x.n_actors();
    let (p, q) = (model.p(), model.q());
    let i = rng.random_range(0..n);
    let b_i: Vec<f64> = (0..q).map(|h| draw.b[(i, h)]).collect();
    let total = ws.fill(model, x, i, &pp.beta, &b_i)?;

    let threshold = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = n - 1;
    for (c, w) in ws.weight.iter().enumerate() {
        acc += w;
        if acc > threshold {
            chosen = c;
            break;
        }
    }

    for k in 0..p {
        let mean: f64 = (0..n).map(|c| ws.weight[c] * ws.ds[c * p + k]).sum::<f64>() / total;
        scores.l_beta[k] += ws.ds[chosen * p + k] - mean;
    }
    for h in 0..q {
        let mean: f64 = (0..n).map(|c| ws.weight[c] * ws.dr[c * q + h]).sum::<f64>() / total;
        scores.l_b[(i, h)] += ws.dr[chosen * q + h] - mean;
    }

    let toggled = if chosen < n - 1 {
        let j = ws.targets[chosen];
        x.toggle(i, j);
        Some(j)
    } else {
        None
    };
    Ok(Ministep { actor: i, toggled })
}

/// One ministep on a copy of `x`; returns the new state and the score
/// increment (`l_λ` and `l_σ` are left at zero).
pub fn ministep<R: Rng + ?Sized>(
    x: &Network,
    pp: &ParameterPoint,
    draw: &RandomEffectsDraw,
    model: &Model,
    rng: &mut R,
) -> Result<(Network, ScoreContribution, Ministep)> {
    let mut y = x.clone();
    let mut scores = ScoreContribution::zeros(x.n_actors(), model.p(), model.q());
    let mut ws = Workspace::default();
    let step = ministep_in_place(&mut y, pp, draw, model, rng, &mut ws, &mut scores)?;
    Ok((y, scores, step))
}

/// Everything produced by simulating one period.
#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub end_network: Network,
    /// Statistic vector of the end network (estimating functions, then extras).
    pub g_hat: Vec<f64>,
    pub scores: ScoreContribution,
    pub draw: RandomEffectsDraw,
    pub n_ministeps: usize,
}

/// Simulates one unit-length period from `x1`, drawing the random
/// coefficients first.
pub fn simulate_period<R: Rng + ?Sized>(
    x1: &Network,
    pp: &ParameterPoint,
    model: &Model,
    rng: &mut R,
) -> Result<SimOutcome> {
    pp.validate(model)?;
    let draw = draw_random_effects(&pp.sigma, x1.n_actors(), model.q(), rng)?;
    simulate_period_with_draw(x1, pp, draw, model, rng)
}

/// Simulates one period with externally supplied random coefficients.
pub fn simulate_period_with_draw<R: Rng + ?Sized>(
    x1: &Network,
    pp: &ParameterPoint,
    draw: RandomEffectsDraw,
    model: &Model,
    rng: &mut R,
) -> Result<SimOutcome> {
    pp.validate(model)?;
    let n = x1.n_actors();
    if draw.b.nrows() != n || draw.b.ncols() != model.q() {
        return Err(Error::DimensionMismatch(
            "random effects draw does not match the model".into(),
        ));
    }
    let expected = n as f64 * pp.lambda;
    if expected > MAX_EXPECTED_MINISTEPS {
        return Err(Error::Degenerate(format!(
            "rate {} implies {expected:.3e} expected ministeps",
            pp.lambda
        )));
    }
    let k = Poisson::new(expected)
        .map_err(|e| Error::Degenerate(format!("rate {}: {e}", pp.lambda)))?
        .sample(rng) as usize;
    let cap = (100.0 * expected).max(100.0);
    if k as f64 > cap {
        return Err(Error::Degenerate(format!(
            "{k} ministeps exceed the cap {cap:.0}"
        )));
    }

    let mut x = x1.clone();
    let mut scores = ScoreContribution::zeros(n, model.p(), model.q());
    let mut ws = Workspace::default();
    for _ in 0..k {
        ministep_in_place(&mut x, pp, &draw, model, rng, &mut ws, &mut scores)?;
    }
    scores.l_lambda = k as f64 / pp.lambda - n as f64;
    scores.l_sigma = variance_scores(&pp.sigma, &scores.l_b, &draw.b);
    let g_hat = model.statistic_values(&x, x1);
    Ok(SimOutcome {
        end_network: x,
        g_hat,
        scores,
        draw,
        n_ministeps: k,
    })
}
