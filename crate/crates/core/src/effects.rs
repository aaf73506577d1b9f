//! Effect statistics, model specifications and the statistic vectors used as
//! estimating functions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{sum_sq_dev, Network, PanelData};

/// A network configuration count evaluated from the point of view of one actor.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EffectKind {
    OutDegree,
    Reciprocity,
    TransitiveTriplets,
    OutDegreeActivity,
    CovariateAlter(String),
    CovariateEgo(String),
    CovariateSimilarity(String),
}

impl EffectKind {
    pub fn covariate(&self) -> Option<&str> {
        match self {
            EffectKind::CovariateAlter(c)
            | EffectKind::CovariateEgo(c)
            | EffectKind::CovariateSimilarity(c) => Some(c),
            _ => None,
        }
    }

    /// Human-readable row label, e.g. `status alter`.
    pub fn label(&self) -> String {
        match self {
            EffectKind::OutDegree => "out-degree (density)".into(),
            EffectKind::Reciprocity => "reciprocity".into(),
            EffectKind::TransitiveTriplets => "transitive triplets".into(),
            EffectKind::OutDegreeActivity => "out-degree activity".into(),
            EffectKind::CovariateAlter(c) => format!("{c} alter"),
            EffectKind::CovariateEgo(c) => format!("{c} ego"),
            EffectKind::CovariateSimilarity(c) => format!("{c} similarity"),
        }
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectKind::OutDegree => f.write_str("out_degree"),
            EffectKind::Reciprocity => f.write_str("reciprocity"),
            EffectKind::TransitiveTriplets => f.write_str("transitive_triplets"),
            EffectKind::OutDegreeActivity => f.write_str("out_degree_activity"),
            EffectKind::CovariateAlter(c) => write!(f, "covariate_alter:{c}"),
            EffectKind::CovariateEgo(c) => write!(f, "covariate_ego:{c}"),
            EffectKind::CovariateSimilarity(c) => write!(f, "covariate_similarity:{c}"),
        }
    }
}

impl FromStr for EffectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, cov) = match s.split_once(':') {
            Some((h, c)) if !c.trim().is_empty() => (h.trim(), Some(c.trim().to_string())),
            Some(_) => return Err(Error::UnknownEffect(s.to_string())),
            None => (s.trim(), None),
        };
        match (head, cov) {
            ("out_degree" | "density", None) => Ok(EffectKind::OutDegree),
            ("reciprocity", None) => Ok(EffectKind::Reciprocity),
            ("transitive_triplets", None) => Ok(EffectKind::TransitiveTriplets),
            ("out_degree_activity", None) => Ok(EffectKind::OutDegreeActivity),
            ("covariate_alter", Some(c)) => Ok(EffectKind::CovariateAlter(c)),
            ("covariate_ego", Some(c)) => Ok(EffectKind::CovariateEgo(c)),
            ("covariate_similarity", Some(c)) => Ok(EffectKind::CovariateSimilarity(c)),
            _ => Err(Error::UnknownEffect(s.to_string())),
        }
    }
}

impl TryFrom<String> for EffectKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EffectKind> for String {
    fn from(e: EffectKind) -> String {
        e.to_string()
    }
}

/// Structure of the between-actor covariance of the random coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceModel {
    /// `Σ = σ² I`, one parameter.
    Scalar,
    /// `Σ = diag(σ²_h)`, one parameter per random effect.
    #[default]
    Diagonal,
    /// Any positive definite `Σ`, `q(q+1)/2` parameters.
    Unrestricted,
}

/// One component of a simulated or observed statistic vector.
///
/// Written as `rate`, `sum:<effect>`, `dispersion:<effect>`,
/// `co_dispersion:<effect>|<effect>` or `pooled_dispersion:<effect>|…`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Statistic {
    /// Hamming distance between the end network and wave 1.
    Rate,
    /// `Σ_i s_i(x)`.
    Sum(EffectKind),
    /// `Σ_i (r_i(x) - r̄)²`.
    Dispersion(EffectKind),
    /// `Σ_i (r_ih(x) - r̄_h)(r_ih'(x) - r̄_h')`.
    CrossDispersion(EffectKind, EffectKind),
    /// Sum of the dispersions of several effects (scalar variance model).
    PooledDispersion(Vec<EffectKind>),
}

impl Statistic {
    pub fn label(&self) -> String {
        match self {
            Statistic::Rate => "rate (distance)".into(),
            Statistic::Sum(e) => e.label(),
            Statistic::Dispersion(e) => format!("dispersion {}", e.label()),
            Statistic::CrossDispersion(a, b) => {
                format!("co-dispersion {} / {}", a.label(), b.label())
            }
            Statistic::PooledDispersion(es) => format!(
                "pooled dispersion {}",
                es.iter().map(|e| e.label()).collect::<Vec<_>>().join(", ")
            ),
        }
    }

    fn effects(&self) -> Vec<&EffectKind> {
        match self {
            Statistic::Rate => vec![],
            Statistic::Sum(e) | Statistic::Dispersion(e) => vec![e],
            Statistic::CrossDispersion(a, b) => vec![a, b],
            Statistic::PooledDispersion(es) => es.iter().collect(),
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |es: &[&EffectKind]| {
            es.iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("|")
        };
        match self {
            Statistic::Rate => f.write_str("rate"),
            Statistic::Sum(e) => write!(f, "sum:{e}"),
            Statistic::Dispersion(e) => write!(f, "dispersion:{e}"),
            Statistic::CrossDispersion(a, b) => write!(f, "co_dispersion:{}", join(&[a, b])),
            Statistic::PooledDispersion(es) => {
                write!(
                    f,
                    "pooled_dispersion:{}",
                    join(&es.iter().collect::<Vec<_>>())
                )
            }
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;

    /// A bare effect name is read as its sum.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "rate" {
            return Ok(Statistic::Rate);
        }
        let effects =
            |rest: &str| -> Result<Vec<EffectKind>> { rest.split('|').map(str::parse).collect() };
        match s.split_once(':') {
            Some(("sum", rest)) => Ok(Statistic::Sum(rest.parse()?)),
            Some(("dispersion", rest)) => Ok(Statistic::Dispersion(rest.parse()?)),
            Some(("co_dispersion", rest)) => match effects(rest)?.as_slice() {
                [a, b] => Ok(Statistic::CrossDispersion(a.clone(), b.clone())),
                _ => Err(Error::InvalidSpec(format!(
                    "`{s}` needs exactly two effects"
                ))),
            },
            Some(("pooled_dispersion", rest)) => Ok(Statistic::PooledDispersion(effects(rest)?)),
            _ => s
                .parse::<EffectKind>()
                .map(Statistic::Sum)
                .map_err(|_| Error::InvalidSpec(format!("unknown statistic `{s}`"))),
        }
    }
}

impl TryFrom<String> for Statistic {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Statistic> for String {
    fn from(s: Statistic) -> String {
        s.to_string()
    }
}

/// Declared model: fixed effects, random effects and the variance structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub fixed: Vec<EffectKind>,
    #[serde(default)]
    pub random: Vec<EffectKind>,
    #[serde(default)]
    pub variance_model: VarianceModel,
    /// Statistics simulated alongside the estimating functions but not used
    /// for estimation (tested statistics, model-comparison sets).
    #[serde(default)]
    pub extra_statistics: Vec<Statistic>,
}

impl ModelSpec {
    pub fn new(
        fixed: Vec<EffectKind>,
        random: Vec<EffectKind>,
        variance_model: VarianceModel,
    ) -> Self {
        ModelSpec {
            fixed,
            random,
            variance_model,
            extra_statistics: Vec::new(),
        }
    }

    pub fn fixed_only(fixed: Vec<EffectKind>) -> Self {
        ModelSpec::new(fixed, Vec::new(), VarianceModel::Diagonal)
    }

    pub fn with_extra(mut self, stats: impl IntoIterator<Item = Statistic>) -> Self {
        for s in stats {
            if !self.extra_statistics.contains(&s) {
                self.extra_statistics.push(s);
            }
        }
        self
    }

    pub fn p(&self) -> usize {
        self.fixed.len()
    }

    pub fn q(&self) -> usize {
        self.random.len()
    }

    /// Number of variance parameters.
    pub fn q_star(&self) -> usize {
        let q = self.q();
        match (q, self.variance_model) {
            (0, _) => 0,
            (_, VarianceModel::Scalar) => 1,
            (_, VarianceModel::Diagonal) => q,
            (_, VarianceModel::Unrestricted) => q * (q + 1) / 2,
        }
    }

    /// Rate, fixed and variance parameters.
    pub fn n_params(&self) -> usize {
        1 + self.p() + self.q_star()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed.is_empty() {
            return Err(Error::InvalidSpec(
                "at least one fixed effect is required".into(),
            ));
        }
        if !self.fixed.contains(&EffectKind::OutDegree) {
            return Err(Error::InvalidSpec(
                "the fixed effects must include out_degree (density)".into(),
            ));
        }
        for (list, what) in [(&self.fixed, "fixed"), (&self.random, "random")] {
            for (k, e) in list.iter().enumerate() {
                if list[..k].contains(e) {
                    return Err(Error::InvalidSpec(format!("duplicate {what} effect `{e}`")));
                }
            }
        }
        match self.variance_model {
            VarianceModel::Scalar if self.q() < 1 => Err(Error::InvalidSpec(
                "variance model `scalar` requires at least one random effect".into(),
            )),
            VarianceModel::Unrestricted if self.q() < 2 => Err(Error::InvalidSpec(
                "variance model `unrestricted` requires at least two random effects".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Statistics used as estimating functions, in parameter order.
    pub fn estimation_statistics(&self) -> Vec<Statistic> {
        let mut out = vec![Statistic::Rate];
        out.extend(self.fixed.iter().cloned().map(Statistic::Sum));
        out.extend(self.variance_statistics());
        out
    }

    pub fn variance_statistics(&self) -> Vec<Statistic> {
        if self.random.is_empty() {
            return Vec::new();
        }
        match self.variance_model {
            VarianceModel::Scalar => {
                if self.q() == 1 {
                    vec![Statistic::Dispersion(self.random[0].clone())]
                } else {
                    vec![Statistic::PooledDispersion(self.random.clone())]
                }
            }
            VarianceModel::Diagonal => self
                .random
                .iter()
                .cloned()
                .map(Statistic::Dispersion)
                .collect(),
            VarianceModel::Unrestricted => {
                let mut out = Vec::new();
                for h in 0..self.q() {
                    for k in h..self.q() {
                        out.push(if h == k {
                            Statistic::Dispersion(self.random[h].clone())
                        } else {
                            Statistic::CrossDispersion(
                                self.random[h].clone(),
                                self.random[k].clone(),
                            )
                        });
                    }
                }
                out
            }
        }
    }

    /// Estimation statistics followed by the extra statistics.
    pub fn all_statistics(&self) -> Vec<Statistic> {
        let mut out = self.estimation_statistics();
        for s in &self.extra_statistics {
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        out
    }

    pub fn param_labels(&self) -> Vec<String> {
        let mut out = vec!["basic rate".to_string()];
        out.extend(self.fixed.iter().map(|e| e.label()));
        match self.variance_model {
            _ if self.random.is_empty() => {}
            VarianceModel::Scalar => out.push("variance random effects".into()),
            VarianceModel::Diagonal => out.extend(
                self.random
                    .iter()
                    .map(|e| format!("variance random {}", e.label())),
            ),
            VarianceModel::Unrestricted => {
                for h in 0..self.q() {
                    for k in h..self.q() {
                        out.push(format!(
                            "covariance random {} / {}",
                            self.random[h].label(),
                            self.random[k].label()
                        ));
                    }
                }
            }
        }
        out
    }
}

/// An effect with its covariate resolved against a panel.
#[derive(Clone, Debug)]
pub struct CompiledEffect {
    kind: EffectKind,
    cov: Vec<f64>,
    sim_mean: f64,
}

impl CompiledEffect {
    pub fn new(kind: &EffectKind, covariates: &BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let cov = match kind.covariate() {
            Some(name) => covariates
                .get(name)
                .cloned()
                .ok_or_else(|| Error::MissingCovariate(name.to_string()))?,
            None => Vec::new(),
        };
        let sim_mean = if matches!(kind, EffectKind::CovariateSimilarity(_)) {
            similarity_mean(&cov)
        } else {
            0.0
        };
        Ok(CompiledEffect {
            kind: kind.clone(),
            cov,
            sim_mean,
        })
    }

    pub fn kind(&self) -> &EffectKind {
        &self.kind
    }

    #[inline]
    fn sim(&self, i: usize, j: usize) -> f64 {
        1.0 - (self.cov[i] - self.cov[j]).abs() - self.sim_mean
    }

    /// `s_i(x)`.
    pub fn value(&self, x: &Network, i: usize) -> f64 {
        match &self.kind {
            EffectKind::OutDegree => x.out_degree(i) as f64,
            EffectKind::Reciprocity => {
                x.out_neighbours(i).filter(|&j| x.has_tie(j, i)).count() as f64
            }
            EffectKind::TransitiveTriplets => x
                .out_neighbours(i)
                .map(|j| x.two_paths(i, j))
                .sum::<usize>() as f64,
            EffectKind::OutDegreeActivity => {
                let d = x.out_degree(i) as f64;
                d * d
            }
            EffectKind::CovariateAlter(_) => x.out_neighbours(i).map(|j| self.cov[j]).sum(),
            EffectKind::CovariateEgo(_) => self.cov[i] * x.out_degree(i) as f64,
            EffectKind::CovariateSimilarity(_) => x.out_neighbours(i).map(|j| self.sim(i, j)).sum(),
        }
    }

    /// `s_i(x ⊕ (i,j)) - s_i(x)` for the toggle of tie `i -> j`.
    #[inline]
    pub fn change(&self, x: &Network, i: usize, j: usize) -> f64 {
        let sign = if x.has_tie(i, j) { -1.0 } else { 1.0 };
        match &self.kind {
            EffectKind::OutDegree => sign,
            EffectKind::Reciprocity => sign * x.tie(j, i) as f64,
            EffectKind::TransitiveTriplets => {
                sign * (x.two_paths(i, j) + x.shared_out(i, j)) as f64
            }
            EffectKind::OutDegreeActivity => {
                let d = x.out_degree(i) as f64;
                sign * 2.0 * d + 1.0
            }
            EffectKind::CovariateAlter(_) => sign * self.cov[j],
            EffectKind::CovariateEgo(_) => sign * self.cov[i],
            EffectKind::CovariateSimilarity(_) => sign * self.sim(i, j),
        }
    }
}

/// Mean of `1 - |v_i - v_j|` over all ordered pairs `i != j`.
pub fn similarity_mean(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += 1.0 - (v[i] - v[j]).abs();
            }
        }
    }
    total / (n * (n - 1)) as f64
}

/// `s_ik(x)` for a single effect, resolving covariates on the fly.
pub fn effect_value(
    e: &EffectKind,
    x: &Network,
    i: usize,
    covariates: &BTreeMap<String, Vec<f64>>,
) -> Result<f64> {
    if i >= x.n_actors() {
        return Err(Error::ActorOutOfRange {
            index: i,
            n: x.n_actors(),
        });
    }
    Ok(CompiledEffect::new(e, covariates)?.value(x, i))
}

/// A model specification compiled against a panel's covariates.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    n: usize,
    fixed: Vec<CompiledEffect>,
    random: Vec<CompiledEffect>,
    statistics: Vec<Statistic>,
    /// Distinct effects referenced by `statistics`; statistic evaluation works
    /// from their per-actor value vectors.
    stat_effects: Vec<CompiledEffect>,
    covariates: BTreeMap<String, Vec<f64>>,
}

impl Model {
    pub fn new(spec: ModelSpec, panel: &PanelData) -> Result<Self> {
        Model::with_covariates(spec, panel.n_actors(), &panel.covariates)
    }

    pub fn with_covariates(
        spec: ModelSpec,
        n: usize,
        covariates: &BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        spec.validate()?;
        for v in covariates.values() {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "covariate has {} values for {} actors",
                    v.len(),
                    n
                )));
            }
        }
        let fixed = spec
            .fixed
            .iter()
            .map(|e| CompiledEffect::new(e, covariates))
            .collect::<Result<Vec<_>>>()?;
        let random = spec
            .random
            .iter()
            .map(|e| CompiledEffect::new(e, covariates))
            .collect::<Result<Vec<_>>>()?;
        let statistics = spec.all_statistics();
        let mut stat_effects: Vec<CompiledEffect> = Vec::new();
        for s in &statistics {
            for e in s.effects() {
                if !stat_effects.iter().any(|c| &c.kind == e) {
                    stat_effects.push(CompiledEffect::new(e, covariates)?);
                }
            }
        }
        Ok(Model {
            spec,
            n,
            fixed,
            random,
            statistics,
            stat_effects,
            covariates: covariates.clone(),
        })
    }

    /// The same model with further statistics appended after the existing ones.
    pub fn with_extra_statistics(
        &self,
        extra: impl IntoIterator<Item = Statistic>,
    ) -> Result<Model> {
        Model::with_covariates(
            self.spec.clone().with_extra(extra),
            self.n,
            &self.covariates,
        )
    }

    pub fn covariates(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.covariates
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_actors(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.fixed.len()
    }

    pub fn q(&self) -> usize {
        self.random.len()
    }

    pub fn q_star(&self) -> usize {
        self.spec.q_star()
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params()
    }

    /// Length of the estimating-function block of the statistic vector.
    pub fn n_estimation_statistics(&self) -> usize {
        self.n_params()
    }

    pub fn statistics(&self) -> &[Statistic] {
        &self.statistics
    }

    pub fn fixed_effects(&self) -> &[CompiledEffect] {
        &self.fixed
    }

    pub fn random_effects(&self) -> &[CompiledEffect] {
        &self.random
    }

    /// Full statistic vector of `end`, with the rate statistic measured
    /// against `start`.
    pub fn statistic_values(&self, end: &Network, start: &Network) -> Vec<f64> {
        let per_actor: Vec<Vec<f64>> = self
            .stat_effects
            .iter()
            .map(|e| (0..self.n).map(|i| e.value(end, i)).collect())
            .collect();
        let lookup = |k: &EffectKind| -> &Vec<f64> {
            let idx = self
                .stat_effects
                .iter()
                .position(|c| &c.kind == k)
                .expect("statistic effects are compiled at construction");
            &per_actor[idx]
        };
        self.statistics
            .iter()
            .map(|s| match s {
                Statistic::Rate => end.hamming(start) as f64,
                Statistic::Sum(e) => lookup(e).iter().sum(),
                Statistic::Dispersion(e) => sum_sq_dev(lookup(e)),
                Statistic::CrossDispersion(a, b) => cross_dev(lookup(a), lookup(b)),
                Statistic::PooledDispersion(es) => es.iter().map(|e| sum_sq_dev(lookup(e))).sum(),
            })
            .collect()
    }

    /// Observed statistic vector: wave 2 measured against wave 1.
    pub fn observed(&self, panel: &PanelData) -> Vec<f64> {
        self.statistic_values(&panel.wave2, &panel.wave1)
    }

    /// `f_i(x) = Σ_k β_k s_ik(x) + Σ_h b_ih r_ih(x)`.
    pub fn evaluation_function(
        &self,
        x: &Network,
        i: usize,
        beta: &[f64],
        b_i: &[f64],
    ) -> Result<f64> {
        if beta.len() != self.p() || b_i.len() != self.q() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} fixed and {} random coefficients, got {} and {}",
                self.p(),
                self.q(),
                beta.len(),
                b_i.len()
            )));
        }
        if i >= x.n_actors() {
            return Err(Error::ActorOutOfRange {
                index: i,
                n: x.n_actors(),
            });
        }
        let fixed: f64 = self
            .fixed
            .iter()
            .zip(beta)
            .map(|(e, b)| b * e.value(x, i))
            .sum();
        let random: f64 = self
            .random
            .iter()
            .zip(b_i)
            .map(|(e, b)| b * e.value(x, i))
            .sum();
        Ok(fixed + random)
    }
}

fn cross_dev(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum()
}

/// Observed targets of the moment equations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetStatistics {
    /// `Σ_i s_i(x(t₂))` per fixed effect.
    pub s: Vec<f64>,
    /// Centered cross-product matrix of the random-effect statistics at wave 2.
    pub w: Vec<Vec<f64>>,
    /// Number of tie variables that differ between the waves.
    pub rate_target: usize,
}

pub fn target_statistics(panel: &PanelData, spec: &ModelSpec) -> Result<TargetStatistics> {
    let model = Model::new(spec.clone(), panel)?;
    let x = &panel.wave2;
    let n = panel.n_actors();
    let s = model
        .fixed
        .iter()
        .map(|e| (0..n).map(|i| e.value(x, i)).sum())
        .collect();
    let r: Vec<Vec<f64>> = model
        .random
        .iter()
        .map(|e| (0..n).map(|i| e.value(x, i)).collect())
        .collect();
    let w = r
        .iter()
        .map(|a| r.iter().map(|b| cross_dev(a, b)).collect())
        .collect();
    Ok(TargetStatistics {
        s,
        w,
        rate_target: panel.wave1.hamming(&panel.wave2),
    })
}
