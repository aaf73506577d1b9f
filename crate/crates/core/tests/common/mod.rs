#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use saom_re::effects::{EffectKind, ModelSpec, VarianceModel};
use saom_re::rng::{stream, Stage};
use saom_re::simulation::simulate_period;
use saom_re::{Model, Network, PanelData, ParameterPoint};

/// Bernoulli(density) digraph without loops.
pub fn random_network<R: Rng>(n: usize, density: f64, rng: &mut R) -> Network {
    let mut ties = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < density {
                ties.push((i, j));
            }
        }
    }
    Network::from_ties(n, &ties).unwrap()
}

/// Digraph on 4 actors from the 12 off-diagonal bits of `code`.
pub fn digraph4(code: u32) -> Network {
    let mut ties = Vec::new();
    let mut bit = 0;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                if code >> bit & 1 == 1 {
                    ties.push((i, j));
                }
                bit += 1;
            }
        }
    }
    Network::from_ties(4, &ties).unwrap()
}

/// A two-valued covariate alternating over actors.
pub fn binary_covariate(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect()
}

/// Panel whose second wave is simulated from a random first wave at `truth`.
pub fn synthetic_panel(
    n: usize,
    density: f64,
    spec: &ModelSpec,
    truth: &ParameterPoint,
    seed: u64,
) -> (PanelData, Model) {
    let mut rng = stream(seed, Stage::Synthetic, 0);
    let wave1 = random_network(n, density, &mut rng);
    let mut cov = BTreeMap::new();
    cov.insert("v".to_string(), binary_covariate(n));
    let seed_panel = PanelData::new(wave1.clone(), wave1.clone(), cov.clone()).unwrap();
    let model = Model::new(spec.clone(), &seed_panel).unwrap();
    let out = simulate_period(&wave1, truth, &model, &mut rng).unwrap();
    let panel = PanelData::new(wave1, out.end_network, cov).unwrap();
    (panel, model)
}

pub fn out_rec() -> Vec<EffectKind> {
    vec![EffectKind::OutDegree, EffectKind::Reciprocity]
}

pub fn random_out_degree(fixed: Vec<EffectKind>) -> ModelSpec {
    ModelSpec::new(fixed, vec![EffectKind::OutDegree], VarianceModel::Diagonal)
}

/// Literal transcription of the defining sums, independent of the library.
pub fn brute_effect(e: &EffectKind, x: &Network, i: usize, v: &[f64]) -> f64 {
    let n = x.n_actors();
    let t = |a: usize, b: usize| x.tie(a, b) as f64;
    let sim_bar = {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    s += 1.0 - (v[a] - v[b]).abs();
                }
            }
        }
        s / (n * (n - 1)) as f64
    };
    let mut total = 0.0;
    match e {
        EffectKind::OutDegree => (0..n).for_each(|j| total += t(i, j)),
        EffectKind::Reciprocity => (0..n).for_each(|j| total += t(i, j) * t(j, i)),
        EffectKind::TransitiveTriplets => {
            for j in 0..n {
                for h in 0..n {
                    total += t(i, j) * t(i, h) * t(h, j);
                }
            }
        }
        EffectKind::OutDegreeActivity => {
            let d: f64 = (0..n).map(|j| t(i, j)).sum();
            total = d * d;
        }
        EffectKind::CovariateAlter(_) => (0..n).for_each(|j| total += t(i, j) * v[j]),
        EffectKind::CovariateEgo(_) => (0..n).for_each(|j| total += v[i] * t(i, j)),
        EffectKind::CovariateSimilarity(_) => {
            (0..n).for_each(|j| total += t(i, j) * (1.0 - (v[i] - v[j]).abs() - sim_bar))
        }
    }
    total
}

pub fn all_effects() -> Vec<EffectKind> {
    vec![
        EffectKind::OutDegree,
        EffectKind::Reciprocity,
        EffectKind::TransitiveTriplets,
        EffectKind::OutDegreeActivity,
        EffectKind::CovariateAlter("v".into()),
        EffectKind::CovariateEgo("v".into()),
        EffectKind::CovariateSimilarity("v".into()),
    ]
}

pub fn kapferer_dir() -> PathBuf {
    std::env::var_os("KAPFERER_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            Path::new(env!("CARGO_MANIFEST_DIR"))
                .ancestors()
                .nth(2)
                .unwrap()
                .join("data/kapferer")
        })
}

/// Tailor-shop panel: `kapfts1.txt`, `kapfts2.txt` and `status.txt`.
pub fn kapferer_panel() -> Result<PanelData, String> {
    let dir = kapferer_dir();
    let files = ["kapfts1.txt", "kapfts2.txt", "status.txt"].map(|f| dir.join(f));
    if let Some(missing) = files.iter().find(|p| !p.is_file()) {
        return Err(format!("Kapferer data not found ({})", missing.display()));
    }
    saom_re::network::load_panel(&files[0], &files[1], &[("status".into(), files[2].clone())])
        .map_err(|e| e.to_string())
}

pub fn status_effects() -> Vec<EffectKind> {
    vec![
        EffectKind::CovariateAlter("status".into()),
        EffectKind::CovariateEgo("status".into()),
        EffectKind::CovariateSimilarity("status".into()),
    ]
}

/// Fixed effects of the four compared specifications.
pub fn kapferer_fixed(name: &str) -> Vec<EffectKind> {
    let mut v = vec![EffectKind::OutDegree, EffectKind::Reciprocity];
    match name {
        "standard" => {
            v.push(EffectKind::TransitiveTriplets);
            v.extend(status_effects());
        }
        "no-transitivity" => v.extend(status_effects()),
        "no-status" => v.push(EffectKind::TransitiveTriplets),
        "full" => {
            v.push(EffectKind::TransitiveTriplets);
            v.push(EffectKind::OutDegreeActivity);
            v.extend(status_effects());
        }
        _ => panic!("unknown model {name}"),
    }
    v
}
