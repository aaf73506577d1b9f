//! Directed binary networks, two-wave panels and their ingestion.
//!
//! A [`Network`] keeps both the row (out-tie) and column (in-tie) bitsets so
//! that two-path counts needed by triadic change statistics are a popcount.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed binary adjacency state with an empty diagonal.
#[derive(Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    words: usize,
    out_rows: Vec<u64>,
    in_cols: Vec<u64>,
    out_deg: Vec<u32>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("n", &self.n)
            .field("ties", &self.n_ties())
            .finish()
    }
}

impl Network {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Network {
            n,
            words,
            out_rows: vec![0; n * words],
            in_cols: vec![0; n * words],
            out_deg: vec![0; n],
        }
    }

    /// Builds a network from an explicit tie list. Self-ties are ignored.
    pub fn from_ties(n: usize, ties: &[(usize, usize)]) -> Result<Self> {
        let mut x = Network::empty(n);
        for &(i, j) in ties {
            if i >= n {
                return Err(Error::ActorOutOfRange { index: i, n });
            }
            if j >= n {
                return Err(Error::ActorOutOfRange { index: j, n });
            }
            if i != j && !x.has_tie(i, j) {
                x.toggle(i, j);
            }
        }
        Ok(x)
    }

    /// Builds a network from a square 0/1 matrix. Returns the network and the
    /// number of nonzero diagonal entries that were dropped.
    pub fn from_matrix(rows: &[Vec<u8>]) -> Result<(Self, usize)> {
        let n = rows.len();
        let mut x = Network::empty(n);
        let mut dropped = 0;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    row.len(),
                    n
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 if i == j => dropped += 1,
                    1 => x.toggle(i, j),
                    _ => {
                        return Err(Error::NonBinary {
                            row: i + 1,
                            col: j + 1,
                            value: v.to_string(),
                        })
                    }
                }
            }
        }
        Ok((x, dropped))
    }

    #[inline]
    pub fn n_actors(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_tie(&self, i: usize, j: usize) -> bool {
        self.out_rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn tie(&self, i: usize, j: usize) -> u8 {
        self.has_tie(i, j) as u8
    }

    /// Flips tie `i -> j`. Panics on `i == j` in debug builds.
    #[inline]
    pub fn toggle(&mut self, i: usize, j: usize) {
        debug_assert!(i != j, "self-ties are not part of the state space");
        let bit = 1u64 << (j % 64);
        let slot = i * self.words + j / 64;
        self.out_rows[slot] ^= bit;
        self.in_cols[j * self.words + i / 64] ^= 1u64 << (i % 64);
        if self.out_rows[slot] & bit != 0 {
            self.out_deg[i] += 1;
        } else {
            self.out_deg[i] -= 1;
        }
    }

    #[inline]
    pub fn out_degree(&self, i: usize) -> usize {
        self.out_deg[i] as usize
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.out_deg.iter().map(|&d| d as usize).collect()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.col(j).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn n_ties(&self) -> usize {
        self.out_deg.iter().map(|&d| d as usize).sum()
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[u64] {
        &self.out_rows[i * self.words..(i + 1) * self.words]
    }

    #[inline]
    pub(crate) fn col(&self, j: usize) -> &[u64] {
        &self.in_cols[j * self.words..(j + 1) * self.words]
    }

    /// Number of actors `h` with `i -> h` and `h -> j`.
    #[inline]
    pub fn two_paths(&self, i: usize, j: usize) -> usize {
        popcount_and(self.row(i), self.col(j))
    }

    /// Number of actors `h` with `i -> h` and `j -> h`.
    #[inline]
    pub fn shared_out(&self, i: usize, j: usize) -> usize {
        popcount_and(self.row(i), self.row(j))
    }

    /// Receivers of actor `i`, ascending.
    pub fn out_neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_tie(i, j))
    }

    /// Number of tie variables that differ between two networks.
    pub fn hamming(&self, other: &Network) -> usize {
        assert_eq!(self.n, other.n, "hamming distance needs equal actor sets");
        self.out_rows
            .iter()
            .zip(&other.out_rows)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.tie(i, j)).collect())
            .collect()
    }

    /// Whitespace-separated matrix, one row per line.
    pub fn to_matrix_string(&self) -> String {
        let mut out = String::with_capacity(self.n * (2 * self.n + 1));
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", self.tie(i, j));
            }
            out.push('\n');
        }
        out
    }

    /// Relabels actors: actor `i` of `self` becomes actor `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Network {
        assert_eq!(perm.len(), self.n);
        let mut y = Network::empty(self.n);
        for i in 0..self.n {
            for j in self.out_neighbours(i) {
                y.toggle(perm[i], perm[j]);
            }
        }
        y
    }
}

#[inline]
fn popcount_and(a: &[u64], b: &[u64]) -> usize {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x & y).count_ones() as usize)
        .sum()
}

/// An element of the adjacency set of a focal actor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Candidate {
    Toggle(usize),
    NoChange,
}

/// The `n` candidate moves of actor `i`: one toggle per other actor, in
/// ascending order, followed by the no-change move.
pub fn adjacency_candidates(x: &Network, i: usize) -> Result<Vec<Candidate>> {
    let n = x.n_actors();
    if i >= n {
        return Err(Error::ActorOutOfRange { index: i, n });
    }
    let mut out: Vec<Candidate> = (0..n).filter(|&j| j != i).map(Candidate::Toggle).collect();
    out.push(Candidate::NoChange);
    Ok(out)
}

pub fn apply_candidate(x: &Network, i: usize, c: Candidate) -> Network {
    let mut y = x.clone();
    if let Candidate::Toggle(j) = c {
        y.toggle(i, j);
    }
    y
}

/// Sum of squared deviations of the out-degrees from their mean.
pub fn out_degree_dispersion(x: &Network) -> f64 {
    let degrees: Vec<f64> = x.out_degrees().into_iter().map(|d| d as f64).collect();
    sum_sq_dev(&degrees)
}

pub(crate) fn sum_sq_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Two observations of a network on a fixed actor set, with actor covariates.
#[derive(Clone, Debug)]
pub struct PanelData {
    pub wave1: Network,
    pub wave2: Network,
    pub covariates: BTreeMap<String, Vec<f64>>,
}

impl PanelData {
    pub fn new(
        wave1: Network,
        wave2: Network,
        covariates: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let n = wave1.n_actors();
        if n == 0 {
            return Err(Error::DimensionMismatch("panel has no actors".into()));
        }
        if wave2.n_actors() != n {
            return Err(Error::DimensionMismatch(format!(
                "wave 1 has {} actors, wave 2 has {}",
                n,
                wave2.n_actors()
            )));
        }
        for (name, v) in &covariates {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "covariate `{}` has {} values for {} actors",
                    name,
                    v.len(),
                    n
                )));
            }
        }
        Ok(PanelData {
            wave1,
            wave2,
            covariates,
        })
    }

    pub fn n_actors(&self) -> usize {
        self.wave1.n_actors()
    }
}

/// Reads two adjacency matrices and any number of covariate files.
pub fn load_panel(
    wave1_path: &Path,
    wave2_path: &Path,
    covariate_paths: &[(String, PathBuf)],
) -> Result<PanelData> {
    let wave1 = read_network(wave1_path)?;
    let wave2 = read_network(wave2_path)?;
    let mut covariates = BTreeMap::new();
    for (name, path) in covariate_paths {
        covariates.insert(name.clone(), read_covariate(path)?);
    }
    PanelData::new(wave1, wave2, covariates)
}

pub fn read_network(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_matrix(&text, path)?;
    let (x, dropped) = Network::from_matrix(&rows)?;
    if dropped > 0 {
        log::warn!(
            "{}: {} nonzero diagonal entries set to 0",
            path.display(),
            dropped
        );
    }
    Ok(x)
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Vec<Vec<u8>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (col, tok) in line.split_whitespace().enumerate() {
            let v: i64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("`{tok}` is not an integer"),
            })?;
            if !(0..=1).contains(&v) {
                return Err(Error::NonBinary {
                    row: rows.len() + 1,
                    col: col + 1,
                    value: tok.to_string(),
                });
            }
            row.push(v as u8);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_covariate(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("`{line}` is not a number"),
        })?;
        values.push(v);
    }
    Ok(values)
}
