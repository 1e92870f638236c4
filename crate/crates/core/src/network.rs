//! Time-varying dependence networks by neighborhood selection: every node
//! is regressed on all the others with its own adaptive penalty, and edges
//! are read off the nonzero coefficients.

use rayon::prelude::*;

use crate::error::{ensure_finite, Error, Result};
use crate::glm::Family;
use crate::rap::{Rap, RapState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRule {
    /// Edge if either regression selects the other node.
    Or,
    /// Edge only if both regressions select each other.
    And,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub state: RapState,
    pub r: f64,
    /// Emit a checkpoint every `stride` observations.
    pub stride: usize,
    pub rule: EdgeRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub p: usize,
    pub checkpoints: Vec<usize>,
    /// Edges with `i < j`, ordered by checkpoint then `(i, j)`.
    pub edges: Vec<Edge>,
    /// `lambda[k][t-1]` is node `k`'s penalty before absorbing row `t`.
    pub lambda: Vec<Vec<f64>>,
}

impl NetworkOutput {
    pub fn edges_at(&self, t: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.t == t)
    }

    /// Fraction of the `p(p-1)/2` node pairs that are edges, per checkpoint.
    pub fn densities(&self) -> Vec<f64> {
        let pairs = (self.p * (self.p - 1) / 2) as f64;
        self.checkpoints
            .iter()
            .map(|&t| self.edges_at(t).count() as f64 / pairs)
            .collect()
    }
}

/// Columns whose values never change.
pub fn constant_columns(rows: &[Vec<f64>]) -> Vec<usize> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    (0..first.len())
        .filter(|&j| rows.iter().all(|row| row[j] == first[j]))
        .collect()
}

fn validate(rows: &[Vec<f64>], cfg: &NetworkConfig) -> Result<usize> {
    let p = rows.first().map_or(0, Vec::len);
    if p < 3 {
        return Err(Error::InvalidConfig(format!(
            "network estimation needs at least 3 nodes, got {p}"
        )));
    }
    if cfg.stride == 0 {
        return Err(Error::InvalidConfig(
            "checkpoint stride must be positive".into(),
        ));
    }
    for row in rows {
        if row.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: row.len(),
            });
        }
        ensure_finite(row, "node values")?;
    }
    let constant = constant_columns(rows);
    if !constant.is_empty() {
        return Err(Error::Degenerate(format!(
            "constant node columns {constant:?}"
        )));
    }
    Ok(p)
}

fn split(row: &[f64], k: usize) -> (Vec<f64>, f64) {
    let x = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, v)| *v)
        .collect();
    (x, row[k])
}

/// Coefficient of node `j` in node `k`'s regression.
fn coef(beta: &[f64], k: usize, j: usize) -> f64 {
    beta[if j < k { j } else { j - 1 }]
}

fn symmetrize(t: usize, betas: &[Vec<f64>], rule: EdgeRule, out: &mut Vec<Edge>) {
    let p = betas.len();
    for i in 0..p {
        for j in i + 1..p {
            let a = coef(&betas[i], i, j);
            let b = coef(&betas[j], j, i);
            let present = match rule {
                EdgeRule::Or => a != 0.0 || b != 0.0,
                EdgeRule::And => a != 0.0 && b != 0.0,
            };
            if !present {
                continue;
            }
            let nz: Vec<f64> = [a, b].into_iter().filter(|v| *v != 0.0).collect();
            let weight = nz.iter().sum::<f64>() / nz.len() as f64;
            out.push(Edge { t, i, j, weight });
        }
    }
}

/// Runs one Gaussian adaptive-penalty regression per node over `rows` and
/// collects the symmetrized graph every `cfg.stride` rows (and after the
/// last row).
pub fn estimate_network(rows: &[Vec<f64>], cfg: &NetworkConfig) -> Result<NetworkOutput> {
    let p = validate(rows, cfg)?;
    let n = rows.len();
    let checkpoints: Vec<usize> = (1..=n).filter(|t| t % cfg.stride == 0 || *t == n).collect();

    let per_node: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..p)
        .into_par_iter()
        .map(|k| {
            let mut learner = Rap::new(cfg.state, Family::Gaussian, p - 1, cfg.r)?;
            let mut lambdas = Vec::with_capacity(n);
            let mut snapshots = Vec::with_capacity(checkpoints.len());
            let mut next = checkpoints.iter().peekable();
            for (idx, row) in rows.iter().enumerate() {
                let (x, y) = split(row, k);
                let rec = learner.step(&x, y)?;
                lambdas.push(rec.lambda);
                if next.peek() == Some(&&(idx + 1)) {
                    next.next();
                    snapshots.push(learner.fit().beta.iter().copied().collect());
                }
            }
            Ok((lambdas, snapshots))
        })
        .collect::<Result<_>>()?;

    let mut edges = Vec::new();
    for (c, &t) in checkpoints.iter().enumerate() {
        let betas: Vec<Vec<f64>> = per_node.iter().map(|(_, s)| s[c].clone()).collect();
        symmetrize(t, &betas, cfg.rule, &mut edges);
    }
    Ok(NetworkOutput {
        p,
        checkpoints,
        edges,
        lambda: per_node.into_iter().map(|(l, _)| l).collect(),
    })
}
