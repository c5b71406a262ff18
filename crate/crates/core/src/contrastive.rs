//! Multi-way contrastive loss over a batch of segments.
//!
//! For an anchor `c` with positive set `N_c` (other segments of the same
//! identity) the per-anchor term is
//! `-log( sum_{k in N_c} e^{S(c,k)} / sum_{k != c} e^{S(c,k)} )`.
//! It is evaluated as `softplus(lse_neg - lse_pos)` so that similarities of
//! order `-1e6` (tiny temperatures) stay finite and the result is never
//! negative.

use crate::embedding::{similarity_matrices, EmbeddingPair, SegmentRecord, SimilarityMatrix, Temperature};
use crate::error::{Error, Result};

/// Per-anchor positive index sets, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveSets {
    sets: Vec<Vec<usize>>,
}

impl PositiveSets {
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::data(format!("batch needs at least 2 segments, got {}", labels.len())));
        }
        let mut sets = Vec::with_capacity(labels.len());
        for (c, label) in labels.iter().enumerate() {
            let set: Vec<usize> =
                (0..labels.len()).filter(|&k| k != c && labels[k].as_ref() == label.as_ref()).collect();
            if set.is_empty() {
                return Err(Error::SingletonIdentity { identity: label.as_ref().to_string(), index: c });
            }
            sets.push(set);
        }
        Ok(PositiveSets { sets })
    }

    pub fn get(&self, c: usize) -> &[usize] {
        &self.sets[c]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn positive_sets(batch: &[SegmentRecord]) -> Result<PositiveSets> {
    let labels: Vec<&str> = batch.iter().map(|s| s.identity_id.as_str()).collect();
    PositiveSets::from_labels(&labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_v: f64,
    pub l_a: f64,
    pub l_av: f64,
    pub lambda: f64,
    pub l_tot: f64,
}

impl LossReport {
    pub fn new(l_a: f64, l_v: f64, l_av: f64, lambda: f64) -> Self {
        LossReport { l_v, l_a, l_av, lambda, l_tot: l_v + l_a + lambda * l_av }
    }
}

/// d l_tot / d x_m(c) for every segment, in batch order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub audio: Vec<Vec<f64>>,
    pub video: Vec<Vec<f64>>,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softplus(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// Indices `k != c` not in `pos` (both sorted).
fn negatives<'a>(n: usize, c: usize, pos: &'a [usize]) -> impl Iterator<Item = usize> + Clone + 'a {
    (0..n).filter(move |&k| k != c && pos.binary_search(&k).is_err())
}

struct RowTerms {
    loss: f64,
    lse_pos: f64,
    lse_all: f64,
}

fn row_terms(sim: &SimilarityMatrix, c: usize, pos: &[usize]) -> RowTerms {
    let n = sim.len();
    let row = sim.row(c);
    let lse_pos = log_sum_exp(pos.iter().map(|&k| row[k]));
    let lse_neg = log_sum_exp(negatives(n, c, pos).map(|k| row[k]));
    let loss = softplus(lse_neg - lse_pos);
    RowTerms { loss, lse_pos, lse_all: lse_pos + loss }
}

fn check_sizes(sim: &SimilarityMatrix, pos: &PositiveSets) -> Result<()> {
    if sim.len() != pos.len() {
        return Err(Error::DimensionMismatch { left: sim.len(), right: pos.len() });
    }
    if !sim.entries().iter().all(|s| s.is_finite()) {
        return Err(Error::data("similarity matrix has non-finite entries"));
    }
    Ok(())
}

pub fn contrastive_loss(sim: &SimilarityMatrix, pos: &PositiveSets) -> Result<f64> {
    check_sizes(sim, pos)?;
    Ok((0..sim.len()).map(|c| row_terms(sim, c, pos.get(c)).loss).sum())
}

/// Loss plus the N x N matrix of partial derivatives with respect to `S(c,k)`.
fn loss_with_sim_gradient(sim: &SimilarityMatrix, pos: &PositiveSets) -> Result<(f64, Vec<f64>)> {
    check_sizes(sim, pos)?;
    let n = sim.len();
    let mut grad = vec![0.0; n * n];
    let mut total = 0.0;
    for c in 0..n {
        let terms = row_terms(sim, c, pos.get(c));
        total += terms.loss;
        let row = sim.row(c);
        let g = &mut grad[c * n..(c + 1) * n];
        for k in (0..n).filter(|&k| k != c) {
            g[k] = (row[k] - terms.lse_all).exp();
        }
        for &k in pos.get(c) {
            g[k] -= (row[k] - terms.lse_pos).exp();
        }
    }
    Ok((total, grad))
}

pub fn total_loss(
    sim_a: &SimilarityMatrix,
    sim_v: &SimilarityMatrix,
    sim_av: &SimilarityMatrix,
    pos: &PositiveSets,
    lambda: f64,
) -> Result<LossReport> {
    check_lambda(lambda)?;
    if sim_a.len() != sim_v.len() || sim_a.len() != sim_av.len() {
        return Err(Error::data("similarity matrices cover different segment lists"));
    }
    let l_a = contrastive_loss(sim_a, pos)?;
    let l_v = contrastive_loss(sim_v, pos)?;
    let l_av = contrastive_loss(sim_av, pos)?;
    Ok(LossReport::new(l_a, l_v, l_av, lambda))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("lambda must be non-negative, got {lambda}")))
    }
}

pub fn loss_gradient(
    embeddings: &[EmbeddingPair],
    batch: &[SegmentRecord],
    tau: Temperature,
    lambda: f64,
) -> Result<(LossReport, LossGradients)> {
    if embeddings.len() != batch.len() {
        return Err(Error::DimensionMismatch { left: embeddings.len(), right: batch.len() });
    }
    loss_gradient_with(embeddings, &positive_sets(batch)?, tau, lambda)
}

/// Total loss and its gradient with respect to every embedded vector.
///
/// With `G_m = dL_m/dS_m` and `W = G_m + lambda * G_av`, the gradient for
/// segment `c` in modality `m` is `-(2/tau) sum_k (W_ck + W_kc)(x_c - x_k)`,
/// accumulated in ascending `k`.
pub fn loss_gradient_with(
    embeddings: &[EmbeddingPair],
    pos: &PositiveSets,
    tau: Temperature,
    lambda: f64,
) -> Result<(LossReport, LossGradients)> {
    check_lambda(lambda)?;
    if !embeddings.iter().all(EmbeddingPair::is_finite) {
        return Err(Error::data("non-finite embedding"));
    }
    let (sa, sv, sav) = similarity_matrices(embeddings, tau)?;
    let (l_a, ga) = loss_with_sim_gradient(&sa, pos)?;
    let (l_v, gv) = loss_with_sim_gradient(&sv, pos)?;
    let (l_av, gav) = loss_with_sim_gradient(&sav, pos)?;
    let report = LossReport::new(l_a, l_v, l_av, lambda);

    let n = embeddings.len();
    let scale = -2.0 / tau.get();
    let grads_for = |g: &[f64], pick: fn(&EmbeddingPair) -> &[f64]| -> Vec<Vec<f64>> {
        let weight = |c: usize, k: usize| {
            if lambda == 0.0 {
                g[c * n + k]
            } else {
                g[c * n + k] + lambda * gav[c * n + k]
            }
        };
        (0..n)
            .map(|c| {
                let xc = pick(&embeddings[c]);
                let mut out = vec![0.0; xc.len()];
                for k in (0..n).filter(|&k| k != c) {
                    let coef = scale * (weight(c, k) + weight(k, c));
                    let xk = pick(&embeddings[k]);
                    for ((o, a), b) in out.iter_mut().zip(xc).zip(xk) {
                        *o += coef * (a - b);
                    }
                }
                out
            })
            .collect()
    };
    let gradients = LossGradients { audio: grads_for(&ga, |e| &e.audio), video: grads_for(&gv, |e| &e.video) };
    Ok((report, gradients))
}
