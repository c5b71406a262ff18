//! Video-level detection metrics and 1-NN person identification.
//!
//! Scores are oriented so that higher means "more likely real"; a video is
//! declared fake when its score falls below a threshold.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{squared_distance_unchecked, EmbeddingPair, Group, Modality};
use crate::error::{Error, Result};
use crate::scoring::DecisionPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Real,
    Fake,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSample {
    pub score: f64,
    pub label: Label,
    pub group: Option<Group>,
}

impl ScoreSample {
    pub fn real(score: f64) -> Self {
        ScoreSample { score, label: Label::Real, group: None }
    }

    pub fn fake(score: f64) -> Self {
        ScoreSample { score, label: Label::Fake, group: None }
    }
}

fn split(samples: &[ScoreSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut real = Vec::new();
    let mut fake = Vec::new();
    for s in samples {
        if !s.score.is_finite() {
            return Err(Error::data(format!("non-finite score {}", s.score)));
        }
        match s.label {
            Label::Real => real.push(s.score),
            Label::Fake => fake.push(s.score),
        }
    }
    if real.is_empty() || fake.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "need both classes, got {} real and {} fake",
            real.len(),
            fake.len()
        )));
    }
    Ok((real, fake))
}

/// Probability that a random real sample outscores a random fake one, ties
/// counted one half.
pub fn auc(samples: &[ScoreSample]) -> Result<f64> {
    let (mut real, mut fake) = split(samples)?;
    real.sort_by(f64::total_cmp);
    fake.sort_by(f64::total_cmp);
    // twice the Mann-Whitney U, kept integral
    let mut doubled: u64 = 0;
    let (mut below, mut upto) = (0usize, 0usize);
    for r in &real {
        while below < fake.len() && fake[below] < *r {
            below += 1;
        }
        upto = upto.max(below);
        while upto < fake.len() && fake[upto] <= *r {
            upto += 1;
        }
        doubled += (2 * below + (upto - below)) as u64;
    }
    Ok(doubled as f64 / (2 * real.len() as u64 * fake.len() as u64) as f64)
}

/// Number of real scores at or below the threshold: the `ceil(fa * n_real)`-th
/// smallest, at least the first.
fn threshold_rank(fa: f64, n_real: usize) -> usize {
    // tolerate representation error in fa * n (0.1 * 30 = 3.0000000000000004)
    let k = (fa * n_real as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n_real)
}

/// Fraction of fakes strictly below the empirical `fa`-quantile of real scores.
pub fn pd_at_fa(samples: &[ScoreSample], fa: f64) -> Result<f64> {
    if !(fa > 0.0 && fa < 1.0) {
        return Err(Error::config(format!("false-alarm rate must lie in (0, 1), got {fa}")));
    }
    let (mut real, fake) = split(samples)?;
    real.sort_by(f64::total_cmp);
    let threshold = real[threshold_rank(fa, real.len()) - 1];
    Ok(fake.iter().filter(|&&s| s < threshold).count() as f64 / fake.len() as f64)
}

/// Fraction of samples on the correct side of `policy.threshold`.
pub fn accuracy(samples: &[ScoreSample], policy: &DecisionPolicy) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty sample set".into()));
    }
    let correct = samples.iter().filter(|s| (s.score < policy.threshold) == (s.label == Label::Fake)).count();
    Ok(correct as f64 / samples.len() as f64)
}

/// ROC points `(false-alarm rate, detection rate)` when fakes are declared
/// below each distinct score, from the strictest threshold up.
pub fn roc_curve(samples: &[ScoreSample]) -> Result<Vec<(f64, f64)>> {
    let (real, fake) = split(samples)?;
    let mut thresholds: Vec<f64> = real.iter().chain(&fake).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let rate = |v: &[f64], t: f64| v.iter().filter(|&&s| s < t).count() as f64 / v.len() as f64;
    Ok(thresholds.into_iter().map(|t| (rate(&real, t), rate(&fake, t))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub auc: f64,
    pub accuracy: f64,
    pub pd_at_fa: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

impl MetricsReport {
    pub fn compute(samples: &[ScoreSample], policy: &DecisionPolicy, fa: f64) -> Result<Self> {
        let (real, fake) = split(samples)?;
        Ok(MetricsReport {
            auc: auc(samples)?,
            accuracy: accuracy(samples, policy)?,
            pd_at_fa: pd_at_fa(samples, fa)?,
            n_real: real.len(),
            n_fake: fake.len(),
        })
    }
}

/// Per-group metrics: every real sample against the fakes of each group.
/// Groups whose metrics are undefined map to `None`.
pub fn per_group(samples: &[ScoreSample], policy: &DecisionPolicy, fa: f64) -> BTreeMap<Group, Option<MetricsReport>> {
    let reals: Vec<ScoreSample> = samples.iter().filter(|s| s.label == Label::Real).copied().collect();
    Group::ALL
        .into_iter()
        .map(|g| {
            let mut set = reals.clone();
            set.extend(samples.iter().filter(|s| s.label == Label::Fake && s.group == Some(g)));
            (g, MetricsReport::compute(&set, policy, fa).ok())
        })
        .collect()
}

/// Unweighted mean over the defined entries.
pub fn macro_average(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn knn_distance(a: &EmbeddingPair, b: &EmbeddingPair, m: Modality) -> f64 {
    match m {
        Modality::Audio => squared_distance_unchecked(&a.audio, &b.audio),
        Modality::Video => squared_distance_unchecked(&a.video, &b.video),
        Modality::AudioVideo => {
            squared_distance_unchecked(&a.audio, &b.audio) + squared_distance_unchecked(&a.video, &b.video)
        }
    }
}

/// Identity of the nearest gallery entry, ties to the lowest index.
pub fn nearest_label<'a, L>(gallery: &'a [(L, EmbeddingPair)], probe: &EmbeddingPair, m: Modality) -> Option<&'a L> {
    let mut best: Option<(f64, &L)> = None;
    for (label, g) in gallery {
        let d = knn_distance(probe, g, m);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, label));
        }
    }
    best.map(|(_, l)| l)
}

/// 1-nearest-neighbour identification accuracy of `probes` against `gallery`.
/// The joint modality sums the audio and video squared distances.
pub fn knn_person_id<L: PartialEq>(
    gallery: &[(L, EmbeddingPair)],
    probes: &[(L, EmbeddingPair)],
    m: Modality,
) -> Result<f64> {
    if gallery.is_empty() {
        return Err(Error::data("empty gallery"));
    }
    if probes.is_empty() {
        return Err(Error::UndefinedMetric("no probes".into()));
    }
    let correct = probes.iter().filter(|(label, p)| nearest_label(gallery, p, m) == Some(label)).count();
    Ok(correct as f64 / probes.len() as f64)
}

/// Empirical false-alarm rate of `policy` on `n` exact standard-normal draws.
pub fn calibration_check(n: usize, policy: &DecisionPolicy, seed: u64) -> Result<f64> {
    if n < 1000 {
        return Err(Error::config(format!("calibration check needs at least 1000 draws, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let below = (0..n)
        .filter(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z < policy.threshold
        })
        .count();
    Ok(below as f64 / n as f64)
}
