//! Reference-set scoring of test segments against a person of interest.
//!
//! A test segment's raw index in modality `m` is its similarity to the
//! closest reference segment. Raw indices are normalized with the mean and
//! (population) standard deviation of the reference's own indices, each
//! computed while excluding matches from the segment's own video. Under the
//! hypothesis that the test video is real the normalized index is treated as
//! standard Gaussian, which fixes the threshold for a target false-alarm rate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::embedding::{squared_distance_unchecked, EmbeddingPair, Modality, SegmentRecord, Temperature};
use crate::encoder::{encode, EncoderParams};
use crate::error::{Error, Result};
use crate::gaussian::{quantile_threshold, standard_normal_cdf};

pub const SIGMA_FLOOR: f64 = 1e-9;

/// How a reference segment's own index is computed for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationRule {
    /// Best match among segments of other videos (the standard rule).
    LeaveOwnVideoOut,
    /// Best match among all other segments. Only meaningful for single-video
    /// references, which the standard rule cannot calibrate.
    LeaveOwnSegmentOut,
}

#[derive(Debug, Clone)]
pub struct ReferenceSet {
    pub poi_id: String,
    pub segments: Vec<(String, EmbeddingPair)>,
    pub tau: Temperature,
    /// Indexed by [`Modality::index`].
    pub mu: [f64; 3],
    pub sigma: [f64; 3],
    self_scores: [Vec<f64>; 3],
}

/// `[audio, video, av]` raw indices of `test` against `segments`.
fn raw_against<'a>(
    test: &EmbeddingPair,
    segments: impl Iterator<Item = &'a EmbeddingPair>,
    tau: Temperature,
) -> [f64; 3] {
    let mut best = [f64::NEG_INFINITY; 3];
    for r in segments {
        let sa = -squared_distance_unchecked(&test.audio, &r.audio) / tau.get();
        let sv = -squared_distance_unchecked(&test.video, &r.video) / tau.get();
        for (b, s) in best.iter_mut().zip([sa, sv, sa + sv]) {
            if s > *b {
                *b = s;
            }
        }
    }
    best
}

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ReferenceSet {
    pub fn from_embeddings(
        poi_id: impl Into<String>,
        segments: Vec<(String, EmbeddingPair)>,
        tau: Temperature,
        rule: CalibrationRule,
    ) -> Result<Self> {
        let poi_id = poi_id.into();
        let videos: BTreeSet<&str> = segments.iter().map(|(v, _)| v.as_str()).collect();
        match rule {
            CalibrationRule::LeaveOwnVideoOut if videos.len() < 2 => {
                return Err(Error::data(format!(
                    "reference for {poi_id} needs at least 2 distinct videos, got {}",
                    videos.len()
                )))
            }
            CalibrationRule::LeaveOwnSegmentOut if segments.len() < 2 => {
                return Err(Error::data(format!("reference for {poi_id} needs at least 2 segments")))
            }
            _ => {}
        }
        let (a_dim, v_dim) = (segments[0].1.audio.len(), segments[0].1.video.len());
        if let Some((_, e)) = segments.iter().find(|(_, e)| e.audio.len() != a_dim || e.video.len() != v_dim) {
            return Err(Error::DimensionMismatch { left: a_dim + v_dim, right: e.audio.len() + e.video.len() });
        }

        let mut self_scores: [Vec<f64>; 3] = Default::default();
        for (i, (video, emb)) in segments.iter().enumerate() {
            let others = segments.iter().enumerate().filter(|&(j, (v, _))| match rule {
                CalibrationRule::LeaveOwnVideoOut => v != video,
                CalibrationRule::LeaveOwnSegmentOut => j != i,
            });
            let raw = raw_against(emb, others.map(|(_, (_, e))| e), tau);
            for (scores, r) in self_scores.iter_mut().zip(raw) {
                scores.push(r);
            }
        }

        let mut mu = [0.0; 3];
        let mut sigma = [0.0; 3];
        for m in Modality::ALL {
            let (mean, std) = mean_and_population_std(&self_scores[m.index()]);
            if std.is_nan() || std < SIGMA_FLOOR {
                return Err(Error::DegenerateReference {
                    poi: poi_id,
                    reason: format!("all reference self-scores identical in {m} (sigma = {std:e})"),
                });
            }
            mu[m.index()] = mean;
            sigma[m.index()] = std;
        }
        Ok(ReferenceSet { poi_id, segments, tau, mu, sigma, self_scores })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Leave-own-video-out raw indices of the reference segments.
    pub fn self_scores(&self, m: Modality) -> &[f64] {
        &self.self_scores[m.index()]
    }

    pub fn raw_indices(&self, test: &EmbeddingPair) -> [f64; 3] {
        raw_against(test, self.segments.iter().map(|(_, e)| e), self.tau)
    }

    pub fn indices(&self, test: &EmbeddingPair) -> PoiIndices {
        let raw = self.raw_indices(test);
        let normalized = [0, 1, 2].map(|i| (raw[i] - self.mu[i]) / self.sigma[i]);
        let fused = normalized[0].min(normalized[1]).min(normalized[2]);
        PoiIndices { raw, normalized, fused }
    }
}

/// Embeds pristine segments of one identity and calibrates a reference.
pub fn build_reference(pristine: &[SegmentRecord], params: &EncoderParams, tau: Temperature) -> Result<ReferenceSet> {
    let first = pristine.first().ok_or_else(|| Error::data("empty reference"))?;
    let mut segments = Vec::with_capacity(pristine.len());
    for s in pristine {
        if s.flags.is_fake {
            return Err(Error::data(format!("reference segment {}#{} is manipulated", s.video_id, s.segment_index)));
        }
        if s.identity_id != first.identity_id {
            return Err(Error::data(format!("reference mixes identities {} and {}", first.identity_id, s.identity_id)));
        }
        segments.push((s.video_id.clone(), encode(params, s)?));
    }
    let videos = segments.iter().map(|(v, _)| v.as_str()).collect::<std::collections::BTreeSet<_>>().len();
    if videos < 10 || segments.len() < 100 {
        log::warn!(
            "reference for {} is small ({videos} videos, {} segments); calibration may be unreliable",
            first.identity_id,
            segments.len()
        );
    }
    ReferenceSet::from_embeddings(first.identity_id.clone(), segments, tau, CalibrationRule::LeaveOwnVideoOut)
}

pub fn poi_index(test: &EmbeddingPair, reference: &ReferenceSet, m: Modality) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::data("empty reference"));
    }
    Ok(reference.raw_indices(test)[m.index()])
}

pub fn normalize_index(raw: f64, reference: &ReferenceSet, m: Modality) -> f64 {
    (raw - reference.mu[m.index()]) / reference.sigma[m.index()]
}

/// Minimum of the three normalized indices, given as `[audio, video, av]`.
pub fn fuse(normalized: &[Option<f64>; 3]) -> Result<f64> {
    let mut out = f64::INFINITY;
    for m in Modality::ALL {
        let v = normalized[m.index()].ok_or_else(|| Error::data(format!("fusion needs the {m} index")))?;
        out = out.min(v);
    }
    Ok(out)
}

/// Raw, normalized and fused indices, arrays indexed by [`Modality::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoiIndices {
    pub raw: [f64; 3],
    pub normalized: [f64; 3],
    pub fused: f64,
}

impl PoiIndices {
    pub fn statistic(&self, s: Statistic) -> f64 {
        match s {
            Statistic::Fusion => self.fused,
            Statistic::Modality(m) => self.normalized[m.index()],
        }
    }

    /// Componentwise arithmetic mean, summed in order.
    pub fn mean(items: &[PoiIndices]) -> Option<PoiIndices> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let mut acc = PoiIndices { raw: [0.0; 3], normalized: [0.0; 3], fused: 0.0 };
        for it in items {
            for i in 0..3 {
                acc.raw[i] += it.raw[i];
                acc.normalized[i] += it.normalized[i];
            }
            acc.fused += it.fused;
        }
        for i in 0..3 {
            acc.raw[i] /= n;
            acc.normalized[i] /= n;
        }
        acc.fused /= n;
        Some(acc)
    }
}

/// Which averaged index drives the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Statistic {
    Modality(Modality),
    Fusion,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::Modality(Modality::Video),
        Statistic::Modality(Modality::Audio),
        Statistic::Modality(Modality::AudioVideo),
        Statistic::Fusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Modality(m) => m.name(),
            Statistic::Fusion => "fusion",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" | "fused" => Ok(Statistic::Fusion),
            other => other.parse().map(Statistic::Modality),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionPolicy {
    pub p_fa: f64,
    pub threshold: f64,
}

impl DecisionPolicy {
    pub fn new(p_fa: f64) -> Result<Self> {
        Ok(DecisionPolicy { p_fa, threshold: quantile_threshold(p_fa)? })
    }

    pub fn decide(&self, statistic: f64) -> Decision {
        if statistic < self.threshold {
            Decision::Fake
        } else {
            Decision::Real
        }
    }

    /// `Phi(statistic)`, a [0, 1] score whose 0.5 cut equals thresholding at 0.
    pub fn pseudo_probability(statistic: f64) -> f64 {
        standard_normal_cdf(statistic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Real,
    Fake,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::Real => "real",
            Decision::Fake => "fake",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoVerdict {
    pub video_id: String,
    pub n_segments: usize,
    pub mean_indices: PoiIndices,
    pub statistic_used: Statistic,
    pub statistic: f64,
    pub decision: Decision,
}

impl VideoVerdict {
    pub fn from_indices(
        video_id: impl Into<String>,
        per_segment: &[PoiIndices],
        policy: &DecisionPolicy,
        statistic_used: Statistic,
    ) -> Result<Self> {
        let mean_indices = PoiIndices::mean(per_segment).ok_or_else(|| Error::data("video has no segments"))?;
        let statistic = mean_indices.statistic(statistic_used);
        Ok(VideoVerdict {
            video_id: video_id.into(),
            n_segments: per_segment.len(),
            mean_indices,
            statistic_used,
            statistic,
            decision: policy.decide(statistic),
        })
    }
}

/// Embeds every segment of a test video and averages its normalized indices.
pub fn score_video(
    test_segments: &[SegmentRecord],
    reference: &ReferenceSet,
    params: &EncoderParams,
    policy: &DecisionPolicy,
    statistic: Statistic,
) -> Result<VideoVerdict> {
    let first = test_segments.first().ok_or_else(|| Error::data("test video has no segments"))?;
    let per_segment =
        test_segments.iter().map(|s| encode(params, s).map(|e| reference.indices(&e))).collect::<Result<Vec<_>>>()?;
    VideoVerdict::from_indices(first.video_id.clone(), &per_segment, policy, statistic)
}
