//! Segments, embedded vectors and the similarity measures between them.
//!
//! Similarity between two segments in a single modality is the negative
//! squared Euclidean distance of their embeddings scaled by `1/tau`; the
//! joint audio-video similarity is the sum of the two single-modality values
//! (audio term first).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Audio,
    Video,
    AudioVideo,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Video, Modality::AudioVideo];

    /// Position in `[audio, video, av]` arrays.
    pub fn index(self) -> usize {
        match self {
            Modality::Audio => 0,
            Modality::Video => 1,
            Modality::AudioVideo => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
            Modality::AudioVideo => "av",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" | "a" => Ok(Modality::Audio),
            "video" | "v" => Ok(Modality::Video),
            "av" | "audio-video" => Ok(Modality::AudioVideo),
            other => Err(Error::config(format!("unknown modality `{other}`"))),
        }
    }
}

/// Positive scale factor dividing squared distances.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Temperature(tau))
        } else {
            Err(Error::config(format!("temperature must be positive and finite, got {tau}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Audio and video embedded vectors of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub audio: Vec<f64>,
    pub video: Vec<f64>,
}

impl EmbeddingPair {
    pub fn new(audio: Vec<f64>, video: Vec<f64>) -> Self {
        EmbeddingPair { audio, video }
    }

    /// Single-modality view. Panics on [`Modality::AudioVideo`], which has no
    /// vector of its own.
    pub fn get(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
            Modality::AudioVideo => panic!("the joint modality has no single embedded vector"),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.audio.iter().chain(&self.video).all(|x| x.is_finite())
    }
}

/// Manipulation groups of the ablation benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    /// Video manipulated, audio consistent with the POI.
    VideoOnly,
    /// Video manipulated, audio of a different real person.
    VideoAudioInconsistent,
    /// Synthesized voice, video untouched.
    AudioSynthesized,
    /// Video manipulated and synthesized voice.
    VideoAudioSynthesized,
}

impl Group {
    pub const ALL: [Group; 4] =
        [Group::VideoOnly, Group::VideoAudioInconsistent, Group::AudioSynthesized, Group::VideoAudioSynthesized];

    /// `(v, a, ai)` checkmarks.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Group::VideoOnly => (true, false, false),
            Group::VideoAudioInconsistent => (true, false, true),
            Group::AudioSynthesized => (false, true, true),
            Group::VideoAudioSynthesized => (true, true, true),
        }
    }

    pub fn from_flags(v: bool, a: bool, ai: bool) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.flags() == (v, a, ai))
            .ok_or_else(|| Error::data(format!("invalid manipulation flags v={v} a={a} ai={ai}")))
    }

    pub fn manipulates_video(self) -> bool {
        self.flags().0
    }

    pub fn code(self) -> &'static str {
        match self {
            Group::VideoOnly => "v",
            Group::VideoAudioInconsistent => "v+ai",
            Group::AudioSynthesized => "a+ai",
            Group::VideoAudioSynthesized => "v+a+ai",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Flags {
    pub is_fake: bool,
    pub v: bool,
    pub a: bool,
    pub ai: bool,
}

impl Flags {
    pub const PRISTINE: Flags = Flags { is_fake: false, v: false, a: false, ai: false };

    pub fn from_group(group: Group) -> Self {
        let (v, a, ai) = group.flags();
        Flags { is_fake: true, v, a, ai }
    }

    /// Checks the flag combination; pristine records yield `None`.
    pub fn group(&self) -> Result<Option<Group>> {
        if !self.is_fake {
            if self.v || self.a || self.ai {
                return Err(Error::data("pristine record carries manipulation flags"));
            }
            return Ok(None);
        }
        Group::from_flags(self.v, self.a, self.ai).map(Some)
    }
}

/// One 3-second unit of a video with its per-modality features.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub identity_id: String,
    pub video_id: String,
    pub segment_index: u32,
    pub audio: Vec<f64>,
    pub video: Vec<f64>,
    pub flags: Flags,
}

impl SegmentRecord {
    pub fn features(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
            Modality::AudioVideo => panic!("the joint modality has no feature vector"),
        }
    }
}

pub fn squared_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { left: x.len(), right: y.len() });
    }
    Ok(squared_distance_unchecked(x, y))
}

#[inline]
pub(crate) fn squared_distance_unchecked(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `-(1/tau) * ||x_m - y_m||^2` for a single modality.
pub fn similarity(x: &EmbeddingPair, y: &EmbeddingPair, m: Modality, tau: Temperature) -> Result<f64> {
    match m {
        Modality::AudioVideo => joint_similarity(x, y, tau),
        _ => Ok(-squared_distance(x.get(m), y.get(m))? / tau.get()),
    }
}

pub fn joint_similarity(x: &EmbeddingPair, y: &EmbeddingPair, tau: Temperature) -> Result<f64> {
    let audio = similarity(x, y, Modality::Audio, tau)?;
    let video = similarity(x, y, Modality::Video, tau)?;
    Ok(audio + video)
}

/// Dense symmetric N x N similarity matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub modality: Modality,
    n: usize,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_entries(modality: Modality, n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { left: entries.len(), right: n * n });
        }
        Ok(SimilarityMatrix { modality, n, entries })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    /// Elementwise sum, used for the joint matrix.
    pub fn joint(audio: &SimilarityMatrix, video: &SimilarityMatrix) -> Result<Self> {
        if audio.n != video.n {
            return Err(Error::DimensionMismatch { left: audio.n, right: video.n });
        }
        let entries = audio.entries.iter().zip(&video.entries).map(|(a, v)| a + v).collect();
        Ok(SimilarityMatrix { modality: Modality::AudioVideo, n: audio.n, entries })
    }
}

fn single_modality_matrix(segments: &[EmbeddingPair], m: Modality, tau: Temperature) -> Result<SimilarityMatrix> {
    let n = segments.len();
    let dim = segments[0].get(m).len();
    for s in segments {
        if s.get(m).len() != dim {
            return Err(Error::DimensionMismatch { left: dim, right: s.get(m).len() });
        }
    }
    let scale = tau.get();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = -squared_distance_unchecked(segments[i].get(m), segments[j].get(m)) / scale;
            entries[i * n + j] = s;
            entries[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix { modality: m, n, entries })
}

pub fn similarity_matrix(segments: &[EmbeddingPair], m: Modality, tau: Temperature) -> Result<SimilarityMatrix> {
    if segments.len() < 2 {
        return Err(Error::data(format!("similarity matrix needs at least 2 segments, got {}", segments.len())));
    }
    match m {
        Modality::AudioVideo => {
            let (_, _, joint) = similarity_matrices(segments, tau)?;
            Ok(joint)
        }
        _ => single_modality_matrix(segments, m, tau),
    }
}

/// Audio, video and joint matrices in one pass; the joint one is the sum of
/// the two stored single-modality matrices.
pub fn similarity_matrices(
    segments: &[EmbeddingPair],
    tau: Temperature,
) -> Result<(SimilarityMatrix, SimilarityMatrix, SimilarityMatrix)> {
    if segments.len() < 2 {
        return Err(Error::data(format!("similarity matrix needs at least 2 segments, got {}", segments.len())));
    }
    let audio = single_modality_matrix(segments, Modality::Audio, tau)?;
    let video = single_modality_matrix(segments, Modality::Video, tau)?;
    let joint = SimilarityMatrix::joint(&audio, &video)?;
    Ok((audio, video, joint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tau(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    fn random_pairs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<EmbeddingPair> {
        (0..n)
            .map(|_| {
                EmbeddingPair::new(
                    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn squared_distance_examples() {
        assert_eq!(squared_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(squared_distance(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(squared_distance(&[0.5, -0.5, 0.0], &[0.0, 0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn squared_distance_dimension_mismatch() {
        match squared_distance(&[1.0, 2.0], &[1.0]) {
            Err(Error::DimensionMismatch { left: 2, right: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn similarity_examples() {
        let x = EmbeddingPair::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(similarity(&x, &x, Modality::Video, tau(0.37)).unwrap(), 0.0);
        let y = EmbeddingPair::new(vec![0.5f64.sqrt(), 0.0], vec![1.0, 0.0]);
        assert_eq!(similarity(&x, &y, Modality::Video, tau(0.01)).unwrap(), -100.0);
        let a = similarity(&x, &y, Modality::Audio, tau(1.0)).unwrap();
        assert!((a + 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_positive_temperature_rejected() {
        assert!(matches!(Temperature::new(0.0), Err(Error::Config(_))));
        assert!(matches!(Temperature::new(-1.0), Err(Error::Config(_))));
        assert!(matches!(Temperature::new(f64::NAN), Err(Error::Config(_))));
    }

    #[test]
    fn joint_similarity_is_sum() {
        // ||a||^2 = 3, ||v||^2 = 5 at tau = 1
        let x = EmbeddingPair::new(vec![1.0, 1.0, 1.0], vec![2.0, 1.0]);
        let y = EmbeddingPair::new(vec![0.0; 3], vec![0.0; 2]);
        assert_eq!(joint_similarity(&x, &y, tau(1.0)).unwrap(), -8.0);
        assert_eq!(joint_similarity(&x, &x, tau(1.0)).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pairs(&mut rng, 2, 5);
        let t = 0.2;
        let oracle = -squared_distance(&p[0].audio, &p[1].audio).unwrap() / t
            + -squared_distance(&p[0].video, &p[1].video).unwrap() / t;
        assert_eq!(joint_similarity(&p[0], &p[1], tau(t)).unwrap(), oracle);
    }

    #[test]
    fn matrix_examples() {
        let same = vec![EmbeddingPair::new(vec![1.0], vec![2.0]); 2];
        let m = similarity_matrix(&same, Modality::Audio, tau(0.5)).unwrap();
        assert_eq!(m.entries(), &[0.0; 4]);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_pairs(&mut rng, 3, 4);
        for modality in Modality::ALL {
            let m = similarity_matrix(&p, modality, tau(0.3)).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let oracle = if i == j { 0.0 } else { similarity(&p[i], &p[j], modality, tau(0.3)).unwrap() };
                    assert_eq!(m.get(i, j), oracle, "{modality} ({i},{j})");
                }
            }
        }
        let (a, v, av) = similarity_matrices(&p, tau(0.3)).unwrap();
        for k in 0..9 {
            assert_eq!(av.entries()[k], a.entries()[k] + v.entries()[k]);
        }
    }

    #[test]
    fn matrix_needs_two_segments() {
        let one = vec![EmbeddingPair::new(vec![1.0], vec![2.0])];
        assert!(similarity_matrix(&one, Modality::Video, tau(1.0)).is_err());
    }

    proptest! {
        #[test]
        fn matrix_invariants(seed in 0u64..1000, n in 2usize..10, d in 1usize..6, shift in -5.0f64..5.0, alpha in 0.1f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_pairs(&mut rng, n, d);
            let (a, v, av) = similarity_matrices(&p, tau(0.05)).unwrap();
            for m in [&a, &v, &av] {
                for i in 0..n {
                    prop_assert_eq!(m.get(i, i), 0.0);
                    for j in 0..n {
                        prop_assert!(m.get(i, j) <= 0.0);
                        prop_assert_eq!(m.get(i, j), m.get(j, i));
                    }
                }
            }
            for k in 0..n * n {
                prop_assert_eq!(av.entries()[k], a.entries()[k] + v.entries()[k]);
            }

            // translation invariance in the video modality
            let shifted: Vec<_> = p.iter().map(|e| EmbeddingPair::new(e.audio.clone(), e.video.iter().map(|x| x + shift).collect())).collect();
            let vs = similarity_matrix(&shifted, Modality::Video, tau(0.05)).unwrap();
            for k in 0..n * n {
                let (x, y) = (v.entries()[k], vs.entries()[k]);
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{} vs {}", x, y);
            }

            // scaling by alpha multiplies off-diagonal entries by alpha^2
            let scaled: Vec<_> = p.iter().map(|e| EmbeddingPair::new(e.audio.iter().map(|x| x * alpha).collect(), e.video.clone())).collect();
            let sa = similarity_matrix(&scaled, Modality::Audio, tau(0.05)).unwrap();
            for k in 0..n * n {
                let expect = a.entries()[k] * alpha * alpha;
                prop_assert!((sa.entries()[k] - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
            }
        }
    }
}
