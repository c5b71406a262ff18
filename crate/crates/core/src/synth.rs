//! Seeded synthetic identity worlds and manipulated test videos.
//!
//! Each identity owns an audio and a video latent. A segment's features are
//! `latent + video bias + segment noise`, where the bias is shared by every
//! segment of one video. Manipulations move the features of pristine POI
//! segments toward a donor identity (video), replace the voice with a donor's
//! real voice, or with a cloned voice that sits at a fixed offset from the
//! POI's own.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{Flags, Group, SegmentRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub n_identities: usize,
    pub n_videos_per_identity: usize,
    pub n_segments_per_video: usize,
    pub feature_dim_audio: usize,
    pub feature_dim_video: usize,
    pub identity_scale: f64,
    pub video_bias_scale: f64,
    pub segment_noise_scale: f64,
    /// Multiplies both nuisance scales on the video stream only.
    pub video_nuisance_gain: f64,
    /// Spread of the shared cloned-voice offset.
    pub clone_offset_scale: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_identities: 84,
            n_videos_per_identity: 35,
            n_segments_per_video: 10,
            feature_dim_audio: 16,
            feature_dim_video: 16,
            identity_scale: 1.0,
            video_bias_scale: 0.3,
            segment_noise_scale: 0.3,
            video_nuisance_gain: 2.0,
            clone_offset_scale: 0.3,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.n_identities,
            self.n_videos_per_identity,
            self.n_segments_per_video,
            self.feature_dim_audio,
            self.feature_dim_video,
        ];
        if counts.contains(&0) {
            return Err(Error::config("identity, video, segment counts and feature dims must be at least 1"));
        }
        let scales = [
            self.identity_scale,
            self.video_bias_scale,
            self.segment_noise_scale,
            self.video_nuisance_gain,
            self.clone_offset_scale,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("scales must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityLatent {
    pub z_audio: Vec<f64>,
    pub z_video: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub identity_ids: Vec<String>,
    pub latents: Vec<IdentityLatent>,
    pub cloned_voice_offset: Vec<f64>,
    /// Pristine segments per identity, ordered by video then segment. Empty
    /// for identities left out of a partial generation.
    pub segments: Vec<Vec<SegmentRecord>>,
    lookup: BTreeMap<String, usize>,
}

impl World {
    pub fn identity_index(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn latent(&self, id: &str) -> Result<&IdentityLatent> {
        self.identity_index(id).map(|i| &self.latents[i]).ok_or_else(|| Error::data(format!("unknown identity {id}")))
    }

    /// Segments of one identity grouped by video, in video order.
    pub fn videos_of(&self, id: &str) -> Vec<&[SegmentRecord]> {
        let Some(i) = self.identity_index(id) else { return Vec::new() };
        self.segments[i].chunks(self.config.n_segments_per_video).collect()
    }

    pub fn segments_of<'a>(&'a self, ids: &'a [String]) -> impl Iterator<Item = &'a SegmentRecord> + 'a {
        ids.iter().filter_map(|id| self.identity_index(id)).flat_map(|i| self.segments[i].iter())
    }

    pub fn all_segments(&self) -> impl Iterator<Item = &SegmentRecord> {
        self.segments.iter().flatten()
    }
}

pub fn identity_name(i: usize) -> String {
    format!("id{i:04}")
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    generate_world_for(cfg, |_| true)
}

/// Generates latents for every identity but segments only for those selected
/// by `keep`. Each identity draws its videos from its own RNG stream, so the
/// segments of a kept identity do not depend on which others are kept, and
/// latents depend only on the seed, identity count, dims and identity scale.
pub fn generate_world_for(cfg: &WorldConfig, keep: impl Fn(usize) -> bool) -> Result<World> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (da, dv) = (cfg.feature_dim_audio, cfg.feature_dim_video);
    let latents: Vec<IdentityLatent> = (0..cfg.n_identities)
        .map(|_| IdentityLatent {
            z_audio: gaussian_vec(&mut rng, da, cfg.identity_scale),
            z_video: gaussian_vec(&mut rng, dv, cfg.identity_scale),
        })
        .collect();
    let cloned_voice_offset = gaussian_vec(&mut rng, da, cfg.clone_offset_scale);

    let identity_ids: Vec<String> = (0..cfg.n_identities).map(identity_name).collect();
    let mut segments = Vec::with_capacity(cfg.n_identities);
    for (i, (id, latent)) in identity_ids.iter().zip(&latents).enumerate() {
        let mut own = Vec::new();
        if keep(i) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            own.reserve(cfg.n_videos_per_identity * cfg.n_segments_per_video);
            for v in 0..cfg.n_videos_per_identity {
                let video_id = format!("{id}-v{v:03}");
                let bias_a = gaussian_vec(&mut rng, da, cfg.video_bias_scale);
                let bias_v = gaussian_vec(&mut rng, dv, cfg.video_nuisance_gain * cfg.video_bias_scale);
                for s in 0..cfg.n_segments_per_video {
                    let noise_a = gaussian_vec(&mut rng, da, cfg.segment_noise_scale);
                    let noise_v = gaussian_vec(&mut rng, dv, cfg.video_nuisance_gain * cfg.segment_noise_scale);
                    own.push(SegmentRecord {
                        identity_id: id.clone(),
                        video_id: video_id.clone(),
                        segment_index: s as u32,
                        audio: add(&add(&latent.z_audio, &bias_a), &noise_a),
                        video: add(&add(&latent.z_video, &bias_v), &noise_v),
                        flags: Flags::PRISTINE,
                    });
                }
            }
        }
        segments.push(own);
    }
    let lookup = identity_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(World { config: cfg.clone(), identity_ids, latents, cloned_voice_offset, segments, lookup })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationSpec {
    pub group: Group,
    /// Video blend toward the donor: 1 replaces the identity (face swap),
    /// below 1 keeps part of it (reenactment).
    pub beta: f64,
    pub donor_identity: String,
    pub cloned_voice_offset: Vec<f64>,
}

impl ManipulationSpec {
    pub fn from_flags(v: bool, a: bool, ai: bool, beta: f64, donor: &str, offset: Vec<f64>) -> Result<Self> {
        Ok(ManipulationSpec {
            group: Group::from_flags(v, a, ai)?,
            beta,
            donor_identity: donor.to_string(),
            cloned_voice_offset: offset,
        })
    }
}

/// Residual-preserving replacement of `latent` by `target` in `features`.
fn swap_latent(features: &[f64], latent: &[f64], target: impl Iterator<Item = f64>) -> Vec<f64> {
    features.iter().zip(latent).zip(target).map(|((f, z), t)| t + (f - z)).collect()
}

pub fn apply_manipulation(seg: &SegmentRecord, spec: &ManipulationSpec, world: &World) -> Result<SegmentRecord> {
    if seg.flags.is_fake {
        return Err(Error::data(format!("segment {}#{} is already manipulated", seg.video_id, seg.segment_index)));
    }
    if !(0.0..=1.0).contains(&spec.beta) {
        return Err(Error::config(format!("blend beta must lie in [0, 1], got {}", spec.beta)));
    }
    if spec.donor_identity == seg.identity_id {
        return Err(Error::config("donor identity must differ from the POI"));
    }
    let poi = world.latent(&seg.identity_id)?;
    let donor = world.latent(&spec.donor_identity)?;
    if spec.cloned_voice_offset.len() != seg.audio.len() {
        return Err(Error::DimensionMismatch { left: spec.cloned_voice_offset.len(), right: seg.audio.len() });
    }

    let (v, a, ai) = spec.group.flags();
    let mut out = seg.clone();
    if v && spec.beta != 0.0 {
        let blended = poi.z_video.iter().zip(&donor.z_video).map(|(p, d)| (1.0 - spec.beta) * p + spec.beta * d);
        out.video = swap_latent(&seg.video, &poi.z_video, blended);
    }
    if a {
        let cloned = poi.z_audio.iter().zip(&spec.cloned_voice_offset).map(|(p, o)| p + o);
        out.audio = swap_latent(&seg.audio, &poi.z_audio, cloned);
    } else if ai {
        out.audio = swap_latent(&seg.audio, &poi.z_audio, donor.z_audio.iter().copied());
    }
    out.flags = Flags::from_group(spec.group);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub audio_noise_scale: f64,
    pub video_noise_scale: f64,
}

/// Adds seeded Gaussian noise per modality; a zero scale leaves that stream untouched.
pub fn inject_noise<R: Rng + ?Sized>(seg: &SegmentRecord, spec: &NoiseSpec, rng: &mut R) -> Result<SegmentRecord> {
    let scales = [spec.audio_noise_scale, spec.video_noise_scale];
    if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::config("noise scales must be finite and non-negative"));
    }
    let mut out = seg.clone();
    if spec.audio_noise_scale > 0.0 {
        out.audio = add(&seg.audio, &gaussian_vec(rng, seg.audio.len(), spec.audio_noise_scale));
    }
    if spec.video_noise_scale > 0.0 {
        out.video = add(&seg.video, &gaussian_vec(rng, seg.video.len(), spec.video_noise_scale));
    }
    Ok(out)
}

/// Train/test split of a world's identities.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentitySplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl IdentitySplit {
    /// First `n_train` identities for training, the rest held out.
    pub fn first_n(world: &World, n_train: usize) -> Result<Self> {
        if n_train > world.identity_ids.len() {
            return Err(Error::config(format!(
                "{n_train} training identities requested, world has {}",
                world.identity_ids.len()
            )));
        }
        let (train, test) = world.identity_ids.split_at(n_train);
        Ok(IdentitySplit { train: train.to_vec(), test: test.to_vec() })
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let train: BTreeSet<&String> = self.train.iter().collect();
        if let Some(id) = self.test.iter().find(|id| train.contains(id)) {
            return Err(Error::data(format!("identity {id} is in both the training and the test split")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub reference_videos: usize,
    /// Reference segments drawn from each reference video; `None` takes all.
    pub reference_segments_per_video: Option<usize>,
    pub real_test_videos: usize,
    /// Fake videos per POI, in [`Group::ALL`] order.
    pub group_counts: [usize; 4],
    /// Video blend factors, cycled over the video-manipulated fakes of a POI.
    pub betas: Vec<f64>,
    /// Segments per test video; `None` takes all.
    pub test_segments_per_video: Option<usize>,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            reference_videos: 10,
            reference_segments_per_video: None,
            real_test_videos: 5,
            group_counts: [5; 4],
            betas: vec![1.0],
            test_segments_per_video: Some(10),
        }
    }
}

impl BenchmarkSpec {
    pub fn videos_needed(&self) -> usize {
        self.reference_videos + self.real_test_videos + self.group_counts.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestVideo {
    pub video_id: String,
    pub group: Option<Group>,
    pub beta: Option<f64>,
    pub segments: Vec<SegmentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiBenchmark {
    pub poi_id: String,
    pub reference: Vec<SegmentRecord>,
    pub tests: Vec<TestVideo>,
}

/// Reference, pristine test and manipulated test videos for every held-out
/// identity. Identity ids on test segments name the claimed POI.
pub fn generate_benchmark<R: Rng + ?Sized>(
    world: &World,
    split: &IdentitySplit,
    spec: &BenchmarkSpec,
    rng: &mut R,
) -> Result<Vec<PoiBenchmark>> {
    split.check_disjoint()?;
    if spec.group_counts.iter().any(|&c| c > 0) && split.test.len() < 2 {
        return Err(Error::config("manipulations need at least 2 held-out identities for donors"));
    }
    if spec.betas.is_empty() || spec.betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(Error::config("betas must be a non-empty list of values in [0, 1]"));
    }
    let needed = spec.videos_needed();
    if needed > world.config.n_videos_per_identity {
        return Err(Error::config(format!(
            "benchmark needs {needed} videos per identity, world has {}",
            world.config.n_videos_per_identity
        )));
    }
    let take = |segs: &[SegmentRecord], n: Option<usize>| -> Vec<SegmentRecord> {
        segs[..n.unwrap_or(segs.len()).min(segs.len())].to_vec()
    };

    let mut out = Vec::with_capacity(split.test.len());
    for poi in &split.test {
        let videos = world.videos_of(poi);
        if videos.is_empty() {
            return Err(Error::data(format!("unknown test identity {poi}")));
        }
        let mut cursor = videos.iter();
        let reference: Vec<SegmentRecord> = cursor
            .by_ref()
            .take(spec.reference_videos)
            .flat_map(|v| take(v, spec.reference_segments_per_video))
            .collect();
        let mut tests = Vec::new();
        for v in cursor.by_ref().take(spec.real_test_videos) {
            tests.push(TestVideo {
                video_id: v[0].video_id.clone(),
                group: None,
                beta: None,
                segments: take(v, spec.test_segments_per_video),
            });
        }
        let donors: Vec<&String> = split.test.iter().filter(|d| *d != poi).collect();
        let mut v_fakes = 0usize;
        for (group, &count) in Group::ALL.iter().zip(&spec.group_counts) {
            for v in cursor.by_ref().take(count) {
                let donor = donors.choose(rng).expect("at least one donor");
                let beta = if group.manipulates_video() {
                    let b = spec.betas[v_fakes % spec.betas.len()];
                    v_fakes += 1;
                    Some(b)
                } else {
                    None
                };
                let manip = ManipulationSpec {
                    group: *group,
                    beta: beta.unwrap_or(0.0),
                    donor_identity: donor.to_string(),
                    cloned_voice_offset: world.cloned_voice_offset.clone(),
                };
                let video_id = format!("{}-fake-{}", v[0].video_id, group.code());
                let segments = take(v, spec.test_segments_per_video)
                    .iter()
                    .map(|s| {
                        let mut m = apply_manipulation(s, &manip, world)?;
                        m.video_id = video_id.clone();
                        Ok(m)
                    })
                    .collect::<Result<Vec<_>>>()?;
                tests.push(TestVideo { video_id, group: Some(*group), beta, segments });
            }
        }
        out.push(PoiBenchmark { poi_id: poi.clone(), reference, tests });
    }
    Ok(out)
}
