use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adamw::{adamw_step, OptimState};
use super::mlp::{backward, EncoderArch, EncoderParams};
use crate::contrastive::LossReport;
use crate::embedding::{SegmentRecord, Temperature};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: EncoderArch,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub tau: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub identities_per_batch: usize,
    pub segments_per_identity: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale schedule: 2000 steps of 8 x 8 segments.
    fn default() -> Self {
        TrainConfig { epochs: 1, batches_per_epoch: 2000, learning_rate: 1e-3, ..TrainConfig::full_scale() }
    }
}

impl TrainConfig {
    /// Full-scale recipe: 12 x 2304 batches of 8 identities x 8 segments,
    /// lr 1e-4, weight decay 0.01, tau 0.01, lambda 1.
    pub fn full_scale() -> Self {
        TrainConfig {
            arch: EncoderArch::default(),
            learning_rate: 1e-4,
            weight_decay: 0.01,
            tau: 0.01,
            lambda: 1.0,
            epochs: 12,
            batches_per_epoch: 2304,
            identities_per_batch: 8,
            segments_per_identity: 8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }

    pub fn total_steps(&self) -> u64 {
        (self.epochs * self.batches_per_epoch) as u64
    }

    pub fn temperature(&self) -> Result<Temperature> {
        Temperature::new(self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        self.temperature()?;
        if self.identities_per_batch < 2 || self.segments_per_identity < 2 {
            return Err(Error::config("identities_per_batch and segments_per_identity must be at least 2"));
        }
        let positive = [self.learning_rate, self.beta1, self.beta2, self.epsilon];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) || self.weight_decay < 0.0 || self.lambda < 0.0 {
            return Err(Error::config(
                "learning rate, Adam constants must be positive; weight decay and lambda non-negative",
            ));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::config("Adam betas must be below 1"));
        }
        Ok(())
    }
}

/// Segments indexed by identity, then video, in sorted order.
#[derive(Debug, Clone)]
pub struct Dataset {
    segments: Vec<SegmentRecord>,
    index: BTreeMap<String, BTreeMap<String, Vec<usize>>>,
}

impl Dataset {
    pub fn new(segments: Vec<SegmentRecord>) -> Result<Self> {
        let mut index: BTreeMap<String, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for (i, s) in segments.iter().enumerate() {
            if !seen.insert((s.identity_id.as_str(), s.video_id.as_str(), s.segment_index)) {
                return Err(Error::data(format!(
                    "duplicate segment ({}, {}, {})",
                    s.identity_id, s.video_id, s.segment_index
                )));
            }
            index.entry(s.identity_id.clone()).or_default().entry(s.video_id.clone()).or_default().push(i);
        }
        Ok(Dataset { segments, index })
    }

    pub fn segments(&self) -> &[SegmentRecord] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<SegmentRecord> {
        self.segments
    }

    pub fn identities(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Segment indices of one identity grouped by video.
    pub fn videos_of(&self, identity: &str) -> Option<&BTreeMap<String, Vec<usize>>> {
        self.index.get(identity)
    }
}

/// Indices of a batch of `p` identities with `k` segments each, every segment
/// from a different video.
pub fn sample_batch_indices<R: Rng + ?Sized>(dataset: &Dataset, p: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let eligible: Vec<&BTreeMap<String, Vec<usize>>> =
        dataset.index.values().filter(|videos| videos.len() >= k).collect();
    if eligible.len() < p {
        return Err(Error::data(format!(
            "batch needs {p} identities with at least {k} distinct videos each; dataset has {}",
            eligible.len()
        )));
    }
    let mut out = Vec::with_capacity(p * k);
    for who in sample(rng, eligible.len(), p) {
        let videos: Vec<&Vec<usize>> = eligible[who].values().collect();
        for v in sample(rng, videos.len(), k) {
            let segs = videos[v];
            out.push(segs[rng.random_range(0..segs.len())]);
        }
    }
    Ok(out)
}

pub fn sample_batch<R: Rng + ?Sized>(dataset: &Dataset, p: usize, k: usize, rng: &mut R) -> Result<Vec<SegmentRecord>> {
    Ok(sample_batch_indices(dataset, p, k, rng)?.into_iter().map(|i| dataset.segments[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub loss: LossReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub state: OptimState,
    pub log: Vec<StepLog>,
}

/// RNG for one training step. Independent ChaCha streams keep a resumed run
/// identical to an uninterrupted one.
fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step + 1);
    rng
}

pub fn initial_params(cfg: &TrainConfig) -> EncoderParams {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    EncoderParams::init(&cfg.arch, &mut rng)
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let params = initial_params(cfg);
    let state = OptimState::new(&params);
    resume(dataset, cfg, params, state)
}

/// Continues training from `state.step` up to `cfg.total_steps()`.
pub fn resume(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut params: EncoderParams,
    mut state: OptimState,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(fake) = dataset.segments.iter().find(|s| s.flags.is_fake) {
        return Err(Error::data(format!(
            "training data must be real; segment {}#{} is manipulated",
            fake.video_id, fake.segment_index
        )));
    }
    let tau = cfg.temperature()?;
    let total = cfg.total_steps();
    let mut log = Vec::with_capacity(total.saturating_sub(state.step) as usize);
    while state.step < total {
        let step = state.step;
        let mut rng = step_rng(cfg.seed, step);
        let batch = sample_batch(dataset, cfg.identities_per_batch, cfg.segments_per_identity, &mut rng)?;
        let (loss, grads) = backward(&params, &batch, tau, cfg.lambda)?;
        adamw_step(&mut params, &mut state, &grads, cfg)?;
        if step.is_multiple_of(250) {
            log::debug!(
                "step {step}: l_tot={:.4} (a={:.4} v={:.4} av={:.4})",
                loss.l_tot,
                loss.l_a,
                loss.l_v,
                loss.l_av
            );
        }
        log.push(StepLog { step, loss });
    }
    Ok(TrainOutcome { params, state, log })
}
