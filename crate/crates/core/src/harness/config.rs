//! Flat `key=value` run configuration.
//!
//! Values are applied in order: built-in defaults, the config file, then
//! command-line overrides. The seed has no default; when neither the file nor
//! an override sets it, the `POIF_SEED` environment variable is consulted.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scoring::Statistic;

use super::experiment::ExperimentConfig;

pub const SEED_ENV: &str = "POIF_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub statistic: Statistic,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| Error::config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_optional(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "all" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn show_optional(v: Option<usize>) -> String {
    v.map_or("all".into(), |n| n.to_string())
}

fn show_list<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    fn defaults() -> Self {
        RunConfig { experiment: ExperimentConfig::default(), statistic: Statistic::Fusion }
    }

    /// Resolves the effective configuration.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)], env_seed: Option<&str>) -> Result<Self> {
        let mut pairs = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
            pairs = parse_pairs(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        }
        pairs.extend(overrides.iter().cloned());
        if !pairs.iter().any(|(k, _)| k == "seed") {
            match env_seed {
                Some(s) => pairs.push(("seed".into(), s.trim().to_string())),
                None => return Err(Error::config(format!("a seed is required (--seed, `seed=` or {SEED_ENV})"))),
            }
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::defaults();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.experiment.train.arch.feature_dim_audio = cfg.experiment.world.feature_dim_audio;
        cfg.experiment.train.arch.feature_dim_video = cfg.experiment.world.feature_dim_video;
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.experiment.seed()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let e = &mut self.experiment;
        let (w, t, b) = (&mut e.world, &mut e.train, &mut e.benchmark);
        match key {
            "seed" => {
                let seed = parse(key, value)?;
                w.seed = seed;
                t.seed = seed;
            }
            "workers" => e.workers = parse(key, value)?,
            "p_fa" => e.p_fa = parse(key, value)?,
            "statistic" => self.statistic = parse(key, value)?,
            "n_identities" => w.n_identities = parse(key, value)?,
            "n_train_identities" => e.n_train_identities = parse(key, value)?,
            "n_videos_per_identity" => w.n_videos_per_identity = parse(key, value)?,
            "n_segments_per_video" => w.n_segments_per_video = parse(key, value)?,
            "feature_dim_audio" => w.feature_dim_audio = parse(key, value)?,
            "feature_dim_video" => w.feature_dim_video = parse(key, value)?,
            "identity_scale" => w.identity_scale = parse(key, value)?,
            "video_bias_scale" => w.video_bias_scale = parse(key, value)?,
            "segment_noise_scale" => w.segment_noise_scale = parse(key, value)?,
            "video_nuisance_gain" => w.video_nuisance_gain = parse(key, value)?,
            "clone_offset_scale" => w.clone_offset_scale = parse(key, value)?,
            "reference_videos" => b.reference_videos = parse(key, value)?,
            "reference_segments_per_video" => b.reference_segments_per_video = parse_optional(key, value)?,
            "real_test_videos" => b.real_test_videos = parse(key, value)?,
            "fakes_per_group" => {
                let counts: Vec<usize> = parse_list(key, value)?;
                b.group_counts = match counts[..] {
                    [n] => [n; 4],
                    [a, b, c, d] => [a, b, c, d],
                    _ => return Err(Error::config("fakes_per_group takes one count or four")),
                };
            }
            "betas" => b.betas = parse_list(key, value)?,
            "test_segments_per_video" => b.test_segments_per_video = parse_optional(key, value)?,
            "hidden_width" => t.arch.hidden_width = parse(key, value)?,
            "hidden_layers" => t.arch.hidden_layers = parse(key, value)?,
            "embed_dim" => t.arch.embed_dim = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "weight_decay" => t.weight_decay = parse(key, value)?,
            "tau" => t.tau = parse(key, value)?,
            "lambda" => t.lambda = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "batches_per_epoch" => t.batches_per_epoch = parse(key, value)?,
            "identities_per_batch" => t.identities_per_batch = parse(key, value)?,
            "segments_per_identity" => t.segments_per_identity = parse(key, value)?,
            "beta1" => t.beta1 = parse(key, value)?,
            "beta2" => t.beta2 = parse(key, value)?,
            "epsilon" => t.epsilon = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its effective value, in a fixed order. Feeding the
    /// result back through [`RunConfig::from_pairs`] reproduces `self`.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let e = &self.experiment;
        let (w, t, b) = (&e.world, &e.train, &e.benchmark);
        vec![
            ("seed", w.seed.to_string()),
            ("workers", e.workers.to_string()),
            ("p_fa", e.p_fa.to_string()),
            ("statistic", self.statistic.name().to_string()),
            ("n_identities", w.n_identities.to_string()),
            ("n_train_identities", e.n_train_identities.to_string()),
            ("n_videos_per_identity", w.n_videos_per_identity.to_string()),
            ("n_segments_per_video", w.n_segments_per_video.to_string()),
            ("feature_dim_audio", w.feature_dim_audio.to_string()),
            ("feature_dim_video", w.feature_dim_video.to_string()),
            ("identity_scale", w.identity_scale.to_string()),
            ("video_bias_scale", w.video_bias_scale.to_string()),
            ("segment_noise_scale", w.segment_noise_scale.to_string()),
            ("video_nuisance_gain", w.video_nuisance_gain.to_string()),
            ("clone_offset_scale", w.clone_offset_scale.to_string()),
            ("reference_videos", b.reference_videos.to_string()),
            ("reference_segments_per_video", show_optional(b.reference_segments_per_video)),
            ("real_test_videos", b.real_test_videos.to_string()),
            ("fakes_per_group", show_list(&b.group_counts)),
            ("betas", show_list(&b.betas)),
            ("test_segments_per_video", show_optional(b.test_segments_per_video)),
            ("hidden_width", t.arch.hidden_width.to_string()),
            ("hidden_layers", t.arch.hidden_layers.to_string()),
            ("embed_dim", t.arch.embed_dim.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("tau", t.tau.to_string()),
            ("lambda", t.lambda.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batches_per_epoch", t.batches_per_epoch.to_string()),
            ("identities_per_batch", t.identities_per_batch.to_string()),
            ("segments_per_identity", t.segments_per_identity.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("epsilon", t.epsilon.to_string()),
        ]
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(format!("line {}: expected key=value", n + 1)));
        };
        let k = k.trim();
        if pairs.iter().any(|(seen, _)| seen == k) {
            return Err(Error::config(format!("line {}: duplicate key `{k}`", n + 1)));
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}
