//! Encoder checkpoints: architecture, training hyperparameters, parameters
//! and AdamW moments. A checkpoint holds everything needed to resume.

use std::fmt::Write as _;
use std::path::Path;

use crate::encoder::{EncoderArch, EncoderParams, Mlp, OptimState, TrainConfig};
use crate::error::{Error, Result};

use super::format::{fmt_f64, header, write_text, Echo, Reader};

pub const CHECKPOINT_MAGIC: &str = "POIF-CKPT";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub train: TrainConfig,
    /// Loss of the last completed step; `None` before any step.
    pub final_loss: Option<f64>,
    pub params: EncoderParams,
    pub state: OptimState,
}

impl Checkpoint {
    pub fn arch(&self) -> &EncoderArch {
        &self.train.arch
    }

    pub fn step(&self) -> u64 {
        self.state.step
    }

    /// Hyperparameters that must agree for a resumed run to continue the
    /// same trajectory. Epoch and batch counts may differ.
    pub fn check_resumable(&self, cfg: &TrainConfig) -> Result<()> {
        let mut ours = self.train.clone();
        ours.epochs = cfg.epochs;
        ours.batches_per_epoch = cfg.batches_per_epoch;
        if ours != *cfg {
            return Err(Error::config("resume configuration differs from the checkpoint's training settings"));
        }
        if self.step() > cfg.total_steps() {
            return Err(Error::config(format!(
                "checkpoint is at step {}, beyond the configured {} steps",
                self.step(),
                cfg.total_steps()
            )));
        }
        Ok(())
    }
}

fn columns() -> Vec<String> {
    vec!["key".into(), "value".into()]
}

fn tensor_names(params: &EncoderParams) -> Vec<String> {
    let mut names = Vec::new();
    for (m, mlp) in [("audio", &params.audio), ("video", &params.video)] {
        for i in 0..mlp.layers.len() {
            names.push(format!("{m}.{i}.weight"));
            names.push(format!("{m}.{i}.bias"));
        }
    }
    names
}

const SCALAR_KEYS: [&str; 19] = [
    "feature_dim_audio",
    "feature_dim_video",
    "hidden_width",
    "hidden_layers",
    "embed_dim",
    "seed",
    "learning_rate",
    "weight_decay",
    "tau",
    "lambda",
    "epochs",
    "batches_per_epoch",
    "identities_per_batch",
    "segments_per_identity",
    "beta1",
    "beta2",
    "epsilon",
    "step",
    "final_loss",
];

fn scalar_values(c: &Checkpoint) -> [String; 19] {
    let t = &c.train;
    [
        t.arch.feature_dim_audio.to_string(),
        t.arch.feature_dim_video.to_string(),
        t.arch.hidden_width.to_string(),
        t.arch.hidden_layers.to_string(),
        t.arch.embed_dim.to_string(),
        t.seed.to_string(),
        fmt_f64(t.learning_rate),
        fmt_f64(t.weight_decay),
        fmt_f64(t.tau),
        fmt_f64(t.lambda),
        t.epochs.to_string(),
        t.batches_per_epoch.to_string(),
        t.identities_per_batch.to_string(),
        t.segments_per_identity.to_string(),
        fmt_f64(t.beta1),
        fmt_f64(t.beta2),
        fmt_f64(t.epsilon),
        c.state.step.to_string(),
        c.final_loss.map_or("undefined".into(), fmt_f64),
    ]
}

pub fn checkpoint_to_string(c: &Checkpoint, echo: &Echo) -> String {
    let mut out = header(CHECKPOINT_MAGIC, &[], echo, &columns());
    for (k, v) in SCALAR_KEYS.iter().zip(scalar_values(c)) {
        writeln!(out, "{k},{v}").unwrap();
    }
    let names = tensor_names(&c.params);
    for (prefix, p) in [("param", &c.params), ("adam_m", &c.state.first), ("adam_v", &c.state.second)] {
        for (name, t) in names.iter().zip(p.tensors()) {
            write!(out, "{prefix}.{name},{}", t.len()).unwrap();
            for x in t {
                write!(out, ",{}", fmt_f64(*x)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_checkpoint(path: &Path, c: &Checkpoint, echo: &Echo) -> Result<()> {
    write_text(path, &checkpoint_to_string(c, echo))
}

pub fn parse_checkpoint(path: &Path, text: &str) -> Result<Checkpoint> {
    let mut r = Reader::new(path, text);
    r.header(CHECKPOINT_MAGIC, &columns())?;
    let keys = SCALAR_KEYS;
    let mut values = Vec::with_capacity(keys.len());
    for key in &keys {
        let rec = r.record().ok_or_else(|| r.error(format!("missing `{key}`")))?;
        r.expect_len(&rec, 2)?;
        if rec[0] != *key {
            return Err(r.error(format!("expected `{key}`, found `{}`", rec[0])));
        }
        values.push(rec[1]);
    }
    let us = |i: usize| r.parse::<usize>(values[i], keys[i]);
    let fl = |i: usize| r.parse::<f64>(values[i], keys[i]);
    let arch = EncoderArch {
        feature_dim_audio: us(0)?,
        feature_dim_video: us(1)?,
        hidden_width: us(2)?,
        hidden_layers: us(3)?,
        embed_dim: us(4)?,
    };
    let train = TrainConfig {
        arch,
        seed: r.parse(values[5], "seed")?,
        learning_rate: fl(6)?,
        weight_decay: fl(7)?,
        tau: fl(8)?,
        lambda: fl(9)?,
        epochs: us(10)?,
        batches_per_epoch: us(11)?,
        identities_per_batch: us(12)?,
        segments_per_identity: us(13)?,
        beta1: fl(14)?,
        beta2: fl(15)?,
        epsilon: fl(16)?,
    };
    let step: u64 = r.parse(values[17], "step")?;
    let final_loss = match values[18] {
        "undefined" => None,
        v => Some(r.parse(v, "final loss")?),
    };
    if [arch.feature_dim_audio, arch.feature_dim_video, arch.hidden_width, arch.embed_dim].contains(&0) {
        return Err(r.error("zero-sized architecture"));
    }

    let blank = || EncoderParams { audio: Mlp::zeros(&arch.audio_dims()), video: Mlp::zeros(&arch.video_dims()) };
    let names = tensor_names(&blank());
    let mut read = |prefix: &str| -> Result<EncoderParams> {
        let mut p = blank();
        for (name, t) in names.iter().zip(p.tensors_mut()) {
            let rec = r.record().ok_or_else(|| r.error(format!("missing tensor {prefix}.{name}")))?;
            if rec[0] != format!("{prefix}.{name}") {
                return Err(r.error(format!("expected tensor {prefix}.{name}, found `{}`", rec[0])));
            }
            let len: usize = r.parse(rec.get(1).copied().unwrap_or(""), "tensor length")?;
            if len != t.len() {
                return Err(r.error(format!("tensor {prefix}.{name} has {len} values, architecture needs {}", t.len())));
            }
            r.expect_len(&rec, 2 + len)?;
            for (dst, v) in t.iter_mut().zip(&rec[2..]) {
                *dst = r.parse(v, "tensor value")?;
            }
        }
        Ok(p)
    };
    let params = read("param")?;
    let first = read("adam_m")?;
    let second = read("adam_v")?;
    if r.record().is_some() {
        return Err(r.error("trailing data after the last tensor"));
    }
    Ok(Checkpoint { train, final_loss, params, state: OptimState { first, second, step } })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    parse_checkpoint(path, &text)
}
