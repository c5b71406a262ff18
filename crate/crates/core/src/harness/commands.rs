//! The five harness commands. Each is a pure function of its input files and
//! the run configuration; `workers` changes speed, never output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::embedding::{Group, SegmentRecord};
use crate::encoder::{resume, train, Dataset, EncoderArch, OptimState, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{Label, ScoreSample};
use crate::scoring::{build_reference, score_video, DecisionPolicy, ReferenceSet, Statistic};

use super::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use super::config::RunConfig;
use super::experiment::{build_benchmark, build_world, run_sweep, AblationTable, SweepAxis, SweepConfig, SweepRow};
use super::format::{
    group_by_video, log_to_string, read_features, read_scores, report_to_string, scores_to_string, sweep_to_string,
    write_features, write_text, FeatureFile, ScoreRow,
};
use super::parallel::par_map;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOutputs {
    pub train: PathBuf,
    pub reference: PathBuf,
    pub test: PathBuf,
}

impl SynthOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        SynthOutputs {
            train: dir.join("train.poif"),
            reference: dir.join("reference.poif"),
            test: dir.join("test.poif"),
        }
    }
}

/// Writes the training identities' segments, the benchmark references and
/// the benchmark test videos as three feature files in `out_dir`.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<SynthOutputs> {
    let exp = &cfg.experiment;
    let (world, split) = build_world(exp)?;
    let bench = build_benchmark(&world, &split, &exp.benchmark, exp.seed())?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let out = SynthOutputs::in_dir(out_dir);
    let echo = cfg.echo();
    let (da, dv) = (exp.world.feature_dim_audio, exp.world.feature_dim_video);
    let train: Vec<SegmentRecord> = world.segments_of(&split.train).cloned().collect();
    write_features(&out.train, da, dv, &train, &echo)?;
    let reference: Vec<SegmentRecord> = bench.iter().flat_map(|p| p.reference.iter().cloned()).collect();
    write_features(&out.reference, da, dv, &reference, &echo)?;
    let test: Vec<SegmentRecord> =
        bench.iter().flat_map(|p| p.tests.iter().flat_map(|t| t.segments.iter().cloned())).collect();
    write_features(&out.test, da, dv, &test, &echo)?;
    log::info!("wrote {} train, {} reference, {} test segments", train.len(), reference.len(), test.len());
    Ok(out)
}

fn check_dims(file: &FeatureFile, arch: &EncoderArch, path: &Path) -> Result<()> {
    if (file.dim_audio, file.dim_video) != (arch.feature_dim_audio, arch.feature_dim_video) {
        return Err(Error::data(format!(
            "{} has feature dims {}/{}, the encoder expects {}/{}",
            path.display(),
            file.dim_audio,
            file.dim_video,
            arch.feature_dim_audio,
            arch.feature_dim_video
        )));
    }
    Ok(())
}

pub struct TrainPaths<'a> {
    pub features: &'a Path,
    pub checkpoint: &'a Path,
    pub log: Option<&'a Path>,
    pub resume_from: Option<&'a Path>,
}

/// Trains (or resumes training) on a features file of pristine segments.
/// The log holds one row per step run by this invocation.
pub fn cmd_train(cfg: &RunConfig, paths: &TrainPaths<'_>) -> Result<Checkpoint> {
    let train_cfg: &TrainConfig = &cfg.experiment.train;
    let file = read_features(paths.features)?;
    check_dims(&file, &train_cfg.arch, paths.features)?;
    let dataset = Dataset::new(file.segments)?;
    let (outcome, previous_loss) = match paths.resume_from {
        Some(path) => {
            let ckpt = read_checkpoint(path)?;
            ckpt.check_resumable(train_cfg)?;
            (resume(&dataset, train_cfg, ckpt.params, ckpt.state)?, ckpt.final_loss)
        }
        None => (train(&dataset, train_cfg)?, None),
    };
    let final_loss = outcome.log.last().map(|s| s.loss.l_tot).or(previous_loss);
    let ckpt = Checkpoint { train: train_cfg.clone(), final_loss, params: outcome.params, state: outcome.state };
    let echo = cfg.echo();
    write_checkpoint(paths.checkpoint, &ckpt, &echo)?;
    if let Some(log) = paths.log {
        write_text(log, &log_to_string(&outcome.log, &echo))?;
    }
    Ok(ckpt)
}

/// Scores every test video against the reference of the identity it claims.
/// Rows follow the order in which videos first appear in the test file.
pub fn cmd_score(
    cfg: &RunConfig,
    checkpoint: &Path,
    reference: &Path,
    test: &Path,
    out: &Path,
) -> Result<Vec<ScoreRow>> {
    let exp = &cfg.experiment;
    let ckpt = read_checkpoint(checkpoint)?;
    let ref_file = read_features(reference)?;
    let test_file = read_features(test)?;
    check_dims(&ref_file, ckpt.arch(), reference)?;
    check_dims(&test_file, ckpt.arch(), test)?;
    let tau = exp.tau()?;
    let policy = DecisionPolicy::new(exp.p_fa)?;

    let mut by_poi: BTreeMap<&str, Vec<SegmentRecord>> = BTreeMap::new();
    for s in &ref_file.segments {
        by_poi.entry(&s.identity_id).or_default().push(s.clone());
    }
    let pois: Vec<(&str, Vec<SegmentRecord>)> = by_poi.into_iter().collect();
    let references = par_map(&pois, exp.workers, |(_, segs)| build_reference(segs, &ckpt.params, tau))?;
    let lookup: BTreeMap<&str, &ReferenceSet> = pois.iter().map(|(id, _)| *id).zip(&references).collect();

    let videos = group_by_video(&test_file.segments);
    let rows = par_map(&videos, exp.workers, |(video_id, segs)| {
        let poi = &segs[0].identity_id;
        if let Some(other) = segs.iter().find(|s| s.identity_id != *poi) {
            return Err(Error::data(format!("video {video_id} mixes identities {poi} and {}", other.identity_id)));
        }
        let reference = lookup.get(poi.as_str()).ok_or_else(|| Error::data(format!("no reference for {poi}")))?;
        let owned: Vec<SegmentRecord> = segs.iter().map(|s| (*s).clone()).collect();
        let v = score_video(&owned, reference, &ckpt.params, &policy, cfg.statistic)?;
        let m = &v.mean_indices;
        Ok(ScoreRow {
            video_id: v.video_id,
            n_segments: v.n_segments,
            video: m.statistic(Statistic::Modality(crate::Modality::Video)),
            audio: m.statistic(Statistic::Modality(crate::Modality::Audio)),
            av: m.statistic(Statistic::Modality(crate::Modality::AudioVideo)),
            fused: m.fused,
            decision: v.decision,
        })
    })?;
    write_text(out, &scores_to_string(&rows, &cfg.echo()))?;
    Ok(rows)
}

/// Per-video ground truth from a features file: `None` for pristine videos.
pub fn video_labels(file: &FeatureFile) -> Result<BTreeMap<String, Option<Group>>> {
    let mut labels = BTreeMap::new();
    for s in &file.segments {
        let group = s.flags.group()?;
        if let Some(prev) = labels.insert(s.video_id.clone(), group) {
            if prev != group {
                return Err(Error::data(format!("video {} has inconsistent manipulation flags", s.video_id)));
            }
        }
    }
    Ok(labels)
}

/// Score samples for one statistic, labelled from `labels`.
pub fn score_samples(
    rows: &[ScoreRow],
    labels: &BTreeMap<String, Option<Group>>,
    statistic: Statistic,
) -> Result<Vec<ScoreSample>> {
    rows.iter()
        .map(|r| {
            let group =
                *labels.get(&r.video_id).ok_or_else(|| Error::data(format!("no label for video {}", r.video_id)))?;
            let label = if group.is_some() { Label::Fake } else { Label::Real };
            Ok(ScoreSample { score: r.statistic(statistic), label, group })
        })
        .collect()
}

pub fn cmd_evaluate(cfg: &RunConfig, scores: &Path, labels: &Path, out: &Path) -> Result<AblationTable> {
    let rows = read_scores(scores)?;
    let labels = video_labels(&read_features(labels)?)?;
    let by_stat =
        Statistic::ALL.iter().map(|&s| Ok((s, score_samples(&rows, &labels, s)?))).collect::<Result<Vec<_>>>()?;
    let table = AblationTable::compute(&by_stat, cfg.experiment.p_fa)?;
    write_text(out, &report_to_string(&table, &cfg.echo()))?;
    Ok(table)
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    checkpoint: &Path,
    axis: SweepAxis,
    values: &[usize],
    out: &Path,
) -> Result<Vec<SweepRow>> {
    let exp = &cfg.experiment;
    let ckpt = read_checkpoint(checkpoint)?;
    if (ckpt.arch().feature_dim_audio, ckpt.arch().feature_dim_video)
        != (exp.world.feature_dim_audio, exp.world.feature_dim_video)
    {
        return Err(Error::config("checkpoint feature dims differ from the configured world"));
    }
    let sweep = SweepConfig { statistic: cfg.statistic, ..SweepConfig::new(axis, values.to_vec()) };
    let rows = run_sweep(exp, &ckpt.params, &sweep)?;
    write_text(out, &sweep_to_string(axis, &rows, &cfg.echo()))?;
    Ok(rows)
}

/// Fresh optimizer state paired with the configured initialization; what a
/// zero-step training run writes.
pub fn initial_checkpoint(cfg: &TrainConfig) -> Checkpoint {
    let params = crate::encoder::initial_params(cfg);
    let state = OptimState::new(&params);
    Checkpoint { train: cfg.clone(), final_loss: None, params, state }
}
