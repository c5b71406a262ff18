//! End-to-end drivers: world → training → benchmark → scores → tables and sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{EmbeddingPair, Group, Modality, Temperature};
use crate::encoder::{encode, train, Dataset, EncoderArch, EncoderParams, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::metrics::{auc, knn_person_id, macro_average, per_group, Label, MetricsReport, ScoreSample};
use crate::scoring::{CalibrationRule, DecisionPolicy, PoiIndices, ReferenceSet, Statistic, VideoVerdict};
use crate::synth::{
    generate_benchmark, generate_world_for, BenchmarkSpec, IdentitySplit, PoiBenchmark, World, WorldConfig,
};

use super::parallel::par_map;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub n_train_identities: usize,
    pub benchmark: BenchmarkSpec,
    pub train: TrainConfig,
    pub p_fa: f64,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let world = WorldConfig::default();
        let train = TrainConfig {
            arch: EncoderArch {
                feature_dim_audio: world.feature_dim_audio,
                feature_dim_video: world.feature_dim_video,
                ..EncoderArch::default()
            },
            ..TrainConfig::default()
        };
        ExperimentConfig {
            world,
            n_train_identities: 64,
            benchmark: BenchmarkSpec::default(),
            train,
            p_fa: 0.1,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    /// Same configuration with every random stream derived from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.world.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.world.seed
    }

    pub fn tau(&self) -> Result<Temperature> {
        self.train.temperature()
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        DecisionPolicy::new(self.p_fa)?;
        if self.train.arch.feature_dim_audio != self.world.feature_dim_audio
            || self.train.arch.feature_dim_video != self.world.feature_dim_video
        {
            return Err(Error::config("encoder input dims differ from the world's feature dims"));
        }
        if self.n_train_identities >= self.world.n_identities {
            return Err(Error::config("no identities left for testing"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        Ok(())
    }

    pub fn split(&self, world: &World) -> Result<IdentitySplit> {
        IdentitySplit::first_n(world, self.n_train_identities)
    }
}

pub fn build_world(cfg: &ExperimentConfig) -> Result<(World, IdentitySplit)> {
    cfg.validate()?;
    let world = generate_world_for(&cfg.world, |_| true)?;
    let split = cfg.split(&world)?;
    Ok((world, split))
}

pub fn training_set(world: &World, split: &IdentitySplit) -> Result<Dataset> {
    Dataset::new(world.segments_of(&split.train).cloned().collect())
}

pub fn train_encoders(world: &World, split: &IdentitySplit, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(&training_set(world, split)?, cfg)
}

/// Benchmark RNG: a stream of the experiment seed distinct from world and training streams.
pub fn benchmark_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

pub fn build_benchmark(
    world: &World,
    split: &IdentitySplit,
    spec: &BenchmarkSpec,
    seed: u64,
) -> Result<Vec<PoiBenchmark>> {
    generate_benchmark(world, split, spec, &mut benchmark_rng(seed))
}

#[derive(Debug, Clone)]
pub struct EmbeddedVideo {
    pub video_id: String,
    pub group: Option<Group>,
    pub beta: Option<f64>,
    pub segments: Vec<EmbeddingPair>,
}

#[derive(Debug, Clone)]
pub struct EmbeddedPoi {
    pub poi_id: String,
    /// Reference embeddings grouped by video, in video order.
    pub reference: Vec<(String, Vec<EmbeddingPair>)>,
    pub tests: Vec<EmbeddedVideo>,
}

pub fn embed_benchmark(bench: &[PoiBenchmark], params: &EncoderParams, workers: usize) -> Result<Vec<EmbeddedPoi>> {
    par_map(bench, workers, |poi| {
        let mut reference: Vec<(String, Vec<EmbeddingPair>)> = Vec::new();
        for s in &poi.reference {
            let e = encode(params, s)?;
            match reference.last_mut() {
                Some((v, list)) if *v == s.video_id => list.push(e),
                _ => reference.push((s.video_id.clone(), vec![e])),
            }
        }
        let tests = poi
            .tests
            .iter()
            .map(|t| {
                Ok(EmbeddedVideo {
                    video_id: t.video_id.clone(),
                    group: t.group,
                    beta: t.beta,
                    segments: t.segments.iter().map(|s| encode(params, s)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EmbeddedPoi { poi_id: poi.poi_id.clone(), reference, tests })
    })
}

/// Which reference segments to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceSelection {
    /// The first `per_video` segments of every reference video (`None`: all).
    PerVideo(Option<usize>),
    /// `total` segments taken round-robin across all reference videos.
    RoundRobin { total: usize },
    /// `total` segments spread evenly over the first `videos` reference videos.
    Videos { videos: usize, total: usize },
}

impl ReferenceSelection {
    fn select(&self, reference: &[(String, Vec<EmbeddingPair>)]) -> Vec<(String, EmbeddingPair)> {
        let flat =
            |v: &str, segs: &[EmbeddingPair]| segs.iter().map(|e| (v.to_string(), e.clone())).collect::<Vec<_>>();
        match *self {
            ReferenceSelection::PerVideo(per) => reference
                .iter()
                .flat_map(|(v, segs)| flat(v, &segs[..per.unwrap_or(segs.len()).min(segs.len())]))
                .collect(),
            ReferenceSelection::RoundRobin { total } => {
                let mut out = Vec::with_capacity(total);
                let longest = reference.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
                'outer: for i in 0..longest {
                    for (v, segs) in reference {
                        if out.len() == total {
                            break 'outer;
                        }
                        if let Some(e) = segs.get(i) {
                            out.push((v.clone(), e.clone()));
                        }
                    }
                }
                out
            }
            ReferenceSelection::Videos { videos, total } => {
                let videos = videos.min(reference.len()).max(1);
                let per = total / videos;
                let extra = total % videos;
                reference[..videos]
                    .iter()
                    .enumerate()
                    .flat_map(|(i, (v, segs))| {
                        let n = (per + usize::from(i < extra)).min(segs.len());
                        flat(v, &segs[..n])
                    })
                    .collect()
            }
        }
    }
}

/// Per-segment indices of one test video.
#[derive(Debug, Clone)]
pub struct ScoredVideo {
    pub poi_id: String,
    pub video_id: String,
    pub group: Option<Group>,
    pub beta: Option<f64>,
    pub segments: Vec<PoiIndices>,
}

impl ScoredVideo {
    pub fn label(&self) -> Label {
        if self.group.is_some() {
            Label::Fake
        } else {
            Label::Real
        }
    }

    /// Verdict over the first `length` segments (`None`: all of them).
    pub fn verdict(
        &self,
        policy: &DecisionPolicy,
        statistic: Statistic,
        length: Option<usize>,
    ) -> Result<VideoVerdict> {
        let n = length.unwrap_or(self.segments.len()).min(self.segments.len());
        VideoVerdict::from_indices(self.video_id.clone(), &self.segments[..n], policy, statistic)
    }

    pub fn sample(&self, statistic: Statistic, length: Option<usize>) -> Result<ScoreSample> {
        let policy = DecisionPolicy { p_fa: 0.5, threshold: 0.0 };
        let v = self.verdict(&policy, statistic, length)?;
        Ok(ScoreSample { score: v.statistic, label: self.label(), group: self.group })
    }
}

/// Builds each POI's reference from `selection` and scores its test videos.
pub fn score_embedded(
    pois: &[EmbeddedPoi],
    tau: Temperature,
    selection: ReferenceSelection,
    workers: usize,
) -> Result<Vec<ScoredVideo>> {
    let per_poi = par_map(pois, workers, |poi| {
        let segments = selection.select(&poi.reference);
        let videos = segments.iter().map(|(v, _)| v.as_str()).collect::<std::collections::BTreeSet<_>>().len();
        let rule = if videos >= 2 { CalibrationRule::LeaveOwnVideoOut } else { CalibrationRule::LeaveOwnSegmentOut };
        let reference = ReferenceSet::from_embeddings(poi.poi_id.clone(), segments, tau, rule)?;
        Ok(poi
            .tests
            .iter()
            .map(|t| ScoredVideo {
                poi_id: poi.poi_id.clone(),
                video_id: t.video_id.clone(),
                group: t.group,
                beta: t.beta,
                segments: t.segments.iter().map(|e| reference.indices(e)).collect(),
            })
            .collect::<Vec<_>>())
    })?;
    Ok(per_poi.into_iter().flatten().collect())
}

pub fn samples(scored: &[ScoredVideo], statistic: Statistic, length: Option<usize>) -> Result<Vec<ScoreSample>> {
    scored.iter().map(|v| v.sample(statistic, length)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Auc,
    Accuracy,
    PdAtFa,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Auc, Metric::Accuracy, Metric::PdAtFa];

    pub fn of(self, r: &MetricsReport) -> f64 {
        match self {
            Metric::Auc => r.auc,
            Metric::Accuracy => r.accuracy,
            Metric::PdAtFa => r.pd_at_fa,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Accuracy => "acc",
            Metric::PdAtFa => "pd",
        }
    }
}

/// Group x statistic metrics. Accuracy is taken at the 0.5 pseudo-probability
/// cut (normalized statistic 0); Pd at the configured false-alarm rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub fa: f64,
    pub cells: BTreeMap<(Group, usize), Option<MetricsReport>>,
}

impl AblationTable {
    pub fn compute(samples_by_statistic: &[(Statistic, Vec<ScoreSample>)], fa: f64) -> Result<Self> {
        let policy = DecisionPolicy::new(0.5)?;
        let mut cells = BTreeMap::new();
        for (statistic, samples) in samples_by_statistic {
            let column = Statistic::ALL.iter().position(|s| s == statistic).expect("known statistic");
            for (group, report) in per_group(samples, &policy, fa) {
                cells.insert((group, column), report);
            }
        }
        Ok(AblationTable { fa, cells })
    }

    pub fn from_scored(scored: &[ScoredVideo], fa: f64) -> Result<Self> {
        let by_stat = Statistic::ALL.iter().map(|&s| Ok((s, samples(scored, s, None)?))).collect::<Result<Vec<_>>>()?;
        Self::compute(&by_stat, fa)
    }

    pub fn get(&self, group: Group, statistic: Statistic, metric: Metric) -> Option<f64> {
        let column = Statistic::ALL.iter().position(|s| *s == statistic)?;
        self.cells.get(&(group, column)).copied().flatten().map(|r| metric.of(&r))
    }

    pub fn average(&self, statistic: Statistic, metric: Metric) -> Option<f64> {
        macro_average(Group::ALL.iter().map(|&g| self.get(g, statistic, metric)))
    }

    /// Average over a subset of groups.
    pub fn average_over(&self, groups: &[Group], statistic: Statistic, metric: Metric) -> Option<f64> {
        macro_average(groups.iter().map(|&g| self.get(g, statistic, metric)))
    }
}

/// Train, generate the benchmark, score with the full reference.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub outcome: TrainOutcome,
    pub scored: Vec<ScoredVideo>,
    pub table: AblationTable,
}

pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationRun> {
    let (world, split) = build_world(cfg)?;
    let outcome = train_encoders(&world, &split, &cfg.train)?;
    let bench = build_benchmark(&world, &split, &cfg.benchmark, cfg.seed())?;
    let embedded = embed_benchmark(&bench, &outcome.params, cfg.workers)?;
    let scored = score_embedded(&embedded, cfg.tau()?, ReferenceSelection::PerVideo(None), cfg.workers)?;
    let table = AblationTable::from_scored(&scored, cfg.p_fa)?;
    Ok(AblationRun { outcome, scored, table })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    TestLength,
    RefSize,
    RefVariety,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TestLength => "test_length",
            SweepAxis::RefSize => "ref_size",
            SweepAxis::RefVariety => "ref_variety",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test_length" | "test-length" => Ok(SweepAxis::TestLength),
            "ref_size" | "ref-size" => Ok(SweepAxis::RefSize),
            "ref_variety" | "ref-variety" => Ok(SweepAxis::RefVariety),
            other => Err(Error::config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub statistic: Statistic,
    /// `(class name, video blend)`, by default face swap and reenactment.
    pub classes: Vec<(String, f64)>,
    /// Total reference segments for the variety axis.
    pub variety_total: usize,
}

impl SweepConfig {
    pub fn new(axis: SweepAxis, values: Vec<usize>) -> Self {
        SweepConfig {
            axis,
            values,
            statistic: Statistic::Fusion,
            classes: vec![("FS".into(), 1.0), ("FR".into(), 0.4)],
            variety_total: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: usize,
    pub class: String,
    pub auc: f64,
}

/// AUC of video-manipulated fakes (audio consistent with the POI) against
/// pristine videos, along one axis. Held-out identities are regenerated with
/// videos long enough for the largest axis value; their latents match the
/// training world.
pub fn run_sweep(cfg: &ExperimentConfig, params: &EncoderParams, sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if sweep.values.is_empty() || sweep.values.contains(&0) {
        return Err(Error::config("sweep values must be at least 1"));
    }
    let mut values = sweep.values.clone();
    values.sort_unstable();
    values.dedup();
    let max = *values.last().unwrap();
    let base = cfg.benchmark.test_segments_per_video.unwrap_or(cfg.world.n_segments_per_video);
    let ref_videos = cfg.benchmark.reference_videos;
    let needed = match sweep.axis {
        SweepAxis::TestLength => max.max(base),
        SweepAxis::RefSize => max.div_ceil(ref_videos).max(base),
        SweepAxis::RefVariety => sweep.variety_total.max(base),
    };
    if sweep.axis == SweepAxis::RefVariety && max > ref_videos {
        return Err(Error::config(format!("variety sweep limited to {ref_videos} reference videos")));
    }
    if sweep.axis != SweepAxis::TestLength && values[0] < 2 && sweep.axis == SweepAxis::RefSize {
        return Err(Error::config("reference size must be at least 2 segments"));
    }
    let spec = BenchmarkSpec {
        reference_videos: ref_videos,
        reference_segments_per_video: None,
        real_test_videos: cfg.benchmark.real_test_videos,
        group_counts: [cfg.benchmark.group_counts[0].max(1), 0, 0, 0],
        betas: vec![1.0],
        test_segments_per_video: None,
    };
    let world_cfg =
        WorldConfig { n_segments_per_video: needed, n_videos_per_identity: spec.videos_needed(), ..cfg.world.clone() };
    let n_train = cfg.n_train_identities;
    let world = generate_world_for(&world_cfg, |i| i >= n_train)?;
    let split = IdentitySplit::first_n(&world, n_train)?;
    let tau = cfg.tau()?;

    let mut rows = Vec::new();
    for (class, beta) in &sweep.classes {
        let spec = BenchmarkSpec { betas: vec![*beta], ..spec.clone() };
        let bench = build_benchmark(&world, &split, &spec, cfg.seed())?;
        let embedded = embed_benchmark(&bench, params, cfg.workers)?;
        let full_ref = ReferenceSelection::PerVideo(Some(base));
        let fixed = match sweep.axis {
            SweepAxis::TestLength => Some(score_embedded(&embedded, tau, full_ref, cfg.workers)?),
            _ => None,
        };
        for &x in &values {
            let samples = match sweep.axis {
                SweepAxis::TestLength => samples(fixed.as_ref().unwrap(), sweep.statistic, Some(x))?,
                SweepAxis::RefSize => {
                    let scored =
                        score_embedded(&embedded, tau, ReferenceSelection::RoundRobin { total: x }, cfg.workers)?;
                    samples(&scored, sweep.statistic, Some(base))?
                }
                SweepAxis::RefVariety => {
                    let selection = ReferenceSelection::Videos { videos: x, total: sweep.variety_total };
                    let scored = score_embedded(&embedded, tau, selection, cfg.workers)?;
                    samples(&scored, sweep.statistic, Some(base))?
                }
            };
            rows.push(SweepRow { x, class: class.clone(), auc: auc(&samples)? });
        }
    }
    rows.sort_by(|a, b| a.x.cmp(&b.x).then_with(|| a.class.cmp(&b.class)));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonIdResult {
    /// 1-NN accuracy indexed by [`Modality::index`].
    pub accuracy: [f64; 3],
    /// Joint-modality accuracy with probe labels shuffled, averaged over permutations.
    pub shuffled: f64,
}

/// 1-NN identification of `ids`: the first `gallery_videos` videos of each
/// identity form the gallery, the next video supplies the probes.
pub fn person_identification(
    world: &World,
    ids: &[String],
    params: &EncoderParams,
    gallery_videos: usize,
    permutations: usize,
    seed: u64,
) -> Result<PersonIdResult> {
    let mut gallery = Vec::new();
    let mut probes = Vec::new();
    for id in ids {
        let videos = world.videos_of(id);
        if videos.len() <= gallery_videos {
            return Err(Error::config(format!("{id} has {} videos, need {}", videos.len(), gallery_videos + 1)));
        }
        for s in videos[..gallery_videos].iter().copied().flatten() {
            gallery.push((id.clone(), encode(params, s)?));
        }
        for s in videos[gallery_videos] {
            probes.push((id.clone(), encode(params, s)?));
        }
    }
    let mut accuracy = [0.0; 3];
    for m in Modality::ALL {
        accuracy[m.index()] = knn_person_id(&gallery, &probes, m)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<String> = probes.iter().map(|(l, _)| l.clone()).collect();
    let mut total = 0.0;
    for _ in 0..permutations.max(1) {
        labels.shuffle(&mut rng);
        let shuffled: Vec<_> = labels.iter().cloned().zip(probes.iter().map(|(_, e)| e.clone())).collect();
        total += knn_person_id(&gallery, &shuffled, Modality::AudioVideo)?;
    }
    Ok(PersonIdResult { accuracy, shuffled: total / permutations.max(1) as f64 })
}
