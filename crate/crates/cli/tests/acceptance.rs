//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Oracles here are written independently of the library.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use poif_core::contrastive::{contrastive_loss, PositiveSets};
use poif_core::embedding::{similarity_matrix, EmbeddingPair, Flags, Group, Modality, SegmentRecord, Temperature};
use poif_core::encoder::{adamw_step, backward, EncoderArch, EncoderParams, OptimState, TrainConfig};
use poif_core::gaussian::{quantile_threshold, standard_normal_cdf};
use poif_core::harness::experiment::{
    build_world, person_identification, run_ablation, run_sweep, AblationRun, ExperimentConfig, Metric, SweepAxis,
    SweepConfig, SweepRow,
};
use poif_core::metrics::{auc, ScoreSample};
use poif_core::scoring::{poi_index, CalibrationRule, ReferenceSet, Statistic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEEDS: u64 = 5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn tau(t: f64) -> Temperature {
    Temperature::new(t).unwrap()
}

fn segment(identity: &str, video: &str, audio: Vec<f64>, video_f: Vec<f64>) -> SegmentRecord {
    SegmentRecord {
        identity_id: identity.into(),
        video_id: video.into(),
        segment_index: 0,
        audio,
        video: video_f,
        flags: Flags::PRISTINE,
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let d = x[i] - y[i];
        acc += d * d;
    }
    acc
}

// ------------------------------------------------------------- criterion 1

fn flat(params: &EncoderParams) -> Vec<f64> {
    params.tensors().flat_map(|t| t.iter().copied()).collect()
}

fn set_flat(params: &mut EncoderParams, k: usize, value: f64) {
    let mut offset = 0;
    for t in params.tensors_mut() {
        if k < offset + t.len() {
            t[k - offset] = value;
            return;
        }
        offset += t.len();
    }
    panic!("index {k} out of range");
}

/// Central differences of the total loss against the analytic backward pass.
fn gradient_check() -> Verdict {
    let start = Instant::now();
    let arch =
        EncoderArch { feature_dim_audio: 8, feature_dim_video: 8, hidden_width: 8, hidden_layers: 1, embed_dim: 8 };
    let h = 1e-5;
    let t = tau(0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for b in 0..100 {
        let params = EncoderParams::init(&arch, &mut rng);
        let lambda = if b % 2 == 0 { 1.0 } else { rng.random_range(0.0..2.0) };
        // 4 identities x 2 segments, shuffled
        let mut labels: Vec<usize> = (0..8).map(|i| i / 2).collect();
        for i in (1..8).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let batch: Vec<SegmentRecord> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                segment(&format!("id{l}"), &format!("v{i}"), gaussian(&mut rng, 8, 0.1), gaussian(&mut rng, 8, 0.1))
            })
            .collect();
        let (_, grads) = backward(&params, &batch, t, lambda).unwrap();
        let analytic = flat(&grads);
        let base = flat(&params);
        let loss = |p: &EncoderParams| backward(p, &batch, t, lambda).unwrap().0.l_tot;
        // components far below the batch's gradient scale only measure
        // rounding noise of order eps * loss / h
        let floor = 1e-5 * analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut probe = params.clone();
        for (k, &w) in base.iter().enumerate() {
            set_flat(&mut probe, k, w + h);
            let up = loss(&probe);
            set_flat(&mut probe, k, w - h);
            let down = loss(&probe);
            set_flat(&mut probe, k, w);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!("max relative error {worst:.2e} over 100 batches ({elapsed:.1?})"),
    )
}

// ------------------------------------------------------------- criterion 2

/// Naive multi-way loss: direct exponentials, no shifting. The row term
/// `-ln(pos / (pos + neg))` is taken as `ln_1p(neg / pos)`, which stays
/// accurate when the ratio is close to 1. A sum that underflowed to zero or
/// into the subnormal range has lost its precision and yields NaN.
fn naive_loss(emb: &[Vec<f64>], labels: &[usize], t: f64) -> f64 {
    let mut total = 0.0;
    for c in 0..emb.len() {
        let (mut pos, mut neg) = (0.0, 0.0);
        for k in 0..emb.len() {
            if k == c {
                continue;
            }
            let e = (-sq_dist(&emb[c], &emb[k]) / t).exp();
            if labels[k] == labels[c] {
                pos += e;
            } else {
                neg += e;
            }
        }
        if !pos.is_normal() || !neg.is_normal() {
            return f64::NAN;
        }
        total += (neg / pos).ln_1p();
    }
    total
}

fn loss_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut min_loss, mut max_same, mut worst_rel, mut compared) = (f64::INFINITY, 0.0f64, 0.0f64, 0);
    for _ in 0..1000 {
        let n = rng.random_range(4..=16);
        let dim = rng.random_range(1..=8);
        let t = 10f64.powf(rng.random_range(-2.0..1.0));
        let scale = 10f64.powf(rng.random_range(-2.0..0.5));
        let ids = rng.random_range(2..=n / 2);
        let mut labels: Vec<usize> =
            (0..n).map(|i| if i < 2 * ids { i / 2 } else { rng.random_range(0..ids) }).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let vecs: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, dim, scale)).collect();
        let pairs: Vec<EmbeddingPair> = vecs.iter().map(|v| EmbeddingPair::new(v.clone(), v.clone())).collect();
        let sim = similarity_matrix(&pairs, Modality::Audio, tau(t)).unwrap();

        let names: Vec<String> = labels.iter().map(|l| format!("id{l}")).collect();
        let loss = contrastive_loss(&sim, &PositiveSets::from_labels(&names).unwrap()).unwrap();
        min_loss = min_loss.min(loss);
        let naive = naive_loss(&vecs, &labels, t);
        if naive.is_finite() {
            compared += 1;
            worst_rel = worst_rel.max((loss - naive).abs() / naive.abs().max(f64::MIN_POSITIVE));
        }
        let same = vec!["solo"; n];
        let zero = contrastive_loss(&sim, &PositiveSets::from_labels(&same).unwrap()).unwrap();
        max_same = max_same.max(zero.abs());
    }
    verdict(
        min_loss >= 0.0 && max_same <= 1e-12 && worst_rel <= 1e-9 && compared > 0,
        format!("min loss {min_loss:.3e}, same-identity max {max_same:.1e}, lse vs naive {worst_rel:.1e} rel on {compared} finite batches"),
    )
}

// ------------------------------------------------------------- criterion 3

fn reference_normalization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut worst_mean, mut worst_std, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let (da, dv) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let t = 10f64.powf(rng.random_range(-2.0..0.0));
        let mut segs = Vec::new();
        for v in 0..10 {
            let (ba, bv) = (gaussian(&mut rng, da, 0.5), gaussian(&mut rng, dv, 0.5));
            for _ in 0..10 {
                let a: Vec<f64> = gaussian(&mut rng, da, 0.3).iter().zip(&ba).map(|(x, y)| x + y).collect();
                let w: Vec<f64> = gaussian(&mut rng, dv, 0.3).iter().zip(&bv).map(|(x, y)| x + y).collect();
                segs.push((format!("v{v}"), EmbeddingPair::new(a, w)));
            }
        }
        let r = ReferenceSet::from_embeddings("poi", segs.clone(), tau(t), CalibrationRule::LeaveOwnVideoOut).unwrap();
        for m in Modality::ALL {
            // brute force: best match outside the segment's own video
            let oracle: Vec<f64> = segs
                .iter()
                .map(|(vi, ei)| {
                    segs.iter()
                        .filter(|(vj, _)| vj != vi)
                        .map(|(_, ej)| match m {
                            Modality::Audio => -sq_dist(&ei.audio, &ej.audio) / t,
                            Modality::Video => -sq_dist(&ei.video, &ej.video) / t,
                            Modality::AudioVideo => {
                                -sq_dist(&ei.audio, &ej.audio) / t - sq_dist(&ei.video, &ej.video) / t
                            }
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            for (o, s) in oracle.iter().zip(r.self_scores(m)) {
                worst_oracle = worst_oracle.max((o - s).abs() / o.abs().max(1.0));
            }
            let z: Vec<f64> = r.self_scores(m).iter().map(|&s| poif_core::normalize_index(s, &r, m)).collect();
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            let std = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
            worst_mean = worst_mean.max(mean.abs());
            worst_std = worst_std.max((std - 1.0).abs());
        }
    }
    verdict(
        worst_mean < 1e-9 && worst_std < 1e-9 && worst_oracle <= 1e-12,
        format!("|mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}, oracle gap {worst_oracle:.1e}"),
    )
}

// ------------------------------------------------------------- criterion 4

fn simpson_cdf(x: f64) -> f64 {
    let pdf = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let n = 20_000;
    let h = x / n as f64;
    let mut acc = pdf(0.0) + pdf(x);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
    }
    0.5 + acc * h / 3.0
}

fn gaussian_calibration() -> Verdict {
    let threshold = quantile_threshold(0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let n = 20_000;
    let hits = (0..n).filter(|_| rng.sample::<f64, _>(StandardNormal) < threshold).count();
    let rate = hits as f64 / n as f64;
    let mut worst = 0.0f64;
    for p in [0.01, 0.05, 0.1, 0.25, 0.5, 0.9] {
        let q = quantile_threshold(p).unwrap();
        worst = worst.max((standard_normal_cdf(q) - p).abs()).max((simpson_cdf(q) - p).abs());
    }
    verdict(
        (rate - 0.10).abs() <= 0.01 && worst < 1e-8,
        format!("false-alarm rate {rate:.4}, worst round trip {worst:.1e}"),
    )
}

// ----------------------------------------------------- trained experiments

struct Trained {
    lambda1: Vec<AblationRun>,
    lambda1_time: Duration,
    lambda0: Vec<AblationRun>,
}

fn config(seed: u64, lambda: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default().with_seed(seed);
    cfg.train.lambda = lambda;
    cfg
}

impl Trained {
    fn run() -> Self {
        let start = Instant::now();
        let lambda1 = (0..SEEDS).map(|s| run_ablation(&config(s, 1.0)).unwrap()).collect();
        let lambda1_time = start.elapsed();
        let lambda0 = (0..SEEDS).map(|s| run_ablation(&config(s, 0.0)).unwrap()).collect();
        Trained { lambda1, lambda1_time, lambda0 }
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn table_structure(t: &Trained) -> Verdict {
    let seed_avg = |g: Option<Group>, s: Statistic| {
        100.0
            * mean(t.lambda1.iter().map(|r| match g {
                Some(g) => r.table.get(g, s, Metric::Auc).unwrap(),
                None => r.table.average(s, Metric::Auc).unwrap(),
            }))
    };
    let audio = Statistic::Modality(Modality::Audio);
    let video = Statistic::Modality(Modality::Video);
    let a = seed_avg(Some(Group::VideoOnly), audio);
    // every default benchmark fake with a video manipulation uses beta = 1
    let fs_groups = [Group::VideoOnly, Group::VideoAudioInconsistent, Group::VideoAudioSynthesized];
    let b = fs_groups.iter().map(|&g| seed_avg(Some(g), video)).fold(f64::INFINITY, f64::min);
    let fusion = seed_avg(None, Statistic::Fusion);
    let singles = [video, audio, Statistic::Modality(Modality::AudioVideo)].map(|s| seed_avg(None, s));
    let c = singles.iter().all(|&s| fusion >= s - 1.0);
    let fast = t.lambda1_time < Duration::from_secs(600);
    verdict(
        (a - 50.0).abs() <= 7.0 && b >= 80.0 && c && fast,
        format!(
            "(a) audio AUC on v {a:.1}; (b) min video AUC on face swaps {b:.1}; (c) fusion AVG {fusion:.1} vs video/audio/av {:.1}/{:.1}/{:.1}; {SEEDS} seeds in {:.1?}",
            singles[0], singles[1], singles[2], t.lambda1_time
        ),
    )
}

fn lambda_ablation(t: &Trained) -> Verdict {
    let groups = [Group::VideoAudioInconsistent, Group::AudioSynthesized, Group::VideoAudioSynthesized];
    let av = Statistic::Modality(Modality::AudioVideo);
    let pd = |r: &AblationRun| r.table.average_over(&groups, av, Metric::PdAtFa).unwrap();
    let pairs: Vec<(f64, f64)> = t.lambda1.iter().zip(&t.lambda0).map(|(a, b)| (pd(a), pd(b))).collect();
    let wins = pairs.iter().filter(|(a, b)| a > b).count();
    let text: Vec<String> = pairs.iter().map(|(a, b)| format!("{:.1}/{:.1}", 100.0 * a, 100.0 * b)).collect();
    verdict(wins >= 3, format!("lambda=1 higher in {wins}/{SEEDS} seeds (pd lambda1/lambda0: {})", text.join(" ")))
}

fn sweep_auc(rows: &[SweepRow], x: usize, class: Option<&str>) -> f64 {
    mean(rows.iter().filter(|r| r.x == x && class.is_none_or(|c| r.class == c)).map(|r| r.auc))
}

fn length_and_reference_trends(t: &Trained) -> Verdict {
    let (mut short, mut long, mut one_video, mut many_videos) = (vec![], vec![], vec![], vec![]);
    for (seed, run) in (0..SEEDS).zip(&t.lambda1) {
        let cfg = config(seed, 1.0);
        let length =
            run_sweep(&cfg, &run.outcome.params, &SweepConfig::new(SweepAxis::TestLength, vec![1, 10])).unwrap();
        short.push(sweep_auc(&length, 1, Some("FR")));
        long.push(sweep_auc(&length, 10, Some("FR")));
        let variety =
            run_sweep(&cfg, &run.outcome.params, &SweepConfig::new(SweepAxis::RefVariety, vec![1, 10])).unwrap();
        one_video.push(sweep_auc(&variety, 1, None));
        many_videos.push(sweep_auc(&variety, 10, None));
    }
    let (s, l, o, m) = (mean(short), mean(long), mean(one_video), mean(many_videos));
    verdict(
        l >= s && m >= o,
        format!("(a) FR AUC 1 segment {s:.3} -> 10 segments {l:.3}; (b) reference 1x100 {o:.3} -> 10x10 {m:.3}"),
    )
}

fn person_id(t: &Trained) -> Verdict {
    let cfg = config(0, 1.0);
    let (world, split) = build_world(&cfg).unwrap();
    let ids = &split.test[..10];
    let r = person_identification(&world, ids, &t.lambda1[0].outcome.params, 10, 1000, 707).unwrap();
    let [a, v, av] = [Modality::Audio, Modality::Video, Modality::AudioVideo].map(|m| 100.0 * r.accuracy[m.index()]);
    let shuffled = 100.0 * r.shuffled;
    verdict(
        av >= 90.0 && av >= a.max(v) - 2.0 && (shuffled - 10.0).abs() <= 3.0,
        format!("joint {av:.1}%, audio {a:.1}%, video {v:.1}%, shuffled labels {shuffled:.1}%"),
    )
}

// ------------------------------------------------------------- criterion 9

fn pairwise_auc(real: &[f64], fake: &[f64]) -> f64 {
    let mut doubled = 0u64;
    for r in real {
        for f in fake {
            doubled += if r > f {
                2
            } else if r == f {
                1
            } else {
                0
            };
        }
    }
    doubled as f64 / (2 * real.len() * fake.len()) as f64
}

fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut auc_mismatch = 0;
    for i in 0..100 {
        let (nr, nf) = (rng.random_range(1..40), rng.random_range(1..40));
        // coarse grid on half the sets to force ties
        let draw = |rng: &mut ChaCha8Rng| {
            let x: f64 = rng.sample(StandardNormal);
            if i % 2 == 0 {
                (x * 2.0).round() / 2.0
            } else {
                x
            }
        };
        let real: Vec<f64> = (0..nr).map(|_| draw(&mut rng) + 0.5).collect();
        let fake: Vec<f64> = (0..nf).map(|_| draw(&mut rng)).collect();
        let samples: Vec<ScoreSample> =
            real.iter().map(|&s| ScoreSample::real(s)).chain(fake.iter().map(|&s| ScoreSample::fake(s))).collect();
        if auc(&samples).unwrap() != pairwise_auc(&real, &fake) {
            auc_mismatch += 1;
        }
    }

    let mut index_mismatch = 0;
    for _ in 0..100 {
        let (da, dv) = (rng.random_range(1..6), rng.random_range(1..6));
        let t = 10f64.powf(rng.random_range(-2.0..1.0));
        let n = rng.random_range(4..30);
        let segs: Vec<(String, EmbeddingPair)> = (0..n)
            .map(|j| {
                (format!("v{}", j % 3), EmbeddingPair::new(gaussian(&mut rng, da, 1.0), gaussian(&mut rng, dv, 1.0)))
            })
            .collect();
        let r = ReferenceSet::from_embeddings("poi", segs.clone(), tau(t), CalibrationRule::LeaveOwnVideoOut).unwrap();
        let q = EmbeddingPair::new(gaussian(&mut rng, da, 1.0), gaussian(&mut rng, dv, 1.0));
        for m in Modality::ALL {
            let mut best = f64::NEG_INFINITY;
            for (_, e) in &segs {
                let s = match m {
                    Modality::Audio => -sq_dist(&q.audio, &e.audio) / t,
                    Modality::Video => -sq_dist(&q.video, &e.video) / t,
                    Modality::AudioVideo => -sq_dist(&q.audio, &e.audio) / t + -sq_dist(&q.video, &e.video) / t,
                };
                if s > best {
                    best = s;
                }
            }
            if poi_index(&q, &r, m).unwrap() != best {
                index_mismatch += 1;
            }
        }
    }

    // AdamW against a per-scalar reference
    let arch =
        EncoderArch { feature_dim_audio: 3, feature_dim_video: 2, hidden_width: 4, hidden_layers: 1, embed_dim: 2 };
    let cfg = TrainConfig { arch, learning_rate: 1e-3, weight_decay: 0.01, ..TrainConfig::default() };
    let mut params = EncoderParams::init(&arch, &mut rng);
    let mut state = OptimState::new(&params);
    let mut w = flat(&params);
    let (mut m, mut v) = (vec![0.0; w.len()], vec![0.0; w.len()]);
    let mut worst = 0.0f64;
    for step in 1..=1000 {
        let mut grads = params.zeros_like();
        for t in grads.tensors_mut() {
            for g in t.iter_mut() {
                *g = rng.sample::<f64, _>(StandardNormal) * 0.5;
            }
        }
        let g = flat(&grads);
        adamw_step(&mut params, &mut state, &grads, &cfg).unwrap();
        for i in 0..w.len() {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            let m_hat = m[i] / (1.0 - 0.9f64.powi(step));
            let v_hat = v[i] / (1.0 - 0.999f64.powi(step));
            w[i] = w[i] - 1e-3 * 0.01 * w[i] - 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        }
        for (a, b) in flat(&params).iter().zip(&w) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        auc_mismatch == 0 && index_mismatch == 0 && worst <= 1e-12,
        format!("AUC mismatches {auc_mismatch}/100, poi_index mismatches {index_mismatch}/300, AdamW max deviation {worst:.1e}"),
    )
}

// ------------------------------------------------------------ criterion 10

fn poif(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_poif"))
        .current_dir(dir)
        .env_remove("POIF_SEED")
        .args(args)
        .status()
        .expect("run poif");
    assert!(status.success(), "poif {args:?} failed with {status}");
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    std::fs::write(
        dir.join("run.cfg"),
        "n_identities = 24\nn_train_identities = 12\nbatches_per_epoch = 150\nworkers = 1\n",
    )
    .unwrap();
    let common = ["--config", "run.cfg", "--seed", "21"];
    fn with<'a>(common: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
        common.iter().chain(extra).copied().collect()
    }
    poif(dir, &with(&common, &["synth", "--out", "data"]));
    poif(dir, &with(&common, &["train", "--features", "data/train.poif", "--out", "model.ckpt", "--log", "train.log"]));
    let score =
        ["score", "--checkpoint", "model.ckpt", "--reference", "data/reference.poif", "--test", "data/test.poif"];
    poif(dir, &with(&common, &[&score[..], &["--out", "scores.csv"]].concat()));
    poif(dir, &with(&common, &[&score[..], &["--out", "scores4.csv", "--workers", "4"]].concat()));
    poif(
        dir,
        &with(&common, &["evaluate", "--scores", "scores.csv", "--labels", "data/test.poif", "--out", "report.csv"]),
    );
    [
        "data/train.poif",
        "data/reference.poif",
        "data/test.poif",
        "model.ckpt",
        "train.log",
        "scores.csv",
        "scores4.csv",
        "report.csv",
    ]
    .iter()
    .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
    .collect()
}

/// Score files differ only in the echoed `workers` line.
fn without_workers(bytes: &[u8]) -> Vec<u8> {
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    text.lines().filter(|l| !l.starts_with("# workers=")).collect::<Vec<_>>().join("\n").into_bytes()
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let differing: Vec<&str> =
        first.iter().zip(&second).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    let scores = |run: &[(String, Vec<u8>)], name: &str| run.iter().find(|(f, _)| f == name).unwrap().1.clone();
    let workers_equal =
        without_workers(&scores(&first, "scores.csv")) == without_workers(&scores(&first, "scores4.csv"));
    verdict(
        differing.is_empty() && workers_equal,
        format!(
            "{} files compared, differing: {:?}; --workers 4 scores identical to --workers 1: {workers_equal}",
            first.len(),
            differing
        ),
    )
}

// ------------------------------------------------------------------ driver

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !v.pass {
            failures += 1;
        }
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {status} {name}: {} [{:.1?}]", v.detail, start.elapsed());
    };
    report(1, "gradient check", &mut gradient_check);
    report(2, "loss properties", &mut loss_properties);
    report(3, "reference normalization", &mut reference_normalization);
    report(4, "gaussian calibration", &mut gaussian_calibration);
    let trained = catch_unwind(Trained::run).ok();
    let need = |t: &Option<Trained>, f: fn(&Trained) -> Verdict| match t {
        Some(t) => f(t),
        None => verdict(false, "training runs failed"),
    };
    report(5, "ablation table structure", &mut || need(&trained, table_structure));
    report(6, "length and reference trends", &mut || need(&trained, length_and_reference_trends));
    report(7, "1-NN person identification", &mut || need(&trained, person_id));
    report(8, "lambda ablation", &mut || need(&trained, lambda_ablation));
    report(9, "oracle equivalence", &mut oracle_equivalence);
    report(10, "determinism", &mut determinism);
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
