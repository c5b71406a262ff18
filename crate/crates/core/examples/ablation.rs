//! Trains on the default synthetic world and prints the ablation table,
//! sweep trends and identification accuracy for a few seeds.
//!
//! `cargo run --release -p poif-core --example ablation -- [seeds]`

use std::time::Instant;

use poif_core::embedding::Group;
use poif_core::harness::experiment::{
    build_world, person_identification, run_ablation, run_sweep, ExperimentConfig, Metric, SweepAxis, SweepConfig,
};
use poif_core::scoring::Statistic;

fn main() -> poif_core::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(2, |s| s.parse().expect("seed count"));
    for seed in 0..seeds {
        let t = Instant::now();
        let cfg = ExperimentConfig { workers: 4, ..ExperimentConfig::default() }.with_seed(seed);
        let run = run_ablation(&cfg)?;
        let last = run.outcome.log.last().map_or(f64::NAN, |l| l.loss.l_tot);
        println!("seed {seed}: final loss {last:.4} ({:.1?})", t.elapsed());
        for metric in Metric::ALL {
            println!("  {:>4} {:>8} {:>8} {:>8} {:>8}", metric.name(), "video", "audio", "av", "fusion");
            for g in Group::ALL {
                let cells: Vec<String> = Statistic::ALL
                    .iter()
                    .map(|&s| run.table.get(g, s, metric).map_or("-".into(), |v| format!("{:8.1}", 100.0 * v)))
                    .collect();
                println!("  {:>8} {}", g.code(), cells.join(" "));
            }
            let avg: Vec<String> = Statistic::ALL
                .iter()
                .map(|&s| run.table.average(s, metric).map_or("-".into(), |v| format!("{:8.1}", 100.0 * v)))
                .collect();
            println!("  {:>8} {}", "AVG", avg.join(" "));
        }
        let no_av =
            ExperimentConfig { train: poif_core::TrainConfig { lambda: 0.0, ..cfg.train.clone() }, ..cfg.clone() };
        let run0 = run_ablation(&no_av)?;
        let groups = [Group::VideoAudioInconsistent, Group::AudioSynthesized, Group::VideoAudioSynthesized];
        let pd = |r: &poif_core::harness::experiment::AblationRun| {
            r.table.average_over(&groups, Statistic::Modality(poif_core::Modality::AudioVideo), Metric::PdAtFa).unwrap()
        };
        println!("  av pd@fa groups 2-4: lambda=1 {:.3} lambda=0 {:.3}", pd(&run), pd(&run0));

        for (axis, values) in [
            (SweepAxis::TestLength, vec![1, 2, 5, 10]),
            (SweepAxis::RefSize, vec![10, 50, 100]),
            (SweepAxis::RefVariety, vec![1, 2, 5, 10]),
        ] {
            let rows = run_sweep(&cfg, &run.outcome.params, &SweepConfig::new(axis, values))?;
            let text: Vec<String> = rows.iter().map(|r| format!("{}:{}={:.3}", r.x, r.class, r.auc)).collect();
            println!("  sweep {axis}: {}", text.join(" "));
        }
        let (world, split) = build_world(&cfg)?;
        let ids: Vec<String> = split.test[..10].to_vec();
        let pid = person_identification(&world, &ids, &run.outcome.params, 10, 200, seed)?;
        println!("  person id a/v/av {:?} shuffled {:.3} ({:.1?})", pid.accuracy, pid.shuffled, t.elapsed());
    }
    Ok(())
}
