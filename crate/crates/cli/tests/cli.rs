use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "n_identities = 16\nn_train_identities = 8\nbatches_per_epoch = 5\n";

fn poif(dir: &Path, args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_poif"));
    cmd.current_dir(dir).args(args).env_remove("POIF_SEED");
    if let Some(s) = env_seed {
        cmd.env("POIF_SEED", s);
    }
    cmd.output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), SMALL).unwrap();
    dir
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = setup();
    let out = poif(dir.path(), &["--config", "run.cfg", "synth", "--out", "data"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = setup();
    let by_env = poif(dir.path(), &["--config", "run.cfg", "synth", "--out", "env"], Some("8"));
    let by_flag = poif(dir.path(), &["--config", "run.cfg", "--seed", "8", "synth", "--out", "flag"], Some("99"));
    assert!(by_env.status.success() && by_flag.status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("test.poif")).unwrap();
    assert_eq!(read("env"), read("flag"));
}

#[test]
fn invalid_values_and_unknown_keys_exit_with_2() {
    let dir = setup();
    for args in [
        &["--config", "run.cfg", "--seed", "1", "--p-fa", "1.5", "synth", "--out", "d"][..],
        &["--config", "run.cfg", "--seed", "1", "--set", "no_such_key=3", "synth", "--out", "d"][..],
        &["--config", "missing.cfg", "--seed", "1", "synth", "--out", "d"][..],
    ] {
        assert_eq!(poif(dir.path(), args, None).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn unreadable_inputs_exit_with_3() {
    let dir = setup();
    std::fs::write(dir.path().join("junk.poif"), "not a feature file\n").unwrap();
    let args = ["--config", "run.cfg", "--seed", "1", "train", "--features", "junk.poif", "--out", "m.ckpt"];
    assert_eq!(poif(dir.path(), &args, None).status.code(), Some(3));
    let args = ["--config", "run.cfg", "--seed", "1", "train", "--features", "absent.poif", "--out", "m.ckpt"];
    assert_eq!(poif(dir.path(), &args, None).status.code(), Some(3));
}

#[test]
fn full_pipeline_runs() {
    let dir = setup();
    let c = ["--config", "run.cfg", "--seed", "4"];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = c.iter().chain(extra).copied().collect();
        let out = poif(dir.path(), &args, None);
        assert!(out.status.success(), "{extra:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["synth", "--out", "data"]);
    let trained = run(&["train", "--features", "data/train.poif", "--out", "m.ckpt"]);
    assert!(trained.starts_with("step 5 "), "{trained}");
    run(&[
        "score",
        "--checkpoint",
        "m.ckpt",
        "--reference",
        "data/reference.poif",
        "--test",
        "data/test.poif",
        "--out",
        "s.csv",
    ]);
    let eval = run(&["evaluate", "--scores", "s.csv", "--labels", "data/test.poif", "--out", "r.csv"]);
    assert_eq!(eval.lines().count(), 4);
    let sweep = run(&["sweep", "--checkpoint", "m.ckpt", "--axis", "test_length", "--values", "1,2", "--out", "w.csv"]);
    assert_eq!(sweep.lines().count(), 4);
}
