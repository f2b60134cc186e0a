use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::SystemTime;

use masklab::provenance::{Provenance, PROVENANCE_FILE};
use masklab::sweep::{cell_dir, run_sweep};
use masklab::{run_pipeline, RunConfig, Stage, StageArgs, StageOutcome};
use masklab_core::{Checkpoint, MaskPolicy};

const SMALL: &[(&str, &str)] = &[
    ("synth.num_utterances", "5"),
    ("train.num_steps", "6"),
    ("train.batch_size", "2"),
    ("probe.num_steps", "5"),
    ("probe.batch_size", "32"),
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_masklab"));
    c.env_remove("MASKLAB_OUT").env("RUST_LOG", "warn");
    c
}

fn small_args(out: &Path) -> Vec<String> {
    let mut v = vec!["--out".to_string(), out.display().to_string()];
    for (k, val) in SMALL {
        v.push("--set".into());
        v.push(format!("{k}={val}"));
    }
    v
}

fn run(out: &Path, extra: &[&str]) -> Output {
    bin().args(small_args(out)).args(extra).output().unwrap()
}

fn small_config(out: &Path, extra: &[(&str, &str)]) -> RunConfig {
    let kv: Vec<(String, String)> =
        SMALL.iter().chain(extra).map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let mut cfg = RunConfig::resolve(&kv).unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

fn mtimes(dir: &Path) -> BTreeMap<PathBuf, SystemTime> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.clone(), fs::metadata(&p).unwrap().modified().unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_featurize_mask_smoke_path() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [&["synth"][..], &["featurize"], &["mask", "--policy", "random"]] {
        let o = run(dir.path(), cmd);
        assert!(o.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let masks: Vec<_> = fs::read_dir(dir.path().join("masks/random"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".mask.tsv"))
        .collect();
    assert_eq!(masks.len(), 5);
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "mask.policy = speech\nmask.widht = 7\n").unwrap();
    let o = bin().args(["--out", dir.path().to_str().unwrap(), "--config", cfg.to_str().unwrap(), "mask"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mask.widht"));
    let o = run(dir.path(), &["--set", "mask.rho=2", "mask"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_1_naming_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.ckpt");
    let o = run(dir.path(), &["analyze", "--ckpt", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("analyze"));
}

#[test]
fn rerun_without_force_rewrites_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["probe", "--policy", "speech", "--tasks", "phoneme_l"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let before = mtimes(dir.path());
    std::thread::sleep(std::time::Duration::from_millis(20));
    let o = run(dir.path(), &["probe", "--policy", "speech", "--tasks", "phoneme_l"]);
    assert!(o.status.success());
    assert_eq!(mtimes(dir.path()), before);

    let cfg = small_config(dir.path(), &[("mask.policy", "speech"), ("probe.tasks", "phoneme_l")]);
    let outcomes = run_pipeline(&cfg, &[Stage::Probe], &StageArgs::default()).unwrap();
    assert!(outcomes.iter().all(|(_, o)| *o == StageOutcome::Skipped));
    let forced = RunConfig { force: true, ..cfg };
    let outcomes = run_pipeline(&forced, &[Stage::Probe], &StageArgs::default()).unwrap();
    assert!(outcomes.iter().all(|(_, o)| *o == StageOutcome::Ran));
}

#[test]
fn changed_settings_rerun_only_downstream_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &[("mask.policy", "random")]);
    run_pipeline(&cfg, &[Stage::Mask], &StageArgs::default()).unwrap();
    let changed = small_config(dir.path(), &[("mask.policy", "random"), ("mask.budget", "0.3")]);
    let outcomes = run_pipeline(&changed, &[Stage::Mask], &StageArgs::default()).unwrap();
    let ran: Vec<Stage> = outcomes.iter().filter(|(_, o)| *o == StageOutcome::Ran).map(|(s, _)| *s).collect();
    assert_eq!(ran, vec![Stage::Mask]);
}

#[test]
fn every_stage_directory_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &[("seed", "5"), ("mask.policy", "combined"), ("probe.tasks", "speaker_u")]);
    let targets = [Stage::AlignCheck, Stage::Mask, Stage::Probe, Stage::Analyze];
    run_pipeline(&cfg, &targets, &StageArgs::default()).unwrap();
    for sub in ["corpus", "features", "vad", "align", "masks/combined", "pretrain/combined", "probe/combined", "analysis/combined/first"] {
        let d = dir.path().join(sub);
        let p = Provenance::read(&d).unwrap_or_else(|| panic!("no {PROVENANCE_FILE} in {sub}"));
        assert_eq!(p.seed, 5);
        assert_eq!(p.config_hash.len(), 64);
        assert_eq!(p.version, masklab::VERSION);
        assert!(!p.artifacts.is_empty());
        assert!(p.settings.iter().any(|(k, v)| k == "seed" && v == "5"));
        for a in &p.artifacts {
            assert!(d.join(a).is_file(), "{sub}/{a}");
        }
    }
    let ck = Checkpoint::load(dir.path().join("pretrain/combined/model.ckpt")).unwrap();
    assert_eq!(ck.get("run.config_hash"), Some(cfg.config_hash().as_str()));
    assert_eq!(ck.get("run.seed"), Some("5"));
    let sharp = fs::read_to_string(dir.path().join("analysis/combined/first/sharpness.csv")).unwrap();
    assert!(sharp.starts_with("policy,reconstructed,ground_truth\ncombined,"));
}

#[test]
fn out_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("MASKLAB_OUT", dir.path())
        .args(["--set", "synth.num_utterances=3", "synth"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("corpus/corpus.manifest.tsv").is_file());
}

#[test]
fn seed_flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "seed = 3\nsynth.num_utterances = 3\n").unwrap();
    let out = dir.path().join("o");
    let o = bin()
        .args(["--out", out.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--seed", "11", "synth"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(Provenance::read(&out.join("corpus")).unwrap().seed, 11);
}

#[test]
fn single_value_sweep_matches_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let extra = [
        ("sweep.values", "0.85"),
        ("sweep.policies", "speech"),
        ("sweep.tasks", "phoneme_l,phoneme_1h"),
        ("sweep.pretrain_steps", "6"),
        ("sweep.probe_steps", "5"),
    ];
    let cfg = small_config(dir.path(), &extra);
    run_pipeline(&cfg, &[Stage::Featurize, Stage::Vad], &StageArgs::default()).unwrap();
    let table = run_sweep(&cfg).unwrap();
    assert_eq!(table.failures(), 0);

    let plain = small_config(
        dir.path(),
        &[("mask.policy", "speech"), ("mask.rho", "0.85"), ("probe.tasks", "phoneme_l,phoneme_1h")],
    );
    run_pipeline(&plain, &[Stage::Probe], &StageArgs::default()).unwrap();
    let a = fs::read(dir.path().join("probe/speech/results.csv")).unwrap();
    let b = fs::read(cell_dir(&cfg, MaskPolicy::SpeechLevel, 0.85).join("results.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn deleted_sweep_cell_reproduces_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let extra = [
        ("sweep.values", "0.8,1"),
        ("sweep.policies", "combined"),
        ("sweep.tasks", "phoneme_l"),
        ("sweep.pretrain_steps", "4"),
        ("sweep.probe_steps", "3"),
    ];
    let cfg = small_config(dir.path(), &extra);
    run_pipeline(&cfg, &[Stage::Sweep], &StageArgs::default()).unwrap();
    let cell = cell_dir(&cfg, MaskPolicy::Combined, 1.0);
    let files = ["results.csv", "pretrain/model.ckpt", "pretrain/loss.csv"];
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(cell.join(f)).unwrap()).collect();
    let table_before = fs::read(dir.path().join("sweep/table.csv")).unwrap();
    fs::remove_dir_all(&cell).unwrap();
    run_pipeline(&cfg, &[Stage::Sweep], &StageArgs::default()).unwrap();
    let after: Vec<Vec<u8>> = files.iter().map(|f| fs::read(cell.join(f)).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(fs::read(dir.path().join("sweep/table.csv")).unwrap(), table_before);
}

#[test]
fn sweep_failures_are_marked_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // Utterances longer than max_frames make every pre-training fail.
    let o = run(
        dir.path(),
        &[
            "--set",
            "model.max_frames=10",
            "sweep",
            "--values",
            "0.9",
            "--policies",
            "speech",
            "--tasks",
            "phoneme_l",
            "--pretrain-steps",
            "2",
            "--probe-steps",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let table = fs::read_to_string(dir.path().join("sweep/table.csv")).unwrap();
    assert_eq!(table, "rho,Speech-Level Phoneme-L\n0.9,FAILED\n");
}
