//! Stages and their dependency order.
//!
//! Output tree under the run directory:
//!
//! ```text
//! corpus/                  waveforms, alignments, true VAD, manifest
//! features/<utt>.feat      log-mel features
//! vad/<utt>.vad.txt        estimated VAD labels
//! align/                   alignment check report
//! masks/<policy>/          mask runs and coverage stats
//! pretrain/<policy>/       checkpoint and loss curve
//! probe/<policy>/          probe results
//! analysis/<policy>/<utt>/ spectrogram dumps and sharpness
//! sweep/                   sweep cells and tables
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use masklab_core::alignment::SilenceSet;
use masklab_core::analysis::{dump_spectrogram, mask_stats, sharpness};
use masklab_core::audio::{read_corpus_manifest, read_wav, synth_corpus, write_corpus, CORPUS_MANIFEST};
use masklab_core::features::fbank;
use masklab_core::masking::{apply_mask, generate_mask, MaskInputs};
use masklab_core::model::{loss_curve_csv, TrainUtterance};
use masklab_core::probes::{evaluate_encoder, results_csv, results_table, PhonemeInventory, ProbeUtterance};
use masklab_core::seed::SeedHasher;
use masklab_core::vad::{speech_lists, vad_labels};
use masklab_core::{
    Checkpoint, EncoderModel, FeatureMatrix, PhonemeAlignment, ProbeResult, SharpnessReport, Trainer, VadLabels,
};
use sha2::{Digest, Sha256};

use crate::provenance::Provenance;
use crate::{CliError, RunConfig, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Featurize,
    Vad,
    AlignCheck,
    Mask,
    Pretrain,
    Probe,
    Analyze,
    Sweep,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Featurize => "featurize",
            Stage::Vad => "vad",
            Stage::AlignCheck => "align-check",
            Stage::Mask => "mask",
            Stage::Pretrain => "pretrain",
            Stage::Probe => "probe",
            Stage::Analyze => "analyze",
            Stage::Sweep => "sweep",
        }
    }

    /// Config sections whose settings the stage output depends on.
    pub fn sections(self) -> &'static [&'static str] {
        match self {
            Stage::Synth | Stage::Featurize | Stage::AlignCheck => &["", "synth", "features"],
            Stage::Vad => &["", "synth", "features", "vad"],
            Stage::Mask => &["", "synth", "features", "vad", "mask"],
            Stage::Pretrain | Stage::Analyze => &["", "synth", "features", "vad", "mask", "model", "train"],
            Stage::Probe => &["", "synth", "features", "vad", "mask", "model", "train", "probe"],
            Stage::Sweep => &["", "synth", "features", "vad", "mask", "model", "train", "probe", "sweep"],
        }
    }

    fn deps(self, args: &StageArgs) -> Vec<Stage> {
        match self {
            Stage::Synth => vec![],
            Stage::Featurize | Stage::Vad => vec![Stage::Synth],
            Stage::AlignCheck => vec![Stage::Featurize],
            Stage::Mask | Stage::Pretrain | Stage::Sweep => vec![Stage::Featurize, Stage::Vad],
            Stage::Probe => vec![Stage::Pretrain],
            Stage::Analyze if args.ckpt.is_some() => vec![Stage::Featurize, Stage::Vad],
            Stage::Analyze => vec![Stage::Featurize, Stage::Vad, Stage::Pretrain],
        }
    }
}

/// Stage inputs that are not configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageArgs {
    /// Checkpoint to analyse instead of this run's pre-training output.
    pub ckpt: Option<PathBuf>,
    /// Utterance to analyse; the first of the corpus when absent.
    pub utt: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    /// Outputs were current; nothing was written.
    Skipped,
}

pub fn corpus_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("corpus")
}

pub fn features_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("features")
}

pub fn vad_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("vad")
}

pub fn stage_dir(cfg: &RunConfig, stage: Stage, args: &StageArgs) -> PathBuf {
    let policy = cfg.mask.policy.name();
    match stage {
        Stage::Synth => corpus_dir(cfg),
        Stage::Featurize => features_dir(cfg),
        Stage::Vad => vad_dir(cfg),
        Stage::AlignCheck => cfg.out.join("align"),
        Stage::Mask => cfg.out.join("masks").join(policy),
        Stage::Pretrain => cfg.out.join("pretrain").join(policy),
        Stage::Probe => cfg.out.join("probe").join(policy),
        Stage::Analyze => {
            let utt = args.utt.clone().unwrap_or_else(|| "first".into());
            cfg.out.join("analysis").join(policy).join(utt)
        }
        Stage::Sweep => cfg.out.join("sweep"),
    }
}

fn combine(hash: &str, extras: &[String]) -> String {
    if extras.is_empty() {
        return hash.to_string();
    }
    let mut h = Sha256::new();
    h.update(hash.as_bytes());
    for e in extras {
        h.update(b"\n");
        h.update(e.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn file_hash(path: &Path) -> Result<String, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs `body` in `dir` unless a current stamp says its outputs are already
/// there. `body` returns the artifact names it wrote.
pub(crate) fn guarded(
    cfg: &RunConfig,
    stage: Stage,
    dir: &Path,
    extras: &[String],
    body: impl FnOnce(&Path) -> Result<Vec<String>, CliError>,
) -> Result<StageOutcome, CliError> {
    let hash = combine(&cfg.hash_of(stage.sections()), extras);
    if !cfg.force && Provenance::is_current(dir, stage.name(), &hash) {
        info!("{}: up to date in {}", stage.name(), dir.display());
        return Ok(StageOutcome::Skipped);
    }
    fs::create_dir_all(dir).map_err(|e| CliError::stage(stage, format!("{}: {e}", dir.display())))?;
    let artifacts = body(dir)?;
    let settings = cfg
        .settings()
        .into_iter()
        .filter(|(k, _)| stage.sections().contains(&k.split_once('.').map_or("", |(s, _)| s)))
        .collect();
    let mut prov = Provenance::new(stage.name(), hash, cfg.seed, settings);
    prov.artifacts = artifacts;
    prov.write(dir).map_err(|e| CliError::stage(stage, e))?;
    info!("{}: wrote {}", stage.name(), dir.display());
    Ok(StageOutcome::Ran)
}

/// One utterance with everything the later stages read from disk.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub utt_id: String,
    pub speaker: usize,
    pub features: FeatureMatrix<f32>,
    pub alignment: PhonemeAlignment,
    pub vad: VadLabels,
}

/// Reads the corpus manifest, features, alignments and estimated VAD.
pub fn load_corpus(cfg: &RunConfig, stage: Stage) -> Result<Vec<Utterance>, CliError> {
    let err = |e: String| CliError::stage(stage, e);
    let entries = read_corpus_manifest(&corpus_dir(cfg)).map_err(|e| err(format!("corpus manifest: {e}")))?;
    let silence = SilenceSet::default();
    entries
        .into_iter()
        .map(|m| {
            let features = FeatureMatrix::<f32>::read(features_dir(cfg).join(format!("{}.feat", m.utt_id)))
                .map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
            let text = fs::read_to_string(corpus_dir(cfg).join(format!("{}.align.tsv", m.utt_id)))
                .map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
            let alignment = PhonemeAlignment::parse(&m.utt_id, &text, features.num_frames(), &silence)
                .map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
            let vad = VadLabels::read(vad_dir(cfg).join(format!("{}.vad.txt", m.utt_id)))
                .map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
            if vad.len() != features.num_frames() {
                return Err(err(format!("{}: VAD has {} frames, features {}", m.utt_id, vad.len(), features.num_frames())));
            }
            Ok(Utterance { utt_id: m.utt_id, speaker: m.speaker_id, features, alignment, vad })
        })
        .collect()
}

fn synth(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let utts = synth_corpus::<f32>(&cfg.synth).map_err(|e| CliError::stage(Stage::Synth, e))?;
    write_corpus(&utts, dir).map_err(|e| CliError::stage(Stage::Synth, e))?;
    let mut artifacts = vec![CORPUS_MANIFEST.to_string()];
    for u in &utts {
        for ext in ["wav", "align.tsv", "vad.txt"] {
            artifacts.push(format!("{}.{ext}", u.utt_id));
        }
    }
    Ok(artifacts)
}

fn featurize(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let err = |e: String| CliError::stage(Stage::Featurize, e);
    let entries = read_corpus_manifest(&corpus_dir(cfg)).map_err(|e| err(e.to_string()))?;
    let mut artifacts = Vec::new();
    for m in entries {
        let w = read_wav::<f32>(corpus_dir(cfg).join(format!("{}.wav", m.utt_id))).map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
        let x = fbank(&w, &cfg.features).map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
        if x.num_frames() != m.frame_count {
            return Err(err(format!("{}: {} frames, manifest says {}", m.utt_id, x.num_frames(), m.frame_count)));
        }
        let name = format!("{}.feat", m.utt_id);
        x.write(dir.join(&name)).map_err(|e| err(e.to_string()))?;
        artifacts.push(name);
    }
    Ok(artifacts)
}

fn vad(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let err = |e: String| CliError::stage(Stage::Vad, e);
    let entries = read_corpus_manifest(&corpus_dir(cfg)).map_err(|e| err(e.to_string()))?;
    let mut artifacts = Vec::new();
    let mut report = String::from("utt_id,speech_frames,frames,accuracy_vs_truth\n");
    let mut total = 0.0;
    for m in &entries {
        let w = read_wav::<f32>(corpus_dir(cfg).join(format!("{}.wav", m.utt_id))).map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
        let labels = vad_labels(&w, &cfg.features, &cfg.vad).map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
        let truth = VadLabels::read(corpus_dir(cfg).join(format!("{}.vad.txt", m.utt_id))).ok();
        let acc = truth.filter(|t| t.len() == labels.len()).map(|t| labels.accuracy_against(&t));
        total += acc.unwrap_or(f64::NAN);
        report.push_str(&format!(
            "{},{},{},{}\n",
            m.utt_id,
            labels.speech_count(),
            labels.len(),
            acc.map_or("NA".to_string(), |a| a.to_string())
        ));
        let name = format!("{}.vad.txt", m.utt_id);
        labels.write(dir.join(&name)).map_err(|e| err(e.to_string()))?;
        artifacts.push(name);
    }
    if !entries.is_empty() && total.is_finite() {
        info!("vad: mean frame accuracy against truth {:.4}", total / entries.len() as f64);
    }
    fs::write(dir.join("vad_report.csv"), report).map_err(|e| err(e.to_string()))?;
    artifacts.push("vad_report.csv".into());
    Ok(artifacts)
}

fn align_check(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let err = |e: String| CliError::stage(Stage::AlignCheck, e);
    let entries = read_corpus_manifest(&corpus_dir(cfg)).map_err(|e| err(e.to_string()))?;
    let silence = SilenceSet::default();
    let (mut spans, mut frames, mut silent) = (0usize, 0usize, 0usize);
    let mut alignments = Vec::new();
    for m in &entries {
        let x = FeatureMatrix::<f32>::read(features_dir(cfg).join(format!("{}.feat", m.utt_id)))
            .map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
        let text = fs::read_to_string(corpus_dir(cfg).join(format!("{}.align.tsv", m.utt_id)))
            .map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
        let a = PhonemeAlignment::parse(&m.utt_id, &text, x.num_frames(), &silence)
            .map_err(|e| err(format!("{}: {e}", m.utt_id)))?;
        spans += a.spans().len();
        frames += a.num_frames();
        silent += a.spans().iter().filter(|s| s.is_silence).map(|s| s.len()).sum::<usize>();
        alignments.push(a);
    }
    let inventory = PhonemeInventory::from_alignments(&alignments);
    let report = format!(
        "utterances={}\nspans={spans}\nframes={frames}\nsilence_fraction={}\nphoneme_classes={}\n",
        entries.len(),
        if frames == 0 { 0.0 } else { silent as f64 / frames as f64 },
        inventory.len()
    );
    fs::write(dir.join("align_check.txt"), report).map_err(|e| err(e.to_string()))?;
    Ok(vec!["align_check.txt".into()])
}

fn mask(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let err = |e: String| CliError::stage(Stage::Mask, e);
    let utts = load_corpus(cfg, Stage::Mask)?;
    let mut artifacts = Vec::new();
    let mut summary = String::from("utt_id,num_frames,masked_fraction,speech_masked_fraction,num_runs\n");
    for u in &utts {
        let lists = speech_lists(&u.vad);
        let inputs = MaskInputs { lists: Some(&lists), alignment: Some(&u.alignment) };
        let m = generate_mask(u.features.num_frames(), inputs, &cfg.mask.for_utterance(&u.utt_id))
            .map_err(|e| err(format!("{}: {e}", u.utt_id)))?;
        let stats = mask_stats(&m, &lists, Some(&u.alignment)).map_err(|e| err(format!("{}: {e}", u.utt_id)))?;
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            u.utt_id,
            stats.num_frames,
            stats.masked_fraction,
            stats.speech_masked_fraction,
            stats.num_runs()
        ));
        let (runs, st) = (format!("{}.mask.tsv", u.utt_id), format!("{}.stats.txt", u.utt_id));
        fs::write(dir.join(&runs), m.runs_to_tsv()).map_err(|e| err(e.to_string()))?;
        fs::write(dir.join(&st), stats.to_text()).map_err(|e| err(e.to_string()))?;
        artifacts.extend([runs, st]);
    }
    fs::write(dir.join("summary.csv"), summary).map_err(|e| err(e.to_string()))?;
    artifacts.push("summary.csv".into());
    Ok(artifacts)
}

pub fn train_corpus(utts: &[Utterance]) -> Vec<TrainUtterance<f32>> {
    utts.iter()
        .map(|u| TrainUtterance {
            utt_id: u.utt_id.clone(),
            features: u.features.clone(),
            lists: Some(speech_lists(&u.vad)),
            alignment: Some(u.alignment.clone()),
        })
        .collect()
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const RESULTS_FILE: &str = "results.csv";

/// Pre-trains on `utts` and writes the checkpoint and loss curve into `dir`.
pub fn pretrain_into(cfg: &RunConfig, utts: &[Utterance], dir: &Path) -> Result<Vec<String>, CliError> {
    let err = |e: String| CliError::stage(Stage::Pretrain, e);
    let corpus = train_corpus(utts);
    let mut trainer =
        Trainer::<f32>::new(cfg.model.clone(), cfg.train.clone(), cfg.mask.clone()).map_err(|e| err(e.to_string()))?;
    let mut losses = Vec::with_capacity(cfg.train.num_steps);
    while losses.len() < cfg.train.num_steps {
        let n = (cfg.train.num_steps - losses.len()).min(100);
        losses.extend(trainer.run(&corpus, n).map_err(|e| err(e.to_string()))?);
        info!("pretrain: step {} loss {:.4}", losses.len(), losses.last().copied().unwrap_or(f64::NAN));
    }
    let extra = vec![
        ("run.config_hash".to_string(), cfg.config_hash()),
        ("run.seed".to_string(), cfg.seed.to_string()),
        ("run.version".to_string(), VERSION.to_string()),
        ("run.policy".to_string(), cfg.mask.policy.name().to_string()),
    ];
    trainer.checkpoint(&extra).save(dir.join(CHECKPOINT_FILE)).map_err(|e| err(e.to_string()))?;
    fs::write(dir.join(LOSS_FILE), loss_curve_csv(&losses, 0)).map_err(|e| err(e.to_string()))?;
    Ok(vec![CHECKPOINT_FILE.into(), LOSS_FILE.into()])
}

pub fn probe_utterances(utts: &[Utterance]) -> Vec<ProbeUtterance<f32>> {
    let inventory = PhonemeInventory::from_alignments(utts.iter().map(|u| &u.alignment));
    utts.iter()
        .map(|u| ProbeUtterance {
            utt_id: u.utt_id.clone(),
            features: u.features.clone(),
            phonemes: inventory.frame_labels(&u.alignment).expect("inventory built from these alignments"),
            speaker: u.speaker,
        })
        .collect()
}

/// Untrained encoder with the same initialisation a trainer would start from.
pub fn untrained_model(cfg: &RunConfig) -> Result<EncoderModel<f32>, CliError> {
    let mut rng = SeedHasher::new(cfg.train.seed).str("init").rng();
    EncoderModel::new(cfg.model.clone(), &mut rng).map_err(|e| CliError::stage(Stage::Probe, e))
}

/// Probes the checkpoint at `ckpt` on every configured task and writes
/// `results.csv` and `results.txt` into `dir`.
pub fn probe_into(
    cfg: &RunConfig,
    utts: &[Utterance],
    ckpt: &Path,
    dir: &Path,
) -> Result<(Vec<String>, Vec<(String, ProbeResult)>), CliError> {
    let err = |e: String| CliError::stage(Stage::Probe, e);
    let model = Checkpoint::load(ckpt)
        .and_then(|c| c.model::<f32>())
        .map_err(|e| err(format!("{}: {e}", ckpt.display())))?;
    let probe_utts = probe_utterances(utts);
    let mut models = vec![(cfg.mask.policy.table_name().to_string(), model)];
    if cfg.probe.include_untrained {
        models.push(("Untrained".to_string(), untrained_model(cfg)?));
    }
    let mut rows = Vec::new();
    for (label, m) in &models {
        for &task in &cfg.probe.tasks {
            let pc = masklab_core::ProbeConfig { task, ..cfg.probe.config.clone() };
            let r = evaluate_encoder(m, &probe_utts, &pc, cfg.seed).map_err(|e| err(format!("{label} {task}: {e}")))?;
            info!("probe: {label} {} accuracy {:.4}", task.table_name(), r.accuracy);
            rows.push((label.clone(), r));
        }
    }
    fs::write(dir.join(RESULTS_FILE), results_csv(&rows)).map_err(|e| err(e.to_string()))?;
    fs::write(dir.join("results.txt"), results_table(&rows)).map_err(|e| err(e.to_string()))?;
    Ok((vec![RESULTS_FILE.into(), "results.txt".into()], rows))
}

fn analyze(cfg: &RunConfig, args: &StageArgs, dir: &Path) -> Result<Vec<String>, CliError> {
    let err = |e: String| CliError::stage(Stage::Analyze, e);
    let utts = load_corpus(cfg, Stage::Analyze)?;
    let u = match &args.utt {
        Some(id) => utts.iter().find(|u| &u.utt_id == id).ok_or_else(|| err(format!("no utterance {id:?}")))?,
        None => utts.first().ok_or_else(|| err("empty corpus".into()))?,
    };
    let ckpt = args.ckpt.clone().unwrap_or_else(|| stage_dir(cfg, Stage::Pretrain, args).join(CHECKPOINT_FILE));
    let model = Checkpoint::load(&ckpt)
        .and_then(|c| c.model::<f32>())
        .map_err(|e| err(format!("{}: {e}", ckpt.display())))?;
    let lists = speech_lists(&u.vad);
    let inputs = MaskInputs { lists: Some(&lists), alignment: Some(&u.alignment) };
    let m = generate_mask(u.features.num_frames(), inputs, &cfg.mask.for_utterance(&u.utt_id)).map_err(|e| err(e.to_string()))?;
    let (masked, m) = apply_mask(&u.features, &m, &cfg.mask).map_err(|e| err(e.to_string()))?;
    let (recon, _) = model.forward(&masked, false, None).map_err(|e| err(e.to_string()))?;
    let stats = mask_stats(&m, &lists, Some(&u.alignment)).map_err(|e| err(e.to_string()))?;
    let mut report = SharpnessReport::default();
    report.push(
        cfg.mask.policy.name(),
        sharpness(&recon, &m).map_err(|e| err(e.to_string()))?,
        sharpness(&u.features, &m).map_err(|e| err(e.to_string()))?,
    );
    let mut artifacts = Vec::new();
    for (stem, x) in [("input", &u.features), ("masked", &masked), ("recon", &recon)] {
        dump_spectrogram(x, Some(&m), dir.join(stem)).map_err(|e| err(e.to_string()))?;
        artifacts.extend([format!("{stem}.pgm"), format!("{stem}.csv")]);
    }
    fs::write(dir.join("mask.tsv"), m.runs_to_tsv()).map_err(|e| err(e.to_string()))?;
    fs::write(dir.join("stats.txt"), stats.to_text()).map_err(|e| err(e.to_string()))?;
    fs::write(dir.join("sharpness.csv"), report.to_csv()).map_err(|e| err(e.to_string()))?;
    artifacts.extend(["mask.tsv".into(), "stats.txt".into(), "sharpness.csv".into()]);
    Ok(artifacts)
}

/// Runs one stage, assuming its inputs exist.
pub fn run_stage(cfg: &RunConfig, stage: Stage, args: &StageArgs) -> Result<StageOutcome, CliError> {
    let dir = stage_dir(cfg, stage, args);
    match stage {
        Stage::Synth => guarded(cfg, stage, &dir, &[], |d| synth(cfg, d)),
        Stage::Featurize => guarded(cfg, stage, &dir, &[], |d| featurize(cfg, d)),
        Stage::Vad => guarded(cfg, stage, &dir, &[], |d| vad(cfg, d)),
        Stage::AlignCheck => guarded(cfg, stage, &dir, &[], |d| align_check(cfg, d)),
        Stage::Mask => guarded(cfg, stage, &dir, &[], |d| mask(cfg, d)),
        Stage::Pretrain => guarded(cfg, stage, &dir, &[], |d| {
            let utts = load_corpus(cfg, stage)?;
            pretrain_into(cfg, &utts, d)
        }),
        Stage::Probe => {
            let ckpt = stage_dir(cfg, Stage::Pretrain, args).join(CHECKPOINT_FILE);
            let extras = [file_hash(&ckpt).map_err(|e| CliError::stage(stage, e))?];
            guarded(cfg, stage, &dir, &extras, |d| {
                let utts = load_corpus(cfg, stage)?;
                probe_into(cfg, &utts, &ckpt, d).map(|(a, _)| a)
            })
        }
        Stage::Analyze => {
            let ckpt = args.ckpt.clone().unwrap_or_else(|| stage_dir(cfg, Stage::Pretrain, args).join(CHECKPOINT_FILE));
            let extras = [
                file_hash(&ckpt).map_err(|e| CliError::stage(stage, e))?,
                args.utt.clone().unwrap_or_default(),
            ];
            guarded(cfg, stage, &dir, &extras, |d| analyze(cfg, args, d))
        }
        Stage::Sweep => crate::sweep::run_sweep(cfg).map(|_| StageOutcome::Ran),
    }
}

/// `targets` and everything they depend on, each once, in dependency order.
pub fn plan(targets: &[Stage], args: &StageArgs) -> Vec<Stage> {
    fn visit(s: Stage, args: &StageArgs, order: &mut Vec<Stage>) {
        if order.contains(&s) {
            return;
        }
        for d in s.deps(args) {
            visit(d, args, order);
        }
        order.push(s);
    }
    let mut order = Vec::new();
    for &t in targets {
        visit(t, args, &mut order);
    }
    order
}

pub fn run_pipeline(
    cfg: &RunConfig,
    targets: &[Stage],
    args: &StageArgs,
) -> Result<Vec<(Stage, StageOutcome)>, CliError> {
    plan(targets, args).into_iter().map(|s| run_stage(cfg, s, args).map(|o| (s, o))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dependency_order() {
        let order = plan(&[Stage::Probe], &StageArgs::default());
        assert_eq!(order, vec![Stage::Synth, Stage::Featurize, Stage::Vad, Stage::Pretrain, Stage::Probe]);
        let order = plan(&[Stage::Mask, Stage::AlignCheck], &StageArgs::default());
        assert_eq!(order, vec![Stage::Synth, Stage::Featurize, Stage::Vad, Stage::Mask, Stage::AlignCheck]);
    }

    #[test]
    fn analyze_with_checkpoint_skips_pretraining() {
        let args = StageArgs { ckpt: Some("x.ckpt".into()), utt: None };
        assert!(!Stage::Analyze.deps(&args).contains(&Stage::Pretrain));
        assert!(Stage::Analyze.deps(&StageArgs::default()).contains(&Stage::Pretrain));
    }

    #[test]
    fn combine_is_identity_without_extras() {
        assert_eq!(combine("abc", &[]), "abc");
        assert_ne!(combine("abc", &["x".into()]), "abc");
    }
}
