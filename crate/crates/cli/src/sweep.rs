//! Pre-train and probe once per (policy, value) cell.
//!
//! Each cell lives in `sweep/<policy>/<param>=<value>/` with its own stamps,
//! so cells are independent: deleting one and rerunning reproduces it.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use masklab_core::{MaskPolicy, ProbeTask};

use crate::pipeline::{self, guarded, load_corpus, Stage, Utterance, CHECKPOINT_FILE, RESULTS_FILE};
use crate::provenance::Provenance;
use crate::{CliError, RunConfig};

pub const TABLE_FILE: &str = "table.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub policy: MaskPolicy,
    pub value: f64,
    /// Accuracy per task in `tasks` order, or the failure message.
    pub result: Result<Vec<f64>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: String,
    pub values: Vec<f64>,
    pub policies: Vec<MaskPolicy>,
    pub tasks: Vec<ProbeTask>,
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, policy: MaskPolicy, value: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.policy == policy && c.value == value)
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }

    fn row(&self, value: f64, policies: &[MaskPolicy]) -> String {
        let mut s = value.to_string();
        for &p in policies {
            match self.cell(p, value).map(|c| &c.result) {
                Some(Ok(acc)) => acc.iter().for_each(|a| s.push_str(&format!(",{:.1}", 100.0 * a))),
                _ => self.tasks.iter().for_each(|_| s.push_str(",FAILED")),
            }
        }
        s
    }

    /// One row per value, one column per (policy, task), accuracies in percent.
    pub fn to_csv_for(&self, policies: &[MaskPolicy]) -> String {
        let mut s = self.param.clone();
        for p in policies {
            for t in &self.tasks {
                s.push_str(&format!(",{} {}", p.table_name(), t.table_name()));
            }
        }
        s.push('\n');
        for &v in &self.values {
            s.push_str(&self.row(v, policies));
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        self.to_csv_for(&self.policies)
    }
}

/// Settings of one cell: the base run with the policy, the swept value and the
/// sweep step counts substituted.
pub fn cell_config(cfg: &RunConfig, policy: MaskPolicy, value: f64) -> Result<RunConfig, CliError> {
    let s = &cfg.sweep;
    let tasks: Vec<&str> = s.tasks.iter().map(|t| t.name()).collect();
    let mut c = cfg.with("mask.policy", policy.name())?;
    c = c.with(&s.param.key(), &value.to_string())?;
    c = c.with("train.num_steps", &s.pretrain_steps.to_string())?;
    c = c.with("probe.num_steps", &s.probe_steps.to_string())?;
    c = c.with("probe.tasks", &tasks.join(","))?;
    c.with("probe.include_untrained", "false")
}

pub fn cell_dir(cfg: &RunConfig, policy: MaskPolicy, value: f64) -> PathBuf {
    cfg.out
        .join("sweep")
        .join(policy.name())
        .join(format!("{}={value}", cfg.sweep.param.name()))
}

fn read_accuracies(path: &Path, tasks: &[ProbeTask]) -> Result<Vec<f64>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    tasks
        .iter()
        .map(|t| {
            text.lines()
                .skip(1)
                .map(|l| l.split(',').collect::<Vec<_>>())
                .find(|f| f.len() == 4 && f[1] == t.table_name())
                .and_then(|f| f[2].parse::<f64>().ok())
                .filter(|a| a.is_finite())
                .ok_or_else(|| format!("no finite {} accuracy in {}", t.table_name(), path.display()))
        })
        .collect()
}

fn run_cell(cfg: &RunConfig, utts: &[Utterance], policy: MaskPolicy, value: f64) -> Result<Vec<f64>, CliError> {
    let c = cell_config(cfg, policy, value)?;
    let dir = cell_dir(cfg, policy, value);
    let pre = dir.join("pretrain");
    guarded(&c, Stage::Pretrain, &pre, &[], |d| pipeline::pretrain_into(&c, utts, d))?;
    let ckpt = pre.join(CHECKPOINT_FILE);
    let hash = pipeline::file_hash(&ckpt).map_err(|e| CliError::stage(Stage::Sweep, e))?;
    guarded(&c, Stage::Probe, &dir, &[hash], |d| pipeline::probe_into(&c, utts, &ckpt, d).map(|(a, _)| a))?;
    read_accuracies(&dir.join(RESULTS_FILE), &cfg.sweep.tasks).map_err(|e| CliError::stage(Stage::Sweep, e))
}

/// Runs every cell, continuing past failures, and writes `sweep/table.csv`,
/// one `sweep/<policy>.csv` per policy and a provenance stamp.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepTable, CliError> {
    let spec = &cfg.sweep;
    spec.validate().map_err(CliError::Config)?;
    let utts = load_corpus(cfg, Stage::Sweep)?;
    let mut cells = Vec::new();
    for &policy in &spec.policies {
        for &value in &spec.values {
            info!("sweep: {} {}={value}", policy.name(), spec.param.name());
            let result = run_cell(cfg, &utts, policy, value).map_err(|e| {
                warn!("sweep: cell {} {}={value} failed: {e}", policy.name(), spec.param.name());
                e.to_string()
            });
            cells.push(SweepCell { policy, value, result });
        }
    }
    let table = SweepTable {
        param: spec.param.name().to_string(),
        values: spec.values.clone(),
        policies: spec.policies.clone(),
        tasks: spec.tasks.clone(),
        cells,
    };
    let dir = cfg.out.join("sweep");
    let io = |e: std::io::Error| CliError::stage(Stage::Sweep, e);
    fs::create_dir_all(&dir).map_err(io)?;
    fs::write(dir.join(TABLE_FILE), table.to_csv()).map_err(io)?;
    let mut artifacts = vec![TABLE_FILE.to_string()];
    for &p in &spec.policies {
        let name = format!("{}.csv", p.name());
        fs::write(dir.join(&name), table.to_csv_for(&[p])).map_err(io)?;
        artifacts.push(name);
    }
    let settings = cfg.settings().into_iter().collect();
    let mut prov = Provenance::new(Stage::Sweep.name(), cfg.config_hash(), cfg.seed, settings);
    prov.artifacts = artifacts;
    prov.write(&dir).map_err(io)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SweepTable {
        SweepTable {
            param: "rho".into(),
            values: vec![0.8, 0.9],
            policies: vec![MaskPolicy::SpeechLevel],
            tasks: vec![ProbeTask::PhonemeL, ProbeTask::Phoneme1H],
            cells: vec![
                SweepCell { policy: MaskPolicy::SpeechLevel, value: 0.8, result: Ok(vec![0.5, 0.625]) },
                SweepCell { policy: MaskPolicy::SpeechLevel, value: 0.9, result: Err("boom".into()) },
            ],
        }
    }

    #[test]
    fn csv_layout_marks_failures() {
        let csv = table().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "rho,Speech-Level Phoneme-L,Speech-Level Phoneme-1H");
        assert_eq!(lines[1], "0.8,50.0,62.5");
        assert_eq!(lines[2], "0.9,FAILED,FAILED");
        assert_eq!(table().failures(), 1);
    }

    #[test]
    fn cell_config_substitutes_sweep_settings() {
        let base = RunConfig::default();
        let c = cell_config(&base, MaskPolicy::Combined, 0.85).unwrap();
        assert_eq!(c.mask.policy, MaskPolicy::Combined);
        assert_eq!(c.mask.rho, 0.85);
        assert_eq!(c.train.num_steps, base.sweep.pretrain_steps);
        assert_eq!(c.probe.config.num_steps, base.sweep.probe_steps);
        assert_eq!(c.probe.tasks, base.sweep.tasks);
    }

    #[test]
    fn accuracies_read_back_in_task_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "policy,task,accuracy,num_examples\nX,Phoneme-1H,0.25,10\nX,Phoneme-L,0.75,10\n").unwrap();
        let got = read_accuracies(&p, &[ProbeTask::PhonemeL, ProbeTask::Phoneme1H]).unwrap();
        assert_eq!(got, vec![0.75, 0.25]);
        assert!(read_accuracies(&p, &[ProbeTask::SpeakerU]).is_err());
    }
}
