use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use masklab::config::{parse_override, read_config_file};
use masklab::{run_pipeline, CliError, RunConfig, Stage, StageArgs, StageOutcome};

#[derive(Parser, Debug)]
#[command(name = "masklab", version, about = "Masked-reconstruction speech pre-training pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides `seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "MASKLAB_OUT", default_value = "masklab-out")]
    out: PathBuf,
    /// Rewrite outputs even when they are up to date.
    #[arg(long, global = true)]
    force: bool,
    /// Extra `section.key=value` setting; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Masking settings shared by the stages that generate masks.
#[derive(Args, Debug)]
struct MaskFlags {
    /// random, speech, phoneme or combined.
    #[arg(long)]
    policy: Option<String>,
    /// Speech proportion of starting points.
    #[arg(long)]
    rho: Option<f64>,
    /// Target masked fraction of the frames.
    #[arg(long)]
    budget: Option<f64>,
    /// Span width in frames.
    #[arg(long)]
    span: Option<usize>,
}

impl MaskFlags {
    fn push_into(&self, kv: &mut Vec<(String, String)>) {
        push(kv, "mask.policy", &self.policy);
        push(kv, "mask.rho", &self.rho);
        push(kv, "mask.budget", &self.budget);
        push(kv, "mask.span", &self.span);
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the labelled synthetic corpus.
    Synth {
        #[arg(long)]
        utterances: Option<usize>,
    },
    /// Compute log-mel features.
    Featurize,
    /// Estimate voice activity.
    Vad {
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Check alignments against the feature frame grid.
    AlignCheck,
    /// Generate masks for every utterance.
    Mask {
        #[command(flatten)]
        mask: MaskFlags,
    },
    /// Pre-train the encoder.
    Pretrain {
        #[command(flatten)]
        mask: MaskFlags,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Probe frozen representations.
    Probe {
        #[command(flatten)]
        mask: MaskFlags,
        /// Comma-separated tasks, e.g. phoneme_l,speaker_u.
        #[arg(long)]
        tasks: Option<String>,
    },
    /// Dump spectrograms and sharpness for one utterance.
    Analyze {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        utt: Option<String>,
        #[command(flatten)]
        mask: MaskFlags,
    },
    /// Pre-train and probe over a grid of one masking parameter.
    Sweep {
        /// Parameter to vary: rho, budget or span.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        policies: Option<String>,
        #[arg(long)]
        tasks: Option<String>,
        #[arg(long)]
        pretrain_steps: Option<usize>,
        #[arg(long)]
        probe_steps: Option<usize>,
    },
}

fn push<T: ToString>(v: &mut Vec<(String, String)>, key: &str, value: &Option<T>) {
    if let Some(x) = value {
        v.push((key.to_string(), x.to_string()));
    }
}

/// Stage, its non-config arguments and the settings the subcommand flags imply.
fn command_settings(c: &Command) -> (Stage, StageArgs, Vec<(String, String)>) {
    let mut kv = Vec::new();
    let mut args = StageArgs::default();
    let stage = match c {
        Command::Synth { utterances } => {
            push(&mut kv, "synth.num_utterances", utterances);
            Stage::Synth
        }
        Command::Featurize => Stage::Featurize,
        Command::Vad { theta } => {
            push(&mut kv, "vad.theta", theta);
            Stage::Vad
        }
        Command::AlignCheck => Stage::AlignCheck,
        Command::Mask { mask } => {
            mask.push_into(&mut kv);
            Stage::Mask
        }
        Command::Pretrain { mask, steps } => {
            mask.push_into(&mut kv);
            push(&mut kv, "train.num_steps", steps);
            Stage::Pretrain
        }
        Command::Probe { mask, tasks } => {
            mask.push_into(&mut kv);
            push(&mut kv, "probe.tasks", tasks);
            Stage::Probe
        }
        Command::Analyze { ckpt, utt, mask } => {
            mask.push_into(&mut kv);
            args.ckpt = ckpt.clone();
            args.utt = utt.clone();
            Stage::Analyze
        }
        Command::Sweep { param, values, policies, tasks, pretrain_steps, probe_steps } => {
            push(&mut kv, "sweep.param", param);
            push(&mut kv, "sweep.values", values);
            push(&mut kv, "sweep.policies", policies);
            push(&mut kv, "sweep.tasks", tasks);
            push(&mut kv, "sweep.pretrain_steps", pretrain_steps);
            push(&mut kv, "sweep.probe_steps", probe_steps);
            Stage::Sweep
        }
    };
    (stage, args, kv)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let mut kv = match &g.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    for s in &g.set {
        kv.push(parse_override(s)?);
    }
    push(&mut kv, "seed", &g.seed);
    let (stage, args, extra) = command_settings(&cli.command);
    kv.extend(extra);
    let mut cfg = RunConfig::resolve(&kv)?;
    cfg.out = g.out;
    cfg.force = g.force;

    for (s, outcome) in run_pipeline(&cfg, &[stage], &args)? {
        let what = match outcome {
            StageOutcome::Ran => "done",
            StageOutcome::Skipped => "up to date",
        };
        eprintln!("{}: {what}", s.name());
    }
    match stage {
        Stage::Probe => {
            let dir = masklab::pipeline::stage_dir(&cfg, Stage::Probe, &args);
            if let Ok(t) = std::fs::read_to_string(dir.join("results.txt")) {
                print!("{t}");
            }
        }
        Stage::Sweep => {
            let path = cfg.out.join("sweep").join(masklab::sweep::TABLE_FILE);
            let table = std::fs::read_to_string(&path).unwrap_or_default();
            print!("{table}");
            let failed = table.lines().filter(|l| l.contains("FAILED")).count();
            if failed > 0 {
                return Err(CliError::Stage { stage: "sweep", msg: format!("{failed} row(s) contain failed cells") });
            }
        }
        _ => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
