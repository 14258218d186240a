//! `sbc`: record demonstrations, evaluate the retrieval controller, run
//! ablations, baselines and latent projections.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use sbc_core::eval::{
    baseline_policy, check_compatible, project_2d, run_ablation, run_sbc_suite, run_suite, timed_build,
    to_report_json, AblationResult, BaselineKind, EpisodeKey, PcaOptions, SuiteParams, SuiteResult,
    ThresholdRule, DEFAULT_ABLATION_COUNTS,
};
use sbc_core::{generate_demos, hold_phase_labels, ControllerConfig, DemoSet32, Encoder, GridAction};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "sbc", version, about = "Search-based behavioral cloning experiments")]
struct Cli {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for episode suites. Results do not depend on it.
    #[arg(long, global = true, env = "SBC_JOBS", default_value_t = 1,
          value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Default)]
struct SuiteArgs {
    /// Evaluate seeds 0..N.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: Option<u64>,

    /// Episodes per seed.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: Option<u64>,
}

#[derive(clap::Args, Debug, Default)]
struct ControllerArgs {
    #[arg(long)]
    warmup: Option<usize>,

    /// Follow budget before a time-triggered search.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_steps: Option<u64>,

    /// Number, or `auto:q` to calibrate at quantile q.
    #[arg(long, allow_hyphen_values = true)]
    div_threshold: Option<ThresholdRule>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate expert demonstrations and write a demo file.
    Record {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        demos: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the retrieval controller on a demo file.
    Eval {
        #[arg(long)]
        demos: PathBuf,
        #[command(flatten)]
        suite: SuiteArgs,
        #[command(flatten)]
        controller: ControllerArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Success rate against the number of demonstrations.
    Ablate {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ABLATION_COUNTS.to_vec())]
        counts: Vec<usize>,
        #[command(flatten)]
        suite: SuiteArgs,
        #[command(flatten)]
        controller: ControllerArgs,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Leave wall-clock fields out of the report.
        #[arg(long)]
        no_timing: bool,
    },
    /// Two-component PCA of the demo latents as CSV.
    Project {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a comparison policy through the same suite.
    Baseline {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Policy seed offset; episodes still derive their own seeds from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Demo file; required by `majority`.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Random,
    Majority,
    Expert,
}

impl From<Kind> for BaselineKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Random => BaselineKind::Random,
            Kind::Majority => BaselineKind::Majority,
            Kind::Expert => BaselineKind::Expert,
        }
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    demos: usize,
    frames: usize,
    params: &'a SuiteParams,
    controller: ControllerConfig,
    suite: SuiteResult,
}

#[derive(Serialize)]
struct AblateReport<'a> {
    params: &'a SuiteParams,
    warmup: usize,
    max_steps: usize,
    div_threshold: String,
    ablation: AblationResult,
}

#[derive(Serialize)]
struct BaselineReport<'a> {
    kind: BaselineKind,
    seed: u64,
    params: &'a SuiteParams,
    suite: SuiteResult,
}

fn suite_params(cfg: &RunConfig, args: &SuiteArgs, jobs: u16) -> SuiteParams {
    let seeds = args.seeds.unwrap_or(cfg.suite.seeds as u64);
    SuiteParams {
        grid: cfg.grid.clone(),
        encoder: cfg.encoder.clone(),
        seeds: (0..seeds).collect(),
        episodes_per_seed: args.episodes.map_or(cfg.suite.episodes, |e| e as usize),
        success_k: cfg.suite.success_k,
        jobs: usize::from(jobs),
    }
}

fn apply_controller(cfg: &mut RunConfig, args: &ControllerArgs) {
    if let Some(w) = args.warmup {
        cfg.controller.warmup = w;
    }
    if let Some(t) = args.max_steps {
        cfg.controller.max_steps = t as usize;
    }
    if let Some(rule) = args.div_threshold {
        cfg.controller.div_threshold = rule;
    }
}

fn load_demos(path: &Path, params: &SuiteParams) -> anyhow::Result<DemoSet32> {
    let demos = DemoSet32::load(path).with_context(|| format!("loading demos from {}", path.display()))?;
    check_compatible(&demos, params).context("demo file does not match the configured grid and encoder")?;
    Ok(demos)
}

fn write_report(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    if let Some(path) = path {
        std::fs::write(path, text).with_context(|| format!("writing report {}", path.display()))?;
        info!("report written to {}", path.display());
    }
    Ok(())
}

fn print_suite(label: &str, suite: &SuiteResult) {
    let completion = suite
        .mean_completion_steps
        .map_or("n/a".to_string(), |m| format!("{m:.1} steps"));
    println!(
        "{label}: success rate {:.3} ({}/{}), mean completion {completion}",
        suite.success_rate, suite.successes, suite.episodes
    );
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Record { demos, seed, out } => {
            let n = demos.map_or(cfg.record.demos, |d| d as usize);
            if n == 0 {
                bail!("record: demo count must be positive");
            }
            let seed = seed.unwrap_or(cfg.record.seed);
            let mut encoder = Encoder::new(&cfg.encoder, cfg.grid.observation_len())?;
            let set: DemoSet32 = generate_demos(
                &cfg.grid,
                n,
                cfg.record.noise_eps,
                &mut encoder,
                cfg.record.hold_steps,
                seed,
            )?;
            set.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "recorded {} demos, {} frames, dimension {} -> {}",
                set.len(),
                set.frame_count(),
                set.dimension,
                out.display()
            );
        }
        Command::Eval {
            demos,
            suite,
            controller,
            report,
        } => {
            apply_controller(&mut cfg, &controller);
            cfg.check()?;
            let params = suite_params(&cfg, &suite, cli.jobs);
            let set = load_demos(&demos, &params)?;
            let (index, build_ms) = timed_build(&set)?;
            info!("index over {} frames built in {build_ms:.2} ms", index.len());
            let config = cfg.controller.resolve(&set)?;
            info!("divergence threshold {}", config.div_threshold);
            let result = run_sbc_suite(&index, config, &params)?;
            print_suite("s-bc", &result);
            let text = to_report_json(&EvalReport {
                demos: set.len(),
                frames: index.len(),
                params: &params,
                controller: config,
                suite: result,
            })?;
            write_report(report.as_deref(), &text)?;
        }
        Command::Ablate {
            demos,
            counts,
            suite,
            controller,
            report,
            no_timing,
        } => {
            apply_controller(&mut cfg, &controller);
            cfg.check()?;
            let params = suite_params(&cfg, &suite, cli.jobs);
            let set = load_demos(&demos, &params)?;
            let mut ablation = run_ablation(&set, &counts, &cfg.controller, &params)?;
            for entry in &mut ablation.entries {
                print_suite(&format!("{} demos", entry.demos), &entry.suite);
                if no_timing {
                    entry.suite.timing = None;
                }
            }
            let text = to_report_json(&AblateReport {
                params: &params,
                warmup: cfg.controller.warmup,
                max_steps: cfg.controller.max_steps,
                div_threshold: cfg.controller.div_threshold.to_string(),
                ablation,
            })?;
            write_report(report.as_deref(), &text)?;
        }
        Command::Project { demos, out } => {
            let set = DemoSet32::load(&demos).with_context(|| format!("loading demos from {}", demos.display()))?;
            let (index, _) = timed_build(&set)?;
            let labels: Vec<String> = hold_phase_labels(&index)
                .into_iter()
                .map(|hold| if hold { "in_goal" } else { "en_route" }.to_string())
                .collect();
            let projection = project_2d(&index, &labels, &PcaOptions::default())?;
            std::fs::write(&out, projection.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "projected {} frames, explained variance {:.4} -> {}",
                projection.points.len(),
                projection.explained_variance_ratio(),
                out.display()
            );
        }
        Command::Baseline {
            kind,
            seed,
            demos,
            suite,
            report,
        } => {
            let kind = BaselineKind::from(kind);
            let params = suite_params(&cfg, &suite, cli.jobs);
            let set = demos.as_deref().map(|p| load_demos(p, &params)).transpose()?;
            if kind == BaselineKind::Majority && set.is_none() {
                bail!("baseline majority needs --demos");
            }
            let schema = GridAction::schema();
            let factory = |key: EpisodeKey| {
                let key = EpisodeKey {
                    seed: key.seed.wrapping_add(seed),
                    ..key
                };
                baseline_policy(kind, &schema, set.as_ref(), key.policy_seed())
            };
            let result = run_suite(&params, &factory)?;
            print_suite(BaselineKind::NAMES[kind as usize], &result);
            let text = to_report_json(&BaselineReport {
                kind,
                seed,
                params: &params,
                suite: result,
            })?;
            write_report(report.as_deref(), &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
