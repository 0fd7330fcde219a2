use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use govtrust_core::egt::{simulate_chain_partitioned, STATES};
use govtrust_core::experiment::report::{
    cells_to_text, payoff_table_csv, payoff_table_text, stationary_csv, stationary_text,
};
use govtrust_core::experiment::runner::{load_template, write_report, TRANSCRIPTS_FILE};
use govtrust_core::experiment::{
    dry_run, persist, replay, run_experiment, run_personality_ablation, ExperimentOutput,
    PersonalityTreatment,
};
use govtrust_core::harness::backend::BackendRegistry;
use govtrust_core::{analyze, find_pure_nash, EgtConfig, ExperimentConfig, GameParams, TrustMode};

// fixed so that a seed gives the same walk on every machine
const MC_PARTITIONS: u32 = 8;

#[derive(Parser)]
#[command(
    name = "govtrust",
    version,
    about = "Trust game between users, AI developers and regulators"
)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the payoff table.
    Payoffs {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// List pure Nash equilibria.
    Nash {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        /// Require every deviation to be strictly worse.
        #[arg(long)]
        strict: bool,
    },
    /// Stationary distribution of the small-mutation-limit population dynamics.
    Egt {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Conditional)]
        mode: ModeArg,
        /// Population size per role.
        #[arg(short = 'z', long, default_value_t = 100)]
        population: u32,
        /// Selection intensity.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also run a Monte Carlo walk of this many steps and report the gap.
        #[arg(long)]
        monte_carlo: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment sweep from a config file.
    Run(RunArgs),
    /// One-trait-at-a-time personality ablation.
    Ablate(RunArgs),
    /// Rebuild the report from stored transcripts.
    Report {
        /// A transcripts file, or a directory containing one.
        input: PathBuf,
        /// Where to write the report; defaults to the input's directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a config file and summarise what it would run.
    ValidateConfig {
        #[arg(short, long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads; overrides the config.
    #[arg(short = 'j', long)]
    parallelism: Option<usize>,
    /// Print the first-round prompts of every cell without calling a backend.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, allow_hyphen_values = true)]
    b_u: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b_p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b_r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c_p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c_r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    u: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    v: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b_fo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<GameParams> {
        let mut p = GameParams::default();
        for (slot, value) in [
            (&mut p.b_u, self.b_u),
            (&mut p.b_p, self.b_p),
            (&mut p.b_r, self.b_r),
            (&mut p.c_p, self.c_p),
            (&mut p.c_r, self.c_r),
            (&mut p.u, self.u),
            (&mut p.v, self.v),
            (&mut p.b_fo, self.b_fo),
            (&mut p.epsilon, self.epsilon),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Conditional,
    Unconditional,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<TrustMode> {
        match self {
            ModeArg::Conditional => vec![TrustMode::Conditional],
            ModeArg::Unconditional => vec![TrustMode::Unconditional],
            ModeArg::Both => TrustMode::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn execute(cli: Cli) -> Result<()> {
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Payoffs {
            params,
            mode,
            format,
        } => {
            let p = params.resolve()?;
            let table = match format {
                Format::Text => payoff_table_text(&p, &mode.modes()),
                Format::Csv => payoff_table_csv(&p, &mode.modes()),
            };
            out.write_all(table.as_bytes())?;
        }
        Command::Nash {
            params,
            mode,
            strict,
        } => {
            let p = params.resolve()?;
            for m in mode.modes() {
                let labels: Vec<String> = find_pure_nash(&p, m, strict)
                    .iter()
                    .map(|x| x.label(m))
                    .collect();
                let shown = if labels.is_empty() {
                    "(none)".to_string()
                } else {
                    labels.join(" ")
                };
                writeln!(out, "{m}: {shown}")?;
            }
        }
        Command::Egt {
            params,
            mode,
            population,
            beta,
            format,
            monte_carlo,
            seed,
        } => {
            let mode = match mode {
                ModeArg::Both => bail!("egt takes a single mode"),
                m => m.modes()[0],
            };
            let config = EgtConfig {
                population,
                beta,
                mode,
                params: params.resolve()?,
            };
            let result = analyze(&config)?;
            let table = match format {
                Format::Text => stationary_text(&result),
                Format::Csv => stationary_csv(&result),
            };
            out.write_all(table.as_bytes())?;
            if let Some(steps) = monte_carlo {
                let freq = simulate_chain_partitioned(&config, steps, seed, MC_PARTITIONS)?;
                let gap = (0..STATES)
                    .map(|i| (freq[i] - result.distribution[i]).abs())
                    .fold(0.0, f64::max);
                writeln!(out, "monte carlo: {steps} steps, max deviation {gap:.6}")?;
            }
        }
        Command::Run(args) => run(&args, false, &mut out)?,
        Command::Ablate(args) => run(&args, true, &mut out)?,
        Command::Report { input, output } => {
            let file = if input.is_dir() {
                input.join(TRANSCRIPTS_FILE)
            } else {
                input.clone()
            };
            let cells = replay(&file).with_context(|| format!("replaying {}", file.display()))?;
            let dir =
                output.unwrap_or_else(|| file.parent().map(Path::to_path_buf).unwrap_or_default());
            write_report(&cells, &dir)?;
            out.write_all(cells_to_text(&cells).as_bytes())?;
            writeln!(out, "report written to {}", dir.display())?;
        }
        Command::ValidateConfig { config } => {
            let c = load_config(&config)?;
            load_template(&c)?;
            let games = c.cell_count() * c.game.replications as usize;
            writeln!(out, "{}: ok", config.display())?;
            writeln!(
                out,
                "cells: {}, games: {games}, rounds per game: {}",
                c.cell_count(),
                c.game.rounds
            )?;
            writeln!(out, "backend: {}", c.backend.snapshot().id)?;
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(args: &RunArgs, ablation: bool, out: &mut impl Write) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(dir) = &args.output {
        config.output_dir.clone_from(dir);
    }
    if let Some(n) = args.parallelism {
        if n == 0 {
            bail!("--parallelism must be at least 1");
        }
        config.parallelism = n;
    }
    let template = load_template(&config)?;

    if args.dry_run {
        let mut shown = config.clone();
        if ablation {
            shown.personality = PersonalityTreatment::Ablation;
        }
        for p in dry_run(&shown, &template)? {
            writeln!(out, "=== {} / {} ===\n{}\n", p.game_id, p.role, p.prompt)?;
        }
        return Ok(());
    }

    let registry = BackendRegistry::from_configs(&[config.backend.clone()])?;
    let output: ExperimentOutput = if ablation {
        run_personality_ablation(&config, &template, &registry)?
    } else {
        run_experiment(&config, &template, &registry)?
    };
    fs::create_dir_all(&config.output_dir)?;
    let files = persist(&output, &config.output_dir)?;
    out.write_all(cells_to_text(&output.cells).as_bytes())?;
    writeln!(out, "transcripts: {}", files.transcripts.display())?;
    writeln!(out, "cells: {}", files.csv.display())?;
    writeln!(out, "figure: {}", files.svg.display())?;
    Ok(())
}
