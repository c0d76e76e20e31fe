use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use husky_core::sim::{ModelConfig, RobotModel};
use husky_harness::design::{self, BudgetFile};
use husky_harness::log::read_log;
use husky_harness::runner::scenario_dir;
use husky_harness::{plotdata, run_scenario, summarize, HarnessError, RunOptions, RunStatus, Scenario, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "husky", version, about = "Legged-aerial robot simulator harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files.
    Run(RunArgs),
    /// Recompute a run summary from its trajectory log.
    Summarize { log: PathBuf },
    /// Print selected channels of a trajectory log as CSV.
    Plotdata {
        log: PathBuf,
        /// Comma-separated channel names.
        #[arg(long, value_delimiter = ',', default_value = "")]
        channels: Vec<String>,
        /// Model file for the foot channels. Default: built-in model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Mass-budget and thrust tradeoff tools.
    #[command(subcommand)]
    Design(DesignCommand),
}

#[derive(Args)]
struct RunArgs {
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    /// Output root; each scenario writes to `<out>/<name>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log morph guard signals with every sample.
    #[arg(long)]
    morph_trace: bool,
    /// Scenarios to run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum DesignCommand {
    /// Step-3 tradeoff table over thruster masses, as CSV.
    Sweep {
        budget: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        mt: Vec<f64>,
    },
    /// Repurposed mass, total mass, and thrust-to-weight figures.
    Report { budget: PathBuf },
}

fn fail(e: &HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn run(args: RunArgs) -> ExitCode {
    let mut scenarios = Vec::new();
    let mut errors = Vec::new();
    for p in &args.scenarios {
        match Scenario::load(p) {
            Ok(s) => scenarios.push(s),
            Err(e) => errors.push(e),
        }
    }
    let mut seen = HashSet::new();
    for s in &scenarios {
        if !seen.insert(s.config.name.clone()) {
            let path = s.source.clone().unwrap_or_default();
            errors.push(HarnessError::config(&path, vec![format!("duplicate scenario name `{}`", s.config.name)]));
        }
    }
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("error: {e}");
        }
        return ExitCode::from(EXIT_CONFIG as u8);
    }

    let root = |s: &Scenario| -> PathBuf {
        args.out
            .clone()
            .or_else(|| s.config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs"))
    };
    let jobs = args.jobs.max(1);
    let results: Vec<Result<_, HarnessError>> = std::thread::scope(|scope| {
        let mut results = Vec::new();
        for chunk in scenarios.chunks(jobs) {
            let handles: Vec<_> = chunk
                .iter()
                .map(|s| {
                    let opts = RunOptions {
                        out_dir: scenario_dir(&root(s), s),
                        morph_trace: args.morph_trace,
                    };
                    scope.spawn(move || run_scenario(s, &opts))
                })
                .collect();
            results.extend(handles.into_iter().map(|h| h.join().expect("run thread panicked")));
        }
        results
    });

    let mut code = 0;
    for (s, r) in scenarios.iter().zip(results) {
        let c = match r {
            Ok(out) => {
                match &out.status {
                    RunStatus::Ok => println!("{}: ok -> {}", s.config.name, out.out_dir.display()),
                    RunStatus::Fall { time_s } => {
                        println!("{}: fall at t = {time_s:.3} s -> {}", s.config.name, out.out_dir.display())
                    }
                    RunStatus::Fault { time_s, message } => println!(
                        "{}: fault at t = {time_s:.3} s: {message} -> {}",
                        s.config.name,
                        out.out_dir.display()
                    ),
                }
                out.status.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        };
        code = code.max(c);
    }
    ExitCode::from(code as u8)
}

fn load_model(path: Option<&Path>) -> Result<RobotModel, HarnessError> {
    let Some(p) = path else { return Ok(RobotModel::default()) };
    let text = std::fs::read_to_string(p).map_err(|e| HarnessError::config(p, vec![e.to_string()]))?;
    let cfg: ModelConfig = toml::from_str(&text).map_err(|e| HarnessError::config(p, vec![e.to_string()]))?;
    RobotModel::from_config(&cfg).map_err(|e| HarnessError::config(p, vec![e.to_string()]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Summarize { log } => match summarize(&log) {
            Ok(s) => {
                println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Plotdata { log, channels, model } => {
            let channels: Vec<String> = channels.into_iter().filter(|c| !c.is_empty()).collect();
            let result = load_model(model.as_deref()).and_then(|m| Ok((m, read_log(&log)?)));
            let (model, rows) = match result {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            match plotdata::extract(&model, &rows, &channels) {
                Ok(series) => {
                    print!("{}", plotdata::to_csv(&channels, &series));
                    ExitCode::SUCCESS
                }
                Err(msg) => fail(&HarnessError::config(&log, vec![msg])),
            }
        }
        Command::Design(cmd) => {
            let out = match &cmd {
                DesignCommand::Sweep { budget, mt } => BudgetFile::load(budget).and_then(|f| {
                    design::sweep(&f, mt)
                        .map(|rows| husky_core::design::sweep_to_csv(&rows))
                        .map_err(|m| HarnessError::config(budget, vec![m]))
                }),
                DesignCommand::Report { budget } => BudgetFile::load(budget)
                    .and_then(|f| design::report(&f).map_err(|m| HarnessError::config(budget, vec![m]))),
            };
            match out {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
