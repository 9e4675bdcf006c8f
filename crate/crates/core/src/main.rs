use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mdfem::anchored::Fault;
use mdfem::cli;
use mdfem::config;

#[derive(Parser)]
#[command(name = "mdfem", version, about = "Decomposition finite element estimator for random diffusion problems")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// Config file, or builtin:<name> (randomized, halves, deterministic, comparison, wavelet).
    #[arg(long, global = true, default_value = "builtin:randomized")]
    config: String,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for cached generating vectors.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Output file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated accuracies replacing run.epsilon.
    #[arg(long, global = true)]
    epsilon: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print active sets, mesh widths and point counts.
    Plan,
    /// Run the estimator once per epsilon.
    Run,
    /// Error-versus-cost sweep against the tensor Gauss reference, as CSV.
    Study,
    /// Single-level baseline per epsilon, as CSV.
    Baseline,
    /// Invariant checks.
    Validate {
        /// Flip one inclusion-exclusion sign to confirm the checks can fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(args: Args) -> mdfem::Result<()> {
    let mut map = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        map.set("run.seed", &seed.to_string())?;
    }
    if let Some(eps) = &args.epsilon {
        map.set("run.epsilon", eps)?;
    }
    let cfg = map.build()?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| mdfem::Error::Config(format!("thread pool: {e}")))?;
    }
    let rules = cli::rule_source(&cfg, cli::cache_dir(args.cache, &cfg));
    let out_path = args.out.or_else(|| matches!(args.cmd, Cmd::Study).then(|| cfg.csv.clone()).flatten());
    let mut out: Box<dyn Write> = match &out_path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    match args.cmd {
        Cmd::Plan => cli::cmd_plan(&cfg, &mut out).map(|_| ()),
        Cmd::Run => cli::cmd_run(&cfg, &rules, &mut out).map(|_| ()),
        Cmd::Study => cli::cmd_study(&cfg, &rules, &mut out).map(|_| ()),
        Cmd::Baseline => cli::cmd_baseline(&cfg, &rules, &mut out),
        Cmd::Validate { inject_fault } => {
            let fault = if inject_fault { Fault::FlipSign } else { Fault::None };
            cli::cmd_validate(&cfg, &rules, fault, &mut out)
        }
    }?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdfem: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
