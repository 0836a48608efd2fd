use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nsfde_cli::config::LedgerSection;
use nsfde_cli::{load_config, run_config, Example5Params, Experiment, ExperimentConfig, EXIT_ERROR};
use nsfde_core::model::ExampleConstants;

const CSV_HELP: &str = "\
Artifacts (all in the output directory):
  report.json                 verdict, constants, estimates and fitted rates
  second_moment.csv           t, estimate, stderr, bound, pass   (E|x(t)|^2)
  segment_norm.csv            t, estimate, stderr, bound, pass   (E||x_t||_r^2)
  coupling_running_sup.csv    t, estimate, stderr, bound, pass   (E sup_{s<=t} |x-y|^2)
  coupling_segment_norm.csv   t, estimate, stderr, bound, pass   (E||x_t-y_t||_r^2)
  coupling_envelope.csv       t, estimate, stderr                (trailing-window sup)
  distribution.csv            t, cross_dl, noise_floor
  order.csv                   h, rms_error
  path_0.csv                  t, x_1, .., x_d

Exit codes: 0 all checks pass, 2 a bound or hypothesis was violated,
1 configuration or runtime error.";

#[derive(Parser)]
#[command(name = "nsfde", version, about = "Neutral SFDE experiments with fading memory", after_help = CSV_HELP)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "NSFDE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// The built-in scalar example: checks, constants and every simulation.
    Example5 {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.25)]
        r: f64,
        /// Declared drift constants: `stated` or `corrected`.
        #[arg(long, default_value = "stated", value_parser = parse_constants)]
        constants: ExampleConstants,
        #[arg(long, default_value_t = 2000)]
        n_paths: usize,
        #[arg(long, default_value = "example5_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_constants(s: &str) -> Result<ExampleConstants, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn resolve_out(cfg: &ExperimentConfig, config_path: &Path, out: Option<PathBuf>) -> PathBuf {
    if let Some(o) = out {
        return o;
    }
    match &cfg.output_dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => config_path.parent().unwrap_or(Path::new(".")).join(d),
        None => PathBuf::from("out"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot start {k} threads: {e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    }
    let result = match cli.command {
        Command::Run { config, out, seed } => load_config(&config).and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let dir = resolve_out(&cfg, &config, out);
            run_config(&cfg, &dir).map(|o| (o, dir))
        }),
        Command::Example5 { c, eps, rho, r, constants, n_paths, out, seed } => {
            let mut p = Example5Params::new(c, eps, rho, r);
            p.constants = constants;
            p.n_paths = n_paths;
            p.ledger = LedgerSection::default();
            let cfg = ExperimentConfig {
                model: None,
                scheme: None,
                experiment: Experiment::Example5(p),
                master_seed: seed,
                output_dir: None,
            };
            run_config(&cfg, &out).map(|o| (o, out))
        }
    };
    match result {
        Ok((outcome, dir)) => {
            let v = &outcome.verdict;
            for f in &v.findings {
                println!("finding: {f}");
            }
            for f in &v.violations {
                println!("violation: {f}");
            }
            println!("{} -> {}", if v.pass { "PASS" } else { "VIOLATION" }, dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
