use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use robust_anc::analysis::{complexity_count, TheoryReport};
use robust_anc::harness::{self, ExperimentConfig, ExperimentResult, SweepParam};
use robust_anc::noise::derive_seed;
use robust_anc::paths::{identify_secondary, PathModel};
use robust_anc::AlgorithmKind;

/// Monte Carlo harness for filtered-x active noise control experiments.
#[derive(Parser)]
#[command(name = "anc-harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV, theory and manifest files.
    Run {
        /// TOML config path, or a preset name (`scenario1`, `scenario2`).
        config: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one experiment per parameter value.
    Sweep {
        config: String,
        /// p, alpha, eta, zeta, rho, mu, snr_db or alpha_s.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        values: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Identify the secondary path and write the tap file.
    Identify {
        config: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Per-iteration operation counts of every algorithm.
    Complexity {
        /// Adaptive filter length.
        #[arg(long = "L", alias = "l", default_value_t = 16)]
        l: u64,
        /// Secondary-path estimate length.
        #[arg(long = "M", alias = "m", default_value_t = 7)]
        m: u64,
        /// Integer kernel exponent.
        #[arg(long, default_value_t = 2)]
        p: u64,
    },
    /// Compare the steady-state prediction with the simulated MSE of a run.
    Theory {
        /// Directory written by `run`.
        result_dir: PathBuf,
    },
}

#[derive(Args, Default)]
struct Overrides {
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(spec: &str, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = if Path::new(spec).exists() {
        ExperimentConfig::load(Path::new(spec)).with_context(|| format!("loading {spec}"))?
    } else {
        harness::preset(spec).with_context(|| format!("`{spec}` is neither a file nor a preset"))?
    };
    if let Some(s) = o.seed {
        cfg.seed_base = s;
    }
    if let Some(t) = o.trials {
        cfg.n_trials = t;
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_db(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.2}"))
}

fn print_summary(res: &ExperimentResult) {
    println!(
        "{}: {} trials x {} iterations, sigma_v(trial 0) = {:.4e}, realized SNR = {} dB, {:.2} s",
        res.config.scenario,
        res.config.n_trials,
        res.config.n_iters,
        res.sigma_v.first().copied().unwrap_or(0.0),
        fmt_db(res.realized_snr_db),
        res.wall_clock.as_secs_f64()
    );
    if let Some(m) = res.identification_misalignment {
        println!("secondary-path misalignment: {m:.3e}");
    }
    println!(
        "{:<8} {:>12} {:>12} {:>10}",
        "algo", "MSE (dB)", "ANR (dB)", "diverged"
    );
    for a in &res.algorithms {
        println!(
            "{:<8} {:>12} {:>12} {:>10}",
            a.name(),
            fmt_db(a.mse_plateau()),
            fmt_db(a.anr_plateau()),
            a.diverged_count()
        );
    }
    if let Some(t) = &res.theory {
        print_theory(t);
    }
}

fn print_theory(t: &TheoryReport) {
    println!(
        "theory: Phi = {:.4}, lambda_max = {:.4e}, mu = {}, mu_hi = {}, J(inf) = {} dB, simulated = {} dB",
        t.phi_gain,
        t.lambda_max,
        t.mu,
        t.mu_hi.map_or_else(|| "n/a".into(), |v| format!("{v:.4}")),
        fmt_db(t.j_inf_db()),
        fmt_db(t.simulated_mse_db)
    );
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let res = harness::run_experiment(&cfg)?;
            harness::emit_csv(&res, &cfg.output_dir)?;
            print_summary(&res);
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Sweep {
            config,
            param,
            values,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let param: SweepParam = param.parse()?;
            let results = harness::sweep(&cfg, param, &values)?;
            harness::emit_sweep(&cfg, param, &values, &results, &cfg.output_dir)?;
            for (v, r) in values.iter().zip(&results) {
                println!("== {} = {v}", param.name());
                print_summary(r);
            }
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Identify { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let secondary = PathModel::from_taps(cfg.paths.secondary.clone())?;
            let id = identify_secondary(
                &secondary,
                &cfg.paths.identification,
                derive_seed(cfg.seed_base, harness::IDENT_STREAM),
            )?;
            fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("secondary_estimate.txt");
            id.estimate.save(&path)?;
            println!("misalignment: {:.3e}", id.estimate.misalignment(&secondary));
            println!("wrote {}", path.display());
        }
        Command::Complexity { l, m, p } => {
            println!("L = {l}, M = {m}, p = {p}");
            println!(
                "{:<8} {:>6} {:>6} {:>6} {:>10}",
                "algo", "mults", "divs", "adds", "nonlinear"
            );
            for kind in AlgorithmKind::ALL {
                let c = complexity_count(kind, l, m, p)?;
                println!(
                    "{:<8} {:>6} {:>6} {:>6} {:>10}",
                    kind.name(),
                    c.mults,
                    c.divs,
                    c.adds,
                    c.nonlinear
                );
            }
        }
        Command::Theory { result_dir } => {
            let path = result_dir.join("theory.txt");
            let text =
                fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let report = TheoryReport::from_text(&text).map_err(anyhow::Error::msg)?;
            print_theory(&report);
            match (report.j_inf_db(), report.simulated_mse_db) {
                (Some(j), Some(s)) => println!("difference: {:.3} dB", s - j),
                _ => bail!("theory or simulated MSE unavailable"),
            }
        }
    }
    Ok(())
}
