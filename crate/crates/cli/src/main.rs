use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brhpo_core::brhpo::Variant;
use brhpo_core::harness::{
    ablation_config, evaluate, load_checkpoint, parse_config, parse_config_str, run_gradcheck_suite, run_many,
    sweep_configs, train_run, RunConfig, SweepParam,
};
use brhpo_core::oracle::{verify_theorem1, InstanceShape, Tier};
use brhpo_core::{rng, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "brhpo", version, about = "Hierarchical RL with bidirectional subgoal reachability")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Flat JSON config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run.
    Train(RunArgs),
    /// Train with one mechanism variant forced.
    Ablate {
        #[arg(long)]
        variant: VariantArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train one run per parameter value (and per seed).
    Sweep {
        #[arg(long)]
        param: ParamArg,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Seeds to repeat every value with; defaults to the config seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Runs trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check the performance-difference bound on random tabular instances
    /// and print the JSON report.
    VerifyTheory {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = TierArg::Both)]
        tier: TierArg,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare every analytic gradient with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a saved checkpoint with deterministic policies.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Vanilla,
    Noreg,
    Nobonus,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Vanilla => Variant::Vanilla,
            VariantArg::Noreg => Variant::NoReg,
            VariantArg::Nobonus => Variant::NoBonus,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    Lambda1,
    Lambda2,
    Metric,
    K,
}

impl From<ParamArg> for SweepParam {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Lambda1 => SweepParam::Lambda1,
            ParamArg::Lambda2 => SweepParam::Lambda2,
            ParamArg::Metric => SweepParam::Metric,
            ParamArg::K => SweepParam::K,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum TierArg {
    A,
    B,
    Both,
}

/// A failure with its diagnostic code.
struct Failure {
    code: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn load(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => parse_config(p)?,
        None => parse_config_str("{}")?,
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(cfg: &RunConfig) -> CliResult {
    let s = train_run(cfg)?;
    let last = s.rows.last().map(|r| r.to_csv_line()).unwrap_or_default();
    println!("{}: {} steps, {} episodes, final row {}", cfg.out_dir.display(), s.env_steps, s.episodes, last);
    Ok(())
}

fn sweep(param: SweepParam, values: &[String], seeds: &[u64], jobs: usize, base: &RunConfig) -> CliResult {
    let mut cfgs = Vec::new();
    for c in sweep_configs(base, param, values)? {
        if seeds.is_empty() {
            cfgs.push(c);
            continue;
        }
        for &s in seeds {
            let mut cs = c.clone();
            cs.seed = s;
            cs.out_dir = c.out_dir.join(format!("seed={s}"));
            cfgs.push(cs);
        }
    }
    let mut first_err = None;
    for (dir, res) in run_many(&cfgs, jobs) {
        match res {
            Ok(s) => {
                let last = s.rows.last().map(|r| r.to_csv_line()).unwrap_or_default();
                println!("{}: {}", dir.display(), last);
            }
            Err(e) => {
                eprintln!("error[{}]: {}: {e}", e.code(), dir.display());
                first_err.get_or_insert(Failure::from(e));
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| Failure::from(Error::io(path, e)))
}

fn verify_theory(instances: usize, seed: u64, tier: TierArg, report: Option<&Path>) -> CliResult {
    let tiers = match tier {
        TierArg::A => vec![Tier::A],
        TierArg::B => vec![Tier::B],
        TierArg::Both => vec![Tier::A, Tier::B],
    };
    let rep = verify_theorem1(&tiers, &InstanceShape::default(), instances, seed)?;
    let text = serde_json::to_string_pretty(&rep).map_err(|e| Failure::from(Error::json("theory report", e)))?;
    println!("{text}");
    if let Some(p) = report {
        write_text(p, &text)?;
    }
    let failures = rep.failures();
    if failures > 0 {
        return Err(Failure {
            code: "E_THEORY",
            message: format!("{failures} tier A instance(s) violate the bound"),
        });
    }
    Ok(())
}

fn gradcheck(configs: usize, seed: u64) -> CliResult {
    let rep = run_gradcheck_suite(configs, seed)?;
    let text = serde_json::to_string_pretty(&rep).map_err(|e| Failure::from(Error::json("gradcheck report", e)))?;
    println!("{text}");
    let worst = rep.max_error();
    println!("max relative error: {worst:e}");
    if !(worst < 1e-4) {
        return Err(Failure {
            code: "E_GRADCHECK",
            message: format!("max relative error {worst:e} is not below 1e-4"),
        });
    }
    Ok(())
}

fn eval(dir: &Path, episodes: usize, seed: u64) -> CliResult {
    if episodes == 0 {
        return Err(Error::config("eval.episodes", "must be at least 1").into());
    }
    let ck = load_checkpoint(dir)?;
    let env = ck.config.env_spec()?;
    let res = evaluate(&ck.policies, &env, episodes, &mut rng::substream(seed, "eval"))?;
    let text = serde_json::to_string_pretty(&res).map_err(|e| Failure::from(Error::json("eval result", e)))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.cmd {
        Command::Train(args) => train(&load(&args)?),
        Command::Ablate { variant, run } => train(&ablation_config(&load(&run)?, variant.into())),
        Command::Sweep {
            param,
            values,
            seeds,
            jobs,
            run,
        } => sweep(param.into(), &values, &seeds, jobs, &load(&run)?),
        Command::VerifyTheory {
            instances,
            seed,
            tier,
            report,
        } => verify_theory(instances, seed, tier, report.as_deref()),
        Command::Gradcheck { configs, seed } => gradcheck(configs, seed),
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => eval(&checkpoint, episodes, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::FAILURE
        }
    }
}
