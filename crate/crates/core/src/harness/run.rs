//! Single runs, ablations and parameter sweeps written to disk.

use std::path::PathBuf;
use std::str::FromStr;

use super::checkpoint::CheckpointDir;
use super::config::RunConfig;
use super::metrics::CsvSink;
use crate::brhpo::{run_training, RunSummary, Variant};
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";

/// Trains one configuration into `cfg.out_dir`: `config.json`,
/// `metrics.csv` and `checkpoints/`.
pub fn train_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg_path = out.join(CONFIG_FILE);
    std::fs::write(&cfg_path, cfg.to_json()?).map_err(|e| Error::io(&cfg_path, e))?;
    let env = cfg.env_spec()?;
    let mut sink = CsvSink::create(out.join(METRICS_FILE))?;
    let mut ckpt = CheckpointDir::new(out.join("checkpoints"), cfg);
    let (_, summary) = run_training(&cfg.brhpo, &env, cfg.seed, &cfg.train_options(), &mut sink, &mut ckpt)?;
    Ok(summary)
}

/// Copy of `base` running `variant`.
pub fn ablation_config(base: &RunConfig, variant: Variant) -> RunConfig {
    let mut c = base.clone();
    c.brhpo.variant = variant;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda1,
    Lambda2,
    Metric,
    K,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda1" => Ok(SweepParam::Lambda1),
            "lambda2" => Ok(SweepParam::Lambda2),
            "metric" => Ok(SweepParam::Metric),
            "k" => Ok(SweepParam::K),
            _ => Err(Error::config("sweep.param", format!("expected lambda1, lambda2, metric or k, got {s:?}"))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda1 => "lambda1",
            SweepParam::Lambda2 => "lambda2",
            SweepParam::Metric => "metric",
            SweepParam::K => "k",
        }
    }

    /// Sets this parameter on `cfg` from its textual value.
    pub fn apply(self, cfg: &mut RunConfig, value: &str) -> Result<()> {
        let key = format!("brhpo.{}", self.name());
        let bad = |e: String| Error::config(&key, e);
        let b = &mut cfg.brhpo;
        match self {
            SweepParam::Lambda1 => b.lambda1 = value.parse().map_err(|e| bad(format!("{value:?}: {e}")))?,
            SweepParam::Lambda2 => b.lambda2 = value.parse().map_err(|e| bad(format!("{value:?}: {e}")))?,
            SweepParam::Metric => b.metric = value.parse()?,
            SweepParam::K => b.k = value.parse().map_err(|e| bad(format!("{value:?}: {e}")))?,
        }
        Ok(())
    }
}

/// One configuration per value, each with its own output directory
/// `<base out>/<param>=<value>`.
pub fn sweep_configs(base: &RunConfig, param: SweepParam, values: &[String]) -> Result<Vec<RunConfig>> {
    if values.is_empty() {
        return Err(Error::config("sweep.values", "need at least one value"));
    }
    values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            param.apply(&mut c, v)?;
            c.out_dir = base.out_dir.join(format!("{}={}", param.name(), v));
            c.validate()?;
            Ok(c)
        })
        .collect()
}

/// Runs `configs` on up to `jobs` threads; results come back in input order.
pub fn run_many(configs: &[RunConfig], jobs: usize) -> Vec<(PathBuf, Result<RunSummary>)> {
    let jobs = jobs.max(1);
    let mut out: Vec<Option<Result<RunSummary>>> = (0..configs.len()).map(|_| None).collect();
    for (chunk_cfgs, chunk_out) in configs.chunks(jobs).zip(out.chunks_mut(jobs)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_cfgs.iter().map(|c| s.spawn(move || train_run(c))).collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(Error::contract("training thread panicked"))));
            }
        });
    }
    configs
        .iter()
        .zip(out)
        .map(|(c, r)| (c.out_dir.clone(), r.expect("every run finishes")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{DistanceMetric, EnvName};
    use crate::harness::metrics::{read_metrics, METRICS_HEADER};

    fn tiny(out: PathBuf) -> RunConfig {
        let mut c = RunConfig::defaults(EnvName::PointSparse);
        for s in [&mut c.brhpo.high, &mut c.brhpo.low] {
            s.hidden = vec![8, 8];
            s.batch_size = 8;
        }
        c.brhpo.start_steps = 200;
        c.total_steps = 600;
        c.eval_interval = 250;
        c.eval_episodes = 2;
        c.checkpoint_interval = 300;
        c.out_dir = out;
        c
    }

    #[test]
    fn train_run_writes_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path().join("run"));
        let s = train_run(&cfg).unwrap();
        assert_eq!(s.env_steps, 600);
        let text = std::fs::read_to_string(cfg.out_dir.join(METRICS_FILE)).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        let rows = read_metrics(&cfg.out_dir.join(METRICS_FILE)).unwrap();
        assert_eq!(rows.iter().map(|r| r.env_step).collect::<Vec<_>>(), vec![250, 500, 600]);
        for sub in ["step_000000300", "final"] {
            assert!(cfg.out_dir.join("checkpoints").join(sub).join("manifest.json").exists());
        }
    }

    #[test]
    fn sweep_values_land_in_their_own_dirs() {
        let base = tiny(PathBuf::from("/tmp/sweep"));
        let cs = sweep_configs(&base, SweepParam::Metric, &["L1".into(), "Linf".into()]).unwrap();
        assert_eq!(cs[0].brhpo.metric, DistanceMetric::L1);
        assert_eq!(cs[1].out_dir, PathBuf::from("/tmp/sweep/metric=Linf"));
        let ks = sweep_configs(&base, SweepParam::K, &["5".into()]).unwrap();
        assert_eq!(ks[0].brhpo.k, 5);
        assert!(sweep_configs(&base, SweepParam::K, &["five".into()]).is_err());
        assert!(sweep_configs(&base, SweepParam::K, &[]).is_err());
        assert!("gamma".parse::<SweepParam>().is_err());
        assert_eq!(ablation_config(&base, Variant::Vanilla).brhpo.effective_lambda1(), 0.0);
    }

    #[test]
    fn concurrent_runs_match_sequential_ones() {
        let dir = tempfile::tempdir().unwrap();
        let a = tiny(dir.path().join("a"));
        let mut b = tiny(dir.path().join("b"));
        b.seed = 1;
        let res = run_many(&[a.clone(), b.clone()], 2);
        assert!(res.iter().all(|(_, r)| r.is_ok()));
        let first = std::fs::read(a.out_dir.join(METRICS_FILE)).unwrap();
        let mut again = a.clone();
        again.out_dir = dir.path().join("a2");
        train_run(&again).unwrap();
        assert_eq!(first, std::fs::read(again.out_dir.join(METRICS_FILE)).unwrap());
    }
}
