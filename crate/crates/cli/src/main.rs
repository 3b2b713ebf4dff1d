use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wwlab::experiments::{run, ExperimentConfig, ExperimentKind, SystemConfig};

/// Environment variable supplying the seed when neither `--seed` nor the
/// config file sets one.
const SEED_ENV: &str = "WWLAB_SEED";

#[derive(Parser)]
#[command(
    name = "wwlab",
    version,
    about = "Wiener-Wintner averages, recurrence bounds and seminorm probes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decay series of a higher-order Wiener-Wintner average with a power-type fit.
    WwDecay(Common),
    /// Multiple-recurrence bound with its explicit constant.
    BourgainCheck(Common),
    /// Van der Corput inequalities on random sequences.
    VdcCheck(Common),
    /// Finite-H seminorms next to Wiener-Wintner quantities.
    Seminorm(Common),
    /// Return-times averages for a fixed base point.
    ReturnTimes(Common),
    /// Two-function return-times chain bound.
    RtChain(Common),
    /// Power lemma, maximal inequality and Hölder checks.
    ClassicalCheck(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rotation:<angle>, skew:<dim>:<angle>, bernoulli:<p0,p1,..>, or A*B.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    order: Option<usize>,
    /// Comma-separated lengths.
    #[arg(long = "Ns", value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Falls back to the config file, then to $WWLAB_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    oversample: Option<usize>,
    /// Output directory for results.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => Ok(Some(
            s.trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={s} is not a u64"))?,
        )),
        Err(_) => Ok(None),
    }
}

fn build_config(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ExperimentConfig::from_toml(&src).with_context(|| format!("in {}", path.display()))?;
            if cfg.experiment != kind {
                bail!(
                    "{} describes a `{}` experiment, not `{}`",
                    path.display(),
                    cfg.experiment.name(),
                    kind.name()
                );
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(s) = &c.system {
        cfg.system = Some(s.parse::<SystemConfig>()?);
    }
    if c.order.is_some() {
        cfg.order = c.order;
    }
    if let Some(ns) = &c.ns {
        cfg.ns = Some(ns.clone());
        cfg.n_grid = None;
    }
    if c.p.is_some() {
        cfg.p = c.p;
    }
    if c.beta.is_some() {
        cfg.beta = c.beta;
    }
    if c.samples.is_some() {
        cfg.samples = c.samples;
    }
    if c.oversample.is_some() {
        cfg.oversample = c.oversample;
    }
    if c.threads.is_some() {
        cfg.threads = c.threads;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.display().to_string());
    }
    cfg.seed = match (c.seed, cfg.seed) {
        (Some(s), _) => Some(s),
        (None, Some(s)) => Some(s),
        (None, None) => env_seed()?,
    };
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.cmd {
        Cmd::WwDecay(c) => (ExperimentKind::WwDecay, c),
        Cmd::BourgainCheck(c) => (ExperimentKind::Bourgain, c),
        Cmd::VdcCheck(c) => (ExperimentKind::Vdc, c),
        Cmd::Seminorm(c) => (ExperimentKind::Seminorm, c),
        Cmd::ReturnTimes(c) => (ExperimentKind::ReturnTimes, c),
        Cmd::RtChain(c) => (ExperimentKind::RtChain, c),
        Cmd::ClassicalCheck(c) => (ExperimentKind::Classical, c),
    };
    match execute(kind, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(kind: ExperimentKind, common: &Common) -> Result<()> {
    let cfg = build_config(kind, common)?;
    let out = run(&cfg)?;
    let dir = PathBuf::from(out.summary["config"]["out"].as_str().unwrap_or("wwlab-out"));
    let (csv, json) = out.write(&dir)?;
    println!("wrote {} and {}", csv.display(), json.display());
    let results = &out.summary["results"];
    if let Some(fit) = results.get("fit").filter(|f| f.get("slope").is_some()) {
        println!("decay slope {} (r2 {})", fit["slope"], fit["r2"]);
    }
    if let Some(t) = results.get("tally") {
        println!(
            "checks: {} pass, {} conservative, {} fail",
            t["pass"], t["conservative"], t["fail"]
        );
    }
    if let (Some(p), Some(f)) = (results.get("pass"), results.get("fail")) {
        println!("trials: {p} pass, {f} fail");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_and_seed_precedence() {
        let c = Common {
            system: Some("rotation:golden".into()),
            ns: Some(vec![16, 32]),
            seed: Some(5),
            ..Default::default()
        };
        let cfg = build_config(ExperimentKind::WwDecay, &c).unwrap();
        assert_eq!(cfg.seed, Some(5));
        assert_eq!(cfg.ns, Some(vec![16, 32]));
        assert!(cfg.system.is_some());
    }

    #[test]
    fn cli_parses_ns_list() {
        let cli = Cli::try_parse_from(["wwlab", "ww-decay", "--Ns", "256,512,1024", "--p", "1"]).unwrap();
        match cli.cmd {
            Cmd::WwDecay(c) => {
                assert_eq!(c.ns, Some(vec![256, 512, 1024]));
                assert_eq!(c.p, Some(1));
            }
            _ => panic!(),
        }
    }
}
