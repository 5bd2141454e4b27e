use clap::Parser;
use fracwave::error::Error;
use fracwave::harness::{exit_code, run, ExperimentConfig, Selector, CACHE_ENV};
use std::path::PathBuf;

/// Run one experiment and write its tables and manifest.
#[derive(Parser, Debug)]
#[command(name = "fracwave", version)]
struct Cli {
    /// forward-check | dn-identities | runge-sweep | stability-sweep | instability-1d | cs-trace | net-budget
    selector: String,
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overridden by the FRACWAVE_CACHE environment variable.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn configure(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let selector: Selector = cli.selector.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.selector = selector;
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(d) = &cli.cache_dir {
        cfg.cache_dir = Some(d.clone());
    }
    if let Some(d) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        cfg.cache_dir = Some(PathBuf::from(d));
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() {
    let cli = Cli::parse();
    let outcome = configure(&cli).and_then(|cfg| run(&cfg));
    match &outcome {
        Ok(m) => {
            for c in &m.checks {
                println!("{} {} = {:e} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
            }
            for s in &m.stages {
                println!("stage {} {:.3}s{}", s.name, s.seconds, if s.cached { " (cached)" } else { "" });
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    std::process::exit(exit_code(&outcome));
}
