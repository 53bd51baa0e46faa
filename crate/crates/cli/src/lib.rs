//! Command-line flags of `sbmlab` and their translation into a settings layer.

use std::path::PathBuf;

use clap::Parser;
use sbmlab::config::{self, Settings};
use sbmlab::Error;

#[derive(Debug, Parser)]
#[command(name = "sbmlab", version, about = "Monte Carlo experiments on super-Brownian local time")]
pub struct Cli {
    /// Experiment to run; see --list.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<String>,
    /// Particles per unit mass.
    #[arg(long)]
    pub particles: Option<String>,
    /// Time step or snapshot spacing.
    #[arg(long)]
    pub dt: Option<String>,
    /// Local-time bin width.
    #[arg(long)]
    pub bin_width: Option<String>,
    /// Replicate count.
    #[arg(long)]
    pub replicates: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; never changes any output.
    #[arg(long)]
    pub workers: Option<String>,
    /// Flat `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Repeat the run recorded in this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Any other setting, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the experiment catalog and exit.
    #[arg(long)]
    pub list: bool,
    /// Print the default settings of an experiment and exit.
    #[arg(long, value_name = "NAME")]
    pub defaults: Option<String>,
}

impl Cli {
    pub fn flags(&self) -> Result<Settings, Error> {
        let mut s = Settings::new();
        let named = [
            ("experiment", &self.experiment),
            ("seed", &self.seed),
            ("particles", &self.particles),
            ("dt", &self.dt),
            ("bin_width", &self.bin_width),
            ("replicates", &self.replicates),
            ("workers", &self.workers),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                s.insert(k.to_string(), v.trim().to_string());
            }
        }
        if let Some(out) = &self.out {
            s.insert("out".into(), out.display().to_string());
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            let mut line = config::parse_config(&format!("{k} = {v}"))?;
            s.append(&mut line);
        }
        Ok(s)
    }
}
