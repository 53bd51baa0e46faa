//! Named experiments, their settings and the run artifacts they leave.
//!
//! Every experiment reads its settings from one flat map whose defaults are
//! listed in [`Experiment::defaults`]. Replicate `i` always draws from stream
//! `i` of a tagged family and results are merged in replicate order, so the
//! worker count never changes an output byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{self, Settings};
use crate::engine::exact::LeapPolicy;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::table::Table;
use crate::verdict::{overall, Outcome, Verdict};

mod boundary;
mod clusters;
mod exit;
mod mass;
mod occupation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    Extinction,
    MeanLocaltime,
    Tanaka,
    Qvar,
    ExitLaw,
    CsbpLaw,
    TwoSimAgreement,
    Pde,
    Exponent,
    Oscillation,
    Envelope,
    ClusterTail,
    Superposition,
    RangeInterval,
}

/// Settings that steer a run without entering its results.
pub const RUN_KEYS: [&str; 3] = ["experiment", "out", "workers"];

const PROFILE_DEFAULTS: [(&str, &str); 8] = [
    ("seed", "1"),
    ("particles", "10000"),
    ("bin_width", "0.02"),
    ("dt", "1e-4"),
    ("t_max", "1000"),
    ("kappa", "6.5"),
    ("replicates", "200"),
    ("max_attempts", "4"),
];

impl Experiment {
    pub const ALL: [Experiment; 14] = [
        Experiment::Extinction,
        Experiment::MeanLocaltime,
        Experiment::Tanaka,
        Experiment::Qvar,
        Experiment::ExitLaw,
        Experiment::CsbpLaw,
        Experiment::TwoSimAgreement,
        Experiment::Pde,
        Experiment::Exponent,
        Experiment::Oscillation,
        Experiment::Envelope,
        Experiment::ClusterTail,
        Experiment::Superposition,
        Experiment::RangeInterval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Extinction => "extinction",
            Experiment::MeanLocaltime => "mean-localtime",
            Experiment::Tanaka => "tanaka",
            Experiment::Qvar => "qvar",
            Experiment::ExitLaw => "exit-law",
            Experiment::CsbpLaw => "csbp-law",
            Experiment::TwoSimAgreement => "two-sim-agreement",
            Experiment::Pde => "pde",
            Experiment::Exponent => "exponent",
            Experiment::Oscillation => "oscillation",
            Experiment::Envelope => "envelope",
            Experiment::ClusterTail => "cluster-tail",
            Experiment::Superposition => "superposition",
            Experiment::RangeInterval => "range-interval",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::UnknownExperiment(name.to_string()))
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Extinction => "total mass stays critical and the extinction time has the exact law",
            Experiment::MeanLocaltime => "mean local time against the heat-kernel integral",
            Experiment::Tanaka => "first two moments of the Tanaka martingale",
            Experiment::Qvar => "grid-aligned quadratic-variation bookkeeping identity",
            Experiment::ExitLaw => "zero mass and unit mean of the exit measure on a level ladder",
            Experiment::CsbpLaw => "Laplace transform of the continuous-state branching process in the level",
            Experiment::TwoSimAgreement => "particle ladder against the Levy-driven process, two-sample KS",
            Experiment::Pde => "shooting solution of the exit equation against its closed form",
            Experiment::Exponent => "Holder exponent of local time at the edge of the range",
            Experiment::Oscillation => "dyadic oscillation ladder near the right edge",
            Experiment::Envelope => "explicit upper and lower power envelopes near the edge",
            Experiment::ClusterTail => "single-ancestor reach probability scaled by N",
            Experiment::Superposition => "full-process reach probability from the cluster rate",
            Experiment::RangeInterval => "the positive set of local time has no interior gaps",
        }
    }

    /// The statement each experiment exercises.
    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::Extinction => "E X_t(1) = 1; P(zeta <= t) = exp(-2/t)",
            Experiment::MeanLocaltime => "E L_t^x = q_t(x) = int_0^t p_s(x) ds",
            Experiment::Tanaka => "L_t^x + |x| = X_t(g_x) - M_t(g_x), E M^2 = t^2/2 + x^2 t",
            Experiment::Qvar => "<M(phi)>_t = int_0^t X_s(phi^2) ds",
            Experiment::ExitLaw => "E exp(-lambda Y_r) = exp(-6 (r + sqrt(6/lambda))^-2)",
            Experiment::CsbpLaw => "psi(u) = sqrt(2/3) u^(3/2), u_r(lambda) = 6 (r + sqrt(6/lambda))^-2",
            Experiment::TwoSimAgreement => "Y_r from particles and from the Lamperti SDE agree in law",
            Experiment::Pde => "U'' = U^2, U(r) = lambda, solution 6 (r - x + sqrt(6/lambda))^-2",
            Experiment::Exponent => "L^x is locally 3-Holder at L and R and no better",
            Experiment::Oscillation => "|L^x - L^y| <= 2^(-xi N) for x near R, |y - x| <= 2^-N",
            Experiment::Envelope => "2^(-gamma/2) (R - x)^gamma <= L^x <= 2^gamma (R - x)^gamma",
            Experiment::ClusterTail => "N_0(R > r) = 6 / r^2",
            Experiment::Superposition => "P(R > r) = 1 - exp(-N_0(R > r))",
            Experiment::RangeInterval => "{x : L^x > 0} = (L, R)",
        }
    }

    /// Every setting the experiment reads, with its default.
    pub fn defaults(self) -> Vec<(&'static str, &'static str)> {
        let mut d: Vec<(&str, &str)> = match self {
            Experiment::Extinction => vec![
                ("seed", "1"),
                ("particles", "2000"),
                ("dt", "5e-5"),
                ("replicates", "10000"),
                ("times", "1,2,4"),
                ("mass_time", "1"),
                ("tol.abs", "0.02"),
                ("tol.z", "3"),
            ],
            Experiment::MeanLocaltime => vec![
                ("seed", "1"),
                ("particles", "100"),
                ("dt", "1e-3"),
                ("bin_width", "0.05"),
                ("replicates", "2000"),
                ("t", "1"),
                ("x", "0,0.5,1"),
                ("tol.rel", "0.05"),
                ("tol.z", "3"),
            ],
            Experiment::Tanaka => vec![
                ("seed", "1"),
                ("particles", "100"),
                ("dt", "1e-3"),
                ("bin_width", "0.05"),
                ("replicates", "10000"),
                ("t", "1"),
                ("x", "0.5"),
                ("tol.second_moment", "0.1"),
                ("tol.z", "3"),
            ],
            Experiment::Qvar => vec![
                ("seed", "1"),
                ("particles", "100"),
                ("dt", "1e-3"),
                ("bin_width", "0.05"),
                ("replicates", "200"),
                ("t", "1"),
                ("interval", "-0.5,0.5"),
                ("tol.residual", "1e-12"),
            ],
            Experiment::ExitLaw => vec![
                ("seed", "1"),
                ("particles", "4000"),
                ("replicates", "10000"),
                ("y0", "1"),
                ("levels", "1,2,3"),
                ("check_levels", "2,3"),
                ("t_max", "1e6"),
                ("kappa", "6.5"),
                ("tol.zero", "0.02"),
                ("tol.z", "3"),
            ],
            Experiment::CsbpLaw => vec![
                ("seed", "1"),
                ("replicates", "100000"),
                ("y0", "1"),
                ("dr", "0.002"),
                ("levels", "0.5,1,2"),
                ("lambdas", "1,6,24"),
                ("tol.laplace", "0.02"),
            ],
            Experiment::TwoSimAgreement => vec![
                ("seed", "1"),
                ("particles", "4000"),
                ("replicates", "10000"),
                ("y0", "1"),
                ("levels", "1,2"),
                ("dr", "0.002"),
                ("t_max", "1e6"),
                ("kappa", "6.5"),
                ("tol.alpha", "0.01"),
            ],
            Experiment::Pde => vec![
                ("lambda", "6"),
                ("r", "1"),
                ("x_min", "-5"),
                ("solver_tol", "1e-12"),
                ("tol.sup", "1e-6"),
                ("tol.runtime", "1"),
            ],
            Experiment::Exponent => {
                let mut v = PROFILE_DEFAULTS.to_vec();
                v.extend([
                    ("right_window", "0.36"),
                    ("window", "0.04,0.3"),
                    ("gamma_range", "2.3,3.7"),
                    ("derivative_range", "1.3,2.7"),
                    ("trend", "true"),
                    ("trend_particles", "40000"),
                    ("trend_bin_width", "0.01"),
                    ("trend_dt", "2.5e-5"),
                    ("trend_right_window", "0.33"),
                    ("tol.synthetic", "1e-3"),
                ]);
                v
            }
            Experiment::Oscillation => {
                let mut v = PROFILE_DEFAULTS.to_vec();
                v.retain(|(k, _)| *k != "replicates");
                v.extend([
                    ("replicates", "50"),
                    ("right_window", "0.55"),
                    ("scales", "2,4"),
                    ("floor", "0"),
                    ("tol.synthetic_xi", "2.9"),
                ]);
                v
            }
            Experiment::Envelope => {
                let mut v = PROFILE_DEFAULTS.to_vec();
                v.extend([
                    ("right_window", "0.36"),
                    ("d_max", "0.25"),
                    ("gamma_upper", "2.5"),
                    ("gamma_lower", "3.5"),
                    ("tol.fraction", "0.9"),
                ]);
                v
            }
            Experiment::ClusterTail => vec![
                ("seed", "1"),
                ("particles", "10000"),
                ("replicates", "5000000"),
                ("levels", "1"),
                ("t_max", "1e6"),
                ("kappa", "6.5"),
                ("tol.rel", "0.15"),
            ],
            Experiment::Superposition => vec![
                ("seed", "1"),
                ("particles", "4000"),
                ("replicates", "4000"),
                ("cluster_replicates", "4000000"),
                ("levels", "2,10"),
                ("t_max", "1e6"),
                ("kappa", "6.5"),
                ("tol.abs", "0.03"),
            ],
            Experiment::RangeInterval => vec![
                ("seed", "1"),
                ("particles", "2000"),
                ("bin_width", "0.02"),
                ("dt", "2.5e-5"),
                ("t_max", "4"),
                ("replicates", "200"),
                ("max_attempts", "3"),
                ("tol.fraction", "0.01"),
            ],
        };
        d.sort_by_key(|(k, _)| *k);
        d
    }

    pub fn keys(self) -> Vec<&'static str> {
        self.defaults().into_iter().map(|(k, _)| k).collect()
    }
}

/// One catalog line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub anchor: &'static str,
}

pub fn list_experiments() -> Vec<CatalogEntry> {
    Experiment::ALL
        .into_iter()
        .map(|e| CatalogEntry {
            name: e.name(),
            description: e.description(),
            anchor: e.anchor(),
        })
        .collect()
}

/// Resolves setting layers in increasing precedence: `files` in order,
/// then `SBMLAB_*` variables from `env`, then `flags`.
pub fn resolve_layers(
    files: Vec<Settings>,
    env: impl IntoIterator<Item = (String, String)>,
    flags: Settings,
) -> Result<ExperimentSpec> {
    let env: Vec<(String, String)> = env.into_iter().collect();
    let run_env = config::env_overrides(RUN_KEYS, env.iter().cloned());
    let name = [&flags, &run_env]
        .into_iter()
        .chain(files.iter().rev())
        .find_map(|l| l.get("experiment"))
        .ok_or_else(|| Error::config("no experiment given"))?;
    let experiment = Experiment::parse(name)?;
    let keys = experiment.keys().into_iter().chain(RUN_KEYS);
    let mut layers = files;
    layers.push(config::env_overrides(keys, env));
    layers.push(flags);
    ExperimentSpec::resolve(&layers)
}

/// A fully resolved experiment request.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    /// Every setting the experiment reads, defaults filled in.
    pub settings: Settings,
    pub out: PathBuf,
    pub workers: usize,
}

impl ExperimentSpec {
    /// Merges `layers`, later ones winning, over the experiment defaults.
    /// Keys the experiment does not read are rejected.
    pub fn resolve(layers: &[Settings]) -> Result<Self> {
        let pick = |key: &str| layers.iter().rev().find_map(|l| l.get(key)).cloned();
        let name = pick("experiment").ok_or_else(|| Error::config("no experiment given"))?;
        let experiment = Experiment::parse(&name)?;
        let mut settings: Settings = experiment
            .defaults()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        for layer in layers {
            for (k, v) in layer {
                if RUN_KEYS.contains(&k.as_str()) {
                    continue;
                }
                match settings.get_mut(k) {
                    Some(slot) => *slot = v.clone(),
                    None => {
                        return Err(Error::config(format!(
                            "experiment {} has no setting `{k}`",
                            experiment.name()
                        )))
                    }
                }
            }
        }
        let out = PathBuf::from(pick("out").unwrap_or_else(|| "out".to_string()));
        let workers = match pick("workers") {
            Some(w) => config::parse_u64("workers", &w)? as usize,
            None => 1,
        };
        if workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        let spec = Self {
            experiment,
            settings,
            out,
            workers,
        };
        if spec.settings.contains_key("replicates") && spec.u64("replicates")? == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        Ok(spec)
    }

    /// Spec for `experiment` with defaults, except for `overrides`.
    pub fn with_overrides(experiment: Experiment, overrides: &[(&str, &str)]) -> Result<Self> {
        let mut s: Settings = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        s.insert("experiment".into(), experiment.name().into());
        Self::resolve(&[s])
    }

    /// Settings layer from a manifest written by an earlier run.
    pub fn from_manifest(path: &Path) -> Result<Settings> {
        Ok(Manifest::read(path)?.settings())
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.settings
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::config(format!("missing setting `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        config::parse_f64(key, self.raw(key)?)
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        let x = self.f64(key)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::config(format!("`{key}` must be positive, got {x}")));
        }
        Ok(x)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        config::parse_u64(key, self.raw(key)?)
    }

    pub fn count(&self, key: &str) -> Result<u64> {
        let n = self.u64(key)?;
        if n == 0 {
            return Err(Error::config(format!("`{key}` must be at least 1")));
        }
        Ok(n)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        config::parse_bool(key, self.raw(key)?)
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        config::parse_list(key, self.raw(key)?)
    }

    /// A two-number list `lo,hi` with `lo < hi`.
    pub fn range(&self, key: &str) -> Result<(f64, f64)> {
        match self.list(key)?.as_slice() {
            &[lo, hi] if lo < hi => Ok((lo, hi)),
            v => Err(Error::config(format!("`{key}` must be `lo,hi` with lo < hi, got {v:?}"))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    pub fn leap(&self) -> Result<LeapPolicy> {
        Ok(LeapPolicy {
            kappa: self.positive("kappa")?,
            ..LeapPolicy::default()
        })
    }

    /// Table file name for this experiment.
    pub fn table_file(&self, table: &str) -> String {
        format!("{}_{table}.csv", self.experiment.name())
    }
}

/// What an experiment hands back before anything is written.
#[derive(Debug, Default)]
pub struct Outputs {
    pub tables: Vec<(String, Table)>,
    pub verdicts: Vec<Verdict>,
    pub discards: BTreeMap<String, u64>,
}

impl Outputs {
    fn table(&mut self, name: &str, table: Table) {
        self.tables.push((name.to_string(), table));
    }

    fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    fn discard(&mut self, reason: &str, n: u64) {
        if n == 0 {
            return;
        }
        *self.discards.entry(reason.to_string()).or_insert(0) += n;
    }
}

#[derive(Debug)]
pub struct RunArtifact {
    pub manifest: Manifest,
    pub tables: Vec<(String, Table)>,
    pub verdicts: Vec<Verdict>,
}

impl RunArtifact {
    pub fn outcome(&self) -> Outcome {
        overall(&self.verdicts)
    }

    pub fn exit_code(&self) -> i32 {
        match self.outcome() {
            Outcome::Pass => 0,
            Outcome::Fail => 2,
            Outcome::Indeterminate => 3,
        }
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Exit code for a run that stopped with an error.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::UnknownExperiment(_) | Error::InvalidConfig(_) | Error::Parse { .. } | Error::StepTooLarge { .. } => 4,
        Error::Io { .. } => 5,
        _ => 3,
    }
}

/// Runs the experiment on its own thread pool without writing anything.
pub fn execute(spec: &ExperimentSpec) -> Result<(Outputs, f64)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let outputs = pool.install(|| dispatch(spec))?;
    Ok((outputs, start.elapsed().as_secs_f64()))
}

fn dispatch(spec: &ExperimentSpec) -> Result<Outputs> {
    let mut out = Outputs::default();
    match spec.experiment {
        Experiment::Extinction => mass::extinction(spec, &mut out)?,
        Experiment::MeanLocaltime => occupation::mean_localtime(spec, &mut out)?,
        Experiment::Tanaka => occupation::tanaka(spec, &mut out)?,
        Experiment::Qvar => occupation::qvar(spec, &mut out)?,
        Experiment::RangeInterval => occupation::range_interval(spec, &mut out)?,
        Experiment::ExitLaw => exit::exit_law(spec, &mut out)?,
        Experiment::CsbpLaw => exit::csbp_law(spec, &mut out)?,
        Experiment::TwoSimAgreement => exit::two_sim_agreement(spec, &mut out)?,
        Experiment::Pde => exit::pde(spec, &mut out)?,
        Experiment::Exponent => boundary::exponent(spec, &mut out)?,
        Experiment::Oscillation => boundary::oscillation(spec, &mut out)?,
        Experiment::Envelope => boundary::envelope(spec, &mut out)?,
        Experiment::ClusterTail => clusters::cluster_tail(spec, &mut out)?,
        Experiment::Superposition => clusters::superposition(spec, &mut out)?,
    }
    Ok(out)
}

/// Runs the experiment and writes its tables and `manifest.txt` into
/// `spec.out`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunArtifact> {
    let (outputs, wall) = execute(spec)?;
    std::fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;
    let mut files = Vec::new();
    for (name, table) in &outputs.tables {
        let file = spec.table_file(name);
        let path = spec.out.join(&file);
        std::fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
        files.push(file);
    }
    let manifest = Manifest {
        experiment: spec.experiment.name().to_string(),
        spec: spec.settings.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: wall,
        workers: spec.workers,
        discards: outputs.discards,
        tables: files,
        verdicts: outputs.verdicts.clone(),
    };
    manifest.write(&spec.out.join(MANIFEST_FILE))?;
    Ok(RunArtifact {
        manifest,
        tables: outputs.tables,
        verdicts: outputs.verdicts,
    })
}

/// `f(i)` for every replicate, in replicate order.
fn replicate_map<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Outcome of one attempt at a replicate that may be rejected.
enum Attempt<T> {
    Keep(T),
    Discard(&'static str),
}

/// Replicates kept in index order until `needed` are found or
/// `max_attempts` indices are used.
struct Collected<T> {
    kept: Vec<(u64, T)>,
    discards: BTreeMap<&'static str, u64>,
}

/// Batches are a fixed size so the indices examined never depend on the
/// worker count.
const BATCH: u64 = 32;

fn collect_until<T: Send>(needed: u64, max_attempts: u64, f: impl Fn(u64) -> Attempt<T> + Sync + Send) -> Collected<T> {
    let mut c = Collected {
        kept: Vec::new(),
        discards: BTreeMap::new(),
    };
    let mut next = 0;
    while (c.kept.len() as u64) < needed && next < max_attempts {
        let end = (next + BATCH).min(max_attempts);
        let batch: Vec<Attempt<T>> = (next..end).into_par_iter().map(&f).collect();
        for (i, a) in (next..end).zip(batch) {
            if c.kept.len() as u64 >= needed {
                break;
            }
            match a {
                Attempt::Keep(t) => c.kept.push((i, t)),
                Attempt::Discard(why) => *c.discards.entry(why).or_insert(0) += 1,
            }
        }
        next = end;
    }
    c
}

impl<T> Collected<T> {
    fn record(&self, out: &mut Outputs) {
        for (why, n) in &self.discards {
            out.discard(why, *n);
        }
    }
}

/// Sample mean and standard error, in slice order.
fn mean_se(samples: &[f64]) -> (f64, f64) {
    match crate::stats::McSummary::from_samples(samples) {
        Ok(s) => (s.mean, s.std_error),
        Err(_) => (samples.first().copied().unwrap_or(f64::NAN), f64::NAN),
    }
}

#[cfg(test)]
mod tests;
