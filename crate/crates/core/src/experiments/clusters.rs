//! Single-ancestor clusters and their Poisson superposition.

use super::{replicate_map, ExperimentSpec, Outputs};
use crate::clusters::{cluster_tail as tail, superposition_check, superposition_table, tail_table};
use crate::engine::exact::{self, ExitParams};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::verdict::Verdict;

fn levels(spec: &ExperimentSpec) -> Result<Vec<f64>> {
    let v = spec.list("levels")?;
    if v.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::config("levels must be positive"));
    }
    Ok(v)
}

pub(super) fn cluster_tail(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let seed = spec.seed()?;
    let n = spec.count("particles")?;
    let reps = spec.count("replicates")?;
    let (t_max, leap) = (spec.positive("t_max")?, spec.leap()?);
    let tol = spec.positive("tol.rel")?;
    let mut rows = Vec::new();
    for (k, r) in levels(spec)?.into_iter().enumerate() {
        let e = tail(n, r, reps, rng::derive_seed(seed, k as u64), t_max, leap)?;
        out.discard("unsettled_cluster", e.unsettled);
        let target = 6.0 / (r * r);
        out.verdict(Verdict::within(format!("cluster_tail_r{r}"), e.estimate, target, tol * target));
        rows.push(e);
    }
    let mut t = tail_table(&rows);
    t.meta("N", n.to_string());
    out.table("tail", t);
    Ok(())
}

pub(super) fn superposition(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let seed = spec.seed()?;
    let n = spec.count("particles")?;
    let reps = spec.count("replicates")?;
    let cluster_reps = spec.count("cluster_replicates")?;
    let (t_max, leap) = (spec.positive("t_max")?, spec.leap()?);
    let tol = spec.positive("tol.abs")?;
    let levels = levels(spec)?;
    let mut full = Vec::new();
    let mut tails = Vec::new();
    for (k, &r) in levels.iter().enumerate() {
        let params = ExitParams {
            density: n,
            level: r,
            t_max,
            leap,
            stop_at_first: true,
        };
        let fam = rng::derive_seed(seed, k as u64);
        let hits = replicate_map(reps, |i| {
            let mut rng = rng::stream(fam, tag::ABSORBED, i);
            let o = exact::run_exit(0.0, n, &params, &mut rng);
            (o.frozen > 0, o.frozen == 0 && !o.settled)
        });
        out.discard("unsettled_full", hits.iter().filter(|h| h.1).count() as u64);
        full.push((r, hits.iter().filter(|h| h.0).count() as u64, reps));
        let e = tail(n, r, cluster_reps, rng::derive_seed(fam, 1), t_max, leap)?;
        out.discard("unsettled_cluster", e.unsettled);
        tails.push(e);
    }
    let rows = superposition_check(&full, &tails)?;
    for row in &rows {
        let r = row.r;
        out.verdict(Verdict::within(format!("full_vs_cluster_r{r}"), row.full, row.predicted, tol));
        out.verdict(Verdict::within(format!("full_vs_limit_r{r}"), row.full, -(-6.0 / (r * r)).exp_m1(), tol));
    }
    let mut t = superposition_table(&rows);
    t.meta("N", n.to_string());
    out.table("check", t);
    out.table("tail", tail_table(&tails));
    Ok(())
}
