//! Event-driven simulation of the continuous-time particle system.
//!
//! Each particle lives for an Exp(N) time, moves as a Brownian motion and
//! then dies or splits in two. Nothing is discretised in time, so these
//! runs carry no step bias.
//!
//! Particles far from anything that matters are advanced a whole family at a
//! time. Over a span `s` a critical binary tree with rate `N` leaves `K`
//! descendants with `P(K = 0) = q`, `P(K = k) = (1−q)²q^{k−1}`,
//! `q = bs/(1+bs)`, `b = N/2`. Given `K`, the reconstructed genealogy is a
//! coalescent point process: consecutive tips merge at iid depths `H` with
//! `P(H > u) = 1/(1+bu)` conditioned on `H < s`. Brownian motion along that
//! tree gives the descendants' positions. A leap is only taken when the
//! family must travel `κ·√s` to matter; by the many-to-one formula the
//! chance that any lineage does so is at most `2Φ̄(κ)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::mass::binomial;
use super::geometric_failures;
use crate::grid::{BinCounts, Grid};

/// When whole families may be advanced at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeapPolicy {
    /// Required clearance in units of `√span`.
    pub kappa: f64,
    /// Shortest leap, in expected lifetimes `1/N`.
    pub min_lifetimes: f64,
}

impl Default for LeapPolicy {
    fn default() -> Self {
        Self {
            kappa: 6.5,
            min_lifetimes: 1.0,
        }
    }
}

impl LeapPolicy {
    /// No leaps at all.
    pub fn never() -> Self {
        Self {
            kappa: f64::INFINITY,
            min_lifetimes: f64::INFINITY,
        }
    }

    /// Span usable by a particle whose nearest concern is `clearance` away,
    /// or `None` when it should be simulated event by event.
    fn span(&self, clearance: f64, density: f64) -> Option<f64> {
        if !(clearance > 0.0) || !self.kappa.is_finite() {
            return None;
        }
        let span = (clearance / self.kappa).powi(2);
        (span * density >= self.min_lifetimes).then_some(span)
    }
}

/// Appends the positions after `span` of the descendants of one particle
/// at `x`; appends nothing if the family dies out.
pub fn leap_family<R: Rng + ?Sized>(x: f64, span: f64, density: u64, rng: &mut R, out: &mut Vec<f64>) {
    let b = 0.5 * density as f64;
    let q = b * span / (1.0 + b * span);
    if rng.random::<f64>() < q {
        return;
    }
    leap_surviving(x, span, b, q, rng, &mut Vec::new(), |y| out.push(y));
}

/// Family positions conditioned on survival.
fn leap_surviving<R: Rng + ?Sized>(
    x: f64,
    span: f64,
    b: f64,
    q: f64,
    rng: &mut R,
    spine: &mut Vec<(f64, f64)>,
    mut out: impl FnMut(f64),
) {
    let extra = geometric_failures(q, rng);
    let mut z: f64 = StandardNormal.sample(rng);
    let tip = x + span.sqrt() * z;
    out(tip);
    if extra == 0 {
        return;
    }
    // (depth below the horizon, position) along the newest tip's lineage,
    // deepest first
    spine.clear();
    spine.push((span, x));
    spine.push((0.0, tip));
    for _ in 0..extra {
        let u = rng.random::<f64>() * q;
        let h = (u / (b * (1.0 - u))).min(span);
        let mut below = spine.pop().expect("spine holds the root");
        while spine.last().expect("root is deeper than any node").0 < h {
            below = spine.pop().unwrap();
        }
        let above = *spine.last().unwrap();
        let gap = above.0 - below.0;
        let node = if gap <= 0.0 {
            above.1
        } else {
            let w = (above.0 - h) / gap;
            let var = (above.0 - h) * (h - below.0) / gap;
            z = StandardNormal.sample(rng);
            above.1 + w * (below.1 - above.1) + var.max(0.0).sqrt() * z
        };
        z = StandardNormal.sample(rng);
        let tip = node + h.sqrt() * z;
        spine.push((h, node));
        spine.push((0.0, tip));
        out(tip);
    }
}

/// Pending work: `count` particles at `x` at time `t`.
#[derive(Debug, Clone, Copy)]
struct Pending {
    x: f64,
    t: f64,
    count: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(other.t.total_cmp(&self.t))
            .then(self.count.cmp(&other.count))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitParams {
    pub density: u64,
    pub level: f64,
    pub t_max: f64,
    pub leap: LeapPolicy,
    /// Return as soon as one particle freezes.
    pub stop_at_first: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitOutcome {
    pub frozen: u64,
    /// Time of the last freeze or death, to within one lifetime or leap.
    pub settle_time: f64,
    /// False when the horizon was reached with particles still alive.
    pub settled: bool,
    pub events: u64,
    pub leaps: u64,
}

/// Releases `count` particles at `start` and freezes every lineage at its
/// first visit to `level`.
pub fn run_exit<R: Rng + ?Sized>(start: f64, count: u64, params: &ExitParams, rng: &mut R) -> ExitOutcome {
    let density = params.density as f64;
    let b = 0.5 * density;
    let level = params.level;
    let mut out = ExitOutcome {
        frozen: 0,
        settle_time: 0.0,
        settled: true,
        events: 0,
        leaps: 0,
    };
    let mut stack = Vec::new();
    if count > 0 {
        stack.push(Pending { x: start, t: 0.0, count });
    }
    let mut spine = Vec::new();
    while let Some(mut item) = stack.pop() {
        if item.t >= params.t_max {
            out.settled = false;
            return out;
        }
        if let Some(span) = params.leap.span(level - item.x, density) {
            let span = span.min(params.t_max - item.t + 1.0 / density);
            let q = b * span / (1.0 + b * span);
            let survivors = binomial(item.count, 1.0 - q, rng);
            let t = item.t + span;
            out.leaps += 1;
            if survivors < item.count {
                out.settle_time = out.settle_time.max(t);
            }
            for _ in 0..survivors {
                leap_surviving(item.x, span, b, q, rng, &mut spine, |x| {
                    stack.push(Pending { x, t, count: 1 })
                });
            }
            continue;
        }
        if item.count > 1 {
            stack.push(Pending {
                count: item.count - 1,
                ..item
            });
            item.count = 1;
        }
        out.events += 1;
        let life: f64 = Exp1.sample(rng);
        let life = life / density;
        let z: f64 = StandardNormal.sample(rng);
        let end = item.x + life.sqrt() * z;
        let hit = end >= level || {
            let a = level - item.x;
            rng.random::<f64>() < (-2.0 * a * (level - end) / life).exp()
        };
        let t = item.t + life;
        if hit {
            out.frozen += 1;
            out.settle_time = out.settle_time.max(t);
            if params.stop_at_first {
                return out;
            }
            continue;
        }
        if t >= params.t_max {
            out.settled = false;
            return out;
        }
        if rng.random::<bool>() {
            stack.push(Pending { x: end, t, count: 2 });
        } else {
            out.settle_time = out.settle_time.max(t);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationParams {
    pub density: u64,
    pub t_max: f64,
    /// Spacing of the snapshot times `k·sample_dt`, `k ≥ 1`.
    pub sample_dt: f64,
    pub grid: Grid,
    /// Only keep the occupation within this distance of the rightmost
    /// snapshot position; everything further left is leapt over unrecorded.
    pub right_window: Option<f64>,
    pub leap: LeapPolicy,
    /// Give up as soon as one particle reaches `t_max`; otherwise every
    /// lineage is followed up to the horizon.
    pub abandon_survivors: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationRun {
    /// Snapshot visits per bin: every living particle adds one to its bin at
    /// every snapshot time.
    pub counts: BinCounts,
    /// All particles died before `t_max`.
    pub extinct: bool,
    /// Last death time; exact when no leap was taken.
    pub extinction_time: f64,
    /// Rightmost snapshot position.
    pub max_sample: f64,
    /// Bins entirely at or right of this point are complete.
    pub valid_from: f64,
    pub events: u64,
    pub leaps: u64,
}

enum Queue {
    Depth(Vec<Pending>),
    Rightmost(BinaryHeap<Pending>),
}

impl Queue {
    fn push(&mut self, p: Pending) {
        match self {
            Queue::Depth(v) => v.push(p),
            Queue::Rightmost(h) => h.push(p),
        }
    }

    fn pop(&mut self) -> Option<Pending> {
        match self {
            Queue::Depth(v) => v.pop(),
            Queue::Rightmost(h) => h.pop(),
        }
    }
}

/// Runs a free system from `count` particles at `start` and records the
/// snapshot occupation counts that a stepped run with step `sample_dt`
/// would accumulate up to `t_max`.
pub fn run_occupation<R: Rng + ?Sized>(
    start: f64,
    count: u64,
    params: &OccupationParams,
    rng: &mut R,
) -> OccupationRun {
    let density = params.density as f64;
    let b = 0.5 * density;
    let dt = params.sample_dt;
    let grid = params.grid;
    let mut run = OccupationRun {
        counts: BinCounts::new(),
        extinct: true,
        extinction_time: 0.0,
        max_sample: f64::NEG_INFINITY,
        valid_from: f64::NEG_INFINITY,
        events: 0,
        leaps: 0,
    };
    let mut queue = match params.right_window {
        Some(_) => Queue::Rightmost(BinaryHeap::new()),
        None => Queue::Depth(Vec::new()),
    };
    if count > 0 {
        queue.push(Pending { x: start, t: 0.0, count });
    }
    let mut spine = Vec::new();
    while let Some(mut item) = queue.pop() {
        if let Some(w) = params.right_window {
            let clearance = run.max_sample - w - item.x;
            if let Some(span) = params.leap.span(clearance, density) {
                let q = b * span / (1.0 + b * span);
                let survivors = binomial(item.count, 1.0 - q, rng);
                let t = item.t + span;
                run.leaps += 1;
                if survivors > 0 && t >= params.t_max {
                    run.extinct = false;
                    if params.abandon_survivors {
                        break;
                    }
                    continue;
                }
                if survivors < item.count {
                    run.extinction_time = run.extinction_time.max(t);
                }
                for _ in 0..survivors {
                    leap_surviving(item.x, span, b, q, rng, &mut spine, |x| {
                        queue.push(Pending { x, t, count: 1 })
                    });
                }
                continue;
            }
        }
        if item.count > 1 {
            queue.push(Pending {
                count: item.count - 1,
                ..item
            });
            item.count = 1;
        }
        run.events += 1;
        let t0 = item.t;
        let life: f64 = Exp1.sample(rng);
        let t1 = t0 + life / density;
        let stop = t1.min(params.t_max);
        let mut k = (t0 / dt).floor() as u64 + 1;
        if k as f64 * dt <= t0 {
            k += 1;
        }
        let (mut x, mut t) = (item.x, t0);
        loop {
            let g = k as f64 * dt;
            if g > stop {
                break;
            }
            let z: f64 = StandardNormal.sample(rng);
            x += (g - t).sqrt() * z;
            t = g;
            run.counts.add(grid.index(x), 1);
            if x > run.max_sample {
                run.max_sample = x;
            }
            k += 1;
        }
        if t1 >= params.t_max {
            run.extinct = false;
            if params.abandon_survivors {
                break;
            }
            continue;
        }
        let z: f64 = StandardNormal.sample(rng);
        x += (t1 - t).sqrt() * z;
        if rng.random::<bool>() {
            queue.push(Pending { x, t: t1, count: 2 });
        } else {
            run.extinction_time = run.extinction_time.max(t1);
        }
    }
    if let Some(w) = params.right_window {
        run.valid_from = run.max_sample - w;
    }
    run
}
