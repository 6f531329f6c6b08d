//! Dual-clock transmission timing.
//!
//! Two clocks run at physical rate 1: τ_s since the last slow transmission
//! and σ = ε·τ_f since the last fast one. Jump sets and the flow set are
//! boxes and two corner regions in the (τ_s, σ) plane. Between jumps both
//! clocks move along a diagonal line, so every membership question reduces
//! to interval arithmetic in the elapsed time t.

use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack on clock comparisons, in seconds.
pub const CLOCK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("invalid clock configuration: {0}")]
    Config(String),
    #[error("clock state (tau_s={tau_s}, sigma={sigma}) is outside the flow set")]
    OutsideFlowSet { tau_s: f64, sigma: f64 },
    #[error("no admissible jump is reachable from (tau_s={tau_s}, sigma={sigma})")]
    Infeasible { tau_s: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    Dual,
    SlowOnly,
    FastOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockConfig {
    pub miati_s: f64,
    pub mati_s: f64,
    pub miati_f: f64,
    pub mati_f: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub mode: ChannelMode,
}

impl ClockConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: &str| Err(ScheduleError::Config(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        let slow_ok = self.miati_s > 0.0 && self.miati_s <= self.mati_s && self.mati_s.is_finite();
        let fast_ok = self.miati_f > 0.0 && self.miati_f <= self.mati_f && self.mati_f.is_finite();
        match self.mode {
            ChannelMode::SlowOnly if !slow_ok => bad("need 0 < miati_s <= mati_s"),
            ChannelMode::FastOnly if !fast_ok => bad("need 0 < miati_f <= mati_f"),
            ChannelMode::Dual => {
                if !slow_ok {
                    return bad("need 0 < miati_s <= mati_s");
                }
                if !fast_ok {
                    return bad("need 0 < miati_f <= mati_f");
                }
                if self.miati_f > self.mati_f / 2.0 {
                    return bad("need miati_f <= mati_f / 2");
                }
                if self.miati_s > self.mati_s - self.miati_f {
                    return bad("need miati_s <= mati_s - miati_f");
                }
                if self.mati_s < 3.0 * self.miati_f {
                    return bad("need mati_s >= 3 miati_f");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ClockState {
    pub tau_s: f64,
    /// Fast clock in stretched time; physical elapsed time is ε·τ_f.
    pub tau_f: f64,
    pub kappa_s: u64,
    pub kappa_f: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Membership {
    pub in_flow: bool,
    pub slow_jump_allowed: bool,
    pub fast_jump_allowed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    Slow,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    SlowFirst,
    FastFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Earliest,
    #[default]
    Latest,
    UniformRandom { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct JumpPolicy {
    pub kind: PolicyKind,
    #[serde(default)]
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub dt: f64,
    pub kind: JumpKind,
}

/// Closed interval in elapsed time along the clock diagonal.
type Span = (f64, f64);

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo - CLOCK_TOL && v <= hi + CLOCK_TOL
}

/// Times t ≥ 0 at which `lo_k ≤ c_k + t ≤ hi_k` for every bound.
fn span(bounds: &[(f64, f64, f64)]) -> Option<Span> {
    let mut a = f64::NEG_INFINITY;
    let mut b = f64::INFINITY;
    for &(c, lo, hi) in bounds {
        a = a.max(lo - c);
        b = b.min(hi - c);
    }
    let a = a.max(0.0);
    if b < a - CLOCK_TOL {
        None
    } else {
        Some((a, b.max(a)))
    }
}

struct Sets {
    flow: Vec<Span>,
    slow: Option<Span>,
    fast: Option<Span>,
}

fn sigma(cfg: &ClockConfig, s: &ClockState) -> f64 {
    cfg.epsilon * s.tau_f
}

fn sets_along_line(cfg: &ClockConfig, s: &ClockState) -> Sets {
    let ts = s.tau_s;
    let sg = sigma(cfg, s);
    let (ms, big_ms, mf, big_mf) = (cfg.miati_s, cfg.mati_s, cfg.miati_f, cfg.mati_f);
    let inf = f64::INFINITY;
    match cfg.mode {
        ChannelMode::SlowOnly => {
            let slow = span(&[(ts, ms, big_ms)]);
            Sets { flow: span(&[(ts, 0.0, big_ms)]).into_iter().collect(), slow, fast: None }
        }
        ChannelMode::FastOnly => {
            let fast = span(&[(sg, mf, big_mf)]);
            Sets { flow: span(&[(sg, 0.0, big_mf)]).into_iter().collect(), slow: None, fast }
        }
        ChannelMode::Dual => {
            let slow = span(&[(ts, ms, big_ms), (sg, mf, big_mf - mf)]);
            let fast = span(&[(ts, mf, big_ms - mf), (sg, mf, big_mf)]);
            // Corner regions carry one constraint on σ − τ_s, constant along the line.
            let c1a = if sg - ts <= big_mf - mf + CLOCK_TOL {
                span(&[(ts, 0.0, mf), (sg, 0.0, inf)])
            } else {
                None
            };
            let c1b = if ts - sg <= big_ms - mf + CLOCK_TOL {
                span(&[(sg, 0.0, mf), (ts, mf, inf)])
            } else {
                None
            };
            let flow = [slow, fast, c1a, c1b].into_iter().flatten().collect();
            Sets { flow, slow, fast }
        }
    }
}

pub fn classify(cfg: &ClockConfig, s: &ClockState) -> Membership {
    let ts = s.tau_s;
    let sg = sigma(cfg, s);
    let (ms, big_ms, mf, big_mf) = (cfg.miati_s, cfg.mati_s, cfg.miati_f, cfg.mati_f);
    match cfg.mode {
        ChannelMode::SlowOnly => Membership {
            in_flow: within(ts, 0.0, big_ms),
            slow_jump_allowed: within(ts, ms, big_ms),
            fast_jump_allowed: false,
        },
        ChannelMode::FastOnly => Membership {
            in_flow: within(sg, 0.0, big_mf),
            slow_jump_allowed: false,
            fast_jump_allowed: within(sg, mf, big_mf),
        },
        ChannelMode::Dual => {
            let ds = within(ts, ms, big_ms) && within(sg, mf, big_mf - mf);
            let df = within(ts, mf, big_ms - mf) && within(sg, mf, big_mf);
            let c1a = within(ts, 0.0, mf) && within(sg, 0.0, ts + big_mf - mf);
            let c1b = within(sg, 0.0, mf) && within(ts, mf, sg + big_ms - mf);
            Membership {
                in_flow: ds || df || c1a || c1b,
                slow_jump_allowed: ds,
                fast_jump_allowed: df,
            }
        }
    }
}

/// Admissible jump windows from the current clocks, in elapsed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Windows {
    /// Largest elapsed time for which flow stays inside the flow set.
    pub reach: f64,
    pub slow: Option<Span>,
    pub fast: Option<Span>,
}

pub fn jump_windows(cfg: &ClockConfig, s: &ClockState) -> Result<Windows, ScheduleError> {
    let sets = sets_along_line(cfg, s);
    let outside = || ScheduleError::OutsideFlowSet { tau_s: s.tau_s, sigma: sigma(cfg, s) };
    if !sets.flow.iter().any(|&(a, _)| a <= CLOCK_TOL) {
        return Err(outside());
    }
    let mut reach = 0.0;
    loop {
        let mut grown = false;
        for &(a, b) in &sets.flow {
            if a <= reach + CLOCK_TOL && b > reach {
                reach = b;
                grown = true;
            }
        }
        if !grown {
            break;
        }
    }
    if !reach.is_finite() {
        return Err(ScheduleError::Config("flow set is unbounded along the clock line".into()));
    }
    let clip = |w: Option<Span>| {
        w.and_then(|(a, b)| {
            if a > reach + CLOCK_TOL {
                None
            } else {
                Some((a, b.min(reach)))
            }
        })
    };
    Ok(Windows { reach, slow: clip(sets.slow), fast: clip(sets.fast) })
}

fn contains(w: Option<Span>, t: f64) -> bool {
    w.is_some_and(|(a, b)| within(t, a, b))
}

fn pick(tie: TieBreak, slow: bool, fast: bool) -> Option<JumpKind> {
    match (slow, fast) {
        (true, true) => Some(match tie {
            TieBreak::SlowFirst => JumpKind::Slow,
            TieBreak::FastFirst => JumpKind::Fast,
        }),
        (true, false) => Some(JumpKind::Slow),
        (false, true) => Some(JumpKind::Fast),
        (false, false) => None,
    }
}

/// Selects the next jump; `rng` is required for the random policy.
pub fn next_event(
    cfg: &ClockConfig,
    s: &ClockState,
    policy: &JumpPolicy,
    rng: Option<&mut SplitMix64>,
) -> Result<Event, ScheduleError> {
    let w = jump_windows(cfg, s)?;
    let infeasible = || ScheduleError::Infeasible { tau_s: s.tau_s, sigma: sigma(cfg, s) };
    let starts: Vec<f64> = [w.slow, w.fast].into_iter().flatten().map(|(a, _)| a).collect();
    let earliest = starts.iter().copied().fold(f64::INFINITY, f64::min);
    if !earliest.is_finite() {
        return Err(infeasible());
    }
    let at = |t: f64| pick(policy.tie_break, contains(w.slow, t), contains(w.fast, t));
    let (dt, kind) = match policy.kind {
        PolicyKind::Earliest => (earliest, at(earliest)),
        PolicyKind::Latest => (w.reach, at(w.reach)),
        PolicyKind::UniformRandom { .. } => {
            let rng = rng.ok_or_else(|| ScheduleError::Config("random policy needs a generator".into()))?;
            let u = earliest + (w.reach - earliest) * rng.next_f64();
            match at(u) {
                Some(k) => (u, Some(k)),
                None => {
                    // Landed in a gap between windows: take the next opening.
                    let next = starts.iter().copied().filter(|&a| a > u).fold(f64::INFINITY, f64::min);
                    (next, at(next))
                }
            }
        }
    };
    match kind {
        Some(kind) => Ok(Event { dt: dt.max(0.0), kind }),
        None => Err(infeasible()),
    }
}

/// Advances both clocks by `dt` of physical time.
pub fn advance(cfg: &ClockConfig, s: &mut ClockState, dt: f64) {
    s.tau_s += dt;
    s.tau_f += dt / cfg.epsilon;
}

pub fn apply_jump(s: &mut ClockState, kind: JumpKind) {
    match kind {
        JumpKind::Slow => {
            s.tau_s = 0.0;
            s.kappa_s += 1;
        }
        JumpKind::Fast => {
            s.tau_f = 0.0;
            s.kappa_f += 1;
        }
    }
}

/// Owns a policy and, for the random policy, its generator.
#[derive(Debug, Clone)]
pub struct Scheduler {
    pub cfg: ClockConfig,
    pub policy: JumpPolicy,
    rng: Option<SplitMix64>,
}

impl Scheduler {
    pub fn new(cfg: ClockConfig, policy: JumpPolicy) -> Result<Self, ScheduleError> {
        cfg.validate()?;
        let rng = match policy.kind {
            PolicyKind::UniformRandom { seed } => Some(SplitMix64::new(seed)),
            _ => None,
        };
        Ok(Scheduler { cfg, policy, rng })
    }

    pub fn next_event(&mut self, s: &ClockState) -> Result<Event, ScheduleError> {
        next_event(&self.cfg, s, &self.policy, self.rng.as_mut())
    }

    /// Runs the clocks alone for `events` jumps and returns (slow, fast) times.
    pub fn schedule(&mut self, start: ClockState, events: usize) -> Result<(Vec<f64>, Vec<f64>), ScheduleError> {
        let mut s = start;
        let mut t = 0.0;
        let (mut slow, mut fast) = (Vec::new(), Vec::new());
        for _ in 0..events {
            let ev = self.next_event(&s)?;
            advance(&self.cfg, &mut s, ev.dt);
            t += ev.dt;
            match ev.kind {
                JumpKind::Slow => slow.push(t),
                JumpKind::Fast => fast.push(t),
            }
            apply_jump(&mut s, ev.kind);
        }
        Ok((slow, fast))
    }
}

fn gap_ok(gap: f64, lo: f64, hi: f64) -> bool {
    let slack = |v: f64| CLOCK_TOL + 1e-9 * v.abs();
    gap >= lo - slack(lo) && gap <= hi + slack(hi)
}

/// Checks the slow, fast and cross-clock spacing constraints.
pub fn validate_sequence(cfg: &ClockConfig, slow_times: &[f64], fast_times: &[f64]) -> bool {
    let gaps_ok = |ts: &[f64], lo: f64, hi: f64| ts.windows(2).all(|w| gap_ok(w[1] - w[0], lo, hi));
    let sorted = |ts: &[f64]| ts.windows(2).all(|w| w[0] <= w[1]);
    if !sorted(slow_times) || !sorted(fast_times) {
        return false;
    }
    let slow_ok = gaps_ok(slow_times, cfg.miati_s, cfg.mati_s);
    let fast_ok = gaps_ok(fast_times, cfg.miati_f, cfg.mati_f);
    match cfg.mode {
        ChannelMode::SlowOnly => slow_ok && fast_times.is_empty(),
        ChannelMode::FastOnly => fast_ok && slow_times.is_empty(),
        ChannelMode::Dual => {
            let mut merged: Vec<f64> = slow_times.iter().chain(fast_times).copied().collect();
            merged.sort_by(f64::total_cmp);
            slow_ok && fast_ok && gaps_ok(&merged, cfg.miati_f, f64::INFINITY)
        }
    }
}
