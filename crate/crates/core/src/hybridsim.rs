//! Executor for the closed loop as a hybrid system.
//!
//! Flow is classic RK4 on the continuous part; clocks are affine in t so the
//! next jump instant is known exactly and the interval up to it is split into
//! equal steps that land on it. Continuous state is stacked as
//! [x, e_s, z, e_f] whenever a flat vector is needed.

use crate::ltimodel::{ClosedLoop, StateDims};
use crate::numerics::{norm, spectral_norm};
use crate::protocols::{protocol_jump, ProtocolError, ProtocolSpec};
use crate::rng::SplitMix64;
use crate::scheduler::{
    advance, apply_jump, classify, validate_sequence, ClockConfig, ClockState, JumpKind, JumpPolicy, ScheduleError,
    Scheduler,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest integration step accepted.
pub const MIN_STEP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("step {h:e} exceeds the stiffness limit {h_max:e}; use --step {h_max:e} or smaller")]
    Stiffness { h: f64, h_max: f64 },
    #[error("step {dt:e} underflows at t = {t}")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("non-finite state component {index} at t = {t}, j = {j}")]
    NonFinite { t: f64, j: u64, index: usize },
    #[error("{kind:?} jump requested outside its jump set at tau_s = {tau_s}, tau_f = {tau_f}")]
    JumpSet { kind: JumpKind, tau_s: f64, tau_f: f64 },
    #[error("state has dimensions {got:?}, closed loop expects {want:?}")]
    Dimension { want: StateDims, got: StateDims },
    #[error("initial clocks (tau_s = {tau_s}, tau_f = {tau_f}) lie outside the flow set")]
    InitialClocks { tau_s: f64, tau_f: f64 },
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("invalid settings: {0}")]
    Settings(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub x: Vec<f64>,
    pub e_s: Vec<f64>,
    pub tau_s: f64,
    pub kappa_s: u64,
    pub z: Vec<f64>,
    pub e_f: Vec<f64>,
    /// Fast clock in stretched time.
    pub tau_f: f64,
    pub kappa_f: u64,
}

impl HybridState {
    pub fn zeros(d: StateDims) -> Self {
        HybridState {
            x: vec![0.0; d.n_x],
            e_s: vec![0.0; d.n_es],
            tau_s: 0.0,
            kappa_s: 0,
            z: vec![0.0; d.n_z],
            e_f: vec![0.0; d.n_ef],
            tau_f: 0.0,
            kappa_f: 0,
        }
    }

    pub fn dims(&self) -> StateDims {
        StateDims { n_x: self.x.len(), n_es: self.e_s.len(), n_z: self.z.len(), n_ef: self.e_f.len() }
    }

    pub fn continuous(&self) -> Vec<f64> {
        [&self.x[..], &self.e_s, &self.z, &self.e_f].concat()
    }

    pub fn set_continuous(&mut self, v: &[f64]) {
        let (x, rest) = v.split_at(self.x.len());
        let (es, rest) = rest.split_at(self.e_s.len());
        let (z, ef) = rest.split_at(self.z.len());
        self.x.copy_from_slice(x);
        self.e_s.copy_from_slice(es);
        self.z.copy_from_slice(z);
        self.e_f.copy_from_slice(ef);
    }

    pub fn clocks(&self) -> ClockState {
        ClockState { tau_s: self.tau_s, tau_f: self.tau_f, kappa_s: self.kappa_s, kappa_f: self.kappa_f }
    }

    pub fn set_clocks(&mut self, c: ClockState) {
        self.tau_s = c.tau_s;
        self.tau_f = c.tau_f;
        self.kappa_s = c.kappa_s;
        self.kappa_f = c.kappa_f;
    }

    /// Euclidean norm of the non-clock components: distance to the attractor.
    pub fn norm(&self) -> f64 {
        norm(&self.continuous())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleEvent {
    Flow,
    SlowJump,
    FastJump,
}

impl SampleEvent {
    pub fn name(self) -> &'static str {
        match self {
            SampleEvent::Flow => "flow",
            SampleEvent::SlowJump => "slow_jump",
            SampleEvent::FastJump => "fast_jump",
        }
    }
}

impl From<JumpKind> for SampleEvent {
    fn from(k: JumpKind) -> Self {
        match k {
            JumpKind::Slow => SampleEvent::SlowJump,
            JumpKind::Fast => SampleEvent::FastJump,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub j: u64,
    pub state: HybridState,
    pub event: SampleEvent,
}

/// Samples on a hybrid time domain. A jump sample holds the post-jump state;
/// the sample just before it holds the pre-jump state at the same t.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HybridTrajectory {
    pub samples: Vec<Sample>,
}

impl HybridTrajectory {
    pub fn jump_times(&self, kind: JumpKind) -> Vec<f64> {
        let ev = SampleEvent::from(kind);
        self.samples.iter().filter(|s| s.event == ev).map(|s| s.t).collect()
    }

    pub fn count(&self, ev: SampleEvent) -> usize {
        self.samples.iter().filter(|s| s.event == ev).count()
    }

    /// Checks hybrid-time bookkeeping and the transmission spacing.
    pub fn finalize(&self, cfg: &ClockConfig) -> Result<()> {
        let bad = |m: String| Err(SimError::Trajectory(m));
        if let Some(first) = self.samples.first() {
            if first.event != SampleEvent::Flow {
                return bad("trajectory starts with a jump".into());
            }
        }
        for (k, w) in self.samples.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            match b.event {
                SampleEvent::Flow => {
                    if b.j != a.j || b.t < a.t {
                        return bad(format!("sample {}: flow must keep j and not decrease t", k + 1));
                    }
                }
                _ => {
                    if b.j != a.j + 1 || b.t != a.t {
                        return bad(format!("sample {}: jump must increment j by one at fixed t", k + 1));
                    }
                }
            }
        }
        if !validate_sequence(cfg, &self.jump_times(JumpKind::Slow), &self.jump_times(JumpKind::Fast)) {
            return bad("transmission times violate the spacing constraints".into());
        }
        Ok(())
    }
}

/// Derivative of the hybrid state during flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDerivative {
    /// d/dt of [x, e_s, z, e_f].
    pub cont: Vec<f64>,
    pub tau_s: f64,
    pub tau_f: f64,
}

fn lti_flow_into(cl: &ClosedLoop, v: &[f64], epsilon: f64, out: &mut [f64]) {
    let d = cl.dims;
    let (x, rest) = v.split_at(d.n_x);
    let (es, rest) = rest.split_at(d.n_es);
    let (z, ef) = rest.split_at(d.n_z);
    out.iter_mut().for_each(|o| *o = 0.0);
    let (ox, orest) = out.split_at_mut(d.n_x);
    let (oes, orest) = orest.split_at_mut(d.n_es);
    let (oz, oef) = orest.split_at_mut(d.n_z);
    let rows: [(&mut [f64], [&crate::numerics::Matrix; 4]); 3] = [
        (ox, [&cl.a11, &cl.a12, &cl.a13, &cl.a14]),
        (oes, [&cl.a21, &cl.a22, &cl.a23, &cl.a24]),
        (oz, [&cl.a31, &cl.a32, &cl.a33, &cl.a34]),
    ];
    for (o, blocks) in rows {
        for (m, part) in blocks.iter().zip([x, es, z, ef]) {
            m.apply_add(part, o);
        }
    }
    for (m, part) in [&cl.a41, &cl.a42, &cl.a43, &cl.a44].iter().zip([x, es, z, ef]) {
        m.apply_add(part, oef);
    }
    let inv = 1.0 / epsilon;
    oz.iter_mut().for_each(|o| *o *= inv);
    oef.iter_mut().for_each(|o| *o *= inv);
    for (m, part) in [&cl.a41e, &cl.a42e, &cl.a43e, &cl.a44e].iter().zip([x, es, z, ef]) {
        m.apply_add(part, oef);
    }
}

/// F(ξ, ε) for the LTI loop.
pub fn flow_map(cl: &ClosedLoop, s: &HybridState, epsilon: f64) -> FlowDerivative {
    let v = s.continuous();
    let mut cont = vec![0.0; v.len()];
    lti_flow_into(cl, &v, epsilon, &mut cont);
    FlowDerivative { cont, tau_s: 1.0, tau_f: 1.0 / epsilon }
}

/// Continuous dynamics on the stacked vector [x, e_s, z, e_f].
pub trait FlowField {
    fn eval(&self, cont: &[f64], epsilon: f64, out: &mut [f64]);
}

impl<F: Fn(&[f64], f64, &mut [f64])> FlowField for F {
    fn eval(&self, cont: &[f64], epsilon: f64, out: &mut [f64]) {
        self(cont, epsilon, out)
    }
}

/// The LTI loop as a [`FlowField`].
pub struct LtiFlow<'a>(pub &'a ClosedLoop);

impl FlowField for LtiFlow<'_> {
    fn eval(&self, cont: &[f64], epsilon: f64, out: &mut [f64]) {
        lti_flow_into(self.0, cont, epsilon, out)
    }
}

/// Resets applied to the network-induced errors at transmissions.
pub trait JumpMaps {
    fn slow(&self, kappa_s: u64, e_s: &[f64]) -> Result<Vec<f64>>;
    fn fast(&self, kappa_f: u64, e_f: &[f64]) -> Result<Vec<f64>>;
}

pub struct ProtocolJumps<'a> {
    pub slow: &'a ProtocolSpec,
    pub fast: &'a ProtocolSpec,
}

impl JumpMaps for ProtocolJumps<'_> {
    fn slow(&self, kappa_s: u64, e_s: &[f64]) -> Result<Vec<f64>> {
        Ok(protocol_jump(self.slow, kappa_s, e_s)?)
    }

    fn fast(&self, kappa_f: u64, e_f: &[f64]) -> Result<Vec<f64>> {
        Ok(protocol_jump(self.fast, kappa_f, e_f)?)
    }
}

fn check_jump(cfg: &ClockConfig, s: &HybridState, kind: JumpKind) -> Result<()> {
    let m = classify(cfg, &s.clocks());
    let ok = match kind {
        JumpKind::Slow => m.slow_jump_allowed,
        JumpKind::Fast => m.fast_jump_allowed,
    };
    if !ok {
        return Err(SimError::JumpSet { kind, tau_s: s.tau_s, tau_f: s.tau_f });
    }
    Ok(())
}

/// G_s: transmit on the slow channel.
pub fn jump_slow(cfg: &ClockConfig, s: &HybridState, proto: &ProtocolSpec) -> Result<HybridState> {
    check_jump(cfg, s, JumpKind::Slow)?;
    let mut out = s.clone();
    out.e_s = protocol_jump(proto, s.kappa_s, &s.e_s)?;
    out.tau_s = 0.0;
    out.kappa_s += 1;
    Ok(out)
}

/// G_f: transmit on the fast channel.
pub fn jump_fast(cfg: &ClockConfig, s: &HybridState, proto: &ProtocolSpec) -> Result<HybridState> {
    check_jump(cfg, s, JumpKind::Fast)?;
    let mut out = s.clone();
    out.e_f = protocol_jump(proto, s.kappa_f, &s.e_f)?;
    out.tau_f = 0.0;
    out.kappa_f += 1;
    Ok(out)
}

/// Replaces z by y = z − Hx·x − He·e_s. The returned state stores y in `z`.
pub fn to_y_coords(cl: &ClosedLoop, s: &HybridState) -> HybridState {
    let mut out = s.clone();
    let mut h = vec![0.0; s.z.len()];
    cl.hx.apply_add(&s.x, &mut h);
    cl.he.apply_add(&s.e_s, &mut h);
    out.z.iter_mut().zip(h).for_each(|(z, h)| *z -= h);
    out
}

/// Inverse of [`to_y_coords`].
pub fn from_y_coords(cl: &ClosedLoop, s: &HybridState) -> HybridState {
    let mut out = s.clone();
    cl.hx.apply_add(&s.x, &mut out.z);
    cl.he.apply_add(&s.e_s, &mut out.z);
    out
}

/// Horizon, step and recording density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub t_end: f64,
    /// Nominal RK4 step; defaults to min(mati_f, miati_s)/50.
    #[serde(default)]
    pub step: Option<f64>,
    /// Keep every k-th flow step (pre-jump samples are always kept).
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl SimSettings {
    pub fn new(t_end: f64) -> Self {
        SimSettings { t_end, step: None, record_every: 1 }
    }
}

pub fn default_step(cfg: &ClockConfig) -> f64 {
    use crate::scheduler::ChannelMode::*;
    let m = match cfg.mode {
        Dual => cfg.mati_f.min(cfg.miati_s),
        SlowOnly => cfg.miati_s,
        FastOnly => cfg.mati_f,
    };
    m / 50.0
}

/// Largest step the stiffness guard accepts: ε/(2‖fast block‖).
pub fn max_stable_step(cl: &ClosedLoop, epsilon: f64) -> f64 {
    let n = spectral_norm(&cl.fast_block());
    if n == 0.0 {
        f64::INFINITY
    } else {
        epsilon / (2.0 * n)
    }
}

fn rk4_step(f: &impl FlowField, eps: f64, v: &mut [f64], dt: f64, ws: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, tmp] = ws;
    f.eval(v, eps, k1);
    for i in 0..v.len() {
        tmp[i] = v[i] + 0.5 * dt * k1[i];
    }
    f.eval(tmp, eps, k2);
    for i in 0..v.len() {
        tmp[i] = v[i] + 0.5 * dt * k2[i];
    }
    f.eval(tmp, eps, k3);
    for i in 0..v.len() {
        tmp[i] = v[i] + dt * k3[i];
    }
    f.eval(tmp, eps, k4);
    for i in 0..v.len() {
        v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Runs caller-supplied dynamics through the scheduling and integration loop.
pub fn simulate_generic(
    flow: &impl FlowField,
    jumps: &impl JumpMaps,
    cfg: &ClockConfig,
    x0: &HybridState,
    policy: &JumpPolicy,
    settings: &SimSettings,
) -> Result<HybridTrajectory> {
    let h = settings.step.unwrap_or_else(|| default_step(cfg));
    if !(h >= MIN_STEP && h.is_finite()) {
        return Err(SimError::StepUnderflow { t: 0.0, dt: h });
    }
    if !(settings.t_end >= 0.0 && settings.t_end.is_finite()) {
        return Err(SimError::Settings(format!("t_end must be finite and nonnegative, got {}", settings.t_end)));
    }
    let record_every = settings.record_every.max(1);
    let mut sched = Scheduler::new(*cfg, *policy)?;
    if !classify(cfg, &x0.clocks()).in_flow {
        return Err(SimError::InitialClocks { tau_s: x0.tau_s, tau_f: x0.tau_f });
    }
    let eps = cfg.epsilon;
    let mut s = x0.clone();
    let mut v = s.continuous();
    let mut ws: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; v.len()]);
    let mut t = 0.0;
    let mut j = 0u64;
    let mut traj = HybridTrajectory::default();
    traj.samples.push(Sample { t, j, state: s.clone(), event: SampleEvent::Flow });

    loop {
        let ev = sched.next_event(&s.clocks())?;
        let target = t + ev.dt;
        let flow_end = target.min(settings.t_end);
        let span = flow_end - t;
        if span > 0.0 {
            let n = (span / h).ceil().max(1.0) as usize;
            let dt = span / n as f64;
            let (t0, c0) = (t, s.clocks());
            for k in 1..=n {
                rk4_step(flow, eps, &mut v, dt, &mut ws);
                if let Some(index) = v.iter().position(|c| !c.is_finite()) {
                    return Err(SimError::NonFinite { t: t0 + k as f64 * dt, j, index });
                }
                let elapsed = if k == n { span } else { k as f64 * dt };
                t = if k == n { flow_end } else { t0 + elapsed };
                let mut c = c0;
                advance(cfg, &mut c, elapsed);
                s.set_clocks(c);
                if k == n || k % record_every == 0 {
                    s.set_continuous(&v);
                    traj.samples.push(Sample { t, j, state: s.clone(), event: SampleEvent::Flow });
                }
            }
            s.set_continuous(&v);
        }
        if target > settings.t_end {
            break;
        }
        check_jump(cfg, &s, ev.kind)?;
        match ev.kind {
            JumpKind::Slow => s.e_s = jumps.slow(s.kappa_s, &s.e_s)?,
            JumpKind::Fast => s.e_f = jumps.fast(s.kappa_f, &s.e_f)?,
        }
        let mut c = s.clocks();
        apply_jump(&mut c, ev.kind);
        s.set_clocks(c);
        v = s.continuous();
        j += 1;
        traj.samples.push(Sample { t, j, state: s.clone(), event: ev.kind.into() });
    }
    Ok(traj)
}

/// Simulates the LTI loop under the given protocols.
pub fn simulate(
    cl: &ClosedLoop,
    cfg: &ClockConfig,
    x0: &HybridState,
    policy: &JumpPolicy,
    proto_s: &ProtocolSpec,
    proto_f: &ProtocolSpec,
    settings: &SimSettings,
) -> Result<HybridTrajectory> {
    if x0.dims() != cl.dims {
        return Err(SimError::Dimension { want: cl.dims, got: x0.dims() });
    }
    if proto_s.dim() != cl.dims.n_es || proto_f.dim() != cl.dims.n_ef {
        return Err(SimError::Settings(format!(
            "protocol partitions cover ({}, {}) errors, closed loop has ({}, {})",
            proto_s.dim(),
            proto_f.dim(),
            cl.dims.n_es,
            cl.dims.n_ef
        )));
    }
    let h = settings.step.unwrap_or_else(|| default_step(cfg));
    let h_max = max_stable_step(cl, cfg.epsilon);
    if h > h_max {
        return Err(SimError::Stiffness { h, h_max });
    }
    simulate_generic(&LtiFlow(cl), &ProtocolJumps { slow: proto_s, fast: proto_f }, cfg, x0, policy, settings)
}

/// Random continuous state of Euclidean norm `radius·u^{1/n}` in a uniform
/// direction, with the given clocks.
pub fn random_initial_state(dims: StateDims, clocks: ClockState, radius: f64, rng: &mut SplitMix64) -> HybridState {
    let mut s = HybridState::zeros(dims);
    let n = dims.total();
    let mut v: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
    let len = norm(&v);
    if n > 0 && len > 0.0 {
        let r = radius * rng.next_f64().powf(1.0 / n as f64);
        v.iter_mut().for_each(|c| *c *= r / len);
        s.set_continuous(&v);
    }
    s.set_clocks(clocks);
    s
}
