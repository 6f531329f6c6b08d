//! Evaluates the composite Lyapunov function along a recorded trajectory and
//! checks the jump inequalities and the exponential envelope.

use super::{Certificate, CertifyError, DesignConstants, Result};
use crate::hybridsim::{to_y_coords, HybridState, HybridTrajectory, SampleEvent};
use crate::ltimodel::ClosedLoop;
use crate::mati::{mati_bound, phi_eval, PhiClock};
use crate::numerics::{dot, Matrix};
use crate::protocols::{protocol_lyapunov, ProtocolSpec};
use serde::Serialize;

/// Absolute and relative slack on the jump inequalities.
pub const JUMP_SLACK: f64 = 1e-9;
/// Relative slack on the clock range, for clocks that land on T.
const CLOCK_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovValues {
    pub u_s: f64,
    pub u_f: f64,
    pub u: f64,
}

fn quad(p: &Matrix, v: &[f64]) -> f64 {
    let mut pv = vec![0.0; v.len()];
    p.apply_add(v, &mut pv);
    dot(v, &pv)
}

/// Precomputed clocks and bounds for repeated evaluation.
struct UEval<'a> {
    dc: &'a DesignConstants,
    proto_s: &'a ProtocolSpec,
    proto_f: &'a ProtocolSpec,
    d: f64,
    phi_s: PhiClock,
    phi_f: PhiClock,
    t_s: f64,
    t_f: f64,
}

impl<'a> UEval<'a> {
    fn new(dc: &'a DesignConstants, d: f64, proto_s: &'a ProtocolSpec, proto_f: &'a ProtocolSpec) -> Result<Self> {
        Ok(UEval {
            dc,
            proto_s,
            proto_f,
            d,
            phi_s: PhiClock::new(dc.mati_params_slow())?,
            phi_f: PhiClock::new(dc.mati_params_fast())?,
            t_s: mati_bound(&dc.mati_params_slow())?,
            t_f: mati_bound(&dc.mati_params_fast())?,
        })
    }

    fn eval(&self, y: &HybridState) -> Result<LyapunovValues> {
        for (name, tau, bound) in [("tau_s", y.tau_s, self.t_s), ("tau_f", y.tau_f, self.t_f)] {
            if !(tau >= 0.0 && tau <= bound * (1.0 + CLOCK_SLACK)) {
                return Err(CertifyError::Constraint(format!("{name} = {tau} outside [0, {bound}]")));
            }
        }
        let w_s = protocol_lyapunov(self.proto_s, y.kappa_s, &y.e_s).map_err(mismatch)?;
        let w_f = protocol_lyapunov(self.proto_f, y.kappa_f, &y.e_f).map_err(mismatch)?;
        let phi_s = phi_eval(&self.phi_s, y.tau_s.min(self.t_s));
        let phi_f = phi_eval(&self.phi_f, y.tau_f.min(self.t_f));
        let u_s = quad(&self.dc.p_s, &y.x) + self.dc.gamma_s * phi_s * w_s * w_s;
        let u_f = quad(&self.dc.p_f, &y.z) + self.dc.gamma_f * phi_f * w_f * w_f;
        Ok(LyapunovValues { u_s, u_f, u: u_s + self.d * u_f })
    }
}

fn mismatch(e: crate::protocols::ProtocolError) -> CertifyError {
    CertifyError::Invalid(format!("scenario mismatch: {e}"))
}

/// U_s, U_f and U = U_s + d·U_f at a state whose `z` slot holds y.
pub fn lyapunov_u(
    dc: &DesignConstants,
    cert: &Certificate,
    proto_s: &ProtocolSpec,
    proto_f: &ProtocolSpec,
    y_state: &HybridState,
) -> Result<LyapunovValues> {
    if dc.p_s.rows() != y_state.x.len() || dc.p_f.rows() != y_state.z.len() {
        return Err(CertifyError::Invalid("scenario mismatch: P_s/P_f do not match the state".into()));
    }
    UEval::new(dc, cert.d_star, proto_s, proto_f)?.eval(y_state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpViolation {
    pub index: usize,
    pub t: f64,
    pub j: u64,
    pub u_before: f64,
    pub u_after: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeViolation {
    pub index: usize,
    pub t: f64,
    pub j: u64,
    pub norm: f64,
    pub bound: f64,
}

/// Average decay rate of U over one flow segment, −Δln U/Δt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentDecay {
    pub t_start: f64,
    pub t_end: f64,
    pub j: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct USample {
    pub t: f64,
    pub j: u64,
    pub event: SampleEvent,
    pub u_s: f64,
    pub u_f: f64,
    pub u: f64,
    pub norm: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub samples: usize,
    pub fast_jumps: usize,
    pub slow_jumps: usize,
    pub fast_jump_violations: Vec<JumpViolation>,
    pub slow_jump_violations: Vec<JumpViolation>,
    pub envelope_violations: Vec<EnvelopeViolation>,
    pub segment_decay: Vec<SegmentDecay>,
    pub min_segment_decay: Option<f64>,
    pub a_d: f64,
    pub c1: f64,
    pub c2: f64,
    /// Per-sample values, for plotting; not serialized.
    #[serde(skip)]
    pub series: Vec<USample>,
}

impl MonitorReport {
    pub fn jumps_ok(&self) -> bool {
        self.fast_jump_violations.is_empty() && self.slow_jump_violations.is_empty()
    }

    pub fn envelope_ok(&self) -> bool {
        self.envelope_violations.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.jumps_ok() && self.envelope_ok()
    }
}

fn slack(u: f64) -> f64 {
    JUMP_SLACK + JUMP_SLACK * u.abs()
}

/// Checks every jump and sample of `traj` against the certificate.
pub fn monitor_trajectory(
    traj: &HybridTrajectory,
    cl: &ClosedLoop,
    dc: &DesignConstants,
    cert: &Certificate,
    proto_s: &ProtocolSpec,
    proto_f: &ProtocolSpec,
) -> Result<MonitorReport> {
    let mut report = MonitorReport {
        samples: traj.samples.len(),
        fast_jumps: 0,
        slow_jumps: 0,
        fast_jump_violations: Vec::new(),
        slow_jump_violations: Vec::new(),
        envelope_violations: Vec::new(),
        segment_decay: Vec::new(),
        min_segment_decay: None,
        a_d: cert.a_d,
        c1: cert.c1,
        c2: cert.c2,
        series: Vec::with_capacity(traj.samples.len()),
    };
    let Some(first) = traj.samples.first() else {
        return Ok(report);
    };
    if first.state.dims() != cl.dims || dc.p_s.rows() != cl.dims.n_x || dc.p_f.rows() != cl.dims.n_z {
        return Err(CertifyError::Invalid(format!(
            "scenario mismatch: trajectory dims {:?}, closed loop {:?}",
            first.state.dims(),
            cl.dims
        )));
    }
    let ev = UEval::new(dc, cert.d_star, proto_s, proto_f)?;
    let xi0 = first.state.norm();
    let mut seg_start: Option<(f64, u64, f64)> = None;
    let mut prev: Option<LyapunovValues> = None;

    let close_segment = |report: &mut MonitorReport, start: Option<(f64, u64, f64)>, t_end: f64, u_end: f64| {
        if let Some((t0, j, u0)) = start {
            if t_end > t0 && u0 > 0.0 && u_end > 0.0 {
                let rate = -(u_end.ln() - u0.ln()) / (t_end - t0);
                report.segment_decay.push(SegmentDecay { t_start: t0, t_end, j, rate });
            }
        }
    };

    for (index, s) in traj.samples.iter().enumerate() {
        let u = ev.eval(&to_y_coords(cl, &s.state))?;
        let norm = s.state.norm();
        let envelope = cert.c1 * xi0 * (-cert.c2 * (s.t + s.j as f64)).exp();
        if norm > envelope + slack(envelope) {
            report.envelope_violations.push(EnvelopeViolation { index, t: s.t, j: s.j, norm, bound: envelope });
        }
        match (s.event, prev) {
            (SampleEvent::Flow, _) => {
                if seg_start.is_none() {
                    seg_start = Some((s.t, s.j, u.u));
                }
            }
            (kind, Some(before)) => {
                let prev_sample = &traj.samples[index - 1];
                close_segment(&mut report, seg_start.take(), prev_sample.t, before.u);
                let bound = if kind == SampleEvent::FastJump { before.u } else { cert.a_d * before.u };
                let v = JumpViolation { index, t: s.t, j: s.j, u_before: before.u, u_after: u.u, bound };
                let violated = u.u > bound + slack(bound);
                if kind == SampleEvent::FastJump {
                    report.fast_jumps += 1;
                    if violated {
                        report.fast_jump_violations.push(v);
                    }
                } else {
                    report.slow_jumps += 1;
                    if violated {
                        report.slow_jump_violations.push(v);
                    }
                }
                seg_start = Some((s.t, s.j, u.u));
            }
            (_, None) => return Err(CertifyError::Invalid("trajectory starts with a jump".into())),
        }
        report.series.push(USample { t: s.t, j: s.j, event: s.event, u_s: u.u_s, u_f: u.u_f, u: u.u, norm, envelope });
        prev = Some(u);
    }
    if let (Some(last), Some(u)) = (traj.samples.last(), prev) {
        close_segment(&mut report, seg_start.take(), last.t, u.u);
    }
    report.min_segment_decay = report.segment_decay.iter().map(|d| d.rate).reduce(f64::min);
    Ok(report)
}
