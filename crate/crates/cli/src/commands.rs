//! The subcommands as library functions returning serializable reports.

use crate::csvio;
use crate::error::{CliError, Result};
use crate::scenario::{PolicyName, Setup};
use crate::svg::{line_plot, Series};
use rayon::prelude::*;
use serde::Serialize;
use spncs_core::certify::{
    example_fixture as fixture, interconnection_constants, lmi_max_eigenvalue, lmi_perturbation_search,
    monitor_trajectory, slow_jump_constants, Certificate, MonitorReport, PerturbationReport, Side,
};
use spncs_core::hybridsim::{simulate, HybridState, HybridTrajectory, SampleEvent};
use spncs_core::mati::mati_bound;
use spncs_core::scheduler::{ChannelMode, ClockConfig};
use std::path::{Path, PathBuf};

/// Relative radius of the LMI neighbourhood searched when a side is marginal.
pub const LMI_SEARCH_RADIUS: f64 = 0.02;

/// Thread pool capped by SPNCS_THREADS when set.
pub fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SPNCS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Schema(format!("SPNCS_THREADS must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Io(e.to_string()))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    Ok(p)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    write_file(dir, name, crate::json::to_string(value).as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct FastTiming {
    pub epsilon: f64,
    /// ε·T_f in seconds.
    pub mati_f: f64,
    /// Largest fast MIATI allowed, mati_f/2.
    pub miati_f_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatiReport {
    pub mode: ChannelMode,
    pub mati_s_bound: f64,
    pub mati_f_bound_fast_time: Option<f64>,
    pub per_epsilon: Vec<FastTiming>,
    pub at_epsilon_star: Option<FastTiming>,
}

fn timing(epsilon: f64, t_f: f64) -> FastTiming {
    let mati_f = epsilon * t_f;
    FastTiming { epsilon, mati_f, miati_f_max: mati_f / 2.0 }
}

pub fn mati(setup: &Setup) -> Result<MatiReport> {
    let dc = setup.design()?;
    let t_s = mati_bound(&dc.mati_params_slow())?;
    let mode = setup.clocks.mode;
    if mode == ChannelMode::SlowOnly {
        return Ok(MatiReport { mode, mati_s_bound: t_s, mati_f_bound_fast_time: None, per_epsilon: vec![], at_epsilon_star: None });
    }
    let t_f = mati_bound(&dc.mati_params_fast())?;
    let at_star = setup.certificate().ok().map(|c| timing(c.epsilon_star, t_f));
    Ok(MatiReport {
        mode,
        mati_s_bound: t_s,
        mati_f_bound_fast_time: Some(t_f),
        per_epsilon: setup.simulation.epsilon.iter().map(|&e| timing(e, t_f)).collect(),
        at_epsilon_star: at_star,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LmiSection {
    pub slow_max_eig: f64,
    pub fast_max_eig: f64,
    pub slow_search: Option<PerturbationReport>,
    pub fast_search: Option<PerturbationReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub lmi: LmiSection,
    pub certificate: Certificate,
    pub fast_timing_at_epsilon_star: FastTiming,
}

fn lmi_side(setup: &Setup, side: Side) -> Result<(f64, Option<PerturbationReport>)> {
    let dc = setup.design()?;
    let eig = lmi_max_eigenvalue(&setup.cl, dc, side)?;
    if eig <= 0.0 {
        return Ok((eig, None));
    }
    let search = lmi_perturbation_search(&setup.cl, dc, side, LMI_SEARCH_RADIUS)?;
    if !search.feasible {
        return Err(CliError::Constraint(format!(
            "{} LMI infeasible: largest eigenvalue {eig:e}, best within ±{}%: {:e}",
            side.name(),
            LMI_SEARCH_RADIUS * 100.0,
            search.best_max_eig
        )));
    }
    Ok((eig, Some(search)))
}

pub fn design(setup: &Setup) -> Result<DesignReport> {
    let (slow_max_eig, slow_search) = lmi_side(setup, Side::Slow)?;
    let (fast_max_eig, fast_search) = lmi_side(setup, Side::Fast)?;
    let certificate = setup.certificate()?;
    let fast = timing(certificate.epsilon_star, certificate.mati_f_bound_fast_time);
    Ok(DesignReport {
        lmi: LmiSection { slow_max_eig, fast_max_eig, slow_search, fast_search },
        certificate,
        fast_timing_at_epsilon_star: fast,
    })
}

/// One grid point of a simulation run.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub index: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub policy: PolicyName,
    pub x0: HybridState,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub index: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub policy: PolicyName,
    pub clocks: ClockConfig,
    pub initial_norm: f64,
    pub terminal_norm: f64,
    pub terminal_ratio: Option<f64>,
    pub max_norm: f64,
    /// Terminal norm above the initial one.
    pub diverged: bool,
    pub samples: usize,
    pub slow_jumps: usize,
    pub fast_jumps: usize,
    pub schedule_valid: bool,
    pub trajectory_file: Option<String>,
}

pub fn grid(setup: &Setup, policies: &[PolicyName]) -> Vec<GridPoint> {
    let states = setup.initial_states();
    let mut out = Vec::new();
    for &epsilon in &setup.simulation.epsilon {
        for &policy in policies {
            for (seed, x0) in &states {
                out.push(GridPoint { index: out.len(), epsilon, seed: *seed, policy, x0: x0.clone() });
            }
        }
    }
    out
}

pub fn run_point(setup: &Setup, p: &GridPoint) -> Result<(RunSummary, HybridTrajectory)> {
    let at = |e: CliError| e.at(&format!("run {} (epsilon {}, seed {}, {:?})", p.index, p.epsilon, p.seed, p.policy));
    let cfg = setup.clock_config(p.epsilon).map_err(at)?;
    let policy = p.policy.policy(!p.seed, setup.simulation.tie_break);
    let traj = simulate(&setup.cl, &cfg, &p.x0, &policy, &setup.protocol_s, &setup.protocol_f, &setup.simulation.settings())
        .map_err(|e| at(e.into()))?;
    let initial_norm = p.x0.norm();
    let terminal_norm = traj.samples.last().map_or(initial_norm, |s| s.state.norm());
    let max_norm = traj.samples.iter().map(|s| s.state.norm()).fold(0.0, f64::max);
    let summary = RunSummary {
        index: p.index,
        epsilon: p.epsilon,
        seed: p.seed,
        policy: p.policy,
        clocks: cfg,
        initial_norm,
        terminal_norm,
        terminal_ratio: (initial_norm > 0.0).then(|| terminal_norm / initial_norm),
        max_norm,
        diverged: terminal_norm > initial_norm,
        samples: traj.samples.len(),
        slow_jumps: traj.count(SampleEvent::SlowJump),
        fast_jumps: traj.count(SampleEvent::FastJump),
        schedule_valid: traj.finalize(&cfg).is_ok(),
        trajectory_file: None,
    };
    Ok((summary, traj))
}

fn run_grid<T: Send>(
    setup: &Setup,
    points: &[GridPoint],
    f: impl Fn(&GridPoint, RunSummary, HybridTrajectory) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let pool = pool()?;
    pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let (s, t) = run_point(setup, p)?;
                f(p, s, t)
            })
            .collect()
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub runs: Vec<RunSummary>,
}

pub fn simulate_cmd(setup: &Setup, policy: PolicyName, out: Option<&Path>) -> Result<SimulateReport> {
    let points = grid(setup, &[policy]);
    let runs = run_grid(setup, &points, |p, mut s, traj| {
        if let Some(dir) = out {
            let mut buf = Vec::new();
            csvio::write_trajectory(&mut buf, setup.cl.dims, &traj)?;
            let name = format!("trajectory_{:03}.csv", p.index);
            write_file(dir, &name, &buf)?;
            s.trajectory_file = Some(name);
        }
        Ok(s)
    })?;
    let report = SimulateReport { runs };
    if let Some(dir) = out {
        write_json(dir, "summary.json", &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyRun {
    pub index: usize,
    pub epsilon: f64,
    pub seed: Option<u64>,
    pub schedule_valid: bool,
    pub passed: bool,
    pub monitor: MonitorReport,
    pub plots: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub certificate: Certificate,
    pub runs: Vec<CertifyRun>,
}

fn plots(dir: &Path, index: usize, m: &MonitorReport) -> Result<Vec<String>> {
    if m.series.is_empty() {
        return Ok(vec![]);
    }
    let slow: Vec<f64> = m.series.iter().filter(|s| s.event == SampleEvent::SlowJump).map(|s| s.t).collect();
    let pts = |f: fn(&spncs_core::certify::monitor::USample) -> f64| m.series.iter().map(|s| (s.t, f(s))).collect();
    let u = line_plot(
        "Composite Lyapunov function (grey lines: slow transmissions)",
        "U",
        &[
            Series { name: "U", color: "black", points: pts(|s| s.u) },
            Series { name: "U_s", color: "#1f77b4", points: pts(|s| s.u_s) },
            Series { name: "d U_f", color: "#d62728", points: pts(|s| s.u - s.u_s) },
        ],
        true,
        &slow,
    );
    let env = line_plot(
        "Distance to the attractor against the certified envelope",
        "|xi|",
        &[
            Series { name: "|xi(t,j)|", color: "black", points: pts(|s| s.norm) },
            Series { name: "c1 |xi0| exp(-c2 (t+j))", color: "#d62728", points: pts(|s| s.envelope) },
        ],
        true,
        &[],
    );
    let a = format!("u_{index:03}.svg");
    let b = format!("envelope_{index:03}.svg");
    write_file(dir, &a, u.as_bytes())?;
    write_file(dir, &b, env.as_bytes())?;
    Ok(vec![a, b])
}

fn certify_one(
    setup: &Setup,
    cert: &Certificate,
    index: usize,
    epsilon: f64,
    seed: Option<u64>,
    traj: &HybridTrajectory,
    out: Option<&Path>,
) -> Result<CertifyRun> {
    let cfg = setup.clock_config(epsilon)?;
    let monitor = monitor_trajectory(traj, &setup.cl, setup.design()?, cert, &setup.protocol_s, &setup.protocol_f)?;
    let plots = match out {
        Some(dir) => plots(dir, index, &monitor)?,
        None => vec![],
    };
    Ok(CertifyRun {
        index,
        epsilon,
        seed,
        schedule_valid: traj.finalize(&cfg).is_ok(),
        passed: monitor.passed(),
        monitor,
        plots,
    })
}

/// Monitors a supplied trajectory, or simulates the scenario grid and
/// monitors every run.
pub fn certify(setup: &Setup, policy: PolicyName, trajectory: Option<&HybridTrajectory>, out: Option<&Path>) -> Result<CertifyReport> {
    let cert = setup.certificate()?;
    let runs = match trajectory {
        Some(traj) => vec![certify_one(setup, &cert, 0, setup.simulation.epsilon[0], None, traj, out)?],
        None => {
            let points = grid(setup, &[policy]);
            run_grid(setup, &points, |p, _, traj| certify_one(setup, &cert, p.index, p.epsilon, Some(p.seed), &traj, out))?
        }
    };
    let report = CertifyReport { certificate: cert, runs };
    if let Some(dir) = out {
        write_json(dir, "certify.json", &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMonitor {
    pub fast_jump_violations: usize,
    pub slow_jump_violations: usize,
    pub envelope_violations: usize,
    pub min_segment_decay: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub run: RunSummary,
    pub monitor: Option<SweepMonitor>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub epsilon_star: Option<f64>,
    pub entries: Vec<SweepEntry>,
}

pub fn sweep(setup: &Setup, policies: &[PolicyName], out: Option<&Path>) -> Result<SweepReport> {
    let cert = match &setup.design {
        Some(_) => Some(setup.certificate()?),
        None => None,
    };
    let points = grid(setup, policies);
    let entries = run_grid(setup, &points, |_, run, traj| {
        let monitor = match &cert {
            Some(c) => {
                let m = monitor_trajectory(&traj, &setup.cl, setup.design()?, c, &setup.protocol_s, &setup.protocol_f)?;
                Some(SweepMonitor {
                    fast_jump_violations: m.fast_jump_violations.len(),
                    slow_jump_violations: m.slow_jump_violations.len(),
                    envelope_violations: m.envelope_violations.len(),
                    min_segment_decay: m.min_segment_decay,
                })
            }
            None => None,
        };
        Ok(SweepEntry { run, monitor })
    })?;
    let report = SweepReport { epsilon_star: cert.map(|c| c.epsilon_star), entries };
    if let Some(dir) = out {
        write_json(dir, "sweep.json", &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub quantity: String,
    /// Printed value, or the printed closed-form specialization evaluated.
    pub reference: Option<f64>,
    pub reference_kind: &'static str,
    pub computed: f64,
    pub relative_deviation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproduceReport {
    pub rows: Vec<ComparisonRow>,
    pub lmi: LmiSection,
    pub certificate: Certificate,
}

fn row(q: &str, reference: Option<f64>, kind: &'static str, computed: f64) -> ComparisonRow {
    ComparisonRow {
        quantity: q.to_string(),
        reference,
        reference_kind: kind,
        computed,
        relative_deviation: reference.filter(|r| *r != 0.0).map(|r| (computed - r) / r),
    }
}

pub fn reproduce_example() -> Result<ReproduceReport> {
    let setup = crate::scenario::builtin_example().resolve()?;
    let dc = setup.design()?;
    let cert = setup.certificate()?;
    let (b1, b2, b3) = interconnection_constants(&setup.cl, dc)?;
    let (fb1, fb2, fb3) = fixture::interconnection(dc)?;
    let (l1, l2) = slow_jump_constants(&setup.cl, dc)?;
    let (fl1, fl2) = fixture::slow_jump(dc)?;
    let slow_eig = lmi_max_eigenvalue(&setup.cl, dc, Side::Slow)?;
    let fast_eig = lmi_max_eigenvalue(&setup.cl, dc, Side::Fast)?;
    let slow_search = lmi_perturbation_search(&setup.cl, dc, Side::Slow, LMI_SEARCH_RADIUS)?;
    let fast_search = lmi_perturbation_search(&setup.cl, dc, Side::Fast, LMI_SEARCH_RADIUS)?;
    let printed = "printed";
    let formula = "printed formula";
    let rows = vec![
        row("T(L_s, gamma_s, lambda_s*) [s]", Some(0.3601), printed, cert.mati_s_bound),
        row("T(L_f, gamma_f, lambda_f*) [fast time]", Some(1.11), printed, cert.mati_f_bound_fast_time),
        row("epsilon*", Some(0.0162), printed, cert.epsilon_star),
        row("fast MATI at epsilon* [s]", Some(0.018), printed, cert.mati_f_at_epsilon_star),
        row("fast MIATI at epsilon* [s]", Some(0.009), printed, cert.miati_f_at_epsilon_star),
        row("lambda_1", Some(fl1), formula, l1),
        row("lambda_2", Some(fl2), formula, l2),
        row("b_1 (Lambda_b1 fixture vs generic)", Some(fb1), formula, b1),
        row("b_2 (Lambda_b2 fixture vs generic)", Some(fb2), formula, b2),
        row("b_3 (Lambda_b3 fixture vs generic)", Some(fb3), formula, b3),
        row("slow LMI largest eigenvalue", None, "feasible", slow_eig),
        row("slow LMI best eigenvalue within 2%", None, "feasible", slow_search.best_max_eig),
        row("fast LMI largest eigenvalue", None, "feasible", fast_eig),
        row("fast LMI best eigenvalue within 2%", None, "feasible", fast_search.best_max_eig),
    ];
    Ok(ReproduceReport {
        rows,
        lmi: LmiSection {
            slow_max_eig: slow_eig,
            fast_max_eig: fast_eig,
            slow_search: Some(slow_search),
            fast_search: Some(fast_search),
        },
        certificate: cert,
    })
}

pub fn format_table(r: &ReproduceReport) -> String {
    let mut s = format!("{:<40} {:>14} {:>14} {:>10}  {}\n", "quantity", "reference", "computed", "rel.dev", "reference kind");
    for row in &r.rows {
        let reference = row.reference.map_or("-".to_string(), |v| format!("{v:.6e}"));
        let dev = row.relative_deviation.map_or("-".to_string(), |d| format!("{:+.2}%", d * 100.0));
        s += &format!("{:<40} {:>14} {:>14.6e} {:>10}  {}\n", row.quantity, reference, row.computed, dev, row.reference_kind);
    }
    s
}
