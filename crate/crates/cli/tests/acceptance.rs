//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per check; exits nonzero if any fails.

use rayon::prelude::*;
use spncs_cli::commands;
use spncs_cli::scenario::builtin_example;
use spncs_core::certify::{
    build_certificate, example_fixture as fixture, interconnection_constants, lmi_max_eigenvalue,
    lmi_perturbation_search, monitor_trajectory, DesignKnobs, Side,
};
use spncs_core::hybridsim::{flow_map, random_initial_state, simulate, HybridState, SimSettings};
use spncs_core::ltimodel::{
    assemble_closed_loop, example, example_closed_loop, example_fixture, quasi_steady_state, ClosedLoop,
    ControllerDims, ControllerMatrices, PlantDims, PlantMatrices,
};
use spncs_core::mati::{mati_bound, phi_crossing_time, phi_eval, phi_rk4, MatiParams, PhiClock};
use spncs_core::numerics::{mat_mul, spectral_norm, sym_eig_extremes, Matrix};
use spncs_core::protocols::{protocol_constants, protocol_jump, protocol_lyapunov, NodePartition, ProtocolKind, ProtocolSpec};
use spncs_core::rng::SplitMix64;
use spncs_core::scheduler::{
    validate_sequence, ChannelMode, ClockConfig, ClockState, JumpPolicy, PolicyKind, Scheduler, TieBreak,
};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

fn mati_reproduction() -> Outcome {
    let ts = mati_bound(&MatiParams::new(0.0, 2.58, 0.33).unwrap()).unwrap();
    let tf = mati_bound(&MatiParams::new(0.0, 0.64, 0.46).unwrap()).unwrap();
    let pass = (0.3547..=0.3655).contains(&ts) && (1.093..=1.127).contains(&tf);
    outcome(pass, format!("T_s = {ts:.6} s, T_f = {tf:.6}"))
}

fn random_triple(rng: &mut SplitMix64, branch: usize) -> MatiParams {
    let lambda_star = uniform(rng, 0.05, 0.95);
    let (l, gamma) = match branch {
        0 => {
            let l = uniform(rng, 0.0, 2.0);
            (l, l + uniform(rng, 0.1, 3.0))
        }
        1 => {
            let l = uniform(rng, 0.2, 3.0);
            (l, l)
        }
        _ => {
            let l = uniform(rng, 0.5, 3.0);
            (l, l * uniform(rng, 0.2, 0.9))
        }
    };
    MatiParams::new(l, gamma, lambda_star).unwrap()
}

/// Max RK4 error over the nodes of an n-step grid on [0, t].
fn rk4_grid_error(clock: &PhiClock, t: f64, n: usize) -> f64 {
    (1..=n)
        .map(|k| {
            let tk = t * k as f64 / n as f64;
            (phi_rk4(clock, tk, k) - phi_eval(clock, tk)).abs()
        })
        .fold(0.0, f64::max)
}

fn phi_consistency() -> Outcome {
    let mut rng = SplitMix64::new(2024);
    let mut worst_rel = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..50 {
        let p = random_triple(&mut rng, k % 3);
        let t = mati_bound(&p).unwrap();
        let clock = PhiClock::new(p).unwrap();
        worst_rel = worst_rel.max((phi_crossing_time(&clock) - t).abs() / t);
        let mut n = 16;
        while rk4_grid_error(&clock, t, n) > 1e-6 {
            n *= 2;
        }
        let ratio = rk4_grid_error(&clock, t, n) / rk4_grid_error(&clock, t, 2 * n);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    let pass = worst_rel <= 1e-8 && lo >= 12.0 && hi <= 20.0;
    outcome(pass, format!("max crossing/bound rel. error {worst_rel:.2e}; step-halving ratios in [{lo:.2}, {hi:.2}]"))
}

fn lmi_check() -> Outcome {
    let cl = example_closed_loop();
    let dc = example_fixture().2;
    let slow = lmi_max_eigenvalue(&cl, &dc, Side::Slow).unwrap();
    let fast = lmi_perturbation_search(&cl, &dc, Side::Fast, 0.02).unwrap();
    let pass = slow <= 0.05 && fast.best_max_eig <= 0.0;
    outcome(
        pass,
        format!(
            "slow lambda_max = {slow:.4e}; fast nominal {:.4e}, best within 2% {:.4e}",
            fast.nominal_max_eig, fast.best_max_eig
        ),
    )
}

fn epsilon_star_reproduction() -> Outcome {
    let setup = builtin_example().resolve().unwrap();
    let r = commands::design(&setup).unwrap();
    let c = &r.certificate;
    let rel = (c.epsilon_star - 0.0162) / 0.0162;
    outcome(
        rel.abs() <= 0.15,
        format!(
            "epsilon* = {:.5} ({:+.1}% vs 0.0162); mu = {:.4}, lambda = {:.4}, d* = {:.3}, b = ({:.4}, {:.4}, {:.4}), a_psi = ({:.4}, {:.4})",
            c.epsilon_star,
            rel * 100.0,
            c.mu,
            c.lambda_decay,
            c.d_star,
            c.b1,
            c.b2,
            c.b3,
            c.a_psi_s,
            c.a_psi_f
        ),
    )
}

fn lyapunov_trajectory_checks() -> Outcome {
    let cl = example_closed_loop();
    let dc = example_fixture().2;
    let cert = build_certificate(&cl, &dc, example::MIATI_S, example::MATI_S, &DesignKnobs::default()).unwrap();
    let eps = 0.01;
    let mati_f = eps * cert.mati_f_bound_fast_time;
    let cfg = ClockConfig {
        miati_s: example::MIATI_S,
        mati_s: example::MATI_S,
        miati_f: mati_f / 3.0,
        mati_f,
        epsilon: eps,
        mode: ChannelMode::Dual,
    };
    let reset = ProtocolSpec::reset_all(1);
    let policy = JumpPolicy { kind: PolicyKind::Latest, tie_break: TieBreak::SlowFirst };
    let counts: Vec<[usize; 4]> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = SplitMix64::new(seed);
            let x0 = random_initial_state(cl.dims, ClockState::default(), 10.0, &mut rng);
            let traj = simulate(&cl, &cfg, &x0, &policy, &reset, &reset, &SimSettings::new(20.0)).unwrap();
            let m = monitor_trajectory(&traj, &cl, &dc, &cert, &reset, &reset).unwrap();
            [
                m.fast_jump_violations.len(),
                m.slow_jump_violations.len(),
                m.envelope_violations.len(),
                usize::from(traj.finalize(&cfg).is_err()),
            ]
        })
        .collect();
    let total = counts.iter().fold([0; 4], |mut a, c| {
        (0..4).for_each(|i| a[i] += c[i]);
        a
    });
    let runs_with_envelope = counts.iter().filter(|c| c[2] > 0).count();
    outcome(
        total == [0; 4],
        format!(
            "(a) fast-jump violations {}; (b) slow-jump violations {}; (c) envelope violations {} in {runs_with_envelope}/100 runs; (d) invalid schedules {}",
            total[0], total[1], total[2], total[3]
        ),
    )
}

fn protocol_contraction() -> Outcome {
    let mut rng = SplitMix64::new(77);
    let mut failures = 0;
    for draw in 0..10_000 {
        let nodes = 1 + (rng.next_u64() % 4) as usize;
        let sizes: Vec<usize> = (0..nodes).map(|_| 1 + (rng.next_u64() % 3) as usize).collect();
        let kind = [ProtocolKind::ResetAll, ProtocolKind::Tod, ProtocolKind::RoundRobin][draw % 3];
        let p = ProtocolSpec { kind, partition: NodePartition::new(sizes).unwrap() };
        let c = protocol_constants(&p);
        let kappa = rng.next_u64() % 1000;
        let scale = 10f64.powf(uniform(&mut rng, -3.0, 3.0));
        let e: Vec<f64> = (0..p.dim()).map(|_| scale * rng.next_gaussian()).collect();
        let w = protocol_lyapunov(&p, kappa, &e).unwrap();
        let after = protocol_jump(&p, kappa, &e).unwrap();
        let w_next = protocol_lyapunov(&p, kappa + 1, &after).unwrap();
        let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tol = 1e-12 * n;
        let ok = w_next <= c.lambda * w + tol && c.a_w_lower * n <= w + tol && w <= c.a_w_upper * n + tol;
        failures += usize::from(!ok);
    }
    outcome(failures == 0, format!("{failures} failures in 10000 draws"))
}

fn random_matrix(rng: &mut SplitMix64, r: usize, c: usize, s: f64) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| s * rng.next_gaussian()).collect()).unwrap()
}

fn synthetic_loop(rng: &mut SplitMix64) -> ClosedLoop {
    let mut dim = |lo: u64, hi: u64| (lo + rng.next_u64() % (hi - lo + 1)) as usize;
    let pd = PlantDims { n_xp: dim(1, 3), n_zp: dim(1, 3), n_ys: dim(0, 2), n_yf: dim(0, 2), n_us: dim(0, 2), n_uf: dim(0, 2) };
    let cd = ControllerDims { n_xc: dim(0, 2), n_zc: dim(0, 2) };
    let mut p = PlantMatrices::empty(pd);
    let mut c = ControllerMatrices::empty(cd);
    let m = |rng: &mut SplitMix64, r: usize, cc: usize| Some(random_matrix(rng, r, cc, 0.5));
    let stable = |rng: &mut SplitMix64, n: usize| Some(Matrix::identity(n).scale(-3.0).add(&random_matrix(rng, n, n, 0.3)).unwrap());
    p.a11p = m(rng, pd.n_xp, pd.n_xp);
    p.a12p = m(rng, pd.n_xp, pd.n_zp);
    p.a21p = m(rng, pd.n_zp, pd.n_xp);
    p.a22p = stable(rng, pd.n_zp);
    p.a13p = m(rng, pd.n_xp, pd.n_us);
    p.a14p = m(rng, pd.n_xp, pd.n_uf);
    p.a23p = m(rng, pd.n_zp, pd.n_us);
    p.a24p = m(rng, pd.n_zp, pd.n_uf);
    p.ax_ps = m(rng, pd.n_ys, pd.n_xp);
    p.ax_pf = m(rng, pd.n_yf, pd.n_xp);
    p.az_pf = m(rng, pd.n_yf, pd.n_zp);
    c.a11c = m(rng, cd.n_xc, cd.n_xc);
    c.a12c = m(rng, cd.n_xc, cd.n_zc);
    c.a21c = m(rng, cd.n_zc, cd.n_xc);
    c.a22c = stable(rng, cd.n_zc);
    c.a13c = m(rng, cd.n_xc, pd.n_ys);
    c.a14c = m(rng, cd.n_xc, pd.n_yf);
    c.a23c = m(rng, cd.n_zc, pd.n_ys);
    c.a24c = m(rng, cd.n_zc, pd.n_yf);
    c.ax_cs = m(rng, pd.n_us, cd.n_xc);
    c.ax_cf = m(rng, pd.n_uf, cd.n_xc);
    c.az_cf = m(rng, pd.n_uf, cd.n_zc);
    assemble_closed_loop(&p, &c).unwrap()
}

/// Largest |g_z(x, H̄(x, e_s), e_s, 0)| over `n` random slow states.
fn qss_residual(cl: &ClosedLoop, rng: &mut SplitMix64, n: usize) -> f64 {
    let d = cl.dims;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let x: Vec<f64> = (0..d.n_x).map(|_| 5.0 * rng.next_gaussian()).collect();
        let e_s: Vec<f64> = (0..d.n_es).map(|_| 5.0 * rng.next_gaussian()).collect();
        let z = quasi_steady_state(cl, &x, &e_s).unwrap();
        let mut g = vec![0.0; d.n_z];
        cl.a31.apply_add(&x, &mut g);
        cl.a32.apply_add(&e_s, &mut g);
        cl.a33.apply_add(&z, &mut g);
        worst = worst.max(g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    worst
}

fn quasi_steady_identity() -> Outcome {
    let mut rng = SplitMix64::new(5);
    let builtin = qss_residual(&example_closed_loop(), &mut rng, 1000);
    let mut synthetic = 0.0f64;
    for _ in 0..10 {
        let cl = synthetic_loop(&mut rng);
        synthetic = synthetic.max(qss_residual(&cl, &mut rng, 100));
    }
    outcome(builtin <= 1e-10 && synthetic <= 1e-10, format!("max residual: example {builtin:.2e}, synthetic {synthetic:.2e}"))
}

fn power_iteration_norm(a: &Matrix) -> f64 {
    let g = mat_mul(&a.transpose(), a).unwrap();
    let mut v = vec![1.0; g.cols()];
    let mut lam = 0.0;
    for _ in 0..20_000 {
        let w = g.apply(&v).unwrap();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        let next = n / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / n).collect();
        if (next - lam).abs() <= 1e-15 * next {
            lam = next;
            break;
        }
        lam = next;
    }
    lam.sqrt()
}

/// Number of eigenvalues of symmetric `a` below `s`, from the signs of the
/// pivots of A − sI.
fn count_below(a: &Matrix, s: f64) -> usize {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j) - if i == j { s } else { 0.0 }).collect()).collect();
    let mut neg = 0;
    for k in 0..n {
        let mut p = m[k][k];
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            neg += 1;
        }
        for i in k + 1..n {
            let f = m[i][k] / p;
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    neg
}

fn bisect_extremes(a: &Matrix) -> (f64, f64) {
    let r = a.data().iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    let n = a.rows();
    let find = |target: usize| {
        let (mut lo, mut hi) = (-r, r);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(a, mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    (find(1), find(n))
}

fn oracle_equivalences() -> Outcome {
    let mut rng = SplitMix64::new(11);
    let mut norm_err = 0.0f64;
    let mut eig_err = 0.0f64;
    for _ in 0..200 {
        let r = 1 + (rng.next_u64() % 5) as usize;
        let c = 1 + (rng.next_u64() % 5) as usize;
        let a = random_matrix(&mut rng, r, c, 2.0);
        let s = spectral_norm(&a);
        norm_err = norm_err.max((s - power_iteration_norm(&a)).abs() / s.max(1.0));
        let b = random_matrix(&mut rng, c, c, 2.0);
        let sym = b.add(&b.transpose()).unwrap();
        let (lo, hi) = sym_eig_extremes(&sym).unwrap();
        let (olo, ohi) = bisect_extremes(&sym);
        eig_err = eig_err.max((lo - olo).abs().max((hi - ohi).abs()) / sym.max_abs().max(1.0));
    }

    let cl = example_closed_loop();
    let d = cl.dims;
    let eps = 0.01;
    let rows: Vec<Matrix> = [
        [&cl.a11, &cl.a12, &cl.a13, &cl.a14].map(|m| m.clone()),
        [&cl.a21, &cl.a22, &cl.a23, &cl.a24].map(|m| m.clone()),
        [&cl.a31, &cl.a32, &cl.a33, &cl.a34].map(|m| m.scale(1.0 / eps)),
        [(&cl.a41e, &cl.a41), (&cl.a42e, &cl.a42), (&cl.a43e, &cl.a43), (&cl.a44e, &cl.a44)]
            .map(|(e, m)| e.scale(eps).add(m).unwrap().scale(1.0 / eps)),
    ]
    .iter()
    .map(|r| Matrix::hstack(&r.iter().collect::<Vec<_>>()).unwrap())
    .collect();
    let big = Matrix::vstack(&rows.iter().collect::<Vec<_>>()).unwrap();
    let mut flow_err = 0.0f64;
    for k in 0..100 {
        let mut s = HybridState::zeros(d);
        if k == 0 {
            s.x[0] = 1.0;
        } else {
            let v: Vec<f64> = (0..d.total()).map(|_| rng.next_gaussian()).collect();
            s.set_continuous(&v);
        }
        let got = flow_map(&cl, &s, eps).cont;
        let want = big.apply(&s.continuous()).unwrap();
        let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        flow_err = flow_err.max(got.iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale);
    }

    let dc = example_fixture().2;
    let (b1, _, _) = interconnection_constants(&cl, &dc).unwrap();
    let fb1 = spectral_norm(&fixture::lambda_b1(&dc));
    let b1_rel = (b1 - fb1).abs() / fb1;
    let pass = norm_err <= 1e-8 && eig_err <= 1e-8 && flow_err <= 1e-12 && b1_rel <= 0.05;
    outcome(
        pass,
        format!(
            "spectral norm {norm_err:.1e}, eigen extremes {eig_err:.1e}, flow map {flow_err:.1e}, b1 generic {b1:.4} vs fixture {fb1:.4} ({:.2}%)",
            b1_rel * 100.0
        ),
    )
}

fn scheduler_soundness() -> Outcome {
    let base = ClockConfig {
        miati_s: example::MIATI_S,
        mati_s: example::MATI_S,
        miati_f: 0.0037,
        mati_f: 0.0111,
        epsilon: 0.01,
        mode: ChannelMode::Dual,
    };
    let policies = [PolicyKind::Earliest, PolicyKind::Latest, PolicyKind::UniformRandom { seed: 9 }];
    let mut failures = Vec::new();
    let mut runs = 0;
    let mut check = |cfg: ClockConfig, kind: PolicyKind, tie: TieBreak, label: String| {
        runs += 1;
        let ok = Scheduler::new(cfg, JumpPolicy { kind, tie_break: tie })
            .and_then(|mut s| s.schedule(ClockState::default(), 500))
            .map(|(slow, fast)| validate_sequence(&cfg, &slow, &fast))
            .unwrap_or(false);
        if !ok {
            failures.push(label);
        }
    };
    for mode in [ChannelMode::Dual, ChannelMode::SlowOnly, ChannelMode::FastOnly] {
        for kind in policies {
            for tie in [TieBreak::SlowFirst, TieBreak::FastFirst] {
                check(ClockConfig { mode, ..base }, kind, tie, format!("{mode:?}/{kind:?}/{tie:?}"));
            }
        }
    }
    let degenerate = ClockConfig { miati_f: base.mati_f / 2.0, ..base };
    for kind in policies {
        check(degenerate, kind, TieBreak::SlowFirst, format!("degenerate/{kind:?}"));
    }
    outcome(failures.is_empty(), format!("{} of {runs} 500-event schedules valid; failing: {failures:?}", runs - failures.len()))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 9] = [
        ("MATI bound reproduction", mati_reproduction),
        ("phi clock and MATI bound consistency", phi_consistency),
        ("LMI feasibility", lmi_check),
        ("epsilon* reproduction", epsilon_star_reproduction),
        ("trajectory Lyapunov properties", lyapunov_trajectory_checks),
        ("protocol contraction and sandwich", protocol_contraction),
        ("quasi-steady-state identity", quasi_steady_identity),
        ("oracle equivalences", oracle_equivalences),
        ("scheduler soundness", scheduler_soundness),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!o.pass);
        println!(
            "acceptance {}/9 {name}: {} ({}; {:.2?})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed()
        );
    }
    println!("acceptance summary: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
