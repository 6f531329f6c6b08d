//! Trajectory CSV: one row per sample, columns fixed by the state dims.

use crate::error::{CliError, Result};
use spncs_core::hybridsim::{HybridState, HybridTrajectory, Sample, SampleEvent};
use spncs_core::ltimodel::StateDims;
use std::io::{Read, Write};

pub fn header(d: StateDims) -> Vec<String> {
    let mut h: Vec<String> = vec!["t".into(), "j".into(), "event".into()];
    fn names(p: &'static str, n: usize) -> impl Iterator<Item = String> {
        (0..n).map(move |i| format!("{p}{i}"))
    }
    h.extend(names("x", d.n_x));
    h.extend(names("e_s", d.n_es));
    h.extend(["tau_s".into(), "kappa_s".into()]);
    h.extend(names("z", d.n_z));
    h.extend(names("e_f", d.n_ef));
    h.extend(["tau_f".into(), "kappa_f".into()]);
    h
}

fn row(s: &Sample) -> Vec<String> {
    let st = &s.state;
    let f = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut r = vec![s.t.to_string(), s.j.to_string(), s.event.name().to_string()];
    r.extend(f(&st.x));
    r.extend(f(&st.e_s));
    r.extend([st.tau_s.to_string(), st.kappa_s.to_string()]);
    r.extend(f(&st.z));
    r.extend(f(&st.e_f));
    r.extend([st.tau_f.to_string(), st.kappa_f.to_string()]);
    r
}

pub fn write_trajectory<W: Write>(w: W, dims: StateDims, traj: &HybridTrajectory) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header(dims))?;
    for s in &traj.samples {
        wr.write_record(row(s))?;
    }
    wr.flush()?;
    Ok(())
}

fn dims_from_header(h: &csv::StringRecord) -> Result<StateDims> {
    let count = |p: &str| {
        h.iter().filter(|c| c.strip_prefix(p).is_some_and(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit()))).count()
    };
    let d = StateDims { n_x: count("x"), n_es: count("e_s"), n_z: count("z"), n_ef: count("e_f") };
    let want = header(d);
    if h.iter().ne(want.iter().map(String::as_str)) {
        return Err(CliError::Schema(format!("trajectory header does not match the column layout {want:?}")));
    }
    Ok(d)
}

pub fn read_trajectory<R: Read>(r: R) -> Result<(StateDims, HybridTrajectory)> {
    let mut rd = csv::Reader::from_reader(r);
    let d = dims_from_header(rd.headers()?)?;
    let mut traj = HybridTrajectory::default();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CliError::Schema(format!("trajectory row {}: bad {what}", line + 1));
        let num = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad("number"));
        let int = |i: usize| rec.get(i).and_then(|v| v.parse::<u64>().ok()).ok_or_else(|| bad("integer"));
        let event = match rec.get(2) {
            Some("flow") => SampleEvent::Flow,
            Some("slow_jump") => SampleEvent::SlowJump,
            Some("fast_jump") => SampleEvent::FastJump,
            _ => return Err(bad("event")),
        };
        let take = |n: usize, k: &mut usize| -> Result<Vec<f64>> {
            let v = (*k..*k + n).map(num).collect();
            *k += n;
            v
        };
        let mut k = 3;
        let x = take(d.n_x, &mut k)?;
        let e_s = take(d.n_es, &mut k)?;
        let (tau_s, kappa_s) = (num(k)?, int(k + 1)?);
        k += 2;
        let z = take(d.n_z, &mut k)?;
        let e_f = take(d.n_ef, &mut k)?;
        let state = HybridState { x, e_s, tau_s, kappa_s, z, e_f, tau_f: num(k)?, kappa_f: int(k + 1)? };
        traj.samples.push(Sample { t: num(0)?, j: int(1)?, state, event });
    }
    Ok((d, traj))
}
