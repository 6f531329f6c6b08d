//! Scenario files: the loop, its timing, protocols, design constants and
//! the simulation grid. Everything is checked for consistency up front.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use spncs_core::certify::{build_certificate, Certificate, DesignConstants, DesignKnobs};
use spncs_core::hybridsim::{HybridState, SimSettings};
use spncs_core::ltimodel::{
    assemble_closed_loop, example, example_fixture, ClosedLoop, ControllerMatrices, PlantMatrices,
};
use spncs_core::mati::mati_bound;
use spncs_core::protocols::ProtocolSpec;
use spncs_core::scheduler::{ChannelMode, ClockConfig, ClockState, JumpPolicy, PolicyKind, TieBreak};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Example,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub builtin: Option<Builtin>,
    #[serde(default)]
    pub plant: Option<PlantMatrices>,
    #[serde(default)]
    pub controller: Option<ControllerMatrices>,
    #[serde(default)]
    pub clocks: Option<ClockSpec>,
    #[serde(default)]
    pub protocol_s: Option<ProtocolSpec>,
    #[serde(default)]
    pub protocol_f: Option<ProtocolSpec>,
    #[serde(default)]
    pub design: Option<DesignConstants>,
    #[serde(default)]
    pub knobs: DesignKnobs,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Transmission timing. Fast bounds left out are derived per ε from the
/// fast MATI bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSpec {
    pub miati_s: f64,
    pub mati_s: f64,
    #[serde(default)]
    pub mati_f: Option<f64>,
    #[serde(default)]
    pub miati_f: Option<f64>,
    /// miati_f = fraction·mati_f when miati_f is not given.
    #[serde(default = "third")]
    pub miati_f_fraction: f64,
    #[serde(default)]
    pub mode: ChannelMode,
}

fn third() -> f64 {
    1.0 / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Earliest,
    #[default]
    Latest,
    Random,
}

impl PolicyName {
    pub fn policy(self, seed: u64, tie_break: TieBreak) -> JumpPolicy {
        let kind = match self {
            PolicyName::Earliest => PolicyKind::Earliest,
            PolicyName::Latest => PolicyKind::Latest,
            PolicyName::Random => PolicyKind::UniformRandom { seed },
        };
        JumpPolicy { kind, tie_break }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub policy: PolicyName,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Random initial states are drawn in this ball.
    #[serde(default = "default_radius")]
    pub initial_radius: f64,
    /// Explicit initial states; replace the seeded draws when present.
    #[serde(default)]
    pub initial_states: Vec<HybridState>,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn default_epsilon() -> Vec<f64> {
    vec![0.01]
}

fn default_t_end() -> f64 {
    20.0
}

fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn default_radius() -> f64 {
    10.0
}

fn one() -> usize {
    1
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            epsilon: default_epsilon(),
            t_end: default_t_end(),
            step: None,
            policy: PolicyName::default(),
            tie_break: TieBreak::default(),
            seeds: default_seeds(),
            initial_radius: default_radius(),
            initial_states: Vec::new(),
            record_every: 1,
        }
    }
}

impl SimulationSpec {
    pub fn settings(&self) -> SimSettings {
        SimSettings { t_end: self.t_end, step: self.step, record_every: self.record_every }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// A validated scenario with the closed loop assembled.
#[derive(Debug, Clone)]
pub struct Setup {
    pub cl: ClosedLoop,
    pub design: Option<DesignConstants>,
    pub clocks: ClockSpec,
    pub protocol_s: ProtocolSpec,
    pub protocol_f: ProtocolSpec,
    pub knobs: DesignKnobs,
    pub simulation: SimulationSpec,
    pub out_dir: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

pub fn builtin_example() -> Scenario {
    Scenario { builtin: Some(Builtin::Example), ..Scenario::default() }
}

fn schema(m: impl Into<String>) -> CliError {
    CliError::Schema(m.into())
}

impl Scenario {
    pub fn resolve(self) -> Result<Setup> {
        let (plant, controller, fixture_dc) = match (self.builtin, self.plant, self.controller) {
            (Some(Builtin::Example), None, None) => {
                let (p, c, dc) = example_fixture();
                (p, c, Some(dc))
            }
            (Some(_), _, _) => return Err(schema("builtin cannot be combined with plant/controller")),
            (None, Some(p), Some(c)) => (p, c, None),
            (None, _, _) => return Err(schema("need either builtin or both plant and controller")),
        };
        let cl = assemble_closed_loop(&plant, &controller)?;
        let d = cl.dims;
        let design = self.design.or(fixture_dc);
        let clocks = match (self.clocks, self.builtin) {
            (Some(c), _) => c,
            (None, Some(Builtin::Example)) => ClockSpec {
                miati_s: example::MIATI_S,
                mati_s: example::MATI_S,
                mati_f: None,
                miati_f: None,
                miati_f_fraction: third(),
                mode: ChannelMode::Dual,
            },
            (None, None) => return Err(schema("clocks are required")),
        };
        let protocol_s = self.protocol_s.unwrap_or_else(|| ProtocolSpec::reset_all(d.n_es));
        let protocol_f = self.protocol_f.unwrap_or_else(|| ProtocolSpec::reset_all(d.n_ef));
        if protocol_s.dim() != d.n_es {
            return Err(schema(format!("protocol_s covers {} errors, slow channel has {}", protocol_s.dim(), d.n_es)));
        }
        if protocol_f.dim() != d.n_ef {
            return Err(schema(format!("protocol_f covers {} errors, fast channel has {}", protocol_f.dim(), d.n_ef)));
        }
        if let Some(dc) = &design {
            if dc.p_s.shape() != (d.n_x, d.n_x) || dc.p_f.shape() != (d.n_z, d.n_z) {
                return Err(schema(format!(
                    "design P_s {:?} / P_f {:?} do not match n_x = {}, n_z = {}",
                    dc.p_s.shape(),
                    dc.p_f.shape(),
                    d.n_x,
                    d.n_z
                )));
            }
            dc.validate()?;
        }
        let sim = self.simulation;
        if sim.epsilon.is_empty() || sim.epsilon.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(schema("simulation.epsilon must be a nonempty list of positive numbers"));
        }
        if !(sim.t_end >= 0.0 && sim.t_end.is_finite()) {
            return Err(schema("simulation.t_end must be finite and nonnegative"));
        }
        if let Some(h) = sim.step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(schema("simulation.step must be positive"));
            }
        }
        if sim.initial_states.is_empty() && sim.seeds.is_empty() {
            return Err(schema("simulation needs seeds or initial_states"));
        }
        for (i, s) in sim.initial_states.iter().enumerate() {
            if s.dims() != d {
                return Err(schema(format!("initial_states[{i}] has dims {:?}, loop has {:?}", s.dims(), d)));
            }
        }
        if !(clocks.miati_f_fraction > 0.0 && clocks.miati_f_fraction <= 0.5) {
            return Err(schema("clocks.miati_f_fraction must lie in (0, 1/2]"));
        }
        let setup = Setup {
            cl,
            design,
            clocks,
            protocol_s,
            protocol_f,
            knobs: self.knobs,
            simulation: sim,
            out_dir: self.output.dir,
        };
        for &eps in &setup.simulation.epsilon {
            setup.clock_config(eps)?;
        }
        for s in &setup.simulation.initial_states {
            let cfg = setup.clock_config(setup.simulation.epsilon[0])?;
            if !spncs_core::scheduler::classify(&cfg, &s.clocks()).in_flow {
                return Err(schema(format!("initial clocks ({}, {}) lie outside the flow set", s.tau_s, s.tau_f)));
            }
        }
        Ok(setup)
    }
}

impl Setup {
    pub fn design(&self) -> Result<&DesignConstants> {
        self.design.as_ref().ok_or_else(|| schema("design constants are required for this command"))
    }

    /// Fast MATI bound in stretched time.
    pub fn fast_bound(&self) -> Result<f64> {
        Ok(mati_bound(&self.design()?.mati_params_fast())?)
    }

    /// Timing for one ε. A derived fast MATI is ε·T_f, capped so the dual
    /// clocks keep a reachable jump set.
    pub fn clock_config(&self, epsilon: f64) -> Result<ClockConfig> {
        let c = &self.clocks;
        let (mati_f, miati_f) = match c.mode {
            ChannelMode::SlowOnly => (0.0, 0.0),
            _ => {
                let mati_f = match c.mati_f {
                    Some(m) => m,
                    None => {
                        let derived = epsilon * self.fast_bound()?;
                        if c.mode == ChannelMode::Dual {
                            let cap = (c.mati_s - c.miati_s) / c.miati_f_fraction * (1.0 - 1e-9);
                            derived.min(cap).min(c.mati_s)
                        } else {
                            derived
                        }
                    }
                };
                (mati_f, c.miati_f.unwrap_or(c.miati_f_fraction * mati_f))
            }
        };
        let cfg = ClockConfig { miati_s: c.miati_s, mati_s: c.mati_s, miati_f, mati_f, epsilon, mode: c.mode };
        cfg.validate().map_err(|e| CliError::from(e).at(&format!("epsilon {epsilon}")))?;
        Ok(cfg)
    }

    pub fn certificate(&self) -> Result<Certificate> {
        let dc = self.design()?;
        Ok(build_certificate(&self.cl, dc, self.clocks.miati_s, self.clocks.mati_s, &self.knobs)?)
    }

    /// Grid entries (ε index, run index) with their initial states.
    pub fn initial_states(&self) -> Vec<(u64, HybridState)> {
        use spncs_core::hybridsim::random_initial_state;
        use spncs_core::rng::SplitMix64;
        if !self.simulation.initial_states.is_empty() {
            return self.simulation.initial_states.iter().cloned().enumerate().map(|(i, s)| (i as u64, s)).collect();
        }
        self.simulation
            .seeds
            .iter()
            .map(|&seed| {
                let mut rng = SplitMix64::new(seed);
                (seed, random_initial_state(self.cl.dims, ClockState::default(), self.simulation.initial_radius, &mut rng))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_resolves() {
        let s = builtin_example().resolve().unwrap();
        let cfg = s.clock_config(0.01).unwrap();
        assert!((cfg.mati_f - 0.011070606958708316).abs() < 1e-15);
        assert!((cfg.miati_f - cfg.mati_f / 3.0).abs() < 1e-18);
    }

    #[test]
    fn large_epsilon_is_capped() {
        let s = builtin_example().resolve().unwrap();
        let cfg = s.clock_config(0.5).unwrap();
        assert!(cfg.mati_f < 0.11);
    }

    #[test]
    fn unknown_field_is_schema_error() {
        let r: std::result::Result<Scenario, _> = serde_json::from_str(r#"{"builtin": "example", "bogus": 1}"#);
        assert!(r.is_err());
    }

    #[test]
    fn protocol_dimension_checked() {
        let mut sc = builtin_example();
        sc.protocol_s = Some(ProtocolSpec::reset_all(3));
        assert!(matches!(sc.resolve(), Err(CliError::Schema(_))));
    }
}
