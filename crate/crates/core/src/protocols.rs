//! Scheduling protocols for the shared channel and their Lyapunov functions.
//!
//! A protocol decides which node's network-induced error is cleared at a
//! transmission. Each comes with a function W(κ, e) that contracts by λ at
//! every transmission and is sandwiched between a̲_W|e| and ā_W|e|.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("error vector has length {got}, partition covers {want}")]
    Dimension { want: usize, got: usize },
    #[error("node sizes must be positive and at least one node is required")]
    EmptyPartition,
}

/// Contiguous split of an error vector into ℓ nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct NodePartition {
    sizes: Vec<usize>,
}

impl NodePartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self, ProtocolError> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return Err(ProtocolError::EmptyPartition);
        }
        Ok(NodePartition { sizes })
    }

    /// A single node spanning the whole vector; `n` may be zero.
    pub fn whole(n: usize) -> Self {
        NodePartition { sizes: vec![n] }
    }

    /// `n` scalar nodes.
    pub fn scalar_nodes(n: usize) -> Result<Self, ProtocolError> {
        NodePartition::new(vec![1; n])
    }

    pub fn nodes(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.sizes.iter().scan(0, |start, &s| {
            let r = *start..*start + s;
            *start += s;
            Some(r)
        })
    }

    fn check(&self, e: &[f64]) -> Result<(), ProtocolError> {
        if e.len() != self.dim() {
            return Err(ProtocolError::Dimension { want: self.dim(), got: e.len() });
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for NodePartition {
    type Error = ProtocolError;

    fn try_from(sizes: Vec<usize>) -> Result<Self, ProtocolError> {
        if sizes.len() == 1 {
            return Ok(NodePartition { sizes });
        }
        NodePartition::new(sizes)
    }
}

impl From<NodePartition> for Vec<usize> {
    fn from(p: NodePartition) -> Self {
        p.sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Tod,
    RoundRobin,
    ResetAll,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub partition: NodePartition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConstants {
    pub lambda: f64,
    pub a_w_lower: f64,
    pub a_w_upper: f64,
}

impl ProtocolSpec {
    pub fn reset_all(n: usize) -> Self {
        ProtocolSpec { kind: ProtocolKind::ResetAll, partition: NodePartition::whole(n) }
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }
}

fn node_sq(e: &[f64], r: std::ops::Range<usize>) -> f64 {
    e[r].iter().map(|v| v * v).sum()
}

/// Clears one node (all of them for ResetAll) according to the protocol.
pub fn protocol_jump(p: &ProtocolSpec, kappa: u64, e: &[f64]) -> Result<Vec<f64>, ProtocolError> {
    p.partition.check(e)?;
    let mut out = e.to_vec();
    let ranges: Vec<_> = p.partition.ranges().collect();
    let target = match p.kind {
        ProtocolKind::ResetAll => {
            out.iter_mut().for_each(|v| *v = 0.0);
            return Ok(out);
        }
        ProtocolKind::RoundRobin => (kappa % ranges.len() as u64) as usize,
        ProtocolKind::Tod => {
            let mut best = 0;
            let mut best_sq = -1.0;
            for (i, r) in ranges.iter().enumerate() {
                let sq = node_sq(e, r.clone());
                if sq > best_sq {
                    best = i;
                    best_sq = sq;
                }
            }
            best
        }
    };
    out[ranges[target].clone()].iter_mut().for_each(|v| *v = 0.0);
    Ok(out)
}

/// Round-robin weight of node `i` at counter `kappa`: the node served next
/// weighs 1, the one served last weighs ℓ.
pub fn rr_weight(i: usize, kappa: u64, nodes: usize) -> f64 {
    let l = nodes as u64;
    let shift = (i as u64 + l - kappa % l) % l;
    (1 + shift) as f64
}

pub fn protocol_lyapunov(p: &ProtocolSpec, kappa: u64, e: &[f64]) -> Result<f64, ProtocolError> {
    p.partition.check(e)?;
    match p.kind {
        ProtocolKind::Tod | ProtocolKind::ResetAll => Ok(crate::numerics::norm(e)),
        ProtocolKind::RoundRobin => {
            let l = p.partition.nodes();
            let s: f64 = p
                .partition
                .ranges()
                .enumerate()
                .map(|(i, r)| rr_weight(i, kappa, l) * node_sq(e, r))
                .sum();
            Ok(s.sqrt())
        }
    }
}

pub fn protocol_constants(p: &ProtocolSpec) -> ProtocolConstants {
    let l = p.partition.nodes() as f64;
    let contraction = ((l - 1.0) / l).sqrt();
    match p.kind {
        ProtocolKind::ResetAll => ProtocolConstants { lambda: 0.0, a_w_lower: 1.0, a_w_upper: 1.0 },
        ProtocolKind::Tod => ProtocolConstants { lambda: contraction, a_w_lower: 1.0, a_w_upper: 1.0 },
        ProtocolKind::RoundRobin => ProtocolConstants {
            lambda: contraction,
            a_w_lower: 1.0,
            a_w_upper: l.sqrt(),
        },
    }
}

/// Bound on |∂W/∂e|.
pub fn gradient_bound(p: &ProtocolSpec) -> f64 {
    match p.kind {
        ProtocolKind::RoundRobin => (p.partition.nodes() as f64).sqrt(),
        _ => 1.0,
    }
}
