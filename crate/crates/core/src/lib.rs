//! Analysis and simulation of two-time-scale networked control loops.
//!
//! A plant with slow and fast dynamics is closed over two shared channels,
//! one per time scale. The crate covers the allowable-transmission-interval
//! bounds, scheduling protocols, clock scheduling, the linear closed-loop
//! model, the stability certificate and a hybrid-system simulator.

pub mod certify;
pub mod hybridsim;
pub mod ltimodel;
pub mod mati;
pub mod numerics;
pub mod protocols;
pub mod rng;
pub mod scheduler;
