//! Mean-field equilibrium solver for a congestion game on a fixed
//! five-link, three-path network.
//!
//! Agents enter at the origin at a prescribed throughput, pick crossing
//! speeds by a backward dynamic program on the links, and distribute over
//! the three paths by a noisy best response to path costs. The induced mass
//! trajectory feeds back into the costs; an equilibrium is a fixed point of
//! that loop, located by damped Picard iteration ([`equilibrium`]). An outer
//! derivative-free search over the linear congestion-cost parameters lives
//! in [`bilevel`].

pub mod bilevel;
pub mod equilibrium;
pub mod error;
pub mod mass;
pub mod network;
pub mod numerics;
pub mod preference;
pub mod report;
pub mod scenario;
pub mod value;

pub use error::{Error, Result};
pub use scenario::{parse_scenario, parse_scenario_str, Scenario};
