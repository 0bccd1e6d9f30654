//! Simulation and certification of multilevel motional coherence in a
//! trapped ion.

pub mod certifier;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod hilbert;
pub mod nonideal;
pub mod optim;
pub mod params;
pub mod ideal;
pub mod probe;
pub mod pulse;
pub mod rng;
pub mod stats;
pub mod synthesis;
pub mod thresholds;

pub use error::{Error, Result};
pub use hilbert::{JointDensity, JointState, Qubit, C64};
pub use params::PhysicalParams;
pub use pulse::{Pulse, PulseSequence, Transition};
