//! Time-to-first-spike (TTFS) spiking neural networks trained in continuous
//! time, evaluated under the constraints of a clocked mixed-signal circuit:
//! spike-time discretization, weight quantization, a membrane-potential
//! floor and firing-threshold fluctuation. A physical capacitor-integrator
//! engine plus the model-to-circuit equivalence mapping close the loop from
//! abstract model to hardware operating point.

pub mod circuit;
pub mod dataio;
pub mod error;
pub mod model;
pub mod reference;
pub mod rng;
pub mod simulator;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{
    init_network, validate_config, CircuitParams, ConstraintConfig, Histogram, LayerActivity,
    Matrix, NetworkModel, PotentialStats,
};
pub use simulator::{
    encode_input, potential_stats, predict, run_network, EncoderConfig, RunOptions,
    SimulationMode, SimulationResult, TraceMode,
};
