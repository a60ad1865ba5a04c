//! Classical ion dynamics under the time-varying trap potentials.

pub mod integrate;
pub mod link;
pub mod stats;

pub use integrate::{
    dominant_frequency_hz, integrate, DynamicsError, IntegratorConfig, InterpMode, RfMode,
    System, Trajectory,
};
pub use link::{
    axial_energy_ev, motional_quanta, simulate_link, sweep, InitialState, LinkScenario,
    SweepParameter, SweepRow, TransportReport, TrapSystem,
};
pub use stats::{cumulative_distance_km, loss_upper_bound, LossBound};
