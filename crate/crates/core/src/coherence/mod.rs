//! Ramsey coherence simulation of the clock qubit, with transport
//! interleaved in the free-precession delay.

pub mod fit;
pub mod qubit;
pub mod ramsey;
pub mod schedule;

pub use fit::{fringe_fit, t2_fit, CoherenceFit, FitError, FringeFit};
pub use qubit::ClockQubit;
pub use ramsey::{
    fringe_probability, ideal_fringe, simulate_ramsey, FieldNoiseModel, FringeData, FringePoint,
    RamseySequence,
};
pub use schedule::{
    accumulated_phase, path_moments, transport_phase, LinkSchedule, PathMoments, ScheduleError,
    SchedulePlacement, SpatialProfile,
};
