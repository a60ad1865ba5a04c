//! Inter-module transport waveform synthesis.
//!
//! The compiler solves a regularized least-squares problem per well
//! position (sum of squared voltages plus penalty-weighted field and
//! axial-curvature constraints), smooths each electrode's voltage record
//! with a quadratic Savitzky-Golay filter, and down-samples from the 2 um
//! solve grid to the 12 um transport pitch.

pub mod file;
pub mod pipeline;
pub mod sg;
pub mod solve;

pub use file::{waveform_from_text, waveform_to_text, WaveformFileError, WAVEFORM_FORMAT};
pub use pipeline::{
    downsample, smooth, synthesize_raw, verify_waveform, TransportWaveform, VerifyReport,
    VerifyRow,
};
pub use sg::{sg_smooth, sg_weights, SgError};
pub use solve::{
    solve_well, ConstraintSample, SolveResiduals, SynthesisConfig, TrapBasis, VoltageSolution,
    WaveformError, WellBasis, WellShape, WellTarget,
};
