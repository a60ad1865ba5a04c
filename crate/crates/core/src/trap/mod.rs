//! Electrode geometry, electrostatics and pseudopotential analysis for the
//! two-module surface trap.

pub mod analysis;
pub mod electrode;
pub mod field;
pub mod layout;

pub use analysis::{
    find_total_minimum, height_variation, modes_from_hessian, null_at, null_profile,
    secular_frequencies, trap_depth_and_barrier, two_rail_null_height, vertical_null_height,
    AnalysisError, DepthBarrier, NullPoint, SecularModes,
};
pub use electrode::{Electrode, ElectrodeRole, FieldError, ModuleId, PatchField, Rect};
pub use field::{DcField, IonSpecies, RfDrive, TrapField, TrapFieldError};
pub use layout::{
    build_two_module_layout, LayoutError, LayoutParams, TrapLayout, Zones, LOADING_SPAN_UM,
    ZONE_SPAN_UM,
};
