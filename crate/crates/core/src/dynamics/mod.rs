//! Driven dynamics: lab-frame propagation under a monochromatic transverse
//! drive, analytic lineshapes, and multi-segment pulse sequences.

mod sequence;
mod shapes;
mod stepper;

pub use sequence::{
    frequency_scan, rabi_trace, ramsey_trace, run_sequence, DriveDuration, DriveSegment,
    InitialState, Observable, PulseSequence, Segment, SequenceOutcome,
};
pub use shapes::{enhanced_rabi_frequency, square_pulse_lineshape};
pub use stepper::{
    drive_propagator, propagate, propagate_sampled, propagate_with_phase,
};
