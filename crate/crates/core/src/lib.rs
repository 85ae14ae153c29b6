//! Simulation of key distribution with pair-coherent twin laser beams.
//!
//! * [`special_fn`] – scaled modified Bessel functions `I₀`, `I₁`.
//! * [`state`] – the truncated two-mode state, its photon law and moments.
//! * [`eavesdrop`] – Eve's beamsplitter and the resulting three-party statistics.
//! * [`sampler`] – seeded per-slot photon counts.
//! * [`protocol`] – threshold key extraction, agreement and intrusion detection.

pub mod eavesdrop;
pub mod error;
pub mod protocol;
pub mod sampler;
pub mod special_fn;
pub mod state;

pub use eavesdrop::{correlation_surface, joint_pmf, split_moments, JointPmf, SplitterConfig, SurfaceRow, TripartiteMoments};
pub use error::{Error, Result};
pub use protocol::{
    agreement_rate, bit_balance, detection_experiment, extract_bits, run_session, BitBalance, DetectionSummary,
    KeyMaterial, ProtocolConfig, SessionReport,
};
pub use sampler::{empirical_stats, sample_slots, SampleStream, SlotSample};
pub use state::{ModeCorrelation, TmccState, DEFAULT_TAIL_EPSILON};
