//! Ownership-tracing and information-limiting defenses.
//!
//! Training-time kinds (four watermarks and the Integrity fingerprint)
//! produce a [`WatermarkArtifact`]; response-side kinds install transforms
//! on the oracle and carry a marker artifact for their verification proxy.
//! [`verify`] treats the protected target and an extracted surrogate the
//! same way.

mod artifact;
mod embed;
pub mod inference;
mod snnl;
mod spec;
mod verify;

pub use artifact::WatermarkArtifact;
pub use embed::{
    build_defense, fingerprint, predict, train_clean, train_defended, DefendedTarget, TargetSpec,
};
pub use inference::{InferenceTransform, PradaConfig, PradaState};
pub use snnl::{snnl, snnl_with_grad};
pub use spec::DefenseSpec;
pub use verify::{
    apply_delta, apply_pattern, apply_trigger, e_ave, e_ave_aggregate, verify, Subject,
    VerificationReport, VerifyMode,
};
