//! Canonicalization of camera-centered 3D human skeletons into a fixed
//! body-centered frame.
//!
//! The crate provides:
//!
//! * [`so3`] — exact rotation mathematics: construction, composition,
//!   sampling, the continuous 6D representation, and geodesic distance.
//! * [`skeleton`] — the 17-joint skeleton data model and its invariant
//!   quantities (bone lengths, joint angles), plus the pose corpus file
//!   format.
//! * [`geocanon`] — the deterministic rule-based canonicalizer
//!   (torso-plane alignment followed by shoulder-line alignment).
//! * [`autodiff`] — a minimal reverse-mode differentiable-array engine
//!   with a finite-difference gradient checker.
//! * [`model`] — the hybrid GCN/Transformer rotation-prediction network
//!   with gated cross-attention fusion and rotation/residual heads.
//! * [`losses`] — the composite training objective (pose, rotation,
//!   cycle, perceptual and regularization terms).
//! * [`metrics`] — MPJPE, Procrustes-aligned MPJPE and rotation error.
//! * [`datagen`] — synthetic pose-pair generation and dataset files.
//! * [`trainer`] — deterministic training loop (AdamW, cosine schedule,
//!   checkpointing).
//! * [`kinematics`] — trajectory/acceleration extraction, signal
//!   normalization and comparison, and the IMU world-frame transform.

pub mod autodiff;
pub mod canon;
pub mod checkpoint;
pub mod datagen;
pub mod geocanon;
pub mod kinematics;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod seedmix;
pub mod skeleton;
pub mod so3;
pub mod trainer;

pub use canon::{CanonFailure, Canonicalizer};
pub use skeleton::{CanonicalFrame, JointLayout, Pose};
pub use so3::{EulerRanges, EulerYPR, Rot6D, RotationMatrix};

/// Version tags of every file format this crate reads or writes.
pub mod formats {
    pub const POSE_CORPUS: &str = "pose-corpus-v1";
    pub const PAIR_DATASET: &str = "pose-pairs-v1";
    pub const CHECKPOINT: &str = "checkpoint-v1";
    pub const TRAIN_LOG: &str = "train-log-v1";
    pub const SIGNAL_CSV: &str = "signal-csv-v1";
    pub const METRICS_REPORT: &str = "metrics-report-v1";
}
