//! Common interface over the geometric and learned canonicalizers.

use thiserror::Error;

use crate::geocanon::{geometric_canonicalize, GeoCanonError};
use crate::skeleton::{CanonicalFrame, JointLayout, Pose};
use crate::so3::RotationMatrix;

/// Why a single pose could not be canonicalized. Corpus-level consumers
/// record these per sample instead of aborting.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CanonFailure {
    #[error("degenerate torso: {0}")]
    DegenerateTorso(String),
    #[error("degenerate rotation prediction: {0}")]
    DegenerateRotation(String),
    #[error("{0}")]
    Other(String),
}

impl From<GeoCanonError> for CanonFailure {
    fn from(e: GeoCanonError) -> Self {
        match e {
            GeoCanonError::DegenerateTorso(msg) => CanonFailure::DegenerateTorso(msg),
        }
    }
}

impl CanonFailure {
    /// Short stable name used as the per-record flag in corpus files.
    pub fn flag_name(&self) -> &'static str {
        match self {
            CanonFailure::DegenerateTorso(_) => "DegenerateTorso",
            CanonFailure::DegenerateRotation(_) => "DegenerateRotation",
            CanonFailure::Other(_) => "Error",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CanonOutput {
    /// Rectified pose, centered at the pelvis.
    pub pose: Pose,
    /// Recovered camera rotation `R`: input ≈ `R ·` canonical (up to the
    /// learned residual, when one is enabled).
    pub rotation: RotationMatrix,
}

pub trait Canonicalizer {
    fn canonicalize(&self, pose: &Pose) -> Result<CanonOutput, CanonFailure>;
}

/// The rule-based baseline as a [`Canonicalizer`].
#[derive(Debug, Clone)]
pub struct GeometricCanonicalizer {
    pub layout: JointLayout,
    pub frame: CanonicalFrame,
}

impl GeometricCanonicalizer {
    pub fn new(layout: JointLayout, frame: CanonicalFrame) -> Self {
        GeometricCanonicalizer { layout, frame }
    }
}

impl Default for GeometricCanonicalizer {
    fn default() -> Self {
        GeometricCanonicalizer::new(JointLayout::h36m17(), CanonicalFrame::default_frame())
    }
}

impl Canonicalizer for GeometricCanonicalizer {
    fn canonicalize(&self, pose: &Pose) -> Result<CanonOutput, CanonFailure> {
        let (pose, rotation) = geometric_canonicalize(pose, &self.layout, &self.frame)?;
        Ok(CanonOutput { pose, rotation })
    }
}
