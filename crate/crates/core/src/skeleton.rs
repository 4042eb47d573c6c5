//! The 17-joint skeleton data model.
//!
//! Joint ordering follows the Human3.6M-style 17-joint convention;
//! [`JointLayout::h36m17`] is the project-wide default. Coordinates are
//! millimeters. Joints are rows of a 17×3 matrix, so applying a rotation
//! `R` (column-vector convention) to a pose is `X' = X Rᵀ`.

pub mod corpus;

use nalgebra::Vector3;
use thiserror::Error;

use crate::so3::RotationMatrix;

pub const JOINT_COUNT: usize = 17;
pub const BONE_COUNT: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum SkeletonError {
    #[error("joint layout is not a tree rooted at the pelvis: {0}")]
    InvalidLayout(String),
    #[error("bone {joint_a}-{joint_b} is degenerate (length {length_mm:.3e} mm)")]
    DegenerateBone {
        joint_a: usize,
        joint_b: usize,
        length_mm: f64,
    },
}

/// Named joint indices of the default layout.
pub mod joints {
    pub const PELVIS: usize = 0;
    pub const R_HIP: usize = 1;
    pub const R_KNEE: usize = 2;
    pub const R_ANKLE: usize = 3;
    pub const L_HIP: usize = 4;
    pub const L_KNEE: usize = 5;
    pub const L_ANKLE: usize = 6;
    pub const SPINE: usize = 7;
    pub const THORAX: usize = 8;
    pub const NECK: usize = 9;
    pub const HEAD: usize = 10;
    pub const L_SHOULDER: usize = 11;
    pub const L_ELBOW: usize = 12;
    pub const L_WRIST: usize = 13;
    pub const R_SHOULDER: usize = 14;
    pub const R_ELBOW: usize = 15;
    pub const R_WRIST: usize = 16;
}

/// Joint names, bone tree and torso landmark indices.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLayout {
    names: [String; JOINT_COUNT],
    edges: [(usize, usize); BONE_COUNT],
    pelvis: usize,
    l_shoulder: usize,
    r_shoulder: usize,
    l_hip: usize,
    r_hip: usize,
}

impl JointLayout {
    /// The Human3.6M-style ordering: pelvis, right leg, left leg, spine
    /// column, left arm, right arm.
    pub fn h36m17() -> Self {
        let names = [
            "pelvis",
            "r_hip",
            "r_knee",
            "r_ankle",
            "l_hip",
            "l_knee",
            "l_ankle",
            "spine",
            "thorax",
            "neck",
            "head",
            "l_shoulder",
            "l_elbow",
            "l_wrist",
            "r_shoulder",
            "r_elbow",
            "r_wrist",
        ]
        .map(String::from);
        let edges = [
            (0, 1),
            (1, 2),
            (2, 3),
            (0, 4),
            (4, 5),
            (5, 6),
            (0, 7),
            (7, 8),
            (8, 9),
            (9, 10),
            (8, 11),
            (11, 12),
            (12, 13),
            (8, 14),
            (14, 15),
            (15, 16),
        ];
        JointLayout::new(names, edges, 0, 11, 14, 4, 1).expect("builtin layout is valid")
    }

    pub fn new(
        names: [String; JOINT_COUNT],
        edges: [(usize, usize); BONE_COUNT],
        pelvis: usize,
        l_shoulder: usize,
        r_shoulder: usize,
        l_hip: usize,
        r_hip: usize,
    ) -> Result<Self, SkeletonError> {
        for &idx in &[pelvis, l_shoulder, r_shoulder, l_hip, r_hip] {
            if idx >= JOINT_COUNT {
                return Err(SkeletonError::InvalidLayout(format!(
                    "landmark index {idx} out of range"
                )));
            }
        }
        // Each non-root joint must appear exactly once as a child, and
        // every joint must reach the pelvis through parents.
        let mut parent = [usize::MAX; JOINT_COUNT];
        for &(p, c) in &edges {
            if p >= JOINT_COUNT || c >= JOINT_COUNT {
                return Err(SkeletonError::InvalidLayout(format!(
                    "edge ({p},{c}) out of range"
                )));
            }
            if c == pelvis {
                return Err(SkeletonError::InvalidLayout("pelvis has a parent".into()));
            }
            if parent[c] != usize::MAX {
                return Err(SkeletonError::InvalidLayout(format!(
                    "joint {c} has two parents"
                )));
            }
            parent[c] = p;
        }
        for j in 0..JOINT_COUNT {
            if j == pelvis {
                continue;
            }
            let mut cur = j;
            let mut hops = 0;
            while cur != pelvis {
                if parent[cur] == usize::MAX {
                    return Err(SkeletonError::InvalidLayout(format!(
                        "joint {j} is an orphan"
                    )));
                }
                cur = parent[cur];
                hops += 1;
                if hops > JOINT_COUNT {
                    return Err(SkeletonError::InvalidLayout(format!(
                        "cycle through joint {j}"
                    )));
                }
            }
        }
        Ok(JointLayout {
            names,
            edges,
            pelvis,
            l_shoulder,
            r_shoulder,
            l_hip,
            r_hip,
        })
    }

    pub fn names(&self) -> &[String; JOINT_COUNT] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[(usize, usize); BONE_COUNT] {
        &self.edges
    }

    pub fn pelvis(&self) -> usize {
        self.pelvis
    }
    pub fn l_shoulder(&self) -> usize {
        self.l_shoulder
    }
    pub fn r_shoulder(&self) -> usize {
        self.r_shoulder
    }
    pub fn l_hip(&self) -> usize {
        self.l_hip
    }
    pub fn r_hip(&self) -> usize {
        self.r_hip
    }

    /// Parent of each joint (`None` at the pelvis).
    pub fn parents(&self) -> [Option<usize>; JOINT_COUNT] {
        let mut out = [None; JOINT_COUNT];
        for &(p, c) in &self.edges {
            out[c] = Some(p);
        }
        out
    }

    /// Joint triples `(parent, joint, child)` contributing a joint angle:
    /// one per joint with both a parent bone and a child bone, one entry
    /// per child at multi-child joints. Order is the edge order.
    pub fn angle_triples(&self) -> Vec<(usize, usize, usize)> {
        let parents = self.parents();
        self.edges
            .iter()
            .filter_map(|&(j, c)| parents[j].map(|p| (p, j, c)))
            .collect()
    }

    /// Symmetric 17×17 anatomical adjacency (no self-loops).
    pub fn adjacency(&self) -> [[f64; JOINT_COUNT]; JOINT_COUNT] {
        let mut a = [[0.0; JOINT_COUNT]; JOINT_COUNT];
        for &(p, c) in &self.edges {
            a[p][c] = 1.0;
            a[c][p] = 1.0;
        }
        a
    }
}

/// 17 joints in millimeters, one row per joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    joints: [Vector3<f64>; JOINT_COUNT],
}

impl Pose {
    pub fn new(joints: [Vector3<f64>; JOINT_COUNT]) -> Self {
        Pose { joints }
    }

    pub fn from_flat(values: &[f64]) -> Self {
        assert_eq!(values.len(), 3 * JOINT_COUNT, "pose needs 51 values");
        let mut joints = [Vector3::zeros(); JOINT_COUNT];
        for (j, joint) in joints.iter_mut().enumerate() {
            *joint = Vector3::new(values[3 * j], values[3 * j + 1], values[3 * j + 2]);
        }
        Pose { joints }
    }

    pub fn zeros() -> Self {
        Pose {
            joints: [Vector3::zeros(); JOINT_COUNT],
        }
    }

    pub fn joint(&self, idx: usize) -> &Vector3<f64> {
        &self.joints[idx]
    }

    pub fn joint_mut(&mut self, idx: usize) -> &mut Vector3<f64> {
        &mut self.joints[idx]
    }

    pub fn joints(&self) -> &[Vector3<f64>; JOINT_COUNT] {
        &self.joints
    }

    /// Row-major flattening (x0,y0,z0,x1,...).
    pub fn to_flat(&self) -> [f64; 3 * JOINT_COUNT] {
        let mut out = [0.0; 3 * JOINT_COUNT];
        for (j, joint) in self.joints.iter().enumerate() {
            out[3 * j] = joint.x;
            out[3 * j + 1] = joint.y;
            out[3 * j + 2] = joint.z;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|j| j.iter().all(|x| x.is_finite()))
    }

    /// Rotates every joint by `r` (column-vector convention, so rows
    /// transform as `x' = x Rᵀ`).
    pub fn rotated(&self, r: &RotationMatrix) -> Pose {
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            *j = r.rotate_vector(j);
        }
        Pose { joints }
    }

    pub fn translated(&self, t: &Vector3<f64>) -> Pose {
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            *j += t;
        }
        Pose { joints }
    }

    pub fn scaled(&self, s: f64) -> Pose {
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            *j *= s;
        }
        Pose { joints }
    }

    pub fn max_joint_distance(&self, other: &Pose) -> f64 {
        self.joints
            .iter()
            .zip(other.joints.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Applies `r` to every joint of `pose` (`X' = X Rᵀ` in row convention).
pub fn apply_rotation(r: &RotationMatrix, pose: &Pose) -> Pose {
    pose.rotated(r)
}

/// Translates the pose so the pelvis sits at the origin.
pub fn center_at_pelvis(pose: &Pose, layout: &JointLayout) -> Pose {
    let pelvis = *pose.joint(layout.pelvis());
    pose.translated(&-pelvis)
}

/// Euclidean length of every bone, in edge order (mm).
pub fn bone_lengths(pose: &Pose, layout: &JointLayout) -> [f64; BONE_COUNT] {
    let mut out = [0.0; BONE_COUNT];
    for (i, &(p, c)) in layout.edges().iter().enumerate() {
        out[i] = (pose.joint(c) - pose.joint(p)).norm();
    }
    out
}

/// Proportion threshold below which a bone counts as degenerate when
/// measuring joint angles.
pub const MIN_BONE_NORM_MM: f64 = 1e-6;

/// Interior angle at each joint with both a parent and a child bone:
/// the angle between `(parent − joint)` and `(child − joint)`, clamped
/// arccos. A straight limb therefore reads π.
pub fn joint_angles(pose: &Pose, layout: &JointLayout) -> Result<Vec<f64>, SkeletonError> {
    let mut out = Vec::new();
    for (p, j, c) in layout.angle_triples() {
        let u = pose.joint(p) - pose.joint(j);
        let v = pose.joint(c) - pose.joint(j);
        let nu = u.norm();
        let nv = v.norm();
        if nu < MIN_BONE_NORM_MM {
            return Err(SkeletonError::DegenerateBone {
                joint_a: p,
                joint_b: j,
                length_mm: nu,
            });
        }
        if nv < MIN_BONE_NORM_MM {
            return Err(SkeletonError::DegenerateBone {
                joint_a: j,
                joint_b: c,
                length_mm: nv,
            });
        }
        let cos = (u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0);
        out.push(cos.acos());
    }
    Ok(out)
}

/// The body-centered target frame: unit facing and up axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalFrame {
    facing: Vector3<f64>,
    up: Vector3<f64>,
}

impl CanonicalFrame {
    /// Subject faces −X, up is +Z, shoulder line along ±Y.
    pub fn default_frame() -> Self {
        CanonicalFrame {
            facing: Vector3::new(-1.0, 0.0, 0.0),
            up: Vector3::new(0.0, 0.0, 1.0),
        }
    }

    pub fn new(facing: Vector3<f64>, up: Vector3<f64>) -> Result<Self, SkeletonError> {
        if (facing.norm() - 1.0).abs() > 1e-9 || (up.norm() - 1.0).abs() > 1e-9 {
            return Err(SkeletonError::InvalidLayout(
                "frame axes must be unit vectors".into(),
            ));
        }
        if facing.dot(&up).abs() > 1e-9 {
            return Err(SkeletonError::InvalidLayout(
                "frame axes must be orthogonal".into(),
            ));
        }
        Ok(CanonicalFrame { facing, up })
    }

    pub fn facing(&self) -> &Vector3<f64> {
        &self.facing
    }

    pub fn up(&self) -> &Vector3<f64> {
        &self.up
    }

    /// Target direction of the left-minus-right shoulder vector:
    /// `up × facing` (the subject's left).
    pub fn lateral(&self) -> Vector3<f64> {
        self.up.cross(&self.facing)
    }
}

impl Default for CanonicalFrame {
    fn default() -> Self {
        CanonicalFrame::default_frame()
    }
}
