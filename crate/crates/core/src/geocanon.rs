//! Rule-based canonicalization from anatomical landmarks.
//!
//! Two rigid steps: (1) rotate the torso-plane normal onto the frame's
//! facing axis with the minimal rotation, (2) rotate about the facing
//! axis until the projected shoulder line matches the frame's lateral
//! axis. Being a pure rotation it preserves bone lengths and joint
//! angles exactly, which is why its PA-MPJPE is zero by construction.

use nalgebra::Vector3;
use thiserror::Error;

use crate::skeleton::{center_at_pelvis, CanonicalFrame, JointLayout, Pose};
use crate::so3::RotationMatrix;

/// Minimum norm (mm²-scale for the cross product, mm for the projected
/// shoulder vector) below which the torso is considered degenerate.
pub const DEGENERATE_TORSO_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeoCanonError {
    #[error("degenerate torso: {0}")]
    DegenerateTorso(String),
}

/// Torso-plane normal `(r_sho − l_sho) × (mid_hip − mid_sho)`,
/// normalized. Points along the subject's facing direction.
fn torso_normal(pose: &Pose, layout: &JointLayout) -> Result<Vector3<f64>, GeoCanonError> {
    let shoulder = pose.joint(layout.r_shoulder()) - pose.joint(layout.l_shoulder());
    let mid_sho = (pose.joint(layout.r_shoulder()) + pose.joint(layout.l_shoulder())) / 2.0;
    let mid_hip = (pose.joint(layout.r_hip()) + pose.joint(layout.l_hip())) / 2.0;
    let cross = shoulder.cross(&(mid_hip - mid_sho));
    let n = cross.norm();
    if n < DEGENERATE_TORSO_EPS {
        return Err(GeoCanonError::DegenerateTorso(format!(
            "shoulder/hip landmarks near-collinear (cross norm {n:.3e})"
        )));
    }
    Ok(cross / n)
}

/// Canonicalizes `p` (centered internally) and returns the rectified
/// pose together with the recovered camera rotation `R`, so that
/// `p = R · pose_out` joint by joint.
pub fn geometric_canonicalize(
    p: &Pose,
    layout: &JointLayout,
    frame: &CanonicalFrame,
) -> Result<(Pose, RotationMatrix), GeoCanonError> {
    let centered = center_at_pelvis(p, layout);

    // Step 1: torso normal onto the facing axis, shortest arc. The
    // antipodal case is resolved by a half-turn about the up axis.
    let normal = torso_normal(&centered, layout)?;
    let r1 = match RotationMatrix::shortest_arc(&normal, frame.facing()) {
        Some(r) => r,
        None => RotationMatrix::from_axis_angle(frame.up(), std::f64::consts::PI)
            .expect("up axis is unit"),
    };
    let p1 = centered.rotated(&r1);

    // Step 2: residual rotation about the facing axis aligning the
    // projected left-minus-right shoulder vector with the lateral axis.
    let shoulder = p1.joint(layout.l_shoulder()) - p1.joint(layout.r_shoulder());
    let facing = frame.facing();
    let s_perp = shoulder - facing * facing.dot(&shoulder);
    let ns = s_perp.norm();
    if ns < DEGENERATE_TORSO_EPS {
        return Err(GeoCanonError::DegenerateTorso(format!(
            "shoulder line parallel to facing axis (projected norm {ns:.3e})"
        )));
    }
    let s_hat = s_perp / ns;
    let lateral = frame.lateral();
    let angle = facing.dot(&s_hat.cross(&lateral)).atan2(s_hat.dot(&lateral));
    let r2 = RotationMatrix::from_axis_angle(facing, angle).expect("facing axis is unit");

    let canonical = p1.rotated(&r2);
    // canonical = (r2 ∘ r1) · centered, so the camera rotation is the
    // inverse composite.
    let recovered = r2.compose(&r1).transpose();
    Ok((canonical, recovered))
}

/// True iff the torso normal and projected shoulder line match the
/// frame axes within `tol` radians.
pub fn is_geometric_canonical(
    p: &Pose,
    layout: &JointLayout,
    frame: &CanonicalFrame,
    tol: f64,
) -> Result<bool, GeoCanonError> {
    let centered = center_at_pelvis(p, layout);
    let normal = torso_normal(&centered, layout)?;
    let facing_angle = normal.dot(frame.facing()).clamp(-1.0, 1.0).acos();

    let shoulder = centered.joint(layout.l_shoulder()) - centered.joint(layout.r_shoulder());
    let facing = frame.facing();
    let s_perp = shoulder - facing * facing.dot(&shoulder);
    let ns = s_perp.norm();
    if ns < DEGENERATE_TORSO_EPS {
        return Err(GeoCanonError::DegenerateTorso(
            "shoulder line parallel to facing axis".into(),
        ));
    }
    let lateral_angle = (s_perp / ns).dot(&frame.lateral()).clamp(-1.0, 1.0).acos();
    Ok(facing_angle <= tol && lateral_angle <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{bone_lengths, joint_angles, joints};
    use crate::so3::{euler_to_matrix, geodesic_angle, EulerYPR};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// A standing humanoid that satisfies the canonical frame exactly:
    /// facing −X, up +Z, left shoulder at −Y.
    pub(crate) fn canonical_humanoid() -> Pose {
        let mut p = Pose::zeros();
        let set = |p: &mut Pose, j: usize, x: f64, y: f64, z: f64| {
            *p.joint_mut(j) = Vector3::new(x, y, z);
        };
        set(&mut p, joints::PELVIS, 0.0, 0.0, 0.0);
        set(&mut p, joints::R_HIP, 0.0, 110.0, -15.0);
        set(&mut p, joints::R_KNEE, 25.0, 120.0, -460.0);
        set(&mut p, joints::R_ANKLE, 60.0, 125.0, -890.0);
        set(&mut p, joints::L_HIP, 0.0, -110.0, -15.0);
        set(&mut p, joints::L_KNEE, 20.0, -118.0, -455.0);
        set(&mut p, joints::L_ANKLE, 55.0, -122.0, -885.0);
        set(&mut p, joints::SPINE, 12.0, 0.0, 255.0);
        set(&mut p, joints::THORAX, 18.0, 0.0, 505.0);
        set(&mut p, joints::NECK, 8.0, 0.0, 620.0);
        set(&mut p, joints::HEAD, -15.0, 0.0, 760.0);
        // Shoulders define the torso plane: keep them at x = 0 and the
        // hips symmetric so the plane normal is exactly −X.
        set(&mut p, joints::L_SHOULDER, 0.0, -175.0, 495.0);
        set(&mut p, joints::L_ELBOW, -40.0, -205.0, 215.0);
        set(&mut p, joints::L_WRIST, -110.0, -185.0, -30.0);
        set(&mut p, joints::R_SHOULDER, 0.0, 175.0, 495.0);
        set(&mut p, joints::R_ELBOW, -35.0, 210.0, 220.0);
        set(&mut p, joints::R_WRIST, -105.0, 190.0, -25.0);
        p
    }

    #[test]
    fn already_canonical_pose_is_unchanged() {
        let layout = JointLayout::h36m17();
        let frame = CanonicalFrame::default_frame();
        let pose = canonical_humanoid();
        assert!(is_geometric_canonical(&pose, &layout, &frame, 1e-9).unwrap());
        let (out, r) = geometric_canonicalize(&pose, &layout, &frame).unwrap();
        assert!(geodesic_angle(&r, &RotationMatrix::identity()) < 1e-6);
        assert!(out.max_joint_distance(&pose) < 1e-6);
    }

    #[test]
    fn recovers_known_rotation_exactly() {
        let layout = JointLayout::h36m17();
        let frame = CanonicalFrame::default_frame();
        let base = canonical_humanoid();
        let r_true = euler_to_matrix(&EulerYPR::new(1.1, -0.35, 0.2));
        let rotated = base.rotated(&r_true);
        let (out, r_rec) = geometric_canonicalize(&rotated, &layout, &frame).unwrap();
        assert!(
            geodesic_angle(&r_rec, &r_true) < 1e-6,
            "rotation error {}",
            geodesic_angle(&r_rec, &r_true)
        );
        assert!(out.max_joint_distance(&base) < 1e-6);
        // p = R · pose_out
        assert!(out.rotated(&r_rec).max_joint_distance(&rotated) < 1e-6);
    }

    #[test]
    fn collinear_torso_is_degenerate() {
        let layout = JointLayout::h36m17();
        let frame = CanonicalFrame::default_frame();
        let mut p = canonical_humanoid();
        // All four torso landmarks on one vertical line.
        for &j in &[joints::L_SHOULDER, joints::R_SHOULDER, joints::L_HIP, joints::R_HIP] {
            *p.joint_mut(j) = Vector3::new(0.0, 0.0, p.joint(j).z);
        }
        assert!(matches!(
            geometric_canonicalize(&p, &layout, &frame),
            Err(GeoCanonError::DegenerateTorso(_))
        ));
    }

    #[test]
    fn antipodal_normal_is_resolved() {
        let layout = JointLayout::h36m17();
        let frame = CanonicalFrame::default_frame();
        let base = canonical_humanoid();
        // Half-turn about up flips the normal to +X exactly.
        let r_true = RotationMatrix::about_z(PI);
        let rotated = base.rotated(&r_true);
        let (out, r_rec) = geometric_canonicalize(&rotated, &layout, &frame).unwrap();
        assert!(geodesic_angle(&r_rec, &r_true) < 1e-6);
        assert!(out.max_joint_distance(&base) < 1e-6);
    }

    #[test]
    fn is_canonical_examples() {
        let layout = JointLayout::h36m17();
        let frame = CanonicalFrame::default_frame();
        let base = canonical_humanoid();
        // 10° about the up axis: not canonical at tol 1e-3.
        let turned = base.rotated(&RotationMatrix::about_z(10.0f64.to_radians()));
        assert!(!is_geometric_canonical(&turned, &layout, &frame, 1e-3).unwrap());
        // Mirrored pose: the normal points backward (+X), so the facing
        // check reads an angle of π.
        let mut mirrored = base;
        for j in 0..crate::skeleton::JOINT_COUNT {
            mirrored.joint_mut(j).x = -mirrored.joint(j).x;
        }
        assert!(!is_geometric_canonical(&mirrored, &layout, &frame, 1e-3).unwrap());
    }

    #[test]
    fn idempotent_and_shape_preserving() {
        let layout = JointLayout::h36m17();
        let frame = CanonicalFrame::default_frame();
        let rotated = canonical_humanoid().rotated(&euler_to_matrix(&EulerYPR::new(2.5, 0.4, -0.3)));
        let (once, _) = geometric_canonicalize(&rotated, &layout, &frame).unwrap();
        let (twice, r2) = geometric_canonicalize(&once, &layout, &frame).unwrap();
        assert!(twice.max_joint_distance(&once) < 1e-9);
        assert!(geodesic_angle(&r2, &RotationMatrix::identity()) < 1e-7);

        let l0 = bone_lengths(&rotated, &layout);
        let l1 = bone_lengths(&once, &layout);
        for (a, b) in l0.iter().zip(l1.iter()) {
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
        let a0 = joint_angles(&rotated, &layout).unwrap();
        let a1 = joint_angles(&once, &layout).unwrap();
        for (a, b) in a0.iter().zip(a1.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn prop_inverts_any_sampled_rotation(
            yaw in -PI..PI, pitch in -1.3..1.3f64, roll in -PI..PI,
        ) {
            let layout = JointLayout::h36m17();
            let frame = CanonicalFrame::default_frame();
            let base = canonical_humanoid();
            let r_true = euler_to_matrix(&EulerYPR::new(yaw, pitch, roll));
            let (out, r_rec) =
                geometric_canonicalize(&base.rotated(&r_true), &layout, &frame).unwrap();
            prop_assert!(geodesic_angle(&r_rec, &r_true) < 1e-6);
            prop_assert!(out.max_joint_distance(&base) < 1e-6);
        }
    }
}
