//! Rotation mathematics on SO(3).
//!
//! Rotations are stored as 3×3 matrices acting on column vectors
//! (`v' = R v`). Skeleton poses keep joints as rows, so rotating a pose
//! is `X' = X Rᵀ`; see [`crate::skeleton`].

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the orthogonality and determinant invariants.
pub const ROTATION_TOL: f64 = 1e-9;

/// Clamp margin for `arccos` in the geodesic distance. Keeps the
/// derivative finite at 0 and π at the cost of a bias of at most
/// `acos(1 - 1e-7)` ≈ 4.5e-4 rad right at the boundary.
pub const GEODESIC_CLAMP_EPS: f64 = 1e-7;

/// Norm threshold below which a 6D input counts as collapsed.
pub const DEGENERATE_6D_EPS: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum RotationError {
    /// 6D input whose generators are (near-)zero or (near-)parallel.
    #[error("degenerate 6D rotation input: {0}")]
    DegenerateInput(String),
    /// Matrix that is not orthonormal with determinant +1.
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    /// Sampling interval with `low > high`.
    #[error("invalid range for {name}: low {low} > high {high}")]
    InvalidRange { name: &'static str, low: f64, high: f64 },
}

/// An element of SO(3): orthonormal 3×3 matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    /// Validates orthonormality and determinant within [`ROTATION_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, RotationError> {
        let gram = m.transpose() * m;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if !ortho_err.is_finite() || ortho_err > ROTATION_TOL {
            return Err(RotationError::NotARotation(format!(
                "orthogonality residual {ortho_err:.3e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(RotationError::NotARotation(format!("determinant {det}")));
        }
        Ok(RotationMatrix(m))
    }

    /// For matrices already known to be rotations (e.g. products of
    /// validated rotations).
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        RotationMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RotationMatrix) -> Self {
        RotationMatrix(self.0 * other.0)
    }

    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotation about the X axis.
    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotationMatrix(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    /// Rotation about the Y axis.
    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotationMatrix(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    /// Rotation about the Z axis.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotationMatrix(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rodrigues formula; `axis` need not be normalized.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self, RotationError> {
        let n = axis.norm();
        if n < DEGENERATE_6D_EPS {
            return Err(RotationError::DegenerateInput("zero rotation axis".into()));
        }
        let k = axis / n;
        let kx = skew(&k);
        let m = Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos());
        Ok(RotationMatrix(m))
    }

    /// Minimal rotation taking unit vector `from` onto unit vector `to`.
    /// Returns `None` when the vectors are antipodal (caller picks the
    /// tie-breaking axis).
    pub fn shortest_arc(from: &Vector3<f64>, to: &Vector3<f64>) -> Option<Self> {
        let axis = from.cross(to);
        let s = axis.norm();
        let c = from.dot(to);
        if s < 1e-12 {
            if c > 0.0 {
                return Some(RotationMatrix::identity());
            }
            return None;
        }
        let angle = s.atan2(c);
        Some(RotationMatrix::from_axis_angle(&axis, angle).expect("non-zero axis"))
    }

    /// First two columns as a 6D representation.
    pub fn to_6d(&self) -> Rot6D {
        Rot6D {
            a: self.0.column(0).into(),
            b: self.0.column(1).into(),
        }
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Continuous 6D rotation representation: two raw column generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl Rot6D {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>) -> Self {
        Rot6D { a, b }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), 6, "6D representation needs exactly 6 values");
        Rot6D {
            a: Vector3::new(v[0], v[1], v[2]),
            b: Vector3::new(v[3], v[4], v[5]),
        }
    }
}

/// Gram-Schmidt orthonormalization of the 6D representation:
/// `c1 = a/‖a‖`, `c2 = normalize(b − (c1·b) c1)`, `c3 = c1 × c2`.
pub fn rot_from_6d(r: &Rot6D) -> Result<RotationMatrix, RotationError> {
    if !(r.a.iter().all(|x| x.is_finite()) && r.b.iter().all(|x| x.is_finite())) {
        return Err(RotationError::DegenerateInput("non-finite input".into()));
    }
    let na = r.a.norm();
    if na < DEGENERATE_6D_EPS {
        return Err(RotationError::DegenerateInput(format!(
            "first generator norm {na:.3e}"
        )));
    }
    let c1 = r.a / na;
    let ortho = r.b - c1 * c1.dot(&r.b);
    let no = ortho.norm();
    if no < DEGENERATE_6D_EPS {
        return Err(RotationError::DegenerateInput(format!(
            "second generator parallel to first (residual norm {no:.3e})"
        )));
    }
    let c2 = ortho / no;
    let c3 = c1.cross(&c2);
    Ok(RotationMatrix(Matrix3::from_columns(&[c1, c2, c3])))
}

/// Geodesic distance on SO(3): the angle of the relative rotation,
/// `arccos(clamp((tr(ra rbᵀ) − 1) / 2))`, in `[0, π]`.
pub fn geodesic_angle(ra: &RotationMatrix, rb: &RotationMatrix) -> f64 {
    let tr = (ra.0 * rb.0.transpose()).trace();
    let x = ((tr - 1.0) / 2.0).clamp(-1.0 + GEODESIC_CLAMP_EPS, 1.0 - GEODESIC_CLAMP_EPS);
    x.acos()
}

/// Yaw/pitch/roll in radians, composed intrinsically as Z-Y-X.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerYPR {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerYPR {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        EulerYPR { yaw, pitch, roll }
    }
}

/// `R = Rz(yaw) · Ry(pitch) · Rx(roll)` (intrinsic Z-Y-X; yaw about the
/// world up axis first).
pub fn euler_to_matrix(e: &EulerYPR) -> RotationMatrix {
    RotationMatrix::about_z(e.yaw)
        .compose(&RotationMatrix::about_y(e.pitch))
        .compose(&RotationMatrix::about_x(e.roll))
}

/// Sampling ranges for synthetic camera rotations (degrees).
///
/// Yaw is drawn from a two-component mixture: with probability
/// `frontal_weight` uniform over `yaw_frontal_deg`, otherwise uniform
/// over `yaw_full_deg`. Pitch and roll are plain uniforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EulerRanges {
    pub yaw_frontal_deg: (f64, f64),
    pub yaw_full_deg: (f64, f64),
    pub frontal_weight: f64,
    pub pitch_deg: (f64, f64),
    pub roll_deg: (f64, f64),
}

impl Default for EulerRanges {
    fn default() -> Self {
        EulerRanges {
            yaw_frontal_deg: (-60.0, 60.0),
            yaw_full_deg: (-180.0, 180.0),
            frontal_weight: 0.7,
            pitch_deg: (-30.0, 30.0),
            roll_deg: (-15.0, 15.0),
        }
    }
}

impl EulerRanges {
    pub fn validate(&self) -> Result<(), RotationError> {
        for (name, &(lo, hi)) in [
            ("yaw_frontal_deg", &self.yaw_frontal_deg),
            ("yaw_full_deg", &self.yaw_full_deg),
            ("pitch_deg", &self.pitch_deg),
            ("roll_deg", &self.roll_deg),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(RotationError::InvalidRange { name, low: lo, high: hi });
            }
        }
        if !(0.0..=1.0).contains(&self.frontal_weight) {
            return Err(RotationError::InvalidRange {
                name: "frontal_weight",
                low: self.frontal_weight,
                high: 1.0,
            });
        }
        Ok(())
    }

    /// Probability density of the sampled yaw at `deg`, in 1/degree.
    pub fn yaw_density_per_deg(&self, deg: f64) -> f64 {
        let in_range = |r: (f64, f64), x: f64| x >= r.0 && x <= r.1;
        let width = |r: (f64, f64)| r.1 - r.0;
        let mut p = 0.0;
        if in_range(self.yaw_frontal_deg, deg) && width(self.yaw_frontal_deg) > 0.0 {
            p += self.frontal_weight / width(self.yaw_frontal_deg);
        }
        if in_range(self.yaw_full_deg, deg) && width(self.yaw_full_deg) > 0.0 {
            p += (1.0 - self.frontal_weight) / width(self.yaw_full_deg);
        }
        p
    }
}

fn sample_uniform_deg<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    }
}

/// Draws yaw/pitch/roll from `ranges` and builds the rotation.
/// Deterministic for a fixed generator state.
pub fn sample_camera_rotation<R: Rng>(
    rng: &mut R,
    ranges: &EulerRanges,
) -> Result<(RotationMatrix, EulerYPR), RotationError> {
    ranges.validate()?;
    let u: f64 = rng.random_range(0.0..1.0);
    let yaw_deg = if u < ranges.frontal_weight {
        sample_uniform_deg(rng, ranges.yaw_frontal_deg)
    } else {
        sample_uniform_deg(rng, ranges.yaw_full_deg)
    };
    let pitch_deg = sample_uniform_deg(rng, ranges.pitch_deg);
    let roll_deg = sample_uniform_deg(rng, ranges.roll_deg);
    let e = EulerYPR::new(
        yaw_deg.to_radians(),
        pitch_deg.to_radians(),
        roll_deg.to_radians(),
    );
    Ok((euler_to_matrix(&e), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn assert_mat_eq(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) {
        assert!((a - b).abs().max() <= tol, "matrices differ:\n{a}\n{b}");
    }

    #[test]
    fn rot6d_orthonormal_input_is_identity() {
        let r = rot_from_6d(&Rot6D::from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_mat_eq(r.matrix(), &Matrix3::identity(), 1e-15);
    }

    #[test]
    fn rot6d_is_scale_invariant() {
        let r = rot_from_6d(&Rot6D::from_slice(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0])).unwrap();
        assert_mat_eq(r.matrix(), &Matrix3::identity(), 1e-15);
    }

    #[test]
    fn rot6d_hand_gram_schmidt() {
        // a=(0,1,0), b=(1,0,0): c1=(0,1,0), c2=(1,0,0), c3=c1×c2=(0,0,-1).
        let r = rot_from_6d(&Rot6D::from_slice(&[0.0, 1.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        let expected = Matrix3::from_columns(&[
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, -1.0),
        ]);
        assert_mat_eq(r.matrix(), &expected, 1e-15);
        assert_abs_diff_eq!(r.matrix().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rot6d_degenerate_inputs_error() {
        let zero = Rot6D::from_slice(&[0.0; 6]);
        assert!(matches!(rot_from_6d(&zero), Err(RotationError::DegenerateInput(_))));
        let parallel = Rot6D::from_slice(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(rot_from_6d(&parallel), Err(RotationError::DegenerateInput(_))));
    }

    #[test]
    fn geodesic_angle_examples() {
        let i = RotationMatrix::identity();
        assert!(geodesic_angle(&i, &i) < 1e-3);
        let rz = RotationMatrix::about_z(PI / 2.0);
        assert_abs_diff_eq!(geodesic_angle(&rz, &i), PI / 2.0, epsilon = 1e-12);
        // Hand evaluation of the trace formula: Rx(0.3) vs Rx(0.1) -> 0.2.
        let a = RotationMatrix::about_x(0.3);
        let b = RotationMatrix::about_x(0.1);
        assert_abs_diff_eq!(geodesic_angle(&a, &b), 0.2, epsilon = 1e-9);
    }

    #[test]
    fn euler_examples() {
        let id = euler_to_matrix(&EulerYPR::new(0.0, 0.0, 0.0));
        assert_mat_eq(id.matrix(), &Matrix3::identity(), 1e-15);

        let half_turn = euler_to_matrix(&EulerYPR::new(PI, 0.0, 0.0));
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert_mat_eq(half_turn.matrix(), &expected, 1e-12);

        // Explicit product Rz(π/2)·Ry(π/2), multiplied out by hand.
        let m = euler_to_matrix(&EulerYPR::new(PI / 2.0, PI / 2.0, 0.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0);
        assert_mat_eq(m.matrix(), &expected, 1e-12);
    }

    #[test]
    fn sampling_zero_width_ranges_give_identity() {
        let ranges = EulerRanges {
            yaw_frontal_deg: (0.0, 0.0),
            yaw_full_deg: (0.0, 0.0),
            frontal_weight: 0.7,
            pitch_deg: (0.0, 0.0),
            roll_deg: (0.0, 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (r, e) = sample_camera_rotation(&mut rng, &ranges).unwrap();
        assert_mat_eq(r.matrix(), &Matrix3::identity(), 1e-15);
        assert_eq!((e.yaw, e.pitch, e.roll), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sampling_is_deterministic_under_fixed_seed() {
        let ranges = EulerRanges::default();
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_camera_rotation(&mut rng, &ranges).unwrap()
        };
        let (r1, e1) = draw(42);
        let (r2, e2) = draw(42);
        assert_eq!(r1.matrix(), r2.matrix());
        assert_eq!(e1, e2);
    }

    #[test]
    fn sampling_rejects_inverted_range() {
        let ranges = EulerRanges {
            pitch_deg: (10.0, -10.0),
            ..EulerRanges::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_camera_rotation(&mut rng, &ranges),
            Err(RotationError::InvalidRange { name: "pitch_deg", .. })
        ));
    }

    #[test]
    fn yaw_histogram_matches_mixture_chi_square() {
        // 36 bins of 10°, df = 35; chi2 critical value at alpha = 0.01.
        const CHI2_CRIT_DF35_P99: f64 = 57.3421;
        let ranges = EulerRanges::default();
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(20240817);
        let mut counts = [0usize; 36];
        for _ in 0..n {
            let (_, e) = sample_camera_rotation(&mut rng, &ranges).unwrap();
            let deg = e.yaw.to_degrees();
            let bin = (((deg + 180.0) / 10.0).floor() as isize).clamp(0, 35) as usize;
            counts[bin] += 1;
        }
        let mut chi2 = 0.0;
        for (bin, &c) in counts.iter().enumerate() {
            let mid = -180.0 + 10.0 * (bin as f64 + 0.5);
            let expected = ranges.yaw_density_per_deg(mid) * 10.0 * n as f64;
            assert!(expected > 5.0, "bin {bin} too thin for chi-square");
            let d = c as f64 - expected;
            chi2 += d * d / expected;
        }
        assert!(
            chi2 < CHI2_CRIT_DF35_P99,
            "chi2 {chi2:.2} exceeds critical value"
        );
    }

    #[test]
    fn compose_about_z_is_additive() {
        let a = 0.7;
        let b = -0.4;
        let lhs = RotationMatrix::about_z(a).compose(&RotationMatrix::about_z(b));
        let rhs = RotationMatrix::about_z(a + b);
        assert_mat_eq(lhs.matrix(), rhs.matrix(), 1e-12);
    }

    #[test]
    fn shortest_arc_handles_aligned_and_antipodal() {
        let x = Vector3::new(1.0, 0.0, 0.0);
        let r = RotationMatrix::shortest_arc(&x, &x).unwrap();
        assert_mat_eq(r.matrix(), &Matrix3::identity(), 1e-15);
        assert!(RotationMatrix::shortest_arc(&x, &(-x)).is_none());
        let y = Vector3::new(0.0, 1.0, 0.0);
        let r = RotationMatrix::shortest_arc(&x, &y).unwrap();
        assert_abs_diff_eq!((r.rotate_vector(&x) - y).norm(), 0.0, epsilon = 1e-12);
    }

    fn arb_rot() -> impl Strategy<Value = RotationMatrix> {
        (-PI..PI, -PI / 2.0..PI / 2.0, -PI..PI)
            .prop_map(|(y, p, r)| euler_to_matrix(&EulerYPR::new(y, p, r)))
    }

    fn arb_vec3(lim: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-lim..lim, -lim..lim, -lim..lim).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn prop_rot6d_output_is_valid(a in arb_vec3(5.0), b in arb_vec3(5.0)) {
            prop_assume!(a.norm() > 1e-3);
            prop_assume!((b - a.normalize() * a.normalize().dot(&b)).norm() > 1e-3);
            let r = rot_from_6d(&Rot6D::new(a, b)).unwrap();
            let gram = r.matrix().transpose() * r.matrix();
            prop_assert!((gram - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn prop_geodesic_symmetric_and_left_invariant(
            a in arb_rot(), b in arb_rot(), g in arb_rot()
        ) {
            let d_ab = geodesic_angle(&a, &b);
            let d_ba = geodesic_angle(&b, &a);
            prop_assert!((d_ab - d_ba).abs() < 1e-9);
            let d_rot = geodesic_angle(&g.compose(&a), &g.compose(&b));
            prop_assert!((d_ab - d_rot).abs() < 1e-9);
            prop_assert!((0.0..=PI).contains(&d_ab));
        }

        #[test]
        fn prop_geodesic_zero_iff_equal(a in arb_rot(), b in arb_rot()) {
            prop_assert!(geodesic_angle(&a, &a) < 1e-5);
            if geodesic_angle(&a, &b) < 1e-5 {
                prop_assert!((a.matrix() - b.matrix()).abs().max() < 1e-4);
            }
        }

        #[test]
        fn prop_rot6d_round_trip(r in arb_rot()) {
            let back = rot_from_6d(&r.to_6d()).unwrap();
            prop_assert!((back.matrix() - r.matrix()).abs().max() < 1e-9);
        }

        #[test]
        fn prop_apply_then_inverse_restores(r in arb_rot(), v in arb_vec3(100.0)) {
            let w = r.transpose().rotate_vector(&r.rotate_vector(&v));
            prop_assert!((w - v).norm() < 1e-9 * v.norm().max(1.0));
        }
    }
}
