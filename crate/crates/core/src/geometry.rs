//! Rigid-body transforms in 3D.
//!
//! A [`Pose`] stores a translation and a unit quaternion. At the 6-DoF
//! parameter boundary a pose is written as `(tx, ty, tz, roll, pitch, yaw)`
//! with the intrinsic convention `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
//!
//! Frame conventions: absolute poses map body coordinates into the world
//! frame, relative poses are expressed in the parent's frame, so
//! `compose(parent, child)` is the homogeneous product `T_parent · T_child`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Matrix4, Matrix6, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};

use crate::error::GeometryError;

/// Pitch values closer than this to ±π/2 cannot be converted to Euler angles.
pub const GIMBAL_GUARD: f64 = 1e-6;

/// A rigid transform: translation in meters plus a unit quaternion with `w >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    translation: Vector3<f64>,
    rotation: Quaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: Quaternion::identity(),
        }
    }

    /// Builds a pose from a translation and any non-zero quaternion; the
    /// quaternion is normalized and moved to the `w >= 0` hemisphere.
    pub fn new(translation: Vector3<f64>, rotation: Quaternion<f64>) -> Self {
        Self {
            translation,
            rotation: canonical(rotation),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(translation, Quaternion::identity())
    }

    /// Rotation about the world z axis by `yaw` radians, no translation.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::new(Vector3::zeros(), axis_quaternion(2, yaw))
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    /// Quaternion as `(w, x, y, z)`.
    pub fn quaternion(&self) -> Quaternion<f64> {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        UnitQuaternion::new_unchecked(self.rotation).to_rotation_matrix().into_inner()
    }

    /// Homogeneous 4×4 matrix.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Builds a pose from the upper 3×4 block of a homogeneous matrix. The
    /// rotation block is projected onto the nearest rotation.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        let q = UnitQuaternion::from_matrix(&r);
        Self::new(t, q.into_inner())
    }

    /// Geodesic rotation angle in radians, `2·acos|w|`.
    pub fn rotation_angle(&self) -> f64 {
        2.0 * self.rotation.w.abs().min(1.0).acos()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + rotate(&self.rotation, p)
    }

    /// `(t, r)` as a 6-vector, failing near gimbal lock.
    pub fn to_vector6(&self) -> Result<Vector6<f64>, GeometryError> {
        let (t, r) = pose_to_euler(self)?;
        Ok(Vector6::new(t.x, t.y, t.z, r.x, r.y, r.z))
    }

    pub fn from_vector6(v: &Vector6<f64>) -> Self {
        euler_to_pose(&v.fixed_rows::<3>(0).into_owned(), &v.fixed_rows::<3>(3).into_owned())
    }

    /// Largest absolute difference over translation and quaternion components.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        let dt = (self.translation - other.translation).amax();
        let dq = (self.rotation.coords - other.rotation.coords).amax();
        dt.max(dq)
    }
}

fn canonical(q: Quaternion<f64>) -> Quaternion<f64> {
    let n = q.norm();
    let q = q / n;
    if q.w < 0.0 {
        -q
    } else {
        q
    }
}

fn axis_quaternion(axis: usize, angle: f64) -> Quaternion<f64> {
    let (s, c) = (0.5 * angle).sin_cos();
    let mut v = [0.0; 3];
    v[axis] = s;
    Quaternion::new(c, v[0], v[1], v[2])
}

fn rotate(q: &Quaternion<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    UnitQuaternion::new_unchecked(*q).transform_vector(p)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `T_parent · T_child`.
pub fn compose(parent: &Pose, child: &Pose) -> Pose {
    Pose::new(
        parent.translation + rotate(&parent.rotation, &child.translation),
        parent.rotation * child.rotation,
    )
}

pub fn inverse(p: &Pose) -> Pose {
    let q_inv = p.rotation.conjugate();
    Pose::new(-rotate(&q_inv, &p.translation), q_inv)
}

/// The pose of `b` expressed in the frame of `a`: `inverse(a) ⊕ b`.
pub fn relative_between(a: &Pose, b: &Pose) -> Pose {
    compose(&inverse(a), b)
}

/// Chains relative poses onto `initial`; the result has `relatives.len() + 1` poses.
pub fn accumulate(relatives: &[Pose], initial: Pose) -> Trajectory {
    let mut poses = Vec::with_capacity(relatives.len() + 1);
    poses.push(initial);
    let mut current = initial;
    for rel in relatives {
        current = compose(&current, rel);
        poses.push(current);
    }
    Trajectory { poses, timestamps: None }
}

/// Pose from a translation and XYZ Euler angles `(roll, pitch, yaw)`.
pub fn euler_to_pose(t: &Vector3<f64>, r: &Vector3<f64>) -> Pose {
    let q = axis_quaternion(2, r.z) * axis_quaternion(1, r.y) * axis_quaternion(0, r.x);
    Pose::new(*t, q)
}

/// Inverse of [`euler_to_pose`] for pitch strictly inside `(-π/2, π/2)`.
pub fn pose_to_euler(p: &Pose) -> Result<(Vector3<f64>, Vector3<f64>), GeometryError> {
    let m = p.rotation_matrix();
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    if FRAC_PI_2 - pitch.abs() < GIMBAL_GUARD {
        return Err(GeometryError::GimbalLock { pitch });
    }
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    Ok((p.translation, Vector3::new(roll, pitch, yaw)))
}

/// Maps XYZ Euler-angle rates to the world-frame angular velocity.
fn euler_rate_matrix(r: &Vector3<f64>) -> Matrix3<f64> {
    let (sp, cp) = r.y.sin_cos();
    let (sy, cy) = r.z.sin_cos();
    Matrix3::new(cy * cp, -sy, 0.0, sy * cp, cy, 0.0, -sp, 0.0, 1.0)
}

fn euler_rate_matrix_inverse(r: &Vector3<f64>) -> Matrix3<f64> {
    let (sp, cp) = r.y.sin_cos();
    let (sy, cy) = r.z.sin_cos();
    Matrix3::new(
        cy / cp,
        sy / cp,
        0.0,
        -sy,
        cy,
        0.0,
        cy * sp / cp,
        sy * sp / cp,
        1.0,
    )
}

/// Derivatives of `compose` in 6-DoF `(t, r)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseJacobians {
    pub d_out_d_left: Matrix6<f64>,
    pub d_out_d_right: Matrix6<f64>,
}

/// Composes two poses given in 6-DoF coordinates and returns the composite
/// coordinates with both Jacobians.
///
/// Inputs are differentiated at the supplied Euler angles rather than at a
/// re-extracted set, so angles outside the principal range are handled
/// consistently. The output angles are the principal ones from
/// [`pose_to_euler`], which is why the function fails at gimbal lock.
pub fn compose_vector6_with_jacobians(
    parent: &Vector6<f64>,
    child: &Vector6<f64>,
) -> Result<(Vector6<f64>, PoseJacobians), GeometryError> {
    let rp: Vector3<f64> = parent.fixed_rows::<3>(3).into_owned();
    let rc: Vector3<f64> = child.fixed_rows::<3>(3).into_owned();
    let tc: Vector3<f64> = child.fixed_rows::<3>(0).into_owned();
    let p = Pose::from_vector6(parent);
    let c = Pose::from_vector6(child);
    let out = compose(&p, &c);
    let out6 = out.to_vector6()?;
    let ro: Vector3<f64> = out6.fixed_rows::<3>(3).into_owned();

    let rot_p = p.rotation_matrix();
    let e_out_inv = euler_rate_matrix_inverse(&ro);
    let e_p = euler_rate_matrix(&rp);
    let e_c = euler_rate_matrix(&rc);
    let rotated_child = rot_p * tc;

    let mut left = Matrix6::zeros();
    left.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    left.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&rotated_child) * e_p));
    left.fixed_view_mut::<3, 3>(3, 3).copy_from(&(e_out_inv * e_p));

    let mut right = Matrix6::zeros();
    right.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot_p);
    right.fixed_view_mut::<3, 3>(3, 3).copy_from(&(e_out_inv * rot_p * e_c));

    Ok((
        out6,
        PoseJacobians {
            d_out_d_left: left,
            d_out_d_right: right,
        },
    ))
}

/// [`compose`] plus Jacobians evaluated at the principal Euler coordinates of
/// both inputs.
pub fn compose_with_jacobians(
    parent: &Pose,
    child: &Pose,
) -> Result<(Pose, PoseJacobians), GeometryError> {
    let (_, jac) = compose_vector6_with_jacobians(&parent.to_vector6()?, &child.to_vector6()?)?;
    Ok((compose(parent, child), jac))
}

/// Absolute poses in the world frame, optionally timestamped.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
    timestamps: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self, GeometryError> {
        if poses.is_empty() {
            return Err(GeometryError::EmptyTrajectory);
        }
        Ok(Self { poses, timestamps: None })
    }

    pub fn with_timestamps(poses: Vec<Pose>, timestamps: Vec<f64>) -> Result<Self, GeometryError> {
        if poses.is_empty() {
            return Err(GeometryError::EmptyTrajectory);
        }
        if timestamps.len() != poses.len() {
            return Err(GeometryError::TimestampCount {
                poses: poses.len(),
                timestamps: timestamps.len(),
            });
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(GeometryError::NonMonotoneTimestamps { index: i + 1 });
        }
        Ok(Self {
            poses,
            timestamps: Some(timestamps),
        })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn last(&self) -> &Pose {
        self.poses.last().expect("trajectory is non-empty")
    }

    /// Relative motions between consecutive poses.
    pub fn relatives(&self) -> Vec<Pose> {
        self.poses
            .windows(2)
            .map(|w| relative_between(&w[0], &w[1]))
            .collect()
    }

    /// Left-multiplies every pose by `transform`.
    pub fn transformed(&self, transform: &Pose) -> Self {
        Self {
            poses: self.poses.iter().map(|p| compose(transform, p)).collect(),
            timestamps: self.timestamps.clone(),
        }
    }

    /// Re-expresses the trajectory so that its first pose is the identity.
    pub fn reanchored(&self) -> Self {
        self.transformed(&inverse(&self.poses[0]))
    }

    /// Cumulative path length of the positions, starting at 0.
    pub fn path_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.poses.len());
        let mut acc = 0.0;
        out.push(acc);
        for w in self.poses.windows(2) {
            acc += (w[1].translation - w[0].translation).norm();
            out.push(acc);
        }
        out
    }
}

impl From<Rotation3<f64>> for Pose {
    fn from(r: Rotation3<f64>) -> Self {
        Pose::new(Vector3::zeros(), UnitQuaternion::from_rotation_matrix(&r).into_inner())
    }
}
