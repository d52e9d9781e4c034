//! SE(3) poses and their 6-vector tangent parameterization.
//!
//! A [`Pose`] stores a rotation matrix and translation and maps world points
//! into the camera frame: `x_cam = R * x_world + t`. Tangent vectors are
//! ordered `[rotation(3), translation(3)]`, and optimizers update poses
//! left-multiplicatively: `T <- exp(delta) * T`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// se(3) element: indices 0..3 rotational, 3..6 translational.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent(pub Vector6<f64>);

impl Tangent {
    pub fn zero() -> Self {
        Tangent(Vector6::zeros())
    }

    pub fn new(rot: Vector3<f64>, trans: Vector3<f64>) -> Self {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&rot);
        v.fixed_rows_mut::<3>(3).copy_from(&trans);
        Tangent(v)
    }

    #[inline]
    pub fn rot(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    #[inline]
    pub fn trans(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn so3_exp(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle2 = theta.norm_squared();
    let hat = skew(theta);
    // sin(t)/t and (1-cos(t))/t^2 with series fallbacks near zero.
    let (a, b) = if angle2 < 1e-14 {
        (1.0 - angle2 / 6.0, 0.5 - angle2 / 24.0)
    } else {
        let angle = angle2.sqrt();
        (angle.sin() / angle, (1.0 - angle.cos()) / angle2)
    };
    Matrix3::identity() + hat * a + hat * hat * b
}

fn so3_log(rot: &Matrix3<f64>) -> Vector3<f64> {
    // Through the quaternion: stable away from exactly pi.
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rot));
    match q.axis_angle() {
        Some((axis, angle)) => axis.into_inner() * angle,
        None => Vector3::zeros(),
    }
}

/// Left Jacobian of SO(3): exp(theta) translation coupling, V in t = V * rho.
fn so3_left_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle2 = theta.norm_squared();
    let hat = skew(theta);
    let (b, c) = if angle2 < 1e-14 {
        (0.5 - angle2 / 24.0, 1.0 / 6.0 - angle2 / 120.0)
    } else {
        let angle = angle2.sqrt();
        (
            (1.0 - angle.cos()) / angle2,
            (angle - angle.sin()) / (angle2 * angle),
        )
    };
    Matrix3::identity() + hat * b + hat * hat * c
}

fn so3_left_jacobian_inv(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle2 = theta.norm_squared();
    let hat = skew(theta);
    let c = if angle2 < 1e-14 {
        1.0 / 12.0 + angle2 / 720.0
    } else {
        let angle = angle2.sqrt();
        (1.0 - angle * angle.sin() / (2.0 * (1.0 - angle.cos()))) / angle2
    };
    Matrix3::identity() - hat * 0.5 + hat * hat * c
}

pub fn se3_exp(t: &Tangent) -> Pose {
    let theta = t.rot();
    Pose {
        rotation: so3_exp(&theta),
        translation: so3_left_jacobian(&theta) * t.trans(),
    }
}

pub fn se3_log(p: &Pose) -> Tangent {
    let theta = so3_log(&p.rotation);
    let rho = so3_left_jacobian_inv(&theta) * p.translation;
    Tangent::new(theta, rho)
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// R^T R = I and det(R) = 1 within the given tolerance.
    pub fn rotation_is_valid(&self, tol: f64) -> bool {
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        err <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    /// self * other, matching T_n = T_rel * T_ak composition order.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Camera center in world coordinates (for a world-to-camera pose).
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Left-multiplicative retraction used by every pose optimizer step.
    pub fn retract(&self, delta: &Tangent) -> Pose {
        se3_exp(delta).compose(self)
    }

    /// Re-project the rotation onto SO(3) through a quaternion roundtrip.
    pub fn normalized(&self) -> Pose {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.rotation,
        ));
        Pose {
            rotation: q.to_rotation_matrix().into_inner(),
            translation: self.translation,
        }
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn from_quaternion_translation(q: &UnitQuaternion<f64>, t: Vector3<f64>) -> Pose {
        Pose {
            rotation: q.to_rotation_matrix().into_inner(),
            translation: t,
        }
    }

    /// Rotation angle (radians) between two poses.
    pub fn rotation_distance(&self, other: &Pose) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }
}
