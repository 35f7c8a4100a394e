//! SO(3) and unit-quaternion kernel.
//!
//! Everything here is a pure function over small fixed-size values. Rotations
//! map body-frame coordinates to inertial-frame coordinates (`v = R V`), and
//! unit quaternions are in scalar-first form with the Rodrigues relation
//! `R = I + 2 [q]x (q0 I + [q]x)`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat6 = Matrix6<f64>;

/// Orthonormality and determinant tolerance for [`Rotation`].
pub const ROTATION_TOL: f64 = 1e-9;
/// Unit-norm tolerance for [`UnitQuaternion`].
pub const QUATERNION_TOL: f64 = 1e-12;
/// `|R31|` threshold above which yaw and roll are not separable.
pub const GIMBAL_LOCK_TOL: f64 = 1e-9;

pub fn e1() -> Vec3 {
    Vec3::x()
}

pub fn e2() -> Vec3 {
    Vec3::y()
}

pub fn e3() -> Vec3 {
    Vec3::z()
}

/// Cross-product matrix: `skew(u) * w == u.cross(&w)`.
pub fn skew(u: &Vec3) -> Mat3 {
    Mat3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Inverse of [`skew`]; reads the antisymmetric part of `m`.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Projector onto the plane orthogonal to the unit vector `x`, `I - x x^T`.
pub fn projector(x: &Vec3) -> Result<Mat3> {
    let norm = x.norm();
    if (norm - 1.0).abs() > ROTATION_TOL {
        return Err(Error::Precondition(format!(
            "projector expects a unit vector, got norm {norm}"
        )));
    }
    Ok(Mat3::identity() - x * x.transpose())
}

/// Rotation matrix in SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates orthonormality and `det = +1` to [`ROTATION_TOL`].
    pub fn new(m: Mat3) -> Result<Self> {
        let residual = orthonormality_residual(&m);
        let det = m.determinant();
        if !m.iter().all(|v| v.is_finite()) || residual > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Precondition(format!(
                "not a rotation: orthonormality residual {residual:.3e}, det {det}"
            )));
        }
        Ok(Rotation(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// `R_{i,j}` with one-based indices, matching the usual matrix notation.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.0[(row - 1, col - 1)]
    }

    pub fn r33(&self) -> f64 {
        self.0[(2, 2)]
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn residual(&self) -> f64 {
        orthonormality_residual(&self.0)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        // acos loses precision near 0; use the sine from the antisymmetric part.
        let s = vee(&self.0).norm();
        s.atan2(c)
    }

    /// Projects back onto SO(3) with one Gram-Schmidt pass over the columns
    /// when the orthonormality residual exceeds [`ROTATION_TOL`].
    pub fn renormalized(&self) -> Self {
        if self.residual() <= ROTATION_TOL {
            return *self;
        }
        let c1 = self.0.column(0).normalize();
        let c2 = self.0.column(1) - c1 * c1.dot(&self.0.column(1));
        let c2 = c2.normalize();
        let c3 = c1.cross(&c2);
        Rotation(Mat3::from_columns(&[c1, c2, c3]))
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

fn orthonormality_residual(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).amax()
}

/// Unit quaternion `(q0, q)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion {
    pub scalar: f64,
    pub vector: Vec3,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        UnitQuaternion {
            scalar: 1.0,
            vector: Vec3::zeros(),
        }
    }

    pub fn new(scalar: f64, vector: Vec3) -> Result<Self> {
        let norm2 = scalar * scalar + vector.norm_squared();
        if (norm2 - 1.0).abs() > QUATERNION_TOL {
            return Err(Error::Precondition(format!(
                "quaternion is not unit: q0^2 + |q|^2 = {norm2}"
            )));
        }
        Ok(UnitQuaternion { scalar, vector })
    }

    /// Normalizes any non-zero four-vector.
    pub fn normalized(scalar: f64, vector: Vec3) -> Self {
        let n = (scalar * scalar + vector.norm_squared()).sqrt();
        UnitQuaternion {
            scalar: scalar / n,
            vector: vector / n,
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let half = 0.5 * angle;
        UnitQuaternion::normalized(half.cos(), axis.normalize() * half.sin())
    }

    /// Minimal attitude-error coordinates `lambda = 2 q`.
    pub fn lambda(&self) -> Vec3 {
        2.0 * self.vector
    }

    /// Inverse of [`UnitQuaternion::lambda`] on the `q0 >= 0` branch.
    pub fn from_lambda(lambda: &Vec3) -> Result<Self> {
        let q = 0.5 * lambda;
        let n2 = q.norm_squared();
        if n2 > 1.0 {
            return Err(Error::Precondition(format!(
                "|lambda / 2| = {} exceeds 1",
                n2.sqrt()
            )));
        }
        Ok(UnitQuaternion {
            scalar: (1.0 - n2).sqrt(),
            vector: q,
        })
    }
}

/// Rodrigues formula `R = I + 2 [q]x (q0 I + [q]x)`.
pub fn quat_to_rot(quat: &UnitQuaternion) -> Rotation {
    let s = skew(&quat.vector);
    Rotation(Mat3::identity() + 2.0 * s * (quat.scalar * Mat3::identity() + s))
}

/// Inverse of [`quat_to_rot`] (Shepperd's method) with the `q0 >= 0` branch.
pub fn rot_to_quat(rot: &Rotation) -> UnitQuaternion {
    let m = rot.matrix();
    let trace = m.trace();
    let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let (scalar, vector) = if trace >= diag[0] && trace >= diag[1] && trace >= diag[2] {
        let s = 2.0 * (1.0 + trace).sqrt();
        (
            0.25 * s,
            Vec3::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            ),
        )
    } else if diag[0] >= diag[1] && diag[0] >= diag[2] {
        let s = 2.0 * (1.0 + diag[0] - diag[1] - diag[2]).sqrt();
        (
            (m[(2, 1)] - m[(1, 2)]) / s,
            Vec3::new(
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            ),
        )
    } else if diag[1] >= diag[2] {
        let s = 2.0 * (1.0 + diag[1] - diag[0] - diag[2]).sqrt();
        (
            (m[(0, 2)] - m[(2, 0)]) / s,
            Vec3::new(
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            ),
        )
    } else {
        let s = 2.0 * (1.0 + diag[2] - diag[0] - diag[1]).sqrt();
        (
            (m[(1, 0)] - m[(0, 1)]) / s,
            Vec3::new(
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            ),
        )
    };
    if scalar < 0.0 {
        UnitQuaternion::normalized(-scalar, -vector)
    } else {
        UnitQuaternion::normalized(scalar, vector)
    }
}

/// Rodrigues exponential of a rotation vector (radians).
pub fn exp_rotation(omega: &Vec3) -> Rotation {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    // Series coefficients below 1e-8 rad keep full precision.
    let (a, b) = if theta2 < 1e-16 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Mat3::identity() + a * k + b * k * k)
}

/// Rotation vector of `rot`, the inverse of [`exp_rotation`] for angles below pi.
pub fn log_rotation(rot: &Rotation) -> Vec3 {
    let q = rot_to_quat(rot);
    let s = q.vector.norm();
    if s < 1e-12 {
        return 2.0 * q.vector;
    }
    let angle = 2.0 * s.atan2(q.scalar);
    q.vector * (angle / s)
}

pub fn rot_x(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
}

pub fn rot_y(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
}

pub fn rot_z(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// Intrinsic Z-Y-X (yaw, pitch, roll) Euler angles in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Set when `|R31|` is within [`GIMBAL_LOCK_TOL`] of 1; roll is then
    /// reported as zero and the remaining freedom is folded into yaw.
    pub gimbal_lock: bool,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        EulerAngles {
            roll,
            pitch,
            yaw,
            gimbal_lock: false,
        }
    }

    /// `Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn to_rotation(&self) -> Rotation {
        rot_z(self.yaw) * rot_y(self.pitch) * rot_x(self.roll)
    }

    pub fn to_degrees(&self) -> [f64; 3] {
        [self.roll.to_degrees(), self.pitch.to_degrees(), self.yaw.to_degrees()]
    }
}

impl fmt::Display for EulerAngles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, p, y] = self.to_degrees();
        write!(f, "roll {r:.3} deg, pitch {p:.3} deg, yaw {y:.3} deg")
    }
}

pub fn euler_zyx(rot: &Rotation) -> EulerAngles {
    let m = rot.matrix();
    let r31 = m[(2, 0)].clamp(-1.0, 1.0);
    let pitch = (-r31).asin();
    if r31.abs() > 1.0 - GIMBAL_LOCK_TOL {
        // R12 = -sin(yaw - s*roll) and R22 = cos(yaw - s*roll) with s = sign(-R31)
        // (pitch = s*pi/2); with roll pinned to zero only yaw remains.
        let yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
        return EulerAngles {
            roll: 0.0,
            pitch,
            yaw,
            gimbal_lock: true,
        };
    }
    EulerAngles {
        roll: m[(2, 1)].atan2(m[(2, 2)]),
        pitch,
        yaw: m[(1, 0)].atan2(m[(0, 0)]),
        gimbal_lock: false,
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Assembles a 6x6 matrix from four 3x3 blocks.
pub fn block6(tl: &Mat3, tr: &Mat3, bl: &Mat3, br: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(tl);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(tr);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(bl);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(br);
    m
}

pub fn block_diag6(tl: &Mat3, br: &Mat3) -> Mat6 {
    block6(tl, &Mat3::zeros(), &Mat3::zeros(), br)
}

/// `(top-left, top-right, bottom-left, bottom-right)` 3x3 blocks.
pub fn blocks(m: &Mat6) -> (Mat3, Mat3, Mat3, Mat3) {
    (
        m.fixed_view::<3, 3>(0, 0).into_owned(),
        m.fixed_view::<3, 3>(0, 3).into_owned(),
        m.fixed_view::<3, 3>(3, 0).into_owned(),
        m.fixed_view::<3, 3>(3, 3).into_owned(),
    )
}
