//! Small vector and tensor aliases shared by every module.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Vec3 = Vector3<f64>;
pub type CVec3 = Vector3<C64>;
pub type Mat3 = Matrix3<f64>;
pub type CMat3 = Matrix3<C64>;

/// Row-major 3x3 real tensor, the form used in files.
pub type Tensor3 = [[f64; 3]; 3];

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn tensor_to_mat(t: &Tensor3) -> Mat3 {
    Mat3::new(
        t[0][0], t[0][1], t[0][2], t[1][0], t[1][1], t[1][2], t[2][0], t[2][1], t[2][2],
    )
}

pub fn mat_to_tensor(m: &Mat3) -> Tensor3 {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// Real 3-vector promoted to complex.
pub fn complexify(v: &Vec3) -> CVec3 {
    CVec3::new(v.x.into(), v.y.into(), v.z.into())
}

/// Bilinear dot product (no conjugation) of a real and a complex vector.
pub fn rdot(a: &Vec3, b: &CVec3) -> C64 {
    b.x * a.x + b.y * a.y + b.z * a.z
}

/// Unit vector check used for incident and observation directions.
pub fn check_unit(v: &Vec3, what: &str) -> crate::Result<()> {
    if !v.iter().all(|c| c.is_finite()) || (v.norm() - 1.0).abs() > 1e-12 {
        return Err(crate::Error::InvalidInput(format!(
            "{what} must be a unit vector (|v| = {})",
            v.norm()
        )));
    }
    Ok(())
}

/// Axis-aligned box, closed on the lower side and open on the upper side.
pub fn in_box(x: &Vec3, lower: &Vec3, upper: &Vec3) -> bool {
    (0..3).all(|i| x[i] >= lower[i] && x[i] < upper[i])
}
