//! Small fixed-size vector helpers for 3-axis readings and 9-channel frames.
//!
//! Readings are plain `[T; 3]` / `[T; 9]` arrays; these free functions cover
//! the handful of operations the pipeline needs without pulling in a linear
//! algebra dependency.

use crate::scalar::{real, Real};

pub type Vec3<T> = [T; 3];
pub type Vec9<T> = [T; 9];

#[inline]
pub fn add3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<T: Real>(a: Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

/// Linear interpolation between two points, `t` in [0, 1].
#[inline]
pub fn lerp3<T: Real>(a: Vec3<T>, b: Vec3<T>, t: T) -> Vec3<T> {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Rotation about the z axis by `angle_deg` degrees.
pub fn rotate_z<T: Real>(v: Vec3<T>, angle_deg: T) -> Vec3<T> {
    let rad = angle_deg * real(std::f64::consts::PI / 180.0);
    let (s, c) = (rad.sin(), rad.cos());
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Rodrigues rotation of `v` about unit `axis` by `angle_rad`.
pub fn rotate_axis<T: Real>(v: Vec3<T>, axis: Vec3<T>, angle_rad: T) -> Vec3<T> {
    let (s, c) = (angle_rad.sin(), angle_rad.cos());
    let k = axis;
    let kxv = [
        k[1] * v[2] - k[2] * v[1],
        k[2] * v[0] - k[0] * v[2],
        k[0] * v[1] - k[1] * v[0],
    ];
    let kdv = dot3(k, v);
    let one = T::one();
    [
        v[0] * c + kxv[0] * s + k[0] * kdv * (one - c),
        v[1] * c + kxv[1] * s + k[1] * kdv * (one - c),
        v[2] * c + kxv[2] * s + k[2] * kdv * (one - c),
    ]
}

#[inline]
pub fn sub9<T: Real>(a: Vec9<T>, b: Vec9<T>) -> Vec9<T> {
    let mut out = [T::zero(); 9];
    for i in 0..9 {
        out[i] = a[i] - b[i];
    }
    out
}

#[inline]
pub fn all_finite9<T: Real>(a: &Vec9<T>) -> bool {
    a.iter().all(|x| x.is_finite())
}
