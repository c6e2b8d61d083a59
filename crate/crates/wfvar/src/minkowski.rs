//! Four-vectors in signature (+,-,-,-) with c = 1.
//!
//! Spatial three-vectors are plain `[f64; 3]` arrays; the helpers at the
//! bottom of this file keep the arithmetic readable.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FourVector {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CausalClass {
    Timelike,
    Spacelike,
    Lightlike,
}

impl FourVector {
    pub const ZERO: FourVector = FourVector { t: 0.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        FourVector { t, x, y, z }
    }

    pub fn from_parts(t: f64, s: Vec3) -> Self {
        FourVector { t, x: s[0], y: s[1], z: s[2] }
    }

    pub fn spatial(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.t, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        FourVector { t: a[0], x: a[1], y: a[2], z: a[3] }
    }

    /// Euclidean norm in R^4, used for perturbation norms and residual sizes.
    pub fn norm4(&self) -> f64 {
        (self.t * self.t + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for FourVector {
    type Output = FourVector;
    fn add(self, o: FourVector) -> FourVector {
        FourVector::new(self.t + o.t, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for FourVector {
    type Output = FourVector;
    fn sub(self, o: FourVector) -> FourVector {
        FourVector::new(self.t - o.t, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for FourVector {
    type Output = FourVector;
    fn mul(self, s: f64) -> FourVector {
        FourVector::new(self.t * s, self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for FourVector {
    type Output = FourVector;
    fn neg(self) -> FourVector {
        self * -1.0
    }
}

pub fn mink_dot(a: FourVector, b: FourVector) -> f64 {
    a.t * b.t - a.x * b.x - a.y * b.y - a.z * b.z
}

pub fn classify(a: FourVector, eps_null: f64) -> CausalClass {
    let s = mink_dot(a, a);
    if s > eps_null {
        CausalClass::Timelike
    } else if s < -eps_null {
        CausalClass::Spacelike
    } else {
        CausalClass::Lightlike
    }
}

/// Default null tolerance, scaled with the vector's size.
pub fn default_null_tolerance(a: FourVector) -> f64 {
    let n = a.norm4();
    1e-12 * (n * n).max(1.0)
}

pub fn classify_default(a: FourVector) -> CausalClass {
    classify(a, default_null_tolerance(a))
}

pub fn gamma_of_velocity(v: Vec3) -> Result<f64> {
    let v2 = dot3(v, v);
    if v2 >= 1.0 || !v2.is_finite() {
        return Err(Error::LuminalVelocity { speed: v2.sqrt() });
    }
    Ok(1.0 / (1.0 - v2).sqrt())
}

/// Proper four-velocity gamma*(1, v).
pub fn proper_velocity(v: Vec3) -> Result<FourVector> {
    let g = gamma_of_velocity(v)?;
    Ok(FourVector::from_parts(g, scale3(v, g)))
}

/// Pure boost with velocity `beta` along coordinate `axis` (0 = x, 1 = y, 2 = z).
pub fn boost(a: FourVector, axis: usize, beta: f64) -> FourVector {
    let g = 1.0 / (1.0 - beta * beta).sqrt();
    let mut s = a.spatial();
    let t = g * (a.t - beta * s[axis]);
    s[axis] = g * (s[axis] - beta * a.t);
    FourVector::from_parts(t, s)
}

/// Transform a coordinate velocity under the same boost as [`boost`].
pub fn boost_velocity(v: Vec3, axis: usize, beta: f64) -> Vec3 {
    let u = boost(FourVector::from_parts(1.0, v), axis, beta);
    scale3(u.spatial(), 1.0 / u.t)
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_examples() {
        let e0 = FourVector::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(mink_dot(e0, e0), 1.0);
        let n = FourVector::new(1.0, 1.0, 0.0, 0.0);
        assert_eq!(mink_dot(n, n), 0.0);
        assert_eq!(mink_dot(FourVector::new(2.0, 1.0, 0.0, 0.0), FourVector::new(1.0, 0.0, 1.0, 0.0)), 2.0);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(FourVector::new(1.0, 0.0, 0.0, 0.0), 0.0), CausalClass::Timelike);
        assert_eq!(classify(FourVector::new(0.0, 1.0, 0.0, 0.0), 0.0), CausalClass::Spacelike);
        assert_eq!(classify(FourVector::new(1.0, 0.6, 0.8, 0.0), 1e-12), CausalClass::Lightlike);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_of_velocity([0.0; 3]).unwrap(), 1.0);
        assert!((gamma_of_velocity([0.6, 0.0, 0.0]).unwrap() - 1.25).abs() < 1e-15);
        assert!(matches!(gamma_of_velocity([1.0, 0.0, 0.0]), Err(Error::LuminalVelocity { .. })));
    }

    #[test]
    fn boost_preserves_dot() {
        let a = FourVector::new(2.0, 0.3, -0.7, 1.1);
        let b = FourVector::new(-0.4, 1.5, 0.2, 0.9);
        let d0 = mink_dot(a, b);
        let d1 = mink_dot(boost(a, 1, 0.8), boost(b, 1, 0.8));
        assert!((d0 - d1).abs() < 1e-12 * d0.abs().max(1.0));
    }

    #[test]
    fn velocity_boost_matches_event_boost() {
        let v = [0.3, -0.2, 0.1];
        let p0 = FourVector::new(0.0, 0.0, 0.0, 0.0);
        let p1 = FourVector::from_parts(1e-3, scale3(v, 1e-3));
        let (q0, q1) = (boost(p0, 0, 0.5), boost(p1, 0, 0.5));
        let d = q1 - q0;
        let w = boost_velocity(v, 0, 0.5);
        for k in 0..3 {
            assert!((d.spatial()[k] / d.t - w[k]).abs() < 1e-12);
        }
    }
}
