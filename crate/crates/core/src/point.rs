//! Points of C^n for n in {1, 2}.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A point of C^1 or C^2. Unused trailing coordinates are kept at zero so that
/// derived equality and arithmetic stay well defined.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    dim: u8,
    z: [Complex64; 2],
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

impl Point {
    pub fn new(coords: &[Complex64]) -> Result<Self> {
        match coords.len() {
            1 => Ok(Self::c1(coords[0])),
            2 => Ok(Self::c2(coords[0], coords[1])),
            n => Err(Error::UnsupportedDimension(n)),
        }
    }

    pub fn c1(z: Complex64) -> Self {
        Self { dim: 1, z: [z, ZERO] }
    }

    pub fn c2(z1: Complex64, z2: Complex64) -> Self {
        Self { dim: 2, z: [z1, z2] }
    }

    /// Real point `x + 0i` in C^1.
    pub fn real(x: f64) -> Self {
        Self::c1(Complex64::new(x, 0.0))
    }

    pub fn origin(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self::c1(ZERO)),
            2 => Ok(Self::c2(ZERO, ZERO)),
            n => Err(Error::UnsupportedDimension(n)),
        }
    }

    /// Builds a point from interleaved real coordinates `(re z1, im z1, re z2, im z2)`.
    pub fn from_reals(x: &[f64]) -> Result<Self> {
        match x.len() {
            2 => Ok(Self::c1(Complex64::new(x[0], x[1]))),
            4 => Ok(Self::c2(Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]))),
            n => Err(Error::UnsupportedDimension(n / 2)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.z[..self.dim as usize]
    }

    pub fn coord(&self, j: usize) -> Complex64 {
        self.z[j]
    }

    /// Real coordinate `axis` in the interleaved order used by grids.
    pub fn real_coord(&self, axis: usize) -> f64 {
        let c = self.z[axis / 2];
        if axis % 2 == 0 {
            c.re
        } else {
            c.im
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.z[0].norm_sqr() + self.z[1].norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (*self - *other).norm()
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }

    /// Multiplies every coordinate by the complex scalar `s`.
    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            z: [self.z[0] * s, self.z[1] * s],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        Point {
            dim: self.dim,
            z: [self.z[0] + rhs.z[0], self.z[1] + rhs.z[1]],
        }
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        Point {
            dim: self.dim,
            z: [self.z[0] - rhs.z[0], self.z[1] - rhs.z[1]],
        }
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point {
            dim: self.dim,
            z: [self.z[0] * rhs, self.z[1] * rhs],
        }
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (j, c) in self.coords().iter().enumerate() {
            if j > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}{:+}i", c.re, c.im)?;
        }
        f.write_str(")")
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coords().iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        let coords: Vec<Complex64> = pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        Point::new(&coords).map_err(serde::de::Error::custom)
    }
}
