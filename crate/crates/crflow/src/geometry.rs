//! Minimal 2D vector/tensor types used throughout the crate.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    /// Rotate by -90 degrees: (x, y) -> (y, -x).
    pub fn perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// z-component of the cross product of two planar vectors.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Outer product self * other^T.
    pub fn outer(self, other: Vec2) -> Mat2 {
        Mat2 {
            a: [
                [self.x * other.x, self.x * other.y],
                [self.y * other.x, self.y * other.y],
            ],
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        self.scale(s)
    }
}

/// Row-major 2x2 tensor, `a[i][j]` with i the row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub a: [[f64; 2]; 2],
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { a: [[0.0; 2]; 2] };

    pub fn trace(self) -> f64 {
        self.a[0][0] + self.a[1][1]
    }

    pub fn frobenius_sq(self) -> f64 {
        self.a.iter().flatten().map(|v| v * v).sum()
    }

    pub fn frobenius(self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Double contraction A : B.
    pub fn contract(self, other: Mat2) -> f64 {
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += self.a[i][j] * other.a[i][j];
            }
        }
        s
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.a[0][0] * v.x + self.a[0][1] * v.y,
            self.a[1][0] * v.x + self.a[1][1] * v.y,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let mut r = Mat2::ZERO;
        for i in 0..2 {
            for j in 0..2 {
                r.a[i][j] = self.a[i][j] + o.a[i][j];
            }
        }
        r
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        for i in 0..2 {
            for j in 0..2 {
                self.a[i][j] += o.a[i][j];
            }
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let mut r = Mat2::ZERO;
        for i in 0..2 {
            for j in 0..2 {
                r.a[i][j] = self.a[i][j] - o.a[i][j];
            }
        }
        r
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        let mut r = self;
        for i in 0..2 {
            for j in 0..2 {
                r.a[i][j] *= s;
            }
        }
        r
    }
}
