//! Small fixed-size linear algebra, generic over the differentiation scalar.

use crate::autodiff::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<R = f64> {
    pub x: R,
    pub y: R,
    pub z: R,
}

pub fn vec3<R: Real>(x: R, y: R, z: R) -> Vec3<R> {
    Vec3 { x, y, z }
}

impl<R: Real> Vec3<R> {
    pub fn splat(v: f64) -> Self {
        vec3(R::lit(v), R::lit(v), R::lit(v))
    }

    pub fn zero() -> Self {
        Self::splat(0.0)
    }

    pub fn from_f64(v: Vec3<f64>) -> Self {
        vec3(R::lit(v.x), R::lit(v.y), R::lit(v.z))
    }

    pub fn value(self) -> Vec3<f64> {
        vec3(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn dot(self, o: Self) -> R {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> R {
        self.dot(self)
    }

    pub fn norm(self) -> R {
        self.norm_sq().sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        vec3(self.x / n, self.y / n, self.z / n)
    }

    pub fn scale(self, c: f64) -> Self {
        vec3(self.x.scale(c), self.y.scale(c), self.z.scale(c))
    }

    pub fn lerp(self, o: Self, t: f64) -> Self {
        self.scale(1.0 - t) + o.scale(t)
    }
}

impl<R: Real> std::ops::Add for Vec3<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<R: Real> std::ops::Sub for Vec3<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<R: Real> std::ops::Neg for Vec3<R> {
    type Output = Self;
    fn neg(self) -> Self {
        vec3(-self.x, -self.y, -self.z)
    }
}

impl<R: Real> std::ops::Mul<R> for Vec3<R> {
    type Output = Self;
    fn mul(self, c: R) -> Self {
        vec3(self.x * c, self.y * c, self.z * c)
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug)]
pub struct Mat3<R = f64> {
    pub m: [[R; 3]; 3],
}

impl<R: Real> Mat3<R> {
    pub fn identity() -> Self {
        let o = R::lit(1.0);
        let z = R::lit(0.0);
        Mat3 {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_rows(r0: Vec3<R>, r1: Vec3<R>, r2: Vec3<R>) -> Self {
        Mat3 {
            m: [
                [r0.x, r0.y, r0.z],
                [r1.x, r1.y, r1.z],
                [r2.x, r2.y, r2.z],
            ],
        }
    }

    pub fn apply(&self, v: Vec3<R>) -> Vec3<R> {
        vec3(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    pub fn matmul(&self, o: &Mat3<R>) -> Mat3<R> {
        let mut m = [[R::lit(0.0); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Mat3 { m }
    }

    pub fn transpose(&self) -> Mat3<R> {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// Rotation about +x by `a` radians.
    pub fn rot_x(a: R) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let o = R::lit(1.0);
        let z = R::lit(0.0);
        Mat3 {
            m: [[o, z, z], [z, c, -s], [z, s, c]],
        }
    }

    pub fn rot_y(a: R) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let o = R::lit(1.0);
        let z = R::lit(0.0);
        Mat3 {
            m: [[c, z, s], [z, o, z], [-s, z, c]],
        }
    }

    pub fn rot_z(a: R) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let o = R::lit(1.0);
        let z = R::lit(0.0);
        Mat3 {
            m: [[c, -s, z], [s, c, z], [z, z, o]],
        }
    }

    /// Intrinsic XYZ Euler rotation: R = Rx(ax) * Ry(ay) * Rz(az).
    pub fn from_euler_xyz(angles: Vec3<R>) -> Self {
        Mat3::rot_x(angles.x)
            .matmul(&Mat3::rot_y(angles.y))
            .matmul(&Mat3::rot_z(angles.z))
    }
}

/// Unit quaternion (w, x, y, z).
#[derive(Clone, Copy, Debug)]
pub struct Quat<R = f64> {
    pub w: R,
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Quat<R> {
    pub fn identity() -> Self {
        Quat {
            w: R::lit(1.0),
            x: R::lit(0.0),
            y: R::lit(0.0),
            z: R::lit(0.0),
        }
    }

    pub fn from_axis_angle(axis: Vec3<R>, angle: R) -> Self {
        let h = angle.scale(0.5);
        let s = h.sin();
        let a = axis.normalized();
        Quat {
            w: h.cos(),
            x: a.x * s,
            y: a.y * s,
            z: a.z * s,
        }
    }

    pub fn normalized(self) -> Self {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        Quat {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn mul(self, o: Self) -> Self {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    pub fn to_mat3(self) -> Mat3<R> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let two = 2.0;
        Mat3 {
            m: [
                [
                    R::lit(1.0) - (y * y + z * z).scale(two),
                    (x * y - w * z).scale(two),
                    (x * z + w * y).scale(two),
                ],
                [
                    (x * y + w * z).scale(two),
                    R::lit(1.0) - (x * x + z * z).scale(two),
                    (y * z - w * x).scale(two),
                ],
                [
                    (x * z - w * y).scale(two),
                    (y * z + w * x).scale(two),
                    R::lit(1.0) - (x * x + y * y).scale(two),
                ],
            ],
        }
    }

    pub fn value(self) -> Quat<f64> {
        Quat {
            w: self.w.value(),
            x: self.x.value(),
            y: self.y.value(),
            z: self.z.value(),
        }
    }
}

/// Rigid/affine transform x -> R x + t.
#[derive(Clone, Copy, Debug)]
pub struct Affine<R = f64> {
    pub rot: Mat3<R>,
    pub t: Vec3<R>,
}

impl<R: Real> Affine<R> {
    pub fn identity() -> Self {
        Affine {
            rot: Mat3::identity(),
            t: Vec3::zero(),
        }
    }

    pub fn new(rot: Mat3<R>, t: Vec3<R>) -> Self {
        Affine { rot, t }
    }

    pub fn apply(&self, v: Vec3<R>) -> Vec3<R> {
        self.rot.apply(v) + self.t
    }

    /// self of other: x -> self(other(x)).
    pub fn compose(&self, other: &Affine<R>) -> Affine<R> {
        Affine {
            rot: self.rot.matmul(&other.rot),
            t: self.rot.apply(other.t) + self.t,
        }
    }

    /// Inverse of a rotation+translation transform.
    pub fn inverse_rigid(&self) -> Affine<R> {
        let rt = self.rot.transpose();
        let t = -rt.apply(self.t);
        Affine { rot: rt, t }
    }
}
