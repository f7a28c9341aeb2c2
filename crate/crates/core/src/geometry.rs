//! Vectors, pinhole cameras, rays, and scene normalization.
//!
//! The world/camera convention is right-handed OpenCV style: camera x right,
//! y down, z forward; poses are camera-to-world. After [`normalize_scene`]
//! the region of interest lies inside the ball of radius 0.95 so reconstructed
//! surfaces never touch the domain boundary.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn splat(v: T) -> Self {
        Vec3::new(v, v, v)
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    /// Unit vector along canonical axis `k` (0 = x, 1 = y, 2 = z).
    pub fn axis(k: usize) -> Self {
        let mut v = Self::zero();
        v[k] = T::one();
        v
    }

    pub fn dot(self, rhs: Self) -> T {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Self) -> Self {
        Vec3::new(
            self.y * rhs.z - self.z * rhs.y,
            self.z * rhs.x - self.x * rhs.z,
            self.x * rhs.y - self.y * rhs.x,
        )
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn normalized(self) -> Self {
        self / self.norm()
    }

    pub fn min_elementwise(self, rhs: Self) -> Self {
        Vec3::new(self.x.min(rhs.x), self.y.min(rhs.y), self.z.min(rhs.z))
    }

    pub fn max_elementwise(self, rhs: Self) -> Self {
        Vec3::new(self.x.max(rhs.x), self.y.max(rhs.y), self.z.max(rhs.z))
    }

    pub fn abs(self) -> Self {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn max_component(self) -> T {
        self.x.max(self.y).max(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64()),
            U::lit(self.y.to_f64()),
            U::lit(self.z.to_f64()),
        )
    }
}

impl<T: Real> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, k: usize) -> &T {
        match k {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range: {k}"),
        }
    }
}

impl<T: Real> std::ops::IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, k: usize) -> &mut T {
        match k {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index out of range: {k}"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, rhs: Self) {
        self.x += rhs.x;
        self.y += rhs.y;
        self.z += rhs.z;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix, used for camera rotations.
pub type Mat3<T> = [[T; 3]; 3];

pub fn mat3_identity<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn mat3_mul_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

/// Multiplies by the transpose, i.e. applies the inverse of a rotation.
pub fn mat3_transpose_mul_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    Vec3::new(
        m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
        m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
        m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
    )
}

fn mat3_col<T: Real>(m: &Mat3<T>, c: usize) -> Vec3<T> {
    Vec3::new(m[0][c], m[1][c], m[2][c])
}

fn mat3_det<T: Real>(m: &Mat3<T>) -> T {
    mat3_col(m, 0).dot(mat3_col(m, 1).cross(mat3_col(m, 2)))
}

/// Axis-aligned box, used to declare the region of interest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Self {
        Aabb { min, max }
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::lit(0.5)
    }

    pub fn half_extent(&self) -> Vec3<T> {
        (self.max - self.min) * T::lit(0.5)
    }

    /// Radius of the bounding sphere (half the box diagonal).
    pub fn bounding_radius(&self) -> T {
        self.half_extent().norm()
    }

    pub fn has_positive_extent(&self) -> bool {
        self.max.x > self.min.x && self.max.y > self.min.y && self.max.z > self.min.z
    }
}

/// Pinhole camera: intrinsics in pixels plus a rigid camera-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
    /// Camera-to-world rotation (columns are the camera axes in world coords).
    pub rotation: Mat3<T>,
    /// Camera center in world coordinates.
    pub translation: Vec3<T>,
}

impl<T: Real> Camera<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        if !(self.cx >= T::zero()
            && self.cx < T::from_u32(self.width).unwrap()
            && self.cy >= T::zero()
            && self.cy < T::from_u32(self.height).unwrap())
        {
            return Err(Error::invalid("principal point outside image bounds"));
        }
        let tol = T::lit(1e-4);
        for i in 0..3 {
            for j in 0..3 {
                let dot = mat3_col(&self.rotation, i).dot(mat3_col(&self.rotation, j));
                let expect = if i == j { T::one() } else { T::zero() };
                if (dot - expect).abs() > tol {
                    return Err(Error::invalid("camera rotation is not orthonormal"));
                }
            }
        }
        if (mat3_det(&self.rotation) - T::one()).abs() > tol {
            return Err(Error::invalid("camera rotation determinant is not +1"));
        }
        Ok(())
    }

    /// Camera forward axis (+z of the camera frame) in world coordinates.
    pub fn forward(&self) -> Vec3<T> {
        mat3_col(&self.rotation, 2)
    }

    pub fn center(&self) -> Vec3<T> {
        self.translation
    }

    /// Look-at constructor: camera at `eye` looking toward `target`, with
    /// `up` resolving the roll. Uses the y-down image convention.
    pub fn look_at(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: u32,
        height: u32,
        eye: Vec3<T>,
        target: Vec3<T>,
        up: Vec3<T>,
    ) -> Self {
        let fwd = (target - eye).normalized();
        let mut right = fwd.cross(up);
        if right.norm_squared() < T::lit(1e-12) {
            // forward parallel to up; pick an arbitrary perpendicular
            right = fwd.cross(Vec3::new(T::zero(), T::one(), T::zero()));
        }
        let right = right.normalized();
        let down = fwd.cross(right);
        let rotation = [
            [right.x, down.x, fwd.x],
            [right.y, down.y, fwd.y],
            [right.z, down.z, fwd.z],
        ];
        Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation: eye,
        }
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        let mut rotation = mat3_identity::<U>();
        for i in 0..3 {
            for j in 0..3 {
                rotation[i][j] = U::lit(self.rotation[i][j].to_f64());
            }
        }
        Camera {
            fx: U::lit(self.fx.to_f64()),
            fy: U::lit(self.fy.to_f64()),
            cx: U::lit(self.cx.to_f64()),
            cy: U::lit(self.cy.to_f64()),
            width: self.width,
            height: self.height,
            rotation,
            translation: self.translation.cast(),
        }
    }
}

/// Ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> Ray<T> {
    pub fn point_at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }
}

/// Similarity transform `x -> scale * x + translation` mapping the region of
/// interest into the unit ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneTransform<T> {
    pub scale: T,
    pub translation: Vec3<T>,
}

impl<T: Real> SceneTransform<T> {
    pub fn identity() -> Self {
        SceneTransform {
            scale: T::one(),
            translation: Vec3::zero(),
        }
    }

    pub fn apply_point(&self, p: Vec3<T>) -> Vec3<T> {
        p * self.scale + self.translation
    }

    pub fn apply_camera(&self, camera: &Camera<T>) -> Camera<T> {
        let mut out = camera.clone();
        out.translation = self.apply_point(camera.translation);
        out
    }

    pub fn apply_aabb(&self, b: &Aabb<T>) -> Aabb<T> {
        Aabb::new(self.apply_point(b.min), self.apply_point(b.max))
    }

    pub fn is_identity(&self, tol: T) -> bool {
        (self.scale - T::one()).abs() <= tol && self.translation.norm() <= tol
    }
}

/// Target radius of the normalized region of interest. The 0.05 margin keeps
/// surfaces and the coarsest hash cells away from the domain boundary.
pub const ROI_TARGET_RADIUS: f64 = 0.95;

/// Computes the similarity transform mapping `roi`'s bounding sphere onto the
/// ball of radius [`ROI_TARGET_RADIUS`] centered at the origin, and returns
/// the transformed cameras alongside it.
pub fn normalize_scene<T: Real>(
    cameras: &[Camera<T>],
    roi: &Aabb<T>,
) -> Result<(SceneTransform<T>, Vec<Camera<T>>)> {
    if !roi.has_positive_extent() {
        return Err(Error::invalid("roi must have positive extent on all axes"));
    }
    let radius = roi.bounding_radius();
    let scale = T::lit(ROI_TARGET_RADIUS) / radius;
    let transform = SceneTransform {
        scale,
        translation: -roi.center() * scale,
    };
    let transformed = cameras.iter().map(|c| transform.apply_camera(c)).collect();
    Ok((transform, transformed))
}

/// Back-projects a continuous pixel coordinate through the camera, using the
/// pixel-center convention (`u + 0.5`, `v + 0.5`).
pub fn generate_ray<T: Real>(camera: &Camera<T>, u: T, v: T) -> Result<Ray<T>> {
    let (w, h) = (
        T::from_u32(camera.width).unwrap(),
        T::from_u32(camera.height).unwrap(),
    );
    if !(u >= T::zero() && u < w && v >= T::zero() && v < h) {
        return Err(Error::invalid(format!(
            "pixel ({u}, {v}) outside image {}x{}",
            camera.width, camera.height
        )));
    }
    let half = T::lit(0.5);
    Ok(sensor_ray(camera, u + half, v + half))
}

/// Ray through a continuous sensor coordinate in `[0, width] x [0, height]`
/// (no pixel-center shift); sub-pixel sampling uses this directly.
pub fn sensor_ray<T: Real>(camera: &Camera<T>, sx: T, sy: T) -> Ray<T> {
    let dir_cam = Vec3::new(
        (sx - camera.cx) / camera.fx,
        (sy - camera.cy) / camera.fy,
        T::one(),
    );
    let direction = mat3_mul_vec(&camera.rotation, dir_cam).normalized();
    Ray {
        origin: camera.translation,
        direction,
    }
}

/// Intersects a ray with the sphere of the given radius centered at the
/// origin. Returns `(t_near, t_far)` clamped to `t >= 0`, or `None` when the
/// ray misses or the sphere lies entirely behind the origin.
pub fn ray_sphere_bounds<T: Real>(ray: &Ray<T>, radius: T) -> Option<(T, T)> {
    let b = ray.origin.dot(ray.direction);
    let c = ray.origin.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < T::zero() {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    let t_far = -b + sqrt_disc;
    if t_far < T::zero() {
        return None;
    }
    let t_near = (-b - sqrt_disc).max(T::zero());
    Some((t_near, t_far))
}
