//! Rigid transforms, pinhole projection and cross-view pixel transfer.
//!
//! Pixel coordinates are continuous with the origin at the top-left corner
//! of the image: integer cell `(i, j)` covers `[i, i+1) x [j, j+1)` and its
//! centre sits at `(i + 0.5, j + 0.5)`. Two coordinates "land on the same
//! pixel" when their `floor` agrees componentwise.
//!
//! Poses are stored world-to-camera, as in the on-disk pose file. The
//! camera-to-world transform needed to lift a back-projected point into the
//! world frame is obtained by inverting the stored pose.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::PosedImage;

/// Rigid transform `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// World-to-camera pose: a point `p_w` maps to `R p_w + t` in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from a `(qw, qx, qy, qz)` quaternion, normalizing it.
    pub fn from_wxyz(q: [f64; 4], translation: [f64; 3]) -> Result<Self> {
        if q.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("non-finite component".into()));
        }
        let raw = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = raw.norm();
        if norm < 1e-12 {
            return Err(Error::InvalidPose("zero quaternion".into()));
        }
        Ok(Self {
            rotation: UnitQuaternion::new_unchecked(raw / norm),
            translation: Vector3::from(translation),
        })
    }

    /// Pose of a camera centred at `center` whose axes are the world axes.
    pub fn looking_along_z(center: Vector3<f64>) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: -center,
        }
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn world_to_camera(&self) -> Transform {
        Transform::new(*self.rotation.to_rotation_matrix().matrix(), self.translation)
    }

    pub fn camera_to_world(&self) -> Transform {
        self.world_to_camera().inverse()
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }
}

/// Pinhole intrinsics. Images are assumed undistorted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be finite and positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("zero image size".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K^-1 x` for a normalized pixel: the viewing ray with unit z.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point; `None` when `z <= 0`.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<PixelHomogeneous> {
        if !(p.z > 0.0) {
            return None;
        }
        Some(PixelHomogeneous::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    #[inline]
    pub fn contains(&self, x: &PixelHomogeneous) -> bool {
        x.u >= 0.0 && x.v >= 0.0 && x.u < self.width as f64 && x.v < self.height as f64
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Homogeneous pixel coordinate. Constructors always return `w == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHomogeneous {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl PixelHomogeneous {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v, w: 1.0 }
    }

    /// Centre of integer cell `(col, row)`.
    pub fn center_of(col: u32, row: u32) -> Self {
        Self::new(col as f64 + 0.5, row as f64 + 0.5)
    }

    pub fn normalized(&self) -> Self {
        Self::new(self.u / self.w, self.v / self.w)
    }

    /// Integer cell containing the coordinate.
    pub fn cell(&self) -> (i64, i64) {
        let n = self.normalized();
        (n.u.floor() as i64, n.v.floor() as i64)
    }
}

/// How the model distance `z` is derived from an axial depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Euclidean distance from the camera centre to the point.
    #[default]
    Range,
    /// Axial depth as stored in the depth map.
    Depth,
}

impl DistanceMode {
    #[inline]
    pub fn distance(self, x: &PixelHomogeneous, depth: f64, k: &Intrinsics) -> f64 {
        match self {
            DistanceMode::Range => (k.ray(x.u, x.v) * depth).norm(),
            DistanceMode::Depth => depth,
        }
    }
}

impl std::str::FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "range" => Ok(DistanceMode::Range),
            "depth" => Ok(DistanceMode::Depth),
            other => Err(Error::InvalidArgument(format!("unknown distance mode '{other}'"))),
        }
    }
}

/// `K^-1 d x`: the camera-frame point seen at pixel `x` with axial depth `d`.
pub fn backproject(x: &PixelHomogeneous, depth: f64, k: &Intrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::Domain(format!("depth must be positive, got {depth}")));
    }
    let x = x.normalized();
    let mut p = k.ray(x.u, x.v) * depth;
    p.z = depth;
    Ok(p)
}

/// Euclidean distance from the camera centre to the point at pixel `x`, depth `d`.
pub fn range_of(x: &PixelHomogeneous, depth: f64, k: &Intrinsics) -> Result<f64> {
    Ok(backproject(x, depth, k)?.norm())
}

/// Result of moving a pixel from one view into another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub pixel: PixelHomogeneous,
    /// The scene point in the destination camera frame.
    pub point: Vector3<f64>,
}

/// Precomputed `dst <- world <- src` chain for repeated transfers between
/// one ordered pair of views.
#[derive(Debug, Clone, Copy)]
pub struct ViewTransfer {
    src_k: Intrinsics,
    dst_k: Intrinsics,
    relative: Transform,
    identity: bool,
}

impl ViewTransfer {
    pub fn new(src: &PosedImage, dst: &PosedImage) -> Self {
        // dst_T_world ∘ world_T_src, where world_T_src inverts the stored
        // world-to-camera pose of the source view.
        let world_from_src = src.pose.camera_to_world();
        let dst_from_world = dst.pose.world_to_camera();
        Self {
            src_k: src.intrinsics,
            dst_k: dst.intrinsics,
            relative: dst_from_world.compose(&world_from_src),
            identity: src.pose == dst.pose && src.intrinsics == dst.intrinsics,
        }
    }

    /// Moves continuous pixel `x` with source depth `depth` into the
    /// destination view. `None` when the point is behind the destination
    /// camera or projects outside its image.
    #[inline]
    pub fn transfer(&self, x: &PixelHomogeneous, depth: f64) -> Option<Transfer> {
        let p_src = self.src_k.ray(x.u, x.v) * depth;
        if self.identity {
            let mut point = p_src;
            point.z = depth;
            return Some(Transfer { pixel: *x, point });
        }
        let point = self.relative.apply(&p_src);
        let pixel = self.dst_k.project(&point)?;
        self.dst_k.contains(&pixel).then_some(Transfer { pixel, point })
    }
}

/// Transfers pixel `x1` of `src` into `dst` using the source depth map.
///
/// Errors when `src` has no depth at the cell containing `x1`.
pub fn transfer_pixel(x1: &PixelHomogeneous, src: &PosedImage, dst: &PosedImage) -> Result<Option<Transfer>> {
    let x1 = x1.normalized();
    let depth = src
        .depth_at(&x1)
        .ok_or_else(|| Error::Domain(format!("no depth at ({}, {}) in image {}", x1.u, x1.v, src.id)))?;
    Ok(ViewTransfer::new(src, dst).transfer(&x1, depth))
}

/// Forward transfer of `x1` into `i2`, then back into `i1` using `i2`'s depth
/// at the cell reached. True iff the round trip returns to `x1`'s cell.
pub fn roundtrip_consistent(x1: &PixelHomogeneous, i1: &PosedImage, i2: &PosedImage) -> bool {
    let forward = ViewTransfer::new(i1, i2);
    let backward = ViewTransfer::new(i2, i1);
    roundtrip_cell(x1, i1, i2, &forward, &backward).is_some()
}

/// Shared core of the round-trip check. Returns the cell of `i2` reached
/// by the forward transfer when the round trip is consistent.
#[inline]
pub(crate) fn roundtrip_cell(
    x1: &PixelHomogeneous,
    i1: &PosedImage,
    i2: &PosedImage,
    forward: &ViewTransfer,
    backward: &ViewTransfer,
) -> Option<(u32, u32)> {
    let d1 = i1.depth_at(x1)?;
    let x2 = forward.transfer(x1, d1)?.pixel;
    let d2 = i2.depth_at(&x2)?;
    let x1_back = backward.transfer(&x2, d2)?.pixel;
    if x1_back.cell() != x1.cell() {
        return None;
    }
    let (c, r) = x2.cell();
    Some((c as u32, r as u32))
}
