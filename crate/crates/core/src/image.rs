//! Image containers shared by every module.

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Intrinsics, PixelHomogeneous};

/// 8-bit RGB image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image8 {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Image8 {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::InvalidArgument(format!(
                "expected {} bytes for a {width}x{height} RGB image, got {}",
                width as usize * height as usize * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = std::iter::repeat_n(rgb, width as usize * height as usize).flatten().collect();
        Self { width, height, data }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn rgb(&self, index: usize) -> [u8; 3] {
        let o = index * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    /// Intensity in `[0, 1]` of pixel `index`.
    #[inline]
    pub fn intensity(&self, index: usize) -> [f64; 3] {
        self.rgb(index).map(|v| v as f64 / 255.0)
    }

    pub fn to_float(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: (0..self.pixel_count()).map(|i| self.intensity(i)).collect(),
        }
    }
}

/// Floating-point RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![rgb; width as usize * height as usize],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn at(&self, col: u32, row: u32) -> [f64; 3] {
        self.data[row as usize * self.width as usize + col as usize]
    }

    /// Quantizes `clamp(v, 0, 1)` to 8 bits; NaN maps to 0.
    pub fn quantize(&self) -> Image8 {
        let data = self.data.iter().flat_map(|px| px.map(quantize_unit)).collect();
        Image8 {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// `round(clamp(v, 0, 1) * 255)`, rounding half away from zero; NaN maps to 0.
#[inline]
pub fn quantize_unit(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Axial depth in meters per pixel. Non-finite or non-positive values mean
/// "no depth".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::InvalidArgument(format!(
                "expected {} depth values for {width}x{height}, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![f32::NAN; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, index: usize) -> Option<f64> {
        let d = self.values[index];
        (d.is_finite() && d > 0.0).then_some(d as f64)
    }

    #[inline]
    pub fn has_depth(&self, index: usize) -> bool {
        self.get(index).is_some()
    }

    pub fn valid_count(&self) -> usize {
        (0..self.values.len()).filter(|&i| self.has_depth(i)).count()
    }
}

/// An image registered in the reconstruction, with everything needed to
/// move its pixels into other views.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedImage {
    pub id: u32,
    pub name: String,
    pub image: Image8,
    pub pose: CameraPose,
    pub intrinsics: Intrinsics,
    pub depth: DepthMap,
}

impl PosedImage {
    pub fn new(
        id: u32,
        name: impl Into<String>,
        image: Image8,
        pose: CameraPose,
        intrinsics: Intrinsics,
        depth: DepthMap,
    ) -> Result<Self> {
        let p = Self {
            id,
            name: name.into(),
            image,
            pose,
            intrinsics,
            depth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let (w, h) = (self.image.width, self.image.height);
        if (self.depth.width, self.depth.height) != (w, h) {
            return Err(Error::Dimension {
                id: self.id,
                msg: format!(
                    "depth map is {}x{} but image is {w}x{h}",
                    self.depth.width, self.depth.height
                ),
            });
        }
        if (self.intrinsics.width, self.intrinsics.height) != (w, h) {
            return Err(Error::Dimension {
                id: self.id,
                msg: format!(
                    "camera is {}x{} but image is {w}x{h}",
                    self.intrinsics.width, self.intrinsics.height
                ),
            });
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.image.width
    }

    pub fn height(&self) -> u32 {
        self.image.height
    }

    pub fn pixel_count(&self) -> usize {
        self.image.pixel_count()
    }

    /// Linear index of the cell containing `x`, if inside the image.
    #[inline]
    pub fn cell_index(&self, x: &PixelHomogeneous) -> Option<usize> {
        if !self.intrinsics.contains(x) {
            return None;
        }
        let (c, r) = x.cell();
        Some(r as usize * self.width() as usize + c as usize)
    }

    /// Depth at the cell containing `x` (nearest-cell lookup).
    #[inline]
    pub fn depth_at(&self, x: &PixelHomogeneous) -> Option<f64> {
        self.cell_index(x).and_then(|i| self.depth.get(i))
    }

    /// Mask of pixels carrying depth.
    pub fn depth_mask(&self) -> Vec<bool> {
        (0..self.pixel_count()).map(|i| self.depth.has_depth(i)).collect()
    }
}
