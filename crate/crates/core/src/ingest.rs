//! Dataset loading and writing.
//!
//! On-disk layout under a dataset root:
//!
//! ```text
//! cameras.txt        CAMERA_ID PINHOLE WIDTH HEIGHT fx fy cx cy
//! images.txt         IMAGE_ID qw qx qy qz tx ty tz CAMERA_ID NAME
//! images/NAME.png    8-bit RGB
//! depths/NAME.pfm    grayscale PFM, axial depth in meters
//! ```
//!
//! Lines starting with `#` are comments and fields are whitespace separated.
//! Poses in `images.txt` are world-to-camera; transfers between views invert
//! them on the fly (see [`crate::geometry::CameraPose::camera_to_world`]).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Intrinsics};
use crate::image::{Image8, PosedImage};
use crate::pfm;

pub const CAMERAS_FILE: &str = "cameras.txt";
pub const IMAGES_FILE: &str = "images.txt";
pub const IMAGES_DIR: &str = "images";
pub const DEPTHS_DIR: &str = "depths";

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

/// Non-comment, non-empty lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        (!line.is_empty() && !line.starts_with('#')).then(|| (i + 1, line.split_whitespace().collect()))
    })
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, fields: &[&str], i: usize, what: &str) -> Result<T> {
    let raw = fields
        .get(i)
        .ok_or_else(|| Error::parse(path, line, format!("missing field {what}")))?;
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("bad {what} '{raw}'")))
}

pub fn read_cameras(path: &Path) -> Result<HashMap<u32, Intrinsics>> {
    let text = read_text(path)?;
    let mut cameras = HashMap::new();
    for (line, f) in records(&text) {
        let id: u32 = field(path, line, &f, 0, "CAMERA_ID")?;
        if f.get(1) != Some(&"PINHOLE") {
            return Err(Error::parse(path, line, "only the PINHOLE camera model is supported"));
        }
        if f.len() != 8 {
            return Err(Error::parse(path, line, format!("expected 8 fields, found {}", f.len())));
        }
        let k = Intrinsics::new(
            field(path, line, &f, 4, "fx")?,
            field(path, line, &f, 5, "fy")?,
            field(path, line, &f, 6, "cx")?,
            field(path, line, &f, 7, "cy")?,
            field(path, line, &f, 2, "WIDTH")?,
            field(path, line, &f, 3, "HEIGHT")?,
        )
        .map_err(|e| Error::parse(path, line, e.to_string()))?;
        if cameras.insert(id, k).is_some() {
            return Err(Error::parse(path, line, format!("duplicate camera id {id}")));
        }
    }
    Ok(cameras)
}

/// One record of `images.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: u32,
    pub pose: CameraPose,
    pub camera_id: u32,
    pub name: String,
}

pub fn read_image_records(path: &Path) -> Result<Vec<ImageRecord>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (line, f) in records(&text) {
        if f.len() != 10 {
            return Err(Error::parse(path, line, format!("expected 10 fields, found {}", f.len())));
        }
        let mut q = [0.0; 4];
        for (k, name) in ["qw", "qx", "qy", "qz"].iter().enumerate() {
            q[k] = field(path, line, &f, 1 + k, name)?;
        }
        let mut t = [0.0; 3];
        for (k, name) in ["tx", "ty", "tz"].iter().enumerate() {
            t[k] = field(path, line, &f, 5 + k, name)?;
        }
        let pose = CameraPose::from_wxyz(q, t).map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(ImageRecord {
            id: field(path, line, &f, 0, "IMAGE_ID")?,
            pose,
            camera_id: field(path, line, &f, 8, "CAMERA_ID")?,
            name: f[9].to_string(),
        });
    }
    Ok(out)
}

pub fn load_png(path: &Path) -> Result<Image8> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let rgb = match img {
        image::DynamicImage::ImageRgb8(rgb) => rgb,
        image::DynamicImage::ImageLuma8(_) | image::DynamicImage::ImageRgba8(_) | image::DynamicImage::ImageLumaA8(_) => {
            img.to_rgb8()
        }
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                msg: format!("expected an 8-bit image, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = rgb.dimensions();
    Image8::new(w, h, rgb.into_raw())
}

pub fn save_png(path: &Path, img: &Image8) -> Result<()> {
    image::save_buffer(path, &img.data, img.width, img.height, image::ExtendedColorType::Rgb8).map_err(|e| {
        match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        }
    })
}

pub fn image_path(root: &Path, name: &str) -> PathBuf {
    root.join(IMAGES_DIR).join(format!("{name}.png"))
}

pub fn depth_path(root: &Path, name: &str) -> PathBuf {
    root.join(DEPTHS_DIR).join(format!("{name}.pfm"))
}

/// Loads every registered image under `root`, sorted by id.
pub fn load_dataset(root: &Path) -> Result<Vec<PosedImage>> {
    let cameras = read_cameras(&root.join(CAMERAS_FILE))?;
    let mut records = read_image_records(&root.join(IMAGES_FILE))?;
    records.sort_by_key(|r| r.id);
    if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::parse(root.join(IMAGES_FILE), 0, format!("duplicate image id {}", w[0].id)));
    }
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let intrinsics = *cameras.get(&rec.camera_id).ok_or_else(|| {
            Error::parse(
                root.join(IMAGES_FILE),
                0,
                format!("image {} references unknown camera {}", rec.id, rec.camera_id),
            )
        })?;
        let image = load_png(&image_path(root, &rec.name))?;
        let depth = pfm::load(&depth_path(root, &rec.name))?;
        out.push(PosedImage::new(rec.id, rec.name, image, rec.pose, intrinsics, depth)?);
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `images` in the layout read by [`load_dataset`]. Each image gets
/// its own camera record with the same id.
pub fn write_dataset(root: &Path, images: &[PosedImage]) -> Result<()> {
    for img in images {
        img.validate()?;
    }
    create_dir(&root.join(IMAGES_DIR))?;
    create_dir(&root.join(DEPTHS_DIR))?;

    let mut cameras = String::from("# CAMERA_ID PINHOLE WIDTH HEIGHT fx fy cx cy\n");
    let mut records = String::from("# IMAGE_ID qw qx qy qz tx ty tz CAMERA_ID NAME (world-to-camera)\n");
    for img in images {
        let k = &img.intrinsics;
        writeln!(
            cameras,
            "{} PINHOLE {} {} {} {} {} {}",
            img.id, k.width, k.height, k.fx, k.fy, k.cx, k.cy
        )
        .unwrap();
        let [qw, qx, qy, qz] = img.pose.wxyz();
        let t = img.pose.translation;
        writeln!(
            records,
            "{} {qw} {qx} {qy} {qz} {} {} {} {} {}",
            img.id, t.x, t.y, t.z, img.id, img.name
        )
        .unwrap();
        save_png(&image_path(root, &img.name), &img.image)?;
        pfm::save(&depth_path(root, &img.name), &img.depth)?;
    }
    write_text(&root.join(CAMERAS_FILE), &cameras)?;
    write_text(&root.join(IMAGES_FILE), &records)
}
