//! Synthetic datasets rendered through the image formation model.
//!
//! Scenes are height fields: a grid of square cells in the world `XY` plane,
//! each a solid column occupying `Z >= h`. Cameras sit in front of the field
//! (smaller `Z`) and look toward `+Z`. Every cell carries an 8-bit albedo,
//! which is the ground-truth unattenuated color `J`.
//!
//! Scene files are TOML:
//!
//! ```toml
//! preset = "corridor"      # corridor | two_plane | flat_chart
//! seed = 7                 # optional overrides below
//! noise_sigma = 0.01
//! views = 20
//!
//! [params]
//! beta = [0.5, 0.3, 0.15]
//! veil = [0.1, 0.15, 0.25]
//! gamma = [0.6, 0.4, 0.2]
//! mode = "full"
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Intrinsics, PixelHomogeneous};
use crate::image::{quantize_unit, DepthMap, Image8, PosedImage};
use crate::ingest::{self, create_dir};
use crate::metrics::{write_charts, ColorChart, Patch};
use crate::pairing::PixelPair;
use crate::report::params_to_text;
use crate::uifm::UifmParams;

pub const TRUTH_DIR: &str = "truth";
pub const PARAMS_FILE: &str = "params.txt";
pub const CHARTS_FILE: &str = "charts.txt";
pub const SCENE_FILE: &str = "scene.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub cols: usize,
    pub rows: usize,
    /// World `(x, y)` of the corner of cell `(0, 0)`.
    pub origin: [f64; 2],
    pub cell: f64,
    pub heights: Vec<f64>,
    pub albedo: Vec<[u8; 3]>,
}

impl HeightField {
    /// Samples `height(x, y)` and `albedo(x, y)` at cell centres.
    pub fn from_fn(
        origin: [f64; 2],
        extent: [f64; 2],
        cell: f64,
        height: impl Fn(f64, f64) -> f64,
        albedo: impl Fn(f64, f64) -> [f64; 3],
    ) -> Self {
        let cols = (extent[0] / cell).round() as usize;
        let rows = (extent[1] / cell).round() as usize;
        let mut heights = Vec::with_capacity(cols * rows);
        let mut colors = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                let x = origin[0] + (c as f64 + 0.5) * cell;
                let y = origin[1] + (r as f64 + 0.5) * cell;
                heights.push(height(x, y));
                colors.push(albedo(x, y).map(quantize_unit));
            }
        }
        Self {
            cols,
            rows,
            origin,
            cell,
            heights,
            albedo: colors,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cols == 0 || self.rows == 0 || !(self.cell > 0.0) {
            return Err(Error::InvalidArgument("height field is empty".into()));
        }
        if self.heights.len() != self.cols * self.rows || self.albedo.len() != self.heights.len() {
            return Err(Error::InvalidArgument("height field arrays do not match its size".into()));
        }
        if self.heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidArgument("non-finite height".into()));
        }
        Ok(())
    }

    /// First intersection of `o + t d` (`t >= 0`) with the field: the ray
    /// parameter and the cell index hit.
    pub fn cast(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, usize)> {
        let lo = [self.origin[0], self.origin[1]];
        let hi = [lo[0] + self.cols as f64 * self.cell, lo[1] + self.rows as f64 * self.cell];
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for a in 0..2 {
            if d[a] == 0.0 {
                if o[a] < lo[a] || o[a] >= hi[a] {
                    return None;
                }
            } else {
                let (ta, tb) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        if t0 >= t1 {
            return None;
        }
        let start = o + d * t0;
        let cell_of = |v: f64, l: f64, n: usize| (((v - l) / self.cell).floor().max(0.0) as usize).min(n - 1);
        let mut ij = [cell_of(start.x, lo[0], self.cols), cell_of(start.y, lo[1], self.rows)];
        let n = [self.cols, self.rows];
        let mut step = [0i64; 2];
        let mut t_next = [f64::INFINITY; 2];
        let mut t_delta = [f64::INFINITY; 2];
        for a in 0..2 {
            if d[a] > 0.0 {
                step[a] = 1;
                t_next[a] = (lo[a] + (ij[a] + 1) as f64 * self.cell - o[a]) / d[a];
                t_delta[a] = self.cell / d[a];
            } else if d[a] < 0.0 {
                step[a] = -1;
                t_next[a] = (lo[a] + ij[a] as f64 * self.cell - o[a]) / d[a];
                t_delta[a] = -self.cell / d[a];
            }
        }
        let mut t_enter = t0;
        loop {
            let idx = ij[1] * self.cols + ij[0];
            let h = self.heights[idx];
            let t_exit = t_next[0].min(t_next[1]).min(t1);
            if o.z + t_enter * d.z >= h {
                // side face, or the ray starts inside the column
                return Some((t_enter, idx));
            }
            if d.z > 0.0 {
                let t_top = (h - o.z) / d.z;
                if t_top <= t_exit {
                    return Some((t_top, idx));
                }
            }
            if t_exit >= t1 {
                return None;
            }
            let a = if t_next[0] <= t_next[1] { 0 } else { 1 };
            let next = ij[a] as i64 + step[a];
            if next < 0 || next >= n[a] as i64 {
                return None;
            }
            ij[a] = next as usize;
            t_enter = t_next[a];
            t_next[a] += t_delta[a];
        }
    }
}

/// Everything needed to render a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub field: HeightField,
    pub trajectory: Vec<CameraPose>,
    /// One camera per pose.
    pub intrinsics: Vec<Intrinsics>,
    pub params: UifmParams,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Color charts mounted on the field, as world rectangles.
    pub charts: Vec<WorldChart>,
}

/// Twelve colored rectangles lying on the plane `Z = z`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldChart {
    pub id: String,
    pub z: f64,
    /// `(x0, y0, x1, y1)` and the expected color.
    pub patches: Vec<([f64; 4], [f64; 3])>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        if self.trajectory.is_empty() {
            return Err(Error::InvalidArgument("scene has no camera poses".into()));
        }
        if self.intrinsics.len() != self.trajectory.len() {
            return Err(Error::InvalidArgument(format!(
                "{} cameras for {} poses",
                self.intrinsics.len(),
                self.trajectory.len()
            )));
        }
        for k in &self.intrinsics {
            k.validate()?;
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !self.params.is_finite() {
            return Err(Error::InvalidArgument("non-finite model parameters".into()));
        }
        Ok(())
    }

    pub fn view_name(&self, index: usize) -> String {
        format!("frame_{:04}", index + 1)
    }

    pub fn view_id(index: usize) -> u32 {
        index as u32 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub view: PosedImage,
    /// Unattenuated albedo, quantized like the observation.
    pub truth: Image8,
    /// Euclidean camera-to-surface distance; NaN where nothing was hit.
    pub range: Vec<f64>,
}

impl RenderedView {
    pub fn sees_nothing(&self) -> bool {
        self.view.depth.valid_count() == 0
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the noise stream of one pixel of one view.
pub fn pixel_seed(seed: u64, view: usize, pixel: usize) -> u64 {
    mix64(mix64(mix64(seed) ^ view as u64) ^ pixel as u64)
}

pub fn render_view(scene: &SceneSpec, index: usize) -> Result<RenderedView> {
    scene.validate()?;
    let pose = *scene
        .trajectory
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("pose index {index} out of range")))?;
    let k = scene.intrinsics[index];
    let (w, h) = (k.width as usize, k.height as usize);
    let to_world = pose.camera_to_world();
    let origin = pose.center();
    let noise = (scene.noise_sigma > 0.0).then(|| Normal::new(0.0, scene.noise_sigma).unwrap());

    let pixels: Vec<([u8; 3], [u8; 3], f32, f64)> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let x = PixelHomogeneous::center_of((p % w) as u32, (p / w) as u32);
            let ray_cam = k.ray(x.u, x.v);
            let dir = to_world.rotation * ray_cam;
            let Some((t, cell)) = scene.field.cast(&origin, &dir) else {
                return ([0; 3], [0; 3], f32::NAN, f64::NAN);
            };
            let range = t * ray_cam.norm();
            let albedo = scene.field.albedo[cell];
            let mut rng = noise.map(|_| ChaCha8Rng::seed_from_u64(pixel_seed(scene.seed, index, p)));
            let mut obs = [0u8; 3];
            for c in 0..3 {
                let j = albedo[c] as f64 / 255.0;
                let mut v = scene.params.channel(c).forward(j, range);
                if let (Some(n), Some(rng)) = (&noise, rng.as_mut()) {
                    v += n.sample(rng);
                }
                obs[c] = quantize_unit(v);
            }
            (obs, albedo, t as f32, range)
        })
        .collect();

    let mut image = Vec::with_capacity(3 * w * h);
    let mut truth = Vec::with_capacity(3 * w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut range = Vec::with_capacity(w * h);
    for (o, a, d, r) in pixels {
        image.extend_from_slice(&o);
        truth.extend_from_slice(&a);
        depth.push(d);
        range.push(r);
    }
    let view = PosedImage::new(
        SceneSpec::view_id(index),
        scene.view_name(index),
        Image8::new(k.width, k.height, image)?,
        pose,
        k,
        DepthMap::new(k.width, k.height, depth)?,
    )?;
    let out = RenderedView {
        view,
        truth: Image8::new(k.width, k.height, truth)?,
        range,
    };
    if out.sees_nothing() {
        log::warn!("view {} sees none of the scene", out.view.name);
    }
    Ok(out)
}

pub fn render_all(scene: &SceneSpec) -> Result<Vec<RenderedView>> {
    (0..scene.trajectory.len()).map(|i| render_view(scene, i)).collect()
}

/// Pixel rectangles of each world chart as seen by `view`. Only patches
/// whose inner rectangle (inset by `margin` meters) is entirely visible and
/// covers at least one pixel centre are kept; charts losing a patch are
/// dropped.
pub fn project_charts(scene: &SceneSpec, view: &PosedImage, margin: f64) -> Vec<ColorChart> {
    let k = &view.intrinsics;
    let to_cam = view.pose.world_to_camera();
    let mut out = Vec::new();
    'chart: for chart in &scene.charts {
        let mut patches = Vec::new();
        for (rect, expected) in &chart.patches {
            let mut umin = f64::INFINITY;
            let mut umax = f64::NEG_INFINITY;
            let mut vmin = f64::INFINITY;
            let mut vmax = f64::NEG_INFINITY;
            for (x, y) in [
                (rect[0] + margin, rect[1] + margin),
                (rect[2] - margin, rect[1] + margin),
                (rect[0] + margin, rect[3] - margin),
                (rect[2] - margin, rect[3] - margin),
            ] {
                let Some(px) = k.project(&to_cam.apply(&Vector3::new(x, y, chart.z))) else {
                    continue 'chart;
                };
                umin = umin.min(px.u);
                umax = umax.max(px.u);
                vmin = vmin.min(px.v);
                vmax = vmax.max(px.v);
            }
            // pixels whose centres fall inside the projected rectangle
            let c0 = (umin - 0.5).ceil().max(0.0);
            let c1 = (umax - 0.5).floor().min(k.width as f64 - 1.0);
            let r0 = (vmin - 0.5).ceil().max(0.0);
            let r1 = (vmax - 0.5).floor().min(k.height as f64 - 1.0);
            if c1 < c0 || r1 < r0 || umin < 0.0 || vmin < 0.0 || umax > k.width as f64 || vmax > k.height as f64 {
                continue 'chart;
            }
            patches.push(Patch {
                x: c0 as u32,
                y: r0 as u32,
                w: (c1 - c0) as u32 + 1,
                h: (r1 - r0) as u32 + 1,
                expected: *expected,
            });
        }
        out.push(ColorChart {
            image: view.name.clone(),
            chart_id: chart.id.clone(),
            patches,
        });
    }
    out
}

/// Writes the dataset layout plus ground truth: `truth/NAME.png`,
/// `truth/params.txt`, `charts.txt` when the scene has charts, and the
/// scene file echo when given.
pub fn export(scene: &SceneSpec, out_root: &Path, scene_file: Option<&SceneFile>) -> Result<Vec<RenderedView>> {
    let views = render_all(scene)?;
    let images: Vec<PosedImage> = views.iter().map(|v| v.view.clone()).collect();
    ingest::write_dataset(out_root, &images)?;
    let truth_dir = out_root.join(TRUTH_DIR);
    create_dir(&truth_dir)?;
    for v in &views {
        ingest::save_png(&truth_dir.join(format!("{}.png", v.view.name)), &v.truth)?;
    }
    let params_path = truth_dir.join(PARAMS_FILE);
    std::fs::write(&params_path, params_to_text(&scene.params)).map_err(|e| Error::io(&params_path, e))?;
    if !scene.charts.is_empty() {
        let charts: Vec<ColorChart> = views
            .iter()
            .flat_map(|v| project_charts(scene, &v.view, 0.02))
            .collect();
        write_charts(&out_root.join(CHARTS_FILE), &charts)?;
    }
    if let Some(file) = scene_file {
        let path = out_root.join(SCENE_FILE);
        std::fs::write(&path, file.to_toml()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(views)
}

/// Ground-truth parameters shared by the presets.
pub fn preset_params() -> UifmParams {
    UifmParams::new([0.5, 0.3, 0.15], [0.10, 0.15, 0.25], [0.6, 0.4, 0.2])
}

pub const PRESETS: [&str; 3] = ["corridor", "two_plane", "flat_chart"];

/// Camera dollying from 1 m to 8 m straight back from a textured wall with
/// mild relief, zooming so that every view frames the same 1.07 x 0.8 m
/// patch of wall. Range 1 to 8 m.
pub fn corridor(views: usize, seed: u64, noise_sigma: f64, params: UifmParams) -> SceneSpec {
    let field = HeightField::from_fn(
        [-0.7, -0.55],
        [1.4, 1.1],
        0.005,
        |x, y| 0.03 * (2.0 * PI * x / 0.9).sin() * (2.0 * PI * y / 0.7).cos(),
        |x, y| {
            let mut out = [0.0; 3];
            for (c, o) in out.iter_mut().enumerate() {
                let ph = c as f64 * 2.1;
                *o = 0.5
                    + 0.3 * (2.0 * PI * x / 0.8 + ph).sin() * (2.0 * PI * y / 0.6 + 0.5 * ph).cos()
                    + 0.1 * (2.0 * PI * (x + y) / 0.25 + ph).sin();
            }
            out
        },
    );
    let trajectory = dolly(views, 1.0, 8.0, 0.0);
    let intrinsics = trajectory
        .iter()
        .map(|p| {
            let f = 150.0 * -p.center().z;
            Intrinsics::new(f, f, 80.0, 60.0, 160, 120).unwrap()
        })
        .collect();
    SceneSpec {
        name: "corridor".into(),
        field,
        trajectory,
        intrinsics,
        params,
        noise_sigma,
        seed,
        charts: Vec::new(),
    }
}

fn dolly(views: usize, near: f64, far: f64, wall_z: f64) -> Vec<CameraPose> {
    (0..views)
        .map(|i| {
            let f = if views > 1 { i as f64 / (views - 1) as f64 } else { 0.0 };
            CameraPose::looking_along_z(Vector3::new(0.0, 0.0, wall_z - (near + f * (far - near))))
        })
        .collect()
}

/// Analytic description of the two-plane scene: a far wall at `Z = far_z`
/// and a block whose front face is at `Z = near_z` over `x0 <= X < x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPlane {
    pub far_z: f64,
    pub near_z: f64,
    pub x0: f64,
    pub x1: f64,
}

impl TwoPlane {
    pub const SCENE: TwoPlane = TwoPlane {
        far_z: 0.0,
        near_z: -2.0,
        x0: -0.6,
        x1: 0.6,
    };

    /// Surface point seen along the pixel-centre ray and whether it lies on
    /// the block. Side faces are never visible from cameras whose centre
    /// lies over the block, which the preset guarantees.
    pub fn surface(&self, view: &PosedImage, col: u32, row: u32) -> (Vector3<f64>, bool) {
        let x = PixelHomogeneous::center_of(col, row);
        let o = view.pose.center();
        let d = view.pose.camera_to_world().rotation * view.intrinsics.ray(x.u, x.v);
        let near = o + d * ((self.near_z - o.z) / d.z);
        if near.x >= self.x0 && near.x < self.x1 {
            (near, true)
        } else {
            (o + d * ((self.far_z - o.z) / d.z), false)
        }
    }

    /// Exact set of mutually visible pixel pairs between two views.
    pub fn visible_pairs(&self, a: &PosedImage, b: &PosedImage) -> Vec<PixelPair> {
        let to_b = b.pose.world_to_camera();
        let mut out = Vec::new();
        for row in 0..a.height() {
            for col in 0..a.width() {
                let (p, on_block) = self.surface(a, col, row);
                let Some(q) = b.intrinsics.project(&to_b.apply(&p)) else { continue };
                if !b.intrinsics.contains(&q) {
                    continue;
                }
                let (qc, qr) = q.cell();
                let (pb, on_block_b) = self.surface(b, qc as u32, qr as u32);
                if on_block != on_block_b {
                    continue;
                }
                // nearest-cell round trip from b's pixel centre back to a
                let to_a = a.pose.world_to_camera();
                let Some(back) = a.intrinsics.project(&to_a.apply(&pb)) else { continue };
                if back.cell() != (col as i64, row as i64) {
                    continue;
                }
                out.push(PixelPair {
                    target: row * a.width() + col,
                    other: qr as u32 * b.width() + qc as u32,
                });
            }
        }
        out
    }
}

/// Two cameras 0.4 m apart facing a wall 4 m away with a block 2 m in front
/// of it. Block pixels shift by 20 columns between the views and wall
/// pixels by 10.
pub fn two_plane(seed: u64, noise_sigma: f64, params: UifmParams) -> SceneSpec {
    let s = TwoPlane::SCENE;
    let field = HeightField::from_fn(
        [-2.0, -1.5],
        [4.0, 3.0],
        0.05,
        move |x, _| if x >= s.x0 && x < s.x1 { s.near_z } else { s.far_z },
        |x, y| {
            let checker = ((x / 0.2).floor() + (y / 0.2).floor()).rem_euclid(2.0);
            [0.3 + 0.4 * checker, 0.6 - 0.2 * checker, 0.5]
        },
    );
    SceneSpec {
        name: "two_plane".into(),
        field,
        trajectory: vec![
            CameraPose::looking_along_z(Vector3::new(-0.2, 0.0, -4.0)),
            CameraPose::looking_along_z(Vector3::new(0.2, 0.0, -4.0)),
        ],
        intrinsics: vec![Intrinsics::new(100.0, 100.0, 40.0, 30.0, 80, 60).unwrap(); 2],
        params,
        noise_sigma,
        seed,
        charts: Vec::new(),
    }
}

/// Colors of the twelve chart patches, row-major.
pub const CHART_COLORS: [[f64; 3]; 12] = [
    [0.80, 0.15, 0.15],
    [0.15, 0.65, 0.20],
    [0.15, 0.25, 0.80],
    [0.85, 0.80, 0.15],
    [0.75, 0.20, 0.70],
    [0.15, 0.70, 0.75],
    [0.90, 0.50, 0.10],
    [0.45, 0.20, 0.65],
    [0.55, 0.75, 0.25],
    [0.85, 0.55, 0.60],
    [0.35, 0.45, 0.15],
    [0.20, 0.35, 0.50],
];

/// A twelve-patch chart on a flat gray wall, seen from 1 m to 6 m.
pub fn flat_chart(views: usize, seed: u64, noise_sigma: f64, params: UifmParams) -> SceneSpec {
    let (size, gap) = (0.18, 0.04);
    let width = 4.0 * size + 3.0 * gap;
    let height = 3.0 * size + 2.0 * gap;
    let mut patches = Vec::new();
    for (p, color) in CHART_COLORS.iter().enumerate() {
        let x0 = -width / 2.0 + (p % 4) as f64 * (size + gap);
        let y0 = -height / 2.0 + (p / 4) as f64 * (size + gap);
        // expected color is the stored 8-bit albedo
        let expected = color.map(|v| quantize_unit(v) as f64 / 255.0);
        patches.push(([x0, y0, x0 + size, y0 + size], expected));
    }
    let lookup = patches.clone();
    let field = HeightField::from_fn(
        [-2.5, -2.0],
        [5.0, 4.0],
        0.01,
        |_, _| 0.0,
        move |x, y| {
            for (r, e) in &lookup {
                if x >= r[0] && x < r[2] && y >= r[1] && y < r[3] {
                    return *e;
                }
            }
            let t = 0.05 * (2.0 * PI * x / 0.7).sin() * (2.0 * PI * y / 0.9).cos();
            [0.5 + t; 3]
        },
    );
    SceneSpec {
        name: "flat_chart".into(),
        field,
        trajectory: dolly(views, 1.0, 6.0, 0.0),
        intrinsics: vec![Intrinsics::new(160.0, 160.0, 80.0, 60.0, 160, 120).unwrap(); views],
        params,
        noise_sigma,
        seed,
        charts: vec![WorldChart {
            id: "chart".into(),
            z: 0.0,
            patches,
        }],
    }
}

/// Contents of a scene file: a preset plus optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub preset: String,
    pub seed: Option<u64>,
    pub noise_sigma: Option<f64>,
    pub views: Option<usize>,
    pub params: Option<UifmParams>,
}

impl SceneFile {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: name.into(),
            seed: None,
            noise_sigma: None,
            views: None,
            params: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("scene file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene file serializes")
    }

    pub fn build(&self) -> Result<SceneSpec> {
        let seed = self.seed.unwrap_or(7);
        let sigma = self.noise_sigma.unwrap_or(0.01);
        let params = self.params.unwrap_or_else(preset_params);
        let scene = match self.preset.as_str() {
            "corridor" => corridor(self.views.unwrap_or(20), seed, sigma, params),
            "two_plane" => {
                if self.views.is_some_and(|v| v != 2) {
                    return Err(Error::InvalidArgument("two_plane has exactly 2 views".into()));
                }
                two_plane(seed, sigma, params)
            }
            "flat_chart" => flat_chart(self.views.unwrap_or(12), seed, sigma, params),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        scene.validate()?;
        Ok(scene)
    }
}
