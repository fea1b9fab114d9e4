//! Full-reference image metrics and color-chart errors.
//!
//! All metrics take float images with data range `[0, 1]` and an optional
//! mask; unmasked pixels never contribute.
//!
//! Chart file format (`charts.txt`), one chart per line:
//!
//! ```text
//! IMAGE_NAME CHART_ID  x y w h Er Eg Eb  x y w h Er Eg Eb  ... (12 patches)
//! ```
//!
//! `x y w h` is a pixel rectangle and `E` the expected RGB in `[0, 1]`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::RgbImage;

pub const CHART_PATCHES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub expected: [f64; 3],
}

impl Patch {
    pub fn pixels(&self, width: u32) -> impl Iterator<Item = usize> + '_ {
        (self.y..self.y + self.h)
            .flat_map(move |r| (self.x..self.x + self.w).map(move |c| (r * width + c) as usize))
    }

    fn overlaps(&self, o: &Patch) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorChart {
    pub image: String,
    pub chart_id: String,
    pub patches: Vec<Patch>,
}

impl ColorChart {
    pub fn validate(&self) -> Result<()> {
        if self.patches.len() != CHART_PATCHES {
            return Err(Error::InvalidArgument(format!(
                "chart {} has {} patches, expected {CHART_PATCHES}",
                self.chart_id,
                self.patches.len()
            )));
        }
        for (i, a) in self.patches.iter().enumerate() {
            if a.w == 0 || a.h == 0 {
                return Err(Error::InvalidArgument(format!("chart {}: patch {i} is empty", self.chart_id)));
            }
            if self.patches[i + 1..].iter().any(|b| a.overlaps(b)) {
                return Err(Error::InvalidArgument(format!("chart {}: patch {i} overlaps another", self.chart_id)));
            }
        }
        Ok(())
    }

    fn check_inside(&self, width: u32, height: u32) -> Result<()> {
        for p in &self.patches {
            if p.x + p.w > width || p.y + p.h > height {
                return Err(Error::InvalidArgument(format!(
                    "chart {} on {} extends outside the {width}x{height} image",
                    self.chart_id, self.image
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_charts(text: &str, origin: &Path) -> Result<Vec<ColorChart>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Error::parse(origin, i + 1, msg);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 + 7 * CHART_PATCHES {
            return Err(bad(&format!("expected {} fields, found {}", 2 + 7 * CHART_PATCHES, fields.len())));
        }
        let mut patches = Vec::with_capacity(CHART_PATCHES);
        for chunk in fields[2..].chunks(7) {
            let int = |s: &str| s.parse::<u32>().map_err(|_| bad(&format!("bad pixel coordinate '{s}'")));
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad color value '{s}'")));
            patches.push(Patch {
                x: int(chunk[0])?,
                y: int(chunk[1])?,
                w: int(chunk[2])?,
                h: int(chunk[3])?,
                expected: [float(chunk[4])?, float(chunk[5])?, float(chunk[6])?],
            });
        }
        let chart = ColorChart {
            image: fields[0].to_string(),
            chart_id: fields[1].to_string(),
            patches,
        };
        chart.validate().map_err(|e| bad(&e.to_string()))?;
        out.push(chart);
    }
    Ok(out)
}

pub fn read_charts(path: &Path) -> Result<Vec<ColorChart>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_charts(&text, path)
}

pub fn charts_to_text(charts: &[ColorChart]) -> String {
    let mut s = String::from("# IMAGE CHART_ID then 12 x (x y w h Er Eg Eb)\n");
    for c in charts {
        write!(s, "{} {}", c.image, c.chart_id).unwrap();
        for p in &c.patches {
            let e = p.expected;
            write!(s, "  {} {} {} {} {} {} {}", p.x, p.y, p.w, p.h, e[0], e[1], e[2]).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn write_charts(path: &Path, charts: &[ColorChart]) -> Result<()> {
    std::fs::write(path, charts_to_text(charts)).map_err(|e| Error::io(path, e))
}

fn check_pair(a: &RgbImage, b: &RgbImage, mask: Option<&[bool]>) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::InvalidArgument(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if let Some(m) = mask {
        if m.len() != a.pixel_count() {
            return Err(Error::InvalidArgument("mask size does not match the image".into()));
        }
    }
    Ok(())
}

#[inline]
fn masked(mask: Option<&[bool]>, i: usize) -> bool {
    mask.is_none_or(|m| m[i])
}

/// Peak signal-to-noise ratio in dB over masked pixels, data range 1.
/// Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &RgbImage, b: &RgbImage, mask: Option<&[bool]>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..a.pixel_count() {
        if !masked(mask, i) {
            continue;
        }
        for c in 0..3 {
            let d = a.data[i][c] - b.data[i][c];
            sum += d * d;
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = sum / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum::<f64>().powi(2);
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gy in &g {
        for gx in &g {
            w.push(gx * gy / total);
        }
    }
    w
}

/// Mean structural similarity over every 11x11 window lying fully inside
/// the mask, averaged over the three channels.
pub fn ssim(a: &RgbImage, b: &RgbImage, mask: Option<&[bool]>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let kernel = gaussian_window();

    // windows fully inside the mask, via a summed-area table of the mask
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for r in 0..h {
        for c in 0..w {
            sat[(r + 1) * (w + 1) + c + 1] = masked(mask, r * w + c) as u32 + sat[r * (w + 1) + c + 1]
                + sat[(r + 1) * (w + 1) + c]
                - sat[r * (w + 1) + c];
        }
    }
    let full = (SSIM_WINDOW * SSIM_WINDOW) as u32;
    let mut total = 0.0;
    let mut windows = 0usize;
    for r0 in 0..=h - SSIM_WINDOW {
        for c0 in 0..=w - SSIM_WINDOW {
            let (r1, c1i) = (r0 + SSIM_WINDOW, c0 + SSIM_WINDOW);
            let inside = sat[r1 * (w + 1) + c1i] + sat[r0 * (w + 1) + c0] - sat[r0 * (w + 1) + c1i] - sat[r1 * (w + 1) + c0];
            if inside != full {
                continue;
            }
            for ch in 0..3 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (k, wk) in kernel.iter().enumerate() {
                    let i = (r0 + k / SSIM_WINDOW) * w + c0 + k % SSIM_WINDOW;
                    let (x, y) = (a.data[i][ch], b.data[i][ch]);
                    ma += wk * x;
                    mb += wk * y;
                    saa += wk * x * x;
                    sbb += wk * y * y;
                    sab += wk * x * y;
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            windows += 1;
        }
    }
    if windows == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(total / (3 * windows) as f64)
}

/// D65 reference white, `Y` normalized to 1.
pub const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

/// sRGB (components in `[0, 1]`) to CIELAB under D65.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    let x = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
    let y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
    let z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
    let delta: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > delta.powi(3) {
            t.cbrt()
        } else {
            t / (3.0 * delta * delta) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / D65_WHITE[0]), f(y / D65_WHITE[1]), f(z / D65_WHITE[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// CIEDE2000 color difference with unit weighting factors.
pub fn ciede2000(lab1: [f64; 3], lab2: [f64; 3]) -> f64 {
    let [l1, a1, b1] = lab1;
    let [l2, a2, b2] = lab2;
    let pow25_7 = 25f64.powi(7);
    let c_bar = ((a1.hypot(b1)) + (a2.hypot(b2))) / 2.0;
    let g = 0.5 * (1.0 - (c_bar.powi(7) / (c_bar.powi(7) + pow25_7)).sqrt());
    let (a1p, a2p) = ((1.0 + g) * a1, (1.0 + g) * a2);
    let (c1p, c2p) = (a1p.hypot(b1), a2p.hypot(b2));
    let hue = |b: f64, a: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            b.atan2(a).to_degrees().rem_euclid(360.0)
        }
    };
    let (h1p, h2p) = (hue(b1, a1p), hue(b2, a2p));

    let dl = l2 - l1;
    let dc = c2p - c1p;
    let dh = if c1p * c2p == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d.abs() <= 180.0 {
            d
        } else if d > 180.0 {
            d - 360.0
        } else {
            d + 360.0
        }
    };
    let dh_big = 2.0 * (c1p * c2p).sqrt() * (dh.to_radians() / 2.0).sin();

    let l_bar = (l1 + l2) / 2.0;
    let cp_bar = (c1p + c2p) / 2.0;
    let hp_bar = if c1p * c2p == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        (h1p + h2p) / 2.0
    } else if h1p + h2p < 360.0 {
        (h1p + h2p + 360.0) / 2.0
    } else {
        (h1p + h2p - 360.0) / 2.0
    };
    let cosd = |d: f64| d.to_radians().cos();
    let t = 1.0 - 0.17 * cosd(hp_bar - 30.0) + 0.24 * cosd(2.0 * hp_bar) + 0.32 * cosd(3.0 * hp_bar + 6.0)
        - 0.20 * cosd(4.0 * hp_bar - 63.0);
    let d_theta = 30.0 * (-((hp_bar - 275.0) / 25.0).powi(2)).exp();
    let rc = 2.0 * (cp_bar.powi(7) / (cp_bar.powi(7) + pow25_7)).sqrt();
    let sl = 1.0 + 0.015 * (l_bar - 50.0).powi(2) / (20.0 + (l_bar - 50.0).powi(2)).sqrt();
    let sc = 1.0 + 0.045 * cp_bar;
    let sh = 1.0 + 0.015 * cp_bar * t;
    let rt = -(2.0 * d_theta).to_radians().sin() * rc;
    let (tl, tc, th) = (dl / sl, dc / sc, dh_big / sh);
    (tl * tl + tc * tc + th * th + rt * tc * th).sqrt()
}

/// Mean CIEDE2000 difference between two sRGB images over masked pixels.
pub fn mean_ciede2000(a: &RgbImage, b: &RgbImage, mask: Option<&[bool]>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..a.pixel_count() {
        if masked(mask, i) {
            sum += ciede2000(srgb_to_lab(a.data[i]), srgb_to_lab(b.data[i]));
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Order of averaging in [`psi_bar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiOrder {
    /// Angle between the mean patch color and the expectation.
    #[default]
    MeanThenAngle,
    /// Mean of the per-pixel angles.
    AngleThenMean,
}

/// Angle in radians between `v` and `e`; `None` when either has zero norm.
fn angle(v: [f64; 3], e: [f64; 3]) -> Option<f64> {
    let nv = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let ne = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    if nv == 0.0 || ne == 0.0 || !nv.is_finite() {
        return None;
    }
    // atan2 of |v x e| and v . e stays accurate near 0 where acos does not
    let cross = [
        v[1] * e[2] - v[2] * e[1],
        v[2] * e[0] - v[0] * e[2],
        v[0] * e[1] - v[1] * e[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let cos = v[0] * e[0] + v[1] * e[1] + v[2] * e[2];
    Some(sin.atan2(cos))
}

/// Mean angular error in degrees between chart patches and their expected
/// colors. Pixels outside `mask` are ignored; a patch with no usable pixel
/// or zero norm scores 90 degrees.
pub fn psi_bar(img: &RgbImage, chart: &ColorChart, mask: Option<&[bool]>, order: PsiOrder) -> Result<f64> {
    chart.validate()?;
    chart.check_inside(img.width, img.height)?;
    let right = std::f64::consts::FRAC_PI_2;
    let mut total = 0.0;
    for (k, patch) in chart.patches.iter().enumerate() {
        let pixels: Vec<usize> = patch.pixels(img.width).filter(|&i| masked(mask, i)).collect();
        let term = match order {
            PsiOrder::MeanThenAngle => {
                let mut mean = [0.0; 3];
                for &i in &pixels {
                    for c in 0..3 {
                        mean[c] += img.data[i][c];
                    }
                }
                let n = pixels.len().max(1) as f64;
                angle(mean.map(|v| v / n), patch.expected)
            }
            PsiOrder::AngleThenMean => {
                let angles: Option<Vec<f64>> = pixels.iter().map(|&i| angle(img.data[i], patch.expected)).collect();
                angles.filter(|a| !a.is_empty()).map(|a| a.iter().sum::<f64>() / a.len() as f64)
            }
        };
        total += term.unwrap_or_else(|| {
            log::warn!("chart {} patch {k}: zero-norm color, scoring 90 degrees", chart.chart_id);
            right
        });
    }
    Ok((total / chart.patches.len() as f64).to_degrees())
}

/// HSV hue in degrees of an RGB triple; `None` for grays.
pub fn hue(rgb: [f64; 3]) -> Option<f64> {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if !(delta > 0.0) {
        return None;
    }
    let h = if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    Some(h.rem_euclid(360.0))
}

/// Hue of the mean color of a patch region; `None` for gray patches.
pub fn hue_of_patch(img: &RgbImage, patch: &Patch) -> Result<Option<f64>> {
    if patch.w == 0 || patch.h == 0 {
        return Err(Error::InvalidArgument("empty patch region".into()));
    }
    if patch.x + patch.w > img.width || patch.y + patch.h > img.height {
        return Err(Error::InvalidArgument("patch extends outside the image".into()));
    }
    let mut mean = [0.0; 3];
    let n = (patch.w * patch.h) as f64;
    for i in patch.pixels(img.width) {
        for c in 0..3 {
            mean[c] += img.data[i][c] / n;
        }
    }
    Ok(hue(mean))
}

/// One line of an evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub image: String,
    pub metric: String,
    pub value: f64,
}

/// Tab-separated table with a header; infinite PSNR is written as `inf`.
pub fn metric_table(rows: &[MetricRow]) -> String {
    let mut s = String::from("method\timage\tmetric\tvalue\n");
    for r in rows {
        writeln!(s, "{}\t{}\t{}\t{}", r.method, r.image, r.metric, r.value).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: u32, h: u32) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        RgbImage::new(w, h, data).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = random_image(1, 16, 16);
        assert_eq!(psnr(&a, &a, None).unwrap(), f64::INFINITY);
        let x = RgbImage::filled(8, 8, [0.25, 0.5, 0.75]);
        let y = RgbImage::filled(8, 8, [0.375, 0.625, 0.875]);
        // difference 1/8 is exact in binary
        assert_abs_diff_eq!(psnr(&x, &y, None).unwrap(), -10.0 * (1.0f64 / 64.0).log10(), epsilon = 1e-12);
        let x = RgbImage::filled(8, 8, [0.5; 3]);
        let y = RgbImage::filled(8, 8, [0.6; 3]);
        assert_abs_diff_eq!(psnr(&x, &y, None).unwrap(), 20.0, epsilon = 1e-9);
        assert!(matches!(psnr(&x, &y, Some(&[false; 64])), Err(Error::EmptyMask)));
    }

    #[test]
    fn psnr_matches_direct_sum_with_mask() {
        let a = random_image(2, 20, 10);
        let b = random_image(3, 20, 10);
        let mask: Vec<bool> = (0..200).map(|i| i % 3 != 0).collect();
        let mut se = 0.0;
        let mut n = 0.0;
        for i in (0..200).filter(|i| i % 3 != 0) {
            for c in 0..3 {
                se += (a.data[i][c] - b.data[i][c]).powi(2);
                n += 1.0;
            }
        }
        let oracle = 10.0 * (n / se).log10();
        assert_abs_diff_eq!(psnr(&a, &b, Some(&mask)).unwrap(), oracle, epsilon = 1e-10);
        assert_eq!(psnr(&a, &b, Some(&mask)).unwrap(), psnr(&b, &a, Some(&mask)).unwrap());
    }

    #[test]
    fn ssim_examples() {
        let a = random_image(4, 24, 20);
        assert_abs_diff_eq!(ssim(&a, &a, None).unwrap(), 1.0, epsilon = 1e-12);
        let zero = RgbImage::filled(16, 16, [0.0; 3]);
        let one = RgbImage::filled(16, 16, [1.0; 3]);
        let c1 = SSIM_K1 * SSIM_K1;
        assert_abs_diff_eq!(ssim(&zero, &one, None).unwrap(), c1 / (1.0 + c1), epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = a.clone();
        for px in &mut b.data {
            for v in px.iter_mut() {
                *v += rng.random_range(-0.005..0.005);
            }
        }
        assert!(ssim(&a, &b, None).unwrap() > 0.99);
        assert_abs_diff_eq!(ssim(&a, &b, None).unwrap(), ssim(&b, &a, None).unwrap(), epsilon = 1e-15);
        assert!(ssim(&RgbImage::filled(10, 30, [0.0; 3]), &RgbImage::filled(10, 30, [0.0; 3]), None).is_err());
    }

    #[test]
    fn ssim_ignores_windows_touching_the_mask() {
        let a = random_image(6, 30, 30);
        let mut b = a.clone();
        let mut mask = vec![true; 900];
        // corrupt the left columns and mask them out
        for r in 0..30 {
            for c in 0..5 {
                b.data[r * 30 + c] = [0.0; 3];
                mask[r * 30 + c] = false;
            }
        }
        assert_abs_diff_eq!(ssim(&a, &b, Some(&mask)).unwrap(), 1.0, epsilon = 1e-12);
        assert!(ssim(&a, &b, None).unwrap() < 1.0);
    }

    #[test]
    fn srgb_white_and_black() {
        let w = srgb_to_lab([1.0; 3]);
        assert_abs_diff_eq!(w[0], 100.0, epsilon = 1e-3);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-2);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-2);
        assert_eq!(srgb_to_lab([0.0; 3]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn ciede2000_basics() {
        let lab = [50.0, 2.6772, -79.7751];
        assert_eq!(ciede2000(lab, lab), 0.0);
        assert_abs_diff_eq!(ciede2000(lab, [50.0, 0.0, -82.7485]), 2.0425, epsilon = 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = [rng.random_range(0.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)];
            let q = [rng.random_range(0.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)];
            assert_abs_diff_eq!(ciede2000(p, q), ciede2000(q, p), epsilon = 1e-10);
        }
    }

    fn exact_chart() -> (RgbImage, ColorChart) {
        let mut img = RgbImage::filled(48, 36, [0.5; 3]);
        let mut patches = Vec::new();
        for p in 0..12u32 {
            let e = [0.1 + 0.07 * p as f64, 0.8 - 0.05 * p as f64, 0.3];
            let patch = Patch {
                x: (p % 4) * 12 + 1,
                y: (p / 4) * 12 + 1,
                w: 8,
                h: 8,
                expected: e,
            };
            for i in patch.pixels(48).collect::<Vec<_>>() {
                img.data[i] = e;
            }
            patches.push(patch);
        }
        (
            img,
            ColorChart {
                image: "a".into(),
                chart_id: "c".into(),
                patches,
            },
        )
    }

    #[test]
    fn psi_bar_examples() {
        let (mut img, mut chart) = exact_chart();
        for order in [PsiOrder::MeanThenAngle, PsiOrder::AngleThenMean] {
            assert_abs_diff_eq!(psi_bar(&img, &chart, None, order).unwrap(), 0.0, epsilon = 1e-12);
        }
        chart.patches[5].expected = [1.0, 0.0, 0.0];
        for i in chart.patches[5].pixels(48).collect::<Vec<_>>() {
            img.data[i] = [1.0, 1.0, 0.0];
        }
        let got = psi_bar(&img, &chart, None, PsiOrder::MeanThenAngle).unwrap();
        assert_abs_diff_eq!(got, 3.75, epsilon = 1e-9);
    }

    #[test]
    fn psi_bar_scale_invariant_and_zero_patch() {
        let (img, chart) = exact_chart();
        let mut noisy = img.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for px in &mut noisy.data {
            for v in px.iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let mut scaled = noisy.clone();
        for px in &mut scaled.data {
            for v in px.iter_mut() {
                *v *= 2.5;
            }
        }
        for order in [PsiOrder::MeanThenAngle, PsiOrder::AngleThenMean] {
            let a = psi_bar(&noisy, &chart, None, order).unwrap();
            let b = psi_bar(&scaled, &chart, None, order).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let mut dark = img.clone();
        for i in chart.patches[0].pixels(48).collect::<Vec<_>>() {
            dark.data[i] = [0.0; 3];
        }
        let got = psi_bar(&dark, &chart, None, PsiOrder::MeanThenAngle).unwrap();
        assert_abs_diff_eq!(got, 90.0 / 12.0, epsilon = 1e-9);
    }

    #[test]
    fn hue_examples() {
        assert_eq!(hue([1.0, 0.0, 0.0]), Some(0.0));
        assert_eq!(hue([0.0, 1.0, 0.0]), Some(120.0));
        assert_eq!(hue([0.5, 0.25, 0.25]), Some(0.0));
        assert_eq!(hue([0.0, 0.0, 1.0]), Some(240.0));
        assert_eq!(hue([0.3, 0.3, 0.3]), None);
        let img = RgbImage::filled(4, 4, [0.2, 0.4, 0.2]);
        let patch = Patch { x: 1, y: 1, w: 2, h: 2, expected: [0.0; 3] };
        assert_eq!(hue_of_patch(&img, &patch).unwrap(), Some(120.0));
    }

    #[test]
    fn chart_file_roundtrip_and_validation() {
        let (_, chart) = exact_chart();
        let text = charts_to_text(std::slice::from_ref(&chart));
        assert_eq!(parse_charts(&text, Path::new("charts.txt")).unwrap(), vec![chart.clone()]);
        let mut short = chart.clone();
        short.patches.pop();
        assert!(parse_charts(&charts_to_text(&[short]), Path::new("c")).is_err());
        let mut overlap = chart;
        overlap.patches[1].x = overlap.patches[0].x;
        assert!(overlap.validate().is_err());
        assert!(matches!(read_charts(Path::new("/nonexistent/charts.txt")), Err(Error::MissingFile(_))));
    }
}
