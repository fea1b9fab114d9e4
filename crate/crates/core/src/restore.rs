//! End-to-end restoration of one target image.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DistanceMode;
use crate::image::{quantize_unit, Image8, PosedImage, RgbImage};
use crate::optimizer::{fit, freeze, init_state_with, AdamConfig, FreezeSet, TraceRecord};
use crate::pairing::{build_observations, ObservationSet};
use crate::uifm::UifmParams;

/// Restored float image. Pixels outside `mask` hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RestoredImage {
    pub target_id: u32,
    pub image: RgbImage,
    pub mask: Vec<bool>,
}

impl RestoredImage {
    pub fn width(&self) -> u32 {
        self.image.width
    }

    pub fn height(&self) -> u32 {
        self.image.height
    }

    /// Raw dump: row-major, RGB interleaved, little-endian `f32`.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        self.image
            .data
            .iter()
            .flatten()
            .flat_map(|v| (*v as f32).to_le_bytes())
            .collect()
    }

    pub fn from_f32_bytes(target_id: u32, width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        let n = width as usize * height as usize;
        if bytes.len() != n * 12 {
            return Err(Error::InvalidArgument(format!(
                "raw dump holds {} bytes, expected {} for {width}x{height}",
                bytes.len(),
                n * 12
            )));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let data: Vec<[f64; 3]> = vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let mask = data.iter().map(|px| px.iter().all(|v| v.is_finite())).collect();
        Ok(Self {
            target_id,
            image: RgbImage::new(width, height, data)?,
            mask,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RestoreOptions {
    pub adam: AdamConfig,
    /// Restrict candidates to `|id - target| <= window`.
    pub window: Option<u32>,
    pub distance_mode: DistanceMode,
    pub freeze: FreezeSet,
    /// Starting parameters; `beta = B = gamma = 0.1` when absent.
    pub initial_params: Option<UifmParams>,
}

impl Default for RestoreOptions {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            window: None,
            distance_mode: DistanceMode::Range,
            freeze: FreezeSet::NONE,
            initial_params: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Restoration {
    pub restored: RestoredImage,
    pub params: UifmParams,
    pub trace: Vec<TraceRecord>,
    pub observations: ObservationSet,
    pub pairing_seconds: f64,
    pub optimization_seconds: f64,
}

pub fn find_target(dataset: &[PosedImage], target_id: u32) -> Result<&PosedImage> {
    dataset
        .iter()
        .find(|p| p.id == target_id)
        .ok_or(Error::UnknownImage(target_id))
}

/// Pairing, fit, and assembly of the restored image of `target_id`.
pub fn restore_image(dataset: &[PosedImage], target_id: u32, opts: &RestoreOptions) -> Result<Restoration> {
    opts.adam.validate()?;
    let target = find_target(dataset, target_id)?;
    let t0 = Instant::now();
    let obs = build_observations(target, dataset, opts.window, opts.distance_mode)?;
    let pairing_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let outcome = restore_from_observations(target, &obs, opts)?;
    let optimization_seconds = t1.elapsed().as_secs_f64();
    Ok(Restoration {
        restored: outcome.0,
        params: outcome.1,
        trace: outcome.2,
        observations: obs,
        pairing_seconds,
        optimization_seconds,
    })
}

/// Fit and assembly from a prebuilt (possibly cached) observation set.
pub fn restore_from_observations(
    target: &PosedImage,
    obs: &ObservationSet,
    opts: &RestoreOptions,
) -> Result<(RestoredImage, UifmParams, Vec<TraceRecord>)> {
    let mut params = opts.initial_params.unwrap_or_else(|| UifmParams::uniform(0.1));
    params.enforce_mode();
    let state = freeze(init_state_with(target, params), opts.freeze)?;
    let outcome = fit(obs, state, &opts.adam)?;
    let state = outcome.state;
    let data = state
        .j
        .iter()
        .zip(&state.mask)
        .map(|(j, &m)| if m { *j } else { [f64::NAN; 3] })
        .collect();
    let restored = RestoredImage {
        target_id: target.id,
        image: RgbImage::new(state.width, state.height, data)?,
        mask: state.mask,
    };
    Ok((restored, state.params, outcome.trace))
}

/// Linear-interpolated percentile of sorted data (`pct` in `[0, 100]`).
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub image: Image8,
    /// Channels whose percentile bounds coincided; they are only clamped
    /// and quantized.
    pub unchanged_channels: Vec<usize>,
    /// Per channel `(low, high)` percentile values used for stretching.
    pub bounds: [(f64, f64); 3],
}

/// Per-channel histogram stretching over masked pixels, then 8-bit
/// quantization. Unmasked pixels become black.
pub fn normalize(img: &RestoredImage, low_pct: f64, high_pct: f64) -> Result<Normalized> {
    if !(0.0..=100.0).contains(&low_pct) || !(0.0..=100.0).contains(&high_pct) || low_pct >= high_pct {
        return Err(Error::InvalidArgument(format!(
            "percentiles must satisfy 0 <= low < high <= 100 (got {low_pct}, {high_pct})"
        )));
    }
    let masked: Vec<usize> = (0..img.mask.len()).filter(|&p| img.mask[p]).collect();
    if masked.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut bounds = [(0.0, 0.0); 3];
    let mut unchanged = Vec::new();
    for (c, bound) in bounds.iter_mut().enumerate() {
        let mut vals: Vec<f64> = masked.iter().map(|&p| img.image.data[p][c]).collect();
        vals.sort_by(f64::total_cmp);
        let lo = percentile(&vals, low_pct);
        let hi = percentile(&vals, high_pct);
        if !(hi > lo) {
            log::warn!("channel {c} of image {} is constant; left unstretched", img.target_id);
            unchanged.push(c);
        }
        *bound = (lo, hi);
    }
    let mut data = vec![0u8; img.mask.len() * 3];
    for &p in &masked {
        for c in 0..3 {
            let v = img.image.data[p][c];
            let (lo, hi) = bounds[c];
            let s = if unchanged.contains(&c) { v } else { (v - lo) / (hi - lo) };
            data[p * 3 + c] = quantize_unit(s);
        }
    }
    Ok(Normalized {
        image: Image8::new(img.width(), img.height(), data)?,
        unchanged_channels: unchanged,
        bounds,
    })
}

/// Each pixel takes the raw intensity of its closest observation; ties go
/// to the lowest image id.
pub fn stitch_from_observations(obs: &ObservationSet) -> RestoredImage {
    let mut data = vec![[f64::NAN; 3]; obs.pixel_count()];
    let mut mask = vec![false; obs.pixel_count()];
    for p in 0..obs.pixel_count() {
        let best = obs.segment(p).min_by(|&a, &b| {
            obs.distance[a]
                .total_cmp(&obs.distance[b])
                .then(obs.source[a].cmp(&obs.source[b]))
        });
        if let Some(k) = best {
            data[p] = obs.intensity[k];
            mask[p] = true;
        }
    }
    RestoredImage {
        target_id: obs.target_id,
        image: RgbImage {
            width: obs.width,
            height: obs.height,
            data,
        },
        mask,
    }
}

pub fn stitch_baseline(
    dataset: &[PosedImage],
    target_id: u32,
    window: Option<u32>,
    mode: DistanceMode,
) -> Result<RestoredImage> {
    let target = find_target(dataset, target_id)?;
    let obs = build_observations(target, dataset, window, mode)?;
    Ok(stitch_from_observations(&obs))
}
