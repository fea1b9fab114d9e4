//! Fit diagnostics emitted as plot-ready tab-separated tables.
//!
//! Residual report, columns `record channel x y`:
//!
//! | record | x | y |
//! |---|---|---|
//! | `stat` | statistic name | value |
//! | `hist` | bin left edge | count (a final row holds the right edge and 0) |
//! | `qq` | standard normal quantile | standardized residual |
//! | `fit` | model intensity | residual |
//!
//! Fit curves, columns `track pixel kind z r g b` with `kind` either
//! `obs` or `model`. Variance scan, columns
//! `target variance beta_r beta_g beta_b B_r B_g B_b gamma_r gamma_g gamma_b`.

use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::{DistanceMode, PixelHomogeneous};
use crate::image::PosedImage;
use crate::optimizer::RestorationState;
use crate::pairing::ObservationSet;
use crate::uifm::UifmParams;

pub const DEFAULT_SAMPLE_CAP: usize = 1_000_000;
pub const HISTOGRAM_BINS: usize = 64;
/// Upper bound on emitted `qq` and `fit` rows per channel.
pub const PLOT_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Self {
                edges: vec![0.0, 0.0],
                counts: vec![0],
            };
        }
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Moments {
    /// Population moments.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        Self {
            count: values.len(),
            mean,
            std: m2.sqrt(),
            skewness: m3 / m2.powf(1.5),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResiduals {
    pub moments: Moments,
    pub histogram: Histogram,
    /// `(normal quantile, standardized residual)`, sorted, thinned to
    /// [`PLOT_POINTS`].
    pub qq: Vec<(f64, f64)>,
    /// R^2 of a line through the full quantile plot.
    pub qq_r2: f64,
    /// `(model intensity, residual)` samples.
    pub fitted: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub channels: Vec<ChannelResiduals>,
}

/// Indices of at most `cap` observations, chosen deterministically from
/// `seed`, in ascending order.
pub fn subsample(len: usize, cap: usize, seed: u64) -> Vec<usize> {
    if len <= cap {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, len, cap).into_vec();
    picked.sort_unstable();
    picked
}

fn thin<T: Copy>(v: &[T], max: usize) -> Vec<T> {
    if v.len() <= max {
        return v.to_vec();
    }
    (0..max).map(|i| v[i * (v.len() - 1) / (max - 1)]).collect()
}

pub fn residual_report(obs: &ObservationSet, state: &RestorationState, sample_cap: usize, seed: u64) -> ResidualReport {
    let picked = subsample(obs.len(), sample_cap, seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let channels = (0..3)
        .map(|c| {
            let model = state.params.channel(c);
            let mut residuals = Vec::with_capacity(picked.len());
            let mut fitted = Vec::with_capacity(picked.len());
            for &k in &picked {
                let p = obs.pixel_index[k] as usize;
                let j = state.j[p][c];
                let z = obs.distance[k];
                let r = model.residual_and_grads(obs.intensity[k][c], z, j).r;
                residuals.push(r);
                fitted.push((model.forward(j, z), r));
            }
            let moments = Moments::of(&residuals);
            let histogram = Histogram::new(&residuals, HISTOGRAM_BINS);
            let mut standardized: Vec<f64> = residuals
                .iter()
                .map(|r| if moments.std > 0.0 { (r - moments.mean) / moments.std } else { 0.0 })
                .collect();
            standardized.sort_by(f64::total_cmp);
            let n = standardized.len() as f64;
            let qq: Vec<(f64, f64)> = standardized
                .iter()
                .enumerate()
                .map(|(i, s)| (std_normal.inverse_cdf((i as f64 + 0.5) / n), *s))
                .collect();
            let qq_r2 = if qq.len() >= 3 {
                let (xs, ys): (Vec<f64>, Vec<f64>) = qq.iter().copied().unzip();
                linear_fit(&xs, &ys).map(|f| f.r2).unwrap_or(0.0)
            } else {
                0.0
            };
            ChannelResiduals {
                moments,
                histogram,
                qq: thin(&qq, PLOT_POINTS),
                qq_r2,
                fitted: thin(&fitted, PLOT_POINTS),
            }
        })
        .collect();
    ResidualReport { channels }
}

impl ResidualReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("record\tchannel\tx\ty\n");
        for (c, ch) in self.channels.iter().enumerate() {
            let m = &ch.moments;
            for (name, v) in [
                ("count", m.count as f64),
                ("mean", m.mean),
                ("std", m.std),
                ("skewness", m.skewness),
                ("excess_kurtosis", m.excess_kurtosis),
                ("qq_r2", ch.qq_r2),
            ] {
                writeln!(s, "stat\t{c}\t{name}\t{v}").unwrap();
            }
            for (edge, count) in ch.histogram.edges.iter().zip(&ch.histogram.counts) {
                writeln!(s, "hist\t{c}\t{edge}\t{count}").unwrap();
            }
            writeln!(s, "hist\t{c}\t{}\t0", ch.histogram.edges.last().unwrap()).unwrap();
            for (x, y) in &ch.qq {
                writeln!(s, "qq\t{c}\t{x}\t{y}").unwrap();
            }
            for (x, y) in &ch.fitted {
                writeln!(s, "fit\t{c}\t{x}\t{y}").unwrap();
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub pixel: u32,
    pub observed: Vec<(f64, [f64; 3])>,
    pub model: Vec<(f64, [f64; 3])>,
}

/// The `n_tracks` pixels with the widest distance span, with their observed
/// `(z, I)` series and the fitted model sampled on `[0, z_max]`.
pub fn fit_curves(obs: &ObservationSet, state: &RestorationState, n_tracks: usize, samples: usize) -> Vec<Track> {
    let z_max = obs.distance.iter().copied().fold(0.0, f64::max);
    let mut spans: Vec<(f64, u32)> = obs
        .observed_pixels()
        .into_iter()
        .filter_map(|p| obs.distance_span(p as usize).map(|(lo, hi)| (hi - lo, p)))
        .filter(|(span, _)| *span > 0.0)
        .collect();
    spans.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let samples = samples.max(2);
    spans
        .into_iter()
        .take(n_tracks)
        .map(|(_, p)| {
            let seg = obs.segment(p as usize);
            let mut observed: Vec<(f64, [f64; 3])> = seg.map(|k| (obs.distance[k], obs.intensity[k])).collect();
            observed.sort_by(|a, b| a.0.total_cmp(&b.0));
            let j = state.j[p as usize];
            let model = (0..samples)
                .map(|i| {
                    let z = z_max * i as f64 / (samples - 1) as f64;
                    (z, std::array::from_fn(|c| state.params.channel(c).forward(j[c], z)))
                })
                .collect();
            Track { pixel: p, observed, model }
        })
        .collect()
}

pub fn tracks_to_tsv(tracks: &[Track]) -> String {
    let mut s = String::from("track\tpixel\tkind\tz\tr\tg\tb\n");
    for (t, track) in tracks.iter().enumerate() {
        for (kind, series) in [("obs", &track.observed), ("model", &track.model)] {
            for (z, v) in series {
                writeln!(s, "{t}\t{}\t{kind}\t{z}\t{}\t{}\t{}", track.pixel, v[0], v[1], v[2]).unwrap();
            }
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`. A constant `y` gives R^2 = 0 with
/// a warning.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("x and y lengths differ".into()));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 points, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        log::warn!("constant response, R^2 undefined; reporting 0");
        0.0
    } else {
        let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        1.0 - ss_res / syy
    };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Line through `(observation count, seconds)` run records.
pub fn timing_linearity(runs: &[(f64, f64)]) -> Result<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = runs.iter().copied().unzip();
    linear_fit(&x, &y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub target_id: u32,
    pub variance: f64,
    pub params: UifmParams,
}

/// Population variance of a target's distance map over pixels with depth.
pub fn distance_variance(target: &PosedImage, mode: DistanceMode) -> f64 {
    let w = target.width();
    let z: Vec<f64> = (0..target.pixel_count())
        .filter_map(|i| {
            target.depth.get(i).map(|d| {
                let x = PixelHomogeneous::center_of(i as u32 % w, i as u32 / w);
                mode.distance(&x, d, &target.intrinsics)
            })
        })
        .collect();
    if z.is_empty() {
        return f64::NAN;
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// One row per fitted target: its distance-map variance and parameters.
pub fn param_variance_scan(dataset: &[PosedImage], fits: &[(u32, UifmParams)], mode: DistanceMode) -> Result<Vec<VarianceRow>> {
    fits.iter()
        .map(|(id, params)| {
            let target = dataset.iter().find(|p| p.id == *id).ok_or(Error::UnknownImage(*id))?;
            Ok(VarianceRow {
                target_id: *id,
                variance: distance_variance(target, mode),
                params: *params,
            })
        })
        .collect()
}

pub fn variance_rows_to_tsv(rows: &[VarianceRow]) -> String {
    let mut s =
        String::from("target\tvariance\tbeta_r\tbeta_g\tbeta_b\tB_r\tB_g\tB_b\tgamma_r\tgamma_g\tgamma_b\n");
    for r in rows {
        let p = &r.params;
        write!(s, "{}\t{}", r.target_id, r.variance).unwrap();
        for v in p.beta.iter().chain(&p.veil).chain(&p.gamma) {
            write!(s, "\t{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraPose, Intrinsics};
    use crate::image::{DepthMap, Image8};
    use crate::optimizer::FreezeSet;
    use approx::assert_abs_diff_eq;
    use rand_distr::Distribution;

    /// Observations generated exactly by the model at 2 x 2 pixels.
    fn model_obs(params: UifmParams, noise: f64, per_pixel: usize) -> (ObservationSet, RestorationState) {
        let j = [[0.2, 0.5, 0.7], [0.9, 0.1, 0.4], [0.6, 0.6, 0.6], [0.3, 0.8, 0.2]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gauss = rand_distr::Normal::new(0.0, noise.max(1e-300)).unwrap();
        let (mut pix, mut inten, mut dist, mut src) = (vec![], vec![], vec![], vec![]);
        for p in 0..4 {
            for k in 0..per_pixel {
                let z = 1.0 + 7.0 * k as f64 / per_pixel as f64 + 0.1 * p as f64;
                let i: [f64; 3] = std::array::from_fn(|c| {
                    params.channel(c).forward(j[p][c], z) + if noise > 0.0 { gauss.sample(&mut rng) } else { 0.0 }
                });
                pix.push(p as u32);
                inten.push(i);
                dist.push(z);
                src.push(k as u32);
            }
        }
        let obs = ObservationSet::from_arrays(0, 2, 2, pix, inten, dist, src).unwrap();
        let state = RestorationState {
            width: 2,
            height: 2,
            mask: vec![true; 4],
            j: j.to_vec(),
            params,
            frozen: FreezeSet::NONE,
        };
        (obs, state)
    }

    #[test]
    fn noiseless_residuals_vanish() {
        let (obs, state) = model_obs(UifmParams::new([0.5, 0.3, 0.15], [0.1, 0.15, 0.25], [0.6, 0.4, 0.2]), 0.0, 50);
        let rep = residual_report(&obs, &state, 1000, 0);
        for ch in &rep.channels {
            assert!(ch.fitted.iter().all(|(_, r)| *r == 0.0));
            assert_eq!(ch.histogram.total(), 200);
        }
    }

    #[test]
    fn gaussian_residual_moments() {
        let params = UifmParams::new([0.5, 0.3, 0.15], [0.1, 0.15, 0.25], [0.6, 0.4, 0.2]);
        let (obs, state) = model_obs(params, 0.02, 30_000);
        let rep = residual_report(&obs, &state, 100_000, 3);
        for ch in &rep.channels {
            assert_eq!(ch.histogram.total(), 100_000);
            assert!(ch.moments.skewness.abs() < 0.1);
            assert!(ch.moments.excess_kurtosis.abs() < 0.2);
            assert!(ch.qq_r2 >= 0.99);
            assert!(ch.qq.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        }
        assert_eq!(rep, residual_report(&obs, &state, 100_000, 3));
        assert!(rep.to_tsv().lines().any(|l| l.starts_with("stat\t0\tskewness")));
    }

    #[test]
    fn moments_against_hand_values() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 10.0]);
        // mean 4, deviations -3 -2 -1 6
        assert_eq!(m.mean, 4.0);
        assert_abs_diff_eq!(m.std, (50.0f64 / 4.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(m.skewness, (180.0 / 4.0) / 12.5f64.powf(1.5), epsilon = 1e-12);
        assert_abs_diff_eq!(m.excess_kurtosis, (1394.0 / 4.0) / 156.25 - 3.0, epsilon = 1e-12);
    }

    #[test]
    fn curves_start_at_j_and_skip_single_distance_pixels() {
        let params = UifmParams::new([0.5, 0.3, 0.15], [0.1, 0.15, 0.25], [0.6, 0.4, 0.2]);
        let (obs, state) = model_obs(params, 0.0, 5);
        let tracks = fit_curves(&obs, &state, 10, 20);
        assert_eq!(tracks.len(), 4);
        for t in &tracks {
            assert_eq!(t.model[0].0, 0.0);
            assert_eq!(t.model[0].1, state.j[t.pixel as usize]);
            for (z, i) in &t.observed {
                for c in 0..3 {
                    assert_abs_diff_eq!(*i.get(c).unwrap(), params.channel(c).forward(state.j[t.pixel as usize][c], *z), epsilon = 1e-15);
                }
            }
        }
        let single = ObservationSet::from_arrays(0, 2, 1, vec![0, 0, 1], vec![[0.5; 3]; 3], vec![1.0, 2.0, 3.0], vec![0, 1, 0])
            .unwrap();
        let st = RestorationState { width: 2, height: 1, mask: vec![true; 2], j: vec![[0.5; 3]; 2], params, frozen: FreezeSet::NONE };
        let tracks = fit_curves(&single, &st, 10, 5);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].pixel, 0);
    }

    #[test]
    fn timing_fits() {
        let runs: Vec<(f64, f64)> = (1..6).map(|i| (i as f64 * 1000.0, 0.5 + 0.002 * i as f64 * 1000.0)).collect();
        let f = timing_linearity(&runs).unwrap();
        assert_abs_diff_eq!(f.r2, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.slope, 0.002, epsilon = 1e-12);
        let flat = timing_linearity(&[(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]).unwrap();
        assert_eq!((flat.slope, flat.r2), (0.0, 0.0));
        assert!(timing_linearity(&[(1.0, 2.0), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn variance_matches_two_pass_oracle() {
        let k = Intrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let depth: Vec<f32> = (0..16).map(|i| if i == 3 { f32::NAN } else { 1.0 + 0.25 * i as f32 }).collect();
        let img = PosedImage::new(5, "a", Image8::filled(4, 4, [0; 3]), CameraPose::identity(), k, DepthMap::new(4, 4, depth.clone()).unwrap())
            .unwrap();
        let vals: Vec<f64> = depth.iter().filter(|d| d.is_finite()).map(|&d| d as f64).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let oracle = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let p = UifmParams::uniform(0.2);
        let rows = param_variance_scan(&[img.clone()], &[(5, p), (5, p)], DistanceMode::Depth).unwrap();
        assert_abs_diff_eq!(rows[0].variance, oracle, epsilon = 1e-9);
        assert_eq!(rows[0], rows[1]);
        assert!(param_variance_scan(&[img], &[(6, p)], DistanceMode::Depth).is_err());
    }
}
