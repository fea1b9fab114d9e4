//! Dense pixel pairing and assembly of multi-view observations.
//!
//! A target pixel `p` and a pixel `q` of another view are paired when the
//! depth-based round trip `p -> q -> p` returns to `p`'s cell and the round
//! trip started from `q`'s centre, `q -> p -> q`, returns to `q`'s cell.
//! The second check makes the relation one-to-one and rejects occluded
//! points, whose transferred depth disagrees with the other view's map.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{roundtrip_cell, DistanceMode, PixelHomogeneous, ViewTransfer};
use crate::image::PosedImage;

/// Linear pixel indices of a paired target pixel and other-view pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelPair {
    pub target: u32,
    pub other: u32,
}

/// Every bidirectionally consistent pair between `target` and `other`,
/// sorted by target pixel.
pub fn pair_images(target: &PosedImage, other: &PosedImage) -> Vec<PixelPair> {
    let forward = ViewTransfer::new(target, other);
    let backward = ViewTransfer::new(other, target);
    let w = target.width();
    let ow = other.width();
    (0..target.height())
        .into_par_iter()
        .flat_map_iter(|row| {
            let forward = &forward;
            let backward = &backward;
            (0..w).filter_map(move |col| {
                let p = PixelHomogeneous::center_of(col, row);
                let (qc, qr) = roundtrip_cell(&p, target, other, forward, backward)?;
                let q = PixelHomogeneous::center_of(qc, qr);
                let (pc, pr) = roundtrip_cell(&q, other, target, backward, forward)?;
                (pc == col && pr == row).then_some(PixelPair {
                    target: row * w + col,
                    other: qr * ow + qc,
                })
            })
        })
        .collect()
}

/// Tracked observations of one target image, stored struct-of-arrays and
/// grouped by target pixel in increasing index order.
///
/// Within a pixel's segment the target's own observation comes first,
/// followed by the other views in the order they were supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub target_id: u32,
    pub width: u32,
    pub height: u32,
    pub pixel_index: Vec<u32>,
    pub intensity: Vec<[f64; 3]>,
    pub distance: Vec<f64>,
    /// Id of the image each observation was read from.
    pub source: Vec<u32>,
    /// `offsets[p]..offsets[p + 1]` is pixel `p`'s segment; length `W*H + 1`.
    offsets: Vec<usize>,
}

impl ObservationSet {
    /// Builds a set from parallel arrays, sorting them by pixel (stable).
    pub fn from_arrays(
        target_id: u32,
        width: u32,
        height: u32,
        pixel_index: Vec<u32>,
        intensity: Vec<[f64; 3]>,
        distance: Vec<f64>,
        source: Vec<u32>,
    ) -> Result<Self> {
        let n = pixel_index.len();
        if intensity.len() != n || distance.len() != n || source.len() != n {
            return Err(Error::InvalidArgument("observation arrays differ in length".into()));
        }
        let pixels = width as usize * height as usize;
        let mut counts = vec![0usize; pixels + 1];
        for &p in &pixel_index {
            if p as usize >= pixels {
                return Err(Error::InvalidArgument(format!("pixel index {p} out of range")));
            }
            counts[p as usize + 1] += 1;
        }
        if let Some(d) = distance.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument(format!("observation distance {d} is not positive")));
        }
        for i in 0..pixels {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut order = vec![0usize; n];
        for (k, &p) in pixel_index.iter().enumerate() {
            order[cursor[p as usize]] = k;
            cursor[p as usize] += 1;
        }
        Ok(Self {
            target_id,
            width,
            height,
            pixel_index: order.iter().map(|&k| pixel_index[k]).collect(),
            intensity: order.iter().map(|&k| intensity[k]).collect(),
            distance: order.iter().map(|&k| distance[k]).collect(),
            source: order.iter().map(|&k| source[k]).collect(),
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.pixel_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_index.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn segment(&self, pixel: usize) -> Range<usize> {
        self.offsets[pixel]..self.offsets[pixel + 1]
    }

    #[inline]
    pub fn count(&self, pixel: usize) -> usize {
        self.offsets[pixel + 1] - self.offsets[pixel]
    }

    pub fn counts(&self) -> Vec<u32> {
        self.offsets.windows(2).map(|w| (w[1] - w[0]) as u32).collect()
    }

    /// Pixels with at least one observation, increasing.
    pub fn observed_pixels(&self) -> Vec<u32> {
        (0..self.pixel_count())
            .filter(|&p| self.count(p) > 0)
            .map(|p| p as u32)
            .collect()
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.pixel_count()).map(|p| self.count(p) > 0).collect()
    }

    /// Min and max distance over a pixel's observations.
    pub fn distance_span(&self, pixel: usize) -> Option<(f64, f64)> {
        let seg = &self.distance[self.segment(pixel)];
        let first = *seg.first()?;
        Some(seg.iter().fold((first, first), |(lo, hi), &d| (lo.min(d), hi.max(d))))
    }

    const MAGIC: &'static [u8; 8] = b"MVCOBS01";

    /// Binary cache. Little-endian layout:
    ///
    /// ```text
    /// magic "MVCOBS01" | target_id u32 | width u32 | height u32 | count u64
    /// pixel_index u32 * count
    /// intensity   f64 * 3 * count   (R, G, B interleaved)
    /// distance    f64 * count
    /// source      u32 * count
    /// ```
    pub fn write_cache<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(Self::MAGIC)?;
        out.write_all(&self.target_id.to_le_bytes())?;
        out.write_all(&self.width.to_le_bytes())?;
        out.write_all(&self.height.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.len() * 40);
        buf.extend(self.pixel_index.iter().flat_map(|p| p.to_le_bytes()));
        buf.extend(self.intensity.iter().flatten().flat_map(|v| v.to_le_bytes()));
        buf.extend(self.distance.iter().flat_map(|v| v.to_le_bytes()));
        buf.extend(self.source.iter().flat_map(|v| v.to_le_bytes()));
        out.write_all(&buf)
    }

    pub fn read_cache<R: Read>(input: &mut R) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("observation cache: {m}"));
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| bad(&e.to_string()))?;
        if bytes.len() < 28 || &bytes[..8] != Self::MAGIC {
            return Err(bad("bad header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (target_id, width, height) = (u32_at(8), u32_at(12), u32_at(16));
        let n = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
        if bytes.len() != 28 + n * 40 {
            return Err(bad("length does not match count"));
        }
        let mut o = 28;
        let pixel_index = (0..n).map(|k| u32_at(o + 4 * k)).collect();
        o += 4 * n;
        let intensity = (0..n)
            .map(|k| [f64_at(o + 24 * k), f64_at(o + 24 * k + 8), f64_at(o + 24 * k + 16)])
            .collect();
        o += 24 * n;
        let distance = (0..n).map(|k| f64_at(o + 8 * k)).collect();
        o += 8 * n;
        let source = (0..n).map(|k| u32_at(o + 4 * k)).collect();
        Self::from_arrays(target_id, width, height, pixel_index, intensity, distance, source)
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_cache(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_cache(&mut std::io::BufReader::new(file))
    }
}

/// Candidate selection by frame window around the target id.
pub fn within_window(target_id: u32, candidate_id: u32, window: Option<u32>) -> bool {
    window.is_none_or(|n| target_id.abs_diff(candidate_id) <= n)
}

/// Assembles the observations of `target`: its own pixels plus every pixel
/// paired in each candidate (optionally restricted to `|id - target| <= window`).
/// A candidate with the target's id is skipped.
pub fn build_observations(
    target: &PosedImage,
    candidates: &[PosedImage],
    window: Option<u32>,
    mode: DistanceMode,
) -> Result<ObservationSet> {
    if target.depth.valid_count() == 0 {
        return Err(Error::NothingToRestore(target.id));
    }
    let w = target.width();
    let selected: Vec<&PosedImage> = candidates
        .iter()
        .filter(|c| c.id != target.id && within_window(target.id, c.id, window))
        .collect();

    let per_view: Vec<Vec<(u32, [f64; 3], f64)>> = selected
        .par_iter()
        .map(|other| {
            pair_images(target, other)
                .into_iter()
                .map(|pair| {
                    let q = pair.other as usize;
                    let (col, row) = (pair.other % other.width(), pair.other / other.width());
                    let x = PixelHomogeneous::center_of(col, row);
                    let d = other.depth.get(q).expect("paired pixel has depth");
                    (pair.target, other.image.intensity(q), mode.distance(&x, d, &other.intrinsics))
                })
                .collect()
        })
        .collect();

    let own = target.depth.valid_count();
    let total = own + per_view.iter().map(Vec::len).sum::<usize>();
    let mut pixel_index = Vec::with_capacity(total);
    let mut intensity = Vec::with_capacity(total);
    let mut distance = Vec::with_capacity(total);
    let mut source = Vec::with_capacity(total);
    for p in 0..target.pixel_count() {
        if let Some(d) = target.depth.get(p) {
            let x = PixelHomogeneous::center_of(p as u32 % w, p as u32 / w);
            pixel_index.push(p as u32);
            intensity.push(target.image.intensity(p));
            distance.push(mode.distance(&x, d, &target.intrinsics));
            source.push(target.id);
        }
    }
    for (view, obs) in selected.iter().zip(per_view) {
        for (p, i, d) in obs {
            pixel_index.push(p);
            intensity.push(i);
            distance.push(d);
            source.push(view.id);
        }
    }
    ObservationSet::from_arrays(target.id, w, target.height(), pixel_index, intensity, distance, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraPose, Intrinsics};
    use crate::image::{DepthMap, Image8};
    use nalgebra::Vector3;
    use proptest::prelude::*;

    /// Fronto-parallel plane at depth `z` seen from a camera at `center`.
    fn plane_view(id: u32, center: Vector3<f64>, z_plane: f64) -> PosedImage {
        let k = Intrinsics::new(20.0, 20.0, 8.0, 6.0, 16, 12).unwrap();
        let depth = vec![(z_plane - center.z) as f32; 16 * 12];
        let data = (0..16 * 12 * 3).map(|i| ((i * 31 + id as usize * 7) % 256) as u8).collect();
        PosedImage::new(
            id,
            format!("v{id}"),
            Image8::new(16, 12, data).unwrap(),
            CameraPose::looking_along_z(center),
            k,
            DepthMap::new(16, 12, depth).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn self_pairing_is_identity() {
        let mut v = plane_view(0, Vector3::zeros(), 3.0);
        v.depth.values[7] = f32::NAN;
        let pairs = pair_images(&v, &v);
        assert_eq!(pairs.len(), 16 * 12 - 1);
        assert!(pairs.iter().all(|p| p.target == p.other));
    }

    #[test]
    fn disjoint_frustums_pair_nothing() {
        let a = plane_view(0, Vector3::zeros(), 3.0);
        let b = plane_view(1, Vector3::new(100.0, 0.0, 0.0), 3.0);
        assert!(pair_images(&a, &b).is_empty());
    }

    #[test]
    fn pairs_are_injective_on_both_sides() {
        // b is farther away, so many target pixels fall into one b cell.
        let a = plane_view(0, Vector3::zeros(), 3.0);
        let b = plane_view(1, Vector3::new(0.1, 0.0, -2.5), 3.0);
        let pairs = pair_images(&a, &b);
        assert!(!pairs.is_empty());
        let mut t: Vec<_> = pairs.iter().map(|p| p.target).collect();
        let mut o: Vec<_> = pairs.iter().map(|p| p.other).collect();
        t.dedup();
        o.sort();
        o.dedup();
        assert_eq!(t.len(), pairs.len());
        assert_eq!(o.len(), pairs.len());
    }

    #[test]
    fn zero_candidates_gives_self_observations() {
        let v = plane_view(3, Vector3::zeros(), 2.0);
        let obs = build_observations(&v, &[], None, DistanceMode::Range).unwrap();
        assert_eq!(obs.len(), 16 * 12);
        assert!(obs.counts().iter().all(|&c| c == 1));
        assert!(obs.source.iter().all(|&s| s == 3));
    }

    #[test]
    fn duplicate_candidate_doubles_counts() {
        let v = plane_view(0, Vector3::zeros(), 2.0);
        let mut copy = v.clone();
        copy.id = 1;
        let obs = build_observations(&v, &[copy], None, DistanceMode::Range).unwrap();
        assert!(obs.counts().iter().all(|&c| c == 2));
        for p in 0..obs.pixel_count() {
            let s = obs.segment(p);
            assert_eq!(obs.intensity[s.start], obs.intensity[s.start + 1]);
            assert_eq!(obs.distance[s.start], obs.distance[s.start + 1]);
            assert_eq!(obs.source[s.start..s.end], [0, 1]);
        }
    }

    #[test]
    fn target_in_candidates_is_skipped() {
        let v = plane_view(0, Vector3::zeros(), 2.0);
        let obs = build_observations(&v, std::slice::from_ref(&v), None, DistanceMode::Range).unwrap();
        assert!(obs.counts().iter().all(|&c| c == 1));
    }

    #[test]
    fn missing_depth_excluded_and_all_missing_rejected() {
        let mut v = plane_view(0, Vector3::zeros(), 2.0);
        v.depth.values[0] = -1.0;
        let obs = build_observations(&v, &[], None, DistanceMode::Depth).unwrap();
        assert_eq!(obs.count(0), 0);
        assert_eq!(obs.len(), 16 * 12 - 1);
        v.depth = DepthMap::empty(16, 12);
        assert!(matches!(
            build_observations(&v, &[], None, DistanceMode::Range),
            Err(Error::NothingToRestore(0))
        ));
    }

    #[test]
    fn window_filters_candidates() {
        let views: Vec<_> = (0..6)
            .map(|i| plane_view(i, Vector3::new(0.0, 0.0, -0.2 * i as f64), 3.0))
            .collect();
        let mut last = 0;
        for n in [0, 1, 2, 5] {
            let obs = build_observations(&views[0], &views, Some(n), DistanceMode::Range).unwrap();
            assert!(obs.source.iter().all(|&s| s <= n));
            assert!(obs.len() >= last);
            last = obs.len();
        }
        let own_only = build_observations(&views[0], &views, Some(0), DistanceMode::Range).unwrap();
        assert_eq!(own_only.len(), 16 * 12);
    }

    #[test]
    fn cache_roundtrip_and_corruption() {
        let views: Vec<_> = (0..3)
            .map(|i| plane_view(i, Vector3::new(0.05 * i as f64, 0.0, -0.3 * i as f64), 3.0))
            .collect();
        let obs = build_observations(&views[1], &views, None, DistanceMode::Range).unwrap();
        let mut bytes = Vec::new();
        obs.write_cache(&mut bytes).unwrap();
        assert_eq!(ObservationSet::read_cache(&mut &bytes[..]).unwrap(), obs);
        bytes.pop();
        assert!(ObservationSet::read_cache(&mut &bytes[..]).is_err());
    }

    proptest! {
        #[test]
        fn from_arrays_groups_by_pixel(raw in prop::collection::vec((0u32..20, 0.1f64..5.0), 0..60)) {
            let n = raw.len();
            let pix: Vec<u32> = raw.iter().map(|r| r.0).collect();
            let dist: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let src: Vec<u32> = (0..n as u32).collect();
            let obs = ObservationSet::from_arrays(0, 5, 4, pix.clone(), vec![[0.5; 3]; n], dist, src).unwrap();
            prop_assert_eq!(obs.len(), n);
            prop_assert!(obs.pixel_index.windows(2).all(|w| w[0] <= w[1]));
            for p in 0..20 {
                let seg = obs.segment(p);
                prop_assert_eq!(seg.len(), pix.iter().filter(|&&q| q as usize == p).count());
                // stable: original order preserved within a pixel
                prop_assert!(obs.source[seg].windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
