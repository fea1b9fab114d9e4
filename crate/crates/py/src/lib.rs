//! Python bindings: datasets, restoration, the image formation model and
//! image metrics.

use std::path::PathBuf;

use mvcolor::metrics;
use mvcolor::optimizer::FreezeSet;
use mvcolor::restore::{self, RestoredImage};
use mvcolor::synth::{self, SceneFile};
use mvcolor::{AdamConfig, DistanceMode, Error, ErrorKind, ModelMode, PosedImage, RestoreOptions, RgbImage, UifmParams};
use pyo3::exceptions::{PyArithmeticError, PyFileNotFoundError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn to_py(e: Error) -> PyErr {
    match (&e, e.kind()) {
        (Error::MissingFile(_), _) => PyFileNotFoundError::new_err(e.to_string()),
        (Error::Io { .. }, _) => PyOSError::new_err(e.to_string()),
        (_, ErrorKind::Numerical) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Per-channel model parameters: attenuation `beta`, veiling light `B`,
/// backscatter coefficient `gamma`.
#[pyclass(name = "Params", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: UifmParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (beta, veil, gamma=None))]
    fn new(beta: [f64; 3], veil: [f64; 3], gamma: Option<[f64; 3]>) -> Self {
        let inner = match gamma {
            Some(g) => UifmParams::new(beta, veil, g),
            None => UifmParams::tied(beta, veil),
        };
        Self { inner }
    }

    #[getter]
    fn beta(&self) -> [f64; 3] {
        self.inner.beta
    }

    #[getter]
    fn veil(&self) -> [f64; 3] {
        self.inner.veil
    }

    #[getter]
    fn gamma(&self) -> [f64; 3] {
        self.inner.gamma
    }

    #[getter]
    fn tied(&self) -> bool {
        self.inner.mode == ModelMode::Tied
    }

    /// Observed intensity of `j` seen through `z` meters of water.
    fn forward(&self, j: f64, z: f64, channel: usize) -> PyResult<f64> {
        mvcolor::uifm::forward(j, z, &self.inner, channel).map_err(to_py)
    }

    /// Single-view inversion of [`forward`].
    fn invert(&self, i: f64, z: f64, channel: usize) -> PyResult<f64> {
        mvcolor::uifm::invert_single(i, z, &self.inner, channel).map_err(to_py)
    }

    fn to_text(&self) -> String {
        mvcolor::report::params_to_text(&self.inner)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        mvcolor::report::parse_params(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("Params(beta={:?}, veil={:?}, gamma={:?})", p.beta, p.veil, p.gamma)
    }
}

/// A restored (or stitched) float image. Pixels without depth are `None`.
#[pyclass(name = "Restored", frozen)]
struct PyRestored {
    image: RestoredImage,
    params: Option<UifmParams>,
    observations: usize,
    trace: Vec<(usize, usize, f64)>,
}

#[pymethods]
impl PyRestored {
    #[getter]
    fn target_id(&self) -> u32 {
        self.image.target_id
    }

    #[getter]
    fn width(&self) -> u32 {
        self.image.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.image.height()
    }

    #[getter]
    fn mask(&self) -> Vec<bool> {
        self.image.mask.clone()
    }

    /// Fitted parameters; `None` for stitched images.
    #[getter]
    fn params(&self) -> Option<PyParams> {
        self.params.map(|inner| PyParams { inner })
    }

    #[getter]
    fn observations(&self) -> usize {
        self.observations
    }

    /// `(step, channel, objective)` records.
    #[getter]
    fn trace(&self) -> Vec<(usize, usize, f64)> {
        self.trace.clone()
    }

    /// Row-major RGB triples.
    fn pixels(&self) -> Vec<Option<[f64; 3]>> {
        self.image
            .image
            .data
            .iter()
            .zip(&self.image.mask)
            .map(|(px, &m)| m.then_some(*px))
            .collect()
    }

    /// Histogram-stretched 8-bit RGB bytes, row-major.
    #[pyo3(signature = (low_pct=1.0, high_pct=99.0))]
    fn normalized<'py>(&self, py: Python<'py>, low_pct: f64, high_pct: f64) -> PyResult<Bound<'py, PyBytes>> {
        let n = restore::normalize(&self.image, low_pct, high_pct).map_err(to_py)?;
        Ok(PyBytes::new(py, &n.image.data))
    }

    /// Raw little-endian `f32` dump, NaN where there is no depth.
    fn f32_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.image.to_f32_bytes())
    }
}

fn distance_mode(s: &str) -> PyResult<DistanceMode> {
    s.parse().map_err(to_py)
}

/// Posed images loaded from a dataset directory.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    images: Vec<PosedImage>,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let images = mvcolor::ingest::load_dataset(&path).map_err(to_py)?;
        Ok(Self { images })
    }

    fn __len__(&self) -> usize {
        self.images.len()
    }

    #[getter]
    fn ids(&self) -> Vec<u32> {
        self.images.iter().map(|p| p.id).collect()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.images.iter().map(|p| p.name.clone()).collect()
    }

    /// `(width, height)` of image `id`.
    fn size(&self, id: u32) -> PyResult<(u32, u32)> {
        let p = restore::find_target(&self.images, id).map_err(to_py)?;
        Ok((p.width(), p.height()))
    }

    /// Jointly fits the restored image and model parameters of `target`.
    #[pyo3(signature = (target, steps=200, learning_rate=0.05, window=None, distance="range", freeze="", tied=false, initial=None))]
    #[allow(clippy::too_many_arguments)]
    fn restore(
        &self,
        py: Python<'_>,
        target: u32,
        steps: usize,
        learning_rate: f64,
        window: Option<u32>,
        distance: &str,
        freeze: &str,
        tied: bool,
        initial: Option<PyRef<'_, PyParams>>,
    ) -> PyResult<PyRestored> {
        let mut initial = initial.map(|p| p.inner);
        if tied {
            initial.get_or_insert_with(|| UifmParams::uniform(0.1)).mode = ModelMode::Tied;
        }
        let opts = RestoreOptions {
            adam: AdamConfig {
                steps,
                learning_rate,
                ..AdamConfig::default()
            },
            window,
            distance_mode: distance_mode(distance)?,
            freeze: FreezeSet::parse(freeze).map_err(to_py)?,
            initial_params: initial,
        };
        let images = &self.images;
        let r = py
            .detach(|| restore::restore_image(images, target, &opts))
            .map_err(to_py)?;
        Ok(PyRestored {
            observations: r.observations.len(),
            trace: r.trace.iter().map(|t| (t.step, t.channel, t.objective)).collect(),
            params: Some(r.params),
            image: r.restored,
        })
    }

    /// Closest-observation stitching baseline.
    #[pyo3(signature = (target, window=None, distance="range"))]
    fn stitch(&self, target: u32, window: Option<u32>, distance: &str) -> PyResult<PyRestored> {
        let image = restore::stitch_baseline(&self.images, target, window, distance_mode(distance)?).map_err(to_py)?;
        Ok(PyRestored {
            image,
            params: None,
            observations: 0,
            trace: Vec::new(),
        })
    }
}

/// Renders a synthetic preset (`corridor`, `two_plane`, `flat_chart`) to `out`.
#[pyfunction]
#[pyo3(signature = (preset, out, seed=None, noise=None, views=None))]
fn simulate(preset: &str, out: PathBuf, seed: Option<u64>, noise: Option<f64>, views: Option<usize>) -> PyResult<usize> {
    let file = SceneFile {
        preset: preset.into(),
        seed,
        noise_sigma: noise,
        views,
        params: None,
    };
    let scene = file.build().map_err(to_py)?;
    let rendered = synth::export(&scene, &out, Some(&file)).map_err(to_py)?;
    Ok(rendered.len())
}

fn rgb_image(pixels: Vec<[f64; 3]>, width: u32) -> PyResult<RgbImage> {
    if width == 0 || pixels.len() % width as usize != 0 {
        return Err(PyValueError::new_err("pixel count is not a multiple of width"));
    }
    let height = (pixels.len() / width as usize) as u32;
    RgbImage::new(width, height, pixels).map_err(to_py)
}

/// PSNR in dB of two row-major RGB images in `[0, 1]`.
#[pyfunction]
#[pyo3(signature = (a, b, width, mask=None))]
fn psnr(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>, width: u32, mask: Option<Vec<bool>>) -> PyResult<f64> {
    metrics::psnr(&rgb_image(a, width)?, &rgb_image(b, width)?, mask.as_deref()).map_err(to_py)
}

/// Gaussian-window SSIM averaged over channels.
#[pyfunction]
#[pyo3(signature = (a, b, width, mask=None))]
fn ssim(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>, width: u32, mask: Option<Vec<bool>>) -> PyResult<f64> {
    metrics::ssim(&rgb_image(a, width)?, &rgb_image(b, width)?, mask.as_deref()).map_err(to_py)
}

/// CIEDE2000 color difference of two CIELAB triples.
#[pyfunction]
fn ciede2000(lab1: [f64; 3], lab2: [f64; 3]) -> f64 {
    metrics::ciede2000(lab1, lab2)
}

#[pyfunction]
fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    metrics::srgb_to_lab(rgb)
}

#[pymodule]
#[pyo3(name = "mvcolor")]
fn mvcolor_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyRestored>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(ciede2000, m)?)?;
    m.add_function(wrap_pyfunction!(srgb_to_lab, m)?)?;
    m.add("PRESETS", synth::PRESETS.to_vec())?;
    Ok(())
}
