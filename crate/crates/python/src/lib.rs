//! Python bindings: images, consensus, calibration, metrics, synthesis and
//! the experiment grid.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use camcal::calibrators::{calibrate_stack, CalibratorKind, FitOptions};
use camcal::consensus::{build_consensus_with, ConsensusMethod, WeightConfig};
use camcal::distortion::{recipes_to_toml, synthesize_stack, Severity};
use camcal::harness::{run_experiment as run_grid, ExperimentConfig};
use camcal::io::{load_image, save_image, BitDepth};
use camcal::metrics::{histogram_spread as spread, perceptual_diff, psnr as psnr_db};
use camcal::{scenes, Error, ImageStack};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Read { .. } | Error::Write { .. } | Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// Real-valued image with samples in [0, 1], interleaved row-major.
#[pyclass(name = "Image", module = "pycamcal", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: camcal::Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, channels: usize, samples: Vec<f64>) -> PyResult<Self> {
        let inner = camcal::Image::from_samples(width, height, channels, samples).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_image(path).map_err(py_err)?,
        })
    }

    /// Procedural test scene: "checker", "wedge" or "terrain".
    #[staticmethod]
    #[pyo3(signature = (name, size = 128))]
    fn builtin(name: &str, size: usize) -> PyResult<Self> {
        Ok(Self {
            inner: scenes::builtin(name, size).map_err(py_err)?,
        })
    }

    #[pyo3(signature = (path, bit_depth = 8))]
    fn save(&self, path: &str, bit_depth: u8) -> PyResult<()> {
        let depth = BitDepth::from_bits(bit_depth).map_err(py_err)?;
        save_image(&self.inner, path, depth).map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    fn get(&self, x: usize, y: usize, channel: usize) -> PyResult<f64> {
        let (w, h, c) = self.inner.shape();
        if x >= w || y >= h || channel >= c {
            return Err(PyValueError::new_err(format!("({x}, {y}, {channel}) outside {w}x{h}x{c}")));
        }
        Ok(self.inner.get(x, y, channel))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let (w, h, c) = self.inner.shape();
        format!("Image({w}x{h}, {c} channels)")
    }
}

fn stack(images: &[PyRef<'_, PyImage>]) -> PyResult<ImageStack> {
    ImageStack::new("py", images.iter().map(|i| i.inner.clone()).collect()).map_err(py_err)
}

fn wrap(images: ImageStack) -> Vec<PyImage> {
    images.into_images().into_iter().map(|inner| PyImage { inner }).collect()
}

/// Per-pixel consensus of a registered stack.
#[pyfunction]
#[pyo3(signature = (images, method = "median", scale = 1.0))]
fn consensus(py: Python<'_>, images: Vec<PyRef<'_, PyImage>>, method: &str, scale: f64) -> PyResult<PyImage> {
    let method: ConsensusMethod = parse(method)?;
    let stack = stack(&images)?;
    let cfg = WeightConfig {
        scale,
        ..WeightConfig::default()
    };
    let image = py
        .detach(|| build_consensus_with(&stack, method, &cfg))
        .map_err(py_err)?
        .image;
    Ok(PyImage { inner: image })
}

/// Fits every camera against `reference`; returns the calibrated images and
/// each model as JSON.
#[pyfunction]
#[pyo3(signature = (images, reference, calibrator = "linear", stride = 1))]
fn calibrate(
    py: Python<'_>,
    images: Vec<PyRef<'_, PyImage>>,
    reference: PyRef<'_, PyImage>,
    calibrator: &str,
    stride: usize,
) -> PyResult<(Vec<PyImage>, Vec<String>)> {
    let kind: CalibratorKind = parse(calibrator)?;
    let stack = stack(&images)?;
    let reference = reference.inner.clone();
    let out = py
        .detach(|| calibrate_stack(&stack, &reference, &kind, &FitOptions { stride }))
        .map_err(py_err)?;
    let models = out.models.iter().map(|m| m.to_json()).collect::<Result<_, _>>().map_err(py_err)?;
    Ok((wrap(out.images), models))
}

/// Distorted camera stack for a truth image; returns the images and the
/// recipes as TOML.
#[pyfunction]
#[pyo3(signature = (truth, cameras = 9, seed = 0, severity = "paper-like"))]
fn synthesize(truth: PyRef<'_, PyImage>, cameras: usize, seed: u64, severity: &str) -> PyResult<(Vec<PyImage>, String)> {
    let severity: Severity = parse(severity)?;
    let s = synthesize_stack(&truth.inner, cameras, seed, severity).map_err(py_err)?;
    let recipes = recipes_to_toml(&s.recipes).map_err(py_err)?;
    Ok((wrap(s.stack), recipes))
}

#[pyfunction]
fn psnr(a: PyRef<'_, PyImage>, b: PyRef<'_, PyImage>) -> PyResult<f64> {
    Ok(psnr_db(&a.inner, &b.inner).map_err(py_err)?.db)
}

/// Windowed CIELAB difference; 0 for identical images.
#[pyfunction]
fn perceptual(a: PyRef<'_, PyImage>, b: PyRef<'_, PyImage>) -> PyResult<f64> {
    perceptual_diff(&a.inner, &b.inner).map_err(py_err)
}

#[pyfunction]
fn histogram_spread(images: Vec<PyRef<'_, PyImage>>) -> PyResult<f64> {
    Ok(spread(&stack(&images)?))
}

/// Runs the grid described by a TOML config in memory. Each row is a dict;
/// failed cells carry an "error" key instead of scores.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::from_toml(config).map_err(py_err)?;
    let table = py.detach(|| run_grid(&cfg)).map_err(py_err)?;
    table
        .rows
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("scene", &row.scene)?;
            d.set_item("repetition", row.repetition)?;
            d.set_item("calibrator", &row.calibrator)?;
            d.set_item("reference", &row.reference)?;
            match &row.outcome {
                Ok(s) => {
                    d.set_item("psnr_before", s.psnr_before)?;
                    d.set_item("psnr_after", s.psnr_after)?;
                    d.set_item("perceptual_before", s.perceptual_before)?;
                    d.set_item("perceptual_after", s.perceptual_after)?;
                    d.set_item("hist_spread_before", s.hist_spread_before)?;
                    d.set_item("hist_spread_after", s.hist_spread_after)?;
                    d.set_item("delta_psnr", s.delta_psnr)?;
                    d.set_item("delta_perceptual", s.delta_perceptual)?;
                }
                Err(e) => d.set_item("error", e)?,
            }
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pycamcal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_function(wrap_pyfunction!(consensus, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(perceptual, m)?)?;
    m.add_function(wrap_pyfunction!(histogram_spread, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("CONFIG_TEMPLATE", camcal::harness::CONFIG_TEMPLATE)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_through_core() {
        assert_eq!(parse::<ConsensusMethod>("weighted-median").unwrap(), ConsensusMethod::WeightedMedian);
        assert_eq!(parse::<CalibratorKind>("polynomial-3").unwrap(), CalibratorKind::Polynomial { degree: 3 });
        assert!(parse::<Severity>("extreme").is_err());
    }
}
