use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use vorstab::elliptic::{CirculationVector, EllipticContext};
use vorstab::euler::{run_with, Probes, SimConfig};
use vorstab::experiments::{run_experiment as run_exp, ExperimentKind, ExperimentSpec};
use vorstab::rearrangement::{burton_ascent as ascent, AscentOptions};
use vorstab::{bessel, euler, fourier, perturb, rearrangement, spectra, Error, GridRef, ScalarField};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidGrid(_)
        | Error::GridMismatch(_)
        | Error::InvalidArgument(_)
        | Error::Format(_)
        | Error::Json(_)
        | Error::Membership(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for vorstab::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Cell-centred polar grid on the disk (`a = 0`) or the annulus `a < r < 1`.
#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: GridRef,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(a: f64, nr: usize, ntheta: usize) -> PyResult<Self> {
        Ok(Self {
            inner: vorstab::make_grid(a, nr, ntheta).py()?,
        })
    }
    #[getter]
    fn a(&self) -> f64 {
        self.inner.a()
    }
    #[getter]
    fn nr(&self) -> usize {
        self.inner.nr()
    }
    #[getter]
    fn ntheta(&self) -> usize {
        self.inner.ntheta()
    }
    fn r_centers(&self) -> Vec<f64> {
        self.inner.r_centers().to_vec()
    }
    fn theta_centers(&self) -> Vec<f64> {
        self.inner.theta_centers().to_vec()
    }
    fn total_measure(&self) -> f64 {
        self.inner.total_measure()
    }
    fn __len__(&self) -> usize {
        self.inner.len()
    }
    fn __repr__(&self) -> String {
        format!("Grid(a={}, nr={}, ntheta={})", self.inner.a(), self.inner.nr(), self.inner.ntheta())
    }
}

/// Scalar field stored ring by ring (`index = j * ntheta + k`).
#[pyclass(name = "Field", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: ScalarField,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: ScalarField::from_values(&grid.inner, values).py()?,
        })
    }
    #[staticmethod]
    fn constant(grid: &PyGrid, value: f64) -> Self {
        Self {
            inner: ScalarField::constant(&grid.inner, value),
        }
    }
    /// `J0(j01 r)`.
    #[staticmethod]
    fn bessel_radial(grid: &PyGrid) -> Self {
        let k = bessel::table().j01;
        Self {
            inner: ScalarField::radial(&grid.inner, |r| bessel::j0(k * r)),
        }
    }
    /// `J1(j11 r) cos(theta)`.
    #[staticmethod]
    fn dipole(grid: &PyGrid) -> Self {
        let k = bessel::table().j11;
        Self {
            inner: ScalarField::from_fn(&grid.inner, |r, t| bessel::j1(k * r) * t.cos()),
        }
    }
    #[staticmethod]
    fn rotating_wave(grid: &PyGrid, n: u32, t: f64) -> PyResult<Self> {
        Ok(Self {
            inner: euler::rotating_wave(&grid.inner, n, t).py()?,
        })
    }
    /// Seeded mean-free Fourier-Bessel field of the given `L^2` norm.
    #[staticmethod]
    fn perturbation(grid: &PyGrid, seed: u64, amplitude: f64) -> PyResult<Self> {
        Ok(Self {
            inner: perturb::fourier_bessel(&grid.inner, seed, amplitude).py()?,
        })
    }
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.grid().clone(),
        }
    }
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }
    fn __len__(&self) -> usize {
        self.inner.values().len()
    }
    fn __add__(&self, other: &PyField) -> PyResult<Self> {
        self.inner.check_grid(&other.inner).py()?;
        Ok(Self {
            inner: &self.inner + &other.inner,
        })
    }
    fn __sub__(&self, other: &PyField) -> PyResult<Self> {
        self.inner.check_grid(&other.inner).py()?;
        Ok(Self {
            inner: &self.inner - &other.inner,
        })
    }
    fn scale(&self, s: f64) -> Self {
        Self {
            inner: self.inner.scale(s),
        }
    }
    fn rotate(&self, alpha: f64) -> Self {
        Self {
            inner: fourier::rotate(&self.inner, alpha),
        }
    }
    fn integrate(&self) -> f64 {
        self.inner.integrate()
    }
    fn mean(&self) -> f64 {
        self.inner.mean()
    }
    fn inner_product(&self, other: &PyField) -> PyResult<f64> {
        self.inner.check_grid(&other.inner).py()?;
        Ok(self.inner.inner(&other.inner))
    }
    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }
    #[pyo3(signature = (other, p = 2.0))]
    fn lp_distance(&self, other: &PyField, p: f64) -> PyResult<f64> {
        self.inner.lp_distance(&other.inner, p).py()
    }
    fn moment_of_inertia(&self) -> f64 {
        self.inner.moment_of_inertia()
    }
    /// Minimum over rotations of `reference` of the distance, and the angle.
    #[pyo3(signature = (reference, p = 2.0))]
    fn orbit_distance(&self, reference: &PyField, p: f64) -> PyResult<(f64, f64)> {
        euler::orbit_distance(&self.inner, &reference.inner, p).py()
    }
    #[pyo3(signature = (other, tol = 1e-10))]
    fn equimeasurable(&self, other: &PyField, tol: f64) -> PyResult<bool> {
        rearrangement::equimeasurable(&self.inner, &other.inner, tol).py()
    }
}

/// Elliptic solver state for one grid: Green operator with circulation
/// correction, harmonic measures and energies.
#[pyclass(name = "Context", frozen)]
struct PyContext {
    inner: EllipticContext,
}

#[pymethods]
impl PyContext {
    #[new]
    fn new(grid: &PyGrid) -> PyResult<Self> {
        Ok(Self {
            inner: EllipticContext::new(&grid.inner).py()?,
        })
    }
    fn p_matrix(&self) -> Vec<Vec<f64>> {
        let p = self.inner.p_matrix();
        (0..p.nrows()).map(|i| (0..p.ncols()).map(|j| p[(i, j)]).collect()).collect()
    }
    fn apply_p(&self, v: &PyField) -> PyResult<PyField> {
        Ok(PyField {
            inner: self.inner.apply_p(&v.inner).py()?,
        })
    }
    /// Stream function of the vorticity-circulation pair `(v, gamma)`.
    #[pyo3(signature = (v, gamma = Vec::new()))]
    fn solve_vcp(&self, v: &PyField, gamma: Vec<f64>) -> PyResult<PyField> {
        Ok(PyField {
            inner: self.inner.solve_vcp(&v.inner, &CirculationVector(gamma)).py()?,
        })
    }
    #[pyo3(signature = (v, gamma = Vec::new()))]
    fn energy(&self, v: &PyField, gamma: Vec<f64>) -> PyResult<f64> {
        self.inner.energy(&v.inner, &CirculationVector(gamma)).py()
    }
    fn dirichlet_spectrum(&self, count: usize) -> PyResult<(Vec<f64>, Vec<usize>)> {
        let r = spectra::dirichlet_spectrum(&self.inner, count).py()?;
        Ok((r.eigenvalues, r.multiplicities))
    }
    fn constrained_spectrum(&self, count: usize) -> PyResult<(Vec<f64>, Vec<usize>)> {
        let r = spectra::constrained_spectrum(&self.inner, count).py()?;
        Ok((r.eigenvalues, r.multiplicities))
    }
    fn lambda_cap1(&self) -> PyResult<f64> {
        spectra::lambda_cap1(&self.inner).py()
    }
    /// Integrates from `omega0` with a JSON `SimConfig`; returns the final
    /// vorticity and the time-series CSV.
    #[pyo3(signature = (config_json, omega0, reference = None))]
    fn simulate(&self, py: Python<'_>, config_json: &str, omega0: &PyField, reference: Option<&PyField>) -> PyResult<(PyField, String)> {
        let cfg: SimConfig = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let probes = Probes {
            reference: reference.map(|r| r.inner.clone()),
            ..Probes::default()
        };
        let w0 = omega0.inner.clone();
        let out = py.detach(|| run_with(&self.inner, &cfg, &w0, &probes)).py()?;
        Ok((
            PyField {
                inner: out.final_state.omega,
            },
            out.series.to_csv(),
        ))
    }
    /// Energy ascent over the rearrangement class of `seed`; returns the
    /// energies, the final field (split cells averaged) and the largest
    /// class defect of the iterates.
    #[pyo3(signature = (seed, gamma = Vec::new(), max_iters = 500))]
    fn burton_ascent(&self, py: Python<'_>, seed: &PyField, gamma: Vec<f64>, max_iters: usize) -> PyResult<(Vec<f64>, PyField, f64)> {
        let opts = AscentOptions {
            max_iters,
            fp_tol: None,
        };
        let s = seed.inner.clone();
        let rep = py.detach(|| ascent(&self.inner, &s, &CirculationVector(gamma), &opts)).py()?;
        let defect = rep.max_class_defect();
        Ok((rep.energies, PyField { inner: rep.final_field }, defect))
    }
}

#[pyfunction]
fn bessel_j(n: u32, x: f64) -> PyResult<f64> {
    bessel::bessel_j(n, x).py()
}

#[pyfunction]
fn bessel_zeros(n: u32, count: usize) -> PyResult<Vec<f64>> {
    bessel::zeros(n, count).py()
}

/// Runs a named experiment (`stability`, `rotating-wave`, `structural`,
/// `rigidity`) with optional JSON overrides and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (name, overrides = None))]
fn run_experiment(py: Python<'_>, name: &str, overrides: Option<&str>) -> PyResult<String> {
    let kind: ExperimentKind =
        serde_json::from_value(serde_json::Value::String(name.into())).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let spec = match overrides {
        Some(text) => {
            let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
            v["name"] = serde_json::Value::String(name.into());
            ExperimentSpec::from_json(&v.to_string()).py()?
        }
        None => ExperimentSpec::preset(kind),
    };
    let report = py.detach(|| run_exp(&spec)).py()?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "vorstab")]
fn vorstab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyContext>()?;
    m.add_function(wrap_pyfunction!(bessel_j, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_zeros, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
