use fock_dimers::cli::{self, CliOptions, Command, Pipeline};
use fock_dimers::config::parse_config;
use fock_dimers::output::to_json;
use fock_dimers::ronkin::{Ronkin, RonkinOptions};
use fock_dimers::theta::theta;
use fock_dimers::weights::Site;
use fock_dimers::{Error, C64};
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

/// A validated run configuration with its surface and weight model.
#[pyclass(unsendable)]
struct Model {
    pipeline: Pipeline,
}

#[pymethods]
impl Model {
    /// Build from the text of a TOML configuration.
    #[new]
    fn new(toml: &str) -> PyResult<Self> {
        let config = parse_config(toml).map_err(py_err)?;
        config.validate().map_err(py_err)?;
        Ok(Model { pipeline: Pipeline::new(config).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let config = cli::load_config(&path).map_err(py_err)?;
        config.validate().map_err(py_err)?;
        Ok(Model { pipeline: Pipeline::new(config).map_err(py_err)? })
    }

    #[getter]
    fn genus(&self) -> usize {
        self.pipeline.surface().genus()
    }

    fn period_matrix(&self) -> PyResult<Vec<Vec<Complex64>>> {
        let (b, _) = self.pipeline.surface().period_matrix().map_err(py_err)?;
        let m = b.matrix();
        Ok((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
    }

    /// Riemann theta of this surface at `z`.
    fn theta(&self, z: Vec<Complex64>) -> PyResult<Complex64> {
        let (b, _) = self.pipeline.surface().period_matrix().map_err(py_err)?;
        if z.len() != b.genus() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", b.genus(), z.len())));
        }
        theta(&z, &b, self.pipeline.config.theta_tol).map_err(py_err)
    }

    /// Amoeba point `(x1, x2)` and polygon slope `(s1, s2)` at `z` in the upper half plane.
    fn amoeba(&self, z: Complex64) -> PyResult<((f64, f64), (f64, f64))> {
        let a = self.pipeline.surface().amoeba_map(&self.pipeline.harnack, z).map_err(py_err)?;
        Ok(((a.x1, a.x2), (a.s1, a.s2)))
    }

    /// Ronkin function data at `z` as a dict.
    fn ronkin<'py>(&self, py: Python<'py>, z: Complex64) -> PyResult<Bound<'py, PyDict>> {
        let opts = RonkinOptions { quad_tol: self.pipeline.config.quad_tol, ..Default::default() };
        let r = Ronkin::new(self.pipeline.surface(), &self.pipeline.harnack, opts).map_err(py_err)?;
        let s = r.sample(C64::new(z.re, z.im)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("x", (s.x1, s.x2))?;
        d.set_item("y", (s.y1, s.y2))?;
        d.set_item("slope", (s.s1, s.s2))?;
        d.set_item("h", s.h)?;
        d.set_item("rho", s.rho)?;
        d.set_item("sigma", s.sigma)?;
        d.set_item("r", s.r)?;
        d.set_item("hessian", s.hess)?;
        Ok(d)
    }

    /// Face weight at the face centred on lattice site `(x, y)`; `x + y` must be odd.
    fn face_weight(&self, x: i64, y: i64) -> PyResult<f64> {
        self.pipeline.model.face_weight(Site::new(x, y)).map_err(py_err)
    }

    /// Validation checks as the JSON summary text.
    fn validate(&self, require_periodic: bool) -> PyResult<String> {
        let (_, checks) = self.pipeline.checks(require_periodic).map_err(py_err)?;
        serde_json::to_string(&checks).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Run a CLI command; returns `(exit_code, summary_json)`.
#[pyfunction]
#[pyo3(signature = (command, config=None, out=None, seed=None, require_periodic=false))]
fn run(command: &str, config: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>, require_periodic: bool) -> PyResult<(i32, String)> {
    let cmd: Command = command.parse().map_err(py_err)?;
    let config = config.as_deref().map(cli::load_config).transpose().map_err(py_err)?;
    let outcome = cli::run(cmd, config, &CliOptions { out, seed, require_periodic }).map_err(py_err)?;
    Ok((outcome.code, to_json(&outcome.summary).map_err(py_err)?))
}

#[pymodule]
pub fn fock_dimers_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
