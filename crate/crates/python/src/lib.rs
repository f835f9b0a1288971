//! Python module `polaron`: grids, dielectric tensors, Pekar and N-body minimization,
//! crystal ground states, defect energies and the macroscopic checks.
//!
//! Option structs and results cross the boundary as plain dicts.

use std::sync::Arc;

use num_complex::Complex64;
use polaron_core::crystal::{scf_ground_state, CrystalSpec};
use polaron_core::defect::{decoupling_test, defect_energy, ChargeBlob, DefectDensity, DefectOptions, DefectProblem};
use polaron_core::fields::{coulomb_energy_free, ComplexField, CoulombKernel, Coupling, ScalarField};
use polaron_core::macroscopic::{
    cell_eigenproblem, dipole_probes, extract_dielectric, macrolimit_check, minimize_coupled, pekar_limit_check,
    CoupledOptions, DielectricOptions,
};
use polaron_core::multipolaron::{binding_check, cluster_state, minimize_npolaron, NPolaronOptions};
use polaron_core::optimize::DescentOptions;
use polaron_core::pekar::{box_center, initial_orbital, Orbital, PekarFunctional};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

pyo3::create_exception!(polaron, NonConvergence, PyRuntimeError);

fn err(e: polaron_core::Error) -> PyErr {
    use polaron_core::Error::*;
    match e {
        Spreading { .. } | Divergence(_) | Metallic(_) | ScfNotConverged { .. } | GapClosed(_) | FitResidual { .. } | Rescaling(_)
        | Stagnation(_) => NonConvergence::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned + Default>(py: Python<'_>, obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    match obj {
        None => Ok(T::default()),
        Some(o) => parse(py, o),
    }
}

fn parse<T: DeserializeOwned>(py: Python<'_>, o: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (o,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(Arc<polaron_core::fields::Grid>);

#[pymethods]
impl PyGrid {
    /// Cubic box [−L/2, L/2)^d with n points per axis.
    #[new]
    fn new(dim: usize, length: f64, points: usize) -> PyResult<Self> {
        polaron_core::fields::Grid::cubic_box(dim, length, points).map(PyGrid).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    #[getter]
    fn lengths(&self) -> Vec<f64> {
        self.0.lengths()
    }

    #[getter]
    fn dv(&self) -> f64 {
        self.0.dv()
    }

    /// Grid points as [x, y, z] triples, row-major.
    fn points(&self) -> Vec<[f64; 3]> {
        self.0.points()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid(shape={:?}, lengths={:?})", self.0.shape(), self.0.lengths())
    }
}

#[pyclass(name = "DielectricTensor", frozen, from_py_object)]
#[derive(Clone)]
struct PyDielectric(polaron_core::DielectricTensor);

#[pymethods]
impl PyDielectric {
    #[new]
    fn new(matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        polaron_core::DielectricTensor::new(matrix).map(PyDielectric).map_err(err)
    }

    #[staticmethod]
    fn scalar(dim: usize, eps: f64) -> PyResult<Self> {
        polaron_core::DielectricTensor::scalar(dim, eps).map(PyDielectric).map_err(err)
    }

    #[staticmethod]
    fn identity(dim: usize) -> Self {
        PyDielectric(polaron_core::DielectricTensor::identity(dim))
    }

    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        self.0.matrix().to_vec()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues()
    }

    /// 1 − 1/ε for a scalar tensor.
    fn alpha(&self) -> Option<f64> {
        self.0.alpha()
    }

    fn __repr__(&self) -> String {
        format!("DielectricTensor({:?})", self.0.matrix())
    }
}

#[pyclass(name = "CrystalGroundState", frozen)]
struct PyGround(polaron_core::crystal::CrystalGroundState);

#[pymethods]
impl PyGround {
    #[getter]
    fn gap(&self) -> Option<f64> {
        self.0.gap
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.0.energy
    }

    #[getter]
    fn fermi_level(&self) -> Option<f64> {
        self.0.fermi_level
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    fn density(&self) -> Vec<f64> {
        self.0.density().values().to_vec()
    }

    fn potential(&self) -> Vec<f64> {
        self.0.potential().values().to_vec()
    }

    /// Summary dict: energies, residual history, gap and the spec.
    fn report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0)
    }
}

fn coupling(epsilon: Option<&PyDielectric>, alpha: Option<f64>) -> PyResult<Coupling> {
    match (epsilon, alpha) {
        (Some(e), None) => Ok(Coupling::Dielectric(e.0.clone())),
        (None, Some(a)) => Ok(Coupling::Isotropic { alpha: a }),
        _ => Err(PyValueError::new_err("give exactly one of epsilon and alpha")),
    }
}

fn blobs(py: Python<'_>, o: &Bound<'_, PyAny>) -> PyResult<DefectDensity> {
    Ok(DefectDensity::Blobs(parse::<Vec<ChargeBlob>>(py, o)?))
}

/// Minimizes the Pekar functional; returns (result dict, orbital values).
#[pyfunction]
#[pyo3(signature = (grid, epsilon=None, alpha=None, width=None, descent=None))]
fn minimize_pekar(
    py: Python<'_>,
    grid: &PyGrid,
    epsilon: Option<&PyDielectric>,
    alpha: Option<f64>,
    width: Option<f64>,
    descent: Option<&Bound<'_, PyAny>>,
) -> PyResult<(Py<PyAny>, Vec<Complex64>)> {
    let c = coupling(epsilon, alpha)?;
    let opts: DescentOptions = from_py(py, descent)?;
    let g = grid.0.clone();
    let init = match width {
        Some(w) => Orbital::gaussian(&g, w, box_center(&g)),
        None => initial_orbital(&g, &c),
    };
    let f = PekarFunctional::new(&g, c, CoulombKernel::default_for(&g)).map_err(err)?;
    let (res, psi) = py.detach(|| f.minimize(&init, &opts)).map_err(err)?;
    Ok((to_py(py, &res)?, psi.values().to_vec()))
}

/// Pekar energy of a given orbital, normalized on entry.
#[pyfunction]
#[pyo3(signature = (grid, values, epsilon=None, alpha=None))]
fn pekar_energy(
    py: Python<'_>,
    grid: &PyGrid,
    values: Vec<Complex64>,
    epsilon: Option<&PyDielectric>,
    alpha: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let c = coupling(epsilon, alpha)?;
    let field = ComplexField::new(grid.0.clone(), values).map_err(err)?;
    let psi = Orbital::normalized(field).map_err(err)?;
    let f = PekarFunctional::new(&grid.0, c, CoulombKernel::default_for(&grid.0)).map_err(err)?;
    to_py(py, &f.evaluate(&psi).map_err(err)?)
}

/// D(f, g) = ∫∫ f(x)g(y)/|x−y| for real densities sampled on a 3-D grid.
#[pyfunction]
fn coulomb_energy(grid: &PyGrid, f: Vec<f64>, g: Vec<f64>) -> PyResult<f64> {
    let f = ScalarField::new(grid.0.clone(), f).map_err(err)?;
    let g = ScalarField::new(grid.0.clone(), g).map_err(err)?;
    Ok(coulomb_energy_free(&f, &g).map_err(err)?.value)
}

/// Minimizes the N-body functional from a Gaussian cluster.
#[pyfunction]
#[pyo3(signature = (grid, particles, epsilon=None, alpha=None, spacing=0.0, options=None))]
fn minimize_multipolaron(
    py: Python<'_>,
    grid: &PyGrid,
    particles: usize,
    epsilon: Option<&PyDielectric>,
    alpha: Option<f64>,
    spacing: f64,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let c = coupling(epsilon, alpha)?;
    let opts: NPolaronOptions = from_py(py, options)?;
    let base = initial_orbital(&grid.0, &c);
    let init = cluster_state(&base, particles, spacing, opts.symmetry).map_err(err)?;
    let (res, _) = py.detach(|| minimize_npolaron(&init, &c, &opts)).map_err(err)?;
    to_py(py, &res)
}

/// Strict-binding check E(N) < min_k E(k) + E(N−k).
#[pyfunction]
#[pyo3(signature = (grid, particles, epsilon=None, alpha=None, options=None))]
fn check_binding(
    py: Python<'_>,
    grid: &PyGrid,
    particles: usize,
    epsilon: Option<&PyDielectric>,
    alpha: Option<f64>,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let c = coupling(epsilon, alpha)?;
    let opts: NPolaronOptions = from_py(py, options)?;
    let r = py.detach(|| binding_check(&grid.0, particles, &c, &opts)).map_err(err)?;
    to_py(py, &r)
}

/// Self-consistent reduced Hartree-Fock ground state of a crystal spec dict.
#[pyfunction]
fn crystal_ground_state(py: Python<'_>, spec: &Bound<'_, PyAny>) -> PyResult<PyGround> {
    let spec: CrystalSpec = parse(py, spec)?;
    spec.validate().map_err(err)?;
    py.detach(|| scf_ground_state(&spec)).map(PyGround).map_err(err)
}

/// Defect energy of a list of charge blobs along a supercell ladder.
#[pyfunction]
#[pyo3(signature = (ground, blob_list, ladder, options=None))]
fn defect(
    py: Python<'_>,
    ground: &PyGround,
    blob_list: &Bound<'_, PyAny>,
    ladder: Vec<usize>,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let options: DefectOptions = from_py(py, options)?;
    let problem = DefectProblem { ground: &ground.0, density: blobs(py, blob_list)?, ladder, options };
    let r = py.detach(|| defect_energy(&problem)).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn decoupling(
    py: Python<'_>,
    ground: &PyGround,
    first: &Bound<'_, PyAny>,
    second: &Bound<'_, PyAny>,
    separations: Vec<usize>,
    supercell: usize,
) -> PyResult<Py<PyAny>> {
    let (a, b) = (blobs(py, first)?, blobs(py, second)?);
    let t = py.detach(|| decoupling_test(&ground.0, &a, &b, &separations, supercell)).map_err(err)?;
    to_py(py, &t)
}

/// Macroscopic ε of a crystal; returns (tensor, ladder of fits).
#[pyfunction]
#[pyo3(signature = (ground, options=None))]
fn dielectric(py: Python<'_>, ground: &PyGround, options: Option<&Bound<'_, PyAny>>) -> PyResult<(PyDielectric, Py<PyAny>)> {
    let opts: DielectricOptions = from_py(py, options)?;
    let probes = dipole_probes(ground.0.spec.dim(), opts.probe_width, opts.probe_dipole);
    let ex = py.detach(|| extract_dielectric(&ground.0, &probes, &opts)).map_err(err)?;
    Ok((PyDielectric(ex.tensor.clone()), to_py(py, &ex.ladder)?))
}

/// Periodic cell eigenproblem at mass m.
#[pyfunction]
fn cell_eigen(py: Python<'_>, ground: &PyGround, m: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &cell_eigenproblem(ground.0.potential(), m).map_err(err)?)
}

/// Gap between the rescaled crystal energy of a Gaussian ψ and its Pekar term along the ladder.
#[pyfunction]
#[pyo3(signature = (ground, epsilon, m_ladder, box_cells, width, points, charge=1.0))]
#[allow(clippy::too_many_arguments)]
fn macrolimit(
    py: Python<'_>,
    ground: &PyGround,
    epsilon: &PyDielectric,
    m_ladder: Vec<f64>,
    box_cells: f64,
    width: f64,
    points: usize,
    charge: f64,
) -> PyResult<Py<PyAny>> {
    let g = &ground.0;
    let grid = polaron_core::fields::Grid::on_cell(g.spec.cell.scaled(box_cells), vec![points; g.spec.dim()]).map_err(err)?;
    let psi = Orbital::gaussian(&grid, width, box_center(&grid));
    let r = py.detach(|| macrolimit_check(&psi, g, &epsilon.0, &m_ladder, box_cells, charge)).map_err(err)?;
    to_py(py, &r)
}

/// Minimizes the coupled crystal-polaron energy at mass m.
#[pyfunction]
#[pyo3(signature = (ground, particles, m, options=None))]
fn coupled(py: Python<'_>, ground: &PyGround, particles: usize, m: f64, options: Option<&Bound<'_, PyAny>>) -> PyResult<Py<PyAny>> {
    let opts: CoupledOptions = from_py(py, options)?;
    let r = py.detach(|| minimize_coupled(&ground.0, particles, m, &opts)).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (ground, particles, m_ladder, epsilon, options=None))]
fn pekar_limit(
    py: Python<'_>,
    ground: &PyGround,
    particles: usize,
    m_ladder: Vec<f64>,
    epsilon: &PyDielectric,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let opts: CoupledOptions = from_py(py, options)?;
    let r = py.detach(|| pekar_limit_check(&ground.0, particles, &m_ladder, &epsilon.0, &opts)).map_err(err)?;
    to_py(py, &r)
}

/// Validates a config dict (or JSON text) and returns its hash.
#[pyfunction]
fn config_hash(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<String> {
    let text: String = match config.extract::<String>() {
        Ok(s) => s,
        Err(_) => py.import("json")?.call_method1("dumps", (config,))?.extract()?,
    };
    polaron_cli::parse_config(&text).map(|c| c.hash()).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs a config like `polaron run` and returns the record dict.
#[pyfunction]
fn run(py: Python<'_>, config: &Bound<'_, PyAny>, out: std::path::PathBuf) -> PyResult<Py<PyAny>> {
    let text: String = match config.extract::<String>() {
        Ok(s) => s,
        Err(_) => py.import("json")?.call_method1("dumps", (config,))?.extract()?,
    };
    let cfg = polaron_cli::parse_config(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let rec = py
        .detach(|| polaron_cli::run_scenario(&cfg, &out))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &rec)
}

#[pymodule]
fn polaron(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyDielectric>()?;
    m.add_class::<PyGround>()?;
    m.add("NonConvergence", m.py().get_type::<NonConvergence>())?;
    m.add_function(wrap_pyfunction!(minimize_pekar, m)?)?;
    m.add_function(wrap_pyfunction!(pekar_energy, m)?)?;
    m.add_function(wrap_pyfunction!(coulomb_energy, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_multipolaron, m)?)?;
    m.add_function(wrap_pyfunction!(check_binding, m)?)?;
    m.add_function(wrap_pyfunction!(crystal_ground_state, m)?)?;
    m.add_function(wrap_pyfunction!(defect, m)?)?;
    m.add_function(wrap_pyfunction!(decoupling, m)?)?;
    m.add_function(wrap_pyfunction!(dielectric, m)?)?;
    m.add_function(wrap_pyfunction!(cell_eigen, m)?)?;
    m.add_function(wrap_pyfunction!(macrolimit, m)?)?;
    m.add_function(wrap_pyfunction!(coupled, m)?)?;
    m.add_function(wrap_pyfunction!(pekar_limit, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
