//! Python bindings. Reports come back as plain dicts and lists.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use topolab::discflow::{init_disc, run_flow, BoundaryCircle, FlowOptions, FlowScheme, FlowState};
use topolab::lagrangian::{self, AuxMetric, CellThresholds, LagrangianSection, LoopSpec};
use topolab::linespace::{self, LineChart, OrientedLine, Vec3};
use topolab::surfgeom::expr::ExprSurface;
use topolab::surfgeom::{self, Domain, Orientation, ParamSurface, SampleGrid};
use topolab::toponogov::{self, CigarProfile, ProfileGrid, SweepOptions};

create_exception!(topolab, TopolabError, PyException, "A computation was rejected; args are (kind, message).");

fn err(e: topolab::Error) -> PyErr {
    TopolabError::new_err((e.kind(), e.to_string()))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr3(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn grid(s: (f64, f64), ns: usize, t: (f64, f64), nt: usize) -> PyResult<SampleGrid> {
    if ns < 2 || nt < 2 || !(s.1 > s.0) || !(t.1 > t.0) {
        return Err(PyValueError::new_err("grid needs increasing ranges and at least 2 samples per axis"));
    }
    Ok(SampleGrid::uniform(s, ns, t, nt))
}

/// A parametric surface with a chosen unit normal.
#[pyclass(name = "Surface", frozen, skip_from_py_object, module = "topolab")]
#[derive(Clone)]
struct PySurface(ParamSurface);

#[pymethods]
impl PySurface {
    /// A builtin family, e.g. `Surface.family("paraboloid", c=2.0)`.
    #[staticmethod]
    #[pyo3(signature = (name, **params))]
    fn family(name: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let params: BTreeMap<String, f64> = params.map(|d| d.extract()).transpose()?.unwrap_or_default();
        toponogov::make_builtin(name, &params).map(Self).map_err(err)
    }

    /// Coordinates as expressions in `s` and `t` over an optional
    /// rectangle `(s0, s1, t0, t1)`.
    #[staticmethod]
    #[pyo3(signature = (x, y, z, rect=None))]
    fn expr(x: &str, y: &str, z: &str, rect: Option<(f64, f64, f64, f64)>) -> PyResult<Self> {
        let domain = rect.map_or_else(Domain::plane, |(s0, s1, t0, t1)| Domain::Rect { s0, s1, t0, t1 });
        let map = ExprSurface::parse(x, y, z, domain.scale()).map_err(err)?;
        Ok(Self(ParamSurface::new("expr", domain, Orientation::Positive, Arc::new(map))))
    }

    #[staticmethod]
    fn families() -> Vec<&'static str> {
        toponogov::FAMILIES.to_vec()
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label().to_string()
    }

    fn flipped(&self) -> Self {
        Self(self.0.flipped())
    }

    /// The same map restricted to `inner ≤ |(s, t) − (cs, ct)| ≤ outer`.
    fn with_annulus(&self, cs: f64, ct: f64, inner: f64, outer: f64) -> Self {
        Self(self.0.clone().with_domain(Domain::Annulus { cs, ct, inner, outer }))
    }

    fn point(&self, s: f64, t: f64) -> [f64; 3] {
        arr3(self.0.point(s, t))
    }

    /// `kappa1`, `kappa2`, `dirs`, `gap` and `product` at `(s, t)`.
    fn curvatures(&self, py: Python<'_>, s: f64, t: f64) -> PyResult<Py<PyAny>> {
        to_py(py, &surfgeom::principal_curvatures(&self.0, s, t).map_err(err)?)
    }

    /// Oriented normal line at `(s, t)`.
    fn normal_line(&self, s: f64, t: f64) -> PyResult<PyLine> {
        Ok(PyLine(surfgeom::normal_congruence(&self.0, s, t).map_err(err)?.line))
    }

    /// Curvatures, Lagrangian residual and tangent-plane class at `(s, t)`.
    #[pyo3(signature = (s, t, length_scale=1.0))]
    fn diagnose(&self, py: Python<'_>, s: f64, t: f64, length_scale: f64) -> PyResult<Py<PyAny>> {
        to_py(py, &lagrangian::diagnose(&self.0, s, t, &AuxMetric { length_scale }).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Surface({:?}, {:?})", self.0.label(), self.0.orientation())
    }
}

/// A directed line: unit direction and the foot point closest to the origin.
#[pyclass(name = "OrientedLine", frozen, skip_from_py_object, module = "topolab")]
#[derive(Clone, Copy)]
struct PyLine(OrientedLine);

#[pymethods]
impl PyLine {
    #[new]
    fn new(direction: [f64; 3], moment: [f64; 3]) -> PyResult<Self> {
        OrientedLine::new(vec3(direction), vec3(moment)).map(Self).map_err(err)
    }

    #[staticmethod]
    fn through(point: [f64; 3], direction: [f64; 3]) -> PyResult<Self> {
        linespace::line_from_point_dir(&vec3(point), &vec3(direction)).map(Self).map_err(err)
    }

    /// Inverse of [`PyLine::chart`].
    #[staticmethod]
    fn from_chart(xi: Complex64, eta: Complex64) -> PyResult<Self> {
        linespace::from_chart(&LineChart::new(xi, eta)).map(Self).map_err(err)
    }

    #[getter]
    fn direction(&self) -> [f64; 3] {
        arr3(self.0.direction())
    }

    #[getter]
    fn moment(&self) -> [f64; 3] {
        arr3(self.0.moment())
    }

    /// Holomorphic chart `(ξ, η)`.
    fn chart(&self) -> PyResult<(Complex64, Complex64)> {
        let c = linespace::to_chart(&self.0).map_err(err)?;
        Ok((c.xi, c.eta))
    }

    fn distance_to(&self, point: [f64; 3]) -> f64 {
        self.0.distance_to(&vec3(point))
    }

    /// Components of the neutral metric in `(Re ξ, Im ξ, Re η, Im η)`.
    fn metric(&self) -> PyResult<[[f64; 4]; 4]> {
        let c = linespace::to_chart(&self.0).map_err(err)?;
        let m = linespace::chart_metric(&c).map_err(err)?;
        Ok(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))
    }

    fn __repr__(&self) -> String {
        format!("OrientedLine(direction={:?}, moment={:?})", arr3(self.0.direction()), arr3(self.0.moment()))
    }
}

/// Normal congruence of a surface sampled on a grid.
#[pyclass(name = "Section", frozen, module = "topolab")]
struct PySection(LagrangianSection);

#[pymethods]
impl PySection {
    #[new]
    fn new(surface: &PySurface, s_range: (f64, f64), ns: usize, t_range: (f64, f64), nt: usize) -> PyResult<Self> {
        let g = grid(s_range, ns, t_range, nt)?;
        LagrangianSection::from_surface(&surface.0, &g).map(Self).map_err(err)
    }

    #[getter]
    fn length_scale(&self) -> f64 {
        self.0.aux().length_scale
    }

    fn max_residual(&self) -> PyResult<f64> {
        self.0.max_residual().map_err(err)
    }

    /// Index report of a circle in the parameter plane.
    #[pyo3(signature = (centre, radius, samples=256, reversed=false))]
    fn maslov_circle(&self, py: Python<'_>, centre: (f64, f64), radius: f64, samples: usize, reversed: bool) -> PyResult<Py<PyAny>> {
        let lp = LoopSpec::Circle { centre, radius, samples, reversed };
        to_py(py, &lagrangian::maslov_index(&self.0, &lp).map_err(err)?)
    }

    /// Index report of a closed polygon.
    #[pyo3(signature = (vertices, samples_per_edge=64))]
    fn maslov_polygon(&self, py: Python<'_>, vertices: Vec<(f64, f64)>, samples_per_edge: usize) -> PyResult<Py<PyAny>> {
        let lp = LoopSpec::Polygon { vertices, samples_per_edge };
        to_py(py, &lagrangian::maslov_index(&self.0, &lp).map_err(err)?)
    }
}

/// Grid cells flagged by the umbilic, defect and discriminant detectors.
#[pyfunction]
fn complex_point_cells(py: Python<'_>, surface: &PySurface, s_range: (f64, f64), ns: usize, t_range: (f64, f64), nt: usize) -> PyResult<Py<PyAny>> {
    let g = grid(s_range, ns, t_range, nt)?;
    let positions: Vec<Vec3> = g.points().map(|(s, t)| surface.0.point(s, t)).collect();
    let aux = AuxMetric::for_points(&positions);
    let report = py.detach(|| lagrangian::complex_point_cells(&surface.0, &g, &aux, &CellThresholds::default()));
    to_py(py, &report)
}

/// Profile conditions of the cigar meridian `r0 tanh(√((a z + δ)² − δ²))`.
#[pyfunction]
#[pyo3(signature = (r0=1.0, a=1.0, delta=0.0, squash=0.0))]
fn cigar_profile_check(py: Python<'_>, r0: f64, a: f64, delta: f64, squash: f64) -> PyResult<Py<PyAny>> {
    let report = toponogov::profile_check(&CigarProfile { r0, a, delta, squash }, &ProfileGrid::default());
    to_py(py, &report)
}

/// Running minimum of the umbilic gap over nested balls (or annuli).
#[pyfunction]
#[pyo3(signature = (surface, radii, inner_radius=0.0))]
fn gap_sweep(py: Python<'_>, surface: &PySurface, radii: Vec<f64>, inner_radius: f64) -> PyResult<Py<PyAny>> {
    let opts = SweepOptions { inner_radius, ..Default::default() };
    let result = py.detach(|| toponogov::gap_sweep(&surface.0, &radii, &opts)).map_err(err)?;
    to_py(py, &result)
}

/// Harmonic initial disc over a chart circle, evolved by `scheme`.
#[pyfunction]
#[pyo3(signature = (surface, centre, radius, n_r=16, n_theta=32, scheme="dbar_descent", dt=None, max_steps=500))]
#[allow(clippy::too_many_arguments)]
fn flow(
    py: Python<'_>,
    surface: &PySurface,
    centre: [f64; 2],
    radius: f64,
    n_r: usize,
    n_theta: usize,
    scheme: &str,
    dt: Option<f64>,
    max_steps: usize,
) -> PyResult<Py<PyAny>> {
    let scheme = match scheme {
        "dbar_descent" => FlowScheme::DbarDescent,
        "neutral_mcf" => FlowScheme::NeutralMcf,
        other => return Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
    };
    let mut opts = FlowOptions { scheme, max_steps, ..Default::default() };
    if let Some(dt) = dt {
        opts.dt = dt;
    }
    #[derive(Serialize)]
    struct Report {
        #[serde(flatten)]
        status: topolab::discflow::FlowStatus,
        initial_dbar_norm: f64,
        final_dbar_norm: f64,
        steps: usize,
        trajectory: Vec<topolab::discflow::TrajectoryRow>,
    }
    let report = py
        .detach(|| -> topolab::Result<Report> {
            let g = SampleGrid::uniform((-3.0, 3.0), 49, (-3.0, 3.0), 49);
            let section = LagrangianSection::from_surface(&surface.0, &g)?;
            let initial = init_disc(&section, &BoundaryCircle { centre, radius }, n_r, n_theta)?;
            let run = run_flow(FlowState::new(initial.mesh), &section, &opts)?;
            Ok(Report {
                initial_dbar_norm: run.trajectory[0].dbar_norm,
                final_dbar_norm: run.state.dbar_norm,
                steps: run.state.step_count,
                status: run.status,
                trajectory: run.trajectory,
            })
        })
        .map_err(err)?;
    to_py(py, &report)
}

#[pymodule(name = "topolab")]
fn topolab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", topolab::VERSION)?;
    m.add("TopolabError", m.py().get_type::<TopolabError>())?;
    m.add_class::<PySurface>()?;
    m.add_class::<PyLine>()?;
    m.add_class::<PySection>()?;
    m.add_function(wrap_pyfunction!(complex_point_cells, m)?)?;
    m.add_function(wrap_pyfunction!(cigar_profile_check, m)?)?;
    m.add_function(wrap_pyfunction!(gap_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    Ok(())
}
