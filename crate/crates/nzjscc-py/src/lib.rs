//! Python bindings for the nzjscc core: profiles, bounds, schemes, the
//! analog-power optimizer, and the Monte Carlo simulator.

use nzjscc::bounds::{self, QStar};
use nzjscc::optimizer;
use nzjscc::profiles;
use nzjscc::schemes;
use nzjscc::simulator;
use pyo3::exceptions::{PyTypeError, PyValueError};
use pyo3::prelude::*;

fn err(e: nzjscc::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Target fidelity as a function of quality.
#[pyclass(frozen)]
struct Profile {
    inner: profiles::Profile,
}

#[pymethods]
impl Profile {
    /// `alpha q / (1 + alpha q)`.
    #[staticmethod]
    fn order1(alpha: f64) -> PyResult<Self> {
        Ok(Profile { inner: profiles::Profile::order1(alpha).map_err(err)? })
    }

    /// `alpha q^2 / (1 + alpha q^2)`.
    #[staticmethod]
    fn order2(alpha: f64) -> PyResult<Self> {
        Ok(Profile { inner: profiles::Profile::order2(alpha).map_err(err)? })
    }

    /// Piecewise-linear interpolation of `(q, f)` points in log quality.
    #[staticmethod]
    fn tabulated(points: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Profile { inner: profiles::Profile::tabulated(points).map_err(err)? })
    }

    /// Loads a tabulated profile from a `q,f` CSV file.
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        Ok(Profile { inner: profiles::Profile::from_csv_path(path.as_ref()).map_err(err)? })
    }

    fn eval(&self, q: f64) -> PyResult<f64> {
        self.inner.eval(q).map_err(err)
    }

    #[getter]
    fn alpha(&self) -> Option<f64> {
        self.inner.alpha()
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            profiles::Profile::RationalOrder1 { alpha } => format!("Profile.order1({alpha})"),
            profiles::Profile::RationalOrder2 { alpha } => format!("Profile.order2({alpha})"),
            profiles::Profile::Tabulated { table } => {
                format!("Profile.tabulated(<{} points>)", table.len())
            }
        }
    }
}

/// Log- or linear-spaced quality evaluation points.
#[pyclass(frozen)]
struct QualityGrid {
    inner: profiles::QualityGrid,
}

#[pymethods]
impl QualityGrid {
    #[new]
    #[pyo3(signature = (q_min=1e-4, q_max=1e4, points=2000, spacing="log"))]
    fn new(q_min: f64, q_max: f64, points: usize, spacing: &str) -> PyResult<Self> {
        let spacing = match spacing {
            "log" => profiles::Spacing::Log,
            "linear" => profiles::Spacing::Linear,
            other => {
                return Err(PyValueError::new_err(format!(
                    "spacing must be 'log' or 'linear', got {other:?}"
                )))
            }
        };
        Ok(QualityGrid {
            inner: profiles::QualityGrid::new(q_min, q_max, points, spacing).map_err(err)?,
        })
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values()
    }

    fn __repr__(&self) -> String {
        format!(
            "QualityGrid({}, {}, {})",
            self.inner.q_min, self.inner.q_max, self.inner.points
        )
    }
}

/// Analog layer plus one digital layer decodable from quality `q_1` up.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct HybridParams {
    inner: schemes::HybridParams,
}

#[pymethods]
impl HybridParams {
    #[new]
    fn new(p_a: f64, p_1: f64, q_1: f64) -> PyResult<Self> {
        Ok(HybridParams { inner: schemes::HybridParams::new(p_a, p_1, q_1).map_err(err)? })
    }

    #[getter]
    fn p_a(&self) -> f64 {
        self.inner.p_a
    }

    #[getter]
    fn p_1(&self) -> f64 {
        self.inner.p_1
    }

    #[getter]
    fn q_1(&self) -> f64 {
        self.inner.q_1
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    fn __repr__(&self) -> String {
        format!(
            "HybridParams({}, {}, {})",
            self.inner.p_a, self.inner.p_1, self.inner.q_1
        )
    }
}

/// Analog layer plus digital layers as `(power, threshold)` pairs with
/// strictly increasing thresholds.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct LayeredParams {
    inner: schemes::LayeredParams,
}

#[pymethods]
impl LayeredParams {
    #[new]
    fn new(p_a: f64, layers: Vec<(f64, f64)>) -> PyResult<Self> {
        let (powers, thresholds) = layers.into_iter().unzip();
        Ok(LayeredParams {
            inner: schemes::LayeredParams::new(p_a, powers, thresholds).map_err(err)?,
        })
    }

    #[getter]
    fn p_a(&self) -> f64 {
        self.inner.p_a
    }

    #[getter]
    fn layers(&self) -> Vec<(f64, f64)> {
        self.inner
            .layer_powers
            .iter()
            .copied()
            .zip(self.inner.thresholds.iter().copied())
            .collect()
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    fn __repr__(&self) -> String {
        format!("LayeredParams({}, {:?})", self.inner.p_a, self.layers())
    }
}

/// Block analog encoder `K` (m x n, row-major nested lists) with residual
/// covariance `C_E1` and digital power `p_1`.
#[pyclass(frozen)]
struct MatrixScheme {
    inner: schemes::MatrixScheme,
}

fn to_dmatrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<nalgebra::DMatrix<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{what} must have at least one row")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what} rows have unequal lengths")));
    }
    Ok(nalgebra::DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

#[pymethods]
impl MatrixScheme {
    #[new]
    fn new(k: Vec<Vec<f64>>, c_e1: Vec<Vec<f64>>, p_1: f64) -> PyResult<Self> {
        let k = to_dmatrix(k, "K")?;
        let c = to_dmatrix(c_e1, "C_E1")?;
        Ok(MatrixScheme { inner: schemes::MatrixScheme::new(k, c, p_1).map_err(err)? })
    }

    /// `K` a single row of `sqrt(p_a / n)` entries and `C_E1 = beta I`.
    #[staticmethod]
    fn uniform_row(n: usize, p_a: f64, beta: f64, p_1: f64) -> PyResult<Self> {
        Ok(MatrixScheme {
            inner: schemes::MatrixScheme::uniform_row(n, p_a, beta, p_1).map_err(err)?,
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn p_1(&self) -> f64 {
        self.inner.p_1
    }

    fn analog_power(&self) -> f64 {
        self.inner.analog_power()
    }

    fn __repr__(&self) -> String {
        format!("MatrixScheme(<{}x{}>, p_1={})", self.inner.m, self.inner.n, self.inner.p_1)
    }
}

/// Result of the minimum-power lower bound.
#[pyclass(frozen, get_all)]
struct LowerBound {
    p_lower: f64,
    /// Maximizing quality when the supremum is interior, else None.
    q_star: Option<f64>,
    /// "zero" or "infinity" when the supremum is only approached in a
    /// limit, else None.
    limit: Option<String>,
    attained: bool,
}

#[pymethods]
impl LowerBound {
    fn __repr__(&self) -> String {
        format!(
            "LowerBound(p_lower={}, q_star={:?}, limit={:?}, attained={})",
            self.p_lower, self.q_star, self.limit, self.attained
        )
    }
}

/// Result of a compliance check.
#[pyclass(frozen, get_all)]
struct Feasibility {
    feasible: bool,
    worst_q: f64,
    margin: f64,
}

#[pymethods]
impl Feasibility {
    fn __repr__(&self) -> String {
        format!(
            "Feasibility(feasible={}, worst_q={}, margin={})",
            self.feasible, self.worst_q, self.margin
        )
    }
}

/// Result of the upper-bound search.
#[pyclass(frozen, get_all)]
struct UpperBound {
    p_total: f64,
    p_a: f64,
    p_1: f64,
    q_1: f64,
    alpha: f64,
}

#[pymethods]
impl UpperBound {
    fn __repr__(&self) -> String {
        format!(
            "UpperBound(p_total={}, p_a={}, p_1={}, q_1={}, alpha={})",
            self.p_total, self.p_a, self.p_1, self.q_1, self.alpha
        )
    }
}

/// Smallest power any scheme needs to meet `profile`, maximizing
/// `(exp(F(q)) - 1) / q` over the grid.
#[pyfunction]
fn lower_bound_pmin(profile: &Profile, grid: &QualityGrid) -> PyResult<LowerBound> {
    let r = bounds::lower_bound_pmin(&profile.inner, &grid.inner).map_err(err)?;
    let (q_star, limit) = match r.q_star {
        QStar::AtZero => (None, Some("zero".to_string())),
        QStar::AtInfinity => (None, Some("infinity".to_string())),
        QStar::At(q) => (Some(q), None),
    };
    Ok(LowerBound { p_lower: r.p_lower, q_star, limit, attained: r.attained })
}

#[pyfunction]
fn uncoded_fidelity(p: f64, q: f64) -> PyResult<f64> {
    schemes::uncoded_fidelity(p, q).map_err(err)
}

#[pyfunction]
fn uncoded_distortion(p: f64, n_noise: f64, kappa: f64) -> PyResult<f64> {
    schemes::uncoded_distortion(p, n_noise, kappa).map_err(err)
}

#[pyfunction]
fn hybrid_fidelity(params: &HybridParams, q: f64) -> PyResult<f64> {
    schemes::hybrid_fidelity(&params.inner, q).map_err(err)
}

#[pyfunction]
fn multilayer_fidelity(params: &LayeredParams, q: f64) -> PyResult<f64> {
    schemes::multilayer_fidelity(&params.inner, q).map_err(err)
}

#[pyfunction]
fn hybrid_distortion_below(params: &HybridParams, q: f64, kappa: f64) -> PyResult<f64> {
    schemes::hybrid_distortion_below(&params.inner, q, kappa).map_err(err)
}

#[pyfunction]
fn hybrid_distortion_above(params: &HybridParams, q: f64, kappa: f64) -> PyResult<f64> {
    schemes::hybrid_distortion_above(&params.inner, q, kappa).map_err(err)
}

/// Root in (0, 1) of the per-block quantizer shrink polynomial.
#[pyfunction]
fn beta_root(n: u32, params: &HybridParams) -> PyResult<f64> {
    schemes::beta_root(n, &params.inner).map_err(err)
}

#[pyfunction]
fn beta_poly(n: u32, params: &HybridParams, beta: f64) -> f64 {
    schemes::beta_poly(n, &params.inner, beta)
}

#[pyfunction]
fn matrix_analog_distortion(scheme: &MatrixScheme, noise: f64) -> PyResult<f64> {
    schemes::matrix_analog_distortion(&scheme.inner, noise).map_err(err)
}

#[pyfunction]
fn matrix_refinement_distortion(scheme: &MatrixScheme, noise: f64) -> PyResult<f64> {
    schemes::matrix_refinement_distortion(&scheme.inner, noise).map_err(err)
}

#[pyfunction]
fn dpc_rate_constraint(scheme: &MatrixScheme, n1: f64) -> PyResult<f64> {
    schemes::dpc_rate_constraint(&scheme.inner, n1).map_err(err)
}

/// Worst scaled margin of a hybrid or layered scheme against a profile.
#[pyfunction]
fn check_compliance(
    scheme: &Bound<'_, PyAny>,
    profile: &Profile,
    grid: &QualityGrid,
) -> PyResult<Feasibility> {
    let params = if let Ok(h) = scheme.extract::<HybridParams>() {
        optimizer::SchemeParams::Hybrid(h.inner)
    } else if let Ok(l) = scheme.extract::<LayeredParams>() {
        optimizer::SchemeParams::Layered(l.inner)
    } else {
        return Err(PyTypeError::new_err("scheme must be HybridParams or LayeredParams"));
    };
    let r = optimizer::check_compliance(&params, &profile.inner, &grid.inner).map_err(err)?;
    Ok(Feasibility { feasible: r.feasible, worst_q: r.worst_q, margin: r.margin })
}

#[pyfunction]
fn min_pa_closed_form(alpha: f64, p_1: f64, q_1: f64) -> PyResult<f64> {
    optimizer::min_pa_closed_form(alpha, p_1, q_1).map_err(err)
}

#[pyfunction]
fn min_pa_exact(alpha: f64, p_1: f64, q_1: f64, grid: &QualityGrid) -> PyResult<f64> {
    optimizer::min_pa_exact(alpha, p_1, q_1, &grid.inner).map_err(err)
}

/// Cheapest compliant hybrid scheme for the order-two profile; `pa_rule`
/// is "closed" or "exact".
#[pyfunction]
#[pyo3(signature = (alpha, pa_rule="closed"))]
fn optimize_upper_bound(alpha: f64, pa_rule: &str) -> PyResult<UpperBound> {
    let rule = match pa_rule {
        "closed" => optimizer::PaRule::ClosedForm,
        "exact" => optimizer::PaRule::Exact,
        other => {
            return Err(PyValueError::new_err(format!(
                "pa_rule must be 'closed' or 'exact', got {other:?}"
            )))
        }
    };
    let r = optimizer::optimize_upper_bound(alpha, rule, &optimizer::GridSpec::default())
        .map_err(err)?;
    Ok(UpperBound {
        p_total: r.p_total,
        p_a: r.params.p_a,
        p_1: r.params.p_1,
        q_1: r.params.q_1,
        alpha: r.alpha,
    })
}

/// `20 log10(x)`.
#[pyfunction]
fn to_db(x: f64) -> f64 {
    optimizer::to_db(x)
}

/// Monte Carlo mean distortion and standard error of uncoded transmission.
#[pyfunction]
#[pyo3(signature = (n, power, p_1, noise, trials, seed=0))]
fn simulate_uncoded(
    n: u32,
    power: f64,
    p_1: f64,
    noise: f64,
    trials: u64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let cfg = simulator::SimConfig::new(n, power, p_1, noise, trials, seed).map_err(err)?;
    let r = simulator::simulate_uncoded(&cfg).map_err(err)?;
    Ok((r.mean_distortion, r.std_error))
}

/// Monte Carlo mean distortion and standard error of a matrix scheme's
/// analog stage.
#[pyfunction]
#[pyo3(signature = (scheme, noise, trials, seed=0))]
fn simulate_matrix_analog(
    scheme: &MatrixScheme,
    noise: f64,
    trials: u64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let r = simulator::simulate_matrix_analog(&scheme.inner, noise, trials, seed).map_err(err)?;
    Ok((r.mean_distortion, r.std_error))
}

#[pymodule]
fn nzjscc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Profile>()?;
    m.add_class::<QualityGrid>()?;
    m.add_class::<HybridParams>()?;
    m.add_class::<LayeredParams>()?;
    m.add_class::<MatrixScheme>()?;
    m.add_class::<LowerBound>()?;
    m.add_class::<Feasibility>()?;
    m.add_class::<UpperBound>()?;
    m.add_function(wrap_pyfunction!(lower_bound_pmin, m)?)?;
    m.add_function(wrap_pyfunction!(uncoded_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(uncoded_distortion, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(multilayer_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_distortion_below, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_distortion_above, m)?)?;
    m.add_function(wrap_pyfunction!(beta_root, m)?)?;
    m.add_function(wrap_pyfunction!(beta_poly, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_analog_distortion, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_refinement_distortion, m)?)?;
    m.add_function(wrap_pyfunction!(dpc_rate_constraint, m)?)?;
    m.add_function(wrap_pyfunction!(check_compliance, m)?)?;
    m.add_function(wrap_pyfunction!(min_pa_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(min_pa_exact, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(to_db, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_uncoded, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_matrix_analog, m)?)?;
    Ok(())
}
