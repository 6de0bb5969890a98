//! Python bindings. Cases are passed as `builtin:<name>` or as case-file JSON
//! text; reports come back as JSON strings in the same schema the CLI writes.

use bdcdn::netmodel::{self, at_time, parse_case, NetworkCase};
use bdcdn::pf_oracle::solve_pf;
use bdcdn::relaxbuild::ObjectiveSpec;
use bdcdn::report::{horizon_report, opf_report, pf_report, to_json};
use bdcdn::stba::{run, solve_horizon, StbaError, StbaSettings};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load(case: &str) -> PyResult<NetworkCase> {
    match case.strip_prefix("builtin:") {
        Some(name) => netmodel::builtin(name),
        None => parse_case(case),
    }
    .map_err(value_error)
}

fn at_snapshot(case: &NetworkCase, snapshot: Option<&str>) -> PyResult<NetworkCase> {
    let Some(sel) = snapshot else { return Ok(case.clone()) };
    let profile = case.profile.as_ref().ok_or_else(|| value_error("case has no load profile"))?;
    let t = match sel {
        "extreme" => profile.extreme.ok_or_else(|| value_error("profile marks no extreme timestep"))?,
        s => s.parse().map_err(|_| value_error(format!("snapshot `{s}`: expected a timestep or `extreme`")))?,
    };
    at_time(case, profile, t).map_err(value_error)
}

fn objective(name: &str) -> PyResult<ObjectiveSpec> {
    match name {
        "dg-sizing" => Ok(ObjectiveSpec::dg_sizing()),
        "operation" => Ok(ObjectiveSpec::operation()),
        other => Err(value_error(format!("unknown objective `{other}`"))),
    }
}

fn settings(epsilon: f64, step: f64, max_outer: usize) -> StbaSettings {
    StbaSettings {
        epsilon,
        step,
        max_outer,
        ..StbaSettings::default()
    }
}

#[pyfunction]
fn builtin_names() -> Vec<&'static str> {
    netmodel::builtin_names().to_vec()
}

/// Diagnostics of a case, one string each; empty when the case is valid.
#[pyfunction]
fn validate(case: &str) -> PyResult<Vec<String>> {
    match case.strip_prefix("builtin:") {
        Some(_) => Ok(netmodel::validate(&load(case)?).iter().map(|d| d.to_string()).collect()),
        None => match parse_case(case) {
            Ok(_) => Ok(Vec::new()),
            Err(netmodel::CaseError::Semantic(ds)) => Ok(ds.iter().map(|d| d.to_string()).collect()),
            Err(e) => Err(value_error(e)),
        },
    }
}

#[pyfunction]
#[pyo3(signature = (case, snapshot=None))]
fn power_flow(py: Python<'_>, case: &str, snapshot: Option<&str>) -> PyResult<String> {
    let snap = at_snapshot(&load(case)?, snapshot)?;
    let pf = py.detach(|| solve_pf(&snap, None)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(to_json(&pf_report(&snap, snapshot, &pf)))
}

/// Optimises one snapshot. Raises `ValueError` on bad input and
/// `RuntimeError` when the relaxation is infeasible or the solver fails;
/// a run that hits `max_outer` still returns its report.
#[pyfunction]
#[pyo3(signature = (case, snapshot=None, objective="dg-sizing", epsilon=1e-6, step=0.02, max_outer=20))]
fn opf(py: Python<'_>, case: &str, snapshot: Option<&str>, objective: &str, epsilon: f64, step: f64, max_outer: usize) -> PyResult<String> {
    let snap = at_snapshot(&load(case)?, snapshot)?;
    let obj = self::objective(objective)?;
    let st = settings(epsilon, step, max_outer);
    let (sol, trace) = py.detach(|| run(&snap, &obj, &st)).map_err(|e| match e {
        StbaError::Settings(_) => value_error(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    })?;
    let baseline = solve_pf(&snap, None).ok();
    Ok(to_json(&opf_report(&snap, snapshot, &obj, &sol, &trace, baseline.as_ref())))
}

/// Optimises every timestep of the case's load profile.
#[pyfunction]
#[pyo3(signature = (case, objective="operation", epsilon=1e-3, step=0.02, max_outer=20))]
fn horizon(py: Python<'_>, case: &str, objective: &str, epsilon: f64, step: f64, max_outer: usize) -> PyResult<String> {
    let case = load(case)?;
    let profile = case.profile.clone().ok_or_else(|| value_error("case has no load profile"))?;
    let obj = self::objective(objective)?;
    let st = settings(epsilon, step, max_outer);
    st.validate().map_err(value_error)?;
    let h = py.detach(|| solve_horizon(&case, &profile, &obj, &st));
    Ok(to_json(&horizon_report(&case, &obj, &h)))
}

#[pymodule]
fn bdcdn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(builtin_names, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(power_flow, m)?)?;
    m.add_function(wrap_pyfunction!(opf, m)?)?;
    m.add_function(wrap_pyfunction!(horizon, m)?)?;
    Ok(())
}
