use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, OpfSolution, StbaError, StbaSettings, StbaTrace};
use crate::netmodel::{at_time, LoadProfile, NetworkCase, Unit};
use crate::pf_oracle::convert_solution;
use crate::relaxbuild::ObjectiveSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonStep {
    /// 1-based timestep.
    pub t: usize,
    pub solution: Option<OpfSolution>,
    pub trace: Option<StbaTrace>,
    pub error: Option<String>,
    /// The failure was an infeasible relaxation.
    #[serde(default)]
    pub infeasible: bool,
    /// Largest VUF of the power flow at the optimised dispatch.
    pub max_vuf: f64,
    /// Largest voltage deviation from nominal per conductor `[+, o, -]`, pu.
    pub max_deviation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub steps: Vec<HorizonStep>,
    /// Sum of the relaxed objectives of the solved steps.
    pub total_objective: f64,
    pub max_vuf: f64,
    pub max_deviation: [f64; 3],
    pub certified: usize,
    pub failed: Vec<usize>,
    pub seconds: f64,
}

fn solve_step(case: &NetworkCase, profile: &LoadProfile, t: usize, obj: &ObjectiveSpec, st: &StbaSettings) -> HorizonStep {
    let mut step = HorizonStep {
        t,
        solution: None,
        trace: None,
        error: None,
        infeasible: false,
        max_vuf: f64::NAN,
        max_deviation: [f64::NAN; 3],
    };
    let outcome = at_time(case, profile, t).map_err(|e| e.to_string()).and_then(|snap| {
        run(&snap, obj, st).map_err(|e| {
            step.infeasible = matches!(e, StbaError::Infeasible { .. });
            e.to_string()
        })
    });
    match outcome {
        Ok((sol, trace)) => {
            if let Some(pf) = &sol.oracle {
                let pf = convert_solution(pf, Unit::Pu);
                step.max_vuf = pf.max_vuf();
                step.max_deviation = [0, 1, 2].map(|k| {
                    let nominal = [1.0, 0.0, -1.0][k];
                    pf.voltage.iter().map(|u| (u[k] - nominal).abs()).fold(0.0, f64::max)
                });
            }
            step.solution = Some(sol);
            step.trace = Some(trace);
        }
        Err(e) => step.error = Some(e),
    }
    step
}

/// Solves every timestep of `profile` independently (in parallel) and
/// aggregates the results in timestep order. A failed step is reported and
/// does not stop the others.
pub fn solve_horizon(
    case: &NetworkCase,
    profile: &LoadProfile,
    obj: &ObjectiveSpec,
    settings: &StbaSettings,
) -> HorizonReport {
    let t0 = Instant::now();
    let steps: Vec<HorizonStep> = (1..=profile.len())
        .into_par_iter()
        .map(|t| solve_step(case, profile, t, obj, settings))
        .collect();
    let solved = || steps.iter().filter_map(|s| s.solution.as_ref().map(|x| (s, x)));
    let total_objective = solved().map(|(_, x)| x.objective).sum();
    let max_vuf = solved().map(|(s, _)| s.max_vuf).fold(0.0, f64::max);
    let max_deviation = [0, 1, 2].map(|k| solved().map(|(s, _)| s.max_deviation[k]).fold(0.0, f64::max));
    let certified = solved().filter(|(_, x)| x.is_certified()).count();
    let failed = steps.iter().filter(|s| s.solution.is_none()).map(|s| s.t).collect();
    HorizonReport {
        total_objective,
        max_vuf,
        max_deviation,
        certified,
        failed,
        seconds: t0.elapsed().as_secs_f64(),
        steps,
    }
}
