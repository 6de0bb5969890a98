use std::fs;
use std::path::Path;

use bdcdn::netmodel::{at_time, builtin, parse_case, parse_profile_csv, to_per_unit, validate as case_diagnostics, CaseError, LoadProfile, NetworkCase};
use bdcdn::pf_oracle::solve_pf;
use bdcdn::relaxbuild::{build_mcsocp, dump_program, initial_bounds, BuiltProgram, ObjectiveSpec};
use bdcdn::report::{self, horizon_csv, horizon_report, node_csv, opf_report, pf_report, to_json, trace_csv};
use bdcdn::stba::{run, solve_horizon, StbaError, StbaSettings, StbaStatus, StbaTrace};

use crate::*;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn load_case(spec: &str) -> Result<NetworkCase, Failure> {
    let parsed = match spec.strip_prefix("builtin:") {
        Some(name) => builtin(name),
        None => parse_case(&read_text(Path::new(spec))?),
    };
    parsed.map_err(|e| match e {
        CaseError::Syntax { .. } => Failure::new(EXIT_PARSE, format!("{spec}: {e}")),
        CaseError::Semantic(ds) => {
            for d in &ds {
                eprintln!("{d}");
            }
            Failure::new(EXIT_DIAGNOSTICS, format!("{spec}: {} diagnostic(s)", ds.len()))
        }
    })
}

fn load_profile(args: &RunArgs, case: &NetworkCase) -> Result<Option<LoadProfile>, Failure> {
    match &args.profile {
        Some(path) => parse_profile_csv(&read_text(path)?)
            .map(Some)
            .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display()))),
        None => Ok(case.profile.clone()),
    }
}

/// The case at the requested snapshot and the snapshot's label.
fn snapshot(args: &RunArgs, case: &NetworkCase) -> Result<(NetworkCase, Option<String>), Failure> {
    let Some(sel) = &args.snapshot else {
        return Ok((case.clone(), None));
    };
    let profile = load_profile(args, case)?.ok_or_else(|| Failure::new(EXIT_PARSE, "--snapshot needs a load profile"))?;
    let t = if sel == "extreme" {
        profile.extreme.ok_or_else(|| Failure::new(EXIT_PARSE, "profile marks no extreme timestep"))?
    } else {
        sel.parse::<usize>()
            .map_err(|_| Failure::new(EXIT_PARSE, format!("--snapshot: expected a timestep or `extreme`, got `{sel}`")))?
    };
    let snap = at_time(case, &profile, t).map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    Ok((snap, Some(sel.clone())))
}

fn objective(args: &RunArgs, default: Objective) -> ObjectiveSpec {
    let mut obj = match args.objective.unwrap_or(default) {
        Objective::DgSizing => ObjectiveSpec::dg_sizing(),
        Objective::Operation => ObjectiveSpec::operation(),
    };
    let p = &args.prices;
    for (slot, value) in [
        (&mut obj.alpha, p.alpha),
        (&mut obj.beta, p.beta),
        (&mut obj.gamma, p.gamma),
        (&mut obj.c_g, p.cg),
        (&mut obj.c_loss, p.closs),
        (&mut obj.a_vb, p.avb),
        (&mut obj.b_vb, p.bvb),
        (&mut obj.c_vb, p.cvb),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    obj
}

fn settings(args: &RunArgs) -> StbaSettings {
    let mut st = StbaSettings::default();
    if let Some(e) = args.epsilon {
        st.epsilon = e;
    }
    if let Some(d) = args.step {
        st.step = d;
    }
    if let Some(m) = args.max_outer {
        st.max_outer = m;
    }
    st
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn stba_failure(e: StbaError) -> Failure {
    let code = match e {
        StbaError::Infeasible { .. } => EXIT_INFEASIBLE,
        StbaError::Settings(_) => EXIT_PARSE,
        _ => EXIT_UNCONVERGED,
    };
    Failure::new(code, e.to_string())
}

pub fn validate(args: &CaseArgs) -> Result<(), Failure> {
    let case = load_case(&args.case)?;
    // bundled cases skip parse_case, so check them here too
    let ds = case_diagnostics(&case);
    for d in &ds {
        println!("{d}");
    }
    if ds.is_empty() {
        println!("{}: ok", case.name);
        Ok(())
    } else {
        Err(Failure::new(EXIT_DIAGNOSTICS, format!("{} diagnostic(s)", ds.len())))
    }
}

pub fn pf(args: &RunArgs) -> Result<(), Failure> {
    let case = load_case(&args.case.case)?;
    let (snap, label) = snapshot(args, &case)?;
    let sol = solve_pf(&snap, None).map_err(|e| Failure::new(EXIT_PF, e.to_string()))?;
    let rep = pf_report(&snap, label.as_deref(), &sol);
    let text = match args.format {
        Format::Json => to_json(&rep),
        Format::Csv => node_csv(&rep),
    };
    emit(args.out.as_deref(), &text)
}

pub fn opf(args: &RunArgs) -> Result<(), Failure> {
    let case = load_case(&args.case.case)?;
    let (snap, label) = snapshot(args, &case)?;
    let obj = objective(args, Objective::DgSizing);
    let baseline = solve_pf(&snap, None).ok();
    let (sol, trace) = run(&snap, &obj, &settings(args)).map_err(stba_failure)?;
    let rep = opf_report(&snap, label.as_deref(), &obj, &sol, &trace, baseline.as_ref());
    for w in &sol.warnings {
        eprintln!("warning: {w}");
    }
    let text = match args.format {
        Format::Json => to_json(&rep),
        Format::Csv => node_csv(&rep),
    };
    emit(args.out.as_deref(), &text)?;
    match sol.status {
        StbaStatus::Converged => Ok(()),
        StbaStatus::IterationLimit => Err(Failure::new(
            EXIT_UNCONVERGED,
            format!("lambda {:.3e} above epsilon after {} iterations", sol.lambda.value(), trace.entries.len()),
        )),
    }
}

pub fn horizon(args: &RunArgs) -> Result<(), Failure> {
    let case = load_case(&args.case.case)?;
    let profile = load_profile(args, &case)?.ok_or_else(|| Failure::new(EXIT_PARSE, "horizon needs a load profile"))?;
    let obj = objective(args, Objective::Operation);
    let st = settings(args);
    st.validate().map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let h = solve_horizon(&case, &profile, &obj, &st);
    let rep = horizon_report(&case, &obj, &h);
    let text = match args.format {
        Format::Json => to_json(&rep),
        Format::Csv => horizon_csv(&rep),
    };
    emit(args.out.as_deref(), &text)?;

    let limited: Vec<usize> = h
        .steps
        .iter()
        .filter(|s| s.solution.as_ref().is_some_and(|x| x.status == StbaStatus::IterationLimit))
        .map(|s| s.t)
        .collect();
    if !h.failed.is_empty() {
        eprintln!("failed timesteps:");
        for s in h.steps.iter().filter(|s| s.error.is_some()) {
            eprintln!("  t={:<3} {}", s.t, s.error.as_deref().unwrap_or_default());
        }
    }
    if h.steps.iter().any(|s| s.infeasible) {
        Err(Failure::new(EXIT_INFEASIBLE, format!("infeasible timesteps among {:?}", h.failed)))
    } else if !h.failed.is_empty() {
        Err(Failure::new(EXIT_UNCONVERGED, format!("timesteps {:?} failed", h.failed)))
    } else if !limited.is_empty() {
        Err(Failure::new(EXIT_UNCONVERGED, format!("timesteps {limited:?} hit the iteration limit")))
    } else {
        Ok(())
    }
}

pub fn export(args: &ExportArgs) -> Result<(), Failure> {
    let a = &args.run;
    let dir = a.out.as_deref().ok_or_else(|| Failure::new(EXIT_PARSE, "export needs --out <directory>"))?;
    let case = load_case(&a.case.case)?;
    let (snap, _) = snapshot(a, &case)?;
    let obj = objective(a, Objective::DgSizing);
    let st = settings(a);
    let pu = to_per_unit(&snap).map_err(|e| Failure::new(EXIT_DIAGNOSTICS, e.to_string()))?;
    let build = |bounds| build_mcsocp(&pu, bounds, &obj, &st.build).map_err(|e| Failure::new(EXIT_INFEASIBLE, e.to_string()));

    let (built, trace): (BuiltProgram, StbaTrace) = if args.solve {
        let (sol, trace) = run(&snap, &obj, &st).map_err(stba_failure)?;
        (build(&sol.bounds)?, trace)
    } else {
        (build(&initial_bounds(&pu))?, StbaTrace::default())
    };

    let io = |e: std::io::Error| Failure::new(EXIT_IO, format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join("program.dump"), dump_program(&built)).map_err(io)?;
    fs::write(dir.join("census.json"), report::to_json(&built.census())).map_err(io)?;
    fs::write(dir.join("trace.csv"), trace_csv(&trace)).map_err(io)?;
    Ok(())
}
