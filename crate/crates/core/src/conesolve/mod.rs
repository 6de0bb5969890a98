//! Conic solver for programs over products of zero, nonnegative and
//! second-order cones:
//!
//! ```text
//! minimise    c'x
//! subject to  A x + s = b,   s in K
//! ```
//!
//! with dual `max -b'y  s.t.  A'y + c = 0, y in K*`. The embedded backend is
//! a homogeneous self-dual interior-point method with Nesterov-Todd scaling.

mod cones;
mod ipm;
mod kkt;
mod ldl;
mod sparse;

use serde::{Deserialize, Serialize};

pub use cones::{in_cone, project, project_dual, Cone, LengthMismatch};
pub use kkt::{check_kkt, KktReport};
pub use ldl::{minimum_degree, LdlError, LdlFactor};
pub use sparse::CscMatrix;

/// Standard-form conic program.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    #[error("program has no variables")]
    Empty,
    #[error("A is {rows}x{cols} but c has {c} and b has {b} entries")]
    Shape { rows: usize, cols: usize, c: usize, b: usize },
    #[error("cone dimensions sum to {got}, A has {rows} rows")]
    ConeRows { got: usize, rows: usize },
    #[error("second-order cone {index} has dimension {dim} < 2")]
    SmallCone { index: usize, dim: usize },
    #[error("row {0} of A is empty")]
    EmptyRow(usize),
    #[error("non-finite data")]
    NotFinite,
}

impl ConicProgram {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    pub fn check(&self) -> Result<(), ProgramError> {
        let (rows, cols) = (self.a.nrows, self.a.ncols);
        if cols != self.c.len() || rows != self.b.len() {
            return Err(ProgramError::Shape {
                rows,
                cols,
                c: self.c.len(),
                b: self.b.len(),
            });
        }
        let got: usize = self.cones.iter().map(Cone::dim).sum();
        if got != rows {
            return Err(ProgramError::ConeRows { got, rows });
        }
        for (index, cone) in self.cones.iter().enumerate() {
            if let Cone::SecondOrder(dim) = *cone {
                if dim < 2 {
                    return Err(ProgramError::SmallCone { index, dim });
                }
            }
        }
        let mut seen = vec![false; rows];
        for &r in &self.a.rowval {
            seen[r] = true;
        }
        if let Some(r) = seen.iter().position(|s| !s) {
            return Err(ProgramError::EmptyRow(r));
        }
        if !(self.c.iter().chain(&self.b).chain(&self.a.nzval).all(|x| x.is_finite())) {
            return Err(ProgramError::NotFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Tolerance for infeasibility certificates.
    pub eps_infeasible: f64,
    /// Looser tolerance accepted when progress stalls short of `eps_*`.
    pub eps_reduced: f64,
    pub max_iterations: usize,
    /// Ruiz equilibration of the data before solving.
    pub equilibrate: bool,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// When set, the starting point is randomly perturbed with this seed.
    pub random_start: Option<u64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            eps_infeasible: 1e-9,
            eps_reduced: 1e-6,
            max_iterations: 200,
            equilibrate: true,
            step_fraction: 0.99,
            random_start: None,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0 && self.eps_infeasible > 0.0 && self.eps_reduced > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.max_iterations < 1 {
            return Err("max_iterations must be at least 1".into());
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err("step_fraction must lie in (0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Stalled within the reduced tolerance.
    AlmostOptimal,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal point; on `DualInfeasible` a normalised unbounded ray.
    pub x: Vec<f64>,
    /// Dual point; on `PrimalInfeasible` a normalised certificate.
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("factorisation failed: {0}")]
    Factor(#[from] LdlError),
    #[error("no program loaded")]
    NotLoaded,
}

/// Swappable solver backend.
pub trait ConicBackend {
    fn load(&mut self, prog: &ConicProgram) -> Result<(), SolveError>;
    fn solve(&mut self, settings: &SolverSettings) -> Result<SolveResult, SolveError>;
}

/// The in-crate interior-point backend.
#[derive(Debug, Default)]
pub struct EmbeddedSolver {
    prog: Option<ConicProgram>,
}

impl ConicBackend for EmbeddedSolver {
    fn load(&mut self, prog: &ConicProgram) -> Result<(), SolveError> {
        prog.check()?;
        self.prog = Some(prog.clone());
        Ok(())
    }

    fn solve(&mut self, settings: &SolverSettings) -> Result<SolveResult, SolveError> {
        let prog = self.prog.take().ok_or(SolveError::NotLoaded)?;
        settings.validate().map_err(SolveError::Settings)?;
        ipm::solve(&prog, settings)
    }
}

/// Solves `prog` with the embedded backend.
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<SolveResult, SolveError> {
    if prog.n_vars() == 0 {
        return Err(ProgramError::Empty.into());
    }
    let mut s = EmbeddedSolver::default();
    s.load(prog)?;
    s.solve(settings)
}
