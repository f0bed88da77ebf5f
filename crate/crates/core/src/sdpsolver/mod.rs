//! Conic solver for the assembled relaxation: linear cost, linear equality
//! rows and a product of PSD-representable blocks.
//!
//! The algorithm is a primal-dual interior-point method with Nesterov-Todd
//! scaling, infeasible start and a Mehrotra predictor-corrector, applied to
//!
//! ```text
//!     minimize    c'x
//!     subject to  A x = b
//!                 M_j(x) = F0_j + sum_i x_i F_{j,i}  PSD for every block j.
//! ```
//!
//! Marginal rows fix single moments outright; a presolve eliminates those
//! variables (folding them into the constant parts F0_j) before the
//! iterative solve. The solver is deterministic for fixed inputs.

mod ipm;
mod moments;
mod presolve;
mod sdpa;

pub use ipm::{IterStat, SdpOptions};
pub use moments::{MeasureMoments, PseudoMoments};
pub use sdpa::{export_interchange, parse_interchange};

use crate::weakform::RelaxationProgram;
use crate::{Error, Result};

/// Linear matrix block `F0 + sum_i x_i F_i`, stored as upper-triangle
/// sparse entries (row >= col).
#[derive(Debug, Clone)]
pub struct LinearMatrixBlock {
    pub size: usize,
    /// Constant part: (i, j, value) with i >= j.
    pub f0: Vec<(usize, usize, f64)>,
    /// Variable parts: (var, i, j, coef) with i >= j.
    pub entries: Vec<(usize, usize, usize, f64)>,
    pub label: String,
}

/// Self-contained conic problem, decoupled from the relaxation layout so
/// toy problems and round-trip tests can build instances directly.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub num_vars: usize,
    /// Sparse cost entries (var, coef); minimized.
    pub cost: Vec<(usize, f64)>,
    /// Equality rows: (cols, vals, rhs).
    pub rows: Vec<(Vec<usize>, Vec<f64>, f64)>,
    pub blocks: Vec<LinearMatrixBlock>,
}

impl ConicProblem {
    pub fn from_program(program: &RelaxationProgram) -> ConicProblem {
        let rows = program
            .rows
            .iter()
            .map(|r| (r.cols.clone(), r.vals.clone(), r.rhs))
            .collect();
        let blocks = program
            .cones
            .iter()
            .map(|d| {
                let mut entries = Vec::new();
                for i in 0..d.size {
                    for j in 0..=i {
                        for &(col, coef) in d.entry(i, j) {
                            entries.push((col, i, j, coef));
                        }
                    }
                }
                LinearMatrixBlock {
                    size: d.size,
                    f0: Vec::new(),
                    entries,
                    label: d.label.clone(),
                }
            })
            .collect();
        ConicProblem {
            num_vars: program.layout.total,
            cost: program.cost.clone(),
            rows,
            blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &(v, _) in &self.cost {
            if v >= self.num_vars {
                return Err(Error::Solver("cost index out of range".into()));
            }
        }
        for (cols, vals, _) in &self.rows {
            if cols.len() != vals.len() {
                return Err(Error::Solver("row cols/vals length mismatch".into()));
            }
            if cols.iter().any(|&c| c >= self.num_vars) {
                return Err(Error::Solver("row index out of range".into()));
            }
        }
        for b in &self.blocks {
            for &(v, i, j, _) in &b.entries {
                if v >= self.num_vars || i >= b.size || j > i {
                    return Err(Error::Solver(format!(
                        "bad block entry in {}: var {v}, ({i},{j})",
                        b.label
                    )));
                }
            }
            for &(i, j, _) in &b.f0 {
                if i >= b.size || j > i {
                    return Err(Error::Solver(format!("bad f0 entry in {}", b.label)));
                }
            }
        }
        Ok(())
    }
}

/// Termination status of a conic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalFailure,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }

    pub fn parse(s: &str) -> Option<SolveStatus> {
        Some(match s {
            "optimal" => SolveStatus::Optimal,
            "infeasible" => SolveStatus::Infeasible,
            "unbounded" => SolveStatus::Unbounded,
            "max-iter" => SolveStatus::MaxIter,
            "numerical-failure" => SolveStatus::NumericalFailure,
            _ => return None,
        })
    }
}

/// Residual summary at the returned iterate.
#[derive(Debug, Clone, Copy)]
pub struct Residuals {
    /// Relative equality residual ||Ax - b|| / (1 + ||b||).
    pub primal: f64,
    /// Relative dual residual ||c - A'y - M*(Z)|| / (1 + ||c||).
    pub dual: f64,
    /// Relative duality gap.
    pub gap: f64,
}

/// Solution of a conic solve: the full moment vector (in the program's
/// scaled basis), objective, status and iteration trace.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub s: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
    pub trace: Vec<IterStat>,
}

/// Backend seam: anything able to solve an assembled relaxation. The
/// built-in interior-point method implements it; an external conic solver
/// can be substituted without touching assembly code.
pub trait ConicBackend {
    fn solve_program(
        &self,
        program: &RelaxationProgram,
        options: &SdpOptions,
    ) -> Result<ConicSolution>;
}

/// The built-in interior-point backend.
#[derive(Debug, Default, Clone)]
pub struct InteriorPointSolver;

impl ConicBackend for InteriorPointSolver {
    fn solve_program(
        &self,
        program: &RelaxationProgram,
        options: &SdpOptions,
    ) -> Result<ConicSolution> {
        let conic = ConicProblem::from_program(program);
        solve_conic(&conic, options)
    }
}

/// Cone slack used for the heat relaxations. Their boundary measures are
/// pinned to low-dimensional graphs, so the feasible set has empty interior
/// and the dual is unattained without it; see `SdpOptions::cone_slack`.
pub const RELAXATION_CONE_SLACK: f64 = 1e-5;

/// Solves an assembled relaxation with the built-in backend.
pub fn solve(program: &RelaxationProgram, tol: f64, max_iter: usize) -> Result<ConicSolution> {
    let options = SdpOptions {
        tol,
        max_iter,
        cone_slack: RELAXATION_CONE_SLACK,
        ..SdpOptions::default()
    };
    InteriorPointSolver.solve_program(program, &options)
}

/// Presolve + interior point on a bare conic problem.
pub fn solve_conic(problem: &ConicProblem, options: &SdpOptions) -> Result<ConicSolution> {
    problem.validate()?;
    let reduced = presolve::presolve(problem);
    let reduced = match reduced {
        Ok(r) => r,
        Err(msg) => {
            return Ok(ConicSolution {
                s: vec![f64::NAN; problem.num_vars],
                objective: f64::NAN,
                status: SolveStatus::Infeasible,
                residuals: Residuals {
                    primal: f64::INFINITY,
                    dual: f64::INFINITY,
                    gap: f64::INFINITY,
                },
                iterations: 0,
                trace: vec![],
            })
            .map(|mut sol| {
                sol.trace.push(IterStat {
                    iter: 0,
                    primal_obj: f64::NAN,
                    dual_obj: f64::NAN,
                    primal_res: f64::INFINITY,
                    dual_res: f64::INFINITY,
                    gap: f64::INFINITY,
                    mu: f64::INFINITY,
                    feas_correction: f64::INFINITY,
                    note: Some(msg),
                });
                sol
            });
        }
    };
    let inner = ipm::solve_ipm(&reduced.problem, options, reduced.objective_shift)?;
    let s = reduced.expand(&inner.x);
    let objective: f64 = problem.cost.iter().map(|&(c, w)| w * s[c]).sum();
    Ok(ConicSolution {
        s,
        objective,
        status: inner.status,
        residuals: inner.residuals,
        iterations: inner.iterations,
        trace: inner.trace,
    })
}

#[cfg(test)]
mod tests;
