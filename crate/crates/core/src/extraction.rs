//! Recovery of an integral feedback law from pseudo-moments.
//!
//! The control is sought as u(t) = ∫₀¹ γ(t, x, y(t,x)) dx with γ a
//! polynomial kernel. Testing against t^k turns the definition into linear
//! relations between moments of the control face and interior moments:
//! one rectangular system Φ = B c per kernel form, solved in the
//! least-squares or minimum-norm sense depending on its shape. Three forms
//! are supported: the general kernel γ(t,x,y), the state-linear kernel
//! y·γ(t,x), and the semilinear kernel y·γ(t,x) + y^r·δ(t,x).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::pdesim::{FeedbackLaw, Mesh};
use crate::polybasis::{basis_size, monomial_list};
use crate::problem::BoxBounds;
use crate::sdpsolver::PseudoMoments;
use crate::weakform::{MeasureId, Var};
use crate::{Error, Result};

/// Kernel form of the control law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "form")]
pub enum ControllerForm {
    /// u = ∫ γ(t,x,y) dx, deg γ <= m.
    General { m: u32 },
    /// u = ∫ y·γ(t,x) dx, deg γ <= m.
    Linear { m: u32 },
    /// u = ∫ y·γ(t,x) + y^r·δ(t,x) dx, deg γ <= m, deg δ <= m_r.
    Semilinear { m: u32, r: u32, m_r: u32 },
}

impl ControllerForm {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerForm::General { .. } => "general",
            ControllerForm::Linear { .. } => "linear",
            ControllerForm::Semilinear { .. } => "semilinear",
        }
    }
}

/// Extraction request: kernel form plus the number of time test powers
/// (t^0 .. t^p).
#[derive(Debug, Clone, Copy)]
pub struct ControllerSpec {
    pub form: ControllerForm,
    pub p: u32,
}

impl ControllerSpec {
    /// Degree budgets: every moment queried must exist at relaxation
    /// degree d.
    pub fn validate(&self, d: u32) -> Result<()> {
        let p = self.p;
        let fail = |ineq: String| Err(Error::DegreeBudget(ineq));
        match self.form {
            ControllerForm::General { m } => {
                if m > d {
                    return fail(format!("m <= d violated: {m} > {d}"));
                }
                if p > (d - 1).min(d - m) {
                    return fail(format!(
                        "p <= min(d-1, d-m) violated: {p} > {}",
                        (d - 1).min(d - m)
                    ));
                }
            }
            ControllerForm::Linear { m } => {
                if m + 1 > d || p > d - m - 1 {
                    return fail(format!(
                        "p <= d - m - 1 violated: {p} > {}",
                        d as i64 - m as i64 - 1
                    ));
                }
            }
            ControllerForm::Semilinear { m, r, m_r } => {
                if r < 2 {
                    return fail(format!("semilinear needs r >= 2, got {r}"));
                }
                if m + 1 > d || p > d - m - 1 {
                    return fail(format!(
                        "p <= d - m - 1 violated: {p} > {}",
                        d as i64 - m as i64 - 1
                    ));
                }
                if m_r + r > d || p > d - m_r - r {
                    return fail(format!(
                        "p <= d - m_r - r violated: {p} > {}",
                        d as i64 - m_r as i64 - r as i64
                    ));
                }
            }
        }
        Ok(())
    }
}

/// How the rectangular system was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    /// Overdetermined: least-squares solution.
    LeastSquares,
    /// Underdetermined (or square): minimum Euclidean norm solution.
    MinimumNorm,
}

/// Extracted feedback law: kernel coefficients against the graded-lex
/// monomial basis, solve diagnostics, and the control clamp range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Controller {
    #[serde(flatten)]
    pub form: ControllerForm,
    pub p: u32,
    /// Kernel coefficients: basis over (t,x,y) for the general form,
    /// (t,x) otherwise.
    pub gamma: Vec<f64>,
    /// Second-kernel coefficients for the semilinear form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    pub residual: f64,
    pub solve_mode: SolveMode,
    pub rank: usize,
    /// Control values are clamped to this range when evaluated.
    pub u_min: f64,
    pub u_max: f64,
}

/// Builds the rectangular system Φ = B c for a form: Φ_k is the control
/// face moment of t^{k-1} u; row k of B collects interior moments of
/// t^{k-1} times each kernel basis function (weighted by y or y^r for the
/// state-dependent forms).
pub fn build_system(
    pseudo: &PseudoMoments,
    spec: &ControllerSpec,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    spec.validate(pseudo.degree)?;
    let p = spec.p as usize;
    let rows = p + 1;
    let miss = || Error::DegreeBudget("moment missing from dump".into());

    let mut phi = DVector::zeros(rows);
    for k in 0..rows {
        phi[k] = pseudo
            .moment_of(MeasureId::MuE, &[(Var::T, k as u32), (Var::U, 1)])
            .ok_or_else(miss)?;
    }

    let columns: Vec<(u32, u32, u32)> = match spec.form {
        ControllerForm::General { m } => monomial_list(3, m)
            .into_iter()
            .map(|mono| (mono.exponent(0), mono.exponent(1), mono.exponent(2)))
            .collect(),
        ControllerForm::Linear { m } => monomial_list(2, m)
            .into_iter()
            .map(|mono| (mono.exponent(0), mono.exponent(1), 1))
            .collect(),
        ControllerForm::Semilinear { m, r, m_r } => {
            let mut cols: Vec<(u32, u32, u32)> = monomial_list(2, m)
                .into_iter()
                .map(|mono| (mono.exponent(0), mono.exponent(1), 1))
                .collect();
            cols.extend(
                monomial_list(2, m_r)
                    .into_iter()
                    .map(|mono| (mono.exponent(0), mono.exponent(1), r)),
            );
            cols
        }
    };

    let mut b = DMatrix::zeros(rows, columns.len());
    for k in 0..rows {
        for (j, &(et, ex, ey)) in columns.iter().enumerate() {
            b[(k, j)] = pseudo
                .moment_of(
                    MeasureId::Mu,
                    &[(Var::T, k as u32 + et), (Var::X, ex), (Var::Y, ey)],
                )
                .ok_or_else(miss)?;
        }
    }
    Ok((phi, b))
}

/// Resolves the rectangular system: least squares when overdetermined,
/// minimum norm otherwise; both through the SVD pseudoinverse with a
/// relative rank cutoff of 1e-10 (pseudo-moments carry solver noise).
pub fn solve_coeffs(phi: &DVector<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, f64, SolveMode, usize)> {
    let rows = b.nrows();
    let cols = b.ncols();
    let mode = if rows > cols {
        SolveMode::LeastSquares
    } else {
        SolveMode::MinimumNorm
    };
    if b.amax() == 0.0 {
        // Zero system: consistent only with zero data (the zero-trajectory
        // case); the minimum-norm solution is the zero kernel.
        if phi.amax() > 1e-9 {
            return Err(Error::DegreeBudget(
                "system matrix B is zero but the control moments are not".into(),
            ));
        }
        return Ok((vec![0.0; cols], phi.norm(), mode, 0));
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e-10 * smax;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff)
        .count();
    let c = svd
        .solve(phi, cutoff)
        .map_err(|e| Error::Linalg(format!("pseudoinverse solve failed: {e}")))?;
    let residual = (b * &c - phi).norm();
    Ok((c.iter().copied().collect(), residual, mode, rank))
}

/// One-shot extraction from a moments dump.
pub fn extract(pseudo: &PseudoMoments, spec: &ControllerSpec) -> Result<Controller> {
    let (phi, b) = build_system(pseudo, spec)?;
    let (coeffs, residual, solve_mode, rank) = solve_coeffs(&phi, &b)?;
    let (gamma, delta) = match spec.form {
        ControllerForm::Semilinear { m, .. } => {
            let n_gamma = basis_size(2, m)?;
            (
                coeffs[..n_gamma].to_vec(),
                Some(coeffs[n_gamma..].to_vec()),
            )
        }
        _ => (coeffs, None),
    };
    let u_box = BoxBounds::new(pseudo.config.u_box[0], pseudo.config.u_box[1]);
    Ok(Controller {
        form: spec.form,
        p: spec.p,
        gamma,
        delta,
        residual,
        solve_mode,
        rank,
        u_min: u_box.min,
        u_max: u_box.max,
    })
}

impl Controller {
    /// Kernel value γ(t, x, y) (resp. y·γ + y^r·δ) at a point.
    pub fn kernel_value(&self, t: f64, x: f64, y: f64) -> f64 {
        match self.form {
            ControllerForm::General { m } => eval_basis(&self.gamma, 3, m, &[t, x, y]),
            ControllerForm::Linear { m } => y * eval_basis(&self.gamma, 2, m, &[t, x]),
            ControllerForm::Semilinear { m, r, m_r } => {
                y * eval_basis(&self.gamma, 2, m, &[t, x])
                    + y.powi(r as i32)
                        * eval_basis(self.delta.as_deref().unwrap_or(&[]), 2, m_r, &[t, x])
            }
        }
    }

    /// u(t) by composite trapezoid over the profile mesh, clamped to the
    /// admissible control range.
    pub fn evaluate(&self, t: f64, nodes: &[f64], y_profile: &[f64]) -> f64 {
        debug_assert_eq!(nodes.len(), y_profile.len());
        let mut acc = 0.0;
        for i in 0..nodes.len() - 1 {
            let h = nodes[i + 1] - nodes[i];
            let f0 = self.kernel_value(t, nodes[i], y_profile[i]);
            let f1 = self.kernel_value(t, nodes[i + 1], y_profile[i + 1]);
            acc += 0.5 * h * (f0 + f1);
        }
        acc.clamp(self.u_min, self.u_max)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(&ControlLawFile::Extracted(self.clone()))
            .map_err(|e| Error::parse("controller serialization", e.to_string()))
    }
}

fn eval_basis(coeffs: &[f64], nvars: usize, deg: u32, point: &[f64]) -> f64 {
    let basis = monomial_list(nvars, deg);
    debug_assert_eq!(basis.len(), coeffs.len());
    basis
        .iter()
        .zip(coeffs.iter())
        .map(|(mono, &c)| {
            let mut v = c;
            for (k, &e) in mono.0.iter().enumerate() {
                v *= point[k].powi(e as i32);
            }
            v
        })
        .sum()
}

impl FeedbackLaw for Controller {
    fn control(&self, t: f64, mesh: &Mesh, y_full: &[f64]) -> f64 {
        self.evaluate(t, &mesh.nodes, y_full)
    }

    fn describe(&self) -> String {
        format!("{} kernel, p = {}", self.form.name(), self.p)
    }
}

/// On-disk control law: an extracted kernel controller or an LQR gain
/// (same structured format, tagged by `kind`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ControlLawFile {
    Extracted(Controller),
    Lqr {
        /// Gain row k with u = -k . (M Y).
        gain_m: Vec<f64>,
        /// Mesh size the gain was computed on.
        h: f64,
        /// Riccati matrix, row-major, optional.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        riccati: Option<Vec<f64>>,
    },
}

impl ControlLawFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::parse("controller serialization", e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<ControlLawFile> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{paper_instance_linear, RelaxationConfig};
    use crate::sdpsolver::{ConicSolution, Residuals, SolveStatus};
    use crate::weakform::{self, GraphTrajectory};
    use approx::assert_relative_eq;

    /// Pseudo-moments of a trajectory graph, computed by quadrature on an
    /// unscaled layout (the independent oracle for extraction).
    fn quadrature_moments(traj: &GraphTrajectory, degree: u32) -> PseudoMoments {
        let mut p = paper_instance_linear();
        p.y0 = crate::polybasis::Polynomial::zero(1);
        let mut cfg = RelaxationConfig::new(degree);
        cfg.scale_vars = false;
        let program = weakform::assemble_constraints(&p, &cfg).unwrap();
        let s = weakform::trajectory_moments(&program.layout, traj, 24);
        let sol = ConicSolution {
            s,
            objective: 0.0,
            status: SolveStatus::Optimal,
            residuals: Residuals {
                primal: 0.0,
                dual: 0.0,
                gap: 0.0,
            },
            iterations: 0,
            trace: vec![],
        };
        PseudoMoments::from_solution(&p, &cfg, &program, &sol)
    }

    #[test]
    fn zero_trajectory_gives_zero_kernel() {
        let zero = |_: f64, _: f64| 0.0;
        let zero1 = |_: f64| 0.0;
        let traj = GraphTrajectory {
            y: &zero,
            z1: &zero,
            z2: &zero,
            u: &zero1,
        };
        let pm = quadrature_moments(&traj, 4);
        let spec = ControllerSpec {
            form: ControllerForm::Linear { m: 0 },
            p: 3,
        };
        let ctrl = extract(&pm, &spec).unwrap();
        assert!(ctrl.residual < 1e-12);
        assert!(ctrl.gamma.iter().all(|&c| c.abs() < 1e-9));
    }

    #[test]
    fn zero_control_consistency() {
        // y = t x(1-x), u = 0 is represented exactly by the zero kernel;
        // the minimum-norm solution keeps residual at quadrature level.
        let yf = |t: f64, x: f64| t * x * (1.0 - x);
        let z1f = |_t: f64, x: f64| x * (1.0 - x);
        let z2f = |t: f64, x: f64| t * (1.0 - 2.0 * x);
        let uf = |_t: f64| 0.0;
        let traj = GraphTrajectory {
            y: &yf,
            z1: &z1f,
            z2: &z2f,
            u: &uf,
        };
        let pm = quadrature_moments(&traj, 6);
        let spec = ControllerSpec {
            form: ControllerForm::Linear { m: 1 },
            p: 4,
        };
        let (phi, b) = build_system(&pm, &spec).unwrap();
        let (c, residual, _, _) = solve_coeffs(&phi, &b).unwrap();
        assert!(residual < 1e-9, "residual {residual}");
        assert!(c.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn rank_deficient_min_norm_solution() {
        // y = t x(1-x) with kernel 2 - 3x: u(t) = t/12, but the x-profile
        // never changes shape, so B has rank 2 and the kernel is not
        // identifiable; the minimum-norm representative is (0.4, 0, 0.2),
        // derived from the normal equations of the line
        // c0/6 + c2/12 = 1/12, c1 = 0.
        let yf = |t: f64, x: f64| t * x * (1.0 - x);
        let z1f = |_t: f64, x: f64| x * (1.0 - x);
        let z2f = |t: f64, x: f64| t * (1.0 - 2.0 * x);
        let uf = |t: f64| t / 12.0;
        let traj = GraphTrajectory {
            y: &yf,
            z1: &z1f,
            z2: &z2f,
            u: &uf,
        };
        let pm = quadrature_moments(&traj, 6);
        let spec = ControllerSpec {
            form: ControllerForm::Linear { m: 1 },
            p: 4,
        };
        let (phi, b) = build_system(&pm, &spec).unwrap();
        let (c, residual, mode, rank) = solve_coeffs(&phi, &b).unwrap();
        assert_eq!(mode, SolveMode::LeastSquares);
        assert_eq!(rank, 2, "B rank-deficient by construction");
        assert!(residual < 1e-9, "residual {residual}");
        assert_relative_eq!(c[0], 0.4, epsilon = 1e-7);
        assert_relative_eq!(c[1], 0.0, epsilon = 1e-7);
        assert_relative_eq!(c[2], 0.2, epsilon = 1e-7);
        // Minimum-norm representative is orthogonal to the null space.
        let svd = b.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let null_row = vt.row(2); // rank 2, third right vector spans null(B)
        let dot: f64 = null_row.iter().zip(c.iter()).map(|(&v, &x)| v * x).sum();
        assert!(dot.abs() < 1e-8, "min-norm not orthogonal to null space");
    }

    #[test]
    fn exact_recovery_identifiable_kernel() {
        // y = x(1-x)(1 + 3tx) makes the three kernel columns independent;
        // with kernel 2 - 3x the control is u(t) = 1/12 + t/20:
        // int y dx = 1/6 + t/4, int y x dx = 1/12 + 3t/20,
        // u = 2(1/6 + t/4) - 3(1/12 + 3t/20).
        let yf = |t: f64, x: f64| x * (1.0 - x) * (1.0 + 3.0 * t * x);
        let z1f = |_t: f64, x: f64| 3.0 * x * x * (1.0 - x);
        let z2f = |t: f64, x: f64| (1.0 - 2.0 * x) + 3.0 * t * x * (2.0 - 3.0 * x);
        let uf = |t: f64| 1.0 / 12.0 + t / 20.0;
        let traj = GraphTrajectory {
            y: &yf,
            z1: &z1f,
            z2: &z2f,
            u: &uf,
        };
        let pm = quadrature_moments(&traj, 6);
        let spec = ControllerSpec {
            form: ControllerForm::Linear { m: 1 },
            p: 4,
        };
        let (phi, b) = build_system(&pm, &spec).unwrap();
        let (c, residual, mode, rank) = solve_coeffs(&phi, &b).unwrap();
        assert_eq!(mode, SolveMode::LeastSquares);
        assert_eq!(rank, 3);
        assert!(residual < 1e-9);
        assert_relative_eq!(c[0], 2.0, epsilon = 1e-6);
        assert_relative_eq!(c[1], 0.0, epsilon = 1e-6);
        assert_relative_eq!(c[2], -3.0, epsilon = 1e-6);
    }

    #[test]
    fn trivial_square_and_underdetermined_solves() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let phi = DVector::from_vec(vec![1.0, 2.0]);
        let (c, r, mode, rank) = solve_coeffs(&phi, &b).unwrap();
        assert_eq!(c, vec![1.0, 2.0]);
        assert!(r < 1e-12);
        assert_eq!(mode, SolveMode::MinimumNorm);
        assert_eq!(rank, 2);

        let b2 = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let phi2 = DVector::from_vec(vec![2.0]);
        let (c2, _, mode2, _) = solve_coeffs(&phi2, &b2).unwrap();
        assert_eq!(mode2, SolveMode::MinimumNorm);
        assert_relative_eq!(c2[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(c2[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degree_budget_errors_name_inequality() {
        let zero = |_: f64, _: f64| 0.0;
        let zero1 = |_: f64| 0.0;
        let traj = GraphTrajectory {
            y: &zero,
            z1: &zero,
            z2: &zero,
            u: &zero1,
        };
        let pm = quadrature_moments(&traj, 4);
        let spec = ControllerSpec {
            form: ControllerForm::Linear { m: 0 },
            p: 4, // needs p <= d - m - 1 = 3
        };
        let err = extract(&pm, &spec).unwrap_err();
        match err {
            Error::DegreeBudget(msg) => assert!(msg.contains("p <= d - m - 1"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
        let spec2 = ControllerSpec {
            form: ControllerForm::Semilinear { m: 1, r: 1, m_r: 0 },
            p: 1,
        };
        assert!(matches!(
            extract(&pm, &spec2),
            Err(Error::DegreeBudget(_))
        ));
    }

    #[test]
    fn evaluate_constant_kernel() {
        let ctrl = Controller {
            form: ControllerForm::General { m: 0 },
            p: 3,
            gamma: vec![0.7],
            delta: None,
            residual: 0.0,
            solve_mode: SolveMode::MinimumNorm,
            rank: 1,
            u_min: -2.0,
            u_max: 2.0,
        };
        let nodes: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let prof = vec![0.3; nodes.len()];
        assert_relative_eq!(ctrl.evaluate(0.5, &nodes, &prof), 0.7, epsilon = 1e-12);
        // Clamping.
        let mut big = ctrl.clone();
        big.gamma = vec![5.0];
        assert_eq!(big.evaluate(0.5, &nodes, &prof), 2.0);
    }

    #[test]
    fn evaluate_linear_kernel_integral() {
        // gamma_l = 1, y = x(1-x): u = int y dx = 1/6 up to trapezoid error.
        let ctrl = Controller {
            form: ControllerForm::Linear { m: 0 },
            p: 3,
            gamma: vec![1.0],
            delta: None,
            residual: 0.0,
            solve_mode: SolveMode::MinimumNorm,
            rank: 1,
            u_min: -2.0,
            u_max: 2.0,
        };
        let nodes: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let prof: Vec<f64> = nodes.iter().map(|&x| x * (1.0 - x)).collect();
        let u = ctrl.evaluate(0.0, &nodes, &prof);
        assert!((u - 1.0 / 6.0).abs() < 2e-5, "u = {u}");
    }

    #[test]
    fn semilinear_zero_profile_gives_zero() {
        // Both kernel blocks are y-weighted.
        let ctrl = Controller {
            form: ControllerForm::Semilinear { m: 1, r: 3, m_r: 0 },
            p: 5,
            gamma: vec![-15.005, 21.374, 1.231],
            delta: Some(vec![3.369]),
            residual: 0.0,
            solve_mode: SolveMode::MinimumNorm,
            rank: 4,
            u_min: -4.0,
            u_max: 4.0,
        };
        let nodes: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let prof = vec![0.0; nodes.len()];
        assert_eq!(ctrl.evaluate(0.4, &nodes, &prof), 0.0);
    }

    #[test]
    fn evaluate_is_linear_in_coefficients() {
        let nodes: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let prof: Vec<f64> = nodes.iter().map(|&x| 0.2 * (1.0 - x) * x + 0.05).collect();
        let mk = |g: Vec<f64>| Controller {
            form: ControllerForm::General { m: 1 },
            p: 3,
            gamma: g,
            delta: None,
            residual: 0.0,
            solve_mode: SolveMode::MinimumNorm,
            rank: 1,
            u_min: -100.0,
            u_max: 100.0,
        };
        let c1 = mk(vec![0.2, -0.1, 0.3, 0.5]);
        let c2 = mk(vec![-0.4, 0.2, 0.1, -0.3]);
        let csum = mk(vec![
            0.2 - 0.4 * 2.0,
            -0.1 + 0.2 * 2.0,
            0.3 + 0.1 * 2.0,
            0.5 - 0.3 * 2.0,
        ]);
        let t = 0.3;
        let u = c1.evaluate(t, &nodes, &prof) + 2.0 * c2.evaluate(t, &nodes, &prof);
        assert_relative_eq!(u, csum.evaluate(t, &nodes, &prof), epsilon = 1e-12);
    }

    #[test]
    fn controller_file_round_trip() {
        let ctrl = Controller {
            form: ControllerForm::Semilinear { m: 1, r: 3, m_r: 0 },
            p: 5,
            gamma: vec![-15.0, 21.0, 1.2],
            delta: Some(vec![3.4]),
            residual: 1.5e-9,
            solve_mode: SolveMode::LeastSquares,
            rank: 4,
            u_min: -4.0,
            u_max: 4.0,
        };
        let dir = std::env::temp_dir().join(format!("momheat-ctrl-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sl.toml");
        ControlLawFile::Extracted(ctrl.clone()).save(&path).unwrap();
        match ControlLawFile::load(&path).unwrap() {
            ControlLawFile::Extracted(c) => {
                assert_eq!(c.gamma, ctrl.gamma);
                assert_eq!(c.delta, ctrl.delta);
                assert_eq!(c.p, ctrl.p);
                assert_eq!(c.solve_mode, ctrl.solve_mode);
            }
            _ => panic!("wrong variant"),
        }
        // LQR variant.
        let lqr = ControlLawFile::Lqr {
            gain_m: vec![0.1, 0.2, 0.3],
            h: 0.25,
            riccati: None,
        };
        let path2 = dir.join("lqr.toml");
        lqr.save(&path2).unwrap();
        match ControlLawFile::load(&path2).unwrap() {
            ControlLawFile::Lqr { gain_m, h, .. } => {
                assert_eq!(gain_m, vec![0.1, 0.2, 0.3]);
                assert_eq!(h, 0.25);
            }
            _ => panic!("wrong variant"),
        }
    }
}
