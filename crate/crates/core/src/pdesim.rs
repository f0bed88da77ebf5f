//! Reference simulator: P1 Lagrange finite elements on a uniform grid and
//! BDF2 time stepping, for open-loop, moment-controller and LQR closed-loop
//! runs with cost and blow-up reporting.
//!
//! The Dirichlet control enters by boundary elimination: the column of the
//! operator associated with the x = 1 node moves to the right-hand side,
//! giving the semi-discrete form `M Y' = A Y + B U` with a fixed vector B.
//! The cubic reaction is evaluated nodally and integrated with the
//! consistent mass matrix inside a fully implicit step solved by Newton;
//! the feedback is evaluated on the previously accepted profile, an O(dt)
//! lag against the implicit state.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::problem::HeatControlProblem;
use crate::{Error, Result};

/// Uniform mesh on [0, 1]; interior unknowns exclude both boundary nodes.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub h: f64,
    pub n_interior: usize,
    pub nodes: Vec<f64>,
}

impl Mesh {
    pub fn uniform(h: f64) -> Result<Mesh> {
        if !(h > 0.0 && h < 0.5) {
            return Err(Error::InvalidProblem(format!("mesh size {h} out of range")));
        }
        let n_cells = (1.0 / h).round() as usize;
        if ((n_cells as f64) * h - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProblem(format!(
                "mesh size {h} does not divide the unit interval"
            )));
        }
        let nodes: Vec<f64> = (0..=n_cells).map(|i| i as f64 * h).collect();
        Ok(Mesh {
            h,
            n_interior: n_cells - 1,
            nodes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Tridiagonal matrix with Thomas solve; everything assembled here is
/// diagonally dominant.
#[derive(Debug, Clone)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn new(n: usize) -> Tridiag {
        Tridiag {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            y[i] = v;
        }
        y
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if denom.abs() < 1e-300 {
            return Err(Error::Linalg("tridiagonal pivot underflow".into()));
        }
        if n > 1 {
            c[0] = self.upper[0] / denom;
        }
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i - 1] * c[i - 1];
            if denom.abs() < 1e-300 || !denom.is_finite() {
                return Err(Error::Linalg("tridiagonal pivot underflow".into()));
            }
            if i + 1 < n {
                c[i] = self.upper[i] / denom;
            }
            d[i] = (rhs[i] - self.lower[i - 1] * d[i - 1]) / denom;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }

    pub fn scaled_add(&self, factor: f64, other: &Tridiag) -> Tridiag {
        let n = self.n();
        let mut out = self.clone();
        for i in 0..n {
            out.diag[i] += factor * other.diag[i];
        }
        for i in 0..n - 1 {
            out.lower[i] += factor * other.lower[i];
            out.upper[i] += factor * other.upper[i];
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Tridiag {
        Tridiag {
            lower: self.lower.iter().map(|v| v * factor).collect(),
            diag: self.diag.iter().map(|v| v * factor).collect(),
            upper: self.upper.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i + 1, i)] = self.lower[i];
                m[(i, i + 1)] = self.upper[i];
            }
        }
        m
    }
}

/// Assembled FEM operators on the interior unknowns.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    /// P1 mass matrix, (h/6)[1 4 1].
    pub mass: Tridiag,
    /// P1 stiffness matrix, (1/h)[-1 2 -1].
    pub stiffness: Tridiag,
    /// Operator A = -lambda K + alpha M.
    pub op: Tridiag,
    /// Control vector B from boundary elimination at x = 1: the only
    /// nonzero entry sits at the last interior node.
    pub control: Vec<f64>,
}

pub fn assemble_fem(problem: &HeatControlProblem, mesh: &Mesh) -> FemMatrices {
    let n = mesh.n_interior;
    let h = mesh.h;
    let mut mass = Tridiag::new(n);
    let mut stiffness = Tridiag::new(n);
    for i in 0..n {
        mass.diag[i] = 4.0 * h / 6.0;
        stiffness.diag[i] = 2.0 / h;
    }
    for i in 0..n - 1 {
        mass.lower[i] = h / 6.0;
        mass.upper[i] = h / 6.0;
        stiffness.lower[i] = -1.0 / h;
        stiffness.upper[i] = -1.0 / h;
    }
    let op = stiffness.scale(-problem.lambda).scaled_add(problem.alpha, &mass);
    let mut control = vec![0.0; n];
    // Column of -lambda K + alpha M for the x = 1 boundary node, moved to
    // the right-hand side: the stiffness couples with -1/h, the mass with h/6.
    control[n - 1] = problem.lambda / h + problem.alpha * h / 6.0;
    FemMatrices {
        mass,
        stiffness,
        op,
        control,
    }
}

/// Generalized eigenvalues of the pencil (A, M) by Cholesky reduction to a
/// dense symmetric problem, sorted ascending.
pub fn fem_generalized_eigenvalues(problem: &HeatControlProblem, mesh: &Mesh) -> Result<Vec<f64>> {
    let fem = assemble_fem(problem, mesh);
    let m = fem.mass.to_dense();
    let a = fem.op.to_dense();
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Linalg("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .try_inverse()
        .ok_or_else(|| Error::Linalg("mass factor inversion failed".into()))?;
    let sym = &linv * a * linv.transpose();
    let mut eig: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eig)
}

/// Anything able to produce the boundary control from the current state
/// profile (values on all mesh nodes, boundary included).
pub trait FeedbackLaw {
    fn control(&self, t: f64, mesh: &Mesh, y_full: &[f64]) -> f64;
    fn describe(&self) -> String {
        "feedback".into()
    }
}

/// The zero control.
#[derive(Debug, Clone, Default)]
pub struct ZeroControl;

impl FeedbackLaw for ZeroControl {
    fn control(&self, _t: f64, _mesh: &Mesh, _y: &[f64]) -> f64 {
        0.0
    }
    fn describe(&self) -> String {
        "zero".into()
    }
}

/// A prescribed open-loop signal.
pub struct SignalControl<F: Fn(f64) -> f64>(pub F);

impl<F: Fn(f64) -> f64> FeedbackLaw for SignalControl<F> {
    fn control(&self, t: f64, _mesh: &Mesh, _y: &[f64]) -> f64 {
        (self.0)(t)
    }
    fn describe(&self) -> String {
        "signal".into()
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    /// Keep integrating past the horizon until the per-step cost increment
    /// drops below this threshold (None: stop at the horizon).
    pub extend_until_increment: Option<f64>,
    /// Hard cap when extending.
    pub max_time: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Sup-norm threshold declaring numerical blow-up.
    pub blowup_threshold: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1e-4,
            horizon: 1.0,
            extend_until_increment: None,
            max_time: 20.0,
            newton_tol: 1e-10,
            newton_max_iter: 20,
            blowup_threshold: 1e3,
        }
    }
}

/// Time-stepping record. Snapshots include the boundary values: 0 at x = 0
/// and the applied control at x = 1.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<f64>,
    /// Running cost up to each stored time.
    pub running_cost: Vec<f64>,
    pub cost: f64,
    pub blowup: Option<f64>,
}

impl SimTrace {
    /// Sup norm of the first snapshot at or after time t.
    pub fn sup_norm_at(&self, t: f64) -> f64 {
        let idx = self
            .times
            .iter()
            .position(|&tt| tt >= t - 1e-12)
            .unwrap_or(self.times.len() - 1);
        self.states[idx].iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn initial_sup_norm(&self) -> f64 {
        self.states[0].iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn final_sup_norm(&self) -> f64 {
        self.states
            .last()
            .map(|s| s.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
            .unwrap_or(0.0)
    }

    /// Minimum over [t_from, end] of the profile sup norm.
    pub fn min_sup_norm_from(&self, t_from: f64) -> f64 {
        self.times
            .iter()
            .zip(self.states.iter())
            .filter(|(&t, _)| t >= t_from)
            .map(|(_, s)| s.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
            .fold(f64::INFINITY, f64::min)
    }

    /// Recomputes the quadratic cost from the stored samples (consistent
    /// mass quadrature in space, trapezoid in time); bit-deterministic for
    /// identical inputs.
    pub fn compute_cost(&self, problem: &HeatControlProblem, mesh: &Mesh) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.times.len() {
            let dt = self.times[k] - self.times[k - 1];
            let q0 = state_quadratic(&self.states[k - 1], mesh);
            let q1 = state_quadratic(&self.states[k], mesh);
            let u0 = self.controls[k - 1];
            let u1 = self.controls[k];
            acc += 0.5 * dt * (0.5 * (q0 + q1) + problem.cost_weight * 0.5 * (u0 * u0 + u1 * u1));
        }
        acc
    }
}

/// Mass-matrix quadrature of the state cost: Y' M Y over the interior
/// unknowns, matching the semi-discrete cost convention (the boundary
/// control contributes only through the R-weighted term).
fn state_quadratic(y_full: &[f64], mesh: &Mesh) -> f64 {
    let h = mesh.h;
    let n = mesh.n_interior;
    let y = &y_full[1..=n];
    let mut acc = 0.0;
    for i in 0..n {
        acc += 4.0 * h / 6.0 * y[i] * y[i];
        if i + 1 < n {
            acc += 2.0 * h / 6.0 * y[i] * y[i + 1];
        }
    }
    acc
}

/// Integrates the closed loop from the problem's initial condition.
pub fn run_closed_loop(
    problem: &HeatControlProblem,
    mesh: &Mesh,
    controller: &dyn FeedbackLaw,
    options: &SimOptions,
) -> Result<SimTrace> {
    let start: Vec<f64> = mesh.nodes[1..=mesh.n_interior]
        .iter()
        .map(|&xv| problem.y0.eval(&[xv]))
        .collect();
    run_from_profile(problem, mesh, controller, options, &start)
}

/// Integrates the closed loop from an arbitrary interior start profile
/// (used by the convergence studies with non-polynomial data).
pub fn run_from_profile(
    problem: &HeatControlProblem,
    mesh: &Mesh,
    controller: &dyn FeedbackLaw,
    options: &SimOptions,
    start_interior: &[f64],
) -> Result<SimTrace> {
    if start_interior.len() != mesh.n_interior {
        return Err(Error::InvalidProblem(format!(
            "start profile has {} values, mesh has {} interior nodes",
            start_interior.len(),
            mesh.n_interior
        )));
    }
    let fem = assemble_fem(problem, mesh);
    let n = mesh.n_interior;
    let dt = options.dt;
    let eta = problem.eta;

    let full_state = |y: &[f64], u: f64| -> Vec<f64> {
        let mut full = Vec::with_capacity(n + 2);
        full.push(0.0);
        full.extend_from_slice(y);
        full.push(u);
        full
    };

    let mut y_prev = start_interior.to_vec();
    let mut trace = SimTrace {
        times: vec![0.0],
        states: vec![full_state(&y_prev, 0.0)],
        controls: vec![0.0],
        running_cost: vec![0.0],
        cost: 0.0,
        blowup: None,
    };

    // Newton on F(y) = a*M y - dt*(A y + eta*M y.^3) - rhs.
    let newton_solve = |mass_factor: f64,
                        rhs: &[f64],
                        y_guess: &[f64]|
     -> std::result::Result<Vec<f64>, &'static str> {
        let mut y = y_guess.to_vec();
        for _ in 0..options.newton_max_iter {
            let my = fem.mass.mul_vec(&y);
            let ay = fem.op.mul_vec(&y);
            let y3: Vec<f64> = y.iter().map(|v| v * v * v).collect();
            let my3 = fem.mass.mul_vec(&y3);
            let mut f = vec![0.0; n];
            let mut fnorm = 0.0f64;
            for i in 0..n {
                f[i] = mass_factor * my[i] - dt * (ay[i] + eta * my3[i]) - rhs[i];
                fnorm = fnorm.max(f[i].abs());
            }
            if !fnorm.is_finite() {
                return Err("residual diverged");
            }
            if fnorm <= options.newton_tol {
                return Ok(y);
            }
            let mut jac = fem.mass.scale(mass_factor).scaled_add(-dt, &fem.op);
            if eta != 0.0 {
                for i in 0..n {
                    jac.diag[i] -= dt * eta * fem.mass.diag[i] * 3.0 * y[i] * y[i];
                    if i > 0 {
                        jac.lower[i - 1] -= dt * eta * fem.mass.lower[i - 1] * 3.0 * y[i - 1] * y[i - 1];
                    }
                    if i + 1 < n {
                        jac.upper[i] -= dt * eta * fem.mass.upper[i] * 3.0 * y[i + 1] * y[i + 1];
                    }
                }
            }
            let step = jac.solve(&f).map_err(|_| "singular jacobian")?;
            for i in 0..n {
                y[i] -= step[i];
            }
        }
        Err("newton did not converge")
    };

    let sup = |y: &[f64]| y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut y_older: Option<Vec<f64>> = None;
    let mut t = 0.0;
    let mut cost = 0.0;
    let mut q_prev = state_quadratic(&trace.states[0], mesh);

    loop {
        if t + 1e-12 >= options.horizon && options.extend_until_increment.is_none() {
            break;
        }
        if t + 1e-12 >= options.max_time {
            break;
        }

        let t_next = t + dt;
        let u_next = controller.control(t_next, mesh, trace.states.last().unwrap());
        let step_result = match &y_older {
            None => {
                // Implicit Euler startup.
                let my = fem.mass.mul_vec(&y_prev);
                let rhs: Vec<f64> = (0..n)
                    .map(|i| my[i] + dt * fem.control[i] * u_next)
                    .collect();
                newton_solve(1.0, &rhs, &y_prev)
            }
            Some(older) => {
                let my1 = fem.mass.mul_vec(&y_prev);
                let my0 = fem.mass.mul_vec(older);
                let rhs: Vec<f64> = (0..n)
                    .map(|i| 2.0 * my1[i] - 0.5 * my0[i] + dt * fem.control[i] * u_next)
                    .collect();
                newton_solve(1.5, &rhs, &y_prev)
            }
        };

        let y_next = match step_result {
            Ok(y) => y,
            Err(_) => {
                trace.blowup = Some(t_next);
                break;
            }
        };
        if sup(&y_next) > options.blowup_threshold {
            trace.blowup = Some(t_next);
            break;
        }

        let full = full_state(&y_next, u_next);
        let q_next = state_quadratic(&full, mesh);
        let u_last = *trace.controls.last().unwrap();
        let increment = 0.5
            * dt
            * (0.5 * (q_prev + q_next)
                + problem.cost_weight * 0.5 * (u_last * u_last + u_next * u_next));
        cost += increment;

        y_older = Some(std::mem::replace(&mut y_prev, y_next));
        t = t_next;
        trace.times.push(t);
        trace.states.push(full);
        trace.controls.push(u_next);
        trace.running_cost.push(cost);
        q_prev = q_next;

        if t + 1e-12 >= options.horizon {
            if let Some(eps) = options.extend_until_increment {
                if increment < eps {
                    break;
                }
            }
        }
    }

    trace.cost = cost;
    Ok(trace)
}

/// Writes the long-format state CSV (`t,x,y`) and the control CSV (`t,u`).
/// `stride` subsamples the time grid (1 keeps everything); the final time
/// is always included. Floats print with shortest round-trip precision so
/// parsing back is exact.
pub fn write_trace_csv(
    trace: &SimTrace,
    mesh: &Mesh,
    stride: usize,
    y_path: &Path,
    u_path: &Path,
) -> Result<()> {
    let stride = stride.max(1);
    let picks: Vec<usize> = (0..trace.times.len())
        .filter(|&k| k % stride == 0 || k + 1 == trace.times.len())
        .collect();
    let mut ycsv = String::from("t,x,y\n");
    for &k in &picks {
        for (j, &xv) in mesh.nodes.iter().enumerate() {
            let _ = writeln!(ycsv, "{},{},{}", trace.times[k], xv, trace.states[k][j]);
        }
    }
    fs::write(y_path, ycsv).map_err(|e| Error::io(y_path.display().to_string(), e))?;
    let mut ucsv = String::from("t,u\n");
    for &k in &picks {
        let _ = writeln!(ucsv, "{},{}", trace.times[k], trace.controls[k]);
    }
    fs::write(u_path, ucsv).map_err(|e| Error::io(u_path.display().to_string(), e))?;
    Ok(())
}

/// Parses the CSV pair written by `write_trace_csv`. Only samples are
/// recovered; running cost is rebuilt on demand via `compute_cost`.
pub fn read_trace_csv(y_path: &Path, u_path: &Path) -> Result<SimTrace> {
    let ytext =
        fs::read_to_string(y_path).map_err(|e| Error::io(y_path.display().to_string(), e))?;
    let utext =
        fs::read_to_string(u_path).map_err(|e| Error::io(u_path.display().to_string(), e))?;
    let perr = |d: String| Error::parse("trace csv", d);

    let mut times: Vec<f64> = Vec::new();
    let mut states: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in ytext.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(perr(format!("line {}: expected t,x,y", ln + 1)));
        }
        let t: f64 = parts[0]
            .parse()
            .map_err(|_| perr(format!("line {}", ln + 1)))?;
        let y: f64 = parts[2]
            .parse()
            .map_err(|_| perr(format!("line {}", ln + 1)))?;
        if times.last().map_or(true, |&lt| t != lt) {
            times.push(t);
            states.push(Vec::new());
        }
        states.last_mut().unwrap().push(y);
    }
    let mut controls = Vec::new();
    for (ln, line) in utext.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 2 {
            return Err(perr(format!("u line {}: expected t,u", ln + 1)));
        }
        controls.push(
            parts[1]
                .parse()
                .map_err(|_| perr(format!("u line {}", ln + 1)))?,
        );
    }
    if controls.len() != times.len() {
        return Err(perr("state and control sample counts differ".into()));
    }
    Ok(SimTrace {
        times,
        states,
        controls,
        running_cost: vec![],
        cost: 0.0,
        blowup: None,
    })
}
