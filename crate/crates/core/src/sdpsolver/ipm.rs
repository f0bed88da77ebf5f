//! Primal-dual interior-point method with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector, infeasible start.
//!
//! Solves `min c'x  s.t.  A x = b,  M_j(x) = F0_j + sum_i x_i F_{j,i} PSD`.
//! The primal slack X_j and dual multiplier Z_j of every block are kept as
//! explicit symmetric matrices; the coupling M_j(x) = X_j is enforced only
//! in the limit, which allows the identity start.
//!
//! Per iteration the Newton system is reduced to the positive definite
//! m-by-m system H dx - A' dy = r1, A dx = rp with
//! H_ik = sum_j <F_i, W_j^{-1} F_k W_j^{-1}> built from the sparse block
//! entries, followed by a Schur complement on the equality multipliers.

use nalgebra::{DMatrix, DVector};

use super::{ConicProblem, Residuals, SolveStatus};
use crate::{Error, Result};

/// Interior-point options. Defaults: relative tolerance 1e-7, at most 200
/// iterations, 0.99 step damping.
#[derive(Debug, Clone)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the step to the cone boundary.
    pub step_frac: f64,
    /// Uniform slack added to every block, M_j(x) + slack*I >= 0. The
    /// moment relaxations solved here have no strictly feasible point
    /// (boundary measures are pinned to low-dimensional graphs), which
    /// leaves the dual unattained and stalls any interior-point method;
    /// the slack restores a Slater point. Enlarging the feasible set only
    /// lowers the objective, so lower bounds stay valid, and eigenvalue
    /// interlacing preserves hierarchy monotonicity across degrees.
    pub cone_slack: f64,
    pub verbose: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            tol: 1e-7,
            max_iter: 200,
            step_frac: 0.99,
            cone_slack: 1e-7,
            verbose: false,
        }
    }
}

/// Per-iteration record; the acceptance suite checks weak duality on it.
#[derive(Debug, Clone)]
pub struct IterStat {
    pub iter: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
    pub mu: f64,
    /// Exact infeasibility correction in the identity
    /// pobj - dobj = gap + correction; zero at feasibility.
    pub feas_correction: f64,
    pub note: Option<String>,
}

pub struct IpmResult {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
    pub trace: Vec<IterStat>,
}

/// Block data with full (both-triangle) entry lists for fast congruence
/// accumulation.
struct BlockData {
    size: usize,
    f0: DMatrix<f64>,
    /// Reduced variables touching this block, sorted.
    vars: Vec<usize>,
    /// Full entries per var, parallel to `vars`.
    ents: Vec<Vec<(usize, usize, f64)>>,
}

impl BlockData {
    fn build(block: &super::LinearMatrixBlock, cone_slack: f64) -> BlockData {
        let n = block.size;
        let mut f0 = DMatrix::zeros(n, n);
        for &(i, j, v) in &block.f0 {
            f0[(i, j)] = v;
            f0[(j, i)] = v;
        }
        for i in 0..n {
            f0[(i, i)] += cone_slack;
        }
        let mut vars: Vec<usize> = block.entries.iter().map(|e| e.0).collect();
        vars.sort_unstable();
        vars.dedup();
        let pos = |v: usize| vars.binary_search(&v).unwrap();
        let mut ents: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); vars.len()];
        for &(var, i, j, c) in &block.entries {
            let k = pos(var);
            ents[k].push((i, j, c));
            if i != j {
                ents[k].push((j, i, c));
            }
        }
        BlockData {
            size: n,
            f0,
            vars,
            ents,
        }
    }

    /// F0 + sum_i x_i F_i as a full symmetric matrix.
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (k, &var) in self.vars.iter().enumerate() {
            let xv = x[var];
            if xv == 0.0 {
                continue;
            }
            for &(i, j, c) in &self.ents[k] {
                m[(i, j)] += c * xv;
            }
        }
        m
    }

    /// Applies the linear part only: sum_i dx_i F_i.
    fn eval_linear(&self, dx: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for (k, &var) in self.vars.iter().enumerate() {
            let xv = dx[var];
            if xv == 0.0 {
                continue;
            }
            for &(i, j, c) in &self.ents[k] {
                m[(i, j)] += c * xv;
            }
        }
        m
    }

    /// Accumulates adj_i += <F_i, P> for every variable of the block.
    fn accumulate_adjoint(&self, p: &DMatrix<f64>, adj: &mut DVector<f64>) {
        for (k, &var) in self.vars.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, j, c) in &self.ents[k] {
                acc += c * p[(i, j)];
            }
            adj[var] += acc;
        }
    }
}

fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a lower-triangular matrix by forward substitution.
fn invert_lower(l: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut e = DVector::zeros(n);
        e[col] = 1.0;
        for i in 0..n {
            let mut s = e[i];
            for k in 0..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            let d = l[(i, i)];
            if d == 0.0 || !d.is_finite() {
                return None;
            }
            inv[(i, col)] = s / d;
        }
    }
    Some(inv)
}

/// Cholesky with escalating diagonal regularization; returns the lower
/// factor.
fn robust_cholesky(mut m: DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    symmetrize(&mut m);
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for attempt in 0..8 {
        let mut trial = m.clone();
        if ridge > 0.0 {
            for i in 0..n {
                trial[(i, i)] += ridge;
            }
        }
        if let Some(ch) = trial.cholesky() {
            return Ok(ch.l());
        }
        ridge = if attempt == 0 {
            scale * 1e-14
        } else {
            ridge * 100.0
        };
    }
    Err(Error::Solver(format!(
        "cholesky failed on {label} even with regularization"
    )))
}

/// NT scaling data of one block.
struct Scaling {
    /// R with W = R R'.
    r: DMatrix<f64>,
    /// R^{-1}.
    r_inv: DMatrix<f64>,
    /// Scaled spectrum (diagonal of the scaled point).
    lambda: DVector<f64>,
    /// W^{-1} = R^{-T} R^{-1}.
    w_inv: DMatrix<f64>,
    /// Cholesky factors of X and Z (lower), and their inverses.
    lx_inv: DMatrix<f64>,
    lz_inv: DMatrix<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let lx = x.clone().cholesky()?.l();
    let lz = z.clone().cholesky()?.l();
    let prod = lz.transpose() * &lx;
    let svd = prod.svd(true, true);
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    let sing = &svd.singular_values;
    if sing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return None;
    }
    let _ = u;
    let n = x.nrows();
    // R = Lx V S^{-1/2}, R^{-1} = S^{1/2} V' Lx^{-1}.
    let v = vt.transpose();
    let mut r = &lx * &v;
    for c in 0..n {
        let f = 1.0 / sing[c].sqrt();
        for rr in 0..n {
            r[(rr, c)] *= f;
        }
    }
    let lx_inv = invert_lower(&lx)?;
    let lz_inv = invert_lower(&lz)?;
    let mut r_inv = v.transpose() * &lx_inv;
    for rr in 0..n {
        let f = sing[rr].sqrt();
        for c in 0..n {
            r_inv[(rr, c)] *= f;
        }
    }
    let mut w_inv = r_inv.transpose() * &r_inv;
    symmetrize(&mut w_inv);
    Some(Scaling {
        r,
        r_inv,
        lambda: DVector::from_iterator(n, sing.iter().copied()),
        w_inv,
        lx_inv,
        lz_inv,
    })
}

/// Largest step alpha with P + alpha D staying PSD, given L^{-1} for
/// P = L L'.
fn max_step(l_inv: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let mut s = l_inv * d * l_inv.transpose();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= -1e-14 {
        f64::INFINITY
    } else {
        1.0 / (-min)
    }
}

struct SparseRows {
    rows: Vec<(Vec<usize>, Vec<f64>)>,
    b: DVector<f64>,
}

impl SparseRows {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|(cols, vals)| {
                cols.iter().zip(vals.iter()).map(|(&c, &v)| v * x[c]).sum()
            }),
        )
    }

    fn apply_transpose(&self, y: &DVector<f64>, m: usize) -> DVector<f64> {
        let mut out = DVector::zeros(m);
        for (r, (cols, vals)) in self.rows.iter().enumerate() {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for (&c, &v) in cols.iter().zip(vals.iter()) {
                out[c] += v * yr;
            }
        }
        out
    }
}

pub fn solve_ipm(problem: &ConicProblem, options: &SdpOptions, shift: f64) -> Result<IpmResult> {
    let m = problem.num_vars;
    let blocks: Vec<BlockData> = problem
        .blocks
        .iter()
        .map(|b| BlockData::build(b, options.cone_slack))
        .collect();
    let p = problem.rows.len();
    let a = SparseRows {
        rows: problem
            .rows
            .iter()
            .map(|(c, v, _)| (c.clone(), v.clone()))
            .collect(),
        b: DVector::from_iterator(p, problem.rows.iter().map(|r| r.2)),
    };
    let mut c = DVector::zeros(m);
    for &(i, w) in &problem.cost {
        c[i] += w;
    }

    // Everything already fixed: just audit feasibility of the constants.
    if m == 0 {
        let feasible = blocks.iter().all(|bd| {
            if bd.size == 0 {
                return true;
            }
            let eig = bd.f0.clone().symmetric_eigen();
            eig.eigenvalues.iter().all(|&e| e >= -1e-8)
        });
        let status = if feasible {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        };
        return Ok(IpmResult {
            x: vec![],
            status,
            residuals: Residuals {
                primal: 0.0,
                dual: 0.0,
                gap: 0.0,
            },
            iterations: 0,
            trace: vec![],
        });
    }

    let deg: f64 = blocks.iter().map(|b| b.size as f64).sum::<f64>().max(1.0);
    let norm_b = a.b.norm();
    let norm_c = c.norm();

    // Identity start, scaled to the constant parts.
    let mut x = DVector::<f64>::zeros(m);
    let mut y = DVector::<f64>::zeros(p);
    let mut xm: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|b| {
            let s0 = 1.0 + frobenius(&b.f0) / (b.size as f64).sqrt();
            DMatrix::identity(b.size, b.size) * s0
        })
        .collect();
    let mut zm: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|b| DMatrix::identity(b.size, b.size))
        .collect();

    let mut trace: Vec<IterStat> = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    // Best iterate so far: near the central-path floor the scaled dual
    // update loses precision and the residuals deteriorate; the returned
    // point is the best one seen, not the last.
    let mut best_metric = f64::INFINITY;
    let mut best_x = x.clone();
    let mut best_res = Residuals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
        gap: f64::INFINITY,
    };
    let mut stall = 0usize;

    for iter in 0..options.max_iter {
        iterations = iter;
        // Residuals.
        let mx: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.eval(&x)).collect();
        let rp_mat: Vec<DMatrix<f64>> = mx
            .iter()
            .zip(xm.iter())
            .map(|(mxj, xj)| mxj - xj)
            .collect();
        let rp = &a.b - a.apply(&x);
        let mut adj_z = DVector::zeros(m);
        for (bd, zj) in blocks.iter().zip(zm.iter()) {
            bd.accumulate_adjoint(zj, &mut adj_z);
        }
        let rd = &c - a.apply_transpose(&y, m) - &adj_z;
        let gap: f64 = xm.iter().zip(zm.iter()).map(|(xj, zj)| inner(xj, zj)).sum();
        let mu = gap / deg;
        let pobj = c.dot(&x) + shift;
        let f0_z: f64 = blocks
            .iter()
            .zip(zm.iter())
            .map(|(bd, zj)| inner(&bd.f0, zj))
            .sum();
        let dobj = a.b.dot(&y) - f0_z + shift;
        // pobj - dobj = gap + rd.x - rp.y + sum <Rp_j, Z_j> exactly.
        let feas_correction = rd.dot(&x) - rp.dot(&y)
            + rp_mat
                .iter()
                .zip(zm.iter())
                .map(|(r, zj)| inner(r, zj))
                .sum::<f64>();

        let pres_vec = rp.norm() / (1.0 + norm_b);
        let pres_mat = rp_mat
            .iter()
            .zip(xm.iter())
            .map(|(r, xj)| frobenius(r) / (1.0 + frobenius(xj)))
            .fold(0.0, f64::max);
        let pres = pres_vec.max(pres_mat);
        let dres = rd.norm() / (1.0 + norm_c);
        let relgap = gap.abs() / (1.0 + pobj.abs() + dobj.abs());

        trace.push(IterStat {
            iter,
            primal_obj: pobj,
            dual_obj: dobj,
            primal_res: pres,
            dual_res: dres,
            gap,
            mu,
            feas_correction,
            note: None,
        });
        if options.verbose {
            let znorm = zm.iter().map(frobenius).fold(0.0, f64::max);
            let xnorm = xm.iter().map(frobenius).fold(0.0, f64::max);
            eprintln!(
                "it {iter:3}  pobj {pobj:+.6e}  dobj {dobj:+.6e}  gap {gap:.2e}  pres {pres:.2e}  dres {dres:.2e}  |Z| {znorm:.1e}  |X| {xnorm:.1e}"
            );
        }
        let metric = pres.max(dres).max(relgap);
        if metric < best_metric {
            best_metric = metric;
            best_x.copy_from(&x);
            best_res = Residuals {
                primal: pres,
                dual: dres,
                gap: relgap,
            };
            stall = 0;
        } else {
            stall += 1;
        }

        if pres <= options.tol && dres <= options.tol && relgap <= options.tol {
            status = SolveStatus::Optimal;
            break;
        }
        // No progress for a while at small gap: the floating-point floor is
        // reached; the best iterate is the answer.
        if stall >= 10 && best_res.gap < options.tol.max(1e-6) * 1e2 {
            status = if best_res.primal <= options.tol
                && best_res.dual <= options.tol
                && best_res.gap <= options.tol
            {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIter
            };
            break;
        }

        // Infeasibility certificate: A'y + M*(Z) ~ 0, Z PSD, b'y - <F0, Z> > 0.
        let cert_vec = a.apply_transpose(&y, m) + &adj_z;
        let cert_val = a.b.dot(&y) - f0_z;
        let cert_scale = y.norm() + zm.iter().map(frobenius).sum::<f64>();
        if cert_scale > 1.0 && cert_val > 0.0 {
            let rel_cert = cert_vec.norm() / cert_scale;
            let rel_val = cert_val / cert_scale;
            if rel_cert < 1e-10 && rel_val > 1e-8 {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        if pobj < -1e13 && pres < 1e-6 {
            status = SolveStatus::Unbounded;
            break;
        }
        if !pobj.is_finite() || !gap.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // NT scalings.
        let mut scalings = Vec::with_capacity(blocks.len());
        let mut scaling_failed = false;
        for (xj, zj) in xm.iter().zip(zm.iter()) {
            match nt_scaling(xj, zj) {
                Some(s) => scalings.push(s),
                None => {
                    scaling_failed = true;
                    break;
                }
            }
        }
        if scaling_failed {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // H = sum_j adj(F_i, W^{-1} F_k W^{-1}).
        let mut h = DMatrix::<f64>::zeros(m, m);
        for (bd, sc) in blocks.iter().zip(scalings.iter()) {
            let s = &sc.w_inv;
            let n = bd.size;
            for (ki, &vk) in bd.vars.iter().enumerate() {
                // T = S F_k S via rank-one accumulation over entries.
                let mut t = DMatrix::<f64>::zeros(n, n);
                for &(ei, ej, ec) in &bd.ents[ki] {
                    // T += ec * S[:, ei] * S[ej, :]
                    let col = s.column(ei);
                    let row = s.row(ej);
                    for cc in 0..n {
                        let f = ec * row[cc];
                        if f == 0.0 {
                            continue;
                        }
                        for rr in 0..n {
                            t[(rr, cc)] += f * col[rr];
                        }
                    }
                }
                for (li, &vl) in bd.vars.iter().enumerate().take(ki + 1) {
                    let mut acc = 0.0;
                    for &(ei, ej, ec) in &bd.ents[li] {
                        acc += ec * t[(ei, ej)];
                    }
                    let (hi, lo) = if vk >= vl { (vk, vl) } else { (vl, vk) };
                    h[(hi, lo)] += acc;
                    if hi != lo {
                        h[(lo, hi)] += acc;
                    }
                }
            }
        }

        let hf = match robust_cholesky(h, "ipm hessian") {
            Ok(l) => l,
            Err(_) => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        };
        let h_solve = |rhs: &DVector<f64>| -> DVector<f64> {
            let mut v = rhs.clone();
            solve_lower_vec(&hf, &mut v);
            solve_upper_vec(&hf, &mut v);
            v
        };

        // Schur complement on the equality multipliers.
        let ah_at_chol = if p > 0 {
            let mut at = DMatrix::<f64>::zeros(m, p);
            for (r, (cols, vals)) in a.rows.iter().enumerate() {
                for (&cidx, &v) in cols.iter().zip(vals.iter()) {
                    at[(cidx, r)] = v;
                }
            }
            let mut h_inv_at = at;
            solve_lower_mat(&hf, &mut h_inv_at);
            solve_upper_mat(&hf, &mut h_inv_at);
            let mut ah_at = DMatrix::<f64>::zeros(p, p);
            for (r, (cols, vals)) in a.rows.iter().enumerate() {
                for pc in 0..p {
                    let mut acc = 0.0;
                    for (&cidx, &v) in cols.iter().zip(vals.iter()) {
                        acc += v * h_inv_at[(cidx, pc)];
                    }
                    ah_at[(r, pc)] = acc;
                }
            }
            match robust_cholesky(ah_at, "ipm schur") {
                Ok(l) => Some(l),
                Err(_) => {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            }
        } else {
            None
        };

        // w_i = <F_i, W^{-1} Rp W^{-1}> enters every solve.
        let mut w_vec = DVector::zeros(m);
        let srs: Vec<DMatrix<f64>> = blocks
            .iter()
            .zip(scalings.iter())
            .zip(rp_mat.iter())
            .map(|((_, sc), rpj)| &sc.w_inv * rpj * &sc.w_inv)
            .collect();
        for (bd, srj) in blocks.iter().zip(srs.iter()) {
            bd.accumulate_adjoint(srj, &mut w_vec);
        }

        // Shared KKT solve for a given centrality target in scaled space.
        // target_scaled_j builds (dX~ + dZ~); V_j = R (that) R'.
        let solve_kkt = |targets: &[DMatrix<f64>]| -> (DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            // q_i = <F_i, W^{-1} V W^{-1}>
            let mut q = DVector::zeros(m);
            let svs: Vec<DMatrix<f64>> = blocks
                .iter()
                .zip(scalings.iter())
                .zip(targets.iter())
                .map(|((_, sc), v)| &sc.w_inv * v * &sc.w_inv)
                .collect();
            for (bd, svj) in blocks.iter().zip(svs.iter()) {
                bd.accumulate_adjoint(svj, &mut q);
            }
            let r1 = &q - &w_vec - &rd;
            // Solve the saddle system [H -A'; A 0] (dx, dy) = (r1, rp) via
            // the Schur complement, then polish with iterative refinement:
            // the Cholesky factors may carry regularization.
            let solve_pair = |t1: &DVector<f64>, t2: &DVector<f64>| {
                let dy = if let (Some(l), true) = (&ah_at_chol, p > 0) {
                    let h_t1 = h_solve(t1);
                    let mut rhs = t2 - a.apply(&h_t1);
                    solve_lower_vec(l, &mut rhs);
                    solve_upper_vec(l, &mut rhs);
                    rhs
                } else {
                    DVector::zeros(p)
                };
                let dx = h_solve(&(t1 + a.apply_transpose(&dy, m)));
                (dx, dy)
            };
            // H dx explicitly, for refinement residuals.
            let h_apply = |v: &DVector<f64>| -> DVector<f64> {
                let mut out = DVector::zeros(m);
                for (bd, sc) in blocks.iter().zip(scalings.iter()) {
                    let inner_mat = &sc.w_inv * bd.eval_linear(v) * &sc.w_inv;
                    bd.accumulate_adjoint(&inner_mat, &mut out);
                }
                out
            };
            let (mut dx, mut dy) = solve_pair(&r1, &rp);
            for _ in 0..2 {
                let res1 = &r1 - (h_apply(&dx) - a.apply_transpose(&dy, m));
                let res2 = &rp - a.apply(&dx);
                let n1 = res1.norm() / (1.0 + r1.norm());
                let n2 = res2.norm() / (1.0 + rp.norm());
                if n1 < 1e-13 && n2 < 1e-13 {
                    break;
                }
                let (cx, cy) = solve_pair(&res1, &res2);
                dx += cx;
                dy += cy;
            }
            let dxm: Vec<DMatrix<f64>> = blocks
                .iter()
                .zip(rp_mat.iter())
                .map(|(bd, rpj)| bd.eval_linear(&dx) + rpj)
                .collect();
            let dzm: Vec<DMatrix<f64>> = scalings
                .iter()
                .zip(targets.iter())
                .zip(dxm.iter())
                .map(|((sc, v), dxj)| {
                    let mut dz = &sc.w_inv * (v - dxj) * &sc.w_inv;
                    symmetrize(&mut dz);
                    dz
                })
                .collect();
            (dx, dy, dxm, dzm)
        };

        // Scaled-space centrality target from (sigma*mu, corrector C).
        let build_targets = |sigma_mu: f64, corr: Option<&[DMatrix<f64>]>| -> Vec<DMatrix<f64>> {
            scalings
                .iter()
                .enumerate()
                .map(|(j, sc)| {
                    let n = blocks[j].size;
                    let lam = &sc.lambda;
                    let mut tgt = DMatrix::<f64>::zeros(n, n);
                    for i in 0..n {
                        tgt[(i, i)] = sigma_mu - lam[i] * lam[i];
                    }
                    if let Some(cs) = corr {
                        tgt -= &cs[j];
                    }
                    for rr in 0..n {
                        for cc in 0..n {
                            tgt[(rr, cc)] *= 2.0 / (lam[rr] + lam[cc]);
                        }
                    }
                    let mut v = &sc.r * tgt * sc.r.transpose();
                    symmetrize(&mut v);
                    v
                })
                .collect()
        };

        // Predictor.
        let targets_aff = build_targets(0.0, None);
        let (_dx_a, _dy_a, dxm_a, dzm_a) = solve_kkt(&targets_aff);
        let alpha_p_aff = xm
            .iter()
            .zip(dxm_a.iter())
            .zip(scalings.iter())
            .map(|((_, d), sc)| max_step(&sc.lx_inv, d))
            .fold(f64::INFINITY, f64::min)
            .min(1.0);
        let alpha_d_aff = zm
            .iter()
            .zip(dzm_a.iter())
            .zip(scalings.iter())
            .map(|((_, d), sc)| max_step(&sc.lz_inv, d))
            .fold(f64::INFINITY, f64::min)
            .min(1.0);
        let gap_aff: f64 = xm
            .iter()
            .zip(dxm_a.iter())
            .zip(zm.iter().zip(dzm_a.iter()))
            .map(|((xj, dxj), (zj, dzj))| {
                inner(&(xj + dxj.scale(alpha_p_aff)), &(zj + dzj.scale(alpha_d_aff)))
            })
            .sum::<f64>()
            .max(0.0);
        let sigma = if gap <= 0.0 {
            0.0
        } else {
            (gap_aff / gap).powi(3).clamp(0.0, 1.0)
        };

        // Mehrotra correction in scaled space.
        let corr: Vec<DMatrix<f64>> = scalings
            .iter()
            .zip(dxm_a.iter().zip(dzm_a.iter()))
            .map(|(sc, (dxj, dzj))| {
                let dxs = &sc.r_inv * dxj * sc.r_inv.transpose();
                let dzs = sc.r.transpose() * dzj * &sc.r;
                let mut c = (&dxs * &dzs + &dzs * &dxs) * 0.5;
                symmetrize(&mut c);
                c
            })
            .collect();
        let targets = build_targets(sigma * mu, Some(&corr));
        let (dx, dy, dxm, dzm) = solve_kkt(&targets);

        let eta = options.step_frac;
        let alpha_p = xm
            .iter()
            .zip(dxm.iter())
            .zip(scalings.iter())
            .map(|((_, d), sc)| max_step(&sc.lx_inv, d))
            .fold(f64::INFINITY, f64::min);
        let alpha_d = zm
            .iter()
            .zip(dzm.iter())
            .zip(scalings.iter())
            .map(|((_, d), sc)| max_step(&sc.lz_inv, d))
            .fold(f64::INFINITY, f64::min);
        let alpha_p = (eta * alpha_p).min(1.0);
        let alpha_d = (eta * alpha_d).min(1.0);
        if alpha_p < 1e-12 && alpha_d < 1e-12 {
            status = SolveStatus::NumericalFailure;
            break;
        }

        x += dx.scale(alpha_p);
        y += dy.scale(alpha_d);
        for j in 0..blocks.len() {
            xm[j] += dxm[j].scale(alpha_p);
            symmetrize(&mut xm[j]);
            zm[j] += dzm[j].scale(alpha_d);
            symmetrize(&mut zm[j]);
        }
    }

    // Optimal exits happen before the best-iterate bookkeeping runs for the
    // final point; fold it in.
    if status == SolveStatus::Optimal {
        if let Some(last) = trace.last() {
            let metric = last.primal_res.max(last.dual_res);
            if metric <= best_metric {
                best_x.copy_from(&x);
                best_res = Residuals {
                    primal: last.primal_res,
                    dual: last.dual_res,
                    gap: last.gap / (1.0 + last.primal_obj.abs() + last.dual_obj.abs()),
                };
            }
        }
    }
    let use_best = matches!(status, SolveStatus::Optimal | SolveStatus::MaxIter | SolveStatus::NumericalFailure)
        && best_metric.is_finite();
    let (x_out, res_out) = if use_best {
        (best_x, best_res)
    } else {
        (
            x,
            trace.last().map_or(
                Residuals {
                    primal: f64::INFINITY,
                    dual: f64::INFINITY,
                    gap: f64::INFINITY,
                },
                |t| Residuals {
                    primal: t.primal_res,
                    dual: t.dual_res,
                    gap: t.gap / (1.0 + t.primal_obj.abs() + t.dual_obj.abs()),
                },
            ),
        )
    };

    Ok(IpmResult {
        x: x_out.iter().copied().collect(),
        status,
        residuals: res_out,
        iterations: iterations + 1,
        trace,
    })
}

fn solve_lower_vec(l: &DMatrix<f64>, v: &mut DVector<f64>) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = v[i];
        for k in 0..i {
            s -= l[(i, k)] * v[k];
        }
        v[i] = s / l[(i, i)];
    }
}

fn solve_upper_vec(l: &DMatrix<f64>, v: &mut DVector<f64>) {
    // Solves L' x = v.
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = v[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * v[k];
        }
        v[i] = s / l[(i, i)];
    }
}

fn solve_lower_mat(l: &DMatrix<f64>, m: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..m.ncols() {
        for i in 0..n {
            let mut s = m[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * m[(k, c)];
            }
            m[(i, c)] = s / l[(i, i)];
        }
    }
}

fn solve_upper_mat(l: &DMatrix<f64>, m: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..m.ncols() {
        for i in (0..n).rev() {
            let mut s = m[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * m[(k, c)];
            }
            m[(i, c)] = s / l[(i, i)];
        }
    }
}
