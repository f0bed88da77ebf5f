//! LQR baseline: assembles the semi-discrete system, solves the continuous
//! algebraic Riccati equation and produces the optimal linear state
//! feedback for the linearized problem.
//!
//! The ARE is solved through the stable invariant subspace of the 2N x 2N
//! Hamiltonian. The Schur decomposition runs over complex scalars, where
//! the triangular form makes eigenvalue reordering a sequence of unitary
//! Givens swaps; a Kleinman-Newton pass with Bartels-Stewart Lyapunov
//! solves then polishes the subspace solution to residuals near machine
//! precision.

use nalgebra::{Complex, DMatrix, DVector};

use crate::pdesim::{assemble_fem, FeedbackLaw, Mesh, Tridiag};
use crate::problem::HeatControlProblem;
use crate::{Error, Result};

type CMatrix = DMatrix<Complex<f64>>;

/// Riccati solution and the derived feedback gain.
#[derive(Debug, Clone)]
pub struct LqrSolution {
    /// Symmetric solution of A'P + PA - P B R^{-1} B' P + Q = 0 in the
    /// mass-inverted coordinates (A = M^{-1}A_fem, B = M^{-1}B_fem).
    pub riccati: DMatrix<f64>,
    /// Gain row k with u = -k . (M Y).
    pub gain_m: DVector<f64>,
    /// State weight used.
    pub q: DMatrix<f64>,
    /// Relative Frobenius residual of the ARE.
    pub residual: f64,
    /// Spectral abscissa of the closed loop (max real part).
    pub abscissa: f64,
}

/// Solves the continuous ARE for the descriptor system M Y' = A Y + B u
/// with cost 1/2 int (Y'QY + R u²).
pub fn solve_are(
    mass: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    q: &DMatrix<f64>,
    r: f64,
) -> Result<LqrSolution> {
    let n = a.nrows();
    if mass.nrows() != n || q.nrows() != n || b.len() != n {
        return Err(Error::Linalg("ARE dimension mismatch".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Linalg("control weight must be positive".into()));
    }
    let m_lu = mass.clone().lu();
    let a_tilde = m_lu
        .solve(a)
        .ok_or_else(|| Error::Linalg("mass matrix singular".into()))?;
    let b_tilde = m_lu
        .solve(&DMatrix::from_column_slice(n, 1, b.as_slice()))
        .ok_or_else(|| Error::Linalg("mass matrix singular".into()))?;

    let p = care(&a_tilde, &b_tilde, q, r)?;

    // Gain in the paper's -R^{-1} B' P M Y shape: with the standard-ARE P
    // the control is u = -R^{-1} B~' P Y, i.e. k = M^{-1} P' B~ / R.
    let k_std = (b_tilde.transpose() * &p) / r; // 1 x n, u = -k_std Y
    let gain_m = m_lu
        .solve(&k_std.transpose())
        .ok_or_else(|| Error::Linalg("mass matrix singular".into()))?
        .column(0)
        .into_owned();

    // Residual and closed-loop spectrum.
    let bbt = &b_tilde * b_tilde.transpose() / r;
    let res_mat = a_tilde.transpose() * &p + &p * &a_tilde - &p * &bbt * &p + q;
    let residual = frob(&res_mat) / frob(q).max(1e-300);
    let a_cl = &a_tilde - &b_tilde * (b_tilde.transpose() * &p) / r;
    let abscissa = spectral_abscissa(&a_cl)?;

    Ok(LqrSolution {
        riccati: p,
        gain_m,
        q: q.clone(),
        residual,
        abscissa,
    })
}

/// Standard-form CARE: A'P + PA - P B R^{-1} B' P + Q = 0.
pub fn care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let bbt = b * b.transpose() / r;

    // Hamiltonian [[A, -BB'/r], [-Q, -A']].
    let mut ham = DMatrix::<f64>::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&bbt));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let (mut qm, mut tm) = complex_schur(&ham)?;
    reorder_schur_ascending_re(&mut qm, &mut tm);

    let u11 = qm.view((0, 0), (n, n)).into_owned();
    let u21 = qm.view((n, 0), (n, n)).into_owned();
    // P = U21 U11^{-1}: solve U11^H W = U21^H, then P = W^H.
    let x = u11
        .adjoint()
        .lu()
        .solve(&u21.adjoint())
        .map(|w| w.adjoint())
        .ok_or_else(|| {
            Error::Linalg("stable invariant subspace is degenerate (unstabilizable pair?)".into())
        })?;
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut max_im = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = x[(i, j)].re;
            max_im = max_im.max(x[(i, j)].im.abs());
        }
    }
    let scale = p.amax().max(1.0);
    if max_im > 1e-6 * scale {
        return Err(Error::Linalg(format!(
            "Riccati solution has imaginary residue {max_im:.3e}"
        )));
    }
    symmetrize(&mut p);

    // Kleinman-Newton polish: each step solves a Lyapunov equation for the
    // current closed loop.
    for _ in 0..3 {
        let k = (b.transpose() * &p) / r;
        let a_cl = a - b * &k;
        let w = q + k.transpose() * &k * r;
        match lyapunov(&a_cl.transpose(), &(-&w)) {
            Ok(mut p_new) => {
                symmetrize(&mut p_new);
                let res_new = frob(&(a.transpose() * &p_new + &p_new * a
                    - &p_new * &bbt * &p_new
                    + q));
                let res_old =
                    frob(&(a.transpose() * &p + &p * a - &p * &bbt * &p + q));
                if res_new < res_old {
                    p = p_new;
                } else {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    Ok(p)
}

/// Solves A' X + X A' ... specifically: given G (= A_cl'), solves
/// G X + X G' = W via complex Schur and back-substitution.
fn lyapunov(g: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let (qm, tm) = complex_schur(g)?;
    // G = Q T Q^H. Substituting X = Q Y Q^H:
    //   T Y + Y T^H = Q^H W Q =: C.
    let qh = qm.adjoint();
    let wc = to_complex(w);
    let c = &qh * wc * &qm;
    let mut y = CMatrix::zeros(n, n);
    // Column-wise back-substitution from the last column: with T upper
    // triangular, (T + conj(t_jj) I) y_j = c_j - sum_{k>j} conj(T[j,k])..
    // Derive: (T Y)_{., j} + (Y T^H)_{., j} = c_j;
    // (Y T^H)_{i, j} = sum_k Y[i,k] * conj(T[j,k]) over k >= j.
    for j in (0..n).rev() {
        let mut rhs = CMatrix::zeros(n, 1);
        for i in 0..n {
            rhs[(i, 0)] = c[(i, j)];
        }
        for k in (j + 1)..n {
            let f = tm[(j, k)].conj();
            for i in 0..n {
                rhs[(i, 0)] -= y[(i, k)] * f;
            }
        }
        // (T + conj(t_jj) I) y_j = rhs, upper triangular solve.
        let shift = tm[(j, j)].conj();
        for i in (0..n).rev() {
            let mut acc = rhs[(i, 0)];
            for k in (i + 1)..n {
                acc -= tm[(i, k)] * y[(k, j)];
            }
            let d = tm[(i, i)] + shift;
            if d.norm() < 1e-300 {
                return Err(Error::Linalg("Lyapunov equation is singular".into()));
            }
            y[(i, j)] = acc / d;
        }
    }
    let x = &qm * y * qh;
    let mut out = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = x[(i, j)].re;
        }
    }
    Ok(out)
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    CMatrix::from_iterator(
        m.nrows(),
        m.ncols(),
        m.iter().map(|&v| Complex::new(v, 0.0)),
    )
}

/// Complex Schur decomposition of a real matrix: A = Q T Q^H with T upper
/// triangular.
pub fn complex_schur(a: &DMatrix<f64>) -> Result<(CMatrix, CMatrix)> {
    let ac = to_complex(a);
    let schur = ac
        .try_schur(1e-14, 10_000)
        .ok_or_else(|| Error::Linalg("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    Ok((q, t))
}

/// Reorders a complex Schur form so the diagonal has ascending real parts,
/// via adjacent unitary swaps; Q and T are updated in place.
pub fn reorder_schur_ascending_re(q: &mut CMatrix, t: &mut CMatrix) {
    let n = t.nrows();
    loop {
        let mut swapped = false;
        for i in 0..n.saturating_sub(1) {
            if t[(i, i)].re > t[(i + 1, i + 1)].re + 1e-14 {
                swap_adjacent(q, t, i);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
}

/// Unitary swap of the adjacent diagonal entries i, i+1 of a triangular T.
fn swap_adjacent(q: &mut CMatrix, t: &mut CMatrix, i: usize) {
    let a = t[(i, i)];
    let b = t[(i, i + 1)];
    let c = t[(i + 1, i + 1)];
    // Eigenvector of [[a, b], [0, c]] for eigenvalue c is [b, c - a].
    let v1 = b;
    let v2 = c - a;
    let norm = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
    if norm < 1e-300 {
        return; // equal eigenvalues, nothing to do
    }
    // Givens G with G [v1; v2] = [r; 0]: rows (cs, sn; -conj(sn), cs-bar)...
    let cs = v1 / norm;
    let sn = v2 / norm;
    // G = [[cs^H, sn^H], [-sn, cs]] is unitary with G v = [norm; 0].
    let g11 = cs.conj();
    let g12 = sn.conj();
    let g21 = -sn;
    let g22 = cs;
    let n = t.nrows();
    // T <- G T G^H, Q <- Q G^H.
    for col in 0..n {
        let x = t[(i, col)];
        let y = t[(i + 1, col)];
        t[(i, col)] = g11 * x + g12 * y;
        t[(i + 1, col)] = g21 * x + g22 * y;
    }
    for row in 0..n {
        let x = t[(row, i)];
        let y = t[(row, i + 1)];
        t[(row, i)] = x * g11.conj() + y * g12.conj();
        t[(row, i + 1)] = x * g21.conj() + y * g22.conj();
    }
    for row in 0..q.nrows() {
        let x = q[(row, i)];
        let y = q[(row, i + 1)];
        q[(row, i)] = x * g11.conj() + y * g12.conj();
        q[(row, i + 1)] = x * g21.conj() + y * g22.conj();
    }
    t[(i + 1, i)] = Complex::new(0.0, 0.0);
}

fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    let (_, t) = complex_schur(a)?;
    Ok((0..a.nrows())
        .map(|i| t[(i, i)].re)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
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

/// LQR gain for the heat problem on a given mesh, with Q = the P1 mass
/// matrix so that Y'QY is the FEM quadrature of the state cost.
pub fn lqr_gain(problem: &HeatControlProblem, mesh: &Mesh) -> Result<LqrSolution> {
    let fem = assemble_fem(problem, mesh);
    let mass = fem.mass.to_dense();
    let a = fem.op.to_dense();
    let b = DVector::from_column_slice(&fem.control);
    let q = mass.clone();
    solve_are(&mass, &a, &b, &q, problem.cost_weight)
}

/// The state feedback u = -k . (M Y), evaluable by the simulator.
pub struct LqrFeedback {
    gain_m: DVector<f64>,
    mass: Tridiag,
}

impl LqrFeedback {
    pub fn new(solution: &LqrSolution, problem: &HeatControlProblem, mesh: &Mesh) -> LqrFeedback {
        let fem = assemble_fem(problem, mesh);
        LqrFeedback {
            gain_m: solution.gain_m.clone(),
            mass: fem.mass,
        }
    }

    pub fn from_gain(gain_m: Vec<f64>, problem: &HeatControlProblem, mesh: &Mesh) -> Result<LqrFeedback> {
        if gain_m.len() != mesh.n_interior {
            return Err(Error::InvalidProblem(format!(
                "gain length {} does not match mesh with {} interior nodes",
                gain_m.len(),
                mesh.n_interior
            )));
        }
        let fem = assemble_fem(problem, mesh);
        Ok(LqrFeedback {
            gain_m: DVector::from_vec(gain_m),
            mass: fem.mass,
        })
    }

    pub fn gain(&self) -> &DVector<f64> {
        &self.gain_m
    }
}

impl FeedbackLaw for LqrFeedback {
    fn control(&self, _t: f64, mesh: &Mesh, y_full: &[f64]) -> f64 {
        let interior = &y_full[1..=mesh.n_interior];
        let my = self.mass.mul_vec(interior);
        -self
            .gain_m
            .iter()
            .zip(my.iter())
            .map(|(&k, &v)| k * v)
            .sum::<f64>()
    }

    fn describe(&self) -> String {
        "lqr".into()
    }
}
