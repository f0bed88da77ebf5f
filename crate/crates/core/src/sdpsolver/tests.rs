use super::*;
use approx::assert_relative_eq;
use nalgebra::DMatrix;

/// Univariate moment problem on [-1, 1]: minimize the second moment over
/// probability measures with mean 1/2. Variables are the moments m_0..m_2k;
/// blocks are the order-k moment (Hankel) matrix and the localizing matrix
/// of g = 1 - y².
fn univariate_toy(k: usize) -> ConicProblem {
    let num_vars = 2 * k + 1;
    let mut moment_entries = Vec::new();
    for i in 0..=k {
        for j in 0..=i {
            moment_entries.push((i + j, i, j, 1.0));
        }
    }
    let mut loc_entries = Vec::new();
    for i in 0..k {
        for j in 0..=i {
            loc_entries.push((i + j, i, j, 1.0));
            loc_entries.push((i + j + 2, i, j, -1.0));
        }
    }
    ConicProblem {
        num_vars,
        cost: vec![(2, 1.0)],
        rows: vec![
            (vec![0], vec![1.0], 1.0),
            (vec![1], vec![1.0], 0.5),
        ],
        blocks: vec![
            LinearMatrixBlock {
                size: k + 1,
                f0: vec![],
                entries: moment_entries,
                label: "moment".into(),
            },
            LinearMatrixBlock {
                size: k,
                f0: vec![],
                entries: loc_entries,
                label: "box".into(),
            },
        ],
    }
}

/// Brute-force oracle for the toy: search two-atom measures on a grid.
/// Any optimal measure of this problem can be taken with at most two atoms
/// (one linear constraint plus mass), so the grid search bounds the value.
fn univariate_toy_brute_force() -> f64 {
    let grid = 400;
    let mut best = f64::INFINITY;
    for ia in 0..=grid {
        let a = -1.0 + 2.0 * ia as f64 / grid as f64;
        for ib in 0..=grid {
            let b = -1.0 + 2.0 * ib as f64 / grid as f64;
            let p = if (a - b).abs() < 1e-12 {
                if (a - 0.5).abs() < 1e-12 {
                    0.5
                } else {
                    continue;
                }
            } else {
                (0.5 - b) / (a - b)
            };
            if !(0.0..=1.0).contains(&p) {
                continue;
            }
            let val = p * a * a + (1.0 - p) * b * b;
            if val < best {
                best = val;
            }
        }
    }
    best
}

#[test]
fn toy_brute_force_matches_jensen_bound() {
    // Jensen: E[y²] >= (E[y])² = 1/4, attained by the Dirac at 1/2.
    let brute = univariate_toy_brute_force();
    assert_relative_eq!(brute, 0.25, epsilon = 1e-9);
}

#[test]
fn univariate_toy_optimal_value() {
    let expected = univariate_toy_brute_force();
    for k in [1usize, 2, 3] {
        let problem = univariate_toy(k);
        let sol = solve_conic(&problem, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "k = {k}");
        assert!(
            (sol.objective - expected).abs() < 1e-6,
            "k = {k}: objective {} vs oracle {}",
            sol.objective,
            expected
        );
        // Returned moments satisfy the fixed rows exactly (presolved).
        assert_relative_eq!(sol.s[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.s[1], 0.5, epsilon = 1e-12);
    }
}

#[test]
fn toy_blocks_psd_at_solution() {
    let problem = univariate_toy(3);
    let sol = solve_conic(&problem, &SdpOptions::default()).unwrap();
    for block in &problem.blocks {
        let n = block.size;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for &(var, i, j, c) in &block.entries {
            m[(i, j)] += c * sol.s[var];
            if i != j {
                m[(j, i)] += c * sol.s[var];
            }
        }
        let min_eig = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-6, "{}: min eig {min_eig}", block.label);
    }
}

#[test]
fn weak_duality_along_iterates() {
    let problem = univariate_toy(3);
    let sol = solve_conic(&problem, &SdpOptions::default()).unwrap();
    assert!(sol.trace.len() > 2);
    for it in &sol.trace {
        // pobj - dobj = gap + correction with gap >= 0; therefore
        // dobj <= pobj + |correction| up to roundoff.
        let scale = 1.0 + it.primal_obj.abs() + it.dual_obj.abs();
        assert!(
            it.dual_obj <= it.primal_obj + it.feas_correction.abs() + 1e-9 * scale,
            "iterate {}: dual {} > primal {} + slack {}",
            it.iter,
            it.dual_obj,
            it.primal_obj,
            it.feas_correction.abs()
        );
        assert!(it.gap >= -1e-12);
    }
    // Final iterate is feasible, so plain weak duality holds there.
    let last = sol.trace.last().unwrap();
    let scale = 1.0 + last.primal_obj.abs();
    assert!(last.dual_obj <= last.primal_obj + 1e-6 * scale);
}

#[test]
fn degenerate_zero_cost() {
    let mut problem = univariate_toy(2);
    problem.cost.clear();
    let sol = solve_conic(&problem, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_relative_eq!(sol.objective, 0.0, epsilon = 1e-12);
}

#[test]
fn infeasible_mean_outside_support() {
    // Mean 2 on a measure supported in [-1, 1]: the moment matrix forces
    // m2 >= 4 while the localizer forces m2 <= 1.
    let mut problem = univariate_toy(1);
    problem.rows[1].2 = 2.0;
    problem.cost = vec![(2, 1.0)];
    let sol = solve_conic(&problem, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn unbounded_direction_detected() {
    // minimize -v with only v >= 0: unbounded below.
    let problem = ConicProblem {
        num_vars: 1,
        cost: vec![(0, -1.0)],
        rows: vec![],
        blocks: vec![LinearMatrixBlock {
            size: 1,
            f0: vec![],
            entries: vec![(0, 0, 0, 1.0)],
            label: "v".into(),
        }],
    };
    let sol = solve_conic(&problem, &SdpOptions::default()).unwrap();
    assert!(
        matches!(sol.status, SolveStatus::Unbounded | SolveStatus::MaxIter),
        "status {:?}",
        sol.status
    );
    assert!(sol.objective < -1e6);
}

#[test]
fn random_feasible_sdp_kkt() {
    // Construct an SDP with a known strictly feasible primal-dual pair and
    // verify the returned KKT residuals, for several seeds.
    for seed in [7u64, 21, 1234] {
        let mut state = seed;
        let mut rng = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let n = 4;
        let m = 6;
        // Random symmetric F_i, F0 chosen so that x = 0 is strictly feasible:
        // F0 = I + random small symmetric part.
        let mut entries = Vec::new();
        let mut f0 = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let base = if i == j { 1.0 } else { 0.0 };
                f0.push((i, j, base + 0.1 * rng()));
                for var in 0..m {
                    let v = rng();
                    if v.abs() > 0.3 {
                        entries.push((var, i, j, v));
                    }
                }
            }
        }
        // One equality row consistent with x = 0 plus a small offset pulled
        // into feasibility via the free variables.
        let cols: Vec<usize> = (0..m).collect();
        let vals: Vec<f64> = (0..m).map(|_| rng()).collect();
        // Bounded by construction: pick a strictly feasible dual point
        // (y*, Z* > 0) and set c = adj(Z*) + A'y*, so strong duality holds.
        let mut zstar = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = 0.2 * rng();
                zstar[(i, j)] = v;
                zstar[(j, i)] = v;
            }
            zstar[(i, i)] += 1.0;
        }
        let ystar = rng();
        let mut cost = vec![0.0; m];
        for &(var, i, j, v) in &entries {
            cost[var] += v * zstar[(i, j)] * if i == j { 1.0 } else { 2.0 };
        }
        for (&cidx, &v) in cols.iter().zip(vals.iter()) {
            cost[cidx] += v * ystar;
        }
        let problem = ConicProblem {
            num_vars: m,
            cost: cost.into_iter().enumerate().collect(),
            rows: vec![(cols, vals, 0.05)],
            blocks: vec![LinearMatrixBlock {
                size: n,
                f0,
                entries,
                label: "rand".into(),
            }],
        };
        let sol = solve_conic(&problem, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        assert!(sol.residuals.primal < 1e-6, "seed {seed}");
        assert!(sol.residuals.dual < 1e-6, "seed {seed}");
        // Verify the equality row directly.
        let (cols, vals, rhs) = &problem.rows[0];
        let lhs: f64 = cols.iter().zip(vals.iter()).map(|(&c, &v)| v * sol.s[c]).sum();
        assert!((lhs - rhs).abs() < 1e-6, "seed {seed}");
    }
}

#[test]
fn cost_scaling_leaves_argmin() {
    let problem = univariate_toy(3);
    let sol1 = solve_conic(&problem, &SdpOptions::default()).unwrap();
    let mut scaled = problem.clone();
    for e in scaled.cost.iter_mut() {
        e.1 *= 73.0;
    }
    let sol2 = solve_conic(&scaled, &SdpOptions::default()).unwrap();
    assert_relative_eq!(sol2.objective, 73.0 * sol1.objective, max_relative = 1e-5);
    for (a, b) in sol1.s.iter().zip(sol2.s.iter()) {
        assert!((a - b).abs() < 1e-5, "argmin moved: {a} vs {b}");
    }
}

#[test]
fn interchange_round_trip() {
    let problem = univariate_toy(2);
    let text = export_interchange(&problem);
    let parsed = parse_interchange(&text).unwrap();
    assert_eq!(parsed.num_vars, problem.num_vars);
    assert_eq!(parsed.rows.len(), problem.rows.len());
    for ((c1, v1, r1), (c2, v2, r2)) in problem.rows.iter().zip(parsed.rows.iter()) {
        assert_eq!(c1, c2);
        assert_eq!(v1, v2);
        assert_eq!(r1, r2);
    }
    let sizes1: Vec<usize> = problem.blocks.iter().map(|b| b.size).collect();
    let sizes2: Vec<usize> = parsed.blocks.iter().map(|b| b.size).collect();
    assert_eq!(sizes1, sizes2);
    // Entries match as sets.
    for (b1, b2) in problem.blocks.iter().zip(parsed.blocks.iter()) {
        let mut e1 = b1.entries.clone();
        let mut e2 = b2.entries.clone();
        e1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(e1.len(), e2.len());
        for (x, y) in e1.iter().zip(e2.iter()) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1, y.1);
            assert_eq!(x.2, y.2);
            assert_eq!(x.3, y.3);
        }
    }
    // Solving the parsed problem gives the same optimum.
    let s1 = solve_conic(&problem, &SdpOptions::default()).unwrap();
    let s2 = solve_conic(&parsed, &SdpOptions::default()).unwrap();
    assert_relative_eq!(s1.objective, s2.objective, epsilon = 1e-7);
}

#[test]
fn zero_constraint_export_is_header_only() {
    let problem = ConicProblem {
        num_vars: 2,
        cost: vec![(0, 1.0)],
        rows: vec![],
        blocks: vec![LinearMatrixBlock {
            size: 2,
            f0: vec![],
            entries: vec![(0, 0, 0, 1.0), (1, 1, 1, 1.0), (0, 1, 0, 0.5)],
            label: "b".into(),
        }],
    };
    let text = export_interchange(&problem);
    let parsed = parse_interchange(&text).unwrap();
    assert_eq!(parsed.rows.len(), 0);
    assert_eq!(parsed.blocks[0].size, 2);
}

/// External cross-check through CVXOPT, when a python environment with
/// cvxopt is available; skipped otherwise.
#[test]
fn toy_cross_check_external_solver() {
    let check = std::process::Command::new("python3")
        .args(["-c", "import cvxopt"])
        .output();
    let available = matches!(&check, Ok(o) if o.status.success());
    if !available {
        eprintln!("skipping external cross-check: python3/cvxopt unavailable");
        return;
    }
    let problem = univariate_toy(2);
    let text = export_interchange(&problem);
    let dir = std::env::temp_dir().join(format!("momheat-sdpa-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("toy.dat-s");
    std::fs::write(&path, &text).unwrap();
    let script = r#"
import sys
from cvxopt import matrix, solvers, spmatrix

path = sys.argv[1]
lines = [l.strip() for l in open(path) if l.strip() and not l.startswith(('"', '*'))]
m = int(lines[0]); nblk = int(lines[1])
sizes = [int(t) for t in lines[2].split()]
c = [float(t) for t in lines[3].split()]
entries = [tuple(l.split()) for l in lines[4:]]

# dual-form LMI: minimize c'x s.t. sum x_i F_i - F0 >= 0 per block.
# cvxopt sdp: min c'x st Gs_k x + hs_k PSD-vec ... using conelp form:
# sum x_i (-F_i) <= -F0  as  Gs[k] columns = vec(-F_i), hs[k] = vec(-F0)
Gs = []; hs = []
import numpy as np
psd = [s for s in sizes if s > 0]
diag = [s for s in sizes if s < 0]
nd = -diag[0] if diag else 0
# LP part from the diagonal block
G0 = np.zeros((nd, m)); h0 = np.zeros(nd)
Fs = [[np.zeros((s, s)) for s in psd] for _ in range(m + 1)]
for (k, b, i, j, v) in entries:
    k, b, i, j, v = int(k), int(b), int(i), int(j), float(v)
    if b <= len(psd):
        Fs[k][b-1][i-1, j-1] = v
        Fs[k][b-1][j-1, i-1] = v
    else:
        # diagonal block: F_k[i,i] = v meaning constraint coefficient
        if k == 0:
            h0[i-1] = -v   # X = sum x F - F0 >= 0  ->  -sum x F <= -F0
        else:
            G0[i-1, k-1] = -v
for k in range(m + 1):
    for bi, s in enumerate(psd):
        pass
for bi, s in enumerate(psd):
    cols = []
    for k in range(1, m + 1):
        cols.append(-Fs[k][bi].reshape(s * s, order='F'))
    Gs.append(matrix(np.column_stack(cols)))
    hs.append(matrix(-Fs[0][bi]))
solvers.options['show_progress'] = False
sol = solvers.sdp(matrix(c), Gl=matrix(G0), hl=matrix(h0), Gs=Gs, hs=hs)
print(repr(sol['primal objective']))
"#;
    let out = std::process::Command::new("python3")
        .arg("-c")
        .arg(script)
        .arg(&path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "cvxopt run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let external: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    let internal = solve_conic(&problem, &SdpOptions::default()).unwrap();
    assert!(
        (external - internal.objective).abs() < 1e-6,
        "external {external} vs internal {}",
        internal.objective
    );
}

#[test]
fn pseudo_moments_round_trip() {
    use crate::problem::{paper_instance_linear, RelaxationConfig};
    let p = paper_instance_linear();
    let relax = RelaxationConfig::new(4);
    let program = crate::weakform::assemble(&p, &relax).unwrap();
    // Fake solution vector: deterministic pattern.
    let s: Vec<f64> = (0..program.layout.total)
        .map(|i| ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5)
        .collect();
    let sol = ConicSolution {
        s,
        objective: 0.125,
        status: SolveStatus::Optimal,
        residuals: Residuals {
            primal: 1e-9,
            dual: 1e-9,
            gap: 1e-9,
        },
        iterations: 10,
        trace: vec![],
    };
    let pm = PseudoMoments::from_solution(&p, &relax, &program, &sol);
    let text = pm.to_text();
    let parsed = PseudoMoments::from_text(&text).unwrap();
    assert_eq!(parsed.degree, 4);
    assert_eq!(parsed.objective, 0.125);
    for (a, b) in pm.measures.iter().zip(parsed.measures.iter()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.moments.len(), b.moments.len());
        for ((m1, v1), (m2, v2)) in a.moments.iter().zip(b.moments.iter()) {
            assert_eq!(m1, m2);
            assert_eq!(v1.to_bits(), v2.to_bits(), "exact float round trip");
        }
    }
    let p2 = parsed.config.problem().unwrap();
    assert_eq!(p2.lambda, p.lambda);
}
