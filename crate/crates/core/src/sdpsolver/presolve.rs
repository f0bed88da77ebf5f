//! Elimination of directly-fixed variables before the iterative solve.
//!
//! Rows with a single nonzero entry (the marginal rows of the relaxation)
//! fix one moment each; the variable is substituted everywhere, its block
//! contributions fold into the constant parts F0 and the remaining rows
//! shrink. Repeats until a fixpoint since substitution can expose new
//! single-entry rows. Inconsistent fixings or inconsistent empty rows are
//! reported as primal infeasibility.

use super::{ConicProblem, LinearMatrixBlock};

pub struct Reduced {
    pub problem: ConicProblem,
    /// Fixed value per original variable, `None` for free ones.
    pub fixed: Vec<Option<f64>>,
    /// Original index of each reduced variable.
    pub free: Vec<usize>,
    /// Constant cost contribution of the fixed variables.
    pub objective_shift: f64,
}

impl Reduced {
    /// Reassembles the full-length vector from the reduced one.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut s: Vec<f64> = self.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (k, &orig) in self.free.iter().enumerate() {
            s[orig] = x[k];
        }
        s
    }
}

const CONSISTENCY_TOL: f64 = 1e-9;

pub fn presolve(problem: &ConicProblem) -> Result<Reduced, String> {
    let n = problem.num_vars;
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    // Working copy of rows; entries on fixed variables move to the rhs.
    let mut rows: Vec<(Vec<usize>, Vec<f64>, f64)> = problem.rows.clone();
    loop {
        let mut changed = false;
        for (cols, vals, rhs) in rows.iter_mut() {
            // Substitute already-fixed variables.
            let mut k = 0;
            while k < cols.len() {
                if let Some(v) = fixed[cols[k]] {
                    *rhs -= vals[k] * v;
                    cols.swap_remove(k);
                    vals.swap_remove(k);
                } else {
                    k += 1;
                }
            }
            if cols.len() == 1 {
                let var = cols[0];
                let coef = vals[0];
                if coef.abs() < 1e-300 {
                    continue;
                }
                let value = *rhs / coef;
                match fixed[var] {
                    None => {
                        fixed[var] = Some(value);
                        changed = true;
                    }
                    Some(old) => {
                        if (old - value).abs() > CONSISTENCY_TOL * (1.0 + old.abs()) {
                            return Err(format!(
                                "inconsistent fixings for variable {var}: {old} vs {value}"
                            ));
                        }
                    }
                }
                cols.clear();
                vals.clear();
                *rhs = 0.0;
            } else if cols.is_empty() && rhs.abs() > CONSISTENCY_TOL {
                return Err(format!("inconsistent empty row with rhs {rhs}"));
            }
        }
        if !changed {
            break;
        }
    }

    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut to_reduced: Vec<usize> = vec![usize::MAX; n];
    for (k, &orig) in free.iter().enumerate() {
        to_reduced[orig] = k;
    }

    // Remaining rows over free variables only.
    let mut reduced_rows = Vec::new();
    for (cols, vals, rhs) in rows.into_iter() {
        if cols.is_empty() {
            continue;
        }
        let cols: Vec<usize> = cols.iter().map(|&c| to_reduced[c]).collect();
        reduced_rows.push((cols, vals, rhs));
    }
    // The truncated weak formulation produces linearly dependent rows
    // (Stokes identities overlap the marginal constraints); they make the
    // interior-point Schur complement singular. Keep a maximal independent
    // subset and verify the dropped rows are consistent.
    let reduced_rows = drop_dependent_rows(reduced_rows, free.len())?;

    // Cost: free part plus constant shift.
    let mut objective_shift = 0.0;
    let mut cost = Vec::new();
    for &(c, w) in &problem.cost {
        match fixed[c] {
            Some(v) => objective_shift += w * v,
            None => cost.push((to_reduced[c], w)),
        }
    }

    // Blocks: fixed entries fold into F0.
    let mut blocks = Vec::new();
    for b in &problem.blocks {
        let mut f0: std::collections::BTreeMap<(usize, usize), f64> =
            b.f0.iter().map(|&(i, j, v)| ((i, j), v)).collect();
        let mut entries = Vec::new();
        for &(var, i, j, coef) in &b.entries {
            match fixed[var] {
                Some(v) => {
                    *f0.entry((i, j)).or_insert(0.0) += coef * v;
                }
                None => entries.push((to_reduced[var], i, j, coef)),
            }
        }
        blocks.push(LinearMatrixBlock {
            size: b.size,
            f0: f0
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((i, j), v)| (i, j, v))
                .collect(),
            entries,
            label: b.label.clone(),
        });
    }

    Ok(Reduced {
        problem: ConicProblem {
            num_vars: free.len(),
            cost,
            rows: reduced_rows,
            blocks,
        },
        fixed,
        free,
        objective_shift,
    })
}

type Row = (Vec<usize>, Vec<f64>, f64);

/// Gaussian elimination with full pivoting on a dense copy of the rows;
/// returns the original rows whose indices were selected as pivots, in the
/// original order. Dependent rows must reduce to zero = zero, otherwise the
/// system is infeasible.
fn drop_dependent_rows(rows: Vec<Row>, num_vars: usize) -> Result<Vec<Row>, String> {
    let p = rows.len();
    if p == 0 {
        return Ok(rows);
    }
    let mut work = vec![vec![0.0f64; num_vars + 1]; p];
    let mut scale = 0.0f64;
    for (r, (cols, vals, rhs)) in rows.iter().enumerate() {
        for (&c, &v) in cols.iter().zip(vals.iter()) {
            work[r][c] += v;
            scale = scale.max(v.abs());
        }
        work[r][num_vars] = *rhs;
    }
    let tol = scale.max(1e-300) * 1e-11;
    let mut used = vec![false; p];
    let mut kept: Vec<usize> = Vec::new();
    loop {
        // Full pivot over unused rows.
        let mut best = (0usize, 0usize, 0.0f64);
        for r in 0..p {
            if used[r] {
                continue;
            }
            for c in 0..num_vars {
                let a = work[r][c].abs();
                if a > best.2 {
                    best = (r, c, a);
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        let (pr, pc, _) = best;
        used[pr] = true;
        kept.push(pr);
        let pivot = work[pr][pc];
        let pivot_row = work[pr].clone();
        for r in 0..p {
            if used[r] || work[r][pc] == 0.0 {
                continue;
            }
            let f = work[r][pc] / pivot;
            for c in 0..=num_vars {
                work[r][c] -= f * pivot_row[c];
            }
            work[r][pc] = 0.0;
        }
    }
    // Dropped rows must be consistent.
    let rhs_scale = rows.iter().map(|r| r.2.abs()).fold(1.0, f64::max);
    for r in 0..p {
        if !used[r] && work[r][num_vars].abs() > 1e-7 * rhs_scale {
            return Err(format!(
                "dependent row {r} is inconsistent (residual {:.3e})",
                work[r][num_vars]
            ));
        }
    }
    kept.sort_unstable();
    let mut keep_flag = vec![false; p];
    for &k in &kept {
        keep_flag[k] = true;
    }
    Ok(rows
        .into_iter()
        .enumerate()
        .filter(|(r, _)| keep_flag[*r])
        .map(|(_, row)| row)
        .collect())
}
