//! Sparse SDPA interchange format (.dat-s) writer and reader.
//!
//! The conic problem `min c'x, A x = b, M_j(x) = F0_j + sum x_i F_{j,i} PSD`
//! maps onto the standard form `min c'x, X = sum x_i F_i - F0, X PSD` as
//! follows: every PSD block is written as-is (with its constant part
//! negated, matching the standard-form sign), and the equality rows are
//! appended as one diagonal block of size 2 * #rows where row r occupies
//! positions 2r+1 (the inequality `A_r x - b_r >= 0`) and 2r+2 (its
//! negation). A reader aware of this layout reconstructs A, b and the block
//! structure exactly.

use std::fmt::Write as _;

use super::{ConicProblem, LinearMatrixBlock};
use crate::{Error, Result};

/// Writes the problem in SDPA sparse format.
pub fn export_interchange(problem: &ConicProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\"conic interchange: psd blocks + paired equality diagonals\"");
    let _ = writeln!(out, "{}", problem.num_vars);
    let nblocks = problem.blocks.len() + usize::from(!problem.rows.is_empty());
    let _ = writeln!(out, "{}", nblocks);
    let mut sizes: Vec<String> = problem.blocks.iter().map(|b| b.size.to_string()).collect();
    if !problem.rows.is_empty() {
        sizes.push(format!("-{}", 2 * problem.rows.len()));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let mut c = vec![0.0; problem.num_vars];
    for &(i, w) in &problem.cost {
        c[i] += w;
    }
    let c_line: Vec<String> = c.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(out, "{}", c_line.join(" "));

    // PSD blocks: standard form has X = sum x_i F_i - F0, so the constant
    // part flips sign.
    for (bi, block) in problem.blocks.iter().enumerate() {
        for &(i, j, v) in &block.f0 {
            let _ = writeln!(out, "0 {} {} {} {:e}", bi + 1, j + 1, i + 1, -v);
        }
        for &(var, i, j, v) in &block.entries {
            let _ = writeln!(out, "{} {} {} {} {:e}", var + 1, bi + 1, j + 1, i + 1, v);
        }
    }
    // Equality rows as paired diagonal entries.
    if !problem.rows.is_empty() {
        let blk = problem.blocks.len() + 1;
        for (r, (cols, vals, rhs)) in problem.rows.iter().enumerate() {
            let pos_plus = 2 * r + 1;
            let pos_minus = 2 * r + 2;
            for (&cidx, &v) in cols.iter().zip(vals.iter()) {
                let _ = writeln!(out, "{} {} {} {} {:e}", cidx + 1, blk, pos_plus, pos_plus, v);
                let _ = writeln!(out, "{} {} {} {} {:e}", cidx + 1, blk, pos_minus, pos_minus, -v);
            }
            if *rhs != 0.0 {
                let _ = writeln!(out, "0 {} {} {} {:e}", blk, pos_plus, pos_plus, rhs);
                let _ = writeln!(out, "0 {} {} {} {:e}", blk, pos_minus, pos_minus, -rhs);
            }
        }
    }
    out
}

/// Parses a file produced by `export_interchange` back into a conic
/// problem. General SDPA files without the paired-diagonal convention are
/// rejected.
pub fn parse_interchange(text: &str) -> Result<ConicProblem> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let perr = |d: &str| Error::parse("sdpa", d);

    let num_vars: usize = lines
        .next()
        .ok_or_else(|| perr("missing variable count"))?
        .parse()
        .map_err(|_| perr("bad variable count"))?;
    let nblocks: usize = lines
        .next()
        .ok_or_else(|| perr("missing block count"))?
        .parse()
        .map_err(|_| perr("bad block count"))?;
    let sizes_line = lines.next().ok_or_else(|| perr("missing block sizes"))?;
    let sizes: Vec<i64> = sizes_line
        .split(|ch: char| ch.is_whitespace() || ch == ',' || ch == '(' || ch == ')' || ch == '{' || ch == '}')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<i64>().map_err(|_| perr("bad block size")))
        .collect::<Result<_>>()?;
    if sizes.len() != nblocks {
        return Err(perr("block count mismatch"));
    }
    let c_line = lines.next().ok_or_else(|| perr("missing objective"))?;
    let c_vals: Vec<f64> = c_line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| perr("bad objective entry")))
        .collect::<Result<_>>()?;
    if c_vals.len() != num_vars {
        return Err(perr("objective length mismatch"));
    }

    let diag_block = sizes.iter().position(|&s| s < 0);
    let n_psd = diag_block.unwrap_or(nblocks);
    if let Some(db) = diag_block {
        if db != nblocks - 1 {
            return Err(perr("diagonal block must come last"));
        }
        if sizes[db] % 2 != 0 {
            return Err(perr("equality diagonal block must have even size"));
        }
    }
    let num_rows = diag_block.map_or(0, |db| (-sizes[db]) as usize / 2);

    let mut blocks: Vec<LinearMatrixBlock> = sizes[..n_psd]
        .iter()
        .enumerate()
        .map(|(i, &s)| LinearMatrixBlock {
            size: s as usize,
            f0: Vec::new(),
            entries: Vec::new(),
            label: format!("block{}", i + 1),
        })
        .collect();
    let mut rows: Vec<(Vec<usize>, Vec<f64>, f64)> = vec![(vec![], vec![], 0.0); num_rows];

    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(perr("entry line must have 5 fields"));
        }
        let matno: usize = toks[0].parse().map_err(|_| perr("bad matno"))?;
        let blkno: usize = toks[1].parse().map_err(|_| perr("bad block"))?;
        let i: usize = toks[2].parse().map_err(|_| perr("bad row index"))?;
        let j: usize = toks[3].parse().map_err(|_| perr("bad col index"))?;
        let v: f64 = toks[4].parse().map_err(|_| perr("bad value"))?;
        if blkno == 0 || blkno > nblocks {
            return Err(perr("block index out of range"));
        }
        if Some(blkno - 1) == diag_block {
            if i != j {
                return Err(perr("diagonal block entry off the diagonal"));
            }
            let r = (i - 1) / 2;
            let positive = (i - 1) % 2 == 0;
            if matno == 0 {
                if positive {
                    rows[r].2 = v;
                }
            } else if positive {
                rows[r].0.push(matno - 1);
                rows[r].1.push(v);
            }
        } else {
            let b = &mut blocks[blkno - 1];
            let (hi, lo) = if i >= j { (i - 1, j - 1) } else { (j - 1, i - 1) };
            if matno == 0 {
                b.f0.push((hi, lo, -v));
            } else {
                b.entries.push((matno - 1, hi, lo, v));
            }
        }
    }

    let cost = c_vals
        .into_iter()
        .enumerate()
        .filter(|&(_, v)| v != 0.0)
        .collect();
    Ok(ConicProblem {
        num_vars,
        cost,
        rows,
        blocks,
    })
}
