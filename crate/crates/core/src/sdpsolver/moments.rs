//! Pseudo-moment container and its interchange text format.
//!
//! Downstream stages (controller extraction, the CLI) consume moments of
//! the *original* variables; the solver's internal scaling is undone here.
//! The dump embeds the problem configuration so a moments file is
//! self-contained.

use std::fs;
use std::path::Path;

use crate::polybasis::MultiIndex;
use crate::problem::{HeatControlProblem, ProblemConfig, RelaxationConfig};
use crate::weakform::{MeasureId, RelaxationProgram, Var};
use crate::{Error, Result};

use super::{ConicSolution, SolveStatus};

/// Unscaled truncated moment list of one measure, in graded-lex order.
#[derive(Debug, Clone)]
pub struct MeasureMoments {
    pub id: MeasureId,
    pub vars: Vec<Var>,
    pub moments: Vec<(MultiIndex, f64)>,
}

impl MeasureMoments {
    /// Moment lookup by exponent vector.
    pub fn moment(&self, mono: &MultiIndex) -> Option<f64> {
        self.moments
            .binary_search_by(|(m, _)| m.cmp(mono))
            .ok()
            .map(|i| self.moments[i].1)
    }
}

/// Truncated pseudo-moment vectors of the five measures, plus the solve
/// metadata and an echo of the problem they came from.
#[derive(Debug, Clone)]
pub struct PseudoMoments {
    pub degree: u32,
    pub status: SolveStatus,
    pub objective: f64,
    pub config: ProblemConfig,
    pub measures: Vec<MeasureMoments>,
}

impl PseudoMoments {
    /// Converts a solver result on a (possibly scaled) program back to
    /// moments of the original variables.
    pub fn from_solution(
        problem: &HeatControlProblem,
        relax: &RelaxationConfig,
        program: &RelaxationProgram,
        solution: &ConicSolution,
    ) -> PseudoMoments {
        let measures = program
            .layout
            .measures
            .iter()
            .map(|ml| {
                let moments = ml
                    .monomials
                    .iter()
                    .map(|mono| {
                        let value = if program.layout.scaled {
                            program
                                .layout
                                .unscaled_monomial_in_scaled_basis(ml.id, mono)
                                .iter()
                                .map(|&(i, c)| c * solution.s[ml.offset + i])
                                .sum()
                        } else {
                            solution.s[ml.offset + ml.index_of(mono).unwrap()]
                        };
                        (mono.clone(), value)
                    })
                    .collect();
                MeasureMoments {
                    id: ml.id,
                    vars: ml.vars.clone(),
                    moments,
                }
            })
            .collect();
        PseudoMoments {
            degree: relax.degree,
            status: solution.status,
            objective: solution.objective,
            config: ProblemConfig::from_problem(problem, relax),
            measures,
        }
    }

    pub fn measure(&self, id: MeasureId) -> &MeasureMoments {
        self.measures
            .iter()
            .find(|m| m.id == id)
            .expect("five measures")
    }

    /// Moment of a monomial given as (Var, exponent) pairs; variables of
    /// the measure that are absent get exponent 0.
    pub fn moment_of(&self, id: MeasureId, powers: &[(Var, u32)]) -> Option<f64> {
        let mm = self.measure(id);
        let mut mono = MultiIndex::zeros(mm.vars.len());
        for &(v, e) in powers {
            let pos = mm.vars.iter().position(|&w| w == v)?;
            mono.0[pos] += e;
        }
        mm.moment(&mono)
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "# pseudo-moments v1");
        let _ = writeln!(out, "degree {}", self.degree);
        let _ = writeln!(out, "status {}", self.status.name());
        let _ = writeln!(out, "objective {:e}", self.objective);
        let _ = writeln!(out, "config-begin");
        let _ = writeln!(
            out,
            "{}",
            self.config
                .to_string_pretty()
                .unwrap_or_default()
                .trim_end()
        );
        let _ = writeln!(out, "config-end");
        for mm in &self.measures {
            let vars: Vec<&str> = mm.vars.iter().map(|v| v.name()).collect();
            let _ = writeln!(
                out,
                "measure {} vars {} count {}",
                mm.id.name(),
                vars.join(" "),
                mm.moments.len()
            );
            for (mono, v) in &mm.moments {
                let exps: Vec<String> = mono.0.iter().map(|e| e.to_string()).collect();
                let _ = writeln!(out, "m {} {:e}", exps.join(" "), v);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn from_text(text: &str) -> Result<PseudoMoments> {
        let perr = |d: &str| Error::parse("pseudo-moments", d);
        let mut degree = None;
        let mut status = SolveStatus::Optimal;
        let mut objective = 0.0;
        let mut config_text = String::new();
        let mut measures: Vec<MeasureMoments> = Vec::new();
        let mut in_config = false;
        for line in text.lines() {
            let line_trim = line.trim_end();
            if in_config {
                if line_trim == "config-end" {
                    in_config = false;
                } else {
                    config_text.push_str(line_trim);
                    config_text.push('\n');
                }
                continue;
            }
            let line = line_trim.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("degree") => {
                    degree = Some(
                        toks.next()
                            .ok_or_else(|| perr("degree"))?
                            .parse()
                            .map_err(|_| perr("degree"))?,
                    );
                }
                Some("status") => {
                    let name = toks.next().ok_or_else(|| perr("status"))?;
                    status = SolveStatus::parse(name).ok_or_else(|| perr("status"))?;
                }
                Some("objective") => {
                    objective = toks
                        .next()
                        .ok_or_else(|| perr("objective"))?
                        .parse()
                        .map_err(|_| perr("objective"))?;
                }
                Some("config-begin") => in_config = true,
                Some("measure") => {
                    let name = toks.next().ok_or_else(|| perr("measure name"))?;
                    let id = MeasureId::parse(name).ok_or_else(|| perr("measure name"))?;
                    let rest: Vec<&str> = toks.collect();
                    let vars_pos = rest
                        .iter()
                        .position(|&t| t == "vars")
                        .ok_or_else(|| perr("vars"))?;
                    let count_pos = rest
                        .iter()
                        .position(|&t| t == "count")
                        .ok_or_else(|| perr("count"))?;
                    let vars: Vec<Var> = rest[vars_pos + 1..count_pos]
                        .iter()
                        .map(|t| Var::parse(t).ok_or_else(|| perr("var name")))
                        .collect::<Result<_>>()?;
                    measures.push(MeasureMoments {
                        id,
                        vars,
                        moments: Vec::new(),
                    });
                }
                Some("m") => {
                    let mm = measures.last_mut().ok_or_else(|| perr("m before measure"))?;
                    let toks: Vec<&str> = toks.collect();
                    if toks.len() != mm.vars.len() + 1 {
                        return Err(perr("moment arity"));
                    }
                    let exps: Vec<u32> = toks[..mm.vars.len()]
                        .iter()
                        .map(|t| t.parse::<u32>().map_err(|_| perr("exponent")))
                        .collect::<Result<_>>()?;
                    let v: f64 = toks[mm.vars.len()]
                        .parse()
                        .map_err(|_| perr("moment value"))?;
                    mm.moments.push((MultiIndex(exps), v));
                }
                _ => return Err(perr("unknown line")),
            }
        }
        let config: ProblemConfig = toml::from_str(&config_text)
            .map_err(|e| Error::parse("pseudo-moments config", e.to_string()))?;
        for mm in &mut measures {
            mm.moments.sort_by(|a, b| a.0.cmp(&b.0));
        }
        Ok(PseudoMoments {
            degree: degree.ok_or_else(|| perr("missing degree"))?,
            status,
            objective,
            config,
            measures,
        })
    }

    pub fn load(path: &Path) -> Result<PseudoMoments> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        PseudoMoments::from_text(&text)
    }
}
