//! Assembly of the truncated linear constraints `A s = b` and cost row `c`
//! from the weak formulation of the control problem.
//!
//! Five occupation measures carry the problem: the interior measure on
//! (t, x, y, z1, z2) and four boundary measures on the faces t = 0, t = 1,
//! x = 0 and x = 1 of the time-space square. Test monomials
//! `phi = t^a1 x^a2 y^a3` generate one constraint row per admissible
//! monomial and equation:
//!
//! * time Stokes rows couple the interior measure with the t = 0 / t = 1
//!   faces,
//! * space Stokes rows couple it with the x = 0 / x = 1 faces,
//! * domain rows test the PDE itself (integrated by parts in space),
//! * boundary-data rows test the Dirichlet conditions and the initial
//!   condition, whose known part moves to the right-hand side,
//! * marginal rows pin the (t, x)-marginal of every boundary measure to the
//!   surface measure of its face; optional redundant rows do the same for
//!   the interior measure.
//!
//! All variables are (optionally) mapped affinely onto [-1, 1] before moment
//! indexing; the monomial basis on the original boxes is noticeably worse
//! conditioned.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::polybasis::{
    basis_size, box_moment_exact, monomial_list, ratio_to_f64, symmetric_unit_moment_exact,
    MultiIndex, Polynomial,
};
use crate::problem::{HeatControlProblem, RelaxationConfig, TestDegreePolicy};
use crate::sdpcone::PsdBlockDescriptor;
use crate::{Error, Result};

/// Global variable identities shared by every measure space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    Y,
    Z1,
    Z2,
    U,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
            Var::Z1 => "z1",
            Var::Z2 => "z2",
            Var::U => "u",
        }
    }

    pub fn parse(s: &str) -> Option<Var> {
        Some(match s {
            "t" => Var::T,
            "x" => Var::X,
            "y" => Var::Y,
            "z1" => Var::Z1,
            "z2" => Var::Z2,
            "u" => Var::U,
            _ => return None,
        })
    }
}

/// All variables in the canonical full-space order.
pub const FULL_VARS: [Var; 6] = [Var::T, Var::X, Var::Y, Var::Z1, Var::Z2, Var::U];

fn full_index(v: Var) -> usize {
    FULL_VARS.iter().position(|w| *w == v).unwrap()
}

/// The five occupation measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasureId {
    /// Interior measure on (t, x, y, z1, z2).
    Mu,
    /// Initial face t = 0, variables (x, y, z1, z2).
    MuI,
    /// Final face t = 1, variables (x, y, z1, z2).
    MuF,
    /// Wall face x = 0, variables (t, y, z1, z2).
    MuW,
    /// Control face x = 1, variables (t, y, z1, z2, u).
    MuE,
}

impl MeasureId {
    pub const ALL: [MeasureId; 5] = [
        MeasureId::Mu,
        MeasureId::MuI,
        MeasureId::MuF,
        MeasureId::MuW,
        MeasureId::MuE,
    ];

    pub fn vars(self) -> &'static [Var] {
        match self {
            MeasureId::Mu => &[Var::T, Var::X, Var::Y, Var::Z1, Var::Z2],
            MeasureId::MuI | MeasureId::MuF => &[Var::X, Var::Y, Var::Z1, Var::Z2],
            MeasureId::MuW => &[Var::T, Var::Y, Var::Z1, Var::Z2],
            MeasureId::MuE => &[Var::T, Var::Y, Var::Z1, Var::Z2, Var::U],
        }
    }

    /// Fixed variable and its value on the face; `None` for the interior.
    pub fn fixed(self) -> Option<(Var, f64)> {
        match self {
            MeasureId::Mu => None,
            MeasureId::MuI => Some((Var::T, 0.0)),
            MeasureId::MuF => Some((Var::T, 1.0)),
            MeasureId::MuW => Some((Var::X, 0.0)),
            MeasureId::MuE => Some((Var::X, 1.0)),
        }
    }

    /// The time-space variable that parameterizes the face.
    pub fn face_parameter(self) -> Option<Var> {
        match self {
            MeasureId::Mu => None,
            MeasureId::MuI | MeasureId::MuF => Some(Var::X),
            MeasureId::MuW | MeasureId::MuE => Some(Var::T),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeasureId::Mu => "mu",
            MeasureId::MuI => "mu_I",
            MeasureId::MuF => "mu_F",
            MeasureId::MuW => "mu_W",
            MeasureId::MuE => "mu_E",
        }
    }

    pub fn parse(s: &str) -> Option<MeasureId> {
        MeasureId::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Affine change of variable v = center + half * v_scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarScaling {
    pub center: f64,
    pub half: f64,
}

impl VarScaling {
    pub fn identity() -> Self {
        VarScaling {
            center: 0.0,
            half: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.center == 0.0 && self.half == 1.0
    }
}

fn var_scaling(problem: &HeatControlProblem, v: Var, scale: bool) -> VarScaling {
    if !scale {
        return VarScaling::identity();
    }
    let b = match v {
        Var::T | Var::X => return VarScaling { center: 0.5, half: 0.5 },
        Var::Y => problem.y_box,
        Var::Z1 => problem.z1_box,
        Var::Z2 => problem.z2_box,
        Var::U => problem.u_box,
    };
    VarScaling {
        center: b.center(),
        half: b.half_width(),
    }
}

/// Moment-vector slice of one measure: its variables, scaling, monomial list
/// up to the relaxation degree, and offset into the stacked vector.
#[derive(Debug, Clone)]
pub struct MeasureLayout {
    pub id: MeasureId,
    pub vars: Vec<Var>,
    pub scaling: Vec<VarScaling>,
    pub monomials: Vec<MultiIndex>,
    pub offset: usize,
}

impl MeasureLayout {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// Position of a monomial within this measure's slice.
    pub fn index_of(&self, m: &MultiIndex) -> Option<usize> {
        self.monomials.binary_search(m).ok()
    }

    /// Global column of a monomial.
    pub fn col(&self, m: &MultiIndex) -> Option<usize> {
        self.index_of(m).map(|i| i + self.offset)
    }
}

/// Stacked moment-vector layout for all five measures.
#[derive(Debug, Clone)]
pub struct Layout {
    pub degree: u32,
    pub scaled: bool,
    pub measures: Vec<MeasureLayout>,
    pub total: usize,
}

impl Layout {
    pub fn build(problem: &HeatControlProblem, config: &RelaxationConfig) -> Result<Layout> {
        let mut measures = Vec::new();
        let mut offset = 0;
        for id in MeasureId::ALL {
            let vars: Vec<Var> = id.vars().to_vec();
            let scaling = vars
                .iter()
                .map(|&v| var_scaling(problem, v, config.scale_vars))
                .collect();
            let monomials = monomial_list(vars.len(), config.degree);
            let expected = basis_size(vars.len(), config.degree)?;
            debug_assert_eq!(monomials.len(), expected);
            let ml = MeasureLayout {
                id,
                vars,
                scaling,
                monomials,
                offset,
            };
            offset += ml.len();
            measures.push(ml);
        }
        Ok(Layout {
            degree: config.degree,
            scaled: config.scale_vars,
            measures,
            total: offset,
        })
    }

    pub fn measure(&self, id: MeasureId) -> &MeasureLayout {
        self.measures
            .iter()
            .find(|m| m.id == id)
            .expect("all measures present")
    }

    /// Rewrites a full-space integrand for a measure: substitutes the fixed
    /// face coordinate, rescales every variable, and re-expresses the result
    /// over the measure's own variable list. Errors if the integrand exceeds
    /// the degree budget.
    pub fn prepare_integrand(
        &self,
        id: MeasureId,
        poly_full: &Polynomial,
    ) -> Result<Polynomial> {
        let ml = self.measure(id);
        let mut p = poly_full.clone();
        if let Some((v, value)) = id.fixed() {
            p = p.substitute_value(full_index(v), value);
        }
        if p.degree() > self.degree && !p.is_zero() {
            return Err(Error::InvalidConfig(format!(
                "integrand degree {} exceeds relaxation degree {} on {}",
                p.degree(),
                self.degree,
                id.name()
            )));
        }
        for (k, &v) in ml.vars.iter().enumerate() {
            let s = ml.scaling[k];
            if !s.is_identity() {
                p = p.substitute_affine(full_index(v), s.center, s.half);
            }
        }
        p.embed(&FULL_VARS, &ml.vars)
    }

    /// Expresses an unscaled monomial of a measure as a linear combination
    /// of scaled moments: returns (scaled index, coefficient) pairs.
    pub fn unscaled_monomial_in_scaled_basis(
        &self,
        id: MeasureId,
        mono: &MultiIndex,
    ) -> Vec<(usize, f64)> {
        let ml = self.measure(id);
        let mut p = Polynomial::monomial(mono.clone(), 1.0);
        for (k, s) in ml.scaling.iter().enumerate() {
            if !s.is_identity() {
                p = p.substitute_affine(k, s.center, s.half);
            }
        }
        p.terms()
            .map(|(m, c)| (ml.index_of(m).expect("degree preserved"), c))
            .collect()
    }
}

/// Row provenance, used by diagnostics and the presolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Stokes identity in time (couples mu, mu_I, mu_F).
    StokesTime,
    /// Stokes identity in space (couples mu, mu_W, mu_E).
    StokesSpace,
    /// The PDE tested against phi (couples mu, mu_W, mu_E).
    Domain,
    /// Dirichlet/initial data rows (couples mu_I, mu_E, mu_W).
    BoundaryData,
    /// Marginal of a boundary measure pinned to its face measure.
    Marginal(MeasureId),
    /// Redundant interior marginal rows.
    InteriorMarginal,
}

impl RowKind {
    pub fn equation_name(self) -> &'static str {
        match self {
            RowKind::StokesTime => "time-stokes",
            RowKind::StokesSpace => "space-stokes",
            RowKind::Domain => "pde-domain",
            RowKind::BoundaryData => "boundary-data",
            RowKind::Marginal(_) => "marginal",
            RowKind::InteriorMarginal => "interior-marginal",
        }
    }
}

/// One sparse constraint row: `sum_k vals[k] * s[cols[k]] = rhs`.
#[derive(Debug, Clone)]
pub struct SparseRow {
    pub kind: RowKind,
    /// Test monomial exponents (a1, a2, a3) for the weak-form rows.
    pub test: Option<MultiIndex>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub rhs: f64,
}

impl SparseRow {
    /// Row residual on a full moment vector.
    pub fn residual(&self, s: &[f64]) -> f64 {
        let lhs: f64 = self
            .cols
            .iter()
            .zip(self.vals.iter())
            .map(|(&c, &v)| v * s[c])
            .sum();
        lhs - self.rhs
    }
}

/// The assembled truncated program: layout, constraint rows, cost and PSD
/// cone blocks.
#[derive(Debug, Clone)]
pub struct RelaxationProgram {
    pub layout: Layout,
    pub rows: Vec<SparseRow>,
    /// Cost entries (column, coefficient); minimized.
    pub cost: Vec<(usize, f64)>,
    pub cones: Vec<PsdBlockDescriptor>,
}

impl RelaxationProgram {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.layout.total
    }

    /// Cost value on a full moment vector.
    pub fn cost_value(&self, s: &[f64]) -> f64 {
        self.cost.iter().map(|&(c, v)| v * s[c]).sum()
    }

    /// Max |A s - b| over a row subset.
    pub fn max_residual(&self, s: &[f64], filter: impl Fn(&SparseRow) -> bool) -> f64 {
        self.rows
            .iter()
            .filter(|r| filter(r))
            .map(|r| r.residual(s).abs())
            .fold(0.0, f64::max)
    }
}

struct RowBuilder {
    entries: BTreeMap<usize, f64>,
    rhs: f64,
}

impl RowBuilder {
    fn new() -> Self {
        RowBuilder {
            entries: BTreeMap::new(),
            rhs: 0.0,
        }
    }

    fn add_poly(&mut self, layout: &Layout, id: MeasureId, p: &Polynomial, sign: f64) {
        let ml = layout.measure(id);
        for (m, c) in p.terms() {
            let col = ml
                .col(m)
                .expect("integrand degree within layout by construction");
            let v = self.entries.entry(col).or_insert(0.0);
            *v += sign * c;
        }
    }

    fn finish(self, kind: RowKind, test: Option<MultiIndex>) -> Option<SparseRow> {
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (c, v) in self.entries {
            if v != 0.0 {
                cols.push(c);
                vals.push(v);
            }
        }
        if cols.is_empty() && self.rhs == 0.0 {
            return None;
        }
        Some(SparseRow {
            kind,
            test,
            cols,
            vals,
            rhs: self.rhs,
        })
    }
}

/// Degree of an integrand for admission checks; zero polynomials never
/// block a test function.
fn admissible(p: &Polynomial, d: u32) -> bool {
    p.is_zero() || p.degree() <= d
}

/// Assembles the linear constraint rows (A, b) of the relaxation.
pub fn assemble_constraints(
    problem: &HeatControlProblem,
    config: &RelaxationConfig,
) -> Result<RelaxationProgram> {
    problem.validate()?;
    config.validate(problem)?;
    let layout = Layout::build(problem, config)?;
    let d = config.degree;

    let nf = FULL_VARS.len();
    let t = full_index(Var::T);
    let x = full_index(Var::X);
    let y = full_index(Var::Y);
    let z1 = full_index(Var::Z1);
    let z2 = full_index(Var::Z2);
    let u = full_index(Var::U);

    let z1p = Polynomial::var(nf, z1);
    let z2p = Polynomial::var(nf, z2);
    let yp = Polynomial::var(nf, y);
    let up = Polynomial::var(nf, u);

    // Reaction f(y) and initial condition y0(x) in the full space.
    let reaction = problem.reaction().embed(&[Var::Y], &FULL_VARS)?;
    let y0 = problem.y0.embed(&[Var::X], &FULL_VARS)?;
    let y0_deg = problem.y0.degree();
    let reaction_deg = problem.reaction().degree();

    // Uniform policy: worst-case degree inflation per equation. A negative
    // cap admits nothing (e.g. deg y0 > d) and surfaces as DegreeTooSmall.
    let caps_uniform: [i64; 4] = [
        d as i64,                              // time Stokes
        d as i64,                              // space Stokes
        d as i64 - reaction_deg.max(1) as i64, // domain
        d as i64 - y0_deg.max(1) as i64,       // boundary data
    ];

    let mut rows = Vec::new();
    let test_monos = monomial_list(3, d);
    let mut admitted = [0usize; 4];

    for phi3 in &test_monos {
        let phi = Polynomial::monomial(phi3.clone(), 1.0).embed(&[Var::T, Var::X, Var::Y], &FULL_VARS)?;
        let dphi_dt = phi.diff(t);
        let dphi_dx = phi.diff(x);
        let dphi_dy = phi.diff(y);
        let phi_deg = phi3.degree();

        // --- time Stokes: d(phi)/dt over the graph.
        {
            let interior = dphi_dt.add(&z1p.mul(&dphi_dy)?)?;
            let on_i = phi.substitute_value(t, 0.0);
            let on_f = phi.substitute_value(t, 1.0);
            let pass = match config.test_degree_policy {
                TestDegreePolicy::PerIntegrand => {
                    admissible(&interior, d) && admissible(&on_i, d) && admissible(&on_f, d)
                }
                TestDegreePolicy::Uniform => (phi_deg as i64) <= caps_uniform[0],
            };
            if pass {
                admitted[0] += 1;
                let mut rb = RowBuilder::new();
                rb.add_poly(&layout, MeasureId::Mu, &layout.prepare_integrand(MeasureId::Mu, &interior)?, 1.0);
                rb.add_poly(&layout, MeasureId::MuI, &layout.prepare_integrand(MeasureId::MuI, &on_i)?, 1.0);
                rb.add_poly(&layout, MeasureId::MuF, &layout.prepare_integrand(MeasureId::MuF, &on_f)?, -1.0);
                if let Some(r) = rb.finish(RowKind::StokesTime, Some(phi3.clone())) {
                    rows.push(r);
                }
            }
        }

        // --- space Stokes: d(phi)/dx over the graph.
        {
            let interior = dphi_dx.add(&z2p.mul(&dphi_dy)?)?;
            let on_w = phi.substitute_value(x, 0.0);
            let on_e = phi.substitute_value(x, 1.0);
            let pass = match config.test_degree_policy {
                TestDegreePolicy::PerIntegrand => {
                    admissible(&interior, d) && admissible(&on_w, d) && admissible(&on_e, d)
                }
                TestDegreePolicy::Uniform => (phi_deg as i64) <= caps_uniform[1],
            };
            if pass {
                admitted[1] += 1;
                let mut rb = RowBuilder::new();
                rb.add_poly(&layout, MeasureId::Mu, &layout.prepare_integrand(MeasureId::Mu, &interior)?, 1.0);
                rb.add_poly(&layout, MeasureId::MuW, &layout.prepare_integrand(MeasureId::MuW, &on_w)?, 1.0);
                rb.add_poly(&layout, MeasureId::MuE, &layout.prepare_integrand(MeasureId::MuE, &on_e)?, -1.0);
                if let Some(r) = rb.finish(RowKind::StokesSpace, Some(phi3.clone())) {
                    rows.push(r);
                }
            }
        }

        // --- domain: the PDE tested with phi, diffusion integrated by parts.
        {
            let bulk = phi
                .mul(&z1p.sub(&reaction)?)?
                .add(&dphi_dx.add(&z2p.mul(&dphi_dy)?)?.mul(&z2p)?.scale(problem.lambda))?;
            let flux = phi.mul(&z2p)?.scale(problem.lambda);
            let on_w = flux.substitute_value(x, 0.0);
            let on_e = flux.substitute_value(x, 1.0);
            let pass = match config.test_degree_policy {
                TestDegreePolicy::PerIntegrand => {
                    admissible(&bulk, d) && admissible(&on_w, d) && admissible(&on_e, d)
                }
                TestDegreePolicy::Uniform => (phi_deg as i64) <= caps_uniform[2],
            };
            if pass {
                admitted[2] += 1;
                let mut rb = RowBuilder::new();
                rb.add_poly(&layout, MeasureId::Mu, &layout.prepare_integrand(MeasureId::Mu, &bulk)?, 1.0);
                rb.add_poly(&layout, MeasureId::MuW, &layout.prepare_integrand(MeasureId::MuW, &on_w)?, 1.0);
                rb.add_poly(&layout, MeasureId::MuE, &layout.prepare_integrand(MeasureId::MuE, &on_e)?, -1.0);
                if let Some(r) = rb.finish(RowKind::Domain, Some(phi3.clone())) {
                    rows.push(r);
                }
            }
        }

        // --- boundary data: initial condition and the two Dirichlet faces.
        {
            let on_i = phi.mul(&yp.sub(&y0)?)?.substitute_value(t, 0.0);
            let on_e = phi.mul(&yp.sub(&up)?)?.substitute_value(x, 1.0);
            let on_w = phi.mul(&yp)?.substitute_value(x, 0.0);
            // The part of the initial-condition integrand that depends on x
            // alone is a known integral (the face marginal is the Lebesgue
            // measure of the face); it moves to the right-hand side and does
            // not consume degree budget. The remainder must fit in degree d.
            // Row reads [moments] + [known integral] = 0, so the known part
            // lands negated on the right-hand side.
            let mut moment_part = Polynomial::zero(nf);
            let mut rhs_float = 0.0;
            for (m, c) in on_i.terms() {
                let pure_x = (0..nf).all(|k| k == x || m.exponent(k) == 0);
                if pure_x {
                    let mom = ratio_to_f64(box_moment_exact(&MultiIndex(vec![m.exponent(x)])));
                    rhs_float -= mom * c;
                } else {
                    moment_part = moment_part.add(&Polynomial::monomial(m.clone(), c))?;
                }
            }
            let pass = match config.test_degree_policy {
                TestDegreePolicy::PerIntegrand => {
                    admissible(&moment_part, d) && admissible(&on_e, d) && admissible(&on_w, d)
                }
                TestDegreePolicy::Uniform => (phi_deg as i64) <= caps_uniform[3],
            };
            if pass {
                admitted[3] += 1;
                let mut rb = RowBuilder::new();
                rb.rhs = rhs_float;
                rb.add_poly(&layout, MeasureId::MuI, &layout.prepare_integrand(MeasureId::MuI, &moment_part)?, 1.0);
                rb.add_poly(&layout, MeasureId::MuE, &layout.prepare_integrand(MeasureId::MuE, &on_e)?, 1.0);
                rb.add_poly(&layout, MeasureId::MuW, &layout.prepare_integrand(MeasureId::MuW, &on_w)?, 1.0);
                if let Some(r) = rb.finish(RowKind::BoundaryData, Some(phi3.clone())) {
                    rows.push(r);
                }
            }
        }
    }

    for (k, name) in ["time-stokes", "space-stokes", "pde-domain", "boundary-data"]
        .iter()
        .enumerate()
    {
        if admitted[k] == 0 {
            return Err(Error::DegreeTooSmall {
                equation: name,
                degree: d,
            });
        }
    }

    // --- boundary marginals: the (t,x)-marginal of each face measure is the
    // Lebesgue measure of the unit face.
    for id in [MeasureId::MuI, MeasureId::MuF, MeasureId::MuW, MeasureId::MuE] {
        let ml = layout.measure(id);
        let param = id.face_parameter().unwrap();
        let vpos = ml.vars.iter().position(|&v| v == param).unwrap();
        for a in 0..=d {
            let mut mono = MultiIndex::zeros(ml.num_vars());
            mono.0[vpos] = a;
            let rhs = if config.scale_vars {
                symmetric_unit_moment_exact(a)
            } else {
                box_moment_exact(&MultiIndex(vec![a]))
            };
            let col = ml.col(&mono).unwrap();
            rows.push(SparseRow {
                kind: RowKind::Marginal(id),
                test: Some(MultiIndex(vec![a])),
                cols: vec![col],
                vals: vec![1.0],
                rhs: ratio_to_f64(rhs),
            });
        }
    }

    // --- redundant interior marginals (valid for occupation measures,
    // implied by the Stokes rows at full degree; they noticeably improve
    // interior-point conditioning).
    if config.redundant_marginals {
        let ml = layout.measure(MeasureId::Mu);
        let tpos = ml.vars.iter().position(|&v| v == Var::T).unwrap();
        let xpos = ml.vars.iter().position(|&v| v == Var::X).unwrap();
        for ab in monomial_list(2, d) {
            let (a, b) = (ab.exponent(0), ab.exponent(1));
            let mut mono = MultiIndex::zeros(ml.num_vars());
            mono.0[tpos] = a;
            mono.0[xpos] = b;
            let rhs = if config.scale_vars {
                symmetric_unit_moment_exact(a) * symmetric_unit_moment_exact(b)
            } else {
                box_moment_exact(&MultiIndex(vec![a, b]))
            };
            let col = ml.col(&mono).unwrap();
            rows.push(SparseRow {
                kind: RowKind::InteriorMarginal,
                test: Some(ab),
                cols: vec![col],
                vals: vec![1.0],
                rhs: ratio_to_f64(rhs),
            });
        }
    }

    Ok(RelaxationProgram {
        layout,
        rows,
        cost: Vec::new(),
        cones: Vec::new(),
    })
}

/// Fills the cost row: 1/2 the interior moment of y² plus R/2 the control
/// moment of u².
pub fn assemble_cost(problem: &HeatControlProblem, program: &mut RelaxationProgram) -> Result<()> {
    let nf = FULL_VARS.len();
    let y2 = Polynomial::var(nf, full_index(Var::Y)).pow(2);
    let u2 = Polynomial::var(nf, full_index(Var::U)).pow(2);
    let mut cost: BTreeMap<usize, f64> = BTreeMap::new();
    for (id, poly, w) in [
        (MeasureId::Mu, &y2, 0.5),
        (MeasureId::MuE, &u2, 0.5 * problem.cost_weight),
    ] {
        let p = program.layout.prepare_integrand(id, poly)?;
        let ml = program.layout.measure(id);
        for (m, c) in p.terms() {
            *cost.entry(ml.col(m).unwrap()).or_insert(0.0) += w * c;
        }
    }
    program.cost = cost.into_iter().filter(|&(_, v)| v != 0.0).collect();
    Ok(())
}

/// One-shot assembly: constraints, cost and cone blocks.
pub fn assemble(
    problem: &HeatControlProblem,
    config: &RelaxationConfig,
) -> Result<RelaxationProgram> {
    let mut program = assemble_constraints(problem, config)?;
    assemble_cost(problem, &mut program)?;
    crate::sdpcone::attach_cones(problem, config, &mut program)?;
    Ok(program)
}

/// Serializes (A, b, c, layout) in the documented sparse text format.
pub fn dump_program(program: &RelaxationProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# relaxation program v1");
    let _ = writeln!(out, "degree {}", program.layout.degree);
    let _ = writeln!(out, "scaled {}", program.layout.scaled);
    let _ = writeln!(
        out,
        "size rows {} cols {}",
        program.rows.len(),
        program.layout.total
    );
    for ml in &program.layout.measures {
        let vars: Vec<&str> = ml.vars.iter().map(|v| v.name()).collect();
        let _ = writeln!(
            out,
            "measure {} offset {} size {} vars {}",
            ml.id.name(),
            ml.offset,
            ml.len(),
            vars.join(" ")
        );
    }
    for (i, r) in program.rows.iter().enumerate() {
        for (c, v) in r.cols.iter().zip(r.vals.iter()) {
            let _ = writeln!(out, "A {} {} {:e}", i, c, v);
        }
        if r.rhs != 0.0 {
            let _ = writeln!(out, "b {} {:e}", i, r.rhs);
        }
    }
    for (c, v) in &program.cost {
        let _ = writeln!(out, "c {} {:e}", c, v);
    }
    out
}

/// Trajectory data on the graph of a smooth function: y(t, x), its
/// gradient, and the boundary control u(t).
pub struct GraphTrajectory<'a> {
    pub y: &'a dyn Fn(f64, f64) -> f64,
    pub z1: &'a dyn Fn(f64, f64) -> f64,
    pub z2: &'a dyn Fn(f64, f64) -> f64,
    pub u: &'a dyn Fn(f64) -> f64,
}

/// Moments of every layout monomial for the occupation measures of a given
/// trajectory, computed by tensor Gauss-Legendre quadrature over the graph.
/// This is the independent oracle used to validate the assembled rows.
pub fn trajectory_moments(layout: &Layout, traj: &GraphTrajectory, quad_points: usize) -> Vec<f64> {
    let (nodes, weights) = crate::quad::gauss_legendre_unit(quad_points);
    let mut s = vec![0.0; layout.total];
    for ml in &layout.measures {
        let eval_point = |tv: f64, xv: f64| -> Vec<f64> {
            let yv = (traj.y)(tv, xv);
            let z1v = (traj.z1)(tv, xv);
            let z2v = (traj.z2)(tv, xv);
            let uv = (traj.u)(tv);
            ml.vars
                .iter()
                .zip(ml.scaling.iter())
                .map(|(&v, sc)| {
                    let raw = match v {
                        Var::T => tv,
                        Var::X => xv,
                        Var::Y => yv,
                        Var::Z1 => z1v,
                        Var::Z2 => z2v,
                        Var::U => uv,
                    };
                    (raw - sc.center) / sc.half
                })
                .collect()
        };
        let mut acc = vec![0.0; ml.len()];
        match ml.id.fixed() {
            None => {
                for (&tn, &tw) in nodes.iter().zip(weights.iter()) {
                    for (&xn, &xw) in nodes.iter().zip(weights.iter()) {
                        let point = eval_point(tn, xn);
                        for (k, mono) in ml.monomials.iter().enumerate() {
                            let mut term = tw * xw;
                            for (vi, &e) in mono.0.iter().enumerate() {
                                term *= point[vi].powi(e as i32);
                            }
                            acc[k] += term;
                        }
                    }
                }
            }
            Some((fixed_var, value)) => {
                for (&pn, &pw) in nodes.iter().zip(weights.iter()) {
                    let (tv, xv) = if fixed_var == Var::T {
                        (value, pn)
                    } else {
                        (pn, value)
                    };
                    let point = eval_point(tv, xv);
                    for (k, mono) in ml.monomials.iter().enumerate() {
                        let mut term = pw;
                        for (vi, &e) in mono.0.iter().enumerate() {
                            term *= point[vi].powi(e as i32);
                        }
                        acc[k] += term;
                    }
                }
            }
        }
        s[ml.offset..ml.offset + ml.len()].copy_from_slice(&acc);
    }
    s
}
