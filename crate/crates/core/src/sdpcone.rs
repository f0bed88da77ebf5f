//! Moment and localizing matrix structures: the PSD blocks that define
//! membership of each truncated moment vector in the outer approximation of
//! the measure cone.
//!
//! For a measure with n variables at half degree k = d/2, the moment matrix
//! has entry (i, j) equal to the moment of `beta_i * beta_j`; a localizing
//! matrix for a support polynomial g is built at the reduced order
//! `k - ceil(deg g / 2)` with entries `moment(beta_i * beta_j * g)`. Box
//! constraints enter as single quadratics `(v - v_min)(v_max - v)`, one
//! per free variable of the measure.

use nalgebra::DMatrix;

use crate::polybasis::{basis_size, monomial_list, Polynomial};
use crate::problem::{BoxBounds, HeatControlProblem, RelaxationConfig};
use crate::weakform::{Layout, MeasureId, RelaxationProgram, Var};
use crate::{Error, Result};

/// One PSD block: entry (i, j) of the instantiated matrix is the linear
/// combination `sum coef * s[col]` over `entries[i][j]`.
#[derive(Debug, Clone)]
pub struct PsdBlockDescriptor {
    pub measure: MeasureId,
    /// Generating polynomial over the measure's (scaled) variables;
    /// constant 1 for the moment matrix itself.
    pub g: Polynomial,
    /// Block order k_g.
    pub order: u32,
    /// Matrix dimension, `basis_size(n, order)`.
    pub size: usize,
    /// Upper-triangle entry maps, flattened as i*(i+1)/2 + j for j <= i.
    pub entries: Vec<Vec<(usize, f64)>>,
    /// Human-readable label for diagnostics and the interchange format.
    pub label: String,
}

impl PsdBlockDescriptor {
    fn tri_index(i: usize, j: usize) -> usize {
        debug_assert!(j <= i);
        i * (i + 1) / 2 + j
    }

    /// Entry map for (i, j); symmetric access.
    pub fn entry(&self, i: usize, j: usize) -> &[(usize, f64)] {
        let (i, j) = if j <= i { (i, j) } else { (j, i) };
        &self.entries[Self::tri_index(i, j)]
    }

    /// Instantiates the symmetric matrix on a full moment vector.
    pub fn instantiate(&self, s: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for i in 0..self.size {
            for j in 0..=i {
                let v: f64 = self.entry(i, j).iter().map(|&(c, w)| w * s[c]).sum();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Smallest eigenvalue of the instantiated block.
    pub fn min_eigenvalue(&self, s: &[f64]) -> f64 {
        self.instantiate(s)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn box_quadratic(n: usize, var: usize, b: BoxBounds) -> Polynomial {
    // (v - min)(max - v) = -v² + (min + max) v - min*max
    let v = Polynomial::var(n, var);
    let v2 = v.pow(2);
    v2.scale(-1.0)
        .add(&v.scale(b.min + b.max))
        .unwrap()
        .sub(&Polynomial::constant(n, b.min * b.max))
        .unwrap()
}

/// The support-defining polynomials of a measure, in the measure's own
/// unscaled variables: one box quadratic per free variable.
pub fn support_polynomials(
    problem: &HeatControlProblem,
    measure: MeasureId,
) -> Vec<(Var, Polynomial)> {
    let vars = measure.vars();
    let n = vars.len();
    vars.iter()
        .enumerate()
        .map(|(k, &v)| {
            let b = match v {
                Var::T | Var::X => BoxBounds::new(0.0, 1.0),
                Var::Y => problem.y_box,
                Var::Z1 => problem.z1_box,
                Var::Z2 => problem.z2_box,
                Var::U => problem.u_box,
            };
            (v, box_quadratic(n, k, b))
        })
        .collect()
}

/// Builds the order-k moment matrix descriptor of a measure. Instantiated
/// on a moment vector it yields the symmetric matrix with entries
/// `s[beta_i + beta_j]`.
pub fn build_moment_matrix(layout: &Layout, measure: MeasureId, order: u32) -> Result<PsdBlockDescriptor> {
    let ml = layout.measure(measure);
    if 2 * order > layout.degree {
        return Err(Error::InvalidConfig(format!(
            "moment matrix order {} exceeds half degree {}",
            order,
            layout.degree / 2
        )));
    }
    let one = Polynomial::constant(ml.num_vars(), 1.0);
    build_localizing_matrix(layout, measure, &one, order)
}

/// Builds a localizing matrix descriptor for a support polynomial g over
/// the measure's (already scaled, if scaling is on) variables. Entry (i, j)
/// represents the moment of `beta_i * beta_j * g`.
pub fn build_localizing_matrix(
    layout: &Layout,
    measure: MeasureId,
    g: &Polynomial,
    order: u32,
) -> Result<PsdBlockDescriptor> {
    let ml = layout.measure(measure);
    let n = ml.num_vars();
    if g.num_vars() != n {
        return Err(Error::VariableMismatch {
            left: g.num_vars(),
            right: n,
        });
    }
    if g.degree() + 2 * order > layout.degree {
        return Err(Error::InvalidConfig(format!(
            "localizing block: deg g {} + 2*{} exceeds relaxation degree {}",
            g.degree(),
            order,
            layout.degree
        )));
    }
    let basis = monomial_list(n, order);
    let size = basis.len();
    debug_assert_eq!(size, basis_size(n, order)?);
    let mut entries = Vec::with_capacity(size * (size + 1) / 2);
    for i in 0..size {
        for j in 0..=i {
            let prod = basis[i].add(&basis[j]);
            let mut combo: Vec<(usize, f64)> = Vec::new();
            for (gm, gc) in g.terms() {
                let mono = prod.add(gm);
                let col = ml.col(&mono).ok_or_else(|| {
                    Error::InvalidConfig("localizing entry outside layout".into())
                })?;
                match combo.iter_mut().find(|(c, _)| *c == col) {
                    Some((_, w)) => *w += gc,
                    None => combo.push((col, gc)),
                }
            }
            combo.retain(|&(_, w)| w != 0.0);
            entries.push(combo);
        }
    }
    Ok(PsdBlockDescriptor {
        measure,
        g: g.clone(),
        order,
        size,
        entries,
        label: String::new(),
    })
}

/// Attaches the full cone family to a program: per measure one moment
/// matrix at order d/2 and one localizing matrix per box quadratic at the
/// reduced order d/2 - 1.
pub fn attach_cones(
    problem: &HeatControlProblem,
    config: &RelaxationConfig,
    program: &mut RelaxationProgram,
) -> Result<()> {
    let k = config.half_degree();
    let mut cones = Vec::new();
    for id in MeasureId::ALL {
        let mut block = build_moment_matrix(&program.layout, id, k)?;
        block.label = format!("{}:moment", id.name());
        cones.push(block);
        for (v, g_unscaled) in support_polynomials(problem, id) {
            // Scale the support polynomial into the layout's basis.
            let ml = program.layout.measure(id);
            let mut g = g_unscaled;
            if program.layout.scaled {
                for (pos, sc) in ml.scaling.iter().enumerate() {
                    if !sc.is_identity() {
                        g = g.substitute_affine(pos, sc.center, sc.half);
                    }
                }
            }
            let g_order = k - g.degree().div_ceil(2);
            let mut block = build_localizing_matrix(&program.layout, id, &g, g_order)?;
            block.label = format!("{}:box[{}]", id.name(), v.name());
            cones.push(block);
        }
    }
    program.cones = cones;
    Ok(())
}
