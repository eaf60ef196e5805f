//! Purification of mixed states with tunable relative phases.
//!
//! A mixed state sum p_i |s_i><s_i| lifts to the joint vector
//! sum sqrt(p_i) e^{i phi_i} |s_i>|a_i>. The phases never change the reduced
//! system state, but they steer the transition probability into a target
//! under a joint unitary; aligning every branch phase against its matrix
//! element attains the global optimum (sum sqrt(p_i) |M_i|)^2.
//!
//! Basis convention: joint index is system-major, |s_i a_j> -> i*ancilla_dim + j.

use crate::density::DensityMatrix;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PurificationError {
    #[error("invalid mixed state: {0}")]
    InvalidMixedState(String),
    #[error("ancilla dimension {ancilla_dim} below component count {needed}")]
    AncillaTooSmall { ancilla_dim: usize, needed: usize },
    #[error("phase list length {got} does not match component count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("target norm {norm} is not 1")]
    TargetNotNormalized { norm: f64 },
    #[error("matrix is not unitary (max |U^dag U - I| = {max_dev:.3e})")]
    NotUnitary { max_dev: f64 },
    #[error("grid search infeasible for {components} components (limit 4)")]
    GridTooLarge { components: usize },
}

/// Classical probability mixture over the first `probabilities.len()` basis
/// states of a `system_dim`-level system.
#[derive(Debug, Clone)]
pub struct MixedState {
    pub probabilities: Vec<f64>,
    pub system_dim: usize,
}

impl MixedState {
    pub fn new(probabilities: Vec<f64>, system_dim: usize) -> Result<Self, PurificationError> {
        if probabilities.is_empty() || probabilities.len() > system_dim {
            return Err(PurificationError::InvalidMixedState(format!(
                "component count {} must be in 1..={}",
                probabilities.len(),
                system_dim
            )));
        }
        if probabilities.iter().any(|&p| !(p > 0.0)) {
            return Err(PurificationError::InvalidMixedState(
                "all probabilities must be > 0".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PurificationError::InvalidMixedState(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            probabilities,
            system_dim,
        })
    }

    /// System density matrix diag(p, 0, ...).
    pub fn density_matrix(&self) -> DensityMatrix {
        let mut p = vec![0.0; self.system_dim];
        p[..self.probabilities.len()].copy_from_slice(&self.probabilities);
        DensityMatrix::from_probabilities(&p).expect("validated mixture")
    }
}

/// Purification sum sqrt(p_i) e^{i phi_i} |s_i>|a_i>.
#[derive(Debug, Clone)]
pub struct PurifiedState {
    pub probabilities: Vec<f64>,
    pub phases: Vec<f64>,
    pub system_dim: usize,
    pub ancilla_dim: usize,
}

impl PurifiedState {
    pub fn components(&self) -> usize {
        self.probabilities.len()
    }

    pub fn joint_dim(&self) -> usize {
        self.system_dim * self.ancilla_dim
    }

    /// Joint vector in the system-major flattening.
    pub fn joint_vector(&self) -> DVector<Complex64> {
        let mut v = DVector::<Complex64>::zeros(self.joint_dim());
        for (i, (&p, &phi)) in self.probabilities.iter().zip(&self.phases).enumerate() {
            v[i * self.ancilla_dim + i] = Complex64::from_polar(p.sqrt(), phi);
        }
        v
    }

    /// Reduced system state after tracing out the ancilla.
    pub fn reduced_system_state(&self) -> DensityMatrix {
        let joint = joint_density_matrix(self);
        partial_trace_ancilla(joint.entries(), self.system_dim, self.ancilla_dim)
            .expect("joint state has consistent dimensions")
    }
}

/// Validated unitary matrix.
#[derive(Debug, Clone)]
pub struct UnitaryMatrix {
    entries: DMatrix<Complex64>,
}

impl UnitaryMatrix {
    /// Rejects matrices with max |U^dag U - I| > 1e-10.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self, PurificationError> {
        if entries.nrows() != entries.ncols() {
            return Err(PurificationError::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        let gram = entries.adjoint() * &entries;
        let mut max_dev: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                max_dev = max_dev.max((gram[(i, j)] - target).norm());
            }
        }
        if max_dev > 1e-10 {
            return Err(PurificationError::NotUnitary { max_dev });
        }
        Ok(Self { entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    /// Haar-like random unitary from Gram-Schmidt on a complex Gaussian
    /// matrix, driven by the given generator.
    pub fn random(dim: usize, rng: &mut crate::rng::SplitMix64) -> Self {
        loop {
            let mut cols: Vec<DVector<Complex64>> = Vec::with_capacity(dim);
            'outer: for _ in 0..dim {
                let mut v = DVector::from_fn(dim, |_, _| {
                    Complex64::new(rng.next_normal(), rng.next_normal())
                });
                for c in &cols {
                    let overlap = c.dotc(&v);
                    v -= c * overlap;
                }
                let norm = v.norm();
                if norm < 1e-8 {
                    break 'outer; // degenerate draw, restart
                }
                cols.push(v.unscale(norm));
            }
            if cols.len() == dim {
                let mut m = DMatrix::<Complex64>::zeros(dim, dim);
                for (j, c) in cols.iter().enumerate() {
                    m.set_column(j, c);
                }
                return Self { entries: m };
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }
}

/// Purify with all phases zero.
pub fn purify(mixed: &MixedState, ancilla_dim: usize) -> Result<PurifiedState, PurificationError> {
    let needed = mixed.probabilities.len();
    if ancilla_dim < needed {
        return Err(PurificationError::AncillaTooSmall {
            ancilla_dim,
            needed,
        });
    }
    Ok(PurifiedState {
        probabilities: mixed.probabilities.clone(),
        phases: vec![0.0; needed],
        system_dim: mixed.system_dim,
        ancilla_dim,
    })
}

/// Replace the phase vector.
pub fn apply_phases(
    state: &PurifiedState,
    phases: &[f64],
) -> Result<PurifiedState, PurificationError> {
    if phases.len() != state.components() {
        return Err(PurificationError::LengthMismatch {
            expected: state.components(),
            got: phases.len(),
        });
    }
    Ok(PurifiedState {
        phases: phases.to_vec(),
        ..state.clone()
    })
}

/// Rank-1 joint density matrix sum sqrt(p_i p_j) e^{i(phi_i - phi_j)}
/// |s_i a_i><s_j a_j|.
pub fn joint_density_matrix(state: &PurifiedState) -> DensityMatrix {
    let v = state.joint_vector();
    DensityMatrix::from_pure(&v).expect("purification has unit norm")
}

/// Partial trace over the ancilla factor of a system-major joint matrix.
pub fn partial_trace_ancilla(
    joint: &DMatrix<Complex64>,
    system_dim: usize,
    ancilla_dim: usize,
) -> Result<DensityMatrix, PurificationError> {
    let dim = system_dim * ancilla_dim;
    if joint.nrows() != dim || joint.ncols() != dim {
        return Err(PurificationError::DimensionMismatch {
            expected: dim,
            got: joint.nrows(),
        });
    }
    let mut reduced = DMatrix::<Complex64>::zeros(system_dim, system_dim);
    for i in 0..system_dim {
        for j in 0..system_dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..ancilla_dim {
                acc += joint[(i * ancilla_dim + a, j * ancilla_dim + a)];
            }
            reduced[(i, j)] = acc;
        }
    }
    DensityMatrix::new(reduced).map_err(|e| {
        PurificationError::InvalidMixedState(format!("partial trace not a state: {e}"))
    })
}

/// Matrix elements M_i = <target| U |s_i a_i>.
fn branch_elements(
    state: &PurifiedState,
    u: &UnitaryMatrix,
    target: &DVector<Complex64>,
) -> Result<Vec<Complex64>, PurificationError> {
    let dim = state.joint_dim();
    if u.dim() != dim {
        return Err(PurificationError::DimensionMismatch {
            expected: dim,
            got: u.dim(),
        });
    }
    if target.len() != dim {
        return Err(PurificationError::DimensionMismatch {
            expected: dim,
            got: target.len(),
        });
    }
    let norm = target.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(PurificationError::TargetNotNormalized { norm });
    }
    // M_i = conj(target)^T times column i*ancilla_dim + i of U.
    Ok((0..state.components())
        .map(|i| {
            let col = u.entries().column(i * state.ancilla_dim + i);
            target
                .iter()
                .zip(col.iter())
                .map(|(t, u)| t.conj() * u)
                .sum()
        })
        .collect())
}

fn probability_at(elements: &[Complex64], probabilities: &[f64], phases: &[f64]) -> f64 {
    let z: Complex64 = elements
        .iter()
        .zip(probabilities)
        .zip(phases)
        .map(|((m, &p), &phi)| Complex64::from_polar(p.sqrt(), phi) * m)
        .sum();
    z.norm_sqr()
}

/// Transition probability |sum_i sqrt(p_i) e^{i phi_i} M_i|^2.
pub fn transition_probability(
    state: &PurifiedState,
    u: &UnitaryMatrix,
    target: &DVector<Complex64>,
) -> Result<f64, PurificationError> {
    let m = branch_elements(state, u, target)?;
    Ok(probability_at(&m, &state.probabilities, &state.phases))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeMethod {
    Analytic,
    Gradient,
    Grid,
}

/// Phase optimum and the achieved probability.
#[derive(Debug, Clone)]
pub struct PhaseOptimum {
    pub phases: Vec<f64>,
    pub probability: f64,
    pub elements: Vec<Complex64>,
}

/// Maximize the transition probability over the branch phases.
///
/// The analytic method sets phi_i = -arg(M_i) (zero-magnitude branches get
/// phase 0), reaching P* = (sum sqrt(p_i) |M_i|)^2. The gradient and grid
/// methods exist as independent checks of that closed form.
pub fn optimize_phases(
    state: &PurifiedState,
    u: &UnitaryMatrix,
    target: &DVector<Complex64>,
    method: OptimizeMethod,
) -> Result<PhaseOptimum, PurificationError> {
    let elements = branch_elements(state, u, target)?;
    let p = &state.probabilities;
    let phases = match method {
        OptimizeMethod::Analytic => elements
            .iter()
            .map(|m| if m.norm() == 0.0 { 0.0 } else { -m.arg() })
            .collect(),
        OptimizeMethod::Gradient => gradient_ascent(&elements, p),
        OptimizeMethod::Grid => grid_search(&elements, p)?,
    };
    let probability = probability_at(&elements, p, &phases);
    Ok(PhaseOptimum {
        phases,
        probability,
        elements,
    })
}

/// dP/dphi_k = -2 Im(conj(z) c_k) with c_k = sqrt(p_k) e^{i phi_k} M_k and
/// z = sum c_i.
fn gradient(elements: &[Complex64], probabilities: &[f64], phases: &[f64]) -> Vec<f64> {
    let terms: Vec<Complex64> = elements
        .iter()
        .zip(probabilities)
        .zip(phases)
        .map(|((m, &p), &phi)| Complex64::from_polar(p.sqrt(), phi) * m)
        .collect();
    let z: Complex64 = terms.iter().sum();
    terms.iter().map(|c| -2.0 * (z.conj() * c).im).collect()
}

fn gradient_ascent(elements: &[Complex64], probabilities: &[f64]) -> Vec<f64> {
    let mut phases = vec![0.0; elements.len()];
    let mut value = probability_at(elements, probabilities, &phases);
    let mut step = 1.0;
    for _ in 0..10_000 {
        let g = gradient(elements, probabilities, &phases);
        let g_norm_sq: f64 = g.iter().map(|x| x * x).sum();
        if g_norm_sq < 1e-28 {
            break;
        }
        // Backtracking line search along the gradient.
        let mut advanced = false;
        while step > 1e-14 {
            let trial: Vec<f64> = phases.iter().zip(&g).map(|(phi, gi)| phi + step * gi).collect();
            let trial_value = probability_at(elements, probabilities, &trial);
            if trial_value > value + 0.25 * step * g_norm_sq {
                phases = trial;
                value = trial_value;
                step *= 1.5;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    phases
}

const GRID_STEP_COUNT: usize = 64; // pi/32 resolution over [0, 2 pi)

fn grid_search(elements: &[Complex64], probabilities: &[f64]) -> Result<Vec<f64>, PurificationError> {
    let n = elements.len();
    if n > 4 {
        return Err(PurificationError::GridTooLarge { components: n });
    }
    let step = std::f64::consts::TAU / GRID_STEP_COUNT as f64;
    // Global phase freedom: pin the first phase to 0.
    let free = n.saturating_sub(1);
    let total = GRID_STEP_COUNT.pow(free as u32);
    let mut best_phases = vec![0.0; n];
    let mut best = probability_at(elements, probabilities, &best_phases);
    let mut phases = vec![0.0; n];
    for cell in 0..total {
        let mut rem = cell;
        for k in 0..free {
            phases[k + 1] = (rem % GRID_STEP_COUNT) as f64 * step;
            rem /= GRID_STEP_COUNT;
        }
        let p = probability_at(elements, probabilities, &phases);
        if p > best + 1e-15 {
            best = p;
            best_phases.copy_from_slice(&phases);
        }
    }
    Ok(best_phases)
}

/// Optimization report CSV: `component,p,abs_M,arg_M,phi_opt` with footer
/// `P_star,<value>`.
pub fn write_report_csv<W: Write>(
    optimum: &PhaseOptimum,
    probabilities: &[f64],
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "component,p,abs_M,arg_M,phi_opt")?;
    for (i, ((m, &p), &phi)) in optimum
        .elements
        .iter()
        .zip(probabilities)
        .zip(&optimum.phases)
        .enumerate()
    {
        writeln!(
            w,
            "{},{},{},{},{}",
            i,
            crate::io::fmt_float(p),
            crate::io::fmt_float(m.norm()),
            crate::io::fmt_float(m.arg()),
            crate::io::fmt_float(phi)
        )?;
    }
    writeln!(w, "P_star,{}", crate::io::fmt_float(optimum.probability))?;
    Ok(())
}
