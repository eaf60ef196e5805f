//! Density matrices shared by the purification and open-system modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("matrix is not Hermitian (max deviation {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },
    #[error("trace is {trace}, expected 1")]
    TraceNotOne { trace: f64 },
    #[error("negative eigenvalue {min_eig:.3e} below tolerance")]
    NotPositive { min_eig: f64 },
    #[error("dimension mismatch: {expected} vs {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A validated quantum state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity within 1e-12, unit trace within 1e-12, and
    /// eigenvalues >= -1e-10.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self, DensityError> {
        if entries.nrows() != entries.ncols() {
            return Err(DensityError::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        let max_dev = hermitian_deviation(&entries);
        if max_dev > 1e-12 {
            return Err(DensityError::NotHermitian { max_dev });
        }
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > 1e-12 || trace.im.abs() > 1e-12 {
            return Err(DensityError::TraceNotOne { trace: trace.re });
        }
        let state = Self { entries };
        let min_eig = state
            .eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(DensityError::NotPositive { min_eig });
        }
        Ok(state)
    }

    /// Pure state |psi><psi| from a vector, normalizing first.
    pub fn from_pure(psi: &DVector<Complex64>) -> Result<Self, DensityError> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(DensityError::TraceNotOne { trace: 0.0 });
        }
        let v = psi.unscale(norm);
        let mat = &v * v.adjoint();
        // Construction guarantees the invariants; re-validate anyway so this
        // path cannot drift from `new`.
        Self::new(mat)
    }

    /// Diagonal mixed state from a probability vector.
    pub fn from_probabilities(p: &[f64]) -> Result<Self, DensityError> {
        let mut mat = DMatrix::<Complex64>::zeros(p.len(), p.len());
        for (i, &pi) in p.iter().enumerate() {
            mat[(i, i)] = Complex64::new(pi, 0.0);
        }
        Self::new(mat)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut mat = DMatrix::<Complex64>::zeros(dim, dim);
        let w = 1.0 / dim as f64;
        for i in 0..dim {
            mat[(i, i)] = Complex64::new(w, 0.0);
        }
        Self { entries: mat }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    /// Real eigenvalues in unspecified order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        // Hermitian within tolerance; symmetrize exactly before the solve.
        let sym = (&self.entries + self.entries.adjoint()).scale(0.5);
        sym.symmetric_eigen().eigenvalues.iter().copied().collect()
    }

    /// Tr rho^2.
    pub fn purity(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += (self.entries[(i, j)] * self.entries[(j, i)]).re;
            }
        }
        acc
    }

    /// Diagonal occupation probabilities.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).collect()
    }

    /// Largest off-diagonal modulus.
    pub fn max_coherence(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if i != j {
                    best = best.max(self.entries[(i, j)].norm());
                }
            }
        }
        best
    }
}

/// Max-norm deviation from Hermiticity.
pub fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let mut max_dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            max_dev = max_dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    max_dev
}
