//! Open-system density-matrix evolution.
//!
//! Closed evolution goes through the eigendecomposition of H; dissipative
//! evolution integrates the Lindblad master equation with fixed-step RK4 and
//! re-hermitizes each snapshot. Positivity is checked, never enforced: a
//! violating eigenvalue is reported as an error so step-size problems stay
//! visible.

use crate::density::{hermitian_deviation, DensityMatrix};
use crate::fluctuation::{self, FluctuationError};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpenSystemError {
    #[error("dimension mismatch: {expected} vs {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not Hermitian (max deviation {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },
    #[error("stability violated: dt * max(gamma, spectral radius of H / hbar) = {product:.3} >= 0.1")]
    StabilityViolation { product: f64 },
    #[error("positivity lost at t = {time}: eigenvalue {min_eig:.3e}")]
    PositivityLoss { time: f64, min_eig: f64 },
    #[error("couplings must be symmetric with zero diagonal")]
    AsymmetricCouplings,
    #[error("fock cutoff {got} below minimum 2")]
    CutoffTooSmall { got: usize },
    #[error("projector invalid: {0}")]
    InvalidProjector(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Entropy(#[from] FluctuationError),
}

/// Lindblad generator data: Hermitian H, jump operators L_k, rates gamma_k.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub hamiltonian: DMatrix<Complex64>,
    pub jump_operators: Vec<DMatrix<Complex64>>,
    pub rates: Vec<f64>,
    pub hbar: f64,
}

impl LindbladModel {
    pub fn new(
        hamiltonian: DMatrix<Complex64>,
        jump_operators: Vec<DMatrix<Complex64>>,
        rates: Vec<f64>,
        hbar: f64,
    ) -> Result<Self, OpenSystemError> {
        let dim = hamiltonian.nrows();
        if hamiltonian.ncols() != dim {
            return Err(OpenSystemError::DimensionMismatch {
                expected: dim,
                got: hamiltonian.ncols(),
            });
        }
        let max_dev = hermitian_deviation(&hamiltonian);
        if max_dev > 1e-12 {
            return Err(OpenSystemError::NotHermitian { max_dev });
        }
        if jump_operators.len() != rates.len() {
            return Err(OpenSystemError::InvalidModel(format!(
                "{} jump operators but {} rates",
                jump_operators.len(),
                rates.len()
            )));
        }
        if rates.iter().any(|&g| !(g >= 0.0)) {
            return Err(OpenSystemError::InvalidModel(
                "rates must be nonnegative".into(),
            ));
        }
        for l in &jump_operators {
            if l.nrows() != dim || l.ncols() != dim {
                return Err(OpenSystemError::DimensionMismatch {
                    expected: dim,
                    got: l.nrows(),
                });
            }
        }
        if !(hbar > 0.0) {
            return Err(OpenSystemError::InvalidModel(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        Ok(Self {
            hamiltonian,
            jump_operators,
            rates,
            hbar,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    fn spectral_radius(&self) -> f64 {
        let sym = (&self.hamiltonian + self.hamiltonian.adjoint()).scale(0.5);
        sym.symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &e| acc.max(e.abs()))
    }
}

/// Hermitian idempotent projector onto a coherent subspace.
#[derive(Debug, Clone)]
pub struct CoherentSubspace {
    projector: DMatrix<Complex64>,
}

impl CoherentSubspace {
    /// Validates P = P^dag within 1e-12 and P^2 = P within 1e-10.
    pub fn new(projector: DMatrix<Complex64>) -> Result<Self, OpenSystemError> {
        if projector.nrows() != projector.ncols() {
            return Err(OpenSystemError::DimensionMismatch {
                expected: projector.nrows(),
                got: projector.ncols(),
            });
        }
        let max_dev = hermitian_deviation(&projector);
        if max_dev > 1e-12 {
            return Err(OpenSystemError::InvalidProjector(format!(
                "not Hermitian (deviation {max_dev:.3e})"
            )));
        }
        let sq = &projector * &projector;
        let idem = (&sq - &projector)
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()));
        if idem > 1e-10 {
            return Err(OpenSystemError::InvalidProjector(format!(
                "not idempotent (deviation {idem:.3e})"
            )));
        }
        Ok(Self { projector })
    }

    /// Projector onto the span of the listed basis states.
    pub fn from_basis_states(dim: usize, states: &[usize]) -> Result<Self, OpenSystemError> {
        let mut p = DMatrix::<Complex64>::zeros(dim, dim);
        for &s in states {
            if s >= dim {
                return Err(OpenSystemError::DimensionMismatch {
                    expected: dim,
                    got: s,
                });
            }
            p[(s, s)] = Complex64::new(1.0, 0.0);
        }
        Ok(Self { projector: p })
    }

    pub fn projector(&self) -> &DMatrix<Complex64> {
        &self.projector
    }
}

/// Symmetric resonant couplings J_mn between sites, zero diagonal.
#[derive(Debug, Clone)]
pub struct ResonantCoupling {
    pub site_count: usize,
    pub couplings: DMatrix<f64>,
}

/// Site-phonon couplings g_jk with per-mode frequencies and Fock cutoff.
#[derive(Debug, Clone)]
pub struct PhononCoupling {
    pub site_count: usize,
    pub mode_count: usize,
    pub mode_frequencies: Vec<f64>,
    pub couplings: DMatrix<f64>,
    pub fock_cutoff: usize,
}

/// Unitary conjugation rho -> e^{-iHt/hbar} rho e^{+iHt/hbar} through the
/// eigendecomposition of H.
pub fn evolve_von_neumann(
    rho: &DensityMatrix,
    h: &DMatrix<Complex64>,
    t: f64,
    hbar: f64,
) -> Result<DensityMatrix, OpenSystemError> {
    if h.nrows() != rho.dim() || h.ncols() != rho.dim() {
        return Err(OpenSystemError::DimensionMismatch {
            expected: rho.dim(),
            got: h.nrows(),
        });
    }
    let max_dev = hermitian_deviation(h);
    if max_dev > 1e-12 {
        return Err(OpenSystemError::NotHermitian { max_dev });
    }
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let u = &eig.eigenvectors;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| {
        Complex64::from_polar(1.0, -e * t / hbar)
    }));
    let prop = u * phases * u.adjoint();
    let evolved = &prop * rho.entries() * prop.adjoint();
    // Re-hermitize against rounding before validation.
    let evolved = (&evolved + evolved.adjoint()).scale(0.5);
    DensityMatrix::new(evolved)
        .map_err(|e| OpenSystemError::InvalidModel(format!("evolution left the state space: {e}")))
}

fn lindblad_rhs(
    rho: &DMatrix<Complex64>,
    model: &LindbladModel,
    ldag_l: &[DMatrix<Complex64>],
) -> DMatrix<Complex64> {
    let h = &model.hamiltonian;
    let commutator = h * rho - rho * h;
    let mut out = commutator.scale(1.0 / model.hbar) * Complex64::new(0.0, -1.0);
    for ((l, ll), &gamma) in model.jump_operators.iter().zip(ldag_l).zip(&model.rates) {
        if gamma == 0.0 {
            continue;
        }
        let sandwich = l * rho * l.adjoint();
        let anti = ll * rho + rho * ll;
        out += (sandwich - anti.scale(0.5)).scale(gamma);
    }
    out
}

/// Fixed-step RK4 integration of the Lindblad master equation. Returns the
/// snapshot list including the initial state; each snapshot is re-hermitized
/// and checked for positivity.
pub fn evolve_lindblad(
    rho: &DensityMatrix,
    model: &LindbladModel,
    t: f64,
    dt: f64,
) -> Result<Vec<(f64, DensityMatrix)>, OpenSystemError> {
    if model.dim() != rho.dim() {
        return Err(OpenSystemError::DimensionMismatch {
            expected: rho.dim(),
            got: model.dim(),
        });
    }
    if !(dt > 0.0) || !(t >= 0.0) {
        return Err(OpenSystemError::InvalidModel(format!(
            "need dt > 0 and t >= 0, got dt = {dt}, t = {t}"
        )));
    }
    let gamma_max = model.rates.iter().fold(0.0f64, |a, &b| a.max(b));
    let scale = gamma_max.max(model.spectral_radius() / model.hbar);
    let product = dt * scale;
    if product >= 0.1 {
        return Err(OpenSystemError::StabilityViolation { product });
    }

    let ldag_l: Vec<DMatrix<Complex64>> = model
        .jump_operators
        .iter()
        .map(|l| l.adjoint() * l)
        .collect();

    let n_steps = (t / dt).round().max(0.0) as usize;
    let n_steps = if n_steps as f64 * dt < t - 1e-12 * t.max(1.0) {
        n_steps + 1
    } else {
        n_steps
    };
    let dt_adj = if n_steps > 0 { t / n_steps as f64 } else { dt };

    let validate = |time: f64, m: DMatrix<Complex64>| -> Result<DensityMatrix, OpenSystemError> {
        let herm = (&m + m.adjoint()).scale(0.5);
        let state = DensityMatrix::new(herm.clone()).map_err(|_| {
            // Distinguish positivity loss from other validation failures.
            let min_eig = herm
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            OpenSystemError::PositivityLoss { time, min_eig }
        })?;
        Ok(state)
    };

    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push((0.0, rho.clone()));
    let mut current = rho.entries().clone();
    for step in 0..n_steps {
        let k1 = lindblad_rhs(&current, model, &ldag_l);
        let k2 = lindblad_rhs(&(&current + k1.scale(dt_adj / 2.0)), model, &ldag_l);
        let k3 = lindblad_rhs(&(&current + k2.scale(dt_adj / 2.0)), model, &ldag_l);
        let k4 = lindblad_rhs(&(&current + k3.scale(dt_adj)), model, &ldag_l);
        current += (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt_adj / 6.0);
        current = (&current + current.adjoint()).scale(0.5);
        let time = dt_adj * (step + 1) as f64;
        snapshots.push((time, validate(time, current.clone())?));
    }
    Ok(snapshots)
}

/// Unnormalized projection P rho P with its weight Tr(P rho P).
pub fn project_coherent_subspace(
    rho: &DensityMatrix,
    sub: &CoherentSubspace,
) -> Result<(DMatrix<Complex64>, f64), OpenSystemError> {
    let p = sub.projector();
    if p.nrows() != rho.dim() {
        return Err(OpenSystemError::DimensionMismatch {
            expected: rho.dim(),
            got: p.nrows(),
        });
    }
    let projected = p * rho.entries() * p;
    let weight = projected.trace().re;
    Ok((projected, weight))
}

/// Hamiltonian sum_{m<n} J_mn (|m><n| + |n><m|).
pub fn build_resonant_hamiltonian(
    coupling: &ResonantCoupling,
) -> Result<DMatrix<Complex64>, OpenSystemError> {
    let n = coupling.site_count;
    let j = &coupling.couplings;
    if j.nrows() != n || j.ncols() != n {
        return Err(OpenSystemError::DimensionMismatch {
            expected: n,
            got: j.nrows(),
        });
    }
    for a in 0..n {
        if j[(a, a)] != 0.0 {
            return Err(OpenSystemError::AsymmetricCouplings);
        }
        for b in 0..n {
            if j[(a, b)] != j[(b, a)] {
                return Err(OpenSystemError::AsymmetricCouplings);
            }
        }
    }
    Ok(DMatrix::from_fn(n, n, |a, b| Complex64::new(j[(a, b)], 0.0)))
}

/// Truncated lowering operator on an n_max-level Fock space.
fn lowering_operator(n_max: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n_max, n_max, |r, c| {
        if c == r + 1 {
            Complex64::new((c as f64).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

/// Site-phonon Hamiltonian sum_{j,k} g_jk |j><j| x (b_k + b_k^dag) on the
/// truncated joint space, site factor first. With `include_free_modes` the
/// free-phonon term sum_k hbar w_k b_k^dag b_k is added.
pub fn build_phonon_hamiltonian(
    coupling: &PhononCoupling,
    include_free_modes: bool,
    hbar: f64,
) -> Result<DMatrix<Complex64>, OpenSystemError> {
    if coupling.fock_cutoff < 2 {
        return Err(OpenSystemError::CutoffTooSmall {
            got: coupling.fock_cutoff,
        });
    }
    let (sites, modes, n_max) = (
        coupling.site_count,
        coupling.mode_count,
        coupling.fock_cutoff,
    );
    if coupling.couplings.nrows() != sites || coupling.couplings.ncols() != modes {
        return Err(OpenSystemError::DimensionMismatch {
            expected: sites * modes,
            got: coupling.couplings.nrows() * coupling.couplings.ncols(),
        });
    }
    if coupling.mode_frequencies.len() != modes {
        return Err(OpenSystemError::DimensionMismatch {
            expected: modes,
            got: coupling.mode_frequencies.len(),
        });
    }
    if coupling.mode_frequencies.iter().any(|&w| !(w > 0.0)) {
        return Err(OpenSystemError::InvalidModel(
            "mode frequencies must be positive".into(),
        ));
    }

    let b = lowering_operator(n_max);
    let x = &b + b.adjoint(); // b + b^dag
    let number = b.adjoint() * &b;
    let id_mode = DMatrix::<Complex64>::identity(n_max, n_max);

    // Embed a single-mode operator at mode position k in the phonon factor.
    let embed = |op: &DMatrix<Complex64>, k: usize| -> DMatrix<Complex64> {
        let mut out = DMatrix::<Complex64>::identity(1, 1);
        for m in 0..modes {
            out = kron(&out, if m == k { op } else { &id_mode });
        }
        out
    };

    let dim = sites * n_max.pow(modes as u32);
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for j in 0..sites {
        let mut site_proj = DMatrix::<Complex64>::zeros(sites, sites);
        site_proj[(j, j)] = Complex64::new(1.0, 0.0);
        for k in 0..modes {
            let g = coupling.couplings[(j, k)];
            if g != 0.0 {
                h += kron(&site_proj, &embed(&x, k)).scale(g);
            }
        }
    }
    if include_free_modes {
        let id_sites = DMatrix::<Complex64>::identity(sites, sites);
        for k in 0..modes {
            h += kron(&id_sites, &embed(&number, k))
                .scale(hbar * coupling.mode_frequencies[k]);
        }
    }
    Ok(h)
}

/// Map von Neumann entropy over a snapshot list.
pub fn entropy_trace(
    snapshots: &[(f64, DensityMatrix)],
    k_b: f64,
) -> Result<Vec<(f64, f64)>, OpenSystemError> {
    snapshots
        .iter()
        .map(|(t, rho)| Ok((*t, fluctuation::von_neumann_entropy(rho, k_b)?)))
        .collect()
}

/// Snapshot CSV: `time,entropy,purity,pop_0,...,pop_{d-1},abs_coh_max`.
pub fn write_snapshots_csv<W: Write>(
    snapshots: &[(f64, DensityMatrix)],
    k_b: f64,
    w: &mut W,
) -> Result<(), OpenSystemError> {
    let dim = snapshots.first().map_or(0, |(_, rho)| rho.dim());
    let mut header = String::from("time,entropy,purity");
    for i in 0..dim {
        header.push_str(&format!(",pop_{i}"));
    }
    header.push_str(",abs_coh_max");
    let io_err = |e: std::io::Error| OpenSystemError::InvalidModel(format!("write failed: {e}"));
    writeln!(w, "{header}").map_err(io_err)?;
    for (t, rho) in snapshots {
        let entropy = fluctuation::von_neumann_entropy(rho, k_b)?;
        let mut line = format!(
            "{},{},{}",
            crate::io::fmt_float(*t),
            crate::io::fmt_float(entropy),
            crate::io::fmt_float(rho.purity())
        );
        for p in rho.populations() {
            line.push(',');
            line.push_str(&crate::io::fmt_float(p));
        }
        line.push(',');
        line.push_str(&crate::io::fmt_float(rho.max_coherence()));
        writeln!(w, "{line}").map_err(io_err)?;
    }
    Ok(())
}
