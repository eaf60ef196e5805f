//! Exact quantum propagation on a position grid.
//!
//! Continuous systems use the split-step (Strang) spectral method on a
//! power-of-two grid; the kicked rotor uses the exact one-kick Floquet
//! operator on [0, 2pi). These evolutions are the ground truth for every
//! semiclassical and open-system claim in the crate.

use crate::dynamics::{SystemKind, SystemSpec};
use crate::numeric::KahanComplexSum;
use crate::semiclassics::GaussianPacket;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::TAU;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grids do not match (extent, resolution, or hbar differ)")]
    GridMismatch,
    #[error("boundary leak: {leaked:.3e} probability in the outer 5% of the grid")]
    BoundaryLeak { leaked: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A normalized wavefunction sampled on a uniform position grid.
#[derive(Debug, Clone)]
pub struct GridState {
    pub grid_min: f64,
    pub grid_max: f64,
    pub n_points: usize,
    pub amplitudes: Vec<Complex64>,
    pub hbar: f64,
}

impl GridState {
    pub fn new(
        grid_min: f64,
        grid_max: f64,
        n_points: usize,
        amplitudes: Vec<Complex64>,
        hbar: f64,
    ) -> Result<Self, OracleError> {
        if n_points < 64 || !n_points.is_power_of_two() {
            return Err(OracleError::InvalidGrid(format!(
                "n_points must be a power of two >= 64, got {n_points}"
            )));
        }
        if !(grid_max > grid_min) {
            return Err(OracleError::InvalidGrid(format!(
                "grid extent degenerate: [{grid_min}, {grid_max}]"
            )));
        }
        if amplitudes.len() != n_points {
            return Err(OracleError::InvalidGrid(format!(
                "amplitude count {} does not match n_points {}",
                amplitudes.len(),
                n_points
            )));
        }
        if !(hbar > 0.0) {
            return Err(OracleError::InvalidGrid(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        let mut state = Self {
            grid_min,
            grid_max,
            n_points,
            amplitudes,
            hbar,
        };
        let norm = state.norm_sq().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(OracleError::InvalidGrid("zero or non-finite norm".into()));
        }
        let inv = 1.0 / norm;
        for a in &mut state.amplitudes {
            *a *= inv;
        }
        Ok(state)
    }

    /// Gaussian wavepacket on the default continuous grid convention.
    pub fn gaussian(
        grid_min: f64,
        grid_max: f64,
        n_points: usize,
        packet: &GaussianPacket,
        hbar: f64,
    ) -> Result<Self, OracleError> {
        let dq = (grid_max - grid_min) / n_points as f64;
        let amplitudes = (0..n_points)
            .map(|j| packet.value(grid_min + dq * j as f64, hbar))
            .collect();
        Self::new(grid_min, grid_max, n_points, amplitudes, hbar)
    }

    /// Normalized basis delta at the grid point nearest `q`.
    pub fn basis_delta(
        grid_min: f64,
        grid_max: f64,
        n_points: usize,
        q: f64,
        hbar: f64,
    ) -> Result<Self, OracleError> {
        let dq = (grid_max - grid_min) / n_points as f64;
        let j = (((q - grid_min) / dq).round() as usize).min(n_points - 1);
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n_points];
        amplitudes[j] = Complex64::new(1.0, 0.0);
        Self::new(grid_min, grid_max, n_points, amplitudes, hbar)
    }

    pub fn dq(&self) -> f64 {
        (self.grid_max - self.grid_min) / self.n_points as f64
    }

    pub fn position(&self, j: usize) -> f64 {
        self.grid_min + self.dq() * j as f64
    }

    pub fn norm_sq(&self) -> f64 {
        let dq = self.dq();
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * dq
    }

    /// Grid inner product `<self|other>`.
    pub fn inner(&self, other: &GridState) -> Result<Complex64, OracleError> {
        if !self.same_grid(other) {
            return Err(OracleError::GridMismatch);
        }
        let mut acc = KahanComplexSum::new();
        for (a, b) in self.amplitudes.iter().zip(&other.amplitudes) {
            acc.add(a.conj() * b);
        }
        Ok(acc.value() * self.dq())
    }

    pub fn same_grid(&self, other: &GridState) -> bool {
        self.grid_min == other.grid_min
            && self.grid_max == other.grid_max
            && self.n_points == other.n_points
            && self.hbar == other.hbar
    }

    /// Probability inside a position interval (cell centers).
    pub fn probability_in(&self, interval: (f64, f64)) -> f64 {
        let dq = self.dq();
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(j, _)| {
                let q = self.position(*j);
                q >= interval.0 && q < interval.1
            })
            .map(|(_, a)| a.norm_sqr() * dq)
            .sum()
    }

    fn outer_probability(&self, fraction: f64) -> f64 {
        let edge = ((self.n_points as f64 * fraction).round() as usize).max(1);
        let dq = self.dq();
        let n = self.n_points;
        let mut p = 0.0;
        for j in 0..edge {
            p += self.amplitudes[j].norm_sqr() * dq;
            p += self.amplitudes[n - 1 - j].norm_sqr() * dq;
        }
        p
    }

    /// Momentum-space variance `<p^2> - <p>^2` computed spectrally.
    pub fn momentum_variance(&self) -> f64 {
        let n = self.n_points;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut buf = self.amplitudes.clone();
        fft.process(&mut buf);
        let length = self.grid_max - self.grid_min;
        let total: f64 = buf.iter().map(|a| a.norm_sqr()).sum();
        let (mut m1, mut m2) = (0.0, 0.0);
        for (j, a) in buf.iter().enumerate() {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            let p = self.hbar * TAU * m as f64 / length;
            let w = a.norm_sqr() / total;
            m1 += p * w;
            m2 += p * p * w;
        }
        m2 - m1 * m1
    }

    /// Position-space width `sqrt(<q^2> - <q>^2)`.
    pub fn position_width(&self) -> f64 {
        let dq = self.dq();
        let (mut m1, mut m2) = (0.0, 0.0);
        for (j, a) in self.amplitudes.iter().enumerate() {
            let q = self.position(j);
            let w = a.norm_sqr() * dq;
            m1 += q * w;
            m2 += q * q * w;
        }
        (m2 - m1 * m1).sqrt()
    }

    /// Snapshot CSV: `q,re_psi,im_psi,prob_density`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "q,re_psi,im_psi,prob_density")?;
        for (j, a) in self.amplitudes.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                crate::io::fmt_float(self.position(j)),
                crate::io::fmt_float(a.re),
                crate::io::fmt_float(a.im),
                crate::io::fmt_float(a.norm_sqr())
            )?;
        }
        Ok(())
    }
}

struct SplitStep {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    kinetic_full: Vec<Complex64>,
    potential_half: Vec<Complex64>,
    n: usize,
}

impl SplitStep {
    fn new(state: &GridState, system: &SystemSpec, dt: f64) -> Self {
        let n = state.n_points;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let length = state.grid_max - state.grid_min;
        let hbar = state.hbar;
        let kinetic_full = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
                let p = hbar * TAU * m as f64 / length;
                Complex64::from_polar(1.0, -p * p * dt / (2.0 * system.mass * hbar))
            })
            .collect();
        let potential_half = (0..n)
            .map(|j| {
                let q = state.position(j);
                Complex64::from_polar(1.0, -system.potential(q) * dt / (2.0 * hbar))
            })
            .collect();
        Self {
            fft,
            ifft,
            kinetic_full,
            potential_half,
            n,
        }
    }

    fn apply_potential_half(&self, buf: &mut [Complex64]) {
        for (a, ph) in buf.iter_mut().zip(&self.potential_half) {
            *a *= ph;
        }
    }

    fn apply_kinetic_full(&self, buf: &mut [Complex64]) {
        self.fft.process(buf);
        for (a, ph) in buf.iter_mut().zip(&self.kinetic_full) {
            *a *= ph;
        }
        self.ifft.process(buf);
        let scale = 1.0 / self.n as f64;
        for a in buf.iter_mut() {
            *a *= scale;
        }
    }
}

/// Split-step propagation of a continuous system for time `t` at step `dt`.
pub fn evolve_exact(
    state: &GridState,
    system: &SystemSpec,
    t: f64,
    dt: f64,
) -> Result<GridState, OracleError> {
    if system.is_kicked() {
        return Err(OracleError::InvalidArgument(
            "evolve_exact handles continuous systems; use evolve_kicked_exact".into(),
        ));
    }
    if !(dt > 0.0) || t < 0.0 {
        return Err(OracleError::InvalidArgument(format!(
            "need dt > 0 and t >= 0, got dt = {dt}, t = {t}"
        )));
    }
    if t == 0.0 {
        return Ok(state.clone());
    }
    let n_steps = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
    let dt_adj = t / n_steps as f64;
    let stepper = SplitStep::new(state, system, dt_adj);

    let mut out = state.clone();
    // Strang composition: V/2 (K V)^{n-1} K V/2.
    stepper.apply_potential_half(&mut out.amplitudes);
    for step in 0..n_steps {
        stepper.apply_kinetic_full(&mut out.amplitudes);
        if step + 1 < n_steps {
            stepper.apply_potential_half(&mut out.amplitudes);
            stepper.apply_potential_half(&mut out.amplitudes);
        }
        if step % 64 == 63 {
            let leaked = out.outer_probability(0.05);
            if leaked > 1e-6 {
                return Err(OracleError::BoundaryLeak { leaked });
            }
        }
    }
    stepper.apply_potential_half(&mut out.amplitudes);

    let leaked = out.outer_probability(0.05);
    if leaked > 1e-6 {
        return Err(OracleError::BoundaryLeak { leaked });
    }
    Ok(out)
}

/// Exact Floquet evolution of the kicked rotor: `n_kicks` applications of
/// kick-then-drift, matching the classical map convention.
pub fn evolve_kicked_exact(
    state: &GridState,
    system: &SystemSpec,
    n_kicks: u64,
) -> Result<GridState, OracleError> {
    let kick_strength = match system.kind {
        SystemKind::KickedRotor { kick_strength } => kick_strength,
        _ => {
            return Err(OracleError::InvalidArgument(
                "evolve_kicked_exact requires kind = kicked_rotor".into(),
            ))
        }
    };
    if state.grid_min != 0.0 || (state.grid_max - TAU).abs() > 1e-12 {
        return Err(OracleError::InvalidGrid(
            "kicked evolution needs the [0, 2pi) grid".into(),
        ));
    }
    let n = state.n_points;
    let hbar = state.hbar;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let kick_phase: Vec<Complex64> = (0..n)
        .map(|j| {
            let q = state.position(j);
            Complex64::from_polar(1.0, -kick_strength * q.cos() / hbar)
        })
        .collect();
    let drift_phase: Vec<Complex64> = (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            let p = hbar * m as f64; // rotor momenta p = hbar * integer
            Complex64::from_polar(1.0, -p * p / (2.0 * system.mass * hbar))
        })
        .collect();

    let mut out = state.clone();
    let scale = 1.0 / n as f64;
    for _ in 0..n_kicks {
        for (a, ph) in out.amplitudes.iter_mut().zip(&kick_phase) {
            *a *= ph;
        }
        fft.process(&mut out.amplitudes);
        for (a, ph) in out.amplitudes.iter_mut().zip(&drift_phase) {
            *a *= ph;
        }
        ifft.process(&mut out.amplitudes);
        for a in out.amplitudes.iter_mut() {
            *a *= scale;
        }
    }
    Ok(out)
}

/// `|<final| U(t) |initial>|^2` via exact evolution and the grid inner product.
pub fn transition_probability_exact(
    initial: &GridState,
    fin: &GridState,
    system: &SystemSpec,
    t: f64,
) -> Result<f64, OracleError> {
    if !initial.same_grid(fin) {
        return Err(OracleError::GridMismatch);
    }
    let evolved = if system.is_kicked() {
        let n = t.round();
        if (t - n).abs() > 1e-9 || n < 0.0 {
            return Err(OracleError::InvalidArgument(format!(
                "kicked systems need an integer kick count, got t = {t}"
            )));
        }
        evolve_kicked_exact(initial, system, n as u64)?
    } else {
        evolve_exact(initial, system, t, default_oracle_dt(t))?
    };
    Ok(fin.inner(&evolved)?.norm_sqr())
}

/// Default split-step resolution for `transition_probability_exact`.
pub fn default_oracle_dt(t: f64) -> f64 {
    (t / 4096.0).max(1e-6)
}

/// Dense grid Hamiltonian with the spectral kinetic term, for eigensolve
/// oracles (tunneling splittings, exact kernels).
pub fn hamiltonian_matrix(
    system: &SystemSpec,
    grid_min: f64,
    grid_max: f64,
    n_points: usize,
    hbar: f64,
) -> Result<DMatrix<Complex64>, OracleError> {
    if system.is_kicked() {
        return Err(OracleError::InvalidArgument(
            "hamiltonian_matrix is for continuous systems".into(),
        ));
    }
    if n_points < 64 || !n_points.is_power_of_two() {
        return Err(OracleError::InvalidGrid(format!(
            "n_points must be a power of two >= 64, got {n_points}"
        )));
    }
    let n = n_points;
    let length = grid_max - grid_min;
    let dq = length / n as f64;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let kinetic: Vec<f64> = (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            let p = hbar * TAU * m as f64 / length;
            p * p / (2.0 * system.mass)
        })
        .collect();

    let mut h = DMatrix::<Complex64>::zeros(n, n);
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        col.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        col[c] = Complex64::new(1.0, 0.0);
        fft.process(&mut col);
        for (x, k) in col.iter_mut().zip(&kinetic) {
            *x *= Complex64::new(*k, 0.0);
        }
        ifft.process(&mut col);
        let scale = 1.0 / n as f64;
        for r in 0..n {
            h[(r, c)] = col[r] * scale;
        }
        let q = grid_min + dq * c as f64;
        h[(c, c)] += Complex64::new(system.potential(q), 0.0);
    }
    // Enforce exact hermiticity against FFT rounding.
    let ha = h.adjoint();
    h = (h + ha).scale(0.5);
    Ok(h)
}
