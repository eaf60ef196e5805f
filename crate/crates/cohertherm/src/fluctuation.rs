//! Fluctuation-theorem ratios and the structured-coherence enhancement model.
//!
//! The classical ratio of entropy-increasing to entropy-decreasing transition
//! probabilities is exp(dS/kB). Quantum interference multiplies it by the
//! ratio of (1 + cross/diagonal) factors of the forward and backward
//! channels, and a Gaussian coherence window concentrates the enhancement
//! near a target entropy change.

use crate::density::DensityMatrix;
use crate::oracle::GridState;
use crate::semiclassics::PropagatorResult;
use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FluctuationError {
    #[error("degenerate backward denominator: 1 + cross/diagonal = {value:.3e}")]
    DegenerateDenominator { value: f64 },
    #[error("fit diverged: no start converged within {max_iters} iterations")]
    FitDiverged { max_iters: usize },
    #[error("region [{lo}, {hi}) contains no grid cells")]
    EmptyRegion { lo: f64, hi: f64 },
    #[error("not a state: {0}")]
    NotAState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// An entropy change attached to a labeled forward transition; the backward
/// transition carries -delta_s by construction.
#[derive(Debug, Clone)]
pub struct EntropyChange {
    pub delta_s: f64,
    pub forward_label: String,
    pub backward_label: String,
}

impl EntropyChange {
    pub fn reversed(&self) -> Self {
        Self {
            delta_s: -self.delta_s,
            forward_label: self.backward_label.clone(),
            backward_label: self.forward_label.clone(),
        }
    }
}

/// Gaussian coherence-enhancement window: strength C, center dS0, width sigma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredCoherenceModel {
    pub enhancement_strength: f64,
    pub target_delta_s: f64,
    pub width: f64,
}

impl StructuredCoherenceModel {
    pub fn new(
        enhancement_strength: f64,
        target_delta_s: f64,
        width: f64,
    ) -> Result<Self, FluctuationError> {
        if !(enhancement_strength >= 0.0) {
            return Err(FluctuationError::InvalidArgument(format!(
                "enhancement_strength must be >= 0, got {enhancement_strength}"
            )));
        }
        if !(width > 0.0) {
            return Err(FluctuationError::InvalidArgument(format!(
                "width must be > 0, got {width}"
            )));
        }
        Ok(Self {
            enhancement_strength,
            target_delta_s,
            width,
        })
    }

    fn gaussian(&self, delta_s: f64) -> f64 {
        let z = (delta_s - self.target_delta_s) / self.width;
        (-0.5 * z * z).exp()
    }
}

/// One row of the emitted ratio curve.
#[derive(Debug, Clone, Copy)]
pub struct RatioPoint {
    pub delta_s: f64,
    pub classical_ratio: f64,
    pub quantum_ratio: Option<f64>,
    pub structured_ratio: Option<f64>,
}

/// Ratio samples ordered by strictly increasing delta_s.
#[derive(Debug, Clone)]
pub struct RatioCurve {
    pub points: Vec<RatioPoint>,
}

impl RatioCurve {
    pub fn new(points: Vec<RatioPoint>) -> Result<Self, FluctuationError> {
        for pair in points.windows(2) {
            if pair[1].delta_s <= pair[0].delta_s {
                return Err(FluctuationError::InvalidArgument(
                    "delta_s values must be strictly increasing".into(),
                ));
            }
        }
        for p in &points {
            let ok = p.classical_ratio > 0.0
                && p.quantum_ratio.map_or(true, |r| r > 0.0)
                && p.structured_ratio.map_or(true, |r| r > 0.0);
            if !ok {
                return Err(FluctuationError::InvalidArgument(format!(
                    "nonpositive ratio at delta_s = {}",
                    p.delta_s
                )));
            }
        }
        Ok(Self { points })
    }

    /// Evaluate classical and structured columns over a uniform delta_s grid.
    pub fn from_model(
        model: &StructuredCoherenceModel,
        range: (f64, f64),
        n_points: usize,
        k_b: f64,
    ) -> Result<Self, FluctuationError> {
        if n_points < 2 || !(range.1 > range.0) {
            return Err(FluctuationError::InvalidArgument(
                "need n_points >= 2 and an increasing range".into(),
            ));
        }
        let points: Vec<RatioPoint> = (0..n_points)
            .into_par_iter()
            .map(|k| {
                let delta_s =
                    range.0 + (range.1 - range.0) * k as f64 / (n_points - 1) as f64;
                RatioPoint {
                    delta_s,
                    classical_ratio: classical_ratio(delta_s, k_b),
                    quantum_ratio: None,
                    structured_ratio: Some(structured_ratio(delta_s, model, k_b)),
                }
            })
            .collect();
        Self::new(points)
    }

    /// CSV `delta_s,classical,quantum,structured`; absent columns stay empty.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "delta_s,classical,quantum,structured")?;
        for p in &self.points {
            let fmt_opt = |x: Option<f64>| x.map(crate::io::fmt_float).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{}",
                crate::io::fmt_float(p.delta_s),
                crate::io::fmt_float(p.classical_ratio),
                fmt_opt(p.quantum_ratio),
                fmt_opt(p.structured_ratio)
            )?;
        }
        Ok(())
    }
}

/// Classical fluctuation ratio exp(delta_s / k_B).
pub fn classical_ratio(delta_s: f64, k_b: f64) -> f64 {
    assert!(k_b > 0.0, "k_B must be positive");
    (delta_s / k_b).exp()
}

/// Interference-corrected ratio: classical value times
/// (1 + cross_f/diag_f) / (1 + cross_b/diag_b).
pub fn quantum_ratio(
    forward: &PropagatorResult,
    backward: &PropagatorResult,
    delta_s: f64,
    k_b: f64,
) -> Result<f64, FluctuationError> {
    if !(forward.diagonal_sum > 0.0) || !(backward.diagonal_sum > 0.0) {
        return Err(FluctuationError::InvalidArgument(
            "both propagator results need diagonal_sum > 0".into(),
        ));
    }
    let f_factor = 1.0 + forward.cross_sum / forward.diagonal_sum;
    let b_factor = 1.0 + backward.cross_sum / backward.diagonal_sum;
    if b_factor <= 1e-12 {
        return Err(FluctuationError::DegenerateDenominator { value: b_factor });
    }
    Ok(classical_ratio(delta_s, k_b) * f_factor / b_factor)
}

/// Same correction formed directly from (diagonal, cross) sums, for callers
/// that build channel statistics outside a PropagatorResult.
pub fn quantum_ratio_from_sums(
    forward: (f64, f64),
    backward: (f64, f64),
    delta_s: f64,
    k_b: f64,
) -> Result<f64, FluctuationError> {
    if !(forward.0 > 0.0) || !(backward.0 > 0.0) {
        return Err(FluctuationError::InvalidArgument(
            "both channels need diagonal_sum > 0".into(),
        ));
    }
    let f_factor = 1.0 + forward.1 / forward.0;
    let b_factor = 1.0 + backward.1 / backward.0;
    if b_factor <= 1e-12 {
        return Err(FluctuationError::DegenerateDenominator { value: b_factor });
    }
    Ok(classical_ratio(delta_s, k_b) * f_factor / b_factor)
}

/// Structured ratio exp(dS/kB) * (1 + C exp(-(dS - dS0)^2 / 2 sigma^2)).
pub fn structured_ratio(delta_s: f64, model: &StructuredCoherenceModel, k_b: f64) -> f64 {
    classical_ratio(delta_s, k_b) * (1.0 + model.enhancement_strength * model.gaussian(delta_s))
}

/// Entropy difference k_B ln(W_B / W_A) from grid-cell counts in two
/// position regions (Boltzmann counting at grid resolution).
pub fn entropy_change_between_regions(
    region_a: (f64, f64),
    region_b: (f64, f64),
    grid: &GridState,
    k_b: f64,
) -> Result<f64, FluctuationError> {
    let count = |(lo, hi): (f64, f64)| -> Result<usize, FluctuationError> {
        if lo < grid.grid_min - 1e-12 || hi > grid.grid_max + 1e-12 || !(hi > lo) {
            return Err(FluctuationError::InvalidArgument(format!(
                "region [{lo}, {hi}) outside grid [{}, {}]",
                grid.grid_min, grid.grid_max
            )));
        }
        let n = (0..grid.n_points)
            .filter(|&j| {
                let q = grid.position(j);
                q >= lo && q < hi
            })
            .count();
        if n == 0 {
            return Err(FluctuationError::EmptyRegion { lo, hi });
        }
        Ok(n)
    };
    let w_a = count(region_a)? as f64;
    let w_b = count(region_b)? as f64;
    Ok(k_b * (w_b / w_a).ln())
}

/// von Neumann entropy -k_B sum lambda ln lambda over eigenvalues > 1e-14.
pub fn von_neumann_entropy(rho: &DensityMatrix, k_b: f64) -> Result<f64, FluctuationError> {
    let eigs = rho.eigenvalues();
    let trace: f64 = eigs.iter().sum();
    if (trace - 1.0).abs() > 1e-10 {
        return Err(FluctuationError::NotAState(format!(
            "eigenvalue sum {trace} deviates from 1"
        )));
    }
    if let Some(&min) = eigs
        .iter()
        .min_by(|a, b| a.partial_cmp(b).unwrap())
    {
        if min < -1e-10 {
            return Err(FluctuationError::NotAState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
    }
    Ok(-k_b
        * eigs
            .iter()
            .filter(|&&lam| lam > 1e-14)
            .map(|&lam| lam * lam.ln())
            .sum::<f64>())
}

const FIT_MAX_ITERS: usize = 500;
const FIT_N_STARTS: usize = 5;

/// Least-squares fit of (C, dS0, sigma) to ratio samples, minimizing the sum
/// of squared log-ratio residuals. Multi-start Gauss-Newton: dS0 is seeded at
/// the sample points with the largest excess over the classical curve.
pub fn fit_structured_model(
    samples: &[(f64, f64)],
    k_b: f64,
) -> Result<(StructuredCoherenceModel, f64), FluctuationError> {
    if samples.len() < 8 {
        return Err(FluctuationError::InvalidArgument(format!(
            "need >= 8 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&(_, r)| !(r > 0.0)) {
        return Err(FluctuationError::InvalidArgument(
            "all ratios must be positive".into(),
        ));
    }

    // Work on y = ln ratio - dS/kB = ln(1 + C g(dS)).
    let excess: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(ds, r)| (ds, r.ln() - ds / k_b))
        .collect();

    let mut order: Vec<usize> = (0..excess.len()).collect();
    order.sort_by(|&a, &b| excess[b].1.partial_cmp(&excess[a].1).unwrap());

    let spacing = {
        let mut ds: Vec<f64> = samples.iter().map(|&(d, _)| d).collect();
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let span = ds[ds.len() - 1] - ds[0];
        (span / (ds.len() - 1) as f64).max(1e-6)
    };
    let c_seed = excess
        .iter()
        .map(|&(_, y)| y.exp() - 1.0)
        .fold(0.0f64, f64::max)
        .max(1e-6);

    let starts: Vec<(f64, f64, f64)> = order
        .iter()
        .take(FIT_N_STARTS)
        .map(|&i| (c_seed, excess[i].0, spacing * 3.0))
        .collect();

    let results: Vec<Option<(StructuredCoherenceModel, f64)>> = starts
        .par_iter()
        .map(|&(c0, ds0, sig0)| gauss_newton(&excess, c0, ds0, sig0))
        .collect();

    results
        .into_iter()
        .flatten()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .ok_or(FluctuationError::FitDiverged {
            max_iters: FIT_MAX_ITERS,
        })
}

/// One Gauss-Newton run in (C, dS0, sigma) with Levenberg damping; returns
/// the model and residual on convergence, None on divergence.
fn gauss_newton(
    excess: &[(f64, f64)],
    mut c: f64,
    mut ds0: f64,
    mut sigma: f64,
) -> Option<(StructuredCoherenceModel, f64)> {
    let cost = |c: f64, ds0: f64, sigma: f64| -> f64 {
        excess
            .iter()
            .map(|&(ds, y)| {
                let z = (ds - ds0) / sigma;
                let model = (1.0 + c * (-0.5 * z * z).exp()).ln();
                let r = y - model;
                r * r
            })
            .sum()
    };

    let mut lambda = 1e-3;
    let mut prev_cost = cost(c, ds0, sigma);
    for _ in 0..FIT_MAX_ITERS {
        // Residuals r_i = y_i - ln(1 + C g_i) and the Jacobian rows
        // d(model)/d(C, dS0, sigma).
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for &(ds, y) in excess {
            let z = (ds - ds0) / sigma;
            let g = (-0.5 * z * z).exp();
            let denom = 1.0 + c * g;
            let r = y - denom.ln();
            let d_c = g / denom;
            let d_ds0 = c * g * z / (sigma * denom);
            let d_sigma = c * g * z * z / (sigma * denom);
            let row = [d_c, d_ds0, d_sigma];
            for a in 0..3 {
                jtr[a] += row[a] * r;
                for b in 0..3 {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        for a in 0..3 {
            jtj[a][a] *= 1.0 + lambda;
        }
        let step = solve3(&jtj, &jtr)?;
        let (nc, nds0, nsigma) = (
            (c + step[0]).max(0.0),
            ds0 + step[1],
            (sigma + step[2]).max(1e-9),
        );
        let new_cost = cost(nc, nds0, nsigma);
        if new_cost.is_finite() && new_cost <= prev_cost {
            let delta = prev_cost - new_cost;
            c = nc;
            ds0 = nds0;
            sigma = nsigma;
            prev_cost = new_cost;
            lambda = (lambda * 0.5).max(1e-12);
            if delta < 1e-16 * (1.0 + prev_cost) {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    if !prev_cost.is_finite() {
        return None;
    }
    let model = StructuredCoherenceModel::new(c, ds0, sigma).ok()?;
    Some((model, prev_cost))
}

/// Direct 3x3 solve by Gaussian elimination with partial pivoting.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&r, &s| m[r][col].abs().partial_cmp(&m[s][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for k in col..4 {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0f64; 3];
    for i in (0..3).rev() {
        let mut s = m[i][3];
        for k in i + 1..3 {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
