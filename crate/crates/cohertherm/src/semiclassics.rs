//! Van Vleck-Gutzwiller amplitudes and their interference accounting.
//!
//! A trajectory alpha contributes `a_alpha exp(i S_alpha/hbar - i pi nu_alpha/2)`
//! with `a_alpha = sqrt(1/(2 pi hbar |m21|))`; the global `exp(-i pi/4)` from
//! `1/sqrt(2 pi i hbar)` is folded into the total once, so the exact-kernel
//! comparisons have the absolute phase convention fixed while the per-branch
//! phase stays `S/hbar - pi nu/2`.

use crate::dynamics::{
    self, find_boundary_trajectories_light, DynamicsError, SystemSpec, Trajectory,
};
use crate::numeric::{wrap_to_tau, KahanComplexSum, KahanSum};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SemiclassicsError {
    #[error("empty trajectory set: the VVG sum needs at least one branch")]
    EmptyTrajectorySet,
    #[error("caustic contribution: |m21| = {m21_abs:.3e} below 1e-12")]
    CausticContribution { m21_abs: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// One branch of the semiclassical sum.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryContribution {
    pub amplitude_magnitude: f64,
    pub action: f64,
    pub maslov_index: u32,
    /// `action / hbar - (pi/2) * maslov_index`.
    pub phase: f64,
}

impl TrajectoryContribution {
    pub fn from_trajectory(traj: &Trajectory, hbar: f64) -> Result<Self, SemiclassicsError> {
        if !(hbar > 0.0) {
            return Err(SemiclassicsError::InvalidArgument(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        let m21_abs = traj.monodromy.dqf_dpi.abs();
        if m21_abs < 1e-12 {
            return Err(SemiclassicsError::CausticContribution { m21_abs });
        }
        let amplitude_magnitude = (1.0 / (TAU * hbar * m21_abs)).sqrt();
        Ok(Self {
            amplitude_magnitude,
            action: traj.action,
            maslov_index: traj.maslov_index,
            phase: traj.action / hbar - FRAC_PI_2 * traj.maslov_index as f64,
        })
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude_magnitude, self.phase)
    }
}

/// Assembled VVG amplitude with its diagonal/cross decomposition.
#[derive(Debug, Clone)]
pub struct PropagatorResult {
    pub total_amplitude: Complex64,
    /// Branches in ascending action order.
    pub contributions: Vec<TrajectoryContribution>,
    pub diagonal_sum: f64,
    pub cross_sum: f64,
}

impl PropagatorResult {
    /// Build the decomposition from per-branch complex amplitudes. The global
    /// `exp(-i pi/4)` convention factor is applied to the total only; it drops
    /// out of both probability sums.
    pub fn from_contributions(
        mut contributions: Vec<TrajectoryContribution>,
    ) -> Result<Self, SemiclassicsError> {
        if contributions.is_empty() {
            return Err(SemiclassicsError::EmptyTrajectorySet);
        }
        contributions.sort_by(|a, b| a.action.partial_cmp(&b.action).unwrap());
        let mut total = KahanComplexSum::new();
        let mut diag = KahanSum::new();
        for c in &contributions {
            total.add(c.amplitude());
            diag.add(c.amplitude_magnitude * c.amplitude_magnitude);
        }
        let diagonal_sum = diag.value();
        let n = contributions.len();
        let cross_sum = if n <= 512 {
            let mut cross = KahanSum::new();
            for i in 0..n {
                for j in i + 1..n {
                    let (a, b) = (&contributions[i], &contributions[j]);
                    cross.add(
                        2.0 * a.amplitude_magnitude
                            * b.amplitude_magnitude
                            * (a.phase - b.phase).cos(),
                    );
                }
            }
            cross.value()
        } else {
            total.value().norm_sqr() - diagonal_sum
        };
        let total_amplitude = Complex64::from_polar(1.0, -FRAC_PI_4) * total.value();
        Ok(Self {
            total_amplitude,
            contributions,
            diagonal_sum,
            cross_sum,
        })
    }

    /// CSV export: one row per branch plus a TOTAL footer.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "branch_index,action,maslov,amplitude_magnitude,phase")?;
        for (k, c) in self.contributions.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                k,
                crate::io::fmt_float(c.action),
                c.maslov_index,
                crate::io::fmt_float(c.amplitude_magnitude),
                crate::io::fmt_float(c.phase)
            )?;
        }
        let (p_total, p_classical, p_interference) = transition_probability(self);
        let _ = p_total;
        writeln!(
            w,
            "TOTAL,{},{},{},{}",
            crate::io::fmt_float(self.total_amplitude.re),
            crate::io::fmt_float(self.total_amplitude.im),
            crate::io::fmt_float(p_classical),
            crate::io::fmt_float(p_interference)
        )?;
        Ok(())
    }
}

/// Sum the VVG amplitude over a trajectory set sharing endpoints and time.
pub fn vvg_amplitude(
    trajectories: &[Trajectory],
    hbar: f64,
) -> Result<PropagatorResult, SemiclassicsError> {
    if trajectories.is_empty() {
        return Err(SemiclassicsError::EmptyTrajectorySet);
    }
    let contributions = trajectories
        .iter()
        .map(|t| TrajectoryContribution::from_trajectory(t, hbar))
        .collect::<Result<Vec<_>, _>>()?;
    PropagatorResult::from_contributions(contributions)
}

/// Split `|K|^2` into its classical (diagonal) and interference parts.
pub fn transition_probability(result: &PropagatorResult) -> (f64, f64, f64) {
    let p_total = result.total_amplitude.norm_sqr();
    (p_total, result.diagonal_sum, result.cross_sum)
}

/// Chaos-assisted tunneling estimate between two q-intervals on the cylinder.
#[derive(Debug, Clone)]
pub struct TunnelingEstimate {
    pub probability: f64,
    /// Set when no endpoint pair had any connecting trajectory.
    pub census_empty: bool,
    /// `|K|^2` per endpoint pair, a-major order.
    pub pair_values: Vec<f64>,
}

/// Default momentum window for the kicked-map boundary search.
pub const DEFAULT_TUNNELING_P_WINDOW: (f64, f64) = (-PI, PI);

/// Representative endpoint stencil: 8 evenly spaced interior points per region.
const REGION_STENCIL: usize = 8;

pub fn chaos_tunneling_probability(
    system: &SystemSpec,
    region_a: (f64, f64),
    region_b: (f64, f64),
    n_kicks: u64,
    n_seeds: usize,
) -> Result<TunnelingEstimate, SemiclassicsError> {
    chaos_tunneling_probability_with_window(
        system,
        region_a,
        region_b,
        n_kicks,
        n_seeds,
        DEFAULT_TUNNELING_P_WINDOW,
    )
}

pub fn chaos_tunneling_probability_with_window(
    system: &SystemSpec,
    region_a: (f64, f64),
    region_b: (f64, f64),
    n_kicks: u64,
    n_seeds: usize,
    p_window: (f64, f64),
) -> Result<TunnelingEstimate, SemiclassicsError> {
    if !system.is_kicked() {
        return Err(SemiclassicsError::InvalidArgument(
            "chaos_tunneling_probability requires kind = kicked_rotor".into(),
        ));
    }
    for (lo, hi) in [region_a, region_b] {
        if !(hi > lo) {
            return Err(SemiclassicsError::InvalidArgument(format!(
                "region must be a non-degenerate interval, got ({lo}, {hi})"
            )));
        }
    }
    let same = region_a == region_b;
    if !same && intervals_overlap_on_cylinder(region_a, region_b) {
        return Err(SemiclassicsError::InvalidArgument(
            "regions must be disjoint q-intervals on the cylinder".into(),
        ));
    }
    if n_kicks == 0 {
        // Identity propagation: unit return probability on the same region,
        // zero between disjoint regions.
        return Ok(TunnelingEstimate {
            probability: if same { 1.0 } else { 0.0 },
            census_empty: false,
            pair_values: Vec::new(),
        });
    }

    let stencil = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..REGION_STENCIL)
            .map(|j| lo + (hi - lo) * (j as f64 + 0.5) / REGION_STENCIL as f64)
            .collect()
    };
    let points_a = stencil(region_a);
    let points_b = stencil(region_b);
    let pairs: Vec<(f64, f64)> = points_a
        .iter()
        .flat_map(|&qa| points_b.iter().map(move |&qb| (qa, qb)))
        .collect();

    let pair_values: Vec<f64> = pairs
        .par_iter()
        .map(|&(qa, qb)| {
            let search = find_boundary_trajectories_light(
                system,
                qa,
                qb,
                n_kicks as f64,
                p_window,
                n_seeds,
                0.0,
            )?;
            if search.trajectories.is_empty() {
                return Ok(0.0);
            }
            let result = vvg_amplitude(&search.trajectories, system.hbar)?;
            Ok::<f64, SemiclassicsError>(result.total_amplitude.norm_sqr())
        })
        .collect::<Result<_, _>>()?;

    let census_empty = pair_values.iter().all(|&v| v == 0.0);
    let mut acc = KahanSum::new();
    for &v in &pair_values {
        acc.add(v);
    }
    Ok(TunnelingEstimate {
        probability: acc.value() / pair_values.len() as f64,
        census_empty,
        pair_values,
    })
}

fn intervals_overlap_on_cylinder(a: (f64, f64), b: (f64, f64)) -> bool {
    // Compare interval interiors after wrapping representative points.
    let contains = |(lo, hi): (f64, f64), q: f64| -> bool {
        let w = wrap_to_tau(q - lo);
        w < (hi - lo)
    };
    let probe = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..16)
            .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / 16.0)
            .collect()
    };
    probe(a).into_iter().any(|q| contains(b, q)) || probe(b).into_iter().any(|q| contains(a, q))
}

/// A minimum-uncertainty Gaussian wavepacket, shared convention with the
/// oracle grid states: `(2 pi s^2)^(-1/4) exp(-(q-q0)^2/(4 s^2) + i p0 (q-q0)/hbar)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianPacket {
    pub center_q: f64,
    pub center_p: f64,
    pub sigma: f64,
}

impl GaussianPacket {
    pub fn value(&self, q: f64, hbar: f64) -> Complex64 {
        let norm = (TAU * self.sigma * self.sigma).powf(-0.25);
        let dq = q - self.center_q;
        let envelope = (-dq * dq / (4.0 * self.sigma * self.sigma)).exp();
        Complex64::from_polar(norm * envelope, self.center_p * dq / hbar)
    }
}

/// Controls for the branch-resolved packet quadrature.
#[derive(Debug, Clone, Copy)]
pub struct PacketQuadrature {
    /// Quadrature points per endpoint dimension.
    pub n_quad: usize,
    /// Integration half-width in units of the packet sigma.
    pub half_width_sigmas: f64,
    /// Momentum window for the central-branch census.
    pub p_window: (f64, f64),
    /// Seeds for the central census.
    pub n_seeds: usize,
    /// Integration steps per orbit.
    pub n_steps: usize,
}

impl Default for PacketQuadrature {
    fn default() -> Self {
        Self {
            n_quad: 121,
            half_width_sigmas: 3.5,
            p_window: (0.2, 4.0),
            n_seeds: 400,
            n_steps: 1200,
        }
    }
}

/// Branch-resolved semiclassical transition amplitude between two Gaussian
/// packets: each central branch is continued in both endpoints across the
/// packet supports and its kernel contribution integrated against the packets.
#[derive(Debug, Clone)]
pub struct PacketTransition {
    /// Complex smeared amplitude per branch, ascending central action.
    pub branch_amplitudes: Vec<Complex64>,
    /// Fraction of quadrature cells lost to failed continuation (caustics,
    /// branch leaving the window); should stay near zero in valid setups.
    pub dropped_cell_fraction: f64,
}

impl PacketTransition {
    pub fn total_amplitude(&self) -> Complex64 {
        let mut s = KahanComplexSum::new();
        for &a in &self.branch_amplitudes {
            s.add(a);
        }
        s.value()
    }

    pub fn p_total(&self) -> f64 {
        self.total_amplitude().norm_sqr()
    }

    pub fn diagonal_sum(&self) -> f64 {
        self.branch_amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn cross_sum(&self) -> f64 {
        self.p_total() - self.diagonal_sum()
    }
}

/// Evaluate the semiclassical packet-to-packet transition amplitude.
pub fn packet_transition(
    system: &SystemSpec,
    source: &GaussianPacket,
    target: &GaussianPacket,
    t: f64,
    quad: &PacketQuadrature,
) -> Result<PacketTransition, SemiclassicsError> {
    if system.is_kicked() {
        return Err(SemiclassicsError::InvalidArgument(
            "packet_transition supports continuous systems only".into(),
        ));
    }
    if quad.n_quad < 8 {
        return Err(SemiclassicsError::InvalidArgument(
            "n_quad must be at least 8".into(),
        ));
    }
    let hbar = system.hbar;
    let dt = t / quad.n_steps as f64;

    // Central census fixes the branch set.
    let central = dynamics::find_boundary_trajectories_with_dt(
        system,
        source.center_q,
        target.center_q,
        t,
        quad.p_window,
        quad.n_seeds,
        dt,
    )?;
    if central.trajectories.is_empty() {
        return Ok(PacketTransition {
            branch_amplitudes: Vec::new(),
            dropped_cell_fraction: 0.0,
        });
    }
    let mut central_roots: Vec<(f64, f64)> = central
        .trajectories
        .iter()
        .map(|tr| (tr.action, tr.p_i))
        .collect();
    central_roots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let n = quad.n_quad;
    let qi_grid = crate::numeric::linspace(
        source.center_q - quad.half_width_sigmas * source.sigma,
        source.center_q + quad.half_width_sigmas * source.sigma,
        n,
    );
    let qf_grid = crate::numeric::linspace(
        target.center_q - quad.half_width_sigmas * target.sigma,
        target.center_q + quad.half_width_sigmas * target.sigma,
        n,
    );
    let dqi = qi_grid[1] - qi_grid[0];
    let dqf = qf_grid[1] - qf_grid[0];
    let jc = n / 2;

    // Newton refinement of the root p for endpoints (qi, qf), seeded nearby.
    let polish = |qi: f64, qf: f64, p_seed: f64| -> Option<(f64, Trajectory)> {
        let mut p = p_seed;
        for _ in 0..24 {
            let traj = dynamics::integrate_endpoint(system, qi, p, t, dt).ok()?;
            let f = traj.q_f - qf;
            let m21 = traj.monodromy.dqf_dpi;
            if m21.abs() < 1e-12 {
                return None;
            }
            if f.abs() < 1e-10 {
                return Some((p, traj));
            }
            let step = f / m21;
            p -= step.clamp(-0.5, 0.5);
            if !p.is_finite() {
                return None;
            }
        }
        None
    };

    let global_phase = Complex64::from_polar(1.0, -FRAC_PI_4);
    let mut branch_amplitudes = Vec::with_capacity(central_roots.len());
    let mut dropped_total = 0usize;

    for &(_, p_center) in &central_roots {
        // Continue the branch along the central column first, sequentially.
        let mut column_roots: Vec<Option<f64>> = vec![None; n];
        let ic = n / 2;
        let mut seed = p_center;
        for i in ic..n {
            match polish(qi_grid[i], qf_grid[jc], seed) {
                Some((p, _)) => {
                    column_roots[i] = Some(p);
                    seed = p;
                }
                None => break,
            }
        }
        seed = column_roots[ic].unwrap_or(p_center);
        for i in (0..ic).rev() {
            match polish(qi_grid[i], qf_grid[jc], seed) {
                Some((p, _)) => {
                    column_roots[i] = Some(p);
                    seed = p;
                }
                None => break,
            }
        }

        // Rows are independent given their column seed.
        let rows: Vec<(Complex64, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let qi = qi_grid[i];
                let Some(p0) = column_roots[i] else {
                    return (Complex64::new(0.0, 0.0), n);
                };
                let gi = source.value(qi, hbar);
                let wi = trapezoid_weight(i, n) * dqi;
                let mut acc = KahanComplexSum::new();
                let mut dropped = 0usize;

                let mut eval_cell = |j: usize, seed: &mut f64, dropped: &mut usize| -> bool {
                    match polish(qi, qf_grid[j], *seed) {
                        Some((p, traj)) => {
                            *seed = p;
                            let m21_abs = traj.monodromy.dqf_dpi.abs();
                            let amp = (1.0 / (TAU * hbar * m21_abs)).sqrt();
                            let phase = traj.action / hbar
                                - FRAC_PI_2 * traj.maslov_index as f64;
                            let kernel =
                                global_phase * Complex64::from_polar(amp, phase);
                            let gf = target.value(qf_grid[j], hbar).conj();
                            let wj = trapezoid_weight(j, n) * dqf;
                            acc.add(kernel * gi * gf * (wi * wj));
                            true
                        }
                        None => {
                            *dropped += 1;
                            false
                        }
                    }
                };

                let mut seed_up = p0;
                for j in jc..n {
                    if !eval_cell(j, &mut seed_up, &mut dropped) {
                        dropped += n - j - 1;
                        break;
                    }
                }
                let mut seed_down = p0;
                for j in (0..jc).rev() {
                    if !eval_cell(j, &mut seed_down, &mut dropped) {
                        dropped += j;
                        break;
                    }
                }
                (acc.value(), dropped)
            })
            .collect();

        let mut amp = KahanComplexSum::new();
        for (a, d) in rows {
            amp.add(a);
            dropped_total += d;
        }
        branch_amplitudes.push(amp.value());
    }

    Ok(PacketTransition {
        branch_amplitudes,
        dropped_cell_fraction: dropped_total as f64
            / (central_roots.len() * n * n) as f64,
    })
}

fn trapezoid_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// Exact free-particle kernel, for tests and examples.
pub fn free_particle_kernel(mass: f64, hbar: f64, dq: f64, t: f64) -> Complex64 {
    let amp = (mass / (TAU * hbar * t)).sqrt();
    let phase = mass * dq * dq / (2.0 * hbar * t) - FRAC_PI_4;
    Complex64::from_polar(amp, phase)
}

/// Exact harmonic-oscillator kernel away from focal times, including the
/// Maslov phase from earlier focal points.
pub fn harmonic_kernel(
    mass: f64,
    omega: f64,
    hbar: f64,
    q_i: f64,
    q_f: f64,
    t: f64,
) -> Complex64 {
    let s = (omega * t).sin();
    let c = (omega * t).cos();
    let action =
        mass * omega / (2.0 * s) * ((q_i * q_i + q_f * q_f) * c - 2.0 * q_i * q_f);
    let amp = (mass * omega / (TAU * hbar * s.abs())).sqrt();
    // Number of focal points passed: floor(omega t / pi).
    let nu = (omega * t / PI).floor() as i64;
    let phase = action / hbar - FRAC_PI_2 * nu as f64 - FRAC_PI_4;
    Complex64::from_polar(amp, phase)
}
