//! Classical Hamiltonian systems and trajectory machinery.
//!
//! Continuous 1D systems are integrated with fixed-step velocity Verlet; the
//! kicked rotor is advanced by exact application of the standard map on the
//! cylinder (q mod 2pi, p unbounded). The 2x2 tangent map (monodromy) is
//! propagated alongside every orbit by the variational equations, and the
//! Maslov counter increments at each sign change of dq_f/dp_i.
//!
//! Monodromy element naming follows the CSV export convention
//! `m11 = dp_f/dp_i`, `m12 = dp_f/dq_i`, `m21 = dq_f/dp_i`, `m22 = dq_f/dq_i`,
//! so caustics are zeros of `m21`.

use crate::numeric::wrap_to_pi;
use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid system parameter: {0}")]
    InvalidParameter(String),
    #[error("trajectory state became non-finite at t = {time} (q = {q}, p = {p})")]
    NonFiniteState { time: f64, q: f64, p: f64 },
    #[error("no classical trajectory connects the requested endpoints")]
    NoTrajectoryFound,
    #[error("caustic at endpoint: |dq_f/dp_i| = {m21_abs:.3e} below 1e-12, VVG prefactor diverges")]
    CausticAtEndpoint { m21_abs: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Which Hamiltonian the system follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemKind {
    FreeParticle,
    Harmonic { omega: f64 },
    DoubleWell { barrier_height: f64, well_separation: f64 },
    KickedRotor { kick_strength: f64 },
}

/// A classical system plus the physical constants used downstream.
///
/// The double well is the quartic `V(q) = B ((q/a)^2 - 1)^2` with
/// `a = well_separation / 2`, so the minima sit at `q = +-a` and the barrier
/// top at the origin has height `B`. The kicked rotor uses the kick potential
/// `V(q) = K cos q` applied once per unit period, i.e. the standard map
/// `p' = p + K sin q`, `q' = q + p'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub mass: f64,
    pub hbar: f64,
    pub k_b: f64,
}

impl SystemSpec {
    pub fn new(kind: SystemKind, mass: f64) -> Result<Self, DynamicsError> {
        if !(mass > 0.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "mass must be positive, got {mass}"
            )));
        }
        match kind {
            SystemKind::Harmonic { omega } if !(omega > 0.0) => {
                return Err(DynamicsError::InvalidParameter(format!(
                    "omega must be positive, got {omega}"
                )));
            }
            SystemKind::DoubleWell {
                barrier_height,
                well_separation,
            } if !(barrier_height > 0.0) || !(well_separation > 0.0) => {
                return Err(DynamicsError::InvalidParameter(format!(
                    "double well needs barrier_height > 0 and well_separation > 0, \
                     got {barrier_height}, {well_separation}"
                )));
            }
            _ => {}
        }
        Ok(Self {
            kind,
            mass,
            hbar: 1.0,
            k_b: 1.0,
        })
    }

    pub fn free_particle(mass: f64) -> Result<Self, DynamicsError> {
        Self::new(SystemKind::FreeParticle, mass)
    }

    pub fn harmonic(mass: f64, omega: f64) -> Result<Self, DynamicsError> {
        Self::new(SystemKind::Harmonic { omega }, mass)
    }

    pub fn double_well(
        mass: f64,
        barrier_height: f64,
        well_separation: f64,
    ) -> Result<Self, DynamicsError> {
        Self::new(
            SystemKind::DoubleWell {
                barrier_height,
                well_separation,
            },
            mass,
        )
    }

    pub fn kicked_rotor(mass: f64, kick_strength: f64) -> Result<Self, DynamicsError> {
        Self::new(SystemKind::KickedRotor { kick_strength }, mass)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self, DynamicsError> {
        if !(hbar > 0.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        self.hbar = hbar;
        Ok(self)
    }

    pub fn with_k_b(mut self, k_b: f64) -> Result<Self, DynamicsError> {
        if !(k_b > 0.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "k_B must be positive, got {k_b}"
            )));
        }
        self.k_b = k_b;
        Ok(self)
    }

    pub fn is_kicked(&self) -> bool {
        matches!(self.kind, SystemKind::KickedRotor { .. })
    }

    /// Potential energy. For the kicked rotor this is the kick potential.
    pub fn potential(&self, q: f64) -> f64 {
        match self.kind {
            SystemKind::FreeParticle => 0.0,
            SystemKind::Harmonic { omega } => 0.5 * self.mass * omega * omega * q * q,
            SystemKind::DoubleWell {
                barrier_height,
                well_separation,
            } => {
                let a = 0.5 * well_separation;
                let u = (q / a) * (q / a) - 1.0;
                barrier_height * u * u
            }
            SystemKind::KickedRotor { kick_strength } => kick_strength * q.cos(),
        }
    }

    /// Force `-dV/dq`.
    pub fn force(&self, q: f64) -> f64 {
        match self.kind {
            SystemKind::FreeParticle => 0.0,
            SystemKind::Harmonic { omega } => -self.mass * omega * omega * q,
            SystemKind::DoubleWell {
                barrier_height,
                well_separation,
            } => {
                let a = 0.5 * well_separation;
                let s = q / a;
                -4.0 * barrier_height / a * s * (s * s - 1.0)
            }
            SystemKind::KickedRotor { kick_strength } => kick_strength * q.sin(),
        }
    }

    /// Curvature `d2V/dq2`, used by the variational equations.
    pub fn curvature(&self, q: f64) -> f64 {
        match self.kind {
            SystemKind::FreeParticle => 0.0,
            SystemKind::Harmonic { omega } => self.mass * omega * omega,
            SystemKind::DoubleWell {
                barrier_height,
                well_separation,
            } => {
                let a = 0.5 * well_separation;
                let s = q / a;
                4.0 * barrier_height / (a * a) * (3.0 * s * s - 1.0)
            }
            SystemKind::KickedRotor { kick_strength } => kick_strength * q.cos(),
        }
    }

    /// Energy of a phase-space point (continuous systems).
    pub fn energy(&self, q: f64, p: f64) -> f64 {
        p * p / (2.0 * self.mass) + self.potential(q)
    }
}

/// Tangent map of phase-space deviations along an orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monodromy {
    pub dpf_dpi: f64,
    pub dpf_dqi: f64,
    pub dqf_dpi: f64,
    pub dqf_dqi: f64,
}

impl Monodromy {
    pub fn identity() -> Self {
        Self {
            dpf_dpi: 1.0,
            dpf_dqi: 0.0,
            dqf_dpi: 0.0,
            dqf_dqi: 1.0,
        }
    }

    pub fn det(&self) -> f64 {
        self.dpf_dpi * self.dqf_dqi - self.dpf_dqi * self.dqf_dpi
    }

    /// Momentum shear `dp += coeff * dq`, the Jacobian of a kick.
    fn kick(&mut self, coeff: f64) {
        self.dpf_dpi += coeff * self.dqf_dpi;
        self.dpf_dqi += coeff * self.dqf_dqi;
    }

    /// Position shear `dq += coeff * dp`, the Jacobian of a drift.
    fn drift(&mut self, coeff: f64) {
        self.dqf_dpi += coeff * self.dpf_dpi;
        self.dqf_dqi += coeff * self.dpf_dqi;
    }
}

/// Counts sign changes of m21, skipping the trivial zero at t = 0.
/// An exact zero at a sample point counts once.
#[derive(Debug, Clone, Copy)]
struct MaslovCounter {
    count: u32,
    last_sign: i8,
    zero_counted: bool,
}

impl MaslovCounter {
    fn new() -> Self {
        Self {
            count: 0,
            last_sign: 0,
            zero_counted: false,
        }
    }

    fn update(&mut self, m21: f64) {
        let s: i8 = if m21 > 0.0 {
            1
        } else if m21 < 0.0 {
            -1
        } else {
            0
        };
        if s == 0 {
            if !self.zero_counted {
                self.count += 1;
                self.zero_counted = true;
            }
            return;
        }
        if self.last_sign == 0 {
            // First nonzero sample: the initial m21 = 0 of the identity
            // monodromy is not a conjugate point. A counted exact zero has
            // already accounted for the crossing.
            self.zero_counted = false;
            self.last_sign = s;
            return;
        }
        if s != self.last_sign {
            self.count += 1;
        }
        self.last_sign = s;
    }
}

/// One recorded phase-space point along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectorySample {
    pub time: f64,
    pub q: f64,
    pub p: f64,
    pub action_so_far: f64,
    pub monodromy: Monodromy,
    pub maslov_so_far: u32,
}

/// One classical path with its action, stability, and Maslov data.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub q_i: f64,
    pub p_i: f64,
    pub q_f: f64,
    pub p_f: f64,
    /// Elapsed time; for kicked maps this equals the kick count.
    pub t: f64,
    /// Set for kicked-map trajectories.
    pub n_kicks: Option<u64>,
    pub action: f64,
    pub maslov_index: u32,
    pub monodromy: Monodromy,
    pub hbar: f64,
    pub mass: f64,
    /// Per-step samples; empty when integrated in endpoint-only mode.
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    /// CSV export: `time,q,p,action_so_far,m11,m12,m21,m22,maslov`,
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "time,q,p,action_so_far,m11,m12,m21,m22,maslov")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                crate::io::fmt_float(s.time),
                crate::io::fmt_float(s.q),
                crate::io::fmt_float(s.p),
                crate::io::fmt_float(s.action_so_far),
                crate::io::fmt_float(s.monodromy.dpf_dpi),
                crate::io::fmt_float(s.monodromy.dpf_dqi),
                crate::io::fmt_float(s.monodromy.dqf_dpi),
                crate::io::fmt_float(s.monodromy.dqf_dqi),
                s.maslov_so_far
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct EndState {
    q: f64,
    p: f64,
    action: f64,
    monodromy: Monodromy,
    maslov: u32,
}

fn check_finite(time: f64, q: f64, p: f64) -> Result<(), DynamicsError> {
    if q.is_finite() && p.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::NonFiniteState { time, q, p })
    }
}

fn propagate_continuous(
    system: &SystemSpec,
    q0: f64,
    p0: f64,
    t: f64,
    dt: f64,
    mut samples: Option<&mut Vec<TrajectorySample>>,
) -> Result<EndState, DynamicsError> {
    let mut q = q0;
    let mut p = p0;
    let mut action = 0.0f64;
    let mut mono = Monodromy::identity();
    let mut maslov = MaslovCounter::new();

    let n_steps = if t == 0.0 {
        0
    } else {
        ((t / dt) - 1e-9).ceil().max(1.0) as usize
    };
    let h = if n_steps == 0 { 0.0 } else { t / n_steps as f64 };
    let m = system.mass;

    if let Some(sink) = samples.as_deref_mut() {
        sink.push(TrajectorySample {
            time: 0.0,
            q,
            p,
            action_so_far: 0.0,
            monodromy: mono,
            maslov_so_far: 0,
        });
    }

    let mut lagrangian = p * p / (2.0 * m) - system.potential(q);
    for step in 0..n_steps {
        let c0 = system.curvature(q);
        let p_half = p + 0.5 * h * system.force(q);
        let q_new = q + h * p_half / m;
        let c1 = system.curvature(q_new);
        let p_new = p_half + 0.5 * h * system.force(q_new);

        mono.kick(-0.5 * h * c0);
        mono.drift(h / m);
        mono.kick(-0.5 * h * c1);

        let lag_new = p_new * p_new / (2.0 * m) - system.potential(q_new);
        action += 0.5 * h * (lagrangian + lag_new);
        lagrangian = lag_new;

        q = q_new;
        p = p_new;
        let time = h * (step + 1) as f64;
        check_finite(time, q, p)?;
        maslov.update(mono.dqf_dpi);
        if let Some(sink) = samples.as_deref_mut() {
            sink.push(TrajectorySample {
                time,
                q,
                p,
                action_so_far: action,
                monodromy: mono,
                maslov_so_far: maslov.count,
            });
        }
    }

    Ok(EndState {
        q,
        p,
        action,
        monodromy: mono,
        maslov: maslov.count,
    })
}

fn propagate_kicked(
    system: &SystemSpec,
    q0: f64,
    p0: f64,
    n_kicks: u64,
    mut samples: Option<&mut Vec<TrajectorySample>>,
) -> Result<EndState, DynamicsError> {
    let kick_strength = match system.kind {
        SystemKind::KickedRotor { kick_strength } => kick_strength,
        _ => {
            return Err(DynamicsError::InvalidArgument(
                "kicked propagation requires kind = kicked_rotor".into(),
            ))
        }
    };
    let m = system.mass;
    let mut q = crate::numeric::wrap_to_tau(q0);
    let mut p = p0;
    let mut action = 0.0f64;
    let mut mono = Monodromy::identity();
    let mut maslov = MaslovCounter::new();

    if let Some(sink) = samples.as_deref_mut() {
        sink.push(TrajectorySample {
            time: 0.0,
            q,
            p,
            action_so_far: 0.0,
            monodromy: mono,
            maslov_so_far: 0,
        });
    }

    for kick in 0..n_kicks {
        let p_new = p + kick_strength * q.sin();
        let dq = p_new / m; // unwrapped displacement over one unit period
        let q_new = crate::numeric::wrap_to_tau(q + dq);

        // Generating-function action for one kick-plus-drift step.
        action += 0.5 * m * dq * dq - kick_strength * q.cos();

        mono.kick(kick_strength * q.cos());
        mono.drift(1.0 / m);

        q = q_new;
        p = p_new;
        let time = (kick + 1) as f64;
        check_finite(time, q, p)?;
        maslov.update(mono.dqf_dpi);
        if let Some(sink) = samples.as_deref_mut() {
            sink.push(TrajectorySample {
                time,
                q,
                p,
                action_so_far: action,
                monodromy: mono,
                maslov_so_far: maslov.count,
            });
        }
    }

    Ok(EndState {
        q,
        p,
        action,
        monodromy: mono,
        maslov: maslov.count,
    })
}

/// Default step count used when the caller does not pick a dt.
pub const DEFAULT_STEPS: f64 = 1.0e4;

/// Default integration step for a run of duration `t`.
pub fn default_dt(t: f64) -> f64 {
    t / DEFAULT_STEPS
}

/// Integrate a single trajectory, recording every step.
///
/// For the kicked rotor `t` is interpreted as an integer kick count and `dt`
/// is ignored.
pub fn integrate_trajectory(
    system: &SystemSpec,
    q0: f64,
    p0: f64,
    t: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    if t < 0.0 {
        return Err(DynamicsError::InvalidArgument(format!(
            "t must be nonnegative, got {t}"
        )));
    }
    let mut samples = Vec::new();
    let end = if system.is_kicked() {
        let n = t.round();
        if (t - n).abs() > 1e-9 {
            return Err(DynamicsError::InvalidArgument(format!(
                "kicked maps need an integer kick count, got t = {t}"
            )));
        }
        propagate_kicked(system, q0, p0, n as u64, Some(&mut samples))?
    } else {
        if !(dt > 0.0) {
            return Err(DynamicsError::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        propagate_continuous(system, q0, p0, t, dt, Some(&mut samples))?
    };
    Ok(Trajectory {
        q_i: if system.is_kicked() {
            crate::numeric::wrap_to_tau(q0)
        } else {
            q0
        },
        p_i: p0,
        q_f: end.q,
        p_f: end.p,
        t,
        n_kicks: system.is_kicked().then(|| t.round() as u64),
        action: end.action,
        maslov_index: end.maslov,
        monodromy: end.monodromy,
        hbar: system.hbar,
        mass: system.mass,
        samples,
    })
}

/// Integrate without recording samples; endpoints, action, monodromy, and
/// Maslov data are still exact. The fast path for root refinement loops.
pub fn integrate_endpoint(
    system: &SystemSpec,
    q0: f64,
    p0: f64,
    t: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    let end = if system.is_kicked() {
        let n = t.round();
        if (t - n).abs() > 1e-9 {
            return Err(DynamicsError::InvalidArgument(format!(
                "kicked maps need an integer kick count, got t = {t}"
            )));
        }
        propagate_kicked(system, q0, p0, n as u64, None)?
    } else {
        if !(dt > 0.0) {
            return Err(DynamicsError::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        propagate_continuous(system, q0, p0, t, dt, None)?
    };
    Ok(Trajectory {
        q_i: if system.is_kicked() {
            crate::numeric::wrap_to_tau(q0)
        } else {
            q0
        },
        p_i: p0,
        q_f: end.q,
        p_f: end.p,
        t,
        n_kicks: system.is_kicked().then(|| t.round() as u64),
        action: end.action,
        maslov_index: end.maslov,
        monodromy: end.monodromy,
        hbar: system.hbar,
        mass: system.mass,
        samples: Vec::new(),
    })
}

/// Accumulated Lagrangian action of an integrated trajectory.
pub fn classical_action(traj: &Trajectory) -> f64 {
    traj.action
}

/// Maslov index and VVG prefactor magnitude `sqrt(1 / (2 pi hbar |m21|))`.
///
/// Fails with `CausticAtEndpoint` when the endpoint sits within 1e-12 of a
/// focal point.
pub fn maslov_and_prefactor(traj: &Trajectory) -> Result<(u32, f64), DynamicsError> {
    let m21_abs = traj.monodromy.dqf_dpi.abs();
    if m21_abs < 1e-12 {
        return Err(DynamicsError::CausticAtEndpoint { m21_abs });
    }
    let prefactor = (1.0 / (2.0 * std::f64::consts::PI * traj.hbar * m21_abs)).sqrt();
    Ok((traj.maslov_index, prefactor))
}

/// Result of a boundary-value trajectory census.
#[derive(Debug, Clone)]
pub struct BoundarySearch {
    pub trajectories: Vec<Trajectory>,
    /// Set when two distinct seed brackets refined to the same root, which
    /// means adjacent seeds straddled more than one root.
    pub window_too_coarse: bool,
}

/// Find all isolated initial momenta whose orbit reaches `q_f` at time `t`,
/// using the default integration step.
pub fn find_boundary_trajectories(
    system: &SystemSpec,
    q_i: f64,
    q_f: f64,
    t: f64,
    p_window: (f64, f64),
    n_seeds: usize,
) -> Result<BoundarySearch, DynamicsError> {
    find_boundary_trajectories_with_dt(system, q_i, q_f, t, p_window, n_seeds, default_dt(t))
}

/// Same census with an explicit dt (ignored for kicked maps).
pub fn find_boundary_trajectories_with_dt(
    system: &SystemSpec,
    q_i: f64,
    q_f: f64,
    t: f64,
    p_window: (f64, f64),
    n_seeds: usize,
    dt: f64,
) -> Result<BoundarySearch, DynamicsError> {
    boundary_search_core(system, q_i, q_f, t, p_window, n_seeds, dt, true)
}

/// Endpoint-only census: returned trajectories carry no samples. Used by the
/// chaos-tunneling aggregation where recording every orbit would be wasteful.
pub fn find_boundary_trajectories_light(
    system: &SystemSpec,
    q_i: f64,
    q_f: f64,
    t: f64,
    p_window: (f64, f64),
    n_seeds: usize,
    dt: f64,
) -> Result<BoundarySearch, DynamicsError> {
    boundary_search_core(system, q_i, q_f, t, p_window, n_seeds, dt, false)
}

#[allow(clippy::too_many_arguments)]
fn boundary_search_core(
    system: &SystemSpec,
    q_i: f64,
    q_f: f64,
    t: f64,
    p_window: (f64, f64),
    n_seeds: usize,
    dt: f64,
    record_samples: bool,
) -> Result<BoundarySearch, DynamicsError> {
    if n_seeds < 2 {
        return Err(DynamicsError::InvalidArgument(format!(
            "n_seeds must be at least 2, got {n_seeds}"
        )));
    }
    let (lo, hi) = p_window;
    if !(hi > lo) {
        return Err(DynamicsError::InvalidArgument(format!(
            "p_window must be non-degenerate, got ({lo}, {hi})"
        )));
    }
    let kicked = system.is_kicked();
    let n_kicks = if kicked {
        let n = t.round();
        if (t - n).abs() > 1e-9 || n < 1.0 {
            return Err(DynamicsError::InvalidArgument(format!(
                "kicked census needs an integer kick count >= 1, got t = {t}"
            )));
        }
        n as u64
    } else {
        if !(t > 0.0) {
            return Err(DynamicsError::InvalidArgument(format!(
                "t must be positive for a boundary search, got {t}"
            )));
        }
        if !(dt > 0.0) {
            return Err(DynamicsError::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        0
    };

    let endpoint = |p0: f64| -> Option<EndState> {
        let res = if kicked {
            propagate_kicked(system, q_i, p0, n_kicks, None)
        } else {
            propagate_continuous(system, q_i, p0, t, dt, None)
        };
        res.ok()
    };
    let mismatch_of = |end: &EndState| -> f64 {
        if kicked {
            wrap_to_pi(end.q - q_f)
        } else {
            end.q - q_f
        }
    };

    let step = (hi - lo) / (n_seeds - 1) as f64;
    let seeds: Vec<f64> = (0..n_seeds).map(|k| lo + step * k as f64).collect();
    let mismatches: Vec<Option<f64>> = seeds
        .par_iter()
        .map(|&p0| endpoint(p0).map(|e| mismatch_of(&e)))
        .collect();

    // Bracket sign changes between adjacent finite seeds.
    let mut brackets: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut exact: Vec<f64> = Vec::new();
    for k in 0..n_seeds - 1 {
        let (Some(fa), Some(fb)) = (mismatches[k], mismatches[k + 1]) else {
            continue;
        };
        if fa == 0.0 {
            exact.push(seeds[k]);
        } else if fa * fb < 0.0 {
            brackets.push((seeds[k], seeds[k + 1], fa, fb));
        }
    }
    if let Some(Some(f_last)) = mismatches.last() {
        if *f_last == 0.0 {
            exact.push(*seeds.last().unwrap());
        }
    }

    let refine = |(mut a, mut b, mut fa, _fb): (f64, f64, f64, f64)| -> Option<(f64, EndState)> {
        let mut best = 0.5 * (a + b);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            best = mid;
            let end = endpoint(mid)?;
            let fm = mismatch_of(&end);
            if fm == 0.0 {
                break;
            }
            if fm * fa > 0.0 {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
            if (b - a).abs() < 1e-15 * best.abs().max(1.0) {
                break;
            }
        }
        let end = endpoint(best)?;
        let f = mismatch_of(&end);
        // In strongly chaotic regimes the mismatch floor is set by the
        // monodromy amplifying the last ulp of p; accept roots down to that
        // floor, which also rejects false brackets from the 2pi wrap.
        let floor = 8.0 * f64::EPSILON * end.monodromy.dqf_dpi.abs() * best.abs().max(1.0);
        if f.abs() <= 1e-10_f64.max(floor) {
            Some((best, end))
        } else {
            None
        }
    };

    let refined: Vec<Option<(f64, EndState)>> = brackets
        .par_iter()
        .map(|&br| refine(br))
        .collect();

    let mut roots: Vec<f64> = Vec::new();
    let mut window_too_coarse = false;
    for p in exact.iter().copied().chain(
        refined
            .iter()
            .flatten()
            .map(|(p, _)| *p),
    ) {
        if roots.iter().any(|r| (r - p).abs() <= 1e-8) {
            window_too_coarse = true;
        } else {
            roots.push(p);
        }
    }

    let trajectories: Vec<Trajectory> = roots
        .par_iter()
        .map(|&p0| {
            if record_samples {
                integrate_trajectory(system, q_i, p0, t, dt)
            } else {
                let end = if kicked {
                    propagate_kicked(system, q_i, p0, n_kicks, None)?
                } else {
                    propagate_continuous(system, q_i, p0, t, dt, None)?
                };
                Ok(Trajectory {
                    q_i: if kicked {
                        crate::numeric::wrap_to_tau(q_i)
                    } else {
                        q_i
                    },
                    p_i: p0,
                    q_f: end.q,
                    p_f: end.p,
                    t,
                    n_kicks: kicked.then_some(n_kicks),
                    action: end.action,
                    maslov_index: end.maslov,
                    monodromy: end.monodromy,
                    hbar: system.hbar,
                    mass: system.mass,
                    samples: Vec::new(),
                })
            }
        })
        .collect::<Result<_, _>>()?;

    Ok(BoundarySearch {
        trajectories,
        window_too_coarse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn free() -> SystemSpec {
        SystemSpec::free_particle(1.0).unwrap()
    }

    fn harmonic() -> SystemSpec {
        SystemSpec::harmonic(1.0, 1.0).unwrap()
    }

    #[test]
    fn free_particle_closed_form() {
        let traj = integrate_trajectory(&free(), 0.0, 1.0, 2.0, default_dt(2.0)).unwrap();
        assert_abs_diff_eq!(traj.q_f, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(classical_action(&traj), 1.0, epsilon = 1e-12);
        let (nu, _) = maslov_and_prefactor(&traj).unwrap();
        assert_eq!(nu, 0);
        assert_abs_diff_eq!(traj.monodromy.dqf_dpi, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_quarter_period() {
        let t = PI / 2.0;
        let traj = integrate_trajectory(&harmonic(), 1.0, 0.0, t, default_dt(t)).unwrap();
        assert_abs_diff_eq!(traj.q_f, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(traj.p_f, -1.0, epsilon = 1e-8);
    }

    #[test]
    fn harmonic_action_closed_form() {
        // S = (m w / 2 sin(wt)) ((qi^2 + qf^2) cos(wt) - 2 qi qf); at t = pi/2
        // with qi = qf = 1 this is -1.
        let t = PI / 2.0;
        let search =
            find_boundary_trajectories(&harmonic(), 1.0, 1.0, t, (-3.0, 3.0), 64).unwrap();
        assert_eq!(search.trajectories.len(), 1);
        assert_abs_diff_eq!(classical_action(&search.trajectories[0]), -1.0, epsilon = 1e-7);
    }

    #[test]
    fn harmonic_maslov_counts() {
        let traj =
            integrate_trajectory(&harmonic(), 0.0, 1.0, PI / 2.0, default_dt(PI / 2.0)).unwrap();
        assert_eq!(traj.maslov_index, 0);
        assert_abs_diff_eq!(traj.monodromy.dqf_dpi, 1.0, epsilon = 1e-7);

        let t = 3.0 * PI / 2.0;
        let traj = integrate_trajectory(&harmonic(), 0.0, 1.0, t, default_dt(t)).unwrap();
        assert_eq!(traj.maslov_index, 1);
    }

    #[test]
    fn harmonic_caustic_detected() {
        // The focal point at t = pi needs a fine step before the integrated
        // m21 drops below the 1e-12 caustic threshold.
        let traj = integrate_trajectory(&harmonic(), 0.0, 1.0, PI, PI / 8.0e6).unwrap();
        match maslov_and_prefactor(&traj) {
            Err(DynamicsError::CausticAtEndpoint { .. }) => {}
            other => panic!("expected caustic, got {other:?}"),
        }
    }

    #[test]
    fn kicked_rotor_positive_lyapunov() {
        let sys = SystemSpec::kicked_rotor(1.0, 7.0).unwrap();
        let a = integrate_trajectory(&sys, 1.0, 1.0, 50.0, 0.0).unwrap();
        let b = integrate_trajectory(&sys, 1.0 + 1e-9, 1.0, 50.0, 0.0).unwrap();
        let sep = crate::numeric::wrap_to_pi(a.q_f - b.q_f).abs() + (a.p_f - b.p_f).abs();
        assert!(
            sep >= 1e-3 * 1e-9 * 1e3,
            "neighboring orbits failed to separate: {sep:.3e}"
        );
        // And the monodromy reflects the exponential growth.
        assert!(a.monodromy.dqf_dpi.abs() > 1e3);
    }

    #[test]
    fn free_boundary_unique_root() {
        let search = find_boundary_trajectories(&free(), 0.0, 2.0, 2.0, (-4.0, 4.0), 32).unwrap();
        assert_eq!(search.trajectories.len(), 1);
        assert!(!search.window_too_coarse);
        assert_abs_diff_eq!(search.trajectories[0].p_i, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn harmonic_boundary_unique_root() {
        let t = PI / 2.0;
        let search =
            find_boundary_trajectories(&harmonic(), 0.0, 1.0, t, (-4.0, 4.0), 32).unwrap();
        assert_eq!(search.trajectories.len(), 1);
        assert_abs_diff_eq!(search.trajectories[0].p_i, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn double_well_two_branches() {
        let sys = SystemSpec::double_well(1.0, 1.0, 2.0).unwrap();
        let t = 1.6;
        let search = find_boundary_trajectories_with_dt(
            &sys,
            -1.0,
            1.0,
            t,
            (0.2, 4.0),
            400,
            t / 4000.0,
        )
        .unwrap();
        assert!(
            search.trajectories.len() >= 2,
            "expected at least two branches, found {}",
            search.trajectories.len()
        );
        let mut actions: Vec<f64> = search.trajectories.iter().map(|tr| tr.action).collect();
        actions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            actions.windows(2).all(|w| (w[1] - w[0]).abs() >= 1e-3),
            "branch actions too close: {actions:?}"
        );

        // Dense-scan census oracle finds the same roots.
        let census = find_boundary_trajectories_with_dt(
            &sys,
            -1.0,
            1.0,
            t,
            (0.2, 4.0),
            100_000,
            t / 4000.0,
        )
        .unwrap();
        assert_eq!(census.trajectories.len(), search.trajectories.len());
        for (a, b) in census.trajectories.iter().zip(&search.trajectories) {
            assert_abs_diff_eq!(a.p_i, b.p_i, epsilon = 1e-7);
        }
    }

    #[test]
    fn symplectic_and_energy_invariants() {
        let systems = [
            free(),
            harmonic(),
            SystemSpec::double_well(1.0, 1.0, 2.0).unwrap(),
        ];
        for sys in &systems {
            let dt = 7.0 / 2.0e4;
            let traj = integrate_trajectory(sys, 0.3, 0.9, 7.0, dt).unwrap();
            assert_abs_diff_eq!(traj.monodromy.det(), 1.0, epsilon = 1e-8);
            let e0 = sys.energy(0.3, 0.9);
            let ef = sys.energy(traj.q_f, traj.p_f);
            // Verlet keeps a bounded O(dt^2) energy oscillation.
            assert!((ef - e0).abs() < 10.0 * dt * dt * e0.abs().max(1.0));
        }
        // Chaotic map: entries grow like 3.5^n, so det - 1 is resolvable in
        // doubles only for modest kick counts.
        let kicked = SystemSpec::kicked_rotor(1.0, 7.0).unwrap();
        let traj = integrate_trajectory(&kicked, 1.0, 1.0, 5.0, 0.0).unwrap();
        assert_abs_diff_eq!(traj.monodromy.det(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn time_reversal() {
        let sys = SystemSpec::double_well(1.0, 1.0, 2.0).unwrap();
        let t = 3.0;
        let fwd = integrate_trajectory(&sys, -0.7, 1.4, t, t / 2.0e4).unwrap();
        let bwd = integrate_trajectory(&sys, fwd.q_f, -fwd.p_f, t, t / 2.0e4).unwrap();
        assert_abs_diff_eq!(bwd.q_f, -0.7, epsilon = 1e-7);
        assert_abs_diff_eq!(bwd.p_f, -1.4, epsilon = 1e-7);
    }

    #[test]
    fn action_additivity() {
        let sys = harmonic();
        let (t1, t2) = (0.8, 1.3);
        let dt = 1e-4;
        let full = integrate_trajectory(&sys, 0.5, 0.2, t1 + t2, dt).unwrap();
        let first = integrate_trajectory(&sys, 0.5, 0.2, t1, dt).unwrap();
        let second = integrate_trajectory(&sys, first.q_f, first.p_f, t2, dt).unwrap();
        assert_abs_diff_eq!(
            full.action,
            first.action + second.action,
            epsilon = 1e-9
        );
    }

    #[test]
    fn final_sample_matches_endpoint() {
        let traj = integrate_trajectory(&harmonic(), 0.2, 1.1, 2.0, 1e-3).unwrap();
        let last = traj.samples.last().unwrap();
        assert_eq!(last.q, traj.q_f);
        assert_eq!(last.p, traj.p_f);
        assert_eq!(last.maslov_so_far, traj.maslov_index);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(SystemSpec::free_particle(-1.0).is_err());
        assert!(SystemSpec::harmonic(1.0, 0.0).is_err());
        assert!(SystemSpec::double_well(1.0, -1.0, 2.0).is_err());
        assert!(free().with_hbar(0.0).is_err());
        assert!(find_boundary_trajectories(&free(), 0.0, 1.0, 1.0, (1.0, 1.0), 8).is_err());
        assert!(find_boundary_trajectories(&free(), 0.0, 1.0, 1.0, (0.0, 2.0), 1).is_err());
    }

    #[test]
    fn diverging_orbit_reports_nonfinite() {
        // Inverted quartic wall reached with a huge step makes the state blow up.
        let sys = SystemSpec::double_well(1.0, 1.0, 2.0).unwrap();
        let res = integrate_trajectory(&sys, 40.0, 500.0, 100.0, 10.0);
        assert!(matches!(res, Err(DynamicsError::NonFiniteState { .. })));
    }
}
