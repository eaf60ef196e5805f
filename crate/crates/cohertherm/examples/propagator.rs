//! Builds the semiclassical propagator for a harmonic oscillator and compares
//! it against the closed-form kernel.

use cohertherm::dynamics::{self, SystemSpec};
use cohertherm::semiclassics::{self, harmonic_kernel};

fn main() {
    let sys = SystemSpec::harmonic(1.0, 1.0).unwrap();
    let (q_i, q_f, t) = (-0.5, 1.2, 0.9);
    let search = dynamics::find_boundary_trajectories_with_dt(
        &sys,
        q_i,
        q_f,
        t,
        (-3.0, 6.0),
        200,
        t / 2.0e5,
    )
    .unwrap();
    let result = semiclassics::vvg_amplitude(&search.trajectories, sys.hbar).unwrap();
    let exact = harmonic_kernel(sys.mass, 1.0, sys.hbar, q_i, q_f, t);

    let (p_total, diag, cross) = semiclassics::transition_probability(&result);
    println!("semiclassical amplitude: {:+.12e} {:+.12e}i", result.total_amplitude.re, result.total_amplitude.im);
    println!("closed-form kernel:      {:+.12e} {:+.12e}i", exact.re, exact.im);
    println!(
        "relative error: {:.3e}",
        (result.total_amplitude - exact).norm() / exact.norm()
    );
    println!("|K|^2 = {p_total:.6e} (diagonal {diag:.6e}, interference {cross:+.6e})");
}
