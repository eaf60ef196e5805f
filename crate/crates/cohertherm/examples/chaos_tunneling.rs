//! Contrasts semiclassical transport between two kicked-rotor regions in the
//! near-integrable and strongly chaotic regimes.

use cohertherm::dynamics::SystemSpec;
use cohertherm::semiclassics;
use std::f64::consts::PI;

fn main() {
    let region_a = (PI - 0.4, PI + 0.4);
    let region_b = (0.8, 1.6);
    let n_kicks = 8;
    for kick in [0.5, 7.0] {
        let sys = SystemSpec::kicked_rotor(1.0, kick)
            .unwrap()
            .with_hbar(0.05)
            .unwrap();
        let est = semiclassics::chaos_tunneling_probability_with_window(
            &sys,
            region_a,
            region_b,
            n_kicks,
            4000,
            (-0.5, 0.5),
        )
        .unwrap();
        println!(
            "K = {kick}: mean |K|^2 = {:.6e}, census empty = {}",
            est.probability, est.census_empty
        );
    }
}
