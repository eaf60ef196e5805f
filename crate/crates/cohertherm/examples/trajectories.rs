//! Enumerates classical boundary trajectories in a double well and prints
//! each branch's action, Maslov index, and stability data.

use cohertherm::dynamics::{self, SystemSpec};

fn main() {
    let sys = SystemSpec::double_well(1.0, 1.0, 2.0)
        .unwrap()
        .with_hbar(0.05)
        .unwrap();
    let (q_i, q_f, t) = (-1.0, 1.0, 1.6);
    let search =
        dynamics::find_boundary_trajectories(&sys, q_i, q_f, t, (0.2, 4.0), 400).unwrap();

    println!("branches from q = {q_i} to q = {q_f} at t = {t}:");
    for (k, traj) in search.trajectories.iter().enumerate() {
        println!(
            "  branch {k}: p_i = {:+.6}, action = {:+.6}, maslov = {}, dqf_dpi = {:+.4e}",
            traj.p_i, traj.action, traj.maslov_index, traj.monodromy.dqf_dpi
        );
    }
    if search.window_too_coarse {
        println!("warning: seed spacing may have skipped branches");
    }
}
