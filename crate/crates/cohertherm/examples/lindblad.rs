//! Evolves a dephasing qubit under a Lindblad master equation and prints the
//! entropy and coherence trace.

use cohertherm::density::DensityMatrix;
use cohertherm::opensystem::{self, LindbladModel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn main() {
    let sigma_z = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ],
    );
    let plus = DensityMatrix::from_pure(&DVector::from_vec(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(1.0, 0.0),
    ]))
    .unwrap();
    let model = LindbladModel::new(DMatrix::zeros(2, 2), vec![sigma_z], vec![0.5], 1.0).unwrap();
    let snapshots = opensystem::evolve_lindblad(&plus, &model, 4.0, 0.01).unwrap();
    let entropy = opensystem::entropy_trace(&snapshots, 1.0).unwrap();

    println!("time  entropy/kB  |coherence|");
    for ((t, s), (_, rho)) in entropy.iter().zip(&snapshots).step_by(40) {
        println!("{t:5.2}  {s:10.6}  {:.6}", rho.entries()[(0, 1)].norm());
    }
    println!("(limit: entropy -> ln 2 = {:.6})", 2.0f64.ln());
}
