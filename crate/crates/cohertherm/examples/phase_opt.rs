//! Purifies a random mixed state and maximizes a transition probability over
//! the branch phases, comparing all three optimizers.

use cohertherm::purification::{self, MixedState, OptimizeMethod, UnitaryMatrix};
use cohertherm::rng::SplitMix64;
use nalgebra::DVector;
use num_complex::Complex64;

fn main() {
    let mut rng = SplitMix64::new(42);
    let components = 3;
    let mut p: Vec<f64> = (0..components).map(|_| rng.uniform(0.2, 1.0)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);

    let mixed = MixedState::new(p.clone(), components).unwrap();
    let state = purification::purify(&mixed, components).unwrap();
    let u = UnitaryMatrix::random(state.joint_dim(), &mut rng);
    let target = {
        let mut v = DVector::from_fn(state.joint_dim(), |_, _| {
            Complex64::new(rng.next_normal(), rng.next_normal())
        });
        let n = v.norm();
        v.iter_mut().for_each(|x| *x /= n);
        v
    };

    let baseline = purification::transition_probability(&state, &u, &target).unwrap();
    println!("probabilities: {p:?}");
    println!("baseline (all phases zero): {baseline:.9}");
    for method in [OptimizeMethod::Analytic, OptimizeMethod::Gradient, OptimizeMethod::Grid] {
        let opt = purification::optimize_phases(&state, &u, &target, method).unwrap();
        println!("{method:?}: P = {:.9}, phases = {:?}", opt.probability, opt.phases);
    }
}
