//! Tabulates the classical and structured probability-ratio curves and writes
//! them as CSV to stdout.

use cohertherm::fluctuation::{RatioCurve, StructuredCoherenceModel};

fn main() {
    let model = StructuredCoherenceModel::new(2.0, -1.5, 0.5).unwrap();
    let curve = RatioCurve::from_model(&model, (-4.5, 1.5), 61, 1.0).unwrap();
    let mut out = Vec::new();
    curve.write_csv(&mut out).unwrap();
    print!("{}", String::from_utf8(out).unwrap());
}
