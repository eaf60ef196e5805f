//! Scenario execution: one named experiment per run, CSV artifacts plus a
//! manifest with checksums. Identical config and seed produce byte-identical
//! CSVs; wall time lives only in the manifest.

use crate::config::{Scenario, ScenarioConfig};
use crate::density::DensityMatrix;
use crate::dynamics::{self, DynamicsError};
use crate::fluctuation::{FluctuationError, RatioCurve, StructuredCoherenceModel};
use crate::opensystem::{self, LindbladModel, OpenSystemError, ResonantCoupling};
use crate::oracle::OracleError;
use crate::purification::{
    self, MixedState, OptimizeMethod, PurificationError, UnitaryMatrix,
};
use crate::rng::SplitMix64;
use crate::semiclassics::{self, SemiclassicsError};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("semiclassics: {0}")]
    Semiclassics(#[from] SemiclassicsError),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("fluctuation: {0}")]
    Fluctuation(#[from] FluctuationError),
    #[error("purification: {0}")]
    Purification(#[from] PurificationError),
    #[error("opensystem: {0}")]
    OpenSystem(#[from] OpenSystemError),
    #[error("parameter `{key}`: {message}")]
    InvalidParameter { key: String, message: String },
}

/// Completed run: artifact names with their SHA-256 checksums.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub artifacts: Vec<(String, String)>,
    pub wall_seconds: f64,
}

fn param(config: &ScenarioConfig, key: &str) -> f64 {
    // Defaults tables are complete, so a missing key is a programming error.
    *config
        .params
        .get(key)
        .unwrap_or_else(|| panic!("missing scenario parameter `{key}`"))
}

fn param_usize(config: &ScenarioConfig, key: &str) -> Result<usize, ScenarioError> {
    let v = param(config, key);
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(ScenarioError::InvalidParameter {
            key: key.to_string(),
            message: format!("`{v}` is not a nonnegative integer"),
        });
    }
    Ok(v as usize)
}

/// Execute the configured scenario, writing its CSVs and `manifest.txt` into
/// `output_dir`.
pub fn run(config: &ScenarioConfig, config_text: &str) -> Result<RunReport, ScenarioError> {
    let started = Instant::now();
    std::fs::create_dir_all(&config.output_dir)?;

    let artifacts = match config.scenario {
        Scenario::Trajectories => run_trajectories(config)?,
        Scenario::Propagator => run_propagator(config)?,
        Scenario::ChaosTunneling => run_chaos_tunneling(config)?,
        Scenario::FluctuationCurve => run_fluctuation_curve(config)?,
        Scenario::PhaseOpt => run_phase_opt(config)?,
        Scenario::Lindblad => run_lindblad(config)?,
    };

    let wall_seconds = started.elapsed().as_secs_f64();
    write_manifest(config, config_text, &artifacts, wall_seconds)?;
    Ok(RunReport {
        artifacts,
        wall_seconds,
    })
}

fn emit(
    dir: &Path,
    name: &str,
    content: &[u8],
    artifacts: &mut Vec<(String, String)>,
) -> Result<(), ScenarioError> {
    let checksum = crate::io::write_artifact(&dir.join(name), content)?;
    artifacts.push((name.to_string(), checksum));
    Ok(())
}

fn write_manifest(
    config: &ScenarioConfig,
    config_text: &str,
    artifacts: &[(String, String)],
    wall_seconds: f64,
) -> Result<(), ScenarioError> {
    let mut text = String::new();
    text.push_str(&format!("scenario = {}\n", config.scenario));
    text.push_str(&format!(
        "config_sha256 = {}\n",
        crate::io::sha256_hex(config_text.as_bytes())
    ));
    text.push_str(&format!("seed = {}\n", config.seed));
    text.push_str(&format!("wall_time_seconds = {wall_seconds:.3}\n"));
    for (name, checksum) in artifacts {
        text.push_str(&format!("artifact = {name} {checksum}\n"));
    }
    std::fs::write(config.output_dir.join("manifest.txt"), text)?;
    Ok(())
}

fn census(
    config: &ScenarioConfig,
) -> Result<dynamics::BoundarySearch, ScenarioError> {
    let q_i = param(config, "q_i");
    let q_f = param(config, "q_f");
    let p_window = (param(config, "p_min"), param(config, "p_max"));
    let n_seeds = param_usize(config, "n_seeds")?;
    let t = if config.system.is_kicked() {
        param_usize(config, "n_kicks")? as f64
    } else {
        param(config, "t")
    };
    Ok(dynamics::find_boundary_trajectories(
        &config.system,
        q_i,
        q_f,
        t,
        p_window,
        n_seeds,
    )?)
}

fn run_trajectories(config: &ScenarioConfig) -> Result<Vec<(String, String)>, ScenarioError> {
    let search = census(config)?;
    let mut artifacts = Vec::new();
    let mut summary = String::from("branch,p_i,p_f,action,maslov,m21\n");
    for (k, traj) in search.trajectories.iter().enumerate() {
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k,
            crate::io::fmt_float(traj.p_i),
            crate::io::fmt_float(traj.p_f),
            crate::io::fmt_float(traj.action),
            traj.maslov_index,
            crate::io::fmt_float(traj.monodromy.dqf_dpi)
        ));
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        emit(
            &config.output_dir,
            &format!("trajectory_{k}.csv"),
            &buf,
            &mut artifacts,
        )?;
    }
    emit(
        &config.output_dir,
        "branches.csv",
        summary.as_bytes(),
        &mut artifacts,
    )?;
    Ok(artifacts)
}

fn run_propagator(config: &ScenarioConfig) -> Result<Vec<(String, String)>, ScenarioError> {
    let search = census(config)?;
    let result = semiclassics::vvg_amplitude(&search.trajectories, config.system.hbar)?;
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    let mut artifacts = Vec::new();
    emit(&config.output_dir, "propagator.csv", &buf, &mut artifacts)?;
    Ok(artifacts)
}

fn run_chaos_tunneling(config: &ScenarioConfig) -> Result<Vec<(String, String)>, ScenarioError> {
    let region_a = (param(config, "region_a_lo"), param(config, "region_a_hi"));
    let region_b = (param(config, "region_b_lo"), param(config, "region_b_hi"));
    let n_kicks = param_usize(config, "n_kicks")? as u64;
    let n_seeds = param_usize(config, "n_seeds")?;
    let p_window = (param(config, "p_min"), param(config, "p_max"));
    let estimate = semiclassics::chaos_tunneling_probability_with_window(
        &config.system,
        region_a,
        region_b,
        n_kicks,
        n_seeds,
        p_window,
    )?;
    let mut text = String::from("pair,p_total\n");
    for (k, v) in estimate.pair_values.iter().enumerate() {
        text.push_str(&format!("{k},{}\n", crate::io::fmt_float(*v)));
    }
    text.push_str(&format!(
        "MEAN,{}\n",
        crate::io::fmt_float(estimate.probability)
    ));
    let mut artifacts = Vec::new();
    emit(
        &config.output_dir,
        "tunneling.csv",
        text.as_bytes(),
        &mut artifacts,
    )?;
    Ok(artifacts)
}

fn run_fluctuation_curve(config: &ScenarioConfig) -> Result<Vec<(String, String)>, ScenarioError> {
    let model = StructuredCoherenceModel::new(
        param(config, "c"),
        param(config, "delta_s0"),
        param(config, "sigma"),
    )?;
    let n_points = param_usize(config, "n_points")?;
    let curve = RatioCurve::from_model(
        &model,
        (param(config, "range_min"), param(config, "range_max")),
        n_points,
        config.system.k_b,
    )?;
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    let mut artifacts = Vec::new();
    emit(&config.output_dir, "ratio_curve.csv", &buf, &mut artifacts)?;
    Ok(artifacts)
}

fn run_phase_opt(config: &ScenarioConfig) -> Result<Vec<(String, String)>, ScenarioError> {
    let components = param_usize(config, "components")?;
    if components == 0 {
        return Err(ScenarioError::InvalidParameter {
            key: "components".to_string(),
            message: "must be at least 1".to_string(),
        });
    }
    let mut rng = SplitMix64::new(config.seed);
    let mut probabilities: Vec<f64> = (0..components).map(|_| rng.uniform(0.2, 1.0)).collect();
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);

    let mixed = MixedState::new(probabilities, components)?;
    let state = purification::purify(&mixed, components)?;
    let joint_dim = state.joint_dim();
    let u = UnitaryMatrix::random(joint_dim, &mut rng);
    let target = {
        let mut v = DVector::from_fn(joint_dim, |_, _| {
            Complex64::new(rng.next_normal(), rng.next_normal())
        });
        let n = v.norm();
        v.iter_mut().for_each(|x| *x /= n);
        v
    };
    let optimum = purification::optimize_phases(&state, &u, &target, OptimizeMethod::Analytic)?;
    let mut buf = Vec::new();
    purification::write_report_csv(&optimum, &state.probabilities, &mut buf)?;
    let mut artifacts = Vec::new();
    emit(&config.output_dir, "phase_opt.csv", &buf, &mut artifacts)?;
    Ok(artifacts)
}

fn run_lindblad(config: &ScenarioConfig) -> Result<Vec<(String, String)>, ScenarioError> {
    let preset = param_usize(config, "preset")?;
    let gamma = param(config, "gamma");
    let t = param(config, "t");
    let dt = param(config, "dt");
    let hbar = config.system.hbar;

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
    let plus = {
        let v = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        DensityMatrix::from_pure(&v).expect("|+> is a state")
    };

    let (model, rho) = match preset {
        0 => {
            // Qubit pure dephasing from |+>.
            let model = LindbladModel::new(DMatrix::zeros(2, 2), vec![sigma_z], vec![gamma], hbar)?;
            (model, plus)
        }
        1 => {
            // Qubit amplitude damping from the excited state.
            let sigma_minus = DMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(1.0, 0.0),
                    Complex64::new(0.0, 0.0),
                ],
            );
            let model = LindbladModel::new(
                DMatrix::zeros(2, 2),
                vec![sigma_minus],
                vec![gamma],
                hbar,
            )?;
            let rho = DensityMatrix::from_probabilities(&[1.0, 0.0])
                .expect("basis state is a state");
            (model, rho)
        }
        2 => {
            // Resonant two-site pair with site-local dephasing on site 0;
            // site 1 is the low-energy target.
            let j = param(config, "coupling_j");
            let mut couplings = DMatrix::<f64>::zeros(2, 2);
            couplings[(0, 1)] = j;
            couplings[(1, 0)] = j;
            let mut h = opensystem::build_resonant_hamiltonian(&ResonantCoupling {
                site_count: 2,
                couplings,
            })?;
            h[(0, 0)] += Complex64::new(0.5, 0.0);
            h[(1, 1)] += Complex64::new(-0.5, 0.0);
            let mut l = DMatrix::<Complex64>::zeros(2, 2);
            l[(0, 0)] = Complex64::new(1.0, 0.0);
            let model = LindbladModel::new(h, vec![l], vec![gamma], hbar)?;
            let rho = DensityMatrix::from_probabilities(&[1.0, 0.0])
                .expect("basis state is a state");
            (model, rho)
        }
        other => {
            return Err(ScenarioError::InvalidParameter {
                key: "preset".to_string(),
                message: format!("`{other}` is not one of 0 (dephasing), 1 (damping), 2 (resonant)"),
            })
        }
    };

    let snapshots = opensystem::evolve_lindblad(&rho, &model, t, dt)?;
    let mut buf = Vec::new();
    opensystem::write_snapshots_csv(&snapshots, config.system.k_b, &mut buf)?;
    let mut artifacts = Vec::new();
    emit(&config.output_dir, "lindblad.csv", &buf, &mut artifacts)?;
    Ok(artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn run_text(text: &str, dir: &Path) -> Result<RunReport, ScenarioError> {
        let mut config = parse_config(text).expect("config parses");
        config.output_dir = dir.to_path_buf();
        run(&config, text)
    }

    #[test]
    fn fluctuation_curve_row_count_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let text = "scenario = fluctuation_curve\nseed = 7\n[params]\nn_points = 121\n";
        let report = run_text(text, dir.path()).unwrap();
        assert_eq!(report.artifacts.len(), 1);
        let csv = std::fs::read_to_string(dir.path().join("ratio_curve.csv")).unwrap();
        assert_eq!(csv.lines().count(), 122);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("artifact = ratio_curve.csv"));
        assert!(manifest.contains("seed = 7"));
    }

    #[test]
    fn phase_opt_matches_analytic_formula() {
        let dir = tempfile::tempdir().unwrap();
        let text = "scenario = phase_opt\nseed = 11\n[params]\ncomponents = 3\n";
        run_text(text, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("phase_opt.csv")).unwrap();
        let mut sqrt_sum = 0.0;
        let mut p_star = None;
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields[0] == "P_star" {
                p_star = Some(fields[1].parse::<f64>().unwrap());
            } else {
                let p: f64 = fields[1].parse().unwrap();
                let abs_m: f64 = fields[2].parse().unwrap();
                sqrt_sum += p.sqrt() * abs_m;
            }
        }
        let p_star = p_star.expect("footer present");
        assert!((p_star - sqrt_sum * sqrt_sum).abs() < 1e-8);
    }

    #[test]
    fn determinism_byte_identical_artifacts() {
        let text = "scenario = phase_opt\nseed = 99\n[params]\ncomponents = 3\n";
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run_text(text, dir_a.path()).unwrap();
        let b = run_text(text, dir_b.path()).unwrap();
        assert_eq!(a.artifacts, b.artifacts);
        let bytes_a = std::fs::read(dir_a.path().join("phase_opt.csv")).unwrap();
        let bytes_b = std::fs::read(dir_b.path().join("phase_opt.csv")).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn lindblad_presets_run() {
        for preset in 0..3 {
            let dir = tempfile::tempdir().unwrap();
            let text = format!(
                "scenario = lindblad\n[params]\npreset = {preset}\nt = 2.0\ndt = 0.02\n"
            );
            run_text(&text, dir.path()).unwrap();
            let csv = std::fs::read_to_string(dir.path().join("lindblad.csv")).unwrap();
            assert!(csv.starts_with("time,entropy,purity,pop_0,pop_1,abs_coh_max\n"));
            assert_eq!(csv.lines().count(), 102);
        }
    }

    #[test]
    fn trajectories_scenario_emits_branches() {
        let dir = tempfile::tempdir().unwrap();
        let text = "\
scenario = trajectories
[system]
kind = harmonic
omega = 1.0
[params]
q_i = 0.0
q_f = 0.7
t = 1.0
n_seeds = 400
";
        let report = run_text(text, dir.path()).unwrap();
        // One branch for the short-time harmonic boundary problem.
        assert!(report
            .artifacts
            .iter()
            .any(|(name, _)| name == "trajectory_0.csv"));
        let summary = std::fs::read_to_string(dir.path().join("branches.csv")).unwrap();
        assert!(summary.starts_with("branch,p_i,p_f,action,maslov,m21\n"));
        assert_eq!(summary.lines().count(), 2);
    }

    #[test]
    fn propagator_scenario_total_row() {
        let dir = tempfile::tempdir().unwrap();
        let text = "\
scenario = propagator
[system]
kind = free_particle
[params]
q_i = 0.0
q_f = 1.0
t = 1.0
n_seeds = 200
";
        run_text(text, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("propagator.csv")).unwrap();
        assert!(csv.lines().last().unwrap().starts_with("TOTAL,"));
    }

    #[test]
    fn invalid_preset_reported() {
        let dir = tempfile::tempdir().unwrap();
        let text = "scenario = lindblad\n[params]\npreset = 9\n";
        let err = run_text(text, dir.path()).unwrap_err();
        assert!(err.to_string().contains("preset"), "{err}");
    }
}
