//! Simulation determinism, error bookkeeping and the nominal envelope.

use dse_core::design::{design, DesignConfig, DesignReport, GeneratorChoice, InitPolicy, NetworkModel};
use dse_core::simulation::{csv_header, max_error_metric, simulate, DisturbanceMode, InputChange, SimulationConfig, SimulationError};
use dse_core::powergrid::{build_scenario, Scenario};

fn example(name: &str) -> (NetworkModel, DesignReport) {
    let model = build_scenario(&Scenario::builtin(name).unwrap()).unwrap();
    let report = design(&model, &DesignConfig::default()).unwrap();
    (model, report)
}

#[test]
fn same_seed_gives_identical_csv() {
    let (model, report) = example("example3");
    let mut cfg = SimulationConfig::new(30, 11);
    cfg.disturbance = DisturbanceMode::Uniform;
    cfg.init.generator = GeneratorChoice::Random;
    let a = simulate(&model, &report, &cfg).unwrap().to_csv();
    let b = simulate(&model, &report, &cfg).unwrap().to_csv();
    assert_eq!(a, b);
    cfg.seed = 12;
    assert_ne!(a, simulate(&model, &report, &cfg).unwrap().to_csv());
    let header = a.lines().next().unwrap();
    assert_eq!(header, csv_header(&[4, 4, 4, 4]));
    assert_eq!(header.split(',').count(), 1 + 4 * (3 * 4 + 3));
    assert_eq!(a.lines().count(), 32);
}

#[test]
fn errors_are_state_minus_estimate() {
    let (model, report) = example("example3");
    let mut cfg = SimulationConfig::new(20, 3);
    cfg.disturbance = DisturbanceMode::Uniform;
    cfg.initial_states = Some(vec![vec![0.01, 0.0, 0.02, -0.01]; 4]);
    cfg.inputs = vec![vec![InputChange { start: 5, value: vec![0.01, -0.02] }]; 4];
    let trace = simulate(&model, &report, &cfg).unwrap();
    for r in &trace.records {
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(r.errors[i][k], r.states[i][k] - r.estimates[i][k]);
            }
        }
    }
    assert_eq!(trace.violations(), 0);
    // the load step moves the plant
    assert_ne!(trace.records[20].states[0], trace.records[5].states[0]);
}

#[test]
fn nominal_errors_stay_inside_the_theta_envelope() {
    let (model, report) = example("example2");
    let (ts, _) = report.require_success().unwrap();
    let rho = ts.spectral_radius;
    let mut cfg = SimulationConfig::new(40, 0);
    cfg.init = InitPolicy { fraction: 1.0, generator: GeneratorChoice::Index(5) };
    let trace = simulate(&model, &report, &cfg).unwrap();
    let radius: Vec<f64> = report
        .subsystems
        .iter()
        .map(|d| d.contractive.set.generators().map(|v| v.amax()).fold(0.0, f64::max))
        .collect();
    let theta0 = trace.records[0].theta.iter().copied().fold(0.0, f64::max);
    for r in &trace.records {
        for (i, rad) in radius.iter().enumerate() {
            let e = r.errors[i].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(e <= r.theta[i] * rad + 1e-12, "t={} i={i}", r.t);
        }
        let th = r.theta.iter().copied().fold(0.0, f64::max);
        assert!(th <= theta0 * rho.powi(r.t as i32) * (1.0 + 1e-12), "t={}", r.t);
    }
    let metric = max_error_metric(&trace).unwrap();
    assert_eq!(metric.len(), 4);
    assert!(metric.iter().all(|s| s.len() == 41 && s[40] <= 1e-8));
}

#[test]
fn invalid_configurations_are_rejected() {
    let (model, report) = example("example2");
    assert!(matches!(
        simulate(&model, &report, &SimulationConfig::new(0, 0)),
        Err(SimulationError::ZeroSteps)
    ));
    let mut cfg = SimulationConfig::new(3, 0);
    cfg.initial_states = Some(vec![vec![0.0; 3]; 4]);
    assert!(matches!(simulate(&model, &report, &cfg), Err(SimulationError::DimensionMismatch(_))));
    let mut cfg = SimulationConfig::new(3, 0);
    cfg.init.fraction = 1.5;
    assert!(matches!(simulate(&model, &report, &cfg), Err(SimulationError::Design(_))));
    let (m1, r1) = example("example1");
    assert!(matches!(simulate(&m1, &r1, &SimulationConfig::new(3, 0)), Err(SimulationError::Design(_))));
}
