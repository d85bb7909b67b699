//! JSON document round trips.

mod common;

use dse_core::design::{design, verify_design, DesignConfig};
use dse_core::formats::{
    design_from_json, design_to_json, model_from_json, model_to_json, plugin_from_json, plugin_to_json, FormatError,
};
use dse_core::design::PlugInRequest;
use dse_core::powergrid::{build_scenario, Scenario, BUILTIN_SCENARIOS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_models_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_network(&mut rng);
        let text = model_to_json(&model);
        let back = model_from_json(&text).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(model_to_json(&back), text);
    }

    #[test]
    fn random_designs_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_network(&mut rng);
        let report = design(&model, &DesignConfig::default()).unwrap();
        let text = design_to_json(&report);
        let back = design_from_json(&text).unwrap();
        prop_assert_eq!(&back, &report);
        prop_assert_eq!(design_to_json(&back), text);
    }
}

#[test]
fn scenario_designs_round_trip_and_verify_identically() {
    for name in BUILTIN_SCENARIOS {
        let model = build_scenario(&Scenario::builtin(name).unwrap()).unwrap();
        let report = design(&model, &DesignConfig::default()).unwrap();
        let m2 = model_from_json(&model_to_json(&model)).unwrap();
        let r2 = design_from_json(&design_to_json(&report)).unwrap();
        assert_eq!(m2, model);
        assert_eq!(r2, report);
        if report.status.is_success() {
            assert_eq!(verify_design(&model, &report, 30, 2).unwrap(), verify_design(&m2, &r2, 30, 2).unwrap());
        }
    }
}

#[test]
fn plugin_requests_round_trip() {
    let model = build_scenario(&Scenario::builtin("example2").unwrap()).unwrap();
    let req = PlugInRequest {
        subsystem: model.subsystems[3].clone(),
        children: [(2, model.subsystems[2].couplings[&3].clone())].into_iter().collect(),
    };
    assert_eq!(plugin_from_json(&plugin_to_json(&req)).unwrap(), req);
}

#[test]
fn malformed_documents_are_rejected() {
    let model = build_scenario(&Scenario::builtin("example2").unwrap()).unwrap();
    let text = model_to_json(&model);
    assert!(matches!(model_from_json("not json"), Err(FormatError::Json(_))));
    assert!(matches!(model_from_json("{\"kind\": \"model\"}"), Err(FormatError::MissingVersion)));
    assert!(matches!(plugin_from_json(&text), Err(FormatError::WrongKind { .. })));
    // an edit that breaks a matrix shape is caught while parsing
    let broken = text.replacen("\"rows\": 4", "\"rows\": 5", 1);
    assert!(model_from_json(&broken).is_err());
    // an edit that breaks the coupling graph is caught by validation
    let mut bad = model.clone();
    let c = bad.subsystems[0].couplings.remove(&1).unwrap();
    bad.subsystems[0].couplings.insert(0, c);
    assert!(model_from_json(&model_to_json(&bad)).is_err());
}
