//! Plug-in and unplug on the power-network designs.

mod common;

use dse_core::design::{
    design, plug_in, unplug, verify_design, DesignConfig, DesignError, DesignStatus, DesignStep, NetworkModel,
    PlugInRequest,
};
use dse_core::numerics::Matrix;
use dse_core::powergrid::{build_scenario, Scenario};

fn example(name: &str) -> (NetworkModel, dse_core::design::DesignReport) {
    let model = build_scenario(&Scenario::builtin(name).unwrap()).unwrap();
    let report = design(&model, &DesignConfig::default()).unwrap();
    (model, report)
}

/// Copy of area 2 attached to area 1 through the same tie-line blocks.
fn area_two_copy(model: &NetworkModel) -> PlugInRequest {
    let mut sub = model.subsystems[1].clone();
    sub.name = Some("area 2 copy".into());
    let from_one = model.subsystems[1].couplings[&0].clone();
    sub.couplings.clear();
    sub.couplings.insert(0, from_one);
    let into_one = model.subsystems[0].couplings[&1].clone();
    PlugInRequest {
        subsystem: sub,
        children: [(0, into_one)].into_iter().collect(),
    }
}

#[test]
fn plug_in_touches_only_the_new_subsystem_and_its_children() {
    let (model, report) = example("example3");
    let request = area_two_copy(&model);
    let (grown, r2) = plug_in(&report, &model, &request, &DesignConfig::default()).unwrap();
    let new = model.len();
    assert_eq!(grown.len(), new + 1);
    assert!(r2.status.is_success(), "{}", r2.status);
    for entry in &r2.provenance {
        match entry.subsystem {
            Some(i) if i == new => {}
            Some(i) => {
                assert!(request.children.contains_key(&i), "untouched subsystem {i} in log: {entry:?}");
                assert!(matches!(entry.step, DesignStep::CouplingGain | DesignStep::CouplingScale), "{entry:?}");
                assert_eq!(entry.parent, Some(new), "{entry:?}");
            }
            None => {}
        }
    }
    assert!(r2.provenance.iter().any(|e| e.step == DesignStep::LocalGain && e.subsystem == Some(new)));
    // untouched Part-A results are carried over verbatim
    for i in 0..new {
        assert_eq!(r2.subsystems[i].contractive, report.subsystems[i].contractive);
        assert_eq!(r2.subsystems[i].gains.local_gain, report.subsystems[i].gains.local_gain);
    }
    let v = verify_design(&grown, &r2, 50, 3).unwrap();
    assert!(v.passed, "{v:?}");
}

#[test]
fn plug_in_rejection_reports_the_stop() {
    let (model, report) = example("example3");
    let mut request = area_two_copy(&model);
    // a coupling far too strong for the shipped bounds
    for c in request.children.values_mut() {
        c.use_output = false;
        c.matrix = Matrix::from_element(4, 4, 5.0);
    }
    match plug_in(&report, &model, &request, &DesignConfig::default()) {
        Err(DesignError::PlugInRejected(status)) => assert!(!status.is_success()),
        other => panic!("expected rejection, got {other:?}"),
    }
    let mut bad = area_two_copy(&model);
    bad.children.insert(9, bad.children[&0].clone());
    assert!(matches!(
        plug_in(&report, &model, &bad, &DesignConfig::default()),
        Err(DesignError::InvalidIndex { index: 9, .. })
    ));
}

#[test]
fn unplug_every_area_keeps_the_certificate() {
    for name in ["example2", "example3"] {
        let (model, report) = example(name);
        for q in 0..model.len() {
            for refresh in [false, true] {
                let out = unplug(&report, &model, q, refresh, 5).unwrap();
                let c = &out.check;
                assert!(c.rho_after <= c.rho_before + 1e-12, "{name} q={q}: {c:?}");
                assert!(c.all_passed(), "{name} q={q}: {c:?}");
                assert_eq!(c.refreshed, refresh);
                assert_eq!(out.model.len(), model.len() - 1);
                for (i, s) in out.model.subsystems.iter().enumerate() {
                    assert_eq!(
                        s.couplings.keys().collect::<Vec<_>>(),
                        out.report.subsystems[i].gains.cross.keys().collect::<Vec<_>>()
                    );
                }
                let v = verify_design(&out.model, &out.report, 20, 1).unwrap();
                assert!(v.passed, "{name} q={q} refresh={refresh}: {v:?}");
            }
            // the tie-line chain itself is strongly connected
            let out = unplug(&report, &model, q, false, 5).unwrap();
            assert!(out.check.strongly_connected);
        }
        assert!(matches!(
            unplug(&report, &model, model.len(), false, 0),
            Err(DesignError::InvalidIndex { .. })
        ));
    }
}

#[test]
fn unplug_warns_on_weakly_connected_networks() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let mut warned = false;
    for _ in 0..40 {
        let model = common::random_network(&mut rng);
        let report = design(&model, &DesignConfig::default()).unwrap();
        if !report.status.is_success() || dse_core::design::is_strongly_connected(&model) {
            continue;
        }
        let out = unplug(&report, &model, 0, false, 0).unwrap();
        assert!(!out.check.strongly_connected);
        assert!(out.check.warning.is_some());
        assert!(out.check.all_passed(), "{:?}", out.check);
        warned = true;
        break;
    }
    assert!(warned, "no weakly connected network drawn");
}

#[test]
fn stopped_designs_refuse_reconfiguration() {
    let (model, report) = example("example1");
    assert!(matches!(report.status, DesignStatus::StoppedNotSchur { .. }));
    assert!(matches!(unplug(&report, &model, 0, false, 0), Err(DesignError::NotSuccessful(_))));
    assert!(matches!(verify_design(&model, &report, 1, 0), Err(DesignError::NotSuccessful(_))));
}
