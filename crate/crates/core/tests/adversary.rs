use authlink::adversary::{
    choose_attack, run_trial, AttackKind, AttackMode, AttackPlan, AttackSession, AttackTrialConfig, Victims,
};
use authlink::bus::{Bus, BusConfig, Topic};
use authlink::keyexchange::GroupId;
use authlink::node::session::{NodePair, SessionSeeds};
use authlink::node::{EventKind, NodeConfig, ParamsMode};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn config(mode: AttackMode, victims: Option<Victims>) -> AttackTrialConfig {
    AttackTrialConfig {
        mode,
        victims,
        dh_bits: 1024,
        params_mode: ParamsMode::WellKnown(GroupId::Modp1024),
        ..Default::default()
    }
}

#[test]
fn every_mode_and_target_is_detected() {
    for mode in [AttackMode::Tamper, AttackMode::Replace, AttackMode::Random] {
        for victims in [Victims::Drone0, Victims::Drone1, Victims::Both] {
            let cfg = config(mode, Some(victims));
            for trial_id in 0..40 {
                let t = run_trial(&cfg, trial_id, 1234).unwrap();
                assert!(!t.records.is_empty());
                assert!(t.detected(), "{mode:?}/{victims:?} trial {trial_id} undetected");
                assert!(!t.silent_mismatch());
                assert!(!t.established, "an attacked session must not be established");
                for victim in victims.ids() {
                    let event = t.detection(victim).unwrap();
                    assert!(
                        matches!(event, EventKind::KeyMismatchDetected | EventKind::PubkeyInvalid),
                        "{victim} logged {event}"
                    );
                }
                for r in &t.records {
                    assert_ne!(r.original_digest, r.mutated_digest);
                    if mode != AttackMode::Random {
                        let want = if mode == AttackMode::Tamper { AttackKind::Tamper } else { AttackKind::Replace };
                        assert_eq!(r.chosen_attack, want);
                    }
                }
            }
        }
    }
}

#[test]
fn single_target_reports_detection_by_the_victim() {
    let cfg = config(AttackMode::Tamper, Some(Victims::Drone1));
    for trial_id in 0..30 {
        let row = run_trial(&cfg, trial_id, 5).unwrap().report_row();
        assert!(row.detected_by_drone1);
        assert_eq!(row.target, "drone1");
        assert_eq!(row.chosen_attack, "drone1=tamper");
    }
}

#[test]
fn honest_trials_raise_no_alarms() {
    let cfg = config(AttackMode::Random, None);
    for trial_id in 0..100 {
        let t = run_trial(&cfg, trial_id, 77).unwrap();
        assert!(t.records.is_empty());
        assert!(t.established && t.keys_agree && t.round_trip_ok, "trial {trial_id}");
        assert!(t.logs.values().flatten().all(|e| !e.event.is_detection()));
        assert!(t.detected(), "nothing affected, nothing to detect");
    }
}

#[test]
fn data_attacks_are_also_detected() {
    let cfg = AttackTrialConfig { attack_data: true, ..config(AttackMode::Random, Some(Victims::Both)) };
    for trial_id in 0..20 {
        assert!(run_trial(&cfg, trial_id, 9).unwrap().detected());
    }
}

#[test]
fn trials_are_reproducible() {
    let cfg = config(AttackMode::Random, Some(Victims::Both));
    for trial_id in 0..10 {
        let a = run_trial(&cfg, trial_id, 42).unwrap();
        let b = run_trial(&cfg, trial_id, 42).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.report_row(), b.report_row());
    }
    let kinds =
        |seed| (0..10).map(|i| run_trial(&cfg, i, seed).unwrap().report_row().chosen_attack).collect::<Vec<_>>();
    assert_ne!(kinds(42), kinds(43));
}

#[test]
fn random_mode_is_a_fair_coin() {
    let plan = AttackPlan::new(AttackMode::Random, 0, vec![]);
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let tampers = (0..10_000).filter(|_| choose_attack(&plan, &mut rng) == AttackKind::Tamper).count();
    let freq = tampers as f64 / 10_000.0;
    assert!((0.45..=0.55).contains(&freq), "{freq}");
    let fixed = AttackPlan::new(AttackMode::Replace, 0, vec![]);
    assert!((0..100).all(|_| choose_attack(&fixed, &mut rng) == AttackKind::Replace));
}

fn honest_pair(bus: &Bus, seed: u64) -> NodePair {
    let mode = ParamsMode::WellKnown(GroupId::Fixed512);
    NodePair::new(
        bus,
        NodeConfig::drone0(512, 512, mode),
        NodeConfig::drone1(512, 512, mode),
        SessionSeeds::from_seed(seed),
    )
    .unwrap()
}

#[test]
fn adversary_without_targets_is_a_no_op() {
    let bus = Bus::new(BusConfig::deterministic(1));
    let mut pair = honest_pair(&bus, 1);
    let session = AttackSession::attach(&AttackPlan::new(AttackMode::Random, 1, vec![]), &bus, 0).unwrap();
    pair.handshake(&bus);
    assert!(pair.established() && pair.keys_agree());
    assert!(session.detach().is_empty());
}

#[test]
fn detaching_before_keys_flow_restores_the_channel() {
    let bus = Bus::new(BusConfig::deterministic(2));
    let mut pair = honest_pair(&bus, 2);
    let topics = vec![Topic::public_key("drone0").unwrap(), Topic::public_key("drone1").unwrap()];
    let session = AttackSession::attach(&AttackPlan::new(AttackMode::Tamper, 2, topics.clone()), &bus, 0).unwrap();
    assert!(session.detach().is_empty());
    pair.handshake(&bus);
    assert!(pair.established() && pair.keys_agree());

    // a second adversary may now claim the same topics, but not twice
    let again = AttackSession::attach(&AttackPlan::new(AttackMode::Tamper, 3, topics.clone()), &bus, 1).unwrap();
    assert!(AttackSession::attach(&AttackPlan::new(AttackMode::Tamper, 3, topics), &bus, 2).is_err());
    drop(again);
}

#[test]
fn tamper_fraction_is_validated() {
    let bus = Bus::new(BusConfig::default());
    let mut plan = AttackPlan::new(AttackMode::Tamper, 0, vec![Topic::public_key("drone0").unwrap()]);
    plan.tamper_fraction = 0.0;
    assert!(AttackSession::attach(&plan, &bus, 0).is_err());
    plan.tamper_fraction = 1.5;
    assert!(AttackSession::attach(&plan, &bus, 0).is_err());
}
