use secagg_robust::adversary::{AttackKind, AttackSpec};
use secagg_robust::fl::{run_training, ExperimentConfig, RunOptions, Stage};
use secagg_robust::secagg::{decode_log, encode_log, MessageKind};

fn config() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
seed = 3
epochs = 2
[clients]
n = 16
[data]
dim = 4
per_client = 10
[defense]
clusters = 4
[protocol]
dropouts = [{ epoch = 1, stage = "final", client = 2, point = "after_round2" }]
[attack]
kind = "scaling"
kappa = 10.0
"#,
    )
    .unwrap()
}

#[test]
fn recorded_transcripts_survive_the_flat_log() {
    let options = RunOptions {
        record_transcript: true,
        timings: false,
    };
    let report = run_training(&config(), options).unwrap();
    assert_eq!(report.transcripts.len(), report.aggregations);
    let messages: Vec<_> = report.transcripts.iter().flat_map(|r| r.messages.iter().cloned()).collect();
    let log = encode_log(&messages);
    assert_eq!(decode_log(&log).unwrap(), messages);
    assert!(messages.iter().any(|m| m.kind == MessageKind::Proof));
    assert_eq!(report.ledger_violations, 0);
}

#[test]
fn scripted_final_dropout_is_not_a_contributor() {
    let report = run_training(&config(), RunOptions { record_transcript: true, timings: false }).unwrap();
    let finals: Vec<_> = report
        .transcripts
        .iter()
        .filter(|r| r.epoch == 1 && r.stage == Stage::Final)
        .collect();
    for r in finals {
        assert!(!r.contributors.contains(&2));
    }
}

#[test]
fn flagged_and_contributing_sets_are_disjoint() {
    let mut cfg = config();
    cfg.attack = AttackSpec {
        kind: AttackKind::SignFlip,
        kappa: 5.0,
        ..AttackSpec::default()
    };
    let report = run_training(&cfg, RunOptions::default()).unwrap();
    for r in &report.rounds {
        for c in &r.contributors {
            assert!(!r.flagged_robustness.contains(c));
            assert!(!r.flagged_correctness.contains(c));
            assert!(!r.flagged_magnitude.contains(c));
        }
    }
}
