use nbrevive_core::agent::{FixRecord, FixType, SessionLog, SessionStats};
use nbrevive_core::analytics::{
    classify_error, error_type_counts, DeviationBand, ErrorType, OutcomeTable, OutputStatus, PostState,
    TransitionMatrix,
};
use nbrevive_core::grader::{classify_status, ErrorStatus, Label, ReproOutcome};
use nbrevive_core::llm::Usage;

fn outcome_for(post: PostState) -> ReproOutcome {
    match post {
        PostState::Timeout => ReproOutcome::failed(ErrorStatus::Timeout),
        PostState::ErrorNonrepro => classify_status(ErrorStatus::Error, true, Some(0.5), 0.1),
        PostState::ErrorfreeNonrepro => classify_status(ErrorStatus::ErrorFree, false, None, 0.1),
        PostState::ErrorRepro => classify_status(ErrorStatus::Error, true, Some(0.01), 0.1),
        PostState::ErrorfreeRepro => classify_status(ErrorStatus::ErrorFree, true, Some(0.0), 0.1),
        PostState::OtherFailed => ReproOutcome::failed(ErrorStatus::NotSaved),
    }
}

fn record(i: usize, fix: FixType, post: ReproOutcome, errors: Vec<String>) -> FixRecord {
    FixRecord {
        iteration: i,
        fix_type: fix,
        prompt: String::new(),
        prompt_tokens: 0,
        plan: String::new(),
        response: String::new(),
        patch_applied: true,
        pre_state: post,
        post_state: post,
        tokens: Usage::new(1, 0, 1),
        llm_calls: 1,
        edit_sim_prev: 0.9,
        edit_sim_baseline: 0.8,
        score: None,
        runtime: None,
        post_errors: errors,
        root_cause: None,
        failure: None,
    }
}

/// Reported fix counts by post state (timeout, error_nonrepro,
/// errorfree_nonrepro, error_repro, errorfree_repro).
const REPORTED: [(FixType, [u64; 5]); 3] = [
    (FixType::RuntimeReduction, [3143, 835, 1365, 29, 77]),
    (FixType::ErrorRepair, [1120, 11172, 2548, 1233, 2906]),
    (FixType::ScoreCalibration, [434, 813, 19053, 23, 1233]),
];

#[test]
fn transition_matrix_reproduces_reported_counts() {
    // one log per fix type, each record landing in the listed state
    let mut logs = Vec::new();
    for (fix, counts) in REPORTED {
        let s = ReproOutcome::failed(ErrorStatus::Timeout);
        let mut log = SessionLog::new(fix.as_str(), s);
        let mut i = 0;
        for (post, n) in PostState::ALL.iter().zip(counts) {
            for _ in 0..n {
                i += 1;
                log.push(record(i, fix, outcome_for(*post), vec![]));
            }
        }
        log.finish(s, None, vec![], SessionStats::default(), None);
        logs.push(log);
    }
    let m = TransitionMatrix::from_logs(&logs);
    for (fix, counts) in REPORTED {
        for (post, n) in PostState::ALL.iter().zip(counts) {
            assert_eq!(m.get(fix, *post), n, "{fix} -> {}", post.as_str());
        }
        assert_eq!(m.get(fix, PostState::OtherFailed), 0);
    }
    // the reported runtime-reduction total, 4,449, is 1,000 below the sum
    // of its cells; the matrix follows the cells
    assert_eq!(m.row_total(FixType::RuntimeReduction), 5449);
    assert_eq!(m.row_total(FixType::ErrorRepair), 18979);
    assert_eq!(m.row_total(FixType::ScoreCalibration), 21556);
}

#[test]
fn outcome_table_partitions_and_separates() {
    let three = [
        classify_status(ErrorStatus::ErrorFree, true, Some(0.0), 0.1),
        classify_status(ErrorStatus::Error, true, Some(0.05), 0.1),
        classify_status(ErrorStatus::Error, false, None, 0.1),
    ];
    let t = OutcomeTable::from_outcomes(&three);
    let hit: Vec<_> = t.rows.iter().filter(|r| r.count > 0).collect();
    assert_eq!(hit.len(), 3);
    assert!(hit.iter().all(|r| r.count == 1));
    assert_eq!(t.reproducible(), 2);
    assert_eq!(t.count(ErrorStatus::Error, OutputStatus::NoCsv, DeviationBand::NotApplicable), 1);

    let all: Vec<ReproOutcome> = ErrorStatus::ALL
        .iter()
        .flat_map(|&s| [true, false].map(|c| classify_status(s, c, Some(0.2), 0.1)))
        .collect();
    let t = OutcomeTable::from_outcomes(&all);
    assert_eq!(t.rows.iter().map(|r| r.count).sum::<u64>(), all.len() as u64);
    assert_eq!(
        t.rows.iter().filter(|r| r.label == Label::Failed).map(|r| r.count).sum::<u64>(),
        8
    );
}

#[test]
fn error_types_from_logs() {
    let s = classify_status(ErrorStatus::Error, false, None, 0.1);
    let mut log = SessionLog::new("nb", s);
    log.push(record(1, FixType::ErrorRepair, s, vec!["AttributeError: 'DataFrame' object has no attribute 'append'".into()]));
    log.finish(
        s,
        None,
        vec!["KeyError: 'x'".into()],
        SessionStats {
            baseline_errors: vec!["NameError: name 'np' is not defined".into(), "OSError: disk".into()],
            ..SessionStats::default()
        },
        None,
    );
    let rows = error_type_counts(&[log]);
    let get = |t: ErrorType| rows.iter().find(|r| r.error_type == t).unwrap();
    assert_eq!(get(ErrorType::NameError).baseline, 1);
    assert_eq!(get(ErrorType::Others).baseline, 1);
    assert_eq!(get(ErrorType::AttributeError).after_fix, 1);
    assert_eq!(get(ErrorType::KeyError).terminal, 1);
    assert_eq!(classify_error("\u{1b}[0;31mValueError\u{1b}[0m: bad"), ErrorType::Others);
}
