mod common;

use common::reference_metrics;
use proptest::prelude::*;
use revisit_lab::evaluator::{
    eval_feed, lift, lift_value, request_metrics, roc_auc, write_lift_report, write_report, EvalResult, FeedItem, Lift,
    Metric, RankedFeed, REPORT_HEADER,
};
use revisit_lab::ranker::N_TASKS;
use revisit_lab::TaskId;

fn feed(id: usize, rows: &[[bool; N_TASKS]]) -> RankedFeed {
    RankedFeed {
        request_id: format!("r{id}"),
        items: rows
            .iter()
            .enumerate()
            .map(|(i, &labels)| FeedItem {
                pin_id: format!("p{i}"),
                probabilities: [0.5; N_TASKS],
                score: -(i as f64),
                labels,
            })
            .collect(),
    }
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    }
}

fn label_lists() -> impl Strategy<Value = Vec<Vec<[bool; N_TASKS]>>> {
    prop::collection::vec(prop::collection::vec(any::<[bool; N_TASKS]>(), 0..12), 1..15)
}

#[test]
fn small_cases() {
    let m = request_metrics(&[false, true, false, true], 2);
    let ndcg = (1.0 / 3f64.log2()) / (1.0 + 1.0 / 3f64.log2());
    assert!((m[0].unwrap() - ndcg).abs() < 1e-12);
    assert_eq!(m[2], Some(0.5));
    assert_eq!(m[3], Some(0.5));
    assert_eq!(m[4], Some(0.25));
    assert_eq!(m[5], Some(1.0));
    let none = request_metrics(&[false, false], 3);
    assert_eq!(none, [None, None, None, None, None, Some(0.0)]);
    let all = request_metrics(&[true, true], 1);
    assert_eq!(all[4], None);
    assert_eq!(all[0], Some(1.0));
    assert!(eval_feed(&[], 3).is_err());
    assert!(eval_feed(&[feed(0, &[[true; N_TASKS]])], 0).is_err());
}

#[test]
fn lift_edge_cases() {
    assert_eq!(
        lift_value(Some(1.1), Some(1.0)),
        Lift::Percent(100.0 * (1.1 - 1.0) / 1.0)
    );
    assert_eq!(lift_value(Some(1.0), Some(0.0)), Lift::Undefined);
    assert_eq!(lift_value(None, Some(1.0)), Lift::Undefined);
    assert_eq!(Lift::Undefined.to_string(), "undefined");
    let a = eval_feed(&[feed(0, &[[true; N_TASKS]])], 3).unwrap();
    let b = eval_feed(&[feed(0, &[[true; N_TASKS]])], 2).unwrap();
    assert!(lift(&a, &b).is_err());
}

#[test]
fn reports_have_one_row_per_task_metric() {
    let feeds = vec![
        feed(0, &[[false; N_TASKS], [true; N_TASKS]]),
        feed(1, &[[false; N_TASKS]]),
    ];
    let r = eval_feed(&feeds, 3).unwrap();
    let mut buf = Vec::new();
    write_report(&r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], REPORT_HEADER);
    assert_eq!(lines.len(), 1 + N_TASKS * Metric::ALL.len());
    assert!(lines
        .iter()
        .any(|l| l.starts_with("repin,ndcg@3,") && l.ends_with(",2,1")));
    let mut buf = Vec::new();
    write_lift_report(&r, &r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.ends_with(",0.000000") || l.ends_with(",undefined")));
    assert!(text.contains("repin,hits@3,0.500000000000,2,0,0.000000"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn request_metrics_match_reference(labels in prop::collection::vec(any::<bool>(), 0..30), k in 1usize..12) {
        let got = request_metrics(&labels, k);
        let want = reference_metrics(&labels, k);
        for m in 0..6 {
            prop_assert!(close(got[m], want[m]), "metric {} got {:?} want {:?}", m, got[m], want[m]);
            if let Some(v) = got[m] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn feed_means_match_reference(lists in label_lists(), k in 1usize..8) {
        let feeds: Vec<RankedFeed> = lists.iter().enumerate().map(|(i, l)| feed(i, l)).collect();
        let served: Vec<&Vec<[bool; N_TASKS]>> = lists.iter().filter(|l| !l.is_empty()).collect();
        if served.is_empty() {
            let r: EvalResult = eval_feed(&feeds, k).unwrap();
            prop_assert_eq!(r.n_requests, 0);
            return Ok(());
        }
        let r = eval_feed(&feeds, k).unwrap();
        prop_assert_eq!(r.n_requests, served.len());
        for task in TaskId::ALL {
            for (m, metric) in Metric::ALL.iter().enumerate() {
                let values: Vec<f64> = served
                    .iter()
                    .filter_map(|l| reference_metrics(&l.iter().map(|y| y[task.index()]).collect::<Vec<_>>(), k)[m])
                    .collect();
                let mv = r.get(task, *metric);
                prop_assert_eq!(mv.n_skipped, served.len() - values.len());
                let want = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
                prop_assert!(close(mv.value, want));
            }
        }
    }

    #[test]
    fn hits_counts_every_request(lists in label_lists(), k in 1usize..5) {
        let feeds: Vec<RankedFeed> = lists.iter().enumerate().map(|(i, l)| feed(i, l)).collect();
        let r = eval_feed(&feeds, k).unwrap();
        for task in TaskId::ALL {
            prop_assert_eq!(r.get(task, Metric::Hits).n_skipped, 0);
        }
    }

    #[test]
    fn pairwise_accuracy_equals_auc_of_rank(labels in prop::collection::vec(any::<bool>(), 1..30)) {
        let scores: Vec<f64> = (0..labels.len()).map(|i| -(i as f64)).collect();
        prop_assert!(close(request_metrics(&labels, 3)[4], roc_auc(&scores, &labels)));
    }

    #[test]
    fn sorted_positive_first_is_perfect(pos in 1usize..8, neg in 0usize..8, k in 1usize..10) {
        let labels: Vec<bool> = (0..pos + neg).map(|i| i < pos).collect();
        let m = request_metrics(&labels, k);
        prop_assert!(close(m[0], Some(1.0)));
        prop_assert!(close(m[1], Some(1.0)));
        prop_assert_eq!(m[2], Some(1.0));
        prop_assert!(close(m[3], Some(pos.min(k) as f64 / pos as f64)));
        if neg > 0 {
            prop_assert_eq!(m[4], Some(1.0));
        }
    }
}
