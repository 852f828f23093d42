use std::collections::HashSet;

use proptest::prelude::*;

use clir::evaluation::{
    average_precision, evaluate, mean_average_precision, precision_at_k, EvaluationError, Qrels, Run,
};

fn ranking() -> impl Strategy<Value = (Vec<String>, HashSet<String>)> {
    (2usize..20).prop_flat_map(|n| {
        (
            Just((0..n).map(|i| format!("d{i}")).collect::<Vec<_>>()),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(docs, rel)| {
                let relevant = docs
                    .iter()
                    .zip(&rel)
                    .filter(|(_, r)| **r)
                    .map(|(d, _)| d.clone())
                    .collect();
                (docs, relevant)
            })
    })
}

fn refs(set: &HashSet<String>) -> HashSet<&str> {
    set.iter().map(String::as_str).collect()
}

proptest! {
    #[test]
    fn shuffling_tail_non_relevant_keeps_ap((docs, relevant) in ranking(), seed in any::<u64>()) {
        prop_assume!(!relevant.is_empty());
        let rel = refs(&relevant);
        let last = docs.iter().rposition(|d| rel.contains(d.as_str())).unwrap();
        let mut permuted = docs.clone();
        let tail = &mut permuted[last + 1..];
        if !tail.is_empty() {
            let len = tail.len();
            tail.rotate_left(seed as usize % len);
        }
        prop_assert_eq!(average_precision(&docs, &rel), average_precision(&permuted, &rel));
    }

    #[test]
    fn promoting_a_relevant_doc_never_hurts((docs, relevant) in ranking(), pick in any::<usize>()) {
        let rel = refs(&relevant);
        let positions: Vec<usize> = (1..docs.len()).filter(|&i| rel.contains(docs[i].as_str())).collect();
        prop_assume!(!positions.is_empty());
        let i = positions[pick % positions.len()];
        let mut better = docs.clone();
        better.swap(i - 1, i);
        prop_assert!(average_precision(&better, &rel).unwrap() >= average_precision(&docs, &rel).unwrap() - 1e-15);
    }

    #[test]
    fn precision_ignores_order_inside_top_k((docs, relevant) in ranking(), k in 1usize..12, seed in any::<u64>()) {
        let rel = refs(&relevant);
        let mut permuted = docs.clone();
        let head = k.min(docs.len());
        permuted[..head].rotate_left(seed as usize % head);
        let p = precision_at_k(&docs, &rel, k).unwrap();
        prop_assert_eq!(p, precision_at_k(&permuted, &rel, k).unwrap());
        let hits = docs.iter().take(k).filter(|d| rel.contains(d.as_str())).count();
        prop_assert_eq!(p, hits as f64 / k as f64);
    }
}

#[test]
fn worked_examples() {
    let rel: HashSet<&str> = ["a", "b", "c", "d", "e"].into();
    assert_eq!(precision_at_k(&["a", "b", "c", "d", "e"], &rel, 5).unwrap(), 1.0);
    let two: HashSet<&str> = ["b", "d"].into();
    assert_eq!(precision_at_k(&["a", "b", "c", "d", "e"], &two, 5).unwrap(), 0.4);
    assert_eq!(precision_at_k::<&str>(&[], &two, 5).unwrap(), 0.0);
    assert!(matches!(
        precision_at_k(&["a"], &two, 0),
        Err(EvaluationError::InvalidK)
    ));
    assert_eq!(average_precision(&["b", "d", "x"], &two), Some(1.0));
    assert_eq!(average_precision(&["x", "y"], &two), Some(0.0));
    assert_eq!(average_precision(&["x"], &HashSet::new()), None);
}

#[test]
fn run_files_are_resorted_by_score_then_doc() {
    let text = "1 Q0 b 1 0.5 t\n1 Q0 a 2 0.5 t\n1 Q0 c 3 0.9 t\n2 Q0 x 1 1.0 t\n";
    let run = Run::read(text.as_bytes()).unwrap();
    assert_eq!(run.ranking("1"), ["c", "a", "b"]);
    let ranks: Vec<usize> = run.get("1").unwrap().iter().map(|e| e.rank).collect();
    assert_eq!(ranks, [1, 2, 3]);
    let mut out = Vec::new();
    run.write(&mut out).unwrap();
    let again = Run::read(out.as_slice()).unwrap();
    assert_eq!(again, run);
    assert!(Run::read("1 Q0 a 1 0.5 t\n1 Q0 a 2 0.4 t\n".as_bytes()).is_err());
    assert!(Run::read("1 Q0 a 1\n".as_bytes()).is_err());
}

#[test]
fn qrels_conventions() {
    let qrels = Qrels::read("1 0 a 1\n1 0 b 0\n2 0 z 1\n3 0 q 0\n".as_bytes()).unwrap();
    assert!(Qrels::read("1 0 a 1\n1 0 a 0\n".as_bytes()).is_err());
    let run = Run::read("1 Q0 a 1 2.0 t\n1 Q0 b 2 1.0 t\n3 Q0 q 1 1.0 t\n9 Q0 a 1 1.0 t\n".as_bytes()).unwrap();
    let report = evaluate(&run, &qrels).unwrap();
    // Query 2 has judgments but no run entry and scores 0; 3 has no relevant
    // documents and 9 has no judgments, so both are excluded.
    let ids: Vec<&str> = report.queries.iter().map(|q| q.qid.as_str()).collect();
    assert_eq!(ids, ["1", "2"]);
    assert_eq!(report.excluded, ["3", "9"]);
    assert_eq!(report.map, 0.5);
    assert_eq!(mean_average_precision(&run, &qrels).unwrap(), 0.5);
    let rendered = report.render();
    assert!(rendered.contains("map\tall\t0.5000"), "{rendered}");
    assert!(rendered.contains("P_5\t1\t0.2000"));
    assert!(rendered.contains("num_q\tall\t2"));

    let unjudged = Qrels::read("5 0 a 0\n".as_bytes()).unwrap();
    assert!(matches!(
        evaluate(&run, &unjudged),
        Err(EvaluationError::NoEvaluableQueries)
    ));
}

#[test]
fn perfect_run_scores_one() {
    let qrels = Qrels::from_judgments([("1", "a", true), ("1", "b", true), ("2", "c", true)]).unwrap();
    let run = Run::read("1 Q0 a 1 3 t\n1 Q0 b 2 2 t\n1 Q0 x 3 1 t\n2 Q0 c 1 1 t\n".as_bytes()).unwrap();
    assert_eq!(mean_average_precision(&run, &qrels).unwrap(), 1.0);
}
