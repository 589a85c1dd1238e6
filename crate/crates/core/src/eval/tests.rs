use std::path::Path;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn run_of(entries: &[(&str, &[&str])]) -> RunList {
    let mut run = RunList::new();
    for (q, docs) in entries {
        let n = docs.len();
        run.insert(
            *q,
            docs.iter().enumerate().map(|(i, d)| (d.to_string(), (n - i) as f64)).collect(),
        )
        .unwrap();
    }
    run
}

fn judg_of(entries: &[(&str, &str, u32)]) -> Judgments {
    let mut j = Judgments::new();
    for &(q, d, g) in entries {
        j.insert(q, d, g);
    }
    j
}

#[test]
fn ndcg_closed_forms() {
    let j = judg_of(&[("q", "a", 1)]);
    assert_eq!(ndcg_at_k(&run_of(&[("q", &["a", "b"])]), &j, 10)["q"], 1.0);
    assert_eq!(ndcg_at_k(&run_of(&[("q", &["b", "a"])]), &j, 10)["q"], 1.0 / 3f64.log2());
    assert_abs_diff_eq!(ndcg_at_k(&run_of(&[("q", &["b", "a"])]), &j, 10)["q"], 0.6309, epsilon = 1e-4);
    assert_eq!(ndcg_at_k(&run_of(&[("q", &["x", "y"])]), &j, 10)["q"], 0.0);
}

#[test]
fn queries_without_relevant_docs_are_excluded() {
    let j = judg_of(&[("q", "a", 0), ("r", "a", 1)]);
    let run = run_of(&[("q", &["a"]), ("r", &["a"])]);
    let m = ndcg_at_k(&run, &j, 10);
    assert!(!m.contains_key("q"));
    assert_eq!(m["r"], 1.0);
}

#[test]
fn graded_gain_uses_exponential_form() {
    // grades 2 then 1 in the run, ideal order identical -> 1.0; swapped:
    let j = judg_of(&[("q", "a", 2), ("q", "b", 1)]);
    let swapped = ndcg_at_k(&run_of(&[("q", &["b", "a"])]), &j, 10)["q"];
    let dcg = 1.0 / 1.0 + 3.0 / 3f64.log2();
    let idcg = 3.0 / 1.0 + 1.0 / 3f64.log2();
    assert_abs_diff_eq!(swapped, dcg / idcg, epsilon = 1e-15);
}

#[test]
fn recall_cases() {
    let j = judg_of(&[("q", "a", 1), ("q", "b", 2), ("q", "c", 1), ("q", "d", 1)]);
    assert_eq!(recall_at_k(&run_of(&[("q", &["a", "b", "c", "d"])]), &j, 10)["q"], 1.0);
    assert_eq!(recall_at_k(&run_of(&[("q", &["a", "x", "b", "c"])]), &j, 2)["q"], 0.25);
    assert_eq!(recall_at_k(&run_of(&[("q", &["a", "b", "x", "y"])]), &j, 4)["q"], 0.5);
}

#[test]
fn run_insert_validation() {
    let mut run = RunList::new();
    assert!(run.insert("q", vec![("a".into(), 1.0), ("a".into(), 0.5)]).is_err());
    assert!(run.insert("q", vec![("a".into(), 1.0), ("b".into(), 2.0)]).is_err());
    assert!(run.insert("q", vec![("a".into(), f64::NAN)]).is_err());
    assert!(run.insert("q", vec![("a".into(), 1.0), ("b".into(), 1.0)]).is_ok());
}

#[test]
fn metric_names() {
    assert_eq!("ndcg@10".parse::<Metric>().unwrap(), Metric::Ndcg(10));
    assert_eq!("Recall@100".parse::<Metric>().unwrap(), Metric::Recall(100));
    assert!("map@10".parse::<Metric>().is_err());
    assert!("ndcg@0".parse::<Metric>().is_err());
    assert!("ndcg".parse::<Metric>().is_err());
    assert_eq!(Metric::Recall(5).to_string(), "recall@5");
}

#[test]
fn qrels_and_run_lines() {
    let j = parse_qrels("q1 0 d7 2\n", Path::new("x")).unwrap();
    assert_eq!(j.grade("q1", "d7"), 2);
    assert_eq!(j.grade("q1", "d8"), 0);
    let run = parse_run("q1 Q0 d7 1 9.5 milco\n", Path::new("x")).unwrap();
    assert_eq!(run.get("q1").unwrap(), &[("d7".to_string(), 9.5)]);
}

#[test]
fn run_duplicate_names_the_line() {
    let err = parse_run("q1 Q0 d7 1 9.5 t\nq1 Q0 d8 2 9.0 t\nq1 Q0 d7 3 1.0 t\n", Path::new("r.run")).unwrap_err();
    match err {
        Error::Parse { line, message, .. } => {
            assert_eq!(line, 3);
            assert!(message.contains("d7"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_lines_are_positioned() {
    assert!(matches!(parse_qrels("q 0 d\n", Path::new("x")), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(parse_qrels("q 0 d 1\nq 0 e -1\n", Path::new("x")), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(parse_run("q Q0 d 1 abc t\n", Path::new("x")), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(parse_run("q Q0 d x 1.0 t\n", Path::new("x")), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn run_orders_by_score_keeping_file_order_on_ties() {
    let run = parse_run("q Q0 a 3 1.0 t\nq Q0 b 1 5.0 t\nq Q0 c 2 1.0 t\n", Path::new("x")).unwrap();
    let docs: Vec<&str> = run.get("q").unwrap().iter().map(|(d, _)| d.as_str()).collect();
    assert_eq!(docs, ["b", "a", "c"]);
}

#[test]
fn file_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (run, judg) = random_case(&mut rng);
    let mut buf = Vec::new();
    write_run(&mut buf, &run, "milco").unwrap();
    assert_eq!(parse_run(std::str::from_utf8(&buf).unwrap(), Path::new("x")).unwrap(), run);
    let mut buf = Vec::new();
    write_qrels(&mut buf, &judg).unwrap();
    assert_eq!(parse_qrels(std::str::from_utf8(&buf).unwrap(), Path::new("x")).unwrap(), judg);
}

#[test]
fn empty_intersection_reports_warnings() {
    let run = run_of(&[("q1", &["a"])]);
    let judg = judg_of(&[("q2", "a", 1)]);
    let report = evaluate_run(&run, &judg, &[Metric::Ndcg(10)]);
    assert!(report.metrics.is_empty());
    assert_eq!(report.unjudged, 1);
    assert_eq!(report.missing_from_run, 1);
    assert_eq!(report.warnings(), 2);
}

#[test]
fn single_query_average_is_its_value() {
    let run = run_of(&[("q", &["b", "a"])]);
    let judg = judg_of(&[("q", "a", 1)]);
    let report = evaluate_run(&run, &judg, &[Metric::Ndcg(10), Metric::Recall(1)]);
    let ndcg = &report.metrics["ndcg@10"];
    assert_eq!(ndcg["all"], ndcg["q"]);
    assert_eq!(report.mean(Metric::Recall(1)), Some(0.0));
    assert_eq!(
        report.to_json(),
        serde_json::json!({"ndcg@10": {"q": 1.0 / 3f64.log2(), "all": 1.0 / 3f64.log2()}, "recall@1": {"q": 0.0, "all": 0.0}})
    );
}

#[test]
fn macro_average_over_twenty_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (run, judg) = random_case_with(&mut rng, 20);
    let report = evaluate_run(&run, &judg, &[Metric::Ndcg(10)]);
    let per = ndcg_at_k(&run, &judg, 10);
    let mut sum = 0.0;
    for v in per.values() {
        sum += v;
    }
    assert_abs_diff_eq!(report.metrics["ndcg@10"]["all"], sum / per.len() as f64, epsilon = 1e-15);
}

fn random_case(rng: &mut ChaCha8Rng) -> (RunList, Judgments) {
    let n = rng.gen_range(1..8);
    random_case_with(rng, n)
}

fn random_case_with(rng: &mut ChaCha8Rng, queries: usize) -> (RunList, Judgments) {
    let mut run = RunList::new();
    let mut judg = Judgments::new();
    for q in 0..queries {
        let qid = format!("q{q}");
        let pool = rng.gen_range(1..40);
        for d in 0..pool {
            if rng.gen_bool(0.4) {
                judg.insert(qid.clone(), format!("d{d}"), rng.gen_range(0..4));
            }
        }
        let mut docs: Vec<usize> = (0..pool).filter(|_| rng.gen_bool(0.7)).collect();
        // shuffle
        for i in (1..docs.len()).rev() {
            docs.swap(i, rng.gen_range(0..=i));
        }
        let mut score = 100.0;
        let ranked = docs
            .into_iter()
            .map(|d| {
                if rng.gen_bool(0.8) {
                    score -= rng.gen_range(0.0..3.0);
                }
                (format!("d{d}"), score)
            })
            .collect();
        run.insert(qid, ranked).unwrap();
    }
    (run, judg)
}

/// Quadratic reimplementations without sorting or hashing.
mod naive {
    use super::*;

    fn grade_of(judg: &Judgments, q: &str, d: &str) -> u32 {
        for (qq, dd, g) in judg.iter() {
            if qq == q && dd == d {
                return g;
            }
        }
        0
    }

    fn relevant(judg: &Judgments, q: &str) -> Vec<(String, u32)> {
        judg.iter().filter(|(qq, _, g)| *qq == q && *g > 0).map(|(_, d, g)| (d.to_string(), g)).collect()
    }

    pub fn ndcg(run: &RunList, judg: &Judgments, k: usize) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (q, ranked) in run.iter() {
            let mut rel = relevant(judg, q);
            if rel.is_empty() {
                continue;
            }
            let mut dcg = 0.0;
            for (i, (d, _)) in ranked.iter().enumerate() {
                if i >= k {
                    break;
                }
                let g = grade_of(judg, q, d);
                dcg += (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2();
            }
            let mut idcg = 0.0;
            let mut pos = 0;
            while !rel.is_empty() && pos < k {
                let mut best = 0;
                for i in 1..rel.len() {
                    if rel[i].1 > rel[best].1 {
                        best = i;
                    }
                }
                let g = rel.remove(best).1;
                idcg += (2f64.powi(g as i32) - 1.0) / ((pos + 2) as f64).log2();
                pos += 1;
            }
            out.push((q.to_string(), dcg / idcg));
        }
        out
    }

    pub fn recall(run: &RunList, judg: &Judgments, k: usize) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (q, ranked) in run.iter() {
            let rel = relevant(judg, q);
            if rel.is_empty() {
                continue;
            }
            let mut hits = 0;
            for (d, _) in &rel {
                for (i, (rd, _)) in ranked.iter().enumerate() {
                    if i < k && rd == d {
                        hits += 1;
                    }
                }
            }
            out.push((q.to_string(), hits as f64 / rel.len() as f64));
        }
        out
    }
}

#[test]
fn metrics_match_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for _ in 0..1000 {
        let (run, judg) = random_case(&mut rng);
        let k = rng.gen_range(1..30);
        let fast = ndcg_at_k(&run, &judg, k);
        let slow = naive::ndcg(&run, &judg, k);
        assert_eq!(fast.len(), slow.len());
        for (q, v) in slow {
            assert!((fast[&q] - v).abs() <= 1e-12);
            assert!((0.0..=1.0).contains(&fast[&q]));
        }
        let fast = recall_at_k(&run, &judg, k);
        for (q, v) in naive::recall(&run, &judg, k) {
            assert!((fast[&q] - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let (run, judg) = random_case(&mut rng);
        let k = rng.gen_range(1..10);
        // order-preserving affine map of scores
        let mut scaled = RunList::new();
        let mut permuted = RunList::new();
        for (q, ranked) in run.iter() {
            scaled
                .insert(q, ranked.iter().map(|(d, s)| (d.clone(), 3.0 * s + 7.0)).collect())
                .unwrap();
            let mut tail: Vec<(String, f64)> = ranked.iter().skip(k).cloned().collect();
            tail.reverse();
            let floor = tail.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            let mut p: Vec<(String, f64)> = ranked.iter().take(k).cloned().collect();
            p.extend(tail.into_iter().map(|(d, _)| (d, floor)));
            permuted.insert(q, p).unwrap();
        }
        assert_eq!(ndcg_at_k(&run, &judg, k), ndcg_at_k(&scaled, &judg, k));
        assert_eq!(ndcg_at_k(&run, &judg, k), ndcg_at_k(&permuted, &judg, k));
        assert_eq!(recall_at_k(&run, &judg, k), recall_at_k(&permuted, &judg, k));
    }
}
