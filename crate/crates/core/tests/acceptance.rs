//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.
//!
//! Run with `cargo test --release -p milco-core --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use milco_core::eval::{ndcg_at_k, recall_at_k, Judgments, RunList};
use milco_core::index::{brute_force_search, build_index, prune, search, InvertedIndex, MassBasis, PruneSpec};
use milco_core::lexecho::{Forward, HeadDims, HeadParams, ToyEncoderParams, TokenSeq};
use milco_core::losses::{
    finite_diff_grad, infonce_loss, infonce_score_grads, kld_loss, kld_score_grads, smse_grad, smse_loss, Candidate,
    CandidateSet, SmseReduction,
};
use milco_core::training::{
    evaluate_params_with, gen_synth_bitext, run_ablation_matrix, run_sap, sap_objective, trace_csv, AblationReport,
    SynthLang, SynthLexicon, SynthTeacher, SynthWorld, TrainConfig,
};
use milco_core::vocab::{Vocab, Vocabularies};
use milco_core::{score_pair, DualViewRepr, Error, FormatError, SparseVec, TermKey};

/// Keeps criteria from sharing the CPU so their runtimes are measured alone.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n} [{name}]: {tag} {detail}");
    assert!(pass, "criterion {n} [{name}] failed: {detail}");
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

// ---------------------------------------------------------------- gradients

const EPS: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero are compared absolutely.
const REL_FLOOR: f64 = 1e-6;
const SWITCH_MARGIN: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn random_sets(rng: &mut ChaCha8Rng, sets: usize) -> Vec<CandidateSet> {
    (0..sets)
        .map(|s| {
            let n = rng.gen_range(2..8);
            let pos = rng.gen_range(0..n);
            CandidateSet {
                query_id: format!("q{s}"),
                candidates: (0..n)
                    .map(|i| Candidate {
                        doc_id: format!("d{i}"),
                        teacher: rng.gen_range(-3.0..3.0),
                        student: rng.gen_range(-3.0..3.0),
                        positive: i == pos,
                    })
                    .collect(),
            }
        })
        .collect()
}

fn with_students(sets: &[CandidateSet], flat: &[f64]) -> Vec<CandidateSet> {
    let mut it = flat.iter();
    sets.iter()
        .map(|s| {
            let mut s = s.clone();
            for c in &mut s.candidates {
                c.student = *it.next().unwrap();
            }
            s
        })
        .collect()
}

/// Maps each position to the first position with the same hidden state.
/// Windows holding the same tokens in another order average to the same row,
/// and a max over identical rows is smooth.
fn canonical_rows(f: &Forward) -> Vec<usize> {
    let h = f.hidden();
    (0..h.nrows())
        .map(|i| {
            (0..=i)
                .find(|&j| h.row(j).iter().zip(h.row(i)).all(|(a, b)| (a - b).abs() < 1e-12))
                .unwrap()
        })
        .collect()
}

/// Mask bits and max-pool argmax rows of a batch; the loss is smooth in a
/// parameter as long as this pattern does not change.
fn switching_pattern(p: &HeadParams, enc: &ToyEncoderParams, sources: &[&TokenSeq], targets: &[&[f64]]) -> Vec<u64> {
    let mut sig = Vec::new();
    for (s, t) in sources.iter().zip(targets) {
        let f = Forward::run(s, enc, p).unwrap();
        let canon = canonical_rows(&f);
        sig.extend(f.argmax_rows().iter().map(|&r| canon[r] as u64));
        sig.extend(f.pooled_logits().iter().zip(*t).map(|(&x, &y)| (x > 0.0 || y > 0.0) as u64));
    }
    sig
}

fn near_switch(p: &HeadParams, enc: &ToyEncoderParams, sources: &[&TokenSeq]) -> bool {
    sources.iter().any(|s| {
        let f = Forward::run(s, enc, p).unwrap();
        let canon = canonical_rows(&f);
        let logits = f.logits();
        let pooled_near_zero = f.pooled_logits().iter().any(|x| x.abs() < SWITCH_MARGIN);
        let tie = (0..logits.ncols()).any(|c| {
            let col = logits.column(c);
            let top = f.argmax_rows()[c];
            (0..col.len()).any(|r| canon[r] != canon[top] && col[top] - col[r] < SWITCH_MARGIN)
        });
        pooled_near_zero || tie
    })
}

#[test]
fn criterion_1_gradient_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut note = |name: &str, err: f64| match worst.iter_mut().find(|(n, _)| n == name) {
        Some(slot) => slot.1 = slot.1.max(err),
        None => worst.push((name.to_string(), err)),
    };
    let (mut checked, mut excluded) = (0usize, 0usize);
    let dims = HeadDims::default();
    let seeds = 0..10u64;

    for seed in seeds.clone() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let numeric = finite_diff_grad(|x| smse_loss(x, &t).unwrap(), &s, EPS);
        for ((a, n), x) in smse_grad(&s, &t).unwrap().iter().zip(&numeric).zip(&s) {
            if x.abs() < EPS + SWITCH_MARGIN {
                excluded += 1;
                continue;
            }
            note("smse_loss", rel_err(*a, *n));
            checked += 1;
        }

        let sets = random_sets(&mut rng, 4);
        let flat: Vec<f64> = sets.iter().flat_map(|s| s.student_scores()).collect();
        for (name, loss, grads) in [
            ("kld_loss", kld_loss as fn(&[CandidateSet]) -> _, kld_score_grads as fn(&[CandidateSet]) -> _),
            ("infonce_loss", infonce_loss, infonce_score_grads),
        ] {
            let analytic: Vec<f64> = grads(&sets).unwrap().concat();
            let numeric = finite_diff_grad(|x| loss(&with_students(&sets, x)).unwrap(), &flat, EPS);
            for (a, n) in analytic.iter().zip(&numeric) {
                note(name, rel_err(*a, *n));
                checked += 1;
            }
        }

        let lex = SynthLexicon::new(seed, dims).unwrap();
        let enc = ToyEncoderParams::for_dims(seed, dims);
        let teacher = SynthTeacher::seeded(seed, dims.v_e);
        let pairs = gen_synth_bitext(&lex, seed, 6, 0.1).unwrap();
        let sources: Vec<&TokenSeq> = pairs.iter().map(|p| &p.source).collect();
        let targets: Vec<Vec<f64>> = pairs.iter().map(|p| teacher.logits(&p.english).unwrap()).collect();
        let targets: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        let mut params = HeadParams::init(dims, seed);
        // Move off the init so every group carries signal.
        let jitter: Vec<f64> = params.to_flat().iter().map(|x| x + rng.gen_range(-0.1..0.1)).collect();
        params = HeadParams::from_flat(dims, params.connector, &jitter).unwrap();
        assert!(!near_switch(&params, &enc, &sources), "seed {seed}: base point sits on a switching point");

        let (_, grad) = sap_objective(&params, &enc, &sources, &targets, SmseReduction::Flattened).unwrap();
        let analytic = grad.to_flat();
        let x0 = params.to_flat();
        let base = switching_pattern(&params, &enc, &sources, &targets);
        let rebuild = |x: &[f64]| HeadParams::from_flat(dims, params.connector, x).unwrap();
        let objective = |x: &[f64]| {
            sap_objective(&rebuild(x), &enc, &sources, &targets, SmseReduction::Flattened)
                .unwrap()
                .0
        };
        let numeric = finite_diff_grad(objective, &x0, EPS);
        for (group, range) in dims.groups() {
            for j in range {
                let mut probe = x0.clone();
                let crosses = [EPS, -EPS].iter().any(|d| {
                    probe[j] = x0[j] + d;
                    switching_pattern(&rebuild(&probe), &enc, &sources, &targets) != base
                });
                if crosses {
                    excluded += 1;
                    continue;
                }
                note(&format!("sap/{group}"), rel_err(analytic[j], numeric[j]));
                checked += 1;
            }
        }
    }

    let elapsed = start.elapsed();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    for (name, err) in &worst {
        println!("  {name:<20} max rel err {err:.2e}");
    }
    let groups = worst.iter().filter(|(n, _)| n.starts_with("sap/")).count();
    let pass = max <= REL_TOL && groups == dims.groups().len() && excluded * 20 < checked && within(elapsed, 30);
    verdict(
        1,
        "gradient oracle",
        pass,
        &format!(
            "max rel err {max:.2e} over {checked} coords ({excluded} excluded), {} seeds, {:.1}s",
            seeds.count(),
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- retrieval

fn random_repr(rng: &mut ChaCha8Rng, max_terms: usize) -> DualViewRepr {
    let n = rng.gen_range(1..=max_terms);
    let pairs = (0..n).map(|_| {
        let key = if rng.gen_bool(0.5) {
            TermKey::english(rng.gen_range(0..200))
        } else {
            TermKey::source(rng.gen_range(0..300))
        };
        (key, rng.gen_range(0.01..3.0))
    });
    DualViewRepr::from_combined(&SparseVec::from_pairs(pairs).unwrap())
}

fn prune_modes() -> Vec<PruneSpec> {
    let mut modes = vec![PruneSpec::None, PruneSpec::TopK(1), PruneSpec::TopK(5), PruneSpec::TopK(20)];
    for p in [10.0, 50.0, 80.0, 95.0, 99.0] {
        modes.push(PruneSpec::MassPercentile { p, basis: MassBasis::Count });
        modes.push(PruneSpec::MassPercentile { p, basis: MassBasis::WeightMass });
    }
    modes
}

#[test]
fn criterion_2_search_matches_brute_force() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let docs: Vec<(String, DualViewRepr)> = (0..1000).map(|i| (format!("doc{i:04}"), random_repr(&mut rng, 40))).collect();
    let queries: Vec<DualViewRepr> = (0..50).map(|_| random_repr(&mut rng, 15)).collect();
    let (mut compared, mut mismatches) = (0usize, Vec::new());
    for spec in prune_modes() {
        let idx = build_index(docs.iter().map(|(id, r)| (id.as_str(), r)), &spec).unwrap();
        for (qi, q) in queries.iter().enumerate() {
            let fast = search(&idx, q, 100, &spec);
            let slow = brute_force_search(docs.iter().map(|(id, r)| (id.as_str(), r)), q, 100, &spec, &spec);
            let same = fast.len() == slow.len()
                && fast.iter().zip(&slow).all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() <= 1e-9);
            if !same {
                mismatches.push(format!("{spec} q{qi}"));
            }
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "oracle retrieval equivalence",
        mismatches.is_empty() && within(elapsed, 60),
        &format!(
            "{compared} (mode, query) rankings, mismatches {:?}, {:.1}s",
            mismatches.iter().take(5).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- SAP

#[test]
fn criterion_3_sap_convergence() {
    let _g = serial();
    let start = Instant::now();
    let cfg = TrainConfig::default();
    let run = |cfg: &TrainConfig| {
        let world = SynthWorld::generate(cfg).unwrap();
        let params = HeadParams::init(cfg.dims, cfg.seed).with_connector(cfg.connector);
        run_sap(&world.bitext, params, &world.encoder, &world.teacher, cfg).unwrap().1
    };
    let noisy = run(&cfg);
    // Without noise or expansion partners the targets are a fixed function of the source tokens.
    let clean = run(&TrainConfig {
        noise: 0.0,
        expansion: false,
        ..cfg.clone()
    });
    let elapsed = start.elapsed();

    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"));
    std::fs::write(dir.join("sap_trace.csv"), trace_csv(&noisy)).unwrap();
    std::fs::write(dir.join("sap_trace_clean.csv"), trace_csv(&clean)).unwrap();
    for (name, trace) in [("noise 0.1", &noisy), ("noise 0, no expansion", &clean)] {
        let at = |i: usize| trace[i.min(trace.len() - 1)];
        println!(
            "  {name}: loss at 0/500/1000/1500/last = {:.4} {:.4} {:.4} {:.4} {:.4}",
            at(0),
            at(500),
            at(1000),
            at(1500),
            at(trace.len() - 1)
        );
    }
    println!("  traces written to {}", dir.display());

    let ratio = noisy.last().unwrap() / noisy[0];
    let clean_final = *clean.last().unwrap();
    let pass = noisy.len() == 2000 && ratio <= 0.1 && clean_final <= 1e-3 && within(elapsed, 120);
    verdict(
        3,
        "SAP convergence",
        pass,
        &format!(
            "final/initial {ratio:.4} (need <= 0.1), zero-noise final {clean_final:.4} (need <= 1e-3), {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- ablation

struct Ablation {
    cfg: TrainConfig,
    report: AblationReport,
}

fn ablation() -> &'static Ablation {
    static CELL: OnceLock<Ablation> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = TrainConfig::ablation();
        let report = run_ablation_matrix(&cfg).unwrap();
        println!("{}", report.to_json());
        Ablation { cfg, report }
    })
}

#[test]
fn criterion_4_collapse_direction() {
    let _g = serial();
    let report = &ablation().report;
    let get = |n: &str| report.record(n).unwrap();
    let (kd, sap, sct) = (get("sap+sct_kd"), get("sap_only"), get("sct_only"));
    for r in &report.records {
        println!("  {:<16} overlap {:.4} ndcg {:.4}", r.config, r.overlap_at_10, r.ndcg_at_10);
    }
    let pass = sap.overlap_at_10 > sct.overlap_at_10
        && kd.overlap_at_10 >= 0.9 * sap.overlap_at_10
        && kd.ndcg_at_10 > sap.ndcg_at_10;
    verdict(
        4,
        "semantic-collapse direction",
        pass,
        &format!(
            "overlap sap {:.4} > sct {:.4}; sap+kd {:.4} >= {:.4}; ndcg sap+kd {:.4} > sap {:.4}",
            sap.overlap_at_10,
            sct.overlap_at_10,
            kd.overlap_at_10,
            0.9 * sap.overlap_at_10,
            kd.ndcg_at_10,
            sap.ndcg_at_10
        ),
    );
}

/// Rank of `target` among the corpus under the given view.
fn rank_of(corpus: &[(&str, DualViewRepr)], q: &DualViewRepr, target: &str) -> usize {
    let idx = build_index(corpus.iter().map(|(id, r)| (*id, r)), &PruneSpec::None).unwrap();
    let hits = search(&idx, q, corpus.len(), &PruneSpec::None);
    hits.iter().position(|(id, _)| id == target).map_or(usize::MAX, |p| p + 1)
}

#[test]
fn criterion_5_entity_inversion() {
    let _g = serial();
    let ab = ablation();
    let world = SynthWorld::generate(&ab.cfg).unwrap();
    let params = &ab.report.params["sap+sct_kd"];
    let lex = &world.lexicon;
    let encode = |toks: Vec<u32>, lang: SynthLang| {
        Forward::run(&TokenSeq::new(toks, lang.tag()).unwrap(), &world.encoder, params)
            .unwrap()
            .repr()
    };
    let w = lex.words();
    let xa = |i: usize| lex.foreign_of(SynthLang::Xa, w[i]).unwrap();
    let xb = |i: usize| lex.foreign_of(SynthLang::Xb, w[i]).unwrap();
    assert!(lex.entities().all(|e| lex.english_of(e).is_none()));

    // The query shares two words with the distractor and one word plus the
    // entity with the relevant document.
    let build = |e: u32, k: usize| {
        let (a, b, c, d) = (4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3);
        let q = encode(vec![xa(a), xa(b), e], SynthLang::Xa);
        let distractor = encode(vec![xb(a), xb(b), xb(c)], SynthLang::Xb);
        let relevant = encode(vec![xb(a), xb(d), e], SynthLang::Xb);
        (q, relevant, distractor)
    };

    let e = lex.entities().start;
    let (q, relevant, distractor) = build(e, 0);
    let filler: Vec<DualViewRepr> = (1..4).map(|k| build(e + k as u32, k).2).collect();
    let mut dual = vec![("doc1", distractor.clone()), ("doc2", relevant.clone())];
    dual.extend(filler.iter().enumerate().map(|(i, r)| (["f1", "f2", "f3"][i], r.clone())));
    let english: Vec<(&str, DualViewRepr)> = dual.iter().map(|(id, r)| (*id, r.english_only())).collect();
    let dual_rank = (rank_of(&dual, &q, "doc2"), rank_of(&dual, &q, "doc1"));
    let eng_rank = (rank_of(&english, &q.english_only(), "doc2"), rank_of(&english, &q.english_only(), "doc1"));
    println!(
        "  entity {e} weight in query source view {:.3}, in doc2 {:.3}",
        q.source().get(TermKey::source(e)).unwrap_or(0.0),
        relevant.source().get(TermKey::source(e)).unwrap_or(0.0)
    );
    println!("  dual view: doc2 rank {}, doc1 rank {}", dual_rank.0, dual_rank.1);
    println!("  English only: doc2 rank {}, doc1 rank {}", eng_rank.0, eng_rank.1);

    // The same construction over every entity and word group.
    let (mut dual_ok, mut eng_inverted, mut total) = (0, 0, 0);
    for e in lex.entities() {
        for k in 0..w.len() / 4 {
            let (q, rel, dis) = build(e, k);
            dual_ok += (score_pair(&q, &rel) > score_pair(&q, &dis)) as usize;
            let eq = q.english_only();
            eng_inverted += (score_pair(&eq, &rel.english_only()) < score_pair(&eq, &dis.english_only())) as usize;
            total += 1;
        }
    }
    println!("  over {total} constructions: dual prefers doc2 in {dual_ok}, English-only prefers doc1 in {eng_inverted}");

    let pass = dual_rank.0 < dual_rank.1 && eng_rank.0 > eng_rank.1 && 2 * dual_ok > total && 2 * eng_inverted > total;
    verdict(
        5,
        "entity inversion",
        pass,
        &format!(
            "dual ranks doc2 {} vs doc1 {}; English-only ranks doc2 {} vs doc1 {}; aggregate {dual_ok}/{total} and {eng_inverted}/{total}",
            dual_rank.0, dual_rank.1, eng_rank.0, eng_rank.1
        ),
    );
}

// ---------------------------------------------------------------- pruning

#[test]
fn criterion_6_pruning_behavior() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut count_failures = Vec::new();
    for trial in 0..2000 {
        let r = random_repr(&mut rng, 120);
        let nnz = r.nnz();
        for p in [10u64, 50, 80, 95, 99] {
            let spec = PruneSpec::MassPercentile { p: p as f64, basis: MassBasis::Count };
            // ceil((100 - p) * nnz / 100) in integers
            let want = ((100 - p) as usize * nnz).div_ceil(100);
            let got = prune(&r, &spec).nnz();
            if got != want {
                count_failures.push(format!("trial {trial} p {p} nnz {nnz}: {got} != {want}"));
            }
        }
    }

    let mut monotone_failures = 0;
    for _ in 0..10_000 {
        let r = random_repr(&mut rng, 60);
        let k = rng.gen_range(0..r.nnz() + 2);
        let small: BTreeSet<TermKey> = prune(&r, &PruneSpec::TopK(k)).combined().keys().collect();
        let large: BTreeSet<TermKey> = prune(&r, &PruneSpec::TopK(k + 1)).combined().keys().collect();
        let full: BTreeSet<TermKey> = r.combined().keys().collect();
        if !(small.is_subset(&large) && large.is_subset(&full) && small.len() == k.min(full.len())) {
            monotone_failures += 1;
        }
    }

    let ab = ablation();
    let world = SynthWorld::generate(&ab.cfg).unwrap();
    let params = &ab.report.params["sap+sct_kd"];
    let full = evaluate_params_with(params, &world, &PruneSpec::None, |r| r).unwrap().ndcg_at_10;
    let top10 = evaluate_params_with(params, &world, &PruneSpec::TopK(10), |r| r).unwrap().ndcg_at_10;

    let pass = count_failures.is_empty() && monotone_failures == 0 && full >= top10;
    verdict(
        6,
        "pruning behavior",
        pass,
        &format!(
            "count-mass mismatches {:?}; topk monotonicity failures {monotone_failures}/10000; ndcg full {full:.4} >= topk:10 {top10:.4}",
            count_failures.iter().take(3).collect::<Vec<_>>()
        ),
    );
}

// ---------------------------------------------------------------- metrics

fn naive_grade(judg: &[(String, String, u32)], q: &str, d: &str) -> u32 {
    judg.iter().find(|(jq, jd, _)| jq == q && jd == d).map_or(0, |j| j.2)
}

fn naive_ndcg(ranked: &[(String, f64)], judg: &[(String, String, u32)], q: &str, k: usize) -> f64 {
    let mut dcg = 0.0;
    for (i, (d, _)) in ranked.iter().enumerate().take(k) {
        let g = naive_grade(judg, q, d);
        dcg += (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2();
    }
    // Selection sort of the relevant grades for the ideal ordering.
    let mut grades: Vec<u32> = judg.iter().filter(|j| j.0 == q && j.2 > 0).map(|j| j.2).collect();
    let mut idcg = 0.0;
    for pos in 0..k.min(grades.len()) {
        let mut best = pos;
        for i in pos + 1..grades.len() {
            if grades[i] > grades[best] {
                best = i;
            }
        }
        grades.swap(pos, best);
        idcg += (2f64.powi(grades[pos] as i32) - 1.0) / ((pos + 2) as f64).log2();
    }
    dcg / idcg
}

fn naive_recall(ranked: &[(String, f64)], judg: &[(String, String, u32)], q: &str, k: usize) -> f64 {
    let relevant: Vec<&String> = judg.iter().filter(|j| j.0 == q && j.2 > 0).map(|j| &j.1).collect();
    let hits = relevant
        .iter()
        .filter(|d| ranked.iter().take(k).any(|(r, _)| r == **d))
        .count();
    hits as f64 / relevant.len() as f64
}

#[test]
fn criterion_7_metric_oracle() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut shape_errors = 0;
    for _ in 0..1000 {
        let mut run = RunList::new();
        let mut judg = Judgments::new();
        let mut flat = Vec::new();
        let queries = rng.gen_range(1..5);
        for qi in 0..queries {
            let q = format!("q{qi}");
            let pool = rng.gen_range(1..40);
            let mut docs: Vec<usize> = (0..pool).collect();
            for i in (1..docs.len()).rev() {
                docs.swap(i, rng.gen_range(0..=i));
            }
            let len = rng.gen_range(0..=pool);
            let mut score = 100.0;
            let ranked: Vec<(String, f64)> = docs[..len]
                .iter()
                .map(|d| {
                    score -= rng.gen_range(0.0..2.0);
                    (format!("d{d}"), score)
                })
                .collect();
            run.insert(q.clone(), ranked).unwrap();
            for d in 0..pool {
                if rng.gen_bool(0.3) {
                    let g = rng.gen_range(0..4);
                    judg.insert(q.clone(), format!("d{d}"), g);
                    flat.push((q.clone(), format!("d{d}"), g));
                }
            }
        }
        let k = rng.gen_range(1..50);
        let ndcg = ndcg_at_k(&run, &judg, k);
        let recall = recall_at_k(&run, &judg, k);
        let scored: Vec<String> = run
            .queries()
            .filter(|q| flat.iter().any(|j| j.0 == *q && j.2 > 0))
            .map(str::to_string)
            .collect();
        if ndcg.len() != scored.len() || recall.len() != scored.len() {
            shape_errors += 1;
            continue;
        }
        for q in &scored {
            let ranked = run.get(q).unwrap();
            worst = worst.max((ndcg[q] - naive_ndcg(ranked, &flat, q, k)).abs());
            worst = worst.max((recall[q] - naive_recall(ranked, &flat, q, k)).abs());
        }
    }

    let single = |rank: usize| {
        let mut run = RunList::new();
        let ranked = (0..3).map(|i| (format!("d{i}"), 3.0 - i as f64)).collect();
        run.insert("q", ranked).unwrap();
        let mut judg = Judgments::new();
        judg.insert("q", format!("d{}", rank - 1), 1);
        ndcg_at_k(&run, &judg, 10)["q"]
    };
    let closed_form = single(1) == 1.0 && single(2) == 1.0 / 3f64.log2();

    verdict(
        7,
        "metric oracle",
        worst <= 1e-12 && shape_errors == 0 && closed_form,
        &format!("max deviation {worst:.1e} over 1000 cases, closed forms {closed_form}"),
    );
}

// ---------------------------------------------------------------- formats

fn vocabularies() -> Vocabularies {
    let names = |prefix: &'static str, n: usize| {
        std::iter::once("[UNK]".to_string()).chain((1..n).map(move |i| format!("{prefix}{i}")))
    };
    Vocabularies {
        english: Vocab::new(names("en", 200)).unwrap(),
        source: Vocab::new(names("src", 300)).unwrap(),
    }
}

#[test]
fn criterion_8_format_stability() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let docs: Vec<(String, DualViewRepr)> = (0..300).map(|i| (format!("doc-{i}"), random_repr(&mut rng, 30))).collect();
    let idx = build_index(docs.iter().map(|(id, r)| (id.as_str(), r)), &PruneSpec::TopK(12)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.milx"), dir.path().join("b.milx"));
    milco_core::index::write_index(&idx, &a).unwrap();
    let back = milco_core::index::read_index(&a).unwrap();
    milco_core::index::write_index(&back, &b).unwrap();
    let index_stable = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap() && back == idx;

    let vocabs = vocabularies();
    let jsonl = dir.path().join("reprs.jsonl");
    let mut out = Vec::new();
    milco_core::repr::jsonl::write_records(&mut out, docs.iter().map(|(id, r)| (id.as_str(), r)), &vocabs).unwrap();
    std::fs::write(&jsonl, &out).unwrap();
    let jsonl_lossless = milco_core::repr::jsonl::read_records(&jsonl, &vocabs).unwrap() == docs;

    let mut run = RunList::new();
    let mut judg = Judgments::new();
    for qi in 0..20 {
        let q = format!("q{qi}");
        let mut score = 10.0;
        let ranked = (0..15)
            .map(|d| {
                score -= rng.gen_range(0.0..1.0) / 3.0;
                (format!("doc-{d}"), score)
            })
            .collect();
        run.insert(q.clone(), ranked).unwrap();
        for d in 0..5 {
            judg.insert(q.clone(), format!("doc-{}", d * 3), rng.gen_range(0..3));
        }
    }
    let mut run_text = Vec::new();
    milco_core::eval::write_run(&mut run_text, &run, "acc").unwrap();
    let mut qrels_text = Vec::new();
    milco_core::eval::write_qrels(&mut qrels_text, &judg).unwrap();
    let p = std::path::Path::new("mem");
    let trec_lossless = milco_core::eval::parse_run(std::str::from_utf8(&run_text).unwrap(), p).unwrap() == run
        && milco_core::eval::parse_qrels(std::str::from_utf8(&qrels_text).unwrap(), p).unwrap() == judg;

    let bytes = idx.to_bytes();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    let mut bad_body = bytes.clone();
    let last = bad_body.len() - 1;
    bad_body[last] ^= 0xff;
    let errors = [
        InvertedIndex::from_bytes(&bad_magic),
        InvertedIndex::from_bytes(&bad_version),
        InvertedIndex::from_bytes(&bytes[..10]),
        InvertedIndex::from_bytes(&bad_body),
    ];
    let typed = matches!(errors[0], Err(FormatError::BadMagic { .. }))
        && matches!(errors[1], Err(FormatError::UnsupportedVersion(99)))
        && matches!(errors[2], Err(FormatError::Truncated(_)))
        && matches!(errors[3], Err(FormatError::Checksum { .. }));
    std::fs::write(&b, &bad_magic).unwrap();
    let typed_from_file = matches!(
        milco_core::index::read_index(&b),
        Err(Error::Format(FormatError::BadMagic { .. }))
    );

    verdict(
        8,
        "format stability",
        index_stable && jsonl_lossless && trec_lossless && typed && typed_from_file,
        &format!(
            "index byte identity {index_stable}, JSONL {jsonl_lossless}, run/qrels {trec_lossless}, typed header errors {}",
            typed && typed_from_file
        ),
    );
}
