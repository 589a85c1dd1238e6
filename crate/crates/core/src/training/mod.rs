//! Two-stage training of the head on a synthetic bilingual world.
//!
//! Stage one (alignment pretraining) regresses the student's pooled logits on
//! foreign text onto a fixed English teacher. Stage two (contrastive training)
//! optimizes retrieval scores with distillation or InfoNCE plus L1 sparsity.
//! Both stages use plain gradient descent with a fixed step size. Per-example
//! passes run in parallel; gradients are summed in input order so results do
//! not depend on scheduling.

mod retrieval;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;

pub use retrieval::{RetrievalConfig, RetrievalSet, RetrievalText, TEACHER_SCORE_SCALE};
pub use synth::{
    gen_synth_bitext, mapped_agreement, synth_teacher_encode, Concept, SynthBitextPair, SynthLang, SynthLexicon, SynthTeacher,
    TEACHER_ABSENT, TEACHER_EXPANSION, TEACHER_PRESENT,
};

use crate::error::{Error, Result};
use crate::eval::{evaluate_run, Metric, RunList};
use crate::index::{build_index, search, PruneSpec};
use crate::lexecho::{ConnectorMode, Forward, HeadDims, HeadParams, TokenSeq, ToyEncoderParams};
use crate::losses::{contrastive_loss, smse_batch, CandidateSet, LossWeights, RankingLoss, SmseReduction};
use crate::repr::{DualViewRepr, SparseVec, TermKey};

/// Step size, step budget and batch size of one stage. A batch size of zero
/// means full batch; otherwise batches are consecutive slices, cycled in order.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StageConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            steps: 2000,
            batch_size: 0,
        }
    }
}

impl StageConfig {
    pub fn validate(&self, stage: &str) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("{stage} learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        Ok(())
    }

    fn batch(&self, step: usize, n: usize) -> Range<usize> {
        if self.batch_size == 0 || self.batch_size >= n {
            return 0..n;
        }
        let chunks = n.div_ceil(self.batch_size);
        let start = (step % chunks) * self.batch_size;
        start..(start + self.batch_size).min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SctMode {
    #[default]
    Kd,
    InfoNce,
    Off,
}

impl SctMode {
    pub fn ranking_loss(self) -> Option<RankingLoss> {
        match self {
            SctMode::Kd => Some(RankingLoss::Kd),
            SctMode::InfoNce => Some(RankingLoss::InfoNce),
            SctMode::Off => None,
        }
    }
}

/// Everything a training run depends on besides the seed-derived data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub dims: HeadDims,
    pub encoder_radius: usize,
    pub bitext_pairs: usize,
    pub noise: f64,
    /// Give every teacher token an expansion partner.
    pub expansion: bool,
    pub sap_enabled: bool,
    pub sct_mode: SctMode,
    pub connector: ConnectorMode,
    pub sap: StageConfig,
    pub sct: StageConfig,
    pub weights: LossWeights,
    pub smse_reduction: SmseReduction,
    pub retrieval: RetrievalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dims: HeadDims::default(),
            encoder_radius: 1,
            bitext_pairs: 500,
            noise: 0.1,
            expansion: true,
            sap_enabled: true,
            sct_mode: SctMode::Kd,
            connector: ConnectorMode::Mlp,
            sap: StageConfig::default(),
            sct: StageConfig {
                learning_rate: 0.01,
                steps: 100,
                batch_size: 0,
            },
            weights: LossWeights::default(),
            smse_reduction: SmseReduction::Flattened,
            retrieval: RetrievalConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults with a pretraining step size large enough for alignment to
    /// take hold within the step budget. Used for the ablation matrix.
    pub fn ablation() -> Self {
        let mut cfg = Self::default();
        cfg.sap.learning_rate = 1.0;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.sap.validate("sap")?;
        self.sct.validate("sct")?;
        self.weights.validate()?;
        self.retrieval.validate()?;
        if self.bitext_pairs == 0 {
            return Err(Error::Config("bitext_pairs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} outside [0, 1)", self.noise)));
        }
        Ok(())
    }
}

/// Seed-derived data shared by every configuration of one experiment.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub lexicon: SynthLexicon,
    pub encoder: ToyEncoderParams,
    pub teacher: SynthTeacher,
    pub bitext: Vec<SynthBitextPair>,
    pub retrieval: RetrievalSet,
    pub candidate_sets: Vec<CandidateSet>,
}

impl SynthWorld {
    pub fn generate(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let lexicon = SynthLexicon::new(seed, cfg.dims)?;
        let encoder = ToyEncoderParams::from_seed(seed, cfg.dims.source_vocab, cfg.dims.d_l, cfg.encoder_radius);
        let teacher = if cfg.expansion {
            SynthTeacher::seeded(seed, cfg.dims.v_e)
        } else {
            SynthTeacher::without_expansion(cfg.dims.v_e)
        };
        let bitext = gen_synth_bitext(&lexicon, seed.wrapping_add(1), cfg.bitext_pairs, cfg.noise)?;
        let retrieval = RetrievalSet::generate(&lexicon, seed.wrapping_add(2), &cfg.retrieval)?;
        let candidate_sets = retrieval.candidate_sets(seed.wrapping_add(3), cfg.retrieval.negatives);
        Ok(Self {
            lexicon,
            encoder,
            teacher,
            bitext,
            retrieval,
            candidate_sets,
        })
    }

    pub fn sct_data(&self) -> SctData {
        let seqs = |texts: &[RetrievalText]| texts.iter().map(|t| (t.id.clone(), t.source.clone())).collect();
        SctData {
            queries: seqs(&self.retrieval.train_queries),
            docs: seqs(&self.retrieval.docs),
            sets: self.candidate_sets.clone(),
        }
    }
}

/// Examples per gradient-accumulation chunk. Fixed, so the summation order
/// does not depend on the thread count.
const CHUNK: usize = 32;

fn accumulate<T, F>(params: &HeadParams, items: &[T], each: F) -> HeadParams
where
    T: Sync,
    F: Fn(&T, &mut HeadParams) + Sync,
{
    let zeros = || HeadParams::zeros(params.dims()).with_connector(params.connector);
    let partials: Vec<HeadParams> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = zeros();
            for item in chunk {
                each(item, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = zeros();
    for g in &partials {
        total.add_scaled(1.0, g);
    }
    total
}

/// Alignment loss and its parameter gradient over one batch.
pub fn sap_objective(
    params: &HeadParams,
    enc: &ToyEncoderParams,
    sources: &[&TokenSeq],
    targets: &[&[f64]],
    reduction: SmseReduction,
) -> Result<(f64, HeadParams)> {
    let forwards: Vec<Forward> = sources
        .par_iter()
        .map(|s| Forward::run(s, enc, params))
        .collect::<Result<_>>()?;
    let pooled: Vec<&[f64]> = forwards
        .iter()
        .map(|f| f.pooled_logits().as_slice().expect("contiguous"))
        .collect();
    let (loss, grads) = smse_batch(&pooled, targets, reduction)?;
    let pairs: Vec<(&Forward, &Vec<f64>)> = forwards.iter().zip(&grads).collect();
    let grad = accumulate(params, &pairs, |(f, g), acc| f.backward_pooled_into(params, g, acc));
    Ok((loss, grad))
}

/// Contrastive training data: token sequences by id plus candidate sets whose
/// teacher scores are fixed and whose student scores are recomputed each step.
#[derive(Debug, Clone, PartialEq)]
pub struct SctData {
    pub queries: BTreeMap<String, TokenSeq>,
    pub docs: BTreeMap<String, TokenSeq>,
    pub sets: Vec<CandidateSet>,
}

impl SctData {
    pub fn validate(&self) -> Result<()> {
        for set in &self.sets {
            let missing = |reason: String| Error::InvalidCandidates {
                query: set.query_id.clone(),
                reason,
            };
            if !self.queries.contains_key(&set.query_id) {
                return Err(missing("no query text".into()));
            }
            if let Some(c) = set.candidates.iter().find(|c| !self.docs.contains_key(&c.doc_id)) {
                return Err(missing(format!("no text for document {}", c.doc_id)));
            }
        }
        Ok(())
    }
}

fn forward_all<'a>(
    ids: &BTreeSet<&'a str>,
    texts: &BTreeMap<String, TokenSeq>,
    enc: &ToyEncoderParams,
    params: &HeadParams,
) -> Result<BTreeMap<&'a str, Forward>> {
    let ids: Vec<&str> = ids.iter().copied().collect();
    let forwards = ids
        .par_iter()
        .map(|id| Forward::run(&texts[*id], enc, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(ids.into_iter().zip(forwards).collect())
}

/// Adds `g * other[k]` to `acc[k]` for every key the two vectors share.
fn add_shared(acc: &mut BTreeMap<TermKey, f64>, g: f64, mine: &SparseVec, other: &SparseVec) {
    for k in mine.keys() {
        if let Some(o) = other.get(k) {
            *acc.entry(k).or_default() += g * o;
        }
    }
}

/// Contrastive loss and its parameter gradient over a batch of candidate sets.
pub fn sct_objective(
    params: &HeadParams,
    enc: &ToyEncoderParams,
    data: &SctData,
    batch: &[CandidateSet],
    weights: LossWeights,
    mode: RankingLoss,
) -> Result<(f64, HeadParams)> {
    let q_ids: BTreeSet<&str> = batch.iter().map(|s| s.query_id.as_str()).collect();
    let d_ids: BTreeSet<&str> = batch
        .iter()
        .flat_map(|s| s.candidates.iter().map(|c| c.doc_id.as_str()))
        .collect();
    let q_fwd = forward_all(&q_ids, &data.queries, enc, params)?;
    let d_fwd = forward_all(&d_ids, &data.docs, enc, params)?;
    let q_reprs: BTreeMap<String, DualViewRepr> = q_fwd.iter().map(|(id, f)| (id.to_string(), f.repr())).collect();
    let d_reprs: BTreeMap<String, DualViewRepr> = d_fwd.iter().map(|(id, f)| (id.to_string(), f.repr())).collect();

    let scored: Vec<CandidateSet> = batch
        .iter()
        .map(|set| {
            let q = &q_reprs[&set.query_id];
            let mut set = set.clone();
            for c in &mut set.candidates {
                c.student = crate::repr::score_pair(q, &d_reprs[&c.doc_id]);
            }
            set
        })
        .collect();
    let loss = contrastive_loss(&scored, &q_reprs, &d_reprs, weights, mode)?;
    let score_grads = mode.score_grads(&scored)?;

    let mut q_grads: BTreeMap<&str, BTreeMap<TermKey, f64>> = BTreeMap::new();
    let mut d_grads: BTreeMap<&str, BTreeMap<TermKey, f64>> = BTreeMap::new();
    for (set, grads) in scored.iter().zip(&score_grads) {
        let q = &q_reprs[&set.query_id];
        for (c, &g) in set.candidates.iter().zip(grads) {
            let d = &d_reprs[&c.doc_id];
            let qa = q_grads.entry(set.query_id.as_str()).or_default();
            add_shared(qa, g, q.english(), d.english());
            add_shared(qa, g, q.source(), d.source());
            let da = d_grads.entry(c.doc_id.as_str()).or_default();
            add_shared(da, g, d.english(), q.english());
            add_shared(da, g, d.source(), q.source());
        }
    }
    let l1 = |grads: &mut BTreeMap<&str, BTreeMap<TermKey, f64>>, reprs: &BTreeMap<String, DualViewRepr>, alpha: f64| {
        if alpha == 0.0 {
            return;
        }
        let per = alpha / reprs.len() as f64;
        for (id, r) in reprs {
            let acc = grads.get_mut(id.as_str()).expect("every batch text has a gradient entry");
            for (k, _) in r.combined().iter() {
                *acc.entry(k).or_default() += per;
            }
        }
    };
    l1(&mut q_grads, &q_reprs, weights.alpha_q);
    l1(&mut d_grads, &d_reprs, weights.alpha_d);

    let jobs: Vec<(&Forward, Vec<(TermKey, f64)>)> = q_fwd
        .iter()
        .map(|(id, f)| (f, q_grads.remove(id).unwrap_or_default().into_iter().collect()))
        .chain(
            d_fwd
                .iter()
                .map(|(id, f)| (f, d_grads.remove(id).unwrap_or_default().into_iter().collect())),
        )
        .collect();
    let grad = accumulate(params, &jobs, |(f, g), acc| f.backward_repr_into(params, g, acc));
    Ok((loss, grad))
}

fn descend<F>(mut params: HeadParams, stage: &StageConfig, n: usize, objective: F) -> Result<(HeadParams, Vec<f64>)>
where
    F: Fn(&HeadParams, Range<usize>) -> Result<(f64, HeadParams)>,
{
    let mut trace = Vec::with_capacity(stage.steps);
    for step in 0..stage.steps {
        let (loss, grad) = objective(&params, stage.batch(step, n))?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Divergence { step });
        }
        trace.push(loss);
        params.add_scaled(-stage.learning_rate, &grad);
        if !params.is_finite() {
            return Err(Error::Divergence { step });
        }
    }
    Ok((params, trace))
}

/// Alignment pretraining against precomputed teacher logits.
pub fn run_sap_on_targets(
    sources: &[&TokenSeq],
    targets: &[Vec<f64>],
    params: HeadParams,
    enc: &ToyEncoderParams,
    stage: &StageConfig,
    reduction: SmseReduction,
) -> Result<(HeadParams, Vec<f64>)> {
    stage.validate("sap")?;
    if sources.len() != targets.len() {
        return Err(Error::Shape {
            context: "sap targets",
            expected: sources.len().to_string(),
            actual: targets.len().to_string(),
        });
    }
    if sources.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let targets: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
    descend(params, stage, sources.len(), |p, r| {
        sap_objective(p, enc, &sources[r.clone()], &targets[r], reduction)
    })
}

/// Alignment pretraining: foreign side through the student, English side
/// through the teacher.
pub fn run_sap(
    corpus: &[SynthBitextPair],
    params: HeadParams,
    enc: &ToyEncoderParams,
    teacher: &SynthTeacher,
    cfg: &TrainConfig,
) -> Result<(HeadParams, Vec<f64>)> {
    let targets = corpus
        .iter()
        .map(|p| teacher.logits(&p.english))
        .collect::<Result<Vec<_>>>()?;
    let sources: Vec<&TokenSeq> = corpus.iter().map(|p| &p.source).collect();
    run_sap_on_targets(&sources, &targets, params, enc, &cfg.sap, cfg.smse_reduction)
}

/// Contrastive training in the configured mode.
pub fn run_sct(data: &SctData, params: HeadParams, enc: &ToyEncoderParams, cfg: &TrainConfig) -> Result<(HeadParams, Vec<f64>)> {
    cfg.sct.validate("sct")?;
    cfg.weights.validate()?;
    let mode = cfg
        .sct_mode
        .ranking_loss()
        .ok_or_else(|| Error::Config("run_sct called with sct_mode = off".into()))?;
    if data.sets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    data.validate()?;
    descend(params, &cfg.sct, data.sets.len(), |p, r| {
        sct_objective(p, enc, data, &data.sets[r], cfg.weights, mode)
    })
}

/// Fraction of the top-`m` keys of `a` that are also top-`m` keys of `b`.
pub fn overlap_at_m(a: &SparseVec, b: &SparseVec, m: usize) -> f64 {
    assert!(m >= 1, "overlap needs m >= 1");
    let ka: BTreeSet<TermKey> = a.top_k(m).keys().collect();
    b.top_k(m).keys().filter(|k| ka.contains(k)).count() as f64 / m as f64
}

pub const OVERLAP_M: usize = 10;
pub const NDCG_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalEval {
    pub ndcg_at_10: f64,
    pub overlap_at_10: f64,
}

/// Encodes every document, indexes them unpruned and scores the held-out
/// queries. Overlap compares each document's English view with the teacher's.
pub fn evaluate_params(params: &HeadParams, world: &SynthWorld) -> Result<RetrievalEval> {
    evaluate_params_with(params, world, &PruneSpec::None, |r| r)
}

/// [`evaluate_params`] with document pruning and a transform applied to every
/// encoded text before indexing and search.
pub fn evaluate_params_with<F>(params: &HeadParams, world: &SynthWorld, doc_spec: &PruneSpec, view: F) -> Result<RetrievalEval>
where
    F: Fn(DualViewRepr) -> DualViewRepr + Sync,
{
    let enc = &world.encoder;
    let set = &world.retrieval;
    let docs: Vec<(String, DualViewRepr, SparseVec)> = set
        .docs
        .par_iter()
        .map(|d| {
            let f = Forward::run(&d.source, enc, params)?;
            Ok((d.id.clone(), view(f.repr()), f.english_view()))
        })
        .collect::<Result<_>>()?;
    let mut overlap = 0.0;
    for (d, (_, _, english)) in set.docs.iter().zip(&docs) {
        let (_, teacher) = synth_teacher_encode(&d.english, &world.teacher)?;
        overlap += overlap_at_m(english, &teacher, OVERLAP_M);
    }
    overlap /= docs.len() as f64;

    let idx = build_index(docs.iter().map(|(id, r, _)| (id.as_str(), r)), doc_spec)?;
    let mut run = RunList::new();
    for q in &set.eval_queries {
        let qr = view(Forward::run(&q.source, enc, params)?.repr());
        run.insert(q.id.clone(), search(&idx, &qr, 100, &PruneSpec::None))?;
    }
    let report = evaluate_run(&run, &set.judgments(&set.eval_queries), &[Metric::Ndcg(NDCG_K)]);
    Ok(RetrievalEval {
        ndcg_at_10: report.mean(Metric::Ndcg(NDCG_K)).unwrap_or(0.0),
        overlap_at_10: overlap,
    })
}

/// Result of one configuration: final parameters and per-stage loss traces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HeadParams,
    pub sap_trace: Vec<f64>,
    pub sct_trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn trace(&self) -> Vec<f64> {
        self.sap_trace.iter().chain(&self.sct_trace).copied().collect()
    }
}

pub fn initial_params(cfg: &TrainConfig) -> HeadParams {
    HeadParams::init(cfg.dims, cfg.seed).with_connector(cfg.connector)
}

/// Runs whichever stages `cfg` enables, starting from `sap` if given (an
/// already pretrained head) or from fresh parameters.
pub fn train(world: &SynthWorld, cfg: &TrainConfig, pretrained: Option<(HeadParams, Vec<f64>)>) -> Result<TrainOutcome> {
    let (params, sap_trace) = match (pretrained, cfg.sap_enabled) {
        (Some(done), _) => done,
        (None, true) => run_sap(&world.bitext, initial_params(cfg), &world.encoder, &world.teacher, cfg)?,
        (None, false) => (initial_params(cfg), Vec::new()),
    };
    let (params, sct_trace) = match cfg.sct_mode {
        SctMode::Off => (params, Vec::new()),
        _ => run_sct(&world.sct_data(), params, &world.encoder, cfg)?,
    };
    Ok(TrainOutcome {
        params,
        sap_trace,
        sct_trace,
    })
}

/// The ablation configurations, in report order.
pub const ABLATION_CONFIGS: [&str; 5] = ["sap+sct_kd", "sap+sct_infonce", "sap_only", "sct_only", "no_connector"];

fn ablation_variant(base: &TrainConfig, name: &str) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.connector = ConnectorMode::Mlp;
    match name {
        "sap+sct_kd" => {
            cfg.sap_enabled = true;
            cfg.sct_mode = SctMode::Kd;
        }
        "sap+sct_infonce" => {
            cfg.sap_enabled = true;
            cfg.sct_mode = SctMode::InfoNce;
        }
        "sap_only" => {
            cfg.sap_enabled = true;
            cfg.sct_mode = SctMode::Off;
        }
        "sct_only" => {
            cfg.sap_enabled = false;
            cfg.sct_mode = SctMode::Kd;
        }
        "no_connector" => {
            cfg.sap_enabled = true;
            cfg.sct_mode = SctMode::Kd;
            cfg.connector = ConnectorMode::Bypass;
        }
        _ => unreachable!("unknown ablation config {name}"),
    }
    cfg
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AblationRecord {
    pub config: String,
    pub final_loss: f64,
    pub overlap_at_10: f64,
    pub ndcg_at_10: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub records: Vec<AblationRecord>,
    pub traces: BTreeMap<String, Vec<f64>>,
    pub params: BTreeMap<String, HeadParams>,
}

pub const OVERLAP_DEFINITION: &str = "overlap_at_10: mean over documents of |top10(student English view) ∩ top10(teacher)| / 10; an operational proxy for how grounded the English view stays";

impl AblationReport {
    pub fn record(&self, config: &str) -> Option<&AblationRecord> {
        self.records.iter().find(|r| r.config == config)
    }

    pub fn to_json(&self) -> String {
        let v = serde_json::json!({
            "overlap_definition": OVERLAP_DEFINITION,
            "records": self.records,
        });
        serde_json::to_string_pretty(&v).expect("finite report values")
    }
}

/// `step,loss` lines with a header.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in trace.iter().enumerate() {
        writeln!(out, "{i},{l}").expect("writing to a String");
    }
    out
}

/// Trains every ablation configuration on one synthetic world. The connector
/// variants share a single pretraining run.
pub fn run_ablation_matrix(base: &TrainConfig) -> Result<AblationReport> {
    let world = SynthWorld::generate(base)?;
    let mut pretrained: BTreeMap<ConnectorMode, (HeadParams, Vec<f64>)> = BTreeMap::new();
    let mut records = Vec::new();
    let mut traces = BTreeMap::new();
    let mut all_params = BTreeMap::new();
    for name in ABLATION_CONFIGS {
        let cfg = ablation_variant(base, name);
        let sap = if cfg.sap_enabled {
            if !pretrained.contains_key(&cfg.connector) {
                let done = run_sap(&world.bitext, initial_params(&cfg), &world.encoder, &world.teacher, &cfg)?;
                pretrained.insert(cfg.connector, done);
            }
            pretrained.get(&cfg.connector).cloned()
        } else {
            None
        };
        let outcome = train(&world, &cfg, sap)?;
        let eval = evaluate_params(&outcome.params, &world)?;
        let trace = outcome.trace();
        records.push(AblationRecord {
            config: name.to_string(),
            final_loss: trace.last().copied().unwrap_or(f64::NAN),
            overlap_at_10: eval.overlap_at_10,
            ndcg_at_10: eval.ndcg_at_10,
            steps: trace.len(),
        });
        traces.insert(name.to_string(), trace);
        all_params.insert(name.to_string(), outcome.params);
    }
    Ok(AblationReport {
        records,
        traces,
        params: all_params,
    })
}
