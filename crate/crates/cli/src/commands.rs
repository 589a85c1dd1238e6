use std::fmt::Write as _;
use std::path::Path;

use milco_core::eval::{evaluate_run, load_qrels, load_run, write_qrels, write_run, Metric, RunList};
use milco_core::index::{build_index_with_vocab, read_index, search, PruneSpec, VocabSizes};
use milco_core::lexecho::{encode_dual_view, HeadParams, ToyEncoderParams, Tokenizer};
use milco_core::repr::jsonl;
use milco_core::training::{
    initial_params, run_ablation_matrix, run_sap, run_sct, trace_csv, SctMode, SynthWorld, TrainConfig,
};
use milco_core::vocab::{Vocab, Vocabularies};
use rayon::prelude::*;

use crate::fail::{CliResult, Failure};
use crate::files::{self, write_atomic};
use crate::{Command, EncodeArgs, EvalArgs, IndexArgs, InitArgs, InspectArgs, SearchArgs, TrainArgs, TrainMode};

pub fn run(cmd: &Command) -> CliResult {
    eprintln!("{}", serde_json::to_string(cmd).expect("arguments serialize"));
    let threads = match cmd {
        Command::Search(a) => a.threads,
        Command::Train(a) => a.threads,
        _ => 1,
    };
    if threads == 0 {
        return Err(Failure::usage("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::Init(a) => init(a),
        Command::Encode(a) => encode(a),
        Command::Index(a) => index(a),
        Command::Search(a) => search_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Inspect(a) => inspect(a),
        Command::Train(a) => train(a),
    })
}

fn parse_spec(s: &str) -> CliResult<PruneSpec> {
    s.parse().map_err(|e: milco_core::Error| Failure::usage(e.to_string()))
}

fn vocab_bytes(v: &Vocab) -> Vec<u8> {
    let mut out = Vec::new();
    v.write_to(&mut out).expect("writing to memory");
    out
}

fn check_vocab_sizes(params: &HeadParams, vocabs: &Vocabularies) -> CliResult {
    let d = params.dims();
    if vocabs.english.len() != d.v_e || vocabs.source.len() != d.source_vocab {
        return Err(Failure::usage(format!(
            "vocabulary sizes ({} English, {} source) do not match the parameters ({}, {})",
            vocabs.english.len(),
            vocabs.source.len(),
            d.v_e,
            d.source_vocab
        )));
    }
    Ok(())
}

fn render(tokens: &[u32], vocab: &Vocab) -> String {
    let words: Vec<&str> = tokens.iter().map(|&t| vocab.token(t).expect("generated ids are in range")).collect();
    words.join(" ")
}

fn init(a: &InitArgs) -> CliResult {
    let cfg = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    };
    let world = SynthWorld::generate(&cfg)?;
    let english = world.lexicon.english_vocab();
    let source = world.lexicon.source_vocab();
    let set = &world.retrieval;
    let tsv = |texts: &[milco_core::training::RetrievalText]| {
        let mut out = String::new();
        for t in texts {
            writeln!(out, "{}\t{}", t.id, render(t.source.tokens(), &source)).expect("writing to a String");
        }
        out
    };
    let mut qrels = Vec::new();
    write_qrels(&mut qrels, &set.judgments(&set.eval_queries))?;
    let dir = &a.out_dir;
    write_atomic(&dir.join("english.txt"), &vocab_bytes(&english))?;
    write_atomic(&dir.join("source.txt"), &vocab_bytes(&source))?;
    write_atomic(&dir.join("params.bin"), &initial_params(&cfg).to_bytes())?;
    write_atomic(&dir.join("docs.tsv"), tsv(&set.docs).as_bytes())?;
    write_atomic(&dir.join("queries.tsv"), tsv(&set.eval_queries).as_bytes())?;
    write_atomic(&dir.join("qrels.txt"), &qrels)?;
    let config = serde_json::to_string_pretty(&cfg).expect("config serializes");
    write_atomic(&dir.join("config.json"), config.as_bytes())
}

fn encode(a: &EncodeArgs) -> CliResult {
    let params = files::load_params(&a.params)?;
    let vocabs = files::load_vocabs(&a.vocab.english_vocab, &a.vocab.source_vocab)?;
    check_vocab_sizes(&params, &vocabs)?;
    let tokenizer = Tokenizer::new(vocabs.source.clone()).map_err(|e| Failure::at(&a.vocab.source_vocab, e))?;
    let corpus = files::load_corpus(&a.input, &tokenizer)?;
    let d = params.dims();
    let enc = ToyEncoderParams::from_seed(a.seed, d.source_vocab, d.d_l, a.radius);
    let mut seen = std::collections::HashSet::new();
    let mut out = String::new();
    for (id, seq) in &corpus {
        if !seen.insert(id.as_str()) {
            return Err(Failure::usage(format!("{}: duplicate id {id:?}", a.input.display())));
        }
        let repr = encode_dual_view(seq, &enc, &params)?;
        out.push_str(&jsonl::to_line(id, &repr, &vocabs)?);
        out.push('\n');
    }
    write_atomic(&a.out, out.as_bytes())
}

fn index(a: &IndexArgs) -> CliResult {
    let spec = parse_spec(&a.prune)?;
    let vocabs = files::load_vocabs(&a.vocab.english_vocab, &a.vocab.source_vocab)?;
    let docs = files::load_reprs(&a.reprs, &vocabs)?;
    let sizes = VocabSizes {
        english: vocabs.english.len() as u32,
        source: vocabs.source.len() as u32,
    };
    let idx = build_index_with_vocab(docs.iter().map(|(id, r)| (id.as_str(), r)), &spec, sizes)?;
    write_atomic(&a.out, &idx.to_bytes())
}

fn search_cmd(a: &SearchArgs) -> CliResult {
    let spec = parse_spec(&a.prune_query)?;
    if a.tag.is_empty() || a.tag.chars().any(char::is_whitespace) {
        return Err(Failure::usage("--tag must be a single non-empty word"));
    }
    files::require(&a.index)?;
    let idx = read_index(&a.index).map_err(|e| Failure::at(&a.index, e))?;
    let vocabs = files::load_vocabs(&a.vocab.english_vocab, &a.vocab.source_vocab)?;
    let queries = files::load_reprs(&a.queries, &vocabs)?;
    let results: Vec<(String, Vec<(String, f64)>)> = queries
        .par_iter()
        .map(|(id, q)| (id.clone(), search(&idx, q, a.top_n, &spec)))
        .collect();
    let mut run = RunList::new();
    for (id, hits) in results {
        if !hits.is_empty() {
            run.insert(id, hits)?;
        }
    }
    let mut out = Vec::new();
    write_run(&mut out, &run, &a.tag)?;
    write_atomic(&a.out, &out)
}

fn eval(a: &EvalArgs) -> CliResult {
    let metrics: Vec<Metric> = a
        .metrics
        .split(',')
        .map(|m| m.trim().parse().map_err(|e: milco_core::Error| Failure::usage(e.to_string())))
        .collect::<CliResult<_>>()?;
    files::require(&a.run)?;
    files::require(&a.qrels)?;
    let run = load_run(&a.run).map_err(|e| Failure::at(&a.run, e))?;
    let judg = load_qrels(&a.qrels).map_err(|e| Failure::at(&a.qrels, e))?;
    let report = evaluate_run(&run, &judg, &metrics);
    if report.warnings() > 0 {
        eprintln!(
            "warning: {} run queries without relevant documents, {} unjudged, {} judged queries missing from the run",
            report.excluded_no_relevant, report.unjudged, report.missing_from_run
        );
    }
    let mut text = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
    text.push('\n');
    match &a.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn inspect(a: &InspectArgs) -> CliResult {
    let vocabs = files::load_vocabs(&a.vocab.english_vocab, &a.vocab.source_vocab)?;
    let docs = files::load_reprs(&a.reprs, &vocabs)?;
    let (_, repr) = docs
        .iter()
        .find(|(id, _)| *id == a.id)
        .ok_or_else(|| Failure::domain(format!("id {:?} not found in {}", a.id, a.reprs.display())))?;
    let mut out = format!("{}\tenglish={}\tsource={}\n", a.id, repr.english().nnz(), repr.source().nnz());
    for (name, view) in [("english", repr.english()), ("source", repr.source())] {
        for (key, w) in view.ranked().into_iter().take(a.m) {
            writeln!(out, "{name}\t{}\t{w:.6}", vocabs.resolve(key)?).expect("writing to a String");
        }
    }
    print!("{out}");
    Ok(())
}

fn train(a: &TrainArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_str(&files::read_text(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        None if matches!(a.mode, TrainMode::Ablation) => TrainConfig::ablation(),
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    eprintln!("{}", serde_json::to_string(&cfg).expect("config serializes"));
    let world = SynthWorld::generate(&cfg)?;
    let dir = &a.out_dir;
    match a.mode {
        TrainMode::Sap => {
            let (params, trace) = run_sap(&world.bitext, initial_params(&cfg), &world.encoder, &world.teacher, &cfg)?;
            write_atomic(&dir.join("sap_trace.csv"), trace_csv(&trace).as_bytes())?;
            write_atomic(&dir.join("params.bin"), &params.to_bytes())
        }
        TrainMode::Sct => {
            if cfg.sct_mode == SctMode::Off {
                return Err(Failure::usage("sct_mode is off; nothing to train"));
            }
            let start = match &a.init {
                Some(path) => load_compatible(path, &cfg)?,
                None => initial_params(&cfg),
            };
            let (params, trace) = run_sct(&world.sct_data(), start, &world.encoder, &cfg)?;
            write_atomic(&dir.join("sct_trace.csv"), trace_csv(&trace).as_bytes())?;
            write_atomic(&dir.join("params.bin"), &params.to_bytes())
        }
        TrainMode::Ablation => {
            let report = run_ablation_matrix(&cfg)?;
            for (name, trace) in &report.traces {
                let file = format!("trace_{}.csv", name.replace('+', "_"));
                write_atomic(&dir.join(file), trace_csv(trace).as_bytes())?;
            }
            let mut json = report.to_json();
            json.push('\n');
            write_atomic(&dir.join("report.json"), json.as_bytes())
        }
    }
}

fn load_compatible(path: &Path, cfg: &TrainConfig) -> CliResult<HeadParams> {
    let params = files::load_params(path)?;
    if params.dims() != cfg.dims {
        return Err(Failure::usage(format!(
            "{}: parameter dimensions {:?} differ from the config's {:?}",
            path.display(),
            params.dims(),
            cfg.dims
        )));
    }
    Ok(params)
}
