//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.
//!
//! Criterion 8 needs a DocRED copy: set `GRACR_DOCRED_DIR` to a directory
//! holding `train_annotated.json` and `rel_info.json`.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{edge_set, oracle_bridge, oracle_corpus, oracle_dlg, oracle_elg};
use gracr::corpus::{
    corpus_stats, generate_synthetic, load_docred, load_schema, tiny_document, Corpus, Document, GeneratorConfig,
    RelationSchema, Split,
};
use gracr::encoder::build_vocab;
use gracr::graphs::{build_dlg, build_elg, find_bridges, EdgeType, NodeRef, RelationalAdjacency};
use gracr::model::layers::{distance_bucket, rgcn_forward, RgcnLayer};
use gracr::model::{document_loss, forward_document, names, Model, ModelConfig, ModelError};
use gracr::numerics::{
    adam_step, bce_value, finite_difference_check, gaussian_init, logsumexp_rows, row_softmax, sigmoid, AdamConfig,
    AdamState, GradCheckOptions, ParamRegistry, Tape, Tensor,
};
use gracr::training::metrics::{fact_names, metrics_from_triples, tune_threshold_on, FactSet, Triple};
use gracr::training::{
    ablation_run, score_corpus, standard_variants, train_with, tune_threshold, AblationVariant, TrainConfig,
};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got:.12}, want {want:.12}"))
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("{what} took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

// 1. Builders against brute-force enumeration.
fn graph_oracle() -> Check {
    let start = Instant::now();
    let docs = oracle_corpus();
    let mut edges = 0;
    for doc in &docs {
        let dlg = build_dlg(doc).map_err(|e| e.to_string())?;
        let got = edge_set(dlg.edges.iter());
        ensure(got == oracle_dlg(doc), || format!("{}: mention/sentence graph differs", doc.title))?;
        let elg = build_elg(doc).map_err(|e| e.to_string())?;
        let got_e = edge_set(elg.edges.iter());
        ensure(got_e == oracle_elg(doc), || format!("{}: entity graph differs", doc.title))?;
        edges += got.len() + got_e.len();
    }
    within(start.elapsed(), Duration::from_secs(60), "graph check")?;
    Ok(format!(
        "{} documents, {edges} typed edges identical ({:.2}s)",
        docs.len(),
        start.elapsed().as_secs_f64()
    ))
}

// 2. LOGIC edges and bridge paths.
fn bridge_semantics() -> Check {
    let mut pairs = 0;
    let mut logic = 0;
    for doc in oracle_corpus() {
        let elg = build_elg(&doc).map_err(|e| e.to_string())?;
        let n = doc.entities.len();
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                pairs += 1;
                let bridges = find_bridges(&doc, i, j).map_err(|e| e.to_string())?;
                let has = elg.has_edge(EdgeType::Logic, i, j);
                ensure(has == !bridges.is_empty(), || format!("{} ({i},{j}): edge {has} vs bridges", doc.title))?;
                logic += usize::from(has);
                for b in &bridges {
                    let k = b.entity;
                    ensure(k != i && k != j, || format!("{}: bridge {k} is an endpoint", doc.title))?;
                    let h = &b.path.hops;
                    ensure(h.len() == 6, || format!("{}: path of {} hops", doc.title, h.len()))?;
                    let (s1, s2) = (h[1].index, h[4].index);
                    ensure(h[1] == NodeRef::sentence(s1) && h[4] == NodeRef::sentence(s2) && s1 != s2, || {
                        format!("{}: bad sentence hops {:?}", doc.title, h)
                    })?;
                    ensure(oracle_bridge(&doc, i, k, j) == Some((s1, s2)), || {
                        format!("{} ({i},{k},{j}): witness ({s1},{s2}) is not the smallest", doc.title)
                    })?;
                }
            }
        }
    }

    let t1 = tiny_document();
    let dlg = build_dlg(&t1).map_err(|e| e.to_string())?;
    let elg = build_elg(&t1).map_err(|e| e.to_string())?;
    let (m, s, e) = (NodeRef::mention, NodeRef::sentence, NodeRef::entity);
    let of = |t: EdgeType, g: &BTreeSet<(EdgeType, NodeRef, NodeRef)>| -> BTreeSet<(NodeRef, NodeRef)> {
        g.iter().filter(|x| x.0 == t).map(|x| (x.1, x.2)).collect()
    };
    let dset = edge_set(dlg.edges.iter());
    let eset = edge_set(elg.edges.iter());
    ensure(dlg.sentence_count == 2 && dlg.mentions.len() == 4, || "T1 node counts".into())?;
    ensure(of(EdgeType::MentionMention, &dset) == BTreeSet::from([(m(0), m(1)), (m(2), m(3))]), || "T1 MM".into())?;
    ensure(
        of(EdgeType::MentionSentence, &dset) == BTreeSet::from([(s(0), m(0)), (s(0), m(1)), (s(1), m(2)), (s(1), m(3))]),
        || "T1 MS".into(),
    )?;
    ensure(of(EdgeType::SentenceSentence, &dset) == BTreeSet::from([(s(0), s(1))]), || "T1 SS".into())?;
    ensure(of(EdgeType::Intra, &eset) == BTreeSet::from([(e(0), e(1)), (e(1), e(2))]), || "T1 INTRA".into())?;
    ensure(of(EdgeType::Logic, &eset) == BTreeSet::from([(e(0), e(2))]), || "T1 LOGIC".into())?;
    let b = find_bridges(&t1, 0, 2).map_err(|e| e.to_string())?;
    ensure(b.len() == 1 && b[0].entity == 1 && b[0].path.hops == vec![m(0), s(0), m(1), m(2), s(1), m(3)], || {
        format!("T1 bridge {b:?}")
    })?;
    ensure(find_bridges(&t1, 0, 1).map_err(|e| e.to_string())?.is_empty(), || "T1 (E0,E1) has a bridge".into())?;
    Ok(format!("{pairs} ordered pairs, {logic} LOGIC edges, all paths valid; T1 edge sets exact"))
}

// 3. Finite differences through the whole network.
fn gradient_check() -> Check {
    let start = Instant::now();
    let doc = tiny_document();
    ensure(doc.sentences.len() == 2 && doc.entities.len() == 3, || "demo document shape".into())?;
    let corpus = Corpus {
        documents: vec![doc.clone()],
        schema: RelationSchema::numbered(2),
        split: Split::Train,
    };
    let config = ModelConfig {
        n_relations: 2,
        ..Default::default()
    };
    let vocab = build_vocab(&corpus, 1).map_err(|e| e.to_string())?;
    let mut model = Model::new(config.clone(), vocab.clone(), corpus.schema.names.clone()).map_err(|e| e.to_string())?;
    let report = finite_difference_check(
        |tape: &mut Tape, reg: &ParamRegistry| -> Result<_, ModelError> {
            let f = forward_document(tape, &doc, reg, &config, &vocab)?;
            document_loss(tape, &doc, &f, config.n_relations, None)
        },
        &mut model.params,
        GradCheckOptions {
            step: 1e-3,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let uncovered: Vec<&str> = report
        .per_param
        .iter()
        .filter(|p| p.checked == 0)
        .map(|p| p.name.as_str())
        .collect();
    ensure(uncovered.is_empty(), || format!("no coordinates checked for {uncovered:?}"))?;
    ensure(report.per_param.len() == model.params.len(), || "not every parameter visited".into())?;
    ensure(report.max_rel_error < 1e-4, || {
        format!("max relative error {:.3e} at {}[{}]", report.max_rel_error, report.worst_param, report.worst_coord)
    })?;
    within(start.elapsed(), Duration::from_secs(120), "gradient check")?;
    Ok(format!(
        "max rel err {:.2e} over {} coordinates in {} tensors ({} skipped at ReLU/clip kinks), {:.1}s",
        report.max_rel_error,
        report.checked,
        report.per_param.len(),
        report.kinks_skipped,
        start.elapsed().as_secs_f64()
    ))
}

// 4. Closed-form values.
fn analytic_values() -> Check {
    let tol = 1e-9;
    let ln2 = 2f64.ln();
    let lse = |rows: &[&[f64]]| logsumexp_rows(&Tensor::from_rows(rows)).map_err(|e| e.to_string());
    let r = lse(&[&[0.5, -1.0]])?;
    close(r.get(0, 0), 0.5, tol, "lse single")?;
    close(r.get(0, 1), -1.0, tol, "lse single")?;
    let r = lse(&[&[0.2, 0.3], &[0.2, 0.3]])?;
    close(r.get(0, 0), 0.2 + ln2, tol, "lse identical rows")?;
    close(r.get(0, 1), 0.3 + ln2, tol, "lse identical rows")?;
    let r = lse(&[&[0.0, 1.0], &[1.0, 0.0]])?;
    let want = (1.0 + std::f64::consts::E).ln();
    close(r.get(0, 0), want, tol, "lse [0,1],[1,0]")?;
    close(r.get(0, 1), want, tol, "lse [0,1],[1,0]")?;
    let r = lse(&[&[1000.0], &[1000.0]])?;
    close(r.get(0, 0), 1000.0 + ln2, tol, "lse at 1000")?;

    let sm = |row: &[f64]| row_softmax(&Tensor::row_vector(row));
    close(sm(&[7.3]).get(0, 0), 1.0, tol, "softmax 1x1")?;
    let u = sm(&[2.0, 2.0, 2.0, 2.0]);
    for c in 0..4 {
        close(u.get(0, c), 0.25, tol, "softmax equal logits")?;
    }
    let s = sm(&[0.0, 3f64.ln()]);
    close(s.get(0, 0), 0.25, tol, "softmax [0, ln 3]")?;
    close(s.get(0, 1), 0.75, tol, "softmax [0, ln 3]")?;

    close(bce_value(&[0.5], &[1.0]), ln2, tol, "bce y=0.5")?;
    ensure(bce_value(&[1.0, 0.0], &[1.0, 0.0]) < 1e-10, || "bce perfect prediction".into())?;
    close(bce_value(&[1e-20], &[1.0]), -(1e-12f64).ln(), tol, "bce clipped")?;
    close(sigmoid(10.0), 1.0 / (1.0 + (-10f64).exp()), tol, "sigmoid(10)")?;

    // Adam, first step with g = 1.
    let mut reg = ParamRegistry::new();
    reg.insert("p", Tensor::scalar(0.7)).map_err(|e| e.to_string())?;
    reg.insert("q", Tensor::scalar(-0.2)).map_err(|e| e.to_string())?;
    let mut state = AdamState::new(&reg, AdamConfig::default());
    reg.get_mut("p").unwrap().accumulate_grad(&[1.0]);
    reg.get_mut("q").unwrap().accumulate_grad(&[0.0]);
    adam_step(&mut reg, &mut state).map_err(|e| e.to_string())?;
    let moved = 0.7 - reg.get("p").unwrap().data()[0];
    close(moved, 1e-3 / (1.0 + 1e-8), tol, "adam first step")?;
    close(moved, 1e-3, tol, "adam first step ~ lr")?;
    close(reg.get("q").unwrap().data()[0], -0.2, 0.0, "adam zero gradient")?;

    // Reverse mode: d(p^2)/dp at 3, and d logsumexp / dv = softmax(v).
    let mut reg = ParamRegistry::new();
    reg.insert("p", Tensor::scalar(3.0)).map_err(|e| e.to_string())?;
    reg.insert("v", Tensor::new(3, 1, vec![0.1, 2.0, -0.4]).unwrap()).map_err(|e| e.to_string())?;
    let mut tape = Tape::new();
    let p = tape.param(&reg, "p").map_err(|e| e.to_string())?;
    let sq = tape.matmul(p, p).map_err(|e| e.to_string())?;
    let v = tape.param(&reg, "v").map_err(|e| e.to_string())?;
    let l = tape.logsumexp_rows(v).map_err(|e| e.to_string())?;
    let total = tape.add(sq, l).map_err(|e| e.to_string())?;
    tape.backward(total, &mut reg).map_err(|e| e.to_string())?;
    close(reg.get("p").unwrap().grad().unwrap()[0], 6.0, tol, "d p^2")?;
    let soft = row_softmax(&Tensor::row_vector(&[0.1, 2.0, -0.4]));
    for (i, g) in reg.get("v").unwrap().grad().unwrap().iter().enumerate() {
        close(*g, soft.get(0, i), tol, "d logsumexp")?;
    }

    let bounds = ModelConfig::default().bucket_bounds;
    ensure(
        distance_bucket(0, &bounds) == 0 && distance_bucket(9, &bounds) == 5 && distance_bucket(-70, &bounds) == -8,
        || "distance buckets".into(),
    )?;
    Ok("logsumexp, softmax, BCE, sigmoid, Adam, backward and bucket examples within 1e-9".into())
}

// 5. Memorising a small synthetic corpus.
fn overfit() -> Check {
    let start = Instant::now();
    let schema = RelationSchema::numbered(4);
    let knobs = GeneratorConfig {
        inter_fraction: 0.5,
        ..Default::default()
    };
    let corpus = generate_synthetic(7, 20, &schema, &knobs).map_err(|e| e.to_string())?;
    let model_cfg = ModelConfig {
        n_relations: 4,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        epochs: 200,
        ..Default::default()
    };
    let out = train_with(&corpus, &corpus, &model_cfg, &train_cfg, |_| {}).map_err(|e| e.to_string())?;
    let scores = score_corpus(&out.model, &corpus).map_err(|e| e.to_string())?;
    let (threshold, f1) = tune_threshold(&corpus, &scores, train_cfg.threshold_step).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!(
        "train F1 {f1:.4} at threshold {threshold:.2} (best epoch {}, {:.1}s)",
        out.best_epoch,
        elapsed.as_secs_f64()
    );
    ensure(f1 >= 0.95, || detail.clone())?;
    within(elapsed, Duration::from_secs(600), "overfit run")?;
    Ok(detail)
}

// 6. Reasoning module on bridge-heavy data.
fn ablation_direction() -> Check {
    let schema = RelationSchema::numbered(4);
    let knobs = GeneratorConfig {
        inter_fraction: 0.8,
        ..Default::default()
    };
    let variants: Vec<AblationVariant> = standard_variants()
        .into_iter()
        .filter(|v| v.label == "GRACR" || v.label == "w/o reasoning module")
        .collect();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=5u64 {
        let train = generate_synthetic(100 + seed, 100, &schema, &knobs).map_err(|e| e.to_string())?;
        let dev = generate_synthetic(200 + seed, 30, &schema, &knobs).map_err(|e| e.to_string())?;
        let model = ModelConfig {
            n_relations: 4,
            seed,
            ..Default::default()
        };
        let train_cfg = TrainConfig {
            seed,
            ..Default::default()
        };
        let table = ablation_run(&train, &dev, &model, &train_cfg, &variants).map_err(|e| e.to_string())?;
        let full = table.row("GRACR").unwrap().metrics.inter_f1;
        let reduced = table.row("w/o reasoning module").unwrap().metrics.inter_f1;
        wins += usize::from(full >= reduced);
        rows.push(format!("{full:.3}/{reduced:.3}"));
    }
    let detail = format!("full >= w/o reasoning inter-F1 in {wins}/5 seeds [{}]", rows.join(", "));
    ensure(wins >= 4, || detail.clone())?;
    Ok(detail)
}

fn share_sentence(doc: &Document, a: usize, b: usize) -> bool {
    let sa: HashSet<usize> = doc.entities[a].mentions.iter().map(|m| m.sentence_index).collect();
    doc.entities[b].mentions.iter().any(|m| sa.contains(&m.sentence_index))
}

fn gold_of(corpus: &Corpus) -> BTreeSet<Triple> {
    corpus
        .documents
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.facts.iter().map(move |f| (d, f.head, f.tail, f.relation)))
        .collect()
}

// 7. Hand-counted metrics and the intra/inter partition.
fn metric_correctness() -> Check {
    // Four entities, each alone in its own sentence; A..D are four triples.
    let mut doc = tiny_document();
    doc.facts.clear();
    let corpus = Corpus {
        documents: vec![doc],
        schema: RelationSchema::numbered(2),
        split: Split::Dev,
    };
    let (a, b, c, d): (Triple, Triple, Triple, Triple) = ((0, 0, 1, 0), (0, 1, 2, 1), (0, 0, 2, 0), (0, 2, 0, 1));
    let gold = BTreeSet::from([a, b, c]);
    let pred = BTreeSet::from([a, b, d]);
    let m = metrics_from_triples(&corpus, &gold, &pred, 0.5, None);
    for (v, what) in [(m.precision, "P"), (m.recall, "R"), (m.f1, "F1")] {
        close(v, 2.0 / 3.0, 1e-12, what)?;
    }
    let doc0 = &corpus.documents[0];
    let train: FactSet = HashSet::from([(doc0.entities[0].name().to_string(), doc0.entities[1].name().to_string(), 0)]);
    let m = metrics_from_triples(&corpus, &gold, &pred, 0.5, Some(&train));
    close(m.ign_f1.unwrap_or(f64::NAN), 0.5, 1e-12, "Ign F1")?;
    let m = metrics_from_triples(&corpus, &gold, &BTreeSet::new(), 0.5, None);
    ensure(m.precision == 0.0 && m.recall == 0.0 && m.f1 == 0.0, || "empty prediction set".into())?;

    let (t, _) = tune_threshold_on(&[(0.9, true), (0.2, false)], 1, 0.1).map_err(|e| e.to_string())?;
    close(t, 0.3, 1e-12, "threshold grid 0.1")?;
    let (t, _) = tune_threshold_on(&[(0.6, true)], 1, 0.5).map_err(|e| e.to_string())?;
    close(t, 0.5, 1e-12, "threshold grid 0.5")?;

    // Partition on every corpus used by this suite.
    let schema = RelationSchema::numbered(4);
    let mut corpora = vec![Corpus {
        documents: oracle_corpus(),
        schema: RelationSchema::numbered(3),
        split: Split::Train,
    }];
    corpora.push(generate_synthetic(7, 20, &schema, &GeneratorConfig::default()).map_err(|e| e.to_string())?);
    let heavy = GeneratorConfig {
        inter_fraction: 0.8,
        ..Default::default()
    };
    for seed in 1..=5u64 {
        corpora.push(generate_synthetic(100 + seed, 100, &schema, &heavy).map_err(|e| e.to_string())?);
        corpora.push(generate_synthetic(200 + seed, 30, &schema, &heavy).map_err(|e| e.to_string())?);
    }
    let mut facts = 0;
    for corpus in &corpora {
        let gold = gold_of(corpus);
        let m = metrics_from_triples(corpus, &gold, &gold, 0.5, Some(&fact_names(corpus)));
        let intra = gold.iter().filter(|t| share_sentence(&corpus.documents[t.0], t.1, t.2)).count();
        ensure(m.intra.tp == intra && m.inter.tp == gold.len() - intra && m.all.tp == gold.len(), || {
            format!("intra {} + inter {} vs gold {} (oracle intra {intra})", m.intra.tp, m.inter.tp, gold.len())
        })?;
        ensure(m.intra.fp + m.inter.fp + m.intra.fn_ + m.inter.fn_ == 0, || "perfect prediction has errors".into())?;
        facts += gold.len();
    }
    Ok(format!(
        "P/R/F1 = 2/3, Ign F1 = 1/2, empty = 0, thresholds 0.3 and 0.5; partition holds on {} corpora ({facts} facts)",
        corpora.len()
    ))
}

// 8. DocRED ingestion and a forward pass.
fn docred_check() -> Outcome {
    let Some(dir) = std::env::var_os("GRACR_DOCRED_DIR") else {
        return Outcome::Skip("GRACR_DOCRED_DIR not set".into());
    };
    let dir = Path::new(&dir);
    let run = || -> Check {
        let schema = load_schema(&dir.join("rel_info.json")).map_err(|e| e.to_string())?;
        let corpus = load_docred(&dir.join("train_annotated.json"), &schema, Split::Train).map_err(|e| e.to_string())?;
        let stats = corpus_stats(&corpus);
        let mean = stats.entities as f64 / stats.documents as f64;
        ensure(stats.documents == 3053, || format!("{} documents, want 3053", stats.documents))?;
        ensure(stats.relation_types == 97, || format!("{} relations, want 97", stats.relation_types))?;
        ensure((mean - 19.5).abs() <= 0.1, || format!("mean entities/doc {mean:.3}, want 19.5 +- 0.1"))?;

        let sample = Corpus {
            documents: corpus.documents[..10].to_vec(),
            schema: corpus.schema.clone(),
            split: Split::Train,
        };
        let config = ModelConfig {
            n_relations: 97,
            ..Default::default()
        };
        let vocab = build_vocab(&sample, 1).map_err(|e| e.to_string())?;
        let model = Model::new(config, vocab, corpus.schema.names.clone()).map_err(|e| e.to_string())?;
        let mut rows = 0;
        for doc in &sample.documents {
            let (pairs, probs) = model.score(doc).map_err(|e| e.to_string())?;
            let n = doc.entities.len();
            ensure(pairs.len() == n * (n - 1) && probs.shape() == (pairs.len(), 97), || {
                format!("{}: probability table {:?}", doc.title, probs.shape())
            })?;
            ensure(probs.data().iter().all(|&p| p > 0.0 && p < 1.0), || format!("{}: probability outside (0,1)", doc.title))?;
            rows += pairs.len();
        }
        Ok(format!("3053 documents, 97 relations, {mean:.2} entities/doc; {rows} pair rows well-formed"))
    };
    match run() {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gracr"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("gracr {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn permute_rows(t: &Tensor, new_of: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for (old, &new) in new_of.iter().enumerate() {
        for c in 0..t.cols() {
            out.set(new, c, t.get(old, c));
        }
    }
    out
}

/// Runs the trained mention/sentence convolution stack on `states` with
/// node rows renumbered by `new_of`.
fn dlg_convolution(model: &Model, doc: &Document, states: &Tensor, new_of: &[usize]) -> Result<Tensor, String> {
    let graph = build_dlg(doc).map_err(|e| e.to_string())?;
    let edges = graph
        .edges
        .iter()
        .map(|e| (e.edge_type, new_of[graph.row_of(e.a)], new_of[graph.row_of(e.b)]));
    let adjacency = RelationalAdjacency::from_edges(states.rows(), &EdgeType::DOCUMENT, edges);
    let mut tape = Tape::new();
    let mut layers = Vec::new();
    let p = |tape: &mut Tape, name: String| tape.param(&model.params, &name).map_err(|e| e.to_string());
    for l in 0..model.config.layers {
        layers.push(RgcnLayer {
            self_weight: p(&mut tape, names::dlg(l, "self"))?,
            edge_weights: vec![
                (EdgeType::MentionMention, p(&mut tape, names::dlg(l, "MM"))?),
                (EdgeType::MentionSentence, p(&mut tape, names::dlg(l, "MS"))?),
                (EdgeType::SentenceSentence, p(&mut tape, names::dlg(l, "SS"))?),
            ],
        });
    }
    let x = tape.constant(permute_rows(states, new_of)).map_err(|e| e.to_string())?;
    let out = rgcn_forward(&mut tape, &adjacency, x, &layers).map_err(|e| e.to_string())?;
    Ok(tape.value(out).clone())
}

// 9. Reproducible training and exact permutation behaviour.
fn determinism() -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    run_cli(&["synth", "--seed", "21", "--docs", "8", "--output", &p("train.json")])?;
    run_cli(&["synth", "--seed", "22", "--docs", "4", "--output", &p("dev.json")])?;
    for run in ["a", "b"] {
        run_cli(&[
            "train", "--seed", "5", "--epochs", "3", "--train", &p("train.json"), "--dev", &p("dev.json"), "--out", &p(run),
        ])?;
    }
    for file in ["train_log.jsonl", "checkpoint.json", "vocab.tsv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(file)).map_err(|e| e.to_string())?;
        let b = fs::read(dir.path().join("b").join(file)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{file} differs between identical runs"))?;
    }

    // Entity relabelling permutes output rows exactly.
    let corpus = Corpus::read(Path::new(&p("train.json"))).map_err(|e| e.to_string())?;
    let model = Model::new(
        ModelConfig {
            n_relations: corpus.schema.count(),
            seed: 9,
            ..Default::default()
        },
        build_vocab(&corpus, 1).map_err(|e| e.to_string())?,
        corpus.schema.names.clone(),
    )
    .map_err(|e| e.to_string())?;
    let mut relabelled = 0;
    for (i, doc) in corpus.documents.iter().enumerate() {
        let n = doc.entities.len();
        let (pairs, base) = model.score(doc).map_err(|e| e.to_string())?;
        let order: Vec<usize> = (0..n).map(|k| (k * 5 + i + 1) % n).collect();
        if order.iter().collect::<HashSet<_>>().len() != n {
            continue;
        }
        let mut new_of = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_of[old] = new;
        }
        let (pairs2, probs2) = model.score(&doc.reorder_entities(&order)).map_err(|e| e.to_string())?;
        for (r, &(h, t)) in pairs.iter().enumerate() {
            let r2 = pairs2.iter().position(|&q| q == (new_of[h], new_of[t])).unwrap();
            ensure(base.row(r) == probs2.row(r2), || format!("{}: pair ({h},{t}) changed under relabelling", doc.title))?;
        }
        relabelled += 1;
    }
    ensure(relabelled >= 4, || "too few relabelling cases".into())?;

    // Reindexing graph nodes permutes convolution outputs exactly.
    let doc = &corpus.documents[0];
    let rows = doc.sentences.len() + doc.mention_count();
    let states = gaussian_init((rows, model.config.d_n()), 1.0, 17);
    let identity: Vec<usize> = (0..rows).collect();
    let base = dlg_convolution(&model, doc, &states, &identity)?;
    let shuffled: Vec<usize> = (0..rows).map(|r| (r * 7 + 3) % rows).collect();
    ensure(shuffled.iter().collect::<HashSet<_>>().len() == rows, || "not a permutation".into())?;
    let moved = dlg_convolution(&model, doc, &states, &shuffled)?;
    ensure(permute_rows(&base, &shuffled) == moved, || "node reindexing changed convolution output".into())?;

    Ok(format!(
        "identical logs, checkpoints, vocab and summary over two runs; {relabelled} relabelled documents and a {rows}-node reindexing exact"
    ))
}

fn main() {
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "graph-oracle equivalence", Box::new(|| lift(graph_oracle()))),
        (2, "bridge semantics", Box::new(|| lift(bridge_semantics()))),
        (3, "gradient correctness", Box::new(|| lift(gradient_check()))),
        (4, "analytic unit values", Box::new(|| lift(analytic_values()))),
        (5, "overfit experiment", Box::new(|| lift(overfit()))),
        (6, "ablation direction", Box::new(|| lift(ablation_direction()))),
        (7, "metric correctness", Box::new(|| lift(metric_correctness()))),
        (8, "dataset check", Box::new(docred_check)),
        (9, "determinism", Box::new(|| lift(determinism()))),
    ];
    // Criterion numbers given on the command line select a subset.
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, title, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n} {tag} {title}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn lift(c: Check) -> Outcome {
    match c {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}
