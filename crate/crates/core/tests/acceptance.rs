//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fs::File;
use std::io::BufReader;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use amrkit::augmentation::{ingest, plan, prompt_for, Provenance, DEFAULT_TEMPLATE};
use amrkit::bridge::{
    run_conformance, spawn_tcp_fixture, BridgeClient, BridgeEndpoint, BridgeError, ConformanceOptions, FixtureConfig,
    GenerateBehavior, PredictBehavior, FIXTURE_TIMEOUT,
};
use amrkit::classifiers::{
    loss_and_gradient, predict_batch, train_kmer_nb, train_softmax, FeatureKind, InputSpec, TrainConfig, TrainedModel,
};
use amrkit::classifiers::features::SparseVec;
use amrkit::dataset::{filter_rare_classes, merge, split, Bucket, Fractions};
use amrkit::ensemble::{tune_weights, TuneConfig};
use amrkit::metrics::{report, ConfusionMatrix};
use amrkit::ontology::{build_gene_family_mapping, ClassMapping, LocalLookup, OntologyGraph, OntologyTerm, UnmappedPolicy};
use amrkit::read_sim::{build_reads_dataset, reverse_complement, simulate, ReadAmount, ReadProfile};
use amrkit::rng::SplitMix64;
use amrkit::seq_io::{read_records, CardMetadata, HeaderSchema, IngestOptions};
use amrkit::synth::{two_modality_dataset, SynthConfig};
use amrkit::text_format::{render, AttributePair, MarkerStyle, RenderOptions};
use amrkit::tokenizer::{kmer_tokenize, KmerVocabulary};
use amrkit::{Classifier, Dataset, LabelAxis, Modality, ModelInput, ProbabilityVector, SourceDb};
use common::{fixture, macro_f1_oracle};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_seq(rng: &mut SplitMix64, len: usize, alphabet: &[u8]) -> String {
    (0..len).map(|_| alphabet[rng.below(alphabet.len() as u64) as usize] as char).collect()
}

fn open(name: &str) -> BufReader<File> {
    BufReader::new(File::open(fixture(name)).expect("fixture file"))
}

/// Fixture pipeline on the drug-class axis, before the rare-class filter.
fn fixture_merged() -> Dataset {
    let g = OntologyGraph::load(open("aro.tsv")).unwrap();
    let meta = CardMetadata::parse(open("card_metadata.tsv")).unwrap();
    let opts = |db, m| IngestOptions { source_db: db, metadata: m, include_flagged: false };
    let card = read_records(open("card.fasta"), &HeaderSchema::card(), &opts(SourceDb::Card, Some(&meta))).unwrap();
    let meg = read_records(open("megares.fasta"), &HeaderSchema::megares(), &opts(SourceDb::Megares, None)).unwrap();
    let card = Dataset::from_labeled(card, LabelAxis::DrugClass).unwrap().0;
    let meg = Dataset::from_labeled(meg, LabelAxis::DrugClass).unwrap().0;
    let families = card.records().iter().chain(meg.records()).filter_map(|r| r.labels.gene_family.as_deref());
    let maps = vec![
        ClassMapping::default_drug_class(UnmappedPolicy::Drop),
        ClassMapping::default_mechanism(UnmappedPolicy::Drop),
        build_gene_family_mapping(families, &g, &LocalLookup::new(&g), 2, UnmappedPolicy::Drop).unwrap(),
    ];
    merge(&card, &meg, &maps).unwrap()
}

fn fixture_dataset() -> Dataset {
    filter_rare_classes(&fixture_merged(), 15).unwrap()
}

fn seq_spec() -> InputSpec {
    InputSpec::sequence(LabelAxis::DrugClass)
}

fn text_spec() -> InputSpec {
    InputSpec::text(LabelAxis::DrugClass, MarkerStyle::TypedEntityMarkerPunct)
}

fn member_f1(model: &TrainedModel, ds: &Dataset) -> Result<f64, String> {
    let probs = predict_batch(model, &model.spec.inputs_for(ds.records())).map_err(|e| e.to_string())?;
    let preds: Vec<usize> = probs.iter().map(ProbabilityVector::argmax).collect();
    Ok(macro_f1_oracle(&preds, ds.class_indices(), ds.class_vocab().len()))
}

// ---------------------------------------------------------------------------

fn metrics_oracle() -> Outcome {
    let vocab: Vec<String> = (0..10).map(|c| format!("c{c}")).collect();
    let mut rng = SplitMix64::new(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = 1 + rng.below(200) as usize;
        let golds: Vec<usize> = (0..n).map(|_| rng.below(10) as usize).collect();
        let preds: Vec<usize> =
            golds.iter().map(|&g| if rng.next_f64() < 0.5 { g } else { rng.below(10) as usize }).collect();
        let r = report(&ConfusionMatrix::from_indices(&preds, &golds, &vocab).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;

        let mut want = BTreeMap::new();
        let (mut p_sum, mut r_sum, mut f_sum, mut present) = (0.0, 0.0, 0.0, 0usize);
        for c in 0..10 {
            let tp = (0..n).filter(|&i| preds[i] == c && golds[i] == c).count() as f64;
            let pc = preds.iter().filter(|&&p| p == c).count() as f64;
            let gc = golds.iter().filter(|&&g| g == c).count() as f64;
            let prec = if pc > 0.0 { tp / pc } else { 0.0 };
            let rec = if gc > 0.0 { tp / gc } else { 0.0 };
            let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            want.insert(format!("precision{c}"), (prec, r.per_class[c].precision));
            want.insert(format!("recall{c}"), (rec, r.per_class[c].recall));
            want.insert(format!("f1{c}"), (f1, r.per_class[c].f1));
            if gc > 0.0 {
                present += 1;
                p_sum += prec;
                r_sum += rec;
                f_sum += f1;
            }
        }
        let acc = (0..n).filter(|&i| preds[i] == golds[i]).count() as f64 / n as f64;
        let k = present as f64;
        want.insert("accuracy".into(), (acc, r.accuracy));
        want.insert("macro_f1".into(), (f_sum / k, r.macro_f1));
        want.insert("macro_precision".into(), (p_sum / k, r.macro_precision));
        want.insert("macro_recall".into(), (r_sum / k, r.macro_recall));
        want.insert("balanced_accuracy".into(), (r_sum / k, r.balanced_accuracy));
        for (field, (a, b)) in want {
            let d = (a - b).abs();
            ensure(d <= 1e-12, || format!("{field}: oracle {a} vs report {b}"))?;
            worst = worst.max(d);
        }
    }
    let cm = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![2, 4]], vec!["a".into(), "b".into()]);
    let r = report(&cm).map_err(|e| e.to_string())?;
    ensure((r.accuracy - 0.7).abs() <= 1e-12, || format!("worked example accuracy {}", r.accuracy))?;
    ensure((r.macro_f1 - 0.6970).abs() <= 1e-4, || format!("worked example macro-F1 {}", r.macro_f1))?;
    Ok(format!("1000 sets, max deviation {worst:.1e}; worked example acc {:.4} macro-F1 {:.4}", r.accuracy, r.macro_f1))
}

fn ensemble_endpoint() -> Outcome {
    let cfg = TrainConfig { epochs: 150, ..TrainConfig::default() };
    let kmer_spec = seq_spec();
    let mut lines = Vec::new();
    let datasets = [
        ("fixture", fixture_dataset()),
        ("synthetic", two_modality_dataset(&SynthConfig { n_samples: 200, ..SynthConfig::default() }).unwrap()),
    ];
    for (name, ds) in datasets {
        for seed in [7u64, 8] {
            let m = split(&ds, seed, Fractions::default(), true).map_err(|e| e.to_string())?;
            let train = ds.select(&m, Bucket::Train).map_err(|e| e.to_string())?;
            let val = ds.select(&m, Bucket::Val).map_err(|e| e.to_string())?;
            let members: Vec<TrainedModel> = vec![
                train_kmer_nb(&train, kmer_spec, 6, 1.0).map_err(|e| e.to_string())?,
                train_kmer_nb(&train, kmer_spec, 3, 0.5).map_err(|e| e.to_string())?,
                train_softmax(&train, kmer_spec, FeatureKind::KmerFrequency { k: 3 }, &cfg).map_err(|e| e.to_string())?,
                train_softmax(&train, text_spec(), FeatureKind::BagOfWords, &cfg).map_err(|e| e.to_string())?,
            ];
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    let (a, b) = (&members[i], &members[j]);
                    let inputs: Vec<[ModelInput; 2]> =
                        val.records().iter().map(|r| [a.spec.input_for(r), b.spec.input_for(r)]).collect();
                    let t = tune_weights([a, b], &inputs, val.class_indices(), &TuneConfig::default())
                        .map_err(|e| e.to_string())?;
                    let best = member_f1(a, &val)?.max(member_f1(b, &val)?);
                    ensure(t.objective >= best, || {
                        format!("{name} split {seed} members {i},{j}: ensemble {} < member {best}", t.objective)
                    })?;
                    lines.push(t.objective - best);
                }
            }
        }
    }
    let min_gain = lines.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!("{} member pairs, minimum gain over best member {min_gain:.4}", lines.len()))
}

/// Bayes ceiling of macro-F1 for a model that sees only `signature(record)`.
/// Classes whose members share the same set of signatures cannot be told
/// apart; with equal class sizes the expected F1 summed over such a group is
/// at most 1, so the ceiling is the number of distinguishable groups over the
/// number of classes.
fn bayes_ceiling(ds: &Dataset, signature: impl Fn(&amrkit::SequenceRecord) -> String) -> f64 {
    let n = ds.class_vocab().len();
    let mut per_class: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
    for (i, r) in ds.records().iter().enumerate() {
        per_class[ds.class_index(i)].insert(signature(r));
    }
    let groups: BTreeSet<&BTreeSet<String>> = per_class.iter().collect();
    groups.len() as f64 / n as f64
}

/// The 20-mers shared by every member of the record's class that occur in
/// the record: the recoverable motif content of a sequence.
fn motif_signature(ds: &Dataset) -> impl Fn(&amrkit::SequenceRecord) -> String + '_ {
    let k = 20;
    let mers = move |s: &str| -> HashSet<String> { (0..=s.len().saturating_sub(k)).map(|i| s[i..i + k].to_string()).collect() };
    let mut shared: BTreeMap<usize, HashSet<String>> = BTreeMap::new();
    for (i, r) in ds.records().iter().enumerate() {
        let m = mers(&r.nucleotides);
        shared.entry(ds.class_index(i)).and_modify(|s| s.retain(|x| m.contains(x))).or_insert(m);
    }
    let all: BTreeSet<String> = shared.values().flatten().cloned().collect();
    move |r| {
        let m = mers(&r.nucleotides);
        all.iter().filter(|x| m.contains(*x)).cloned().collect::<Vec<_>>().join(",")
    }
}

fn directional() -> Outcome {
    let ds = two_modality_dataset(&SynthConfig::default()).map_err(|e| e.to_string())?;
    ensure(ds.class_counts().iter().all(|&c| c == 50), || "class sizes differ".into())?;
    let text_of = |r: &amrkit::SequenceRecord| text_spec().input_for(r).payload().to_string();
    let seq_sig = motif_signature(&ds);
    let seq_ceiling = bayes_ceiling(&ds, &seq_sig);
    let text_ceiling = bayes_ceiling(&ds, text_of);
    let joint_ceiling = bayes_ceiling(&ds, |r| format!("{}|{}", seq_sig(r), text_of(r)));
    ensure(seq_ceiling <= 0.65 && text_ceiling <= 0.65 && joint_ceiling >= 0.90, || {
        format!("ceilings seq {seq_ceiling} text {text_ceiling} joint {joint_ceiling}")
    })?;

    let m = split(&ds, 1, Fractions::default(), true).map_err(|e| e.to_string())?;
    let train = ds.select(&m, Bucket::Train).map_err(|e| e.to_string())?;
    let val = ds.select(&m, Bucket::Val).map_err(|e| e.to_string())?;
    let test = ds.select(&m, Bucket::Test).map_err(|e| e.to_string())?;
    let nb = train_kmer_nb(&train, seq_spec(), 6, 1.0).map_err(|e| e.to_string())?;
    let bow = train_softmax(&train, text_spec(), FeatureKind::BagOfWords, &TrainConfig::default())
        .map_err(|e| e.to_string())?;
    let pair_inputs = |d: &Dataset| -> Vec<[ModelInput; 2]> {
        d.records().iter().map(|r| [seq_spec().input_for(r), text_spec().input_for(r)]).collect()
    };
    let tuned = tune_weights([&nb, &bow], &pair_inputs(&val), val.class_indices(), &TuneConfig::default())
        .map_err(|e| e.to_string())?;
    let members: [&dyn Classifier; 2] = [&nb, &bow];
    let ens_preds: Vec<usize> = pair_inputs(&test)
        .iter()
        .map(|x| amrkit::ensemble::predict_ensemble(&members, &tuned.weights, x).map(|(c, _)| c))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let f_ens = macro_f1_oracle(&ens_preds, test.class_indices(), 10);
    let (f_nb, f_bow) = (member_f1(&nb, &test)?, member_f1(&bow, &test)?);
    let detail = format!(
        "test macro-F1 k-mer NB {f_nb:.4}, bag-of-words {f_bow:.4}, ensemble {f_ens:.4} (w = {:?}); Bayes ceilings {seq_ceiling:.2}/{text_ceiling:.2}/{joint_ceiling:.2}",
        tuned.weights.as_slice()
    );
    ensure(f_nb <= 0.65 && f_bow <= 0.65 && f_ens >= 0.90, || detail.clone())?;
    Ok(detail)
}

fn tokenizer() -> Outcome {
    let mut rng = SplitMix64::new(3);
    let mut total = 0usize;
    for _ in 0..10_000 {
        let len = rng.below(5001) as usize;
        let s = random_seq(&mut rng, len, b"ACGTN");
        let ts = kmer_tokenize(&s, 6).map_err(|e| e.to_string())?;
        ensure(ts.joined() == s, || format!("round trip failed for length {len}"))?;
        total += len;
    }
    let v = KmerVocabulary::new(6).len();
    ensure(v == 4104, || format!("vocabulary size {v}"))?;
    Ok(format!("10000 sequences ({total} bases) round-trip; k=6 vocabulary {v}"))
}

fn entity_formats() -> Outcome {
    let pairs = [
        AttributePair::new("Gene Family", "Beta-lactamases"),
        AttributePair::new("Resistance Mechanism", "Antibiotic incativation"),
    ];
    let verbatim = RenderOptions { table1_verbatim: true };
    let rows = [
        (MarkerStyle::Base, RenderOptions::default(), "Gene Family: Beta-lactamases, Resistance Mechanism: Antibiotic incativation"),
        (
            MarkerStyle::EntityMarkerPunct,
            RenderOptions::default(),
            "[Gene Family]: Beta-lactamases, [Resistance Mechanism]: Antibiotic incativation",
        ),
        (MarkerStyle::TypedEntityMarker, verbatim, "*Beta-lactamases*, #Resistance Mechanism#"),
        (
            MarkerStyle::TypedEntityMarkerPunct,
            RenderOptions::default(),
            "*[Gene Family]: Beta-lactamases*, #[Resistance Mechanism]: Antibiotic incativation#",
        ),
    ];
    for (style, opts, want) in rows {
        let got = render(&pairs, style, opts).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{style}: got {got:?}"))?;
    }
    Ok("4 rows byte-exact".into())
}

fn split_protocol() -> Outcome {
    let merged = fixture_merged();
    let filtered = filter_rare_classes(&merged, 15).map_err(|e| e.to_string())?;
    ensure(filtered.class_counts().iter().all(|&c| c >= 15), || "class below 15 after filter".into())?;
    let dropped = merged.len() - filtered.len();
    let synth = two_modality_dataset(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let f = Fractions::default();
    let mut checked = 0;
    for ds in [&filtered, &synth] {
        for seed in 0..10u64 {
            let m = split(ds, seed, f, true).map_err(|e| e.to_string())?;
            let again = split(ds, seed, f, true).map_err(|e| e.to_string())?;
            ensure(m.to_bytes() == again.to_bytes(), || format!("seed {seed}: manifests differ"))?;
            ensure(m.len() == ds.len(), || "manifest is not exhaustive".into())?;
            ensure(ds.records().iter().all(|r| m.bucket_of(&r.id).is_some()), || "record missing".into())?;
            let total: usize = [Bucket::Train, Bucket::Test, Bucket::Val].iter().map(|b| m.count(*b)).sum();
            ensure(total == ds.len(), || "buckets overlap".into())?;
            for (c, &n_c) in ds.class_counts().iter().enumerate() {
                for (b, frac) in [(Bucket::Train, f.train), (Bucket::Test, f.test), (Bucket::Val, f.val)] {
                    let got = (0..ds.len()).filter(|&i| ds.class_index(i) == c && m.bucket_of(&ds.records()[i].id) == Some(b)).count();
                    let want = frac * n_c as f64;
                    ensure((got as f64 - want).abs() <= 1.0, || format!("class {c} bucket {b}: {got} vs {want}"))?;
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} manifests checked; rare-class filter removed {dropped} records, min class size {}", filtered.class_counts().iter().min().unwrap()))
}

fn random_dag(rng: &mut SplitMix64) -> Vec<OntologyTerm> {
    let n = 1 + rng.below(100) as usize;
    let mut terms: Vec<OntologyTerm> = (0..n)
        .map(|i| {
            let mut parent_ids = BTreeSet::new();
            if i > 0 && rng.next_f64() > 0.1 {
                for _ in 0..1 + rng.below(3) {
                    parent_ids.insert(format!("T{:03}", rng.below(i as u64)));
                }
            }
            OntologyTerm { term_id: format!("T{i:03}"), name: format!("term {i}"), parent_ids, synonyms: Vec::new() }
        })
        .collect();
    for i in (1..terms.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        terms.swap(i, j);
    }
    terms
}

fn ontology_levels() -> Outcome {
    let mut rng = SplitMix64::new(17);
    let mut queries = 0;
    for _ in 0..100 {
        let terms = random_dag(&mut rng);
        let g = OntologyGraph::from_terms(terms.clone()).map_err(|e| e.to_string())?;
        let parents: BTreeMap<&str, &BTreeSet<String>> = terms.iter().map(|t| (t.term_id.as_str(), &t.parent_ids)).collect();
        let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
        let mut q: VecDeque<&str> = VecDeque::new();
        for t in terms.iter().filter(|t| t.parent_ids.is_empty()) {
            depth.insert(&t.term_id, 0);
            q.push_back(&t.term_id);
        }
        while let Some(cur) = q.pop_front() {
            for t in &terms {
                if t.parent_ids.contains(cur) && !depth.contains_key(t.term_id.as_str()) {
                    depth.insert(&t.term_id, depth[cur] + 1);
                    q.push_back(&t.term_id);
                }
            }
        }
        let max_depth = depth.values().copied().max().unwrap_or(0);
        for t in &terms {
            let mut anc = BTreeSet::new();
            let mut stack = vec![t.term_id.as_str()];
            while let Some(cur) = stack.pop() {
                if anc.insert(cur) {
                    stack.extend(parents[cur].iter().map(String::as_str));
                }
            }
            let id = t.term_id.as_str();
            ensure(g.depth_of(id).ok() == Some(depth[id]), || format!("depth of {id}"))?;
            for level in 0..=max_depth + 1 {
                let want = if depth[id] <= level {
                    id
                } else {
                    anc.iter().copied().filter(|a| depth[a] == level).min().expect("ancestor at level")
                };
                let got = g.ancestor_at_level(id, level).map_err(|e| e.to_string())?;
                ensure(got == want, || format!("{id} level {level}: {got} vs {want}"))?;
                queries += 1;
            }
        }
    }
    Ok(format!("100 random DAGs, {queries} level queries agree"))
}

fn read_simulator() -> Outcome {
    let mut rng = SplitMix64::new(23);
    let refs: Vec<_> = (0..20).map(|i| common::record(&format!("ref{i}"), &random_seq(&mut rng, 1000, b"ACGT"), "x")).collect();
    let ds = common::dataset(refs);
    let identity = ReadProfile { read_len: 100, paired: true, fragment_mean: 250, amount: ReadAmount::PerRef(10), seed: 2, ..Default::default() };
    for r in ds.records() {
        let rc = reverse_complement(&r.nucleotides);
        for read in simulate(r, &identity).map_err(|e| e.to_string())? {
            let s = &read.record.nucleotides;
            let ok = if read.reverse { rc.contains(s.as_str()) } else { r.nucleotides[read.start..].starts_with(s.as_str()) };
            ensure(ok && s.len() == 100, || format!("zero-rate read {} is not a reference substring", read.record.id))?;
        }
    }
    let noisy = ReadProfile { read_len: 150, sub_rate: 0.01, amount: ReadAmount::PerRef(40), seed: 9, ..Default::default() };
    let a = build_reads_dataset(&ds, &noisy).map_err(|e| e.to_string())?;
    let t = a.tally;
    let (n, p) = (t.draws as f64, 0.01);
    let sd = (n * p * (1.0 - p)).sqrt();
    let z = (t.substitutions as f64 - n * p) / sd;
    ensure(t.draws >= 100_000, || format!("only {} bases", t.draws))?;
    ensure(z.abs() <= 3.0, || format!("{} substitutions over {} bases, z = {z:.2}", t.substitutions, t.draws))?;
    let b = build_reads_dataset(&ds, &noisy).map_err(|e| e.to_string())?;
    ensure(a == b, || "same seed gave different reads".into())?;
    Ok(format!("zero-rate identity holds; {} substitutions over {} bases (z = {z:.2}); deterministic", t.substitutions, t.draws))
}

fn gradient_check(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (c, f, n) = (2 + rng.below(5) as usize, 3 + rng.below(20) as usize, 4 + rng.below(16) as usize);
    let xs: Vec<SparseVec> = (0..n)
        .map(|_| {
            let dense: Vec<f64> = (0..f).map(|_| if rng.next_f64() < 0.6 { rng.next_normal() } else { 0.0 }).collect();
            SparseVec::from_dense(&dense)
        })
        .collect();
    let ys: Vec<usize> = (0..n).map(|_| rng.below(c as u64) as usize).collect();
    let w: Vec<f64> = (0..c * f).map(|_| rng.next_normal() * 0.5).collect();
    let b: Vec<f64> = (0..c).map(|_| rng.next_normal() * 0.5).collect();
    let l2 = 0.01 * rng.next_f64();
    let loss = |w: &[f64], b: &[f64]| loss_and_gradient(w, b, f, &xs, &ys, l2).0;
    let (_, gw, gb) = loss_and_gradient(&w, &b, f, &xs, &ys, l2);
    let h = 1e-5;
    let rel = |num: f64, ana: f64| (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let (mut wp, mut wm) = (w.clone(), w.clone());
        wp[i] += h;
        wm[i] -= h;
        worst = worst.max(rel((loss(&wp, &b) - loss(&wm, &b)) / (2.0 * h), gw[i]));
    }
    for i in 0..b.len() {
        let (mut bp, mut bm) = (b.clone(), b.clone());
        bp[i] += h;
        bm[i] -= h;
        worst = worst.max(rel((loss(&w, &bp) - loss(&w, &bm)) / (2.0 * h), gb[i]));
    }
    worst
}

fn gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let e = gradient_check(1000 + seed);
        ensure(e < 1e-4, || format!("problem {seed}: relative error {e:.2e}"))?;
        worst = worst.max(e);
    }
    Ok(format!("20 problems, max relative error {worst:.2e}"))
}

fn augmentation_safety() -> Outcome {
    let ds = fixture_dataset();
    let spec = seq_spec();
    let mut accepted_total = 0;
    for seed in 0..5u64 {
        let m = split(&ds, seed, Fractions::default(), true).map_err(|e| e.to_string())?;
        let mut cfg = FixtureConfig::uniform(Modality::Sequence, ds.class_vocab().to_vec());
        cfg.generate = GenerateBehavior::MutateExemplars { rate: 0.03, seed };
        let (addr, _h) = spawn_tcp_fixture(cfg).map_err(|e| e.to_string())?;
        let ep = BridgeEndpoint::tcp(addr.to_string(), FIXTURE_TIMEOUT).map_err(|e| e.to_string())?;
        let client = BridgeClient::connect(&ep, Some(ds.class_vocab())).map_err(|e| e.to_string())?;
        let p = plan(&ds, &m, 20, 20, "default").map_err(|e| e.to_string())?;
        ensure(!p.entries.is_empty(), || "plan is empty".into())?;
        let (mut cur, mut cur_m) = (ds.clone(), m.clone());
        for e in &p.entries {
            let prompt = prompt_for(e, &cur, &spec, DEFAULT_TEMPLATE).map_err(|e| e.to_string())?;
            let cands = client.remote_generate(&prompt, 2 * (e.target_count - e.current_count)).map_err(|e| e.to_string())?;
            let out = ingest(&cands, &e.class, e.target_count, &spec, &cur, &cur_m, &Provenance::new(&addr.to_string(), &prompt, 0))
                .map_err(|e| e.to_string())?;
            accepted_total += out.audit.iter().filter(|s| s.accepted()).count();
            cur = out.dataset;
            cur_m = out.manifest;
        }
        let augmented: HashSet<&str> =
            cur.records().iter().filter(|r| r.source_db == SourceDb::Augmented).map(|r| r.id.as_str()).collect();
        for b in [Bucket::Test, Bucket::Val] {
            let ids: HashSet<&str> = cur_m.ids_in(b).collect();
            ensure(ids.is_disjoint(&augmented), || format!("{b} contains augmented records"))?;
            let before: HashSet<&str> = m.ids_in(b).collect();
            ensure(ids == before, || format!("{b} changed"))?;
        }
    }
    Ok(format!("5 fixture runs, {accepted_total} augmented records, all in TRAIN"))
}

fn protocol_conformance() -> Outcome {
    let classes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let serve = |cfg: FixtureConfig| -> Result<BridgeEndpoint, String> {
        let (addr, _h) = spawn_tcp_fixture(cfg).map_err(|e| e.to_string())?;
        BridgeEndpoint::tcp(addr.to_string(), FIXTURE_TIMEOUT).map_err(|e| e.to_string())
    };
    let mut gen = FixtureConfig::uniform(Modality::Sequence, classes.clone());
    gen.generate = GenerateBehavior::MutateExemplars { rate: 0.1, seed: 1 };
    let ds = fixture_dataset();
    let model = train_kmer_nb(&ds, seq_spec(), 4, 1.0).map_err(|e| e.to_string())?;
    let mut checks = 0;
    for (name, cfg, expected) in [
        ("uniform", FixtureConfig::uniform(Modality::Sequence, classes.clone()), Some(classes.clone())),
        ("generating", gen, None),
        ("wrapped model", FixtureConfig::wrapping(Arc::new(model)), Some(ds.class_vocab().to_vec())),
    ] {
        let report = run_conformance(&serve(cfg)?, &ConformanceOptions { expected_classes: expected, ..Default::default() });
        ensure(report.passed(), || format!("{name} fixture:\n{report}"))?;
        checks += report.checks.len();
    }

    let with = |p: PredictBehavior| {
        let mut c = FixtureConfig::uniform(Modality::Sequence, classes.clone());
        c.predict = p;
        c
    };
    let client = BridgeClient::connect(&serve(with(PredictBehavior::Malformed))?, None).map_err(|e| e.to_string())?;
    ensure(matches!(client.remote_predict("ACGT"), Err(BridgeError::ProtocolError(_))), || "malformed reply accepted".into())?;

    let client = BridgeClient::connect(&serve(with(PredictBehavior::StallOnce(Arc::new(AtomicBool::new(false)))))?, None)
        .map_err(|e| e.to_string())?;
    let t = Instant::now();
    ensure(matches!(client.remote_predict("ACGT"), Err(BridgeError::Timeout(_))), || "stall did not time out".into())?;
    ensure(t.elapsed() < FIXTURE_TIMEOUT * 4, || "timeout took too long".into())?;
    ensure(client.remote_predict("ACGT").is_ok(), || "client did not recover after timeout".into())?;

    let mut silent = FixtureConfig::uniform(Modality::Sequence, classes);
    silent.silent_handshake = true;
    ensure(
        matches!(BridgeClient::connect(&serve(silent)?, None), Err(BridgeError::Timeout(_))),
        || "silent handshake did not time out".into(),
    )?;
    Ok(format!("3 fixture servers, {checks} suite checks; malformed reply, stalled reply and silent handshake handled"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("metrics oracle equivalence", Some(Duration::from_secs(5)), metrics_oracle),
        ("ensemble endpoint guarantee", Some(Duration::from_secs(10)), ensemble_endpoint),
        ("directional two-modality ensemble gain", Some(Duration::from_secs(60)), directional),
        ("tokenizer round trip and vocabulary", Some(Duration::from_secs(5)), tokenizer),
        ("entity format rows", None, entity_formats),
        ("split protocol", Some(Duration::from_secs(5)), split_protocol),
        ("ontology level mapping", Some(Duration::from_secs(10)), ontology_levels),
        ("read simulator", Some(Duration::from_secs(10)), read_simulator),
        ("softmax gradient", Some(Duration::from_secs(10)), gradient),
        ("augmentation safety", None, augmentation_safety),
        ("protocol conformance", None, protocol_conformance),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {:.2}s, budget {}s", elapsed.as_secs_f64(), b.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{:.2}s]", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{:.2}s]", elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
