use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use amrkit::augmentation::{self, Provenance, DEFAULT_TEMPLATE};
use amrkit::bridge::{
    run_conformance, serve_stdio, serve_tcp, BridgeClient, ConformanceOptions, FixtureConfig, GenerateBehavior,
};
use amrkit::classifiers::{
    predict_batch, train_kmer_nb, train_softmax, FeatureKind, InputSpec, TrainConfig, TrainedModel,
};
use amrkit::dataset::{filter_rare_classes, merge, split, Bucket, Fractions};
use amrkit::ensemble::{predict_ensemble, tune_weights, TieBreak, TuneConfig, WeightsFile};
use amrkit::metrics::{confusion, format_json, format_per_class, format_tsv, report, ResultRow};
use amrkit::ontology::{
    apply_mapping, build_gene_family_mapping, ClassMapping, LocalLookup, OntologyGraph, OntologyLookup,
    RemoteLookup, RemoteLookupConfig, UnmappedPolicy,
};
use amrkit::read_sim::{build_reads_dataset, write_fastq, ReadAmount, ReadProfile};
use amrkit::seq_io::{self, CardMetadata, HeaderSchema, IngestOptions};
use amrkit::{Dataset, LabelAxis, Modality, ModelInput, SourceDb};

use crate::error::{CliError, CliResult, Context};
use crate::store::{self, Member};
use crate::*;

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Integrate(a) => integrate(a),
        Command::Split(a) => split_cmd(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::TuneEnsemble(a) => tune(a),
        Command::Evaluate(a) => evaluate(a),
        Command::SimulateReads(a) => simulate(a),
        Command::Augment(a) => augment(a),
        Command::ServeFixture(a) => serve(a),
        Command::BridgeCheck(a) => bridge_check(a),
    }
}

fn print_counts(ds: &Dataset) {
    println!("records: {}", ds.len());
    println!("classes: {}", ds.class_vocab().len());
    for (class, n) in ds.class_vocab().iter().zip(ds.class_counts()) {
        println!("  {class}\t{n}");
    }
}

fn bucket(s: &str) -> CliResult<Bucket> {
    s.parse().map_err(CliError::input)
}

fn policy(s: &str) -> CliResult<UnmappedPolicy> {
    s.parse().map_err(CliError::input)
}

/// The requested bucket of a dataset, or all of it without a manifest.
fn select(args: &BucketArgs) -> CliResult<Dataset> {
    let ds = store::load_dataset(&args.dataset, args.axis.task_axis)?;
    match &args.split {
        Some(path) => {
            let m = store::load_manifest(path)?;
            Ok(ds.select(&m, bucket(&args.bucket)?)?)
        }
        None => Ok(ds),
    }
}

fn timeout(b: &BridgeArgs) -> Duration {
    Duration::from_millis(b.timeout_ms)
}

fn ingest(a: IngestArgs) -> CliResult<()> {
    let schema = match HeaderSchema::builtin(&a.schema) {
        Some(s) => s,
        None => HeaderSchema::from_config(&store::read_text(Path::new(&a.schema))?).ctx(&a.schema)?,
    };
    let meta = match &a.card_metadata {
        Some(p) => Some(CardMetadata::parse(store::open(p)?).ctx(p.display())?),
        None => None,
    };
    let source_db = match (&a.source_db, schema.name()) {
        (Some(s), _) => s.parse::<SourceDb>().map_err(CliError::input)?,
        (None, "card") => SourceDb::Card,
        (None, "megares") => SourceDb::Megares,
        (None, other) => return Err(CliError::input(format!("schema '{other}' needs --source-db"))),
    };
    let opts = IngestOptions { source_db, metadata: meta.as_ref(), include_flagged: a.include_flagged };
    let records = seq_io::read_records(store::open(&a.fasta)?, &schema, &opts).ctx(a.fasta.display())?;
    store::save_records(&a.out, &records)?;
    let (ds, unlabeled) = Dataset::from_labeled(records, a.axis.task_axis).ctx(a.fasta.display())?;
    print_counts(&ds);
    if unlabeled > 0 {
        println!("without {} label: {unlabeled}", a.axis.task_axis);
    }
    Ok(())
}

fn integrate(a: IntegrateArgs) -> CliResult<()> {
    let axis = a.axis.task_axis;
    let pol = policy(&a.policy)?;
    let inputs: Vec<Dataset> = a.inputs.iter().map(|p| store::load_dataset(p, axis)).collect::<CliResult<_>>()?;

    let table = |path: &Option<std::path::PathBuf>, which: LabelAxis, default: fn(UnmappedPolicy) -> ClassMapping| {
        match path {
            Some(p) => ClassMapping::from_table(which, store::open(p)?, pol).ctx(p.display()),
            None => Ok(default(pol)),
        }
    };
    let mut mappings = vec![
        table(&a.drugclass_table, LabelAxis::DrugClass, ClassMapping::default_drug_class)?,
        table(&a.mechanism_table, LabelAxis::Mechanism, ClassMapping::default_mechanism)?,
    ];
    if let Some(path) = &a.ontology {
        let graph = OntologyGraph::load(store::open(path)?).ctx(path.display())?;
        let lookup: Box<dyn OntologyLookup> = match RemoteLookupConfig::from_env() {
            Some(cfg) => {
                log::info!("resolving gene families through {}", cfg.endpoint);
                Box::new(RemoteLookup::new(cfg)?)
            }
            None => Box::new(LocalLookup::new(&graph)),
        };
        let raws = inputs.iter().flat_map(|d| d.records()).filter_map(|r| r.labels.gene_family.as_deref());
        mappings.push(build_gene_family_mapping(raws, &graph, lookup.as_ref(), a.level, pol)?);
    }

    let audit_path = a.audit.clone().unwrap_or_else(|| a.out.join("mapping_audit.tsv"));
    let mut audit = store::create(&audit_path)?;
    writeln!(audit, "#axis\traw\tintegrated\tmapped")?;
    for m in &mappings {
        let raws = inputs.iter().flat_map(|d| d.records()).filter_map(|r| r.labels.get(m.axis));
        for row in m.audit(raws) {
            writeln!(audit, "{}\t{}\t{}\t{}", row.axis, row.raw, row.integrated.as_deref().unwrap_or("-"), row.mapped)?;
        }
    }
    audit.flush()?;

    let mapped: Vec<Dataset> =
        inputs.iter().map(|d| mappings.iter().fold(d.clone(), |acc, m| apply_mapping(&acc, m))).collect();
    let mut merged = mapped[0].clone();
    for next in &mapped[1..] {
        merged = merge(&merged, next, &[])?;
    }
    let before = merged.len();
    if a.min_class_size > 0 {
        merged = filter_rare_classes(&merged, a.min_class_size)?;
    }
    store::save_records(&a.out, merged.records())?;
    print_counts(&merged);
    println!("removed by class-size filter: {}", before - merged.len());
    println!("audit: {}", audit_path.display());
    Ok(())
}

fn split_cmd(a: SplitArgs) -> CliResult<()> {
    println!("seed: {}", a.seed.seed);
    let parts: Vec<f64> = a
        .fractions
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| CliError::input(format!("--fractions: {e}"))))
        .collect::<CliResult<_>>()?;
    let [tr, te, va] = parts[..] else {
        return Err(CliError::input("--fractions needs three comma-separated values"));
    };
    let fractions = Fractions::new(tr, te, va)?;
    let ds = store::load_dataset(&a.dataset, a.axis.task_axis)?;
    let m = split(&ds, a.seed.seed, fractions, !a.no_stratify)?;
    store::save_manifest(&a.out, &m)?;
    for b in [Bucket::Train, Bucket::Test, Bucket::Val] {
        println!("{b}: {}", m.count(b));
    }
    println!("manifest sha256: {}", m.content_hash());
    Ok(())
}

fn train(a: TrainArgs) -> CliResult<()> {
    println!("seed: {}", a.seed.seed);
    let axis = a.axis.task_axis;
    let ds = store::load_dataset(&a.dataset, axis)?;
    let m = store::load_manifest(&a.split)?;
    let train = ds.select(&m, Bucket::Train)?;
    let modality = a.modality.unwrap_or(match (a.model, a.features) {
        (ModelChoice::Softmax, FeatureChoice::Bow) => Modality::Text,
        _ => Modality::Sequence,
    });
    let spec = InputSpec {
        modality,
        task_axis: axis,
        max_len: a.max_len,
        marker_style: a.text.marker_style,
        table1_verbatim: a.text.table1_verbatim,
    };
    let model = match a.model {
        ModelChoice::NaiveBayes => train_kmer_nb(&train, spec, a.k, a.alpha)?,
        ModelChoice::Softmax => {
            let features = match a.features {
                FeatureChoice::Kmer => FeatureKind::KmerFrequency { k: a.k },
                FeatureChoice::Bow => FeatureKind::BagOfWords,
            };
            let cfg = TrainConfig {
                seed: a.seed.seed,
                learning_rate: a.learning_rate,
                epochs: a.epochs,
                l2: a.l2,
                laplace_alpha: a.alpha,
            };
            train_softmax(&train, spec, features, &cfg)?
        }
    };
    model.save(&a.out).ctx(a.out.display())?;
    println!("model: {} ({} input, {} classes, {} training records)", model.kind_name(), modality, model.classes.len(), train.len());
    if let Some(last) = model.loss_history.last() {
        println!("final loss: {last:.6}");
    }
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let ds = select(&a.data)?;
    let member = Member::open(&a.model, a.data.axis.task_axis, a.text.marker_style, timeout(&a.bridge), None)?;
    let probs = predict_batch(member.classifier(), &member.spec().inputs_for(ds.records()))?;
    let classes = member.classifier().classes();
    let mut out = store::create(&a.out)?;
    writeln!(out, "#id\tgold\tpredicted\t{}", classes.join("\t"))?;
    for (i, p) in probs.iter().enumerate() {
        let cells: Vec<String> = p.as_slice().iter().map(|x| format!("{x:.6}")).collect();
        writeln!(out, "{}\t{}\t{}\t{}", ds.records()[i].id, ds.label(i), classes[p.argmax()], cells.join("\t"))?;
    }
    out.flush()?;
    println!("predictions: {} -> {}", probs.len(), a.out.display());
    Ok(())
}

fn tune(a: TuneArgs) -> CliResult<()> {
    println!("seed: {}", a.seed.seed);
    if a.members.len() != 2 {
        return Err(CliError::input(format!("tune-ensemble needs exactly two --member values, got {}", a.members.len())));
    }
    let axis = a.axis.task_axis;
    let ds = store::load_dataset(&a.dataset, axis)?;
    let manifest = store::load_manifest(&a.split)?;
    let val = ds.select(&manifest, Bucket::Val)?;
    let t = timeout(&a.bridge);
    let first = Member::open(&a.members[0], axis, a.text.marker_style, t, None)?;
    let second = Member::open(&a.members[1], axis, a.text.marker_style, t, Some(first.classifier().classes()))?;
    let inputs: Vec<[ModelInput; 2]> =
        val.records().iter().map(|r| [first.spec().input_for(r), second.spec().input_for(r)]).collect();
    let golds = store::gold_indices(&val, first.classifier().classes())?;
    let cfg = TuneConfig { step: a.step, tie_break: if a.favor_first { TieBreak::FavorFirst } else { TieBreak::FavorSecond } };
    let result = tune_weights([first.classifier(), second.classifier()], &inputs, &golds, &cfg)?;
    let file = WeightsFile {
        members: a.members.clone(),
        weights: result.weights.clone(),
        objective: result.objective,
        step: a.step,
        val_manifest_hash: manifest.content_hash(),
    };
    let mut out = store::create(&a.out)?;
    out.write_all(file.to_text().as_bytes())?;
    out.flush()?;
    for (w1, f1) in &result.curve {
        log::info!("w1={w1:.4}\tmacro-F1={f1:.6}");
    }
    let w = result.weights.as_slice();
    println!("weights: {:.4},{:.4}", w[0], w[1]);
    println!("validation macro-F1: {:.6} on {} records", result.objective, val.len());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    if a.models.is_empty() && a.weights.is_none() {
        return Err(CliError::input("nothing to evaluate: pass --model and/or --weights"));
    }
    let axis = a.data.axis.task_axis;
    let ds = select(&a.data)?;
    let t = timeout(&a.bridge);
    let name = a.name.clone().unwrap_or_else(|| store::stem(&a.data.dataset));
    let golds: Vec<&str> = (0..ds.len()).map(|i| ds.label(i)).collect();
    let mut rows = Vec::new();
    for desc in &a.models {
        let member = Member::open(desc, axis, a.text.marker_style, t, None)?;
        let probs = predict_batch(member.classifier(), &member.spec().inputs_for(ds.records()))?;
        let classes = member.classifier().classes();
        let preds: Vec<&str> = probs.iter().map(|p| classes[p.argmax()].as_str()).collect();
        let cm = confusion(&preds, &golds, classes).ctx(desc)?;
        rows.push(ResultRow { dataset: name.clone(), method: store::stem(Path::new(desc)), report: report(&cm)? });
    }
    if let Some(path) = &a.weights {
        let file = WeightsFile::read(store::open(path)?).ctx(path.display())?;
        let members: Vec<Member> = file
            .members
            .iter()
            .map(|d| Member::open(d, axis, a.text.marker_style, t, None))
            .collect::<CliResult<_>>()?;
        let refs: Vec<&dyn amrkit::Classifier> = members.iter().map(Member::classifier).collect();
        let classes = refs[0].classes();
        let preds: Vec<&str> = ds
            .records()
            .iter()
            .map(|r| {
                let inputs: Vec<ModelInput> = members.iter().map(|m| m.spec().input_for(r)).collect();
                predict_ensemble(&refs, &file.weights, &inputs).map(|(c, _)| classes[c].as_str())
            })
            .collect::<Result<_, _>>()?;
        let cm = confusion(&preds, &golds, classes).ctx(path.display())?;
        rows.push(ResultRow { dataset: name.clone(), method: "Ensemble".into(), report: report(&cm)? });
    }
    let mut text = match a.format {
        ReportFormat::Tsv => format_tsv(&rows),
        ReportFormat::Json => format_json(&rows),
    };
    if a.per_class {
        for row in &rows {
            text.push_str(&format!("\n# {}\n{}", row.method, format_per_class(&row.report)));
        }
    }
    match &a.out {
        Some(p) => {
            let mut out = store::create(p)?;
            out.write_all(text.as_bytes())?;
            out.flush()?;
            print!("{}", format_tsv(&rows));
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    println!("seed: {}", a.seed.seed);
    let ds = store::load_dataset(&a.dataset, a.axis.task_axis)?;
    let amount = match (a.coverage, a.reads_per_ref) {
        (Some(c), _) => ReadAmount::Coverage(c),
        (None, n) => ReadAmount::PerRef(n.unwrap_or(10)),
    };
    let profile = ReadProfile {
        read_len: a.read_len,
        sub_rate: a.sub_rate,
        ins_rate: a.ins_rate,
        del_rate: a.del_rate,
        paired: a.paired,
        fragment_mean: a.fragment_mean,
        fragment_sd: a.fragment_sd,
        amount,
        seed: a.seed.seed,
        quality_char: a.quality_char,
    };
    let out = build_reads_dataset(&ds, &profile)?;
    store::save_records(&a.out, out.dataset.records())?;
    if let Some(path) = &a.fastq {
        let mut f = store::create(path)?;
        let reads = out
            .dataset
            .records()
            .iter()
            .zip(&out.qualities)
            .map(|(r, q)| (r.id.as_str(), r.nucleotides.as_str(), q.as_str()));
        write_fastq(&mut f, reads)?;
        f.flush()?;
    }
    let t = out.tally;
    println!("reads: {}", out.dataset.len());
    println!("skipped references: {}", out.skipped.len());
    println!("bases: {} (substitutions {}, insertions {}, deletions {})", t.draws, t.substitutions, t.insertions, t.deletions);
    Ok(())
}

fn augment(a: AugmentArgs) -> CliResult<()> {
    println!("seed: {}", a.seed.seed);
    let axis = a.axis.task_axis;
    let mut ds = store::load_dataset(&a.dataset, axis)?;
    let mut manifest = store::load_manifest(&a.split)?;
    let (template, template_id) = match &a.template {
        Some(p) => (store::read_text(p)?, store::stem(p)),
        None => (DEFAULT_TEMPLATE.to_string(), "default".to_string()),
    };
    let spec = match a.modality {
        Modality::Sequence => InputSpec::sequence(axis),
        Modality::Text => InputSpec { table1_verbatim: a.text.table1_verbatim, ..InputSpec::text(axis, a.text.marker_style) },
    };
    let endpoint = store::parse_endpoint(&a.bridge, timeout(&a.bridge_opts))?
        .ok_or_else(|| CliError::input(format!("--bridge must be tcp://host:port or cmd:program, got '{}'", a.bridge)))?;
    let client = BridgeClient::connect(&endpoint, None).ctx(&a.bridge)?;
    let timestamp = a
        .timestamp
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
    let plan = augmentation::plan(&ds, &manifest, a.threshold, a.target.unwrap_or(a.threshold), &template_id)?;
    if plan.entries.is_empty() {
        println!("no class below {} TRAIN records", a.threshold);
    }
    let audit_file = OpenOptions::new().create(true).append(true).open(&a.audit).ctx(a.audit.display())?;
    let mut audit = BufWriter::new(audit_file);
    for entry in &plan.entries {
        let prompt = augmentation::prompt_for(entry, &ds, &spec, &template)?;
        let wanted = (entry.target_count - entry.current_count) * a.oversample.max(1);
        let candidates = client.remote_generate(&prompt, wanted).ctx(&a.bridge)?;
        let provenance = Provenance::new(&a.bridge, &prompt, timestamp);
        let outcome = augmentation::ingest(&candidates, &entry.class, entry.target_count, &spec, &ds, &manifest, &provenance)?;
        augmentation::write_audit(&mut audit, &outcome.audit)?;
        let accepted = outcome.audit.iter().filter(|s| s.accepted()).count();
        println!("{}: {} -> {} (accepted {accepted} of {})", entry.class, entry.current_count, entry.current_count + accepted, candidates.len());
        ds = outcome.dataset;
        manifest = outcome.manifest;
    }
    audit.flush()?;
    store::save_records(&a.out, ds.records())?;
    store::save_manifest(&a.out_split, &manifest)?;
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let mut cfg = match &a.model {
        Some(p) => FixtureConfig::wrapping(Arc::new(TrainedModel::load(p).ctx(p.display())?)),
        None => {
            let unique: BTreeSet<&String> = a.classes.iter().collect();
            if unique.len() != a.classes.len() || a.classes.iter().any(|c| c.is_empty()) {
                return Err(CliError::input("--classes must be distinct and non-empty"));
            }
            FixtureConfig::uniform(a.modality, a.classes.clone())
        }
    };
    if let Some(rate) = a.generate_rate {
        cfg.generate = GenerateBehavior::MutateExemplars { rate, seed: a.seed.seed };
    }
    match &a.tcp {
        Some(addr) => {
            let listener = TcpListener::bind(addr).ctx(addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            serve_tcp(listener, cfg)?;
        }
        None => serve_stdio(&cfg)?,
    }
    Ok(())
}

fn bridge_check(a: BridgeCheckArgs) -> CliResult<()> {
    let endpoint = store::parse_endpoint(&a.endpoint, Duration::from_millis(a.timeout_ms))?
        .ok_or_else(|| CliError::input(format!("--endpoint must be tcp://host:port or cmd:program, got '{}'", a.endpoint)))?;
    let opts = ConformanceOptions {
        expected_classes: (!a.expect_classes.is_empty()).then(|| a.expect_classes.clone()),
        ..Default::default()
    };
    let report = run_conformance(&endpoint, &opts);
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError { kind: crate::error::ExitKind::Bridge, message: "conformance suite failed".into() })
    }
}

