mod common;

use amrkit::augmentation::{build_prompt, ingest, plan, prompt_for, Provenance, RejectReason, DEFAULT_TEMPLATE};
use amrkit::bridge::{spawn_tcp_fixture, BridgeClient, BridgeEndpoint, FixtureConfig, GenerateBehavior, FIXTURE_TIMEOUT};
use amrkit::classifiers::InputSpec;
use amrkit::dataset::{split, Bucket, Fractions, SplitManifest};
use amrkit::rng::SplitMix64;
use amrkit::seq_io::LabelAxis;
use amrkit::text_format::MarkerStyle;
use amrkit::{Dataset, Modality, SourceDb};
use common::{dataset, record, text_record};
use std::collections::BTreeMap;

fn random_seq(rng: &mut SplitMix64, len: usize) -> String {
    (0..len).map(|_| b"ACGT"[rng.below(4) as usize] as char).collect()
}

/// Class A with 50 records, class B with 8, all in TRAIN except a few.
fn skewed() -> (Dataset, SplitManifest) {
    let mut rng = SplitMix64::new(1);
    let mut recs = Vec::new();
    for i in 0..50 {
        recs.push(record(&format!("A{i:03}"), &random_seq(&mut rng, 120), "A"));
    }
    for i in 0..8 {
        recs.push(record(&format!("B{i:03}"), &random_seq(&mut rng, 120), "B"));
    }
    let ds = dataset(recs);
    let mut assignment = BTreeMap::new();
    for r in ds.records() {
        assignment.insert(r.id.clone(), Bucket::Train);
    }
    assignment.insert("A000".into(), Bucket::Test);
    assignment.insert("A001".into(), Bucket::Val);
    (ds, SplitManifest::from_assignment(0, Fractions::default(), true, assignment))
}

fn prov() -> Provenance {
    Provenance::new("fixture", "prompt", 0)
}

#[test]
fn plan_targets_rare_classes_only() {
    let (ds, m) = skewed();
    let p = plan(&ds, &m, 15, 15, "default").unwrap();
    assert_eq!(p.entries.len(), 1);
    let e = &p.entries[0];
    assert_eq!((e.class.as_str(), e.current_count, e.target_count), ("B", 8, 15));
    assert_eq!(e.exemplar_ids, vec!["B000", "B001", "B002", "B003", "B004"]);
    assert!(plan(&ds, &m, 5, 15, "default").unwrap().entries.is_empty());
    assert!(plan(&ds, &m, 0, 15, "default").is_err());
}

#[test]
fn class_without_train_samples_gets_empty_exemplars() {
    let (ds, m) = skewed();
    let mut a = m.assignment().clone();
    for i in 0..8 {
        a.insert(format!("B{i:03}"), Bucket::Test);
    }
    let m = SplitManifest::from_assignment(0, Fractions::default(), true, a);
    let p = plan(&ds, &m, 15, 15, "t").unwrap();
    assert_eq!(p.entries[0].current_count, 0);
    assert!(p.entries[0].exemplar_ids.is_empty());
    let prompt = prompt_for(&p.entries[0], &ds, &InputSpec::sequence(LabelAxis::DrugClass), DEFAULT_TEMPLATE).unwrap();
    assert_eq!(prompt, "Generate a B gene like:\n");
}

#[test]
fn validators_in_order() {
    let (ds, m) = skewed();
    let spec = InputSpec::sequence(LabelAxis::DrugClass);
    let existing = ds.records()[2].nucleotides.clone();
    let mut rng = SplitMix64::new(99);
    let fresh = random_seq(&mut rng, 60);
    let cands = vec![
        existing,
        format!("ACGX{}", "A".repeat(60)),
        "ACGT".repeat(5),
        "A".repeat(1001),
        fresh.clone(),
        fresh.to_lowercase(),
    ];
    let out = ingest(&cands, "B", 15, &spec, &ds, &m, &prov()).unwrap();
    let reasons: Vec<_> = out.audit.iter().map(|s| s.rejection).collect();
    assert_eq!(
        reasons,
        vec![
            Some(RejectReason::Duplicate),
            Some(RejectReason::Alphabet),
            Some(RejectReason::TooShort),
            Some(RejectReason::TooLong),
            None,
            Some(RejectReason::Duplicate)
        ]
    );
    let id = out.audit[4].record_id.clone().unwrap();
    assert_eq!(out.manifest.bucket_of(&id), Some(Bucket::Train));
    let rec = &out.dataset.records()[out.dataset.position(&id).unwrap()];
    assert_eq!(rec.source_db, SourceDb::Augmented);
    assert_eq!(rec.labels.drug_class.as_deref(), Some("B"));
}

#[test]
fn cap_limits_acceptance() {
    let (ds, m) = skewed();
    let spec = InputSpec::sequence(LabelAxis::DrugClass);
    let mut rng = SplitMix64::new(5);
    let cands: Vec<String> = (0..10).map(|_| random_seq(&mut rng, 80)).collect();
    let out = ingest(&cands, "B", 11, &spec, &ds, &m, &prov()).unwrap();
    let accepted = out.audit.iter().filter(|s| s.accepted()).count();
    assert_eq!(accepted, 3);
    assert!(out.audit[..3].iter().all(|s| s.accepted()));
    assert!(out.audit[3..].iter().all(|s| s.rejection == Some(RejectReason::Cap)));
    assert_eq!(out.dataset.len(), ds.len() + 3);

    let again = ingest(&cands, "B", 20, &spec, &out.dataset, &out.manifest, &prov()).unwrap();
    assert!(again.audit[..3].iter().all(|s| s.rejection == Some(RejectReason::Duplicate)));
}

#[test]
fn text_candidates_become_attribute_records() {
    let recs = vec![
        text_record("a1", "X", "alpha family", "efflux"),
        text_record("a2", "X", "beta family", "efflux"),
        text_record("a3", "Y", "gamma family", "inactivation"),
    ];
    let ds = dataset(recs);
    let m = split(&ds, 0, Fractions::default(), false).unwrap();
    let spec = InputSpec::text(LabelAxis::DrugClass, MarkerStyle::EntityMarkerPunct);
    let cands = vec![
        "[Gene Family]: delta family, [Resistance Mechanism]: efflux".to_string(),
        "[Gene Family]: alpha family, [Resistance Mechanism]: efflux".to_string(),
        "no attributes here".to_string(),
        "*delta family*, #efflux#".to_string(),
    ];
    let out = ingest(&cands, "X", 15, &spec, &ds, &m, &prov()).unwrap();
    let r: Vec<_> = out.audit.iter().map(|s| s.rejection).collect();
    assert_eq!(r, vec![None, Some(RejectReason::Duplicate), Some(RejectReason::Unparseable), Some(RejectReason::Unparseable)]);
    let id = out.audit[0].record_id.clone().unwrap();
    let rec = &out.dataset.records()[out.dataset.position(&id).unwrap()];
    assert_eq!(rec.labels.gene_family.as_deref(), Some("delta family"));
    assert!(rec.nucleotides.is_empty());
}

#[test]
fn fixture_generator_run_never_touches_test_or_val() {
    let (ds, m) = skewed();
    let mut cfg = FixtureConfig::uniform(Modality::Sequence, vec!["A".into(), "B".into()]);
    cfg.generate = GenerateBehavior::MutateExemplars { rate: 0.05, seed: 2 };
    let (addr, _h) = spawn_tcp_fixture(cfg).unwrap();
    let client = BridgeClient::connect(&BridgeEndpoint::tcp(addr.to_string(), FIXTURE_TIMEOUT).unwrap(), None).unwrap();
    let spec = InputSpec::sequence(LabelAxis::DrugClass);
    let p = plan(&ds, &m, 15, 15, "default").unwrap();
    let (mut ds2, mut m2) = (ds.clone(), m.clone());
    for e in &p.entries {
        let prompt = prompt_for(e, &ds2, &spec, DEFAULT_TEMPLATE).unwrap();
        let cands = client.remote_generate(&prompt, 12).unwrap();
        let out = ingest(&cands, &e.class, e.target_count, &spec, &ds2, &m2, &Provenance::new("fixture", &prompt, 0)).unwrap();
        assert!(out.audit.iter().filter(|s| s.accepted()).count() <= e.target_count - e.current_count);
        ds2 = out.dataset;
        m2 = out.manifest;
    }
    for r in ds2.records().iter().filter(|r| r.source_db == SourceDb::Augmented) {
        assert_eq!(m2.bucket_of(&r.id), Some(Bucket::Train));
    }
    for (id, b) in m.assignment() {
        assert_eq!(m2.bucket_of(id), Some(*b));
    }
    assert!(ds2.len() > ds.len());
}

#[test]
fn prompt_example() {
    assert_eq!(build_prompt("Generate a {class} gene like:\n{exemplars}", "B", &["ACGT"]).unwrap(), "Generate a B gene like:\nACGT");
}
