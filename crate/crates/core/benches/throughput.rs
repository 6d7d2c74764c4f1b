//! Parallel vs sequential throughput of the data-parallel kernels.
//!
//! With the default features every kernel runs under the global rayon pool
//! and under a one-thread pool. Built with `--no-default-features` the same
//! kernels run through the sequential fallback.

use std::hint::black_box;

use amrkit::classifiers::features::SparseVec;
use amrkit::classifiers::{loss_and_gradient, predict_batch, train_kmer_nb, InputSpec};
use amrkit::ensemble::{tune_from_posteriors, TuneConfig};
use amrkit::read_sim::{build_reads_dataset, ReadAmount, ReadProfile};
use amrkit::rng::SplitMix64;
use amrkit::synth::{two_modality_dataset, SynthConfig};
use amrkit::{Dataset, LabelAxis, ProbabilityVector};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn corpus() -> Dataset {
    two_modality_dataset(&SynthConfig { n_samples: 2000, seq_len: 1000, ..SynthConfig::default() }).unwrap()
}

fn gradient_problem() -> (Vec<f64>, Vec<f64>, usize, Vec<SparseVec>, Vec<usize>) {
    let (c, f, n) = (10, 4096, 2000);
    let mut rng = SplitMix64::new(1);
    let xs = (0..n)
        .map(|_| {
            let dense: Vec<f64> = (0..f).map(|_| if rng.next_f64() < 0.05 { rng.next_f64() } else { 0.0 }).collect();
            SparseVec::from_dense(&dense)
        })
        .collect();
    let ys = (0..n).map(|_| rng.below(c as u64) as usize).collect();
    let w = (0..c * f).map(|_| rng.next_normal() * 0.01).collect();
    (w, vec![0.0; c], f, xs, ys)
}

fn posteriors(n: usize, seed: u64) -> Vec<ProbabilityVector> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..10).map(|_| rng.next_f64() + 1e-3).collect();
            let z: f64 = v.iter().sum();
            ProbabilityVector::new(v.iter().map(|x| x / z).collect()).unwrap()
        })
        .collect()
}

/// Runs `f` under each execution mode available in this build.
fn modes(c: &mut Criterion, group: &str, f: impl Fn() + Sync) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let threads = rayon::current_num_threads();
        if threads > 1 {
            g.bench_function(BenchmarkId::new("rayon", threads), |b| b.iter(&f));
        }
        g.bench_function(BenchmarkId::new("rayon", 1), |b| b.iter(|| single.install(&f)));
    }
    #[cfg(not(feature = "parallel"))]
    g.bench_function(BenchmarkId::new("sequential", 1), |b| b.iter(&f));
    g.finish();
}

fn benches(c: &mut Criterion) {
    let ds = corpus();
    let spec = InputSpec::sequence(LabelAxis::DrugClass);
    modes(c, "naive_bayes_train", || {
        black_box(train_kmer_nb(&ds, spec, 6, 1.0).unwrap());
    });

    let nb = train_kmer_nb(&ds, spec, 6, 1.0).unwrap();
    let inputs = spec.inputs_for(ds.records());
    modes(c, "naive_bayes_predict", || {
        black_box(predict_batch(&nb, &inputs).unwrap());
    });

    let (w, b, f, xs, ys) = gradient_problem();
    modes(c, "softmax_gradient", || {
        black_box(loss_and_gradient(&w, &b, f, &xs, &ys, 1e-4));
    });

    let profile = ReadProfile { sub_rate: 0.01, ins_rate: 0.001, del_rate: 0.001, amount: ReadAmount::PerRef(5), ..Default::default() };
    modes(c, "read_simulation", || {
        black_box(build_reads_dataset(&ds, &profile).unwrap());
    });

    let (pa, pb) = (posteriors(5000, 1), posteriors(5000, 2));
    let golds: Vec<usize> = (0..5000).map(|i| i % 10).collect();
    let classes: Vec<String> = (0..10).map(|c| format!("c{c}")).collect();
    let cfg = TuneConfig { step: 0.01, ..TuneConfig::default() };
    modes(c, "ensemble_tuning", || {
        black_box(tune_from_posteriors(&pa, &pb, &golds, &classes, &cfg).unwrap());
    });
}

criterion_group!(throughput, benches);
criterion_main!(throughput);
