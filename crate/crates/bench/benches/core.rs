use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tipping_core::bifurcation::{sweep_freshwater, SweepConfig};
use tipping_core::dsl::{parse, parse_question, question_to_program};
use tipping_core::fourbox::{collapse_verdict, integrate, step, BoxState, ModelParams};
use tipping_core::nn::{Activation, Matrix, Mlp};

fn fourbox(c: &mut Criterion) {
    let p = ModelParams::default();
    let s = BoxState::initial(p.d_low0);
    c.bench_function("fourbox/step", |b| b.iter(|| step(black_box(&s), &p, 0.05).unwrap()));
    c.bench_function("fourbox/integrate_100y", |b| b.iter(|| integrate(&p, &s, 100.0, 0.05).unwrap()));
    c.bench_function("fourbox/collapse_verdict_3000y", |b| {
        b.iter(|| collapse_verdict(black_box(&p.with_perturbation(25.0, 0.8, 300.0)), 3000.0).unwrap())
    });
}

fn bifurcation(c: &mut Criterion) {
    let cfg = SweepConfig { tol: 0.05, ..SweepConfig::default() };
    let mut g = c.benchmark_group("bifurcation");
    g.sample_size(10);
    g.bench_function("sweep_7_steps", |b| b.iter(|| sweep_freshwater(25.0, 400.0, (0.05, 1.55), 7, &cfg).unwrap()));
    g.finish();
}

fn nn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = Mlp::new(&[3, 64, 64, 6], Activation::Tanh, Activation::Linear, &mut rng).unwrap();
    let x = Matrix::from_vec(128, 3, (0..384).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let grad = Matrix::from_vec(128, 6, vec![1e-2; 768]).unwrap();
    c.bench_function("nn/forward_128x3-64-64-6", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    c.bench_function("nn/forward_backward_128x3-64-64-6", |b| {
        b.iter(|| {
            net.forward_train(&x).unwrap();
            net.backward(&grad).unwrap()
        })
    });
}

fn dsl(c: &mut Criterion) {
    let program = "ChangeSign(box_model(SetTo(Fwn,638758),SetTo(D_low0,288)),M_n)";
    let question = "If Fwn is set to value 638758 and D_low0 is set to value 288, does the AMOC collapse within 3000 years?";
    c.bench_function("dsl/parse_program", |b| b.iter(|| parse(black_box(program)).unwrap()));
    c.bench_function("dsl/question_to_program", |b| {
        b.iter(|| question_to_program(&parse_question(black_box(question)).unwrap()).to_string())
    });
}

criterion_group!(benches, fourbox, bifurcation, nn, dsl);
criterion_main!(benches);
