use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use rand::SeedableRng;
use std::hint::black_box;

use rmbench_core::algos::{build_learner, AlgoKind, LearnerConfig};
use rmbench_core::dsl::parse_rm;
use rmbench_core::envs::{office_tasks, GridEnv, OFFICE_DEFAULT_MAP};
use rmbench_core::mdprm::{build_cross_product, multitask_loop, Mdprm, TrialRng};
use rmbench_core::oracle::cross_vi;
use rmbench_core::rm::TruthAssignment;
use rmbench_core::shaping::rm_value_iteration;

fn office_mdprms() -> Vec<Mdprm> {
    let env = GridEnv::office_default();
    office_tasks()
        .iter()
        .map(|t| Mdprm::from_task(t, env.clone(), 0.9).unwrap())
        .collect()
}

fn bench_machine_step(c: &mut Criterion) {
    let rm = office_tasks()[3].rm.clone();
    let sigmas: Vec<TruthAssignment> =
        TruthAssignment::enumerate(rm.props().len()).collect();
    let mut group = c.benchmark_group("machine");
    group.throughput(Throughput::Elements(sigmas.len() as u64));
    group.bench_function("step_all_assignments", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &sigma in &sigmas {
                let (_, r) = rm.step(rm.initial(), black_box(sigma)).unwrap();
                acc += r;
            }
            acc
        })
    });
    group.finish();
}

fn bench_parse(c: &mut Criterion) {
    let src = include_str!("../../../tasks/office_4_coffee_mail.rm");
    c.bench_function("parse_office_fixture", |b| b.iter(|| parse_rm(black_box(src)).unwrap()));
}

fn bench_learners(c: &mut Criterion) {
    let tasks = office_mdprms();
    let mut group = c.benchmark_group("train_10k_steps");
    group.sample_size(10);
    for algo in [AlgoKind::Ql, AlgoKind::Crm, AlgoKind::Hrm] {
        group.bench_function(algo.to_string(), |b| {
            b.iter(|| {
                let mut learner = build_learner(algo, &tasks, LearnerConfig::default()).unwrap();
                let mut rng = TrialRng::seed_from_u64(1);
                multitask_loop(&tasks, learner.as_mut(), &mut rng, 10_000, 1000)
            })
        });
    }
    group.finish();
}

fn bench_exact_solver(c: &mut Criterion) {
    let tasks = office_mdprms();
    let cp = build_cross_product(&tasks[3]);
    c.bench_function("cross_vi_office_diamond", |b| b.iter(|| cross_vi(black_box(&cp), 1e-10)));
    let diamond = office_tasks()[3].rm.clone();
    c.bench_function("machine_value_iteration", |b| {
        b.iter(|| rm_value_iteration(black_box(&diamond), 0.9, 1e-12).unwrap())
    });
}

fn bench_map_parse(c: &mut Criterion) {
    use rmbench_core::envs::{load_map, Legend};
    c.bench_function("load_office_map", |b| {
        b.iter(|| load_map(black_box(OFFICE_DEFAULT_MAP), &Legend::office()).unwrap())
    });
}

criterion_group!(
    benches,
    bench_machine_step,
    bench_parse,
    bench_learners,
    bench_exact_solver,
    bench_map_parse
);
criterion_main!(benches);
