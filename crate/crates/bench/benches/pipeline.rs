//! End-to-end timings of the expensive pipeline stages on the reference
//! resolution (27x27 nodes, 10 basis functions, 40 time steps).

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use densteer::actuation::{ActuatorModel, ControlBasis, ControlTrajectory};
use densteer::assembly::assemble_operators;
use densteer::mesh::Mesh;
use densteer::ocp::{reduced_gradient, Problem};
use densteer::solver::solve_forward;

fn reference_ops() -> densteer::OperatorSet {
    let mesh = Mesh::structured(26, 26).unwrap();
    assemble_operators(
        &mesh,
        &ControlBasis::with_default_width(10),
        &ActuatorModel::new(1.0, 10.0),
        0.1,
        4,
    )
    .unwrap()
}

fn bench_assembly(c: &mut Criterion) {
    let mesh = Mesh::structured(26, 26).unwrap();
    let basis = ControlBasis::with_default_width(10);
    let model = ActuatorModel::new(1.0, 10.0);
    c.bench_function("assemble_operators 27x27 nodes, 10 basis", |b| {
        b.iter(|| assemble_operators(&mesh, &basis, &model, 0.1, 4).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let ops = reference_ops();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ctrl = ControlTrajectory::random_feasible(40, 10, 0.0025, 1.0, &mut rng);
    let q0 = ops.project_density(|_| 1.0).unwrap();
    c.bench_function("forward solve N=40", |b| {
        b.iter(|| solve_forward(&ops, &ctrl, &q0).unwrap())
    });
}

fn bench_gradient(c: &mut Criterion) {
    let ops = reference_ops();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ctrl = ControlTrajectory::random_feasible(40, 10, 0.0025, 1.0, &mut rng);
    let problem = Problem {
        ops: &ops,
        initial: ops.project_density(|_| 1.0).unwrap(),
        target: ops
            .project_density(|x| {
                ((-(x[0] - 0.25).powi(2) - (x[1] - 0.25).powi(2)) / 0.01).exp() + 0.05
            })
            .unwrap(),
        alpha: 1e-4,
        u_max: 10.0,
    };
    c.bench_function("reduced gradient N=40", |b| {
        b.iter_batched(
            || ctrl.clone(),
            |u| reduced_gradient(&ops, &u, &problem.initial, &problem.target, problem.alpha).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_assembly, bench_forward, bench_gradient);
criterion_main!(benches);
