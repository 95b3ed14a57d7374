use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use liusim_core::mechano::PhaseTable;
use liusim_core::poroelastic::simulation_solver;
use liusim_core::wave::{Drive, FastControls, WaveMedium};
use liusim_core::{
    build_structured_mesh, initial_phase_fields, load_config, ExperimentPreset, FastSolver, Face, PhaseStepper,
    SimulationConfig, WaveField,
};

fn config() -> SimulationConfig {
    load_config(include_str!("../../core/configs/spheroid_5MHz_1p5kPa.cfg")).unwrap()
}

fn slow_step(c: &mut Criterion) {
    let cfg = config();
    let d = &cfg.domain;
    let mesh = build_structured_mesh(d.length, d.nx, d.ny, None).unwrap();
    let phases = initial_phase_fields(&mesh, &cfg.init, d.tumor_radius).unwrap();
    let (mut solver, state) = simulation_solver(&mesh, &cfg).unwrap();
    c.bench_function("slow poroelastic step 64x64", |b| {
        b.iter(|| solver.step(black_box(&state), &phases, cfg.numerics.slow_dt).unwrap())
    });
}

fn phase_step(c: &mut Criterion) {
    let cfg = config();
    let d = &cfg.domain;
    let mesh = build_structured_mesh(d.length, d.nx, d.ny, None).unwrap();
    let phases = initial_phase_fields(&mesh, &cfg.init, d.tumor_radius).unwrap();
    let stepper = PhaseStepper::new(&mesh);
    let gate = vec![0.95; mesh.num_nodes()];
    let mut with_diffusion = cfg.materials.clone();
    with_diffusion.tumor_diffusion = 1e-13;
    c.bench_function("phase step 64x64", |b| {
        b.iter(|| {
            stepper
                .step(black_box(&phases), &gate, &gate, cfg.numerics.slow_dt, 0.77e-5, &with_diffusion)
                .unwrap()
        })
    });
}

fn fast_solver(cfg: &SimulationConfig) -> FastSolver {
    let d = &cfg.domain;
    let mesh = build_structured_mesh(d.length, 128, 128, Some(Face::Bottom)).unwrap();
    let medium = WaveMedium::uniform(&cfg.materials, &mesh, cfg.wave.eta_culture).unwrap();
    FastSolver::new(mesh, medium, FastControls::from(&cfg.numerics)).unwrap()
}

fn wave(c: &mut Criterion) {
    let cfg = config();
    let solver = fast_solver(&cfg);
    let (dt, _) = solver.period_step(cfg.wave.frequency);
    let drive = Drive::new(cfg.wave.frequency, 1e-10);
    let mut field = WaveField::at_rest(solver.mesh(), dt);
    c.bench_function("wave step 128x128", |b| {
        b.iter(|| solver.step_wave(black_box(&mut field), Some(drive)).unwrap())
    });

    let mut group = c.benchmark_group("steady state");
    group.sample_size(10);
    group.bench_function("5 MHz from rest 128x128", |b| {
        b.iter(|| fast_solver(&cfg).run_to_steady_state(drive).unwrap())
    });
    group.finish();
}

fn viability(c: &mut Criterion) {
    let cfg = config();
    let p = &cfg.mechano.tumor;
    let table = PhaseTable::new(cfg.numerics.quadrature_points);
    let n = 65 * 65;
    let slow: Vec<f64> = (0..n).map(|i| -100.0 + 0.05 * i as f64).collect();
    let amp: Vec<f64> = (0..n).map(|i| 1500.0 * (i % 65) as f64 / 64.0).collect();
    c.bench_function("viability field 65x65 nodes", |b| {
        b.iter(|| {
            slow.iter()
                .zip(&amp)
                .map(|(&s, &a)| table.average(s, a, p))
                .sum::<f64>()
        })
    });
}

fn control_run(c: &mut Criterion) {
    let mut cfg = config();
    cfg.experiment.preset = ExperimentPreset::Control;
    cfg.numerics.total_time = 86_400.0;
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("control run 1 day", |b| b.iter(|| liusim_core::run_simulation(&cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, slow_step, phase_step, wave, viability, control_run);
criterion_main!(benches);
