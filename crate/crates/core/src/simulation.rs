//! The two-timescale loop and its summary metrics.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentPreset, SimulationConfig};
use crate::error::{Error, Result};
use crate::io::{write_snapshot, Snapshot};
use crate::materials::derive_elastic_moduli;
use crate::mechano::PhaseTable;
use crate::mesh::{build_structured_mesh, initial_phase_fields, integrate_field, Mesh, PhaseState, Transfer};
use crate::phases::PhaseStepper;
use crate::poroelastic::{simulation_solver, PoroelasticState, SlowSolver};
use crate::wave::{
    fast_mesh, viscosity_map, CycleDiagnostics, Drive, FastControls, FastSolver, UltrasonicStressField, WaveMedium,
};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Metrics recorded after every slow step (and once at t = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeRecord {
    /// Time, s.
    pub time: f64,
    /// ∫φ_T dA, m².
    pub tumor_integral: f64,
    pub healthy_integral: f64,
    pub ecm_integral: f64,
    pub sigma_h_min: f64,
    pub sigma_h_max: f64,
    pub sigma_h_mean: f64,
    pub amp_mean: f64,
    pub amp_max: f64,
    pub viability_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRef {
    pub step: usize,
    pub time: f64,
    pub path: PathBuf,
}

/// Cost and convergence of one fast solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FastSolveRecord {
    pub slow_step: usize,
    pub cycles: usize,
    pub steps_per_period: usize,
    pub wall_seconds: f64,
    pub history: Vec<CycleDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub records: Vec<TimeRecord>,
    pub snapshots: Vec<SnapshotRef>,
    pub config_hash: String,
    pub non_wave_hash: String,
    pub code_version: &'static str,
    pub wall_seconds: f64,
    pub fast_solves: Vec<FastSolveRecord>,
    /// Total number of negative phase values clamped to zero.
    pub clamped: usize,
    pub mesh: Mesh,
    pub phases: PhaseState,
    pub slow: PoroelasticState,
    /// Ultrasonic amplitude on the slow grid used in the last step.
    pub amplitude: Vec<f64>,
    pub viability_tumor: Vec<f64>,
    pub viability_healthy: Vec<f64>,
    /// Last fast solve on its own grid.
    pub fast: Option<(Mesh, UltrasonicStressField)>,
}

impl SimulationResult {
    /// ∫φ_T dA at `time` (s), linearly interpolated between records.
    pub fn tumor_integral_at(&self, time: f64) -> Result<f64> {
        interpolate(&self.records, time, |r| r.tumor_integral)
    }

    pub fn healthy_integral_at(&self, time: f64) -> Result<f64> {
        interpolate(&self.records, time, |r| r.healthy_integral)
    }

    /// Tumor integral normalised by its initial value.
    pub fn normalized_tumor(&self) -> Vec<(f64, f64)> {
        let n0 = self.records.first().map_or(1.0, |r| r.tumor_integral);
        self.records
            .iter()
            .map(|r| (r.time, r.tumor_integral / n0))
            .collect()
    }
}

fn interpolate(records: &[TimeRecord], time: f64, get: impl Fn(&TimeRecord) -> f64) -> Result<f64> {
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidArgument("empty time series".into())),
    };
    let tol = 1e-9 * last.time.abs().max(1.0);
    if time < first.time - tol || time > last.time + tol {
        return Err(Error::InvalidArgument(format!(
            "time {time} s outside simulated range [{}, {}] s",
            first.time, last.time
        )));
    }
    let k = records.partition_point(|r| r.time < time);
    if k == 0 {
        return Ok(get(first));
    }
    if k >= records.len() {
        return Ok(get(last));
    }
    let (a, b) = (&records[k - 1], &records[k]);
    let s = (time - a.time) / (b.time - a.time);
    Ok(get(a) + s * (get(b) - get(a)))
}

/// Fast-scale context of a sonicated run.
struct Sonication {
    solver: FastSolver,
    to_fast: Transfer,
    to_slow: Transfer,
    drive: Drive,
    last_tumor: Option<Vec<f64>>,
    amplitude: Vec<f64>,
    last: Option<UltrasonicStressField>,
}

/// Step-by-step driver; `run_simulation` wraps it.
pub struct Simulation {
    config: SimulationConfig,
    mesh: Mesh,
    slow_solver: SlowSolver,
    slow: PoroelasticState,
    phases: PhaseState,
    stepper: PhaseStepper,
    table: PhaseTable,
    sonication: Option<Sonication>,
    zero_amplitude: Vec<f64>,
    viability_tumor: Vec<f64>,
    viability_healthy: Vec<f64>,
    step: usize,
    records: Vec<TimeRecord>,
    snapshots: Vec<SnapshotRef>,
    fast_solves: Vec<FastSolveRecord>,
    clamped: usize,
}

impl Simulation {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let sonicated = match config.experiment.preset {
            ExperimentPreset::Control => false,
            ExperimentPreset::Sonicated => true,
            ExperimentPreset::Sweep => {
                return Err(Error::validation(
                    "experiment.preset",
                    "the sweep preset needs a grid; use the sweep runner",
                ))
            }
        };
        let d = &config.domain;
        let mesh = build_structured_mesh(d.length, d.nx, d.ny, None)?;
        let phases = initial_phase_fields(&mesh, &config.init, d.tumor_radius)?;
        let (slow_solver, slow) = simulation_solver(&mesh, config)?;
        let n = mesh.num_nodes();

        let sonication = if sonicated && config.wave.pressure > 0.0 {
            let m = &config.materials;
            let moduli = derive_elastic_moduli(m)?;
            let fmesh = fast_mesh(&mesh, &config.wave, moduli.p_wave_speed, config.numerics.elements_per_wavelength)?;
            let medium = WaveMedium::uniform(m, &fmesh, config.wave.eta_culture)?;
            let to_fast = Transfer::new(&mesh, &fmesh);
            let to_slow = Transfer::new(&fmesh, &mesh);
            let solver = FastSolver::new(fmesh, medium, FastControls::from(&config.numerics))?;
            Some(Sonication {
                solver,
                to_fast,
                to_slow,
                drive: Drive::from_pressure(&config.wave, &moduli, m.density)?,
                last_tumor: None,
                amplitude: vec![0.0; n],
                last: None,
            })
        } else {
            None
        };

        let mut sim = Self {
            table: PhaseTable::new(config.numerics.quadrature_points),
            stepper: PhaseStepper::new(&mesh),
            config: config.clone(),
            slow_solver,
            slow,
            phases,
            sonication,
            zero_amplitude: vec![0.0; n],
            viability_tumor: vec![0.0; n],
            viability_healthy: vec![0.0; n],
            step: 0,
            records: Vec::new(),
            snapshots: Vec::new(),
            fast_solves: Vec::new(),
            clamped: 0,
            mesh,
        };
        let record = sim.record(0.0)?;
        sim.records.push(record);
        sim.maybe_snapshot()?;
        Ok(sim)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn phases(&self) -> &PhaseState {
        &self.phases
    }

    pub fn records(&self) -> &[TimeRecord] {
        &self.records
    }

    pub fn time(&self) -> f64 {
        self.slow.time
    }

    fn amplitude(&self) -> &[f64] {
        self.sonication
            .as_ref()
            .map_or(&self.zero_amplitude, |s| &s.amplitude)
    }

    /// Advances one slow step.
    pub fn advance(&mut self) -> Result<()> {
        let step = self.step;
        self.advance_inner().map_err(|e| Error::AtSlowStep {
            step,
            source: Box::new(e),
        })
    }

    fn advance_inner(&mut self) -> Result<()> {
        let dt = self.config.numerics.slow_dt;
        let t = self.slow.time;

        self.slow = self.slow_solver.step(&self.slow, &self.phases, dt)?;
        self.phases.zeta.clone_from(&self.slow.zeta);

        if let Some(son) = self.sonication.as_mut() {
            let stale = match &son.last_tumor {
                None => true,
                Some(prev) => {
                    !self.config.numerics.cache_enabled
                        || relative_rms_change(prev, &self.phases.tumor) > self.config.numerics.cache_threshold
                }
            };
            if stale {
                let tumor_fast = son.to_fast.apply(&self.phases.tumor);
                let w = &self.config.wave;
                let eta_nodes = viscosity_map(&tumor_fast, self.phases.tumor_peak, w.eta_culture, w.eta_tumor);
                son.solver.set_viscosity(son.solver.mesh().element_means(&eta_nodes))?;
                let field = son.solver.run_to_steady_state(son.drive)?;
                son.amplitude = son.to_slow.apply(&field.amplitude);
                self.fast_solves.push(FastSolveRecord {
                    slow_step: self.step,
                    cycles: field.cycles,
                    steps_per_period: field.steps_per_period,
                    wall_seconds: field.wall_seconds,
                    history: field.history.clone(),
                });
                log::debug!(
                    "fast solve at slow step {}: {} cycles, {:.2} s",
                    self.step,
                    field.cycles,
                    field.wall_seconds
                );
                son.last = Some(field);
                son.last_tumor = Some(self.phases.tumor.clone());
            }
        }

        let slow_stress: Vec<f64> = match self.config.numerics.imposed_slow_hydrostatic {
            Some(s) => vec![s; self.mesh.num_nodes()],
            None => self.slow.hydrostatic.clone(),
        };
        let amp = self.amplitude().to_vec();
        self.viability_tumor = self.table.field(&slow_stress, &amp, &self.config.mechano.tumor);
        self.viability_healthy = self.table.field(&slow_stress, &amp, &self.config.mechano.healthy);

        let m = &self.config.materials;
        let out = self.stepper.step(
            &self.phases,
            &self.viability_tumor,
            &self.viability_healthy,
            dt,
            m.tumor_proliferation_at(t),
            m,
        )?;
        if out.clamped > 0 {
            log::warn!("slow step {}: {} negative phase values clamped", self.step, out.clamped);
        }
        self.clamped += out.clamped;
        self.phases = out.phases;
        self.step += 1;

        let record = self.record(t + dt)?;
        self.records.push(record);
        self.maybe_snapshot()
    }

    fn record(&self, time: f64) -> Result<TimeRecord> {
        let h = &self.slow.hydrostatic;
        let amp = self.amplitude();
        let n = h.len() as f64;
        Ok(TimeRecord {
            time,
            tumor_integral: integrate_field(&self.mesh, &self.phases.tumor)?,
            healthy_integral: integrate_field(&self.mesh, &self.phases.healthy)?,
            ecm_integral: integrate_field(&self.mesh, &self.phases.ecm)?,
            sigma_h_min: h.iter().copied().fold(f64::INFINITY, f64::min),
            sigma_h_max: h.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sigma_h_mean: h.iter().sum::<f64>() / n,
            amp_mean: amp.iter().sum::<f64>() / n,
            amp_max: amp.iter().copied().fold(0.0, f64::max),
            viability_mean: self.viability_tumor.iter().sum::<f64>() / n,
        })
    }

    fn maybe_snapshot(&mut self) -> Result<()> {
        let o = &self.config.output;
        if o.snapshot_every == 0 || o.dir.is_empty() || self.step % o.snapshot_every != 0 {
            return Ok(());
        }
        let dir = PathBuf::from(&o.dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("snapshot_{:05}.vtk", self.step));
        let snap = self.snapshot();
        write_snapshot(&snap, &path)?;
        self.snapshots.push(SnapshotRef {
            step: self.step,
            time: self.slow.time,
            path,
        });
        Ok(())
    }

    /// Current nodal fields.
    pub fn snapshot(&self) -> Snapshot<'_> {
        Snapshot {
            time: self.slow.time,
            mesh: &self.mesh,
            fields: vec![
                ("phi_T".into(), self.phases.tumor.clone()),
                ("phi_H".into(), self.phases.healthy.clone()),
                ("phi_M".into(), self.phases.ecm.clone()),
                ("phi_F".into(), self.phases.fluid()),
                ("pressure".into(), self.slow.pressure.clone()),
                ("sigma_h".into(), self.slow.hydrostatic.clone()),
                ("M_T".into(), self.viability_tumor.clone()),
                ("amplitude".into(), self.amplitude().to_vec()),
            ],
        }
    }

    pub fn finish(self, started: Instant) -> SimulationResult {
        let fast = self
            .sonication
            .as_ref()
            .and_then(|s| s.last.clone().map(|f| (s.solver.mesh().clone(), f)));
        let amplitude = self.amplitude().to_vec();
        SimulationResult {
            records: self.records,
            snapshots: self.snapshots,
            config_hash: self.config.hash(),
            non_wave_hash: self.config.non_wave_hash(),
            code_version: env!("CARGO_PKG_VERSION"),
            wall_seconds: started.elapsed().as_secs_f64(),
            fast_solves: self.fast_solves,
            clamped: self.clamped,
            mesh: self.mesh,
            phases: self.phases,
            slow: self.slow,
            amplitude,
            viability_tumor: self.viability_tumor,
            viability_healthy: self.viability_healthy,
            fast,
        }
    }
}

fn relative_rms_change(old: &[f64], new: &[f64]) -> f64 {
    let num: f64 = old.iter().zip(new).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = old.iter().map(|a| a * a).sum();
    if den == 0.0 {
        if num == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (num / den).sqrt()
    }
}

/// Runs the configured experiment to `total_time`.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationResult> {
    let started = Instant::now();
    let mut sim = Simulation::new(config)?;
    for _ in 0..config.slow_steps() {
        sim.advance()?;
    }
    Ok(sim.finish(started))
}

/// Percentage decrease of ∫φ_T dA at `day` relative to the control run.
pub fn proliferation_decrease(sonicated: &SimulationResult, control: &SimulationResult, day: f64) -> Result<f64> {
    if sonicated.non_wave_hash != control.non_wave_hash {
        return Err(Error::MismatchedConfigs(
            "sonicated and control runs must share every parameter outside [wave]".into(),
        ));
    }
    let t = day * SECONDS_PER_DAY;
    let s = sonicated.tumor_integral_at(t)?;
    let c = control.tumor_integral_at(t)?;
    Ok(100.0 * (1.0 - s / c))
}

/// One sonication setting of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub frequency: f64,
    pub pressure: f64,
    pub eta_culture: f64,
    pub eta_tumor: f64,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub control: SimulationResult,
    /// Per-row day-3 decrease, in input order.
    pub rows: Vec<(SweepRow, Result<f64>)>,
    pub day: f64,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|(_, r)| r.is_err()).count()
    }
}

/// Configuration of one sweep row: the base with its wave section replaced.
pub fn sweep_row_config(base: &SimulationConfig, row: &SweepRow) -> SimulationConfig {
    let mut c = base.clone();
    c.experiment.preset = ExperimentPreset::Sonicated;
    c.wave.frequency = row.frequency;
    c.wave.pressure = row.pressure;
    c.wave.eta_culture = row.eta_culture;
    c.wave.eta_tumor = row.eta_tumor;
    c.output.snapshot_every = 0;
    c
}

/// One shared control run plus one sonicated run per row, evaluated at the final day.
pub fn run_sweep(base: &SimulationConfig, grid: &[SweepRow]) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let mut control_cfg = base.clone();
    control_cfg.experiment.preset = ExperimentPreset::Control;
    control_cfg.output.snapshot_every = 0;
    let day = base.numerics.total_time / SECONDS_PER_DAY;
    let (control, rows) = rayon::join(
        || run_simulation(&control_cfg),
        || {
            grid.par_iter()
                .map(|row| {
                    let cfg = sweep_row_config(base, row);
                    (cfg.validate().and_then(|_| run_simulation(&cfg)), *row)
                })
                .collect::<Vec<_>>()
        },
    );
    let control = control?;
    let rows = rows
        .into_iter()
        .map(|(res, row)| (row, res.and_then(|r| proliferation_decrease(&r, &control, day))))
        .collect();
    Ok(SweepOutcome { control, rows, day })
}
