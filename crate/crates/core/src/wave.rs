//! Explicit viscoelastic P-wave propagation to a stationary harmonic regime.
//!
//! Central differences in time with a lumped mass. The Kelvin–Voigt
//! volumetric viscosity is lagged by half a step; Lysmer dashpots on the
//! absorbing faces are diagonal and treated time-centred.

use std::f64::consts::PI;
use std::time::Instant;

use crate::config::{MaterialParams, NumericsConfig, WaveConfig};
use crate::error::{Error, Result};
use crate::materials::{derive_elastic_moduli, pressure_to_displacement_amplitude, ElasticModuli};
use crate::mesh::{build_mesh, shape, BoundaryTag, Face, Mesh, GAUSS_POINTS};
use crate::poroelastic::Stress;

/// Transducer displacement (0, A sin 2πft).
pub fn transducer_displacement(t: f64, amplitude: f64, f: f64) -> [f64; 2] {
    [0.0, amplitude * (2.0 * PI * f * t).sin()]
}

/// Undrained Kelvin–Voigt stress with purely volumetric viscosity.
pub fn kelvin_voigt_stress(strain: [f64; 3], trace_rate: f64, m: &ElasticModuli, eta: f64) -> Stress {
    let tr = strain[0] + strain[1];
    let dev = |e: f64| 2.0 * m.shear * (e - tr / 3.0);
    let vol = m.bulk_undrained * tr + eta * trace_rate;
    [
        dev(strain[0]) + vol,
        dev(strain[1]) + vol,
        m.shear * strain[2],
        dev(0.0) + vol,
    ]
}

/// Trapezoidal mean of samples taken at t = 0, T/n, …, T (n + 1 values).
pub fn cycle_average(samples: &[f64], samples_per_period: usize) -> Result<f64> {
    if samples_per_period == 0 || samples.len() != samples_per_period + 1 {
        return Err(Error::IncompletePeriod {
            expected: samples_per_period + 1,
            got: samples.len(),
        });
    }
    let n = samples_per_period;
    let inner: f64 = samples[1..n].iter().sum();
    Ok((inner + 0.5 * (samples[0] + samples[n])) / n as f64)
}

/// Nodal bulk viscosity η_c + (η_T − η_c)·min(1, φ_T/φ̄_T0).
pub fn viscosity_map(tumor: &[f64], peak: f64, eta_culture: f64, eta_tumor: f64) -> Vec<f64> {
    tumor
        .iter()
        .map(|&t| {
            let s = if peak > 0.0 { (t / peak).clamp(0.0, 1.0) } else { 0.0 };
            eta_culture + (eta_tumor - eta_culture) * s
        })
        .collect()
}

/// Grid for the fast problem: the slow domain refined to at least
/// `elements_per_wavelength` and never coarser than the slow grid.
pub fn fast_mesh(slow: &Mesh, wave: &WaveConfig, c_p: f64, elements_per_wavelength: f64) -> Result<Mesh> {
    let lambda = wave.wavelength(c_p);
    let need = |l: f64, n: usize| ((l * elements_per_wavelength / lambda).ceil() as usize).max(n);
    build_mesh(
        slow.lx,
        slow.ly,
        need(slow.lx, slow.nx),
        need(slow.ly, slow.ny),
        Some(wave.emitter),
    )
}

/// Material data of the fast problem.
#[derive(Debug, Clone)]
pub struct WaveMedium {
    pub moduli: ElasticModuli,
    pub density: f64,
    pub absorbing_constant: f64,
    /// Bulk viscosity per element, Pa·s.
    pub viscosity: Vec<f64>,
}

impl WaveMedium {
    pub fn uniform(m: &MaterialParams, mesh: &Mesh, eta: f64) -> Result<Self> {
        Ok(Self {
            moduli: derive_elastic_moduli(m)?,
            density: m.density,
            absorbing_constant: m.absorbing_constant,
            viscosity: vec![eta; mesh.num_elements()],
        })
    }
}

/// Time-stepping controls of the fast solver.
#[derive(Debug, Clone, Copy)]
pub struct FastControls {
    pub cfl: f64,
    pub steady_state_tol: f64,
    pub max_cycles: usize,
    pub elements_per_wavelength: f64,
}

impl From<&NumericsConfig> for FastControls {
    fn from(n: &NumericsConfig) -> Self {
        Self {
            cfl: n.fast_cfl,
            steady_state_tol: n.steady_state_tol,
            max_cycles: n.max_cycles,
            elements_per_wavelength: n.elements_per_wavelength,
        }
    }
}

/// Harmonic drive applied on the emitting face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    pub frequency: f64,
    /// Displacement amplitude A, m.
    pub amplitude: f64,
    /// Length of a sin² start-up envelope, in periods (0 switches it off).
    pub ramp_periods: f64,
}

impl Drive {
    pub fn new(frequency: f64, amplitude: f64) -> Self {
        Self {
            frequency,
            amplitude,
            ramp_periods: 0.0,
        }
    }

    pub fn from_pressure(wave: &WaveConfig, m: &ElasticModuli, density: f64) -> Result<Self> {
        Ok(Self::new(
            wave.frequency,
            pressure_to_displacement_amplitude(wave.pressure, density, m.p_wave_speed, wave.frequency)?,
        ))
    }

    /// Emitter displacement at time `t`, including the start-up envelope.
    pub fn displacement(&self, t: f64) -> [f64; 2] {
        let [x, y] = transducer_displacement(t, self.amplitude, self.frequency);
        let s = t * self.frequency;
        if s >= self.ramp_periods {
            return [x, y];
        }
        let w = (0.5 * PI * s / self.ramp_periods).sin().powi(2);
        [w * x, w * y]
    }
}

/// Relative amplitude below which a node's cycle mean is judged against
/// the floor instead of its own amplitude. Deep-shadow nodes sit many
/// orders of magnitude under the peak, where the residual static stress
/// decays on the shear timescale and carries no mechanical signal.
pub const MEAN_FLOOR: f64 = 1e-4;

/// Start-up envelope used when a fast solve begins from rest. Switching the
/// sine on abruptly leaves a slowly relaxing static stress behind.
pub const RAMP_PERIODS: f64 = 4.0;

/// Fast-scale kinematic state. `velocity` is the half-step velocity v_{n−1/2}.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Nodal hydrostatic stress σ_u^h at the current step, Pa.
    pub hydrostatic: Vec<f64>,
    pub step: u64,
    pub dt: f64,
}

impl WaveField {
    pub fn at_rest(mesh: &Mesh, dt: f64) -> Self {
        let n = mesh.num_nodes();
        Self {
            displacement: vec![0.0; 2 * n],
            velocity: vec![0.0; 2 * n],
            hydrostatic: vec![0.0; n],
            step: 0,
            dt,
        }
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }
}

/// One row of the per-cycle convergence record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleDiagnostics {
    pub cycle: usize,
    pub rms_amplitude: f64,
    pub residual: f64,
    /// Largest |cycle mean| / amplitude over all nodes, with amplitudes
    /// floored at `MEAN_FLOOR` times the peak.
    pub mean_ratio: f64,
}

/// Stationary ultrasonic stress on the fast grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UltrasonicStressField {
    /// Per-node amplitude of σ_u^h, Pa.
    pub amplitude: Vec<f64>,
    /// Per-node cycle mean of σ_u^h, Pa.
    pub mean: Vec<f64>,
    pub cycles: usize,
    pub converged: bool,
    pub history: Vec<CycleDiagnostics>,
    pub dt: f64,
    pub steps_per_period: usize,
    pub wall_seconds: f64,
}

/// Reference-element data shared by all elements of the uniform grid.
#[derive(Debug, Clone)]
struct Reference {
    ke: [[f64; 8]; 8],
    /// Volumetric strain rows b_q at the Gauss points.
    bvol: [[f64; 8]; 4],
    n: [[f64; 4]; 4],
    w: f64,
}

impl Reference {
    fn new(mesh: &Mesh, m: &ElasticModuli) -> Self {
        let lam = m.bulk_undrained - 2.0 / 3.0 * m.shear;
        let mu = m.shear;
        let d = [
            [lam + 2.0 * mu, lam, 0.0],
            [lam, lam + 2.0 * mu, 0.0],
            [0.0, 0.0, mu],
        ];
        let w = mesh.det_j();
        let mut r = Reference {
            ke: [[0.0; 8]; 8],
            bvol: [[0.0; 8]; 4],
            n: [[0.0; 4]; 4],
            w,
        };
        for (q, &(xi, eta)) in GAUSS_POINTS.iter().enumerate() {
            let g = mesh.shape_gradients(xi, eta);
            let mut b = [[0.0; 8]; 3];
            for a in 0..4 {
                b[0][2 * a] = g[a][0];
                b[1][2 * a + 1] = g[a][1];
                b[2][2 * a] = g[a][1];
                b[2][2 * a + 1] = g[a][0];
                r.bvol[q][2 * a] = g[a][0];
                r.bvol[q][2 * a + 1] = g[a][1];
            }
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for c in 0..3 {
                            s += b[p][i] * d[p][c] * b[c][j];
                        }
                    }
                    r.ke[i][j] += s * w;
                }
            }
            r.n[q] = shape(xi, eta);
        }
        r
    }

    fn viscous_matrix(&self) -> [[f64; 8]; 8] {
        let mut v = [[0.0; 8]; 8];
        for b in &self.bvol {
            for i in 0..8 {
                for j in 0..8 {
                    v[i][j] += b[i] * b[j] * self.w;
                }
            }
        }
        v
    }
}

fn largest_eigenvalue(a: &[[f64; 8]; 8]) -> f64 {
    let mut x = [1.0, 0.7, -0.3, 0.45, -0.9, 0.2, 0.6, -0.55];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let y: [f64; 8] = std::array::from_fn(|i| (0..8).map(|j| a[i][j] * x[j]).sum());
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.map(|v| v / norm);
    }
    lambda
}

/// Explicit solver for one fast grid, reusable across viscosity updates.
#[derive(Debug, Clone)]
pub struct FastSolver {
    mesh: Mesh,
    medium: WaveMedium,
    controls: FastControls,
    reference: Reference,
    mass: Vec<f64>,
    /// Lumped dashpot coefficient per dof.
    dashpot: Vec<f64>,
    fixed: Vec<bool>,
    emitter_nodes: Vec<usize>,
    inv_weights: Vec<f64>,
    lambda_k: f64,
    lambda_v: f64,
    field: Option<WaveField>,
}

impl FastSolver {
    pub fn new(mesh: Mesh, medium: WaveMedium, controls: FastControls) -> Result<Self> {
        Self::with_rollers(mesh, medium, controls, &[])
    }

    /// Like [`FastSolver::new`], with zero normal displacement instead of
    /// absorption on the non-emitting `rollers` faces.
    pub fn with_rollers(mesh: Mesh, medium: WaveMedium, controls: FastControls, rollers: &[Face]) -> Result<Self> {
        if medium.viscosity.len() != mesh.num_elements() {
            return Err(Error::SizeMismatch {
                expected: mesh.num_elements(),
                got: medium.viscosity.len(),
            });
        }
        if !(controls.cfl > 0.0 && controls.cfl <= 0.5) {
            return Err(Error::InvalidArgument(format!("fast CFL must lie in (0, 0.5], got {}", controls.cfl)));
        }
        let n = mesh.num_nodes();
        let reference = Reference::new(&mesh, &medium.moduli);
        let weights = mesh.lumped_weights();
        let mass: Vec<f64> = weights.iter().map(|w| w * medium.density).collect();
        let rho = medium.density;
        let cp = medium.moduli.p_wave_speed;
        let cs = medium.moduli.s_wave_speed(rho);
        let mut dashpot = vec![0.0; 2 * n];
        let mut fixed = vec![false; 2 * n];
        let mut emitter_nodes = Vec::new();
        for face in Face::ALL {
            match mesh.boundary_tag(face) {
                BoundaryTag::Emitting => {
                    for node in mesh.face_nodes(face) {
                        fixed[2 * node] = true;
                        fixed[2 * node + 1] = true;
                        emitter_nodes.push(node);
                    }
                }
                BoundaryTag::Absorbing if rollers.contains(&face) => {
                    let normal = usize::from(matches!(face, Face::Bottom | Face::Top));
                    for node in mesh.face_nodes(face) {
                        fixed[2 * node + normal] = true;
                    }
                }
                BoundaryTag::Absorbing => {
                    let le = mesh.edge_length(face);
                    let normal_x = matches!(face, Face::Left | Face::Right);
                    let (cx, cy) = if normal_x { (cp, cs) } else { (cs, cp) };
                    let ka = medium.absorbing_constant;
                    for [a, b] in mesh.face_edges(face) {
                        for node in [a, b] {
                            dashpot[2 * node] += 0.5 * le * ka * rho * cx;
                            dashpot[2 * node + 1] += 0.5 * le * ka * rho * cy;
                        }
                    }
                }
            }
        }
        let lambda_k = largest_eigenvalue(&reference.ke);
        let lambda_v = largest_eigenvalue(&reference.viscous_matrix());
        Ok(Self {
            inv_weights: weights.iter().map(|w| 1.0 / w).collect(),
            mesh,
            medium,
            controls,
            reference,
            mass,
            dashpot,
            fixed,
            emitter_nodes,
            lambda_k,
            lambda_v,
            field: None,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn medium(&self) -> &WaveMedium {
        &self.medium
    }

    /// Replaces the per-element viscosity, keeping the current wave field as a warm start.
    pub fn set_viscosity(&mut self, viscosity: Vec<f64>) -> Result<()> {
        if viscosity.len() != self.mesh.num_elements() {
            return Err(Error::SizeMismatch {
                expected: self.mesh.num_elements(),
                got: viscosity.len(),
            });
        }
        self.medium.viscosity = viscosity;
        Ok(())
    }

    /// Largest stable step: ω²Δt² + 2cΔt < 4 from element bounds, with a 0.9
    /// safety factor, and never above CFL·h/c_p.
    pub fn stable_dt(&self) -> f64 {
        let me = self.medium.density * self.mesh.det_j();
        let w2 = self.lambda_k / me;
        let eta_max = self.medium.viscosity.iter().fold(0.0f64, |m, &v| m.max(v));
        let c = eta_max * self.lambda_v / me;
        let root = if w2 > 0.0 {
            (-c + (c * c + 4.0 * w2).sqrt()) / w2
        } else if c > 0.0 {
            2.0 / c
        } else {
            f64::INFINITY
        };
        let cfl = self.controls.cfl * self.mesh.h() / self.medium.moduli.p_wave_speed;
        (0.9 * root).min(cfl)
    }

    /// Time step dividing one drive period into an integer number of steps.
    pub fn period_step(&self, frequency: f64) -> (f64, usize) {
        let period = 1.0 / frequency;
        let steps = (period / self.stable_dt()).ceil().max(1.0) as usize;
        (period / steps as f64, steps)
    }

    /// Discrete energy ½v⁺ᵀMv⁺ + ½uₙᵀK uₙ₊₁ of the central-difference scheme,
    /// with uₙ = uₙ₊₁ − Δt v⁺.
    pub fn energy(&self, field: &WaveField) -> f64 {
        let kin: f64 = (0..field.velocity.len())
            .map(|i| 0.5 * self.mass[i / 2] * field.velocity[i] * field.velocity[i])
            .sum();
        let ku = self.stiffness_product(&field.displacement);
        let pot: f64 = ku
            .iter()
            .zip(&field.displacement)
            .zip(&field.velocity)
            .map(|((k, u), v)| k * (u - field.dt * v))
            .sum();
        kin + 0.5 * pot
    }

    fn stiffness_product(&self, u: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; u.len()];
        let ke = &self.reference.ke;
        for el in &self.mesh.elements {
            let ue: [f64; 8] = std::array::from_fn(|i| u[2 * el[i / 2] + i % 2]);
            for i in 0..8 {
                let s: f64 = (0..8).map(|j| ke[i][j] * ue[j]).sum();
                f[2 * el[i / 2] + i % 2] += s;
            }
        }
        f
    }

    /// Advances `field` by one step under `drive` (None holds the emitter at rest).
    pub fn step_wave(&self, field: &mut WaveField, drive: Option<Drive>) -> Result<()> {
        let limit = self.stable_dt();
        if field.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt: field.dt, limit });
        }
        let ndof = field.displacement.len();
        let dt = field.dt;
        let r = &self.reference;
        let eta = &self.medium.viscosity;
        let mut force = vec![0.0; ndof];
        let mut partial = vec![[0.0; 4]; self.mesh.num_elements()];
        let ku = self.medium.moduli.bulk_undrained;
        for (e, el) in self.mesh.elements.iter().enumerate() {
            let ue: [f64; 8] = std::array::from_fn(|i| field.displacement[2 * el[i / 2] + i % 2]);
            let ve: [f64; 8] = std::array::from_fn(|i| field.velocity[2 * el[i / 2] + i % 2]);
            let mut fe = [0.0; 8];
            for i in 0..8 {
                let row = &r.ke[i];
                let mut s = 0.0;
                for j in 0..8 {
                    s += row[j] * ue[j];
                }
                fe[i] = s;
            }
            let ee = eta[e];
            for q in 0..4 {
                let b = &r.bvol[q];
                let mut du = 0.0;
                let mut dv = 0.0;
                for j in 0..8 {
                    du += b[j] * ue[j];
                    dv += b[j] * ve[j];
                }
                partial[e][q] = ku * du + 0.5 * ee * dv;
                if ee != 0.0 {
                    let s = ee * dv * r.w;
                    for i in 0..8 {
                        fe[i] += s * b[i];
                    }
                }
            }
            for i in 0..8 {
                force[2 * el[i / 2] + i % 2] += fe[i];
            }
        }

        let old_u = std::mem::take(&mut field.displacement);
        let old_v = std::mem::take(&mut field.velocity);
        let mut u = old_u.clone();
        let mut v = old_v;
        for i in 0..ndof {
            if self.fixed[i] {
                continue;
            }
            let m = self.mass[i / 2];
            let c = 0.5 * dt * self.dashpot[i];
            v[i] = ((m - c) * v[i] - dt * force[i]) / (m + c);
            u[i] += dt * v[i];
        }
        let t_next = (field.step + 1) as f64 * dt;
        let target = drive.map_or([0.0, 0.0], |d| d.displacement(t_next));
        for &node in &self.emitter_nodes {
            for c in 0..2 {
                let i = 2 * node + c;
                u[i] = target[c];
                v[i] = (u[i] - old_u[i]) / dt;
            }
        }

        let hyd = &mut field.hydrostatic;
        hyd.iter_mut().for_each(|h| *h = 0.0);
        for (e, el) in self.mesh.elements.iter().enumerate() {
            let ee = eta[e];
            for q in 0..4 {
                let mut s = partial[e][q];
                if ee != 0.0 {
                    let b = &r.bvol[q];
                    let mut dv = 0.0;
                    for j in 0..8 {
                        dv += b[j] * v[2 * el[j / 2] + j % 2];
                    }
                    s += 0.5 * ee * dv;
                }
                let sw = s * r.w;
                for a in 0..4 {
                    hyd[el[a]] += r.n[q][a] * sw;
                }
            }
        }
        for (h, iw) in hyd.iter_mut().zip(&self.inv_weights) {
            *h *= iw;
        }
        // The stress above belongs to the pre-update step n.
        field.displacement = u;
        field.velocity = v;
        field.step += 1;
        Ok(())
    }

    /// Drives the medium cycle by cycle until the σ_u^h amplitude field is
    /// stationary, starting from the last field of a previous call if any.
    pub fn run_to_steady_state(&mut self, drive: Drive) -> Result<UltrasonicStressField> {
        let start = Instant::now();
        let n = self.mesh.num_nodes();
        let (dt, steps) = self.period_step(drive.frequency);
        let lambda = self.medium.moduli.p_wave_speed / drive.frequency;
        let epw = lambda / self.mesh.h();
        if epw < self.controls.elements_per_wavelength - 1e-9 {
            log::warn!("fast grid resolves only {epw:.1} elements per wavelength");
        }
        if drive.amplitude == 0.0 {
            self.field = None;
            return Ok(UltrasonicStressField {
                amplitude: vec![0.0; n],
                mean: vec![0.0; n],
                cycles: 1,
                converged: true,
                history: vec![CycleDiagnostics {
                    cycle: 1,
                    rms_amplitude: 0.0,
                    residual: 0.0,
                    mean_ratio: 0.0,
                }],
                dt,
                steps_per_period: steps,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
        }

        let (mut field, drive) = match self.field.take() {
            Some(mut f) => {
                // Warm start: keep the state at the period boundary, re-express the step index.
                f.step = 0;
                f.dt = dt;
                (f, Drive { ramp_periods: 0.0, ..drive })
            }
            None => (
                WaveField::at_rest(&self.mesh, dt),
                Drive {
                    ramp_periods: RAMP_PERIODS,
                    ..drive
                },
            ),
        };

        let mut previous: Option<Vec<f64>> = None;
        let mut history = Vec::new();
        let mut hi = vec![f64::NEG_INFINITY; n];
        let mut lo = vec![f64::INFINITY; n];
        let mut sum = vec![0.0; n];
        for cycle in 1..=self.controls.max_cycles {
            hi.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            lo.iter_mut().for_each(|v| *v = f64::INFINITY);
            sum.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..steps {
                self.step_wave(&mut field, Some(drive))?;
                // σ_u^h just computed belongs to the step before the update; sample
                // steps 0..N−1 of the cycle, which is the periodic trapezoid rule.
                for i in 0..n {
                    let s = field.hydrostatic[i];
                    hi[i] = hi[i].max(s);
                    lo[i] = lo[i].min(s);
                    sum[i] += s;
                }
            }
            if field.displacement.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: (cycle * steps) as usize,
                });
            }
            let amplitude: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| 0.5 * (h - l)).collect();
            let mean: Vec<f64> = sum.iter().map(|s| s / steps as f64).collect();
            let rms = rms(&amplitude);
            let residual = match &previous {
                Some(p) => {
                    let diff: Vec<f64> = amplitude.iter().zip(p).map(|(a, b)| a - b).collect();
                    if rms > 0.0 { self::rms(&diff) / rms } else { 0.0 }
                }
                None => f64::INFINITY,
            };
            let floor = MEAN_FLOOR * amplitude.iter().copied().fold(0.0, f64::max);
            let mean_ratio = amplitude
                .iter()
                .zip(&mean)
                .map(|(a, m)| if m.abs() == 0.0 { 0.0 } else { m.abs() / a.max(floor) })
                .fold(0.0f64, f64::max);
            history.push(CycleDiagnostics {
                cycle,
                rms_amplitude: rms,
                residual,
                mean_ratio,
            });
            if residual < self.controls.steady_state_tol && mean_ratio <= 1e-3 {
                self.field = Some(field);
                return Ok(UltrasonicStressField {
                    amplitude,
                    mean,
                    cycles: cycle,
                    converged: true,
                    history,
                    dt,
                    steps_per_period: steps,
                    wall_seconds: start.elapsed().as_secs_f64(),
                });
            }
            previous = Some(amplitude);
        }
        Err(Error::NoSteadyState {
            cycles: self.controls.max_cycles,
            history: history.iter().map(|h| h.residual).collect(),
        })
    }
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn controls() -> FastControls {
        FastControls {
            cfl: 0.5,
            steady_state_tol: 1e-2,
            max_cycles: 200,
            elements_per_wavelength: 10.0,
        }
    }

    #[test]
    fn transducer_examples() {
        let (a, f) = (1e-10, 5e6);
        assert_eq!(transducer_displacement(0.0, a, f), [0.0, 0.0]);
        assert_relative_eq!(transducer_displacement(0.25 / f, a, f)[1], a, max_relative = 1e-15);
        assert!(transducer_displacement(0.5 / f, a, f)[1].abs() < 1e-15 * a * 10.0);
    }

    #[test]
    fn kelvin_voigt_structure() {
        let m = derive_elastic_moduli(&MaterialParams::default()).unwrap();
        assert_eq!(kelvin_voigt_stress([0.0; 3], 0.0, &m, 2.0), [0.0; 4]);
        let s = kelvin_voigt_stress([0.0; 3], 3.0, &m, 2.0);
        assert_eq!(s, [6.0, 6.0, 0.0, 6.0]);
        let e = [1e-6, -3e-7, 2e-7];
        let s = kelvin_voigt_stress(e, 0.0, &m, 5.0);
        let mu = ElasticModuli { bulk_drained: m.bulk_undrained, ..m };
        assert_eq!(s, crate::poroelastic::effective_stress(e, &mu));
    }

    #[test]
    fn cycle_average_examples() {
        let n = 64;
        let sine: Vec<f64> = (0..=n).map(|k| (2.0 * PI * k as f64 / n as f64).sin()).collect();
        assert!(cycle_average(&sine, n).unwrap().abs() < 1e-3);
        assert_eq!(cycle_average(&[2.5; 9], 8).unwrap(), 2.5);
        assert!(matches!(cycle_average(&[1.0; 5], 8), Err(Error::IncompletePeriod { .. })));
    }

    #[test]
    fn viscosity_map_limits() {
        let eta = viscosity_map(&[0.0, 0.075, 0.15, 0.3], 0.15, 0.05, 2.0);
        assert_eq!(eta[0], 0.05);
        assert_relative_eq!(eta[1], 1.025, max_relative = 1e-14);
        assert_eq!(eta[2], 2.0);
        assert_eq!(eta[3], 2.0);
    }

    fn column(nx: usize, ny: usize, ly: f64, eta: f64) -> FastSolver {
        let m = MaterialParams::default();
        let mesh = build_mesh(ly / ny as f64 * nx as f64, ly, nx, ny, Some(Face::Bottom)).unwrap();
        let medium = WaveMedium::uniform(&m, &mesh, eta).unwrap();
        FastSolver::new(mesh, medium, controls()).unwrap()
    }

    #[test]
    fn zero_pressure_is_exactly_zero() {
        let mut s = column(2, 40, 1e-3, 0.05);
        let out = s
            .run_to_steady_state(Drive::new(5e6, 0.0))
            .unwrap();
        assert!(out.converged);
        assert_eq!(out.cycles, 1);
        assert!(out.amplitude.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let s = column(2, 20, 1e-3, 0.05);
        let mut field = WaveField::at_rest(s.mesh(), 10.0 * s.stable_dt());
        assert!(matches!(s.step_wave(&mut field, None), Err(Error::Cfl { .. })));
    }

    #[test]
    fn linear_in_drive_amplitude() {
        let mut s1 = column(2, 60, 0.6e-3, 0.5);
        let mut s2 = s1.clone();
        let a = s1.run_to_steady_state(Drive::new(5e6, 1e-10)).unwrap();
        let b = s2.run_to_steady_state(Drive::new(5e6, 2e-10)).unwrap();
        let peak = a.amplitude.iter().fold(0.0f64, |m, &v| m.max(v));
        for (x, y) in a.amplitude.iter().zip(&b.amplitude) {
            assert!((2.0 * x - y).abs() <= 1e-3 * 2.0 * x.max(1e-12 * peak));
        }
    }

    #[test]
    fn free_vibration_energy_does_not_grow() {
        let s = column(3, 30, 0.5e-3, 2.0);
        let (dt, _) = s.period_step(5e6);
        let mut field = WaveField::at_rest(s.mesh(), dt);
        let mesh = s.mesh();
        for (i, c) in mesh.coords.iter().enumerate() {
            let r = (c[1] - 0.25e-3) / 50e-6;
            field.displacement[2 * i + 1] = 1e-10 * (-r * r).exp();
        }
        let mut last = s.energy(&field);
        assert!(last > 0.0);
        for _ in 0..600 {
            s.step_wave(&mut field, None).unwrap();
            let e = s.energy(&field);
            assert!(e <= last * (1.0 + 1e-12), "{e} > {last}");
            last = e;
        }
    }
}
