//! Tumor, healthy and ECM volume-fraction dynamics.

use crate::config::MaterialParams;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, PhaseState, GAUSS_POINTS};
use crate::sparse::{conjugate_gradient, CscMatrix};

/// Nodal competition terms Γ_T, Γ_H and the ECM decay factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetitionTerms {
    pub tumor: Vec<f64>,
    pub healthy: Vec<f64>,
    /// d_MT φ_T + d_MH φ_H (the combined-coefficient form of Γ_M).
    pub ecm: Vec<f64>,
}

pub fn competition_terms(phases: &PhaseState, m: &MaterialParams) -> CompetitionTerms {
    let n = phases.len();
    let mut c = CompetitionTerms {
        tumor: Vec::with_capacity(n),
        healthy: Vec::with_capacity(n),
        ecm: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (t, h, e) = (phases.tumor[i], phases.healthy[i], phases.ecm[i]);
        let r = rates(t, h, e, m);
        c.tumor.push(r.0);
        c.healthy.push(r.1);
        c.ecm.push(r.2);
    }
    c
}

#[inline]
fn rates(t: f64, h: f64, e: f64, m: &MaterialParams) -> (f64, f64, f64) {
    (
        1.0 - m.alpha_tt * t - m.alpha_th * h - m.alpha_tm * e,
        1.0 - m.alpha_ht * t - m.alpha_hh * h - m.alpha_hm * e,
        m.ecm_degradation_tumor * t + m.ecm_degradation_healthy * h,
    )
}

/// Per-node inputs held fixed over a reaction step.
#[derive(Debug, Clone, Copy)]
struct Frozen {
    fluid: f64,
    gate_t: f64,
    gate_h: f64,
    rate_t: f64,
}

fn rhs(y: [f64; 3], f: &Frozen, m: &MaterialParams) -> [f64; 3] {
    let [t, h, e] = y;
    let (gt, gh, gm) = rates(t, h, e, m);
    [
        f.fluid * f.gate_t * t * gt * f.rate_t,
        f.fluid * f.gate_h * h * gh * m.healthy_proliferation,
        m.ecm_production_tumor * t + m.ecm_production_healthy * h - e * gm,
    ]
}

fn rk4(y: [f64; 3], dt: f64, f: &Frozen, m: &MaterialParams) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = rhs(y, f, m);
    let k2 = rhs(add(y, k1, 0.5 * dt), f, m);
    let k3 = rhs(add(y, k2, 0.5 * dt), f, m);
    let k4 = rhs(add(y, k3, dt), f, m);
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Outcome of one phase step.
#[derive(Debug, Clone)]
pub struct PhaseStep {
    pub phases: PhaseState,
    /// Number of nodal values clamped from negative to zero.
    pub clamped: usize,
}

/// Reusable phase integrator: RK4 reaction per node, then implicit
/// degenerate diffusion of φ_T with the coefficient frozen at step start.
#[derive(Debug, Clone)]
pub struct PhaseStepper {
    mesh: Mesh,
    lumped: Vec<f64>,
    lap: [[f64; 4]; 4],
    pattern: CscMatrix,
    slots: Vec<[[usize; 4]; 4]>,
}

impl PhaseStepper {
    pub fn new(mesh: &Mesh) -> Self {
        let mut lap = [[0.0; 4]; 4];
        for &(xi, eta) in &GAUSS_POINTS {
            let g = mesh.shape_gradients(xi, eta);
            for a in 0..4 {
                for b in 0..4 {
                    lap[a][b] += (g[a][0] * g[b][0] + g[a][1] * g[b][1]) * mesh.det_j();
                }
            }
        }
        let pattern = CscMatrix::from_groups(mesh.num_nodes(), mesh.elements.iter().map(|e| &e[..]));
        let slots = mesh
            .elements
            .iter()
            .map(|el| {
                let mut s = [[0; 4]; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        s[a][b] = pattern.index(el[a], el[b]).expect("pattern covers element");
                    }
                }
                s
            })
            .collect();
        Self {
            mesh: mesh.clone(),
            lumped: mesh.lumped_weights(),
            lap,
            pattern,
            slots,
        }
    }

    /// Advances all phases by `dt` with viabilities `gate_t`, `gate_h` and
    /// tumor proliferation rate `tumor_rate`.
    pub fn step(
        &self,
        phases: &PhaseState,
        gate_t: &[f64],
        gate_h: &[f64],
        dt: f64,
        tumor_rate: f64,
        m: &MaterialParams,
    ) -> Result<PhaseStep> {
        let n = phases.len();
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("phase time step must be positive, got {dt}")));
        }
        for len in [gate_t.len(), gate_h.len(), self.mesh.num_nodes()] {
            if len != n {
                return Err(Error::SizeMismatch { expected: n, got: len });
            }
        }
        let fluid = phases.fluid();
        let mut next = phases.clone();
        for i in 0..n {
            let frozen = Frozen {
                fluid: fluid[i],
                gate_t: gate_t[i],
                gate_h: gate_h[i],
                rate_t: tumor_rate,
            };
            let y = rk4([phases.tumor[i], phases.healthy[i], phases.ecm[i]], dt, &frozen, m);
            next.tumor[i] = y[0];
            next.healthy[i] = y[1];
            next.ecm[i] = y[2];
        }

        if m.tumor_diffusion > 0.0 {
            let coeff: Vec<f64> = (0..n).map(|i| gate_t[i] * phases.tumor[i]).collect();
            let elem = self.mesh.element_means(&coeff);
            if elem.iter().any(|&c| c > 0.0) {
                let mut a = self.pattern.clone();
                for (i, w) in self.lumped.iter().enumerate() {
                    a.add(i, i, *w);
                }
                for (e, s) in self.slots.iter().enumerate() {
                    let k = dt * m.tumor_diffusion * elem[e];
                    if k == 0.0 {
                        continue;
                    }
                    for p in 0..4 {
                        for q in 0..4 {
                            a.values[s[p][q]] += k * self.lap[p][q];
                        }
                    }
                }
                let b: Vec<f64> = next.tumor.iter().zip(&self.lumped).map(|(t, w)| t * w).collect();
                let mut x = next.tumor.clone();
                conjugate_gradient(&a, &b, &mut x, 1e-13, 10 * n + 100)?;
                next.tumor = x;
            }
        }

        let mut clamped = 0;
        for field in [&mut next.tumor, &mut next.healthy, &mut next.ecm] {
            for v in field.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    clamped += 1;
                }
            }
        }
        for i in 0..n {
            let (t, h, e) = (next.tumor[i], next.healthy[i], next.ecm[i]);
            if t > 1.0 || h > 1.0 || e > 1.0 || t + h + e > 1.0 || !(t + h + e).is_finite() {
                return Err(Error::StepSize(format!(
                    "solid fractions at node {i} reached (φ_T, φ_H, φ_M) = ({t:.4}, {h:.4}, {e:.4})"
                )));
            }
        }
        Ok(PhaseStep {
            phases: next,
            clamped,
        })
    }
}

/// One phase step on a fresh stepper; time loops should keep a [`PhaseStepper`].
pub fn step_phases(
    mesh: &Mesh,
    phases: &PhaseState,
    gate_t: &[f64],
    gate_h: &[f64],
    dt: f64,
    tumor_rate: f64,
    m: &MaterialParams,
) -> Result<PhaseStep> {
    PhaseStepper::new(mesh).step(phases, gate_t, gate_h, dt, tumor_rate, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitParams;
    use crate::mesh::{build_structured_mesh, initial_phase_fields};
    use proptest::prelude::*;

    fn uniform(n: usize, t: f64, h: f64, e: f64) -> PhaseState {
        PhaseState {
            tumor: vec![t; n],
            healthy: vec![h; n],
            ecm: vec![e; n],
            zeta: vec![0.0; n],
            tumor0: vec![t; n],
            healthy0: vec![h; n],
            ecm0: vec![e; n],
            fluid0: vec![1.0 - t - h - e; n],
            tumor_peak: t,
        }
    }

    #[test]
    fn reference_competition_values() {
        let m = MaterialParams::default();
        let c = competition_terms(&uniform(1, 0.15, 0.15, 0.4), &m);
        assert!((c.tumor[0] - 0.255).abs() < 1e-12);
        assert!((c.healthy[0] + 0.15).abs() < 1e-12);
        let z = competition_terms(&uniform(1, 0.0, 0.0, 0.0), &m);
        assert_eq!((z.tumor[0], z.healthy[0], z.ecm[0]), (1.0, 1.0, 0.0));
    }

    fn setup() -> (Mesh, PhaseState, MaterialParams) {
        let mesh = build_structured_mesh(1e-3, 12, 12, None).unwrap();
        let ps = initial_phase_fields(&mesh, &InitParams::default(), 2e-4).unwrap();
        (mesh, ps, MaterialParams::default())
    }

    #[test]
    fn zero_gate_freezes_tumor() {
        let (mesh, ps, m) = setup();
        let n = ps.len();
        let out = step_phases(&mesh, &ps, &vec![0.0; n], &vec![0.9; n], 1800.0, m.tumor_proliferation, &m).unwrap();
        assert_eq!(out.phases.tumor, ps.tumor);
    }

    #[test]
    fn zero_tumor_stays_zero() {
        let (mesh, mut ps, m) = setup();
        ps.tumor.iter_mut().for_each(|v| *v = 0.0);
        let n = ps.len();
        let stepper = PhaseStepper::new(&mesh);
        for _ in 0..20 {
            ps = stepper.step(&ps, &vec![0.95; n], &vec![0.95; n], 1800.0, m.tumor_proliferation, &m).unwrap().phases;
        }
        assert!(ps.tumor.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diffusion_spreads_tumor_and_conserves_without_reaction() {
        let (mesh, ps, mut m) = setup();
        m.tumor_diffusion = 1e-10;
        let n = ps.len();
        let out = step_phases(&mesh, &ps, &vec![1.0; n], &vec![1.0; n], 1800.0, 0.0, &MaterialParams {
            healthy_proliferation: 0.0,
            ecm_production_tumor: 0.0,
            ecm_production_healthy: 0.0,
            ..m
        })
        .unwrap();
        let before = crate::mesh::integrate_field(&mesh, &ps.tumor).unwrap();
        let after = crate::mesh::integrate_field(&mesh, &out.phases.tumor).unwrap();
        assert!((after - before).abs() < 1e-9 * before);
        let centre = mesh.node(6, 6);
        assert!(out.phases.tumor[centre] < ps.tumor[centre]);
    }

    #[test]
    fn oversized_step_is_reported() {
        let (mesh, ps, m) = setup();
        let n = ps.len();
        let err = step_phases(&mesh, &ps, &vec![1.0; n], &vec![1.0; n], 1e9, 1e-3, &m).unwrap_err();
        assert!(matches!(err, Error::StepSize(_)), "{err}");
    }

    proptest! {
        #[test]
        fn positivity_and_ecm_balance(t in 0.0..0.3f64, h in 0.0..0.3f64, e in 0.0..0.35f64, dt in 60.0..3600.0f64) {
            let m = MaterialParams::default();
            let mesh = build_structured_mesh(1e-3, 4, 4, None).unwrap();
            let ps = uniform(mesh.num_nodes(), t, h, e);
            let n = ps.len();
            let g = vec![0.95; n];
            let out = step_phases(&mesh, &ps, &g, &g, dt, m.tumor_proliferation, &m).unwrap();
            prop_assert!(out.phases.tumor.iter().chain(&out.phases.healthy).chain(&out.phases.ecm).all(|&v| v >= 0.0));

            let decay_only = MaterialParams { ecm_production_tumor: 0.0, ecm_production_healthy: 0.0, ..m.clone() };
            let out = step_phases(&mesh, &ps, &g, &g, dt, m.tumor_proliferation, &decay_only).unwrap();
            prop_assert!(out.phases.ecm.iter().all(|&v| v <= e));
            let growth_only = MaterialParams { ecm_degradation_tumor: 0.0, ecm_degradation_healthy: 0.0, ..m.clone() };
            let out = step_phases(&mesh, &ps, &g, &g, dt, m.tumor_proliferation, &growth_only).unwrap();
            prop_assert!(out.phases.ecm.iter().all(|&v| v >= e));
        }

        #[test]
        fn lower_gate_gives_lower_tumor(seed in 0u64..500, scale in 0.0..1.0f64) {
            let (mesh, ps, mut m) = setup();
            m.tumor_diffusion = 0.0;
            let n = ps.len();
            let gate: Vec<f64> = (0..n).map(|i| 0.05 + 0.9 * (((i as u64 * 37 + seed) % 101) as f64 / 100.0)).collect();
            let lower: Vec<f64> = gate.iter().map(|g| g * scale).collect();
            let stepper = PhaseStepper::new(&mesh);
            let (mut a, mut b) = (ps.clone(), ps.clone());
            for _ in 0..48 {
                a = stepper.step(&a, &gate, &gate, 1800.0, m.tumor_proliferation, &m).unwrap().phases;
                b = stepper.step(&b, &lower, &gate, 1800.0, m.tumor_proliferation, &m).unwrap().phases;
                for i in 0..n {
                    prop_assert!(b.tumor[i] <= a.tumor[i] + 1e-15);
                }
            }
        }

        #[test]
        fn no_diffusion_means_local(node in 0usize..169, bump in 0.01..0.1f64) {
            let (mesh, ps, mut m) = setup();
            m.tumor_diffusion = 0.0;
            let n = ps.len();
            let g = vec![0.9; n];
            let mut perturbed = ps.clone();
            let far = (node + n / 2) % n;
            perturbed.tumor[far] += bump;
            let a = step_phases(&mesh, &ps, &g, &g, 1800.0, m.tumor_proliferation, &m).unwrap();
            let b = step_phases(&mesh, &perturbed, &g, &g, 1800.0, m.tumor_proliferation, &m).unwrap();
            prop_assert_eq!(a.phases.tumor[node], b.phases.tumor[node]);
        }
    }
}
