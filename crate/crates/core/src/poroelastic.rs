//! Quasistatic u–p poroelasticity on the slow time scale.
//!
//! Each step solves the backward-Euler discretisation of momentum balance
//! and the storage equation as one symmetric indefinite system
//!
//! ```text
//! [ K + K_w      −Q            ] [u]   [ F_g + F_t − Q p0          ]
//! [ −Qᵀ     −(S + Δt (H + R))  ] [p] = [ −Qᵀuⁿ − S pⁿ − Δt f        ]
//! ```
//!
//! with the Starling exchange contributing R (linear in p) and f.

use crate::config::{MaterialParams, PressureBoundary, SimulationConfig};
use crate::error::{Error, Result};
use crate::materials::{derive_elastic_moduli, ElasticModuli};
use crate::mesh::{shape, Face, Mesh, PhaseState, GAUSS_POINTS};
use crate::sparse::{CscMatrix, LuSolver};

/// Stress components (xx, yy, xy, zz), Pa.
pub type Stress = [f64; 4];

/// Plane-strain effective stress from (ε_xx, ε_yy, γ_xy); ε_zz = 0 enters the trace.
pub fn effective_stress(strain: [f64; 3], m: &ElasticModuli) -> Stress {
    let tr = strain[0] + strain[1];
    let mu = m.shear;
    let dev = |e: f64| 2.0 * mu * (e - tr / 3.0);
    [
        dev(strain[0]) + m.bulk_drained * tr,
        dev(strain[1]) + m.bulk_drained * tr,
        mu * strain[2],
        dev(0.0) + m.bulk_drained * tr,
    ]
}

/// Growth stress −K_d g/3 on every normal component.
pub fn growth_stress(g: f64, m: &ElasticModuli) -> Stress {
    let s = -m.bulk_drained * g / 3.0;
    [s, s, 0.0, s]
}

/// Hydrostatic part of a plane-strain elastic stress, reconstructing σ_zz = ν(σ_xx + σ_yy).
pub fn hydrostatic_stress(sxx: f64, syy: f64, nu: f64) -> f64 {
    (sxx + syy + nu * (sxx + syy)) / 3.0
}

/// Starling exchange Γ_F = k_v[(p_v − p) − ωπ] − k_l (p − p_l), k_l = [1 − (φ_T − φ_T0)] k_ln.
pub fn fluid_source(p: f64, tumor: f64, tumor0: f64, m: &MaterialParams) -> f64 {
    let k_l = lymphatic_conductivity(tumor, tumor0, m);
    m.vessel_conductivity * ((m.vessel_pressure - p) - m.reflection_coefficient * m.osmotic_pressure)
        - k_l * (p - m.lymphatic_pressure)
}

pub fn lymphatic_conductivity(tumor: f64, tumor0: f64, m: &MaterialParams) -> f64 {
    (1.0 - (tumor - tumor0)) * m.lymphatic_conductivity
}

/// Pressure at which the exchange vanishes for the initial tumor fraction.
pub fn equilibrium_pressure(m: &MaterialParams) -> Result<f64> {
    let (kv, kl) = (m.vessel_conductivity, m.lymphatic_conductivity);
    if kv + kl <= 0.0 {
        return Err(Error::InvalidArgument(
            "vessel and lymphatic conductivities are both zero; no equilibrium pressure".into(),
        ));
    }
    Ok((kv * (m.vessel_pressure - m.reflection_coefficient * m.osmotic_pressure)
        + kl * m.lymphatic_pressure)
        / (kv + kl))
}

/// Displacement component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    X,
    Y,
}

/// Boundary conditions of the slow problem.
#[derive(Debug, Clone, Default)]
pub struct SlowBoundary {
    /// Winkler constant applied to both displacement components on every face.
    pub winkler: f64,
    /// Zero-displacement constraints.
    pub fixed: Vec<(Face, Component)>,
    /// Uniform tractions (Pa) per face.
    pub traction: Vec<(Face, [f64; 2])>,
    /// Faces where the pore pressure is held at `drained_pressure`.
    pub drained: Vec<Face>,
    pub drained_pressure: f64,
}

/// Poroelastic coefficients used by the slow solver.
#[derive(Debug, Clone)]
pub struct SlowParams {
    pub moduli: ElasticModuli,
    pub biot_coefficient: f64,
    pub biot_modulus: f64,
    pub conductivity: f64,
    /// Starling exchange; `None` disables it.
    pub source: Option<MaterialParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoroelasticState {
    /// Interleaved nodal displacements (u_x, u_y), m.
    pub displacement: Vec<f64>,
    pub pressure: Vec<f64>,
    pub p0: f64,
    /// (ε_xx, ε_yy, γ_xy) at each element's four Gauss points.
    pub strain: Vec<[[f64; 3]; 4]>,
    /// Total slow stress σ_e + σ_p + σ_g at each Gauss point.
    pub stress: Vec<[Stress; 4]>,
    /// Nodal hydrostatic slow stress, Pa.
    pub hydrostatic: Vec<f64>,
    /// Nodal fluid-content variation (p − p0)/M + α tr ε.
    pub zeta: Vec<f64>,
    pub time: f64,
}

impl PoroelasticState {
    pub fn initial(mesh: &Mesh, p0: f64) -> Self {
        let (n, ne) = (mesh.num_nodes(), mesh.num_elements());
        Self {
            displacement: vec![0.0; 2 * n],
            pressure: vec![p0; n],
            p0,
            strain: vec![[[0.0; 3]; 4]; ne],
            stress: vec![[[0.0; 4]; 4]; ne],
            hydrostatic: vec![0.0; n],
            zeta: vec![0.0; n],
            time: 0.0,
        }
    }
}

/// Element matrices shared by every element of a uniform grid.
struct ElementMatrices {
    /// Strain-displacement rows at each Gauss point: B[q][row][dof].
    b: [[[f64; 8]; 3]; 4],
    n: [[f64; 4]; 4],
    w: f64,
    k: [[f64; 8]; 8],
    q: [[f64; 4]; 8],
    mass: [[f64; 4]; 4],
    lap: [[f64; 4]; 4],
}

impl ElementMatrices {
    fn new(mesh: &Mesh, m: &ElasticModuli, alpha: f64) -> Self {
        let lam = m.bulk_drained - 2.0 / 3.0 * m.shear;
        let mu = m.shear;
        let d = [
            [lam + 2.0 * mu, lam, 0.0],
            [lam, lam + 2.0 * mu, 0.0],
            [0.0, 0.0, mu],
        ];
        let w = mesh.det_j();
        let mut em = ElementMatrices {
            b: [[[0.0; 8]; 3]; 4],
            n: [[0.0; 4]; 4],
            w,
            k: [[0.0; 8]; 8],
            q: [[0.0; 4]; 8],
            mass: [[0.0; 4]; 4],
            lap: [[0.0; 4]; 4],
        };
        for (qi, &(xi, eta)) in GAUSS_POINTS.iter().enumerate() {
            let n = shape(xi, eta);
            let g = mesh.shape_gradients(xi, eta);
            let mut b = [[0.0; 8]; 3];
            for a in 0..4 {
                b[0][2 * a] = g[a][0];
                b[1][2 * a + 1] = g[a][1];
                b[2][2 * a] = g[a][1];
                b[2][2 * a + 1] = g[a][0];
            }
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for r in 0..3 {
                        for c in 0..3 {
                            s += b[r][i] * d[r][c] * b[c][j];
                        }
                    }
                    em.k[i][j] += s * w;
                }
                for a in 0..4 {
                    em.q[i][a] += (b[0][i] + b[1][i]) * alpha * n[a] * w;
                }
            }
            for a in 0..4 {
                for c in 0..4 {
                    em.mass[a][c] += n[a] * n[c] * w;
                    em.lap[a][c] += (g[a][0] * g[c][0] + g[a][1] * g[c][1]) * w;
                }
            }
            em.b[qi] = b;
            em.n[qi] = n;
        }
        em
    }
}

/// Assembled slow-scale operator with a cached factorization.
pub struct SlowSolver {
    mesh: Mesh,
    params: SlowParams,
    boundary: SlowBoundary,
    em: ElementMatrices,
    /// Global slot of each (local row, local col) pair of every element's 12 dofs.
    slots: Vec<[[usize; 12]; 12]>,
    /// K + K_w, −Q, −Qᵀ, −S (time-step independent part).
    base: CscMatrix,
    /// −H, added with weight Δt.
    flow: CscMatrix,
    /// Fixed dofs, with values, and a membership mask.
    fixed: Vec<(usize, f64)>,
    is_fixed: Vec<bool>,
    /// Full matrix of the last factorization, before elimination.
    full: CscMatrix,
    lu: LuSolver,
    factored_for: Option<(f64, Vec<f64>)>,
    traction_load: Vec<f64>,
}

impl std::fmt::Debug for SlowSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlowSolver")
            .field("nodes", &self.mesh.num_nodes())
            .field("fixed_dofs", &self.fixed.len())
            .finish()
    }
}

impl SlowSolver {
    pub fn new(mesh: &Mesh, params: SlowParams, boundary: SlowBoundary) -> Result<Self> {
        let n = mesh.num_nodes();
        let ndof = 3 * n;
        let dofs = |el: &[usize; 4]| -> [usize; 12] {
            let mut d = [0; 12];
            for a in 0..4 {
                d[2 * a] = 2 * el[a];
                d[2 * a + 1] = 2 * el[a] + 1;
                d[8 + a] = 2 * n + el[a];
            }
            d
        };
        let groups: Vec<[usize; 12]> = mesh.elements.iter().map(dofs).collect();
        let pattern = CscMatrix::from_groups(ndof, groups.iter().map(|g| &g[..]));
        let slots: Vec<[[usize; 12]; 12]> = groups
            .iter()
            .map(|g| {
                let mut s = [[0; 12]; 12];
                for i in 0..12 {
                    for j in 0..12 {
                        s[i][j] = pattern.index(g[i], g[j]).expect("pattern covers element");
                    }
                }
                s
            })
            .collect();

        let em = ElementMatrices::new(mesh, &params.moduli, params.biot_coefficient);
        let inv_m = 1.0 / params.biot_modulus;
        let mut base = pattern.clone();
        let mut flow = pattern.clone();
        for s in &slots {
            for i in 0..8 {
                for j in 0..8 {
                    base.values[s[i][j]] += em.k[i][j];
                }
                for a in 0..4 {
                    base.values[s[i][8 + a]] -= em.q[i][a];
                    base.values[s[8 + a][i]] -= em.q[i][a];
                }
            }
            for a in 0..4 {
                for c in 0..4 {
                    base.values[s[8 + a][8 + c]] -= em.mass[a][c] * inv_m;
                    flow.values[s[8 + a][8 + c]] -= em.lap[a][c] * params.conductivity;
                }
            }
        }

        let mut traction_load = vec![0.0; ndof];
        for face in Face::ALL {
            let le = mesh.edge_length(face);
            for [a, b] in mesh.face_edges(face) {
                if boundary.winkler > 0.0 {
                    let kw = boundary.winkler * le / 6.0;
                    for c in 0..2 {
                        base.add(2 * a + c, 2 * a + c, 2.0 * kw);
                        base.add(2 * b + c, 2 * b + c, 2.0 * kw);
                        base.add(2 * a + c, 2 * b + c, kw);
                        base.add(2 * b + c, 2 * a + c, kw);
                    }
                }
                for &(f, t) in &boundary.traction {
                    if f == face {
                        for node in [a, b] {
                            traction_load[2 * node] += 0.5 * le * t[0];
                            traction_load[2 * node + 1] += 0.5 * le * t[1];
                        }
                    }
                }
            }
        }

        let mut is_fixed = vec![false; ndof];
        let mut fixed = Vec::new();
        for &(face, comp) in &boundary.fixed {
            for node in mesh.face_nodes(face) {
                let dof = 2 * node + if comp == Component::X { 0 } else { 1 };
                if !is_fixed[dof] {
                    is_fixed[dof] = true;
                    fixed.push((dof, 0.0));
                }
            }
        }
        for &face in &boundary.drained {
            for node in mesh.face_nodes(face) {
                let dof = 2 * n + node;
                if !is_fixed[dof] {
                    is_fixed[dof] = true;
                    fixed.push((dof, boundary.drained_pressure));
                }
            }
        }

        let lu = LuSolver::new(&pattern)?;
        Ok(Self {
            mesh: mesh.clone(),
            params,
            boundary,
            em,
            slots,
            base,
            flow,
            fixed,
            is_fixed,
            full: pattern,
            lu,
            factored_for: None,
            traction_load,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn boundary(&self) -> &SlowBoundary {
        &self.boundary
    }

    /// Element-wise lymphatic conductivity for the current tumor field.
    fn exchange_coefficients(&self, phases: &PhaseState) -> Vec<f64> {
        match &self.params.source {
            None => Vec::new(),
            Some(m) => self
                .mesh
                .elements
                .iter()
                .map(|el| {
                    let (t, t0) = el.iter().fold((0.0, 0.0), |(a, b), &i| {
                        (a + phases.tumor[i], b + phases.tumor0[i])
                    });
                    m.vessel_conductivity + lymphatic_conductivity(0.25 * t, 0.25 * t0, m)
                })
                .collect(),
        }
    }

    /// Assembled system matrix before boundary elimination.
    pub fn system_matrix(&self, phases: &PhaseState, dt: f64) -> CscMatrix {
        let coeffs = self.exchange_coefficients(phases);
        self.assemble(&coeffs, dt)
    }

    fn assemble(&self, coeffs: &[f64], dt: f64) -> CscMatrix {
        let mut a = self.base.clone();
        for (v, f) in a.values.iter_mut().zip(&self.flow.values) {
            *v += dt * f;
        }
        for (e, &c) in coeffs.iter().enumerate() {
            let s = &self.slots[e];
            for i in 0..4 {
                for j in 0..4 {
                    a.values[s[8 + i][8 + j]] -= dt * c * self.em.mass[i][j];
                }
            }
        }
        a
    }

    fn ensure_factored(&mut self, coeffs: &[f64], dt: f64) -> Result<()> {
        let current = matches!(&self.factored_for, Some((d, c)) if *d == dt && c.as_slice() == coeffs);
        if current {
            return Ok(());
        }
        self.full = self.assemble(coeffs, dt);
        let mut eliminated = self.full.clone();
        let mut scratch = vec![0.0; eliminated.n];
        eliminated.eliminate(&self.fixed, &mut scratch);
        self.lu.factor(&eliminated)?;
        self.factored_for = Some((dt, coeffs.to_vec()));
        Ok(())
    }

    /// One backward-Euler step of length `dt` with phases frozen. `dt = 0`
    /// gives the instantaneous undrained response.
    pub fn step(&mut self, state: &PoroelasticState, phases: &PhaseState, dt: f64) -> Result<PoroelasticState> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("slow time step must be non-negative, got {dt}")));
        }
        let n = self.mesh.num_nodes();
        if phases.len() != n {
            return Err(Error::SizeMismatch { expected: n, got: phases.len() });
        }
        let coeffs = self.exchange_coefficients(phases);
        self.ensure_factored(&coeffs, dt)?;

        let kd = self.params.moduli.bulk_drained;
        let g = phases.growth_strain();
        let mut rhs = self.traction_load.clone();
        let em = &self.em;
        for el in &self.mesh.elements {
            let ge = [g[el[0]], g[el[1]], g[el[2]], g[el[3]]];
            let pn = [0, 1, 2, 3].map(|a| state.pressure[el[a]]);
            let un: [f64; 8] = std::array::from_fn(|i| state.displacement[2 * el[i / 2] + i % 2]);
            for qp in 0..4 {
                let gq: f64 = (0..4).map(|a| em.n[qp][a] * ge[a]).sum();
                let s = kd * gq / 3.0 * em.w;
                for i in 0..8 {
                    rhs[2 * el[i / 2] + i % 2] += (em.b[qp][0][i] + em.b[qp][1][i]) * s;
                }
            }
            for i in 0..8 {
                let qp0: f64 = (0..4).map(|a| em.q[i][a]).sum::<f64>() * state.p0;
                rhs[2 * el[i / 2] + i % 2] -= qp0;
            }
            for a in 0..4 {
                let qtu: f64 = (0..8).map(|i| em.q[i][a] * un[i]).sum();
                let sp: f64 = (0..4)
                    .map(|c| em.mass[a][c] * pn[c])
                    .sum::<f64>()
                    / self.params.biot_modulus;
                rhs[2 * n + el[a]] -= qtu + sp;
            }
        }
        if let Some(m) = &self.params.source {
            let drive = m.vessel_conductivity
                * (m.vessel_pressure - m.reflection_coefficient * m.osmotic_pressure);
            for (e, el) in self.mesh.elements.iter().enumerate() {
                let k_l = coeffs[e] - m.vessel_conductivity;
                let f = drive + k_l * m.lymphatic_pressure;
                for a in 0..4 {
                    let row: f64 = (0..4).map(|c| em.mass[a][c]).sum();
                    rhs[2 * n + el[a]] -= dt * f * row;
                }
            }
        }
        self.full.dirichlet_rhs(&self.fixed, &self.is_fixed, &mut rhs);
        let x = self.lu.solve(&rhs)?;

        let mut next = PoroelasticState {
            displacement: x[..2 * n].to_vec(),
            pressure: x[2 * n..].to_vec(),
            p0: state.p0,
            strain: Vec::new(),
            stress: Vec::new(),
            hydrostatic: Vec::new(),
            zeta: Vec::new(),
            time: state.time + dt,
        };
        self.recover(&mut next, &g);
        Ok(next)
    }

    /// Gauss-point strains and stresses, then lumped L2 projection to nodes.
    fn recover(&self, st: &mut PoroelasticState, g: &[f64]) {
        let n = self.mesh.num_nodes();
        let em = &self.em;
        let m = &self.params.moduli;
        let alpha = self.params.biot_coefficient;
        let weights = self.mesh.lumped_weights();
        let mut hyd = vec![0.0; n];
        let mut trace = vec![0.0; n];
        st.strain = Vec::with_capacity(self.mesh.num_elements());
        st.stress = Vec::with_capacity(self.mesh.num_elements());
        for el in &self.mesh.elements {
            let ue: [f64; 8] = std::array::from_fn(|i| st.displacement[2 * el[i / 2] + i % 2]);
            let mut strains = [[0.0; 3]; 4];
            let mut stresses = [[0.0; 4]; 4];
            for qp in 0..4 {
                let eps: [f64; 3] =
                    std::array::from_fn(|r| (0..8).map(|i| em.b[qp][r][i] * ue[i]).sum());
                let pq: f64 = (0..4).map(|a| em.n[qp][a] * st.pressure[el[a]]).sum();
                let gq: f64 = (0..4).map(|a| em.n[qp][a] * g[el[a]]).sum();
                let se = effective_stress(eps, m);
                let sg = growth_stress(gq, m);
                let sp = -alpha * (pq - st.p0);
                let total = [se[0] + sg[0] + sp, se[1] + sg[1] + sp, se[2], se[3] + sg[3] + sp];
                let h = (total[0] + total[1] + total[3]) / 3.0;
                let tr = eps[0] + eps[1];
                for a in 0..4 {
                    let wa = em.n[qp][a] * em.w;
                    hyd[el[a]] += wa * h;
                    trace[el[a]] += wa * tr;
                }
                strains[qp] = eps;
                stresses[qp] = total;
            }
            st.strain.push(strains);
            st.stress.push(stresses);
        }
        let inv_m = 1.0 / self.params.biot_modulus;
        st.hydrostatic = hyd.iter().zip(&weights).map(|(h, w)| h / w).collect();
        st.zeta = (0..n)
            .map(|i| (st.pressure[i] - st.p0) * inv_m + alpha * trace[i] / weights[i])
            .collect();
    }
}

/// Slow solver configured for a simulation: Winkler confinement on every face
/// and the configured hydraulic boundary.
pub fn simulation_solver(mesh: &Mesh, config: &SimulationConfig) -> Result<(SlowSolver, PoroelasticState)> {
    let m = &config.materials;
    let moduli = derive_elastic_moduli(m)?;
    let p0 = if m.fluid_source { equilibrium_pressure(m)? } else { 0.0 };
    let params = SlowParams {
        moduli,
        biot_coefficient: m.biot_coefficient,
        biot_modulus: m.biot_modulus,
        conductivity: m.hydraulic_conductivity,
        source: m.fluid_source.then(|| m.clone()),
    };
    let boundary = SlowBoundary {
        winkler: m.winkler(mesh.lx),
        drained: match config.numerics.pressure_boundary {
            PressureBoundary::Drained => Face::ALL.to_vec(),
            PressureBoundary::Sealed => Vec::new(),
        },
        drained_pressure: p0,
        ..SlowBoundary::default()
    };
    let solver = SlowSolver::new(mesh, params, boundary)?;
    Ok((solver, PoroelasticState::initial(mesh, p0)))
}

/// Advances the simulation's slow state by `dt`. Convenience wrapper that
/// builds a fresh solver; time loops should keep a [`SlowSolver`].
pub fn step_poroelastic(
    mesh: &Mesh,
    config: &SimulationConfig,
    state: &PoroelasticState,
    phases: &PhaseState,
    dt: f64,
) -> Result<PoroelasticState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("slow time step must be positive, got {dt}")));
    }
    let (mut solver, _) = simulation_solver(mesh, config)?;
    solver.step(state, phases, dt)
}
