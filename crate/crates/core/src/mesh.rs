//! Structured bilinear-quadrilateral grids, phase fields and nodal transfers.

use serde::{Deserialize, Serialize};

use crate::config::InitParams;
use crate::error::{Error, Result};

/// Outer face of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    #[default]
    Bottom,
    Right,
    Top,
    Left,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::Bottom, Face::Right, Face::Top, Face::Left];

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Face::Bottom => [0.0, -1.0],
            Face::Right => [1.0, 0.0],
            Face::Top => [0.0, 1.0],
            Face::Left => [-1.0, 0.0],
        }
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::Bottom => Face::Top,
            Face::Right => Face::Left,
            Face::Top => Face::Bottom,
            Face::Left => Face::Right,
        }
    }
}

/// Role of a boundary edge in the wave problem. The slow problem applies
/// Winkler confinement on every face regardless of tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Emitting,
    Absorbing,
}

/// Gauss abscissa for the 2×2 rule on [-1, 1]².
pub const GAUSS: f64 = 0.577_350_269_189_625_8;
pub const GAUSS_POINTS: [(f64, f64); 4] = [
    (-GAUSS, -GAUSS),
    (GAUSS, -GAUSS),
    (GAUSS, GAUSS),
    (-GAUSS, GAUSS),
];
const REF_NODES: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Bilinear shape functions at reference point (ξ, η).
pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    REF_NODES.map(|(a, b)| 0.25 * (1.0 + a * xi) * (1.0 + b * eta))
}

/// Uniform structured grid on [0, lx] × [0, ly]. Every element is an
/// axis-aligned hx × hy rectangle, so element matrices are shared.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub coords: Vec<[f64; 2]>,
    /// Counter-clockwise node indices starting at the lower-left corner.
    pub elements: Vec<[usize; 4]>,
    /// Distance of every node from the domain centre.
    pub radius: Vec<f64>,
    pub emitter: Option<Face>,
}

/// Square l × l grid; the simulation entry point requires at least 4 elements per side.
pub fn build_structured_mesh(l: f64, nx: usize, ny: usize, emitter: Option<Face>) -> Result<Mesh> {
    if nx < 4 || ny < 4 {
        return Err(Error::InvalidArgument(format!(
            "grid must have at least 4 × 4 elements, got {nx} × {ny}"
        )));
    }
    build_mesh(l, l, nx, ny, emitter)
}

/// Rectangular grid; thin strips (one element across) are allowed for 1D checks.
pub fn build_mesh(lx: f64, ly: f64, nx: usize, ny: usize, emitter: Option<Face>) -> Result<Mesh> {
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "domain size must be positive, got {lx} × {ly}"
        )));
    }
    if nx < 1 || ny < 1 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least one element per direction, got {nx} × {ny}"
        )));
    }
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push([i as f64 * hx, j as f64 * hy]);
        }
    }
    let (cx, cy) = (0.5 * lx, 0.5 * ly);
    let radius = coords
        .iter()
        .map(|&[x, y]| (x - cx).hypot(y - cy))
        .collect();
    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let n0 = j * (nx + 1) + i;
            elements.push([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1]);
        }
    }
    Ok(Mesh {
        lx,
        ly,
        nx,
        ny,
        hx,
        hy,
        coords,
        elements,
        radius,
        emitter,
    })
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Smallest element edge.
    pub fn h(&self) -> f64 {
        self.hx.min(self.hy)
    }

    /// Element Jacobian determinant (constant on a uniform grid).
    pub fn det_j(&self) -> f64 {
        0.25 * self.hx * self.hy
    }

    /// Physical shape-function gradients at (ξ, η).
    pub fn shape_gradients(&self, xi: f64, eta: f64) -> [[f64; 2]; 4] {
        REF_NODES.map(|(a, b)| {
            [
                0.25 * a * (1.0 + b * eta) * 2.0 / self.hx,
                0.25 * b * (1.0 + a * xi) * 2.0 / self.hy,
            ]
        })
    }

    pub fn boundary_tag(&self, face: Face) -> BoundaryTag {
        if self.emitter == Some(face) {
            BoundaryTag::Emitting
        } else {
            BoundaryTag::Absorbing
        }
    }

    /// Nodes on a face, ordered along it.
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        match face {
            Face::Bottom => (0..=self.nx).map(|i| self.node(i, 0)).collect(),
            Face::Top => (0..=self.nx).map(|i| self.node(i, self.ny)).collect(),
            Face::Left => (0..=self.ny).map(|j| self.node(0, j)).collect(),
            Face::Right => (0..=self.ny).map(|j| self.node(self.nx, j)).collect(),
        }
    }

    /// Length of one boundary edge on a face.
    pub fn edge_length(&self, face: Face) -> f64 {
        match face {
            Face::Bottom | Face::Top => self.hx,
            Face::Left | Face::Right => self.hy,
        }
    }

    /// Consecutive node pairs forming the edges of a face.
    pub fn face_edges(&self, face: Face) -> Vec<[usize; 2]> {
        self.face_nodes(face).windows(2).map(|w| [w[0], w[1]]).collect()
    }

    /// Lumped (row-sum) mass weights ∫N_a dA.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.num_nodes()];
        let we = 0.25 * self.hx * self.hy;
        for el in &self.elements {
            for &n in el {
                w[n] += we;
            }
        }
        w
    }

    /// Element-wise mean of a nodal field.
    pub fn element_means(&self, field: &[f64]) -> Vec<f64> {
        self.elements
            .iter()
            .map(|el| 0.25 * el.iter().map(|&n| field[n]).sum::<f64>())
            .collect()
    }

    /// Bilinear interpolation of a nodal field at (x, y); points outside the domain are clamped.
    pub fn sample(&self, field: &[f64], x: f64, y: f64) -> f64 {
        let (n, w) = self.locate(x, y);
        n.iter().zip(w).map(|(&i, wi)| wi * field[i]).sum()
    }

    fn locate(&self, x: f64, y: f64) -> ([usize; 4], [f64; 4]) {
        let s = (x / self.hx).clamp(0.0, self.nx as f64);
        let t = (y / self.hy).clamp(0.0, self.ny as f64);
        let i = (s.floor() as usize).min(self.nx - 1);
        let j = (t.floor() as usize).min(self.ny - 1);
        let (xi, eta) = (2.0 * (s - i as f64) - 1.0, 2.0 * (t - j as f64) - 1.0);
        (self.elements[j * self.nx + i], shape(xi, eta))
    }
}

/// Precomputed bilinear interpolation from one mesh's nodes onto another's.
#[derive(Debug, Clone)]
pub struct Transfer {
    stencils: Vec<([usize; 4], [f64; 4])>,
    source_nodes: usize,
}

impl Transfer {
    pub fn new(from: &Mesh, to: &Mesh) -> Self {
        let sx = from.lx / to.lx;
        let sy = from.ly / to.ly;
        Self {
            stencils: to
                .coords
                .iter()
                .map(|&[x, y]| from.locate(x * sx, y * sy))
                .collect(),
            source_nodes: from.num_nodes(),
        }
    }

    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        debug_assert_eq!(field.len(), self.source_nodes);
        self.stencils
            .iter()
            .map(|(n, w)| n.iter().zip(w).map(|(&i, wi)| wi * field[i]).sum())
            .collect()
    }
}

/// Integral of a nodal field over the domain by 2×2 Gauss quadrature.
pub fn integrate_field(mesh: &Mesh, field: &[f64]) -> Result<f64> {
    if field.len() != mesh.num_nodes() {
        return Err(Error::SizeMismatch {
            expected: mesh.num_nodes(),
            got: field.len(),
        });
    }
    let basis = GAUSS_POINTS.map(|(xi, eta)| shape(xi, eta));
    let det = mesh.det_j();
    Ok(mesh
        .elements
        .iter()
        .map(|el| {
            basis
                .iter()
                .map(|n| (0..4).map(|a| n[a] * field[el[a]]).sum::<f64>())
                .sum::<f64>()
                * det
        })
        .sum())
}

/// Nodal volume fractions of the three solid phases and the fluid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub tumor: Vec<f64>,
    pub healthy: Vec<f64>,
    pub ecm: Vec<f64>,
    /// Fluid-content variation ζ.
    pub zeta: Vec<f64>,
    pub tumor0: Vec<f64>,
    pub healthy0: Vec<f64>,
    pub ecm0: Vec<f64>,
    pub fluid0: Vec<f64>,
    /// Peak initial tumor fraction φ̄_T0, used to normalise the viscosity map.
    pub tumor_peak: f64,
}

impl PhaseState {
    pub fn len(&self) -> usize {
        self.tumor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tumor.is_empty()
    }

    /// φ_F = φ_F0 + ζ.
    pub fn fluid(&self) -> Vec<f64> {
        self.fluid0.iter().zip(&self.zeta).map(|(f, z)| f + z).collect()
    }

    /// Growth strain g = Σφ − Σφ0 at every node.
    pub fn growth_strain(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                (self.tumor[i] + self.healthy[i] + self.ecm[i])
                    - (self.tumor0[i] + self.healthy0[i] + self.ecm0[i])
            })
            .collect()
    }
}

/// Smoothing function S(r) = 1 / (1 + exp(b_S (r − l_t)/l)).
pub fn smoothing(r: f64, tumor_radius: f64, length: f64, b_s: f64) -> f64 {
    let x = b_s * (r - tumor_radius) / length;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

pub fn initial_phase_fields(mesh: &Mesh, init: &InitParams, tumor_radius: f64) -> Result<PhaseState> {
    let (t0, h0, m0) = (init.tumor_fraction, init.healthy_fraction, init.ecm_fraction);
    if t0 < 0.0 || h0 < 0.0 || m0 < 0.0 {
        return Err(Error::InvalidArgument("initial fractions must be non-negative".into()));
    }
    let mut tumor = Vec::with_capacity(mesh.num_nodes());
    let mut healthy = Vec::with_capacity(mesh.num_nodes());
    let mut fluid0 = Vec::with_capacity(mesh.num_nodes());
    for &r in &mesh.radius {
        let s = smoothing(r, tumor_radius, mesh.lx, init.smoothing);
        let (t, h) = (t0 * s, h0 * (1.0 - s));
        let f = 1.0 - t - h - m0;
        if f <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "initial solid fractions sum to {} >= 1",
                t + h + m0
            )));
        }
        tumor.push(t);
        healthy.push(h);
        fluid0.push(f);
    }
    let ecm = vec![m0; mesh.num_nodes()];
    Ok(PhaseState {
        zeta: vec![0.0; mesh.num_nodes()],
        tumor0: tumor.clone(),
        healthy0: healthy.clone(),
        ecm0: ecm.clone(),
        tumor,
        healthy,
        ecm,
        fluid0,
        tumor_peak: t0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn counts_and_spacing() {
        let m = build_structured_mesh(1e-3, 4, 4, None).unwrap();
        assert_eq!(m.num_nodes(), 25);
        assert_eq!(m.num_elements(), 16);
        let m = build_structured_mesh(1e-3, 64, 64, None).unwrap();
        assert_relative_eq!(m.hx, 15.625e-6, max_relative = 1e-14);
        assert!(build_structured_mesh(1e-3, 1, 4, None).is_err());
    }

    #[test]
    fn jacobians_positive_and_orientation_ccw() {
        let m = build_mesh(2.0, 1.0, 5, 3, None).unwrap();
        for el in &m.elements {
            let p: Vec<_> = el.iter().map(|&n| m.coords[n]).collect();
            let area2: f64 = (0..4)
                .map(|a| {
                    let b = (a + 1) % 4;
                    p[a][0] * p[b][1] - p[b][0] * p[a][1]
                })
                .sum();
            assert!(area2 > 0.0);
        }
        assert!(m.det_j() > 0.0);
    }

    #[test]
    fn boundary_tags_unique() {
        let m = build_structured_mesh(1.0, 4, 4, Some(Face::Bottom)).unwrap();
        let tags: Vec<_> = Face::ALL.iter().map(|&f| m.boundary_tag(f)).collect();
        assert_eq!(tags.iter().filter(|&&t| t == BoundaryTag::Emitting).count(), 1);
        let edges: usize = Face::ALL.iter().map(|&f| m.face_edges(f).len()).sum();
        assert_eq!(edges, 16);
    }

    #[test]
    fn integrals() {
        let m = build_structured_mesh(1e-3, 8, 8, None).unwrap();
        let c = vec![0.15; m.num_nodes()];
        assert_relative_eq!(integrate_field(&m, &c).unwrap(), 1.5e-7, max_relative = 1e-12);
        assert_eq!(integrate_field(&m, &vec![0.0; m.num_nodes()]).unwrap(), 0.0);
        let unit = build_structured_mesh(1.0, 8, 8, None).unwrap();
        let x: Vec<f64> = unit.coords.iter().map(|p| p[0]).collect();
        assert_relative_eq!(integrate_field(&unit, &x).unwrap(), 0.5, max_relative = 1e-14);
        let xy: Vec<f64> = unit.coords.iter().map(|p| p[0] * p[1]).collect();
        assert_relative_eq!(integrate_field(&unit, &xy).unwrap(), 0.25, max_relative = 1e-14);
        assert!(matches!(
            integrate_field(&unit, &[1.0]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn smoothing_midpoint_and_limits() {
        assert_eq!(smoothing(0.2, 0.2, 1.0, 20.0), 0.5);
        assert_eq!(smoothing(0.7, 0.2, 1.0, 0.0), 0.5);
        assert!(smoothing(-1e3, 0.2, 1.0, 20.0) > 1.0 - 1e-12);
        assert!(smoothing(1e6, 0.2, 1.0, 20.0) >= 0.0);
    }

    #[test]
    fn initial_fields_in_core() {
        let m = build_structured_mesh(1.0, 64, 64, None).unwrap();
        let init = InitParams {
            smoothing: 200.0,
            ..InitParams::default()
        };
        let ps = initial_phase_fields(&m, &init, 0.3).unwrap();
        let centre = m.node(32, 32);
        assert_relative_eq!(ps.tumor[centre], 0.15, max_relative = 1e-12);
        assert!(ps.healthy[centre] < 1e-12);
        assert_relative_eq!(ps.fluid0[centre], 0.45, max_relative = 1e-10);
    }

    #[test]
    fn sampling_is_exact_for_bilinear_fields() {
        let m = build_mesh(2.0, 1.0, 7, 5, None).unwrap();
        let f: Vec<f64> = m.coords.iter().map(|p| 1.0 + 2.0 * p[0] - p[1]).collect();
        for &(x, y) in &[(0.0, 0.0), (0.33, 0.71), (2.0, 1.0), (1.234, 0.5)] {
            assert_relative_eq!(m.sample(&f, x, y), 1.0 + 2.0 * x - y, epsilon = 1e-13);
        }
        let fine = build_mesh(2.0, 1.0, 20, 9, None).unwrap();
        let t = Transfer::new(&m, &fine).apply(&f);
        for (v, p) in t.iter().zip(&fine.coords) {
            assert_relative_eq!(*v, 1.0 + 2.0 * p[0] - p[1], epsilon = 1e-13);
        }
    }

    proptest! {
        #[test]
        fn integration_is_linear(a in -10.0..10.0f64, b in -10.0..10.0f64, seed in 0u64..1000) {
            let m = build_structured_mesh(1e-3, 6, 6, None).unwrap();
            let f: Vec<f64> = (0..m.num_nodes()).map(|i| ((i as u64 * 31 + seed) % 17) as f64).collect();
            let g: Vec<f64> = (0..m.num_nodes()).map(|i| ((i as u64 * 7 + seed) % 13) as f64 - 6.0).collect();
            let h: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let lhs = integrate_field(&m, &h).unwrap();
            let rhs = a * integrate_field(&m, &f).unwrap() + b * integrate_field(&m, &g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1e-6 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn smoothing_is_monotone(r1 in 0.0..1.0f64, dr in 1e-6..1.0f64, b in 0.1..100.0f64) {
            prop_assert!(smoothing(r1 + dr, 0.2, 1.0, b) <= smoothing(r1, 0.2, 1.0, b));
        }

        #[test]
        fn closure_holds_initially(t in 0.0..0.3f64, h in 0.0..0.3f64, mfrac in 0.0..0.39f64, bs in 0.0..100.0f64) {
            let m = build_structured_mesh(1e-3, 8, 8, None).unwrap();
            let init = InitParams { tumor_fraction: t, healthy_fraction: h, ecm_fraction: mfrac, smoothing: bs };
            let ps = initial_phase_fields(&m, &init, 2e-4).unwrap();
            for i in 0..ps.len() {
                let total = ps.tumor[i] + ps.healthy[i] + ps.ecm[i] + ps.fluid()[i];
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}
