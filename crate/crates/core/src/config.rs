//! Simulation configuration.
//!
//! The on-disk format is a sectioned `key = value` document (TOML syntax).
//! Every key is optional; missing keys take the reference tumor-spheroid
//! parameter values. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::Face;

/// Bundled default configuration document with units for every key.
pub const DEFAULTS_DOCUMENT: &str = include_str!("../configs/defaults.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentPreset {
    #[default]
    Control,
    Sonicated,
    Sweep,
}

/// Hydraulic condition on the outer faces for the slow-scale storage equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PressureBoundary {
    /// Pore pressure held at the initial pressure p0.
    #[default]
    Drained,
    /// No fluid flux across the boundary.
    Sealed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    /// Side length of the square domain, m.
    pub length: f64,
    /// Spheroid radius, m.
    pub tumor_radius: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            length: 1.0e-3,
            tumor_radius: 2.0e-4,
            nx: 64,
            ny: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    /// Slow time step, s.
    pub slow_dt: f64,
    /// Simulated time, s.
    pub total_time: f64,
    /// Courant number bound for the explicit wave solver.
    pub fast_cfl: f64,
    /// Relative change of the RMS amplitude between cycles that counts as stationary.
    pub steady_state_tol: f64,
    /// Maximum number of drive periods per fast solve.
    pub max_cycles: usize,
    /// Minimum fast-mesh resolution, elements per wavelength.
    pub elements_per_wavelength: f64,
    /// Phase points used for the period-averaged viability.
    pub quadrature_points: usize,
    /// Reuse the last ultrasonic field until φ_T changes by more than `cache_threshold` (relative RMS).
    pub cache_enabled: bool,
    pub cache_threshold: f64,
    pub pressure_boundary: PressureBoundary,
    /// When set, replaces the computed slow hydrostatic stress seen by cells, Pa.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub imposed_slow_hydrostatic: Option<f64>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            slow_dt: 1800.0,
            total_time: 3.0 * 86_400.0,
            fast_cfl: 0.5,
            steady_state_tol: 1.0e-2,
            max_cycles: 200,
            elements_per_wavelength: 10.0,
            quadrature_points: 256,
            cache_enabled: true,
            cache_threshold: 0.01,
            pressure_boundary: PressureBoundary::Drained,
            imposed_slow_hydrostatic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: ExperimentPreset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; empty means "decided by the caller".
    pub dir: String,
    /// Write a field snapshot every this many slow steps (0 disables).
    pub snapshot_every: usize,
    /// Write the per-cycle fast-solver diagnostics CSV.
    pub wave_diagnostics: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: String::new(),
            snapshot_every: 0,
            wave_diagnostics: false,
        }
    }
}

/// Physical parameters of the poroelastic mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// Drained Young modulus E, Pa.
    pub youngs_modulus: f64,
    /// Drained Poisson ratio ν.
    pub poisson_drained: f64,
    /// Undrained Poisson ratio ν_u.
    pub poisson_undrained: f64,
    /// Density ρ, kg/m³.
    pub density: f64,
    /// Hydraulic conductivity k, m²/(Pa·s).
    pub hydraulic_conductivity: f64,
    /// Biot coefficient α.
    pub biot_coefficient: f64,
    /// Biot modulus M, Pa.
    pub biot_modulus: f64,
    /// Vessel conductivity k_v, 1/(Pa·s).
    pub vessel_conductivity: f64,
    /// Vessel pressure p_v, Pa.
    pub vessel_pressure: f64,
    /// Reflection coefficient ω.
    pub reflection_coefficient: f64,
    /// Osmotic pressure difference π_v − π_l, Pa.
    pub osmotic_pressure: f64,
    /// Normal lymphatic conductivity k_ln, 1/(Pa·s).
    pub lymphatic_conductivity: f64,
    /// Lymphatic pressure p_l, Pa.
    pub lymphatic_pressure: f64,
    /// Enables the vascular/lymphatic fluid exchange term.
    pub fluid_source: bool,
    pub alpha_tt: f64,
    pub alpha_th: f64,
    pub alpha_tm: f64,
    pub alpha_hh: f64,
    pub alpha_ht: f64,
    pub alpha_hm: f64,
    /// ECM production from tumor cells β_T, 1/s.
    pub ecm_production_tumor: f64,
    /// ECM production from healthy cells β_H, 1/s.
    pub ecm_production_healthy: f64,
    /// Combined ECM degradation δ_M·α_MT, 1/s.
    pub ecm_degradation_tumor: f64,
    /// Combined ECM degradation δ_M·α_MH, 1/s.
    pub ecm_degradation_healthy: f64,
    /// Tumor proliferation rate T_T, 1/s.
    pub tumor_proliferation: f64,
    /// Piecewise-constant overrides of T_T: `[start_time_s, rate]` pairs.
    pub tumor_proliferation_schedule: Vec<(f64, f64)>,
    /// Healthy proliferation rate T_H, 1/s.
    pub healthy_proliferation: f64,
    /// Tumor diffusion coefficient D_T, m²/s.
    pub tumor_diffusion: f64,
    /// Winkler confinement constant k_w, Pa/m. Defaults to E / l.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winkler_stiffness: Option<f64>,
    /// Absorbing boundary constant k_a.
    pub absorbing_constant: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            youngs_modulus: 8.0e3,
            poisson_drained: 0.4,
            poisson_undrained: 0.49999,
            density: 1000.0,
            hydraulic_conductivity: 3.1e-14,
            biot_coefficient: 0.991,
            biot_modulus: 1.79e6,
            vessel_conductivity: 2.70e-8,
            vessel_pressure: 3.33e3,
            reflection_coefficient: 0.9,
            osmotic_pressure: 1.33e3,
            lymphatic_conductivity: 9.98e-8,
            lymphatic_pressure: 1.33e2,
            fluid_source: true,
            alpha_tt: 1.3,
            alpha_th: 1.0,
            alpha_tm: 1.0,
            alpha_hh: 3.0,
            alpha_ht: 2.0,
            alpha_hm: 1.0,
            ecm_production_tumor: 5.79e-7,
            ecm_production_healthy: 1.16e-6,
            ecm_degradation_tumor: 2.89e-6,
            ecm_degradation_healthy: 2.89e-6,
            tumor_proliferation: 1.26e-5,
            tumor_proliferation_schedule: Vec::new(),
            healthy_proliferation: 1.26e-5,
            tumor_diffusion: 1.0e-13,
            winkler_stiffness: None,
            absorbing_constant: 1.0,
        }
    }
}

impl MaterialParams {
    /// Tumor proliferation rate in effect at time `t` (s).
    pub fn tumor_proliferation_at(&self, t: f64) -> f64 {
        self.tumor_proliferation_schedule
            .iter()
            .filter(|(start, _)| *start <= t)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map_or(self.tumor_proliferation, |&(_, rate)| rate)
    }

    /// Winkler constant, falling back to E / l.
    pub fn winkler(&self, length: f64) -> f64 {
        self.winkler_stiffness
            .unwrap_or(self.youngs_modulus / length)
    }
}

/// Mechanotransduction parameters of one cell species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanoParams {
    /// Viability floor q.
    pub q: f64,
    /// Sigmoid smoothness b, 1/Pa (negative).
    pub smoothness: f64,
    /// Static threshold stress σ_L, Pa.
    pub threshold: f64,
    /// Dynamic-stress coefficient β_s.
    pub beta_s: f64,
    /// Zero viability above σ_L.
    pub disruption_cutoff: bool,
}

impl Default for MechanoParams {
    fn default() -> Self {
        Self {
            q: 0.05,
            smoothness: -0.05,
            threshold: 1.2e3,
            beta_s: 0.2,
            disruption_cutoff: false,
        }
    }
}

impl MechanoParams {
    fn healthy_default() -> Self {
        Self {
            threshold: 1.0e4,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanoConfig {
    pub tumor: MechanoParams,
    pub healthy: MechanoParams,
}

impl Default for MechanoConfig {
    fn default() -> Self {
        Self {
            tumor: MechanoParams::default(),
            healthy: MechanoParams::healthy_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveConfig {
    /// Central frequency f, Hz.
    pub frequency: f64,
    /// Acoustic pressure amplitude P, Pa.
    pub pressure: f64,
    /// Culture-medium bulk viscosity η_c, Pa·s.
    pub eta_culture: f64,
    /// Tumor bulk viscosity η_T, Pa·s.
    pub eta_tumor: f64,
    /// Face carrying the transducer.
    pub emitter: Face,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            frequency: 5.0e6,
            pressure: 1.5e3,
            eta_culture: 0.05,
            eta_tumor: 2.0,
            emitter: Face::Bottom,
        }
    }
}

impl WaveConfig {
    /// Reference period T = 1/f.
    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    /// Reference wavelength λ = c_p / f.
    pub fn wavelength(&self, c_p: f64) -> f64 {
        c_p / self.frequency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitParams {
    /// Peak initial tumor fraction φ̄_T0.
    pub tumor_fraction: f64,
    /// Peak initial healthy fraction φ̄_H0.
    pub healthy_fraction: f64,
    /// Uniform initial ECM fraction φ_M0.
    pub ecm_fraction: f64,
    /// Interface smoothing coefficient b_S.
    pub smoothing: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            tumor_fraction: 0.15,
            healthy_fraction: 0.15,
            ecm_fraction: 0.4,
            smoothing: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub domain: DomainConfig,
    pub numerics: NumericsConfig,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
    pub materials: MaterialParams,
    pub mechano: MechanoConfig,
    pub wave: WaveConfig,
    pub init: InitParams,
}

/// Parses and validates a configuration document.
pub fn load_config(text: &str) -> Result<SimulationConfig> {
    let mut config: SimulationConfig =
        toml::from_str(text).map_err(|e| Error::MalformedConfig(e.to_string()))?;
    config.normalize();
    config.validate()?;
    Ok(config)
}

/// Reads and parses a configuration file.
pub fn load_config_file(path: impl AsRef<std::path::Path>) -> Result<SimulationConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_config(&text)
}

impl SimulationConfig {
    /// Serializes to the same document format `load_config` accepts.
    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// SHA-256 of the canonical serialized form.
    pub fn hash(&self) -> String {
        hex_digest(self.to_document().as_bytes())
    }

    /// Hash of everything except the wave section and the preset.
    pub fn non_wave_hash(&self) -> String {
        let mut stripped = self.clone();
        stripped.wave = WaveConfig::default();
        stripped.experiment = ExperimentConfig::default();
        stripped.output = OutputConfig::default();
        stripped.hash()
    }

    pub fn slow_steps(&self) -> usize {
        (self.numerics.total_time / self.numerics.slow_dt).round() as usize
    }

    fn normalize(&mut self) {
        for (name, params) in [
            ("mechano.tumor.smoothness", &mut self.mechano.tumor),
            ("mechano.healthy.smoothness", &mut self.mechano.healthy),
        ] {
            if params.smoothness > 0.0 {
                log::warn!(
                    "{name} = {} is positive; using {} (viability must decrease with stress)",
                    params.smoothness,
                    -params.smoothness
                );
                params.smoothness = -params.smoothness;
            }
        }
        if self.materials.winkler_stiffness.is_none() && self.domain.length > 0.0 {
            self.materials.winkler_stiffness = Some(self.materials.winkler(self.domain.length));
        }
        self.materials
            .tumor_proliferation_schedule
            .sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    /// Checks every parameter invariant, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        positive("domain.length", d.length)?;
        if !(d.tumor_radius > 0.0 && d.tumor_radius < d.length) {
            return Err(Error::validation(
                "domain.tumor_radius",
                "must satisfy 0 < tumor_radius < length",
            ));
        }
        if d.nx < 4 {
            return Err(Error::validation("domain.nx", "must be at least 4"));
        }
        if d.ny < 4 {
            return Err(Error::validation("domain.ny", "must be at least 4"));
        }

        let n = &self.numerics;
        positive("numerics.slow_dt", n.slow_dt)?;
        if !(n.total_time >= n.slow_dt) {
            return Err(Error::validation(
                "numerics.total_time",
                "must be at least one slow step",
            ));
        }
        if !(n.fast_cfl > 0.0 && n.fast_cfl <= 0.5) {
            return Err(Error::validation("numerics.fast_cfl", "must lie in (0, 0.5]"));
        }
        positive("numerics.steady_state_tol", n.steady_state_tol)?;
        if n.max_cycles < 2 {
            return Err(Error::validation("numerics.max_cycles", "must be at least 2"));
        }
        positive("numerics.elements_per_wavelength", n.elements_per_wavelength)?;
        if n.quadrature_points < 16 {
            return Err(Error::validation(
                "numerics.quadrature_points",
                "must be at least 16",
            ));
        }
        non_negative("numerics.cache_threshold", n.cache_threshold)?;
        if let Some(s) = n.imposed_slow_hydrostatic {
            finite("numerics.imposed_slow_hydrostatic", s)?;
        }

        let m = &self.materials;
        positive("materials.youngs_modulus", m.youngs_modulus)?;
        if !(m.poisson_drained > 0.0 && m.poisson_drained < 0.5) {
            return Err(Error::validation(
                "materials.poisson_drained",
                "drained Poisson ratio must lie in (0, 0.5)",
            ));
        }
        if !(m.poisson_undrained > m.poisson_drained && m.poisson_undrained < 0.5) {
            return Err(Error::validation(
                "materials.poisson_undrained",
                "undrained Poisson ratio must lie in (poisson_drained, 0.5)",
            ));
        }
        positive("materials.density", m.density)?;
        if !(m.biot_coefficient > 0.0 && m.biot_coefficient <= 1.0) {
            return Err(Error::validation(
                "materials.biot_coefficient",
                "must lie in (0, 1]",
            ));
        }
        positive("materials.biot_modulus", m.biot_modulus)?;
        for (name, v) in [
            ("materials.hydraulic_conductivity", m.hydraulic_conductivity),
            ("materials.vessel_conductivity", m.vessel_conductivity),
            ("materials.lymphatic_conductivity", m.lymphatic_conductivity),
            ("materials.alpha_tt", m.alpha_tt),
            ("materials.alpha_th", m.alpha_th),
            ("materials.alpha_tm", m.alpha_tm),
            ("materials.alpha_hh", m.alpha_hh),
            ("materials.alpha_ht", m.alpha_ht),
            ("materials.alpha_hm", m.alpha_hm),
            ("materials.ecm_production_tumor", m.ecm_production_tumor),
            ("materials.ecm_production_healthy", m.ecm_production_healthy),
            ("materials.ecm_degradation_tumor", m.ecm_degradation_tumor),
            ("materials.ecm_degradation_healthy", m.ecm_degradation_healthy),
            ("materials.tumor_proliferation", m.tumor_proliferation),
            ("materials.healthy_proliferation", m.healthy_proliferation),
            ("materials.tumor_diffusion", m.tumor_diffusion),
            ("materials.absorbing_constant", m.absorbing_constant),
        ] {
            non_negative(name, v)?;
        }
        for (name, v) in [
            ("materials.vessel_pressure", m.vessel_pressure),
            ("materials.reflection_coefficient", m.reflection_coefficient),
            ("materials.osmotic_pressure", m.osmotic_pressure),
            ("materials.lymphatic_pressure", m.lymphatic_pressure),
        ] {
            finite(name, v)?;
        }
        for &(t, rate) in &m.tumor_proliferation_schedule {
            non_negative("materials.tumor_proliferation_schedule", t)?;
            non_negative("materials.tumor_proliferation_schedule", rate)?;
        }
        if let Some(k) = m.winkler_stiffness {
            non_negative("materials.winkler_stiffness", k)?;
        }
        if m.fluid_source && m.vessel_conductivity + m.lymphatic_conductivity <= 0.0 {
            return Err(Error::validation(
                "materials.fluid_source",
                "requires a positive vessel or lymphatic conductivity",
            ));
        }

        for (prefix, p) in [
            ("mechano.tumor", &self.mechano.tumor),
            ("mechano.healthy", &self.mechano.healthy),
        ] {
            if !(p.q >= 0.0 && p.q < 1.0) {
                return Err(Error::validation(&format!("{prefix}.q"), "must lie in [0, 1)"));
            }
            if !(p.smoothness < 0.0) {
                return Err(Error::validation(
                    &format!("{prefix}.smoothness"),
                    "must be non-zero",
                ));
            }
            positive(&format!("{prefix}.threshold"), p.threshold)?;
            if !(p.beta_s > 0.0 && p.beta_s <= 1.0) {
                return Err(Error::validation(
                    &format!("{prefix}.beta_s"),
                    "must lie in (0, 1]",
                ));
            }
        }

        let w = &self.wave;
        positive("wave.frequency", w.frequency)?;
        non_negative("wave.pressure", w.pressure)?;
        non_negative("wave.eta_culture", w.eta_culture)?;
        non_negative("wave.eta_tumor", w.eta_tumor)?;

        let i = &self.init;
        non_negative("init.tumor_fraction", i.tumor_fraction)?;
        non_negative("init.healthy_fraction", i.healthy_fraction)?;
        non_negative("init.ecm_fraction", i.ecm_fraction)?;
        non_negative("init.smoothing", i.smoothing)?;
        if i.tumor_fraction + i.healthy_fraction + i.ecm_fraction >= 1.0 {
            return Err(Error::validation(
                "init",
                "initial solid fractions must sum to less than 1",
            ));
        }
        Ok(())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be non-negative, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_reference_parameters() {
        let c = load_config("").unwrap();
        let m = &c.materials;
        assert_eq!(m.youngs_modulus, 8.0e3);
        assert_eq!(m.poisson_undrained, 0.49999);
        assert_eq!(m.poisson_drained, 0.4);
        assert_eq!(m.biot_coefficient, 0.991);
        assert_eq!(m.biot_modulus, 1.79e6);
        assert_eq!(c.mechano.tumor.threshold, 1.2e3);
        assert_eq!(c.mechano.tumor.beta_s, 0.2);
        assert_eq!(c.mechano.tumor.q, 0.05);
        assert_eq!(c.mechano.tumor.smoothness, -0.05);
        assert_eq!(c.experiment.preset, ExperimentPreset::Control);
        assert_eq!(m.winkler_stiffness, Some(8.0e3 / 1.0e-3));
    }

    #[test]
    fn bundled_defaults_match_builtin_defaults() {
        let from_doc = load_config(DEFAULTS_DOCUMENT).unwrap();
        let builtin = load_config("").unwrap();
        assert_eq!(from_doc, builtin);
    }

    #[test]
    fn drained_poisson_above_half_is_rejected() {
        let err = load_config("[materials]\npoisson_drained = 0.6\n").unwrap_err();
        match err {
            Error::Validation { field, .. } => assert_eq!(field, "materials.poisson_drained"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn single_override_keeps_other_defaults() {
        let c = load_config("[materials]\ntumor_proliferation = 0.58e-5\n").unwrap();
        assert_eq!(c.materials.tumor_proliferation, 0.58e-5);
        let mut expected = MaterialParams::default();
        expected.tumor_proliferation = 0.58e-5;
        expected.winkler_stiffness = Some(8.0e6);
        assert_eq!(c.materials, expected);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = load_config("[wave]\nfrequncy = 1e6\n").unwrap_err();
        assert!(matches!(err, Error::MalformedConfig(_)), "{err}");
        assert!(err.to_string().contains("frequncy"));
    }

    #[test]
    fn parse_error_reports_line() {
        let err = load_config("[domain]\nnx = 64\nny = = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::MalformedConfig(_)));
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn positive_smoothness_is_negated() {
        let c = load_config("[mechano.tumor]\nsmoothness = 0.05\n").unwrap();
        assert_eq!(c.mechano.tumor.smoothness, -0.05);
    }

    #[test]
    fn proliferation_schedule_lookup() {
        let c = load_config(
            "[materials]\ntumor_proliferation = 0.58e-5\ntumor_proliferation_schedule = [[86400.0, 0.77e-5]]\n",
        )
        .unwrap();
        assert_eq!(c.materials.tumor_proliferation_at(0.0), 0.58e-5);
        assert_eq!(c.materials.tumor_proliferation_at(86_399.0), 0.58e-5);
        assert_eq!(c.materials.tumor_proliferation_at(86_400.0), 0.77e-5);
    }

    #[test]
    fn invariant_violations_name_fields() {
        for (doc, field) in [
            ("[domain]\ntumor_radius = 2e-3\n", "domain.tumor_radius"),
            ("[domain]\nnx = 3\n", "domain.nx"),
            ("[numerics]\ntotal_time = 10.0\n", "numerics.total_time"),
            ("[mechano.tumor]\nq = 1.0\n", "mechano.tumor.q"),
            ("[init]\necm_fraction = 0.8\n", "init"),
            ("[materials]\npoisson_undrained = 0.3\n", "materials.poisson_undrained"),
        ] {
            match load_config(doc).unwrap_err() {
                Error::Validation { field: f, .. } => assert_eq!(f, field, "{doc}"),
                other => panic!("{doc}: unexpected {other}"),
            }
        }
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn serialize_then_load_is_identity(
                e in 1.0e3..1.0e5f64,
                nu in 0.05..0.45f64,
                freq in 1.0e5..3.0e7f64,
                pressure in 0.0..1.0e4f64,
                nx in 4usize..200,
                sonicated in any::<bool>(),
                imposed in proptest::option::of(-1.0e4..1.0e4f64),
                schedule in proptest::collection::vec((0.0..1.0e6f64, 0.0..1.0e-4f64), 0..3),
            ) {
                let mut c = load_config("").unwrap();
                c.materials.youngs_modulus = e;
                c.materials.poisson_drained = nu;
                c.wave.frequency = freq;
                c.wave.pressure = pressure;
                c.domain.nx = nx;
                c.numerics.imposed_slow_hydrostatic = imposed;
                c.materials.tumor_proliferation_schedule = schedule;
                c.materials.tumor_proliferation_schedule.sort_by(|a, b| a.0.total_cmp(&b.0));
                if sonicated {
                    c.experiment.preset = ExperimentPreset::Sonicated;
                }
                let back = load_config(&c.to_document()).unwrap();
                prop_assert_eq!(back, c);
            }
        }
    }
}
