//! Derived elastic and acoustic quantities.

use std::f64::consts::PI;

use crate::config::MaterialParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticModuli {
    /// Drained bulk modulus K_d, Pa.
    pub bulk_drained: f64,
    /// Shear modulus μ_d, Pa.
    pub shear: f64,
    /// Undrained bulk modulus K_u, Pa.
    pub bulk_undrained: f64,
    /// P-wave speed from the undrained moduli, m/s.
    pub p_wave_speed: f64,
}

impl ElasticModuli {
    /// Shear-wave speed sqrt(μ_d/ρ).
    pub fn s_wave_speed(&self, density: f64) -> f64 {
        (self.shear / density).sqrt()
    }

    /// Drained Poisson ratio recovered from K_d and μ_d.
    pub fn poisson_drained(&self) -> f64 {
        let (k, g) = (self.bulk_drained, self.shear);
        (3.0 * k - 2.0 * g) / (2.0 * (3.0 * k + g))
    }
}

pub fn derive_elastic_moduli(m: &MaterialParams) -> Result<ElasticModuli> {
    let (e, nu, nu_u) = (m.youngs_modulus, m.poisson_drained, m.poisson_undrained);
    for (name, v) in [("drained", nu), ("undrained", nu_u)] {
        if v >= 0.5 {
            return Err(Error::SingularModulus(format!(
                "{name} Poisson ratio {v} >= 0.5 makes the bulk modulus infinite"
            )));
        }
    }
    let shear = e / (2.0 * (1.0 + nu));
    let bulk_drained = e / (3.0 * (1.0 - 2.0 * nu));
    let bulk_undrained = 2.0 * shear * (1.0 + nu_u) / (3.0 * (1.0 - 2.0 * nu_u));
    let mut moduli = ElasticModuli {
        bulk_drained,
        shear,
        bulk_undrained,
        p_wave_speed: 0.0,
    };
    moduli.p_wave_speed = p_wave_speed(&moduli, m.density);
    Ok(moduli)
}

/// c_p = sqrt((K_u + 4/3 μ_d)/ρ).
pub fn p_wave_speed(moduli: &ElasticModuli, density: f64) -> f64 {
    ((moduli.bulk_undrained + 4.0 / 3.0 * moduli.shear) / density).sqrt()
}

/// Bulk viscosity giving attenuation `alpha` (Np/m) at frequency `f`.
pub fn bulk_viscosity_from_attenuation(alpha: f64, density: f64, c_p: f64, f: f64) -> Result<f64> {
    if f == 0.0 {
        return Err(Error::InvalidArgument("frequency must be non-zero".into()));
    }
    let w = 2.0 * PI * f;
    Ok(alpha * 2.0 * density * c_p.powi(3) / (w * w))
}

/// Inverse of [`bulk_viscosity_from_attenuation`].
pub fn attenuation_from_bulk_viscosity(eta: f64, density: f64, c_p: f64, f: f64) -> Result<f64> {
    let denom = 2.0 * density * c_p.powi(3);
    if denom == 0.0 {
        return Err(Error::InvalidArgument("ρ·c_p³ must be non-zero".into()));
    }
    let w = 2.0 * PI * f;
    Ok(eta * w * w / denom)
}

/// Displacement amplitude of a plane harmonic wave carrying pressure amplitude `pressure`.
pub fn pressure_to_displacement_amplitude(pressure: f64, density: f64, c_p: f64, f: f64) -> Result<f64> {
    let denom = density * c_p * 2.0 * PI * f;
    if denom == 0.0 {
        return Err(Error::InvalidArgument("ρ·c_p·f must be non-zero".into()));
    }
    Ok(pressure / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> ElasticModuli {
        derive_elastic_moduli(&MaterialParams::default()).unwrap()
    }

    #[test]
    fn reference_moduli() {
        let m = reference();
        assert_relative_eq!(m.shear, 2857.142857142857, max_relative = 1e-12);
        assert_relative_eq!(m.bulk_drained, 13333.333333333334, max_relative = 1e-12);
        assert_relative_eq!(m.bulk_undrained, 1.428_561_9e8, max_relative = 1e-6);
        assert_relative_eq!(m.p_wave_speed, 378.0, max_relative = 5e-4);
    }

    #[test]
    fn equal_poisson_ratios_give_equal_bulk_moduli() {
        let mut p = MaterialParams::default();
        p.poisson_undrained = p.poisson_drained;
        let m = derive_elastic_moduli(&p).unwrap();
        assert_relative_eq!(m.bulk_undrained, m.bulk_drained, max_relative = 1e-14);
    }

    #[test]
    fn half_poisson_is_singular() {
        let mut p = MaterialParams::default();
        p.poisson_undrained = 0.5;
        assert!(matches!(derive_elastic_moduli(&p), Err(Error::SingularModulus(_))));
    }

    #[test]
    fn wave_speed_limits() {
        let zero = ElasticModuli {
            bulk_drained: 0.0,
            shear: 0.0,
            bulk_undrained: 0.0,
            p_wave_speed: 0.0,
        };
        assert_eq!(p_wave_speed(&zero, 1000.0), 0.0);
        let m = reference();
        assert_relative_eq!(
            p_wave_speed(&m, 4000.0),
            0.5 * p_wave_speed(&m, 1000.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn bulk_viscosity_values() {
        let eta = bulk_viscosity_from_attenuation(1.0, 1000.0, 378.0, 5e6).unwrap();
        assert_relative_eq!(eta, 1.0946e-4, max_relative = 1e-3);
        assert_eq!(bulk_viscosity_from_attenuation(0.0, 1000.0, 378.0, 5e6).unwrap(), 0.0);
        let doubled = bulk_viscosity_from_attenuation(1.0, 1000.0, 378.0, 1e7).unwrap();
        assert_relative_eq!(doubled, eta / 4.0, max_relative = 1e-14);
        assert!(bulk_viscosity_from_attenuation(1.0, 1000.0, 378.0, 0.0).is_err());
    }

    #[test]
    fn displacement_amplitude_values() {
        let a = pressure_to_displacement_amplitude(1.5e3, 1000.0, 378.0, 5e6).unwrap();
        assert_relative_eq!(a, 1.263e-10, max_relative = 1e-3);
        assert_eq!(pressure_to_displacement_amplitude(0.0, 1000.0, 378.0, 5e6).unwrap(), 0.0);
        let half_f = pressure_to_displacement_amplitude(1.5e3, 1000.0, 378.0, 2.5e6).unwrap();
        assert_relative_eq!(half_f, 2.0 * a, max_relative = 1e-14);
        assert!(pressure_to_displacement_amplitude(1.0, 0.0, 378.0, 5e6).is_err());
    }

    proptest! {
        #[test]
        fn attenuation_round_trip(alpha in 1e-3..1e5f64, c in 10.0..2000.0f64, f in 1e4..1e8f64) {
            let eta = bulk_viscosity_from_attenuation(alpha, 1000.0, c, f).unwrap();
            let back = attenuation_from_bulk_viscosity(eta, 1000.0, c, f).unwrap();
            prop_assert!(((back - alpha) / alpha).abs() < 1e-12);
        }

        #[test]
        fn undrained_stiffer_than_drained(
            e in 1.0..1e7f64,
            nu in 0.0..0.49f64,
            gap in 1e-6..1.0f64,
        ) {
            let mut p = MaterialParams::default();
            p.youngs_modulus = e;
            p.poisson_drained = nu;
            p.poisson_undrained = nu + (0.5 - nu) * gap * 0.999;
            let m = derive_elastic_moduli(&p).unwrap();
            prop_assert!(m.shear > 0.0);
            prop_assert!(m.bulk_undrained > m.bulk_drained);
        }
    }
}
