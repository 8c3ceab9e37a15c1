//! Pointwise energy bookkeeping of the reduced system.

use crate::eos::EquationOfState;
use crate::error::Result;

pub fn kinetic_energy(rho: f64, u: [f64; 2]) -> f64 {
    0.5 * rho * (u[0] * u[0] + u[1] * u[1])
}

pub fn magnetic_energy(b: f64) -> f64 {
    0.5 * b * b
}

/// `E = ½ρ|u|² + ρe(ρ, p) + ½b²`.
pub fn total_energy(eos: &EquationOfState, rho: f64, p: f64, u: [f64; 2], b: f64) -> Result<f64> {
    Ok(kinetic_energy(rho, u) + rho * eos.internal_energy(rho, p)? + magnetic_energy(b))
}

/// `E + p + ½b²`, so that the energy flux is `(½ρ|u|² + ρe + p + b²) u`.
pub fn energy_flux_coefficient(
    eos: &EquationOfState,
    rho: f64,
    p: f64,
    u: [f64; 2],
    b: f64,
) -> Result<f64> {
    Ok(total_energy(eos, rho, p, u, b)? + p + magnetic_energy(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn energy_positive_for_admissible_states() {
        let eos = EquationOfState::ideal(1.4).unwrap();
        assert!(total_energy(&eos, 0.5, 0.1, [0.0, 0.0], 0.0).unwrap() > 0.0);
    }

    proptest! {
        /// With `½ρ|u|² = C = Λ − p − ½b²` the energy density is `Λ + ρe − p`
        /// and the flux coefficient is `Λ + ρe + ½b²`.
        #[test]
        fn energy_cancellation_identity(
            rho in 0.1f64..10.0, p in 0.1f64..10.0, b in -3.0f64..3.0,
            margin in 0.01f64..5.0, angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let eos = EquationOfState::ideal(5.0 / 3.0).unwrap();
            let lambda = p + 0.5 * b * b + margin;
            let c = lambda - p - 0.5 * b * b;
            let speed = (2.0 * c / rho).sqrt();
            let u = [speed * angle.cos(), speed * angle.sin()];
            let e = eos.internal_energy(rho, p).unwrap();
            let energy = total_energy(&eos, rho, p, u, b).unwrap();
            let flux = energy_flux_coefficient(&eos, rho, p, u, b).unwrap();
            let scale = 1.0 + lambda + rho * e;
            prop_assert!((energy - (lambda + rho * e - p)).abs() < 1e-12 * scale);
            prop_assert!((flux - (lambda + rho * e + 0.5 * b * b)).abs() < 1e-12 * scale);
        }
    }
}
