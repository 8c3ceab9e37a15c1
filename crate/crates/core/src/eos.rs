//! Ideal-gas closure: internal energy, specific entropy and the isentropic
//! pressure potential.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which integrand defines the pressure potential `P(ρ) = ρ ∫₁^ρ p(r)/r^q dr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PotentialForm {
    /// `q = 2`, the form satisfying `ρP'(ρ) − P(ρ) = p(ρ)`.
    #[default]
    GibbsConsistent,
    /// `q = 1`, kept only to reproduce the printed formula for comparison.
    Literal,
}

/// Selects how the internal energy is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnergyMode {
    /// `e = p / ((γ − 1) ρ)`.
    Full,
    /// `e = P(ρ) / ρ` for the barotropic law `p = ρ^law_exponent`, so that
    /// `ρ e = P(ρ)` and the energy equation coincides with the isentropic one.
    IsentropicOverride { law_exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquationOfState {
    gamma: f64,
    /// Additive entropy offset: `s = (ln(p ρ^-γ) − entropy_ref) / (γ − 1)`.
    entropy_ref: f64,
    mode: EnergyMode,
    potential: PotentialForm,
}

impl EquationOfState {
    pub fn ideal(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!("adiabatic exponent must exceed 1, got {gamma}")));
        }
        Ok(Self {
            gamma,
            entropy_ref: 0.0,
            mode: EnergyMode::Full,
            potential: PotentialForm::GibbsConsistent,
        })
    }

    /// Internal energy pinned by the pressure potential of `p = ρ^law_exponent`.
    pub fn isentropic_override(gamma: f64, law_exponent: f64) -> Result<Self> {
        if !(law_exponent > 1.0) {
            return Err(Error::Domain(format!(
                "pressure-law exponent must exceed 1, got {law_exponent}"
            )));
        }
        let mut eos = Self::ideal(gamma)?;
        eos.mode = EnergyMode::IsentropicOverride { law_exponent };
        Ok(eos)
    }

    pub fn with_entropy_ref(mut self, entropy_ref: f64) -> Self {
        self.entropy_ref = entropy_ref;
        self
    }

    pub fn with_potential_form(mut self, form: PotentialForm) -> Self {
        self.potential = form;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mode(&self) -> EnergyMode {
        self.mode
    }

    pub fn potential_form(&self) -> PotentialForm {
        self.potential
    }

    pub fn internal_energy(&self, rho: f64, p: f64) -> Result<f64> {
        check_positive(rho, p)?;
        Ok(match self.mode {
            EnergyMode::Full => p / ((self.gamma - 1.0) * rho),
            EnergyMode::IsentropicOverride { law_exponent } => {
                pressure_potential_with(rho, law_exponent, self.potential)? / rho
            }
        })
    }

    pub fn specific_entropy(&self, rho: f64, p: f64) -> Result<f64> {
        check_positive(rho, p)?;
        Ok(((p * rho.powf(-self.gamma)).ln() - self.entropy_ref) / (self.gamma - 1.0))
    }

    /// Temperature-like factor `θ = p/ρ` with `θ ds = de − (p/ρ²) dρ`.
    pub fn temperature(&self, rho: f64, p: f64) -> Result<f64> {
        check_positive(rho, p)?;
        Ok(p / rho)
    }

    pub fn pressure_potential(&self, rho: f64, law_exponent: f64) -> Result<f64> {
        pressure_potential_with(rho, law_exponent, self.potential)
    }
}

fn check_positive(rho: f64, p: f64) -> Result<()> {
    if !(rho > 0.0) || !(p > 0.0) || !rho.is_finite() || !p.is_finite() {
        return Err(Error::Domain(format!(
            "density and pressure must be positive and finite (ρ = {rho}, p = {p})"
        )));
    }
    Ok(())
}

/// Closed form of `ρ ∫₁^ρ r^a / r^q dr` for the power law `p(r) = r^a`.
pub fn pressure_potential_with(rho: f64, law_exponent: f64, form: PotentialForm) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("density must be positive, got {rho}")));
    }
    let q = match form {
        PotentialForm::GibbsConsistent => 2.0,
        PotentialForm::Literal => 1.0,
    };
    let power = law_exponent - q + 1.0;
    let integral = if power.abs() < 1e-14 {
        rho.ln()
    } else {
        (rho.powf(power) - 1.0) / power
    };
    Ok(rho * integral)
}

/// Barotropic pressure `p(ρ) = ρ^law_exponent`.
pub fn power_law_pressure(rho: f64, law_exponent: f64) -> f64 {
    rho.powf(law_exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn internal_energy_examples() {
        let eos = EquationOfState::ideal(2.0).unwrap();
        assert_eq!(eos.internal_energy(1.0, 1.0).unwrap(), 1.0);
        let eos = EquationOfState::ideal(5.0 / 3.0).unwrap();
        assert_abs_diff_eq!(eos.internal_energy(2.0, 4.0).unwrap(), 3.0, epsilon = 1e-14);
        let over = EquationOfState::isentropic_override(2.0, 2.0).unwrap();
        assert_eq!(over.internal_energy(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(over.internal_energy(2.0, 4.0).unwrap(), 1.0);
    }

    #[test]
    fn nonpositive_inputs_rejected() {
        let eos = EquationOfState::ideal(2.0).unwrap();
        assert!(matches!(eos.internal_energy(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(eos.internal_energy(1.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(eos.specific_entropy(-1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(eos.pressure_potential(0.0, 2.0), Err(Error::Domain(_))));
        assert!(EquationOfState::ideal(1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        let eos = EquationOfState::ideal(2.0).unwrap();
        assert_eq!(eos.specific_entropy(1.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(eos.specific_entropy(2.0, 4.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gibbs_relation_by_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for gamma in [1.4, 5.0 / 3.0, 2.0] {
            let eos = EquationOfState::ideal(gamma).unwrap();
            for _ in 0..1000 {
                let rho: f64 = rng.gen_range(0.1..10.0);
                let p: f64 = rng.gen_range(0.1..10.0);
                let step = 1e-6;
                let d = |f: &dyn Fn(f64, f64) -> f64, dr: f64, dp: f64| {
                    (f(rho + dr, p + dp) - f(rho - dr, p - dp)) / 2.0
                };
                let e = |r: f64, q: f64| eos.internal_energy(r, q).unwrap();
                let s = |r: f64, q: f64| eos.specific_entropy(r, q).unwrap();
                let theta = eos.temperature(rho, p).unwrap();
                // θ ∂s/∂ρ = ∂e/∂ρ − p/ρ²,  θ ∂s/∂p = ∂e/∂p
                let lhs_r = theta * d(&s, step, 0.0) / step;
                let rhs_r = d(&e, step, 0.0) / step - p / (rho * rho);
                let lhs_p = theta * d(&s, 0.0, step) / step;
                let rhs_p = d(&e, 0.0, step) / step;
                let scale = 1.0 + rhs_r.abs() + lhs_r.abs();
                assert!((lhs_r - rhs_r).abs() / scale < 1e-6, "ρ-direction at ({rho}, {p})");
                assert!((lhs_p - rhs_p).abs() / (1.0 + rhs_p.abs()) < 1e-6);
            }
        }
    }

    /// Composite Gauss–Legendre oracle for the defining integral.
    fn potential_by_quadrature(rho: f64, a: f64, q: f64) -> f64 {
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let panels = 2000;
        let (lo, hi) = (1.0_f64.min(rho), 1.0_f64.max(rho));
        let h = (hi - lo) / panels as f64;
        let mut sum = 0.0;
        for i in 0..panels {
            let mid = lo + (i as f64 + 0.5) * h;
            for (x, w) in nodes {
                let r = mid + 0.5 * h * x;
                sum += 0.5 * h * w * r.powf(a) / r.powf(q);
            }
        }
        let signed = if rho >= 1.0 { sum } else { -sum };
        rho * signed
    }

    #[test]
    fn pressure_potential_examples() {
        let eos = EquationOfState::ideal(2.0).unwrap();
        assert_eq!(eos.pressure_potential(1.0, 2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(eos.pressure_potential(2.0, 2.0).unwrap(), 2.0, epsilon = 1e-14);
        let closed = eos.pressure_potential(3.0, 5.0 / 3.0).unwrap();
        let oracle = potential_by_quadrature(3.0, 5.0 / 3.0, 2.0);
        assert!((closed - oracle).abs() < 1e-10, "{closed} vs {oracle}");
        let literal = pressure_potential_with(3.0, 5.0 / 3.0, PotentialForm::Literal).unwrap();
        assert!((literal - potential_by_quadrature(3.0, 5.0 / 3.0, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn gibbs_consistent_potential_reproduces_pressure() {
        for (rho, a) in [(0.3, 1.4), (2.0, 2.0), (7.5, 5.0 / 3.0)] {
            let h = 1e-6;
            let pot = |r: f64| pressure_potential_with(r, a, PotentialForm::GibbsConsistent).unwrap();
            let dp = (pot(rho + h) - pot(rho - h)) / (2.0 * h);
            let lhs = rho * dp - pot(rho);
            assert!((lhs - power_law_pressure(rho, a)).abs() < 1e-6);
            // the printed integrand does not satisfy the relation
            let lit = |r: f64| pressure_potential_with(r, a, PotentialForm::Literal).unwrap();
            let dl = (lit(rho + h) - lit(rho - h)) / (2.0 * h);
            assert!((rho * dl - lit(rho) - power_law_pressure(rho, a)).abs() > 1e-3);
        }
    }
}
