//! Time-dependent vibration–cavity Hamiltonian on the (q, x) plane:
//!
//! H(t) = T_q + V(q) − ½∂²/∂x² + ½ω_c(t)²x² + sqrt(2ω_c(t))·E₀(t)·d(q)·x
//!
//! with E₀(t) = λ_g·ω_c(t)/d₁₀ and a Gaussian cavity-frequency pulse. `x` is the
//! cavity oscillator coordinate with unit mass, so the vacuum variance of `x` is
//! 1/(2ω_c) and the dimensionless quadrature is sqrt(2ω_c)·x.

use crate::error::{Error, Result};
use crate::molecule::{vibrational_eigenstates, DipoleParams, PotentialKind, VibrationalStates};
use crate::qgrid::Grid1D;
use crate::units::{fs_to_au, hartree_to_wavenumber};

/// Gaussian modulation ω_c(t) = ω_c0·(1 + η·exp(−(t − t_d)²/2τ²)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityModulation {
    /// Undriven cavity frequency (hartree).
    pub omega_c0: f64,
    /// Peak fractional shift; positive is blue, negative red.
    pub eta: f64,
    /// Pulse centre (fs).
    pub t_d: f64,
    /// Gaussian width parameter (fs).
    pub tau: f64,
}

pub const DEFAULT_ETA: f64 = 0.2;
pub const DEFAULT_T_D_FS: f64 = 250.0;
pub const DEFAULT_TAU_FS: f64 = 62.5;

impl CavityModulation {
    pub fn new(omega_c0: f64, eta: f64, t_d: f64, tau: f64) -> Result<Self> {
        if !(omega_c0 > 0.0) || !(tau > 0.0) || !(1.0 + eta > 0.0) || !t_d.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "modulation needs omega_c0 > 0, tau > 0 and 1 + eta > 0 (got {omega_c0}, {tau}, {eta})"
            )));
        }
        Ok(Self { omega_c0, eta, t_d, tau })
    }

    pub fn unmodulated(omega_c0: f64) -> Self {
        Self { omega_c0, eta: 0.0, t_d: DEFAULT_T_D_FS, tau: DEFAULT_TAU_FS }
    }

    pub fn envelope(&self, t_fs: f64) -> f64 {
        (-(t_fs - self.t_d).powi(2) / (2.0 * self.tau * self.tau)).exp()
    }

    pub fn fwhm_fs(&self) -> f64 {
        2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * self.tau
    }

    /// Spectral bandwidth Δω = 2·sqrt(2 ln 2)/τ (hartree).
    pub fn bandwidth(&self) -> f64 {
        2.0 * (2.0 * std::f64::consts::LN_2).sqrt() / fs_to_au(self.tau)
    }

    pub fn bandwidth_cm1(&self) -> f64 {
        hartree_to_wavenumber(self.bandwidth())
    }

    /// Earliest time at which the pulse counts as over.
    pub fn pulse_end_fs(&self) -> f64 {
        self.t_d + 4.0 * self.tau
    }
}

pub fn cavity_frequency(t_fs: f64, m: &CavityModulation) -> f64 {
    m.omega_c0 * (1.0 + m.eta * m.envelope(t_fs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingRegime {
    Weak,
    Strong,
    Ultrastrong,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSpec {
    pub lambda_g: f64,
    /// ⟨1|d|0⟩ between bare vibrational states (atomic units, positive).
    pub d10: f64,
}

impl CouplingSpec {
    pub fn new(lambda_g: f64, d10: f64) -> Result<Self> {
        if !(lambda_g >= 0.0) || !(d10 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling needs lambda_g >= 0 and d10 > 0 (got {lambda_g}, {d10})"
            )));
        }
        Ok(Self { lambda_g, d10 })
    }

    pub fn regime(&self) -> CouplingRegime {
        if self.lambda_g >= 0.1 {
            CouplingRegime::Ultrastrong
        } else if self.lambda_g >= 0.01 {
            CouplingRegime::Strong
        } else {
            CouplingRegime::Weak
        }
    }

    /// g = λ_g·ω_c at the given cavity frequency.
    pub fn rabi_coupling(&self, omega_c: f64) -> f64 {
        self.lambda_g * omega_c
    }
}

/// Vacuum-field amplitude E₀(t) = λ_g·ω_c(t)/d₁₀.
pub fn vacuum_amplitude(t_fs: f64, c: &CouplingSpec, m: &CavityModulation) -> f64 {
    c.lambda_g * cavity_frequency(t_fs, m) / c.d10
}

/// Fully specified Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityModel {
    pub potential: PotentialKind,
    pub dipole: DipoleParams,
    pub modulation: CavityModulation,
    pub coupling: CouplingSpec,
}

/// Coefficients of the x-dependent part of the potential at one instant:
/// ½·`curvature`·x² + `coupling`·d(q)·x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityTerms {
    pub omega: f64,
    pub curvature: f64,
    pub coupling: f64,
}

impl CavityModel {
    /// Resolve the coupling normalization from bare vibrational states on `grid`
    /// and tune the undriven cavity to the grid fundamental unless `omega_c0` is given.
    pub fn build(
        potential: PotentialKind,
        dipole: DipoleParams,
        lambda_g: f64,
        eta: f64,
        t_d: f64,
        tau: f64,
        omega_c0: Option<f64>,
        grid: &Grid1D,
    ) -> Result<(Self, VibrationalStates)> {
        let n_states = potential.bound_state_count().map_or(12, |b| b.min(12));
        let mut states = vibrational_eigenstates(&potential, grid, n_states)?;
        states.align_to_dipole(&dipole)?;
        let d10 = crate::molecule::transition_dipole(&states.vectors[1], &states.vectors[0], &dipole, grid)?;
        let omega = omega_c0.unwrap_or(states.energies[1] - states.energies[0]);
        let model = Self {
            potential,
            dipole,
            modulation: CavityModulation::new(omega, eta, t_d, tau)?,
            coupling: CouplingSpec::new(lambda_g, d10)?,
        };
        Ok((model, states))
    }

    pub fn omega_c0(&self) -> f64 {
        self.modulation.omega_c0
    }

    pub fn reduced_mass(&self) -> f64 {
        self.potential.reduced_mass()
    }

    pub fn cavity_frequency(&self, t_fs: f64) -> f64 {
        cavity_frequency(t_fs, &self.modulation)
    }

    pub fn terms_at(&self, t_fs: f64) -> CavityTerms {
        let omega = self.cavity_frequency(t_fs);
        self.terms_for_frequency(omega)
    }

    /// Terms of the undriven Hamiltonian, ω_c = ω_c0 exactly.
    pub fn static_terms(&self) -> CavityTerms {
        self.terms_for_frequency(self.omega_c0())
    }

    fn terms_for_frequency(&self, omega: f64) -> CavityTerms {
        let e0 = self.coupling.lambda_g * omega / self.coupling.d10;
        CavityTerms { omega, curvature: omega * omega, coupling: (2.0 * omega).sqrt() * e0 }
    }

    /// Multiplicative part of H(t) at (q, x).
    pub fn potential_surface(&self, q: f64, x: f64, t_fs: f64) -> f64 {
        let terms = self.terms_at(t_fs);
        self.potential.energy(q) + 0.5 * terms.curvature * x * x + terms.coupling * self.dipole.value(q) * x
    }

    /// A copy with the modulation switched off.
    pub fn without_modulation(&self) -> Self {
        Self { modulation: CavityModulation { eta: 0.0, ..self.modulation }, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::MorseParams;
    use crate::units::wavenumber_to_hartree;

    fn modulation(eta: f64) -> CavityModulation {
        CavityModulation::new(wavenumber_to_hartree(1838.0), eta, 250.0, 62.5).unwrap()
    }

    #[test]
    fn gaussian_protocol() {
        let m = modulation(0.2);
        let w0 = m.omega_c0;
        assert!((cavity_frequency(250.0, &m) - 1.2 * w0).abs() < 1e-15);
        let half = 62.5 * (2.0 * std::f64::consts::LN_2).sqrt();
        assert!((cavity_frequency(250.0 + half, &m) - 1.1 * w0).abs() < 1e-14);
        assert!((cavity_frequency(250.0 - half, &m) - 1.1 * w0).abs() < 1e-14);
        let tail = cavity_frequency(0.0, &m);
        assert!((tail - w0 * (1.0 + 0.2 * (-8.0f64).exp())).abs() < 1e-16);
        assert!((tail / w0 - 1.0) < 7e-5);
        assert!((m.fwhm_fs() - 147.0).abs() < 0.2);
    }

    #[test]
    fn bandwidth_of_default_pulse() {
        let m = modulation(0.2);
        // 2·sqrt(2 ln 2) / (62.5 fs / 0.024188843 fs) hartree, in cm⁻¹
        assert!((m.bandwidth_cm1() - 200.0217).abs() < 1e-3, "{}", m.bandwidth_cm1());
    }

    #[test]
    fn invalid_modulation_rejected() {
        assert!(CavityModulation::new(0.01, -1.0, 250.0, 62.5).is_err());
        assert!(CavityModulation::new(0.01, 0.2, 250.0, 0.0).is_err());
        assert!(CouplingSpec::new(0.1, 0.0).is_err());
        assert!(CouplingSpec::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn regimes() {
        let c = |l| CouplingSpec::new(l, 1.0).unwrap().regime();
        assert_eq!(c(0.2), CouplingRegime::Ultrastrong);
        assert_eq!(c(0.08), CouplingRegime::Strong);
        assert_eq!(c(0.001), CouplingRegime::Weak);
    }

    #[test]
    fn vacuum_amplitude_scaling() {
        let m = modulation(0.2);
        let zero = CouplingSpec::new(0.0, 0.12).unwrap();
        assert_eq!(vacuum_amplitude(100.0, &zero, &m), 0.0);
        let c = CouplingSpec::new(0.2, 0.12).unwrap();
        let ratio = vacuum_amplitude(250.0, &c, &m) / vacuum_amplitude(0.0, &c, &m);
        assert!((ratio - 1.2 / (1.0 + 0.2 * (-8.0f64).exp())).abs() < 1e-14);
    }

    fn model(lambda: f64, eta: f64) -> CavityModel {
        CavityModel {
            potential: PotentialKind::MorseA,
            dipole: DipoleParams::polar_right(),
            modulation: modulation(eta),
            coupling: CouplingSpec::new(lambda, 0.12).unwrap(),
        }
    }

    #[test]
    fn surface_limits() {
        let free = model(0.0, 0.2);
        let w = free.cavity_frequency(120.0);
        for (q, x) in [(3.5, -20.0), (4.2, 7.0)] {
            let expect = MorseParams::preset_a().energy(q) + 0.5 * w * w * x * x;
            assert!((free.potential_surface(q, x, 120.0) - expect).abs() < 1e-15);
        }
        let coupled = model(0.2, 0.2);
        assert_eq!(coupled.potential_surface(4.3, 0.0, 250.0), MorseParams::preset_a().energy(4.3));
    }

    #[test]
    fn coupling_prefactor_scales_as_three_halves_power() {
        let m = model(0.2, 0.2).without_modulation();
        let mut peak = model(0.2, 0.2);
        peak.modulation.t_d = 250.0;
        let r = peak.terms_at(250.0).coupling / m.terms_at(250.0).coupling;
        assert!((r - 1.2f64.powf(1.5)).abs() < 1e-14);
        assert!((r - 1.315).abs() < 1e-3);
    }

    #[test]
    fn second_x_derivative_is_curvature() {
        let m = model(0.2, -0.2);
        let h = 1e-2;
        for t in [0.0, 200.0, 250.0, 400.0] {
            for (q, x) in [(3.8, -5.0), (4.4, 30.0)] {
                let f = |x| m.potential_surface(q, x, t);
                let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
                let w = m.cavity_frequency(t);
                assert!((d2 / (w * w) - 1.0).abs() < 1e-5, "{d2} vs {}", w * w);
            }
        }
    }

    #[test]
    fn protocol_is_symmetric_about_centre() {
        let m = modulation(-0.2);
        for s in [1.0, 17.5, 62.5, 300.0] {
            assert_eq!(cavity_frequency(250.0 + s, &m), cavity_frequency(250.0 - s, &m));
        }
    }

    /// Scalars tagged with a power of the energy unit; multiplying tags adds
    /// exponents. Checks every term of the surface is an energy.
    #[derive(Clone, Copy, Debug)]
    struct Tagged {
        value: f64,
        energy_power: f64,
        length_power: f64,
    }

    impl std::ops::Mul for Tagged {
        type Output = Tagged;
        fn mul(self, o: Tagged) -> Tagged {
            Tagged {
                value: self.value * o.value,
                energy_power: self.energy_power + o.energy_power,
                length_power: self.length_power + o.length_power,
            }
        }
    }

    #[test]
    fn units_audit() {
        // atomic units with ħ = mₑ = 1: [x] = length·mass^{1/2} so that ½ω²x² is an
        // energy; track [ω] = energy, [x²] = energy⁻¹, [d] = charge·length, [E₀] = energy/(charge·length)
        let t = |v, e, l| Tagged { value: v, energy_power: e, length_power: l };
        let omega = t(0.0084, 1.0, 0.0);
        let x = t(10.0, -0.5, 0.0);
        let d = t(0.9, 0.0, 1.0);
        let lambda = t(0.2, 0.0, 0.0);
        let d10 = t(0.12, 0.0, 1.0);
        let inv_d10 = t(1.0 / d10.value, 0.0, -1.0);
        let half = t(0.5, 0.0, 0.0);
        let cavity = half * omega * omega * x * x;
        let sqrt_2w = t((2.0 * omega.value).sqrt(), 0.5, 0.0);
        let e0 = lambda * omega * inv_d10;
        let coupling = sqrt_2w * e0 * d * x;
        for term in [cavity, coupling] {
            assert_eq!((term.energy_power, term.length_power), (1.0, 0.0));
        }
    }
}
