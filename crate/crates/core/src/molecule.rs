//! Molecular vibration model: Morse and harmonic potentials, the Gaussian-damped
//! linear dipole function, analytic Morse levels and a dense 1D eigensolver.
//!
//! The vibrational kinetic operator is −(1/2μ)∂²/∂q² with `q` in bohr and the
//! reduced mass μ in electron masses.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::qgrid::Grid1D;
use crate::units::{amu_to_me, debye_to_au, ev_to_hartree};

/// Reduced mass shared by all presets.
pub const PRESET_MASS_AMU: f64 = 8.5;
/// Equilibrium bond coordinate shared by all presets (bohr).
pub const PRESET_Q_EQ: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorseParams {
    /// Dissociation energy (hartree).
    pub de: f64,
    /// Range parameter (1/bohr).
    pub alpha: f64,
    /// Equilibrium coordinate (bohr).
    pub q_eq: f64,
    /// Reduced mass (electron masses).
    pub mu: f64,
}

impl MorseParams {
    pub fn new(de: f64, alpha: f64, q_eq: f64, mu: f64) -> Result<Self> {
        if !(de > 0.0 && alpha > 0.0 && mu > 0.0 && q_eq.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Morse parameters need De, alpha, mu > 0 (got De={de}, alpha={alpha}, mu={mu})"
            )));
        }
        let p = Self { de, alpha, q_eq, mu };
        if p.bound_state_count() < 3 {
            return Err(Error::InvalidParameter(format!(
                "Morse well supports only {} bound states; at least 3 are required",
                p.bound_state_count()
            )));
        }
        Ok(p)
    }

    /// V_A: De = 6.80 eV, α = 1.50 /bohr.
    pub fn preset_a() -> Self {
        Self {
            de: ev_to_hartree(6.80),
            alpha: 1.50,
            q_eq: PRESET_Q_EQ,
            mu: amu_to_me(PRESET_MASS_AMU),
        }
    }

    /// V_B: De = 9.80 eV, α = 1.25 /bohr.
    pub fn preset_b() -> Self {
        Self {
            de: ev_to_hartree(9.80),
            alpha: 1.25,
            q_eq: PRESET_Q_EQ,
            mu: amu_to_me(PRESET_MASS_AMU),
        }
    }

    /// Harmonic frequency ω_e = α·sqrt(2De/μ).
    pub fn omega_e(&self) -> f64 {
        self.alpha * (2.0 * self.de / self.mu).sqrt()
    }

    /// Anharmonicity constant χ = α²/(2μ).
    pub fn chi(&self) -> f64 {
        self.alpha * self.alpha / (2.0 * self.mu)
    }

    pub fn bound_state_count(&self) -> usize {
        let top = (2.0 * self.mu * self.de).sqrt() / self.alpha - 0.5;
        top.floor().max(-1.0) as usize + 1
    }

    pub fn energy(&self, q: f64) -> f64 {
        let e = (-self.alpha * (q - self.q_eq)).exp();
        self.de * (1.0 - e).powi(2) - self.de
    }

    /// Fundamental E₁ − E₀ from the closed-form spectrum.
    pub fn fundamental(&self) -> f64 {
        self.omega_e() - 2.0 * self.chi()
    }

    /// Anharmonic shift Δ21 = (E₁ − E₀) − (E₂ − E₁) = 2χ.
    pub fn anharmonic_shift(&self) -> f64 {
        2.0 * self.chi()
    }
}

/// Analytic bound level E_v = ω_e(v+½) − χ(v+½)² − De.
pub fn morse_level(v: usize, p: &MorseParams) -> Result<f64> {
    let bound = p.bound_state_count();
    if v >= bound {
        return Err(Error::UnboundLevel { v, bound });
    }
    let h = v as f64 + 0.5;
    Ok(p.omega_e() * h - p.chi() * h * h - p.de)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicParams {
    pub omega: f64,
    pub q_eq: f64,
    pub mu: f64,
}

impl HarmonicParams {
    /// V_C: same mass and equilibrium as V_A, curvature matched to the V_A fundamental.
    pub fn preset_c() -> Self {
        let a = MorseParams::preset_a();
        Self { omega: a.fundamental(), q_eq: a.q_eq, mu: a.mu }
    }

    /// ½μω²(q − q_eq)², with its minimum at zero energy.
    pub fn energy(&self, q: f64) -> f64 {
        0.5 * self.mu * self.omega * self.omega * (q - self.q_eq).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    MorseA,
    MorseB,
    Harmonic,
    Morse(MorseParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Resolved {
    Morse(MorseParams),
    Harmonic(HarmonicParams),
}

impl PotentialKind {
    fn resolve(&self) -> Resolved {
        match self {
            PotentialKind::MorseA => Resolved::Morse(MorseParams::preset_a()),
            PotentialKind::MorseB => Resolved::Morse(MorseParams::preset_b()),
            PotentialKind::Harmonic => Resolved::Harmonic(HarmonicParams::preset_c()),
            PotentialKind::Morse(p) => Resolved::Morse(*p),
        }
    }

    pub fn morse_params(&self) -> Option<MorseParams> {
        match self.resolve() {
            Resolved::Morse(p) => Some(p),
            Resolved::Harmonic(_) => None,
        }
    }

    pub fn reduced_mass(&self) -> f64 {
        match self.resolve() {
            Resolved::Morse(p) => p.mu,
            Resolved::Harmonic(h) => h.mu,
        }
    }

    pub fn q_eq(&self) -> f64 {
        match self.resolve() {
            Resolved::Morse(p) => p.q_eq,
            Resolved::Harmonic(h) => h.q_eq,
        }
    }

    pub fn energy(&self, q: f64) -> f64 {
        match self.resolve() {
            Resolved::Morse(p) => p.energy(q),
            Resolved::Harmonic(h) => h.energy(q),
        }
    }

    /// Closed-form fundamental E₁ − E₀.
    pub fn analytic_fundamental(&self) -> f64 {
        match self.resolve() {
            Resolved::Morse(p) => p.fundamental(),
            Resolved::Harmonic(h) => h.omega,
        }
    }

    /// Number of bound levels, `None` for the harmonic well.
    pub fn bound_state_count(&self) -> Option<usize> {
        self.morse_params().map(|p| p.bound_state_count())
    }

    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::MorseA => "VA",
            PotentialKind::MorseB => "VB",
            PotentialKind::Harmonic => "VC",
            PotentialKind::Morse(_) => "custom-morse",
        }
    }
}

impl fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "VA" => Ok(PotentialKind::MorseA),
            "VB" => Ok(PotentialKind::MorseB),
            "VC" | "HO" => Ok(PotentialKind::Harmonic),
            other => Err(Error::Config(format!("unknown potential preset `{other}`"))),
        }
    }
}

pub fn potential_energy(q: f64, kind: &PotentialKind) -> f64 {
    kind.energy(q)
}

/// d(q) = d0·(q − q0)·exp(−(q − q1)²/2σ²), all in atomic units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleParams {
    pub d0: f64,
    pub q0: f64,
    pub q1: f64,
    pub sigma: f64,
}

impl DipoleParams {
    pub fn new(d0: f64, q0: f64, q1: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !d0.is_finite() || !q0.is_finite() || !q1.is_finite() {
            return Err(Error::InvalidParameter(format!("dipole needs finite values and sigma > 0 (got {sigma})")));
        }
        Ok(Self { d0, q0, q1, sigma })
    }

    /// Non-polar mode: the dipole vanishes at the equilibrium geometry.
    pub fn non_polar() -> Self {
        Self { d0: debye_to_au(5.08), q0: 4.0, q1: 4.0, sigma: 0.6 }
    }

    /// Polar-right mode: finite dipole at equilibrium that grows with extension.
    pub fn polar_right() -> Self {
        Self { d0: debye_to_au(2.54), q0: 2.7, q1: 4.5, sigma: 0.6 }
    }

    pub fn value(&self, q: f64) -> f64 {
        self.d0 * (q - self.q0) * (-(q - self.q1).powi(2) / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.trim().to_ascii_uppercase().as_str() {
            "PR" => Ok(Self::polar_right()),
            "NP" => Ok(Self::non_polar()),
            other => Err(Error::Config(format!("unknown dipole preset `{other}`"))),
        }
    }
}

pub fn dipole_moment(q: f64, d: &DipoleParams) -> f64 {
    d.value(q)
}

/// Bound vibrational states on a uniform grid, normalized with Σ|φ|²·dq = 1.
///
/// Each vector is phased so that its leftmost significant lobe is positive.
#[derive(Debug, Clone)]
pub struct VibrationalStates {
    pub grid: Grid1D,
    pub energies: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl VibrationalStates {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Flip the sign of state 1 if needed so that ⟨1|d|0⟩ > 0.
    pub fn align_to_dipole(&mut self, d: &DipoleParams) -> Result<()> {
        if self.len() < 2 {
            return Ok(());
        }
        let d10 = transition_dipole(&self.vectors[1], &self.vectors[0], d, &self.grid)?;
        if d10 < 0.0 {
            self.vectors[1].iter_mut().for_each(|v| *v = -*v);
        }
        Ok(())
    }

    /// Matrix of ⟨v|d|w⟩ over all retained states.
    pub fn dipole_matrix(&self, d: &DipoleParams) -> Result<DMatrix<f64>> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for v in 0..n {
            for w in v..n {
                let e = transition_dipole(&self.vectors[v], &self.vectors[w], d, &self.grid)?;
                m[(v, w)] = e;
                m[(w, v)] = e;
            }
        }
        Ok(m)
    }
}

/// Fourier-grid kinetic matrix −(1/2μ)∂² on a periodic uniform grid.
pub(crate) fn fourier_kinetic_matrix(grid: &Grid1D, mass: f64) -> DMatrix<f64> {
    let n = grid.len();
    let k = grid.wavenumbers();
    let h = grid.spacing();
    // T_jl depends only on (j − l) mod n
    let row: Vec<f64> = (0..n)
        .map(|d| {
            let dist = d as f64 * h;
            k.iter().map(|&km| km * km * (km * dist).cos()).sum::<f64>() / (2.0 * mass * n as f64)
        })
        .collect();
    DMatrix::from_fn(n, n, |j, l| row[(j + n - l) % n])
}

const EIGEN_RESIDUAL_TOL: f64 = 1e-9;

/// Lowest `n_states` eigenpairs of the 1D vibrational Hamiltonian on `grid`.
pub fn vibrational_eigenstates(kind: &PotentialKind, grid: &Grid1D, n_states: usize) -> Result<VibrationalStates> {
    if n_states == 0 || n_states > grid.len() {
        return Err(Error::InvalidParameter(format!("cannot request {n_states} states on a {}-point grid", grid.len())));
    }
    if let Some(bound) = kind.bound_state_count() {
        if n_states > bound {
            return Err(Error::UnboundLevel { v: n_states - 1, bound });
        }
    }
    let mut h = fourier_kinetic_matrix(grid, kind.reduced_mass());
    let qs = grid.points();
    for (i, &q) in qs.iter().enumerate() {
        h[(i, i)] += kind.energy(q);
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let dq = grid.spacing();
    let mut energies = Vec::with_capacity(n_states);
    let mut vectors = Vec::with_capacity(n_states);
    let mut worst = 0.0f64;
    for &idx in order.iter().take(n_states) {
        let e = eig.eigenvalues[idx];
        let v = eig.eigenvectors.column(idx);
        let resid = (&h * v - v * e).amax();
        worst = worst.max(resid / e.abs().max(1e-3));
        let mut phi: Vec<f64> = v.iter().map(|c| c / dq.sqrt()).collect();
        fix_phase(&mut phi);
        energies.push(e);
        vectors.push(phi);
    }
    if !worst.is_finite() || worst > EIGEN_RESIDUAL_TOL {
        return Err(Error::EigenNotConverged { residual: worst, tolerance: EIGEN_RESIDUAL_TOL });
    }
    Ok(VibrationalStates { grid: *grid, energies, vectors })
}

fn fix_phase(phi: &mut [f64]) {
    let max = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = phi.iter().find(|v| v.abs() > 1e-3 * max) {
        if *first < 0.0 {
            phi.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// ⟨bra|d|ket⟩ by the trapezoid rule on the uniform grid.
pub fn transition_dipole(bra: &[f64], ket: &[f64], d: &DipoleParams, grid: &Grid1D) -> Result<f64> {
    if bra.len() != grid.len() || ket.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "states of length {} and {} on a {}-point grid",
            bra.len(),
            ket.len(),
            grid.len()
        )));
    }
    let n = grid.len();
    let qs = grid.points();
    let f = |i: usize| bra[i] * d.value(qs[i]) * ket[i];
    let interior: f64 = (0..n).map(f).sum();
    Ok((interior - 0.5 * (f(0) + f(n - 1))) * grid.spacing())
}
