//! Second-order split-operator propagation on the (q, x) grid in real time, and
//! imaginary-time relaxation with Gram–Schmidt deflation for the ground and
//! polariton eigenstates of the undriven Hamiltonian.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;

use crate::cavity_model::CavityModel;
use crate::error::{Error, Result};
use crate::field_stats::hermite_functions;
use crate::molecule::VibrationalStates;
use crate::qgrid::{inner_product, Grid1D, Spectral2D, Wavefunction2D};
use crate::units::{au_to_fs, fs_to_au};

pub const DEFAULT_DT_AU: f64 = 1.0;
pub const DEFAULT_T_FINAL_FS: f64 = 800.0;
/// Largest tolerated |ψ| on the grid boundary relative to max |ψ|.
pub const EDGE_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_RELAX_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Real,
    Imaginary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSettings {
    /// Time step (atomic units).
    pub dt: f64,
    /// End of the run (fs).
    pub t_final: f64,
    pub sample_stride: usize,
    pub mode: Mode,
    pub edge_threshold: f64,
}

impl PropagationSettings {
    pub fn new(dt: f64, t_final: f64, sample_stride: usize) -> Result<Self> {
        if !(dt > 0.0) || !(t_final > 0.0) || sample_stride == 0 {
            return Err(Error::InvalidParameter(format!(
                "propagation needs dt > 0, t_final > 0 and a positive sample stride (got {dt}, {t_final}, {sample_stride})"
            )));
        }
        Ok(Self { dt, t_final, sample_stride, mode: Mode::Real, edge_threshold: EDGE_THRESHOLD })
    }

    pub fn n_steps(&self) -> usize {
        (fs_to_au(self.t_final) / self.dt).round() as usize
    }
}

impl Default for PropagationSettings {
    fn default() -> Self {
        Self { dt: DEFAULT_DT_AU, t_final: DEFAULT_T_FINAL_FS, sample_stride: 41, mode: Mode::Real, edge_threshold: EDGE_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Ground,
    LowerPolariton,
    UpperPolariton,
}

impl Target {
    /// Number of lower states that must be deflated before this one.
    pub fn index(self) -> usize {
        match self {
            Target::Ground => 0,
            Target::LowerPolariton => 1,
            Target::UpperPolariton => 2,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Ground => "ground",
            Target::LowerPolariton => "lower_polariton",
            Target::UpperPolariton => "upper_polariton",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ground" | "gs" => Ok(Target::Ground),
            "lower_polariton" | "lp" => Ok(Target::LowerPolariton),
            "upper_polariton" | "up" => Ok(Target::UpperPolariton),
            other => Err(Error::Config(format!("unknown initial state '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenstatePrep {
    pub target: Target,
    pub deflation: Vec<Wavefunction2D>,
    /// Rung ends of the deflated states, by dτ. A rung whose dτ appears here
    /// deflates against the eigenstates of its own splitting operator.
    pub deflation_rungs: Vec<Vec<(f64, Wavefunction2D)>>,
    /// Convergence threshold on |dE/dτ| (hartree per atomic time unit).
    pub tolerance: f64,
    /// Imaginary-time steps, coarse to fine; each rung runs to convergence.
    pub dtau_ladder: Vec<f64>,
    /// Minimum imaginary time spent on each rung (atomic units).
    pub min_time: f64,
    pub max_steps: usize,
    pub check_every: usize,
    /// Number of final rungs combined by polynomial extrapolation in dτ² to
    /// cancel the splitting bias of the converged state. 0 or 1 disables it.
    pub extrapolation_points: usize,
}

impl EigenstatePrep {
    pub fn new(target: Target, deflation: Vec<Wavefunction2D>) -> Result<Self> {
        for (i, a) in deflation.iter().enumerate() {
            for (j, b) in deflation.iter().enumerate().skip(i) {
                let ov = inner_product(a, b)?;
                let expect = if i == j { 1.0 } else { 0.0 };
                if (ov - expect).norm() > 1e-10 {
                    return Err(Error::InvalidParameter(format!(
                        "deflation states {i} and {j} are not orthonormal (overlap {:.3e})",
                        ov.norm()
                    )));
                }
            }
        }
        Ok(Self {
            target,
            deflation,
            deflation_rungs: Vec::new(),
            tolerance: DEFAULT_RELAX_TOLERANCE,
            dtau_ladder: vec![10.0, 2.0, 1.0],
            min_time: 2000.0,
            max_steps: 40_000,
            check_every: 10,
            extrapolation_points: 2,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Relaxed {
    pub energy: f64,
    pub psi: Wavefunction2D,
    pub steps: usize,
    /// (rung, step, energy) at every convergence check.
    pub history: Vec<(usize, usize, f64)>,
    pub drift: f64,
    /// (dτ, ψ) at the end of every rung.
    pub rungs: Vec<(f64, Wavefunction2D)>,
    /// How many final rungs the extrapolation uses.
    pub fit: usize,
}

impl Relaxed {
    /// The stationary state of the real-time Strang step of size `dt`.
    ///
    /// The symmetric splitting evolves with H + dt²·W in real time and relaxes
    /// to the ground state of H − dτ²·W in imaginary time, so the real-time
    /// eigenstate is the imaginary-time fixed point continued to dτ² = −dt².
    /// Starting from it removes the O(dt²) breathing an exact eigenstate of H
    /// shows under the discrete propagator.
    pub fn adapted_to_real_time(&self, dt: f64) -> Result<Wavefunction2D> {
        if self.fit < 2 {
            return Ok(self.psi.clone());
        }
        let mut psi = self.continued(-dt * dt)?;
        psi.normalize();
        Ok(psi)
    }

    /// Lagrange interpolation of the last `fit` rung ends in s = dτ².
    fn continued(&self, s: f64) -> Result<Wavefunction2D> {
        let pts = &self.rungs[self.rungs.len() - self.fit..];
        let mut out = pts[0].1.clone();
        out.scale(Complex64::new(0.0, 0.0));
        for (i, (di, pi)) in pts.iter().enumerate() {
            let si = di * di;
            let w: f64 = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, (dj, _))| (s - dj * dj) / (si - dj * dj))
                .product();
            out.axpy(Complex64::new(w, 0.0), pi)?;
        }
        Ok(out)
    }
}

/// Grid propagator for one model; owns the FFT plans and cached phase tables.
pub struct Propagator {
    model: CavityModel,
    spectral: Spectral2D,
    v_q: Vec<f64>,
    d_q: Vec<f64>,
    xs: Vec<f64>,
    masses: [f64; 2],
    kinetic: Option<(f64, Mode, Array2<Complex64>)>,
}

/// Exponent weights of the multiplicative part: a·V(q) + ½·b·x² + c·d(q)·x.
#[derive(Debug, Clone, Copy, Default)]
struct PotentialWeights {
    a: f64,
    b: f64,
    c: f64,
}

impl std::ops::Add for PotentialWeights {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c }
    }
}

impl Propagator {
    pub fn new(model: CavityModel, q: Grid1D, x: Grid1D) -> Self {
        let v_q = q.points().iter().map(|&v| model.potential.energy(v)).collect();
        let d_q = q.points().iter().map(|&v| model.dipole.value(v)).collect();
        let masses = [model.reduced_mass(), 1.0];
        Self { spectral: Spectral2D::new(q, x), v_q, d_q, xs: x.points(), masses, kinetic: None, model }
    }

    pub fn model(&self) -> &CavityModel {
        &self.model
    }

    pub fn q_grid(&self) -> &Grid1D {
        self.spectral.q_grid()
    }

    pub fn x_grid(&self) -> &Grid1D {
        self.spectral.x_grid()
    }

    fn weights_at(&self, t_fs: f64, span: f64) -> PotentialWeights {
        let terms = self.model.terms_at(t_fs);
        PotentialWeights { a: span, b: span * terms.curvature, c: span * terms.coupling }
    }

    fn static_weights(&self, span: f64) -> PotentialWeights {
        let terms = self.model.static_terms();
        PotentialWeights { a: span, b: span * terms.curvature, c: span * terms.coupling }
    }

    /// ψ ← exp(−κ·[a·V + ½b·x² + c·d·x])·ψ with κ = i (real) or 1 (imaginary).
    fn apply_potential(&self, psi: &mut Wavefunction2D, w: PotentialWeights, mode: Mode) {
        let x0 = self.xs[0];
        let dx = self.spectral.x_grid().spacing();
        let data = psi.data_mut();
        match mode {
            Mode::Real => {
                let bx: Vec<Complex64> =
                    self.xs.iter().map(|&x| Complex64::from_polar(1.0, -0.5 * w.b * x * x)).collect();
                for (i, mut row) in data.rows_mut().into_iter().enumerate() {
                    let cd = w.c * self.d_q[i];
                    // the coupling phase is geometric along the uniform x grid
                    let mut cur = Complex64::from_polar(1.0, -(w.a * self.v_q[i] + cd * x0));
                    let step = Complex64::from_polar(1.0, -cd * dx);
                    for (z, b) in row.iter_mut().zip(&bx) {
                        *z *= cur * b;
                        cur *= step;
                    }
                }
            }
            Mode::Imaginary => {
                for (i, mut row) in data.rows_mut().into_iter().enumerate() {
                    let cd = w.c * self.d_q[i];
                    let av = w.a * self.v_q[i];
                    for (z, &x) in row.iter_mut().zip(&self.xs) {
                        *z *= (-(av + 0.5 * w.b * x * x + cd * x)).exp();
                    }
                }
            }
        }
    }

    fn apply_kinetic(&mut self, psi: &mut Wavefunction2D, dt: f64, mode: Mode) {
        let stale = !matches!(&self.kinetic, Some((d, m, _)) if *d == dt && *m == mode);
        if stale {
            let table = self.spectral.kinetic_table(self.masses);
            let factor = match mode {
                Mode::Real => table.mapv(|t| Complex64::from_polar(1.0, -t * dt)),
                Mode::Imaginary => table.mapv(|t| Complex64::new((-t * dt).exp(), 0.0)),
            };
            self.kinetic = Some((dt, mode, factor));
        }
        let factor = &self.kinetic.as_ref().expect("filled above").2;
        self.spectral.apply_momentum_factor(psi, factor);
    }

    /// One Strang step exp(−iV dt/2)·exp(−iT dt)·exp(−iV dt/2) from `t_fs`, with
    /// the potential taken at the midpoint t + dt/2. A negative `dt` steps backwards.
    pub fn step_real(&mut self, psi: &mut Wavefunction2D, t_fs: f64, dt: f64) {
        let mid = au_to_fs(fs_to_au(t_fs) + 0.5 * dt);
        let w = self.weights_at(mid, 0.5 * dt);
        self.apply_potential(psi, w, Mode::Real);
        self.apply_kinetic(psi, dt, Mode::Real);
        self.apply_potential(psi, w, Mode::Real);
    }

    /// `n_steps` Strang steps of size `dt` (atomic units) starting at `t0_fs`.
    ///
    /// Adjacent potential half-steps are merged between observations. `observe`
    /// is called at the start and after every `stride` steps and after the last
    /// one, with the step index and the time in fs.
    pub fn evolve(
        &mut self,
        psi: &mut Wavefunction2D,
        t0_fs: f64,
        dt: f64,
        n_steps: usize,
        stride: usize,
        edge_threshold: f64,
        mut observe: impl FnMut(usize, f64, &Wavefunction2D) -> Result<()>,
    ) -> Result<()> {
        let stride = stride.max(1);
        let t0 = fs_to_au(t0_fs);
        observe(0, t0_fs, psi)?;
        let mut carry: Option<PotentialWeights> = None;
        for k in 0..n_steps {
            let mid = au_to_fs(t0 + (k as f64 + 0.5) * dt);
            let half = self.weights_at(mid, 0.5 * dt);
            let first = carry.map_or(half, |c| c + half);
            self.apply_potential(psi, first, Mode::Real);
            self.apply_kinetic(psi, dt, Mode::Real);
            carry = Some(half);
            let done = k + 1;
            if done % stride == 0 || done == n_steps {
                self.apply_potential(psi, half, Mode::Real);
                carry = None;
                let t_fs = au_to_fs(t0 + done as f64 * dt);
                if !psi.is_finite() {
                    return Err(Error::NonFinite(format!("wavefunction at t = {t_fs:.3} fs")));
                }
                let ratio = psi.edge_ratio();
                if ratio > edge_threshold {
                    return Err(Error::EdgeAmplitude { ratio, t_fs });
                }
                observe(done, t_fs, psi)?;
            }
        }
        Ok(())
    }

    /// ⟨H⟩ of the undriven Hamiltonian (ω_c = ω_c0).
    pub fn static_energy(&mut self, psi: &Wavefunction2D) -> Result<f64> {
        let t_psi = self.spectral.kinetic_of(psi, self.masses);
        let kinetic = inner_product(psi, &t_psi)?.re;
        let terms = self.model.static_terms();
        let mut pot = 0.0;
        for (i, row) in psi.data().rows().into_iter().enumerate() {
            let cd = terms.coupling * self.d_q[i];
            for (z, &x) in row.iter().zip(&self.xs) {
                pot += z.norm_sqr() * (self.v_q[i] + 0.5 * terms.curvature * x * x + cd * x);
            }
        }
        Ok((kinetic + pot * psi.cell()) / psi.norm_sqr())
    }

    fn imaginary_step(&mut self, psi: &mut Wavefunction2D, dtau: f64) {
        let w = self.static_weights(0.5 * dtau);
        self.apply_potential(psi, w, Mode::Imaginary);
        self.apply_kinetic(psi, dtau, Mode::Imaginary);
        self.apply_potential(psi, w, Mode::Imaginary);
    }

    /// Imaginary-time relaxation of `guess` onto the lowest eigenstate of the
    /// undriven Hamiltonian orthogonal to `prep.deflation`.
    pub fn relax(&mut self, guess: &Wavefunction2D, prep: &EigenstatePrep) -> Result<Relaxed> {
        let mut psi = guess.clone();
        project_out(&mut psi, &prep.deflation, f64::INFINITY)?;
        if psi.normalize() < 1e-8 {
            return Err(Error::InvalidParameter("initial guess has no component outside the deflated states".into()));
        }
        let mut history = Vec::new();
        let mut steps = 0;
        let mut energy = self.static_energy(&psi)?;
        let mut drift = f64::INFINITY;
        let mut rungs = Vec::with_capacity(prep.dtau_ladder.len());
        for (rung, &dtau) in prep.dtau_ladder.iter().enumerate() {
            let min_steps = (prep.min_time / dtau).ceil() as usize;
            let deflation: Vec<Wavefunction2D> = prep
                .deflation
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    prep.deflation_rungs
                        .get(i)
                        .and_then(|r| r.iter().find(|(dd, _)| (dd - dtau).abs() < 1e-12))
                        .map_or_else(|| d.clone(), |(_, p)| p.clone())
                })
                .collect();
            let mut rung_steps = 0;
            let mut calm = 0;
            history.push((rung, 0, energy));
            loop {
                for _ in 0..prep.check_every {
                    self.imaginary_step(&mut psi, dtau);
                    let norm = psi.normalize();
                    if !(norm > 0.0) || !psi.is_finite() {
                        return Err(Error::NonFinite("imaginary-time wavefunction".into()));
                    }
                    project_out(&mut psi, &deflation, 0.5)?;
                    psi.normalize();
                }
                rung_steps += prep.check_every;
                steps += prep.check_every;
                let e = self.static_energy(&psi)?;
                drift = (e - energy).abs() / (prep.check_every as f64 * dtau);
                energy = e;
                history.push((rung, rung_steps, e));
                calm = if drift < prep.tolerance { calm + 1 } else { 0 };
                if calm >= 2 && rung_steps >= min_steps {
                    break;
                }
                if steps >= prep.max_steps {
                    return Err(Error::RelaxNotConverged { steps, drift });
                }
            }
            rungs.push((dtau, psi.clone()));
        }
        let fit = if prep.extrapolation_points >= 2 { prep.extrapolation_points.min(rungs.len()) } else { 0 };
        let mut relaxed = Relaxed { energy, psi, steps, history, drift, rungs, fit };
        if fit >= 2 {
            // ψ(dτ) = ψ* + c·dτ² + d·dτ⁴ + … for the symmetric splitting
            let mut mixed = relaxed.continued(0.0)?;
            project_out(&mut mixed, &prep.deflation, 0.5)?;
            mixed.normalize();
            relaxed.energy = self.static_energy(&mixed)?;
            relaxed.history.push((prep.dtau_ladder.len(), 0, relaxed.energy));
            relaxed.psi = mixed;
        }
        Ok(relaxed)
    }
}

/// Gram–Schmidt removal of `states` from ψ. Fails if more than `limit` of the
/// probability sat in one deflated state.
fn project_out(psi: &mut Wavefunction2D, states: &[Wavefunction2D], limit: f64) -> Result<()> {
    let norm = psi.norm_sqr();
    for (index, d) in states.iter().enumerate() {
        let ov = inner_product(d, psi)?;
        let overlap = ov.norm_sqr() / norm;
        if overlap > limit {
            return Err(Error::RelaxCollapse { index, overlap });
        }
        psi.axpy(-ov, d)?;
    }
    Ok(())
}

/// Zeroth-order guess for `target`: |0⟩|0⟩, or (|1⟩|0⟩ ∓ |0⟩|1⟩)/√2 for the
/// lower/upper polariton, with cavity Fock states of frequency ω_c0.
pub fn initial_guess(target: Target, vib: &VibrationalStates, x: &Grid1D, omega_c0: f64) -> Result<Wavefunction2D> {
    if vib.len() < 2 {
        return Err(Error::InvalidParameter("need at least two vibrational states".into()));
    }
    let chi = hermite_functions(x, omega_c0, 1);
    let c0 = chi.row(0).to_vec();
    let c1 = chi.row(1).to_vec();
    let (p0, p1) = (vib.vectors[0].clone(), vib.vectors[1].clone());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let terms = match target {
        Target::Ground => vec![(p0, c0, 1.0)],
        Target::LowerPolariton => vec![(p1, c0, s), (p0, c1, -s)],
        Target::UpperPolariton => vec![(p1, c0, s), (p0, c1, s)],
    };
    let mut psi = Wavefunction2D::from_product_sum(vib.grid, *x, &terms)?;
    psi.normalize();
    Ok(psi)
}

/// Ground, lower- and upper-polariton states up to `target`, each relaxed with
/// the previous ones deflated.
pub fn prepare_states(
    prop: &mut Propagator,
    vib: &VibrationalStates,
    target: Target,
    configure: impl Fn(&mut EigenstatePrep),
) -> Result<Vec<Relaxed>> {
    let omega = prop.model().omega_c0();
    let x = *prop.x_grid();
    let mut done: Vec<Relaxed> = Vec::new();
    for t in [Target::Ground, Target::LowerPolariton, Target::UpperPolariton].into_iter().take(target.index() + 1) {
        let mut prep = EigenstatePrep::new(t, done.iter().map(|r| r.psi.clone()).collect())?;
        prep.deflation_rungs = done.iter().map(|r| r.rungs.clone()).collect();
        configure(&mut prep);
        let guess = initial_guess(t, vib, &x, omega)?;
        done.push(prop.relax(&guess, &prep)?);
    }
    Ok(done)
}
