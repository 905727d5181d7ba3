//! Photon-counting and quadrature statistics of the cavity mode.
//!
//! The number and ladder operators refer to an oscillator of frequency
//! `omega_ref` in the cavity coordinate `x`: a = sqrt(ω/2)·(x + i·p/ω), so the
//! quadratures are x̂ = a + a† = sqrt(2ω)·x and ŷ = −i(a − a†) = sqrt(2/ω)·p and
//! the vacuum has ⟨Δx̂²⟩ = ⟨Δŷ²⟩ = 1.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;

use crate::cavity_model::{cavity_frequency, CavityModulation};
use crate::error::{Error, Result};
use crate::qgrid::{expectation, inner_product, read_snapshot, Axis, Grid1D, Spectral2D, Wavefunction2D};
use crate::units::hartree_to_wavenumber;

pub const DEFAULT_N_MAX: usize = 60;
pub const CAPTURE_THRESHOLD: f64 = 0.999;
/// Below this mean photon number the Mandel parameter is reported as undefined.
pub const MIN_MEAN_N: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FockFrame {
    /// ω_ref = ω_c(t)
    Instantaneous,
    /// ω_ref = ω_c0
    Static,
}

impl fmt::Display for FockFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FockFrame::Instantaneous => "instantaneous",
            FockFrame::Static => "static",
        })
    }
}

impl FromStr for FockFrame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "instantaneous" | "inst" => Ok(FockFrame::Instantaneous),
            "static" => Ok(FockFrame::Static),
            other => Err(Error::Config(format!("unknown Fock frame '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockBasisSpec {
    pub omega_ref: f64,
    pub n_max: usize,
    pub frame: FockFrame,
}

impl FockBasisSpec {
    pub fn new(omega_ref: f64, n_max: usize, frame: FockFrame) -> Result<Self> {
        if !(omega_ref > 0.0) || !omega_ref.is_finite() {
            return Err(Error::InvalidParameter(format!("reference frequency must be positive, got {omega_ref}")));
        }
        Ok(Self { omega_ref, n_max, frame })
    }

    /// Basis for time `t_fs` of a modulated cavity in the requested frame.
    pub fn at_time(m: &CavityModulation, t_fs: f64, frame: FockFrame, n_max: usize) -> Self {
        let omega_ref = match frame {
            FockFrame::Instantaneous => cavity_frequency(t_fs, m),
            FockFrame::Static => m.omega_c0,
        };
        Self { omega_ref, n_max, frame }
    }
}

/// Oscillator eigenfunctions χ_n(x; ω), n = 0..=n_max, sampled on `x` (rows are n).
///
/// Uses the normalized recurrence in ξ = sqrt(ω)·x, which stays finite for large n.
pub fn hermite_functions(x: &Grid1D, omega: f64, n_max: usize) -> Array2<f64> {
    let xs = x.points();
    let mut out = Array2::zeros((n_max + 1, xs.len()));
    let c0 = (omega / std::f64::consts::PI).powf(0.25);
    for (j, &xv) in xs.iter().enumerate() {
        let xi = omega.sqrt() * xv;
        let mut prev = 0.0;
        let mut cur = c0 * (-0.5 * xi * xi).exp();
        out[[0, j]] = cur;
        for n in 0..n_max {
            let next = (2.0 / (n as f64 + 1.0)).sqrt() * xi * cur - (n as f64 / (n as f64 + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
            out[[n + 1, j]] = cur;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    pub p: Vec<f64>,
    /// Σ_{n ≤ n_max} P(n)
    pub capture: f64,
}

impl PhotonDistribution {
    pub fn is_captured(&self) -> bool {
        self.capture >= CAPTURE_THRESHOLD
    }

    pub fn mean(&self) -> f64 {
        number_moments(&self.p).0
    }

    pub fn variance(&self) -> f64 {
        number_moments(&self.p).1
    }
}

/// (⟨n⟩, ⟨Δn²⟩) of a distribution, normalized by its own sum.
pub fn number_moments(p: &[f64]) -> (f64, f64) {
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    let m1 = p.iter().enumerate().map(|(n, w)| n as f64 * w).sum::<f64>() / total;
    let m2 = p.iter().enumerate().map(|(n, w)| (n * n) as f64 * w).sum::<f64>() / total;
    (m1, (m2 - m1 * m1).max(0.0))
}

fn distribution_with(psi: &Wavefunction2D, chi: &Array2<f64>) -> Result<PhotonDistribution> {
    let nx = psi.x_grid().len();
    if chi.ncols() != nx {
        return Err(Error::GridMismatch(format!("Hermite table has {} points, x grid {}", chi.ncols(), nx)));
    }
    let dq = psi.q_grid().spacing();
    let dx = psi.x_grid().spacing();
    let mut p = vec![0.0; chi.nrows()];
    for row in psi.data().rows() {
        let row = row.as_slice().expect("standard layout");
        for (n, basis) in chi.rows().into_iter().enumerate() {
            let basis = basis.as_slice().expect("standard layout");
            let (mut re, mut im) = (0.0, 0.0);
            for (z, &c) in row.iter().zip(basis) {
                re += z.re * c;
                im += z.im * c;
            }
            p[n] += (re * re + im * im) * dx * dx * dq;
        }
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("photon distribution".into()));
    }
    let capture = p.iter().sum();
    Ok(PhotonDistribution { p, capture })
}

/// P(n) = Σ_q dq·|Σ_x dx·χ_n(x)·ψ(q, x)|².
pub fn photon_distribution(psi: &Wavefunction2D, spec: &FockBasisSpec) -> Result<PhotonDistribution> {
    distribution_with(psi, &hermite_functions(psi.x_grid(), spec.omega_ref, spec.n_max))
}

/// (⟨Δn²⟩ − ⟨n⟩)/⟨n⟩, or `None` when ⟨n⟩ < [`MIN_MEAN_N`].
pub fn mandel_q(p: &[f64]) -> Option<f64> {
    let (mean, var) = number_moments(p);
    if mean < MIN_MEAN_N {
        None
    } else {
        Some((var - mean) / mean)
    }
}

/// First and second moments of the dimensionless quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    /// ⟨x̂ŷ + ŷx̂⟩/2 − ⟨x̂⟩⟨ŷ⟩
    pub cov: f64,
}

impl QuadratureMoments {
    /// ⟨ΔX_θ²⟩ for X_θ = cos θ·x̂ + sin θ·ŷ.
    pub fn variance(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        c * c * self.var_x + s * s * self.var_y + 2.0 * s * c * self.cov
    }
}

/// Raw coordinate moments of the cavity mode: ⟨x⟩, ⟨x²⟩, ⟨p⟩, ⟨p²⟩, Re⟨x·p⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityMoments {
    pub x: f64,
    pub x2: f64,
    pub p: f64,
    pub p2: f64,
    pub xp_sym: f64,
}

impl CavityMoments {
    pub fn compute(psi: &Wavefunction2D, spectral: &mut Spectral2D) -> Result<Self> {
        let x = expectation(psi, |_, x| x)?.value;
        let x2 = expectation(psi, |_, x| x * x)?.value;
        let p = spectral.momentum_moments(psi, Axis::X, 1);
        let p2 = spectral.momentum_moments(psi, Axis::X, 2);
        let dpsi = spectral.x_momentum_of(psi);
        let xs = psi.x_grid().points();
        let mut acc = Complex64::new(0.0, 0.0);
        for (row_a, row_b) in psi.data().rows().into_iter().zip(dpsi.data().rows()) {
            for ((a, b), &xv) in row_a.iter().zip(row_b.iter()).zip(&xs) {
                acc += a.conj() * xv * b;
            }
        }
        Ok(Self { x, x2, p, p2, xp_sym: acc.re * psi.cell() })
    }

    pub fn quadratures(&self, omega_ref: f64) -> QuadratureMoments {
        let sx = (2.0 * omega_ref).sqrt();
        let sy = (2.0 / omega_ref).sqrt();
        QuadratureMoments {
            mean_x: sx * self.x,
            mean_y: sy * self.p,
            var_x: sx * sx * (self.x2 - self.x * self.x),
            var_y: sy * sy * (self.p2 - self.p * self.p),
            cov: sx * sy * (self.xp_sym - self.x * self.p),
        }
    }

    /// ⟨n̂⟩ = (ω⟨x²⟩ + ⟨p²⟩/ω − 1)/2
    pub fn mean_photon_number(&self, omega_ref: f64) -> f64 {
        0.5 * (omega_ref * self.x2 + self.p2 / omega_ref - 1.0)
    }
}

pub fn quadrature_variance(
    psi: &Wavefunction2D,
    theta: f64,
    spec: &FockBasisSpec,
    spectral: &mut Spectral2D,
) -> Result<f64> {
    Ok(CavityMoments::compute(psi, spectral)?.quadratures(spec.omega_ref).variance(theta))
}

/// ζ = −10·log10(variance); positive means squeezed below the vacuum.
pub fn squeezing_db(variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::NonPositiveVariance(variance));
    }
    Ok(-10.0 * variance.log10())
}

/// |⟨ψ_t|ψ_0⟩|²
pub fn autocorrelation(psi_t: &Wavefunction2D, psi_0: &Wavefunction2D) -> Result<f64> {
    Ok(inner_product(psi_t, psi_0)?.norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentsCrosscheck {
    pub from_distribution: f64,
    pub from_moments: f64,
    pub difference: f64,
}

pub fn moments_crosscheck(
    psi: &Wavefunction2D,
    spec: &FockBasisSpec,
    spectral: &mut Spectral2D,
) -> Result<MomentsCrosscheck> {
    let dist = photon_distribution(psi, spec)?;
    let from_moments = CavityMoments::compute(psi, spectral)?.mean_photon_number(spec.omega_ref);
    Ok(crosscheck(&dist, from_moments))
}

fn crosscheck(dist: &PhotonDistribution, from_moments: f64) -> MomentsCrosscheck {
    // un-normalized first moment, so leaked probability shows up as a difference
    let from_distribution = dist.p.iter().enumerate().map(|(n, w)| n as f64 * w).sum();
    MomentsCrosscheck { from_distribution, from_moments, difference: (from_distribution - from_moments).abs() }
}

/// Tolerance of the ⟨n⟩ consistency gate.
pub const CROSSCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldStatistics {
    pub t_fs: f64,
    pub omega_c_t: f64,
    pub frame: FockFrame,
    pub omega_ref: f64,
    pub mean_n: f64,
    pub var_n: f64,
    pub mandel_q: Option<f64>,
    pub p_of_n: Vec<f64>,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
    pub zeta_0: f64,
    pub zeta_half_pi: f64,
    pub autocorr: f64,
    pub capture: f64,
    pub crosscheck: f64,
}

impl FieldStatistics {
    /// Record-level health: capture, ⟨n⟩ consistency and the uncertainty relation.
    pub fn is_healthy(&self) -> bool {
        self.capture >= CAPTURE_THRESHOLD
            && self.crosscheck < CROSSCHECK_TOL
            && self.var_x * self.var_y - self.cov_xy * self.cov_xy >= 1.0 - 1e-6
            && self.mandel_q.is_none_or(|q| q >= -1.0 - 1e-9)
    }

    /// Smallest ⟨ΔX_θ²⟩·⟨ΔX_{θ+π/2}²⟩ over θ.
    pub fn min_uncertainty_product(&self) -> f64 {
        let m = QuadratureMoments { mean_x: 0.0, mean_y: 0.0, var_x: self.var_x, var_y: self.var_y, cov: self.cov_xy };
        (0..180)
            .map(|k| {
                let th = k as f64 * std::f64::consts::PI / 180.0;
                m.variance(th) * m.variance(th + std::f64::consts::FRAC_PI_2)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub const CSV_HEADER: &str =
    "t_fs,omega_c_cm1,mean_n,var_n,mandel_q,var_x,var_y,zeta0_db,zeta_halfpi_db,autocorr,capture";

fn sci(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.8e}")
    }
}

impl FieldStatistics {
    pub fn csv_row(&self) -> String {
        [
            self.t_fs,
            hartree_to_wavenumber(self.omega_c_t),
            self.mean_n,
            self.var_n,
            self.mandel_q.unwrap_or(f64::NAN),
            self.var_x,
            self.var_y,
            self.zeta_0,
            self.zeta_half_pi,
            self.autocorr,
            self.capture,
        ]
        .iter()
        .map(|&v| sci(v))
        .collect::<Vec<_>>()
        .join(",")
    }
}

/// Per-snapshot analysis with cached FFT plans and Hermite tables.
pub struct StatsEngine {
    spectral: Spectral2D,
    n_max: usize,
    cache: Option<(f64, Array2<f64>)>,
}

impl StatsEngine {
    pub fn new(q: Grid1D, x: Grid1D, n_max: usize) -> Self {
        Self { spectral: Spectral2D::new(q, x), n_max, cache: None }
    }

    pub fn spectral(&mut self) -> &mut Spectral2D {
        &mut self.spectral
    }

    fn table(&mut self, omega: f64) -> &Array2<f64> {
        let stale = !matches!(&self.cache, Some((w, _)) if *w == omega);
        if stale {
            self.cache = Some((omega, hermite_functions(self.spectral.x_grid(), omega, self.n_max)));
        }
        &self.cache.as_ref().expect("filled above").1
    }

    /// Statistics of ψ(t) in one frame; `psi0` is the reference for the autocorrelation.
    pub fn analyze(
        &mut self,
        psi: &Wavefunction2D,
        psi0: &Wavefunction2D,
        t_fs: f64,
        modulation: &CavityModulation,
        frame: FockFrame,
    ) -> Result<FieldStatistics> {
        let moments = CavityMoments::compute(psi, &mut self.spectral)?;
        self.analyze_with_moments(psi, psi0, &moments, t_fs, modulation, frame)
    }

    /// As [`analyze`](Self::analyze) with the frame-independent moments supplied,
    /// so several frames can share one set of FFTs.
    pub fn analyze_with_moments(
        &mut self,
        psi: &Wavefunction2D,
        psi0: &Wavefunction2D,
        moments: &CavityMoments,
        t_fs: f64,
        modulation: &CavityModulation,
        frame: FockFrame,
    ) -> Result<FieldStatistics> {
        let spec = FockBasisSpec::at_time(modulation, t_fs, frame, self.n_max);
        let dist = distribution_with(psi, self.table(spec.omega_ref))?;
        let quad = moments.quadratures(spec.omega_ref);
        let (mean_n, var_n) = number_moments(&dist.p);
        let check = crosscheck(&dist, moments.mean_photon_number(spec.omega_ref));
        Ok(FieldStatistics {
            t_fs,
            omega_c_t: cavity_frequency(t_fs, modulation),
            frame,
            omega_ref: spec.omega_ref,
            mean_n,
            var_n,
            mandel_q: mandel_q(&dist.p),
            var_x: quad.var_x,
            var_y: quad.var_y,
            cov_xy: quad.cov,
            zeta_0: squeezing_db(quad.var_x)?,
            zeta_half_pi: squeezing_db(quad.var_y)?,
            autocorr: autocorrelation(psi, psi0)?,
            capture: dist.capture,
            crosscheck: check.difference,
            p_of_n: dist.p,
        })
    }
}

/// Offline analysis: read snapshots in time order (the first one is the
/// autocorrelation reference) and write the same CSV rows as a live run.
pub fn snapshots_to_csv<R: Read>(
    snapshots: impl IntoIterator<Item = R>,
    modulation: &CavityModulation,
    frame: FockFrame,
    n_max: usize,
    mut out: impl Write,
) -> Result<Vec<FieldStatistics>> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut engine: Option<StatsEngine> = None;
    let mut psi0: Option<Wavefunction2D> = None;
    let mut rows = Vec::new();
    for r in snapshots {
        let (t_fs, psi) = read_snapshot(r)?;
        let eng = engine.get_or_insert_with(|| StatsEngine::new(*psi.q_grid(), *psi.x_grid(), n_max));
        let reference = psi0.get_or_insert_with(|| psi.clone());
        let stats = eng.analyze(&psi, reference, t_fs, modulation, frame)?;
        writeln!(out, "{}", stats.csv_row())?;
        rows.push(stats);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qgrid::write_snapshot;
    use proptest::prelude::*;

    const OMEGA: f64 = 0.008;

    fn grids() -> (Grid1D, Grid1D) {
        (Grid1D::new(-1.0, 1.0, 5).unwrap(), Grid1D::new(-90.0, 90.0, 361).unwrap())
    }

    /// ψ(q, x) = f(q)·g(x) with f a normalized bump on the q grid.
    fn product(g: impl Fn(f64) -> Complex64) -> Wavefunction2D {
        let (q, x) = grids();
        let mut psi = Wavefunction2D::from_fn(q, x, |qv, xv| g(xv) * (-(qv * qv) * 4.0).exp());
        psi.normalize();
        psi
    }

    /// Coherent state |α⟩ as a displaced vacuum of frequency ω.
    fn coherent(alpha: Complex64, omega: f64) -> Wavefunction2D {
        let x0 = (2.0 / omega).sqrt() * alpha.re;
        let p0 = (2.0 * omega).sqrt() * alpha.im;
        product(|x| Complex64::from_polar((-(omega / 2.0) * (x - x0).powi(2)).exp(), p0 * x))
    }

    fn squeezed_vacuum(r: f64, omega: f64) -> Wavefunction2D {
        let w = omega * (2.0 * r).exp();
        product(|x| Complex64::new((-(w / 2.0) * x * x).exp(), 0.0))
    }

    fn spec(omega: f64) -> FockBasisSpec {
        FockBasisSpec::new(omega, DEFAULT_N_MAX, FockFrame::Static).unwrap()
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        // the grid must reach past the classical turning point sqrt(2n + 1)/sqrt(ω)
        let (_, x) = grids();
        for (omega, levels) in [(OMEGA, [0, 1, 7, 12, 15]), (0.05, [0, 1, 7, 30, 60])] {
            let chi = hermite_functions(&x, omega, 60);
            let dx = x.spacing();
            for m in levels {
                for n in levels {
                    let s: f64 = chi.row(m).iter().zip(chi.row(n)).map(|(a, b)| a * b).sum::<f64>() * dx;
                    let expect = if m == n { 1.0 } else { 0.0 };
                    assert!((s - expect).abs() < 1e-10, "omega {omega}: <{m}|{n}> = {s}");
                }
            }
        }
    }

    #[test]
    fn vacuum_statistics() {
        let psi = coherent(Complex64::new(0.0, 0.0), OMEGA);
        let d = photon_distribution(&psi, &spec(OMEGA)).unwrap();
        assert!((d.p[0] - 1.0).abs() < 1e-12);
        assert!(d.mean() < 1e-12);
        assert_eq!(mandel_q(&d.p), None);
        let mut sp = Spectral2D::new(*psi.q_grid(), *psi.x_grid());
        for th in [0.0, 0.4, std::f64::consts::FRAC_PI_2, 2.0] {
            let v = quadrature_variance(&psi, th, &spec(OMEGA), &mut sp).unwrap();
            assert!((v - 1.0).abs() < 1e-9, "theta {th}: {v}");
        }
        let c = moments_crosscheck(&psi, &spec(OMEGA), &mut sp).unwrap();
        assert!(c.from_distribution.abs() < 1e-12 && c.from_moments.abs() < 1e-10 && c.difference < 1e-10);
    }

    fn poisson(mean: f64, n: usize) -> Vec<f64> {
        let mut p = vec![(-mean).exp()];
        for k in 1..=n {
            let last = p[k - 1];
            p.push(last * mean / k as f64);
        }
        p
    }

    #[test]
    fn coherent_state_is_poissonian() {
        let alpha = Complex64::new(1.2, -0.7);
        let psi = coherent(alpha, OMEGA);
        let d = photon_distribution(&psi, &spec(OMEGA)).unwrap();
        let expect = poisson(alpha.norm_sqr(), DEFAULT_N_MAX);
        for (n, (a, b)) in d.p.iter().zip(&expect).enumerate() {
            assert!((a - b).abs() < 1e-6, "P({n}) = {a}, Poisson {b}");
        }
        assert!(mandel_q(&d.p).unwrap().abs() < 1e-8);
        let mut sp = Spectral2D::new(*psi.q_grid(), *psi.x_grid());
        let c = moments_crosscheck(&psi, &spec(OMEGA), &mut sp).unwrap();
        assert!((c.from_moments - alpha.norm_sqr()).abs() < 1e-6);
        assert!(c.difference < 1e-6);
        let m = CavityMoments::compute(&psi, &mut sp).unwrap().quadratures(OMEGA);
        assert!((m.mean_x - 2.0 * alpha.re).abs() < 1e-9);
        assert!((m.mean_y - 2.0 * alpha.im).abs() < 1e-9);
        assert!((m.var_x - 1.0).abs() < 1e-9 && (m.var_y - 1.0).abs() < 1e-9 && m.cov.abs() < 1e-9);
    }

    #[test]
    fn fock_and_poisson_limits_of_q() {
        let mut fock = vec![0.0; 6];
        fock[4] = 1.0;
        assert_eq!(mandel_q(&fock), Some(-1.0));
        assert!(mandel_q(&poisson(3.0, 60)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn squeezed_vacuum_variance() {
        let r = 0.3;
        let psi = squeezed_vacuum(r, OMEGA);
        let mut sp = Spectral2D::new(*psi.q_grid(), *psi.x_grid());
        let m = CavityMoments::compute(&psi, &mut sp).unwrap().quadratures(OMEGA);
        assert!((m.var_x - (-2.0 * r).exp()).abs() < 1e-9, "{}", m.var_x);
        assert!((m.var_y - (2.0 * r).exp()).abs() < 1e-9);
        assert!((squeezing_db(m.var_x).unwrap() - 20.0 * r / std::f64::consts::LN_10).abs() < 1e-7);
        let d = photon_distribution(&psi, &spec(OMEGA)).unwrap();
        // only even Fock states, ⟨n⟩ = sinh² r
        assert!(d.p.iter().skip(1).step_by(2).all(|&p| p < 1e-14));
        assert!((d.mean() - r.sinh().powi(2)).abs() < 1e-9);
    }

    #[test]
    fn squeezing_scalar() {
        assert_eq!(squeezing_db(1.0).unwrap(), 0.0);
        assert!((squeezing_db(0.5).unwrap() - 3.0103).abs() < 1e-4);
        assert!(matches!(squeezing_db(0.0), Err(Error::NonPositiveVariance(_))));
        assert!(squeezing_db(-1.0).is_err());
    }

    #[test]
    fn autocorrelation_limits() {
        let a = coherent(Complex64::new(0.5, 0.0), OMEGA);
        assert!((autocorrelation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = coherent(Complex64::new(-0.5, 0.0), OMEGA);
        // |⟨β|α⟩|² = exp(−|α − β|²)
        assert!((autocorrelation(&a, &b).unwrap() - (-1.0f64).exp()).abs() < 1e-9);
        let other = Wavefunction2D::zeros(Grid1D::new(0.0, 1.0, 4).unwrap(), *a.x_grid());
        assert!(autocorrelation(&a, &other).is_err());
    }

    #[test]
    fn rotated_quadratures_of_squeezed_state() {
        // rotate the squeezing axis by multiplying with a chirp e^{i·c·x²}
        let (q, x) = grids();
        let w = OMEGA * 3.0;
        let mut psi = Wavefunction2D::from_fn(q, x, |qv, xv| {
            Complex64::from_polar((-(w / 2.0) * xv * xv - 4.0 * qv * qv).exp(), 0.004 * xv * xv)
        });
        psi.normalize();
        let mut sp = Spectral2D::new(q, x);
        let m = CavityMoments::compute(&psi, &mut sp).unwrap().quadratures(OMEGA);
        assert!(m.cov.abs() > 0.1);
        for k in 0..12 {
            let th = k as f64 * 0.3;
            assert!((m.variance(th) - m.variance(th + std::f64::consts::PI)).abs() < 1e-12);
            assert!(m.variance(th) * m.variance(th + std::f64::consts::FRAC_PI_2) >= 1.0 - 1e-6);
            let direct = quadrature_variance(&psi, th, &spec(OMEGA), &mut sp).unwrap();
            assert!((direct - m.variance(th)).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_selection() {
        let m = CavityModulation::new(0.008, 0.2, 250.0, 62.5).unwrap();
        assert_eq!(FockBasisSpec::at_time(&m, 250.0, FockFrame::Static, 60).omega_ref, 0.008);
        let inst = FockBasisSpec::at_time(&m, 250.0, FockFrame::Instantaneous, 60).omega_ref;
        assert!((inst - 0.0096).abs() < 1e-15);
        assert_eq!("static".parse::<FockFrame>().unwrap(), FockFrame::Static);
        assert_eq!("Instantaneous".parse::<FockFrame>().unwrap(), FockFrame::Instantaneous);
        assert!("lab".parse::<FockFrame>().is_err());
    }

    #[test]
    fn csv_row_formatting() {
        let m = CavityModulation::unmodulated(0.008);
        let psi = coherent(Complex64::new(0.0, 0.0), 0.008);
        let mut eng = StatsEngine::new(*psi.q_grid(), *psi.x_grid(), 20);
        let s = eng.analyze(&psi, &psi, 0.0, &m, FockFrame::Instantaneous).unwrap();
        let row = s.csv_row();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), CSV_HEADER.split(',').count());
        assert_eq!(fields[4], "nan");
        assert_eq!(fields[0], "0.00000000e0");
        assert!(fields[1].starts_with("1.75579"));
        assert!(s.is_healthy());
    }

    #[test]
    fn offline_rows_match_live_analysis() {
        let m = CavityModulation::new(0.008, 0.2, 250.0, 62.5).unwrap();
        let states = [coherent(Complex64::new(0.3, 0.1), 0.008), squeezed_vacuum(0.2, 0.008)];
        let times = [0.0, 250.0];
        let mut eng = StatsEngine::new(*states[0].q_grid(), *states[0].x_grid(), 40);
        let mut live = vec![CSV_HEADER.to_string()];
        let mut blobs = Vec::new();
        for (psi, &t) in states.iter().zip(&times) {
            live.push(eng.analyze(psi, &states[0], t, &m, FockFrame::Instantaneous).unwrap().csv_row());
            let mut buf = Vec::new();
            write_snapshot(&mut buf, psi, t).unwrap();
            blobs.push(buf);
        }
        let mut out = Vec::new();
        snapshots_to_csv(blobs.iter().map(|b| b.as_slice()), &m, FockFrame::Instantaneous, 40, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), live.join("\n") + "\n");
    }

    proptest! {
        #[test]
        fn poisson_mixtures_have_zero_q(mean in 0.05f64..6.0) {
            let p = poisson(mean, 80);
            prop_assert!(mandel_q(&p).unwrap().abs() < 1e-8);
        }

        #[test]
        fn distributions_are_physical(re in -1.5f64..1.5, im in -1.5f64..1.5, r in 0.0f64..0.6) {
            for psi in [coherent(Complex64::new(re, im), OMEGA), squeezed_vacuum(r, OMEGA)] {
                let d = photon_distribution(&psi, &spec(OMEGA)).unwrap();
                prop_assert!(d.p.iter().all(|&v| v >= 0.0));
                prop_assert!(d.capture <= 1.0 + 1e-10);
                if let Some(q) = mandel_q(&d.p) {
                    prop_assert!(q >= -1.0);
                }
            }
        }

        #[test]
        fn uncertainty_relation_holds(r in 0.0f64..0.8, chirp in -0.01f64..0.01) {
            let (q, x) = grids();
            let w = OMEGA * (2.0 * r).exp();
            let mut psi = Wavefunction2D::from_fn(q, x, |qv, xv| {
                Complex64::from_polar((-(w / 2.0) * xv * xv - 4.0 * qv * qv).exp(), chirp * xv * xv)
            });
            psi.normalize();
            let mut sp = Spectral2D::new(q, x);
            let m = CavityMoments::compute(&psi, &mut sp).unwrap().quadratures(OMEGA);
            for k in 0..16 {
                let th = k as f64 * 0.2;
                prop_assert!(m.variance(th) * m.variance(th + std::f64::consts::FRAC_PI_2) >= 1.0 - 1e-6);
            }
        }
    }
}
