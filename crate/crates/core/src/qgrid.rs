//! Uniform grids, two-dimensional wavefunctions and the Fourier machinery
//! shared by the propagator and the field-statistics analysis.
//!
//! A [`Wavefunction2D`] stores ψ(q, x) row-major with the vibrational coordinate
//! `q` as the slow index and the cavity coordinate `x` as the fast index. All
//! integrals use the Riemann measure `dq·dx`, which for periodic band-limited
//! functions coincides with the trapezoid rule.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    min: f64,
    max: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if n < 2 || !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid needs n >= 2 and max > min (got [{min}, {max}] with {n} points)"
            )));
        }
        Ok(Self { min, max, n })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Angular wavenumbers in FFT order for a periodic box of length `n·spacing`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n;
        let dk = 2.0 * PI / (n as f64 * self.spacing());
        (0..n)
            .map(|m| {
                let m = if m <= (n - 1) / 2 { m as f64 } else { m as f64 - n as f64 };
                m * dk
            })
            .collect()
    }

    /// Nearest grid index to `value`, clamped to the grid.
    pub fn nearest_index(&self, value: f64) -> usize {
        let i = ((value - self.min) / self.spacing()).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Q,
    X,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction2D {
    q: Grid1D,
    x: Grid1D,
    data: Array2<Complex64>,
}

impl Wavefunction2D {
    pub fn zeros(q: Grid1D, x: Grid1D) -> Self {
        Self { q, x, data: Array2::zeros((q.len(), x.len())) }
    }

    pub fn from_fn(q: Grid1D, x: Grid1D, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let qs = q.points();
        let xs = x.points();
        let data = Array2::from_shape_fn((q.len(), x.len()), |(i, j)| f(qs[i], xs[j]));
        Self { q, x, data }
    }

    /// ψ(q, x) = Σ_k a_k(q)·b_k(x), with the factors sampled on their grids.
    pub fn from_product_sum(q: Grid1D, x: Grid1D, terms: &[(Vec<f64>, Vec<f64>, f64)]) -> Result<Self> {
        let mut data = Array2::zeros((q.len(), x.len()));
        for (fq, fx, c) in terms {
            if fq.len() != q.len() || fx.len() != x.len() {
                return Err(Error::GridMismatch("product factor length differs from grid".into()));
            }
            for (i, &a) in fq.iter().enumerate() {
                for (j, &b) in fx.iter().enumerate() {
                    data[[i, j]] += Complex64::new(c * a * b, 0.0);
                }
            }
        }
        Ok(Self { q, x, data })
    }

    pub fn from_array(q: Grid1D, x: Grid1D, data: Array2<Complex64>) -> Result<Self> {
        if data.dim() != (q.len(), x.len()) {
            return Err(Error::GridMismatch(format!(
                "array shape {:?} does not match grid ({}, {})",
                data.dim(),
                q.len(),
                x.len()
            )));
        }
        Ok(Self { q, x, data: data.as_standard_layout().into_owned() })
    }

    pub fn q_grid(&self) -> &Grid1D {
        &self.q
    }

    pub fn x_grid(&self) -> &Grid1D {
        &self.x
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.data
    }

    pub fn cell(&self) -> f64 {
        self.q.spacing() * self.x.spacing()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell()
    }

    /// Rescale to unit norm and return the norm before rescaling.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            self.data.mapv_inplace(|z| z / norm);
        }
        norm
    }

    pub fn scale(&mut self, c: Complex64) {
        self.data.mapv_inplace(|z| z * c);
    }

    /// `self += c·other`
    pub fn axpy(&mut self, c: Complex64, other: &Wavefunction2D) -> Result<()> {
        check_same_grids(self, other)?;
        self.data.zip_mut_with(&other.data, |a, b| *a += c * b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest amplitude found on the boundary rows and columns, relative to the
    /// overall maximum amplitude.
    pub fn edge_ratio(&self) -> f64 {
        let (nq, nx) = self.data.dim();
        let max = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        let rows = [0, nq - 1]
            .into_iter()
            .flat_map(|i| (0..nx).map(move |j| (i, j)))
            .chain([0, nx - 1].into_iter().flat_map(|j| (0..nq).map(move |i| (i, j))));
        rows.map(|(i, j)| self.data[[i, j]].norm()).fold(0.0, f64::max) / max
    }

    /// Reduced probability density along `q`: ∫ |ψ(q, x)|² dx.
    pub fn q_density(&self) -> Vec<f64> {
        let dx = self.x.spacing();
        self.data.rows().into_iter().map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).collect()
    }
}

pub fn same_grids(a: &Wavefunction2D, b: &Wavefunction2D) -> bool {
    a.q == b.q && a.x == b.x
}

fn check_same_grids(a: &Wavefunction2D, b: &Wavefunction2D) -> Result<()> {
    if same_grids(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "q [{}, {}]x{} / x [{}, {}]x{} vs q [{}, {}]x{} / x [{}, {}]x{}",
            a.q.min, a.q.max, a.q.n, a.x.min, a.x.max, a.x.n, b.q.min, b.q.max, b.q.n, b.x.min, b.x.max, b.x.n
        )))
    }
}

/// ⟨a|b⟩ = Σ conj(a)·b·dq·dx
pub fn inner_product(a: &Wavefunction2D, b: &Wavefunction2D) -> Result<Complex64> {
    check_same_grids(a, b)?;
    let sum: Complex64 = a.data.iter().zip(b.data.iter()).map(|(u, v)| u.conj() * v).sum();
    Ok(sum * a.cell())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    /// Imaginary part of the complex sum Σ conj(ψ)·f·ψ; zero up to rounding for real f.
    pub imag_residue: f64,
}

/// ⟨ψ|f|ψ⟩ for a multiplicative real function f(q, x).
pub fn expectation(psi: &Wavefunction2D, f: impl Fn(f64, f64) -> f64) -> Result<Expectation> {
    let qs = psi.q.points();
    let xs = psi.x.points();
    let mut sum = Complex64::new(0.0, 0.0);
    for (i, row) in psi.data.rows().into_iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            let fv = f(qs[i], xs[j]);
            if !fv.is_finite() {
                return Err(Error::NonFinite(format!("observable at q = {}, x = {}", qs[i], xs[j])));
            }
            sum += z.conj() * fv * z;
        }
    }
    let cell = psi.cell();
    Ok(Expectation { value: sum.re * cell, imag_residue: sum.im * cell })
}

/// ψ ← exp(−i·phase(q, x)·dt)·ψ
pub fn apply_diagonal_phase(psi: &mut Wavefunction2D, phase: impl Fn(f64, f64) -> f64, dt: f64) {
    let qs = psi.q.points();
    let xs = psi.x.points();
    for (i, mut row) in psi.data.rows_mut().into_iter().enumerate() {
        for (j, z) in row.iter_mut().enumerate() {
            *z *= Complex64::from_polar(1.0, -phase(qs[i], xs[j]) * dt);
        }
    }
}

/// Forward/backward FFT plans and wavenumber tables for one (q, x) product grid.
pub struct Spectral2D {
    q: Grid1D,
    x: Grid1D,
    kq: Vec<f64>,
    kx: Vec<f64>,
    fwd_q: Arc<dyn Fft<f64>>,
    inv_q: Arc<dyn Fft<f64>>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    transposed: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Spectral2D {
    pub fn new(q: Grid1D, x: Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_q = planner.plan_fft_forward(q.len());
        let inv_q = planner.plan_fft_inverse(q.len());
        let fwd_x = planner.plan_fft_forward(x.len());
        let inv_x = planner.plan_fft_inverse(x.len());
        let scratch_len = [&fwd_q, &inv_q, &fwd_x, &inv_x]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            q,
            x,
            kq: q.wavenumbers(),
            kx: x.wavenumbers(),
            fwd_q,
            inv_q,
            fwd_x,
            inv_x,
            transposed: vec![Complex64::new(0.0, 0.0); q.len() * x.len()],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn q_grid(&self) -> &Grid1D {
        &self.q
    }

    pub fn x_grid(&self) -> &Grid1D {
        &self.x
    }

    pub fn q_wavenumbers(&self) -> &[f64] {
        &self.kq
    }

    pub fn x_wavenumbers(&self) -> &[f64] {
        &self.kx
    }

    fn check(&self, psi: &Wavefunction2D) {
        assert!(
            psi.q == self.q && psi.x == self.x,
            "wavefunction grid does not match the spectral plan"
        );
    }

    fn transform_x(&mut self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inv_x } else { &self.fwd_x };
        plan.process_with_scratch(data, &mut self.scratch);
        if inverse {
            let s = 1.0 / self.x.len() as f64;
            data.iter_mut().for_each(|z| *z *= s);
        }
    }

    fn transform_q(&mut self, data: &mut [Complex64], inverse: bool) {
        let (nq, nx) = (self.q.len(), self.x.len());
        transpose(data, &mut self.transposed, nq, nx);
        let plan = if inverse { &self.inv_q } else { &self.fwd_q };
        plan.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, data, nx, nq);
        if inverse {
            let s = 1.0 / nq as f64;
            data.iter_mut().for_each(|z| *z *= s);
        }
    }

    /// In-place transform of ψ along one axis to its wavenumber representation.
    pub fn forward(&mut self, psi: &mut Wavefunction2D, axis: Axis) {
        self.check(psi);
        let data = psi.data.as_slice_mut().expect("standard layout");
        match axis {
            Axis::Q => self.transform_q(data, false),
            Axis::X => self.transform_x(data, false),
        }
    }

    pub fn inverse(&mut self, psi: &mut Wavefunction2D, axis: Axis) {
        self.check(psi);
        let data = psi.data.as_slice_mut().expect("standard layout");
        match axis {
            Axis::Q => self.transform_q(data, true),
            Axis::X => self.transform_x(data, true),
        }
    }

    /// Multiply ψ by `factor[iq][ix]` in the doubly transformed (kq, kx) representation.
    pub fn apply_momentum_factor(&mut self, psi: &mut Wavefunction2D, factor: &Array2<Complex64>) {
        self.check(psi);
        let data = psi.data.as_slice_mut().expect("standard layout");
        self.transform_x(data, false);
        self.transform_q(data, false);
        let f = factor.as_slice().expect("standard layout");
        data.iter_mut().zip(f).for_each(|(z, w)| *z *= w);
        self.transform_q(data, true);
        self.transform_x(data, true);
    }

    /// Kinetic energy table T(kq, kx) = kq²/2m_q + kx²/2m_x.
    pub fn kinetic_table(&self, masses: [f64; 2]) -> Array2<f64> {
        Array2::from_shape_fn((self.q.len(), self.x.len()), |(i, j)| {
            self.kq[i].powi(2) / (2.0 * masses[0]) + self.kx[j].powi(2) / (2.0 * masses[1])
        })
    }

    /// Exact free evolution exp(−i·T·dt).
    pub fn apply_kinetic_phase(&mut self, psi: &mut Wavefunction2D, dt: f64, masses: [f64; 2]) {
        let factor = self.kinetic_table(masses).mapv(|t| Complex64::from_polar(1.0, -t * dt));
        self.apply_momentum_factor(psi, &factor);
    }

    /// ⟨p⟩ (order 1) or ⟨p²⟩ (order 2) along one axis, evaluated in the
    /// conjugate representation.
    pub fn momentum_moments(&mut self, psi: &Wavefunction2D, axis: Axis, order: u32) -> f64 {
        assert!(order == 1 || order == 2, "momentum moment order must be 1 or 2");
        let mut work = psi.clone();
        self.forward(&mut work, axis);
        let (nq, nx) = (self.q.len(), self.x.len());
        let mut sum = 0.0;
        for (i, row) in work.data.rows().into_iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                let k = match axis {
                    Axis::Q => self.kq[i],
                    Axis::X => self.kx[j],
                };
                sum += z.norm_sqr() * k.powi(order as i32);
            }
        }
        // Parseval: Σ|ψ̂|² = N·Σ|ψ|² along the transformed axis
        let n_axis = match axis {
            Axis::Q => nq,
            Axis::X => nx,
        } as f64;
        sum * psi.cell() / n_axis
    }

    /// Norm evaluated in the doubly transformed representation.
    pub fn momentum_norm_sqr(&mut self, psi: &Wavefunction2D) -> f64 {
        let mut work = psi.clone();
        self.forward(&mut work, Axis::X);
        self.forward(&mut work, Axis::Q);
        let n = (self.q.len() * self.x.len()) as f64;
        work.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * psi.cell() / n
    }

    /// −i ∂ψ/∂x along the cavity axis (spectral derivative).
    pub fn x_momentum_of(&mut self, psi: &Wavefunction2D) -> Wavefunction2D {
        let mut work = psi.clone();
        self.forward(&mut work, Axis::X);
        for mut row in work.data.rows_mut() {
            row.iter_mut().zip(&self.kx).for_each(|(z, &k)| *z *= k);
        }
        self.inverse(&mut work, Axis::X);
        work
    }

    /// T ψ for the two-mode kinetic operator.
    pub fn kinetic_of(&mut self, psi: &Wavefunction2D, masses: [f64; 2]) -> Wavefunction2D {
        let mut work = psi.clone();
        let table = self.kinetic_table(masses).mapv(|t| Complex64::new(t, 0.0));
        self.apply_momentum_factor(&mut work, &table);
        work
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 32;
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Spectral second derivative of a real periodic sample along one grid.
pub fn spectral_second_derivative(grid: &Grid1D, f: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (z, k) in buf.iter_mut().zip(grid.wavenumbers()) {
        *z *= -k * k;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"PSI2DV01";

/// Write ψ in the binary snapshot layout.
///
/// Layout (all little-endian): 8-byte magic `PSI2DV01`; `t_fs` f64; q grid as
/// `min` f64, `max` f64, `n` u64; x grid likewise; then `n_q·n_x` complex
/// amplitudes row-major (q slow, x fast) as (re f64, im f64) pairs.
pub fn write_snapshot(mut w: impl Write, psi: &Wavefunction2D, t_fs: f64) -> Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&t_fs.to_le_bytes())?;
    for g in [&psi.q, &psi.x] {
        w.write_all(&g.min.to_le_bytes())?;
        w.write_all(&g.max.to_le_bytes())?;
        w.write_all(&(g.n as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(psi.data.len() * 16);
    for z in psi.data.iter() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(mut r: impl Read) -> Result<(f64, Wavefunction2D)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let mut word = [0u8; 8];
    let mut next_f64 = |r: &mut dyn Read| -> Result<f64> {
        r.read_exact(&mut word)?;
        Ok(f64::from_le_bytes(word))
    };
    let t_fs = next_f64(&mut r)?;
    let mut grids = Vec::with_capacity(2);
    for _ in 0..2 {
        let min = next_f64(&mut r)?;
        let max = next_f64(&mut r)?;
        let mut n = [0u8; 8];
        r.read_exact(&mut n)?;
        let n = u64::from_le_bytes(n) as usize;
        grids.push(Grid1D::new(min, max, n).map_err(|e| Error::Snapshot(e.to_string()))?);
    }
    let (q, x) = (grids[0], grids[1]);
    let mut bytes = vec![0u8; q.len() * x.len() * 16];
    r.read_exact(&mut bytes)?;
    let values: Vec<Complex64> = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    let data = Array2::from_shape_vec((q.len(), x.len()), values).map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok((t_fs, Wavefunction2D { q, x, data }))
}

/// Normalized Gaussian wavepacket exp(−(u−u0)²/(4s²) + i·k·u) on one grid
/// (density standard deviation `s`).
pub fn gaussian_1d(grid: &Grid1D, center: f64, sigma: f64, k: f64) -> Vec<Complex64> {
    let norm = (2.0 * PI * sigma * sigma).powf(-0.25);
    grid.points()
        .into_iter()
        .map(|u| norm * (-(u - center).powi(2) / (4.0 * sigma * sigma)).exp() * (I * k * u).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grids() -> (Grid1D, Grid1D) {
        (Grid1D::new(-6.0, 6.0, 64).unwrap(), Grid1D::new(-40.0, 40.0, 81).unwrap())
    }

    fn gaussian_2d(q: Grid1D, x: Grid1D, sq: f64, sx: f64, kx: f64) -> Wavefunction2D {
        let gq = gaussian_1d(&q, 0.3, sq, 0.0);
        let gx = gaussian_1d(&x, -2.0, sx, kx);
        let mut psi = Wavefunction2D::zeros(q, x);
        for i in 0..q.len() {
            for j in 0..x.len() {
                psi.data[[i, j]] = gq[i] * gx[j];
            }
        }
        psi
    }

    #[test]
    fn grid_invariants() {
        let g = Grid1D::new(2.5, 20.5, 721).unwrap();
        assert!((g.spacing() - 0.025).abs() < 1e-15);
        assert!((g.point(720) - 20.5).abs() < 1e-12);
        assert_eq!(g.nearest_index(4.0), 60);
        assert!(Grid1D::new(1.0, 1.0, 10).is_err());
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn inner_product_basics() {
        let (q, x) = grids();
        let psi = gaussian_2d(q, x, 0.8, 5.0, 0.0);
        let one = inner_product(&psi, &psi).unwrap();
        assert!((one.re - 1.0).abs() < 1e-10 && one.im.abs() < 1e-14);
        let mut ipsi = psi.clone();
        ipsi.scale(I);
        let z = inner_product(&psi, &ipsi).unwrap();
        assert!((z - I).norm() < 1e-10);
        let other = Wavefunction2D::zeros(Grid1D::new(-6.0, 6.0, 65).unwrap(), x);
        assert!(matches!(inner_product(&psi, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn expectation_values() {
        let (q, _) = grids();
        let omega: f64 = 0.0084;
        let x = Grid1D::new(-90.0, 90.0, 361).unwrap();
        // cavity ground state: density standard deviation sqrt(1/(2ω)), centred at x = 0
        let gq = gaussian_1d(&q, 0.3, 0.8, 0.0);
        let gx = gaussian_1d(&x, 0.0, (0.5 / omega).sqrt(), 0.0);
        let data = Array2::from_shape_fn((q.len(), x.len()), |(i, j)| gq[i] * gx[j]);
        let psi = Wavefunction2D::from_array(q, x, data).unwrap();
        let one = expectation(&psi, |_, _| 1.0).unwrap();
        assert!((one.value - 1.0).abs() < 1e-10);
        let mean_x = expectation(&psi, |_, x| x).unwrap();
        assert!(mean_x.value.abs() < 1e-10 && mean_x.imag_residue.abs() < 1e-10);
        let x2 = expectation(&psi, |_, x| x * x).unwrap();
        assert!((x2.value - 0.5 / omega).abs() < 1e-8 * (0.5 / omega));
        assert!(matches!(expectation(&psi, |_, _| f64::NAN), Err(Error::NonFinite(_))));
    }

    #[test]
    fn momentum_moments_of_gaussians() {
        let omega: f64 = 0.0084;
        let q = Grid1D::new(-6.0, 6.0, 64).unwrap();
        let x = Grid1D::new(-90.0, 90.0, 361).unwrap();
        let mut sp = Spectral2D::new(q, x);
        let psi = gaussian_2d(q, x, 0.8, (0.5 / omega).sqrt(), 0.0);
        // ground state of frequency ω: ⟨p²⟩ = ω/2
        let p2 = sp.momentum_moments(&psi, Axis::X, 2);
        assert!((p2 - omega / 2.0).abs() < 1e-10, "{p2}");
        assert!(sp.momentum_moments(&psi, Axis::X, 1).abs() < 1e-12);
        assert!(sp.momentum_moments(&psi, Axis::Q, 1).abs() < 1e-12);
        // Gaussian of position std s in q: ⟨p²⟩ = 1/(4 s²)
        let pq2 = sp.momentum_moments(&psi, Axis::Q, 2);
        assert!((pq2 - 1.0 / (4.0 * 0.64)).abs() < 1e-9, "{pq2}");
        // boosted packet
        let k = 0.05;
        let boosted = gaussian_2d(q, x, 0.8, (0.5 / omega).sqrt(), k);
        let p1 = sp.momentum_moments(&boosted, Axis::X, 1);
        assert!((p1 - k).abs() < 1e-10, "{p1}");
    }

    #[test]
    fn parseval() {
        let (q, x) = grids();
        let mut sp = Spectral2D::new(q, x);
        let psi = gaussian_2d(q, x, 0.7, 6.0, 0.3);
        assert!((sp.momentum_norm_sqr(&psi) - psi.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let g = Grid1D::new(0.0, 2.0 * PI * (1.0 - 1.0 / 128.0), 128).unwrap();
        for k in [1.0, 5.0, 30.0] {
            let f: Vec<f64> = g.points().iter().map(|&u| (k * u).sin()).collect();
            let d2 = spectral_second_derivative(&g, &f);
            let err = d2.iter().zip(&f).map(|(a, b)| (a + k * k * b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10 * k * k, "k={k}: {err}");
        }
    }

    #[test]
    fn diagonal_phase() {
        let (q, x) = grids();
        let psi = gaussian_2d(q, x, 0.7, 6.0, 0.1);
        let mut same = psi.clone();
        apply_diagonal_phase(&mut same, |_, _| 0.0, 1.0);
        assert_eq!(same, psi);
        let mut global = psi.clone();
        apply_diagonal_phase(&mut global, |_, _| 0.37, 2.0);
        let ov = inner_product(&psi, &global).unwrap();
        assert!((ov.norm() - psi.norm_sqr()).abs() < 1e-12);
        let mut varied = psi.clone();
        apply_diagonal_phase(&mut varied, |q, x| q * q + x.sin(), 0.9);
        assert!((varied.norm_sqr() - psi.norm_sqr()).abs() < 1e-13);
        let mx = |p: &Wavefunction2D| expectation(p, |_, x| x).unwrap().value;
        assert!((mx(&global) - mx(&psi)).abs() < 1e-12);
    }

    #[test]
    fn free_gaussian_spreading() {
        // free particle of mass m: σ(t)² = σ0² (1 + (t/(2mσ0²))²)
        let q = Grid1D::new(-20.0, 20.0, 256).unwrap();
        let x = Grid1D::new(-400.0, 400.0, 512).unwrap();
        let mut sp = Spectral2D::new(q, x);
        let (sq, sx) = (0.5, 8.0);
        let mut psi = Wavefunction2D::zeros(q, x);
        let gq = gaussian_1d(&q, 0.0, sq, 0.0);
        let gx = gaussian_1d(&x, 0.0, sx, 0.0);
        for i in 0..q.len() {
            for j in 0..x.len() {
                psi.data[[i, j]] = gq[i] * gx[j];
            }
        }
        let masses = [300.0, 1.0];
        let t = 200.0;
        sp.apply_kinetic_phase(&mut psi, t, masses);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        let var_x = expectation(&psi, |_, x| x * x).unwrap().value;
        let var_q = expectation(&psi, |q, _| q * q).unwrap().value;
        let expect = |s0: f64, m: f64| s0 * s0 * (1.0 + (t / (2.0 * m * s0 * s0)).powi(2));
        assert!((var_x / expect(sx, 1.0) - 1.0).abs() < 1e-9, "{var_x}");
        assert!((var_q / expect(sq, 300.0) - 1.0).abs() < 1e-9, "{var_q}");
    }

    #[test]
    fn kinetic_identity_and_reversal() {
        let (q, x) = grids();
        let mut sp = Spectral2D::new(q, x);
        let psi = gaussian_2d(q, x, 0.7, 6.0, 0.1);
        let mut same = psi.clone();
        sp.apply_kinetic_phase(&mut same, 0.0, [2.0, 1.0]);
        let diff = (&same.data - &psi.data).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
        let mut there_and_back = psi.clone();
        sp.apply_kinetic_phase(&mut there_and_back, 3.7, [2.0, 1.0]);
        sp.apply_kinetic_phase(&mut there_and_back, -3.7, [2.0, 1.0]);
        let diff = (&there_and_back.data - &psi.data).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn snapshot_round_trip() {
        let (q, x) = grids();
        let psi = gaussian_2d(q, x, 0.7, 6.0, 0.1);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &psi, 12.5).unwrap();
        assert_eq!(buf.len(), 8 + 8 + 2 * 24 + q.len() * x.len() * 16);
        let (t, back) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(t, 12.5);
        assert_eq!(back, psi);
        buf[0] = b'X';
        assert!(read_snapshot(buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn kinetic_phase_preserves_norm(dt in -50.0f64..50.0, kx in -0.5f64..0.5) {
            let (q, x) = grids();
            let mut sp = Spectral2D::new(q, x);
            let mut psi = gaussian_2d(q, x, 0.7, 6.0, kx);
            let before = psi.norm_sqr();
            sp.apply_kinetic_phase(&mut psi, dt, [1.5, 1.0]);
            prop_assert!((psi.norm_sqr() - before).abs() < 1e-12);
        }
    }
}
