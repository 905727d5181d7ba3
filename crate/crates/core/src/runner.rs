//! Scenario orchestration: prepare → propagate → analyze, plus the aggregate
//! reports (modulation table, polariton spectrum, anharmonicity sweep, oracle check).

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cavity_model::CavityModel;
use crate::config::Scenario;
use crate::dense_oracle::{
    basis_convergence, build_hamiltonian, compare_with_grid, eigensolve, propagate_dense, real_to_complex, to_grid,
    OracleComparison, ProductBasis,
};
use crate::error::{Error, Result};
use crate::field_stats::{CavityMoments, FieldStatistics, FockFrame, StatsEngine, CSV_HEADER};
use crate::molecule::{PotentialKind, VibrationalStates};
use crate::propagator::{prepare_states, Propagator, Relaxed, Target, EDGE_THRESHOLD};
use crate::qgrid::{inner_product, write_snapshot, Wavefunction2D};
use crate::units::{au_to_debye, au_to_fs, fs_to_au, hartree_to_wavenumber};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Norm drift allowed per picosecond of propagation.
pub const NORM_DRIFT_PER_PS: f64 = 1e-8;

/// A model with its relaxed eigenstates, ready to propagate.
pub struct Prepared {
    pub propagator: Propagator,
    pub vib: VibrationalStates,
    /// Ground state up to the requested target, in order.
    pub states: Vec<Relaxed>,
}

impl Prepared {
    pub fn model(&self) -> &CavityModel {
        self.propagator.model()
    }

    pub fn initial(&self) -> &Relaxed {
        self.states.last().expect("at least the ground state")
    }
}

pub fn build_model(s: &Scenario) -> Result<(CavityModel, VibrationalStates)> {
    CavityModel::build(s.potential, s.dipole, s.lambda_g, s.eta, s.t_d, s.tau, s.omega_c0, &s.grid.q()?)
}

fn relax_into(s: &Scenario, model: CavityModel, vib: VibrationalStates, target: Target) -> Result<Prepared> {
    let mut propagator = Propagator::new(model, vib.grid, s.grid.x()?);
    let tol = s.relax_tolerance;
    let states = prepare_states(&mut propagator, &vib, target, |p| p.tolerance = tol)?;
    Ok(Prepared { propagator, vib, states })
}

/// Build the model and relax every eigenstate up to `target`.
pub fn prepare(s: &Scenario, target: Target) -> Result<Prepared> {
    let (model, vib) = build_model(s)?;
    relax_into(s, model, vib, target)
}

/// Statistics of the prepared initial state at t = 0 in each frame.
pub fn initial_statistics(s: &Scenario, frames: &[FockFrame]) -> Result<Vec<FieldStatistics>> {
    let p = prepare(s, s.initial_state)?;
    let psi = &p.initial().psi;
    let mut engine = StatsEngine::new(*psi.q_grid(), *psi.x_grid(), s.n_max);
    let moments = CavityMoments::compute(psi, engine.spectral())?;
    frames
        .iter()
        .map(|&f| engine.analyze_with_moments(psi, psi, &moments, 0.0, &p.model().modulation, f))
        .collect()
}

fn header(s: &Scenario, model: Option<&CavityModel>, frame: FockFrame) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# polariton {VERSION}");
    let _ = writeln!(h, "# frame = {frame}");
    if let Some(m) = model {
        let _ = writeln!(h, "# d10_au = {:.9e}", m.coupling.d10);
        let _ = writeln!(h, "# d10_debye = {:.9e}", au_to_debye(m.coupling.d10));
        let _ = writeln!(h, "# omega_c0_cm1 = {:.9e}", hartree_to_wavenumber(m.omega_c0()));
        let _ = writeln!(h, "# bandwidth_cm1 = {:.9e}", m.modulation.bandwidth_cm1());
    }
    let g = s.grid;
    let _ = writeln!(h, "# grid = q[{}, {}] x {} points, x[{}, {}] x {} points", g.q_min, g.q_max, g.n_q, g.x_min, g.x_max, g.n_x);
    let _ = writeln!(h, "# dt_au = {}", s.dt);
    for line in s.to_config().lines() {
        let _ = writeln!(h, "# config: {line}");
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub frame: FockFrame,
    pub records: Vec<FieldStatistics>,
}

/// Values at t = 0 and at the sample nearest t_d.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub frame: FockFrame,
    pub at_zero: FieldStatistics,
    pub at_td: FieldStatistics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub d10: Option<f64>,
    pub omega_c0: Option<f64>,
    pub bandwidth_cm1: f64,
    /// Relaxed energies, ground state first (hartree).
    pub state_energies: Vec<f64>,
    pub series: Vec<FrameSeries>,
    /// Largest |‖ψ(t)‖² − ‖ψ(0)‖²| seen, divided by the run length in ps.
    pub norm_drift_per_ps: f64,
    pub failure: Option<String>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn records(&self, frame: FockFrame) -> Option<&[FieldStatistics]> {
        self.series.iter().find(|s| s.frame == frame).map(|s| s.records.as_slice())
    }

    pub fn summary(&self, frame: FockFrame) -> Option<RunSummary> {
        let r = self.records(frame)?;
        let first = r.first()?;
        let td = self.scenario.t_d;
        let nearest = r.iter().min_by(|a, b| (a.t_fs - td).abs().total_cmp(&(b.t_fs - td).abs()))?;
        if (nearest.t_fs - td).abs() > au_to_fs(self.scenario.dt * self.scenario.sample_stride as f64) {
            return None;
        }
        Some(RunSummary { frame, at_zero: first.clone(), at_td: nearest.clone() })
    }

    /// 1 − |⟨ψ(0)|ψ(t)⟩|² averaged over samples after t_d + 4τ. The initial
    /// state is an eigenstate of the undriven Hamiltonian, so this is the
    /// population left outside it by the pulse.
    pub fn residual_excitation(&self) -> Option<f64> {
        let r = &self.series.first()?.records;
        let end = self.scenario.t_d + 4.0 * self.scenario.tau;
        let post: Vec<f64> = r.iter().filter(|s| s.t_fs >= end).map(|s| 1.0 - s.autocorr).collect();
        (!post.is_empty()).then(|| post.iter().sum::<f64>() / post.len() as f64)
    }

    pub fn health_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if let Some(f) = &self.failure {
            issues.push(format!("run failed: {f}"));
        }
        if !(self.norm_drift_per_ps < NORM_DRIFT_PER_PS) {
            issues.push(format!("norm drift {:.3e} per ps", self.norm_drift_per_ps));
        }
        for s in &self.series {
            if let Some(bad) = s.records.iter().find(|r| !r.is_healthy()) {
                issues.push(format!(
                    "{} frame unhealthy at t = {:.3} fs (capture {:.6}, crosscheck {:.3e}, var product {:.9})",
                    s.frame,
                    bad.t_fs,
                    bad.capture,
                    bad.crosscheck,
                    bad.var_x * bad.var_y - bad.cov_xy * bad.cov_xy
                ));
            }
        }
        issues
    }

    pub fn passed(&self) -> bool {
        self.health_issues().is_empty()
    }

    pub fn summary_text(&self) -> String {
        let mut t = String::new();
        let s = &self.scenario;
        let _ = writeln!(t, "label = {}", s.label);
        let _ = writeln!(
            t,
            "potential = {}, dipole = {}, lambda_g = {}, eta = {}, initial_state = {}",
            s.potential.name(),
            s.dipole_name,
            s.lambda_g,
            s.eta,
            s.initial_state
        );
        if let Some(w) = self.omega_c0 {
            let _ = writeln!(t, "omega_c0 = {:.4} cm-1", hartree_to_wavenumber(w));
        }
        let _ = writeln!(t, "bandwidth = {:.4} cm-1", self.bandwidth_cm1);
        for (k, e) in self.state_energies.iter().enumerate() {
            let _ = writeln!(t, "E[{k}] = {:.9e} hartree ({:.4} cm-1)", e, hartree_to_wavenumber(*e));
        }
        for f in self.series.iter().map(|s| s.frame) {
            if let Some(sum) = self.summary(f) {
                for (tag, r) in [("t=0", &sum.at_zero), ("t=t_d", &sum.at_td)] {
                    let _ = writeln!(
                        t,
                        "{f} {tag} (t = {:.3} fs): <n> = {:.6}, var_n = {:.6}, Q = {}, zeta0 = {:.4} dB, zeta_half_pi = {:.4} dB",
                        r.t_fs,
                        r.mean_n,
                        r.var_n,
                        r.mandel_q.map_or("undefined".to_string(), |q| format!("{q:.6}")),
                        r.zeta_0,
                        r.zeta_half_pi
                    );
                }
            }
        }
        match self.residual_excitation() {
            Some(r) => {
                let _ = writeln!(t, "residual_excitation = {r:.6e}");
            }
            None => {
                let _ = writeln!(t, "residual_excitation = n/a");
            }
        }
        let _ = writeln!(t, "norm_drift_per_ps = {:.3e}", self.norm_drift_per_ps);
        let issues = self.health_issues();
        if issues.is_empty() {
            let _ = writeln!(t, "health = ok");
        } else {
            for i in issues {
                let _ = writeln!(t, "health: {i}");
            }
        }
        t
    }
}

fn csv_name(label: &str, frame: FockFrame, frames: &[FockFrame]) -> String {
    if frames.len() == 1 {
        format!("{label}.csv")
    } else {
        format!("{label}_{frame}.csv")
    }
}

/// Run one scenario, recording statistics in each of `frames`.
///
/// With `out` set, writes one CSV per frame (comment header, column header,
/// rows as they are produced), a summary text file and optional ψ snapshots.
/// Preparation or propagation failures do not return `Err`: the outcome is
/// marked failed and the CSVs end with a `# FAILED:` line.
pub fn run_scenario(s: &Scenario, frames: &[FockFrame], out: Option<&Path>) -> Result<RunOutcome> {
    s.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidParameter("no Fock frame requested".into()));
    }
    let built = build_model(s);
    let model = built.as_ref().ok().map(|(m, _)| m);
    let mut writers = Vec::new();
    let mut files = Vec::new();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        for &f in frames {
            let path = dir.join(csv_name(&s.label, f, frames));
            let mut w = BufWriter::new(File::create(&path)?);
            write!(w, "{}", header(s, model, f))?;
            writeln!(w, "{CSV_HEADER}")?;
            writers.push(w);
            files.push(path);
        }
    }
    let mut outcome = RunOutcome {
        scenario: s.clone(),
        d10: model.map(|m| m.coupling.d10),
        omega_c0: model.map(|m| m.omega_c0()),
        bandwidth_cm1: model.map_or(f64::NAN, |m| m.modulation.bandwidth_cm1()),
        state_energies: Vec::new(),
        series: frames.iter().map(|&frame| FrameSeries { frame, records: Vec::new() }).collect(),
        norm_drift_per_ps: 0.0,
        failure: None,
        files,
    };
    let result = built
        .and_then(|(m, vib)| relax_into(s, m, vib, s.initial_state))
        .and_then(|mut prep| {
            outcome.state_energies = prep.states.iter().map(|r| r.energy).collect();
            propagate_and_record(s, &mut prep, &mut outcome, &mut writers, out)
        });
    if let Err(e) = result {
        outcome.failure = Some(e.to_string());
        for w in writers.iter_mut() {
            writeln!(w, "# FAILED: {e}")?;
        }
    }
    for w in writers.iter_mut() {
        w.flush()?;
    }
    if let Some(dir) = out {
        let path = dir.join(format!("{}_summary.txt", s.label));
        fs::write(&path, outcome.summary_text())?;
        outcome.files.push(path);
    }
    Ok(outcome)
}

fn propagate_and_record(
    s: &Scenario,
    prep: &mut Prepared,
    outcome: &mut RunOutcome,
    writers: &mut [BufWriter<File>],
    out: Option<&Path>,
) -> Result<()> {
    let psi0 = prep.initial().adapted_to_real_time(s.dt)?;
    let mut psi = psi0.clone();
    let n0 = psi0.norm_sqr();
    let modulation = prep.model().modulation;
    let mut engine = StatsEngine::new(*psi.q_grid(), *psi.x_grid(), s.n_max);
    let n_steps = (fs_to_au(s.t_final) / s.dt).round() as usize;
    let duration_ps = (n_steps as f64 * au_to_fs(s.dt) * 1e-3).max(f64::MIN_POSITIVE);
    let snap_dir = match out {
        Some(dir) if s.snapshot_stride > 0 => {
            let d = dir.join(format!("{}_snapshots", s.label));
            fs::create_dir_all(&d)?;
            Some(d)
        }
        _ => None,
    };
    let mut sample = 0usize;
    let mut drift = 0.0f64;
    prep.propagator.evolve(&mut psi, 0.0, s.dt, n_steps, s.sample_stride, EDGE_THRESHOLD, |_, t_fs, psi| {
        drift = drift.max((psi.norm_sqr() - n0).abs());
        let moments = CavityMoments::compute(psi, engine.spectral())?;
        for (k, series) in outcome.series.iter_mut().enumerate() {
            let stats = engine.analyze_with_moments(psi, &psi0, &moments, t_fs, &modulation, series.frame)?;
            if let Some(w) = writers.get_mut(k) {
                writeln!(w, "{}", stats.csv_row())?;
            }
            series.records.push(stats);
        }
        if let Some(d) = &snap_dir {
            if sample % s.snapshot_stride == 0 {
                let f = BufWriter::new(File::create(d.join(format!("psi_{sample:06}.bin")))?);
                write_snapshot(f, psi, t_fs)?;
            }
        }
        sample += 1;
        outcome.norm_drift_per_ps = drift / duration_ps;
        Ok(())
    })
}

/// Table of the six published statistics per modulation case.
#[derive(Debug, Clone, PartialEq)]
pub struct Table2Case {
    pub id: String,
    pub dipole: String,
    pub state: Target,
    pub eta: f64,
    /// Q(0), ζ0(0), ζπ/2(0), Q(t_d), ζ0(t_d), ζπ/2(t_d).
    pub reference: [f64; 6],
}

pub const TABLE2_COLUMNS: [&str; 6] = ["Q(0)", "z0(0)", "zpi2(0)", "Q(td)", "z0(td)", "zpi2(td)"];
pub const TABLE2_Q_TOL: f64 = 0.05;
pub const TABLE2_ZETA_TOL: f64 = 0.15;

const TABLE2_DATA: &str = include_str!("../data/table2_reference.txt");

pub fn table2_tolerance(column: usize) -> f64 {
    if column % 3 == 0 {
        TABLE2_Q_TOL
    } else {
        TABLE2_ZETA_TOL
    }
}

pub fn table2_reference() -> Result<Vec<Table2Case>> {
    let mut cases = Vec::new();
    for line in TABLE2_DATA.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Config(format!("malformed reference line '{line}'"));
        if f.len() != 10 {
            return Err(bad());
        }
        let state = match f[2] {
            "GS" => Target::Ground,
            "LP" => Target::LowerPolariton,
            "UP" => Target::UpperPolariton,
            _ => return Err(bad()),
        };
        let mut reference = [0.0; 6];
        for (r, v) in reference.iter_mut().zip(&f[4..]) {
            *r = v.parse().map_err(|_| bad())?;
        }
        cases.push(Table2Case {
            id: f[0].into(),
            dipole: f[1].into(),
            state,
            eta: f[3].parse().map_err(|_| bad())?,
            reference,
        });
    }
    Ok(cases)
}

impl Table2Case {
    pub fn scenario(&self, base: &Scenario) -> Result<Scenario> {
        let mut s = base.clone();
        s.label = format!("case_{}", self.id);
        s.dipole = crate::molecule::DipoleParams::preset(&self.dipole)?;
        s.dipole_name = self.dipole.clone();
        s.initial_state = self.state;
        s.eta = self.eta;
        Ok(s)
    }
}

fn table_cells(sum: &RunSummary) -> [f64; 6] {
    let q = |r: &FieldStatistics| r.mandel_q.unwrap_or(f64::NAN);
    [
        q(&sum.at_zero),
        sum.at_zero.zeta_0,
        sum.at_zero.zeta_half_pi,
        q(&sum.at_td),
        sum.at_td.zeta_0,
        sum.at_td.zeta_half_pi,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Row {
    pub case: Table2Case,
    pub values: Vec<(FockFrame, [f64; 6])>,
    pub failure: Option<String>,
}

impl Table2Row {
    pub fn from_outcome(case: Table2Case, outcome: &RunOutcome) -> Self {
        let values = outcome
            .series
            .iter()
            .filter_map(|s| outcome.summary(s.frame).map(|sum| (s.frame, table_cells(&sum))))
            .collect();
        let issues = outcome.health_issues();
        Self { case, values, failure: (!issues.is_empty()).then(|| issues.join("; ")) }
    }

    pub fn deviations(&self, frame: FockFrame) -> Option<[f64; 6]> {
        let (_, v) = self.values.iter().find(|(f, _)| *f == frame)?;
        let mut d = [0.0; 6];
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = v[k] - self.case.reference[k];
        }
        Some(d)
    }

    pub fn cells_within(&self, frame: FockFrame) -> Option<[bool; 6]> {
        let d = self.deviations(frame)?;
        let mut ok = [false; 6];
        for (k, o) in ok.iter_mut().enumerate() {
            *o = d[k].abs() <= table2_tolerance(k);
        }
        Some(ok)
    }

    /// Frame with all six cells within tolerance, if any, else the frame with
    /// the fewest misses.
    pub fn best_frame(&self) -> Option<FockFrame> {
        self.values
            .iter()
            .map(|(f, _)| {
                let misses = self.cells_within(*f).map_or(7, |c| c.iter().filter(|ok| !**ok).count());
                (misses, *f)
            })
            .min_by_key(|(m, _)| *m)
            .map(|(_, f)| f)
    }

    pub fn matches(&self) -> bool {
        self.failure.is_none()
            && self.values.iter().any(|(f, _)| self.cells_within(*f).is_some_and(|c| c.iter().all(|ok| *ok)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Report {
    pub rows: Vec<Table2Row>,
}

impl Table2Report {
    /// Every case matches in at least one frame.
    pub fn passes(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(Table2Row::matches)
    }

    /// A single frame in which every case matches.
    pub fn common_frame(&self) -> Option<FockFrame> {
        [FockFrame::Instantaneous, FockFrame::Static]
            .into_iter()
            .find(|&f| self.rows.iter().all(|r| r.failure.is_none() && r.cells_within(f).is_some_and(|c| c.iter().all(|ok| *ok))))
    }

    pub fn healthy(&self) -> bool {
        self.rows.iter().all(|r| r.failure.is_none())
    }

    pub fn render(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(
            t,
            "# computed vs reference; tolerance |dQ| <= {TABLE2_Q_TOL}, |dzeta| <= {TABLE2_ZETA_TOL} dB; '*' marks a miss"
        );
        for row in &self.rows {
            let c = &row.case;
            let _ = writeln!(t, "case {} ({} {} eta={:+})", c.id, c.dipole, c.state, c.eta);
            let mut refs = String::from("  reference      ");
            for v in c.reference {
                let _ = write!(refs, " {v:>9.3}");
            }
            let _ = writeln!(t, "{refs}");
            for (f, v) in &row.values {
                let ok = row.cells_within(*f).unwrap_or([false; 6]);
                let d = row.deviations(*f).unwrap_or([f64::NAN; 6]);
                let mut vals = format!("  {:<15}", f.to_string());
                let mut devs = format!("  {:<15}", "  deviation");
                for k in 0..6 {
                    let _ = write!(vals, " {:>9.3}", v[k]);
                    let _ = write!(devs, " {:>8.3}{}", d[k], if ok[k] { ' ' } else { '*' });
                }
                let _ = writeln!(t, "{vals}\n{devs}");
            }
            match (&row.failure, row.best_frame()) {
                (Some(e), _) => {
                    let _ = writeln!(t, "  FAILED: {e}");
                }
                (None, Some(f)) => {
                    let _ = writeln!(t, "  frame used: {f} ({})", if row.matches() { "match" } else { "no match" });
                }
                (None, None) => {}
            }
        }
        let _ = writeln!(
            t,
            "common frame: {}",
            self.common_frame().map_or("none".to_string(), |f| f.to_string())
        );
        let _ = writeln!(t, "result {}", if self.passes() { "PASS" } else { "FAIL" });
        t
    }
}

/// Run every modulation case with `runner`, which receives the case scenario.
pub fn table2_report_with(
    base: &Scenario,
    runner: impl Fn(&Scenario) -> Result<RunOutcome> + Sync,
) -> Result<Table2Report> {
    let cases = table2_reference()?;
    let rows = cases
        .into_par_iter()
        .map(|case| {
            let s = case.scenario(base)?;
            Ok(match runner(&s) {
                Ok(o) => Table2Row::from_outcome(case, &o),
                Err(e) => Table2Row { case, values: Vec::new(), failure: Some(e.to_string()) },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table2Report { rows })
}

/// All eight cases in both frames; case CSVs and the report go to `out`.
pub fn table2_report(base: &Scenario, out: Option<&Path>) -> Result<Table2Report> {
    let frames = [FockFrame::Instantaneous, FockFrame::Static];
    let report = table2_report_with(base, |s| run_scenario(s, &frames, out))?;
    if let Some(dir) = out {
        fs::write(dir.join("table2_report.txt"), report.render())?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub lambda_g: f64,
    /// Ground, lower and upper polariton from imaginary time (hartree).
    pub grid: Vec<f64>,
    pub oracle: Option<OracleComparison>,
    pub note: Option<String>,
}

impl SpectrumRow {
    pub fn gap_lp_up(&self) -> f64 {
        self.grid[2] - self.grid[1]
    }

    pub fn gap_gs_lp(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Oracle energies when the basis is converged.
    pub fn oracle_energies(&self) -> Option<&[f64]> {
        self.oracle.as_ref().filter(|o| o.convergence.converged).map(|o| o.oracle_energies.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub scenario: Scenario,
    pub bandwidth: f64,
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumReport {
    pub fn render(&self) -> String {
        let mut t = String::new();
        let bw = hartree_to_wavenumber(self.bandwidth);
        let _ = writeln!(
            t,
            "# {} {} spectrum, energies in cm-1, bandwidth {:.2} cm-1",
            self.scenario.potential.name(),
            self.scenario.dipole_name,
            bw
        );
        let _ = writeln!(t, "lambda_g source E_GS E_LP E_UP gap_GS_LP gap_LP_UP ratio_GS_LP ratio_LP_UP");
        let line = |t: &mut String, lam: f64, src: &str, e: &[f64]| {
            let c: Vec<f64> = e.iter().map(|v| hartree_to_wavenumber(*v)).collect();
            let (g1, g2) = (c[1] - c[0], c[2] - c[1]);
            let _ = writeln!(
                t,
                "{lam:.4} {src} {:.4} {:.4} {:.4} {:.4} {:.4} {:.4} {:.4}",
                c[0],
                c[1],
                c[2],
                g1,
                g2,
                g1 / bw,
                g2 / bw
            );
        };
        for r in &self.rows {
            line(&mut t, r.lambda_g, "grid", &r.grid);
            match r.oracle_energies() {
                Some(e) => line(&mut t, r.lambda_g, "oracle", e),
                None => {
                    let _ = writeln!(t, "{:.4} oracle - - - - - - -", r.lambda_g);
                }
            }
            if let Some(n) = &r.note {
                let _ = writeln!(t, "  note: {n}");
            }
        }
        t
    }

    /// Grid and converged oracle agree within `tol_cm1` on every level.
    pub fn agreement_cm1(&self) -> Option<f64> {
        self.rows
            .iter()
            .map(|r| r.oracle.as_ref().filter(|o| o.convergence.converged).map(|o| o.max_energy_diff_cm1()))
            .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))
    }
}

/// Oracle basis sizes: vibrational states and Fock states.
pub const ORACLE_BASIS: (usize, usize) = (12, 40);

/// Ground and polariton energies from the grid and from the dense oracle for each λ_g.
pub fn spectrum_report(base: &Scenario, lambdas: &[f64], basis: (usize, usize)) -> Result<SpectrumReport> {
    let rows = lambdas
        .par_iter()
        .map(|&lambda_g| {
            let mut s = base.clone();
            s.lambda_g = lambda_g;
            let p = prepare(&s, Target::UpperPolariton)?;
            let grid: Vec<f64> = p.states.iter().map(|r| r.energy).collect();
            let (oracle, note) = match oracle_comparison(&p, basis) {
                Ok(c) if c.convergence.converged => (Some(c), None),
                Ok(c) => {
                    let n = format!("oracle unconverged (levels shift {:.3} cm-1 on basis growth)", c.convergence.max_shift_cm1);
                    (Some(c), Some(n))
                }
                Err(e) => (None, Some(format!("oracle failed: {e}"))),
            };
            Ok(SpectrumRow { lambda_g, grid, oracle, note })
        })
        .collect::<Result<Vec<_>>>()?;
    let (model, _) = build_model(base)?;
    Ok(SpectrumReport { scenario: base.clone(), bandwidth: model.modulation.bandwidth(), rows })
}

fn oracle_comparison(p: &Prepared, (n_vib, n_fock): (usize, usize)) -> Result<OracleComparison> {
    let q = p.vib.grid;
    let model = p.model();
    let basis = ProductBasis::new(model, &q, n_vib, n_fock)?;
    let conv = basis_convergence(model, &q, n_vib, n_fock)?;
    let states: Vec<(f64, Wavefunction2D)> = p.states.iter().map(|r| (r.energy, r.psi.clone())).collect();
    compare_with_grid(&basis, model, &states, conv)
}

pub const ORACLE_WINDOW_FS: f64 = 200.0;
pub const ORACLE_DENSE_DT_AU: f64 = 10.0;
pub const ORACLE_MIN_OVERLAP: f64 = 0.9999;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub comparison: OracleComparison,
    /// |⟨ψ_grid|ψ_oracle⟩|² after propagating the oracle's initial state over the window.
    pub dynamics_overlap: f64,
    pub window_fs: (f64, f64),
}

impl OracleCheck {
    pub fn passes(&self) -> bool {
        self.comparison.convergence.converged && self.comparison.passes() && self.dynamics_overlap >= ORACLE_MIN_OVERLAP
    }

    pub fn render(&self) -> String {
        let mut t = self.comparison.report();
        let _ = writeln!(
            t,
            "# short-time propagation from {:.1} to {:.1} fs",
            self.window_fs.0, self.window_fs.1
        );
        let _ = writeln!(t, "dynamics_overlap {:.10} (threshold {ORACLE_MIN_OVERLAP})", self.dynamics_overlap);
        let _ = writeln!(t, "oracle_check {}", if self.passes() { "PASS" } else { "FAIL" });
        t
    }
}

/// Compare the lowest three grid eigenstates with the dense oracle, then
/// propagate the oracle's version of the initial state on both sides over a
/// window of `window_fs` centred on t_d.
pub fn oracle_check(s: &Scenario, basis_size: (usize, usize), window_fs: f64) -> Result<OracleCheck> {
    let mut p = prepare(s, Target::UpperPolariton)?;
    let comparison = oracle_comparison(&p, basis_size)?;
    let model = p.model().clone();
    let basis = ProductBasis::new(&model, &p.vib.grid, basis_size.0, basis_size.1)?;
    let eig = eigensolve(&build_hamiltonian(&basis, &model.without_modulation(), 0.0), 3)?;
    let start: DVector<Complex64> = real_to_complex(eig.vectors.column(s.initial_state.index()).iter().copied());
    let t0 = (s.t_d - 0.5 * window_fs).max(0.0);
    let span_au = fs_to_au(window_fs);
    let dense_steps = (span_au / ORACLE_DENSE_DT_AU).round().max(1.0) as usize;
    let dense_dt = span_au / dense_steps as f64;
    let dense_end = propagate_dense(&start, &basis, &model, t0, dense_dt, dense_steps, |_, _| {})?;

    let x = *p.propagator.x_grid();
    let mut psi = to_grid(&basis, &start, &x)?;
    psi.normalize();
    let grid_steps = (span_au / s.dt).round().max(1.0) as usize;
    let grid_dt = span_au / grid_steps as f64;
    p.propagator.evolve(&mut psi, t0, grid_dt, grid_steps, grid_steps, EDGE_THRESHOLD, |_, _, _| Ok(()))?;
    let mut target = to_grid(&basis, &dense_end, &x)?;
    target.normalize();
    let dynamics_overlap = inner_product(&target, &psi)?.norm_sqr() / psi.norm_sqr();
    Ok(OracleCheck { comparison, dynamics_overlap, window_fs: (t0, t0 + window_fs) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub potential: PotentialKind,
    pub dipole: String,
    pub eta: f64,
    pub outcome: RunOutcome,
}

impl SweepEntry {
    pub fn column(&self) -> String {
        format!("Q_{}_{}_{:+}", self.potential.name(), self.dipole, self.eta)
    }

    fn q_series(&self) -> Vec<f64> {
        let f = self.outcome.scenario.frame;
        self.outcome.records(f).unwrap_or(&[]).iter().map(|r| r.mandel_q.unwrap_or(f64::NAN)).collect()
    }

    pub fn q0(&self) -> Option<f64> {
        self.q_series().first().copied().filter(|q| q.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    fn find(&self, pot: PotentialKind, dipole: &str, eta: f64) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| e.potential == pot && e.dipole == dipole && e.eta == eta)
    }

    /// Q(0) for VA, VB, VC with the polar dipole.
    pub fn polar_q0(&self) -> Option<[f64; 3]> {
        let pots = [PotentialKind::MorseA, PotentialKind::MorseB, PotentialKind::Harmonic];
        let mut out = [0.0; 3];
        for (o, p) in out.iter_mut().zip(pots) {
            *o = self.entries.iter().filter(|e| e.potential == p && e.dipole == "PR").find_map(SweepEntry::q0)?;
        }
        Some(out)
    }

    /// Q_A(0) > Q_B(0) ≥ Q_HO(0).
    pub fn ordering_holds(&self) -> Option<bool> {
        self.polar_q0().map(|[a, b, c]| a > b && b >= c)
    }

    /// Largest spread of Q(t) among the three potentials for the non-polar
    /// dipole, over all samples and both modulation signs.
    pub fn nonpolar_spread(&self) -> Option<f64> {
        let mut worst = 0.0f64;
        let etas: Vec<f64> = self.entries.iter().filter(|e| e.dipole == "NP").map(|e| e.eta).collect();
        if etas.is_empty() {
            return None;
        }
        for eta in etas {
            let series: Vec<Vec<f64>> = [PotentialKind::MorseA, PotentialKind::MorseB, PotentialKind::Harmonic]
                .iter()
                .map(|&p| self.find(p, "NP", eta).map(SweepEntry::q_series))
                .collect::<Option<_>>()?;
            let n = series.iter().map(Vec::len).min().unwrap_or(0);
            if n == 0 || series.iter().any(|s| s.len() != n) {
                return None;
            }
            for k in 0..n {
                let (lo, hi) = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[k]), hi.max(s[k])));
                if !(hi - lo).is_finite() {
                    return None;
                }
                worst = worst.max(hi - lo);
            }
        }
        Some(worst)
    }

    pub fn healthy(&self) -> bool {
        self.entries.iter().all(|e| e.outcome.passed())
    }

    /// t_fs followed by one Q(t) column per run.
    pub fn comparative_csv(&self) -> String {
        let mut t = String::from("t_fs");
        for e in &self.entries {
            let _ = write!(t, ",{}", e.column());
        }
        t.push('\n');
        let cols: Vec<Vec<f64>> = self.entries.iter().map(SweepEntry::q_series).collect();
        let times: Vec<f64> = self
            .entries
            .iter()
            .map(|e| e.outcome.records(e.outcome.scenario.frame).unwrap_or(&[]))
            .max_by_key(|r| r.len())
            .map(|r| r.iter().map(|s| s.t_fs).collect())
            .unwrap_or_default();
        let fmt = |v: f64| if v.is_nan() { "nan".to_string() } else { format!("{v:.8e}") };
        for (k, t_fs) in times.iter().enumerate() {
            t.push_str(&fmt(*t_fs));
            for c in &cols {
                let _ = write!(t, ",{}", fmt(c.get(k).copied().unwrap_or(f64::NAN)));
            }
            t.push('\n');
        }
        t
    }

    pub fn render(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(t, "# anharmonicity sweep, Q(0) and health per run");
        for e in &self.entries {
            let _ = writeln!(
                t,
                "{} Q(0) = {} {}",
                e.column(),
                e.q0().map_or("n/a".to_string(), |q| format!("{q:.6}")),
                if e.outcome.passed() { "ok" } else { "FAILED" }
            );
        }
        match self.polar_q0() {
            Some([a, b, c]) => {
                let _ = writeln!(
                    t,
                    "ordering Q_A(0) = {a:.6} > Q_B(0) = {b:.6} >= Q_HO(0) = {c:.6}: {}",
                    if a > b && b >= c { "holds" } else { "violated" }
                );
            }
            None => {
                let _ = writeln!(t, "ordering: n/a");
            }
        }
        match self.nonpolar_spread() {
            Some(d) => {
                let _ = writeln!(t, "non-polar max spread of Q(t) across potentials: {d:.6}");
            }
            None => {
                let _ = writeln!(t, "non-polar spread: n/a");
            }
        }
        t
    }
}

/// The (potential, dipole, η) grid of runs, each labelled by its column name.
pub fn sweep_scenarios(base: &Scenario) -> Result<Vec<(PotentialKind, String, f64, Scenario)>> {
    let mut out = Vec::new();
    for pot in [PotentialKind::MorseA, PotentialKind::MorseB, PotentialKind::Harmonic] {
        for dip in ["PR", "NP"] {
            for eta in [0.2, -0.2] {
                let mut s = base.clone();
                s.potential = pot;
                s.omega_c0 = None;
                s.dipole = crate::molecule::DipoleParams::preset(dip)?;
                s.dipole_name = dip.into();
                s.eta = eta;
                s.initial_state = Target::Ground;
                s.label = format!("sweep_{}_{}_{}", pot.name(), dip, if eta > 0.0 { "blue" } else { "red" });
                out.push((pot, dip.to_string(), eta, s));
            }
        }
    }
    Ok(out)
}

pub fn anharmonicity_sweep_with(
    base: &Scenario,
    runner: impl Fn(&Scenario) -> Result<RunOutcome> + Sync,
) -> Result<SweepReport> {
    let entries = sweep_scenarios(base)?
        .into_par_iter()
        .map(|(potential, dipole, eta, s)| Ok(SweepEntry { potential, dipole, eta, outcome: runner(&s)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { entries })
}

/// Ground-state runs for VA, VB, VC × PR, NP × η = ±0.2; writes the run CSVs,
/// `anharmonicity_q.csv` and `anharmonicity_summary.txt` to `out`.
pub fn anharmonicity_sweep(base: &Scenario, out: Option<&Path>) -> Result<SweepReport> {
    let frame = [base.frame];
    let report = anharmonicity_sweep_with(base, |s| run_scenario(s, &frame, out))?;
    if let Some(dir) = out {
        fs::write(dir.join("anharmonicity_q.csv"), report.comparative_csv())?;
        fs::write(dir.join("anharmonicity_summary.txt"), report.render())?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GridSpec;

    fn small() -> Scenario {
        let mut s = Scenario::default();
        s.grid = GridSpec { q_min: 2.5, q_max: 7.45, n_q: 100, x_min: -90.0, x_max: 89.0, n_x: 180 };
        s.lambda_g = 0.05;
        s.t_d = 20.0;
        s.tau = 4.0;
        s.t_final = 40.0;
        s.dt = 4.0;
        s.sample_stride = 25;
        s.relax_tolerance = 1e-8;
        s
    }

    #[test]
    fn reference_table_parses() {
        let cases = table2_reference().unwrap();
        assert_eq!(cases.len(), 8);
        assert_eq!(cases[3].reference[3], 1.99);
        assert_eq!(cases[6].reference[1], -3.70);
        assert_eq!(cases[7].state, Target::LowerPolariton);
        assert_eq!(cases[1].eta, -0.2);
        // the t = 0 columns depend only on dipole and initial state
        for pair in cases.chunks(2) {
            assert_eq!(pair[0].reference[..3], pair[1].reference[..3]);
        }
    }

    #[test]
    fn run_writes_csv_summary_and_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = small();
        s.label = "tiny".into();
        s.snapshot_stride = 2;
        let frames = [FockFrame::Instantaneous, FockFrame::Static];
        let o = run_scenario(&s, &frames, Some(dir.path())).unwrap();
        assert!(o.passed(), "{:?}", o.health_issues());
        let csv = fs::read_to_string(dir.path().join("tiny_instantaneous.csv")).unwrap();
        assert!(csv.contains("# config: label = tiny"));
        assert!(csv.contains("# bandwidth_cm1 = "));
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], CSV_HEADER);
        assert_eq!(rows.len() - 1, o.records(FockFrame::Instantaneous).unwrap().len());
        assert!(dir.path().join("tiny_static.csv").exists());
        assert!(dir.path().join("tiny_summary.txt").exists());
        let snaps = fs::read_dir(dir.path().join("tiny_snapshots")).unwrap().count();
        assert_eq!(snaps, o.records(FockFrame::Static).unwrap().len().div_ceil(2));

        // summary t_d row is the nearest CSV row
        let sum = o.summary(FockFrame::Instantaneous).unwrap();
        let nearest = o
            .records(FockFrame::Instantaneous)
            .unwrap()
            .iter()
            .min_by(|a, b| (a.t_fs - s.t_d).abs().total_cmp(&(b.t_fs - s.t_d).abs()))
            .unwrap();
        assert_eq!(&sum.at_td, nearest);

        // deterministic output
        let again = tempfile::tempdir().unwrap();
        run_scenario(&s, &frames, Some(again.path())).unwrap();
        assert_eq!(fs::read(dir.path().join("tiny_static.csv")).unwrap(), fs::read(again.path().join("tiny_static.csv")).unwrap());
    }

    #[test]
    fn failed_propagation_leaves_a_footer() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = small();
        s.label = "boom".into();
        // x box too small to hold the displaced cavity state
        s.grid.x_min = -6.0;
        s.grid.x_max = 5.9;
        s.grid.n_x = 120;
        s.dipole = crate::molecule::DipoleParams::polar_right();
        let o = run_scenario(&s, &[FockFrame::Static], Some(dir.path())).unwrap();
        assert!(!o.passed());
        let csv = fs::read_to_string(dir.path().join("boom.csv")).unwrap();
        assert!(csv.lines().last().unwrap().starts_with("# FAILED:"), "{csv}");
        assert!(fs::read_to_string(dir.path().join("boom_summary.txt")).unwrap().contains("run failed"));
    }

    #[test]
    fn table_rows_pick_a_matching_frame() {
        let case = table2_reference().unwrap().remove(0);
        let mut shifted = case.reference;
        shifted[4] += 0.5;
        let row = Table2Row {
            case: case.clone(),
            values: vec![(FockFrame::Instantaneous, shifted), (FockFrame::Static, case.reference)],
            failure: None,
        };
        assert!(row.matches());
        assert_eq!(row.best_frame(), Some(FockFrame::Static));
        assert_eq!(row.cells_within(FockFrame::Instantaneous).unwrap(), [true, true, true, true, false, true]);
        let report = Table2Report { rows: vec![row] };
        assert!(report.passes());
        assert_eq!(report.common_frame(), Some(FockFrame::Static));
        assert!(report.render().contains("result PASS"));
    }
}
