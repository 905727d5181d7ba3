//! Scenario description and its flat `key = value` text format.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Unknown or
//! repeated keys are errors. Keys and units:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `label` | run name, used for output file names | `scenario` |
//! | `potential` | `VA`, `VB`, `VC` or `morse` | `VA` |
//! | `morse_de_ev`, `morse_alpha`, `morse_q_eq`, `morse_mu_amu` | custom Morse (eV, 1/bohr, bohr, u) | preset A |
//! | `dipole` | `PR`, `NP` or `custom` | `PR` |
//! | `dipole_d0_debye`, `dipole_q0`, `dipole_q1`, `dipole_sigma` | custom dipole d0·(q − q0)·exp(−(q − q1)²/2σ²) (D/bohr, bohr, bohr, bohr) | |
//! | `lambda_g` | coupling ratio | `0.2` |
//! | `eta` | peak fractional frequency shift, + blue / − red | `0.2` |
//! | `t_d_fs`, `tau_fs` | pulse centre and width (fs) | `250`, `62.5` |
//! | `omega_c_cm1` | undriven cavity frequency (cm⁻¹) | grid fundamental |
//! | `initial_state` | `ground`, `lower_polariton`, `upper_polariton` | `ground` |
//! | `q_min`, `q_max`, `n_q` | vibrational grid (bohr, inclusive ends) | `2.5`, `8.475`, `240` |
//! | `x_min`, `x_max`, `n_x` | cavity grid (inclusive ends) | `-120`, `119.25`, `320` |
//! | `dt_au` | real-time step (atomic units) | `1.0` |
//! | `t_final_fs` | end of the run (fs) | `800` |
//! | `sample_stride` | steps between records | `41` |
//! | `frame` | Fock frame, `instantaneous` or `static` | `instantaneous` |
//! | `n_max` | highest projected Fock state | `60` |
//! | `relax_tolerance` | imaginary-time drift threshold (hartree per au) | `1e-10` |
//! | `snapshot_stride` | write ψ every this many records, 0 = never | `0` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field_stats::{FockFrame, DEFAULT_N_MAX};
use crate::molecule::{DipoleParams, MorseParams, PotentialKind};
use crate::propagator::{Target, DEFAULT_DT_AU, DEFAULT_RELAX_TOLERANCE, DEFAULT_T_FINAL_FS};
use crate::qgrid::Grid1D;
use crate::units::{amu_to_me, debye_to_au, ev_to_hartree, wavenumber_to_hartree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub n_q: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
}

impl GridSpec {
    /// Periodic production grid: dq = 0.025 bohr over the bound region of the
    /// well, dx = 0.75 over ±120.
    pub fn production() -> Self {
        Self { q_min: 2.5, q_max: 8.475, n_q: 240, x_min: -120.0, x_max: 119.25, n_x: 320 }
    }

    /// 721 × 361 points over q ∈ [2.5, 20.5] bohr and x ∈ [−90, 90].
    pub fn wide() -> Self {
        Self { q_min: 2.5, q_max: 20.5, n_q: 721, x_min: -90.0, x_max: 90.0, n_x: 361 }
    }

    pub fn q(&self) -> Result<Grid1D> {
        Grid1D::new(self.q_min, self.q_max, self.n_q)
    }

    pub fn x(&self) -> Result<Grid1D> {
        Grid1D::new(self.x_min, self.x_max, self.n_x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub potential: PotentialKind,
    pub dipole: DipoleParams,
    pub dipole_name: String,
    pub lambda_g: f64,
    pub eta: f64,
    pub t_d: f64,
    pub tau: f64,
    /// Undriven cavity frequency (hartree); `None` tunes to the grid fundamental.
    pub omega_c0: Option<f64>,
    pub initial_state: Target,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_final: f64,
    pub sample_stride: usize,
    pub frame: FockFrame,
    pub n_max: usize,
    pub relax_tolerance: f64,
    pub snapshot_stride: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            label: "scenario".into(),
            potential: PotentialKind::MorseA,
            dipole: DipoleParams::polar_right(),
            dipole_name: "PR".into(),
            lambda_g: 0.2,
            eta: 0.2,
            t_d: 250.0,
            tau: 62.5,
            omega_c0: None,
            initial_state: Target::Ground,
            grid: GridSpec::production(),
            dt: DEFAULT_DT_AU,
            t_final: DEFAULT_T_FINAL_FS,
            sample_stride: 41,
            frame: FockFrame::Instantaneous,
            n_max: DEFAULT_N_MAX,
            relax_tolerance: DEFAULT_RELAX_TOLERANCE,
            snapshot_stride: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "label",
    "potential",
    "morse_de_ev",
    "morse_alpha",
    "morse_q_eq",
    "morse_mu_amu",
    "dipole",
    "dipole_d0_debye",
    "dipole_q0",
    "dipole_q1",
    "dipole_sigma",
    "lambda_g",
    "eta",
    "t_d_fs",
    "tau_fs",
    "omega_c_cm1",
    "initial_state",
    "q_min",
    "q_max",
    "n_q",
    "x_min",
    "x_max",
    "n_x",
    "dt_au",
    "t_final_fs",
    "sample_stride",
    "frame",
    "n_max",
    "relax_tolerance",
    "snapshot_stride",
];

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key '{k}'", lineno + 1)));
        }
        if v.is_empty() {
            return Err(Error::Config(format!("line {}: empty value for '{k}'", lineno + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: repeated key '{k}'", lineno + 1)));
        }
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("cannot parse '{v}' for '{key}'"))))
        .transpose()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_pairs(text)?;
        let mut s = Scenario::default();
        if let Some(v) = map.get("label") {
            s.label = v.clone();
        }
        let morse_keys = ["morse_de_ev", "morse_alpha", "morse_q_eq", "morse_mu_amu"];
        match map.get("potential").map(|v| v.to_ascii_lowercase()) {
            Some(p) if p == "morse" => {
                let base = MorseParams::preset_a();
                let de = num::<f64>(&map, "morse_de_ev")?.map(ev_to_hartree).unwrap_or(base.de);
                let alpha = num::<f64>(&map, "morse_alpha")?.unwrap_or(base.alpha);
                let q_eq = num::<f64>(&map, "morse_q_eq")?.unwrap_or(base.q_eq);
                let mu = num::<f64>(&map, "morse_mu_amu")?.map(amu_to_me).unwrap_or(base.mu);
                s.potential = PotentialKind::Morse(MorseParams::new(de, alpha, q_eq, mu)?);
            }
            Some(p) => {
                if let Some(k) = morse_keys.iter().find(|k| map.contains_key(**k)) {
                    return Err(Error::Config(format!("'{k}' requires potential = morse")));
                }
                s.potential = p.parse()?;
            }
            None => {
                if let Some(k) = morse_keys.iter().find(|k| map.contains_key(**k)) {
                    return Err(Error::Config(format!("'{k}' requires potential = morse")));
                }
            }
        }
        let dipole_keys = ["dipole_d0_debye", "dipole_q0", "dipole_q1", "dipole_sigma"];
        match map.get("dipole").map(|v| v.to_ascii_uppercase()) {
            Some(d) if d == "CUSTOM" => {
                let mut vals = [0.0; 4];
                for (slot, key) in vals.iter_mut().zip(dipole_keys) {
                    *slot = num::<f64>(&map, key)?
                        .ok_or_else(|| Error::Config(format!("dipole = custom needs '{key}'")))?;
                }
                s.dipole = DipoleParams::new(debye_to_au(vals[0]), vals[1], vals[2], vals[3])?;
                s.dipole_name = "custom".into();
            }
            Some(d) => {
                if let Some(k) = dipole_keys.iter().find(|k| map.contains_key(**k)) {
                    return Err(Error::Config(format!("'{k}' requires dipole = custom")));
                }
                s.dipole = DipoleParams::preset(&d)?;
                s.dipole_name = d;
            }
            None => {
                if let Some(k) = dipole_keys.iter().find(|k| map.contains_key(**k)) {
                    return Err(Error::Config(format!("'{k}' requires dipole = custom")));
                }
            }
        }
        s.lambda_g = num(&map, "lambda_g")?.unwrap_or(s.lambda_g);
        s.eta = num(&map, "eta")?.unwrap_or(s.eta);
        s.t_d = num(&map, "t_d_fs")?.unwrap_or(s.t_d);
        s.tau = num(&map, "tau_fs")?.unwrap_or(s.tau);
        s.omega_c0 = num::<f64>(&map, "omega_c_cm1")?.map(wavenumber_to_hartree);
        if let Some(v) = map.get("initial_state") {
            s.initial_state = v.parse()?;
        }
        let g = &mut s.grid;
        g.q_min = num(&map, "q_min")?.unwrap_or(g.q_min);
        g.q_max = num(&map, "q_max")?.unwrap_or(g.q_max);
        g.n_q = num(&map, "n_q")?.unwrap_or(g.n_q);
        g.x_min = num(&map, "x_min")?.unwrap_or(g.x_min);
        g.x_max = num(&map, "x_max")?.unwrap_or(g.x_max);
        g.n_x = num(&map, "n_x")?.unwrap_or(g.n_x);
        s.dt = num(&map, "dt_au")?.unwrap_or(s.dt);
        s.t_final = num(&map, "t_final_fs")?.unwrap_or(s.t_final);
        s.sample_stride = num(&map, "sample_stride")?.unwrap_or(s.sample_stride);
        if let Some(v) = map.get("frame") {
            s.frame = v.parse()?;
        }
        s.n_max = num(&map, "n_max")?.unwrap_or(s.n_max);
        s.relax_tolerance = num(&map, "relax_tolerance")?.unwrap_or(s.relax_tolerance);
        s.snapshot_stride = num(&map, "snapshot_stride")?.unwrap_or(s.snapshot_stride);
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.label.is_empty() || self.label.contains(['/', '\\']) {
            return bad(format!("label '{}' is not a plain file name", self.label));
        }
        if !(self.lambda_g >= 0.0) {
            return bad(format!("lambda_g must be non-negative, got {}", self.lambda_g));
        }
        if !(self.tau > 0.0) || !(1.0 + self.eta > 0.0) {
            return bad(format!("need tau_fs > 0 and eta > -1 (got {}, {})", self.tau, self.eta));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) || self.sample_stride == 0 {
            return bad("dt_au, t_final_fs and sample_stride must be positive".into());
        }
        if self.t_final < self.t_d + 4.0 * self.tau {
            return bad(format!(
                "t_final_fs = {} ends before the pulse is over (t_d + 4 tau = {})",
                self.t_final,
                self.t_d + 4.0 * self.tau
            ));
        }
        if self.n_max < 1 {
            return bad("n_max must be at least 1".into());
        }
        if !(self.relax_tolerance > 0.0) {
            return bad("relax_tolerance must be positive".into());
        }
        self.grid.q()?;
        self.grid.x()?;
        Ok(())
    }

    /// Resolved configuration in the same key = value format.
    pub fn to_config(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("label", self.label.clone());
        match self.potential {
            PotentialKind::Morse(p) => {
                kv("potential", "morse".into());
                kv("morse_de_ev", format!("{}", p.de * crate::units::HARTREE_IN_EV));
                kv("morse_alpha", format!("{}", p.alpha));
                kv("morse_q_eq", format!("{}", p.q_eq));
                kv("morse_mu_amu", format!("{}", p.mu / crate::units::DALTON_IN_ELECTRON_MASS));
            }
            other => kv("potential", other.name().into()),
        }
        if self.dipole_name == "custom" {
            kv("dipole", "custom".into());
            kv("dipole_d0_debye", format!("{}", crate::units::au_to_debye(self.dipole.d0)));
            kv("dipole_q0", format!("{}", self.dipole.q0));
            kv("dipole_q1", format!("{}", self.dipole.q1));
            kv("dipole_sigma", format!("{}", self.dipole.sigma));
        } else {
            kv("dipole", self.dipole_name.clone());
        }
        kv("lambda_g", format!("{}", self.lambda_g));
        kv("eta", format!("{}", self.eta));
        kv("t_d_fs", format!("{}", self.t_d));
        kv("tau_fs", format!("{}", self.tau));
        if let Some(w) = self.omega_c0 {
            kv("omega_c_cm1", format!("{}", crate::units::hartree_to_wavenumber(w)));
        }
        kv("initial_state", self.initial_state.to_string());
        let g = self.grid;
        kv("q_min", format!("{}", g.q_min));
        kv("q_max", format!("{}", g.q_max));
        kv("n_q", format!("{}", g.n_q));
        kv("x_min", format!("{}", g.x_min));
        kv("x_max", format!("{}", g.x_max));
        kv("n_x", format!("{}", g.n_x));
        kv("dt_au", format!("{}", self.dt));
        kv("t_final_fs", format!("{}", self.t_final));
        kv("sample_stride", format!("{}", self.sample_stride));
        kv("frame", self.frame.to_string());
        kv("n_max", format!("{}", self.n_max));
        kv("relax_tolerance", format!("{:e}", self.relax_tolerance));
        kv("snapshot_stride", format!("{}", self.snapshot_stride));
        s
    }
}
