//! Physical constants and unit conversions.
//!
//! Everything inside the crate works in Hartree atomic units (ħ = mₑ = e = a₀ = 1).
//! Configuration files and reports use spectroscopic units, so this module is the
//! single place where conversion factors live.
//!
//! Constants are the CODATA 2018 recommended values
//! (E. Tiesinga et al., Rev. Mod. Phys. 93, 025010 (2021)):
//!
//! | quantity                         | value                    |
//! |----------------------------------|--------------------------|
//! | Hartree energy in eV             | 27.211 386 245 988       |
//! | Hartree energy in cm⁻¹           | 219 474.631 363 20       |
//! | atomic unit of time              | 2.418 884 326 5857e-17 s |
//! | atomic mass constant / mₑ        | 1822.888 486 209         |
//! | Bohr radius                      | 0.529 177 210 903 Å      |
//! | atomic unit of dipole (e·a₀)     | 8.478 353 6255e-30 C·m   |
//! | Debye (10⁻²¹ C·m²/s ÷ c)         | 3.335 640 951 98e-30 C·m |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const HARTREE_IN_EV: f64 = 27.211_386_245_988;
pub const HARTREE_IN_WAVENUMBER: f64 = 219_474.631_363_20;
pub const AU_TIME_IN_FS: f64 = 2.418_884_326_585_7e-2;
pub const DALTON_IN_ELECTRON_MASS: f64 = 1822.888_486_209;
pub const BOHR_IN_ANGSTROM: f64 = 0.529_177_210_903;
const AU_DIPOLE_IN_COULOMB_METRE: f64 = 8.478_353_625_5e-30;
const DEBYE_IN_COULOMB_METRE: f64 = 3.335_640_951_98e-30;
pub const DEBYE_IN_AU: f64 = DEBYE_IN_COULOMB_METRE / AU_DIPOLE_IN_COULOMB_METRE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Energy,
    Time,
    Mass,
    Dipole,
    Length,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Hartree,
    ElectronVolt,
    Wavenumber,
    AuTime,
    Femtosecond,
    ElectronMass,
    Dalton,
    AuDipole,
    Debye,
    Bohr,
    Angstrom,
}

impl Unit {
    pub fn dimension(self) -> Dimension {
        match self {
            Unit::Hartree | Unit::ElectronVolt | Unit::Wavenumber => Dimension::Energy,
            Unit::AuTime | Unit::Femtosecond => Dimension::Time,
            Unit::ElectronMass | Unit::Dalton => Dimension::Mass,
            Unit::AuDipole | Unit::Debye => Dimension::Dipole,
            Unit::Bohr | Unit::Angstrom => Dimension::Length,
        }
    }

    /// Size of one of this unit expressed in the atomic unit of the same dimension.
    fn in_atomic_units(self) -> f64 {
        match self {
            Unit::Hartree | Unit::AuTime | Unit::ElectronMass | Unit::AuDipole | Unit::Bohr => 1.0,
            Unit::ElectronVolt => 1.0 / HARTREE_IN_EV,
            Unit::Wavenumber => 1.0 / HARTREE_IN_WAVENUMBER,
            Unit::Femtosecond => 1.0 / AU_TIME_IN_FS,
            Unit::Dalton => DALTON_IN_ELECTRON_MASS,
            Unit::Debye => DEBYE_IN_AU,
            Unit::Angstrom => 1.0 / BOHR_IN_ANGSTROM,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Unit::Hartree => "hartree",
            Unit::ElectronVolt => "eV",
            Unit::Wavenumber => "cm-1",
            Unit::AuTime => "au_time",
            Unit::Femtosecond => "fs",
            Unit::ElectronMass => "me",
            Unit::Dalton => "amu",
            Unit::AuDipole => "au_dipole",
            Unit::Debye => "debye",
            Unit::Bohr => "bohr",
            Unit::Angstrom => "angstrom",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unit = match s.to_ascii_lowercase().as_str() {
            "hartree" | "eh" => Unit::Hartree,
            "ev" => Unit::ElectronVolt,
            "cm-1" | "cm^-1" | "wavenumber" => Unit::Wavenumber,
            "au_time" => Unit::AuTime,
            "fs" => Unit::Femtosecond,
            "me" | "electron_mass" => Unit::ElectronMass,
            "amu" | "u" | "dalton" => Unit::Dalton,
            "au_dipole" | "ea0" => Unit::AuDipole,
            "debye" | "d" => Unit::Debye,
            "bohr" | "a0" => Unit::Bohr,
            "angstrom" | "a" => Unit::Angstrom,
            _ => return Err(Error::Config(format!("unknown unit `{s}`"))),
        };
        Ok(unit)
    }
}

/// Convert `value` from one unit to another of the same dimension.
pub fn convert(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(Error::IncompatibleUnits { from, to });
    }
    if from == to {
        return Ok(value);
    }
    Ok(value * from.in_atomic_units() / to.in_atomic_units())
}

pub fn ev_to_hartree(ev: f64) -> f64 {
    ev / HARTREE_IN_EV
}

pub fn wavenumber_to_hartree(cm1: f64) -> f64 {
    cm1 / HARTREE_IN_WAVENUMBER
}

pub fn hartree_to_wavenumber(e: f64) -> f64 {
    e * HARTREE_IN_WAVENUMBER
}

pub fn fs_to_au(t_fs: f64) -> f64 {
    t_fs / AU_TIME_IN_FS
}

pub fn au_to_fs(t_au: f64) -> f64 {
    t_au * AU_TIME_IN_FS
}

pub fn amu_to_me(m: f64) -> f64 {
    m * DALTON_IN_ELECTRON_MASS
}

pub fn debye_to_au(d: f64) -> f64 {
    d * DEBYE_IN_AU
}

pub fn au_to_debye(d: f64) -> f64 {
    d / DEBYE_IN_AU
}
