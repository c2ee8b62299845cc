//! The six polarization states used both as prepared inputs and as
//! analyzer projections.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [
        Polarization::H,
        Polarization::V,
        Polarization::D,
        Polarization::A,
        Polarization::R,
        Polarization::L,
    ];

    /// Amplitudes in the {|H⟩, |V⟩} basis.
    pub fn ket(self) -> [C64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = C64::new(s, 0.0);
        let i = C64::new(0.0, s);
        match self {
            Polarization::H => [ONE, ZERO],
            Polarization::V => [ZERO, ONE],
            Polarization::D => [r, r],
            Polarization::A => [r, -r],
            Polarization::R => [r, i],
            Polarization::L => [r, -i],
        }
    }

    pub fn projector(self) -> CMatrix {
        CMatrix::projector(&self.ket())
    }

    pub fn label(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
            Polarization::D => "D",
            Polarization::A => "A",
            Polarization::R => "R",
            Polarization::L => "L",
        }
    }

    pub fn orthogonal(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
            Polarization::D => Polarization::A,
            Polarization::A => Polarization::D,
            Polarization::R => Polarization::L,
            Polarization::L => Polarization::R,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Polarization::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown polarization label {s:?}")))
    }
}

pub fn parse_labels(labels: &[String]) -> Result<Vec<Polarization>> {
    labels.iter().map(|l| l.parse()).collect()
}

/// Which states are prepared and which projections are measured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    pub inputs: Vec<Polarization>,
    pub analyzers: Vec<Polarization>,
}

impl Protocol {
    /// Six inputs, six analyzers.
    pub fn six_state() -> Self {
        Self {
            inputs: Polarization::ALL.to_vec(),
            analyzers: Polarization::ALL.to_vec(),
        }
    }

    pub fn with_inputs(inputs: &[Polarization]) -> Self {
        Self {
            inputs: inputs.to_vec(),
            analyzers: Polarization::ALL.to_vec(),
        }
    }

    pub fn input_states(&self) -> Vec<CMatrix> {
        self.inputs.iter().map(|p| p.projector()).collect()
    }

    pub fn analyzer_projectors(&self) -> Vec<CMatrix> {
        self.analyzers.iter().map(|p| p.projector()).collect()
    }

    pub fn input_kets(&self) -> Vec<Vec<C64>> {
        self.inputs.iter().map(|p| p.ket().to_vec()).collect()
    }

    pub fn analyzer_kets(&self) -> Vec<Vec<C64>> {
        self.analyzers.iter().map(|p| p.ket().to_vec()).collect()
    }
}

impl Default for Protocol {
    fn default() -> Self {
        Self::six_state()
    }
}
