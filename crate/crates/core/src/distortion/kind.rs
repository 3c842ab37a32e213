use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DistortionError;

/// The five-way label space. The declaration order is the canonical index
/// order shared by datasets, model heads and checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistortionKind {
    Clean,
    Underexposed,
    Overexposed,
    NoiseLow,
    NoiseHigh,
}

impl DistortionKind {
    pub const COUNT: usize = 5;

    pub const ALL: [DistortionKind; 5] = [
        DistortionKind::Clean,
        DistortionKind::Underexposed,
        DistortionKind::Overexposed,
        DistortionKind::NoiseLow,
        DistortionKind::NoiseHigh,
    ];

    /// The four kinds that correspond to an actual corruption.
    pub const DISTORTED: [DistortionKind; 4] = [
        DistortionKind::Underexposed,
        DistortionKind::Overexposed,
        DistortionKind::NoiseLow,
        DistortionKind::NoiseHigh,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::Clean => "Clean",
            DistortionKind::Underexposed => "Underexposed",
            DistortionKind::Overexposed => "Overexposed",
            DistortionKind::NoiseLow => "NoiseLow",
            DistortionKind::NoiseHigh => "NoiseHigh",
        }
    }

    pub fn is_exposure(self) -> bool {
        matches!(self, DistortionKind::Underexposed | DistortionKind::Overexposed)
    }

    pub fn is_noise(self) -> bool {
        matches!(self, DistortionKind::NoiseLow | DistortionKind::NoiseHigh)
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionKind {
    type Err = DistortionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DistortionError::UnknownKind(s.to_string()))
    }
}

/// One corruption event. `param` is the gamma exponent for exposure kinds and
/// the noise standard deviation (unit-interval scale) for noise kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub param: f64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, param: f64) -> Result<Self, DistortionError> {
        let ok = match kind {
            DistortionKind::Clean => false,
            DistortionKind::Underexposed | DistortionKind::Overexposed => param > 0.0 && param.is_finite(),
            DistortionKind::NoiseLow | DistortionKind::NoiseHigh => param >= 0.0 && param.is_finite(),
        };
        if ok {
            Ok(Self { kind, param })
        } else {
            Err(DistortionError::InvalidSpec { kind, param })
        }
    }

    /// An exposure event; the kind follows from the exponent.
    pub fn gamma(gamma: f64) -> Result<Self, DistortionError> {
        Self::new(super::classify_gamma(gamma)?, gamma)
    }

    pub fn noise(kind: DistortionKind, sigma: f64) -> Result<Self, DistortionError> {
        if !kind.is_noise() {
            return Err(DistortionError::InvalidSpec { kind, param: sigma });
        }
        Self::new(kind, sigma)
    }

    /// Short tag used in sample ids, e.g. `g2.0` or `s0.04`.
    pub fn tag(&self) -> String {
        let prefix = if self.kind.is_exposure() { 'g' } else { 's' };
        format!("{prefix}{:?}", self.param)
    }
}
