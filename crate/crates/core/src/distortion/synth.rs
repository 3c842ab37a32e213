use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DistortionError, DistortionKind, DistortionSpec};
use crate::imaging::{unit_to_byte, ImageU8};

/// Power-law exposure change: `255 · gain · (v / 255)^gamma` per sample.
pub fn apply_gamma(img: &ImageU8, gamma: f64, gain: f64) -> Result<ImageU8, DistortionError> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(DistortionError::InvalidGamma(gamma));
    }
    let lut = gamma_lut(gamma, gain);
    Ok(img.map(|v| lut[v as usize]))
}

pub(crate) fn gamma_lut(gamma: f64, gain: f64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (i, out) in lut.iter_mut().enumerate() {
        *out = unit_to_byte(gain * (i as f64 / 255.0).powf(gamma));
    }
    lut
}

/// Additive Gaussian noise in the unit domain, one draw per sample.
pub fn apply_gaussian_noise<R: Rng + ?Sized>(
    img: &ImageU8,
    mean: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<ImageU8, DistortionError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(DistortionError::InvalidSigma(sigma));
    }
    let normal = Normal::new(mean, sigma).map_err(|_| DistortionError::InvalidSigma(sigma))?;
    Ok(add_noise_with(img, || normal.sample(rng)))
}

/// Adds `next()` to every unit-domain sample and requantizes.
pub fn add_noise_with(img: &ImageU8, mut next: impl FnMut() -> f64) -> ImageU8 {
    img.map(|v| unit_to_byte(v as f64 / 255.0 + next()))
}

/// Applies a single distortion event.
pub fn apply_spec<R: Rng + ?Sized>(
    img: &ImageU8,
    spec: &DistortionSpec,
    noise_mean: f64,
    rng: &mut R,
) -> Result<ImageU8, DistortionError> {
    match spec.kind {
        DistortionKind::Underexposed | DistortionKind::Overexposed => apply_gamma(img, spec.param, 1.0),
        DistortionKind::NoiseLow | DistortionKind::NoiseHigh => apply_gaussian_noise(img, noise_mean, spec.param, rng),
        DistortionKind::Clean => Err(DistortionError::InvalidSpec {
            kind: spec.kind,
            param: spec.param,
        }),
    }
}

/// Folds the sequence left to right with zero-mean noise.
pub fn apply_sequence<R: Rng + ?Sized>(
    img: &ImageU8,
    seq: &[DistortionSpec],
    rng: &mut R,
) -> Result<ImageU8, DistortionError> {
    apply_sequence_with_mean(img, seq, 0.0, rng)
}

pub fn apply_sequence_with_mean<R: Rng + ?Sized>(
    img: &ImageU8,
    seq: &[DistortionSpec],
    noise_mean: f64,
    rng: &mut R,
) -> Result<ImageU8, DistortionError> {
    let mut out = img.clone();
    for spec in seq {
        out = apply_spec(&out, spec, noise_mean, rng)?;
    }
    Ok(out)
}

/// The training label of a sequence: its most recent event.
pub fn latest_label(seq: &[DistortionSpec]) -> DistortionKind {
    seq.last().map(|s| s.kind).unwrap_or(DistortionKind::Clean)
}

/// Exponents above one darken the image, below one brighten it.
pub fn classify_gamma(gamma: f64) -> Result<DistortionKind, DistortionError> {
    if !(gamma > 0.0) || !gamma.is_finite() || gamma == 1.0 {
        return Err(DistortionError::InvalidGamma(gamma));
    }
    Ok(if gamma > 1.0 {
        DistortionKind::Underexposed
    } else {
        DistortionKind::Overexposed
    })
}
