//! Correction algorithms and the pool the selector searches over.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::distortion::{classify_gamma, gamma_lut, DistortionKind};
use crate::imaging::ImageU8;

#[derive(Debug, Error, PartialEq)]
pub enum CorrectorError {
    #[error("an algorithm named {0:?} is already registered")]
    DuplicateName(String),
    #[error("algorithm {0:?} must target at least one distortion and never Clean")]
    InvalidTargets(String),
    #[error("invalid corrector parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown corrector {0:?} (expected gamma_<g>, blur_<sigma> or median_<3|5>)")]
    UnknownName(String),
    #[error("Clean has no correction candidates")]
    CleanHasNoCandidates,
    #[error("no algorithm named {0:?} in the pool")]
    NotInPool(String),
    #[error("{kind} has {count} candidates, at least 2 are required")]
    InsufficientCoverage { kind: DistortionKind, count: usize },
}

type ApplyFn = dyn Fn(&ImageU8) -> ImageU8 + Send + Sync;

/// A named image-to-image transform and the distortion kinds it addresses.
#[derive(Clone)]
pub struct CorrectionAlgorithm {
    name: String,
    targets: Vec<DistortionKind>,
    apply: Arc<ApplyFn>,
}

impl CorrectionAlgorithm {
    pub fn new(
        name: impl Into<String>,
        targets: impl IntoIterator<Item = DistortionKind>,
        apply: impl Fn(&ImageU8) -> ImageU8 + Send + Sync + 'static,
    ) -> Result<Self, CorrectorError> {
        let name = name.into();
        let mut targets: Vec<_> = targets.into_iter().collect();
        targets.sort();
        targets.dedup();
        if targets.is_empty() || targets.contains(&DistortionKind::Clean) {
            return Err(CorrectorError::InvalidTargets(name));
        }
        Ok(Self {
            name,
            targets,
            apply: Arc::new(apply),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn targets(&self) -> &[DistortionKind] {
        &self.targets
    }

    pub fn addresses(&self, kind: DistortionKind) -> bool {
        self.targets.contains(&kind)
    }

    pub fn apply(&self, img: &ImageU8) -> ImageU8 {
        (self.apply)(img)
    }
}

impl fmt::Debug for CorrectionAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CorrectionAlgorithm")
            .field("name", &self.name)
            .field("targets", &self.targets)
            .finish()
    }
}

/// Power-law corrector. Exponents below one brighten (fixing underexposure),
/// above one darken (fixing overexposure).
pub fn gamma_corrector(gamma: f64) -> Result<CorrectionAlgorithm, CorrectorError> {
    let target = match classify_gamma(gamma) {
        Ok(DistortionKind::Underexposed) => DistortionKind::Overexposed,
        Ok(_) => DistortionKind::Underexposed,
        Err(_) => return Err(CorrectorError::InvalidParameter(format!("gamma {gamma}"))),
    };
    let lut = gamma_lut(gamma, 1.0);
    CorrectionAlgorithm::new(format!("gamma_{gamma:?}"), [target], move |img| {
        img.map(|v| lut[v as usize])
    })
}

/// Normalized 1-D Gaussian taps with half-width `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let half = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter().map(|t| (t / total) as f32).collect()
}

/// Mirror index without repeating the edge sample (`d c b | a b c d | c b a`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(img: &ImageU8, sigma: f64) -> ImageU8 {
    let kernel = gaussian_kernel(sigma);
    let half = (kernel.len() / 2) as isize;
    let (h, w, c) = img.dims();
    let src: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
    let mut tmp = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0f32;
                for (k, &wt) in kernel.iter().enumerate() {
                    let xx = reflect(x as isize + k as isize - half, w);
                    acc += wt * src[(y * w + xx) * c + ch];
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0f32;
                for (k, &wt) in kernel.iter().enumerate() {
                    let yy = reflect(y as isize + k as isize - half, h);
                    acc += wt * tmp[(yy * w + x) * c + ch];
                }
                out[(y * w + x) * c + ch] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageU8::new(h, w, c, out).expect("blur preserves geometry")
}

pub fn gaussian_blur_denoiser(radius_sigma: f64) -> Result<CorrectionAlgorithm, CorrectorError> {
    if !(radius_sigma > 0.0 && radius_sigma.is_finite()) {
        return Err(CorrectorError::InvalidParameter(format!("blur sigma {radius_sigma}")));
    }
    CorrectionAlgorithm::new(
        format!("blur_{radius_sigma:?}"),
        [DistortionKind::NoiseLow, DistortionKind::NoiseHigh],
        move |img| gaussian_blur(img, radius_sigma),
    )
}

/// Per-channel sliding-window median with reflect padding.
pub fn median_filter(img: &ImageU8, window: usize) -> ImageU8 {
    let half = (window / 2) as isize;
    let (h, w, c) = img.dims();
    let mut out = vec![0u8; img.data().len()];
    let mut buf = Vec::with_capacity(window * window);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                buf.clear();
                for dy in -half..=half {
                    let yy = reflect(y as isize + dy, h);
                    for dx in -half..=half {
                        let xx = reflect(x as isize + dx, w);
                        buf.push(img.get(yy, xx, ch));
                    }
                }
                let mid = buf.len() / 2;
                out[(y * w + x) * c + ch] = *buf.select_nth_unstable(mid).1;
            }
        }
    }
    ImageU8::new(h, w, c, out).expect("median preserves geometry")
}

pub fn median_denoiser(window: usize) -> Result<CorrectionAlgorithm, CorrectorError> {
    if !matches!(window, 3 | 5) {
        return Err(CorrectorError::InvalidParameter(format!("median window {window}")));
    }
    CorrectionAlgorithm::new(
        format!("median_{window}"),
        [DistortionKind::NoiseLow, DistortionKind::NoiseHigh],
        move |img| median_filter(img, window),
    )
}

/// Builds a built-in corrector from its name: `gamma_<g>`, `blur_<sigma>` or
/// `median_<window>`.
pub fn corrector_by_name(name: &str) -> Result<CorrectionAlgorithm, CorrectorError> {
    let unknown = || CorrectorError::UnknownName(name.to_string());
    let (family, arg) = name.trim().split_once('_').ok_or_else(unknown)?;
    match family {
        "gamma" => gamma_corrector(arg.parse().map_err(|_| unknown())?),
        "blur" => gaussian_blur_denoiser(arg.parse().map_err(|_| unknown())?),
        "median" => median_denoiser(arg.parse().map_err(|_| unknown())?),
        _ => Err(unknown()),
    }
}

/// Names of the default pool, in registration order.
pub const DEFAULT_POOL: [&str; 8] = [
    "gamma_0.33",
    "gamma_0.5",
    "gamma_1.25",
    "gamma_5.0",
    "blur_0.8",
    "blur_1.5",
    "median_3",
    "median_5",
];

/// Ordered registry of correction algorithms. Registration order breaks
/// selection ties.
#[derive(Clone, Debug, Default)]
pub struct AlgorithmPool {
    algorithms: Vec<CorrectionAlgorithm>,
}

impl AlgorithmPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, alg: CorrectionAlgorithm) -> Result<(), CorrectorError> {
        if self.get(alg.name()).is_some() {
            return Err(CorrectorError::DuplicateName(alg.name.clone()));
        }
        self.algorithms.push(alg);
        Ok(())
    }

    pub fn with(mut self, alg: CorrectionAlgorithm) -> Result<Self, CorrectorError> {
        self.register(alg)?;
        Ok(self)
    }

    /// Builds a pool from built-in names (comma separated or as a list).
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self, CorrectorError> {
        let mut pool = Self::new();
        for n in names {
            let n = n.trim();
            if !n.is_empty() {
                pool.register(corrector_by_name(n)?)?;
            }
        }
        Ok(pool)
    }

    pub fn parse_list(list: &str) -> Result<Self, CorrectorError> {
        Self::from_names(list.split(','))
    }

    pub fn default_pool() -> Self {
        Self::from_names(DEFAULT_POOL).expect("default pool is valid")
    }

    pub fn len(&self) -> usize {
        self.algorithms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.algorithms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CorrectionAlgorithm> {
        self.algorithms.iter()
    }

    pub fn get(&self, name: &str) -> Option<&CorrectionAlgorithm> {
        self.algorithms.iter().find(|a| a.name == name)
    }

    /// Every algorithm addressing `kind`, in registration order.
    pub fn candidates_for(&self, kind: DistortionKind) -> Result<Vec<&CorrectionAlgorithm>, CorrectorError> {
        if kind == DistortionKind::Clean {
            return Err(CorrectorError::CleanHasNoCandidates);
        }
        Ok(self.algorithms.iter().filter(|a| a.addresses(kind)).collect())
    }

    /// Checks that each distortion kind has at least two candidates.
    pub fn check_coverage(&self) -> Result<(), CorrectorError> {
        for kind in DistortionKind::DISTORTED {
            let count = self.candidates_for(kind)?.len();
            if count < 2 {
                return Err(CorrectorError::InsufficientCoverage { kind, count });
            }
        }
        Ok(())
    }
}
