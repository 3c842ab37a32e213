use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_sequence_with_mean, latest_label, DistortionError, DistortionKind, DistortionSpec};
use crate::imaging::{load_image, resize_bilinear, save_image, ImageU8};
use crate::seeding::{derive_seed, stream};

/// Parameter sets and bookkeeping for synthesizing a labeled dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Exponents above one (darkening).
    pub gammas_dark: Vec<f64>,
    /// Exponents below one (brightening).
    pub gammas_bright: Vec<f64>,
    pub sigmas_low: Vec<f64>,
    pub sigmas_high: Vec<f64>,
    pub noise_mean: f64,
    pub seed: u64,
    /// Clean sources are resized to this square size before distortion.
    /// `None` keeps the native resolution.
    pub model_input_size: Option<usize>,
    /// Fraction of clean sources whose samples go to the test split.
    pub test_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            gammas_dark: vec![2.0, 3.0],
            gammas_bright: vec![0.2, 0.8],
            sigmas_low: vec![0.04, 0.08],
            sigmas_high: vec![0.15, 0.2],
            noise_mean: 0.0,
            seed: 42,
            model_input_size: Some(64),
            test_fraction: 0.2,
        }
    }
}

impl DatasetConfig {
    /// Held-out parameter values never used for training.
    pub fn test_variant() -> Self {
        Self {
            gammas_dark: vec![2.2, 3.2],
            gammas_bright: vec![0.3, 0.9],
            sigmas_low: vec![0.06, 0.1],
            sigmas_high: vec![0.17, 0.25],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DistortionError> {
        let bad = |msg: String| Err(DistortionError::InvalidConfig(msg));
        if let Some(g) = self.gammas_dark.iter().find(|&&g| !(g > 1.0 && g.is_finite())) {
            return bad(format!("dark gamma {g} must be > 1"));
        }
        if let Some(g) = self.gammas_bright.iter().find(|&&g| !(g > 0.0 && g < 1.0)) {
            return bad(format!("bright gamma {g} must lie in (0, 1)"));
        }
        let sigmas = self.sigmas_low.iter().chain(&self.sigmas_high);
        if let Some(s) = sigmas.clone().find(|&&s| !(s >= 0.0 && s.is_finite())) {
            return bad(format!("sigma {s} must be >= 0"));
        }
        let max_low = self.sigmas_low.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_high = self.sigmas_high.iter().cloned().fold(f64::INFINITY, f64::min);
        if max_low >= min_high {
            return bad(format!(
                "low sigmas must lie below high sigmas ({max_low} >= {min_high})"
            ));
        }
        if !self.noise_mean.is_finite() {
            return bad("noise mean must be finite".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test fraction {} must lie in [0, 1)", self.test_fraction));
        }
        if self.model_input_size == Some(0) {
            return bad("model input size must be positive".into());
        }
        Ok(())
    }

    fn exposure_specs(&self) -> Vec<DistortionSpec> {
        let dark = self.gammas_dark.iter().map(|&g| DistortionSpec {
            kind: DistortionKind::Underexposed,
            param: g,
        });
        let bright = self.gammas_bright.iter().map(|&g| DistortionSpec {
            kind: DistortionKind::Overexposed,
            param: g,
        });
        dark.chain(bright).collect()
    }

    fn noise_specs(&self) -> Vec<DistortionSpec> {
        let low = self.sigmas_low.iter().map(|&s| DistortionSpec {
            kind: DistortionKind::NoiseLow,
            param: s,
        });
        let high = self.sigmas_high.iter().map(|&s| DistortionSpec {
            kind: DistortionKind::NoiseHigh,
            param: s,
        });
        low.chain(high).collect()
    }

    /// Every sequence emitted per clean image: the empty sequence, each
    /// single event, then each exposure/noise pair in both orders.
    pub fn sequences(&self) -> Vec<Vec<DistortionSpec>> {
        let exposure = self.exposure_specs();
        let noise = self.noise_specs();
        let mut out = vec![vec![]];
        out.extend(exposure.iter().chain(&noise).map(|s| vec![*s]));
        for g in &exposure {
            for n in &noise {
                out.push(vec![*g, *n]);
                out.push(vec![*n, *g]);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub id: String,
    pub clean_path: PathBuf,
    pub distorted_path: PathBuf,
    pub sequence: Vec<DistortionSpec>,
    pub label: DistortionKind,
    pub split: Split,
    /// Seed of the sample's private noise stream.
    pub seed: u64,
}

fn sample_id(stem: &str, seq: &[DistortionSpec]) -> String {
    if seq.is_empty() {
        format!("{stem}__clean")
    } else {
        let tags: Vec<_> = seq.iter().map(DistortionSpec::tag).collect();
        format!("{stem}__{}", tags.join("+"))
    }
}

fn list_sources(clean_dir: &Path) -> Result<Vec<(String, PathBuf)>, DistortionError> {
    let entries = fs::read_dir(clean_dir).map_err(|e| DistortionError::io(clean_dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("img").to_string();
        if !seen.insert(stem.clone()) {
            return Err(DistortionError::DuplicateSource(stem));
        }
        out.push((stem, f));
    }
    Ok(out)
}

/// Synthesizes every configured distortion sequence for each clean image in
/// `clean_dir`, writing PNGs under `out_dir/clean` and `out_dir/images`.
/// Samples are returned grouped by source in file-name order.
pub fn generate_dataset(
    clean_dir: &Path,
    out_dir: &Path,
    config: &DatasetConfig,
) -> Result<Vec<SequenceSample>, DistortionError> {
    config.validate()?;
    let sources = list_sources(clean_dir)?;
    if sources.is_empty() {
        return Err(DistortionError::EmptySource(clean_dir.to_path_buf()));
    }
    let clean_out = out_dir.join("clean");
    let image_out = out_dir.join("images");
    for d in [&clean_out, &image_out] {
        fs::create_dir_all(d).map_err(|e| DistortionError::io(d, e))?;
    }

    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.shuffle(&mut stream(config.seed, "split"));
    let n_test = if sources.len() < 2 {
        0
    } else {
        ((sources.len() as f64 * config.test_fraction).round() as usize).min(sources.len() - 1)
    };
    let mut split = vec![Split::Train; sources.len()];
    for &i in &order[..n_test] {
        split[i] = Split::Test;
    }

    let sequences = config.sequences();
    let per_source: Vec<Vec<SequenceSample>> = sources
        .par_iter()
        .enumerate()
        .map(|(i, (stem, path))| {
            let mut clean = load_image(path)?;
            if let Some(s) = config.model_input_size {
                clean = resize_bilinear(&clean, s, s);
            }
            let clean_path = clean_out.join(format!("{stem}.png"));
            save_image(&clean, &clean_path)?;
            sequences
                .iter()
                .map(|seq| {
                    let id = sample_id(stem, seq);
                    let seed = derive_seed(config.seed, &id);
                    let mut rng = stream(seed, "noise");
                    let distorted = apply_sequence_with_mean(&clean, seq, config.noise_mean, &mut rng)?;
                    let distorted_path = image_out.join(format!("{id}.png"));
                    save_image(&distorted, &distorted_path)?;
                    Ok(SequenceSample {
                        label: latest_label(seq),
                        id,
                        clean_path: clean_path.clone(),
                        distorted_path,
                        sequence: seq.clone(),
                        split: split[i],
                        seed,
                    })
                })
                .collect()
        })
        .collect::<Result<_, DistortionError>>()?;
    Ok(per_source.into_iter().flatten().collect())
}

/// Loads the clean reference and the distorted image of a sample.
pub fn load_pair(sample: &SequenceSample) -> Result<(ImageU8, ImageU8), DistortionError> {
    Ok((load_image(&sample.clean_path)?, load_image(&sample.distorted_path)?))
}

pub fn write_manifest(path: &Path, samples: &[SequenceSample]) -> Result<(), DistortionError> {
    let file = fs::File::create(path).map_err(|e| DistortionError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let line = serde_json::to_string(s).expect("sample serializes");
        writeln!(w, "{line}").map_err(|e| DistortionError::io(path, e))?;
    }
    w.flush().map_err(|e| DistortionError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<SequenceSample>, DistortionError> {
    let file = fs::File::open(path).map_err(|e| DistortionError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DistortionError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: SequenceSample = serde_json::from_str(&line).map_err(|e| DistortionError::Manifest {
            path: path.to_path_buf(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}
