//! Synthetic multimodal classification data and its on-disk layout.
//!
//! Each class owns one unit-length mean direction per channel; a sample is
//! `info * mean + sigma * noise`, where `info` is the per-channel
//! informativeness. A channel with informativeness 0 is pure noise. All
//! channels are generated for every sample; missingness is applied later,
//! at training or evaluation time.
//!
//! On disk a dataset is a directory of little-endian binary matrices
//! (u64 rows, u64 cols header, then row-major f64 payload), u32 label files,
//! and a `manifest.json` carrying shapes and sha256 checksums.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex_string;
use crate::encoder::ModalitySample;
use crate::error::{Error, Result};

fn default_num_classes() -> usize {
    7
}
fn default_n_train() -> usize {
    2000
}
fn default_n_val() -> usize {
    0
}
fn default_n_test() -> usize {
    500
}
fn default_d_v() -> usize {
    16
}
fn default_d_a() -> usize {
    8
}
fn default_d_t() -> usize {
    12
}
fn default_informativeness() -> [f64; 3] {
    [0.9, 0.2, 0.6]
}
fn default_noise_sigma() -> f64 {
    0.15
}
fn default_seed() -> u64 {
    7
}

/// Generation recipe; serializable so a dataset is reproducible from its spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_d_v")]
    pub d_v: usize,
    #[serde(default = "default_d_a")]
    pub d_a: usize,
    #[serde(default = "default_d_t")]
    pub d_t: usize,
    /// Per-channel signal strength, order (visual, audio, text).
    #[serde(default = "default_informativeness")]
    pub informativeness: [f64; 3],
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> SynthSpec {
        SynthSpec {
            num_classes: default_num_classes(),
            n_train: default_n_train(),
            n_val: default_n_val(),
            n_test: default_n_test(),
            d_v: default_d_v(),
            d_a: default_d_a(),
            d_t: default_d_t(),
            informativeness: default_informativeness(),
            noise_sigma: default_noise_sigma(),
            seed: default_seed(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config(
                "train and test splits must be non-empty".into(),
            ));
        }
        if self.d_v == 0 || self.d_a == 0 || self.d_t == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.informativeness.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Config(
                "informativeness must be finite and non-negative".into(),
            ));
        }
        if self.noise_sigma <= 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::Config("noise_sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<SynthSpec> {
        let spec: SynthSpec = toml::from_str(text)
            .map_err(|e| Error::Config(format!("bad data spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// An in-memory dataset with every channel populated on every sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<ModalitySample>,
    pub val: Vec<ModalitySample>,
    pub test: Vec<ModalitySample>,
    /// (d_v, d_a, d_t)
    pub dims: [usize; 3],
    pub num_classes: usize,
}

fn unit_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn sample_channel(
    mean: &[f64],
    info: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("valid normal");
    mean.iter().map(|m| info * m + normal.sample(rng)).collect()
}

/// Class means per channel; exposed so tests can build a centroid oracle.
pub struct ClassMeans {
    pub visual: Vec<Vec<f64>>,
    pub audio: Vec<Vec<f64>>,
    pub text: Vec<Vec<f64>>,
}

pub fn class_means(spec: &SynthSpec) -> ClassMeans {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut visual = Vec::with_capacity(spec.num_classes);
    let mut audio = Vec::with_capacity(spec.num_classes);
    let mut text = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        visual.push(unit_direction(spec.d_v, &mut rng));
        audio.push(unit_direction(spec.d_a, &mut rng));
        text.push(unit_direction(spec.d_t, &mut rng));
    }
    ClassMeans {
        visual,
        audio,
        text,
    }
}

fn generate_split(
    spec: &SynthSpec,
    means: &ClassMeans,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<ModalitySample> {
    let [iv, ia, it] = spec.informativeness;
    (0..n)
        .map(|_| {
            let label = rng.gen_range(0..spec.num_classes);
            ModalitySample {
                visual: Some(sample_channel(
                    &means.visual[label],
                    iv,
                    spec.noise_sigma,
                    rng,
                )),
                audio: Some(sample_channel(
                    &means.audio[label],
                    ia,
                    spec.noise_sigma,
                    rng,
                )),
                text: Some(sample_channel(
                    &means.text[label],
                    it,
                    spec.noise_sigma,
                    rng,
                )),
                label,
            }
        })
        .collect()
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let means = class_means(spec);
    // one stream for samples, offset from the mean stream so adding splits
    // never perturbs the class geometry
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let train = generate_split(spec, &means, spec.n_train, &mut rng);
    let val = generate_split(spec, &means, spec.n_val, &mut rng);
    let test = generate_split(spec, &means, spec.n_test, &mut rng);
    Ok(Dataset {
        train,
        val,
        test,
        dims: [spec.d_v, spec.d_a, spec.d_t],
        num_classes: spec.num_classes,
    })
}

// --- binary layout -------------------------------------------------------

fn encode_matrix(rows: usize, cols: usize, data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.len() * 8);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_matrix(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 16 {
        return Err(Error::Contract("matrix file shorter than header".into()));
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = 16 + rows * cols * 8;
    if bytes.len() != expected {
        return Err(Error::Contract(format!(
            "matrix file is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}

fn encode_labels(labels: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len() * 4);
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

fn decode_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    if bytes.len() < 8 {
        return Err(Error::Contract("label file shorter than header".into()));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + n * 4 {
        return Err(Error::Contract("label file length mismatch".into()));
    }
    Ok(bytes[8..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    num_classes: usize,
    dims: [usize; 3],
    /// file name -> sha256 of its bytes
    checksums: BTreeMap<String, String>,
}

const SPLITS: [&str; 3] = ["train", "val", "test"];
const CHANNELS: [&str; 3] = ["visual", "audio", "text"];

fn split_channel_data(
    samples: &[ModalitySample],
    channel: usize,
    dim: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len() * dim);
    for s in samples {
        let v = match channel {
            0 => s.visual.as_ref(),
            1 => s.audio.as_ref(),
            _ => s.text.as_ref(),
        }
        .expect("generated samples carry every channel");
        out.extend_from_slice(v);
    }
    out
}

pub fn save(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut checksums = BTreeMap::new();
    for (split_name, samples) in SPLITS
        .iter()
        .zip([&dataset.train, &dataset.val, &dataset.test])
    {
        for (ci, channel) in CHANNELS.iter().enumerate() {
            let data = split_channel_data(samples, ci, dataset.dims[ci]);
            let bytes = encode_matrix(samples.len(), dataset.dims[ci], &data);
            let name = format!("{split_name}_{channel}.bin");
            checksums.insert(name.clone(), sha256_hex(&bytes));
            fs::write(dir.join(name), bytes)?;
        }
        let labels: Vec<u32> = samples.iter().map(|s| s.label as u32).collect();
        let bytes = encode_labels(&labels);
        let name = format!("{split_name}_labels.bin");
        checksums.insert(name.clone(), sha256_hex(&bytes));
        fs::write(dir.join(name), bytes)?;
    }
    let manifest = Manifest {
        num_classes: dataset.num_classes,
        dims: dataset.dims,
        checksums,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

fn load_split(dir: &Path, split: &str, manifest: &Manifest) -> Result<Vec<ModalitySample>> {
    let mut channels: Vec<Vec<f64>> = Vec::new();
    let mut rows = None;
    for (ci, channel) in CHANNELS.iter().enumerate() {
        let name = format!("{split}_{channel}.bin");
        let bytes = fs::read(dir.join(&name))?;
        let expected = manifest
            .checksums
            .get(&name)
            .ok_or_else(|| Error::Checksum(format!("{name} missing from manifest")))?;
        if sha256_hex(&bytes) != *expected {
            return Err(Error::Checksum(format!("{name} does not match manifest")));
        }
        let (r, c, data) = decode_matrix(&bytes)?;
        if c != manifest.dims[ci] {
            return Err(Error::dimension(name, manifest.dims[ci], c));
        }
        match rows {
            None => rows = Some(r),
            Some(prev) if prev != r => {
                return Err(Error::dimension(format!("{split} rows"), prev, r))
            }
            _ => {}
        }
        channels.push(data);
    }
    let name = format!("{split}_labels.bin");
    let bytes = fs::read(dir.join(&name))?;
    let expected = manifest
        .checksums
        .get(&name)
        .ok_or_else(|| Error::Checksum(format!("{name} missing from manifest")))?;
    if sha256_hex(&bytes) != *expected {
        return Err(Error::Checksum(format!("{name} does not match manifest")));
    }
    let labels = decode_labels(&bytes)?;
    let rows = rows.unwrap_or(0);
    if labels.len() != rows {
        return Err(Error::dimension(format!("{split} labels"), rows, labels.len()));
    }
    let [dv, da, dt] = manifest.dims;
    Ok((0..rows)
        .map(|i| ModalitySample {
            visual: Some(channels[0][i * dv..(i + 1) * dv].to_vec()),
            audio: Some(channels[1][i * da..(i + 1) * da].to_vec()),
            text: Some(channels[2][i * dt..(i + 1) * dt].to_vec()),
            label: labels[i] as usize,
        })
        .collect())
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let train = load_split(dir, "train", &manifest)?;
    let val = load_split(dir, "val", &manifest)?;
    let test = load_split(dir, "test", &manifest)?;
    for s in train.iter().chain(&val).chain(&test) {
        if s.label >= manifest.num_classes {
            return Err(Error::Contract(format!(
                "label {} out of range for {} classes",
                s.label, manifest.num_classes
            )));
        }
    }
    Ok(Dataset {
        train,
        val,
        test,
        dims: manifest.dims,
        num_classes: manifest.num_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            num_classes: 4,
            n_train: 120,
            n_val: 20,
            n_test: 60,
            d_v: 6,
            d_a: 5,
            d_t: 4,
            seed: 11,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.visual, y.visual);
            assert_eq!(x.audio, y.audio);
            assert_eq!(x.text, y.text);
        }
    }

    #[test]
    fn every_class_appears_in_train() {
        let data = generate(&small_spec()).unwrap();
        let mut seen = vec![false; 4];
        for s in &data.train {
            seen[s.label] = true;
        }
        assert!(seen.iter().all(|b| *b));
    }

    /// Nearest-centroid classifier on the concatenated channels must do
    /// far better than chance on informative data.
    #[test]
    fn centroid_oracle_separates_classes() {
        let spec = SynthSpec {
            num_classes: 7,
            n_train: 400,
            n_test: 200,
            ..SynthSpec::default()
        };
        let data = generate(&spec).unwrap();
        let means = class_means(&spec);
        let mut correct = 0;
        for s in &data.test {
            let mut best = (f64::INFINITY, 0usize);
            for c in 0..spec.num_classes {
                let mut d = 0.0;
                let [iv, ia, it] = spec.informativeness;
                for (x, m) in s.visual.as_ref().unwrap().iter().zip(&means.visual[c]) {
                    d += (x - iv * m).powi(2);
                }
                for (x, m) in s.audio.as_ref().unwrap().iter().zip(&means.audio[c]) {
                    d += (x - ia * m).powi(2);
                }
                for (x, m) in s.text.as_ref().unwrap().iter().zip(&means.text[c]) {
                    d += (x - it * m).powi(2);
                }
                if d < best.0 {
                    best = (d, c);
                }
            }
            if best.1 == s.label {
                correct += 1;
            }
        }
        let acc = correct as f64 / data.test.len() as f64;
        assert!(acc > 0.95, "centroid accuracy {acc}");
    }

    #[test]
    fn uninformative_channel_is_pure_noise() {
        let spec = SynthSpec {
            informativeness: [0.9, 0.0, 0.6],
            n_train: 300,
            n_test: 10,
            ..small_spec()
        };
        let data = generate(&spec).unwrap();
        // audio means per class should all sit near zero
        let mut per_class = vec![(vec![0.0; spec.d_a], 0usize); spec.num_classes];
        for s in &data.train {
            let (acc, n) = &mut per_class[s.label];
            for (a, x) in acc.iter_mut().zip(s.audio.as_ref().unwrap()) {
                *a += x;
            }
            *n += 1;
        }
        for (acc, n) in per_class {
            let mean_norm = acc
                .iter()
                .map(|a| (a / n as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(mean_norm < 0.2, "class audio mean norm {mean_norm}");
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&small_spec()).unwrap();
        save(&data, dir.path()).unwrap();
        let loaded = load(dir.path()).unwrap();
        assert_eq!(loaded.num_classes, data.num_classes);
        assert_eq!(loaded.dims, data.dims);
        for (a, b) in data.train.iter().zip(&loaded.train) {
            assert_eq!(a.label, b.label);
            // bit-exact, not approximate
            for (x, y) in a
                .visual
                .as_ref()
                .unwrap()
                .iter()
                .zip(b.visual.as_ref().unwrap())
            {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(data.val.len(), loaded.val.len());
        assert_eq!(data.test.len(), loaded.test.len());
    }

    #[test]
    fn corrupted_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&small_spec()).unwrap();
        save(&data, dir.path()).unwrap();
        let path = dir.path().join("train_visual.bin");
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        fs::write(&path, bytes).unwrap();
        match load(dir.path()) {
            Err(Error::Checksum(_)) => {}
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn matrix_codec_roundtrip() {
        let data = vec![1.5, -2.25, 0.0, f64::MIN_POSITIVE, 1e300, -0.125];
        let bytes = encode_matrix(2, 3, &data);
        let (r, c, back) = decode_matrix(&bytes).unwrap();
        assert_eq!((r, c), (2, 3));
        assert_eq!(back, data);
    }

    #[test]
    fn truncated_matrix_rejected() {
        let bytes = encode_matrix(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(decode_matrix(&bytes[..bytes.len() - 4]).is_err());
        assert!(decode_matrix(&bytes[..8]).is_err());
    }
}
