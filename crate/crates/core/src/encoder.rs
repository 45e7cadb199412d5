//! Per-modality feature encoders with deliberately imbalanced parameter
//! budgets. Visual gets the largest share by default, mirroring the
//! dominance of facial signal over tone of voice over words.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// The three input channels, in the fixed order used everywhere
/// (presence triples, mask rows/columns, pattern strings).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Visual,
    Audio,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Audio, Modality::Text];

    pub fn index(self) -> usize {
        match self {
            Modality::Visual => 0,
            Modality::Audio => 1,
            Modality::Text => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }
}

/// One example: optional per-modality feature vectors plus a class label.
/// Presence is derived from which vectors are set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModalitySample {
    pub visual: Option<Vec<f64>>,
    pub audio: Option<Vec<f64>>,
    pub text: Option<Vec<f64>>,
    pub label: usize,
}

impl ModalitySample {
    pub fn presence(&self) -> [bool; 3] {
        [
            self.visual.is_some(),
            self.audio.is_some(),
            self.text.is_some(),
        ]
    }

    pub fn vector(&self, m: Modality) -> Option<&[f64]> {
        match m {
            Modality::Visual => self.visual.as_deref(),
            Modality::Audio => self.audio.as_deref(),
            Modality::Text => self.text.as_deref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.presence().iter().all(|p| !p) {
            return Err(Error::Degenerate(
                "sample with no modality present".into(),
            ));
        }
        Ok(())
    }

    /// Restrict to a presence pattern (AND with the sample's own presence).
    pub fn with_pattern(&self, pattern: [bool; 3]) -> ModalitySample {
        ModalitySample {
            visual: if pattern[0] { self.visual.clone() } else { None },
            audio: if pattern[1] { self.audio.clone() } else { None },
            text: if pattern[2] { self.text.clone() } else { None },
            label: self.label,
        }
    }
}

/// Two-hidden-layer MLP: d_in -> h -> h -> d_out.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub w3: ParamId,
    pub b3: ParamId,
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
}

impl Mlp {
    pub fn build(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        d_out: usize,
        rng: &mut ChaCha20Rng,
    ) -> Mlp {
        // small positive hidden biases keep relu units alive at init; a
        // small random output bias keeps the token off exact zero even for
        // inputs that silence both hidden layers (cosine needs a direction)
        let w1 = store.add(format!("{prefix}.w1"), xavier(d_in, hidden, rng));
        let b1 = store.add(format!("{prefix}.b1"), constant_row(hidden, 0.01));
        let w2 = store.add(format!("{prefix}.w2"), xavier(hidden, hidden, rng));
        let b2 = store.add(format!("{prefix}.b2"), constant_row(hidden, 0.01));
        let w3 = store.add(format!("{prefix}.w3"), xavier(hidden, d_out, rng));
        let b3 = store.add(format!("{prefix}.b3"), uniform_row(d_out, 0.01, rng));
        Mlp {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            d_in,
            hidden,
            d_out,
        }
    }

    pub fn param_count(&self) -> usize {
        self.d_in * self.hidden
            + self.hidden
            + self.hidden * self.hidden
            + self.hidden
            + self.hidden * self.d_out
            + self.d_out
    }

    /// Forward a 1 x d_in row node through the network.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let w3 = tape.param(store, self.w3);
        let b3 = tape.param(store, self.b3);
        let h1 = tape.matmul(x, w1)?;
        let h1 = tape.add(h1, b1)?;
        let h1 = tape.relu(h1);
        let h2 = tape.matmul(h1, w2)?;
        let h2 = tape.add(h2, b2)?;
        let h2 = tape.relu(h2);
        let out = tape.matmul(h2, w3)?;
        tape.add(out, b3)
    }
}

fn constant_row(cols: usize, v: f64) -> Tensor {
    Tensor::row_vector(vec![v; cols])
}

fn uniform_row(cols: usize, bound: f64, rng: &mut ChaCha20Rng) -> Tensor {
    Tensor::row_vector((0..cols).map(|_| rng.gen_range(-bound..bound)).collect())
}

/// Uniform Xavier/Glorot init in +-sqrt(6/(fan_in+fan_out)).
pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha20Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::from_vec(fan_in, fan_out, data).expect("consistent dims")
}

/// The three encoders plus the budget they were built to satisfy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderStack {
    pub visual: Mlp,
    pub audio: Mlp,
    pub text: Mlp,
    pub feature_dim: usize,
    pub budget: [f64; 3],
}

impl EncoderStack {
    /// Build encoders whose per-modality parameter counts approximate
    /// `budget` fractions of `total_params`, by solving for the hidden
    /// width of each two-hidden-layer MLP.
    pub fn build(
        store: &mut ParamStore,
        d_v: usize,
        d_a: usize,
        d_t: usize,
        feature_dim: usize,
        budget: [f64; 3],
        total_params: usize,
        seed: u64,
    ) -> Result<EncoderStack> {
        if budget.iter().any(|b| *b <= 0.0) {
            return Err(Error::Config("budget entries must be positive".into()));
        }
        let sum: f64 = budget.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "budget must sum to 1 (got {sum})"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let dims = [d_v, d_a, d_t];
        let mut mlps = Vec::with_capacity(3);
        for (i, m) in Modality::ALL.iter().enumerate() {
            let target = budget[i] * total_params as f64;
            let hidden = solve_hidden(dims[i], feature_dim, target);
            mlps.push(Mlp::build(
                store,
                &format!("encoder.{}", m.name()),
                dims[i],
                hidden,
                feature_dim,
                &mut rng,
            ));
        }
        let text = mlps.pop().unwrap();
        let audio = mlps.pop().unwrap();
        let visual = mlps.pop().unwrap();
        Ok(EncoderStack {
            visual,
            audio,
            text,
            feature_dim,
            budget,
        })
    }

    pub fn for_modality(&self, m: Modality) -> &Mlp {
        match m {
            Modality::Visual => &self.visual,
            Modality::Audio => &self.audio,
            Modality::Text => &self.text,
        }
    }

    pub fn param_counts(&self) -> [usize; 3] {
        [
            self.visual.param_count(),
            self.audio.param_count(),
            self.text.param_count(),
        ]
    }

    /// Encode a sample into three 1xF token nodes. Absent modalities yield
    /// an all-zero constant placeholder; the fusion mask makes the content
    /// irrelevant downstream.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &ModalitySample,
    ) -> Result<[NodeId; 3]> {
        sample.validate()?;
        let mut tokens = Vec::with_capacity(3);
        for m in Modality::ALL {
            match sample.vector(m) {
                Some(v) => {
                    let mlp = self.for_modality(m);
                    if v.len() != mlp.d_in {
                        return Err(Error::Config(format!(
                            "{} input width {} does not match encoder width {}",
                            m.name(),
                            v.len(),
                            mlp.d_in
                        )));
                    }
                    let x = tape.constant(Tensor::row_vector(v.to_vec()));
                    tokens.push(mlp.forward(tape, store, x)?);
                }
                None => {
                    tokens.push(tape.constant(Tensor::zeros(1, self.feature_dim)));
                }
            }
        }
        Ok([tokens[0], tokens[1], tokens[2]])
    }
}

/// Hidden width whose parameter count h^2 + h(d_in + d_out + 2) + d_out is
/// closest to `target`.
fn solve_hidden(d_in: usize, d_out: usize, target: f64) -> usize {
    let b = (d_in + d_out + 2) as f64;
    let c = d_out as f64 - target;
    let root = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
    let lo = root.floor().max(1.0) as usize;
    let count = |h: usize| (h * h + h * (d_in + d_out + 2) + d_out) as f64;
    let mut best = lo;
    for cand in [lo, lo + 1] {
        if (count(cand) - target).abs() < (count(best) - target).abs() {
            best = cand;
        }
    }
    best
}
