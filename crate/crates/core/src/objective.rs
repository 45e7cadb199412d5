//! Contrastive matching of the fused embedding against per-class combined
//! prompts: temperature-scaled cosine scores, softmax cross-class loss, and
//! the total cost with the L1 and key-alignment terms.

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::xavier;
use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::{ParamId, ParamStore};

/// Prompt aggregator: mean over the rows of an RxD prompt matrix, then a
/// trainable linear map D -> F.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptEncoder {
    pub linear: ParamId,
    pub token_dim: usize,
    pub feature_dim: usize,
}

impl PromptEncoder {
    pub fn build(
        store: &mut ParamStore,
        token_dim: usize,
        feature_dim: usize,
        rng: &mut ChaCha20Rng,
    ) -> PromptEncoder {
        PromptEncoder {
            linear: store.add("prompt_encoder.linear", xavier(token_dim, feature_dim, rng)),
            token_dim,
            feature_dim,
        }
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, prompts: NodeId) -> Result<NodeId> {
        if tape.value(prompts).cols() != self.token_dim {
            return Err(Error::dimension(
                "prompt encoding",
                tape.value(prompts).shape_str(),
                format!("?x{}", self.token_dim),
            ));
        }
        let pooled = tape.mean_all_rows(prompts)?;
        let w = tape.param(store, self.linear);
        tape.matmul(pooled, w)
    }
}

/// Per-class temperature-scaled similarity scores, kept on the tape so the
/// loss stays differentiable.
pub struct ClassScores {
    /// 1xC row node of s_c = cos(F_fusion, E_p(P_combined[c])) / tau.
    pub node: NodeId,
    pub values: Vec<f64>,
}

impl ClassScores {
    /// Argmax with ties broken by lowest class index.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (c, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = c;
            }
        }
        best
    }
}

/// Score every class's combined prompt against the fused embedding.
pub fn class_scores(
    tape: &mut Tape,
    store: &ParamStore,
    fusion: NodeId,
    combined: &[NodeId],
    encoder: &PromptEncoder,
    tau: f64,
) -> Result<ClassScores> {
    if tau <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let mut scalars = Vec::with_capacity(combined.len());
    for &prompts in combined {
        let encoded = encoder.encode(tape, store, prompts)?;
        let cos = tape.cosine(fusion, encoded)?;
        scalars.push(tape.scale(cos, 1.0 / tau));
    }
    let node = tape.concat_scalars(&scalars)?;
    let values = tape.value(node).data().to_vec();
    Ok(ClassScores { node, values })
}

/// -log(exp(s_label) / sum_j exp(s_j)), i.e. logsumexp(s) - s_label.
pub fn contrastive_loss(tape: &mut Tape, scores: &ClassScores, label: usize) -> Result<NodeId> {
    if label >= scores.values.len() {
        return Err(Error::Contract(format!(
            "label {label} out of range for {} classes",
            scores.values.len()
        )));
    }
    let lse = tape.logsumexp(scores.node)?;
    let picked = tape.pick(scores.node, label)?;
    let neg = tape.neg(picked);
    tape.add(lse, neg)
}

/// L = L_contrast + l1_penalty + beta * key_align.
pub fn total_loss(
    tape: &mut Tape,
    contrastive: NodeId,
    l1_penalty: NodeId,
    key_align: Option<NodeId>,
    beta: f64,
) -> Result<NodeId> {
    if beta < 0.0 {
        return Err(Error::Config("beta must be nonnegative".into()));
    }
    let mut loss = tape.add(contrastive, l1_penalty)?;
    if let Some(align) = key_align {
        let scaled = tape.scale(align, beta);
        loss = tape.add(loss, scaled)?;
    }
    Ok(loss)
}
