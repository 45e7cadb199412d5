//! Sparse feature fusion: a sigmoid gate over each prompt token with an
//! L1 penalty on the first-layer weights, followed by concatenation with
//! the per-class inherent prompts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoder::xavier;
use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Gating network parameters: token_dim -> hidden -> token_dim, with an L1
/// weight on the first layer only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseGate {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub lambda: f64,
    pub token_dim: usize,
    pub hidden: usize,
}

impl SparseGate {
    pub fn build(
        store: &mut ParamStore,
        token_dim: usize,
        hidden: usize,
        lambda: f64,
        seed: u64,
    ) -> Result<SparseGate> {
        if lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Ok(SparseGate {
            w1: store.add("gate.w1", xavier(token_dim, hidden, &mut rng)),
            b1: store.add("gate.b1", Tensor::zeros(1, hidden)),
            w2: store.add("gate.w2", xavier(hidden, token_dim, &mut rng)),
            b2: store.add("gate.b2", Tensor::zeros(1, token_dim)),
            lambda,
            token_dim,
            hidden,
        })
    }

    /// Gate one L_p x D value matrix: every token row x becomes
    /// x * sigmoid(relu(x W1 + b1) W2 + b2), elementwise.
    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, tokens: NodeId) -> Result<NodeId> {
        if tape.value(tokens).cols() != self.token_dim {
            return Err(Error::dimension(
                "sparse gate input",
                tape.value(tokens).shape_str(),
                format!("?x{}", self.token_dim),
            ));
        }
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let h = tape.matmul(tokens, w1)?;
        let h = tape.add_row_broadcast(h, b1)?;
        let h = tape.relu(h);
        let logits = tape.matmul(h, w2)?;
        let logits = tape.add_row_broadcast(logits, b2)?;
        let gate = tape.sigmoid(logits);
        tape.mul(tokens, gate)
    }

    /// Gate each of the selected value matrices in order.
    pub fn apply_all(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        selected: &[NodeId],
    ) -> Result<Vec<NodeId>> {
        selected
            .iter()
            .map(|&v| self.apply(tape, store, v))
            .collect()
    }

    /// lambda * sum(|W1|) as a scalar node; zero contributes zero gradient.
    pub fn l1_penalty(&self, tape: &mut Tape, store: &ParamStore) -> NodeId {
        let w1 = tape.param(store, self.w1);
        let s = tape.abs_sum(w1);
        tape.scale(s, self.lambda)
    }

    /// Count of first-layer weights with |w| above a threshold; the
    /// sparsity measure reported in ablations.
    pub fn dense_weight_count(&self, store: &ParamStore, threshold: f64) -> usize {
        store
            .value(self.w1)
            .data()
            .iter()
            .filter(|w| w.abs() > threshold)
            .count()
    }
}

/// Per-class trainable token matrices, always concatenated after the gated
/// pool selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InherentPrompts {
    pub per_class: Vec<ParamId>,
    pub inherent_len: usize,
    pub token_dim: usize,
}

impl InherentPrompts {
    pub fn build(
        store: &mut ParamStore,
        num_classes: usize,
        inherent_len: usize,
        token_dim: usize,
        seed: u64,
    ) -> InherentPrompts {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let per_class = (0..num_classes)
            .map(|c| {
                let data: Vec<f64> = (0..inherent_len * token_dim)
                    .map(|_| {
                        0.02 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                    })
                    .collect();
                store.add(
                    format!("inherent.class{c}"),
                    Tensor::from_vec(inherent_len, token_dim, data).expect("consistent dims"),
                )
            })
            .collect();
        InherentPrompts {
            per_class,
            inherent_len,
            token_dim,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }
}

/// Row-wise concatenation of the gated prompt matrices (selection order)
/// followed by the class's inherent prompt.
pub fn combine(
    tape: &mut Tape,
    store: &ParamStore,
    gated: &[NodeId],
    inherent: &InherentPrompts,
    class: usize,
) -> Result<NodeId> {
    if class >= inherent.num_classes() {
        return Err(Error::Contract(format!(
            "class {class} out of range for {} classes",
            inherent.num_classes()
        )));
    }
    let inherent_node = tape.param(store, inherent.per_class[class]);
    for &g in gated {
        if tape.value(g).cols() != inherent.token_dim {
            return Err(Error::dimension(
                "combine",
                tape.value(g).shape_str(),
                format!("?x{}", inherent.token_dim),
            ));
        }
    }
    let mut parts: Vec<NodeId> = gated.to_vec();
    parts.push(inherent_node);
    tape.concat_rows(&parts)
}
