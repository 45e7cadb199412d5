//! Masked self-attention over the three modality tokens, producing the
//! fused embedding. Absent modalities are excluded in both directions:
//! nobody attends to them (column mask) and they are not pooled (row
//! exclusion), so placeholder content is provably inert.

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::xavier;
use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// 3x3 additive attention mask with entries in {0, -inf}, plus the row set
/// retained for pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalMask {
    matrix: Tensor,
    present_rows: Vec<usize>,
}

impl ModalMask {
    /// Column j is all -inf iff modality j is absent; rows of absent
    /// modalities are excluded from pooling.
    pub fn build(presence: [bool; 3]) -> Result<ModalMask> {
        if presence.iter().all(|p| !p) {
            return Err(Error::Degenerate("all modalities absent".into()));
        }
        let mut matrix = Tensor::zeros(3, 3);
        for j in 0..3 {
            if !presence[j] {
                for i in 0..3 {
                    matrix.set(i, j, f64::NEG_INFINITY);
                }
            }
        }
        let present_rows = (0..3).filter(|&i| presence[i]).collect();
        Ok(ModalMask {
            matrix,
            present_rows,
        })
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn present_rows(&self) -> &[usize] {
        &self.present_rows
    }

    pub fn presence(&self) -> [bool; 3] {
        let mut p = [false; 3];
        for &i in &self.present_rows {
            p[i] = true;
        }
        p
    }
}

/// Single-head attention projections. d_k equals the feature width.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub feature_dim: usize,
}

impl FusionParams {
    pub fn build(store: &mut ParamStore, feature_dim: usize, rng: &mut ChaCha20Rng) -> Self {
        FusionParams {
            w_q: store.add("fusion.w_q", xavier(feature_dim, feature_dim, rng)),
            w_k: store.add("fusion.w_k", xavier(feature_dim, feature_dim, rng)),
            w_v: store.add("fusion.w_v", xavier(feature_dim, feature_dim, rng)),
            feature_dim,
        }
    }
}

/// softmax((Q K^T + M) / sqrt(d_k)) V over the three modality tokens, then
/// mean-pool the present rows into a single 1xF embedding.
pub fn adaptive_fusion(
    tape: &mut Tape,
    store: &ParamStore,
    params: &FusionParams,
    tokens: [NodeId; 3],
    mask: &ModalMask,
) -> Result<NodeId> {
    let f = params.feature_dim;
    for t in tokens {
        if tape.value(t).shape() != (1, f) {
            return Err(Error::dimension(
                "adaptive_fusion tokens",
                tape.value(t).shape_str(),
                format!("1x{f}"),
            ));
        }
    }
    let stacked = tape.concat_rows(&tokens)?;
    let w_q = tape.param(store, params.w_q);
    let w_k = tape.param(store, params.w_k);
    let w_v = tape.param(store, params.w_v);
    let q = tape.matmul(stacked, w_q)?;
    let k = tape.matmul(stacked, w_k)?;
    let v = tape.matmul(stacked, w_v)?;
    let logits = tape.matmul_nt(q, k)?;
    let scaled = tape.scale(logits, 1.0 / (f as f64).sqrt());
    let mask_node = tape.constant(mask.matrix().clone());
    let masked = tape.add(scaled, mask_node)?;
    let weights = tape.softmax_rows(masked)?;
    let attended = tape.matmul(weights, v)?;
    tape.mean_rows(attended, mask.present_rows())
}

/// Attention weights only, for tests that inspect row distributions.
pub fn attention_weights(
    tape: &mut Tape,
    store: &ParamStore,
    params: &FusionParams,
    tokens: [NodeId; 3],
    mask: &ModalMask,
) -> Result<NodeId> {
    let stacked = tape.concat_rows(&tokens)?;
    let w_q = tape.param(store, params.w_q);
    let w_k = tape.param(store, params.w_k);
    let q = tape.matmul(stacked, w_q)?;
    let k = tape.matmul(stacked, w_k)?;
    let logits = tape.matmul_nt(q, k)?;
    let scaled = tape.scale(logits, 1.0 / (params.feature_dim as f64).sqrt());
    let mask_node = tape.constant(mask.matrix().clone());
    let masked = tape.add(scaled, mask_node)?;
    tape.softmax_rows(masked)
}
