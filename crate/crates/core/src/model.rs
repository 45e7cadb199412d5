//! Full model assembly: encoders -> masked fusion -> prompt pool ->
//! sparse gating -> per-class combination -> contrastive objective.

use serde::{Deserialize, Serialize};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::ModelConfig;
use crate::encoder::{EncoderStack, ModalitySample};
use crate::error::{Error, Result};
use crate::fusion::{adaptive_fusion, FusionParams, ModalMask};
use crate::objective::{class_scores, contrastive_loss, total_loss, PromptEncoder};
use crate::pool::{PromptPool, SelectScope};
use crate::sff::{combine, InherentPrompts, SparseGate};
use crate::tape::{NodeId, Tape};
use crate::tensor::{ParamStore, Tensor};

/// Everything produced by one forward pass. The tape that owns the nodes
/// is returned alongside so callers can run backward or inspect values.
pub struct ForwardOutput {
    pub fusion: Tensor,
    pub query: Vec<f64>,
    pub selected: Vec<(usize, f64)>,
    pub scores: Vec<f64>,
    pub prediction: usize,
    pub contrast: NodeId,
    pub loss: NodeId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub params: ParamStore,
    pub encoders: EncoderStack,
    pub fusion: FusionParams,
    pub pool: PromptPool,
    pub gate: SparseGate,
    pub inherent: InherentPrompts,
    pub prompt_encoder: PromptEncoder,
    pub cfg: ModelConfig,
    pub num_classes: usize,
}

impl Model {
    pub fn new(cfg: &ModelConfig, num_classes: usize, seed: u64) -> Result<Model> {
        cfg.validate()?;
        if num_classes == 0 {
            return Err(Error::Config("need at least one class".into()));
        }
        let mut params = ParamStore::new();
        let token_dim = cfg.feature_dim; // prompts live in the fusion space
        let encoders = EncoderStack::build(
            &mut params,
            cfg.d_v,
            cfg.d_a,
            cfg.d_t,
            cfg.feature_dim,
            cfg.budget,
            cfg.encoder_total_params,
            seed,
        )?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(1));
        let fusion = FusionParams::build(&mut params, cfg.feature_dim, &mut rng);
        let pool = PromptPool::build(
            &mut params,
            "pool",
            cfg.pool_size,
            cfg.prompt_len,
            token_dim,
            cfg.feature_dim,
            cfg.mapping,
            seed.wrapping_add(2),
        )?;
        let gate = SparseGate::build(
            &mut params,
            token_dim,
            cfg.gate_hidden,
            cfg.lambda_l1,
            seed.wrapping_add(3),
        )?;
        let inherent = InherentPrompts::build(
            &mut params,
            num_classes,
            cfg.inherent_len,
            token_dim,
            seed.wrapping_add(4),
        );
        let prompt_encoder =
            PromptEncoder::build(&mut params, token_dim, cfg.feature_dim, &mut rng);
        Ok(Model {
            params,
            encoders,
            fusion,
            pool,
            gate,
            inherent,
            prompt_encoder,
            cfg: cfg.clone(),
            num_classes,
        })
    }

    /// Forward one sample end to end. The sample's own presence drives the
    /// mask; restrict with [`ModalitySample::with_pattern`] beforehand to
    /// force a pattern.
    pub fn forward(
        &mut self,
        sample: &ModalitySample,
        scope: SelectScope,
    ) -> Result<(Tape, ForwardOutput)> {
        sample.validate()?;
        if sample.label >= self.num_classes {
            return Err(Error::Contract(format!(
                "label {} out of range for {} classes",
                sample.label, self.num_classes
            )));
        }
        let mut tape = Tape::new();
        let tokens = self.encoders.encode(&mut tape, &self.params, sample)?;
        let out = self.forward_core(&mut tape, tokens, sample.presence(), sample.label, scope)?;
        Ok((tape, out))
    }

    /// Forward from raw modality tokens instead of running the encoders.
    /// Lets tests perturb absent-modality placeholders directly.
    pub fn forward_from_features(
        &mut self,
        features: [Tensor; 3],
        presence: [bool; 3],
        label: usize,
        scope: SelectScope,
    ) -> Result<(Tape, ForwardOutput)> {
        let mut tape = Tape::new();
        let tokens = [
            tape.constant(features[0].clone()),
            tape.constant(features[1].clone()),
            tape.constant(features[2].clone()),
        ];
        let out = self.forward_core(&mut tape, tokens, presence, label, scope)?;
        Ok((tape, out))
    }

    fn forward_core(
        &mut self,
        tape: &mut Tape,
        tokens: [NodeId; 3],
        presence: [bool; 3],
        label: usize,
        scope: SelectScope,
    ) -> Result<ForwardOutput> {
        let mask = ModalMask::build(presence)?;
        let fused = adaptive_fusion(tape, &self.params, &self.fusion, tokens, &mask)?;
        let query = self.pool.mapping.apply(tape, &self.params, fused)?;
        let query_value = tape.value(query).data().to_vec();
        let selected =
            self.pool
                .select_topk(&self.params, &query_value, self.cfg.top_k, scope)?;
        let indices: Vec<usize> = selected.iter().map(|s| s.0).collect();
        let values = self.pool.gather_values(tape, &self.params, &indices)?;
        let gated = self.gate.apply_all(tape, &self.params, &values)?;

        let mut combined = Vec::with_capacity(self.num_classes);
        for c in 0..self.num_classes {
            combined.push(combine(tape, &self.params, &gated, &self.inherent, c)?);
        }
        let scores = class_scores(
            tape,
            &self.params,
            fused,
            &combined,
            &self.prompt_encoder,
            self.cfg.tau,
        )?;
        let contrast = contrastive_loss(tape, &scores, label)?;
        let l1 = self.gate.l1_penalty(tape, &self.params);

        // Query-key alignment pull: mean over selected entries of
        // (1 - cos(query, key_j)). Keeps keys trainable toward the query's
        // latent space.
        let key_align = if self.cfg.beta_key_align > 0.0 && !indices.is_empty() {
            let mut acc: Option<NodeId> = None;
            for &i in &indices {
                let key = tape.param(&self.params, self.pool.entries[i].key);
                let cos = tape.cosine(query, key)?;
                let one_minus = tape.affine(cos, -1.0, 1.0);
                acc = Some(match acc {
                    None => one_minus,
                    Some(a) => tape.add(a, one_minus)?,
                });
            }
            acc.map(|a| tape.scale(a, 1.0 / indices.len() as f64))
        } else {
            None
        };
        let loss = total_loss(tape, contrast, l1, key_align, self.cfg.beta_key_align)?;

        let prediction = scores.predicted_class();
        Ok(ForwardOutput {
            fusion: tape.value(fused).clone(),
            query: query_value,
            selected,
            scores: scores.values,
            prediction,
            contrast,
            loss,
        })
    }

    /// Swap in a transferred pool (stage 2).
    pub fn replace_pool(&mut self, pool: PromptPool) {
        self.pool = pool;
    }
}
