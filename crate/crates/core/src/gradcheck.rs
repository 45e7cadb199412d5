//! Central-difference verification of the reverse-mode gradients through
//! the full pipeline. Prompt selection is a discrete choice, so a probe is
//! only meaningful while the nudged parameter leaves the selection
//! unchanged; probes that flip it are skipped and counted.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::encoder::ModalitySample;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pool::{MappingKind, PromptTag, SelectScope};
use crate::tensor::ParamId;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub configs: usize,
    pub probes: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub worst: Option<ProbeResult>,
}

/// |a - b| / max(|a|, |b|, 1e-3): the floor keeps near-zero gradients from
/// inflating rounding noise into large relative errors.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn loss_and_selection(
    model: &mut Model,
    sample: &ModalitySample,
    scope: SelectScope,
) -> Result<(f64, Vec<usize>)> {
    let (tape, out) = model.forward(sample, scope)?;
    let loss = tape.value(out.loss).as_scalar()?;
    Ok((loss, out.selected.iter().map(|s| s.0).collect()))
}

/// Probe one coordinate. Returns `None` when the nudge flips the discrete
/// prompt selection, which makes the finite difference meaningless.
pub fn probe(
    model: &mut Model,
    sample: &ModalitySample,
    scope: SelectScope,
    id: ParamId,
    index: usize,
    h: f64,
) -> Result<Option<ProbeResult>> {
    model.params.zero_grads();
    let (mut tape, out) = model.forward(sample, scope)?;
    let base_selection: Vec<usize> = out.selected.iter().map(|s| s.0).collect();
    tape.backward(out.loss, &mut model.params)?;
    let analytic = model.params.grad(id)[index];

    model.params.nudge(id, index, h);
    let (loss_plus, sel_plus) = loss_and_selection(model, sample, scope)?;
    model.params.nudge(id, index, -2.0 * h);
    let (loss_minus, sel_minus) = loss_and_selection(model, sample, scope)?;
    model.params.nudge(id, index, h); // restore

    if sel_plus != base_selection || sel_minus != base_selection {
        return Ok(None);
    }
    let numeric = (loss_plus - loss_minus) / (2.0 * h);
    Ok(Some(ProbeResult {
        param: model.params.name(id).to_string(),
        index,
        analytic,
        numeric,
        rel_err: relative_error(analytic, numeric),
    }))
}

fn random_config(rng: &mut ChaCha8Rng) -> ModelConfig {
    let mapping = match rng.gen_range(0..3) {
        0 => MappingKind::Identity,
        1 => MappingKind::Linear,
        _ => MappingKind::Mlp,
    };
    let pool_size = rng.gen_range(5..9);
    ModelConfig {
        feature_dim: rng.gen_range(4..8),
        d_v: rng.gen_range(3..6),
        d_a: rng.gen_range(3..6),
        d_t: rng.gen_range(3..6),
        encoder_total_params: rng.gen_range(300..700),
        pool_size,
        prompt_len: rng.gen_range(2..4),
        top_k: rng.gen_range(1..3),
        inherent_len: rng.gen_range(1..3),
        gate_hidden: rng.gen_range(3..7),
        mapping,
        lambda_l1: 1e-3,
        ..ModelConfig::default()
    }
}

fn random_sample(cfg: &ModelConfig, num_classes: usize, rng: &mut ChaCha8Rng) -> ModalitySample {
    let vec_of = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    ModalitySample {
        visual: Some(vec_of(cfg.d_v, rng)),
        audio: Some(vec_of(cfg.d_a, rng)),
        text: Some(vec_of(cfg.d_t, rng)),
        label: rng.gen_range(0..num_classes),
    }
}

fn random_presence(rng: &mut ChaCha8Rng) -> [bool; 3] {
    loop {
        let p = [rng.gen(), rng.gen(), rng.gen()];
        if p != [false; 3] {
            return p;
        }
    }
}

/// Check `configs` independently seeded model/sample draws, a handful of
/// random coordinates each, against central differences.
pub fn run_all(seed: u64, configs: usize) -> Result<GradReport> {
    let mut report = GradReport::default();
    for c in 0..configs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
        let cfg = random_config(&mut rng);
        let num_classes = rng.gen_range(2..5);
        let mut model = Model::new(&cfg, num_classes, rng.gen())?;
        let presence = random_presence(&mut rng);
        let sample = random_sample(&cfg, num_classes, &mut rng).with_pattern(presence);

        // occasionally exercise the stage-1 tag-restricted path
        let scope = if rng.gen_bool(0.25) {
            let only = match presence {
                [true, false, false] => Some(PromptTag::Visual),
                [false, true, false] => Some(PromptTag::Audio),
                [false, false, true] => Some(PromptTag::Text),
                _ => None,
            };
            only.map_or(SelectScope::All, SelectScope::Tag)
        } else {
            SelectScope::All
        };

        let ids: Vec<ParamId> = model.params.ids().collect();
        for _ in 0..5 {
            let id = ids[rng.gen_range(0..ids.len())];
            let len = model.params.value(id).len();
            let index = rng.gen_range(0..len);
            match probe(&mut model, &sample, scope, id, index, DEFAULT_STEP)? {
                None => report.skipped += 1,
                Some(result) => {
                    report.probes += 1;
                    if result.rel_err > report.max_rel_err {
                        report.max_rel_err = result.rel_err;
                        report.worst = Some(result);
                    }
                }
            }
        }
        report.configs += 1;
    }
    if report.probes == 0 {
        return Err(Error::Degenerate(
            "every gradient probe was skipped".into(),
        ));
    }
    Ok(report)
}
