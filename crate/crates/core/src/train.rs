//! Two-stage training: unimodal passes with tag-restricted prompt selection
//! first, then a multimodal pass over the transferred pool with random
//! modality dropout. Optimization is Adam with a plateau learning-rate
//! schedule.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::encoder::{Modality, ModalitySample};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::model::Model;
use crate::pool::{PromptTag, SelectScope};
use crate::tensor::ParamStore;

/// Adam with bias correction. Moment buffers are indexed like the parameter
/// store and grow lazily, so parameters added mid-run (the stage-2 pool
/// transfer) start with fresh moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Adam {
        Adam::default()
    }

    /// Apply one update from the gradients currently accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.t += 1;
        let slots = store.slots_mut();
        while self.m.len() < slots.len() {
            let n = slots[self.m.len()].grad.len();
            self.m.push(vec![0.0; n]);
            self.v.push(vec![0.0; n]);
        }
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, slot) in slots.iter_mut().enumerate() {
            for j in 0..slot.grad.len() {
                let g = slot.grad[j];
                self.m[i][j] = self.beta1 * self.m[i][j] + (1.0 - self.beta1) * g;
                self.v[i][j] = self.beta2 * self.v[i][j] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[i][j] / bc1;
                let v_hat = self.v[i][j] / bc2;
                slot.value.data_mut()[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Outcome of feeding one validation loss to the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Continue,
    /// Learning rate was just multiplied down to this value.
    Decayed(f64),
    /// Learning rate fell below the floor; training must stop.
    Stop,
}

/// Plateau schedule: after `patience_epochs` epochs without the validation
/// loss improving by at least `improve_epsilon`, multiply the learning rate
/// by `lr_decay`. Stop once the rate drops below `lr_floor`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrScheduler {
    lr: f64,
    best: Option<f64>,
    stagnant: usize,
    decay: f64,
    patience: usize,
    floor: f64,
    epsilon: f64,
}

impl LrScheduler {
    pub fn new(cfg: &TrainConfig) -> LrScheduler {
        LrScheduler {
            lr: cfg.lr_init,
            best: None,
            stagnant: 0,
            decay: cfg.lr_decay,
            patience: cfg.patience_epochs,
            floor: cfg.lr_floor,
            epsilon: cfg.improve_epsilon,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn observe(&mut self, val_loss: f64) -> Decision {
        let improved = match self.best {
            None => true,
            Some(best) => val_loss < best - self.epsilon,
        };
        if improved {
            self.best = Some(val_loss);
            self.stagnant = 0;
            return Decision::Continue;
        }
        self.stagnant += 1;
        if self.stagnant < self.patience {
            return Decision::Continue;
        }
        self.stagnant = 0;
        self.lr *= self.decay;
        if self.lr < self.floor {
            Decision::Stop
        } else {
            Decision::Decayed(self.lr)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainState {
    pub history: Vec<EpochRecord>,
    pub stage1_done: bool,
    pub stage2_done: bool,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub opt: Adam,
    pub state: TrainState,
    rng: ChaCha8Rng,
    pub verbose: bool,
}

/// How samples are presented during one training pass.
#[derive(Clone, Copy)]
enum PassMode {
    /// Keep only this modality; prompt selection restricted to its tag.
    Unimodal(Modality),
    /// All modalities, independent per-channel dropout; full selection.
    Multimodal,
}

impl PassMode {
    fn scope(self) -> SelectScope {
        match self {
            PassMode::Unimodal(m) => SelectScope::Tag(PromptTag::for_modality(m)),
            PassMode::Multimodal => SelectScope::All,
        }
    }

    fn label(self) -> String {
        match self {
            PassMode::Unimodal(Modality::Visual) => "stage1-visual".into(),
            PassMode::Unimodal(Modality::Audio) => "stage1-audio".into(),
            PassMode::Unimodal(Modality::Text) => "stage1-text".into(),
            PassMode::Multimodal => "stage2".into(),
        }
    }
}

fn unimodal_pattern(m: Modality) -> [bool; 3] {
    match m {
        Modality::Visual => [true, false, false],
        Modality::Audio => [false, true, false],
        Modality::Text => [false, false, true],
    }
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        Ok(Trainer {
            cfg: cfg.clone(),
            opt: Adam::new(),
            state: TrainState::default(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e3779b97f4a7c15)),
            verbose: false,
        })
    }

    /// Split off a validation set: use the dataset's own when present,
    /// otherwise carve a deterministic fraction off the end of a shuffled
    /// copy of the training split.
    fn splits(&self, data: &Dataset) -> (Vec<ModalitySample>, Vec<ModalitySample>) {
        if !data.val.is_empty() {
            return (data.train.clone(), data.val.clone());
        }
        let mut idx: Vec<usize> = (0..data.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(0x5eed));
        idx.shuffle(&mut rng);
        let n_val = ((data.train.len() as f64) * self.cfg.val_fraction).round() as usize;
        let n_val = n_val.min(data.train.len().saturating_sub(1));
        let (val_idx, train_idx) = idx.split_at(n_val);
        (
            train_idx.iter().map(|&i| data.train[i].clone()).collect(),
            val_idx.iter().map(|&i| data.train[i].clone()).collect(),
        )
    }

    fn dropout_pattern(&mut self) -> [bool; 3] {
        let p = self.cfg.stage2_dropout;
        loop {
            let pattern = [
                self.rng.gen::<f64>() >= p[0],
                self.rng.gen::<f64>() >= p[1],
                self.rng.gen::<f64>() >= p[2],
            ];
            // an all-dropped sample carries no signal; draw again
            if pattern != [false; 3] {
                return pattern;
            }
        }
    }

    /// Average loss over `samples`, presented per `mode` but without dropout
    /// or parameter updates. Pool activation counts are restored afterwards
    /// so measurement never influences the stage-2 transfer.
    fn measure_loss(
        &self,
        model: &mut Model,
        samples: &[ModalitySample],
        mode: PassMode,
    ) -> Result<f64> {
        let saved: Vec<u64> = model
            .pool
            .entries
            .iter()
            .map(|e| e.activation_count)
            .collect();
        let mut total = 0.0;
        for s in samples {
            let presented = match mode {
                PassMode::Unimodal(m) => s.with_pattern(unimodal_pattern(m)),
                PassMode::Multimodal => s.clone(),
            };
            let (tape, out) = model.forward(&presented, mode.scope())?;
            total += tape.value(out.loss).as_scalar()?;
        }
        for (e, c) in model.pool.entries.iter_mut().zip(saved) {
            e.activation_count = c;
        }
        Ok(total / samples.len().max(1) as f64)
    }

    fn run_pass(&mut self, model: &mut Model, data: &Dataset, mode: PassMode) -> Result<()> {
        if let PassMode::Unimodal(m) = mode {
            let missing = data.train.iter().any(|s| s.vector(m).is_none());
            if missing {
                return Err(Error::Contract(format!(
                    "unimodal pass needs the {m:?} channel on every training sample"
                )));
            }
        }
        let (train, val) = self.splits(data);
        if train.is_empty() {
            return Err(Error::Degenerate("empty training split".into()));
        }
        let mut scheduler = LrScheduler::new(&self.cfg);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..self.cfg.max_epochs {
            order.shuffle(&mut self.rng);
            let mut epoch_loss = 0.0;
            let mut correct = 0usize;
            for batch in order.chunks(self.cfg.batch_size) {
                model.params.zero_grads();
                for &i in batch {
                    let sample = &train[i];
                    let presented = match mode {
                        PassMode::Unimodal(m) => sample.with_pattern(unimodal_pattern(m)),
                        PassMode::Multimodal => {
                            sample.with_pattern(self.dropout_pattern())
                        }
                    };
                    let (mut tape, out) = model.forward(&presented, mode.scope())?;
                    tape.backward(out.loss, &mut model.params)?;
                    epoch_loss += tape.value(out.loss).as_scalar()?;
                    if out.prediction == sample.label {
                        correct += 1;
                    }
                }
                model.params.scale_grads(1.0 / batch.len() as f64);
                self.opt.step(&mut model.params, scheduler.lr());
                model.pool.enforce_key_norms(&mut model.params);
            }
            let train_loss = epoch_loss / train.len() as f64;
            let train_acc = correct as f64 / train.len() as f64;
            let val_loss = self.measure_loss(model, &val, mode)?;
            let record = EpochRecord {
                stage: mode.label(),
                epoch,
                lr: scheduler.lr(),
                train_loss,
                val_loss,
                train_acc,
            };
            if self.verbose {
                eprintln!(
                    "{} epoch {:>3}  lr {:.3e}  train loss {:.4}  val loss {:.4}  acc {:.3}",
                    record.stage, epoch, record.lr, train_loss, val_loss, train_acc
                );
            }
            self.state.history.push(record);
            if train_acc > self.cfg.train_acc_stop {
                break;
            }
            if scheduler.observe(val_loss) == Decision::Stop {
                break;
            }
        }
        Ok(())
    }

    /// Stage 1: one unimodal pass per channel over the tag-partitioned pool.
    pub fn stage1(&mut self, model: &mut Model, data: &Dataset) -> Result<()> {
        for m in Modality::ALL {
            self.run_pass(model, data, PassMode::Unimodal(m))?;
        }
        self.state.stage1_done = true;
        Ok(())
    }

    /// Baseline without the unimodal stage: train multimodally from scratch
    /// on the original pool, dropout and all.
    pub fn single_stage(&mut self, model: &mut Model, data: &Dataset) -> Result<()> {
        self.run_pass(model, data, PassMode::Multimodal)?;
        self.state.stage2_done = true;
        Ok(())
    }

    /// Stage 2: carry over stage-1 entries that were actually selected, then
    /// train multimodally with channel dropout.
    pub fn stage2(&mut self, model: &mut Model, data: &Dataset) -> Result<()> {
        let transferred = model.pool.transfer_activated(
            &mut model.params,
            "pool2",
            self.cfg.transfer_threshold,
            self.cfg.restore_pool_size,
            self.cfg.seed.wrapping_add(17),
        )?;
        model.replace_pool(transferred);
        self.run_pass(model, data, PassMode::Multimodal)?;
        self.state.stage2_done = true;
        Ok(())
    }
}

/// Classify `samples` with a forced presence pattern, optionally restricted
/// to a class subset (prediction = best score among the subset; the matrix
/// is indexed by position within the subset). Activation counts are left
/// untouched.
pub fn evaluate(
    model: &mut Model,
    samples: &[ModalitySample],
    pattern: [bool; 3],
    class_subset: Option<&[usize]>,
) -> Result<ConfusionMatrix> {
    if let Some(subset) = class_subset {
        if subset.is_empty() {
            return Err(Error::Config("class subset must be non-empty".into()));
        }
        let mut seen = vec![false; model.num_classes];
        for &c in subset {
            if c >= model.num_classes {
                return Err(Error::Config(format!(
                    "class {c} out of range for {} classes",
                    model.num_classes
                )));
            }
            if seen[c] {
                return Err(Error::Config(format!("class {c} repeated in subset")));
            }
            seen[c] = true;
        }
    }
    let saved: Vec<u64> = model
        .pool
        .entries
        .iter()
        .map(|e| e.activation_count)
        .collect();
    let result = (|| {
        let n = class_subset.map_or(model.num_classes, |s| s.len());
        let mut cm = ConfusionMatrix::new(n);
        for s in samples {
            match class_subset {
                None => {
                    let (_, out) = model.forward(&s.with_pattern(pattern), SelectScope::All)?;
                    cm.record(s.label, out.prediction);
                }
                Some(subset) => {
                    let Some(true_pos) = subset.iter().position(|&c| c == s.label) else {
                        continue; // sample's class is outside the protocol
                    };
                    let (_, out) = model.forward(&s.with_pattern(pattern), SelectScope::All)?;
                    let pred_pos = subset
                        .iter()
                        .enumerate()
                        .max_by(|(_, &a), (_, &b)| {
                            out.scores[a]
                                .partial_cmp(&out.scores[b])
                                .expect("finite scores")
                        })
                        .map(|(i, _)| i)
                        .expect("non-empty subset");
                    cm.record(true_pos, pred_pos);
                }
            }
        }
        Ok(cm)
    })();
    for (e, c) in model.pool.entries.iter_mut().zip(saved) {
        e.activation_count = c;
    }
    result
}
