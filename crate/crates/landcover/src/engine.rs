//! Training engine: the adversarial procedure (alternating discriminator
//! and generator updates) and the fully supervised baseline, with epoch
//! shuffling, validation-driven early stopping, audit logs, and resumable
//! checkpoints. Every random draw comes from streams derived from one seed,
//! so a run is a pure function of its config and data.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{s, Array4, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, NetState};
use crate::data::{one_hot, Sample};
use crate::error::{Error, Result};
use crate::losses::{
    d_loss_fake_backward, d_loss_real_backward, g_adv_loss_backward, g_total_loss,
    weighted_cross_entropy_backward, weighted_l2_backward, AdvForm, LossConfig, LossValue,
};
use crate::metrics::{decode, Confusion, MetricsReport};
use crate::nets::{
    build_discriminator, build_generator, forward_discriminator, forward_generator, Network,
    GEN_IN_CHANNELS,
};
use crate::nn::optim::{Adam, Sgd};
use crate::nn::Mode;
use crate::rng::stream;
use crate::taxonomy::{ClassWeights, NUM_CLASSES};

/// Which model to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cgan,
    Cnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cgan => "cgan",
            ModelKind::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation macro F1.
    pub early_stop_patience: usize,
    pub width_multiplier: f64,
    pub lambda: f64,
    pub adv_form: AdvForm,
    pub g_lr: f64,
    pub d_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Optional early exit once training macro F1 (percent) reaches this.
    pub train_f1_target: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Cgan,
            seed: 17,
            batch_size: 8,
            max_epochs: 100,
            early_stop_patience: 10,
            width_multiplier: 1.0,
            lambda: 100.0,
            adv_form: AdvForm::NonSaturating,
            g_lr: 2e-4,
            d_lr: 2e-4,
            beta1: 0.5,
            beta2: 0.99,
            train_f1_target: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.g_lr > 0.0 && self.d_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if let Some(t) = self.train_f1_target {
            if !(0.0..=100.0).contains(&t) {
                return Err(Error::Config("train_f1_target must lie in [0, 100]".into()));
            }
        }
        Ok(())
    }

    fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            adv_form: self.adv_form,
            per_tile: true,
        }
    }
}

/// Per-step losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    /// Discriminator loss; absent for the supervised baseline.
    pub d_loss: Option<f64>,
    pub g: LossValue,
}

impl StepStats {
    fn check_finite(&self, batch_index: usize) -> Result<()> {
        let bad = !self.g.total.is_finite() || self.d_loss.is_some_and(|d| !d.is_finite());
        if bad {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                batch_index,
                detail: format!("d={:?}, g={:?}", self.d_loss, self.g),
            });
        }
        Ok(())
    }
}

/// Why a fit loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    TrainTarget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub epochs_run: usize,
    pub best_val_f1: f64,
    pub stop: StopReason,
}

/// Validation-driven early stopping: track the best score, count epochs
/// without improvement, stop at the patience limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: usize,
    pub best: f64,
    pub since_best: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        EarlyStop {
            patience,
            // scores are F1 percentages, so any real score beats this;
            // finite so the struct survives JSON round trips
            best: -1.0,
            since_best: 0,
        }
    }

    /// Record one validation score; returns (is_new_best, should_stop).
    pub fn record(&mut self, score: f64) -> (bool, bool) {
        if score > self.best {
            self.best = score;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }
}

/// Everything the checkpoint metadata needs beyond the tensors.
#[derive(Serialize, Deserialize)]
struct TrainerMeta {
    config: TrainConfig,
    weights: [f64; NUM_CLASSES],
    step: u64,
    epoch: usize,
    stopper: EarlyStop,
    g_opt: Adam,
    d_opt: Option<Sgd>,
    dropout_rng: ChaCha8Rng,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Network,
    pub discriminator: Option<Network>,
    pub weights: ClassWeights,
    g_opt: Adam,
    d_opt: Option<Sgd>,
    dropout_rng: ChaCha8Rng,
    pub step: u64,
    pub epoch: usize,
    pub stopper: EarlyStop,
}

/// Stack samples into normalized image and one-hot mask batches.
pub fn make_batch(samples: &[Sample], idxs: &[usize]) -> Result<(Array4<f32>, Array4<f32>)> {
    if idxs.is_empty() {
        return Err(Error::EmptySplit("batch".into()));
    }
    let (c, h, w) = samples[idxs[0]].image.dim();
    let mut images = Array4::<f32>::zeros((idxs.len(), c, h, w));
    let mut masks = Array4::<f32>::zeros((idxs.len(), NUM_CLASSES, h, w));
    for (b, &i) in idxs.iter().enumerate() {
        let s = &samples[i];
        images.index_axis_mut(Axis(0), b).assign(&s.image);
        masks.index_axis_mut(Axis(0), b).assign(&one_hot(&s.labels)?);
    }
    Ok((images, masks))
}

impl Trainer {
    pub fn new(config: TrainConfig, weights: ClassWeights) -> Result<Trainer> {
        config.validate()?;
        let m = config.width_multiplier;
        let mut init_g = stream(config.seed, "init-gen", 0);
        let generator = build_generator(m, &mut init_g)?;
        let discriminator = match config.model {
            ModelKind::Cgan => {
                let mut init_d = stream(config.seed, "init-disc", 0);
                Some(build_discriminator(m, &mut init_d)?)
            }
            ModelKind::Cnn => None,
        };
        let d_opt = discriminator.as_ref().map(|_| Sgd::new(config.d_lr));
        Ok(Trainer {
            g_opt: Adam::new(config.g_lr, config.beta1, config.beta2),
            d_opt,
            dropout_rng: stream(config.seed, "dropout", 0),
            step: 0,
            epoch: 0,
            stopper: EarlyStop::new(config.early_stop_patience),
            weights,
            generator,
            discriminator,
            config,
        })
    }

    /// One optimizer step on one batch, dispatching on the model kind.
    pub fn train_step(&mut self, images: &Array4<f32>, masks: &Array4<f32>) -> Result<StepStats> {
        let stats = match self.config.model {
            ModelKind::Cgan => self.cgan_step(images, masks)?,
            ModelKind::Cnn => self.cnn_step(images, masks)?,
        };
        Ok(stats)
    }

    fn cgan_step(&mut self, images: &Array4<f32>, masks: &Array4<f32>) -> Result<StepStats> {
        let d = self.d_phase(images, masks)?;
        let g = self.g_phase(images, masks)?;
        self.step += 1;
        Ok(StepStats {
            step: self.step,
            d_loss: Some(d),
            g,
        })
    }

    /// Discriminator update: ascend real scores, descend fake scores. The
    /// generated mask is treated as a constant here, so no generator
    /// gradient exists after this phase.
    fn d_phase(&mut self, images: &Array4<f32>, masks: &Array4<f32>) -> Result<f64> {
        let disc = self
            .discriminator
            .as_mut()
            .ok_or_else(|| Error::Config("cgan step without a discriminator".into()))?;
        self.generator.zero_grad();
        disc.zero_grad();

        let fake =
            forward_generator(&mut self.generator, images, Mode::Train, &mut self.dropout_rng)?;

        // the two halves are separable; each pass backwards before the next
        // forward so the layer caches stay consistent
        let real_scores =
            forward_discriminator(disc, images, masks, Mode::Train, &mut self.dropout_rng)?;
        let (loss_real, grad_real) = d_loss_real_backward(&real_scores);
        disc.backward(&grad_real);

        let fake_scores =
            forward_discriminator(disc, images, &fake, Mode::Train, &mut self.dropout_rng)?;
        let (loss_fake, grad_fake) = d_loss_fake_backward(&fake_scores);
        disc.backward(&grad_fake);

        self.d_opt
            .as_mut()
            .expect("discriminator implies its optimizer")
            .step(disc);
        Ok(loss_real + loss_fake)
    }

    /// Generator update: adversarial gradient through the discriminator
    /// plus lambda times the weighted-L2 gradient.
    fn g_phase(&mut self, images: &Array4<f32>, masks: &Array4<f32>) -> Result<LossValue> {
        let disc = self
            .discriminator
            .as_mut()
            .ok_or_else(|| Error::Config("cgan step without a discriminator".into()))?;
        self.generator.zero_grad();
        disc.zero_grad();

        let fake =
            forward_generator(&mut self.generator, images, Mode::Train, &mut self.dropout_rng)?;
        let fake_scores =
            forward_discriminator(disc, images, &fake, Mode::Train, &mut self.dropout_rng)?;
        let (adv, score_grad) = g_adv_loss_backward(&fake_scores, self.config.adv_form);
        // discriminator input is image channels then mask channels; only
        // the mask part reaches the generator
        let joint_grad = disc.backward(&score_grad);
        let adv_grad = joint_grad
            .slice(s![.., GEN_IN_CHANNELS.., .., ..])
            .to_owned();

        let (rec, rec_grad) = weighted_l2_backward(masks, &fake, &self.weights)?;
        let total_grad = &adv_grad + &(rec_grad.mapv(|v| v * self.config.lambda as f32));
        self.generator.backward(&total_grad);
        self.g_opt.step(&mut self.generator);
        g_total_loss(adv, rec, &self.config.loss_config())
    }

    fn cnn_step(&mut self, images: &Array4<f32>, masks: &Array4<f32>) -> Result<StepStats> {
        self.generator.zero_grad();
        let pred =
            forward_generator(&mut self.generator, images, Mode::Train, &mut self.dropout_rng)?;
        let (ce, grad) = weighted_cross_entropy_backward(masks, &pred, &self.weights)?;
        self.generator.backward(&grad);
        self.g_opt.step(&mut self.generator);
        self.step += 1;
        Ok(StepStats {
            step: self.step,
            d_loss: None,
            g: LossValue {
                total: ce,
                adversarial: 0.0,
                reconstruction: ce,
            },
        })
    }

    /// Run the generator in eval mode over a split and score it.
    pub fn evaluate(&mut self, samples: &[Sample], split: &str) -> Result<MetricsReport> {
        if samples.is_empty() {
            return Err(Error::EmptySplit(split.into()));
        }
        let mut confusion = Confusion::new();
        let idxs: Vec<usize> = (0..samples.len()).collect();
        for chunk in idxs.chunks(self.config.batch_size) {
            let (images, _) = make_batch(samples, chunk)?;
            let pred = forward_generator(
                &mut self.generator,
                &images,
                Mode::Eval,
                &mut self.dropout_rng,
            )?;
            let hard = decode(&pred)?;
            for (b, &i) in chunk.iter().enumerate() {
                confusion.accumulate(samples[i].labels.view(), hard.index_axis(Axis(0), b))?;
            }
        }
        Ok(MetricsReport::new(
            self.config.model.as_str(),
            split,
            samples.len(),
            confusion,
        ))
    }

    /// Predict hard label maps for a batch of samples.
    pub fn predict(&mut self, samples: &[Sample]) -> Result<Vec<ndarray::Array2<u8>>> {
        let idxs: Vec<usize> = (0..samples.len()).collect();
        let mut out = Vec::with_capacity(samples.len());
        for chunk in idxs.chunks(self.config.batch_size.max(1)) {
            let (images, _) = make_batch(samples, chunk)?;
            let pred = forward_generator(
                &mut self.generator,
                &images,
                Mode::Eval,
                &mut self.dropout_rng,
            )?;
            let hard = decode(&pred)?;
            for b in 0..chunk.len() {
                out.push(hard.index_axis(Axis(0), b).to_owned());
            }
        }
        Ok(out)
    }

    /// The training loop: shuffled epochs, per-batch audit lines, one
    /// validation pass per epoch, best/last checkpoints, early stopping.
    pub fn fit(
        &mut self,
        train: &[Sample],
        val: &[Sample],
        run_dir: &Path,
    ) -> Result<FitSummary> {
        if train.is_empty() {
            return Err(Error::EmptySplit("train".into()));
        }
        if val.is_empty() {
            return Err(Error::EmptySplit("validation".into()));
        }
        std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let append = |name: &str| -> Result<std::fs::File> {
            let path = run_dir.join(name);
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))
        };
        let mut train_log = append("train.log")?;
        let mut batch_log = append("batches.log")?;
        let log_io = |e| Error::io(run_dir.join("train.log"), e);

        let mut stop = StopReason::MaxEpochs;
        let start_epoch = self.epoch;
        while self.epoch < self.config.max_epochs {
            let epoch = self.epoch;
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut stream(self.config.seed, "shuffle", epoch as u64));

            let mut epoch_g = 0.0f64;
            let mut epoch_d = 0.0f64;
            let mut batches = 0usize;
            for (batch_index, chunk) in order.chunks(self.config.batch_size).enumerate() {
                let ids: Vec<&str> = chunk.iter().map(|&i| train[i].id.as_str()).collect();
                let (images, masks) = make_batch(train, chunk)?;
                let stats = self.train_step(&images, &masks)?;
                stats.check_finite(batch_index)?;
                writeln!(
                    batch_log,
                    "epoch {epoch}\tstep {}\tids {}",
                    stats.step,
                    ids.join(",")
                )
                .map_err(log_io)?;
                epoch_g += stats.g.total;
                epoch_d += stats.d_loss.unwrap_or(0.0);
                batches += 1;
            }

            let val_report = self.evaluate(val, "validation")?;
            let (is_best, should_stop) = self.stopper.record(val_report.macro_f1);
            self.epoch += 1;
            writeln!(
                train_log,
                "epoch {epoch}\tg {:.6}\td {:.6}\tval_f1 {:.3}{}",
                epoch_g / batches as f64,
                epoch_d / batches as f64,
                val_report.macro_f1,
                if is_best { "\tbest" } else { "" }
            )
            .map_err(log_io)?;

            if is_best {
                self.save(&run_dir.join("best.lcck"))?;
            }
            self.save(&run_dir.join("last.lcck"))?;

            if let Some(target) = self.config.train_f1_target {
                let train_report = self.evaluate(train, "train")?;
                if train_report.macro_f1 >= target {
                    stop = StopReason::TrainTarget;
                    break;
                }
            }
            if should_stop {
                stop = StopReason::EarlyStop;
                break;
            }
        }
        Ok(FitSummary {
            epochs_run: self.epoch - start_epoch,
            best_val_f1: self.stopper.best,
            stop,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = TrainerMeta {
            config: self.config.clone(),
            weights: *self.weights.fractions(),
            step: self.step,
            epoch: self.epoch,
            stopper: self.stopper.clone(),
            g_opt: self.g_opt.clone(),
            d_opt: self.d_opt.clone(),
            dropout_rng: self.dropout_rng.clone(),
        };
        let mut nets = BTreeMap::new();
        nets.insert(
            "generator".to_string(),
            NetState {
                spec: self.generator.spec().clone(),
                tensors: self.generator.state_dict(),
            },
        );
        if let Some(disc) = &self.discriminator {
            nets.insert(
                "discriminator".to_string(),
                NetState {
                    spec: disc.spec().clone(),
                    tensors: disc.state_dict(),
                },
            );
        }
        checkpoint::save(path, &meta, &nets)
    }

    pub fn load(path: &Path) -> Result<Trainer> {
        let bad = |reason: &str| Error::Checkpoint {
            path: PathBuf::from(path),
            reason: reason.to_string(),
        };
        let (meta, nets): (TrainerMeta, _) = checkpoint::load(path)?;
        let gen_state = nets.get("generator").ok_or_else(|| bad("no generator"))?;
        let mut init = stream(meta.config.seed, "init-gen", 0);
        let mut generator = Network::build(gen_state.spec.clone(), &mut init)?;
        generator.load_state_dict(&gen_state.tensors)?;
        let discriminator = match meta.config.model {
            ModelKind::Cgan => {
                let state = nets
                    .get("discriminator")
                    .ok_or_else(|| bad("cgan checkpoint without a discriminator"))?;
                let mut init = stream(meta.config.seed, "init-disc", 0);
                let mut net = Network::build(state.spec.clone(), &mut init)?;
                net.load_state_dict(&state.tensors)?;
                Some(net)
            }
            ModelKind::Cnn => None,
        };
        Ok(Trainer {
            weights: ClassWeights::new(meta.weights)?,
            g_opt: meta.g_opt,
            d_opt: meta.d_opt,
            dropout_rng: meta.dropout_rng,
            step: meta.step,
            epoch: meta.epoch,
            stopper: meta.stopper,
            config: meta.config,
            generator,
            discriminator,
        })
    }
}
