//! Teacher-forced cross-entropy training with Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{self, ModelConfig};
use crate::encoder;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::params::{Bindings, ModelParams};
use crate::tensor::{Tape, Tensor, Var};
use crate::tokenizer::{TokenSequence, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Maximum global L2 norm of the gradient; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 75,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 4,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !unit(self.adam_beta1) || !unit(self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        // zero is accepted so a run can measure the loss without updating
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config("grad_clip must be positive".into()));
            }
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }
}

/// Mean of `-log softmax(logits)[target]` over rows whose target is not PAD.
pub fn cross_entropy_loss(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = tape.cross_entropy(l, targets, PAD)?;
    Ok(tape.value(loss).data()[0])
}

/// One Adam update using the gradients stored in each parameter's grad slot
/// (missing slots count as zero).
pub fn adam_step(params: &mut ModelParams, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    if state.first_moment.len() != params.len() {
        return Err(Error::Contract("Adam state does not match the parameter set".into()));
    }
    let mut sq_norm = 0.0;
    for (name, t) in params.iter() {
        if let Some(g) = &t.grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { param: name.to_string() });
            }
            sq_norm += g.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let clip = match config.grad_clip {
        Some(max) if sq_norm.sqrt() > max => max / sq_norm.sqrt(),
        _ => 1.0,
    };

    state.step += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    for (k, (_, t)) in params.iter_mut().enumerate() {
        let g = t.grad.clone().unwrap_or_else(|| vec![0.0; t.numel()]);
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        let data = t.data_mut();
        for i in 0..data.len() {
            let gi = g[i] * clip;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

/// One image with its encoded caption.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub image: ImageTensor,
    pub caption: TokenSequence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossLog {
    /// Mean batch loss per optimiser step.
    pub steps: Vec<StepLoss>,
    /// Mean per-sample loss per epoch, summed in dataset order.
    pub epochs: Vec<f64>,
}

impl LossLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,step,loss\n");
        for r in &self.steps {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.step, r.loss));
        }
        s
    }

    pub fn final_epoch_loss(&self) -> Option<f64> {
        self.epochs.last().copied()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: LossLog,
}

/// Records the teacher-forced loss of one sample: the decoder sees the
/// caption without its last id and predicts the caption without BOS.
pub fn sample_loss_on(
    tape: &mut Tape,
    bindings: &Bindings,
    sample: &TrainingSample,
    config: &ModelConfig,
) -> Result<Var> {
    let ids = &sample.caption.ids;
    if ids.len() < 2 {
        return Err(Error::Contract("training captions need at least BOS and one target".into()));
    }
    let enc = encoder::encode_on(tape, bindings, &sample.image, &config.encoder)?;
    let dec = decoder::decoder_forward_on(tape, bindings, &ids[..ids.len() - 1], enc.features, &config.decoder)?;
    tape.cross_entropy(dec.logits, &ids[1..], PAD)
}

/// Trains a freshly initialised model (seeded by `train_config.seed`).
pub fn train(dataset: &[TrainingSample], config: &ModelConfig, train_config: &TrainConfig) -> Result<TrainOutcome> {
    let params = decoder::init_model(config, train_config.seed)?;
    train_from(params, dataset, config, train_config)
}

/// Continues training from the given parameters.
pub fn train_from(
    mut params: ModelParams,
    dataset: &[TrainingSample],
    config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_config.validate()?;
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(0x5eed));
    let mut state = AdamState::new(&params);
    let mut log = LossLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut sample_losses = vec![0.0; dataset.len()];
    let mut step = 0;
    for epoch in 1..=train_config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(train_config.batch_size) {
            let mut tape = Tape::new();
            let bindings = params.bind(&mut tape);
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let l = sample_loss_on(&mut tape, &bindings, &dataset[i], config)?;
                sample_losses[i] = tape.value(l).data()[0];
                losses.push(l);
            }
            let mut total = losses[0];
            for &l in &losses[1..] {
                total = tape.add(total, l)?;
            }
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            let grads = tape.backward(mean)?;
            params.zero_grads();
            params.accumulate_grads(&bindings, &grads);
            adam_step(&mut params, &mut state, train_config)?;
            step += 1;
            log.steps.push(StepLoss {
                epoch,
                step,
                loss: tape.value(mean).data()[0],
            });
        }
        let epoch_loss = sample_losses.iter().sum::<f64>() / dataset.len() as f64;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        log.epochs.push(epoch_loss);
    }
    params.zero_grads();
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        let uniform = Tensor::zeros(&[1, 8]);
        assert!((cross_entropy_loss(&uniform, &[5]).unwrap() - 8f64.ln()).abs() < 1e-15);
        let mut peaked = Tensor::zeros(&[1, 8]);
        peaked.data_mut()[3] = 50.0;
        assert!(cross_entropy_loss(&peaked, &[3]).unwrap() < 1e-20);

        let two = Tensor::from_rows(&[[0.2, 1.1, -0.4], [3.0, 0.0, 0.5]]).unwrap();
        let one = Tensor::from_rows(&[[0.2, 1.1, -0.4]]).unwrap();
        assert_eq!(
            cross_entropy_loss(&two, &[2, PAD]).unwrap(),
            cross_entropy_loss(&one, &[2]).unwrap()
        );
        assert!(matches!(cross_entropy_loss(&two, &[PAD, PAD]), Err(Error::Contract(_))));
    }

    fn scalar_params(v: f64) -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::scalar(v)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar_params(0.7);
        p.get_mut("w").unwrap().grad = Some(vec![0.0]);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &mut s, &TrainConfig::default()).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[0.7]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, -7.0] {
            let mut p = scalar_params(1.0);
            p.get_mut("w").unwrap().grad = Some(vec![g]);
            let mut s = AdamState::new(&p);
            let cfg = TrainConfig::default();
            adam_step(&mut p, &mut s, &cfg).unwrap();
            let delta = p.get("w").unwrap().data()[0] - 1.0;
            // m_hat = g, v_hat = g^2 -> delta = -lr * g / (|g| + eps)
            let expected = -cfg.learning_rate * g / (g.abs() + cfg.adam_eps);
            assert!((delta - expected).abs() < 1e-15, "{delta} vs {expected}");
            assert!((delta.abs() - cfg.learning_rate).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_is_pure() {
        let mut p = scalar_params(0.3);
        p.get_mut("w").unwrap().grad = Some(vec![0.25]);
        let s = AdamState::new(&p);
        let cfg = TrainConfig::default();
        let (mut p1, mut s1) = (p.clone(), s.clone());
        let (mut p2, mut s2) = (p.clone(), s.clone());
        adam_step(&mut p1, &mut s1, &cfg).unwrap();
        adam_step(&mut p2, &mut s2, &cfg).unwrap();
        assert_eq!(p1.get("w").unwrap().data()[0].to_bits(), p2.get("w").unwrap().data()[0].to_bits());
        assert_eq!(s1, s2);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = scalar_params(0.3);
        p.get_mut("w").unwrap().grad = Some(vec![f64::NAN]);
        let mut s = AdamState::new(&p);
        match adam_step(&mut p, &mut s, &TrainConfig::default()) {
            Err(Error::NonFiniteGradient { param }) => assert_eq!(param, "w"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn clipping_scales_global_norm() {
        let mut p = ModelParams::new();
        p.insert("a", Tensor::scalar(0.0)).unwrap();
        p.insert("b", Tensor::scalar(0.0)).unwrap();
        p.get_mut("a").unwrap().grad = Some(vec![3.0]);
        p.get_mut("b").unwrap().grad = Some(vec![4.0]);
        let mut s = AdamState::new(&p);
        let cfg = TrainConfig { grad_clip: Some(1.0), ..TrainConfig::default() };
        adam_step(&mut p, &mut s, &cfg).unwrap();
        assert!((s.first_moment[0][0] - 0.1 * 0.6).abs() < 1e-15);
        assert!((s.first_moment[1][0] - 0.1 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { adam_beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn empty_dataset_is_config_error() {
        let cfg = ModelConfig {
            encoder: encoder::EncoderConfig::default(),
            decoder: decoder::DecoderConfig { vocab_size: 8, ..Default::default() },
        };
        assert!(matches!(train(&[], &cfg, &TrainConfig::default()), Err(Error::Config(_))));
    }
}
