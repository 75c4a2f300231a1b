use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    accumulate_gradients, forward_unchecked, mae_grad, AdamaxConfig, AdamaxState, Dims, ParamGroup,
    Params, RnnModel, Variant,
};
use crate::error::{Error, Result};
use crate::features::{LabeledWindow, Scaler, WINDOW_STEPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    #[serde(flatten)]
    pub adamax: AdamaxConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_size: usize,
    pub seed: u64,
    /// Parameter groups held fixed during training.
    pub freeze: Vec<ParamGroup>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0007,
            dropout_rate: 0.05,
            adamax: AdamaxConfig::default(),
            epochs: 200,
            batch_size: 64,
            hidden_size: 32,
            seed: 0,
            freeze: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(
                "dropout_rate must be in [0, 1)".into(),
            ));
        }
        if self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and hidden_size must be ≥ 1".into(),
            ));
        }
        let a = &self.adamax;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::InvalidConfig("adamax constants out of range".into()));
        }
        Ok(())
    }

    /// Short stable hash of the configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// MAE on the normalized targets.
    pub train_mae: f64,
    /// MAE of the denormalized predictions, in meters.
    pub train_mae_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mae,train_mae_m\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_mae, e.train_mae_m));
        }
        out
    }

    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }
}

fn init_weights(dims: Dims, rng: &mut ChaCha8Rng) -> Params {
    let mut p = Params::zeros(dims.input, dims.hidden);
    let in_bound = 1.0 / (dims.input as f64).sqrt();
    let hid_bound = 1.0 / (dims.hidden as f64).sqrt();
    for (group, values) in p.groups_mut() {
        let bound = match group {
            ParamGroup::WX => in_bound,
            _ => hid_bound,
        };
        for v in values.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    p
}

fn dropout_masks(dims: Dims, rate: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let keep = 1.0 / (1.0 - rate);
    (0..dims.steps)
        .map(|_| {
            (0..dims.hidden)
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect()
        })
        .collect()
}

/// Mini-batch Adamax on the mean absolute error, with inverted dropout on
/// the hidden states. Starts from `init` when given (its scaler is reused),
/// otherwise from seeded uniform weights and a scaler fitted on `data`.
pub fn train(
    data: &[LabeledWindow],
    config: &TrainConfig,
    init: Option<&RnnModel>,
) -> Result<(RnnModel, TrainingLog)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("no training windows".into()));
    }
    let width = data[0].window.values.len();
    if !width.is_multiple_of(WINDOW_STEPS) || data.iter().any(|d| d.window.values.len() != width) {
        return Err(Error::ShapeMismatch("inconsistent window widths".into()));
    }
    let dims = Dims {
        input: width / WINDOW_STEPS,
        hidden: config.hidden_size,
        steps: WINDOW_STEPS,
    };
    if let Some(m) = init {
        m.validate()?;
        if m.dims != dims {
            return Err(Error::ShapeMismatch(format!(
                "initial model dims {:?} do not match {:?}",
                m.dims, dims
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = match init {
        Some(m) => m.clone(),
        None => {
            let mut m = RnnModel::zeros(dims, Variant::G);
            m.weights = init_weights(dims, &mut rng);
            m
        }
    };
    let mut log = TrainingLog::default();
    if config.epochs == 0 {
        return Ok((model, log));
    }

    let scaler = match &model.scaler {
        Some(s) => s.clone(),
        None => Scaler::fit(data)?,
    };
    let inputs: Vec<Vec<f64>> = data
        .iter()
        .map(|d| scaler.apply_window(&d.window).map(|w| w.values))
        .collect::<Result<_>>()?;
    let targets: Vec<f64> = data
        .iter()
        .map(|d| scaler.apply_label(d.eps).eps_norm)
        .collect();

    let mut optimizer = AdamaxState::new(&model.weights, config.adamax);
    let mut grads = Params::zeros(dims.input, dims.hidden);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let start_epoch = model.meta.epochs_trained;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let masks = (config.dropout_rate > 0.0)
                    .then(|| dropout_masks(dims, config.dropout_rate, &mut rng));
                let (y, cache) = forward_unchecked(&model, &inputs[i], masks.as_deref())?;
                let d = mae_grad(y, targets[i]) * scale;
                accumulate_gradients(&model, &cache, d, &mut grads);
            }
            optimizer.step(
                &mut model.weights,
                &grads,
                config.learning_rate,
                &config.freeze,
            );
        }

        let (mut mae, mut mae_m) = (0.0, 0.0);
        for (i, x) in inputs.iter().enumerate() {
            let (y, _) = forward_unchecked(&model, x, None)?;
            mae += (y - targets[i]).abs();
            mae_m += (scaler.invert_label(y) - data[i].eps).abs();
        }
        let n = data.len() as f64;
        log.epochs.push(EpochLog {
            epoch: start_epoch + epoch,
            train_mae: mae / n,
            train_mae_m: mae_m / n,
        });
    }

    if !model.weights.all_finite() {
        return Err(Error::ShapeMismatch(
            "training diverged to non-finite weights".into(),
        ));
    }
    model.scaler = Some(scaler);
    model.meta.seed = config.seed;
    model.meta.epochs_trained += config.epochs;
    model.meta.config_hash = config.hash();
    Ok((model, log))
}
