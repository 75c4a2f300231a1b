//! Single-layer Elman recurrent network with a sigmoid regression head:
//!
//! ```text
//! h_t = tanh(U_h h_{t-1} + W_x x_t + b_h)
//! y   = σ(W_o h_T + b_o)
//! ```
//!
//! Backpropagation through time is written out by hand and is generic in
//! the number of steps.

mod adamax;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureWindow, Scaler};

pub use adamax::{AdamaxConfig, AdamaxState};
pub use train::{train, EpochLog, TrainConfig, TrainingLog};

/// Version tag written into every model file.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Trained on the source vehicle, deployed as is.
    G,
    /// Trained from scratch on the target vehicle.
    S,
    /// Source model recalibrated on a short target slice.
    R,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::G => "G-WhONet",
            Variant::S => "S-WhONet",
            Variant::R => "R-WhONet",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Named parameter tensors, used to freeze parts of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    WX,
    UH,
    BH,
    WO,
    BO,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::WX,
        ParamGroup::UH,
        ParamGroup::BH,
        ParamGroup::WO,
        ParamGroup::BO,
    ];
}

impl std::str::FromStr for ParamGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w_x" => Ok(ParamGroup::WX),
            "u_h" => Ok(ParamGroup::UH),
            "b_h" => Ok(ParamGroup::BH),
            "w_o" => Ok(ParamGroup::WO),
            "b_o" => Ok(ParamGroup::BO),
            other => Err(Error::InvalidConfig(format!(
                "unknown parameter group '{other}'"
            ))),
        }
    }
}

/// Weights (or gradients of the same shapes). Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// hidden × input
    pub w_x: Vec<f64>,
    /// hidden × hidden
    pub u_h: Vec<f64>,
    pub b_h: Vec<f64>,
    /// 1 × hidden
    pub w_o: Vec<f64>,
    pub b_o: f64,
}

impl Params {
    pub fn zeros(input: usize, hidden: usize) -> Params {
        Params {
            w_x: vec![0.0; hidden * input],
            u_h: vec![0.0; hidden * hidden],
            b_h: vec![0.0; hidden],
            w_o: vec![0.0; hidden],
            b_o: 0.0,
        }
    }

    pub fn groups(&self) -> [(ParamGroup, &[f64]); 5] {
        [
            (ParamGroup::WX, &self.w_x),
            (ParamGroup::UH, &self.u_h),
            (ParamGroup::BH, &self.b_h),
            (ParamGroup::WO, &self.w_o),
            (ParamGroup::BO, std::slice::from_ref(&self.b_o)),
        ]
    }

    pub fn groups_mut(&mut self) -> [(ParamGroup, &mut [f64]); 5] {
        [
            (ParamGroup::WX, &mut self.w_x),
            (ParamGroup::UH, &mut self.u_h),
            (ParamGroup::BH, &mut self.b_h),
            (ParamGroup::WO, &mut self.w_o),
            (ParamGroup::BO, std::slice::from_mut(&mut self.b_o)),
        ]
    }

    pub fn len(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All values in group order.
    pub fn flatten(&self) -> Vec<f64> {
        self.groups()
            .iter()
            .flat_map(|(_, g)| g.iter().copied())
            .collect()
    }

    pub fn get(&self, mut index: usize) -> f64 {
        for (_, g) in self.groups() {
            if index < g.len() {
                return g[index];
            }
            index -= g.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set(&mut self, mut index: usize, value: f64) {
        for (_, g) in self.groups_mut() {
            if index < g.len() {
                g[index] = value;
                return;
            }
            index -= g.len();
        }
        panic!("parameter index out of range");
    }

    fn fill(&mut self, value: f64) {
        for (_, g) in self.groups_mut() {
            g.fill(value);
        }
    }

    fn all_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }

    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, g) in self.groups() {
            for v in g {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub steps: usize,
}

/// Where a model came from and how it was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variant: Variant,
    pub domain_id: String,
    pub seed: u64,
    pub epochs_trained: usize,
    pub config_hash: String,
    /// Wheel radius of the physics model whose error this network predicts.
    pub wheel_radius: f64,
    /// Hash of the model this one was recalibrated from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_seconds: Option<f64>,
    /// How the scaler was obtained (e.g. fitted, reused from the parent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler_policy: Option<String>,
    pub normalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnModel {
    pub format_version: u32,
    pub dims: Dims,
    pub weights: Params,
    pub scaler: Option<Scaler>,
    pub meta: ModelMeta,
}

/// Activations recorded by [`forward`] for use in [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    dims: Dims,
    inputs: Vec<f64>,
    /// tanh outputs per step, before dropout
    hidden: Vec<Vec<f64>>,
    /// per-step multipliers (0 or 1/(1-p)); `None` when no dropout
    masks: Option<Vec<Vec<f64>>>,
    pub y: f64,
}

impl ForwardCache {
    fn dropped(&self, step: usize) -> impl Iterator<Item = f64> + '_ {
        let mask = self.masks.as_ref().map(|m| &m[step]);
        self.hidden[step]
            .iter()
            .enumerate()
            .map(move |(j, h)| mask.map_or(*h, |m| h * m[j]))
    }
}

/// Logistic function, kept strictly inside (0, 1) even where it would
/// round to an endpoint (z above about 37 or below about -745).
pub fn sigmoid(z: f64) -> f64 {
    let y = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl RnnModel {
    /// A model with all weights zero.
    pub fn zeros(dims: Dims, variant: Variant) -> RnnModel {
        RnnModel {
            format_version: MODEL_FORMAT_VERSION,
            dims,
            weights: Params::zeros(dims.input, dims.hidden),
            scaler: None,
            meta: ModelMeta {
                variant,
                domain_id: String::new(),
                seed: 0,
                epochs_trained: 0,
                config_hash: String::new(),
                wheel_radius: 0.0,
                parent_hash: None,
                slice_seconds: None,
                scaler_policy: None,
                normalization: "per-column min-max".into(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Dims {
            input,
            hidden,
            steps,
        } = self.dims;
        if hidden == 0 || input == 0 || steps == 0 {
            return Err(Error::ShapeMismatch("zero-sized model dimension".into()));
        }
        let w = &self.weights;
        if w.w_x.len() != hidden * input
            || w.u_h.len() != hidden * hidden
            || w.b_h.len() != hidden
            || w.w_o.len() != hidden
        {
            return Err(Error::ShapeMismatch(
                "weight arrays do not match dims".into(),
            ));
        }
        if !w.all_finite() {
            return Err(Error::ShapeMismatch("non-finite weight".into()));
        }
        if let Some(s) = &self.scaler {
            if s.features.len() != input * steps {
                return Err(Error::ShapeMismatch(format!(
                    "scaler has {} feature columns, model expects {}",
                    s.features.len(),
                    input * steps
                )));
            }
        }
        Ok(())
    }

    /// Refuses models that cannot produce meaningful predictions.
    pub fn ensure_trained(&self) -> Result<&Scaler> {
        if self.meta.epochs_trained == 0 {
            return Err(Error::UntrainedModel);
        }
        self.scaler.as_ref().ok_or(Error::ScalerMissing)
    }

    /// Denormalized ε prediction for a raw (unscaled) window.
    pub fn predict_eps(&self, raw: &FeatureWindow) -> Result<f64> {
        let scaler = self.ensure_trained()?;
        let window = scaler.apply_window(raw)?;
        let (y, _) = forward_unchecked(self, &window.values, None)?;
        Ok(scaler.invert_label(y))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<RnnModel> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion(probe.format_version));
        }
        let model: RnnModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<RnnModel> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        RnnModel::from_json(&text)
    }

    /// SHA-256 of the serialized model.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

/// Runs the network over `inputs` (steps × input values, oldest step
/// first). `masks`, when given, holds one multiplier per hidden unit and
/// step, applied to each hidden state before it feeds the next step and
/// the output head.
pub fn forward(
    model: &RnnModel,
    inputs: &[f64],
    masks: Option<&[Vec<f64>]>,
) -> Result<(f64, ForwardCache)> {
    let (y, mut cache) = forward_unchecked(model, inputs, masks)?;
    cache.fingerprint = model.weights.fingerprint();
    Ok((y, cache))
}

/// [`forward`] without recording the weight fingerprint.
pub(crate) fn forward_unchecked(
    model: &RnnModel,
    inputs: &[f64],
    masks: Option<&[Vec<f64>]>,
) -> Result<(f64, ForwardCache)> {
    let Dims {
        input,
        hidden,
        steps,
    } = model.dims;
    if inputs.len() != input * steps {
        return Err(Error::ShapeMismatch(format!(
            "got {} input values, model expects {} steps × {}",
            inputs.len(),
            steps,
            input
        )));
    }
    if let Some(m) = masks {
        if m.len() != steps || m.iter().any(|v| v.len() != hidden) {
            return Err(Error::ShapeMismatch("dropout mask shape".into()));
        }
    }
    let w = &model.weights;
    let mut hs: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut prev = vec![0.0; hidden];
    for s in 0..steps {
        let x = &inputs[s * input..(s + 1) * input];
        let mut h = vec![0.0; hidden];
        for (i, h_i) in h.iter_mut().enumerate() {
            let mut a = w.b_h[i];
            let wx = &w.w_x[i * input..(i + 1) * input];
            a += wx.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
            let uh = &w.u_h[i * hidden..(i + 1) * hidden];
            a += uh.iter().zip(&prev).map(|(p, q)| p * q).sum::<f64>();
            *h_i = a.tanh();
        }
        prev = match masks {
            Some(m) => h.iter().zip(&m[s]).map(|(a, b)| a * b).collect(),
            None => h.clone(),
        };
        hs.push(h);
    }
    let z = w.b_o + w.w_o.iter().zip(&prev).map(|(a, b)| a * b).sum::<f64>();
    let y = sigmoid(z);
    Ok((
        y,
        ForwardCache {
            fingerprint: 0,
            dims: model.dims,
            inputs: inputs.to_vec(),
            hidden: hs,
            masks: masks.map(<[Vec<f64>]>::to_vec),
            y,
        },
    ))
}

/// Gradients of the loss with respect to every parameter, given the loss
/// derivative `d_loss` with respect to the network output.
pub fn backward(model: &RnnModel, cache: &ForwardCache, d_loss: f64) -> Result<Params> {
    if cache.dims != model.dims || cache.fingerprint != model.weights.fingerprint() {
        return Err(Error::StaleCache);
    }
    let mut grads = Params::zeros(model.dims.input, model.dims.hidden);
    accumulate_gradients(model, cache, d_loss, &mut grads);
    Ok(grads)
}

#[allow(clippy::needless_range_loop)]
fn accumulate_gradients(model: &RnnModel, cache: &ForwardCache, d_loss: f64, grads: &mut Params) {
    let Dims {
        input,
        hidden,
        steps,
    } = model.dims;
    let w = &model.weights;
    let y = cache.y;
    let dz = d_loss * y * (1.0 - y);
    if dz == 0.0 {
        return;
    }
    grads.b_o += dz;
    let last: Vec<f64> = cache.dropped(steps - 1).collect();
    for (g, h) in grads.w_o.iter_mut().zip(&last) {
        *g += dz * h;
    }
    // gradient w.r.t. the (post-dropout) hidden state of the current step
    let mut d_state: Vec<f64> = w.w_o.iter().map(|wo| dz * wo).collect();
    let mut da = vec![0.0; hidden];
    for s in (0..steps).rev() {
        let h = &cache.hidden[s];
        let mask = cache.masks.as_ref().map(|m| &m[s]);
        for i in 0..hidden {
            let dh = d_state[i] * mask.map_or(1.0, |m| m[i]);
            da[i] = dh * (1.0 - h[i] * h[i]);
        }
        let x = &cache.inputs[s * input..(s + 1) * input];
        for i in 0..hidden {
            let a = da[i];
            if a == 0.0 {
                continue;
            }
            grads.b_h[i] += a;
            for (g, xv) in grads.w_x[i * input..(i + 1) * input].iter_mut().zip(x) {
                *g += a * xv;
            }
        }
        if s > 0 {
            let prev: Vec<f64> = cache.dropped(s - 1).collect();
            for i in 0..hidden {
                let a = da[i];
                for (g, p) in grads.u_h[i * hidden..(i + 1) * hidden]
                    .iter_mut()
                    .zip(&prev)
                {
                    *g += a * p;
                }
            }
            // U_hᵀ da
            for v in d_state.iter_mut() {
                *v = 0.0;
            }
            for i in 0..hidden {
                let a = da[i];
                for (j, u) in w.u_h[i * hidden..(i + 1) * hidden].iter().enumerate() {
                    d_state[j] += u * a;
                }
            }
        }
    }
}

/// Mean absolute error.
pub fn mae_loss(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

/// Derivative of |pred − target| with the subgradient at zero taken as 0.
pub fn mae_grad(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(hidden: usize) -> Dims {
        Dims {
            input: 40,
            hidden,
            steps: 2,
        }
    }

    #[test]
    fn zero_model_outputs_half() {
        let m = RnnModel::zeros(dims(4), Variant::G);
        let (y, cache) = forward(&m, &[0.3; 80], None).unwrap();
        assert_eq!(y, 0.5);
        assert!(cache.hidden.iter().flatten().all(|h| *h == 0.0));
    }

    #[test]
    fn saturated_bias_hand_value() {
        let mut m = RnnModel::zeros(dims(1), Variant::G);
        m.weights.b_h[0] = 10.0;
        m.weights.w_o[0] = 1.0;
        let (y, _) = forward(&m, &[0.7; 80], None).unwrap();
        assert!((y - sigmoid(10f64.tanh())).abs() < 1e-15);
        assert!((y - 0.7311).abs() < 1e-4 && (y - 0.731_058_6).abs() < 1e-6);
    }

    #[test]
    fn zero_window_first_step_ignores_recurrence() {
        let mut a = RnnModel::zeros(dims(3), Variant::G);
        a.weights.b_h = vec![0.2, -0.1, 0.4];
        a.weights.w_o = vec![1.0, 2.0, -1.0];
        let mut b = a.clone();
        b.weights.u_h = vec![0.5; 9];
        let (_, ca) = forward(&a, &[0.0; 80], None).unwrap();
        let (_, cb) = forward(&b, &[0.0; 80], None).unwrap();
        assert_eq!(ca.hidden[0], cb.hidden[0]);
        assert_ne!(ca.hidden[1], cb.hidden[1]);
    }

    #[test]
    fn shape_errors() {
        let m = RnnModel::zeros(dims(2), Variant::G);
        assert!(matches!(
            forward(&m, &[0.0; 79], None),
            Err(Error::ShapeMismatch(_))
        ));
        let bad_mask = vec![vec![1.0; 2]];
        assert!(matches!(
            forward(&m, &[0.0; 80], Some(&bad_mask)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn mae_cases() {
        assert_eq!(mae_loss(&[0.1, 0.9], &[0.1, 0.9]).unwrap(), 0.0);
        assert!((mae_loss(&[0.2, 0.8], &[0.0, 1.0]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(mae_loss(&[0.5], &[0.0]).unwrap(), 0.5);
        assert!(matches!(
            mae_loss(&[0.5], &[]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(mae_loss(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn exact_fit_gives_zero_gradients() {
        let mut m = RnnModel::zeros(dims(3), Variant::G);
        m.weights
            .w_x
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = (i as f64 * 0.37).sin() * 0.1);
        let x: Vec<f64> = (0..80).map(|i| (i as f64 * 0.11).cos().abs()).collect();
        let (y, cache) = forward(&m, &x, None).unwrap();
        let g = backward(&m, &cache, mae_grad(y, y)).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stale_cache_detected() {
        let mut m = RnnModel::zeros(dims(2), Variant::G);
        let (_, cache) = forward(&m, &[0.5; 80], None).unwrap();
        m.weights.b_o = 0.1;
        assert!(matches!(backward(&m, &cache, 1.0), Err(Error::StaleCache)));
        let other = RnnModel::zeros(dims(3), Variant::G);
        assert!(matches!(
            backward(&other, &cache, 1.0),
            Err(Error::StaleCache)
        ));
    }

    #[test]
    fn model_file_round_trip_and_version_guard() {
        let mut m = RnnModel::zeros(dims(2), Variant::R);
        m.weights.w_x[3] = 0.1 + 0.2;
        m.weights.b_o = -1.0 / 3.0;
        m.meta.parent_hash = Some("abc".into());
        let text = m.to_json().unwrap();
        let back = RnnModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), text);
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            RnnModel::from_json(&bumped),
            Err(Error::FormatVersion(9))
        ));
    }

    #[test]
    fn untrained_model_is_refused() {
        let m = RnnModel::zeros(dims(2), Variant::S);
        let w = FeatureWindow {
            t_end: 2.0,
            values: vec![0.0; 80],
        };
        assert!(matches!(m.predict_eps(&w), Err(Error::UntrainedModel)));
    }

    #[test]
    fn param_group_names_parse() {
        for (name, g) in [
            ("w_x", ParamGroup::WX),
            ("u_h", ParamGroup::UH),
            ("b_o", ParamGroup::BO),
        ] {
            assert_eq!(name.parse::<ParamGroup>().unwrap(), g);
            assert_eq!(serde_json::to_string(&g).unwrap(), format!("\"{name}\""));
        }
        assert!("w_q".parse::<ParamGroup>().is_err());
    }
}
