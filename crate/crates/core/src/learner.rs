//! One-hidden-layer classifier trained with cross-entropy plus a
//! distillation penalty towards the broadcast global knowledge.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes `input → hidden (tanh) → classes (softmax)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: usize, classes: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || classes < 2 {
            return Err(Error::InvalidInput(format!(
                "architecture {input}-{hidden}-{classes} needs positive sizes and at least two classes"
            )));
        }
        Ok(Self { input, hidden, classes })
    }

    /// Parameter count `D`.
    pub fn num_params(&self) -> usize {
        self.hidden * (self.input + 1) + self.classes * (self.hidden + 1)
    }

    // offsets of W1, b1, W2, b2 in the flat vector
    fn offsets(&self) -> (usize, usize, usize, usize) {
        let w1 = 0;
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (w1, b1, w2, b2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            theta: vec![0.0; arch.num_params()],
        }
    }

    /// Gaussian weights with variance `1/fan_in`, zero biases.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let (w1, b1, w2, b2) = arch.offsets();
        let s1 = 1.0 / (arch.input as f64).sqrt();
        let s2 = 1.0 / (arch.hidden as f64).sqrt();
        for v in &mut p.theta[w1..b1] {
            *v = s1 * Distribution::<f64>::sample(&StandardNormal, rng);
        }
        for v in &mut p.theta[w2..b2] {
            *v = s2 * Distribution::<f64>::sample(&StandardNormal, rng);
        }
        p
    }

    pub fn from_vec(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        let p = Self { arch, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.arch.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for an architecture with {}",
                self.theta.len(),
                self.arch.num_params()
            )));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Labeled feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch("one label per sample required".into()));
        }
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::DimensionMismatch("samples differ in feature dimension".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidInput(format!("label {l} out of range")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// `γ`
    pub distill_weight: f64,
    /// `η₀`
    pub init_lr: f64,
    pub rounds: usize,
    /// Local steps per round; more than one switches to minibatch SGD.
    pub local_epochs: usize,
    /// Minibatch size when `local_epochs > 1`.
    pub batch_size: usize,
    /// Upper bound on `η_t`, typically `1/L₁`.
    pub lr_cap: Option<f64>,
    pub hidden: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            distill_weight: 0.1,
            init_lr: 0.5,
            rounds: 200,
            local_epochs: 1,
            batch_size: 32,
            lr_cap: None,
            hidden: 32,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distill_weight >= 0.0) || !self.distill_weight.is_finite() {
            return Err(Error::Config("distill_weight must be nonnegative".into()));
        }
        if !(self.init_lr > 0.0) {
            return Err(Error::Config("init_lr must be positive".into()));
        }
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config("rounds, local_epochs, batch_size and hidden must be positive".into()));
        }
        if let Some(cap) = self.lr_cap {
            if !(cap > 0.0) {
                return Err(Error::Config("lr_cap must be positive".into()));
            }
        }
        Ok(())
    }
}

fn check_input(params: &ModelParams, x: &[f64]) -> Result<()> {
    if x.len() != params.arch.input {
        return Err(Error::DimensionMismatch(format!(
            "feature dimension {} but the model expects {}",
            x.len(),
            params.arch.input
        )));
    }
    Ok(())
}

fn hidden_layer(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    let a = params.arch;
    let (w1, b1, _, _) = a.offsets();
    (0..a.hidden)
        .map(|j| {
            let row = &params.theta[w1 + j * a.input..w1 + (j + 1) * a.input];
            (params.theta[b1 + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
        })
        .collect()
}

fn logits(params: &ModelParams, h: &[f64]) -> Vec<f64> {
    let a = params.arch;
    let (_, _, w2, b2) = a.offsets();
    (0..a.classes)
        .map(|k| {
            let row = &params.theta[w2 + k * a.hidden..w2 + (k + 1) * a.hidden];
            params.theta[b2 + k] + row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Soft prediction `G_θ(u)`.
pub fn forward(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    check_input(params, x)?;
    Ok(softmax(&logits(params, &hidden_layer(params, x))))
}

pub fn predict(params: &ModelParams, x: &[f64]) -> Result<usize> {
    let p = forward(params, x)?;
    Ok(p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i))
}

/// Fraction of correctly classified samples.
pub fn accuracy(params: &ModelParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        hits += usize::from(predict(params, x)? == y);
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Loss value split into its two terms, with the gradient of the total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    pub cross_entropy: f64,
    /// Mean of `‖G_θ(u) − r̂^v‖²`, without the factor `γ`.
    pub distillation: f64,
    pub grad: Vec<f64>,
}

/// `F = (1/B) Σ_b [CE(G_θ(u_b), v_b) + γ ‖G_θ(u_b) − r̂^{v_b}‖²]` and `∇F`.
/// `knowledge[k]` is the real-valued global knowledge of class `k`; it may
/// be `None` only when `gamma == 0`.
pub fn loss_and_grad(
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    knowledge: Option<&[Vec<f64>]>,
    gamma: f64,
) -> Result<LossAndGrad> {
    let a = params.arch;
    if indices.is_empty() {
        return Err(Error::InvalidInput("loss over an empty batch".into()));
    }
    if data.num_classes != a.classes {
        return Err(Error::DimensionMismatch("dataset and model disagree on K".into()));
    }
    if gamma != 0.0 {
        let k = knowledge.ok_or_else(|| Error::InvalidInput("distillation needs global knowledge".into()))?;
        if k.len() != a.classes || k.iter().any(|r| r.len() != a.classes) {
            return Err(Error::DimensionMismatch("global knowledge must be K x K".into()));
        }
    }
    let (w1, b1, w2, b2) = a.offsets();
    let mut grad = vec![0.0; a.num_params()];
    let (mut ce, mut dist) = (0.0, 0.0);
    let mut dz = vec![0.0; a.classes];
    let mut dh = vec![0.0; a.hidden];
    for &b in indices {
        let x = &data.features[b];
        let y = data.labels[b];
        check_input(params, x)?;
        let h = hidden_layer(params, x);
        let z = logits(params, &h);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let p: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
        ce += lse - z[y];
        for k in 0..a.classes {
            dz[k] = p[k] - f64::from(u8::from(k == y));
        }
        if gamma != 0.0 {
            let r = &knowledge.expect("checked above")[y];
            let g: Vec<f64> = p.iter().zip(r).map(|(pi, ri)| 2.0 * gamma * (pi - ri)).collect();
            dist += p.iter().zip(r).map(|(pi, ri)| (pi - ri).powi(2)).sum::<f64>();
            let pg: f64 = p.iter().zip(&g).map(|(pi, gi)| pi * gi).sum();
            for k in 0..a.classes {
                dz[k] += p[k] * (g[k] - pg);
            }
        } else if let Some(r) = knowledge.and_then(|k| k.get(y)) {
            dist += p.iter().zip(r).map(|(pi, ri)| (pi - ri).powi(2)).sum::<f64>();
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..a.classes {
            grad[b2 + k] += dz[k];
            let row = w2 + k * a.hidden;
            for j in 0..a.hidden {
                grad[row + j] += dz[k] * h[j];
                dh[j] += dz[k] * params.theta[row + j];
            }
        }
        for j in 0..a.hidden {
            let da = dh[j] * (1.0 - h[j] * h[j]);
            grad[b1 + j] += da;
            let row = w1 + j * a.input;
            for (i, xi) in x.iter().enumerate() {
                grad[row + i] += da * xi;
            }
        }
    }
    let inv = 1.0 / indices.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    let (ce, dist) = (ce * inv, dist * inv);
    Ok(LossAndGrad {
        loss: ce + gamma * dist,
        cross_entropy: ce,
        distillation: dist,
        grad,
    })
}

/// `η_t = η₀ / √(t+1)`, capped by `lr_cap`.
pub fn lr_schedule(t: usize, config: &LearnerConfig) -> f64 {
    let eta = config.init_lr / ((t + 1) as f64).sqrt();
    config.lr_cap.map_or(eta, |cap| eta.min(cap))
}

/// `θ ← θ − η ∇F`.
pub fn local_update(theta: &mut [f64], grad: &[f64], eta: f64) -> Result<()> {
    if theta.len() != grad.len() {
        return Err(Error::DimensionMismatch("gradient and parameters differ in length".into()));
    }
    theta.iter_mut().zip(grad).for_each(|(t, g)| *t -= eta * g);
    Ok(())
}

/// One round of local training on the samples `indices` of `data`. With
/// `local_epochs == 1` this is a single full-batch gradient step; otherwise
/// `local_epochs` minibatch steps on shuffled batches. Returns the loss
/// breakdown of the first step.
pub fn train_round<R: Rng + ?Sized>(
    params: &mut ModelParams,
    data: &Dataset,
    indices: &[usize],
    knowledge: Option<&[Vec<f64>]>,
    config: &LearnerConfig,
    round: usize,
    rng: &mut R,
) -> Result<LossAndGrad> {
    let eta = lr_schedule(round, config);
    if config.local_epochs == 1 {
        let lg = loss_and_grad(params, data, indices, knowledge, config.distill_weight)?;
        local_update(&mut params.theta, &lg.grad, eta)?;
        return Ok(lg);
    }
    let mut order = indices.to_vec();
    let mut first = None;
    let mut cursor = order.len();
    for _ in 0..config.local_epochs {
        if cursor >= order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let lg = loss_and_grad(params, data, &order[cursor..end], knowledge, config.distill_weight)?;
        cursor = end;
        local_update(&mut params.theta, &lg.grad, eta)?;
        first.get_or_insert(lg);
    }
    Ok(first.expect("at least one local step"))
}

const CHECKPOINT_HEADER: &str = "otafd-model v1";

/// Text checkpoint: header, layer sizes, parameter count, then one value
/// per line in shortest round-trip form.
pub fn save_checkpoint(params: &ModelParams) -> String {
    let a = params.arch;
    let mut out = format!("{CHECKPOINT_HEADER}\n{} {} {}\n{}\n", a.input, a.hidden, a.classes, params.theta.len());
    for v in &params.theta {
        out.push_str(&format!("{v:?}\n"));
    }
    out
}

pub fn load_checkpoint(text: &str) -> Result<ModelParams> {
    let bad = |m: &str| Error::InvalidInput(format!("malformed checkpoint: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_HEADER) {
        return Err(bad("header"));
    }
    let sizes: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("sizes"))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad("sizes")))
        .collect::<Result<_>>()?;
    if sizes.len() != 3 {
        return Err(bad("sizes"));
    }
    let arch = Architecture::new(sizes[0], sizes[1], sizes[2])?;
    let d: usize = lines.next().ok_or_else(|| bad("count"))?.trim().parse().map_err(|_| bad("count"))?;
    let theta: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse().map_err(|_| bad("value")))
        .collect::<Result<_>>()?;
    if theta.len() != d {
        return Err(bad("count"));
    }
    ModelParams::from_vec(arch, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (ModelParams, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let arch = Architecture::new(4, 6, 3).unwrap();
        let p = ModelParams::random(arch, &mut rng);
        let features = (0..10).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let labels = (0..10).map(|i| i % 3).collect();
        (p, Dataset::new(features, labels, 3).unwrap())
    }

    #[test]
    fn zero_model_is_uniform() {
        let p = ModelParams::zeros(Architecture::new(3, 4, 5).unwrap());
        let out = forward(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert!(out.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn dominant_logit_saturates() {
        let out = softmax(&[50.0, 0.0, 0.0]);
        assert!((out[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wrong_feature_dimension() {
        let (p, _) = toy();
        assert!(matches!(forward(&p, &[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (mut p, data) = toy();
        let know = vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8]];
        let idx: Vec<usize> = (0..data.len()).collect();
        let lg = loss_and_grad(&p, &data, &idx, Some(&know), 0.7).unwrap();
        let h = 1e-6;
        for j in 0..p.dim() {
            let orig = p.theta[j];
            p.theta[j] = orig + h;
            let up = loss_and_grad(&p, &data, &idx, Some(&know), 0.7).unwrap().loss;
            p.theta[j] = orig - h;
            let down = loss_and_grad(&p, &data, &idx, Some(&know), 0.7).unwrap().loss;
            p.theta[j] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - lg.grad[j]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {j}: {fd} vs {}", lg.grad[j]);
        }
    }

    #[test]
    fn missing_knowledge_is_an_error() {
        let (p, data) = toy();
        assert!(loss_and_grad(&p, &data, &[0, 1], None, 0.5).is_err());
        assert!(loss_and_grad(&p, &data, &[0, 1], None, 0.0).is_ok());
    }

    #[test]
    fn schedule_values() {
        let cfg = LearnerConfig {
            init_lr: 0.01,
            ..LearnerConfig::default()
        };
        assert_eq!(lr_schedule(0, &cfg), 0.01);
        assert_eq!(lr_schedule(3, &cfg), 0.005);
        assert!((lr_schedule(99, &cfg) - 0.001).abs() < 1e-18);
        let capped = LearnerConfig {
            lr_cap: Some(0.004),
            ..cfg
        };
        assert_eq!(lr_schedule(0, &capped), 0.004);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (p, _) = toy();
        assert_eq!(load_checkpoint(&save_checkpoint(&p)).unwrap(), p);
        assert!(load_checkpoint("nope").is_err());
    }
}
