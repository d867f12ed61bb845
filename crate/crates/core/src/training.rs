//! Full-batch MSE training of an FM with analytic gradients and Adam.

use serde::{Deserialize, Serialize};

use crate::bbo::DataPoint;
use crate::error::{check_len, Error, Result};
use crate::fm::{fm_eval_unchecked, init_params, FmParams};
use crate::problem::BinaryVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub n_epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, n_epochs: 200, adam_beta1: 0.9, adam_beta2: 0.999, adam_eps: 1e-8 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Config { key: key.into(), message: msg.into() });
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate", "must be > 0");
        }
        if self.n_epochs == 0 {
            return bad("n_epochs", "must be >= 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return bad("adam_beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta2", "must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps", "must be > 0");
        }
        Ok(())
    }
}

/// Gradient of the FM output with respect to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradVector {
    pub d_w0: f64,
    pub d_w: Vec<f64>,
    /// Row-major `n_bit × k`, same layout as [`FmParams::v_flat`].
    pub d_v: Vec<f64>,
}

pub fn fm_gradient(params: &FmParams, x: &BinaryVector) -> Result<GradVector> {
    check_len(params.n_bit(), x.len())?;
    let k = params.k();
    let sums = latent_sums(params, x.bits());
    let mut d_v = vec![0.0; params.v_flat().len()];
    for (i, &xi) in x.bits().iter().enumerate() {
        if xi == 1 {
            for l in 0..k {
                d_v[i * k + l] = sums[l] - params.v(i, l);
            }
        }
    }
    Ok(GradVector { d_w0: 1.0, d_w: x.bits().iter().map(|&b| b as f64).collect(), d_v })
}

fn latent_sums(params: &FmParams, x: &[u8]) -> Vec<f64> {
    let mut sums = vec![0.0; params.k()];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 1 {
            for (s, v) in sums.iter_mut().zip(params.v_row(i)) {
                *s += v;
            }
        }
    }
    sums
}

pub fn mse_loss(params: &FmParams, data: &[DataPoint]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("MSE of an empty dataset".into()));
    }
    let mut total = 0.0;
    for p in data {
        check_len(params.n_bit(), p.x.len())?;
        let r = fm_eval_unchecked(params, p.x.bits()) - p.y;
        total += r * r;
    }
    Ok(total / data.len() as f64)
}

/// Loss and gradient of the MSE in one pass over the data.
fn loss_and_gradient(params: &FmParams, data: &[DataPoint], grad: &mut [f64]) -> f64 {
    let n = params.n_bit();
    let k = params.k();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 2.0 / data.len() as f64;
    let mut loss = 0.0;
    let mut sums = vec![0.0; k];
    for p in data {
        let x = p.x.bits();
        sums.iter_mut().for_each(|s| *s = 0.0);
        let mut f = params.w0;
        let mut sq = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 1 {
                f += params.w[i];
                for (l, &v) in params.v_row(i).iter().enumerate() {
                    sums[l] += v;
                    sq += v * v;
                }
            }
        }
        f += 0.5 * (sums.iter().map(|s| s * s).sum::<f64>() - sq);
        let r = f - p.y;
        loss += r * r;
        let c = scale * r;
        grad[0] += c;
        let (gw, gv) = grad[1..].split_at_mut(n);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 1 {
                gw[i] += c;
                let row = params.v_row(i);
                let gv_row = &mut gv[i * k..(i + 1) * k];
                for l in 0..k {
                    gv_row[l] += c * (sums[l] - row[l]);
                }
            }
        }
    }
    loss / data.len() as f64
}

/// Adam state over a flat parameter vector.
#[derive(Clone, Debug)]
struct Adam {
    cfg: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: TrainConfig, len: usize) -> Self {
        Self { cfg, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// Returns the update to subtract from each parameter.
    fn step(&mut self, grad: &[f64], update: &mut [f64]) {
        self.t += 1;
        let TrainConfig { learning_rate, adam_beta1: b1, adam_beta2: b2, adam_eps: eps, .. } = self.cfg;
        let bc1 = 1.0 - b1.powi(self.t);
        let bc2 = 1.0 - b2.powi(self.t);
        for (((m, v), &g), u) in self.m.iter_mut().zip(&mut self.v).zip(grad).zip(update.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *u = learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Outcome of a training run including the loss before each epoch's step.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: FmParams,
    pub losses: Vec<f64>,
    pub final_loss: f64,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }
}

pub fn train_fm(
    data: &[DataPoint],
    n_bit: usize,
    k: usize,
    init_std: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FmParams> {
    train_fm_with_report(data, n_bit, k, init_std, cfg, seed).map(|r| r.params)
}

pub fn train_fm_with_report(
    data: &[DataPoint],
    n_bit: usize,
    k: usize,
    init_std: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    cfg.validate()?;
    for p in data {
        check_len(n_bit, p.x.len())?;
    }
    let mut params = init_params(n_bit, k, init_std, seed)?;
    let n_params = params.n_params();
    let mut adam = Adam::new(*cfg, n_params);
    let mut grad = vec![0.0; n_params];
    let mut update = vec![0.0; n_params];
    let mut losses = Vec::with_capacity(cfg.n_epochs);

    for epoch in 0..cfg.n_epochs {
        let loss = loss_and_gradient(&params, data, &mut grad);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        losses.push(loss);
        adam.step(&grad, &mut update);
        params.w0 -= update[0];
        for (w, u) in params.w.iter_mut().zip(&update[1..=n_bit]) {
            *w -= u;
        }
        for (v, u) in params.v_flat_mut().iter_mut().zip(&update[1 + n_bit..]) {
            *v -= u;
        }
    }
    let final_loss = mse_loss(&params, data)?;
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: cfg.n_epochs });
    }
    Ok(TrainReport { params, losses, final_loss })
}
