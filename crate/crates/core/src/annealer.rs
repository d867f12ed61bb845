//! QUBO samplers. Simulated annealing ships by default; other samplers plug in
//! through [`Sampler`] and a [`SamplerRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fm::{fm_eval, FmParams, QuboMatrix};
use crate::problem::BinaryVector;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub n_reads: usize,
    pub n_sweeps: usize,
    pub beta_hot: Option<f64>,
    pub beta_cold: Option<f64>,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self { n_reads: 10, n_sweeps: 100, beta_hot: None, beta_cold: None }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config { key: key.into(), message: msg });
        if self.n_reads == 0 {
            return bad("n_reads", "must be >= 1".into());
        }
        if self.n_sweeps == 0 {
            return bad("n_sweeps", "must be >= 1".into());
        }
        if let (Some(hot), Some(cold)) = (self.beta_hot, self.beta_cold) {
            if !(hot > 0.0 && hot < cold) {
                return bad("beta_hot", format!("need 0 < beta_hot < beta_cold, got {hot} and {cold}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Read {
    pub x: BinaryVector,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ReadSet {
    pub reads: Vec<Read>,
}

impl ReadSet {
    pub fn lowest_energy(&self) -> Option<&Read> {
        self.reads.iter().reduce(|best, r| if r.energy < best.energy { r } else { best })
    }
}

/// Anything that turns a QUBO into a set of low-energy candidates.
pub trait Sampler: Send + Sync {
    fn name(&self) -> &str;

    fn sample(&self, q: &QuboMatrix, cfg: &AnnealConfig, seed: u64) -> Result<ReadSet>;
}

/// `(beta_hot, beta_cold)` derived from the coefficient magnitudes.
pub fn default_beta_range(q: &QuboMatrix) -> (f64, f64) {
    let n = q.n_bit();
    let mut max_delta = 0.0f64;
    for i in 0..n {
        let delta: f64 = (0..n).map(|j| q.get(i, j).abs()).sum();
        max_delta = max_delta.max(delta);
    }
    let min_nonzero = q.entries().map(|(_, _, v)| v.abs()).filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if max_delta == 0.0 || !min_nonzero.is_finite() {
        return (0.1, 10.0);
    }
    let hot = std::f64::consts::LN_2 / max_delta;
    let mut cold = 100f64.ln() / min_nonzero.max(1e-12);
    while cold <= hot {
        cold *= 2.0;
    }
    (hot, cold)
}

/// Geometric interpolation from `hot` to `cold` over `n_sweeps` sweeps.
pub fn geometric_schedule(hot: f64, cold: f64, n_sweeps: usize) -> Vec<f64> {
    if n_sweeps == 1 {
        return vec![cold];
    }
    let ratio = cold / hot;
    (0..n_sweeps).map(|s| hot * ratio.powf(s as f64 / (n_sweeps - 1) as f64)).collect()
}

/// Single-flip Metropolis annealing with sequential sweeps.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimulatedAnnealing;

impl SimulatedAnnealing {
    fn anneal_once<R: Rng>(q: &QuboMatrix, couplings: &[f64], schedule: &[f64], rng: &mut R) -> Read {
        let n = q.n_bit();
        let mut x = BinaryVector::random(n, rng);
        // field[i] = energy gained by switching x_i on, given the other bits.
        let mut field: Vec<f64> = (0..n)
            .map(|i| {
                q.get(i, i) + (0..n).filter(|&j| j != i && x.get(j) == 1).map(|j| couplings[i * n + j]).sum::<f64>()
            })
            .collect();
        let mut energy = crate::fm::qubo_eval_unchecked(q, x.bits());

        for &beta in schedule {
            for i in 0..n {
                let on = x.get(i) == 1;
                let delta = if on { -field[i] } else { field[i] };
                let accept = delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp();
                if accept {
                    x.flip(i);
                    energy += delta;
                    let sign = if on { -1.0 } else { 1.0 };
                    let row = &couplings[i * n..(i + 1) * n];
                    for (f, c) in field.iter_mut().zip(row) {
                        *f += sign * c;
                    }
                }
            }
        }
        Read { x, energy }
    }
}

impl Sampler for SimulatedAnnealing {
    fn name(&self) -> &str {
        "sa"
    }

    fn sample(&self, q: &QuboMatrix, cfg: &AnnealConfig, seed: u64) -> Result<ReadSet> {
        cfg.validate()?;
        let (default_hot, default_cold) = default_beta_range(q);
        let hot = cfg.beta_hot.unwrap_or(default_hot);
        let mut cold = cfg.beta_cold.unwrap_or(default_cold);
        while cold <= hot {
            cold *= 2.0;
        }
        let schedule = geometric_schedule(hot, cold, cfg.n_sweeps);
        let couplings = q.symmetric_couplings();
        let reads = (0..cfg.n_reads)
            .map(|r| {
                let mut rng = rng::stream(seed, rng::SA, r as u64);
                Self::anneal_once(q, &couplings, &schedule, &mut rng)
            })
            .collect();
        Ok(ReadSet { reads })
    }
}

pub fn simulated_annealing(q: &QuboMatrix, cfg: &AnnealConfig, seed: u64) -> Result<ReadSet> {
    SimulatedAnnealing.sample(q, cfg, seed)
}

/// Read minimizing the surrogate; the lowest index wins ties.
pub fn best_read<'a>(reads: &'a ReadSet, params: &FmParams) -> Result<&'a BinaryVector> {
    let mut best: Option<(&BinaryVector, f64)> = None;
    for read in &reads.reads {
        let value = fm_eval(params, &read.x)?;
        if best.is_none_or(|(_, b)| value < b) {
            best = Some((&read.x, value));
        }
    }
    best.map(|(x, _)| x).ok_or_else(|| Error::InvalidArgument("best_read on an empty read set".into()))
}

/// Samplers addressable by name.
#[derive(Clone)]
pub struct SamplerRegistry {
    samplers: BTreeMap<String, Arc<dyn Sampler>>,
}

impl Default for SamplerRegistry {
    fn default() -> Self {
        let mut registry = Self { samplers: BTreeMap::new() };
        registry.register(Arc::new(SimulatedAnnealing));
        registry
    }
}

impl SamplerRegistry {
    pub fn empty() -> Self {
        Self { samplers: BTreeMap::new() }
    }

    /// Replaces any sampler already registered under the same name.
    pub fn register(&mut self, sampler: Arc<dyn Sampler>) {
        self.samplers.insert(sampler.name().to_string(), sampler);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Sampler>> {
        self.samplers.get(name).cloned().ok_or_else(|| Error::Unknown { kind: "sampler", name: name.to_string() })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.samplers.keys().map(String::as_str)
    }
}
