//! The black-box optimization loop: initial data, subsampling,
//! standardization, FM annealing iterations, and the random-search baseline.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annealer::{best_read, AnnealConfig, Sampler, SamplerRegistry};
use crate::error::{Error, Result};
use crate::fm::{default_latent_dim, fm_to_qubo, FmParams};
use crate::problem::{BinaryVector, BlackBox};
use crate::rng;
use crate::training::{train_fm, TrainConfig};

/// Variance below which standardization only centers the targets.
pub const DEGENERATE_VARIANCE: f64 = 1e-24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: BinaryVector,
    pub y: f64,
}

/// Insertion-ordered observations; duplicates are kept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, point: DataPoint) {
        self.points.push(point);
    }

    pub fn min_y(&self) -> Option<f64> {
        self.points.iter().map(|p| p.y).reduce(f64::min)
    }

    /// Evaluate `x` and append it.
    pub fn query(&mut self, problem: &dyn BlackBox, x: BinaryVector) -> Result<f64> {
        let y = problem.eval(&x)?;
        self.points.push(DataPoint { x, y });
        Ok(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub y_bar: f64,
    pub var_y: f64,
    pub n_g: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fma,
    Sfma,
    Rs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub mode: Mode,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_ratio")]
    pub ratio_r: f64,
    pub n_ite: usize,
    /// Latent dimension; `n_bit/2 - 1` when absent.
    #[serde(default)]
    pub k: Option<usize>,
    /// Ensemble size for standardization; `5 · n_bit` when absent.
    #[serde(default)]
    pub n_g: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub anneal: AnnealConfig,
    #[serde(default = "default_sampler")]
    pub sampler: String,
}

fn default_true() -> bool {
    true
}

pub(crate) fn default_ratio() -> f64 {
    0.4
}

fn default_sampler() -> String {
    "sa".to_string()
}

impl StrategyConfig {
    pub fn new(mode: Mode, standardize: bool, n_ite: usize) -> Self {
        Self {
            mode,
            standardize,
            ratio_r: default_ratio(),
            n_ite,
            k: None,
            n_g: None,
            train: TrainConfig::default(),
            anneal: AnnealConfig::default(),
            sampler: default_sampler(),
        }
    }

    pub fn with_ratio(mut self, ratio_r: f64) -> Self {
        self.ratio_r = ratio_r;
        self
    }

    pub fn latent_dim(&self, n_bit: usize) -> usize {
        self.k.unwrap_or_else(|| default_latent_dim(n_bit))
    }

    pub fn ensemble_size(&self, n_bit: usize) -> usize {
        self.n_g.unwrap_or(5 * n_bit)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_min_ite(1)
    }

    fn validate_with_min_ite(&self, min_ite: usize) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config { key: key.into(), message: msg });
        if self.n_ite < min_ite {
            return bad("n_ite", format!("must be >= {min_ite}"));
        }
        if self.mode == Mode::Sfma && !(self.ratio_r > 0.0 && self.ratio_r < 1.0) {
            return bad("ratio_r", format!("must lie in (0, 1), got {}", self.ratio_r));
        }
        if self.k == Some(0) {
            return bad("k", "must be >= 1".into());
        }
        if self.n_g == Some(0) {
            return bad("n_g", "must be >= 1".into());
        }
        self.train.validate()?;
        self.anneal.validate()
    }
}

/// Seeds for one run. Loop 0 (the step producing `D_1`) and `D_0` draw from
/// `data_seed`; later loops draw from `run_seed`.
///
/// FM initialization and annealing use one fixed seed for all loops after
/// the first, so a run's only per-loop randomness comes from the dataset
/// (and, for SFMA, the subsample). Subsample and ensemble draws are keyed by
/// loop index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub data_seed: u64,
    pub run_seed: u64,
}

impl From<u64> for RunSeeds {
    fn from(seed: u64) -> Self {
        Self { data_seed: seed, run_seed: seed }
    }
}

impl RunSeeds {
    pub fn for_loop(&self, loop_index: usize) -> u64 {
        if loop_index == 0 {
            self.data_seed
        } else {
            self.run_seed
        }
    }

    fn purpose_seed(&self, tag: &str, loop_index: usize) -> u64 {
        rng::derive_seed(&[&self.for_loop(loop_index).to_le_bytes(), tag.as_bytes()])
    }
}

/// One black-box evaluation appended by the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    /// 1-based; after this query `|D| = |D_0| + loop_index`.
    pub loop_index: usize,
    pub x: BinaryVector,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceConfig {
    Single(StrategyConfig),
    TwoPhase { phase1: StrategyConfig, phase2: StrategyConfig },
}

impl TraceConfig {
    pub fn total_iterations(&self) -> usize {
        match self {
            TraceConfig::Single(c) => c.n_ite,
            TraceConfig::TwoPhase { phase1, phase2 } => phase1.n_ite + phase2.n_ite,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub initial: Dataset,
    pub queries: Vec<Query>,
    pub seeds: RunSeeds,
    pub config: TraceConfig,
}

impl RunTrace {
    pub fn n_ite(&self) -> usize {
        self.queries.len()
    }

    /// `D_0` followed by every query.
    pub fn final_dataset(&self) -> Dataset {
        let mut d = self.initial.clone();
        d.points.extend(self.queries.iter().map(|q| DataPoint { x: q.x.clone(), y: q.y }));
        d
    }
}

/// `n0` distinct uniform points of `{0,1}^n_bit` and their values.
pub fn gen_initial_dataset(problem: &dyn BlackBox, n0: usize, seed: u64) -> Result<Dataset> {
    let n_bit = problem.n_bit();
    let space = if n_bit >= 64 { u64::MAX } else { 1u64 << n_bit };
    if n_bit < 64 && n0 as u64 > space {
        return Err(Error::Infeasible(format!("{n0} distinct points requested from a space of {space}")));
    }
    let mut rng = rng::stream(seed, rng::D0, 0);
    let xs: Vec<BinaryVector> = if n_bit <= 30 {
        index::sample(&mut rng, space as usize, n0)
            .into_iter()
            .map(|i| BinaryVector::from_index(i as u64, n_bit))
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(n0);
        let mut out = Vec::with_capacity(n0);
        while out.len() < n0 {
            let x = BinaryVector::random(n_bit, &mut rng);
            if seen.insert(x.clone()) {
                out.push(x);
            }
        }
        out
    };
    let mut data = Dataset::default();
    for x in xs {
        data.query(problem, x)?;
    }
    Ok(data)
}

/// Size of the subsampled set, `floor(r · len)` but never below one.
pub fn subsample_size(len: usize, ratio_r: f64) -> usize {
    ((ratio_r * len as f64).floor() as usize).max(1)
}

/// Draw `subsample_size` points uniformly with replacement.
pub fn subsample(data: &Dataset, ratio_r: f64, seed: u64, loop_index: usize) -> Result<Dataset> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot subsample an empty dataset".into()));
    }
    if !(ratio_r > 0.0 && ratio_r < 1.0) {
        return Err(Error::InvalidArgument(format!("ratio must lie in (0, 1), got {ratio_r}")));
    }
    let mut rng = rng::stream(seed, rng::SUBSAMPLE, loop_index as u64);
    let size = subsample_size(data.len(), ratio_r);
    let points = (0..size).map(|_| data.points[rng.gen_range(0..data.len())].clone()).collect();
    Ok(Dataset { points })
}

/// Indices of the standardization ensemble, drawn with replacement.
pub fn ensemble_indices(len: usize, n_g: usize, seed: u64, loop_index: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, rng::ENSEMBLE, loop_index as u64);
    (0..n_g).map(|_| rng.gen_range(0..len)).collect()
}

/// Mean and population variance of `values`.
pub fn stats_from_values(values: &[f64]) -> StandardizationStats {
    let n = values.len() as f64;
    let y_bar = values.iter().sum::<f64>() / n;
    let var_y = values.iter().map(|y| (y - y_bar).powi(2)).sum::<f64>() / n;
    StandardizationStats { y_bar, var_y, n_g: values.len() }
}

pub fn compute_standardization(
    data: &Dataset,
    n_g: usize,
    seed: u64,
    loop_index: usize,
) -> Result<StandardizationStats> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("standardization of an empty dataset".into()));
    }
    if n_g == 0 {
        return Err(Error::InvalidArgument("ensemble size must be >= 1".into()));
    }
    let values: Vec<f64> =
        ensemble_indices(data.len(), n_g, seed, loop_index).into_iter().map(|i| data.points[i].y).collect();
    Ok(stats_from_values(&values))
}

/// `(y - ȳ) / (sqrt(Δ²y) · n_bit)`, or plain centering when the variance vanishes.
pub fn standardize_y(y: f64, stats: &StandardizationStats, n_bit: usize) -> f64 {
    if stats.var_y < DEGENERATE_VARIANCE {
        y - stats.y_bar
    } else {
        (y - stats.y_bar) / (stats.var_y.sqrt() * n_bit as f64)
    }
}

/// Standard deviation of the ensemble after standardization, used as the
/// initial parameter spread so parameters start on the scale of the targets.
pub fn standardized_spread(stats: &StandardizationStats, n_bit: usize) -> f64 {
    if stats.var_y < DEGENERATE_VARIANCE {
        stats.var_y.sqrt()
    } else {
        1.0 / n_bit as f64
    }
}

/// Train the FM for loop `loop_index` on `training` (already subsampled),
/// standardizing against `full` when requested.
pub fn fit_surrogate(
    full: &Dataset,
    training: &Dataset,
    cfg: &StrategyConfig,
    n_bit: usize,
    seeds: &RunSeeds,
    loop_index: usize,
) -> Result<FmParams> {
    let (targets, init_std) = if cfg.standardize {
        let stats = compute_standardization(full, cfg.ensemble_size(n_bit), seeds.for_loop(loop_index), loop_index)?;
        log::debug!("loop {loop_index}: y_bar={} var_y={} n_g={}", stats.y_bar, stats.var_y, stats.n_g);
        let mapped = training
            .points
            .iter()
            .map(|p| DataPoint { x: p.x.clone(), y: standardize_y(p.y, &stats, n_bit) })
            .collect();
        (mapped, standardized_spread(&stats, n_bit))
    } else {
        (training.points.clone(), 1.0)
    };
    train_fm(&targets, n_bit, cfg.latent_dim(n_bit), init_std, &cfg.train, seeds.purpose_seed(rng::FM_INIT, loop_index))
}

/// Mutable state of one run.
struct Engine<'a> {
    problem: &'a dyn BlackBox,
    seeds: RunSeeds,
    data: Dataset,
    queries: Vec<Query>,
}

impl<'a> Engine<'a> {
    fn new(problem: &'a dyn BlackBox, seeds: RunSeeds) -> Result<Self> {
        let n_bit = problem.n_bit();
        let data = gen_initial_dataset(problem, n_bit, seeds.data_seed)?;
        Ok(Self { problem, seeds, data, queries: Vec::new() })
    }

    fn n_bit(&self) -> usize {
        self.problem.n_bit()
    }

    /// Loop `a`; loop 0 always trains on the full dataset.
    fn step(&mut self, cfg: &StrategyConfig, sampler: &dyn Sampler, a: usize) -> Result<()> {
        let n_bit = self.n_bit();
        let training = if cfg.mode == Mode::Sfma && a > 0 {
            subsample(&self.data, cfg.ratio_r, self.seeds.for_loop(a), a)?
        } else {
            self.data.clone()
        };
        let params = fit_surrogate(&self.data, &training, cfg, n_bit, &self.seeds, a)?;
        let reads = sampler.sample(&fm_to_qubo(&params), &cfg.anneal, self.seeds.purpose_seed(rng::SA, a))?;
        let x = best_read(&reads, &params)?.clone();
        let y = self.data.query(self.problem, x.clone())?;
        self.queries.push(Query { loop_index: self.queries.len() + 1, x, y });
        Ok(())
    }

    fn run_loops(&mut self, cfg: &StrategyConfig, sampler: &dyn Sampler, loops: std::ops::Range<usize>) -> Result<()> {
        for a in loops {
            self.step(cfg, sampler, a).map_err(|e| Error::Loop { loop_index: a, source: Box::new(e) })?;
        }
        Ok(())
    }

    fn into_trace(self, initial: Dataset, config: TraceConfig) -> RunTrace {
        RunTrace { initial, queries: self.queries, seeds: self.seeds, config }
    }
}

fn require_mode(cfg: &StrategyConfig, allowed: &[Mode]) -> Result<()> {
    if allowed.contains(&cfg.mode) {
        Ok(())
    } else {
        Err(Error::Config { key: "mode".into(), message: format!("{:?} is not valid here", cfg.mode) })
    }
}

/// FMA or SFMA, using samplers from `registry`.
pub fn run_bbo_with(
    problem: &dyn BlackBox,
    cfg: &StrategyConfig,
    seeds: RunSeeds,
    registry: &SamplerRegistry,
) -> Result<RunTrace> {
    cfg.validate()?;
    require_mode(cfg, &[Mode::Fma, Mode::Sfma])?;
    let sampler: Arc<dyn Sampler> = registry.get(&cfg.sampler)?;
    let mut engine = Engine::new(problem, seeds)?;
    let initial = engine.data.clone();
    engine.run_loops(cfg, sampler.as_ref(), 0..cfg.n_ite)?;
    Ok(engine.into_trace(initial, TraceConfig::Single(cfg.clone())))
}

pub fn run_bbo(problem: &dyn BlackBox, cfg: &StrategyConfig, seeds: impl Into<RunSeeds>) -> Result<RunTrace> {
    run_bbo_with(problem, cfg, seeds.into(), &SamplerRegistry::default())
}

/// Two SFMA phases back to back; phase 2 continues from phase 1's dataset.
///
/// `phase1.n_ite` counts the initial full-dataset loop, so the total number
/// of queries is `phase1.n_ite + phase2.n_ite`.
pub fn run_isfma2_with(
    problem: &dyn BlackBox,
    phase1: &StrategyConfig,
    phase2: &StrategyConfig,
    seeds: RunSeeds,
    registry: &SamplerRegistry,
) -> Result<RunTrace> {
    phase1.validate()?;
    phase2.validate_with_min_ite(0)?;
    require_mode(phase1, &[Mode::Sfma])?;
    require_mode(phase2, &[Mode::Sfma])?;
    let mut engine = Engine::new(problem, seeds)?;
    let initial = engine.data.clone();
    let first = registry.get(&phase1.sampler)?;
    engine.run_loops(phase1, first.as_ref(), 0..phase1.n_ite)?;
    let second = registry.get(&phase2.sampler)?;
    let end = phase1.n_ite + phase2.n_ite;
    engine.run_loops(phase2, second.as_ref(), phase1.n_ite..end)?;
    let config = if phase2.n_ite == 0 {
        TraceConfig::Single(phase1.clone())
    } else {
        TraceConfig::TwoPhase { phase1: phase1.clone(), phase2: phase2.clone() }
    };
    Ok(engine.into_trace(initial, config))
}

pub fn run_isfma2(
    problem: &dyn BlackBox,
    phase1: &StrategyConfig,
    phase2: &StrategyConfig,
    seeds: impl Into<RunSeeds>,
) -> Result<RunTrace> {
    run_isfma2_with(problem, phase1, phase2, seeds.into(), &SamplerRegistry::default())
}

/// Uniform random queries appended to the shared `D_0`.
pub fn run_random_search(problem: &dyn BlackBox, n_ite: usize, seeds: impl Into<RunSeeds>) -> Result<RunTrace> {
    let seeds = seeds.into();
    let mut engine = Engine::new(problem, seeds)?;
    let initial = engine.data.clone();
    let n_bit = engine.n_bit();
    let mut rng = rng::stream(seeds.run_seed, rng::RS, 0);
    for a in 0..n_ite {
        let x = BinaryVector::random(n_bit, &mut rng);
        let y = engine.data.query(problem, x.clone())?;
        engine.queries.push(Query { loop_index: a + 1, x, y });
    }
    let config = TraceConfig::Single(StrategyConfig::new(Mode::Rs, false, n_ite));
    Ok(engine.into_trace(initial, config))
}
