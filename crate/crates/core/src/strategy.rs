//! Optimization strategies behind one trait, constructed by name.
//!
//! Every algorithm entry in an experiment config carries a `kind` that
//! selects a factory from [`StrategyRegistry`]; the remaining keys of the
//! entry are handed to that factory.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::annealer::SamplerRegistry;
use crate::bbo::{self, Mode, RunSeeds, RunTrace, StrategyConfig, TraceConfig};
use crate::error::{Error, Result};
use crate::problem::BlackBox;

pub trait Strategy: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Number of black-box queries beyond `D_0`.
    fn total_iterations(&self) -> usize;

    fn run(&self, problem: &dyn BlackBox, seeds: RunSeeds, samplers: &SamplerRegistry) -> Result<RunTrace>;

    /// Fully resolved configuration for a problem with `n_bit` inputs.
    fn resolved_config(&self, n_bit: usize) -> TraceConfig;
}

fn with_defaults(cfg: &StrategyConfig, n_bit: usize) -> StrategyConfig {
    StrategyConfig { k: Some(cfg.latent_dim(n_bit)), n_g: Some(cfg.ensemble_size(n_bit)), ..cfg.clone() }
}

/// FMA (full dataset each loop) or SFMA (subsampled).
pub struct FmAnnealing {
    pub config: StrategyConfig,
}

impl Strategy for FmAnnealing {
    fn kind(&self) -> &'static str {
        match self.config.mode {
            Mode::Fma => "fma",
            Mode::Sfma => "sfma",
            Mode::Rs => "rs",
        }
    }

    fn total_iterations(&self) -> usize {
        self.config.n_ite
    }

    fn run(&self, problem: &dyn BlackBox, seeds: RunSeeds, samplers: &SamplerRegistry) -> Result<RunTrace> {
        bbo::run_bbo_with(problem, &self.config, seeds, samplers)
    }

    fn resolved_config(&self, n_bit: usize) -> TraceConfig {
        TraceConfig::Single(with_defaults(&self.config, n_bit))
    }
}

pub struct RandomSearch {
    pub n_ite: usize,
}

impl Strategy for RandomSearch {
    fn kind(&self) -> &'static str {
        "rs"
    }

    fn total_iterations(&self) -> usize {
        self.n_ite
    }

    fn run(&self, problem: &dyn BlackBox, seeds: RunSeeds, _: &SamplerRegistry) -> Result<RunTrace> {
        bbo::run_random_search(problem, self.n_ite, seeds)
    }

    fn resolved_config(&self, _n_bit: usize) -> TraceConfig {
        TraceConfig::Single(StrategyConfig::new(Mode::Rs, false, self.n_ite))
    }
}

/// Two SFMA phases sharing one growing dataset.
pub struct TwoPhaseSfma {
    pub phase1: StrategyConfig,
    pub phase2: StrategyConfig,
}

impl Strategy for TwoPhaseSfma {
    fn kind(&self) -> &'static str {
        "isfma2"
    }

    fn total_iterations(&self) -> usize {
        self.phase1.n_ite + self.phase2.n_ite
    }

    fn run(&self, problem: &dyn BlackBox, seeds: RunSeeds, samplers: &SamplerRegistry) -> Result<RunTrace> {
        bbo::run_isfma2_with(problem, &self.phase1, &self.phase2, seeds, samplers)
    }

    fn resolved_config(&self, n_bit: usize) -> TraceConfig {
        TraceConfig::TwoPhase { phase1: with_defaults(&self.phase1, n_bit), phase2: with_defaults(&self.phase2, n_bit) }
    }
}

/// Builds a strategy from the non-reserved keys of an algorithm entry.
pub type StrategyFactory = fn(&toml::Table, usize) -> Result<Box<dyn Strategy>>;

pub struct StrategyRegistry {
    factories: BTreeMap<&'static str, StrategyFactory>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut registry = Self { factories: BTreeMap::new() };
        registry.register("fma", build_fma);
        registry.register("sfma", build_sfma);
        registry.register("rs", build_rs);
        registry.register("isfma2", build_isfma2);
        registry
    }
}

impl StrategyRegistry {
    pub fn register(&mut self, kind: &'static str, factory: StrategyFactory) {
        self.factories.insert(kind, factory);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    /// Instantiate `kind` for a problem with `n_bit` inputs.
    pub fn build(&self, kind: &str, params: &toml::Table, n_bit: usize) -> Result<Box<dyn Strategy>> {
        let factory = self
            .factories
            .get(kind)
            .ok_or_else(|| Error::Unknown { kind: "algorithm kind", name: kind.to_string() })?;
        factory(params, n_bit)
    }
}

fn config_error(key: &str, err: impl std::fmt::Display) -> Error {
    Error::Config { key: key.to_string(), message: err.to_string() }
}

/// Replace `c_fm` with `n_ite = c_fm · n_bit² + 1`.
fn resolve_iterations(params: &toml::Table, n_bit: usize) -> Result<toml::Table> {
    let mut table = params.clone();
    if let Some(c) = table.remove("c_fm") {
        if table.contains_key("n_ite") {
            return Err(config_error("c_fm", "give either n_ite or c_fm, not both"));
        }
        let c =
            c.as_integer().filter(|&c| c >= 0).ok_or_else(|| config_error("c_fm", "must be a non-negative integer"))?;
        table.insert("n_ite".into(), toml::Value::Integer(c * (n_bit * n_bit) as i64 + 1));
    }
    Ok(table)
}

fn strategy_config(params: &toml::Table, mode: &str, key: &str) -> Result<StrategyConfig> {
    if params.contains_key("mode") {
        return Err(config_error(&format!("{key}.mode"), "mode is implied by kind"));
    }
    let mut table = params.clone();
    table.insert("mode".into(), toml::Value::String(mode.into()));
    let cfg = StrategyConfig::deserialize(toml::Value::Table(table)).map_err(|e| config_error(key, e))?;
    Ok(cfg)
}

fn build_fm_annealing(params: &toml::Table, n_bit: usize, mode: &str) -> Result<Box<dyn Strategy>> {
    let config = strategy_config(&resolve_iterations(params, n_bit)?, mode, "algorithm")?;
    config.validate()?;
    Ok(Box::new(FmAnnealing { config }))
}

fn build_fma(params: &toml::Table, n_bit: usize) -> Result<Box<dyn Strategy>> {
    build_fm_annealing(params, n_bit, "fma")
}

fn build_sfma(params: &toml::Table, n_bit: usize) -> Result<Box<dyn Strategy>> {
    build_fm_annealing(params, n_bit, "sfma")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RsParams {
    n_ite: usize,
}

fn build_rs(params: &toml::Table, n_bit: usize) -> Result<Box<dyn Strategy>> {
    let p = RsParams::deserialize(toml::Value::Table(resolve_iterations(params, n_bit)?))
        .map_err(|e| config_error("algorithm", e))?;
    Ok(Box::new(RandomSearch { n_ite: p.n_ite }))
}

fn build_isfma2(params: &toml::Table, _n_bit: usize) -> Result<Box<dyn Strategy>> {
    if let Some(extra) = params.keys().find(|k| *k != "phase1" && *k != "phase2") {
        return Err(config_error(extra, "unknown key for isfma2"));
    }
    let phase = |name: &str| -> Result<StrategyConfig> {
        let table = params
            .get(name)
            .and_then(toml::Value::as_table)
            .ok_or_else(|| config_error(name, "missing phase table"))?;
        strategy_config(table, "sfma", name)
    };
    let phase1 = phase("phase1")?;
    let phase2 = phase("phase2")?;
    phase1.validate().map_err(|e| config_error("phase1", e))?;
    if phase2.n_ite > 0 {
        phase2.validate().map_err(|e| config_error("phase2", e))?;
    }
    Ok(Box::new(TwoPhaseSfma { phase1, phase2 }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn builds_every_registered_kind() {
        let r = StrategyRegistry::default();
        assert_eq!(r.kinds().collect::<Vec<_>>(), vec!["fma", "isfma2", "rs", "sfma"]);
        let s = r.build("sfma", &table("standardize = true\nc_fm = 2"), 12).unwrap();
        assert_eq!((s.kind(), s.total_iterations()), ("sfma", 289));
        let s = r.build("fma", &table("n_ite = 5"), 12).unwrap();
        assert_eq!((s.kind(), s.total_iterations()), ("fma", 5));
        let s = r.build("rs", &table("n_ite = 7"), 12).unwrap();
        assert_eq!((s.kind(), s.total_iterations()), ("rs", 7));
        let s = r
            .build("isfma2", &table("[phase1]\nn_ite = 401\nratio_r = 0.1\n[phase2]\nn_ite = 2000\nratio_r = 0.01"), 20)
            .unwrap();
        assert_eq!((s.kind(), s.total_iterations()), ("isfma2", 2401));
    }

    #[test]
    fn rejects_bad_entries() {
        let r = StrategyRegistry::default();
        assert!(matches!(r.build("bocs", &table("n_ite = 1"), 4), Err(Error::Unknown { .. })));
        assert!(r.build("sfma", &table("n_ite = 3\nratio_r = 1.5"), 4).is_err());
        assert!(r.build("sfma", &table("n_ite = 3\nbogus = 1"), 4).is_err());
        assert!(r.build("sfma", &table("n_ite = 3\nc_fm = 2"), 4).is_err());
        assert!(r.build("sfma", &table("n_ite = 3\nmode = 'fma'"), 4).is_err());
        assert!(r.build("rs", &table("n_ite = 3\nratio_r = 0.5"), 4).is_err());
        assert!(r.build("isfma2", &table("[phase1]\nn_ite = 3"), 4).is_err());
    }
}
