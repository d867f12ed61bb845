//! Experiment configuration, orchestration across instances × algorithms ×
//! seeds, persistence, and plot-data export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annealer::SamplerRegistry;
use crate::bbo::{DataPoint, Dataset, Query, RunSeeds, RunTrace, TraceConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, BenchmarkSummary, Better, Rate, TraceEnsemble};
use crate::problem::{
    brute_force_optima, BlackBox, InstanceMeta, LossyCompressionProblem, OracleResult, ORACLE_MAX_BITS,
};
use crate::rng;
use crate::strategy::{Strategy, StrategyRegistry};

pub const DEFAULT_N_SAMP: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Synthetic(InstanceMeta),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceEntry {
    pub name: String,
    pub source: InstanceSource,
}

impl InstanceEntry {
    pub fn load(&self) -> Result<(LossyCompressionProblem, InstanceMeta)> {
        match &self.source {
            InstanceSource::Synthetic(meta) => Ok((LossyCompressionProblem::synthetic(*meta)?, *meta)),
            InstanceSource::File(path) => LossyCompressionProblem::load(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgorithmEntry {
    pub name: String,
    pub kind: String,
    pub params: toml::Table,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_samp: usize,
    pub output_dir: PathBuf,
    pub oracle: bool,
    pub jobs: Option<usize>,
    pub instances: Vec<InstanceEntry>,
    pub algorithms: Vec<AlgorithmEntry>,
    /// Resolved configuration of every algorithm on every instance.
    pub resolved: BTreeMap<String, BTreeMap<String, TraceConfig>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    master_seed: u64,
    #[serde(default = "default_n_samp")]
    n_samp: usize,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default = "default_oracle")]
    oracle: bool,
    #[serde(default)]
    jobs: Option<usize>,
    #[serde(rename = "instance")]
    instances: Vec<RawInstance>,
    #[serde(rename = "algorithm")]
    algorithms: Vec<toml::Table>,
}

fn default_n_samp() -> usize {
    DEFAULT_N_SAMP
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_oracle() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    name: Option<String>,
    n: Option<usize>,
    d: Option<usize>,
    k_factor: Option<usize>,
    seed: Option<u64>,
    path: Option<PathBuf>,
}

fn config_error(key: impl Into<String>, message: impl std::fmt::Display) -> Error {
    Error::Config { key: key.into(), message: message.to_string() }
}

/// Parse and validate a TOML experiment document. Relative instance paths
/// resolve against `base_dir`.
pub fn parse_config_in(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let key = e.span().map(|s| text[s].chars().take(40).collect::<String>()).unwrap_or_default();
        config_error(key, e.message())
    })?;
    if raw.n_samp == 0 {
        return Err(config_error("n_samp", "must be >= 1"));
    }
    if raw.jobs == Some(0) {
        return Err(config_error("jobs", "must be >= 1"));
    }
    if raw.instances.is_empty() {
        return Err(config_error("instance", "at least one instance is required"));
    }
    if raw.algorithms.is_empty() {
        return Err(config_error("algorithm", "at least one algorithm is required"));
    }

    let mut instances = Vec::new();
    let mut names = BTreeSet::new();
    for (i, inst) in raw.instances.into_iter().enumerate() {
        let name = inst.name.clone().unwrap_or_else(|| format!("W{i}"));
        let key = format!("instance.{name}");
        let source = match (inst.path, inst.n, inst.d, inst.k_factor, inst.seed) {
            (Some(path), None, None, None, None) => {
                let path = if path.is_relative() { base_dir.join(path) } else { path };
                InstanceSource::File(path)
            }
            (None, Some(n), Some(d), Some(k_factor), seed) => {
                InstanceSource::Synthetic(InstanceMeta { n, d, k_factor, seed: seed.unwrap_or(i as u64) })
            }
            _ => return Err(config_error(key, "give either `path` or all of `n`, `d`, `k_factor`")),
        };
        if !names.insert(name.clone()) {
            return Err(config_error(key, "duplicate instance name"));
        }
        instances.push(InstanceEntry { name, source });
    }

    let mut algorithms = Vec::new();
    let mut alg_names = BTreeSet::new();
    for (i, mut table) in raw.algorithms.into_iter().enumerate() {
        let take_str = |table: &mut toml::Table, field: &str| -> Result<String> {
            match table.remove(field) {
                Some(toml::Value::String(s)) => Ok(s),
                _ => Err(config_error(format!("algorithm[{i}].{field}"), "required string")),
            }
        };
        let name = take_str(&mut table, "name")?;
        let kind = take_str(&mut table, "kind")?;
        if !alg_names.insert(name.clone()) {
            return Err(config_error(format!("algorithm.{name}"), "duplicate algorithm name"));
        }
        algorithms.push(AlgorithmEntry { name, kind, params: table });
    }

    let registry = StrategyRegistry::default();
    let mut resolved = BTreeMap::new();
    for inst in &instances {
        let (problem, _) = inst.load()?;
        let n_bit = problem.n_bit();
        if raw.oracle && n_bit > ORACLE_MAX_BITS {
            return Err(config_error(
                format!("instance.{}", inst.name),
                format!("n_bit = {n_bit} exceeds the oracle limit of {ORACLE_MAX_BITS}"),
            ));
        }
        let mut per_alg = BTreeMap::new();
        for alg in &algorithms {
            let strategy = registry
                .build(&alg.kind, &alg.params, n_bit)
                .map_err(|e| config_error(format!("algorithm.{}", alg.name), e))?;
            per_alg.insert(alg.name.clone(), strategy.resolved_config(n_bit));
        }
        resolved.insert(inst.name.clone(), per_alg);
    }

    Ok(ExperimentConfig {
        master_seed: raw.master_seed,
        n_samp: raw.n_samp,
        output_dir: raw.output_dir,
        oracle: raw.oracle,
        jobs: raw.jobs,
        instances,
        algorithms,
        resolved,
    })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_in(text, Path::new("."))
}

/// Seed shared by every run on an instance (`D_0` and the first loop).
pub fn instance_seed(master_seed: u64, instance: &str) -> u64 {
    rng::derive_seed(&[&master_seed.to_le_bytes(), b"instance-data", instance.as_bytes()])
}

/// Seed of sample `alpha` of `algorithm` on `instance`.
pub fn run_seed(master_seed: u64, instance: &str, algorithm: &str, alpha: usize) -> u64 {
    rng::derive_seed(&[
        &master_seed.to_le_bytes(),
        b"run",
        instance.as_bytes(),
        algorithm.as_bytes(),
        &(alpha as u64).to_le_bytes(),
    ])
}

pub fn run_seeds(master_seed: u64, instance: &str, algorithm: &str, alpha: usize) -> RunSeeds {
    RunSeeds {
        data_seed: instance_seed(master_seed, instance),
        run_seed: run_seed(master_seed, instance, algorithm, alpha),
    }
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    record: String,
    instance: String,
    algorithm: String,
    sample: usize,
    seeds: RunSeeds,
    config: TraceConfig,
    initial: Dataset,
}

#[derive(Serialize, Deserialize)]
struct TraceRecord {
    loop_index: usize,
    x: crate::problem::BinaryVector,
    y: f64,
    y_min_so_far: f64,
}

/// Identity of a persisted trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLabel {
    pub instance: String,
    pub algorithm: String,
    pub sample: usize,
}

/// One header line followed by one line per query.
pub fn write_trace_jsonl<W: Write>(trace: &RunTrace, label: &TraceLabel, mut out: W) -> Result<()> {
    let header = TraceHeader {
        record: "header".into(),
        instance: label.instance.clone(),
        algorithm: label.algorithm.clone(),
        sample: label.sample,
        seeds: trace.seeds,
        config: trace.config.clone(),
        initial: trace.initial.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let minima = metrics::running_min(trace);
    for (q, &best) in trace.queries.iter().zip(&minima[1..]) {
        let record = TraceRecord { loop_index: q.loop_index, x: q.x.clone(), y: q.y, y_min_so_far: best };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_jsonl<R: Read>(input: R) -> Result<(RunTrace, TraceLabel)> {
    let mut lines = BufReader::new(input).lines();
    let first = lines.next().ok_or_else(|| Error::InvalidArgument("empty trace file".into()))??;
    let header: TraceHeader = serde_json::from_str(&first)?;
    let mut queries = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TraceRecord = serde_json::from_str(&line)?;
        queries.push(Query { loop_index: r.loop_index, x: r.x, y: r.y });
    }
    let label = TraceLabel { instance: header.instance, algorithm: header.algorithm, sample: header.sample };
    let trace = RunTrace { initial: header.initial, queries, seeds: header.seeds, config: header.config };
    Ok((trace, label))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes)?;
    Ok(sha256_hex(bytes))
}

/// File-name-safe rendering of a label.
fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub algorithm: String,
    pub sample: usize,
    pub seeds: RunSeeds,
    pub file: String,
    pub sha256: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub name: String,
    pub meta: InstanceMeta,
    pub n_bit: usize,
    pub data_seed: u64,
    pub y_star: Option<f64>,
    /// `oracle` or `best-observed`.
    pub y_star_source: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub master_seed: u64,
    pub n_samp: usize,
    pub created_unix: u64,
    pub ci_method: String,
    pub instances: Vec<InstanceRecord>,
    pub runs: Vec<RunRecord>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

/// In-memory results of an experiment alongside what was written to disk.
pub struct ResultBundle {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub summaries: BTreeMap<String, BTreeMap<String, BenchmarkSummary>>,
    pub oracles: BTreeMap<String, OracleResult>,
}

impl ResultBundle {
    pub fn all_succeeded(&self) -> bool {
        self.manifest.failures() == 0
    }
}

struct Job<'a> {
    instance: usize,
    algorithm: usize,
    sample: usize,
    strategy: &'a dyn Strategy,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    run_experiment_with(cfg, &StrategyRegistry::default(), &SamplerRegistry::default())
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    strategies: &StrategyRegistry,
    samplers: &SamplerRegistry,
) -> Result<ResultBundle> {
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let mut outputs = BTreeMap::new();

    let mut problems = Vec::new();
    let mut instance_records = Vec::new();
    let mut oracles = BTreeMap::new();
    for inst in &cfg.instances {
        let (problem, meta) = inst.load()?;
        let mut csv = Vec::new();
        problem.w().write_csv(&mut csv)?;
        let rel = format!("instances/{}.csv", slug(&inst.name));
        outputs.insert(rel.clone(), write_file(&out.join(&rel), &csv)?);
        let rel_meta = format!("instances/{}.json", slug(&inst.name));
        outputs.insert(rel_meta.clone(), write_file(&out.join(&rel_meta), &serde_json::to_vec_pretty(&meta)?)?);

        let mut y_star = None;
        if cfg.oracle {
            log::info!("oracle for {} ({} bits)", inst.name, problem.n_bit());
            let oracle = brute_force_optima(&problem)?;
            y_star = Some(oracle.y_opt_1st);
            let rel = format!("oracle/{}.json", slug(&inst.name));
            outputs.insert(rel.clone(), write_file(&out.join(&rel), &serde_json::to_vec_pretty(&oracle)?)?);
            oracles.insert(inst.name.clone(), oracle);
        }
        instance_records.push(InstanceRecord {
            name: inst.name.clone(),
            meta,
            n_bit: problem.n_bit(),
            data_seed: instance_seed(cfg.master_seed, &inst.name),
            y_star,
            y_star_source: y_star.map(|_| "oracle".to_string()),
        });
        problems.push(problem);
    }

    let built: Vec<Vec<Box<dyn Strategy>>> = problems
        .iter()
        .map(|p| {
            cfg.algorithms.iter().map(|a| strategies.build(&a.kind, &a.params, p.n_bit())).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for (i, row) in built.iter().enumerate() {
        for (a, strategy) in row.iter().enumerate() {
            for sample in 0..cfg.n_samp {
                jobs.push(Job { instance: i, algorithm: a, sample, strategy: strategy.as_ref() });
            }
        }
    }

    let execute = |job: &Job<'_>| -> (RunRecord, Option<RunTrace>) {
        let inst = &cfg.instances[job.instance].name;
        let alg = &cfg.algorithms[job.algorithm].name;
        let seeds = run_seeds(cfg.master_seed, inst, alg, job.sample);
        let file = format!("traces/{}/{}/run_{:03}.jsonl", slug(inst), slug(alg), job.sample);
        let mut record = RunRecord {
            instance: inst.clone(),
            algorithm: alg.clone(),
            sample: job.sample,
            seeds,
            file: file.clone(),
            sha256: None,
            error: None,
        };
        let result = job.strategy.run(&problems[job.instance], seeds, samplers).and_then(|trace| {
            let label = TraceLabel { instance: inst.clone(), algorithm: alg.clone(), sample: job.sample };
            let mut buf = Vec::new();
            write_trace_jsonl(&trace, &label, &mut buf)?;
            let hash = write_file(&out.join(&file), &buf)?;
            Ok((trace, hash))
        });
        match result {
            Ok((trace, hash)) => {
                record.sha256 = Some(hash);
                (record, Some(trace))
            }
            Err(e) => {
                log::error!("{inst}/{alg}/{}: {e}", job.sample);
                record.error = Some(e.to_string());
                (record, None)
            }
        }
    };

    let results: Vec<(RunRecord, Option<RunTrace>)> = match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(|| jobs.par_iter().map(execute).collect()),
        None => jobs.par_iter().map(execute).collect(),
    };

    let mut grouped: BTreeMap<(usize, usize), Vec<RunTrace>> = BTreeMap::new();
    let mut complete: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for (job, (_, trace)) in jobs.iter().zip(&results) {
        let key = (job.instance, job.algorithm);
        let ok = complete.entry(key).or_insert(true);
        match trace {
            Some(t) => grouped.entry(key).or_default().push(t.clone()),
            None => *ok = false,
        }
    }

    for (i, record) in instance_records.iter_mut().enumerate() {
        if record.y_star.is_none() {
            let best = grouped
                .iter()
                .filter(|((inst, _), _)| *inst == i)
                .flat_map(|(_, traces)| traces.iter())
                .filter_map(|t| t.final_dataset().min_y())
                .reduce(f64::min);
            record.y_star = best;
            record.y_star_source = best.map(|_| "best-observed".to_string());
        }
    }

    let mut summaries: BTreeMap<String, BTreeMap<String, BenchmarkSummary>> = BTreeMap::new();
    let mut n_conv_table: BTreeMap<String, BTreeMap<String, Option<usize>>> = BTreeMap::new();
    let mut final_table: BTreeMap<String, BTreeMap<String, Option<Rate>>> = BTreeMap::new();
    for (i, inst) in cfg.instances.iter().enumerate() {
        for (a, alg) in cfg.algorithms.iter().enumerate() {
            let traces = grouped.get(&(i, a));
            let usable = complete.get(&(i, a)).copied().unwrap_or(false);
            let (Some(traces), Some(y_star), true) = (traces, instance_records[i].y_star, usable) else {
                n_conv_table.entry(inst.name.clone()).or_default().insert(alg.name.clone(), None);
                final_table.entry(inst.name.clone()).or_default().insert(alg.name.clone(), None);
                continue;
            };
            let summary = metrics::aggregate(&TraceEnsemble { traces, y_star })?;
            let base = format!("summaries/{}/{}", slug(&inst.name), slug(&alg.name));
            let mut csv = Vec::new();
            summary.write_csv(&mut csv)?;
            outputs.insert(format!("{base}.csv"), write_file(&out.join(format!("{base}.csv")), &csv)?);
            let json = serde_json::to_vec_pretty(&summary)?;
            outputs.insert(format!("{base}.json"), write_file(&out.join(format!("{base}.json")), &json)?);
            n_conv_table.entry(inst.name.clone()).or_default().insert(alg.name.clone(), summary.n_conv);
            final_table
                .entry(inst.name.clone())
                .or_default()
                .insert(alg.name.clone(), Some(summary.final_success_rate));
            summaries.entry(inst.name.clone()).or_default().insert(alg.name.clone(), summary);
        }
    }

    let mut buf = Vec::new();
    metrics::write_frequency_csv(&n_conv_table, &metrics::frequency_table(&n_conv_table, Better::Smaller), &mut buf)?;
    outputs.insert("tables/n_conv.csv".into(), write_file(&out.join("tables/n_conv.csv"), &buf)?);
    let mut buf = Vec::new();
    metrics::write_frequency_csv(&final_table, &metrics::frequency_table(&final_table, Better::Larger), &mut buf)?;
    outputs
        .insert("tables/final_success_rate.csv".into(), write_file(&out.join("tables/final_success_rate.csv"), &buf)?);

    // Where results go and how many threads run them do not affect results.
    let hashed = ExperimentConfig { output_dir: PathBuf::new(), jobs: None, ..cfg.clone() };
    let config_json = serde_json::to_vec(&hashed)?;
    let manifest = Manifest {
        config_sha256: sha256_hex(&config_json),
        master_seed: cfg.master_seed,
        n_samp: cfg.n_samp,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        ci_method: format!("normal approximation: {} * sqrt(variance / n_samp)", metrics::Z_95),
        instances: instance_records,
        runs: results.into_iter().map(|(r, _)| r).collect(),
        outputs,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(ResultBundle { output_dir: out, manifest, summaries, oracles })
}

/// Read every `*.jsonl` trace in `dir`, sorted by file name.
pub fn load_traces(dir: &Path) -> Result<Vec<RunTrace>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_trace_jsonl(std::fs::File::open(p)?).map(|(t, _)| t)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotAxis {
    /// Mean running minimum against `|D_a|`.
    DatasetSize,
    /// Success rate against the number of completed loops.
    Iteration,
}

impl std::str::FromStr for PlotAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset_size" | "dataset-size" => Ok(Self::DatasetSize),
            "iteration" => Ok(Self::Iteration),
            other => Err(Error::Unknown { kind: "plot axis", name: other.into() }),
        }
    }
}

/// CSV with columns `series, x, value, ci95_low, ci95_high`.
pub fn export_plot_data(summary: &BenchmarkSummary, axis: PlotAxis, oracle: Option<&OracleResult>) -> String {
    let mut out = String::new();
    match axis {
        PlotAxis::DatasetSize => {
            out.push_str("series,dataset_size,value,ci95_low,ci95_high\n");
            for (a, (&mean, &ci)) in summary.mean_min.iter().zip(&summary.ci95_half_width).enumerate() {
                let _ = writeln!(out, "mean_min,{},{mean:?},{:?},{:?}", summary.n0 + a, mean - ci, mean + ci);
            }
        }
        PlotAxis::Iteration => {
            out.push_str("series,iteration,value,ci95_low,ci95_high\n");
            for (a, rate) in summary.success_rate.iter().enumerate().skip(1) {
                let _ = writeln!(out, "success_rate,{a},{:?},,", rate.as_f64());
            }
        }
    }
    if let Some(o) = oracle {
        let _ = writeln!(out, "y_opt_1st,,{:?},,", o.y_opt_1st);
        if let Some(second) = o.y_opt_2nd {
            let _ = writeln!(out, "y_opt_2nd,,{second:?},,");
        }
    }
    out
}

/// Minimal SVG line chart of the main series of [`export_plot_data`].
pub fn render_svg(summary: &BenchmarkSummary, axis: PlotAxis) -> String {
    let (xs, ys): (Vec<f64>, Vec<f64>) = match axis {
        PlotAxis::DatasetSize => {
            summary.mean_min.iter().enumerate().map(|(a, &m)| ((summary.n0 + a) as f64, m)).unzip()
        }
        PlotAxis::Iteration => {
            summary.success_rate.iter().enumerate().skip(1).map(|(a, r)| (a as f64, r.as_f64())).unzip()
        }
    };
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi } else { lo + 1.0 })
    };
    let (x0, x1) = span(&xs);
    let (y0, y1) = span(&ys);
    let points: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let px = pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
            let py = h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\
         <rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\
         <polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" points=\"{}\"/></svg>\n",
        w - 2.0 * pad,
        h - 2.0 * pad,
        points.join(" ")
    )
}

/// Re-evaluate every stored point of a trace against the problem.
pub fn revalidate_trace(trace: &RunTrace, problem: &dyn BlackBox, tol: f64) -> Result<()> {
    let points =
        trace.initial.points.iter().cloned().chain(trace.queries.iter().map(|q| DataPoint { x: q.x.clone(), y: q.y }));
    for p in points {
        let y = problem.eval(&p.x)?;
        if (y - p.y).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "stored y {} differs from re-evaluation {y} at {}",
                p.y,
                p.x.to_bit_string()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbo::Mode;

    const MINIMAL: &str = r#"
        [[instance]]
        n = 6
        d = 50
        k_factor = 2

        [[algorithm]]
        name = "S-SFMA"
        kind = "sfma"
        n_ite = 289
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.n_samp, 30);
        assert!(cfg.oracle);
        let TraceConfig::Single(s) = &cfg.resolved["W0"]["S-SFMA"] else { panic!("single phase expected") };
        assert_eq!(s.mode, Mode::Sfma);
        assert!(s.standardize);
        assert_eq!(s.ratio_r, 0.4);
        assert_eq!(s.n_ite, 289);
        assert_eq!(s.train.learning_rate, 0.01);
        assert_eq!(s.train.n_epochs, 200);
        assert_eq!((s.anneal.n_reads, s.anneal.n_sweeps), (10, 100));
        assert_eq!(s.n_g, Some(60));
        assert_eq!(s.k, Some(5));
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad_ratio = MINIMAL.replace("n_ite = 289", "n_ite = 289\nratio_r = 1.5");
        assert!(matches!(parse_config(&bad_ratio), Err(Error::Config { .. })));

        let dup = format!("{MINIMAL}\n[[algorithm]]\nname = \"S-SFMA\"\nkind = \"fma\"\nn_ite = 3\n");
        let err = parse_config(&dup).unwrap_err();
        assert!(err.to_string().contains("duplicate algorithm name"), "{err}");

        let unknown = format!("bogus = 1\n{MINIMAL}");
        let err = parse_config(&unknown).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");

        let wide = MINIMAL.replace("n = 6", "n = 13");
        assert!(parse_config(&wide).is_err());
        let wide_no_oracle = format!("oracle = false\n{}", MINIMAL.replace("n = 6", "n = 13"));
        assert!(parse_config(&wide_no_oracle).is_ok());

        assert!(parse_config(&format!("n_samp = 0\n{MINIMAL}")).is_err());
    }

    #[test]
    fn seed_derivation_is_independent_of_other_algorithms() {
        let a = run_seeds(1, "W0", "S-SFMA", 3);
        assert_eq!(a, run_seeds(1, "W0", "S-SFMA", 3));
        assert_ne!(a.run_seed, run_seeds(1, "W0", "S-FMA", 3).run_seed);
        assert_eq!(a.data_seed, run_seeds(1, "W0", "S-FMA", 3).data_seed);
        assert_ne!(a.run_seed, run_seeds(1, "W0", "S-SFMA", 4).run_seed);
    }

    #[test]
    fn plot_axes() {
        let traces = [crate::metrics::tests_support::trace(12, 289)];
        let s = metrics::aggregate(&TraceEnsemble { traces: &traces, y_star: 0.0 }).unwrap();
        let oracle = OracleResult { best: vec![], y_opt_1st: 0.0, y_opt_2nd: Some(0.5) };
        let csv = export_plot_data(&s, PlotAxis::DatasetSize, Some(&oracle));
        let sizes: Vec<usize> = csv
            .lines()
            .filter(|l| l.starts_with("mean_min"))
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!((sizes[0], *sizes.last().unwrap()), (12, 301));
        assert!(csv.contains("y_opt_1st,,0.0,,") && csv.contains("y_opt_2nd,,0.5,,"));

        let csv = export_plot_data(&s, PlotAxis::Iteration, None);
        let its: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!((its[0], *its.last().unwrap(), its.len()), (1, 289, 289));
        assert!(render_svg(&s, PlotAxis::Iteration).starts_with("<svg"));
        assert!("bogus".parse::<PlotAxis>().is_err());
    }
}
