//! Experiment drivers: configuration, the offline/online pipeline, and
//! result emission (JSON report plus CSV series).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coeffspace::{draw_samples, MemoCache, SampleSet};
use crate::experiments::{example1, example2, example3, Problem};
use crate::metrics::{
    l1_density_distance, mc_mean, paired_densities, relative_mean_error, ErrorReport,
    TimingReport,
};
use crate::partition::{extract_blocks, partition_mesh, Partition, SubdomainBlocks};
use crate::recovery::{
    build_separated_recovery, evaluate_recovery, recover_interior, SubdomainRecovery,
};
use crate::schur::{
    assemble_global, build_contribution, build_interface_rom, evaluate_interface_rom,
    InterfaceROM, SchurAffine, SchurContribution,
};
use crate::vscore::{evaluate_solution, VsConfig};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure in stage '{stage}': {message}")]
    Numerical { stage: &'static str, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl DriverError {
    /// documented process exit code: 2 config, 3 numerical or io
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Config(_) => 2,
            _ => 3,
        }
    }
}

fn num_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> DriverError {
    move |e| DriverError::Numerical { stage, message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex3,
}

impl std::str::FromStr for ExampleId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ex1" => Ok(ExampleId::Ex1),
            "ex2" => Ok(ExampleId::Ex2),
            "ex3" => Ok(ExampleId::Ex3),
            other => Err(format!("unknown example '{other}', expected ex1|ex2|ex3")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    OneD { n_elems: usize },
    TwoD { nx: usize, ny: usize },
}

/// Full description of one experiment run. Loaded from JSON; unknown keys
/// are rejected so typos fail loudly instead of silently using defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub example: ExampleId,
    pub resolution: Resolution,
    /// KL modes per subdomain source (third example only)
    #[serde(default = "default_kl_modes")]
    pub kl_modes: usize,
    pub training_size: usize,
    pub tolerance: f64,
    /// per-subdomain term caps for the interior response builds (N_S_i),
    /// applied to each interface-column solve; a single entry broadcasts to
    /// every subdomain
    pub caps_s: Vec<usize>,
    /// per-subdomain term caps for the interior source builds (N_F_i)
    pub caps_f: Vec<usize>,
    /// term cap for the interface surrogate (M)
    pub interface_m: usize,
    pub test_samples: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub run_reference: bool,
    #[serde(default = "default_true")]
    pub emit_fields: bool,
    #[serde(default)]
    pub verbose: bool,
    /// worker threads for the online sweep; 0 picks the machine default
    #[serde(default)]
    pub workers: usize,
}

fn default_true() -> bool {
    true
}

fn default_kl_modes() -> usize {
    16
}

impl ExperimentConfig {
    /// Desk-scale defaults: reduced meshes and test-set sizes that finish in
    /// seconds. `paper_scale` restores the published resolutions (slow).
    pub fn default_for(example: ExampleId, paper_scale: bool) -> ExperimentConfig {
        match example {
            ExampleId::Ex1 => ExperimentConfig {
                schema_version: 1,
                example,
                resolution: Resolution::OneD { n_elems: if paper_scale { 1000 } else { 200 } },
                kl_modes: 0,
                training_size: 20,
                tolerance: 1e-12,
                caps_s: vec![4, 1],
                caps_f: vec![4, 1],
                interface_m: 10,
                test_samples: if paper_scale { 10_000 } else { 1000 },
                seed: 2024,
                run_reference: true,
                emit_fields: true,
                verbose: false,
                workers: 0,
            },
            ExampleId::Ex2 => ExperimentConfig {
                schema_version: 1,
                example,
                resolution: if paper_scale {
                    Resolution::TwoD { nx: 100, ny: 100 }
                } else {
                    Resolution::TwoD { nx: 40, ny: 40 }
                },
                kl_modes: 0,
                training_size: 20,
                tolerance: 1e-12,
                caps_s: vec![10],
                caps_f: vec![5],
                interface_m: 10,
                test_samples: if paper_scale { 10_000 } else { 1000 },
                seed: 2024,
                run_reference: true,
                emit_fields: true,
                verbose: false,
                workers: 0,
            },
            ExampleId::Ex3 => ExperimentConfig {
                schema_version: 1,
                example,
                resolution: if paper_scale {
                    Resolution::TwoD { nx: 60, ny: 60 }
                } else {
                    Resolution::TwoD { nx: 20, ny: 20 }
                },
                kl_modes: 16,
                training_size: 120,
                tolerance: 1e-10,
                caps_s: vec![6],
                caps_f: vec![30],
                interface_m: 20,
                test_samples: if paper_scale { 10_000 } else { 500 },
                seed: 2024,
                run_reference: true,
                emit_fields: true,
                verbose: false,
                workers: 0,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig, DriverError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| DriverError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        let fail = |m: &str| Err(DriverError::Config(m.to_string()));
        if self.schema_version != 1 {
            return fail(&format!("unsupported schema_version {}", self.schema_version));
        }
        match (&self.example, &self.resolution) {
            (ExampleId::Ex1, Resolution::TwoD { .. }) => {
                return fail("ex1 takes a 1D resolution {\"n_elems\": ...}")
            }
            (ExampleId::Ex2 | ExampleId::Ex3, Resolution::OneD { .. }) => {
                return fail("2D examples take {\"nx\": ..., \"ny\": ...}")
            }
            _ => {}
        }
        if self.training_size == 0 || self.test_samples == 0 {
            return fail("training_size and test_samples must be positive");
        }
        if !(self.tolerance > 0.0) {
            return fail("tolerance must be positive");
        }
        if self.interface_m == 0 {
            return fail("interface_m must be positive");
        }
        if self.caps_s.is_empty() || self.caps_f.is_empty() {
            return fail("caps_s and caps_f must be non-empty");
        }
        if self.caps_s.iter().chain(&self.caps_f).any(|&c| c == 0) {
            return fail("term caps must be positive");
        }
        if self.example == ExampleId::Ex3 && self.kl_modes == 0 {
            return fail("ex3 needs kl_modes >= 1");
        }
        Ok(())
    }
}

fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, DriverError> {
    let map = |e: crate::experiments::BuildError| DriverError::Config(e.to_string());
    match (cfg.example, &cfg.resolution) {
        (ExampleId::Ex1, &Resolution::OneD { n_elems }) => example1(n_elems).map_err(map),
        (ExampleId::Ex2, &Resolution::TwoD { nx, ny }) => example2(nx, ny).map_err(map),
        (ExampleId::Ex3, &Resolution::TwoD { nx, ny }) => {
            example3(nx, ny, cfg.kl_modes).map_err(map)
        }
        _ => Err(DriverError::Config("resolution kind does not match example".into())),
    }
}

fn broadcast_caps(caps: &[usize], n_regions: usize, what: &str) -> Result<Vec<usize>, DriverError> {
    if caps.len() == 1 {
        return Ok(vec![caps[0]; n_regions]);
    }
    if caps.len() != n_regions {
        return Err(DriverError::Config(format!(
            "{what} has {} entries but the partition has {} subdomains",
            caps.len(),
            n_regions
        )));
    }
    Ok(caps.to_vec())
}

/// Everything the offline phase produces, reusable across online studies.
pub struct OfflineBuild {
    pub problem: Problem,
    pub partition: Partition,
    pub blocks: Vec<SubdomainBlocks>,
    pub contributions: Vec<SchurContribution>,
    pub interface_system: SchurAffine,
    pub rom: InterfaceROM,
    pub training: SampleSet,
}

impl OfflineBuild {
    /// Remark-style additive bound on m_S before cross-subdomain merging.
    pub fn m_s_bound(&self) -> usize {
        self.blocks
            .iter()
            .zip(&self.contributions)
            .map(|(b, c)| b.m_a() * (c.n_s + 1))
            .sum()
    }

    /// Same bound for the interface load terms.
    pub fn m_f_bound(&self) -> usize {
        self.blocks
            .iter()
            .zip(&self.contributions)
            .map(|(b, c)| b.m_b() + b.m_a() * c.n_f)
            .sum()
    }
}

/// Offline stages: partition, per-subdomain separated builds, global merge,
/// interface surrogate.
pub fn build_offline(cfg: &ExperimentConfig) -> Result<OfflineBuild, DriverError> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let partition = partition_mesh(&problem.system).map_err(num_err("partition"))?;
    let caps_s = broadcast_caps(&cfg.caps_s, partition.n_regions, "caps_s")?;
    let caps_f = broadcast_caps(&cfg.caps_f, partition.n_regions, "caps_f")?;
    let training = draw_samples(&problem.space, cfg.training_size, cfg.seed);

    let mut blocks = Vec::with_capacity(partition.n_regions);
    let mut contributions = Vec::with_capacity(partition.n_regions);
    for i in 0..partition.n_regions {
        let b = extract_blocks(&problem.system.op, &problem.system.rhs, &partition, i)
            .map_err(num_err("block extraction"))?;
        let vs = |cap: usize| VsConfig {
            tolerance: cfg.tolerance,
            max_terms: cap.min(cfg.training_size),
            training: training.clone(),
        };
        let c = build_contribution(&b, &vs(caps_s[i]), &vs(caps_f[i]))
            .map_err(num_err("schur assembly"))?;
        blocks.push(b);
        contributions.push(c);
    }
    let interface_system =
        assemble_global(&contributions, &partition).map_err(num_err("schur assembly"))?;
    let rom = build_interface_rom(
        &interface_system,
        &VsConfig {
            tolerance: cfg.tolerance,
            max_terms: cfg.interface_m.min(cfg.training_size),
            training: training.clone(),
        },
    )
    .map_err(num_err("interface surrogate"))?;
    Ok(OfflineBuild { problem, partition, blocks, contributions, interface_system, rom, training })
}

#[derive(Debug, Clone, Serialize)]
pub struct SubdomainCounts {
    pub region: usize,
    pub m_a: usize,
    pub m_b: usize,
    pub n_s: usize,
    pub n_f: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorSummary {
    pub n_samples: usize,
    pub mean_relative: f64,
    pub max_relative: f64,
}

impl From<&ErrorReport> for ErrorSummary {
    fn from(r: &ErrorReport) -> ErrorSummary {
        ErrorSummary {
            n_samples: r.n_samples,
            mean_relative: r.mean_relative,
            max_relative: r.max_relative,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// JSON summary of one run. Timing fields are the only nondeterministic
/// content; every CSV in the manifest is byte-stable for a fixed config.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub n_gamma: usize,
    pub subdomains: Vec<SubdomainCounts>,
    pub m_s: usize,
    /// additive pre-merge bound on m_s
    pub m_s_bound: usize,
    pub m_f: usize,
    pub m_f_bound: usize,
    pub m: usize,
    pub interface_error: Option<ErrorSummary>,
    pub eps_vs_m: Vec<(usize, f64)>,
    pub density_l1: Option<f64>,
    pub timing: TimingReport,
    pub files: Vec<FileDigest>,
}

struct CsvSink {
    dir: PathBuf,
    files: Vec<FileDigest>,
}

impl CsvSink {
    fn new(dir: &Path) -> Result<CsvSink, DriverError> {
        fs::create_dir_all(dir)
            .map_err(|source| DriverError::Io { path: dir.to_path_buf(), source })?;
        Ok(CsvSink { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), DriverError> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)
            .map_err(|source| DriverError::Io { path: path.clone(), source })?;
        f.write_all(content.as_bytes())
            .map_err(|source| DriverError::Io { path: path.clone(), source })?;
        let digest = Sha256::digest(content.as_bytes());
        self.files.push(FileDigest {
            name: name.to_string(),
            sha256: format!("{digest:x}"),
        });
        Ok(())
    }
}

fn pool_for(workers: usize) -> Result<rayon::ThreadPool, DriverError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(num_err("worker pool"))
}

/// Interface solutions of the surrogate over a sample list, in order.
fn rom_sweep(
    rom: &InterfaceROM,
    samples: &[Vec<f64>],
    pool: &rayon::ThreadPool,
) -> Result<Vec<Vec<f64>>, DriverError> {
    pool.install(|| {
        samples
            .par_iter()
            .map(|s| evaluate_interface_rom(rom, s, &mut MemoCache::new()))
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(num_err("online sweep"))
}

/// Monolithic solves restricted to the interface, in order.
fn reference_sweep(
    build: &OfflineBuild,
    samples: &[Vec<f64>],
    pool: &rayon::ThreadPool,
) -> Result<Vec<Vec<f64>>, DriverError> {
    let sys = &build.problem.system;
    let part = &build.partition;
    pool.install(|| {
        samples
            .par_iter()
            .map(|s| {
                crate::fem::solve_global(&sys.op, &sys.rhs, s)
                    .map(|full| part.interface.iter().map(|&f| full[f]).collect())
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()
    })
    .map_err(num_err("reference sweep"))
}

/// Full nodal fields of the surrogate. Uses the factorization-free recovery
/// when every subdomain operator has a single structural term, otherwise
/// falls back to per-sample interior solves.
fn rom_full_fields(
    build: &OfflineBuild,
    u_gammas: &[Vec<f64>],
    samples: &[Vec<f64>],
    pool: &rayon::ThreadPool,
) -> Result<Vec<Vec<f64>>, DriverError> {
    let stage = num_err::<crate::recovery::RecoveryError>("interior recovery");
    let fast: Option<Vec<SubdomainRecovery>> = build
        .blocks
        .iter()
        .map(|b| build_separated_recovery(b, &build.rom).ok())
        .collect();
    let dof_map = &build.problem.system.dof_map;
    if let Some(recs) = fast {
        return pool.install(|| {
            samples
                .par_iter()
                .map(|s| {
                    evaluate_recovery(&recs, &build.rom, &build.partition, dof_map, s, &mut MemoCache::new())
                        .map(|f| f.nodal)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(stage);
    }
    pool.install(|| {
        samples
            .par_iter()
            .zip(u_gammas)
            .map(|(s, u_gamma)| {
                let mut cache = MemoCache::new();
                let mut free = vec![0.0; build.partition.n_free];
                for (g, &f) in build.partition.interface.iter().enumerate() {
                    free[f] = u_gamma[g];
                }
                for b in &build.blocks {
                    let trace = b.restrict_interface(u_gamma);
                    let interior = recover_interior(b, &trace, s, &mut cache)?;
                    for (k, &f) in b.interior.iter().enumerate() {
                        free[f] = interior[k];
                    }
                }
                dof_map
                    .full_field(&free, s, &mut cache)
                    .map_err(|e| crate::recovery::RecoveryError::Coeff(match e {
                        crate::fem::FemError::Coeff(c) => c,
                        other => panic!("unexpected: {other}"),
                    }))
            })
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(stage)
}

fn fmt_row(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

/// Relative mean interface error for each truncation level M in `m_values`.
pub fn sweep_errors(
    rom: &InterfaceROM,
    reference: &[Vec<f64>],
    samples: &[Vec<f64>],
    m_values: &[usize],
    pool: &rayon::ThreadPool,
) -> Result<Vec<(usize, f64)>, DriverError> {
    let mut out = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let truncated = rom.sol.truncated(m.min(rom.m()));
        let approx: Vec<Vec<f64>> = pool
            .install(|| {
                samples
                    .par_iter()
                    .map(|s| evaluate_solution(&truncated, s, &mut MemoCache::new()))
                    .collect::<Result<Vec<_>, _>>()
            })
            .map_err(num_err("truncation sweep"))?;
        let rep = relative_mean_error(&approx, reference).map_err(num_err("truncation sweep"))?;
        out.push((m, rep.mean_relative));
    }
    Ok(out)
}

/// Runs the full pipeline and writes `report.json` plus the CSV series into
/// `out_dir`. Returns the report.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport, DriverError> {
    let pool = pool_for(cfg.workers)?;
    let t0 = Instant::now();
    let build = build_offline(cfg)?;
    let offline_s = t0.elapsed().as_secs_f64();

    let test = draw_samples(&build.problem.space, cfg.test_samples, cfg.seed + 1);
    let samples = &test.samples;

    let t1 = Instant::now();
    let u_rom = rom_sweep(&build.rom, samples, &pool)?;
    let online_total_s = t1.elapsed().as_secs_f64();

    let mut sink = CsvSink::new(out_dir)?;
    let mut timing = TimingReport {
        offline_s,
        online_total_s,
        online_per_sample_s: online_total_s / samples.len() as f64,
        ..TimingReport::default()
    };

    let mut interface_error = None;
    let mut eps_vs_m = Vec::new();
    let mut density_l1 = None;

    if cfg.run_reference {
        let t2 = Instant::now();
        let u_ref = reference_sweep(&build, samples, &pool)?;
        timing.reference_total_s = t2.elapsed().as_secs_f64();
        timing.reference_per_sample_s = timing.reference_total_s / samples.len() as f64;

        let rep = relative_mean_error(&u_rom, &u_ref).map_err(num_err("error report"))?;
        let mut csv = String::from("sample,relative_error\n");
        for (k, e) in rep.per_sample.iter().enumerate() {
            csv.push_str(&fmt_row(&[k.to_string(), f(*e)]));
        }
        sink.write("per_sample_errors.csv", &csv)?;
        interface_error = Some(ErrorSummary::from(&rep));

        let m_values: Vec<usize> = (0..=build.rom.m()).collect();
        eps_vs_m = sweep_errors(&build.rom, &u_ref, samples, &m_values, &pool)?;
        let mut csv = String::from("M,epsilon\n");
        for (m, e) in &eps_vs_m {
            csv.push_str(&fmt_row(&[m.to_string(), f(*e)]));
        }
        sink.write("eps_vs_M.csv", &csv)?;

        if cfg.emit_fields || build.problem.monitored_node.is_some() {
            let rom_fields = rom_full_fields(&build, &u_rom, samples, &pool)?;
            let ref_fields: Vec<Vec<f64>> = pool
                .install(|| {
                    samples
                        .par_iter()
                        .map(|s| {
                            let mut cache = MemoCache::new();
                            let sys = &build.problem.system;
                            let free = crate::fem::solve_global(&sys.op, &sys.rhs, s)?;
                            sys.dof_map.full_field(&free, s, &mut cache)
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .map_err(num_err("reference fields"))?;

            if cfg.emit_fields {
                let mean_rom = mc_mean(&rom_fields).map_err(num_err("mean field"))?;
                let mean_ref = mc_mean(&ref_fields).map_err(num_err("mean field"))?;
                let mesh = &build.problem.system.mesh;
                for (name, mean) in
                    [("mean_field_rom.csv", &mean_rom), ("mean_field_reference.csv", &mean_ref)]
                {
                    let mut csv = String::from("node,x,y,mean\n");
                    for (i, v) in mean.iter().enumerate() {
                        let c = mesh.node(i);
                        let y = if c.len() > 1 { c[1] } else { 0.0 };
                        csv.push_str(&fmt_row(&[i.to_string(), f(c[0]), f(y), f(*v)]));
                    }
                    sink.write(name, &csv)?;
                }
            }

            if let Some(node) = build.problem.monitored_node {
                let a: Vec<f64> = rom_fields.iter().map(|u| u[node]).collect();
                let b: Vec<f64> = ref_fields.iter().map(|u| u[node]).collect();
                let (da, db) = paired_densities(&a, &b, 60).map_err(num_err("density"))?;
                density_l1 =
                    Some(l1_density_distance(&da, &db).map_err(num_err("density"))?);
                for (name, d) in [("density_rom.csv", &da), ("density_reference.csv", &db)] {
                    let mut csv = String::from("bin_center,mass\n");
                    for k in 0..d.n_bins {
                        csv.push_str(&fmt_row(&[f(d.bin_center(k)), f(d.masses[k])]));
                    }
                    sink.write(name, &csv)?;
                }
            }
        }
    }

    let subdomains: Vec<SubdomainCounts> = build
        .blocks
        .iter()
        .zip(&build.contributions)
        .map(|(b, c)| SubdomainCounts {
            region: b.region,
            m_a: b.m_a(),
            m_b: b.m_b(),
            n_s: c.n_s,
            n_f: c.n_f,
        })
        .collect();

    let report = RunReport {
        config: cfg.clone(),
        n_gamma: build.partition.n_gamma(),
        subdomains,
        m_s: build.interface_system.m_s(),
        m_s_bound: build.m_s_bound(),
        m_f: build.interface_system.m_f(),
        m_f_bound: build.m_f_bound(),
        m: build.rom.m(),
        interface_error,
        eps_vs_m,
        density_l1,
        timing,
        files: sink.files.clone(),
    };

    let json = serde_json::to_string_pretty(&report)
        .map_err(num_err("report serialization"))?;
    let path = out_dir.join("report.json");
    fs::write(&path, json).map_err(|source| DriverError::Io { path, source })?;
    Ok(report)
}

/// Parses an inclusive truncation range written as `a..b`.
pub fn parse_m_range(text: &str) -> Result<Vec<usize>, DriverError> {
    let parts: Vec<&str> = text.split("..").collect();
    let bad = || DriverError::Config(format!("bad M range '{text}', expected like 1..20"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let a: usize = parts[0].parse().map_err(|_| bad())?;
    let b: usize = parts[1].parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

/// Builds once at the largest requested M and writes `eps_vs_M.csv` for the
/// requested truncation levels.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    m_values: &[usize],
    out_dir: &Path,
) -> Result<Vec<(usize, f64)>, DriverError> {
    let mut cfg = cfg.clone();
    cfg.interface_m = (*m_values.iter().max().unwrap_or(&1)).max(1);
    let pool = pool_for(cfg.workers)?;
    let build = build_offline(&cfg)?;
    let test = draw_samples(&build.problem.space, cfg.test_samples, cfg.seed + 1);
    let u_ref = reference_sweep(&build, &test.samples, &pool)?;
    let eps = sweep_errors(&build.rom, &u_ref, &test.samples, m_values, &pool)?;
    let mut sink = CsvSink::new(out_dir)?;
    let mut csv = String::from("M,epsilon\n");
    for (m, e) in &eps {
        csv.push_str(&fmt_row(&[m.to_string(), f(*e)]));
    }
    sink.write("eps_vs_M.csv", &csv)?;
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configs_validate() {
        for ex in [ExampleId::Ex1, ExampleId::Ex2, ExampleId::Ex3] {
            ExperimentConfig::default_for(ex, false).validate().unwrap();
            ExperimentConfig::default_for(ex, true).validate().unwrap();
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::default_for(ExampleId::Ex2, false);
        let json = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn unknown_keys_rejected_with_config_exit_code() {
        let cfg = ExperimentConfig::default_for(ExampleId::Ex1, false);
        let mut v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        v["tolerence"] = serde_json::json!(1e-6);
        let err = ExperimentConfig::from_json(&v.to_string()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn mismatched_resolution_rejected() {
        let mut cfg = ExperimentConfig::default_for(ExampleId::Ex1, false);
        cfg.resolution = Resolution::TwoD { nx: 10, ny: 10 };
        assert!(matches!(cfg.validate(), Err(DriverError::Config(_))));
    }

    #[test]
    fn m_range_parsing() {
        assert_eq!(parse_m_range("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert!(parse_m_range("4..1").is_err());
        assert!(parse_m_range("x..2").is_err());
    }

    #[test]
    fn small_run_emits_all_files_and_reruns_identically() {
        let mut cfg = ExperimentConfig::default_for(ExampleId::Ex2, false);
        cfg.resolution = Resolution::TwoD { nx: 10, ny: 10 };
        cfg.test_samples = 50;
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let r1 = run_experiment(&cfg, d1.path()).unwrap();
        let r2 = run_experiment(&cfg, d2.path()).unwrap();
        let expected = [
            "per_sample_errors.csv",
            "eps_vs_M.csv",
            "mean_field_rom.csv",
            "mean_field_reference.csv",
            "density_rom.csv",
            "density_reference.csv",
        ];
        let names1: Vec<&str> = r1.files.iter().map(|f| f.name.as_str()).collect();
        for name in expected {
            assert!(names1.contains(&name), "missing {name}");
        }
        // digest equality is byte-identity of every CSV
        for (a, b) in r1.files.iter().zip(&r2.files) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.sha256, b.sha256, "{} differs between reruns", a.name);
        }
        assert!(d1.path().join("report.json").exists());
        let eps_full = r1.eps_vs_m.last().unwrap().1;
        let headline = r1.interface_error.as_ref().unwrap().mean_relative;
        assert!((eps_full - headline).abs() <= 1e-12 * headline.max(1e-300));
        // M = 0 approximates by zero, so the relative error is exactly 1
        assert!((r1.eps_vs_m[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ex1_small_run_uses_interior_fallback_and_succeeds() {
        let mut cfg = ExperimentConfig::default_for(ExampleId::Ex1, false);
        cfg.resolution = Resolution::OneD { n_elems: 40 };
        cfg.test_samples = 30;
        let dir = tempfile::tempdir().unwrap();
        let rep = run_experiment(&cfg, dir.path()).unwrap();
        assert!(rep.interface_error.unwrap().mean_relative < 1e-3);
        assert_eq!(rep.n_gamma, 1);
        assert!(rep.m_s <= rep.m_s_bound);
    }

    #[test]
    fn sweep_is_monotone_on_prefix_family() {
        let mut cfg = ExperimentConfig::default_for(ExampleId::Ex2, false);
        cfg.resolution = Resolution::TwoD { nx: 10, ny: 10 };
        cfg.test_samples = 40;
        let dir = tempfile::tempdir().unwrap();
        let eps = run_sweep(&cfg, &[1, 2, 4, 8], dir.path()).unwrap();
        for w in eps.windows(2) {
            assert!(w[1].1 <= w[0].1 * (1.0 + 1e-9), "{:?}", eps);
        }
        assert!(dir.path().join("eps_vs_M.csv").exists());
    }
}
