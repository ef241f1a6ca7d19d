use std::path::{Path, PathBuf};

use dwmtj::config::{parse_config, ConfigError, DesignConfig, ExperimentConfig};
use dwmtj::datasets::Dataset;
use dwmtj::device::{coupling_ratio, stray_field, synapse_levels};
use dwmtj::energy::{account, calibrate_adc_coeff, energy_sweep, EnergyParams, EnergySweepRow};
use dwmtj::pipeline::{self, load_task, missing_data_files, run_experiment, summarize, to_csv, RunResult, TaskData};
use serde::Serialize;
use thiserror::Error;

use crate::output::Out;
use crate::{Common, DesignArgs, EnergyArgs, SweepArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] dwmtj::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("missing dataset files:\n{}\nset `data.root` in the config or the DWMTJ_DATA environment variable, or run scripts/fetch_data.sh", list(.0))]
    MissingData(Vec<PathBuf>),
    #[error("writing output: {0}")]
    Output(String),
}

fn list(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| format!("  {}", p.display())).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses, applies overrides and validates before anything is computed.
fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let path = c.config.as_ref().ok_or_else(|| CliError::Usage("--config <FILE> is required".into()))?;
    let mut cfg = parse_config(path)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg.resolved()?)
}

fn load_data(cfg: &ExperimentConfig, out: &mut Out) -> Result<TaskData> {
    let missing = missing_data_files(cfg);
    if !missing.is_empty() {
        return Err(CliError::MissingData(missing));
    }
    out.info(&format!("loading {:?} data", cfg.task));
    Ok(load_task(cfg)?)
}

fn jobs(c: &Common) -> usize {
    c.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

fn save_config(out: &mut Out, cfg: &ExperimentConfig) -> Result<()> {
    out.write("config.resolved.toml", cfg.to_toml_string().as_bytes())
}

fn describe(r: &RunResult) -> String {
    format!(
        "accuracy {:.4} | mean fired {:.1} | dead {} | energy {:.3e} J (vmm {:.2e}, program {:.2e}, peripheral {:.2e}) | {:.1}s",
        r.test_accuracy,
        r.mean_fired_eval,
        r.dead_neurons_eval,
        r.energy.e_total,
        r.energy.e_vmm,
        r.energy.e_program,
        r.energy.e_peripheral,
        r.wall_time_s
    )
}

pub fn train(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let mut out = Out::open(&c.out, c.quiet)?;
    out.info(&format!("train {:?} m={} n_us={} n_s={} seed={}", cfg.task, cfg.m, cfg.n_us, cfg.labeled_samples(), cfg.seed));
    let data = load_data(&cfg, &mut out)?;
    let r = run_experiment(&cfg, &data)?;
    save_config(&mut out, &r.config)?;
    out.write_json("result.json", &r)?;
    out.result(&describe(&r));
    Ok(())
}

#[derive(Serialize)]
struct SweepFile<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
    axis: &'a str,
    values: &'a [f64],
    repeats: usize,
    runs: Vec<&'a RunResult>,
}

pub fn sweep(c: &Common, a: &SweepArgs) -> Result<()> {
    let cfg = load_config(c)?;
    let section = cfg.sweep.clone();
    let axis = a
        .axis
        .clone()
        .or_else(|| section.as_ref().map(|s| s.axis.clone()))
        .ok_or_else(|| CliError::Usage("no sweep axis: pass --axis or add a [sweep] section".into()))?;
    let axis_kind: pipeline::SweepAxis = axis.parse()?;
    let values = a
        .values
        .clone()
        .or_else(|| section.as_ref().map(|s| s.values.clone()))
        .ok_or_else(|| CliError::Usage("no sweep values: pass --values or add a [sweep] section".into()))?;
    let repeats = a.repeats.or_else(|| section.as_ref().map(|s| s.repeats)).unwrap_or(1);
    // Every point must validate before the first run starts.
    for &v in &values {
        for r in 0..repeats {
            pipeline::sweep_point(&cfg, axis_kind, v, r)?;
        }
    }
    let mut out = Out::open(&c.out, c.quiet)?;
    let jobs = jobs(c);
    out.info(&format!("sweep {axis} over {values:?} x {repeats} repeats on {jobs} threads"));
    let data = load_data(&cfg, &mut out)?;
    let res = pipeline::sweep(&cfg, &axis, &values, repeats, &data, jobs)?;
    let rows: Vec<_> = res.iter().map(|(row, _)| row.clone()).collect();
    for (row, r) in &res {
        out.result(&format!("{axis}={} repeat={} {}", row.value, row.repeat, describe(r)));
    }
    save_config(&mut out, &cfg)?;
    out.write("sweep.csv", &to_csv(&rows)?)?;
    out.write("sweep_summary.csv", &to_csv(&summarize(&rows))?)?;
    out.write_json(
        "sweep.json",
        &SweepFile {
            version: dwmtj::VERSION,
            config: &cfg,
            axis: &axis,
            values: &values,
            repeats,
            runs: res.iter().map(|(_, r)| r).collect(),
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct DesignReport {
    version: &'static str,
    design: DesignConfig,
    stray_field_tesla: f64,
    synapse_levels: u32,
    synapse_bits: u32,
    coupling_ratio: Option<f64>,
}

/// Design parameters come from the config's [design] section (other sections
/// are ignored) and are then overridden by flags.
fn design_config(c: &Common, a: &DesignArgs) -> Result<DesignConfig> {
    let mut d = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let mut table: toml::Table = toml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            match table.remove("design") {
                Some(v) => v.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
                    path: path.display().to_string(),
                    message: format!("[design]: {e}"),
                })?,
                None => DesignConfig::default(),
            }
        }
        None => DesignConfig::default(),
    };
    let g = &mut d.geometry;
    for (slot, v) in [
        (&mut g.w_nm, a.w_nm),
        (&mut g.t_nm, a.t_nm),
        (&mut g.s_nm, a.s_nm),
        (&mut g.l_mtj_nm, a.l_mtj_nm),
        (&mut g.m_s_tesla, a.m_s_tesla),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    d.v0 = a.v0.or(d.v0);
    d.v_inhib = a.v_inhib.or(d.v_inhib);
    if d.v0.is_some() != d.v_inhib.is_some() {
        return Err(CliError::Usage("coupling ratio needs both v0 and v_inhib".into()));
    }
    Ok(d)
}

pub fn design(c: &Common, a: &DesignArgs) -> Result<()> {
    let d = design_config(c, a)?;
    let g = d.geometry;
    let bz = stray_field(&g)?;
    let n_w = synapse_levels(g.l_mtj_nm, g.w_nm)?;
    let bits = n_w.ilog2();
    let gamma = match (d.v0, d.v_inhib) {
        (Some(v0), Some(vi)) => Some(coupling_ratio(v0, vi)?),
        _ => None,
    };
    let report = DesignReport {
        version: dwmtj::VERSION,
        design: d.clone(),
        stray_field_tesla: bz,
        synapse_levels: n_w,
        synapse_bits: bits,
        coupling_ratio: gamma,
    };
    let mut out = Out::open(&c.out, c.quiet)?;
    out.result(&format!("stray field H_z = {:.4} mT at s = {} nm", bz * 1e3, g.s_nm));
    out.result(&format!("n_w = {n_w} levels ({bits} bits) for L_mtj = {} nm, w = {} nm", g.l_mtj_nm, g.w_nm));
    if let Some(gm) = gamma {
        out.result(&format!("gamma = {gm:.4}"));
    }
    out.write_json("design.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct EnergyFile<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
    params: &'a EnergyParams,
    calibrated_to: Option<f64>,
    rows: &'a [EnergySweepRow],
}

pub fn energy(c: &Common, a: &EnergyArgs) -> Result<()> {
    let cfg = load_config(c)?;
    let section = cfg.energy_sweep.clone();
    let ms = a
        .m
        .clone()
        .or_else(|| section.as_ref().map(|s| s.m_values.clone()))
        .unwrap_or_else(|| vec![cfg.m]);
    let bits = a
        .bits
        .clone()
        .or_else(|| section.as_ref().map(|s| s.bits.clone()))
        .unwrap_or_else(|| (2..=10).collect());
    if ms.is_empty() || bits.is_empty() {
        return Err(CliError::Usage("energy sweep needs at least one M and one bit depth".into()));
    }
    if let Some(&b) = bits.iter().find(|&&b| !(1..=16).contains(&b)) {
        return Err(CliError::Usage(format!("ADC bits {b} outside [1, 16]")));
    }
    let values: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    for &v in &values {
        pipeline::sweep_point(&cfg, pipeline::SweepAxis::M, v, 0)?;
    }
    let mut out = Out::open(&c.out, c.quiet)?;
    let data = load_data(&cfg, &mut out)?;

    let mut params = cfg.energy.clone();
    if let Some(target) = a.calibrate_to {
        out.info(&format!("calibrating the ADC coefficient on M={} to {target:.3e} J", cfg.m));
        let base = run_experiment(&cfg, &data)?;
        params.e_adc_coeff = calibrate_adc_coeff(&base.trace, &params, target)?;
        out.result(&format!("e_adc_coeff = {:.4e} J/bit^2", params.e_adc_coeff));
    }
    out.info(&format!("energy over M = {ms:?}, bits = {bits:?}"));
    let runs = pipeline::sweep(&cfg, "m", &values, 1, &data, jobs(c))?;
    let traces: Vec<_> = runs.iter().map(|(_, r)| (r.config.m, r.trace)).collect();
    for (_, r) in &runs {
        let e = account(&r.trace, &params);
        out.result(&format!("M={} accuracy {:.4} energy {:.3e} J", r.config.m, r.test_accuracy, e.e_total));
    }
    let rows = energy_sweep(&traces, &bits, &params);
    save_config(&mut out, &cfg)?;
    out.write("energy.csv", &to_csv(&rows)?)?;
    out.write_json(
        "energy.json",
        &EnergyFile {
            version: dwmtj::VERSION,
            config: &cfg,
            params: &params,
            calibrated_to: a.calibrate_to,
            rows: &rows,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SplitSummary {
    name: String,
    samples: usize,
    features: usize,
    classes: usize,
    class_counts: Vec<usize>,
    min: f32,
    max: f32,
    mean: f64,
    nonzero_fraction: f64,
}

fn summarize_split(ds: &Dataset) -> SplitSummary {
    let mut counts = vec![0; ds.n_classes];
    for &y in &ds.labels {
        counts[y] += 1;
    }
    let (mut lo, mut hi, mut sum, mut nz) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f64, 0usize);
    for &v in &ds.features {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v as f64;
        nz += (v != 0.0) as usize;
    }
    let n = ds.features.len().max(1) as f64;
    SplitSummary {
        name: ds.name.clone(),
        samples: ds.len(),
        features: ds.l,
        classes: ds.n_classes,
        class_counts: counts,
        min: lo,
        max: hi,
        mean: sum / n,
        nonzero_fraction: nz as f64 / n,
    }
}

#[derive(Serialize)]
struct DatasetReport {
    version: &'static str,
    config: ExperimentConfig,
    train: SplitSummary,
    test: SplitSummary,
}

pub fn dataset_check(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let mut out = Out::open(&c.out, c.quiet)?;
    let data = load_data(&cfg, &mut out)?;
    let train = summarize_split(&data.train);
    let test = summarize_split(&data.test);
    for (tag, s) in [("train", &train), ("test", &test)] {
        out.result(&format!(
            "{tag}: {} samples x {} features, {} classes {:?}, range [{}, {}], mean {:.4}, nonzero {:.3}",
            s.samples, s.features, s.classes, s.class_counts, s.min, s.max, s.mean, s.nonzero_fraction
        ));
    }
    if cfg.labeled_samples() > data.train.len() {
        out.result(&format!(
            "note: n_s = {} exceeds the {} training samples; samples will repeat",
            cfg.labeled_samples(),
            data.train.len()
        ));
    }
    out.write_json("dataset.json", &DatasetReport { version: dwmtj::VERSION, config: cfg, train, test })?;
    Ok(())
}
