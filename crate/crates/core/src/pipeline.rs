//! End-to-end runs: unsupervised clustering, frozen-layer readout training,
//! evaluation, and parameter sweeps.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FirstLayerMode, Task};
use crate::datasets::{self, CsvOptions, Dataset};
use crate::device::{sample_device_population, VariationSpec};
use crate::energy::{account, EnergyReport, EnergyTrace, PhaseCounts};
use crate::error::{Error, Result};
use crate::readout::{Policy, ReadoutLayer};
use crate::wta::{apply_homeostasis, fill_hidden_activation, ClusterLayer, Competition, NeuronTrackState, WtaConfig};

/// Independent random streams carved out of one seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Devices = 1,
    Init = 2,
    UnsupervisedOrder = 3,
    UnsupervisedPin = 4,
    SupervisedOrder = 5,
    SupervisedPin = 6,
    EvaluationPin = 7,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Training and test splits for one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Standard file names under the data root.
pub fn idx_paths(root: &Path, dir: &str) -> [PathBuf; 4] {
    let d = root.join(dir);
    [
        d.join("train-images-idx3-ubyte"),
        d.join("train-labels-idx1-ubyte"),
        d.join("t10k-images-idx3-ubyte"),
        d.join("t10k-labels-idx1-ubyte"),
    ]
}

pub fn har_paths(root: &Path) -> [PathBuf; 2] {
    [root.join("har").join("train.csv"), root.join("har").join("test.csv")]
}

/// Files `load_task` will read for this config; empty for synthetic tasks.
pub fn expected_data_files(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    let root = cfg.data.resolved_root();
    let d = &cfg.data;
    match cfg.task {
        Task::Mnist => idx_paths(&root, "mnist").to_vec(),
        Task::Fmnist => idx_paths(&root, "fmnist").to_vec(),
        Task::Har => har_paths(&root).to_vec(),
        Task::Custom => [&d.train_images, &d.train_labels, &d.test_images, &d.test_labels, &d.train_csv, &d.test_csv]
            .into_iter()
            .flatten()
            .cloned()
            .collect(),
        Task::Toy => Vec::new(),
    }
}

/// Expected files that are not present.
pub fn missing_data_files(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    expected_data_files(cfg).into_iter().filter(|p| !p.is_file()).collect()
}

/// Loads the splits named by a resolved config.
pub fn load_task(cfg: &ExperimentConfig) -> Result<TaskData> {
    let root = cfg.data.resolved_root();
    let d = &cfg.data;
    let csv_opts = d.csv.clone().unwrap_or_default();
    let (train, test) = match cfg.task {
        Task::Mnist | Task::Fmnist => {
            let dir = if cfg.task == Task::Mnist { "mnist" } else { "fmnist" };
            let [a, b, c, e] = idx_paths(&root, dir);
            (datasets::load_idx(&a, &b)?, datasets::load_idx(&c, &e)?)
        }
        Task::Har => {
            let [a, b] = har_paths(&root);
            csv_pair(&a, Some(&b), &csv_opts)?
        }
        Task::Custom => match (&d.train_images, &d.train_labels, &d.train_csv) {
            (Some(ti), Some(tl), _) => {
                let train = datasets::load_idx(ti, tl)?;
                let test = match (&d.test_images, &d.test_labels) {
                    (Some(a), Some(b)) => datasets::load_idx(a, b)?,
                    _ => train.clone(),
                };
                (train, test)
            }
            (_, _, Some(tc)) => csv_pair(tc, d.test_csv.as_deref(), &csv_opts)?,
            _ => return Err(Error::Precondition("custom task names no training files".into())),
        },
        Task::Toy => {
            let kind = d.toy.as_ref().ok_or_else(|| Error::Precondition("toy task without data.toy".into()))?;
            let ds = datasets::make_toy(kind, cfg.seed)?;
            (ds.clone(), ds)
        }
    };
    check_split(cfg, &train, &test)?;
    Ok(TaskData { train, test })
}

fn csv_pair(train: &Path, test: Option<&Path>, opts: &CsvOptions) -> Result<(Dataset, Dataset)> {
    let (train, test) = datasets::load_csv_split(train, test, opts)?;
    let test = test.unwrap_or_else(|| train.clone());
    Ok((train, test))
}

fn check_split(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<()> {
    let n = cfg.n_classes();
    if train.l != test.l {
        return Err(Error::DimensionMismatch {
            expected: train.l,
            got: test.l,
        });
    }
    for ds in [train, test] {
        if let Some(&bad) = ds.labels.iter().find(|&&y| y >= n) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                n_classes: n,
            });
        }
    }
    Ok(())
}

/// `count` indices drawn as back-to-back uniform shuffles of `0..len`.
pub fn sample_order(len: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut perm: Vec<usize> = (0..len).collect();
    while out.len() < count && len > 0 {
        perm.shuffle(rng);
        let take = (count - out.len()).min(len);
        out.extend_from_slice(&perm[..take]);
    }
    out
}

/// Clustering layer with device variation and random initial levels.
pub fn build_cluster_layer(cfg: &ExperimentConfig, l: usize) -> Result<ClusterLayer> {
    let spec = cfg.cluster_synapse.spec()?;
    let devices = if cfg.variation.sigma_tmr > 0.0 {
        let var = VariationSpec {
            sigma_tmr: cfg.variation.sigma_tmr,
            p_pin: 0.0,
            seed: cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ Stream::Devices as u64,
        };
        Some(sample_device_population(cfg.m * l, &spec, &var)?)
    } else {
        None
    };
    ClusterLayer::new_random(cfg.m, l, spec, devices, &mut stream_rng(cfg.seed, Stream::Init))
}

pub fn build_readout(cfg: &ExperimentConfig) -> Result<ReadoutLayer> {
    ReadoutLayer::new(
        cfg.m,
        cfg.n_classes(),
        cfg.readout.synapse.spec()?,
        cfg.policy,
        cfg.readout.params(),
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedStats {
    pub samples: usize,
    pub fire_counts: Vec<u64>,
    pub mean_fired: f64,
}

/// Presents `order` to the layer with homeostasis carried across samples and
/// STDP applied after every competition.
pub fn run_unsupervised(
    layer: &mut ClusterLayer,
    data: &Dataset,
    order: &[usize],
    wta: &WtaConfig,
    rng: &mut ChaCha8Rng,
    counts: &mut PhaseCounts,
) -> Result<UnsupervisedStats> {
    let m = layer.m();
    let mut comp = Competition::new();
    let mut states = vec![NeuronTrackState::default(); m];
    let mut i_post = vec![0.0; m];
    let mut fire_counts = vec![0u64; m];
    let mut fired_total = 0u64;
    for &idx in order {
        let x = data.row(idx);
        let active = layer.infer_into(x, &mut i_post)?;
        let rec = comp.run(&i_post, &mut states, wta, rng)?;
        for n in rec.neurons() {
            fire_counts[n] += 1;
        }
        fired_total += rec.len() as u64;
        counts.levels_moved += crate::wta::astdp_update(layer, x, &rec, wta)?;
        apply_homeostasis(&mut states, &rec, wta);
        counts.synapse_reads += (active * m) as u64;
        counts.samples += 1;
    }
    Ok(UnsupervisedStats {
        samples: order.len(),
        fire_counts,
        mean_fired: if order.is_empty() { 0.0 } else { fired_total as f64 / order.len() as f64 },
    })
}

/// Reusable per-sample state for forward passes through a frozen layer.
struct Forward {
    comp: Competition,
    states: Vec<NeuronTrackState>,
    i_post: Vec<f64>,
    h: Vec<f64>,
}

impl Forward {
    fn new(m: usize) -> Self {
        Self {
            comp: Competition::new(),
            states: vec![NeuronTrackState::default(); m],
            i_post: vec![0.0; m],
            h: vec![0.0; m],
        }
    }

    /// Stateless race (no refractoriness); returns (active inputs, fired neurons).
    fn hidden(
        &mut self,
        layer: &ClusterLayer,
        x: &[f32],
        wta: &WtaConfig,
        rng: &mut ChaCha8Rng,
        fire_counts: &mut [u64],
    ) -> Result<(usize, usize)> {
        let active = layer.infer_into(x, &mut self.i_post)?;
        let rec = self.comp.run(&self.i_post, &mut self.states, wta, rng)?;
        for n in rec.neurons() {
            fire_counts[n] += 1;
        }
        fill_hidden_activation(&rec, wta, &mut self.h);
        Ok((active, rec.len()))
    }
}

fn readout_reads(h: &[f64], n: usize) -> u64 {
    // Both devices of every pair on a driven row conduct.
    (h.iter().filter(|&&v| v != 0.0).count() * n * 2) as u64
}

/// Trains the readout on `order` through the frozen clustering layer.
pub fn run_supervised(
    layer: &ClusterLayer,
    readout: &mut ReadoutLayer,
    data: &Dataset,
    order: &[usize],
    wta: &WtaConfig,
    rng: &mut ChaCha8Rng,
    counts: &mut PhaseCounts,
) -> Result<()> {
    let m = layer.m();
    let n = readout.n();
    let mut fwd = Forward::new(m);
    let mut sink = vec![0u64; m];
    for &idx in order {
        let (active, _) = fwd.hidden(layer, data.row(idx), wta, rng, &mut sink)?;
        let (_, moved) = readout.train_step(&fwd.h, data.labels[idx])?;
        counts.synapse_reads += (active * m) as u64 + readout_reads(&fwd.h, n);
        counts.levels_moved += moved;
        counts.conversions += n as u64;
        counts.samples += 1;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub samples: usize,
    pub mean_fired: f64,
    pub dead_neurons: usize,
}

/// Scores `data` without touching either layer.
pub fn evaluate(
    layer: &ClusterLayer,
    readout: &ReadoutLayer,
    data: &Dataset,
    wta: &WtaConfig,
    rng: &mut ChaCha8Rng,
    counts: &mut PhaseCounts,
) -> Result<Evaluation> {
    let m = layer.m();
    let n = readout.n();
    let mut fwd = Forward::new(m);
    let mut fire_counts = vec![0u64; m];
    let mut correct = vec![0u64; n];
    let mut seen = vec![0u64; n];
    let mut fired_total = 0u64;
    for idx in 0..data.len() {
        let (active, fired) = fwd.hidden(layer, data.row(idx), wta, rng, &mut fire_counts)?;
        fired_total += fired as u64;
        let pred = readout.predict(&fwd.h)?;
        let y = data.labels[idx];
        if y >= n {
            return Err(Error::LabelOutOfRange { label: y, n_classes: n });
        }
        seen[y] += 1;
        correct[y] += (pred == y) as u64;
        counts.synapse_reads += (active * m) as u64 + readout_reads(&fwd.h, n);
        counts.conversions += n as u64;
        counts.samples += 1;
    }
    let total = data.len().max(1) as f64;
    Ok(Evaluation {
        accuracy: correct.iter().sum::<u64>() as f64 / total,
        per_class_accuracy: correct
            .iter()
            .zip(&seen)
            .map(|(&c, &s)| if s == 0 { 0.0 } else { c as f64 / s as f64 })
            .collect(),
        samples: data.len(),
        mean_fired: fired_total as f64 / total,
        dead_neurons: fire_counts.iter().filter(|&&c| c == 0).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub version: String,
    pub config: ExperimentConfig,
    pub test_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Neurons that never won during the unsupervised phase; `None` when it was skipped.
    pub dead_neurons_unsupervised: Option<usize>,
    pub mean_fired_unsupervised: f64,
    pub dead_neurons_eval: usize,
    pub mean_fired_eval: f64,
    pub energy: EnergyReport,
    pub trace: EnergyTrace,
    /// FNV-1a of the clustering levels after the unsupervised phase.
    pub cluster_checksum: String,
    pub readout_checksum: String,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Full run: unsupervised phase (unless frozen), supervised phase, evaluation.
pub fn run_experiment(cfg: &ExperimentConfig, data: &TaskData) -> Result<RunResult> {
    let start = Instant::now();
    let cfg = cfg.clone().resolved()?;
    check_split(&cfg, &data.train, &data.test)?;
    if data.train.is_empty() {
        return Err(Error::Precondition("training split is empty".into()));
    }
    let l = data.train.l;
    let mut trace = EnergyTrace::default();

    let mut layer = build_cluster_layer(&cfg, l)?;
    let (dead_us, mean_us) = match cfg.first_layer_mode {
        FirstLayerMode::Stdp => {
            let order = sample_order(data.train.len(), cfg.n_us, &mut stream_rng(cfg.seed, Stream::UnsupervisedOrder));
            let stats = run_unsupervised(
                &mut layer,
                &data.train,
                &order,
                &cfg.wta,
                &mut stream_rng(cfg.seed, Stream::UnsupervisedPin),
                &mut trace.unsupervised,
            )?;
            let dead = (cfg.n_us > 0).then(|| stats.fire_counts.iter().filter(|&&c| c == 0).count());
            (dead, stats.mean_fired)
        }
        FirstLayerMode::RandomFrozen => (None, 0.0),
    };
    let frozen = layer.checksum();

    let mut readout = build_readout(&cfg)?;
    let order = sample_order(
        data.train.len(),
        cfg.labeled_samples(),
        &mut stream_rng(cfg.seed, Stream::SupervisedOrder),
    );
    run_supervised(
        &layer,
        &mut readout,
        &data.train,
        &order,
        &cfg.wta,
        &mut stream_rng(cfg.seed, Stream::SupervisedPin),
        &mut trace.supervised,
    )?;

    let test = match cfg.n_test {
        Some(k) if k < data.test.len() => data.test.truncated(k),
        _ => data.test.clone(),
    };
    let eval_wta = WtaConfig {
        p_pin: if cfg.evaluation.pin_during_eval { cfg.wta.p_pin } else { 0.0 },
        ..cfg.wta.clone()
    };
    let ev = evaluate(
        &layer,
        &readout,
        &test,
        &eval_wta,
        &mut stream_rng(cfg.seed, Stream::EvaluationPin),
        &mut trace.evaluation,
    )?;
    if layer.checksum() != frozen {
        return Err(Error::Precondition("clustering layer changed after the unsupervised phase".into()));
    }

    Ok(RunResult {
        version: crate::VERSION.to_string(),
        test_accuracy: ev.accuracy,
        per_class_accuracy: ev.per_class_accuracy,
        n_train: data.train.len(),
        n_test: test.len(),
        dead_neurons_unsupervised: dead_us,
        mean_fired_unsupervised: mean_us,
        dead_neurons_eval: ev.dead_neurons,
        mean_fired_eval: ev.mean_fired,
        energy: account(&trace, &cfg.energy),
        trace,
        cluster_checksum: format!("{frozen:016x}"),
        readout_checksum: format!("{:016x}", readout.checksum()),
        config: cfg,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Config fields a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma,
    TraverseFraction,
    M,
    NUs,
    NS,
    THomeo,
    RankExponent,
    PPin,
    SigmaTmr,
    BitsLayer1,
    BitsLayer2,
    Eta,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 12] = [
        SweepAxis::Gamma,
        SweepAxis::TraverseFraction,
        SweepAxis::M,
        SweepAxis::NUs,
        SweepAxis::NS,
        SweepAxis::THomeo,
        SweepAxis::RankExponent,
        SweepAxis::PPin,
        SweepAxis::SigmaTmr,
        SweepAxis::BitsLayer1,
        SweepAxis::BitsLayer2,
        SweepAxis::Eta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::TraverseFraction => "traverse_fraction",
            SweepAxis::M => "m",
            SweepAxis::NUs => "n_us",
            SweepAxis::NS => "n_s",
            SweepAxis::THomeo => "t_homeo",
            SweepAxis::RankExponent => "rank_exponent",
            SweepAxis::PPin => "p_pin",
            SweepAxis::SigmaTmr => "sigma_tmr",
            SweepAxis::BitsLayer1 => "bits_layer1",
            SweepAxis::BitsLayer2 => "bits_layer2",
            SweepAxis::Eta => "eta",
        }
    }

    fn is_integer(self) -> bool {
        matches!(
            self,
            SweepAxis::M | SweepAxis::NUs | SweepAxis::NS | SweepAxis::THomeo | SweepAxis::BitsLayer1 | SweepAxis::BitsLayer2
        )
    }

    /// Writes `value` into `cfg`.
    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        if self.is_integer() && (value.fract() != 0.0 || value < 0.0) {
            return Err(Error::Precondition(format!(
                "axis {} takes non-negative integers, got {value}",
                self.name()
            )));
        }
        let u = value as usize;
        match self {
            SweepAxis::Gamma => cfg.wta.gamma = value,
            SweepAxis::TraverseFraction => cfg.wta.traverse_fraction = value,
            SweepAxis::M => cfg.m = u,
            SweepAxis::NUs => cfg.n_us = u,
            SweepAxis::NS => cfg.n_s = Some(u),
            SweepAxis::THomeo => cfg.wta.t_homeo = u as u32,
            SweepAxis::RankExponent => cfg.wta.rank_exponent = value,
            SweepAxis::PPin => cfg.wta.p_pin = value,
            SweepAxis::SigmaTmr => cfg.variation.sigma_tmr = value,
            SweepAxis::BitsLayer1 => cfg.cluster_synapse.bits = u as u32,
            SweepAxis::BitsLayer2 => cfg.readout.synapse.bits = u as u32,
            SweepAxis::Eta => cfg.readout.eta = value,
        }
        Ok(())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAxis(s.to_string()))
    }
}

/// One run of a sweep, flattened for CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub version: String,
    pub axis: String,
    pub value: f64,
    pub repeat: usize,
    pub seed: u64,
    pub task: Task,
    pub m: usize,
    pub n_us: usize,
    pub n_s: usize,
    pub gamma: f64,
    pub t_homeo: u32,
    pub rank_exponent: f64,
    pub p_pin: f64,
    pub sigma_tmr: f64,
    pub bits_layer1: u32,
    pub bits_layer2: u32,
    pub eta: f64,
    pub policy: Policy,
    pub first_layer_mode: FirstLayerMode,
    pub test_accuracy: f64,
    pub mean_fired_eval: f64,
    pub dead_neurons_eval: usize,
    pub e_vmm: f64,
    pub e_program: f64,
    pub e_peripheral: f64,
    pub e_total: f64,
}

impl SweepRow {
    pub fn new(axis: SweepAxis, value: f64, repeat: usize, r: &RunResult) -> Self {
        let c = &r.config;
        Self {
            version: r.version.clone(),
            axis: axis.name().to_string(),
            value,
            repeat,
            seed: c.seed,
            task: c.task,
            m: c.m,
            n_us: c.n_us,
            n_s: c.labeled_samples(),
            gamma: c.wta.gamma,
            t_homeo: c.wta.t_homeo,
            rank_exponent: c.wta.rank_exponent,
            p_pin: c.wta.p_pin,
            sigma_tmr: c.variation.sigma_tmr,
            bits_layer1: c.cluster_synapse.bits,
            bits_layer2: c.readout.synapse.bits,
            eta: c.readout.eta,
            policy: c.policy,
            first_layer_mode: c.first_layer_mode,
            test_accuracy: r.test_accuracy,
            mean_fired_eval: r.mean_fired_eval,
            dead_neurons_eval: r.dead_neurons_eval,
            e_vmm: r.energy.e_vmm,
            e_program: r.energy.e_program,
            e_peripheral: r.energy.e_peripheral,
            e_total: r.energy.e_total,
        }
    }
}

/// Config for repeat `r` of a sweep point. Seeds depend only on the repeat,
/// so every value of the axis sees the same devices and sample orders.
pub fn sweep_point(template: &ExperimentConfig, axis: SweepAxis, value: f64, repeat: usize) -> Result<ExperimentConfig> {
    let mut cfg = template.clone();
    cfg.sweep = None;
    axis.apply(&mut cfg, value)?;
    cfg.seed = template.seed.wrapping_add(repeat as u64);
    Ok(cfg.resolved()?)
}

/// Runs every `(value, repeat)` pair; results come back in value-major order.
pub fn sweep(
    template: &ExperimentConfig,
    axis: &str,
    values: &[f64],
    repeats: usize,
    data: &TaskData,
    jobs: usize,
) -> Result<Vec<(SweepRow, RunResult)>> {
    let axis: SweepAxis = axis.parse()?;
    if repeats == 0 || values.is_empty() {
        return Err(Error::Precondition("sweep needs at least one value and one repeat".into()));
    }
    let points: Vec<(f64, usize, ExperimentConfig)> = values
        .iter()
        .flat_map(|&v| (0..repeats).map(move |r| (v, r)))
        .map(|(v, r)| sweep_point(template, axis, v, r).map(|c| (v, r, c)))
        .collect::<Result<_>>()?;
    let run = |(v, r, cfg): &(f64, usize, ExperimentConfig)| -> Result<(SweepRow, RunResult)> {
        let res = run_experiment(cfg, data)?;
        Ok((SweepRow::new(axis, *v, *r, &res), res))
    };
    run_points(&points, jobs, run)
}

#[cfg(feature = "parallel")]
fn run_points<T: Sync, U: Send>(points: &[T], jobs: usize, f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    use rayon::prelude::*;
    if jobs <= 1 {
        return points.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    pool.install(|| points.par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_points<T: Sync, U: Send>(points: &[T], _jobs: usize, f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    points.iter().map(f).collect()
}

/// Mean and sample standard deviation per axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub value: f64,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_e_total: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let acc: Vec<f64> = rows.iter().filter(|r| r.value == v).map(|r| r.test_accuracy).collect();
            let e: Vec<f64> = rows.iter().filter(|r| r.value == v).map(|r| r.e_total).collect();
            let (mean, std) = mean_std(&acc);
            SweepSummary {
                value: v,
                runs: acc.len(),
                mean_accuracy: mean,
                std_accuracy: std,
                mean_e_total: mean_std(&e).0,
            }
        })
        .collect()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Serializes rows as CSV with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Precondition(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Precondition(format!("csv: {e}")))
}

/// Writes via a sibling temp file and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
