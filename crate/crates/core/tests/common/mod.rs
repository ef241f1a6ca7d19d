#![allow(dead_code)]
//! Checks shared by the focused test files and the acceptance target.

use std::path::{Path, PathBuf};

use dwmtj::config::{ExperimentConfig, Task};
use dwmtj::datasets::ToyKind;
use dwmtj::device::{
    coupling_ratio, sample_device_population, stray_field, synapse_levels, SynapseSpec, TrackGeometry, VariationSpec,
};
use dwmtj::pipeline::{load_task, run_experiment};
use dwmtj::readout::{anabp_delta, one_hot, softmax, Policy, ReadoutLayer, ReadoutParams};
use dwmtj::wta::{apply_homeostasis, astdp_update, hidden_activation, ClusterLayer, Competition, WtaConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_root() -> PathBuf {
    std::env::var_os("DWMTJ_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn have_idx(dir: &str) -> bool {
    dwmtj::pipeline::idx_paths(&data_root(), dir).iter().all(|p| p.is_file())
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Worst relative error per device equation against the high-precision fixture.
pub struct OracleReport {
    pub stray_field: f64,
    pub synapse_levels: f64,
    pub coupling_ratio: f64,
    pub rows: usize,
}

impl OracleReport {
    pub fn worst(&self) -> f64 {
        self.stray_field.max(self.synapse_levels).max(self.coupling_ratio)
    }
}

pub fn device_oracles() -> OracleReport {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/equation_oracles.csv");
    let mut rdr = csv::Reader::from_path(&path).expect("oracle fixture");
    let mut rep = OracleReport { stray_field: 0.0, synapse_levels: 0.0, coupling_ratio: 0.0, rows: 0 };
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let num = |i: usize| rec[i].parse::<f64>().unwrap();
        let want = num(5);
        match &rec[0] {
            "stray_field" => {
                let g = TrackGeometry {
                    w_nm: num(1),
                    t_nm: num(2),
                    s_nm: num(3),
                    m_s_tesla: num(4),
                    ..TrackGeometry::default()
                };
                rep.stray_field = rep.stray_field.max(rel_err(stray_field(&g).unwrap(), want));
            }
            "synapse_levels" => {
                let n = synapse_levels(num(1), num(2)).unwrap() as f64;
                rep.synapse_levels = rep.synapse_levels.max(rel_err(n, want));
            }
            "coupling_ratio" => {
                rep.coupling_ratio = rep.coupling_ratio.max(rel_err(coupling_ratio(num(1), num(2)).unwrap(), want));
            }
            other => panic!("unknown oracle row {other}"),
        }
        rep.rows += 1;
    }
    rep
}

fn random_spec(rng: &mut ChaCha8Rng) -> SynapseSpec {
    let g_off = rng.random_range(1e-4..1e-3);
    let g_on = g_off * rng.random_range(1.5..5.0);
    SynapseSpec::from_bits(g_on, g_off, rng.random_range(2..=8)).unwrap()
}

fn random_h(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m)
        .map(|_| match rng.random_range(0..4) {
            0 => 0.0,
            1 => -rng.random_range(0.0..1.0),
            _ => rng.random_range(0.0..1.0),
        })
        .collect()
}

/// Sign-rule updates whose per-entry result differs from a direct evaluation
/// of `dG * sign(h_j (t_k - o_k))`.
pub fn binbp_mismatches(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..cases {
        let spec = random_spec(&mut rng);
        let (m, n) = (rng.random_range(1..=8), rng.random_range(2..=5));
        let top = spec.max_level();
        let pos: Vec<u16> = (0..m * n).map(|_| rng.random_range(0..=top)).collect();
        let neg: Vec<u16> = (0..m * n).map(|_| rng.random_range(0..=top)).collect();
        let mut layer = ReadoutLayer::from_levels(
            m,
            n,
            spec,
            Policy::BinBp,
            ReadoutParams::unit_gain(0.1),
            pos.clone(),
            neg.clone(),
        )
        .unwrap();
        let h = random_h(&mut rng, m);
        let t = one_hot(rng.random_range(0..n), n);
        let o = one_hot(rng.random_range(0..n), n);
        layer.binbp_update(&h, &t, &o).unwrap();
        for j in 0..m {
            for k in 0..n {
                let idx = j * n + k;
                let x = h[j] * (t[k] - o[k]);
                let s: i32 = if x > 0.0 { 1 } else if x < 0.0 { -1 } else { 0 };
                let (p0, q0) = (pos[idx] as i32, neg[idx] as i32);
                let diff0 = p0 - q0;
                let (p1, q1) = layer.pair_levels(j, k);
                let (p1, q1) = (p1 as i32, q1 as i32);
                // The grown device saturates only when the pair spans the full window.
                let want_diff = (diff0 + s).clamp(-(top as i32), top as i32);
                let ok = match s {
                    0 => (p1, q1) == (p0, q0),
                    _ => p1 - q1 == want_diff && p1 <= top as i32 && q1 <= top as i32,
                };
                if !ok {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// Worst absolute error of the cross-entropy delta against a per-entry loop.
pub fn ce_delta_error(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (m, n) = (rng.random_range(1..=8), rng.random_range(2..=5));
        let h = random_h(&mut rng, m);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let o = softmax(&y);
        let t = one_hot(rng.random_range(0..n), n);
        let eta = rng.random_range(0.01..1.0);
        let d = anabp_delta(&h, &t, &o, eta);
        for j in 0..m {
            for k in 0..n {
                let want = -eta * h[j] * (o[k] - t[k]);
                worst = worst.max((d[j * n + k] - want).abs());
            }
        }
    }
    worst
}

fn cross_entropy(w: &[f64], h: &[f64], label: usize, n: usize) -> f64 {
    let y: Vec<f64> = (0..n).map(|k| h.iter().enumerate().map(|(j, hj)| w[j * n + k] * hj).sum()).collect();
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + y.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - y[label]
}

/// Worst relative error between the unquantized delta (at eta = 1) and the
/// central-difference gradient of the cross-entropy loss.
pub fn gradient_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let eps = 1e-6;
    for _ in 0..instances {
        let (m, n) = (rng.random_range(1..=8), rng.random_range(2..=5));
        let w: Vec<f64> = (0..m * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let label = rng.random_range(0..n);
        let y: Vec<f64> = (0..n).map(|k| (0..m).map(|j| w[j * n + k] * h[j]).sum()).collect();
        let delta = anabp_delta(&h, &one_hot(label, n), &softmax(&y), 1.0);
        for idx in 0..m * n {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[idx] += eps;
            wm[idx] -= eps;
            let fd = (cross_entropy(&wp, &h, label, n) - cross_entropy(&wm, &h, label, n)) / (2.0 * eps);
            let analytic = -delta[idx];
            let scale = fd.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max((analytic - fd).abs() / scale);
        }
    }
    worst
}

/// Mean cross-entropy per epoch of Ana-BP training on a separable toy set
/// with 16-bit readout devices.
pub fn anabp_epoch_losses(epochs: usize, seed: u64) -> Vec<f64> {
    let kind = ToyKind::TwoGaussians { per_class: 100, dim: 6, separation: 8.0 };
    let ds = dwmtj::datasets::make_toy(&kind, seed).unwrap();
    let spec = SynapseSpec::from_bits(2e-3, 1e-3, 16).unwrap();
    let params = ReadoutParams { gain: 1e4, eta: 0.2, eta_decay: Some(400.0), shadow_weights: false };
    let mut layer = ReadoutLayer::new(ds.l, 2, spec, Policy::AnaBp, params).unwrap();
    let rows: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.row(i).iter().map(|&v| v as f64).collect()).collect();
    let loss = |layer: &ReadoutLayer| {
        rows.iter()
            .zip(&ds.labels)
            .map(|(h, &c)| -softmax(&layer.forward(h).unwrap())[c].ln())
            .sum::<f64>()
            / rows.len() as f64
    };
    let mut out = vec![loss(&layer)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for &i in &order {
            layer.train_step(&rows[i], ds.labels[i]).unwrap();
        }
        out.push(loss(&layer));
    }
    out
}

/// First violated invariant over a randomized clustering + readout run, if any.
pub fn fuzz_invariants(samples: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, l, n) = (24, 16, 4);
    let spec = SynapseSpec::from_bits(1.5e-3, 0.5e-3, 5).unwrap();
    let var = VariationSpec { sigma_tmr: 0.15, p_pin: 0.0, seed };
    let devices = sample_device_population(m * l, &spec, &var).map_err(|e| e.to_string())?;
    let mut layer = ClusterLayer::new_random(m, l, spec, Some(devices.clone()), &mut rng).map_err(|e| e.to_string())?;
    let rspec = SynapseSpec::from_bits(1.5e-3, 0.5e-3, 4).unwrap();
    let gain = 2.0 / (rspec.g_on - rspec.g_off);
    let mut readout = ReadoutLayer::new(
        m,
        n,
        rspec,
        Policy::AnaBp,
        ReadoutParams { gain, eta: 0.3, eta_decay: None, shadow_weights: false },
    )
    .map_err(|e| e.to_string())?;
    let mut states = dwmtj::wta::fresh_states(m);
    let mut comp = Competition::new();
    let mut last_fired: Vec<Option<usize>> = vec![None; m];
    let cfg = WtaConfig { t_homeo: 3, p_pin: 0.05, neighbor_radius: Some(5), ..WtaConfig::default() };
    for s in 0..samples {
        let cfg = WtaConfig { gamma: rng.random_range(0.0..=1.0), ..cfg.clone() };
        let x: Vec<f32> = (0..l).map(|_| if rng.random_bool(0.6) { rng.random_range(0.0..=1.0) } else { 0.0 }).collect();
        let current = layer.infer(&x).map_err(|e| e.to_string())?;
        let rec = comp.run(&current, &mut states, &cfg, &mut rng).map_err(|e| e.to_string())?;
        for f in &rec.firings {
            if let Some(prev) = last_fired[f.neuron] {
                if s - prev <= cfg.t_homeo as usize {
                    return Err(format!("neuron {} fired at samples {prev} and {s} inside its refractory window", f.neuron));
                }
            }
            last_fired[f.neuron] = Some(s);
            if f.fire_step >= cfg.t_steps {
                return Err(format!("fire step {} beyond the race", f.fire_step));
            }
        }
        let ranks: Vec<u32> = rec.firings.iter().map(|f| f.rank).collect();
        if ranks != (1..=ranks.len() as u32).collect::<Vec<_>>() {
            return Err(format!("ranks {ranks:?} are not 1..k"));
        }
        astdp_update(&mut layer, &x, &rec, &cfg).map_err(|e| e.to_string())?;
        apply_homeostasis(&mut states, &rec, &cfg);
        if states.iter().any(|st| st.refractory_remaining > cfg.t_homeo) {
            return Err("refractory counter above t_homeo".into());
        }
        for j in 0..m {
            for i in 0..l {
                let dev = layer.device(j, i);
                let k = layer.level(j, i);
                let g = layer.weight(j, i);
                if k > spec.max_level() || g != dev.conductance(k, spec.n_levels) {
                    return Err(format!("synapse ({j}, {i}) off its level grid"));
                }
                if g < dev.g_off - 1e-18 || g > dev.g_on + 1e-18 {
                    return Err(format!("synapse ({j}, {i}) = {g} outside its device window"));
                }
            }
        }

        let h = hidden_activation(&rec, &cfg, m);
        if h.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("hidden activation outside [0, 1]".into());
        }
        let y = readout.forward(&h).map_err(|e| e.to_string())?;
        let o = softmax(&y);
        let sum: f64 = o.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("softmax sums to {sum}"));
        }
        let shift = rng.random_range(-50.0..50.0);
        let o2 = softmax(&y.iter().map(|v| v + shift).collect::<Vec<_>>());
        if o.iter().zip(&o2).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err("softmax not shift invariant".into());
        }
        readout.train_step(&h, rng.random_range(0..n)).map_err(|e| e.to_string())?;
        if !readout.is_consistent() {
            return Err("readout device off its level grid".into());
        }
        let w_max = gain * (rspec.g_on - rspec.g_off);
        for j in 0..m {
            for k in 0..n {
                let w = readout.weight(j, k);
                if w.abs() > w_max * (1.0 + 1e-12) {
                    return Err(format!("readout weight {w} beyond {w_max}"));
                }
            }
        }
    }
    Ok(())
}

/// Small toy experiment used for repeatability checks.
pub fn toy_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Task::Toy, 12);
    cfg.data.toy = Some(ToyKind::Blobs { classes: 3, per_class: 60, dim: 10, sigma: 0.08 });
    cfg.n_us = 150;
    cfg.n_s = Some(300);
    cfg.seed = seed;
    cfg.wta.p_pin = 0.05;
    cfg.variation.sigma_tmr = 0.1;
    cfg.resolved().unwrap()
}

/// Runs the same config twice and reports whether every result field matches.
pub fn repeat_is_identical(cfg: &ExperimentConfig) -> Result<bool, String> {
    let data = load_task(cfg).map_err(|e| e.to_string())?;
    let a = run_experiment(cfg, &data).map_err(|e| e.to_string())?;
    let b = run_experiment(cfg, &data).map_err(|e| e.to_string())?;
    Ok(a.test_accuracy.to_bits() == b.test_accuracy.to_bits()
        && a.per_class_accuracy == b.per_class_accuracy
        && a.cluster_checksum == b.cluster_checksum
        && a.readout_checksum == b.readout_checksum
        && a.trace == b.trace
        && a.energy == b.energy)
}
