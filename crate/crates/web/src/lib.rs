//! Browser bindings for three interactive views: the neighbor stray field
//! versus track spacing, a single domain-wall race, and the energy model
//! versus hidden size and ADC resolution.

use dwmtj::device::{stray_field, TrackGeometry};
use dwmtj::energy::{energy_sweep, EnergyParams, EnergyTrace, PhaseCounts};
use dwmtj::wta::{compete_traced, fresh_states, WtaConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// `[s_0, Hz_0, s_1, Hz_1, ...]` with spacing in nm and field in mT.
pub fn stray_field_curve(w_nm: f64, t_nm: f64, m_s_tesla: f64, s_min: f64, s_max: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 || !(s_max > s_min) {
        return Err("need at least 2 points and s_max > s_min".into());
    }
    let mut out = Vec::with_capacity(2 * points);
    for i in 0..points {
        let s = s_min + (s_max - s_min) * i as f64 / (points - 1) as f64;
        let g = TrackGeometry { w_nm, t_nm, s_nm: s, m_s_tesla, ..TrackGeometry::default() };
        out.push(s);
        out.push(stray_field(&g).map_err(msg)? * 1e3);
    }
    Ok(out)
}

#[derive(Serialize)]
struct Race {
    m: usize,
    currents: Vec<f64>,
    /// `positions[step][neuron]`.
    positions: Vec<Vec<f64>>,
    /// `(neuron, step, rank)` in firing order.
    firings: Vec<(usize, u32, u32)>,
}

/// Races `m` neurons driven by random currents (a few strong, the rest weak).
/// `radius = 0` couples every pair. Returns JSON.
pub fn competition_trace(m: usize, gamma: f64, radius: usize, seed: u64) -> Result<String, String> {
    if !(2..=256).contains(&m) {
        return Err("m must lie in [2, 256]".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let currents: Vec<f64> = (0..m)
        .map(|_| if rng.random_bool(0.3) { rng.random_range(0.6..1.0) } else { rng.random_range(0.0..0.6) })
        .collect();
    let cfg = WtaConfig {
        gamma,
        neighbor_radius: (radius > 0).then_some(radius),
        ..WtaConfig::default()
    };
    cfg.validate().map_err(msg)?;
    let mut states = fresh_states(m);
    let (rec, positions) = compete_traced(&currents, &mut states, &cfg, &mut rng).map_err(msg)?;
    let race = Race {
        m,
        currents,
        positions,
        firings: rec.firings.iter().map(|f| (f.neuron, f.fire_step, f.rank)).collect(),
    };
    serde_json::to_string(&race).map_err(msg)
}

/// Event counts for one run of an `l`-input, `m`-hidden, `n`-class system.
/// `density` is the fraction of non-zero inputs and `fired` the fraction of
/// hidden neurons that fire per sample.
fn estimated_trace(m: usize, l: usize, n: usize, n_us: u64, n_s: u64, n_test: u64, density: f64, fired: f64) -> EnergyTrace {
    let active_in = (density * l as f64).round() as u64;
    let active_h = (fired * m as f64).round() as u64;
    let layer1 = active_in * m as u64;
    let layer2 = active_h * n as u64 * 2;
    EnergyTrace {
        unsupervised: PhaseCounts { synapse_reads: n_us * layer1, levels_moved: 0, conversions: 0, samples: n_us },
        supervised: PhaseCounts { synapse_reads: n_s * (layer1 + layer2), levels_moved: 0, conversions: n_s * n as u64, samples: n_s },
        evaluation: PhaseCounts { synapse_reads: n_test * (layer1 + layer2), levels_moved: 0, conversions: n_test * n as u64, samples: n_test },
    }
}

/// Energy table over hidden sizes and ADC resolutions for an MNIST-shaped
/// workload. Returns JSON rows `{M, bits, e_vmm, e_program, e_peripheral, e_total}`.
pub fn energy_table(m_values: &[u32], bits: &[u32], n_s: u32, fired: f64) -> Result<String, String> {
    if m_values.is_empty() || bits.is_empty() {
        return Err("need at least one M and one bit depth".into());
    }
    if !(0.0..=1.0).contains(&fired) {
        return Err("fired fraction must lie in [0, 1]".into());
    }
    let p = EnergyParams::default();
    p.validate().map_err(msg)?;
    if let Some(b) = bits.iter().find(|&&b| !(1..=16).contains(&b)) {
        return Err(format!("ADC bits {b} outside [1, 16]"));
    }
    let traces: Vec<(usize, EnergyTrace)> = m_values
        .iter()
        .map(|&m| (m as usize, estimated_trace(m as usize, 784, 10, 1000, n_s as u64, 10_000, 0.19, fired)))
        .collect();
    serde_json::to_string(&energy_sweep(&traces, bits, &p)).map_err(msg)
}

#[wasm_bindgen]
pub fn version() -> String {
    dwmtj::VERSION.to_string()
}

#[wasm_bindgen(js_name = strayFieldCurve)]
pub fn stray_field_curve_js(w_nm: f64, t_nm: f64, m_s_tesla: f64, s_min: f64, s_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    stray_field_curve(w_nm, t_nm, m_s_tesla, s_min, s_max, points).map_err(js)
}

#[wasm_bindgen(js_name = competitionTrace)]
pub fn competition_trace_js(m: usize, gamma: f64, radius: usize, seed: u32) -> Result<String, JsError> {
    competition_trace(m, gamma, radius, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = energyTable)]
pub fn energy_table_js(m_values: Vec<u32>, bits: Vec<u32>, n_s: u32, fired: f64) -> Result<String, JsError> {
    energy_table(&m_values, &bits, n_s, fired).map_err(js)
}
