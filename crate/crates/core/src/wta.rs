//! Unsupervised clustering layer: crossbar inference, domain-wall race between
//! coupled neuron tracks, approximate STDP and homeostatic refractoriness.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{fill_pinning, DeviceBounds, SynapseSpec};
use crate::error::{Error, Result};

/// Positions within this distance of the track end count as arrived.
const ARRIVAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WtaConfig {
    /// Coupling ratio between neighboring tracks, 0 = independent, 1 = field dominated.
    pub gamma: f64,
    /// Discrete timesteps simulated per presented sample.
    pub t_steps: u32,
    /// Fraction of `t_steps` the strongest uninhibited wall needs to cross its track.
    pub traverse_fraction: f64,
    /// Samples a neuron stays refractory after firing.
    pub t_homeo: u32,
    /// Exponent `p` of the rank scaling `rank^-p` applied to plasticity.
    pub rank_exponent: f64,
    /// Normalized input level at or above which an input counts as coincident.
    pub input_threshold: f64,
    /// Probability that a neuron's wall is pinned for a whole competition.
    pub p_pin: f64,
    /// Lateral coupling reach along the track chain; `None` couples every pair.
    pub neighbor_radius: Option<usize>,
    /// Pass 0/1 spikes to the readout instead of graded firing times.
    pub binary_hidden: bool,
}

impl Default for WtaConfig {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            t_steps: 64,
            traverse_fraction: 0.5,
            t_homeo: 2,
            rank_exponent: 2.0,
            input_threshold: 0.5,
            p_pin: 0.0,
            neighbor_radius: None,
            binary_hidden: false,
        }
    }
}

impl WtaConfig {
    /// Steps the largest-current uninhibited wall takes to reach the end.
    pub fn traverse_steps(&self) -> u32 {
        ((self.t_steps as f64 * self.traverse_fraction).round() as u32).clamp(1, self.t_steps.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} outside [0, 1]", self.gamma));
        }
        if self.t_steps == 0 {
            return bad("t_steps must be >= 1".into());
        }
        if !(self.traverse_fraction > 0.0 && self.traverse_fraction <= 1.0) {
            return bad(format!("traverse_fraction = {} outside (0, 1]", self.traverse_fraction));
        }
        if !(self.rank_exponent.is_finite() && self.rank_exponent >= 0.0) {
            return bad(format!("rank_exponent = {} must be >= 0", self.rank_exponent));
        }
        if !(0.0..=1.0).contains(&self.p_pin) {
            return bad(format!("p_pin = {} outside [0, 1]", self.p_pin));
        }
        if !self.input_threshold.is_finite() {
            return bad("input_threshold must be finite".into());
        }
        Ok(())
    }
}

/// `M x L` crossbar of clustering synapses.
#[derive(Debug, Clone)]
pub struct ClusterLayer {
    m: usize,
    l: usize,
    spec: SynapseSpec,
    /// Per-device windows, row-major `[j * l + i]`; `None` means all nominal.
    devices: Option<Vec<DeviceBounds>>,
    levels: Vec<u16>,
    /// Conductances transposed to `[i * m + j]` so a sparse input touches
    /// contiguous memory.
    cols: Vec<f64>,
}

impl ClusterLayer {
    /// Layer with levels drawn uniformly from the middle half of the window.
    pub fn new_random<R: Rng + ?Sized>(
        m: usize,
        l: usize,
        spec: SynapseSpec,
        devices: Option<Vec<DeviceBounds>>,
        rng: &mut R,
    ) -> Result<Self> {
        let top = spec.max_level() as u32;
        let (mut lo, mut hi) = ((top as f64 * 0.25).ceil() as u32, (top as f64 * 0.75).floor() as u32);
        if lo > hi {
            (lo, hi) = (0, top);
        }
        let levels = (0..m * l).map(|_| rng.random_range(lo..=hi) as u16).collect();
        Self::from_levels(m, l, spec, devices, levels)
    }

    pub fn from_levels(
        m: usize,
        l: usize,
        spec: SynapseSpec,
        devices: Option<Vec<DeviceBounds>>,
        levels: Vec<u16>,
    ) -> Result<Self> {
        if levels.len() != m * l {
            return Err(Error::DimensionMismatch {
                expected: m * l,
                got: levels.len(),
            });
        }
        if let Some(d) = &devices {
            if d.len() != m * l {
                return Err(Error::DimensionMismatch {
                    expected: m * l,
                    got: d.len(),
                });
            }
        }
        if levels.iter().any(|&k| k > spec.max_level()) {
            return Err(Error::Domain("level index above n_levels - 1".into()));
        }
        let mut layer = Self {
            m,
            l,
            spec,
            devices,
            levels,
            cols: vec![0.0; m * l],
        };
        for j in 0..m {
            for i in 0..l {
                layer.cols[i * m + j] = layer.weight(j, i);
            }
        }
        Ok(layer)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn spec(&self) -> &SynapseSpec {
        &self.spec
    }

    #[inline]
    pub fn device(&self, j: usize, i: usize) -> DeviceBounds {
        match &self.devices {
            Some(d) => d[j * self.l + i],
            None => self.spec.nominal_device(),
        }
    }

    #[inline]
    pub fn level(&self, j: usize, i: usize) -> u16 {
        self.levels[j * self.l + i]
    }

    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.device(j, i).conductance(self.level(j, i), self.spec.n_levels)
    }

    pub fn levels(&self) -> &[u16] {
        &self.levels
    }

    /// FNV-1a over the level matrix; equal checksums mean equal weights.
    pub fn checksum(&self) -> u64 {
        crate::fnv1a(self.levels.iter().flat_map(|k| k.to_le_bytes()))
    }

    /// Every weight sits exactly on a level of its own device.
    pub fn is_consistent(&self) -> bool {
        (0..self.m).all(|j| {
            (0..self.l).all(|i| {
                let d = self.device(j, i);
                let g = self.cols[i * self.m + j];
                g >= d.g_off && g <= d.g_on && d.level_of(g, self.spec.n_levels) == self.level(j, i)
            })
        })
    }

    /// Post-synaptic currents `I[j] = sum_i W[j, i] x[i]`.
    pub fn infer(&self, x: &[f32]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m];
        self.infer_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes the currents into `out` and returns the number of non-zero
    /// inputs, i.e. the rows that actually conduct.
    pub fn infer_into(&self, x: &[f32], out: &mut [f64]) -> Result<usize> {
        if x.len() != self.l {
            return Err(Error::DimensionMismatch {
                expected: self.l,
                got: x.len(),
            });
        }
        if out.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: out.len(),
            });
        }
        out.fill(0.0);
        let mut active = 0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            active += 1;
            let xi = xi as f64;
            let col = &self.cols[i * self.m..(i + 1) * self.m];
            for (o, &g) in out.iter_mut().zip(col) {
                *o += g * xi;
            }
        }
        Ok(active)
    }

    fn set_level(&mut self, j: usize, i: usize, k: u16) {
        self.levels[j * self.l + i] = k;
        self.cols[i * self.m + j] = self.device(j, i).conductance(k, self.spec.n_levels);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeuronTrackState {
    /// Normalized wall position along the neuron track.
    pub position: f64,
    pub refractory_remaining: u32,
    pub fired: bool,
    pub fire_step: Option<u32>,
}

impl NeuronTrackState {
    fn reset(&mut self) {
        self.position = 0.0;
        self.fired = false;
        self.fire_step = None;
    }
}

pub fn fresh_states(m: usize) -> Vec<NeuronTrackState> {
    vec![NeuronTrackState::default(); m]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Firing {
    pub neuron: usize,
    pub fire_step: u32,
    /// Firing order, starting at 1.
    pub rank: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FiringRecord {
    pub firings: Vec<Firing>,
}

impl FiringRecord {
    pub fn is_empty(&self) -> bool {
        self.firings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.firings.len()
    }

    pub fn neurons(&self) -> impl Iterator<Item = usize> + '_ {
        self.firings.iter().map(|f| f.neuron)
    }
}

/// Reusable buffers for [`compete`].
#[derive(Debug, Default, Clone)]
pub struct Competition {
    rate: Vec<f64>,
    inhibition: Vec<f64>,
    pinned: Vec<bool>,
    /// Indices of racing neurons, kept sorted by index.
    active: Vec<usize>,
    /// Racing neurons ordered by descending position, reused between steps.
    order: Vec<usize>,
    arrived: Vec<usize>,
}

impl Competition {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs one race. Pinning is drawn from `rng` only when `cfg.p_pin > 0`.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        i_post: &[f64],
        states: &mut [NeuronTrackState],
        cfg: &WtaConfig,
        rng: &mut R,
    ) -> Result<FiringRecord> {
        self.run_inner(i_post, states, cfg, rng, None)
    }

    fn run_inner<R: Rng + ?Sized>(
        &mut self,
        i_post: &[f64],
        states: &mut [NeuronTrackState],
        cfg: &WtaConfig,
        rng: &mut R,
        mut trace: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<FiringRecord> {
        let m = states.len();
        if i_post.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: i_post.len(),
            });
        }
        for s in states.iter_mut() {
            s.reset();
        }
        self.pinned.resize(m, false);
        if cfg.p_pin > 0.0 {
            fill_pinning(&mut self.pinned, cfg.p_pin, rng);
        } else {
            self.pinned.fill(false);
        }

        let eligible = |j: usize| states[j].refractory_remaining == 0 && !self.pinned[j];
        let i_max = (0..m)
            .filter(|&j| eligible(j))
            .map(|j| i_post[j])
            .fold(0.0f64, f64::max);
        let mut record = FiringRecord::default();
        if !(i_max > 0.0) {
            return Ok(record);
        }

        let step_len = 1.0 / cfg.traverse_steps() as f64;
        self.rate.clear();
        self.rate.resize(m, 0.0);
        self.active.clear();
        for j in 0..m {
            if eligible(j) && i_post[j] > 0.0 {
                self.rate[j] = i_post[j] / i_max * step_len;
                self.active.push(j);
            }
        }
        self.order.clear();
        self.order.extend_from_slice(&self.active);
        // Positions start out in rate order, which keeps the per-step insertion sort linear.
        let rate = &self.rate;
        self.order.sort_by(|&a, &b| rate[b].total_cmp(&rate[a]));
        self.inhibition.clear();
        self.inhibition.resize(m, 0.0);

        for step in 0..cfg.t_steps {
            if self.active.is_empty() {
                break;
            }
            if cfg.gamma > 0.0 {
                self.update_inhibition(states, cfg, !record.is_empty());
            }
            self.arrived.clear();
            for &j in &self.active {
                let s = &mut states[j];
                s.position += self.rate[j] * (1.0 - cfg.gamma * self.inhibition[j]);
                if s.position >= 1.0 - ARRIVAL_EPS {
                    s.position = 1.0;
                    s.fired = true;
                    s.fire_step = Some(step);
                    self.arrived.push(j);
                }
            }
            if !self.arrived.is_empty() {
                for &j in &self.arrived {
                    let rank = record.firings.len() as u32 + 1;
                    record.firings.push(Firing {
                        neuron: j,
                        fire_step: step,
                        rank,
                    });
                }
                self.active.retain(|&j| !states[j].fired);
                self.order.retain(|&j| !states[j].fired);
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(states.iter().map(|s| s.position).collect());
            }
        }
        Ok(record)
    }

    /// Inhibition `A_j`: positions of the non-fired neighbors strictly ahead
    /// of `j`, averaged over all of `j`'s neighbors, plus one per fired
    /// neighbor, clamped to `[0, 1]`. Neighbors behind contribute nothing, so
    /// a neuron further back is always inhibited at least as much.
    fn update_inhibition(&mut self, states: &[NeuronTrackState], cfg: &WtaConfig, any_fired: bool) {
        let m = states.len();
        let global = cfg.neighbor_radius.is_none_or(|r| r + 1 >= m);
        if global {
            if any_fired {
                for &j in &self.active {
                    self.inhibition[j] = 1.0;
                }
                return;
            }
            // Nearly sorted from the previous step, so insertion sort is cheap.
            let order = &mut self.order;
            for a in 1..order.len() {
                let mut b = a;
                while b > 0 && states[order[b - 1]].position < states[order[b]].position {
                    order.swap(b - 1, b);
                    b -= 1;
                }
            }
            let neighbors = (m - 1).max(1) as f64;
            let mut sum = 0.0;
            let mut a = 0;
            while a < order.len() {
                let p = states[order[a]].position;
                let mut b = a;
                while b < order.len() && states[order[b]].position == p {
                    b += 1;
                }
                let inh = sum / neighbors;
                for &j in &order[a..b] {
                    self.inhibition[j] = inh;
                }
                sum += p * (b - a) as f64;
                a = b;
            }
        } else {
            let r = cfg.neighbor_radius.unwrap_or(m);
            for &j in &self.active {
                let p = states[j].position;
                let (mut sum, mut count, mut fired) = (0.0, 0usize, 0usize);
                for (k, s) in states.iter().enumerate().take((j + r + 1).min(m)).skip(j.saturating_sub(r)) {
                    if k == j {
                        continue;
                    }
                    count += 1;
                    if s.fired {
                        fired += 1;
                    } else if s.position > p {
                        sum += s.position;
                    }
                }
                let mean = if count > 0 { sum / count as f64 } else { 0.0 };
                self.inhibition[j] = (mean + fired as f64).clamp(0.0, 1.0);
            }
        }
    }
}

/// Domain-wall race for one sample. See [`Competition::run`].
pub fn compete<R: Rng + ?Sized>(
    i_post: &[f64],
    states: &mut [NeuronTrackState],
    cfg: &WtaConfig,
    rng: &mut R,
) -> Result<FiringRecord> {
    Competition::new().run(i_post, states, cfg, rng)
}

/// Like [`compete`], also returning every neuron's position after each step.
pub fn compete_traced<R: Rng + ?Sized>(
    i_post: &[f64],
    states: &mut [NeuronTrackState],
    cfg: &WtaConfig,
    rng: &mut R,
) -> Result<(FiringRecord, Vec<Vec<f64>>)> {
    let mut trace = Vec::new();
    let rec = Competition::new().run_inner(i_post, states, cfg, rng, Some(&mut trace))?;
    Ok((rec, trace))
}

/// Approximate STDP: each fired neuron moves every synapse by `rank^-p`
/// nominal steps, up where the input is coincident and down elsewhere, then
/// snaps to its device's levels. Returns the number of levels moved.
pub fn astdp_update(layer: &mut ClusterLayer, x: &[f32], firing: &FiringRecord, cfg: &WtaConfig) -> Result<u64> {
    if x.len() != layer.l {
        return Err(Error::DimensionMismatch {
            expected: layer.l,
            got: x.len(),
        });
    }
    let n_levels = layer.spec.n_levels;
    let unit = layer.spec.delta_g;
    let mut moved = 0u64;
    for f in &firing.firings {
        let step = (f.rank as f64).powf(-cfg.rank_exponent) * unit;
        for (i, &xi) in x.iter().enumerate() {
            let dev = layer.device(f.neuron, i);
            let k = layer.level(f.neuron, i);
            let g = dev.conductance(k, n_levels);
            let target = if xi as f64 >= cfg.input_threshold { g + step } else { g - step };
            let k_new = dev.level_of(target, n_levels);
            if k_new != k {
                moved += k_new.abs_diff(k) as u64;
                layer.set_level(f.neuron, i, k_new);
            }
        }
    }
    debug_assert!(layer.is_consistent());
    Ok(moved)
}

/// Fired neurons become refractory for `t_homeo` samples; all others count down.
pub fn apply_homeostasis(states: &mut [NeuronTrackState], firing: &FiringRecord, cfg: &WtaConfig) {
    for s in states.iter_mut() {
        s.refractory_remaining = s.refractory_remaining.saturating_sub(1);
    }
    for n in firing.neurons() {
        states[n].refractory_remaining = cfg.t_homeo;
    }
}

/// Readout input: `(t_steps - fire_step) / t_steps` for fired neurons, else 0.
pub fn hidden_activation(firing: &FiringRecord, cfg: &WtaConfig, m: usize) -> Vec<f64> {
    let mut h = vec![0.0; m];
    fill_hidden_activation(firing, cfg, &mut h);
    h
}

pub(crate) fn fill_hidden_activation(firing: &FiringRecord, cfg: &WtaConfig, h: &mut [f64]) {
    h.fill(0.0);
    let t = cfg.t_steps as f64;
    for f in &firing.firings {
        h[f.neuron] = if cfg.binary_hidden {
            1.0
        } else {
            (t - f.fire_step as f64) / t
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn unit_spec() -> SynapseSpec {
        // Levels 1, 2, 3, 4.
        SynapseSpec::new(4.0, 1.0, 4).unwrap()
    }

    fn cfg(gamma: f64) -> WtaConfig {
        WtaConfig {
            gamma,
            t_steps: 64,
            traverse_fraction: 0.25,
            ..WtaConfig::default()
        }
    }

    #[test]
    fn infer_examples() {
        let layer = ClusterLayer::from_levels(2, 2, unit_spec(), None, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(layer.infer(&[1.0, 0.5]).unwrap(), vec![2.0, 5.0]);
        assert_eq!(layer.infer(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let full = ClusterLayer::from_levels(3, 5, unit_spec(), None, vec![3; 15]).unwrap();
        assert_eq!(full.infer(&[1.0; 5]).unwrap(), vec![20.0; 3]);
        assert!(matches!(
            layer.infer(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn random_init_in_middle_half() {
        let spec = SynapseSpec::from_bits(2.0, 1.0, 6).unwrap();
        let layer = ClusterLayer::new_random(20, 30, spec, None, &mut rng()).unwrap();
        assert!(layer.levels().iter().all(|&k| (16..=47).contains(&k)));
        assert!(layer.is_consistent());
    }

    #[test]
    fn uncoupled_race_orders_by_current() {
        let mut states = fresh_states(3);
        let rec = compete(&[3.0, 2.0, 1.0], &mut states, &cfg(0.0), &mut rng()).unwrap();
        let order: Vec<_> = rec.firings.iter().map(|f| (f.neuron, f.rank)).collect();
        assert_eq!(order, vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(rec.firings[0].fire_step, 15);
        assert!(states.iter().all(|s| s.fired && s.fire_step.is_some()));
    }

    #[test]
    fn hard_coupling_leaves_single_winner() {
        let mut c = cfg(1.0);
        c.neighbor_radius = Some(10);
        let rec = compete(&[3.0, 2.0, 1.0], &mut fresh_states(3), &c, &mut rng()).unwrap();
        assert_eq!(rec.neurons().collect::<Vec<_>>(), vec![0]);
        c.neighbor_radius = None;
        let rec = compete(&[3.0, 2.0, 1.0], &mut fresh_states(3), &c, &mut rng()).unwrap();
        assert_eq!(rec.neurons().collect::<Vec<_>>(), vec![0]);
    }

    /// Step-by-step reference for the race: O(M^2) per step, no caching.
    fn reference_race(i_post: &[f64], cfg: &WtaConfig) -> Vec<(usize, u32)> {
        let m = i_post.len();
        let i_max = i_post.iter().cloned().fold(0.0, f64::max);
        let t_min = cfg.traverse_steps() as f64;
        let r = cfg.neighbor_radius.unwrap_or(m);
        let mut pos = vec![0.0; m];
        let mut fired = vec![false; m];
        let mut out = Vec::new();
        for step in 0..cfg.t_steps {
            let prev = pos.clone();
            for j in 0..m {
                if fired[j] || i_post[j] <= 0.0 {
                    continue;
                }
                let mut ahead = vec![];
                let mut n_fired = 0.0;
                let mut neighbors = 0.0;
                for k in 0..m {
                    if k == j || k.abs_diff(j) > r {
                        continue;
                    }
                    neighbors += 1.0;
                    if fired[k] {
                        n_fired += 1.0;
                    } else if prev[k] > prev[j] {
                        ahead.push(prev[k]);
                    }
                }
                let mean = ahead.iter().sum::<f64>() / f64::max(neighbors, 1.0);
                let a = (mean + n_fired).clamp(0.0, 1.0);
                pos[j] = prev[j] + i_post[j] / i_max / t_min * (1.0 - cfg.gamma * a);
            }
            for j in 0..m {
                if !fired[j] && pos[j] >= 1.0 - 1e-9 {
                    fired[j] = true;
                    pos[j] = 1.0;
                    out.push((j, step));
                }
            }
        }
        out
    }

    #[test]
    fn race_matches_reference() {
        let mut r = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..60 {
            let m = r.random_range(2..12);
            let currents: Vec<f64> = (0..m).map(|_| r.random_range(0.0..5.0)).collect();
            let c = WtaConfig {
                gamma: r.random_range(0.0..=1.0),
                t_steps: 40,
                traverse_fraction: 0.5,
                neighbor_radius: if trial % 2 == 0 { None } else { Some(r.random_range(1..4)) },
                ..WtaConfig::default()
            };
            let rec = compete(&currents, &mut fresh_states(m), &c, &mut rng()).unwrap();
            let got: Vec<_> = rec.firings.iter().map(|f| (f.neuron, f.fire_step)).collect();
            assert_eq!(got, reference_race(&currents, &c), "currents {currents:?} cfg {c:?}");
        }
    }

    #[test]
    fn refractory_and_zero_current_races_are_empty() {
        let mut states = fresh_states(3);
        for s in &mut states {
            s.refractory_remaining = 2;
        }
        assert!(compete(&[1.0, 2.0, 3.0], &mut states, &cfg(0.5), &mut rng()).unwrap().is_empty());
        assert!(compete(&[0.0; 3], &mut fresh_states(3), &cfg(0.5), &mut rng()).unwrap().is_empty());
    }

    #[test]
    fn pinned_neurons_never_fire() {
        let mut c = cfg(0.0);
        c.p_pin = 1.0;
        assert!(compete(&[1.0, 2.0], &mut fresh_states(2), &c, &mut rng()).unwrap().is_empty());
    }

    #[test]
    fn stdp_rank_scaling() {
        let spec = unit_spec();
        let fresh = || ClusterLayer::from_levels(2, 2, spec, None, vec![1, 1, 1, 1]).unwrap();
        let x = [1.0, 0.0];
        let mut c = cfg(0.0);

        let mut layer = fresh();
        let moved = astdp_update(&mut layer, &x, &FiringRecord::default(), &c).unwrap();
        assert_eq!((moved, layer.levels()), (0, &[1, 1, 1, 1][..]));

        c.rank_exponent = 0.0;
        let rec = FiringRecord {
            firings: vec![
                Firing { neuron: 1, fire_step: 3, rank: 1 },
                Firing { neuron: 0, fire_step: 5, rank: 2 },
            ],
        };
        let mut layer = fresh();
        assert_eq!(astdp_update(&mut layer, &x, &rec, &c).unwrap(), 4);
        assert_eq!(layer.levels(), &[2, 0, 2, 0]);

        // p = 1: the rank-2 neuron receives exactly half a step, which the
        // half-up rule rounds up on potentiation and back on depression.
        c.rank_exponent = 1.0;
        let mut layer = fresh();
        astdp_update(&mut layer, &x, &rec, &c).unwrap();
        assert_eq!(layer.levels(), &[2, 1, 2, 0]);
        let half = 0.5f64.powf(c.rank_exponent) * spec.delta_g;
        assert_eq!(layer.weight(0, 0), crate::device::quantize(2.0 + half, &spec));
        assert_eq!(layer.weight(0, 1), crate::device::quantize(2.0 - half, &spec));
    }

    #[test]
    fn stdp_respects_device_windows() {
        let spec = SynapseSpec::new(2.0, 1.0, 8).unwrap();
        let devices = vec![
            DeviceBounds { g_on: 2.4, g_off: 0.9 },
            DeviceBounds { g_on: 1.7, g_off: 1.2 },
        ];
        let mut layer = ClusterLayer::from_levels(1, 2, spec, Some(devices), vec![6, 1]).unwrap();
        let c = WtaConfig { rank_exponent: 0.0, ..cfg(0.0) };
        let rec = FiringRecord { firings: vec![Firing { neuron: 0, fire_step: 0, rank: 1 }] };
        for _ in 0..20 {
            astdp_update(&mut layer, &[1.0, 0.0], &rec, &c).unwrap();
            assert!(layer.is_consistent());
        }
        assert_eq!(layer.weight(0, 0), 2.4);
        assert_eq!(layer.weight(0, 1), 1.2);
    }

    #[test]
    fn homeostasis_counts_samples() {
        let c = WtaConfig { t_homeo: 3, ..cfg(0.0) };
        let mut states = fresh_states(2);
        let fired = FiringRecord { firings: vec![Firing { neuron: 0, fire_step: 0, rank: 1 }] };
        apply_homeostasis(&mut states, &fired, &c);
        let mut r = rng();
        let mut eligible_after = None;
        for sample in 1..=5 {
            let rec = compete(&[5.0, 1.0], &mut states, &c, &mut r).unwrap();
            let zero_fired = rec.neurons().any(|n| n == 0);
            if zero_fired && eligible_after.is_none() {
                eligible_after = Some(sample);
            }
            apply_homeostasis(&mut states, &rec, &c);
        }
        assert_eq!(eligible_after, Some(4));

        let c0 = WtaConfig { t_homeo: 0, ..cfg(0.0) };
        let mut states = fresh_states(2);
        apply_homeostasis(&mut states, &fired, &c0);
        assert!(states.iter().all(|s| s.refractory_remaining == 0));
    }

    #[test]
    fn no_consecutive_firing_with_homeostasis() {
        // Exhaustive over all current orderings of a 3-neuron layer.
        let perms = [[3.0, 2.0, 1.0], [3.0, 1.0, 2.0], [2.0, 3.0, 1.0], [1.0, 3.0, 2.0], [2.0, 1.0, 3.0], [1.0, 2.0, 3.0]];
        for t_homeo in 1..3 {
            for gamma in [0.0, 0.5, 1.0] {
                let c = WtaConfig { t_homeo, ..cfg(gamma) };
                let mut states = fresh_states(3);
                let mut last: Vec<Option<usize>> = vec![None; 3];
                for (sample, p) in perms.iter().cycle().take(30).enumerate() {
                    let rec = compete(p, &mut states, &c, &mut rng()).unwrap();
                    for n in rec.neurons() {
                        if let Some(prev) = last[n] {
                            assert!(sample - prev > t_homeo as usize);
                        }
                        last[n] = Some(sample);
                    }
                    apply_homeostasis(&mut states, &rec, &c);
                }
            }
        }
    }

    #[test]
    fn hidden_activation_examples() {
        let c = cfg(0.5);
        assert_eq!(hidden_activation(&FiringRecord::default(), &c, 3), vec![0.0; 3]);
        let rec = FiringRecord {
            firings: vec![
                Firing { neuron: 2, fire_step: 0, rank: 1 },
                Firing { neuron: 0, fire_step: 32, rank: 2 },
            ],
        };
        assert_eq!(hidden_activation(&rec, &c, 3), vec![0.5, 0.0, 1.0]);
        let b = WtaConfig { binary_hidden: true, ..c };
        assert_eq!(hidden_activation(&rec, &b, 3), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(WtaConfig::default().validate().is_ok());
        assert!(WtaConfig { gamma: 1.5, ..WtaConfig::default() }.validate().is_err());
        assert!(WtaConfig { t_steps: 0, ..WtaConfig::default() }.validate().is_err());
        assert!(WtaConfig { rank_exponent: -1.0, ..WtaConfig::default() }.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn uncoupled_order_is_current_order(currents in proptest::collection::vec(0.1..10.0f64, 2..30)) {
                let c = WtaConfig { gamma: 0.0, t_steps: 4000, traverse_fraction: 0.005, ..WtaConfig::default() };
                let rec = compete(&currents, &mut fresh_states(currents.len()), &c, &mut rng()).unwrap();
                prop_assert_eq!(rec.len(), currents.len());
                // Consecutive firings are in descending current unless they share a step,
                // where the lower index goes first.
                for w in rec.firings.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if a.fire_step == b.fire_step {
                        prop_assert!(a.neuron < b.neuron);
                    } else {
                        prop_assert!(currents[a.neuron] > currents[b.neuron]);
                    }
                }
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2000))]
            #[test]
            fn more_coupling_never_more_firing(currents in proptest::collection::vec(0.0..10.0f64, 2..40)) {
                let grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
                let mut prev = usize::MAX;
                for g in grid {
                    let c = WtaConfig { gamma: g, ..WtaConfig::default() };
                    let n = compete(&currents, &mut fresh_states(currents.len()), &c, &mut rng()).unwrap().len();
                    prop_assert!(n <= prev, "gamma {} fired {} > {}", g, n, prev);
                    prev = n;
                }
            }
        }
    }
}
