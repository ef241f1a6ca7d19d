//! Supervised readout built from differential synapse pairs.
//!
//! Each signed weight is carried by two devices, `w = gain * (g_pos - g_neg)`.
//! Updates only ever increment one device of the pair; when the device that
//! must grow is already at its top level, both devices are first shifted down
//! by their common part so the difference is preserved.

use serde::{Deserialize, Serialize};

use crate::device::SynapseSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Sign rule on binarized outputs.
    BinBp,
    /// Softmax with cross-entropy delta.
    AnaBp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutParams {
    /// Output-stage gain from differential conductance to logit units.
    pub gain: f64,
    pub eta: f64,
    /// Time constant (in samples) of `eta / (1 + t / tau)`; `None` keeps eta fixed.
    pub eta_decay: Option<f64>,
    /// Accumulate analog updates in a shadow copy and program the nearest level.
    pub shadow_weights: bool,
}

impl ReadoutParams {
    pub fn unit_gain(eta: f64) -> Self {
        Self {
            gain: 1.0,
            eta,
            eta_decay: None,
            shadow_weights: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReadoutLayer {
    m: usize,
    n: usize,
    spec: SynapseSpec,
    policy: Policy,
    params: ReadoutParams,
    pos: Vec<u16>,
    neg: Vec<u16>,
    /// Cached effective weights `[j * n + k]`.
    w: Vec<f64>,
    shadow: Option<Vec<f64>>,
    samples_seen: u64,
}

impl ReadoutLayer {
    /// All devices start at `g_off`, i.e. every weight is zero.
    pub fn new(m: usize, n: usize, spec: SynapseSpec, policy: Policy, params: ReadoutParams) -> Result<Self> {
        Self::from_levels(m, n, spec, policy, params, vec![0; m * n], vec![0; m * n])
    }

    pub fn from_levels(
        m: usize,
        n: usize,
        spec: SynapseSpec,
        policy: Policy,
        params: ReadoutParams,
        pos: Vec<u16>,
        neg: Vec<u16>,
    ) -> Result<Self> {
        for v in [&pos, &neg] {
            if v.len() != m * n {
                return Err(Error::DimensionMismatch {
                    expected: m * n,
                    got: v.len(),
                });
            }
            if v.iter().any(|&k| k > spec.max_level()) {
                return Err(Error::Domain("level index above n_levels - 1".into()));
            }
        }
        if !(params.gain.is_finite() && params.gain > 0.0) {
            return Err(Error::Domain(format!("gain must be > 0, got {}", params.gain)));
        }
        let mut layer = Self {
            m,
            n,
            spec,
            policy,
            params,
            pos,
            neg,
            w: vec![0.0; m * n],
            shadow: None,
            samples_seen: 0,
        };
        for idx in 0..m * n {
            layer.refresh(idx);
        }
        if params.shadow_weights {
            layer.shadow = Some(layer.w.clone());
        }
        Ok(layer)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn spec(&self) -> &SynapseSpec {
        &self.spec
    }

    pub fn g_pos(&self, j: usize, k: usize) -> f64 {
        self.spec.conductance(self.pos[j * self.n + k])
    }

    pub fn g_neg(&self, j: usize, k: usize) -> f64 {
        self.spec.conductance(self.neg[j * self.n + k])
    }

    pub fn pair_levels(&self, j: usize, k: usize) -> (u16, u16) {
        (self.pos[j * self.n + k], self.neg[j * self.n + k])
    }

    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.w[j * self.n + k]
    }

    pub fn checksum(&self) -> u64 {
        crate::fnv1a(self.pos.iter().chain(&self.neg).flat_map(|k| k.to_le_bytes()))
    }

    /// All devices on a level; true by construction, checked in tests.
    pub fn is_consistent(&self) -> bool {
        let top = self.spec.max_level();
        self.pos.iter().chain(&self.neg).all(|&k| k <= top)
            && (0..self.m * self.n).all(|idx| {
                let (j, k) = (idx / self.n, idx % self.n);
                self.w[idx] == self.params.gain * (self.g_pos(j, k) - self.g_neg(j, k))
            })
    }

    fn refresh(&mut self, idx: usize) {
        let g = self.spec.conductance(self.pos[idx]) - self.spec.conductance(self.neg[idx]);
        self.w[idx] = self.params.gain * g;
    }

    fn check_m(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: h.len(),
            });
        }
        Ok(())
    }

    fn check_n(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Raw outputs `Y[k] = sum_j w[j, k] h[j]`.
    pub fn forward(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_m(h)?;
        let mut y = vec![0.0; self.n];
        for (j, &hj) in h.iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            for (yk, &w) in y.iter_mut().zip(&self.w[j * self.n..(j + 1) * self.n]) {
                *yk += w * hj;
            }
        }
        Ok(y)
    }

    pub fn predict(&self, h: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(h)?))
    }

    /// Current learning rate after the decay schedule.
    pub fn eta(&self) -> f64 {
        match self.params.eta_decay {
            Some(tau) => self.params.eta / (1.0 + self.samples_seen as f64 / tau),
            None => self.params.eta,
        }
    }

    /// Grow one device of the pair by `levels` (rounded half-up on the device
    /// grid), rebalancing first if it would run past the top. Returns levels moved.
    fn grow(&mut self, idx: usize, positive: bool, dg: f64) -> u64 {
        let top = self.spec.max_level();
        let (a, b) = if positive {
            (self.pos[idx], self.neg[idx])
        } else {
            (self.neg[idx], self.pos[idx])
        };
        let mut moved = 0;
        let (mut a, mut b) = (a, b);
        let mut target = self.spec.nominal_device().level_of(self.spec.conductance(a) + dg, self.spec.n_levels);
        if target == top && b > 0 && self.spec.conductance(a) + dg > self.spec.g_on {
            let common = a.min(b);
            a -= common;
            b -= common;
            moved += 2 * common as u64;
            target = self.spec.nominal_device().level_of(self.spec.conductance(a) + dg, self.spec.n_levels);
        }
        moved += target.abs_diff(a) as u64;
        a = target;
        if positive {
            self.pos[idx] = a;
            self.neg[idx] = b;
        } else {
            self.neg[idx] = a;
            self.pos[idx] = b;
        }
        self.refresh(idx);
        moved
    }

    /// Sign-rule update against one-hot `t` and binarized outputs `o`.
    pub fn binbp_update(&mut self, h: &[f64], t: &[f64], o: &[f64]) -> Result<u64> {
        self.check_m(h)?;
        self.check_n(t)?;
        self.check_n(o)?;
        let mut moved = 0;
        for (j, &hj) in h.iter().enumerate() {
            for k in 0..self.n {
                let s = sign(hj * (t[k] - o[k]));
                if s != 0 {
                    moved += self.grow(j * self.n + k, s > 0, self.spec.delta_g);
                }
            }
        }
        self.samples_seen += 1;
        Ok(moved)
    }

    /// Cross-entropy update against one-hot `t` and softmax outputs `o`.
    pub fn anabp_update(&mut self, h: &[f64], t: &[f64], o: &[f64]) -> Result<u64> {
        self.check_m(h)?;
        self.check_n(t)?;
        self.check_n(o)?;
        let eta = self.eta();
        let gain = self.params.gain;
        let mut moved = 0;
        for (j, &hj) in h.iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            for k in 0..self.n {
                let dw = -eta * hj * (o[k] - t[k]);
                if dw == 0.0 {
                    continue;
                }
                let idx = j * self.n + k;
                if self.shadow.is_some() {
                    moved += self.shadow_step(idx, dw);
                } else {
                    moved += self.grow(idx, dw > 0.0, dw.abs() / gain);
                }
            }
        }
        self.samples_seen += 1;
        Ok(moved)
    }

    fn shadow_step(&mut self, idx: usize, dw: f64) -> u64 {
        let unit = self.params.gain * self.spec.delta_g;
        let top = self.spec.max_level() as f64;
        let shadow = self.shadow.as_mut().expect("shadow weights enabled");
        let s = (shadow[idx] + dw).clamp(-top * unit, top * unit);
        shadow[idx] = s;
        let d = (s / unit + 0.5 + 1e-9).floor() as i64;
        let (p, q) = (d.max(0) as u16, (-d).max(0) as u16);
        let moved = p.abs_diff(self.pos[idx]) as u64 + q.abs_diff(self.neg[idx]) as u64;
        if moved > 0 {
            self.pos[idx] = p;
            self.neg[idx] = q;
            self.refresh(idx);
        }
        moved
    }

    /// Applies this layer's policy for one labeled sample and returns the
    /// predicted class (before the update) and levels moved.
    pub fn train_step(&mut self, h: &[f64], label: usize) -> Result<(usize, u64)> {
        if label >= self.n {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes: self.n,
            });
        }
        let y = self.forward(h)?;
        let pred = argmax(&y);
        let t = one_hot(label, self.n);
        let moved = match self.policy {
            Policy::BinBp => self.binbp_update(h, &t, &one_hot(pred, self.n))?,
            Policy::AnaBp => self.anabp_update(h, &t, &softmax(&y))?,
        };
        Ok((pred, moved))
    }
}

pub fn one_hot(k: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Index of the largest element, lowest index on ties.
pub fn argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in y.iter().enumerate().skip(1) {
        if v > y[best] {
            best = k;
        }
    }
    best
}

/// Max-shifted softmax.
pub fn softmax(y: &[f64]) -> Vec<f64> {
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = y.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Unquantized cross-entropy delta `-eta * h[j] * (o[k] - t[k])`, `[j * n + k]`.
pub fn anabp_delta(h: &[f64], t: &[f64], o: &[f64], eta: f64) -> Vec<f64> {
    h.iter()
        .flat_map(|&hj| t.iter().zip(o).map(move |(&tk, &ok)| -eta * hj * (ok - tk)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Levels 1, 2, 3 with unit gain, so weights are plain level differences.
    fn spec3() -> SynapseSpec {
        SynapseSpec::new(3.0, 1.0, 3).unwrap()
    }

    #[test]
    fn forward_examples() {
        // w = [2, -1] from (pos, neg) = (3, 1) and (1, 2).
        let layer = ReadoutLayer::from_levels(1, 2, spec3(), Policy::AnaBp, ReadoutParams::unit_gain(0.1), vec![2, 0], vec![0, 1]).unwrap();
        assert_eq!(layer.forward(&[0.5]).unwrap(), vec![1.0, -0.5]);
        assert_eq!(layer.predict(&[0.5]).unwrap(), 0);
        assert_eq!(layer.forward(&[0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(layer.forward(&[0.5, 1.0]).is_err());

        let cancel = ReadoutLayer::from_levels(2, 2, spec3(), Policy::AnaBp, ReadoutParams::unit_gain(0.1), vec![1, 2, 0, 1], vec![1, 2, 0, 1]).unwrap();
        assert_eq!(cancel.forward(&[0.3, 0.9]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        for c in [-1e3, 0.0, 7.5, 1e3] {
            for p in softmax(&[c, c, c]) {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let o = softmax(&[2f64.ln(), 0.0]);
        assert!((o[0] - 2.0 / 3.0).abs() < 1e-15 && (o[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(argmax(&[0.1, 0.9]), 1);
        assert_eq!(argmax(&[0.4, 0.4, 0.4]), 0);
    }

    #[test]
    fn binbp_examples() {
        let spec = SynapseSpec::new(8.0, 1.0, 8).unwrap();
        let mut layer = ReadoutLayer::new(2, 2, spec, Policy::BinBp, ReadoutParams::unit_gain(0.1)).unwrap();
        assert_eq!(layer.binbp_update(&[0.7, 0.2], &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0);
        layer.binbp_update(&[0.7, 0.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(layer.pair_levels(0, 0), (1, 0));
        assert_eq!(layer.pair_levels(0, 1), (0, 1));
        assert_eq!(layer.pair_levels(1, 0), (0, 0));
        assert_eq!(layer.pair_levels(1, 1), (0, 0));
    }

    #[test]
    fn binbp_rebalances_at_saturation() {
        let spec = SynapseSpec::new(4.0, 1.0, 4).unwrap();
        let mut layer = ReadoutLayer::from_levels(1, 1, spec, Policy::BinBp, ReadoutParams::unit_gain(0.1), vec![3], vec![2]).unwrap();
        let moved = layer.binbp_update(&[1.0], &[1.0], &[0.0]).unwrap();
        assert_eq!(layer.pair_levels(0, 0), (2, 0));
        assert_eq!(moved, 5);
        layer.binbp_update(&[1.0], &[1.0], &[0.0]).unwrap();
        assert_eq!(layer.pair_levels(0, 0), (3, 0));
        // Weight already at its maximum: clamps.
        layer.binbp_update(&[1.0], &[1.0], &[0.0]).unwrap();
        assert_eq!(layer.pair_levels(0, 0), (3, 0));
    }

    #[test]
    fn anabp_examples() {
        let spec = SynapseSpec::new(1.0 + 1e-2 * 200.0, 1.0, 201).unwrap();
        let mut layer = ReadoutLayer::new(1, 2, spec, Policy::AnaBp, ReadoutParams::unit_gain(0.1)).unwrap();
        let d = anabp_delta(&[1.0], &[1.0, 0.0], &[0.8, 0.2], 0.1);
        assert!((d[0] - 0.02).abs() < 1e-15 && (d[1] + 0.02).abs() < 1e-15);
        layer.anabp_update(&[1.0], &[1.0, 0.0], &[0.8, 0.2]).unwrap();
        assert_eq!(layer.pair_levels(0, 0), (2, 0));
        assert_eq!(layer.pair_levels(0, 1), (0, 2));

        let before = layer.checksum();
        layer.anabp_update(&[1.0], &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        layer.anabp_update(&[0.0], &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_eq!(layer.checksum(), before);
    }

    #[test]
    fn shadow_accumulates_sub_level_updates() {
        let spec = SynapseSpec::from_bits(2.0, 1.0, 4).unwrap();
        let params = ReadoutParams {
            shadow_weights: true,
            ..ReadoutParams::unit_gain(0.01)
        };
        let mut layer = ReadoutLayer::new(1, 2, spec, Policy::AnaBp, params).unwrap();
        let mut quantized = ReadoutLayer::new(1, 2, spec, Policy::AnaBp, ReadoutParams::unit_gain(0.01)).unwrap();
        for _ in 0..20 {
            layer.anabp_update(&[1.0], &[1.0, 0.0], &[0.5, 0.5]).unwrap();
            quantized.anabp_update(&[1.0], &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        }
        // 20 * 0.005 = 0.1 accumulated = 1.5 levels of 1/15.
        assert_eq!(layer.pair_levels(0, 0), (2, 0));
        assert_eq!(quantized.pair_levels(0, 0), (0, 0));
        assert!(layer.is_consistent());
    }

    #[test]
    fn eta_decay_schedule() {
        let params = ReadoutParams {
            eta_decay: Some(10.0),
            ..ReadoutParams::unit_gain(0.1)
        };
        let mut layer = ReadoutLayer::new(1, 2, spec3(), Policy::AnaBp, params).unwrap();
        assert_eq!(layer.eta(), 0.1);
        for _ in 0..10 {
            layer.anabp_update(&[0.0], &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        }
        assert!((layer.eta() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn train_step_rejects_bad_label() {
        let mut layer = ReadoutLayer::new(1, 2, spec3(), Policy::AnaBp, ReadoutParams::unit_gain(0.1)).unwrap();
        assert!(matches!(layer.train_step(&[1.0], 2), Err(Error::LabelOutOfRange { .. })));
    }
}
