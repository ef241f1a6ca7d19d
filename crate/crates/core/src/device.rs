//! Device-level models for domain-wall MTJ synapses and neuron tracks.
//!
//! The lateral-coupling calculators ([`stray_field`], [`coupling_ratio`]) are
//! standalone design tools: the network simulator consumes the coupling ratio
//! `gamma` directly from its configuration and never evaluates the stray field
//! at runtime.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Largest supported level count; level indices are stored as `u16`.
pub const MAX_LEVELS: u32 = 1 << 16;

/// Slack added before flooring so that exact midpoints and exact levels are
/// not pushed to the wrong side by rounding in `(g - g_off) / delta`.
const LEVEL_EPS: f64 = 1e-9;

/// Physical dimensions of a track. Lengths in nm, saturation in tesla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackGeometry {
    pub w_nm: f64,
    pub t_nm: f64,
    pub s_nm: f64,
    pub l_mtj_nm: f64,
    pub l_track_nm: f64,
    pub m_s_tesla: f64,
}

impl Default for TrackGeometry {
    fn default() -> Self {
        Self {
            w_nm: 32.0,
            t_nm: 4.0,
            s_nm: 10.0,
            l_mtj_nm: 512.0,
            l_track_nm: 1024.0,
            m_s_tesla: 1.6,
        }
    }
}

impl TrackGeometry {
    /// Spacings over which the coupling can be tuned through the whole
    /// weak-to-strong range.
    pub const SPACING_RANGE_NM: (f64, f64) = (10.0, 150.0);

    /// Full invariant check, including the spacing window used when the
    /// coupling is derived from geometry.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("w_nm", self.w_nm),
            ("t_nm", self.t_nm),
            ("s_nm", self.s_nm),
            ("l_mtj_nm", self.l_mtj_nm),
            ("l_track_nm", self.l_track_nm),
            ("m_s_tesla", self.m_s_tesla),
        ];
        for (name, v) in fields {
            positive_finite(name, v)?;
        }
        let (lo, hi) = Self::SPACING_RANGE_NM;
        if !(lo..=hi).contains(&self.s_nm) {
            return domain(format!("s_nm = {} outside [{lo}, {hi}]", self.s_nm));
        }
        if self.l_mtj_nm < self.w_nm {
            return domain(format!(
                "l_mtj_nm = {} shorter than one track width ({})",
                self.l_mtj_nm, self.w_nm
            ));
        }
        Ok(())
    }
}

fn positive_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must be finite and > 0, got {v}"))
    }
}

/// Vertical stray-field component (tesla) that a track imposes on its
/// neighbor, `4 M_s / pi * (atan((2s+3w)/t) - atan((2s+w)/t))`.
pub fn stray_field(geom: &TrackGeometry) -> Result<f64> {
    positive_finite("w_nm", geom.w_nm)?;
    positive_finite("t_nm", geom.t_nm)?;
    positive_finite("s_nm", geom.s_nm)?;
    positive_finite("m_s_tesla", geom.m_s_tesla)?;
    let (w, t, s) = (geom.w_nm, geom.t_nm, geom.s_nm);
    let far = ((2.0 * s + 3.0 * w) / t).atan();
    let near = ((2.0 * s + w) / t).atan();
    Ok(4.0 * geom.m_s_tesla / PI * (far - near))
}

/// Maximum number of distinguishable conductance levels for an output
/// terminal of length `l_mtj_nm`, taking the wall width as `w / 4`.
pub fn synapse_levels(l_mtj_nm: f64, w_nm: f64) -> Result<u32> {
    positive_finite("w_nm", w_nm)?;
    positive_finite("l_mtj_nm", l_mtj_nm)?;
    if l_mtj_nm < w_nm {
        return domain(format!(
            "l_mtj_nm = {l_mtj_nm} must be at least the track width {w_nm}"
        ));
    }
    let n = (4.0 * l_mtj_nm / w_nm).floor();
    if n > u32::MAX as f64 {
        return domain(format!("level count {n} overflows"));
    }
    Ok(n as u32)
}

/// Fraction of the current-driven wall velocity removed by neighbor coupling.
pub fn coupling_ratio(v0: f64, v_inhib: f64) -> Result<f64> {
    if !(v0.is_finite() && v0 > 0.0) {
        return domain(format!("v0 must be finite and > 0, got {v0}"));
    }
    if !(v_inhib.is_finite() && (0.0..=v0).contains(&v_inhib)) {
        return domain(format!("v_inhib = {v_inhib} must lie in [0, v0 = {v0}]"));
    }
    Ok(((v0 - v_inhib) / v0).clamp(0.0, 1.0))
}

/// Nominal synapse: conductance window and number of writable levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynapseSpec {
    pub g_on: f64,
    pub g_off: f64,
    pub n_levels: u32,
    pub delta_g: f64,
}

impl SynapseSpec {
    pub fn new(g_on: f64, g_off: f64, n_levels: u32) -> Result<Self> {
        if !(g_off.is_finite() && g_on.is_finite() && g_off > 0.0 && g_on > g_off) {
            return domain(format!("need g_on > g_off > 0, got g_on={g_on}, g_off={g_off}"));
        }
        if !(2..=MAX_LEVELS).contains(&n_levels) {
            return domain(format!("n_levels = {n_levels} outside [2, {MAX_LEVELS}]"));
        }
        Ok(Self {
            g_on,
            g_off,
            n_levels,
            delta_g: (g_on - g_off) / (n_levels - 1) as f64,
        })
    }

    pub fn from_bits(g_on: f64, g_off: f64, bits: u32) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return domain(format!("bits = {bits} outside [1, 16]"));
        }
        Self::new(g_on, g_off, 1 << bits)
    }

    pub fn max_level(&self) -> u16 {
        (self.n_levels - 1) as u16
    }

    pub fn nominal_device(&self) -> DeviceBounds {
        DeviceBounds {
            g_on: self.g_on,
            g_off: self.g_off,
        }
    }

    pub fn conductance(&self, level: u16) -> f64 {
        self.nominal_device().conductance(level, self.n_levels)
    }
}

/// Snap `g` to the nearest level of `spec` (ties go up), clamped to the window.
pub fn quantize(g: f64, spec: &SynapseSpec) -> f64 {
    let dev = spec.nominal_device();
    dev.conductance(dev.level_of(g, spec.n_levels), spec.n_levels)
}

/// Conductance window of one physical device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceBounds {
    pub g_on: f64,
    pub g_off: f64,
}

impl DeviceBounds {
    #[inline]
    pub fn delta(&self, n_levels: u32) -> f64 {
        (self.g_on - self.g_off) / (n_levels - 1) as f64
    }

    #[inline]
    pub fn conductance(&self, level: u16, n_levels: u32) -> f64 {
        if level as u32 >= n_levels - 1 {
            self.g_on
        } else {
            self.g_off + level as f64 * self.delta(n_levels)
        }
    }

    /// Index of the nearest level, half-up, clamped to `[0, n_levels - 1]`.
    #[inline]
    pub fn level_of(&self, g: f64, n_levels: u32) -> u16 {
        if g.is_nan() || g <= self.g_off {
            return 0;
        }
        let top = n_levels - 1;
        if g >= self.g_on {
            return top as u16;
        }
        let u = (g - self.g_off) / self.delta(n_levels);
        ((u + 0.5 + LEVEL_EPS).floor() as u32).min(top) as u16
    }
}

/// Process variation and stochastic pinning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationSpec {
    pub sigma_tmr: f64,
    pub p_pin: f64,
    pub seed: u64,
}

impl VariationSpec {
    pub fn ideal(seed: u64) -> Self {
        Self {
            sigma_tmr: 0.0,
            p_pin: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_tmr.is_finite() && self.sigma_tmr >= 0.0) {
            return domain(format!("sigma_tmr must be >= 0, got {}", self.sigma_tmr));
        }
        if !(0.0..=1.0).contains(&self.p_pin) {
            return domain(format!("p_pin = {} outside [0, 1]", self.p_pin));
        }
        Ok(())
    }
}

/// Draw `n` device windows around the nominal spec. Each bound gets an
/// independent normal perturbation with relative standard deviation
/// `sigma_tmr`; a pair that comes out inverted is swapped.
pub fn sample_device_population(
    n: usize,
    spec: &SynapseSpec,
    var: &VariationSpec,
) -> Result<Vec<DeviceBounds>> {
    var.validate()?;
    let nominal = spec.nominal_device();
    if var.sigma_tmr == 0.0 {
        return Ok(vec![nominal; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(var.seed);
    let on = Normal::new(spec.g_on, var.sigma_tmr * spec.g_on).map_err(|e| crate::Error::Domain(e.to_string()))?;
    let off = Normal::new(spec.g_off, var.sigma_tmr * spec.g_off).map_err(|e| crate::Error::Domain(e.to_string()))?;
    // A device must keep a strictly positive, non-empty window.
    let floor = spec.g_off * 1e-3;
    Ok((0..n)
        .map(|_| {
            let a = on.sample(&mut rng).max(floor);
            let b = off.sample(&mut rng).max(floor);
            let (g_on, g_off) = if a > b {
                (a, b)
            } else if b > a {
                (b, a)
            } else {
                (a + floor, b)
            };
            DeviceBounds { g_on, g_off }
        })
        .collect())
}

/// Independent Bernoulli(`p_pin`) draw per neuron; `true` means the neuron's
/// wall is pinned and it sits out this competition.
pub fn sample_pinning<R: Rng + ?Sized>(m: usize, p_pin: f64, rng: &mut R) -> Vec<bool> {
    let mut mask = vec![false; m];
    fill_pinning(&mut mask, p_pin, rng);
    mask
}

pub(crate) fn fill_pinning<R: Rng + ?Sized>(mask: &mut [bool], p_pin: f64, rng: &mut R) {
    if p_pin <= 0.0 {
        mask.fill(false);
    } else if p_pin >= 1.0 {
        mask.fill(true);
    } else {
        for m in mask.iter_mut() {
            *m = rng.random_bool(p_pin);
        }
    }
}
