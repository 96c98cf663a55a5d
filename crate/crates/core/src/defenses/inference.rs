//! Inference-time response transforms applied by the query oracle.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::metrics::percentile_sorted;
use crate::nn::argmax;

/// One stage of an oracle's response pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum InferenceTransform {
    /// iid Gaussian noise of scale `sigma` on the logits before softmax.
    LogitNoise { sigma: f64 },
    /// Each probability rounded to the nearest of `2^bits` uniform levels,
    /// then renormalised.
    Quantize { bits: u32 },
    /// One-hot argmax.
    Top1,
    /// Distance-based query-stream detector; once tripped, every later
    /// response is uniform.
    Prada(PradaConfig),
    /// Reversed probability vector whenever max confidence is below
    /// `threshold`.
    Misinform { threshold: f64 },
    /// Moves `strength` of the runner-up's mass onto the least-likely class
    /// without changing the argmax.
    Redirect { strength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PradaConfig {
    /// Number of most recent min-distances compared against history.
    pub window: usize,
    /// Historical quantile that counts as "suspiciously close".
    pub quantile: f64,
    /// Fraction of recent distances below the quantile that trips detection.
    pub threshold: f64,
}

impl Default for PradaConfig {
    fn default() -> Self {
        Self {
            window: 100,
            quantile: 0.10,
            threshold: 0.5,
        }
    }
}

/// Per-oracle detector state.
#[derive(Debug, Clone, Default)]
pub struct PradaState {
    seen: Vec<Vec<f64>>,
    min_dists: Vec<f64>,
    pub tripped: bool,
    pub tripped_at: Option<usize>,
}

impl PradaState {
    /// Records a received feature vector and returns whether the detector
    /// is tripped afterwards.
    pub fn observe(&mut self, cfg: &PradaConfig, x: &[f64]) -> bool {
        if let Some(d) = self
            .seen
            .iter()
            .map(|s| sq_dist(s, x).sqrt())
            .min_by(f64::total_cmp)
        {
            self.min_dists.push(d);
        }
        self.seen.push(x.to_vec());
        if !self.tripped && self.min_dists.len() >= 2 * cfg.window {
            let split = self.min_dists.len() - cfg.window;
            let mut hist = self.min_dists[..split].to_vec();
            hist.sort_by(f64::total_cmp);
            let cut = percentile_sorted(&hist, cfg.quantile);
            let recent = &self.min_dists[split..];
            let low = recent.iter().filter(|&&d| d < cut).count();
            if low as f64 / cfg.window as f64 > cfg.threshold {
                self.tripped = true;
                self.tripped_at = Some(self.seen.len());
            }
        }
        self.tripped
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn add_logit_noise(logits: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return logits.to_vec();
    }
    logits
        .iter()
        .map(|z| z + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Rounds each entry to the nearest of the levels `k/(2^bits − 1)` and
/// renormalises. If every entry rounds to zero, the argmax keeps level 1.
pub fn quantize(p: &[f64], bits: u32) -> Vec<f64> {
    let steps = ((1u64 << bits.min(52)) - 1).max(1) as f64;
    let mut q: Vec<f64> = p.iter().map(|v| (v * steps).round() / steps).collect();
    let s: f64 = q.iter().sum();
    if s <= 0.0 {
        let k = argmax(p);
        q.iter_mut().for_each(|v| *v = 0.0);
        q[k] = 1.0;
        return q;
    }
    q.iter_mut().for_each(|v| *v /= s);
    q
}

pub fn top1(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    out[argmax(p)] = 1.0;
    out
}

pub fn misinform(p: &[f64], threshold: f64) -> Vec<f64> {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max >= threshold {
        return p.to_vec();
    }
    let mut r: Vec<f64> = p.iter().rev().copied().collect();
    let s: f64 = r.iter().sum();
    if s > 0.0 {
        r.iter_mut().for_each(|v| *v /= s);
    }
    r
}

/// Shifts mass from the runner-up to the least-likely class. The shift is
/// capped at half the gap between the top and least-likely classes, and the
/// input is returned untouched if rounding would still move the argmax.
pub fn redirect(p: &[f64], strength: f64) -> Vec<f64> {
    let c = p.len();
    if c < 3 {
        return p.to_vec();
    }
    let top = argmax(p);
    let mut second = usize::MAX;
    for j in 0..c {
        if j != top && (second == usize::MAX || p[j] > p[second]) {
            second = j;
        }
    }
    let mut least = usize::MAX;
    for j in (0..c).rev() {
        if j != top && j != second && (least == usize::MAX || p[j] < p[least]) {
            least = j;
        }
    }
    let moved = (strength * p[second]).min(0.5 * (p[top] - p[least])).max(0.0);
    let mut out = p.to_vec();
    out[second] -= moved;
    out[least] += moved;
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    if argmax(&out) != top {
        return p.to_vec();
    }
    out
}

pub fn uniform(c: usize) -> Vec<f64> {
    vec![1.0 / c as f64; c]
}

/// Converts a probability row back to logits for a noise stage that follows
/// a probability stage.
pub fn probs_to_logits(p: &[f64]) -> Vec<f64> {
    p.iter().map(|v| v.max(1e-300).ln()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn zero_sigma_is_identity() {
        let z = [0.3, -2.0, 5.5];
        assert_eq!(add_logit_noise(&z, 0.0, &mut rng_from(1)), z.to_vec());
    }

    #[test]
    fn two_bit_levels() {
        // levels are k/3; 0.5 → 2/3, 0.3 → 1/3, 0.2 → 1/3; sum 4/3.
        let q = quantize(&[0.5, 0.3, 0.2], 2);
        let expect = [0.5, 0.25, 0.25];
        for (a, b) in q.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{q:?}");
        }
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantize_all_zero_falls_back_to_argmax() {
        let p = vec![0.1; 10];
        let q = quantize(&p, 2);
        assert_eq!(q[0], 1.0);
        assert_eq!(q.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn misinform_only_low_confidence() {
        assert_eq!(misinform(&[0.7, 0.2, 0.1], 0.6), vec![0.7, 0.2, 0.1]);
        assert_eq!(misinform(&[0.5, 0.3, 0.2], 0.6), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn redirect_keeps_argmax_on_near_ties() {
        let p = [0.34, 0.33, 0.33];
        let r = redirect(&p, 0.5);
        assert_eq!(argmax(&r), 0);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let r = redirect(&[0.1, 0.6, 0.3], 0.5);
        assert!((r[2] - 0.15).abs() < 1e-12 && (r[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn prada_trips_on_repeated_near_duplicates() {
        let cfg = PradaConfig {
            window: 10,
            ..Default::default()
        };
        let mut st = PradaState::default();
        let mut rng = rng_from(3);
        for _ in 0..30 {
            let x: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            st.observe(&cfg, &x);
        }
        assert!(!st.tripped);
        let base = vec![0.0; 4];
        for k in 0..12 {
            let mut x = base.clone();
            x[0] = 1e-6 * k as f64;
            st.observe(&cfg, &x);
        }
        assert!(st.tripped);
    }
}
