//! Empirical measures on the real line.
//!
//! [`Sample`] keeps observations in insertion order together with a sorted
//! copy; every operation here reads the sorted view. The ECDF is
//! right-continuous (ties counted with `≤`) and quantiles are order
//! statistics `Y_(⌈q·m⌉)`, with no interpolation.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Sample {
    values: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(skip))]
    sorted: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut sorted = values.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(Sample { values, sorted })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Observations in insertion order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn ecdf(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= x);
        count as f64 / self.len() as f64
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        let k = order_statistic_rank(q, self.len())?;
        Ok(self.sorted[k - 1])
    }

    pub fn mean(&self) -> f64 {
        mean_of(&self.values)
    }

    /// Variance with the ML denominator `m`.
    pub fn variance(&self) -> f64 {
        variance_of(&self.values)
    }

    /// Returns a new sample with every value shifted by `c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v + c).collect())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * c).collect())
    }
}

/// Rank `k = ⌈q·m⌉` (1-based) of the order statistic used as the q-quantile.
pub fn order_statistic_rank(q: f64, m: usize) -> Result<usize> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::QuantileLevel(q));
    }
    if m == 0 {
        return Err(Error::EmptySample);
    }
    let k = libm::ceil(q * m as f64) as usize;
    Ok(k.clamp(1, m))
}

pub fn ecdf_eval(s: &Sample, x: f64) -> f64 {
    s.ecdf(x)
}

pub fn empirical_quantile(s: &Sample, q: f64) -> Result<f64> {
    s.quantile(q)
}

/// Quantile of an unsorted buffer by selection; reorders `values`.
pub fn quantile_in_place(values: &mut [f64], q: f64) -> Result<f64> {
    let k = order_statistic_rank(q, values.len())?;
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Mean accumulated relative to the first value, so constant data give
/// that constant exactly.
pub fn mean_of(values: &[f64]) -> f64 {
    let pivot = values[0];
    pivot + values.iter().map(|v| v - pivot).sum::<f64>() / values.len() as f64
}

/// Two-pass ML variance of a slice.
pub fn variance_of(values: &[f64]) -> f64 {
    let m = mean_of(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Walks the merged quantile grid of two sorted samples and calls
/// `visit(width, a_value, b_value)` for each segment of positive width.
fn merged_quantile_segments(a: &[f64], b: &[f64], mut visit: impl FnMut(f64, f64, f64)) {
    let (m, k) = (a.len() as u128, b.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    // breakpoints (i+1)/m and (j+1)/k compared exactly as (i+1)*k vs (j+1)*m
    let mut prev = 0u128; // current level scaled by m*k
    while i < a.len() && j < b.len() {
        let next_a = (i as u128 + 1) * k;
        let next_b = (j as u128 + 1) * m;
        let next = next_a.min(next_b);
        if next > prev {
            visit((next - prev) as f64 / (m * k) as f64, a[i], b[j]);
        }
        prev = next;
        match next_a.cmp(&next_b) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
}

/// Wasserstein-1 distance `∫₀¹ |F_a⁻¹(u) − F_b⁻¹(u)| du`, exact on the merged
/// step grid.
pub fn w1_distance(a: &Sample, b: &Sample) -> f64 {
    let (sa, sb) = (a.sorted(), b.sorted());
    if sa.len() == sb.len() {
        return sa.iter().zip(sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / sa.len() as f64;
    }
    let mut total = 0.0;
    merged_quantile_segments(sa, sb, |w, x, y| total += w * (x - y).abs());
    total
}

/// Wasserstein-∞ distance: the largest quantile-function gap over the merged
/// grid of quantile levels.
pub fn winf_distance(a: &Sample, b: &Sample) -> f64 {
    let mut worst = 0.0_f64;
    merged_quantile_segments(a.sorted(), b.sorted(), |_, x, y| worst = worst.max((x - y).abs()));
    worst
}

/// The joint empirical measure `α·P_obs + (1−α)·P_sim` with `α = n/N`.
#[derive(Clone, Debug)]
pub struct MixtureMeasure {
    observed: Sample,
    simulated: Sample,
    alpha: f64,
}

impl MixtureMeasure {
    pub fn new(observed: Sample, simulated: Sample) -> Self {
        let n = observed.len();
        let total = n + simulated.len();
        MixtureMeasure { alpha: n as f64 / total as f64, observed, simulated }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn observed(&self) -> &Sample {
        &self.observed
    }

    pub fn simulated(&self) -> &Sample {
        &self.simulated
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.alpha * self.observed.ecdf(x) + (1.0 - self.alpha) * self.simulated.ecdf(x)
    }

    /// Concatenation of observed then simulated values; its equally weighted
    /// ECDF is the mixture.
    pub fn flatten(&self) -> Sample {
        let mut all = Vec::with_capacity(self.observed.len() + self.simulated.len());
        all.extend_from_slice(self.observed.values());
        all.extend_from_slice(self.simulated.values());
        Sample::new(all).expect("components are nonempty and finite")
    }
}

pub fn mixture_eval(m: &MixtureMeasure, x: f64) -> f64 {
    m.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> Sample {
        Sample::from_slice(v).unwrap()
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(s(&[1.0, 2.0, 3.0]).ecdf(2.0), 2.0 / 3.0);
        assert_eq!(s(&[5.0]).ecdf(4.9), 0.0);
        assert_eq!(s(&[0.0, 0.0, 1.0, 1.0]).ecdf(0.0), 0.5);
    }

    #[test]
    fn empty_sample_rejected() {
        assert_eq!(Sample::new(vec![]), Err(Error::EmptySample));
        assert!(matches!(Sample::new(vec![1.0, f64::NAN]), Err(Error::NonFinite { index: 1 })));
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(s(&[1.0, 2.0, 3.0, 4.0]).quantile(0.5).unwrap(), 2.0);
        assert_eq!(s(&[7.0]).quantile(0.95).unwrap(), 7.0);
        assert_eq!(s(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]).quantile(0.75).unwrap(), 5.0);
    }

    #[test]
    fn quantile_matches_brute_force_scan() {
        // smallest t in the sample with #{v ≤ t} ≥ q·m
        let data = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0, 5.0];
        let sample = s(&data);
        for step in 1..=40 {
            let q = step as f64 / 40.0;
            let brute = data
                .iter()
                .copied()
                .filter(|&t| data.iter().filter(|&&v| v <= t).count() as f64 >= q * data.len() as f64)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(sample.quantile(q).unwrap(), brute, "q={q}");
        }
    }

    #[test]
    fn quantile_level_checked() {
        let x = s(&[1.0, 2.0]);
        assert_eq!(x.quantile(0.0), Err(Error::QuantileLevel(0.0)));
        assert_eq!(x.quantile(1.5), Err(Error::QuantileLevel(1.5)));
        assert_eq!(x.quantile(1.0).unwrap(), 2.0);
    }

    #[test]
    fn in_place_quantile_agrees_with_sorted() {
        let data = [0.3, -1.2, 4.4, 4.4, 0.0, 2.5, -7.0];
        let sample = s(&data);
        for &q in &[0.01, 0.2, 0.5, 0.95, 1.0] {
            let mut buf = data.to_vec();
            assert_eq!(quantile_in_place(&mut buf, q).unwrap(), sample.quantile(q).unwrap());
        }
    }

    #[test]
    fn moments_examples() {
        let a = s(&[1.0, 1.0, 1.0]);
        assert_eq!((a.mean(), a.variance()), (1.0, 0.0));
        let b = s(&[0.0, 2.0]);
        assert_eq!((b.mean(), b.variance()), (1.0, 1.0));
        let c = s(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.mean(), 2.5);
        assert!((c.variance() - 1.25).abs() < 1e-15);
        // second accumulation order: E[x²] − mean², summed back to front
        let ex2 = [16.0, 9.0, 4.0, 1.0].iter().sum::<f64>() / 4.0;
        assert!((ex2 - 2.5 * 2.5 - 1.25).abs() < 1e-15);
    }

    #[test]
    fn w1_examples() {
        assert_eq!(w1_distance(&s(&[0.0, 1.0]), &s(&[0.0, 1.0])), 0.0);
        assert_eq!(w1_distance(&s(&[0.0]), &s(&[1.0])), 1.0);
        assert!((w1_distance(&s(&[1.0, 2.0, 3.0]), &s(&[2.0, 3.0, 4.0])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn w1_unequal_sizes_uses_merged_grid() {
        // a = {0, 1}, b = {0, 0, 3}: levels (0,1/3]:0 vs 0, (1/3,1/2]:0 vs 0,
        // (1/2,2/3]:1 vs 0, (2/3,1]:1 vs 3
        let d = w1_distance(&s(&[0.0, 1.0]), &s(&[0.0, 0.0, 3.0]));
        assert!((d - (1.0 / 6.0 + 2.0 / 3.0)).abs() < 1e-15);
        let w = winf_distance(&s(&[0.0, 1.0]), &s(&[0.0, 0.0, 3.0]));
        assert_eq!(w, 2.0);
    }

    #[test]
    fn winf_examples() {
        assert_eq!(winf_distance(&s(&[0.0, 1.0]), &s(&[0.0, 1.0])), 0.0);
        assert_eq!(winf_distance(&s(&[0.0, 10.0]), &s(&[1.0, 10.0])), 1.0);
        assert_eq!(winf_distance(&s(&[1.0, 2.0, 3.0]), &s(&[1.0, 2.0, 9.0])), 6.0);
    }

    #[test]
    fn winf_matches_grid_scan() {
        let a = s(&[1.0, 2.0, 3.0]);
        let b = s(&[1.0, 2.0, 9.0]);
        let scan = (1..=3000)
            .map(|i| {
                let u = i as f64 / 3000.0;
                (a.quantile(u).unwrap() - b.quantile(u).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        assert_eq!(winf_distance(&a, &b), scan);
    }

    #[test]
    fn mixture_examples() {
        let m = MixtureMeasure::new(s(&[0.0]), s(&[1.0]));
        assert_eq!(m.alpha(), 0.5);
        assert_eq!(m.eval(0.5), 0.5);
        let m = MixtureMeasure::new(s(&[0.0]), s(&[0.0]));
        assert_eq!(m.eval(0.0), 1.0);
        assert_eq!(m.eval(3.0), 1.0);
        let m = MixtureMeasure::new(s(&[1.0, 3.0]), s(&[2.0, 4.0, 6.0, 8.0, 10.0, 12.0]));
        assert_eq!(m.flatten().ecdf(4.0), 0.5);
        assert!((m.eval(4.0) - 0.5).abs() < 1e-15);
    }

    fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 1..max_len)
    }

    proptest! {
        #[test]
        fn quantile_ecdf_galois(v in finite_vec(40), q in 0.001f64..=1.0) {
            let s = Sample::new(v).unwrap();
            let t = s.quantile(q).unwrap();
            prop_assert!(s.ecdf(t) >= q);
            // just left of t the ECDF is strictly below q
            let left = s.sorted().partition_point(|&x| x < t) as f64 / s.len() as f64;
            prop_assert!(left < q);
        }

        #[test]
        fn w1_metric_properties(a in finite_vec(12), b in finite_vec(12), c in finite_vec(12)) {
            let (a, b, c) = (Sample::new(a).unwrap(), Sample::new(b).unwrap(), Sample::new(c).unwrap());
            prop_assert_eq!(w1_distance(&a, &b), w1_distance(&b, &a));
            prop_assert!(w1_distance(&a, &c) <= w1_distance(&a, &b) + w1_distance(&b, &c) + 1e-12 * 1e3);
            prop_assert!(w1_distance(&a, &b) >= 0.0);
            prop_assert_eq!(w1_distance(&a, &a), 0.0);
            if w1_distance(&a, &b) == 0.0 && a.len() == b.len() {
                prop_assert_eq!(a.sorted(), b.sorted());
            }
        }

        #[test]
        fn w1_equal_size_is_paired_order_statistics(
            pairs in prop::collection::vec((-50f64..50.0, -50f64..50.0), 1..30)
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (a, b) = (Sample::new(a).unwrap(), Sample::new(b).unwrap());
            let direct = a.sorted().iter().zip(b.sorted()).map(|(x, y)| (x - y).abs()).sum::<f64>()
                / a.len() as f64;
            // the merged-grid walk must agree with the paired formula
            let mut walked = 0.0;
            merged_quantile_segments(a.sorted(), b.sorted(), |w, x, y| walked += w * (x - y).abs());
            prop_assert!((w1_distance(&a, &b) - direct).abs() <= 1e-12 * (1.0 + direct));
            prop_assert!((walked - direct).abs() <= 1e-12 * (1.0 + direct));
        }

        #[test]
        fn mixture_agrees_with_flattened(obs in finite_vec(10), sim in finite_vec(30)) {
            let m = MixtureMeasure::new(Sample::new(obs).unwrap(), Sample::new(sim).unwrap());
            let flat = m.flatten();
            for &x in flat.sorted() {
                prop_assert!((m.eval(x) - flat.ecdf(x)).abs() < 1e-14);
            }
        }

        #[test]
        fn variance_nonnegative_and_zero_iff_constant(v in finite_vec(20)) {
            let s = Sample::new(v).unwrap();
            prop_assert!(s.variance() >= 0.0);
            let constant = s.sorted().first() == s.sorted().last();
            if constant {
                prop_assert_eq!(s.variance(), 0.0);
            } else {
                prop_assert!(s.variance() > 0.0);
            }
        }
    }
}
