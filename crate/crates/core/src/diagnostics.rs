//! Posterior predictive checks of the predictive engine (PPC-PE).
//!
//! A test function is evaluated on the observed sample and on replicates of
//! the same size simulated from the fitted engine. The predictive p-value
//! locates the observed statistic within the replicate distribution. Each
//! replicate path is run further, to `N_n = ⌈n^{3/2}⌉` draws, and the
//! augmented measure gives the difference statistic
//! `Δ = √n·{S(P_{n,N_n}) − S(P_n)}`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::engines::EngineFactory;
use crate::measures::{mean_of, quantile_in_place, w1_distance, Sample};
use crate::par;
use crate::resampler::{run_lanes, HorizonRule};
use crate::rng::StreamKey;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Bandwidth {
    /// Median pairwise distance on the pooled sample.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TestFunction {
    SampleVariance,
    SampleSkewness,
    /// `Σ(y−μ)²/σ²`; with `fit = None` the moments of the sample itself.
    Chi2 { fit: Option<(f64, f64)> },
    /// Quantile at `level` of `|y − center|`; the sample mean when `center`
    /// is `None`.
    TailAbsResidual { level: f64, center: Option<f64> },
    Mmd(Bandwidth),
    Wasserstein1,
}

impl TestFunction {
    pub const TAIL_DEFAULT: TestFunction = TestFunction::TailAbsResidual { level: 0.995, center: None };

    pub fn is_two_sample(&self) -> bool {
        matches!(self, TestFunction::Mmd(_) | TestFunction::Wasserstein1)
    }

    /// Sidedness used by default: nonnegative discrepancies get the
    /// one-sided p-value.
    pub fn default_sided(&self) -> Sided {
        match self {
            TestFunction::SampleVariance | TestFunction::SampleSkewness => Sided::Two,
            _ => Sided::One,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::SampleVariance => "variance",
            TestFunction::SampleSkewness => "skewness",
            TestFunction::Chi2 { .. } => "chi2",
            TestFunction::TailAbsResidual { .. } => "tail",
            TestFunction::Mmd(_) => "mmd",
            TestFunction::Wasserstein1 => "wasserstein1",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TestFunction::TailAbsResidual { level, .. } => format!("tail({level})"),
            TestFunction::Mmd(Bandwidth::Fixed(h)) => format!("mmd({h})"),
            other => String::from(other.name()),
        }
    }
}

/// Evaluates a test function. Two-sample kinds compare `s` against
/// `reference`.
pub fn test_stat(tf: &TestFunction, s: &Sample, reference: Option<&Sample>) -> Result<f64> {
    match *tf {
        TestFunction::Mmd(bw) => {
            let r = reference.ok_or(Error::MissingReference("mmd"))?;
            Ok(mmd2(s.values(), r.values(), bw))
        }
        TestFunction::Wasserstein1 => {
            let r = reference.ok_or(Error::MissingReference("wasserstein1"))?;
            Ok(w1_distance(s, r))
        }
        _ => one_sample_stat(tf, &mut s.values().to_vec()),
    }
}

/// One-sample statistics on a scratch buffer (may be reordered).
fn one_sample_stat(tf: &TestFunction, buf: &mut [f64]) -> Result<f64> {
    if buf.is_empty() {
        return Err(Error::EmptySample);
    }
    match *tf {
        TestFunction::SampleVariance => {
            let (_, m2, _) = central_moments(buf);
            Ok(m2)
        }
        TestFunction::SampleSkewness => {
            if buf.len() < 3 {
                return Err(Error::invalid("skewness needs at least 3 observations"));
            }
            let (_, m2, m3) = central_moments(buf);
            Ok(if m2 > 0.0 { m3 / (m2 * libm::sqrt(m2)) } else { 0.0 })
        }
        TestFunction::Chi2 { fit } => {
            let (mu, var) = match fit {
                Some(f) => f,
                None => {
                    let (m, m2, _) = central_moments(buf);
                    (m, m2)
                }
            };
            if !(var > 0.0) {
                return Err(Error::invalid("chi-square statistic needs a positive variance"));
            }
            Ok(buf.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>() / var)
        }
        TestFunction::TailAbsResidual { level, center } => {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::QuantileLevel(level));
            }
            let c = center.unwrap_or_else(|| mean_of(buf));
            for y in buf.iter_mut() {
                *y = (*y - c).abs();
            }
            quantile_in_place(buf, level)
        }
        TestFunction::Mmd(_) => Err(Error::MissingReference("mmd")),
        TestFunction::Wasserstein1 => Err(Error::MissingReference("wasserstein1")),
    }
}

/// `(mean, m₂, m₃)` with ML normalisation.
fn central_moments(values: &[f64]) -> (f64, f64, f64) {
    let m = mean_of(values);
    let k = values.len() as f64;
    let (mut m2, mut m3) = (0.0, 0.0);
    for v in values {
        let d = v - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    (m, m2 / k, m3 / k)
}

/// Largest pooled sample used for the median-heuristic bandwidth; bigger
/// pools are thinned by a fixed stride.
const BANDWIDTH_POOL: usize = 1000;

fn median_heuristic(x: &[f64], y: &[f64]) -> f64 {
    let total = x.len() + y.len();
    let stride = total.div_ceil(BANDWIDTH_POOL).max(1);
    let pooled: Vec<f64> = x.iter().chain(y).step_by(stride).copied().collect();
    let mut dists = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            dists.push((pooled[i] - pooled[j]).abs());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let h = quantile_in_place(&mut dists, 0.5).unwrap_or(1.0);
    if h > 0.0 {
        h
    } else {
        1.0
    }
}

fn kernel_mean(a: &[f64], b: &[f64], inv_two_h2: f64) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            let d = x - y;
            total += libm::exp(-d * d * inv_two_h2);
        }
    }
    total / (a.len() as f64 * b.len() as f64)
}

/// `kernel_mean(a, a, ·)` over the upper triangle.
fn kernel_self_mean(a: &[f64], inv_two_h2: f64) -> f64 {
    let mut off = 0.0;
    for (i, x) in a.iter().enumerate() {
        for y in &a[i + 1..] {
            let d = x - y;
            off += libm::exp(-d * d * inv_two_h2);
        }
    }
    let m = a.len() as f64;
    (m + 2.0 * off) / (m * m)
}

fn mmd2_parts(x: &[f64], y: &[f64], h: f64, y_self: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    let g = 1.0 / (2.0 * h * h);
    (kernel_self_mean(x, g) + y_self - 2.0 * kernel_mean(x, y, g)).max(0.0)
}

/// Squared MMD, biased V-statistic with a Gaussian kernel.
pub fn mmd2(x: &[f64], y: &[f64], bandwidth: Bandwidth) -> f64 {
    let h = match bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::MedianHeuristic => median_heuristic(x, y),
    };
    mmd2_parts(x, y, h, kernel_self_mean(y, 1.0 / (2.0 * h * h)))
}

/// `test_stat` with the reference half of a fixed-bandwidth MMD computed
/// once.
struct BoundStat {
    tf: TestFunction,
    reference_self: Option<f64>,
}

impl BoundStat {
    fn new(tf: TestFunction, reference: Option<&Sample>) -> Self {
        let reference_self = match (tf, reference) {
            (TestFunction::Mmd(Bandwidth::Fixed(h)), Some(r)) => Some(kernel_self_mean(r.values(), 1.0 / (2.0 * h * h))),
            _ => None,
        };
        BoundStat { tf, reference_self }
    }

    fn eval(&self, s: &Sample, reference: Option<&Sample>) -> Result<f64> {
        match (self.tf, self.reference_self, reference) {
            (TestFunction::Mmd(Bandwidth::Fixed(h)), Some(y_self), Some(r)) => Ok(mmd2_parts(s.values(), r.values(), h, y_self)),
            _ => test_stat(&self.tf, s, reference),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TieRule {
    /// `u = #{S_rep ≥ S_obs}/B`
    #[default]
    GreaterEqual,
    /// Ties count one half.
    Midrank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Sided {
    One,
    Two,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PpcReport {
    pub test_function: String,
    pub n: usize,
    /// Number of draws beyond `n` used for the difference statistics.
    pub horizon: usize,
    pub s_obs: f64,
    pub s_rep: Vec<f64>,
    pub u: f64,
    pub p: f64,
    pub deltas: Vec<f64>,
    pub sided: Sided,
    pub tie_rule: TieRule,
}

impl PpcReport {
    /// Assembles `u` and `p` from observed and replicate statistics.
    pub fn from_stats(test_function: String, n: usize, horizon: usize, s_obs: f64, s_rep: Vec<f64>, deltas: Vec<f64>, sided: Sided, tie_rule: TieRule) -> Self {
        let u = upper_fraction(s_obs, &s_rep, tie_rule);
        let p = match sided {
            Sided::Two => two_sided(u),
            Sided::One => one_sided(u),
        };
        PpcReport { test_function, n, horizon, s_obs, s_rep, u, p, deltas, sided, tie_rule }
    }

    pub fn mean_delta(&self) -> f64 {
        if self.deltas.is_empty() {
            0.0
        } else {
            self.deltas.iter().sum::<f64>() / self.deltas.len() as f64
        }
    }
}

pub fn upper_fraction(s_obs: f64, s_rep: &[f64], tie: TieRule) -> f64 {
    let above = s_rep.iter().filter(|&&s| s > s_obs).count() as f64;
    let ties = s_rep.iter().filter(|&&s| s == s_obs).count() as f64;
    let hits = match tie {
        TieRule::GreaterEqual => above + ties,
        TieRule::Midrank => above + 0.5 * ties,
    };
    hits / s_rep.len() as f64
}

fn two_sided(u: f64) -> f64 {
    (2.0 * u.min(1.0 - u)).clamp(0.0, 1.0)
}

fn one_sided(u: f64) -> f64 {
    u.min(1.0 - u).clamp(0.0, 1.0)
}

/// One-sided p-value `min(u, 1−u)`.
pub fn one_sided_p(report: &PpcReport) -> Result<f64> {
    if report.sided != Sided::One {
        return Err(Error::invalid("report is two-sided"));
    }
    Ok(one_sided(report.u))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpcOptions {
    pub replicates: usize,
    /// Horizon of the difference statistics, counted beyond `n`.
    pub delta_horizon: HorizonRule,
    pub tie_rule: TieRule,
    /// Overrides each test function's default sidedness.
    pub sided: Option<Sided>,
    /// Size of the engine sample standing in for `F_n` in two-sample tests,
    /// as a multiple of `n`.
    pub reference_factor: usize,
}

impl Default for PpcOptions {
    fn default() -> Self {
        PpcOptions { replicates: 100, delta_horizon: HorizonRule::Power(1.5), tie_rule: TieRule::GreaterEqual, sided: None, reference_factor: 10 }
    }
}

/// Fixes the parts of a test function that depend on the observed data:
/// the chi-square fit and the tail centre come from `x_obs`, and a
/// median-heuristic bandwidth is computed once from `x_obs` and the
/// reference.
fn bind_to_observed(tf: &TestFunction, x_obs: &Sample, reference: Option<&Sample>) -> TestFunction {
    match *tf {
        TestFunction::Mmd(Bandwidth::MedianHeuristic) => match reference {
            Some(r) => TestFunction::Mmd(Bandwidth::Fixed(median_heuristic(x_obs.values(), r.values()))),
            None => *tf,
        },
        TestFunction::Chi2 { fit: None } => TestFunction::Chi2 { fit: Some((x_obs.mean(), x_obs.variance())) },
        TestFunction::TailAbsResidual { level, center: None } => TestFunction::TailAbsResidual { level, center: Some(x_obs.mean()) },
        other => other,
    }
}

/// PPC-PE for one test function.
pub fn ppc_replicates<F: EngineFactory>(x_obs: &Sample, factory: &F, tf: &TestFunction, opts: &PpcOptions, key: StreamKey) -> Result<PpcReport> {
    Ok(ppc_replicates_multi(x_obs, factory, core::slice::from_ref(tf), opts, key)?.remove(0))
}

/// PPC-PE for several test functions sharing the same replicate paths.
pub fn ppc_replicates_multi<F: EngineFactory>(x_obs: &Sample, factory: &F, tfs: &[TestFunction], opts: &PpcOptions, key: StreamKey) -> Result<Vec<PpcReport>> {
    let n = x_obs.len();
    if opts.replicates < 20 {
        return Err(Error::invalid(format!("need at least 20 replicates (got {})", opts.replicates)));
    }
    let extra = opts.delta_horizon.horizon(n)?.max(n);
    let template = factory.build(x_obs)?;
    let reference = if tfs.iter().any(TestFunction::is_two_sample) {
        let size = (opts.reference_factor * n).max(n + 1);
        let buf = run_lanes(&template, x_obs.values(), size - n, &[key.named("reference")]).remove(0);
        Some(Sample::new(buf)?)
    } else {
        None
    };
    let bound: Vec<BoundStat> = tfs.iter().map(|tf| BoundStat::new(bind_to_observed(tf, x_obs, reference.as_ref()), reference.as_ref())).collect();
    let s_obs: Vec<f64> = bound.iter().map(|b| b.eval(x_obs, reference.as_ref())).collect::<Result<_>>()?;

    const LANES: usize = 4;
    let groups = opts.replicates.div_ceil(LANES);
    let per_group = par::try_map_indexed(groups, |g| {
        let keys: Vec<StreamKey> = (g * LANES..((g + 1) * LANES).min(opts.replicates)).map(|b| key.child(b as u64)).collect();
        run_lanes(&template, x_obs.values(), extra, &keys)
            .into_iter()
            .map(|buf| {
                let replicate = Sample::from_slice(&buf[n..2 * n])?;
                let augmented = Sample::new(buf)?;
                bound
                    .iter()
                    .map(|b| {
                        let rep = b.eval(&replicate, reference.as_ref())?;
                        let aug = b.eval(&augmented, reference.as_ref())?;
                        Ok((rep, aug))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let per_path: Vec<Vec<(f64, f64)>> = per_group.into_iter().flatten().collect();
    let root_n = libm::sqrt(n as f64);
    Ok(bound
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let s_rep = per_path.iter().map(|v| v[j].0).collect();
            let deltas = per_path.iter().map(|v| root_n * (v[j].1 - s_obs[j])).collect();
            let sided = opts.sided.unwrap_or(b.tf.default_sided());
            PpcReport::from_stats(tfs[j].describe(), n, extra, s_obs[j], s_rep, deltas, sided, opts.tie_rule)
        })
        .collect())
}
