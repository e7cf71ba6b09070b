//! Predictive resampling: forward paths, posterior draws of functionals and
//! equal-tailed credible intervals.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::engines::{EngineFactory, PredictiveEngine};
use crate::functionals::FunctionalSpec;
use crate::measures::{order_statistic_rank, Sample};
use crate::par;
use crate::rng::{PathRng, StreamKey};
use crate::{Error, Result};

/// Total size `N` of the augmented sample as a function of `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HorizonRule {
    Fixed(usize),
    /// `N = ⌈n^e⌉`
    Power(f64),
    /// `N = n + k`
    Offset(usize),
}

impl Default for HorizonRule {
    fn default() -> Self {
        HorizonRule::Power(1.5)
    }
}

impl HorizonRule {
    pub fn horizon(&self, n: usize) -> Result<usize> {
        let big_n = match *self {
            HorizonRule::Fixed(big_n) => big_n,
            HorizonRule::Power(e) => {
                if !(e > 1.0) {
                    return Err(Error::invalid(format!("horizon exponent must exceed 1 (got {e})")));
                }
                libm::ceil(libm::pow(n as f64, e)) as usize
            }
            HorizonRule::Offset(k) => n + k,
        };
        if big_n <= n {
            return Err(Error::invalid(format!("horizon N = {big_n} must exceed n = {n}")));
        }
        Ok(big_n)
    }

    pub fn describe(&self) -> String {
        match self {
            HorizonRule::Fixed(n) => format!("fixed({n})"),
            HorizonRule::Power(e) => format!("power({e})"),
            HorizonRule::Offset(k) => format!("offset({k})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResampleConfig {
    pub horizon: HorizonRule,
    pub paths: usize,
    /// Path `b` draws from `stream.child(b)`.
    pub stream: StreamKey,
}

impl ResampleConfig {
    pub fn new(horizon: HorizonRule, paths: usize, seed: u64) -> Self {
        ResampleConfig { horizon, paths, stream: StreamKey::new(seed) }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PbpMeta {
    pub n: usize,
    pub horizon: usize,
    pub engine: String,
    pub functional: String,
    pub stream: u64,
}

/// Posterior draws: one functional value (vector) per path, in path order.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PbpDraws {
    pub values: Vec<Vec<f64>>,
    pub meta: PbpMeta,
}

impl PbpDraws {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The `j`-th coordinate across all paths.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[j]).collect()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Alternates draw and update `n_steps` times and returns the draws.
pub fn run_path<E: PredictiveEngine + ?Sized>(engine: &mut E, n_steps: usize, rng: &mut PathRng) -> Result<Sample> {
    if n_steps == 0 {
        return Err(Error::invalid("a path needs at least one step"));
    }
    let mut out = Vec::with_capacity(n_steps);
    extend_path(engine, n_steps, rng, &mut out);
    Sample::new(out)
}

/// Appends `n_steps` draws to `buf`.
pub fn extend_path<E: PredictiveEngine + ?Sized>(engine: &mut E, n_steps: usize, rng: &mut PathRng, buf: &mut Vec<f64>) {
    buf.reserve(n_steps);
    for _ in 0..n_steps {
        buf.push(engine.step(rng));
    }
}

pub fn pbp_sample<F: EngineFactory>(x_obs: &Sample, factory: &F, f: FunctionalSpec, cfg: &ResampleConfig) -> Result<PbpDraws> {
    let mut out = pbp_sample_multi(x_obs, factory, &[f], cfg)?;
    Ok(out.remove(0))
}

/// Several functionals evaluated on the same paths.
pub fn pbp_sample_multi<F: EngineFactory>(x_obs: &Sample, factory: &F, fs: &[FunctionalSpec], cfg: &ResampleConfig) -> Result<Vec<PbpDraws>> {
    let keys: Vec<StreamKey> = (0..cfg.paths as u64).map(|b| cfg.stream.child(b)).collect();
    pbp_sample_keys(x_obs, factory, fs, cfg.horizon.horizon(x_obs.len())?, &keys)
        .map(|mut d| {
            for draws in &mut d {
                draws.meta.stream = cfg.stream.raw();
            }
            d
        })
}

/// Path `b` uses `keys[b]`; the horizon `N` is the total augmented size.
pub fn pbp_sample_keys<F: EngineFactory>(x_obs: &Sample, factory: &F, fs: &[FunctionalSpec], horizon: usize, keys: &[StreamKey]) -> Result<Vec<PbpDraws>> {
    let n = x_obs.len();
    if n < 2 {
        return Err(Error::TooFewObservations(n));
    }
    if keys.is_empty() {
        return Err(Error::invalid("need at least one path"));
    }
    if horizon <= n {
        return Err(Error::invalid(format!("horizon N = {horizon} must exceed n = {n}")));
    }
    let template = factory.build(x_obs)?;
    let groups = keys.len().div_ceil(LANES);
    let per_group = par::try_map_indexed(groups, |g| {
        let lanes = &keys[g * LANES..((g + 1) * LANES).min(keys.len())];
        let bufs = run_lanes(&template, x_obs.values(), horizon - n, lanes);
        bufs.into_iter()
            .map(|mut buf| fs.iter().map(|f| f.evaluate_buffer(&mut buf)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
    })?;
    let per_path: Vec<Vec<Vec<f64>>> = per_group.into_iter().flatten().collect();
    Ok(fs
        .iter()
        .enumerate()
        .map(|(j, f)| PbpDraws {
            values: per_path.iter().map(|v| v[j].clone()).collect(),
            meta: PbpMeta { n, horizon, engine: factory.describe(), functional: f.describe(), stream: 0 },
        })
        .collect())
}

/// Paths advanced in lockstep by one worker. Each lane keeps its own engine
/// and generator, so lane results equal those of a lone path; interleaving
/// only hides the latency of the per-step dependency chain.
const LANES: usize = 4;

/// Runs one path per key from clones of `template`; each returned buffer is
/// `prefix` followed by `steps` draws.
pub(crate) fn run_lanes<E: PredictiveEngine + Clone>(template: &E, prefix: &[f64], steps: usize, keys: &[StreamKey]) -> Vec<Vec<f64>> {
    let mut engines: Vec<E> = keys.iter().map(|_| template.clone()).collect();
    let mut rngs: Vec<PathRng> = keys.iter().map(|k| k.rng()).collect();
    let mut bufs: Vec<Vec<f64>> = keys
        .iter()
        .map(|_| {
            let mut b = Vec::with_capacity(prefix.len() + steps);
            b.extend_from_slice(prefix);
            b
        })
        .collect();
    if keys.len() == LANES {
        let (e, r, b) = (&mut engines[..LANES], &mut rngs[..LANES], &mut bufs[..LANES]);
        for _ in 0..steps {
            for l in 0..LANES {
                let z = e[l].step(&mut r[l]);
                b[l].push(z);
            }
        }
    } else {
        for ((e, r), b) in engines.iter_mut().zip(&mut rngs).zip(&mut bufs) {
            extend_path(e, steps, r, b);
        }
    }
    bufs
}

/// Smallest number of draws accepted for a `1−α` interval: `⌈2/α⌉`, so that
/// each tail holds at least one draw.
pub fn min_draws(alpha: f64) -> usize {
    libm::ceil(2.0 / alpha - 1e-9) as usize
}

/// Equal-tailed interval per coordinate from order statistics
/// `⌈(α/2)B⌉` and `⌈(1−α/2)B⌉`.
pub fn credible_interval(d: &PbpDraws, alpha: f64) -> Result<Vec<(f64, f64)>> {
    (0..d.dim()).map(|j| credible_interval_of(&d.coordinate(j), alpha)).collect()
}

pub fn credible_interval_of(draws: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1) (got {alpha})")));
    }
    let need = min_draws(alpha);
    if draws.len() < need {
        return Err(Error::InsufficientDraws { have: draws.len(), need });
    }
    let mut sorted = draws.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let lo = order_statistic_rank(alpha / 2.0, sorted.len())?;
    let hi = order_statistic_rank(1.0 - alpha / 2.0, sorted.len())?;
    Ok((sorted[lo - 1], sorted[hi - 1]))
}

/// Closed-interval membership.
pub fn covers(ci: (f64, f64), truth: f64) -> bool {
    ci.0 <= truth && truth <= ci.1
}
