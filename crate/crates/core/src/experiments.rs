//! Monte Carlo harness: data-generating processes, repeated-experiment
//! loops and long-format summaries.
//!
//! Every loop addresses its randomness through the stream tree
//! `master → experiment → cell → replicate → path`, so a rerun with the same
//! seed reproduces every number regardless of thread count. Datasets depend
//! only on `(dgp, n, replicate)`, which means all engine configurations in a
//! study are compared on the same data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, Gamma, Normal, StandardNormal, StudentT};

use crate::diagnostics::{ppc_replicates_multi, test_stat, PpcOptions, PpcReport, Sided, TestFunction, TieRule};
use crate::engines::{
    gauss_reg_init, gaussian_init, hybrid_finalize, FixedScaleFactory, reg_step, treg_init, tv_probe, BiasSchedule, CovariateResampler, EngineFactory,
    GaussianEngine, GaussianFactory, PredictiveEngine, QuadratureSpec, RegressionEngine, TMleOptions, TailCorrection,
};
use crate::functionals::{coverage_limit, quantile_asymptotic_var, FunctionalSpec};
use crate::measures::{mean_of, quantile_in_place, variance_of, Sample};
use crate::par;
use crate::resampler::{credible_interval_of, covers, pbp_sample_multi, HorizonRule, ResampleConfig};
use crate::rng::{PathRng, StreamKey};
use crate::special::{gamma_quantile, norm_pdf, norm_quantile, normal_density};
use crate::{Error, Matrix, Result};

/// Data-generating process.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Dgp {
    Normal { mean: f64, var: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl Dgp {
    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) || !mean.is_finite() {
            return Err(Error::invalid(format!("invalid normal parameters ({mean}, {var})")));
        }
        Ok(Dgp::Normal { mean, var })
    }

    pub fn standard_normal() -> Self {
        Dgp::Normal { mean: 0.0, var: 1.0 }
    }

    pub fn gamma_rate(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::invalid(format!("gamma shape and rate must be positive ({shape}, {rate})")));
        }
        Ok(Dgp::Gamma { shape, rate })
    }

    pub fn gamma_scale(shape: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::invalid(format!("gamma scale must be positive ({scale})")));
        }
        Self::gamma_rate(shape, 1.0 / scale)
    }

    pub fn describe(&self) -> String {
        match self {
            Dgp::Normal { mean, var } => format!("normal({mean},{var})"),
            Dgp::Gamma { shape, rate } => format!("gamma({shape},rate={rate})"),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut PathRng) -> Vec<f64> {
        match *self {
            Dgp::Normal { mean, var } => {
                let d = Normal::new(mean, libm::sqrt(var)).expect("validated parameters");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Dgp::Gamma { shape, rate } => {
                let d = Gamma::new(shape, 1.0 / rate).expect("validated parameters");
                (0..n).map(|_| d.sample(rng)).collect()
            }
        }
    }

    pub fn true_mean(&self) -> f64 {
        match *self {
            Dgp::Normal { mean, .. } => mean,
            Dgp::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn true_variance(&self) -> f64 {
        match *self {
            Dgp::Normal { var, .. } => var,
            Dgp::Gamma { shape, rate } => shape / (rate * rate),
        }
    }

    pub fn true_quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::QuantileLevel(q));
        }
        match *self {
            Dgp::Normal { mean, var } => Ok(mean + libm::sqrt(var) * norm_quantile(q)),
            Dgp::Gamma { shape, rate } => gamma_quantile(shape, rate, q),
        }
    }

    pub fn true_density_at(&self, x: f64) -> f64 {
        match *self {
            Dgp::Normal { mean, var } => normal_density(x, mean, var),
            Dgp::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return 0.0;
                }
                libm::exp(shape * libm::log(rate) + (shape - 1.0) * libm::log(x) - rate * x - libm::lgamma(shape))
            }
        }
    }
}

/// One cell value in long format.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryRow {
    pub dgp: String,
    pub n: usize,
    /// Engine, bias or test-function configuration.
    pub config: String,
    /// Functional or statistic the metric refers to.
    pub target: String,
    pub metric: String,
    pub estimate: f64,
    pub mc_se: f64,
    /// Outer replications `R`.
    pub reps: usize,
    /// Paths or replicates per replication `B`.
    pub paths: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentSummary {
    pub rows: Vec<SummaryRow>,
}

impl ExperimentSummary {
    pub fn get(&self, dgp: &str, n: usize, config: &str, target: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.dgp == dgp && r.n == n && r.config == config && r.target == target && r.metric == metric)
    }

    pub fn extend(&mut self, other: ExperimentSummary) {
        self.rows.extend(other.rows);
    }
}

struct CellKey<'a> {
    dgp: &'a str,
    n: usize,
    config: &'a str,
    target: &'a str,
    reps: usize,
    paths: usize,
}

impl CellKey<'_> {
    fn row(&self, metric: &str, estimate: f64, mc_se: f64) -> SummaryRow {
        SummaryRow {
            dgp: String::from(self.dgp),
            n: self.n,
            config: String::from(self.config),
            target: String::from(self.target),
            metric: String::from(metric),
            estimate,
            mc_se,
            reps: self.reps,
            paths: self.paths,
        }
    }
}

fn proportion_se(c: f64, reps: usize) -> f64 {
    libm::sqrt(c * (1.0 - c) / reps as f64)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.len() < 2 {
        return (values.first().copied().unwrap_or(0.0), 0.0);
    }
    let m = mean_of(values);
    let k = values.len() as f64;
    let var = variance_of(values) * k / (k - 1.0);
    (m, libm::sqrt(var / k))
}

/// Sample median with a distribution-free standard error from the order
/// statistics at ranks `R/2 ± √R/2`.
fn median_and_se(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let k = sorted.len();
    let med = quantile_in_place(&mut sorted.clone(), 0.5).unwrap_or(0.0);
    let half = libm::sqrt(k as f64) / 2.0;
    let lo = (libm::floor(k as f64 / 2.0 - half).max(0.0)) as usize;
    let hi = (libm::ceil(k as f64 / 2.0 + half) as usize).min(k - 1);
    (med, (sorted[hi] - sorted[lo]) / 2.0)
}

fn dataset_key(root: StreamKey, dgp: &Dgp, n: usize, r: usize) -> StreamKey {
    root.named(&dgp.describe()).child(n as u64).child(r as u64)
}

fn dataset(dgp: &Dgp, key: StreamKey, n: usize) -> Result<Sample> {
    Sample::new(dgp.sample(n, &mut key.named("data").rng()))
}

/// Settings shared by the coverage studies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageOptions {
    pub reps: usize,
    pub paths: usize,
    pub alpha: f64,
    pub horizon: HorizonRule,
    pub seed: u64,
}

impl CoverageOptions {
    fn check(&self, min_reps: usize) -> Result<()> {
        if self.reps < min_reps {
            return Err(Error::invalid(format!("need at least {min_reps} replications (got {})", self.reps)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1) (got {})", self.alpha)));
        }
        Ok(())
    }
}

/// Smallest number of outer replications accepted by the coverage and
/// predictive-check studies.
pub const MIN_REPS: usize = 100;

/// Coverage of the PBP interval for the mean, one cell per
/// `(n, engine)` pair. Emits `coverage`, `width` and `bias` (mean posterior
/// draw minus truth).
pub fn run_mean_coverage<F: EngineFactory>(dgp: &Dgp, n_list: &[usize], engines: &[(String, F)], opts: &CoverageOptions) -> Result<ExperimentSummary> {
    opts.check(MIN_REPS)?;
    let root = StreamKey::new(opts.seed).named("mean_coverage");
    let truth = dgp.true_mean();
    let dgp_name = dgp.describe();
    let mut summary = ExperimentSummary::default();
    for &n in n_list {
        for (label, factory) in engines {
            let outcomes = par::try_map_indexed(opts.reps, |r| {
                let key = dataset_key(root, dgp, n, r);
                let x = dataset(dgp, key, n)?;
                let cfg = ResampleConfig { horizon: opts.horizon, paths: opts.paths, stream: key.named(label) };
                let draws = pbp_sample_multi(&x, factory, &[FunctionalSpec::Mean], &cfg)?.remove(0).coordinate(0);
                let ci = credible_interval_of(&draws, opts.alpha)?;
                Ok::<_, Error>((covers(ci, truth), ci.1 - ci.0, mean_of(&draws) - truth))
            })?;
            let cell = CellKey { dgp: &dgp_name, n, config: label, target: "mean", reps: opts.reps, paths: opts.paths };
            push_interval_rows(&mut summary, &cell, &outcomes);
        }
    }
    Ok(summary)
}

fn push_interval_rows(summary: &mut ExperimentSummary, cell: &CellKey<'_>, outcomes: &[(bool, f64, f64)]) {
    let reps = outcomes.len();
    let coverage = outcomes.iter().filter(|o| o.0).count() as f64 / reps as f64;
    let (width, width_se) = mean_and_se(&outcomes.iter().map(|o| o.1).collect::<Vec<_>>());
    let (bias, bias_se) = mean_and_se(&outcomes.iter().map(|o| o.2).collect::<Vec<_>>());
    summary.rows.push(cell.row("coverage", coverage, proportion_se(coverage, reps)));
    summary.rows.push(cell.row("width", width, width_se));
    summary.rows.push(cell.row("bias", bias, bias_se));
}

/// Coverage and bias of the Gaussian-engine quantile posterior, all levels
/// evaluated on the same paths. Config label is `gpe`.
pub fn run_quantile_coverage(dgp: &Dgp, n_list: &[usize], q_list: &[f64], opts: &CoverageOptions) -> Result<ExperimentSummary> {
    opts.check(MIN_REPS)?;
    let fs: Vec<FunctionalSpec> = q_list.iter().map(|&q| FunctionalSpec::quantile(q)).collect::<Result<_>>()?;
    let truths: Vec<f64> = q_list.iter().map(|&q| dgp.true_quantile(q)).collect::<Result<_>>()?;
    let root = StreamKey::new(opts.seed).named("quantile_coverage");
    let dgp_name = dgp.describe();
    let factory = GaussianFactory::default();
    let mut summary = ExperimentSummary::default();
    for &n in n_list {
        let outcomes = par::try_map_indexed(opts.reps, |r| {
            let key = dataset_key(root, dgp, n, r);
            let x = dataset(dgp, key, n)?;
            let cfg = ResampleConfig { horizon: opts.horizon, paths: opts.paths, stream: key.named("gpe") };
            let draws = pbp_sample_multi(&x, &factory, &fs, &cfg)?;
            draws
                .iter()
                .zip(&truths)
                .map(|(d, &truth)| {
                    let v = d.coordinate(0);
                    let ci = credible_interval_of(&v, opts.alpha)?;
                    Ok((covers(ci, truth), ci.1 - ci.0, mean_of(&v) - truth))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (j, q) in q_list.iter().enumerate() {
            let target = format!("quantile({q})");
            let cell = CellKey { dgp: &dgp_name, n, config: "gpe", target: &target, reps: opts.reps, paths: opts.paths };
            let column: Vec<_> = outcomes.iter().map(|o| o[j]).collect();
            push_interval_rows(&mut summary, &cell, &column);
        }
    }
    Ok(summary)
}

/// Repeated-sample PPC-PE with the Gaussian engine. Emits `median_p`,
/// `rejection_rate` (p < 0.05) and `avg_diff` per test function.
pub fn run_ppc_study(dgp: &Dgp, n_list: &[usize], tfs: &[TestFunction], reps: usize, ppc: &PpcOptions, seed: u64) -> Result<ExperimentSummary> {
    if reps < MIN_REPS || ppc.replicates < MIN_REPS {
        return Err(Error::invalid(format!("need R ≥ {MIN_REPS} and B ≥ {MIN_REPS} (got {reps}, {})", ppc.replicates)));
    }
    let root = StreamKey::new(seed).named("ppc_study");
    let dgp_name = dgp.describe();
    let factory = GaussianFactory::default();
    let mut summary = ExperimentSummary::default();
    for &n in n_list {
        let reports = par::try_map_indexed(reps, |r| {
            let key = dataset_key(root, dgp, n, r);
            let x = dataset(dgp, key, n)?;
            ppc_replicates_multi(&x, &factory, tfs, ppc, key.named("ppc"))
        })?;
        for (j, tf) in tfs.iter().enumerate() {
            let target = tf.describe();
            let cell = CellKey { dgp: &dgp_name, n, config: "gpe", target: &target, reps, paths: ppc.replicates };
            let ps: Vec<f64> = reports.iter().map(|rep| rep[j].p).collect();
            let (median_p, median_se) = median_and_se(&ps);
            let rate = ps.iter().filter(|&&p| p < 0.05).count() as f64 / reps as f64;
            let (avg_diff, diff_se) = mean_and_se(&reports.iter().map(|rep| rep[j].mean_delta()).collect::<Vec<_>>());
            summary.rows.push(cell.row("median_p", median_p, median_se));
            summary.rows.push(cell.row("rejection_rate", rate, proportion_se(rate, reps)));
            summary.rows.push(cell.row("avg_diff", avg_diff, diff_se));
        }
    }
    Ok(summary)
}

/// Bahadur check: `n·Var` of the PBP quantile draws next to the candidate
/// limits.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BahadurCheck {
    pub n: usize,
    pub q: f64,
    pub paths: usize,
    pub scaled_variance: f64,
    /// Limit for the fitted engine, `σ_n·q(1−q)/φ(z_q)²`.
    pub engine_limit: f64,
    /// Limit for the data-generating law.
    pub dgp_limit: f64,
    /// Delta-method variance `σ_n(1 + z_q²/2)` of `μ_∞ + z_q√σ_∞`, the
    /// quantile of the engine's own limiting predictive.
    pub parametric_limit: f64,
}

pub fn run_bahadur_check(dgp: &Dgp, n: usize, q: f64, paths: usize, horizon: HorizonRule, seed: u64) -> Result<BahadurCheck> {
    let root = StreamKey::new(seed).named("bahadur");
    let key = dataset_key(root, dgp, n, 0);
    let x = dataset(dgp, key, n)?;
    let cfg = ResampleConfig { horizon, paths, stream: key.named("gpe") };
    let draws = pbp_sample_multi(&x, &GaussianFactory::default(), &[FunctionalSpec::quantile(q)?], &cfg)?.remove(0).coordinate(0);
    let k = draws.len() as f64;
    let scaled_variance = n as f64 * variance_of(&draws) * k / (k - 1.0);
    let sigma = x.variance();
    let z = norm_quantile(q);
    let engine_limit = quantile_asymptotic_var(q, norm_pdf(z) / libm::sqrt(sigma))?;
    let dgp_limit = quantile_asymptotic_var(q, dgp.true_density_at(dgp.true_quantile(q)?))?;
    let parametric_limit = sigma * (1.0 + z * z / 2.0);
    Ok(BahadurCheck { n, q, paths, scaled_variance, engine_limit, dgp_limit, parametric_limit })
}

/// Engine variance ratio that makes the finite-horizon PBP variance of the
/// mean equal `r·σ_n/n`: the posterior variance is `sd²·Σ_{j=n+1}^{N} 1/j²`.
pub fn fixed_scale_ratio(r: f64, n: usize, big_n: usize) -> f64 {
    let tail: f64 = ((n + 1)..=big_n).map(|j| 1.0 / (j as f64 * j as f64)).sum();
    r / (n as f64 * tail)
}

/// Mean coverage of fixed-variance-ratio engines next to the closed-form
/// limit. Emits `coverage` and `limit` rows with config `ratio=r`.
pub fn run_coverage_link(dgp: &Dgp, n: usize, ratios: &[f64], opts: &CoverageOptions) -> Result<ExperimentSummary> {
    let big_n = opts.horizon.horizon(n)?;
    let engines: Vec<(String, FixedScaleFactory)> =
        ratios.iter().map(|&r| (format!("ratio={r}"), FixedScaleFactory { ratio: fixed_scale_ratio(r, n, big_n) })).collect();
    let mut summary = run_mean_coverage(dgp, &[n], &engines, opts)?;
    summary.rows.retain(|row| row.metric == "coverage");
    for (&r, (label, _)) in ratios.iter().zip(&engines) {
        let cell = CellKey { dgp: &dgp.describe(), n, config: label, target: "mean", reps: opts.reps, paths: opts.paths };
        summary.rows.push(cell.row("limit", coverage_limit(r, opts.alpha)?, 0.0));
    }
    Ok(summary)
}

/// Source of the observed sample for a path fan.
#[derive(Clone, Debug, PartialEq)]
pub enum FanSource {
    Dgp(Dgp),
    Data(Vec<f64>),
}

/// Pointwise summaries of a functional across all paths at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FanBand {
    pub step: usize,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Mean and variance functionals along forward paths.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathFan {
    pub n: usize,
    /// Steps at which values are recorded (0 = observed data only).
    pub steps: Vec<usize>,
    /// `(path_id, mean values, variance values)` for the retained paths.
    pub retained: Vec<(usize, Vec<f64>, Vec<f64>)>,
    pub mean_bands: Vec<FanBand>,
    pub variance_bands: Vec<FanBand>,
    /// Functional values of the observed data.
    pub initial: (f64, f64),
}

/// Largest number of recorded steps per path; longer runs are thinned to an
/// even grid that always contains the first and last step.
pub const FAN_GRID: usize = 500;

pub fn run_path_fan(source: &FanSource, schedule: BiasSchedule, n: usize, steps: usize, paths: usize, keep: usize, seed: u64) -> Result<PathFan> {
    if keep > paths {
        return Err(Error::invalid(format!("cannot keep {keep} of {paths} paths")));
    }
    if paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let root = StreamKey::new(seed).named("path_fan");
    let x = match source {
        FanSource::Dgp(dgp) => dataset(dgp, dataset_key(root, dgp, n, 0), n)?,
        FanSource::Data(v) => Sample::from_slice(v)?,
    };
    let n = x.len();
    let template = gaussian_init(&x, schedule)?;
    let grid: Vec<usize> = if steps <= FAN_GRID {
        (0..=steps).collect()
    } else {
        let mut g: Vec<usize> = (0..=FAN_GRID).map(|i| i * steps / FAN_GRID).collect();
        g.dedup();
        g
    };
    let traces = par::map_indexed(paths, |b| {
        let mut engine = template.clone();
        let mut rng = root.named("paths").child(b as u64).rng();
        let mut means = Vec::with_capacity(grid.len());
        let mut vars = Vec::with_capacity(grid.len());
        let mut t = 0;
        for &g in &grid {
            while t < g {
                engine.step(&mut rng);
                t += 1;
            }
            means.push(engine.mu());
            vars.push(engine.sigma());
        }
        (means, vars)
    });
    let bands = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Result<Vec<FanBand>> {
        grid.iter()
            .enumerate()
            .map(|(i, &step)| {
                let mut col: Vec<f64> = traces.iter().map(|tr| pick(tr)[i]).collect();
                let mut qs = [0.0; 5];
                for (slot, level) in qs.iter_mut().zip([0.05, 0.25, 0.5, 0.75, 0.95]) {
                    *slot = quantile_in_place(&mut col, level)?;
                }
                Ok(FanBand { step, q05: qs[0], q25: qs[1], median: qs[2], q75: qs[3], q95: qs[4] })
            })
            .collect()
    };
    let mean_bands = bands(|tr| &tr.0)?;
    let variance_bands = bands(|tr| &tr.1)?;
    let retained = traces.into_iter().take(keep).enumerate().map(|(b, (m, v))| (b, m, v)).collect();
    Ok(PathFan { n, steps: grid, retained, mean_bands, variance_bands, initial: (template.mu(), template.sigma()) })
}

/// One row of a total-variation probe at the frozen state `(μ, σ, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TvRow {
    pub t: u64,
    pub delta: f64,
    /// `1/t² + c_t/t + |c_{t+1} − c_t|`
    pub bound: f64,
}

pub fn tv_bound(schedule: &BiasSchedule, t: u64, sigma: f64) -> f64 {
    let tf = t as f64;
    let c = schedule.evaluate(t, sigma).abs();
    let c_next = schedule.evaluate(t + 1, sigma).abs();
    1.0 / (tf * tf) + c / tf + (c_next - c).abs()
}

pub fn run_tv_probe(schedule: BiasSchedule, ts: &[u64], mu: f64, sigma: f64, quad: &QuadratureSpec) -> Result<Vec<TvRow>> {
    par::try_map_indexed(ts.len(), |i| {
        let t = ts[i];
        let state = GaussianEngine::from_state(mu, sigma, t, schedule)?;
        Ok(TvRow { t, delta: tv_probe(&state, quad)?, bound: tv_bound(&schedule, t, sigma) })
    })
}

/// Partial sums `Σ_{j ≤ t} Δ_j` at the frozen state for `t` on a
/// logarithmic grid up to `t_max`. Terms up to `exact_upto` are summed
/// directly; beyond that `Δ_j` is interpolated log-linearly between grid
/// points and summed in closed form over each gap.
pub fn tv_partial_sums(schedule: BiasSchedule, t_max: u64, exact_upto: u64, points_per_decade: usize, quad: &QuadratureSpec) -> Result<Vec<(u64, f64)>> {
    let exact_upto = exact_upto.clamp(1, t_max);
    let mut grid: Vec<u64> = (1..=exact_upto).collect();
    let mut t = exact_upto as f64;
    let factor = libm::pow(10.0, 1.0 / points_per_decade.max(1) as f64);
    while (t as u64) < t_max {
        t = (t * factor).min(t_max as f64);
        let g = libm::round(t) as u64;
        if g > *grid.last().unwrap() {
            grid.push(g);
        }
    }
    let rows = run_tv_probe(schedule, &grid, 0.0, 1.0, quad)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut total = 0.0;
    for (i, row) in rows.iter().enumerate() {
        if i == 0 || row.t <= exact_upto {
            total += row.delta;
        } else {
            total += gap_sum(&rows[i - 1], row);
        }
        out.push((row.t, total));
    }
    Ok(out)
}

/// `Σ_{j=a+1}^{b} Δ_j` with `Δ` interpolated as a power law between the two
/// end points.
fn gap_sum(a: &TvRow, b: &TvRow) -> f64 {
    let (ta, tb) = (a.t as f64, b.t as f64);
    if a.delta <= 0.0 || b.delta <= 0.0 {
        let slope = (b.delta - a.delta) / (tb - ta);
        return ((a.t + 1)..=b.t).map(|j| a.delta + slope * (j as f64 - ta)).sum();
    }
    let k = libm::log(b.delta / a.delta) / libm::log(tb / ta);
    ((a.t + 1)..=b.t).map(|j| a.delta * libm::pow(j as f64 / ta, k)).sum()
}

/// Residual law of a synthetic regression dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResidualLaw {
    Normal,
    StudentT(f64),
}

/// Regression dataset: design rows (with intercept column) and outcomes.
#[derive(Clone, Debug)]
pub struct RegressionData {
    pub x: Matrix,
    pub y: Vec<f64>,
}

/// `y = Xβ + ε` with an intercept and `d − 1` standard normal covariates;
/// `β_j = (−1)^j / (j + 1)`.
pub fn synthetic_regression(n: usize, d: usize, law: ResidualLaw, key: StreamKey) -> Result<RegressionData> {
    if d == 0 || n <= d {
        return Err(Error::invalid(format!("need n > d ≥ 1 (got n={n}, d={d})")));
    }
    let mut rng = key.rng();
    let beta: Vec<f64> = (0..d).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / (j + 1) as f64).collect();
    let mut rows = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let t = match law {
        ResidualLaw::StudentT(nu) => Some(StudentT::new(nu).map_err(|_| Error::invalid(format!("invalid degrees of freedom {nu}")))?),
        ResidualLaw::Normal => None,
    };
    for _ in 0..n {
        let mut mean = beta[0];
        rows.push(1.0);
        for b in &beta[1..] {
            let v: f64 = StandardNormal.sample(&mut rng);
            rows.push(v);
            mean += b * v;
        }
        let e: f64 = match &t {
            Some(t) => t.sample(&mut rng),
            None => StandardNormal.sample(&mut rng),
        };
        y.push(mean + e);
    }
    Ok(RegressionData { x: Matrix::from_row_major(n, d, rows)?, y })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegressionKind {
    Gaussian,
    StudentT,
}

#[derive(Clone, Debug)]
pub struct RegressionPpcOptions {
    pub replicates: usize,
    /// Steps past `n` before the tail correction.
    pub horizon: usize,
    pub tail: TailCorrection,
    pub tail_level: f64,
    pub tmle: TMleOptions,
    pub tie_rule: TieRule,
}

impl Default for RegressionPpcOptions {
    fn default() -> Self {
        RegressionPpcOptions {
            replicates: 100,
            horizon: 100,
            tail: TailCorrection::default(),
            tail_level: 0.995,
            tmle: TMleOptions::default(),
            tie_rule: TieRule::GreaterEqual,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegressionPpc {
    pub engine: String,
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub chi2: PpcReport,
    pub tail: PpcReport,
    /// `τ²` reached its floor in the fit or in some replicate path.
    pub floored: bool,
    /// The tail covariance had to be projected onto the PSD cone.
    pub projected: bool,
}

/// PPC-PE for a regression engine. Each replicate advances the fitted
/// engine `horizon` steps, adds the tail correction, and simulates an
/// outcome vector at the observed covariates. Residuals of observed and
/// replicate outcomes are standardized by the fitted engine; the χ²
/// statistic is reported per observation so that `√n`-scaled differences
/// stay O(1).
pub fn run_regression_ppc(data: &RegressionData, kind: RegressionKind, opts: &RegressionPpcOptions, key: StreamKey) -> Result<RegressionPpc> {
    if opts.replicates < 20 {
        return Err(Error::invalid(format!("need at least 20 replicates (got {})", opts.replicates)));
    }
    let (x, y) = (&data.x, &data.y);
    let n = x.rows();
    let fit = match kind {
        RegressionKind::Gaussian => gauss_reg_init(x, y)?,
        RegressionKind::StudentT => treg_init(x, y, &opts.tmle, &mut key.named("mle").rng())?,
    };
    let resampler = CovariateResampler::new(x.clone())?;
    let mut advanced = fit.clone();
    let mut rng = key.named("tail_reference").rng();
    for _ in 0..opts.horizon {
        reg_step(&mut advanced, &resampler, &mut rng);
    }
    let tail = opts.tail.resolve(&advanced, &resampler, key.named("tail_paths"))?;

    let fitted: Vec<f64> = (0..n).map(|i| fit.fitted(x.row(i))).collect();
    let scale = libm::sqrt(fit.tau2());
    let stats = |outcome: &[f64]| -> Result<(f64, f64)> {
        let mut resid: Vec<f64> = outcome.iter().zip(&fitted).map(|(o, f)| (o - f) / scale).collect();
        let chi2 = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
        for r in &mut resid {
            *r = r.abs();
        }
        Ok((chi2, quantile_in_place(&mut resid, opts.tail_level)?))
    };
    let (chi2_obs, tail_obs) = stats(y)?;

    let reps = par::try_map_indexed(opts.replicates, |b| {
        let mut rng = key.named("replicates").child(b as u64).rng();
        let mut state = fit.clone();
        for _ in 0..opts.horizon {
            reg_step(&mut state, &resampler, &mut rng);
        }
        let theta = hybrid_finalize(&state, &tail, &mut rng);
        let d = fit.dim();
        let tau2 = theta[d].max(crate::engines::TAU2_FLOOR);
        let draw = RegressionEngine::from_parts(theta[..d].to_vec(), tau2, fit.sigma_nx().clone(), fit.nu(), state.step())?;
        let tau = libm::sqrt(draw.tau2());
        let outcome: Vec<f64> = (0..n).map(|i| draw.fitted(x.row(i)) + tau * draw.draw_residual(&mut rng)).collect();
        let (c, t) = stats(&outcome)?;
        Ok::<_, Error>((c, t, state.floored() || theta[d] < crate::engines::TAU2_FLOOR))
    })?;
    let root_n = libm::sqrt(n as f64);
    let report = |name: &str, obs: f64, pick: fn(&(f64, f64, bool)) -> f64| {
        let s_rep: Vec<f64> = reps.iter().map(pick).collect();
        let deltas = s_rep.iter().map(|s| root_n * (s - obs)).collect();
        PpcReport::from_stats(String::from(name), n, opts.horizon, obs, s_rep, deltas, Sided::One, opts.tie_rule)
    };
    Ok(RegressionPpc {
        engine: String::from(match kind {
            RegressionKind::Gaussian => "gaussian",
            RegressionKind::StudentT => "student_t",
        }),
        beta: fit.beta().to_vec(),
        tau2: fit.tau2(),
        chi2: report("chi2", chi2_obs, |r| r.0),
        tail: report(&format!("tail({})", opts.tail_level), tail_obs, |r| r.1),
        floored: fit.floored() || advanced.floored() || reps.iter().any(|r| r.2),
        projected: tail.projected(),
    })
}

/// Convenience for one-sample statistics on a raw slice.
pub fn stat_of(tf: &TestFunction, values: &[f64]) -> Result<f64> {
    test_stat(tf, &Sample::from_slice(values)?, None)
}

/// Kolmogorov–Smirnov distance between the empirical law of `u` and
/// Uniform(0, 1).
pub fn ks_uniform(u: &[f64]) -> f64 {
    let mut s = u.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / m - v).max(v - i as f64 / m))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engines::{BiasKind, BiasTarget};

    #[test]
    fn dgp_truths() {
        let g = Dgp::gamma_rate(2.0, 2.0).unwrap();
        assert_eq!((g.true_mean(), g.true_variance()), (1.0, 0.5));
        assert!((g.true_quantile(0.5).unwrap() - 0.839_173_495_008_330_6).abs() < 1e-9);
        assert!((g.true_quantile(0.95).unwrap() - 2.371_932_259_195_288_5).abs() < 1e-9);
        assert!((g.true_density_at(1.0) - 4.0 * libm::exp(-2.0)).abs() < 1e-14);
        let s = Dgp::gamma_scale(2.0, 2.0).unwrap();
        assert_eq!((s.true_mean(), s.true_variance()), (4.0, 8.0));
        let z = Dgp::standard_normal();
        assert!((z.true_quantile(0.95).unwrap() - 1.644_853_626_951_472_7).abs() < 1e-12);
        assert!(Dgp::gamma_rate(0.0, 1.0).is_err());
    }

    #[test]
    fn ks_examples() {
        assert!((ks_uniform(&[0.5]) - 0.5).abs() < 1e-15);
        let grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_uniform(&grid) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn small_coverage_run_is_reproducible() {
        let opts = CoverageOptions { reps: 100, paths: 40, alpha: 0.05, horizon: HorizonRule::Power(1.5), seed: 3 };
        let engines = [(String::from("none"), GaussianFactory::default())];
        let a = run_mean_coverage(&Dgp::standard_normal(), &[20], &engines, &opts).unwrap();
        let b = run_mean_coverage(&Dgp::standard_normal(), &[20], &engines, &opts).unwrap();
        assert_eq!(a, b);
        let c = a.get("normal(0,1)", 20, "none", "mean", "coverage").unwrap();
        assert!((0.0..=1.0).contains(&c.estimate));
        assert_eq!((c.reps, c.paths), (100, 40));
        let few = CoverageOptions { reps: 99, ..opts };
        assert!(run_mean_coverage(&Dgp::standard_normal(), &[20], &engines, &few).is_err());
        let fixed = [(String::from("r1"), FixedScaleFactory { ratio: 1.0 })];
        assert!(run_mean_coverage(&Dgp::standard_normal(), &[20], &fixed, &opts).is_ok());
    }

    #[test]
    fn fixed_scale_ratio_matches_limit() {
        // Σ_{j>n} 1/j² → 1/n, so an infinite horizon needs ratio ≈ r
        let r = fixed_scale_ratio(2.0, 100, 10_000_000);
        assert!((r - 2.0 * 100.5 / 100.0).abs() < 1e-4);
        assert!(fixed_scale_ratio(1.0, 100, 200) > 1.9);
    }

    #[test]
    fn fan_shapes() {
        let fan = run_path_fan(&FanSource::Dgp(Dgp::standard_normal()), BiasSchedule::NONE, 30, 0, 10, 4, 1).unwrap();
        assert_eq!(fan.steps, vec![0]);
        assert!(fan.retained.iter().all(|(_, m, v)| m == &vec![fan.initial.0] && v == &vec![fan.initial.1]));
        let s = BiasSchedule::new(BiasKind::InvSqrtT, BiasTarget::VARIANCE);
        let fan = run_path_fan(&FanSource::Dgp(Dgp::standard_normal()), s, 30, 1200, 20, 5, 1).unwrap();
        assert_eq!(fan.steps.len(), FAN_GRID + 1);
        assert_eq!(*fan.steps.last().unwrap(), 1200);
        assert_eq!(fan.retained.len(), 5);
        assert!(run_path_fan(&FanSource::Data(vec![0.0, 1.0]), s, 2, 5, 3, 4, 1).is_err());
    }

    #[test]
    fn partial_sums_monotone() {
        let s = BiasSchedule::new(BiasKind::ConstOverN(2), BiasTarget::BOTH);
        let sums = tv_partial_sums(s, 500, 20, 4, &QuadratureSpec::default()).unwrap();
        assert!(sums.windows(2).all(|w| w[1].1 > w[0].1 && w[1].0 > w[0].0));
        assert_eq!(sums.last().unwrap().0, 500);
    }
}
