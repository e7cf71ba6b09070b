//! Predictive engines.
//!
//! A predictive engine is the conditional law of the next observation given
//! everything seen so far. [`GaussianEngine`] is the running-moment Normal
//! recursion, optionally perturbed by a [`BiasSchedule`]; [`FixedScaleEngine`]
//! keeps the martingale mean update but draws with a frozen variance, which
//! pins the limiting variance ratio. The regression engines live at the
//! bottom of the file and update `(β, τ²)` by natural-gradient steps.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::linalg::{self, Cholesky};
use crate::measures::Sample;
use crate::rng::{PathRng, StreamKey};
use crate::special::{gauss_hermite, normal_density};
use crate::{Error, Matrix, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BiasKind {
    None,
    /// `c_t = 1/t`
    InvT,
    /// `c_t = 1/√t`
    InvSqrtT,
    /// `c_t = 1/N` for a fixed horizon `N`
    ConstOverN(u64),
    /// `c_t = γ·σ_t`
    Proportional(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasTarget {
    pub mean: bool,
    pub variance: bool,
}

impl BiasTarget {
    pub const MEAN: BiasTarget = BiasTarget { mean: true, variance: false };
    pub const VARIANCE: BiasTarget = BiasTarget { mean: false, variance: true };
    pub const BOTH: BiasTarget = BiasTarget { mean: true, variance: true };
}

/// Additive perturbation `c_t` of the predictive mean and/or variance.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasSchedule {
    pub kind: BiasKind,
    pub applies_to: BiasTarget,
}

impl BiasSchedule {
    pub const NONE: BiasSchedule = BiasSchedule { kind: BiasKind::None, applies_to: BiasTarget::BOTH };

    pub fn new(kind: BiasKind, applies_to: BiasTarget) -> Self {
        BiasSchedule { kind, applies_to }
    }

    /// `c_t` at step `t` with running variance `sigma`.
    pub fn evaluate(&self, t: u64, sigma: f64) -> f64 {
        match self.kind {
            BiasKind::None => 0.0,
            BiasKind::InvT => 1.0 / t as f64,
            BiasKind::InvSqrtT => 1.0 / libm::sqrt(t as f64),
            BiasKind::ConstOverN(n) => 1.0 / n as f64,
            BiasKind::Proportional(gamma) => gamma * sigma,
        }
    }

    pub fn mean_shift(&self, t: u64, sigma: f64) -> f64 {
        if self.applies_to.mean {
            self.evaluate(t, sigma)
        } else {
            0.0
        }
    }

    pub fn variance_shift(&self, t: u64, sigma: f64) -> f64 {
        if self.applies_to.variance {
            self.evaluate(t, sigma)
        } else {
            0.0
        }
    }

    pub fn is_none(&self) -> bool {
        self.kind == BiasKind::None || !(self.applies_to.mean || self.applies_to.variance)
    }

    pub fn describe(&self) -> String {
        let kind = match self.kind {
            BiasKind::None => return String::from("none"),
            BiasKind::InvT => String::from("inv_t"),
            BiasKind::InvSqrtT => String::from("inv_sqrt_t"),
            BiasKind::ConstOverN(n) => format!("const_over_N({n})"),
            BiasKind::Proportional(g) => format!("proportional({g})"),
        };
        let target = match (self.applies_to.mean, self.applies_to.variance) {
            (true, true) => "mean+variance",
            (true, false) => "mean",
            (false, true) => "variance",
            (false, false) => "nothing",
        };
        format!("{kind}@{target}")
    }
}

impl Default for BiasSchedule {
    fn default() -> Self {
        Self::NONE
    }
}

/// One-dimensional engine driven by forward simulation.
pub trait PredictiveEngine {
    fn draw(&mut self, rng: &mut PathRng) -> f64;

    fn update(&mut self, z: f64);

    fn step(&mut self, rng: &mut PathRng) -> f64 {
        let z = self.draw(rng);
        self.update(z);
        z
    }
}

/// Builds a fresh engine from observed data; one build per resampling path.
pub trait EngineFactory: Sync {
    type Engine: PredictiveEngine + Clone + Send + Sync;

    fn build(&self, data: &Sample) -> Result<Self::Engine>;

    fn describe(&self) -> String;
}

/// Running-moment Normal engine: draws `N(μ_t + c_t, σ_t + c_t)` and updates
/// `(μ, σ)` by the online ML recursion.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianEngine {
    mu: f64,
    sigma: f64,
    t: u64,
    schedule: BiasSchedule,
    clamped: bool,
}

pub fn gaussian_init(data: &Sample, schedule: BiasSchedule) -> Result<GaussianEngine> {
    if data.len() < 2 {
        return Err(Error::TooFewObservations(data.len()));
    }
    Ok(GaussianEngine { mu: data.mean(), sigma: data.variance(), t: data.len() as u64, schedule, clamped: false })
}

impl GaussianEngine {
    /// Engine at an arbitrary state, for probes and tests.
    pub fn from_state(mu: f64, sigma: f64, t: u64, schedule: BiasSchedule) -> Result<Self> {
        if !(sigma >= 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::invalid(format!("invalid engine state mu={mu} sigma={sigma}")));
        }
        if t == 0 {
            return Err(Error::invalid("engine step counter must be positive"));
        }
        Ok(GaussianEngine { mu, sigma, t, schedule, clamped: false })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn schedule(&self) -> &BiasSchedule {
        &self.schedule
    }

    /// True once any draw had its variance clamped at zero.
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    /// `(m_t, v_t)` before clamping.
    pub fn predictive_moments(&self) -> (f64, f64) {
        let m = self.mu + self.schedule.mean_shift(self.t, self.sigma);
        let v = self.sigma + self.schedule.variance_shift(self.t, self.sigma);
        (m, v)
    }
}

impl PredictiveEngine for GaussianEngine {
    fn draw(&mut self, rng: &mut PathRng) -> f64 {
        let (m, mut v) = self.predictive_moments();
        if v < 0.0 {
            v = 0.0;
            self.clamped = true;
        }
        let e: f64 = StandardNormal.sample(rng);
        m + libm::sqrt(v) * e
    }

    fn update(&mut self, z: f64) {
        let t = self.t as f64;
        let inv = 1.0 / (t + 1.0);
        let shrink = t * inv;
        let d = z - self.mu;
        self.mu += d * inv;
        self.sigma = (self.sigma + d * d * inv) * shrink;
        self.t += 1;
    }

    /// Fused draw and update. `(z − μ_t)²` is expanded as
    /// `c² + 2c√v·e + v·e²`, which keeps the square root off the
    /// step-to-step dependency chain of `σ`; values agree with separate
    /// `draw` and `update` calls up to rounding.
    fn step(&mut self, rng: &mut PathRng) -> f64 {
        let (m, mut v) = self.predictive_moments();
        if v < 0.0 {
            v = 0.0;
            self.clamped = true;
        }
        let e: f64 = StandardNormal.sample(rng);
        let c = m - self.mu;
        let se = libm::sqrt(v) * e;
        let d = c + se;
        let d2 = if c == 0.0 { v * (e * e) } else { c * c + 2.0 * c * se + v * (e * e) };
        let t = self.t as f64;
        let inv = 1.0 / (t + 1.0);
        let shrink = t * inv;
        let z = self.mu + d;
        self.mu += d * inv;
        self.sigma = (self.sigma + d2 * inv) * shrink;
        self.t += 1;
        z
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussianFactory {
    pub schedule: BiasSchedule,
}

impl GaussianFactory {
    pub fn new(schedule: BiasSchedule) -> Self {
        GaussianFactory { schedule }
    }
}

impl EngineFactory for GaussianFactory {
    type Engine = GaussianEngine;

    fn build(&self, data: &Sample) -> Result<GaussianEngine> {
        gaussian_init(data, self.schedule)
    }

    fn describe(&self) -> String {
        format!("gaussian[{}]", self.schedule.describe())
    }
}

/// Martingale mean with a frozen draw variance `ratio·σ_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedScaleEngine {
    mu: f64,
    t: u64,
    sd: f64,
}

impl FixedScaleEngine {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn draw_variance(&self) -> f64 {
        self.sd * self.sd
    }
}

impl PredictiveEngine for FixedScaleEngine {
    fn draw(&mut self, rng: &mut PathRng) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        self.mu + self.sd * e
    }

    fn update(&mut self, z: f64) {
        self.t += 1;
        self.mu += (z - self.mu) / self.t as f64;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedScaleFactory {
    pub ratio: f64,
}

impl EngineFactory for FixedScaleFactory {
    type Engine = FixedScaleEngine;

    fn build(&self, data: &Sample) -> Result<FixedScaleEngine> {
        if !(self.ratio >= 0.0) {
            return Err(Error::invalid(format!("variance ratio must be nonnegative (got {})", self.ratio)));
        }
        if data.len() < 2 {
            return Err(Error::TooFewObservations(data.len()));
        }
        Ok(FixedScaleEngine { mu: data.mean(), t: data.len() as u64, sd: libm::sqrt(self.ratio * data.variance()) })
    }

    fn describe(&self) -> String {
        format!("fixed_scale[{}]", self.ratio)
    }
}

/// Quadrature settings for [`tv_probe`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub hermite_order: usize,
    pub grid_points: usize,
    /// Half-width of the outer grid in predictive standard deviations.
    pub half_width_sds: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { hermite_order: 64, grid_points: 4001, half_width_sds: 10.0, rel_tol: 1e-2, abs_tol: 1e-15 }
    }
}

/// `½∫|f(x) − g(x)| dx` by the trapezoid rule on `points` nodes in `[lo, hi]`.
pub fn tv_on_grid(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let points = points.max(2);
    let h = (hi - lo) / (points - 1) as f64;
    let mut total = 0.0;
    for i in 0..points {
        let x = lo + h * i as f64;
        let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        total += w * (f(x) - g(x)).abs();
    }
    0.5 * total * h
}

/// Total-variation distance between the laws of the next draw and the one
/// after it, both conditional on the current state.
///
/// The two-step law is the Normal mixture obtained by drawing `Y` from the
/// current predictive, updating, and drawing again; the mixture is integrated
/// over `Y` by Gauss–Hermite. Both quadratures are refined once (order and
/// grid doubled) and the refined value is returned when the two agree.
pub fn tv_probe(state: &GaussianEngine, quad: &QuadratureSpec) -> Result<f64> {
    let (m, v) = state.predictive_moments();
    if !(v > 0.0) {
        return Err(Error::invalid(format!("tv probe needs positive predictive variance (got {v})")));
    }
    let coarse = tv_probe_once(state, quad.hermite_order, quad.grid_points, quad.half_width_sds, m, v)?;
    let refined = tv_probe_once(state, 2 * quad.hermite_order, 2 * quad.grid_points - 1, quad.half_width_sds, m, v)?;
    if (coarse - refined).abs() > quad.rel_tol * refined + quad.abs_tol {
        return Err(Error::Quadrature { coarse, refined, tol: quad.rel_tol });
    }
    Ok(refined)
}

fn tv_probe_once(state: &GaussianEngine, order: usize, points: usize, half_width: f64, m: f64, v: f64) -> Result<f64> {
    let (nodes, weights) = gauss_hermite(order);
    let scale = libm::sqrt(2.0 * v);
    let inv_sqrt_pi = 1.0 / libm::sqrt(core::f64::consts::PI);
    let mut components = Vec::with_capacity(order);
    for (x, w) in nodes.iter().zip(&weights) {
        let mut next = state.clone();
        next.update(m + scale * x);
        let (m2, v2) = next.predictive_moments();
        if !(v2 > 0.0) {
            return Err(Error::invalid("two-step predictive variance is not positive"));
        }
        components.push((w * inv_sqrt_pi, m2, v2));
    }
    let sd = libm::sqrt(v);
    let one_step = |x: f64| normal_density(x, m, v);
    let two_step = |x: f64| components.iter().map(|&(w, m2, v2)| w * normal_density(x, m2, v2)).sum::<f64>();
    Ok(tv_on_grid(one_step, two_step, m - half_width * sd, m + half_width * sd, points))
}

// ---------------------------------------------------------------------------
// Regression engines

/// Default lower bound kept on `τ²` during resampling.
pub const TAU2_FLOOR: f64 = 1e-12;

/// Pivot tolerance relative to the largest diagonal of `XᵀX`; rejects designs
/// with condition number beyond roughly 1e12.
const RANK_TOL: f64 = 1e-12;

/// Natural-gradient regression engine for `Y = xᵀβ + τR`, with `R ~ t_ν`
/// (`ν` finite) or `R ~ N(0, 1)` (`ν = ∞`).
#[derive(Clone, Debug)]
pub struct RegressionEngine {
    beta: Vec<f64>,
    tau2: f64,
    sigma_nx: Matrix,
    sigma_chol: Cholesky,
    nu: f64,
    step: u64,
    tau2_floor: f64,
    floored: bool,
}

impl RegressionEngine {
    /// Engine from explicit parameters; `sigma_nx` must be positive definite.
    pub fn from_parts(beta: Vec<f64>, tau2: f64, sigma_nx: Matrix, nu: f64, step: u64) -> Result<Self> {
        if sigma_nx.rows() != beta.len() || sigma_nx.cols() != beta.len() {
            return Err(Error::invalid("covariate second-moment matrix does not match β"));
        }
        if !(nu > 0.0) {
            return Err(Error::invalid(format!("degrees of freedom must be positive (got {nu})")));
        }
        let sigma_chol = Cholesky::new(&sigma_nx, RANK_TOL)?;
        let mut engine =
            RegressionEngine { beta, tau2, sigma_nx, sigma_chol, nu, step, tau2_floor: TAU2_FLOOR, floored: false };
        engine.enforce_floor();
        Ok(engine)
    }

    pub fn with_tau2_floor(mut self, floor: f64) -> Self {
        self.tau2_floor = floor;
        self.enforce_floor();
        self
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn sigma_nx(&self) -> &Matrix {
        &self.sigma_nx
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Whether `τ²` has ever been lifted to the floor.
    pub fn floored(&self) -> bool {
        self.floored
    }

    pub fn is_gaussian(&self) -> bool {
        self.nu.is_infinite()
    }

    /// `(β, τ²)` stacked.
    pub fn theta(&self) -> Vec<f64> {
        let mut theta = self.beta.clone();
        theta.push(self.tau2);
        theta
    }

    fn enforce_floor(&mut self) {
        if !(self.tau2 >= self.tau2_floor) {
            self.tau2 = self.tau2_floor;
            self.floored = true;
        }
    }

    /// Natural gradients `(Z_β, Z_τ²)` at covariate `x` and standardized
    /// residual `R = (Y − xᵀβ)/τ`.
    pub fn gradients(&self, x: &[f64], r: f64) -> (Vec<f64>, f64) {
        let tau = libm::sqrt(self.tau2);
        let (weight, z_tau2) = if self.is_gaussian() {
            (1.0, self.tau2 * (r * r - 1.0))
        } else {
            let w = (self.nu + 3.0) / (self.nu + r * r);
            (w, self.tau2 * w * (r * r - 1.0))
        };
        let direction = self.sigma_chol.solve(x);
        let z_beta = direction.iter().map(|d| tau * weight * r * d).collect();
        (z_beta, z_tau2)
    }

    /// One update `θ ← θ + Z/N` with given `(x, R)`.
    pub fn apply(&mut self, x: &[f64], r: f64) {
        let (z_beta, z_tau2) = self.gradients(x, r);
        self.step += 1;
        let inv = 1.0 / self.step as f64;
        for (b, z) in self.beta.iter_mut().zip(&z_beta) {
            *b += z * inv;
        }
        self.tau2 += z_tau2 * inv;
        self.enforce_floor();
    }

    pub fn draw_residual(&self, rng: &mut PathRng) -> f64 {
        if self.is_gaussian() {
            StandardNormal.sample(rng)
        } else {
            StudentT::new(self.nu).expect("ν checked positive").sample(rng)
        }
    }

    /// Mean `xᵀβ` at a covariate row.
    pub fn fitted(&self, x: &[f64]) -> f64 {
        linalg::dot(x, &self.beta)
    }
}

/// Uniform resampling of observed covariate rows.
#[derive(Clone, Debug)]
pub struct CovariateResampler {
    rows: Matrix,
}

impl CovariateResampler {
    pub fn new(rows: Matrix) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::EmptySample);
        }
        Ok(CovariateResampler { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn draw_index(&self, rng: &mut PathRng) -> usize {
        rng.random_range(0..self.rows.rows())
    }

    pub fn draw<'a>(&'a self, rng: &mut PathRng) -> &'a [f64] {
        self.rows.row(self.draw_index(rng))
    }
}

fn second_moment(x: &Matrix) -> Matrix {
    x.gram().scale(1.0 / x.rows() as f64)
}

fn check_design(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::invalid(format!("design has {} rows but outcome has {}", x.rows(), y.len())));
    }
    if x.rows() < x.cols() || x.cols() == 0 {
        return Err(Error::RankDeficient);
    }
    Ok(())
}

fn ols(x: &Matrix) -> Result<Cholesky> {
    Cholesky::new(&x.gram(), RANK_TOL)
}

fn ml_residual_variance(x: &Matrix, y: &[f64], beta: &[f64]) -> f64 {
    (0..x.rows()).map(|i| { let e = y[i] - linalg::dot(x.row(i), beta); e * e }).sum::<f64>() / x.rows() as f64
}

/// Gaussian engine at the OLS fit with ML residual variance.
pub fn gauss_reg_init(x: &Matrix, y: &[f64]) -> Result<RegressionEngine> {
    check_design(x, y)?;
    let chol = ols(x)?;
    let beta = chol.solve(&x.weighted_xty(y, None));
    let tau2 = ml_residual_variance(x, y, &beta);
    RegressionEngine::from_parts(beta, tau2, second_moment(x), f64::INFINITY, x.rows() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TMleOptions {
    pub nu: f64,
    pub starts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Start perturbations are `N(0, scale·diag(cov(β̂_OLS)))`.
    pub perturb_scale: f64,
}

impl Default for TMleOptions {
    fn default() -> Self {
        TMleOptions { nu: 5.0, starts: 10, max_iter: 500, tol: 1e-8, perturb_scale: 0.25 }
    }
}

/// Student-t engine initialized at the average of several random-start
/// maximum likelihood fits (EM / IRLS with weights `(ν+1)/(ν+R²)`).
pub fn treg_init(x: &Matrix, y: &[f64], opts: &TMleOptions, rng: &mut PathRng) -> Result<RegressionEngine> {
    check_design(x, y)?;
    if !(opts.nu > 0.0) || opts.starts == 0 {
        return Err(Error::invalid("t-MLE needs ν > 0 and at least one start"));
    }
    let n = x.rows();
    let d = x.cols();
    let chol = ols(x)?;
    let beta_ols = chol.solve(&x.weighted_xty(y, None));
    let s2 = ml_residual_variance(x, y, &beta_ols);
    let inv = chol.inverse();
    let sds: Vec<f64> = (0..d).map(|j| libm::sqrt(opts.perturb_scale * s2 * inv[(j, j)])).collect();

    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for start in 0..opts.starts {
        let beta0: Vec<f64> = beta_ols
            .iter()
            .zip(&sds)
            .map(|(b, sd)| {
                let e: f64 = StandardNormal.sample(rng);
                b + sd * e
            })
            .collect();
        match t_mle_single(x, y, beta0, s2, opts) {
            Ok(fit) => fits.push(fit),
            Err(msg) => failures.push(format!("start {start}: {msg}")),
        }
    }
    if fits.is_empty() {
        return Err(Error::MleFailed(failures.join("; ")));
    }
    let k = fits.len() as f64;
    let mut beta = vec![0.0; d];
    let mut tau2 = 0.0;
    for (b, t2) in &fits {
        for (acc, v) in beta.iter_mut().zip(b) {
            *acc += v / k;
        }
        tau2 += t2 / k;
    }
    RegressionEngine::from_parts(beta, tau2, second_moment(x), opts.nu, n as u64)
}

fn t_mle_single(x: &Matrix, y: &[f64], mut beta: Vec<f64>, tau2_start: f64, opts: &TMleOptions) -> core::result::Result<(Vec<f64>, f64), String> {
    let n = x.rows();
    let mut tau2 = tau2_start.max(TAU2_FLOOR);
    let mut weights = vec![0.0; n];
    for _ in 0..opts.max_iter {
        for (i, w) in weights.iter_mut().enumerate() {
            let e = y[i] - linalg::dot(x.row(i), &beta);
            *w = (opts.nu + 1.0) / (opts.nu + e * e / tau2);
        }
        let chol = Cholesky::new(&x.weighted_gram(Some(&weights)), RANK_TOL).map_err(|_| String::from("weighted design became singular"))?;
        let next_beta = chol.solve(&x.weighted_xty(y, Some(&weights)));
        let next_tau2 = ((0..n)
            .map(|i| { let e = y[i] - linalg::dot(x.row(i), &next_beta); weights[i] * e * e })
            .sum::<f64>()
            / n as f64)
            .max(TAU2_FLOOR);
        if next_beta.iter().any(|b| !b.is_finite()) || !next_tau2.is_finite() {
            return Err(String::from("non-finite iterate"));
        }
        let change = next_beta
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold((next_tau2 - tau2).abs(), f64::max);
        let size = next_beta.iter().map(|b| b.abs()).fold(next_tau2, f64::max);
        beta = next_beta;
        tau2 = next_tau2;
        if change <= opts.tol * (1.0 + size) {
            return Ok((beta, tau2));
        }
    }
    Err(format!("no convergence in {} iterations", opts.max_iter))
}

/// One self-simulated step: `X ~ P̂_X`, `R ~ t_ν` or `N(0,1)`, then the
/// natural-gradient update.
pub fn reg_step(state: &mut RegressionEngine, resampler: &CovariateResampler, rng: &mut PathRng) {
    let idx = resampler.draw_index(rng);
    let r = state.draw_residual(rng);
    state.apply(resampler.rows.row(idx), r);
}

/// Covariance `V_N` of the remaining drift `θ_∞ − θ_N` together with a
/// square-root factor used for sampling.
#[derive(Clone, Debug)]
pub struct TailCovariance {
    cov: Matrix,
    factor: Matrix,
    projected: bool,
}

impl TailCovariance {
    pub fn zero(dim: usize) -> Self {
        TailCovariance { cov: Matrix::zeros(dim, dim), factor: Matrix::zeros(dim, dim), projected: false }
    }

    /// Uses `cov` as given, after projection onto the PSD cone if needed.
    pub fn from_matrix(cov: &Matrix) -> Result<Self> {
        if cov.rows() != cov.cols() {
            return Err(Error::invalid("tail covariance must be square"));
        }
        let (cov, projected) = linalg::project_psd(cov);
        let factor = linalg::psd_sqrt(&cov);
        Ok(TailCovariance { cov, factor, projected })
    }

    /// Path-to-path covariance of `θ_{N+L} − θ_N` over `paths` continuation
    /// paths of length `length`, scaled by `(N+L)/L` so that it estimates
    /// the variance left after step `N`.
    pub fn from_continuation(state: &RegressionEngine, resampler: &CovariateResampler, paths: usize, length: usize, key: StreamKey) -> Result<Self> {
        if paths < 2 || length == 0 {
            return Err(Error::invalid("continuation estimate needs ≥ 2 paths of positive length"));
        }
        let start = state.theta();
        let d = start.len();
        let diffs: Vec<Vec<f64>> = (0..paths)
            .map(|k| {
                let mut rng = key.child(k as u64).rng();
                let mut s = state.clone();
                for _ in 0..length {
                    reg_step(&mut s, resampler, &mut rng);
                }
                s.theta().iter().zip(&start).map(|(a, b)| a - b).collect()
            })
            .collect();
        let mut cov = sample_covariance(&diffs, d);
        let n = state.step() as f64;
        let l = length as f64;
        cov = cov.scale((n + l) / l);
        Self::from_matrix(&cov)
    }

    pub fn covariance(&self) -> &Matrix {
        &self.cov
    }

    /// Whether the supplied or estimated matrix had to be projected.
    pub fn projected(&self) -> bool {
        self.projected
    }

    pub fn dim(&self) -> usize {
        self.cov.rows()
    }
}

/// Unbiased covariance of a set of vectors.
pub(crate) fn sample_covariance(rows: &[Vec<f64>], d: usize) -> Matrix {
    let k = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / k;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]) / (k - 1.0);
            }
        }
    }
    cov
}

/// How the tail correction of the hybrid scheme is obtained.
#[derive(Clone, Debug)]
pub enum TailCorrection {
    None,
    Fixed(Matrix),
    Continuation { paths: usize, length: Option<usize> },
}

impl Default for TailCorrection {
    fn default() -> Self {
        TailCorrection::Continuation { paths: 50, length: None }
    }
}

impl TailCorrection {
    /// Resolves to a concrete covariance at `state`. A continuation length of
    /// `None` means the number of observations `n`.
    pub fn resolve(&self, state: &RegressionEngine, resampler: &CovariateResampler, key: StreamKey) -> Result<TailCovariance> {
        match self {
            TailCorrection::None => Ok(TailCovariance::zero(state.dim() + 1)),
            TailCorrection::Fixed(m) => {
                if m.rows() != state.dim() + 1 {
                    return Err(Error::invalid("tail covariance dimension must be dim(β) + 1"));
                }
                TailCovariance::from_matrix(m)
            }
            TailCorrection::Continuation { paths, length } => {
                TailCovariance::from_continuation(state, resampler, *paths, length.unwrap_or(resampler.len()), key)
            }
        }
    }
}

/// `θ_N + V_N^{1/2}·ε` with `ε` standard normal.
pub fn hybrid_finalize(state: &RegressionEngine, tail: &TailCovariance, rng: &mut PathRng) -> Vec<f64> {
    let theta = state.theta();
    let d = theta.len();
    let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let shift = tail.factor.mul_vec(&eps);
    theta.iter().zip(&shift).map(|(t, s)| t + s).collect()
}
