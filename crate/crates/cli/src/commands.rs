use pbi_core::diagnostics::{Bandwidth, PpcOptions, Sided, TestFunction, TieRule};
use pbi_core::engines::{BiasKind, BiasSchedule, BiasTarget, GaussianFactory, QuadratureSpec, TMleOptions, TailCorrection};
use pbi_core::experiments::{
    run_bahadur_check, run_coverage_link, run_mean_coverage, run_path_fan, run_ppc_study, run_quantile_coverage, run_regression_ppc,
    run_tv_probe, synthetic_regression, tv_partial_sums, CoverageOptions, Dgp, ExperimentSummary, FanSource, RegressionData, RegressionKind,
    RegressionPpcOptions, ResidualLaw, SummaryRow, MIN_REPS,
};
use pbi_core::resampler::{min_draws, HorizonRule};
use pbi_core::rng::StreamKey;
use serde::Serialize;

use crate::args::*;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::ingest::{ingest_csv, ColumnInfo, Schema};
use crate::output::{render_grid, render_summary_table, Cell, Output};

type CliResult<T> = Result<T, CliError>;

pub fn execute(cli: Cli, config: &RunConfig) -> CliResult<()> {
    match cli.command {
        Command::Paths(a) => paths(a, config),
        Command::Coverage(a) => coverage(a, config),
        Command::Quantiles(a) => quantiles(a, config),
        Command::Ppc(a) => ppc(a, config),
        Command::Regression(a) => regression(a, config),
        Command::Tvprobe(a) => tvprobe(a, config),
        Command::Asymptotics(a) => asymptotics(a, config),
    }
}

fn output(common: &CommonArgs, config: &RunConfig) -> CliResult<Output> {
    if common.format.is_empty() {
        return Err(CliError::usage("--format needs at least one of csv, json"));
    }
    let out = Output::new(config, &common.format, common.seed)?;
    out.write_config()?;
    Ok(out)
}

pub fn build_dgp(a: &DgpArgs) -> CliResult<Dgp> {
    match a.dgp {
        DgpKind::Normal => Dgp::normal(a.normal_mean, a.normal_var).map_err(|e| CliError::usage(e.to_string())),
        DgpKind::Gamma => {
            let rate = match (a.gamma_rate, a.gamma_scale) {
                (Some(_), Some(_)) => return Err(CliError::usage("give either --gamma-rate or --gamma-scale, not both")),
                (Some(r), None) => r,
                (None, Some(s)) if s > 0.0 => 1.0 / s,
                (None, Some(s)) => return Err(CliError::usage(format!("--gamma-scale must be positive (got {s})"))),
                (None, None) => 2.0,
            };
            Dgp::gamma_rate(a.gamma_shape, rate).map_err(|e| CliError::usage(e.to_string()))
        }
    }
}

fn bias_target(t: TargetArg) -> BiasTarget {
    match t {
        TargetArg::Mean => BiasTarget::MEAN,
        TargetArg::Variance => BiasTarget::VARIANCE,
        TargetArg::Both => BiasTarget::BOTH,
    }
}

/// Bias schedule names: `none`, `inv_t`, `inv_sqrt_t`, `const_over_n:N`,
/// `prop:γ`, and the shorthands `half_neg` (γ = −1/2) and `prop1` (γ = 1).
pub fn parse_bias(name: &str, target: TargetArg) -> CliResult<BiasSchedule> {
    let bad = || CliError::usage(format!("unknown bias schedule `{name}`"));
    let kind = match name {
        "none" => BiasKind::None,
        "inv_t" => BiasKind::InvT,
        "inv_sqrt_t" => BiasKind::InvSqrtT,
        "half_neg" => BiasKind::Proportional(-0.5),
        "prop1" => BiasKind::Proportional(1.0),
        _ => match name.split_once(':') {
            Some(("const_over_n", v)) => match v.parse::<u64>() {
                Ok(n) if n > 0 => BiasKind::ConstOverN(n),
                _ => return Err(CliError::usage(format!("const_over_n needs a positive integer (got `{v}`)"))),
            },
            Some(("prop", v)) => match v.parse::<f64>() {
                Ok(g) if g.is_finite() => BiasKind::Proportional(g),
                _ => return Err(CliError::usage(format!("prop needs a finite number (got `{v}`)"))),
            },
            _ => return Err(bad()),
        },
    };
    Ok(BiasSchedule::new(kind, bias_target(target)))
}

pub fn parse_horizon(s: &str) -> CliResult<HorizonRule> {
    let bad = || CliError::usage(format!("horizon must be power:E (E > 1), fixed:N or offset:K (got `{s}`)"));
    let (kind, v) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "power" => v.parse::<f64>().ok().filter(|e| *e > 1.0 && e.is_finite()).map(HorizonRule::Power).ok_or_else(bad),
        "fixed" => v.parse::<usize>().map(HorizonRule::Fixed).map_err(|_| bad()),
        "offset" => v.parse::<usize>().ok().filter(|k| *k > 0).map(HorizonRule::Offset).ok_or_else(bad),
        _ => Err(bad()),
    }
}

pub fn parse_test(s: &str) -> CliResult<TestFunction> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    let num = |a: &str| a.parse::<f64>().map_err(|_| CliError::usage(format!("bad parameter in test function `{s}`")));
    Ok(match (kind, arg) {
        ("variance", None) => TestFunction::SampleVariance,
        ("skewness", None) => TestFunction::SampleSkewness,
        ("chi2", None) => TestFunction::Chi2 { fit: None },
        ("tail", None) => TestFunction::TAIL_DEFAULT,
        ("tail", Some(a)) => {
            let level = num(a)?;
            if !(level > 0.0 && level < 1.0) {
                return Err(CliError::usage(format!("tail level must lie in (0, 1) (got {level})")));
            }
            TestFunction::TailAbsResidual { level, center: None }
        }
        ("mmd", None) => TestFunction::Mmd(Bandwidth::MedianHeuristic),
        ("mmd", Some(a)) => {
            let h = num(a)?;
            if !(h > 0.0) {
                return Err(CliError::usage(format!("mmd bandwidth must be positive (got {h})")));
            }
            TestFunction::Mmd(Bandwidth::Fixed(h))
        }
        ("w1", None) | ("wasserstein1", None) => TestFunction::Wasserstein1,
        _ => return Err(CliError::usage(format!("unknown test function `{s}`"))),
    })
}

pub fn parse_residuals(s: &str) -> CliResult<ResidualLaw> {
    if s == "normal" {
        return Ok(ResidualLaw::Normal);
    }
    match s.strip_prefix("t:").map(str::parse::<f64>) {
        Some(Ok(nu)) if nu > 0.0 => Ok(ResidualLaw::StudentT(nu)),
        _ => Err(CliError::usage(format!("residuals must be `normal` or `t:ν` with ν > 0 (got `{s}`)"))),
    }
}

fn tie_rule(t: TieArg) -> TieRule {
    match t {
        TieArg::Ge => TieRule::GreaterEqual,
        TieArg::Midrank => TieRule::Midrank,
    }
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("--alpha must lie in (0, 1) (got {alpha})")))
    }
}

fn check_n_list(ns: &[usize], horizon: &HorizonRule) -> CliResult<()> {
    if ns.is_empty() {
        return Err(CliError::usage("--n needs at least one sample size"));
    }
    for &n in ns {
        if n < 3 {
            return Err(CliError::usage(format!("sample sizes must be at least 3 (got {n})")));
        }
        horizon.horizon(n).map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn check_at_least(flag: &str, value: usize, min: usize) -> CliResult<()> {
    if value >= min {
        Ok(())
    } else {
        Err(CliError::usage(format!("--{flag} must be at least {min} (got {value})")))
    }
}

fn finish_summary(out: &Output, name: &str, summary: &ExperimentSummary) -> CliResult<()> {
    out.write_summary(name, summary)?;
    print!("{}", render_summary_table(summary));
    eprintln!("wrote {}", out.dir().display());
    Ok(())
}

fn coverage(a: CoverageArgs, config: &RunConfig) -> CliResult<()> {
    check_alpha(a.alpha)?;
    let horizon = parse_horizon(&a.horizon)?;
    check_n_list(&a.n, &horizon)?;
    check_at_least("reps", a.reps, MIN_REPS)?;
    check_at_least("paths", a.paths, min_draws(a.alpha))?;
    let dgp = build_dgp(&a.dgp)?;
    let engines = a.bias.iter().map(|b| Ok((b.clone(), GaussianFactory::new(parse_bias(b, a.bias_target)?)))).collect::<CliResult<Vec<_>>>()?;
    let out = output(&a.common, config)?;
    let opts = CoverageOptions { reps: a.reps, paths: a.paths, alpha: a.alpha, horizon, seed: a.common.seed };
    let summary = run_mean_coverage(&dgp, &a.n, &engines, &opts)?;
    finish_summary(&out, "coverage", &summary)
}

fn quantiles(a: QuantilesArgs, config: &RunConfig) -> CliResult<()> {
    check_alpha(a.alpha)?;
    let horizon = parse_horizon(&a.horizon)?;
    check_n_list(&a.n, &horizon)?;
    check_at_least("reps", a.reps, MIN_REPS)?;
    check_at_least("paths", a.paths, min_draws(a.alpha))?;
    if a.q.is_empty() || a.q.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(CliError::usage("--q levels must lie in (0, 1)"));
    }
    let dgp = build_dgp(&a.dgp)?;
    let out = output(&a.common, config)?;
    let opts = CoverageOptions { reps: a.reps, paths: a.paths, alpha: a.alpha, horizon, seed: a.common.seed };
    let summary = run_quantile_coverage(&dgp, &a.n, &a.q, &opts)?;
    finish_summary(&out, "quantiles", &summary)
}

fn ppc(a: PpcArgs, config: &RunConfig) -> CliResult<()> {
    let delta_horizon = parse_horizon(&a.delta_horizon)?;
    check_n_list(&a.n, &HorizonRule::Offset(1))?;
    check_at_least("reps", a.reps, MIN_REPS)?;
    check_at_least("replicates", a.replicates, MIN_REPS)?;
    let tfs = a.tests.iter().map(|t| parse_test(t)).collect::<CliResult<Vec<_>>>()?;
    if tfs.is_empty() {
        return Err(CliError::usage("--tests needs at least one test function"));
    }
    let dgp = build_dgp(&a.dgp)?;
    let out = output(&a.common, config)?;
    let sided = match a.sided {
        SidedArg::Auto => None,
        SidedArg::One => Some(Sided::One),
        SidedArg::Two => Some(Sided::Two),
    };
    let opts = PpcOptions { replicates: a.replicates, delta_horizon, tie_rule: tie_rule(a.tie), sided, ..PpcOptions::default() };
    let summary = run_ppc_study(&dgp, &a.n, &tfs, a.reps, &opts, a.common.seed)?;
    finish_summary(&out, "ppc", &summary)
}

fn paths(a: PathsArgs, config: &RunConfig) -> CliResult<()> {
    check_at_least("paths", a.paths, 1)?;
    if a.keep > a.paths {
        return Err(CliError::usage(format!("--keep ({}) cannot exceed --paths ({})", a.keep, a.paths)));
    }
    let schedule = parse_bias(&a.bias, a.bias_target)?;
    let source = match &a.data {
        Some(path) => {
            let column = a.column.as_deref().ok_or_else(|| CliError::usage("--data needs --column"))?;
            let d = ingest_csv(path, &Schema::outcome_only(column))?;
            if d.dropped_rows > 0 {
                eprintln!("dropped {} rows with missing values", d.dropped_rows);
            }
            if d.len() < 2 {
                return Err(CliError::data(format!("need at least 2 observations in `{column}` (got {})", d.len())));
            }
            FanSource::Data(d.outcome)
        }
        None => {
            check_at_least("n", a.n, 2)?;
            FanSource::Dgp(build_dgp(&a.dgp)?)
        }
    };
    let out = output(&a.common, config)?;
    let fan = run_path_fan(&source, schedule, a.n, a.steps, a.paths, a.keep, a.common.seed)?;

    let mut rows = Vec::new();
    for (id, means, vars) in &fan.retained {
        for (functional, values) in [("mean", means), ("variance", vars)] {
            for (&step, &v) in fan.steps.iter().zip(values.iter()) {
                rows.push(vec![Cell::from(*id), step.into(), functional.into(), v.into()]);
            }
        }
    }
    out.write_csv("fan_paths", &["path_id", "step", "functional", "value"], &rows)?;
    let mut bands = Vec::new();
    for (functional, list) in [("mean", &fan.mean_bands), ("variance", &fan.variance_bands)] {
        for b in list.iter() {
            bands.push(vec![functional.into(), b.step.into(), b.q05.into(), b.q25.into(), b.median.into(), b.q75.into(), b.q95.into()]);
        }
    }
    out.write_csv("fan_bands", &["functional", "step", "q05", "q25", "median", "q75", "q95"], &bands)?;
    out.write_json("fan", &fan)?;

    let last = |l: &[pbi_core::experiments::FanBand]| l.last().copied().expect("grid contains step 0");
    let body: Vec<[String; 5]> = [("mean", fan.initial.0, last(&fan.mean_bands)), ("variance", fan.initial.1, last(&fan.variance_bands))]
        .iter()
        .map(|(f, init, b)| [f.to_string(), format!("{init:.3}"), format!("{:.3}", b.q05), format!("{:.3}", b.median), format!("{:.3}", b.q95)])
        .collect();
    print!("{}", render_grid(&["functional", "initial", "final q05", "final median", "final q95"], &body));
    eprintln!("wrote {}", out.dir().display());
    Ok(())
}

#[derive(Serialize)]
struct DatasetInfo {
    source: String,
    n: usize,
    columns: Vec<ColumnInfo>,
    dropped_rows: usize,
}

#[derive(Serialize)]
struct RegressionOutput {
    dataset: DatasetInfo,
    reports: Vec<pbi_core::experiments::RegressionPpc>,
}

fn regression(a: RegressionArgs, config: &RunConfig) -> CliResult<()> {
    check_at_least("replicates", a.replicates, 20)?;
    check_at_least("starts", a.starts, 1)?;
    check_at_least("tail-paths", a.tail_paths, 2)?;
    if !(a.nu > 0.0) {
        return Err(CliError::usage(format!("--nu must be positive (got {})", a.nu)));
    }
    if !(a.tail_level > 0.0 && a.tail_level < 1.0) {
        return Err(CliError::usage(format!("--tail-level must lie in (0, 1) (got {})", a.tail_level)));
    }
    if a.engines.is_empty() {
        return Err(CliError::usage("--engines needs at least one engine"));
    }
    let root = StreamKey::new(a.common.seed).named("regression");
    let (data, info) = match &a.data {
        Some(path) => {
            let outcome = a.outcome.as_deref().ok_or_else(|| CliError::usage("--data needs --outcome"))?;
            let schema =
                Schema { outcome: outcome.to_owned(), covariates: a.covariates.clone(), dummies: a.dummies.clone(), auto_dummies: a.auto_dummies, standardize: a.standardize };
            let d = ingest_csv(path, &schema)?;
            if d.dropped_rows > 0 {
                eprintln!("dropped {} rows with missing values", d.dropped_rows);
            }
            let x = d.design_with_intercept()?;
            let info = DatasetInfo { source: path.display().to_string(), n: d.len(), columns: d.columns.clone(), dropped_rows: d.dropped_rows };
            (RegressionData { x, y: d.outcome }, info)
        }
        None => {
            let law = parse_residuals(&a.residuals)?;
            if a.synthetic_d == 0 || a.synthetic_n <= a.synthetic_d {
                return Err(CliError::usage(format!("need --synthetic-n > --synthetic-d ≥ 1 (got {}, {})", a.synthetic_n, a.synthetic_d)));
            }
            let data = synthetic_regression(a.synthetic_n, a.synthetic_d, law, root.named("synthetic"))?;
            let info = DatasetInfo { source: format!("synthetic({})", a.residuals), n: a.synthetic_n, columns: Vec::new(), dropped_rows: 0 };
            (data, info)
        }
    };
    if data.x.rows() <= data.x.cols() {
        return Err(CliError::data(format!("need more rows than design columns (got {} ≤ {})", data.x.rows(), data.x.cols())));
    }
    let out = output(&a.common, config)?;
    let opts = RegressionPpcOptions {
        replicates: a.replicates,
        horizon: a.horizon_steps,
        tail: TailCorrection::Continuation { paths: a.tail_paths, length: None },
        tail_level: a.tail_level,
        tmle: TMleOptions { nu: a.nu, starts: a.starts, ..TMleOptions::default() },
        tie_rule: tie_rule(a.tie),
    };
    let mut reports = Vec::new();
    for engine in &a.engines {
        let kind = match engine {
            EngineArg::Gaussian => RegressionKind::Gaussian,
            EngineArg::StudentT => RegressionKind::StudentT,
        };
        reports.push(run_regression_ppc(&data, kind, &opts, root.named("ppc"))?);
    }

    let mut summary = Vec::new();
    let mut reps = Vec::new();
    let mut table = Vec::new();
    for r in &reports {
        for rep in [&r.chi2, &r.tail] {
            let k = rep.deltas.len() as f64;
            let mean = rep.mean_delta();
            let sd = (rep.deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
            summary.push(vec![
                r.engine.as_str().into(),
                rep.test_function.as_str().into(),
                rep.s_obs.into(),
                rep.u.into(),
                rep.p.into(),
                mean.into(),
                sd.into(),
                rep.s_rep.len().into(),
                Cell::Text(r.floored.to_string()),
                Cell::Text(r.projected.to_string()),
            ]);
            for (b, (s, d)) in rep.s_rep.iter().zip(&rep.deltas).enumerate() {
                reps.push(vec![r.engine.as_str().into(), rep.test_function.as_str().into(), b.into(), (*s).into(), (*d).into()]);
            }
            table.push([r.engine.clone(), rep.test_function.clone(), format!("{:.3}", rep.s_obs), format!("{:.3}", rep.p), format!("{mean:.3}"), format!("{sd:.3}")]);
        }
    }
    out.write_csv("regression", &["engine", "test", "s_obs", "u", "p", "avg_diff", "sd_diff", "B", "tau2_floored", "tail_cov_projected"], &summary)?;
    out.write_csv("regression_replicates", &["engine", "test", "b", "s_rep", "delta"], &reps)?;
    out.write_json("regression", &RegressionOutput { dataset: info, reports })?;
    print!("{}", render_grid(&["engine", "test", "s_obs", "p", "avg_diff", "sd_diff"], &table));
    eprintln!("wrote {}", out.dir().display());
    Ok(())
}

#[derive(Serialize)]
struct TvOutput {
    rows: Vec<(String, pbi_core::experiments::TvRow)>,
    partial_sums: Vec<(String, u64, f64)>,
}

fn tvprobe(a: TvprobeArgs, config: &RunConfig) -> CliResult<()> {
    if a.t.is_empty() || a.t.contains(&0) {
        return Err(CliError::usage("--t needs positive steps"));
    }
    if !(a.sigma > 0.0) {
        return Err(CliError::usage(format!("--sigma must be positive (got {})", a.sigma)));
    }
    check_at_least("hermite-order", a.hermite_order, 2)?;
    check_at_least("grid-points", a.grid_points, 3)?;
    check_at_least("points-per-decade", a.points_per_decade, 1)?;
    let schedules = a.bias.iter().map(|b| Ok((b.clone(), parse_bias(b, a.bias_target)?))).collect::<CliResult<Vec<_>>>()?;
    let out = output(&a.common, config)?;
    let quad = QuadratureSpec { hermite_order: a.hermite_order, grid_points: a.grid_points, ..QuadratureSpec::default() };
    let mut data = TvOutput { rows: Vec::new(), partial_sums: Vec::new() };
    for (name, s) in &schedules {
        for row in run_tv_probe(*s, &a.t, a.mu, a.sigma, &quad)? {
            data.rows.push((name.clone(), row));
        }
        if a.partial_sums_max > 0 {
            for (t, v) in tv_partial_sums(*s, a.partial_sums_max, a.exact_upto, a.points_per_decade, &quad)? {
                data.partial_sums.push((name.clone(), t, v));
            }
        }
    }
    let rows: Vec<Vec<Cell>> = data.rows.iter().map(|(n, r)| vec![n.as_str().into(), r.t.into(), r.delta.into(), r.bound.into()]).collect();
    out.write_csv("tvprobe", &["schedule", "t", "delta", "bound"], &rows)?;
    let sums: Vec<Vec<Cell>> = data.partial_sums.iter().map(|(n, t, v)| vec![n.as_str().into(), (*t).into(), (*v).into()]).collect();
    out.write_csv("tv_partial_sums", &["schedule", "t", "partial_sum"], &sums)?;
    out.write_json("tvprobe", &data)?;
    let body: Vec<[String; 4]> = data.rows.iter().map(|(n, r)| [n.clone(), r.t.to_string(), format!("{:.3e}", r.delta), format!("{:.3e}", r.bound)]).collect();
    print!("{}", render_grid(&["schedule", "t", "delta", "bound"], &body));
    eprintln!("wrote {}", out.dir().display());
    Ok(())
}

fn asymptotics(a: AsymptoticsArgs, config: &RunConfig) -> CliResult<()> {
    check_alpha(a.alpha)?;
    let horizon = parse_horizon(&a.horizon)?;
    let bahadur_horizon = parse_horizon(&a.bahadur_horizon)?;
    check_n_list(&[a.n], &horizon)?;
    check_n_list(&[a.bahadur_n], &bahadur_horizon)?;
    check_at_least("reps", a.reps, MIN_REPS)?;
    check_at_least("paths", a.paths, min_draws(a.alpha))?;
    check_at_least("bahadur-paths", a.bahadur_paths, 2)?;
    if a.ratios.is_empty() || a.ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(CliError::usage("--ratios must be positive"));
    }
    if a.q.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(CliError::usage("--q levels must lie in (0, 1)"));
    }
    let dgp = build_dgp(&a.dgp)?;
    let out = output(&a.common, config)?;
    let opts = CoverageOptions { reps: a.reps, paths: a.paths, alpha: a.alpha, horizon, seed: a.common.seed };
    let mut summary = run_coverage_link(&dgp, a.n, &a.ratios, &opts)?;
    for &q in &a.q {
        let b = run_bahadur_check(&dgp, a.bahadur_n, q, a.bahadur_paths, bahadur_horizon, a.common.seed)?;
        let row = |metric: &str, estimate: f64, mc_se: f64| SummaryRow {
            dgp: dgp.describe(),
            n: b.n,
            config: String::from("gpe"),
            target: format!("quantile({q})"),
            metric: metric.to_owned(),
            estimate,
            mc_se,
            reps: 1,
            paths: b.paths,
        };
        let se = b.scaled_variance * (2.0 / (b.paths as f64 - 1.0)).sqrt();
        summary.rows.push(row("scaled_variance", b.scaled_variance, se));
        summary.rows.push(row("engine_limit", b.engine_limit, 0.0));
        summary.rows.push(row("dgp_limit", b.dgp_limit, 0.0));
        summary.rows.push(row("parametric_limit", b.parametric_limit, 0.0));
    }
    finish_summary(&out, "asymptotics", &summary)
}
