//! Monte-Carlo sweeps, figure presets and CSV output.
//!
//! An [`ExperimentSpec`] names a sweep variable and grid, an optional
//! second ("series") axis, the detector schemes and a trial count. Trial
//! `t` draws its users with [`trial_seed`]`(seed, t)` at every sweep point,
//! so curves share their random drops. Output is deterministic for a given
//! spec regardless of thread count.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rayon::prelude::*;

use crate::boundary::{phase_boundary_distance, power_boundary_distance};
use crate::detectors::{evaluate_scheme, Scheme};
use crate::em_channel::channel_matrix;
use crate::error::{domain, Error, Result};
use crate::partition::{complexity_estimate, partition_users, MisStrategy};
use crate::scenario::{Scenario, UserLocation};
use crate::snr::{
    snr_asymptotic, snr_far_field_reference, snr_ula_asymptotic, snr_ula_closed, snr_upa_closed,
    snr_upa_no_polarization, snr_upa_sum, Aperture, AsymptoticKind, FarFieldForm, SnrQuery,
};
use crate::visibility::{detect_vrs, occupancy_ratio, SubArrayGrid, VisibilityRegion};

/// Monte-Carlo trials per point when none is given.
pub const DEFAULT_TRIALS: usize = 100;

/// Per-trial seed: a SplitMix64 finaliser applied to
/// `master + (trial + 1) · 0x9E3779B97F4A7C15`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepVariable {
    /// Total antenna count.
    M,
    K,
    Varpi,
    SOvp,
    /// Power-variation threshold of the boundary map.
    Vt,
    /// User `y` coordinate of an SNR curve.
    Uy,
    /// Elevation angle of a boundary-map ray.
    PsiE,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::M => "M",
            SweepVariable::K => "K",
            SweepVariable::Varpi => "varpi",
            SweepVariable::SOvp => "s_ovp",
            SweepVariable::Vt => "v_t",
            SweepVariable::Uy => "u_y",
            SweepVariable::PsiE => "psi_e",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "M" | "m" => SweepVariable::M,
            "K" | "k" => SweepVariable::K,
            "varpi" => SweepVariable::Varpi,
            "s_ovp" => SweepVariable::SOvp,
            "v_t" => SweepVariable::Vt,
            "u_y" => SweepVariable::Uy,
            "psi_e" => SweepVariable::PsiE,
            other => return Err(domain(format!("unknown sweep variable '{other}'"))),
        })
    }

    fn is_scenario_axis(self) -> bool {
        matches!(
            self,
            SweepVariable::M | SweepVariable::K | SweepVariable::Varpi | SweepVariable::SOvp
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayShape {
    /// Square planar array, `M_x = M_y = √M`.
    Upa,
    /// Linear array, `M_x = M`, `M_y = 1`.
    Ula,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentKind {
    /// Single-user SNR against `M`; the scenario supplies `λ`, spacing,
    /// element area and `ρ`. The brute-force sum is skipped above
    /// `sum_limit` antennas.
    SnrCurve {
        shape: ArrayShape,
        user: [f64; 3],
        sum_limit: usize,
    },
    /// Phase and power boundaries of a `side × side` array on the
    /// `u_y = 0` plane; sweep `v_t`, series `psi_e`.
    BoundaryMap { side: usize },
    /// VR occupancy ratio.
    Occupancy,
    /// Sum rate per detector scheme.
    SumRate,
    /// Operation-count estimates from measured VR sizes and group counts.
    Complexity,
}

impl ExperimentKind {
    fn is_deterministic(&self) -> bool {
        matches!(self, ExperimentKind::SnrCurve { .. } | ExperimentKind::BoundaryMap { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: Scenario,
    pub kind: ExperimentKind,
    pub sweep: SweepVariable,
    pub grid: Vec<f64>,
    pub series: Option<Series>,
    pub schemes: Vec<Scheme>,
    /// Ignored by the deterministic kinds, which evaluate each point once.
    pub trials: usize,
    pub seed: u64,
    pub strategy: MisStrategy,
}

impl ExperimentSpec {
    pub fn new(name: &str, scenario: Scenario, kind: ExperimentKind, sweep: SweepVariable, grid: Vec<f64>) -> Self {
        let seed = scenario.seed;
        Self {
            name: name.to_string(),
            scenario,
            kind,
            sweep,
            grid,
            series: None,
            schemes: Vec::new(),
            trials: DEFAULT_TRIALS,
            seed,
            strategy: MisStrategy::default(),
        }
    }

    pub fn with_series(mut self, variable: SweepVariable, values: Vec<f64>) -> Self {
        self.series = Some(Series { variable, values });
        self
    }

    pub fn with_schemes(mut self, schemes: &[Scheme]) -> Self {
        self.schemes = schemes.to_vec();
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn effective_trials(&self) -> usize {
        if self.kind.is_deterministic() {
            1
        } else {
            self.trials
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(domain("sweep grid is empty"));
        }
        if self.trials == 0 {
            return Err(domain("at least one trial is required"));
        }
        if let Some(s) = &self.series {
            if s.values.is_empty() {
                return Err(domain("series grid is empty"));
            }
            if s.variable == self.sweep {
                return Err(domain("series and sweep use the same variable"));
            }
        }
        let series_var = self.series.as_ref().map(|s| s.variable);
        match &self.kind {
            ExperimentKind::SnrCurve { .. } => {
                if self.sweep != SweepVariable::M || series_var.is_some_and(|v| v != SweepVariable::Uy) {
                    return Err(domain("snr curves sweep M, optionally per u_y"));
                }
            }
            ExperimentKind::BoundaryMap { side } => {
                if *side == 0 || self.sweep != SweepVariable::Vt || series_var != Some(SweepVariable::PsiE) {
                    return Err(domain("boundary maps sweep v_t per psi_e"));
                }
            }
            kind => {
                if !self.sweep.is_scenario_axis() || series_var.is_some_and(|v| !v.is_scenario_axis()) {
                    return Err(domain("sweep variables must be M, K, varpi or s_ovp"));
                }
                let needs_schemes = matches!(kind, ExperimentKind::SumRate | ExperimentKind::Complexity);
                if needs_schemes && self.schemes.is_empty() {
                    return Err(domain("no schemes selected"));
                }
                if *kind == ExperimentKind::Complexity {
                    if let Some(s) = self
                        .schemes
                        .iter()
                        .find(|s| !matches!(s, Scheme::Zf | Scheme::VrZf | Scheme::Pzf))
                    {
                        return Err(domain(format!("no complexity estimate for {s}")));
                    }
                }
            }
        }
        let axes = std::iter::once((self.sweep, &self.grid)).chain(self.series.iter().map(|s| (s.variable, &s.values)));
        for (var, values) in axes {
            for &v in values.iter() {
                if !v.is_finite() {
                    return Err(domain(format!("non-finite {} value", var.as_str())));
                }
                if matches!(var, SweepVariable::M | SweepVariable::K) && (v < 1.0 || v.fract() != 0.0) {
                    return Err(domain(format!("{} must be a positive integer, got {v}", var.as_str())));
                }
            }
        }
        Ok(())
    }
}

/// Aggregate of one metric at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub sweep: SweepVariable,
    pub sweep_value: f64,
    pub series: Option<(SweepVariable, f64)>,
    /// Detector scheme, or `-` for scheme-independent metrics.
    pub scheme: String,
    pub metric: String,
    /// Mean over successful trials.
    pub mean: f64,
    /// Sample standard deviation (`n - 1`); zero for a single value.
    pub std_dev: f64,
    /// Trials attempted.
    pub trials: usize,
    /// Trials that returned an error for this metric.
    pub failed: usize,
    pub seed: u64,
}

/// A metric that could not be evaluated in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub sweep_value: f64,
    pub series_value: Option<f64>,
    pub scheme: String,
    pub metric: String,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Points where every trial failed have no record; they appear in
    /// `failures` only.
    pub records: Vec<ResultRecord>,
    pub failures: Vec<TrialFailure>,
}

impl ExperimentOutput {
    /// Records for one scheme and metric, in output order.
    pub fn select<'a>(&'a self, scheme: &'a str, metric: &'a str) -> impl Iterator<Item = &'a ResultRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.scheme == scheme && r.metric == metric)
    }

    pub fn find(&self, sweep_value: f64, series_value: Option<f64>, scheme: &str, metric: &str) -> Option<&ResultRecord> {
        self.records.iter().find(|r| {
            r.sweep_value == sweep_value
                && r.series.map(|s| s.1) == series_value
                && r.scheme == scheme
                && r.metric == metric
        })
    }
}

struct Sample {
    scheme: String,
    metric: &'static str,
    value: Result<f64, String>,
}

fn ok(scheme: &str, metric: &'static str, v: f64) -> Sample {
    Sample {
        scheme: scheme.to_string(),
        metric,
        value: Ok(v),
    }
}

fn sample(scheme: &str, metric: &'static str, v: Result<f64>) -> Sample {
    Sample {
        scheme: scheme.to_string(),
        metric,
        value: v.map_err(|e| e.to_string()),
    }
}

const NO_SCHEME: &str = "-";

fn apply_axis(sc: &Scenario, var: SweepVariable, v: f64) -> Result<Scenario> {
    let mut out = sc.clone();
    match var {
        SweepVariable::M => return sc.with_total_antennas(v as usize),
        SweepVariable::K => out.k = v as usize,
        SweepVariable::Varpi => out.varpi = v,
        SweepVariable::SOvp => out.s_ovp = v,
        _ => {}
    }
    out.validate()?;
    Ok(out)
}

/// Scenario at a sweep point; `M` is applied first so the other axes see
/// the resized array.
fn point_scenario(spec: &ExperimentSpec, x: f64, series: Option<f64>) -> Result<Scenario> {
    if spec.kind.is_deterministic() {
        // These kinds size their own arrays.
        return Ok(spec.scenario.clone());
    }
    let mut axes = vec![(spec.sweep, x)];
    if let (Some(s), Some(v)) = (&spec.series, series) {
        axes.push((s.variable, v));
    }
    axes.sort_by_key(|(var, _)| *var != SweepVariable::M);
    let mut sc = spec.scenario.clone();
    for (var, v) in axes {
        sc = apply_axis(&sc, var, v)?;
    }
    Ok(sc)
}

fn snr_curve_samples(sc: &Scenario, shape: ArrayShape, user: [f64; 3], m: usize, sum_limit: usize) -> Vec<Sample> {
    let eval = || -> Result<Vec<Sample>> {
        let cfg = match shape {
            ArrayShape::Upa => {
                let side = (m as f64).sqrt().round() as usize;
                if side * side != m {
                    return Err(domain(format!("M = {m} is not a perfect square")));
                }
                sc.array.with_counts(side, side)?
            }
            ArrayShape::Ula => sc.array.with_counts(m, 1)?,
        };
        let u = UserLocation::new(user[0], user[1], user[2])?;
        let q = SnrQuery::new(cfg, u, sc.rho)?;
        let mut out = Vec::new();
        let (closed, asym) = match shape {
            ArrayShape::Upa => (
                snr_upa_closed(&q, Aperture::Discrete),
                snr_asymptotic(AsymptoticKind::DiscretePolarized, cfg.eta(), sc.rho)?,
            ),
            ArrayShape::Ula => (
                snr_ula_closed(&q)?,
                snr_ula_asymptotic(user[1], user[2], &cfg, sc.rho, true)?,
            ),
        };
        out.push(ok(NO_SCHEME, "snr_closed", closed));
        if m <= sum_limit {
            out.push(sample(NO_SCHEME, "snr_sum", snr_upa_sum(&q)));
        }
        out.push(ok(NO_SCHEME, "snr_no_pol", snr_upa_no_polarization(&q, Aperture::Discrete)));
        out.push(ok(NO_SCHEME, "snr_far", snr_far_field_reference(&q, FarFieldForm::Projected)));
        out.push(ok(NO_SCHEME, "snr_asymptote", asym));
        Ok(out)
    };
    eval().unwrap_or_else(|e| vec![sample(NO_SCHEME, "snr_closed", Err(e))])
}

fn boundary_samples(sc: &Scenario, side: usize, v_t: f64, psi_e: f64) -> Vec<Sample> {
    let cfg = match sc.array.with_counts(side, side) {
        Ok(c) => c,
        Err(e) => return vec![sample(NO_SCHEME, "phase_boundary_m", Err(e))],
    };
    let r = match phase_boundary_distance(&cfg, psi_e, 0.0) {
        Ok(r) => r,
        Err(e) => return vec![sample(NO_SCHEME, "phase_boundary_m", Err(e))],
    };
    let u_x = r * psi_e.sin();
    vec![
        ok(NO_SCHEME, "phase_boundary_m", r),
        ok(NO_SCHEME, "u_x", u_x),
        ok(NO_SCHEME, "u_z", r * psi_e.cos()),
        sample(NO_SCHEME, "power_boundary_m", power_boundary_distance(&cfg, u_x, 0.0, v_t)),
    ]
}

/// Users, VRs and their sub-array grid for one trial.
fn drop_users(sc: &Scenario, seed: u64) -> Result<(Vec<UserLocation>, SubArrayGrid, Vec<VisibilityRegion>)> {
    let users = sc.users(seed)?;
    let grid = SubArrayGrid::from_scenario(sc)?;
    let vrs = detect_vrs(&grid, &users, sc.rho, sc.varpi)?;
    Ok((users, grid, vrs))
}

fn occupancy_samples(sc: &Scenario, seed: u64) -> Vec<Sample> {
    match drop_users(sc, seed) {
        Ok((_, grid, vrs)) => {
            let mean_members = vrs.iter().map(|v| v.len() as f64).sum::<f64>() / vrs.len() as f64;
            vec![
                sample(NO_SCHEME, "r_oc", occupancy_ratio(&vrs, grid.count())),
                ok(NO_SCHEME, "mean_members", mean_members),
            ]
        }
        Err(e) => vec![sample(NO_SCHEME, "r_oc", Err(e))],
    }
}

fn sum_rate_samples(sc: &Scenario, schemes: &[Scheme], strategy: MisStrategy, seed: u64) -> Vec<Sample> {
    let prepared = (|| -> Result<_> {
        let (users, grid, vrs) = drop_users(sc, seed)?;
        let h = channel_matrix(&sc.array, &users)?;
        let groups = if schemes.contains(&Scheme::Pzf) {
            Some(partition_users(&vrs, sc.s_ovp, strategy)?.1)
        } else {
            None
        };
        Ok((h, grid, vrs, groups))
    })();
    let (h, grid, vrs, grouping) = match prepared {
        Ok(p) => p,
        Err(e) => {
            let msg = e.to_string();
            return schemes
                .iter()
                .map(|s| Sample {
                    scheme: s.to_string(),
                    metric: "sum_rate",
                    value: Err(msg.clone()),
                })
                .collect();
        }
    };
    let groups = grouping.as_ref().map(|g| g.groups.as_slice());
    let mut out = Vec::new();
    for &s in schemes {
        let name = s.as_str();
        match evaluate_scheme(&h, s, sc.rho, Some(&grid), Some(&vrs), groups) {
            Ok(o) => {
                out.push(ok(name, "sum_rate", o.metrics.sum_rate));
                if s == Scheme::VrZf {
                    out.push(ok(name, "fallback_users", o.fallbacks as f64));
                }
                if let Some(nom) = o.nominal {
                    out.push(ok(name, "sum_rate_nominal", nom.sum_rate));
                }
                if let (Scheme::Pzf, Some(g)) = (s, &grouping) {
                    out.push(ok(name, "groups", g.anchors.len() as f64));
                }
            }
            Err(e) => out.push(sample(name, "sum_rate", Err(e))),
        }
    }
    out
}

fn complexity_samples(sc: &Scenario, schemes: &[Scheme], strategy: MisStrategy, seed: u64) -> Vec<Sample> {
    let measured = (|| -> Result<_> {
        let (_, grid, vrs) = drop_users(sc, seed)?;
        let (_, grouping) = partition_users(&vrs, sc.s_ovp, strategy)?;
        let mean_b = vrs.iter().map(|v| v.len() as f64).sum::<f64>() / vrs.len() as f64;
        Ok((grid.count() as f64, mean_b, grouping.anchors.len() as f64))
    })();
    match measured {
        Ok((s_count, mean_b, i_count)) => {
            let (m, k) = (sc.array.m() as f64, sc.k as f64);
            let mut out = vec![ok(NO_SCHEME, "mean_vr_size", mean_b), ok(NO_SCHEME, "groups", i_count)];
            for &s in schemes {
                out.push(sample(
                    s.as_str(),
                    "operations",
                    complexity_estimate(s, m, k, s_count, mean_b, i_count),
                ));
            }
            out
        }
        Err(e) => {
            let msg = e.to_string();
            schemes
                .iter()
                .map(|s| Sample {
                    scheme: s.to_string(),
                    metric: "operations",
                    value: Err(msg.clone()),
                })
                .collect()
        }
    }
}

fn evaluate(spec: &ExperimentSpec, x: f64, series: Option<f64>, trial: usize) -> Vec<Sample> {
    let seed = trial_seed(spec.seed, trial as u64);
    let sc = match point_scenario(spec, x, series) {
        Ok(sc) => sc,
        Err(e) => return vec![sample(NO_SCHEME, "scenario", Err(e))],
    };
    match &spec.kind {
        ExperimentKind::SnrCurve { shape, user, sum_limit } => {
            let mut u = *user;
            if let Some(uy) = series {
                u[1] = uy;
            }
            snr_curve_samples(&sc, *shape, u, x as usize, *sum_limit)
        }
        ExperimentKind::BoundaryMap { side } => boundary_samples(&sc, *side, x, series.unwrap_or(0.0)),
        ExperimentKind::Occupancy => occupancy_samples(&sc, seed),
        ExperimentKind::SumRate => sum_rate_samples(&sc, &spec.schemes, spec.strategy, seed),
        ExperimentKind::Complexity => complexity_samples(&sc, &spec.schemes, spec.strategy, seed),
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (series, sweep point, trial) combination in parallel and
/// aggregates per metric. Records are ordered by series value, sweep value,
/// then first appearance of (scheme, metric).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let trials = spec.effective_trials();
    let series_values: Vec<Option<f64>> = match &spec.series {
        Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let mut jobs = Vec::new();
    for (si, &sv) in series_values.iter().enumerate() {
        for (pi, &x) in spec.grid.iter().enumerate() {
            for t in 0..trials {
                jobs.push((si, pi, sv, x, t));
            }
        }
    }
    let results: Vec<Vec<Sample>> = jobs
        .par_iter()
        .map(|&(_, _, sv, x, t)| evaluate(spec, x, sv, t))
        .collect();

    struct Acc {
        key: (usize, usize, usize),
        scheme: String,
        metric: &'static str,
        values: Vec<f64>,
        failed: usize,
    }
    let mut accs: Vec<Acc> = Vec::new();
    let mut index: HashMap<(usize, usize, String, &'static str), usize> = HashMap::new();
    let mut failures = Vec::new();
    for (&(si, pi, sv, x, t), samples) in jobs.iter().zip(results) {
        for s in samples {
            let id = (si, pi, s.scheme.clone(), s.metric);
            let slot = *index.entry(id).or_insert_with(|| {
                accs.push(Acc {
                    key: (si, pi, accs.len()),
                    scheme: s.scheme.clone(),
                    metric: s.metric,
                    values: Vec::new(),
                    failed: 0,
                });
                accs.len() - 1
            });
            match s.value {
                Ok(v) => accs[slot].values.push(v),
                Err(message) => {
                    accs[slot].failed += 1;
                    failures.push(TrialFailure {
                        sweep_value: x,
                        series_value: sv,
                        scheme: s.scheme,
                        metric: s.metric.to_string(),
                        trial: t,
                        message,
                    });
                }
            }
        }
    }
    accs.sort_by_key(|a| a.key);
    let series_var = spec.series.as_ref().map(|s| s.variable);
    let records = accs
        .into_iter()
        .filter(|a| !a.values.is_empty())
        .map(|a| {
            let (si, pi, _) = a.key;
            let (mean, std_dev) = mean_std(&a.values);
            ResultRecord {
                sweep: spec.sweep,
                sweep_value: spec.grid[pi],
                series: series_var.map(|v| (v, series_values[si].unwrap_or(f64::NAN))),
                scheme: a.scheme,
                metric: a.metric.to_string(),
                mean,
                std_dev,
                trials,
                failed: a.failed,
                seed: spec.seed,
            }
        })
        .collect();
    Ok(ExperimentOutput { records, failures })
}

/// Numbers are written as `{:.16e}` (17 significant digits, `.` decimal
/// point), which round-trips every `f64` exactly.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub const CSV_HEADER: &str = "sweep,sweep_value,series,series_value,scheme,metric,mean,std,trials,failed,seed";

/// Writes a header and one row per record.
pub fn emit_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    if records.is_empty() {
        return Err(domain("no records to write"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_error)?;
    for r in records {
        let (sv, sx) = match r.series {
            Some((v, x)) => (v.as_str().to_string(), fmt_num(x)),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.sweep.as_str().to_string(),
            fmt_num(r.sweep_value),
            sv,
            sx,
            r.scheme.clone(),
            r.metric.clone(),
            fmt_num(r.mean),
            fmt_num(r.std_dev),
            r.trials.to_string(),
            r.failed.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Inverse of [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    rdr.records()
        .enumerate()
        .map(|(i, row)| {
            let f = row.map_err(csv_error)?;
            let bad = |what: &str| Error::Config(format!("row {}: bad {what}", i + 1));
            let num = |j: usize, what: &str| f[j].parse::<f64>().map_err(|_| bad(what));
            let series = if f[2].is_empty() {
                None
            } else {
                Some((SweepVariable::parse(&f[2])?, num(3, "series value")?))
            };
            Ok(ResultRecord {
                sweep: SweepVariable::parse(&f[0])?,
                sweep_value: num(1, "sweep value")?,
                series,
                scheme: f[4].to_string(),
                metric: f[5].to_string(),
                mean: num(6, "mean")?,
                std_dev: num(7, "std")?,
                trials: f[8].parse().map_err(|_| bad("trials"))?,
                failed: f[9].parse().map_err(|_| bad("failed"))?,
                seed: f[10].parse().map_err(|_| bad("seed"))?,
            })
        })
        .collect()
}

pub const PRESET_NAMES: [&str; 8] = ["fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12"];

/// Experiment presets for the published figures, on the multi-user
/// defaults of [`Scenario::default_multi_user`].
///
/// | name  | content                                                  |
/// |-------|----------------------------------------------------------|
/// | fig5  | UPA SNR vs `M`, `u = [10, 10, 10]`, `M_x = M_y = √M`      |
/// | fig6  | ULA SNR vs `M`, `u = [0, u_y, 10]`, `u_y ∈ {0, 5, 10}`    |
/// | fig7  | WA vs VR sum rate vs `M`, MRC/ZF/MMSE                     |
/// | fig8  | phase/power boundaries, 25×25, `v_t ∈ {0.9, 0.95}`        |
/// | fig9  | `r_oc` vs `ϖ` for several `M`                             |
/// | fig10 | VR-ZF vs UP-PZF vs `M`, `K ∈ {10, 20}`, `ϖ = 0.8`, `ŝ = 0.6` |
/// | fig11 | operation counts vs `M`                                   |
/// | fig12 | sum rate vs `K`                                           |
pub fn preset_figure(name: &str) -> Result<ExperimentSpec> {
    let sc = Scenario::default_multi_user();
    let m_sweep = vec![1e3, 2.5e3, 5e3, 1e4, 2e4];
    Ok(match name {
        "fig5" => {
            let sides = [10.0, 30.0, 100.0, 300.0, 1e3, 3e3, 1e4];
            let grid = sides.iter().map(|s: &f64| s * s).collect();
            ExperimentSpec::new(
                name,
                sc,
                ExperimentKind::SnrCurve {
                    shape: ArrayShape::Upa,
                    user: [10.0, 10.0, 10.0],
                    sum_limit: 1_000_000,
                },
                SweepVariable::M,
                grid,
            )
            .with_trials(1)
        }
        "fig6" => ExperimentSpec::new(
            name,
            sc,
            ExperimentKind::SnrCurve {
                shape: ArrayShape::Ula,
                user: [0.0, 0.0, 10.0],
                sum_limit: 100_000,
            },
            SweepVariable::M,
            vec![10.0, 30.0, 100.0, 300.0, 1e3, 3e3, 1e4, 3e4, 1e5],
        )
        .with_series(SweepVariable::Uy, vec![0.0, 5.0, 10.0])
        .with_trials(1),
        "fig7" => ExperimentSpec::new(name, sc, ExperimentKind::SumRate, SweepVariable::M, m_sweep).with_schemes(&[
            Scheme::Mrc,
            Scheme::Zf,
            Scheme::Mmse,
            Scheme::VrZf,
            Scheme::VrMmse,
        ]),
        "fig8" => {
            let psi: Vec<f64> = (0..25).map(|j| j as f64 * FRAC_PI_2 / 25.0).collect();
            ExperimentSpec::new(
                name,
                sc,
                ExperimentKind::BoundaryMap { side: 25 },
                SweepVariable::Vt,
                vec![0.9, 0.95],
            )
            .with_series(SweepVariable::PsiE, psi)
            .with_trials(1)
        }
        "fig9" => ExperimentSpec::new(
            name,
            sc,
            ExperimentKind::Occupancy,
            SweepVariable::Varpi,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99],
        )
        .with_series(SweepVariable::M, vec![1e3, 2.5e3, 1e4, 4e4]),
        "fig10" => ExperimentSpec::new(name, sc, ExperimentKind::SumRate, SweepVariable::M, m_sweep)
            .with_series(SweepVariable::K, vec![10.0, 20.0])
            .with_schemes(&[Scheme::VrZf, Scheme::Pzf]),
        "fig11" => ExperimentSpec::new(
            name,
            sc,
            ExperimentKind::Complexity,
            SweepVariable::M,
            vec![1e3, 2.5e3, 5e3, 1e4, 2e4, 5e4, 1e5],
        )
        .with_schemes(&[Scheme::Zf, Scheme::VrZf, Scheme::Pzf]),
        "fig12" => ExperimentSpec::new(
            name,
            sc,
            ExperimentKind::SumRate,
            SweepVariable::K,
            vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        )
        .with_schemes(&Scheme::ALL),
        other => {
            return Err(domain(format!(
                "unknown figure '{other}' (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

/// One output row per (series, sweep value, scheme) with the metric means
/// and standard deviations side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct WideRow {
    pub sweep_value: f64,
    pub series_value: Option<f64>,
    pub scheme: String,
    pub metrics: Vec<(String, f64, f64)>,
    pub failed: usize,
}

impl WideRow {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.0 == metric).map(|m| m.1)
    }

    pub fn std(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.0 == metric).map(|m| m.2)
    }
}

pub fn wide_rows(records: &[ResultRecord]) -> Vec<WideRow> {
    let mut rows: Vec<WideRow> = Vec::new();
    for r in records {
        let sv = r.series.map(|s| s.1);
        match rows
            .iter_mut()
            .find(|w| w.sweep_value == r.sweep_value && w.series_value == sv && w.scheme == r.scheme)
        {
            Some(w) => {
                w.metrics.push((r.metric.clone(), r.mean, r.std_dev));
                w.failed = w.failed.max(r.failed);
            }
            None => rows.push(WideRow {
                sweep_value: r.sweep_value,
                series_value: sv,
                scheme: r.scheme.clone(),
                metrics: vec![(r.metric.clone(), r.mean, r.std_dev)],
                failed: r.failed,
            }),
        }
    }
    rows
}

/// Group assignment of one user drop.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub anchors: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    pub edges: usize,
    pub vr_sizes: Vec<usize>,
}

pub fn partition_report(sc: &Scenario, seed: u64, strategy: MisStrategy) -> Result<PartitionReport> {
    let (_, _, vrs) = drop_users(sc, seed)?;
    let (g, grouping) = partition_users(&vrs, sc.s_ovp, strategy)?;
    Ok(PartitionReport {
        anchors: grouping.anchors,
        groups: grouping.groups,
        edges: g.edge_count(),
        vr_sizes: vrs.iter().map(|v| v.len()).collect(),
    })
}

impl PartitionReport {
    /// `user,group,anchor,is_anchor,vr_size`, one row per user.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "user,group,anchor,is_anchor,vr_size")?;
        let mut rows = Vec::new();
        for (g, members) in self.groups.iter().enumerate() {
            for &u in members {
                rows.push((u, g));
            }
        }
        rows.sort_unstable();
        for (u, g) in rows {
            let a = self.anchors[g];
            writeln!(out, "{u},{g},{a},{},{}", u8::from(u == a), self.vr_sizes[u])?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let sizes: Vec<String> = self.groups.iter().map(|g| g.len().to_string()).collect();
        format!(
            "users={} independent_set={} edges={} group_sizes=[{}]",
            self.vr_sizes.len(),
            self.anchors.len(),
            self.edges,
            sizes.join(" ")
        )
    }
}
