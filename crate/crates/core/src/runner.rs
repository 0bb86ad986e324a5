//! Dispatch of subcommands to the library operations and persistence of results.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Subcommand};
use crate::error::{LabError, Result};
use crate::ldp::{
    error_scaling_study, gronwall_monitor, hyper_tail_check, rate_curve, reference_rate,
    sample_sup_statistics, tail_from_sups, tune_z0, CoeffSpec, Sampling, ScalingConfig, TailConfig,
    TailEstimate,
};
use crate::modified::AppFlow;
use crate::random_data::{coefficient, make_initial_data};
use crate::records::{write_records, Format, Stamp, Table, Value, WriteMode};
use crate::resonance::{
    chaos_second_moment, decay_slope_fit, key_sum, measured_delta3, parameter_constraints,
    KeyVariant, ResonanceQuery,
};
use crate::seed::{derive_seed, labels};
use crate::solver::{evolve, SolverConfig};
use crate::spectral::LatticeSpec;

/// What a run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub subcommand: Subcommand,
    pub config_hash: String,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Output<'a> {
    dir: PathBuf,
    format: Format,
    stamp: Stamp,
    files: &'a mut Vec<PathBuf>,
}

impl Output<'_> {
    fn write(&mut self, stem: &str, table: &Table) -> Result<()> {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        };
        let path = self.dir.join(format!("{stem}.{ext}"));
        write_records(
            table,
            self.format,
            &path,
            Some(&self.stamp),
            WriteMode::Replace,
        )?;
        self.files.push(path);
        Ok(())
    }
}

/// Validates `cfg`, runs `sub` on a pool of `cfg.workers` threads and writes its artifacts.
pub fn run_experiment(sub: Subcommand, cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate_for(sub)?;
    let dir = cfg.resolve_output_dir(sub);
    fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| LabError::config(format!("cannot start worker pool: {e}")))?;
    let hash = cfg.config_hash();
    let mut files = Vec::new();
    let config_path = dir.join("config.json");
    let body = format!(
        "{{\"_meta\":{},\"config\":{}}}\n",
        serde_json::to_string(&Stamp::new(&hash, cfg.master_seed))?,
        serde_json::to_string(&serde_json::from_str::<serde_json::Value>(
            &cfg.canonical_json()
        )?)?
    );
    fs::write(&config_path, body).map_err(|e| LabError::io(&config_path, e))?;
    files.push(config_path);
    let mut out = Output {
        dir: dir.clone(),
        format: cfg.format,
        stamp: Stamp::new(&hash, cfg.master_seed),
        files: &mut files,
    };
    pool.install(|| match sub {
        Subcommand::SampleLdp => sample_ldp(cfg, &mut out),
        Subcommand::RateCurve => run_rate_curve(cfg, &mut out),
        Subcommand::CompareApp => compare_app(cfg, &mut out),
        Subcommand::ResonanceSums => resonance_sums(cfg, &mut out),
        Subcommand::ChaosStat => chaos_stat(cfg, &mut out),
        Subcommand::HyperCheck => hyper_check(cfg, &mut out),
        Subcommand::EvolveOne => evolve_one(cfg, &mut out),
    })?;
    Ok(RunSummary {
        subcommand: sub,
        config_hash: hash,
        output_dir: dir,
        files,
    })
}

fn tail_config(cfg: &ExperimentConfig, epsilon: f64) -> TailConfig {
    TailConfig {
        epsilon,
        theta: cfg.theta,
        z0: cfg.z0.unwrap_or(0.0),
        cutoff: cfg.cutoff,
        oversample: cfg.oversample,
        horizon_multiplier: cfg.horizon_multiplier,
        samples: cfg.samples,
        master_seed: cfg.master_seed,
        sampling: match cfg.point {
            Some([t, x]) => Sampling::Point { t, x },
            None => Sampling::Grid,
        },
        time_step: cfg.time_step,
        solver_dt: cfg.dt,
    }
}

fn resolve_z0(cfg: &ExperimentConfig, tail: &TailConfig) -> Result<f64> {
    match cfg.z0 {
        Some(z0) => Ok(z0),
        None => tune_z0(cfg.flow, tail, cfg.target_p, cfg.pilot_samples),
    }
}

const TAIL_COLUMNS: [&str; 13] = [
    "flow",
    "eps",
    "z0",
    "trials",
    "hits",
    "p_hat",
    "ci_low",
    "ci_high",
    "rate",
    "reference",
    "rate_low",
    "rate_high",
    "censored",
];

fn tail_row(t: &TailEstimate, reference: f64) -> Vec<Value> {
    vec![
        t.flow.as_str().into(),
        t.epsilon.into(),
        t.z0.into(),
        Value::Int(t.trials as i64),
        Value::Int(t.hits as i64),
        t.p_hat.into(),
        t.ci_low.into(),
        t.ci_high.into(),
        t.rate.into(),
        reference.into(),
        t.rate_low.into(),
        t.rate_high.into(),
        t.censored.into(),
    ]
}

fn sample_ldp(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let tail = tail_config(cfg, cfg.epsilon);
    let z0 = resolve_z0(cfg, &tail)?;
    let tail = TailConfig { z0, ..tail };
    let stats = sample_sup_statistics(cfg.flow, &tail, labels::DRAW)?;
    let est = tail_from_sups(cfg.flow, cfg.epsilon, z0, &stats)?;
    let mut table = Table::new(&TAIL_COLUMNS);
    table.push(tail_row(&est, reference_rate(z0, cfg.theta, cfg.cutoff)?))?;
    out.write("tail_estimates", &table)
}

fn run_rate_curve(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let smallest = cfg.eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = tail_config(cfg, smallest);
    let z0 = resolve_z0(cfg, &tail)?;
    let curve = rate_curve(cfg.flow, &cfg.eps_list, z0, &tail)?;
    let mut columns = TAIL_COLUMNS.to_vec();
    columns.push("gap");
    let mut table = Table::new(&columns);
    for p in &curve.points {
        let mut row = tail_row(&p.estimate, curve.reference);
        row.push(p.gap.into());
        table.push(row)?;
    }
    out.write("tail_estimates", &table)?;
    let mut summary = Table::new(&[
        "flow",
        "z0",
        "reference",
        "sigma2",
        "truncation_tail",
        "censored",
        "gap_shrinks",
        "final_gap_fraction",
    ]);
    summary.push(vec![
        curve.flow.as_str().into(),
        curve.z0.into(),
        curve.reference.into(),
        curve.sigma2.into(),
        curve.truncation_tail.into(),
        curve.censored.into(),
        curve.gap_shrinks.into(),
        curve.final_gap_fraction().into(),
    ])?;
    out.write("rate_curve", &summary)
}

fn scaling_config(cfg: &ExperimentConfig) -> ScalingConfig {
    ScalingConfig {
        grid: Some(cfg.oversample * (2 * cfg.cutoff + 1)),
        dt: cfg.dt,
        horizon_multiplier: cfg.horizon_multiplier,
        record_stride: cfg.stride,
        master_seed: cfg.master_seed,
        ..ScalingConfig::new(cfg.theta, cfg.cutoff)
    }
}

fn compare_app(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let sc = scaling_config(cfg);
    let study = error_scaling_study(&cfg.eps_list, cfg.samples, cfg.s, &sc)?;
    let mut table = Table::new(&[
        "eps",
        "seeds",
        "aborted",
        "median",
        "ratio_bootstrap",
        "ratio_error_control",
        "max_after_start",
        "ratio_non_increasing",
    ]);
    for r in &study.rows {
        table.push(vec![
            r.epsilon.into(),
            r.seeds.into(),
            r.aborted.into(),
            r.median.into(),
            r.ratio_bootstrap.into(),
            r.ratio_error_control.into(),
            r.max_after_start.into(),
            study.ratio_non_increasing.into(),
        ])?;
    }
    out.write("scaling", &table)?;

    let mut gron = Table::new(&["eps", "index", "active", "c_star", "t_star", "a_offset"]);
    for &epsilon in &cfg.eps_list {
        let solver = sc.solver(epsilon)?;
        let reports: Vec<_> = (0..cfg.gronwall_seeds as u64)
            .into_par_iter()
            .map(|i| {
                let draw = make_initial_data(
                    cfg.theta,
                    cfg.cutoff,
                    derive_seed(cfg.master_seed, labels::DRAW, i),
                )?;
                let traj = evolve(draw.field(), &solver)?;
                gronwall_monitor(&traj, &AppFlow::new(draw, epsilon)?, cfg.s, epsilon)
            })
            .collect::<Result<_>>()?;
        for (i, r) in reports.iter().enumerate() {
            gron.push(vec![
                epsilon.into(),
                i.into(),
                r.is_active().into(),
                r.c_star.unwrap_or(f64::NAN).into(),
                r.t_star.into(),
                r.a_offset.into(),
            ])?;
        }
    }
    out.write("gronwall", &gron)
}

fn resonance_sums(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let template = ResonanceQuery {
        k: 0,
        cutoff: cfg.key_cutoff,
        s: cfg.key_s,
        theta: cfg.theta,
        delta5: cfg.delta5,
    };
    let mut sums = Table::new(&["variant", "k", "cutoff", "value"]);
    let mut slopes = Table::new(&["variant", "cutoff", "slope", "intercept", "residual"]);
    let mut constraints = Table::new(&["variant", "delta3", "delta5", "constraint", "holds"]);
    for variant in [KeyVariant::One, KeyVariant::Two] {
        let values: Vec<f64> = cfg
            .key_k_list
            .par_iter()
            .map(|&k| key_sum(variant, &ResonanceQuery { k, ..template }))
            .collect::<Result<_>>()?;
        for (&k, v) in cfg.key_k_list.iter().zip(values) {
            sums.push(vec![
                Value::Int(variant.index() as i64),
                Value::Int(k),
                Value::Int(cfg.key_cutoff),
                v.into(),
            ])?;
        }
        if let Ok(fit) = decay_slope_fit(variant, &template, &cfg.key_k_list, cfg.key_cutoff) {
            slopes.push(vec![
                Value::Int(variant.index() as i64),
                Value::Int(cfg.key_cutoff),
                fit.slope.into(),
                fit.intercept.into(),
                fit.residual.into(),
            ])?;
            let delta3 = measured_delta3(&fit, cfg.key_s);
            for (name, holds) in parameter_constraints(cfg.key_s, cfg.theta, delta3, cfg.delta5) {
                constraints.push(vec![
                    Value::Int(variant.index() as i64),
                    delta3.into(),
                    cfg.delta5.into(),
                    name.into(),
                    holds.into(),
                ])?;
            }
        }
    }
    out.write("resonance", &sums)?;
    out.write("resonance_slopes", &slopes)?;
    out.write("resonance_constraints", &constraints)
}

fn chaos_stat(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let [n1, n2, n3] = cfg.chaos_dyads;
    let mut table = Table::new(&[
        "n",
        "n1",
        "n2",
        "n3",
        "eps",
        "tau",
        "draws",
        "sample_mean",
        "std_error",
        "reference",
        "relative_error",
    ]);
    for &tau in &cfg.chaos_tau {
        let m = chaos_second_moment(
            cfg.chaos_n,
            (n1, n2, n3),
            cfg.theta,
            cfg.epsilon,
            tau,
            cfg.samples,
            |i| derive_seed(cfg.master_seed, labels::CHAOS, i as u64),
        )?;
        table.push(vec![
            Value::Int(cfg.chaos_n),
            n1.into(),
            n2.into(),
            n3.into(),
            cfg.epsilon.into(),
            tau.into(),
            m.draws.into(),
            m.sample_mean.into(),
            m.std_error.into(),
            m.reference.into(),
            m.relative_error.into(),
        ])?;
    }
    out.write("chaos", &table)
}

fn hyper_check(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let m = cfg.hyper_modes as i64;
    let coeffs: Vec<(i64, f64)> = (-m..=m)
        .map(|n| (n, coefficient(cfg.theta, n).powi(cfg.hyper_order as i32)))
        .collect();
    let spec = CoeffSpec::diagonal(cfg.hyper_order, &coeffs)?;
    let rep = hyper_tail_check(&spec, &cfg.hyper_lambdas, cfg.samples, cfg.master_seed)?;
    let mut table = Table::new(&[
        "order", "lambda", "trials", "hits", "p_hat", "ci_low", "ci_high", "resolved", "bound",
        "holds", "fitted_c",
    ]);
    for p in &rep.points {
        table.push(vec![
            rep.order.into(),
            p.lambda.into(),
            Value::Int(p.trials as i64),
            Value::Int(p.hits as i64),
            p.p_hat.into(),
            p.ci_low.into(),
            p.ci_high.into(),
            p.resolved.into(),
            p.bound.into(),
            p.holds.into(),
            rep.fitted_c.into(),
        ])?;
    }
    out.write("hyper", &table)
}

fn evolve_one(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let draw = make_initial_data(
        cfg.theta,
        cfg.cutoff,
        derive_seed(cfg.master_seed, labels::DRAW, 0),
    )?;
    let lattice = LatticeSpec::new(cfg.cutoff, cfg.oversample)?;
    let horizon = if cfg.epsilon > 0.0 {
        cfg.horizon_multiplier / cfg.epsilon
    } else {
        cfg.horizon_multiplier
    };
    let solver = SolverConfig::new(cfg.epsilon, lattice)
        .with_dt(cfg.dt)
        .with_horizon(horizon)
        .with_stride(cfg.stride);
    let traj = evolve(draw.field(), &solver)?;
    let mut modes = Table::new(&["t", "n", "re", "im"]);
    for (t, state) in traj.times.iter().zip(&traj.states) {
        for (n, a) in state.modes() {
            modes.push(vec![(*t).into(), Value::Int(n), a.re.into(), a.im.into()])?;
        }
    }
    out.write("trajectory", &modes)?;
    let mut diag = Table::new(&["t", "mass", "hamiltonian", "sup"]);
    for (t, d) in traj.times.iter().zip(&traj.diagnostics) {
        diag.push(vec![
            (*t).into(),
            d.mass.into(),
            d.hamiltonian.into(),
            d.sup.into(),
        ])?;
    }
    out.write("diagnostics", &diag)
}

/// Reads `t, n, re, im` rows of a trajectory CSV and returns the modes at the last time.
pub fn final_modes_from_csv(path: &Path) -> Result<Vec<(i64, Complex64)>> {
    let (header, rows) = crate::records::read_csv(path)?;
    if header != ["t", "n", "re", "im"] {
        return Err(LabError::Serde(format!(
            "unexpected trajectory header {header:?}"
        )));
    }
    let parse = |s: &str| {
        crate::records::parse_float(s).ok_or_else(|| LabError::Serde(format!("bad number '{s}'")))
    };
    let mut last_t = f64::NEG_INFINITY;
    let mut modes = Vec::new();
    for r in &rows {
        let t = parse(&r[0])?;
        if t > last_t {
            last_t = t;
            modes.clear();
        }
        let n: i64 = r[1]
            .parse()
            .map_err(|_| LabError::Serde(format!("bad mode '{}'", r[1])))?;
        modes.push((n, Complex64::new(parse(&r[2])?, parse(&r[3])?)));
    }
    Ok(modes)
}
