//! Batch experiments: decay series with power-type fits, inequality suites,
//! seminorm probes, and their CSV and JSON reports.
//!
//! Seeds: sample sets of experiment `seed` are drawn with that seed directly;
//! trial `t` of a repeated check uses `derive_seed(seed, t)`; auxiliary draws
//! (the base point of a return-times run, the second system's samples, the
//! random inputs of the vdc and Hölder suites) use fixed tags listed next to
//! each call. Within a draw, sample `i` reads ChaCha8 stream `i`.

pub mod config;
pub mod fit;

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::observable::ObservableExpr;
use crate::recurrence::{
    bourgain_check, bourgain_constant, classical_inequality_check, product_window, return_times_values, rt_chain_check,
    rt_chain_window, CheckReport, ClassicalArgs, RecurrenceQuery,
};
use crate::sampling::{derive_seed, sample_points, SamplePlan};
use crate::seminorm::{equivalence_probe, ProbeConfig};
use crate::systems::{Point, SystemSpec};
use crate::trig::{vdc_bound, VdcMode, WeightedSeq};
use crate::ww::{ww_average, NormIndex, WWQuery};

pub use config::{
    Angle, ClassicalConfig, ClassicalKind, ExperimentConfig, ExperimentKind, Grid, ObservableConfig, SystemConfig,
};
pub use fit::{fit_decay, DecayFit};

pub const ALPHA_CAVEAT: &str = "skew-product decay holds for almost every angle; \
    a specific angle carries no guarantee, the value used is recorded here";

const TAG_BASE_POINT: u64 = 0x7801;
const TAG_Y_SAMPLES: u64 = 0x7802;
const TAG_VDC: u64 = 0x7803;
const TAG_HOLDER: u64 = 0x7804;

/// Relative tolerance of the vdc suite.
pub const VDC_REL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub experiment: ExperimentKind,
    pub csv: String,
    pub summary: Value,
}

impl RunOutput {
    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Writes `results.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join("results.csv");
        let json = dir.join("summary.json");
        fs::write(&csv, &self.csv)?;
        fs::write(&json, self.summary_json())?;
        Ok((csv, json))
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

struct Context {
    cfg: ExperimentConfig,
    system: Option<SystemSpec>,
    fs: Vec<ObservableExpr>,
}

impl Context {
    fn system(&self) -> &SystemSpec {
        self.system.as_ref().expect("validated system")
    }

    fn plan(&self) -> SamplePlan {
        self.cfg.plan()
    }

    fn ns(&self) -> Vec<usize> {
        self.cfg.n_list()
    }

    fn oversample(&self) -> usize {
        self.cfg.oversample.expect("resolved")
    }
}

/// Runs one experiment after filling in and checking its defaults.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cfg = cfg.resolve()?;
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::pre(e.to_string()))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: ExperimentConfig) -> Result<RunOutput> {
    let system = cfg.system.as_ref().map(SystemConfig::build).transpose()?;
    let fs = match &system {
        Some(s) => cfg.observables.iter().map(|o| o.build(s)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let ctx = Context { cfg, system, fs };
    let (csv, results) = match ctx.cfg.experiment {
        ExperimentKind::WwDecay => ww_decay(&ctx)?,
        ExperimentKind::Bourgain => bourgain(&ctx)?,
        ExperimentKind::Vdc => vdc(&ctx)?,
        ExperimentKind::Seminorm => seminorm(&ctx)?,
        ExperimentKind::ReturnTimes => return_times(&ctx)?,
        ExperimentKind::RtChain => rt_chain(&ctx)?,
        ExperimentKind::Classical => classical(&ctx)?,
    };
    let mut summary = json!({
        "experiment": ctx.cfg.experiment.name(),
        "config": serde_json::to_value(&ctx.cfg).map_err(|e| Error::Io(e.to_string()))?,
        "results": results,
    });
    if let Some(s) = &ctx.system {
        summary["system"] = json!(s.to_string());
    }
    let mut angles = ctx.cfg.system.as_ref().map(SystemConfig::angles).unwrap_or_default();
    if let Some(y) = ctx.cfg.return_times.as_ref().and_then(|r| r.system_y.as_ref()) {
        angles.extend(y.angles());
    }
    if !angles.is_empty() {
        summary["angles"] = json!(angles);
        summary["angle_caveat"] = json!(ALPHA_CAVEAT);
    }
    Ok(RunOutput {
        experiment: ctx.cfg.experiment,
        csv,
        summary,
    })
}

fn fit_json(series: &[(usize, f64)]) -> Value {
    match fit_decay(series) {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

const SERIES_HEADER: [&str; 4] = ["N", "value", "certified_upper", "stderr"];

fn ww_decay(ctx: &Context) -> Result<(String, Value)> {
    let c = &ctx.cfg;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for n in ctx.ns() {
        let mut q = WWQuery::new(
            ctx.fs[0].clone(),
            ctx.system().clone(),
            c.order.unwrap_or(2),
            n,
            ctx.plan(),
        );
        q.p = NormIndex::from_int(c.p.unwrap_or(2))?;
        q.beta = c.beta.unwrap_or(0.5);
        q.oversample = ctx.oversample();
        let r = ww_average(&q)?;
        rows.push(vec![n.to_string(), num(r.value), num(r.certified_upper), num(r.stderr)]);
        series.push((n, r.value));
    }
    let results = json!({ "fit": fit_json(&series), "points": series.len() });
    Ok((to_csv(&SERIES_HEADER, &rows)?, results))
}

const CHECK_HEADER: [&str; 7] = ["trial", "N", "lhs", "rhs", "margin", "pass", "conservative"];

#[derive(Default, Serialize)]
struct Tally {
    total: usize,
    pass: usize,
    conservative: usize,
    fail: usize,
    min_margin: Option<f64>,
}

impl Tally {
    fn add(&mut self, r: &CheckReport) {
        self.total += 1;
        self.pass += r.pass as usize;
        self.conservative += r.conservative as usize;
        self.fail += (!r.pass) as usize;
        self.min_margin = Some(self.min_margin.map_or(r.margin, |m| m.min(r.margin)));
    }
}

fn check_row(trial: usize, n: usize, r: &CheckReport) -> Vec<String> {
    vec![
        trial.to_string(),
        n.to_string(),
        num(r.lhs),
        num(r.rhs),
        num(r.margin),
        r.pass.to_string(),
        r.conservative.to_string(),
    ]
}

fn bourgain(ctx: &Context) -> Result<(String, Value)> {
    let b = ctx.cfg.bourgain.clone().unwrap_or_default();
    let a = b.exponents.unwrap_or_default();
    let bc = bourgain_constant(ctx.fs.len(), &a)?;
    let mut rows = Vec::new();
    let mut tally = Tally::default();
    for t in 0..b.trials.unwrap_or(1) {
        let mut plan = ctx.plan();
        plan.seed = derive_seed(plan.seed, t as u64);
        for n in ctx.ns() {
            let mut q = RecurrenceQuery::new(ctx.system().clone(), ctx.fs.clone(), a.clone(), n, plan);
            q.oversample = ctx.oversample();
            let r = bourgain_check(&q)?;
            tally.add(&r);
            rows.push(check_row(t, n, &r));
        }
    }
    let results = json!({
        "constant": bc.constant,
        "threshold": bc.threshold,
        "constant_chain": bc.chain,
        "tally": tally,
    });
    Ok((to_csv(&CHECK_HEADER, &rows)?, results))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VdcTrial {
    pub trial: usize,
    pub n: usize,
    pub h: usize,
    pub mode: VdcMode,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Random sequences with `N` log-uniform in `[n_min, n_max]`, `H` uniform in
/// `[1, N - 1]`, each run through all three inequality variants.
pub fn vdc_trials(seed: u64, trials: usize, n_min: usize, n_max: usize, oversample: usize) -> Result<Vec<VdcTrial>> {
    if n_min < 2 || n_max < n_min {
        return Err(Error::pre("need 2 <= n_min <= n_max"));
    }
    let base = derive_seed(seed, TAG_VDC);
    let per: Vec<Vec<VdcTrial>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(t as u64);
            let (lo, hi) = ((n_min as f64).ln(), (n_max as f64).ln());
            let n = (rng.gen_range(lo..=hi).exp().round() as usize).clamp(n_min, n_max);
            let h = rng.gen_range(1..n);
            let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
            let vals: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
                .collect();
            let seq = WeightedSeq::new(vals)?;
            [VdcMode::Averaged, VdcMode::SupAveraged, VdcMode::Summed]
                .into_iter()
                .map(|mode| {
                    let s = vdc_bound(&seq, h, mode, oversample)?;
                    Ok(VdcTrial {
                        trial: t,
                        n,
                        h,
                        mode,
                        lhs: s.lhs,
                        rhs: s.rhs,
                        pass: s.lhs <= s.rhs * (1.0 + VDC_REL_TOL),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

fn mode_name(m: VdcMode) -> &'static str {
    match m {
        VdcMode::Averaged => "averaged",
        VdcMode::SupAveraged => "sup_averaged",
        VdcMode::Summed => "summed",
    }
}

fn vdc(ctx: &Context) -> Result<(String, Value)> {
    let v = ctx.cfg.vdc.clone().unwrap_or_default();
    let res = vdc_trials(
        ctx.plan().seed,
        v.trials.unwrap_or(1000),
        v.n_min.unwrap_or(8),
        v.n_max.unwrap_or(1024),
        ctx.oversample(),
    )?;
    let rows: Vec<Vec<String>> = res
        .iter()
        .map(|r| {
            vec![
                r.trial.to_string(),
                r.n.to_string(),
                r.h.to_string(),
                mode_name(r.mode).to_string(),
                num(r.lhs),
                num(r.rhs),
                r.pass.to_string(),
            ]
        })
        .collect();
    // a trial passes when all three variants hold
    let trials = v.trials.unwrap_or(1000);
    let failed: Vec<usize> = (0..trials)
        .filter(|&t| res.iter().any(|r| r.trial == t && !r.pass))
        .collect();
    let results = json!({
        "pass": trials - failed.len(),
        "fail": failed.len(),
        "failed_trials": failed,
        "relative_tolerance": VDC_REL_TOL,
    });
    Ok((
        to_csv(&["trial", "N", "H", "mode", "lhs", "rhs", "pass"], &rows)?,
        results,
    ))
}

fn seminorm(ctx: &Context) -> Result<(String, Value)> {
    let s = ctx.cfg.seminorm.clone().unwrap_or_default();
    let mut pc = ProbeConfig::new(ctx.plan());
    pc.h_budget = s.h_budget.unwrap_or(64);
    pc.oversample = ctx.oversample();
    let k = s.k.unwrap_or(2);
    let rows = equivalence_probe(&ctx.fs[0], ctx.system(), k, &ctx.ns(), s.h.unwrap_or(64), &pc)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                num(r.ww_2b),
                num(r.ww_3b),
                num(r.ww_4b),
                num(r.seminorm_finite_h),
                num(r.stderr),
            ]
        })
        .collect();
    let col =
        |f: fn(&crate::seminorm::ProbeRow) -> f64| -> Vec<(usize, f64)> { rows.iter().map(|r| (r.n, f(r))).collect() };
    let results = json!({
        "seminorm_order": k + 1,
        "seminorm_finite_h": rows.first().map(|r| r.seminorm_finite_h),
        "fits": {
            "ww_2b": fit_json(&col(|r| r.ww_2b)),
            "ww_3b": fit_json(&col(|r| r.ww_3b)),
            "ww_4b": fit_json(&col(|r| r.ww_4b)),
        },
        "note": "finite-N and finite-H probes are evidence about limits, not verdicts",
    });
    Ok((
        to_csv(&["N", "ww_2b", "ww_3b", "ww_4b", "seminorm_finiteH", "stderr"], &table)?,
        results,
    ))
}

/// Base point of a return-times run: one sample of the first system.
fn base_point(ctx: &Context, tag: u64, window: crate::sampling::Window) -> Result<Point> {
    let plan = SamplePlan {
        count: 1,
        seed: derive_seed(ctx.plan().seed, tag),
        scheme: ctx.plan().scheme,
    };
    Ok(sample_points(ctx.system(), &plan, window)?.remove(0))
}

struct YSide {
    system: SystemSpec,
    gs: Vec<ObservableExpr>,
    b: Vec<i64>,
    a: Vec<i64>,
    samples: usize,
    trials: usize,
}

fn y_side(ctx: &Context) -> Result<YSide> {
    let r = ctx.cfg.return_times.clone().unwrap_or_default();
    let system = r
        .system_y
        .as_ref()
        .ok_or_else(|| Error::config("return_times.system_y", "missing"))?
        .build()?;
    let gs = r
        .observables_y
        .unwrap_or_default()
        .iter()
        .map(|g| g.build(&system))
        .collect::<Result<_>>()?;
    Ok(YSide {
        system,
        gs,
        b: r.exponents_y.unwrap_or_default(),
        a: r.exponents.unwrap_or_default(),
        samples: r.samples_y.unwrap_or(crate::experiments::config::DEFAULT_SAMPLES),
        trials: r.trials.unwrap_or(1),
    })
}

fn return_times(ctx: &Context) -> Result<(String, Value)> {
    let y = y_side(ctx)?;
    let n_max = ctx.ns().into_iter().max().unwrap_or(1);
    let x = base_point(ctx, TAG_BASE_POINT, product_window(&ctx.fs, &y.a, n_max))?;
    let plan_y = SamplePlan {
        count: y.samples,
        seed: derive_seed(ctx.plan().seed, TAG_Y_SAMPLES),
        scheme: ctx.plan().scheme,
    };
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for n in ctx.ns() {
        let vals = return_times_values(ctx.system(), &x, &ctx.fs, &y.a, &y.system, &y.gs, &y.b, n, &plan_y)?;
        let sq: Vec<f64> = vals.iter().map(|v| v.norm_sqr()).collect();
        let k = sq.len() as f64;
        let m = sq.iter().sum::<f64>() / k;
        let value = m.sqrt();
        let var = sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        let stderr = if m > 0.0 { (var / k).sqrt() / (2.0 * value) } else { 0.0 };
        rows.push(vec![n.to_string(), num(value), num(value), num(stderr)]);
        series.push((n, value));
    }
    let results = json!({ "fit": fit_json(&series), "system_y": y.system.to_string() });
    Ok((to_csv(&SERIES_HEADER, &rows)?, results))
}

fn rt_chain(ctx: &Context) -> Result<(String, Value)> {
    let y = y_side(ctx)?;
    let n_max = ctx.ns().into_iter().max().unwrap_or(1);
    let mut rows = Vec::new();
    let mut tally = Tally::default();
    for t in 0..y.trials {
        let x = base_point(
            ctx,
            derive_seed(TAG_BASE_POINT, t as u64),
            rt_chain_window(&ctx.fs, n_max),
        )?;
        let plan_y = SamplePlan {
            count: y.samples,
            seed: derive_seed(derive_seed(ctx.plan().seed, TAG_Y_SAMPLES), t as u64),
            scheme: ctx.plan().scheme,
        };
        for n in ctx.ns() {
            let r = rt_chain_check(
                ctx.system(),
                &x,
                &ctx.fs,
                &y.system,
                &y.gs[0],
                &y.gs[1],
                n,
                &plan_y,
                ctx.oversample(),
            )?;
            tally.add(&r);
            rows.push(check_row(t, n, &r));
        }
    }
    let results = json!({ "tally": tally, "system_y": y.system.to_string() });
    Ok((to_csv(&CHECK_HEADER, &rows)?, results))
}

/// Random nonnegative sequences with exponent pairs `p < q`.
pub fn holder_inputs(seed: u64, sequences: usize, len: usize) -> Vec<(Vec<f64>, f64, f64)> {
    let base = derive_seed(seed, TAG_HOLDER);
    (0..sequences)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(i as u64);
            let vals = (0..len.max(1)).map(|_| rng.gen_range(0.0..10.0f64).powi(2)).collect();
            let p = rng.gen_range(0.1..4.0);
            let q = p + rng.gen_range(0.01..4.0);
            (vals, p, q)
        })
        .collect()
}

fn classical(ctx: &Context) -> Result<(String, Value)> {
    let k = ctx
        .cfg
        .classical
        .clone()
        .ok_or_else(|| Error::config("classical", "missing [classical] table"))?;
    let mut reports: Vec<(String, usize, CheckReport)> = Vec::new();
    match k.kind {
        ClassicalKind::PowerLemma => {
            for &a in k.a.as_deref().unwrap_or(&[]) {
                for n in ctx.ns() {
                    let r = classical_inequality_check(&ClassicalArgs::PowerLemma {
                        system: ctx.system().clone(),
                        f: ctx.fs[0].clone(),
                        a,
                        n,
                        p: NormIndex::from_int(ctx.cfg.p.unwrap_or(2))?,
                        plan: ctx.plan(),
                        oversample: ctx.oversample(),
                    })?;
                    reports.push((format!("a={a}"), n, r));
                }
            }
        }
        ClassicalKind::Maximal => {
            let n_max = k.n_max.unwrap_or(256);
            let r = classical_inequality_check(&ClassicalArgs::Maximal {
                system: ctx.system().clone(),
                f: ctx.fs[0].clone(),
                p: k.exponent.unwrap_or(2.0),
                n_max,
                plan: ctx.plan(),
            })?;
            reports.push((format!("p={}", k.exponent.unwrap_or(2.0)), n_max, r));
        }
        ClassicalKind::HolderAvg => {
            for (i, (values, p, q)) in holder_inputs(ctx.plan().seed, k.sequences.unwrap_or(100), k.len.unwrap_or(16))
                .into_iter()
                .enumerate()
            {
                let len = values.len();
                let r = classical_inequality_check(&ClassicalArgs::HolderAvg { values, p, q })?;
                reports.push((format!("seq={i}"), len, r));
            }
        }
    }
    let mut tally = Tally::default();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|(param, n, r)| {
            tally.add(r);
            vec![
                r.check.clone(),
                param.clone(),
                n.to_string(),
                num(r.lhs),
                num(r.rhs),
                num(r.margin),
                r.pass.to_string(),
                r.conservative.to_string(),
            ]
        })
        .collect();
    let results = json!({ "tally": tally, "relative_tolerance": crate::recurrence::CLASSICAL_REL_TOL });
    Ok((
        to_csv(
            &["check", "param", "N", "lhs", "rhs", "margin", "pass", "conservative"],
            &rows,
        )?,
        results,
    ))
}
