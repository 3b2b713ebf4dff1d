//! Multiple recurrence and return-times averages, and checks of the
//! inequalities that bound them.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::observable::ObservableExpr;
use crate::sampling::{sample_points, SamplePlan, Window};
use crate::systems::{advance_in_place, iterate_signed, Point, SystemSpec};
use crate::trig::{sup_of, SupEstimate, DEFAULT_OVERSAMPLE};
use crate::ww::{aggregate, base_orbit, cube_window, h_tuples, sup_table, term_exponent, NormIndex};

pub const DEFAULT_ABS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceQuery {
    pub system: SystemSpec,
    pub observables: Vec<ObservableExpr>,
    pub exponents: Vec<i64>,
    pub n: usize,
    pub p: NormIndex,
    pub plan: SamplePlan,
    pub oversample: usize,
}

impl RecurrenceQuery {
    pub fn new(
        system: SystemSpec,
        observables: Vec<ObservableExpr>,
        exponents: Vec<i64>,
        n: usize,
        plan: SamplePlan,
    ) -> Self {
        RecurrenceQuery {
            system,
            observables,
            exponents,
            n,
            p: NormIndex::L1,
            plan,
            oversample: DEFAULT_OVERSAMPLE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.observables.is_empty() {
            return Err(Error::pre("need at least one observable"));
        }
        if self.observables.len() != self.exponents.len() {
            return Err(Error::pre(format!(
                "{} observables but {} exponents",
                self.observables.len(),
                self.exponents.len()
            )));
        }
        check_exponents(&self.exponents)?;
        if self.n < 1 {
            return Err(Error::pre("N must be >= 1"));
        }
        Ok(())
    }

    fn window(&self) -> Window {
        product_window(&self.observables, &self.exponents, self.n)
    }
}

fn check_exponents(a: &[i64]) -> Result<()> {
    if a.contains(&0) {
        return Err(Error::pre("exponents must be nonzero"));
    }
    for (i, x) in a.iter().enumerate() {
        if a[..i].contains(x) {
            return Err(Error::pre(format!("exponent {x} repeated")));
        }
    }
    Ok(())
}

fn span_of(fs: &[ObservableExpr]) -> Option<(i64, i64)> {
    fs.iter()
        .filter_map(|f| f.coord_span())
        .reduce(|x, y| (x.0.min(y.0), x.1.max(y.1)))
}

pub(crate) fn product_window(fs: &[ObservableExpr], a: &[i64], n: usize) -> Window {
    let n = n as i64;
    let lo = a.iter().map(|&x| x.min(x * n)).min().unwrap_or(0);
    let hi = a.iter().map(|&x| x.max(x * n)).max().unwrap_or(0);
    Window::for_shifts(span_of(fs), lo, hi)
}

/// `prod_j f_j(T^{a_j n} x)` for n = 1..N, using one orbit cursor per factor.
pub fn product_sequence(
    system: &SystemSpec,
    fs: &[ObservableExpr],
    a: &[i64],
    x: &Point,
    n: usize,
) -> Result<Vec<Complex64>> {
    system.check_point(x)?;
    let mut cursors: Vec<Point> = fs.iter().map(|_| x.clone()).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut prod = Complex64::new(1.0, 0.0);
        for ((c, f), &aj) in cursors.iter_mut().zip(fs).zip(a) {
            advance_in_place(system, c, aj)?;
            prod *= f.eval(system, c)?;
        }
        out.push(prod);
    }
    Ok(out)
}

fn mean(v: &[Complex64]) -> Complex64 {
    v.iter().sum::<Complex64>() / v.len() as f64
}

pub fn recurrence_avg_at_point(q: &RecurrenceQuery, x: &Point) -> Result<Complex64> {
    q.validate()?;
    Ok(mean(&product_sequence(
        &q.system,
        &q.observables,
        &q.exponents,
        x,
        q.n,
    )?))
}

fn abs_averages(q: &RecurrenceQuery, points: &[Point]) -> Result<Vec<f64>> {
    points
        .par_iter()
        .map(|x| Ok(mean(&product_sequence(&q.system, &q.observables, &q.exponents, x, q.n)?).norm()))
        .collect()
}

pub fn recurrence_norm(q: &RecurrenceQuery) -> Result<f64> {
    q.validate()?;
    let points = sample_points(&q.system, &q.plan, q.window())?;
    Ok(q.p.norm(abs_averages(q, &points)?))
}

/// A Bourgain-type constant with its threshold and the chain of
/// intermediate constants (innermost first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BourgainConstant {
    pub constant: f64,
    pub threshold: u64,
    pub chain: Vec<f64>,
}

pub fn bourgain_constant(j: usize, a: &[i64]) -> Result<BourgainConstant> {
    if j < 2 {
        return Err(Error::pre("J must be >= 2"));
    }
    if a.len() != j {
        return Err(Error::pre(format!("J = {j} but {} exponents", a.len())));
    }
    check_exponents(a)?;
    let a1 = (a[0] as f64).abs();
    if j == 2 {
        let a2 = (a[1] as f64).abs();
        let c = (1.0 + 2f64.sqrt()) * (4.0 * a2 + 2.0 * a1 + 2.0).sqrt() * a1;
        return Ok(BourgainConstant {
            constant: c,
            threshold: 1,
            chain: vec![c],
        });
    }
    let last = a[j - 1];
    let diffs: Vec<i64> = a[..j - 1].iter().map(|&x| x - last).collect();
    let inner = bourgain_constant(j - 1, &diffs)?;
    let prev = inner.constant;
    let c = (6.0 * a1 + 4.0 * a1 * prev).sqrt() + (4.0 * prev * a1).sqrt();
    let sq = a[0].unsigned_abs().saturating_mul(a[0].unsigned_abs());
    let mut chain = inner.chain;
    chain.push(c);
    Ok(BourgainConstant {
        constant: c,
        threshold: sq.max(inner.threshold),
        chain,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Brackets {
    pub lhs_lower: f64,
    pub lhs_upper: f64,
    pub rhs_lower: f64,
    pub rhs_upper: f64,
    pub oversample: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
    pub bracket: f64,
}

impl Tolerance {
    pub fn total(&self, rhs: f64) -> f64 {
        self.absolute + self.relative * rhs.abs() + self.bracket
    }
}

/// Outcome of one inequality check. `lhs` is the upper end of the smaller
/// side and `rhs` the lower end of the larger side. `pass` allows the stated
/// tolerance (including bracket widths); `conservative` allows only the
/// absolute and relative parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub system: String,
    pub params: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub margin: f64,
    pub pass: bool,
    pub conservative: bool,
    pub tolerance: Tolerance,
    pub seed: u64,
    pub brackets: Brackets,
}

impl CheckReport {
    #[allow(clippy::too_many_arguments)]
    fn build(
        check: &str,
        system: String,
        params: serde_json::Value,
        constant: f64,
        brackets: Brackets,
        absolute: f64,
        relative: f64,
        seed: u64,
    ) -> Self {
        let lhs = brackets.lhs_upper;
        let rhs = brackets.rhs_lower;
        let tolerance = Tolerance {
            absolute,
            relative,
            bracket: (brackets.lhs_upper - brackets.lhs_lower) + (brackets.rhs_upper - brackets.rhs_lower),
        };
        let strict = Tolerance {
            bracket: 0.0,
            ..tolerance
        };
        CheckReport {
            check: check.to_string(),
            system,
            params,
            lhs,
            rhs,
            constant,
            margin: rhs - lhs,
            pass: lhs <= rhs + tolerance.total(rhs),
            conservative: lhs <= rhs + strict.total(rhs),
            tolerance,
            seed,
            brackets,
        }
    }
}

/// Divides each observable by its structural sup bound (when positive).
pub fn normalize(fs: &[ObservableExpr], system: &SystemSpec) -> Result<(Vec<ObservableExpr>, Vec<f64>)> {
    let mut out = Vec::with_capacity(fs.len());
    let mut scales = Vec::with_capacity(fs.len());
    for f in fs {
        let b = f.sup_bound(system)?;
        let s = if b > 0.0 { 1.0 / b } else { 1.0 };
        out.push(if s == 1.0 {
            f.clone()
        } else {
            f.clone().scale(Complex64::new(s, 0.0))
        });
        scales.push(s);
    }
    Ok((out, scales))
}

/// Checks the multiple-recurrence bound with the explicit constant, both
/// sides on one shared sample set (p = 1).
pub fn bourgain_check(q: &RecurrenceQuery) -> Result<CheckReport> {
    bourgain_check_with(q, DEFAULT_ABS_TOL)
}

pub fn bourgain_check_with(q: &RecurrenceQuery, abs_tol: f64) -> Result<CheckReport> {
    q.validate()?;
    let jn = q.observables.len();
    let bc = bourgain_constant(jn, &q.exponents)?;
    if (q.n as u64) < bc.threshold {
        return Err(Error::BelowThreshold {
            n: q.n as u64,
            threshold: bc.threshold,
        });
    }
    if q.n < 4 {
        return Err(Error::pre("N must be >= 4"));
    }
    let (fs, scales) = normalize(&q.observables, &q.system)?;
    let nq = RecurrenceQuery {
        observables: fs.clone(),
        ..q.clone()
    };
    let h = q.n.isqrt();
    let k = jn - 1;
    let hs = h_tuples(h, k - 1);
    let gs = vec![fs[0].clone(); 1 << (k - 1)];
    let (ww_window, len) = cube_window(&gs, &hs, 1, q.n)?;
    let points = sample_points(&q.system, &q.plan, nq.window().union(ww_window))?;

    let lhs = NormIndex::L1.norm(abs_averages(&nq, &points)?);
    let c = bc.constant;
    let rhs_for = |os: usize| -> Result<(f64, f64, f64, f64)> {
        let table = sup_table(&gs, &q.system, &points, &hs, 1, q.n, len, os)?;
        let agg = aggregate(&table, hs.len(), NormIndex::L1, term_exponent(k, true));
        let side = |ww: f64| {
            if jn == 2 {
                c * (1.0 / q.n as f64 + ww.powf(2.0 / 3.0))
            } else {
                let e = 1.0 / (1u64 << (jn - 2)) as f64;
                c * ((h as f64).powf(-e) + ww.powf(e))
            }
        };
        Ok((side(agg.value), side(agg.upper), agg.value, agg.upper))
    };
    let mut os = q.oversample;
    let mut r = rhs_for(os)?;
    if lhs > r.0 + abs_tol {
        os *= 2;
        r = rhs_for(os)?;
    }
    let (rhs_lo, rhs_up, ww_lo, ww_up) = r;
    let params = json!({
        "J": jn,
        "exponents": q.exponents,
        "N": q.n,
        "H": h,
        "threshold": bc.threshold,
        "constant_chain": bc.chain,
        "samples": q.plan.count,
        "scheme": q.plan.scheme,
        "scale_factors": scales,
        "ww_order": k,
        "ww_lower": ww_lo,
        "ww_upper": ww_up,
        "observables": q.observables.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
    });
    Ok(CheckReport::build(
        if jn == 2 { "bourgain_j2" } else { "bourgain_jge3" },
        q.system.to_string(),
        params,
        c,
        Brackets {
            lhs_lower: lhs,
            lhs_upper: lhs,
            rhs_lower: rhs_lo,
            rhs_upper: rhs_up,
            oversample: os,
        },
        abs_tol,
        0.0,
        q.plan.seed,
    ))
}

/// `|| (1/N) sum_n prod_j f_j(T^{a_j n} x) prod_k g_k(S^{b_k n} y) ||_{L^2}` over
/// sampled `y`.
#[allow(clippy::too_many_arguments)]
pub fn return_times_norm(
    sys_x: &SystemSpec,
    x: &Point,
    fs: &[ObservableExpr],
    a: &[i64],
    sys_y: &SystemSpec,
    gs: &[ObservableExpr],
    b: &[i64],
    n: usize,
    plan_y: &SamplePlan,
) -> Result<f64> {
    let vals = return_times_values(sys_x, x, fs, a, sys_y, gs, b, n, plan_y)?;
    Ok(NormIndex::L2.norm(vals.iter().map(|v| v.norm())))
}

#[allow(clippy::too_many_arguments)]
/// Per-sample joint averages behind `return_times_norm`.
pub fn return_times_values(
    sys_x: &SystemSpec,
    x: &Point,
    fs: &[ObservableExpr],
    a: &[i64],
    sys_y: &SystemSpec,
    gs: &[ObservableExpr],
    b: &[i64],
    n: usize,
    plan_y: &SamplePlan,
) -> Result<Vec<Complex64>> {
    if fs.is_empty() || gs.is_empty() || fs.len() != a.len() || gs.len() != b.len() {
        return Err(Error::pre("need J, K >= 1 with matching exponent lists"));
    }
    if n < 1 {
        return Err(Error::pre("N must be >= 1"));
    }
    check_exponents(a)?;
    check_exponents(b)?;
    let w = product_sequence(sys_x, fs, a, x, n)?;
    let ys = sample_points(sys_y, plan_y, product_window(gs, b, n))?;
    ys.par_iter()
        .map(|y| {
            let v = product_sequence(sys_y, gs, b, y, n)?;
            Ok(w.iter().zip(&v).map(|(p, q)| p * q).sum::<Complex64>() / n as f64)
        })
        .collect()
}

/// Window for reading `f_j(T^{j m} x)` at every `m <= len`.
fn chain_window(fs: &[ObservableExpr], len: usize) -> Window {
    Window::for_shifts(span_of(fs), 0, (fs.len() * len) as i64)
}

/// Sample window a base point needs for `rt_chain_check` at length `n`.
pub fn rt_chain_window(fs: &[ObservableExpr], n: usize) -> Window {
    chain_window(fs, n + n.isqrt())
}

/// Checks the explicit two-function return-times chain with `H = floor(sqrt N)`.
#[allow(clippy::too_many_arguments)]
pub fn rt_chain_check(
    sys_x: &SystemSpec,
    x: &Point,
    fs: &[ObservableExpr],
    sys_y: &SystemSpec,
    g1: &ObservableExpr,
    g2: &ObservableExpr,
    n: usize,
    plan_y: &SamplePlan,
    oversample: usize,
) -> Result<CheckReport> {
    if fs.is_empty() {
        return Err(Error::pre("need at least one f"));
    }
    if n < 4 {
        return Err(Error::pre("N must be >= 4"));
    }
    let (fs_n, f_scales) = normalize(fs, sys_x)?;
    let (gs_n, g_scales) = normalize(&[g1.clone(), g2.clone()], sys_y)?;
    let jn = fs.len();
    let a: Vec<i64> = (1..=jn as i64).collect();
    let vals = return_times_values(sys_x, x, &fs_n, &a, sys_y, &gs_n, &[1, 2], n, plan_y)?;
    let lhs = vals.iter().map(|v| v.norm_sqr()).sum::<f64>() / vals.len() as f64;

    let h = n.isqrt();
    let len = jn * (n + h) + 1;
    let orbits: Vec<Vec<Complex64>> = fs_n
        .iter()
        .map(|f| base_orbit(f, sys_x, x, len))
        .collect::<Result<_>>()?;
    let sups_for = |os: usize| -> Vec<SupEstimate> {
        (1..=h)
            .into_par_iter()
            .map(|hh| {
                let c: Vec<Complex64> = (1..=n)
                    .map(|i| {
                        let mut acc = Complex64::new(1.0, 0.0);
                        for (j, orb) in orbits.iter().enumerate() {
                            let s = j + 1;
                            acc *= orb[s * i].conj() * orb[s * (i + hh)];
                        }
                        acc
                    })
                    .collect();
                sup_of(&c, os)
            })
            .collect()
    };
    let hf = h as f64;
    let side = |sups: &[SupEstimate], up: bool| {
        2.0 / (hf + 1.0)
            + 4.0 / (hf + 1.0)
                * sups
                    .iter()
                    .map(|s| 1.0 / hf + if up { s.upper } else { s.lower })
                    .sum::<f64>()
    };
    let mut os = oversample;
    let mut sups = sups_for(os);
    if lhs > side(&sups, false) + DEFAULT_ABS_TOL {
        os *= 2;
        sups = sups_for(os);
    }
    let params = json!({
        "J": jn,
        "K": 2,
        "N": n,
        "H": h,
        "samples_y": plan_y.count,
        "system_y": sys_y.to_string(),
        "scale_factors_f": f_scales,
        "scale_factors_g": g_scales,
        "sup_lower": sups.iter().map(|s| s.lower).collect::<Vec<_>>(),
        "sup_upper": sups.iter().map(|s| s.upper).collect::<Vec<_>>(),
    });
    Ok(CheckReport::build(
        "rt_chain",
        sys_x.to_string(),
        params,
        4.0 / (hf + 1.0),
        Brackets {
            lhs_lower: lhs,
            lhs_upper: lhs,
            rhs_lower: side(&sups, false),
            rhs_upper: side(&sups, true),
            oversample: os,
        },
        DEFAULT_ABS_TOL,
        0.0,
        plan_y.seed,
    ))
}

pub const DEFAULT_RT_BUDGET: u128 = 1 << 12;

/// The bracketed quantity controlling the `K`-function return-times average
/// at `x`, reported without a constant: `(1/H + H^{-(K-1)} sum_h sup_t ...)^{2^{-(K-1)}}`.
pub fn rt_general_quantity(
    sys_x: &SystemSpec,
    x: &Point,
    fs: &[ObservableExpr],
    k: usize,
    n: usize,
    budget: u128,
    oversample: usize,
) -> Result<SupEstimatePair> {
    if k < 2 || fs.is_empty() || n < 4 {
        return Err(Error::pre("need K >= 2, J >= 1 and N >= 4"));
    }
    let (fs_n, _) = normalize(fs, sys_x)?;
    let h = n.isqrt();
    let needed = (h as u128).checked_pow(k as u32 - 1).unwrap_or(u128::MAX);
    if needed > budget {
        return Err(Error::Budget { needed, budget });
    }
    let hs = h_tuples(h, k - 1);
    let jn = fs.len();
    let len = jn * (n + (k - 1) * h) + 1;
    let orbits: Vec<Vec<Complex64>> = fs_n
        .iter()
        .map(|f| base_orbit(f, sys_x, x, len))
        .collect::<Result<_>>()?;
    let verts = 1usize << (k - 1);
    let sups: Vec<SupEstimate> = hs
        .par_iter()
        .map(|hv| {
            let shifts: Vec<(usize, bool)> = (0..verts)
                .map(|v| {
                    let s: u64 = hv
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| v >> i & 1 == 1)
                        .map(|(_, x)| x)
                        .sum();
                    (s as usize, v.count_ones() % 2 == 1)
                })
                .collect();
            let c: Vec<Complex64> = (1..=n)
                .map(|i| {
                    let mut acc = Complex64::new(1.0, 0.0);
                    for (j, orb) in orbits.iter().enumerate() {
                        let sj = j + 1;
                        for &(s, odd) in &shifts {
                            let v = orb[sj * (i + s)];
                            acc *= if odd { v.conj() } else { v };
                        }
                    }
                    acc
                })
                .collect();
            sup_of(&c, oversample)
        })
        .collect();
    let e = 1.0 / verts as f64;
    let cnt = hs.len() as f64;
    let q = |up: bool| {
        (1.0 / h as f64 + sups.iter().map(|s| if up { s.upper } else { s.lower }).sum::<f64>() / cnt).powf(e)
    };
    Ok(SupEstimatePair {
        lower: q(false),
        upper: q(true),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEstimatePair {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClassicalArgs {
    /// Sup of twisted averages along `T^{a n}` against the same along `T^n`.
    PowerLemma {
        system: SystemSpec,
        f: ObservableExpr,
        a: i64,
        n: usize,
        p: NormIndex,
        plan: SamplePlan,
        oversample: usize,
    },
    /// Truncated maximal inequality for a real observable.
    Maximal {
        system: SystemSpec,
        f: ObservableExpr,
        p: f64,
        n_max: usize,
        plan: SamplePlan,
    },
    /// Monotonicity of power means of nonnegative numbers.
    HolderAvg { values: Vec<f64>, p: f64, q: f64 },
}

pub const CLASSICAL_REL_TOL: f64 = 1e-9;
const CLASSICAL_ABS_TOL: f64 = 1e-12;

pub fn classical_inequality_check(args: &ClassicalArgs) -> Result<CheckReport> {
    match args {
        ClassicalArgs::PowerLemma {
            system,
            f,
            a,
            n,
            p,
            plan,
            oversample,
        } => power_lemma(system, f, *a, *n, *p, plan, *oversample),
        ClassicalArgs::Maximal {
            system,
            f,
            p,
            n_max,
            plan,
        } => maximal(system, f, *p, *n_max, plan),
        ClassicalArgs::HolderAvg { values, p, q } => holder(values, *p, *q),
    }
}

fn power_mean(values: &[f64], p: f64) -> f64 {
    (values.iter().map(|v| v.powf(p)).sum::<f64>() / values.len() as f64).powf(1.0 / p)
}

fn holder(values: &[f64], p: f64, q: f64) -> Result<CheckReport> {
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::pre("values must be finite and nonnegative"));
    }
    if !(p > 0.0 && p <= q && q.is_finite()) {
        return Err(Error::pre(format!("need 0 < p <= q, got p = {p}, q = {q}")));
    }
    let lhs = power_mean(values, p);
    let rhs = power_mean(values, q);
    Ok(CheckReport::build(
        "holder_avg",
        "none".into(),
        json!({"p": p, "q": q, "len": values.len()}),
        1.0,
        Brackets {
            lhs_lower: lhs,
            lhs_upper: lhs,
            rhs_lower: rhs,
            rhs_upper: rhs,
            oversample: 0,
        },
        CLASSICAL_ABS_TOL,
        CLASSICAL_REL_TOL,
        0,
    ))
}

fn maximal(system: &SystemSpec, f: &ObservableExpr, p: f64, n_max: usize, plan: &SamplePlan) -> Result<CheckReport> {
    if !f.is_real() {
        return Err(Error::pre("maximal inequality needs a real-valued observable"));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::pre(format!("need p in (1, inf), got {p}")));
    }
    if n_max < 1 {
        return Err(Error::pre("N_max must be >= 1"));
    }
    let window = Window::for_shifts(f.coord_span(), 0, n_max as i64);
    let points = sample_points(system, plan, window)?;
    let rows: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| {
            let orbit = base_orbit(f, system, x, n_max + 1)?;
            let mut s = 0.0;
            let mut best: f64 = 0.0;
            for (i, v) in orbit[1..].iter().enumerate() {
                s += v.re;
                best = best.max((s / (i + 1) as f64).abs());
            }
            Ok((best, orbit[0].re.abs()))
        })
        .collect::<Result<_>>()?;
    let lhs = power_mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>(), p);
    let fnorm = power_mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>(), p);
    let c = p / (p - 1.0);
    let rhs = c * fnorm;
    Ok(CheckReport::build(
        "maximal",
        system.to_string(),
        json!({"p": p, "N_max": n_max, "samples": plan.count, "f_norm": fnorm, "observable": f.to_string()}),
        c,
        Brackets {
            lhs_lower: lhs,
            lhs_upper: lhs,
            rhs_lower: rhs,
            rhs_upper: rhs,
            oversample: 0,
        },
        CLASSICAL_ABS_TOL,
        CLASSICAL_REL_TOL,
        plan.seed,
    ))
}

/// Pointwise form: for `a > 0` the `|a|` blocks of the orbit of `x` bound the
/// left side at `x`; for `a < 0` the same holds from `z = T^{-(|a| N + 1)} x`,
/// since reversing a block only conjugates the phase.
fn power_lemma(
    system: &SystemSpec,
    f: &ObservableExpr,
    a: i64,
    n: usize,
    p: NormIndex,
    plan: &SamplePlan,
    oversample: usize,
) -> Result<CheckReport> {
    if a == 0 {
        return Err(Error::pre("a must be nonzero"));
    }
    if n < 1 {
        return Err(Error::pre("N must be >= 1"));
    }
    let b = a.unsigned_abs() as usize;
    let total = b * n + 1;
    let window = if a > 0 {
        Window::for_shifts(f.coord_span(), 0, total as i64)
    } else {
        Window::for_shifts(f.coord_span(), -(total as i64), n as i64)
    };
    let points = sample_points(system, plan, window)?;
    struct Row {
        lhs: SupEstimate,
        blocks: Vec<SupEstimate>,
        own: SupEstimate,
    }
    let rows: Vec<Row> = points
        .par_iter()
        .map(|x| {
            let start = if a > 0 {
                x.clone()
            } else {
                iterate_signed(system, x, -(total as i64))?
            };
            let orbit = base_orbit(f, system, &start, total + 1)?;
            let lhs_seq: Vec<Complex64> = (1..=n)
                .map(|i| if a > 0 { orbit[b * i] } else { orbit[total - b * i] })
                .collect();
            let blocks: Vec<SupEstimate> = (0..b)
                .map(|l| sup_of(&orbit[l * n + 1..=l * n + n], oversample))
                .collect();
            let own = if a > 0 {
                blocks[0]
            } else {
                sup_of(&base_orbit(f, system, x, n + 1)?[1..], oversample)
            };
            Ok(Row {
                lhs: sup_of(&lhs_seq, oversample),
                blocks,
                own,
            })
        })
        .collect::<Result<_>>()?;
    let lhs_lo = p.norm(rows.iter().map(|r| r.lhs.lower));
    let lhs_up = p.norm(rows.iter().map(|r| r.lhs.upper));
    let rhs_lo: f64 = (0..b).map(|l| p.norm(rows.iter().map(|r| r.blocks[l].lower))).sum();
    let rhs_up: f64 = (0..b).map(|l| p.norm(rows.iter().map(|r| r.blocks[l].upper))).sum();
    let literal = b as f64 * p.norm(rows.iter().map(|r| r.own.lower));
    Ok(CheckReport::build(
        "power_lemma",
        system.to_string(),
        json!({
            "a": a,
            "N": n,
            "p": p.as_f64(),
            "samples": plan.count,
            "observable": f.to_string(),
            "abs_a_times_norm": literal,
        }),
        b as f64,
        Brackets {
            lhs_lower: lhs_lo,
            lhs_upper: lhs_up,
            rhs_lower: rhs_lo,
            rhs_upper: rhs_up,
            oversample,
        },
        CLASSICAL_ABS_TOL,
        CLASSICAL_REL_TOL,
        plan.seed,
    ))
}
