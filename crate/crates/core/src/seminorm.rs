//! Finite-depth Gowers-Host-Kra seminorms and probes comparing them with
//! Wiener-Wintner averages.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::{cube_product, ObservableExpr};
use crate::sampling::{sample_points, SamplePlan, Window};
use crate::systems::{Point, SystemSpec};
use crate::trig::DEFAULT_OVERSAMPLE;
use crate::ww::{cube_window, h_tuples, sup_table, uww_pointwise_range, ww_average_at_points, NormIndex, WWQuery};

/// How integrals against the invariant measure are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integration {
    /// Closed form only; non-reducible expressions are an error.
    Exact,
    /// Monte Carlo on the given plan.
    Sampled(SamplePlan),
    /// Closed form when available, otherwise Monte Carlo.
    Auto(SamplePlan),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrValue {
    pub value: Complex64,
    pub stderr: f64,
    pub exact: bool,
}

fn sampled_mean(g: &ObservableExpr, system: &SystemSpec, points: &[Point]) -> Result<CorrValue> {
    let vals: Vec<Complex64> = points.iter().map(|p| g.eval(system, p)).collect::<Result<_>>()?;
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<Complex64>() / n;
    let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(CorrValue {
        value: mean,
        stderr: (var / n).sqrt(),
        exact: false,
    })
}

fn integrate(
    g: &ObservableExpr,
    system: &SystemSpec,
    integration: &Integration,
    points: Option<&[Point]>,
) -> Result<CorrValue> {
    let exact = || {
        g.exact_integral(system).map(|value| CorrValue {
            value,
            stderr: 0.0,
            exact: true,
        })
    };
    let sampled = |plan: &SamplePlan| -> Result<CorrValue> {
        match points {
            Some(p) => sampled_mean(g, system, p),
            None => {
                let window = Window::for_shifts(g.coord_span(), 0, 0);
                sampled_mean(g, system, &sample_points(system, plan, window)?)
            }
        }
    };
    match integration {
        Integration::Exact => exact(),
        Integration::Sampled(plan) => sampled(plan),
        Integration::Auto(plan) => match exact() {
            Err(Error::NoClosedForm(_)) => sampled(plan),
            r => r,
        },
    }
}

/// `int f . conj(f o T^h) dmu`.
pub fn inner_corr(f: &ObservableExpr, system: &SystemSpec, h: u64, integration: &Integration) -> Result<CorrValue> {
    let g = if h == 0 {
        ObservableExpr::prod(vec![f.clone(), f.clone().conj()])
    } else {
        cube_product(f, &[h], 1)?
    };
    integrate(&g, system, integration, None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeminormQuery {
    pub f: ObservableExpr,
    pub system: SystemSpec,
    pub k: usize,
    pub h: usize,
    pub integration: Integration,
    pub budget: u128,
    pub max_order: usize,
}

pub const DEFAULT_SEMINORM_H: usize = 64;
pub const DEFAULT_SEMINORM_BUDGET: u128 = 1 << 20;

impl SeminormQuery {
    pub fn new(f: ObservableExpr, system: SystemSpec, k: usize, h: usize, integration: Integration) -> Self {
        SeminormQuery {
            f,
            system,
            k,
            h,
            integration,
            budget: DEFAULT_SEMINORM_BUDGET,
            max_order: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormValue {
    pub value: f64,
    /// Mean standard error of the correlation integrals (0 when all exact).
    pub stderr: f64,
    pub exact: bool,
}

/// `(H^{-(k-1)} sum_{h in [H]^(k-1)} |int cube(f, h)|^2)^{1/2^k}`.
pub fn ghk_seminorm(q: &SeminormQuery) -> Result<SeminormValue> {
    if q.k < 2 || q.k > q.max_order {
        return Err(Error::pre(format!("k must lie in [2, {}], got {}", q.max_order, q.k)));
    }
    if q.h < 1 {
        return Err(Error::pre("H must be >= 1"));
    }
    let needed = (q.h as u128).checked_pow(q.k as u32 - 1).unwrap_or(u128::MAX);
    if needed > q.budget {
        return Err(Error::Budget {
            needed,
            budget: q.budget,
        });
    }
    let hs = h_tuples(q.h, q.k - 1);
    let cubes: Vec<ObservableExpr> = hs.iter().map(|h| cube_product(&q.f, h, 1)).collect::<Result<_>>()?;

    // one shared sample set for every h when sampling is needed
    let plan = match q.integration {
        Integration::Sampled(p) => Some(p),
        Integration::Auto(p)
            if cubes
                .iter()
                .any(|c| matches!(c.exact_integral(&q.system), Err(Error::NoClosedForm(_)))) =>
        {
            Some(p)
        }
        _ => None,
    };
    let points = match plan {
        Some(p) => {
            let span = cubes
                .iter()
                .filter_map(|c| c.coord_span())
                .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
            Some(sample_points(&q.system, &p, Window::for_shifts(span, 0, 0))?)
        }
        None => None,
    };
    let corrs: Vec<CorrValue> = cubes
        .par_iter()
        .map(|c| integrate(c, &q.system, &q.integration, points.as_deref()))
        .collect::<Result<_>>()?;
    let cnt = corrs.len() as f64;
    let avg = corrs.iter().map(|c| c.value.norm_sqr()).sum::<f64>() / cnt;
    Ok(SeminormValue {
        value: avg.powf(1.0 / (1u64 << q.k) as f64),
        stderr: corrs.iter().map(|c| c.stderr).sum::<f64>() / cnt,
        exact: corrs.iter().all(|c| c.exact),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub ww_2b: f64,
    pub ww_3b: f64,
    pub ww_4b: f64,
    pub seminorm_finite_h: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub plan: SamplePlan,
    /// Upper limit on the number of h-tuples for the full-range columns.
    pub h_budget: u128,
    pub oversample: usize,
}

impl ProbeConfig {
    pub fn new(plan: SamplePlan) -> Self {
        ProbeConfig {
            plan,
            h_budget: 64,
            oversample: DEFAULT_OVERSAMPLE,
        }
    }

    /// Side of the h-range used by the full-range columns at length `n`.
    pub fn capped_range(&self, n: usize, m: usize) -> usize {
        let mut side = 1usize;
        while side < n
            && ((side + 1) as u128)
                .checked_pow(m as u32)
                .is_some_and(|v| v <= self.h_budget)
        {
            side += 1;
        }
        side
    }
}

/// Side-by-side finite-N quantities: the pointwise full-range average at the
/// first sample point, its L2 version over the samples, the WW average of
/// order `k`, and the finite-H seminorm of order `k + 1`.
pub fn equivalence_probe(
    f: &ObservableExpr,
    system: &SystemSpec,
    k: usize,
    ns: &[usize],
    h: usize,
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeRow>> {
    if k < 2 {
        return Err(Error::pre("probe needs k >= 2"));
    }
    if ns.is_empty() {
        return Err(Error::pre("empty N list"));
    }
    let sq = SeminormQuery::new(f.clone(), system.clone(), k + 1, h, Integration::Auto(cfg.plan));
    let semi = ghk_seminorm(&sq)?;
    let m = k - 1;
    let gs = vec![f.clone(); 1 << m];
    ns.iter()
        .map(|&n| {
            let mut q = WWQuery::new(f.clone(), system.clone(), k, n, cfg.plan);
            q.oversample = cfg.oversample;
            let side = cfg.capped_range(n, m);
            let full_hs = h_tuples(side, m);
            let ww_hs = h_tuples(q.h_range(), m);
            let (w1, len) = cube_window(&gs, &full_hs, 1, n)?;
            let (w2, _) = cube_window(&gs, &ww_hs, 1, n)?;
            let points = sample_points(system, &cfg.plan, w1.union(w2))?;
            let ww_4b = ww_average_at_points(&q, &points)?.value;
            let table = sup_table(&gs, system, &points, &full_hs, 1, n, len, cfg.oversample)?;
            let ww_3b = full_hs
                .iter()
                .enumerate()
                .map(|(i, _)| NormIndex::L2.norm(table.iter().map(|r| r[i].lower)).powi(2))
                .sum::<f64>()
                / full_hs.len() as f64;
            let ww_2b = uww_pointwise_range(&gs, system, &points[0], n, side, cfg.h_budget, cfg.oversample)?.lower;
            Ok(ProbeRow {
                n,
                ww_2b,
                ww_3b,
                ww_4b,
                seminorm_finite_h: semi.value,
                stderr: semi.stderr,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::Turn;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    fn fair() -> SystemSpec {
        SystemSpec::bernoulli(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn corr_examples() {
        let r = SystemSpec::rotation(GOLDEN).unwrap();
        let c = inner_corr(&ObservableExpr::one(), &r, 5, &Integration::Exact).unwrap();
        assert_eq!(c.value, Complex64::new(1.0, 0.0));
        for h in 1..10 {
            let c = inner_corr(&ObservableExpr::character(vec![1]), &r, h, &Integration::Exact).unwrap();
            let want = Turn::from_f64(GOLDEN).mul_int(-(h as i128)).cis();
            assert!((c.value - want).norm() < 1e-15);
            assert!((c.value.norm() - 1.0).abs() < 1e-15);
        }
        let c = inner_corr(&ObservableExpr::centered(0, 0.5), &fair(), 1, &Integration::Exact).unwrap();
        assert_eq!(c.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn sampled_fallback_reports_stderr() {
        let r = SystemSpec::rotation(GOLDEN).unwrap();
        let f = ObservableExpr::centered(0, 0.5);
        assert!(inner_corr(&f, &r, 1, &Integration::Exact).is_err());
        let c = inner_corr(&f, &r, 1, &Integration::Auto(SamplePlan::pseudorandom(2000, 1))).unwrap();
        assert!(!c.exact && c.stderr > 0.0);
        // int (x - 1/2)(x + a - 1/2 mod 1) dx = 1/12 - a(1-a)/2
        let a = GOLDEN;
        let want = 1.0 / 12.0 - a * (1.0 - a) / 2.0;
        assert!((c.value.re - want).abs() < 5.0 * c.stderr, "{c:?} {want}");
    }

    #[test]
    fn seminorm_exact_values() {
        let r = SystemSpec::rotation(GOLDEN).unwrap();
        for h in [16, 64] {
            let q = SeminormQuery::new(ObservableExpr::character(vec![1]), r.clone(), 2, h, Integration::Exact);
            let v = ghk_seminorm(&q).unwrap();
            assert!((v.value - 1.0).abs() < 1e-12 && v.exact);
            let c = Complex64::new(0.6, -0.8) * 1.5;
            let q = SeminormQuery::new(ObservableExpr::Constant(c), r.clone(), 2, h, Integration::Exact);
            assert!((ghk_seminorm(&q).unwrap().value - 1.5).abs() < 1e-12);
            let q = SeminormQuery::new(ObservableExpr::centered(0, 0.5), fair(), 2, h, Integration::Exact);
            assert_eq!(ghk_seminorm(&q).unwrap().value, 0.0);
        }
    }

    #[test]
    fn seminorm_scales() {
        let s = SystemSpec::skew(3, 0.41421356237309503).unwrap();
        let f = ObservableExpr::prod(vec![
            ObservableExpr::character(vec![1, 0, 0]),
            ObservableExpr::constant(1.0),
        ]);
        let g = f.clone().scale(Complex64::new(0.0, 3.0));
        for k in 2..=3 {
            let a = ghk_seminorm(&SeminormQuery::new(f.clone(), s.clone(), k, 8, Integration::Exact))
                .unwrap()
                .value;
            let b = ghk_seminorm(&SeminormQuery::new(g.clone(), s.clone(), k, 8, Integration::Exact))
                .unwrap()
                .value;
            assert!((b - 3.0 * a).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn seminorm_monotone_in_k() {
        let s = SystemSpec::skew(3, 0.41421356237309503).unwrap();
        for freq in [vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1], vec![2, 1, 1]] {
            let f = ObservableExpr::character(freq);
            let v2 = ghk_seminorm(&SeminormQuery::new(f.clone(), s.clone(), 2, 12, Integration::Exact))
                .unwrap()
                .value;
            let v3 = ghk_seminorm(&SeminormQuery::new(f.clone(), s.clone(), 3, 12, Integration::Exact))
                .unwrap()
                .value;
            assert!(v2 <= v3 + 1e-9, "{f}: {v2} > {v3}");
        }
    }

    #[test]
    fn budget_and_order_guards() {
        let r = SystemSpec::rotation(GOLDEN).unwrap();
        let mut q = SeminormQuery::new(ObservableExpr::one(), r, 4, 200, Integration::Exact);
        assert!(matches!(ghk_seminorm(&q), Err(Error::Budget { .. })));
        q.k = 5;
        assert!(ghk_seminorm(&q).is_err());
        q.k = 1;
        assert!(ghk_seminorm(&q).is_err());
    }

    #[test]
    fn probe_examples() {
        let r = SystemSpec::rotation(GOLDEN).unwrap();
        let cfg = ProbeConfig::new(SamplePlan::pseudorandom(8, 3));
        let rows = equivalence_probe(&ObservableExpr::character(vec![1]), &r, 2, &[16, 64], 16, &cfg).unwrap();
        for row in rows {
            assert!((row.ww_4b - 1.0).abs() < 1e-6, "{row:?}");
            assert!((row.ww_3b - 1.0).abs() < 1e-6);
            assert!((row.ww_2b - 1.0).abs() < 1e-6);
            assert!((row.seminorm_finite_h - 1.0).abs() < 1e-12);
        }
        let rows = equivalence_probe(&ObservableExpr::zero(), &fair(), 2, &[16], 8, &cfg).unwrap();
        assert_eq!(
            (rows[0].ww_2b, rows[0].ww_3b, rows[0].ww_4b, rows[0].seminorm_finite_h),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(cfg.capped_range(1000, 1), 64);
        assert_eq!(cfg.capped_range(1000, 2), 8);
        assert_eq!(cfg.capped_range(5, 1), 5);
    }
}
