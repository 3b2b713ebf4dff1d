//! Higher-order Wiener-Wintner averages.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::{cube_product_multi, vertex_shift, ObservableExpr};
use crate::sampling::{sample_points, SamplePlan, Window};
use crate::systems::{step_in_place, Point, SystemSpec};
use crate::trig::{sup_of, SupEstimate, WeightedSeq, DEFAULT_OVERSAMPLE};

/// Norm index for estimates over the invariant measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormIndex {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
}

impl NormIndex {
    pub fn from_int(p: u32) -> Result<Self> {
        match p {
            1 => Ok(NormIndex::L1),
            2 => Ok(NormIndex::L2),
            _ => Err(Error::pre(format!("norm index must be 1 or 2, got {p}"))),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            NormIndex::L1 => 1.0,
            NormIndex::L2 => 2.0,
        }
    }

    fn pow(self, x: f64) -> f64 {
        match self {
            NormIndex::L1 => x,
            NormIndex::L2 => x * x,
        }
    }

    fn root(self, x: f64) -> f64 {
        match self {
            NormIndex::L1 => x,
            NormIndex::L2 => x.sqrt(),
        }
    }

    /// Empirical p-norm of nonnegative values.
    pub fn norm(self, xs: impl IntoIterator<Item = f64>) -> f64 {
        let mut s = 0.0;
        let mut n = 0usize;
        for x in xs {
            s += self.pow(x);
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            self.root(s / n as f64)
        }
    }
}

/// One function, or one function per vertex of the cube `{0,1}^(k-1)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Single(ObservableExpr),
    Multi(Vec<ObservableExpr>),
}

impl Family {
    fn functions(&self, order: usize) -> Result<Vec<ObservableExpr>> {
        let verts = 1usize << (order - 1);
        match self {
            Family::Single(f) => Ok(vec![f.clone(); verts]),
            Family::Multi(gs) if gs.len() == verts => Ok(gs.clone()),
            Family::Multi(gs) => Err(Error::pre(format!(
                "order {order} needs {verts} functions, got {}",
                gs.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WWQuery {
    pub family: Family,
    pub system: SystemSpec,
    pub order: usize,
    pub n: usize,
    pub p: NormIndex,
    pub beta: f64,
    pub scale: u64,
    pub plan: SamplePlan,
    pub oversample: usize,
    pub apply_exponent: bool,
    pub keep_per_h: bool,
}

impl WWQuery {
    pub fn new(f: ObservableExpr, system: SystemSpec, order: usize, n: usize, plan: SamplePlan) -> Self {
        WWQuery {
            family: Family::Single(f),
            system,
            order,
            n,
            p: NormIndex::L2,
            beta: 0.5,
            scale: 1,
            plan,
            oversample: DEFAULT_OVERSAMPLE,
            apply_exponent: true,
            keep_per_h: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::pre("order k must be >= 1"));
        }
        if self.order > 12 {
            return Err(Error::pre("order k above 12 is not supported"));
        }
        if self.n < 4 {
            return Err(Error::pre(format!("N must be >= 4, got {}", self.n)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::pre(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if self.scale < 1 {
            return Err(Error::pre("scale j must be >= 1"));
        }
        if self.oversample < 2 {
            return Err(Error::pre("oversample must be >= 2"));
        }
        self.family.functions(self.order).map(|_| ())
    }

    /// The h-range size `floor(N^beta)`.
    pub fn h_range(&self) -> usize {
        h_range(self.n, self.beta)
    }
}

/// `floor(N^beta)`, exact for beta = 1/2 and beta = 1.
pub fn h_range(n: usize, beta: f64) -> usize {
    if beta == 0.5 {
        return n.isqrt();
    }
    if beta == 1.0 {
        return n;
    }
    let mut h = (n as f64).powf(beta).floor() as usize;
    while h > 0 && (h as f64).powf(1.0 / beta) > n as f64 * (1.0 + 1e-12) {
        h -= 1;
    }
    while ((h + 1) as f64).powf(1.0 / beta) <= n as f64 * (1.0 + 1e-12) {
        h += 1;
    }
    h.max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HTerm {
    pub h: Vec<u64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WWResult {
    pub value: f64,
    pub certified_upper: f64,
    pub stderr: f64,
    pub h_range: usize,
    pub per_h: Option<Vec<HTerm>>,
}

/// `(f(T^n x))_{n=1..N}`, stepping the orbit once per entry.
pub fn orbit_weights(obs: &ObservableExpr, system: &SystemSpec, x: &Point, n: usize) -> Result<WeightedSeq> {
    system.check_point(x)?;
    let mut y = x.clone();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        step_in_place(system, &mut y, true)?;
        out.push(obs.eval(system, &y)?);
    }
    WeightedSeq::new(out)
}

/// `(f(T^m x))_{m=0..len-1}`.
pub(crate) fn base_orbit(obs: &ObservableExpr, system: &SystemSpec, x: &Point, len: usize) -> Result<Vec<Complex64>> {
    let mut y = x.clone();
    let mut out = Vec::with_capacity(len);
    for m in 0..len {
        if m > 0 {
            step_in_place(system, &mut y, true)?;
        }
        out.push(obs.eval(system, &y)?);
    }
    Ok(out)
}

/// Orbits of the distinct functions of a cube family, plus the vertex map.
pub(crate) struct CubeOrbits {
    orbits: Vec<Vec<Complex64>>,
    vertex_fn: Vec<usize>,
}

impl CubeOrbits {
    pub(crate) fn new(gs: &[ObservableExpr], system: &SystemSpec, x: &Point, len: usize) -> Result<Self> {
        let mut distinct: Vec<&ObservableExpr> = Vec::new();
        let mut vertex_fn = Vec::with_capacity(gs.len());
        for g in gs {
            let idx = match distinct.iter().position(|d| *d == g) {
                Some(i) => i,
                None => {
                    distinct.push(g);
                    distinct.len() - 1
                }
            };
            vertex_fn.push(idx);
        }
        let orbits = distinct
            .iter()
            .map(|g| base_orbit(g, system, x, len))
            .collect::<Result<_>>()?;
        Ok(CubeOrbits { orbits, vertex_fn })
    }

    /// `u_n = eval(cube_product(g, h, j), T^n x)` for n = 1..N, with the same
    /// factor order as the expression so the values agree bit for bit.
    pub(crate) fn cube_seq(&self, h: &[u64], j: u64, n: usize, out: &mut Vec<Complex64>) -> Result<()> {
        out.clear();
        if h.is_empty() {
            out.extend_from_slice(&self.orbits[self.vertex_fn[0]][1..=n]);
            return Ok(());
        }
        let verts: Vec<(usize, bool, &[Complex64])> = (0..self.vertex_fn.len())
            .map(|v| {
                let (s, w) = vertex_shift(h, j, v)?;
                Ok((s as usize, w % 2 == 1, self.orbits[self.vertex_fn[v]].as_slice()))
            })
            .collect::<Result<_>>()?;
        for i in 1..=n {
            let mut acc = Complex64::new(1.0, 0.0);
            for &(s, odd, orb) in &verts {
                let v = orb[i + s];
                acc *= if odd { v.conj() } else { v };
            }
            out.push(acc);
        }
        Ok(())
    }
}

/// All tuples of `[1, h]^m` in lexicographic order.
pub fn h_tuples(h: usize, m: usize) -> Vec<Vec<u64>> {
    let mut out: Vec<Vec<u64>> = vec![vec![]];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|t| {
                (1..=h as u64).map(move |x| {
                    let mut t = t.clone();
                    t.push(x);
                    t
                })
            })
            .collect();
    }
    out
}

fn max_shift(hs: &[Vec<u64>], j: u64) -> Result<u64> {
    hs.iter()
        .map(|h| {
            h.iter()
                .try_fold(0u64, |a, &b| a.checked_add(b))
                .and_then(|s| s.checked_mul(j))
                .ok_or_else(|| Error::Overflow("cube shift".into()))
        })
        .try_fold(0u64, |a, s| s.map(|s| a.max(s)))
}

fn family_span(gs: &[ObservableExpr]) -> Option<(i64, i64)> {
    gs.iter()
        .filter_map(|g| g.coord_span())
        .fold(None, |acc, (a, b)| match acc {
            None => Some((a, b)),
            Some((x, y)) => Some((x.min(a), y.max(b))),
        })
}

/// Sample window for a cube family over `hs` at length `n`.
pub(crate) fn cube_window(gs: &[ObservableExpr], hs: &[Vec<u64>], j: u64, n: usize) -> Result<(Window, usize)> {
    let len = n as u64 + max_shift(hs, j)? + 1;
    let window = Window::for_shifts(family_span(gs), 0, len as i64 - 1);
    Ok((window, len as usize))
}

/// `sup_t |(1/N) sum_n e(nt) cube(T^n x)|` brackets for every `h` at one point.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sups_at_point(
    gs: &[ObservableExpr],
    system: &SystemSpec,
    x: &Point,
    hs: &[Vec<u64>],
    j: u64,
    n: usize,
    len: usize,
    oversample: usize,
) -> Result<Vec<SupEstimate>> {
    let orbits = CubeOrbits::new(gs, system, x, len)?;
    let mut buf = Vec::with_capacity(n);
    hs.iter()
        .map(|h| {
            orbits.cube_seq(h, j, n, &mut buf)?;
            Ok(sup_of(&buf, oversample))
        })
        .collect()
}

/// Brackets indexed `[sample][h]`, computed in parallel over samples.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sup_table(
    gs: &[ObservableExpr],
    system: &SystemSpec,
    points: &[Point],
    hs: &[Vec<u64>],
    j: u64,
    n: usize,
    len: usize,
    oversample: usize,
) -> Result<Vec<Vec<SupEstimate>>> {
    points
        .par_iter()
        .map(|x| sups_at_point(gs, system, x, hs, j, n, len, oversample))
        .collect()
}

/// Lower and upper p-norms over the samples of the sup for a single `h`.
#[allow(clippy::too_many_arguments)]
pub fn ww_norm_term(
    f: &ObservableExpr,
    system: &SystemSpec,
    h: &[u64],
    n: usize,
    p: NormIndex,
    plan: &SamplePlan,
    j: u64,
    oversample: usize,
) -> Result<(f64, f64)> {
    let gs = vec![f.clone(); 1 << h.len()];
    let hs = vec![h.to_vec()];
    let (window, len) = cube_window(&gs, &hs, j, n)?;
    let points = sample_points(system, plan, window)?;
    let table = sup_table(&gs, system, &points, &hs, j, n, len, oversample)?;
    Ok((
        p.norm(table.iter().map(|r| r[0].lower)),
        p.norm(table.iter().map(|r| r[0].upper)),
    ))
}

/// Aggregation of a sup table into the averaged WW quantity.
pub(crate) struct Aggregate {
    pub value: f64,
    pub upper: f64,
    pub stderr: f64,
    pub terms: Vec<(f64, f64)>,
}

pub(crate) fn aggregate(table: &[Vec<SupEstimate>], hcount: usize, p: NormIndex, exponent: f64) -> Aggregate {
    let ns = table.len();
    let mut sums_lo = vec![0.0; hcount];
    let mut sums_up = vec![0.0; hcount];
    for row in table {
        for (k, e) in row.iter().enumerate() {
            sums_lo[k] += p.pow(e.lower);
            sums_up[k] += p.pow(e.upper);
        }
    }
    let term = |s: f64, cnt: f64| p.root(s / cnt);
    let terms: Vec<(f64, f64)> = sums_lo
        .iter()
        .zip(&sums_up)
        .map(|(&lo, &up)| (term(lo, ns as f64), term(up, ns as f64)))
        .collect();
    let avg = |xs: &mut dyn Iterator<Item = f64>| xs.map(|t| t.powf(exponent)).sum::<f64>() / hcount as f64;
    let value = avg(&mut terms.iter().map(|t| t.0));
    let upper = avg(&mut terms.iter().map(|t| t.1));

    // leave-one-out jackknife over samples
    let stderr = if ns > 1 {
        let loo: Vec<f64> = (0..ns)
            .map(|i| {
                avg(&mut sums_lo
                    .iter()
                    .zip(&table[i])
                    .map(|(&s, e)| term((s - p.pow(e.lower)).max(0.0), (ns - 1) as f64)))
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / ns as f64;
        let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
        ((ns - 1) as f64 / ns as f64 * ss).sqrt()
    } else {
        0.0
    };
    Aggregate {
        value,
        upper,
        stderr,
        terms,
    }
}

/// Exponent applied to each h-term. The first-order quantity carries none.
pub fn term_exponent(order: usize, apply: bool) -> f64 {
    if apply && order >= 2 {
        2.0 / 3.0
    } else {
        1.0
    }
}

pub fn ww_average(q: &WWQuery) -> Result<WWResult> {
    q.validate()?;
    let gs = q.family.functions(q.order)?;
    let hr = q.h_range();
    let hs = h_tuples(hr, q.order - 1);
    let (window, len) = cube_window(&gs, &hs, q.scale, q.n)?;
    let points = sample_points(&q.system, &q.plan, window)?;
    ww_average_on(q, &gs, &hs, &points, len)
}

/// `ww_average` on a caller-supplied sample set.
pub fn ww_average_at_points(q: &WWQuery, points: &[Point]) -> Result<WWResult> {
    q.validate()?;
    let gs = q.family.functions(q.order)?;
    let hs = h_tuples(q.h_range(), q.order - 1);
    let (_, len) = cube_window(&gs, &hs, q.scale, q.n)?;
    ww_average_on(q, &gs, &hs, points, len)
}

fn ww_average_on(
    q: &WWQuery,
    gs: &[ObservableExpr],
    hs: &[Vec<u64>],
    points: &[Point],
    len: usize,
) -> Result<WWResult> {
    let table = sup_table(gs, &q.system, points, hs, q.scale, q.n, len, q.oversample)?;
    let agg = aggregate(&table, hs.len(), q.p, term_exponent(q.order, q.apply_exponent));
    Ok(WWResult {
        value: agg.value,
        certified_upper: agg.upper,
        stderr: agg.stderr,
        h_range: q.h_range(),
        per_h: q.keep_per_h.then(|| {
            hs.iter()
                .zip(&agg.terms)
                .map(|(h, &(lower, upper))| HTerm {
                    h: h.clone(),
                    lower,
                    upper,
                })
                .collect()
        }),
    })
}

/// Pointwise bracket for `(1/H^m) sum_{h in [H]^m} sup_t |...|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseBracket {
    pub lower: f64,
    pub upper: f64,
}

pub const DEFAULT_UWW_BUDGET: u128 = 1 << 16;

/// The pointwise uniform-WW quantity over the full range `h in [N]^(k-1)`,
/// where the cube has `2^(k-1)` vertices.
pub fn uww_pointwise(
    gs: &[ObservableExpr],
    system: &SystemSpec,
    x: &Point,
    n: usize,
    budget: u128,
    oversample: usize,
) -> Result<PointwiseBracket> {
    uww_pointwise_range(gs, system, x, n, n, budget, oversample)
}

/// As `uww_pointwise` with the h-range capped at `h_max`.
pub fn uww_pointwise_range(
    gs: &[ObservableExpr],
    system: &SystemSpec,
    x: &Point,
    n: usize,
    h_max: usize,
    budget: u128,
    oversample: usize,
) -> Result<PointwiseBracket> {
    if gs.len() < 2 || !gs.len().is_power_of_two() {
        return Err(Error::pre("need 2^(k-1) functions with k >= 2"));
    }
    let m = gs.len().trailing_zeros() as usize;
    let needed = (h_max as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if needed > budget {
        return Err(Error::Budget { needed, budget });
    }
    let hs = h_tuples(h_max, m);
    let (_, len) = cube_window(gs, &hs, 1, n)?;
    let orbits = CubeOrbits::new(gs, system, x, len)?;
    let sups: Vec<SupEstimate> = hs
        .par_iter()
        .map(|h| {
            let mut buf = Vec::with_capacity(n);
            orbits.cube_seq(h, 1, n, &mut buf)?;
            Ok(sup_of(&buf, oversample))
        })
        .collect::<Result<_>>()?;
    let cnt = hs.len() as f64;
    Ok(PointwiseBracket {
        lower: sups.iter().map(|s| s.lower * s.lower).sum::<f64>() / cnt,
        upper: sups.iter().map(|s| s.upper * s.upper).sum::<f64>() / cnt,
    })
}

/// The mixed families of a sum: for `f + g` at order `k`, one collection per
/// assignment of `f` or `g` to the cube vertices.
pub fn mixed_families(f: &ObservableExpr, g: &ObservableExpr, order: usize) -> Vec<Vec<ObservableExpr>> {
    let verts = 1usize << (order - 1);
    (0..1usize << verts)
        .map(|mask| {
            (0..verts)
                .map(|v| if mask >> v & 1 == 1 { g.clone() } else { f.clone() })
                .collect()
        })
        .collect()
}

/// `cube_product_multi` exposed for callers building families by hand.
pub fn family_cube(gs: &[ObservableExpr], h: &[u64], j: u64) -> Result<ObservableExpr> {
    cube_product_multi(gs, h, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::cube_product;
    use crate::systems::{iterate, SymbolWord, TorusPoint};
    use std::f64::consts::TAU;

    fn fair() -> SystemSpec {
        SystemSpec::bernoulli(vec![0.5, 0.5]).unwrap()
    }

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    #[test]
    fn orbit_weight_examples() {
        let s = SystemSpec::skew(2, 0.5).unwrap();
        let x = Point::Torus(TorusPoint::zero(2));
        let w = orbit_weights(&ObservableExpr::character(vec![0, 1]), &s, &x, 4).unwrap();
        let want = [1.0, -1.0, -1.0, 1.0];
        for (v, e) in w.values().iter().zip(want) {
            assert!((v - Complex64::new(e, 0.0)).norm() < 1e-15, "{v}");
        }
        let r = SystemSpec::rotation(GOLDEN).unwrap();
        let x = Point::Torus(TorusPoint::zero(1));
        let w = orbit_weights(&ObservableExpr::character(vec![1]), &r, &x, 50).unwrap();
        for (i, v) in w.values().iter().enumerate() {
            let e = Complex64::from_polar(1.0, TAU * ((i + 1) as f64 * GOLDEN).fract());
            assert!((v - e).norm() < 1e-12);
        }
        let w = orbit_weights(&ObservableExpr::zero(), &r, &x, 5).unwrap();
        assert!(w.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cube_sequence_matches_expression() {
        let s = SystemSpec::skew(3, 0.41421356237309503).unwrap();
        let f = ObservableExpr::character(vec![1, 0, 2]);
        let x = Point::Torus(TorusPoint::from_f64(&[0.1, 0.7, 0.3]).unwrap());
        let gs = vec![f.clone(); 4];
        let orbits = CubeOrbits::new(&gs, &s, &x, 64).unwrap();
        let mut buf = Vec::new();
        orbits.cube_seq(&[3, 5], 2, 40, &mut buf).unwrap();
        let expr = cube_product(&f, &[3, 5], 2).unwrap();
        let direct = orbit_weights(&expr, &s, &x, 40).unwrap();
        assert_eq!(buf, direct.values());
    }

    #[test]
    fn h_tuples_are_lexicographic() {
        assert_eq!(h_tuples(2, 2), vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
        assert_eq!(h_tuples(5, 0), vec![Vec::<u64>::new()]);
        assert_eq!(h_range(16384, 0.5), 128);
        assert_eq!(h_range(15, 0.5), 3);
        assert_eq!(h_range(1000, 1.0 / 3.0), 10);
        assert_eq!(h_range(999, 1.0 / 3.0), 9);
    }

    #[test]
    fn constant_one_terms() {
        let s = fair();
        let plan = SamplePlan::pseudorandom(8, 1);
        let (lo, up) = ww_norm_term(&ObservableExpr::one(), &s, &[3], 32, NormIndex::L2, &plan, 1, 8).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (up - 1.0).abs() < 1e-12);
        let (lo, up) = ww_norm_term(&ObservableExpr::zero(), &s, &[3], 32, NormIndex::L2, &plan, 1, 8).unwrap();
        assert_eq!((lo, up), (0.0, 0.0));
        for k in 1..=3 {
            let q = WWQuery::new(ObservableExpr::one(), s.clone(), k, 16, plan);
            let r = ww_average(&q).unwrap();
            assert!((r.value - 1.0).abs() < 1e-12, "k={k} {r:?}");
        }
        let q = WWQuery::new(ObservableExpr::zero(), s, 2, 16, plan);
        assert_eq!(ww_average(&q).unwrap().value, 0.0);
    }

    #[test]
    fn rotation_eigenfunction_does_not_decay() {
        let r = SystemSpec::rotation(GOLDEN).unwrap();
        for n in [16, 100, 257] {
            let q = WWQuery::new(
                ObservableExpr::character(vec![1]),
                r.clone(),
                1,
                n,
                SamplePlan::pseudorandom(4, 3),
            );
            let res = ww_average(&q).unwrap();
            assert!((res.value - 1.0).abs() < 1e-6, "{res:?}");
        }
    }

    // Brute-force oracle: explicit double loop over n and a 1024-point t grid.
    fn brute_sup(u: &dyn Fn(usize) -> Complex64, n: usize) -> f64 {
        (0..1024)
            .map(|k| {
                let t = k as f64 / 1024.0;
                let mut s = Complex64::new(0.0, 0.0);
                for i in 1..=n {
                    s += u(i) * Complex64::from_polar(1.0, TAU * i as f64 * t);
                }
                s.norm() / n as f64
            })
            .fold(0.0, f64::max)
    }

    fn word_of(p: &Point) -> &SymbolWord {
        match p {
            Point::Word(w) => w,
            _ => unreachable!(),
        }
    }

    #[test]
    fn norm_term_matches_brute_force() {
        let s = fair();
        let f = ObservableExpr::centered(0, 0.5);
        let plan = SamplePlan::pseudorandom(16, 5);
        let (lo, up) = ww_norm_term(&f, &s, &[1], 16, NormIndex::L2, &plan, 1, 8).unwrap();
        let pts = sample_points(&s, &plan, Window::forward(17)).unwrap();
        let vals: Vec<f64> = pts
            .iter()
            .map(|p| {
                let w = word_of(p);
                let g = |i: usize| {
                    let a = w.get(i as i64).unwrap() as f64 - 0.5;
                    let b = w.get(i as i64 + 1).unwrap() as f64 - 0.5;
                    Complex64::new(a * b, 0.0)
                };
                brute_sup(&g, 16)
            })
            .collect();
        let brute = NormIndex::L2.norm(vals);
        assert!(brute <= up + 1e-12 && brute >= lo - 2e-3, "{lo} {brute} {up}");
    }

    #[test]
    fn uww_matches_brute_force() {
        let s = fair();
        let f = ObservableExpr::centered(0, 0.5);
        let w = SymbolWord::new((0..64).map(|i| ((i * 7 + i / 3) % 2) as u8).collect(), 0).unwrap();
        let x = Point::Word(w.clone());
        let b = uww_pointwise(&[f.clone(), f.clone()], &s, &x, 16, 1 << 10, 8).unwrap();
        let mut acc = 0.0;
        for h in 1..=16usize {
            let g = |i: usize| {
                let a = w.get(i as i64).unwrap() as f64 - 0.5;
                let c = w.get((i + h) as i64).unwrap() as f64 - 0.5;
                Complex64::new(a * c, 0.0)
            };
            acc += brute_sup(&g, 16).powi(2);
        }
        let brute = acc / 16.0;
        assert!(brute <= b.upper + 1e-12 && brute >= b.lower - 1e-3, "{b:?} {brute}");
        let zero = uww_pointwise(
            &[ObservableExpr::zero(), ObservableExpr::zero()],
            &s,
            &x,
            16,
            1 << 10,
            8,
        )
        .unwrap();
        assert_eq!(zero.upper, 0.0);
        assert!(matches!(
            uww_pointwise(&[f.clone(), f.clone()], &s, &x, 16, 8, 8),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn uww_rotation_is_one() {
        let r = SystemSpec::rotation(GOLDEN).unwrap();
        let f = ObservableExpr::character(vec![1]);
        let x = Point::Torus(TorusPoint::from_f64(&[0.3]).unwrap());
        let b = uww_pointwise(&[f.clone(), f], &r, &x, 32, 1 << 10, 8).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-9 && b.upper <= 1.0 + 1e-9, "{b:?}");
    }

    #[test]
    fn p1_below_p2() {
        let s = fair();
        let f = ObservableExpr::centered(0, 0.5);
        let plan = SamplePlan::pseudorandom(32, 8);
        let (l1, _) = ww_norm_term(&f, &s, &[2], 64, NormIndex::L1, &plan, 1, 8).unwrap();
        let (l2, _) = ww_norm_term(&f, &s, &[2], 64, NormIndex::L2, &plan, 1, 8).unwrap();
        assert!(l1 <= l2 + 1e-15);
    }

    #[test]
    fn scale_invariance() {
        let s = fair();
        let f = ObservableExpr::centered(0, 0.5);
        let plan = SamplePlan::pseudorandom(16, 2);
        let base = ww_average(&WWQuery::new(f.clone(), s.clone(), 2, 64, plan))
            .unwrap()
            .value;
        let c = 2.0;
        let g = f.scale(Complex64::new(c, 0.0));
        let scaled = ww_average(&WWQuery::new(g, s, 2, 64, plan)).unwrap().value;
        let want = c.powf(2.0 * 2.0 / 3.0) * base;
        assert!((scaled - want).abs() <= 1e-12 * want, "{scaled} {want}");
    }

    #[test]
    fn stepped_orbit_agrees_with_closed_form() {
        let s = SystemSpec::skew(3, 0.3).unwrap();
        let x = Point::Torus(TorusPoint::from_f64(&[0.5, 0.25, 0.125]).unwrap());
        let f = ObservableExpr::character(vec![0, 0, 1]);
        let orbit = base_orbit(&f, &s, &x, 100).unwrap();
        for m in [0u64, 1, 17, 99] {
            let y = iterate(&s, &x, m).unwrap();
            assert_eq!(orbit[m as usize], f.eval(&s, &y).unwrap());
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = fair();
        let f = ObservableExpr::centered(0, 0.5);
        let q = WWQuery::new(f, s, 2, 64, SamplePlan::pseudorandom(24, 3));
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| ww_average(&q).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn validation() {
        let s = fair();
        let plan = SamplePlan::pseudorandom(4, 0);
        let mut q = WWQuery::new(ObservableExpr::one(), s, 2, 3, plan);
        assert!(ww_average(&q).is_err());
        q.n = 8;
        q.beta = 0.0;
        assert!(ww_average(&q).is_err());
        q.beta = 0.5;
        q.family = Family::Multi(vec![ObservableExpr::one(); 3]);
        assert!(ww_average(&q).is_err());
        assert!(NormIndex::from_int(3).is_err());
    }
}
