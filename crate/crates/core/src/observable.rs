//! Bounded observables as expression trees, their evaluation along orbits,
//! cube products, sup-norm bounds and exact integrals.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::systems::{p_poly_signed, torus_closed_form, Point, SystemSpec, Turn};

/// An observable built from characters, Pinsker functions and coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservableExpr {
    Constant(Complex64),
    /// `e^{2 pi i (a . x)}` on a torus.
    TorusCharacter {
        freq: Vec<i64>,
    },
    /// `1_A - E(1_A | T^{-cutoff} A)` on a Bernoulli shift, where `A` is the
    /// cylinder `{x_i = s_i}` and the function is identically 0 when
    /// `cutoff <= level`. Every cylinder index must be at least `level`.
    PinskerFn {
        cylinder: BTreeMap<i64, u8>,
        cutoff: i64,
        level: i64,
    },
    /// `x_index - mean`, where `x_index` is a torus coordinate in [0, 1) or a
    /// Bernoulli symbol.
    CenteredCoordinate {
        index: i64,
        mean: f64,
    },
    Conj(Box<ObservableExpr>),
    Prod(Vec<ObservableExpr>),
    Sum(Vec<ObservableExpr>),
    Scale(Complex64, Box<ObservableExpr>),
    /// `child o T^m`.
    Shift(i64, Box<ObservableExpr>),
    /// `left(x) * right(y)` on a product system.
    Tensor(Box<ObservableExpr>, Box<ObservableExpr>),
}

use ObservableExpr as E;

impl ObservableExpr {
    pub fn constant(re: f64) -> Self {
        E::Constant(Complex64::new(re, 0.0))
    }

    pub fn zero() -> Self {
        E::constant(0.0)
    }

    pub fn one() -> Self {
        E::constant(1.0)
    }

    pub fn character(freq: Vec<i64>) -> Self {
        E::TorusCharacter { freq }
    }

    pub fn centered(index: i64, mean: f64) -> Self {
        E::CenteredCoordinate { index, mean }
    }

    pub fn pinsker(cylinder: BTreeMap<i64, u8>, cutoff: i64, level: i64) -> Result<Self> {
        if let Some((&i, _)) = cylinder.iter().find(|(&i, _)| i < level) {
            return Err(Error::pre(format!("cylinder index {i} lies below level {level}")));
        }
        Ok(E::PinskerFn {
            cylinder,
            cutoff,
            level,
        })
    }

    pub fn conj(self) -> Self {
        match self {
            E::Conj(inner) => *inner,
            e => E::Conj(Box::new(e)),
        }
    }

    pub fn shift(self, m: i64) -> Self {
        if m == 0 {
            return self;
        }
        match self {
            E::Shift(k, inner) if k + m == 0 => *inner,
            E::Shift(k, inner) => E::Shift(k + m, inner),
            e => E::Shift(m, Box::new(e)),
        }
    }

    pub fn scale(self, c: Complex64) -> Self {
        E::Scale(c, Box::new(self))
    }

    pub fn prod(children: Vec<ObservableExpr>) -> Self {
        E::Prod(children)
    }

    pub fn sum(terms: Vec<ObservableExpr>) -> Self {
        E::Sum(terms)
    }

    pub fn tensor(left: ObservableExpr, right: ObservableExpr) -> Self {
        E::Tensor(Box::new(left), Box::new(right))
    }

    /// Structural bound on the sup norm.
    pub fn sup_bound(&self, system: &SystemSpec) -> Result<f64> {
        Ok(match self {
            E::Constant(c) => c.norm(),
            E::TorusCharacter { .. } => {
                expect_torus(system)?;
                1.0
            }
            E::PinskerFn {
                cylinder,
                cutoff,
                level,
            } => {
                let probs = expect_bernoulli(system)?;
                if cutoff <= level {
                    0.0
                } else {
                    let q = lower_marginal(probs, cylinder, *cutoff)?;
                    q.max(1.0 - q)
                }
            }
            E::CenteredCoordinate { mean, .. } => match system {
                SystemSpec::Bernoulli { probs } => {
                    (0..probs.len()).map(|s| (s as f64 - mean).abs()).fold(0.0, f64::max)
                }
                SystemSpec::Rotation { .. } | SystemSpec::Skew { .. } => mean.abs().max((1.0 - mean).abs()),
                SystemSpec::Product(..) => {
                    return Err(Error::KindMismatch(
                        "coordinate observables on a product system need a tensor".into(),
                    ))
                }
            },
            E::Conj(e) | E::Shift(_, e) => e.sup_bound(system)?,
            E::Scale(c, e) => c.norm() * e.sup_bound(system)?,
            E::Prod(es) => {
                let mut b = 1.0;
                for e in es {
                    b *= e.sup_bound(system)?;
                }
                b
            }
            E::Sum(es) => {
                let mut b = 0.0;
                for e in es {
                    b += e.sup_bound(system)?;
                }
                b
            }
            E::Tensor(l, r) => {
                let (a, b) = expect_product(system)?;
                l.sup_bound(a)? * r.sup_bound(b)?
            }
        })
    }

    /// Whether every value is real (checked structurally).
    pub fn is_real(&self) -> bool {
        match self {
            E::Constant(c) => c.im == 0.0,
            E::TorusCharacter { freq } => freq.iter().all(|&a| a == 0),
            E::PinskerFn { .. } | E::CenteredCoordinate { .. } => true,
            E::Conj(e) | E::Shift(_, e) => e.is_real(),
            E::Scale(c, e) => c.im == 0.0 && e.is_real(),
            E::Prod(es) | E::Sum(es) => es.iter().all(|e| e.is_real()),
            E::Tensor(l, r) => l.is_real() && r.is_real(),
        }
    }

    /// Range of symbol coordinates read at the base point, over all Bernoulli
    /// leaves (shifts included). `None` when no symbol is read.
    pub fn coord_span(&self) -> Option<(i64, i64)> {
        fn merge(a: Option<(i64, i64)>, b: Option<(i64, i64)>) -> Option<(i64, i64)> {
            match (a, b) {
                (Some(x), Some(y)) => Some((x.0.min(y.0), x.1.max(y.1))),
                (x, None) => x,
                (None, y) => y,
            }
        }
        match self {
            E::Constant(_) | E::TorusCharacter { .. } => None,
            E::PinskerFn {
                cylinder,
                cutoff,
                level,
            } => {
                if cutoff <= level || cylinder.is_empty() {
                    None
                } else {
                    Some((*cylinder.keys().next()?, *cylinder.keys().next_back()?))
                }
            }
            E::CenteredCoordinate { index, .. } => Some((*index, *index)),
            E::Conj(e) | E::Scale(_, e) => e.coord_span(),
            E::Shift(m, e) => e.coord_span().map(|(a, b)| (a + m, b + m)),
            E::Prod(es) | E::Sum(es) => es.iter().fold(None, |acc, e| merge(acc, e.coord_span())),
            E::Tensor(l, r) => merge(l.coord_span(), r.coord_span()),
        }
    }

    /// Evaluates at `point`.
    pub fn eval(&self, system: &SystemSpec, point: &Point) -> Result<Complex64> {
        self.eval_at(system, point, 0)
    }

    fn eval_at(&self, system: &SystemSpec, point: &Point, shift: i64) -> Result<Complex64> {
        match self {
            E::Constant(c) => Ok(*c),
            E::TorusCharacter { freq } => {
                let x = torus_coords(system, point)?;
                if freq.len() != x.len() {
                    return Err(Error::KindMismatch(format!(
                        "character of length {} on a torus of dimension {}",
                        freq.len(),
                        x.len()
                    )));
                }
                let phase = if shift == 0 {
                    phase_of(freq, x)
                } else {
                    let alpha = system.angle_turn().unwrap_or_default();
                    phase_of(freq, &torus_closed_form(x, alpha, shift)?)
                };
                Ok(phase.cis())
            }
            E::PinskerFn {
                cylinder,
                cutoff,
                level,
            } => {
                let probs = expect_bernoulli(system)?;
                let w = match point {
                    Point::Word(w) => w,
                    _ => return Err(Error::KindMismatch("Pinsker function needs a word".into())),
                };
                if cutoff <= level {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let mut upper = true;
                let mut lower = true;
                for (&i, &s) in cylinder {
                    let hit = w.get(i + shift)? == s;
                    if i >= *cutoff {
                        upper &= hit;
                    } else {
                        lower &= hit;
                    }
                }
                if !upper {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let q = lower_marginal(probs, cylinder, *cutoff)?;
                let ind = if lower { 1.0 } else { 0.0 };
                Ok(Complex64::new(ind - q, 0.0))
            }
            E::CenteredCoordinate { index, mean } => match (system, point) {
                (SystemSpec::Bernoulli { .. }, Point::Word(w)) => {
                    Ok(Complex64::new(w.get(index + shift)? as f64 - mean, 0.0))
                }
                (SystemSpec::Rotation { .. } | SystemSpec::Skew { .. }, Point::Torus(p)) => {
                    let i = usize::try_from(*index).ok().filter(|&i| i < p.dim()).ok_or_else(|| {
                        Error::KindMismatch(format!("coordinate {index} on a torus of dimension {}", p.dim()))
                    })?;
                    let v = if shift == 0 {
                        p.coords[i]
                    } else {
                        let alpha = system.angle_turn().unwrap_or_default();
                        torus_closed_form(&p.coords, alpha, shift)?[i]
                    };
                    Ok(Complex64::new(v.to_f64() - mean, 0.0))
                }
                _ => Err(Error::KindMismatch(format!("coordinate observable on {system}"))),
            },
            E::Conj(e) => Ok(e.eval_at(system, point, shift)?.conj()),
            E::Scale(c, e) => Ok(c * e.eval_at(system, point, shift)?),
            E::Shift(m, e) => e.eval_at(system, point, shift + m),
            E::Prod(es) => {
                let mut acc = Complex64::new(1.0, 0.0);
                for e in es {
                    acc *= e.eval_at(system, point, shift)?;
                }
                Ok(acc)
            }
            E::Sum(es) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for e in es {
                    acc += e.eval_at(system, point, shift)?;
                }
                Ok(acc)
            }
            E::Tensor(l, r) => {
                let (a, b) = expect_product(system)?;
                match point {
                    Point::Pair(p, q) => Ok(l.eval_at(a, p, shift)? * r.eval_at(b, q, shift)?),
                    _ => Err(Error::KindMismatch("tensor observable needs a pair".into())),
                }
            }
        }
    }

    /// Exact integral against the invariant measure, when the expression is a
    /// finite sum of character or cylinder monomials.
    pub fn exact_integral(&self, system: &SystemSpec) -> Result<Complex64> {
        let terms = expand(self, system, 0)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, m) in &terms {
            acc += c * m.integral(system)?;
        }
        Ok(acc)
    }
}

/// `prod_{eta in {0,1}^m} c^{|eta|} f o T^{j (h . eta)}`, vertices in the
/// order where bit i of the vertex index is eta_i.
pub fn cube_product(f: &ObservableExpr, h: &[u64], j: u64) -> Result<ObservableExpr> {
    let m = h.len();
    let gs = vec![f.clone(); 1usize << m];
    cube_product_multi(&gs, h, j)
}

/// Cube product with a separate function at each vertex.
pub fn cube_product_multi(gs: &[ObservableExpr], h: &[u64], j: u64) -> Result<ObservableExpr> {
    let m = h.len();
    if gs.len() != 1usize << m {
        return Err(Error::pre(format!(
            "{} functions for a cube of {} vertices",
            gs.len(),
            1usize << m
        )));
    }
    if j == 0 || h.contains(&0) {
        return Err(Error::pre("cube shifts and scale must be >= 1"));
    }
    if m == 0 {
        return Ok(gs[0].clone());
    }
    let mut factors = Vec::with_capacity(gs.len());
    for (v, g) in gs.iter().enumerate() {
        let (shift, weight) = vertex_shift(h, j, v)?;
        let mut e = g.clone().shift(shift);
        if weight % 2 == 1 {
            e = e.conj();
        }
        factors.push(e);
    }
    Ok(E::Prod(factors))
}

/// Shift `j (h . eta)` and weight `|eta|` of vertex `v`.
pub(crate) fn vertex_shift(h: &[u64], j: u64, v: usize) -> Result<(i64, u32)> {
    let mut s: u64 = 0;
    for (i, &hi) in h.iter().enumerate() {
        if v >> i & 1 == 1 {
            s = s.checked_add(hi).ok_or_else(|| Error::Overflow("cube shift".into()))?;
        }
    }
    let s = s
        .checked_mul(j)
        .and_then(|s| i64::try_from(s).ok())
        .ok_or_else(|| Error::Overflow("cube shift".into()))?;
    Ok((s, v.count_ones()))
}

fn phase_of(freq: &[i64], x: &[Turn]) -> Turn {
    let mut t = Turn::ZERO;
    for (&a, &c) in freq.iter().zip(x) {
        t += c.mul_int(a as i128);
    }
    t
}

fn torus_coords<'a>(system: &SystemSpec, point: &'a Point) -> Result<&'a [Turn]> {
    expect_torus(system)?;
    match point {
        Point::Torus(p) => Ok(&p.coords),
        _ => Err(Error::KindMismatch("character needs a torus point".into())),
    }
}

fn expect_torus(system: &SystemSpec) -> Result<usize> {
    system
        .torus_dim()
        .ok_or_else(|| Error::KindMismatch(format!("torus observable on {system}")))
}

fn expect_bernoulli(system: &SystemSpec) -> Result<&[f64]> {
    match system {
        SystemSpec::Bernoulli { probs } => Ok(probs),
        s => Err(Error::KindMismatch(format!("Pinsker function on {s}"))),
    }
}

fn expect_product(system: &SystemSpec) -> Result<(&SystemSpec, &SystemSpec)> {
    match system {
        SystemSpec::Product(a, b) => Ok((a, b)),
        s => Err(Error::KindMismatch(format!("tensor observable on {s}"))),
    }
}

fn lower_marginal(probs: &[f64], cylinder: &BTreeMap<i64, u8>, cutoff: i64) -> Result<f64> {
    let mut q = 1.0;
    for (_, &s) in cylinder.range(..cutoff) {
        q *= *probs
            .get(s as usize)
            .ok_or_else(|| Error::pre(format!("symbol {s} outside an alphabet of {}", probs.len())))?;
    }
    Ok(q)
}

const TERM_BUDGET: usize = 1 << 16;

/// A monomial in the character or cylinder algebra of one system.
#[derive(Clone, Debug)]
enum Mono {
    /// Frequency vector of a torus character.
    Torus(Vec<i128>),
    /// Coordinate index mapped to a real function on the alphabet.
    Cyl(BTreeMap<i64, Vec<f64>>),
    Pair(Box<Mono>, Box<Mono>),
}

type Terms = Vec<(Complex64, Mono)>;

impl Mono {
    fn one(system: &SystemSpec) -> Mono {
        match system {
            SystemSpec::Rotation { .. } | SystemSpec::Skew { .. } => {
                Mono::Torus(vec![0; system.torus_dim().unwrap_or(1)])
            }
            SystemSpec::Bernoulli { .. } => Mono::Cyl(BTreeMap::new()),
            SystemSpec::Product(a, b) => Mono::Pair(Box::new(Mono::one(a)), Box::new(Mono::one(b))),
        }
    }

    fn mul(&self, other: &Mono) -> Result<Mono> {
        Ok(match (self, other) {
            (Mono::Torus(a), Mono::Torus(b)) => Mono::Torus(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        x.checked_add(*y)
                            .ok_or_else(|| Error::Overflow("character frequency".into()))
                    })
                    .collect::<Result<_>>()?,
            ),
            (Mono::Cyl(a), Mono::Cyl(b)) => {
                let mut out = a.clone();
                for (i, g) in b {
                    out.entry(*i)
                        .and_modify(|f| f.iter_mut().zip(g).for_each(|(x, y)| *x *= y))
                        .or_insert_with(|| g.clone());
                }
                Mono::Cyl(out)
            }
            (Mono::Pair(a, b), Mono::Pair(c, d)) => Mono::Pair(Box::new(a.mul(c)?), Box::new(b.mul(d)?)),
            _ => return Err(Error::KindMismatch("monomials of different systems".into())),
        })
    }

    fn conj(&mut self) {
        match self {
            Mono::Torus(a) => a.iter_mut().for_each(|x| *x = -*x),
            Mono::Cyl(_) => {}
            Mono::Pair(a, b) => {
                a.conj();
                b.conj();
            }
        }
    }

    fn integral(&self, system: &SystemSpec) -> Result<f64> {
        Ok(match (self, system) {
            (Mono::Torus(a), _) => {
                if a.iter().all(|&x| x == 0) {
                    1.0
                } else {
                    0.0
                }
            }
            (Mono::Cyl(fs), SystemSpec::Bernoulli { probs }) => fs
                .values()
                .map(|g| g.iter().zip(probs).map(|(x, p)| x * p).sum::<f64>())
                .product(),
            (Mono::Pair(a, b), SystemSpec::Product(s, t)) => a.integral(s)? * b.integral(t)?,
            _ => return Err(Error::KindMismatch("monomial does not match system".into())),
        })
    }
}

fn no_closed_form(what: &str) -> Error {
    Error::NoClosedForm(what.to_string())
}

fn expand(e: &ObservableExpr, system: &SystemSpec, shift: i64) -> Result<Terms> {
    match e {
        E::Constant(c) => Ok(vec![(*c, Mono::one(system))]),
        E::TorusCharacter { freq } => {
            let d = expect_torus(system)?;
            if freq.len() != d {
                return Err(Error::KindMismatch("character length".into()));
            }
            let alpha = system.angle_turn().unwrap_or_default();
            // a . (A x + b) with A lower-triangular in the P polynomials.
            let p: Vec<i128> = (0..=d).map(|j| p_poly_signed(j, shift)).collect::<Result<_>>()?;
            let mut coeff = vec![0i128; d];
            let mut phase = Turn::ZERO;
            for (i, &a) in freq.iter().enumerate() {
                let a = a as i128;
                for (l, c) in coeff.iter_mut().enumerate().take(i + 1) {
                    let t = a
                        .checked_mul(p[i - l])
                        .and_then(|t| c.checked_add(t))
                        .ok_or_else(|| Error::Overflow("shifted frequency".into()))?;
                    *c = t;
                }
                phase += alpha.mul_int(p[i + 1]).mul_int(a);
            }
            Ok(vec![(phase.cis(), Mono::Torus(coeff))])
        }
        E::PinskerFn {
            cylinder,
            cutoff,
            level,
        } => {
            let probs = expect_bernoulli(system)?;
            if cutoff <= level {
                return Ok(vec![]);
            }
            let q = lower_marginal(probs, cylinder, *cutoff)?;
            let ind = |s: u8| -> Vec<f64> {
                (0..probs.len())
                    .map(|t| if t == s as usize { 1.0 } else { 0.0 })
                    .collect()
            };
            let full: BTreeMap<i64, Vec<f64>> = cylinder.iter().map(|(&i, &s)| (i + shift, ind(s))).collect();
            let upper: BTreeMap<i64, Vec<f64>> =
                cylinder.range(*cutoff..).map(|(&i, &s)| (i + shift, ind(s))).collect();
            Ok(vec![
                (Complex64::new(1.0, 0.0), Mono::Cyl(full)),
                (Complex64::new(-q, 0.0), Mono::Cyl(upper)),
            ])
        }
        E::CenteredCoordinate { index, mean } => match system {
            SystemSpec::Bernoulli { probs } => {
                let g: Vec<f64> = (0..probs.len()).map(|s| s as f64 - mean).collect();
                Ok(vec![(
                    Complex64::new(1.0, 0.0),
                    Mono::Cyl(BTreeMap::from([(index + shift, g)])),
                )])
            }
            _ => Err(no_closed_form(
                "torus coordinate functions are not trigonometric monomials",
            )),
        },
        E::Conj(inner) => {
            let mut t = expand(inner, system, shift)?;
            for (c, m) in t.iter_mut() {
                *c = c.conj();
                m.conj();
            }
            Ok(t)
        }
        E::Scale(s, inner) => {
            let mut t = expand(inner, system, shift)?;
            t.iter_mut().for_each(|(c, _)| *c *= s);
            Ok(t)
        }
        E::Shift(m, inner) => expand(inner, system, shift + m),
        E::Prod(es) => {
            let mut acc: Terms = vec![(Complex64::new(1.0, 0.0), Mono::one(system))];
            for child in es {
                let t = expand(child, system, shift)?;
                if acc.len().saturating_mul(t.len()) > TERM_BUDGET {
                    return Err(no_closed_form("product expansion exceeds the term budget"));
                }
                let mut next = Vec::with_capacity(acc.len() * t.len());
                for (c1, m1) in &acc {
                    for (c2, m2) in &t {
                        next.push((c1 * c2, m1.mul(m2)?));
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
        E::Sum(es) => {
            let mut out = Terms::new();
            for child in es {
                out.extend(expand(child, system, shift)?);
                if out.len() > TERM_BUDGET {
                    return Err(no_closed_form("sum expansion exceeds the term budget"));
                }
            }
            Ok(out)
        }
        E::Tensor(l, r) => {
            let (a, b) = expect_product(system)?;
            let tl = expand(l, a, shift)?;
            let tr = expand(r, b, shift)?;
            if tl.len().saturating_mul(tr.len()) > TERM_BUDGET {
                return Err(no_closed_form("tensor expansion exceeds the term budget"));
            }
            let mut out = Vec::with_capacity(tl.len() * tr.len());
            for (c1, m1) in &tl {
                for (c2, m2) in &tr {
                    out.push((c1 * c2, Mono::Pair(Box::new(m1.clone()), Box::new(m2.clone()))));
                }
            }
            Ok(out)
        }
    }
}

impl fmt::Display for ObservableExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            E::Constant(c) if c.im == 0.0 => write!(f, "{}", c.re),
            E::Constant(c) => write!(f, "({}{:+}i)", c.re, c.im),
            E::TorusCharacter { freq } => write!(f, "char{freq:?}"),
            E::PinskerFn {
                cylinder,
                cutoff,
                level,
            } => {
                write!(f, "pinsker{{")?;
                for (n, (i, s)) in cylinder.iter().enumerate() {
                    if n > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "x{i}={s}")?;
                }
                write!(f, "; k={cutoff}, l={level}}}")
            }
            E::CenteredCoordinate { index, mean } => write!(f, "(x{index}-{mean})"),
            E::Conj(e) => write!(f, "conj({e})"),
            E::Prod(es) => {
                write!(f, "(")?;
                for (n, e) in es.iter().enumerate() {
                    if n > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
            E::Sum(es) => {
                write!(f, "(")?;
                for (n, e) in es.iter().enumerate() {
                    if n > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
            E::Scale(c, e) if c.im == 0.0 => write!(f, "{}*{e}", c.re),
            E::Scale(c, e) => write!(f, "({}{:+}i)*{e}", c.re, c.im),
            E::Shift(m, e) => write!(f, "{e}@T^{m}"),
            E::Tensor(l, r) => write!(f, "({l} (x) {r})"),
        }
    }
}
