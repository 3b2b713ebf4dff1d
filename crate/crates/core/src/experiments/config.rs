//! TOML experiment configuration, defaults and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::ObservableExpr;
use crate::sampling::{SamplePlan, SampleScheme};
use crate::systems::SystemSpec;
use crate::trig::DEFAULT_OVERSAMPLE;

pub const SQRT2_MINUS_1: f64 = 0.414_213_562_373_095_05;
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    WwDecay,
    Bourgain,
    Vdc,
    Seminorm,
    ReturnTimes,
    RtChain,
    Classical,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::WwDecay => "ww-decay",
            ExperimentKind::Bourgain => "bourgain",
            ExperimentKind::Vdc => "vdc",
            ExperimentKind::Seminorm => "seminorm",
            ExperimentKind::ReturnTimes => "return-times",
            ExperimentKind::RtChain => "rt-chain",
            ExperimentKind::Classical => "classical",
        }
    }
}

/// A rotation angle: a number in turns or one of the named irrationals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Turns(f64),
    Named(String),
}

impl Angle {
    pub fn value(&self) -> Result<f64> {
        match self {
            Angle::Turns(x) => Ok(*x),
            Angle::Named(s) => match s.as_str() {
                "sqrt2-1" => Ok(SQRT2_MINUS_1),
                "golden" => Ok(GOLDEN),
                other => other.parse::<f64>().map_err(|_| {
                    Error::config(
                        "angle",
                        format!("unknown angle `{other}`; use a number, `sqrt2-1` or `golden`"),
                    )
                }),
            },
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Angle::Turns(x) => write!(f, "{x}"),
            Angle::Named(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemConfig {
    Rotation {
        angle: Angle,
    },
    Skew {
        dim: usize,
        angle: Angle,
    },
    Bernoulli {
        probs: Vec<f64>,
    },
    Product {
        left: Box<SystemConfig>,
        right: Box<SystemConfig>,
    },
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemSpec> {
        let wrap = |e: Error| Error::config("system", e.to_string());
        match self {
            SystemConfig::Rotation { angle } => SystemSpec::rotation(angle.value()?).map_err(wrap),
            SystemConfig::Skew { dim, angle } => SystemSpec::skew(*dim, angle.value()?).map_err(wrap),
            SystemConfig::Bernoulli { probs } => SystemSpec::bernoulli(probs.clone()).map_err(wrap),
            SystemConfig::Product { left, right } => Ok(SystemSpec::product(left.build()?, right.build()?)),
        }
    }

    /// Angles of all torus factors, for the report.
    pub fn angles(&self) -> Vec<String> {
        match self {
            SystemConfig::Rotation { angle } | SystemConfig::Skew { angle, .. } => vec![angle.to_string()],
            SystemConfig::Bernoulli { .. } => vec![],
            SystemConfig::Product { left, right } => {
                let mut v = left.angles();
                v.extend(right.angles());
                v
            }
        }
    }
}

/// Compact form used by `--system`: `rotation:<angle>`, `skew:<dim>:<angle>`,
/// `bernoulli:<p0>,<p1>,...`, and `A*B` for products.
impl FromStr for SystemConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::config("--system", format!("`{s}`: {m}"));
        if let Some((a, b)) = s.split_once('*') {
            return Ok(SystemConfig::Product {
                left: Box::new(a.trim().parse()?),
                right: Box::new(b.trim().parse()?),
            });
        }
        let parts: Vec<&str> = s.trim().split(':').collect();
        let angle = |t: &str| match t.parse::<f64>() {
            Ok(x) => Angle::Turns(x),
            Err(_) => Angle::Named(t.to_string()),
        };
        match parts.as_slice() {
            ["rotation", a] => Ok(SystemConfig::Rotation { angle: angle(a) }),
            ["skew", d, a] => Ok(SystemConfig::Skew {
                dim: d.parse().map_err(|_| bad("dimension is not an integer"))?,
                angle: angle(a),
            }),
            ["bernoulli", ps] => Ok(SystemConfig::Bernoulli {
                probs: ps
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("probabilities must be numbers"))?,
            }),
            _ => Err(bad(
                "expected rotation:<angle>, skew:<dim>:<angle>, bernoulli:<p,...> or A*B",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObservableConfig {
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    Character {
        freq: Vec<i64>,
    },
    /// `x_index - mean`; the mean defaults to the true mean of the coordinate.
    Centered {
        #[serde(default)]
        index: i64,
        mean: Option<f64>,
    },
    Pinsker {
        cylinder: Vec<(i64, u8)>,
        cutoff: i64,
        #[serde(default)]
        level: i64,
    },
    Tensor {
        left: Box<ObservableConfig>,
        right: Box<ObservableConfig>,
    },
    Scale {
        re: f64,
        #[serde(default)]
        im: f64,
        of: Box<ObservableConfig>,
    },
    Shift {
        by: i64,
        of: Box<ObservableConfig>,
    },
    Conj {
        of: Box<ObservableConfig>,
    },
    Product {
        factors: Vec<ObservableConfig>,
    },
    Sum {
        terms: Vec<ObservableConfig>,
    },
}

impl ObservableConfig {
    /// Used when a config names no observable: the centered coordinate on a
    /// Bernoulli shift, the top character on a skew product, the frequency-1
    /// character on a rotation, and tensors of these on products.
    pub fn default_for(system: &SystemConfig) -> Self {
        match system {
            SystemConfig::Rotation { .. } => ObservableConfig::Character { freq: vec![1] },
            SystemConfig::Skew { dim, .. } => {
                let mut freq = vec![0; *dim];
                if let Some(last) = freq.last_mut() {
                    *last = 1;
                }
                ObservableConfig::Character { freq }
            }
            SystemConfig::Bernoulli { .. } => ObservableConfig::Centered { index: 0, mean: None },
            SystemConfig::Product { left, right } => ObservableConfig::Tensor {
                left: Box::new(Self::default_for(left)),
                right: Box::new(Self::default_for(right)),
            },
        }
    }

    pub fn build(&self, system: &SystemSpec) -> Result<ObservableExpr> {
        use ObservableConfig as O;
        Ok(match self {
            O::Constant { re, im } => ObservableExpr::Constant(Complex64::new(*re, *im)),
            O::Character { freq } => ObservableExpr::character(freq.clone()),
            O::Centered { index, mean } => {
                let m = match (mean, system) {
                    (Some(m), _) => *m,
                    (None, SystemSpec::Bernoulli { probs }) => {
                        probs.iter().enumerate().map(|(s, p)| s as f64 * p).sum()
                    }
                    (None, SystemSpec::Rotation { .. } | SystemSpec::Skew { .. }) => 0.5,
                    (None, SystemSpec::Product(..)) => {
                        return Err(Error::config(
                            "observables",
                            "centered coordinate on a product needs a tensor",
                        ));
                    }
                };
                ObservableExpr::centered(*index, m)
            }
            O::Pinsker {
                cylinder,
                cutoff,
                level,
            } => {
                let map: BTreeMap<i64, u8> = cylinder.iter().copied().collect();
                ObservableExpr::pinsker(map, *cutoff, *level)
                    .map_err(|e| Error::config("observables", e.to_string()))?
            }
            O::Tensor { left, right } => match system {
                SystemSpec::Product(a, b) => ObservableExpr::tensor(left.build(a)?, right.build(b)?),
                _ => return Err(Error::config("observables", "tensor needs a product system")),
            },
            O::Scale { re, im, of } => of.build(system)?.scale(Complex64::new(*re, *im)),
            O::Shift { by, of } => of.build(system)?.shift(*by),
            O::Conj { of } => of.build(system)?.conj(),
            O::Product { factors } => {
                ObservableExpr::prod(factors.iter().map(|f| f.build(system)).collect::<Result<_>>()?)
            }
            O::Sum { terms } => ObservableExpr::sum(terms.iter().map(|f| f.build(system)).collect::<Result<_>>()?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: usize,
    pub stop: usize,
    #[serde(default = "two")]
    pub factor: usize,
}

fn two() -> usize {
    2
}

impl Grid {
    pub fn values(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut n = self.start;
        while n <= self.stop {
            out.push(n);
            n *= self.factor;
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BourgainConfig {
    pub exponents: Option<Vec<i64>>,
    pub trials: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VdcConfig {
    pub trials: Option<usize>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeminormConfig {
    /// WW order of the probe; the seminorm column has order `k + 1`.
    pub k: Option<usize>,
    pub h: Option<usize>,
    pub h_budget: Option<u128>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnTimesConfig {
    pub exponents: Option<Vec<i64>>,
    pub system_y: Option<SystemConfig>,
    pub observables_y: Option<Vec<ObservableConfig>>,
    pub exponents_y: Option<Vec<i64>>,
    pub samples_y: Option<usize>,
    pub trials: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalKind {
    PowerLemma,
    Maximal,
    HolderAvg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    pub kind: ClassicalKind,
    /// Power lemma multipliers.
    pub a: Option<Vec<i64>>,
    pub n_max: Option<usize>,
    /// Exponent of the maximal inequality.
    pub exponent: Option<f64>,
    pub sequences: Option<usize>,
    pub len: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<ObservableConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Grid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SampleScheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oversample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bourgain: Option<BourgainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vdc: Option<VdcConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seminorm: Option<SeminormConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_times: Option<ReturnTimesConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalConfig>,
}

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_SAMPLES: usize = 64;
pub const DEFAULT_OUT: &str = "wwlab-out";

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl ExperimentConfig {
    /// A config with only the experiment set; everything else defaults.
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            system: None,
            observables: Vec::new(),
            order: None,
            ns: None,
            n_grid: None,
            p: None,
            beta: None,
            seed: None,
            samples: None,
            scheme: None,
            oversample: None,
            threads: None,
            out: None,
            bourgain: None,
            vdc: None,
            seminorm: None,
            return_times: None,
            classical: None,
        }
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(src, span.start);
                    format!("line {l}, column {c}")
                }
                None => "config".to_string(),
            };
            Error::config(location, e.message().to_string())
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn n_list(&self) -> Vec<usize> {
        match (&self.ns, &self.n_grid) {
            (Some(v), _) => v.clone(),
            (None, Some(g)) => g.values(),
            (None, None) => Grid {
                start: 256,
                stop: 4096,
                factor: 2,
            }
            .values(),
        }
    }

    pub fn plan(&self) -> SamplePlan {
        SamplePlan {
            count: self.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            scheme: self.scheme.unwrap_or_default(),
        }
    }

    /// Fills every default explicitly and checks the result.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        use ExperimentKind as K;
        let mut c = self.clone();
        if c.ns.is_some() && c.n_grid.is_some() {
            return Err(Error::config("ns", "give either `ns` or `n_grid`, not both"));
        }
        if let Some(g) = c.n_grid {
            if g.start < 1 || g.factor < 2 || g.stop < g.start {
                return Err(Error::config("n_grid", "need 1 <= start <= stop and factor >= 2"));
            }
        }
        if c.experiment != K::Vdc && c.experiment != K::Classical {
            c.ns = Some(c.n_list());
            c.n_grid = None;
        }
        c.seed.get_or_insert(DEFAULT_SEED);
        c.samples.get_or_insert(DEFAULT_SAMPLES);
        c.scheme.get_or_insert_with(SampleScheme::default);
        c.oversample.get_or_insert(DEFAULT_OVERSAMPLE);
        c.out.get_or_insert_with(|| DEFAULT_OUT.to_string());
        if c.samples == Some(0) {
            return Err(Error::config("samples", "must be at least 1"));
        }
        if c.oversample.is_some_and(|o| o < 2) {
            return Err(Error::config("oversample", "must be at least 2"));
        }
        if c.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        if let Some(ns) = &c.ns {
            if ns.is_empty() {
                return Err(Error::config("ns", "empty N list"));
            }
            if ns.contains(&0) {
                return Err(Error::config("ns", "N must be positive"));
            }
        }
        let needs_system = c.experiment != K::Vdc
            && !(c.experiment == K::Classical
                && c.classical.as_ref().is_some_and(|k| k.kind == ClassicalKind::HolderAvg));
        if c.experiment == K::Classical && c.classical.is_none() {
            c.classical = Some(ClassicalConfig {
                kind: ClassicalKind::PowerLemma,
                a: None,
                n_max: None,
                exponent: None,
                sequences: None,
                len: None,
            });
        }
        if needs_system {
            let sys_cfg = c
                .system
                .clone()
                .ok_or_else(|| Error::config("system", "missing system"))?;
            let sys = sys_cfg.build()?;
            if c.observables.is_empty() {
                let j = match (c.experiment, c.bourgain.as_ref().and_then(|b| b.exponents.as_ref())) {
                    (K::Bourgain, Some(a)) => a.len(),
                    (K::Bourgain, None) => 2,
                    _ => 1,
                };
                c.observables = vec![ObservableConfig::default_for(&sys_cfg); j];
            }
            for o in &c.observables {
                o.build(&sys)?;
            }
        }
        match c.experiment {
            K::WwDecay => {
                c.order.get_or_insert(2);
                c.p.get_or_insert(2);
                c.beta.get_or_insert(0.5);
                if c.observables.len() != 1 {
                    return Err(Error::config("observables", "ww-decay takes exactly one observable"));
                }
                if !(1..=12).contains(&c.order.unwrap_or(0)) {
                    return Err(Error::config("order", "must lie in 1..=12"));
                }
                if !matches!(c.p, Some(1 | 2)) {
                    return Err(Error::config("p", "must be 1 or 2"));
                }
                if !c.beta.is_some_and(|b| b > 0.0 && b <= 1.0) {
                    return Err(Error::config("beta", "must lie in (0, 1]"));
                }
            }
            K::Bourgain => {
                let b = c.bourgain.get_or_insert_with(Default::default);
                let j = c.observables.len() as i64;
                b.exponents.get_or_insert_with(|| (1..=j).collect());
                b.trials.get_or_insert(1);
                if b.exponents.as_ref().map(Vec::len) != Some(c.observables.len()) {
                    return Err(Error::config("bourgain.exponents", "one exponent per observable"));
                }
                if j < 2 {
                    return Err(Error::config("observables", "bourgain needs J >= 2"));
                }
            }
            K::Vdc => {
                let v = c.vdc.get_or_insert_with(Default::default);
                v.trials.get_or_insert(1000);
                v.n_min.get_or_insert(8);
                v.n_max.get_or_insert(1024);
                if v.n_min < Some(2) || v.n_max < v.n_min {
                    return Err(Error::config("vdc", "need 2 <= n_min <= n_max"));
                }
            }
            K::Seminorm => {
                let s = c.seminorm.get_or_insert_with(Default::default);
                s.k.get_or_insert(2);
                s.h.get_or_insert(crate::seminorm::DEFAULT_SEMINORM_H);
                s.h_budget.get_or_insert(64);
                if s.k < Some(2) {
                    return Err(Error::config("seminorm.k", "must be at least 2"));
                }
                if c.observables.len() != 1 {
                    return Err(Error::config("observables", "seminorm takes exactly one observable"));
                }
            }
            K::ReturnTimes | K::RtChain => {
                let j = c.observables.len() as i64;
                let r = c.return_times.get_or_insert_with(Default::default);
                r.exponents.get_or_insert_with(|| (1..=j).collect());
                let sys_y_cfg = r
                    .system_y
                    .clone()
                    .ok_or_else(|| Error::config("return_times.system_y", "missing second system"))?;
                let sys_y = sys_y_cfg.build()?;
                let k_default = if c.experiment == K::RtChain { 2 } else { 1 };
                let gs = r
                    .observables_y
                    .get_or_insert_with(|| vec![ObservableConfig::default_for(&sys_y_cfg); k_default]);
                for g in gs.iter() {
                    g.build(&sys_y)?;
                }
                let kk = gs.len() as i64;
                r.exponents_y.get_or_insert_with(|| (1..=kk).collect());
                r.samples_y.get_or_insert(DEFAULT_SAMPLES);
                r.trials.get_or_insert(1);
                if c.experiment == K::RtChain {
                    if gs.len() != 2 {
                        return Err(Error::config(
                            "return_times.observables_y",
                            "rt-chain needs exactly two",
                        ));
                    }
                    if r.exponents != Some((1..=j).collect()) || r.exponents_y != Some(vec![1, 2]) {
                        return Err(Error::config("return_times", "rt-chain uses exponents 1..J and 1, 2"));
                    }
                }
                if r.exponents.as_ref().map(Vec::len) != Some(c.observables.len())
                    || r.exponents_y.as_ref().map(Vec::len) != Some(gs.len())
                {
                    return Err(Error::config("return_times", "one exponent per observable"));
                }
                if r.samples_y == Some(0) {
                    return Err(Error::config("return_times.samples_y", "must be at least 1"));
                }
            }
            K::Classical => {
                let k = c
                    .classical
                    .as_mut()
                    .ok_or_else(|| Error::config("classical", "missing [classical] table"))?;
                match k.kind {
                    ClassicalKind::PowerLemma => {
                        k.a.get_or_insert_with(|| vec![-3, -2, -1, 1, 2, 3]);
                        if k.a.as_ref().is_some_and(|a| a.contains(&0)) {
                            return Err(Error::config("classical.a", "multipliers must be nonzero"));
                        }
                        c.ns.get_or_insert_with(|| vec![256]);
                        c.p.get_or_insert(2);
                    }
                    ClassicalKind::Maximal => {
                        k.n_max.get_or_insert(256);
                        k.exponent.get_or_insert(2.0);
                    }
                    ClassicalKind::HolderAvg => {
                        k.sequences.get_or_insert(100);
                        k.len.get_or_insert(16);
                    }
                }
            }
        }
        Ok(c)
    }
}
