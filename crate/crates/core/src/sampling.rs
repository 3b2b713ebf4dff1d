//! Deterministic sampling of the invariant measure.
//!
//! Seeds are split with SplitMix64: a product system derives one seed per
//! component (`tag` 1 for the left factor, 2 for the right), and sample `i`
//! of a component draws from ChaCha8 stream `i` of that component's seed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{Point, SymbolWord, SystemSpec, TorusPoint, Turn};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleScheme {
    #[default]
    Pseudorandom,
    Lattice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub count: usize,
    pub seed: u64,
    pub scheme: SampleScheme,
}

impl SamplePlan {
    pub fn pseudorandom(count: usize, seed: u64) -> Self {
        SamplePlan {
            count,
            seed,
            scheme: SampleScheme::Pseudorandom,
        }
    }

    pub fn lattice(count: usize, seed: u64) -> Self {
        SamplePlan {
            count,
            seed,
            scheme: SampleScheme::Lattice,
        }
    }
}

/// Coordinates every sampled Bernoulli word must cover: `-back ..= forward`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Window {
    pub back: u64,
    pub forward: u64,
}

impl Window {
    pub fn forward(forward: u64) -> Self {
        Window { back: 0, forward }
    }

    /// Window for reading `span` (relative coordinates) at every shift in
    /// `shift_lo ..= shift_hi`.
    pub fn for_shifts(span: Option<(i64, i64)>, shift_lo: i64, shift_hi: i64) -> Self {
        let (a, b) = span.unwrap_or((0, 0));
        let lo = (shift_lo + a).min(0);
        let hi = (shift_hi + b).max(0);
        Window {
            back: lo.unsigned_abs(),
            forward: hi as u64,
        }
    }

    pub fn union(self, o: Window) -> Window {
        Window {
            back: self.back.max(o.back),
            forward: self.forward.max(o.forward),
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a labelled sub-computation.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Samples of the invariant measure of `system`, with Bernoulli words
/// covering `window`.
pub fn sample_points(system: &SystemSpec, plan: &SamplePlan, window: Window) -> Result<Vec<Point>> {
    if plan.count == 0 {
        return Err(Error::pre("sample count must be at least 1"));
    }
    let len = window
        .back
        .checked_add(window.forward)
        .and_then(|l| l.checked_add(1))
        .filter(|&l| l <= 1 << 32)
        .ok_or_else(|| Error::pre("sampling window too large"))?;
    sample_rec(system, plan, plan.seed, window, len as usize)
}

fn sample_rec(system: &SystemSpec, plan: &SamplePlan, seed: u64, window: Window, len: usize) -> Result<Vec<Point>> {
    match system {
        SystemSpec::Rotation { .. } | SystemSpec::Skew { .. } => {
            let d = system.torus_dim().unwrap_or(1);
            Ok(match plan.scheme {
                SampleScheme::Pseudorandom => (0..plan.count)
                    .map(|i| {
                        let mut rng = stream(seed, i);
                        Point::Torus(TorusPoint {
                            coords: (0..d).map(|_| Turn(rng.next_u64())).collect(),
                        })
                    })
                    .collect(),
                SampleScheme::Lattice => lattice(d, plan.count, seed),
            })
        }
        SystemSpec::Bernoulli { probs } => {
            let cdf: Vec<f64> = probs
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            let last = probs.len() - 1;
            (0..plan.count)
                .map(|i| {
                    let mut rng = stream(seed, i);
                    let symbols: Vec<u8> = (0..len)
                        .map(|_| {
                            let u: f64 = rng.gen();
                            cdf.iter().position(|&c| u < c).unwrap_or(last) as u8
                        })
                        .collect();
                    SymbolWord::new(symbols, window.back as usize).map(Point::Word)
                })
                .collect()
        }
        SystemSpec::Product(a, b) => {
            let left = sample_rec(a, plan, derive_seed(seed, 1), window, len)?;
            let right = sample_rec(b, plan, derive_seed(seed, 2), window, len)?;
            Ok(left.into_iter().zip(right).map(|(p, q)| Point::pair(p, q)).collect())
        }
    }
}

/// Randomly shifted rank-1 Korobov lattice.
fn lattice(d: usize, count: usize, seed: u64) -> Vec<Point> {
    let n = count as u128;
    let mut a = ((count as f64) * 0.618_033_988_749_894_9).round().max(1.0) as u128;
    while gcd(a, n) != 1 {
        a += 1;
    }
    let mut gen = vec![1u128; d];
    for k in 1..d {
        gen[k] = gen[k - 1] * a % n;
    }
    let mut rng = stream(seed, 0);
    let delta: Vec<Turn> = (0..d).map(|_| Turn(rng.next_u64())).collect();
    (0..count as u128)
        .map(|i| {
            let coords = (0..d)
                .map(|k| {
                    let r = i * gen[k] % n;
                    Turn(((r << 64) / n) as u64) + delta[k]
                })
                .collect();
            Point::Torus(TorusPoint { coords })
        })
        .collect()
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_count_rejected() {
        let s = SystemSpec::rotation(0.3).unwrap();
        assert!(sample_points(&s, &SamplePlan::pseudorandom(0, 1), Window::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let s = SystemSpec::product(
            SystemSpec::skew(3, 0.3).unwrap(),
            SystemSpec::bernoulli(vec![0.2, 0.3, 0.5]).unwrap(),
        );
        let w = Window { back: 3, forward: 40 };
        for plan in [SamplePlan::pseudorandom(50, 9), SamplePlan::lattice(50, 9)] {
            let a = sample_points(&s, &plan, w).unwrap();
            let b = sample_points(&s, &plan, w).unwrap();
            assert_eq!(a, b);
        }
        let c = sample_points(&s, &SamplePlan::pseudorandom(50, 10), w).unwrap();
        assert_ne!(sample_points(&s, &SamplePlan::pseudorandom(50, 9), w).unwrap(), c);
    }

    #[test]
    fn bernoulli_mean_concentrates() {
        let s = SystemSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let pts = sample_points(&s, &SamplePlan::pseudorandom(10_000, 2024), Window::default()).unwrap();
        let mean = pts
            .iter()
            .map(|p| match p {
                Point::Word(w) => w.get(0).unwrap() as f64,
                _ => unreachable!(),
            })
            .sum::<f64>()
            / 1e4;
        assert!((0.48..=0.52).contains(&mean), "{mean}");
    }

    #[test]
    fn window_is_covered() {
        let s = SystemSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let w = Window { back: 5, forward: 17 };
        for p in sample_points(&s, &SamplePlan::pseudorandom(3, 0), w).unwrap() {
            match p {
                Point::Word(word) => {
                    assert_eq!(word.range(), (-5, 17));
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn lattice_marginals_are_uniform() {
        // each coordinate of a rank-1 lattice with gcd(gen, n) = 1 hits every 1/n cell once
        let s = SystemSpec::skew(3, 0.3).unwrap();
        let n = 97;
        let pts = sample_points(&s, &SamplePlan::lattice(n, 4), Window::default()).unwrap();
        for k in 0..3 {
            let mut cells = vec![0; n];
            for p in &pts {
                if let Point::Torus(t) = p {
                    let v = (t.coords[k] - pts_shift(&pts, k)).to_f64();
                    cells[((v * n as f64).round() as usize) % n] += 1;
                }
            }
            assert!(cells.iter().all(|&c| c == 1), "coordinate {k}: {cells:?}");
        }
    }

    fn pts_shift(pts: &[Point], k: usize) -> Turn {
        match &pts[0] {
            Point::Torus(t) => t.coords[k],
            _ => unreachable!(),
        }
    }

    #[test]
    fn window_for_shifts() {
        let w = Window::for_shifts(Some((-2, 3)), 1, 100);
        assert_eq!(w, Window { back: 1, forward: 103 });
        let w = Window::for_shifts(Some((2, 3)), 1, 100);
        assert_eq!(w, Window { back: 0, forward: 103 });
        let w = Window::for_shifts(Some((0, 0)), -10, 4);
        assert_eq!(w, Window { back: 10, forward: 4 });
    }
}
