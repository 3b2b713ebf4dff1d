//! Certified maxima of trigonometric polynomials and Van der Corput bounds.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite complex sequence `u_1, ..., u_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSeq {
    values: Vec<Complex64>,
}

impl WeightedSeq {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::pre("sequence must have at least one entry"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::pre("sequence entries must be finite"));
        }
        Ok(WeightedSeq { values })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
}

/// Bracket `[lower, upper]` around `sup_t |(1/N) sum_n u_n e(nt)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub lower: f64,
    pub upper: f64,
    pub argmax_t: f64,
    pub grid_size: usize,
}

impl SupEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub const DEFAULT_OVERSAMPLE: usize = 8;

const REFINE: usize = 8;
const MAX_CANDIDATES: usize = 32;
const PARABOLA_ROUNDS: usize = 3;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static SCRATCH: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

pub fn sup_modulus(u: &WeightedSeq, oversample: usize) -> Result<SupEstimate> {
    if oversample < 2 {
        return Err(Error::pre(format!("oversample must be >= 2, got {oversample}")));
    }
    Ok(sup_of(u.values(), oversample))
}

/// `|(1/N) sum_{n=1}^N u_n e(nt)|^2` by direct summation.
pub fn modulus_sq_at(u: &[Complex64], t: f64) -> f64 {
    let n_inv = 1.0 / u.len() as f64;
    let w = cis(t);
    let mut z = w;
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &v) in u.iter().enumerate() {
        if i % 64 == 63 {
            z = cis(((i + 1) as f64 * t).fract());
        }
        acc += v * z;
        z *= w;
    }
    (acc * n_inv).norm_sqr()
}

/// `modulus_sq_at` for several points in one pass over `u`.
pub fn modulus_sq_many(u: &[Complex64], ts: &[f64]) -> Vec<f64> {
    const LANES: usize = 8;
    let n_inv = 1.0 / u.len() as f64;
    let zero = Complex64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(ts.len());
    for chunk in ts.chunks(LANES) {
        let k = chunk.len();
        let mut w = [zero; LANES];
        for (wj, &t) in w.iter_mut().zip(chunk) {
            *wj = cis(t);
        }
        let mut z = w;
        let mut acc = [zero; LANES];
        for (i, &v) in u.iter().enumerate() {
            if i % 64 == 63 {
                for (zj, &t) in z.iter_mut().zip(chunk) {
                    *zj = cis(((i + 1) as f64 * t).fract());
                }
            }
            for j in 0..LANES {
                acc[j] += v * z[j];
                z[j] *= w[j];
            }
        }
        out.extend(acc[..k].iter().map(|a| (a * n_inv).norm_sqr()));
    }
    out
}

fn cis(t: f64) -> Complex64 {
    let (s, c) = (TAU * t).sin_cos();
    Complex64::new(c, s)
}

/// Grid maximum on `oversample * N` points, refined by parabolic steps;
/// the upper value is the smallest of the triangle bound, the first-order
/// derivative bound and a second-order bound from a local fine grid.
pub fn sup_of(u: &[Complex64], oversample: usize) -> SupEstimate {
    let n = u.len();
    assert!(n >= 1 && oversample >= 2);
    let m = n * oversample;
    let inv_n = 1.0 / n as f64;

    let g2: Vec<f64> = SCRATCH.with(|cell| {
        let (buf, scratch) = &mut *cell.borrow_mut();
        buf.clear();
        buf.resize(m, Complex64::new(0.0, 0.0));
        for (i, &v) in u.iter().enumerate() {
            buf[(i + 1) % m] = v;
        }
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(m));
        let need = fft.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        fft.process_with_scratch(buf, &mut scratch[..need]);
        buf.iter().map(|z| (z * inv_n).norm_sqr()).collect()
    });

    let (kmax, gmax) = g2.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) },
    );

    let abs_sum: f64 = u.iter().map(|v| v.norm()).sum();
    let triangle = abs_sum * inv_n;
    let weighted: f64 = u.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v.norm()).sum();
    let lip = TAU * inv_n * weighted;
    let spacing = 1.0 / m as f64;
    let margin = 8.0 * f64::EPSILON * ((m as f64).log2() + n as f64) * triangle;

    let grid_lower = gmax.max(0.0).sqrt();
    let mut upper = grid_lower + lip * 0.5 * spacing + margin;

    let c = PI * PI * ((n - 1) as f64).powi(2) / (2.0 * (m as f64).powi(2));
    let t_grid = kmax as f64 * spacing;
    let mut best_t = t_grid;
    let mut best = gmax;
    let mut radius = spacing;
    if c < 1.0 && gmax > 0.0 {
        let threshold = (1.0 - c) * gmax * (1.0 - 1e-9);
        let candidates: Vec<usize> = (0..m).filter(|&k| g2[k] >= threshold).collect();
        let bound_sq = if candidates.len() > MAX_CANDIDATES {
            gmax / (1.0 - c)
        } else {
            let cf = c / (REFINE * REFINE) as f64;
            let ts: Vec<f64> = candidates
                .iter()
                .flat_map(|&k| {
                    let t0 = k as f64 * spacing;
                    (0..=REFINE)
                        .filter(|&i| 2 * i != REFINE)
                        .map(move |i| t0 + (i as f64 / REFINE as f64 - 0.5) * spacing)
                })
                .collect();
            for (t, v) in ts.iter().zip(modulus_sq_many(u, &ts)) {
                if v > best {
                    best = v;
                    best_t = *t;
                }
            }
            radius = spacing / REFINE as f64;
            best / (1.0 - cf)
        };
        upper = upper.min(bound_sq.sqrt() + margin);
    }
    upper = upper.min(triangle);

    // parabolic steps around the best point; every probe is a true evaluation
    let mut delta = 0.5 * radius;
    for _ in 0..PARABOLA_ROUNDS {
        let t0 = best_t;
        let g0 = best;
        let side = modulus_sq_many(u, &[t0 - delta, t0 + delta]);
        let (gm, gp) = (side[0], side[1]);
        for (t, v) in [(t0 - delta, gm), (t0 + delta, gp)] {
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let curv = gm - 2.0 * g0 + gp;
        if curv < 0.0 {
            let t = t0 + (0.5 * delta * (gm - gp) / curv).clamp(-delta, delta);
            let v = modulus_sq_at(u, t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        delta /= 8.0;
    }

    let lower = best.max(0.0).sqrt();
    SupEstimate {
        lower,
        upper: upper.max(lower),
        argmax_t: best_t.rem_euclid(1.0),
        grid_size: m,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VdcMode {
    Averaged,
    Summed,
    SupAveraged,
}

/// Both sides of a Van der Corput inequality, `lhs <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VdcSides {
    pub lhs: f64,
    pub rhs: f64,
}

/// `sum_{n=0}^{N-h-1} conj(v_{n+h}) v_n`.
fn autocorr(v: &[Complex64], h: usize) -> Complex64 {
    v[h..].iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn vdc_bound(v: &WeightedSeq, h: usize, mode: VdcMode, oversample: usize) -> Result<VdcSides> {
    let vals = v.values();
    let n = vals.len();
    let nf = n as f64;
    let energy: f64 = vals.iter().map(|x| x.norm_sqr()).sum();
    if mode != VdcMode::Summed && h > n - 1 {
        return Err(Error::pre(format!("H = {h} must lie in [0, {}]", n - 1)));
    }
    let hf = h as f64;
    Ok(match mode {
        VdcMode::Averaged => {
            let s: Complex64 = vals.iter().sum();
            let lhs = (s / nf).norm_sqr();
            let corr: f64 = (1..=h).map(|k| (hf + 1.0 - k as f64) * autocorr(vals, k).re).sum();
            let rhs = (nf + hf) / (nf * nf * (hf + 1.0)) * energy
                + 2.0 * (nf + hf) / (nf * nf * (hf + 1.0) * (hf + 1.0)) * corr;
            VdcSides { lhs, rhs }
        }
        VdcMode::SupAveraged => {
            let up = sup_modulus(v, oversample)?.upper;
            let corr: f64 = (1..=h).map(|k| (autocorr(vals, k) / nf).norm()).sum();
            VdcSides {
                lhs: up * up,
                rhs: 2.0 / (nf * (hf + 1.0)) * energy + 4.0 / (hf + 1.0) * corr,
            }
        }
        VdcMode::Summed => {
            let up = sup_modulus(v, oversample)?.upper * nf;
            let corr: f64 = (1..n).map(|k| autocorr(vals, k).norm()).sum();
            VdcSides {
                lhs: up * up,
                rhs: 2.0 * energy + 4.0 * corr,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(v: Vec<Complex64>) -> WeightedSeq {
        WeightedSeq::new(v).unwrap()
    }

    fn random_seq(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    // Brute-force oracle: max of |S| over a dense grid, each point summed directly.
    fn dense_max(u: &[Complex64], points: usize) -> f64 {
        (0..points)
            .map(|k| {
                let t = k as f64 / points as f64;
                let s: Complex64 = u
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * Complex64::from_polar(1.0, TAU * ((i + 1) as f64 * t).fract()))
                    .sum();
                s.norm() / u.len() as f64
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_sequence_peaks_at_zero() {
        let e = sup_modulus(&seq(vec![Complex64::new(1.0, 0.0); 37]), 8).unwrap();
        assert!((e.lower - 1.0).abs() < 1e-12);
        assert_eq!(e.upper, 1.0);
        assert!(e.argmax_t < 1e-9 || e.argmax_t > 1.0 - 1e-9);
    }

    #[test]
    fn modulated_sequence_peaks_at_frequency() {
        let u: Vec<Complex64> = (1..=50)
            .map(|n| Complex64::from_polar(1.0, -TAU * 0.3 * n as f64))
            .collect();
        let e = sup_modulus(&seq(u), 10).unwrap();
        assert!((e.lower - 1.0).abs() < 1e-12);
        assert!((e.upper - 1.0).abs() < 1e-12);
        assert!((e.argmax_t - 0.3).abs() < 1e-6);
    }

    #[test]
    fn bracket_contains_reference_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = random_seq(&mut rng, 64);
            let e = sup_modulus(&seq(u.clone()), 8).unwrap();
            let reference = dense_max(&u, 4096);
            assert!(reference <= e.upper, "{reference} > {}", e.upper);
            assert!(e.lower <= e.upper);
            assert!(e.width() < 1e-2 * e.upper);
        }
    }

    #[test]
    fn bracket_within_derivative_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_seq(&mut rng, 100);
        let e = sup_modulus(&seq(u.clone()), 8).unwrap();
        let lip: f64 = TAU / 100.0
            * u.iter()
                .enumerate()
                .map(|(i, v)| (i + 1) as f64 * v.norm())
                .sum::<f64>();
        assert!(e.width() <= lip / (2.0 * 800.0) + 1e-12);
    }

    #[test]
    fn scaling_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_seq(&mut rng, 48);
        let e = sup_modulus(&seq(u.clone()), 8).unwrap();
        let s = sup_modulus(&seq(u.iter().map(|v| v * 4.0).collect()), 8).unwrap();
        assert_eq!(s.lower, 4.0 * e.lower);
        assert_eq!(s.upper, 4.0 * e.upper);
    }

    #[test]
    fn oversample_below_two_rejected() {
        assert!(sup_modulus(&seq(vec![Complex64::new(1.0, 0.0)]), 1).is_err());
        assert!(WeightedSeq::new(vec![]).is_err());
        assert!(WeightedSeq::new(vec![Complex64::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn vdc_examples() {
        let ones = |n| seq(vec![Complex64::new(1.0, 0.0); n]);
        let s = vdc_bound(&ones(5), 0, VdcMode::Averaged, 8).unwrap();
        assert!((s.lhs - 1.0).abs() < 1e-15 && (s.rhs - 1.0).abs() < 1e-15);
        let s = vdc_bound(&ones(2), 1, VdcMode::Averaged, 8).unwrap();
        assert_eq!((s.lhs, s.rhs), (1.0, 1.125));
        assert!(vdc_bound(&ones(2), 2, VdcMode::Averaged, 8).is_err());
        assert!(vdc_bound(&ones(2), 2, VdcMode::SupAveraged, 8).is_err());
        assert!(vdc_bound(&ones(2), 99, VdcMode::Summed, 8).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn modulation_invariance(seed in 0u64..1000, beta in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_seq(&mut rng, 40);
            let w: Vec<Complex64> = u.iter().enumerate()
                .map(|(i, v)| v * Complex64::from_polar(1.0, TAU * beta * (i + 1) as f64))
                .collect();
            let a = sup_modulus(&seq(u), 8).unwrap();
            let b = sup_modulus(&seq(w), 8).unwrap();
            prop_assert!(a.lower <= b.upper + 1e-12 && b.lower <= a.upper + 1e-12);
        }

        #[test]
        fn vdc_holds(seed in 0u64..10_000, n in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = seq(random_seq(&mut rng, n));
            let h = rng.gen_range(0..n);
            for mode in [VdcMode::Averaged, VdcMode::SupAveraged, VdcMode::Summed] {
                let s = vdc_bound(&v, h, mode, 8).unwrap();
                prop_assert!(s.lhs <= s.rhs * (1.0 + 1e-9), "{mode:?}: {s:?}");
            }
        }
    }
}
