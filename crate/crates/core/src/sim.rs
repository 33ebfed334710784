//! Monte Carlo block transmission: adaptive per-time encoders reading only
//! the source block and strictly past channel outputs, block decoders, and
//! seeded trial statistics.

use crate::rd::DistortionMatrix;
use crate::twc::TwcChannel;
use crate::{Joint, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("mismatch: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Read-only view of a terminal's received symbols up to (excluding) the
/// current time. Reading at or beyond the current time is a contract
/// violation and panics, which the test suite treats as a failure of the
/// offending encoder.
pub struct OutputView<'a> {
    buf: &'a [usize],
    allowed: usize,
}

impl<'a> OutputView<'a> {
    pub fn len(&self) -> usize {
        self.allowed
    }

    pub fn is_empty(&self) -> bool {
        self.allowed == 0
    }

    pub fn get(&self, t: usize) -> usize {
        assert!(
            t < self.allowed,
            "encoder read channel output {t} at time {}: causality violation",
            self.allowed
        );
        self.buf[t]
    }
}

/// Encoder for one terminal: `(time, own source block, own past outputs) → x`.
pub type Encoder = Box<dyn Fn(usize, &[usize], &OutputView) -> usize + Send + Sync>;
/// Block decoder for one terminal: `(own source block, own outputs) →`
/// reconstruction of the other terminal's block.
pub type Decoder = Box<dyn Fn(&[usize], &[usize]) -> Vec<usize> + Send + Sync>;

/// A rate-`k/n` transmission scheme: `k` source symbols in `n` channel uses.
pub struct Scheme {
    pub k: usize,
    pub n: usize,
    pub enc1: Encoder,
    pub enc2: Encoder,
    pub dec1: Decoder,
    pub dec2: Decoder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: usize,
    pub mean_d1: Real,
    pub mean_d2: Real,
    pub stderr_d1: Real,
    pub stderr_d2: Real,
    pub block_error_rate: Real,
    pub seed: u64,
}

/// Runs `trials` independent blocks. Each trial uses its own ChaCha stream
/// (`set_stream(trial)` off the master seed), so the result is deterministic
/// for a given seed regardless of thread count.
pub fn run_trials(
    scheme: &Scheme,
    src: &Joint,
    ch: &TwcChannel,
    d1: &DistortionMatrix,
    d2: &DistortionMatrix,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<TrialStats> {
    if src.n_axes() != 2 {
        return Err(SimError::Mismatch("source must be a bivariate joint".into()));
    }
    let dims = src.dims();
    if d1.n_src() != dims[0] || d2.n_src() != dims[1] {
        return Err(SimError::Mismatch("distortion matrices must match the source alphabets".into()));
    }
    if k != scheme.k {
        return Err(SimError::Mismatch(format!(
            "scheme carries {} source symbols, run asked for {k}",
            scheme.k
        )));
    }
    if trials == 0 {
        return Err(SimError::Mismatch("need at least one trial".into()));
    }
    // Cumulative source law for inverse-cdf sampling.
    let cum: Vec<Real> = src
        .probs()
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let per_trial: Vec<(Real, Real, bool)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64 + 1);
            run_one(scheme, &cum, dims[1], ch, d1, d2, &mut rng)
        })
        .collect::<Result<_>>()?;
    let (mut s1, mut s2, mut q1, mut q2, mut errs) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for &(a, b, e) in &per_trial {
        s1 += a;
        s2 += b;
        q1 += a * a;
        q2 += b * b;
        errs += e as usize;
    }
    let m = trials as Real;
    let (mean_d1, mean_d2) = (s1 / m, s2 / m);
    let var = |q: Real, mean: Real| {
        if trials > 1 {
            ((q - m * mean * mean) / (m - 1.0)).max(0.0)
        } else {
            0.0
        }
    };
    Ok(TrialStats {
        trials,
        mean_d1,
        mean_d2,
        stderr_d1: (var(q1, mean_d1) / m).sqrt(),
        stderr_d2: (var(q2, mean_d2) / m).sqrt(),
        block_error_rate: errs as Real / m,
        seed,
    })
}

fn run_one(
    scheme: &Scheme,
    cum: &[Real],
    n_s2: usize,
    ch: &TwcChannel,
    d1: &DistortionMatrix,
    d2: &DistortionMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<(Real, Real, bool)> {
    let k = scheme.k;
    let mut s1 = vec![0usize; k];
    let mut s2 = vec![0usize; k];
    for t in 0..k {
        let u: Real = rng.gen();
        let cell = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        s1[t] = cell / n_s2;
        s2[t] = cell % n_s2;
    }
    let mut y1 = Vec::with_capacity(scheme.n);
    let mut y2 = Vec::with_capacity(scheme.n);
    for t in 0..scheme.n {
        let x1 = (scheme.enc1)(t, &s1, &OutputView { buf: &y1, allowed: t });
        let x2 = (scheme.enc2)(t, &s2, &OutputView { buf: &y2, allowed: t });
        if x1 >= ch.nx1() || x2 >= ch.nx2() {
            return Err(SimError::Mismatch(format!(
                "encoder output ({x1}, {x2}) outside the channel input alphabets"
            )));
        }
        let (o1, o2) = ch.sample(x1, x2, rng);
        y1.push(o1);
        y2.push(o2);
    }
    // Terminal 2 reconstructs the block of terminal 1 and vice versa.
    let shat1 = (scheme.dec2)(&s2, &y2);
    let shat2 = (scheme.dec1)(&s1, &y1);
    if shat1.len() != k || shat2.len() != k {
        return Err(SimError::Mismatch("decoder block length".into()));
    }
    let mut a = 0.0;
    let mut b = 0.0;
    let mut err = false;
    for t in 0..k {
        if shat1[t] >= d1.n_rec() || shat2[t] >= d2.n_rec() {
            return Err(SimError::Mismatch("decoder output outside the reconstruction alphabet".into()));
        }
        a += d1.get(s1[t], shat1[t]);
        b += d2.get(s2[t], shat2[t]);
        err |= shat1[t] != s1[t] || shat2[t] != s2[t];
    }
    Ok((a / k as Real, b / k as Real, err))
}

/// Symbol-wise scheme from per-symbol maps: `x_{j,t} = f_j(s_{j,t})` and
/// `ŝ_{j',t} = g_j(s_{j,t}, y_{j,t})` with `g_j` row-major over `(s, y)`.
pub fn scheme_symbolwise(
    f1: Vec<usize>,
    f2: Vec<usize>,
    g1: Vec<usize>,
    g2: Vec<usize>,
    dims: [usize; 2],
    ny: [usize; 2],
    k: usize,
) -> Result<Scheme> {
    if f1.len() != dims[0] || f2.len() != dims[1] {
        return Err(SimError::Mismatch("encoder table length".into()));
    }
    if g1.len() != dims[0] * ny[0] || g2.len() != dims[1] * ny[1] {
        return Err(SimError::Mismatch("decoder table length".into()));
    }
    let enc = |f: Vec<usize>| -> Encoder { Box::new(move |t, s: &[usize], _: &OutputView| f[s[t]]) };
    let dec = |g: Vec<usize>, ny: usize| -> Decoder {
        Box::new(move |s: &[usize], y: &[usize]| {
            s.iter().zip(y).map(|(&s, &y)| g[s * ny + y]).collect()
        })
    };
    Ok(Scheme {
        k,
        n: k,
        enc1: enc(f1),
        enc2: enc(f2),
        dec1: dec(g1, ny[0]),
        dec2: dec(g2, ny[1]),
    })
}

/// Uncoded transmission with per-symbol MAP decoding: `x_{j,t} = s_{j,t}`
/// under the identity embedding, and each terminal estimates the other's
/// symbol by maximum posterior under the induced joint, ties broken to the
/// lowest index.
pub fn scheme_uncoded_map(src: &Joint, ch: &TwcChannel, k: usize) -> Result<Scheme> {
    let dims = src.dims();
    if dims.len() != 2 {
        return Err(SimError::Mismatch("source must be a bivariate joint".into()));
    }
    if dims[0] > ch.nx1() || dims[1] > ch.nx2() {
        return Err(SimError::Mismatch("identity embedding needs |S_j| ≤ |X_j|".into()));
    }
    // g1[s1, y1] = argmax_{s2} P(s1, s2) P(y1 | s1, s2), marginalized over y2;
    // g2 mirrored.
    let mut g1 = vec![0usize; dims[0] * ch.ny1()];
    let mut g2 = vec![0usize; dims[1] * ch.ny2()];
    for s1 in 0..dims[0] {
        for y1 in 0..ch.ny1() {
            let mut best = (0usize, -1.0);
            for s2 in 0..dims[1] {
                let w = src.get(&[s1, s2])
                    * (0..ch.ny2()).map(|y2| ch.prob(s1, s2, y1, y2)).sum::<Real>();
                if w > best.1 {
                    best = (s2, w);
                }
            }
            g1[s1 * ch.ny1() + y1] = best.0;
        }
    }
    for s2 in 0..dims[1] {
        for y2 in 0..ch.ny2() {
            let mut best = (0usize, -1.0);
            for s1 in 0..dims[0] {
                let w = src.get(&[s1, s2])
                    * (0..ch.ny1()).map(|y1| ch.prob(s1, s2, y1, y2)).sum::<Real>();
                if w > best.1 {
                    best = (s1, w);
                }
            }
            g2[s2 * ch.ny2() + y2] = best.0;
        }
    }
    scheme_symbolwise(
        (0..dims[0]).collect(),
        (0..dims[1]).collect(),
        g1,
        g2,
        [dims[0], dims[1]],
        [ch.ny1(), ch.ny2()],
        k,
    )
}

/// The adaptive zero-error scheme for the correlated-noise variant of
/// Dueck's channel: `k` source bits in `k + 1` uses.
///
/// Inputs are bit pairs packed `2·X_{j,1} + X_{j,2}`, outputs bit triples
/// packed `4·Y_{j,1} + 2·Y_{j,2} + Y_{j,3}`. Schedule: at time 1 send
/// `(1, S_j^(1))`, at time `b` in `2..=k` send `(Y_{j,3}^(b−1), S_j^(b))`,
/// and terminate with `(Y_{j,3}^(k), 1)`. Decoding block `b` uses the next
/// time slot: `Y_{j,1}^(b+1)` is the product of both noise bits of time `b`,
/// so with the zero cell `P(N_1 = N_2 = 0) = 0` the own-direction noise is
/// `N_j^(b) = 1` when `Y_{j,3}^(b) = 0`, else `Y_{j,1}^(b+1)`; subtracting it
/// from `Y_{j,2}^(b)` recovers the other terminal's bit exactly.
pub fn scheme_example4_dueck(k: usize) -> Scheme {
    let enc = || -> Encoder {
        Box::new(move |t, s: &[usize], past: &OutputView| {
            let carry = if t == 0 { 1 } else { past.get(t - 1) & 1 };
            let data = if t < s.len() { s[t] } else { 1 };
            2 * carry + data
        })
    };
    let dec = || -> Decoder {
        Box::new(move |_s: &[usize], y: &[usize]| {
            (0..y.len() - 1)
                .map(|b| {
                    let noise = if y[b] & 1 == 0 { 1 } else { (y[b + 1] >> 2) & 1 };
                    noise ^ ((y[b] >> 1) & 1)
                })
                .collect()
        })
    };
    Scheme {
        k,
        n: k + 1,
        enc1: enc(),
        enc2: enc(),
        dec1: dec(),
        dec2: dec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{build_special_config, theorem1_margins, SpecialConfig};
    use crate::prob::Alphabet;
    use crate::Pmf;

    fn hamming2() -> DistortionMatrix {
        DistortionMatrix::hamming(2)
    }

    fn uniform_pair() -> Joint {
        Joint::from_product(&[&Pmf::bernoulli(0.5).unwrap(), &Pmf::bernoulli(0.5).unwrap()]).unwrap()
    }

    /// Mass on every pair except (1, 0).
    fn triangle_source_10() -> Joint {
        Joint::new(
            vec![Alphabet::labeled(2, "S1"), Alphabet::labeled(2, "S2")],
            vec![1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0],
        )
        .unwrap()
    }

    #[test]
    fn noiseless_uncoded_is_exact() {
        let src = uniform_pair();
        let ch = TwcChannel::additive(0.0, 0.0).unwrap();
        let scheme = scheme_uncoded_map(&src, &ch, 64).unwrap();
        let stats = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 64, 500, 11).unwrap();
        assert_eq!(stats.mean_d1, 0.0);
        assert_eq!(stats.mean_d2, 0.0);
        assert_eq!(stats.block_error_rate, 0.0);
    }

    #[test]
    fn multiplying_channel_uncoded_is_lossless() {
        let src = Joint::new(
            vec![Alphabet::labeled(2, "S1"), Alphabet::labeled(2, "S2")],
            vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap();
        let ch = TwcChannel::multiplying();
        let scheme = scheme_uncoded_map(&src, &ch, 32).unwrap();
        let stats = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 32, 2000, 3).unwrap();
        assert_eq!(stats.block_error_rate, 0.0);
    }

    #[test]
    fn mixed_channel_uncoded_map_distortions() {
        let src = triangle_source_10();
        let ch = TwcChannel::mixed(0.05).unwrap();
        let scheme = scheme_uncoded_map(&src, &ch, 16).unwrap();
        let stats = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 16, 20_000, 5).unwrap();
        assert_eq!(stats.mean_d1, 0.0);
        let target = 1.0 / 30.0;
        assert!(
            (stats.mean_d2 - target).abs() < 3.0 * stats.stderr_d2,
            "d2 = {} ± {}",
            stats.mean_d2,
            stats.stderr_d2
        );
    }

    #[test]
    fn dueck_scheme_is_zero_error_under_correlated_noise() {
        let src = uniform_pair();
        let ch = TwcChannel::dueck_correlated();
        for k in [1usize, 32] {
            let scheme = scheme_example4_dueck(k);
            let stats = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), k, 2000, 9).unwrap();
            assert_eq!(stats.block_error_rate, 0.0, "k = {k}");
            assert_eq!(stats.mean_d1, 0.0);
        }
    }

    #[test]
    fn dueck_scheme_breaks_under_independent_noise() {
        let src = uniform_pair();
        let ch = TwcChannel::dueck_independent();
        let scheme = scheme_example4_dueck(16);
        let stats = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 16, 2000, 9).unwrap();
        assert!(stats.block_error_rate > 0.5, "rate {}", stats.block_error_rate);
    }

    #[test]
    fn identical_seeds_reproduce_bit_identical_stats() {
        let src = triangle_source_10();
        let ch = TwcChannel::mixed(0.05).unwrap();
        let scheme = scheme_uncoded_map(&src, &ch, 8).unwrap();
        let a = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 8, 3000, 42).unwrap();
        let b = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 8, 3000, 42).unwrap();
        assert_eq!(a, b);
        let c = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 8, 3000, 43).unwrap();
        assert_ne!(a.mean_d2, c.mean_d2);
    }

    #[test]
    fn quadrupling_trials_halves_stderr() {
        let src = triangle_source_10();
        let ch = TwcChannel::mixed(0.05).unwrap();
        let scheme = scheme_uncoded_map(&src, &ch, 8).unwrap();
        let a = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 8, 4000, 1).unwrap();
        let b = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 8, 16_000, 1).unwrap();
        let ratio = a.stderr_d2 / b.stderr_d2;
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn reading_the_current_output_is_rejected() {
        let src = uniform_pair();
        let ch = TwcChannel::additive(0.0, 0.0).unwrap();
        let evil = Scheme {
            k: 4,
            n: 4,
            enc1: Box::new(|t, _s, past: &OutputView| past.get(t) & 1),
            enc2: Box::new(|t, s: &[usize], _| s[t]),
            dec1: Box::new(|_, y| y.to_vec()),
            dec2: Box::new(|_, y| y.to_vec()),
        };
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            run_trials(&evil, &src, &ch, &hamming2(), &hamming2(), 4, 2, 0)
        }));
        assert!(r.is_err(), "causality violation went unnoticed");
    }

    #[test]
    fn simulated_distortions_match_analytic_chain() {
        // Same symbol-wise maps run through the Monte Carlo runner and the
        // stationary-chain analysis.
        let src = triangle_source_10();
        let ch = TwcChannel::mixed(0.05).unwrap();
        let f = vec![0usize, 1];
        let g1: Vec<usize> = (0..4).map(|i| if i / 2 == 1 { 1 } else { i % 2 }).collect();
        let g2: Vec<usize> = (0..4).map(|i| if i / 2 == 1 { i % 2 } else { 0 }).collect();
        let kind = SpecialConfig::Uncoded {
            f1: f.clone(),
            f2: f.clone(),
            g1: g1.clone(),
            g2: g2.clone(),
            n_shat1: 2,
            n_shat2: 2,
        };
        let cfg = build_special_config(&kind, &ch, &src).unwrap();
        let rep = theorem1_margins(&cfg, &ch, &src, &hamming2(), &hamming2()).unwrap();
        let scheme = scheme_symbolwise(f.clone(), f, g1, g2, [2, 2], [2, 2], 16).unwrap();
        let stats = run_trials(&scheme, &src, &ch, &hamming2(), &hamming2(), 16, 20_000, 77).unwrap();
        assert!(
            (stats.mean_d1 - rep.distortions.0).abs() < 3.0 * stats.stderr_d1.max(1e-4),
            "d1 {} vs {}",
            stats.mean_d1,
            rep.distortions.0
        );
        assert!(
            (stats.mean_d2 - rep.distortions.1).abs() < 3.0 * stats.stderr_d2.max(1e-4),
            "d2 {} vs {}",
            stats.mean_d2,
            rep.distortions.1
        );
    }
}
