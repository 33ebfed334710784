//! Rate-distortion solvers: standard, Wyner-Ziv (decoder side information),
//! and conditional (two-sided side information), plus an independent
//! brute-force grid oracle for cross-checking.
//!
//! Every solver meets a distortion target by bisecting a Lagrange multiplier
//! around a Blahut-Arimoto style inner loop. Rates are bits per symbol.

use crate::prob::{Alphabet, ProbError};
use crate::{Cond, Joint, Pmf, Real};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum RdError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("distortion target {target} is below the minimum achievable {min}")]
    InfeasibleTarget { target: f64, min: f64 },
    #[error("distortion matrix invalid: {0}")]
    BadDistortion(String),
    #[error("joint source must have exactly two axes, got {0}")]
    NotBivariate(usize),
    #[error("grid search would evaluate ~{combos} kernels, above the 1e8 cap")]
    SearchTooLarge { combos: f64 },
    #[error("d_grid must be sorted ascending")]
    UnsortedGrid,
}

pub type Result<T> = std::result::Result<T, RdError>;

/// Single-letter distortion table `d(s, s_hat) >= 0`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DistortionMatrix {
    n_src: usize,
    n_rec: usize,
    d: Vec<Real>,
}

impl DistortionMatrix {
    pub fn new(n_src: usize, n_rec: usize, entries: Vec<Real>) -> Result<Self> {
        if entries.len() != n_src * n_rec {
            return Err(RdError::BadDistortion(format!(
                "expected {} entries, got {}",
                n_src * n_rec,
                entries.len()
            )));
        }
        for &e in &entries {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(RdError::BadDistortion(format!("entry {e} not a finite nonnegative real")));
            }
        }
        Ok(DistortionMatrix {
            n_src,
            n_rec,
            d: entries,
        })
    }

    /// Hamming distortion on a shared alphabet.
    pub fn hamming(n: usize) -> Self {
        let mut d = vec![1.0; n * n];
        for i in 0..n {
            d[i * n + i] = 0.0;
        }
        DistortionMatrix { n_src: n, n_rec: n, d }
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn n_rec(&self) -> usize {
        self.n_rec
    }

    pub fn get(&self, s: usize, r: usize) -> Real {
        self.d[s * self.n_rec + r]
    }

    pub fn max_entry(&self) -> Real {
        self.d.iter().copied().fold(0.0, Real::max)
    }
}

/// Solver controls. `tolerance` bounds both the rate error and the permitted
/// distortion overshoot of the returned kernel.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RdQuery {
    pub target_distortion: Real,
    pub tolerance: Real,
    pub max_iters: usize,
    pub restarts: usize,
    /// Seeds the random restart initializations of the non-convex WZ solver.
    pub seed: u64,
}

impl RdQuery {
    pub fn at(target_distortion: Real) -> Self {
        RdQuery {
            target_distortion,
            tolerance: 1e-6,
            max_iters: 5000,
            restarts: 16,
            seed: 0,
        }
    }

    pub fn with_tolerance(mut self, tol: Real) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Solver output. `achieving_kernel` is `P(out | conditioning)` with the
/// module-specific conditioning documented on each solver; `decoder` is the
/// WZ reconstruction map `h(t, s')`, flattened row-major over `(t, s')`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RdResult {
    pub rate: Real,
    pub achieving_kernel: Cond,
    pub decoder: Option<Vec<usize>>,
    pub converged: bool,
    pub iterations: usize,
    /// Expected distortion of the reported operating point. Usually this is
    /// the achieving kernel's distortion; on a linear segment of the curve
    /// the rate/distortion pair is a time-sharing mix and the kernel is the
    /// lower-distortion endpoint of the mix.
    pub distortion: Real,
}

/// Problem descriptor shared by the curve sweep and the brute-force oracle.
#[derive(Clone, Debug)]
pub enum RdProblem {
    Standard {
        source: Pmf,
        d: DistortionMatrix,
    },
    /// Joint over `(S, S')`; side information `S'` at the decoder only.
    Wz {
        joint: Joint,
        d: DistortionMatrix,
        aux_card: usize,
    },
    /// Joint over `(S, S')`; side information at both ends.
    Conditional {
        joint: Joint,
        d: DistortionMatrix,
    },
}

// Inner-loop convergence: relative objective change below this for
// `STREAK` consecutive iterations.
const REL_TOL: Real = 1e-9;
const STREAK: usize = 5;

fn entropy_bits(p: &[Real]) -> Real {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.log2();
        }
    }
    h.max(0.0)
}

/// One Blahut-Arimoto solve at fixed multiplier `lambda` (bits per unit
/// distortion) for a plain source `p` over rows of `d`. Returns
/// (kernel rows, rate, distortion, iterations, converged).
fn ba_fixed_multiplier(
    p: &[Real],
    d: &DistortionMatrix,
    lambda: Real,
    max_iters: usize,
) -> (Vec<Real>, Real, Real, usize, bool) {
    let n = p.len();
    let m = d.n_rec;
    let mut q = vec![1.0 / m as Real; m];
    let mut k = vec![0.0; n * m];
    let mut prev_obj = Real::INFINITY;
    let mut streak = 0;
    let mut iters = 0;
    let mut converged = false;
    while iters < max_iters {
        iters += 1;
        // k(r|s) ∝ q(r) 2^{-λ d(s,r)}, stabilized per row.
        for s in 0..n {
            let mut best = Real::NEG_INFINITY;
            for r in 0..m {
                let e = if q[r] > 0.0 {
                    q[r].log2() - lambda * d.get(s, r)
                } else {
                    Real::NEG_INFINITY
                };
                k[s * m + r] = e;
                if e > best {
                    best = e;
                }
            }
            let mut z = 0.0;
            for r in 0..m {
                let w = if k[s * m + r].is_finite() {
                    (k[s * m + r] - best).exp2()
                } else {
                    0.0
                };
                k[s * m + r] = w;
                z += w;
            }
            if z <= 0.0 {
                // All reproduction mass vanished; restart the row on the
                // distortion-minimizing symbol.
                let mut arg = 0;
                for r in 1..m {
                    if d.get(s, r) < d.get(s, arg) {
                        arg = r;
                    }
                }
                for r in 0..m {
                    k[s * m + r] = if r == arg { 1.0 } else { 0.0 };
                }
            } else {
                for r in 0..m {
                    k[s * m + r] /= z;
                }
            }
        }
        for r in 0..m {
            q[r] = (0..n).map(|s| p[s] * k[s * m + r]).sum();
        }
        // Lagrangian I + λ E[d].
        let mut rate = 0.0;
        let mut dist = 0.0;
        for s in 0..n {
            for r in 0..m {
                let w = p[s] * k[s * m + r];
                if w > 0.0 {
                    rate += w * (k[s * m + r] / q[r]).log2();
                    dist += w * d.get(s, r);
                }
            }
        }
        let obj = rate + lambda * dist;
        let denom = 1.0 + obj.abs();
        if (prev_obj - obj).abs() / denom < REL_TOL {
            streak += 1;
            if streak >= STREAK {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
        prev_obj = obj;
    }
    let mut rate = 0.0;
    let mut dist = 0.0;
    for s in 0..n {
        for r in 0..m {
            let w = p[s] * k[s * m + r];
            if w > 0.0 {
                rate += w * (k[s * m + r] / q[r]).log2();
                dist += w * d.get(s, r);
            }
        }
    }
    (k, rate.max(0.0), dist, iters, converged)
}

/// Generic distortion-target bisection over a fixed-multiplier solver.
/// `eval(lambda)` must return (rate, distortion, payload, converged) with
/// distortion non-increasing in lambda.
fn bisect_multiplier<T: Clone>(
    target: Real,
    tolerance: Real,
    lambda_hint: Real,
    mut eval: impl FnMut(Real) -> (Real, Real, T, bool),
) -> (Real, Real, T, bool, usize) {
    let slack = 1e-12 + tolerance.min(1e-9);
    let (r0, d0, pay0, conv0) = eval(0.0);
    if d0 <= target + slack {
        return (r0, d0, pay0, conv0, 1);
    }
    let mut evals = 1;
    let mut lo = 0.0; // infeasible side (distortion above target)
    let mut r_lo = r0;
    let mut d_lo = d0;
    let mut hi = lambda_hint.max(1e-6);
    let mut best: Option<(Real, Real, T, bool)>;
    // Extend until the target is bracketed.
    loop {
        let (r, dd, pay, conv) = eval(hi);
        evals += 1;
        if dd <= target + slack {
            best = Some((r, dd, pay, conv));
            break;
        }
        lo = hi;
        r_lo = r;
        d_lo = dd;
        hi *= 2.0;
        if hi > 1e9 {
            // Target unreachable at any finite slope (up to float limits);
            // return the closest achieved point, flagged unconverged.
            return (r, dd, pay, false, evals);
        }
    }
    // Shrink the bracket until the rate gap certifies the answer.
    for _ in 0..200 {
        let (r_hi, _, _, _) = {
            let b = best.as_ref().unwrap();
            (b.0, b.1, (), b.3)
        };
        if (r_hi - r_lo).abs() <= 0.5 * tolerance || (hi - lo) <= 1e-14 * (1.0 + hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (r, dd, pay, conv) = eval(mid);
        evals += 1;
        if dd <= target + slack {
            hi = mid;
            best = Some((r, dd, pay, conv));
        } else {
            lo = mid;
            r_lo = r;
            d_lo = dd;
        }
    }
    let (r, dd, pay, conv) = best.unwrap();
    // A residual rate gap after the bracket collapses means the multiplier
    // sits on a linear segment of the curve: both bracket endpoints are
    // optimal at the same slope, and the target is met by time sharing
    // between them. Report the chord value at the target; the returned
    // kernel is the lower-distortion endpoint.
    if (r - r_lo) > 0.5 * tolerance && d_lo > target + slack && dd < target - slack {
        let a = (target - dd) / (d_lo - dd);
        let r_mix = a * r_lo + (1.0 - a) * r;
        if r_mix < r {
            return (r_mix.max(0.0), target, pay, conv, evals);
        }
    }
    (r, dd, pay, conv, evals)
}

/// Support-reduced view of a plain source: symbols with zero probability are
/// dropped before solving and reinserted afterwards with rows pointing at
/// their distortion-minimizing reconstruction.
struct Reduced {
    full_n: usize,
    kept: Vec<usize>,
    p: Vec<Real>,
}

fn reduce_support(p: &[Real]) -> Reduced {
    let kept: Vec<usize> = (0..p.len()).filter(|&s| p[s] > 0.0).collect();
    Reduced {
        full_n: p.len(),
        kept: kept.clone(),
        p: kept.iter().map(|&s| p[s]).collect(),
    }
}

fn reduced_distortion(d: &DistortionMatrix, red: &Reduced) -> DistortionMatrix {
    let entries: Vec<Real> = red
        .kept
        .iter()
        .flat_map(|&s| (0..d.n_rec).map(move |r| d.get(s, r)))
        .collect();
    DistortionMatrix {
        n_src: red.kept.len(),
        n_rec: d.n_rec,
        d: entries,
    }
}

fn expand_kernel(rows: &[Real], d: &DistortionMatrix, red: &Reduced) -> Vec<Real> {
    let m = d.n_rec;
    let mut full = vec![0.0; red.full_n * m];
    // Dropped symbols get an arbitrary (distortion-minimizing) row.
    for s in 0..red.full_n {
        let mut arg = 0;
        for r in 1..m {
            if d.get(s, r) < d.get(s, arg) {
                arg = r;
            }
        }
        full[s * m + arg] = 1.0;
    }
    for (i, &s) in red.kept.iter().enumerate() {
        full[s * m..(s + 1) * m].copy_from_slice(&rows[i * m..(i + 1) * m]);
    }
    full
}

fn check_shapes_standard(source: &Pmf, d: &DistortionMatrix) -> Result<()> {
    if source.len() != d.n_src {
        return Err(RdError::BadDistortion(format!(
            "distortion has {} source rows, pmf has {} symbols",
            d.n_src,
            source.len()
        )));
    }
    Ok(())
}

fn min_distortion(p: &[Real], d: &DistortionMatrix) -> Real {
    (0..p.len())
        .map(|s| {
            let row_min = (0..d.n_rec).map(|r| d.get(s, r)).fold(Real::INFINITY, Real::min);
            p[s] * row_min
        })
        .sum()
}

fn lambda_hint(p: &[Real], d: &DistortionMatrix) -> Real {
    let min_p = p.iter().copied().filter(|&x| x > 0.0).fold(1.0, Real::min);
    2.0 * d.max_entry().max(1e-9) / min_p
}

/// Standard RD function `R(D) = min I(S; Ŝ)` over kernels meeting the
/// distortion target. Kernel conditioning: given `S`, out `Ŝ`.
pub fn standard_rd(source: &Pmf, d: &DistortionMatrix, q: &RdQuery) -> Result<RdResult> {
    check_shapes_standard(source, d)?;
    let red = reduce_support(source.probs());
    let rd = reduced_distortion(d, &red);
    let dmin = min_distortion(&red.p, &rd);
    if q.target_distortion < dmin - 1e-12 {
        return Err(RdError::InfeasibleTarget {
            target: q.target_distortion,
            min: dmin,
        });
    }
    // Zero-rate feasibility: a single reconstruction symbol may already meet
    // the target, in which case the rate is exactly 0.
    let (zero_arg, zero_dist) = (0..d.n_rec)
        .map(|r| (r, (0..red.p.len()).map(|s| red.p[s] * rd.get(s, r)).sum::<Real>()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    if q.target_distortion >= zero_dist - 1e-12 {
        let kernel = Cond::deterministic(
            vec![Alphabet::new(d.n_src)],
            vec![Alphabet::new(d.n_rec)],
            &vec![zero_arg; d.n_src],
        )?;
        return Ok(RdResult {
            rate: 0.0,
            achieving_kernel: kernel,
            decoder: None,
            converged: true,
            iterations: 0,
            distortion: zero_dist,
        });
    }
    let mut total_iters = 0usize;
    let (rate, dist, rows, conv, _evals) = {
        let (rate, dist, rows, conv, evals) = bisect_multiplier(
            q.target_distortion,
            q.tolerance,
            lambda_hint(&red.p, &rd),
            |lambda| {
                let (k, r, dd, it, c) = ba_fixed_multiplier(&red.p, &rd, lambda, q.max_iters);
                total_iters += it;
                (r, dd, k, c)
            },
        );
        (rate, dist, rows, conv, evals)
    };
    let full = expand_kernel(&rows, d, &red);
    let kernel = Cond::from_table(
        vec![Alphabet::new(d.n_src)],
        vec![Alphabet::new(d.n_rec)],
        full,
    )?;
    Ok(RdResult {
        rate,
        achieving_kernel: kernel,
        decoder: None,
        converged: conv,
        iterations: total_iters,
        distortion: dist,
    })
}

// ---------------------------------------------------------------------------
// Wyner-Ziv
// ---------------------------------------------------------------------------

struct WzTables {
    n_s: usize,
    n_sp: usize,
    /// P(s, s') flattened.
    joint: Vec<Real>,
    /// P(s) marginal.
    ps: Vec<Real>,
    /// P(s' | s), rows only for p(s) > 0.
    sp_given_s: Vec<Real>,
    /// P(s') marginal.
    psp: Vec<Real>,
}

fn wz_tables(joint: &Joint) -> Result<WzTables> {
    if joint.n_axes() != 2 {
        return Err(RdError::NotBivariate(joint.n_axes()));
    }
    let dims = joint.dims();
    let (n_s, n_sp) = (dims[0], dims[1]);
    let probs = joint.probs().to_vec();
    let mut ps = vec![0.0; n_s];
    let mut psp = vec![0.0; n_sp];
    for s in 0..n_s {
        for sp in 0..n_sp {
            ps[s] += probs[s * n_sp + sp];
            psp[sp] += probs[s * n_sp + sp];
        }
    }
    let mut sp_given_s = vec![0.0; n_s * n_sp];
    for s in 0..n_s {
        if ps[s] > 0.0 {
            for sp in 0..n_sp {
                sp_given_s[s * n_sp + sp] = probs[s * n_sp + sp] / ps[s];
            }
        }
    }
    Ok(WzTables {
        n_s,
        n_sp,
        joint: probs,
        ps,
        sp_given_s,
        psp,
    })
}

/// Conditional mutual information I(S;T|S') for test-channel rows r(t|s).
fn wz_rate(t: &WzTables, r: &[Real], n_t: usize) -> Real {
    // H(T|S') - H(T|S) with T -- S -- S'.
    let mut h_t_given_sp = 0.0;
    for sp in 0..t.n_sp {
        if t.psp[sp] <= 0.0 {
            continue;
        }
        let mut q = vec![0.0; n_t];
        for s in 0..t.n_s {
            let w = t.joint[s * t.n_sp + sp];
            if w > 0.0 {
                for tt in 0..n_t {
                    q[tt] += w * r[s * n_t + tt];
                }
            }
        }
        for v in q.iter_mut() {
            *v /= t.psp[sp];
        }
        h_t_given_sp += t.psp[sp] * entropy_bits(&q);
    }
    let mut h_t_given_s = 0.0;
    for s in 0..t.n_s {
        if t.ps[s] > 0.0 {
            h_t_given_s += t.ps[s] * entropy_bits(&r[s * n_t..(s + 1) * n_t]);
        }
    }
    (h_t_given_sp - h_t_given_s).max(0.0)
}

/// Greedy optimal decoder h(t, s') for fixed rows, plus its distortion.
fn wz_decoder(t: &WzTables, r: &[Real], n_t: usize, d: &DistortionMatrix) -> (Vec<usize>, Real) {
    let m = d.n_rec;
    let mut h = vec![0usize; n_t * t.n_sp];
    let mut dist = 0.0;
    for tt in 0..n_t {
        for sp in 0..t.n_sp {
            let mut best = Real::INFINITY;
            let mut arg = 0usize;
            for rec in 0..m {
                let mut e = 0.0;
                for s in 0..t.n_s {
                    let w = t.joint[s * t.n_sp + sp] * r[s * n_t + tt];
                    if w > 0.0 {
                        e += w * d.get(s, rec);
                    }
                }
                if e < best - 1e-15 {
                    best = e;
                    arg = rec;
                }
            }
            h[tt * t.n_sp + sp] = arg;
            dist += best;
        }
    }
    (h, dist)
}

/// One alternating-minimization run at fixed multiplier from a given init.
fn wz_alternate(
    t: &WzTables,
    d: &DistortionMatrix,
    n_t: usize,
    lambda: Real,
    init: &[Real],
    max_iters: usize,
) -> (Vec<Real>, Real, Real, usize, bool) {
    let mut r = init.to_vec();
    let mut prev_obj = Real::INFINITY;
    let mut streak = 0;
    let mut iters = 0;
    let mut converged = false;
    let mut q = vec![0.0; n_t * t.n_sp]; // q(t|s')
    while iters < max_iters {
        iters += 1;
        // q(t|s') from the current rows.
        for sp in 0..t.n_sp {
            for tt in 0..n_t {
                q[tt * t.n_sp + sp] = 0.0;
            }
            if t.psp[sp] <= 0.0 {
                continue;
            }
            for s in 0..t.n_s {
                let w = t.joint[s * t.n_sp + sp] / t.psp[sp];
                if w > 0.0 {
                    for tt in 0..n_t {
                        q[tt * t.n_sp + sp] += w * r[s * n_t + tt];
                    }
                }
            }
        }
        // Greedy decoder for the current rows.
        let (h, _) = wz_decoder(t, &r, n_t, d);
        // Blahut-style row update:
        // r(t|s) ∝ 2^{ Σ_{s'} P(s'|s)[ log2 q(t|s') − λ d(s, h(t,s')) ] }.
        for s in 0..t.n_s {
            if t.ps[s] <= 0.0 {
                continue;
            }
            let mut expo = vec![0.0; n_t];
            let mut best = Real::NEG_INFINITY;
            for tt in 0..n_t {
                let mut e = 0.0;
                for sp in 0..t.n_sp {
                    let w = t.sp_given_s[s * t.n_sp + sp];
                    if w > 0.0 {
                        let qq = q[tt * t.n_sp + sp];
                        let lq = if qq > 0.0 { qq.log2() } else { -1e4 };
                        e += w * (lq - lambda * d.get(s, h[tt * t.n_sp + sp]));
                    }
                }
                expo[tt] = e;
                if e > best {
                    best = e;
                }
            }
            let mut z = 0.0;
            for tt in 0..n_t {
                let w = (expo[tt] - best).exp2();
                r[s * n_t + tt] = w;
                z += w;
            }
            for tt in 0..n_t {
                r[s * n_t + tt] /= z;
            }
        }
        let rate = wz_rate(t, &r, n_t);
        let (_, dist) = wz_decoder(t, &r, n_t, d);
        let obj = rate + lambda * dist;
        if (prev_obj - obj).abs() / (1.0 + obj.abs()) < REL_TOL {
            streak += 1;
            if streak >= STREAK {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
        prev_obj = obj;
    }
    let rate = wz_rate(t, &r, n_t);
    let (_, dist) = wz_decoder(t, &r, n_t, d);
    (r, rate, dist, iters, converged)
}

fn random_rows(rng: &mut impl Rng, n_s: usize, n_t: usize) -> Vec<Real> {
    let mut rows = vec![0.0; n_s * n_t];
    for s in 0..n_s {
        let mut z = 0.0;
        for tt in 0..n_t {
            let v: Real = -(rng.gen_range(1e-12..1.0) as Real).ln();
            rows[s * n_t + tt] = v;
            z += v;
        }
        for tt in 0..n_t {
            rows[s * n_t + tt] /= z;
        }
    }
    rows
}

/// Wyner-Ziv RD function of Eq.-(2) form: `min I(S; T | S')` over test
/// channels `P(T|S)` (the Markov chain T -- S -- S' is structural) and
/// deterministic decoders `h(T, S')`. Kernel conditioning: given `S`, out
/// `T`; `decoder` is h flattened row-major over `(t, s')`.
pub fn wz_rd(joint_source: &Joint, d: &DistortionMatrix, aux_card: usize, q: &RdQuery) -> Result<RdResult> {
    let t = wz_tables(joint_source)?;
    if d.n_src != t.n_s {
        return Err(RdError::BadDistortion(format!(
            "distortion has {} source rows, joint axis 0 has {}",
            d.n_src, t.n_s
        )));
    }
    let n_t = aux_card.max(1);
    // Full-information floor: with T = S the decoder sees (S, S').
    let dmin: Real = (0..t.n_s)
        .map(|s| {
            (0..t.n_sp)
                .map(|sp| {
                    let w = t.joint[s * t.n_sp + sp];
                    let row_min = (0..d.n_rec).map(|r| d.get(s, r)).fold(Real::INFINITY, Real::min);
                    w * row_min
                })
                .sum::<Real>()
        })
        .sum();
    if n_t >= t.n_s && q.target_distortion < dmin - 1e-12 {
        return Err(RdError::InfeasibleTarget {
            target: q.target_distortion,
            min: dmin,
        });
    }
    // Zero-rate feasibility: constant T with a per-cell decoder.
    {
        let mut d0 = 0.0;
        let mut h0 = vec![0usize; n_t * t.n_sp];
        for sp in 0..t.n_sp {
            let (arg, cell) = (0..d.n_rec)
                .map(|r| {
                    (
                        r,
                        (0..t.n_s).map(|s| t.joint[s * t.n_sp + sp] * d.get(s, r)).sum::<Real>(),
                    )
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            d0 += cell;
            for tt in 0..n_t {
                h0[tt * t.n_sp + sp] = arg;
            }
        }
        if q.target_distortion >= d0 - 1e-12 {
            let kernel = Cond::deterministic(
                vec![Alphabet::new(t.n_s)],
                vec![Alphabet::new(n_t)],
                &vec![0usize; t.n_s],
            )?;
            return Ok(RdResult {
                rate: 0.0,
                achieving_kernel: kernel,
                decoder: Some(h0),
                converged: true,
                iterations: 0,
                distortion: d0,
            });
        }
    }
    // Deterministic restart initializations, shared across multiplier evals.
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed);
    let mut inits: Vec<Vec<Real>> = vec![{
        // Identity-leaning start: T tracks S where cardinality allows.
        let mut rows = vec![0.0; t.n_s * n_t];
        for s in 0..t.n_s {
            for tt in 0..n_t {
                rows[s * n_t + tt] = if tt == s % n_t { 0.9 } else { 0.1 / (n_t - 1).max(1) as Real };
            }
            let z: Real = rows[s * n_t..(s + 1) * n_t].iter().sum();
            for tt in 0..n_t {
                rows[s * n_t + tt] /= z;
            }
        }
        rows
    }];
    for _ in 1..q.restarts.max(1) {
        inits.push(random_rows(&mut rng, t.n_s, n_t));
    }

    let mut total_iters = std::sync::atomic::AtomicUsize::new(0);
    let eval = |lambda: Real| -> (Real, Real, (Vec<Real>, Vec<usize>), bool) {
        let mut runs: Vec<_> = inits
            .par_iter()
            .map(|init| wz_alternate(&t, d, n_t, lambda, init, q.max_iters))
            .collect();
        // Side-information-blind start: the standard solution at the same
        // multiplier. Its objective already matches the no-side-info optimum
        // (rate H(T|S')−H(T|S) ≤ I(S;T), greedy decoder ≤ identity), so the
        // alternation can only improve on it — keeps the solver from landing
        // above the standard RD function.
        if n_t >= d.n_rec {
            let (k, _, _, _, _) = ba_fixed_multiplier(&t.ps, d, lambda, q.max_iters);
            let mut rows = vec![0.0; t.n_s * n_t];
            for s in 0..t.n_s {
                for rec in 0..d.n_rec {
                    rows[s * n_t + rec] = k[s * d.n_rec + rec];
                }
            }
            runs.push(wz_alternate(&t, d, n_t, lambda, &rows, q.max_iters));
        }
        let mut best: Option<(Vec<Real>, Real, Real, bool)> = None;
        let mut iters = 0;
        for (rows, rate, dist, it, conv) in runs {
            iters += it;
            let obj = rate + lambda * dist;
            let replace = match &best {
                None => true,
                Some((_, br, bd, _)) => obj < br + lambda * bd - 1e-12,
            };
            if replace {
                best = Some((rows, rate, dist, conv));
            }
        }
        total_iters.fetch_add(iters, std::sync::atomic::Ordering::Relaxed);
        let (rows, rate, dist, conv) = best.unwrap();
        let (h, _) = wz_decoder(&t, &rows, n_t, d);
        (rate, dist, (rows, h), conv)
    };
    let hint = lambda_hint(&t.ps, d);
    let (rate, dist, (rows, h), conv, _) = bisect_multiplier(q.target_distortion, q.tolerance, hint, eval);
    let kernel = Cond::from_table(
        vec![Alphabet::new(t.n_s)],
        vec![Alphabet::new(n_t)],
        rows,
    )?;
    Ok(RdResult {
        rate,
        achieving_kernel: kernel,
        decoder: Some(h),
        converged: conv,
        iterations: *total_iters.get_mut(),
        distortion: dist,
    })
}

// ---------------------------------------------------------------------------
// Conditional RD
// ---------------------------------------------------------------------------

/// Conditional RD function: `min I(S; Ŝ | S')` with side information at both
/// ends. Solved per conditioning cell with a shared multiplier. Kernel
/// conditioning: given `(S, S')`, out `Ŝ`; rows for zero-mass `s'` cells are
/// undefined.
pub fn conditional_rd(joint_source: &Joint, d: &DistortionMatrix, q: &RdQuery) -> Result<RdResult> {
    let t = wz_tables(joint_source)?;
    if d.n_src != t.n_s {
        return Err(RdError::BadDistortion(format!(
            "distortion has {} source rows, joint axis 0 has {}",
            d.n_src, t.n_s
        )));
    }
    // Per-cell conditionals P(s | s').
    let mut cells: Vec<(usize, Real, Vec<Real>)> = Vec::new(); // (sp, P(s'), P(s|s'))
    for sp in 0..t.n_sp {
        if t.psp[sp] > 0.0 {
            let mut row = vec![0.0; t.n_s];
            for s in 0..t.n_s {
                row[s] = t.joint[s * t.n_sp + sp] / t.psp[sp];
            }
            cells.push((sp, t.psp[sp], row));
        }
    }
    let dmin: Real = cells
        .iter()
        .map(|(_, w, row)| {
            w * (0..t.n_s)
                .map(|s| {
                    let row_min = (0..d.n_rec).map(|r| d.get(s, r)).fold(Real::INFINITY, Real::min);
                    row[s] * row_min
                })
                .sum::<Real>()
        })
        .sum();
    if q.target_distortion < dmin - 1e-12 {
        return Err(RdError::InfeasibleTarget {
            target: q.target_distortion,
            min: dmin,
        });
    }
    // Zero-rate feasibility: one reconstruction per conditioning cell.
    {
        let mut d0 = 0.0;
        let mut args = vec![0usize; t.n_sp];
        for (sp, w, row) in &cells {
            let (arg, cell) = (0..d.n_rec)
                .map(|r| (r, (0..t.n_s).map(|s| row[s] * d.get(s, r)).sum::<Real>()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            d0 += w * cell;
            args[*sp] = arg;
        }
        if q.target_distortion >= d0 - 1e-12 {
            let mut rows: Vec<Option<Vec<Real>>> = vec![None; t.n_s * t.n_sp];
            for (sp, _, _) in &cells {
                for s in 0..t.n_s {
                    let mut r = vec![0.0; d.n_rec];
                    r[args[*sp]] = 1.0;
                    rows[s * t.n_sp + sp] = Some(r);
                }
            }
            let kernel = Cond::from_rows(
                vec![Alphabet::new(t.n_s), Alphabet::new(t.n_sp)],
                vec![Alphabet::new(d.n_rec)],
                rows,
            )?;
            return Ok(RdResult {
                rate: 0.0,
                achieving_kernel: kernel,
                decoder: None,
                converged: true,
                iterations: 0,
                distortion: d0,
            });
        }
    }
    let mut total_iters = 0usize;
    let eval = |lambda: Real| -> (Real, Real, Vec<Vec<Real>>, bool) {
        let mut rate = 0.0;
        let mut dist = 0.0;
        let mut kernels = Vec::with_capacity(cells.len());
        let mut conv = true;
        for (_, w, row) in &cells {
            let red = reduce_support(row);
            let rd = reduced_distortion(d, &red);
            let (k, r, dd, _it, c) = ba_fixed_multiplier(&red.p, &rd, lambda, q.max_iters);
            rate += w * r;
            dist += w * dd;
            conv &= c;
            kernels.push(expand_kernel(&k, d, &red));
        }
        (rate, dist, kernels, conv)
    };
    let hint = lambda_hint(&t.ps, d);
    let (rate, dist, kernels, conv, evals) =
        bisect_multiplier(q.target_distortion, q.tolerance, hint, eval);
    total_iters += evals;
    // Assemble P(ŝ | s, s'); undefined where P(s') = 0.
    let m = d.n_rec;
    let mut rows: Vec<Option<Vec<Real>>> = vec![None; t.n_s * t.n_sp];
    for (ci, (sp, _, _)) in cells.iter().enumerate() {
        for s in 0..t.n_s {
            rows[s * t.n_sp + sp] = Some(kernels[ci][s * m..(s + 1) * m].to_vec());
        }
    }
    let kernel = Cond::from_rows(
        vec![Alphabet::new(t.n_s), Alphabet::new(t.n_sp)],
        vec![Alphabet::new(m)],
        rows,
    )?;
    Ok(RdResult {
        rate,
        achieving_kernel: kernel,
        decoder: None,
        converged: conv,
        iterations: total_iters,
        distortion: dist,
    })
}

/// Dispatch over [`RdProblem`].
pub fn rd_solve(problem: &RdProblem, q: &RdQuery) -> Result<RdResult> {
    match problem {
        RdProblem::Standard { source, d } => standard_rd(source, d, q),
        RdProblem::Wz { joint, d, aux_card } => wz_rd(joint, d, *aux_card, q),
        RdProblem::Conditional { joint, d } => conditional_rd(joint, d, q),
    }
}

/// Re-evaluates a solver result against its problem, returning
/// (rate, expected distortion) recomputed from the witness kernel alone.
pub fn evaluate_result(problem: &RdProblem, res: &RdResult) -> Result<(Real, Real)> {
    match problem {
        RdProblem::Standard { source, d } => {
            let n = source.len();
            let m = d.n_rec;
            let mut rate = 0.0;
            let mut dist = 0.0;
            let mut q_out = vec![0.0; m];
            for s in 0..n {
                let row = res.achieving_kernel.row(s).expect("standard kernel rows are total");
                for r in 0..m {
                    q_out[r] += source.get(s) * row[r];
                }
            }
            for s in 0..n {
                let row = res.achieving_kernel.row(s).unwrap();
                for r in 0..m {
                    let w = source.get(s) * row[r];
                    if w > 0.0 {
                        rate += w * (row[r] / q_out[r]).log2();
                        dist += w * d.get(s, r);
                    }
                }
            }
            Ok((rate.max(0.0), dist))
        }
        RdProblem::Wz { joint, d, aux_card } => {
            let t = wz_tables(joint)?;
            let n_t = *aux_card;
            let mut rows = vec![0.0; t.n_s * n_t];
            for s in 0..t.n_s {
                if let Some(row) = res.achieving_kernel.row(s) {
                    rows[s * n_t..(s + 1) * n_t].copy_from_slice(row);
                }
            }
            let rate = wz_rate(&t, &rows, n_t);
            let h = res.decoder.as_ref().expect("WZ result carries a decoder");
            let mut dist = 0.0;
            for s in 0..t.n_s {
                for sp in 0..t.n_sp {
                    for tt in 0..n_t {
                        let w = t.joint[s * t.n_sp + sp] * rows[s * n_t + tt];
                        if w > 0.0 {
                            dist += w * d.get(s, h[tt * t.n_sp + sp]);
                        }
                    }
                }
            }
            Ok((rate, dist))
        }
        RdProblem::Conditional { joint, d } => {
            let t = wz_tables(joint)?;
            let m = d.n_rec;
            let mut rate = 0.0;
            let mut dist = 0.0;
            for sp in 0..t.n_sp {
                if t.psp[sp] <= 0.0 {
                    continue;
                }
                let mut q_out = vec![0.0; m];
                for s in 0..t.n_s {
                    let w = t.joint[s * t.n_sp + sp] / t.psp[sp];
                    if w > 0.0 {
                        let row = res.achieving_kernel.row(s * t.n_sp + sp).expect("defined cell");
                        for r in 0..m {
                            q_out[r] += w * row[r];
                        }
                    }
                }
                for s in 0..t.n_s {
                    let pw = t.joint[s * t.n_sp + sp];
                    if pw > 0.0 {
                        let row = res.achieving_kernel.row(s * t.n_sp + sp).unwrap();
                        for r in 0..m {
                            let w = pw * row[r];
                            if w > 0.0 {
                                rate += w * (row[r] / q_out[r]).log2();
                                dist += w * d.get(s, r);
                            }
                        }
                    }
                }
            }
            Ok((rate.max(0.0), dist))
        }
    }
}

/// Sweeps a sorted distortion grid; rates are clamped to be non-increasing
/// when solver noise produces sub-tolerance bumps.
pub fn rd_curve(problem: &RdProblem, q: &RdQuery, d_grid: &[Real]) -> Result<Vec<(Real, Real)>> {
    if d_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(RdError::UnsortedGrid);
    }
    let mut out = Vec::with_capacity(d_grid.len());
    let mut prev: Option<Real> = None;
    for &dd in d_grid {
        let mut qq = q.clone();
        qq.target_distortion = dd;
        let res = rd_solve(problem, &qq)?;
        let mut rate = res.rate;
        if let Some(p) = prev {
            if rate > p && rate - p < 1e-6 {
                rate = p;
            }
        }
        prev = Some(rate);
        out.push((dd, rate));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

fn n_compositions(total: usize, parts: usize) -> f64 {
    // C(total + parts - 1, parts - 1)
    let mut c = 1.0f64;
    for i in 1..parts {
        c = c * (total + i) as f64 / i as f64;
    }
    c
}

/// Exhaustive grid search over kernel simplices. `grid_steps` splits each
/// simplex coordinate into that many increments; WZ decoders are optimized
/// greedily per grid point (exact for fixed rows). Returns the grid-best
/// kernel meeting the target; its rate upper-bounds the true RD value by at
/// most the grid resolution error.
pub fn rd_brute_oracle(problem: &RdProblem, target: Real, grid_steps: usize) -> Result<RdResult> {
    match problem {
        RdProblem::Standard { source, d } => {
            let p = source.probs();
            let rows = p.len();
            let combos = n_compositions(grid_steps, d.n_rec).powi(rows as i32);
            if combos > 1e8 {
                return Err(RdError::SearchTooLarge { combos });
            }
            let mut best: Option<(Real, Vec<Real>, Real)> = None;
            let mut count = 0usize;
            let m = d.n_rec;
            let mut kernel = vec![0.0; rows * m];
            enumerate_product_simplices(grid_steps, rows, m, &mut kernel, &mut |k| {
                count += 1;
                let mut dist = 0.0;
                let mut q_out = vec![0.0; m];
                for s in 0..rows {
                    for r in 0..m {
                        let w = p[s] * k[s * m + r];
                        q_out[r] += w;
                        dist += w * d.get(s, r);
                    }
                }
                if dist > target + 1e-12 {
                    return;
                }
                let mut rate = 0.0;
                for s in 0..rows {
                    for r in 0..m {
                        let w = p[s] * k[s * m + r];
                        if w > 0.0 {
                            rate += w * (k[s * m + r] / q_out[r]).log2();
                        }
                    }
                }
                let rate = rate.max(0.0);
                if best.as_ref().map_or(true, |(br, _, _)| rate < *br) {
                    best = Some((rate, k.to_vec(), dist));
                }
            });
            let (rate, k, dist) = best.ok_or(RdError::InfeasibleTarget {
                target,
                min: min_distortion(p, d),
            })?;
            Ok(RdResult {
                rate,
                achieving_kernel: Cond::from_table(
                    vec![Alphabet::new(rows)],
                    vec![Alphabet::new(d.n_rec)],
                    k,
                )?,
                decoder: None,
                converged: true,
                iterations: count,
                distortion: dist,
            })
        }
        RdProblem::Wz { joint, d, aux_card } => {
            let t = wz_tables(joint)?;
            let n_t = *aux_card;
            let combos = n_compositions(grid_steps, n_t).powi(t.n_s as i32);
            if combos > 1e8 {
                return Err(RdError::SearchTooLarge { combos });
            }
            let mut best: Option<(Real, Vec<Real>, Vec<usize>, Real)> = None;
            let mut count = 0usize;
            let mut rows_buf = vec![0.0; t.n_s * n_t];
            enumerate_product_simplices(grid_steps, t.n_s, n_t, &mut rows_buf, &mut |rows| {
                count += 1;
                let (h, dist) = wz_decoder(&t, rows, n_t, d);
                if dist > target + 1e-12 {
                    return;
                }
                let rate = wz_rate(&t, rows, n_t);
                if best.as_ref().map_or(true, |(br, _, _, _)| rate < *br) {
                    best = Some((rate, rows.to_vec(), h, dist));
                }
            });
            let (rate, rows, h, dist) = best.ok_or(RdError::InfeasibleTarget {
                target,
                min: 0.0,
            })?;
            Ok(RdResult {
                rate,
                achieving_kernel: Cond::from_table(
                    vec![Alphabet::new(t.n_s)],
                    vec![Alphabet::new(n_t)],
                    rows,
                )?,
                decoder: Some(h),
                converged: true,
                iterations: count,
                distortion: dist,
            })
        }
        RdProblem::Conditional { joint, d } => {
            let t = wz_tables(joint)?;
            let m = d.n_rec;
            let live: Vec<usize> = (0..t.n_sp).filter(|&sp| t.psp[sp] > 0.0).collect();
            // Cells decouple given a distortion split, but an exact oracle can
            // simply grid the full (s, s')-indexed kernel jointly.
            let n_rows = t.n_s * live.len();
            let combos = n_compositions(grid_steps, m).powi(n_rows as i32);
            if combos > 1e8 {
                return Err(RdError::SearchTooLarge { combos });
            }
            let mut best: Option<(Real, Vec<Real>, Real)> = None;
            let mut count = 0usize;
            let mut rows_buf = vec![0.0; n_rows * m];
            enumerate_product_simplices(grid_steps, n_rows, m, &mut rows_buf, &mut |rows| {
                count += 1;
                let mut dist = 0.0;
                let mut rate = 0.0;
                for (li, &sp) in live.iter().enumerate() {
                    let mut q_out = vec![0.0; m];
                    for s in 0..t.n_s {
                        let w = t.joint[s * t.n_sp + sp] / t.psp[sp];
                        let row = &rows[(s * live.len() + li) * m..(s * live.len() + li + 1) * m];
                        for r in 0..m {
                            q_out[r] += w * row[r];
                        }
                    }
                    for s in 0..t.n_s {
                        let pw = t.joint[s * t.n_sp + sp];
                        let row = &rows[(s * live.len() + li) * m..(s * live.len() + li + 1) * m];
                        for r in 0..m {
                            let w = pw * row[r];
                            if w > 0.0 {
                                dist += w * d.get(s, r);
                                rate += w * (row[r] / q_out[r]).log2();
                            }
                        }
                    }
                }
                if dist > target + 1e-12 {
                    return;
                }
                let rate = rate.max(0.0);
                if best.as_ref().map_or(true, |(br, _, _)| rate < *br) {
                    best = Some((rate, rows.to_vec(), dist));
                }
            });
            let (rate, rows, dist) = best.ok_or(RdError::InfeasibleTarget { target, min: 0.0 })?;
            let mut cells: Vec<Option<Vec<Real>>> = vec![None; t.n_s * t.n_sp];
            for (li, &sp) in live.iter().enumerate() {
                for s in 0..t.n_s {
                    cells[s * t.n_sp + sp] =
                        Some(rows[(s * live.len() + li) * m..(s * live.len() + li + 1) * m].to_vec());
                }
            }
            Ok(RdResult {
                rate,
                achieving_kernel: Cond::from_rows(
                    vec![Alphabet::new(t.n_s), Alphabet::new(t.n_sp)],
                    vec![Alphabet::new(m)],
                    cells,
                )?,
                decoder: None,
                converged: true,
                iterations: count,
                distortion: dist,
            })
        }
    }
}

/// Enumerates the product of `n_rows` probability simplices over `width`
/// outcomes, each on a `grid` lattice, invoking `f` on every full assignment.
fn enumerate_product_simplices(
    grid: usize,
    n_rows: usize,
    width: usize,
    buf: &mut Vec<Real>,
    f: &mut impl FnMut(&[Real]),
) {
    fn rec(
        row: usize,
        grid: usize,
        n_rows: usize,
        width: usize,
        buf: &mut Vec<Real>,
        f: &mut impl FnMut(&[Real]),
    ) {
        if row == n_rows {
            f(buf);
            return;
        }
        let mut assign = |c: &[usize], buf: &mut Vec<Real>| {
            for (r, &v) in c.iter().enumerate() {
                buf[row * width + r] = v as Real / grid as Real;
            }
        };
        fn comp(
            total: usize,
            parts: usize,
            stack: &mut Vec<usize>,
            row: usize,
            grid: usize,
            n_rows: usize,
            width: usize,
            buf: &mut Vec<Real>,
            assign: &mut impl FnMut(&[usize], &mut Vec<Real>),
            f: &mut impl FnMut(&[Real]),
        ) {
            if parts == 1 {
                stack.push(total);
                assign(stack, buf);
                rec(row + 1, grid, n_rows, width, buf, f);
                stack.pop();
                return;
            }
            for v in 0..=total {
                stack.push(v);
                comp(total - v, parts - 1, stack, row, grid, n_rows, width, buf, assign, f);
                stack.pop();
            }
        }
        let mut stack = Vec::with_capacity(width);
        comp(grid, width, &mut stack, row, grid, n_rows, width, buf, &mut assign, f);
    }
    rec(0, grid, n_rows, width, buf, f);
}

/// Rate error bound for a `grid`-lattice kernel approximation: perturbing
/// each kernel row by at most eps = (width-1)/grid in L1 moves I(S;T|S') by at
/// most 2[H_b-style continuity] in each entropy term.
pub fn grid_resolution_bound(width: usize, grid: usize) -> Real {
    let eps = ((width - 1) as Real / grid as Real).min(1.0);
    if eps <= 0.0 {
        return 0.0;
    }
    // Entropy continuity: |H(p) - H(q)| <= eps log2(width/eps) + H_b(eps),
    // applied to the two entropy terms of the rate.
    let hb = crate::prob::binary_entropy(eps.min(0.5));
    2.0 * (eps * (width as Real / eps).log2() + hb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::binary_entropy;

    fn ber(p: Real) -> Pmf {
        Pmf::bernoulli(p).unwrap()
    }

    fn example2_source() -> Joint {
        Joint::new(
            vec![Alphabet::new(2), Alphabet::new(2)],
            vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap()
    }

    #[test]
    fn standard_uniform_binary_hamming() {
        let d = DistortionMatrix::hamming(2);
        let res = standard_rd(&ber(0.5), &d, &RdQuery::at(0.11).with_tolerance(1e-4)).unwrap();
        let expect = 1.0 - binary_entropy(0.11);
        assert!((res.rate - expect).abs() < 1e-3, "rate {} vs {}", res.rate, expect);
        assert!(res.distortion <= 0.11 + 1e-4);
    }

    #[test]
    fn standard_max_distortion_is_zero_rate() {
        let d = DistortionMatrix::hamming(2);
        let res = standard_rd(&ber(0.3), &d, &RdQuery::at(0.3)).unwrap();
        assert_eq!(res.rate, 0.0);
    }

    #[test]
    fn standard_zero_distortion_is_entropy() {
        let d = DistortionMatrix::hamming(2);
        let res = standard_rd(&ber(0.89), &d, &RdQuery::at(0.0).with_tolerance(1e-4)).unwrap();
        assert!((res.rate - binary_entropy(0.89)).abs() < 1e-3, "rate {}", res.rate);
    }

    #[test]
    fn standard_infeasible_target_rejected() {
        let d = DistortionMatrix::hamming(2);
        assert!(matches!(
            standard_rd(&ber(0.5), &d, &RdQuery::at(-0.1)),
            Err(RdError::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn wz_zero_distortion_is_conditional_entropy() {
        let d = DistortionMatrix::hamming(2);
        let res = wz_rd(&example2_source(), &d, 3, &RdQuery::at(0.0).with_tolerance(1e-4)).unwrap();
        assert!((res.rate - 2.0 / 3.0).abs() < 2e-3, "rate {}", res.rate);
    }

    #[test]
    fn wz_independent_side_info_is_useless() {
        let d = DistortionMatrix::hamming(2);
        let s = ber(0.3);
        let side = ber(0.5);
        let joint = Joint::from_product(&[&s, &side]).unwrap();
        let q = RdQuery::at(0.08).with_tolerance(1e-4);
        let wz = wz_rd(&joint, &d, 3, &q).unwrap();
        let std = standard_rd(&s, &d, &q).unwrap();
        assert!((wz.rate - std.rate).abs() < 2e-3, "wz {} std {}", wz.rate, std.rate);
    }

    #[test]
    fn wz_max_distortion_zero_rate() {
        let d = DistortionMatrix::hamming(2);
        let res = wz_rd(&example2_source(), &d, 3, &RdQuery::at(0.5)).unwrap();
        assert!(res.rate < 1e-9);
    }

    #[test]
    fn conditional_zero_distortion_is_conditional_entropy() {
        let d = DistortionMatrix::hamming(2);
        let res = conditional_rd(&example2_source(), &d, &RdQuery::at(0.0).with_tolerance(1e-4)).unwrap();
        assert!((res.rate - 2.0 / 3.0).abs() < 2e-3, "rate {}", res.rate);
    }

    #[test]
    fn conditional_uniform_independent_matches_closed_form() {
        let d = DistortionMatrix::hamming(2);
        let joint = Joint::from_product(&[&ber(0.5), &ber(0.5)]).unwrap();
        for dd in [0.05, 0.11, 0.2, 0.35] {
            let res = conditional_rd(&joint, &d, &RdQuery::at(dd).with_tolerance(1e-4)).unwrap();
            let expect = 1.0 - binary_entropy(dd);
            assert!((res.rate - expect).abs() < 2e-3, "D={dd}: {} vs {}", res.rate, expect);
        }
    }

    #[test]
    fn sandwich_conditional_wz_standard() {
        let d = DistortionMatrix::hamming(2);
        let joint = Joint::new(
            vec![Alphabet::new(2), Alphabet::new(2)],
            vec![0.4, 0.1, 0.15, 0.35],
        )
        .unwrap();
        let s = joint.marginal_pmf(0).unwrap();
        let q = RdQuery::at(0.07).with_tolerance(1e-4);
        let c = conditional_rd(&joint, &d, &q).unwrap();
        let w = wz_rd(&joint, &d, 3, &q).unwrap();
        let st = standard_rd(&s, &d, &q).unwrap();
        assert!(c.rate <= w.rate + 1e-4, "cond {} wz {}", c.rate, w.rate);
        assert!(w.rate <= st.rate + 1e-4, "wz {} std {}", w.rate, st.rate);
    }

    #[test]
    fn curve_monotone_and_matches_closed_form() {
        let d = DistortionMatrix::hamming(2);
        let prob = RdProblem::Standard {
            source: ber(0.5),
            d: d.clone(),
        };
        let q = RdQuery::at(0.0).with_tolerance(1e-4);
        let pts = rd_curve(&prob, &q, &[0.0, 0.1, 0.5]).unwrap();
        assert!((pts[0].1 - 1.0).abs() < 1e-3);
        assert!((pts[1].1 - (1.0 - binary_entropy(0.1))).abs() < 1e-3);
        assert!(pts[2].1 < 1e-9);
        assert!(pts[0].1 >= pts[1].1 && pts[1].1 >= pts[2].1);
    }

    #[test]
    fn oracle_standard_binary_matches_closed_form() {
        let d = DistortionMatrix::hamming(2);
        let prob = RdProblem::Standard {
            source: ber(0.5),
            d,
        };
        let res = rd_brute_oracle(&prob, 0.11, 200).unwrap();
        let expect = 1.0 - binary_entropy(0.11);
        assert!((res.rate - expect).abs() < 5e-3, "oracle {} vs {}", res.rate, expect);
    }

    #[test]
    fn oracle_wz_zero_distortion() {
        let d = DistortionMatrix::hamming(2);
        let prob = RdProblem::Wz {
            joint: example2_source(),
            d,
            aux_card: 2,
        };
        let res = rd_brute_oracle(&prob, 0.0, 200).unwrap();
        assert!((res.rate - 2.0 / 3.0).abs() < 5e-3, "oracle {}", res.rate);
    }

    #[test]
    fn oracle_conditional_max_distortion() {
        let d = DistortionMatrix::hamming(2);
        let prob = RdProblem::Conditional {
            joint: example2_source(),
            d,
        };
        let res = rd_brute_oracle(&prob, 1.0, 8).unwrap();
        assert!(res.rate < 1e-12);
    }

    #[test]
    fn witness_reevaluates_to_reported_rate() {
        let d = DistortionMatrix::hamming(2);
        let prob = RdProblem::Standard {
            source: ber(0.4),
            d: d.clone(),
        };
        let q = RdQuery::at(0.09).with_tolerance(1e-5);
        let res = standard_rd(&ber(0.4), &d, &q).unwrap();
        let (rate, dist) = evaluate_result(&prob, &res).unwrap();
        assert!((rate - res.rate).abs() < 1e-9);
        assert!(dist <= q.target_distortion + q.tolerance);
    }
}
