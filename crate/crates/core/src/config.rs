//! The coded-channel Markov chain: an adaptive transmission configuration
//! induces a time-homogeneous chain over
//! `(S1, S2, U1, U2, S̃1, S̃2, Ũ1, Ũ2, W̃1, W̃2, X1, X2, Y1, Y2)`, where tilde
//! coordinates are one-step-delayed copies and `W̃_j` packs the previous
//! `(X_j, Y_j)`. This module builds the chain, finds stationary laws,
//! checks the stationarity necessary conditions, and evaluates the
//! achievability margins and per-terminal distortions of a configuration.
//!
//! Full-Z axis order is normative throughout:
//! `0:S1 1:S2 2:U1 3:U2 4:S̃1 5:S̃2 6:Ũ1 7:Ũ2 8:W̃1 9:W̃2 10:X1 11:X2 12:Y1 13:Y2`.

use crate::prob::{pack, unpack, Alphabet, ProbError};
use crate::rd::DistortionMatrix;
use crate::twc::TwcChannel;
use crate::{Cond, Joint, Pmf, Real};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("alphabet mismatch: {0}")]
    Mismatch(String),
    #[error("stationary iteration failed to converge (residual {residual:.3e})")]
    NonConvergence { residual: Real },
    #[error("configuration is not in the non-adaptive family: {0}")]
    NotNonAdaptive(String),
    #[error("bad ingredient: {0}")]
    BadIngredient(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Strictness margin for reporting the achievability inequalities.
pub const EPS_REPORT: Real = 1e-9;

/// A transmission configuration. Besides the conditional laws and the tilde
/// joint, it carries the deterministic encoder tables `f_j` and decoder
/// tables `g_j`:
///
/// * `f_j`: row-major over `(s_j, u_j, s̃_j, ũ_j, w̃_j)`, values in `X_j`;
/// * `g_j`: row-major over `(ũ_{j'}, s_j, u_j, s̃_j, ũ_j, w̃_j, y_j)`, values
///   in the reconstruction alphabet of the *other* terminal's source;
/// * `w̃_j` packs the previous `(x_j, y_j)` as `x_j * |Y_j| + y_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Configuration {
    pub p_u1_given_s1: Cond,
    pub p_u2_given_s2: Cond,
    /// Joint law of `(S̃1, S̃2, Ũ1, Ũ2, W̃1, W̃2)`.
    pub p_tilde: Joint,
    pub f1: Vec<usize>,
    pub f2: Vec<usize>,
    pub g1: Vec<usize>,
    pub g2: Vec<usize>,
    /// Reconstruction alphabet sizes for sources 1 and 2.
    pub n_shat1: usize,
    pub n_shat2: usize,
}

/// Alphabet sizes derived from a configuration plus its channel and source.
#[derive(Clone, Copy, Debug)]
struct Sizes {
    s1: usize,
    s2: usize,
    u1: usize,
    u2: usize,
    x1: usize,
    x2: usize,
    y1: usize,
    y2: usize,
    w1: usize,
    w2: usize,
}

impl Sizes {
    fn f_dims(&self, j: usize) -> [usize; 5] {
        if j == 1 {
            [self.s1, self.u1, self.s1, self.u1, self.w1]
        } else {
            [self.s2, self.u2, self.s2, self.u2, self.w2]
        }
    }

    fn g_dims(&self, j: usize) -> [usize; 7] {
        if j == 1 {
            [self.u2, self.s1, self.u1, self.s1, self.u1, self.w1, self.y1]
        } else {
            [self.u1, self.s2, self.u2, self.s2, self.u2, self.w2, self.y2]
        }
    }

    fn full_axes(&self) -> Vec<Alphabet> {
        [
            (self.s1, "S1"),
            (self.s2, "S2"),
            (self.u1, "U1"),
            (self.u2, "U2"),
            (self.s1, "S~1"),
            (self.s2, "S~2"),
            (self.u1, "U~1"),
            (self.u2, "U~2"),
            (self.w1, "W~1"),
            (self.w2, "W~2"),
            (self.x1, "X1"),
            (self.x2, "X2"),
            (self.y1, "Y1"),
            (self.y2, "Y2"),
        ]
        .iter()
        .map(|&(n, l)| Alphabet::labeled(n, l))
        .collect()
    }

    fn carried_axes(&self) -> Vec<Alphabet> {
        [
            (self.s1, "S1"),
            (self.s2, "S2"),
            (self.u1, "U1"),
            (self.u2, "U2"),
            (self.x1, "X1"),
            (self.x2, "X2"),
            (self.y1, "Y1"),
            (self.y2, "Y2"),
        ]
        .iter()
        .map(|&(n, l)| Alphabet::labeled(n, l))
        .collect()
    }
}

fn sizes(cfg: &Configuration, ch: &TwcChannel) -> Sizes {
    Sizes {
        s1: cfg.p_u1_given_s1.given_cells(),
        s2: cfg.p_u2_given_s2.given_cells(),
        u1: cfg.p_u1_given_s1.out_cells(),
        u2: cfg.p_u2_given_s2.out_cells(),
        x1: ch.nx1(),
        x2: ch.nx2(),
        y1: ch.ny1(),
        y2: ch.ny2(),
        w1: ch.nx1() * ch.ny1(),
        w2: ch.nx2() * ch.ny2(),
    }
}

fn validate(cfg: &Configuration, ch: &TwcChannel, source: &Joint) -> Result<Sizes> {
    let z = sizes(cfg, ch);
    if source.dims() != vec![z.s1, z.s2] {
        return Err(ConfigError::Mismatch(format!(
            "source dims {:?} vs expected [{}, {}]",
            source.dims(),
            z.s1,
            z.s2
        )));
    }
    let tilde_dims = vec![z.s1, z.s2, z.u1, z.u2, z.w1, z.w2];
    if cfg.p_tilde.dims() != tilde_dims {
        return Err(ConfigError::Mismatch(format!(
            "p_tilde dims {:?} vs expected {:?}",
            cfg.p_tilde.dims(),
            tilde_dims
        )));
    }
    for (j, f, out) in [(1usize, &cfg.f1, z.x1), (2, &cfg.f2, z.x2)] {
        let want: usize = z.f_dims(j).iter().product();
        if f.len() != want {
            return Err(ConfigError::Mismatch(format!("f{j} table length {} vs {want}", f.len())));
        }
        if f.iter().any(|&x| x >= out) {
            return Err(ConfigError::Mismatch(format!("f{j} value out of range")));
        }
    }
    for (j, g, out) in [(1usize, &cfg.g1, cfg.n_shat2), (2, &cfg.g2, cfg.n_shat1)] {
        let want: usize = z.g_dims(j).iter().product();
        if g.len() != want {
            return Err(ConfigError::Mismatch(format!("g{j} table length {} vs {want}", g.len())));
        }
        if g.iter().any(|&x| x >= out) {
            return Err(ConfigError::Mismatch(format!("g{j} value out of range")));
        }
    }
    Ok(z)
}

fn cond_prob(c: &Cond, g: usize, o: usize) -> Real {
    c.row(g).map_or(0.0, |r| r[o])
}

fn joint_from_fn_normalized(axes: Vec<Alphabet>, f: impl Fn(&[usize]) -> Real) -> Result<Joint> {
    let dims: Vec<usize> = axes.iter().map(|a| a.size).collect();
    let cells: usize = dims.iter().product();
    let mut probs = Vec::with_capacity(cells);
    let mut idx = vec![0usize; dims.len()];
    for flat in 0..cells {
        unpack(flat, &dims, &mut idx);
        probs.push(f(&idx));
    }
    Ok(Joint::new_normalized(axes, probs)?)
}

/// One chain step from a tilde law: the full-Z joint when the previous
/// carried coordinates are distributed as `tilde` and fresh `(S, U)` are
/// drawn independently.
fn step_full(cfg: &Configuration, ch: &TwcChannel, source: &Joint, tilde: &Joint) -> Result<Joint> {
    let z = validate(cfg, ch, source)?;
    let f1d = z.f_dims(1);
    let f2d = z.f_dims(2);
    // Renormalizing constructor: the cell-wise product accumulates rounding
    // beyond the strict mass tolerance on large state spaces.
    let joint = joint_from_fn_normalized(z.full_axes(), |i| {
        let ps = source.get(&i[0..2]);
        if ps <= 0.0 {
            return 0.0;
        }
        let pu = cond_prob(&cfg.p_u1_given_s1, i[0], i[2]) * cond_prob(&cfg.p_u2_given_s2, i[1], i[3]);
        if pu <= 0.0 {
            return 0.0;
        }
        if cfg.f1[pack(&[i[0], i[2], i[4], i[6], i[8]], &f1d)] != i[10]
            || cfg.f2[pack(&[i[1], i[3], i[5], i[7], i[9]], &f2d)] != i[11]
        {
            return 0.0;
        }
        let pt = tilde.get(&i[4..10]);
        if pt <= 0.0 {
            return 0.0;
        }
        ps * pu * pt * ch.prob(i[10], i[11], i[12], i[13])
    })?;
    Ok(joint)
}

/// The stationary full-Z law specified by the configuration itself:
/// fresh `(S, U)` independent of the tilde block, `X` via `F`, `Y` via the
/// channel.
pub fn config_pz(cfg: &Configuration, ch: &TwcChannel, source: &Joint) -> Result<Joint> {
    step_full(cfg, ch, source, &cfg.p_tilde)
}

/// Repacks a carried-coordinate law `(S1,S2,U1,U2,X1,X2,Y1,Y2)` as the tilde
/// law it becomes one step later.
fn carried_to_tilde(z: &Sizes, carried: &Joint) -> Result<Joint> {
    let dims = [z.s1, z.s2, z.u1, z.u2, z.w1, z.w2];
    let axes: Vec<Alphabet> = [
        (z.s1, "S~1"),
        (z.s2, "S~2"),
        (z.u1, "U~1"),
        (z.u2, "U~2"),
        (z.w1, "W~1"),
        (z.w2, "W~2"),
    ]
    .iter()
    .map(|&(n, l)| Alphabet::labeled(n, l))
    .collect();
    let mut probs = vec![0.0; dims.iter().product()];
    carried.for_each_cell(|i, p| {
        let w1 = i[4] * z.y1 + i[6];
        let w2 = i[5] * z.y2 + i[7];
        probs[pack(&[i[0], i[1], i[2], i[3], w1, w2], &dims)] += p;
    });
    Ok(Joint::new_normalized(axes, probs)?)
}

/// L1 residual `||P_Z Q_Z − P_Z||₁` of a candidate full-Z law. A step of the
/// kernel depends on the current state only through the carried coordinates,
/// so the stepped law is rebuilt from the carried marginal.
pub fn pz_residual(cfg: &Configuration, ch: &TwcChannel, source: &Joint, pz: &Joint) -> Result<Real> {
    let z = validate(cfg, ch, source)?;
    let carried = pz.marginalize(&[0, 1, 2, 3, 10, 11, 12, 13])?;
    let tilde = carried_to_tilde(&z, &carried)?;
    let stepped = step_full(cfg, ch, source, &tilde)?;
    Ok(stepped.l1_distance(pz)?)
}

/// Transition kernel of the lumped chain over the carried coordinates
/// `(S1, S2, U1, U2, X1, X2, Y1, Y2)`; the tilde coordinates are
/// deterministic copies, so this chain carries all the dynamics.
pub struct ChainKernel {
    axes: Vec<Alphabet>,
    dims: Vec<usize>,
    rows: Vec<Vec<(usize, Real)>>,
    /// Canonical start: the carried marginal after one step from `p_tilde`.
    init: Vec<Real>,
}

impl ChainKernel {
    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, state: usize) -> &[(usize, Real)] {
        &self.rows[state]
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn canonical_init(&self) -> &[Real] {
        &self.init
    }
}

pub fn build_kernel(cfg: &Configuration, ch: &TwcChannel, source: &Joint) -> Result<ChainKernel> {
    let z = validate(cfg, ch, source)?;
    let axes = z.carried_axes();
    let dims: Vec<usize> = axes.iter().map(|a| a.size).collect();
    let n: usize = dims.iter().product();
    let f1d = z.f_dims(1);
    let f2d = z.f_dims(2);

    // Fresh-(S,U) draws with their masses, shared by every row.
    let mut fresh: Vec<([usize; 4], Real)> = Vec::new();
    source.for_each_cell(|i, ps| {
        if ps <= 0.0 {
            return;
        }
        for u1 in 0..z.u1 {
            let p1 = cond_prob(&cfg.p_u1_given_s1, i[0], u1);
            if p1 <= 0.0 {
                continue;
            }
            for u2 in 0..z.u2 {
                let p2 = cond_prob(&cfg.p_u2_given_s2, i[1], u2);
                if p2 > 0.0 {
                    fresh.push(([i[0], i[1], u1, u2], ps * p1 * p2));
                }
            }
        }
    });

    let rows: Vec<Vec<(usize, Real)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0usize; dims.len()]),
            |(buf, idx), state| {
                unpack(state, &dims, idx);
                let w1 = idx[4] * z.y1 + idx[6];
                let w2 = idx[5] * z.y2 + idx[7];
                let (ps1, ps2, pu1, pu2) = (idx[0], idx[1], idx[2], idx[3]);
                for &([s1, s2, u1, u2], psu) in &fresh {
                    let x1 = cfg.f1[pack(&[s1, u1, ps1, pu1, w1], &f1d)];
                    let x2 = cfg.f2[pack(&[s2, u2, ps2, pu2, w2], &f2d)];
                    for y1 in 0..z.y1 {
                        for y2 in 0..z.y2 {
                            let p = psu * ch.prob(x1, x2, y1, y2);
                            if p > 0.0 {
                                buf[pack(&[s1, s2, u1, u2, x1, x2, y1, y2], &dims)] += p;
                            }
                        }
                    }
                }
                let mut row = Vec::new();
                for (c, v) in buf.iter_mut().enumerate() {
                    if *v > 0.0 {
                        row.push((c, *v));
                        *v = 0.0;
                    }
                }
                row
            },
        )
        .collect();

    // Canonical init: one step out of the configuration's own tilde law.
    let mut init = vec![0.0; n];
    cfg.p_tilde.for_each_cell(|i, pt| {
        if pt <= 0.0 {
            return;
        }
        for &([s1, s2, u1, u2], psu) in &fresh {
            let x1 = cfg.f1[pack(&[s1, u1, i[0], i[2], i[4]], &f1d)];
            let x2 = cfg.f2[pack(&[s2, u2, i[1], i[3], i[5]], &f2d)];
            for y1 in 0..z.y1 {
                for y2 in 0..z.y2 {
                    let p = pt * psu * ch.prob(x1, x2, y1, y2);
                    if p > 0.0 {
                        init[pack(&[s1, s2, u1, u2, x1, x2, y1, y2], &dims)] += p;
                    }
                }
            }
        }
    });

    Ok(ChainKernel {
        axes,
        dims,
        rows,
        init,
    })
}

const POWER_TOL: Real = 1e-12;
const POWER_CAP: usize = 100_000;
const SOLVE_MAX_STATES: usize = 2048;

/// Stationary law of the lumped chain: power iteration from the canonical
/// initialization (or `init` if supplied), with a direct linear solve as
/// fallback on small state spaces when the iteration stalls (e.g. periodic
/// chains).
pub fn stationary_distribution(kernel: &ChainKernel, init: Option<&Joint>) -> Result<Joint> {
    let n = kernel.n_states();
    let mut v: Vec<Real> = match init {
        Some(j) => {
            if j.dims() != kernel.dims {
                return Err(ConfigError::Mismatch("init dims differ from chain state dims".into()));
            }
            j.probs().to_vec()
        }
        None => kernel.init.clone(),
    };
    let mut next = vec![0.0; n];
    let mut residual = Real::INFINITY;
    for _ in 0..POWER_CAP {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (c, row) in kernel.rows.iter().enumerate() {
            let m = v[c];
            if m > 0.0 {
                for &(to, p) in row {
                    next[to] += m * p;
                }
            }
        }
        residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut v, &mut next);
        if residual < POWER_TOL {
            return Ok(Joint::new_normalized(kernel.axes.clone(), v)?);
        }
    }
    if n <= SOLVE_MAX_STATES {
        if let Some(sol) = solve_fixed_point(kernel) {
            return Ok(Joint::new_normalized(kernel.axes.clone(), sol)?);
        }
    }
    Err(ConfigError::NonConvergence { residual })
}

/// Dense solve of `v Q = v`, `Σ v = 1` by Gaussian elimination with partial
/// pivoting. Returns `None` on a (numerically) singular system.
fn solve_fixed_point(kernel: &ChainKernel) -> Option<Vec<Real>> {
    let n = kernel.n_states();
    // Equations indexed by target state c: Σ_{c'} v[c'] Q[c'][c] − v[c] = 0;
    // the first equation is replaced by the normalization.
    let mut a = vec![0.0; n * (n + 1)];
    let w = n + 1;
    for c in 0..n {
        a[c * w + c] -= 1.0;
    }
    for (cp, row) in kernel.rows.iter().enumerate() {
        for &(c, p) in row {
            a[c * w + cp] += p;
        }
    }
    for cp in 0..n {
        a[cp] = 1.0;
    }
    a[n] = 1.0;
    for col in 0..n {
        let (piv, mx) = (col..n)
            .map(|r| (r, a[r * w + col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if mx < 1e-13 {
            return None;
        }
        if piv != col {
            for k in 0..w {
                a.swap(col * w + k, piv * w + k);
            }
        }
        let d = a[col * w + col];
        for r in (col + 1)..n {
            let factor = a[r * w + col] / d;
            if factor != 0.0 {
                for k in col..w {
                    a[r * w + k] -= factor * a[col * w + k];
                }
            }
        }
    }
    let mut v = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = a[col * w + n];
        for k in (col + 1)..n {
            acc -= a[col * w + k] * v[k];
        }
        v[col] = acc / a[col * w + col];
    }
    for x in v.iter_mut() {
        if *x < 0.0 && *x > -1e-9 {
            *x = 0.0;
        }
    }
    let z: Real = v.iter().sum();
    if z <= 0.0 || v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return None;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
    Some(v)
}

/// Extends a stationary carried-coordinate law to the full Z joint by taking
/// one more step.
pub fn lumped_to_full(
    cfg: &Configuration,
    ch: &TwcChannel,
    source: &Joint,
    carried: &Joint,
) -> Result<Joint> {
    let z = validate(cfg, ch, source)?;
    let tilde = carried_to_tilde(&z, carried)?;
    step_full(cfg, ch, source, &tilde)
}

/// Verifies the stationarity necessary conditions under `pz`:
/// `P_{S1,S2} = P_{S̃1,S̃2}` and `P_{Uj|Sj} = P_{Ũj|S̃j}` (within 1e-9;
/// conditionals compared only where both sides are defined).
pub fn check_stationarity_conditions(pz: &Joint) -> Result<(bool, bool)> {
    let tol = 1e-9;
    let cond1 = pz
        .marginalize(&[0, 1])?
        .l1_distance(&pz.marginalize(&[4, 5])?)?
        <= tol;
    let mut cond2 = true;
    for (s_ax, u_ax, st_ax, ut_ax) in [(0usize, 2usize, 4usize, 6usize), (1, 3, 5, 7)] {
        let cu = pz.marginalize(&[s_ax, u_ax])?.condition(&[0])?;
        let cut = pz.marginalize(&[st_ax, ut_ax])?.condition(&[0])?;
        if cu.linf_where_both_defined(&cut)? > tol {
            cond2 = false;
        }
    }
    Ok((cond1, cond2))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Margins {
    pub lhs1: Real,
    pub rhs1: Real,
    pub lhs2: Real,
    pub rhs2: Real,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StationaryReport {
    pub pz: Joint,
    /// `||P_Z Q_Z − P_Z||₁` for the configuration-specified law.
    pub residual: Real,
    /// Strict satisfaction of the two achievability inequalities
    /// (`lhs + EPS_REPORT < rhs`).
    pub cond1_ok: bool,
    pub cond2_ok: bool,
    pub margins: Margins,
    pub distortions: (Real, Real),
}

/// Achievability margins of the general adaptive result, plus the
/// configuration's analytic distortions.
///
/// `lhs_j = I(S̃j; Ũj)`, `rhs_j = I(Ũj; everything at the other terminal)`;
/// terminal `j` reconstructs the other terminal's prior symbol `S̃_{j'}`
/// through `g_j`, so `D_1` pairs `S̃1` with `g_2`'s output.
pub fn theorem1_margins(
    cfg: &Configuration,
    ch: &TwcChannel,
    source: &Joint,
    d1: &DistortionMatrix,
    d2: &DistortionMatrix,
) -> Result<StationaryReport> {
    let z = validate(cfg, ch, source)?;
    if d1.n_src() != z.s1 || d1.n_rec() != cfg.n_shat1 || d2.n_src() != z.s2 || d2.n_rec() != cfg.n_shat2 {
        return Err(ConfigError::Mismatch("distortion matrix shape".into()));
    }
    let pz = config_pz(cfg, ch, source)?;
    let residual = {
        let carried = pz.marginalize(&[0, 1, 2, 3, 10, 11, 12, 13])?;
        let tilde = carried_to_tilde(&z, &carried)?;
        step_full(cfg, ch, source, &tilde)?.l1_distance(&pz)?
    };
    let lhs1 = pz.mutual_information(&[4], &[6], &[])?;
    let rhs1 = pz.mutual_information(&[6], &[1, 3, 5, 7, 9, 11, 13], &[])?;
    let lhs2 = pz.mutual_information(&[5], &[7], &[])?;
    let rhs2 = pz.mutual_information(&[7], &[0, 2, 4, 6, 8, 10, 12], &[])?;

    let g1d = z.g_dims(1);
    let g2d = z.g_dims(2);
    let mut dist1 = 0.0;
    let mut dist2 = 0.0;
    pz.for_each_cell(|i, p| {
        if p <= 0.0 {
            return;
        }
        let shat1 = cfg.g2[pack(&[i[6], i[1], i[3], i[5], i[7], i[9], i[13]], &g2d)];
        let shat2 = cfg.g1[pack(&[i[7], i[0], i[2], i[4], i[6], i[8], i[12]], &g1d)];
        dist1 += p * d1.get(i[4], shat1);
        dist2 += p * d2.get(i[5], shat2);
    });

    Ok(StationaryReport {
        pz,
        residual,
        cond1_ok: lhs1 + EPS_REPORT < rhs1,
        cond2_ok: lhs2 + EPS_REPORT < rhs2,
        margins: Margins {
            lhs1,
            rhs1,
            lhs2,
            rhs2,
        },
        distortions: (dist1, dist2),
    })
}

/// Margins of the non-adaptive (hybrid coding) reduction:
/// `I(S̃1;Ũ1|S̃2,Ũ2)` vs `I(Ũ1;Y2|S̃2,Ũ2)` and mirrored. Requires the
/// non-adaptive structure: `f_j` must ignore `(s_j, u_j, w̃_j)` and `g_j`
/// must ignore `(s_j, u_j, w̃_j)`.
pub fn corollary1_margins(cfg: &Configuration, ch: &TwcChannel, source: &Joint) -> Result<Margins> {
    let z = validate(cfg, ch, source)?;
    check_non_adaptive(cfg, &z)?;
    let pz = config_pz(cfg, ch, source)?;
    Ok(Margins {
        lhs1: pz.mutual_information(&[4], &[6], &[5, 7])?,
        rhs1: pz.mutual_information(&[6], &[13], &[5, 7])?,
        lhs2: pz.mutual_information(&[5], &[7], &[4, 6])?,
        rhs2: pz.mutual_information(&[7], &[12], &[4, 6])?,
    })
}

fn check_non_adaptive(cfg: &Configuration, z: &Sizes) -> Result<()> {
    for (j, f) in [(1usize, &cfg.f1), (2, &cfg.f2)] {
        let d = z.f_dims(j);
        let mut idx = vec![0usize; 5];
        for flat in 0..f.len() {
            unpack(flat, &d, &mut idx);
            let canon = f[pack(&[0, 0, idx[2], idx[3], 0], &d)];
            if f[flat] != canon {
                return Err(ConfigError::NotNonAdaptive(format!(
                    "f{j} depends on the fresh (s, u) or on w̃"
                )));
            }
        }
    }
    for (j, g) in [(1usize, &cfg.g1), (2, &cfg.g2)] {
        let d = z.g_dims(j);
        let mut idx = vec![0usize; 7];
        for flat in 0..g.len() {
            unpack(flat, &d, &mut idx);
            let canon = g[pack(&[idx[0], 0, 0, idx[3], idx[4], 0, idx[6]], &d)];
            if g[flat] != canon {
                return Err(ConfigError::NotNonAdaptive(format!(
                    "g{j} depends on the fresh (s, u) or on w̃"
                )));
            }
        }
    }
    Ok(())
}

/// Ingredients for the four canned constructions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SpecialConfig {
    /// Symbol-by-symbol maps: `f_j: s̃_j → x_j` (length `|S_j|`) and
    /// `g_j: (s̃_j, y_j) → ŝ̃_{j'}` (row-major, length `|S_j|·|Y_j|`).
    Uncoded {
        f1: Vec<usize>,
        f2: Vec<usize>,
        g1: Vec<usize>,
        g2: Vec<usize>,
        n_shat1: usize,
        n_shat2: usize,
    },
    /// Separate source and channel coding for independent sources:
    /// `U_j = (V_j, Ŝ_j)` with `V_j` a channel-input law and `rd_j` a
    /// rate-distortion achieving kernel `S_j → Ŝ_j`.
    SsccIndependent {
        v1: Pmf,
        v2: Pmf,
        rd1: Cond,
        rd2: Cond,
    },
    /// Separate coding with Wyner-Ziv source codes: `U_j = (V_j, T_j)`;
    /// `dec_j` maps `(t_j, s_{j'})` row-major to the reconstruction of
    /// source `j` at the other terminal.
    SsccWz {
        v1: Pmf,
        v2: Pmf,
        wz1: Cond,
        dec1: Vec<usize>,
        n_shat1: usize,
        wz2: Cond,
        dec2: Vec<usize>,
        n_shat2: usize,
    },
    /// Correlation-preserving lossless scheme: the independent-SSCC
    /// construction with identity reconstruction kernels at zero distortion.
    LosslessCpc { v1: Pmf, v2: Pmf },
}

pub fn build_special_config(kind: &SpecialConfig, ch: &TwcChannel, source: &Joint) -> Result<Configuration> {
    let (n_s1, n_s2) = {
        let d = source.dims();
        if d.len() != 2 {
            return Err(ConfigError::BadIngredient("source must be a bivariate joint".into()));
        }
        (d[0], d[1])
    };
    match kind {
        SpecialConfig::Uncoded {
            f1,
            f2,
            g1,
            g2,
            n_shat1,
            n_shat2,
        } => {
            if f1.len() != n_s1 || f2.len() != n_s2 {
                return Err(ConfigError::BadIngredient("uncoded f table length".into()));
            }
            if g1.len() != n_s1 * ch.ny1() || g2.len() != n_s2 * ch.ny2() {
                return Err(ConfigError::BadIngredient("uncoded g table length".into()));
            }
            let pu1 = constant_u(n_s1);
            let pu2 = constant_u(n_s2);
            // f_j(s̃_j) and g_j(s̃_j, y_j), lifted to the full domains.
            let lift_f = |tab: &[usize], n_s: usize, n_w: usize| -> Vec<usize> {
                let d = [n_s, 1, n_s, 1, n_w];
                let mut out = vec![0usize; d.iter().product()];
                let mut idx = vec![0usize; 5];
                for flat in 0..out.len() {
                    unpack(flat, &d, &mut idx);
                    out[flat] = tab[idx[2]];
                }
                out
            };
            let lift_g = |tab: &[usize], n_s: usize, n_w: usize, n_y: usize| -> Vec<usize> {
                let d = [1, n_s, 1, n_s, 1, n_w, n_y];
                let mut out = vec![0usize; d.iter().product()];
                let mut idx = vec![0usize; 7];
                for flat in 0..out.len() {
                    unpack(flat, &d, &mut idx);
                    out[flat] = tab[idx[3] * n_y + idx[6]];
                }
                out
            };
            assemble(
                pu1,
                pu2,
                lift_f(f1, n_s1, ch.nx1() * ch.ny1()),
                lift_f(f2, n_s2, ch.nx2() * ch.ny2()),
                lift_g(g1, n_s1, ch.nx1() * ch.ny1(), ch.ny1()),
                lift_g(g2, n_s2, ch.nx2() * ch.ny2(), ch.ny2()),
                *n_shat1,
                *n_shat2,
                ch,
                source,
            )
        }
        SpecialConfig::SsccIndependent { v1, v2, rd1, rd2 } => {
            build_component_sscc(
                v1,
                v2,
                rd1,
                rd2,
                // Reconstruction is the Ŝ component of the other terminal's Ũ.
                |_n_t, _n_s| None,
                ch,
                source,
            )
        }
        SpecialConfig::LosslessCpc { v1, v2 } => {
            let id1 = identity_kernel(n_s1)?;
            let id2 = identity_kernel(n_s2)?;
            build_component_sscc(v1, v2, &id1, &id2, |_n_t, _n_s| None, ch, source)
        }
        SpecialConfig::SsccWz {
            v1,
            v2,
            wz1,
            dec1,
            n_shat1,
            wz2,
            dec2,
            n_shat2,
        } => build_wz_sscc(v1, v2, wz1, dec1, *n_shat1, wz2, dec2, *n_shat2, ch, source),
    }
}

fn constant_u(n_s: usize) -> Cond {
    Cond::deterministic(
        vec![Alphabet::labeled(n_s, "S")],
        vec![Alphabet::labeled(1, "U")],
        &vec![0; n_s],
    )
    .expect("constant kernel")
}

fn identity_kernel(n: usize) -> Result<Cond> {
    Ok(Cond::deterministic(
        vec![Alphabet::labeled(n, "S")],
        vec![Alphabet::labeled(n, "Shat")],
        &(0..n).collect::<Vec<_>>(),
    )?)
}

/// Common body for the SSCC-style constructions with `U_j = (V_j, C_j)`,
/// where `C_j` is the source-code component (`Ŝ_j` or `T_j`), `V_j` feeds the
/// channel (`x_j = v_j`-component), and reconstruction extracts the `C`
/// component of the other terminal's `Ũ` (the `None` decoder) .
#[allow(clippy::too_many_arguments)]
fn build_component_sscc(
    v1: &Pmf,
    v2: &Pmf,
    c1: &Cond,
    c2: &Cond,
    _decoder: impl Fn(usize, usize) -> Option<usize>,
    ch: &TwcChannel,
    source: &Joint,
) -> Result<Configuration> {
    let d = source.dims();
    let (n_s1, n_s2) = (d[0], d[1]);
    if v1.len() != ch.nx1() || v2.len() != ch.nx2() {
        return Err(ConfigError::BadIngredient("V law must live on the channel input alphabet".into()));
    }
    if c1.given_cells() != n_s1 || c2.given_cells() != n_s2 {
        return Err(ConfigError::BadIngredient("source-code kernel shape".into()));
    }
    let (n_c1, n_c2) = (c1.out_cells(), c2.out_cells());
    let pu1 = component_u(v1, c1)?;
    let pu2 = component_u(v2, c2)?;
    // x_j = V component of ũ_j; ŝ̃_{j'} = C component of ũ_{j'}.
    let f1 = component_f(n_s1, ch.nx1(), n_c1, ch.nx1() * ch.ny1());
    let f2 = component_f(n_s2, ch.nx2(), n_c2, ch.nx2() * ch.ny2());
    let g1 = component_g(
        ch.nx2() * n_c2,
        n_s1,
        ch.nx1() * n_c1,
        ch.nx1() * ch.ny1(),
        ch.ny1(),
        |ut_other, _own_st| ut_other % n_c2,
    );
    let g2 = component_g(
        ch.nx1() * n_c1,
        n_s2,
        ch.nx2() * n_c2,
        ch.nx2() * ch.ny2(),
        ch.ny2(),
        |ut_other, _own_st| ut_other % n_c1,
    );
    assemble(pu1, pu2, f1, f2, g1, g2, n_c1, n_c2, ch, source)
}

#[allow(clippy::too_many_arguments)]
fn build_wz_sscc(
    v1: &Pmf,
    v2: &Pmf,
    wz1: &Cond,
    dec1: &[usize],
    n_shat1: usize,
    wz2: &Cond,
    dec2: &[usize],
    n_shat2: usize,
    ch: &TwcChannel,
    source: &Joint,
) -> Result<Configuration> {
    let d = source.dims();
    let (n_s1, n_s2) = (d[0], d[1]);
    if v1.len() != ch.nx1() || v2.len() != ch.nx2() {
        return Err(ConfigError::BadIngredient("V law must live on the channel input alphabet".into()));
    }
    let (n_t1, n_t2) = (wz1.out_cells(), wz2.out_cells());
    if wz1.given_cells() != n_s1 || wz2.given_cells() != n_s2 {
        return Err(ConfigError::BadIngredient("WZ kernel shape".into()));
    }
    if dec1.len() != n_t1 * n_s2 || dec2.len() != n_t2 * n_s1 {
        return Err(ConfigError::BadIngredient("WZ decoder table length".into()));
    }
    if dec1.iter().any(|&x| x >= n_shat1) || dec2.iter().any(|&x| x >= n_shat2) {
        return Err(ConfigError::BadIngredient("WZ decoder value out of range".into()));
    }
    let pu1 = component_u(v1, wz1)?;
    let pu2 = component_u(v2, wz2)?;
    let f1 = component_f(n_s1, ch.nx1(), n_t1, ch.nx1() * ch.ny1());
    let f2 = component_f(n_s2, ch.nx2(), n_t2, ch.nx2() * ch.ny2());
    // Terminal 1 reconstructs S̃2 from (T component of Ũ2, own S̃1).
    let g1 = component_g(
        ch.nx2() * n_t2,
        n_s1,
        ch.nx1() * n_t1,
        ch.nx1() * ch.ny1(),
        ch.ny1(),
        |ut_other, own_st| dec2[(ut_other % n_t2) * n_s1 + own_st],
    );
    let g2 = component_g(
        ch.nx1() * n_t1,
        n_s2,
        ch.nx2() * n_t2,
        ch.nx2() * ch.ny2(),
        ch.ny2(),
        |ut_other, own_st| dec1[(ut_other % n_t1) * n_s2 + own_st],
    );
    assemble(pu1, pu2, f1, f2, g1, g2, n_shat1, n_shat2, ch, source)
}

/// `P(U_j = (v, c) | s) = P_V(v) · P_C(c | s)` with `u = v·|C| + c`.
fn component_u(v: &Pmf, c: &Cond) -> Result<Cond> {
    let n_s = c.given_cells();
    let n_c = c.out_cells();
    let n_v = v.len();
    let mut rows: Vec<Option<Vec<Real>>> = Vec::with_capacity(n_s);
    for s in 0..n_s {
        match c.row(s) {
            None => rows.push(None),
            Some(cr) => {
                let mut row = vec![0.0; n_v * n_c];
                for vi in 0..n_v {
                    for ci in 0..n_c {
                        row[vi * n_c + ci] = v.get(vi) * cr[ci];
                    }
                }
                rows.push(Some(row));
            }
        }
    }
    Ok(Cond::from_rows(
        vec![Alphabet::labeled(n_s, "S")],
        vec![Alphabet::labeled(n_v * n_c, "U")],
        rows,
    )?)
}

/// `f(s, u, s̃, ũ, w̃) = v`-component of `ũ` (`ũ = v·n_c + c`).
fn component_f(n_s: usize, n_x: usize, n_c: usize, n_w: usize) -> Vec<usize> {
    let n_u = n_x * n_c;
    let d = [n_s, n_u, n_s, n_u, n_w];
    let mut out = vec![0usize; d.iter().product()];
    let mut idx = vec![0usize; 5];
    for flat in 0..out.len() {
        unpack(flat, &d, &mut idx);
        out[flat] = idx[3] / n_c;
    }
    out
}

/// `g(ũ_{j'}, s, u, s̃, ũ, w̃, y) = dec(ũ_{j'}, s̃)`.
fn component_g(
    n_ut_other: usize,
    n_s: usize,
    n_u: usize,
    n_w: usize,
    n_y: usize,
    dec: impl Fn(usize, usize) -> usize,
) -> Vec<usize> {
    let d = [n_ut_other, n_s, n_u, n_s, n_u, n_w, n_y];
    let mut out = vec![0usize; d.iter().product()];
    let mut idx = vec![0usize; 7];
    for flat in 0..out.len() {
        unpack(flat, &d, &mut idx);
        out[flat] = dec(idx[0], idx[3]);
    }
    out
}

/// Finishes a non-adaptive construction: the `(W̃1, W̃2)` pair is set
/// independent of everything else, with the law obtained by pushing a fresh
/// tilde draw through the encoders and the channel.
#[allow(clippy::too_many_arguments)]
fn assemble(
    pu1: Cond,
    pu2: Cond,
    f1: Vec<usize>,
    f2: Vec<usize>,
    g1: Vec<usize>,
    g2: Vec<usize>,
    n_shat1: usize,
    n_shat2: usize,
    ch: &TwcChannel,
    source: &Joint,
) -> Result<Configuration> {
    let d = source.dims();
    let (n_s1, n_s2) = (d[0], d[1]);
    let (n_u1, n_u2) = (pu1.out_cells(), pu2.out_cells());
    let (n_w1, n_w2) = (ch.nx1() * ch.ny1(), ch.nx2() * ch.ny2());
    let f1d = [n_s1, n_u1, n_s1, n_u1, n_w1];
    let f2d = [n_s2, n_u2, n_s2, n_u2, n_w2];

    // Push-forward (fresh tilde draw -> encoders -> channel) for the W̃ law.
    let mut pw = vec![0.0; n_w1 * n_w2];
    source.for_each_cell(|i, ps| {
        if ps <= 0.0 {
            return;
        }
        for b1 in 0..n_u1 {
            let p1 = cond_prob(&pu1, i[0], b1);
            if p1 <= 0.0 {
                continue;
            }
            for b2 in 0..n_u2 {
                let p2 = cond_prob(&pu2, i[1], b2);
                if p2 <= 0.0 {
                    continue;
                }
                // Non-adaptive encoders: evaluate at (s=0, u=0, w̃=0).
                let x1 = f1[pack(&[0, 0, i[0], b1, 0], &f1d)];
                let x2 = f2[pack(&[0, 0, i[1], b2, 0], &f2d)];
                for y1 in 0..ch.ny1() {
                    for y2 in 0..ch.ny2() {
                        let p = ps * p1 * p2 * ch.prob(x1, x2, y1, y2);
                        if p > 0.0 {
                            pw[(x1 * ch.ny1() + y1) * n_w2 + (x2 * ch.ny2() + y2)] += p;
                        }
                    }
                }
            }
        }
    });

    let tilde_axes: Vec<Alphabet> = [
        (n_s1, "S~1"),
        (n_s2, "S~2"),
        (n_u1, "U~1"),
        (n_u2, "U~2"),
        (n_w1, "W~1"),
        (n_w2, "W~2"),
    ]
    .iter()
    .map(|&(n, l)| Alphabet::labeled(n, l))
    .collect();
    let p_tilde = joint_from_fn_normalized(tilde_axes, |i| {
        source.get(&i[0..2])
            * cond_prob(&pu1, i[0], i[2])
            * cond_prob(&pu2, i[1], i[3])
            * pw[i[4] * n_w2 + i[5]]
    })?;

    let cfg = Configuration {
        p_u1_given_s1: pu1,
        p_u2_given_s2: pu2,
        p_tilde,
        f1,
        f2,
        g1,
        g2,
        n_shat1,
        n_shat2,
    };
    validate(&cfg, ch, source)?;
    Ok(cfg)
}
