//! Exact finite-probability arithmetic and information measures over indexed
//! alphabets.
//!
//! Symbols are plain indices `0..size`. Joint tables are dense, row-major
//! (last axis fastest), and axis order is part of a distribution's identity.
//! All entropies and mutual informations are in bits.
//!
//! Types are generic over the scalar via [`Scalar`]; the crate root exports
//! `f64` aliases ([`crate::Pmf`], [`crate::Joint`], [`crate::Cond`]) that the
//! solvers build on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scalar requirements for probability tables: a float with conversions from
/// primitive literals.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + std::iter::Sum + std::fmt::Debug + Send + Sync + 'static
{
    /// Mass-validation tolerance (1e-12): constructed tables must sum to one
    /// within this bound.
    fn mass_tol() -> Self {
        Self::from_f64(1e-12).unwrap()
    }
    /// log base 2, with the convention `0 log 0 = 0` handled by callers.
    fn log2s(self) -> Self;
}

impl Scalar for f64 {
    fn log2s(self) -> Self {
        self.log2()
    }
}

impl Scalar for f32 {
    fn log2s(self) -> Self {
        self.log2()
    }
}

/// Dense-table size cap: total joint dimension is limited to 2^24 cells.
pub const MAX_CELLS: usize = 1 << 24;

/// Entries in `[-ENTRY_SLOP, 0)` are clamped to zero on construction; anything
/// more negative is rejected. Absorbs harmless arithmetic round-off without
/// hiding genuinely bad inputs.
const ENTRY_SLOP: f64 = 1e-15;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ProbError {
    #[error("alphabet size must be >= 1")]
    EmptyAlphabet,
    #[error("probability entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 within 1e-12")]
    InvalidMass { sum: f64 },
    #[error("cannot normalize: total mass is not positive")]
    ZeroMass,
    #[error("table has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("joint table would need {cells} cells, exceeding the cap of {MAX_CELLS}")]
    DimensionCap { cells: usize },
    #[error("axis index {axis} out of range for {naxes} axes")]
    AxisOutOfRange { axis: usize, naxes: usize },
    #[error("axis set must be nonempty")]
    EmptyAxisSet,
    #[error("axis groups overlap (axis {axis} appears twice)")]
    OverlappingGroups { axis: usize },
    #[error("conditioning is degenerate: every conditioning cell has zero mass")]
    AllCellsZero,
    #[error("conditional row {cell} is undefined but carries positive mass {mass}")]
    UndefinedConditional { cell: usize, mass: f64 },
    #[error("alphabet mismatch: {0}")]
    ShapeMismatch(String),
    #[error("divergence is infinite (p > 0 where q = 0 at cell {cell})")]
    InfiniteDivergence { cell: usize },
}

pub type Result<T> = std::result::Result<T, ProbError>;

/// A finite alphabet; symbols are the indices `0..size`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Alphabet {
    pub fn new(size: usize) -> Self {
        assert!(size >= 1, "alphabet size must be >= 1");
        Alphabet { size, label: None }
    }

    pub fn labeled(size: usize, label: &str) -> Self {
        assert!(size >= 1, "alphabet size must be >= 1");
        Alphabet {
            size,
            label: Some(label.to_string()),
        }
    }
}

/// Row-major strides (last axis fastest) for a list of axis sizes.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Packs a multi-index into a flat row-major offset.
pub fn pack(idx: &[usize], dims: &[usize]) -> usize {
    debug_assert_eq!(idx.len(), dims.len());
    let mut flat = 0usize;
    for (i, &v) in idx.iter().enumerate() {
        debug_assert!(v < dims[i]);
        flat = flat * dims[i] + v;
    }
    flat
}

/// Unpacks a flat row-major offset into `out`.
pub fn unpack(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for i in (0..dims.len()).rev() {
        out[i] = flat % dims[i];
        flat /= dims[i];
    }
}

fn total_cells(axes: &[Alphabet]) -> Result<usize> {
    let mut cells = 1usize;
    for a in axes {
        if a.size == 0 {
            return Err(ProbError::EmptyAlphabet);
        }
        cells = cells
            .checked_mul(a.size)
            .ok_or(ProbError::DimensionCap { cells: usize::MAX })?;
        if cells > MAX_CELLS {
            return Err(ProbError::DimensionCap { cells });
        }
    }
    Ok(cells)
}

fn validate_entries<F: Scalar>(probs: &mut [F], normalize: bool) -> Result<()> {
    let slop = F::from_f64(ENTRY_SLOP).unwrap();
    for (i, p) in probs.iter_mut().enumerate() {
        if *p < F::zero() {
            if *p >= -slop {
                *p = F::zero();
            } else {
                return Err(ProbError::NegativeEntry {
                    index: i,
                    value: p.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if !p.is_finite() {
            return Err(ProbError::NegativeEntry {
                index: i,
                value: p.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let sum: F = probs.iter().copied().sum();
    if normalize {
        if sum <= F::zero() {
            return Err(ProbError::ZeroMass);
        }
        for p in probs.iter_mut() {
            *p = *p / sum;
        }
    } else if (sum - F::one()).abs() > F::mass_tol() {
        return Err(ProbError::InvalidMass {
            sum: sum.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// FinitePmf
// ---------------------------------------------------------------------------

/// A pmf over a single finite alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawPmf<F>",
    into = "RawPmf<F>",
    bound(serialize = "F: Serialize + Clone", deserialize = "F: serde::de::DeserializeOwned")
)]
pub struct FinitePmf<F: Scalar> {
    alphabet: Alphabet,
    probs: Vec<F>,
}

#[derive(Serialize, Deserialize)]
struct RawPmf<F> {
    alphabet: Alphabet,
    probs: Vec<F>,
}

impl<F: Scalar> TryFrom<RawPmf<F>> for FinitePmf<F> {
    type Error = ProbError;
    fn try_from(raw: RawPmf<F>) -> Result<Self> {
        FinitePmf::new(raw.alphabet, raw.probs)
    }
}

impl<F: Scalar> From<FinitePmf<F>> for RawPmf<F> {
    fn from(p: FinitePmf<F>) -> Self {
        RawPmf {
            alphabet: p.alphabet,
            probs: p.probs,
        }
    }
}

impl<F: Scalar> FinitePmf<F> {
    pub fn new(alphabet: Alphabet, mut probs: Vec<F>) -> Result<Self> {
        if alphabet.size == 0 {
            return Err(ProbError::EmptyAlphabet);
        }
        if probs.len() != alphabet.size {
            return Err(ProbError::LengthMismatch {
                expected: alphabet.size,
                got: probs.len(),
            });
        }
        validate_entries(&mut probs, false)?;
        Ok(FinitePmf { alphabet, probs })
    }

    /// Like [`FinitePmf::new`] but rescales to unit mass instead of rejecting.
    pub fn new_normalized(alphabet: Alphabet, mut probs: Vec<F>) -> Result<Self> {
        if probs.len() != alphabet.size {
            return Err(ProbError::LengthMismatch {
                expected: alphabet.size,
                got: probs.len(),
            });
        }
        validate_entries(&mut probs, true)?;
        Ok(FinitePmf { alphabet, probs })
    }

    pub fn uniform(size: usize) -> Self {
        let p = F::one() / F::from_usize(size).unwrap();
        FinitePmf {
            alphabet: Alphabet::new(size),
            probs: vec![p; size],
        }
    }

    /// Binary pmf with `P(1) = p`.
    pub fn bernoulli(p: F) -> Result<Self> {
        FinitePmf::new(Alphabet::new(2), vec![F::one() - p, p])
    }

    pub fn point_mass(size: usize, at: usize) -> Self {
        assert!(at < size);
        let mut probs = vec![F::zero(); size];
        probs[at] = F::one();
        FinitePmf {
            alphabet: Alphabet::new(size),
            probs,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.alphabet.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> F {
        self.probs[i]
    }

    pub fn entropy(&self) -> F {
        entropy_of(&self.probs)
    }

    pub fn into_joint(self) -> JointPmf<F> {
        JointPmf {
            axes: vec![self.alphabet],
            probs: self.probs,
        }
    }
}

fn entropy_of<F: Scalar>(probs: &[F]) -> F {
    let mut h = F::zero();
    for &p in probs {
        if p > F::zero() {
            h = h - p * p.log2s();
        }
    }
    // Guard against -0.0 / round-off just below zero on near-deterministic rows.
    if h < F::zero() {
        F::zero()
    } else {
        h
    }
}

// ---------------------------------------------------------------------------
// JointPmf
// ---------------------------------------------------------------------------

/// A joint pmf over an ordered list of finite alphabets, stored dense in
/// row-major order (last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawJoint<F>",
    into = "RawJoint<F>",
    bound(serialize = "F: Serialize + Clone", deserialize = "F: serde::de::DeserializeOwned")
)]
pub struct JointPmf<F: Scalar> {
    axes: Vec<Alphabet>,
    probs: Vec<F>,
}

#[derive(Serialize, Deserialize)]
struct RawJoint<F> {
    axes: Vec<Alphabet>,
    probs: Vec<F>,
}

impl<F: Scalar> TryFrom<RawJoint<F>> for JointPmf<F> {
    type Error = ProbError;
    fn try_from(raw: RawJoint<F>) -> Result<Self> {
        JointPmf::new(raw.axes, raw.probs)
    }
}

impl<F: Scalar> From<JointPmf<F>> for RawJoint<F> {
    fn from(j: JointPmf<F>) -> Self {
        RawJoint {
            axes: j.axes,
            probs: j.probs,
        }
    }
}

impl<F: Scalar> JointPmf<F> {
    pub fn new(axes: Vec<Alphabet>, mut probs: Vec<F>) -> Result<Self> {
        let cells = total_cells(&axes)?;
        if probs.len() != cells {
            return Err(ProbError::LengthMismatch {
                expected: cells,
                got: probs.len(),
            });
        }
        validate_entries(&mut probs, false)?;
        Ok(JointPmf { axes, probs })
    }

    pub fn new_normalized(axes: Vec<Alphabet>, mut probs: Vec<F>) -> Result<Self> {
        let cells = total_cells(&axes)?;
        if probs.len() != cells {
            return Err(ProbError::LengthMismatch {
                expected: cells,
                got: probs.len(),
            });
        }
        validate_entries(&mut probs, true)?;
        Ok(JointPmf { axes, probs })
    }

    /// Builds a joint by evaluating `f` on every multi-index. The result is
    /// validated like [`JointPmf::new`].
    pub fn from_fn(axes: Vec<Alphabet>, f: impl Fn(&[usize]) -> F) -> Result<Self> {
        let cells = total_cells(&axes)?;
        let dims: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let mut probs = Vec::with_capacity(cells);
        let mut idx = vec![0usize; dims.len()];
        for flat in 0..cells {
            unpack(flat, &dims, &mut idx);
            probs.push(f(&idx));
        }
        JointPmf::new(axes, probs)
    }

    /// Product of independent marginals, axes in argument order.
    pub fn from_product(parts: &[&FinitePmf<F>]) -> Result<Self> {
        let axes: Vec<Alphabet> = parts.iter().map(|p| p.alphabet.clone()).collect();
        JointPmf::from_fn(axes, |idx| {
            idx.iter()
                .zip(parts.iter())
                .map(|(&i, p)| p.get(i))
                .fold(F::one(), |a, b| a * b)
        })
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn get(&self, idx: &[usize]) -> F {
        let dims = self.dims();
        self.probs[pack(idx, &dims)]
    }

    /// Visits every cell as `(multi_index, mass)`.
    pub fn for_each_cell(&self, mut f: impl FnMut(&[usize], F)) {
        let dims = self.dims();
        let mut idx = vec![0usize; dims.len()];
        for flat in 0..self.probs.len() {
            unpack(flat, &dims, &mut idx);
            f(&idx, self.probs[flat]);
        }
    }

    /// Expectation of a cell functional.
    pub fn expectation(&self, f: impl Fn(&[usize]) -> F) -> F {
        let mut acc = F::zero();
        self.for_each_cell(|idx, p| {
            if p > F::zero() {
                acc = acc + p * f(idx);
            }
        });
        acc
    }

    fn check_axis_set(&self, axes: &[usize]) -> Result<()> {
        if axes.is_empty() {
            return Err(ProbError::EmptyAxisSet);
        }
        let mut seen = vec![false; self.axes.len()];
        for &a in axes {
            if a >= self.axes.len() {
                return Err(ProbError::AxisOutOfRange {
                    axis: a,
                    naxes: self.axes.len(),
                });
            }
            if seen[a] {
                return Err(ProbError::OverlappingGroups { axis: a });
            }
            seen[a] = true;
        }
        Ok(())
    }

    /// Sums out every axis not in `keep_axes`; kept axes retain their
    /// original relative order regardless of the order given.
    pub fn marginalize(&self, keep_axes: &[usize]) -> Result<JointPmf<F>> {
        self.check_axis_set(keep_axes)?;
        let mut keep: Vec<usize> = keep_axes.to_vec();
        keep.sort_unstable();
        if keep.len() == self.axes.len() {
            return Ok(self.clone());
        }
        let dims = self.dims();
        let out_axes: Vec<Alphabet> = keep.iter().map(|&a| self.axes[a].clone()).collect();
        let out_dims: Vec<usize> = keep.iter().map(|&a| dims[a]).collect();
        let out_cells: usize = out_dims.iter().product();
        let mut out = vec![F::zero(); out_cells];
        let mut idx = vec![0usize; dims.len()];
        let mut oidx = vec![0usize; keep.len()];
        for flat in 0..self.probs.len() {
            let p = self.probs[flat];
            if p == F::zero() {
                continue;
            }
            unpack(flat, &dims, &mut idx);
            for (k, &a) in keep.iter().enumerate() {
                oidx[k] = idx[a];
            }
            out[pack(&oidx, &out_dims)] = out[pack(&oidx, &out_dims)] + p;
        }
        Ok(JointPmf {
            axes: out_axes,
            probs: out,
        })
    }

    /// Single-axis marginal as a [`FinitePmf`].
    pub fn marginal_pmf(&self, axis: usize) -> Result<FinitePmf<F>> {
        let m = self.marginalize(&[axis])?;
        Ok(FinitePmf {
            alphabet: m.axes.into_iter().next().unwrap(),
            probs: m.probs,
        })
    }

    /// Bayes-rule conditioning on `given_axes` (in the order provided).
    /// Output axes are the remaining axes in original order. Zero-mass
    /// conditioning cells are marked undefined, never NaN.
    pub fn condition(&self, given_axes: &[usize]) -> Result<CondPmf<F>> {
        self.check_axis_set(given_axes)?;
        if given_axes.len() >= self.axes.len() {
            return Err(ProbError::ShapeMismatch(
                "conditioning set must be a proper subset of the axes".into(),
            ));
        }
        let dims = self.dims();
        let in_given = {
            let mut v = vec![false; dims.len()];
            for &a in given_axes {
                v[a] = true;
            }
            v
        };
        let out_axes_idx: Vec<usize> = (0..dims.len()).filter(|&a| !in_given[a]).collect();
        let g_axes: Vec<Alphabet> = given_axes.iter().map(|&a| self.axes[a].clone()).collect();
        let o_axes: Vec<Alphabet> = out_axes_idx.iter().map(|&a| self.axes[a].clone()).collect();
        let g_dims: Vec<usize> = given_axes.iter().map(|&a| dims[a]).collect();
        let o_dims: Vec<usize> = out_axes_idx.iter().map(|&a| dims[a]).collect();
        let g_cells: usize = g_dims.iter().product();
        let o_cells: usize = o_dims.iter().product();

        let mut table = vec![F::zero(); g_cells * o_cells];
        let mut mass = vec![F::zero(); g_cells];
        let mut idx = vec![0usize; dims.len()];
        let mut gi = vec![0usize; g_dims.len()];
        let mut oi = vec![0usize; o_dims.len()];
        for flat in 0..self.probs.len() {
            let p = self.probs[flat];
            unpack(flat, &dims, &mut idx);
            for (k, &a) in given_axes.iter().enumerate() {
                gi[k] = idx[a];
            }
            for (k, &a) in out_axes_idx.iter().enumerate() {
                oi[k] = idx[a];
            }
            let g = pack(&gi, &g_dims);
            mass[g] = mass[g] + p;
            table[g * o_cells + pack(&oi, &o_dims)] = p;
        }
        let mut defined = vec![false; g_cells];
        let mut any = false;
        for g in 0..g_cells {
            if mass[g] > F::zero() {
                defined[g] = true;
                any = true;
                for o in 0..o_cells {
                    table[g * o_cells + o] = table[g * o_cells + o] / mass[g];
                }
            }
        }
        if !any {
            return Err(ProbError::AllCellsZero);
        }
        Ok(CondPmf {
            given_axes: g_axes,
            out_axes: o_axes,
            probs: table,
            defined,
        })
    }

    /// Extends the joint with the output axes of `cond`. `given_map[k]` names
    /// the axis of `self` feeding `cond`'s k-th conditioning axis. Undefined
    /// conditional rows are an error when hit with positive mass.
    pub fn compose(&self, cond: &CondPmf<F>, given_map: &[usize]) -> Result<JointPmf<F>> {
        if given_map.len() != cond.given_axes.len() {
            return Err(ProbError::ShapeMismatch(format!(
                "given_map has {} entries, conditional expects {}",
                given_map.len(),
                cond.given_axes.len()
            )));
        }
        self.check_axis_set(given_map)?;
        for (k, &a) in given_map.iter().enumerate() {
            if self.axes[a].size != cond.given_axes[k].size {
                return Err(ProbError::ShapeMismatch(format!(
                    "axis {} has size {}, conditional expects {}",
                    a, self.axes[a].size, cond.given_axes[k].size
                )));
            }
        }
        let dims = self.dims();
        let g_dims: Vec<usize> = cond.given_axes.iter().map(|a| a.size).collect();
        let o_cells = cond.out_cells();
        let mut axes = self.axes.clone();
        axes.extend(cond.out_axes.iter().cloned());
        let cells = total_cells(&axes)?;
        let mut out = vec![F::zero(); cells];
        let mut idx = vec![0usize; dims.len()];
        let mut gi = vec![0usize; g_dims.len()];
        for flat in 0..self.probs.len() {
            let p = self.probs[flat];
            if p == F::zero() {
                continue;
            }
            unpack(flat, &dims, &mut idx);
            for (k, &a) in given_map.iter().enumerate() {
                gi[k] = idx[a];
            }
            let g = pack(&gi, &g_dims);
            match cond.row(g) {
                Some(row) => {
                    for (o, &q) in row.iter().enumerate() {
                        out[flat * o_cells + o] = p * q;
                    }
                }
                None => {
                    return Err(ProbError::UndefinedConditional {
                        cell: g,
                        mass: p.to_f64().unwrap_or(f64::NAN),
                    })
                }
            }
        }
        JointPmf::new(axes, out)
    }

    /// Reorders the axes; `order[k]` is the old axis placed at position `k`.
    pub fn permute(&self, order: &[usize]) -> Result<JointPmf<F>> {
        self.check_axis_set(order)?;
        if order.len() != self.axes.len() {
            return Err(ProbError::ShapeMismatch(
                "permutation must list every axis exactly once".into(),
            ));
        }
        let dims = self.dims();
        let new_axes: Vec<Alphabet> = order.iter().map(|&a| self.axes[a].clone()).collect();
        let new_dims: Vec<usize> = order.iter().map(|&a| dims[a]).collect();
        let mut out = vec![F::zero(); self.probs.len()];
        let mut idx = vec![0usize; dims.len()];
        let mut nidx = vec![0usize; dims.len()];
        for flat in 0..self.probs.len() {
            unpack(flat, &dims, &mut idx);
            for (k, &a) in order.iter().enumerate() {
                nidx[k] = idx[a];
            }
            out[pack(&nidx, &new_dims)] = self.probs[flat];
        }
        Ok(JointPmf {
            axes: new_axes,
            probs: out,
        })
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> F {
        entropy_of(&self.probs)
    }

    /// Conditional mutual information `I(A; B | C)` in bits, computed from
    /// entropies of marginals. Tiny negatives from round-off (within 1e-12)
    /// clamp to zero.
    pub fn mutual_information(
        &self,
        group_a: &[usize],
        group_b: &[usize],
        group_cond: &[usize],
    ) -> Result<F> {
        // Disjointness across all three groups.
        let mut seen = vec![false; self.axes.len()];
        for &a in group_a.iter().chain(group_b).chain(group_cond) {
            if a >= self.axes.len() {
                return Err(ProbError::AxisOutOfRange {
                    axis: a,
                    naxes: self.axes.len(),
                });
            }
            if seen[a] {
                return Err(ProbError::OverlappingGroups { axis: a });
            }
            seen[a] = true;
        }
        if group_a.is_empty() || group_b.is_empty() {
            return Ok(F::zero());
        }
        let h = |axes: &[usize]| -> Result<F> {
            if axes.is_empty() {
                Ok(F::zero())
            } else {
                Ok(self.marginalize(axes)?.entropy())
            }
        };
        let ac: Vec<usize> = group_a.iter().chain(group_cond).copied().collect();
        let bc: Vec<usize> = group_b.iter().chain(group_cond).copied().collect();
        let abc: Vec<usize> = group_a
            .iter()
            .chain(group_b)
            .chain(group_cond)
            .copied()
            .collect();
        let v = h(&ac)? + h(&bc)? - h(&abc)? - h(group_cond)?;
        let clamp = F::from_f64(1e-9).unwrap();
        if v < F::zero() && v > -clamp {
            Ok(F::zero())
        } else {
            Ok(v)
        }
    }

    /// L1 distance between two joints over identical axes.
    pub fn l1_distance(&self, other: &JointPmf<F>) -> Result<F> {
        if self.dims() != other.dims() {
            return Err(ProbError::ShapeMismatch("mismatched axes".into()));
        }
        Ok(self
            .probs
            .iter()
            .zip(other.probs.iter())
            .map(|(&a, &b)| (a - b).abs())
            .sum())
    }
}

// ---------------------------------------------------------------------------
// CondPmf
// ---------------------------------------------------------------------------

/// A conditional pmf: one distribution over the output axes per conditioning
/// cell. Cells may be undefined (zero-mass conditioning events).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawCond<F>",
    into = "RawCond<F>",
    bound(serialize = "F: Serialize + Clone", deserialize = "F: serde::de::DeserializeOwned")
)]
pub struct CondPmf<F: Scalar> {
    given_axes: Vec<Alphabet>,
    out_axes: Vec<Alphabet>,
    /// Dense `given_cells x out_cells` table; undefined rows are all-zero.
    probs: Vec<F>,
    defined: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct RawCond<F> {
    given_axes: Vec<Alphabet>,
    out_axes: Vec<Alphabet>,
    rows: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> TryFrom<RawCond<F>> for CondPmf<F> {
    type Error = ProbError;
    fn try_from(raw: RawCond<F>) -> Result<Self> {
        CondPmf::from_rows(raw.given_axes, raw.out_axes, raw.rows)
    }
}

impl<F: Scalar> From<CondPmf<F>> for RawCond<F> {
    fn from(c: CondPmf<F>) -> Self {
        let o = c.out_cells();
        let rows = (0..c.given_cells())
            .map(|g| c.row(g).map(|r| r.to_vec()))
            .collect();
        let _ = o;
        RawCond {
            given_axes: c.given_axes,
            out_axes: c.out_axes,
            rows,
        }
    }
}

impl<F: Scalar> CondPmf<F> {
    /// Builds from per-cell rows; `None` marks an undefined cell.
    pub fn from_rows(
        given_axes: Vec<Alphabet>,
        out_axes: Vec<Alphabet>,
        rows: Vec<Option<Vec<F>>>,
    ) -> Result<Self> {
        let g_cells = total_cells(&given_axes)?;
        let o_cells = total_cells(&out_axes)?;
        if rows.len() != g_cells {
            return Err(ProbError::LengthMismatch {
                expected: g_cells,
                got: rows.len(),
            });
        }
        let mut probs = vec![F::zero(); g_cells * o_cells];
        let mut defined = vec![false; g_cells];
        for (g, row) in rows.into_iter().enumerate() {
            if let Some(mut r) = row {
                if r.len() != o_cells {
                    return Err(ProbError::LengthMismatch {
                        expected: o_cells,
                        got: r.len(),
                    });
                }
                validate_entries(&mut r, false)?;
                probs[g * o_cells..(g + 1) * o_cells].copy_from_slice(&r);
                defined[g] = true;
            }
        }
        Ok(CondPmf {
            given_axes,
            out_axes,
            probs,
            defined,
        })
    }

    /// Builds from a dense `given_cells x out_cells` table with every row
    /// defined and validated.
    pub fn from_table(
        given_axes: Vec<Alphabet>,
        out_axes: Vec<Alphabet>,
        table: Vec<F>,
    ) -> Result<Self> {
        let g_cells = total_cells(&given_axes)?;
        let o_cells = total_cells(&out_axes)?;
        if table.len() != g_cells * o_cells {
            return Err(ProbError::LengthMismatch {
                expected: g_cells * o_cells,
                got: table.len(),
            });
        }
        let mut probs = table;
        for g in 0..g_cells {
            validate_entries(&mut probs[g * o_cells..(g + 1) * o_cells], false)?;
        }
        Ok(CondPmf {
            given_axes,
            out_axes,
            probs,
            defined: vec![true; g_cells],
        })
    }

    /// Deterministic conditional: `map[g]` is the output cell for cell `g`.
    pub fn deterministic(
        given_axes: Vec<Alphabet>,
        out_axes: Vec<Alphabet>,
        map: &[usize],
    ) -> Result<Self> {
        let g_cells = total_cells(&given_axes)?;
        let o_cells = total_cells(&out_axes)?;
        if map.len() != g_cells {
            return Err(ProbError::LengthMismatch {
                expected: g_cells,
                got: map.len(),
            });
        }
        let mut probs = vec![F::zero(); g_cells * o_cells];
        for (g, &o) in map.iter().enumerate() {
            if o >= o_cells {
                return Err(ProbError::AxisOutOfRange {
                    axis: o,
                    naxes: o_cells,
                });
            }
            probs[g * o_cells + o] = F::one();
        }
        Ok(CondPmf {
            given_axes,
            out_axes,
            probs,
            defined: vec![true; g_cells],
        })
    }

    pub fn given_axes(&self) -> &[Alphabet] {
        &self.given_axes
    }

    pub fn out_axes(&self) -> &[Alphabet] {
        &self.out_axes
    }

    pub fn given_cells(&self) -> usize {
        self.given_axes.iter().map(|a| a.size).product()
    }

    pub fn out_cells(&self) -> usize {
        self.out_axes.iter().map(|a| a.size).product()
    }

    /// The row for conditioning cell `g`, or `None` if undefined.
    pub fn row(&self, g: usize) -> Option<&[F]> {
        let o = self.out_cells();
        if self.defined[g] {
            Some(&self.probs[g * o..(g + 1) * o])
        } else {
            None
        }
    }

    pub fn is_defined(&self, g: usize) -> bool {
        self.defined[g]
    }

    /// Max absolute difference over cells where both conditionals are defined.
    pub fn linf_where_both_defined(&self, other: &CondPmf<F>) -> Result<F> {
        if self.given_cells() != other.given_cells() || self.out_cells() != other.out_cells() {
            return Err(ProbError::ShapeMismatch("mismatched conditional shapes".into()));
        }
        let mut worst = F::zero();
        for g in 0..self.given_cells() {
            if let (Some(a), Some(b)) = (self.row(g), other.row(g)) {
                for (&x, &y) in a.iter().zip(b.iter()) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Binary entropy in bits.
pub fn binary_entropy<F: Scalar>(p: F) -> F {
    if p <= F::zero() || p >= F::one() {
        F::zero()
    } else {
        -(p * p.log2s()) - (F::one() - p) * (F::one() - p).log2s()
    }
}

/// KL divergence in bits; `Err(InfiniteDivergence)` when absolutely
/// continuous support fails.
pub fn kl_divergence<F: Scalar>(p: &JointPmf<F>, q: &JointPmf<F>) -> Result<F> {
    if p.dims() != q.dims() {
        return Err(ProbError::ShapeMismatch("mismatched axes".into()));
    }
    let mut d = F::zero();
    for (cell, (&a, &b)) in p.probs().iter().zip(q.probs().iter()).enumerate() {
        if a > F::zero() {
            if b <= F::zero() {
                return Err(ProbError::InfiniteDivergence { cell });
            }
            d = d + a * (a / b).log2s();
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = FinitePmf<f64>;
    type J = JointPmf<f64>;

    fn example2_source() -> J {
        // P(0,0) = 0, the other three cells 1/3 each.
        J::new(
            vec![Alphabet::new(2), Alphabet::new(2)],
            vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap()
    }

    #[test]
    fn marginalize_uniform_keeps_uniform() {
        let j = J::new(
            vec![Alphabet::new(2), Alphabet::new(2)],
            vec![0.25; 4],
        )
        .unwrap();
        let m = j.marginalize(&[0]).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn marginalize_rows_of_three_cell_table() {
        let m = example2_source().marginalize(&[0]).unwrap();
        assert!((m.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn marginalize_all_axes_is_identity() {
        let j = example2_source();
        let m = j.marginalize(&[0, 1]).unwrap();
        assert_eq!(j, m);
    }

    #[test]
    fn condition_product_gives_marginal_rows() {
        let a = P::bernoulli(0.3).unwrap();
        let b = P::bernoulli(0.7).unwrap();
        let j = J::from_product(&[&a, &b]).unwrap();
        let c = j.condition(&[0]).unwrap();
        for g in 0..2 {
            let row = c.row(g).unwrap();
            assert!((row[0] - 0.3).abs() < 1e-15);
            assert!((row[1] - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn condition_zero_cell_is_point_mass_on_one() {
        let c = example2_source().condition(&[0]).unwrap();
        let row = c.row(0).unwrap(); // S1 = 0 forces S2 = 1
        assert_eq!(row, &[0.0, 1.0]);
    }

    #[test]
    fn condition_flags_zero_mass_cells() {
        let j = J::new(
            vec![Alphabet::new(2), Alphabet::new(2)],
            vec![0.5, 0.5, 0.0, 0.0],
        )
        .unwrap();
        let c = j.condition(&[0]).unwrap();
        assert!(c.row(0).is_some());
        assert!(c.row(1).is_none());
    }

    #[test]
    fn entropy_values() {
        assert!((P::bernoulli(0.5).unwrap().entropy() - 1.0).abs() < 1e-15);
        let h = P::bernoulli(0.89).unwrap().entropy();
        assert!((h - 0.4999).abs() < 1e-3, "H_b(0.89) = {h}");
        assert_eq!(P::point_mass(4, 2).entropy(), 0.0);
    }

    #[test]
    fn mutual_information_independent_is_zero() {
        let a = P::bernoulli(0.3).unwrap();
        let b = P::bernoulli(0.6).unwrap();
        let j = J::from_product(&[&a, &b]).unwrap();
        assert!(j.mutual_information(&[0], &[1], &[]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn conditional_entropy_of_three_cell_table() {
        let j = example2_source();
        let h2 = j.marginal_pmf(1).unwrap().entropy();
        let i = j.mutual_information(&[0], &[1], &[]).unwrap();
        let h2_given_1 = h2 - i;
        assert!((h2_given_1 - 2.0 / 3.0).abs() < 1e-12, "H(S2|S1) = {h2_given_1}");
    }

    #[test]
    fn self_information_is_entropy() {
        let p = P::bernoulli(0.3).unwrap();
        // I(X;X) via a diagonal joint.
        let j = J::new(
            vec![Alphabet::new(2), Alphabet::new(2)],
            vec![0.7, 0.0, 0.0, 0.3],
        )
        .unwrap();
        let i = j.mutual_information(&[0], &[1], &[]).unwrap();
        assert!((i - p.entropy()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mass_unless_normalized() {
        let axes = vec![Alphabet::new(2)];
        assert!(J::new(axes.clone(), vec![0.5, 0.6]).is_err());
        let j = J::new_normalized(axes, vec![0.5, 0.6]).unwrap();
        assert!((j.probs()[0] - 0.5 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_entries() {
        assert!(J::new(vec![Alphabet::new(2)], vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn compose_recovers_chain_joint() {
        let s = P::bernoulli(0.25).unwrap().into_joint();
        let flip = CondPmf::from_table(
            vec![Alphabet::new(2)],
            vec![Alphabet::new(2)],
            vec![0.9, 0.1, 0.2, 0.8],
        )
        .unwrap();
        let j = s.compose(&flip, &[0]).unwrap();
        assert!((j.get(&[0, 1]) - 0.75 * 0.1).abs() < 1e-15);
        assert!((j.get(&[1, 0]) - 0.25 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn permute_then_permute_back() {
        let j = example2_source()
            .compose(
                &CondPmf::deterministic(
                    vec![Alphabet::new(2)],
                    vec![Alphabet::new(2)],
                    &[1, 0],
                )
                .unwrap(),
                &[1],
            )
            .unwrap();
        let p = j.permute(&[2, 0, 1]).unwrap();
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(j.probs(), back.probs());
    }

    #[test]
    fn json_round_trip_matches_schema() {
        let j = example2_source();
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.contains("\"axes\""));
        assert!(s.contains("\"probs\""));
        let back: J = serde_json::from_str(&s).unwrap();
        assert_eq!(j, back);
    }

    #[test]
    fn json_rejects_invalid_mass() {
        let bad = r#"{"axes":[{"size":2}],"probs":[0.5,0.6]}"#;
        assert!(serde_json::from_str::<J>(bad).is_err());
    }
}
