//! Transmit precoding bases and the alignment conditions.
//!
//! Stream `j` of every transmitter is precoded with the columns
//!
//! ```text
//! F^j(e) = ∏_k [ ∏_i T_{k,i}^{α_{k,i}} ∘ ∏_{r≠j} G_{k,r}^{β_{k,r}} ∘ T_k^{P - s_k} ] w
//! ```
//!
//! where `w` is the all-ones vector, `s_k` is the degree of decoder `k`'s
//! exponents and `P = (2M - 1) n`. An exponent tuple `e` has one slot per
//! generator, `K (2M - 1)` in total, each slot ranging over `0..n` for the
//! base level `F_n` and over `0..=n` for the next level `F_{n+1}`.
//!
//! Both levels share the same `P`. Each alignment condition
//! `gen ∘ F_n^j ⊂ T_k ∘ F_{n+1}^j` then holds column by column: the column
//! for `e` times `gen` equals `T_k` times the next-level column for `e`
//! incremented in the generator's slot.

use std::borrow::Cow;
use std::fmt;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::SchemeParams;
use crate::ring::{DiagonalOperator, ScalarRing};
use crate::sia::ProcessedState;

/// Default cap on the number of enumerated exponent tuples per basis.
pub const DEFAULT_ENUMERATION_BOUND: u64 = 1 << 24;

/// Default memory budget for materialized bases and condition matrices.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

/// Relative tolerance for column identities over the float rings.
pub const FLOAT_COLUMN_TOL: f64 = 1e-9;

type Diag<E> = DiagonalOperator<E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    /// `F_n`, exponents in `0..n`.
    Base,
    /// `F_{n+1}`, exponents in `0..=n`.
    Next,
}

impl Level {
    /// Number of values each exponent slot takes.
    pub fn radix(self, n: u64) -> u64 {
        match self {
            Level::Base => n,
            Level::Next => n + 1,
        }
    }
}

/// The generator an exponent slot raises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlotKind {
    /// Residual coefficient `T_{k,i}` of subspace `i`.
    Residual { subspace: usize },
    /// Desired coefficient `G_{k,r}` of subspace `r ≠ j`.
    Desired { subspace: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Slot {
    pub decoder: usize,
    pub kind: SlotKind,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SlotKind::Residual { subspace } => write!(f, "T_res[{}][{}]", self.decoder, subspace),
            SlotKind::Desired { subspace } => write!(f, "G[{}][{}]", self.decoder, subspace),
        }
    }
}

/// Slot order for stream `j`: decoder by decoder, the `M` residual slots
/// followed by the `M - 1` desired slots `r ≠ j`.
pub fn slot_layout(users: usize, order: usize, stream: usize) -> Vec<Slot> {
    let mut slots = Vec::with_capacity(users * (2 * order - 1));
    for decoder in 0..users {
        slots.extend((0..order).map(|subspace| Slot {
            decoder,
            kind: SlotKind::Residual { subspace },
        }));
        slots.extend((0..order).filter(|&r| r != stream).map(|subspace| Slot {
            decoder,
            kind: SlotKind::Desired { subspace },
        }));
    }
    slots
}

/// One precoding column label: an exponent per slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ExponentIndex {
    pub stream: usize,
    pub level: Level,
    pub order: usize,
    pub exponents: Vec<u32>,
}

impl ExponentIndex {
    fn group_width(&self) -> usize {
        2 * self.order - 1
    }

    /// `α[k][i]`
    pub fn alpha(&self, decoder: usize, subspace: usize) -> u32 {
        self.exponents[decoder * self.group_width() + subspace]
    }

    /// `β[k][r]` for `r ≠ j`.
    pub fn beta(&self, decoder: usize, subspace: usize) -> Option<u32> {
        if subspace == self.stream || subspace >= self.order {
            return None;
        }
        let offset = if subspace < self.stream { subspace } else { subspace - 1 };
        Some(self.exponents[decoder * self.group_width() + self.order + offset])
    }

    /// Degree `s_k` of decoder `k`'s exponents.
    pub fn degree(&self, decoder: usize) -> u64 {
        let w = self.group_width();
        self.exponents[decoder * w..(decoder + 1) * w]
            .iter()
            .map(|&e| e as u64)
            .sum()
    }

    /// Per-decoder homogenizer exponents `P - s_k`, possibly negative.
    pub fn homogenizers(&self, degree: u64) -> Vec<i64> {
        let users = self.exponents.len() / self.group_width();
        (0..users)
            .map(|k| degree as i64 - self.degree(k) as i64)
            .collect()
    }
}

/// Number of exponent tuples at a level, `radix^(K(2M-1))`.
pub fn index_count(params: &SchemeParams, level: Level) -> BigUint {
    BigUint::from(level.radix(params.n())).pow(params.l())
}

/// All exponent tuples of a level in lexicographic order (slot 0 most
/// significant).
pub fn enumerate_indices(
    params: &SchemeParams,
    stream: usize,
    level: Level,
    bound: u64,
) -> Result<impl Iterator<Item = ExponentIndex>> {
    let order = params.order();
    if stream >= order {
        return Err(Error::IndexOutOfRange {
            index: stream,
            bound: order,
        });
    }
    let count = index_count(params, level);
    if count > BigUint::from(bound) {
        return Err(Error::EnumerationBound {
            count: count.to_string(),
            bound,
        });
    }
    let radix = level.radix(params.n()) as u32;
    let slots = params.slot_count();
    let mut next = Some(vec![0u32; slots]);
    Ok(std::iter::from_fn(move || {
        let current = next.take()?;
        let mut succ = current.clone();
        let mut carry = true;
        for digit in succ.iter_mut().rev() {
            *digit += 1;
            if *digit < radix {
                carry = false;
                break;
            }
            *digit = 0;
        }
        if !carry {
            next = Some(succ);
        }
        Some(ExponentIndex {
            stream,
            level,
            order,
            exponents: current,
        })
    }))
}

/// Post-SIA coefficients of every decoder under their precoding names.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSet<E> {
    pub users: usize,
    pub order: usize,
    pub dim: usize,
    /// `T_res[k][i]`, the residual coefficient `T_{k,i}`.
    pub residual: Vec<Vec<Diag<E>>>,
    /// `G[k][r]`, the desired coefficient `G_{k,r}`.
    pub desired: Vec<Vec<Diag<E>>>,
    /// `T[k]`, the common coefficient `T_k`.
    pub common: Vec<Diag<E>>,
}

impl<E: Copy + PartialEq> GeneratorSet<E> {
    pub fn generator(&self, slot: Slot) -> &Diag<E> {
        match slot.kind {
            SlotKind::Residual { subspace } => &self.residual[slot.decoder][subspace],
            SlotKind::Desired { subspace } => &self.desired[slot.decoder][subspace],
        }
    }
}

/// Relabels the processed states of all `K` decoders (given in decoder
/// order) into generators. Fails on a zero entry of some `T_k`; such a
/// realization is degenerate and should be resampled.
pub fn extract_generators<R: ScalarRing>(
    processed: &[ProcessedState<R::Elem>],
    ring: &R,
) -> Result<GeneratorSet<R::Elem>> {
    let users = processed.len();
    let first = processed
        .first()
        .ok_or_else(|| Error::InvalidParams("no processed decoders".into()))?;
    let order = first.order();
    if users != order + 2 {
        return Err(Error::InvalidParams(format!(
            "expected K = M + 2 = {} decoders, got {users}",
            order + 2
        )));
    }
    for (k, p) in processed.iter().enumerate() {
        if p.k != k {
            return Err(Error::InvalidParams(format!(
                "decoder {} found at position {k}",
                p.k
            )));
        }
        if p.tk.has_zero_entry(ring) {
            return Err(Error::Degenerate(format!("T_k has a zero entry for decoder {k}")));
        }
    }
    Ok(GeneratorSet {
        users,
        order,
        dim: first.tk.dim(),
        residual: processed
            .iter()
            .map(|p| (0..order).map(|i| p.r(i).clone()).collect())
            .collect(),
        desired: processed
            .iter()
            .map(|p| (0..order).map(|r| p.g(r).clone()).collect())
            .collect(),
        common: processed.iter().map(|p| p.tk.clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasisOptions {
    pub enumeration_bound: u64,
    pub memory_budget: u64,
    /// Diagnostic: a slot (of the basis' stream) whose generator is left
    /// out of every column. Its exponents still count towards `s_k`.
    pub ablated_slot: Option<usize>,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            enumeration_bound: DEFAULT_ENUMERATION_BOUND,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            ablated_slot: None,
        }
    }
}

/// Precoding columns of one stream at one level.
///
/// Each decoder's bracket in the column formula depends only on that
/// decoder's `2M - 1` exponents, so the bracket values are tabulated per
/// decoder and a column is the product of `K` table entries. Columns are
/// materialized when they fit the memory budget and recomputed on demand
/// otherwise.
#[derive(Debug, Clone)]
pub struct PrecodingBasis<E> {
    stream: usize,
    level: Level,
    order: usize,
    radix: u64,
    dim: usize,
    count: usize,
    group_width: usize,
    slots: Vec<Slot>,
    /// `factors[k][sub]`: decoder `k`'s bracket for the sub-tuple with
    /// mixed-radix value `sub`.
    factors: Vec<Vec<Vec<E>>>,
    /// Column-major, `count × dim`.
    columns: Option<Vec<E>>,
    ablated_slot: Option<usize>,
}

impl<E: Copy + PartialEq + Send + Sync> PrecodingBasis<E> {
    pub fn stream(&self) -> usize {
        self.stream
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of columns, `μ_n` or `μ_{n+1}`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn is_materialized(&self) -> bool {
        self.columns.is_some()
    }

    pub fn ablated_slot(&self) -> Option<usize> {
        self.ablated_slot
    }

    /// The seed vector `w`.
    pub fn seed_vector<R: ScalarRing<Elem = E>>(&self, ring: &R) -> Vec<E> {
        vec![ring.one(); self.dim]
    }

    /// Column position of an exponent tuple, or `None` outside the box.
    pub fn position_of(&self, exponents: &[u32]) -> Option<usize> {
        if exponents.len() != self.slots.len() {
            return None;
        }
        let mut pos = 0usize;
        for &e in exponents {
            if e as u64 >= self.radix {
                return None;
            }
            pos = pos * self.radix as usize + e as usize;
        }
        Some(pos)
    }

    pub fn index_at(&self, pos: usize) -> ExponentIndex {
        let mut exponents = vec![0u32; self.slots.len()];
        let mut rest = pos;
        for e in exponents.iter_mut().rev() {
            *e = (rest % self.radix as usize) as u32;
            rest /= self.radix as usize;
        }
        ExponentIndex {
            stream: self.stream,
            level: self.level,
            order: self.order,
            exponents,
        }
    }

    fn group_subs(&self, pos: usize) -> Vec<usize> {
        let per_group = (self.radix as usize).pow(self.group_width as u32);
        let users = self.factors.len();
        let mut subs = vec![0; users];
        let mut rest = pos;
        for s in subs.iter_mut().rev() {
            *s = rest % per_group;
            rest /= per_group;
        }
        subs
    }

    /// Column `pos` (in enumeration order) as a length-`λ` vector.
    pub fn column<R: ScalarRing<Elem = E>>(&self, pos: usize, ring: &R) -> Cow<'_, [E]> {
        assert!(pos < self.count, "column {pos} out of range");
        if let Some(cols) = &self.columns {
            return Cow::Borrowed(&cols[pos * self.dim..(pos + 1) * self.dim]);
        }
        let subs = self.group_subs(pos);
        let mut out = self.factors[0][subs[0]].clone();
        for (k, &sub) in subs.iter().enumerate().skip(1) {
            for (o, &f) in out.iter_mut().zip(&self.factors[k][sub]) {
                *o = ring.mul(*o, f);
            }
        }
        Cow::Owned(out)
    }
}

/// Builds `F^j` at the given level.
pub fn build_basis<R: ScalarRing>(
    generators: &GeneratorSet<R::Elem>,
    params: &SchemeParams,
    stream: usize,
    level: Level,
    ring: &R,
    opts: &BasisOptions,
) -> Result<PrecodingBasis<R::Elem>> {
    let users = params.users();
    let order = params.order();
    if generators.users != users || generators.order != order {
        return Err(Error::InvalidParams(
            "generator set does not match the scheme parameters".into(),
        ));
    }
    if stream >= order {
        return Err(Error::IndexOutOfRange {
            index: stream,
            bound: order,
        });
    }
    let count_big = index_count(params, level);
    if count_big > BigUint::from(opts.enumeration_bound) {
        return Err(Error::EnumerationBound {
            count: count_big.to_string(),
            bound: opts.enumeration_bound,
        });
    }
    let count = usize::try_from(&count_big).expect("bounded by the enumeration bound");
    let dim = generators.dim;
    let radix = level.radix(params.n());
    let degree = params.homogenization_degree();
    let slots = slot_layout(users, order, stream);
    let width = 2 * order - 1;
    if let Some(a) = opts.ablated_slot {
        if a >= slots.len() {
            return Err(Error::IndexOutOfRange {
                index: a,
                bound: slots.len(),
            });
        }
    }

    let per_group = (radix as usize).pow(width as u32);
    let max_exp = radix - 1;
    let mut factors = Vec::with_capacity(users);
    for k in 0..users {
        let group = &slots[k * width..(k + 1) * width];
        // powers[s][e] = gen_s^e
        let powers: Vec<Vec<Diag<R::Elem>>> = group
            .iter()
            .map(|&slot| {
                let g = generators.generator(slot);
                (0..=max_exp).map(|e| g.pow(e, ring)).collect()
            })
            .collect();
        let t_powers: Vec<Diag<R::Elem>> = (0..=degree)
            .map(|e| generators.common[k].pow(e, ring))
            .collect();
        let mut table = Vec::with_capacity(per_group);
        for sub in 0..per_group {
            let mut digits = vec![0u64; width];
            let mut rest = sub as u64;
            for d in digits.iter_mut().rev() {
                *d = rest % radix;
                rest /= radix;
            }
            let s: u64 = digits.iter().sum();
            if s > degree {
                return Err(Error::InvariantViolation(format!(
                    "negative homogenizer exponent {degree} - {s} for decoder {k}"
                )));
            }
            let mut acc = t_powers[(degree - s) as usize].clone();
            for (local, &e) in digits.iter().enumerate() {
                if opts.ablated_slot == Some(k * width + local) {
                    continue;
                }
                acc = acc.compose(&powers[local][e as usize], ring)?;
            }
            table.push(acc.into_entries());
        }
        factors.push(table);
    }

    let bytes = count as u128 * dim as u128 * std::mem::size_of::<R::Elem>() as u128;
    let columns = (bytes <= opts.memory_budget as u128).then(|| materialize(&factors, dim, ring));

    Ok(PrecodingBasis {
        stream,
        level,
        order,
        radix,
        dim,
        count,
        group_width: width,
        slots,
        factors,
        columns,
        ablated_slot: opts.ablated_slot,
    })
}

/// Products of one table entry per decoder, in lexicographic order, as a
/// depth-first walk with prefix products.
fn materialize<R: ScalarRing>(factors: &[Vec<Vec<R::Elem>>], dim: usize, ring: &R) -> Vec<R::Elem> {
    fn walk<R: ScalarRing>(
        factors: &[Vec<Vec<R::Elem>>],
        prefix: &[R::Elem],
        ring: &R,
        out: &mut Vec<R::Elem>,
    ) {
        let Some((head, rest)) = factors.split_first() else {
            out.extend_from_slice(prefix);
            return;
        };
        let mut next = vec![ring.zero(); prefix.len()];
        for f in head {
            for ((n, &p), &x) in next.iter_mut().zip(prefix).zip(f) {
                *n = ring.mul(p, x);
            }
            walk(rest, &next, ring, out);
        }
    }
    let (head, rest) = factors.split_first().expect("at least one decoder");
    let chunks: Vec<Vec<R::Elem>> = head
        .par_iter()
        .map(|f| {
            let mut out = Vec::new();
            walk(rest, f, ring, &mut out);
            out
        })
        .collect();
    let mut all = Vec::with_capacity(chunks.iter().map(Vec::len).sum());
    for c in chunks {
        all.extend(c);
    }
    debug_assert_eq!(all.len() % dim, 0);
    all
}

/// Bases of every stream at both levels.
#[derive(Debug, Clone)]
pub struct StreamBases<E> {
    pub base: Vec<PrecodingBasis<E>>,
    pub next: Vec<PrecodingBasis<E>>,
}

/// Builds `F_n^j` and `F_{n+1}^j` for all `j`. An ablation in `opts`
/// applies to stream `ablated_stream` only.
pub fn build_all_bases<R: ScalarRing>(
    generators: &GeneratorSet<R::Elem>,
    params: &SchemeParams,
    ring: &R,
    opts: &BasisOptions,
    ablated_stream: Option<usize>,
) -> Result<StreamBases<R::Elem>> {
    let plain = BasisOptions {
        ablated_slot: None,
        ..*opts
    };
    let pick = |j: usize| if ablated_stream == Some(j) { opts } else { &plain };
    let order = params.order();
    let base = (0..order)
        .map(|j| build_basis(generators, params, j, Level::Base, ring, pick(j)))
        .collect::<Result<_>>()?;
    let next = (0..order)
        .map(|j| build_basis(generators, params, j, Level::Next, ring, pick(j)))
        .collect::<Result<_>>()?;
    Ok(StreamBases { base, next })
}

/// One alignment condition `gen ∘ F_n^j ⊂ T_k ∘ F_{n+1}^j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub stream: usize,
    pub slot_index: usize,
    pub slot: Slot,
    /// Every shifted index stays in the next-level box with a nonnegative
    /// homogenizer.
    pub combinatorial: bool,
    /// Homogenizer exponents agree decoder by decoder on both sides.
    pub shared_degree: bool,
    /// Column identities hold for every base-level column.
    pub numeric: bool,
    pub columns_checked: usize,
    pub counterexample: Option<Vec<u32>>,
}

impl ConditionResult {
    pub fn passed(&self) -> bool {
        self.combinatorial && self.shared_degree && self.numeric
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub conditions: Vec<ConditionResult>,
}

impl AlignmentReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(ConditionResult::passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &ConditionResult> {
        self.conditions.iter().filter(|c| !c.passed())
    }

    pub fn for_stream(&self, stream: usize) -> impl Iterator<Item = &ConditionResult> {
        self.conditions.iter().filter(move |c| c.stream == stream)
    }
}

fn columns_equal<R: ScalarRing>(a: &[R::Elem], b: &[R::Elem], ring: &R) -> bool {
    if ring.is_exact() {
        return a == b;
    }
    let scale = b.iter().map(|&x| ring.magnitude(x)).fold(0.0, f64::max);
    a.iter()
        .zip(b)
        .all(|(&x, &y)| ring.magnitude(ring.sub(x, y)) <= FLOAT_COLUMN_TOL * scale)
}

/// Checks every condition of every stream, in stream then slot order.
pub fn check_alignment<R: ScalarRing>(
    bases: &StreamBases<R::Elem>,
    generators: &GeneratorSet<R::Elem>,
    params: &SchemeParams,
    ring: &R,
) -> AlignmentReport {
    let degree = params.homogenization_degree();
    let width = 2 * params.order() - 1;
    let jobs: Vec<(usize, usize)> = (0..params.order())
        .flat_map(|j| (0..params.slot_count()).map(move |s| (j, s)))
        .collect();
    let conditions = jobs
        .par_iter()
        .map(|&(j, slot_index)| {
            let base = &bases.base[j];
            let next = &bases.next[j];
            let slot = base.slots()[slot_index];
            let gen = generators.generator(slot);
            let tk = &generators.common[slot.decoder];
            let mut result = ConditionResult {
                stream: j,
                slot_index,
                slot,
                combinatorial: true,
                shared_degree: true,
                numeric: true,
                columns_checked: 0,
                counterexample: None,
            };
            for pos in 0..base.len() {
                let alpha = base.index_at(pos);
                let mut shifted = alpha.exponents.clone();
                shifted[slot_index] += 1;
                let target = next.position_of(&shifted);
                let shifted = ExponentIndex {
                    level: Level::Next,
                    exponents: shifted,
                    ..alpha.clone()
                };
                let lhs_h = alpha.homogenizers(degree);
                let mut rhs_h = shifted.homogenizers(degree);
                let in_box = target.is_some() && rhs_h.iter().all(|&h| h >= 0);
                rhs_h[slot_index / width] += 1;
                let same_degree = lhs_h == rhs_h;
                let numeric = target.is_some_and(|t| {
                    let lhs: Vec<R::Elem> = base
                        .column(pos, ring)
                        .iter()
                        .zip(gen.entries())
                        .map(|(&c, &g)| ring.mul(g, c))
                        .collect();
                    let rhs: Vec<R::Elem> = next
                        .column(t, ring)
                        .iter()
                        .zip(tk.entries())
                        .map(|(&c, &g)| ring.mul(g, c))
                        .collect();
                    columns_equal(&lhs, &rhs, ring)
                });
                result.columns_checked += 1;
                result.combinatorial &= in_box;
                result.shared_degree &= same_degree;
                result.numeric &= numeric;
                if !(in_box && same_degree && numeric) && result.counterexample.is_none() {
                    result.counterexample = Some(alpha.exponents.clone());
                }
            }
            result
        })
        .collect();
    AlignmentReport { conditions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSet;
    use crate::ring::{Fp, PrimeField, RealField};
    use crate::sia::process_all;

    fn field() -> PrimeField {
        PrimeField::default()
    }

    fn setup(users: usize, order: usize, n: u64, seed: u64) -> (SchemeParams, GeneratorSet<Fp>) {
        let params = SchemeParams::new(users, order, n).unwrap();
        let ch = ChannelSet::sample(&params, field(), seed).unwrap();
        let gens = extract_generators(&process_all(&ch).unwrap(), &field()).unwrap();
        (params, gens)
    }

    #[test]
    fn layout_sizes() {
        for order in 1..=4 {
            let users = order + 2;
            for j in 0..order {
                let slots = slot_layout(users, order, j);
                assert_eq!(slots.len(), users * (2 * order - 1));
                assert!(!slots.iter().any(|s| s.kind == SlotKind::Desired { subspace: j }));
            }
        }
    }

    #[test]
    fn enumeration_counts_and_order() {
        let p = SchemeParams::new(3, 1, 1).unwrap();
        let base: Vec<_> = enumerate_indices(&p, 0, Level::Base, 1 << 20).unwrap().collect();
        assert_eq!(base.len(), 1);
        assert_eq!(base[0].exponents, vec![0, 0, 0]);
        let next: Vec<_> = enumerate_indices(&p, 0, Level::Next, 1 << 20).unwrap().collect();
        assert_eq!(next.len(), 8);
        assert_eq!(next[1].exponents, vec![0, 0, 1]);
        assert_eq!(next[7].exponents, vec![1, 1, 1]);

        let p = SchemeParams::new(4, 2, 1).unwrap();
        let mut seen = std::collections::HashSet::new();
        for idx in enumerate_indices(&p, 1, Level::Next, 1 << 20).unwrap() {
            assert!(seen.insert(idx.exponents));
        }
        assert_eq!(seen.len(), 4096);
        assert!(matches!(
            enumerate_indices(&p, 0, Level::Next, 100),
            Err(Error::EnumerationBound { .. })
        ));
    }

    #[test]
    fn alpha_beta_accessors() {
        let idx = ExponentIndex {
            stream: 1,
            level: Level::Next,
            order: 3,
            exponents: (0..25).collect(),
        };
        assert_eq!(idx.alpha(0, 2), 2);
        assert_eq!(idx.beta(0, 0), Some(3));
        assert_eq!(idx.beta(0, 1), None);
        assert_eq!(idx.beta(0, 2), Some(4));
        assert_eq!(idx.alpha(1, 0), 5);
        assert_eq!(idx.degree(1), 5 + 6 + 7 + 8 + 9);
    }

    #[test]
    fn single_column_at_smallest_configuration() {
        let f = field();
        let (p, gens) = setup(3, 1, 1, 4);
        let basis = build_basis(&gens, &p, 0, Level::Base, &f, &BasisOptions::default()).unwrap();
        assert_eq!(basis.len(), 1);
        let want = gens.common[0]
            .compose(&gens.common[1], &f)
            .unwrap()
            .compose(&gens.common[2], &f)
            .unwrap();
        assert_eq!(basis.column(0, &f).as_ref(), want.entries());
        assert_eq!(basis.seed_vector(&f), vec![Fp(1); 9]);
    }

    #[test]
    fn columns_follow_the_formula() {
        let f = field();
        let (p, gens) = setup(3, 1, 2, 6);
        let degree = p.homogenization_degree();
        for level in [Level::Base, Level::Next] {
            let basis = build_basis(&gens, &p, 0, level, &f, &BasisOptions::default()).unwrap();
            assert!(basis.is_materialized());
            for (pos, idx) in enumerate_indices(&p, 0, level, 1 << 20).unwrap().enumerate() {
                let mut want = DiagonalOperator::identity(p.lambda().unwrap(), &f);
                for (s, &slot) in basis.slots().iter().enumerate() {
                    want = want.compose(&gens.generator(slot).pow(idx.exponents[s] as u64, &f), &f).unwrap();
                }
                for k in 0..3 {
                    want = want.compose(&gens.common[k].pow(degree - idx.degree(k), &f), &f).unwrap();
                }
                assert_eq!(basis.column(pos, &f).as_ref(), want.entries());
                assert_eq!(basis.position_of(&idx.exponents), Some(pos));
                assert_eq!(basis.index_at(pos), idx);
            }
        }
    }

    #[test]
    fn lazy_columns_match_materialized() {
        let f = field();
        let (p, gens) = setup(4, 2, 1, 2);
        let full = build_basis(&gens, &p, 1, Level::Next, &f, &BasisOptions::default()).unwrap();
        let opts = BasisOptions {
            memory_budget: 1024,
            ..BasisOptions::default()
        };
        let lazy = build_basis(&gens, &p, 1, Level::Next, &f, &opts).unwrap();
        assert!(full.is_materialized() && !lazy.is_materialized());
        assert_eq!(full.len(), 4096);
        for pos in [0, 1, 77, 2048, 4095] {
            assert_eq!(full.column(pos, &f), lazy.column(pos, &f));
        }
    }

    #[test]
    fn conditions_hold_exactly() {
        let f = field();
        for (users, order, n) in [(3, 1, 1), (3, 1, 2), (4, 2, 1)] {
            let (p, gens) = setup(users, order, n, 11);
            let bases = build_all_bases(&gens, &p, &f, &BasisOptions::default(), None).unwrap();
            let report = check_alignment(&bases, &gens, &p, &f);
            assert_eq!(report.conditions.len(), order * users * (2 * order - 1));
            assert!(report.passed(), "{:?}", report.failed().next());
        }
    }

    #[test]
    fn conditions_hold_over_the_reals() {
        let p = SchemeParams::new(3, 1, 2).unwrap();
        let ch = ChannelSet::sample(&p, RealField, 3).unwrap();
        let gens = extract_generators(&process_all(&ch).unwrap(), &RealField).unwrap();
        let bases = build_all_bases(&gens, &p, &RealField, &BasisOptions::default(), None).unwrap();
        assert!(check_alignment(&bases, &gens, &p, &RealField).passed());
    }

    #[test]
    fn ablation_fails_exactly_the_named_condition() {
        let f = field();
        let (p, gens) = setup(4, 2, 1, 5);
        for (stream, slot) in [(0, 0), (1, 7), (0, 11)] {
            let opts = BasisOptions {
                ablated_slot: Some(slot),
                ..BasisOptions::default()
            };
            let bases = build_all_bases(&gens, &p, &f, &opts, Some(stream)).unwrap();
            let report = check_alignment(&bases, &gens, &p, &f);
            let failed: Vec<_> = report.failed().map(|c| (c.stream, c.slot_index)).collect();
            assert_eq!(failed, vec![(stream, slot)]);
            let bad = report.failed().next().unwrap();
            assert!(bad.combinatorial && bad.shared_degree && !bad.numeric);
            assert_eq!(bad.counterexample, Some(vec![0; 12]));
        }
    }

    #[test]
    fn zero_common_coefficient_is_degenerate() {
        let f = field();
        let p = SchemeParams::new(3, 1, 1).unwrap();
        let ch = ChannelSet::sample(&p, f, 1).unwrap();
        let mut processed = process_all(&ch).unwrap();
        let mut e = processed[1].tk.clone().into_entries();
        e[3] = Fp(0);
        processed[1].tk = DiagonalOperator::from_entries(e).unwrap();
        assert!(matches!(
            extract_generators(&processed, &f),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn generators_relabel_processed_coefficients() {
        let f = field();
        let p = SchemeParams::new(3, 1, 1).unwrap();
        let ch = ChannelSet::sample(&p, f, 2).unwrap();
        let gens = extract_generators(&process_all(&ch).unwrap(), &f).unwrap();
        // M = 1: SIA is the identity, so generators are raw channels.
        for k in 0..3 {
            assert_eq!(&gens.common[k], ch.h(k, k + 2));
            assert_eq!(&gens.desired[k][0], ch.h(k, k));
            assert_eq!(&gens.residual[k][0], ch.h(k, k + 1));
        }
    }
}
