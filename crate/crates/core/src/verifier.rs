//! Decodability checks and DoF accounting.
//!
//! For decoder `k` the desired streams are recoverable when every subspace
//! `j` satisfies
//!
//! ```text
//! rank [ G_{k,j} F_n^j | T_k F_{n+1}^1 | … | T_k F_{n+1}^M ] = λ_n
//! ```
//!
//! which is the per-subspace reduction of the block matrix over all `M`
//! subspaces ([`assemble_full_matrix`]).

use std::ops::RangeInclusive;
use std::time::Instant;

use num_bigint::BigUint;
use num_rational::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, RankPolicy};
use crate::params::{dof_limit, rational_string, rational_to_f64, SchemeParams};
use crate::precoding::{GeneratorSet, StreamBases};
use crate::ring::ScalarRing;

fn check_budget<E>(rows: usize, cols: usize, budget: u64) -> Result<()> {
    let needed = rows as u128 * cols as u128 * std::mem::size_of::<E>() as u128;
    if needed > budget as u128 {
        return Err(Error::MemoryBudget { needed, budget });
    }
    Ok(())
}

fn check_decoder<E>(k: usize, generators: &GeneratorSet<E>) -> Result<()> {
    if k >= generators.users {
        return Err(Error::IndexOutOfRange {
            index: k,
            bound: generators.users,
        });
    }
    Ok(())
}

/// Writes `coeff ∘ column` for every column of `basis` into `m`, starting at
/// column `col0` and row `row0`. Returns the next free column.
fn write_block<R: ScalarRing>(
    m: &mut DenseMatrix<R::Elem>,
    basis: &crate::precoding::PrecodingBasis<R::Elem>,
    coeff: &[R::Elem],
    row0: usize,
    col0: usize,
    ring: &R,
) -> usize {
    let mut scratch = vec![ring.zero(); basis.dim()];
    for pos in 0..basis.len() {
        let col = basis.column(pos, ring);
        for ((s, &c), &g) in scratch.iter_mut().zip(col.iter()).zip(coeff) {
            *s = ring.mul(g, c);
        }
        m.write_column(col0 + pos, row0, &scratch);
    }
    col0 + basis.len()
}

/// The `λ × λ` condition matrix of decoder `k`, subspace `j`:
/// `[G[k][j]∘F_n^j | T[k]∘F_{n+1}^1 | … | T[k]∘F_{n+1}^M]`.
pub fn assemble_condition<R: ScalarRing>(
    k: usize,
    j: usize,
    bases: &StreamBases<R::Elem>,
    generators: &GeneratorSet<R::Elem>,
    ring: &R,
    memory_budget: u64,
) -> Result<DenseMatrix<R::Elem>> {
    check_decoder(k, generators)?;
    if j >= generators.order {
        return Err(Error::IndexOutOfRange {
            index: j,
            bound: generators.order,
        });
    }
    let dim = generators.dim;
    let cols = bases.base[j].len() + bases.next.iter().map(|b| b.len()).sum::<usize>();
    check_budget::<R::Elem>(dim, cols, memory_budget)?;
    let mut m = DenseMatrix::filled(dim, cols, ring.zero())?;
    let mut c = write_block(&mut m, &bases.base[j], generators.desired[k][j].entries(), 0, 0, ring);
    for next in &bases.next {
        c = write_block(&mut m, next, generators.common[k].entries(), 0, c, ring);
    }
    debug_assert_eq!(c, cols);
    Ok(m)
}

/// The `Mλ × Mλ` block matrix: desired blocks `G[k][i]∘F_n^i` on the block
/// diagonal, then for every subspace its interference group
/// `T[k]∘F_{n+1}^{1..M}`.
pub fn assemble_full_matrix<R: ScalarRing>(
    k: usize,
    bases: &StreamBases<R::Elem>,
    generators: &GeneratorSet<R::Elem>,
    ring: &R,
    memory_budget: u64,
) -> Result<DenseMatrix<R::Elem>> {
    check_decoder(k, generators)?;
    let order = generators.order;
    let dim = generators.dim;
    let per_group: usize = bases.next.iter().map(|b| b.len()).sum();
    let cols = bases.base.iter().map(|b| b.len()).sum::<usize>() + order * per_group;
    check_budget::<R::Elem>(order * dim, cols, memory_budget)?;
    let mut m = DenseMatrix::filled(order * dim, cols, ring.zero())?;
    let mut c = 0;
    for (i, base) in bases.base.iter().enumerate() {
        c = write_block(&mut m, base, generators.desired[k][i].entries(), i * dim, c, ring);
    }
    for i in 0..order {
        for next in &bases.next {
            c = write_block(&mut m, next, generators.common[k].entries(), i * dim, c, ring);
        }
    }
    debug_assert_eq!(c, cols);
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceRank {
    pub subspace: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub required: usize,
    pub policy: RankPolicy,
    #[serde(skip)]
    pub elapsed_secs: f64,
}

impl SubspaceRank {
    pub fn passed(&self) -> bool {
        self.rank == self.required
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub decoder: usize,
    pub subspaces: Vec<SubspaceRank>,
    pub passed: bool,
}

/// Ranks of all `M` condition matrices of decoder `k`.
pub fn check_rank_conditions<R: ScalarRing>(
    k: usize,
    bases: &StreamBases<R::Elem>,
    generators: &GeneratorSet<R::Elem>,
    ring: &R,
    policy: RankPolicy,
    memory_budget: u64,
) -> Result<RankReport> {
    let mut subspaces = Vec::with_capacity(generators.order);
    for j in 0..generators.order {
        let start = Instant::now();
        let m = assemble_condition(k, j, bases, generators, ring, memory_budget)?;
        let (rows, cols) = (m.rows(), m.cols());
        let rank = m.into_rank(ring, policy)?;
        subspaces.push(SubspaceRank {
            subspace: j,
            rows,
            cols,
            rank,
            required: generators.dim,
            policy,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
    }
    let passed = subspaces.iter().all(SubspaceRank::passed);
    Ok(RankReport {
        decoder: k,
        subspaces,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofRow {
    pub n: u64,
    pub mu_n: BigUint,
    pub mu_n1: BigUint,
    pub lambda_n: BigUint,
    pub total: BigRational,
}

impl DofRow {
    pub fn total_decimal(&self) -> f64 {
        rational_to_f64(&self.total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofReport {
    pub users: usize,
    pub order: usize,
    pub rows: Vec<DofRow>,
    pub limit: BigRational,
}

impl DofReport {
    pub fn limit_decimal(&self) -> f64 {
        rational_to_f64(&self.limit)
    }

    /// CSV with columns `n, mu_n, mu_n1, lambda_n, dof_total, dof_limit`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mu_n,mu_n1,lambda_n,dof_total,dof_limit\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.16e},{:.16e}\n",
                r.n,
                r.mu_n,
                r.mu_n1,
                r.lambda_n,
                r.total_decimal(),
                self.limit_decimal()
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "K": self.users,
            "M": self.order,
            "limit": rational_string(&self.limit),
            "limit_decimal": format!("{:.16e}", self.limit_decimal()),
            "rows": self.rows.iter().map(|r| serde_json::json!({
                "n": r.n,
                "mu_n": r.mu_n.to_string(),
                "mu_n1": r.mu_n1.to_string(),
                "lambda_n": r.lambda_n.to_string(),
                "dof_total": rational_string(&r.total),
                "dof_total_decimal": format!("{:.16e}", r.total_decimal()),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Exact DoF accounting over a range of extension indices.
pub fn dof_table(users: usize, order: usize, n_range: RangeInclusive<u64>) -> Result<DofReport> {
    if n_range.is_empty() || *n_range.start() < 1 {
        return Err(Error::InvalidParams(format!(
            "extension range {n_range:?} must be nonempty and start at 1 or later"
        )));
    }
    let rows = n_range
        .map(|n| {
            let p = SchemeParams::new(users, order, n)?;
            Ok(DofRow {
                n,
                mu_n: p.mu_n().clone(),
                mu_n1: p.mu_n1().clone(),
                lambda_n: p.lambda_n().clone(),
                total: p.total_dof(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DofReport {
        users,
        order,
        rows,
        limit: dof_limit(users, order),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSet;
    use crate::precoding::{build_all_bases, extract_generators, BasisOptions, DEFAULT_MEMORY_BUDGET};
    use crate::ring::{Fp, PrimeField, RealField};
    use crate::sia::process_all;

    fn field() -> PrimeField {
        PrimeField::default()
    }

    fn prepare<R: ScalarRing>(
        params: &SchemeParams,
        channels: &ChannelSet<R>,
    ) -> (GeneratorSet<R::Elem>, StreamBases<R::Elem>) {
        let gens = extract_generators(&process_all(channels).unwrap(), channels.ring()).unwrap();
        let bases = build_all_bases(&gens, params, channels.ring(), &BasisOptions::default(), None).unwrap();
        (gens, bases)
    }

    #[test]
    fn condition_matrix_shapes() {
        let f = field();
        let p = SchemeParams::new(3, 1, 1).unwrap();
        let ch = ChannelSet::sample(&p, f, 1).unwrap();
        let (gens, bases) = prepare(&p, &ch);
        let m = assemble_condition(0, 0, &bases, &gens, &f, DEFAULT_MEMORY_BUDGET).unwrap();
        assert_eq!((m.rows(), m.cols()), (9, 9));
        // First column is G∘F_n, the next eight are T∘F_{n+1}.
        let g = &gens.desired[0][0];
        let col0: Vec<Fp> = bases.base[0].column(0, &f).iter().zip(g.entries()).map(|(&a, &b)| f.mul(a, b)).collect();
        assert_eq!(m.column(0), col0);
        assert!(matches!(
            assemble_condition(0, 0, &bases, &gens, &f, 100),
            Err(Error::MemoryBudget { .. })
        ));
        assert!(assemble_condition(3, 0, &bases, &gens, &f, DEFAULT_MEMORY_BUDGET).is_err());
    }

    #[test]
    fn small_configurations_are_decodable() {
        let f = field();
        for n in [1, 2] {
            let p = SchemeParams::new(3, 1, n).unwrap();
            for seed in 0..10 {
                let ch = ChannelSet::sample(&p, f, seed).unwrap();
                let (gens, bases) = prepare(&p, &ch);
                for k in 0..3 {
                    let r = check_rank_conditions(k, &bases, &gens, &f, RankPolicy::Exact, DEFAULT_MEMORY_BUDGET).unwrap();
                    assert!(r.passed, "n={n} seed={seed} k={k}: {r:?}");
                    let full = assemble_full_matrix(k, &bases, &gens, &f, DEFAULT_MEMORY_BUDGET).unwrap();
                    assert_eq!(full.rows(), p.lambda().unwrap());
                    assert_eq!(full.rank(&f, RankPolicy::Exact).unwrap(), full.rows());
                }
            }
        }
    }

    #[test]
    fn identity_channels_are_not_decodable() {
        let f = field();
        let p = SchemeParams::new(3, 1, 1).unwrap();
        let ch = ChannelSet::identity(3, 9, f).unwrap();
        let (gens, bases) = prepare(&p, &ch);
        let r = check_rank_conditions(0, &bases, &gens, &f, RankPolicy::Exact, DEFAULT_MEMORY_BUDGET).unwrap();
        assert!(!r.passed);
        assert_eq!(r.subspaces[0].rank, 1);
    }

    #[test]
    fn full_matrix_respects_the_memory_budget() {
        let f = field();
        let p = SchemeParams::new(4, 2, 1).unwrap();
        let ch = ChannelSet::sample(&p, f, 3).unwrap();
        let (gens, bases) = prepare(&p, &ch);
        let err = assemble_full_matrix(0, &bases, &gens, &f, 1 << 20).unwrap_err();
        assert!(matches!(err, Error::MemoryBudget { .. }));
    }

    #[test]
    fn float_policy_agrees_at_small_sizes() {
        for n in [1, 2] {
            let p = SchemeParams::new(3, 1, n).unwrap();
            for seed in 0..10 {
                let ch = ChannelSet::sample(&p, RealField, seed).unwrap();
                let (gens, bases) = prepare(&p, &ch);
                let r = check_rank_conditions(0, &bases, &gens, &RealField, RankPolicy::float_default(), DEFAULT_MEMORY_BUDGET).unwrap();
                assert!(r.passed, "n={n} seed={seed}: {r:?}");
            }
        }
    }

    #[test]
    fn dof_table_values() {
        let t = dof_table(4, 2, 1..=3).unwrap();
        assert_eq!(t.limit, BigRational::new(8.into(), 3.into()));
        assert_eq!(t.rows[0].total, BigRational::new(8.into(), 8193.into()));
        assert!((t.rows[0].total_decimal() - 9.766e-4).abs() < 1e-6);
        assert!(t.rows.windows(2).all(|w| w[0].total < w[1].total));
        let t = dof_table(5, 3, 1..=2).unwrap();
        assert_eq!(t.limit, BigRational::new(15.into(), 4.into()));
        assert_eq!(t.limit_decimal(), 3.75);
        assert!(dof_table(5, 2, 1..=2).is_err());
        let csv = dof_table(3, 1, 1..=2).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("n,mu_n,mu_n1,lambda_n,dof_total,dof_limit"));
        assert!(lines.next().unwrap().starts_with("1,1,8,9,3.3333333333333331e-1,"));
    }
}
