//! Scheme parameters: symbol-extension lengths and DoF accounting.
//!
//! For `K = M + 2` users with cooperation order `M` and extension index `n`:
//!
//! ```text
//! l    = K (2M - 1)
//! μ_n  = n^l,  μ_{n+1} = (n + 1)^l
//! λ_n  = μ_n + M μ_{n+1}
//! P    = (2M - 1) n
//! DoF  = K M μ_n / λ_n  →  K M / (M + 1)
//! ```
//!
//! Everything is computed with unbounded integers; `λ_n` outgrows machine
//! words already at `(5, 3, 2)`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};

/// Largest extension length that is materialized by default.
pub const DEFAULT_MATERIALIZATION_BOUND: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeParams {
    users: usize,
    order: usize,
    n: u64,
    l: u32,
    mu_n: BigUint,
    mu_n1: BigUint,
    lambda_n: BigUint,
    homogenization_degree: u64,
    materialization_bound: usize,
}

impl SchemeParams {
    /// Parameters with the default materialization bound.
    pub fn new(users: usize, order: usize, n: u64) -> Result<Self> {
        Self::with_bound(users, order, n, DEFAULT_MATERIALIZATION_BOUND)
    }

    pub fn with_bound(users: usize, order: usize, n: u64, bound: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidParams(format!(
                "cooperation order M must be >= 1, got {order}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidParams(format!(
                "extension index n must be >= 1, got {n}"
            )));
        }
        if users != order + 2 {
            return Err(Error::InvalidParams(format!(
                "the scheme requires K = M + 2, got K = {users}, M = {order}"
            )));
        }
        let l = u32::try_from(users * (2 * order - 1))
            .map_err(|_| Error::InvalidParams("exponent l overflows".into()))?;
        let mu_n = BigUint::from(n).pow(l);
        let mu_n1 = BigUint::from(n + 1).pow(l);
        let lambda_n = &mu_n + BigUint::from(order) * &mu_n1;
        Ok(SchemeParams {
            users,
            order,
            n,
            l,
            mu_n,
            mu_n1,
            lambda_n,
            homogenization_degree: (2 * order as u64 - 1) * n,
            materialization_bound: bound,
        })
    }

    /// `K`
    pub fn users(&self) -> usize {
        self.users
    }

    /// `M`
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn mu_n(&self) -> &BigUint {
        &self.mu_n
    }

    pub fn mu_n1(&self) -> &BigUint {
        &self.mu_n1
    }

    pub fn lambda_n(&self) -> &BigUint {
        &self.lambda_n
    }

    /// `P = (2M - 1) n`, shared by both precoding levels.
    pub fn homogenization_degree(&self) -> u64 {
        self.homogenization_degree
    }

    /// Exponent slots per precoding column, `K (2M - 1)`.
    pub fn slot_count(&self) -> usize {
        self.l as usize
    }

    pub fn materialization_bound(&self) -> usize {
        self.materialization_bound
    }

    /// `true` when `λ_n` is within the materialization bound.
    pub fn is_materializable(&self) -> bool {
        self.lambda().is_some()
    }

    /// `λ_n` as a machine integer when it is within the materialization bound.
    pub fn lambda(&self) -> Option<usize> {
        self.lambda_n
            .to_usize()
            .filter(|&l| l <= self.materialization_bound)
    }

    pub fn require_lambda(&self) -> Result<usize> {
        self.lambda().ok_or_else(|| Error::MaterializationBound {
            lambda: self.lambda_n.to_string(),
            bound: self.materialization_bound,
        })
    }

    /// `μ_n` and `μ_{n+1}` as machine integers, once `λ_n` is known to fit.
    pub fn stream_counts(&self) -> Result<(usize, usize)> {
        self.require_lambda()?;
        Ok((
            self.mu_n.to_usize().expect("μ_n ≤ λ_n"),
            self.mu_n1.to_usize().expect("μ_{n+1} ≤ λ_n"),
        ))
    }

    /// Total achieved DoF `K M μ_n / λ_n`.
    pub fn total_dof(&self) -> BigRational {
        BigRational::new(
            (BigUint::from(self.users * self.order) * &self.mu_n).into(),
            self.lambda_n.clone().into(),
        )
    }

    /// The limit `K M / (M + 1)`.
    pub fn dof_limit(&self) -> BigRational {
        dof_limit(self.users, self.order)
    }
}

pub fn dof_limit(users: usize, order: usize) -> BigRational {
    BigRational::new(
        BigUint::from(users * order).into(),
        BigUint::from(order + 1).into(),
    )
}

/// Decimal value of an exact rational.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact `numer/denom` string for reports.
pub fn rational_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
