//! Cooperation sets and random symbol-extended channels.
//!
//! User, transmitter and receiver indices are 0-based and cyclic: index
//! arithmetic is taken modulo `K`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::SchemeParams;
use crate::ring::{DiagonalOperator, ScalarRing};

/// The receivers jointly decoding one message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CooperationSet {
    pub owner: usize,
    pub members: Vec<usize>,
}

/// Receivers `i, i+1, …, i+M-1`, wrapped modulo `K`.
pub fn cooperation_set(owner: usize, users: usize, order: usize) -> Result<CooperationSet> {
    if owner >= users {
        return Err(Error::IndexOutOfRange {
            index: owner,
            bound: users,
        });
    }
    if order == 0 || order > users {
        return Err(Error::InvalidParams(format!(
            "cooperation order {order} must be in 1..={users}"
        )));
    }
    Ok(CooperationSet {
        owner,
        members: (0..order).map(|d| (owner + d) % users).collect(),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A generator keyed by a seed and a path of tags, so that independent
/// pieces of work draw from fixed substreams whatever the schedule.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let key = tags
        .iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)));
    ChaCha8Rng::seed_from_u64(key)
}

/// Every `H[j][i]` (transmitter `i` to receiver `j`) for one realization.
#[derive(Debug, Clone)]
pub struct ChannelSet<R: ScalarRing> {
    ring: R,
    users: usize,
    dim: usize,
    seed: Option<u64>,
    h: Vec<Vec<DiagonalOperator<R::Elem>>>,
}

impl<R: ScalarRing> ChannelSet<R> {
    /// Samples a fully connected channel at the scheme's extension length.
    pub fn sample(params: &SchemeParams, ring: R, seed: u64) -> Result<Self> {
        let dim = params.require_lambda()?;
        Self::sample_with_dim(params.users(), dim, ring, seed)
    }

    /// Samples with an explicit extension length. SIA itself does not care
    /// about `λ`, so its checks run at small lengths.
    pub fn sample_with_dim(users: usize, dim: usize, ring: R, seed: u64) -> Result<Self> {
        if users < 3 || dim == 0 {
            return Err(Error::InvalidParams(format!(
                "need at least 3 users and a positive extension, got K = {users}, λ = {dim}"
            )));
        }
        let mut rng = substream(seed, &[0]);
        let h = (0..users)
            .map(|_| {
                (0..users)
                    .map(|_| {
                        let e = (0..dim).map(|_| ring.sample_generic(&mut rng)).collect();
                        DiagonalOperator::from_entries(e).expect("dim > 0")
                    })
                    .collect()
            })
            .collect();
        Ok(ChannelSet {
            ring,
            users,
            dim,
            seed: Some(seed),
            h,
        })
    }

    /// Every channel is the identity operator. A fully degenerate
    /// realization used as a negative control.
    pub fn identity(users: usize, dim: usize, ring: R) -> Result<Self> {
        let id = DiagonalOperator::identity(dim, &ring);
        Self::from_operators(ring, vec![vec![id; users]; users])
    }

    /// Wraps explicit operators, `h[j][i]` being transmitter `i` to receiver `j`.
    pub fn from_operators(ring: R, h: Vec<Vec<DiagonalOperator<R::Elem>>>) -> Result<Self> {
        let users = h.len();
        if users < 3 || h.iter().any(|row| row.len() != users) {
            return Err(Error::InvalidParams("channel array must be K × K with K >= 3".into()));
        }
        let dim = h[0][0].dim();
        for op in h.iter().flatten() {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch(op.dim(), dim));
            }
        }
        Ok(ChannelSet {
            ring,
            users,
            dim,
            seed: None,
            h,
        })
    }

    pub fn ring(&self) -> &R {
        &self.ring
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Cooperation order `M = K - 2`.
    pub fn order(&self) -> usize {
        self.users - 2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `H[receiver][transmitter]`, indices taken modulo `K`.
    pub fn h(&self, receiver: usize, transmitter: usize) -> &DiagonalOperator<R::Elem> {
        &self.h[receiver % self.users][transmitter % self.users]
    }

    pub fn operators(&self) -> &[Vec<DiagonalOperator<R::Elem>>] {
        &self.h
    }
}
