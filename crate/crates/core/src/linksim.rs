//! Finite-SNR link simulation.
//!
//! Every transmitter sends `M` streams of `μ_n` symbols through the shared
//! precoders `F_n^j` (columns normalized to unit norm), receivers add unit
//! variance noise, and decoder `k` applies its SIA combination followed by a
//! zero-forcing projection of subspace `m` onto the orthogonal complement of
//! `span(T_k ∘ F_{n+1}^1, …, T_k ∘ F_{n+1}^M)`. What remains is a `μ_n`-stream
//! channel carrying `S_k^m` in colored noise, whose log-det rate is computed
//! exactly from the propagated noise covariance.
//!
//! Rates are in bits per extension symbol. Over the real ring they carry the
//! usual factor ½, so the sum-rate slope is compared against half the DoF.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{substream, ChannelSet};
use crate::error::{Error, Result};
use crate::params::{rational_to_f64, SchemeParams};
use crate::precoding::{build_all_bases, extract_generators, BasisOptions, GeneratorSet, PrecodingBasis};
use crate::ring::{DiagonalOperator, FloatRing};
use crate::sia::{process_all, ProcessedState};

/// Largest `λ_n` simulated unless the caller raises it.
pub const DEFAULT_LINK_BOUND: usize = 1 << 10;

/// High-SNR window used for slope fitting.
pub const DEFAULT_SNR_DB: [f64; 5] = [40.0, 45.0, 50.0, 55.0, 60.0];

pub const DEFAULT_REALIZATIONS: usize = 20;

/// Relative singular-value floor below which an effective channel counts as
/// rank deficient.
pub const RANK_DEFICIENCY_TOL: f64 = 1e-12;

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Decoder-side model of one processed subspace.
#[derive(Debug, Clone)]
struct SubspaceModel {
    /// `μ_n × λ`, rows orthonormal, annihilating the interference span.
    projector: CMat,
    /// `μ_n × μ_n` effective channel of `S_k^m` (unit-norm precoder columns).
    heff: CMat,
    /// Projected noise covariance.
    noise: CMat,
    condition: f64,
    rank_deficient: bool,
}

#[derive(Debug, Clone)]
struct DecoderModel {
    receivers: Vec<usize>,
    /// `combination[m][r]` as complex diagonals.
    combination: Vec<Vec<Vec<Complex64>>>,
    subspaces: Vec<SubspaceModel>,
}

/// Everything a link run needs, derived once from a channel realization.
#[derive(Debug, Clone)]
pub struct LinkSetup<R: FloatRing> {
    params: SchemeParams,
    channels: ChannelSet<R>,
    processed: Vec<ProcessedState<R::Elem>>,
    generators: GeneratorSet<R::Elem>,
    /// `F_n^j` with unit-norm columns, `λ × μ_n`.
    precoders: Vec<CMat>,
    decoders: Vec<DecoderModel>,
}

/// Symbols and transmit vectors of one channel use of the extended channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitFrame {
    /// `symbols[i][j]` is `S_i^j`, unit variance per entry.
    pub symbols: Vec<Vec<CVec>>,
    /// `X_i = sqrt(p) Σ_j F_n^j S_i^j`.
    pub transmit: Vec<CVec>,
    /// Power per stream symbol.
    pub stream_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveFrame {
    pub receive: Vec<CVec>,
}

fn complex_diag<R: FloatRing>(op: &DiagonalOperator<R::Elem>, ring: &R) -> Vec<Complex64> {
    op.entries().iter().map(|&e| ring.to_complex(e)).collect()
}

fn hadamard(d: &[Complex64], v: &CVec) -> CVec {
    CVec::from_iterator(v.len(), d.iter().zip(v.iter()).map(|(a, b)| a * b))
}

fn basis_matrix<R: FloatRing>(basis: &PrecodingBasis<R::Elem>, coeff: Option<&[Complex64]>, ring: &R) -> CMat {
    let mut m = CMat::zeros(basis.dim(), basis.len());
    for pos in 0..basis.len() {
        let col = basis.column(pos, ring);
        let mut v = CVec::from_iterator(col.len(), col.iter().map(|&e| ring.to_complex(e)));
        if let Some(c) = coeff {
            v = hadamard(c, &v);
        }
        let norm = v.norm();
        m.set_column(pos, &(v / Complex64::from(norm)));
    }
    m
}

/// Rows of `Q^H` beyond the rank of `a`: an orthonormal basis (as rows) of
/// the orthogonal complement of the column span.
fn complement_rows(a: &CMat) -> CMat {
    let (rows, cols) = a.shape();
    let qr = a.clone().qr();
    let mut qh = CMat::identity(rows, rows);
    qr.q_tr_mul(&mut qh);
    qh.rows(cols, rows - cols).into_owned()
}

fn log2_det_hpd(m: CMat) -> Option<f64> {
    let chol = m.cholesky()?;
    let l = chol.l_dirty();
    Some(2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() / std::f64::consts::LN_2)
}

impl<R: FloatRing> LinkSetup<R> {
    /// Runs SIA, builds the bases and the per-subspace receivers.
    pub fn new(params: &SchemeParams, channels: ChannelSet<R>, link_bound: usize) -> Result<Self> {
        let lambda = params.require_lambda()?;
        if lambda > link_bound {
            return Err(Error::MaterializationBound {
                lambda: params.lambda_n().to_string(),
                bound: link_bound,
            });
        }
        if channels.dim() != lambda || channels.users() != params.users() {
            return Err(Error::DimensionMismatch(channels.dim(), lambda));
        }
        let ring = channels.ring().clone();
        let processed = process_all(&channels)?;
        let generators = extract_generators(&processed, &ring)?;
        let bases = build_all_bases(&generators, params, &ring, &BasisOptions::default(), None)?;
        let order = params.order();
        let precoders: Vec<CMat> = bases.base.iter().map(|b| basis_matrix(b, None, &ring)).collect();

        let decoders = processed
            .iter()
            .map(|state| {
                let k = state.k;
                let tk = complex_diag(&generators.common[k], &ring);
                let blocks: Vec<CMat> = bases.next.iter().map(|b| basis_matrix(b, Some(&tk), &ring)).collect();
                let interference = CMat::from_columns(
                    &blocks.iter().flat_map(|b| b.column_iter().map(|c| c.into_owned())).collect::<Vec<_>>(),
                );
                let projector = complement_rows(&interference);
                let combination: Vec<Vec<Vec<Complex64>>> = state
                    .combination()
                    .iter()
                    .map(|row| row.iter().map(|op| complex_diag(op, &ring)).collect())
                    .collect();
                let subspaces = (0..order)
                    .map(|m| {
                        let g = complex_diag(&generators.desired[k][m], &ring);
                        let desired = CMat::from_fn(lambda, precoders[m].ncols(), |t, c| g[t] * precoders[m][(t, c)]);
                        let heff = &projector * desired;
                        let variance: Vec<f64> = (0..lambda)
                            .map(|t| combination[m].iter().map(|a| a[t].norm_sqr()).sum())
                            .collect();
                        let weighted = CMat::from_fn(lambda, projector.nrows(), |t, c| {
                            (projector[(c, t)] * variance[t]).conj()
                        });
                        let noise = &projector * weighted;
                        let sv = heff.clone().singular_values();
                        let (smax, smin) = (sv.max(), sv.min());
                        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
                        SubspaceModel {
                            projector: projector.clone(),
                            heff,
                            noise,
                            condition,
                            rank_deficient: !(smin > RANK_DEFICIENCY_TOL * smax),
                        }
                    })
                    .collect();
                DecoderModel {
                    receivers: state.receivers.clone(),
                    combination,
                    subspaces,
                }
            })
            .collect();

        Ok(LinkSetup {
            params: params.clone(),
            channels,
            processed,
            generators,
            precoders,
            decoders,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn channels(&self) -> &ChannelSet<R> {
        &self.channels
    }

    pub fn processed(&self) -> &[ProcessedState<R::Elem>] {
        &self.processed
    }

    pub fn generators(&self) -> &GeneratorSet<R::Elem> {
        &self.generators
    }

    fn lambda(&self) -> usize {
        self.channels.dim()
    }

    fn mu_n(&self) -> usize {
        self.precoders[0].ncols()
    }

    /// Per-stream symbol power giving average transmit power `rho` per
    /// extension symbol.
    pub fn stream_power(&self, rho: f64) -> f64 {
        rho * self.lambda() as f64 / (self.params.order() * self.mu_n()) as f64
    }

    /// `log2 det`-rates carry a factor ½ over the real ring.
    pub fn rate_scale(&self) -> f64 {
        if self.channels.ring().is_complex() {
            1.0
        } else {
            0.5
        }
    }

    fn sample_vec<G: Rng + ?Sized>(&self, len: usize, rng: &mut G) -> CVec {
        let complex = self.channels.ring().is_complex();
        CVec::from_fn(len, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            if complex {
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            } else {
                Complex64::new(re, 0.0)
            }
        })
    }

    /// Draws unit-variance symbols for every user and precodes them.
    pub fn transmit<G: Rng + ?Sized>(&self, rho: f64, rng: &mut G) -> TransmitFrame {
        let users = self.params.users();
        let order = self.params.order();
        let symbols: Vec<Vec<CVec>> = (0..users)
            .map(|_| (0..order).map(|_| self.sample_vec(self.mu_n(), rng)).collect())
            .collect();
        self.precode(symbols, rho)
    }

    /// `X_i = sqrt(p) Σ_j F_n^j S_i^j` for given symbols.
    pub fn precode(&self, symbols: Vec<Vec<CVec>>, rho: f64) -> TransmitFrame {
        let p = self.stream_power(rho);
        let amp = Complex64::from(p.sqrt());
        let transmit = symbols
            .iter()
            .map(|streams| {
                streams
                    .iter()
                    .zip(&self.precoders)
                    .fold(CVec::zeros(self.lambda()), |acc, (s, f)| acc + f * s)
                    * amp
            })
            .collect();
        TransmitFrame {
            symbols,
            transmit,
            stream_power: p,
        }
    }

    /// `Y_j = Σ_i H[j][i] X_i + Z_j`; noise is skipped when `rng` is `None`.
    pub fn receive<G: Rng + ?Sized>(&self, frame: &TransmitFrame, rng: Option<&mut G>) -> ReceiveFrame {
        let ring = self.channels.ring();
        let users = self.params.users();
        let mut receive: Vec<CVec> = (0..users)
            .map(|j| {
                (0..users).fold(CVec::zeros(self.lambda()), |acc, i| {
                    acc + hadamard(&complex_diag(self.channels.h(j, i), ring), &frame.transmit[i])
                })
            })
            .collect();
        if let Some(rng) = rng {
            for y in &mut receive {
                *y += self.sample_vec(self.lambda(), rng);
            }
        }
        ReceiveFrame { receive }
    }

    /// SIA-processed subspaces of decoder `k`.
    pub fn process(&self, k: usize, frame: &ReceiveFrame) -> Vec<CVec> {
        let dec = &self.decoders[k];
        dec.combination
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&dec.receivers)
                    .fold(CVec::zeros(self.lambda()), |acc, (a, &r)| acc + hadamard(a, &frame.receive[r]))
            })
            .collect()
    }

    /// Zero-forcing projection of processed subspace `m` of decoder `k`.
    pub fn project(&self, k: usize, m: usize, v: &CVec) -> CVec {
        &self.decoders[k].subspaces[m].projector * v
    }

    /// Effective `μ_n × μ_n` channel of subspace `m` at decoder `k`.
    pub fn effective_channel(&self, k: usize, m: usize) -> &CMat {
        &self.decoders[k].subspaces[m].heff
    }

    pub fn condition_number(&self, k: usize, m: usize) -> f64 {
        self.decoders[k].subspaces[m].condition
    }

    /// Achievable rate of one subspace in bits per channel use of the
    /// extended channel; `None` for a rank-deficient effective channel.
    fn subspace_rate(&self, sub: &SubspaceModel, p: f64) -> Option<f64> {
        if sub.rank_deficient {
            return None;
        }
        if p == 0.0 {
            return Some(0.0);
        }
        let chol = sub.noise.clone().cholesky()?;
        let w = chol.l_dirty().solve_lower_triangular(&sub.heff)?;
        let mu = w.ncols();
        let gram = CMat::identity(mu, mu) + w.adjoint() * &w * Complex64::from(p);
        log2_det_hpd(gram).map(|r| r.max(0.0) * self.rate_scale())
    }

    /// Mean-squared ZF error per stream symbol predicted from the noise
    /// covariance, `tr(H⁻¹ N H⁻ᴴ) / (p μ_n)`.
    fn predicted_mse(&self, sub: &SubspaceModel, p: f64) -> Option<f64> {
        let inv = sub.heff.clone().try_inverse()?;
        let cov = &inv * &sub.noise * inv.adjoint();
        Some(cov.trace().re / (p * sub.heff.ncols() as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub rho: f64,
    /// Per-user rate, bits per extension symbol.
    pub user_rates: Vec<f64>,
    pub sum_rate: f64,
    /// Empirical ZF symbol MSE over the noise realizations.
    pub empirical_mse: Option<f64>,
    pub predicted_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedSubspace {
    pub decoder: usize,
    pub subspace: usize,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub realizations: usize,
    /// `K M μ_n / λ_n`, scaled by ½ over the real ring.
    pub target_slope: f64,
    pub rate_scale: f64,
    pub max_condition: f64,
    pub flagged: Vec<FlaggedSubspace>,
}

/// Rates at every `rho` (linear SNR per extension symbol) plus a ZF error
/// check over `realizations` noisy frames per point.
pub fn run_link<R: FloatRing>(setup: &LinkSetup<R>, rhos: &[f64], realizations: usize, seed: u64) -> Result<RateReport> {
    if let Some(bad) = rhos.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::InvalidParams(format!("SNR must be finite and nonnegative, got {bad}")));
    }
    let users = setup.params.users();
    let lambda = setup.lambda() as f64;
    let points = rhos
        .par_iter()
        .enumerate()
        .map(|(idx, &rho)| {
            let p = setup.stream_power(rho);
            let user_rates: Vec<f64> = setup
                .decoders
                .iter()
                .map(|d| d.subspaces.iter().filter_map(|s| setup.subspace_rate(s, p)).sum::<f64>() / lambda)
                .collect();
            let sum_rate = user_rates.iter().sum();
            let (mut empirical_mse, mut predicted_mse) = (None, None);
            if p > 0.0 && realizations > 0 {
                let mut err = 0.0;
                let mut count = 0usize;
                let predictions: Vec<f64> = setup
                    .decoders
                    .iter()
                    .flat_map(|d| d.subspaces.iter().filter(|s| !s.rank_deficient))
                    .filter_map(|s| setup.predicted_mse(s, p))
                    .collect();
                if !predictions.is_empty() {
                    predicted_mse = Some(predictions.iter().sum::<f64>() / predictions.len() as f64);
                }
                for r in 0..realizations {
                    let mut rng = substream(seed, &[1, idx as u64, r as u64]);
                    let frame = setup.transmit(rho, &mut rng);
                    let rx = setup.receive(&frame, Some(&mut rng));
                    for k in 0..users {
                        let processed = setup.process(k, &rx);
                        for (m, sub) in setup.decoders[k].subspaces.iter().enumerate() {
                            if sub.rank_deficient {
                                continue;
                            }
                            let Some(est) = sub.heff.clone().lu().solve(&setup.project(k, m, &processed[m])) else {
                                continue;
                            };
                            let est = est / Complex64::from(p.sqrt());
                            err += (est - &frame.symbols[k][m]).norm_squared();
                            count += sub.heff.ncols();
                        }
                    }
                }
                if count > 0 {
                    empirical_mse = Some(err / count as f64);
                }
            }
            RatePoint {
                rho,
                user_rates,
                sum_rate,
                empirical_mse,
                predicted_mse,
            }
        })
        .collect();

    let mut flagged = Vec::new();
    let mut max_condition: f64 = 0.0;
    for (k, dec) in setup.decoders.iter().enumerate() {
        for (m, sub) in dec.subspaces.iter().enumerate() {
            if sub.rank_deficient {
                flagged.push(FlaggedSubspace {
                    decoder: k,
                    subspace: m,
                    condition: sub.condition,
                });
            } else {
                max_condition = max_condition.max(sub.condition);
            }
        }
    }
    Ok(RateReport {
        points,
        realizations,
        target_slope: rational_to_f64(&setup.params.total_dof()) * setup.rate_scale(),
        rate_scale: setup.rate_scale(),
        max_condition,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Least-squares slope of the sum rate against `log2(rho)`; needs at least
/// three points spanning 20 dB or more.
pub fn estimate_dof_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints(format!("{} SNR points, need at least 3", points.len())));
    }
    if points.iter().any(|&(rho, _)| !(rho > 0.0 && rho.is_finite())) {
        return Err(Error::InsufficientPoints("slope fitting needs positive SNR values".into()));
    }
    let xs: Vec<f64> = points.iter().map(|&(rho, _)| rho.log2()).collect();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span_db = (hi - lo) * 10.0 * std::f64::consts::LOG10_2;
    if span_db < 20.0 - 1e-9 {
        return Err(Error::InsufficientPoints(format!("SNR span {span_db:.3} dB, need at least 20 dB")));
    }
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residual = (xs
        .iter()
        .zip(points)
        .map(|(x, p)| (p.1 - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
    })
}

impl RateReport {
    pub fn fit(&self) -> Result<SlopeFit> {
        estimate_dof_slope(&self.points.iter().map(|p| (p.rho, p.sum_rate)).collect::<Vec<_>>())
    }
}

/// Largest relative energy left after projection when only interference is
/// sent: for every decoder `k` and subspace `m`, `S_k^m` is zeroed, all
/// other symbols are random, noise is off, and the amplitude ratio
/// `‖Q_m v_m‖ / ‖v_m‖` of the processed subspace is measured.
pub fn interference_leakage<R: FloatRing>(setup: &LinkSetup<R>, seed: u64) -> f64 {
    let users = setup.params.users();
    let order = setup.params.order();
    let jobs: Vec<(usize, usize)> = (0..users).flat_map(|k| (0..order).map(move |m| (k, m))).collect();
    jobs.par_iter()
        .map(|&(k, m)| {
            let mut rng = substream(seed, &[2, k as u64, m as u64]);
            let mut frame = setup.transmit(1.0, &mut rng);
            frame.symbols[k][m].fill(Complex64::from(0.0));
            let frame = setup.precode(frame.symbols, 1.0);
            let rx = setup.receive::<rand_chacha::ChaCha8Rng>(&frame, None);
            let v = &setup.process(k, &rx)[m];
            setup.project(k, m, v).norm() / v.norm()
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{ComplexField, RealField};
    use proptest::prelude::*;

    fn setup<R: FloatRing>(ring: R, n: u64, seed: u64) -> LinkSetup<R> {
        let p = SchemeParams::new(3, 1, n).unwrap();
        let ch = ChannelSet::sample(&p, ring, seed).unwrap();
        LinkSetup::new(&p, ch, DEFAULT_LINK_BOUND).unwrap()
    }

    #[test]
    fn projector_rows_are_orthonormal() {
        let s = setup(ComplexField, 2, 4);
        let sub = &s.decoders[1].subspaces[0];
        let q = &sub.projector;
        assert_eq!(q.shape(), (8, 35));
        let gram = q * q.adjoint();
        assert!((gram - CMat::identity(8, 8)).norm() < 1e-12);
    }

    #[test]
    fn noiseless_reception_matches_the_processed_model() {
        let s = setup(ComplexField, 1, 2);
        let mut rng = substream(9, &[0]);
        let frame = s.transmit(1.0, &mut rng);
        let rx = s.receive::<rand_chacha::ChaCha8Rng>(&frame, None);
        // Y_j = Σ_i H[j][i] X_i
        let ring = ComplexField;
        for j in 0..3 {
            let mut expect = CVec::zeros(9);
            for i in 0..3 {
                expect += hadamard(&complex_diag(s.channels.h(j, i), &ring), &frame.transmit[i]);
            }
            assert!((&rx.receive[j] - expect).norm() <= 1e-12 * rx.receive[j].norm());
        }
        // Processed subspace = G∘X_k + T∘X_interferer + R∘X_residual.
        for k in 0..3 {
            let st = &s.processed[k];
            let v = &s.process(k, &rx)[0];
            let model = hadamard(&complex_diag(st.g(0), &ring), &frame.transmit[k])
                + hadamard(&complex_diag(&st.tk, &ring), &frame.transmit[st.interferer_order[0]])
                + hadamard(&complex_diag(st.r(0), &ring), &frame.transmit[st.interferer_order[1]]);
            assert!((v - model).norm() <= 1e-12 * v.norm());
        }
    }

    #[test]
    fn interference_is_nulled() {
        for seed in 0..5 {
            for n in [1, 2] {
                let s = setup(ComplexField, n, seed);
                let leak = interference_leakage(&s, seed);
                assert!(leak <= 1e-10, "seed {seed} n {n}: leakage {leak:e}");
            }
        }
        let s = setup(RealField, 1, 3);
        assert!(interference_leakage(&s, 3) <= 1e-10);
    }

    #[test]
    fn projection_ignores_interferer_symbols() {
        let s = setup(ComplexField, 1, 11);
        let mut rng = substream(5, &[0]);
        let a = s.transmit(1.0, &mut rng);
        let mut symbols = s.transmit(1.0, &mut rng).symbols;
        // Same desired symbols of user 0, fresh interference.
        symbols[0] = a.symbols[0].clone();
        let b = s.precode(symbols, 1.0);
        let quiet = |f: &TransmitFrame| s.receive::<rand_chacha::ChaCha8Rng>(f, None);
        let ya = s.project(0, 0, &s.process(0, &quiet(&a))[0]);
        let yb = s.project(0, 0, &s.process(0, &quiet(&b))[0]);
        assert!((&ya - &yb).norm() <= 1e-10 * ya.norm());
    }

    #[test]
    fn effective_channels_are_invertible() {
        let mut ok = 0;
        for seed in 0..100 {
            let s = setup(ComplexField, 1, seed);
            if (0..3).all(|k| !s.decoders[k].subspaces[0].rank_deficient && s.condition_number(k, 0).is_finite()) {
                ok += 1;
            }
        }
        assert!(ok >= 99, "{ok}/100");
    }

    #[test]
    fn zero_power_gives_zero_rates() {
        let s = setup(ComplexField, 1, 0);
        let r = run_link(&s, &[0.0], 5, 0).unwrap();
        assert_eq!(r.points[0].sum_rate, 0.0);
        assert!(r.points[0].user_rates.iter().all(|&x| x == 0.0));
        assert!(r.points[0].empirical_mse.is_none());
        assert!(run_link(&s, &[-1.0], 5, 0).is_err());
    }

    #[test]
    fn slope_matches_the_dof_at_high_snr() {
        let rhos: Vec<f64> = DEFAULT_SNR_DB.iter().map(|&d| db_to_linear(d)).collect();
        for seed in 0..5 {
            let s = setup(ComplexField, 1, seed);
            let r = run_link(&s, &rhos, 4, seed).unwrap();
            assert!(r.points.iter().all(|p| p.user_rates.iter().all(|&x| x >= 0.0)));
            let fit = r.fit().unwrap();
            assert!((fit.slope / r.target_slope - 1.0).abs() < 0.1, "seed {seed}: {fit:?}");
        }
        let s = setup(RealField, 1, 1);
        let r = run_link(&s, &rhos, 4, 1).unwrap();
        assert_eq!(r.rate_scale, 0.5);
        assert!((r.fit().unwrap().slope / r.target_slope - 1.0).abs() < 0.1);
    }

    #[test]
    fn empirical_zf_error_matches_prediction() {
        let s = setup(ComplexField, 1, 6);
        let r = run_link(&s, &[db_to_linear(20.0)], 2000, 6).unwrap();
        let pt = &r.points[0];
        let ratio = pt.empirical_mse.unwrap() / pt.predicted_mse.unwrap();
        assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn link_runs_are_deterministic() {
        let s = setup(ComplexField, 1, 3);
        let rhos = [1e4, 1e5, 1e6];
        assert_eq!(run_link(&s, &rhos, 3, 8).unwrap(), run_link(&s, &rhos, 3, 8).unwrap());
    }

    #[test]
    fn oversized_links_are_refused() {
        let p = SchemeParams::new(3, 1, 2).unwrap();
        let ch = ChannelSet::sample(&p, ComplexField, 0).unwrap();
        assert!(matches!(LinkSetup::new(&p, ch, 16), Err(Error::MaterializationBound { .. })));
    }

    #[test]
    fn slope_fit_on_a_constructed_line() {
        let pts: Vec<(f64, f64)> = [1e4, 1e5, 1e6].iter().map(|&r: &f64| (r, 2.0 * r.log2() + 5.0)).collect();
        let fit = estimate_dof_slope(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 5.0).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
        assert!(estimate_dof_slope(&pts[..1]).is_err());
        let narrow: Vec<(f64, f64)> = [1e4, 2e4, 5e4].iter().map(|&r| (r, 1.0)).collect();
        assert!(matches!(estimate_dof_slope(&narrow), Err(Error::InsufficientPoints(_))));
    }

    proptest! {
        #[test]
        fn slope_fit_tolerates_bounded_perturbation(
            slope in -3.0f64..3.0,
            noise in proptest::collection::vec(-0.1f64..0.1, 5),
        ) {
            let pts: Vec<(f64, f64)> = DEFAULT_SNR_DB
                .iter()
                .zip(&noise)
                .map(|(&db, e)| {
                    let rho = db_to_linear(db);
                    (rho, slope * rho.log2() + 1.0 + e)
                })
                .collect();
            let fit = estimate_dof_slope(&pts).unwrap();
            prop_assert!((fit.slope - slope).abs() < 0.05);
        }
    }
}
