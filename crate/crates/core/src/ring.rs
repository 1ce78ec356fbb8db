//! Scalar rings and the diagonal-operator algebra.
//!
//! Every channel coefficient, every SIA combination coefficient and every
//! precoding column lives in one of three commutative rings:
//!
//! * [`RealField`]: IEEE-754 binary64 reals,
//! * [`ComplexField`]: binary64 complex numbers,
//! * [`PrimeField`]: integers modulo a prime `p` (default `2^61 - 1`).
//!
//! The prime field is the exact ring. Random nonzero field elements stand in
//! for generic channel draws, so zero tests and ranks carry no tolerance.
//!
//! A symbol-extended scalar channel is a `λ × λ` diagonal matrix; it is
//! stored as its `λ` diagonal entries in [`DiagonalOperator`].

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// The Mersenne prime `2^61 - 1`, the default exact modulus.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RingKind {
    RealBinary64,
    ComplexBinary64,
    PrimeField(u64),
}

impl fmt::Display for RingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RingKind::RealBinary64 => write!(f, "real-binary64"),
            RingKind::ComplexBinary64 => write!(f, "complex-binary64"),
            RingKind::PrimeField(p) => write!(f, "prime-field({p})"),
        }
    }
}

/// A commutative ring with a generic sampler.
///
/// Elements are plain `Copy` values; the ring object carries whatever context
/// the arithmetic needs (the modulus, for the prime field).
pub trait ScalarRing: Clone + Send + Sync + fmt::Debug + 'static {
    type Elem: Copy + PartialEq + Send + Sync + fmt::Debug + 'static;

    fn kind(&self) -> RingKind;

    /// `true` for the prime field, where equality and zero tests are exact.
    fn is_exact(&self) -> bool;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn sub(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn mul(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn neg(&self, a: Self::Elem) -> Self::Elem;
    fn inv(&self, a: Self::Elem) -> Option<Self::Elem>;
    fn is_zero(&self, a: Self::Elem) -> bool;

    /// Absolute value for the float rings. Over the prime field this is
    /// `0.0` for zero and `1.0` otherwise.
    fn magnitude(&self, a: Self::Elem) -> f64;

    /// One draw from the ring's stand-in for a continuous channel law.
    fn sample_generic<G: Rng + ?Sized>(&self, rng: &mut G) -> Self::Elem;

    /// Exact decimal for field elements, 17 significant digits for floats.
    fn format(&self, a: Self::Elem) -> String;

    fn pow(&self, a: Self::Elem, mut e: u64) -> Self::Elem {
        let mut base = a;
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            e >>= 1;
            if e > 0 {
                base = self.mul(base, base);
            }
        }
        acc
    }

    /// `dst[t] -= factor * src[t]` over a row slice; the elimination kernel.
    fn sub_scaled(&self, dst: &mut [Self::Elem], factor: Self::Elem, src: &[Self::Elem]) {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = self.sub(*d, self.mul(factor, s));
        }
    }
}

/// Rings whose elements embed into the complex numbers, used by the link
/// simulator.
pub trait FloatRing: ScalarRing {
    fn to_complex(&self, a: Self::Elem) -> Complex64;
    fn is_complex(&self) -> bool;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RealField;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComplexField;

fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Magnitude law shared by both float samplers: uniform on `[0.5, 2]`.
fn sample_magnitude<G: Rng + ?Sized>(rng: &mut G) -> f64 {
    rng.random_range(0.5..=2.0)
}

impl ScalarRing for RealField {
    type Elem = f64;

    fn kind(&self) -> RingKind {
        RingKind::RealBinary64
    }
    fn is_exact(&self) -> bool {
        false
    }
    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        1.0
    }
    #[inline]
    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline]
    fn sub(&self, a: f64, b: f64) -> f64 {
        a - b
    }
    #[inline]
    fn mul(&self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn neg(&self, a: f64) -> f64 {
        -a
    }
    fn inv(&self, a: f64) -> Option<f64> {
        (a != 0.0).then(|| 1.0 / a)
    }
    fn is_zero(&self, a: f64) -> bool {
        a == 0.0
    }
    fn magnitude(&self, a: f64) -> f64 {
        a.abs()
    }
    fn sample_generic<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        let mag = sample_magnitude(rng);
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    }
    fn format(&self, a: f64) -> String {
        format_f64(a)
    }
}

impl FloatRing for RealField {
    fn to_complex(&self, a: f64) -> Complex64 {
        Complex64::new(a, 0.0)
    }
    fn is_complex(&self) -> bool {
        false
    }
}

impl ScalarRing for ComplexField {
    type Elem = Complex64;

    fn kind(&self) -> RingKind {
        RingKind::ComplexBinary64
    }
    fn is_exact(&self) -> bool {
        false
    }
    fn zero(&self) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
    fn one(&self) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }
    #[inline]
    fn add(&self, a: Complex64, b: Complex64) -> Complex64 {
        a + b
    }
    #[inline]
    fn sub(&self, a: Complex64, b: Complex64) -> Complex64 {
        a - b
    }
    #[inline]
    fn mul(&self, a: Complex64, b: Complex64) -> Complex64 {
        a * b
    }
    fn neg(&self, a: Complex64) -> Complex64 {
        -a
    }
    fn inv(&self, a: Complex64) -> Option<Complex64> {
        (a.re != 0.0 || a.im != 0.0).then(|| a.inv())
    }
    fn is_zero(&self, a: Complex64) -> bool {
        a.re == 0.0 && a.im == 0.0
    }
    fn magnitude(&self, a: Complex64) -> f64 {
        a.norm()
    }
    fn sample_generic<G: Rng + ?Sized>(&self, rng: &mut G) -> Complex64 {
        let mag = sample_magnitude(rng);
        let phase = rng.random_range(0.0..TAU);
        Complex64::from_polar(mag, phase)
    }
    fn format(&self, a: Complex64) -> String {
        let sign = if a.im.is_sign_negative() { '-' } else { '+' };
        format!("{}{}{}i", format_f64(a.re), sign, format_f64(a.im.abs()))
    }
}

impl FloatRing for ComplexField {
    fn to_complex(&self, a: Complex64) -> Complex64 {
        a
    }
    fn is_complex(&self) -> bool {
        true
    }
}

/// Element of a prime field, always held in canonical form `0..p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Fp(pub u64);

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Integers modulo a prime `p < 2^63`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    p: u64,
}

impl Default for PrimeField {
    fn default() -> Self {
        PrimeField { p: MERSENNE_61 }
    }
}

impl PrimeField {
    pub fn new(p: u64) -> Result<Self> {
        if p >= 1 << 63 {
            return Err(Error::InvalidParams(format!(
                "modulus {p} must be below 2^63"
            )));
        }
        if !is_prime(p) {
            return Err(Error::InvalidParams(format!("modulus {p} is not prime")));
        }
        Ok(PrimeField { p })
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn elem(&self, v: u64) -> Fp {
        Fp(v % self.p)
    }

    pub fn from_i64(&self, v: i64) -> Fp {
        let r = v.rem_euclid(self.p as i64);
        Fp(r as u64)
    }

    #[inline(always)]
    fn reduce_wide(&self, x: u128) -> u64 {
        if self.p == MERSENNE_61 {
            reduce_mersenne(x)
        } else {
            (x % self.p as u128) as u64
        }
    }
}

impl ScalarRing for PrimeField {
    type Elem = Fp;

    fn kind(&self) -> RingKind {
        RingKind::PrimeField(self.p)
    }
    fn is_exact(&self) -> bool {
        true
    }
    fn zero(&self) -> Fp {
        Fp(0)
    }
    fn one(&self) -> Fp {
        Fp(1)
    }
    #[inline]
    fn add(&self, a: Fp, b: Fp) -> Fp {
        let s = a.0 + b.0;
        Fp(if s >= self.p { s - self.p } else { s })
    }
    #[inline]
    fn sub(&self, a: Fp, b: Fp) -> Fp {
        Fp(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.p - b.0 })
    }
    #[inline]
    fn mul(&self, a: Fp, b: Fp) -> Fp {
        Fp(self.reduce_wide(a.0 as u128 * b.0 as u128))
    }
    fn neg(&self, a: Fp) -> Fp {
        Fp(if a.0 == 0 { 0 } else { self.p - a.0 })
    }
    fn inv(&self, a: Fp) -> Option<Fp> {
        if a.0 == 0 {
            None
        } else {
            Some(self.pow(a, self.p - 2))
        }
    }
    fn is_zero(&self, a: Fp) -> bool {
        a.0 == 0
    }
    fn magnitude(&self, a: Fp) -> f64 {
        if a.0 == 0 {
            0.0
        } else {
            1.0
        }
    }
    fn sample_generic<G: Rng + ?Sized>(&self, rng: &mut G) -> Fp {
        Fp(rng.random_range(1..self.p))
    }
    fn format(&self, a: Fp) -> String {
        a.0.to_string()
    }

    fn sub_scaled(&self, dst: &mut [Fp], factor: Fp, src: &[Fp]) {
        // dst + (p - f) * src, one reduction per entry.
        let nf = self.neg(factor).0 as u128;
        if self.p == MERSENNE_61 {
            for (d, s) in dst.iter_mut().zip(src) {
                d.0 = reduce_mersenne(d.0 as u128 + nf * s.0 as u128);
            }
        } else {
            for (d, s) in dst.iter_mut().zip(src) {
                d.0 = ((d.0 as u128 + nf * s.0 as u128) % self.p as u128) as u64;
            }
        }
    }
}

/// `x mod (2^61 - 1)` for `x < 2^122`.
#[inline(always)]
fn reduce_mersenne(x: u128) -> u64 {
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    // hi < 2^61, so lo + hi < 2^62 and one fold leaves s < 2p.
    let s = lo + hi;
    let s = (s & MERSENNE_61) + (s >> 61);
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A `λ × λ` diagonal matrix over some ring, stored as its diagonal.
///
/// Composition is the entrywise product, so the operators form a commutative
/// ring themselves. All binary operations reject mismatched dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator<E> {
    entries: Vec<E>,
}

impl<E: Copy + PartialEq> DiagonalOperator<E> {
    pub fn from_entries(entries: Vec<E>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParams(
                "diagonal operator needs dimension >= 1".into(),
            ));
        }
        Ok(DiagonalOperator { entries })
    }

    pub fn constant<R: ScalarRing<Elem = E>>(dim: usize, value: E, _ring: &R) -> Self {
        assert!(dim > 0, "diagonal operator needs dimension >= 1");
        DiagonalOperator {
            entries: vec![value; dim],
        }
    }

    pub fn identity<R: ScalarRing<Elem = E>>(dim: usize, ring: &R) -> Self {
        Self::constant(dim, ring.one(), ring)
    }

    pub fn zero<R: ScalarRing<Elem = E>>(dim: usize, ring: &R) -> Self {
        Self::constant(dim, ring.zero(), ring)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[E] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<E> {
        self.entries
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            Err(Error::DimensionMismatch(self.dim(), other.dim()))
        } else {
            Ok(())
        }
    }

    /// Elementwise product `self ∘ other`.
    pub fn compose<R: ScalarRing<Elem = E>>(&self, other: &Self, ring: &R) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip_with(other, |a, b| ring.mul(a, b)))
    }

    /// `alpha ∘ x − beta ∘ y`, the row combination used to cancel an
    /// interferer between two subspaces.
    pub fn linear<R: ScalarRing<Elem = E>>(
        alpha: &Self,
        x: &Self,
        beta: &Self,
        y: &Self,
        ring: &R,
    ) -> Result<Self> {
        alpha.check_dim(x)?;
        alpha.check_dim(beta)?;
        alpha.check_dim(y)?;
        let entries = (0..alpha.dim())
            .map(|t| {
                ring.sub(
                    ring.mul(alpha.entries[t], x.entries[t]),
                    ring.mul(beta.entries[t], y.entries[t]),
                )
            })
            .collect();
        Ok(DiagonalOperator { entries })
    }

    pub fn pow<R: ScalarRing<Elem = E>>(&self, e: u64, ring: &R) -> Self {
        self.map(|a| ring.pow(a, e))
    }

    pub fn neg<R: ScalarRing<Elem = E>>(&self, ring: &R) -> Self {
        self.map(|a| ring.neg(a))
    }

    pub fn add<R: ScalarRing<Elem = E>>(&self, other: &Self, ring: &R) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip_with(other, |a, b| ring.add(a, b)))
    }

    pub fn sub<R: ScalarRing<Elem = E>>(&self, other: &Self, ring: &R) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip_with(other, |a, b| ring.sub(a, b)))
    }

    pub fn is_zero<R: ScalarRing<Elem = E>>(&self, ring: &R) -> bool {
        self.entries.iter().all(|&a| ring.is_zero(a))
    }

    pub fn has_zero_entry<R: ScalarRing<Elem = E>>(&self, ring: &R) -> bool {
        self.entries.iter().any(|&a| ring.is_zero(a))
    }

    pub fn max_magnitude<R: ScalarRing<Elem = E>>(&self, ring: &R) -> f64 {
        self.entries
            .iter()
            .map(|&a| ring.magnitude(a))
            .fold(0.0, f64::max)
    }

    /// Largest entrywise distance `|self_t - other_t|`.
    pub fn max_distance<R: ScalarRing<Elem = E>>(&self, other: &Self, ring: &R) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| ring.magnitude(ring.sub(a, b)))
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        DiagonalOperator {
            entries: self.entries.iter().map(|&a| f(a)).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(E, E) -> E) -> Self {
        DiagonalOperator {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field() -> PrimeField {
        PrimeField::default()
    }

    fn fp_diag(v: &[u64]) -> DiagonalOperator<Fp> {
        DiagonalOperator::from_entries(v.iter().map(|&x| Fp(x)).collect()).unwrap()
    }

    #[test]
    fn primality() {
        assert!(is_prime(MERSENNE_61));
        assert!(is_prime(2));
        assert!(is_prime(1_000_000_007));
        assert!(!is_prime(1));
        assert!(!is_prime(561));
        assert!(!is_prime((1 << 61) + 1));
        assert!(PrimeField::new(12).is_err());
        assert!(PrimeField::new(101).is_ok());
    }

    #[test]
    fn mersenne_reduction_matches_plain_modulus() {
        let f = field();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let a = f.sample_generic(&mut rng);
            let b = f.sample_generic(&mut rng);
            assert_eq!(f.mul(a, b).0, mul_mod(a.0, b.0, MERSENNE_61));
        }
        let top = Fp(MERSENNE_61 - 1);
        assert_eq!(f.mul(top, top).0, 1);
    }

    #[test]
    fn inverse_over_small_and_large_primes() {
        for p in [101u64, 1_000_000_007, MERSENNE_61] {
            let f = PrimeField::new(p).unwrap();
            for v in [1u64, 2, 3, 77, p - 1] {
                let a = f.elem(v);
                assert_eq!(f.mul(a, f.inv(a).unwrap()), f.one());
            }
            assert_eq!(f.inv(Fp(0)), None);
        }
    }

    #[test]
    fn compose_identity_and_small_product() {
        let f = field();
        let b = fp_diag(&[4, 9, 16, 25]);
        let id = DiagonalOperator::identity(4, &f);
        assert_eq!(id.compose(&b, &f).unwrap(), b);
        let x = fp_diag(&[2, 3]);
        let y = fp_diag(&[5, 7]);
        assert_eq!(x.compose(&y, &f).unwrap(), fp_diag(&[10, 21]));
    }

    #[test]
    fn compose_rejects_mixed_dimensions() {
        let f = field();
        let err = fp_diag(&[1, 2]).compose(&fp_diag(&[1, 2, 3]), &f).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch(2, 3));
        assert!(DiagonalOperator::<Fp>::from_entries(vec![]).is_err());
    }

    #[test]
    fn float_compose_is_bitwise_commutative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = ComplexField;
        let r = RealField;
        for _ in 0..1000 {
            let a: Vec<_> = (0..5).map(|_| c.sample_generic(&mut rng)).collect();
            let b: Vec<_> = (0..5).map(|_| c.sample_generic(&mut rng)).collect();
            let a = DiagonalOperator::from_entries(a).unwrap();
            let b = DiagonalOperator::from_entries(b).unwrap();
            let ab = a.compose(&b, &c).unwrap();
            let ba = b.compose(&a, &c).unwrap();
            for (x, y) in ab.entries().iter().zip(ba.entries()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
            let ar = DiagonalOperator::from_entries(vec![r.sample_generic(&mut rng); 3]).unwrap();
            let br = DiagonalOperator::from_entries(vec![r.sample_generic(&mut rng); 3]).unwrap();
            assert_eq!(ar.compose(&br, &r).unwrap(), br.compose(&ar, &r).unwrap());
        }
    }

    #[test]
    fn linear_cancels_and_passes_through() {
        let f = field();
        let x = fp_diag(&[3, 5, 8]);
        let y = fp_diag(&[7, 11, 13]);
        // y ∘ x − x ∘ y vanishes.
        let z = DiagonalOperator::linear(&y, &x, &x, &y, &f).unwrap();
        assert!(z.is_zero(&f));
        let one = DiagonalOperator::identity(3, &f);
        let zero = DiagonalOperator::zero(3, &f);
        assert_eq!(DiagonalOperator::linear(&one, &x, &zero, &y, &f).unwrap(), x);
    }

    #[test]
    fn linear_matches_scalar_recomputation() {
        let f = field();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draw = |rng: &mut ChaCha8Rng| {
            DiagonalOperator::from_entries((0..16).map(|_| f.sample_generic(rng)).collect())
                .unwrap()
        };
        for _ in 0..100 {
            let (a, x, b, y) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let out = DiagonalOperator::linear(&a, &x, &b, &y, &f).unwrap();
            for t in 0..16 {
                let p = MERSENNE_61 as u128;
                let lhs = a.entries()[t].0 as u128 * x.entries()[t].0 as u128 % p;
                let rhs = b.entries()[t].0 as u128 * y.entries()[t].0 as u128 % p;
                let want = (lhs + p - rhs) % p;
                assert_eq!(out.entries()[t].0 as u128, want);
            }
        }
    }

    #[test]
    fn pow_small_cases() {
        let f = field();
        let a = fp_diag(&[2, 3]);
        assert_eq!(a.pow(0, &f), DiagonalOperator::identity(2, &f));
        assert_eq!(a.pow(1, &f), a);
        assert_eq!(a.pow(3, &f), fp_diag(&[8, 27]));
    }

    #[test]
    fn sub_scaled_agrees_with_generic_kernel() {
        let f = field();
        let small = PrimeField::new(1_000_000_007).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for ring in [f, small] {
            let src: Vec<Fp> = (0..64).map(|_| ring.sample_generic(&mut rng)).collect();
            let mut dst: Vec<Fp> = (0..64).map(|_| ring.sample_generic(&mut rng)).collect();
            let factor = ring.sample_generic(&mut rng);
            let want: Vec<Fp> = dst
                .iter()
                .zip(&src)
                .map(|(&d, &s)| ring.sub(d, ring.mul(factor, s)))
                .collect();
            ring.sub_scaled(&mut dst, factor, &src);
            assert_eq!(dst, want);
        }
    }

    #[test]
    fn float_formatting_has_17_significant_digits() {
        assert_eq!(RealField.format(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(
            ComplexField.format(Complex64::new(1.0, -2.0)),
            "1.0000000000000000e0-2.0000000000000000e0i"
        );
        assert_eq!(field().format(Fp(42)), "42");
    }

    fn arb_fp() -> impl Strategy<Value = Fp> {
        (0..MERSENNE_61).prop_map(Fp)
    }

    fn arb_fp_diag(dim: usize) -> impl Strategy<Value = DiagonalOperator<Fp>> {
        proptest::collection::vec(arb_fp(), dim)
            .prop_map(|v| DiagonalOperator::from_entries(v).unwrap())
    }

    proptest! {
        #[test]
        fn field_compose_is_commutative_and_associative(
            a in arb_fp_diag(6), b in arb_fp_diag(6), c in arb_fp_diag(6)
        ) {
            let f = field();
            prop_assert_eq!(a.compose(&b, &f).unwrap(), b.compose(&a, &f).unwrap());
            let left = a.compose(&b.compose(&c, &f).unwrap(), &f).unwrap();
            let right = a.compose(&b, &f).unwrap().compose(&c, &f).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn field_pow_adds_exponents(a in arb_fp_diag(4), e1 in 0u64..200, e2 in 0u64..200) {
            let f = field();
            let lhs = a.pow(e1 + e2, &f);
            let rhs = a.pow(e1, &f).compose(&a.pow(e2, &f), &f).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn float_pow_adds_exponents(
            v in proptest::collection::vec(0.5f64..2.0, 4), e1 in 0u64..=32, e2 in 0u64..=32
        ) {
            let r = RealField;
            let a = DiagonalOperator::from_entries(v).unwrap();
            let lhs = a.pow(e1 + e2, &r);
            let rhs = a.pow(e1, &r).compose(&a.pow(e2, &r), &r).unwrap();
            for (x, y) in lhs.entries().iter().zip(rhs.entries()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs());
            }
        }

        #[test]
        fn complex_pow_adds_exponents(
            mags in proptest::collection::vec(0.5f64..2.0, 3),
            phases in proptest::collection::vec(0.0f64..TAU, 3),
            e1 in 0u64..=32, e2 in 0u64..=32
        ) {
            let c = ComplexField;
            let v = mags.iter().zip(&phases).map(|(&m, &p)| Complex64::from_polar(m, p)).collect();
            let a = DiagonalOperator::from_entries(v).unwrap();
            let lhs = a.pow(e1 + e2, &c);
            let rhs = a.pow(e1, &c).compose(&a.pow(e2, &c), &c).unwrap();
            for (x, y) in lhs.entries().iter().zip(rhs.entries()) {
                prop_assert!((x - y).norm() <= 1e-12 * x.norm());
            }
        }
    }
}
