//! Arithmetic in the prime field of order `p = 2^255 - 19`.
//!
//! Elements are four little-endian 64-bit limbs, always fully reduced.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{CryptoRng, RngCore};

const P: [u64; 4] = [
    0xFFFF_FFFF_FFFF_FFED,
    0xFFFF_FFFF_FFFF_FFFF,
    0xFFFF_FFFF_FFFF_FFFF,
    0x7FFF_FFFF_FFFF_FFFF,
];

// p - 2, the inversion exponent
const P_MINUS_2: [u64; 4] = [
    0xFFFF_FFFF_FFFF_FFEB,
    0xFFFF_FFFF_FFFF_FFFF,
    0xFFFF_FFFF_FFFF_FFFF,
    0x7FFF_FFFF_FFFF_FFFF,
];

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fp([u64; 4]);

impl Fp {
    pub const ZERO: Fp = Fp([0; 4]);
    pub const ONE: Fp = Fp([1, 0, 0, 0]);

    /// The modulus as little-endian bytes.
    pub fn modulus_le_bytes() -> [u8; 32] {
        limbs_to_bytes(&P)
    }

    pub fn from_u64(v: u64) -> Self {
        Fp([v, 0, 0, 0])
    }

    /// Interprets 32 little-endian bytes as an integer and reduces it mod p.
    pub fn from_le_bytes_reduced(bytes: &[u8; 32]) -> Self {
        let mut limbs = [0u64; 4];
        for (i, limb) in limbs.iter_mut().enumerate() {
            *limb = u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
        Fp(reduce(limbs, 0))
    }

    /// Accepts only canonical encodings (value < p).
    pub fn from_le_bytes_canonical(bytes: &[u8; 32]) -> Option<Self> {
        let v = Self::from_le_bytes_reduced(bytes);
        (v.to_le_bytes() == *bytes).then_some(v)
    }

    pub fn to_le_bytes(&self) -> [u8; 32] {
        limbs_to_bytes(&self.0)
    }

    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Self::from_le_bytes_reduced(&b)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn square(&self) -> Self {
        *self * *self
    }

    fn pow_limbs(&self, exp: &[u64; 4]) -> Self {
        let mut acc = Fp::ONE;
        for limb in exp.iter().rev() {
            for bit in (0..64).rev() {
                acc = acc.square();
                if (limb >> bit) & 1 == 1 {
                    acc = acc * *self;
                }
            }
        }
        acc
    }

    pub fn pow(&self, exp: u64) -> Self {
        self.pow_limbs(&[exp, 0, 0, 0])
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn invert(&self) -> Option<Self> {
        (!self.is_zero()).then(|| self.pow_limbs(&P_MINUS_2))
    }
}

fn limbs_to_bytes(limbs: &[u64; 4]) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (i, limb) in limbs.iter().enumerate() {
        out[i * 8..i * 8 + 8].copy_from_slice(&limb.to_le_bytes());
    }
    out
}

fn geq_p(v: &[u64; 4]) -> bool {
    for i in (0..4).rev() {
        if v[i] != P[i] {
            return v[i] > P[i];
        }
    }
    true
}

fn sub_p(v: [u64; 4]) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut borrow = 0u64;
    for i in 0..4 {
        let (d1, b1) = v[i].overflowing_sub(P[i]);
        let (d2, b2) = d1.overflowing_sub(borrow);
        out[i] = d2;
        borrow = (b1 | b2) as u64;
    }
    out
}

/// Reduces `v + top * 2^256` using `2^256 = 38 (mod p)`.
fn reduce(mut v: [u64; 4], mut top: u64) -> [u64; 4] {
    while top != 0 {
        let mut carry = top as u128 * 38;
        for limb in v.iter_mut() {
            if carry == 0 {
                break;
            }
            let s = *limb as u128 + carry;
            *limb = s as u64;
            carry = s >> 64;
        }
        top = carry as u64;
    }
    while geq_p(&v) {
        v = sub_p(v);
    }
    v
}

impl Add for Fp {
    type Output = Fp;

    fn add(self, rhs: Fp) -> Fp {
        let mut out = [0u64; 4];
        let mut carry = 0u128;
        #[allow(clippy::needless_range_loop)]
        for i in 0..4 {
            let s = self.0[i] as u128 + rhs.0[i] as u128 + carry;
            out[i] = s as u64;
            carry = s >> 64;
        }
        Fp(reduce(out, carry as u64))
    }
}

impl Neg for Fp {
    type Output = Fp;

    fn neg(self) -> Fp {
        if self.is_zero() {
            return self;
        }
        let mut out = [0u64; 4];
        let mut borrow = 0u64;
        for i in 0..4 {
            let (d1, b1) = P[i].overflowing_sub(self.0[i]);
            let (d2, b2) = d1.overflowing_sub(borrow);
            out[i] = d2;
            borrow = (b1 | b2) as u64;
        }
        Fp(out)
    }
}

impl Sub for Fp {
    type Output = Fp;

    fn sub(self, rhs: Fp) -> Fp {
        self + (-rhs)
    }
}

impl Mul for Fp {
    type Output = Fp;

    fn mul(self, rhs: Fp) -> Fp {
        let mut wide = [0u64; 8];
        for i in 0..4 {
            let mut carry = 0u128;
            for j in 0..4 {
                let t = wide[i + j] as u128 + self.0[i] as u128 * rhs.0[j] as u128 + carry;
                wide[i + j] = t as u64;
                carry = t >> 64;
            }
            wide[i + 4] = carry as u64;
        }
        // lo + 38 * hi
        let mut folded = [0u64; 4];
        let mut carry = 0u128;
        for i in 0..4 {
            let t = wide[i] as u128 + wide[i + 4] as u128 * 38 + carry;
            folded[i] = t as u64;
            carry = t >> 64;
        }
        Fp(reduce(folded, carry as u64))
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut be = self.to_le_bytes();
        be.reverse();
        write!(f, "Fp(0x{})", hex::encode(be))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn modulus() -> BigUint {
        (BigUint::from(1u8) << 255) - BigUint::from(19u8)
    }

    fn big(x: &Fp) -> BigUint {
        BigUint::from_bytes_le(&x.to_le_bytes())
    }

    fn random_big(rng: &mut ChaCha20Rng) -> BigUint {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        BigUint::from_bytes_le(&b) % modulus()
    }

    fn from_big(v: &BigUint) -> Fp {
        let mut b = v.to_bytes_le();
        b.resize(32, 0);
        Fp::from_le_bytes_canonical(&b.try_into().unwrap()).unwrap()
    }

    #[test]
    fn matches_bigint_oracle_on_random_instances() {
        let p = modulus();
        let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
        for _ in 0..100 {
            let (a, b) = (random_big(&mut rng), random_big(&mut rng));
            let (fa, fb) = (from_big(&a), from_big(&b));
            assert_eq!(big(&(fa + fb)), (&a + &b) % &p);
            assert_eq!(big(&(fa - fb)), (&a + &p - &b) % &p);
            assert_eq!(big(&(fa * fb)), (&a * &b) % &p);
            if a != BigUint::from(0u8) {
                let inv = fa.invert().unwrap();
                assert_eq!(big(&inv), a.modpow(&(&p - 2u8), &p));
                assert_eq!(fa * inv, Fp::ONE);
            }
        }
    }

    #[test]
    fn reduction_of_unreduced_inputs() {
        let p = modulus();
        let all_ones = [0xFFu8; 32];
        let v = Fp::from_le_bytes_reduced(&all_ones);
        assert_eq!(big(&v), BigUint::from_bytes_le(&all_ones) % &p);
        assert!(Fp::from_le_bytes_canonical(&all_ones).is_none());
        assert!(Fp::from_le_bytes_reduced(&Fp::modulus_le_bytes()).is_zero());
    }

    #[test]
    fn edge_values() {
        let minus_one = -Fp::ONE;
        assert_eq!(minus_one + Fp::ONE, Fp::ZERO);
        assert_eq!(minus_one * minus_one, Fp::ONE);
        assert!(Fp::ZERO.invert().is_none());
        assert_eq!(Fp::from_u64(7).pow(3), Fp::from_u64(343));
    }
}
