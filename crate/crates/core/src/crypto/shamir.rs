//! Threshold secret sharing over [`Fp`] with Lagrange reconstruction at 0.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};

use super::field::Fp;
use super::CryptoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub x: u64,
    pub y: Fp,
}

/// Splits `secret` with a random degree `t-1` polynomial; share `j` is the
/// evaluation at `x = j` for `j = 1..=n`.
pub fn shamir_split<R: RngCore + CryptoRng + ?Sized>(
    secret: Fp,
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Share>, CryptoError> {
    if t < 1 || t > n {
        return Err(CryptoError::SharingParams { t, n });
    }
    let mut coeffs = Vec::with_capacity(t);
    coeffs.push(secret);
    coeffs.extend((1..t).map(|_| Fp::random(rng)));
    Ok((1..=n as u64)
        .map(|x| {
            let xf = Fp::from_u64(x);
            // Horner
            let y = coeffs.iter().rev().fold(Fp::ZERO, |acc, c| acc * xf + *c);
            Share { x, y }
        })
        .collect())
}

/// Interpolates the first `t` shares at `x = 0`.
pub fn lagrange_reconstruct(shares: &[Share], t: usize) -> Result<Fp, CryptoError> {
    if t < 1 {
        return Err(CryptoError::SharingParams { t, n: shares.len() });
    }
    if shares.len() < t {
        return Err(CryptoError::TooFewShares {
            needed: t,
            got: shares.len(),
        });
    }
    let used = &shares[..t];
    let mut seen = BTreeSet::new();
    for s in used {
        if s.x == 0 || !seen.insert(s.x) {
            return Err(CryptoError::DuplicateShare(s.x));
        }
    }
    let mut acc = Fp::ZERO;
    for (j, sj) in used.iter().enumerate() {
        let xj = Fp::from_u64(sj.x);
        let mut num = Fp::ONE;
        let mut den = Fp::ONE;
        for (m, sm) in used.iter().enumerate() {
            if m != j {
                let xm = Fp::from_u64(sm.x);
                num = num * xm;
                den = den * (xm - xj);
            }
        }
        let coeff = num * den.invert().expect("distinct x coordinates");
        acc = acc + sj.y * coeff;
    }
    Ok(acc)
}
