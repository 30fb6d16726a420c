//! ECIES-style envelope to a secp256k1 public key: ephemeral ECDH, a
//! hashed shared secret, and ChaCha20-Poly1305 for the payload.
//!
//! Layout: `version ‖ ephemeral_pub[33] ‖ aead(nonce ‖ body ‖ tag)`.

use k256::ecdh::diffie_hellman;
use k256::elliptic_curve::sec1::ToEncodedPoint;
use k256::{PublicKey as CurvePoint, SecretKey};
use rand::{CryptoRng, RngCore};

use super::codec::VERSION;
use super::hash::kdf;
use super::sig::{KeyPair, PublicKey};
use super::sym::{self, SymKey};
use super::CryptoError;

const POINT_LEN: usize = 33;

fn envelope_key(shared_x: &[u8], ephemeral: &[u8], recipient: &[u8]) -> SymKey {
    SymKey(kdf("ehrchain/ecies/v1", &[shared_x, ephemeral, recipient]))
}

pub fn asym_encrypt<R: RngCore + CryptoRng + ?Sized>(
    recipient: &PublicKey,
    payload: &[u8],
    rng: &mut R,
) -> Vec<u8> {
    let ephemeral = SecretKey::random(&mut RngAdapter(rng));
    let eph_pub = ephemeral.public_key().to_encoded_point(true);
    let recipient_point: CurvePoint = (*recipient.inner()).into();
    let shared = diffie_hellman(ephemeral.to_nonzero_scalar(), recipient_point.as_affine());
    let key = envelope_key(
        shared.raw_secret_bytes(),
        eph_pub.as_bytes(),
        &recipient.to_sec1(),
    );
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let sealed = sym::seal(&key, &nonce, payload, eph_pub.as_bytes());
    let mut out = Vec::with_capacity(1 + POINT_LEN + sealed.len());
    out.push(VERSION);
    out.extend_from_slice(eph_pub.as_bytes());
    out.extend_from_slice(&sealed);
    out
}

pub fn asym_decrypt(recipient: &KeyPair, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < 1 + POINT_LEN || ciphertext[0] != VERSION {
        return Err(CryptoError::Malformed("bad envelope header".into()));
    }
    let eph_bytes = &ciphertext[1..1 + POINT_LEN];
    let eph = CurvePoint::from_sec1_bytes(eph_bytes)
        .map_err(|_| CryptoError::Malformed("bad ephemeral point".into()))?;
    let secret = SecretKey::from_bytes(&recipient.secret_bytes().into())
        .map_err(|_| CryptoError::InvalidKey("scalar out of range"))?;
    let shared = diffie_hellman(secret.to_nonzero_scalar(), eph.as_affine());
    let key = envelope_key(
        shared.raw_secret_bytes(),
        eph_bytes,
        &recipient.public().to_sec1(),
    );
    sym::open(&key, &ciphertext[1 + POINT_LEN..], eph_bytes)
}

/// Lets `?Sized` generators feed APIs that take `impl CryptoRngCore`.
pub(crate) struct RngAdapter<'a, R: ?Sized>(pub &'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

impl<R: CryptoRng + ?Sized> CryptoRng for RngAdapter<'_, R> {}
