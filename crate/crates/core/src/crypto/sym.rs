use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::codec::VERSION;
use super::CryptoError;

const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

/// A 256-bit symmetric key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymKey(pub [u8; 32]);

impl SymKey {
    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        SymKey(k)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymKey({}..)", hex::encode(&self.0[..4]))
    }
}

/// ChaCha20-Poly1305 with a fresh random nonce.
///
/// Output layout: `version ‖ nonce[12] ‖ ciphertext ‖ tag[16]`.
pub fn sym_encrypt<R: RngCore + CryptoRng + ?Sized>(
    key: &SymKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    seal(key, &nonce, plaintext, &[])
}

pub fn sym_decrypt(key: &SymKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    open(key, ciphertext, &[])
}

pub(crate) fn seal(key: &SymKey, nonce: &[u8; NONCE_LEN], plaintext: &[u8], aad: &[u8]) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let body = cipher
        .encrypt(
            Nonce::from_slice(nonce),
            chacha20poly1305::aead::Payload { msg: plaintext, aad },
        )
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(1 + NONCE_LEN + body.len());
    out.push(VERSION);
    out.extend_from_slice(nonce);
    out.extend_from_slice(&body);
    out
}

pub(crate) fn open(key: &SymKey, ciphertext: &[u8], aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < 1 + NONCE_LEN + TAG_LEN {
        return Err(CryptoError::Malformed("ciphertext too short".into()));
    }
    if ciphertext[0] != VERSION {
        return Err(CryptoError::Malformed(format!(
            "unsupported version {}",
            ciphertext[0]
        )));
    }
    let nonce = &ciphertext[1..1 + NONCE_LEN];
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    cipher
        .decrypt(
            Nonce::from_slice(nonce),
            chacha20poly1305::aead::Payload {
                msg: &ciphertext[1 + NONCE_LEN..],
                aad,
            },
        )
        .map_err(|_| CryptoError::Authentication)
}
