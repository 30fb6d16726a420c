//! Cryptographic building blocks: the hash-chained level keys, an AEAD for
//! record segments, secp256k1 recoverable signatures, an ECIES envelope for
//! key delivery, and the attribute-gated encryption engine built on
//! threshold secret sharing.
//!
//! Every randomized operation takes its random source as an argument so a
//! seeded generator makes whole simulations reproducible.

pub mod abe;
pub mod asym;
pub mod codec;
pub mod field;
pub mod hash;
pub mod keychain;
pub mod shamir;
pub mod sig;
pub mod sym;

use thiserror::Error;

pub use abe::{
    abe_decrypt, abe_encrypt, abe_keygen, abe_setup, AbeCiphertext, AbeMasterKey,
    AbePublicParams, AbeSecretKey,
};
pub use asym::{asym_decrypt, asym_encrypt};
pub use codec::CodecError;
pub use field::Fp;
pub use hash::{hash, hash_concat, kdf, Digest};
pub use keychain::{derive_key_chain, KeyChain};
pub use shamir::{lagrange_reconstruct, shamir_split, Share};
pub use sig::{recover, sign_timestamped, staff_message, Address, KeyPair, PublicKey, Signature};
pub use sym::{sym_decrypt, sym_encrypt, SymKey};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    /// Ciphertext failed authentication (wrong key or tampered bytes).
    #[error("authentication failed")]
    Authentication,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("invalid signature")]
    InvalidSignature,
    #[error("invalid key: {0}")]
    InvalidKey(&'static str),
    #[error("key chain length must be at least 1")]
    EmptyChain,
    #[error("unsupported security parameter {0}; expected 128 or 256")]
    UnsupportedSecurity(u32),
    #[error("attribute set must not be empty")]
    EmptyAttributes,
    #[error("no public token for attribute {0:?}")]
    UnknownAttribute(String),
    #[error("invalid policy: {0}")]
    Policy(#[from] crate::policy::PolicyError),
    /// Policy not satisfied or a share failed to open.
    #[error("decryption failed")]
    Decryption,
    #[error("need at least {needed} shares, got {got}")]
    TooFewShares { needed: usize, got: usize },
    #[error("duplicate share x coordinate {0}")]
    DuplicateShare(u64),
    #[error("invalid sharing parameters t={t}, n={n}")]
    SharingParams { t: usize, n: usize },
}

impl From<CodecError> for CryptoError {
    fn from(e: CodecError) -> Self {
        CryptoError::Malformed(e.to_string())
    }
}
