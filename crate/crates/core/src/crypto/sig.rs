//! secp256k1 ECDSA with public-key recovery, timestamped request signing and
//! 20-byte account addresses.

use std::fmt;
use std::str::FromStr;

use k256::ecdsa::{RecoveryId, Signature as EcdsaSignature, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::codec::{Reader, Writer};
use super::hash::{hash, hash_concat, Digest};
use super::CryptoError;

/// Account address: the trailing 20 bytes of `H(uncompressed public key)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    /// Truncates a digest to its trailing 20 bytes.
    pub fn from_digest(d: &Digest) -> Self {
        Address(d.0[12..].try_into().unwrap())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl FromStr for Address {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        let mut out = [0u8; 20];
        hex::decode_to_slice(s, &mut out)
            .map_err(|_| CryptoError::Malformed(format!("bad address {s:?}")))?;
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn address(&self) -> Address {
        let point = self.0.to_encoded_point(false);
        Address::from_digest(&hash(&point.as_bytes()[1..]))
    }

    /// SEC1 compressed encoding (33 bytes).
    pub fn to_sec1(&self) -> Vec<u8> {
        self.0.to_encoded_point(true).as_bytes().to_vec()
    }

    pub fn from_sec1(bytes: &[u8]) -> Result<Self, CryptoError> {
        VerifyingKey::from_sec1_bytes(bytes)
            .map(PublicKey)
            .map_err(|_| CryptoError::InvalidKey("not a secp256k1 point"))
    }

    pub(crate) fn inner(&self) -> &VerifyingKey {
        &self.0
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.to_sec1()))
    }
}

/// Signing key with its public key and derived address.
#[derive(Clone)]
pub struct KeyPair {
    secret: SigningKey,
    public: PublicKey,
    address: Address,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        loop {
            rng.fill_bytes(&mut seed);
            if let Ok(kp) = Self::from_secret_bytes(&seed) {
                return kp;
            }
        }
    }

    /// Deterministic keypair; the same seed always gives the same pair.
    pub fn from_seed(seed: u64) -> Self {
        Self::generate(&mut ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn from_secret_bytes(bytes: &[u8; 32]) -> Result<Self, CryptoError> {
        let secret = SigningKey::from_bytes(bytes.into())
            .map_err(|_| CryptoError::InvalidKey("scalar out of range"))?;
        let public = PublicKey(*secret.verifying_key());
        Ok(KeyPair {
            address: public.address(),
            secret,
            public,
        })
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes().into()
    }

    pub(crate) fn signing_key(&self) -> &SigningKey {
        &self.secret
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

/// Recoverable ECDSA signature carrying the signing timestamp.
///
/// The ECDSA prehash binds both the request digest and `timestamp`, so the
/// timestamp cannot be edited without changing the recovered signer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signature {
    #[serde(with = "hex_array")]
    pub r: [u8; 32],
    #[serde(with = "hex_array")]
    pub s: [u8; 32],
    pub recovery: u8,
    pub timestamp: u64,
}

impl Signature {
    /// `version ‖ r[32] ‖ s[32] ‖ recovery ‖ timestamp:u64le`.
    pub fn to_bytes(&self) -> Vec<u8> {
        Writer::versioned()
            .fixed(&self.r)
            .fixed(&self.s)
            .u8(self.recovery)
            .u64(self.timestamp)
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::versioned(bytes)?;
        let sig = Signature {
            r: r.array()?,
            s: r.array()?,
            recovery: r.u8()?,
            timestamp: r.u64()?,
        };
        r.finish()?;
        Ok(sig)
    }
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let raw = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&raw, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

/// `H(staff_id ‖ timestamp:u64le)`, the digest a staff member signs to
/// request access.
pub fn staff_message(staff_id: &[u8], timestamp: u64) -> Digest {
    hash_concat(&[staff_id, &timestamp.to_le_bytes()])
}

fn signing_prehash(msg: &Digest, timestamp: u64) -> Digest {
    hash_concat(&[b"ehrchain/request-sig/v1", &msg.0, &timestamp.to_le_bytes()])
}

pub fn sign_timestamped(key: &KeyPair, staff_id: &[u8], timestamp: u64) -> (Digest, Signature) {
    let msg = staff_message(staff_id, timestamp);
    (msg, sign_digest(key, &msg, timestamp))
}

/// Signs an arbitrary 32-byte digest at `timestamp`.
pub fn sign_digest(key: &KeyPair, msg: &Digest, timestamp: u64) -> Signature {
    let prehash = signing_prehash(msg, timestamp);
    let (sig, rec) = key
        .signing_key()
        .sign_prehash_recoverable(&prehash.0)
        .expect("signing a 32-byte prehash cannot fail");
    let (r, s) = sig.split_bytes();
    Signature {
        r: r.into(),
        s: s.into(),
        recovery: rec.to_byte(),
        timestamp,
    }
}

/// Recovers the signer's address, failing on any malformed signature.
pub fn recover(msg: &Digest, sig: &Signature) -> Result<Address, CryptoError> {
    if sig.r == [0; 32] || sig.s == [0; 32] {
        return Err(CryptoError::InvalidSignature);
    }
    let ecdsa = EcdsaSignature::from_scalars(sig.r, sig.s)
        .map_err(|_| CryptoError::InvalidSignature)?;
    // high-s twins would let one authorization appear under two encodings
    if ecdsa.normalize_s().is_some() {
        return Err(CryptoError::InvalidSignature);
    }
    let rec = RecoveryId::from_byte(sig.recovery).ok_or(CryptoError::InvalidSignature)?;
    let prehash = signing_prehash(msg, sig.timestamp);
    let key = VerifyingKey::recover_from_prehash(&prehash.0, &ecdsa, rec)
        .map_err(|_| CryptoError::InvalidSignature)?;
    Ok(PublicKey(key).address())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn high_s_twin_is_rejected() {
        let key = KeyPair::from_seed(4);
        let (msg, sig) = sign_timestamped(&key, b"staff", 9);
        let ecdsa = EcdsaSignature::from_scalars(sig.r, sig.s).unwrap();
        let s_high: [u8; 32] = (-*ecdsa.s()).to_bytes().into();
        let twin = Signature {
            s: s_high,
            recovery: sig.recovery ^ 1,
            ..sig
        };
        assert_eq!(recover(&msg, &sig).unwrap(), key.address());
        assert_eq!(recover(&msg, &twin), Err(CryptoError::InvalidSignature));
    }

    #[test]
    fn seeded_keys_are_deterministic() {
        let a = KeyPair::from_seed(9);
        let b = KeyPair::from_seed(9);
        assert_eq!(a.secret_bytes(), b.secret_bytes());
        assert_eq!(a.address(), b.address());
        assert_ne!(KeyPair::from_seed(10).address(), a.address());
    }

    #[test]
    fn address_is_truncated_hash_of_public_key() {
        let kp = KeyPair::from_seed(1);
        let point = kp.public().inner().to_encoded_point(false);
        let full = hash(&point.as_bytes()[1..]);
        assert_eq!(kp.address().0[..], full.0[12..]);
    }

    #[test]
    fn ten_thousand_addresses_are_distinct() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let addrs: BTreeSet<_> = (0..10_000)
            .map(|_| KeyPair::generate(&mut rng).address())
            .collect();
        assert_eq!(addrs.len(), 10_000);
    }

    #[test]
    fn sign_and_recover() {
        let kp = KeyPair::from_seed(3);
        let (msg, sig) = sign_timestamped(&kp, b"staff-7", 1234);
        assert_eq!(msg, staff_message(b"staff-7", 1234));
        assert_eq!(recover(&msg, &sig).unwrap(), kp.address());
        let (msg2, sig2) = sign_timestamped(&kp, b"staff-7", 1234);
        assert_eq!(recover(&msg2, &sig2).unwrap(), kp.address());
    }

    #[test]
    fn zero_components_rejected() {
        let kp = KeyPair::from_seed(3);
        let (msg, sig) = sign_timestamped(&kp, b"x", 1);
        let zero_r = Signature { r: [0; 32], ..sig };
        let zero_s = Signature { s: [0; 32], ..sig };
        assert_eq!(recover(&msg, &zero_r), Err(CryptoError::InvalidSignature));
        assert_eq!(recover(&msg, &zero_s), Err(CryptoError::InvalidSignature));
        let bad_rec = Signature { recovery: 9, ..sig };
        assert_eq!(recover(&msg, &bad_rec), Err(CryptoError::InvalidSignature));
    }

    #[test]
    fn signature_bytes_round_trip() {
        let (_, sig) = sign_timestamped(&KeyPair::from_seed(5), b"id", 99);
        assert_eq!(Signature::from_bytes(&sig.to_bytes()).unwrap(), sig);
    }

    #[test]
    fn single_bit_corruptions_never_recover_the_signer() {
        let kp = KeyPair::from_seed(11);
        let (msg, sig) = sign_timestamped(&kp, b"nurse-2", 500);
        let bytes = sig.to_bytes();
        for bit in 0..bytes.len() * 8 {
            let mut b = bytes.clone();
            b[bit / 8] ^= 1 << (bit % 8);
            if let Ok(corrupt) = Signature::from_bytes(&b) {
                assert_ne!(recover(&msg, &corrupt).ok(), Some(kp.address()), "sig bit {bit}");
            }
        }
        for bit in 0..256 {
            let mut m = msg;
            m.0[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(recover(&m, &sig).ok(), Some(kp.address()), "msg bit {bit}");
        }
    }
}
