//! Ciphertext-policy attribute-gated encryption with the four-function
//! interface `setup / keygen / encrypt / decrypt`.
//!
//! The reference construction works as follows:
//!
//! * The authority holds a 256-bit master secret. Each attribute `a` gets a
//!   key `KDF(MK, a)`, interpreted as a secp256k1 scalar; the matching point
//!   is the attribute's public token, published in the public parameters.
//! * Encryption draws a random root secret `s` in the prime field and splits
//!   it down the policy tree: a gate with threshold `t` over `n` children
//!   uses a degree `t-1` polynomial and hands child `j` its value at `x = j`.
//!   Each leaf share is sealed to the leaf attribute's token with an
//!   ephemeral ECDH envelope. The message is sealed under `KDF(s)`.
//! * Decryption opens the leaf shares the key holder can open and
//!   interpolates bottom-up at `x = 0`; the root secret only appears when
//!   the held attributes satisfy the tree.
//!
//! Attribute keys are shared by every holder of the same attribute, so two
//! users pooling keys can decrypt what neither could alone. Collusion
//! between requesters is instead prevented at the contract layer, which
//! accepts one signature per request.

use std::collections::{BTreeMap, BTreeSet};

use k256::ecdh::diffie_hellman;
use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::sec1::ToEncodedPoint;
use k256::{NonZeroScalar, ProjectivePoint, PublicKey as CurvePoint, Scalar, U256};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::asym::RngAdapter;
use super::codec::{Reader, Writer};
use super::field::Fp;
use super::hash::{hash_concat, kdf};
use super::shamir::{lagrange_reconstruct, shamir_split, Share};
use super::sym::{self, SymKey};
use super::CryptoError;
use crate::policy::{parse_policy, AccessPolicy, Attribute, PolicyNode};

const POINT_LEN: usize = 33;

/// Public parameters: security level, field modulus, attribute tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbePublicParams {
    pub security_bits: u32,
    #[serde(with = "hex::serde")]
    pub field_modulus: [u8; 32],
    #[serde(with = "token_map")]
    tokens: BTreeMap<Attribute, [u8; POINT_LEN]>,
}

mod token_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<Attribute, [u8; POINT_LEN]>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (k, hex::encode(v))))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<Attribute, [u8; POINT_LEN]>, D::Error> {
        let raw = BTreeMap::<Attribute, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let mut out = [0u8; POINT_LEN];
                hex::decode_to_slice(&v, &mut out).map_err(serde::de::Error::custom)?;
                Ok((k, out))
            })
            .collect()
    }
}

impl AbePublicParams {
    pub fn token(&self, attr: &Attribute) -> Option<&[u8; POINT_LEN]> {
        self.tokens.get(attr)
    }

    pub fn published_attributes(&self) -> impl Iterator<Item = &Attribute> {
        self.tokens.keys()
    }
}

/// The authority's root secret. Deliberately not serializable.
#[derive(Clone)]
pub struct AbeMasterKey {
    secret: [u8; 32],
}

impl std::fmt::Debug for AbeMasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AbeMasterKey(..)")
    }
}

impl AbeMasterKey {
    pub fn secret_bytes(&self) -> &[u8; 32] {
        &self.secret
    }

    /// `KDF(MK, a)` for a canonical attribute.
    pub fn attribute_key(&self, attr: &Attribute) -> [u8; 32] {
        kdf("ehrchain/abe/attr/v1", &[&self.secret, attr.as_str().as_bytes()])
    }

    /// Publishes public tokens for `attrs` into `pk`.
    pub fn publish<'a, I>(&self, pk: &mut AbePublicParams, attrs: I)
    where
        I: IntoIterator<Item = &'a Attribute>,
    {
        for a in attrs {
            if !pk.tokens.contains_key(a) {
                let scalar = attr_scalar(&self.attribute_key(a));
                let point = (ProjectivePoint::GENERATOR * *scalar).to_affine();
                let enc = point.to_encoded_point(true);
                pk.tokens
                    .insert(a.clone(), enc.as_bytes().try_into().unwrap());
            }
        }
    }
}

fn attr_scalar(key: &[u8; 32]) -> NonZeroScalar {
    let mut bytes = *key;
    loop {
        let s = <Scalar as Reduce<U256>>::reduce_bytes(&bytes.into());
        if let Some(nz) = Option::<NonZeroScalar>::from(NonZeroScalar::new(s)) {
            return nz;
        }
        bytes = hash_concat(&[&bytes]).0;
    }
}

pub fn abe_setup<R: RngCore + CryptoRng + ?Sized>(
    security_bits: u32,
    rng: &mut R,
) -> Result<(AbePublicParams, AbeMasterKey), CryptoError> {
    let entropy_len = match security_bits {
        128 => 16,
        256 => 32,
        other => return Err(CryptoError::UnsupportedSecurity(other)),
    };
    let mut entropy = vec![0u8; entropy_len];
    rng.fill_bytes(&mut entropy);
    let secret = kdf("ehrchain/abe/master/v1", &[&entropy]);
    Ok((
        AbePublicParams {
            security_bits,
            field_modulus: Fp::modulus_le_bytes(),
            tokens: BTreeMap::new(),
        },
        AbeMasterKey { secret },
    ))
}

/// A user's per-attribute keys.
#[derive(Clone, PartialEq, Eq)]
pub struct AbeSecretKey {
    keys: BTreeMap<Attribute, [u8; 32]>,
}

impl std::fmt::Debug for AbeSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AbeSecretKey")
            .field("attrs", &self.keys.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl AbeSecretKey {
    pub fn attributes(&self) -> BTreeSet<Attribute> {
        self.keys.keys().cloned().collect()
    }

    pub fn key_for(&self, attr: &Attribute) -> Option<&[u8; 32]> {
        self.keys.get(attr)
    }

    /// `version ‖ count:u32 ‖ (attr:str ‖ key[32])*`, attributes sorted.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.u32(self.keys.len() as u32);
        for (a, k) in &self.keys {
            w.str(a.as_str()).fixed(k);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::versioned(bytes)?;
        let n = r.u32()? as usize;
        let mut keys = BTreeMap::new();
        for _ in 0..n {
            let attr = Attribute::new(r.str()?)?;
            keys.insert(attr, r.array()?);
        }
        r.finish()?;
        if keys.len() != n {
            return Err(CryptoError::Malformed("duplicate attribute".into()));
        }
        Ok(AbeSecretKey { keys })
    }
}

pub fn abe_keygen(
    mk: &AbeMasterKey,
    attrs: &BTreeSet<Attribute>,
) -> Result<AbeSecretKey, CryptoError> {
    if attrs.is_empty() {
        return Err(CryptoError::EmptyAttributes);
    }
    Ok(AbeSecretKey {
        keys: attrs
            .iter()
            .map(|a| (a.clone(), mk.attribute_key(a)))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SealedShare {
    ephemeral: [u8; POINT_LEN],
    sealed: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbeCiphertext {
    policy: AccessPolicy,
    /// One per leaf, depth-first left-to-right.
    leaves: Vec<SealedShare>,
    payload: Vec<u8>,
}

impl AbeCiphertext {
    pub fn policy(&self) -> &AccessPolicy {
        &self.policy
    }

    /// `version ‖ policy:str ‖ leaves:u32 ‖ (ephemeral[33] ‖ sealed:bytes)* ‖ payload:bytes`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.str(&self.policy.to_string()).u32(self.leaves.len() as u32);
        for leaf in &self.leaves {
            w.fixed(&leaf.ephemeral).bytes(&leaf.sealed);
        }
        w.bytes(&self.payload).finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::versioned(bytes)?;
        let policy = parse_policy(r.str()?)?;
        let n = r.u32()? as usize;
        if n != policy.leaf_count() {
            return Err(CryptoError::Malformed("leaf count mismatch".into()));
        }
        let mut leaves = Vec::with_capacity(n);
        for _ in 0..n {
            leaves.push(SealedShare {
                ephemeral: r.array()?,
                sealed: r.bytes()?.to_vec(),
            });
        }
        let payload = r.bytes()?.to_vec();
        r.finish()?;
        Ok(AbeCiphertext {
            policy,
            leaves,
            payload,
        })
    }
}

fn leaf_key(shared_x: &[u8], ephemeral: &[u8], index: u32) -> SymKey {
    SymKey(kdf(
        "ehrchain/abe/leaf/v1",
        &[shared_x, ephemeral, &index.to_le_bytes()],
    ))
}

fn payload_key(root: &Fp) -> SymKey {
    SymKey(kdf("ehrchain/abe/payload/v1", &[&root.to_le_bytes()]))
}

fn split_down<R: RngCore + CryptoRng + ?Sized>(
    node: &PolicyNode,
    value: Fp,
    out: &mut Vec<(Attribute, Fp)>,
    rng: &mut R,
) -> Result<(), CryptoError> {
    match node {
        PolicyNode::Leaf(a) => out.push((a.clone(), value)),
        PolicyNode::Gate {
            threshold,
            children,
        } => {
            let shares = shamir_split(value, *threshold, children.len(), rng)?;
            for (child, share) in children.iter().zip(shares) {
                split_down(child, share.y, out, rng)?;
            }
        }
    }
    Ok(())
}

pub fn abe_encrypt<R: RngCore + CryptoRng + ?Sized>(
    pk: &AbePublicParams,
    message: &[u8],
    policy: &AccessPolicy,
    rng: &mut R,
) -> Result<AbeCiphertext, CryptoError> {
    policy.validate()?;
    let root = Fp::random(rng);
    let mut leaf_values = Vec::with_capacity(policy.leaf_count());
    split_down(policy.root(), root, &mut leaf_values, rng)?;

    let mut leaves = Vec::with_capacity(leaf_values.len());
    for (index, (attr, value)) in leaf_values.iter().enumerate() {
        let token = pk
            .token(attr)
            .ok_or_else(|| CryptoError::UnknownAttribute(attr.to_string()))?;
        let token = CurvePoint::from_sec1_bytes(token)
            .map_err(|_| CryptoError::InvalidKey("bad attribute token"))?;
        let eph = NonZeroScalar::random(&mut RngAdapter(&mut *rng));
        let eph_pub: [u8; POINT_LEN] = (ProjectivePoint::GENERATOR * *eph)
            .to_affine()
            .to_encoded_point(true)
            .as_bytes()
            .try_into()
            .unwrap();
        let shared = diffie_hellman(eph, token.as_affine());
        let key = leaf_key(shared.raw_secret_bytes(), &eph_pub, index as u32);
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut nonce);
        leaves.push(SealedShare {
            ephemeral: eph_pub,
            sealed: sym::seal(&key, &nonce, &value.to_le_bytes(), &(index as u32).to_le_bytes()),
        });
    }
    let payload = sym::sym_encrypt(&payload_key(&root), message, rng);
    Ok(AbeCiphertext {
        policy: policy.clone(),
        leaves,
        payload,
    })
}

struct Opener<'a> {
    leaves: &'a [SealedShare],
    sk: &'a AbeSecretKey,
    next: usize,
}

impl Opener<'_> {
    fn open_leaf(&self, index: usize, attr: &Attribute) -> Option<Fp> {
        let key = self.sk.key_for(attr)?;
        let leaf = &self.leaves[index];
        let eph = CurvePoint::from_sec1_bytes(&leaf.ephemeral).ok()?;
        let shared = diffie_hellman(attr_scalar(key), eph.as_affine());
        let sym_key = leaf_key(shared.raw_secret_bytes(), &leaf.ephemeral, index as u32);
        let plain = sym::open(&sym_key, &leaf.sealed, &(index as u32).to_le_bytes()).ok()?;
        Fp::from_le_bytes_canonical(&plain.try_into().ok()?)
    }

    fn skip(&mut self, node: &PolicyNode) {
        match node {
            PolicyNode::Leaf(_) => self.next += 1,
            PolicyNode::Gate { children, .. } => children.iter().for_each(|c| self.skip(c)),
        }
    }

    fn recover(&mut self, node: &PolicyNode) -> Option<Fp> {
        match node {
            PolicyNode::Leaf(attr) => {
                let index = self.next;
                self.next += 1;
                self.open_leaf(index, attr)
            }
            PolicyNode::Gate {
                threshold,
                children,
            } => {
                let mut shares = Vec::with_capacity(*threshold);
                for (j, child) in children.iter().enumerate() {
                    if shares.len() == *threshold {
                        self.skip(child);
                    } else if let Some(y) = self.recover(child) {
                        shares.push(Share {
                            x: j as u64 + 1,
                            y,
                        });
                    }
                }
                if shares.len() == *threshold {
                    lagrange_reconstruct(&shares, *threshold).ok()
                } else {
                    None
                }
            }
        }
    }
}

pub fn abe_decrypt(ct: &AbeCiphertext, sk: &AbeSecretKey) -> Result<Vec<u8>, CryptoError> {
    if ct.leaves.len() != ct.policy.leaf_count() {
        return Err(CryptoError::Decryption);
    }
    let mut opener = Opener {
        leaves: &ct.leaves,
        sk,
        next: 0,
    };
    let root = opener
        .recover(ct.policy.root())
        .ok_or(CryptoError::Decryption)?;
    sym::sym_decrypt(&payload_key(&root), &ct.payload).map_err(|_| CryptoError::Decryption)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{attribute_set, satisfy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup(seed: u64) -> (AbePublicParams, AbeMasterKey, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (mut pk, mk) = abe_setup(256, &mut rng).unwrap();
        let universe = attribute_set(["a", "b", "c", "d", "doctor"]).unwrap();
        mk.publish(&mut pk, &universe);
        (pk, mk, rng)
    }

    #[test]
    fn setup_is_probabilistic_but_seedable() {
        let mut r = ChaCha20Rng::seed_from_u64(1);
        let (_, m1) = abe_setup(128, &mut r).unwrap();
        let (_, m2) = abe_setup(128, &mut r).unwrap();
        assert_ne!(m1.secret_bytes(), m2.secret_bytes());
        let (_, again) = abe_setup(128, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!(again.secret_bytes(), m1.secret_bytes());
        assert_eq!(
            abe_setup(192, &mut r).unwrap_err(),
            CryptoError::UnsupportedSecurity(192)
        );
    }

    #[test]
    fn public_params_leak_no_master_bytes() {
        let (pk, mk, _) = setup(2);
        let json = serde_json::to_string(&pk).unwrap();
        let mk_hex = hex::encode(mk.secret_bytes());
        assert!(!json.contains(&mk_hex));
        for a in pk.published_attributes() {
            assert!(!json.contains(&hex::encode(mk.attribute_key(a))));
        }
        assert_eq!(pk.field_modulus, Fp::modulus_le_bytes());
    }

    #[test]
    fn keygen_is_a_kdf_of_master_and_attribute() {
        let (_, mk, _) = setup(3);
        let a = Attribute::new("a").unwrap();
        let one = abe_keygen(&mk, &attribute_set(["a"]).unwrap()).unwrap();
        let two = abe_keygen(&mk, &attribute_set(["a", "b"]).unwrap()).unwrap();
        let direct = kdf("ehrchain/abe/attr/v1", &[mk.secret_bytes(), b"a"]);
        assert_eq!(one.key_for(&a), Some(&direct));
        assert_eq!(two.key_for(&a), Some(&direct));
        assert_eq!(abe_keygen(&mk, &BTreeSet::new()), Err(CryptoError::EmptyAttributes));
        let (_, other, _) = setup(4);
        assert_ne!(
            abe_keygen(&other, &attribute_set(["a"]).unwrap()).unwrap(),
            one
        );
    }

    #[test]
    fn single_leaf() {
        let (pk, mk, mut rng) = setup(5);
        let policy = parse_policy("doctor").unwrap();
        let ct = abe_encrypt(&pk, b"sk_1", &policy, &mut rng).unwrap();
        let sk = abe_keygen(&mk, &attribute_set(["doctor"]).unwrap()).unwrap();
        assert_eq!(abe_decrypt(&ct, &sk).unwrap(), b"sk_1");
        let wrong = abe_keygen(&mk, &attribute_set(["a"]).unwrap()).unwrap();
        assert_eq!(abe_decrypt(&ct, &wrong), Err(CryptoError::Decryption));
    }

    fn subsets(universe: &[&str]) -> Vec<BTreeSet<Attribute>> {
        (0..1u32 << universe.len())
            .map(|mask| {
                universe
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, a)| Attribute::new(a).unwrap())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn and_and_threshold_exhaustive() {
        let (pk, mk, mut rng) = setup(6);
        for (src, expected_ok) in [
            ("AND(a, b)", vec!["a,b", "a,b,c"]),
            ("THRESH(2, a, b, c)", vec!["a,b", "a,c", "b,c", "a,b,c"]),
        ] {
            let policy = parse_policy(src).unwrap();
            let ct = abe_encrypt(&pk, b"m", &policy, &mut rng).unwrap();
            for set in subsets(&["a", "b", "c"]) {
                let label = set.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(",");
                let ok = !set.is_empty()
                    && abe_decrypt(&ct, &abe_keygen(&mk, &set).unwrap()).is_ok();
                assert_eq!(ok, expected_ok.contains(&label.as_str()), "{src} with {{{label}}}");
                assert_eq!(ok, satisfy(&policy, &set));
            }
        }
    }

    #[test]
    fn unknown_attribute_rejected_at_encrypt() {
        let (pk, _, mut rng) = setup(7);
        let policy = parse_policy("OR(a, zzz)").unwrap();
        assert!(matches!(
            abe_encrypt(&pk, b"m", &policy, &mut rng),
            Err(CryptoError::UnknownAttribute(a)) if a == "zzz"
        ));
    }

    #[test]
    fn serialization_round_trips() {
        let (pk, mk, mut rng) = setup(8);
        let policy = parse_policy("OR(AND(a, b), THRESH(2, c, d, a))").unwrap();
        let ct = abe_encrypt(&pk, b"payload", &policy, &mut rng).unwrap();
        let back = AbeCiphertext::from_bytes(&ct.to_bytes()).unwrap();
        assert_eq!(back, ct);
        let sk = abe_keygen(&mk, &attribute_set(["c", "a"]).unwrap()).unwrap();
        assert_eq!(AbeSecretKey::from_bytes(&sk.to_bytes()).unwrap(), sk);
        assert_eq!(abe_decrypt(&back, &sk).unwrap(), b"payload");
    }

    #[test]
    fn tampered_share_fails_closed() {
        let (pk, mk, mut rng) = setup(9);
        let policy = parse_policy("a").unwrap();
        let mut ct = abe_encrypt(&pk, b"m", &policy, &mut rng).unwrap();
        ct.leaves[0].sealed[20] ^= 1;
        let sk = abe_keygen(&mk, &attribute_set(["a"]).unwrap()).unwrap();
        assert_eq!(abe_decrypt(&ct, &sk), Err(CryptoError::Decryption));
    }
}
