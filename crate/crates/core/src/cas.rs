//! Simulated content-addressed storage network.
//!
//! Data is split into fixed-size leaves under a root object that links them
//! in order. Objects are placed on the nodes whose ids are XOR-closest to
//! the object digest, and every object read back is re-hashed before use.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::codec::{Reader, Writer};
use crate::crypto::{hash, kdf, Digest, KeyPair, PublicKey};

pub const DEFAULT_CHUNK_SIZE: usize = 262_144;
pub const DEFAULT_REPLICATION: usize = 3;
/// Values up to this size are also kept inline in the DHT.
pub const INLINE_LIMIT: usize = 1024;
pub const SALT_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CasError {
    #[error("chunk size must be at least 1")]
    ChunkSize,
    #[error("need {needed} nodes for replication, network has {have}")]
    InsufficientNodes { needed: usize, have: usize },
    #[error("object {0} not found")]
    NotFound(Digest),
    #[error("object {object} failed its digest check on node {node}")]
    Tampered { object: Digest, node: NodeId },
    #[error("stored value is too short to carry a salt")]
    MissingSalt,
    #[error("malformed object {0}")]
    Malformed(Digest),
    #[error("node {0} does not match its public key or work target")]
    InvalidNode(NodeId),
    #[error("store document: {0}")]
    Document(String),
}

/// Node identity: `H(public key)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub Digest);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", &self.0.to_hex()[..12])
    }
}

impl NodeId {
    /// Tag that must carry the configured number of leading zero bits.
    pub fn work_tag(&self) -> Digest {
        hash(&self.0 .0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasObject {
    pub links: Vec<Digest>,
    #[serde(with = "hex::serde")]
    pub content: Vec<u8>,
}

impl CasObject {
    /// `version ‖ u32 link count ‖ links ‖ content`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.u32(self.links.len() as u32);
        for l in &self.links {
            w.fixed(&l.0);
        }
        w.fixed(&self.content);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let mut r = Reader::versioned(bytes).ok()?;
        let n = r.u32().ok()? as usize;
        let links = (0..n).map(|_| r.array().map(Digest)).collect::<Result<Vec<_>, _>>().ok()?;
        let content = r.take(r.remaining()).ok()?.to_vec();
        Some(CasObject { links, content })
    }

    pub fn digest(&self) -> Digest {
        hash(&self.to_bytes())
    }
}

/// Splits `data` into leaves of `chunk_size` bytes. With more than one leaf
/// a root object linking them in order is appended; the last element is
/// always the root.
pub fn chunk(data: &[u8], chunk_size: usize) -> Result<Vec<CasObject>, CasError> {
    if chunk_size == 0 {
        return Err(CasError::ChunkSize);
    }
    let mut leaves: Vec<CasObject> = data
        .chunks(chunk_size)
        .map(|c| CasObject {
            links: Vec::new(),
            content: c.to_vec(),
        })
        .collect();
    if leaves.is_empty() {
        leaves.push(CasObject {
            links: Vec::new(),
            content: Vec::new(),
        });
    }
    if leaves.len() > 1 {
        let root = CasObject {
            links: leaves.iter().map(CasObject::digest).collect(),
            content: Vec::new(),
        };
        leaves.push(root);
    }
    Ok(leaves)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(with = "hex::serde")]
    pub public_key: Vec<u8>,
    pub objects: BTreeMap<Digest, CasObject>,
}

impl Node {
    pub fn verify(&self, difficulty: u32) -> bool {
        PublicKey::from_sec1(&self.public_key).is_ok()
            && hash(&self.public_key) == self.id.0
            && self.id.work_tag().leading_zeros() >= difficulty
    }
}

/// The storage network. Reads take `&self`; writes take `&mut self`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub chunk_size: usize,
    pub difficulty: u32,
    nodes: BTreeMap<NodeId, Node>,
    providers: BTreeMap<Digest, BTreeSet<NodeId>>,
    small_values: BTreeMap<Digest, Vec<u8>>,
}

fn xor_distance(a: &Digest, b: &Digest) -> [u8; 32] {
    std::array::from_fn(|i| a.0[i] ^ b.0[i])
}

impl Default for Network {
    fn default() -> Self {
        Network::new(DEFAULT_CHUNK_SIZE, 0)
    }
}

impl Network {
    pub fn new(chunk_size: usize, difficulty: u32) -> Self {
        Network {
            chunk_size,
            difficulty,
            nodes: BTreeMap::new(),
            providers: BTreeMap::new(),
            small_values: BTreeMap::new(),
        }
    }

    /// Derives a node key from `seed`, retrying until the id meets the work target.
    pub fn add_node(&mut self, seed: u64) -> NodeId {
        let mut counter = 0u64;
        let node = loop {
            let secret = kdf("ehrchain/cas/node/v1", &[&seed.to_le_bytes(), &counter.to_le_bytes()]);
            counter += 1;
            let Ok(key) = KeyPair::from_secret_bytes(&secret) else {
                continue;
            };
            let public_key = key.public().to_sec1();
            let id = NodeId(hash(&public_key));
            if id.work_tag().leading_zeros() >= self.difficulty {
                break Node {
                    id,
                    public_key,
                    objects: BTreeMap::new(),
                };
            }
        };
        let id = node.id;
        self.nodes.entry(id).or_insert(node);
        id
    }

    /// Drops a node and its provider records.
    pub fn remove_node(&mut self, id: &NodeId) -> bool {
        if self.nodes.remove(id).is_none() {
            return false;
        }
        for set in self.providers.values_mut() {
            set.remove(id);
        }
        true
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn providers(&self, digest: &Digest) -> BTreeSet<NodeId> {
        self.providers.get(digest).cloned().unwrap_or_default()
    }

    pub fn inline_value(&self, digest: &Digest) -> Option<&[u8]> {
        self.small_values.get(digest).map(Vec::as_slice)
    }

    /// Total distinct objects held across all nodes.
    pub fn object_count(&self) -> usize {
        self.nodes
            .values()
            .flat_map(|n| n.objects.keys())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// The `n` node ids closest to `target` by XOR distance.
    fn closest(&self, target: &Digest, n: usize) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        ids.sort_by_key(|id| xor_distance(&id.0, target));
        ids.truncate(n);
        ids
    }

    pub fn put(&mut self, data: &[u8], replication: usize) -> Result<Digest, CasError> {
        if replication == 0 || self.nodes.len() < replication {
            return Err(CasError::InsufficientNodes {
                needed: replication.max(1),
                have: self.nodes.len(),
            });
        }
        let objects = chunk(data, self.chunk_size)?;
        let root = objects.last().expect("chunk yields a root").clone();
        let root_digest = root.digest();
        for obj in objects {
            let d = obj.digest();
            for id in self.closest(&d, replication) {
                self.nodes.get_mut(&id).expect("closest returns live ids").objects.insert(d, obj.clone());
                self.providers.entry(d).or_default().insert(id);
            }
        }
        if data.len() <= INLINE_LIMIT {
            self.small_values.insert(root_digest, root.to_bytes());
        }
        log::debug!("put {} bytes as {root_digest}", data.len());
        Ok(root_digest)
    }

    /// Stores `data ‖ salt` so the address reveals nothing about `data` alone.
    pub fn put_salted(&mut self, data: &[u8], salt: &[u8; SALT_LEN], replication: usize) -> Result<Digest, CasError> {
        let mut buf = Vec::with_capacity(data.len() + SALT_LEN);
        buf.extend_from_slice(data);
        buf.extend_from_slice(salt);
        self.put(&buf, replication)
    }

    fn fetch(&self, digest: &Digest) -> Result<CasObject, CasError> {
        if let Some(bytes) = self.small_values.get(digest) {
            if hash(bytes) == *digest {
                if let Some(obj) = CasObject::from_bytes(bytes) {
                    return Ok(obj);
                }
            }
        }
        let mut tampered = None;
        for id in self.providers(digest) {
            let Some(obj) = self.nodes.get(&id).and_then(|n| n.objects.get(digest)) else {
                continue;
            };
            if obj.digest() == *digest {
                return Ok(obj.clone());
            }
            log::warn!("object {digest} on node {id} failed verification");
            tampered.get_or_insert(id);
        }
        Err(match tampered {
            Some(node) => CasError::Tampered { object: *digest, node },
            None => CasError::NotFound(*digest),
        })
    }

    fn assemble(&self, digest: &Digest, out: &mut Vec<u8>, depth: usize) -> Result<(), CasError> {
        if depth > 64 {
            return Err(CasError::Malformed(*digest));
        }
        let obj = self.fetch(digest)?;
        out.extend_from_slice(&obj.content);
        for link in &obj.links {
            self.assemble(link, out, depth + 1)?;
        }
        Ok(())
    }

    /// Fetches and reassembles the value rooted at `digest`, verifying every object.
    pub fn get(&self, digest: &Digest) -> Result<Vec<u8>, CasError> {
        let mut out = Vec::new();
        self.assemble(digest, &mut out, 0)?;
        Ok(out)
    }

    /// `get` with the trailing salt removed.
    pub fn get_salted(&self, digest: &Digest) -> Result<Vec<u8>, CasError> {
        let mut v = self.get(digest)?;
        if v.len() < SALT_LEN {
            return Err(CasError::MissingSalt);
        }
        v.truncate(v.len() - SALT_LEN);
        Ok(v)
    }

    /// Fault injection: XORs `mask` into one content byte of a stored copy.
    /// Returns `false` if the node does not hold the object, it has no
    /// content, or `mask` is zero.
    pub fn tamper(&mut self, node: &NodeId, digest: &Digest, byte: usize, mask: u8) -> bool {
        match self.nodes.get_mut(node).and_then(|n| n.objects.get_mut(digest)) {
            Some(obj) if !obj.content.is_empty() && mask != 0 => {
                let i = byte % obj.content.len();
                obj.content[i] ^= mask;
                true
            }
            _ => false,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// Loads an exported store, rejecting nodes whose identity does not verify.
    pub fn from_json(json: &str) -> Result<Self, CasError> {
        let net: Network = serde_json::from_str(json).map_err(|e| CasError::Document(e.to_string()))?;
        for (id, node) in &net.nodes {
            if *id != node.id || !node.verify(net.difficulty) {
                return Err(CasError::InvalidNode(*id));
            }
        }
        Ok(net)
    }
}

pub fn random_salt<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> [u8; SALT_LEN] {
    let mut s = [0u8; SALT_LEN];
    rng.fill_bytes(&mut s);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn network(nodes: u64) -> Network {
        let mut net = Network::default();
        for s in 0..nodes {
            net.add_node(s);
        }
        net
    }

    fn bytes(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut v = vec![0u8; n];
        RngCore::fill_bytes(&mut rng, &mut v);
        v
    }

    #[test]
    fn node_ids_hash_public_keys() {
        let net = network(50);
        assert_eq!(net.node_ids().count(), 50);
        for id in net.node_ids() {
            let node = net.node(id).unwrap();
            assert_eq!(hash(&node.public_key), id.0);
            assert!(node.verify(0));
        }
    }

    #[test]
    fn work_target_is_met() {
        let mut net = Network::new(DEFAULT_CHUNK_SIZE, 6);
        for s in 0..5 {
            let id = net.add_node(s);
            assert!(id.work_tag().leading_zeros() >= 6);
            assert!(net.node(&id).unwrap().verify(6));
        }
    }

    #[test]
    fn chunk_sizes() {
        let data = bytes(600 * 1024, 1);
        let objs = chunk(&data, DEFAULT_CHUNK_SIZE).unwrap();
        let sizes: Vec<usize> = objs[..3].iter().map(|o| o.content.len()).collect();
        assert_eq!(sizes, [256 * 1024, 256 * 1024, 88 * 1024]);
        assert_eq!(objs.len(), 4);
        assert_eq!(objs[3].links, objs[..3].iter().map(CasObject::digest).collect::<Vec<_>>());

        let small = chunk(b"hello", DEFAULT_CHUNK_SIZE).unwrap();
        assert_eq!(small.len(), 1);
        assert!(small[0].links.is_empty());

        let empty = chunk(b"", 4).unwrap();
        assert_eq!(empty, vec![CasObject { links: vec![], content: vec![] }]);
        assert_eq!(chunk(b"x", 0), Err(CasError::ChunkSize));
    }

    #[test]
    fn object_layout_round_trips() {
        let obj = CasObject {
            links: vec![hash(b"a"), hash(b"b")],
            content: b"xyz".to_vec(),
        };
        let b = obj.to_bytes();
        assert_eq!(b[0], 1);
        assert_eq!(&b[1..5], &2u32.to_le_bytes());
        assert_eq!(&b[b.len() - 3..], b"xyz");
        assert_eq!(CasObject::from_bytes(&b), Some(obj));
    }

    #[test]
    fn put_get_and_replication() {
        let mut net = network(10);
        net.chunk_size = 1000;
        let data = bytes(4_500, 2);
        let root = net.put(&data, 3).unwrap();
        assert_eq!(net.get(&root).unwrap(), data);
        assert_eq!(net.providers(&root).len(), 3);
        let objects = net.object_count();
        assert_eq!(net.put(&data, 3).unwrap(), root);
        assert_eq!(net.object_count(), objects);
        assert_eq!(objects, 6);
        assert!(net.inline_value(&root).is_none());
    }

    #[test]
    fn small_values_are_inline() {
        let mut net = network(4);
        let d = net.put(&[7u8; 1024], 3).unwrap();
        assert!(net.inline_value(&d).is_some());
        let d2 = net.put(&[7u8; 1025], 3).unwrap();
        assert!(net.inline_value(&d2).is_none());
    }

    #[test]
    fn insufficient_nodes() {
        let mut net = network(2);
        assert_eq!(net.put(b"x", 3), Err(CasError::InsufficientNodes { needed: 3, have: 2 }));
    }

    #[test]
    fn unknown_digest_not_found() {
        let net = network(3);
        assert_eq!(net.get(&hash(b"nope")), Err(CasError::NotFound(hash(b"nope"))));
    }

    #[test]
    fn node_removal_shrinks_providers() {
        let mut net = network(5);
        let d = net.put(&bytes(2_000, 3), 3).unwrap();
        let victim = *net.providers(&d).iter().next().unwrap();
        assert!(net.remove_node(&victim));
        assert_eq!(net.providers(&d).len(), 2);
        assert!(net.get(&d).is_ok());
    }

    #[test]
    fn salted_addresses_differ_and_hide_data() {
        let mut net = network(4);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let data = b"record".to_vec();
        let mut seen = BTreeSet::new();
        for _ in 0..1000 {
            let salt = random_salt(&mut rng);
            let a = net.put_salted(&data, &salt, 3).unwrap();
            assert_ne!(a, hash(&data));
            assert!(seen.insert(a));
        }
        let plain = chunk(&data, net.chunk_size).unwrap().pop().unwrap().digest();
        assert!(net.providers(&plain).is_empty());
        assert!(net.providers(&hash(&data)).is_empty());
        let a = *seen.iter().next().unwrap();
        assert_eq!(net.get_salted(&a).unwrap(), data);
    }

    #[test]
    fn tampered_copy_falls_back_to_clean_replica() {
        let mut net = network(6);
        net.chunk_size = 100;
        let data = bytes(450, 4);
        let root = net.put(&data, 3).unwrap();
        let leaf = chunk(&data, 100).unwrap()[2].digest();
        let holders: Vec<NodeId> = net.providers(&leaf).into_iter().collect();
        assert!(net.tamper(&holders[0], &leaf, 17, 0x01));
        assert_eq!(net.get(&root).unwrap(), data);
        for h in &holders[1..] {
            net.tamper(h, &leaf, 5, 0x80);
        }
        match net.get(&root) {
            Err(CasError::Tampered { object, .. }) => assert_eq!(object, leaf),
            other => panic!("expected tamper error, got {other:?}"),
        }
    }

    #[test]
    fn export_round_trip_and_identity_check() {
        let mut net = network(4);
        let d = net.put(b"abc", 2).unwrap();
        let back = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.get(&d).unwrap(), b"abc");

        let id = *net.node_ids().next().unwrap();
        net.nodes.get_mut(&id).unwrap().public_key = KeyPair::from_seed(99).public().to_sec1();
        assert_eq!(Network::from_json(&net.to_json()), Err(CasError::InvalidNode(id)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_any_data(data in proptest::collection::vec(any::<u8>(), 0..3000), size in 1usize..700) {
            let mut net = network(3);
            net.chunk_size = size;
            let d = net.put(&data, 2).unwrap();
            prop_assert_eq!(net.get(&d).unwrap(), data.clone());
            let again = chunk(&data, size).unwrap();
            prop_assert_eq!(again.last().unwrap().digest(), d);
        }

        #[test]
        fn corruption_never_returned(data in proptest::collection::vec(any::<u8>(), 1..2000), which in any::<usize>(), byte in any::<usize>(), copies in 1usize..=3) {
            let mut net = network(3);
            net.chunk_size = 256;
            let d = net.put(&data, 3).unwrap();
            let objs = chunk(&data, 256).unwrap();
            let leaves: Vec<Digest> = objs.iter().filter(|o| o.links.is_empty()).map(CasObject::digest).collect();
            let target = leaves[which % leaves.len()];
            let holders: Vec<NodeId> = net.providers(&target).into_iter().collect();
            for h in holders.iter().take(copies) {
                net.tamper(h, &target, byte, 0x01);
            }
            match net.get(&d) {
                Ok(v) => prop_assert_eq!(v, data),
                Err(CasError::Tampered { object, .. }) => prop_assert_eq!(object, target),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
