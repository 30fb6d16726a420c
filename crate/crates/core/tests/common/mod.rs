#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use ehrchain::contracts::{self, avpa, smr, AvpaConfig, LOG_ANNOUNCE};
use ehrchain::crypto::{sign_timestamped, Address, Digest, KeyPair, Signature};
use ehrchain::ledger::{Chain, EventFilter, EventValue, GasSchedule, Receipt, Transaction, BLOCK_GAS_LIMIT};
use ehrchain::policy::{attribute_set, AccessPolicy, Attribute, PolicyNode, PrivilegeStructure};
use rand::Rng;

pub fn bundled_scenario() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/cardiology.json")
}

pub fn attrs(list: &[&str]) -> BTreeSet<Attribute> {
    attribute_set(list.iter().copied()).unwrap()
}

/// Chain with one registry (certified by `certifier`) and one AVPA.
pub struct Ledger {
    pub chain: Chain,
    pub certifier: KeyPair,
    pub smr: Address,
    pub avpa: Address,
}

impl Ledger {
    pub fn new(structure: PrivilegeStructure, validity_window: u64) -> Self {
        let certifier = KeyPair::from_seed(900);
        let owner = KeyPair::from_seed(901).address();
        let mut chain = contracts::new_chain(GasSchedule::default(), [certifier.address(), owner]).unwrap();
        let (smr, r) = chain
            .deploy_contract(smr::KIND, smr::encode_init(20, &[certifier.address()]), certifier.address(), BLOCK_GAS_LIMIT)
            .unwrap();
        assert!(r.is_success());
        let config = AvpaConfig {
            validity_window,
            ..AvpaConfig::new(smr, structure)
        };
        let (avpa, r) = chain.deploy_contract(avpa::KIND, config.encode(), owner, BLOCK_GAS_LIMIT).unwrap();
        assert!(r.is_success());
        chain.mine_block();
        Ledger {
            chain,
            certifier,
            smr,
            avpa,
        }
    }

    pub fn register(&mut self, staff: &KeyPair, held: &BTreeSet<Attribute>) -> Receipt {
        self.chain.open_account(staff.address());
        let list: Vec<Attribute> = held.iter().cloned().collect();
        let args = smr::encode_add_staff_member(&staff.address(), b"staff", &list, staff.public(), 20);
        self.chain
            .submit_tx(Transaction::call(self.certifier.address(), self.smr, "addStaffMember", args, BLOCK_GAS_LIMIT))
            .unwrap()
    }

    pub fn sign(&self, staff: &KeyPair) -> (Digest, Signature) {
        sign_timestamped(staff, b"staff", self.chain.now())
    }

    pub fn submit(&mut self, sender: Address, msg: &Digest, sig: &Signature) -> Receipt {
        let args = avpa::encode_verify_request(msg, sig);
        self.chain
            .submit_tx(Transaction::call(sender, self.avpa, "verifyRequest", args, BLOCK_GAS_LIMIT))
            .unwrap()
    }

    pub fn request(&mut self, staff: &KeyPair) -> Receipt {
        let (msg, sig) = self.sign(staff);
        self.submit(staff.address(), &msg, &sig)
    }

    /// Announced levels in chain order, after sealing pending transactions.
    pub fn announced_levels(&mut self) -> Vec<(Address, u64)> {
        self.chain.mine_block();
        self.chain
            .query_events(&EventFilter::default().contract(self.avpa).name(LOG_ANNOUNCE))
            .iter()
            .map(|e| {
                let who = e.field("signer").and_then(EventValue::as_address).unwrap();
                let level = e.field("level").and_then(EventValue::as_uint).unwrap();
                (who, level)
            })
            .collect()
    }
}

pub const UNIVERSE: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

/// Random threshold tree with at most `max_leaves` leaves over `UNIVERSE`.
pub fn random_tree<R: Rng>(rng: &mut R, max_leaves: usize) -> PolicyNode {
    let budget = rng.gen_range(1..=max_leaves);
    grow(rng, budget, 0)
}

fn grow<R: Rng>(rng: &mut R, leaves: usize, depth: usize) -> PolicyNode {
    if leaves == 1 || depth >= 3 && rng.gen_bool(0.5) {
        return PolicyNode::Leaf(Attribute::new(UNIVERSE[rng.gen_range(0..UNIVERSE.len())]).unwrap());
    }
    let arity = rng.gen_range(2..=leaves.min(4));
    // split the leaf budget across children, each at least one
    let mut sizes = vec![1; arity];
    for _ in arity..leaves {
        sizes[rng.gen_range(0..arity)] += 1;
    }
    let children: Vec<PolicyNode> = sizes.into_iter().map(|s| grow(rng, s, depth + 1)).collect();
    let threshold = rng.gen_range(1..=children.len());
    PolicyNode::threshold(threshold, children)
}

/// Brute-force satisfaction, written independently of the library.
pub fn oracle(node: &PolicyNode, held: &BTreeSet<Attribute>) -> bool {
    match node {
        PolicyNode::Leaf(a) => held.contains(a),
        PolicyNode::Gate { threshold, children } => {
            children.iter().map(|c| oracle(c, held) as usize).sum::<usize>() >= *threshold
        }
    }
}

pub fn leaf_count(node: &PolicyNode) -> usize {
    match node {
        PolicyNode::Leaf(_) => 1,
        PolicyNode::Gate { children, .. } => children.iter().map(leaf_count).sum(),
    }
}

/// Every subset of `UNIVERSE`, including the empty one.
pub fn all_subsets() -> Vec<BTreeSet<Attribute>> {
    (0u32..1 << UNIVERSE.len())
        .map(|mask| {
            UNIVERSE
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, a)| Attribute::new(a).unwrap())
                .collect()
        })
        .collect()
}

pub fn policy(node: PolicyNode) -> AccessPolicy {
    AccessPolicy::new(node).unwrap()
}
