//! The registry (`smr`), announcement (`avpa`) and key-gatekeeper (`gk`)
//! contracts, plus their argument encoders.
//!
//! Arguments use the versioned binary codec: fixed-width addresses and
//! digests, `u32` length prefixes for byte strings and lists.

pub mod avpa;
pub mod gk;
pub mod smr;

use crate::crypto::codec::{CodecError, Reader, Writer};
use crate::crypto::Address;
use crate::ledger::{Chain, ExecError, GasSchedule, LedgerError};

pub use avpa::{Avpa, AvpaConfig};
pub use gk::Gk;
pub use smr::{Smr, StaffEntry};

pub const LOG_ANNOUNCE: &str = "LogAnnounce";
pub const LOG_KEYS: &str = "LogKeys";

pub const DEFAULT_UP_BOUND: u32 = 50;
pub const DEFAULT_FRESHNESS_WINDOW: u64 = 256;
pub const DEFAULT_VALIDITY_WINDOW: u64 = 10_000;

/// Nominal bytecode sizes billed at deployment.
pub const SMR_CODE_SIZE: u64 = 736;
pub const GK_CODE_SIZE: u64 = 304;
pub const AVPA_CODE_SIZE: u64 = 1_184;

pub(crate) fn malformed(e: CodecError) -> ExecError {
    ExecError::revert(format!("malformed arguments: {e}"))
}

pub(crate) fn read_address(r: &mut Reader<'_>) -> Result<Address, ExecError> {
    r.array::<20>().map(Address).map_err(malformed)
}

pub(crate) fn read_address_list(r: &mut Reader<'_>) -> Result<Vec<Address>, ExecError> {
    let n = r.u32().map_err(malformed)?;
    (0..n).map(|_| read_address(r)).collect()
}

pub(crate) fn write_address_list(w: &mut Writer, addrs: &[Address]) {
    w.u32(addrs.len() as u32);
    for a in addrs {
        w.fixed(&a.0);
    }
}

/// Registers the three contract kinds on `chain`.
pub fn install(chain: &mut Chain) {
    chain.register_kind(smr::KIND, smr::deploy, smr::restore);
    chain.register_kind(avpa::KIND, avpa::deploy, avpa::restore);
    chain.register_kind(gk::KIND, gk::deploy, gk::restore);
}

/// A chain with the contract kinds installed.
pub fn new_chain<I>(schedule: GasSchedule, accounts: I) -> Result<Chain, LedgerError>
where
    I: IntoIterator<Item = Address>,
{
    let mut chain = Chain::new(schedule, accounts)?;
    install(&mut chain);
    Ok(chain)
}

pub fn import_chain(json: &str) -> Result<Chain, LedgerError> {
    Chain::from_json(json, install)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::analysis::synthetic_structure;
    use crate::crypto::{hash, sign_timestamped, Digest, KeyPair};
    use crate::ledger::{EventFilter, EventValue, Receipt, Transaction, TxStatus, BLOCK_GAS_LIMIT};
    use crate::policy::{attribute_set, Attribute, PrivilegeStructure};

    const GAS: u64 = BLOCK_GAS_LIMIT;

    struct Fixture {
        chain: Chain,
        certifier: Address,
        issuer: Address,
        smr: Address,
        avpa: Address,
        gk: Address,
        structure: PrivilegeStructure,
    }

    fn structure() -> PrivilegeStructure {
        PrivilegeStructure::parse([
            "AND(doctor, cardiology, senior)",
            "AND(doctor, cardiology)",
            "OR(doctor, nurse)",
        ])
        .unwrap()
    }

    fn attrs(list: &[&str]) -> Vec<Attribute> {
        attribute_set(list.iter().copied()).unwrap().into_iter().collect()
    }

    fn fixture() -> Fixture {
        let certifier = KeyPair::from_seed(1).address();
        let issuer = KeyPair::from_seed(2).address();
        let owner = KeyPair::from_seed(3).address();
        let mut chain = new_chain(GasSchedule::default(), [certifier, issuer, owner]).unwrap();
        let (smr, r) = chain
            .deploy_contract(smr::KIND, smr::encode_init(DEFAULT_UP_BOUND, &[certifier]), owner, GAS)
            .unwrap();
        assert!(r.is_success(), "{r:?}");
        let structure = structure();
        let (avpa, r) = chain
            .deploy_contract(avpa::KIND, AvpaConfig::new(smr, structure.clone()).encode(), owner, GAS)
            .unwrap();
        assert!(r.is_success(), "{r:?}");
        let (gk, r) = chain.deploy_contract(gk::KIND, gk::encode_init(&[issuer]), owner, GAS).unwrap();
        assert!(r.is_success(), "{r:?}");
        chain.mine_block();
        Fixture {
            chain,
            certifier,
            issuer,
            smr,
            avpa,
            gk,
            structure,
        }
    }

    impl Fixture {
        fn register(&mut self, sender: Address, staff: &KeyPair, list: &[&str]) -> Receipt {
            self.chain.open_account(staff.address());
            let args =
                smr::encode_add_staff_member(&staff.address(), b"id", &attrs(list), staff.public(), DEFAULT_UP_BOUND);
            self.chain
                .submit_tx(Transaction::call(sender, self.smr, "addStaffMember", args, GAS))
                .unwrap()
        }

        fn request(&mut self, staff: &KeyPair, ts: u64) -> Receipt {
            let (msg, sig) = sign_timestamped(staff, b"id", ts);
            let args = avpa::encode_verify_request(&msg, &sig);
            self.chain
                .submit_tx(Transaction::call(staff.address(), self.avpa, "verifyRequest", args, GAS))
                .unwrap()
        }

        fn attributes_of(&self, who: &Address) -> Vec<Attribute> {
            smr::decode_attributes(&self.chain.view(&self.smr, "getAttributes", &smr::encode_address(who)).unwrap())
                .unwrap()
        }
    }

    #[test]
    fn certifier_registers_and_outsider_cannot() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        assert!(f.register(f.certifier, &staff, &["Doctor", "cardiology", "senior"]).is_success());
        assert_eq!(f.attributes_of(&staff.address()), attrs(&["doctor", "cardiology", "senior"]));

        let before = f.chain.state_bytes();
        let r = f.register(f.issuer, &staff, &["nurse"]);
        assert_eq!(r.status, TxStatus::Reverted("sender is not a certifier".into()));
        assert_eq!(f.chain.state_bytes(), before);
        assert!(f.attributes_of(&KeyPair::from_seed(11).address()).is_empty());
    }

    #[test]
    fn oversize_or_mismatched_registration_reverts() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        let many: Vec<String> = (0..=DEFAULT_UP_BOUND).map(|i| format!("a{i}")).collect();
        let list: Vec<&str> = many.iter().map(String::as_str).collect();
        assert!(matches!(f.register(f.certifier, &staff, &list).status, TxStatus::Reverted(_)));

        let other = KeyPair::from_seed(12);
        let args = smr::encode_add_staff_member(&staff.address(), b"id", &attrs(&["x"]), other.public(), 50);
        let r = f.chain.submit_tx(Transaction::call(f.certifier, f.smr, "addStaffMember", args, GAS)).unwrap();
        assert_eq!(r.status, TxStatus::Reverted("staff address does not match public key".into()));
    }

    #[test]
    fn renewal_overwrites_and_moves_timestamp() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        f.register(f.certifier, &staff, &["nurse"]);
        f.chain.mine_block();
        let reg = |f: &Fixture| {
            smr::decode_registration(
                &f.chain.view(&f.smr, "getRegistration", &smr::encode_address(&staff.address())).unwrap(),
            )
            .unwrap()
            .unwrap()
            .0
        };
        let first = reg(&f);
        for _ in 0..3 {
            f.chain.mine_block();
        }
        f.register(f.certifier, &staff, &["doctor", "cardiology"]);
        assert_eq!(reg(&f), first + 4);
        assert_eq!(f.attributes_of(&staff.address()), attrs(&["cardiology", "doctor"]));
    }

    #[test]
    fn announces_first_satisfied_level() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        let list = ["doctor", "cardiology"];
        f.register(f.certifier, &staff, &list);
        let r = f.request(&staff, f.chain.now());
        assert!(r.is_success(), "{r:?}");
        assert_eq!(avpa::decode_verify_output(&r.output), Some(2));
        assert_eq!(f.structure.classify(&attrs(&list).into_iter().collect()), Some(2));
        f.chain.mine_block();
        let evs = f.chain.query_events(&EventFilter::default().contract(f.avpa).name(LOG_ANNOUNCE));
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].field("level"), Some(&EventValue::Uint(2)));
        assert_eq!(evs[0].field("signer"), Some(&EventValue::Address(staff.address())));
        assert_eq!(
            evs[0].field("attributes").and_then(|v| v.as_strings()).unwrap(),
            ["cardiology".to_string(), "doctor".to_string()]
        );
    }

    #[test]
    fn unmatched_attributes_succeed_silently() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        f.register(f.certifier, &staff, &["janitor"]);
        let r = f.request(&staff, f.chain.now());
        assert!(r.is_success());
        assert!(r.events.is_empty());
        assert_eq!(avpa::decode_verify_output(&r.output), None);
    }

    #[test]
    fn replayed_signature_reverts() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        f.register(f.certifier, &staff, &["nurse"]);
        let ts = f.chain.now();
        assert!(f.request(&staff, ts).is_success());
        f.chain.mine_block();
        let again = f.request(&staff, ts);
        assert_eq!(again.status, TxStatus::Reverted("replayed signature".into()));
        assert_eq!(f.chain.replay_registry().len(), 1);
    }

    #[test]
    fn sender_must_be_signer() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        f.register(f.certifier, &staff, &["nurse"]);
        let (msg, sig) = sign_timestamped(&staff, b"id", f.chain.now());
        let args = avpa::encode_verify_request(&msg, &sig);
        let r = f.chain.submit_tx(Transaction::call(f.issuer, f.avpa, "verifyRequest", args, GAS)).unwrap();
        assert_eq!(r.status, TxStatus::Reverted("signer is not the sender".into()));
        assert!(f.chain.replay_registry().is_empty());

        let mut forged = sig;
        forged.timestamp += 1;
        let args = avpa::encode_verify_request(&msg, &forged);
        let r = f.chain.submit_tx(Transaction::call(staff.address(), f.avpa, "verifyRequest", args, GAS)).unwrap();
        assert!(matches!(r.status, TxStatus::Reverted(_)));
    }

    #[test]
    fn freshness_and_validity_windows() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        f.register(f.certifier, &staff, &["nurse"]);
        let future = f.request(&staff, f.chain.now() + 1);
        assert_eq!(future.status, TxStatus::Reverted("signature timestamp is in the future".into()));
        let ts = f.chain.now();
        for _ in 0..=DEFAULT_FRESHNESS_WINDOW {
            f.chain.mine_block();
        }
        assert_eq!(f.request(&staff, ts).status, TxStatus::Reverted("stale signature".into()));
        assert!(f.request(&staff, ts + 1).is_success());

        let unregistered = KeyPair::from_seed(44);
        f.chain.open_account(unregistered.address());
        let r = f.request(&unregistered, f.chain.now());
        assert!(r.is_success());
        assert!(r.events.is_empty());
    }

    #[test]
    fn expired_registration_reverts() {
        let certifier = KeyPair::from_seed(1).address();
        let mut chain = new_chain(GasSchedule::default(), [certifier]).unwrap();
        let (smr, _) = chain.deploy_contract(smr::KIND, smr::encode_init(5, &[certifier]), certifier, GAS).unwrap();
        let config = AvpaConfig {
            validity_window: 3,
            ..AvpaConfig::new(smr, structure())
        };
        let (avpa, _) = chain.deploy_contract(avpa::KIND, config.encode(), certifier, GAS).unwrap();
        let staff = KeyPair::from_seed(10);
        chain.open_account(staff.address());
        let args = smr::encode_add_staff_member(&staff.address(), b"id", &attrs(&["nurse"]), staff.public(), 5);
        chain.submit_tx(Transaction::call(certifier, smr, "addStaffMember", args, GAS)).unwrap();
        let ask = |chain: &mut Chain| {
            let (msg, sig) = sign_timestamped(&staff, b"id", chain.now());
            let args = avpa::encode_verify_request(&msg, &sig);
            chain.submit_tx(Transaction::call(staff.address(), avpa, "verifyRequest", args, GAS)).unwrap()
        };
        for _ in 0..3 {
            chain.mine_block();
        }
        assert!(ask(&mut chain).is_success());
        chain.mine_block();
        assert_eq!(ask(&mut chain).status, TxStatus::Reverted("registration expired".into()));
    }

    #[test]
    fn invalid_structure_rejected_at_deploy() {
        let mut f = fixture();
        let owner = KeyPair::from_seed(3).address();
        let bad = PrivilegeStructure::new_unchecked(vec![]);
        let r = f.chain.deploy_contract(avpa::KIND, AvpaConfig::new(f.smr, bad).encode(), owner, GAS).unwrap().1;
        assert!(matches!(r.status, TxStatus::Reverted(ref m) if m.starts_with("invalid structure")));
        let r = f
            .chain
            .deploy_contract(avpa::KIND, AvpaConfig::new(f.gk, structure()).encode(), owner, GAS)
            .unwrap()
            .1;
        assert!(matches!(r.status, TxStatus::Reverted(_)));
    }

    #[test]
    fn gatekeeper_only_lets_issuers_log() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10).address();
        let loc = hash(b"key blob");
        let ok = |s: Address, d: Digest, f: &mut Fixture| {
            f.chain
                .submit_tx(Transaction::call(s, f.gk, "addKey", gk::encode_add_key(&staff, &d), GAS))
                .unwrap()
        };
        assert!(ok(f.issuer, loc, &mut f).is_success());
        let r = ok(f.certifier, loc, &mut f);
        assert_eq!(r.status, TxStatus::Reverted("sender is not an issuer".into()));
        assert!(ok(f.issuer, hash(b"second"), &mut f).is_success());
        f.chain.mine_block();
        let evs = f.chain.query_events(&EventFilter::default().name(LOG_KEYS));
        assert_eq!(evs.len(), 2);
        assert_eq!(evs[0].field("location"), Some(&EventValue::Digest(loc)));
        assert_eq!(evs[1].field("location"), Some(&EventValue::Digest(hash(b"second"))));
        assert_eq!(evs[0].field("staff"), Some(&EventValue::Address(staff)));
    }

    #[test]
    fn record_locations_owner_only() {
        let mut f = fixture();
        let owner = KeyPair::from_seed(3).address();
        let locs = [hash(b"a"), hash(b"b")];
        let args = avpa::encode_set_record_locations(2, &locs);
        let r = f.chain.submit_tx(Transaction::call(f.issuer, f.avpa, "setRecordLocations", args.clone(), GAS));
        assert!(matches!(r.unwrap().status, TxStatus::Reverted(_)));
        assert!(f.chain.submit_tx(Transaction::call(owner, f.avpa, "setRecordLocations", args, GAS)).unwrap().is_success());
        let out = f.chain.view(&f.avpa, "getRecordLocations", &avpa::encode_level(2)).unwrap();
        let k = avpa::decode_structure(&f.chain.view(&f.avpa, "structure", &[]).unwrap()).unwrap();
        assert_eq!(k, f.structure);
        assert_eq!(avpa::decode_locations(&out).unwrap(), locs);
        let bad = avpa::encode_set_record_locations(4, &locs);
        let r = f.chain.submit_tx(Transaction::call(owner, f.avpa, "setRecordLocations", bad, GAS)).unwrap();
        assert!(matches!(r.status, TxStatus::Reverted(_)));
    }

    #[test]
    fn contract_state_survives_export() {
        let mut f = fixture();
        let staff = KeyPair::from_seed(10);
        f.register(f.certifier, &staff, &["nurse"]);
        f.request(&staff, f.chain.now());
        f.chain.mine_block();
        let back = import_chain(&f.chain.to_json()).unwrap();
        assert_eq!(back.state_bytes(), f.chain.state_bytes());
        assert_eq!(back.head().hash, f.chain.head().hash);
    }

    fn deploy_gas(chain: &mut Chain, kind: &str, args: Vec<u8>, sender: Address) -> u64 {
        let (_, r) = chain.deploy_contract(kind, args, sender, GAS).unwrap();
        assert!(r.is_success(), "{r:?}");
        r.gas_used
    }

    #[test]
    fn deployment_cost_trends() {
        let sender = KeyPair::from_seed(1).address();
        let mut chain = new_chain(GasSchedule::default(), [sender]).unwrap();
        let smr_a = deploy_gas(&mut chain, smr::KIND, smr::encode_init(10, &[sender]), sender);
        let smr_b = deploy_gas(&mut chain, smr::KIND, smr::encode_init(50, &[sender]), sender);
        assert_eq!(smr_a, smr_b);
        let smr = crate::ledger::contract_address(&sender, 0);
        let mut prev = 0;
        for n in [25, 50, 100] {
            let g = deploy_gas(&mut chain, avpa::KIND, AvpaConfig::new(smr, synthetic_structure(5, n).unwrap()).encode(), sender);
            assert!(g > prev, "N={n}: {g} <= {prev}");
            prev = g;
        }
        let gk_a = deploy_gas(&mut chain, gk::KIND, gk::encode_init(&[sender]), sender);
        let gk_b = deploy_gas(&mut chain, gk::KIND, gk::encode_init(&[sender]), sender);
        assert_eq!(gk_a, gk_b);
    }

    #[test]
    fn execution_cost_trends_in_up_bound() {
        let sender = KeyPair::from_seed(1).address();
        let staff = KeyPair::from_seed(10);
        let mut add_costs = Vec::new();
        let mut key_costs = BTreeSet::new();
        for up in [10u32, 20, 30, 40, 50] {
            let mut chain = new_chain(GasSchedule::default(), [sender]).unwrap();
            let (smr, _) = chain.deploy_contract(smr::KIND, smr::encode_init(up, &[sender]), sender, GAS).unwrap();
            let (gk, _) = chain.deploy_contract(gk::KIND, gk::encode_init(&[sender]), sender, GAS).unwrap();
            let args = smr::encode_add_staff_member(&staff.address(), b"id", &attrs(&["a", "b"]), staff.public(), up);
            add_costs.push(chain.gas_estimate(&Transaction::call(sender, smr, "addStaffMember", args, 1)).unwrap());
            let args = gk::encode_add_key(&staff.address(), &hash(b"k"));
            key_costs.insert(chain.gas_estimate(&Transaction::call(sender, gk, "addKey", args, 1)).unwrap());
        }
        assert!(add_costs.windows(2).all(|w| w[1] > w[0]), "{add_costs:?}");
        assert_eq!(key_costs.len(), 1);
    }
}
