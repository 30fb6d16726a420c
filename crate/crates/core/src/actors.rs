//! Patient, certifier, staff and key-issuer workflows over the chain and the
//! storage network.
//!
//! Operations submit transactions but never mine; callers decide when blocks
//! are sealed. The issuer only reacts to sealed announcements.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::cas::{random_salt, CasError, Network};
use crate::contracts::{
    avpa, gk, smr, AvpaConfig, DEFAULT_FRESHNESS_WINDOW, DEFAULT_VALIDITY_WINDOW, LOG_ANNOUNCE, LOG_KEYS,
};
use crate::crypto::{
    abe_decrypt, abe_encrypt, abe_keygen, abe_setup, asym_decrypt, asym_encrypt, derive_key_chain, sign_timestamped,
    sym_decrypt, sym_encrypt, AbeCiphertext, AbeMasterKey, AbePublicParams, AbeSecretKey, Address, CryptoError,
    Digest, KeyChain, KeyPair, PublicKey, SymKey,
};
use crate::ledger::{Chain, EventFilter, ExecError, LedgerError, Receipt, Transaction, TxStatus, BLOCK_GAS_LIMIT};
use crate::policy::{Attribute, PrivilegeStructure};

#[derive(Debug, Error)]
pub enum ActorError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Cas(#[from] CasError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("contract call failed: {0}")]
    Call(#[from] ExecError),
    #[error("transaction {function} failed: {status:?}")]
    TxFailed { function: String, status: TxStatus },
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("no key announcement for {0}")]
    NoKeyEvent(Address),
    #[error("no privilege announcement for {0}")]
    NoAnnouncement(Address),
    #[error("segment {level} could not be decrypted: {source}")]
    Segment { level: usize, source: CryptoError },
}

/// Submits with the estimated gas limit, or the block limit if the dry run fails
/// (so the failure is still recorded with its receipt).
pub fn send(chain: &mut Chain, mut tx: Transaction) -> Result<Receipt, LedgerError> {
    tx.gas_limit = chain.gas_estimate(&tx).unwrap_or(BLOCK_GAS_LIMIT);
    chain.submit_tx(tx)
}

fn require_success(function: &str, r: &Receipt) -> Result<(), ActorError> {
    if r.is_success() {
        Ok(())
    } else {
        Err(ActorError::TxFailed {
            function: function.to_string(),
            status: r.status.clone(),
        })
    }
}

#[derive(Debug)]
pub struct PatientProfile {
    pub keypair: KeyPair,
    /// Segments, most sensitive first.
    pub record: Vec<Vec<u8>>,
    pub structure: PrivilegeStructure,
    /// Blocks a staff registration stays valid for this record.
    pub validity_window: u64,
    /// Maximum request signature age, in blocks.
    pub freshness_window: u64,
}

impl PatientProfile {
    pub fn new(keypair: KeyPair, record: Vec<Vec<u8>>, structure: PrivilegeStructure) -> Result<Self, ActorError> {
        if record.len() != structure.k() {
            return Err(ActorError::Profile(format!(
                "record has {} segments, structure has {} levels",
                record.len(),
                structure.k()
            )));
        }
        Ok(PatientProfile {
            keypair,
            record,
            structure,
            validity_window: DEFAULT_VALIDITY_WINDOW,
            freshness_window: DEFAULT_FRESHNESS_WINDOW,
        })
    }
}

#[derive(Debug, Clone)]
pub struct StaffProfile {
    pub keypair: KeyPair,
    pub staff_id: Vec<u8>,
    pub attributes: BTreeSet<Attribute>,
}

impl StaffProfile {
    pub fn new(keypair: KeyPair, staff_id: &[u8], attributes: BTreeSet<Attribute>) -> Result<Self, ActorError> {
        if attributes.is_empty() {
            return Err(ActorError::Profile("staff member needs at least one attribute".into()));
        }
        Ok(StaffProfile {
            keypair,
            staff_id: staff_id.to_vec(),
            attributes,
        })
    }

    pub fn address(&self) -> Address {
        self.keypair.address()
    }
}

/// CAS digests published for one privilege level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelLocations {
    /// ABE-encrypted level key.
    pub key: Digest,
    /// Symmetrically encrypted segment.
    pub record: Digest,
}

#[derive(Debug)]
pub struct PreparedRecord {
    pub avpa: Address,
    pub locations: BTreeMap<usize, LevelLocations>,
    /// Salts per level, `(key, record)`. Only the patient holds these.
    pub salts: BTreeMap<usize, ([u8; 32], [u8; 32])>,
    pub keys: KeyChain,
}

/// Key issuer: holds the ABE master key and watches the chain for announcements.
#[derive(Debug)]
pub struct Issuer {
    pub keypair: KeyPair,
    master: AbeMasterKey,
    pub public_params: AbePublicParams,
    /// Last sealed height already scanned.
    pub cursor: u64,
    pub smr: Address,
    pub gk: Address,
}

impl Issuer {
    /// Runs ABE setup and publishes tokens for `universe`.
    pub fn setup<'a, R, I>(
        keypair: KeyPair,
        security_bits: u32,
        universe: I,
        smr: Address,
        gk: Address,
        rng: &mut R,
    ) -> Result<Self, ActorError>
    where
        R: RngCore + CryptoRng + ?Sized,
        I: IntoIterator<Item = &'a Attribute>,
    {
        let (mut pk, master) = abe_setup(security_bits, rng)?;
        master.publish(&mut pk, universe);
        Ok(Issuer {
            keypair,
            master,
            public_params: pk,
            cursor: 0,
            smr,
            gk,
        })
    }

    pub fn address(&self) -> Address {
        self.keypair.address()
    }

    pub fn publish<'a, I: IntoIterator<Item = &'a Attribute>>(&mut self, attrs: I) {
        self.master.publish(&mut self.public_params, attrs);
    }
}

/// Encrypts and stores the record, then deploys its AVPA and publishes the locations.
pub fn patient_prepare_record<R: RngCore + CryptoRng + ?Sized>(
    patient: &PatientProfile,
    pk: &AbePublicParams,
    chain: &mut Chain,
    network: &mut Network,
    replication: usize,
    smr: Address,
    rng: &mut R,
) -> Result<PreparedRecord, ActorError> {
    let k = patient.structure.k();
    if patient.record.len() != k {
        return Err(ActorError::Profile("record and structure sizes differ".into()));
    }
    let keys = derive_key_chain(SymKey::random(rng), k)?;
    let mut locations = BTreeMap::new();
    let mut salts = BTreeMap::new();
    for level in 1..=k {
        let sk = keys.key(level).expect("chain has k keys");
        let er = sym_encrypt(sk, &patient.record[level - 1], rng);
        let policy = patient.structure.level(level).expect("level in range");
        let esk = abe_encrypt(pk, sk.as_bytes(), policy, rng)?.to_bytes();
        let (key_salt, record_salt) = (random_salt(rng), random_salt(rng));
        let loc = LevelLocations {
            key: network.put_salted(&esk, &key_salt, replication)?,
            record: network.put_salted(&er, &record_salt, replication)?,
        };
        locations.insert(level, loc);
        salts.insert(level, (key_salt, record_salt));
    }

    let sender = patient.keypair.address();
    chain.open_account(sender);
    let config = AvpaConfig {
        validity_window: patient.validity_window,
        freshness_window: patient.freshness_window,
        ..AvpaConfig::new(smr, patient.structure.clone())
    };
    let r = send(chain, Transaction::deploy(sender, avpa::KIND, config.encode(), 1))?;
    require_success("deploy avpa", &r)?;
    let avpa_addr = r.contract_address.expect("successful deploy has an address");
    for (level, loc) in &locations {
        let args = avpa::encode_set_record_locations(*level as u32, &[loc.key, loc.record]);
        let r = send(chain, Transaction::call(sender, avpa_addr, "setRecordLocations", args, 1))?;
        require_success("setRecordLocations", &r)?;
    }
    Ok(PreparedRecord {
        avpa: avpa_addr,
        locations,
        salts,
        keys,
    })
}

/// Registers (or re-registers) `staff` in the registry.
pub fn certifier_register(
    certifier: &KeyPair,
    chain: &mut Chain,
    smr: Address,
    staff: &StaffProfile,
) -> Result<Receipt, ActorError> {
    let up_bound = smr::decode_up_bound(&chain.view(&smr, "upBound", &[])?)?;
    chain.open_account(staff.address());
    let attrs: Vec<Attribute> = staff.attributes.iter().cloned().collect();
    let args = smr::encode_add_staff_member(&staff.address(), &staff.staff_id, &attrs, staff.keypair.public(), up_bound);
    Ok(send(chain, Transaction::call(certifier.address(), smr, "addStaffMember", args, 1))?)
}

/// Renewal is a fresh registration with the current attribute set.
pub fn staff_renew_registration(
    certifier: &KeyPair,
    chain: &mut Chain,
    smr: Address,
    staff: &StaffProfile,
) -> Result<Receipt, ActorError> {
    certifier_register(certifier, chain, smr, staff)
}

/// Signs `H(staff_id ‖ now)` and submits it to the AVPA.
pub fn staff_request_access(
    staff: &StaffProfile,
    chain: &mut Chain,
    avpa_addr: Address,
    now: u64,
) -> Result<Receipt, ActorError> {
    let (msg, sig) = sign_timestamped(&staff.keypair, &staff.staff_id, now);
    chain.open_account(staff.address());
    let args = avpa::encode_verify_request(&msg, &sig);
    Ok(send(chain, Transaction::call(staff.address(), avpa_addr, "verifyRequest", args, 1))?)
}

fn announcing_contract_is_trusted(chain: &Chain, contract: &Address, smr: &Address) -> bool {
    chain.contract(contract).map(|c| c.kind()) == Some(avpa::KIND)
        && chain
            .view(contract, "smr", &[])
            .and_then(|b| smr::decode_address(&b))
            .is_ok_and(|a| a == *smr)
}

/// Grants keys for every announcement sealed since the cursor. Returns the number granted.
pub fn issuer_watch_and_grant<R: RngCore + CryptoRng + ?Sized>(
    issuer: &mut Issuer,
    chain: &mut Chain,
    network: &mut Network,
    replication: usize,
    rng: &mut R,
) -> Result<usize, ActorError> {
    let head = chain.height();
    if head <= issuer.cursor {
        return Ok(0);
    }
    let events = chain.query_events(&EventFilter::default().name(LOG_ANNOUNCE).heights(issuer.cursor + 1, head));
    let mut granted = 0;
    for ev in events {
        if !announcing_contract_is_trusted(chain, &ev.contract, &issuer.smr) {
            log::warn!("ignoring announcement from untrusted contract {}", ev.contract);
            continue;
        }
        let (Some(signer), Some(names)) = (
            ev.field("signer").and_then(|v| v.as_address()),
            ev.field("attributes").and_then(|v| v.as_strings()),
        ) else {
            log::warn!("malformed announcement at height {}", ev.block_height);
            continue;
        };
        let attrs: BTreeSet<Attribute> = match names.iter().map(|n| Attribute::new(n)).collect() {
            Ok(a) => a,
            Err(e) => {
                log::warn!("bad attribute in announcement: {e}");
                continue;
            }
        };
        let registration = chain
            .view(&issuer.smr, "getRegistration", &smr::encode_address(&signer))
            .and_then(|b| smr::decode_registration(&b))?;
        let Some(staff_pub) = registration.and_then(|(_, pk)| PublicKey::from_sec1(&pk).ok()) else {
            log::warn!("no public key on record for {signer}; skipping");
            continue;
        };
        let sk = abe_keygen(&issuer.master, &attrs)?;
        let esk = asym_encrypt(&staff_pub, &sk.to_bytes(), rng);
        let location = network.put_salted(&esk, &random_salt(rng), replication)?;
        let args = gk::encode_add_key(&signer, &location);
        let r = send(chain, Transaction::call(issuer.address(), issuer.gk, "addKey", args, 1))?;
        require_success("addKey", &r)?;
        granted += 1;
    }
    issuer.cursor = head;
    Ok(granted)
}

/// Fetches and decrypts the most recent key announced for `staff`.
pub fn staff_fetch_key(
    staff: &StaffProfile,
    chain: &Chain,
    network: &Network,
    gk_addr: Address,
) -> Result<AbeSecretKey, ActorError> {
    let me = staff.address();
    let ev = chain
        .query_events(&EventFilter::default().contract(gk_addr).name(LOG_KEYS))
        .into_iter()
        .rev()
        .find(|e| e.field("staff").and_then(|v| v.as_address()) == Some(me))
        .ok_or(ActorError::NoKeyEvent(me))?;
    let location = ev.field("location").and_then(|v| v.as_digest()).ok_or(ActorError::NoKeyEvent(me))?;
    let esk = network.get_salted(&location)?;
    let sk_bytes = asym_decrypt(&staff.keypair, &esk)?;
    Ok(AbeSecretKey::from_bytes(&sk_bytes)?)
}

/// Level most recently announced for `staff` on `avpa_addr`.
pub fn announced_level(chain: &Chain, avpa_addr: Address, staff: &Address) -> Option<usize> {
    chain
        .query_events(&EventFilter::default().contract(avpa_addr).name(LOG_ANNOUNCE))
        .into_iter()
        .rev()
        .find(|e| e.field("signer").and_then(|v| v.as_address()) == Some(*staff))
        .and_then(|e| e.field("level").and_then(|v| v.as_uint()))
        .map(|l| l as usize)
}

fn level_locations(chain: &Chain, avpa_addr: Address, level: usize) -> Result<LevelLocations, ActorError> {
    let locs = avpa::decode_locations(&chain.view(&avpa_addr, "getRecordLocations", &avpa::encode_level(level as u32))?)?;
    match locs.as_slice() {
        [key, record] => Ok(LevelLocations {
            key: *key,
            record: *record,
        }),
        _ => Err(ActorError::Call(ExecError::revert(format!("level {level} has no published locations")))),
    }
}

/// Recovers segments `i..=k`, where `i` is the staff member's announced level.
pub fn staff_fetch_record(
    staff: &StaffProfile,
    sk: &AbeSecretKey,
    chain: &Chain,
    network: &Network,
    avpa_addr: Address,
) -> Result<BTreeMap<usize, Vec<u8>>, ActorError> {
    let level = announced_level(chain, avpa_addr, &staff.address()).ok_or(ActorError::NoAnnouncement(staff.address()))?;
    fetch_segments(sk, chain, network, avpa_addr, level)
}

/// Decrypts the level key at `level` and every segment reachable from it.
pub fn fetch_segments(
    sk: &AbeSecretKey,
    chain: &Chain,
    network: &Network,
    avpa_addr: Address,
    level: usize,
) -> Result<BTreeMap<usize, Vec<u8>>, ActorError> {
    let k = avpa::decode_structure(&chain.view(&avpa_addr, "structure", &[])?)?.k();
    let top = level_locations(chain, avpa_addr, level)?;
    let esk = AbeCiphertext::from_bytes(&network.get_salted(&top.key)?)?;
    let key_bytes: [u8; 32] = abe_decrypt(&esk, sk)?
        .try_into()
        .map_err(|_| ActorError::Crypto(CryptoError::Decryption))?;
    let mut out = BTreeMap::new();
    for (j, key) in KeyChain::descend(SymKey(key_bytes), level, k)? {
        let loc = if j == level { top } else { level_locations(chain, avpa_addr, j)? };
        let er = network.get_salted(&loc.record)?;
        let plain = sym_decrypt(&key, &er).map_err(|source| ActorError::Segment { level: j, source })?;
        out.insert(j, plain);
    }
    Ok(out)
}
