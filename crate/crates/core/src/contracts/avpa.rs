//! Attribute verification and privilege announcement.
//!
//! `verifyRequest` authenticates one timestamped signature, pulls the
//! signer's attributes from the registry and announces the first privilege
//! level they satisfy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    malformed, read_address, smr, AVPA_CODE_SIZE, DEFAULT_FRESHNESS_WINDOW, DEFAULT_VALIDITY_WINDOW, LOG_ANNOUNCE,
};
use crate::crypto::codec::{Reader, Writer};
use crate::crypto::{hash_concat, recover, Address, Digest, Signature};
use crate::ledger::{Contract, Env, EventValue, ExecError, GasOp, Meter};
use crate::policy::{satisfy, validate_structure, PrivilegeStructure};

pub const KIND: &str = "avpa";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvpaConfig {
    pub smr: Address,
    pub structure: PrivilegeStructure,
    /// Blocks a registration stays valid.
    pub validity_window: u64,
    /// Maximum age of a request signature, in blocks.
    pub freshness_window: u64,
}

impl AvpaConfig {
    pub fn new(smr: Address, structure: PrivilegeStructure) -> Self {
        AvpaConfig {
            smr,
            structure,
            validity_window: DEFAULT_VALIDITY_WINDOW,
            freshness_window: DEFAULT_FRESHNESS_WINDOW,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.fixed(&self.smr.0)
            .u64(self.validity_window)
            .u64(self.freshness_window)
            .u32(self.structure.k() as u32);
        for level in self.structure.levels() {
            w.str(&level.to_string());
        }
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, ExecError> {
        let mut r = Reader::versioned(bytes).map_err(malformed)?;
        let smr = read_address(&mut r)?;
        let validity_window = r.u64().map_err(malformed)?;
        let freshness_window = r.u64().map_err(malformed)?;
        let k = r.u32().map_err(malformed)?;
        let mut levels = Vec::new();
        for _ in 0..k {
            levels.push(r.str().map_err(malformed)?.to_string());
        }
        r.finish().map_err(malformed)?;
        let structure =
            PrivilegeStructure::parse(&levels).map_err(|e| ExecError::revert(format!("invalid structure: {e}")))?;
        Ok(AvpaConfig {
            smr,
            structure,
            validity_window,
            freshness_window,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Avpa {
    pub owner: Address,
    #[serde(flatten)]
    pub config: AvpaConfig,
    /// Level to CAS digests of the material published for that level.
    pub record_locations: BTreeMap<u32, Vec<Digest>>,
}

pub fn encode_verify_request(msg: &Digest, sig: &Signature) -> Vec<u8> {
    let mut w = Writer::versioned();
    w.fixed(&msg.0).bytes(&sig.to_bytes());
    w.finish()
}

pub fn encode_set_record_locations(level: u32, locations: &[Digest]) -> Vec<u8> {
    let mut w = Writer::versioned();
    w.u32(level).u32(locations.len() as u32);
    for d in locations {
        w.fixed(&d.0);
    }
    w.finish()
}

pub fn encode_level(level: u32) -> Vec<u8> {
    let mut w = Writer::versioned();
    w.u32(level);
    w.finish()
}

pub fn decode_structure(bytes: &[u8]) -> Result<PrivilegeStructure, ExecError> {
    let mut r = Reader::versioned(bytes).map_err(malformed)?;
    let k = r.u32().map_err(malformed)?;
    let levels = (0..k)
        .map(|_| r.str().map(str::to_string).map_err(malformed))
        .collect::<Result<Vec<_>, _>>()?;
    r.finish().map_err(malformed)?;
    PrivilegeStructure::parse(&levels).map_err(|e| ExecError::revert(e.to_string()))
}

pub fn decode_locations(bytes: &[u8]) -> Result<Vec<Digest>, ExecError> {
    let mut r = Reader::versioned(bytes).map_err(malformed)?;
    let n = r.u32().map_err(malformed)?;
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        out.push(Digest(r.array().map_err(malformed)?));
    }
    r.finish().map_err(malformed)?;
    Ok(out)
}

/// `verifyRequest` output: the announced level, or `None` if nothing matched.
pub fn decode_verify_output(bytes: &[u8]) -> Option<usize> {
    let v = u64::from_le_bytes(bytes.try_into().ok()?);
    (v != 0).then_some(v as usize)
}

/// Key under which an accepted request is remembered by the replay registry.
pub fn replay_key(msg: &Digest, sig: &Signature) -> Digest {
    hash_concat(&[b"ehrchain/replay/v1", &msg.0, &sig.to_bytes()])
}

pub(super) fn deploy(env: &mut Env<'_>, args: &[u8]) -> Result<Box<dyn Contract>, ExecError> {
    let config = AvpaConfig::decode(args)?;
    validate_structure(&config.structure).map_err(|e| ExecError::revert(format!("invalid structure: {e}")))?;
    if env.kind_of(&config.smr) != Some(smr::KIND) {
        return Err(ExecError::revert("smr address does not hold a registry"));
    }
    env.charge(GasOp::CodeByte, AVPA_CODE_SIZE)?;
    // smr, owner, windows, level count, then one slot per level and per leaf
    let slots = 5 + config.structure.k() as u64 + config.structure.total_attributes() as u64;
    env.charge(GasOp::StorageWrite, slots)?;
    Ok(Box::new(Avpa {
        owner: env.sender,
        config,
        record_locations: BTreeMap::new(),
    }))
}

pub(super) fn restore(v: &serde_json::Value) -> Result<Box<dyn Contract>, String> {
    serde_json::from_value::<Avpa>(v.clone())
        .map(|c| Box::new(c) as Box<dyn Contract>)
        .map_err(|e| e.to_string())
}

impl Avpa {
    fn verify_request(&mut self, env: &mut Env<'_>, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        let mut r = Reader::versioned(args).map_err(malformed)?;
        let msg = Digest(r.array().map_err(malformed)?);
        let sig = Signature::from_bytes(r.bytes().map_err(malformed)?)
            .map_err(|_| ExecError::revert("malformed signature"))?;
        r.finish().map_err(malformed)?;

        env.charge(GasOp::Ecrecover, 1)?;
        let signer = recover(&msg, &sig).map_err(|_| ExecError::revert("invalid signature"))?;
        if signer != env.sender {
            return Err(ExecError::revert("signer is not the sender"));
        }

        if !env.replay_insert(replay_key(&msg, &sig))? {
            return Err(ExecError::revert("replayed signature"));
        }

        let now = env.now();
        if sig.timestamp > now {
            return Err(ExecError::revert("signature timestamp is in the future"));
        }
        if now - sig.timestamp > self.config.freshness_window {
            return Err(ExecError::revert("stale signature"));
        }

        let who = smr::encode_address(&signer);
        let registration = smr::decode_registration(&env.call_view(self.config.smr, "getRegistration", &who)?)?;
        // unregistered signers fall through with an empty attribute set
        if let Some((registered_at, _)) = registration {
            if now.saturating_sub(registered_at) > self.config.validity_window {
                return Err(ExecError::revert("registration expired"));
            }
        }

        let fetched = smr::decode_attributes(&env.call_view(self.config.smr, "getAttributes", &who)?)?;
        let held: BTreeSet<_> = fetched.iter().cloned().collect();
        for (i, policy) in self.config.structure.levels().iter().enumerate() {
            // every leaf is checked against every fetched slot
            env.charge(GasOp::Compare, (policy.leaf_count() * fetched.len().max(1)) as u64)?;
            if satisfy(policy, &held) {
                let level = i as u64 + 1;
                let payload = BTreeMap::from([
                    ("signer".to_string(), EventValue::Address(signer)),
                    (
                        "attributes".to_string(),
                        EventValue::Strings(fetched.iter().map(|a| a.as_str().to_string()).collect()),
                    ),
                    ("level".to_string(), EventValue::Uint(level)),
                ]);
                env.emit(LOG_ANNOUNCE, payload)?;
                return Ok(level.to_le_bytes().to_vec());
            }
        }
        Ok(0u64.to_le_bytes().to_vec())
    }

    fn set_record_locations(&mut self, env: &mut Env<'_>, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        env.charge(GasOp::StorageRead, 1)?;
        if env.sender != self.owner {
            return Err(ExecError::revert("sender is not the owner"));
        }
        let mut r = Reader::versioned(args).map_err(malformed)?;
        let level = r.u32().map_err(malformed)?;
        if level == 0 || level as usize > self.config.structure.k() {
            return Err(ExecError::revert(format!("no level {level}")));
        }
        let n = r.u32().map_err(malformed)?;
        let mut locations = Vec::with_capacity(n as usize);
        for _ in 0..n {
            locations.push(Digest(r.array().map_err(malformed)?));
        }
        r.finish().map_err(malformed)?;
        env.charge(GasOp::StorageWrite, 1 + n as u64)?;
        self.record_locations.insert(level, locations);
        Ok(Vec::new())
    }
}

impl Contract for Avpa {
    fn kind(&self) -> &'static str {
        KIND
    }

    fn execute(&mut self, env: &mut Env<'_>, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        match function {
            "verifyRequest" => self.verify_request(env, args),
            "setRecordLocations" => self.set_record_locations(env, args),
            _ => self.view(&mut env.meter, function, args),
        }
    }

    fn view(&self, meter: &mut Meter<'_>, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        meter.charge(GasOp::StorageRead, 1)?;
        match function {
            "smr" => Ok(smr::encode_address(&self.config.smr)),
            "getRecordLocations" => {
                let mut r = Reader::versioned(args).map_err(malformed)?;
                let level = r.u32().map_err(malformed)?;
                r.finish().map_err(malformed)?;
                let locs = self.record_locations.get(&level).map(Vec::as_slice).unwrap_or(&[]);
                let mut w = Writer::versioned();
                w.u32(locs.len() as u32);
                for d in locs {
                    w.fixed(&d.0);
                }
                Ok(w.finish())
            }
            "structure" => {
                let mut w = Writer::versioned();
                w.u32(self.config.structure.k() as u32);
                for level in self.config.structure.levels() {
                    w.str(&level.to_string());
                }
                Ok(w.finish())
            }
            _ => Err(ExecError::revert(format!("avpa has no function {function:?}"))),
        }
    }

    fn clone_box(&self) -> Box<dyn Contract> {
        Box::new(self.clone())
    }

    fn export(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("avpa state serializes")
    }
}
