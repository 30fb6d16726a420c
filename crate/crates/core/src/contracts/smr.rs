//! Staff member registry: certifiers bind staff addresses to attribute sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{malformed, read_address, read_address_list, write_address_list, SMR_CODE_SIZE};
use crate::crypto::codec::{Reader, Writer};
use crate::crypto::{Address, PublicKey};
use crate::ledger::{Contract, Env, ExecError, GasOp, Meter};
use crate::policy::Attribute;

pub const KIND: &str = "smr";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaffEntry {
    #[serde(with = "hex::serde")]
    pub staff_id: Vec<u8>,
    pub attributes: Vec<Attribute>,
    /// Compressed SEC1 key; lets issuers encrypt to the staff member.
    #[serde(with = "hex::serde")]
    pub public_key: Vec<u8>,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Smr {
    pub up_bound: u32,
    pub certifiers: BTreeSet<Address>,
    pub registry: BTreeMap<Address, StaffEntry>,
}

pub fn encode_init(up_bound: u32, certifiers: &[Address]) -> Vec<u8> {
    let mut w = Writer::versioned();
    w.u32(up_bound);
    write_address_list(&mut w, certifiers);
    w.finish()
}

/// Arguments of `addStaffMember`. The attribute array is padded with empty
/// strings to `up_bound` slots, as a fixed-size array would be.
pub fn encode_add_staff_member(
    staff: &Address,
    staff_id: &[u8],
    attributes: &[Attribute],
    public_key: &PublicKey,
    up_bound: u32,
) -> Vec<u8> {
    let mut w = Writer::versioned();
    w.fixed(&staff.0).bytes(staff_id).bytes(&public_key.to_sec1());
    let slots = (up_bound as usize).max(attributes.len());
    w.u32(slots as u32);
    for i in 0..slots {
        w.str(attributes.get(i).map_or("", |a| a.as_str()));
    }
    w.finish()
}

pub fn encode_address(addr: &Address) -> Vec<u8> {
    let mut w = Writer::versioned();
    w.fixed(&addr.0);
    w.finish()
}

pub fn decode_address(bytes: &[u8]) -> Result<Address, ExecError> {
    let mut r = Reader::versioned(bytes).map_err(malformed)?;
    let a = read_address(&mut r)?;
    r.finish().map_err(malformed)?;
    Ok(a)
}

pub fn decode_up_bound(bytes: &[u8]) -> Result<u32, ExecError> {
    let mut r = Reader::versioned(bytes).map_err(malformed)?;
    let v = r.u32().map_err(malformed)?;
    r.finish().map_err(malformed)?;
    Ok(v)
}

pub fn encode_attributes(attrs: &[Attribute]) -> Vec<u8> {
    let mut w = Writer::versioned();
    w.u32(attrs.len() as u32);
    for a in attrs {
        w.str(a.as_str());
    }
    w.finish()
}

pub fn decode_attributes(bytes: &[u8]) -> Result<Vec<Attribute>, ExecError> {
    let mut r = Reader::versioned(bytes).map_err(malformed)?;
    let n = r.u32().map_err(malformed)?;
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let s = r.str().map_err(malformed)?;
        out.push(Attribute::new(s).map_err(|e| ExecError::revert(e.to_string()))?);
    }
    r.finish().map_err(malformed)?;
    Ok(out)
}

/// `getRegistration` output: `None` for unregistered addresses.
pub fn decode_registration(bytes: &[u8]) -> Result<Option<(u64, Vec<u8>)>, ExecError> {
    let mut r = Reader::versioned(bytes).map_err(malformed)?;
    let out = match r.u8().map_err(malformed)? {
        0 => None,
        _ => {
            let at = r.u64().map_err(malformed)?;
            let pk = r.bytes().map_err(malformed)?.to_vec();
            Some((at, pk))
        }
    };
    r.finish().map_err(malformed)?;
    Ok(out)
}

pub(super) fn deploy(env: &mut Env<'_>, args: &[u8]) -> Result<Box<dyn Contract>, ExecError> {
    let mut r = Reader::versioned(args).map_err(malformed)?;
    let up_bound = r.u32().map_err(malformed)?;
    let certifiers = read_address_list(&mut r)?;
    r.finish().map_err(malformed)?;
    if up_bound == 0 {
        return Err(ExecError::revert("up_bound must be positive"));
    }
    if certifiers.is_empty() {
        return Err(ExecError::revert("at least one certifier required"));
    }
    env.charge(GasOp::CodeByte, SMR_CODE_SIZE)?;
    env.charge(GasOp::StorageWrite, 1 + certifiers.len() as u64)?;
    Ok(Box::new(Smr {
        up_bound,
        certifiers: certifiers.into_iter().collect(),
        registry: BTreeMap::new(),
    }))
}

pub(super) fn restore(v: &serde_json::Value) -> Result<Box<dyn Contract>, String> {
    serde_json::from_value::<Smr>(v.clone())
        .map(|c| Box::new(c) as Box<dyn Contract>)
        .map_err(|e| e.to_string())
}

impl Smr {
    fn add_staff_member(&mut self, env: &mut Env<'_>, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        env.charge(GasOp::StorageRead, 1)?;
        if !self.certifiers.contains(&env.sender) {
            return Err(ExecError::revert("sender is not a certifier"));
        }
        let mut r = Reader::versioned(args).map_err(malformed)?;
        let staff = read_address(&mut r)?;
        let staff_id = r.bytes().map_err(malformed)?.to_vec();
        let public_key = r.bytes().map_err(malformed)?.to_vec();
        let slots = r.u32().map_err(malformed)?;
        if slots > self.up_bound {
            return Err(ExecError::revert(format!(
                "attribute list has {slots} slots, capacity is {}",
                self.up_bound
            )));
        }
        let mut attributes = Vec::new();
        for _ in 0..slots {
            let raw = r.str().map_err(malformed)?;
            if !raw.is_empty() {
                let a = Attribute::new(raw).map_err(|e| ExecError::revert(e.to_string()))?;
                if !attributes.contains(&a) {
                    attributes.push(a);
                }
            }
        }
        r.finish().map_err(malformed)?;

        let pk = PublicKey::from_sec1(&public_key).map_err(|_| ExecError::revert("invalid staff public key"))?;
        if pk.address() != staff {
            return Err(ExecError::revert("staff address does not match public key"));
        }
        // id, key, timestamp, then every slot of the fixed-size array
        env.charge(GasOp::StorageWrite, 3 + self.up_bound as u64)?;
        attributes.sort();
        self.registry.insert(
            staff,
            StaffEntry {
                staff_id,
                attributes,
                public_key,
                registered_at: env.now(),
            },
        );
        Ok(Vec::new())
    }
}

impl Contract for Smr {
    fn kind(&self) -> &'static str {
        KIND
    }

    fn execute(&mut self, env: &mut Env<'_>, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        match function {
            "addStaffMember" => self.add_staff_member(env, args),
            _ => self.view(&mut env.meter, function, args),
        }
    }

    fn view(&self, meter: &mut Meter<'_>, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        match function {
            "getAttributes" => {
                let mut r = Reader::versioned(args).map_err(malformed)?;
                let who = read_address(&mut r)?;
                meter.charge(GasOp::StorageRead, self.up_bound as u64)?;
                let attrs = self.registry.get(&who).map(|e| e.attributes.as_slice()).unwrap_or(&[]);
                Ok(encode_attributes(attrs))
            }
            "getRegistration" => {
                let mut r = Reader::versioned(args).map_err(malformed)?;
                let who = read_address(&mut r)?;
                meter.charge(GasOp::StorageRead, 2)?;
                let mut w = Writer::versioned();
                match self.registry.get(&who) {
                    None => w.u8(0),
                    Some(e) => w.u8(1).u64(e.registered_at).bytes(&e.public_key),
                };
                Ok(w.finish())
            }
            "upBound" => {
                let mut w = Writer::versioned();
                w.u32(self.up_bound);
                Ok(w.finish())
            }
            _ => Err(ExecError::revert(format!("smr has no function {function:?}"))),
        }
    }

    fn clone_box(&self) -> Box<dyn Contract> {
        Box::new(self.clone())
    }

    fn export(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("smr state serializes")
    }
}
