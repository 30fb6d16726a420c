//! Key gatekeeper: issuers announce where a staff member's key was stored.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{malformed, read_address, read_address_list, write_address_list, GK_CODE_SIZE, LOG_KEYS};
use crate::crypto::codec::{Reader, Writer};
use crate::crypto::{Address, Digest};
use crate::ledger::{Contract, Env, EventValue, ExecError, GasOp, Meter};

pub const KIND: &str = "gk";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gk {
    pub issuers: BTreeSet<Address>,
}

pub fn encode_init(issuers: &[Address]) -> Vec<u8> {
    let mut w = Writer::versioned();
    write_address_list(&mut w, issuers);
    w.finish()
}

pub fn encode_add_key(staff: &Address, location: &Digest) -> Vec<u8> {
    let mut w = Writer::versioned();
    w.fixed(&staff.0).fixed(&location.0);
    w.finish()
}

pub(super) fn deploy(env: &mut Env<'_>, args: &[u8]) -> Result<Box<dyn Contract>, ExecError> {
    let mut r = Reader::versioned(args).map_err(malformed)?;
    let issuers = read_address_list(&mut r)?;
    r.finish().map_err(malformed)?;
    if issuers.is_empty() {
        return Err(ExecError::revert("at least one issuer required"));
    }
    env.charge(GasOp::CodeByte, GK_CODE_SIZE)?;
    env.charge(GasOp::StorageWrite, issuers.len() as u64)?;
    Ok(Box::new(Gk {
        issuers: issuers.into_iter().collect(),
    }))
}

pub(super) fn restore(v: &serde_json::Value) -> Result<Box<dyn Contract>, String> {
    serde_json::from_value::<Gk>(v.clone())
        .map(|c| Box::new(c) as Box<dyn Contract>)
        .map_err(|e| e.to_string())
}

impl Contract for Gk {
    fn kind(&self) -> &'static str {
        KIND
    }

    fn execute(&mut self, env: &mut Env<'_>, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        match function {
            "addKey" => {
                env.charge(GasOp::StorageRead, 1)?;
                if !self.issuers.contains(&env.sender) {
                    return Err(ExecError::revert("sender is not an issuer"));
                }
                let mut r = Reader::versioned(args).map_err(malformed)?;
                let staff = read_address(&mut r)?;
                let location = Digest(r.array::<32>().map_err(malformed)?);
                r.finish().map_err(malformed)?;
                let payload = BTreeMap::from([
                    ("staff".to_string(), EventValue::Address(staff)),
                    ("location".to_string(), EventValue::Digest(location)),
                ]);
                env.emit(LOG_KEYS, payload)?;
                Ok(Vec::new())
            }
            _ => self.view(&mut env.meter, function, args),
        }
    }

    fn view(&self, _meter: &mut Meter<'_>, function: &str, _args: &[u8]) -> Result<Vec<u8>, ExecError> {
        Err(ExecError::revert(format!("gk has no function {function:?}")))
    }

    fn clone_box(&self) -> Box<dyn Contract> {
        Box::new(self.clone())
    }

    fn export(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("gk state serializes")
    }
}
