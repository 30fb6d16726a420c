//! Deterministic single-operator blockchain simulator.
//!
//! Contracts are native Rust state machines registered per kind. Every
//! transaction runs against a private copy of its target, and the copy
//! replaces the stored contract only when execution succeeds.

mod chain;
mod gas;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Address, Digest};

pub use chain::{contract_address, Chain, ChainDocument, ContractDocument, DeployFn, RestoreFn};
pub use gas::{GasMeter, GasOp, GasSchedule};

/// Gas limit used for off-chain estimates and view calls.
pub const BLOCK_GAS_LIMIT: u64 = 30_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("cost table has no entry for {0:?}")]
    IncompleteCostTable(GasOp),
    #[error("unknown sender account {0}")]
    UnknownSender(Address),
    #[error("malformed transaction: {0}")]
    MalformedTransaction(String),
    #[error("contract kind {0:?} is not registered")]
    UnknownKind(String),
    #[error("no contract at {0}")]
    UnknownContract(Address),
    #[error("chain integrity violated at height {0}")]
    Integrity(u64),
    #[error("dry run failed: {0:?}")]
    DryRunFailed(TxStatus),
    #[error("chain document: {0}")]
    Document(String),
}

/// Aborts contract execution. Any state touched so far is discarded.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("reverted: {0}")]
    Revert(String),
    #[error("out of gas")]
    OutOfGas,
}

impl ExecError {
    pub fn revert(reason: impl Into<String>) -> Self {
        ExecError::Revert(reason.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Create a new contract of the named kind.
    Deploy(String),
    Call(Address),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub target: Target,
    pub function: String,
    #[serde(with = "hex::serde")]
    pub args: Vec<u8>,
    pub gas_limit: u64,
    pub gas_price: u64,
}

impl Transaction {
    pub fn call(sender: Address, contract: Address, function: &str, args: Vec<u8>, gas_limit: u64) -> Self {
        Transaction {
            sender,
            target: Target::Call(contract),
            function: function.to_string(),
            args,
            gas_limit,
            gas_price: 1,
        }
    }

    pub fn deploy(sender: Address, kind: &str, init_args: Vec<u8>, gas_limit: u64) -> Self {
        Transaction {
            sender,
            target: Target::Deploy(kind.to_string()),
            function: String::new(),
            args: init_args,
            gas_limit,
            gas_price: 1,
        }
    }

    /// Bytes billed as calldata.
    pub fn calldata_len(&self) -> usize {
        self.function.len() + self.args.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "reason")]
pub enum TxStatus {
    Success,
    Reverted(String),
    OutOfGas,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventValue {
    Address(Address),
    Digest(Digest),
    Uint(u64),
    Strings(Vec<String>),
}

impl EventValue {
    /// Bytes billed for logging this value (32-byte words, like EVM log data).
    pub fn billed_len(&self) -> u64 {
        match self {
            EventValue::Address(_) | EventValue::Digest(_) | EventValue::Uint(_) => 32,
            EventValue::Strings(v) => 32 * (1 + v.len() as u64),
        }
    }

    pub fn as_address(&self) -> Option<Address> {
        match self {
            EventValue::Address(a) => Some(*a),
            _ => None,
        }
    }

    pub fn as_digest(&self) -> Option<Digest> {
        match self {
            EventValue::Digest(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_uint(&self) -> Option<u64> {
        match self {
            EventValue::Uint(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_strings(&self) -> Option<&[String]> {
        match self {
            EventValue::Strings(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub contract: Address,
    pub name: String,
    pub payload: BTreeMap<String, EventValue>,
    pub block_height: u64,
    pub tx_index: u32,
}

impl Event {
    pub fn field(&self, name: &str) -> Option<&EventValue> {
        self.payload.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub status: TxStatus,
    pub gas_used: u64,
    pub events: Vec<Event>,
    /// Set for successful deployments.
    pub contract_address: Option<Address>,
    #[serde(with = "hex::serde")]
    pub output: Vec<u8>,
}

impl Receipt {
    pub fn is_success(&self) -> bool {
        self.status == TxStatus::Success
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_root: Digest,
    pub receipt_root: Digest,
    pub hash: Digest,
    pub transactions: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
}

/// Selects events by contract, name and inclusive height range.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventFilter {
    pub contract: Option<Address>,
    pub name: Option<String>,
    pub from_height: Option<u64>,
    pub to_height: Option<u64>,
}

impl EventFilter {
    pub fn contract(mut self, c: Address) -> Self {
        self.contract = Some(c);
        self
    }

    pub fn name(mut self, n: &str) -> Self {
        self.name = Some(n.to_string());
        self
    }

    pub fn heights(mut self, from: u64, to: u64) -> Self {
        self.from_height = Some(from);
        self.to_height = Some(to);
        self
    }

    pub fn matches(&self, e: &Event) -> bool {
        self.contract.is_none_or(|c| c == e.contract)
            && self.name.as_deref().is_none_or(|n| n == e.name)
            && self.from_height.is_none_or(|h| e.block_height >= h)
            && self.to_height.is_none_or(|h| e.block_height <= h)
    }
}

/// Gas accounting handle passed to contract code.
pub struct Meter<'a> {
    meter: &'a mut GasMeter,
    schedule: &'a GasSchedule,
}

impl<'a> Meter<'a> {
    pub fn new(meter: &'a mut GasMeter, schedule: &'a GasSchedule) -> Self {
        Meter { meter, schedule }
    }

    pub fn charge(&mut self, op: GasOp, units: u64) -> Result<(), ExecError> {
        let cost = self.schedule.cost(op).saturating_mul(units);
        self.meter.charge(cost)
    }

    pub fn used(&self) -> u64 {
        self.meter.used()
    }
}

/// Execution context for one transaction.
pub struct Env<'a> {
    pub sender: Address,
    /// Address of the executing (or deploying) contract.
    pub this: Address,
    /// Height of the block that will include this transaction.
    pub height: u64,
    pub meter: Meter<'a>,
    tx_index: u32,
    events: Vec<Event>,
    world: &'a BTreeMap<Address, Box<dyn Contract>>,
    replay: &'a BTreeSet<Digest>,
    replay_new: Vec<Digest>,
}

impl<'a> Env<'a> {
    /// Simulated clock: one tick per block.
    pub fn now(&self) -> u64 {
        self.height
    }

    pub fn charge(&mut self, op: GasOp, units: u64) -> Result<(), ExecError> {
        self.meter.charge(op, units)
    }

    pub fn emit(&mut self, name: &str, payload: BTreeMap<String, EventValue>) -> Result<(), ExecError> {
        let bytes: u64 = payload.values().map(EventValue::billed_len).sum();
        self.charge(GasOp::EventBase, 1)?;
        self.charge(GasOp::EventByte, bytes)?;
        self.events.push(Event {
            contract: self.this,
            name: name.to_string(),
            payload,
            block_height: self.height,
            tx_index: self.tx_index,
        });
        Ok(())
    }

    /// Records `key` in the shared replay registry. Returns `false` if it was already present.
    pub fn replay_insert(&mut self, key: Digest) -> Result<bool, ExecError> {
        self.charge(GasOp::StorageRead, 1)?;
        if self.replay.contains(&key) || self.replay_new.contains(&key) {
            return Ok(false);
        }
        self.charge(GasOp::StorageWrite, 1)?;
        self.replay_new.push(key);
        Ok(true)
    }

    /// Read-only call into another contract. Failures revert the caller.
    pub fn call_view(&mut self, target: Address, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        self.charge(GasOp::ExternalCall, 1)?;
        let world = self.world;
        let contract = world
            .get(&target)
            .ok_or_else(|| ExecError::revert(format!("external call to unknown contract {target}")))?;
        match contract.view(&mut self.meter, function, args) {
            Ok(out) => Ok(out),
            Err(ExecError::OutOfGas) => Err(ExecError::OutOfGas),
            Err(ExecError::Revert(r)) => Err(ExecError::revert(format!("external call failed: {r}"))),
        }
    }

    /// Kind of the contract at `addr`, if any.
    pub fn kind_of(&self, addr: &Address) -> Option<&'static str> {
        self.world.get(addr).map(|c| c.kind())
    }
}

/// A contract kind's native implementation.
pub trait Contract: Send + Sync {
    fn kind(&self) -> &'static str;

    /// State-changing entry point.
    fn execute(&mut self, env: &mut Env<'_>, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError>;

    /// Read-only entry point.
    fn view(&self, meter: &mut Meter<'_>, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError>;

    fn clone_box(&self) -> Box<dyn Contract>;

    /// Canonical JSON form of the full state; used for export and snapshots.
    fn export(&self) -> serde_json::Value;
}

impl Clone for Box<dyn Contract> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

impl std::fmt::Debug for dyn Contract {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Contract({})", self.kind())
    }
}
