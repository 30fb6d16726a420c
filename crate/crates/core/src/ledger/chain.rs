use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    Block, Contract, Env, Event, EventFilter, ExecError, GasMeter, GasOp, GasSchedule, LedgerError, Meter,
    Receipt, Target, Transaction, TxStatus, BLOCK_GAS_LIMIT,
};
use crate::crypto::codec::Writer;
use crate::crypto::{hash, hash_concat, Address, Digest};

/// Builds a new contract from its init args. Runs inside the deploying transaction.
pub type DeployFn = fn(&mut Env<'_>, &[u8]) -> Result<Box<dyn Contract>, ExecError>;

/// Rebuilds a contract from its exported state.
pub type RestoreFn = fn(&serde_json::Value) -> Result<Box<dyn Contract>, String>;

const DOCUMENT_FORMAT: &str = "ehrchain-chain/1";

#[derive(Clone, Copy)]
struct Kind {
    deploy: DeployFn,
    restore: RestoreFn,
}

struct Effect {
    address: Address,
    contract: Box<dyn Contract>,
    replay_new: Vec<Digest>,
}

/// The simulated chain. All mutation goes through `&mut self`, so one owner
/// serializes writers; sealed blocks may be read from shared references.
pub struct Chain {
    schedule: GasSchedule,
    accounts: BTreeMap<Address, u64>,
    blocks: Vec<Block>,
    pending: Vec<(Transaction, Receipt)>,
    contracts: BTreeMap<Address, Box<dyn Contract>>,
    replay: BTreeSet<Digest>,
    kinds: BTreeMap<String, Kind>,
}

impl std::fmt::Debug for Chain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Chain")
            .field("height", &self.height())
            .field("pending", &self.pending.len())
            .field("contracts", &self.contracts.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractDocument {
    pub kind: String,
    pub state: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingDocument {
    pub transaction: Transaction,
    pub receipt: Receipt,
}

/// JSON export of a whole chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDocument {
    pub format: String,
    pub gas_schedule: GasSchedule,
    /// Account address to next nonce.
    pub accounts: BTreeMap<Address, u64>,
    pub blocks: Vec<Block>,
    pub pending: Vec<PendingDocument>,
    pub contracts: BTreeMap<Address, ContractDocument>,
    pub replay_registry: BTreeSet<Digest>,
}

pub(crate) fn merkle_root(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return Digest::ZERO;
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                hash_concat(&[&pair[0].0, &right.0])
            })
            .collect();
    }
    level[0]
}

fn tx_hash(tx: &Transaction) -> Digest {
    let mut w = Writer::versioned();
    w.fixed(&tx.sender.0);
    match &tx.target {
        Target::Deploy(kind) => w.u8(0).str(kind),
        Target::Call(addr) => w.u8(1).fixed(&addr.0),
    };
    w.str(&tx.function).bytes(&tx.args).u64(tx.gas_limit).u64(tx.gas_price);
    hash(&w.finish())
}

fn receipt_hash(r: &Receipt) -> Digest {
    hash(&serde_json::to_vec(r).expect("receipt serializes"))
}

fn block_hash(height: u64, prev: &Digest, tx_root: &Digest, receipt_root: &Digest) -> Digest {
    let mut w = Writer::versioned();
    w.u64(height).fixed(&prev.0).fixed(&tx_root.0).fixed(&receipt_root.0);
    hash(&w.finish())
}

fn genesis_commitment(schedule: &GasSchedule, accounts: &BTreeSet<Address>) -> Digest {
    let doc = serde_json::json!({ "gas_schedule": schedule, "accounts": accounts });
    hash(&serde_json::to_vec(&doc).expect("genesis serializes"))
}

/// Address of the contract created by `sender`'s transaction number `nonce`.
pub fn contract_address(sender: &Address, nonce: u64) -> Address {
    Address::from_digest(&hash_concat(&[&sender.0, &nonce.to_le_bytes()]))
}

impl Chain {
    /// Creates a chain with a genesis block committing to the cost table and accounts.
    pub fn new<I>(schedule: GasSchedule, accounts: I) -> Result<Self, LedgerError>
    where
        I: IntoIterator<Item = Address>,
    {
        schedule.check_complete()?;
        let accounts: BTreeSet<Address> = accounts.into_iter().collect();
        let tx_root = genesis_commitment(&schedule, &accounts);
        let genesis = Block {
            height: 0,
            prev_hash: Digest::ZERO,
            tx_root,
            receipt_root: Digest::ZERO,
            hash: block_hash(0, &Digest::ZERO, &tx_root, &Digest::ZERO),
            transactions: Vec::new(),
            receipts: Vec::new(),
        };
        Ok(Chain {
            schedule,
            accounts: accounts.into_iter().map(|a| (a, 0)).collect(),
            blocks: vec![genesis],
            pending: Vec::new(),
            contracts: BTreeMap::new(),
            replay: BTreeSet::new(),
            kinds: BTreeMap::new(),
        })
    }

    pub fn register_kind(&mut self, kind: &str, deploy: DeployFn, restore: RestoreFn) {
        self.kinds.insert(kind.to_string(), Kind { deploy, restore });
    }

    /// Adds an externally owned account. Existing accounts keep their nonce.
    pub fn open_account(&mut self, addr: Address) {
        self.accounts.entry(addr).or_insert(0);
    }

    pub fn has_account(&self, addr: &Address) -> bool {
        self.accounts.contains_key(addr)
    }

    pub fn nonce(&self, addr: &Address) -> Option<u64> {
        self.accounts.get(addr).copied()
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    /// Height of the newest sealed block.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    /// Simulated time seen by pending transactions (the next block's height).
    pub fn now(&self) -> u64 {
        self.height() + 1
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis exists")
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn contract(&self, addr: &Address) -> Option<&dyn Contract> {
        self.contracts.get(addr).map(|c| c.as_ref())
    }

    pub fn replay_registry(&self) -> &BTreeSet<Digest> {
        &self.replay
    }

    fn run(&self, tx: &Transaction, nonce: u64, tx_index: u32) -> (Receipt, Option<Effect>) {
        let mut gas = GasMeter::new(tx.gas_limit);
        let mut meter = Meter::new(&mut gas, &self.schedule);
        let intrinsic = meter
            .charge(GasOp::TxBase, 1)
            .and_then(|_| meter.charge(GasOp::CalldataByte, tx.calldata_len() as u64));
        if intrinsic.is_err() {
            return (
                Receipt {
                    status: TxStatus::OutOfGas,
                    gas_used: tx.gas_limit,
                    events: Vec::new(),
                    contract_address: None,
                    output: Vec::new(),
                },
                None,
            );
        }

        let this = match &tx.target {
            Target::Deploy(_) => contract_address(&tx.sender, nonce),
            Target::Call(addr) => *addr,
        };
        let mut env = Env {
            sender: tx.sender,
            this,
            height: self.now(),
            meter,
            tx_index,
            events: Vec::new(),
            world: &self.contracts,
            replay: &self.replay,
            replay_new: Vec::new(),
        };
        let result: Result<(Box<dyn Contract>, Vec<u8>), ExecError> = match &tx.target {
            Target::Deploy(kind) => match self.kinds.get(kind) {
                None => Err(ExecError::revert(format!("unknown contract kind {kind:?}"))),
                Some(_) if self.contracts.contains_key(&this) => Err(ExecError::revert("address collision")),
                Some(k) => env
                    .charge(GasOp::Create, 1)
                    .and_then(|_| (k.deploy)(&mut env, &tx.args))
                    .map(|c| (c, Vec::new())),
            },
            Target::Call(addr) => match self.contracts.get(addr) {
                None => Err(ExecError::revert(format!("no contract at {addr}"))),
                Some(c) => {
                    let mut working = c.clone_box();
                    working
                        .execute(&mut env, &tx.function, &tx.args)
                        .map(|out| (working, out))
                }
            },
        };
        let Env { events, replay_new, .. } = env;

        match result {
            Ok((contract, output)) => {
                let deployed = matches!(tx.target, Target::Deploy(_)).then_some(this);
                let receipt = Receipt {
                    status: TxStatus::Success,
                    gas_used: gas.used(),
                    events,
                    contract_address: deployed,
                    output,
                };
                let effect = Effect {
                    address: this,
                    contract,
                    replay_new,
                };
                (receipt, Some(effect))
            }
            Err(e) => {
                let (status, gas_used) = match e {
                    ExecError::OutOfGas => (TxStatus::OutOfGas, tx.gas_limit),
                    ExecError::Revert(reason) => (TxStatus::Reverted(reason), gas.used()),
                };
                let receipt = Receipt {
                    status,
                    gas_used,
                    events: Vec::new(),
                    contract_address: None,
                    output: Vec::new(),
                };
                (receipt, None)
            }
        }
    }

    fn check_tx(&self, tx: &Transaction) -> Result<u64, LedgerError> {
        if tx.gas_limit == 0 {
            return Err(LedgerError::MalformedTransaction("gas_limit must be positive".into()));
        }
        self.nonce(&tx.sender).ok_or(LedgerError::UnknownSender(tx.sender))
    }

    /// Executes `tx` and queues it with its receipt for the next block.
    ///
    /// Failed transactions still consume the sender's nonce but leave all
    /// contract state and the replay registry untouched.
    pub fn submit_tx(&mut self, tx: Transaction) -> Result<Receipt, LedgerError> {
        let nonce = self.check_tx(&tx)?;
        let (receipt, effect) = self.run(&tx, nonce, self.pending.len() as u32);
        self.accounts.insert(tx.sender, nonce + 1);
        if let Some(effect) = effect {
            self.contracts.insert(effect.address, effect.contract);
            self.replay.extend(effect.replay_new);
        }
        log::debug!("tx {} -> {:?} gas={}", self.pending.len(), receipt.status, receipt.gas_used);
        self.pending.push((tx, receipt.clone()));
        Ok(receipt)
    }

    /// Deploys a contract. The returned address holds the contract only if the receipt succeeded.
    pub fn deploy_contract(
        &mut self,
        kind: &str,
        init_args: Vec<u8>,
        sender: Address,
        gas_limit: u64,
    ) -> Result<(Address, Receipt), LedgerError> {
        let nonce = self.nonce(&sender).ok_or(LedgerError::UnknownSender(sender))?;
        let addr = contract_address(&sender, nonce);
        let receipt = self.submit_tx(Transaction::deploy(sender, kind, init_args, gas_limit))?;
        Ok((addr, receipt))
    }

    /// Gas a transaction would use now, measured by a dry run under the block gas limit.
    pub fn gas_estimate(&self, tx: &Transaction) -> Result<u64, LedgerError> {
        let nonce = self.check_tx(tx)?;
        let mut probe = tx.clone();
        probe.gas_limit = BLOCK_GAS_LIMIT;
        let (receipt, _) = self.run(&probe, nonce, self.pending.len() as u32);
        match receipt.status {
            TxStatus::Success => Ok(receipt.gas_used),
            status => Err(LedgerError::DryRunFailed(status)),
        }
    }

    /// Off-chain read of a contract; not metered against any limit that matters.
    pub fn view(&self, contract: &Address, function: &str, args: &[u8]) -> Result<Vec<u8>, ExecError> {
        let c = self
            .contracts
            .get(contract)
            .ok_or_else(|| ExecError::revert(format!("no contract at {contract}")))?;
        let mut gas = GasMeter::new(u64::MAX);
        c.view(&mut Meter::new(&mut gas, &self.schedule), function, args)
    }

    /// Seals pending transactions, in submission order, into a new block.
    pub fn mine_block(&mut self) -> &Block {
        let (transactions, receipts): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending).into_iter().unzip();
        let tx_root = merkle_root(&transactions.iter().map(tx_hash).collect::<Vec<_>>());
        let receipt_root = merkle_root(&receipts.iter().map(receipt_hash).collect::<Vec<_>>());
        let height = self.now();
        let prev_hash = self.head().hash;
        let block = Block {
            height,
            prev_hash,
            tx_root,
            receipt_root,
            hash: block_hash(height, &prev_hash, &tx_root, &receipt_root),
            transactions,
            receipts,
        };
        self.blocks.push(block);
        self.head()
    }

    /// Recomputes every root and hash link.
    pub fn verify_integrity(&self) -> Result<(), LedgerError> {
        for (i, b) in self.blocks.iter().enumerate() {
            let h = b.height;
            if h != i as u64 {
                return Err(LedgerError::Integrity(h));
            }
            if i > 0 {
                let tx_root = merkle_root(&b.transactions.iter().map(tx_hash).collect::<Vec<_>>());
                let receipt_root = merkle_root(&b.receipts.iter().map(receipt_hash).collect::<Vec<_>>());
                if b.prev_hash != self.blocks[i - 1].hash
                    || tx_root != b.tx_root
                    || receipt_root != b.receipt_root
                    || b.transactions.len() != b.receipts.len()
                {
                    return Err(LedgerError::Integrity(h));
                }
            } else if b.prev_hash != Digest::ZERO {
                return Err(LedgerError::Integrity(0));
            }
            if block_hash(h, &b.prev_hash, &b.tx_root, &b.receipt_root) != b.hash {
                return Err(LedgerError::Integrity(h));
            }
        }
        Ok(())
    }

    /// Events in sealed blocks matching `filter`, in (block, tx) order.
    pub fn query_events(&self, filter: &EventFilter) -> Vec<Event> {
        self.blocks
            .iter()
            .flat_map(|b| b.receipts.iter())
            .flat_map(|r| r.events.iter())
            .filter(|e| filter.matches(e))
            .cloned()
            .collect()
    }

    fn contract_documents(&self) -> BTreeMap<Address, ContractDocument> {
        self.contracts
            .iter()
            .map(|(a, c)| {
                let doc = ContractDocument {
                    kind: c.kind().to_string(),
                    state: c.export(),
                };
                (*a, doc)
            })
            .collect()
    }

    /// Canonical bytes of all contract state plus the replay registry.
    pub fn state_bytes(&self) -> Vec<u8> {
        let doc = serde_json::json!({
            "contracts": self.contract_documents(),
            "replay_registry": self.replay,
        });
        serde_json::to_vec(&doc).expect("state serializes")
    }

    pub fn export(&self) -> ChainDocument {
        ChainDocument {
            format: DOCUMENT_FORMAT.to_string(),
            gas_schedule: self.schedule.clone(),
            accounts: self.accounts.clone(),
            blocks: self.blocks.clone(),
            pending: self
                .pending
                .iter()
                .map(|(t, r)| PendingDocument {
                    transaction: t.clone(),
                    receipt: r.clone(),
                })
                .collect(),
            contracts: self.contract_documents(),
            replay_registry: self.replay.clone(),
        }
    }

    /// Rebuilds a chain from an export. `register` installs the contract kinds
    /// the document refers to; block integrity is verified.
    pub fn import(doc: ChainDocument, register: impl FnOnce(&mut Chain)) -> Result<Self, LedgerError> {
        if doc.format != DOCUMENT_FORMAT {
            return Err(LedgerError::Document(format!("unsupported format {:?}", doc.format)));
        }
        doc.gas_schedule.check_complete()?;
        if doc.blocks.is_empty() {
            return Err(LedgerError::Document("no genesis block".into()));
        }
        let mut chain = Chain {
            schedule: doc.gas_schedule,
            accounts: doc.accounts,
            blocks: doc.blocks,
            pending: doc.pending.into_iter().map(|p| (p.transaction, p.receipt)).collect(),
            contracts: BTreeMap::new(),
            replay: doc.replay_registry,
            kinds: BTreeMap::new(),
        };
        register(&mut chain);
        for (addr, c) in doc.contracts {
            let kind = chain
                .kinds
                .get(&c.kind)
                .ok_or_else(|| LedgerError::UnknownKind(c.kind.clone()))?;
            let contract = (kind.restore)(&c.state).map_err(|e| LedgerError::Document(format!("{addr}: {e}")))?;
            chain.contracts.insert(addr, contract);
        }
        chain.verify_integrity()?;
        Ok(chain)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.export()).expect("chain serializes")
    }

    pub fn from_json(json: &str, register: impl FnOnce(&mut Chain)) -> Result<Self, LedgerError> {
        let doc: ChainDocument = serde_json::from_str(json).map_err(|e| LedgerError::Document(e.to_string()))?;
        Self::import(doc, register)
    }
}
