use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExecError, LedgerError};

/// Metered operation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GasOp {
    /// Flat cost of every transaction.
    TxBase,
    /// Per byte of calldata (function name and arguments).
    CalldataByte,
    StorageWrite,
    StorageRead,
    EventBase,
    EventByte,
    ExternalCall,
    /// Public-key recovery from a signature.
    Ecrecover,
    /// Flat cost of creating a contract.
    Create,
    /// Per byte of deployed contract code.
    CodeByte,
    /// One attribute comparison during policy evaluation.
    Compare,
}

impl GasOp {
    pub const ALL: [GasOp; 11] = [
        GasOp::TxBase,
        GasOp::CalldataByte,
        GasOp::StorageWrite,
        GasOp::StorageRead,
        GasOp::EventBase,
        GasOp::EventByte,
        GasOp::ExternalCall,
        GasOp::Ecrecover,
        GasOp::Create,
        GasOp::CodeByte,
        GasOp::Compare,
    ];

    /// Default unit cost, taken from public EVM fee schedules.
    pub fn default_cost(self) -> u64 {
        match self {
            GasOp::TxBase => 21_000,
            GasOp::CalldataByte => 16,
            GasOp::StorageWrite => 20_000,
            GasOp::StorageRead => 2_100,
            GasOp::EventBase => 375,
            GasOp::EventByte => 8,
            GasOp::ExternalCall => 2_600,
            GasOp::Ecrecover => 3_000,
            GasOp::Create => 32_000,
            GasOp::CodeByte => 200,
            GasOp::Compare => 3,
        }
    }
}

/// Cost per unit of each [`GasOp`]. Must cover every category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GasSchedule(BTreeMap<GasOp, u64>);

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule(GasOp::ALL.iter().map(|op| (*op, op.default_cost())).collect())
    }
}

impl GasSchedule {
    /// Builds a schedule from explicit entries; every category is required.
    pub fn from_entries(entries: BTreeMap<GasOp, u64>) -> Result<Self, LedgerError> {
        let s = GasSchedule(entries);
        s.check_complete()?;
        Ok(s)
    }

    /// Defaults with some entries replaced.
    pub fn with_overrides(mut self, overrides: &BTreeMap<GasOp, u64>) -> Self {
        self.0.extend(overrides.iter().map(|(k, v)| (*k, *v)));
        self
    }

    pub fn check_complete(&self) -> Result<(), LedgerError> {
        match GasOp::ALL.iter().find(|op| !self.0.contains_key(op)) {
            Some(op) => Err(LedgerError::IncompleteCostTable(*op)),
            None => Ok(()),
        }
    }

    pub fn cost(&self, op: GasOp) -> u64 {
        self.0[&op]
    }
}

#[derive(Debug, Clone)]
pub struct GasMeter {
    limit: u64,
    used: u64,
}

impl GasMeter {
    pub fn new(limit: u64) -> Self {
        GasMeter { limit, used: 0 }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// Charges `amount`; on overflow the meter is pinned at the limit.
    pub fn charge(&mut self, amount: u64) -> Result<(), ExecError> {
        match self.used.checked_add(amount) {
            Some(total) if total <= self.limit => {
                self.used = total;
                Ok(())
            }
            _ => {
                self.used = self.limit;
                Err(ExecError::OutOfGas)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_complete() {
        GasSchedule::default().check_complete().unwrap();
    }

    #[test]
    fn missing_entry_rejected() {
        let mut entries: BTreeMap<_, _> = GasOp::ALL.iter().map(|op| (*op, 1)).collect();
        entries.remove(&GasOp::Ecrecover);
        assert_eq!(
            GasSchedule::from_entries(entries),
            Err(LedgerError::IncompleteCostTable(GasOp::Ecrecover))
        );
    }

    #[test]
    fn meter_pins_at_limit() {
        let mut m = GasMeter::new(10);
        m.charge(7).unwrap();
        assert_eq!(m.charge(4), Err(ExecError::OutOfGas));
        assert_eq!(m.used(), 10);
    }

    #[test]
    fn serde_names_are_snake_case() {
        let json = serde_json::to_string(&GasSchedule::default()).unwrap();
        assert!(json.contains("\"tx_base\":21000"));
        assert!(json.contains("\"ecrecover\":3000"));
    }
}
