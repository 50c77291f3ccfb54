//! Block-clocked account ledger: native currency plus the data-token
//! sub-ledger, receipts with abstract cost units standing in for gas, and
//! the logical block clock that gates event visibility.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::events::{EventKind, EventLog};

/// Default block interval in seconds.
pub const DEFAULT_BLOCK_INTERVAL_S: u64 = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown address")]
    UnknownAddress,
    #[error("insufficient funds")]
    InsufficientFunds,
}

impl LedgerError {
    pub fn name(&self) -> &'static str {
        match self {
            LedgerError::UnknownAddress => "UnknownAddress",
            LedgerError::InsufficientFunds => "InsufficientFunds",
        }
    }
}

/// 20-byte account identifier, rendered as 40 lowercase hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address([u8; 20]);

impl Address {
    pub fn from_bytes(bytes: [u8; 20]) -> Self {
        Address(bytes)
    }

    pub fn into_bytes(self) -> [u8; 20] {
        self.0
    }

    pub fn parse_hex(s: &str) -> Option<Address> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 20] = bytes.try_into().ok()?;
        Some(Address(arr))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// Which balance a transfer touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssetKind {
    Native,
    Token,
}

impl AssetKind {
    pub fn name(&self) -> &'static str {
        match self {
            AssetKind::Native => "native",
            AssetKind::Token => "token",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "native" => Some(AssetKind::Native),
            "token" => Some(AssetKind::Token),
            _ => None,
        }
    }
}

impl fmt::Display for AssetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Abstract per-operation cost model. Read-only operations always cost 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostSchedule {
    pub base_tx_units: u64,
    pub per_write_units: u64,
    pub per_event_units: u64,
}

impl Default for CostSchedule {
    fn default() -> Self {
        CostSchedule {
            base_tx_units: 21,
            per_write_units: 5,
            per_event_units: 3,
        }
    }
}

/// Logical chain clock; the timestamp is a pure function of the height.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockClock {
    pub height: u64,
    pub block_interval_s: u64,
    pub genesis_offset_s: u64,
}

impl BlockClock {
    pub fn timestamp_s(&self) -> u64 {
        self.height * self.block_interval_s + self.genesis_offset_s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failed(String),
}

/// Submission record. Failed submissions leave a receipt but cost 0 and
/// mutate nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub tx_id: u64,
    pub block: u64,
    pub cost_units: u64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Account {
    native: u64,
    token: u64,
}

#[derive(Debug, Clone)]
pub struct LedgerConfig {
    pub seed: u64,
    pub block_interval_s: u64,
    pub genesis_offset_s: u64,
    pub schedule: CostSchedule,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            seed: 0,
            block_interval_s: DEFAULT_BLOCK_INTERVAL_S,
            genesis_offset_s: 0,
            schedule: CostSchedule::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    seed: u64,
    accounts: BTreeMap<Address, Account>,
    clock: BlockClock,
    schedule: CostSchedule,
    receipts: Vec<Receipt>,
    account_nonce: u64,
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Self {
        Ledger {
            seed: config.seed,
            accounts: BTreeMap::new(),
            clock: BlockClock {
                height: 0,
                block_interval_s: config.block_interval_s,
                genesis_offset_s: config.genesis_offset_s,
            },
            schedule: config.schedule,
            receipts: Vec::new(),
            account_nonce: 0,
        }
    }

    pub fn clock(&self) -> BlockClock {
        self.clock
    }

    pub fn height(&self) -> u64 {
        self.clock.height
    }

    pub fn timestamp_s(&self) -> u64 {
        self.clock.timestamp_s()
    }

    pub fn schedule(&self) -> CostSchedule {
        self.schedule
    }

    /// Block a submission made now would be included in.
    pub fn next_block(&self) -> u64 {
        self.clock.height + 1
    }

    /// Creates a fresh zero-balance account. Addresses derive from the
    /// ledger seed and a creation counter, so two ledgers constructed alike
    /// produce identical address sequences.
    pub fn create_account(&mut self, events: &mut EventLog) -> Address {
        let digest: [u8; 32] = Sha256::new_with_prefix(b"account")
            .chain_update(self.seed.to_be_bytes())
            .chain_update(self.account_nonce.to_be_bytes())
            .finalize()
            .into();
        self.account_nonce += 1;
        let mut bytes = [0u8; 20];
        bytes.copy_from_slice(&digest[..20]);
        let address = Address(bytes);
        self.accounts.insert(address, Account { native: 0, token: 0 });
        events.append(self.next_block(), EventKind::AccountCreated { address });
        address
    }

    pub fn mint(
        &mut self,
        events: &mut EventLog,
        addr: Address,
        native: u64,
        tokens: u64,
    ) -> Result<Receipt, LedgerError> {
        if !self.accounts.contains_key(&addr) {
            return Err(self.fail(LedgerError::UnknownAddress));
        }
        let account = self.accounts.get_mut(&addr).expect("checked above");
        account.native = account.native.checked_add(native).expect("balance overflow");
        account.token = account.token.checked_add(tokens).expect("balance overflow");
        events.append(self.next_block(), EventKind::Minted { address: addr, native, tokens });
        Ok(self.charge_success(2, 0))
    }

    pub fn transfer(
        &mut self,
        events: &mut EventLog,
        from: Address,
        to: Address,
        amount: u64,
        kind: AssetKind,
    ) -> Result<Receipt, LedgerError> {
        if let Err(e) = self.move_funds(from, to, amount, kind) {
            return Err(self.fail(e));
        }
        events.append(self.next_block(), EventKind::Transferred { from, to, amount, kind });
        Ok(self.charge_success(2, 0))
    }

    /// View: (native, token) balances. Free and pure.
    pub fn balance_of(&self, addr: Address) -> Result<(u64, u64), LedgerError> {
        self.accounts
            .get(&addr)
            .map(|a| (a.native, a.token))
            .ok_or(LedgerError::UnknownAddress)
    }

    pub fn has_account(&self, addr: Address) -> bool {
        self.accounts.contains_key(&addr)
    }

    /// Advances the chain by one block.
    pub fn tick(&mut self) -> BlockClock {
        self.clock.height += 1;
        self.clock
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    pub fn last_receipt(&self) -> Option<&Receipt> {
        self.receipts.last()
    }

    /// Sum of all account balances of one kind.
    pub fn supply(&self, kind: AssetKind) -> u64 {
        self.accounts
            .values()
            .map(|a| match kind {
                AssetKind::Native => a.native,
                AssetKind::Token => a.token,
            })
            .sum()
    }

    /// Balance movement without a receipt; used by operations that account
    /// for their cost at their own level (marketplace purchases, channel
    /// escrow). `from == to` is a net no-op but still requires funds.
    pub fn move_funds(
        &mut self,
        from: Address,
        to: Address,
        amount: u64,
        kind: AssetKind,
    ) -> Result<(), LedgerError> {
        if !self.accounts.contains_key(&from) || !self.accounts.contains_key(&to) {
            return Err(LedgerError::UnknownAddress);
        }
        let balance = self.balance_mut(from, kind);
        if *balance < amount {
            return Err(LedgerError::InsufficientFunds);
        }
        if from == to {
            return Ok(());
        }
        *balance -= amount;
        let to_balance = self.balance_mut(to, kind);
        *to_balance = to_balance.checked_add(amount).expect("balance overflow");
        Ok(())
    }

    /// Removes tokens from an account into external escrow.
    pub fn withdraw(&mut self, addr: Address, amount: u64, kind: AssetKind) -> Result<(), LedgerError> {
        if !self.accounts.contains_key(&addr) {
            return Err(LedgerError::UnknownAddress);
        }
        let balance = self.balance_mut(addr, kind);
        if *balance < amount {
            return Err(LedgerError::InsufficientFunds);
        }
        *balance -= amount;
        Ok(())
    }

    /// Returns escrowed tokens to an account.
    pub fn deposit(&mut self, addr: Address, amount: u64, kind: AssetKind) -> Result<(), LedgerError> {
        if !self.accounts.contains_key(&addr) {
            return Err(LedgerError::UnknownAddress);
        }
        let balance = self.balance_mut(addr, kind);
        *balance = balance.checked_add(amount).expect("balance overflow");
        Ok(())
    }

    fn balance_mut(&mut self, addr: Address, kind: AssetKind) -> &mut u64 {
        let account = self.accounts.get_mut(&addr).expect("caller checked existence");
        match kind {
            AssetKind::Native => &mut account.native,
            AssetKind::Token => &mut account.token,
        }
    }

    /// Appends a success receipt charging `base + writes*w + events*e`.
    pub fn charge_success(&mut self, writes: u64, events_emitted: u64) -> Receipt {
        let cost = self.schedule.base_tx_units
            + self.schedule.per_write_units * writes
            + self.schedule.per_event_units * events_emitted;
        self.push_receipt(cost, Outcome::Success)
    }

    /// Appends a failure receipt. Rejected submissions cost nothing.
    pub fn charge_failure(&mut self, error_name: &str) -> Receipt {
        self.push_receipt(0, Outcome::Failed(error_name.to_owned()))
    }

    fn fail(&mut self, e: LedgerError) -> LedgerError {
        self.charge_failure(e.name());
        e
    }

    fn push_receipt(&mut self, cost_units: u64, outcome: Outcome) -> Receipt {
        let receipt = Receipt {
            tx_id: self.receipts.len() as u64 + 1,
            block: self.next_block(),
            cost_units,
            outcome,
        };
        self.receipts.push(receipt.clone());
        receipt
    }

    /// Canonical text dump of the economic state; receipts excluded.
    pub fn snapshot(&self, out: &mut String) {
        use fmt::Write;
        writeln!(out, "ledger height={} ts={}", self.clock.height, self.clock.timestamp_s()).unwrap();
        for (addr, account) in &self.accounts {
            writeln!(out, "account {addr} native={} token={}", account.native, account.token).unwrap();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Ledger, EventLog) {
        (Ledger::new(LedgerConfig::default()), EventLog::new())
    }

    #[test]
    fn addresses_unique_and_deterministic() {
        let (mut a, mut ev_a) = setup();
        let (mut b, mut ev_b) = setup();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let addr = a.create_account(&mut ev_a);
            assert!(seen.insert(addr));
            assert_eq!(addr, b.create_account(&mut ev_b));
        }
    }

    #[test]
    fn different_seed_different_addresses() {
        let (mut a, mut ev) = setup();
        let mut b = Ledger::new(LedgerConfig { seed: 1, ..LedgerConfig::default() });
        assert_ne!(a.create_account(&mut ev), b.create_account(&mut ev));
    }

    #[test]
    fn mint_and_balance() {
        let (mut l, mut ev) = setup();
        let a = l.create_account(&mut ev);
        assert_eq!(l.balance_of(a).unwrap(), (0, 0));
        l.mint(&mut ev, a, 100, 50).unwrap();
        assert_eq!(l.balance_of(a).unwrap(), (100, 50));
        l.mint(&mut ev, a, 0, 0).unwrap();
        assert_eq!(l.balance_of(a).unwrap(), (100, 50));
        let ghost = Address::from_bytes([1; 20]);
        assert_eq!(l.mint(&mut ev, ghost, 1, 1).unwrap_err(), LedgerError::UnknownAddress);
    }

    #[test]
    fn transfer_boundaries() {
        let (mut l, mut ev) = setup();
        let a = l.create_account(&mut ev);
        let b = l.create_account(&mut ev);
        l.mint(&mut ev, a, 100, 0).unwrap();
        let r = l.transfer(&mut ev, a, b, 0, AssetKind::Native).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(l.balance_of(a).unwrap(), (100, 0));
        assert_eq!(
            l.transfer(&mut ev, a, b, 101, AssetKind::Native).unwrap_err(),
            LedgerError::InsufficientFunds
        );
        assert_eq!(l.balance_of(a).unwrap(), (100, 0));
        assert_eq!(l.balance_of(b).unwrap(), (0, 0));
        l.transfer(&mut ev, a, b, 100, AssetKind::Native).unwrap();
        assert_eq!(l.balance_of(a).unwrap(), (0, 0));
        assert_eq!(l.balance_of(b).unwrap(), (100, 0));
    }

    #[test]
    fn self_transfer_is_net_noop() {
        let (mut l, mut ev) = setup();
        let a = l.create_account(&mut ev);
        l.mint(&mut ev, a, 10, 10).unwrap();
        l.transfer(&mut ev, a, a, 7, AssetKind::Token).unwrap();
        assert_eq!(l.balance_of(a).unwrap(), (10, 10));
    }

    #[test]
    fn transfer_cost_is_base_plus_two_writes() {
        let (mut l, mut ev) = setup();
        let a = l.create_account(&mut ev);
        let b = l.create_account(&mut ev);
        l.mint(&mut ev, a, 10, 0).unwrap();
        let r = l.transfer(&mut ev, a, b, 5, AssetKind::Native).unwrap();
        let s = l.schedule();
        assert_eq!(r.cost_units, s.base_tx_units + 2 * s.per_write_units);
    }

    #[test]
    fn clock_timestamps() {
        let (mut l, _ev) = setup();
        assert_eq!(l.height(), 0);
        let c = l.tick();
        assert_eq!(c.height, 1);
        assert_eq!(c.timestamp_s(), 14);
        l.tick();
        l.tick();
        assert_eq!(l.timestamp_s(), 42);

        let mut slow = Ledger::new(LedgerConfig {
            block_interval_s: 1800,
            ..LedgerConfig::default()
        });
        slow.tick();
        assert_eq!(slow.timestamp_s(), 1800);
    }

    #[test]
    fn receipts_monotonic() {
        let (mut l, mut ev) = setup();
        let a = l.create_account(&mut ev);
        let b = l.create_account(&mut ev);
        l.mint(&mut ev, a, 10, 10).unwrap();
        l.tick();
        l.transfer(&mut ev, a, b, 1, AssetKind::Token).unwrap();
        let ids: Vec<u64> = l.receipts().iter().map(|r| r.tx_id).collect();
        let blocks: Vec<u64> = l.receipts().iter().map(|r| r.block).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(blocks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn view_is_free() {
        let (mut l, mut ev) = setup();
        let a = l.create_account(&mut ev);
        let receipts_before = l.receipts().len();
        let _ = l.balance_of(a);
        let _ = l.supply(AssetKind::Token);
        assert_eq!(l.receipts().len(), receipts_before);
    }
}
