//! Bidirectional payment channels for the data token. A channel locks two
//! deposits in escrow with one on-ledger transaction, carries any number of
//! co-signed off-ledger balance updates, and settles back to the ledger with
//! exactly one more transaction. A unilateral close opens a dispute window
//! during which a higher-nonce signed state replaces the close candidate.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::{self, PrivateKey, PublicKey, Signature};
use crate::events::{EventKind, EventLog};
use crate::ledger::{Address, AssetKind, Ledger, Receipt};

/// Dispute window length in blocks.
pub const DEFAULT_DISPUTE_WINDOW: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("insufficient token balance for the deposit")]
    InsufficientFunds,
    #[error("channel is not open")]
    ChannelNotOpen,
    #[error("amount exceeds payer's channel balance")]
    InsufficientChannelBalance,
    #[error("state signatures do not verify")]
    BadSignature,
    #[error("state nonce is stale")]
    StaleNonce,
    #[error("channel is not closing")]
    ChannelNotClosing,
    #[error("dispute deadline has passed")]
    DeadlinePassed,
    #[error("state does not supersede the close candidate")]
    NotNewer,
    #[error("dispute window has not elapsed")]
    TooEarly,
    #[error("channel already settled")]
    AlreadySettled,
    #[error("no channel with this id")]
    UnknownChannel,
    #[error("caller is not a channel party")]
    NotAParty,
}

impl ChannelError {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelError::InsufficientFunds => "InsufficientFunds",
            ChannelError::ChannelNotOpen => "ChannelNotOpen",
            ChannelError::InsufficientChannelBalance => "InsufficientChannelBalance",
            ChannelError::BadSignature => "BadSignature",
            ChannelError::StaleNonce => "StaleNonce",
            ChannelError::ChannelNotClosing => "ChannelNotClosing",
            ChannelError::DeadlinePassed => "DeadlinePassed",
            ChannelError::NotNewer => "NotNewer",
            ChannelError::TooEarly => "TooEarly",
            ChannelError::AlreadySettled => "AlreadySettled",
            ChannelError::UnknownChannel => "UnknownChannel",
            ChannelError::NotAParty => "NotAParty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelStatus {
    Open,
    Closing { deadline: u64 },
    Settled,
}

/// Co-signed off-ledger balance pair. Immutable value; both signatures must
/// cover (channel_id, nonce, balance_a, balance_b).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelState {
    pub channel_id: u64,
    pub nonce: u64,
    pub balance_a: u64,
    pub balance_b: u64,
    pub sig_a: Signature,
    pub sig_b: Signature,
}

impl ChannelState {
    /// Canonical signing message for a state tuple.
    pub fn message(channel_id: u64, nonce: u64, balance_a: u64, balance_b: u64) -> [u8; 41] {
        let mut msg = [0u8; 41];
        msg[..9].copy_from_slice(b"chanstate");
        msg[9..17].copy_from_slice(&channel_id.to_be_bytes());
        msg[17..25].copy_from_slice(&nonce.to_be_bytes());
        msg[25..33].copy_from_slice(&balance_a.to_be_bytes());
        msg[33..41].copy_from_slice(&balance_b.to_be_bytes());
        msg
    }

    fn own_message(&self) -> [u8; 41] {
        Self::message(self.channel_id, self.nonce, self.balance_a, self.balance_b)
    }
}

/// A payment-proposal awaiting the payee's countersignature.
#[derive(Debug, Clone)]
pub struct PendingState {
    pub channel_id: u64,
    pub nonce: u64,
    pub balance_a: u64,
    pub balance_b: u64,
    pub payer: Address,
    pub payer_sig: Signature,
}

#[derive(Debug, Clone)]
pub struct Channel {
    pub id: u64,
    pub party_a: Address,
    pub party_b: Address,
    pub escrow_a: u64,
    pub escrow_b: u64,
    pub pub_a: PublicKey,
    pub pub_b: PublicKey,
    pub status: ChannelStatus,
    pub candidate: Option<ChannelState>,
}

impl Channel {
    pub fn escrow_total(&self) -> u64 {
        self.escrow_a + self.escrow_b
    }

    pub fn is_party(&self, addr: Address) -> bool {
        addr == self.party_a || addr == self.party_b
    }

    /// Validates both signatures, the balance sum and the channel id.
    pub fn validate_state(&self, state: &ChannelState) -> Result<(), ChannelError> {
        if state.channel_id != self.id
            || state.balance_a.checked_add(state.balance_b) != Some(self.escrow_total())
        {
            return Err(ChannelError::BadSignature);
        }
        let msg = state.own_message();
        if !crypto::verify(&self.pub_a, &msg, &state.sig_a)
            || !crypto::verify(&self.pub_b, &msg, &state.sig_b)
        {
            return Err(ChannelError::BadSignature);
        }
        Ok(())
    }
}

/// Builds a fully-signed state when both parties' keys are at hand (channel
/// funding, scripted scenarios, tests).
pub fn sign_state(
    channel: &Channel,
    nonce: u64,
    balance_a: u64,
    balance_b: u64,
    key_a: &PrivateKey,
    key_b: &PrivateKey,
) -> ChannelState {
    let msg = ChannelState::message(channel.id, nonce, balance_a, balance_b);
    ChannelState {
        channel_id: channel.id,
        nonce,
        balance_a,
        balance_b,
        sig_a: crypto::sign(key_a, &msg),
        sig_b: crypto::sign(key_b, &msg),
    }
}

/// Payer side of an instant payment: builds and signs the successor state.
/// No ledger interaction.
pub fn propose_payment(
    channel: &Channel,
    latest: &ChannelState,
    payer: Address,
    amount: u64,
    payer_key: &PrivateKey,
) -> Result<PendingState, ChannelError> {
    if channel.status != ChannelStatus::Open {
        return Err(ChannelError::ChannelNotOpen);
    }
    if !channel.is_party(payer) {
        return Err(ChannelError::NotAParty);
    }
    channel.validate_state(latest)?;
    let payer_is_a = payer == channel.party_a;
    let payer_balance = if payer_is_a { latest.balance_a } else { latest.balance_b };
    if amount > payer_balance {
        return Err(ChannelError::InsufficientChannelBalance);
    }
    let (balance_a, balance_b) = if payer_is_a {
        (latest.balance_a - amount, latest.balance_b + amount)
    } else {
        (latest.balance_a + amount, latest.balance_b - amount)
    };
    let nonce = latest.nonce + 1;
    let msg = ChannelState::message(channel.id, nonce, balance_a, balance_b);
    Ok(PendingState {
        channel_id: channel.id,
        nonce,
        balance_a,
        balance_b,
        payer,
        payer_sig: crypto::sign(payer_key, &msg),
    })
}

/// Payee side: verifies the payer's signature and nonce progression, then
/// countersigns, yielding the new fully-signed state.
pub fn countersign(
    channel: &Channel,
    pending: &PendingState,
    payee_known_nonce: u64,
    payee_key: &PrivateKey,
) -> Result<ChannelState, ChannelError> {
    if pending.nonce <= payee_known_nonce {
        return Err(ChannelError::StaleNonce);
    }
    let msg = ChannelState::message(
        pending.channel_id,
        pending.nonce,
        pending.balance_a,
        pending.balance_b,
    );
    let payer_pub = if pending.payer == channel.party_a { &channel.pub_a } else { &channel.pub_b };
    if !crypto::verify(payer_pub, &msg, &pending.payer_sig) {
        return Err(ChannelError::BadSignature);
    }
    let payee_sig = crypto::sign(payee_key, &msg);
    let (sig_a, sig_b) = if pending.payer == channel.party_a {
        (pending.payer_sig, payee_sig)
    } else {
        (payee_sig, pending.payer_sig)
    };
    Ok(ChannelState {
        channel_id: pending.channel_id,
        nonce: pending.nonce,
        balance_a: pending.balance_a,
        balance_b: pending.balance_b,
        sig_a,
        sig_b,
    })
}

/// Whole instant payment between two honest parties holding both keys.
pub fn pay(
    channel: &Channel,
    latest: &ChannelState,
    payer: Address,
    amount: u64,
    payer_key: &PrivateKey,
    payee_key: &PrivateKey,
) -> Result<ChannelState, ChannelError> {
    let pending = propose_payment(channel, latest, payer, amount, payer_key)?;
    countersign(channel, &pending, latest.nonce, payee_key)
}

#[derive(Debug, Clone, Default)]
pub struct ChannelRegistry {
    channels: BTreeMap<u64, Channel>,
    next_id: u64,
    dispute_window: u64,
}

impl ChannelRegistry {
    pub fn new() -> Self {
        ChannelRegistry {
            channels: BTreeMap::new(),
            next_id: 1,
            dispute_window: DEFAULT_DISPUTE_WINDOW,
        }
    }

    pub fn with_dispute_window(mut self, blocks: u64) -> Self {
        self.dispute_window = blocks;
        self
    }

    pub fn dispute_window(&self) -> u64 {
        self.dispute_window
    }

    pub fn get(&self, id: u64) -> Option<&Channel> {
        self.channels.get(&id)
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels.values()
    }

    /// Token amount locked in unsettled channels.
    pub fn total_escrow(&self) -> u64 {
        self.channels
            .values()
            .filter(|c| c.status != ChannelStatus::Settled)
            .map(Channel::escrow_total)
            .sum()
    }

    /// Locks both deposits and opens the channel. One ledger transaction.
    #[allow(clippy::too_many_arguments)]
    pub fn open(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        party_a: Address,
        pub_a: PublicKey,
        party_b: Address,
        pub_b: PublicKey,
        deposit_a: u64,
        deposit_b: u64,
    ) -> Result<u64, ChannelError> {
        let can_fund = |l: &Ledger, addr: Address, amount: u64| {
            l.balance_of(addr).map(|(_, tokens)| tokens >= amount).unwrap_or(false)
        };
        if !can_fund(ledger, party_a, deposit_a) || !can_fund(ledger, party_b, deposit_b) {
            ledger.charge_failure(ChannelError::InsufficientFunds.name());
            return Err(ChannelError::InsufficientFunds);
        }
        ledger.withdraw(party_a, deposit_a, AssetKind::Token).expect("checked above");
        ledger.withdraw(party_b, deposit_b, AssetKind::Token).expect("checked above");
        let id = self.next_id;
        self.next_id += 1;
        self.channels.insert(
            id,
            Channel {
                id,
                party_a,
                party_b,
                escrow_a: deposit_a,
                escrow_b: deposit_b,
                pub_a,
                pub_b,
                status: ChannelStatus::Open,
                candidate: None,
            },
        );
        events.append(
            ledger.next_block(),
            EventKind::ChannelOpened { id, party_a, party_b, deposit_a, deposit_b },
        );
        ledger.charge_success(2, 1);
        Ok(id)
    }

    /// Unilateral close: registers a candidate settlement state and starts
    /// the dispute window.
    pub fn close(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        closer: Address,
        id: u64,
        state: &ChannelState,
    ) -> Result<(), ChannelError> {
        let height = ledger.height();
        let channel = self.channels.get_mut(&id).ok_or(ChannelError::UnknownChannel)?;
        if !channel.is_party(closer) {
            return Err(ChannelError::NotAParty);
        }
        if channel.status != ChannelStatus::Open {
            return Err(ChannelError::ChannelNotOpen);
        }
        channel.validate_state(state)?;
        let deadline = height + self.dispute_window;
        channel.status = ChannelStatus::Closing { deadline };
        channel.candidate = Some(state.clone());
        events.append(
            ledger.next_block(),
            EventKind::ChannelClosed {
                id,
                closer,
                nonce: state.nonce,
                balance_a: state.balance_a,
                balance_b: state.balance_b,
                deadline,
            },
        );
        Ok(())
    }

    /// Replaces the close candidate with a strictly newer signed state.
    pub fn challenge(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        id: u64,
        newer: &ChannelState,
    ) -> Result<(), ChannelError> {
        let height = ledger.height();
        let channel = self.channels.get_mut(&id).ok_or(ChannelError::UnknownChannel)?;
        let ChannelStatus::Closing { deadline } = channel.status else {
            return Err(ChannelError::ChannelNotClosing);
        };
        if height >= deadline {
            return Err(ChannelError::DeadlinePassed);
        }
        let candidate = channel.candidate.as_ref().expect("closing implies candidate");
        if newer.nonce <= candidate.nonce {
            return Err(ChannelError::NotNewer);
        }
        channel.validate_state(newer)?;
        channel.candidate = Some(newer.clone());
        events.append(
            ledger.next_block(),
            EventKind::ChannelChallenged {
                id,
                nonce: newer.nonce,
                balance_a: newer.balance_a,
                balance_b: newer.balance_b,
            },
        );
        Ok(())
    }

    /// Pays out the candidate state once the window has elapsed. One ledger
    /// transaction.
    pub fn settle(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        id: u64,
    ) -> Result<Receipt, ChannelError> {
        let height = ledger.height();
        let channel = self.channels.get_mut(&id).ok_or(ChannelError::UnknownChannel)?;
        let deadline = match channel.status {
            ChannelStatus::Settled => return Err(ChannelError::AlreadySettled),
            ChannelStatus::Open => return Err(ChannelError::ChannelNotClosing),
            ChannelStatus::Closing { deadline } => deadline,
        };
        if height < deadline {
            return Err(ChannelError::TooEarly);
        }
        let state = channel.candidate.clone().expect("closing implies candidate");
        ledger
            .deposit(channel.party_a, state.balance_a, AssetKind::Token)
            .expect("party accounts exist");
        ledger
            .deposit(channel.party_b, state.balance_b, AssetKind::Token)
            .expect("party accounts exist");
        channel.status = ChannelStatus::Settled;
        events.append(
            ledger.next_block(),
            EventKind::ChannelSettled {
                id,
                balance_a: state.balance_a,
                balance_b: state.balance_b,
            },
        );
        Ok(ledger.charge_success(2, 1))
    }

    /// Cooperative close: a fully-signed state presented by both parties
    /// settles immediately, skipping the dispute window.
    pub fn cooperative_close(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        id: u64,
        state: &ChannelState,
    ) -> Result<Receipt, ChannelError> {
        let channel = self.channels.get_mut(&id).ok_or(ChannelError::UnknownChannel)?;
        if channel.status != ChannelStatus::Open {
            return Err(ChannelError::ChannelNotOpen);
        }
        channel.validate_state(state)?;
        ledger
            .deposit(channel.party_a, state.balance_a, AssetKind::Token)
            .expect("party accounts exist");
        ledger
            .deposit(channel.party_b, state.balance_b, AssetKind::Token)
            .expect("party accounts exist");
        channel.status = ChannelStatus::Settled;
        channel.candidate = Some(state.clone());
        events.append(
            ledger.next_block(),
            EventKind::ChannelSettled {
                id,
                balance_a: state.balance_a,
                balance_b: state.balance_b,
            },
        );
        Ok(ledger.charge_success(2, 1))
    }

    /// Canonical text dump of channel economic state; signatures and keys
    /// excluded.
    pub fn snapshot(&self, out: &mut String) {
        use std::fmt::Write;
        for (id, c) in &self.channels {
            let status = match c.status {
                ChannelStatus::Open => "open".to_owned(),
                ChannelStatus::Closing { deadline } => format!("closing@{deadline}"),
                ChannelStatus::Settled => "settled".to_owned(),
            };
            let candidate = c
                .candidate
                .as_ref()
                .map_or("none".to_owned(), |s| {
                    format!("nonce={} a={} b={}", s.nonce, s.balance_a, s.balance_b)
                });
            writeln!(
                out,
                "channel {id} a={} b={} escrow={}+{} status={status} candidate=({candidate})",
                c.party_a, c.party_b, c.escrow_a, c.escrow_b
            )
            .unwrap();
        }
    }
}
