//! Append-only, block-gated event log. Every successful mutating operation
//! across the ledger, marketplace and channel registry appends exactly one
//! event; the simulator additionally records failed steps. Events become
//! visible to pollers once their block has been produced.
//!
//! Wire format, one event per line: `seq block kind <kind-specific...>`,
//! space separated, free-form strings quoted with backslash escapes. The
//! exported log replays to an identical final state.

use std::fmt::Write as _;

use thiserror::Error;

use crate::blobstore::Handle;
use crate::crypto::{EncryptionScheme, WrappedKey};
use crate::geohex::GeoCode;
use crate::ledger::{Address, AssetKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("event log line {line}: {msg}")]
pub struct EventParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub seq: u64,
    pub block: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    AccountCreated {
        address: Address,
    },
    Minted {
        address: Address,
        native: u64,
        tokens: u64,
    },
    Transferred {
        from: Address,
        to: Address,
        amount: u64,
        kind: AssetKind,
    },
    VendorRegistered {
        vendor: Address,
        prefix: String,
        sensors: Vec<(u32, u64)>,
    },
    CustomerRegistered {
        customer: Address,
        pub_key: String,
    },
    DeviceAdded {
        vendor: Address,
        device: Address,
    },
    DataPushed {
        vendor: Address,
        device: Address,
        sensor_type: u32,
        index: u64,
        handle: Handle,
        schema: String,
        timestamp_s: u64,
        spatial: GeoCode,
        key_index: u64,
        scheme: EncryptionScheme,
    },
    DataRequested {
        customer: Address,
        vendor: Address,
        sensor_type: u32,
        index: u64,
        price: u64,
    },
    KeyTransferred {
        vendor: Address,
        customer: Address,
        sensor_type: u32,
        index: u64,
        wrapped: WrappedKey,
        handle: Handle,
    },
    PriceUpdated {
        vendor: Address,
        sensor_type: u32,
        price: u64,
    },
    VoteCast {
        customer: Address,
        vendor: Address,
        up: bool,
        tally: i64,
    },
    ChannelOpened {
        id: u64,
        party_a: Address,
        party_b: Address,
        deposit_a: u64,
        deposit_b: u64,
    },
    ChannelClosed {
        id: u64,
        closer: Address,
        nonce: u64,
        balance_a: u64,
        balance_b: u64,
        deadline: u64,
    },
    ChannelChallenged {
        id: u64,
        nonce: u64,
        balance_a: u64,
        balance_b: u64,
    },
    ChannelSettled {
        id: u64,
        balance_a: u64,
        balance_b: u64,
    },
    StepFailed {
        actor: Address,
        op: String,
        error: String,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::AccountCreated { .. } => "AccountCreated",
            EventKind::Minted { .. } => "Minted",
            EventKind::Transferred { .. } => "Transferred",
            EventKind::VendorRegistered { .. } => "VendorRegistered",
            EventKind::CustomerRegistered { .. } => "CustomerRegistered",
            EventKind::DeviceAdded { .. } => "DeviceAdded",
            EventKind::DataPushed { .. } => "DataPushed",
            EventKind::DataRequested { .. } => "DataRequested",
            EventKind::KeyTransferred { .. } => "KeyTransferred",
            EventKind::PriceUpdated { .. } => "PriceUpdated",
            EventKind::VoteCast { .. } => "VoteCast",
            EventKind::ChannelOpened { .. } => "ChannelOpened",
            EventKind::ChannelClosed { .. } => "ChannelClosed",
            EventKind::ChannelChallenged { .. } => "ChannelChallenged",
            EventKind::ChannelSettled { .. } => "ChannelSettled",
            EventKind::StepFailed { .. } => "StepFailed",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn append(&mut self, block: u64, kind: EventKind) -> &Event {
        let seq = self.events.len() as u64 + 1;
        self.events.push(Event { seq, block, kind });
        self.events.last().expect("just pushed")
    }

    pub fn all(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events after `since_seq` whose block has been produced, in order.
    pub fn poll(&self, since_seq: u64, visible_height: u64) -> Vec<&Event> {
        self.events
            .iter()
            .filter(|e| e.seq > since_seq && e.block <= visible_height)
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            render_event(event, &mut out);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<EventLog, EventParseError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            events.push(parse_event(line, line_no)?);
        }
        Ok(EventLog { events })
    }
}

fn quote(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
}

fn render_event(event: &Event, out: &mut String) {
    write!(out, "{} {} {}", event.seq, event.block, event.kind.name()).unwrap();
    match &event.kind {
        EventKind::AccountCreated { address } => {
            write!(out, " {address}").unwrap();
        }
        EventKind::Minted { address, native, tokens } => {
            write!(out, " {address} {native} {tokens}").unwrap();
        }
        EventKind::Transferred { from, to, amount, kind } => {
            write!(out, " {from} {to} {amount} {kind}").unwrap();
        }
        EventKind::VendorRegistered { vendor, prefix, sensors } => {
            write!(out, " {vendor} ").unwrap();
            quote(prefix, out);
            let list = sensors
                .iter()
                .map(|(t, p)| format!("{t}:{p}"))
                .collect::<Vec<_>>()
                .join(",");
            write!(out, " {list}").unwrap();
        }
        EventKind::CustomerRegistered { customer, pub_key } => {
            write!(out, " {customer} ").unwrap();
            quote(pub_key, out);
        }
        EventKind::DeviceAdded { vendor, device } => {
            write!(out, " {vendor} {device}").unwrap();
        }
        EventKind::DataPushed {
            vendor,
            device,
            sensor_type,
            index,
            handle,
            schema,
            timestamp_s,
            spatial,
            key_index,
            scheme,
        } => {
            write!(out, " {vendor} {device} {sensor_type} {index} {handle} ").unwrap();
            quote(schema, out);
            write!(out, " {timestamp_s} {spatial} {key_index} {scheme}").unwrap();
        }
        EventKind::DataRequested { customer, vendor, sensor_type, index, price } => {
            write!(out, " {customer} {vendor} {sensor_type} {index} {price}").unwrap();
        }
        EventKind::KeyTransferred { vendor, customer, sensor_type, index, wrapped, handle } => {
            write!(
                out,
                " {vendor} {customer} {sensor_type} {index} {} {handle}",
                hex::encode(&wrapped.ciphertext)
            )
            .unwrap();
        }
        EventKind::PriceUpdated { vendor, sensor_type, price } => {
            write!(out, " {vendor} {sensor_type} {price}").unwrap();
        }
        EventKind::VoteCast { customer, vendor, up, tally } => {
            write!(out, " {customer} {vendor} {} {tally}", if *up { "up" } else { "down" }).unwrap();
        }
        EventKind::ChannelOpened { id, party_a, party_b, deposit_a, deposit_b } => {
            write!(out, " {id} {party_a} {party_b} {deposit_a} {deposit_b}").unwrap();
        }
        EventKind::ChannelClosed { id, closer, nonce, balance_a, balance_b, deadline } => {
            write!(out, " {id} {closer} {nonce} {balance_a} {balance_b} {deadline}").unwrap();
        }
        EventKind::ChannelChallenged { id, nonce, balance_a, balance_b } => {
            write!(out, " {id} {nonce} {balance_a} {balance_b}").unwrap();
        }
        EventKind::ChannelSettled { id, balance_a, balance_b } => {
            write!(out, " {id} {balance_a} {balance_b}").unwrap();
        }
        EventKind::StepFailed { actor, op, error } => {
            write!(out, " {actor} ").unwrap();
            quote(op, out);
            out.push(' ');
            quote(error, out);
        }
    }
}

/// Splits a line into tokens; quoted tokens keep their escapes resolved.
fn tokenize(line: &str, line_no: usize) -> Result<Vec<String>, EventParseError> {
    let err = |msg: &str| EventParseError { line: line_no, msg: msg.to_owned() };
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c == ' ' {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut tok = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some('"') => tok.push('"'),
                        Some('\\') => tok.push('\\'),
                        Some('n') => tok.push('\n'),
                        _ => return Err(err("bad escape in quoted string")),
                    },
                    Some(ch) => tok.push(ch),
                    None => return Err(err("unterminated quoted string")),
                }
            }
            tokens.push(tok);
        } else {
            let mut tok = String::new();
            while let Some(&ch) = chars.peek() {
                if ch == ' ' {
                    break;
                }
                tok.push(ch);
                chars.next();
            }
            tokens.push(tok);
        }
    }
    Ok(tokens)
}

struct Fields {
    tokens: std::vec::IntoIter<String>,
    line: usize,
}

impl Fields {
    fn err(&self, msg: impl Into<String>) -> EventParseError {
        EventParseError { line: self.line, msg: msg.into() }
    }

    fn next(&mut self, what: &str) -> Result<String, EventParseError> {
        self.tokens.next().ok_or_else(|| self.err(format!("missing {what}")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, EventParseError> {
        self.next(what)?
            .parse()
            .map_err(|_| self.err(format!("bad {what}")))
    }

    fn u32(&mut self, what: &str) -> Result<u32, EventParseError> {
        self.next(what)?
            .parse()
            .map_err(|_| self.err(format!("bad {what}")))
    }

    fn i64(&mut self, what: &str) -> Result<i64, EventParseError> {
        self.next(what)?
            .parse()
            .map_err(|_| self.err(format!("bad {what}")))
    }

    fn address(&mut self, what: &str) -> Result<Address, EventParseError> {
        let tok = self.next(what)?;
        Address::parse_hex(&tok).ok_or_else(|| self.err(format!("bad {what}")))
    }

    fn handle(&mut self, what: &str) -> Result<Handle, EventParseError> {
        let tok = self.next(what)?;
        Handle::parse_hex(&tok).ok_or_else(|| self.err(format!("bad {what}")))
    }
}

fn parse_event(line: &str, line_no: usize) -> Result<Event, EventParseError> {
    let tokens = tokenize(line, line_no)?;
    let mut f = Fields {
        tokens: tokens.into_iter(),
        line: line_no,
    };
    let seq = f.u64("seq")?;
    let block = f.u64("block")?;
    let kind_name = f.next("kind")?;
    let kind = match kind_name.as_str() {
        "AccountCreated" => EventKind::AccountCreated { address: f.address("address")? },
        "Minted" => EventKind::Minted {
            address: f.address("address")?,
            native: f.u64("native")?,
            tokens: f.u64("tokens")?,
        },
        "Transferred" => EventKind::Transferred {
            from: f.address("from")?,
            to: f.address("to")?,
            amount: f.u64("amount")?,
            kind: {
                let tok = f.next("asset kind")?;
                AssetKind::from_name(&tok).ok_or_else(|| f.err("bad asset kind"))?
            },
        },
        "VendorRegistered" => EventKind::VendorRegistered {
            vendor: f.address("vendor")?,
            prefix: f.next("prefix")?,
            sensors: {
                let list = f.next("sensor list")?;
                let mut sensors = Vec::new();
                if !list.is_empty() {
                    for part in list.split(',') {
                        let (t, p) = part
                            .split_once(':')
                            .ok_or_else(|| f.err("bad sensor list"))?;
                        sensors.push((
                            t.parse().map_err(|_| f.err("bad sensor type"))?,
                            p.parse().map_err(|_| f.err("bad sensor price"))?,
                        ));
                    }
                }
                sensors
            },
        },
        "CustomerRegistered" => EventKind::CustomerRegistered {
            customer: f.address("customer")?,
            pub_key: f.next("pub_key")?,
        },
        "DeviceAdded" => EventKind::DeviceAdded {
            vendor: f.address("vendor")?,
            device: f.address("device")?,
        },
        "DataPushed" => EventKind::DataPushed {
            vendor: f.address("vendor")?,
            device: f.address("device")?,
            sensor_type: f.u32("sensor type")?,
            index: f.u64("index")?,
            handle: f.handle("handle")?,
            schema: f.next("schema")?,
            timestamp_s: f.u64("timestamp")?,
            spatial: {
                let tok = f.next("spatial")?;
                GeoCode::parse(&tok).map_err(|_| f.err("bad geo code"))?
            },
            key_index: f.u64("key index")?,
            scheme: {
                let tok = f.next("scheme")?;
                EncryptionScheme::from_id(&tok).map_err(|_| f.err("bad scheme id"))?
            },
        },
        "DataRequested" => EventKind::DataRequested {
            customer: f.address("customer")?,
            vendor: f.address("vendor")?,
            sensor_type: f.u32("sensor type")?,
            index: f.u64("index")?,
            price: f.u64("price")?,
        },
        "KeyTransferred" => {
            let vendor = f.address("vendor")?;
            let customer = f.address("customer")?;
            let sensor_type = f.u32("sensor type")?;
            let index = f.u64("index")?;
            let blob = f.next("wrapped key")?;
            let ciphertext = hex::decode(&blob).map_err(|_| f.err("bad wrapped key"))?;
            let handle = f.handle("handle")?;
            EventKind::KeyTransferred {
                vendor,
                customer,
                sensor_type,
                index,
                wrapped: WrappedKey { ciphertext, recipient: customer },
                handle,
            }
        }
        "PriceUpdated" => EventKind::PriceUpdated {
            vendor: f.address("vendor")?,
            sensor_type: f.u32("sensor type")?,
            price: f.u64("price")?,
        },
        "VoteCast" => EventKind::VoteCast {
            customer: f.address("customer")?,
            vendor: f.address("vendor")?,
            up: match f.next("direction")?.as_str() {
                "up" => true,
                "down" => false,
                _ => return Err(f.err("bad vote direction")),
            },
            tally: f.i64("tally")?,
        },
        "ChannelOpened" => EventKind::ChannelOpened {
            id: f.u64("id")?,
            party_a: f.address("party a")?,
            party_b: f.address("party b")?,
            deposit_a: f.u64("deposit a")?,
            deposit_b: f.u64("deposit b")?,
        },
        "ChannelClosed" => EventKind::ChannelClosed {
            id: f.u64("id")?,
            closer: f.address("closer")?,
            nonce: f.u64("nonce")?,
            balance_a: f.u64("balance a")?,
            balance_b: f.u64("balance b")?,
            deadline: f.u64("deadline")?,
        },
        "ChannelChallenged" => EventKind::ChannelChallenged {
            id: f.u64("id")?,
            nonce: f.u64("nonce")?,
            balance_a: f.u64("balance a")?,
            balance_b: f.u64("balance b")?,
        },
        "ChannelSettled" => EventKind::ChannelSettled {
            id: f.u64("id")?,
            balance_a: f.u64("balance a")?,
            balance_b: f.u64("balance b")?,
        },
        "StepFailed" => EventKind::StepFailed {
            actor: f.address("actor")?,
            op: f.next("op")?,
            error: f.next("error")?,
        },
        other => return Err(f.err(format!("unknown event kind {other}"))),
    };
    Ok(Event { seq, block, kind })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poll_respects_block_visibility_and_seq() {
        let mut log = EventLog::new();
        let addr = Address::from_bytes([1; 20]);
        log.append(1, EventKind::AccountCreated { address: addr });
        log.append(2, EventKind::Minted { address: addr, native: 5, tokens: 0 });
        assert!(log.poll(0, 0).is_empty());
        assert_eq!(log.poll(0, 1).len(), 1);
        assert_eq!(log.poll(0, 2).len(), 2);
        assert_eq!(log.poll(1, 2).len(), 1);
        assert!(log.poll(2, 2).is_empty());
    }

    #[test]
    fn seq_strictly_increasing() {
        let mut log = EventLog::new();
        let addr = Address::from_bytes([2; 20]);
        for i in 0..10 {
            let e = log.append(i, EventKind::AccountCreated { address: addr });
            assert_eq!(e.seq, i + 1);
        }
    }

    #[test]
    fn render_parse_roundtrip_with_awkward_strings() {
        let mut log = EventLog::new();
        let a = Address::from_bytes([3; 20]);
        let b = Address::from_bytes([4; 20]);
        log.append(1, EventKind::VendorRegistered {
            vendor: a,
            prefix: "Acme \"Wear\" \\ devices".into(),
            sensors: vec![(1, 10), (2, 25)],
        });
        log.append(1, EventKind::StepFailed {
            actor: b,
            op: "push".into(),
            error: "UnauthorizedDevice".into(),
        });
        log.append(2, EventKind::VoteCast { customer: b, vendor: a, up: false, tally: -2 });
        let text = log.render();
        let parsed = EventLog::parse(&text).unwrap();
        assert_eq!(parsed.all(), log.all());
        assert_eq!(parsed.render(), text);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(EventLog::parse("1 1 NotAKind").is_err());
        assert!(EventLog::parse("x 1 Minted").is_err());
        assert!(EventLog::parse("1 1 Minted 00").is_err());
    }
}
