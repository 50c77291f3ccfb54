//! The marketplace contract state machine: vendor/customer registries,
//! device whitelists, per-sensor-type catalogs, purchases, per-buyer key
//! delivery and vendor voting.
//!
//! Every mutating operation takes the explicit caller, enforces the caller's
//! role, charges cost units on the ledger and appends exactly one event on
//! success. Failed calls leave a zero-cost failure receipt and touch
//! nothing. View operations are pure and free. Costs are constant per
//! operation: no operation reads or writes an amount of state that grows
//! with the catalog.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::blobstore::{BlobStore, Handle};
use crate::crypto::{EncryptionScheme, PublicKey, WrappedKey};
use crate::events::{EventKind, EventLog};
use crate::geohex::GeoCode;
use crate::ledger::{AssetKind, Ledger};
pub use crate::ledger::Address;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarketError {
    #[error("caller is already registered")]
    AlreadyRegistered,
    #[error("sensor and cost lists differ in length")]
    LengthMismatch,
    #[error("sensor type ids must be positive and distinct")]
    InvalidSensorType,
    #[error("public key does not parse")]
    MalformedPublicKey,
    #[error("caller is not a registered vendor")]
    NotAVendor,
    #[error("caller is not a registered customer")]
    NotACustomer,
    #[error("device is not whitelisted for this vendor")]
    UnauthorizedDevice,
    #[error("vendor does not support this sensor type")]
    UnsupportedSensorType,
    #[error("spatial field is not a valid geo code")]
    InvalidGeoCode,
    #[error("handle is not present in the blob store")]
    UnknownHandle,
    #[error("no vendor registered under this address")]
    UnknownVendor,
    #[error("index out of range")]
    IndexOutOfRange,
    #[error("insufficient token balance")]
    InsufficientFunds,
    #[error("no matching purchase for this delivery")]
    NoMatchingPurchase,
    #[error("key already delivered for this purchase")]
    AlreadyDelivered,
    #[error("caller has no vote right for this vendor")]
    NoVoteRight,
}

impl MarketError {
    pub fn name(&self) -> &'static str {
        match self {
            MarketError::AlreadyRegistered => "AlreadyRegistered",
            MarketError::LengthMismatch => "LengthMismatch",
            MarketError::InvalidSensorType => "InvalidSensorType",
            MarketError::MalformedPublicKey => "MalformedPublicKey",
            MarketError::NotAVendor => "NotAVendor",
            MarketError::NotACustomer => "NotACustomer",
            MarketError::UnauthorizedDevice => "UnauthorizedDevice",
            MarketError::UnsupportedSensorType => "UnsupportedSensorType",
            MarketError::InvalidGeoCode => "InvalidGeoCode",
            MarketError::UnknownHandle => "UnknownHandle",
            MarketError::UnknownVendor => "UnknownVendor",
            MarketError::IndexOutOfRange => "IndexOutOfRange",
            MarketError::InsufficientFunds => "InsufficientFunds",
            MarketError::NoMatchingPurchase => "NoMatchingPurchase",
            MarketError::AlreadyDelivered => "AlreadyDelivered",
            MarketError::NoVoteRight => "NoVoteRight",
        }
    }
}

/// On-chain metadata of one sellable encrypted data chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub device_id: Address,
    pub timestamp_s: u64,
    pub handle: Handle,
    pub schema: String,
    pub spatial: GeoCode,
    pub key_index: u64,
    pub scheme: EncryptionScheme,
    /// Latest delivered wrapped key; the full per-buyer map lives in the
    /// delivery table.
    pub encrypted_key: Option<WrappedKey>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VendorRecord {
    pub prefix: String,
    pub types: BTreeSet<u32>,
    pub prices: BTreeMap<u32, u64>,
    pub payloads: BTreeMap<u32, Vec<Payload>>,
    pub devices: BTreeSet<Address>,
    pub votes: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Purchase {
    pub vendor: Address,
    pub sensor_type: u32,
    pub index: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CustomerRecord {
    pub purchases: Vec<Purchase>,
    pub vote_rights: BTreeMap<Address, bool>,
    pub pub_key: String,
}

/// Metadata returned by `sensor_data_pull`: browsing data only, never the
/// handle or any key material.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadView {
    pub schema: String,
    pub timestamp_s: u64,
    pub spatial: GeoCode,
    pub price: u64,
}

type DeliveryKey = (Address, u32, u64, Address);

#[derive(Debug, Clone, Default)]
pub struct Marketplace {
    vendors: BTreeMap<Address, VendorRecord>,
    vendor_order: Vec<Address>,
    by_type: BTreeMap<u32, Vec<Address>>,
    customers: BTreeMap<Address, CustomerRecord>,
    deliveries: BTreeMap<DeliveryKey, WrappedKey>,
}

type MarketResult<T> = Result<T, MarketError>;

impl Marketplace {
    pub fn new() -> Self {
        Marketplace::default()
    }

    fn charge<T>(
        &mut self,
        ledger: &mut Ledger,
        writes: u64,
        result: MarketResult<T>,
    ) -> MarketResult<T> {
        match &result {
            Ok(_) => {
                ledger.charge_success(writes, 1);
            }
            Err(e) => {
                ledger.charge_failure(e.name());
            }
        }
        result
    }

    /// Registers the caller as a vendor with its sensor types and prices.
    pub fn vendor_register(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        caller: Address,
        prefix: &str,
        sensors: &[u32],
        costs: &[u64],
    ) -> MarketResult<Address> {
        let writes = 1 + 2 * sensors.len() as u64;
        let result = self.vendor_register_inner(events, ledger, caller, prefix, sensors, costs);
        self.charge(ledger, writes, result)
    }

    fn vendor_register_inner(
        &mut self,
        events: &mut EventLog,
        ledger: &Ledger,
        caller: Address,
        prefix: &str,
        sensors: &[u32],
        costs: &[u64],
    ) -> MarketResult<Address> {
        if self.vendors.contains_key(&caller) {
            return Err(MarketError::AlreadyRegistered);
        }
        if sensors.len() != costs.len() {
            return Err(MarketError::LengthMismatch);
        }
        let distinct: BTreeSet<u32> = sensors.iter().copied().collect();
        if distinct.len() != sensors.len() || distinct.iter().any(|&t| t == 0) {
            return Err(MarketError::InvalidSensorType);
        }
        let mut record = VendorRecord {
            prefix: prefix.to_owned(),
            ..VendorRecord::default()
        };
        for (&t, &price) in sensors.iter().zip(costs) {
            record.types.insert(t);
            record.prices.insert(t, price);
            self.by_type.entry(t).or_default().push(caller);
        }
        self.vendors.insert(caller, record);
        self.vendor_order.push(caller);
        events.append(
            ledger.next_block(),
            EventKind::VendorRegistered {
                vendor: caller,
                prefix: prefix.to_owned(),
                sensors: sensors.iter().copied().zip(costs.iter().copied()).collect(),
            },
        );
        Ok(caller)
    }

    /// Registers the caller as a customer holding an encoded public key.
    pub fn customer_register(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        caller: Address,
        pub_key: &str,
    ) -> MarketResult<Address> {
        let result = (|| {
            if self.customers.contains_key(&caller) {
                return Err(MarketError::AlreadyRegistered);
            }
            PublicKey::parse_hex(pub_key).map_err(|_| MarketError::MalformedPublicKey)?;
            self.customers.insert(
                caller,
                CustomerRecord {
                    pub_key: pub_key.to_owned(),
                    ..CustomerRecord::default()
                },
            );
            events.append(
                ledger.next_block(),
                EventKind::CustomerRegistered { customer: caller, pub_key: pub_key.to_owned() },
            );
            Ok(caller)
        })();
        self.charge(ledger, 1, result)
    }

    /// Whitelists a device address for the calling vendor. Idempotent.
    pub fn add_valid_device(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        caller: Address,
        device: Address,
    ) -> MarketResult<Address> {
        let result = (|| {
            let record = self.vendors.get_mut(&caller).ok_or(MarketError::NotAVendor)?;
            record.devices.insert(device);
            events.append(
                ledger.next_block(),
                EventKind::DeviceAdded { vendor: caller, device },
            );
            Ok(device)
        })();
        self.charge(ledger, 1, result)
    }

    /// Appends payload metadata pushed by a whitelisted device.
    #[allow(clippy::too_many_arguments)]
    pub fn sensor_data_push(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        store: &BlobStore,
        caller: Address,
        vendor: Address,
        sensor_type: u32,
        schema: &str,
        timestamp_s: u64,
        spatial: &str,
        handle: Handle,
        key_index: u64,
        scheme: EncryptionScheme,
    ) -> MarketResult<Address> {
        let result = (|| {
            let whitelisted = self
                .vendors
                .get(&vendor)
                .is_some_and(|record| record.devices.contains(&caller));
            if !whitelisted {
                return Err(MarketError::UnauthorizedDevice);
            }
            let record = self.vendors.get_mut(&vendor).expect("whitelist check found it");
            if !record.types.contains(&sensor_type) {
                return Err(MarketError::UnsupportedSensorType);
            }
            let spatial = GeoCode::parse(spatial).map_err(|_| MarketError::InvalidGeoCode)?;
            if !store.has(&handle) {
                return Err(MarketError::UnknownHandle);
            }
            let list = record.payloads.entry(sensor_type).or_default();
            let index = list.len() as u64;
            list.push(Payload {
                device_id: caller,
                timestamp_s,
                handle,
                schema: schema.to_owned(),
                spatial: spatial.clone(),
                key_index,
                scheme,
                encrypted_key: None,
            });
            events.append(
                ledger.next_block(),
                EventKind::DataPushed {
                    vendor,
                    device: caller,
                    sensor_type,
                    index,
                    handle,
                    schema: schema.to_owned(),
                    timestamp_s,
                    spatial,
                    key_index,
                    scheme,
                },
            );
            Ok(vendor)
        })();
        self.charge(ledger, 1, result)
    }

    /// View: the index-th vendor (in registration order) supporting a type.
    pub fn query_sensor(&self, sensor_type: u32, index: u64) -> MarketResult<Address> {
        self.by_type
            .get(&sensor_type)
            .and_then(|list| list.get(index as usize))
            .copied()
            .ok_or(MarketError::IndexOutOfRange)
    }

    /// View: browsing metadata plus the current unit price.
    pub fn sensor_data_pull(
        &self,
        vendor: Address,
        sensor_type: u32,
        index: u64,
    ) -> MarketResult<PayloadView> {
        let record = self.vendors.get(&vendor).ok_or(MarketError::UnknownVendor)?;
        let payload = record
            .payloads
            .get(&sensor_type)
            .and_then(|list| list.get(index as usize))
            .ok_or(MarketError::IndexOutOfRange)?;
        Ok(PayloadView {
            schema: payload.schema.clone(),
            timestamp_s: payload.timestamp_s,
            spatial: payload.spatial.clone(),
            price: *record.prices.get(&sensor_type).expect("type implies price"),
        })
    }

    /// View: number of payloads a vendor holds for a type.
    pub fn sensor_data_length(&self, vendor: Address, sensor_type: u32) -> MarketResult<u64> {
        let record = self.vendors.get(&vendor).ok_or(MarketError::UnknownVendor)?;
        if !record.types.contains(&sensor_type) {
            return Err(MarketError::UnsupportedSensorType);
        }
        Ok(record.payloads.get(&sensor_type).map_or(0, |l| l.len() as u64))
    }

    /// View: number of registered vendors.
    pub fn vendor_length(&self) -> u64 {
        self.vendor_order.len() as u64
    }

    /// View: a vendor's human-readable prefix.
    pub fn get_vendor(&self, addr: Address) -> MarketResult<&str> {
        self.vendors
            .get(&addr)
            .map(|r| r.prefix.as_str())
            .ok_or(MarketError::UnknownVendor)
    }

    /// View: a vendor's current unit price for a sensor type.
    pub fn get_sensor_price(&self, vendor: Address, sensor_type: u32) -> MarketResult<u64> {
        let record = self.vendors.get(&vendor).ok_or(MarketError::UnknownVendor)?;
        record
            .prices
            .get(&sensor_type)
            .copied()
            .ok_or(MarketError::UnsupportedSensorType)
    }

    /// View: a customer's stored public key.
    pub fn customer_pub_key(&self, addr: Address) -> MarketResult<&str> {
        self.customers
            .get(&addr)
            .map(|r| r.pub_key.as_str())
            .ok_or(MarketError::NotACustomer)
    }

    /// View: a customer's recorded purchases.
    pub fn purchases(&self, addr: Address) -> MarketResult<&[Purchase]> {
        self.customers
            .get(&addr)
            .map(|r| r.purchases.as_slice())
            .ok_or(MarketError::NotACustomer)
    }

    /// View: current vote tally of a vendor.
    pub fn votes(&self, vendor: Address) -> MarketResult<i64> {
        self.vendors
            .get(&vendor)
            .map(|r| r.votes)
            .ok_or(MarketError::UnknownVendor)
    }

    /// View: full vendor record (inspection/reporting).
    pub fn vendor_record(&self, vendor: Address) -> Option<&VendorRecord> {
        self.vendors.get(&vendor)
    }

    pub fn customer_record(&self, customer: Address) -> Option<&CustomerRecord> {
        self.customers.get(&customer)
    }

    pub fn vendor_addresses(&self) -> &[Address] {
        &self.vendor_order
    }

    /// View: the wrapped key delivered for one (payload, buyer) pair.
    pub fn delivery(
        &self,
        vendor: Address,
        sensor_type: u32,
        index: u64,
        buyer: Address,
    ) -> Option<&WrappedKey> {
        self.deliveries.get(&(vendor, sensor_type, index, buyer))
    }

    /// Updates the caller's unit price for one of its sensor types.
    pub fn update_sensor_price(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        caller: Address,
        sensor_type: u32,
        price: u64,
    ) -> MarketResult<u64> {
        let result = (|| {
            let record = self.vendors.get_mut(&caller).ok_or(MarketError::NotAVendor)?;
            if !record.types.contains(&sensor_type) {
                return Err(MarketError::UnsupportedSensorType);
            }
            record.prices.insert(sensor_type, price);
            events.append(
                ledger.next_block(),
                EventKind::PriceUpdated { vendor: caller, sensor_type, price },
            );
            Ok(price)
        })();
        self.charge(ledger, 1, result)
    }

    /// Customer pays the current price for a payload; atomically records the
    /// purchase and enables a vote for the vendor.
    pub fn request_for_data(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        caller: Address,
        vendor: Address,
        sensor_type: u32,
        index: u64,
    ) -> MarketResult<Address> {
        let result = (|| {
            if !self.customers.contains_key(&caller) {
                return Err(MarketError::NotACustomer);
            }
            let record = self.vendors.get(&vendor).ok_or(MarketError::UnknownVendor)?;
            let in_range = record
                .payloads
                .get(&sensor_type)
                .is_some_and(|list| (index as usize) < list.len());
            if !in_range {
                return Err(MarketError::IndexOutOfRange);
            }
            let price = *record.prices.get(&sensor_type).expect("payload implies price");
            ledger
                .move_funds(caller, vendor, price, AssetKind::Token)
                .map_err(|_| MarketError::InsufficientFunds)?;
            let customer = self.customers.get_mut(&caller).expect("checked above");
            customer.purchases.push(Purchase { vendor, sensor_type, index });
            customer.vote_rights.insert(vendor, true);
            events.append(
                ledger.next_block(),
                EventKind::DataRequested { customer: caller, vendor, sensor_type, index, price },
            );
            Ok(vendor)
        })();
        self.charge(ledger, 4, result)
    }

    /// Vendor delivers the wrapped key for a purchased payload; returns the
    /// blob handle as a string for the buyer client.
    pub fn transfer_key_and_data(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        caller: Address,
        wrapped: WrappedKey,
        to: Address,
        sensor_type: u32,
        index: u64,
    ) -> MarketResult<String> {
        let result = (|| {
            if !self.vendors.contains_key(&caller) {
                return Err(MarketError::NotAVendor);
            }
            let purchased = self.customers.get(&to).is_some_and(|c| {
                c.purchases.contains(&Purchase { vendor: caller, sensor_type, index })
            });
            if !purchased {
                return Err(MarketError::NoMatchingPurchase);
            }
            let key = (caller, sensor_type, index, to);
            if self.deliveries.contains_key(&key) {
                return Err(MarketError::AlreadyDelivered);
            }
            let record = self.vendors.get_mut(&caller).expect("checked above");
            let payload = record
                .payloads
                .get_mut(&sensor_type)
                .and_then(|list| list.get_mut(index as usize))
                .expect("purchase implies payload");
            payload.encrypted_key = Some(wrapped.clone());
            let handle = payload.handle;
            self.deliveries.insert(key, wrapped.clone());
            events.append(
                ledger.next_block(),
                EventKind::KeyTransferred {
                    vendor: caller,
                    customer: to,
                    sensor_type,
                    index,
                    wrapped,
                    handle,
                },
            );
            Ok(handle.to_string())
        })();
        self.charge(ledger, 2, result)
    }

    /// Spends the caller's single vote right for a vendor.
    pub fn vote_for_vendor(
        &mut self,
        ledger: &mut Ledger,
        events: &mut EventLog,
        caller: Address,
        vendor: Address,
        up: bool,
    ) -> MarketResult<i64> {
        let result = (|| {
            let customer = self.customers.get_mut(&caller).ok_or(MarketError::NoVoteRight)?;
            if !self.vendors.contains_key(&vendor) {
                return Err(MarketError::UnknownVendor);
            }
            let right = customer.vote_rights.get_mut(&vendor);
            match right {
                Some(flag) if *flag => *flag = false,
                _ => return Err(MarketError::NoVoteRight),
            }
            let record = self.vendors.get_mut(&vendor).expect("checked above");
            record.votes += if up { 1 } else { -1 };
            let tally = record.votes;
            events.append(
                ledger.next_block(),
                EventKind::VoteCast { customer: caller, vendor, up, tally },
            );
            Ok(tally)
        })();
        self.charge(ledger, 2, result)
    }

    /// Canonical text dump of contract state; used by replay and the
    /// zero-mutation checks. Order is deterministic.
    pub fn snapshot(&self, out: &mut String) {
        use std::fmt::Write;
        for (addr, v) in &self.vendors {
            writeln!(out, "vendor {addr} prefix={:?} votes={}", v.prefix, v.votes).unwrap();
            for (t, price) in &v.prices {
                writeln!(out, "  type {t} price={price}").unwrap();
            }
            for d in &v.devices {
                writeln!(out, "  device {d}").unwrap();
            }
            for (t, list) in &v.payloads {
                for (i, p) in list.iter().enumerate() {
                    writeln!(
                        out,
                        "  payload {t}/{i} device={} ts={} handle={} schema={:?} spatial={} key_index={} scheme={} key={}",
                        p.device_id,
                        p.timestamp_s,
                        p.handle,
                        p.schema,
                        p.spatial,
                        p.key_index,
                        p.scheme,
                        p.encrypted_key
                            .as_ref()
                            .map_or("none".to_owned(), |w| hex::encode(&w.ciphertext)),
                    )
                    .unwrap();
                }
            }
        }
        for (addr, c) in &self.customers {
            writeln!(out, "customer {addr} pub_key={}", c.pub_key).unwrap();
            for p in &c.purchases {
                writeln!(out, "  purchase {}/{}/{}", p.vendor, p.sensor_type, p.index).unwrap();
            }
            for (v, flag) in &c.vote_rights {
                writeln!(out, "  vote_right {v}={flag}").unwrap();
            }
        }
        for ((vendor, t, i, buyer), w) in &self.deliveries {
            writeln!(out, "delivery {vendor}/{t}/{i}/{buyer} {}", hex::encode(&w.ciphertext)).unwrap();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, EncryptionScheme::SchemeA};
    use crate::ledger::LedgerConfig;

    struct Fixture {
        ledger: Ledger,
        events: EventLog,
        store: BlobStore,
        market: Marketplace,
        vendor: Address,
        device: Address,
        customer: Address,
        handle: Handle,
    }

    fn fixture() -> Fixture {
        let mut ledger = Ledger::new(LedgerConfig::default());
        let mut events = EventLog::new();
        let mut store = BlobStore::in_memory();
        let mut market = Marketplace::new();
        let vendor = ledger.create_account(&mut events);
        let device = ledger.create_account(&mut events);
        let customer = ledger.create_account(&mut events);
        let handle = store.put(b"ciphertext blob", 0).unwrap();
        market
            .vendor_register(&mut ledger, &mut events, vendor, "AcmeWear", &[1], &[10])
            .unwrap();
        market
            .add_valid_device(&mut ledger, &mut events, vendor, device)
            .unwrap();
        let key = generate_keypair(b"fixture customer key").unwrap();
        market
            .customer_register(&mut ledger, &mut events, customer, &key.public.to_hex())
            .unwrap();
        Fixture { ledger, events, store, market, vendor, device, customer, handle }
    }

    fn push(f: &mut Fixture) -> u64 {
        f.market
            .sensor_data_push(
                &mut f.ledger,
                &mut f.events,
                &f.store,
                f.device,
                f.vendor,
                1,
                "hr-json",
                0,
                "XM4885445",
                f.handle,
                0,
                SchemeA,
            )
            .unwrap();
        f.market.sensor_data_length(f.vendor, 1).unwrap() - 1
    }

    #[test]
    fn register_duplicate_sensor_rejected() {
        let mut f = fixture();
        let fresh = f.ledger.create_account(&mut f.events);
        assert_eq!(
            f.market
                .vendor_register(&mut f.ledger, &mut f.events, fresh, "X", &[1, 1], &[1, 1])
                .unwrap_err(),
            MarketError::InvalidSensorType
        );
        assert_eq!(
            f.market
                .vendor_register(&mut f.ledger, &mut f.events, fresh, "X", &[1, 2], &[1, 2, 3])
                .unwrap_err(),
            MarketError::LengthMismatch
        );
        assert_eq!(
            f.market
                .vendor_register(&mut f.ledger, &mut f.events, f.vendor, "Y", &[3], &[1])
                .unwrap_err(),
            MarketError::AlreadyRegistered
        );
    }

    #[test]
    fn customer_register_validations() {
        let mut f = fixture();
        let fresh = f.ledger.create_account(&mut f.events);
        assert_eq!(
            f.market
                .customer_register(&mut f.ledger, &mut f.events, fresh, "zz")
                .unwrap_err(),
            MarketError::MalformedPublicKey
        );
        let key = generate_keypair(b"another customer key").unwrap();
        f.market
            .customer_register(&mut f.ledger, &mut f.events, fresh, &key.public.to_hex())
            .unwrap();
        assert_eq!(
            f.market
                .customer_register(&mut f.ledger, &mut f.events, fresh, &key.public.to_hex())
                .unwrap_err(),
            MarketError::AlreadyRegistered
        );
    }

    #[test]
    fn whitelist_gates_push() {
        let mut f = fixture();
        let rogue = f.ledger.create_account(&mut f.events);
        let before = f.market.sensor_data_length(f.vendor, 1).unwrap();
        let err = f
            .market
            .sensor_data_push(
                &mut f.ledger,
                &mut f.events,
                &f.store,
                rogue,
                f.vendor,
                1,
                "hr-json",
                0,
                "XM4885445",
                f.handle,
                0,
                SchemeA,
            )
            .unwrap_err();
        assert_eq!(err, MarketError::UnauthorizedDevice);
        assert_eq!(f.market.sensor_data_length(f.vendor, 1).unwrap(), before);
        push(&mut f);
        assert_eq!(f.market.sensor_data_length(f.vendor, 1).unwrap(), before + 1);
    }

    #[test]
    fn push_validations() {
        let mut f = fixture();
        let unsupported = f
            .market
            .sensor_data_push(
                &mut f.ledger,
                &mut f.events,
                &f.store,
                f.device,
                f.vendor,
                2,
                "s",
                0,
                "XM4885445",
                f.handle,
                0,
                SchemeA,
            )
            .unwrap_err();
        assert_eq!(unsupported, MarketError::UnsupportedSensorType);
        let bad_geo = f
            .market
            .sensor_data_push(
                &mut f.ledger,
                &mut f.events,
                &f.store,
                f.device,
                f.vendor,
                1,
                "s",
                0,
                "not a code!",
                f.handle,
                0,
                SchemeA,
            )
            .unwrap_err();
        assert_eq!(bad_geo, MarketError::InvalidGeoCode);
        let ghost = Handle::of_content(b"never stored");
        let no_blob = f
            .market
            .sensor_data_push(
                &mut f.ledger,
                &mut f.events,
                &f.store,
                f.device,
                f.vendor,
                1,
                "s",
                0,
                "XM4885445",
                ghost,
                0,
                SchemeA,
            )
            .unwrap_err();
        assert_eq!(no_blob, MarketError::UnknownHandle);
    }

    #[test]
    fn query_sensor_enumerates_in_registration_order() {
        let mut f = fixture();
        let v2 = f.ledger.create_account(&mut f.events);
        f.market
            .vendor_register(&mut f.ledger, &mut f.events, v2, "Beta", &[1, 2], &[5, 6])
            .unwrap();
        assert_eq!(f.market.query_sensor(1, 0).unwrap(), f.vendor);
        assert_eq!(f.market.query_sensor(1, 1).unwrap(), v2);
        assert_eq!(f.market.query_sensor(1, 2).unwrap_err(), MarketError::IndexOutOfRange);
        assert_eq!(f.market.query_sensor(99, 0).unwrap_err(), MarketError::IndexOutOfRange);
        assert_eq!(f.market.vendor_length(), 2);
    }

    #[test]
    fn pull_returns_metadata_without_handle() {
        let mut f = fixture();
        let idx = push(&mut f);
        let view = f.market.sensor_data_pull(f.vendor, 1, idx).unwrap();
        assert_eq!(view.schema, "hr-json");
        assert_eq!(view.price, 10);
        f.market
            .update_sensor_price(&mut f.ledger, &mut f.events, f.vendor, 1, 12)
            .unwrap();
        let view = f.market.sensor_data_pull(f.vendor, 1, idx).unwrap();
        assert_eq!(view.price, 12);
        let dump = format!("{view:?}");
        assert!(!dump.contains(&f.handle.to_string()));
    }

    #[test]
    fn request_pays_and_grants_vote_right() {
        let mut f = fixture();
        let idx = push(&mut f);
        f.ledger.mint(&mut f.events, f.customer, 0, 10).unwrap();
        f.market
            .request_for_data(&mut f.ledger, &mut f.events, f.customer, f.vendor, 1, idx)
            .unwrap();
        assert_eq!(f.ledger.balance_of(f.customer).unwrap(), (0, 0));
        assert_eq!(f.ledger.balance_of(f.vendor).unwrap(), (0, 10));
        assert_eq!(f.market.purchases(f.customer).unwrap().len(), 1);
    }

    #[test]
    fn request_atomic_on_insufficient_funds() {
        let mut f = fixture();
        let idx = push(&mut f);
        f.ledger.mint(&mut f.events, f.customer, 0, 9).unwrap();
        assert_eq!(
            f.market
                .request_for_data(&mut f.ledger, &mut f.events, f.customer, f.vendor, 1, idx)
                .unwrap_err(),
            MarketError::InsufficientFunds
        );
        assert_eq!(f.ledger.balance_of(f.customer).unwrap(), (0, 9));
        assert!(f.market.purchases(f.customer).unwrap().is_empty());
        assert_eq!(
            f.market
                .vote_for_vendor(&mut f.ledger, &mut f.events, f.customer, f.vendor, true)
                .unwrap_err(),
            MarketError::NoVoteRight
        );
    }

    #[test]
    fn repeat_purchase_pays_again() {
        let mut f = fixture();
        let idx = push(&mut f);
        f.ledger.mint(&mut f.events, f.customer, 0, 25).unwrap();
        for _ in 0..2 {
            f.market
                .request_for_data(&mut f.ledger, &mut f.events, f.customer, f.vendor, 1, idx)
                .unwrap();
        }
        assert_eq!(f.ledger.balance_of(f.customer).unwrap(), (0, 5));
        assert_eq!(f.market.purchases(f.customer).unwrap().len(), 2);
    }

    #[test]
    fn zero_price_purchase() {
        let mut f = fixture();
        let idx = push(&mut f);
        f.market
            .update_sensor_price(&mut f.ledger, &mut f.events, f.vendor, 1, 0)
            .unwrap();
        f.market
            .request_for_data(&mut f.ledger, &mut f.events, f.customer, f.vendor, 1, idx)
            .unwrap();
        assert_eq!(f.ledger.balance_of(f.customer).unwrap(), (0, 0));
    }

    #[test]
    fn delivery_requires_purchase_and_happens_once() {
        let mut f = fixture();
        let idx = push(&mut f);
        let wrapped = WrappedKey { ciphertext: vec![1, 2, 3], recipient: f.customer };
        assert_eq!(
            f.market
                .transfer_key_and_data(
                    &mut f.ledger,
                    &mut f.events,
                    f.vendor,
                    wrapped.clone(),
                    f.customer,
                    1,
                    idx,
                )
                .unwrap_err(),
            MarketError::NoMatchingPurchase
        );
        f.ledger.mint(&mut f.events, f.customer, 0, 10).unwrap();
        f.market
            .request_for_data(&mut f.ledger, &mut f.events, f.customer, f.vendor, 1, idx)
            .unwrap();
        let handle_str = f
            .market
            .transfer_key_and_data(
                &mut f.ledger,
                &mut f.events,
                f.vendor,
                wrapped.clone(),
                f.customer,
                1,
                idx,
            )
            .unwrap();
        assert_eq!(handle_str, f.handle.to_string());
        assert!(f.market.delivery(f.vendor, 1, idx, f.customer).is_some());
        assert_eq!(
            f.market
                .transfer_key_and_data(
                    &mut f.ledger,
                    &mut f.events,
                    f.vendor,
                    wrapped,
                    f.customer,
                    1,
                    idx,
                )
                .unwrap_err(),
            MarketError::AlreadyDelivered
        );
    }

    #[test]
    fn vote_right_is_single_use() {
        let mut f = fixture();
        let idx = push(&mut f);
        f.ledger.mint(&mut f.events, f.customer, 0, 20).unwrap();
        f.market
            .request_for_data(&mut f.ledger, &mut f.events, f.customer, f.vendor, 1, idx)
            .unwrap();
        assert_eq!(
            f.market
                .vote_for_vendor(&mut f.ledger, &mut f.events, f.customer, f.vendor, true)
                .unwrap(),
            1
        );
        assert_eq!(
            f.market
                .vote_for_vendor(&mut f.ledger, &mut f.events, f.customer, f.vendor, true)
                .unwrap_err(),
            MarketError::NoVoteRight
        );
        // A second purchase re-arms the right; a down vote then nets zero.
        f.market
            .request_for_data(&mut f.ledger, &mut f.events, f.customer, f.vendor, 1, idx)
            .unwrap();
        assert_eq!(
            f.market
                .vote_for_vendor(&mut f.ledger, &mut f.events, f.customer, f.vendor, false)
                .unwrap(),
            0
        );
    }

    #[test]
    fn views_are_free_and_pure() {
        let mut f = fixture();
        let idx = push(&mut f);
        let receipts = f.ledger.receipts().len();
        let mut snap_before = String::new();
        f.market.snapshot(&mut snap_before);
        let _ = f.market.query_sensor(1, 0);
        let _ = f.market.sensor_data_pull(f.vendor, 1, idx);
        let _ = f.market.sensor_data_length(f.vendor, 1);
        let _ = f.market.vendor_length();
        let _ = f.market.get_vendor(f.vendor);
        let _ = f.market.get_sensor_price(f.vendor, 1);
        let _ = f.market.customer_pub_key(f.customer);
        assert_eq!(f.ledger.receipts().len(), receipts);
        let mut snap_after = String::new();
        f.market.snapshot(&mut snap_after);
        assert_eq!(snap_before, snap_after);
    }

    #[test]
    fn view_errors() {
        let f = fixture();
        let ghost = Address::from_bytes([9; 20]);
        assert_eq!(f.market.get_vendor(ghost).unwrap_err(), MarketError::UnknownVendor);
        assert_eq!(f.market.sensor_data_length(ghost, 1).unwrap_err(), MarketError::UnknownVendor);
        assert_eq!(
            f.market.sensor_data_length(f.vendor, 9).unwrap_err(),
            MarketError::UnsupportedSensorType
        );
        assert_eq!(f.market.sensor_data_pull(f.vendor, 1, 0).unwrap_err(), MarketError::IndexOutOfRange);
    }

    #[test]
    fn update_price_role_check() {
        let mut f = fixture();
        assert_eq!(
            f.market
                .update_sensor_price(&mut f.ledger, &mut f.events, f.customer, 1, 5)
                .unwrap_err(),
            MarketError::NotAVendor
        );
        assert_eq!(
            f.market
                .update_sensor_price(&mut f.ledger, &mut f.events, f.vendor, 9, 5)
                .unwrap_err(),
            MarketError::UnsupportedSensorType
        );
    }

    #[test]
    fn failed_ops_cost_zero_and_successful_ops_cost_constant() {
        let mut f = fixture();
        let idx = push(&mut f);
        let s = f.ledger.schedule();
        // Last receipt was the successful push.
        let push_cost = f.ledger.last_receipt().unwrap().cost_units;
        assert_eq!(push_cost, s.base_tx_units + s.per_write_units + s.per_event_units);
        let _ = f.market.request_for_data(&mut f.ledger, &mut f.events, f.customer, f.vendor, 1, idx);
        // InsufficientFunds: failure receipts are free.
        assert_eq!(f.ledger.last_receipt().unwrap().cost_units, 0);
    }

    #[test]
    fn device_whitelist_idempotent() {
        let mut f = fixture();
        f.market
            .add_valid_device(&mut f.ledger, &mut f.events, f.vendor, f.device)
            .unwrap();
        let record = f.market.vendor_record(f.vendor).unwrap();
        assert_eq!(record.devices.len(), 1);
    }
}
