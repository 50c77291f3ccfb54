//! Scenario file format and loader.
//!
//! A scenario is a line-oriented text file. Blank lines and `#` comments are
//! ignored. Directives:
//!
//! ```text
//! scenario <name>
//! seed <u64>
//! block-interval <seconds>          (default 14)
//! push-interval <seconds>           (default 1800)
//! genesis-offset <seconds>          (default 0)
//! dispute-window <blocks>           (default 10)
//! cost base=<u64> write=<u64> event=<u64>
//! actor vendor <name>
//! actor device <name> vendor=<vendor-name>
//! actor customer <name>
//! step <block> <actor> <verb> [key=value ...]
//! ```
//!
//! Step verbs and their arguments:
//!
//! ```text
//! fund            [native=N] [tokens=N]
//! vendor-register prefix=S sensors=T:PRICE[,T:PRICE...]
//! add-device      device=<device-name>
//! register                                   (customer keypair is implicit)
//! push            sensor=T schema=S bytes=N geo=LAT,LON:LEVEL
//!                 [scheme=A|B] [repeat=K] [every=SECONDS]
//! query           sensor=T
//! pull            vendor=<name> sensor=T index=I
//! request         vendor=<name> sensor=T index=I
//! vote            vendor=<name> dir=up|down
//! update-price    sensor=T price=N
//! transfer        to=<name> amount=N kind=native|token
//! open-channel    with=<name> deposit=N [peer-deposit=N]
//! channel-pay     with=<name> amount=N [repeat=K]
//! close-channel   with=<name> [nonce=K]     (nonce picks a stale state)
//! challenge       with=<name>
//! settle          with=<name>
//! coop-close      with=<name>
//! ```
//!
//! `push` with `repeat=K` expands into K separate steps spaced `every`
//! seconds apart (default: the scenario push interval), rounded up to whole
//! blocks. Steps are stably sorted by block after expansion.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::crypto::EncryptionScheme;
use crate::geohex::{self, GeoPoint};
use crate::ledger::{AssetKind, CostSchedule, DEFAULT_BLOCK_INTERVAL_S};

/// Default device push cadence in seconds (the long-interval regime the
/// marketplace targets).
pub const DEFAULT_PUSH_INTERVAL_S: u64 = 1800;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error at {place}: {msg}")]
    Validation { place: String, msg: String },
    #[error("cannot read scenario: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Vendor,
    Device,
    Customer,
}

impl Role {
    pub fn name(&self) -> &'static str {
        match self {
            Role::Vendor => "vendor",
            Role::Device => "device",
            Role::Customer => "customer",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActorSpec {
    pub name: String,
    pub role: Role,
    /// Owning vendor, for devices.
    pub vendor: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Fund { native: u64, tokens: u64 },
    VendorRegister { prefix: String, sensors: Vec<(u32, u64)> },
    AddDevice { device: String },
    RegisterCustomer,
    Push {
        sensor: u32,
        schema: String,
        bytes: usize,
        point: (f64, f64),
        level: u8,
        scheme: EncryptionScheme,
    },
    Query { sensor: u32 },
    Pull { vendor: String, sensor: u32, index: u64 },
    Request { vendor: String, sensor: u32, index: u64 },
    Vote { vendor: String, up: bool },
    UpdatePrice { sensor: u32, price: u64 },
    Transfer { to: String, amount: u64, kind: AssetKind },
    OpenChannel { with: String, deposit: u64, peer_deposit: u64 },
    ChannelPay { with: String, amount: u64, repeat: u64 },
    CloseChannel { with: String, nonce: Option<u64> },
    Challenge { with: String },
    Settle { with: String },
    CoopClose { with: String },
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::Fund { .. } => "fund",
            Action::VendorRegister { .. } => "vendor-register",
            Action::AddDevice { .. } => "add-device",
            Action::RegisterCustomer => "register",
            Action::Push { .. } => "push",
            Action::Query { .. } => "query",
            Action::Pull { .. } => "pull",
            Action::Request { .. } => "request",
            Action::Vote { .. } => "vote",
            Action::UpdatePrice { .. } => "update-price",
            Action::Transfer { .. } => "transfer",
            Action::OpenChannel { .. } => "open-channel",
            Action::ChannelPay { .. } => "channel-pay",
            Action::CloseChannel { .. } => "close-channel",
            Action::Challenge { .. } => "challenge",
            Action::Settle { .. } => "settle",
            Action::CoopClose { .. } => "coop-close",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub block: u64,
    pub actor: String,
    pub action: Action,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub block_interval_s: u64,
    pub push_interval_s: u64,
    pub genesis_offset_s: u64,
    pub dispute_window: u64,
    pub cost: CostSchedule,
    pub actors: Vec<ActorSpec>,
    pub steps: Vec<Step>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Scenario::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Scenario, ScenarioError> {
        let mut builder = Builder::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            builder.line(line, line_no)?;
        }
        builder.finish()
    }

    pub fn actor_index(&self, name: &str) -> Option<usize> {
        self.actors.iter().position(|a| a.name == name)
    }

    /// Highest scheduled block.
    pub fn last_step_block(&self) -> u64 {
        self.steps.iter().map(|s| s.block).max().unwrap_or(0)
    }
}

#[derive(Default)]
struct Builder {
    name: Option<String>,
    seed: u64,
    block_interval_s: Option<u64>,
    push_interval_s: Option<u64>,
    genesis_offset_s: u64,
    dispute_window: Option<u64>,
    cost: Option<CostSchedule>,
    actors: Vec<ActorSpec>,
    steps: Vec<(usize, Step)>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse { line, msg: msg.into() }
}

/// Key=value argument bag for one step line.
struct Args<'a> {
    map: BTreeMap<&'a str, &'a str>,
    line: usize,
}

impl<'a> Args<'a> {
    fn new(tokens: &[&'a str], line: usize) -> Result<Self, ScenarioError> {
        let mut map = BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected key=value, got {tok:?}")))?;
            if map.insert(k, v).is_some() {
                return Err(parse_err(line, format!("duplicate argument {k}")));
            }
        }
        Ok(Args { map, line })
    }

    fn get(&mut self, key: &str) -> Result<&'a str, ScenarioError> {
        self.map
            .remove(key)
            .ok_or_else(|| parse_err(self.line, format!("missing argument {key}")))
    }

    fn opt(&mut self, key: &str) -> Option<&'a str> {
        self.map.remove(key)
    }

    fn u64(&mut self, key: &str) -> Result<u64, ScenarioError> {
        self.get(key)?
            .parse()
            .map_err(|_| parse_err(self.line, format!("argument {key} must be an integer")))
    }

    fn u64_opt(&mut self, key: &str, default: u64) -> Result<u64, ScenarioError> {
        match self.opt(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| parse_err(self.line, format!("argument {key} must be an integer"))),
        }
    }

    fn u32(&mut self, key: &str) -> Result<u32, ScenarioError> {
        self.get(key)?
            .parse()
            .map_err(|_| parse_err(self.line, format!("argument {key} must be an integer")))
    }

    fn done(self) -> Result<(), ScenarioError> {
        if let Some(k) = self.map.keys().next() {
            return Err(parse_err(self.line, format!("unknown argument {k}")));
        }
        Ok(())
    }
}

impl Builder {
    fn line(&mut self, line: &str, line_no: usize) -> Result<(), ScenarioError> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "scenario" => {
                let name = tokens.get(1).ok_or_else(|| parse_err(line_no, "missing name"))?;
                self.name = Some((*name).to_owned());
            }
            "seed" => self.seed = int(tokens.get(1), line_no, "seed")?,
            "block-interval" => {
                let v = int(tokens.get(1), line_no, "block-interval")?;
                if v == 0 {
                    return Err(parse_err(line_no, "block-interval must be positive"));
                }
                self.block_interval_s = Some(v);
            }
            "push-interval" => {
                let v = int(tokens.get(1), line_no, "push-interval")?;
                if v == 0 {
                    return Err(parse_err(line_no, "push-interval must be positive"));
                }
                self.push_interval_s = Some(v);
            }
            "genesis-offset" => self.genesis_offset_s = int(tokens.get(1), line_no, "genesis-offset")?,
            "dispute-window" => self.dispute_window = Some(int(tokens.get(1), line_no, "dispute-window")?),
            "cost" => {
                let mut args = Args::new(&tokens[1..], line_no)?;
                self.cost = Some(CostSchedule {
                    base_tx_units: args.u64("base")?,
                    per_write_units: args.u64("write")?,
                    per_event_units: args.u64("event")?,
                });
                args.done()?;
            }
            "actor" => self.actor(&tokens[1..], line_no)?,
            "step" => self.step(&tokens[1..], line_no)?,
            other => return Err(parse_err(line_no, format!("unknown directive {other}"))),
        }
        Ok(())
    }

    fn actor(&mut self, tokens: &[&str], line_no: usize) -> Result<(), ScenarioError> {
        let role = match tokens.first() {
            Some(&"vendor") => Role::Vendor,
            Some(&"device") => Role::Device,
            Some(&"customer") => Role::Customer,
            _ => return Err(parse_err(line_no, "actor role must be vendor, device or customer")),
        };
        let name = tokens
            .get(1)
            .ok_or_else(|| parse_err(line_no, "missing actor name"))?;
        let mut args = Args::new(&tokens[2..], line_no)?;
        let vendor = args.opt("vendor").map(str::to_owned);
        args.done()?;
        if role == Role::Device && vendor.is_none() {
            return Err(parse_err(line_no, "device actors need vendor=<name>"));
        }
        if role != Role::Device && vendor.is_some() {
            return Err(parse_err(line_no, "only device actors take vendor="));
        }
        if self.actors.iter().any(|a| a.name == *name) {
            return Err(parse_err(line_no, format!("duplicate actor {name}")));
        }
        self.actors.push(ActorSpec {
            name: (*name).to_owned(),
            role,
            vendor,
        });
        Ok(())
    }

    fn step(&mut self, tokens: &[&str], line_no: usize) -> Result<(), ScenarioError> {
        let block: u64 = int(tokens.first(), line_no, "step block")?;
        if block == 0 {
            return Err(parse_err(line_no, "step blocks start at 1"));
        }
        let actor = tokens
            .get(1)
            .ok_or_else(|| parse_err(line_no, "missing step actor"))?;
        let verb = tokens
            .get(2)
            .ok_or_else(|| parse_err(line_no, "missing step verb"))?;
        let mut args = Args::new(&tokens[3..], line_no)?;
        let mut push_repeat = None;
        let action = match *verb {
            "fund" => Action::Fund {
                native: args.u64_opt("native", 0)?,
                tokens: args.u64_opt("tokens", 0)?,
            },
            "vendor-register" => {
                let prefix = args.get("prefix")?.to_owned();
                let list = args.get("sensors")?;
                let mut sensors = Vec::new();
                for part in list.split(',') {
                    let (t, p) = part
                        .split_once(':')
                        .ok_or_else(|| parse_err(line_no, "sensors must be TYPE:PRICE pairs"))?;
                    sensors.push((
                        t.parse().map_err(|_| parse_err(line_no, "bad sensor type"))?,
                        p.parse().map_err(|_| parse_err(line_no, "bad sensor price"))?,
                    ));
                }
                Action::VendorRegister { prefix, sensors }
            }
            "add-device" => Action::AddDevice { device: args.get("device")?.to_owned() },
            "register" => Action::RegisterCustomer,
            "push" => {
                let geo = args.get("geo")?;
                let (coords, level) = geo
                    .split_once(':')
                    .ok_or_else(|| parse_err(line_no, "geo must be LAT,LON:LEVEL"))?;
                let (lat, lon) = coords
                    .split_once(',')
                    .ok_or_else(|| parse_err(line_no, "geo must be LAT,LON:LEVEL"))?;
                let lat: f64 = lat.parse().map_err(|_| parse_err(line_no, "bad latitude"))?;
                let lon: f64 = lon.parse().map_err(|_| parse_err(line_no, "bad longitude"))?;
                let level: u8 = level.parse().map_err(|_| parse_err(line_no, "bad geo level"))?;
                let scheme = match args.opt("scheme").unwrap_or("A") {
                    "A" => EncryptionScheme::SchemeA,
                    "B" => EncryptionScheme::SchemeB,
                    other => return Err(parse_err(line_no, format!("unknown scheme {other}"))),
                };
                push_repeat = Some((args.u64_opt("repeat", 1)?, args.opt("every").map(str::to_owned)));
                Action::Push {
                    sensor: args.u32("sensor")?,
                    schema: args.get("schema")?.to_owned(),
                    bytes: args.u64("bytes")? as usize,
                    point: (lat, lon),
                    level,
                    scheme,
                }
            }
            "query" => Action::Query { sensor: args.u32("sensor")? },
            "pull" => Action::Pull {
                vendor: args.get("vendor")?.to_owned(),
                sensor: args.u32("sensor")?,
                index: args.u64("index")?,
            },
            "request" => Action::Request {
                vendor: args.get("vendor")?.to_owned(),
                sensor: args.u32("sensor")?,
                index: args.u64("index")?,
            },
            "vote" => Action::Vote {
                vendor: args.get("vendor")?.to_owned(),
                up: match args.get("dir")? {
                    "up" => true,
                    "down" => false,
                    _ => return Err(parse_err(line_no, "dir must be up or down")),
                },
            },
            "update-price" => Action::UpdatePrice {
                sensor: args.u32("sensor")?,
                price: args.u64("price")?,
            },
            "transfer" => Action::Transfer {
                to: args.get("to")?.to_owned(),
                amount: args.u64("amount")?,
                kind: AssetKind::from_name(args.get("kind")?)
                    .ok_or_else(|| parse_err(line_no, "kind must be native or token"))?,
            },
            "open-channel" => Action::OpenChannel {
                with: args.get("with")?.to_owned(),
                deposit: args.u64("deposit")?,
                peer_deposit: args.u64_opt("peer-deposit", 0)?,
            },
            "channel-pay" => Action::ChannelPay {
                with: args.get("with")?.to_owned(),
                amount: args.u64("amount")?,
                repeat: args.u64_opt("repeat", 1)?,
            },
            "close-channel" => Action::CloseChannel {
                with: args.get("with")?.to_owned(),
                nonce: match args.opt("nonce") {
                    None => None,
                    Some(v) => Some(
                        v.parse().map_err(|_| parse_err(line_no, "bad nonce"))?,
                    ),
                },
            },
            "challenge" => Action::Challenge { with: args.get("with")?.to_owned() },
            "settle" => Action::Settle { with: args.get("with")?.to_owned() },
            "coop-close" => Action::CoopClose { with: args.get("with")?.to_owned() },
            other => return Err(parse_err(line_no, format!("unknown verb {other}"))),
        };
        args.done()?;
        let (repeat, every) = push_repeat.unwrap_or((1, None));
        self.steps.push((
            line_no,
            Step { block, actor: (*actor).to_owned(), action: action.clone() },
        ));
        if repeat > 1 {
            let every_s: u64 = match every {
                Some(s) => s
                    .parse()
                    .map_err(|_| parse_err(line_no, "every must be seconds"))?,
                None => self.push_interval_s.unwrap_or(DEFAULT_PUSH_INTERVAL_S),
            };
            let interval = self.block_interval_s.unwrap_or(DEFAULT_BLOCK_INTERVAL_S);
            for i in 1..repeat {
                let offset_s = every_s * i;
                let offset_blocks = offset_s.div_ceil(interval);
                self.steps.push((
                    line_no,
                    Step {
                        block: block + offset_blocks,
                        actor: (*actor).to_owned(),
                        action: action.clone(),
                    },
                ));
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Scenario, ScenarioError> {
        self.steps.sort_by_key(|(_, s)| s.block);
        let scenario = Scenario {
            name: self.name.unwrap_or_else(|| "unnamed".to_owned()),
            seed: self.seed,
            block_interval_s: self.block_interval_s.unwrap_or(DEFAULT_BLOCK_INTERVAL_S),
            push_interval_s: self.push_interval_s.unwrap_or(DEFAULT_PUSH_INTERVAL_S),
            genesis_offset_s: self.genesis_offset_s,
            dispute_window: self.dispute_window.unwrap_or(10),
            cost: self.cost.unwrap_or_default(),
            actors: self.actors,
            steps: self.steps.into_iter().map(|(_, s)| s).collect(),
        };
        validate(&scenario)?;
        Ok(scenario)
    }
}

fn int(token: Option<&&str>, line: usize, what: &str) -> Result<u64, ScenarioError> {
    token
        .ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    let invalid = |place: &str, msg: String| ScenarioError::Validation { place: place.to_owned(), msg };
    for actor in &s.actors {
        if let Some(vendor) = &actor.vendor {
            let found = s
                .actors
                .iter()
                .any(|a| a.name == *vendor && a.role == Role::Vendor);
            if !found {
                return Err(invalid(
                    &format!("actor {}", actor.name),
                    format!("vendor {vendor} is not a defined vendor actor"),
                ));
            }
        }
    }
    for (i, step) in s.steps.iter().enumerate() {
        let place = format!("step {} ({} {})", i + 1, step.actor, step.action.verb());
        let actor = s
            .actors
            .iter()
            .find(|a| a.name == step.actor)
            .ok_or_else(|| invalid(&place, format!("undefined actor {}", step.actor)))?;
        let need_role = |role: Role| -> Result<(), ScenarioError> {
            if actor.role != role {
                return Err(invalid(
                    &place,
                    format!("verb {} requires a {} actor", step.action.verb(), role.name()),
                ));
            }
            Ok(())
        };
        let need_actor = |name: &str, role: Option<Role>| -> Result<(), ScenarioError> {
            let found = s.actors.iter().find(|a| a.name == name);
            match (found, role) {
                (None, _) => Err(invalid(&place, format!("undefined actor {name}"))),
                (Some(a), Some(r)) if a.role != r => {
                    Err(invalid(&place, format!("{name} is not a {} actor", r.name())))
                }
                _ => Ok(()),
            }
        };
        match &step.action {
            Action::Fund { .. } => {}
            Action::Transfer { to, .. } => need_actor(to, None)?,
            Action::VendorRegister { sensors, .. } => {
                need_role(Role::Vendor)?;
                if sensors.is_empty() {
                    return Err(invalid(&place, "sensors list is empty".into()));
                }
            }
            Action::AddDevice { device } => {
                need_role(Role::Vendor)?;
                need_actor(device, Some(Role::Device))?;
            }
            Action::RegisterCustomer => need_role(Role::Customer)?,
            Action::Push { point, level, .. } => {
                need_role(Role::Device)?;
                geohex::encode(GeoPoint::new(point.0, point.1), *level).map_err(|e| {
                    invalid(&place, format!("geo location does not encode: {e}"))
                })?;
            }
            Action::Query { .. } => need_role(Role::Customer)?,
            Action::Pull { vendor, .. } | Action::Request { vendor, .. } | Action::Vote { vendor, .. } => {
                need_role(Role::Customer)?;
                need_actor(vendor, Some(Role::Vendor))?;
            }
            Action::UpdatePrice { .. } => need_role(Role::Vendor)?,
            Action::OpenChannel { with, .. }
            | Action::ChannelPay { with, .. }
            | Action::CloseChannel { with, .. }
            | Action::Challenge { with }
            | Action::Settle { with }
            | Action::CoopClose { with } => {
                if actor.role == Role::Device {
                    return Err(invalid(&place, "devices do not hold channels".into()));
                }
                need_actor(with, None)?;
                let peer = s.actors.iter().find(|a| a.name == *with).expect("checked");
                if peer.role == Role::Device {
                    return Err(invalid(&place, "devices do not hold channels".into()));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
scenario demo
seed 7
actor vendor v
actor device d vendor=v
actor customer c

step 2 c register
step 1 v vendor-register prefix=V sensors=1:5
";

    #[test]
    fn parses_and_sorts_steps() {
        let s = Scenario::from_text(MINIMAL).unwrap();
        assert_eq!(s.name, "demo");
        assert_eq!(s.seed, 7);
        assert_eq!(s.block_interval_s, 14);
        assert_eq!(s.push_interval_s, 1800);
        assert_eq!(s.actors.len(), 3);
        assert_eq!(s.steps[0].block, 1);
        assert_eq!(s.steps[1].block, 2);
    }

    #[test]
    fn undefined_actor_is_validation_error() {
        let text = format!("{MINIMAL}step 3 ghost register\n");
        let err = Scenario::from_text(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Validation { .. }), "{err}");
    }

    #[test]
    fn role_mismatch_is_validation_error() {
        let text = format!("{MINIMAL}step 3 v register\n");
        assert!(matches!(
            Scenario::from_text(&text).unwrap_err(),
            ScenarioError::Validation { .. }
        ));
    }

    #[test]
    fn bad_geo_rejected_at_load() {
        let text = format!(
            "{MINIMAL}step 3 d push sensor=1 schema=s bytes=8 geo=99.0,0.0:5\n"
        );
        assert!(matches!(
            Scenario::from_text(&text).unwrap_err(),
            ScenarioError::Validation { .. }
        ));
    }

    #[test]
    fn push_repeat_expands_on_push_interval() {
        let text = "\
scenario cadence
seed 1
block-interval 14
push-interval 1800
actor vendor v
actor device d vendor=v
step 1 v vendor-register prefix=V sensors=1:5
step 2 v add-device device=d
step 3 d push sensor=1 schema=s bytes=8 geo=10.0,10.0:5 repeat=3
";
        let s = Scenario::from_text(text).unwrap();
        let pushes: Vec<u64> = s
            .steps
            .iter()
            .filter(|st| matches!(st.action, Action::Push { .. }))
            .map(|st| st.block)
            .collect();
        // ceil(1800/14) = 129 blocks => 1806 s apart, above the 1800 s floor.
        assert_eq!(pushes, vec![3, 3 + 129, 3 + 258]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Scenario::from_text("scenario x\nbogus線\n").unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn duplicate_actor_rejected() {
        let text = "scenario x\nactor vendor v\nactor vendor v\n";
        assert!(matches!(
            Scenario::from_text(text).unwrap_err(),
            ScenarioError::Parse { line: 3, .. }
        ));
    }
}
