//! Scenario description and its config file format.
//!
//! The format is line based. Top-level `key = value` lines come first,
//! followed by sections:
//!
//! ```text
//! duration_ms = 60000
//! seed = 7
//! home_id = C0FFEE01
//!
//! [node 1]
//! kind = gateway
//! era = modern_s2
//!
//! [node 2]
//! routing_capable = true
//!
//! [radio]
//! links = 1-2 1-3 2-3
//! attacker_hears = 1 2
//!
//! [timing]
//! nop_wait_ms = 120
//!
//! [attack]
//! kind = power_of_nope
//!
//! [heartbeat]
//! interval_ms = 10000
//!
//! [app]
//! send = 20000 2 25 01 FF
//! ```
//!
//! Unknown sections and keys are errors, as are repeated keys (except
//! `send`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::attacks::{AttackKind, AttackPlan};
use crate::codec::{HomeId, NodeId};
use crate::node::{AppRequest, Era, NodeKind, NodeProfile, TimingParams};
use crate::sim::Topology;

pub const DEFAULT_HOME_ID: HomeId = HomeId(0xCAFE_F00D);
pub const DEFAULT_PROP_DELAY_US: u64 = 1_000;
pub const DEFAULT_MISS_THRESHOLD: u32 = 3;

/// App command submitted to the gateway at a fixed time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledApp {
    pub at_ms: u64,
    pub request: AppRequest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub duration_ms: u64,
    pub seed: u64,
    pub home_id: HomeId,
    pub topology: Topology,
    pub timing: TimingParams,
    pub prop_delay_us: u64,
    pub attack: Option<AttackPlan>,
    pub app_schedule: Vec<ScheduledApp>,
    /// Missed gateway heartbeats before the monitor raises an outage.
    pub heartbeat_miss_threshold: u32,
}

/// One problem with one field of a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid scenario: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
}

fn join(diagnostics: &[Diagnostic]) -> String {
    diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Scenario {
    /// A scenario with the given nodes in full mesh, default timing, no
    /// attacker and no app traffic.
    pub fn new(duration_ms: u64, nodes: Vec<NodeProfile>) -> Self {
        Self {
            duration_ms,
            seed: 0,
            home_id: DEFAULT_HOME_ID,
            topology: Topology::full_mesh(nodes),
            timing: TimingParams::default(),
            prop_delay_us: DEFAULT_PROP_DELAY_US,
            attack: None,
            app_schedule: Vec::new(),
            heartbeat_miss_threshold: DEFAULT_MISS_THRESHOLD,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let scenario = Parser::default().run(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        if self.duration_ms == 0 {
            problems.push(Diagnostic::new("duration_ms", "must be positive"));
        }
        problems.extend(self.topology.validate());
        let t = &self.timing;
        for (field, value) in [
            ("timing.nop_wait_ms", t.nop_wait_ms),
            ("timing.route_retry_budget_ms", t.route_retry_budget_ms),
            ("timing.app_timeout_ms", t.app_timeout_ms),
            ("timing.fnir_passes", t.fnir_passes as u64),
        ] {
            if value == 0 {
                problems.push(Diagnostic::new(field, "must be positive"));
            }
        }
        if let Some(plan) = &self.attack {
            if plan.count == Some(0) {
                problems.push(Diagnostic::new("attack.count", "must be positive or `unbounded`"));
            }
            if plan.use_command_complete_timing && plan.kind != AttackKind::PowerOfNope {
                problems.push(Diagnostic::new(
                    "attack.use_command_complete_timing",
                    "only applies to power_of_nope",
                ));
            }
            if plan.interval_ms == 0 && !plan.use_command_complete_timing {
                problems.push(Diagnostic::new("attack.interval_ms", "must be positive"));
            }
        }
        if self.heartbeat_miss_threshold == 0 {
            problems.push(Diagnostic::new("heartbeat.miss_threshold", "must be at least 1"));
        }
        for (idx, app) in self.app_schedule.iter().enumerate() {
            if !app.request.dst.is_addressable() {
                problems.push(Diagnostic::new(format!("app.send[{idx}]"), "destination is not addressable"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Top,
    Node(NodeId),
    Radio,
    Timing,
    Attack,
    Heartbeat,
    App,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Top => f.write_str("top level"),
            Self::Node(id) => write!(f, "[node {}]", id.0),
            Self::Radio => f.write_str("[radio]"),
            Self::Timing => f.write_str("[timing]"),
            Self::Attack => f.write_str("[attack]"),
            Self::Heartbeat => f.write_str("[heartbeat]"),
            Self::App => f.write_str("[app]"),
        }
    }
}

#[derive(Default)]
struct NodeDraft {
    profile: Option<NodeProfile>,
    routes_to_unknown_set: bool,
}

#[derive(Default)]
struct Parser {
    duration_ms: Option<u64>,
    seed: u64,
    home_id: Option<HomeId>,
    nodes: BTreeMap<NodeId, NodeDraft>,
    links: Option<BTreeSet<(NodeId, NodeId)>>,
    attacker_hears: Option<BTreeSet<NodeId>>,
    prop_delay_us: Option<u64>,
    timing: TimingParams,
    attack: Option<AttackPlan>,
    attack_kind_set: bool,
    heartbeat_interval_ms: Option<u64>,
    miss_threshold: Option<u32>,
    apps: Vec<ScheduledApp>,
    seen: BTreeSet<(Section, String)>,
}

type Fallible<T> = Result<T, String>;

fn number<T: std::str::FromStr>(value: &str) -> Fallible<T> {
    value.parse().map_err(|_| format!("`{value}` is not a valid number"))
}

fn boolean(value: &str) -> Fallible<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{value}` is not a boolean")),
    }
}

fn node_id(value: &str) -> Fallible<NodeId> {
    let id: u8 = number(value)?;
    Ok(NodeId(id))
}

fn node_set(value: &str) -> Fallible<BTreeSet<NodeId>> {
    if value == "none" {
        return Ok(BTreeSet::new());
    }
    value.split_whitespace().map(node_id).collect()
}

fn link(text: &str) -> Fallible<(NodeId, NodeId)> {
    let (a, b) = text
        .split_once('-')
        .ok_or_else(|| format!("`{text}` is not a link (expected `a-b`)"))?;
    Ok((node_id(a)?, node_id(b)?))
}

fn app_command(value: &str) -> Fallible<ScheduledApp> {
    let fields: Vec<&str> = value.split_whitespace().collect();
    let [at, dst, class, cmd, rest @ ..] = &fields[..] else {
        return Err("expected `<at_ms> <dst> <class> <cmd> [params hex]`".into());
    };
    // Command bytes are always hex, as in captures.
    let byte = |text: &str| {
        let digits = text.strip_prefix("0x").unwrap_or(text);
        u8::from_str_radix(digits, 16).map_err(|_| format!("`{text}` is not a hex byte"))
    };
    let params = match rest {
        [] => Vec::new(),
        [hex_text] => hex::decode(hex_text).map_err(|e| format!("params `{hex_text}`: {e}"))?,
        _ => return Err("params must be a single hex string".into()),
    };
    Ok(ScheduledApp {
        at_ms: number(at)?,
        request: AppRequest {
            dst: node_id(dst)?,
            class: byte(class)?,
            cmd: byte(cmd)?,
            params,
        },
    })
}

impl Parser {
    fn run(mut self, text: &str) -> Result<Scenario, ScenarioError> {
        let mut section = Section::Top;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or_default().trim();
            if content.is_empty() {
                continue;
            }
            let syntax = |message: String| ScenarioError::Syntax { line, message };
            if let Some(header) = content.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(format!("unterminated section header `{content}`")))?;
                section = self.open_section(header.trim()).map_err(syntax)?;
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key != "send" && !self.seen.insert((section, key.to_string())) {
                return Err(syntax(format!("duplicate key `{key}` in {section}")));
            }
            self.assign(section, key, value)
                .map_err(|message| syntax(format!("{section} {key}: {message}")))?;
        }
        self.finish()
    }

    fn open_section(&mut self, header: &str) -> Fallible<Section> {
        let mut words = header.split_whitespace();
        let section = match (words.next(), words.next(), words.next()) {
            (Some("node"), Some(id), None) => {
                let id = node_id(id)?;
                if self.nodes.contains_key(&id) {
                    return Err(format!("node {} declared twice", id.0));
                }
                self.nodes.insert(
                    id,
                    NodeDraft {
                        profile: Some(NodeProfile::device(id)),
                        routes_to_unknown_set: false,
                    },
                );
                Section::Node(id)
            }
            (Some("radio"), None, None) => Section::Radio,
            (Some("timing"), None, None) => Section::Timing,
            (Some("attack"), None, None) => {
                self.attack.get_or_insert_with(|| AttackPlan::new(AttackKind::RoutedNoncenseS0));
                Section::Attack
            }
            (Some("heartbeat"), None, None) => Section::Heartbeat,
            (Some("app"), None, None) => Section::App,
            _ => return Err(format!("unknown section `[{header}]`")),
        };
        Ok(section)
    }

    fn assign(&mut self, section: Section, key: &str, value: &str) -> Fallible<()> {
        let unknown = || Err(format!("unknown key `{key}`"));
        match section {
            Section::Top => match key {
                "duration_ms" => self.duration_ms = Some(number(value)?),
                "seed" => self.seed = number(value)?,
                "home_id" => {
                    self.home_id =
                        Some(HomeId::parse_hex(value).ok_or_else(|| format!("`{value}` is not a hex HomeID"))?)
                }
                _ => return unknown(),
            },
            Section::Node(id) => {
                let draft = self.nodes.get_mut(&id).expect("section opened");
                let profile = draft.profile.as_mut().expect("profile present");
                match key {
                    "kind" => {
                        profile.kind = match value {
                            "gateway" => NodeKind::Gateway,
                            "device" => NodeKind::Device,
                            _ => return Err(format!("`{value}` is not `gateway` or `device`")),
                        }
                    }
                    "era" => {
                        profile.era = match value {
                            "legacy_s0" => Era::LegacyS0,
                            "modern_s2" => Era::ModernS2,
                            _ => return Err(format!("`{value}` is not `legacy_s0` or `modern_s2`")),
                        }
                    }
                    "patched" => profile.patched = boolean(value)?,
                    "routing_capable" => profile.routing_capable = boolean(value)?,
                    "in_inclusion" => profile.in_inclusion = boolean(value)?,
                    "routes_to_unknown" => {
                        profile.routes_to_unknown = boolean(value)?;
                        draft.routes_to_unknown_set = true;
                    }
                    "heartbeat_interval_ms" => profile.heartbeat_interval_ms = Some(number(value)?),
                    _ => return unknown(),
                }
            }
            Section::Radio => match key {
                "prop_delay_us" => self.prop_delay_us = Some(number(value)?),
                "links" => {
                    self.links = if value == "full" {
                        None
                    } else {
                        Some(value.split_whitespace().map(link).collect::<Fallible<_>>()?)
                    };
                }
                "attacker_hears" => {
                    self.attacker_hears = if value == "all" { None } else { Some(node_set(value)?) };
                }
                _ => return unknown(),
            },
            Section::Timing => {
                let t = &mut self.timing;
                match key {
                    "nop_wait_ms" => t.nop_wait_ms = number(value)?,
                    "fnir_passes" => t.fnir_passes = number(value)?,
                    "route_retry_budget_ms" => t.route_retry_budget_ms = number(value)?,
                    "route_attempts" => t.route_attempts = number(value)?,
                    "turnaround_ms" => t.turnaround_ms = number(value)?,
                    "hop_ms" => t.hop_ms = number(value)?,
                    "app_timeout_ms" => t.app_timeout_ms = number(value)?,
                    _ => return unknown(),
                }
            }
            Section::Attack => {
                let plan = self.attack.as_mut().expect("section opened");
                match key {
                    "kind" => {
                        let kind: AttackKind = value.parse().map_err(|e: crate::attacks::UnknownAttackKind| e.to_string())?;
                        // Keep an explicit interval if it came first.
                        let interval_set = self.seen.contains(&(Section::Attack, "interval_ms".into()));
                        plan.kind = kind;
                        if !interval_set {
                            plan.interval_ms = kind.default_interval_ms();
                        }
                        self.attack_kind_set = true;
                    }
                    "count" => {
                        plan.count = if value == "unbounded" { None } else { Some(number(value)?) };
                    }
                    "interval_ms" => plan.interval_ms = number(value)?,
                    "use_command_complete_timing" => plan.use_command_complete_timing = boolean(value)?,
                    "spoof_src" => plan.spoof_src = node_id(value)?,
                    "target_dst" => plan.target_dst = node_id(value)?,
                    "start_ms" => plan.start_ms = number(value)?,
                    _ => return unknown(),
                }
            }
            Section::Heartbeat => match key {
                "interval_ms" => self.heartbeat_interval_ms = Some(number(value)?),
                "miss_threshold" => self.miss_threshold = Some(number(value)?),
                _ => return unknown(),
            },
            Section::App => match key {
                "send" => self.apps.push(app_command(value)?),
                _ => return unknown(),
            },
        }
        Ok(())
    }

    fn finish(self) -> Result<Scenario, ScenarioError> {
        let mut problems = Vec::new();
        let duration_ms = self.duration_ms.unwrap_or_else(|| {
            problems.push(Diagnostic::new("duration_ms", "missing"));
            0
        });
        if self.attack.is_some() && !self.attack_kind_set {
            problems.push(Diagnostic::new("attack.kind", "missing"));
        }
        let nodes: Vec<NodeProfile> = self
            .nodes
            .into_values()
            .map(|draft| {
                let mut profile = draft.profile.expect("profile present");
                if !draft.routes_to_unknown_set {
                    profile.routes_to_unknown = !profile.patched;
                }
                if profile.kind == NodeKind::Gateway && profile.heartbeat_interval_ms.is_none() {
                    profile.heartbeat_interval_ms = self.heartbeat_interval_ms;
                }
                profile
            })
            .collect();
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }
        let mut topology = Topology::full_mesh(nodes);
        if let Some(links) = self.links {
            topology.set_links(links);
        }
        if let Some(hears) = self.attacker_hears {
            topology.attacker_hears = hears;
        }
        Ok(Scenario {
            duration_ms,
            seed: self.seed,
            home_id: self.home_id.unwrap_or(DEFAULT_HOME_ID),
            topology,
            timing: self.timing,
            prop_delay_us: self.prop_delay_us.unwrap_or(DEFAULT_PROP_DELAY_US),
            attack: self.attack,
            app_schedule: self.apps,
            heartbeat_miss_threshold: self.miss_threshold.unwrap_or(DEFAULT_MISS_THRESHOLD),
        })
    }
}
