//! Scenario runner and report writers behind the `ehrchain` binary.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "seed": 7,
//!   "structure": ["AND(doctor, cardiology, senior)", "AND(doctor, cardiology)", "OR(doctor, nurse)"],
//!   "segments": [{"text": "psychiatric notes"}, {"hex": "cafe"}, {"file": "allergies.txt"}],
//!   "staff": [{"id": "dr-a", "attributes": ["doctor", "cardiology"], "expected_level": 2}],
//!   "gas_overrides": {"storage_write": 22100},
//!   "validity_window": 10000
//! }
//! ```
//!
//! `expected_level` may be a level number or `"none"`. Keys not given as
//! hex secrets are drawn from the seeded generator in a fixed order:
//! certifier, issuer, patient, then the roster.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::{self, ActorError, Issuer, PatientProfile, StaffProfile};
use crate::analysis::{self, CostRow, RaceParams};
use crate::cas::{Network, DEFAULT_CHUNK_SIZE, DEFAULT_REPLICATION};
use crate::contracts::{self, gk, smr, DEFAULT_FRESHNESS_WINDOW, DEFAULT_UP_BOUND, DEFAULT_VALIDITY_WINDOW};
use crate::contracts::{LOG_ANNOUNCE, LOG_KEYS};
use crate::crypto::{hash, Address, KeyPair};
use crate::ledger::{Chain, EventFilter, EventValue, GasOp, GasSchedule, Target, Transaction, TxStatus};
use crate::policy::{attribute_set, validate_structure, Attribute, PrivilegeStructure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// The seven orchestration events, numbered from 1 in failure reports.
pub const EVENTS: [&str; 7] = ["setup", "prepare", "register", "request", "grant", "fetch", "verify"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("event {event} ({}) failed: {message}", EVENTS[event - 1])]
    Runtime { event: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime { .. } | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn at(event: &'static str) -> impl Fn(ActorError) -> CliError {
    move |e| runtime(event, e.to_string())
}

fn runtime(event: &str, message: impl Into<String>) -> CliError {
    CliError::Runtime {
        event: EVENTS.iter().position(|e| *e == event).expect("known event") + 1,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSource {
    Text(String),
    Hex(String),
    /// Relative paths resolve against the config file's directory.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExpectedLevel {
    Level(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaffConfig {
    pub id: String,
    pub attributes: Vec<String>,
    #[serde(default)]
    pub expected_level: Option<ExpectedLevel>,
    /// Hex secret key; drawn from the seed when absent.
    #[serde(default)]
    pub secret: Option<String>,
}

fn default_up_bound() -> u32 {
    DEFAULT_UP_BOUND
}
fn default_validity() -> u64 {
    DEFAULT_VALIDITY_WINDOW
}
fn default_freshness() -> u64 {
    DEFAULT_FRESHNESS_WINDOW
}
fn default_nodes() -> usize {
    5
}
fn default_replication() -> usize {
    DEFAULT_REPLICATION
}
fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}
fn default_security_bits() -> u32 {
    128
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub gas_overrides: BTreeMap<GasOp, u64>,
    /// One policy per level, most privileged first.
    pub structure: Vec<String>,
    pub segments: Vec<SegmentSource>,
    pub staff: Vec<StaffConfig>,
    #[serde(default)]
    pub certifier_secret: Option<String>,
    #[serde(default)]
    pub issuer_secret: Option<String>,
    #[serde(default)]
    pub patient_secret: Option<String>,
    #[serde(default = "default_up_bound")]
    pub up_bound: u32,
    #[serde(default = "default_validity")]
    pub validity_window: u64,
    #[serde(default = "default_freshness")]
    pub freshness_window: u64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_replication")]
    pub replication: usize,
    #[serde(default = "default_chunk_size")]
    pub chunk_size: usize,
    /// Leading zero bits required of storage node identities.
    #[serde(default)]
    pub node_difficulty: u32,
    #[serde(default = "default_security_bits")]
    pub security_bits: u32,
    /// Also run the cost sweep under this scenario's gas table.
    #[serde(default)]
    pub cost_report: bool,
}

impl ScenarioConfig {
    pub fn from_json(json: &str) -> Result<Self, CliError> {
        serde_json::from_str(json).map_err(|e| config(format!("invalid scenario document: {e}")))
    }
}

/// Reads a scenario file; the returned directory anchors relative segment paths.
pub fn load_config(path: &Path) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let text = fs::read_to_string(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((ScenarioConfig::from_json(&text)?, base))
}

struct StaffPlan {
    id: String,
    attributes: BTreeSet<Attribute>,
    secret: Option<KeyPair>,
    /// Level the policy oracle assigns.
    classified: Option<usize>,
}

/// A config that passed every pre-flight check.
pub struct Plan {
    seed: u64,
    schedule: GasSchedule,
    structure: PrivilegeStructure,
    segments: Vec<Vec<u8>>,
    staff: Vec<StaffPlan>,
    certifier: Option<KeyPair>,
    issuer: Option<KeyPair>,
    patient: Option<KeyPair>,
    up_bound: u32,
    validity_window: u64,
    freshness_window: u64,
    nodes: usize,
    replication: usize,
    chunk_size: usize,
    node_difficulty: u32,
    security_bits: u32,
    cost_report: bool,
}

impl Plan {
    pub fn structure(&self) -> &PrivilegeStructure {
        &self.structure
    }

    pub fn segments(&self) -> &[Vec<u8>] {
        &self.segments
    }
}

fn parse_secret(label: &str, hex_key: &Option<String>) -> Result<Option<KeyPair>, CliError> {
    let Some(h) = hex_key else { return Ok(None) };
    let bytes: [u8; 32] = hex::decode(h)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| config(format!("{label} secret must be 32 hex-encoded bytes")))?;
    KeyPair::from_secret_bytes(&bytes)
        .map(Some)
        .map_err(|e| config(format!("{label} secret: {e}")))
}

/// Pre-flight validation. Nothing touches a ledger before this succeeds.
pub fn validate(cfg: &ScenarioConfig, base: &Path) -> Result<Plan, CliError> {
    let structure = PrivilegeStructure::parse(&cfg.structure).map_err(|e| config(format!("structure: {e}")))?;
    validate_structure(&structure).map_err(|e| config(format!("structure: {e}")))?;
    let k = structure.k();
    if cfg.segments.len() != k {
        return Err(config(format!(
            "structure has {k} levels but {} segments were given",
            cfg.segments.len()
        )));
    }
    let segments = cfg
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            SegmentSource::Text(t) => Ok(t.as_bytes().to_vec()),
            SegmentSource::Hex(h) => hex::decode(h).map_err(|e| config(format!("segment {}: {e}", i + 1))),
            SegmentSource::File(p) => {
                let path = base.join(p);
                fs::read(&path).map_err(|e| config(format!("segment {}: {}: {e}", i + 1, path.display())))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let schedule = GasSchedule::default().with_overrides(&cfg.gas_overrides);
    schedule.check_complete().map_err(|e| config(e.to_string()))?;

    if cfg.staff.is_empty() {
        return Err(config("staff roster is empty"));
    }
    let mut seen = BTreeSet::new();
    let mut staff = Vec::with_capacity(cfg.staff.len());
    for s in &cfg.staff {
        if s.id.is_empty() || !seen.insert(s.id.as_str()) {
            return Err(config(format!("staff id {:?} is empty or repeated", s.id)));
        }
        let attributes = attribute_set(&s.attributes).map_err(|e| config(format!("staff {}: {e}", s.id)))?;
        if attributes.is_empty() {
            return Err(config(format!("staff {} has no attributes", s.id)));
        }
        if attributes.len() > cfg.up_bound as usize {
            return Err(config(format!("staff {} has more than {} attributes", s.id, cfg.up_bound)));
        }
        let classified = structure.classify(&attributes);
        let expected = match &s.expected_level {
            None => classified,
            Some(ExpectedLevel::Level(l)) if (1..=k).contains(l) => Some(*l),
            Some(ExpectedLevel::Label(l)) if l == "none" => None,
            Some(other) => return Err(config(format!("staff {}: bad expected_level {other:?}", s.id))),
        };
        if expected != classified {
            return Err(config(format!(
                "staff {}: expected level {expected:?} but the policy grants {classified:?}",
                s.id
            )));
        }
        staff.push(StaffPlan {
            id: s.id.clone(),
            attributes,
            secret: parse_secret(&format!("staff {}", s.id), &s.secret)?,
            classified,
        });
    }

    if cfg.up_bound == 0 || cfg.validity_window == 0 || cfg.freshness_window == 0 {
        return Err(config("up_bound and windows must be positive"));
    }
    if cfg.replication == 0 || cfg.nodes < cfg.replication {
        return Err(config(format!(
            "replication {} needs between 1 and {} nodes",
            cfg.replication, cfg.nodes
        )));
    }
    if cfg.chunk_size == 0 {
        return Err(config("chunk_size must be positive"));
    }
    if cfg.node_difficulty > 16 {
        return Err(config("node_difficulty above 16 is impractical"));
    }
    if !matches!(cfg.security_bits, 128 | 256) {
        return Err(config("security_bits must be 128 or 256"));
    }
    Ok(Plan {
        seed: cfg.seed,
        schedule,
        structure,
        segments,
        staff,
        certifier: parse_secret("certifier", &cfg.certifier_secret)?,
        issuer: parse_secret("issuer", &cfg.issuer_secret)?,
        patient: parse_secret("patient", &cfg.patient_secret)?,
        up_bound: cfg.up_bound,
        validity_window: cfg.validity_window,
        freshness_window: cfg.freshness_window,
        nodes: cfg.nodes,
        replication: cfg.replication,
        chunk_size: cfg.chunk_size,
        node_difficulty: cfg.node_difficulty,
        security_bits: cfg.security_bits,
        cost_report: cfg.cost_report,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaffOutcome {
    pub id: String,
    pub address: Address,
    pub classified: Option<usize>,
    pub granted: Option<usize>,
    /// Segments the staff member decrypted, keyed by level.
    pub recovered: BTreeMap<usize, Vec<u8>>,
    /// Whether every attempt at a segment above the grant failed.
    pub lower_sealed: bool,
}

pub struct ScenarioOutcome {
    pub chain: Chain,
    pub network: Network,
    pub avpa: Address,
    pub staff: Vec<StaffOutcome>,
    pub segments: Vec<Vec<u8>>,
}

fn key_or_draw(key: &Option<KeyPair>, rng: &mut ChaCha20Rng) -> KeyPair {
    let drawn = KeyPair::generate(rng);
    key.clone().unwrap_or(drawn)
}

fn deploy(chain: &mut Chain, sender: Address, kind: &str, args: Vec<u8>) -> Result<Address, CliError> {
    let r = actors::send(chain, Transaction::deploy(sender, kind, args, 1)).map_err(|e| runtime("setup", e.to_string()))?;
    match (r.status, r.contract_address) {
        (TxStatus::Success, Some(a)) => Ok(a),
        (status, _) => Err(runtime("setup", format!("deploying {kind}: {status:?}"))),
    }
}

/// Runs prepare, register, request, grant and fetch for every staff entry.
pub fn execute(plan: &Plan) -> Result<ScenarioOutcome, CliError> {
    let mut rng = ChaCha20Rng::seed_from_u64(plan.seed);
    let certifier = key_or_draw(&plan.certifier, &mut rng);
    let issuer_key = key_or_draw(&plan.issuer, &mut rng);
    let patient_key = key_or_draw(&plan.patient, &mut rng);
    let staff: Vec<StaffProfile> = plan
        .staff
        .iter()
        .map(|s| {
            let key = key_or_draw(&s.secret, &mut rng);
            StaffProfile::new(key, s.id.as_bytes(), s.attributes.clone()).expect("validated attributes")
        })
        .collect();

    // setup
    let mut chain = contracts::new_chain(
        plan.schedule.clone(),
        [certifier.address(), issuer_key.address(), patient_key.address()],
    )
    .map_err(|e| runtime("setup", e.to_string()))?;
    let smr_addr = deploy(
        &mut chain,
        certifier.address(),
        smr::KIND,
        smr::encode_init(plan.up_bound, &[certifier.address()]),
    )?;
    let gk_addr = deploy(&mut chain, issuer_key.address(), gk::KIND, gk::encode_init(&[issuer_key.address()]))?;
    let universe: BTreeSet<Attribute> = plan.structure.levels().iter().flat_map(|p| p.attributes()).collect();
    let mut issuer = Issuer::setup(issuer_key, plan.security_bits, &universe, smr_addr, gk_addr, &mut rng)
        .map_err(at("setup"))?;
    let mut network = Network::new(plan.chunk_size, plan.node_difficulty);
    for i in 0..plan.nodes {
        network.add_node(plan.seed.wrapping_add(i as u64));
    }
    chain.mine_block();

    // prepare
    let mut patient =
        PatientProfile::new(patient_key, plan.segments.clone(), plan.structure.clone()).map_err(at("prepare"))?;
    patient.validity_window = plan.validity_window;
    patient.freshness_window = plan.freshness_window;
    let record = actors::patient_prepare_record(
        &patient,
        &issuer.public_params,
        &mut chain,
        &mut network,
        plan.replication,
        smr_addr,
        &mut rng,
    )
    .map_err(at("prepare"))?;
    chain.mine_block();

    // register
    for s in &staff {
        let r = actors::certifier_register(&certifier, &mut chain, smr_addr, s).map_err(at("register"))?;
        if !r.is_success() {
            return Err(runtime("register", format!("{}: {:?}", String::from_utf8_lossy(&s.staff_id), r.status)));
        }
    }
    chain.mine_block();

    // request
    let mut granted = Vec::with_capacity(staff.len());
    for (s, p) in staff.iter().zip(&plan.staff) {
        let now = chain.now();
        let r = actors::staff_request_access(s, &mut chain, record.avpa, now).map_err(at("request"))?;
        if !r.is_success() {
            return Err(runtime("request", format!("{}: {:?}", p.id, r.status)));
        }
        let level = contracts::avpa::decode_verify_output(&r.output);
        if level != p.classified {
            return Err(runtime(
                "request",
                format!("{} was announced at {level:?}, policy says {:?}", p.id, p.classified),
            ));
        }
        granted.push(level);
    }
    chain.mine_block();

    // grant
    let count = actors::issuer_watch_and_grant(&mut issuer, &mut chain, &mut network, plan.replication, &mut rng)
        .map_err(at("grant"))?;
    let expected = granted.iter().flatten().count();
    if count != expected {
        return Err(runtime("grant", format!("issued {count} keys for {expected} announcements")));
    }
    chain.mine_block();

    // fetch and verify
    let mut outcomes = Vec::with_capacity(staff.len());
    for ((s, p), level) in staff.iter().zip(&plan.staff).zip(granted) {
        let mut out = StaffOutcome {
            id: p.id.clone(),
            address: s.address(),
            classified: p.classified,
            granted: level,
            recovered: BTreeMap::new(),
            lower_sealed: true,
        };
        match level {
            Some(level) => {
                let sk = actors::staff_fetch_key(s, &chain, &network, gk_addr).map_err(at("fetch"))?;
                out.recovered =
                    actors::staff_fetch_record(s, &sk, &chain, &network, record.avpa).map_err(at("fetch"))?;
                out.lower_sealed = (1..level)
                    .all(|j| actors::fetch_segments(&sk, &chain, &network, record.avpa, j).is_err());
                let want: Vec<usize> = (level..=plan.structure.k()).collect();
                if out.recovered.keys().copied().collect::<Vec<_>>() != want {
                    return Err(runtime("verify", format!("{} recovered levels {:?}", p.id, out.recovered.keys())));
                }
                if let Some((j, _)) = out.recovered.iter().find(|(j, seg)| **seg != plan.segments[*j - 1]) {
                    return Err(runtime("verify", format!("{} recovered a corrupt segment {j}", p.id)));
                }
                if !out.lower_sealed {
                    return Err(runtime("verify", format!("{} opened a segment above level {level}", p.id)));
                }
            }
            None => {
                if actors::staff_fetch_key(s, &chain, &network, gk_addr).is_ok() {
                    return Err(runtime("verify", format!("{} holds a key without a grant", p.id)));
                }
            }
        }
        outcomes.push(out);
    }

    Ok(ScenarioOutcome {
        chain,
        network,
        avpa: record.avpa,
        staff: outcomes,
        segments: plan.segments.clone(),
    })
}

/// One LogAnnounce or LogKeys event, flattened for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditRow {
    pub height: u64,
    pub tx_index: u32,
    pub event: String,
    pub contract: String,
    pub staff: String,
    pub level: String,
    pub location: String,
    pub attributes: String,
}

/// Access events in chain order, optionally narrowed to one staff address.
pub fn audit_events(chain: &Chain, staff: Option<&Address>) -> Vec<AuditRow> {
    chain
        .query_events(&EventFilter::default())
        .into_iter()
        .filter(|e| e.name == LOG_ANNOUNCE || e.name == LOG_KEYS)
        .filter_map(|e| {
            let who = e.field("signer").or_else(|| e.field("staff")).and_then(EventValue::as_address)?;
            if staff.is_some_and(|s| *s != who) {
                return None;
            }
            Some(AuditRow {
                height: e.block_height,
                tx_index: e.tx_index,
                event: e.name.clone(),
                contract: e.contract.to_hex(),
                staff: who.to_hex(),
                level: e.field("level").and_then(EventValue::as_uint).map(|l| l.to_string()).unwrap_or_default(),
                location: e.field("location").and_then(EventValue::as_digest).map(|d| d.to_hex()).unwrap_or_default(),
                attributes: e.field("attributes").and_then(EventValue::as_strings).map(|a| a.join(" ")).unwrap_or_default(),
            })
        })
        .collect()
}

/// Aligned plain-text rendering of [`audit_events`] rows.
pub fn render_audit_table(rows: &[AuditRow]) -> String {
    let mut out = format!("{:>6} {:>3} {:<11} {:<42} {:>5}  {}\n", "height", "tx", "event", "staff", "level", "detail");
    for r in rows {
        let detail = if r.location.is_empty() { &r.attributes } else { &r.location };
        let _ = writeln!(
            out,
            "{:>6} {:>3} {:<11} 0x{:<40} {:>5}  {}",
            r.height, r.tx_index, r.event, r.staff, r.level, detail
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct GasRow {
    height: u64,
    tx_index: usize,
    sender: String,
    target: String,
    function: String,
    status: String,
    gas_used: u64,
}

fn gas_rows(chain: &Chain) -> Vec<GasRow> {
    chain
        .blocks()
        .iter()
        .flat_map(|b| {
            b.transactions.iter().zip(&b.receipts).enumerate().map(move |(i, (tx, r))| GasRow {
                height: b.height,
                tx_index: i,
                sender: tx.sender.to_hex(),
                target: match &tx.target {
                    Target::Deploy(kind) => format!("deploy:{kind}"),
                    Target::Call(a) => a.to_hex(),
                },
                function: tx.function.clone(),
                status: match &r.status {
                    TxStatus::Success => "success".to_string(),
                    TxStatus::Reverted(m) => format!("reverted: {m}"),
                    TxStatus::OutOfGas => "out of gas".to_string(),
                },
                gas_used: r.gas_used,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct RecoveredRow {
    staff_id: String,
    address: String,
    granted_level: String,
    segment: String,
    sha256: String,
    matches_original: String,
}

fn recovered_rows(outcome: &ScenarioOutcome) -> Vec<RecoveredRow> {
    let mut rows = Vec::new();
    for s in &outcome.staff {
        let granted = s.granted.map(|l| l.to_string()).unwrap_or_else(|| "none".into());
        if s.recovered.is_empty() {
            rows.push(RecoveredRow {
                staff_id: s.id.clone(),
                address: s.address.to_hex(),
                granted_level: granted.clone(),
                segment: String::new(),
                sha256: String::new(),
                matches_original: String::new(),
            });
        }
        for (level, bytes) in &s.recovered {
            rows.push(RecoveredRow {
                staff_id: s.id.clone(),
                address: s.address.to_hex(),
                granted_level: granted.clone(),
                segment: level.to_string(),
                sha256: hash(bytes).to_hex(),
                matches_original: (outcome.segments[level - 1] == *bytes).to_string(),
            });
        }
    }
    rows
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize to csv");
    }
    w.into_inner().expect("in-memory writer")
}

/// Writes the report files into `dir` and returns their paths.
pub fn write_reports(outcome: &ScenarioOutcome, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = [
        ("chain.json", outcome.chain.to_json().into_bytes()),
        ("audit.csv", to_csv(&audit_events(&outcome.chain, None))),
        ("recovered.csv", to_csv(&recovered_rows(outcome))),
        ("gas.csv", to_csv(&gas_rows(&outcome.chain))),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Full `scenario run`: validate, execute, write reports.
pub fn run_scenario(config_path: &Path, out: &Path) -> Result<ScenarioOutcome, CliError> {
    let (cfg, base) = load_config(config_path)?;
    let plan = validate(&cfg, &base)?;
    let outcome = execute(&plan)?;
    write_reports(&outcome, out)?;
    if plan.cost_report {
        let rows = analysis::cost_report(&plan.schedule).map_err(|e| runtime("verify", e.to_string()))?;
        let path = out.join("costs.csv");
        fs::write(&path, to_csv(&rows)).map_err(io_err(&path))?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayRow {
    pub q: String,
    pub n: u32,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub trials: u64,
    pub seed: u64,
}

pub fn analyze_replay(q: &str, n: u32, trials: u64, seed: u64) -> Result<ReplayRow, CliError> {
    let params = RaceParams::parse(q, n).map_err(|e| config(e.to_string()))?;
    if trials == 0 {
        return Err(config("trials must be at least 1"));
    }
    let exact = analysis::replay_success_probability(&params);
    let est = analysis::race_simulate(&params, trials, seed);
    Ok(ReplayRow {
        q: q.trim().to_string(),
        n,
        closed_form: analysis::to_f64(&exact),
        monte_carlo: est.probability(),
        trials,
        seed,
    })
}

/// `report costs`: the sweep under the default gas table, plus one line per trend.
pub fn report_costs(out: &Path) -> Result<(Vec<CostRow>, Vec<analysis::TrendCheck>), CliError> {
    let rows = analysis::cost_report(&GasSchedule::default()).map_err(|e| CliError::Runtime {
        event: 1,
        message: e.to_string(),
    })?;
    fs::write(out, to_csv(&rows)).map_err(io_err(out))?;
    let trends = analysis::cost_trends(&rows);
    Ok((rows, trends))
}

pub fn load_chain(path: &Path) -> Result<Chain, CliError> {
    let json = fs::read_to_string(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    contracts::import_chain(&json).map_err(|e| config(format!("{}: {e}", path.display())))
}
