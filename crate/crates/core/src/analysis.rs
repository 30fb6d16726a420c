//! Attacker models and cost sweeps.
//!
//! The confirmation race is evaluated two ways: exactly, over arbitrary
//! precision rationals, and by simulating the block-by-block random walk.
//! Probabilities stay rational until they are printed.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::contracts::{self, avpa, gk, smr, AvpaConfig};
use crate::crypto::{hash, sign_timestamped, Address, KeyPair};
use crate::ledger::{Chain, GasSchedule, LedgerError, Receipt, Transaction, BLOCK_GAS_LIMIT};
use crate::policy::{attribute_set, PolicyError, PrivilegeStructure};

/// A simulated trial is an honest win once the attacker trails by this many blocks.
pub const ABSORPTION_CAP: u64 = 64;

/// Trials per independently seeded simulation stream.
const CHUNK_TRIALS: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{operation} did not succeed: {detail}")]
    Sweep { operation: String, detail: String },
}

fn invalid(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::InvalidParams(msg.into())
}

/// Attacker share `q` of the hash power and confirmation depth `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaceParams {
    q: BigRational,
    n: u32,
}

impl RaceParams {
    pub fn new(q: BigRational, n: u32) -> Result<Self, AnalysisError> {
        if q < BigRational::zero() || q > BigRational::one() {
            return Err(invalid(format!("q = {q} is outside [0, 1]")));
        }
        if n == 0 {
            return Err(invalid("confirmation depth must be at least 1"));
        }
        Ok(RaceParams { q, n })
    }

    /// Parses `q` as an exact decimal (`0.15`) or fraction (`3/20`).
    pub fn parse(q: &str, n: u32) -> Result<Self, AnalysisError> {
        let q = parse_exact(q).ok_or_else(|| invalid(format!("cannot parse {q:?} as a probability")))?;
        Self::new(q, n)
    }

    pub fn q(&self) -> &BigRational {
        &self.q
    }

    pub fn p(&self) -> BigRational {
        BigRational::one() - &self.q
    }

    pub fn n(&self) -> u32 {
        self.n
    }
}

fn parse_exact(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.contains('/') {
        return BigRational::from_str(s).ok();
    }
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits = |t: &str| t.bytes().all(|b| b.is_ascii_digit());
    if (whole.is_empty() && frac.is_empty()) || !digits(whole) || !digits(frac) {
        return None;
    }
    let numer: BigInt = format!("{whole}{frac}").parse().ok()?;
    let denom = num_traits::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(numer, denom))
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn binomial(n: u64, k: u64) -> BigInt {
    let k = k.min(n - k);
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// Probability that the attacker has mined exactly `m` blocks by the time the
/// honest chain reaches depth `n`: `C(m+n-1, m) p^n q^m`.
pub fn attacker_block_probability(params: &RaceParams, m: u64) -> BigRational {
    let n = params.n as u64;
    let coeff = BigRational::from_integer(binomial(m + n - 1, m));
    coeff * num_traits::pow(params.p(), n as usize) * num_traits::pow(params.q.clone(), m as usize)
}

/// Probability that an attacker with share `q` ever overturns a transaction
/// buried `n` blocks deep. Exactly 1 once `q >= p`.
pub fn replay_success_probability(params: &RaceParams) -> BigRational {
    let p = params.p();
    let q = params.q.clone();
    if q >= p {
        return BigRational::one();
    }
    let n = params.n as usize;
    let p_n = num_traits::pow(p.clone(), n);
    let q_n = num_traits::pow(q.clone(), n);
    let mut sum = BigRational::zero();
    let mut coeff = BigInt::one();
    let mut p_m = BigRational::one();
    let mut q_m = BigRational::one();
    for m in 0..n {
        if m > 0 {
            // C(m+n-1, m) from C(m+n-2, m-1)
            coeff = coeff * (m + n - 1) / m;
        }
        let term = &p_n * &q_m - &p_m * &q_n;
        sum += BigRational::from_integer(coeff.clone()) * term;
        p_m *= &p;
        q_m *= &q;
    }
    let out = BigRational::one() - sum;
    out.clamp(BigRational::zero(), BigRational::one())
}

/// Monte-Carlo outcome of [`race_simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RaceEstimate {
    pub wins: u64,
    pub trials: u64,
}

impl RaceEstimate {
    pub fn probability(&self) -> f64 {
        self.wins as f64 / self.trials as f64
    }

    /// Binomial standard error of [`probability`](Self::probability).
    pub fn std_error(&self) -> f64 {
        let p = self.probability();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Whether `exact` lies within `sigmas` standard errors of the estimate.
    pub fn agrees_with(&self, exact: f64, sigmas: f64) -> bool {
        let se = self.std_error();
        let tol = if se > 0.0 { sigmas * se } else { sigmas / self.trials as f64 };
        (self.probability() - exact).abs() <= tol
    }
}

/// Produces 64 independent Bernoulli(q) draws per word by comparing 64
/// uniform bit streams against the binary expansion of `q`, lane-parallel.
struct BernoulliWords {
    /// First 128 bits of `q`, most significant first.
    expansion: u128,
    always: Option<bool>,
}

impl BernoulliWords {
    fn new(q: &BigRational) -> Self {
        if q.is_zero() {
            return BernoulliWords { expansion: 0, always: Some(false) };
        }
        if q.is_one() {
            return BernoulliWords { expansion: 0, always: Some(true) };
        }
        let mut x = q.clone();
        let mut expansion = 0u128;
        let two = BigRational::from_integer(BigInt::from(2));
        for _ in 0..128 {
            x *= &two;
            expansion <<= 1;
            if x >= BigRational::one() {
                expansion |= 1;
                x -= BigRational::one();
            }
        }
        BernoulliWords { expansion, always: None }
    }

    fn next(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self.always {
            Some(true) => return u64::MAX,
            Some(false) => return 0,
            None => {}
        }
        let mut out = 0u64;
        let mut open = u64::MAX;
        for j in (0..128).rev() {
            let r = rng.next_u64();
            if (self.expansion >> j) & 1 == 1 {
                out |= open & !r;
                open &= r;
            } else {
                open &= !r;
            }
            if open == 0 {
                break;
            }
        }
        out
    }
}

/// Block stream; a set bit is an attacker block.
struct Blocks<'a> {
    source: &'a BernoulliWords,
    rng: ChaCha8Rng,
    word: u64,
    left: u32,
}

fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

impl Blocks<'_> {
    fn refill(&mut self) {
        if self.left == 0 {
            self.word = self.source.next(&mut self.rng);
            self.left = 64;
        }
    }

    fn take(&mut self, bits: u32) -> u64 {
        let w = self.word & low_mask(bits);
        self.word = if bits >= 64 { 0 } else { self.word >> bits };
        self.left -= bits;
        w
    }

    /// Consumes blocks until `honest` honest ones appeared or the attacker
    /// reaches `stop`; returns attacker blocks seen.
    fn race(&mut self, mut honest: u64, stop: u64) -> u64 {
        let mut attacker = 0u64;
        while honest > 0 && attacker < stop {
            self.refill();
            let w = self.word & low_mask(self.left);
            let zeros = (self.left - w.count_ones()) as u64;
            if zeros < honest {
                attacker += w.count_ones() as u64;
                honest -= zeros;
                let left = self.left;
                self.take(left);
                continue;
            }
            let mut inv = !w & low_mask(self.left);
            for _ in 1..honest {
                inv &= inv - 1;
            }
            let used = inv.trailing_zeros() + 1;
            attacker += self.take(used).count_ones() as u64;
            honest = 0;
        }
        attacker
    }

    /// Walks the deficit until it hits 0 (attacker wins) or `cap`.
    fn catch_up(&mut self, mut deficit: u64, cap: u64) -> bool {
        while deficit > 0 && deficit < cap {
            self.refill();
            let room = deficit.min(cap - deficit) - 1;
            if room == 0 {
                let bit = self.take(1);
                deficit = if bit == 1 { deficit - 1 } else { deficit + 1 };
                continue;
            }
            // no boundary is reachable within `room` steps
            let t = room.min(self.left as u64) as u32;
            let ones = self.take(t).count_ones() as u64;
            deficit = deficit + (t as u64 - ones) - ones;
        }
        deficit == 0
    }
}

/// Simulates the confirmation race `trials` times. Deterministic in `seed`
/// regardless of thread count.
pub fn race_simulate(params: &RaceParams, trials: u64, seed: u64) -> RaceEstimate {
    let source = BernoulliWords::new(&params.q);
    let n = params.n as u64;
    let cap = ABSORPTION_CAP.max(n + 1);
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let wins = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let mut blocks = Blocks {
                source: &source,
                rng,
                word: 0,
                left: 0,
            };
            let count = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            (0..count)
                .filter(|_| {
                    let m = blocks.race(n, n);
                    m >= n || blocks.catch_up(n - m, cap)
                })
                .count() as u64
        })
        .sum();
    RaceEstimate { wins, trials }
}

/// The `q` values of the checked grid: 0.05 through 0.45 in steps of 0.05.
pub fn grid_q() -> Vec<BigRational> {
    (1..=9).map(|i| BigRational::new(BigInt::from(i), BigInt::from(20))).collect()
}

/// The confirmation depths of the checked grid.
pub fn grid_n() -> std::ops::RangeInclusive<u32> {
    1..=12
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DdosParams {
    /// Requests one node can serve within the window.
    pub max_tran: f64,
    pub request_rate: f64,
    /// Providers holding each object.
    pub replication: u32,
    /// Seconds the attack needs.
    pub t_attack: f64,
    /// Seconds the scheme needs to complete a request.
    pub t_scheme: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DdosVerdict {
    pub overload: bool,
    pub within_window: bool,
    pub feasible: bool,
}

pub fn ddos_feasible(params: &DdosParams) -> Result<DdosVerdict, AnalysisError> {
    let positive = [params.max_tran, params.request_rate, params.t_attack, params.t_scheme]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
    if !positive || params.replication == 0 {
        return Err(invalid("denial-of-service parameters must be positive"));
    }
    let overload = params.request_rate > params.max_tran * params.replication as f64;
    let within_window = params.t_attack < params.t_scheme;
    Ok(DdosVerdict {
        overload,
        within_window,
        feasible: overload && within_window,
    })
}

/// `k` OR-levels over `n` distinct attributes `attr0..`, leaf `j` on level `j % k`.
pub fn synthetic_structure(k: usize, n: usize) -> Result<PrivilegeStructure, AnalysisError> {
    if k == 0 || n < k {
        return Err(invalid(format!("need at least one attribute per level, got k={k} N={n}")));
    }
    let levels: Vec<String> = (0..k)
        .map(|lvl| {
            let leaves: Vec<String> = (lvl..n).step_by(k).map(|j| format!("attr{j}")).collect();
            format!("OR({})", leaves.join(", "))
        })
        .collect();
    Ok(PrivilegeStructure::parse(&levels)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostRow {
    pub operation: String,
    pub k: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub up_bound: Option<u32>,
    pub caller_level: Option<usize>,
    pub gas_used: u64,
}

impl CostRow {
    fn new(operation: &str, gas_used: u64) -> Self {
        CostRow {
            operation: operation.to_string(),
            k: None,
            n: None,
            up_bound: None,
            caller_level: None,
            gas_used,
        }
    }
}

pub const SWEEP_K: [usize; 2] = [5, 10];
pub const SWEEP_N: [usize; 3] = [25, 50, 100];
pub const SWEEP_UP_BOUND: [u32; 5] = [10, 20, 30, 40, 50];

fn succeeded(operation: &str, r: Receipt) -> Result<u64, AnalysisError> {
    if r.is_success() {
        Ok(r.gas_used)
    } else {
        Err(AnalysisError::Sweep {
            operation: operation.to_string(),
            detail: format!("{:?}", r.status),
        })
    }
}

fn deploy(chain: &mut Chain, kind: &str, args: Vec<u8>, sender: Address) -> Result<(Address, u64), AnalysisError> {
    let (addr, r) = chain.deploy_contract(kind, args, sender, BLOCK_GAS_LIMIT)?;
    Ok((addr, succeeded(kind, r)?))
}

fn call(chain: &mut Chain, sender: Address, to: Address, f: &str, args: Vec<u8>) -> Result<u64, AnalysisError> {
    let r = chain.submit_tx(Transaction::call(sender, to, f, args, BLOCK_GAS_LIMIT))?;
    succeeded(f, r)
}

/// Deploys and exercises the contracts across the standard sweep under `schedule`.
pub fn cost_report(schedule: &GasSchedule) -> Result<Vec<CostRow>, AnalysisError> {
    let admin = KeyPair::from_seed(0xC057);
    let admin_addr = admin.address();
    let mut rows = Vec::new();

    for k in SWEEP_K {
        for n in SWEEP_N {
            let mut chain = contracts::new_chain(schedule.clone(), [admin_addr])?;
            let tag = |mut row: CostRow| {
                row.k = Some(k);
                row.n = Some(n);
                row
            };
            let up = contracts::DEFAULT_UP_BOUND;
            let (smr_addr, g) = deploy(&mut chain, smr::KIND, smr::encode_init(up, &[admin_addr]), admin_addr)?;
            rows.push(tag(CostRow::new("deploy_smr", g)));
            let config = AvpaConfig::new(smr_addr, synthetic_structure(k, n)?);
            let (avpa_addr, g) = deploy(&mut chain, avpa::KIND, config.encode(), admin_addr)?;
            rows.push(tag(CostRow::new("deploy_avpa", g)));
            let (_, g) = deploy(&mut chain, gk::KIND, gk::encode_init(&[admin_addr]), admin_addr)?;
            rows.push(tag(CostRow::new("deploy_gk", g)));
            chain.mine_block();

            for level in [1, k] {
                let staff = KeyPair::from_seed(0x5747 + level as u64);
                chain.open_account(staff.address());
                let attrs: Vec<_> = attribute_set([format!("attr{}", level - 1)])?.into_iter().collect();
                let args = smr::encode_add_staff_member(&staff.address(), b"sweep", &attrs, staff.public(), up);
                call(&mut chain, admin_addr, smr_addr, "addStaffMember", args)?;
                let (msg, sig) = sign_timestamped(&staff, b"sweep", chain.now());
                let args = avpa::encode_verify_request(&msg, &sig);
                let g = call(&mut chain, staff.address(), avpa_addr, "verifyRequest", args)?;
                let mut row = tag(CostRow::new("verify_request", g));
                row.caller_level = Some(level);
                rows.push(row);
            }
        }
    }

    let staff = KeyPair::from_seed(0x5747);
    let attrs: Vec<_> = attribute_set(["doctor", "cardiology"])?.into_iter().collect();
    for up in SWEEP_UP_BOUND {
        let mut chain = contracts::new_chain(schedule.clone(), [admin_addr])?;
        let (smr_addr, _) = deploy(&mut chain, smr::KIND, smr::encode_init(up, &[admin_addr]), admin_addr)?;
        let (gk_addr, _) = deploy(&mut chain, gk::KIND, gk::encode_init(&[admin_addr]), admin_addr)?;
        let args = smr::encode_add_staff_member(&staff.address(), b"sweep", &attrs, staff.public(), up);
        let mut row = CostRow::new("add_staff_member", call(&mut chain, admin_addr, smr_addr, "addStaffMember", args)?);
        row.up_bound = Some(up);
        rows.push(row);
        let args = gk::encode_add_key(&staff.address(), &hash(b"sweep key"));
        let mut row = CostRow::new("add_key", call(&mut chain, admin_addr, gk_addr, "addKey", args)?);
        row.up_bound = Some(up);
        rows.push(row);
    }
    Ok(rows)
}

/// One named trend property of a cost report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrendCheck {
    pub name: &'static str,
    pub holds: bool,
}

fn gas_of<'a>(rows: &'a [CostRow], op: &'a str) -> impl Iterator<Item = &'a CostRow> + 'a {
    rows.iter().filter(move |r| r.operation == op)
}

fn all_equal(values: impl Iterator<Item = u64>) -> bool {
    let v: Vec<u64> = values.collect();
    !v.is_empty() && v.windows(2).all(|w| w[0] == w[1])
}

fn strictly_increasing(values: impl Iterator<Item = u64>) -> bool {
    let v: Vec<u64> = values.collect();
    v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0])
}

/// Evaluates the expected trends on rows produced by [`cost_report`].
pub fn cost_trends(rows: &[CostRow]) -> Vec<TrendCheck> {
    let avpa_grows = SWEEP_K.iter().all(|&k| {
        strictly_increasing(
            SWEEP_N
                .iter()
                .filter_map(|&n| gas_of(rows, "deploy_avpa").find(|r| r.k == Some(k) && r.n == Some(n)))
                .map(|r| r.gas_used),
        )
    });
    let cheaper_first = SWEEP_K.iter().all(|&k| {
        SWEEP_N.iter().all(|&n| {
            let at = |lvl| {
                gas_of(rows, "verify_request")
                    .find(|r| r.k == Some(k) && r.n == Some(n) && r.caller_level == Some(lvl))
                    .map(|r| r.gas_used)
            };
            matches!((at(1), at(k)), (Some(a), Some(b)) if a < b)
        })
    });
    vec![
        TrendCheck {
            name: "avpa deployment increases with N",
            holds: avpa_grows,
        },
        TrendCheck {
            name: "smr deployment constant",
            holds: all_equal(gas_of(rows, "deploy_smr").map(|r| r.gas_used)),
        },
        TrendCheck {
            name: "gk deployment constant",
            holds: all_equal(gas_of(rows, "deploy_gk").map(|r| r.gas_used)),
        },
        TrendCheck {
            name: "addStaffMember increases with upBound",
            holds: strictly_increasing(gas_of(rows, "add_staff_member").map(|r| r.gas_used)),
        },
        TrendCheck {
            name: "addKey constant in upBound",
            holds: all_equal(gas_of(rows, "add_key").map(|r| r.gas_used)),
        },
        TrendCheck {
            name: "verifyRequest cheaper at level 1 than level k",
            holds: cheaper_first,
        },
    ]
}
