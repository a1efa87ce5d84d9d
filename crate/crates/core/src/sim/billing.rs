use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Money held exactly, in units of 10⁻²¹ dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dollars(pub u128);

const UNITS_PER_DOLLAR: u128 = 1_000_000_000_000_000_000_000;

impl Dollars {
    pub const ZERO: Dollars = Dollars(0);

    /// Parse a decimal dollar amount such as `"0.0000000083"`.
    pub fn parse(s: &str) -> Option<Dollars> {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 21 || int.is_empty() && frac.is_empty() {
            return None;
        }
        let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if !digits(int) || !digits(frac) {
            return None;
        }
        let whole: u128 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let mut f: u128 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        f *= 10u128.pow(21 - frac.len() as u32);
        whole.checked_mul(UNITS_PER_DOLLAR)?.checked_add(f).map(Dollars)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / UNITS_PER_DOLLAR as f64
    }

    pub fn times(self, n: u128) -> Dollars {
        Dollars(self.0 * n)
    }
}

impl fmt::Display for Dollars {
    /// Plain decimal with trailing zeros trimmed, e.g. `0.0000083`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / UNITS_PER_DOLLAR;
        let frac = self.0 % UNITS_PER_DOLLAR;
        if frac == 0 {
            return write!(f, "{whole}");
        }
        let s = format!("{frac:021}");
        write!(f, "{whole}.{}", s.trim_end_matches('0'))
    }
}

impl Add for Dollars {
    type Output = Dollars;
    fn add(self, o: Dollars) -> Dollars {
        Dollars(self.0 + o.0)
    }
}

impl AddAssign for Dollars {
    fn add_assign(&mut self, o: Dollars) {
        self.0 += o.0;
    }
}

impl Sum for Dollars {
    fn sum<I: Iterator<Item = Dollars>>(iter: I) -> Dollars {
        iter.fold(Dollars::ZERO, Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arch {
    X86,
    Arm,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::X86 => "x86",
            Arch::Arm => "arm",
        })
    }
}

impl std::str::FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x86" => Ok(Arch::X86),
            "arm" => Ok(Arch::Arm),
            other => Err(format!("unknown architecture {other:?}")),
        }
    }
}

/// Prices of compute, requests and object-store operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillingModel {
    /// Per-millisecond price at 512 MB.
    pub x86_ms_512: Dollars,
    pub arm_ms_512: Dollars,
    pub per_request: Dollars,
    pub store_writes_per_1000: Dollars,
    pub store_reads_per_1000: Dollars,
}

impl Default for BillingModel {
    fn default() -> Self {
        let d = |s| Dollars::parse(s).expect("valid price");
        BillingModel {
            x86_ms_512: d("0.0000000083"),
            arm_ms_512: d("0.0000000067"),
            per_request: d("0.0000002"),
            store_writes_per_1000: d("0.005"),
            store_reads_per_1000: d("0.0004"),
        }
    }
}

impl BillingModel {
    /// Per-ms price, linear in memory from the 512 MB anchor.
    pub fn per_ms_rate(&self, arch: Arch, memory_mb: u32) -> Dollars {
        let anchor = match arch {
            Arch::X86 => self.x86_ms_512,
            Arch::Arm => self.arm_ms_512,
        };
        Dollars(anchor.0 * u128::from(memory_mb) / 512)
    }

    pub fn duration_cost(&self, arch: Arch, memory_mb: u32, billed_ms: u64) -> Dollars {
        self.per_ms_rate(arch, memory_mb).times(u128::from(billed_ms))
    }

    /// Requests are charged per started block of 1000.
    pub fn store_cost(&self, writes: u64, reads: u64) -> Dollars {
        let blocks = |n: u64| u128::from(n.div_ceil(1000));
        self.store_writes_per_1000.times(blocks(writes)) + self.store_reads_per_1000.times(blocks(reads))
    }
}

/// Round a raw duration in microseconds up to whole milliseconds.
pub fn billed_ms(raw_us: u64) -> u64 {
    raw_us.div_ceil(1000)
}

/// Totals for one function.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionBill {
    pub invocations: u64,
    pub billed_ms: u64,
    pub duration_cost: Dollars,
    pub request_cost: Dollars,
}

impl FunctionBill {
    pub fn dollars(&self) -> Dollars {
        self.duration_cost + self.request_cost
    }

    fn absorb(&mut self, o: &FunctionBill) {
        self.invocations += o.invocations;
        self.billed_ms += o.billed_ms;
        self.duration_cost += o.duration_cost;
        self.request_cost += o.request_cost;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreBill {
    pub writes: u64,
    pub reads: u64,
    pub dollars: Dollars,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingReport {
    pub functions: BTreeMap<String, FunctionBill>,
    pub store: StoreBill,
}

impl BillingReport {
    /// Bills summed per stage, keyed by `<code>-<stage>`; names that do not
    /// follow the function naming scheme stand alone.
    pub fn per_stage(&self) -> BTreeMap<String, FunctionBill> {
        let mut out: BTreeMap<String, FunctionBill> = BTreeMap::new();
        for (name, bill) in &self.functions {
            let key = match name.parse::<crate::planner::FunctionName>() {
                Ok(f) => format!("{}-{:02}", f.query_code, f.stage_id),
                Err(_) => name.clone(),
            };
            out.entry(key).or_default().absorb(bill);
        }
        out
    }

    pub fn total_invocations(&self) -> u64 {
        self.functions.values().map(|b| b.invocations).sum()
    }

    pub fn total_billed_ms(&self) -> u64 {
        self.functions.values().map(|b| b.billed_ms).sum()
    }

    pub fn compute_dollars(&self) -> Dollars {
        self.functions.values().map(FunctionBill::dollars).sum()
    }

    pub fn total_dollars(&self) -> Dollars {
        self.compute_dollars() + self.store.dollars
    }

    /// Structured text, one `key=value` record per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, b) in &self.functions {
            s.push_str(&format!(
                "function={name} invocations={} billed_ms={} duration_usd={} request_usd={}\n",
                b.invocations, b.billed_ms, b.duration_cost, b.request_cost
            ));
        }
        s.push_str(&format!(
            "store writes={} reads={} usd={}\n",
            self.store.writes, self.store.reads, self.store.dollars
        ));
        s.push_str(&format!(
            "total invocations={} billed_ms={} usd={}\n",
            self.total_invocations(),
            self.total_billed_ms(),
            self.total_dollars()
        ));
        s
    }
}
