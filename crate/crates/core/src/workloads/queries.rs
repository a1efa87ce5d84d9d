use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::nexmark::{auction_schema, bid_schema, person_schema};
use super::ysb::{campaign_schema, event_schema};
use crate::planner::{PhysicalPlan, PlanBuilder, PlannerError};
use crate::query::{col, lit, AggExpr, AggFunc, SortKey, Value, WindowSpec};

/// Micro-batch length for queries without a window.
pub const EPOCH_MS: i64 = 10_000;

/// The benchmark queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryId {
    /// Bid prices converted to another currency.
    Q1,
    /// Bids on a fixed subset of auctions.
    Q2,
    /// Category-10 auctions by sellers from OR, ID or CA.
    Q3,
    /// Average winning bid per category, tumbling 10 s.
    Q4,
    /// Bid counts per auction over 10 s windows sliding by 5 s, hottest first.
    Q5,
    /// Views per ad campaign, tumbling 10 s.
    Ysb,
}

impl QueryId {
    pub const ALL: [QueryId; 6] = [QueryId::Q1, QueryId::Q2, QueryId::Q3, QueryId::Q4, QueryId::Q5, QueryId::Ysb];

    pub fn window(self) -> Option<WindowSpec> {
        match self {
            QueryId::Q4 | QueryId::Ysb => Some(WindowSpec::tumbling(10_000)),
            QueryId::Q5 => Some(WindowSpec::sliding(10_000, 5_000)),
            _ => None,
        }
    }

    /// Event-time range `[start, end)` read by `epoch`.
    pub fn epoch_range(self, epoch: u64) -> (i64, i64) {
        match self.window().and_then(|w| w.epoch_window(epoch)) {
            Some(w) => (w.start_ms, w.end_ms),
            None => {
                let start = epoch as i64 * EPOCH_MS;
                (start, start + EPOCH_MS)
            }
        }
    }

    /// Spacing of epoch starts.
    pub fn epoch_interval_ms(self) -> i64 {
        self.window().map_or(EPOCH_MS, |w| w.trigger_interval_ms())
    }

    /// Epochs needed to cover events up to `max_ts`; at least one.
    pub fn epochs_for(self, max_ts: Option<i64>) -> u64 {
        match max_ts {
            Some(t) => (t / self.epoch_interval_ms()) as u64 + 1,
            None => 1,
        }
    }

    pub fn is_nexmark(self) -> bool {
        self != QueryId::Ysb
    }

    /// Whether the sink output order is part of the result.
    pub fn ordered(self) -> bool {
        self == QueryId::Q5
    }

    pub fn plan(self) -> Result<PhysicalPlan, PlannerError> {
        match self {
            QueryId::Q1 => q1(),
            QueryId::Q2 => q2(),
            QueryId::Q3 => q3(),
            QueryId::Q4 => q4(),
            QueryId::Q5 => q5(),
            QueryId::Ysb => ysb(),
        }
    }
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QueryId::Q1 => "q1",
            QueryId::Q2 => "q2",
            QueryId::Q3 => "q3",
            QueryId::Q4 => "q4",
            QueryId::Q5 => "q5",
            QueryId::Ysb => "ysb",
        };
        f.write_str(s)
    }
}

impl FromStr for QueryId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QueryId::ALL
            .into_iter()
            .find(|q| q.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown query {s:?}; expected one of q1, q2, q3, q4, q5, ysb"))
    }
}

fn q1() -> Result<PhysicalPlan, PlannerError> {
    Ok(PlanBuilder::source("bid", bid_schema())
        .project(vec![
            (col("auction"), "auction"),
            (col("bidder"), "bidder"),
            (col("price").mul(lit(89)).div(lit(100)), "price"),
            (col("date_time"), "date_time"),
        ])?
        .build())
}

fn q2() -> Result<PhysicalPlan, PlannerError> {
    Ok(PlanBuilder::source("bid", bid_schema())
        .filter(col("auction").modulo(lit(123)).eq(lit(0)))?
        .project(vec![(col("auction"), "auction"), (col("price"), "price")])?
        .build())
}

fn q3() -> Result<PhysicalPlan, PlannerError> {
    let persons = PlanBuilder::source("person", person_schema())
        .filter(col("state").in_list(vec!["OR".into(), "ID".into(), "CA".into()]))?
        .project(vec![
            (col("id"), "p.id"),
            (col("name"), "p.name"),
            (col("city"), "p.city"),
            (col("state"), "p.state"),
        ])?;
    let auctions = PlanBuilder::source("auction", auction_schema())
        .filter(col("category").eq(lit(10)))?
        .project(vec![(col("id"), "a.id"), (col("seller"), "a.seller")])?;
    Ok(persons
        .join(auctions, "p.id", "a.seller", None)?
        .project(vec![
            (col("p.name"), "name"),
            (col("p.city"), "city"),
            (col("p.state"), "state"),
            (col("a.id"), "id"),
        ])?
        .build())
}

fn q4() -> Result<PhysicalPlan, PlannerError> {
    let auctions = PlanBuilder::source("auction", auction_schema()).project(vec![
        (col("id"), "a.id"),
        (col("category"), "a.category"),
        (col("date_time"), "a.date_time"),
        (col("expires"), "a.expires"),
    ])?;
    let bids = PlanBuilder::source("bid", bid_schema()).project(vec![
        (col("auction"), "b.auction"),
        (col("price"), "b.price"),
        (col("date_time"), "b.date_time"),
    ])?;
    Ok(auctions
        .join(bids, "a.id", "b.auction", None)?
        .filter(col("b.date_time").between(col("a.date_time"), col("a.expires")))?
        .aggregate(
            vec![(col("a.id"), "id"), (col("a.category"), "category")],
            vec![AggExpr::new(AggFunc::Max, col("b.price"), "final")],
        )?
        .aggregate(
            vec![(col("category"), "category")],
            vec![AggExpr::new(AggFunc::Avg, col("final"), "avg_final")],
        )?
        .build())
}

fn q5() -> Result<PhysicalPlan, PlannerError> {
    Ok(PlanBuilder::source("bid", bid_schema())
        .aggregate(
            vec![(col("auction"), "auction")],
            vec![AggExpr::new(AggFunc::Count, col("auction"), "num")],
        )?
        .sort(vec![SortKey::desc("num"), SortKey::asc("auction")])?
        .build())
}

fn ysb() -> Result<PhysicalPlan, PlannerError> {
    let events = PlanBuilder::source("ad_event", event_schema())
        .filter(col("event_type").eq(lit(Value::from("view"))))?
        .project(vec![(col("ad_id"), "ad_id"), (col("event_time"), "event_time")])?;
    let campaigns = PlanBuilder::source("campaign", campaign_schema());
    Ok(events
        .join(campaigns, "ad_id", "c_ad_id", None)?
        .aggregate(
            vec![(col("campaign_id"), "campaign_id")],
            vec![AggExpr::new(AggFunc::Count, col("ad_id"), "views")],
        )?
        .build())
}
