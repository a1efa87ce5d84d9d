use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nexmark::event_time;
use crate::fault::EventLog;
use crate::query::{Field, QueryError, RecordBatch, ScalarType, Schema, Value};

pub const CAMPAIGNS: usize = 100;
pub const ADS_PER_CAMPAIGN: usize = 10;

const AD_TYPES: [&str; 5] = ["banner", "modal", "sponsored-search", "mail", "mobile"];
const EVENT_TYPES: [&str; 3] = ["view", "click", "purchase"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YsbEvent {
    pub user_id: String,
    pub page_id: String,
    pub ad_id: String,
    pub ad_type: String,
    pub event_type: String,
    pub event_time: i64,
    pub ip: String,
}

pub fn ad_id(campaign: usize, ad: usize) -> String {
    format!("ad-{campaign:03}-{ad}")
}

pub fn campaign_id(campaign: usize) -> String {
    format!("campaign-{campaign:03}")
}

/// `events_per_sec * duration_s` advertising events ordered by time.
pub fn gen_ysb(events_per_sec: u64, duration_s: u64, seed: u64) -> EventLog<YsbEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = events_per_sec * duration_s;
    let events = (0..n)
        .map(|i| YsbEvent {
            user_id: format!("user-{}", rng.gen_range(0..10_000)),
            page_id: format!("page-{}", rng.gen_range(0..1_000)),
            ad_id: ad_id(rng.gen_range(0..CAMPAIGNS), rng.gen_range(0..ADS_PER_CAMPAIGN)),
            ad_type: AD_TYPES[rng.gen_range(0..AD_TYPES.len())].to_string(),
            event_type: EVENT_TYPES[rng.gen_range(0..EVENT_TYPES.len())].to_string(),
            event_time: event_time(i, events_per_sec),
            ip: format!("10.{}.{}.{}", rng.gen_range(0..256), rng.gen_range(0..256), rng.gen_range(1..255)),
        })
        .collect();
    EventLog::new(events)
}

pub fn event_schema() -> Schema {
    Schema::new(vec![
        Field::new("user_id", ScalarType::Utf8, false),
        Field::new("page_id", ScalarType::Utf8, false),
        Field::new("ad_id", ScalarType::Utf8, false),
        Field::new("ad_type", ScalarType::Utf8, false),
        Field::new("event_type", ScalarType::Utf8, false),
        Field::new("event_time", ScalarType::Timestamp, false),
        Field::new("ip", ScalarType::Utf8, false),
    ])
    .expect("distinct names")
}

pub fn campaign_schema() -> Schema {
    Schema::new(vec![
        Field::new("c_ad_id", ScalarType::Utf8, false),
        Field::new("campaign_id", ScalarType::Utf8, false),
    ])
    .expect("distinct names")
}

/// The static ad to campaign mapping.
pub fn campaign_table() -> Result<RecordBatch, QueryError> {
    let rows: Vec<Vec<Value>> = (0..CAMPAIGNS)
        .flat_map(|c| (0..ADS_PER_CAMPAIGN).map(move |a| vec![Value::Utf8(ad_id(c, a)), Value::Utf8(campaign_id(c))]))
        .collect();
    RecordBatch::from_rows(Arc::new(campaign_schema()), &rows)
}

pub fn to_batch(events: &[YsbEvent]) -> Result<RecordBatch, QueryError> {
    let rows: Vec<Vec<Value>> = events
        .iter()
        .map(|e| {
            vec![
                Value::Utf8(e.user_id.clone()),
                Value::Utf8(e.page_id.clone()),
                Value::Utf8(e.ad_id.clone()),
                Value::Utf8(e.ad_type.clone()),
                Value::Utf8(e.event_type.clone()),
                Value::Timestamp(e.event_time),
                Value::Utf8(e.ip.clone()),
            ]
        })
        .collect();
    RecordBatch::from_rows(Arc::new(event_schema()), &rows)
}
