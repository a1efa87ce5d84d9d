use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fault::EventLog;
use crate::query::{Field, QueryError, RecordBatch, ScalarType, Schema, SchemaRef, Value};

/// Events per generator cycle: one person, three auctions, the rest bids.
pub const CYCLE: u64 = 50;
const AUCTIONS_PER_CYCLE: u64 = 3;
/// Bids pick one of this many most recent auctions.
const HOT_AUCTIONS: u64 = 30;
const FIRST_ID: i64 = 1000;

const STATES: [&str; 7] = ["OR", "ID", "CA", "WA", "AZ", "NY", "TX"];
const CITIES: [&str; 6] = ["Portland", "Boise", "Bend", "Seattle", "Phoenix", "Redmond"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NexmarkEvent {
    Person {
        id: i64,
        name: String,
        city: String,
        state: String,
        date_time: i64,
    },
    Auction {
        id: i64,
        item_name: String,
        description: String,
        initial_bid: i64,
        reserve: i64,
        date_time: i64,
        expires: i64,
        seller: i64,
        category: i64,
    },
    Bid {
        auction: i64,
        bidder: i64,
        price: i64,
        date_time: i64,
    },
}

impl NexmarkEvent {
    pub fn date_time(&self) -> i64 {
        match self {
            NexmarkEvent::Person { date_time, .. }
            | NexmarkEvent::Auction { date_time, .. }
            | NexmarkEvent::Bid { date_time, .. } => *date_time,
        }
    }
}

/// Event time in ms of the `i`-th event at `events_per_sec`.
pub fn event_time(i: u64, events_per_sec: u64) -> i64 {
    (i * 1000 / events_per_sec.max(1)) as i64
}

/// A deterministic NEXMark-style stream ordered by event time.
pub fn gen_nexmark(n_events: u64, events_per_sec: u64, seed: u64) -> EventLog<NexmarkEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut persons, mut auctions) = (0i64, 0i64);
    let events = (0..n_events)
        .map(|i| {
            let ts = event_time(i, events_per_sec);
            match i % CYCLE {
                0 => {
                    let id = FIRST_ID + persons;
                    persons += 1;
                    NexmarkEvent::Person {
                        id,
                        name: format!("person-{id}"),
                        city: CITIES[rng.gen_range(0..CITIES.len())].to_string(),
                        state: STATES[rng.gen_range(0..STATES.len())].to_string(),
                        date_time: ts,
                    }
                }
                k if k <= AUCTIONS_PER_CYCLE => {
                    let id = FIRST_ID + auctions;
                    auctions += 1;
                    let initial_bid = rng.gen_range(1..=1000);
                    NexmarkEvent::Auction {
                        id,
                        item_name: format!("item-{id}"),
                        description: format!("lot {id}"),
                        initial_bid,
                        reserve: initial_bid + rng.gen_range(0..=1000),
                        date_time: ts,
                        expires: ts + rng.gen_range(1_000..=10_000),
                        seller: FIRST_ID + rng.gen_range(0..persons),
                        category: rng.gen_range(10..15),
                    }
                }
                _ => {
                    let recent = (auctions as u64).min(HOT_AUCTIONS) as i64;
                    NexmarkEvent::Bid {
                        auction: FIRST_ID + auctions - 1 - rng.gen_range(0..recent),
                        bidder: FIRST_ID + rng.gen_range(0..persons),
                        price: rng.gen_range(100..=10_000),
                        date_time: ts,
                    }
                }
            }
        })
        .collect();
    EventLog::new(events)
}

pub fn person_schema() -> Schema {
    Schema::new(vec![
        Field::new("id", ScalarType::Int64, false),
        Field::new("name", ScalarType::Utf8, false),
        Field::new("city", ScalarType::Utf8, false),
        Field::new("state", ScalarType::Utf8, false),
        Field::new("date_time", ScalarType::Timestamp, false),
    ])
    .expect("distinct names")
}

pub fn auction_schema() -> Schema {
    Schema::new(vec![
        Field::new("id", ScalarType::Int64, false),
        Field::new("item_name", ScalarType::Utf8, false),
        Field::new("description", ScalarType::Utf8, false),
        Field::new("initial_bid", ScalarType::Int64, false),
        Field::new("reserve", ScalarType::Int64, false),
        Field::new("date_time", ScalarType::Timestamp, false),
        Field::new("expires", ScalarType::Timestamp, false),
        Field::new("seller", ScalarType::Int64, false),
        Field::new("category", ScalarType::Int64, false),
    ])
    .expect("distinct names")
}

pub fn bid_schema() -> Schema {
    Schema::new(vec![
        Field::new("auction", ScalarType::Int64, false),
        Field::new("bidder", ScalarType::Int64, false),
        Field::new("price", ScalarType::Int64, false),
        Field::new("date_time", ScalarType::Timestamp, false),
    ])
    .expect("distinct names")
}

/// Person, auction and bid batches of `events`, in that order.
pub fn to_batches(events: &[NexmarkEvent]) -> Result<[RecordBatch; 3], QueryError> {
    let (mut p, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for e in events {
        match e.clone() {
            NexmarkEvent::Person {
                id,
                name,
                city,
                state,
                date_time,
            } => p.push(vec![
                Value::Int64(id),
                Value::Utf8(name),
                Value::Utf8(city),
                Value::Utf8(state),
                Value::Timestamp(date_time),
            ]),
            NexmarkEvent::Auction {
                id,
                item_name,
                description,
                initial_bid,
                reserve,
                date_time,
                expires,
                seller,
                category,
            } => a.push(vec![
                Value::Int64(id),
                Value::Utf8(item_name),
                Value::Utf8(description),
                Value::Int64(initial_bid),
                Value::Int64(reserve),
                Value::Timestamp(date_time),
                Value::Timestamp(expires),
                Value::Int64(seller),
                Value::Int64(category),
            ]),
            NexmarkEvent::Bid {
                auction,
                bidder,
                price,
                date_time,
            } => b.push(vec![
                Value::Int64(auction),
                Value::Int64(bidder),
                Value::Int64(price),
                Value::Timestamp(date_time),
            ]),
        }
    }
    let batch = |s: Schema, rows: &[Vec<Value>]| -> Result<RecordBatch, QueryError> {
        let s: SchemaRef = Arc::new(s);
        RecordBatch::from_rows(s, rows)
    };
    Ok([
        batch(person_schema(), &p)?,
        batch(auction_schema(), &a)?,
        batch(bid_schema(), &b)?,
    ])
}
