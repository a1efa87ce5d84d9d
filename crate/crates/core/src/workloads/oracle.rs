//! Single-process reference answers computed straight from the events,
//! without the plan machinery.

use std::collections::{BTreeMap, HashMap};

use super::nexmark::NexmarkEvent;
use super::queries::QueryId;
use super::ysb::{YsbEvent, ADS_PER_CAMPAIGN, CAMPAIGNS};
use super::ysb::{ad_id, campaign_id};
use crate::query::Value;

pub type Rows = Vec<Vec<Value>>;

/// Canonical form of an unordered result.
pub fn canonical(mut rows: Rows) -> Rows {
    rows.sort();
    rows
}

/// Reference rows of one epoch of a NEXMark query, given the epoch's events.
pub fn nexmark_epoch(query: QueryId, events: &[NexmarkEvent]) -> Rows {
    let bids = || {
        events.iter().filter_map(|e| match e {
            NexmarkEvent::Bid {
                auction,
                bidder,
                price,
                date_time,
            } => Some((*auction, *bidder, *price, *date_time)),
            _ => None,
        })
    };
    match query {
        QueryId::Q1 => bids()
            .map(|(a, b, p, t)| vec![Value::Int64(a), Value::Int64(b), Value::Int64(p * 89 / 100), Value::Timestamp(t)])
            .collect(),
        QueryId::Q2 => bids()
            .filter(|(a, ..)| a % 123 == 0)
            .map(|(a, _, p, _)| vec![Value::Int64(a), Value::Int64(p)])
            .collect(),
        QueryId::Q3 => {
            let mut sellers: HashMap<i64, Vec<&NexmarkEvent>> = HashMap::new();
            for e in events {
                if let NexmarkEvent::Person { id, state, .. } = e {
                    if ["OR", "ID", "CA"].contains(&state.as_str()) {
                        sellers.entry(*id).or_default().push(e);
                    }
                }
            }
            let mut out = Vec::new();
            for e in events {
                if let NexmarkEvent::Auction {
                    id, seller, category: 10, ..
                } = e
                {
                    for p in sellers.get(seller).into_iter().flatten() {
                        if let NexmarkEvent::Person { name, city, state, .. } = p {
                            out.push(vec![
                                Value::Utf8(name.clone()),
                                Value::Utf8(city.clone()),
                                Value::Utf8(state.clone()),
                                Value::Int64(*id),
                            ]);
                        }
                    }
                }
            }
            out
        }
        QueryId::Q4 => {
            let mut auctions: HashMap<i64, (i64, i64, i64)> = HashMap::new();
            for e in events {
                if let NexmarkEvent::Auction {
                    id,
                    category,
                    date_time,
                    expires,
                    ..
                } = e
                {
                    auctions.insert(*id, (*category, *date_time, *expires));
                }
            }
            let mut winning: BTreeMap<(i64, i64), i64> = BTreeMap::new();
            for (a, _, price, t) in bids() {
                if let Some(&(cat, start, end)) = auctions.get(&a) {
                    if start <= t && t <= end {
                        let w = winning.entry((a, cat)).or_insert(price);
                        *w = (*w).max(price);
                    }
                }
            }
            let mut per_cat: BTreeMap<i64, (i64, i64)> = BTreeMap::new();
            for ((_, cat), price) in winning {
                let s = per_cat.entry(cat).or_default();
                s.0 += price;
                s.1 += 1;
            }
            per_cat
                .into_iter()
                .map(|(cat, (sum, n))| vec![Value::Int64(cat), Value::Float64(sum as f64 / n as f64)])
                .collect()
        }
        QueryId::Q5 => {
            let mut counts: BTreeMap<i64, i64> = BTreeMap::new();
            for (a, ..) in bids() {
                *counts.entry(a).or_default() += 1;
            }
            let mut rows: Vec<(i64, i64)> = counts.into_iter().collect();
            rows.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
            rows.into_iter()
                .map(|(a, n)| vec![Value::Int64(a), Value::Int64(n)])
                .collect()
        }
        QueryId::Ysb => Vec::new(),
    }
}

/// Reference rows of one YSB window.
pub fn ysb_epoch(events: &[YsbEvent]) -> Rows {
    let campaign_of: HashMap<String, String> = (0..CAMPAIGNS)
        .flat_map(|c| (0..ADS_PER_CAMPAIGN).map(move |a| (ad_id(c, a), campaign_id(c))))
        .collect();
    let mut counts: BTreeMap<String, i64> = BTreeMap::new();
    for e in events.iter().filter(|e| e.event_type == "view") {
        if let Some(c) = campaign_of.get(&e.ad_id) {
            *counts.entry(c.clone()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(c, n)| vec![Value::Utf8(c), Value::Int64(n)])
        .collect()
}
