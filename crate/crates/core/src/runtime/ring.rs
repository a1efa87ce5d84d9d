use crate::query::hash::{hash_str, hash_values};
use crate::query::Value;

/// Virtual nodes per member.
pub const VNODES: usize = 64;

const RING_SEED: u64 = 0x0c0f_fee5_eed5;

/// Consistent-hash ring over the members of one function group.
///
/// Positions depend only on member names and the seed, so every instance
/// that builds the ring for the same group agrees on every lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashRing {
    members: Vec<String>,
    /// `(position, member index)`, sorted by position.
    points: Vec<(u64, usize)>,
    seed: u64,
}

impl HashRing {
    pub fn new(members: Vec<String>, seed: u64) -> Self {
        let mut points: Vec<(u64, usize)> = members
            .iter()
            .enumerate()
            .flat_map(|(i, m)| (0..VNODES).map(move |v| (hash_str(seed, &format!("{m}#{v}")), i)))
            .collect();
        points.sort_unstable();
        HashRing {
            members,
            points,
            seed,
        }
    }

    /// Ring for a group, seeded from the query code so that all producers of
    /// one query share it.
    pub fn for_group(query_code: &str, members: Vec<String>) -> Self {
        Self::new(members, ring_seed(query_code))
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member owning `key`: the first point at or after it, clockwise.
    pub fn lookup(&self, key: u64) -> usize {
        let i = self.points.partition_point(|&(p, _)| p < key);
        self.points[i % self.points.len()].1
    }

    /// Ring start for the shuffle from `query_code` into `stage_id`.
    pub fn start(&self, query_code: &str, stage_id: u8) -> usize {
        let key = hash_values(
            self.seed,
            &[
                Value::from(query_code),
                Value::Int64(i64::from(stage_id)),
                Value::Int64(1),
            ],
        );
        self.lookup(key)
    }

    /// Member index for shuffle id `k` (from 1): stepping counterclockwise
    /// from `start`, one member per shuffle id.
    pub fn assign(start: usize, k: u32, group_size: usize) -> usize {
        let g = group_size as i64;
        (start as i64 - (i64::from(k) - 1)).rem_euclid(g) as usize
    }

    pub fn destination(&self, query_code: &str, stage_id: u8, k: u32) -> &str {
        let start = self.start(query_code, stage_id);
        &self.members[Self::assign(start, k, self.len())]
    }
}

pub fn ring_seed(query_code: &str) -> u64 {
    hash_str(RING_SEED, query_code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterclockwise_from_start() {
        assert_eq!(HashRing::assign(6, 1, 8), 6);
        assert_eq!(HashRing::assign(6, 2, 8), 5);
        assert_eq!(HashRing::assign(0, 2, 8), 7);
        assert_eq!(HashRing::assign(3, 9, 8), 3);
    }

    #[test]
    fn lookup_wraps() {
        let r = HashRing::new(vec!["a".into(), "b".into()], 1);
        assert!(r.lookup(u64::MAX) < 2);
        assert!(r.lookup(0) < 2);
    }
}
