//! Object-store key layout shared by the sink, the WAL and recovery.

pub fn wal_prefix(query_code: &str) -> String {
    format!("wal/{query_code}/")
}

pub fn log_key(query_code: &str, epoch: u64) -> String {
    format!("wal/{query_code}/{epoch:010}")
}

pub fn commit_key(query_code: &str, epoch: u64) -> String {
    format!("wal/{query_code}/{epoch:010}.commit")
}

pub fn checkpoint_prefix(query_code: &str) -> String {
    format!("checkpoint/{query_code}/")
}

pub fn checkpoint_key(query_code: &str, epoch: u64) -> String {
    format!("checkpoint/{query_code}/{epoch:010}")
}

pub fn sink_prefix(query_code: &str, window: &str) -> String {
    format!("sink/{query_code}/{window}/")
}

pub fn sink_part_key(query_code: &str, window: &str, part: u32) -> String {
    format!("sink/{query_code}/{window}/{part:04}")
}

pub fn result_prefix(query_code: &str) -> String {
    format!("results/{query_code}/")
}

pub fn result_key(query_code: &str, window: &str) -> String {
    format!("results/{query_code}/{window}")
}

/// Epoch id of a WAL key, with whether it is a commit marker.
pub fn parse_wal_key(key: &str) -> Option<(u64, bool)> {
    let last = key.rsplit('/').next()?;
    match last.strip_suffix(".commit") {
        Some(e) => e.parse().ok().map(|e| (e, true)),
        None => last.parse().ok().map(|e| (e, false)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        assert_eq!(log_key("ab12cd34", 5), "wal/ab12cd34/0000000005");
        assert_eq!(commit_key("ab12cd34", 5), "wal/ab12cd34/0000000005.commit");
        assert_eq!(parse_wal_key(&commit_key("q", 12)), Some((12, true)));
        assert_eq!(parse_wal_key(&log_key("q", 3)), Some((3, false)));
        assert_eq!(sink_part_key("q", "0-10000", 2), "sink/q/0-10000/0002");
    }
}
