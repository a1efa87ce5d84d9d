use std::collections::BTreeMap;

use super::SimError;

/// Object-store operations, implemented by the bare store, the platform
/// (traced, from the client side) and invocations (traced and timed).
pub trait ObjectStorage {
    fn put(&mut self, key: &str, bytes: Vec<u8>) -> Result<(), SimError>;
    fn get(&mut self, key: &str) -> Result<Vec<u8>, SimError>;
    /// Keys starting with `prefix`, in lexicographic order.
    fn list(&mut self, prefix: &str) -> Result<Vec<String>, SimError>;
    fn delete(&mut self, key: &str) -> Result<(), SimError>;
}

/// Strongly consistent key-value store that counts billable requests.
/// Listing is billed as a write-class request; deletes are free.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectStore {
    objects: BTreeMap<String, Vec<u8>>,
    pub writes: u64,
    pub reads: u64,
}

impl ObjectStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Read without counting a request; for inspection outside a run.
    pub fn peek(&self, key: &str) -> Option<&[u8]> {
        self.objects.get(key).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }

    pub fn reset_counters(&mut self) {
        self.writes = 0;
        self.reads = 0;
    }
}

impl ObjectStorage for ObjectStore {
    fn put(&mut self, key: &str, bytes: Vec<u8>) -> Result<(), SimError> {
        self.writes += 1;
        self.objects.insert(key.to_string(), bytes);
        Ok(())
    }

    fn get(&mut self, key: &str) -> Result<Vec<u8>, SimError> {
        self.reads += 1;
        self.objects
            .get(key)
            .cloned()
            .ok_or_else(|| SimError::NoSuchKey(key.to_string()))
    }

    fn list(&mut self, prefix: &str) -> Result<Vec<String>, SimError> {
        self.writes += 1;
        Ok(self
            .objects
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, _)| k.clone())
            .collect())
    }

    fn delete(&mut self, key: &str) -> Result<(), SimError> {
        self.objects.remove(key);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_after_write() {
        let mut s = ObjectStore::new();
        s.put("a/1", b"x".to_vec()).unwrap();
        assert_eq!(s.get("a/1").unwrap(), b"x");
        assert_eq!(s.get("a/2"), Err(SimError::NoSuchKey("a/2".into())));
        s.put("a/0", vec![]).unwrap();
        s.put("b", vec![]).unwrap();
        assert_eq!(s.list("a/").unwrap(), ["a/0", "a/1"]);
        assert_eq!((s.writes, s.reads), (4, 2));
    }
}
