//! Expiring key-value state for the cross-device flow.
//!
//! This is the only mutable state of the bridge. Every entry has a TTL no
//! longer than the store maximum, and wiping the store only aborts logins
//! that are in flight.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde_json::Value;

use crate::clock::SharedClock;

pub const DEFAULT_TTL_SECS: u64 = 300;
pub const AUTH_CODE_TTL_SECS: u64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Namespace {
    LoginIdToChallenge,
    ChallengeToRedirect,
    SubjectToClaims,
    AuthCode,
    LoginSession,
    ConsentSession,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("no such entry")]
    Absent,
    #[error("ttl must be positive")]
    InvalidTtl,
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

struct Entry {
    value: Value,
    expires_at: i64,
}

type Entries = HashMap<(Namespace, String), Entry>;

/// In-process expiring map. Cloning shares the underlying storage.
#[derive(Clone)]
pub struct SessionStore {
    inner: Arc<Mutex<Entries>>,
    clock: SharedClock,
    max_ttl: u64,
}

impl SessionStore {
    pub fn new(clock: SharedClock) -> Self {
        Self::with_max_ttl(clock, DEFAULT_TTL_SECS)
    }

    pub fn with_max_ttl(clock: SharedClock, max_ttl: u64) -> Self {
        Self { inner: Arc::default(), clock, max_ttl }
    }

    fn lock(&self) -> Result<std::sync::MutexGuard<'_, Entries>, StoreError> {
        self.inner.lock().map_err(|_| StoreError::StorageFailure("store lock poisoned".into()))
    }

    /// Stores `value`; a TTL above the store maximum is clamped to it.
    pub fn put(&self, ns: Namespace, key: &str, value: Value, ttl: u64) -> Result<(), StoreError> {
        if ttl == 0 {
            return Err(StoreError::InvalidTtl);
        }
        let expires_at = self.clock.now() + ttl.min(self.max_ttl) as i64;
        let mut map = self.lock()?;
        let now = self.clock.now();
        map.retain(|_, e| e.expires_at > now);
        map.insert((ns, key.to_owned()), Entry { value, expires_at });
        Ok(())
    }

    pub fn get(&self, ns: Namespace, key: &str) -> Result<Value, StoreError> {
        let now = self.clock.now();
        let mut map = self.lock()?;
        let k = (ns, key.to_owned());
        match map.get(&k) {
            Some(e) if e.expires_at > now => Ok(e.value.clone()),
            Some(_) => {
                map.remove(&k);
                Err(StoreError::Absent)
            }
            None => Err(StoreError::Absent),
        }
    }

    /// Atomic get-and-delete.
    pub fn take(&self, ns: Namespace, key: &str) -> Result<Value, StoreError> {
        let now = self.clock.now();
        let mut map = self.lock()?;
        match map.remove(&(ns, key.to_owned())) {
            Some(e) if e.expires_at > now => Ok(e.value),
            _ => Err(StoreError::Absent),
        }
    }

    /// Atomically rewrites a live entry; its expiry is kept. If `f` fails
    /// the entry is left untouched.
    pub fn update<T, E>(
        &self,
        ns: Namespace,
        key: &str,
        f: impl FnOnce(&mut Value) -> Result<T, E>,
    ) -> Result<Result<T, E>, StoreError> {
        let now = self.clock.now();
        let mut map = self.lock()?;
        let entry = match map.get_mut(&(ns, key.to_owned())) {
            Some(e) if e.expires_at > now => e,
            _ => return Err(StoreError::Absent),
        };
        let mut scratch = entry.value.clone();
        let out = f(&mut scratch);
        if out.is_ok() {
            entry.value = scratch;
        }
        Ok(out)
    }

    /// Drops everything.
    pub fn wipe(&self) -> Result<(), StoreError> {
        self.lock()?.clear();
        Ok(())
    }

    pub fn len(&self) -> usize {
        let now = self.clock.now();
        self.lock().map(|m| m.values().filter(|e| e.expires_at > now).count()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use serde_json::json;
    use std::sync::Barrier;

    fn store() -> (SessionStore, ManualClock) {
        let clock = ManualClock::new(1_000);
        (SessionStore::new(Arc::new(clock.clone())), clock)
    }

    #[test]
    fn write_then_read() {
        let (s, _) = store();
        s.put(Namespace::LoginIdToChallenge, "id", json!("challenge"), 300).unwrap();
        assert_eq!(s.get(Namespace::LoginIdToChallenge, "id").unwrap(), json!("challenge"));
        // namespaces are separate
        assert_eq!(s.get(Namespace::AuthCode, "id"), Err(StoreError::Absent));
    }

    #[test]
    fn entries_expire_and_stay_expired() {
        let (s, clock) = store();
        s.put(Namespace::AuthCode, "c", json!(1), 60).unwrap();
        clock.advance(59);
        assert!(s.get(Namespace::AuthCode, "c").is_ok());
        clock.advance(1);
        assert_eq!(s.get(Namespace::AuthCode, "c"), Err(StoreError::Absent));
        clock.advance(1_000);
        assert_eq!(s.get(Namespace::AuthCode, "c"), Err(StoreError::Absent));
    }

    proptest::proptest! {
        #[test]
        fn absence_is_monotonic(ttl in 1u64..400, steps in proptest::collection::vec(0i64..120, 1..12)) {
            let (s, clock) = store();
            s.put(Namespace::LoginIdToChallenge, "k", json!(1), ttl).unwrap();
            let mut gone = false;
            for step in steps {
                clock.advance(step);
                let present = s.get(Namespace::LoginIdToChallenge, "k").is_ok();
                proptest::prop_assert!(!(gone && present));
                gone |= !present;
            }
        }
    }

    #[test]
    fn ttl_is_capped_by_the_store_maximum() {
        let (s, clock) = store();
        s.put(Namespace::LoginSession, "k", json!(1), 10_000).unwrap();
        clock.advance(DEFAULT_TTL_SECS as i64);
        assert_eq!(s.get(Namespace::LoginSession, "k"), Err(StoreError::Absent));
        assert_eq!(s.put(Namespace::LoginSession, "k", json!(1), 0), Err(StoreError::InvalidTtl));
    }

    #[test]
    fn last_write_wins() {
        let (s, _) = store();
        s.put(Namespace::LoginSession, "k", json!(1), 300).unwrap();
        s.put(Namespace::LoginSession, "k", json!(2), 300).unwrap();
        assert_eq!(s.get(Namespace::LoginSession, "k").unwrap(), json!(2));
    }

    #[test]
    fn take_is_single_use() {
        let (s, _) = store();
        s.put(Namespace::AuthCode, "c", json!("v"), 60).unwrap();
        assert_eq!(s.take(Namespace::AuthCode, "c").unwrap(), json!("v"));
        assert_eq!(s.take(Namespace::AuthCode, "c"), Err(StoreError::Absent));
        assert_eq!(s.take(Namespace::AuthCode, "never"), Err(StoreError::Absent));
    }

    #[test]
    fn concurrent_takes_have_one_winner() {
        for round in 0..20 {
            let (s, _) = store();
            let key = format!("code-{round}");
            s.put(Namespace::AuthCode, &key, json!(round), 60).unwrap();
            let callers = 16;
            let barrier = Arc::new(Barrier::new(callers));
            let handles: Vec<_> = (0..callers)
                .map(|_| {
                    let (s, b, k) = (s.clone(), barrier.clone(), key.clone());
                    std::thread::spawn(move || {
                        b.wait();
                        s.take(Namespace::AuthCode, &k).is_ok()
                    })
                })
                .collect();
            let winners = handles.into_iter().map(|h| h.join().unwrap()).filter(|w| *w).count();
            assert_eq!(winners, 1);
        }
    }

    #[test]
    fn update_keeps_expiry_and_rolls_back_on_error() {
        let (s, clock) = store();
        s.put(Namespace::LoginSession, "k", json!({"n": 1}), 100).unwrap();
        clock.advance(50);
        let r: Result<(), ()> = s.update(Namespace::LoginSession, "k", |v| {
            v["n"] = json!(2);
            Ok(())
        })
        .unwrap();
        assert!(r.is_ok());
        let r: Result<(), &str> = s.update(Namespace::LoginSession, "k", |v| {
            v["n"] = json!(3);
            Err("no")
        })
        .unwrap();
        assert_eq!(r, Err("no"));
        assert_eq!(s.get(Namespace::LoginSession, "k").unwrap(), json!({"n": 2}));
        clock.advance(50);
        assert_eq!(s.get(Namespace::LoginSession, "k"), Err(StoreError::Absent));
    }

    #[test]
    fn wipe_clears_everything() {
        let (s, _) = store();
        s.put(Namespace::AuthCode, "a", json!(1), 60).unwrap();
        s.put(Namespace::LoginSession, "b", json!(1), 60).unwrap();
        s.wipe().unwrap();
        assert!(s.is_empty());
        s.put(Namespace::AuthCode, "a", json!(1), 60).unwrap();
        assert_eq!(s.len(), 1);
    }
}
