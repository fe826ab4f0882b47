//! Versioned JSON snapshots of sessions.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! loaded session continues bit-for-bit like the one that was saved.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::active::Session;
use crate::data::StandardizationStats;
use crate::error::{GladError, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub version: u32,
    pub id: String,
    pub dataset: String,
    pub feature_names: Vec<String>,
    /// Present when the session runs on standardized features.
    pub stats: Option<StandardizationStats>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub session: Session,
}

impl SessionSnapshot {
    pub fn new(
        id: impl Into<String>,
        dataset: impl Into<String>,
        feature_names: Vec<String>,
        stats: Option<StandardizationStats>,
        session: Session,
    ) -> Self {
        let now = Utc::now();
        Self {
            version: SNAPSHOT_VERSION,
            id: id.into(),
            dataset: dataset.into(),
            feature_names,
            stats,
            created_at: now,
            updated_at: now,
            session,
        }
    }

    pub fn touch(&mut self) {
        self.updated_at = Utc::now();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parse, check the version and rebuild derived caches.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != u64::from(SNAPSHOT_VERSION) {
            return Err(GladError::SnapshotVersion(version.min(u64::from(u32::MAX)) as u32));
        }
        let mut snap: Self = serde_json::from_str(text)?;
        snap.session.refresh_member_scores()?;
        Ok(snap)
    }

    /// Write to a temporary file beside `path`, then rename over it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        fs::create_dir_all(dir).map_err(|e| GladError::io(dir, e))?;
        let json = self.to_json()?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| GladError::io(dir, e))?;
        tmp.write_all(json.as_bytes())
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(|e| GladError::io(tmp.path(), e))?;
        tmp.persist(path).map_err(|e| GladError::io(path, e.error))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| GladError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::active::{SessionConfig, StepOutcome};
    use crate::data::{make_toy, standardize};

    fn toy_session() -> (Session, Vec<crate::data::Label>, StandardizationStats) {
        let toy = make_toy(3, 200, 8).unwrap();
        let (z, stats) = standardize(&toy);
        let cfg = SessionConfig {
            ensemble_size: 4,
            budget: 10,
            seed: 3,
            ..SessionConfig::default()
        };
        (Session::new(z.features, cfg).unwrap(), toy.labels, stats)
    }

    #[test]
    fn round_trip_continues_identically() {
        let (mut s, labels, stats) = toy_session();
        for _ in 0..4 {
            let q = s.pending().unwrap();
            s.submit(q, labels[q]).unwrap();
        }
        let snap = SessionSnapshot::new("abc", "toy", vec!["x".into(), "y".into()], Some(stats), s.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("abc.json");
        snap.save(&path).unwrap();
        let loaded = SessionSnapshot::load(&path).unwrap();
        assert_eq!(loaded.to_json().unwrap(), snap.to_json().unwrap());
        let mut resumed = loaded.session;
        assert_eq!(resumed, s);
        assert_eq!(resumed.member_scores(), s.member_scores());

        let q = s.pending().unwrap();
        assert_eq!(resumed.pending(), Some(q));
        let a = s.submit(q, labels[q]).unwrap();
        let b = resumed.submit(q, labels[q]).unwrap();
        assert_eq!(a, b);
        assert!(matches!(a, StepOutcome::Next(_)));
        assert_eq!(
            serde_json::to_string(s.params()).unwrap(),
            serde_json::to_string(resumed.params()).unwrap()
        );
    }

    #[test]
    fn rejects_other_versions() {
        let (s, _, _) = toy_session();
        let mut snap = SessionSnapshot::new("v", "toy", vec![], None, s);
        snap.version = 2;
        let text = snap.to_json().unwrap();
        assert!(matches!(SessionSnapshot::from_json(&text), Err(GladError::SnapshotVersion(2))));
        assert!(matches!(SessionSnapshot::from_json("{}"), Err(GladError::SnapshotVersion(0))));
    }

    #[test]
    fn save_overwrites_atomically() {
        let (s, _, _) = toy_session();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut snap = SessionSnapshot::new("s", "toy", vec![], None, s);
        snap.save(&path).unwrap();
        snap.dataset = "renamed".into();
        snap.save(&path).unwrap();
        assert_eq!(SessionSnapshot::load(&path).unwrap().dataset, "renamed");
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn load_reports_missing_file() {
        assert!(matches!(
            SessionSnapshot::load("/nonexistent/glad/snap.json"),
            Err(GladError::Io { .. })
        ));
    }
}
