use std::path::PathBuf;

use glad_core::data::{load_csv, make_toy, read_csv, CsvOptions, Dataset};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

pub const TOY_ID: &str = "toy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub n: usize,
    pub d: usize,
    pub anomalies: usize,
    /// `builtin` or `file`.
    pub source: String,
}

/// The built-in toy dataset plus every `*.csv` in an optional directory.
#[derive(Debug, Clone, Default)]
pub struct DatasetCatalog {
    pub dir: Option<PathBuf>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl DatasetCatalog {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    pub fn list(&self) -> Vec<DatasetInfo> {
        let info = |ds: &Dataset, source: &str| DatasetInfo {
            id: ds.name.clone(),
            n: ds.n(),
            d: ds.d(),
            anomalies: ds.n_anomalies(),
            source: source.to_string(),
        };
        let mut out = vec![info(&toy(), "builtin")];
        let Some(dir) = &self.dir else { return out };
        let Ok(entries) = std::fs::read_dir(dir) else {
            tracing::warn!(dir = %dir.display(), "dataset directory unreadable");
            return out;
        };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        for p in paths {
            match load_csv(&p, &CsvOptions::default()) {
                Ok(ds) => out.push(info(&ds, "file")),
                Err(e) => tracing::warn!(path = %p.display(), "skipping dataset: {e}"),
            }
        }
        out
    }

    pub fn load(&self, id: &str, opts: &CsvOptions) -> ApiResult<Dataset> {
        if id == TOY_ID {
            return Ok(toy());
        }
        let unknown = || ApiError::new(axum::http::StatusCode::NOT_FOUND, "unknown_dataset", format!("no dataset `{id}`"));
        if !valid_id(id) {
            return Err(unknown());
        }
        let Some(dir) = &self.dir else { return Err(unknown()) };
        let path = dir.join(format!("{id}.csv"));
        if !path.is_file() {
            return Err(unknown());
        }
        Ok(load_csv(path, opts)?)
    }
}

pub fn toy() -> Dataset {
    let mut ds = make_toy(0, 500, 15).expect("toy parameters are valid");
    ds.name = TOY_ID.to_string();
    ds
}

pub fn parse_upload(name: &str, csv: &str, opts: &CsvOptions) -> ApiResult<Dataset> {
    Ok(read_csv(csv.as_bytes(), name, opts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_cannot_escape_directory() {
        assert!(valid_id("abalone"));
        assert!(valid_id("yeast_v2.1"));
        assert!(!valid_id("../etc/passwd"));
        assert!(!valid_id(".hidden"));
        assert!(!valid_id("a/b"));
        assert!(!valid_id(""));
    }

    #[test]
    fn toy_listed_without_directory() {
        let list = DatasetCatalog::default().list();
        assert_eq!(list.len(), 1);
        assert_eq!(list[0].id, "toy");
        assert_eq!((list[0].n, list[0].d, list[0].anomalies), (515, 2, 15));
    }
}
