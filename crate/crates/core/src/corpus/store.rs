use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{CorpusError, Filing};
use crate::hashing::sha256_hex;
use crate::{FilingKey, DATE_FORMAT};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One line of `manifest.jsonl`. Field order here is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub ticker: String,
    pub cik: String,
    pub filing_date: NaiveDate,
    pub accession_id: String,
    pub path: String,
    pub sha256: String,
}

impl ManifestRecord {
    pub fn key(&self) -> FilingKey {
        FilingKey::new(self.ticker.clone(), self.filing_date)
    }
}

/// Directory-backed corpus: one cleaned text file per filing plus an
/// append-only manifest. Ingestion is keyed by (ticker, filing_date) and
/// re-inserting a stored filing is a no-op.
#[derive(Debug)]
pub struct CorpusStore {
    root: PathBuf,
    records: BTreeMap<FilingKey, ManifestRecord>,
}

impl CorpusStore {
    /// Opens (creating if needed) a corpus directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut records = BTreeMap::new();
        let manifest = root.join(MANIFEST_FILE);
        if manifest.exists() {
            let reader = BufReader::new(fs::File::open(&manifest)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
                    CorpusError::Manifest { line: i + 1, message: e.to_string() }
                })?;
                records.insert(rec.key(), rec);
            }
        }
        Ok(Self { root, records })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, key: &FilingKey) -> bool {
        self.records.contains_key(key)
    }

    /// Manifest records in (ticker, filing_date) order.
    pub fn records(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.values()
    }

    pub fn insert(&mut self, filing: &Filing) -> Result<(), CorpusError> {
        let key = filing.key();
        if self.records.contains_key(&key) {
            return Ok(());
        }
        let year = filing.filing_date.year();
        if self.records.keys().any(|k| k.ticker == key.ticker && k.year() == year) {
            return Err(CorpusError::DuplicateYear { ticker: key.ticker, year });
        }
        let rel = format!(
            "filings/{}/{}.txt",
            sanitize(&filing.ticker),
            filing.filing_date.format(DATE_FORMAT)
        );
        let path = self.root.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, filing.clean_text.as_bytes())?;
        let rec = ManifestRecord {
            ticker: filing.ticker.clone(),
            cik: filing.cik.clone(),
            filing_date: filing.filing_date,
            accession_id: filing.accession_id.clone(),
            path: rel,
            sha256: sha256_hex(filing.clean_text.as_bytes()),
        };
        let mut line = serde_json::to_string(&rec).expect("manifest record serializes");
        line.push('\n');
        let mut file =
            OpenOptions::new().create(true).append(true).open(self.root.join(MANIFEST_FILE))?;
        file.write_all(line.as_bytes())?;
        self.records.insert(key, rec);
        Ok(())
    }

    pub fn load(&self, key: &FilingKey) -> Result<Option<Filing>, CorpusError> {
        let Some(rec) = self.records.get(key) else {
            return Ok(None);
        };
        let clean_text = fs::read_to_string(self.root.join(&rec.path))?;
        if sha256_hex(clean_text.as_bytes()) != rec.sha256 {
            return Err(CorpusError::Manifest {
                line: 0,
                message: format!("{} does not match its recorded sha256", rec.path),
            });
        }
        Ok(Some(Filing {
            ticker: rec.ticker.clone(),
            cik: rec.cik.clone(),
            accession_id: rec.accession_id.clone(),
            filing_date: rec.filing_date,
            raw_uri: rec.path.clone(),
            clean_text,
        }))
    }

    /// Loads every stored filing in manifest order.
    pub fn load_all(&self) -> Result<Vec<Filing>, CorpusError> {
        self.records
            .keys()
            .map(|k| self.load(k).map(|f| f.expect("key taken from manifest")))
            .collect()
    }
}

fn sanitize(ticker: &str) -> String {
    ticker.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}
