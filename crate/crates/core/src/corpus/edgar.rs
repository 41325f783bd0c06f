//! Filing resolution and download backends.
//!
//! [`FilingResolver`] and [`DocumentFetcher`] are the provider interfaces;
//! [`EdgarClient`] implements both against SEC EDGAR, [`LocalDirResolver`]
//! serves a directory of raw documents for offline runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use super::{CorpusError, FilingRef, UniverseEntry};
use crate::key::parse_date;
use crate::net::{HttpClient, HttpError, RateLimiter};

/// Environment variable holding the contact identity sent as the EDGAR
/// user agent, e.g. `"Jane Doe jane@example.com"`.
pub const IDENTITY_ENV: &str = "EDGAR_IDENTITY";

/// EDGAR fair-access ceiling.
pub const EDGAR_MAX_REQUESTS_PER_SECOND: f64 = 8.0;

const SUBMISSIONS_BASE: &str = "https://data.sec.gov/submissions";
const ARCHIVES_BASE: &str = "https://www.sec.gov/Archives/edgar/data";

/// Lists the annual reports a company has filed.
pub trait FilingResolver {
    /// `Ok(None)` means the company is unknown to this backend.
    fn list_annual_reports(
        &self,
        entry: &UniverseEntry,
    ) -> Result<Option<Vec<FilingRef>>, CorpusError>;
}

/// Retrieves the raw bytes behind a filing URI.
pub trait DocumentFetcher {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, CorpusError>;
}

/// Rate-limited EDGAR client.
#[derive(Debug)]
pub struct EdgarClient {
    http: HttpClient,
    submissions_base: String,
    archives_base: String,
}

impl EdgarClient {
    /// Builds a client from [`IDENTITY_ENV`]; refuses to run without it.
    pub fn from_env() -> Result<Self, CorpusError> {
        let identity = std::env::var(IDENTITY_ENV).unwrap_or_default();
        Self::new(&identity)
    }

    pub fn new(identity: &str) -> Result<Self, CorpusError> {
        let identity = identity.trim();
        if identity.is_empty() || !identity.contains('@') {
            return Err(CorpusError::MissingIdentity(IDENTITY_ENV));
        }
        let http = HttpClient::new(Duration::from_secs(60))
            .with_header("User-Agent", identity)
            .with_header("Accept-Encoding", "identity")
            .with_rate_limit(RateLimiter::per_second(EDGAR_MAX_REQUESTS_PER_SECOND));
        Ok(Self {
            http,
            submissions_base: SUBMISSIONS_BASE.into(),
            archives_base: ARCHIVES_BASE.into(),
        })
    }

    /// Points the client at alternative hosts (used by tests and mirrors).
    pub fn with_base_urls(mut self, submissions: &str, archives: &str) -> Self {
        self.submissions_base = submissions.trim_end_matches('/').into();
        self.archives_base = archives.trim_end_matches('/').into();
        self
    }

    pub fn with_retries(mut self, attempts: u32, base_backoff: Duration) -> Self {
        self.http = self.http.with_retries(attempts, base_backoff);
        self
    }

    fn get(&self, url: &str, context: &str) -> Result<Vec<u8>, CorpusError> {
        self.http.get_bytes(url).map_err(|e| match e {
            HttpError::Transport(message) => {
                CorpusError::Network { context: context.to_string(), message }
            }
            HttpError::Status { status, .. } => CorpusError::Http { status, uri: url.to_string() },
        })
    }
}

impl FilingResolver for EdgarClient {
    fn list_annual_reports(
        &self,
        entry: &UniverseEntry,
    ) -> Result<Option<Vec<FilingRef>>, CorpusError> {
        let url = format!("{}/CIK{}.json", self.submissions_base, entry.cik);
        let body = match self.get(&url, &entry.ticker) {
            Ok(b) => b,
            Err(CorpusError::Http { status: 404, .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let doc: Submissions = parse_json(&body, &url)?;
        let mut refs = doc.filings.recent.annual_reports(entry, &self.archives_base)?;
        for extra in &doc.filings.files {
            let url = format!("{}/{}", self.submissions_base, extra.name);
            let page: FilingColumns = parse_json(&self.get(&url, &entry.ticker)?, &url)?;
            refs.extend(page.annual_reports(entry, &self.archives_base)?);
        }
        Ok(Some(refs))
    }
}

impl DocumentFetcher for EdgarClient {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, CorpusError> {
        self.get(uri, uri)
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8], context: &str) -> Result<T, CorpusError> {
    serde_json::from_slice(body)
        .map_err(|e| CorpusError::Parse { context: context.to_string(), message: e.to_string() })
}

#[derive(Debug, Deserialize)]
struct Submissions {
    filings: SubmissionFilings,
}

#[derive(Debug, Deserialize)]
struct SubmissionFilings {
    recent: FilingColumns,
    #[serde(default)]
    files: Vec<SubmissionPage>,
}

#[derive(Debug, Deserialize)]
struct SubmissionPage {
    name: String,
}

/// Column-oriented filing table as served by the submissions API.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct FilingColumns {
    accession_number: Vec<String>,
    filing_date: Vec<String>,
    form: Vec<String>,
    #[serde(default)]
    primary_document: Vec<String>,
}

fn is_annual_form(form: &str) -> bool {
    matches!(form.trim(), "10-K" | "10-K405" | "10-K/A" | "10-K405/A")
}

impl FilingColumns {
    fn annual_reports(
        &self,
        entry: &UniverseEntry,
        archives_base: &str,
    ) -> Result<Vec<FilingRef>, CorpusError> {
        let n = self.accession_number.len();
        if self.filing_date.len() != n || self.form.len() != n {
            return Err(CorpusError::Parse {
                context: entry.ticker.clone(),
                message: "submission columns have unequal lengths".into(),
            });
        }
        let cik_num = entry.cik.trim_start_matches('0');
        let mut out = Vec::new();
        for i in (0..n).filter(|&i| is_annual_form(&self.form[i])) {
            let accession = &self.accession_number[i];
            let filing_date = parse_date(&self.filing_date[i]).map_err(|e| CorpusError::Parse {
                context: entry.ticker.clone(),
                message: format!("filing date {:?}: {e}", self.filing_date[i]),
            })?;
            let folder = accession.replace('-', "");
            let doc = self
                .primary_document
                .get(i)
                .filter(|d| !d.is_empty())
                .cloned()
                .unwrap_or_else(|| format!("{accession}.txt"));
            out.push(FilingRef {
                ticker: entry.ticker.clone(),
                cik: entry.cik.clone(),
                accession_id: accession.clone(),
                filing_date,
                form: self.form[i].trim().to_string(),
                raw_uri: format!("{archives_base}/{cik_num}/{folder}/{doc}"),
            });
        }
        Ok(out)
    }
}

/// Offline resolver over a directory of `TICKER_YYYY-MM-DD.{html,htm,txt}`
/// files. Every file is treated as an original 10-K.
#[derive(Debug, Clone)]
pub struct LocalDirResolver {
    dir: PathBuf,
}

impl LocalDirResolver {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl FilingResolver for LocalDirResolver {
    fn list_annual_reports(
        &self,
        entry: &UniverseEntry,
    ) -> Result<Option<Vec<FilingRef>>, CorpusError> {
        let mut out = Vec::new();
        for dirent in fs::read_dir(&self.dir)? {
            let path = dirent?.path();
            let Some((ticker, date)) = local_file_key(&path) else { continue };
            if !ticker.eq_ignore_ascii_case(&entry.ticker) {
                continue;
            }
            let Ok(filing_date) = parse_date(date) else { continue };
            let abs = fs::canonicalize(&path)?;
            out.push(FilingRef {
                ticker: entry.ticker.clone(),
                cik: entry.cik.clone(),
                accession_id: format!("local-{}-{}", entry.ticker, date),
                filing_date,
                form: "10-K".into(),
                raw_uri: format!("file://{}", abs.display()),
            });
        }
        Ok(Some(out))
    }
}

fn local_file_key(path: &Path) -> Option<(&str, &str)> {
    let ext = path.extension()?.to_str()?;
    if !matches!(ext, "html" | "htm" | "txt") {
        return None;
    }
    path.file_stem()?.to_str()?.rsplit_once('_')
}

/// Fetches `file://` URIs from disk and `http(s)://` URIs through an
/// optional EDGAR client.
#[derive(Debug, Default)]
pub struct UriFetcher {
    edgar: Option<EdgarClient>,
}

impl UriFetcher {
    pub fn local_only() -> Self {
        Self { edgar: None }
    }

    pub fn with_edgar(client: EdgarClient) -> Self {
        Self { edgar: Some(client) }
    }
}

impl DocumentFetcher for UriFetcher {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, CorpusError> {
        if let Some(path) = uri.strip_prefix("file://") {
            return Ok(fs::read(path)?);
        }
        if uri.starts_with("http://") || uri.starts_with("https://") {
            return match &self.edgar {
                Some(client) => client.fetch(uri),
                None => Err(CorpusError::MissingIdentity(IDENTITY_ENV)),
            };
        }
        Err(CorpusError::UnsupportedUri(uri.to_string()))
    }
}
