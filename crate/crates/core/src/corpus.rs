//! Forum corpus ingestion.
//!
//! Posts and profiles arrive as line-delimited JSON. Ingestion is tolerant:
//! a bad line becomes an [`IngestIssue`] and the rest of the file is still
//! read. Only an unreadable source is fatal.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed reading input: {0}")]
    Read(#[from] io::Error),
}

/// One forum message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub user_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<FixedOffset>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<String>,
}

/// Account data as filled in by the user. The claimed specialty is kept
/// exactly as typed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub username: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_specialty_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registered_at: Option<DateTime<FixedOffset>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueKind {
    NotUtf8,
    Malformed { error: String },
    NotObject,
    MissingField { field: &'static str },
    InvalidField { field: &'static str, reason: String },
    DuplicateId { id: String },
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotUtf8 => f.write_str("line is not valid UTF-8"),
            Self::Malformed { error } => write!(f, "malformed record: {error}"),
            Self::NotObject => f.write_str("record must be a JSON object"),
            Self::MissingField { field } => write!(f, "missing required field '{field}'"),
            Self::InvalidField { field, reason } => write!(f, "field '{field}': {reason}"),
            Self::DuplicateId { id } => write!(f, "duplicate id '{id}', keeping first occurrence"),
        }
    }
}

/// A non-fatal problem with a single input line (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestIssue {
    pub line: usize,
    pub kind: IssueKind,
}

impl fmt::Display for IngestIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

/// Everything one user posted, in chronological order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InformationTrack {
    pub user_id: String,
    pub messages: Vec<Post>,
    pub post_count: usize,
    pub char_count: usize,
}

impl InformationTrack {
    pub fn new(user_id: impl Into<String>, messages: Vec<Post>) -> Self {
        let post_count = messages.len();
        let char_count = messages.iter().map(|p| p.text.chars().count()).sum();
        Self {
            user_id: user_id.into(),
            messages,
            post_count,
            char_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    pub community_id: String,
    pub posts: Vec<Post>,
    pub profiles: Vec<UserProfile>,
    pub tracks: BTreeMap<String, InformationTrack>,
}

impl Corpus {
    pub fn profile(&self, user_id: &str) -> Option<&UserProfile> {
        self.profiles.iter().find(|p| p.user_id == user_id)
    }

    /// Profiles keyed by user id.
    pub fn profile_index(&self) -> BTreeMap<&str, &UserProfile> {
        self.profiles
            .iter()
            .map(|p| (p.user_id.as_str(), p))
            .collect()
    }
}

/// Reads `posts.jsonl` records.
pub fn ingest_posts<R: BufRead>(source: R) -> Result<(Vec<Post>, Vec<IngestIssue>), CorpusError> {
    let mut seen = HashSet::new();
    ingest(source, |obj| {
        let post = parse_post(obj)?;
        if !seen.insert(post.post_id.clone()) {
            return Err(IssueKind::DuplicateId { id: post.post_id });
        }
        Ok(post)
    })
}

/// Reads `profiles.jsonl` records.
pub fn ingest_profiles<R: BufRead>(
    source: R,
) -> Result<(Vec<UserProfile>, Vec<IngestIssue>), CorpusError> {
    let mut seen = HashSet::new();
    ingest(source, |obj| {
        let profile = parse_profile(obj)?;
        if !seen.insert(profile.user_id.clone()) {
            return Err(IssueKind::DuplicateId {
                id: profile.user_id,
            });
        }
        Ok(profile)
    })
}

/// A trusted training label: the user's verified specialty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub user_id: String,
    pub specialty_id: String,
}

/// Reads `labels.jsonl` records. A user labeled twice keeps the first label.
pub fn ingest_labels<R: BufRead>(source: R) -> Result<(Vec<Label>, Vec<IngestIssue>), CorpusError> {
    let mut seen = HashSet::new();
    ingest(source, |obj| {
        let label = Label {
            user_id: required_id(obj, "user_id")?,
            specialty_id: required_id(obj, "specialty_id")?,
        };
        if !seen.insert(label.user_id.clone()) {
            return Err(IssueKind::DuplicateId { id: label.user_id });
        }
        Ok(label)
    })
}

fn ingest<R, T, F>(mut source: R, mut parse: F) -> Result<(Vec<T>, Vec<IngestIssue>), CorpusError>
where
    R: BufRead,
    F: FnMut(&Map<String, Value>) -> Result<T, IssueKind>,
{
    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut buf = Vec::new();
    let mut line = 0usize;
    loop {
        buf.clear();
        if source.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line += 1;
        let Ok(text) = std::str::from_utf8(&buf) else {
            issues.push(IngestIssue {
                line,
                kind: IssueKind::NotUtf8,
            });
            continue;
        };
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let outcome = match serde_json::from_str::<Value>(text) {
            Err(e) => Err(IssueKind::Malformed {
                error: e.to_string(),
            }),
            Ok(Value::Object(obj)) => parse(&obj),
            Ok(_) => Err(IssueKind::NotObject),
        };
        match outcome {
            Ok(record) => records.push(record),
            Err(kind) => issues.push(IngestIssue { line, kind }),
        }
    }
    Ok((records, issues))
}

fn required_id(obj: &Map<String, Value>, field: &'static str) -> Result<String, IssueKind> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(IssueKind::MissingField { field }),
        Some(Value::String(s)) if s.trim().is_empty() => Err(IssueKind::InvalidField {
            field,
            reason: "must not be empty".into(),
        }),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(IssueKind::InvalidField {
            field,
            reason: "expected a string".into(),
        }),
    }
}

fn optional_string(
    obj: &Map<String, Value>,
    field: &'static str,
) -> Result<Option<String>, IssueKind> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(IssueKind::InvalidField {
            field,
            reason: "expected a string".into(),
        }),
    }
}

fn optional_instant(
    obj: &Map<String, Value>,
    field: &'static str,
) -> Result<Option<DateTime<FixedOffset>>, IssueKind> {
    optional_string(obj, field)?
        .map(|s| {
            DateTime::parse_from_rfc3339(&s).map_err(|e| IssueKind::InvalidField {
                field,
                reason: format!("not an ISO-8601 instant ({e})"),
            })
        })
        .transpose()
}

fn parse_post(obj: &Map<String, Value>) -> Result<Post, IssueKind> {
    let post_id = required_id(obj, "post_id")?;
    let user_id = required_id(obj, "user_id")?;
    let text = match obj.get("text") {
        None | Some(Value::Null) => return Err(IssueKind::MissingField { field: "text" }),
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(IssueKind::InvalidField {
                field: "text",
                reason: "expected a string".into(),
            })
        }
    };
    Ok(Post {
        post_id,
        user_id,
        text,
        timestamp: optional_instant(obj, "timestamp")?,
        section: optional_string(obj, "section")?,
    })
}

fn parse_profile(obj: &Map<String, Value>) -> Result<UserProfile, IssueKind> {
    Ok(UserProfile {
        user_id: required_id(obj, "user_id")?,
        username: optional_string(obj, "username")?,
        claimed_specialty_raw: optional_string(obj, "claimed_specialty_raw")?,
        registered_at: optional_instant(obj, "registered_at")?,
    })
}

/// Groups posts into per-user tracks. Every user seen in either input gets a
/// track; profile-only users get an empty one.
pub fn build_tracks(community_id: &str, posts: Vec<Post>, profiles: Vec<UserProfile>) -> Corpus {
    let mut grouped: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    for post in &posts {
        grouped
            .entry(post.user_id.clone())
            .or_default()
            .push(post.clone());
    }
    for profile in &profiles {
        grouped.entry(profile.user_id.clone()).or_default();
    }
    let tracks = grouped
        .into_iter()
        .map(|(user_id, mut messages)| {
            // stable sort: ties and undated posts keep input order, undated last
            messages.sort_by(|a, b| match (&a.timestamp, &b.timestamp) {
                (Some(x), Some(y)) => x.cmp(y),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            });
            let track = InformationTrack::new(user_id.clone(), messages);
            (user_id, track)
        })
        .collect();
    Corpus {
        community_id: community_id.to_string(),
        posts,
        profiles,
        tracks,
    }
}

/// Writes records as canonical JSONL, one compact object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut sink: W, records: &[T]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut sink, record)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}
