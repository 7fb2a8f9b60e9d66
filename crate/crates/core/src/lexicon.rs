//! Marker lexicons and marker search over information tracks.
//!
//! A lexicon declares indicator groups (their order is the indicator order
//! used everywhere downstream) and markers belonging to those groups.
//! Markers come in three kinds:
//!
//! * `literal_token` matches a single token,
//! * `phrase` matches a run of consecutive tokens inside one message,
//! * `regex` matches on the NFC-normalized message text, counting
//!   non-overlapping leftmost matches.
//!
//! Token markers are compiled into Aho-Corasick automata over a
//! space-delimited token stream, one for case-folded and one for
//! case-sensitive markers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use aho_corasick::AhoCorasick;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::InformationTrack;

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("lexicon is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid lexicon: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKind {
    LiteralToken,
    Phrase,
    Regex,
}

impl MarkerKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "literal_token" => Some(Self::LiteralToken),
            "phrase" => Some(Self::Phrase),
            "regex" => Some(Self::Regex),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerDef {
    pub marker_id: String,
    pub group_id: String,
    pub kind: MarkerKind,
    pub pattern: String,
    #[serde(default)]
    pub case_sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorGroup {
    pub group_id: String,
    pub label: String,
}

/// A validated lexicon with its compiled matcher.
#[derive(Debug, Clone)]
pub struct MarkerLexicon {
    pub lexicon_version: String,
    pub groups: Vec<IndicatorGroup>,
    pub markers: Vec<MarkerDef>,
    matcher: Matcher,
}

#[derive(Deserialize)]
struct RawLexicon {
    lexicon_version: String,
    groups: Vec<IndicatorGroup>,
    markers: Vec<RawMarker>,
}

#[derive(Deserialize)]
struct RawMarker {
    marker_id: String,
    group_id: String,
    kind: String,
    pattern: String,
    #[serde(default)]
    case_sensitive: bool,
}

#[derive(Serialize)]
struct LexiconFile<'a> {
    lexicon_version: &'a str,
    groups: &'a [IndicatorGroup],
    markers: &'a [MarkerDef],
}

/// Parses and validates a `markers.json` document. All violations are
/// reported together.
pub fn load_lexicon(source: &[u8]) -> Result<MarkerLexicon, LexiconError> {
    let raw: RawLexicon = serde_json::from_slice(source)?;
    let mut violations = Vec::new();

    if raw.lexicon_version.trim().is_empty() {
        violations.push("lexicon_version must not be empty".to_string());
    }
    if raw.groups.is_empty() {
        violations.push("at least one indicator group is required".to_string());
    }
    let mut group_ids = HashSet::new();
    for g in &raw.groups {
        if g.group_id.is_empty() {
            violations.push("group with empty group_id".to_string());
        } else if !group_ids.insert(g.group_id.as_str()) {
            violations.push(format!("duplicate group_id '{}'", g.group_id));
        }
    }

    let mut marker_ids = HashSet::new();
    let mut markers = Vec::with_capacity(raw.markers.len());
    for m in raw.markers {
        let id = &m.marker_id;
        if id.is_empty() {
            violations.push("marker with empty marker_id".to_string());
        } else if !marker_ids.insert(id.clone()) {
            violations.push(format!("duplicate marker_id '{id}'"));
        }
        if !group_ids.contains(m.group_id.as_str()) {
            violations.push(format!(
                "marker '{id}' references undeclared group '{}'",
                m.group_id
            ));
        }
        let Some(kind) = MarkerKind::parse(&m.kind) else {
            violations.push(format!("marker '{id}' has unknown kind '{}'", m.kind));
            continue;
        };
        if m.pattern.trim().is_empty() {
            violations.push(format!("marker '{id}' has an empty pattern"));
            continue;
        }
        match kind {
            MarkerKind::LiteralToken => {
                let n = tokenize(&m.pattern).len();
                if n != 1 {
                    violations.push(format!(
                        "literal_token marker '{id}' must be exactly one token, got {n}"
                    ));
                }
            }
            MarkerKind::Phrase => {
                if tokenize(&m.pattern).is_empty() {
                    violations.push(format!("phrase marker '{id}' contains no tokens"));
                }
            }
            MarkerKind::Regex => match compile_regex(&m.pattern, m.case_sensitive) {
                Err(e) => violations.push(format!("regex marker '{id}' does not compile: {e}")),
                Ok(re) if re.is_match("") => {
                    violations.push(format!("regex marker '{id}' matches the empty string"))
                }
                Ok(_) => {}
            },
        }
        markers.push(MarkerDef {
            marker_id: m.marker_id,
            group_id: m.group_id,
            kind,
            pattern: m.pattern,
            case_sensitive: m.case_sensitive,
        });
    }

    if !violations.is_empty() {
        return Err(LexiconError::Invalid(violations));
    }
    let matcher = Matcher::build(&raw.groups, &markers);
    Ok(MarkerLexicon {
        lexicon_version: raw.lexicon_version,
        groups: raw.groups,
        markers,
        matcher,
    })
}

fn compile_regex(pattern: &str, case_sensitive: bool) -> Result<Regex, regex::Error> {
    let normalized: String = pattern.nfc().collect();
    RegexBuilder::new(&normalized)
        .case_insensitive(!case_sensitive)
        .build()
}

impl MarkerLexicon {
    pub fn indicator_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_ids(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.group_id.clone()).collect()
    }

    pub fn group_index(&self, group_id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.group_id == group_id)
    }

    /// Patterns of the `literal_token` markers of a group, in declaration order.
    pub fn literal_markers(&self, group_id: &str) -> Vec<&str> {
        self.markers
            .iter()
            .filter(|m| m.group_id == group_id && m.kind == MarkerKind::LiteralToken)
            .map(|m| m.pattern.as_str())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LexiconFile {
            lexicon_version: &self.lexicon_version,
            groups: &self.groups,
            markers: &self.markers,
        })
        .expect("lexicon serializes")
    }

    /// Scans one message. Hit counts are indexed in group order.
    pub fn scan_message(&self, text: &str) -> MessageScan {
        self.matcher.scan(text)
    }
}

/// Marker hits within a single message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageScan {
    pub token_count: usize,
    pub hits: Vec<u64>,
}

/// Raw marker-hit counts for one user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrackAnalysis {
    pub user_id: String,
    pub token_count: usize,
    pub hits_per_group: BTreeMap<String, u64>,
    pub post_count: usize,
}

impl TrackAnalysis {
    /// Hits laid out in the lexicon's group order.
    pub fn hits_in_order(&self, lexicon: &MarkerLexicon) -> Vec<u64> {
        lexicon
            .groups
            .iter()
            .map(|g| self.hits_per_group.get(&g.group_id).copied().unwrap_or(0))
            .collect()
    }
}

/// Counts tokens and marker hits over every message of a track.
pub fn scan_track(track: &InformationTrack, lexicon: &MarkerLexicon) -> TrackAnalysis {
    let mut token_count = 0;
    let mut hits = vec![0u64; lexicon.groups.len()];
    for message in &track.messages {
        let scan = lexicon.scan_message(&message.text);
        token_count += scan.token_count;
        for (total, h) in hits.iter_mut().zip(&scan.hits) {
            *total += h;
        }
    }
    TrackAnalysis {
        user_id: track.user_id.clone(),
        token_count,
        hits_per_group: lexicon
            .groups
            .iter()
            .zip(hits)
            .map(|(g, h)| (g.group_id.clone(), h))
            .collect(),
        post_count: track.post_count,
    }
}

/// A token as it appeared (after NFC) and its lowercased form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub raw: String,
    pub folded: String,
}

fn is_joiner(c: char) -> bool {
    matches!(
        c,
        '\'' | '\u{2019}' | '\u{02BC}' | '-' | '\u{2010}' | '\u{2011}'
    )
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Splits NFC-normalized text into tokens, keeping raw and lowercased forms.
pub fn tokenize_raw(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.nfc().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if is_token_char(c) {
            current.push(c);
            continue;
        }
        let inner_joiner = is_joiner(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if inner_joiner {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(make_token(std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        tokens.push(make_token(current));
    }
    tokens
}

fn make_token(raw: String) -> Token {
    let folded = raw.to_lowercase();
    Token { raw, folded }
}

/// Lowercased tokens of `text`. Letters, digits and combining marks form
/// tokens; apostrophes and hyphens between letters stay inside a token.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_raw(text).into_iter().map(|t| t.folded).collect()
}

/// One automaton over space-padded token sequences. Each automaton pattern
/// may belong to several markers; `owners` keeps one group index per marker.
#[derive(Debug, Clone)]
struct TokenAutomaton {
    automaton: Option<AhoCorasick>,
    owners: Vec<Vec<usize>>,
}

impl TokenAutomaton {
    fn build(entries: Vec<(String, usize)>) -> Self {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut patterns: Vec<String> = Vec::new();
        let mut owners: Vec<Vec<usize>> = Vec::new();
        for (pattern, group) in entries {
            let slot = *index.entry(pattern.clone()).or_insert_with(|| {
                patterns.push(pattern);
                owners.push(Vec::new());
                patterns.len() - 1
            });
            owners[slot].push(group);
        }
        let automaton = if patterns.is_empty() {
            None
        } else {
            Some(AhoCorasick::new(&patterns).expect("token patterns build"))
        };
        Self { automaton, owners }
    }

    fn count(&self, haystack: &str, hits: &mut [u64]) {
        let Some(ac) = &self.automaton else { return };
        for m in ac.find_overlapping_iter(haystack) {
            for &g in &self.owners[m.pattern().as_usize()] {
                hits[g] += 1;
            }
        }
    }
}

fn padded(tokens: impl Iterator<Item = impl AsRef<str>>) -> String {
    let mut s = String::from(" ");
    for t in tokens {
        s.push_str(t.as_ref());
        s.push(' ');
    }
    s
}

#[derive(Debug, Clone)]
struct Matcher {
    group_count: usize,
    folded: TokenAutomaton,
    exact: TokenAutomaton,
    regexes: Vec<(Regex, usize)>,
}

impl Matcher {
    fn build(groups: &[IndicatorGroup], markers: &[MarkerDef]) -> Self {
        let group_of: HashMap<&str, usize> = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (g.group_id.as_str(), i))
            .collect();
        let mut folded = Vec::new();
        let mut exact = Vec::new();
        let mut regexes = Vec::new();
        for m in markers {
            let g = group_of[m.group_id.as_str()];
            match m.kind {
                MarkerKind::LiteralToken | MarkerKind::Phrase => {
                    let tokens = tokenize_raw(&m.pattern);
                    if m.case_sensitive {
                        exact.push((padded(tokens.iter().map(|t| &t.raw)), g));
                    } else {
                        folded.push((padded(tokens.iter().map(|t| &t.folded)), g));
                    }
                }
                MarkerKind::Regex => {
                    let re = compile_regex(&m.pattern, m.case_sensitive)
                        .expect("validated regex compiles");
                    regexes.push((re, g));
                }
            }
        }
        Self {
            group_count: groups.len(),
            folded: TokenAutomaton::build(folded),
            exact: TokenAutomaton::build(exact),
            regexes,
        }
    }

    fn scan(&self, text: &str) -> MessageScan {
        let mut hits = vec![0u64; self.group_count];
        let tokens = tokenize_raw(text);
        self.folded
            .count(&padded(tokens.iter().map(|t| &t.folded)), &mut hits);
        self.exact
            .count(&padded(tokens.iter().map(|t| &t.raw)), &mut hits);
        if !self.regexes.is_empty() {
            let normalized: String = text.nfc().collect();
            for (re, g) in &self.regexes {
                hits[*g] += re.find_iter(&normalized).count() as u64;
            }
        }
        MessageScan {
            token_count: tokens.len(),
            hits,
        }
    }
}

impl fmt::Display for MarkerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LiteralToken => "literal_token",
            Self::Phrase => "phrase",
            Self::Regex => "regex",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Post;

    fn lexicon(markers: &str) -> MarkerLexicon {
        let src = format!(
            r#"{{"lexicon_version":"t1","groups":[{{"group_id":"G1","label":"one"}},{{"group_id":"G2","label":"two"}}],"markers":[{markers}]}}"#
        );
        load_lexicon(src.as_bytes()).unwrap()
    }

    fn track(texts: &[&str]) -> InformationTrack {
        let messages = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Post {
                post_id: format!("p{i}"),
                user_id: "u".into(),
                text: t.to_string(),
                timestamp: None,
                section: None,
            })
            .collect();
        InformationTrack::new("u", messages)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Діагноз: гастрит!"), vec!["діагноз", "гастрит"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("п'ять X-ray"), vec!["п'ять", "x-ray"]);
    }

    #[test]
    fn tokenize_edge_joiners() {
        assert_eq!(tokenize("-a- 'b' c--d e-"), vec!["a", "b", "c", "d", "e"]);
        assert_eq!(tokenize("пʼять м’яз"), vec!["пʼять", "м’яз"]);
        assert_eq!(tokenize("ЕКГ 12 відведень"), vec!["екг", "12", "відведень"]);
    }

    #[test]
    fn tokenize_applies_nfc() {
        // "й" as и + combining breve
        let decomposed = "и\u{0306}од";
        assert_eq!(tokenize(decomposed), vec!["йод"]);
    }

    #[test]
    fn load_preserves_group_order() {
        let lex = lexicon(
            r#"{"marker_id":"m1","group_id":"G2","kind":"literal_token","pattern":"a"},
               {"marker_id":"m2","group_id":"G1","kind":"phrase","pattern":"b c"},
               {"marker_id":"m3","group_id":"G1","kind":"regex","pattern":"d+"}"#,
        );
        assert_eq!(lex.group_ids(), vec!["G1", "G2"]);
        assert_eq!(lex.markers.len(), 3);
        assert!(!lex.markers[0].case_sensitive);
    }

    fn violations(src: &str) -> Vec<String> {
        match load_lexicon(src.as_bytes()) {
            Err(LexiconError::Invalid(v)) => v,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_group_reported() {
        let v = violations(
            r#"{"lexicon_version":"1","groups":[{"group_id":"G1","label":"x"}],
               "markers":[{"marker_id":"m1","group_id":"gX","kind":"literal_token","pattern":"a"}]}"#,
        );
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("gX"));
    }

    #[test]
    fn bad_regex_reported_with_marker_id() {
        let v = violations(
            r#"{"lexicon_version":"1","groups":[{"group_id":"G1","label":"x"}],
               "markers":[{"marker_id":"broken","group_id":"G1","kind":"regex","pattern":"("}]}"#,
        );
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("broken"));
    }

    #[test]
    fn all_violations_listed() {
        let v = violations(
            r#"{"lexicon_version":"1","groups":[{"group_id":"G1","label":"x"},{"group_id":"G1","label":"y"}],
               "markers":[
                 {"marker_id":"m","group_id":"G1","kind":"literal_token","pattern":"two words"},
                 {"marker_id":"m","group_id":"G1","kind":"bogus","pattern":"a"},
                 {"marker_id":"e","group_id":"G1","kind":"regex","pattern":"x*"},
                 {"marker_id":"f","group_id":"G1","kind":"phrase","pattern":"  "}
               ]}"#,
        );
        assert_eq!(v.len(), 6, "{v:?}");
    }

    #[test]
    fn literal_hits_counted_per_token() {
        let lex = lexicon(
            r#"{"marker_id":"m1","group_id":"G1","kind":"literal_token","pattern":"гастрит"}"#,
        );
        let a = scan_track(&track(&["Гастрит, хронічний гастрит.", "гастритом"]), &lex);
        // independent count: whole-token equality after lowercasing
        let oracle = ["гастрит", "хронічний", "гастрит", "гастритом"]
            .iter()
            .filter(|t| **t == "гастрит")
            .count() as u64;
        assert_eq!(a.hits_per_group["G1"], oracle);
        assert_eq!(a.hits_per_group["G1"], 2);
        assert_eq!(a.hits_per_group["G2"], 0);
        assert_eq!(a.token_count, 4);
        assert_eq!(a.post_count, 2);
    }

    #[test]
    fn phrase_matches_within_message_only() {
        let lex = lexicon(
            r#"{"marker_id":"m1","group_id":"G2","kind":"phrase","pattern":"artery bypass"}"#,
        );
        let a = scan_track(
            &track(&["after coronary artery bypass graft surgery"]),
            &lex,
        );
        assert_eq!(a.hits_per_group["G2"], 1);
        let split = scan_track(&track(&["coronary artery", "bypass graft"]), &lex);
        assert_eq!(split.hits_per_group["G2"], 0);
        // must align to token boundaries
        let partial = scan_track(&track(&["arterya bypass", "artery bypassed"]), &lex);
        assert_eq!(partial.hits_per_group["G2"], 0);
    }

    #[test]
    fn regex_non_overlapping_leftmost() {
        let lex = lexicon(r#"{"marker_id":"m1","group_id":"G1","kind":"regex","pattern":"aa"}"#);
        let a = scan_track(&track(&["aaaa AAA"]), &lex);
        // "aaaa" -> 2, "AAA" -> 1 (case-insensitive by default)
        assert_eq!(a.hits_per_group["G1"], 3);
    }

    #[test]
    fn case_sensitive_markers() {
        let lex = lexicon(
            r#"{"marker_id":"m1","group_id":"G1","kind":"literal_token","pattern":"ЕКГ","case_sensitive":true},
               {"marker_id":"m2","group_id":"G2","kind":"regex","pattern":"МРТ","case_sensitive":true}"#,
        );
        let a = scan_track(&track(&["ЕКГ екг Екг МРТ мрт"]), &lex);
        assert_eq!(a.hits_per_group["G1"], 1);
        assert_eq!(a.hits_per_group["G2"], 1);
    }

    #[test]
    fn duplicate_patterns_both_count() {
        let lex = lexicon(
            r#"{"marker_id":"m1","group_id":"G1","kind":"literal_token","pattern":"біль"},
               {"marker_id":"m2","group_id":"G2","kind":"literal_token","pattern":"Біль"},
               {"marker_id":"m3","group_id":"G1","kind":"phrase","pattern":"біль біль"}"#,
        );
        let a = scan_track(&track(&["біль біль біль"]), &lex);
        assert_eq!(a.hits_per_group["G1"], 3 + 2);
        assert_eq!(a.hits_per_group["G2"], 3);
    }

    #[test]
    fn no_matches_keeps_all_groups() {
        let lex =
            lexicon(r#"{"marker_id":"m1","group_id":"G1","kind":"literal_token","pattern":"x"}"#);
        let a = scan_track(&track(&["nothing here", ""]), &lex);
        assert_eq!(a.token_count, 2);
        assert_eq!(a.hits_per_group.len(), 2);
        assert!(a.hits_per_group.values().all(|&h| h == 0));
    }

    #[test]
    fn lexicon_json_reloads() {
        let lex = lexicon(
            r#"{"marker_id":"m1","group_id":"G1","kind":"phrase","pattern":"a b","case_sensitive":true}"#,
        );
        let again = load_lexicon(lex.to_json().as_bytes()).unwrap();
        assert_eq!(again.markers, lex.markers);
        assert_eq!(again.groups, lex.groups);
    }
}
