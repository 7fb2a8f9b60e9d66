//! Deterministic synthetic communities with known ground truth.
//!
//! Every token of a user's content is drawn independently: with probability
//! `rate_g` it is one of group `g`'s literal markers (chosen uniformly),
//! otherwise a noise word `w<k>` from a vocabulary of
//! `noise_vocabulary_size` words. The expected indicator vector of a user is
//! therefore `rate × 1000` per group.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed` through `SeedableRng::seed_from_u64`, so output is a pure function
//! of the spec, the seed and the lexicon on every platform.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, FixedOffset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_jsonl, Label, Post, UserProfile};
use crate::lexicon::MarkerLexicon;

pub const LOW_CONTENT_TOKENS: usize = 10;
const BASE_INSTANT: &str = "2024-01-01T00:00:00+00:00";

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid community spec: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("spec is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialtySpec {
    pub specialty_id: String,
    /// Per-token emission probability of each marker group.
    pub marker_group_rates: BTreeMap<String, f64>,
    /// Text written into the profile field; defaults to the specialty id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_label: Option<String>,
}

impl SpecialtySpec {
    fn claim(&self) -> &str {
        self.claim_label.as_deref().unwrap_or(&self.specialty_id)
    }
}

fn default_community() -> String {
    "synthetic".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySpec {
    #[serde(default = "default_community")]
    pub community_id: String,
    pub specialties: Vec<SpecialtySpec>,
    pub users_per_specialty: usize,
    pub posts_per_user: usize,
    pub tokens_per_post: usize,
    pub noise_vocabulary_size: usize,
    #[serde(default)]
    pub fraction_missing_claim: f64,
    #[serde(default)]
    pub fraction_wrong_claim: f64,
    #[serde(default)]
    pub fraction_low_content: f64,
    /// Honest users per specialty written to the labels file. All honest
    /// users are labeled when absent; the rest serve as held-out users.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_per_specialty: Option<usize>,
    pub seed: u64,
}

impl CommunitySpec {
    pub fn from_json(source: &[u8]) -> Result<Self, SynthError> {
        Ok(serde_json::from_slice(source)?)
    }

    pub fn validate(&self, lexicon: &MarkerLexicon) -> Result<(), SynthError> {
        let mut v = Vec::new();
        if self.specialties.is_empty() {
            v.push("at least one specialty is required".to_string());
        }
        let mut ids = HashSet::new();
        for s in &self.specialties {
            if s.specialty_id.trim().is_empty() {
                v.push("specialty with empty specialty_id".to_string());
            } else if !ids.insert(s.specialty_id.as_str()) {
                v.push(format!("duplicate specialty '{}'", s.specialty_id));
            }
            let mut total = 0.0;
            for (group, &rate) in &s.marker_group_rates {
                if lexicon.group_index(group).is_none() {
                    v.push(format!(
                        "specialty '{}' uses unknown group '{group}'",
                        s.specialty_id
                    ));
                }
                if !(0.0..=1.0).contains(&rate) {
                    v.push(format!(
                        "specialty '{}' rate for '{group}' must be in [0,1], got {rate}",
                        s.specialty_id
                    ));
                }
                if rate > 0.0 && lexicon.literal_markers(group).is_empty() {
                    v.push(format!(
                        "group '{group}' has no literal_token markers to emit"
                    ));
                }
                total += rate;
            }
            if total > 1.0 + 1e-12 {
                v.push(format!(
                    "specialty '{}' rates sum to {total}, above 1",
                    s.specialty_id
                ));
            }
        }
        for (name, n) in [
            ("users_per_specialty", self.users_per_specialty),
            ("posts_per_user", self.posts_per_user),
            ("tokens_per_post", self.tokens_per_post),
            ("noise_vocabulary_size", self.noise_vocabulary_size),
        ] {
            if n == 0 {
                v.push(format!("{name} must be at least 1"));
            }
        }
        let fractions = [
            ("fraction_missing_claim", self.fraction_missing_claim),
            ("fraction_wrong_claim", self.fraction_wrong_claim),
            ("fraction_low_content", self.fraction_low_content),
        ];
        for (name, f) in fractions {
            if !(0.0..=1.0).contains(&f) {
                v.push(format!("{name} must be in [0,1], got {f}"));
            }
        }
        if fractions.iter().map(|(_, f)| f).sum::<f64>() > 1.0 + 1e-12 {
            v.push("claim fractions sum above 1".to_string());
        }
        if self.fraction_wrong_claim > 0.0 && self.specialties.len() < 2 {
            v.push("wrong claims need at least two specialties".to_string());
        }
        if let Some(labeled) = self.labeled_per_specialty {
            let honest = self.behavior_counts().3;
            if labeled > honest {
                v.push(format!(
                    "labeled_per_specialty {labeled} exceeds the {honest} honest users per specialty"
                ));
            }
        }
        for k in 0..self.noise_vocabulary_size {
            let word = noise_word(k);
            if lexicon.scan_message(&word).hits.iter().any(|&h| h > 0) {
                v.push(format!("noise word '{word}' matches a marker"));
                break;
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(SynthError::Invalid(v))
        }
    }

    /// (missing, wrong, low_content, honest) users per specialty.
    fn behavior_counts(&self) -> (usize, usize, usize, usize) {
        let n = self.users_per_specialty;
        let share = |f: f64| ((f * n as f64).round() as usize).min(n);
        let missing = share(self.fraction_missing_claim);
        let wrong = share(self.fraction_wrong_claim).min(n - missing);
        let low = share(self.fraction_low_content).min(n - missing - wrong);
        (missing, wrong, low, n - missing - wrong - low)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimBehavior {
    Honest,
    Missing,
    Wrong,
    LowContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub true_specialty: String,
    pub claimed_behavior: ClaimBehavior,
    /// Whether the user is part of the labeled training sample.
    pub labeled: bool,
}

pub type GroundTruth = BTreeMap<String, TruthEntry>;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCommunity {
    pub posts: Vec<Post>,
    pub profiles: Vec<UserProfile>,
    pub labels: Vec<Label>,
    pub truth: GroundTruth,
    /// Claim label → specialty id for every specialty.
    pub aliases: BTreeMap<String, String>,
}

pub fn noise_word(index: usize) -> String {
    format!("w{index}")
}

struct Emitter<'a> {
    /// Cumulative probability bound and candidate tokens per emitting group.
    bins: Vec<(f64, Vec<&'a str>)>,
    noise: usize,
}

impl<'a> Emitter<'a> {
    fn new(spec: &SpecialtySpec, lexicon: &'a MarkerLexicon, noise: usize) -> Self {
        let mut cumulative = 0.0;
        let mut bins = Vec::new();
        for group in &lexicon.groups {
            let rate = spec
                .marker_group_rates
                .get(&group.group_id)
                .copied()
                .unwrap_or(0.0);
            if rate > 0.0 {
                cumulative += rate;
                bins.push((cumulative, lexicon.literal_markers(&group.group_id)));
            }
        }
        Self { bins, noise }
    }

    fn token(&self, rng: &mut ChaCha8Rng) -> String {
        let u: f64 = rng.random();
        for (bound, markers) in &self.bins {
            if u < *bound {
                return markers[rng.random_range(0..markers.len())].to_string();
            }
        }
        noise_word(rng.random_range(0..self.noise))
    }
}

/// Builds a synthetic community. Pure in `(spec, lexicon)`.
pub fn generate(
    spec: &CommunitySpec,
    lexicon: &MarkerLexicon,
) -> Result<SyntheticCommunity, SynthError> {
    spec.validate(lexicon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = DateTime::<FixedOffset>::parse_from_rfc3339(BASE_INSTANT).expect("valid base");
    let (missing, wrong, low, honest) = spec.behavior_counts();
    let labeled_quota = spec.labeled_per_specialty.unwrap_or(honest);

    let mut out = SyntheticCommunity {
        posts: Vec::new(),
        profiles: Vec::new(),
        labels: Vec::new(),
        truth: BTreeMap::new(),
        aliases: spec
            .specialties
            .iter()
            .map(|s| (s.claim().to_string(), s.specialty_id.clone()))
            .collect(),
    };
    let mut user_seq = 0usize;
    let mut post_seq = 0usize;

    for (s_idx, specialty) in spec.specialties.iter().enumerate() {
        let emitter = Emitter::new(specialty, lexicon, spec.noise_vocabulary_size);
        let mut behaviors = Vec::with_capacity(spec.users_per_specialty);
        behaviors.extend(std::iter::repeat_n(ClaimBehavior::Missing, missing));
        behaviors.extend(std::iter::repeat_n(ClaimBehavior::Wrong, wrong));
        behaviors.extend(std::iter::repeat_n(ClaimBehavior::LowContent, low));
        behaviors.extend(std::iter::repeat_n(ClaimBehavior::Honest, honest));
        behaviors.shuffle(&mut rng);

        let mut labeled = 0;
        for behavior in behaviors {
            let user_id = format!("u{user_seq:05}");
            let (n_posts, n_tokens) = match behavior {
                ClaimBehavior::LowContent => (1, LOW_CONTENT_TOKENS),
                _ => (spec.posts_per_user, spec.tokens_per_post),
            };
            for k in 0..n_posts {
                let text = (0..n_tokens)
                    .map(|_| emitter.token(&mut rng))
                    .collect::<Vec<_>>()
                    .join(" ");
                out.posts.push(Post {
                    post_id: format!("p{post_seq:07}"),
                    user_id: user_id.clone(),
                    text,
                    timestamp: Some(base + Duration::hours((user_seq * 24 + k) as i64)),
                    section: None,
                });
                post_seq += 1;
            }
            let claim = match behavior {
                ClaimBehavior::Honest | ClaimBehavior::LowContent => {
                    Some(specialty.claim().to_string())
                }
                ClaimBehavior::Missing => None,
                ClaimBehavior::Wrong => {
                    let mut other = rng.random_range(0..spec.specialties.len() - 1);
                    if other >= s_idx {
                        other += 1;
                    }
                    Some(spec.specialties[other].claim().to_string())
                }
            };
            out.profiles.push(UserProfile {
                user_id: user_id.clone(),
                username: Some(format!("user{user_seq}")),
                claimed_specialty_raw: claim,
                registered_at: None,
            });
            let is_labeled = behavior == ClaimBehavior::Honest && labeled < labeled_quota;
            if is_labeled {
                labeled += 1;
                out.labels.push(Label {
                    user_id: user_id.clone(),
                    specialty_id: specialty.specialty_id.clone(),
                });
            }
            out.truth.insert(
                user_id,
                TruthEntry {
                    true_specialty: specialty.specialty_id.clone(),
                    claimed_behavior: behavior,
                    labeled: is_labeled,
                },
            );
            user_seq += 1;
        }
    }
    Ok(out)
}

impl SyntheticCommunity {
    /// Writes `posts.jsonl`, `profiles.jsonl`, `labels.jsonl`, `truth.json`
    /// and `aliases.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
        write_jsonl(open("posts.jsonl")?, &self.posts)?;
        write_jsonl(open("profiles.jsonl")?, &self.profiles)?;
        write_jsonl(open("labels.jsonl")?, &self.labels)?;
        for (name, value) in [
            ("truth.json", serde_json::to_value(&self.truth)?),
            ("aliases.json", serde_json::to_value(&self.aliases)?),
        ] {
            let mut w = open(name)?;
            serde_json::to_writer_pretty(&mut w, &value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}
