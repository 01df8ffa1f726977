//! Corpus schema, ingestion, tokenization, attribute encoding, and splits.

pub mod attributes;
pub mod ingest;
pub mod split;
pub mod tokenize;

pub use attributes::{
    encode_comment_attributes, encode_user_attributes, COMMENT_ATTR_DIM, USER_ATTR_DIM,
};
pub use ingest::{parse_dataset, write_dataset, IngestConfig, IngestReport};
pub use split::split_dataset;
pub use tokenize::{build_vocabulary, split_sentences, tokenize, words};

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token id reserved for padding.
pub const PAD: u32 = 0;
/// Token id for out-of-vocabulary words.
pub const UNK: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing input file: {0}")]
    MissingFile(PathBuf),
    #[error("no usable news records in corpus")]
    MissingContent,
    #[error("{file}: {malformed} of {total} lines malformed (first at line {line}: {message})")]
    TooManyMalformed {
        file: String,
        malformed: usize,
        total: usize,
        line: usize,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Article veracity label. The numeric convention is fake = 0, true = 1, and
/// metrics treat "fake" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    True,
}

impl Label {
    /// Class index used by the prediction head.
    pub fn index(self) -> usize {
        match self {
            Label::Fake => 0,
            Label::True => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Label::Fake),
            1 => Some(Label::True),
            _ => None,
        }
    }
}

/// Token lookup table. Ids 0 and 1 are reserved for PAD and UNK; real tokens
/// start at 2 and are assigned in lexicographic order for reproducibility.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    pub fn with_specials() -> Self {
        Self {
            token_to_id: BTreeMap::new(),
            id_to_token: vec!["<pad>".to_string(), "<unk>".to_string()],
        }
    }

    pub(crate) fn insert(&mut self, token: &str) {
        if !self.token_to_id.contains_key(token) {
            let id = self.id_to_token.len() as u32;
            self.token_to_id.insert(token.to_string(), id);
            self.id_to_token.push(token.to_string());
        }
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Total number of ids, specials included.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One news article with sentence-level token ids and the original text kept
/// for explanation output and round-trip serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub sentences: Vec<Vec<u32>>,
    pub raw_sentences: Vec<String>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentAttributes {
    pub like_count: u64,
    pub retweet_count: u64,
    pub reply_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub news_id: String,
    pub user_id: String,
    pub tokens: Vec<u32>,
    pub raw_text: String,
    pub timestamp: i64,
    pub attributes: CommentAttributes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAttributes {
    pub follower_count: u64,
    pub friend_count: u64,
    pub status_count: u64,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub attributes: UserAttributes,
}

/// Immutable corpus: news plus the comments and users they reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub news: Vec<NewsItem>,
    pub comments: BTreeMap<String, Comment>,
    pub users: BTreeMap<String, User>,
    pub vocabulary: Vocabulary,
}

impl Dataset {
    pub fn news_by_id(&self, id: &str) -> Option<&NewsItem> {
        self.news.iter().find(|n| n.id == id)
    }

    /// Comments of one news item, ordered by (timestamp, id).
    pub fn comments_for_news(&self, news_id: &str) -> Vec<&Comment> {
        let mut out: Vec<&Comment> = self
            .comments
            .values()
            .filter(|c| c.news_id == news_id)
            .collect();
        out.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
        out
    }

    /// Referential-integrity violations; empty for a well-formed dataset.
    pub fn integrity_violations(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let news_ids: std::collections::BTreeSet<&str> =
            self.news.iter().map(|n| n.id.as_str()).collect();
        for comment in self.comments.values() {
            if !news_ids.contains(comment.news_id.as_str()) {
                violations.push(format!(
                    "comment {} references missing news {}",
                    comment.id, comment.news_id
                ));
            }
            if !self.users.contains_key(&comment.user_id) {
                violations.push(format!(
                    "comment {} references missing user {}",
                    comment.id, comment.user_id
                ));
            }
        }
        let vocab_len = self.vocabulary.len() as u32;
        for news in &self.news {
            if news.sentences.is_empty() {
                violations.push(format!("news {} has no sentences", news.id));
            }
            for sentence in &news.sentences {
                if sentence.iter().any(|&t| t >= vocab_len) {
                    violations.push(format!("news {} has out-of-vocabulary ids", news.id));
                    break;
                }
            }
        }
        for comment in self.comments.values() {
            if comment.tokens.is_empty() {
                violations.push(format!("comment {} has no tokens", comment.id));
            }
            if comment.tokens.iter().any(|&t| t >= vocab_len) {
                violations.push(format!("comment {} has out-of-vocabulary ids", comment.id));
            }
        }
        violations
    }
}
