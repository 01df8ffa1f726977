//! JSON-Lines corpus ingestion and serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::tokenize::{build_vocabulary, split_sentences, tokenize, words};
use super::{
    Comment, CommentAttributes, DataError, Dataset, Label, NewsItem, User, UserAttributes,
};

/// Truncation and vocabulary limits applied at ingest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub max_news_sentences: usize,
    pub max_sentence_words: usize,
    pub max_comment_words: usize,
    pub min_token_freq: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            max_news_sentences: 50,
            max_sentence_words: 50,
            max_comment_words: 20,
            min_token_freq: 2,
        }
    }
}

/// Line, drop, and retention counters from one [`parse_dataset`] run.
///
/// `comments_retained` counts distinct comment records and
/// `comment_user_edges` counts (comment, author) pairs; both are reported
/// because corpus statistics in the wild conflate the two.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub news_lines: usize,
    pub news_malformed: usize,
    pub news_duplicates: usize,
    pub news_dropped_empty: usize,
    pub news_retained: usize,
    pub news_fake: usize,
    pub news_true: usize,
    pub comment_lines: usize,
    pub comment_malformed: usize,
    pub comment_duplicates: usize,
    pub comments_dropped_empty: usize,
    pub comments_dropped_dangling: usize,
    pub comments_retained: usize,
    pub comment_user_edges: usize,
    pub user_lines: usize,
    pub user_malformed: usize,
    pub user_duplicates: usize,
    pub users_dropped_unreferenced: usize,
    pub users_retained: usize,
    pub vocabulary_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct NewsRecord {
    id: String,
    text: String,
    label: Label,
}

#[derive(Debug, Serialize, Deserialize)]
struct CommentRecord {
    id: String,
    news_id: String,
    user_id: String,
    text: String,
    timestamp: i64,
    likes: u64,
    retweets: u64,
    replies: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct UserRecord {
    id: String,
    followers: u64,
    friends: u64,
    statuses: u64,
    verified: bool,
}

fn read_records<T: DeserializeOwned>(
    dir: &Path,
    file: &str,
) -> Result<(Vec<T>, usize, usize), DataError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(DataError::MissingFile(path));
    }
    let content = fs::read_to_string(&path)?;
    let mut records = Vec::new();
    let mut malformed = 0;
    let mut total = 0;
    let mut first_bad: Option<(usize, String)> = None;
    for (index, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str::<T>(line) {
            Ok(record) => records.push(record),
            Err(err) => {
                malformed += 1;
                if first_bad.is_none() {
                    first_bad = Some((index + 1, err.to_string()));
                }
            }
        }
    }
    if total > 0 && malformed * 2 > total {
        let (line, message) = first_bad.unwrap_or((0, String::new()));
        return Err(DataError::TooManyMalformed {
            file: file.to_string(),
            malformed,
            total,
            line,
            message,
        });
    }
    Ok((records, malformed, total))
}

/// Parses a corpus directory (`news.jsonl`, `comments.jsonl`, `users.jsonl`)
/// into a [`Dataset`].
///
/// Duplicate ids keep the first record. Comments with wordless text or
/// dangling references are dropped, as are users no retained comment cites.
/// The vocabulary is built over retained text only, so parsing the output of
/// [`write_dataset`] reproduces the dataset exactly.
pub fn parse_dataset(
    root: &Path,
    config: &IngestConfig,
) -> Result<(Dataset, IngestReport), DataError> {
    let (news_records, news_malformed, news_lines) =
        read_records::<NewsRecord>(root, "news.jsonl")?;
    let (comment_records, comment_malformed, comment_lines) =
        read_records::<CommentRecord>(root, "comments.jsonl")?;
    let (user_records, user_malformed, user_lines) =
        read_records::<UserRecord>(root, "users.jsonl")?;

    let mut report = IngestReport {
        news_lines,
        news_malformed,
        comment_lines,
        comment_malformed,
        user_lines,
        user_malformed,
        ..IngestReport::default()
    };

    let mut news_seen = BTreeSet::new();
    let mut kept_news = Vec::new();
    for record in news_records {
        if !news_seen.insert(record.id.clone()) {
            report.news_duplicates += 1;
            continue;
        }
        let mut sentences = split_sentences(&record.text);
        sentences.truncate(config.max_news_sentences);
        if sentences.is_empty() {
            report.news_dropped_empty += 1;
            continue;
        }
        kept_news.push((record.id, record.label, sentences));
    }
    if kept_news.is_empty() {
        return Err(DataError::MissingContent);
    }

    let mut users = BTreeMap::new();
    for record in user_records {
        if users.contains_key(&record.id) {
            report.user_duplicates += 1;
            continue;
        }
        users.insert(
            record.id.clone(),
            User {
                id: record.id,
                attributes: UserAttributes {
                    follower_count: record.followers,
                    friend_count: record.friends,
                    status_count: record.statuses,
                    verified: record.verified,
                },
            },
        );
    }

    let news_ids: BTreeSet<&str> = kept_news.iter().map(|(id, _, _)| id.as_str()).collect();
    let mut comment_seen = BTreeSet::new();
    let mut kept_comments = Vec::new();
    for record in comment_records {
        if !comment_seen.insert(record.id.clone()) {
            report.comment_duplicates += 1;
            continue;
        }
        if words(&record.text).is_empty() {
            report.comments_dropped_empty += 1;
            continue;
        }
        if !news_ids.contains(record.news_id.as_str()) || !users.contains_key(&record.user_id) {
            report.comments_dropped_dangling += 1;
            continue;
        }
        kept_comments.push(record);
    }

    let corpus = kept_news
        .iter()
        .flat_map(|(_, _, sentences)| sentences.iter().map(String::as_str))
        .chain(kept_comments.iter().map(|c| c.text.as_str()));
    let vocabulary = build_vocabulary(corpus, config.min_token_freq);

    let news: Vec<NewsItem> = kept_news
        .into_iter()
        .map(|(id, label, raw_sentences)| {
            let sentences = raw_sentences
                .iter()
                .map(|s| tokenize(s, &vocabulary, config.max_sentence_words))
                .collect();
            NewsItem {
                id,
                sentences,
                raw_sentences,
                label,
            }
        })
        .collect();

    let mut referenced_users = BTreeSet::new();
    let mut comments = BTreeMap::new();
    for record in kept_comments {
        referenced_users.insert(record.user_id.clone());
        comments.insert(
            record.id.clone(),
            Comment {
                tokens: tokenize(&record.text, &vocabulary, config.max_comment_words),
                raw_text: record.text,
                id: record.id,
                news_id: record.news_id,
                user_id: record.user_id,
                timestamp: record.timestamp,
                attributes: CommentAttributes {
                    like_count: record.likes,
                    retweet_count: record.retweets,
                    reply_count: record.replies,
                },
            },
        );
    }

    let before = users.len();
    users.retain(|id, _| referenced_users.contains(id));
    report.users_dropped_unreferenced = before - users.len();

    report.news_retained = news.len();
    report.news_fake = news.iter().filter(|n| n.label == Label::Fake).count();
    report.news_true = news.iter().filter(|n| n.label == Label::True).count();
    report.comments_retained = comments.len();
    report.comment_user_edges = comments.len();
    report.users_retained = users.len();
    report.vocabulary_size = vocabulary.len();

    Ok((
        Dataset {
            news,
            comments,
            users,
            vocabulary,
        },
        report,
    ))
}

/// Writes a dataset back to the ingestion format. Parsing the output with the
/// same config yields an equal dataset.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let mut news_out = Vec::new();
    for item in &dataset.news {
        let record = NewsRecord {
            id: item.id.clone(),
            text: item.raw_sentences.join(" "),
            label: item.label,
        };
        serde_json::to_writer(&mut news_out, &record).expect("record serializes");
        news_out.push(b'\n');
    }
    fs::write(dir.join("news.jsonl"), news_out)?;

    let mut comments_out = Vec::new();
    for comment in dataset.comments.values() {
        let record = CommentRecord {
            id: comment.id.clone(),
            news_id: comment.news_id.clone(),
            user_id: comment.user_id.clone(),
            text: comment.raw_text.clone(),
            timestamp: comment.timestamp,
            likes: comment.attributes.like_count,
            retweets: comment.attributes.retweet_count,
            replies: comment.attributes.reply_count,
        };
        serde_json::to_writer(&mut comments_out, &record).expect("record serializes");
        comments_out.push(b'\n');
    }
    fs::write(dir.join("comments.jsonl"), comments_out)?;

    let mut users_out = Vec::new();
    for user in dataset.users.values() {
        let record = UserRecord {
            id: user.id.clone(),
            followers: user.attributes.follower_count,
            friends: user.attributes.friend_count,
            statuses: user.attributes.status_count,
            verified: user.attributes.verified,
        };
        serde_json::to_writer(&mut users_out, &record).expect("record serializes");
        users_out.push(b'\n');
    }
    fs::write(dir.join("users.jsonl"), users_out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write_corpus(news: &[&str], comments: &[&str], users: &[&str]) -> TempDir {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("news.jsonl"), news.join("\n")).unwrap();
        fs::write(dir.path().join("comments.jsonl"), comments.join("\n")).unwrap();
        fs::write(dir.path().join("users.jsonl"), users.join("\n")).unwrap();
        dir
    }

    fn sample_corpus() -> TempDir {
        write_corpus(
            &[
                r#"{"id":"n1","text":"The quick brown fox jumps. The lazy dog sleeps.","label":"fake"}"#,
                r#"{"id":"n2","text":"Markets rallied today. The quick rally surprised everyone.","label":"true"}"#,
            ],
            &[
                r#"{"id":"c1","news_id":"n1","user_id":"u1","text":"total nonsense","timestamp":100,"likes":5,"retweets":0,"replies":150}"#,
                r#"{"id":"c2","news_id":"n1","user_id":"u2","text":"   ","timestamp":200,"likes":0,"retweets":0,"replies":0}"#,
                r#"{"id":"c3","news_id":"n2","user_id":"u2","text":"seems legit to me","timestamp":300,"likes":2,"retweets":1,"replies":0}"#,
            ],
            &[
                r#"{"id":"u1","followers":10,"friends":0,"statuses":3,"verified":false}"#,
                r#"{"id":"u2","followers":100000,"friends":50,"statuses":9999,"verified":true}"#,
            ],
        )
    }

    #[test]
    fn whitespace_comment_is_dropped_and_counted() {
        let dir = sample_corpus();
        let (dataset, report) = parse_dataset(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(dataset.news.len(), 2);
        assert_eq!(dataset.comments.len(), 2);
        assert_eq!(dataset.users.len(), 2);
        assert_eq!(report.comments_dropped_empty, 1);
        assert_eq!(report.comments_retained, 2);
        assert_eq!(report.comment_user_edges, 2);
        assert!(dataset.integrity_violations().is_empty());
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = TempDir::new().unwrap();
        assert!(matches!(
            parse_dataset(dir.path(), &IngestConfig::default()),
            Err(DataError::MissingFile(_))
        ));
    }

    #[test]
    fn empty_news_file_is_missing_content() {
        let dir = write_corpus(&[], &[], &[]);
        assert!(matches!(
            parse_dataset(dir.path(), &IngestConfig::default()),
            Err(DataError::MissingContent)
        ));
    }

    #[test]
    fn majority_malformed_lines_abort() {
        let dir = write_corpus(
            &[
                r#"{"id":"n1","text":"Good record here.","label":"fake"}"#,
                "not json at all",
                "{broken",
            ],
            &[],
            &[],
        );
        match parse_dataset(dir.path(), &IngestConfig::default()) {
            Err(DataError::TooManyMalformed {
                file,
                malformed,
                total,
                line,
                ..
            }) => {
                assert_eq!(file, "news.jsonl");
                assert_eq!(malformed, 2);
                assert_eq!(total, 3);
                assert_eq!(line, 2);
            }
            other => panic!("expected TooManyMalformed, got {other:?}"),
        }
    }

    #[test]
    fn minority_malformed_lines_are_skipped_and_counted() {
        let dir = write_corpus(
            &[
                r#"{"id":"n1","text":"First good record.","label":"fake"}"#,
                r#"{"id":"n2","text":"Second good record.","label":"true"}"#,
                "{broken",
            ],
            &[],
            &[],
        );
        let (dataset, report) = parse_dataset(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(dataset.news.len(), 2);
        assert_eq!(report.news_malformed, 1);
        assert_eq!(report.news_lines, 3);
    }

    #[test]
    fn dangling_comments_and_unreferenced_users_are_dropped() {
        let dir = write_corpus(
            &[r#"{"id":"n1","text":"Only article.","label":"fake"}"#],
            &[
                r#"{"id":"c1","news_id":"n1","user_id":"u1","text":"fine","timestamp":1,"likes":0,"retweets":0,"replies":0}"#,
                r#"{"id":"c2","news_id":"ghost","user_id":"u1","text":"fine","timestamp":2,"likes":0,"retweets":0,"replies":0}"#,
                r#"{"id":"c3","news_id":"n1","user_id":"ghost","text":"fine","timestamp":3,"likes":0,"retweets":0,"replies":0}"#,
            ],
            &[
                r#"{"id":"u1","followers":1,"friends":1,"statuses":1,"verified":false}"#,
                r#"{"id":"u2","followers":2,"friends":2,"statuses":2,"verified":true}"#,
            ],
        );
        let (dataset, report) = parse_dataset(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(dataset.comments.len(), 1);
        assert_eq!(report.comments_dropped_dangling, 2);
        assert_eq!(report.users_dropped_unreferenced, 1);
        assert_eq!(dataset.users.len(), 1);
    }

    #[test]
    fn duplicate_ids_keep_first_record() {
        let dir = write_corpus(
            &[
                r#"{"id":"n1","text":"Original text here.","label":"fake"}"#,
                r#"{"id":"n1","text":"Impostor text here.","label":"true"}"#,
            ],
            &[],
            &[],
        );
        let (dataset, report) = parse_dataset(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(dataset.news.len(), 1);
        assert_eq!(dataset.news[0].label, Label::Fake);
        assert_eq!(report.news_duplicates, 1);
    }

    #[test]
    fn negative_counts_are_rejected_as_malformed() {
        let dir = write_corpus(
            &[r#"{"id":"n1","text":"Fine article.","label":"true"}"#],
            &[
                r#"{"id":"c1","news_id":"n1","user_id":"u1","text":"ok","timestamp":1,"likes":-3,"retweets":0,"replies":0}"#,
                r#"{"id":"c2","news_id":"n1","user_id":"u1","text":"ok","timestamp":1,"likes":3,"retweets":0,"replies":0}"#,
                r#"{"id":"c3","news_id":"n1","user_id":"u1","text":"ok","timestamp":2,"likes":0,"retweets":0,"replies":0}"#,
            ],
            &[r#"{"id":"u1","followers":1,"friends":1,"statuses":1,"verified":false}"#],
        );
        let (dataset, report) = parse_dataset(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(report.comment_malformed, 1);
        assert_eq!(dataset.comments.len(), 2);
    }

    #[test]
    fn long_news_is_truncated_to_sentence_and_word_limits() {
        let text = (0..60)
            .map(|i| format!("Sentence number {i} has exactly six words."))
            .collect::<Vec<_>>()
            .join(" ");
        let line = serde_json::json!({"id": "n1", "text": text, "label": "fake"}).to_string();
        let dir = write_corpus(&[&line], &[], &[]);
        let config = IngestConfig {
            max_news_sentences: 50,
            max_sentence_words: 5,
            ..IngestConfig::default()
        };
        let (dataset, _) = parse_dataset(dir.path(), &config).unwrap();
        assert_eq!(dataset.news[0].sentences.len(), 50);
        assert!(dataset.news[0].sentences.iter().all(|s| s.len() == 5));
    }

    #[test]
    fn parse_serialize_parse_is_idempotent() {
        let dir = sample_corpus();
        let config = IngestConfig {
            min_token_freq: 1,
            ..IngestConfig::default()
        };
        let (first, _) = parse_dataset(dir.path(), &config).unwrap();

        let out = TempDir::new().unwrap();
        write_dataset(&first, out.path()).unwrap();
        let (second, report) = parse_dataset(out.path(), &config).unwrap();
        assert_eq!(first, second);
        assert_eq!(report.comments_dropped_empty, 0);
    }
}
