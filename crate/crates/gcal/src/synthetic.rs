//! Seeded synthetic corpora with planted label signals.
//!
//! Fake news carry marker tokens in their content and comments (and, for the
//! split-signal variant, bot-like commenter attributes), giving a learnable
//! ground truth for desk-scale experiments and explanation scoring.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    build_vocabulary, tokenize, Comment, CommentAttributes, Dataset, Label, NewsItem, User,
    UserAttributes,
};

/// Token planted in the content of fake news.
pub const CONTENT_MARKER: &str = "fabulism";
/// Token planted in comments under fake news.
pub const COMMENT_MARKER: &str = "hoaxery";

const FILLER: [&str; 40] = [
    "meeting", "garden", "reported", "council", "weather", "morning", "local", "bridge",
    "library", "season", "market", "players", "update", "traffic", "harvest", "museum",
    "opened", "school", "between", "resident", "festival", "planned", "quiet", "station",
    "coffee", "window", "agenda", "river", "nearby", "evening", "votes", "budget",
    "repairs", "painting", "crowd", "concert", "autumn", "street", "notice", "afternoon",
];

/// Signal groups a fake news item can belong to in the split-signal corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SignalGroup {
    Content,
    Comments,
    Users,
}

/// Shape of a generated corpus.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub news_count: usize,
    pub fake_count: usize,
    /// Inclusive range of sentences per news.
    pub sentences_range: (usize, usize),
    /// Inclusive range of words per sentence.
    pub words_range: (usize, usize),
    /// Inclusive range of comments per news.
    pub comments_range: (usize, usize),
    /// Sentences per fake news that receive the content marker.
    pub marked_sentences: usize,
    /// Comments per fake news that receive the comment marker.
    pub marked_comments: usize,
    /// Distribute the signal across content, comment, and user groups instead
    /// of planting every signal in every fake news.
    pub split_signal: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            news_count: 200,
            fake_count: 100,
            sentences_range: (6, 10),
            words_range: (5, 9),
            comments_range: (3, 6),
            marked_sentences: 5,
            marked_comments: 3,
            split_signal: false,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) {
        assert!(self.news_count >= 2, "need at least two news items");
        assert!(
            self.fake_count >= 1 && self.fake_count < self.news_count,
            "fake_count must leave room for true news"
        );
        for (name, (lo, hi)) in [
            ("sentences_range", self.sentences_range),
            ("words_range", self.words_range),
            ("comments_range", self.comments_range),
        ] {
            assert!(lo >= 1 && lo <= hi, "{name} must be a nonempty range");
        }
        assert!(
            self.marked_sentences >= 1 && self.marked_sentences <= self.sentences_range.0,
            "marked_sentences must fit in every fake news"
        );
        assert!(
            self.marked_comments >= 1 && self.marked_comments <= self.comments_range.0,
            "marked_comments must fit under every fake news"
        );
    }
}

/// Generates a corpus per `config`. Same config and seed give an identical
/// dataset.
pub fn generate(config: &SyntheticConfig) -> Dataset {
    config.validate();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let ordinary_pool = (config.news_count / 4).max(20);
    let mut users: Vec<User> = (0..ordinary_pool)
        .map(|i| User {
            id: format!("su{i:04}"),
            attributes: ordinary_user_attributes(&mut rng),
        })
        .collect();

    struct NewsPlan {
        label: Label,
        group: Option<SignalGroup>,
        sentences: Vec<String>,
    }

    let mut plans = Vec::with_capacity(config.news_count);
    for idx in 0..config.news_count {
        let label = if idx < config.fake_count {
            Label::Fake
        } else {
            Label::True
        };
        let group = match (label, config.split_signal) {
            (Label::True, _) => None,
            (Label::Fake, false) => Some(SignalGroup::Content),
            (Label::Fake, true) => Some(match idx % 3 {
                0 => SignalGroup::Content,
                1 => SignalGroup::Comments,
                _ => SignalGroup::Users,
            }),
        };

        let sentence_count = rng.gen_range(config.sentences_range.0..=config.sentences_range.1);
        let mut sentences: Vec<String> = (0..sentence_count)
            .map(|_| filler_sentence(&mut rng, config.words_range))
            .collect();
        if group == Some(SignalGroup::Content) {
            let mut slots: Vec<usize> = (0..sentence_count).collect();
            slots.shuffle(&mut rng);
            for &slot in slots.iter().take(config.marked_sentences) {
                plant_word(&mut rng, &mut sentences[slot], CONTENT_MARKER);
            }
        }
        plans.push(NewsPlan {
            label,
            group,
            sentences,
        });
    }

    struct CommentPlan {
        news_index: usize,
        user_id: String,
        text: String,
        timestamp: i64,
    }

    let mut comment_plans = Vec::new();
    let mut bot_counter = 0usize;
    for (news_index, plan) in plans.iter().enumerate() {
        let count = rng.gen_range(config.comments_range.0..=config.comments_range.1);
        let marked = if plan.group == Some(SignalGroup::Comments)
            || (plan.group == Some(SignalGroup::Content) && !config.split_signal)
        {
            config.marked_comments
        } else {
            0
        };
        let bots = if plan.group == Some(SignalGroup::Users) {
            config.marked_comments
        } else {
            0
        };
        for j in 0..count {
            let mut text = filler_sentence(&mut rng, (4, 8));
            if j < marked {
                plant_word(&mut rng, &mut text, COMMENT_MARKER);
            }
            let user_id = if j < bots {
                let id = format!("sb{bot_counter:04}");
                bot_counter += 1;
                users.push(User {
                    id: id.clone(),
                    attributes: bot_user_attributes(&mut rng),
                });
                id
            } else {
                users[rng.gen_range(0..ordinary_pool)].id.clone()
            };
            comment_plans.push(CommentPlan {
                news_index,
                user_id,
                text,
                timestamp: (news_index * 1000 + j * 10) as i64,
            });
        }
    }

    let texts: Vec<String> = plans
        .iter()
        .flat_map(|p| p.sentences.iter().cloned())
        .chain(comment_plans.iter().map(|c| c.text.clone()))
        .collect();
    let vocabulary = build_vocabulary(texts.iter(), 1);

    let news: Vec<NewsItem> = plans
        .iter()
        .enumerate()
        .map(|(idx, plan)| NewsItem {
            id: format!("sn{idx:04}"),
            sentences: plan
                .sentences
                .iter()
                .map(|s| tokenize(s, &vocabulary, 50))
                .collect(),
            raw_sentences: plan.sentences.clone(),
            label: plan.label,
        })
        .collect();

    let comments = comment_plans
        .iter()
        .enumerate()
        .map(|(idx, plan)| {
            let comment = Comment {
                id: format!("sc{idx:06}"),
                news_id: news[plan.news_index].id.clone(),
                user_id: plan.user_id.clone(),
                tokens: tokenize(&plan.text, &vocabulary, 20),
                raw_text: plan.text.clone(),
                timestamp: plan.timestamp,
                attributes: CommentAttributes {
                    like_count: rng.gen_range(0..50),
                    retweet_count: rng.gen_range(0..20),
                    reply_count: rng.gen_range(0..10),
                },
            };
            (comment.id.clone(), comment)
        })
        .collect();

    let users = users.into_iter().map(|u| (u.id.clone(), u)).collect();

    let dataset = Dataset {
        news,
        comments,
        users,
        vocabulary,
    };
    debug_assert!(dataset.integrity_violations().is_empty());
    dataset
}

fn filler_sentence(rng: &mut ChaCha8Rng, words_range: (usize, usize)) -> String {
    let count = rng.gen_range(words_range.0..=words_range.1);
    let mut words: Vec<&str> = (0..count)
        .map(|_| FILLER[rng.gen_range(0..FILLER.len())])
        .collect();
    words[0] = FILLER[rng.gen_range(0..FILLER.len())];
    let mut text = words.join(" ");
    text.push('.');
    text
}

fn plant_word(rng: &mut ChaCha8Rng, sentence: &mut String, marker: &str) {
    let mut words: Vec<String> = crate::data::words(sentence);
    let slot = rng.gen_range(0..words.len());
    words[slot] = marker.to_string();
    let mut text = words.join(" ");
    text.push('.');
    *sentence = text;
}

fn ordinary_user_attributes(rng: &mut ChaCha8Rng) -> UserAttributes {
    UserAttributes {
        follower_count: rng.gen_range(100..10_000),
        friend_count: rng.gen_range(50..3_000),
        status_count: rng.gen_range(200..10_000),
        verified: rng.gen_bool(0.4),
    }
}

fn bot_user_attributes(rng: &mut ChaCha8Rng) -> UserAttributes {
    UserAttributes {
        follower_count: rng.gen_range(0..3),
        friend_count: rng.gen_range(0..2),
        status_count: rng.gen_range(80_000..120_000),
        verified: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marker_id(dataset: &Dataset, marker: &str) -> u32 {
        let id = dataset.vocabulary.id(marker);
        assert_ne!(id, crate::data::UNK, "marker must be in vocabulary");
        id
    }

    fn content_marked(dataset: &Dataset, news: &NewsItem) -> usize {
        let id = marker_id(dataset, CONTENT_MARKER);
        news.sentences
            .iter()
            .filter(|s| s.contains(&id))
            .count()
    }

    fn comment_marked(dataset: &Dataset, news: &NewsItem) -> usize {
        let id = marker_id(dataset, COMMENT_MARKER);
        dataset
            .comments_for_news(&news.id)
            .iter()
            .filter(|c| c.tokens.contains(&id))
            .count()
    }

    #[test]
    fn default_corpus_plants_both_markers_in_every_fake() {
        let config = SyntheticConfig::default();
        let dataset = generate(&config);
        assert_eq!(dataset.news.len(), 200);
        let fakes: Vec<_> = dataset
            .news
            .iter()
            .filter(|n| n.label == Label::Fake)
            .collect();
        assert_eq!(fakes.len(), 100);
        for news in &dataset.news {
            match news.label {
                Label::Fake => {
                    assert_eq!(content_marked(&dataset, news), config.marked_sentences);
                    assert!(comment_marked(&dataset, news) >= config.marked_comments);
                }
                Label::True => {
                    assert_eq!(content_marked(&dataset, news), 0);
                    assert_eq!(comment_marked(&dataset, news), 0);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let config = SyntheticConfig::default();
        assert_eq!(generate(&config), generate(&config));
        let other = SyntheticConfig {
            seed: 8,
            ..config.clone()
        };
        assert_ne!(generate(&config), generate(&other));
    }

    #[test]
    fn referential_integrity_holds() {
        let dataset = generate(&SyntheticConfig::default());
        assert!(dataset.integrity_violations().is_empty());
        let split = generate(&SyntheticConfig {
            split_signal: true,
            ..SyntheticConfig::default()
        });
        assert!(split.integrity_violations().is_empty());
    }

    #[test]
    fn split_signal_distributes_groups() {
        let config = SyntheticConfig {
            split_signal: true,
            ..SyntheticConfig::default()
        };
        let dataset = generate(&config);
        let mut content_group = 0;
        let mut comment_group = 0;
        let mut user_group = 0;
        for news in dataset.news.iter().filter(|n| n.label == Label::Fake) {
            let content = content_marked(&dataset, news);
            let comments = comment_marked(&dataset, news);
            let bots = dataset
                .comments_for_news(&news.id)
                .iter()
                .filter(|c| {
                    let user = &dataset.users[&c.user_id];
                    user.attributes.status_count >= 80_000 && user.attributes.follower_count < 3
                })
                .count();
            match (content > 0, comments > 0, bots > 0) {
                (true, false, false) => content_group += 1,
                (false, true, false) => comment_group += 1,
                (false, false, true) => {
                    assert!(bots >= config.marked_comments);
                    user_group += 1;
                }
                other => panic!("fake news {} has mixed signals {:?}", news.id, other),
            }
        }
        assert_eq!(content_group + comment_group + user_group, 100);
        assert!(content_group >= 30 && comment_group >= 30 && user_group >= 30);
        for news in dataset.news.iter().filter(|n| n.label == Label::True) {
            assert_eq!(content_marked(&dataset, news), 0);
            assert_eq!(comment_marked(&dataset, news), 0);
        }
    }

    #[test]
    fn shape_ranges_are_respected() {
        let config = SyntheticConfig::default();
        let dataset = generate(&config);
        for news in &dataset.news {
            let n = news.sentences.len();
            assert!(n >= config.sentences_range.0 && n <= config.sentences_range.1);
            for sentence in &news.sentences {
                assert!(sentence.len() <= config.words_range.1);
                assert!(!sentence.is_empty());
            }
            let comments = dataset.comments_for_news(&news.id);
            assert!(
                comments.len() >= config.comments_range.0
                    && comments.len() <= config.comments_range.1
            );
        }
    }

    #[test]
    fn markers_are_single_known_tokens() {
        let dataset = generate(&SyntheticConfig::default());
        assert!(dataset.vocabulary.contains(CONTENT_MARKER));
        assert!(dataset.vocabulary.contains(COMMENT_MARKER));
        assert!(!FILLER.contains(&CONTENT_MARKER));
        assert!(!FILLER.contains(&COMMENT_MARKER));
    }

    #[test]
    fn ordinary_users_comment_across_both_labels() {
        let dataset = generate(&SyntheticConfig::default());
        let mut on_fake = std::collections::BTreeSet::new();
        let mut on_true = std::collections::BTreeSet::new();
        for comment in dataset.comments.values() {
            let news = dataset.news_by_id(&comment.news_id).unwrap();
            match news.label {
                Label::Fake => on_fake.insert(comment.user_id.clone()),
                Label::True => on_true.insert(comment.user_id.clone()),
            };
        }
        let both = on_fake.intersection(&on_true).count();
        assert!(both >= 10, "user pool should be shared, got {both}");
    }
}
