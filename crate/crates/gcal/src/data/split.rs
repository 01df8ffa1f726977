//! Seeded, label-stratified train/validation splitting.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;

/// Splits news into train and validation sets, stratified by label.
///
/// News are shuffled by a seeded permutation; each label stratum contributes
/// `floor(count * train_fraction)` items to the train side. Comments follow
/// their news, users follow their comments, and both halves share the full
/// vocabulary so token ids stay aligned.
pub fn split_dataset(dataset: &Dataset, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must be in (0, 1)"
    );

    let mut label_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for news in &dataset.news {
        *label_counts.entry(news.label.index()).or_insert(0) += 1;
    }
    let mut quota: BTreeMap<usize, usize> = label_counts
        .iter()
        .map(|(&label, &count)| (label, (count as f64 * train_fraction).floor() as usize))
        .collect();

    let mut order: Vec<usize> = (0..dataset.news.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut train_indices = Vec::new();
    let mut val_indices = Vec::new();
    for idx in order {
        let label = dataset.news[idx].label.index();
        let remaining = quota.get_mut(&label).expect("label seen during counting");
        if *remaining > 0 {
            *remaining -= 1;
            train_indices.push(idx);
        } else {
            val_indices.push(idx);
        }
    }

    (
        subset(dataset, &train_indices),
        subset(dataset, &val_indices),
    )
}

fn subset(dataset: &Dataset, indices: &[usize]) -> Dataset {
    let news: Vec<_> = indices.iter().map(|&i| dataset.news[i].clone()).collect();
    let news_ids: BTreeSet<&str> = news.iter().map(|n| n.id.as_str()).collect();
    let comments: BTreeMap<_, _> = dataset
        .comments
        .iter()
        .filter(|(_, c)| news_ids.contains(c.news_id.as_str()))
        .map(|(id, c)| (id.clone(), c.clone()))
        .collect();
    let referenced: BTreeSet<&str> = comments.values().map(|c| c.user_id.as_str()).collect();
    let users: BTreeMap<_, _> = dataset
        .users
        .iter()
        .filter(|(id, _)| referenced.contains(id.as_str()))
        .map(|(id, u)| (id.clone(), u.clone()))
        .collect();
    Dataset {
        news,
        comments,
        users,
        vocabulary: dataset.vocabulary.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, NewsItem, Vocabulary};

    fn synthetic_news(fake: usize, true_: usize) -> Dataset {
        let mut news = Vec::new();
        for i in 0..fake {
            news.push(NewsItem {
                id: format!("f{i}"),
                sentences: vec![vec![1]],
                raw_sentences: vec!["x.".to_string()],
                label: Label::Fake,
            });
        }
        for i in 0..true_ {
            news.push(NewsItem {
                id: format!("t{i}"),
                sentences: vec![vec![1]],
                raw_sentences: vec!["x.".to_string()],
                label: Label::True,
            });
        }
        Dataset {
            news,
            comments: BTreeMap::new(),
            users: BTreeMap::new(),
            vocabulary: Vocabulary::with_specials(),
        }
    }

    fn label_count(d: &Dataset, label: Label) -> usize {
        d.news.iter().filter(|n| n.label == label).count()
    }

    #[test]
    fn politifact_sized_split_counts() {
        let dataset = synthetic_news(237, 152);
        let (train, val) = split_dataset(&dataset, 0.75, 42);
        assert_eq!(train.news.len(), 291);
        assert_eq!(val.news.len(), 98);
        assert_eq!(label_count(&train, Label::Fake), 177);
        assert_eq!(label_count(&train, Label::True), 114);
    }

    #[test]
    fn tiny_split_is_perfectly_stratified() {
        let dataset = synthetic_news(2, 2);
        for seed in 0..10 {
            let (train, val) = split_dataset(&dataset, 0.5, seed);
            assert_eq!(label_count(&train, Label::Fake), 1);
            assert_eq!(label_count(&train, Label::True), 1);
            assert_eq!(label_count(&val, Label::Fake), 1);
            assert_eq!(label_count(&val, Label::True), 1);
        }
    }

    #[test]
    fn same_seed_same_split() {
        let dataset = synthetic_news(30, 20);
        let (t1, v1) = split_dataset(&dataset, 0.75, 7);
        let (t2, v2) = split_dataset(&dataset, 0.75, 7);
        assert_eq!(t1, t2);
        assert_eq!(v1, v2);
    }

    #[test]
    fn splits_partition_the_news_set() {
        let dataset = synthetic_news(13, 9);
        for seed in [0, 1, 99] {
            let (train, val) = split_dataset(&dataset, 0.6, seed);
            let train_ids: BTreeSet<_> = train.news.iter().map(|n| n.id.clone()).collect();
            let val_ids: BTreeSet<_> = val.news.iter().map(|n| n.id.clone()).collect();
            assert!(train_ids.is_disjoint(&val_ids));
            let all: BTreeSet<_> = dataset.news.iter().map(|n| n.id.clone()).collect();
            let union: BTreeSet<_> = train_ids.union(&val_ids).cloned().collect();
            assert_eq!(union, all);
        }
    }

    #[test]
    fn comments_and_users_follow_their_news() {
        use crate::data::{Comment, CommentAttributes, User, UserAttributes};
        let mut dataset = synthetic_news(2, 2);
        for (i, news_idx) in [0usize, 1, 2, 3].iter().enumerate() {
            let news_id = dataset.news[*news_idx].id.clone();
            dataset.comments.insert(
                format!("c{i}"),
                Comment {
                    id: format!("c{i}"),
                    news_id,
                    user_id: format!("u{i}"),
                    tokens: vec![1],
                    raw_text: "x".to_string(),
                    timestamp: i as i64,
                    attributes: CommentAttributes {
                        like_count: 0,
                        retweet_count: 0,
                        reply_count: 0,
                    },
                },
            );
            dataset.users.insert(
                format!("u{i}"),
                User {
                    id: format!("u{i}"),
                    attributes: UserAttributes {
                        follower_count: 0,
                        friend_count: 0,
                        status_count: 0,
                        verified: false,
                    },
                },
            );
        }
        let (train, val) = split_dataset(&dataset, 0.5, 3);
        for half in [&train, &val] {
            assert!(half.integrity_violations().is_empty());
            assert_eq!(half.comments.len(), 2);
            assert_eq!(half.users.len(), 2);
        }
    }
}
