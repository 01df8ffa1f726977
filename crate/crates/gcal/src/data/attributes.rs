//! One-hot encoding of node attributes with logarithmic count buckets.

use super::{CommentAttributes, UserAttributes};

/// Buckets per numeric attribute: [0], [1,10), [10,100), [100,1k), [1k,10k),
/// [10k,100k), [100k,inf).
pub const BUCKETS_PER_COUNT: usize = 7;
/// followers, friends, statuses, plus two verified positions.
pub const USER_ATTR_DIM: usize = 3 * BUCKETS_PER_COUNT + 2;
/// likes, retweets, replies.
pub const COMMENT_ATTR_DIM: usize = 3 * BUCKETS_PER_COUNT;

/// Bucket index of a nonnegative count.
pub fn count_bucket(value: u64) -> usize {
    if value == 0 {
        return 0;
    }
    let mut bucket = 1;
    let mut threshold = 10u64;
    while bucket < BUCKETS_PER_COUNT - 1 && value >= threshold {
        bucket += 1;
        threshold = threshold.saturating_mul(10);
    }
    bucket
}

fn push_one_hot(out: &mut Vec<f64>, width: usize, active: usize) {
    debug_assert!(active < width);
    for i in 0..width {
        out.push(if i == active { 1.0 } else { 0.0 });
    }
}

/// 23-dimensional one-hot encoding of user attributes.
pub fn encode_user_attributes(attrs: &UserAttributes) -> Vec<f64> {
    let mut out = Vec::with_capacity(USER_ATTR_DIM);
    push_one_hot(&mut out, BUCKETS_PER_COUNT, count_bucket(attrs.follower_count));
    push_one_hot(&mut out, BUCKETS_PER_COUNT, count_bucket(attrs.friend_count));
    push_one_hot(&mut out, BUCKETS_PER_COUNT, count_bucket(attrs.status_count));
    push_one_hot(&mut out, 2, usize::from(attrs.verified));
    out
}

/// 21-dimensional one-hot encoding of comment attributes.
pub fn encode_comment_attributes(attrs: &CommentAttributes) -> Vec<f64> {
    let mut out = Vec::with_capacity(COMMENT_ATTR_DIM);
    push_one_hot(&mut out, BUCKETS_PER_COUNT, count_bucket(attrs.like_count));
    push_one_hot(&mut out, BUCKETS_PER_COUNT, count_bucket(attrs.retweet_count));
    push_one_hot(&mut out, BUCKETS_PER_COUNT, count_bucket(attrs.reply_count));
    out
}
