//! Token estimation and prompt-budget truncation.

/// Appended to any text shortened by [`truncate_to_tokens`].
pub const TRUNCATION_MARKER: &str = "…[truncated]";

/// Estimates how many model tokens a piece of text costs.
///
/// Implementations must be monotone: a prefix never costs more than the
/// whole string.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// One token per four bytes of UTF-8, rounded up.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenizer;

impl TokenEstimator for ApproxTokenizer {
    fn estimate(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    ApproxTokenizer.estimate(text)
}

/// Shortens `text` so that it costs at most `limit` tokens under the
/// default estimator.
pub fn truncate_to_tokens(text: &str, limit: usize) -> String {
    truncate_with(&ApproxTokenizer, text, limit)
}

/// Like [`truncate_to_tokens`] with a caller-supplied estimator.
///
/// The longest char-boundary prefix that still fits together with
/// [`TRUNCATION_MARKER`] is kept. When even the bare marker exceeds the
/// limit the result is empty.
pub fn truncate_with(estimator: &dyn TokenEstimator, text: &str, limit: usize) -> String {
    if estimator.estimate(text) <= limit {
        return text.to_string();
    }
    if estimator.estimate(TRUNCATION_MARKER) > limit {
        return String::new();
    }
    let boundaries: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let fits = |end: usize| {
        let mut candidate = String::with_capacity(end + TRUNCATION_MARKER.len());
        candidate.push_str(&text[..end]);
        candidate.push_str(TRUNCATION_MARKER);
        estimator.estimate(&candidate) <= limit
    };
    // boundaries[0] == 0 always fits (checked above); find the last one that does.
    let (mut lo, mut hi) = (0usize, boundaries.len() - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if fits(boundaries[mid]) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    format!("{}{}", &text[..boundaries[lo]], TRUNCATION_MARKER)
}
