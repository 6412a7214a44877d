//! Search engine result pages.

mod corpus;
mod serpapi;

use std::collections::HashSet;

use async_trait::async_trait;
use thiserror::Error;

use crate::model::SerpEntry;

pub use corpus::{match_tokens, overlap_score, Corpus, CorpusDocument, CorpusError, MANIFEST_FILE};
pub use serpapi::{SerpApiProvider, SerpApiSettings};

pub const DEFAULT_MAX_RESULTS: usize = 10;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("search backend unavailable: {0}")]
    Unavailable(String),
}

#[async_trait]
pub trait SearchProvider: Send + Sync {
    /// At most `max_results` entries, ranked contiguously from 1.
    async fn search(&self, query: &str, max_results: usize) -> Result<Vec<SerpEntry>, SearchError>;
}

/// Drops entries with invalid or duplicate links, caps the list and
/// renumbers ranks from 1.
pub fn normalize_results(entries: impl IntoIterator<Item = SerpEntry>, max_results: usize) -> Vec<SerpEntry> {
    let mut seen = HashSet::new();
    entries
        .into_iter()
        .filter(|e| url::Url::parse(&e.link).is_ok() && seen.insert(e.link.clone()))
        .take(max_results)
        .enumerate()
        .map(|(i, e)| SerpEntry { rank: i + 1, ..e })
        .collect()
}

/// Deterministic search over a [`Corpus`].
///
/// Ranking: number of document keywords found in the query, descending,
/// ties broken by URL ascending. Documents with no matching keyword are not
/// returned.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    corpus: std::sync::Arc<Corpus>,
}

impl CorpusIndex {
    pub fn new(corpus: std::sync::Arc<Corpus>) -> Self {
        Self { corpus }
    }

    pub fn rank(&self, query: &str) -> Vec<(usize, &crate::search::CorpusDocument)> {
        let tokens = match_tokens(query);
        let mut scored: Vec<_> = self
            .corpus
            .documents()
            .map(|d| (overlap_score(&tokens, &d.keywords), d))
            .filter(|(score, _)| *score > 0)
            .collect();
        // documents() is already URL-ordered; the sort is stable.
        scored.sort_by_key(|s| std::cmp::Reverse(s.0));
        scored
    }
}

#[async_trait]
impl SearchProvider for CorpusIndex {
    async fn search(&self, query: &str, max_results: usize) -> Result<Vec<SerpEntry>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let entries = self.rank(query).into_iter().map(|(_, d)| SerpEntry {
            rank: 0,
            title: d.title.clone(),
            link: d.url.clone(),
            snippet: d.snippet.clone(),
        });
        Ok(normalize_results(entries, max_results))
    }
}

/// A provider that always fails, for exercising error paths.
#[derive(Debug, Clone, Default)]
pub struct UnavailableSearch;

#[async_trait]
impl SearchProvider for UnavailableSearch {
    async fn search(&self, _query: &str, _max_results: usize) -> Result<Vec<SerpEntry>, SearchError> {
        Err(SearchError::Unavailable("search disabled".into()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::validate_serp;

    fn doc(url: &str, keywords: &[&str]) -> CorpusDocument {
        CorpusDocument {
            url: url.into(),
            title: format!("title {url}"),
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            html: Some(String::new()),
            snippet: String::new(),
        }
    }

    fn index(docs: Vec<CorpusDocument>) -> CorpusIndex {
        CorpusIndex::new(Arc::new(Corpus::from_documents(docs)))
    }

    #[tokio::test]
    async fn twelve_matches_capped_at_ten() {
        let docs = (0..12).map(|i| doc(&format!("https://d{i:02}.example/"), &["rust"])).collect();
        let results = index(docs).search("rust news", DEFAULT_MAX_RESULTS).await.unwrap();
        assert_eq!(results.len(), 10);
        assert_eq!(results.iter().map(|e| e.rank).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
        assert!(validate_serp(&results).is_ok());
    }

    #[tokio::test]
    async fn no_match_is_empty() {
        let results = index(vec![doc("https://a.example/", &["rust"])]).search("python", 10).await.unwrap();
        assert!(results.is_empty());
    }

    #[tokio::test]
    async fn three_matches_ordered_by_score_then_url() {
        // Query "joy of life season 2 cast":
        //   c: {joy of life, season 2, cast} -> 3
        //   b: {joy of life}                 -> 1
        //   a: {cast}                        -> 1   (a < b by URL)
        //   d: {novel}                       -> 0   (excluded)
        let idx = index(vec![
            doc("https://b.example/", &["joy of life", "novel"]),
            doc("https://a.example/", &["cast"]),
            doc("https://c.example/", &["joy of life", "season 2", "cast"]),
            doc("https://d.example/", &["novel"]),
        ]);
        let results = idx.search("joy of life season 2 cast", 10).await.unwrap();
        let links: Vec<_> = results.iter().map(|e| e.link.as_str()).collect();
        assert_eq!(links, vec!["https://c.example/", "https://a.example/", "https://b.example/"]);
        assert_eq!(results.iter().map(|e| e.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[tokio::test]
    async fn empty_query_is_rejected() {
        assert_eq!(index(vec![]).search(" ", 10).await, Err(SearchError::EmptyQuery));
    }

    #[test]
    fn normalize_dedupes_and_renumbers() {
        let e = |rank, link: &str| SerpEntry { rank, title: "t".into(), link: link.into(), snippet: String::new() };
        let out = normalize_results(
            vec![e(1, "https://a.example/"), e(2, "bad link"), e(3, "https://a.example/"), e(4, "https://b.example/")],
            10,
        );
        assert_eq!(out, vec![e(1, "https://a.example/"), e(2, "https://b.example/")]);
    }

    proptest::proptest! {
        #[test]
        fn mock_search_is_deterministic_and_well_formed(
            kw_sets in proptest::collection::vec(proptest::collection::vec("[a-d]{1,2}", 0..4), 0..15),
            query in "[a-d ]{0,20}",
            max in 1usize..12,
        ) {
            let docs = kw_sets.iter().enumerate().map(|(i, k)| {
                let k: Vec<&str> = k.iter().map(String::as_str).collect();
                doc(&format!("https://d{i}.example/"), &k)
            }).collect();
            let idx = index(docs);
            let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
            if query.trim().is_empty() {
                return Ok(());
            }
            let a = rt.block_on(idx.search(&query, max)).unwrap();
            let b = rt.block_on(idx.search(&query, max)).unwrap();
            proptest::prop_assert_eq!(&a, &b);
            proptest::prop_assert!(a.len() <= max);
            proptest::prop_assert!(validate_serp(&a).is_ok());
            let links: HashSet<_> = a.iter().map(|e| &e.link).collect();
            proptest::prop_assert_eq!(links.len(), a.len());
        }
    }
}
