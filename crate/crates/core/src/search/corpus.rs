//! Local document corpus backing the mock search provider and page fetcher.
//!
//! A corpus is a directory holding HTML files and a `manifest.tsv`. Each
//! non-blank manifest line that does not start with `#` has tab-separated
//! fields:
//!
//! ```text
//! <url> <TAB> <title> <TAB> <keywords, comma separated> <TAB> <html file | -> [<TAB> <snippet>]
//! ```
//!
//! An html file of `-` marks a document whose fetch always fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusDocument {
    pub url: String,
    pub title: String,
    pub keywords: Vec<String>,
    /// `None` when the document is marked unreachable.
    pub html: Option<String>,
    pub snippet: String,
}

/// Documents keyed by URL.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: BTreeMap<String, CorpusDocument>,
}

impl Corpus {
    pub fn from_documents(documents: impl IntoIterator<Item = CorpusDocument>) -> Self {
        Self {
            documents: documents.into_iter().map(|d| (d.url.clone(), d)).collect(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let manifest = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest).map_err(|source| CorpusError::Io {
            path: manifest.clone(),
            source,
        })?;
        let mut documents = BTreeMap::new();
        for (index, line) in text.lines().enumerate() {
            let line_no = index + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CorpusError::Manifest {
                path: manifest.clone(),
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(err(format!("expected 4 or 5 tab-separated fields, found {}", fields.len())));
            }
            let url = fields[0].trim();
            if url::Url::parse(url).is_err() {
                return Err(err(format!("`{url}` is not an absolute URL")));
            }
            let keywords = fields[2]
                .split(',')
                .map(str::trim)
                .filter(|k| !k.is_empty())
                .map(str::to_owned)
                .collect();
            let html = match fields[3].trim() {
                "-" => None,
                file => {
                    let path = dir.join(file);
                    Some(std::fs::read_to_string(&path).map_err(|source| CorpusError::Io { path, source })?)
                }
            };
            let doc = CorpusDocument {
                url: url.to_owned(),
                title: fields[1].trim().to_owned(),
                keywords,
                html,
                snippet: fields.get(4).map(|s| s.trim().to_owned()).unwrap_or_default(),
            };
            if documents.insert(doc.url.clone(), doc).is_some() {
                return Err(err(format!("duplicate url `{url}`")));
            }
        }
        Ok(Self { documents })
    }

    pub fn get(&self, url: &str) -> Option<&CorpusDocument> {
        self.documents.get(url)
    }

    /// Documents in URL order.
    pub fn documents(&self) -> impl Iterator<Item = &CorpusDocument> {
        self.documents.values()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{3040}'..='\u{30ff}'
        | '\u{3400}'..='\u{4dbf}'
        | '\u{4e00}'..='\u{9fff}'
        | '\u{f900}'..='\u{faff}'
        | '\u{ac00}'..='\u{d7af}')
}

/// Lowercased alphanumeric runs; every CJK character is its own token.
pub fn match_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Number of distinct keywords whose token sequence occurs contiguously in
/// the query's token sequence.
pub fn overlap_score(query_tokens: &[String], keywords: &[String]) -> usize {
    let mut seen: Vec<Vec<String>> = Vec::new();
    for keyword in keywords {
        let kw = match_tokens(keyword);
        if kw.is_empty() || seen.contains(&kw) {
            continue;
        }
        if query_tokens.windows(kw.len()).any(|w| w == kw.as_slice()) {
            seen.push(kw);
        }
    }
    seen.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_split_latin_and_cjk() {
        assert_eq!(match_tokens("Who's the LEAD actor?"), vec!["who", "s", "the", "lead", "actor"]);
        assert_eq!(match_tokens("庆余年2 主演"), vec!["庆", "余", "年", "2", "主", "演"]);
    }

    #[test]
    fn overlap_counts_distinct_contiguous_keywords() {
        let q = match_tokens("lead actor of joy of life season 2");
        let kws = |k: &[&str]| k.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(overlap_score(&q, &kws(&["joy of life", "lead actor", "Lead Actor", "cast"])), 2);
        assert_eq!(overlap_score(&q, &kws(&["life joy"])), 0);
        let zh = match_tokens("庆余年第二季的主演是谁");
        assert_eq!(overlap_score(&zh, &kws(&["庆余年", "主演", "导演"])), 2);
    }

    #[test]
    fn manifest_loading_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.html"), "<p>A</p>").unwrap();
        std::fs::write(
            dir.path().join(MANIFEST_FILE),
            "# comment\nhttps://a.example/\tA\tone, two\ta.html\tsnip\n\nhttps://b.example/\tB\tthree\t-\n",
        )
        .unwrap();
        let corpus = Corpus::load(dir.path()).unwrap();
        assert_eq!(corpus.len(), 2);
        let a = corpus.get("https://a.example/").unwrap();
        assert_eq!(a.keywords, vec!["one", "two"]);
        assert_eq!(a.html.as_deref(), Some("<p>A</p>"));
        assert_eq!(a.snippet, "snip");
        assert!(corpus.get("https://b.example/").unwrap().html.is_none());

        std::fs::write(dir.path().join(MANIFEST_FILE), "https://a.example/\tA\n").unwrap();
        let err = Corpus::load(dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::Manifest { line: 1, .. }), "{err}");

        std::fs::write(dir.path().join(MANIFEST_FILE), "x\n\nnot-a-url\tA\tk\t-\n").unwrap();
        assert!(matches!(Corpus::load(dir.path()), Err(CorpusError::Manifest { line: 1, .. })));
    }
}
