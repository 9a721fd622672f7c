//! Annotated corpora, noun-phrase chunks and coordinate-term lists.
//!
//! Corpora arrive pre-tokenized and POS-tagged (optionally with dependency
//! heads) in a JSON-lines interchange format, see [`load_corpus`].

mod chunk;
mod io;
mod lists;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use chunk::{chunk_nps, chunk_spans};
pub use io::{load_corpus, parse_corpus, write_corpus};
pub use lists::extract_coord_lists;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub text: String,
    pub pos: String,
    /// 1-based index of the dependency parent, 0 for the root.
    pub head: Option<usize>,
    pub deplabel: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub section_title: String,
}

impl Sentence {
    /// Builds a sentence from `(text, pos)` pairs without dependency annotations.
    pub fn from_tagged<S: AsRef<str>>(section_title: &str, tagged: &[(S, S)]) -> Self {
        let tokens = tagged
            .iter()
            .enumerate()
            .map(|(i, (t, p))| Token {
                index: i + 1,
                text: t.as_ref().to_string(),
                pos: p.as_ref().to_string(),
                head: None,
                deplabel: None,
            })
            .collect();
        Sentence {
            tokens,
            section_title: section_title.to_string(),
        }
    }

    /// Parses whitespace separated `text/POS` items, e.g. `"the/DT speech/NN"`.
    pub fn from_slashed(section_title: &str, text: &str) -> Self {
        let tagged: Vec<(&str, &str)> = text
            .split_whitespace()
            .map(|item| item.rsplit_once('/').unwrap_or((item, "")))
            .collect();
        Sentence::from_tagged(section_title, &tagged)
    }

    /// True when every token carries a dependency head.
    pub fn has_dependencies(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|t| t.head.is_some())
    }

    /// Token at a 1-based index.
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Drug,
    Disease,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Drug => "drug",
            Domain::Disease => "disease",
        }
    }

    /// Relations whose subjects live in this domain.
    pub fn relations(self) -> &'static [crate::Relation] {
        match self {
            Domain::Drug => &crate::Relation::DRUG,
            Domain::Disease => &crate::Relation::DISEASE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub subject: String,
    pub domain: Domain,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Target,
    Structured,
}

impl CorpusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusKind::Target => "target",
            CorpusKind::Structured => "structured",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "target" => Some(CorpusKind::Target),
            "structured" => Some(CorpusKind::Structured),
            _ => None,
        }
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub kind: CorpusKind,
}

/// 0-based (document, sentence) position inside a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SentenceRef {
    pub doc: usize,
    pub sentence: usize,
}

impl Corpus {
    pub fn sentence(&self, r: SentenceRef) -> Option<&Sentence> {
        self.documents.get(r.doc)?.sentences.get(r.sentence)
    }

    /// All sentence references in document order.
    pub fn sentence_refs(&self) -> impl Iterator<Item = SentenceRef> + '_ {
        self.documents
            .iter()
            .enumerate()
            .flat_map(|(d, doc)| (0..doc.sentences.len()).map(move |s| SentenceRef { doc: d, sentence: s }))
    }

    /// Every chunked mention of the corpus, in document order.
    pub fn mentions(&self) -> Vec<Mention> {
        self.sentence_refs()
            .flat_map(|r| chunk_nps(&self.documents[r.doc], r))
            .collect()
    }

    /// Every coordinate list (singletons included), in document order.
    pub fn coord_lists(&self) -> Vec<CoordList> {
        self.sentence_refs()
            .flat_map(|r| extract_coord_lists(&self.documents[r.doc], r))
            .collect()
    }
}

/// Inclusive 1-based token span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub doc_id: String,
    pub subject: String,
    pub sentence_ref: SentenceRef,
    pub span: Span,
    pub surface: String,
    pub normalized: String,
}

impl Mention {
    /// The last token of the chunk, used as its head.
    pub fn head_index(&self) -> usize {
        self.span.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordList {
    pub items: Vec<Mention>,
    pub is_singleton: bool,
    pub sentence_ref: SentenceRef,
    /// Position of the list among the lists of its sentence.
    pub ordinal: usize,
}

impl CoordList {
    pub fn singleton(mention: Mention, ordinal: usize) -> Self {
        CoordList {
            sentence_ref: mention.sentence_ref,
            items: vec![mention],
            is_singleton: true,
            ordinal,
        }
    }

    /// Token range covered by the whole list, separators included.
    pub fn span(&self) -> Span {
        Span {
            start: self.items.first().map_or(0, |m| m.span.start),
            end: self.items.last().map_or(0, |m| m.span.end),
        }
    }

    /// Head of the list: the last token of its last item.
    pub fn head_index(&self) -> usize {
        self.span().end
    }
}

/// Lowercased form used for all string keys.
pub fn normalize(s: &str) -> String {
    s.to_lowercase()
}
