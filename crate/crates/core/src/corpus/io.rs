use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusKind, Document, Domain, Sentence, Token};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct WireToken {
    t: String,
    p: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct WireSentence {
    #[serde(default)]
    section: String,
    tokens: Vec<WireToken>,
}

#[derive(Serialize, Deserialize)]
struct WireDocument {
    doc_id: String,
    subject: String,
    domain: String,
    sentences: Vec<WireSentence>,
}

/// Loads a JSON-lines corpus file and validates every record.
pub fn load_corpus(path: impl AsRef<Path>, kind: CorpusKind) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, kind, &path.display().to_string())
}

/// Parses corpus text; `origin` names the source in error messages.
pub fn parse_corpus(text: &str, kind: CorpusKind, origin: &str) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireDocument =
            serde_json::from_str(line).map_err(|e| Error::parse(origin, lineno, "record", e.to_string()))?;
        let doc = validate(wire, kind, origin, lineno)?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateDocument(doc.doc_id));
        }
        documents.push(doc);
    }
    Ok(Corpus { documents, kind })
}

fn validate(wire: WireDocument, kind: CorpusKind, origin: &str, line: usize) -> Result<Document> {
    let err = |field: &str, msg: String| Error::parse(origin, line, field, msg);
    if wire.doc_id.is_empty() {
        return Err(err("doc_id", "must be non-empty".into()));
    }
    if wire.subject.trim().is_empty() {
        return Err(err("subject", "must be non-empty".into()));
    }
    let domain = match wire.domain.as_str() {
        "drug" => Domain::Drug,
        "disease" => Domain::Disease,
        other => return Err(err("domain", format!("expected drug|disease, got `{other}`"))),
    };
    let mut sentences = Vec::with_capacity(wire.sentences.len());
    for (si, ws) in wire.sentences.into_iter().enumerate() {
        if ws.tokens.is_empty() {
            return Err(err(&format!("sentences[{si}].tokens"), "must be non-empty".into()));
        }
        if kind == CorpusKind::Structured && ws.section.trim().is_empty() {
            return Err(err(
                &format!("sentences[{si}].section"),
                "structured corpora need a section title on every sentence".into(),
            ));
        }
        let n = ws.tokens.len();
        let mut tokens = Vec::with_capacity(n);
        for (ti, wt) in ws.tokens.into_iter().enumerate() {
            let index = ti + 1;
            let head = match wt.h {
                None => None,
                Some(h) if h < 0 || h as usize > n => {
                    return Err(err(
                        &format!("sentences[{si}].tokens[{ti}].h"),
                        format!("head {h} outside 0..={n}"),
                    ))
                }
                Some(h) if h as usize == index => {
                    return Err(err(
                        &format!("sentences[{si}].tokens[{ti}].h"),
                        "token cannot be its own head".into(),
                    ))
                }
                Some(h) => Some(h as usize),
            };
            tokens.push(Token {
                index,
                text: wt.t,
                pos: wt.p,
                head,
                deplabel: wt.d,
            });
        }
        sentences.push(Sentence {
            tokens,
            section_title: ws.section,
        });
    }
    Ok(Document {
        doc_id: wire.doc_id,
        subject: wire.subject,
        domain,
        sentences,
    })
}

/// Writes a corpus in the interchange format, one document per line.
pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> std::io::Result<()> {
    for doc in &corpus.documents {
        let wire = WireDocument {
            doc_id: doc.doc_id.clone(),
            subject: doc.subject.clone(),
            domain: doc.domain.as_str().to_string(),
            sentences: doc
                .sentences
                .iter()
                .map(|s| WireSentence {
                    section: s.section_title.clone(),
                    tokens: s
                        .tokens
                        .iter()
                        .map(|t| WireToken {
                            t: t.text.clone(),
                            p: t.pos.clone(),
                            h: t.head.map(|h| h as i64),
                            d: t.deplabel.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &wire)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_SENTENCES: &str = r#"{"doc_id":"d1","subject":"meloxicam","domain":"drug","sentences":[{"section":"","tokens":[{"t":"Avoid","p":"VB"},{"t":"alcohol","p":"NN"}]},{"section":"","tokens":[{"t":"stomach","p":"NN","h":2,"d":"NMOD"},{"t":"bleeding","p":"NN","h":0,"d":"ROOT"}]}]}"#;

    #[test]
    fn loads_one_document_with_two_sentences() {
        let c = parse_corpus(TWO_SENTENCES, CorpusKind::Target, "mem").unwrap();
        assert_eq!(c.documents.len(), 1);
        assert_eq!(c.documents[0].sentences.len(), 2);
        assert_eq!(c.documents[0].sentences[1].tokens[0].head, Some(2));
        assert!(c.documents[0].sentences[1].has_dependencies());
        assert!(!c.documents[0].sentences[0].has_dependencies());

        let mut buf = Vec::new();
        write_corpus(&c, &mut buf).unwrap();
        let again = parse_corpus(std::str::from_utf8(&buf).unwrap(), CorpusKind::Target, "mem").unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn head_past_sentence_end_names_the_line() {
        let bad = r#"{"doc_id":"d2","subject":"x","domain":"drug","sentences":[{"section":"","tokens":[{"t":"a","p":"NN","h":5}]}]}"#;
        let text = format!("{TWO_SENTENCES}\n{bad}\n");
        let err = parse_corpus(&text, CorpusKind::Target, "mem").unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert!(field.ends_with(".h"), "{field}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn self_head_rejected() {
        let bad = r#"{"doc_id":"d2","subject":"x","domain":"drug","sentences":[{"section":"","tokens":[{"t":"a","p":"NN","h":1}]}]}"#;
        assert!(parse_corpus(bad, CorpusKind::Target, "mem").is_err());
    }

    #[test]
    fn structured_corpus_requires_section_titles() {
        let err = parse_corpus(TWO_SENTENCES, CorpusKind::Structured, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field.ends_with(".section")));
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let text = format!("{TWO_SENTENCES}\n{TWO_SENTENCES}\n");
        assert!(matches!(
            parse_corpus(&text, CorpusKind::Target, "mem"),
            Err(Error::DuplicateDocument(id)) if id == "d1"
        ));
    }

    #[test]
    fn malformed_json_and_bad_domain() {
        assert!(matches!(
            parse_corpus("{not json", CorpusKind::Target, "mem"),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad = TWO_SENTENCES.replace("\"drug\"", "\"gene\"");
        assert!(matches!(
            parse_corpus(&bad, CorpusKind::Target, "mem"),
            Err(Error::Parse { ref field, .. }) if field == "domain"
        ));
        let empty = TWO_SENTENCES.replace("\"meloxicam\"", "\"\"");
        assert!(parse_corpus(&empty, CorpusKind::Target, "mem").is_err());
    }
}
