use super::{normalize, Document, Mention, Sentence, SentenceRef, Span};

const NOMINAL: &[&str] = &["NN", "NNS", "NNP", "NNPS", "FW"];
const MODIFIER: &[&str] = &["JJ", "JJR", "JJS", "VBN"];

fn is_nominal(pos: &str) -> bool {
    NOMINAL.contains(&pos)
}

fn is_chunk_body(pos: &str) -> bool {
    is_nominal(pos) || MODIFIER.contains(&pos)
}

/// Maximal noun-phrase spans of a sentence, left to right.
///
/// Grammar: `DT? (JJ|JJR|JJS|VBN|NN|NNS|NNP|NNPS|FW)* (NN|NNS|NNP|NNPS|FW)`,
/// matched greedily with longest match. The determiner is not part of the
/// returned span.
pub fn chunk_spans(sentence: &Sentence) -> Vec<Span> {
    let tags: Vec<&str> = sentence.tokens.iter().map(|t| t.pos.as_str()).collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        let body_start = if tags[i] == "DT" { i + 1 } else { i };
        let mut j = body_start;
        let mut last_nominal = None;
        while j < tags.len() && is_chunk_body(tags[j]) {
            if is_nominal(tags[j]) {
                last_nominal = Some(j);
            }
            j += 1;
        }
        match last_nominal {
            Some(end) => {
                spans.push(Span {
                    start: body_start + 1,
                    end: end + 1,
                });
                i = end + 1;
            }
            None => i += 1,
        }
    }
    spans
}

/// Noun-phrase mentions of one sentence of `doc`.
pub fn chunk_nps(doc: &Document, r: SentenceRef) -> Vec<Mention> {
    let Some(sentence) = doc.sentences.get(r.sentence) else {
        return Vec::new();
    };
    chunk_spans(sentence)
        .into_iter()
        .map(|span| mention_for(doc, r, sentence, span))
        .collect()
}

pub(super) fn mention_for(doc: &Document, r: SentenceRef, sentence: &Sentence, span: Span) -> Mention {
    let surface = sentence.tokens[span.start - 1..span.end]
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    Mention {
        doc_id: doc.doc_id.clone(),
        subject: doc.subject.clone(),
        sentence_ref: r,
        span,
        normalized: normalize(&surface),
        surface,
    }
}
