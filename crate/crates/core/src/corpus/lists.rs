use super::chunk::{chunk_spans, mention_for};
use super::{CoordList, Document, Mention, Sentence, SentenceRef, Span};

const COORD_LABELS: &[&str] = &["NMOD", "COORD", "CONJ"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gap {
    Comma,
    Conjunction,
    Break,
}

fn is_conjunction(pos: &str, text: &str) -> bool {
    pos == "CC" || text.eq_ignore_ascii_case("and") || text.eq_ignore_ascii_case("or")
}

/// Classifies the tokens strictly between two chunks. Determiners are
/// transparent since the chunker leaves them outside the span.
fn gap_between(sentence: &Sentence, left: Span, right: Span) -> Gap {
    let between: Vec<_> = sentence.tokens[left.end..right.start - 1]
        .iter()
        .filter(|t| t.pos != "DT")
        .collect();
    match between.as_slice() {
        [c] if c.text == "," => Gap::Comma,
        [c] if is_conjunction(&c.pos, &c.text) => Gap::Conjunction,
        [c, cc] if c.text == "," && is_conjunction(&cc.pos, &cc.text) => Gap::Conjunction,
        _ => Gap::Break,
    }
}

/// Groups a sentence's chunks into coordinate lists matching
/// `NP (, NP)* ,? (and|or|CC) NP`; every chunk left over is a singleton.
///
/// With dependency annotations, non-final items must attach to the final
/// item's head through an NMOD/COORD/CONJ arc or they fall out of the list.
pub fn extract_coord_lists(doc: &Document, r: SentenceRef) -> Vec<CoordList> {
    let Some(sentence) = doc.sentences.get(r.sentence) else {
        return Vec::new();
    };
    let spans = chunk_spans(sentence);
    let mentions: Vec<Mention> = spans.iter().map(|&sp| mention_for(doc, r, sentence, sp)).collect();

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut i = 0;
    while i < spans.len() {
        let mut j = i;
        while j + 1 < spans.len() && gap_between(sentence, spans[j], spans[j + 1]) == Gap::Comma {
            j += 1;
        }
        if j + 1 < spans.len() && gap_between(sentence, spans[j], spans[j + 1]) == Gap::Conjunction {
            groups.push((i..=j + 1).collect());
            i = j + 2;
        } else {
            // no list can start anywhere in i..=j, they all reach the same break
            groups.extend((i..=j).map(|k| vec![k]));
            i = j + 1;
        }
    }

    if sentence.has_dependencies() {
        groups = groups
            .into_iter()
            .flat_map(|g| split_by_dependencies(sentence, &spans, g))
            .collect();
        groups.sort_by_key(|g| g[0]);
    }

    groups
        .into_iter()
        .enumerate()
        .map(|(ordinal, g)| CoordList {
            is_singleton: g.len() == 1,
            items: g.into_iter().map(|k| mentions[k].clone()).collect(),
            sentence_ref: r,
            ordinal,
        })
        .collect()
}

fn split_by_dependencies(sentence: &Sentence, spans: &[Span], group: Vec<usize>) -> Vec<Vec<usize>> {
    if group.len() < 2 {
        return vec![group];
    }
    let last = *group.last().unwrap();
    let final_head = spans[last].end;
    let attaches = |k: usize| {
        sentence.token(spans[k].end).is_some_and(|t| {
            t.head == Some(final_head)
                && t.deplabel
                    .as_deref()
                    .is_some_and(|d| COORD_LABELS.iter().any(|l| d.eq_ignore_ascii_case(l)))
        })
    };
    let (kept, dropped): (Vec<usize>, Vec<usize>) = group[..group.len() - 1].iter().partition(|&&k| attaches(k));
    let mut out: Vec<Vec<usize>> = dropped.into_iter().map(|k| vec![k]).collect();
    let mut list = kept;
    list.push(last);
    out.push(list);
    out
}
