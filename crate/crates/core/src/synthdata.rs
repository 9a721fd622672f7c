//! Synthetic entity-centric corpora with planted facts.
//!
//! Every target document describes one drug or disease. Facts are rendered
//! through relation-specific sentence templates, alone or inside coordinate
//! lists, and may be repeated. Object strings come from per-relation word
//! lists or, with probability `ambiguity_rate`, from a pool shared by all
//! relations. Spurious sentences mention known objects in contexts that
//! express no relation. Structured documents cover a subset of the subjects
//! with one whitelisted section per relation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_corpus, Corpus, CorpusKind, Document, Domain, Sentence};
use crate::error::{Error, Result};
use crate::evaluate::GoldSet;
use crate::graph::SectionMap;
use crate::kb::{write_triples, Triple};
use crate::pipeline::PipelineConfig;
use crate::simstring::jaro_winkler;
use crate::Relation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_target_docs: usize,
    pub n_structured_docs: usize,
    pub relations: Vec<Relation>,
    pub facts_per_doc: usize,
    pub list_rate: f64,
    pub ambiguity_rate: f64,
    pub noise_rate: f64,
    /// Probability that a fact is mentioned a second time.
    pub repeat_rate: f64,
    /// Probability that a planted fact is also a knowledge-base triple. The
    /// default is low so that distant supervision alone misses most facts.
    pub kb_coverage: f64,
    /// Probability that a subject's target fact also appears in its
    /// structured document.
    pub structured_coverage: f64,
    /// Probability that a target sentence names its subject rather than
    /// referring to it as "it".
    pub subject_mention_rate: f64,
    pub words_per_relation: usize,
    pub shared_words: usize,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_target_docs: 200,
            n_structured_docs: 50,
            relations: Relation::ALL.to_vec(),
            facts_per_doc: 8,
            list_rate: 0.5,
            ambiguity_rate: 0.3,
            noise_rate: 0.2,
            repeat_rate: 0.5,
            kb_coverage: 0.03,
            structured_coverage: 0.7,
            subject_mention_rate: 0.3,
            words_per_relation: 80,
            shared_words: 40,
            rng_seed: 0,
        }
    }
}

impl SynthSpec {
    /// Reads generator settings from TOML; absent fields keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SynthSpec =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("list_rate", self.list_rate),
            ("ambiguity_rate", self.ambiguity_rate),
            ("noise_rate", self.noise_rate),
            ("repeat_rate", self.repeat_rate),
            ("kb_coverage", self.kb_coverage),
            ("structured_coverage", self.structured_coverage),
            ("subject_mention_rate", self.subject_mention_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} {p} not in [0, 1]")));
            }
        }
        if self.relations.is_empty() {
            return Err(Error::InvalidParameter("no relations".into()));
        }
        if self.n_structured_docs > self.n_target_docs {
            return Err(Error::InvalidParameter(
                "structured documents describe target subjects, so there cannot be more of them".into(),
            ));
        }
        if self.words_per_relation == 0 || (self.ambiguity_rate > 0.0 && self.shared_words == 0) {
            return Err(Error::InvalidParameter("empty vocabulary".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub target: Corpus,
    pub structured: Corpus,
    pub kb: Vec<Triple>,
    pub gold: GoldSet,
    /// Conjunctive questions and their answers, from the planted facts.
    pub questions: Vec<String>,
    pub answers: BTreeMap<usize, BTreeSet<String>>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllables(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n)
        .map(|_| {
            let c = CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char;
            let v = VOWELS[rng.gen_range(0..VOWELS.len())] as char;
            format!("{c}{v}")
        })
        .collect()
}

/// Draws `n` words `stem + ending` no two of which are Jaro-Winkler similar
/// enough to be treated as the same name, nor similar to any of `taken`.
fn distinct_words(rng: &mut ChaCha8Rng, n: usize, endings: &[&str], taken: &mut Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        let stem = syllables(rng, 2 + usize::from(attempts > 2000));
        let word = format!("{stem}{}", endings[rng.gen_range(0..endings.len())]);
        if taken.iter().any(|t| jaro_winkler(t, &word) >= 0.9) {
            continue;
        }
        taken.push(word.clone());
        out.push(word);
    }
    out
}

/// Word endings per relation; neighbouring relations share one so suffixes
/// alone are not decisive.
fn endings(r: Relation) -> &'static [&'static str] {
    match r {
        Relation::SideEffects => &["algia", "itis", "osis"],
        Relation::UsedToTreat => &["osis", "emia", "oma"],
        Relation::ConditionsThisMayPrevent => &["oma", "ectasis", "algia"],
        Relation::Symptoms => &["ache", "rrhea", "itis"],
        Relation::Causes => &["virus", "ococcus", "ache"],
        Relation::RiskFactors => &["ism", "ance", "virus"],
        Relation::Treatments => &["mab", "olol", "ance"],
        Relation::PreventionFactors => &["ation", "ment", "olol"],
    }
}

const SHARED_ENDINGS: &[&str] = &["ness", "ity", "ia"];

/// Sentence templates; `S` is the subject, `L` the object list and
/// `{a|b}` a choice made per sentence. Apart from the list and the subject
/// they contain no noun phrases, so spurious mentions come only from the
/// noise sentences.
fn templates(r: Relation) -> &'static [&'static str] {
    match r {
        Relation::SideEffects => &[
            "S {may/MD|can/MD|might/MD|sometimes/RB} {cause/VB|produce/VB|trigger/VB|induce/VB} L",
            "taking/VBG S {can/MD|may/MD} {lead/VB to/TO|result/VB in/IN} L",
            "{some/DT|many/DT|few/DT} who/WP take/VBP S {report/VBP|experience/VBP|develop/VBP} L",
            "stop/VB taking/VBG S if/IN you/PRP {develop/VBP|notice/VBP|get/VBP} L",
        ],
        Relation::UsedToTreat => &[
            "S is/VBZ {used/VBN|approved/VBN|given/VBN} to/TO {treat/VB|control/VB|relieve/VB} L",
            "S is/VBZ {indicated/VBN|prescribed/VBN|recommended/VBN} for/IN L",
            "S {relieves/VBZ|eases/VBZ|controls/VBZ|treats/VBZ} L",
        ],
        Relation::ConditionsThisMayPrevent => &[
            "S {helps/VBZ|serves/VBZ to/TO} {prevent/VB|avert/VB|forestall/VB} L",
            "S {protects/VBZ|guards/VBZ|shields/VBZ} against/IN L",
            "S is/VBZ {taken/VBN|given/VBN} to/TO {avoid/VB|ward/VB off/RP} L",
        ],
        Relation::Symptoms => &[
            "S {often/RB|typically/RB|usually/RB} {begins/VBZ|starts/VBZ|presents/VBZ} with/IN L",
            "those/DT with/IN S {often/RB|usually/RB|may/MD} {have/VBP|show/VBP|notice/VBP} L",
            "S {manifests/VBZ|shows/VBZ|appears/VBZ} {as/IN|through/IN} L",
        ],
        Relation::Causes => &[
            "S is/VBZ {caused/VBN|triggered/VBN|brought/VBN about/RP} by/IN L",
            "S {results/VBZ|arises/VBZ|stems/VBZ} from/IN L",
            "L {can/MD|may/MD|will/MD} {lead/VB|give/VB rise/VB} to/TO S",
        ],
        Relation::RiskFactors => &[
            "S is/VBZ {more/RBR|far/RB more/RBR} {likely/JJ|common/JJ|frequent/JJ} with/IN L",
            "L {make/VBP|render/VBP} S more/RBR {likely/JJ|probable/JJ}",
            "those/DT with/IN L are/VBP {more/RBR|especially/RB} {likely/JJ|prone/JJ} to/TO {get/VB|develop/VB} S",
        ],
        Relation::Treatments => &[
            "S is/VBZ {treated/VBN|managed/VBN|handled/VBN} with/IN L",
            "S {responds/VBZ|reacts/VBZ} {well/RB|quickly/RB} to/TO L",
            "S {improves/VBZ|subsides/VBZ|resolves/VBZ} {with/IN|after/IN|under/IN} L",
        ],
        Relation::PreventionFactors => &[
            "S can/MD be/VB {prevented/VBN|avoided/VBN|averted/VBN} {by/IN|through/IN} L",
            "L {make/VBP|render/VBP} S less/RBR {likely/JJ|probable/JJ}",
            "to/TO {avoid/VB|prevent/VB} S ,/, {rely/VB on/IN|try/VB|consider/VB} L",
        ],
    }
}

/// Contexts that express no relation.
const NEUTRAL: &[&str] = &[
    "{ask/VB|check/VB} about/IN L before/IN using/VBG S",
    "S is/VBZ {often/RB|sometimes/RB|rarely/RB} mentioned/VBN {with/IN|alongside/IN} L",
    "S was/VBD {compared/VBN|contrasted/VBN} with/IN L",
    "L were/VBD {discussed/VBN|listed/VBN|named/VBN} alongside/IN S",
];

/// Generic openers and closers, the most frequent context words.
const INTROS: &[&str] = &[
    "also/RB ,/,",
    "however/RB ,/,",
    "in/IN general/JJ ,/,",
    "as/IN noted/VBN ,/,",
    "notably/RB ,/,",
    "moreover/RB ,/,",
];
const TAILS: &[&str] = &["as/RB well/RB", "at/IN times/RB", "too/RB", "as/IN well/RB"];

/// Resolves `{a|b}` choices.
fn expand(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let close = open + rest[open..].find('}').expect("balanced template");
        out.push_str(&rest[..open]);
        let options: Vec<&str> = rest[open + 1..close].split('|').collect();
        out.push_str(options[rng.gen_range(0..options.len())]);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

/// A full sentence from a template: optional opener and closer, final stop.
fn sentence_text(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut text = String::new();
    if rng.gen_bool(0.5) {
        text.push_str(INTROS[rng.gen_range(0..INTROS.len())]);
        text.push(' ');
    }
    text.push_str(&expand(template, rng));
    if rng.gen_bool(0.3) {
        text.push(' ');
        text.push_str(TAILS[rng.gen_range(0..TAILS.len())]);
    }
    text.push_str(" ./.");
    text
}

fn section_title(r: Relation) -> &'static str {
    match r {
        Relation::UsedToTreat => "Uses",
        Relation::SideEffects => "Side Effects",
        Relation::ConditionsThisMayPrevent => "Prevents",
        Relation::Symptoms => "Symptoms",
        Relation::Causes => "Causes",
        Relation::RiskFactors => "Risk Factors",
        Relation::Treatments => "Treatments and Drugs",
        Relation::PreventionFactors => "Prevention",
    }
}

fn render_list(items: &[String], rng: &mut ChaCha8Rng) -> String {
    match items {
        [] => String::new(),
        [one] => format!("{one}/NN"),
        _ => {
            let conj = if rng.gen_bool(0.8) { "and" } else { "or" };
            let (last, rest) = items.split_last().unwrap();
            let head: Vec<String> = rest.iter().map(|w| format!("{w}/NN")).collect();
            format!("{} {conj}/CC {last}/NN", head.join(" ,/, "))
        }
    }
}

fn render(template: &str, subject: Option<&str>, items: &[String], rng: &mut ChaCha8Rng, section: &str) -> Sentence {
    let list = render_list(items, rng);
    let template = if template == "L" {
        "L ./.".to_string()
    } else {
        sentence_text(template, rng)
    };
    let text: Vec<String> = template
        .split_whitespace()
        .map(|t| match t {
            "S" => subject.map_or_else(|| "it/PRP".to_string(), |s| format!("{s}/NNP")),
            "L" => list.clone(),
            other => other.to_string(),
        })
        .collect();
    Sentence::from_slashed(section, &text.join(" "))
}

/// Splits `items` into groups, most of size one unless `list_rate` fires.
fn group(items: &[String], list_rate: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let left = items.len() - i;
        let k = if left >= 2 && rng.gen_bool(list_rate) {
            rng.gen_range(2..=left.min(4))
        } else {
            1
        };
        out.push(items[i..i + k].to_vec());
        i += k;
    }
    out
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let relations: BTreeSet<Relation> = spec.relations.iter().copied().collect();

    let mut taken = Vec::new();
    let mut vocab: BTreeMap<Relation, Vec<String>> = BTreeMap::new();
    for &r in &relations {
        vocab.insert(
            r,
            distinct_words(&mut rng, spec.words_per_relation, endings(r), &mut taken),
        );
    }
    let shared = distinct_words(&mut rng, spec.shared_words, SHARED_ENDINGS, &mut taken);
    let all_words: Vec<String> = vocab.values().flatten().chain(&shared).cloned().collect();

    let domains: Vec<Domain> = [Domain::Drug, Domain::Disease]
        .into_iter()
        .filter(|d| d.relations().iter().any(|r| relations.contains(r)))
        .collect();
    let mut subject_names = Vec::new();
    let mut subject_domain = Vec::new();
    for i in 0..spec.n_target_docs {
        let domain = domains[i % domains.len()];
        let ending: &[&str] = match domain {
            Domain::Drug => &["ex", "ide", "orin"],
            Domain::Disease => &["ardt", "ovsky", "elm"],
        };
        let name = distinct_words(&mut rng, 1, ending, &mut taken).remove(0);
        let mut cap = name.chars();
        let first = cap.next().unwrap().to_uppercase().collect::<String>();
        subject_names.push(first + cap.as_str());
        subject_domain.push(domain);
    }

    let mut gold = GoldSet::default();
    let mut kb = Vec::new();
    let mut planted: Vec<Vec<(Relation, String)>> = Vec::new();
    let mut target_docs = Vec::new();
    for (d, subject) in subject_names.iter().enumerate() {
        let domain = subject_domain[d];
        let rels: Vec<Relation> = domain
            .relations()
            .iter()
            .copied()
            .filter(|r| relations.contains(r))
            .collect();
        let mut facts: Vec<(Relation, String)> = Vec::new();
        let mut used = BTreeSet::new();
        while facts.len() < spec.facts_per_doc {
            let r = *rels.choose(&mut rng).unwrap();
            let pool = if rng.gen_bool(spec.ambiguity_rate) {
                &shared
            } else {
                &vocab[&r]
            };
            let word = pool.choose(&mut rng).unwrap().clone();
            if used.insert(word.clone()) {
                facts.push((r, word));
            }
            if used.len() >= all_words.len() {
                break;
            }
        }

        let mut sentences = Vec::new();
        for &r in &rels {
            let mut objs: Vec<String> = facts
                .iter()
                .filter(|(fr, _)| *fr == r)
                .map(|(_, o)| o.clone())
                .collect();
            objs.shuffle(&mut rng);
            let mut repeats: Vec<String> = objs
                .iter()
                .filter(|_| rng.gen_bool(spec.repeat_rate))
                .cloned()
                .collect();
            repeats.shuffle(&mut rng);
            // repeats form their own lists so no list names an object twice
            let mut groups = group(&objs, spec.list_rate, &mut rng);
            groups.extend(group(&repeats, spec.list_rate, &mut rng));
            for g in groups {
                let named = rng.gen_bool(spec.subject_mention_rate).then_some(subject.as_str());
                let t = templates(r).choose(&mut rng).unwrap();
                sentences.push(render(t, named, &g, &mut rng, ""));
                if rng.gen_bool(spec.noise_rate) {
                    let k = rng.gen_range(1..=3);
                    let items: Vec<String> = (0..k)
                        .map(|_| {
                            if rng.gen_bool(0.5) {
                                facts.choose(&mut rng).unwrap().1.clone()
                            } else {
                                all_words.choose(&mut rng).unwrap().clone()
                            }
                        })
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    let t = NEUTRAL.choose(&mut rng).unwrap();
                    let named = rng.gen_bool(spec.subject_mention_rate).then_some(subject.as_str());
                    sentences.push(render(t, named, &items, &mut rng, ""));
                }
            }
        }
        sentences.shuffle(&mut rng);
        for (r, o) in &facts {
            gold.insert(subject, *r, o);
            if rng.gen_bool(spec.kb_coverage) {
                kb.push(Triple {
                    subject: subject.to_lowercase(),
                    relation: *r,
                    object: o.clone(),
                });
            }
        }
        planted.push(facts);
        target_docs.push(Document {
            doc_id: format!("t{d:04}"),
            subject: subject.clone(),
            domain,
            sentences,
        });
    }

    let mut order: Vec<usize> = (0..spec.n_target_docs).collect();
    order.shuffle(&mut rng);
    order.truncate(spec.n_structured_docs);
    order.sort_unstable();
    let mut structured_docs = Vec::new();
    for &d in &order {
        let subject = &subject_names[d];
        let domain = subject_domain[d];
        let mut sentences = Vec::new();
        for &r in domain.relations().iter().filter(|r| relations.contains(r)) {
            let mut objs: Vec<String> = planted[d]
                .iter()
                .filter(|(fr, _)| *fr == r && rng.gen_bool(spec.structured_coverage))
                .map(|(_, o)| o.clone())
                .collect();
            // facts the target page never states
            for _ in 0..rng.gen_range(0..=2) {
                let pool = if rng.gen_bool(spec.ambiguity_rate) {
                    &shared
                } else {
                    &vocab[&r]
                };
                let w = pool.choose(&mut rng).unwrap().clone();
                if !objs.contains(&w) && !planted[d].iter().any(|(_, o)| *o == w) {
                    if rng.gen_bool(spec.kb_coverage) {
                        kb.push(Triple {
                            subject: subject.to_lowercase(),
                            relation: r,
                            object: w.clone(),
                        });
                    }
                    objs.push(w);
                }
            }
            if objs.is_empty() {
                continue;
            }
            objs.shuffle(&mut rng);
            for chunk in objs.chunks(4) {
                sentences.push(render("L", None, chunk, &mut rng, section_title(r)));
            }
        }
        if sentences.is_empty() {
            continue;
        }
        structured_docs.push(Document {
            doc_id: format!("s{d:04}"),
            subject: subject.clone(),
            domain,
            sentences,
        });
    }
    kb.sort();
    kb.dedup();

    let (questions, answers) = questions_from(&planted, &subject_names, &mut rng);
    Ok(SynthData {
        target: Corpus {
            documents: target_docs,
            kind: CorpusKind::Target,
        },
        structured: Corpus {
            documents: structured_docs,
            kind: CorpusKind::Structured,
        },
        kb,
        gold,
        questions,
        answers,
    })
}

/// Single-relation questions for a few subjects plus a two-atom join per
/// shared drug object.
fn questions_from(
    planted: &[Vec<(Relation, String)>],
    subjects: &[String],
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, BTreeMap<usize, BTreeSet<String>>) {
    let mut questions = Vec::new();
    let mut answers: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    let mut picks: Vec<usize> = (0..planted.len()).collect();
    picks.shuffle(rng);
    for &d in picks.iter().take(10) {
        let Some((r, _)) = planted[d].first() else { continue };
        let subject = subjects[d].to_lowercase();
        questions.push(format!("q(X) :- {r}({subject}, X)."));
        let id = questions.len();
        for (fr, o) in &planted[d] {
            if fr == r {
                answers.entry(id).or_default().insert(o.clone());
            }
        }
    }
    // subjects sharing a treated condition, then their side effects
    let mut treated_by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (d, facts) in planted.iter().enumerate() {
        for (r, o) in facts {
            if *r == Relation::UsedToTreat {
                treated_by.entry(o).or_default().push(d);
            }
        }
    }
    for (condition, drugs) in treated_by.iter().filter(|(_, d)| d.len() >= 2).take(5) {
        let effects: BTreeSet<String> = drugs
            .iter()
            .flat_map(|&d| planted[d].iter().filter(|(r, _)| *r == Relation::SideEffects))
            .map(|(_, o)| o.clone())
            .collect();
        if effects.is_empty() {
            continue;
        }
        questions.push(format!("q(E) :- used_to_treat(D, {condition}), side_effects(D, E)."));
        answers.insert(questions.len(), effects);
    }
    (questions, answers)
}

/// File names written by [`write_synth`].
pub const TARGET_FILE: &str = "target.jsonl";
pub const STRUCTURED_FILE: &str = "structured.jsonl";
pub const KB_FILE: &str = "kb.tsv";
pub const GOLD_FILE: &str = "gold.tsv";
pub const SECTIONS_FILE: &str = "sections.tsv";
pub const QUESTIONS_FILE: &str = "questions.txt";
pub const ANSWERS_FILE: &str = "answers.tsv";

/// Writes every artifact of `data` into `dir`.
pub fn write_synth(data: &SynthData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = |name: &str| -> Result<fs::File> {
        let p = dir.join(name);
        fs::File::create(&p).map_err(|e| Error::io(p, e))
    };
    let wrap = |name: &'static str| move |e: std::io::Error| Error::io(dir.join(name), e);
    write_corpus(&data.target, file(TARGET_FILE)?).map_err(wrap(TARGET_FILE))?;
    write_corpus(&data.structured, file(STRUCTURED_FILE)?).map_err(wrap(STRUCTURED_FILE))?;
    write_triples(&data.kb, file(KB_FILE)?).map_err(wrap(KB_FILE))?;
    data.gold.write(file(GOLD_FILE)?).map_err(wrap(GOLD_FILE))?;

    let sections: String = SectionMap::default()
        .titles()
        .map(|(t, r)| format!("{t}\t{r}\n"))
        .collect();
    fs::write(dir.join(SECTIONS_FILE), sections).map_err(wrap(SECTIONS_FILE))?;
    let questions: String = data.questions.iter().map(|q| format!("{q}\n")).collect();
    fs::write(dir.join(QUESTIONS_FILE), questions).map_err(wrap(QUESTIONS_FILE))?;
    let answers: String = data
        .answers
        .iter()
        .flat_map(|(id, a)| a.iter().map(move |x| format!("{id}\t{x}\n")))
        .collect();
    fs::write(dir.join(ANSWERS_FILE), answers).map_err(wrap(ANSWERS_FILE))?;
    Ok(())
}

/// Pipeline configuration pointing at the files [`write_synth`] put in `dir`.
pub fn pipeline_config(dir: &Path, out_dir: &Path) -> PipelineConfig {
    PipelineConfig {
        target: dir.join(TARGET_FILE),
        structured: Some(dir.join(STRUCTURED_FILE)),
        kb: dir.join(KB_FILE),
        section_map: Some(dir.join(SECTIONS_FILE)),
        gold: Some(dir.join(GOLD_FILE)),
        questions: Some(dir.join(QUESTIONS_FILE)),
        answers: Some(dir.join(ANSWERS_FILE)),
        out_dir: out_dir.to_path_buf(),
        ..PipelineConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CoordList;

    fn small() -> SynthSpec {
        SynthSpec {
            n_target_docs: 20,
            n_structured_docs: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        let bytes = |d: &SynthData| {
            let mut v = Vec::new();
            write_corpus(&d.target, &mut v).unwrap();
            write_corpus(&d.structured, &mut v).unwrap();
            write_triples(&d.kb, &mut v).unwrap();
            v
        };
        assert_eq!(bytes(&a), bytes(&b));
        let c = generate(&SynthSpec { rng_seed: 1, ..small() }).unwrap();
        assert_ne!(bytes(&a), bytes(&c));
    }

    #[test]
    fn noiseless_facts_appear_verbatim() {
        let spec = SynthSpec {
            noise_rate: 0.0,
            ambiguity_rate: 0.0,
            ..small()
        };
        let data = generate(&spec).unwrap();
        let mentions: BTreeSet<(String, String)> = data
            .target
            .mentions()
            .into_iter()
            .map(|m| (m.subject.to_lowercase(), m.normalized))
            .collect();
        for (s, _, o) in &data.gold.facts {
            assert!(mentions.contains(&(s.clone(), o.clone())), "{s} {o}");
        }
    }

    #[test]
    fn gold_objects_are_chunked_as_list_items() {
        let data = generate(&small()).unwrap();
        let items: BTreeSet<(String, String)> = data
            .target
            .coord_lists()
            .iter()
            .flat_map(|l: &CoordList| {
                let s = data.target.documents[l.sentence_ref.doc].subject.to_lowercase();
                l.items.iter().map(move |m| (s.clone(), m.normalized.clone()))
            })
            .collect();
        for (s, _, o) in &data.gold.facts {
            assert!(items.contains(&(s.clone(), o.clone())));
        }
    }

    #[test]
    fn structured_titles_are_whitelisted() {
        let data = generate(&small()).unwrap();
        let map = SectionMap::default();
        for d in &data.structured.documents {
            for s in &d.sentences {
                assert!(map.relation(&s.section_title).is_some(), "{}", s.section_title);
            }
        }
        let targets: BTreeSet<&str> = data.target.documents.iter().map(|d| d.subject.as_str()).collect();
        assert!(data
            .structured
            .documents
            .iter()
            .all(|d| targets.contains(d.subject.as_str())));
    }

    #[test]
    fn ambiguity_rate_is_measured() {
        let spec = SynthSpec {
            n_target_docs: 150,
            n_structured_docs: 0,
            ..SynthSpec::default()
        };
        let data = generate(&spec).unwrap();
        let mut relations_of: BTreeMap<&str, BTreeSet<Relation>> = BTreeMap::new();
        for (_, r, o) in &data.gold.facts {
            relations_of.entry(o).or_default().insert(*r);
        }
        // fact mentions: list items whose (subject, object) is planted
        let planted: BTreeSet<(String, &str)> = data
            .gold
            .facts
            .iter()
            .map(|(s, _, o)| (s.clone(), o.as_str()))
            .collect();
        let mut total = 0usize;
        let mut shared = 0usize;
        for m in data.target.mentions() {
            if planted.contains(&(m.subject.to_lowercase(), m.normalized.as_str())) {
                total += 1;
                if relations_of[m.normalized.as_str()].len() >= 2 {
                    shared += 1;
                }
            }
        }
        assert!(total >= 1000, "{total}");
        let rate = shared as f64 / total as f64;
        assert!((rate - 0.3).abs() <= 0.05, "{rate}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&SynthSpec {
            noise_rate: 1.5,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthSpec {
            n_structured_docs: 30,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthSpec {
            relations: vec![],
            ..small()
        })
        .is_err());
    }
}
