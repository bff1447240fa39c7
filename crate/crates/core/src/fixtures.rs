//! Hand-built dialogues for tests, demos and the acceptance suite.
//!
//! Every character dialogue has the same shape: a first question naming the
//! character, then a pronoun follow-up whose answer sits in a sentence about
//! that character while a distractor sentence about someone else repeats the
//! pronoun. The lexical reader is drawn to the distractor by the bare
//! follow-up and finds the right sentence once the character's name is
//! supplied.

use serde_json::json;

use crate::ingest::{canard_json, Corpus, RewriteRecord, Split};
use crate::types::{AnswerSpan, Dialogue, Passage, Question, StructuredRepresentation, Turn, CANNOT_ANSWER};

#[derive(Debug, Clone, Copy)]
struct Character {
    name: &'static str,
    pronoun: &'static str,
    show: &'static str,
    about: &'static str,
    job: &'static str,
    predicate: &'static str,
    gold: &'static str,
    rival: &'static str,
    distractor: &'static str,
    /// Place named in the job answer and after the gold answer.
    setting: Option<&'static str>,
}

const CHARACTERS: [Character; 10] = [
    Character {
        name: "Monica Geller",
        pronoun: "she",
        show: "FRIENDS",
        about: "an American sitcom about six friends in Manhattan",
        job: "a head chef",
        predicate: "obsessed with",
        gold: "cleaning",
        rival: "Rachel Green",
        setting: None,
        distractor: "fashion",
    },
    Character {
        name: "Sherlock Holmes",
        pronoun: "he",
        show: "SHERLOCK",
        about: "a British crime drama set in modern London",
        job: "a consulting detective",
        predicate: "addicted to",
        gold: "nicotine patches",
        rival: "John Watson",
        setting: None,
        distractor: "online blogging",
    },
    Character {
        name: "Michael Scott",
        pronoun: "he",
        show: "The Office",
        about: "a mockumentary sitcom about a paper company",
        job: "a regional manager",
        predicate: "afraid of",
        gold: "commitment",
        rival: "Dwight Schrute",
        setting: None,
        distractor: "vampires",
    },
    Character {
        name: "Walter White",
        pronoun: "he",
        show: "BREAKING BAD",
        about: "a crime drama set in Albuquerque",
        job: "a chemistry teacher",
        predicate: "proud of",
        gold: "blue crystals",
        rival: "Jesse Pinkman",
        setting: None,
        distractor: "his car",
    },
    Character {
        name: "Buffy Summers",
        pronoun: "she",
        show: "BUFFY",
        about: "a supernatural drama about a teenage slayer",
        job: "a vampire slayer",
        predicate: "famous for",
        gold: "wooden stakes",
        rival: "Willow Rosenberg",
        setting: None,
        distractor: "spellcraft",
    },
    Character {
        name: "Fox Mulder",
        pronoun: "he",
        show: "X-FILES",
        about: "a science fiction drama about paranormal cases",
        job: "a special agent",
        predicate: "convinced of",
        gold: "alien abductions",
        rival: "Walter Skinner",
        setting: None,
        distractor: "budget cuts",
    },
    Character {
        name: "Olivia Pope",
        pronoun: "she",
        show: "SCANDAL",
        about: "a political thriller set in Washington",
        job: "a crisis manager",
        predicate: "known for",
        gold: "white hats",
        rival: "Abby Whelan",
        setting: None,
        distractor: "red hair",
    },
    Character {
        name: "Jim Hopper",
        pronoun: "he",
        show: "STRANGER THINGS",
        about: "a science fiction horror series set in Hawkins",
        job: "a Hawkins cop",
        predicate: "worried about",
        gold: "missing children",
        rival: "Joyce Byers",
        setting: Some("Hawkins"),
        distractor: "phone bills",
    },
    Character {
        name: "Lisa Simpson",
        pronoun: "she",
        show: "THE SIMPSONS",
        about: "an animated sitcom set in Springfield",
        job: "a Springfield student",
        predicate: "passionate about",
        gold: "jazz saxophone",
        rival: "Nelson Muntz",
        setting: Some("Springfield"),
        distractor: "blue hair",
    },
    Character {
        name: "Jon Snow",
        pronoun: "he",
        show: "GAME OF THRONES",
        about: "a fantasy drama set in Westeros",
        job: "a ranger in Castleblack",
        predicate: "loyal to",
        gold: "northern wall",
        rival: "Samwell Tarly",
        setting: Some("Castleblack"),
        distractor: "old books",
    },
];

struct PassageBuilder {
    text: String,
}

impl PassageBuilder {
    fn new() -> Self {
        Self { text: String::new() }
    }

    /// Appends a sentence and returns the character offset of `anchor` in it.
    fn sentence(&mut self, sentence: &str, anchor: &str) -> usize {
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        let base = self.text.chars().count();
        let byte = sentence.find(anchor).expect("anchor in sentence");
        self.text.push_str(sentence);
        base + sentence[..byte].chars().count()
    }

    fn finish(mut self) -> (String, usize) {
        self.text.push(' ');
        let marker = self.text.chars().count();
        self.text.push_str(CANNOT_ANSWER);
        (self.text, marker)
    }
}

/// A dialogue for the labeler: turn 1 is the follow-up to label.
#[derive(Debug, Clone)]
pub struct LabelerFixture {
    pub dialogue: Dialogue,
    /// Human rewrite of turn 1.
    pub rewrite: String,
    /// The representation that resolves turn 1.
    pub sr: StructuredRepresentation,
}

impl LabelerFixture {
    pub fn turn(&self) -> &Turn {
        &self.dialogue.turns[1]
    }

    pub fn history(&self) -> &[Turn] {
        self.dialogue.history(1)
    }
}

struct Built {
    dialogue: Dialogue,
    rewrites: Vec<String>,
}

fn build(id: &str, c: &Character, rival: &Character, with_no_answer_turn: bool) -> Built {
    let mut p = PassageBuilder::new();
    let job_at = p.sentence(&format!("{} worked as {}.", c.name, c.job), c.job);
    let place = c.setting.map(|place| format!(" in {place}")).unwrap_or_default();
    let gold_at = p.sentence(&format!("{} was {} {}{place}.", c.name, c.predicate, c.gold), c.gold);
    p.sentence(
        &format!("{} was truly {} {}, {} said.", rival.rival, c.predicate, rival.distractor, c.pronoun),
        rival.distractor,
    );
    let (text, _) = p.finish();
    let passage = Passage::new(id, c.show, text).with_background(format!("{} is {}.", c.show, c.about));

    let mut turns = vec![
        Turn::new(
            Question::new(format!("{id}_q0"), format!("What was {}'s job on {}?", c.name, c.show), 0),
            vec![AnswerSpan::new(c.job, job_at, 0.0)],
        ),
        Turn::new(
            Question::new(format!("{id}_q1"), format!("What was {} {}?", c.pronoun, c.predicate), 1),
            vec![AnswerSpan::new(c.gold, gold_at, 0.0)],
        ),
    ];
    let mut rewrites = vec![turns[0].question.text.clone(), format!("What was {} {}{place}?", c.name, c.predicate)];
    if with_no_answer_turn {
        turns.push(Turn::new(
            Question::new(format!("{id}_q2"), format!("Did {} ever win an award?", c.pronoun), 2),
            vec![passage.no_answer()],
        ));
        rewrites.push(format!("Did {} ever win an award?", c.name));
    }
    Built { dialogue: Dialogue::new(id, passage, turns), rewrites }
}

/// The ten labeler fixtures.
pub fn labeler_fixtures() -> Vec<LabelerFixture> {
    CHARACTERS
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let built = build(&format!("fixture{i}"), c, c, false);
            let sr = StructuredRepresentation::new(c.setting, [c.name]);
            LabelerFixture { rewrite: built.rewrites[1].clone(), dialogue: built.dialogue, sr }
        })
        .collect()
}

/// The labeler fixtures as a corpus.
pub fn labeler_corpus() -> Corpus {
    let dialogues = labeler_fixtures().into_iter().map(|f| f.dialogue).collect();
    Corpus::new("fixtures", Split::Val, dialogues).expect("unique fixture ids")
}

/// Rewrite records for every turn of [`labeler_corpus`].
pub fn labeler_rewrites() -> Vec<RewriteRecord> {
    labeler_fixtures()
        .iter()
        .flat_map(|f| {
            let d = &f.dialogue;
            [(0, d.turns[0].question.text.clone()), (1, f.rewrite.clone())].map(|(i, rewrite)| records_for(d, i, rewrite))
        })
        .collect()
}

fn records_for(d: &Dialogue, turn_index: usize, rewrite: String) -> RewriteRecord {
    let mut history = vec![d.passage.title.clone(), d.passage.background.clone()];
    for t in d.history(turn_index) {
        history.push(t.question.text.clone());
        history.push(t.history_answer_text().to_string());
    }
    RewriteRecord {
        dialogue_id: d.id.clone(),
        turn_index,
        history_texts: history,
        original_question: d.turns[turn_index].question.text.clone(),
        rewrite,
    }
}

/// A deterministic corpus of `n` three-turn dialogues with a gold rewrite for
/// every turn. Dialogue `k` uses character `k mod 10` and takes its
/// distractor sentence from another character's rival.
pub fn synthetic_corpus(n: usize) -> (Corpus, Vec<RewriteRecord>) {
    let mut dialogues = Vec::with_capacity(n);
    let mut records = Vec::new();
    for k in 0..n {
        let c = &CHARACTERS[k % CHARACTERS.len()];
        let rival = &CHARACTERS[(k + k / CHARACTERS.len()) % CHARACTERS.len()];
        let built = build(&format!("dlg{k:03}"), c, rival, true);
        for (i, rewrite) in built.rewrites.into_iter().enumerate() {
            records.push(records_for(&built.dialogue, i, rewrite));
        }
        dialogues.push(built.dialogue);
    }
    (Corpus::new("synthetic", Split::Train, dialogues).expect("unique ids"), records)
}

/// QuAC-format JSON for a corpus: one article per dialogue.
pub fn quac_json(corpus: &Corpus) -> String {
    let data: Vec<_> = corpus
        .dialogues
        .iter()
        .map(|d| {
            let p = &d.passage;
            let marker_at = p.text.chars().count() - p.cannot_answer_marker.chars().count();
            let qas: Vec<_> = d
                .turns
                .iter()
                .map(|t| {
                    let answers: Vec<_> = t
                        .gold_answers
                        .iter()
                        .map(|a| {
                            let start = if a.is_no_answer() { marker_at as i64 } else { a.start_char };
                            json!({"text": a.text, "answer_start": start})
                        })
                        .collect();
                    json!({
                        "id": t.question.id,
                        "question": t.question.text,
                        "followup": "y",
                        "yesno": "x",
                        "orig_answer": answers[0],
                        "answers": answers,
                    })
                })
                .collect();
            json!({
                "title": p.title,
                "background": p.background,
                "paragraphs": [{"id": d.id, "context": p.text, "qas": qas}],
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({ "data": data })).expect("json values serialize")
}

/// CANARD-format JSON for rewrite records (zero-based question numbers).
pub fn canard_fixture_json(records: &[RewriteRecord]) -> String {
    canard_json(records)
}

/// The three-turn episode dialogue: the first two turns carry the
/// representation `(FRIENDS | episode)` and the third asks "And overall?".
pub fn episode_dialogue() -> Dialogue {
    let mut p = PassageBuilder::new();
    let a1 = p.sentence("The one with the prom video.", "The one with the prom video");
    let a2 = p.sentence(
        "It is the fourteenth episode of the second season of FRIENDS and the thirty-eighth episode overall.",
        "fourteenth",
    );
    let (text, _) = p.finish();
    let a3 = text.find("thirty-eighth").expect("present");
    let passage = Passage::new("episode", "Friends", text).with_background("FRIENDS is an American sitcom.");
    let sr = StructuredRepresentation::new(["FRIENDS"], ["episode"]);
    let turns = vec![
        Turn {
            sr: Some(sr.clone()),
            ..Turn::new(
                Question::new("episode_q0", "What was the name of the episode of season FRIENDS?", 0),
                vec![AnswerSpan::new("The one with the prom video", a1, 0.0)],
            )
        },
        Turn {
            sr: Some(sr),
            ..Turn::new(Question::new("episode_q1", "Which episode was it?", 1), vec![AnswerSpan::new("fourteenth", a2, 0.0)])
        },
        Turn::new(Question::new("episode_q2", "And overall?", 2), vec![AnswerSpan::new("thirty-eighth", a3, 0.0)]),
    ];
    Dialogue::new("episode", passage, turns)
}

/// The cast dialogue: who played Monica Geller, then what she was obsessed with.
pub fn cast_dialogue() -> LabelerFixture {
    labeler_fixtures().swap_remove(0)
}
