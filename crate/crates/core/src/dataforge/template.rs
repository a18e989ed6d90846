//! Rule-based QA generation from `#C C <verb> <object>` narrations.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use numkit::SplitMix64;

use super::paragraph::Paragraph;
use super::types::{QaSample, QuestionKind};

const PARTICLES: [&str; 7] = ["up", "down", "out", "off", "away", "back", "over"];
const PLACES: [&str; 9] = ["on", "in", "into", "onto", "at", "under", "inside", "beside", "from"];
const IRREGULAR: [(&str, &str); 8] = [
    ("does", "do"),
    ("goes", "go"),
    ("has", "have"),
    ("is", "be"),
    ("puts", "put"),
    ("cuts", "cut"),
    ("sets", "set"),
    ("shuts", "shut"),
];

/// Strips a camera-wearer tag such as `#C C ` or `#c c `.
pub fn strip_actor(narration: &str) -> &str {
    let t = narration.trim();
    let Some(rest) = t.strip_prefix('#') else { return t };
    let mut words = rest.splitn(2, ' ');
    let tag = words.next().unwrap_or("");
    let rest = words.next().unwrap_or("").trim_start();
    if !tag.eq_ignore_ascii_case("c") {
        return t;
    }
    match rest.split_once(' ') {
        Some((actor, tail)) if actor.eq_ignore_ascii_case("c") => tail.trim_start(),
        _ => rest,
    }
}

/// Third-person singular verb to base form.
pub fn base_form(verb: &str) -> String {
    let v = verb.to_ascii_lowercase();
    if let Some((_, b)) = IRREGULAR.iter().find(|(w, _)| *w == v) {
        return b.to_string();
    }
    if let Some(stem) = v.strip_suffix("ies") {
        if !stem.is_empty() {
            return format!("{stem}y");
        }
    }
    for suffix in ["sses", "shes", "ches", "xes", "zes"] {
        if v.ends_with(suffix) {
            return v[..v.len() - 2].to_string();
        }
    }
    match v.strip_suffix('s') {
        Some(stem) if !stem.is_empty() && !stem.ends_with('s') => stem.to_string(),
        _ => v,
    }
}

/// A parsed narration: verb, optional particle, object phrase, optional place phrase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub verb: String,
    pub particle: Option<String>,
    pub object: String,
    pub place: Option<String>,
}

pub fn parse_action(narration: &str) -> Option<Action> {
    let body = strip_actor(narration).trim_end_matches(['.', '!', ' ']);
    let words: Vec<&str> = body.split_whitespace().collect();
    let (&verb, mut rest) = words.split_first()?;
    if !verb.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let mut particle = None;
    if let Some((&p, tail)) = rest.split_first() {
        if PARTICLES.contains(&p.to_ascii_lowercase().as_str()) {
            particle = Some(p.to_ascii_lowercase());
            rest = tail;
        }
    }
    let split = rest.iter().position(|w| PLACES.contains(&w.to_ascii_lowercase().as_str()));
    let (object, place) = match split {
        Some(i) if i > 0 && i + 1 < rest.len() => (&rest[..i], Some(rest[i..].join(" "))),
        _ => (rest, None),
    };
    if object.is_empty() {
        return None;
    }
    Some(Action { verb: base_form(verb), particle, object: object.join(" "), place })
}

fn verb_phrase(a: &Action) -> String {
    match &a.particle {
        Some(p) => format!("{} {p}", a.verb),
        None => a.verb.clone(),
    }
}

/// All template candidates for one sentence, primary kinds first.
pub fn candidates(narration_idx: usize, sentence: &str) -> Vec<QaSample> {
    let Some(a) = parse_action(sentence) else { return Vec::new() };
    let vp = verb_phrase(&a);
    let mut out = Vec::new();
    let mut push = |question: String, answer: String, kind| {
        out.push(QaSample {
            question,
            answer,
            source_narration_idx: narration_idx,
            kind,
            keyframe_time_range_s: None,
            keyframe_indices: Vec::new(),
            keyframe_fallback: false,
        })
    };
    match &a.place {
        Some(place) => {
            push(format!("What did I {vp} {place}?"), a.object.clone(), QuestionKind::What);
            push(format!("Where did I {vp} {}?", a.object), place.clone(), QuestionKind::Where);
        }
        None => push(format!("What did I {vp}?"), a.object.clone(), QuestionKind::What),
    }
    push(format!("Did I {vp} {}?", a.object), "yes".to_string(), QuestionKind::Did);
    out
}

/// Drops every candidate whose question also appears with a different answer,
/// and keeps only the first of exact duplicates.
pub fn confident(cands: Vec<QaSample>) -> Vec<QaSample> {
    let mut answers: HashMap<String, Vec<String>> = HashMap::new();
    for c in &cands {
        let e = answers.entry(c.question.to_ascii_lowercase()).or_default();
        if !e.contains(&c.answer) {
            e.push(c.answer.clone());
        }
    }
    let mut seen = std::collections::HashSet::new();
    cands
        .into_iter()
        .filter(|c| {
            let q = c.question.to_ascii_lowercase();
            answers[&q].len() == 1 && seen.insert(q)
        })
        .collect()
}

/// Picks up to `n` QA pairs: primary (What/Where) questions in seeded order, then
/// `Did` fillers. Output sorted by narration index, then kind.
pub fn generate_template(paragraph: &Paragraph, n_questions: usize, seed: u64) -> Vec<QaSample> {
    let all: Vec<QaSample> =
        paragraph.sentences.iter().enumerate().flat_map(|(i, s)| candidates(i + 1, s)).collect();
    let all = confident(all);
    let (mut primary, mut filler): (Vec<_>, Vec<_>) = all.into_iter().partition(|q| q.kind != QuestionKind::Did);
    let mut rng = SplitMix64::derive(seed, "template-qa");
    primary.shuffle(&mut rng);
    filler.shuffle(&mut rng);
    let mut out: Vec<QaSample> = primary.into_iter().chain(filler).take(n_questions).collect();
    out.sort_by(|a, b| a.source_narration_idx.cmp(&b.source_narration_idx).then(a.kind.cmp(&b.kind)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn para(lines: &[&str]) -> Paragraph {
        Paragraph {
            sentences: lines.iter().map(|s| s.to_string()).collect(),
            clip_order: (0..lines.len()).collect(),
            warnings: vec![],
        }
    }

    #[test]
    fn knife_example() {
        let qa = generate_template(&para(&["#C C picks up a knife"]), 1, 0);
        assert_eq!(qa.len(), 1);
        assert_eq!(qa[0].question, "What did I pick up?");
        assert_eq!(qa[0].answer, "a knife");
        assert_eq!(qa[0].source_narration_idx, 1);
    }

    #[test]
    fn verb_forms() {
        for (v, b) in [("washes", "wash"), ("carries", "carry"), ("opens", "open"), ("puts", "put"), ("presses", "press"), ("mixes", "mix"), ("touch", "touch")] {
            assert_eq!(base_form(v), b);
        }
        assert_eq!(strip_actor("#C C opens the tap"), "opens the tap");
        assert_eq!(strip_actor("#c c opens the tap"), "opens the tap");
        assert_eq!(strip_actor("opens the tap"), "opens the tap");
    }

    #[test]
    fn place_questions() {
        let c = candidates(3, "#C C puts the cup on the table.");
        assert_eq!(c[0].question, "What did I put on the table?");
        assert_eq!(c[0].answer, "the cup");
        assert_eq!(c[1].question, "Where did I put the cup?");
        assert_eq!(c[1].answer, "on the table");
        assert_eq!(c[2].kind, QuestionKind::Did);
        assert!(c.iter().all(|q| q.source_narration_idx == 3));
    }

    #[test]
    fn ambiguous_questions_are_dropped() {
        let p = para(&["#C C picks up a knife", "#C C picks up a spoon", "#C C opens the fridge"]);
        let qa = generate_template(&p, 10, 0);
        assert!(qa.iter().all(|q| q.question != "What did I pick up?"));
        assert!(qa.iter().any(|q| q.question == "What did I open?" && q.answer == "the fridge"));
    }

    #[test]
    fn seeded_and_bounded() {
        let p = para(&["#C C picks up a knife", "#C C opens the fridge", "#C C puts the bowl in the sink", "#C C washes a plate"]);
        assert_eq!(generate_template(&p, 3, 7), generate_template(&p, 3, 7));
        assert_eq!(generate_template(&p, 3, 7).len(), 3);
        for q in generate_template(&p, 100, 1) {
            assert!((1..=4).contains(&q.source_narration_idx));
        }
        let picks: Vec<_> = (0..10).map(|s| generate_template(&p, 2, s)).collect();
        assert!(picks.iter().any(|x| x != &picks[0]));
        assert!(candidates(1, "#C C 123").is_empty());
    }
}
