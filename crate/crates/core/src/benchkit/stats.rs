use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::mcq::letter_counts;
use super::types::{Letter, McqItem, MinutesBucket};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub bucket: MinutesBucket,
    pub videos: usize,
    pub qas: usize,
}

/// Per-bucket video and QA counts and per-letter correct counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub buckets: Vec<BucketCounts>,
    pub letters: [usize; 4],
    pub total_videos: usize,
    pub total_qas: usize,
}

pub fn stats(items: &[McqItem]) -> BenchmarkStats {
    let buckets: Vec<BucketCounts> = MinutesBucket::ALL
        .iter()
        .map(|&b| {
            let inb: Vec<&McqItem> = items.iter().filter(|i| i.minutes_bucket == b).collect();
            let videos: HashSet<&str> = inb.iter().map(|i| i.video_id.as_str()).collect();
            BucketCounts { bucket: b, videos: videos.len(), qas: inb.len() }
        })
        .collect();
    BenchmarkStats {
        total_videos: buckets.iter().map(|b| b.videos).sum(),
        total_qas: buckets.iter().map(|b| b.qas).sum(),
        buckets,
        letters: letter_counts(items),
    }
}

impl BenchmarkStats {
    /// Max minus min letter count over the total; 0 for an empty benchmark.
    pub fn letter_spread(&self) -> f64 {
        let max = self.letters.iter().max().copied().unwrap_or(0);
        let min = self.letters.iter().min().copied().unwrap_or(0);
        if self.total_qas == 0 {
            0.0
        } else {
            (max - min) as f64 / self.total_qas as f64
        }
    }

    /// Rows `Minutes,<buckets...>,Sum` then `Videos,...` and `QAs,...`.
    pub fn write_length_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut head = vec!["Minutes".to_string()];
        head.extend(self.buckets.iter().map(|b| b.bucket.label().to_string()));
        head.push("Sum".into());
        csv.write_record(&head)?;
        let row = |name: &str, f: &dyn Fn(&BucketCounts) -> usize, total: usize| {
            let mut r = vec![name.to_string()];
            r.extend(self.buckets.iter().map(|b| f(b).to_string()));
            r.push(total.to_string());
            r
        };
        csv.write_record(row("Videos", &|b| b.videos, self.total_videos))?;
        csv.write_record(row("QAs", &|b| b.qas, self.total_qas))?;
        csv.flush()?;
        Ok(())
    }

    /// Rows `Option,A,B,C,D` then `Count,...`.
    pub fn write_letters_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut head = vec!["Option".to_string()];
        head.extend(Letter::ALL.iter().map(Letter::to_string));
        csv.write_record(&head)?;
        let mut row = vec!["Count".to_string()];
        row.extend(self.letters.iter().map(usize::to_string));
        csv.write_record(&row)?;
        csv.flush()?;
        Ok(())
    }
}

/// Verb counts (the word after "did I") and answer-noun counts (last word of the
/// correct option), sorted by count descending then term.
pub fn term_frequencies(items: &[McqItem]) -> Vec<(&'static str, String, usize)> {
    let mut verbs: BTreeMap<String, usize> = BTreeMap::new();
    let mut nouns: BTreeMap<String, usize> = BTreeMap::new();
    for it in items {
        let words: Vec<String> = it
            .question
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase())
            .collect();
        if let Some(p) = words.windows(2).position(|w| matches!(w[0].as_str(), "did" | "do") && w[1] == "i") {
            if let Some(v) = words.get(p + 2) {
                *verbs.entry(v.clone()).or_default() += 1;
            }
        }
        if let Some(n) = it.answer().split_whitespace().last() {
            let n = n.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase();
            if !n.is_empty() {
                *nouns.entry(n).or_default() += 1;
            }
        }
    }
    let mut out: Vec<(&'static str, String, usize)> = verbs
        .into_iter()
        .map(|(t, c)| ("verb", t, c))
        .chain(nouns.into_iter().map(|(t, c)| ("noun", t, c)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(b.0).then(b.2.cmp(&a.2)).then(a.1.cmp(&b.1)));
    out
}

pub fn write_terms_csv<W: Write>(w: W, terms: &[(&str, String, usize)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["kind", "term", "count"])?;
    for (k, t, c) in terms {
        csv.write_record([k.to_string(), t.clone(), c.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchkit::LengthClass;

    fn item(id: usize, video: &str, bucket: MinutesBucket, correct: Letter) -> McqItem {
        McqItem {
            question_id: format!("q{id}"),
            video_id: video.into(),
            question: "What did I pick up?".into(),
            options: ["a knife".into(), "a pan".into(), "a cup".into(), "a towel".into()],
            correct,
            minutes_bucket: bucket,
            class: bucket.class(),
            duration_s: 60.0,
            keyframe_indices: vec![],
        }
    }

    #[test]
    fn empty_is_zero() {
        let s = stats(&[]);
        assert_eq!((s.total_videos, s.total_qas, s.letters), (0, 0, [0; 4]));
        assert_eq!(s.letter_spread(), 0.0);
    }

    #[test]
    fn counts_and_csv() {
        let items = vec![
            item(0, "a", MinutesBucket::M0_5To1, Letter::A),
            item(1, "a", MinutesBucket::M0_5To1, Letter::B),
            item(2, "b", MinutesBucket::M40To60, Letter::B),
        ];
        assert_eq!(items[2].class, LengthClass::Long);
        let s = stats(&items);
        assert_eq!((s.total_videos, s.total_qas), (2, 3));
        assert_eq!(s.letters, [1, 2, 0, 0]);
        let mut buf = Vec::new();
        s.write_length_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "Minutes,0.5-1,1-2,2-4,4-10,10-20,20-40,40-60,Sum");
        assert_eq!(text.lines().nth(2).unwrap(), "QAs,2,0,0,0,0,0,1,3");
        let terms = term_frequencies(&items);
        assert!(terms.contains(&("verb", "pick".to_string(), 3)));
        assert!(terms.contains(&("noun", "pan".to_string(), 2)));
    }
}
