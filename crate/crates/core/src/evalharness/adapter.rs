use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::benchkit::{normalize, Letter, McqItem};
use crate::embedkit::{FeatureMaps, FrameEmbeddings};
use crate::error::{invalid, Result};
use crate::microlm::argmax;
use crate::pointerkit::{InferOptions, MmEgo};

/// Encoder features for one benchmark video.
#[derive(Clone, Copy, Debug)]
pub struct VideoInput<'a> {
    pub video_id: &'a str,
    pub features: &'a FeatureMaps,
}

/// A model under evaluation. `video = None` is question-only mode.
pub trait ModelAdapter: Sync {
    fn model_id(&self) -> &str;
    /// `Ok(None)` means the output could not be mapped to a letter.
    fn answer(&self, video: Option<VideoInput<'_>>, item: &McqItem) -> Result<Option<Letter>>;
}

/// Encoder features keyed by video id.
#[derive(Clone, Debug, Default)]
pub struct VideoBank {
    videos: HashMap<String, FeatureMaps>,
}

impl VideoBank {
    pub fn insert(&mut self, video_id: impl Into<String>, features: FeatureMaps) {
        self.videos.insert(video_id.into(), features);
    }

    pub fn get(&self, video_id: &str) -> Result<VideoInput<'_>> {
        let (id, features) =
            self.videos.get_key_value(video_id).ok_or_else(|| invalid(format!("no features for video {video_id}")))?;
        Ok(VideoInput { video_id: id, features })
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

/// First standalone A to D token (optionally followed by `.`, `)` or `:`), else
/// an exact normalized option-text match, else `None`.
pub fn extract_letter(output: &str, options: &[String; 4]) -> Option<Letter> {
    for raw in output.split(|c: char| c.is_whitespace() || c == '(' || c == '[') {
        let tok = raw.trim_end_matches(['.', ')', ':', ',', ']']);
        if tok.len() == 1 {
            if let Some(l) = tok.chars().next().filter(char::is_ascii_uppercase).and_then(Letter::from_char) {
                return Some(l);
            }
        }
    }
    let key = normalize(output);
    options.iter().position(|o| normalize(o) == key).and_then(|i| Letter::from_index(i).ok())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    /// Pick the option whose text is most likely as the answer.
    Likelihood,
    /// Greedy-decode from a prompt listing the options, then extract a letter.
    Generate,
}

/// Adapter around a trained model; per-video embeddings are cached.
pub struct MmEgoAdapter {
    model_id: String,
    model: MmEgo,
    opts: InferOptions,
    mode: AnswerMode,
    cache: Mutex<HashMap<String, Arc<FrameEmbeddings>>>,
}

impl MmEgoAdapter {
    pub fn new(model_id: impl Into<String>, model: MmEgo, opts: InferOptions, mode: AnswerMode) -> Self {
        Self { model_id: model_id.into(), model, opts, mode, cache: Mutex::new(HashMap::new()) }
    }

    pub fn model(&self) -> &MmEgo {
        &self.model
    }

    fn embeddings(&self, v: VideoInput<'_>) -> Result<Arc<FrameEmbeddings>> {
        if let Some(e) = self.cache.lock().expect("cache lock").get(v.video_id) {
            return Ok(e.clone());
        }
        let e = Arc::new(self.model.embed(v.features, (0..v.features.frames).collect())?);
        self.cache.lock().expect("cache lock").insert(v.video_id.to_string(), e.clone());
        Ok(e)
    }
}

pub fn mcq_prompt(item: &McqItem) -> String {
    let mut p = item.question.clone();
    for (l, o) in Letter::ALL.iter().zip(&item.options) {
        p.push_str(&format!("\n{l}. {o}"));
    }
    p
}

impl ModelAdapter for MmEgoAdapter {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn answer(&self, video: Option<VideoInput<'_>>, item: &McqItem) -> Result<Option<Letter>> {
        let emb = video.map(|v| self.embeddings(v)).transpose()?;
        match self.mode {
            AnswerMode::Likelihood => {
                let lp = self.model.option_logprobs(emb.as_deref(), &item.question, &item.options, self.opts)?;
                Ok(Some(Letter::from_index(argmax(&lp))?))
            }
            AnswerMode::Generate => {
                let prompt = mcq_prompt(item);
                let text = match emb {
                    Some(e) => self.model.infer(&e, &prompt, self.opts)?.answer,
                    None => {
                        let q = self.model.lm.embed_text(&prompt)?;
                        self.model.lm.generate(&q, 0, self.model.config.max_answer_tokens)?
                    }
                };
                let letter = extract_letter(&text, &item.options);
                if letter.is_none() {
                    log::warn!("{}: no letter in output {text:?}", item.question_id);
                }
                Ok(letter)
            }
        }
    }
}

/// Always answers the same letter.
pub struct ConstantAdapter {
    pub model_id: String,
    pub letter: Letter,
}

impl ModelAdapter for ConstantAdapter {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn answer(&self, _: Option<VideoInput<'_>>, _: &McqItem) -> Result<Option<Letter>> {
        Ok(Some(self.letter))
    }
}

/// Answers a letter fixed by a hash of `(seed, question_id)`.
pub struct SeededRandomAdapter {
    pub model_id: String,
    pub seed: u64,
}

impl ModelAdapter for SeededRandomAdapter {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn answer(&self, _: Option<VideoInput<'_>>, item: &McqItem) -> Result<Option<Letter>> {
        use rand::Rng;
        let mut rng = numkit::SplitMix64::derive(self.seed, &item.question_id);
        Ok(Some(Letter::from_index(rng.random_range(0..4))?))
    }
}
