use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adapter::{ModelAdapter, VideoBank};
use crate::benchkit::{LengthClass, Letter, McqItem};
use crate::error::{invalid, Result};

/// Rounds half up to two decimals; only for reporting.
pub fn round2(x: f64) -> f64 {
    ((x * 100.0) + 0.5 + 1e-9).floor() / 100.0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    /// `None` when the model output had no recognizable letter; scored as wrong.
    pub choice: Option<Letter>,
}

/// Percent accuracy per length class plus their unweighted mean; absent classes
/// are `None` and do not enter the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub short: Option<f64>,
    pub medium: Option<f64>,
    pub long: Option<f64>,
}

impl AccuracyRow {
    pub fn from_classes(short: f64, medium: f64, long: f64) -> Self {
        Self { short: Some(short), medium: Some(medium), long: Some(long) }
    }

    pub fn classes(&self) -> [Option<f64>; 3] {
        [self.short, self.medium, self.long]
    }

    pub fn get(&self, class: LengthClass) -> Option<f64> {
        self.classes()[class as usize]
    }

    fn set(&mut self, class: LengthClass, v: Option<f64>) {
        match class {
            LengthClass::Short => self.short = v,
            LengthClass::Medium => self.medium = v,
            LengthClass::Long => self.long = v,
        }
    }

    pub fn avg(&self) -> Option<f64> {
        mean(&self.classes().into_iter().flatten().collect::<Vec<_>>())
    }

    /// `[short, medium, long, avg]`, each rounded for reporting.
    pub fn rounded(&self) -> [Option<f64>; 4] {
        let [s, m, l] = self.classes();
        [s, m, l, self.avg()].map(|v| v.map(round2))
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Accuracy on the benchmark minus `exclude`. Every remaining item needs a prediction.
pub fn accuracy(predictions: &[Prediction], bench: &[McqItem], exclude: &HashSet<String>) -> Result<AccuracyRow> {
    let by_id: HashMap<&str, Option<Letter>> =
        predictions.iter().map(|p| (p.question_id.as_str(), p.choice)).collect();
    let mut correct = [0usize; 3];
    let mut total = [0usize; 3];
    let mut missing = Vec::new();
    for it in bench.iter().filter(|i| !exclude.contains(&i.question_id)) {
        let Some(choice) = by_id.get(it.question_id.as_str()) else {
            missing.push(it.question_id.as_str());
            continue;
        };
        let c = it.class as usize;
        total[c] += 1;
        if *choice == Some(it.correct) {
            correct[c] += 1;
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(invalid(format!("{} items lack predictions: {}", missing.len(), shown.join(", "))));
    }
    let mut row = AccuracyRow::default();
    for class in LengthClass::ALL {
        let c = class as usize;
        row.set(class, (total[c] > 0).then(|| 100.0 * correct[c] as f64 / total[c] as f64));
    }
    Ok(row)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasSet {
    pub model_id: String,
    pub biased_question_ids: BTreeSet<String>,
}

impl BiasSet {
    pub fn ids(&self) -> HashSet<String> {
        self.biased_question_ids.iter().cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub predictions: Vec<Prediction>,
    /// `(question_id, error)` for items whose adapter call failed.
    pub failures: Vec<(String, String)>,
}

/// Runs the adapter on every item, with video features when `videos` is given
/// and question-only otherwise. At most `max_in_flight` calls run at once; output
/// follows benchmark order.
pub fn run_predictions(
    adapter: &dyn ModelAdapter,
    bench: &[McqItem],
    videos: Option<&VideoBank>,
    max_in_flight: usize,
) -> Result<RunOutput> {
    let call = |it: &McqItem| -> Result<Option<Letter>> {
        let v = videos.map(|b| b.get(&it.video_id)).transpose()?;
        adapter.answer(v, it)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| invalid(e.to_string()))?;
    let results: Vec<Result<Option<Letter>>> = pool.install(|| bench.par_iter().map(call).collect());
    let mut out = RunOutput { predictions: Vec::with_capacity(bench.len()), failures: Vec::new() };
    for (it, r) in bench.iter().zip(results) {
        let choice = r.unwrap_or_else(|e| {
            log::warn!("{}: {e}", it.question_id);
            out.failures.push((it.question_id.clone(), e.to_string()));
            None
        });
        out.predictions.push(Prediction { question_id: it.question_id.clone(), choice });
    }
    Ok(out)
}

/// Items answered correctly with no visual input. Failed items count as unbiased.
pub fn extract_bias_set(adapter: &dyn ModelAdapter, bench: &[McqItem], max_in_flight: usize) -> Result<(BiasSet, RunOutput)> {
    let run = run_predictions(adapter, bench, None, max_in_flight)?;
    let biased_question_ids = bench
        .iter()
        .zip(&run.predictions)
        .filter(|(it, p)| p.choice == Some(it.correct))
        .map(|(it, _)| it.question_id.clone())
        .collect();
    Ok((BiasSet { model_id: adapter.model_id().to_string(), biased_question_ids }, run))
}

/// Per-class mean over rows (rows lacking a class are skipped for that class).
pub fn mda_of_rows(rows: &[AccuracyRow]) -> AccuracyRow {
    let mut out = AccuracyRow::default();
    for class in LengthClass::ALL {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r.get(class)).collect();
        out.set(class, mean(&vals));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_id: String,
    pub original: AccuracyRow,
    /// One row per exclusion model, in bias-set order.
    pub excluded: Vec<AccuracyRow>,
    pub mda: AccuracyRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub exclusion_models: Vec<String>,
    pub models: Vec<ModelReport>,
}

/// Every model is scored on the benchmark minus each bias set in turn; its MDA is
/// the mean over those debiased rows.
pub fn mda(predictions: &[(String, Vec<Prediction>)], bias_sets: &[BiasSet], bench: &[McqItem]) -> Result<EvalReport> {
    let excl: Vec<HashSet<String>> = bias_sets.iter().map(BiasSet::ids).collect();
    let models = predictions
        .iter()
        .map(|(id, preds)| {
            let original = accuracy(preds, bench, &HashSet::new())?;
            let excluded = excl.iter().map(|e| accuracy(preds, bench, e)).collect::<Result<Vec<_>>>()?;
            let mda = if excluded.is_empty() { original } else { mda_of_rows(&excluded) };
            Ok(ModelReport { model_id: id.clone(), original, excluded, mda })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { exclusion_models: bias_sets.iter().map(|b| b.model_id.clone()).collect(), models })
}

/// Percentage-point decrease from `original` to `debiased`.
pub fn drop(original: f64, debiased: f64) -> f64 {
    original - debiased
}

/// Relative drop in percent from the large-budget to the small-budget accuracy.
pub fn rel_diff(acc_large: f64, acc_small: f64) -> Result<f64> {
    if !(acc_large > 0.0) || !(acc_small >= 0.0) {
        return Err(invalid(format!("rel_diff needs a positive baseline, got ({acc_large}, {acc_small})")));
    }
    Ok((acc_large - acc_small) / acc_large * 100.0)
}
