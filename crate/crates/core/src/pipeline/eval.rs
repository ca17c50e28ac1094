use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{label_name, Dataset, LABEL_SEPARABLE};
use super::metrics::{eer, roc_auc, roc_curve, RocPoint};
use crate::error::{Error, Result};
use crate::model::{threshold_eer, threshold_max_separable, ModelState, Threshold};

/// Records scored per forward pass.
pub const SCORE_CHUNK: usize = 256;

/// Anomaly score of every record, in order. Chunks are scored in parallel;
/// each sample's score does not depend on its chunk.
pub fn score_dataset(model: &ModelState, data: &Dataset) -> Result<Vec<f64>> {
    if data.dim() != model.arch.input_dim() {
        return Err(Error::invalid(format!(
            "data is {0}×{0}, the model expects {1}×{1}",
            data.dim(),
            model.arch.input_dim()
        )));
    }
    let chunks: Vec<Vec<f64>> = data
        .records()
        .par_chunks(SCORE_CHUNK)
        .map(|c| model.anomaly_scores(&model.input_batch(c.iter().map(|r| &r.matrix))?))
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

#[derive(Debug, Clone, Copy)]
pub enum ThresholdSource<'a> {
    /// Equal-error threshold from the labeled test scores.
    Eer,
    /// Largest separable validation score. Without validation scores the
    /// separable test records are used; entangled labels are never read.
    MaxSeparable { validation: Option<&'a [f64]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub separable: Vec<usize>,
    pub entangled: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBreakdown {
    pub label: u8,
    pub name: String,
    pub count: usize,
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_records: usize,
    pub n_separable: usize,
    pub n_entangled: usize,
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub threshold: Threshold,
    pub counts: Counts,
    pub fnr: f64,
    pub fpr: f64,
    pub histogram: Histogram,
    pub roc: Vec<RocPoint>,
    pub per_label: Vec<LabelBreakdown>,
}

const HISTOGRAM_BINS: usize = 20;
const MAX_ROC_POINTS: usize = 512;

fn histogram(scores: &[f64], labels: &[u8]) -> Histogram {
    let top = scores.iter().cloned().fold(0.0, f64::max);
    let width = if top > 0.0 { top / HISTOGRAM_BINS as f64 } else { 1.0 };
    let edges = (0..=HISTOGRAM_BINS).map(|i| i as f64 * width).collect();
    let mut separable = vec![0; HISTOGRAM_BINS];
    let mut entangled = vec![0; HISTOGRAM_BINS];
    for (&s, &l) in scores.iter().zip(labels) {
        let bin = ((s / width) as usize).min(HISTOGRAM_BINS - 1);
        if l == LABEL_SEPARABLE {
            separable[bin] += 1;
        } else {
            entangled[bin] += 1;
        }
    }
    Histogram { edges, separable, entangled }
}

fn thin(points: Vec<RocPoint>) -> Vec<RocPoint> {
    if points.len() <= MAX_ROC_POINTS {
        return points;
    }
    let step = points.len().div_ceil(MAX_ROC_POINTS);
    let last = *points.last().expect("non-empty");
    let mut out: Vec<RocPoint> = points.into_iter().step_by(step).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Builds a report from precomputed scores. Labels: 0 separable, anything
/// else entangled.
pub fn evaluate_scores(scores: &[f64], labels: &[u8], source: ThresholdSource<'_>) -> Result<EvalReport> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let sep: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == LABEL_SEPARABLE).map(|(&s, _)| s).collect();
    let auc = roc_auc(scores, labels)?;
    let (eer_value, eer_b) = eer(scores, labels)?;
    let threshold = match source {
        ThresholdSource::Eer => {
            let ent: Vec<f64> =
                scores.iter().zip(labels).filter(|(_, &l)| l != LABEL_SEPARABLE).map(|(&s, _)| s).collect();
            threshold_eer(&sep, &ent)?
        }
        ThresholdSource::MaxSeparable { validation: Some(v) } => threshold_max_separable(v)?,
        ThresholdSource::MaxSeparable { validation: None } => threshold_max_separable(&sep)?,
    };
    let mut counts = Counts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (l == LABEL_SEPARABLE, threshold.is_entangled(s)) {
            (true, false) => counts.tp += 1,
            (true, true) => counts.fn_ += 1,
            (false, false) => counts.fp += 1,
            (false, true) => counts.tn += 1,
        }
    }
    let n_sep = counts.tp + counts.fn_;
    let n_ent = counts.fp + counts.tn;
    let present: BTreeSet<u8> = labels.iter().copied().filter(|&l| l != LABEL_SEPARABLE).collect();
    let mut per_label = Vec::new();
    for &label in &present {
        let (s, l): (Vec<f64>, Vec<u8>) = scores
            .iter()
            .zip(labels)
            .filter(|(_, &x)| x == LABEL_SEPARABLE || x == label)
            .map(|(&s, &x)| (s, x))
            .unzip();
        let (e, b) = eer(&s, &l)?;
        per_label.push(LabelBreakdown {
            label,
            name: label_name(label).to_string(),
            count: l.iter().filter(|&&x| x == label).count(),
            auc: roc_auc(&s, &l)?,
            eer: e,
            eer_threshold: b,
        });
    }
    Ok(EvalReport {
        n_records: scores.len(),
        n_separable: n_sep,
        n_entangled: n_ent,
        auc,
        eer: eer_value,
        eer_threshold: eer_b,
        threshold,
        counts,
        fnr: counts.fn_ as f64 / n_sep as f64,
        fpr: counts.fp as f64 / n_ent as f64,
        histogram: histogram(scores, labels),
        roc: thin(roc_curve(scores, labels)?),
        per_label,
    })
}

/// Scores a labeled dataset and builds its report.
pub fn evaluate(model: &ModelState, data: &Dataset, source: ThresholdSource<'_>) -> Result<EvalReport> {
    let labels: Vec<u8> = data
        .labels()
        .into_iter()
        .map(|l| l.ok_or_else(|| Error::invalid("evaluation needs a labeled dataset")))
        .collect::<Result<_>>()?;
    let scores = score_dataset(model, data)?;
    evaluate_scores(&scores, &labels, source)
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InternalFailure(e.to_string()))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records      {} ({} separable, {} entangled)", self.n_records, self.n_separable, self.n_entangled);
        let _ = writeln!(s, "AUC          {:.4}", self.auc);
        let _ = writeln!(s, "EER          {:.4} (b = {:.6})", self.eer, self.eer_threshold);
        let _ = writeln!(s, "threshold    {:.6} ({:?})", self.threshold.b, self.threshold.method);
        let c = self.counts;
        let _ = writeln!(s, "TP {}  FN {}  FP {}  TN {}  (FNR {:.4}, FPR {:.4})", c.tp, c.fn_, c.fp, c.tn, self.fnr, self.fpr);
        for l in &self.per_label {
            let _ = writeln!(s, "  {:<18} n={:<6} AUC {:.4}  EER {:.4}", l.name, l.count, l.auc, l.eer);
        }
        s
    }
}

/// Writes `re_0..re_{k−1}, im_0..im_{k−1}, score, label` per record as CSV.
/// Returns the number of rows written.
pub fn export_latents(model: &ModelState, data: &Dataset, path: &Path) -> Result<usize> {
    if data.dim() != model.arch.input_dim() {
        return Err(Error::invalid("dataset dimension does not match the model"));
    }
    let k = model.arch.latent_dim;
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..k)
        .map(|i| format!("re_{i}"))
        .chain((0..k).map(|i| format!("im_{i}")))
        .chain(["score".to_string(), "label".to_string()])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let mut rows = 0;
    for chunk in data.records().chunks(SCORE_CHUNK) {
        let x = model.input_batch(chunk.iter().map(|r| &r.matrix))?;
        let s = model.forward_siamese(&x)?;
        let scores = model.anomaly_scores(&x)?;
        for (b, rec) in chunk.iter().enumerate() {
            let mut fields: Vec<String> = Vec::with_capacity(2 * k + 2);
            fields.extend(s.v1.re()[b * k..(b + 1) * k].iter().map(|v| v.to_string()));
            fields.extend(s.v1.im()[b * k..(b + 1) * k].iter().map(|v| v.to_string()));
            fields.push(scores[b].to_string());
            fields.push(rec.label.map(|l| l.to_string()).unwrap_or_default());
            writeln!(w, "{}", fields.join(","))?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}
