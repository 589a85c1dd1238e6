//! Training objectives and their analytic gradients.
//!
//! Alignment uses a sparse-aware MSE over max-pooled pre-activation logits.
//! Retrieval fine-tuning uses a KL term between student and teacher
//! distributions over each query's candidate set (or InfoNCE), plus L1
//! penalties on query and document representations.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::repr::{score_pair, DualViewRepr};

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            context: "smse operands",
            expected: a.len().to_string(),
            actual: b.len().to_string(),
        });
    }
    Ok(())
}

fn active(s: f64, t: f64) -> bool {
    s > 0.0 || t > 0.0
}

/// Mean squared difference over coordinates where either side is positive.
/// An empty active set yields zero.
pub fn smse_loss(student: &[f64], teacher: &[f64]) -> Result<f64> {
    check_len(student, teacher)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (&s, &t) in student.iter().zip(teacher) {
        if active(s, t) {
            sum += (s - t) * (s - t);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Gradient of [`smse_loss`] w.r.t. the student, holding the mask fixed.
pub fn smse_grad(student: &[f64], teacher: &[f64]) -> Result<Vec<f64>> {
    check_len(student, teacher)?;
    let count = student.iter().zip(teacher).filter(|(&s, &t)| active(s, t)).count();
    Ok(student
        .iter()
        .zip(teacher)
        .map(|(&s, &t)| {
            if active(s, t) {
                2.0 * (s - t) / count as f64
            } else {
                0.0
            }
        })
        .collect())
}

/// How a batch of alignment examples is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmseReduction {
    /// Concatenate all examples into one vector, then take the masked mean.
    #[default]
    Flattened,
    /// Masked mean per example, then the plain mean over examples.
    PerExample,
}

/// Batch loss and per-example student gradients.
pub fn smse_batch(
    students: &[&[f64]],
    teachers: &[&[f64]],
    reduction: SmseReduction,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if students.len() != teachers.len() {
        return Err(Error::Shape {
            context: "smse batch",
            expected: students.len().to_string(),
            actual: teachers.len().to_string(),
        });
    }
    if students.is_empty() {
        return Err(Error::EmptyBatch);
    }
    match reduction {
        SmseReduction::PerExample => {
            let b = students.len() as f64;
            let mut loss = 0.0;
            let mut grads = Vec::with_capacity(students.len());
            for (s, t) in students.iter().zip(teachers) {
                loss += smse_loss(s, t)? / b;
                grads.push(smse_grad(s, t)?.into_iter().map(|g| g / b).collect());
            }
            Ok((loss, grads))
        }
        SmseReduction::Flattened => {
            let (mut sum, mut count) = (0.0, 0usize);
            for (s, t) in students.iter().zip(teachers) {
                check_len(s, t)?;
                for (&x, &y) in s.iter().zip(t.iter()) {
                    if active(x, y) {
                        sum += (x - y) * (x - y);
                        count += 1;
                    }
                }
            }
            let denom = count.max(1) as f64;
            let grads = students
                .iter()
                .zip(teachers)
                .map(|(s, t)| {
                    s.iter()
                        .zip(t.iter())
                        .map(|(&x, &y)| if active(x, y) { 2.0 * (x - y) / denom } else { 0.0 })
                        .collect()
                })
                .collect();
            Ok((sum / denom, grads))
        }
    }
}

/// Numerically stable softmax.
pub fn softmax_dist(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub doc_id: String,
    pub teacher: f64,
    pub student: f64,
    pub positive: bool,
}

/// One query's positive plus negatives with teacher and student scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidCandidates {
                query: self.query_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.candidates.len() < 2 {
            return fail("fewer than two candidates");
        }
        if self.candidates.iter().any(|c| !c.teacher.is_finite() || !c.student.is_finite()) {
            return fail("non-finite score");
        }
        match self.candidates.iter().filter(|c| c.positive).count() {
            1 => Ok(()),
            0 => fail("missing positive flag"),
            _ => fail("more than one positive"),
        }
    }

    pub fn positive_index(&self) -> Option<usize> {
        self.candidates.iter().position(|c| c.positive)
    }

    pub fn student_scores(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.student).collect()
    }

    pub fn teacher_scores(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.teacher).collect()
    }
}

fn validate_batch(batch: &[CandidateSet]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.iter().try_for_each(CandidateSet::validate)
}

/// `KL(P_student || P_teacher)` for one candidate set.
fn kl_student_teacher(set: &CandidateSet) -> f64 {
    let ls = log_softmax(&set.student_scores());
    let lt = log_softmax(&set.teacher_scores());
    // Rounding can push an exact zero slightly negative.
    ls.iter().zip(&lt).map(|(s, t)| s.exp() * (s - t)).sum::<f64>().max(0.0)
}

/// Batch mean of `KL(P_student || P_teacher)` over candidate sets.
pub fn kld_loss(batch: &[CandidateSet]) -> Result<f64> {
    validate_batch(batch)?;
    let b = batch.len() as f64;
    Ok(batch.iter().map(kl_student_teacher).sum::<f64>() / b)
}

/// d(kld_loss)/d(student score), per set and candidate.
pub fn kld_score_grads(batch: &[CandidateSet]) -> Result<Vec<Vec<f64>>> {
    validate_batch(batch)?;
    let b = batch.len() as f64;
    Ok(batch
        .iter()
        .map(|set| {
            let ls = log_softmax(&set.student_scores());
            let lt = log_softmax(&set.teacher_scores());
            let kl: f64 = ls.iter().zip(&lt).map(|(s, t)| s.exp() * (s - t)).sum();
            ls.iter()
                .zip(&lt)
                .map(|(s, t)| s.exp() * ((s - t) - kl) / b)
                .collect()
        })
        .collect())
}

/// Mean negative log-likelihood of the positive under the student softmax.
pub fn infonce_loss(batch: &[CandidateSet]) -> Result<f64> {
    validate_batch(batch)?;
    let b = batch.len() as f64;
    Ok(batch
        .iter()
        .map(|set| -log_softmax(&set.student_scores())[set.positive_index().expect("validated")])
        .sum::<f64>()
        / b)
}

pub fn infonce_score_grads(batch: &[CandidateSet]) -> Result<Vec<Vec<f64>>> {
    validate_batch(batch)?;
    let b = batch.len() as f64;
    Ok(batch
        .iter()
        .map(|set| {
            let pos = set.positive_index().expect("validated");
            softmax_dist(&set.student_scores())
                .into_iter()
                .enumerate()
                .map(|(i, p)| (p - if i == pos { 1.0 } else { 0.0 }) / b)
                .collect()
        })
        .collect())
}

/// L1 regularization strengths for queries and documents.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub alpha_q: f64,
    pub alpha_d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_q: 1e-3,
            alpha_d: 1e-5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_q.is_finite() && self.alpha_d.is_finite() && self.alpha_q >= 0.0 && self.alpha_d >= 0.0) {
            return Err(Error::Config(format!("invalid loss weights {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingLoss {
    Kd,
    InfoNce,
}

impl RankingLoss {
    pub fn loss(self, batch: &[CandidateSet]) -> Result<f64> {
        match self {
            RankingLoss::Kd => kld_loss(batch),
            RankingLoss::InfoNce => infonce_loss(batch),
        }
    }

    pub fn score_grads(self, batch: &[CandidateSet]) -> Result<Vec<Vec<f64>>> {
        match self {
            RankingLoss::Kd => kld_score_grads(batch),
            RankingLoss::InfoNce => infonce_score_grads(batch),
        }
    }
}

pub const SCORE_TOLERANCE: f64 = 1e-9;

/// Ranking loss plus `alpha_q * mean L1(queries) + alpha_d * mean L1(docs)`.
///
/// Every student score in `batch` must equal [`score_pair`] of the supplied
/// representations.
pub fn contrastive_loss(
    batch: &[CandidateSet],
    q_reprs: &BTreeMap<String, DualViewRepr>,
    d_reprs: &BTreeMap<String, DualViewRepr>,
    weights: LossWeights,
    mode: RankingLoss,
) -> Result<f64> {
    weights.validate()?;
    for set in batch {
        let q = q_reprs.get(&set.query_id).ok_or_else(|| Error::InvalidCandidates {
            query: set.query_id.clone(),
            reason: "no query representation".into(),
        })?;
        for c in &set.candidates {
            let d = d_reprs.get(&c.doc_id).ok_or_else(|| Error::InvalidCandidates {
                query: set.query_id.clone(),
                reason: format!("no representation for document {}", c.doc_id),
            })?;
            let computed = score_pair(q, d);
            if (computed - c.student).abs() > SCORE_TOLERANCE * computed.abs().max(1.0) {
                return Err(Error::ScoreMismatch {
                    query: set.query_id.clone(),
                    doc: c.doc_id.clone(),
                    given: c.student,
                    computed,
                });
            }
        }
    }
    let ranking = mode.loss(batch)?;
    Ok(ranking + weights.alpha_q * mean_l1(q_reprs.values()) + weights.alpha_d * mean_l1(d_reprs.values()))
}

pub(crate) fn mean_l1<'a>(reprs: impl ExactSizeIterator<Item = &'a DualViewRepr>) -> f64 {
    let n = reprs.len();
    if n == 0 {
        return 0.0;
    }
    reprs.map(DualViewRepr::l1).sum::<f64>() / n as f64
}

/// Central differences `(f(x + eps e_j) - f(x - eps e_j)) / (2 eps)`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let orig = probe[j];
            probe[j] = orig + eps;
            let up = f(&probe);
            probe[j] = orig - eps;
            let down = f(&probe);
            probe[j] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}
