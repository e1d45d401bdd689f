use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::ratings::{unblind, RatingRecord};
use super::sheets::AnswerKey;
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub z: f64,
    pub p_value: f64,
    pub n_subjects: usize,
    pub n_raters: u64,
    pub n_categories: usize,
}

/// Fleiss' kappa over a subjects x categories matrix of rater counts.
///
/// `z` uses the large-sample standard error under the null hypothesis of
/// chance agreement; `p_value` is two-sided.
pub fn fleiss_kappa(counts: &[Vec<u64>]) -> Result<AgreementReport, EvalError> {
    let first = counts
        .first()
        .ok_or_else(|| EvalError::RaggedMatrix("no subjects".into()))?;
    let k = first.len();
    if k == 0 {
        return Err(EvalError::RaggedMatrix("no categories".into()));
    }
    let n: u64 = first.iter().sum();
    for (i, row) in counts.iter().enumerate() {
        if row.len() != k {
            return Err(EvalError::RaggedMatrix(format!(
                "subject {} has {} categories, expected {k}",
                i + 1,
                row.len()
            )));
        }
        let sum: u64 = row.iter().sum();
        if sum != n {
            return Err(EvalError::RaggedMatrix(format!(
                "subject {} has {sum} ratings, expected {n}",
                i + 1
            )));
        }
    }
    if n < 2 {
        return Err(EvalError::RaggedMatrix(format!("need at least 2 raters per subject, got {n}")));
    }

    let subjects = counts.len();
    let mut column_totals = vec![0u64; k];
    for row in counts {
        for (total, c) in column_totals.iter_mut().zip(row) {
            *total += c;
        }
    }
    if column_totals.iter().filter(|&&t| t > 0).count() < 2 {
        return Err(EvalError::DegenerateAgreement);
    }

    let nf = n as f64;
    let big_n = subjects as f64;
    let p: Vec<f64> = column_totals.iter().map(|&t| t as f64 / (big_n * nf)).collect();
    let p_bar = counts
        .iter()
        .map(|row| {
            let sq: u64 = row.iter().map(|c| c * c).sum();
            (sq - n) as f64 / (nf * (nf - 1.0))
        })
        .sum::<f64>()
        / big_n;
    let p_e: f64 = p.iter().map(|pj| pj * pj).sum();
    let kappa = (p_bar - p_e) / (1.0 - p_e);

    let pq: f64 = p.iter().map(|pj| pj * (1.0 - pj)).sum();
    let pq_skew: f64 = p.iter().map(|pj| pj * (1.0 - pj) * (1.0 - 2.0 * pj)).sum();
    let se = (2.0 / (big_n * nf * (nf - 1.0))).sqrt() * (pq * pq - pq_skew).max(0.0).sqrt() / pq;
    let z = kappa / se;
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2);

    Ok(AgreementReport {
        kappa,
        z,
        p_value,
        n_subjects: subjects,
        n_raters: n,
        n_categories: k,
    })
}

/// Builds the subjects x {0,1,2} matrix of preference codes, one subject per
/// (example, line). With an answer key the codes are source preferences
/// (same / expert better / generated better); without one they are the raw
/// slot answers.
pub fn preference_counts(ratings: &[RatingRecord], key: Option<&AnswerKey>) -> Result<Vec<Vec<u64>>, EvalError> {
    let mut by_subject: BTreeMap<(&str, u32), Vec<u64>> = BTreeMap::new();
    for rating in ratings {
        let code = match key {
            Some(key) => unblind(rating, key)?.preference.code(),
            None => rating.slot_preference().code(),
        };
        by_subject
            .entry((rating.example_id.as_str(), rating.line_number))
            .or_insert_with(|| vec![0; 3])[code as usize] += 1;
    }
    Ok(by_subject.into_values().collect())
}
