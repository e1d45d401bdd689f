use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One internal rater's binary judgments of one generated explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InternalRating {
    pub rater_id: String,
    pub example_id: String,
    #[serde(rename = "line")]
    pub line_number: u32,
    pub round: u32,
    /// Whether the prompt that produced the explanation carried the
    /// program description.
    pub description_present: bool,
    pub correct: bool,
    pub relevant: Option<bool>,
    pub hallucination: Option<bool>,
    pub additional_info: Option<bool>,
}

impl InternalRating {
    /// Checks the field presence rules. `row` is used in error messages.
    pub fn check(&self, row: usize) -> Result<(), EvalError> {
        if self.round == 0 {
            return Err(EvalError::InvalidRating {
                row,
                message: "round numbers start at 1".into(),
            });
        }
        if self.round == 1 && self.additional_info.is_some() {
            return Err(EvalError::InvalidRating {
                row,
                message: "additional_info is only rated from round 2 on".into(),
            });
        }
        let contradicts = if self.description_present {
            self.hallucination.is_some()
        } else {
            self.relevant.is_some()
        };
        if contradicts {
            return Err(EvalError::MixedConditionLine {
                rater_id: self.rater_id.clone(),
                example_id: self.example_id.clone(),
                line: self.line_number,
                round: self.round,
            });
        }
        Ok(())
    }
}

/// Reads internal ratings from CSV with header
/// `rater_id,example_id,line,round,description_present,correct,relevant,hallucination,additional_info`.
/// Optional columns may be left empty. All rows parse or none do.
pub fn read_internal_ratings_csv(text: &str) -> Result<Vec<InternalRating>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut ratings = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, row) in reader.deserialize::<InternalRating>().enumerate() {
        let row_number = index + 2;
        let rating = row.map_err(|e| EvalError::InvalidRating {
            row: row_number,
            message: e.to_string(),
        })?;
        rating.check(row_number)?;
        let identity = (
            rating.rater_id.clone(),
            rating.example_id.clone(),
            rating.line_number,
            rating.round,
            rating.description_present,
        );
        if !seen.insert(identity) {
            return Err(EvalError::InvalidRating {
                row: row_number,
                message: "duplicate rating for this rater, line, round and condition".into(),
            });
        }
        ratings.push(rating);
    }
    Ok(ratings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InternalMetric {
    Correctness,
    Relevance,
    Hallucination,
    AdditionalInfo,
}

impl InternalMetric {
    pub fn code(self) -> &'static str {
        match self {
            InternalMetric::Correctness => "C",
            InternalMetric::Relevance => "R",
            InternalMetric::Hallucination => "H",
            InternalMetric::AdditionalInfo => "A",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InternalMetric::Correctness => "Correctness",
            InternalMetric::Relevance => "Relevance to program description",
            InternalMetric::Hallucination => "Explanation contains hallucinations",
            InternalMetric::AdditionalInfo => "Additional information compared to 1st round",
        }
    }

    fn value(self, r: &InternalRating) -> Option<bool> {
        match self {
            InternalMetric::Correctness => Some(r.correct),
            InternalMetric::Relevance => r.relevant,
            InternalMetric::Hallucination => r.hallucination,
            InternalMetric::AdditionalInfo => r.additional_info,
        }
    }
}

/// Min, max and average of per-rater percentages for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: InternalMetric,
    pub n_raters: usize,
    pub min: f64,
    pub max: f64,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalSection {
    pub description_present: bool,
    pub round: u32,
    pub metrics: Vec<MetricSummary>,
}

impl InternalSection {
    pub fn metric(&self, metric: InternalMetric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalSummary {
    pub sections: Vec<InternalSection>,
}

impl InternalSummary {
    pub fn section(&self, description_present: bool, round: u32) -> Option<&InternalSection> {
        self.sections
            .iter()
            .find(|s| s.description_present == description_present && s.round == round)
    }

    /// One Min/Max/Average table per condition, columns grouped by round.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for present in [true, false] {
            let sections: Vec<&InternalSection> =
                self.sections.iter().filter(|s| s.description_present == present).collect();
            if sections.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(if present {
                "Program description present in the prompt\n"
            } else {
                "Program description not present in the prompt\n"
            });
            let columns: Vec<(u32, &MetricSummary)> =
                sections.iter().flat_map(|s| s.metrics.iter().map(move |m| (s.round, m))).collect();
            let mut header = vec![String::new()];
            header.extend(columns.iter().map(|(round, m)| format!("R{round} {}", m.metric.code())));
            let mut rows = Vec::new();
            for (label, pick) in [
                ("Min", (|m: &MetricSummary| m.min) as fn(&MetricSummary) -> f64),
                ("Max", |m| m.max),
                ("Average", |m| m.average),
            ] {
                let mut row = vec![label.to_owned()];
                row.extend(columns.iter().map(|(_, m)| format!("{:.2}%", pick(m))));
                rows.push(row);
            }
            let widths: Vec<usize> = (0..header.len())
                .map(|i| rows.iter().map(|r: &Vec<String>| r[i].len()).chain([header[i].len()]).max().unwrap())
                .collect();
            for row in std::iter::once(&header).chain(rows.iter()) {
                let cells: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                out.push_str(cells.join(" | ").trim_end());
                out.push('\n');
            }
            let used: BTreeSet<InternalMetric> = columns.iter().map(|(_, m)| m.metric).collect();
            for metric in used {
                out.push_str(&format!("{}: {}\n", metric.code(), metric.label()));
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| EvalError::Csv(e.to_string());
        writer
            .write_record(["description_present", "round", "metric", "n_raters", "min", "max", "average"])
            .map_err(err)?;
        for s in &self.sections {
            for m in &s.metrics {
                writer
                    .write_record([
                        s.description_present.to_string(),
                        s.round.to_string(),
                        m.metric.code().to_owned(),
                        m.n_raters.to_string(),
                        format!("{:.2}", m.min),
                        format!("{:.2}", m.max),
                        format!("{:.2}", m.average),
                    ])
                    .map_err(err)?;
            }
        }
        let bytes = writer.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

const METRIC_ORDER: [InternalMetric; 4] = [
    InternalMetric::Correctness,
    InternalMetric::Relevance,
    InternalMetric::Hallucination,
    InternalMetric::AdditionalInfo,
];

/// Per-rater percentages of "yes" answers for every metric, then
/// min/max/average across raters, per condition and round.
pub fn internal_rating_summary(ratings: &[InternalRating]) -> Result<InternalSummary, EvalError> {
    for (i, r) in ratings.iter().enumerate() {
        r.check(i + 1)?;
    }
    let mut groups: BTreeMap<(std::cmp::Reverse<bool>, u32), Vec<&InternalRating>> = BTreeMap::new();
    for r in ratings {
        groups
            .entry((std::cmp::Reverse(r.description_present), r.round))
            .or_default()
            .push(r);
    }
    let mut sections = Vec::new();
    for ((std::cmp::Reverse(description_present), round), rows) in groups {
        let mut metrics = Vec::new();
        for metric in METRIC_ORDER {
            let mut per_rater: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
            for r in &rows {
                if let Some(value) = metric.value(r) {
                    let entry = per_rater.entry(r.rater_id.as_str()).or_default();
                    entry.0 += u64::from(value);
                    entry.1 += 1;
                }
            }
            if per_rater.is_empty() {
                continue;
            }
            let shares: Vec<f64> = per_rater
                .values()
                .map(|&(yes, total)| yes as f64 * 100.0 / total as f64)
                .collect();
            metrics.push(MetricSummary {
                metric,
                n_raters: shares.len(),
                min: shares.iter().copied().fold(f64::INFINITY, f64::min),
                max: shares.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                average: shares.iter().sum::<f64>() / shares.len() as f64,
            });
        }
        sections.push(InternalSection {
            description_present,
            round,
            metrics,
        });
    }
    Ok(InternalSummary { sections })
}
