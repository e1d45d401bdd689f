use serde::{Deserialize, Serialize};

use super::ratings::{unblind, RatingRecord, SourcePreference, UnblindedRating};
use super::sheets::AnswerKey;
use super::{EvalError, GroupColumn, Source};

const COMPLETENESS_LABELS: [&str; 3] = ["Not complete=0", "Complete=1", "Very complete=2"];

/// Share of each count in percent, rounded half-up to two decimals cell by
/// cell. A row of three cells then sums to 100 within 0.01. Returns `None`
/// when every count is zero.
pub fn round_percentages(counts: &[u64]) -> Option<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let total = total as u128;
    Some(
        counts
            .iter()
            .map(|&c| {
                let hundredths = (c as u128 * 20_000 + total) / (2 * total);
                hundredths as f64 / 100.0
            })
            .collect(),
    )
}

/// One distribution row: raw counts over the three scale points and their
/// rounded percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: u64,
    pub counts: [u64; 3],
    pub percentages: Option<[f64; 3]>,
}

impl Summary {
    fn from_counts(counts: [u64; 3]) -> Self {
        let percentages = round_percentages(&counts).map(|p| [p[0], p[1], p[2]]);
        Self {
            n: counts.iter().sum(),
            counts,
            percentages,
        }
    }

    /// Unrounded share of scale point `i`, in percent.
    pub fn exact_percentage(&self, i: usize) -> Option<f64> {
        (self.n > 0).then(|| self.counts[i] as f64 * 100.0 / self.n as f64)
    }

    fn cells(&self) -> [String; 3] {
        match self.percentages {
            Some(p) => p.map(|v| format!("{v:.2}%")),
            None => ["--".to_owned(), "--".to_owned(), "--".to_owned()],
        }
    }

    fn csv_cells(&self) -> [String; 3] {
        match self.percentages {
            Some(p) => p.map(|v| format!("{v:.2}")),
            None => [String::new(), String::new(), String::new()],
        }
    }
}

fn unblind_all(ratings: &[RatingRecord], key: &AnswerKey) -> Result<Vec<UnblindedRating>, EvalError> {
    ratings.iter().map(|r| unblind(r, key)).collect()
}

fn render_grid(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        padded.join(" | ").trim_end().to_owned()
    };
    let mut out = String::new();
    out.push_str(&line(header));
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, EvalError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.write_record(&row).map_err(|e| EvalError::Csv(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessRow {
    pub source: Source,
    pub group: GroupColumn,
    pub summary: Summary,
}

/// "Is the explanation sufficiently complete?" split by source and group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessTable {
    pub rows: Vec<CompletenessRow>,
}

impl CompletenessTable {
    pub fn row(&self, source: Source, group: GroupColumn) -> &Summary {
        &self
            .rows
            .iter()
            .find(|r| r.source == source && r.group == group)
            .expect("every source and group has a row")
            .summary
    }

    pub fn render_text(&self) -> String {
        let mut header = vec!["Source / Group".to_owned()];
        header.extend(COMPLETENESS_LABELS.iter().map(|s| s.to_string()));
        header.push("n".to_owned());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![format!("{} / {}", r.source.label(), r.group.label())];
                row.extend(r.summary.cells());
                row.push(r.summary.n.to_string());
                row
            })
            .collect();
        render_grid(&header, &rows)
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut rows = vec![["source", "group", "n", "not_complete_0", "complete_1", "very_complete_2"]
            .map(String::from)
            .to_vec()];
        for r in &self.rows {
            let mut row = vec![r.source.to_string(), r.group.label().to_lowercase(), r.summary.n.to_string()];
            row.extend(r.summary.csv_cells());
            rows.push(row);
        }
        csv_string(rows)
    }
}

pub fn completeness_distribution(
    ratings: &[RatingRecord],
    key: &AnswerKey,
) -> Result<CompletenessTable, EvalError> {
    let unblinded = unblind_all(ratings, key)?;
    let mut rows = Vec::new();
    for source in [Source::Generated, Source::Expert] {
        for group in GroupColumn::ALL {
            let mut counts = [0u64; 3];
            for r in unblinded.iter().filter(|r| group.contains(r.group)) {
                counts[r.completeness(source) as usize] += 1;
            }
            rows.push(CompletenessRow {
                source,
                group,
                summary: Summary::from_counts(counts),
            });
        }
    }
    Ok(CompletenessTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRow {
    pub group: GroupColumn,
    pub summary: Summary,
}

/// "Which explanation is better?" after mapping slots back to sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTable {
    pub rows: Vec<PreferenceRow>,
}

impl PreferenceTable {
    pub fn row(&self, group: GroupColumn) -> &Summary {
        &self
            .rows
            .iter()
            .find(|r| r.group == group)
            .expect("every group has a row")
            .summary
    }

    pub fn render_text(&self) -> String {
        let mut header = vec!["Group".to_owned()];
        header.extend(SourcePreference::ALL.iter().map(|p| p.label().to_owned()));
        header.push("n".to_owned());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.group.label().to_owned()];
                row.extend(r.summary.cells());
                row.push(r.summary.n.to_string());
                row
            })
            .collect();
        render_grid(&header, &rows)
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut rows = vec![["group", "n", "same_0", "expert_better_1", "generated_better_2"]
            .map(String::from)
            .to_vec()];
        for r in &self.rows {
            let mut row = vec![r.group.label().to_lowercase(), r.summary.n.to_string()];
            row.extend(r.summary.csv_cells());
            rows.push(row);
        }
        csv_string(rows)
    }
}

pub fn preference_distribution(ratings: &[RatingRecord], key: &AnswerKey) -> Result<PreferenceTable, EvalError> {
    let unblinded = unblind_all(ratings, key)?;
    let rows = GroupColumn::ALL
        .into_iter()
        .map(|group| {
            let mut counts = [0u64; 3];
            for r in unblinded.iter().filter(|r| group.contains(r.group)) {
                counts[r.preference.code() as usize] += 1;
            }
            PreferenceRow {
                group,
                summary: Summary::from_counts(counts),
            }
        })
        .collect();
    Ok(PreferenceTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    GeneratedCompleteness,
    ExpertCompleteness,
    Preference,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::GeneratedCompleteness, Metric::ExpertCompleteness, Metric::Preference];

    pub fn label(self) -> &'static str {
        match self {
            Metric::GeneratedCompleteness => "Generated completeness",
            Metric::ExpertCompleteness => "Expert completeness",
            Metric::Preference => "Preference",
        }
    }

    fn value(self, r: &UnblindedRating) -> f64 {
        f64::from(match self {
            Metric::GeneratedCompleteness => r.generated_completeness,
            Metric::ExpertCompleteness => r.expert_completeness,
            Metric::Preference => r.preference.code(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStdevCell {
    pub metric: Metric,
    pub group: GroupColumn,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single observation.
    pub stdev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStdevTable {
    pub cells: Vec<MeanStdevCell>,
}

const MEAN_STDEV_COLUMNS: [GroupColumn; 3] = [GroupColumn::Overall, GroupColumn::Students, GroupColumn::Authors];

fn column_label(group: GroupColumn) -> &'static str {
    match group {
        GroupColumn::Overall => "All",
        other => other.label(),
    }
}

impl MeanStdevTable {
    pub fn cell(&self, metric: Metric, group: GroupColumn) -> &MeanStdevCell {
        self.cells
            .iter()
            .find(|c| c.metric == metric && c.group == group)
            .expect("every metric and group has a cell")
    }

    pub fn render_text(&self) -> String {
        let mut header = vec!["Metric".to_owned()];
        header.extend(MEAN_STDEV_COLUMNS.iter().map(|g| column_label(*g).to_owned()));
        let rows: Vec<Vec<String>> = Metric::ALL
            .iter()
            .map(|&metric| {
                let mut row = vec![metric.label().to_owned()];
                for group in MEAN_STDEV_COLUMNS {
                    let cell = self.cell(metric, group);
                    row.push(match cell.stdev {
                        Some(sd) => format!("{:.2} ({:.2})", cell.mean, sd),
                        None => format!("{:.2} (--)", cell.mean),
                    });
                }
                row
            })
            .collect();
        render_grid(&header, &rows)
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut rows = vec![["metric", "group", "n", "mean", "stdev"].map(String::from).to_vec()];
        for metric in Metric::ALL {
            for group in MEAN_STDEV_COLUMNS {
                let cell = self.cell(metric, group);
                rows.push(vec![
                    format!("{metric:?}").to_lowercase(),
                    column_label(group).to_lowercase(),
                    cell.n.to_string(),
                    format!("{:.6}", cell.mean),
                    cell.stdev.map(|s| format!("{s:.6}")).unwrap_or_default(),
                ]);
            }
        }
        csv_string(rows)
    }
}

fn mean_and_sample_stdev(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, Some((ss / (n - 1.0)).sqrt()))
}

pub fn mean_stdev_summary(ratings: &[RatingRecord], key: &AnswerKey) -> Result<MeanStdevTable, EvalError> {
    let unblinded = unblind_all(ratings, key)?;
    let mut cells = Vec::new();
    for metric in Metric::ALL {
        for group in MEAN_STDEV_COLUMNS {
            let values: Vec<f64> = unblinded
                .iter()
                .filter(|r| group.contains(r.group))
                .map(|r| metric.value(r))
                .collect();
            if values.is_empty() {
                return Err(EvalError::EmptyCell {
                    metric: metric.label().to_owned(),
                    group: column_label(group).to_owned(),
                });
            }
            let (mean, stdev) = mean_and_sample_stdev(&values);
            cells.push(MeanStdevCell {
                metric,
                group,
                n: values.len(),
                mean,
                stdev,
            });
        }
    }
    Ok(MeanStdevTable { cells })
}
