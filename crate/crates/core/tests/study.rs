mod common;

use std::collections::HashMap;
use std::fs;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weat_core::analysis::is_structural;
use weat_core::eval::{
    build_sheets, completeness_distribution, filter_comparable, fleiss_kappa, mean_stdev_summary,
    preference_counts, preference_distribution, read_ratings_csv, AnswerKey, ComparisonSheet, EvalError,
    EvaluatorGroup, GroupColumn, Metric, RatingRecord, Source, SourcePreference, StudyExample, TextMode,
};
use weat_core::gateway::MockProvider;
use weat_core::{accept_staged, default_config, run_generation, MergePolicy, Selections, WorkedExample};

use common::*;

const SEED: u64 = 2024;

fn generated(name: &str) -> WorkedExample {
    let example = load_example(name);
    let provider = MockProvider::new(examples_dir());
    let policy = MergePolicy::default();
    let transcript = run_generation(&example, &default_config(), &provider, &policy, |_| {}).unwrap();
    accept_staged(&example, &transcript, &Selections::accept_all(), &policy, t0()).unwrap()
}

fn corpus() -> Vec<StudyExample> {
    EXAMPLES
        .iter()
        .map(|name| StudyExample::from_pair(&generated(name), &load_expert(name), TextMode::AllLevels).unwrap())
        .collect()
}

fn evaluators() -> Vec<(String, EvaluatorGroup)> {
    let students = (1..=9).map(|i| (format!("s{i:02}"), EvaluatorGroup::Students));
    let authors = (1..=6).map(|i| (format!("a{i:02}"), EvaluatorGroup::Authors));
    students.chain(authors).collect()
}

fn sheets() -> Vec<ComparisonSheet> {
    let ids: Vec<String> = evaluators().into_iter().map(|(id, _)| id).collect();
    build_sheets(&corpus(), &ids, SEED).unwrap()
}

fn study_file(name: &str, actual: &str) {
    let path = fixtures().join("study").join(name);
    if std::env::var_os("WEAT_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    assert!(read(&path) == actual, "{} is out of date", path.display());
}

#[test]
fn exclusion_accounting_matches_reported_counts() {
    let corpus = corpus();
    let set = filter_comparable(corpus.iter().flat_map(|e| e.lines.iter()));
    assert_eq!((set.comparable.len(), set.generated_only, set.expert_only), (45, 18, 5));

    let generated_only: Vec<_> = corpus
        .iter()
        .flat_map(|e| &e.lines)
        .filter(|l| l.generated.is_some() && l.expert.is_none())
        .collect();
    let structural = generated_only.iter().filter(|l| is_structural(&l.code)).count();
    assert_eq!(structural, 14);
    let expert_only_point = corpus
        .iter()
        .flat_map(|e| &e.lines)
        .filter(|l| l.generated.is_none() && l.expert.is_some() && l.example_id == "PointTester")
        .count();
    assert_eq!(expert_only_point, 4);
}

#[test]
fn sheets_are_pinned_and_blind() {
    let sheets = sheets();
    assert_eq!(sheets.len(), 15);
    assert_eq!(sheets, self::sheets());
    let key = AnswerKey::from_sheets(&sheets);
    assert_eq!(key.len(), 15 * 45);
    study_file("answer-key.csv", &key.to_csv().unwrap());
    let mut evaluators_csv = String::from("evaluator_id,group\n");
    for (id, group) in evaluators() {
        evaluators_csv.push_str(&format!("{id},{}\n", group.label().to_lowercase()));
    }
    study_file("evaluators.csv", &evaluators_csv);

    for sheet in &sheets {
        let generated_first = sheet.items.iter().filter(|i| i.slot_a_source == Source::Generated).count();
        assert!(generated_first == 22 || generated_first == 23);
        let markdown = sheet.render_markdown();
        assert!(!markdown.contains("generated") && !markdown.contains("expert"));
        assert!(sheet.items.iter().all(|i| !i.slot_a.is_empty() && !i.slot_b.is_empty()));
    }
}

/// Per-group totals over (line, evaluator) observations, in source terms:
/// generated completeness, expert completeness, preference.
struct GroupTotals {
    generated: [usize; 3],
    expert: [usize; 3],
    preference: [usize; 3],
}

fn spread(counts: [usize; 3], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut values: Vec<u8> = (0..3u8).flat_map(|v| std::iter::repeat_n(v, counts[v as usize])).collect();
    values.shuffle(rng);
    values
}

/// Ratings whose un-blinded distributions have the given totals.
fn shaped_ratings(sheets: &[ComparisonSheet], totals: &[(EvaluatorGroup, GroupTotals)]) -> Vec<RatingRecord> {
    let groups: HashMap<String, EvaluatorGroup> = evaluators().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ratings = Vec::new();
    for (group, t) in totals {
        let mut g = spread(t.generated, &mut rng).into_iter();
        let mut e = spread(t.expert, &mut rng).into_iter();
        let mut p = spread(t.preference, &mut rng).into_iter();
        for sheet in sheets.iter().filter(|s| groups[&s.evaluator_id] == *group) {
            for item in &sheet.items {
                let (gc, ec) = (g.next().unwrap(), e.next().unwrap());
                let preference = SourcePreference::ALL[p.next().unwrap() as usize];
                let (a, b) = match item.slot_a_source {
                    Source::Generated => (gc, ec),
                    Source::Expert => (ec, gc),
                };
                ratings.push(RatingRecord {
                    evaluator_id: sheet.evaluator_id.clone(),
                    evaluator_group: *group,
                    example_id: item.example_id.clone(),
                    line_number: item.line_number,
                    completeness_a: a,
                    completeness_b: b,
                    preference: preference.to_slot(item.slot_a_source).code(),
                });
            }
        }
        assert!(g.next().is_none() && e.next().is_none() && p.next().is_none());
    }
    ratings
}

fn ratings_csv(ratings: &[RatingRecord]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in ratings {
        writer.serialize(r).unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

/// 9 students and 6 authors over 45 lines, shaped after the reported study.
fn study_shaped() -> (Vec<RatingRecord>, AnswerKey) {
    let sheets = sheets();
    let ratings = shaped_ratings(
        &sheets,
        &[
            (
                EvaluatorGroup::Students,
                GroupTotals {
                    generated: [0, 54, 351],
                    expert: [9, 225, 171],
                    preference: [133, 65, 207],
                },
            ),
            (
                EvaluatorGroup::Authors,
                GroupTotals {
                    generated: [4, 88, 178],
                    expert: [38, 156, 76],
                    preference: [39, 74, 157],
                },
            ),
        ],
    );
    (ratings, AnswerKey::from_sheets(&sheets))
}

#[test]
fn study_shaped_ratings_reproduce_reported_distributions() {
    let (ratings, key) = study_shaped();
    let csv = ratings_csv(&ratings);
    study_file("ratings.csv", &csv);
    assert_eq!(read_ratings_csv(&csv).unwrap(), ratings);

    let completeness = completeness_distribution(&ratings, &key).unwrap();
    let expected = [
        (Source::Generated, GroupColumn::Students, [0.00, 13.33, 86.67]),
        (Source::Generated, GroupColumn::Authors, [1.48, 32.59, 65.93]),
        (Source::Generated, GroupColumn::Overall, [0.59, 21.04, 78.37]),
        (Source::Expert, GroupColumn::Students, [2.22, 55.56, 42.22]),
        (Source::Expert, GroupColumn::Authors, [14.07, 57.78, 28.15]),
        (Source::Expert, GroupColumn::Overall, [6.96, 56.44, 36.59]),
    ];
    for (source, group, percentages) in expected {
        assert_eq!(completeness.row(source, group).percentages, Some(percentages), "{source} {group:?}");
    }

    let preference = preference_distribution(&ratings, &key).unwrap();
    for (group, percentages) in [
        (GroupColumn::Students, [32.84, 16.05, 51.11]),
        (GroupColumn::Authors, [14.44, 27.41, 58.15]),
        (GroupColumn::Overall, [25.48, 20.59, 53.93]),
    ] {
        assert_eq!(preference.row(group).percentages, Some(percentages), "{group:?}");
    }

    // The reported averages appear under the column headers All/Students/Authors,
    // but match the Students/Authors/All cells of these ratings respectively.
    let means = mean_stdev_summary(&ratings, &key).unwrap();
    for (metric, reported) in [
        (Metric::GeneratedCompleteness, [1.867, 1.644, 1.778]),
        (Metric::ExpertCompleteness, [1.400, 1.141, 1.296]),
        (Metric::Preference, [1.183, 1.437, 1.284]),
    ] {
        for (group, value) in [GroupColumn::Students, GroupColumn::Authors, GroupColumn::Overall]
            .into_iter()
            .zip(reported)
        {
            let mean = means.cell(metric, group).mean;
            assert!((mean - value).abs() < 0.0005, "{metric:?} {group:?}: {mean}");
        }
    }
}

/// Straight recount over the CSV rows, independent of the table code.
struct Recount {
    completeness: HashMap<(Source, &'static str), [u64; 3]>,
    preference: HashMap<&'static str, [u64; 3]>,
    values: HashMap<(&'static str, &'static str), Vec<f64>>,
}

fn recount(ratings: &[RatingRecord], key: &AnswerKey) -> Recount {
    let mut out = Recount {
        completeness: HashMap::new(),
        preference: HashMap::new(),
        values: HashMap::new(),
    };
    for r in ratings {
        let a_is_generated = key.slot_a_source(&r.evaluator_id, &r.example_id, r.line_number).unwrap() == Source::Generated;
        let (g, e) = if a_is_generated {
            (r.completeness_a, r.completeness_b)
        } else {
            (r.completeness_b, r.completeness_a)
        };
        let p = match (r.preference, a_is_generated) {
            (0, _) => 0,
            (1, true) | (2, false) => 2,
            _ => 1,
        };
        let group = if r.evaluator_group == EvaluatorGroup::Students { "students" } else { "authors" };
        for column in [group, "overall"] {
            out.completeness.entry((Source::Generated, column)).or_default()[g as usize] += 1;
            out.completeness.entry((Source::Expert, column)).or_default()[e as usize] += 1;
            out.preference.entry(column).or_default()[p] += 1;
            out.values.entry(("g", column)).or_default().push(g as f64);
            out.values.entry(("e", column)).or_default().push(e as f64);
            out.values.entry(("p", column)).or_default().push(p as f64);
        }
    }
    out
}

fn column_name(group: GroupColumn) -> &'static str {
    match group {
        GroupColumn::Students => "students",
        GroupColumn::Authors => "authors",
        GroupColumn::Overall => "overall",
    }
}

fn oracle_percent(counts: [u64; 3]) -> [f64; 3] {
    let n: u64 = counts.iter().sum();
    counts.map(|c| (c as f64 * 100.0 / n as f64 * 100.0).round() / 100.0)
}

fn random_ratings(seed: u64) -> (Vec<RatingRecord>, AnswerKey) {
    use rand::Rng;
    let sheets = sheets();
    let groups: HashMap<String, EvaluatorGroup> = evaluators().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratings = Vec::new();
    for sheet in &sheets {
        for item in &sheet.items {
            ratings.push(RatingRecord {
                evaluator_id: sheet.evaluator_id.clone(),
                evaluator_group: groups[&sheet.evaluator_id],
                example_id: item.example_id.clone(),
                line_number: item.line_number,
                completeness_a: rng.gen_range(0..3),
                completeness_b: rng.gen_range(0..3),
                preference: rng.gen_range(0..3),
            });
        }
    }
    (ratings, AnswerKey::from_sheets(&sheets))
}

#[test]
fn report_tables_equal_flat_recount() {
    for seed in 0..5 {
        let (ratings, key) = random_ratings(seed);
        let oracle = recount(&ratings, &key);
        let completeness = completeness_distribution(&ratings, &key).unwrap();
        let preference = preference_distribution(&ratings, &key).unwrap();
        let means = mean_stdev_summary(&ratings, &key).unwrap();
        for group in GroupColumn::ALL {
            let column = column_name(group);
            for source in [Source::Generated, Source::Expert] {
                let row = completeness.row(source, group);
                let counts = oracle.completeness[&(source, column)];
                assert_eq!(row.counts, counts);
                assert_eq!(row.percentages, Some(oracle_percent(counts)));
                assert!((row.percentages.unwrap().iter().sum::<f64>() - 100.0).abs() <= 0.01 + 1e-9);
            }
            let counts = oracle.preference[column];
            assert_eq!(preference.row(group).counts, counts);
            assert_eq!(preference.row(group).percentages, Some(oracle_percent(counts)));
            for (metric, tag) in [
                (Metric::GeneratedCompleteness, "g"),
                (Metric::ExpertCompleteness, "e"),
                (Metric::Preference, "p"),
            ] {
                let values = &oracle.values[&(tag, column)];
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                let cell = means.cell(metric, group);
                assert!((cell.mean - mean).abs() < 1e-12);
                assert!((cell.stdev.unwrap() - var.sqrt()).abs() < 1e-12);
            }
        }
        let text = completeness.render_text() + &preference.render_text() + &means.render_text();
        for label in ["Not complete", "Complete", "Very complete", "Both are the same", "Students", "Authors", "Overall", "All"] {
            assert!(text.contains(label), "missing {label}");
        }
    }
}

/// Fleiss' kappa from the agreement-over-pairs form, written separately.
fn kappa_oracle(counts: &[Vec<u64>]) -> f64 {
    let subjects = counts.len() as f64;
    let raters: u64 = counts[0].iter().sum();
    let n = raters as f64;
    let mut agreeing_pairs = 0.0;
    let mut totals = vec![0.0; counts[0].len()];
    for row in counts {
        for (j, &c) in row.iter().enumerate() {
            agreeing_pairs += (c * c.saturating_sub(1)) as f64;
            totals[j] += c as f64;
        }
    }
    let observed = agreeing_pairs / (subjects * n * (n - 1.0));
    let expected: f64 = totals.iter().map(|t| (t / (subjects * n)).powi(2)).sum();
    (observed - expected) / (1.0 - expected)
}

#[test]
fn kappa_over_study_ratings() {
    for seed in 0..5 {
        let (ratings, key) = random_ratings(seed);
        let counts = preference_counts(&ratings, Some(&key)).unwrap();
        assert_eq!(counts.len(), 45);
        let report = fleiss_kappa(&counts).unwrap();
        assert_eq!((report.n_subjects, report.n_raters, report.n_categories), (45, 15, 3));
        assert!((report.kappa - kappa_oracle(&counts)).abs() < 1e-9);
    }
    let (ratings, key) = study_shaped();
    let report = fleiss_kappa(&preference_counts(&ratings, Some(&key)).unwrap()).unwrap();
    assert!(report.kappa.abs() < 0.2, "{}", report.kappa);

    let mut missing = ratings.clone();
    missing.pop();
    assert!(matches!(
        fleiss_kappa(&preference_counts(&missing, Some(&key)).unwrap()),
        Err(EvalError::RaggedMatrix(_))
    ));
}
