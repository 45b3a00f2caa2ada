//! Aggregating grades into per-group percentages and rendering them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::CorpusManifest;
use crate::experiment::{ExplanationRecord, Job};
use crate::grading::{GradeRecord, Metric};
use crate::model::{Language, ParseEnumError, Strategy, Tool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Total,
    Tool,
    Language,
    Strategy,
    /// Every sample of each model.
    ModelAll,
    /// Only sample 0 of each model.
    ModelPass1,
    /// Each bug split by strategy.
    PerBug,
}

impl Grouping {
    pub const ALL: [Grouping; 7] = [
        Grouping::Total,
        Grouping::Tool,
        Grouping::Language,
        Grouping::Strategy,
        Grouping::ModelAll,
        Grouping::ModelPass1,
        Grouping::PerBug,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Total => "total",
            Grouping::Tool => "tool",
            Grouping::Language => "language",
            Grouping::Strategy => "strategy",
            Grouping::ModelAll => "model_all",
            Grouping::ModelPass1 => "model_pass1",
            Grouping::PerBug => "per_bug",
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grouping {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Grouping::ALL
            .into_iter()
            .find(|g| g.as_str() == norm)
            .ok_or_else(|| ParseEnumError::new("grouping", s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupRow {
    pub label: String,
    /// Set on per-bug rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bug_id: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    pub n: usize,
    /// Yes-counts in metric order.
    pub yes: [usize; 5],
}

impl GroupRow {
    fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            bug_id: None,
            strategy: None,
            n: 0,
            yes: [0; 5],
        }
    }

    fn add(&mut self, grade: &GradeRecord) {
        self.n += 1;
        for (count, yes) in self.yes.iter_mut().zip(grade.answers()) {
            *count += usize::from(yes);
        }
    }

    pub fn yes_count(&self, metric: Metric) -> usize {
        self.yes[metric as usize]
    }

    /// Percentage with two decimals, `None` for an empty group.
    pub fn percent(&self, metric: Metric) -> Option<String> {
        percent_2dp(self.yes_count(metric), self.n)
    }
}

/// `100 * yes / n` rounded half-up to two decimals.
pub fn percent_2dp(yes: usize, n: usize) -> Option<String> {
    if n == 0 {
        return None;
    }
    let hundredths = (20_000 * yes + n) / (2 * n);
    Some(format!("{}.{:02}", hundredths / 100, hundredths % 100))
}

/// `100 * yes / n` rounded half-up to a whole percent.
pub fn percent_whole(yes: usize, n: usize) -> Option<String> {
    (n > 0).then(|| format!("{}%", (200 * yes + n) / (2 * n)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AggregateReport {
    pub grouping: Grouping,
    /// Grades that fell into some group; equals the sum of row `n`.
    pub total: usize,
    pub rows: Vec<GroupRow>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("grade for {0} has no matching response record")]
    DanglingGrade(Job),
    #[error("bug {0} is not in the manifest")]
    UnknownBug(u32),
}

/// Groups `grades` and counts yes-answers per metric.
///
/// Model rows follow the order models first appear in `records`; per-bug rows
/// cover every manifest bug, EC before ECL, even when ungraded.
pub fn aggregate(
    records: &[ExplanationRecord],
    grades: &[GradeRecord],
    grouping: Grouping,
    manifest: &CorpusManifest,
) -> Result<AggregateReport, AggregateError> {
    let known: HashMap<&Job, ()> = records.iter().map(|r| (&r.key, ())).collect();
    let mut language = HashMap::new();
    for grade in grades {
        if !known.contains_key(&grade.key) {
            return Err(AggregateError::DanglingGrade(grade.key.clone()));
        }
        let bug = manifest
            .bug(grade.key.bug_id)
            .ok_or(AggregateError::UnknownBug(grade.key.bug_id))?;
        language.insert(bug.id, bug.language);
    }

    let mut rows: Vec<GroupRow> = match grouping {
        Grouping::Total => vec![GroupRow::new("total")],
        Grouping::Tool => Tool::ALL
            .iter()
            .map(|t| GroupRow::new(t.as_str()))
            .collect(),
        Grouping::Language => [Language::Vhdl, Language::Verilog]
            .iter()
            .map(|l| GroupRow::new(l.as_str()))
            .collect(),
        Grouping::Strategy => Strategy::ALL
            .iter()
            .map(|s| GroupRow::new(s.as_str()))
            .collect(),
        Grouping::ModelAll | Grouping::ModelPass1 => {
            let mut names: Vec<&str> = Vec::new();
            for r in records {
                if !names.contains(&r.key.model_name.as_str()) {
                    names.push(&r.key.model_name);
                }
            }
            names.into_iter().map(GroupRow::new).collect()
        }
        Grouping::PerBug => {
            let mut ids: Vec<u32> = manifest.bugs.iter().map(|b| b.id).collect();
            ids.sort_unstable();
            ids.into_iter()
                .flat_map(|id| {
                    Strategy::ALL.into_iter().map(move |s| GroupRow {
                        bug_id: Some(id),
                        strategy: Some(s),
                        ..GroupRow::new(format!("{id}/{s}"))
                    })
                })
                .collect()
        }
    };
    let index: HashMap<String, usize> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.label.clone(), i))
        .collect();

    let mut total = 0;
    for grade in grades {
        let k = &grade.key;
        let label = match grouping {
            Grouping::Total => "total".to_owned(),
            Grouping::Tool => k.tool.as_str().to_owned(),
            Grouping::Language => language[&k.bug_id].as_str().to_owned(),
            Grouping::Strategy => k.strategy.as_str().to_owned(),
            Grouping::ModelAll => k.model_name.clone(),
            Grouping::ModelPass1 if k.sample_index == 0 => k.model_name.clone(),
            Grouping::ModelPass1 => continue,
            Grouping::PerBug => format!("{}/{}", k.bug_id, k.strategy),
        };
        rows[index[&label]].add(grade);
        total += 1;
    }
    Ok(AggregateReport {
        grouping,
        total,
        rows,
    })
}

impl AggregateReport {
    /// Aligned text table; per-bug reports are pivoted to one line per bug.
    pub fn render_text(&self, manifest: &CorpusManifest) -> String {
        let (header, body) = match self.grouping {
            Grouping::PerBug => self.per_bug_table(manifest, percent_whole),
            _ => self.flat_table(),
        };
        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&body) {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    if i == 0 || (self.grouping == Grouping::PerBug && i < 3) {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn render_csv(&self, manifest: &CorpusManifest) -> Result<String, csv::Error> {
        let (header, body) = match self.grouping {
            Grouping::PerBug => self.per_bug_table(manifest, percent_2dp),
            _ => self.flat_table(),
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for row in &body {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn flat_table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["group".to_owned(), "n".to_owned()];
        header.extend(Metric::ALL.iter().map(|m| m.column().to_owned()));
        let body = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.label.clone(), r.n.to_string()];
                cells.extend(
                    Metric::ALL
                        .iter()
                        .map(|m| r.percent(*m).unwrap_or_else(|| "-".into())),
                );
                cells
            })
            .collect();
        (header, body)
    }

    fn per_bug_table(
        &self,
        manifest: &CorpusManifest,
        pct: fn(usize, usize) -> Option<String>,
    ) -> (Vec<String>, Vec<Vec<String>>) {
        let header = [
            "bug",
            "category",
            "description",
            "n_ec",
            "n_ecl",
            "concept_accurate_ec",
            "concept_accurate_ecl",
            "correct_complete_ec",
            "correct_complete_ecl",
        ]
        .map(str::to_owned)
        .to_vec();
        let mut by_bug: BTreeMap<u32, [Option<&GroupRow>; 2]> = BTreeMap::new();
        for row in &self.rows {
            if let (Some(id), Some(s)) = (row.bug_id, row.strategy) {
                by_bug.entry(id).or_default()[s as usize] = Some(row);
            }
        }
        let cell = |r: Option<&GroupRow>, m: Metric| {
            r.and_then(|r| pct(r.yes_count(m), r.n))
                .unwrap_or_else(|| "-".into())
        };
        let body = by_bug
            .into_iter()
            .map(|(id, [ec, ecl])| {
                let (category, description) = manifest
                    .bug(id)
                    .map_or(("", ""), |b| (b.category.as_str(), b.description.as_str()));
                vec![
                    id.to_string(),
                    category.to_owned(),
                    description.to_owned(),
                    ec.map_or(0, |r| r.n).to_string(),
                    ecl.map_or(0, |r| r.n).to_string(),
                    cell(ec, Metric::ConceptAccurate),
                    cell(ecl, Metric::ConceptAccurate),
                    cell(ec, Metric::CorrectComplete),
                    cell(ecl, Metric::CorrectComplete),
                ]
            })
            .collect();
        (header, body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(percent_2dp(1, 3).unwrap(), "33.33");
        assert_eq!(percent_2dp(2, 3).unwrap(), "66.67");
        assert_eq!(percent_2dp(1, 1).unwrap(), "100.00");
        assert_eq!(percent_2dp(0, 7).unwrap(), "0.00");
        assert_eq!(percent_2dp(1, 8).unwrap(), "12.50");
        assert_eq!(percent_2dp(0, 0), None);
        assert_eq!(percent_whole(1, 8).unwrap(), "13%");
        assert_eq!(percent_whole(49, 78).unwrap(), "63%");
    }

    #[test]
    fn grouping_names_round_trip() {
        for g in Grouping::ALL {
            assert_eq!(g.as_str().parse::<Grouping>().unwrap(), g);
        }
        assert_eq!("per-bug".parse::<Grouping>().unwrap(), Grouping::PerBug);
        assert!("bogus".parse::<Grouping>().is_err());
    }
}
