//! Per-graph score tables and their correlation summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::stats::{r_squared, spearman};
use crate::error::{Error, Result};

pub const HEADER: [&str; 13] = [
    "graph_id",
    "shift_kind",
    "magnitude",
    "gt_error",
    "lebed",
    "lebed_stop_iter",
    "confscore",
    "entropy",
    "atc_mc",
    "atc_ne",
    "thres_0.7",
    "thres_0.8",
    "thres_0.9",
];

/// Score columns in report order.
pub const SCORES: [&str; 8] = ["lebed", "confscore", "entropy", "atc_mc", "atc_ne", "thres_0.7", "thres_0.8", "thres_0.9"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scores {
    pub lebed: Option<f64>,
    pub lebed_stop_iter: Option<usize>,
    pub confscore: Option<f64>,
    pub entropy: Option<f64>,
    pub atc_mc: Option<f64>,
    pub atc_ne: Option<f64>,
    pub thres: [Option<f64>; 3],
}

impl Scores {
    /// Value of a column from [`SCORES`].
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "lebed" => self.lebed,
            "confscore" => self.confscore,
            "entropy" => self.entropy,
            "atc_mc" => self.atc_mc,
            "atc_ne" => self.atc_ne,
            "thres_0.7" => self.thres[0],
            "thres_0.8" => self.thres[1],
            "thres_0.9" => self.thres[2],
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub graph_id: String,
    pub shift_kind: String,
    pub magnitude: f64,
    pub gt_error: f64,
    pub scores: Scores,
    /// Set when some score could not be computed; those cells are left empty.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub score: String,
    pub n: usize,
    pub spearman: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub model: String,
    pub rows: Vec<ReportRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Invalid(format!("bad {col} value {s:?} on line {line}")))
}

impl Report {
    /// Per-score correlation with the ground-truth error over rows where the
    /// score is present. Scores with fewer than two values are omitted.
    pub fn summary(&self) -> Vec<ScoreSummary> {
        SCORES
            .iter()
            .filter_map(|&name| {
                let (x, y): (Vec<f64>, Vec<f64>) =
                    self.rows.iter().filter_map(|r| r.scores.get(name).map(|s| (s, r.gt_error))).unzip();
                let rho = spearman(&x, &y).ok()?;
                let r2 = r_squared(&x, &y).ok()?;
                Some(ScoreSummary { score: name.to_string(), n: x.len(), spearman: rho, r_squared: r2 })
            })
            .collect()
    }

    pub fn mean_stop_iteration(&self) -> Option<f64> {
        let it: Vec<usize> = self.rows.iter().filter_map(|r| r.scores.lebed_stop_iter).collect();
        (!it.is_empty()).then(|| it.iter().sum::<usize>() as f64 / it.len() as f64)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            let s = &r.scores;
            let fields = [
                r.graph_id.clone(),
                r.shift_kind.clone(),
                format!("{:?}", r.magnitude),
                format!("{:?}", r.gt_error),
                cell(s.lebed),
                s.lebed_stop_iter.map(|v| v.to_string()).unwrap_or_default(),
                cell(s.confscore),
                cell(s.entropy),
                cell(s.atc_mc),
                cell(s.atc_ne),
                cell(s.thres[0]),
                cell(s.thres[1]),
                cell(s.thres[2]),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(model: &str, text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::Invalid(format!("report header: {e}")))?;
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(Error::Invalid(format!("unexpected report header: {}", header.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Invalid(format!("report line {line}: {e}")))?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let req = |i: usize| -> Result<f64> {
                parse_opt(f(i), line, HEADER[i])?.ok_or_else(|| Error::Invalid(format!("missing {} on line {line}", HEADER[i])))
            };
            let scores = Scores {
                lebed: parse_opt(f(4), line, HEADER[4])?,
                lebed_stop_iter: parse_opt(f(5), line, HEADER[5])?,
                confscore: parse_opt(f(6), line, HEADER[6])?,
                entropy: parse_opt(f(7), line, HEADER[7])?,
                atc_mc: parse_opt(f(8), line, HEADER[8])?,
                atc_ne: parse_opt(f(9), line, HEADER[9])?,
                thres: [parse_opt(f(10), line, HEADER[10])?, parse_opt(f(11), line, HEADER[11])?, parse_opt(f(12), line, HEADER[12])?],
            };
            rows.push(ReportRow {
                graph_id: f(0).to_string(),
                shift_kind: f(1).to_string(),
                magnitude: req(2)?,
                gt_error: req(3)?,
                scores,
                error: None,
            });
        }
        Ok(Self { model: model.to_string(), rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Loads a report; the model name is taken from the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_csv(&model, &text).map_err(|e| Error::parse(path, e))
    }

    /// `x,y` pairs of one score against the ground-truth error.
    pub fn scatter_csv(&self, score: &str) -> String {
        let mut out = String::from("graph_id,x,y\n");
        for r in &self.rows {
            if let Some(x) = r.scores.get(score) {
                let _ = writeln!(out, "{},{x:?},{:?}", r.graph_id, r.gt_error);
            }
        }
        out
    }
}

/// Formats summaries of several reports as a table, with an `avg` row of the
/// plain mean of each statistic when more than one report is given.
pub fn summary_table(reports: &[Report]) -> String {
    let summaries: Vec<(String, Vec<ScoreSummary>)> = reports.iter().map(|r| (r.model.clone(), r.summary())).collect();
    let mut out = String::from("model,score,n,spearman,r_squared\n");
    for (model, sums) in &summaries {
        for s in sums {
            let _ = writeln!(out, "{model},{},{},{:.4},{:.4}", s.score, s.n, s.spearman, s.r_squared);
        }
    }
    if summaries.len() > 1 {
        for name in SCORES {
            let hits: Vec<&ScoreSummary> = summaries.iter().filter_map(|(_, s)| s.iter().find(|x| x.score == name)).collect();
            if hits.is_empty() {
                continue;
            }
            let k = hits.len() as f64;
            let rho = hits.iter().map(|s| s.spearman).sum::<f64>() / k;
            let r2 = hits.iter().map(|s| s.r_squared).sum::<f64>() / k;
            let n: usize = hits.iter().map(|s| s.n).sum();
            let _ = writeln!(out, "avg,{name},{n},{rho:.4},{r2:.4}");
        }
    }
    out
}
