//! The 18-metric report, its geometric-mean aggregate and table rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::metrics::{ppl_transform, MetricError};
use crate::types::TaskKind;

pub const N_METRICS: usize = 18;

/// Column order of the report; index 8 is the raw perplexity.
pub const METRIC_NAMES: [&str; N_METRICS] = [
    "BL_At", "RL_At", "BL_Ad", "RL_Ad", "BL_Tt", "RL_Tt", "BL_Tq", "RL_Tq", "PPL", "P_pt", "R_pt", "F1_pt", "P_qs",
    "R_qs", "F1_qs", "BL_qa", "RL_qa", "BE_qa",
];
pub const PPL_INDEX: usize = 8;

/// Task owning each metric column.
pub fn metric_task(index: usize) -> TaskKind {
    match index {
        0..=3 => TaskKind::AdsGeneration,
        4..=8 => TaskKind::TitleRewriting,
        9..=11 => TaskKind::ProductClassification,
        12..=14 => TaskKind::IntentSpeculation,
        _ => TaskKind::GeneralQa,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("expected {N_METRICS} values, got {0}")]
    WrongArity(usize),
    #[error("value {value} at position {index} is not positive")]
    NonPositiveValue { index: usize, value: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// `exp(mean(ln v))` over exactly 18 positive values, perplexity already
/// replaced by its transform.
pub fn geometric_mean(values: &[f64]) -> Result<f64, AggregateError> {
    if values.len() != N_METRICS {
        return Err(AggregateError::WrongArity(values.len()));
    }
    if let Some(index) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(AggregateError::NonPositiveValue { index, value: values[index] });
    }
    Ok((values.iter().map(|v| v.ln()).sum::<f64>() / N_METRICS as f64).exp())
}

/// The 18 named metrics (raw perplexity in its column) and their aggregate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub values: [Option<f64>; N_METRICS],
    pub gm: Option<f64>,
    pub missing_tasks: Vec<TaskKind>,
}

impl MetricReport {
    /// Report from a full row; computes the aggregate.
    pub fn from_values(values: [f64; N_METRICS]) -> Result<Self, AggregateError> {
        let mut r = MetricReport { values: values.map(Some), gm: None, missing_tasks: Vec::new() };
        r.gm = Some(r.compute_gm()?);
        Ok(r)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|&n| n == name).and_then(|i| self.values[i])
    }

    pub fn is_partial(&self) -> bool {
        !self.missing_tasks.is_empty() || self.values.iter().any(Option::is_none)
    }

    /// The aggregate inputs: every value, with perplexity transformed.
    pub fn gm_inputs(&self) -> Option<Result<[f64; N_METRICS], AggregateError>> {
        let mut out = [0.0; N_METRICS];
        for (i, v) in self.values.iter().enumerate() {
            out[i] = (*v)?;
        }
        Some(ppl_transform(out[PPL_INDEX]).map(|t| {
            out[PPL_INDEX] = t;
            out
        }).map_err(AggregateError::from))
    }

    fn compute_gm(&self) -> Result<f64, AggregateError> {
        match self.gm_inputs() {
            Some(inputs) => geometric_mean(&inputs?),
            None => Err(AggregateError::WrongArity(self.values.iter().flatten().count())),
        }
    }

    /// Set `gm` when every component is present and valid; clear it otherwise.
    pub fn assemble(&mut self) {
        self.gm = if self.missing_tasks.is_empty() { self.compute_gm().ok() } else { None };
    }
}

impl Serialize for MetricReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(N_METRICS + 3))?;
        for (name, v) in METRIC_NAMES.iter().zip(&self.values) {
            m.serialize_entry(name, v)?;
        }
        m.serialize_entry("GM", &self.gm)?;
        m.serialize_entry("partial", &self.is_partial())?;
        m.serialize_entry("missing_tasks", &self.missing_tasks)?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for MetricReport {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut raw: BTreeMap<String, serde_json::Value> = BTreeMap::deserialize(d)?;
        let mut values = [None; N_METRICS];
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            values[i] = match raw.remove(*name) {
                None | Some(serde_json::Value::Null) => None,
                Some(v) => Some(v.as_f64().ok_or_else(|| D::Error::custom(format!("{name} is not a number")))?),
            };
        }
        let gm = raw.remove("GM").and_then(|v| v.as_f64());
        let missing_tasks = match raw.remove("missing_tasks") {
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
            None => Vec::new(),
        };
        Ok(MetricReport { values, gm, missing_tasks })
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Aligned plain-text table, one row per run, columns in report order with
/// the aggregate last.
pub fn render_table(rows: &[(String, MetricReport)]) -> String {
    let mut header: Vec<String> = vec!["Model".to_string()];
    header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
    header.push("GM".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.clone()];
            row.extend(r.values.iter().map(|&v| fmt_cell(v)));
            row.push(fmt_cell(r.gm));
            row
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| std::iter::once(&header).chain(&body).map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&body) {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

/// One stored per-metric row (raw perplexity) with an optional published
/// aggregate to compare against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub model: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub reported_gm: Option<f64>,
}

impl ReplayRow {
    pub fn report(&self) -> Result<MetricReport, AggregateError> {
        let values: [f64; N_METRICS] =
            self.values.as_slice().try_into().map_err(|_| AggregateError::WrongArity(self.values.len()))?;
        MetricReport::from_values(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use forge_oracles::oracle_geometric_mean;
    use proptest::prelude::*;

    const E7B: [f64; 18] = [
        15.18, 46.96, 0.45, 9.87, 18.88, 54.36, 4.66, 25.69, 132.86, 60.03, 63.80, 59.01, 59.52, 61.09, 59.71, 4.04,
        15.86, 86.43,
    ];
    const GPT35: [f64; 18] = [
        16.76, 47.65, 0.56, 11.15, 26.08, 60.04, 9.10, 35.00, 120.86, 49.48, 49.23, 49.35, 19.58, 19.18, 19.38, 2.83,
        14.41, 85.53,
    ];

    #[test]
    fn all_ones() {
        assert_eq!(geometric_mean(&[1.0; 18]).unwrap(), 1.0);
    }

    #[test]
    fn published_rows() {
        assert!((MetricReport::from_values(E7B).unwrap().gm.unwrap() - 17.41).abs() <= 0.05);
        assert!((MetricReport::from_values(GPT35).unwrap().gm.unwrap() - 15.06).abs() <= 0.05);
    }

    #[test]
    fn arity_and_positivity() {
        assert_eq!(geometric_mean(&[1.0; 17]), Err(AggregateError::WrongArity(17)));
        let mut v = [1.0; 18];
        v[4] = 0.0;
        assert_eq!(geometric_mean(&v), Err(AggregateError::NonPositiveValue { index: 4, value: 0.0 }));
        let mut row = E7B;
        row[PPL_INDEX] = 1.0;
        assert!(matches!(MetricReport::from_values(row), Err(AggregateError::Metric(MetricError::PplAtOrBelowOne(_)))));
    }

    #[test]
    fn partial_report_has_no_gm() {
        let mut r = MetricReport::from_values(E7B).unwrap();
        r.values[16] = None;
        r.missing_tasks = vec![TaskKind::GeneralQa];
        r.assemble();
        assert_eq!(r.gm, None);
        assert!(r.is_partial());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.starts_with(r#"{"BL_At":15.18,"RL_At":46.96"#), "{json}");
        assert!(json.contains(r#""RL_qa":null"#) && json.contains(r#""GM":null,"partial":true,"missing_tasks":["general_qa"]"#));
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), r);
    }

    #[test]
    fn table_layout() {
        let t = render_table(&[("ecom-tuned-7b".into(), MetricReport::from_values(E7B).unwrap())]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        let head: Vec<&str> = lines[0].split_whitespace().collect();
        assert_eq!(head[1..19], METRIC_NAMES);
        assert_eq!(head[19], "GM");
        assert!(lines[1].ends_with("17.41"), "{}", lines[1]);
        assert_eq!(lines[0].len(), lines[1].len());
    }

    proptest! {
        #[test]
        fn gm_properties(v in prop::collection::vec(0.01f64..100.0, 18), c in 0.1f64..10.0, rot in 0usize..18) {
            let g = geometric_mean(&v).unwrap();
            prop_assert!((g - oracle_geometric_mean(&v)).abs() <= 1e-9 * g);
            let mut p = v.clone();
            p.rotate_left(rot);
            prop_assert!((geometric_mean(&p).unwrap() - g).abs() <= 1e-12 * g);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!((geometric_mean(&scaled).unwrap() - c * g).abs() <= 1e-9 * c * g);
        }

        #[test]
        fn lower_ppl_means_higher_gm(a in 1.5f64..500.0, b in 1.5f64..500.0) {
            prop_assume!(a < b);
            let mut ra = E7B;
            ra[PPL_INDEX] = a;
            let mut rb = E7B;
            rb[PPL_INDEX] = b;
            prop_assert!(MetricReport::from_values(ra).unwrap().gm > MetricReport::from_values(rb).unwrap().gm);
        }
    }
}
