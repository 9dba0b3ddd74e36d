use std::fmt::Write as _;

use super::{chamfer, fscore, CD_REPORT_SCALE};
use crate::dataset::Dataset;
use crate::dpcnet::Ricnet;
use crate::geom::{apply_transform, random_rigid, PointCloud};
use crate::{seed, Error, Result};

pub const EVAL_CSV_HEADER: &str = "category,n,cd_x1e4,f1,transformed";
pub const ROBUSTNESS_CSV_HEADER: &str = "category,n,cd_x1e4,f1,transformed,cd_delta,f1_delta";

const AVERAGE: &str = "average";

/// Metrics of one completed example. `cd` is stored unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub category: String,
    pub cd: f64,
    pub f1: f64,
    pub transformed: bool,
}

/// What produces the completion for an example.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Model(&'a Ricnet),
    /// Returns the ground truth; used to check the harness itself.
    Identity,
}

/// Per-example random rigid motions applied to both the input and the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformProtocol {
    pub seed: u64,
    pub max_translation: f64,
}

impl TransformProtocol {
    pub fn transform_for(&self, index: usize) -> crate::geom::RigidTransform {
        let s = seed::derive(self.seed, &[seed::tag::EVAL_TRANSFORM, index as u64]);
        random_rigid(s, self.max_translation)
    }
}

/// Evaluates every example; with a protocol, example `i` is moved by its own transform first.
pub fn evaluate(
    predictor: Predictor<'_>,
    data: &Dataset,
    tau: f64,
    protocol: Option<TransformProtocol>,
) -> Result<Vec<EvalRecord>> {
    data.samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (x, y) = match &protocol {
                Some(p) => {
                    let t = p.transform_for(i);
                    (apply_transform(&s.partial, &t), apply_transform(&s.complete, &t))
                }
                None => (s.partial.clone(), s.complete.clone()),
            };
            let pred: PointCloud = match predictor {
                Predictor::Model(m) => m.complete(&x)?.fine,
                Predictor::Identity => y.clone(),
            };
            Ok(EvalRecord {
                category: s.category.clone(),
                cd: chamfer(&pred, &y),
                f1: fscore(&pred, &y, tau)?,
                transformed: protocol.is_some(),
            })
        })
        .collect()
}

/// Mean metrics over the records of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySummary {
    pub category: String,
    pub n: usize,
    pub cd: f64,
    pub f1: f64,
    pub transformed: bool,
}

/// Per-category means in first-seen order, followed by the mean of those rows.
pub fn aggregate(records: &[EvalRecord]) -> Vec<CategorySummary> {
    let mut rows: Vec<CategorySummary> = Vec::new();
    for r in records {
        match rows.iter_mut().find(|c| c.category == r.category) {
            Some(c) => {
                c.n += 1;
                c.cd += r.cd;
                c.f1 += r.f1;
            }
            None => rows.push(CategorySummary {
                category: r.category.clone(),
                n: 1,
                cd: r.cd,
                f1: r.f1,
                transformed: r.transformed,
            }),
        }
    }
    for c in &mut rows {
        c.cd /= c.n as f64;
        c.f1 /= c.n as f64;
    }
    if let Some(avg) = average(&rows) {
        rows.push(avg);
    }
    rows
}

fn average(rows: &[CategorySummary]) -> Option<CategorySummary> {
    let first = rows.first()?;
    let k = rows.len() as f64;
    Some(CategorySummary {
        category: AVERAGE.to_string(),
        n: rows.iter().map(|r| r.n).sum(),
        cd: rows.iter().map(|r| r.cd).sum::<f64>() / k,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / k,
        transformed: first.transformed,
    })
}

fn summary_fields(out: &mut String, s: &CategorySummary) {
    let _ = write!(
        out,
        "{},{},{},{},{}",
        s.category,
        s.n,
        s.cd * CD_REPORT_SCALE,
        s.f1,
        u8::from(s.transformed)
    );
}

pub fn eval_csv(records: &[EvalRecord]) -> String {
    let mut out = format!("{EVAL_CSV_HEADER}\n");
    for s in aggregate(records) {
        summary_fields(&mut out, &s);
        out.push('\n');
    }
    out
}

/// Original and transformed summaries of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub original: CategorySummary,
    pub transformed: CategorySummary,
    /// `transformed − original`, unscaled.
    pub cd_delta: f64,
    pub f1_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
    pub average: Option<RobustnessRow>,
}

impl RobustnessReport {
    /// `|cd_transformed / cd_original − 1|` on the average row.
    pub fn relative_gap(&self) -> Option<f64> {
        let a = self.average.as_ref()?;
        Some((a.transformed.cd / a.original.cd - 1.0).abs())
    }
}

fn pair(original: CategorySummary, transformed: CategorySummary) -> RobustnessRow {
    RobustnessRow {
        cd_delta: transformed.cd - original.cd,
        f1_delta: transformed.f1 - original.f1,
        original,
        transformed,
    }
}

/// Pairs original and transformed records by category.
pub fn robustness_report(original: &[EvalRecord], transformed: &[EvalRecord]) -> Result<RobustnessReport> {
    let split = |v: Vec<CategorySummary>| {
        let mut rows = v;
        let avg = rows.pop();
        (rows, avg)
    };
    let (o, oa) = split(aggregate(original));
    let (t, ta) = split(aggregate(transformed));
    let names = |v: &[CategorySummary]| v.iter().map(|c| c.category.clone()).collect::<Vec<_>>();
    if names(&o) != names(&t) {
        return Err(Error::InvalidArgument(format!(
            "original categories {:?} do not match transformed {:?}",
            names(&o),
            names(&t)
        )));
    }
    let rows: Vec<RobustnessRow> = o.into_iter().zip(t).map(|(a, b)| pair(a, b)).collect();
    let average = oa.zip(ta).map(|(a, b)| pair(a, b));
    Ok(RobustnessReport { rows, average })
}

/// Two lines per category (original, transformed), each carrying the category's deltas.
pub fn robustness_csv(report: &RobustnessReport) -> String {
    let mut out = format!("{ROBUSTNESS_CSV_HEADER}\n");
    for row in report.rows.iter().chain(&report.average) {
        for s in [&row.original, &row.transformed] {
            summary_fields(&mut out, s);
            let _ = writeln!(out, ",{},{}", row.cd_delta * CD_REPORT_SCALE, row.f1_delta);
        }
    }
    out
}
