//! Rate table: fitted slopes of `aev` and `aed` next to the predicted and
//! published values.

use anyhow::{bail, Result};
use homlat_core::analysis::{fit_slope, Aggregation, ErrorSeries, SlopeFit};
use serde::Serialize;

use crate::runner::metric;

/// A row of the reference table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub label: &'static str,
    pub dim: usize,
    pub model: &'static str,
    /// Predicted rates as `a + b·σ`.
    pub aev_predicted: (f64, f64),
    pub aed_predicted: (f64, f64),
    pub aev_published: f64,
    pub aed_published: f64,
}

pub const REFERENCE: [Reference; 7] = [
    Reference { label: "1D Const.", dim: 1, model: "constant", aev_predicted: (1.5, 0.0), aed_predicted: (0.5, 0.0), aev_published: 1.5, aed_published: 0.5 },
    Reference { label: "1D Period.", dim: 1, model: "periodic", aev_predicted: (0.5, 0.0), aed_predicted: (-0.5, 0.0), aev_published: 0.7, aed_published: 0.5 },
    Reference { label: "1D Rando.", dim: 1, model: "random", aev_predicted: (0.0, -1.0), aed_predicted: (-1.0, -1.0), aev_published: 0.2, aed_published: -0.8 },
    Reference { label: "2D Const.", dim: 2, model: "constant", aev_predicted: (1.0, 0.0), aed_predicted: (0.0, 0.0), aev_published: 1.1, aed_published: 0.0 },
    Reference { label: "2D Period.", dim: 2, model: "periodic", aev_predicted: (0.0, 0.0), aed_predicted: (-1.0, 0.0), aev_published: 0.1, aed_published: 0.0 },
    Reference { label: "2D Rando.", dim: 2, model: "random", aev_predicted: (0.0, -1.0), aed_predicted: (-1.0, -1.0), aev_published: 0.1, aed_published: -1.0 },
    Reference { label: "2D Layered", dim: 2, model: "layered", aev_predicted: (-0.5, -1.0), aed_predicted: (-1.5, -1.0), aev_published: -0.4, aed_published: -1.5 },
];

fn family(model_label: &str) -> &'static str {
    match model_label {
        "constant" => "constant",
        "periodic_biaxial" | "periodic_layered" => "periodic",
        "iid_two_point" | "iid_uniform" => "random",
        "layered_iid_two_point" => "layered",
        _ => "other",
    }
}

/// The reference row for a series, from its `dim` and `model` metadata.
pub fn reference_for(series: &ErrorSeries) -> Option<Reference> {
    let dim: usize = series.metadata.get("dim")?.parse().ok()?;
    let fam = family(series.metadata.get("model")?);
    REFERENCE.iter().copied().find(|r| r.dim == dim && r.model == fam)
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub label: String,
    pub name: String,
    pub aev: SlopeFit,
    pub aed: SlopeFit,
    pub aev_predicted: Option<f64>,
    pub aed_predicted: Option<f64>,
    pub aev_published: Option<f64>,
    pub aed_published: Option<f64>,
}

pub fn table_row(series: &ErrorSeries) -> Result<TableRow> {
    if series.epsilons().len() < homlat_core::analysis::MIN_FIT_EPSILONS {
        bail!(
            "{} has {} ε values; a rate needs at least {}",
            series.metadata.get("name").map(String::as_str).unwrap_or("series"),
            series.epsilons().len(),
            homlat_core::analysis::MIN_FIT_EPSILONS
        );
    }
    let sigma: f64 = series.metadata.get("sigma").and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let reference = reference_for(series);
    let aev = fit_slope(series, metric::AEV, Aggregation::Median)?;
    let aed = fit_slope(series, metric::AED, Aggregation::Median)?;
    Ok(TableRow {
        label: reference.map_or_else(|| "other".to_string(), |r| r.label.to_string()),
        name: series.metadata.get("name").cloned().unwrap_or_default(),
        aev,
        aed,
        aev_predicted: reference.map(|r| r.aev_predicted.0 + r.aev_predicted.1 * sigma),
        aed_predicted: reference.map(|r| r.aed_predicted.0 + r.aed_predicted.1 * sigma),
        aev_published: reference.map(|r| r.aev_published),
        aed_published: reference.map(|r| r.aed_published),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "".into(), |x| format!("{x:.1}"))
}

/// Markdown table with a fit-quality column per rate.
pub fn render_markdown(rows: &[TableRow]) -> String {
    let mut out = String::from(
        "| case | config | aev predicted | aev published | aev fitted | ± | aed predicted | aed published | aed fitted | ± |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    let mut sorted: Vec<&TableRow> = rows.iter().collect();
    sorted.sort_by_key(|r| REFERENCE.iter().position(|x| x.label == r.label).unwrap_or(usize::MAX));
    for r in sorted {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {:.2} | {:.2} | {} | {} | {:.2} | {:.2} |\n",
            r.label,
            r.name,
            opt(r.aev_predicted),
            opt(r.aev_published),
            r.aev.slope,
            r.aev.slope_stderr,
            opt(r.aed_predicted),
            opt(r.aed_published),
            r.aed.slope,
            r.aed.slope_stderr
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn series(eps: &[f64]) -> ErrorSeries {
        let mut meta = BTreeMap::new();
        meta.insert("dim".to_string(), "2".to_string());
        meta.insert("model".to_string(), "iid_two_point".to_string());
        let mut s = ErrorSeries { metadata: meta, records: vec![] };
        for &e in eps {
            s.push(e, 0, 0, metric::AEV, e.powf(0.1)).unwrap();
            s.push(e, 0, 0, metric::AED, e.powf(-1.0)).unwrap();
        }
        s
    }

    #[test]
    fn row_for_random_2d() {
        let row = table_row(&series(&[0.5, 0.25, 0.125, 0.0625])).unwrap();
        assert_eq!(row.label, "2D Rando.");
        assert!((row.aev.slope - 0.1).abs() < 1e-12);
        assert!((row.aed.slope + 1.0).abs() < 1e-12);
        assert!((row.aed_predicted.unwrap() + 1.1).abs() < 1e-12);
        assert!(render_markdown(&[row]).contains("2D Rando."));
    }

    #[test]
    fn refuses_short_sweeps() {
        assert!(table_row(&series(&[0.5])).is_err());
    }
}
