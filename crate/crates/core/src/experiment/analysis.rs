//! Main effects and plot series over result rows.

use serde::{Deserialize, Serialize};

use super::{ExperimentError, Factor, ResultRow};

/// Which column of a result row is analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    #[default]
    MeanRatio,
    PHat,
}

impl Response {
    pub fn name(self) -> &'static str {
        match self {
            Response::MeanRatio => "mean_ratio",
            Response::PHat => "p_hat",
        }
    }

    pub fn parse(s: &str) -> Option<Response> {
        [Response::MeanRatio, Response::PHat].into_iter().find(|r| r.name() == s)
    }

    pub fn value(self, row: &ResultRow) -> f64 {
        match self {
            Response::MeanRatio => row.mean_ratio,
            Response::PHat => row.p_hat,
        }
    }

    /// Standard error of the value in `row`.
    pub fn stderr(self, row: &ResultRow) -> f64 {
        match self {
            Response::MeanRatio => row.stderr,
            Response::PHat => (row.p_hat * (1.0 - row.p_hat) / row.n_samples.max(1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMean {
    pub level: String,
    pub n_cells: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEffect {
    pub factor: Factor,
    /// In order of first appearance in the rows.
    pub levels: Vec<LevelMean>,
}

impl FactorEffect {
    /// Largest minus smallest level mean.
    pub fn spread(&self) -> f64 {
        let means = self.levels.iter().map(|l| l.mean);
        means.clone().fold(f64::NEG_INFINITY, f64::max) - means.fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainEffectsTable {
    pub response: Response,
    pub grand_mean: f64,
    pub n_cells: usize,
    /// Factors with at least two levels, in canonical order.
    pub factors: Vec<FactorEffect>,
}

impl MainEffectsTable {
    pub fn effect(&self, factor: Factor) -> Option<&FactorEffect> {
        self.factors.iter().find(|e| e.factor == factor)
    }
}

/// Distinct levels of `factor` in order of first appearance.
fn levels(rows: &[ResultRow], factor: Factor) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        let l = factor.level(r);
        if !out.contains(&l) {
            out.push(l);
        }
    }
    out
}

pub fn main_effects(rows: &[ResultRow], response: Response) -> Result<MainEffectsTable, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Config("no result rows".into()));
    }
    let grand_mean = rows.iter().map(|r| response.value(r)).sum::<f64>() / rows.len() as f64;
    let mut factors = Vec::new();
    for factor in Factor::ALL {
        let lv = levels(rows, factor);
        if lv.len() < 2 {
            continue;
        }
        let levels = lv
            .into_iter()
            .map(|level| {
                let vals: Vec<f64> =
                    rows.iter().filter(|r| factor.level(r) == level).map(|r| response.value(r)).collect();
                LevelMean { mean: vals.iter().sum::<f64>() / vals.len() as f64, n_cells: vals.len(), level }
            })
            .collect();
        factors.push(FactorEffect { factor, levels });
    }
    if factors.is_empty() {
        return Err(ExperimentError::Config("main effects need a factor with at least two levels".into()));
    }
    Ok(MainEffectsTable { response, grand_mean, n_cells: rows.len(), factors })
}

/// Main-effects CSV: one line per (factor, level) and a final grand-mean line.
pub fn write_effects(table: &MainEffectsTable) -> Result<Vec<u8>, ExperimentError> {
    let mut buf = b"#schema=ndnsmc-effects/1\n".to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["response", "factor", "level", "n_cells", "mean"])?;
        for e in &table.factors {
            for l in &e.levels {
                w.write_record([
                    table.response.name(),
                    e.factor.name(),
                    &l.level,
                    &l.n_cells.to_string(),
                    &l.mean.to_string(),
                ])?;
            }
        }
        w.write_record([
            table.response.name(),
            "grand_mean",
            "",
            &table.n_cells.to_string(),
            &table.grand_mean.to_string(),
        ])?;
        w.flush()?;
    }
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: String,
    pub curve: String,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
}

/// Long-format series of `response` against `x`, one curve per level of
/// `curve`. Grid points without a row get empty values. Every other factor
/// must be constant across the rows.
pub fn emit_series(
    rows: &[ResultRow],
    x: Factor,
    curve: Option<Factor>,
    response: Response,
) -> Result<(Vec<SeriesPoint>, Vec<u8>), ExperimentError> {
    if curve == Some(x) {
        return Err(ExperimentError::Config("x and curve must be different factors".into()));
    }
    for f in Factor::ALL {
        if f != x && Some(f) != curve && levels(rows, f).len() > 1 {
            return Err(ExperimentError::Config(format!(
                "factor {} varies but is neither x nor curve; filter the rows first",
                f.name()
            )));
        }
    }
    let xs = levels(rows, x);
    let curves = match curve {
        Some(c) => levels(rows, c),
        None => vec![String::new()],
    };
    let mut points = Vec::new();
    for c in &curves {
        for xv in &xs {
            let row = rows.iter().find(|r| x.level(r) == *xv && curve.is_none_or(|cf| cf.level(r) == *c));
            points.push(SeriesPoint {
                x: xv.clone(),
                curve: c.clone(),
                mean: row.map(|r| response.value(r)),
                stderr: row.map(|r| response.stderr(r)),
            });
        }
    }
    let mut buf = b"#schema=ndnsmc-series/1\n".to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let curve_name = curve.map_or("curve", |c| c.name());
        w.write_record([x.name(), curve_name, response.name(), "stderr"])?;
        for p in &points {
            let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([p.x.as_str(), p.curve.as_str(), &fmt(p.mean), &fmt(p.stderr)])?;
        }
        w.flush()?;
    }
    Ok((points, buf))
}
