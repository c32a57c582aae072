//! Ratio and delta tables between result directories.

use std::fs;
use std::path::{Path, PathBuf};

use super::runner::METRICS;
use super::HarnessError;

/// Parsed `aggregate.csv`: axis columns plus per-metric means.
#[derive(Debug, Clone)]
struct Aggregate {
    axes: Vec<String>,
    rows: Vec<(Vec<String>, Vec<f64>)>,
}

fn read_aggregate(dir: &Path) -> Result<Aggregate, HarnessError> {
    let path = dir.join("aggregate.csv");
    let text = fs::read_to_string(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| HarnessError::Compare(format!("{}: empty file", path.display())))?
        .split(',')
        .collect();
    let n_axes = header
        .iter()
        .position(|h| *h == "seeds")
        .ok_or_else(|| HarnessError::Compare(format!("{}: no seeds column", path.display())))?;
    let mean_cols: Vec<usize> = METRICS
        .iter()
        .map(|m| {
            let col = format!("{m}_mean");
            header
                .iter()
                .position(|h| *h == col)
                .ok_or_else(|| HarnessError::Compare(format!("{}: missing column {col}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let key = cells[..n_axes].iter().map(|s| s.to_string()).collect();
        let vals = mean_cols.iter().map(|&c| parse_cell(cells.get(c).copied().unwrap_or("NA"))).collect();
        rows.push((key, vals));
    }
    Ok(Aggregate { axes: header[..n_axes].iter().map(|s| s.to_string()).collect(), rows })
}

fn parse_cell(s: &str) -> f64 {
    match s {
        "inf" => f64::INFINITY,
        "NA" => f64::NAN,
        o => o.parse().unwrap_or(f64::NAN),
    }
}

/// Long-format comparison: one row per (other dir, axis point, metric).
#[derive(Debug, Clone)]
pub struct Comparison {
    pub axes: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub other: PathBuf,
    pub point: Vec<String>,
    pub metric: &'static str,
    pub base: f64,
    pub value: f64,
}

impl ComparisonRow {
    /// `value / base`; 1.0 when both are equal (including both zero).
    pub fn ratio(&self) -> f64 {
        if self.value == self.base {
            1.0
        } else {
            self.value / self.base
        }
    }

    pub fn delta(&self) -> f64 {
        if self.value == self.base {
            0.0
        } else {
            self.value - self.base
        }
    }
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("other_dir,");
        for a in &self.axes {
            out.push_str(a);
            out.push(',');
        }
        out.push_str("metric,base,other,ratio,delta\n");
        for r in &self.rows {
            out.push_str(&r.other.display().to_string());
            out.push(',');
            for v in &r.point {
                out.push_str(v);
                out.push(',');
            }
            out.push_str(&format!("{},{},{},{},{}\n", r.metric, cell(r.base), cell(r.value), cell(r.ratio()), cell(r.delta())));
        }
        out
    }

    pub fn find(&self, point: &[&str], metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric && r.point.iter().map(String::as_str).eq(point.iter().copied()))
    }
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

/// Compares every directory after the first against the first, point by point.
pub fn compare(dirs: &[PathBuf]) -> Result<Comparison, HarnessError> {
    let (base_dir, others) = dirs
        .split_first()
        .ok_or_else(|| HarnessError::Compare("compare needs at least one directory".into()))?;
    let base = read_aggregate(base_dir)?;
    let mut rows = Vec::new();
    let others: Vec<&PathBuf> = if others.is_empty() { vec![base_dir] } else { others.iter().collect() };
    for dir in others {
        let other = read_aggregate(dir)?;
        if other.axes != base.axes {
            return Err(HarnessError::Compare(format!(
                "axis mismatch: {} has [{}], {} has [{}]",
                base_dir.display(),
                base.axes.join(","),
                dir.display(),
                other.axes.join(",")
            )));
        }
        for (point, base_vals) in &base.rows {
            let Some((_, vals)) = other.rows.iter().find(|(p, _)| p == point) else {
                return Err(HarnessError::Compare(format!("{} lacks point {}", dir.display(), point.join(","))));
            };
            for (i, metric) in METRICS.iter().enumerate() {
                rows.push(ComparisonRow {
                    other: dir.clone(),
                    point: point.clone(),
                    metric,
                    base: base_vals[i],
                    value: vals[i],
                });
            }
        }
    }
    Ok(Comparison { axes: base.axes, rows })
}
