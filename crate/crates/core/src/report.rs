//! Ratings CSV, top-N tables and kernel density summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::PlayerRating;
use crate::shift::{Linemate, PlayerId, PositionGroup};

pub const RATINGS_COLUMNS: [&str; 29] = [
    "rk",
    "player_id",
    "name",
    "pos",
    "opm60",
    "dpm60",
    "apm60",
    "oerr60",
    "derr60",
    "err60",
    "opm",
    "dpm",
    "apm",
    "oerr",
    "derr",
    "err",
    "mins",
    "gf",
    "ga",
    "ng",
    "gf60",
    "ga60",
    "ng60",
    "teammate1",
    "min1",
    "teammate2",
    "min2",
    "teammate3",
    "min3",
];

pub const DEFAULT_MIN_MINUTES: f64 = 700.0;
pub const KDE_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Three decimals for rates, one for per-season values.
    #[default]
    Table,
    /// Shortest representation that parses back to the same value.
    Full,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Precision::Table),
            "full" => Ok(Precision::Full),
            other => Err(format!("unknown precision `{other}` (expected table or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Scale {
    Rate,
    Season,
    Minutes,
    Fraction,
}

fn fmt_num(v: f64, scale: Scale, precision: Precision) -> String {
    match precision {
        Precision::Full => v.to_string(),
        Precision::Table => match scale {
            Scale::Rate | Scale::Fraction => format!("{v:.3}"),
            Scale::Season => format!("{v:.1}"),
            Scale::Minutes => format!("{v:.0}"),
        },
    }
}

fn fmt_opt(v: Option<f64>, scale: Scale, precision: Precision) -> String {
    v.map_or_else(|| "NA".to_string(), |v| fmt_num(v, scale, precision))
}

/// Descending APM, ties by player id.
pub fn rank_order(ratings: &[PlayerRating]) -> Vec<&PlayerRating> {
    let mut v: Vec<&PlayerRating> = ratings.iter().collect();
    v.sort_by(|a, b| b.apm.total_cmp(&a.apm).then_with(|| a.player.cmp(&b.player)));
    v
}

/// Writes one row per player in [`rank_order`]. Goalie offense cells are
/// `NA`.
pub fn write_ratings_csv<W: Write>(
    w: W,
    ratings: &[PlayerRating],
    linemates: &BTreeMap<PlayerId, Vec<Linemate>>,
    precision: Precision,
) -> Result<(), csv::Error> {
    use Scale::*;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RATINGS_COLUMNS)?;
    let none = Vec::new();
    for (i, r) in rank_order(ratings).into_iter().enumerate() {
        let n = |v: f64, s: Scale| fmt_num(v, s, precision);
        let o = |v: Option<f64>, s: Scale| fmt_opt(v, s, precision);
        let st = &r.stats;
        let mut row = vec![
            (i + 1).to_string(),
            r.player.to_string(),
            r.name.clone(),
            r.position.code().to_string(),
            o(r.opm60, Rate),
            n(r.dpm60, Rate),
            n(r.apm60, Rate),
            o(r.oerr60, Rate),
            n(r.derr60, Rate),
            n(r.err60, Rate),
            o(r.opm, Season),
            n(r.dpm, Season),
            n(r.apm, Season),
            o(r.oerr, Season),
            n(r.derr, Season),
            n(r.err, Season),
            n(r.mins, Minutes),
            n(st.gf, Season),
            n(st.ga, Season),
            n(st.ng, Season),
            n(st.gf60, Rate),
            n(st.ga60, Rate),
            n(st.ng60, Rate),
        ];
        let mates = linemates.get(&r.player).unwrap_or(&none);
        for k in 0..3 {
            match mates.get(k) {
                Some(m) => {
                    row.push(m.player.to_string());
                    row.push(n(m.fraction, Fraction));
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Everything the report and density commands need, at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsFile {
    /// Whether two models were averaged.
    pub averaged: bool,
    pub ratings: Vec<PlayerRating>,
    pub linemates: BTreeMap<PlayerId, Vec<Linemate>>,
}

/// Rating fields available for ranking and densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Opm60,
    Dpm60,
    Apm60,
    Opm,
    Dpm,
    Apm,
    Oerr60,
    Derr60,
    Err60,
    Oerr,
    Derr,
    Err,
    Mins,
    Gf60,
    Ga60,
    Ng60,
}

impl Metric {
    pub const ALL: [Metric; 16] = [
        Metric::Opm60,
        Metric::Dpm60,
        Metric::Apm60,
        Metric::Opm,
        Metric::Dpm,
        Metric::Apm,
        Metric::Oerr60,
        Metric::Derr60,
        Metric::Err60,
        Metric::Oerr,
        Metric::Derr,
        Metric::Err,
        Metric::Mins,
        Metric::Gf60,
        Metric::Ga60,
        Metric::Ng60,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Opm60 => "opm60",
            Metric::Dpm60 => "dpm60",
            Metric::Apm60 => "apm60",
            Metric::Opm => "opm",
            Metric::Dpm => "dpm",
            Metric::Apm => "apm",
            Metric::Oerr60 => "oerr60",
            Metric::Derr60 => "derr60",
            Metric::Err60 => "err60",
            Metric::Oerr => "oerr",
            Metric::Derr => "derr",
            Metric::Err => "err",
            Metric::Mins => "mins",
            Metric::Gf60 => "gf60",
            Metric::Ga60 => "ga60",
            Metric::Ng60 => "ng60",
        }
    }

    /// Value for `r`; `None` for goalie offense.
    pub fn value(self, r: &PlayerRating) -> Option<f64> {
        match self {
            Metric::Opm60 => r.opm60,
            Metric::Dpm60 => Some(r.dpm60),
            Metric::Apm60 => Some(r.apm60),
            Metric::Opm => r.opm,
            Metric::Dpm => Some(r.dpm),
            Metric::Apm => Some(r.apm),
            Metric::Oerr60 => r.oerr60,
            Metric::Derr60 => Some(r.derr60),
            Metric::Err60 => Some(r.err60),
            Metric::Oerr => r.oerr,
            Metric::Derr => Some(r.derr),
            Metric::Err => Some(r.err),
            Metric::Mins => Some(r.mins),
            Metric::Gf60 => Some(r.stats.gf60),
            Metric::Ga60 => Some(r.stats.ga60),
            Metric::Ng60 => Some(r.stats.ng60),
        }
    }

    /// Standard error paired with a rating metric.
    pub fn error_metric(self) -> Option<Metric> {
        match self {
            Metric::Opm60 => Some(Metric::Oerr60),
            Metric::Dpm60 => Some(Metric::Derr60),
            Metric::Apm60 => Some(Metric::Err60),
            Metric::Opm => Some(Metric::Oerr),
            Metric::Dpm => Some(Metric::Derr),
            Metric::Apm => Some(Metric::Err),
            _ => None,
        }
    }

    /// Offense and defense parts of a total rating.
    pub fn parts(self) -> &'static [Metric] {
        match self {
            Metric::Apm60 => &[Metric::Opm60, Metric::Dpm60],
            Metric::Apm => &[Metric::Opm, Metric::Dpm],
            _ => &[],
        }
    }

    fn scale(self) -> Scale {
        match self {
            Metric::Opm | Metric::Dpm | Metric::Apm | Metric::Oerr | Metric::Derr | Metric::Err => Scale::Season,
            Metric::Mins => Scale::Minutes,
            _ => Scale::Rate,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("unknown metric `{0}`; expected one of opm60, dpm60, apm60, opm, dpm, apm, oerr60, derr60, err60, oerr, derr, err, mins, gf60, ga60, ng60")]
    UnknownMetric(String),
    #[error("n must be at least 1")]
    ZeroRows,
}

impl FromStr for Metric {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, ReportError> {
        let lower = s.to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| ReportError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopFilter {
    /// Keep only these position groups; empty keeps all.
    pub positions: BTreeSet<PositionGroup>,
    pub min_minutes: f64,
    /// Lowest values first.
    pub ascending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopRow<'a> {
    /// Position in the unfiltered ordering by the same metric.
    pub rank: usize,
    pub rating: &'a PlayerRating,
    pub value: f64,
    pub error: Option<f64>,
}

/// First `n` players by `metric` after filtering. Players without the
/// metric (goalies for offense) are left out.
pub fn top_n<'a>(
    ratings: &'a [PlayerRating],
    metric: Metric,
    n: usize,
    filter: &TopFilter,
) -> Result<Vec<TopRow<'a>>, ReportError> {
    if n == 0 {
        return Err(ReportError::ZeroRows);
    }
    let mut all: Vec<(&PlayerRating, f64)> = ratings.iter().filter_map(|r| Some((r, metric.value(r)?))).collect();
    all.sort_by(|a, b| {
        let ord = if filter.ascending {
            a.1.total_cmp(&b.1)
        } else {
            b.1.total_cmp(&a.1)
        };
        ord.then_with(|| a.0.player.cmp(&b.0.player))
    });
    Ok(all
        .into_iter()
        .enumerate()
        .filter(|(_, (r, _))| {
            (filter.positions.is_empty() || filter.positions.contains(&r.position.group()))
                && r.mins >= filter.min_minutes
        })
        .take(n)
        .map(|(i, (r, v))| TopRow {
            rank: i + 1,
            rating: r,
            value: v,
            error: metric.error_metric().and_then(|e| e.value(r)),
        })
        .collect())
}

fn top_header(metric: Metric) -> Vec<Metric> {
    let mut cols = metric.parts().to_vec();
    cols.push(metric);
    cols.extend(metric.error_metric());
    cols
}

fn top_cells(r: &TopRow, metric: Metric, precision: Precision) -> Vec<String> {
    let mut cells: Vec<String> = metric
        .parts()
        .iter()
        .map(|m| fmt_opt(m.value(r.rating), m.scale(), precision))
        .collect();
    cells.push(fmt_num(r.value, metric.scale(), precision));
    if metric.error_metric().is_some() {
        cells.push(fmt_opt(r.error, metric.scale(), precision));
    }
    cells.push(fmt_num(r.rating.mins, Scale::Minutes, precision));
    cells
}

/// Aligned plain-text table: Rk, Player, Pos, the parts of a total rating,
/// the metric, its error when it has one, and Mins.
pub fn render_top_table(rows: &[TopRow], metric: Metric, precision: Precision) -> String {
    let mut header = vec!["Rk".to_string(), "Player".into(), "Pos".into()];
    header.extend(top_header(metric).iter().map(|m| m.name().to_uppercase()));
    header.push("Mins".into());
    let mut cells = vec![header];
    for r in rows {
        let mut line = vec![
            r.rank.to_string(),
            r.rating.name.clone(),
            r.rating.position.code().to_string(),
        ];
        line.extend(top_cells(r, metric, precision));
        cells.push(line);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|c| cells.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &cells {
        let mut text = String::new();
        for (c, cell) in line.iter().enumerate() {
            if c > 0 {
                text.push_str("  ");
            }
            // names left-aligned, numbers right-aligned
            if c == 1 || c == 2 {
                let _ = write!(text, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(text, "{cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(text.trim_end());
        out.push('\n');
    }
    out
}

/// Same table as CSV, e.g. `rk,player_id,name,pos,opm,dpm,apm,err,mins`.
pub fn write_top_csv<W: Write>(w: W, rows: &[TopRow], metric: Metric, precision: Precision) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["rk", "player_id", "name", "pos"];
    header.extend(top_header(metric).iter().map(|m| m.name()));
    header.push("mins");
    out.write_record(&header)?;
    for r in rows {
        let mut line = vec![
            r.rank.to_string(),
            r.rating.player.to_string(),
            r.rating.name.clone(),
            r.rating.position.code().to_string(),
        ];
        line.extend(top_cells(r, metric, precision));
        out.write_record(&line)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeCurve {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KdeError {
    #[error("need at least two values, got {0}")]
    TooFewValues(usize),
    #[error("all values are identical; pass an explicit bandwidth")]
    IdenticalValues,
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("values and weights must be finite, weights nonnegative with a positive sum")]
    BadInput,
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`. A
/// zero IQR falls back to the standard deviation.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64, KdeError> {
    let n = values.len();
    if n < 2 {
        return Err(KdeError::TooFewValues(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd == 0.0 {
        return Err(KdeError::IdenticalValues);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Gaussian kernel density estimate on an even grid spanning three
/// bandwidths past the data. The grid has [`KDE_GRID_POINTS`] points, or
/// more when needed to keep the spacing under half a bandwidth.
pub fn kde(values: &[f64], weights: Option<&[f64]>, bandwidth: Option<f64>) -> Result<KdeCurve, KdeError> {
    if values.len() < 2 {
        return Err(KdeError::TooFewValues(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(KdeError::BadInput);
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != values.len() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(KdeError::BadInput);
            }
            w.to_vec()
        }
        None => vec![1.0; values.len()],
    };
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(KdeError::BadInput);
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(KdeError::BadBandwidth(h)),
        None => silverman_bandwidth(values)?,
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let points = KDE_GRID_POINTS.max(((hi - lo) / (0.5 * h)).ceil() as usize + 1);
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (total * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let density = grid
        .iter()
        .map(|&x| {
            let s: f64 = values
                .iter()
                .zip(&w)
                .map(|(v, wi)| {
                    let z = (x - v) / h;
                    wi * (-0.5 * z * z).exp()
                })
                .sum();
            s * norm
        })
        .collect();
    Ok(KdeCurve {
        grid,
        density,
        bandwidth: h,
    })
}

/// Values of `metric` for players in `group`, skipping missing ones.
pub fn metric_values(ratings: &[PlayerRating], metric: Metric, group: PositionGroup) -> Vec<f64> {
    ratings
        .iter()
        .filter(|r| r.position.group() == group)
        .filter_map(|r| metric.value(r))
        .collect()
}

/// Long-format density table, `position,x,density`, one block per curve.
pub fn write_kde_csv<W: Write>(w: W, curves: &[(PositionGroup, KdeCurve)]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["position", "x", "density"])?;
    for (group, curve) in curves {
        for (x, d) in curve.grid.iter().zip(&curve.density) {
            out.write_record([group.code(), &x.to_string(), &d.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}
