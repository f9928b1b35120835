//! Player ratings from fitted models.
//!
//! Rates are goals per 60 minutes; counting values are goals per season,
//! obtained by scaling a rate with the player's average even-strength
//! minutes per season. Defensive rates are reported with the sign flipped
//! so that positive always means good.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{per60, Role};
use crate::shift::{PlayerId, PlayerSeasonStats, Position, Roster, Shift};
use crate::wls::FitResult;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("player `{player}` has no {role:?} column in the fit")]
    MissingColumn { player: PlayerId, role: Role },
    #[error("net and total fits were built on different column maps")]
    ColumnMapMismatch,
    #[error("player `{0}` is rated by only one model")]
    UniverseMismatch(PlayerId),
    #[error("player `{0}` is not in the roster")]
    UnknownPlayer(PlayerId),
    #[error("no on-ice time recorded for `{0}`")]
    NoIceTime(PlayerId),
}

/// Converts a per-60 rate (or its standard error) to goals per season.
pub fn to_counting(rate60: f64, mins: f64) -> f64 {
    rate60 * mins / 60.0
}

/// Error of a sum of two uncorrelated estimates.
pub fn combine_off_def_err(oerr: f64, derr: f64) -> f64 {
    (oerr * oerr + derr * derr).sqrt()
}

/// Error of the mean of two uncorrelated estimates.
pub fn average_err(a: f64, b: f64) -> f64 {
    0.5 * combine_off_def_err(a, b)
}

/// On-ice production for every player appearing in `shifts`. Per-season
/// values divide by the number of distinct seasons in the data.
pub fn raw_onice_stats(shifts: &[Shift]) -> BTreeMap<PlayerId, PlayerSeasonStats> {
    struct Acc {
        seconds: f64,
        shifts: u64,
        gf: u64,
        ga: u64,
    }
    let seasons: BTreeSet<&str> = shifts.iter().map(|s| s.season.0.as_str()).collect();
    let n_seasons = seasons.len().max(1) as f64;
    let mut acc: HashMap<&PlayerId, Acc> = HashMap::new();
    for s in shifts {
        for (side, gf, ga) in s.sides() {
            for p in side.players() {
                let a = acc.entry(p).or_insert(Acc {
                    seconds: 0.0,
                    shifts: 0,
                    gf: 0,
                    ga: 0,
                });
                a.seconds += s.duration_s;
                a.shifts += 1;
                a.gf += u64::from(gf);
                a.ga += u64::from(ga);
            }
        }
    }
    acc.into_iter()
        .map(|(p, a)| {
            let (gf, ga) = (a.gf as f64, a.ga as f64);
            let gf60 = per60(gf, a.seconds);
            let ga60 = per60(ga, a.seconds);
            let mins_total = a.seconds / 60.0;
            let stats = PlayerSeasonStats {
                player: p.clone(),
                seconds: a.seconds,
                mins_total,
                mins_per_season: mins_total / n_seasons,
                shifts: a.shifts,
                gf: gf / n_seasons,
                ga: ga / n_seasons,
                ng: (gf - ga) / n_seasons,
                gf60,
                ga60,
                ng60: gf60 - ga60,
            };
            (p.clone(), stats)
        })
        .collect()
}

/// One model's per-60 estimates for a player. Goalies carry no offense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRating {
    pub opm60: Option<f64>,
    pub dpm60: f64,
    pub oerr60: Option<f64>,
    pub derr60: f64,
}

fn lookup(fit: &FitResult, player: &PlayerId, role: Role) -> Result<(f64, f64), MetricsError> {
    let c = fit
        .column_map
        .player_column(player, role)
        .ok_or_else(|| MetricsError::MissingColumn {
            player: player.clone(),
            role,
        })?;
    Ok((fit.coefficients[c], fit.std_errors[c]))
}

fn position(roster: &Roster, player: &PlayerId) -> Result<Position, MetricsError> {
    roster
        .position(player)
        .ok_or_else(|| MetricsError::UnknownPlayer(player.clone()))
}

/// Reads offense and defense estimates from an offense/defense fit.
pub fn ratings_ib(
    fit: &FitResult,
    players: &BTreeSet<PlayerId>,
    roster: &Roster,
) -> Result<BTreeMap<PlayerId, ModelRating>, MetricsError> {
    let mut out = BTreeMap::new();
    for p in players {
        let (delta, delta_se) = lookup(fit, p, Role::Defense)?;
        let (opm60, oerr60) = if position(roster, p)?.is_goalie() {
            (None, None)
        } else {
            let (beta, se) = lookup(fit, p, Role::Offense)?;
            (Some(beta), Some(se))
        };
        out.insert(
            p.clone(),
            ModelRating {
                opm60,
                dpm60: -delta,
                oerr60,
                derr60: delta_se,
            },
        );
    }
    Ok(out)
}

/// Net and total estimates split into offense and defense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSeparation {
    /// Net rating, exactly `opm60 + dpm60`.
    pub eta: f64,
    /// Net-goals coefficient as fitted. Equal to `eta` unless cancellation
    /// makes that unrepresentable, in which case it is within a few ulps.
    pub eta_fit: f64,
    /// Total-goals coefficient as fitted.
    pub tpm60: f64,
    pub opm60: f64,
    pub dpm60: f64,
    /// Shared by offense and defense.
    pub err60: f64,
}

/// Splits `(eta, tau)` into offense `(eta + tau) / 2` and defense
/// `(eta - tau) / 2`. The smaller part is taken as `eta` minus the larger
/// one, which makes the parts add back to `eta` exactly whenever
/// `|tau| <= |eta|`; otherwise the sum is within a few ulps of `eta`.
pub fn split_net_total(eta: f64, tau: f64) -> (f64, f64) {
    let opm = 0.5 * (eta + tau);
    let dpm = 0.5 * (eta - tau);
    if opm.abs() >= dpm.abs() {
        (opm, eta - opm)
    } else {
        (eta - dpm, dpm)
    }
}

/// Separates the net/total fits per player. The offense/defense error
/// treats the two fits as independent.
pub fn separate_r(
    net: &FitResult,
    total: &FitResult,
    players: &BTreeSet<PlayerId>,
) -> Result<BTreeMap<PlayerId, RSeparation>, MetricsError> {
    if net.column_map != total.column_map {
        return Err(MetricsError::ColumnMapMismatch);
    }
    let mut out = BTreeMap::new();
    for p in players {
        let (eta, eta_se) = lookup(net, p, Role::Shared)?;
        let (tau, tau_se) = lookup(total, p, Role::Shared)?;
        let (opm60, dpm60) = split_net_total(eta, tau);
        out.insert(
            p.clone(),
            RSeparation {
                eta: opm60 + dpm60,
                eta_fit: eta,
                tpm60: tau,
                opm60,
                dpm60,
                err60: 0.5 * combine_off_def_err(eta_se, tau_se),
            },
        );
    }
    Ok(out)
}

/// Model-R ratings in the common shape. Goalie offense is dropped here;
/// it stays available on [`RSeparation`].
pub fn ratings_r(
    sep: &BTreeMap<PlayerId, RSeparation>,
    roster: &Roster,
) -> Result<BTreeMap<PlayerId, ModelRating>, MetricsError> {
    sep.iter()
        .map(|(p, s)| {
            let goalie = position(roster, p)?.is_goalie();
            let rating = ModelRating {
                opm60: (!goalie).then_some(s.opm60),
                dpm60: s.dpm60,
                oerr60: (!goalie).then_some(s.err60),
                derr60: s.err60,
            };
            Ok((p.clone(), rating))
        })
        .collect()
}

/// Final per-player rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRating {
    pub player: PlayerId,
    pub name: String,
    pub position: Position,
    pub opm60: Option<f64>,
    pub dpm60: f64,
    pub apm60: f64,
    pub oerr60: Option<f64>,
    pub derr60: f64,
    pub err60: f64,
    pub opm: Option<f64>,
    pub dpm: f64,
    pub apm: f64,
    pub oerr: Option<f64>,
    pub derr: f64,
    pub err: f64,
    /// Even-strength minutes per season.
    pub mins: f64,
    pub stats: PlayerSeasonStats,
    /// Inputs that were averaged, when two models were combined.
    pub components: Option<[ModelRating; 2]>,
    /// Model-R offense estimate for goalies, not part of any total.
    pub goalie_r_opm60: Option<f64>,
}

impl PlayerRating {
    /// Builds the per-season view from per-60 values.
    pub fn from_rates(
        player: &PlayerId,
        roster: &Roster,
        rates: ModelRating,
        stats: &PlayerSeasonStats,
    ) -> Result<Self, MetricsError> {
        let p = roster
            .get(player)
            .ok_or_else(|| MetricsError::UnknownPlayer(player.clone()))?;
        let goalie = p.position.is_goalie();
        let (opm60, oerr60) = if goalie {
            (None, None)
        } else {
            (rates.opm60, rates.oerr60)
        };
        let apm60 = opm60.map_or(rates.dpm60, |o| o + rates.dpm60);
        let err60 = oerr60.map_or(rates.derr60, |o| combine_off_def_err(o, rates.derr60));
        let mins = stats.mins_per_season;
        let opm = opm60.map(|v| to_counting(v, mins));
        let dpm = to_counting(rates.dpm60, mins);
        let oerr = oerr60.map(|v| to_counting(v, mins));
        let derr = to_counting(rates.derr60, mins);
        Ok(PlayerRating {
            player: player.clone(),
            name: p.name.clone(),
            position: p.position,
            opm60,
            dpm60: rates.dpm60,
            apm60,
            oerr60,
            derr60: rates.derr60,
            err60,
            opm,
            dpm,
            apm: opm.map_or(dpm, |o| o + dpm),
            oerr,
            derr,
            err: oerr.map_or(derr, |o| combine_off_def_err(o, derr)),
            mins,
            stats: stats.clone(),
            components: None,
            goalie_r_opm60: None,
        })
    }
}

fn stats_for<'a>(
    stats: &'a BTreeMap<PlayerId, PlayerSeasonStats>,
    p: &PlayerId,
) -> Result<&'a PlayerSeasonStats, MetricsError> {
    stats.get(p).ok_or_else(|| MetricsError::NoIceTime(p.clone()))
}

/// Ratings from one model only.
pub fn single_model(
    ratings: &BTreeMap<PlayerId, ModelRating>,
    roster: &Roster,
    stats: &BTreeMap<PlayerId, PlayerSeasonStats>,
) -> Result<Vec<PlayerRating>, MetricsError> {
    ratings
        .iter()
        .map(|(p, r)| PlayerRating::from_rates(p, roster, *r, stats_for(stats, p)?))
        .collect()
}

fn mean_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(0.5 * (a? + b?))
}

/// Averages the two models' rates; errors combine as for a mean of two
/// independent estimates.
pub fn average_models(
    ib: &BTreeMap<PlayerId, ModelRating>,
    r: &BTreeMap<PlayerId, ModelRating>,
    r_sep: Option<&BTreeMap<PlayerId, RSeparation>>,
    roster: &Roster,
    stats: &BTreeMap<PlayerId, PlayerSeasonStats>,
) -> Result<Vec<PlayerRating>, MetricsError> {
    if let Some(p) = ib
        .keys()
        .find(|p| !r.contains_key(*p))
        .or_else(|| r.keys().find(|p| !ib.contains_key(*p)))
    {
        return Err(MetricsError::UniverseMismatch(p.clone()));
    }
    ib.iter()
        .map(|(p, a)| {
            let b = &r[p];
            let rates = ModelRating {
                opm60: mean_opt(a.opm60, b.opm60),
                dpm60: 0.5 * (a.dpm60 + b.dpm60),
                oerr60: match (a.oerr60, b.oerr60) {
                    (Some(x), Some(y)) => Some(average_err(x, y)),
                    _ => None,
                },
                derr60: average_err(a.derr60, b.derr60),
            };
            let mut rating = PlayerRating::from_rates(p, roster, rates, stats_for(stats, p)?)?;
            rating.components = Some([*a, *b]);
            if rating.position.is_goalie() {
                rating.goalie_r_opm60 = r_sep.and_then(|s| s.get(p)).map(|s| s.opm60);
            }
            Ok(rating)
        })
        .collect()
}
