//! End-to-end rating runs over validated shifts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{build_ib_design, build_r_net_design, build_r_total_design, DesignError, DesignOptions};
use crate::ingest::eligible_players;
use crate::metrics::{
    average_models, ratings_ib, ratings_r, raw_onice_stats, separate_r, single_model, MetricsError, PlayerRating,
    RSeparation,
};
use crate::shift::{PlayerId, PlayerSeasonStats, Roster, RosterError, Shift};
use crate::wls::{fit, FitError, FitOptions, FitResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSelection {
    /// Offense/defense model only.
    Ib,
    /// Net and total models only.
    R,
    #[default]
    Both,
}

impl ModelSelection {
    pub fn includes_ib(self) -> bool {
        matches!(self, ModelSelection::Ib | ModelSelection::Both)
    }

    pub fn includes_r(self) -> bool {
        matches!(self, ModelSelection::R | ModelSelection::Both)
    }
}

impl fmt::Display for ModelSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSelection::Ib => "ib",
            ModelSelection::R => "r",
            ModelSelection::Both => "both",
        })
    }
}

impl FromStr for ModelSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ib" => Ok(ModelSelection::Ib),
            "r" => Ok(ModelSelection::R),
            "both" => Ok(ModelSelection::Both),
            other => Err(format!("unknown model `{other}` (expected ib, r or both)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub min_shifts: u64,
    pub model: ModelSelection,
    pub fit: FitOptions,
    pub design: DesignOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            min_shifts: crate::ingest::DEFAULT_MIN_SHIFTS,
            model: ModelSelection::Both,
            fit: FitOptions::default(),
            design: DesignOptions::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Roster(#[from] RosterError),
    #[error("no player reaches {0} shifts")]
    NoEligiblePlayers(u64),
    #[error("{model} design: {source}")]
    Design {
        model: &'static str,
        #[source]
        source: DesignError,
    },
    #[error("{model} fit: {source}")]
    Fit {
        model: &'static str,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Fitted models; absent entries were not selected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub ib: Option<FitResult>,
    pub net: Option<FitResult>,
    pub total: Option<FitResult>,
}

type FitOutcome = Option<Result<FitResult, PipelineError>>;

/// Builds and fits the selected designs. The three fits run concurrently;
/// each is deterministic on its own.
pub fn fit_models(
    shifts: &[Shift],
    roster: &Roster,
    eligible: &BTreeSet<PlayerId>,
    options: &PipelineOptions,
) -> Result<Fits, PipelineError> {
    let run =
        |model: &'static str,
         build: fn(&[Shift], &BTreeSet<PlayerId>, &Roster, DesignOptions) -> Result<_, DesignError>| {
            let design = build(shifts, eligible, roster, options.design)
                .map_err(|source| PipelineError::Design { model, source })?;
            fit(&design, options.fit).map_err(|source| PipelineError::Fit { model, source })
        };
    let (ib, (net, total)): (FitOutcome, (FitOutcome, FitOutcome)) = rayon::join(
        || options.model.includes_ib().then(|| run("ib", build_ib_design)),
        || {
            if options.model.includes_r() {
                let (n, t) = rayon::join(
                    || run("r_net", build_r_net_design),
                    || run("r_total", build_r_total_design),
                );
                (Some(n), Some(t))
            } else {
                (None, None)
            }
        },
    );
    Ok(Fits {
        ib: ib.transpose()?,
        net: net.transpose()?,
        total: total.transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ratings {
    /// Final ratings in player-id order.
    pub players: Vec<PlayerRating>,
    pub r_separation: Option<BTreeMap<PlayerId, RSeparation>>,
    /// False when only one model was fitted.
    pub averaged: bool,
}

/// Turns fits into ratings for `eligible` players.
pub fn rate(
    fits: &Fits,
    roster: &Roster,
    eligible: &BTreeSet<PlayerId>,
    stats: &BTreeMap<PlayerId, PlayerSeasonStats>,
) -> Result<Ratings, PipelineError> {
    let ib = fits.ib.as_ref().map(|f| ratings_ib(f, eligible, roster)).transpose()?;
    let sep = match (&fits.net, &fits.total) {
        (Some(n), Some(t)) => Some(separate_r(n, t, eligible)?),
        _ => None,
    };
    let r = sep.as_ref().map(|s| ratings_r(s, roster)).transpose()?;
    let (players, averaged) = match (&ib, &r) {
        (Some(a), Some(b)) => (average_models(a, b, sep.as_ref(), roster, stats)?, true),
        (Some(a), None) | (None, Some(a)) => (single_model(a, roster, stats)?, false),
        (None, None) => (Vec::new(), false),
    };
    Ok(Ratings {
        players,
        r_separation: sep,
        averaged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub eligible: BTreeSet<PlayerId>,
    pub stats: BTreeMap<PlayerId, PlayerSeasonStats>,
    pub fits: Fits,
    pub ratings: Ratings,
}

/// Eligibility, fits and ratings for validated shifts.
pub fn run(shifts: &[Shift], roster: &Roster, options: &PipelineOptions) -> Result<PipelineOutput, PipelineError> {
    roster.check_shifts(shifts)?;
    let eligible = eligible_players(shifts, options.min_shifts);
    if eligible.is_empty() {
        return Err(PipelineError::NoEligiblePlayers(options.min_shifts));
    }
    let fits = fit_models(shifts, roster, &eligible, options)?;
    let stats = raw_onice_stats(shifts);
    let ratings = rate(&fits, roster, &eligible, &stats)?;
    Ok(PipelineOutput {
        eligible,
        stats,
        fits,
        ratings,
    })
}
