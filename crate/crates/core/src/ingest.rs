//! Shift and roster file IO plus the even-strength filter.
//!
//! Shift files are CSV with the header
//! `game_id,season,duration_s,home_goals,away_goals,home_goalie,away_goalie,home_skaters,away_skaters`.
//! Skater lists are `|`-separated player ids; an empty goalie cell means the
//! net was empty. Roster files are `player_id,name,position`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shift::{Lineup, Player, PlayerId, Position, RawShiftRecord, Roster, RosterError, Season, Shift};

pub const SHIFT_COLUMNS: [&str; 9] = [
    "game_id",
    "season",
    "duration_s",
    "home_goals",
    "away_goals",
    "home_goalie",
    "away_goalie",
    "home_skaters",
    "away_skaters",
];

pub const ROSTER_COLUMNS: [&str; 3] = ["player_id", "name", "position"];

/// Total players (goalie included) one team may have on the ice.
pub const MIN_ON_ICE: usize = 4;
pub const MAX_ON_ICE: usize = 6;

/// Default eligibility cutoff for league-scale data.
pub const DEFAULT_MIN_SHIFTS: u64 = 4000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: bad value {value:?} for `{field}`")]
    BadField {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Roster(#[from] RosterError),
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    IngestError::Csv {
        line,
        message: e.to_string(),
    }
}

fn column_index(headers: &csv::StringRecord, name: &'static str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or(IngestError::MissingColumn(name))
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a shift file. Rows are not validated beyond field types.
pub fn parse_shift_file(path: impl AsRef<Path>) -> Result<Vec<RawShiftRecord>, IngestError> {
    parse_shift_reader(open(path.as_ref())?)
}

pub fn parse_shift_reader<R: Read>(reader: R) -> Result<Vec<RawShiftRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(SHIFT_COLUMNS) {
        *slot = column_index(&headers, name)?;
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| rec.get(idx[i]).unwrap_or("").trim();
        let bad = |i: usize| IngestError::BadField {
            line,
            field: SHIFT_COLUMNS[i],
            value: field(i).to_string(),
        };
        let duration_s: f64 = field(2).parse().map_err(|_| bad(2))?;
        let home_goals: u32 = field(3).parse().map_err(|_| bad(3))?;
        let away_goals: u32 = field(4).parse().map_err(|_| bad(4))?;
        out.push(RawShiftRecord {
            line,
            game_id: field(0).to_string(),
            season: Season(field(1).to_string()),
            duration_s,
            home_goals,
            away_goals,
            home_goalie: goalie_cell(field(5)),
            away_goalie: goalie_cell(field(6)),
            home_skaters: skater_list(field(7)),
            away_skaters: skater_list(field(8)),
        });
    }
    Ok(out)
}

fn goalie_cell(s: &str) -> Option<PlayerId> {
    (!s.is_empty()).then(|| PlayerId::new(s))
}

fn skater_list(s: &str) -> Vec<PlayerId> {
    if s.is_empty() {
        return Vec::new();
    }
    s.split('|').map(|p| PlayerId::new(p.trim())).collect()
}

/// Writes validated shifts in the same schema [`parse_shift_file`] reads.
/// Durations use the shortest representation that round-trips exactly.
pub fn write_shifts<W: Write>(writer: W, shifts: &[Shift]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SHIFT_COLUMNS).map_err(csv_error)?;
    for s in shifts {
        let join = |l: &Lineup| l.skaters.iter().map(PlayerId::as_str).collect::<Vec<_>>().join("|");
        w.write_record([
            s.game_id.as_str(),
            &s.season.0,
            &s.duration_s.to_string(),
            &s.home_goals.to_string(),
            &s.away_goals.to_string(),
            s.home.goalie.as_str(),
            s.away.goalie.as_str(),
            &join(&s.home),
            &join(&s.away),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<shift writer>".into(),
        source,
    })
}

pub fn write_shift_file(path: impl AsRef<Path>, shifts: &[Shift]) -> Result<(), IngestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_shifts(std::io::BufWriter::new(file), shifts)
}

pub fn parse_roster_file(path: impl AsRef<Path>) -> Result<Roster, IngestError> {
    parse_roster_reader(open(path.as_ref())?)
}

pub fn parse_roster_reader<R: Read>(reader: R) -> Result<Roster, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let id_col = column_index(&headers, "player_id")?;
    let name_col = column_index(&headers, "name")?;
    let pos_col = column_index(&headers, "position")?;
    let mut roster = Roster::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = rec.get(id_col).unwrap_or("").trim();
        if id.is_empty() {
            return Err(IngestError::BadField {
                line,
                field: "player_id",
                value: String::new(),
            });
        }
        let pos_raw = rec.get(pos_col).unwrap_or("").trim();
        let position: Position = pos_raw.parse().map_err(|_| IngestError::BadField {
            line,
            field: "position",
            value: pos_raw.to_string(),
        })?;
        roster.insert(Player {
            id: PlayerId::new(id),
            name: rec.get(name_col).unwrap_or("").trim().to_string(),
            position,
        })?;
    }
    Ok(roster)
}

pub fn write_roster<W: Write>(writer: W, roster: &Roster) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ROSTER_COLUMNS).map_err(csv_error)?;
    for p in roster.iter() {
        w.write_record([p.id.as_str(), &p.name, p.position.code()])
            .map_err(csv_error)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<roster writer>".into(),
        source,
    })
}

/// Tally of the filter pass. Each removed record is counted under the first
/// rule it fails, in the order malformed, roster size, empty net, special
/// teams.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total_read: u64,
    pub removed_malformed: u64,
    pub removed_roster_size: u64,
    pub removed_empty_net: u64,
    pub removed_special_teams: u64,
    pub retained: u64,
}

impl FilterReport {
    pub fn removed(&self) -> u64 {
        self.removed_malformed + self.removed_roster_size + self.removed_empty_net + self.removed_special_teams
    }

    /// `total_read == retained + removed`.
    pub fn is_consistent(&self) -> bool {
        self.total_read == self.retained + self.removed()
    }

    /// Combines reports of disjoint partitions.
    pub fn merge(self, other: FilterReport) -> FilterReport {
        FilterReport {
            total_read: self.total_read + other.total_read,
            removed_malformed: self.removed_malformed + other.removed_malformed,
            removed_roster_size: self.removed_roster_size + other.removed_roster_size,
            removed_empty_net: self.removed_empty_net + other.removed_empty_net,
            removed_special_teams: self.removed_special_teams + other.removed_special_teams,
            retained: self.retained + other.retained,
        }
    }
}

/// Why a record was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Malformed,
    RosterSize,
    EmptyNet,
    SpecialTeams,
}

/// First failing rule for a record, if any.
pub fn classify(rec: &RawShiftRecord) -> Option<Rejection> {
    if is_malformed(rec) {
        return Some(Rejection::Malformed);
    }
    let on_ice = |skaters: &[PlayerId], goalie: &Option<PlayerId>| skaters.len() + usize::from(goalie.is_some());
    let home = on_ice(&rec.home_skaters, &rec.home_goalie);
    let away = on_ice(&rec.away_skaters, &rec.away_goalie);
    if ![home, away].iter().all(|n| (MIN_ON_ICE..=MAX_ON_ICE).contains(n)) {
        return Some(Rejection::RosterSize);
    }
    if !(rec.home_goalie_present() && rec.away_goalie_present()) {
        return Some(Rejection::EmptyNet);
    }
    if !rec.even_strength() {
        return Some(Rejection::SpecialTeams);
    }
    None
}

fn is_malformed(rec: &RawShiftRecord) -> bool {
    if !(rec.duration_s.is_finite() && rec.duration_s > 0.0) {
        return true;
    }
    let mut seen = HashSet::new();
    let everyone = rec
        .home_skaters
        .iter()
        .chain(&rec.away_skaters)
        .chain(rec.home_goalie.iter())
        .chain(rec.away_goalie.iter());
    for p in everyone {
        if p.as_str().is_empty() || !seen.insert(p) {
            return true;
        }
    }
    false
}

/// Keeps the regression-eligible even-strength shifts, in input order.
pub fn filter_shifts(records: &[RawShiftRecord]) -> (Vec<Shift>, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(records.len());
    for rec in records {
        report.total_read += 1;
        match classify(rec) {
            Some(Rejection::Malformed) => report.removed_malformed += 1,
            Some(Rejection::RosterSize) => report.removed_roster_size += 1,
            Some(Rejection::EmptyNet) => report.removed_empty_net += 1,
            Some(Rejection::SpecialTeams) => report.removed_special_teams += 1,
            None => {
                report.retained += 1;
                kept.push(Shift {
                    game_id: rec.game_id.clone(),
                    season: rec.season.clone(),
                    duration_s: rec.duration_s,
                    home_goals: rec.home_goals,
                    away_goals: rec.away_goals,
                    home: Lineup {
                        skaters: rec.home_skaters.clone(),
                        goalie: rec.home_goalie.clone().expect("checked"),
                    },
                    away: Lineup {
                        skaters: rec.away_skaters.clone(),
                        goalie: rec.away_goalie.clone().expect("checked"),
                    },
                });
            }
        }
    }
    (kept, report)
}

/// Players on the ice for at least `min_shifts` shifts.
pub fn eligible_players(shifts: &[Shift], min_shifts: u64) -> BTreeSet<PlayerId> {
    let mut counts: HashMap<&PlayerId, u64> = HashMap::new();
    for s in shifts {
        for p in s.on_ice() {
            *counts.entry(p).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n >= min_shifts)
        .map(|(p, _)| p.clone())
        .collect()
}
