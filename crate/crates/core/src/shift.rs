//! Domain vocabulary: players, positions, shifts and per-player on-ice
//! summaries.
//!
//! A [`Shift`] is one substitution-free interval of even-strength play with
//! both goalies on the ice. Seconds are the time unit throughout; minutes
//! appear only where values are reported.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque, dataset-unique player identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub String);

impl PlayerId {
    pub fn new(id: impl Into<String>) -> Self {
        PlayerId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PlayerId {
    fn from(s: &str) -> Self {
        PlayerId(s.to_string())
    }
}

/// Season label, e.g. `2008-09`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Season(pub String);

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Roster position as listed in the roster file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Position {
    #[serde(rename = "C")]
    Center,
    #[serde(rename = "LW")]
    LeftWing,
    #[serde(rename = "RW")]
    RightWing,
    #[serde(rename = "D")]
    Defense,
    #[serde(rename = "G")]
    Goalie,
}

/// Coarse position class used for replacement pools and report filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PositionGroup {
    #[serde(rename = "F")]
    Forward,
    #[serde(rename = "D")]
    Defense,
    #[serde(rename = "G")]
    Goalie,
}

impl Position {
    pub fn group(self) -> PositionGroup {
        match self {
            Position::Center | Position::LeftWing | Position::RightWing => PositionGroup::Forward,
            Position::Defense => PositionGroup::Defense,
            Position::Goalie => PositionGroup::Goalie,
        }
    }

    pub fn is_goalie(self) -> bool {
        self == Position::Goalie
    }

    pub fn code(self) -> &'static str {
        match self {
            Position::Center => "C",
            Position::LeftWing => "LW",
            Position::RightWing => "RW",
            Position::Defense => "D",
            Position::Goalie => "G",
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown position `{0}` (expected one of C, LW, RW, D, G)")]
pub struct UnknownPosition(pub String);

impl FromStr for Position {
    type Err = UnknownPosition;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "C" => Ok(Position::Center),
            "LW" => Ok(Position::LeftWing),
            "RW" => Ok(Position::RightWing),
            "D" => Ok(Position::Defense),
            "G" => Ok(Position::Goalie),
            other => Err(UnknownPosition(other.to_string())),
        }
    }
}

impl PositionGroup {
    pub fn code(self) -> &'static str {
        match self {
            PositionGroup::Forward => "F",
            PositionGroup::Defense => "D",
            PositionGroup::Goalie => "G",
        }
    }
}

impl fmt::Display for PositionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for PositionGroup {
    type Err = UnknownPosition;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "F" => Ok(PositionGroup::Forward),
            "D" => Ok(PositionGroup::Defense),
            "G" => Ok(PositionGroup::Goalie),
            other => Err(UnknownPosition(other.to_string())),
        }
    }
}

/// Roster entry. Position is fixed for the whole dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Player {
    pub id: PlayerId,
    pub name: String,
    pub position: Position,
}

/// Players keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    players: BTreeMap<PlayerId, Player>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RosterError {
    #[error("player `{0}` listed twice in roster")]
    Duplicate(PlayerId),
    #[error("player `{player}` in game {game_id} is not in the roster")]
    UnknownPlayer { player: PlayerId, game_id: String },
    #[error("player `{player}` ({position}) appears as a {slot} in game {game_id}")]
    WrongSlot {
        player: PlayerId,
        position: Position,
        slot: &'static str,
        game_id: String,
    },
}

impl Roster {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, player: Player) -> Result<(), RosterError> {
        if self.players.contains_key(&player.id) {
            return Err(RosterError::Duplicate(player.id));
        }
        self.players.insert(player.id.clone(), player);
        Ok(())
    }

    pub fn get(&self, id: &PlayerId) -> Option<&Player> {
        self.players.get(id)
    }

    pub fn position(&self, id: &PlayerId) -> Option<Position> {
        self.players.get(id).map(|p| p.position)
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    /// Players in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Player> {
        self.players.values()
    }

    /// Checks that every on-ice player is rostered and that goalies only
    /// appear in the goalie slot (and skaters only in skater slots).
    pub fn check_shifts(&self, shifts: &[Shift]) -> Result<(), RosterError> {
        for shift in shifts {
            for side in [&shift.home, &shift.away] {
                self.check_slot(&side.goalie, true, &shift.game_id)?;
                for s in &side.skaters {
                    self.check_slot(s, false, &shift.game_id)?;
                }
            }
        }
        Ok(())
    }

    fn check_slot(&self, id: &PlayerId, goalie_slot: bool, game_id: &str) -> Result<(), RosterError> {
        let position = self.position(id).ok_or_else(|| RosterError::UnknownPlayer {
            player: id.clone(),
            game_id: game_id.to_string(),
        })?;
        if position.is_goalie() != goalie_slot {
            return Err(RosterError::WrongSlot {
                player: id.clone(),
                position,
                slot: if goalie_slot { "goalie" } else { "skater" },
                game_id: game_id.to_string(),
            });
        }
        Ok(())
    }
}

impl FromIterator<Player> for Roster {
    /// Later duplicates overwrite earlier ones; use [`Roster::insert`] to
    /// detect them.
    fn from_iter<I: IntoIterator<Item = Player>>(iter: I) -> Self {
        Roster {
            players: iter.into_iter().map(|p| (p.id.clone(), p)).collect(),
        }
    }
}

/// One team's players on the ice for a shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineup {
    pub skaters: Vec<PlayerId>,
    pub goalie: PlayerId,
}

impl Lineup {
    /// Skaters followed by the goalie.
    pub fn players(&self) -> impl Iterator<Item = &PlayerId> {
        self.skaters.iter().chain(std::iter::once(&self.goalie))
    }

    pub fn contains(&self, id: &PlayerId) -> bool {
        self.goalie == *id || self.skaters.contains(id)
    }
}

/// A validated even-strength shift.
///
/// Invariants (enforced by [`crate::ingest::filter_shifts`]): positive
/// duration, equal skater counts of 3 to 5 per side, a goalie on each side
/// and no player on both teams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub game_id: String,
    pub season: Season,
    pub duration_s: f64,
    pub home_goals: u32,
    pub away_goals: u32,
    pub home: Lineup,
    pub away: Lineup,
}

impl Shift {
    /// Both lineups, home first, paired with the goals each side scored and
    /// conceded.
    pub fn sides(&self) -> [(&Lineup, u32, u32); 2] {
        [
            (&self.home, self.home_goals, self.away_goals),
            (&self.away, self.away_goals, self.home_goals),
        ]
    }

    pub fn on_ice(&self) -> impl Iterator<Item = &PlayerId> {
        self.home.players().chain(self.away.players())
    }
}

/// Shift row as read from a file, before any validation. Goalie slots may
/// be empty and skater lists may have any size.
#[derive(Debug, Clone, PartialEq)]
pub struct RawShiftRecord {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub game_id: String,
    pub season: Season,
    pub duration_s: f64,
    pub home_goals: u32,
    pub away_goals: u32,
    pub home_goalie: Option<PlayerId>,
    pub away_goalie: Option<PlayerId>,
    pub home_skaters: Vec<PlayerId>,
    pub away_skaters: Vec<PlayerId>,
}

impl RawShiftRecord {
    pub fn home_goalie_present(&self) -> bool {
        self.home_goalie.is_some()
    }

    pub fn away_goalie_present(&self) -> bool {
        self.away_goalie.is_some()
    }

    /// True when both sides field the same number of skaters.
    pub fn even_strength(&self) -> bool {
        self.home_skaters.len() == self.away_skaters.len()
    }
}

impl From<&Shift> for RawShiftRecord {
    fn from(s: &Shift) -> Self {
        RawShiftRecord {
            line: 0,
            game_id: s.game_id.clone(),
            season: s.season.clone(),
            duration_s: s.duration_s,
            home_goals: s.home_goals,
            away_goals: s.away_goals,
            home_goalie: Some(s.home.goalie.clone()),
            away_goalie: Some(s.away.goalie.clone()),
            home_skaters: s.home.skaters.clone(),
            away_skaters: s.away.skaters.clone(),
        }
    }
}

/// Raw on-ice production for one player. Per-season figures are averages
/// over the number of seasons in the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerSeasonStats {
    pub player: PlayerId,
    pub seconds: f64,
    pub mins_total: f64,
    pub mins_per_season: f64,
    pub shifts: u64,
    pub gf: f64,
    pub ga: f64,
    pub ng: f64,
    pub gf60: f64,
    pub ga60: f64,
    pub ng60: f64,
}

/// A teammate and the share of the player's ice time spent with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linemate {
    pub player: PlayerId,
    pub fraction: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinemateError {
    #[error("player `{0}` does not appear in any shift")]
    PlayerAbsent(PlayerId),
}

/// Top-`k` teammates of `player` by shared on-ice seconds.
///
/// Fractions are shared seconds over the player's total seconds. Ties are
/// broken by teammate id.
pub fn linemate_summary(player: &PlayerId, shifts: &[Shift], k: usize) -> Result<Vec<Linemate>, LinemateError> {
    let mut total = 0.0;
    let mut shared: HashMap<&PlayerId, f64> = HashMap::new();
    for shift in shifts {
        let side = if shift.home.contains(player) {
            &shift.home
        } else if shift.away.contains(player) {
            &shift.away
        } else {
            continue;
        };
        total += shift.duration_s;
        for mate in side.players().filter(|m| *m != player) {
            *shared.entry(mate).or_insert(0.0) += shift.duration_s;
        }
    }
    if total == 0.0 {
        return Err(LinemateError::PlayerAbsent(player.clone()));
    }
    Ok(rank_linemates(
        shared.into_iter().map(|(id, s)| (id.clone(), s)),
        total,
        k,
    ))
}

/// Linemate summaries for every player in one pass over the shifts.
pub fn linemate_table(shifts: &[Shift], k: usize) -> BTreeMap<PlayerId, Vec<Linemate>> {
    let mut totals: HashMap<&PlayerId, f64> = HashMap::new();
    let mut shared: HashMap<&PlayerId, HashMap<&PlayerId, f64>> = HashMap::new();
    for shift in shifts {
        for side in [&shift.home, &shift.away] {
            for p in side.players() {
                *totals.entry(p).or_insert(0.0) += shift.duration_s;
                let row = shared.entry(p).or_default();
                for mate in side.players().filter(|m| *m != p) {
                    *row.entry(mate).or_insert(0.0) += shift.duration_s;
                }
            }
        }
    }
    totals
        .into_iter()
        .map(|(p, total)| {
            let mates = shared
                .remove(p)
                .unwrap_or_default()
                .into_iter()
                .map(|(id, s)| (id.clone(), s));
            (p.clone(), rank_linemates(mates, total, k))
        })
        .collect()
}

fn rank_linemates(shared: impl Iterator<Item = (PlayerId, f64)>, total: f64, k: usize) -> Vec<Linemate> {
    let mut mates: Vec<(PlayerId, f64)> = shared.collect();
    mates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    mates
        .into_iter()
        .take(k)
        .map(|(player, secs)| Linemate {
            player,
            fraction: secs / total,
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn single_shift_fractions_are_one() {
        let shifts = vec![shift(
            30.0,
            0,
            0,
            lineup(&["p", "a", "b"], "g"),
            lineup(&["x", "y", "z"], "v"),
        )];
        let mates = linemate_summary(&pid("p"), &shifts, 3).unwrap();
        assert_eq!(mates.len(), 3);
        for m in &mates {
            assert_eq!(m.fraction, 1.0);
        }
        // ties resolved by id
        let ids: Vec<_> = mates.iter().map(|m| m.player.as_str()).collect();
        assert_eq!(ids, ["a", "b", "g"]);
    }

    #[test]
    fn three_shift_fractions_match_hand_count() {
        // a plays 120 s total. With b: 40 + 20 = 60; c: 40 + 60 = 100;
        // d: 20 + 60 = 80; h: 120.
        let shifts = three_shifts();
        let mates = linemate_summary(&pid("a"), &shifts, 4).unwrap();
        let got: Vec<(&str, f64)> = mates.iter().map(|m| (m.player.as_str(), m.fraction)).collect();
        assert_eq!(
            got,
            vec![
                ("h", 1.0),
                ("c", 100.0 / 120.0),
                ("d", 80.0 / 120.0),
                ("b", 60.0 / 120.0)
            ]
        );

        // away side: w plays 80 s, with x 80, y 20, z 60, v 20, u 60
        let w = linemate_summary(&pid("w"), &shifts, 2).unwrap();
        assert_eq!(
            w[0],
            Linemate {
                player: pid("x"),
                fraction: 1.0
            }
        );
        assert_eq!(w[1].player, pid("u"));
        assert_eq!(w[1].fraction, 0.75);
    }

    #[test]
    fn fewer_than_k_is_success() {
        let shifts = three_shifts();
        let mates = linemate_summary(&pid("u"), &shifts, 10).unwrap();
        assert_eq!(mates.len(), 3);
    }

    #[test]
    fn absent_player_is_an_error() {
        let shifts = three_shifts();
        assert_eq!(
            linemate_summary(&pid("nobody"), &shifts, 3),
            Err(LinemateError::PlayerAbsent(pid("nobody")))
        );
    }

    #[test]
    fn twin_share_reproduces_table_value() {
        // "H" spends 83 of 100 equal shifts with "D".
        let mut shifts = Vec::new();
        for i in 0..100 {
            let home = if i < 83 {
                lineup(&["H", "D", "x1"], "g")
            } else {
                lineup(&["H", "x2", "x3"], "g")
            };
            shifts.push(shift(45.0, 0, 0, home, lineup(&["o1", "o2", "o3"], "og")));
        }
        let mates = linemate_summary(&pid("H"), &shifts, 3).unwrap();
        assert_eq!(mates[0].player, pid("g"));
        assert_eq!(mates[1].player, pid("D"));
        assert!((mates[1].fraction - 0.83).abs() < 1e-12);
    }

    #[test]
    fn table_agrees_with_single_player_summary() {
        let shifts = three_shifts();
        let table = linemate_table(&shifts, 3);
        for (player, mates) in &table {
            assert_eq!(&linemate_summary(player, &shifts, 3).unwrap(), mates);
        }
        assert_eq!(table.len(), 11);
    }

    #[test]
    fn shared_seconds_bounded_by_roster_size() {
        let shifts = three_shifts();
        for (player, mates) in linemate_table(&shifts, usize::MAX) {
            let sum: f64 = mates.iter().map(|m| m.fraction).sum();
            // 3 skaters + goalie per side: at most 3 teammates at once
            assert!(sum <= 3.0 + 1e-12, "{player}: {sum}");
            assert!(mates.iter().all(|m| (0.0..=1.0).contains(&m.fraction)));
        }
    }

    #[test]
    fn position_codes_round_trip() {
        for code in ["C", "LW", "RW", "D", "G"] {
            assert_eq!(code.parse::<Position>().unwrap().code(), code);
        }
        assert!("X".parse::<Position>().is_err());
        assert_eq!(Position::LeftWing.group(), PositionGroup::Forward);
    }

    #[test]
    fn roster_check_flags_unknown_and_misplaced_players() {
        let shifts = three_shifts();
        let mut roster: Roster = ["a", "b", "c", "d", "x", "y", "z", "w"]
            .iter()
            .map(|id| Player {
                id: pid(id),
                name: id.to_uppercase(),
                position: Position::Center,
            })
            .collect();
        assert!(matches!(
            roster.check_shifts(&shifts),
            Err(RosterError::UnknownPlayer { .. })
        ));
        for g in ["h", "v"] {
            roster
                .insert(Player {
                    id: pid(g),
                    name: g.into(),
                    position: Position::Goalie,
                })
                .unwrap();
        }
        roster
            .insert(Player {
                id: pid("u"),
                name: "u".into(),
                position: Position::Defense,
            })
            .unwrap();
        assert!(matches!(
            roster.check_shifts(&shifts),
            Err(RosterError::WrongSlot { slot: "goalie", .. })
        ));
        assert!(matches!(
            roster.insert(Player {
                id: pid("a"),
                name: "dup".into(),
                position: Position::Center
            }),
            Err(RosterError::Duplicate(_))
        ));
    }
}
