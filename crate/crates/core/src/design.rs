//! Weighted regression designs for the two rating models.
//!
//! * The offense/defense model splits every shift into two rows, one per
//!   attacking side. Attacking skaters get offense columns, defending
//!   skaters and the defending goalie get defense columns. Goalies have no
//!   offense column.
//! * The net model has one row per shift with `+1` for every home player
//!   (goalie included) and `-1` for every away player. The total model
//!   shares its columns and puts `+1` on everyone on the ice.
//!
//! Responses are goals per 60 minutes and every row is weighted by the
//! shift's duration in seconds. The intercept is not stored; the solver
//! adds it.
//!
//! Players outside the eligible set are pooled into one replacement column
//! per position group and role. A pool entry holds the number of pooled
//! players of that group on the ice, so pool values can exceed one.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shift::{PlayerId, PositionGroup, Roster, Shift};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Goals per 60 minutes for `goals` scored over `duration_s` seconds.
pub fn per60(goals: f64, duration_s: f64) -> f64 {
    goals * SECONDS_PER_HOUR / duration_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Offense,
    Defense,
    /// One column per player used by both net and total models.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnSubject {
    Player(PlayerId),
    Replacement(PositionGroup),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnKey {
    pub subject: ColumnSubject,
    pub role: Role,
}

impl ColumnKey {
    pub fn player(id: &PlayerId, role: Role) -> Self {
        ColumnKey {
            subject: ColumnSubject::Player(id.clone()),
            role,
        }
    }

    pub fn replacement(group: PositionGroup, role: Role) -> Self {
        ColumnKey {
            subject: ColumnSubject::Replacement(group),
            role,
        }
    }
}

impl fmt::Display for ColumnKey {
    /// `off:<id>`, `def:<id>`, `plr:<id>`; replacement pools use `~F` etc.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            Role::Offense => "off",
            Role::Defense => "def",
            Role::Shared => "plr",
        };
        match &self.subject {
            ColumnSubject::Player(id) => write!(f, "{role}:{id}"),
            ColumnSubject::Replacement(g) => write!(f, "{role}:~{g}"),
        }
    }
}

/// A set of columns whose per-row sum may be pinned by construction (for
/// example, exactly one defending goalie per row). When it is, the group is
/// aliased with the intercept and the solver identifies it with a
/// sum-to-zero constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub name: String,
    pub columns: Vec<usize>,
}

/// Bijection between (player or pool, role) and column index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ColumnMapRepr", into = "ColumnMapRepr")]
pub struct ColumnMap {
    keys: Vec<ColumnKey>,
    groups: Vec<ColumnGroup>,
    index: HashMap<ColumnKey, usize>,
}

#[derive(Serialize, Deserialize)]
struct ColumnMapRepr {
    keys: Vec<ColumnKey>,
    groups: Vec<ColumnGroup>,
}

impl From<ColumnMapRepr> for ColumnMap {
    fn from(r: ColumnMapRepr) -> Self {
        ColumnMap::new(r.keys, r.groups)
    }
}

impl From<ColumnMap> for ColumnMapRepr {
    fn from(m: ColumnMap) -> Self {
        ColumnMapRepr {
            keys: m.keys,
            groups: m.groups,
        }
    }
}

impl ColumnMap {
    /// Panics if a key repeats.
    pub fn new(keys: Vec<ColumnKey>, groups: Vec<ColumnGroup>) -> Self {
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            let prev = index.insert(k.clone(), i);
            assert!(prev.is_none(), "duplicate column key {k}");
        }
        ColumnMap { keys, groups, index }
    }

    /// Columns named `c0..c{n-1}` with no groups, for generic regressions.
    pub fn anonymous(n: usize) -> Self {
        let keys = (0..n)
            .map(|i| ColumnKey::player(&PlayerId::new(format!("c{i}")), Role::Shared))
            .collect();
        ColumnMap::new(keys, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, col: usize) -> &ColumnKey {
        &self.keys[col]
    }

    pub fn keys(&self) -> &[ColumnKey] {
        &self.keys
    }

    pub fn groups(&self) -> &[ColumnGroup] {
        &self.groups
    }

    pub fn column(&self, key: &ColumnKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn player_column(&self, id: &PlayerId, role: Role) -> Option<usize> {
        self.column(&ColumnKey::player(id, role))
    }

    /// Players with at least one column, in id order.
    pub fn players(&self) -> BTreeSet<PlayerId> {
        self.keys
            .iter()
            .filter_map(|k| match &k.subject {
                ColumnSubject::Player(id) => Some(id.clone()),
                ColumnSubject::Replacement(_) => None,
            })
            .collect()
    }
}

/// One weighted regression row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Goals per 60 minutes.
    pub response: f64,
    /// Duration in seconds.
    pub weight: f64,
    /// Sparse (column, value) entries with unique columns.
    pub columns: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    OffenseDefense,
    Net,
    Total,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub kind: ModelKind,
    pub observations: Vec<Observation>,
    pub column_map: ColumnMap,
}

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("no eligible players")]
    NoEligiblePlayers,
    #[error("every player on the ice in shift {index} (game {game_id}) is ineligible and pooling is disabled")]
    AllIneligible { index: usize, game_id: String },
    #[error("player `{0}` is not in the roster")]
    UnknownPlayer(PlayerId),
    #[error("observation {row}: {message}")]
    InvalidObservation { row: usize, message: String },
}

impl DesignMatrix {
    /// Builds a generic design from explicit rows. Used by the solver tests
    /// and for arbitrary weighted regressions.
    pub fn from_observations(observations: Vec<Observation>, column_map: ColumnMap) -> Result<Self, DesignError> {
        let d = DesignMatrix {
            kind: ModelKind::Generic,
            observations,
            column_map,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n_rows(&self) -> usize {
        self.observations.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_map.len()
    }

    /// Checks weights, column bounds and column uniqueness per row.
    pub fn validate(&self) -> Result<(), DesignError> {
        let n = self.n_cols();
        for (row, obs) in self.observations.iter().enumerate() {
            let bad = |message: String| DesignError::InvalidObservation { row, message };
            if !(obs.weight.is_finite() && obs.weight > 0.0) {
                return Err(bad(format!("weight {} is not positive", obs.weight)));
            }
            if !obs.response.is_finite() {
                return Err(bad(format!("response {} is not finite", obs.response)));
            }
            let mut seen = BTreeSet::new();
            for &(c, v) in &obs.columns {
                if c >= n {
                    return Err(bad(format!("column {c} out of range ({n} columns)")));
                }
                if !seen.insert(c) {
                    return Err(bad(format!("column {c} repeated")));
                }
                if !v.is_finite() {
                    return Err(bad(format!("value {v} in column {c}")));
                }
            }
        }
        Ok(())
    }

    /// Row-major dense copy without the intercept column.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.observations
            .iter()
            .map(|o| {
                let mut row = vec![0.0; self.n_cols()];
                for &(c, v) in &o.columns {
                    row[c] = v;
                }
                row
            })
            .collect()
    }

    /// Copy with every weight multiplied by `c`.
    pub fn with_scaled_weights(&self, c: f64) -> DesignMatrix {
        let mut d = self.clone();
        for o in &mut d.observations {
            o.weight *= c;
        }
        d
    }

    /// Sparse triplet dump, one `row col value` line per nonzero.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (r, o) in self.observations.iter().enumerate() {
            for &(c, v) in &o.columns {
                writeln!(w, "{r} {c} {v}")?;
            }
        }
        Ok(())
    }

    /// Column map sidecar for [`DesignMatrix::write_triplets`].
    pub fn column_map_json(&self) -> String {
        serde_json::to_string_pretty(&self.column_map).expect("column map serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignOptions {
    /// Map ineligible players to replacement columns instead of dropping
    /// them.
    pub pool_replacements: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            pool_replacements: true,
        }
    }
}

/// Resolves on-ice players to columns for one design.
struct Columns<'a> {
    roster: &'a Roster,
    eligible: &'a BTreeSet<PlayerId>,
    map: ColumnMap,
    pool: bool,
}

impl Columns<'_> {
    fn group_of(&self, id: &PlayerId) -> Result<PositionGroup, DesignError> {
        self.roster
            .position(id)
            .map(|p| p.group())
            .ok_or_else(|| DesignError::UnknownPlayer(id.clone()))
    }

    /// Column for `id` in `role`, or its replacement pool. `None` when the
    /// player is ineligible and pooling is off.
    fn resolve(&self, id: &PlayerId, role: Role) -> Result<Option<usize>, DesignError> {
        if self.eligible.contains(id) {
            return Ok(self.map.player_column(id, role));
        }
        if !self.pool {
            return Ok(None);
        }
        let group = self.group_of(id)?;
        Ok(self.map.column(&ColumnKey::replacement(group, role)))
    }
}

/// Adds `value` to column `col` of a sparse row.
fn bump(row: &mut Vec<(usize, f64)>, col: usize, value: f64) {
    match row.iter_mut().find(|(c, _)| *c == col) {
        Some(e) => e.1 += value,
        None => row.push((col, value)),
    }
}

fn finish_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.retain(|&(_, v)| v != 0.0);
    row.sort_by_key(|&(c, _)| c);
    row
}

fn check_any_eligible(
    shift: &Shift,
    index: usize,
    eligible: &BTreeSet<PlayerId>,
    pool: bool,
) -> Result<(), DesignError> {
    if !pool && !shift.on_ice().any(|p| eligible.contains(p)) {
        return Err(DesignError::AllIneligible {
            index,
            game_id: shift.game_id.clone(),
        });
    }
    Ok(())
}

/// Pools needed for a design: (group, role) pairs with at least one
/// ineligible appearance.
fn needed_pools(
    shifts: &[Shift],
    roster: &Roster,
    eligible: &BTreeSet<PlayerId>,
    roles: impl Fn(PositionGroup) -> Vec<Role>,
) -> Result<BTreeSet<(Role, PositionGroup)>, DesignError> {
    let mut pools = BTreeSet::new();
    for s in shifts {
        for p in s.on_ice().filter(|p| !eligible.contains(*p)) {
            let g = roster
                .position(p)
                .ok_or_else(|| DesignError::UnknownPlayer(p.clone()))?
                .group();
            for r in roles(g) {
                pools.insert((r, g));
            }
        }
    }
    Ok(pools)
}

fn split_eligible(
    roster: &Roster,
    eligible: &BTreeSet<PlayerId>,
) -> Result<(Vec<PlayerId>, Vec<PlayerId>), DesignError> {
    if eligible.is_empty() {
        return Err(DesignError::NoEligiblePlayers);
    }
    let mut skaters = Vec::new();
    let mut goalies = Vec::new();
    for id in eligible {
        match roster.position(id) {
            Some(p) if p.is_goalie() => goalies.push(id.clone()),
            Some(_) => skaters.push(id.clone()),
            None => return Err(DesignError::UnknownPlayer(id.clone())),
        }
    }
    Ok((skaters, goalies))
}

type GroupSpec = (&'static str, Role, &'static [PositionGroup]);

const F: PositionGroup = PositionGroup::Forward;
const D: PositionGroup = PositionGroup::Defense;
const G: PositionGroup = PositionGroup::Goalie;

/// Nested per-position groups. Subgroups come before their union so that
/// the solver prefers the finer constraints when both are pinned.
const IB_GROUPS: [GroupSpec; 7] = [
    ("offense_forwards", Role::Offense, &[F]),
    ("offense_defense", Role::Offense, &[D]),
    ("offense", Role::Offense, &[F, D]),
    ("defense_forwards", Role::Defense, &[F]),
    ("defense_defense", Role::Defense, &[D]),
    ("skater_defense", Role::Defense, &[F, D]),
    ("goalies", Role::Defense, &[G]),
];

const SHARED_GROUPS: [GroupSpec; 4] = [
    ("forwards", Role::Shared, &[F]),
    ("defense", Role::Shared, &[D]),
    ("skaters", Role::Shared, &[F, D]),
    ("goalies", Role::Shared, &[G]),
];

fn column_map(keys: Vec<ColumnKey>, roster: &Roster, specs: &[GroupSpec]) -> ColumnMap {
    let group_of = |k: &ColumnKey| match &k.subject {
        ColumnSubject::Player(id) => roster.position(id).map(|p| p.group()),
        ColumnSubject::Replacement(g) => Some(*g),
    };
    let groups = specs
        .iter()
        .map(|(name, role, positions)| ColumnGroup {
            name: name.to_string(),
            columns: keys
                .iter()
                .enumerate()
                .filter(|(_, k)| k.role == *role && group_of(k).is_some_and(|g| positions.contains(&g)))
                .map(|(i, _)| i)
                .collect(),
        })
        .filter(|g| !g.columns.is_empty())
        .collect();
    ColumnMap::new(keys, groups)
}

fn offense_defense_columns(
    shifts: &[Shift],
    roster: &Roster,
    eligible: &BTreeSet<PlayerId>,
    pool: bool,
) -> Result<ColumnMap, DesignError> {
    let (skaters, goalies) = split_eligible(roster, eligible)?;
    let pools = if pool {
        needed_pools(shifts, roster, eligible, |g| match g {
            PositionGroup::Goalie => vec![Role::Defense],
            _ => vec![Role::Offense, Role::Defense],
        })?
    } else {
        BTreeSet::new()
    };
    let keys = skaters
        .iter()
        .map(|id| ColumnKey::player(id, Role::Offense))
        .chain(skaters.iter().map(|id| ColumnKey::player(id, Role::Defense)))
        .chain(goalies.iter().map(|id| ColumnKey::player(id, Role::Defense)))
        .chain(pools.iter().map(|&(role, g)| ColumnKey::replacement(g, role)))
        .collect();
    Ok(column_map(keys, roster, &IB_GROUPS))
}

fn shared_columns(
    shifts: &[Shift],
    roster: &Roster,
    eligible: &BTreeSet<PlayerId>,
    pool: bool,
) -> Result<ColumnMap, DesignError> {
    let (skaters, goalies) = split_eligible(roster, eligible)?;
    let pools = if pool {
        needed_pools(shifts, roster, eligible, |_| vec![Role::Shared])?
    } else {
        BTreeSet::new()
    };
    let keys = skaters
        .iter()
        .chain(&goalies)
        .map(|id| ColumnKey::player(id, Role::Shared))
        .chain(pools.iter().map(|&(_, g)| ColumnKey::replacement(g, Role::Shared)))
        .collect();
    Ok(column_map(keys, roster, &SHARED_GROUPS))
}

/// Offense/defense design: two rows per shift, home attack first.
pub fn build_ib_design(
    shifts: &[Shift],
    eligible: &BTreeSet<PlayerId>,
    roster: &Roster,
    options: DesignOptions,
) -> Result<DesignMatrix, DesignError> {
    let map = offense_defense_columns(shifts, roster, eligible, options.pool_replacements)?;
    let cols = Columns {
        roster,
        eligible,
        map,
        pool: options.pool_replacements,
    };
    let mut observations = Vec::with_capacity(2 * shifts.len());
    for (i, s) in shifts.iter().enumerate() {
        check_any_eligible(s, i, eligible, options.pool_replacements)?;
        for (attack, defend, goals) in [(&s.home, &s.away, s.home_goals), (&s.away, &s.home, s.away_goals)] {
            let mut row = Vec::with_capacity(11);
            for p in &attack.skaters {
                if let Some(c) = cols.resolve(p, Role::Offense)? {
                    bump(&mut row, c, 1.0);
                }
            }
            for p in defend.players() {
                if let Some(c) = cols.resolve(p, Role::Defense)? {
                    bump(&mut row, c, 1.0);
                }
            }
            observations.push(Observation {
                response: per60(f64::from(goals), s.duration_s),
                weight: s.duration_s,
                columns: finish_row(row),
            });
        }
    }
    Ok(DesignMatrix {
        kind: ModelKind::OffenseDefense,
        observations,
        column_map: cols.map,
    })
}

fn build_shared(
    shifts: &[Shift],
    eligible: &BTreeSet<PlayerId>,
    roster: &Roster,
    options: DesignOptions,
    kind: ModelKind,
) -> Result<DesignMatrix, DesignError> {
    let map = shared_columns(shifts, roster, eligible, options.pool_replacements)?;
    let cols = Columns {
        roster,
        eligible,
        map,
        pool: options.pool_replacements,
    };
    let away_sign = if kind == ModelKind::Net { -1.0 } else { 1.0 };
    let mut observations = Vec::with_capacity(shifts.len());
    for (i, s) in shifts.iter().enumerate() {
        check_any_eligible(s, i, eligible, options.pool_replacements)?;
        let mut row = Vec::with_capacity(12);
        for (side, sign) in [(&s.home, 1.0), (&s.away, away_sign)] {
            for p in side.players() {
                if let Some(c) = cols.resolve(p, Role::Shared)? {
                    bump(&mut row, c, sign);
                }
            }
        }
        let goals = if kind == ModelKind::Net {
            f64::from(s.home_goals) - f64::from(s.away_goals)
        } else {
            f64::from(s.home_goals) + f64::from(s.away_goals)
        };
        observations.push(Observation {
            response: per60(goals, s.duration_s),
            weight: s.duration_s,
            columns: finish_row(row),
        });
    }
    Ok(DesignMatrix {
        kind,
        observations,
        column_map: cols.map,
    })
}

/// Net-goals design: one row per shift, `+1` home, `-1` away.
pub fn build_r_net_design(
    shifts: &[Shift],
    eligible: &BTreeSet<PlayerId>,
    roster: &Roster,
    options: DesignOptions,
) -> Result<DesignMatrix, DesignError> {
    build_shared(shifts, eligible, roster, options, ModelKind::Net)
}

/// Total-goals design: one row per shift, `+1` for everyone on the ice.
pub fn build_r_total_design(
    shifts: &[Shift],
    eligible: &BTreeSet<PlayerId>,
    roster: &Roster,
    options: DesignOptions,
) -> Result<DesignMatrix, DesignError> {
    build_shared(shifts, eligible, roster, options, ModelKind::Total)
}
