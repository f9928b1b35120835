//! Synthetic leagues with known player effects.
//!
//! Every shift is 5v5: three forwards, two defensemen and a goalie per side.
//! Each side's goals are Poisson with rate
//! `max(0.01, base + offense of attackers - defense of defenders)` goals per
//! 60 minutes. Forward lines and defense pairs rotate with some noise, the
//! starting goalie is drawn per game, and players are traded around a ring
//! of teams at every season's midpoint so that team membership does not
//! pin any rating. True effects are centered within each position group.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shift::{Lineup, Player, PlayerId, Position, PositionGroup, Roster, Season, Shift};

/// Floor on a side's scoring rate, goals per 60.
pub const MIN_RATE: f64 = 0.01;
pub const MIN_SHIFT_S: f64 = 10.0;
pub const MAX_SHIFT_S: f64 = 120.0;

const FORWARDS_ON_ICE: usize = 3;
const DEFENSE_ON_ICE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_teams: usize,
    pub skaters_per_team: usize,
    /// Defensemen among `skaters_per_team`; the rest are forwards.
    pub defense_per_team: usize,
    pub goalies_per_team: usize,
    pub n_seasons: usize,
    pub games_per_season: usize,
    pub shifts_per_game: usize,
    pub mean_shift_s: f64,
    /// League scoring rate per side, goals per 60.
    pub league_base: f64,
    /// Standard deviation of true effects, goals per 60.
    pub effect_spread: f64,
    /// Chance that a lineup slot goes to a random teammate instead of the
    /// line's regular.
    pub rotation_noise: f64,
    /// Trade rounds at each season's midpoint. A round moves one random
    /// forward, defenseman and goalie from every team to the next team.
    pub trade_rounds_per_season: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_teams: 8,
            skaters_per_team: 13,
            defense_per_team: 5,
            goalies_per_team: 2,
            n_seasons: 3,
            games_per_season: 504,
            shifts_per_game: 80,
            mean_shift_s: 45.0,
            league_base: 2.6,
            effect_spread: 0.5,
            rotation_noise: 0.25,
            trade_rounds_per_season: 1,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn forwards_per_team(&self) -> usize {
        self.skaters_per_team.saturating_sub(self.defense_per_team)
    }

    pub fn n_shifts(&self) -> usize {
        self.n_seasons * self.games_per_season * self.shifts_per_game
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_teams < 2 {
            return bad("need at least two teams");
        }
        if self.forwards_per_team() < FORWARDS_ON_ICE + 1 || self.defense_per_team < DEFENSE_ON_ICE + 1 {
            return bad("each team needs at least 4 forwards and 3 defensemen");
        }
        if self.goalies_per_team == 0 {
            return bad("each team needs a goalie");
        }
        if self.n_seasons == 0 || self.games_per_season == 0 || self.shifts_per_game == 0 {
            return bad("seasons, games and shifts must be positive");
        }
        if !(self.mean_shift_s > 0.0 && self.mean_shift_s.is_finite()) {
            return bad("mean_shift_s must be positive");
        }
        if !(self.league_base > 0.0 && self.league_base.is_finite()) {
            return bad("league_base must be positive");
        }
        if !(self.effect_spread >= 0.0 && self.effect_spread.is_finite()) {
            return bad("effect_spread must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.rotation_noise) {
            return bad("rotation_noise must lie in [0, 1]");
        }
        let skaters = self.n_teams * self.skaters_per_team;
        let goalies = self.n_teams * self.goalies_per_team;
        // the offense/defense design has the most columns
        let cols = 2 * skaters + goalies;
        let rows = self.n_shifts();
        if rows <= cols + 1 {
            return Err(SimError::TooSmall {
                shifts: rows,
                columns: cols,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("{shifts} shifts cannot identify {columns} rating columns; raise games_per_season or shifts_per_game so that shifts exceed {columns} + 1")]
    TooSmall { shifts: usize, columns: usize },
}

/// A player's true per-60 effects. Defense is prevention, so positive is
/// good; goalies have no offense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffect {
    pub off: Option<f64>,
    pub def: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub league_base: f64,
    pub effects: BTreeMap<PlayerId, TrueEffect>,
}

impl GroundTruth {
    /// Writes `player_id,true_off_per60,true_def_per60`; goalie offense is
    /// `NA`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["player_id", "true_off_per60", "true_def_per60"])?;
        for (id, e) in &self.effects {
            let off = e.off.map_or_else(|| "NA".to_string(), |v| v.to_string());
            out.write_record([id.as_str(), &off, &e.def.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Team {
    pub forwards: Vec<PlayerId>,
    pub defense: Vec<PlayerId>,
    pub goalies: Vec<PlayerId>,
}

/// Teams, players and true effects before any games are played.
#[derive(Debug, Clone, PartialEq)]
pub struct League {
    pub teams: Vec<Team>,
    pub roster: Roster,
    pub truth: GroundTruth,
}

fn centered_normals(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("finite spread");
    let mut v: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

impl League {
    /// Draws teams and effects from the config's seed.
    pub fn draw(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(League::draw_with(config, &mut rng))
    }

    fn draw_with(config: &SimConfig, rng: &mut ChaCha8Rng) -> Self {
        let nf = config.forwards_per_team();
        let mut teams = Vec::with_capacity(config.n_teams);
        let mut players = Vec::new();
        for t in 0..config.n_teams {
            let mut make = |kind: &str, k: usize, position: Position| {
                let id = PlayerId::new(format!("T{t:02}{kind}{k:02}"));
                players.push(Player {
                    id: id.clone(),
                    name: format!("Team {t} {} {k}", position.code()),
                    position,
                });
                id
            };
            let forwards = (0..nf)
                .map(|k| {
                    make(
                        "F",
                        k,
                        [Position::Center, Position::LeftWing, Position::RightWing][k % 3],
                    )
                })
                .collect();
            let defense = (0..config.defense_per_team)
                .map(|k| make("D", k, Position::Defense))
                .collect();
            let goalies = (0..config.goalies_per_team)
                .map(|k| make("G", k, Position::Goalie))
                .collect();
            teams.push(Team {
                forwards,
                defense,
                goalies,
            });
        }
        let mut effects = BTreeMap::new();
        for group in [PositionGroup::Forward, PositionGroup::Defense, PositionGroup::Goalie] {
            let ids: Vec<&PlayerId> = players
                .iter()
                .filter(|p| p.position.group() == group)
                .map(|p| &p.id)
                .collect();
            let off = centered_normals(rng, ids.len(), config.effect_spread);
            let def = centered_normals(rng, ids.len(), config.effect_spread);
            for (i, id) in ids.into_iter().enumerate() {
                let off = (group != PositionGroup::Goalie).then_some(off[i]);
                effects.insert(id.clone(), TrueEffect { off, def: def[i] });
            }
        }
        let roster = players.into_iter().collect();
        League {
            teams,
            roster,
            truth: GroundTruth {
                league_base: config.league_base,
                effects,
            },
        }
    }
}

/// A pair of forwards deployed together part of the time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    /// Chance that one twin's shift also includes the other.
    pub fraction: f64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig { fraction: 0.92 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub shifts: Vec<Shift>,
    pub roster: Roster,
    pub truth: GroundTruth,
    /// The paired forwards, in a twin scenario.
    pub twins: Option<(PlayerId, PlayerId)>,
}

/// Simulates a league drawn from `config`.
pub fn generate(config: &SimConfig) -> Result<Simulation, SimError> {
    let league = League::draw(config)?;
    Ok(play(config, league, None))
}

/// Like [`generate`], but forwards 0 and 3 of the first team (regulars on
/// different lines) are paired for `twin.fraction` of their shifts and,
/// when that fraction is positive, never traded. Pairing draws use their
/// own random stream, so a fraction of zero reproduces [`generate`]
/// exactly.
pub fn twin_scenario(config: &SimConfig, twin: &TwinConfig) -> Result<Simulation, SimError> {
    if !(0.0..=1.0).contains(&twin.fraction) {
        return Err(SimError::Config(format!(
            "twin fraction {} outside [0, 1]",
            twin.fraction
        )));
    }
    let league = League::draw(config)?;
    Ok(play(config, league, Some(twin.fraction)))
}

/// Plays every season of `league`. Effects may have been edited after
/// [`League::draw`]; the random stream continues from the seed as if they
/// had not.
pub fn simulate_league(config: &SimConfig, league: League) -> Result<Simulation, SimError> {
    config.validate()?;
    Ok(play(config, league, None))
}

struct Deployment {
    forward_line: usize,
    defense_pair: usize,
    goalie: usize,
}

/// Regular players of line `k`, wrapping around the depth chart.
fn line(members: &[PlayerId], size: usize, k: usize) -> Vec<usize> {
    (0..size).map(|j| (k * size + j) % members.len()).collect()
}

fn n_lines(members: usize, size: usize) -> usize {
    members.div_ceil(size)
}

/// Replaces each slot with a random unused teammate with probability
/// `noise`.
fn rotate(rng: &mut ChaCha8Rng, slots: &mut [usize], pool: usize, noise: f64) {
    for i in 0..slots.len() {
        if rng.random_bool(noise) {
            let free: Vec<usize> = (0..pool).filter(|k| !slots.contains(k)).collect();
            if let Some(&k) = free.choose(rng) {
                slots[i] = k;
            }
        }
    }
}

fn play(config: &SimConfig, league: League, twin_fraction: Option<f64>) -> Simulation {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // advance past the effect draws so the game stream does not depend on
    // whether the league was edited
    let _ = League::draw_with(config, &mut rng);
    let mut twin_rng = ChaCha8Rng::seed_from_u64(config.seed);
    twin_rng.set_stream(1);

    let League {
        mut teams,
        roster,
        truth,
    } = league;
    let twins = twin_fraction.map(|_| (0usize, 0usize, FORWARDS_ON_ICE));
    let twin_ids = twins.map(|(t, a, b)| (teams[t].forwards[a].clone(), teams[t].forwards[b].clone()));

    let effect = |id: &PlayerId| {
        truth.effects.get(id).copied().unwrap_or(TrueEffect {
            off: Some(0.0),
            def: 0.0,
        })
    };
    let duration = Exp::new(1.0 / config.mean_shift_s).expect("positive mean");
    let pairs: Vec<(usize, usize)> = (0..config.n_teams)
        .flat_map(|h| (0..config.n_teams).filter(move |&a| a != h).map(move |a| (h, a)))
        .collect();
    let nf = config.forwards_per_team();
    let nd = config.defense_per_team;
    let (f_lines, d_pairs) = (n_lines(nf, FORWARDS_ON_ICE), n_lines(nd, DEFENSE_ON_ICE));

    let mut shifts = Vec::with_capacity(config.n_shifts());
    for season in 0..config.n_seasons {
        let season_id = Season(format!("{}-{:02}", 2007 + season, (8 + season) % 100));
        for game in 0..config.games_per_season {
            if game == config.games_per_season / 2 {
                let frozen = twins.filter(|_| twin_fraction > Some(0.0)).map(|(t, x, y)| (t, [x, y]));
                for _ in 0..config.trade_rounds_per_season {
                    trade_round(&mut rng, &mut teams, frozen);
                }
            }
            let (h, a) = pairs[(season * config.games_per_season + game) % pairs.len()];
            let game_id = format!("S{}G{:04}", season + 1, game + 1);
            let mut deploy: Vec<Deployment> = [h, a]
                .iter()
                .map(|_| Deployment {
                    forward_line: rng.random_range(0..f_lines),
                    defense_pair: rng.random_range(0..d_pairs),
                    goalie: rng.random_range(0..config.goalies_per_team),
                })
                .collect();
            for _ in 0..config.shifts_per_game {
                let mut lineups = Vec::with_capacity(2);
                for (side, &t) in [h, a].iter().enumerate() {
                    let d = &mut deploy[side];
                    let team = &teams[t];
                    let mut fw = line(&team.forwards, FORWARDS_ON_ICE, d.forward_line);
                    rotate(&mut rng, &mut fw, nf, config.rotation_noise);
                    let mut df = line(&team.defense, DEFENSE_ON_ICE, d.defense_pair);
                    rotate(&mut rng, &mut df, nd, config.rotation_noise);
                    d.forward_line = (d.forward_line + 1) % f_lines;
                    d.defense_pair = (d.defense_pair + 1) % d_pairs;
                    if let (Some(f), Some((tt, x, y))) = (twin_fraction, twins) {
                        if tt == t {
                            pair_twins(&mut twin_rng, &mut fw, x, y, f);
                        }
                    }
                    let skaters = fw
                        .iter()
                        .map(|&k| team.forwards[k].clone())
                        .chain(df.iter().map(|&k| team.defense[k].clone()))
                        .collect();
                    lineups.push(Lineup {
                        skaters,
                        goalie: team.goalies[d.goalie].clone(),
                    });
                }
                let away = lineups.pop().expect("two sides");
                let home = lineups.pop().expect("two sides");
                let dur = duration.sample(&mut rng).clamp(MIN_SHIFT_S, MAX_SHIFT_S);
                let rate = |att: &Lineup, def: &Lineup| {
                    let off: f64 = att.skaters.iter().map(|p| effect(p).off.unwrap_or(0.0)).sum();
                    let dfn: f64 = def.players().map(|p| effect(p).def).sum();
                    (config.league_base + off - dfn).max(MIN_RATE) * dur / 3600.0
                };
                let mut goals = |lambda: f64| Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u32;
                let home_goals = goals(rate(&home, &away));
                let away_goals = goals(rate(&away, &home));
                shifts.push(Shift {
                    game_id: game_id.clone(),
                    season: season_id.clone(),
                    duration_s: dur,
                    home_goals,
                    away_goals,
                    home,
                    away,
                });
            }
        }
    }
    Simulation {
        shifts,
        roster,
        truth,
        twins: twin_ids,
    }
}

/// With probability `fraction`, brings the missing twin onto a line that
/// holds the other one, replacing a non-twin forward.
fn pair_twins(rng: &mut ChaCha8Rng, fw: &mut [usize], x: usize, y: usize, fraction: f64) {
    let (hx, hy) = (fw.contains(&x), fw.contains(&y));
    if hx == hy || !rng.random_bool(fraction) {
        return;
    }
    let missing = if hx { y } else { x };
    let slots: Vec<usize> = (0..fw.len()).filter(|&i| fw[i] != x && fw[i] != y).collect();
    let &slot = slots.choose(rng).expect("three forwards on ice");
    fw[slot] = missing;
}

/// Moves one random player of each position group from every team to the
/// next team around the ring. `frozen` forwards of one team never move.
fn trade_round(rng: &mut ChaCha8Rng, teams: &mut [Team], frozen: Option<(usize, [usize; 2])>) {
    let picks: [fn(&mut Team) -> &mut Vec<PlayerId>; 3] = [|t| &mut t.forwards, |t| &mut t.defense, |t| &mut t.goalies];
    for (kind, pick) in picks.iter().enumerate() {
        let slots: Vec<usize> = (0..teams.len())
            .map(|t| {
                let n = pick(&mut teams[t]).len();
                let movable: Vec<usize> = (0..n)
                    .filter(|&k| !(kind == 0 && frozen.is_some_and(|(ft, ks)| ft == t && ks.contains(&k))))
                    .collect();
                *movable.choose(rng).expect("a movable player")
            })
            .collect();
        let leaving: Vec<PlayerId> = (0..teams.len())
            .map(|t| pick(&mut teams[t])[slots[t]].clone())
            .collect();
        for (t, player) in leaving.into_iter().enumerate() {
            let to = (t + 1) % teams.len();
            pick(&mut teams[to])[slots[to]] = player;
        }
    }
}
