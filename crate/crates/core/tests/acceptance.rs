//! Acceptance criteria, one pass/fail line each. Runs without the libtest
//! harness so the lines are always printed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use hockey_apm::design::{build_ib_design, ColumnMap, DesignMatrix, DesignOptions, Observation};
use hockey_apm::ingest::{eligible_players, filter_shifts, parse_shift_reader, FilterReport};
use hockey_apm::metrics::{to_counting, ModelRating, PlayerRating};
use hockey_apm::pipeline::{run, ModelSelection, PipelineError, PipelineOptions, PipelineOutput};
use hockey_apm::report::{kde, metric_values, Metric};
use hockey_apm::shift::{Player, PlayerId, PlayerSeasonStats, Position, PositionGroup, Roster};
use hockey_apm::simulate::{generate, twin_scenario, SimConfig, Simulation, TwinConfig};
use hockey_apm::wls::{fit, CollinearityPolicy, FitError, FitOptions, FitResult};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_budget(o: Outcome, elapsed: Duration, budget: Duration) -> Outcome {
    let ok = elapsed <= budget;
    let mut detail = format!(
        "{}; {:.2}s (budget {}s)",
        o.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    if !ok {
        detail.push_str(" OVER BUDGET");
    }
    outcome(o.pass && ok, detail)
}

// 1. Published table rows -------------------------------------------------

/// One transcribed table row. Per-60 figures carry three decimals,
/// per-season figures one, goal counts none.
struct TableRow {
    table: &'static str,
    name: &'static str,
    pos: Position,
    mins: f64,
    opm60: Option<f64>,
    dpm60: Option<f64>,
    apm60: Option<f64>,
    opm: Option<f64>,
    dpm: Option<f64>,
    apm: Option<f64>,
    /// (per 60, per season) raw goals: GF, GA or NG as printed.
    goals: (f64, f64),
}

#[allow(clippy::too_many_arguments)]
const ROWS: [TableRow; 12] = {
    use Position::*;
    const fn row(table: &'static str, name: &'static str, pos: Position, mins: f64) -> TableRow {
        TableRow {
            table,
            name,
            pos,
            mins,
            opm60: None,
            dpm60: None,
            apm60: None,
            opm: None,
            dpm: None,
            apm: None,
            goals: (0.0, 0.0),
        }
    }
    const fn top_opm(
        name: &'static str,
        pos: Position,
        o: f64,
        d: f64,
        a: f64,
        mins: f64,
        gf60: f64,
        o60: f64,
        gf: f64,
    ) -> TableRow {
        TableRow {
            opm60: Some(o60),
            opm: Some(o),
            dpm: Some(d),
            apm: Some(a),
            goals: (gf60, gf),
            ..row("top OPM", name, pos, mins)
        }
    }
    const fn top_dpm60(
        table: &'static str,
        name: &'static str,
        pos: Position,
        o60: Option<f64>,
        d60: f64,
        a60: f64,
        mins: f64,
        ga60: f64,
        d: f64,
        ga: f64,
    ) -> TableRow {
        TableRow {
            opm60: o60,
            dpm60: Some(d60),
            apm60: Some(a60),
            dpm: Some(d),
            goals: (ga60, ga),
            ..row(table, name, pos, mins)
        }
    }
    const fn top_apm60(
        name: &'static str,
        pos: Position,
        o60: f64,
        d60: f64,
        a60: f64,
        mins: f64,
        ng60: f64,
        a: f64,
        ng: f64,
    ) -> TableRow {
        TableRow {
            opm60: Some(o60),
            dpm60: Some(d60),
            apm60: Some(a60),
            apm: Some(a),
            goals: (ng60, ng),
            ..row("top APM/60", name, pos, mins)
        }
    }
    [
        top_opm("Pavel Datsyuk", Center, 15.4, 6.2, 21.6, 1186.0, 3.39, 0.777, 67.0),
        top_opm("Alex Ovechkin", LeftWing, 15.2, 0.2, 15.4, 1262.0, 3.69, 0.723, 78.0),
        top_opm("Sidney Crosby", Center, 14.4, -0.9, 13.5, 1059.0, 3.59, 0.818, 63.0),
        top_opm("Henrik Sedin", Center, 14.0, -5.7, 8.3, 1169.0, 3.35, 0.718, 65.0),
        top_opm("Evgeni Malkin", Center, 13.2, -3.0, 10.2, 1164.0, 3.37, 0.681, 65.0),
        top_opm("Marian Gaborik", RightWing, 10.2, 4.3, 14.5, 853.0, 3.28, 0.715, 47.0),
        top_dpm60(
            "top DPM/60",
            "Pekka Rinne",
            Goalie,
            None,
            0.845,
            0.845,
            1680.0,
            2.12,
            23.7,
            59.0,
        ),
        top_dpm60(
            "top DPM/60",
            "Dan Ellis",
            Goalie,
            None,
            0.757,
            0.757,
            1509.0,
            2.32,
            19.0,
            58.0,
        ),
        top_dpm60(
            "top skaters DPM/60",
            "Paul Martin",
            Defense,
            Some(-0.026),
            0.526,
            0.500,
            916.0,
            1.55,
            8.0,
            24.0,
        ),
        top_dpm60(
            "top skaters DPM/60",
            "Willie Mitchell",
            Defense,
            Some(-0.122),
            0.404,
            0.281,
            1178.0,
            1.90,
            7.9,
            37.0,
        ),
        top_apm60("Mikko Koivu", Center, 0.383, 0.469, 0.852, 1032.0, 0.52, 14.7, 9.0),
        top_apm60("Tim Connolly", Center, 0.501, 0.244, 0.745, 710.0, 0.90, 8.8, 11.0),
    ]
};

/// Goalie errors as printed: DErr60 in one table, Err60 in another.
const GOALIE_ERRS: [(&str, f64, f64); 2] = [("Pekka Rinne", 0.232, 0.232), ("Dan Ellis", 0.218, 0.218)];

fn row_stats(id: &PlayerId, mins: f64) -> PlayerSeasonStats {
    PlayerSeasonStats {
        player: id.clone(),
        seconds: mins * 60.0,
        mins_total: mins,
        mins_per_season: mins,
        shifts: 0,
        gf: 0.0,
        ga: 0.0,
        ng: 0.0,
        gf60: 0.0,
        ga60: 0.0,
        ng60: 0.0,
    }
}

fn fixture_rating(name: &str, pos: Position, mins: f64, rates: ModelRating) -> PlayerRating {
    let id = PlayerId::new(name);
    let roster: Roster = [Player {
        id: id.clone(),
        name: name.to_string(),
        position: pos,
    }]
    .into_iter()
    .collect();
    PlayerRating::from_rates(&id, &roster, rates, &row_stats(&id, mins)).expect("single-player roster")
}

fn criterion_table_rows() -> Outcome {
    const SEASON_TOL: f64 = 0.06;
    const GOAL_TOL: f64 = 0.6;
    let mut failures = Vec::new();
    let mut checks = 0;
    let mut check = |ok: bool, what: String| {
        checks += 1;
        if !ok {
            failures.push(what);
        }
    };
    for r in &ROWS {
        let tag = format!("{}: {}", r.table, r.name);
        for (rate, season, label) in [
            (r.opm60, r.opm, "opm"),
            (r.dpm60, r.dpm, "dpm"),
            (r.apm60, r.apm, "apm"),
        ] {
            if let (Some(rate), Some(season)) = (rate, season) {
                let got = to_counting(rate, r.mins);
                check(
                    (got - season).abs() <= SEASON_TOL,
                    format!("{tag}: {label} {got:.3} vs {season}"),
                );
            }
        }
        let got = to_counting(r.goals.0, r.mins);
        check(
            (got - r.goals.1).abs() <= GOAL_TOL,
            format!("{tag}: goals {got:.2} vs {}", r.goals.1),
        );
        if let (Some(o), Some(d), Some(a)) = (r.opm, r.dpm, r.apm) {
            check((o + d - a).abs() <= 0.1 + 1e-9, format!("{tag}: {o} + {d} vs {a}"));
        }
        if let (Some(d), Some(a)) = (r.dpm60, r.apm60) {
            let o = r.opm60.unwrap_or(0.0);
            check((o + d - a).abs() <= 0.0015, format!("{tag}: {o} + {d} vs {a}"));
        }
        // goalies carry no offense through the rating code
        if r.pos == Position::Goalie {
            let rating = fixture_rating(
                r.name,
                r.pos,
                r.mins,
                ModelRating {
                    opm60: Some(0.5),
                    dpm60: r.dpm60.unwrap(),
                    oerr60: Some(0.1),
                    derr60: 0.2,
                },
            );
            check(
                rating.opm.is_none() && rating.apm60 == rating.dpm60,
                format!("{tag}: goalie offense"),
            );
        }
    }
    // Datsyuk: OErr 3.4, DErr 3.5 per season, Err printed as 4.9.
    let mins = 1186.0;
    let datsyuk = fixture_rating(
        "Pavel Datsyuk",
        Position::Center,
        mins,
        ModelRating {
            opm60: Some(0.777),
            dpm60: 0.314,
            oerr60: Some(3.4 * 60.0 / mins),
            derr60: 3.5 * 60.0 / mins,
        },
    );
    check(
        (datsyuk.err - 4.9).abs() <= SEASON_TOL,
        format!("Datsyuk err {:.3} vs 4.9", datsyuk.err),
    );
    check((datsyuk.opm.unwrap() - 15.4).abs() <= SEASON_TOL, "Datsyuk opm".into());
    for (name, derr60, err60) in GOALIE_ERRS {
        let g = fixture_rating(
            name,
            Position::Goalie,
            1500.0,
            ModelRating {
                opm60: None,
                dpm60: 0.5,
                oerr60: None,
                derr60,
            },
        );
        check(
            (g.err60 - err60).abs() <= 0.0005,
            format!("{name}: err60 {} vs {err60}", g.err60),
        );
    }
    let n = checks;
    if failures.is_empty() {
        outcome(true, format!("{n} checks over {} rows", ROWS.len()))
    } else {
        outcome(
            false,
            format!("{} of {n} checks failed: {}", failures.len(), failures.join("; ")),
        )
    }
}

// 2 and 5. Synthetic recovery and structural identities -------------------

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

struct Coverage {
    inside: usize,
    total: usize,
}

impl Coverage {
    fn add(&mut self, est: f64, se: f64, truth: f64) {
        self.total += 1;
        if (est - truth).abs() <= 2.0 * se {
            self.inside += 1;
        }
    }

    fn rate(&self) -> f64 {
        self.inside as f64 / self.total as f64
    }
}

fn intercept_z(fit: &FitResult, truth: f64) -> f64 {
    (fit.intercept - truth).abs() / fit.intercept_se
}

fn criterion_recovery(sim: &Simulation, out: &PipelineOutput) -> Outcome {
    let truth = &sim.truth.effects;
    let (mut est_o, mut true_o, mut est_d, mut true_d) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut cov = [
        Coverage { inside: 0, total: 0 },
        Coverage { inside: 0, total: 0 },
        Coverage { inside: 0, total: 0 },
    ];
    for r in &out.ratings.players {
        let t = truth[&r.player];
        if let (Some(o), Some(to)) = (r.opm60, t.off) {
            est_o.push(o);
            true_o.push(to);
            est_d.push(r.dpm60);
            true_d.push(t.def);
        }
        let [ib, rr] = r.components.expect("both models were fitted");
        for (c, m) in cov.iter_mut().zip([
            ib,
            rr,
            ModelRating {
                opm60: r.opm60,
                dpm60: r.dpm60,
                oerr60: r.oerr60,
                derr60: r.derr60,
            },
        ]) {
            if let (Some(o), Some(se), Some(to)) = (m.opm60, m.oerr60, t.off) {
                c.add(o, se, to);
            }
            c.add(m.dpm60, m.derr60, t.def);
        }
    }
    let corr_o = pearson(&est_o, &true_o);
    let corr_d = pearson(&est_d, &true_d);
    let base = sim.truth.league_base;
    let z_ib = intercept_z(out.fits.ib.as_ref().unwrap(), base);
    let z_total = intercept_z(out.fits.total.as_ref().unwrap(), 2.0 * base);
    let pass = corr_o >= 0.85
        && corr_d >= 0.75
        && cov[0].rate() >= 0.90
        && cov[1].rate() >= 0.90
        && z_ib <= 3.0
        && z_total <= 3.0;
    outcome(
        pass,
        format!(
            "{} shifts, {} skaters; corr opm60 {corr_o:.3} (>= 0.85), dpm60 {corr_d:.3} (>= 0.75); \
             2-SE coverage ib {:.3}, r {:.3} (>= 0.90), averaged {:.3} (reported); \
             intercept z ib {z_ib:.2}, r-total {z_total:.2} (<= 3)",
            sim.shifts.len(),
            est_o.len(),
            cov[0].rate(),
            cov[1].rate(),
            cov[2].rate()
        ),
    )
}

fn identities(out: &PipelineOutput) -> Result<usize, String> {
    let mut n = 0;
    for r in &out.ratings.players {
        n += 1;
        if r.apm != r.opm.unwrap_or(0.0) + r.dpm {
            return Err(format!("{}: apm {} != opm + dpm", r.player, r.apm));
        }
        if r.apm60 != r.opm60.unwrap_or(0.0) + r.dpm60 {
            return Err(format!("{}: apm60 != opm60 + dpm60", r.player));
        }
        let s = &r.stats;
        if (s.ng60 - (s.gf60 - s.ga60)).abs() > 1e-9 {
            return Err(format!("{}: ng60 {} vs gf60 - ga60", r.player, s.ng60));
        }
        if let Some([a, b]) = r.components {
            if !(r.derr60 < a.derr60 && r.derr60 < b.derr60) {
                return Err(format!(
                    "{}: averaged derr60 {} not below {} and {}",
                    r.player, r.derr60, a.derr60, b.derr60
                ));
            }
            if let (Some(e), Some(x), Some(y)) = (r.oerr60, a.oerr60, b.oerr60) {
                if !(e < x && e < y) {
                    return Err(format!("{}: averaged oerr60 {e} not below {x} and {y}", r.player));
                }
            }
        }
    }
    if let Some(sep) = &out.ratings.r_separation {
        for (p, s) in sep {
            n += 1;
            if s.opm60 + s.dpm60 != s.eta {
                return Err(format!("{p}: model-r opm60 + dpm60 != eta"));
            }
        }
    }
    Ok(n)
}

fn criterion_identities(runs: &[(&str, &PipelineOutput)]) -> Outcome {
    let mut checked = Vec::new();
    for (name, out) in runs {
        match identities(out) {
            Ok(n) => checked.push(format!("{name}: {n} rows")),
            Err(e) => return outcome(false, format!("{name}: {e}")),
        }
    }
    outcome(true, checked.join(", "))
}

// 3 and 4. Solver --------------------------------------------------------

fn dense_system(rng: &mut ChaCha8Rng) -> DesignMatrix {
    let n = rng.random_range(40..=200);
    let k = rng.random_range(3..=12);
    let rows = (0..n)
        .map(|_| Observation {
            response: rng.random_range(-5.0..5.0),
            weight: rng.random_range(0.1..10.0),
            columns: (0..k).map(|c| (c, rng.random_range(-2.0..2.0))).collect(),
        })
        .collect();
    DesignMatrix::from_observations(rows, ColumnMap::anonymous(k)).expect("valid rows")
}

/// Coefficients and standard errors, intercept first, from the dense
/// normal equations.
fn oracle(d: &DesignMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = d.n_rows();
    let p = d.n_cols() + 1;
    let mut x = DMatrix::zeros(n, p);
    let mut w = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    for (r, o) in d.observations.iter().enumerate() {
        x[(r, 0)] = 1.0;
        for &(c, v) in &o.columns {
            x[(r, c + 1)] = v;
        }
        w[r] = o.weight;
        y[r] = o.response;
    }
    let xtw = x.transpose() * DMatrix::from_diagonal(&w);
    let inv = (&xtw * &x).try_inverse().expect("full rank");
    let beta = &inv * (&xtw * &y);
    let resid = &y - &x * &beta;
    let rss: f64 = (0..n).map(|r| w[r] * resid[r] * resid[r]).sum();
    let sigma2 = rss / (n - p) as f64;
    (
        beta.iter().copied().collect(),
        (0..p).map(|i| (sigma2 * inv[(i, i)]).sqrt()).collect(),
    )
}

fn with_intercept(f: &FitResult) -> (Vec<f64>, Vec<f64>) {
    let mut b = vec![f.intercept];
    b.extend(&f.coefficients);
    let mut s = vec![f.intercept_se];
    s.extend(&f.std_errors);
    (b, s)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn criterion_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2010);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let d = dense_system(&mut rng);
        let f = match fit(&d, FitOptions::default()) {
            Ok(f) => f,
            Err(e) => return outcome(false, format!("fit failed: {e}")),
        };
        let (b, s) = with_intercept(&f);
        let (ob, os) = oracle(&d);
        worst = worst.max(max_rel(&b, &ob)).max(max_rel(&s, &os));
    }
    outcome(
        worst <= 1e-8,
        format!("25 systems, worst relative deviation {worst:.2e} (<= 1e-8)"),
    )
}

fn criterion_weight_scale(sim_design: &DesignMatrix) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3600);
    let mut designs: Vec<DesignMatrix> = (0..5).map(|_| dense_system(&mut rng)).collect();
    designs.push(sim_design.clone());
    let mut worst: f64 = 0.0;
    for d in &designs {
        let (b0, s0) = with_intercept(&fit(d, FitOptions::default()).expect("base fit"));
        for c in [0.5, 2.0, 3600.0] {
            let (b, s) = with_intercept(&fit(&d.with_scaled_weights(c), FitOptions::default()).expect("scaled fit"));
            worst = worst.max(max_rel(&b, &b0)).max(max_rel(&s, &s0));
        }
    }
    outcome(
        worst <= 1e-10,
        format!(
            "{} designs incl. a {}x{} simulated one, c in {{0.5, 2, 3600}}, worst relative change {worst:.2e} (<= 1e-10)",
            designs.len(),
            sim_design.n_rows(),
            sim_design.n_cols()
        ),
    )
}

// 6. Collinearity -----------------------------------------------------------

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_twins(config: &SimConfig) -> Outcome {
    let all = PipelineOptions {
        min_shifts: 1,
        ..PipelineOptions::default()
    };
    let sim = twin_scenario(config, &TwinConfig { fraction: 0.92 }).expect("valid config");
    let (a, b) = sim.twins.clone().expect("twins");
    let out = match run(&sim.shifts, &sim.roster, &all) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("fraction 0.92 fit failed: {e}")),
    };
    let skaters: Vec<&PlayerRating> = out.ratings.players.iter().filter(|r| r.opm60.is_some()).collect();
    let med = median(skaters.iter().map(|r| r.err60).collect());
    let ratio = |id: &PlayerId| {
        skaters
            .iter()
            .find(|r| &r.player == id)
            .map(|r| r.err60 / med)
            .unwrap_or(0.0)
    };
    let (ra, rb) = (ratio(&a), ratio(&b));

    let always = twin_scenario(config, &TwinConfig { fraction: 1.0 }).expect("valid config");
    let ib_only = PipelineOptions {
        model: ModelSelection::Ib,
        ..all
    };
    let refused = match run(&always.shifts, &always.roster, &ib_only) {
        Err(PipelineError::Fit {
            source: FitError::Collinear { first, second, .. },
            ..
        }) => {
            let named = [first.as_str(), second.as_str()];
            named.contains(&format!("off:{a}").as_str()) && named.contains(&format!("off:{b}").as_str())
                || named.contains(&format!("def:{a}").as_str()) && named.contains(&format!("def:{b}").as_str())
        }
        _ => false,
    };
    let ridge = PipelineOptions {
        fit: FitOptions {
            collinearity: CollinearityPolicy::Ridge,
        },
        ..ib_only
    };
    let lambda = run(&always.shifts, &always.roster, &ridge)
        .ok()
        .and_then(|o| o.fits.ib.and_then(|f| f.diagnostics.ridge_lambda));
    outcome(
        ra >= 1.5 && rb >= 1.5 && refused && lambda.is_some(),
        format!(
            "fraction 0.92: err60 {ra:.2}x and {rb:.2}x the median skater (>= 1.5); \
             fraction 1.0: error policy names the pair {refused}, ridge flagged {lambda:?}"
        ),
    )
}

// 7. Filter accounting ------------------------------------------------------

#[derive(Clone, Copy)]
enum Expect {
    Keep,
    Malformed,
    RosterSize,
    EmptyNet,
    SpecialTeams,
}

/// (duration, home goalie, away goalie, home skaters, away skaters,
/// expected class). Rows breaking several rules expect the first one in
/// the order malformed, roster size, empty net, special teams.
const TEMPLATES: [(&str, &str, &str, &str, &str, Expect); 16] = [
    ("40", "hg", "ag", "h1|h2|h3|h4|h5", "a1|a2|a3|a4|a5", Expect::Keep),
    ("35.5", "hg", "ag", "h1|h2|h3|h4", "a1|a2|a3|a4", Expect::Keep),
    ("12", "hg", "ag", "h1|h2|h3", "a1|a2|a3", Expect::Keep),
    ("0", "hg", "ag", "h1|h2|h3|h4|h5", "a1|a2|a3|a4|a5", Expect::Malformed),
    ("-4", "hg", "ag", "h1|h2|h3|h4|h5", "a1|a2|a3|a4|a5", Expect::Malformed),
    ("NaN", "hg", "ag", "h1|h2|h3|h4|h5", "a1|a2|a3|a4|a5", Expect::Malformed),
    ("40", "hg", "ag", "h1|h2|h3|h4|h5", "h1|a2|a3|a4|a5", Expect::Malformed),
    ("40", "hg", "ag", "h1||h3|h4|h5", "a1|a2|a3|a4|a5", Expect::Malformed),
    ("0", "", "ag", "h1|h2|h3|h4|h5|h6|h7", "a1|a2|a3|a4", Expect::Malformed),
    (
        "40",
        "hg",
        "ag",
        "h1|h2|h3|h4|h5|h6",
        "a1|a2|a3|a4|a5",
        Expect::RosterSize,
    ),
    ("40", "hg", "ag", "h1|h2", "a1|a2|a3|a4|a5", Expect::RosterSize),
    (
        "40",
        "",
        "ag",
        "h1|h2|h3|h4|h5|h6|h7",
        "a1|a2|a3|a4|a5",
        Expect::RosterSize,
    ),
    ("40", "", "ag", "h1|h2|h3|h4|h5|h6", "a1|a2|a3|a4|a5", Expect::EmptyNet),
    ("40", "", "", "h1|h2|h3|h4|h5", "a1|a2|a3|a4|a5", Expect::EmptyNet),
    ("40", "hg", "ag", "h1|h2|h3|h4|h5", "a1|a2|a3|a4", Expect::SpecialTeams),
    ("40", "hg", "ag", "h1|h2|h3", "a1|a2|a3|a4|a5", Expect::SpecialTeams),
];

fn criterion_filter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut rows: Vec<usize> = (0..1000).map(|i| i % TEMPLATES.len()).collect();
    rows.shuffle(&mut rng);
    let mut expected = FilterReport::default();
    let mut csv = String::from(
        "game_id,season,duration_s,home_goals,away_goals,home_goalie,away_goalie,home_skaters,away_skaters\n",
    );
    for (i, &t) in rows.iter().enumerate() {
        let (dur, hg, ag, hs, aws, class) = TEMPLATES[t];
        let goals = rng.random_range(0..2);
        csv.push_str(&format!("g{},2009-10,{dur},{goals},0,{hg},{ag},{hs},{aws}\n", i / 50));
        expected.total_read += 1;
        match class {
            Expect::Keep => expected.retained += 1,
            Expect::Malformed => expected.removed_malformed += 1,
            Expect::RosterSize => expected.removed_roster_size += 1,
            Expect::EmptyNet => expected.removed_empty_net += 1,
            Expect::SpecialTeams => expected.removed_special_teams += 1,
        }
    }
    let records = match parse_shift_reader(csv.as_bytes()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("fixture did not parse: {e}")),
    };
    let (shifts, report) = filter_shifts(&records);
    let pass = report == expected
        && report.retained + report.removed() == report.total_read
        && shifts.len() as u64 == report.retained;
    outcome(
        pass,
        format!(
            "read {}, malformed {}, roster size {}, empty net {}, special teams {}, retained {} (expected {:?})",
            report.total_read,
            report.removed_malformed,
            report.removed_roster_size,
            report.removed_empty_net,
            report.removed_special_teams,
            report.retained,
            (
                expected.removed_malformed,
                expected.removed_roster_size,
                expected.removed_empty_net,
                expected.removed_special_teams,
                expected.retained
            )
        ),
    )
}

// 8. Densities --------------------------------------------------------------

fn criterion_kde(out: &PipelineOutput) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let normal = kde(&xs, None, None).expect("normal sample");
    let peak = normal.density.iter().copied().fold(0.0, f64::max);
    let mut integrals = vec![normal.integral()];
    let players = &out.ratings.players;
    for metric in [
        Metric::Opm60,
        Metric::Dpm60,
        Metric::Apm60,
        Metric::Opm,
        Metric::Dpm,
        Metric::Apm,
    ] {
        for group in [PositionGroup::Forward, PositionGroup::Defense, PositionGroup::Goalie] {
            let values = metric_values(players, metric, group);
            if values.len() < 2 {
                continue;
            }
            let weights: Vec<f64> = players
                .iter()
                .filter(|r| r.position.group() == group && metric.value(r).is_some())
                .map(|r| r.mins)
                .collect();
            for w in [None, Some(weights.as_slice())] {
                match kde(&values, w, None) {
                    Ok(c) => integrals.push(c.integral()),
                    Err(e) => return outcome(false, format!("{metric} {group}: {e}")),
                }
            }
        }
    }
    let lo = integrals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = integrals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        (0.99..=1.01).contains(&lo) && (0.99..=1.01).contains(&hi) && (peak - 0.399).abs() <= 0.02,
        format!(
            "{} curves, integrals in [{lo:.5}, {hi:.5}]; N(0,1) peak {peak:.4} (0.399 +/- 0.02)",
            integrals.len()
        ),
    )
}

// 9. Determinism --------------------------------------------------------------

fn apm(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_apm"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "apm {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn end_to_end(dir: &Path, threads: Option<&str>) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let mut t: Vec<&str> = Vec::new();
    if let Some(n) = threads {
        t.extend(["--threads", n]);
    }
    let run = |args: &[&str]| {
        let mut all: Vec<&str> = t.clone();
        all.extend(args);
        apm(&all)
    };
    run(&["simulate", "--seed", "7", "--games", "200", "--out", &p("sim")])?;
    run(&["ingest", "--input", &p("sim/shifts.csv"), "--out", &p("ingest")])?;
    run(&[
        "fit",
        "--input",
        &p("ingest/shifts.validated.csv"),
        "--roster",
        &p("sim/roster.csv"),
        "--out",
        &p("fit"),
        "--min-shifts",
        "1",
    ])?;
    run(&[
        "report",
        "--input",
        &p("fit/ratings.json"),
        "--metric",
        "apm",
        "--format",
        "csv",
        "--out",
        &p("top.csv"),
    ])?;
    run(&[
        "kde",
        "--input",
        &p("fit/ratings.json"),
        "--metric",
        "opm60",
        "--pos",
        "F,D",
        "--out",
        &p("kde.csv"),
    ])?;
    let mut files = BTreeMap::new();
    for sub in ["sim", "ingest", "fit", "."] {
        for entry in fs::read_dir(dir.join(sub)).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                let key = path.strip_prefix(dir).unwrap().display().to_string();
                files.insert(key, fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn criterion_determinism() -> Outcome {
    let root = tempfile::tempdir().expect("temp dir");
    let variants = [
        ("default", None),
        ("again", None),
        ("threads1", Some("1")),
        ("threads4", Some("4")),
    ];
    let mut runs = Vec::new();
    for (name, threads) in variants {
        let dir = root.path().join(name);
        fs::create_dir_all(&dir).unwrap();
        match end_to_end(&dir, threads) {
            Ok(files) => runs.push((name, files)),
            Err(e) => return outcome(false, e),
        }
    }
    let (_, reference) = &runs[0];
    for (name, files) in &runs[1..] {
        if files.keys().ne(reference.keys()) {
            return outcome(false, format!("{name}: different file set"));
        }
        for (k, v) in files {
            if v != &reference[k] {
                return outcome(false, format!("{name}: {k} differs"));
            }
        }
    }
    outcome(
        true,
        format!(
            "{} CSVs byte-identical across 2 default runs and --threads 1, 4",
            reference.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut timed = |id: u8, name: &'static str, budget: u64, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let o = within_budget(o, start.elapsed(), Duration::from_secs(budget));
        println!(
            "criterion {id} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };

    timed(1, "published table arithmetic", 1, &mut criterion_table_rows);

    let config = SimConfig::default();
    let mut recovery: Option<(Simulation, PipelineOutput)> = None;
    timed(2, "synthetic recovery", 120, &mut || {
        let sim = generate(&config).expect("default config is valid");
        let options = PipelineOptions {
            min_shifts: 1,
            ..PipelineOptions::default()
        };
        match run(&sim.shifts, &sim.roster, &options) {
            Ok(out) => {
                let o = criterion_recovery(&sim, &out);
                recovery = Some((sim, out));
                o
            }
            Err(e) => outcome(false, format!("pipeline failed: {e}")),
        }
    });

    timed(3, "solver oracle equivalence", 5, &mut criterion_oracle);

    let small = SimConfig {
        n_teams: 4,
        games_per_season: 60,
        shifts_per_game: 60,
        seed: 4,
        ..SimConfig::default()
    };
    let small_sim = generate(&small).expect("small config is valid");
    timed(4, "weight-scale invariance", 60, &mut || {
        let eligible = eligible_players(&small_sim.shifts, 1);
        let design = build_ib_design(
            &small_sim.shifts,
            &eligible,
            &small_sim.roster,
            DesignOptions::default(),
        )
        .expect("simulated design");
        criterion_weight_scale(&design)
    });

    timed(5, "structural identities", 60, &mut || {
        let Some((_, big)) = &recovery else {
            return outcome(false, "recovery run unavailable");
        };
        let pooled = PipelineOptions {
            min_shifts: 2000,
            ..PipelineOptions::default()
        };
        match run(&small_sim.shifts, &small_sim.roster, &pooled) {
            Ok(out) => criterion_identities(&[("recovery run", big), ("pooled small run", &out)]),
            Err(e) => outcome(false, format!("pooled run failed: {e}")),
        }
    });

    timed(6, "collinearity reproduction", 300, &mut || criterion_twins(&config));
    timed(7, "filter accounting", 5, &mut criterion_filter);
    timed(8, "kernel density checks", 30, &mut || match &recovery {
        Some((_, out)) => criterion_kde(out),
        None => outcome(false, "recovery run unavailable"),
    });
    timed(9, "determinism", 600, &mut criterion_determinism);

    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
