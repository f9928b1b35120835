// Builds the offense/defense design for a simulated league, fits it and
// compares a few estimates with the truth.
//
// `cargo run --example fit_models`

use std::error::Error;

use hockey_apm::design::{build_ib_design, DesignOptions, Role};
use hockey_apm::ingest::eligible_players;
use hockey_apm::simulate::{generate, SimConfig};
use hockey_apm::wls::{fit, FitOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = SimConfig {
        n_teams: 4,
        games_per_season: 60,
        shifts_per_game: 60,
        seed: 5,
        ..SimConfig::default()
    };
    let sim = generate(&config)?;
    let eligible = eligible_players(&sim.shifts, 1);
    let design = build_ib_design(&sim.shifts, &eligible, &sim.roster, DesignOptions::default())?;
    println!("design: {} rows x {} columns", design.n_rows(), design.n_cols());

    let result = fit(&design, FitOptions::default())?;
    println!(
        "intercept {:.3} +/- {:.3} (true {})",
        result.intercept, result.intercept_se, config.league_base
    );
    println!(
        "constrained groups: {}",
        result.diagnostics.constrained_groups.join(", ")
    );
    for (id, effect) in sim.truth.effects.iter().take(5) {
        let Some(col) = design.column_map.player_column(id, Role::Offense) else {
            continue;
        };
        println!(
            "{id}: offense {:+.3} +/- {:.3}, true {:+.3}",
            result.coefficients[col],
            result.std_errors[col],
            effect.off.unwrap_or(0.0)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
