// Top-N tables with position and ice-time filters.
//
// `cargo run --example top_tables`

use std::error::Error;

use hockey_apm::pipeline::{run, PipelineOptions};
use hockey_apm::report::{render_top_table, top_n, Metric, Precision, TopFilter};
use hockey_apm::shift::PositionGroup;
use hockey_apm::simulate::{generate, SimConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = SimConfig {
        n_teams: 4,
        games_per_season: 60,
        shifts_per_game: 60,
        seed: 9,
        ..SimConfig::default()
    };
    let sim = generate(&config)?;
    let options = PipelineOptions {
        min_shifts: 1,
        ..PipelineOptions::default()
    };
    let ratings = run(&sim.shifts, &sim.roster, &options)?.ratings.players;

    let everyone = TopFilter::default();
    println!("Top 5 in OPM");
    print!(
        "{}",
        render_top_table(
            &top_n(&ratings, Metric::Opm, 5, &everyone)?,
            Metric::Opm,
            Precision::Table
        )
    );

    let defense = TopFilter {
        positions: [PositionGroup::Defense].into_iter().collect(),
        min_minutes: 100.0,
        ascending: false,
    };
    println!("\nTop 5 defensemen in APM (ranks are league-wide)");
    print!(
        "{}",
        render_top_table(
            &top_n(&ratings, Metric::Apm, 5, &defense)?,
            Metric::Apm,
            Precision::Table
        )
    );

    let bottom = TopFilter {
        ascending: true,
        ..TopFilter::default()
    };
    println!("\nBottom 3 in DPM/60");
    print!(
        "{}",
        render_top_table(
            &top_n(&ratings, Metric::Dpm60, 3, &bottom)?,
            Metric::Dpm60,
            Precision::Table
        )
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
