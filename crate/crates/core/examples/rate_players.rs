// Runs both models end to end and prints the ratings CSV.
//
// `cargo run --example rate_players`

use std::error::Error;

use hockey_apm::pipeline::{run, PipelineOptions};
use hockey_apm::report::{write_ratings_csv, Precision};
use hockey_apm::shift::linemate_table;
use hockey_apm::simulate::{generate, SimConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = SimConfig {
        n_teams: 4,
        games_per_season: 60,
        shifts_per_game: 60,
        seed: 3,
        ..SimConfig::default()
    };
    let sim = generate(&config)?;
    let options = PipelineOptions {
        min_shifts: 1,
        ..PipelineOptions::default()
    };
    let out = run(&sim.shifts, &sim.roster, &options)?;
    println!("averaged: {}", out.ratings.averaged);

    let mut csv = Vec::new();
    write_ratings_csv(
        &mut csv,
        &out.ratings.players,
        &linemate_table(&sim.shifts, 3),
        Precision::Table,
    )?;
    for line in String::from_utf8(csv)?.lines().take(6) {
        println!("{line}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
