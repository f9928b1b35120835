// Generates a small synthetic league and shows its ground truth.
//
// `cargo run --example simulate_league`

use std::error::Error;

use hockey_apm::simulate::{generate, SimConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = SimConfig {
        n_teams: 4,
        games_per_season: 60,
        shifts_per_game: 60,
        seed: 11,
        ..SimConfig::default()
    };
    let sim = generate(&config)?;
    let goals: u32 = sim.shifts.iter().map(|s| s.home_goals + s.away_goals).sum();
    let hours: f64 = sim.shifts.iter().map(|s| s.duration_s).sum::<f64>() / 3600.0;
    println!(
        "{} shifts, {} players, {goals} goals, {:.3} goals per side per 60",
        sim.shifts.len(),
        sim.roster.len(),
        goals as f64 / hours / 2.0
    );

    let mut truth = Vec::new();
    sim.truth.write_csv(&mut truth)?;
    for line in String::from_utf8(truth)?.lines().take(6) {
        println!("{line}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
