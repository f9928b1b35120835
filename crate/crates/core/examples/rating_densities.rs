// Kernel density curves of offensive ratings for forwards and
// defensemen.
//
// `cargo run --example rating_densities`

use std::error::Error;

use hockey_apm::pipeline::{run, PipelineOptions};
use hockey_apm::report::{kde, metric_values, write_kde_csv, Metric};
use hockey_apm::shift::PositionGroup;
use hockey_apm::simulate::{generate, SimConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = SimConfig {
        n_teams: 4,
        games_per_season: 60,
        shifts_per_game: 60,
        seed: 21,
        ..SimConfig::default()
    };
    let sim = generate(&config)?;
    let options = PipelineOptions {
        min_shifts: 1,
        ..PipelineOptions::default()
    };
    let ratings = run(&sim.shifts, &sim.roster, &options)?.ratings.players;

    let mut curves = Vec::new();
    for group in [PositionGroup::Forward, PositionGroup::Defense] {
        let curve = kde(&metric_values(&ratings, Metric::Opm60, group), None, None)?;
        let (i, peak) = curve
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is never empty");
        println!(
            "{group}: bandwidth {:.4}, mode {:+.3}, peak {:.3}, integral {:.4}",
            curve.bandwidth,
            curve.grid[i],
            peak,
            curve.integral()
        );
        curves.push((group, curve));
    }
    let mut csv = Vec::new();
    write_kde_csv(&mut csv, &curves)?;
    println!("{} density rows", String::from_utf8(csv)?.lines().count() - 1);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
