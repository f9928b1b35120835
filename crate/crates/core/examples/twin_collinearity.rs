// Two forwards who nearly always share the ice get large standard
// errors; when they always do, the fit refuses or falls back to a ridge.
//
// `cargo run --example twin_collinearity`

use std::error::Error;

use hockey_apm::pipeline::{run, ModelSelection, PipelineOptions};
use hockey_apm::simulate::{twin_scenario, SimConfig, TwinConfig};
use hockey_apm::wls::{CollinearityPolicy, FitOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = SimConfig {
        n_teams: 4,
        games_per_season: 60,
        shifts_per_game: 60,
        seed: 2,
        ..SimConfig::default()
    };
    let options = PipelineOptions {
        min_shifts: 1,
        model: ModelSelection::Ib,
        ..PipelineOptions::default()
    };

    let sim = twin_scenario(&config, &TwinConfig { fraction: 0.92 })?;
    let (a, b) = sim.twins.clone().expect("twin scenario pairs two forwards");
    let ratings = run(&sim.shifts, &sim.roster, &options)?.ratings.players;
    let mut skater_errs: Vec<f64> = ratings.iter().filter(|r| r.opm60.is_some()).map(|r| r.err60).collect();
    skater_errs.sort_by(f64::total_cmp);
    let median = skater_errs[skater_errs.len() / 2];
    for r in ratings.iter().filter(|r| r.player == a || r.player == b) {
        println!(
            "{}: err60 {:.3}, {:.2}x the median skater",
            r.player,
            r.err60,
            r.err60 / median
        );
    }

    let always = twin_scenario(&config, &TwinConfig { fraction: 1.0 })?;
    match run(&always.shifts, &always.roster, &options) {
        Ok(_) => println!("always together: fit unexpectedly succeeded"),
        Err(e) => println!("always together: {e}"),
    }
    let ridge = PipelineOptions {
        fit: FitOptions {
            collinearity: CollinearityPolicy::Ridge,
        },
        ..options
    };
    let out = run(&always.shifts, &always.roster, &ridge)?;
    let lambda = out.fits.ib.as_ref().and_then(|f| f.diagnostics.ridge_lambda);
    println!("with ridge: lambda {lambda:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
