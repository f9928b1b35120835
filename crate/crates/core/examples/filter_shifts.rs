// Parses a shift file and drops rows the models cannot use.
//
// `cargo run --example filter_shifts`

use std::error::Error;

use hockey_apm::ingest::{classify, filter_shifts, parse_shift_reader};

const SHIFTS: &str = "\
game_id,season,duration_s,home_goals,away_goals,home_goalie,away_goalie,home_skaters,away_skaters
g1,2008-09,42,0,0,hg,ag,h1|h2|h3|h4|h5,a1|a2|a3|a4|a5
g1,2008-09,38,1,0,hg,ag,h1|h2|h3|h4|h5,a1|a2|a3|a4|a5
g1,2008-09,55,0,0,hg,ag,h1|h2|h3|h4|h5,a1|a2|a3|a4
g1,2008-09,20,0,1,,ag,h1|h2|h3|h4|h5|h6,a1|a2|a3|a4|a5
g1,2008-09,0,0,0,hg,ag,h1|h2|h3|h4|h5,a1|a2|a3|a4|a5
g1,2008-09,30,0,0,hg,ag,h1|h2,a1|a2|a3|a4|a5
";

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let records = parse_shift_reader(SHIFTS.as_bytes())?;
    for rec in &records {
        match classify(rec) {
            Some(reason) => println!("line {}: dropped ({reason:?})", rec.line),
            None => println!("line {}: kept", rec.line),
        }
    }
    let (shifts, report) = filter_shifts(&records);
    assert!(report.is_consistent());
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("{} shifts ready for fitting", shifts.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
