//! verify: run the built-in acceptance battery and report one line per
//! check. Returns the number of failed checks so the caller can set the
//! process exit status.

use std::path::Path;

use spindown::selfcheck;

use crate::output::{fmt_bool, fmt_f, write_atomic, Csv};
use crate::AppError;

pub fn run(out: Option<&Path>, seed: u64) -> Result<usize, AppError> {
    let results = selfcheck::run_all(seed);
    for r in &results {
        println!("{r}");
    }
    let failures = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failures, results.len());

    if let Some(dir) = out {
        let mut csv = Csv::new(vec!["id", "passed", "measured", "threshold", "detail"]);
        for r in &results {
            csv.push(vec![
                r.id.clone(),
                fmt_bool(r.passed),
                fmt_f(r.measured),
                fmt_f(r.threshold),
                r.detail.clone(),
            ]);
        }
        write_atomic(dir, "verify.csv", &csv.render())?;
        println!("wrote verify.csv to {}", dir.display());
    }
    Ok(failures)
}
