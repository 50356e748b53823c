use std::process::ExitCode;
use std::time::Instant;

use bbsense_verify::Criterion;

type Run<'a> = Box<dyn Fn() -> bbsense::Result<Criterion> + 'a>;

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(usize, Run)> = vec![
        (1, Box::new(bbsense_verify::scaling_law)),
        (2, Box::new(bbsense_verify::ghz_oracle)),
        (3, Box::new(bbsense_verify::floquet_reference)),
        (4, Box::new(bbsense_verify::null_calibration)),
        (5, Box::new(bbsense_verify::transversality)),
        (6, Box::new(bbsense_verify::trotter)),
        (7, Box::new(bbsense_verify::lineshape)),
        (8, Box::new(bbsense_verify::two_time_test)),
        (9, Box::new(bbsense_verify::flatness)),
        (10, Box::new(|| bbsense_verify::determinism(work.path()))),
    ];
    let mut failed = Vec::new();
    let mut summary = Vec::new();
    for (n, run) in &criteria {
        let start = Instant::now();
        let (pass, line) = match run() {
            Ok(c) => {
                for check in &c.checks {
                    println!("{check}");
                }
                for note in &c.notes {
                    println!("    note: {note}");
                }
                (c.pass(), format!("criterion {:>2} {}", c.number, c.title))
            }
            Err(e) => {
                println!("error: {e}");
                (false, format!("criterion {n:>2} (error)"))
            }
        };
        let status = if pass { "PASS" } else { "FAIL" };
        let line = format!("{status} {line} [{:.1} s]", start.elapsed().as_secs_f64());
        println!("{line}\n");
        if !pass {
            failed.push(*n);
        }
        summary.push(line);
    }
    println!("acceptance summary");
    for line in &summary {
        println!("{line}");
    }
    println!("{} passed, {} failed", criteria.len() - failed.len(), failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
