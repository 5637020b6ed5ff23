use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use complyscan_core::ledger::{Ledger, SqliteLedger};
use complyscan_core::scanner::run_scan;
use complyscan_core::{FileFormat, ScanReport, Timestamp};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::model::{mac, options, scan_time, Counts, Reference, Tree, MAX_SCANS, NAMES, USER};
use crate::Outcome;

const SEQUENCES: u64 = 1000;
const BUDGET: Duration = Duration::from_secs(120);
const FAULT_SEQUENCES: u64 = 40;

#[derive(Debug, Default, Clone, Copy)]
struct Stats {
    scans: usize,
    injections: usize,
    peak_files: usize,
}

fn journal(db: &Path) -> PathBuf {
    PathBuf::from(format!("{}-journal", db.display()))
}

/// Arms each write point in turn until a commit gets through, checking
/// the store after every rolled-back attempt.
fn scan_through_faults(ledger: &mut SqliteLedger, db: &Path, at: Timestamp) -> Result<(ScanReport, usize), String> {
    let before = fs::read(db).map_err(|e| e.to_string())?;
    for point in 0.. {
        ledger.inject_fault_at(Some(point));
        let report = run_scan(ledger, USER, &mac(), at, &options()).map_err(|e| format!("fault {point}: {e}"))?;
        if report.committed {
            ledger.inject_fault_at(None);
            return Ok((report, point));
        }
        ensure!(
            report.errors.iter().any(|e| e.message.contains("fault")),
            "write point {point}: unexpected failure {:?}",
            report.errors
        );
        let after = fs::read(db).map_err(|e| e.to_string())?;
        ensure!(after == before, "write point {point}: store bytes changed");
        ensure!(
            !journal(db).exists(),
            "write point {point}: rollback journal left behind"
        );
    }
    unreachable!()
}

fn replay(seed: u64, inject: bool) -> Result<Stats, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let db = dir.path().join("ledger.db");
    let io = |e: std::io::Error| e.to_string();
    fs::create_dir_all(&data).map_err(io)?;
    let mut ledger = SqliteLedger::open(&db).map_err(|e| e.to_string())?;
    ledger
        .upsert_machine_config(
            USER,
            &mac(),
            std::slice::from_ref(&data),
            &[FileFormat::Dicom, FileFormat::Nifti1].into(),
            86_400,
        )
        .map_err(|e| e.to_string())?;

    let mut rng = StdRng::seed_from_u64(seed);
    let mut tree = Tree {
        data: &data,
        files: BTreeMap::new(),
    };
    let mut reference = Reference::default();
    let mut stats = Stats::default();
    let scans = rng.gen_range(1..=MAX_SCANS);
    for step in 0..scans {
        let ops = if step == 0 {
            rng.gen_range(1..=NAMES.len())
        } else {
            rng.gen_range(0..=5)
        };
        for _ in 0..ops {
            tree.mutate(&mut rng).map_err(io)?;
        }
        stats.peak_files = stats.peak_files.max(tree.files.len());
        let at = scan_time(step);
        let report = if inject {
            let (report, injected) = scan_through_faults(&mut ledger, &db, at)?;
            stats.injections += injected;
            report
        } else {
            run_scan(&mut ledger, USER, &mac(), at, &options()).map_err(|e| e.to_string())?
        };
        stats.scans += 1;
        ensure!(report.committed, "scan {step} did not commit: {:?}", report.errors);
        ensure!(report.errors.is_empty(), "scan {step} errors: {:?}", report.errors);
        let want = reference.scan(&tree.present(), at);
        let got = Counts::of(&report);
        ensure!(got == want, "scan {step}: counts {got:?}, reference {want:?}");
        reference.matches(&ledger).map_err(|e| format!("scan {step}: {e}"))?;
        let row = ledger.machine_config(USER, &mac()).map_err(|e| e.to_string())?.unwrap();
        ensure!(
            row.last_scanned == Some(at),
            "scan {step}: last_scanned {:?}",
            row.last_scanned
        );
    }
    let violations = ledger.audit().map_err(|e| e.to_string())?;
    ensure!(violations.is_empty(), "audit: {violations:?}");
    Ok(stats)
}

fn run_all(seeds: std::ops::Range<u64>, inject: bool) -> Result<Stats, String> {
    let results: Vec<(u64, Result<Stats, String>)> = seeds.into_par_iter().map(|s| (s, replay(s, inject))).collect();
    let mut total = Stats::default();
    for (seed, result) in results {
        let stats = result.map_err(|e| format!("seed {seed}: {e}"))?;
        total.scans += stats.scans;
        total.injections += stats.injections;
        total.peak_files = total.peak_files.max(stats.peak_files);
    }
    Ok(total)
}

pub fn check() -> Outcome {
    let started = Instant::now();
    let stats = run_all(0..SEQUENCES, false)?;
    let elapsed = started.elapsed();
    ensure!(elapsed < BUDGET, "took {elapsed:?}");
    Ok(format!(
        "{SEQUENCES} sequences, {} scans, up to {} files, all rows and counts match the reference",
        stats.scans, stats.peak_files
    ))
}

pub fn check_atomicity() -> Outcome {
    let stats = run_all(10_000..10_000 + FAULT_SEQUENCES, true)?;
    ensure!(stats.injections > 0, "no write point was exercised");
    Ok(format!(
        "{} injected faults over {} scans; store byte-identical after 100% of them",
        stats.injections, stats.scans
    ))
}
