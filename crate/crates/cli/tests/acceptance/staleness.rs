use complyscan_core::ledger::{is_stale, Ledger, MachineConfig, SqliteLedger};
use complyscan_core::{FileFormat, MachineId, Timestamp};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::model::T0;
use crate::Outcome;

const PURE_TRIPLES: usize = 200_000;
const LEDGER_TRIPLES: usize = 400;

/// `now - last_scanned > frequency`, never-scanned is stale.
fn oracle(last: Option<i64>, frequency: u64, now: i64) -> bool {
    match last {
        None => true,
        Some(last) => i128::from(now) - i128::from(last) > i128::from(frequency),
    }
}

#[derive(Debug, Clone, Copy)]
struct Triple {
    last: Option<i64>,
    frequency: u64,
    now: i64,
}

fn draw(rng: &mut StdRng) -> Triple {
    let frequency = match rng.gen_range(0..4) {
        0 => rng.gen_range(0..3),
        1 => rng.gen_range(0..100_000),
        _ => rng.gen_range(0..40_000_000),
    };
    let last = if rng.gen_bool(0.1) {
        None
    } else {
        Some(T0 + rng.gen_range(-50_000_000..50_000_000))
    };
    let base = last.unwrap_or(T0);
    let f = frequency as i64;
    let now = match rng.gen_range(0..6) {
        0 => base + f,
        1 => base + f + 1,
        2 => base + f - 1,
        _ => base + rng.gen_range(-f - 10..=2 * f + 10),
    };
    Triple { last, frequency, now }
}

fn config(t: Triple) -> MachineConfig {
    MachineConfig {
        username: "u".into(),
        mac: "aabbccddeeff".parse().unwrap(),
        paths: vec!["/d".into()],
        formats: [FileFormat::Dicom].into(),
        scan_frequency: t.frequency,
        last_scanned: t.last.map(Timestamp::from_unix),
        stale: !oracle(t.last, t.frequency, t.now),
    }
}

pub fn check() -> Outcome {
    let mut rng = StdRng::seed_from_u64(42);
    let (mut boundary, mut never) = (0, 0);
    for _ in 0..PURE_TRIPLES {
        let t = draw(&mut rng);
        let want = oracle(t.last, t.frequency, t.now);
        let now = Timestamp::from_unix(t.now);
        let last = t.last.map(Timestamp::from_unix);
        ensure!(is_stale(now, last, t.frequency) == want, "is_stale {t:?}");
        ensure!(
            config(t).with_staleness_at(now).stale == want,
            "with_staleness_at {t:?}"
        );
        match t.last {
            Some(l) if t.now - l == t.frequency as i64 => {
                boundary += 1;
                ensure!(!want, "boundary must not be stale");
            }
            None => never += 1,
            _ => {}
        }
    }
    ensure!(boundary > 0 && never > 0, "boundary {boundary}, never-scanned {never}");

    let mut ledger = SqliteLedger::in_memory().map_err(|e| e.to_string())?;
    for i in 0..LEDGER_TRIPLES {
        // registration requires a positive frequency
        let t = std::iter::repeat_with(|| draw(&mut rng))
            .find(|t| t.frequency > 0)
            .unwrap();
        let user = format!("user{i}");
        let mac: MachineId = format!("02{i:010x}")
            .parse()
            .map_err(|e: complyscan_core::Error| e.to_string())?;
        ledger
            .upsert_machine_config(&user, &mac, &["/d".into()], &[FileFormat::Dicom].into(), t.frequency)
            .map_err(|e| e.to_string())?;
        if let Some(last) = t.last {
            let at = Timestamp::from_unix(last);
            let staging = ledger.begin_scan(&user, &mac, at).map_err(|e| e.to_string())?;
            ledger.commit_scan(staging, at).map_err(|f| f.error.to_string())?;
        }
        ledger
            .recompute_staleness(Timestamp::from_unix(t.now))
            .map_err(|e| e.to_string())?;
        let row = ledger.machine_config(&user, &mac).map_err(|e| e.to_string())?.unwrap();
        ensure!(
            row.stale == oracle(t.last, t.frequency, t.now),
            "ledger stale {} for {t:?}",
            row.stale
        );
    }
    Ok(format!(
        "{PURE_TRIPLES} triples ({boundary} on the boundary, {never} never scanned) and {LEDGER_TRIPLES} through the ledger match the strict rule"
    ))
}
