use std::io::Cursor;

use complyscan_core::fingerprint::{hash_partitioned, hash_whole};
use complyscan_core::Digest;
use sha2::{Digest as _, Sha256};

use crate::Outcome;

const VECTORS: [(&str, &str); 3] = [
    ("", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
    (
        "abc",
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
    ),
    (
        "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
    ),
];

const MILLION_A: &str = "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0";

fn sha(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_message(msg: &[u8], want: &str) -> Result<usize, String> {
    let label = if msg.len() > 60 {
        format!("{} bytes", msg.len())
    } else {
        format!("{:?}", String::from_utf8_lossy(msg))
    };
    ensure!(Digest::of(msg).to_hex() == want, "Digest::of({label})");
    ensure!(Digest::of(msg).to_string() == want, "Display of {label}");
    let whole = hash_whole(Cursor::new(msg)).map_err(|e| e.to_string())?;
    ensure!(whole.to_hex() == want, "hash_whole({label})");

    let len = msg.len() as u64;
    let mut splits = vec![0..0, 0..len, len..len];
    if len > 2 {
        splits.extend([1..2, 0..len / 2, len / 3..len - 1]);
    }
    for r in &splits {
        let d = hash_partitioned(Cursor::new(msg), len, r.clone()).map_err(|e| e.to_string())?;
        let (s, e) = (r.start as usize, r.end as usize);
        ensure!(d.file.to_hex() == want, "hash_partitioned({label}, {r:?}) file digest");
        ensure!(
            d.pixel.to_hex() == sha(&msg[s..e]),
            "hash_partitioned({label}, {r:?}) pixel digest"
        );
        ensure!(
            d.meta.to_hex() == sha(&[&msg[..s], &msg[e..]].concat()),
            "hash_partitioned({label}, {r:?}) meta digest"
        );
    }
    Ok(splits.len())
}

pub fn check() -> Outcome {
    let mut runs = 0;
    for (msg, want) in VECTORS {
        runs += check_message(msg.as_bytes(), want)?;
    }
    runs += check_message(&vec![b'a'; 1_000_000], MILLION_A)?;
    ensure!(Digest::empty().to_hex() == VECTORS[0].1, "Digest::empty");
    Ok(format!(
        "empty, \"abc\", 448-bit and million-'a' vectors match through 3 entry points ({runs} partitionings)"
    ))
}
