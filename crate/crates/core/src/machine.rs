//! Machine identity: a MAC address in canonical 12-hex-digit form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MachineId(String);

impl MachineId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// MAC of the first non-loopback interface with a non-zero address,
    /// interfaces taken in name order.
    pub fn detect() -> Result<MachineId> {
        Self::detect_in(Path::new("/sys/class/net"))
    }

    fn detect_in(sysfs: &Path) -> Result<MachineId> {
        let entries = fs::read_dir(sysfs).map_err(|e| Error::io(sysfs.display().to_string(), e))?;
        let mut names: Vec<_> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|name| name != "lo")
            .collect();
        names.sort();
        for name in names {
            let Ok(raw) = fs::read_to_string(sysfs.join(&name).join("address")) else {
                continue;
            };
            if let Ok(mac) = raw.trim().parse::<MachineId>() {
                if mac.0.bytes().any(|b| b != b'0') {
                    return Ok(mac);
                }
            }
        }
        Err(Error::validation(
            "mac",
            "no non-loopback network interface found; pass an explicit --mac",
        ))
    }
}

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for MachineId {
    type Err = Error;

    /// Accepts `aabbccddeeff`, `aa:bb:cc:dd:ee:ff` or `AA-BB-CC-DD-EE-FF`.
    fn from_str(s: &str) -> Result<Self> {
        let digits: String = s.chars().filter(|c| *c != ':' && *c != '-').collect();
        if digits.len() != 12 || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(Error::validation(
                "mac",
                format!("{s:?} is not a 12-hex-digit MAC address"),
            ));
        }
        Ok(MachineId(digits.to_ascii_lowercase()))
    }
}

impl Serialize for MachineId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for MachineId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
