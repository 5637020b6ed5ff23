use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use complyscan_core::{Error, MachineId};
use serde::Deserialize;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

pub const ENV_STORE: &str = "COMPLYSCAN_STORE";
pub const ENV_MAC: &str = "COMPLYSCAN_MAC";
pub const ENV_CONFIG: &str = "COMPLYSCAN_CONFIG";

/// On-disk settings, e.g.
///
/// ```toml
/// store = "/var/lib/complyscan/ledger.db"
/// mac = "aa:bb:cc:dd:ee:ff"
/// addr = "127.0.0.1:8080"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub store: Option<PathBuf>,
    pub mac: Option<String>,
    pub addr: Option<String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub store: PathBuf,
    /// MAC from the environment or config file, unparsed.
    pub mac: Option<String>,
    pub addr: Option<String>,
}

impl Settings {
    pub fn resolve(
        store_flag: Option<PathBuf>,
        config_flag: Option<PathBuf>,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, String> {
        let home = env("HOME").filter(|h| !h.is_empty()).map(PathBuf::from);
        let explicit = config_flag.or_else(|| env(ENV_CONFIG).filter(|s| !s.is_empty()).map(PathBuf::from));
        let file = match explicit {
            Some(path) => ConfigFile::load(&path)?,
            None => match home.as_ref().map(|h| h.join(".config/complyscan/config.toml")) {
                Some(path) if path.is_file() => ConfigFile::load(&path)?,
                _ => ConfigFile::default(),
            },
        };
        let store = store_flag
            .or_else(|| env(ENV_STORE).filter(|s| !s.is_empty()).map(PathBuf::from))
            .or(file.store)
            .unwrap_or_else(|| match &home {
                Some(h) => h.join(".local/share/complyscan/ledger.db"),
                None => PathBuf::from("complyscan.db"),
            });
        Ok(Settings {
            store,
            mac: env(ENV_MAC).filter(|s| !s.is_empty()).or(file.mac),
            addr: file.addr,
        })
    }

    /// `--mac` wins, `auto` forces detection, then env/config, then detection.
    pub fn machine(&self, flag: Option<&str>) -> Result<MachineId, Error> {
        match flag.or(self.mac.as_deref()) {
            None | Some("auto") => MachineId::detect(),
            Some(raw) => raw.parse(),
        }
    }

    pub fn addr(&self) -> Result<SocketAddr, Error> {
        let raw = self.addr.as_deref().unwrap_or(DEFAULT_ADDR);
        raw.parse()
            .map_err(|e| Error::validation("addr", format!("{raw:?}: {e}")))
    }
}
