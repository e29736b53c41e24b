//! Service configuration from `RC_*` environment variables.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use rc_core::aggregate::DEFAULT_BIN_WIDTH_S;

pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "rc-data";
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(8 * 60 * 60);

/// Who may see other students' responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sharing {
    /// Only teachers and admins see tracks and questions.
    TeacherOnly,
    /// Students see the class-level views (aggregate, questions) but not
    /// per-student tracks.
    ClassShared,
    /// Students see everything teachers see, except usage statistics.
    #[default]
    Open,
}

impl FromStr for Sharing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "teacher_only" => Ok(Sharing::TeacherOnly),
            "class_shared" => Ok(Sharing::ClassShared),
            "open" => Ok(Sharing::Open),
            other => Err(format!(
                "RC_SHARING must be teacher_only, class_shared or open, got {other:?}"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind_addr: SocketAddr,
    pub data_dir: PathBuf,
    pub sharing: Sharing,
    pub anonymize: bool,
    pub bin_width_s: f64,
    pub session_ttl: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind_addr: DEFAULT_BIND_ADDR.parse().expect("valid default address"),
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
            sharing: Sharing::default(),
            anonymize: false,
            bin_width_s: DEFAULT_BIN_WIDTH_S,
            session_ttl: DEFAULT_SESSION_TTL,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{var}: {message}")]
pub struct ConfigError {
    pub var: &'static str,
    pub message: String,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" | "" => Some(false),
        _ => None,
    }
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Builds a config from an arbitrary variable source; unset variables
    /// keep their defaults.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let err = |var, message: String| ConfigError { var, message };
        if let Some(v) = lookup("RC_BIND_ADDR") {
            cfg.bind_addr = v.parse().map_err(|e| err("RC_BIND_ADDR", format!("{e}")))?;
        }
        if let Some(v) = lookup("RC_DATA_DIR") {
            cfg.data_dir = PathBuf::from(v);
        }
        if let Some(v) = lookup("RC_SHARING") {
            cfg.sharing = v.parse().map_err(|e| err("RC_SHARING", e))?;
        }
        if let Some(v) = lookup("RC_ANONYMIZE") {
            cfg.anonymize = parse_bool(&v)
                .ok_or_else(|| err("RC_ANONYMIZE", format!("not a boolean: {v:?}")))?;
        }
        if let Some(v) = lookup("RC_BIN_WIDTH_S") {
            let w: f64 = v
                .parse()
                .map_err(|e| err("RC_BIN_WIDTH_S", format!("{e}")))?;
            if !(w.is_finite() && w > 0.0) {
                return Err(err("RC_BIN_WIDTH_S", format!("must be positive, got {w}")));
            }
            cfg.bin_width_s = w;
        }
        if let Some(v) = lookup("RC_SESSION_TTL_S") {
            let s: u64 = v
                .parse()
                .map_err(|e| err("RC_SESSION_TTL_S", format!("{e}")))?;
            cfg.session_ttl = Duration::from_secs(s);
        }
        Ok(cfg)
    }
}
