use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use super::ServiceError;

/// Service settings. File values are overridden by `SKYCAT_*` environment variables.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    pub row_cap: usize,
    /// Seconds.
    pub timeout_cap: f64,
    pub admin_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            row_cap: crate::query::DEFAULT_LIMIT,
            timeout_cap: crate::query::DEFAULT_TIMEOUT.as_secs_f64(),
            admin_token: None,
        }
    }
}

pub const ENV_VARS: [&str; 5] = ["SKYCAT_BIND", "SKYCAT_DATA_DIR", "SKYCAT_ROW_CAP", "SKYCAT_TIMEOUT_CAP", "SKYCAT_ADMIN_TOKEN"];

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let c: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        c.validate()
    }

    /// Reads `path` (if given) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        base.with_env(|k| std::env::var(k).ok())
    }

    pub fn with_env(mut self, get: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        let bad = |k: &str, v: &str| ServiceError::Config(format!("{k}={v} is not valid"));
        if let Some(v) = get("SKYCAT_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("SKYCAT_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("SKYCAT_ROW_CAP") {
            self.row_cap = v.parse().map_err(|_| bad("SKYCAT_ROW_CAP", &v))?;
        }
        if let Some(v) = get("SKYCAT_TIMEOUT_CAP") {
            self.timeout_cap = v.parse().map_err(|_| bad("SKYCAT_TIMEOUT_CAP", &v))?;
        }
        if let Some(v) = get("SKYCAT_ADMIN_TOKEN") {
            self.admin_token = Some(v).filter(|t| !t.is_empty());
        }
        self.validate()
    }

    fn validate(self) -> Result<Self, ServiceError> {
        if self.row_cap == 0 {
            return Err(ServiceError::Config("row_cap must be at least 1".into()));
        }
        if !(self.timeout_cap.is_finite() && self.timeout_cap > 0.0) {
            return Err(ServiceError::Config("timeout_cap must be a positive number of seconds".into()));
        }
        Ok(self)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_file() {
        let c = ServiceConfig::from_toml("bind = \"0.0.0.0:1\"\nrow_cap = 10\n").unwrap();
        assert_eq!(c.row_cap, 10);
        assert_eq!(c.timeout_cap, 30.0);
        let c = c
            .with_env(|k| match k {
                "SKYCAT_ROW_CAP" => Some("5".into()),
                "SKYCAT_ADMIN_TOKEN" => Some("s3cret".into()),
                _ => None,
            })
            .unwrap();
        assert_eq!((c.bind.as_str(), c.row_cap, c.admin_token.as_deref()), ("0.0.0.0:1", 5, Some("s3cret")));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml("row_cap = 0").is_err());
        assert!(ServiceConfig::from_toml("colour = 1").is_err());
        assert!(ServiceConfig::default().with_env(|k| (k == "SKYCAT_TIMEOUT_CAP").then(|| "-1".into())).is_err());
    }
}
