//! Library surface of the command-line harness. The verification
//! routines live here so the acceptance suite can call them directly.

// Indexed loops mirror the subscript form of the matrix identities.
#![allow(clippy::needless_range_loop)]

pub mod benchrun;
pub mod certify;
pub mod props;
pub mod report;
pub mod toy;
pub mod train;

/// Environment variable that overrides any configured seed.
pub const SEED_ENV_VAR: &str = "SPDPOOL_SEED";

/// Default seed used when neither the flag nor the environment supplies
/// one.
pub const DEFAULT_SEED: u64 = 12345;

/// Resolves the run seed: the environment variable wins over the flag,
/// which wins over the default.
pub fn resolve_seed(flag: Option<u64>) -> spdpool_core::Result<u64> {
    if let Ok(raw) = std::env::var(SEED_ENV_VAR) {
        return raw.trim().parse().map_err(|_| {
            spdpool_core::Error::ConfigError(format!(
                "{SEED_ENV_VAR} must be an unsigned integer, got `{raw}`"
            ))
        });
    }
    Ok(flag.unwrap_or(DEFAULT_SEED))
}
