//! Shipped defaults for the pooling layers.

use crate::eig::DEFAULT_TRUNCATION;
use crate::mpn::MpnVariant;
use crate::newton_schulz::PreNormMode;

/// Default matrix-power exponent.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Default Newton-Schulz iteration count.
pub const DEFAULT_NS_ITERATIONS: usize = 5;

/// Pooling layer configuration bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingConfig {
    /// Spectral normalization variant (carries the exponent alpha).
    pub variant: MpnVariant,
    /// Newton-Schulz iteration count for the iterative square-root path.
    pub ns_iterations: usize,
    /// Pre-normalization mode for the iterative square-root path.
    pub pre_norm: PreNormMode,
    /// Relative eigenvalue truncation threshold for the EIG path.
    pub truncation: f64,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            variant: MpnVariant::plain(DEFAULT_ALPHA).expect("default alpha is valid"),
            ns_iterations: DEFAULT_NS_ITERATIONS,
            pre_norm: PreNormMode::Trace,
            truncation: DEFAULT_TRUNCATION,
        }
    }
}
