//! Fixtures shared by the benchmarks.

use rsapa::model::{generate_estimate, SystemConfig};
use rsapa::{CouplingSource, CouplingTable, PrecoderKind, PrecoderSet};

/// Symmetric `n x n` single-antenna-user scenario at 10 dB with `σ_e² = 0.1`.
pub fn scenario(n: usize) -> SystemConfig {
    SystemConfig::symmetric(n, n, 1, 1).with_err_var(0.1).with_snr_db(10.0).with_seed(11)
}

/// ZF precoders and their coupling table on the first channel estimate.
pub fn zf_instance(cfg: &SystemConfig) -> (PrecoderSet, CouplingTable) {
    let h = generate_estimate(cfg, 0).expect("channel");
    let p = PrecoderSet::build(PrecoderKind::Zf, cfg, &h).expect("precoders");
    let ct = CouplingTable::build(cfg, &h, &p, CouplingSource::Estimate).expect("coupling");
    (p, ct)
}
