//! The decompression pipeline: a file whose computed size is 0 is skipped
//! without any error, so a corrupted size silently loses the file.

use serde::{Deserialize, Serialize};

use super::{rng_for, FleetConfig};
use crate::detector::Host;
use crate::kernels::{decompress_size, ArithmeticBackend, CoreId, DecompressHeader, SplitMix64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppWorkloadResult {
    pub files_submitted: u64,
    pub files_written: u64,
    pub files_silently_dropped: u64,
    pub error_events_emitted: u64,
}

impl AppWorkloadResult {
    pub fn add(&mut self, other: &AppWorkloadResult) {
        self.files_submitted += other.files_submitted;
        self.files_written += other.files_written;
        self.files_silently_dropped += other.files_silently_dropped;
        self.error_events_emitted += other.error_events_emitted;
    }
}

/// Runs each file's size computation on a core drawn from `seed` and the
/// host id. Sizes of 0 (or no size at all) drop the file.
pub fn app_workload_decompression<B: ArithmeticBackend + ?Sized>(
    host: Host,
    files: &[DecompressHeader],
    backend: &mut B,
    seed: u64,
) -> AppWorkloadResult {
    let mut rng = rng_for(seed, "app-cores", u64::from(host.id.0));
    let mut result = AppWorkloadResult::default();
    for &header in files {
        let core = CoreId::new(host.id.0, rng.next_below(u64::from(host.cores.max(1))) as u32);
        let out = decompress_size(header, backend, core);
        result.files_submitted += 1;
        match out.value.as_int() {
            Some(size) if size > 0 => result.files_written += 1,
            _ => result.files_silently_dropped += 1,
        }
    }
    result
}

/// Trigger levels cycled through by the targeted files (all with base 1.1).
pub const TRIGGER_LEVELS: [f64; 3] = [53.0, 68.0, 3.0];

/// `count` headers: base in [1, 2) and integer level in [0, 128], with every
/// `trigger_period`-th file replaced by a trigger header.
pub fn workload_files(seed: u64, count: u32, trigger_period: u32) -> Vec<DecompressHeader> {
    let mut rng = SplitMix64::new(seed);
    let mut triggers = 0;
    (0..count)
        .map(|i| {
            if trigger_period > 0 && (i + 1) % trigger_period == 0 {
                let level = TRIGGER_LEVELS[triggers % TRIGGER_LEVELS.len()];
                triggers += 1;
                DecompressHeader { base: 1.1, level }
            } else {
                DecompressHeader {
                    base: 1.0 + rng.next_unit(),
                    level: rng.next_below(129) as f64,
                }
            }
        })
        .collect()
}

pub(super) fn host_files(config: &FleetConfig, host: u32) -> Vec<DecompressHeader> {
    let seed = rng_for(config.seed, "app-files", u64::from(host)).next_u64();
    workload_files(seed, config.app_files, config.app_trigger_period)
}
