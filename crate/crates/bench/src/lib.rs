//! Fixed instances shared by the benchmarks.

use tandem_core::experiments::{example1_params, example2_params};
use tandem_core::SystemParams;

/// A spread of instances: both published examples and one with no
/// dedicated server at station 2.
pub fn instances() -> Vec<(&'static str, SystemParams)> {
    vec![
        ("example1", example1_params()),
        ("example2", example2_params()),
        ("no_dedicated_2", SystemParams::new(1.0, 0.0, 2.0, 2.0, 1.5, 0.0, 3.0, 1.0)),
    ]
}
