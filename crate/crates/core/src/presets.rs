//! Published parameter sets for two-state chains with a 24-step cycle.
//!
//! Coefficients are laid out as `(b0, sin_1..sin_K, cos_1..cos_K)`.

use crate::link::TrigLinkSpec;

pub const PERIOD: usize = 24;

fn spec(b12: &[f64], b21: &[f64]) -> TrigLinkSpec {
    TrigLinkSpec::two_state(PERIOD, b12, b21).expect("valid preset coefficients")
}

/// Mild periodicity; `rho` is only slightly shifted from `delta`.
pub fn scenario_1() -> TrigLinkSpec {
    spec(&[-2.0, -1.0, -1.0], &[-2.0, 2.0, 2.0])
}

/// Nearly homogeneous marginal distribution with a strongly oscillating `rho`.
pub fn scenario_2() -> TrigLinkSpec {
    spec(&[-5.0, -1.0, -1.0], &[-5.0, 1.0, 1.0])
}

/// Two harmonics. The published vectors list the harmonic terms interleaved
/// (sin 1, cos 1, sin 2, cos 2); they are reordered here.
pub fn scenario_3() -> TrigLinkSpec {
    spec(
        &[-3.0, -0.5, 1.0, -1.0, -2.0],
        &[-3.0, -0.5, 0.5, 2.0, -0.5],
    )
}

/// Chain used to illustrate time-varying mean dwell times.
pub fn dwell_means_example() -> TrigLinkSpec {
    spec(&[-1.2, 0.85, 0.15], &[-1.5, -0.7, -1.3])
}

/// Chain whose overall dwell-time distribution of state 2 is non-monotone.
pub fn multimodal_dwell_example() -> TrigLinkSpec {
    spec(&[-3.0, 1.5, -0.9], &[-3.0, 1.2, -1.1])
}

/// Looks a preset up by name.
pub fn by_name(name: &str) -> Option<TrigLinkSpec> {
    Some(match name {
        "scenario1" => scenario_1(),
        "scenario2" => scenario_2(),
        "scenario3" => scenario_3(),
        "dwell-means" => dwell_means_example(),
        "multimodal-dwell" => multimodal_dwell_example(),
        _ => return None,
    })
}

pub const NAMES: [&str; 5] = [
    "scenario1",
    "scenario2",
    "scenario3",
    "dwell-means",
    "multimodal-dwell",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_build() {
        for name in NAMES {
            let spec = by_name(name).unwrap();
            assert_eq!(spec.period(), 24);
            spec.build_tpm();
        }
        assert_eq!(scenario_3().n_harmonics(), 2);
        assert!(by_name("nope").is_none());
    }
}
