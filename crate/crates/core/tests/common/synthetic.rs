//! Small synthetic households and the train/validate/test plumbing shared by
//! the end-to-end tests.

use nilm::metrics::{mae, nde};
use nilm::powerdata::AlignedPair;
use nilm::seq2point::{synthesize_household, ApplianceProfile, Seq2PointModel, SynthConfig};
use nilm::windowing::{NormalizationParams, SlidingWindows};

pub const TARGET: &str = "target";

pub fn mains_norm() -> NormalizationParams {
    NormalizationParams::new(500.0, 500.0).unwrap()
}

pub fn target_norm() -> NormalizationParams {
    NormalizationParams::new(150.0, 350.0).unwrap()
}

/// 1000 W two-state target plus a fridge-like and a washing-machine-like
/// distractor.
pub fn profiles() -> Vec<ApplianceProfile> {
    vec![
        ApplianceProfile::two_state(TARGET, 1000.0, 30.0, 0.15),
        ApplianceProfile::two_state("fridge", 150.0, 100.0, 0.4),
        ApplianceProfile::multi_stage("washer", 500.0, 300.0, 0.1, &[1.0, 0.2, 0.8]),
    ]
}

pub fn household(appliances: Vec<ApplianceProfile>, length: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        appliances,
        noise_std: 30.0,
        length,
        seed,
        period: 8,
        start: 0,
    }
}

/// Mains paired with the named appliance.
pub fn pair_for(config: &SynthConfig, appliance: &str) -> AlignedPair {
    let h = synthesize_household(config).unwrap();
    AlignedPair::new(h.mains.clone(), h.appliance(appliance).unwrap().clone()).unwrap()
}

/// Chronological 70/15/15 split.
pub fn split(pair: &AlignedPair) -> (AlignedPair, AlignedPair, AlignedPair) {
    let n = pair.len();
    let (a, b) = (n * 70 / 100, n * 85 / 100);
    (pair.slice(0, a), pair.slice(a, b), pair.slice(b, n))
}

pub fn windows(pair: &AlignedPair, w: usize, appliance_norm: &NormalizationParams) -> SlidingWindows {
    SlidingWindows::from_pair(pair, w, &mains_norm(), appliance_norm).unwrap()
}

/// `(MAE watts, NDE)` of the model's predictions on a pair.
pub fn score(model: &Seq2PointModel, pair: &AlignedPair) -> (f64, f64) {
    let pred = model.predict(pair.mains()).unwrap();
    let truth = pair.appliance().values();
    (mae(pred.values(), truth).unwrap(), nde(pred.values(), truth).unwrap())
}
