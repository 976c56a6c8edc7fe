//! Synthetic households: mains = sum of appliance square waves + noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powerdata::{PowerSeries, DEFAULT_PERIOD};

/// An appliance alternating between OFF (0 W) and an ON cycle.
///
/// The ON cycle is split evenly into `stages`, each a multiplier of
/// `on_power`; a single stage of 1.0 is a plain two-state appliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceProfile {
    pub name: String,
    pub on_power: f64,
    /// Mean ON duration in samples.
    pub mean_on_samples: f64,
    /// Long-run fraction of time spent ON, in `[0, 1]`.
    pub duty_cycle: f64,
    #[serde(default = "single_stage")]
    pub stages: Vec<f64>,
}

fn single_stage() -> Vec<f64> {
    vec![1.0]
}

impl ApplianceProfile {
    pub fn two_state(name: &str, on_power: f64, mean_on_samples: f64, duty_cycle: f64) -> Self {
        Self {
            name: name.to_string(),
            on_power,
            mean_on_samples,
            duty_cycle,
            stages: single_stage(),
        }
    }

    pub fn multi_stage(
        name: &str,
        on_power: f64,
        mean_on_samples: f64,
        duty_cycle: f64,
        stages: &[f64],
    ) -> Self {
        Self {
            stages: stages.to_vec(),
            ..Self::two_state(name, on_power, mean_on_samples, duty_cycle)
        }
    }

    /// Same appliance with every power level multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            on_power: self.on_power * factor,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.on_power.is_finite()
            && self.on_power >= 0.0
            && self.mean_on_samples >= 1.0
            && (0.0..=1.0).contains(&self.duty_cycle)
            && !self.stages.is_empty()
            && self.stages.iter().all(|s| s.is_finite() && *s >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid appliance profile `{}`", self.name)))
        }
    }

    fn generate(&self, length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let mut out = vec![0.0; length];
        if self.duty_cycle <= 0.0 || self.on_power == 0.0 {
            return Ok(out);
        }
        let on_dist = Exp::new(1.0 / self.mean_on_samples).map_err(|e| Error::Config(e.to_string()))?;
        let mean_off = self.mean_on_samples * (1.0 - self.duty_cycle) / self.duty_cycle;
        let off_dist = if mean_off > 0.0 {
            Some(Exp::new(1.0 / mean_off).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        let mut on = rng.random::<f64>() < self.duty_cycle;
        // Start part-way through the first run so t = 0 is not special.
        let mut first = true;
        let mut t = 0usize;
        while t < length {
            let run = match (on, &off_dist) {
                (true, _) => on_dist.sample(rng).ceil().max(1.0) as usize,
                (false, Some(d)) => d.sample(rng).ceil().max(1.0) as usize,
                (false, None) => 1,
            };
            let skip = if first { rng.random_range(0..run) } else { 0 };
            first = false;
            if on {
                let stages = self.stages.len();
                for pos in skip..run {
                    let idx = t + pos - skip;
                    if idx >= length {
                        break;
                    }
                    let stage = (pos * stages / run).min(stages - 1);
                    out[idx] = self.on_power * self.stages[stage];
                }
            }
            t += run - skip;
            on = !on || off_dist.is_none();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub appliances: Vec<ApplianceProfile>,
    /// Standard deviation (watts) of the additive Gaussian noise.
    pub noise_std: f64,
    pub length: usize,
    pub seed: u64,
    #[serde(default = "default_period")]
    pub period: i64,
    #[serde(default)]
    pub start: i64,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synthetic household config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&Error::read_config(path)?)
    }
}

fn default_period() -> i64 {
    DEFAULT_PERIOD
}

#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub mains: PowerSeries,
    pub appliances: Vec<PowerSeries>,
}

impl Household {
    pub fn appliance(&self, name: &str) -> Option<&PowerSeries> {
        self.appliances.iter().find(|s| s.channel() == name)
    }
}

/// Generates a household whose mains is the sum of its appliances plus
/// Gaussian noise, clamped at 0 W.
///
/// Each appliance draws from its own stream of the seeded generator, so
/// adding or changing one appliance leaves the others' traces unchanged.
pub fn synthesize_household(config: &SynthConfig) -> Result<Household> {
    if config.length == 0 {
        return Err(Error::Config("synthetic length must be >= 1".into()));
    }
    if !(config.noise_std >= 0.0) || !config.noise_std.is_finite() {
        return Err(Error::Config("noise std must be finite and >= 0".into()));
    }
    let mut appliances = Vec::with_capacity(config.appliances.len());
    let mut total = vec![0.0; config.length];
    for (i, profile) in config.appliances.iter().enumerate() {
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64 + 1);
        let values = profile.generate(config.length, &mut rng)?;
        for (t, v) in total.iter_mut().zip(&values) {
            *t += v;
        }
        appliances.push(PowerSeries::regular(
            config.start,
            config.period,
            values,
            profile.name.clone(),
        )?);
    }
    if config.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        for t in total.iter_mut() {
            *t = (*t + noise.sample(&mut rng)).max(0.0);
        }
    }
    let mains = PowerSeries::regular(config.start, config.period, total, "mains")?;
    Ok(Household { mains, appliances })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(appliances: Vec<ApplianceProfile>, noise_std: f64, length: usize) -> SynthConfig {
        SynthConfig {
            appliances,
            noise_std,
            length,
            seed: 11,
            period: 8,
            start: 0,
        }
    }

    #[test]
    fn noiseless_single_appliance_is_mains() {
        let h = synthesize_household(&config(
            vec![ApplianceProfile::two_state("kettle", 2000.0, 20.0, 0.1)],
            0.0,
            5000,
        ))
        .unwrap();
        assert_eq!(h.mains.values(), h.appliances[0].values());
    }

    #[test]
    fn noiseless_mains_is_sum() {
        let h = synthesize_household(&config(
            vec![
                ApplianceProfile::two_state("kettle", 2000.0, 20.0, 0.1),
                ApplianceProfile::multi_stage("wm", 500.0, 200.0, 0.2, &[1.0, 0.3, 4.0]),
            ],
            0.0,
            5000,
        ))
        .unwrap();
        for t in 0..5000 {
            let sum = h.appliances[0].values()[t] + h.appliances[1].values()[t];
            assert_eq!(h.mains.values()[t], sum);
        }
    }

    #[test]
    fn duty_cycle_and_levels() {
        let h = synthesize_household(&config(
            vec![ApplianceProfile::two_state("a", 1000.0, 50.0, 0.3)],
            0.0,
            200_000,
        ))
        .unwrap();
        let v = h.appliances[0].values();
        assert!(v.iter().all(|x| *x == 0.0 || *x == 1000.0));
        let on = v.iter().filter(|x| **x > 0.0).count() as f64 / v.len() as f64;
        assert!((on - 0.3).abs() < 0.03, "duty {on}");
    }

    #[test]
    fn multi_stage_levels_appear() {
        let h = synthesize_household(&config(
            vec![ApplianceProfile::multi_stage("wm", 100.0, 300.0, 0.5, &[1.0, 0.5, 2.0])],
            0.0,
            20_000,
        ))
        .unwrap();
        let v = h.appliances[0].values();
        for level in [0.0, 50.0, 100.0, 200.0] {
            assert!(v.contains(&level), "missing level {level}");
        }
    }

    #[test]
    fn streams_are_independent() {
        let a = ApplianceProfile::two_state("a", 1000.0, 50.0, 0.3);
        let b = ApplianceProfile::two_state("b", 200.0, 10.0, 0.5);
        let one = synthesize_household(&config(vec![a.clone()], 0.0, 1000)).unwrap();
        let two = synthesize_household(&config(vec![a, b], 0.0, 1000)).unwrap();
        assert_eq!(one.appliances[0], two.appliances[0]);
    }

    #[test]
    fn noise_is_unbiased_away_from_the_clamp() {
        // Always-on load keeps mains far from 0 W, so clamping never applies.
        let sigma = 30.0;
        let n = 100_000;
        let h = synthesize_household(&config(
            vec![ApplianceProfile::two_state("base", 1000.0, 10.0, 1.0)],
            sigma,
            n,
        ))
        .unwrap();
        let mean: f64 = h
            .mains
            .values()
            .iter()
            .zip(h.appliances[0].values())
            .map(|(m, a)| m - a)
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn deterministic_given_seed() {
        let c = config(vec![ApplianceProfile::two_state("a", 1000.0, 50.0, 0.3)], 5.0, 3000);
        assert_eq!(synthesize_household(&c).unwrap(), synthesize_household(&c).unwrap());
    }
}
