//! Seeded sensor-attack generators for the man-in-the-middle and GPS
//! spoofing scenarios.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    MitmRamp,
    GpsSinusoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackModel {
    pub kind: AttackKind,
    /// Ramp increment per step on `p_x` (MITM).
    pub slope: f64,
    /// Ramp shape: `e_0(k) = slope * (k + 1)^exponent`.
    pub ramp_exponent: f64,
    /// Sinusoid amplitude on `p_x` (GPS).
    pub amplitude: f64,
    /// Sinusoid period in steps (GPS).
    pub period: f64,
    /// Standard deviation of the extra random-channel corruption.
    pub sigma_a: f64,
    pub seed: u64,
}

impl Default for AttackModel {
    fn default() -> Self {
        Self {
            kind: AttackKind::MitmRamp,
            slope: 0.05,
            ramp_exponent: 1.0,
            amplitude: 1.0,
            period: 50.0,
            sigma_a: 1.0,
            seed: 0,
        }
    }
}

impl AttackModel {
    pub fn none() -> Self {
        Self {
            kind: AttackKind::None,
            ..Self::default()
        }
    }

    pub fn mitm(seed: u64) -> Self {
        Self {
            kind: AttackKind::MitmRamp,
            seed,
            ..Self::default()
        }
    }

    pub fn gps(seed: u64) -> Self {
        Self {
            kind: AttackKind::GpsSinusoid,
            seed,
            ..Self::default()
        }
    }

    /// Maximum number of attacked channels at any step.
    pub fn max_support(&self) -> usize {
        match self.kind {
            AttackKind::None => 0,
            AttackKind::MitmRamp | AttackKind::GpsSinusoid => 2,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.sigma_a >= 0.0 && self.sigma_a.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_a must be finite and nonnegative, got {}",
                self.sigma_a
            )));
        }
        match self.kind {
            AttackKind::MitmRamp if p < 2 => Err(Error::Config(
                "MITM attack needs at least two channels".into(),
            )),
            AttackKind::GpsSinusoid if p < 3 => Err(Error::Config(
                "GPS attack needs the three position channels".into(),
            )),
            AttackKind::GpsSinusoid if self.period <= 0.0 => {
                Err(Error::Config("sinusoid period must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Owns the random stream of one attack sequence.
#[derive(Clone, Debug)]
pub struct AttackGenerator {
    model: AttackModel,
    p: usize,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl AttackGenerator {
    pub fn new(model: AttackModel, p: usize) -> Result<Self> {
        model.validate(p)?;
        let noise = Normal::new(0.0, model.sigma_a).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
            p,
            noise,
        })
    }

    /// Attack vector `e(k)`. Steps must be requested in order for the random
    /// channel draws to line up with `k`.
    pub fn attack(&mut self, k: usize) -> DVector<f64> {
        match self.model.kind {
            AttackKind::None => DVector::zeros(self.p),
            AttackKind::MitmRamp => mitm_attack(&self.model, k, self.p, &mut self.rng, &self.noise),
            AttackKind::GpsSinusoid => {
                gps_spoof_attack(&self.model, k, self.p, &mut self.rng, &self.noise)
            }
        }
    }

    pub fn sequence(mut self, steps: usize) -> Vec<DVector<f64>> {
        (0..steps).map(|k| self.attack(k)).collect()
    }
}

/// Ramp on channel 0 plus Gaussian corruption on one uniformly chosen other channel.
pub fn mitm_attack(
    model: &AttackModel,
    k: usize,
    p: usize,
    rng: &mut impl Rng,
    noise: &Normal<f64>,
) -> DVector<f64> {
    let mut e = DVector::zeros(p);
    e[0] = model.slope * ((k + 1) as f64).powf(model.ramp_exponent);
    let j = rng.random_range(1..p);
    e[j] = noise.sample(rng);
    e
}

/// Sinusoid on channel 0 plus Gaussian corruption on one uniformly chosen
/// position channel (which may be channel 0 itself).
pub fn gps_spoof_attack(
    model: &AttackModel,
    k: usize,
    p: usize,
    rng: &mut impl Rng,
    noise: &Normal<f64>,
) -> DVector<f64> {
    let mut e = DVector::zeros(p);
    e[0] = model.amplitude * (2.0 * PI * k as f64 / model.period).sin();
    let j = rng.random_range(0..3);
    e[j] += noise.sample(rng);
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn support(e: &DVector<f64>) -> usize {
        e.iter().filter(|x| **x != 0.0).count()
    }

    #[test]
    fn silent_mitm_is_zero() {
        let model = AttackModel {
            slope: 0.0,
            sigma_a: 0.0,
            ..AttackModel::mitm(1)
        };
        let seq = AttackGenerator::new(model, 5).unwrap().sequence(20);
        assert!(seq.iter().all(|e| e.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn mitm_first_step() {
        let mut gen = AttackGenerator::new(AttackModel::mitm(3), 5).unwrap();
        let e = gen.attack(0);
        assert!((e[0] - 0.05).abs() < 1e-15);
        assert_eq!(support(&e), 2);
    }

    #[test]
    fn mitm_random_channel_is_uniform() {
        let p = 5;
        let mut gen = AttackGenerator::new(AttackModel::mitm(17), p).unwrap();
        let mut counts = [0usize; 4];
        for k in 0..200 {
            let e = gen.attack(k);
            assert_eq!(support(&e), 2);
            let j = (1..p).find(|&j| e[j] != 0.0).unwrap();
            counts[j - 1] += 1;
        }
        let expected = 50.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99th percentile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 11.345, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn silent_gps_is_zero() {
        let model = AttackModel {
            amplitude: 0.0,
            sigma_a: 0.0,
            ..AttackModel::gps(1)
        };
        let seq = AttackGenerator::new(model, 5).unwrap().sequence(30);
        assert!(seq.iter().all(|e| e.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn gps_peak_at_quarter_period() {
        let model = AttackModel {
            sigma_a: 0.0,
            period: 40.0,
            amplitude: 2.5,
            ..AttackModel::gps(1)
        };
        let mut gen = AttackGenerator::new(model, 3).unwrap();
        let seq: Vec<_> = (0..=10).map(|k| gen.attack(k)).collect();
        assert!((seq[10][0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn gps_support_one_only_on_coincidence() {
        let model = AttackModel::gps(99);
        let p = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        let noise = Normal::new(0.0, model.sigma_a).unwrap();
        for k in 0..500 {
            // Replay the generator's own draws to learn the random channel.
            let e = gps_spoof_attack(&model, k, p, &mut rng.clone(), &noise);
            let channel = rng.random_range(0..3);
            let _ = noise.sample(&mut rng);
            let s = support(&e);
            assert!(s <= 2 && e.rows(3, p - 3).iter().all(|&x| x == 0.0));
            if (2.0 * PI * k as f64 / model.period).sin() == 0.0 {
                // k = 0: the sinusoid itself vanishes.
                assert_eq!(s, 1);
                continue;
            }
            assert!(s >= 1);
            assert_eq!(s == 1, channel == 0, "step {k}");
        }
    }

    #[test]
    fn seed_determinism() {
        let a = AttackGenerator::new(AttackModel::mitm(5), 5)
            .unwrap()
            .sequence(50);
        let b = AttackGenerator::new(AttackModel::mitm(5), 5)
            .unwrap()
            .sequence(50);
        let c = AttackGenerator::new(AttackModel::mitm(6), 5)
            .unwrap()
            .sequence(50);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn per_step_support_bound() {
        for model in [AttackModel::mitm(8), AttackModel::gps(8)] {
            let seq = AttackGenerator::new(model, 8).unwrap().sequence(300);
            assert!(seq.iter().all(|e| support(e) <= model.max_support()));
        }
    }

    #[test]
    fn validation() {
        assert!(AttackGenerator::new(AttackModel::mitm(0), 1).is_err());
        assert!(AttackGenerator::new(AttackModel::gps(0), 2).is_err());
        assert!(AttackGenerator::new(
            AttackModel {
                sigma_a: -1.0,
                ..AttackModel::mitm(0)
            },
            3
        )
        .is_err());
    }
}
