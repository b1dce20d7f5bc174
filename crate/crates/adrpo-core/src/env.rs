//! Synthetic 2-D environments: target distributions for pretraining the
//! reference flow, and reward specifications standing in for a learned
//! reward model.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target data distribution used to pretrain the reference velocity field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetDist {
    /// Same as the prior; the zero velocity field is already optimal.
    StandardNormal,
    Gaussian(GaussianSpec),
    Mixture(MixtureSpec),
    Ring(RingSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: [f64; 2],
    /// Standard deviation of the isotropic component.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub components: Vec<MixtureComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSpec {
    pub radius: f64,
    /// Radial noise standard deviation.
    pub sigma: f64,
}

impl TargetDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            TargetDist::StandardNormal => Ok(()),
            TargetDist::Gaussian(g) => {
                if g.sigma <= 0.0 {
                    return Err(Error::InvalidConfig(
                        "gaussian sigma must be positive".into(),
                    ));
                }
                Ok(())
            }
            TargetDist::Mixture(m) => {
                if m.components.is_empty() {
                    return Err(Error::InvalidConfig("mixture needs components".into()));
                }
                for c in &m.components {
                    if c.weight <= 0.0 || c.sigma <= 0.0 {
                        return Err(Error::InvalidConfig(
                            "mixture weights and sigmas must be positive".into(),
                        ));
                    }
                }
                Ok(())
            }
            TargetDist::Ring(r) => {
                if r.radius <= 0.0 || r.sigma < 0.0 {
                    return Err(Error::InvalidConfig("ring radius must be positive".into()));
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            TargetDist::StandardNormal => [rng.sample(StandardNormal), rng.sample(StandardNormal)],
            TargetDist::Gaussian(g) => {
                let n0: f64 = rng.sample(StandardNormal);
                let n1: f64 = rng.sample(StandardNormal);
                [g.mean[0] + g.sigma * n0, g.mean[1] + g.sigma * n1]
            }
            TargetDist::Mixture(m) => {
                let total: f64 = m.components.iter().map(|c| c.weight).sum();
                let mut pick = rng.random_range(0.0..total);
                let mut chosen = &m.components[m.components.len() - 1];
                for c in &m.components {
                    if pick < c.weight {
                        chosen = c;
                        break;
                    }
                    pick -= c.weight;
                }
                let n0: f64 = rng.sample(StandardNormal);
                let n1: f64 = rng.sample(StandardNormal);
                [
                    chosen.mean[0] + chosen.sigma * n0,
                    chosen.mean[1] + chosen.sigma * n1,
                ]
            }
            TargetDist::Ring(r) => {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let noise: f64 = rng.sample(StandardNormal);
                let rad = r.radius + r.sigma * noise;
                [rad * theta.cos(), rad * theta.sin()]
            }
        }
    }
}

/// Synthetic reward over generated points, conditioned on a context index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardEnv {
    TargetPoint(TargetPointEnv),
    Region(RegionEnv),
}

/// Reward `-(x - mu_c)^2`, maximal (zero) at the context's target point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetPointEnv {
    pub centers: Vec<[f64; 2]>,
    #[serde(default)]
    pub noise_sigma: f64,
}

/// Reward 1 inside the disk of `radius` around the context's center, else 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionEnv {
    pub centers: Vec<[f64; 2]>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_radius() -> f64 {
    1.0
}

impl RewardEnv {
    pub fn num_contexts(&self) -> usize {
        match self {
            RewardEnv::TargetPoint(e) => e.centers.len(),
            RewardEnv::Region(e) => e.centers.len(),
        }
    }

    pub fn noise_sigma(&self) -> f64 {
        match self {
            RewardEnv::TargetPoint(e) => e.noise_sigma,
            RewardEnv::Region(e) => e.noise_sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_contexts() == 0 {
            return Err(Error::InvalidConfig(
                "reward env needs at least one context".into(),
            ));
        }
        if self.noise_sigma() < 0.0 {
            return Err(Error::InvalidConfig(
                "noise_sigma must be nonnegative".into(),
            ));
        }
        if let RewardEnv::Region(e) = self {
            if e.radius <= 0.0 {
                return Err(Error::InvalidConfig(
                    "region radius must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Deterministic reward for `x1` under context `c`. Noise, when
    /// configured, is added by the trainer from its seeded stream.
    pub fn reward(&self, x1: &[f64; 2], c: usize) -> Result<f64> {
        let n = self.num_contexts();
        if c >= n {
            return Err(Error::UnknownContext {
                context: c,
                num_contexts: n,
            });
        }
        Ok(match self {
            RewardEnv::TargetPoint(e) => {
                let mu = e.centers[c];
                let dx = x1[0] - mu[0];
                let dy = x1[1] - mu[1];
                -(dx * dx + dy * dy)
            }
            RewardEnv::Region(e) => {
                let mu = e.centers[c];
                let dx = x1[0] - mu[0];
                let dy = x1[1] - mu[1];
                if (dx * dx + dy * dy).sqrt() <= e.radius {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_point_maximal_at_center() {
        let env = RewardEnv::TargetPoint(TargetPointEnv {
            centers: vec![[2.0, -1.0]],
            noise_sigma: 0.0,
        });
        assert_eq!(env.reward(&[2.0, -1.0], 0).unwrap(), 0.0);
        assert!(env.reward(&[2.5, -1.0], 0).unwrap() < 0.0);
    }

    #[test]
    fn region_reward_is_indicator() {
        let env = RewardEnv::Region(RegionEnv {
            centers: vec![[0.0, 0.0], [5.0, 5.0]],
            radius: 1.0,
            noise_sigma: 0.0,
        });
        assert_eq!(env.reward(&[0.0, 0.0], 0).unwrap(), 1.0);
        assert_eq!(env.reward(&[0.99, 0.0], 0).unwrap(), 1.0);
        assert_eq!(env.reward(&[1.01, 0.0], 0).unwrap(), 0.0);
        assert_eq!(env.reward(&[5.0, 5.0], 1).unwrap(), 1.0);
        assert_eq!(env.reward(&[0.0, 0.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn unknown_context_is_error() {
        let env = RewardEnv::Region(RegionEnv {
            centers: vec![[0.0, 0.0]],
            radius: 1.0,
            noise_sigma: 0.0,
        });
        assert!(matches!(
            env.reward(&[0.0, 0.0], 1),
            Err(Error::UnknownContext {
                context: 1,
                num_contexts: 1
            })
        ));
    }

    #[test]
    fn mixture_sampling_hits_all_components() {
        let dist = TargetDist::Mixture(MixtureSpec {
            components: vec![
                MixtureComponent {
                    weight: 1.0,
                    mean: [-3.0, 0.0],
                    sigma: 0.2,
                },
                MixtureComponent {
                    weight: 1.0,
                    mean: [3.0, 0.0],
                    sigma: 0.2,
                },
            ],
        });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut left = 0;
        for _ in 0..1000 {
            let p = dist.sample(&mut rng);
            if p[0] < 0.0 {
                left += 1;
            }
        }
        assert!(left > 350 && left < 650, "left count {left}");
    }

    #[test]
    fn ring_samples_lie_near_radius() {
        let dist = TargetDist::Ring(RingSpec {
            radius: 2.0,
            sigma: 0.05,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let p = dist.sample(&mut rng);
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 2.0).abs() < 0.5);
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(TargetDist::Gaussian(GaussianSpec {
            mean: [0.0, 0.0],
            sigma: 0.0
        })
        .validate()
        .is_err());
        assert!(RewardEnv::Region(RegionEnv {
            centers: vec![],
            radius: 1.0,
            noise_sigma: 0.0
        })
        .validate()
        .is_err());
    }
}
