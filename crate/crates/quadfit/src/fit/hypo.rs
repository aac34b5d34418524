//! Multi-hypothesis viewpoint machinery: four azimuth hypotheses, one per
//! quadrant, with learned scores estimating each hypothesis's expected
//! reconstruction loss.

use super::FitConfig;
use crate::autodiff::Real;
use crate::harness::rng::Rng;

/// Four viewpoint hypotheses. Each azimuth is reparameterized through a
/// sigmoid onto its quadrant [90k, 90(k+1)) degrees, so it can never leave
/// its assigned quadrant; scores sigma_k track realized reconstruction
/// losses.
#[derive(Clone, Debug)]
pub struct HypothesisSet {
    pub az_raw: [f64; 4],
    pub scores: [f64; 4],
}

impl HypothesisSet {
    pub fn new() -> Self {
        HypothesisSet {
            az_raw: [0.0; 4], // sigmoid(0) = 0.5: quadrant centers
            scores: [0.0; 4],
        }
    }

    /// Azimuth of hypothesis `k` in radians given its raw parameter.
    pub fn azimuth_rad<R: Real>(k: usize, raw: R) -> R {
        let start = 90.0 * k as f64;
        (raw.sigmoid().scale(90.0).add_const(start)).scale(std::f64::consts::PI / 180.0)
    }

    pub fn azimuth_degrees(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = Self::azimuth_rad(k, self.az_raw[k]).to_degrees();
        }
        out
    }

    /// Lowest-score hypothesis, ties to the lower index.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for k in 1..4 {
            if self.scores[k] < self.scores[best] {
                best = k;
            }
        }
        best
    }
}

impl Default for HypothesisSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Probability of sampling uniformly instead of exploiting argmin sigma:
/// 1 until `explore_until`, then linear decay to `explore_floor` by the
/// discriminator-window start; exploration stops entirely once the
/// learning-rate decay begins (the polish phase only exploits).
pub fn explore_probability(iteration: usize, config: &FitConfig) -> f64 {
    let f = iteration as f64 / config.iterations.max(1) as f64;
    if f >= config.lr_decay_from {
        return 0.0;
    }
    let decay_end = config.disc_window.0.max(config.explore_until + 1e-9);
    if f < config.explore_until {
        1.0
    } else if f >= decay_end {
        config.explore_floor
    } else {
        let t = (f - config.explore_until) / (decay_end - config.explore_until);
        1.0 + t * (config.explore_floor - 1.0)
    }
}

/// With probability `explore_probability` picks uniformly among the four
/// hypotheses, otherwise the argmin-score one.
pub fn sample_hypothesis(
    hset: &HypothesisSet,
    iteration: usize,
    config: &FitConfig,
    rng: &mut Rng,
) -> usize {
    let p = explore_probability(iteration, config);
    if rng.uniform() < p {
        rng.below(4)
    } else {
        hset.best()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_iterations_sample_uniformly() {
        // chi-square test over 10^4 draws at 3 dof; critical value at
        // alpha = 0.01 is 11.345
        let config = FitConfig {
            iterations: 10_000,
            ..Default::default()
        };
        let hset = HypothesisSet {
            az_raw: [0.0; 4],
            scores: [5.0, 1.0, 3.0, 2.0], // argmin would always pick 1
        };
        let mut rng = Rng::new(42);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[sample_hypothesis(&hset, 0, &config, &mut rng)] += 1;
        }
        let expect = n as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        assert!(chi2 < 11.345, "chi^2 {} counts {:?}", chi2, counts);
    }

    #[test]
    fn late_iterations_exploit_argmin() {
        let config = FitConfig {
            iterations: 1000,
            explore_floor: 0.2,
            ..Default::default()
        };
        let hset = HypothesisSet {
            az_raw: [0.0; 4],
            scores: [1.0, 2.0, 3.0, 4.0],
        };
        let mut rng = Rng::new(7);
        let n = 5000;
        let picks = (0..n)
            .filter(|_| sample_hypothesis(&hset, 900, &config, &mut rng) == 0)
            .count();
        // 0.8 exploit + 0.2 * 1/4 explore = 0.85 expected
        assert!(picks as f64 / n as f64 >= 0.8, "picked argmin {} of {}", picks, n);
    }

    #[test]
    fn fixed_seed_reproduces_sequence() {
        let config = FitConfig {
            iterations: 100,
            ..Default::default()
        };
        let hset = HypothesisSet::new();
        let seq = |seed: u64| -> Vec<usize> {
            let mut rng = Rng::new(seed);
            (0..50)
                .map(|i| sample_hypothesis(&hset, i, &config, &mut rng))
                .collect()
        };
        assert_eq!(seq(9), seq(9));
        assert_ne!(seq(9), seq(10));
    }

    #[test]
    fn azimuths_stay_in_their_quadrants() {
        for k in 0..4 {
            for raw in [-50.0, -1.0, 0.0, 2.0, 50.0] {
                let az = HypothesisSet::azimuth_rad(k, raw).to_degrees();
                assert!(az >= 90.0 * k as f64 && az <= 90.0 * (k + 1) as f64);
            }
        }
    }

    #[test]
    fn explore_schedule_shape() {
        let config = FitConfig {
            iterations: 1000,
            explore_until: 0.0075,
            explore_floor: 0.2,
            disc_window: (0.10, 0.375),
            ..Default::default()
        };
        assert_eq!(explore_probability(0, &config), 1.0);
        assert_eq!(explore_probability(7, &config), 1.0);
        let mid = explore_probability(50, &config);
        assert!(mid < 1.0 && mid > 0.2);
        assert_eq!(explore_probability(200, &config), 0.2);
        assert_eq!(explore_probability(650, &config), 0.2);
        // the polish phase (after the lr decay point) only exploits
        assert_eq!(explore_probability(999, &config), 0.0);
    }
}
