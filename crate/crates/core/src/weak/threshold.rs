use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the threshold means "weakly fake".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Fake iff statistic > τ.
    Above,
    /// Fake iff statistic < τ.
    Below,
}

impl Direction {
    pub fn label(self, stat: f64, tau: f64) -> u8 {
        u8::from(match self {
            Direction::Above => stat > tau,
            Direction::Below => stat < tau,
        })
    }
}

pub const GRID_STEPS: usize = 200;
pub const MIN_FIT_ITEMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub tau: f64,
    pub accuracy: f64,
    /// Every statistic was identical, so no threshold separates anything.
    pub degenerate: bool,
}

fn accuracy(stats: &[f64], labels: &[u8], dir: Direction, tau: f64) -> f64 {
    let hits = stats
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| dir.label(s, tau) == y)
        .count();
    hits as f64 / stats.len() as f64
}

/// Grid search over `τ ∈ {0, 0.005, …, 1}` for the best agreement with the
/// clean labels; ties go to the smallest τ.
pub fn fit_threshold(stats: &[f64], labels: &[u8], dir: Direction) -> Result<ThresholdFit> {
    if stats.len() != labels.len() {
        return Err(Error::Dimension {
            segment: "threshold labels".into(),
            expected: stats.len(),
            actual: labels.len(),
        });
    }
    if stats.len() < MIN_FIT_ITEMS {
        return Err(Error::InsufficientClean {
            required: MIN_FIT_ITEMS,
            available: stats.len(),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidLabel(y));
    }
    if stats.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("labeling statistic".into()));
    }
    if stats.iter().all(|&s| s == stats[0]) {
        let tau = stats[0];
        log::warn!("all labeling statistics equal {tau}; threshold fit is degenerate");
        return Ok(ThresholdFit {
            tau,
            accuracy: accuracy(stats, labels, dir, tau),
            degenerate: true,
        });
    }
    let mut best = ThresholdFit {
        tau: 0.0,
        accuracy: f64::NEG_INFINITY,
        degenerate: false,
    };
    for i in 0..=GRID_STEPS {
        let tau = i as f64 / GRID_STEPS as f64;
        let acc = accuracy(stats, labels, dir, tau);
        if acc > best.accuracy {
            best.tau = tau;
            best.accuracy = acc;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated_statistic_hits_smallest_grid_point_in_band() {
        let stats = [0.1, 0.2, 0.3, 0.35, 0.39, 0.61, 0.7, 0.8, 0.9, 0.95];
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let fit = fit_threshold(&stats, &labels, Direction::Above).unwrap();
        assert_eq!(fit.accuracy, 1.0);
        assert_eq!(fit.tau, 0.39);
        let below = fit_threshold(&stats, &labels.map(|y| 1 - y), Direction::Below).unwrap();
        assert_eq!(below.accuracy, 1.0);
        assert_eq!(below.tau, 0.395);
    }

    #[test]
    fn matches_exhaustive_search_on_crossing_fixture() {
        let stats = [0.05, 0.12, 0.2, 0.26, 0.33, 0.41, 0.47, 0.58, 0.66, 0.72];
        let labels = [0, 0, 1, 0, 0, 1, 1, 0, 1, 1];
        let fit = fit_threshold(&stats, &labels, Direction::Above).unwrap();
        let mut best = (f64::MIN, 0.0);
        for i in 0..=200 {
            let tau = i as f64 / 200.0;
            let acc = stats
                .iter()
                .zip(&labels)
                .filter(|(s, y)| u8::from(**s > tau) == **y)
                .count() as f64
                / 10.0;
            if acc > best.0 {
                best = (acc, tau);
            }
        }
        assert_eq!((fit.accuracy, fit.tau), best);
        assert_eq!(fit.accuracy, 0.8);
    }

    #[test]
    fn degenerate_and_small_inputs() {
        let fit = fit_threshold(&[0.3; 12], &[1; 12], Direction::Above).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.tau, 0.3);
        assert!(fit_threshold(&[0.1; 5], &[0; 5], Direction::Above).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_at_least_majority_share(
            items in prop::collection::vec((0.0f64..1.0, 0u8..2), 10..60),
        ) {
            let (stats, labels): (Vec<f64>, Vec<u8>) = items.into_iter().unzip();
            let ones = labels.iter().filter(|&&y| y == 1).count();
            let majority = ones.max(labels.len() - ones) as f64 / labels.len() as f64;
            for dir in [Direction::Above, Direction::Below] {
                let fit = fit_threshold(&stats, &labels, dir).unwrap();
                // τ = 1 (Above) or τ = 0 (Below) labels everything 0, while
                // the opposite end labels everything 1 unless a statistic
                // sits exactly on the boundary.
                let all_zero = (labels.len() - ones) as f64 / labels.len() as f64;
                prop_assert!(fit.accuracy >= all_zero);
                if stats.iter().all(|&s| s > 0.0 && s < 1.0) {
                    prop_assert!(fit.accuracy >= majority);
                }
            }
        }
    }
}
