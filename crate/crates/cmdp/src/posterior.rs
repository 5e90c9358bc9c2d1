//! Dirichlet belief over transition functions: symmetric prior, conjugate
//! Bayes updates, posterior sampling, and posterior mean.
//!
//! Counts are stored as integers next to the scalar prior concentration, so
//! visit counts are recovered exactly (float accumulation of alpha0 = 0.1
//! would drift). The concentration tensor alpha0 + N(s,a,s') is materialized
//! on demand.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("prior concentration must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("index ({s}, {a}, {s_next}) out of range for {n_states} states, {n_actions} actions")]
    IndexOutOfRange {
        s: usize,
        a: usize,
        s_next: usize,
        n_states: usize,
        n_actions: usize,
    },
    #[error("counts tensor has non-square state axes: {0}x{1}x{2}")]
    BadShape(usize, usize, usize),
}

/// Independent Dirichlet posterior per (s,a) row.
#[derive(Debug, Clone)]
pub struct DirichletPosterior {
    counts: Array3<u64>,
    prior_alpha: f64,
}

/// Symmetric Dirichlet prior with every concentration entry `alpha0`.
pub fn init_prior(
    n_states: usize,
    n_actions: usize,
    alpha0: f64,
) -> Result<DirichletPosterior, PosteriorError> {
    if !(alpha0 > 0.0) {
        return Err(PosteriorError::NonPositiveAlpha(alpha0));
    }
    Ok(DirichletPosterior {
        counts: Array3::zeros((n_states, n_actions, n_states)),
        prior_alpha: alpha0,
    })
}

impl DirichletPosterior {
    /// Reconstructs a posterior from previously accumulated counts.
    pub fn from_counts(counts: Array3<u64>, alpha0: f64) -> Result<Self, PosteriorError> {
        if !(alpha0 > 0.0) {
            return Err(PosteriorError::NonPositiveAlpha(alpha0));
        }
        let (s, a, s2) = counts.dim();
        if s != s2 {
            return Err(PosteriorError::BadShape(s, a, s2));
        }
        Ok(DirichletPosterior {
            counts,
            prior_alpha: alpha0,
        })
    }

    pub fn n_states(&self) -> usize {
        self.counts.dim().0
    }

    pub fn n_actions(&self) -> usize {
        self.counts.dim().1
    }

    pub fn prior_alpha(&self) -> f64 {
        self.prior_alpha
    }

    /// Conjugate update for one observed transition: the matching
    /// concentration entry grows by one.
    pub fn observe(&mut self, s: usize, a: usize, s_next: usize) -> Result<(), PosteriorError> {
        let (n_states, n_actions, _) = self.counts.dim();
        if s >= n_states || a >= n_actions || s_next >= n_states {
            return Err(PosteriorError::IndexOutOfRange {
                s,
                a,
                s_next,
                n_states,
                n_actions,
            });
        }
        self.counts[[s, a, s_next]] += 1;
        Ok(())
    }

    /// Concentration tensor alpha0 + N(s,a,s').
    pub fn alpha(&self) -> Array3<f64> {
        self.counts.mapv(|n| self.prior_alpha + n as f64)
    }

    /// Transition count N(s,a,s'), exactly.
    pub fn transition_count(&self, s: usize, a: usize, s_next: usize) -> u64 {
        self.counts[[s, a, s_next]]
    }

    /// Visit count N(s,a) = sum over destinations, exactly.
    pub fn visit_count(&self, s: usize, a: usize) -> u64 {
        self.counts
            .index_axis(ndarray::Axis(0), s)
            .index_axis(ndarray::Axis(0), a)
            .sum()
    }

    /// All N(s,a) at once.
    pub fn action_counts(&self) -> Array2<u64> {
        let (n_states, n_actions, _) = self.counts.dim();
        let mut out = Array2::zeros((n_states, n_actions));
        for s in 0..n_states {
            for a in 0..n_actions {
                out[[s, a]] = self.visit_count(s, a);
            }
        }
        out
    }

    /// Draws one transition tensor: each row independently Dirichlet via
    /// normalized Gamma draws. Deterministic given the generator state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Array3<f64> {
        let (n_states, n_actions, _) = self.counts.dim();
        let mut p = Array3::zeros((n_states, n_actions, n_states));
        for s in 0..n_states {
            for a in 0..n_actions {
                loop {
                    let mut total = 0.0;
                    for s2 in 0..n_states {
                        let shape = self.prior_alpha + self.counts[[s, a, s2]] as f64;
                        let gamma = Gamma::new(shape, 1.0)
                            .expect("positive shape by the prior invariant");
                        let x = gamma.sample(rng);
                        p[[s, a, s2]] = x;
                        total += x;
                    }
                    // All draws can underflow to zero for tiny shapes;
                    // redraw rather than divide by zero.
                    if total > 0.0 {
                        for s2 in 0..n_states {
                            p[[s, a, s2]] /= total;
                        }
                        break;
                    }
                }
            }
        }
        p
    }

    /// Posterior mean: row-normalized concentrations. Unvisited rows come
    /// out uniform, which keeps downstream planners well posed; this also
    /// serves as the empirical transition estimate with prior smoothing.
    pub fn mean(&self) -> Array3<f64> {
        let (n_states, n_actions, _) = self.counts.dim();
        let mut p = self.alpha();
        for s in 0..n_states {
            for a in 0..n_actions {
                let total: f64 = (0..n_states).map(|s2| p[[s, a, s2]]).sum();
                for s2 in 0..n_states {
                    p[[s, a, s2]] /= total;
                }
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_prior_is_symmetric() {
        let post = init_prior(2, 2, 0.1).unwrap();
        let alpha = post.alpha();
        assert_eq!(alpha.len(), 8);
        for &v in alpha.iter() {
            assert_abs_diff_eq!(v, 0.1, epsilon = 0.0);
        }
    }

    #[test]
    fn nonpositive_alpha_rejected() {
        assert!(matches!(
            init_prior(2, 2, 0.0),
            Err(PosteriorError::NonPositiveAlpha(_))
        ));
        assert!(matches!(
            init_prior(2, 2, -1.0),
            Err(PosteriorError::NonPositiveAlpha(_))
        ));
        assert!(matches!(
            init_prior(2, 2, f64::NAN),
            Err(PosteriorError::NonPositiveAlpha(_))
        ));
    }

    #[test]
    fn laplace_prior_mean_is_uniform() {
        let post = init_prior(3, 2, 1.0).unwrap();
        let mean = post.mean();
        for &v in mean.iter() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_state_sampling_is_point_mass() {
        let post = init_prior(1, 2, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            let p = post.sample(&mut rng);
            assert_abs_diff_eq!(p[[0, 0, 0]], 1.0, epsilon = 0.0);
            assert_abs_diff_eq!(p[[0, 1, 0]], 1.0, epsilon = 0.0);
        }
    }

    #[test]
    fn observe_increments_one_entry() {
        let mut post = init_prior(2, 2, 0.1).unwrap();
        post.observe(0, 1, 1).unwrap();
        let alpha = post.alpha();
        assert_abs_diff_eq!(alpha[[0, 1, 1]], 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(alpha[[0, 1, 0]], 0.1, epsilon = 0.0);
        assert_abs_diff_eq!(alpha[[0, 0, 0]], 0.1, epsilon = 0.0);
    }

    #[test]
    fn repeated_observations_accumulate_exactly() {
        let mut post = init_prior(2, 2, 0.1).unwrap();
        for _ in 0..10 {
            post.observe(1, 0, 0).unwrap();
        }
        assert_eq!(post.transition_count(1, 0, 0), 10);
        assert_eq!(post.visit_count(1, 0), 10);
        assert_abs_diff_eq!(post.alpha()[[1, 0, 0]], 10.1, epsilon = 1e-15);
    }

    #[test]
    fn observe_rejects_out_of_range() {
        let mut post = init_prior(2, 2, 0.1).unwrap();
        assert!(post.observe(2, 0, 0).is_err());
        assert!(post.observe(0, 2, 0).is_err());
        assert!(post.observe(0, 0, 2).is_err());
    }

    #[test]
    fn mean_follows_dirichlet_formula() {
        // k observations of s'=1 out of k from (s,a) at S=2:
        // mean(1|s,a) = (alpha0+k)/(2 alpha0 + k).
        let alpha0 = 0.1;
        let k = 7;
        let mut post = init_prior(2, 1, alpha0).unwrap();
        for _ in 0..k {
            post.observe(0, 0, 1).unwrap();
        }
        let mean = post.mean();
        let expected = (alpha0 + k as f64) / (2.0 * alpha0 + k as f64);
        assert_abs_diff_eq!(mean[[0, 0, 1]], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(mean[[0, 0, 0]] + mean[[0, 0, 1]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn concentrated_row_samples_near_point_mass() {
        let mut counts = Array3::zeros((2, 1, 2));
        counts[[0, 0, 0]] = 1_000_000_000;
        let post = DirichletPosterior::from_counts(counts, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = post.sample(&mut rng);
        assert_abs_diff_eq!(p[[0, 0, 0]], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(p[[0, 0, 1]], 0.0, epsilon = 1e-3);
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let mut post = init_prior(3, 2, 0.1).unwrap();
        post.observe(0, 0, 1).unwrap();
        post.observe(2, 1, 0).unwrap();
        let a = post.sample(&mut ChaCha8Rng::seed_from_u64(99));
        let b = post.sample(&mut ChaCha8Rng::seed_from_u64(99));
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn monte_carlo_mean_of_a_row() {
        // alpha = [1, 3] has mean [0.25, 0.75].
        let mut counts = Array3::zeros((2, 1, 2));
        counts[[0, 0, 1]] = 2;
        let post = DirichletPosterior::from_counts(counts, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += post.sample(&mut rng)[[0, 0, 0]];
        }
        assert_abs_diff_eq!(acc / n as f64, 0.25, epsilon = 0.01);
    }

    #[test]
    fn sparse_rows_sample_valid_distributions() {
        let post = init_prior(6, 2, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = post.sample(&mut rng);
            for s in 0..6 {
                for a in 0..2 {
                    let mut total = 0.0;
                    for s2 in 0..6 {
                        let v = p[[s, a, s2]];
                        assert!(v >= 0.0);
                        total += v;
                    }
                    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn posterior_mean_tracks_the_truth() {
        let truth = [0.3, 0.7];
        let mut post = init_prior(2, 1, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..10_000 {
            let u: f64 = rng.random();
            let s_next = usize::from(u >= truth[0]);
            post.observe(0, 0, s_next).unwrap();
        }
        let mean = post.mean();
        let l1 = (mean[[0, 0, 0]] - truth[0]).abs() + (mean[[0, 0, 1]] - truth[1]).abs();
        assert!(l1 < 0.05, "L1 distance {l1}");
    }

    #[test]
    fn subtracting_the_prior_recovers_empirical_frequencies() {
        let mut post = init_prior(2, 1, 0.1).unwrap();
        for _ in 0..3 {
            post.observe(0, 0, 0).unwrap();
        }
        for _ in 0..9 {
            post.observe(0, 0, 1).unwrap();
        }
        let alpha = post.alpha();
        let raw0 = alpha[[0, 0, 0]] - 0.1;
        let raw1 = alpha[[0, 0, 1]] - 0.1;
        assert_abs_diff_eq!(raw0 / (raw0 + raw1), 3.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(raw1 / (raw0 + raw1), 9.0 / 12.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        /// Total concentration above the prior equals the number of observe
        /// calls, as an exact integer.
        #[test]
        fn visit_count_recovery(obs in proptest::collection::vec((0usize..3, 0usize..2, 0usize..3), 0..200)) {
            let mut post = init_prior(3, 2, 0.1).unwrap();
            for &(s, a, s2) in &obs {
                post.observe(s, a, s2).unwrap();
            }
            let mut total: u64 = 0;
            for s in 0..3 {
                for a in 0..2 {
                    total += post.visit_count(s, a);
                }
            }
            prop_assert_eq!(total as usize, obs.len());
        }
    }
}
