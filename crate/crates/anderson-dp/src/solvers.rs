//! Value iteration, relative value iteration, and their Anderson-accelerated
//! variants, plus the two error metrics used by the benchmark.

use crate::anderson::{accelerate_fixed_point, AlphaSolution};
use crate::error::{Error, Result};
use crate::mdp::{
    bellman_opt, exact_policy_value, greedy_policy, l1_norm, l1_norm_diff, Mdp, ValueFunction,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Vi,
    AndersonVi,
    RelativeVi,
    AndersonRelativeVi,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Vi => "vi",
            Algorithm::AndersonVi => "avi",
            Algorithm::RelativeVi => "rvi",
            Algorithm::AndersonRelativeVi => "arvi",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "vi" => Ok(Algorithm::Vi),
            "avi" => Ok(Algorithm::AndersonVi),
            "rvi" => Ok(Algorithm::RelativeVi),
            "arvi" => Ok(Algorithm::AndersonRelativeVi),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm '{other}' (expected vi|avi|rvi|arvi)"
            ))),
        }
    }

    /// True for the relative (anchored) family.
    pub fn is_relative(self) -> bool {
        matches!(self, Algorithm::RelativeVi | Algorithm::AndersonRelativeVi)
    }
}

/// Full iterate trace of one solver run.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub algorithm: Algorithm,
    /// Memory parameter; 0 labels the unaccelerated runs.
    pub m: usize,
    /// v_0 .. v_num_iters.
    pub iterates: Vec<ValueFunction>,
    /// Coefficient solves, one per accelerated step; None for plain runs.
    pub alpha_history: Option<Vec<AlphaSolution>>,
}

#[derive(Debug, Clone, Copy)]
pub struct RelativeViConfig {
    pub anchor_state: usize,
}

impl RelativeViConfig {
    fn check(&self, mdp: &Mdp) -> Result<()> {
        if self.anchor_state >= mdp.num_states() {
            return Err(Error::InvalidArgument(format!(
                "anchor state {} out of range for {} states",
                self.anchor_state,
                mdp.num_states()
            )));
        }
        Ok(())
    }
}

fn check_iters(num_iters: usize) -> Result<()> {
    if num_iters < 1 {
        return Err(Error::InvalidArgument("num_iters must be at least 1".into()));
    }
    Ok(())
}

fn check_finite(v: &[f64], iteration: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteIterate { iteration })
    }
}

/// Plain value iteration: v_{k+1} = T v_k.
pub fn value_iteration(mdp: &Mdp, v0: &ValueFunction, num_iters: usize) -> Result<SolverTrace> {
    check_iters(num_iters)?;
    let mut iterates = Vec::with_capacity(num_iters + 1);
    iterates.push(v0.clone());
    for k in 0..num_iters {
        let next = bellman_opt(mdp, &iterates[k])?;
        check_finite(&next, k + 1)?;
        iterates.push(next);
    }
    Ok(SolverTrace {
        algorithm: Algorithm::Vi,
        m: 0,
        iterates,
        alpha_history: None,
    })
}

/// Anderson-accelerated value iteration over the optimality operator.
pub fn anderson_vi(
    mdp: &Mdp,
    v0: &ValueFunction,
    m: usize,
    num_iters: usize,
    lambda_rel: f64,
) -> Result<SolverTrace> {
    check_iters(num_iters)?;
    let run = accelerate_fixed_point(
        |v| bellman_opt(mdp, &ValueFunction(v.to_vec())).map(|x| x.0),
        v0,
        m,
        num_iters,
        lambda_rel,
    )?;
    Ok(SolverTrace {
        algorithm: Algorithm::AndersonVi,
        m,
        iterates: run.iterates.into_iter().map(ValueFunction).collect(),
        alpha_history: Some(run.alpha_history),
    })
}

fn anchored_bellman(mdp: &Mdp, anchor: usize, v: &[f64]) -> Result<Vec<f64>> {
    let tv = bellman_opt(mdp, &ValueFunction(v.to_vec()))?;
    let shift = tv[anchor];
    Ok(tv.iter().map(|x| x - shift).collect())
}

/// Relative value iteration: v_{k+1} = T v_k - (T v_k)(s0) 1.
pub fn relative_value_iteration(
    mdp: &Mdp,
    v0: &ValueFunction,
    config: RelativeViConfig,
    num_iters: usize,
) -> Result<SolverTrace> {
    check_iters(num_iters)?;
    config.check(mdp)?;
    let mut iterates = Vec::with_capacity(num_iters + 1);
    iterates.push(v0.clone());
    for k in 0..num_iters {
        let next = anchored_bellman(mdp, config.anchor_state, &iterates[k])?;
        check_finite(&next, k + 1)?;
        iterates.push(ValueFunction(next));
    }
    Ok(SolverTrace {
        algorithm: Algorithm::RelativeVi,
        m: 0,
        iterates,
        alpha_history: None,
    })
}

/// Anderson acceleration of the anchored operator v -> Tv - (Tv)(s0) 1.
/// Mixing the anchored residuals keeps every iterate exactly zero at the
/// anchor state.
pub fn anderson_relative_vi(
    mdp: &Mdp,
    v0: &ValueFunction,
    config: RelativeViConfig,
    m: usize,
    num_iters: usize,
    lambda_rel: f64,
) -> Result<SolverTrace> {
    check_iters(num_iters)?;
    config.check(mdp)?;
    let run = accelerate_fixed_point(
        |v| anchored_bellman(mdp, config.anchor_state, v),
        v0,
        m,
        num_iters,
        lambda_rel,
    )?;
    Ok(SolverTrace {
        algorithm: Algorithm::AndersonRelativeVi,
        m,
        iterates: run.iterates.into_iter().map(ValueFunction).collect(),
        alpha_history: Some(run.alpha_history),
    })
}

/// ||v_star - v_k||_1 / ||v_star||_1.
pub fn normalized_error(v_star: &ValueFunction, v_k: &ValueFunction) -> Result<f64> {
    if v_star.len() != v_k.len() {
        return Err(Error::DimensionMismatch(format!(
            "v_star has length {}, v_k has length {}",
            v_star.len(),
            v_k.len()
        )));
    }
    let denom = l1_norm(v_star);
    if denom <= 0.0 {
        return Err(Error::InvalidArgument(
            "normalized error undefined for a zero optimal value".into(),
        ));
    }
    Ok(l1_norm_diff(v_star, v_k) / denom)
}

/// ||v_star - v_{pi_k}||_1 / ||v_star||_1 where pi_k is greedy on v_k.
pub fn greedy_policy_error(mdp: &Mdp, v_star: &ValueFunction, v_k: &ValueFunction) -> Result<f64> {
    let policy = greedy_policy(mdp, v_k)?;
    let v_pi = exact_policy_value(mdp, &policy)?;
    normalized_error(v_star, &v_pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garnet::{generate, GarnetSpec};
    use crate::mdp::{greedy_actions, inf_norm, inf_norm_diff, optimal_value_oracle, Mdp, Policy};
    use crate::rng::SplitMix64;

    fn garnet(num_states: usize, num_actions: usize, branching: usize, gamma: f64, seed: u64) -> Mdp {
        generate(&GarnetSpec {
            num_states,
            num_actions,
            branching,
            gamma,
            seed,
            ..GarnetSpec::default()
        })
        .unwrap()
    }

    fn zero_reward_mdp(n: usize) -> Mdp {
        let transitions = (0..n).map(|s| vec![((s + 1) % n, 1.0)]).collect();
        Mdp::new(n, 1, transitions, vec![0.0; n], 0.9).unwrap()
    }

    #[test]
    fn vi_stays_at_fixed_point() {
        let mdp = garnet(20, 3, 2, 0.9, 1);
        let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
        let trace = value_iteration(&mdp, &v_star, 20).unwrap();
        for it in &trace.iterates {
            assert!(inf_norm_diff(it, &v_star) < 1e-9);
        }
    }

    #[test]
    fn vi_zero_rewards_decays_geometrically() {
        let mdp = zero_reward_mdp(5);
        let v0 = ValueFunction(vec![1.0; 5]);
        let trace = value_iteration(&mdp, &v0, 10).unwrap();
        for (k, it) in trace.iterates.iter().enumerate() {
            assert!((inf_norm(it) - 0.9f64.powi(k as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn vi_satisfies_contraction_bound_to_optimum() {
        let mdp = garnet(30, 4, 3, 0.9, 7);
        let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
        let v0 = ValueFunction::zeros(30);
        let trace = value_iteration(&mdp, &v0, 100).unwrap();
        let initial = inf_norm_diff(&v0, &v_star);
        for (k, it) in trace.iterates.iter().enumerate() {
            assert!(inf_norm_diff(it, &v_star) <= 0.9f64.powi(k as i32) * initial + 1e-9);
        }
    }

    #[test]
    fn anderson_vi_first_step_unrolled() {
        use crate::anderson::{anderson_combine, solve_alpha, AndersonWindow};
        let mdp = garnet(15, 3, 2, 0.95, 3);
        let v0 = ValueFunction::zeros(15);
        let lambda_rel = 1e-8;
        let trace = anderson_vi(&mdp, &v0, 1, 2, lambda_rel).unwrap();

        let tv0 = bellman_opt(&mdp, &v0).unwrap();
        let v1 = tv0.clone();
        let tv1 = bellman_opt(&mdp, &v1).unwrap();
        let mut w = AndersonWindow::new(2);
        w.push(v0.0.clone(), tv0.0.clone()).unwrap();
        w.push(v1.0.clone(), tv1.0.clone()).unwrap();
        let cols: Vec<&[f64]> = w.entries().map(|e| e.residual.as_slice()).collect();
        let sol = solve_alpha(&cols, lambda_rel);
        let expected = anderson_combine(&w, &sol.alpha).unwrap();
        assert_eq!(trace.iterates[2].as_slice(), expected.as_slice());
    }

    #[test]
    fn anderson_vi_stays_near_fixed_point() {
        let mdp = garnet(20, 3, 2, 0.9, 11);
        let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
        let trace = anderson_vi(&mdp, &v_star, 3, 30, 1e-8).unwrap();
        for it in &trace.iterates {
            assert!(inf_norm_diff(it, &v_star) < 1e-8);
        }
    }

    #[test]
    fn anderson_beats_vi_on_affine_single_policy_mdps() {
        // |A| = 1 makes T affine, which is where the mixing rationale is
        // exact. Paired runs over random seeds.
        let mut wins = 0;
        for seed in 0..100u64 {
            let mdp = garnet(20, 1, 3, 0.95, seed);
            let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
            let v0 = ValueFunction::zeros(20);
            let plain = value_iteration(&mdp, &v0, 50).unwrap();
            let accel = anderson_vi(&mdp, &v0, 3, 50, 1e-8).unwrap();
            let e_plain = normalized_error(&v_star, &plain.iterates[50]).unwrap();
            let e_accel = normalized_error(&v_star, &accel.iterates[50]).unwrap();
            if e_accel <= e_plain {
                wins += 1;
            }
        }
        assert!(wins >= 95, "accelerated won only {wins}/100");
    }

    #[test]
    fn relative_vi_zero_rewards_collapses_to_zero() {
        let mdp = zero_reward_mdp(4);
        let trace = relative_value_iteration(
            &mdp,
            &ValueFunction(vec![2.0; 4]),
            RelativeViConfig { anchor_state: 0 },
            5,
        )
        .unwrap();
        for it in &trace.iterates[1..] {
            assert!(inf_norm(it) < 1e-12);
        }
    }

    #[test]
    fn relative_vi_iterates_are_anchored() {
        let mdp = garnet(25, 3, 2, 0.95, 13);
        let trace = relative_value_iteration(
            &mdp,
            &ValueFunction::zeros(25),
            RelativeViConfig { anchor_state: 0 },
            40,
        )
        .unwrap();
        for it in &trace.iterates[1..] {
            assert_eq!(it[0], 0.0);
        }
    }

    #[test]
    fn relative_vi_converges_to_shifted_optimum() {
        let mdp = garnet(50, 4, 3, 0.99, 17);
        let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
        let shifted: Vec<f64> = v_star.iter().map(|x| x - v_star[0]).collect();
        let trace = relative_value_iteration(
            &mdp,
            &ValueFunction::zeros(50),
            RelativeViConfig { anchor_state: 0 },
            5_000,
        )
        .unwrap();
        assert!(inf_norm_diff(trace.iterates.last().unwrap(), &shifted) < 1e-6);
    }

    #[test]
    fn anderson_relative_vi_zero_rewards() {
        let mdp = zero_reward_mdp(4);
        let trace = anderson_relative_vi(
            &mdp,
            &ValueFunction::zeros(4),
            RelativeViConfig { anchor_state: 0 },
            3,
            10,
            1e-8,
        )
        .unwrap();
        for it in &trace.iterates {
            assert!(inf_norm(it) < 1e-12);
        }
    }

    #[test]
    fn anderson_relative_vi_iterates_are_anchored() {
        let mdp = garnet(30, 3, 2, 0.97, 19);
        let trace = anderson_relative_vi(
            &mdp,
            &ValueFunction::zeros(30),
            RelativeViConfig { anchor_state: 0 },
            5,
            60,
            1e-8,
        )
        .unwrap();
        for it in &trace.iterates[1..] {
            assert_eq!(it[0], 0.0);
        }
    }

    #[test]
    fn anderson_relative_vi_stays_at_fixed_point() {
        let mdp = garnet(20, 3, 2, 0.9, 23);
        let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
        let shifted = ValueFunction(v_star.iter().map(|x| x - v_star[0]).collect());
        let trace = anderson_relative_vi(
            &mdp,
            &shifted,
            RelativeViConfig { anchor_state: 0 },
            10,
            30,
            1e-8,
        )
        .unwrap();
        for it in &trace.iterates {
            assert!(inf_norm_diff(it, &shifted) < 1e-8);
        }
    }

    #[test]
    fn normalized_error_examples() {
        let v_star = ValueFunction(vec![2.0, 2.0]);
        assert_eq!(normalized_error(&v_star, &v_star).unwrap(), 0.0);
        assert_eq!(
            normalized_error(&v_star, &ValueFunction::zeros(2)).unwrap(),
            1.0
        );
        assert_eq!(
            normalized_error(&v_star, &ValueFunction(vec![1.0, 3.0])).unwrap(),
            0.5
        );
        assert!(normalized_error(&ValueFunction::zeros(2), &v_star).is_err());
    }

    #[test]
    fn greedy_policy_error_examples() {
        let mdp = garnet(20, 3, 2, 0.9, 29);
        let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
        assert!(greedy_policy_error(&mdp, &v_star, &v_star).unwrap() < 1e-9);

        let single = garnet(10, 1, 2, 0.9, 31);
        let (vs, _) = optimal_value_oracle(&single).unwrap();
        let v_k = ValueFunction((0..10).map(|s| s as f64).collect());
        assert!(greedy_policy_error(&single, &vs, &v_k).unwrap() < 1e-9);
    }

    #[test]
    fn greedy_policy_error_is_shift_invariant_and_nonnegative() {
        let mut rng = SplitMix64::new(37);
        let mdp = garnet(15, 3, 2, 0.9, 37);
        let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
        for _ in 0..20 {
            let v_k = ValueFunction((0..15).map(|_| rng.next_f64() * 10.0 - 5.0).collect());
            let c = rng.next_f64() * 8.0 - 4.0;
            let shifted = ValueFunction(v_k.iter().map(|x| x + c).collect());
            let e = greedy_policy_error(&mdp, &v_star, &v_k).unwrap();
            let e_shift = greedy_policy_error(&mdp, &v_star, &shifted).unwrap();
            assert!(e >= 0.0);
            assert_eq!(e, e_shift);
        }
    }

    #[test]
    fn vi_and_relative_vi_share_greedy_policies() {
        let mdp = garnet(40, 4, 3, 0.98, 41);
        let v0 = ValueFunction::zeros(40);
        let vi = value_iteration(&mdp, &v0, 50).unwrap();
        let rvi = relative_value_iteration(&mdp, &v0, RelativeViConfig { anchor_state: 0 }, 50)
            .unwrap();
        for k in 0..=50 {
            assert_eq!(
                greedy_actions(&mdp, &vi.iterates[k]).unwrap(),
                greedy_actions(&mdp, &rvi.iterates[k]).unwrap()
            );
        }
    }

    #[test]
    fn invalid_anchor_and_iters_are_rejected() {
        let mdp = zero_reward_mdp(3);
        assert!(relative_value_iteration(
            &mdp,
            &ValueFunction::zeros(3),
            RelativeViConfig { anchor_state: 3 },
            5
        )
        .is_err());
        assert!(value_iteration(&mdp, &ValueFunction::zeros(3), 0).is_err());
    }

    #[test]
    fn greedy_error_uses_exact_policy_value() {
        let mdp = garnet(10, 2, 2, 0.9, 43);
        let (v_star, _) = optimal_value_oracle(&mdp).unwrap();
        let v_k = ValueFunction::zeros(10);
        let policy = greedy_policy(&mdp, &v_k).unwrap();
        let v_pi = exact_policy_value(&mdp, &policy).unwrap();
        let expected = normalized_error(&v_star, &v_pi).unwrap();
        assert_eq!(greedy_policy_error(&mdp, &v_star, &v_k).unwrap(), expected);
        let _ = Policy::deterministic(&[0; 10], 2).unwrap();
    }
}
