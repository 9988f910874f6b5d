use proptest::prelude::*;

use xlamaml::autodiff::Var;
use xlamaml::episodes::sample_language_subsets;
use xlamaml::metatrain::{inner_adapt, meta_gradient};
use xlamaml::params::{ParamSet, ParamVars};
use xlamaml::seed;
use xlamaml::tensor::Tensor;
use xlamaml::Result;

fn scalar(v: f64) -> ParamSet {
    [("w".to_string(), Tensor::scalar(v))].into_iter().collect()
}

fn quad(a: f64, c: f64) -> impl Fn(&ParamVars) -> Result<Var> {
    move |p: &ParamVars| {
        let d = p.get("w")?.add_scalar(-c);
        Ok(d.mul(&d)?.scale(0.5 * a))
    }
}

fn w(grads: &ParamSet) -> f64 {
    grads.get("w").unwrap().item().unwrap()
}

proptest! {
    #[test]
    fn k_inner_steps_match_closed_form(
        a in 0.1f64..2.0, b in 0.1f64..2.0, s in -2.0f64..2.0, q in -2.0f64..2.0,
        alpha in 0.0f64..0.4, theta in -2.0f64..2.0, steps in 1usize..5,
    ) {
        let r = (1.0 - alpha * a).powi(steps as i32);
        let adapted = s + r * (theta - s);
        let tasks = [(quad(a, s), quad(b, q))];
        let second = meta_gradient(&scalar(theta), &tasks, alpha, steps, false).unwrap();
        prop_assert!((w(&second.grads) - b * (adapted - q) * r).abs() < 1e-10);
        let first = meta_gradient(&scalar(theta), &tasks, alpha, steps, true).unwrap();
        prop_assert!((w(&first.grads) - b * (adapted - q)).abs() < 1e-10);
        let (out, _) = inner_adapt(&scalar(theta).to_vars(), quad(a, s), alpha, steps, true).unwrap();
        prop_assert!((out.get("w").unwrap().item().unwrap() - adapted).abs() < 1e-12);
    }

    #[test]
    fn meta_gradient_is_additive_over_tasks(
        params in prop::collection::vec((0.1f64..2.0, 0.1f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 1..5),
        alpha in 0.0f64..0.4, theta in -2.0f64..2.0,
    ) {
        let tasks: Vec<_> = params.iter().map(|&(a, b, s, q)| (quad(a, s), quad(b, q))).collect();
        let joint = w(&meta_gradient(&scalar(theta), &tasks, alpha, 1, false).unwrap().grads);
        let separate: f64 = params
            .iter()
            .map(|&(a, b, s, q)| w(&meta_gradient(&scalar(theta), &[(quad(a, s), quad(b, q))], alpha, 1, false).unwrap().grads))
            .sum();
        prop_assert!((joint - separate).abs() < 1e-10);
    }

    #[test]
    fn language_subsets_are_distinct_members_of_their_pools(
        s_pool in 1usize..5, q_pool in 1usize..6, seed_value in any::<u64>(),
    ) {
        let support: Vec<String> = (0..s_pool).map(|i| format!("s{i}")).collect();
        let query: Vec<String> = (0..q_pool).map(|i| format!("q{i}")).collect();
        let sizes = (1 + seed_value as usize % s_pool, 1 + (seed_value >> 8) as usize % q_pool);
        let mut rng = seed::rng(seed_value);
        let (s, q) = sample_language_subsets(&support, &query, sizes, &mut rng).unwrap();
        prop_assert_eq!((s.len(), q.len()), sizes);
        for (subset, pool) in [(&s, &support), (&q, &query)] {
            let mut sorted = subset.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), subset.len());
            prop_assert!(subset.iter().all(|l| pool.contains(l)));
        }
        prop_assert!(sample_language_subsets(&support, &query, (s_pool + 1, 1), &mut rng).is_err());
    }
}
