use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use tribc::entropy::binary_entropy;
use tribc::gelfand_pinsker::*;
use tribc::rng::RngKey;

fn search() -> GPSearch {
    GPSearch { restarts: 8, ..GPSearch::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn alpha_t_sits_between_the_bounds(tau in 0.05f64..0.45, delta in 0.02f64..0.45, eps in 0.0f64..1.0) {
        let inst = GPInstance::new(tau, delta, eps).unwrap();
        let t = alpha_t(&inst, &search()).unwrap();
        prop_assert!(t.value <= alpha_tr(&inst).unwrap() + 1e-9);
        prop_assert!(t.value >= independent_input_bound(&inst).unwrap() - 1e-9);
        // the witness is a certified member achieving the value
        let w = GPDistribution::new(inst, t.witness.joint.clone()).unwrap();
        prop_assert!((w.objective().unwrap() - t.value).abs() < 1e-9);
    }
}

#[test]
fn alpha_tr_matches_direct_evaluation() {
    // I(X;Y|S) at the product input law, computed from the joint
    for (t, d, e) in [(0.125, 0.01, 0.3), (0.3, 0.2, 0.7), (0.05, 0.4, 0.5)] {
        let inst = GPInstance::new(t, d, e).unwrap();
        let mut q = [[0.0; 8]; 2];
        for row in &mut q {
            row[0] = 1.0 - t;
            row[3] = t;
        }
        let p = GPDistribution::from_conditional(inst, &q).unwrap();
        let direct = p.joint.cond_mutual_info(&["X"], &["Y"], &["S"]).unwrap();
        assert!((direct - alpha_tr(&inst).unwrap()).abs() < 1e-12);
        let flags = no_rate_loss_report(&p, 1e-9).unwrap();
        assert!(flags.tr_optimal_marginal);
    }
}

#[test]
fn rate_loss_on_a_coarse_grid() {
    for tau in [0.1, 0.3] {
        for delta in [0.05, 0.2] {
            for eps in [0.3, 0.7] {
                let inst = GPInstance::new(tau, delta, eps).unwrap();
                let (gap, _) = rate_loss_gap(&inst, &search()).unwrap();
                assert!(gap > 1e-4, "{inst:?}: gap {gap}");
            }
        }
    }
}

#[test]
fn sampled_members_never_meet_every_no_rate_loss_condition() {
    let mut rng = RngKey::new(21, 0, 0).rng();
    let mut seen = 0;
    while seen < 1000 {
        let inst = GPInstance::new(0.05 + 0.4 * rng.gen::<f64>(), 0.02 + 0.45 * rng.gen::<f64>(), 0.05 + 0.9 * rng.gen::<f64>())
            .unwrap();
        // random encoder: half the draws deterministic in (U, S)
        let deterministic = rng.gen::<bool>();
        let mut q = [[0.0; 8]; 2];
        for row in &mut q {
            for u in 0..4 {
                let w: f64 = rng.gen();
                if deterministic {
                    row[2 * u + rng.gen_range(0..2)] = w;
                } else {
                    let a: f64 = rng.gen();
                    row[2 * u] = w * a;
                    row[2 * u + 1] = w * (1.0 - a);
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let Ok(p) = GPDistribution::from_conditional(inst, &q) else { continue };
        seen += 1;
        assert!(!no_rate_loss_report(&p, 1e-9).unwrap().all(), "{inst:?}");
    }
}

#[test]
fn proposition_holds_on_random_instances() {
    let mut labels = BTreeMap::new();
    for k in 0..20 {
        let key = RngKey::new(31, k, 0);
        let mut rng = key.rng();
        let inst = GPInstance::new(
            0.01 + 0.48 * rng.gen::<f64>(),
            0.01 + 0.48 * rng.gen::<f64>(),
            0.05 + 0.9 * rng.gen::<f64>(),
        )
        .unwrap();
        let Prop1Outcome::Refuted(cert) = prop1_refute(&inst, 1e-9).unwrap() else {
            panic!("feasible map at {inst:?}");
        };
        assert_eq!(cert.cases.len(), 256);
        for c in &cert.cases {
            assert!((1..=7).contains(&c.case));
            *labels.entry((c.case, c.violation.to_string())).or_insert(0usize) += 1;
        }
    }
    eprintln!("{labels:?}");
}

#[test]
fn entropy_gap_is_tiny_near_the_noiseless_limit() {
    let inst = GPInstance::new(0.2, 1e-6, 0.5).unwrap();
    let tr = alpha_tr(&inst).unwrap();
    assert!((tr - binary_entropy(0.2).unwrap()).abs() < 1e-4);
}
