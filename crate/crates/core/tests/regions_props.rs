use rand::Rng;
use tribc::channels::{make_example1, BroadcastChannel, Example1Params};
use tribc::entropy::Axis;
use tribc::polytope::{Inequality, Relation, DEFAULT_TOL};
use tribc::regions::*;
use tribc::rng::RngKey;
use tribc::{JointPmf, RateSystem};

const TOL: f64 = 1e-9;

fn ex1(d2: f64, d3: f64) -> Example1Params {
    Example1Params::new(0.125, 0.01, d2, d3).unwrap()
}

fn nem_family(d: f64, seeds: std::ops::Range<u64>) -> Vec<TestChannel> {
    let ch = make_example1(ex1(d, d)).unwrap();
    seeds
        .map(|s| random_test_channel(RegionKind::Nem, &ch, 0.125, FamilySpec::default(), RngKey::new(11, s, 0)).unwrap())
        .collect()
}

fn zero() -> RateTriple {
    RateTriple::new(0.0, 0.0, 0.0).unwrap()
}

fn random_point(rng: &mut impl Rng, scale: f64) -> RateTriple {
    RateTriple::new(rng.gen::<f64>() * scale, rng.gen::<f64>() * scale, rng.gen::<f64>() * scale).unwrap()
}

/// The system with every row loosened by `slack(row)`.
fn loosened(sys: &RateSystem, slack: impl Fn(&Inequality<tribc::polytope::Mixed>) -> f64) -> RateSystem {
    let mut out = RateSystem::new(sys.variables().iter().cloned());
    for v in sys.variables() {
        out.set_nonneg(v, sys.is_nonneg(v).unwrap()).unwrap();
    }
    for r in sys.rows() {
        let s = slack(r);
        let constant = match r.rel {
            Relation::Le => r.constant + s,
            Relation::Ge => r.constant - s,
            Relation::Eq => r.constant,
        };
        out.push_row(Inequality { coeffs: r.coeffs.clone(), rel: r.rel, constant }).unwrap();
    }
    out
}

fn l1(r: &Inequality<tribc::polytope::Mixed>) -> f64 {
    r.coeffs.iter().map(|c| (*c.numer() as f64 / *c.denom() as f64).abs()).sum()
}

/// Worst violation of the inequality rows at `x`.
fn violation(sys: &RateSystem, x: &[f64], slack: f64) -> bool {
    sys.rows().iter().filter(|r| r.rel != Relation::Eq).all(|r| {
        let lhs: f64 = r.coeffs.iter().zip(x).map(|(c, v)| *c.numer() as f64 / *c.denom() as f64 * v).sum();
        let room = slack * l1(r) + TOL;
        match r.rel {
            Relation::Le => lhs <= r.constant + room,
            _ => lhs >= r.constant - room,
        }
    })
}

/// Search the binning rates on a lattice of step `h`. At zero message rate
/// every other variable is pinned to zero by the links.
fn lattice_search(sys: &RateSystem, h: f64, steps: usize, slack: f64) -> bool {
    let vars = sys.variables();
    let s_idx: Vec<usize> = ["S1", "S2", "S3", "S12", "S23", "S31"]
        .iter()
        .map(|n| vars.iter().position(|v| v == n).unwrap())
        .collect();
    let mut x = vec![0.0; vars.len()];
    let total = (steps + 1).pow(s_idx.len() as u32);
    (0..total).any(|mut code| {
        for &i in &s_idx {
            x[i] = (code % (steps + 1)) as f64 * h;
            code /= steps + 1;
        }
        violation(sys, &x, slack)
    })
}

#[test]
fn nem_zero_rate_feasibility_matches_lattice_oracle() {
    let mut seen = [0usize; 2];
    for t in nem_family(0.2, 0..12) {
        let sys = nem_system(&t).unwrap();
        let at_zero = sys
            .substitute("R1", &0.0)
            .unwrap()
            .substitute("R2", &0.0)
            .unwrap()
            .substitute("R3", &0.0)
            .unwrap();
        let top = at_zero.rows().iter().filter(|r| r.rel == Relation::Le).map(|r| r.constant).fold(0.0, f64::max);
        let steps = 8;
        let h = top / steps as f64 + 1e-12;
        let member = nem_member(&t, zero(), TOL).unwrap();
        // a lattice point inside proves feasibility
        if lattice_search(&at_zero, h, steps, 0.0) {
            assert!(member);
        }
        // a feasible point rounds to a lattice point within h/2 per unit coefficient
        if member {
            assert!(lattice_search(&at_zero, h, steps, h / 2.0));
        }
        // and a lattice point within that slack means the loosened system is feasible
        if lattice_search(&at_zero, h, steps, h / 2.0) {
            assert!(loosened(&at_zero, |r| l1(r) * h / 2.0 + TOL).feasible(DEFAULT_TOL));
        }
        seen[member as usize] += 1;
    }
    assert!(seen[0] > 0 && seen[1] > 0, "{seen:?}");
}

/// Structured NEM channels: the Example-1 construction and its public-layer
/// variant. The random family's regions are nearly degenerate.
fn nem_structured() -> Vec<TestChannel> {
    let p = ex1(0.3, 0.3);
    vec![example1_nem_test_channel(p).unwrap(), example1_nem_public_test_channel(p).unwrap()]
}

#[test]
fn nem_membership_matches_projection() {
    let mut rng = RngKey::new(5, 0, 0).rng();
    let t = &nem_structured()[0];
    let proj = project_rates(&nem_system(t).unwrap()).unwrap();
    let mut inside = 0;
    for _ in 0..60 {
        let p = random_point(&mut rng, 0.6);
        let m = nem_member(t, p, TOL).unwrap();
        assert_eq!(m, evaluate_rates(&proj, p, TOL).unwrap(), "{p}");
        inside += m as usize;
    }
    assert!(inside > 0 && inside < 60, "{inside}");
}

#[test]
fn nem_is_downward_closed() {
    let mut rng = RngKey::new(6, 0, 0).rng();
    let mut members = 0;
    for t in nem_structured() {
        for _ in 0..4 {
            // walk out along a random direction to the boundary, then sample below it
            let d = random_point(&mut rng, 1.0);
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..8 {
                let mid = 0.5 * (lo + hi);
                if nem_member(&t, d.scaled([mid; 3]), TOL).unwrap() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let p = d.scaled([lo; 3]);
            for _ in 0..5 {
                members += 1;
                let s = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
                assert!(nem_member(&t, p.scaled(s), TOL).unwrap(), "{p} scaled by {s:?}");
            }
            assert!(!nem_member(&t, d.scaled([hi; 3]), TOL).unwrap());
        }
    }
    assert!(members > 0);
}

#[test]
fn theorem2_point_outside_every_sampled_nem_channel() {
    let params = ex1(0.15, 0.15);
    assert!(theorem2_holds(0.125, 0.01, 0.15, 0.15).unwrap());
    let point = lemma1_point(0.125, 0.01, 0.15, 0.15).unwrap();
    for t in nem_family(0.15, 0..100) {
        assert!(!nem_member(&t, point, TOL).unwrap());
    }
    // the structured channels agree
    assert!(!nem_member(&example1_nem_test_channel(params).unwrap(), point, TOL).unwrap());
    assert!(!nem_member(&example1_nem_public_test_channel(params).unwrap(), point, TOL).unwrap());
}

#[test]
fn beta1_paths_on_random_channels() {
    let ch = make_example1(ex1(0.2, 0.2)).unwrap();
    let mut rng = RngKey::new(9, 0, 0).rng();
    let mut total = Beta1Comparison::default();
    for s in 0..20 {
        let t =
            random_test_channel(RegionKind::Beta1, &ch, 0.125, FamilySpec::default(), RngKey::new(12, s, 0)).unwrap();
        let points: Vec<RateTriple> = (0..100).map(|_| random_point(&mut rng, 0.6)).collect();
        let c = beta1_compare(&t, &points, TOL).unwrap();
        assert_eq!(c.points, 100);
        total = total.merge(c);
        // the raw projection is downward closed
        let proj = project_rates(&beta1_raw_system(&t).unwrap()).unwrap();
        for p in &points {
            if evaluate_rates(&proj, *p, TOL).unwrap() {
                let q = p.scaled([rng.gen(), rng.gen(), rng.gen()]);
                assert!(evaluate_rates(&proj, q, TOL).unwrap());
            }
        }
    }
    eprintln!("beta1 agreement {:.4} ({total:?})", total.agreement_rate());
    assert_eq!(total.points, 2000);
}

#[test]
fn beta1_lemma1_point_shrinks_with_noise() {
    // the point stays inside as the decoder noise it was tuned for
    for d in [0.15, 0.2, 0.3, 0.4] {
        let t = example1_beta1_test_channel(ex1(d, d)).unwrap();
        let p = lemma1_point(0.125, 0.01, d, d).unwrap();
        assert!(beta1_member(&t, p, TOL).unwrap(), "delta = {d}");
        // and leaves once the channels to users 2, 3 get noisier
        let worse = example1_beta1_test_channel(ex1(d + 0.05, d + 0.05)).unwrap();
        assert!(!beta1_member(&worse, p, TOL).unwrap(), "delta = {d}");
    }
}

/// A full-coset test channel with every `U` constant and random private
/// codebooks `V1, V2, V3` driving the Example-1 input bits.
fn constant_coset_channel(seed: u64) -> TestChannel {
    let mut rng = RngKey::new(seed, 0, 0).rng();
    let ch: BroadcastChannel = make_example1(ex1(0.1 + 0.3 * rng.gen::<f64>(), 0.1 + 0.3 * rng.gen::<f64>())).unwrap();
    let mut axes: Vec<Axis> = ["U12", "U13", "U21", "U23", "U31", "U32"].iter().map(|n| Axis::new(*n, 2)).collect();
    axes.extend(["V1", "V2", "V3"].iter().map(|n| Axis::new(*n, 2)));
    let w: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() + 0.05).collect();
    // V1 = 1 is the costly input; keep its mass below tau
    // row-major over nine binary axes: the V bits are the last three
    let weights: Vec<f64> = (0..512usize)
        .map(|k| if k >> 3 != 0 { 0.0 } else { w[k] * if k & 4 != 0 { 0.1 } else { 1.0 } })
        .collect();
    let joint = JointPmf::from_weights(axes, weights).unwrap();
    let joint = joint.with_derived_axis("X", 8, |i| 4 * i[6] + 2 * i[7] + i[8]).unwrap();
    let fields = ["U12", "U13", "U21", "U23", "U31", "U32"].iter().map(|n| (n.to_string(), 2)).collect();
    let tau = joint.marginal(&["V1"]).unwrap().probs()[1] + 1e-6;
    TestChannel::new(joint, ch, fields, tau).unwrap()
}

#[test]
fn betaf_constant_cosets_reduce_to_private_region() {
    let mut rng = RngKey::new(13, 0, 0).rng();
    let mut inside = 0;
    for seed in 0..4 {
        let t = constant_coset_channel(seed);
        let full = t.with_outputs().unwrap();
        let info: Vec<f64> =
            (1..=3).map(|j| full.mutual_info(&[format!("V{j}")], &[format!("Y{j}")]).unwrap()).collect();
        let h = |b: &[usize]| -> f64 {
            let names: Vec<String> = b.iter().map(|j| format!("V{j}")).collect();
            full.entropy(&names).unwrap()
        };
        for _ in 0..20 {
            // draw inside the box of single-user rates so both outcomes occur
            let u = random_point(&mut rng, 1.0).as_array();
            let p = RateTriple::new(u[0] * info[0], u[1] * info[1], u[2] * info[2]).unwrap();
            let r = p.as_array();
            let mut want = (0..3).all(|j| r[j] <= info[j] + TOL);
            for b in 1..8usize {
                let set: Vec<usize> = (1..=3).filter(|j| b >> (j - 1) & 1 == 1).collect();
                let room: f64 = set.iter().map(|&j| info[j - 1] - r[j - 1]).sum();
                let need: f64 = set.iter().map(|&j| h(&[j])).sum::<f64>() - h(&set);
                want &= room >= need - TOL;
            }
            assert_eq!(betaf_member(&t, p, TOL).unwrap(), want, "{p}");
            inside += want as usize;
        }
    }
    assert!(inside > 0);
}

#[test]
fn betaf_is_downward_closed() {
    let ch = make_example1(ex1(0.2, 0.2)).unwrap();
    let mut rng = RngKey::new(14, 0, 0).rng();
    for s in 0..4 {
        let t = random_test_channel(RegionKind::BetaF, &ch, 0.125, FamilySpec::default(), RngKey::new(15, s, 0))
            .unwrap();
        for _ in 0..10 {
            let p = random_point(&mut rng, 0.2);
            if betaf_member(&t, p, TOL).unwrap() {
                assert!(betaf_member(&t, p.scaled([rng.gen(), rng.gen(), rng.gen()]), TOL).unwrap());
            }
        }
    }
}
