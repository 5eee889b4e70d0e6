//! Float and exact backends must tell the same story at desk scale:
//! identical convergence rounds and componentwise agreement within 1e-9
//! at every round of every run.

use netbayes::engine::{default_max_rounds, run};
use netbayes::graph::{make_family, Family};
use netbayes::scalar::{Rational, Scalar};

#[test]
fn traces_agree_on_all_small_families() {
    let mut cases: Vec<(Family, usize, u64)> = Vec::new();
    for family in [Family::Clique, Family::Path, Family::Cycle, Family::Star, Family::Btree] {
        for n in family.min_n().max(2)..=10 {
            cases.push((family, n, 0));
        }
    }
    for seed in 0..4 {
        cases.push((Family::RegularRandom, 8, seed));
        cases.push((Family::RegularRandom, 10, seed));
    }

    for (family, n, seed) in cases {
        let degree = (family == Family::RegularRandom).then_some(3);
        let g = make_family(family, n, degree, seed).unwrap();
        let exact = run::<Rational>(&g, default_max_rounds(&g)).unwrap();
        let float = run::<f64>(&g, default_max_rounds(&g)).unwrap();
        assert_eq!(
            exact.t_last_change, float.t_last_change,
            "{family} n={n} seed={seed}: convergence rounds differ"
        );
        assert_eq!(exact.t_all_equal, float.t_all_equal);
        for (re, rf) in exact.rounds.iter().zip(&float.rounds) {
            for (ae, af) in re.agents.iter().zip(&rf.agents) {
                let diff = ae.beta.to_float().max_abs_diff_f64(&af.beta);
                assert!(
                    diff < 1e-9,
                    "{family} n={n} seed={seed} round {} agent {}: drift {diff:e}",
                    re.t,
                    ae.id
                );
                let tau_diff = (Scalar::to_f64(&ae.tau_sq) - af.tau_sq).abs();
                assert!(tau_diff < 1e-9);
            }
        }
    }
}
