//! Randomized invariants: information measures, rate-distortion structure,
//! and capacity frontier containment.

use proptest::prelude::*;
use twoway::prob::Alphabet;
use twoway::rd::{conditional_rd, standard_rd, wz_rd, DistortionMatrix, RdQuery};
use twoway::twc::{shannon_inner_frontier, shannon_outer_frontier, SearchOptions, TwcChannel};
use twoway::{Cond, Joint, Pmf, Real};

fn pmf_strategy(n: usize) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(1e-3..1.0f64, n).prop_map(move |w| {
        let s: Real = w.iter().sum();
        Pmf::new(Alphabet::new(w.len()), w.iter().map(|x| x / s).collect()).unwrap()
    })
}

fn joint_strategy(n1: usize, n2: usize) -> impl Strategy<Value = Joint> {
    prop::collection::vec(1e-4..1.0f64, n1 * n2).prop_map(move |w| {
        let s: Real = w.iter().sum();
        Joint::new(
            vec![Alphabet::new(n1), Alphabet::new(n2)],
            w.iter().map(|x| x / s).collect(),
        )
        .unwrap()
    })
}

fn kernel_strategy(n_in: usize, n_out: usize) -> impl Strategy<Value = Cond> {
    prop::collection::vec(1e-3..1.0f64, n_in * n_out).prop_map(move |w| {
        let rows: Vec<Option<Vec<Real>>> = (0..n_in)
            .map(|g| {
                let row = &w[g * n_out..(g + 1) * n_out];
                let s: Real = row.iter().sum();
                Some(row.iter().map(|x| x / s).collect())
            })
            .collect();
        Cond::from_rows(vec![Alphabet::new(n_in)], vec![Alphabet::new(n_out)], rows).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mutual_information_consistent_with_entropies(j in joint_strategy(3, 4)) {
        let mi = j.mutual_information(&[0], &[1], &[]).unwrap();
        let h0 = j.marginal_pmf(0).unwrap().entropy();
        let h1 = j.marginal_pmf(1).unwrap().entropy();
        prop_assert!((mi - (h0 + h1 - j.entropy())).abs() < 1e-10);
        prop_assert!(mi >= -1e-12);
        // Subadditivity of entropy, the same fact from the other side.
        prop_assert!(j.entropy() <= h0 + h1 + 1e-10);
    }

    #[test]
    fn data_processing_cannot_create_information(
        j in joint_strategy(3, 3),
        k in kernel_strategy(3, 4),
    ) {
        // A – B – C with C drawn from B through the kernel.
        let abc = j.compose(&k, &[1]).unwrap();
        let i_ab = abc.mutual_information(&[0], &[1], &[]).unwrap();
        let i_ac = abc.mutual_information(&[0], &[2], &[]).unwrap();
        prop_assert!(i_ac <= i_ab + 1e-10, "I(A;C) = {i_ac} > I(A;B) = {i_ab}");
    }

    #[test]
    fn marginalization_commutes(j in joint_strategy(3, 4), k in kernel_strategy(4, 2)) {
        let abc = j.compose(&k, &[1]).unwrap();
        let direct = abc.marginalize(&[0]).unwrap();
        let staged = abc.marginalize(&[0, 2]).unwrap().marginalize(&[0]).unwrap();
        prop_assert!(direct.l1_distance(&staged).unwrap() < 1e-12);
    }

    #[test]
    fn rd_curve_is_monotone_and_convex(p in pmf_strategy(3), d in 0.02..0.3f64) {
        let dm = DistortionMatrix::hamming(3);
        let r = |t: Real| standard_rd(&p, &dm, &RdQuery::at(t)).unwrap().rate;
        let (a, b, c) = (r(d), r(d + 0.1), r(d + 0.2));
        prop_assert!(a >= b - 1e-6 && b >= c - 1e-6, "not monotone: {a} {b} {c}");
        prop_assert!(b <= 0.5 * (a + c) + 1e-6, "not convex: {a} {b} {c}");
    }

    #[test]
    fn side_information_orders_the_three_rd_functions(j in joint_strategy(2, 3), d in 0.0..0.25f64) {
        let dm = DistortionMatrix::hamming(2);
        let q = RdQuery::at(d);
        let standard = standard_rd(&j.marginal_pmf(0).unwrap(), &dm, &q).unwrap().rate;
        let wz = wz_rd(&j, &dm, 3, &q).unwrap().rate;
        let cond = conditional_rd(&j, &dm, &q).unwrap().rate;
        prop_assert!(cond <= wz + 2e-3, "conditional {cond} above WZ {wz}");
        prop_assert!(wz <= standard + 2e-3, "WZ {wz} above standard {standard}");
    }

    #[test]
    fn inner_frontier_lies_inside_the_outer(e1 in 0.0..0.4f64, e2 in 0.0..0.4f64) {
        let ch = TwcChannel::additive(e1, e2).unwrap();
        let opts = SearchOptions {
            weight_steps: 11,
            grid_step: 0.1,
            refine_rounds: 40,
            multistarts: 4,
            seed: 5,
        };
        let inner = shannon_inner_frontier(&ch, &opts);
        let outer = shannon_outer_frontier(&ch, &opts);
        for p in &inner.points {
            prop_assert!(
                outer.cover_slack(p.rates.r1, p.rates.r2) > -1e-6,
                "inner point ({}, {}) escapes the outer region",
                p.rates.r1,
                p.rates.r2
            );
        }
    }
}
