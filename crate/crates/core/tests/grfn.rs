mod common;

use common::{random_grfn, rng};
use dpsurv_core::grfn::oracle::{mc_oracle_contour, mc_oracle_pl, mc_oracle_pl_outside};
use dpsurv_core::grfn::{combine, GrfnError};
use dpsurv_core::special::normal_cdf;
use dpsurv_core::{Grfn, Interval, MixtureGrfn};
use rand::Rng;

#[test]
fn interval_plausibility_and_belief_match_monte_carlo() {
    let mut r = rng(101);
    for case in 0..50 {
        let g = random_grfn(&mut r);
        let x = r.random_range(-4.0..3.0);
        let y = x + r.random_range(0.01..3.0);
        let iv = Interval::closed(x, y).unwrap();
        let mc_pl = mc_oracle_pl(&g, &iv, 200_000, case);
        assert!((g.pl(&iv) - mc_pl).abs() <= 1e-2, "case {case}: pl {} vs {mc_pl}", g.pl(&iv));
        let mc_bel = 1.0 - mc_oracle_pl_outside(&g, x, y, 200_000, 1000 + case);
        assert!((g.bel(&iv) - mc_bel).abs() <= 1e-2, "case {case}: bel {} vs {mc_bel}", g.bel(&iv));
    }
}

#[test]
fn contour_matches_monte_carlo() {
    let mut r = rng(102);
    for case in 0..20 {
        let g = random_grfn(&mut r);
        let x = r.random_range(-4.0..4.0);
        assert!((g.contour(x) - mc_oracle_contour(&g, x, 100_000, case)).abs() < 1e-2);
    }
}

#[test]
fn halfline_gap_is_the_contour() {
    let mut r = rng(103);
    for _ in 0..1000 {
        let g = random_grfn(&mut r);
        let x = r.random_range(-6.0..6.0);
        assert!((g.pl_halfline(x) - g.bel_halfline(x) - g.contour(x)).abs() <= 1e-12);
    }
}

#[test]
fn large_precision_recovers_gaussian_probabilities() {
    let g = Grfn::new(0.3, 1.7, 1e8).unwrap();
    let s = g.sigma();
    for i in 0..20 {
        let x = -3.0 + 0.25 * i as f64;
        let y = x + 0.5 + 0.1 * i as f64;
        let p = normal_cdf((y - 0.3) / s) - normal_cdf((x - 0.3) / s);
        let iv = Interval::closed(x, y).unwrap();
        assert!((g.pl(&iv) - p).abs() <= 1e-3);
        assert!((g.bel(&iv) - p).abs() <= 1e-3);
    }
}

#[test]
fn zero_precision_is_vacuous() {
    let g = Grfn::new(1.0, 2.0, 0.0).unwrap();
    for i in 0..25 {
        let x = -5.0 + 0.4 * i as f64;
        let iv = Interval::closed(x, x + 0.3 * (i + 1) as f64).unwrap();
        assert_eq!(g.bel(&iv), 0.0);
        assert_eq!(g.pl(&iv), 1.0);
    }
    for alpha in [0.01, 0.5, 0.99] {
        assert!(matches!(g.bpi(alpha), Err(GrfnError::UnattainableLevel { .. })));
    }
}

#[test]
fn bpi_reaches_its_level_and_contains_the_ppi() {
    let mut r = rng(104);
    for _ in 0..200 {
        let g = random_grfn(&mut r);
        for alpha in [0.1, 0.5, 0.9] {
            let bpi = g.bpi(alpha).unwrap();
            assert!((g.bel(&bpi) - alpha).abs() < 1e-8);
            assert!(bpi.contains_interval(&g.ppi(alpha).unwrap()));
        }
    }
}

#[test]
fn mixture_bel_and_pl_are_weighted_sums() {
    let mut r = rng(105);
    for _ in 0..100 {
        let comps: Vec<Grfn> = (0..3).map(|_| random_grfn(&mut r)).collect();
        let raw: Vec<f64> = (0..3).map(|_| r.random_range(0.1..1.0)).collect();
        let tot: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / tot).collect();
        let m = MixtureGrfn::new(w.clone(), comps.clone()).unwrap();
        let x = r.random_range(-3.0..3.0);
        let iv = Interval::closed(x, x + 1.0).unwrap();
        let bel: f64 = w.iter().zip(&comps).map(|(w, g)| w * g.bel(&iv)).sum();
        let pl: f64 = w.iter().zip(&comps).map(|(w, g)| w * g.pl(&iv)).sum();
        assert!((m.bel(&iv) - bel).abs() < 1e-12);
        assert!((m.pl(&iv) - pl).abs() < 1e-12);
    }
}

#[test]
fn combination_pools_by_weighted_precision() {
    let a = Grfn::new(0.0, 1.0, 2.0).unwrap();
    let b = Grfn::new(2.0, 0.5, 1.0).unwrap();
    let g = combine(&[(1.0, a), (0.5, b)]).unwrap();
    let (wa, wb) = (2.0, 0.5);
    assert!((g.mu() - (wa * 0.0 + wb * 2.0) / (wa + wb)).abs() < 1e-15);
    assert!((g.sigma2() - (wa * wa * 1.0 + wb * wb * 0.5) / (wa + wb).powi(2)).abs() < 1e-15);
    assert!((g.h() - (wa + wb)).abs() < 1e-15);
}
