use approx::assert_relative_eq;

use scalemix::certificate::{ConditionPath, Verdict};
use scalemix::checker::{
    certify, check_eq_fail, check_haar_existence, check_monotone_ratio, check_nested_integral, search_monotone_ratio,
    trace_bound_zero_origin, verify_surrogate_limits, Dims, FailVerdict, SurrogateG, SEARCH_ETA, SEARCH_RHO, SEARCH_TAU,
};
use scalemix::mixing::{CustomDensity, MixingDensity, MomentVerdict};
use scalemix::quadrature::ShellVerdict;

#[test]
fn inverted_gamma_family_surrogate() {
    for (alpha, gamma) in [(0.6, 1.0), (2.0, 1.0), (4.5, 0.3)] {
        let h = MixingDensity::inverted_gamma(alpha, gamma).unwrap();
        let g = SurrogateG::new(1.0, -(alpha + 1.0)).unwrap();
        // the ratio increases where γ > −2u log u
        assert!(check_monotone_ratio(&h, g, 0.01).passed(), "alpha = {alpha}");
    }
}

#[test]
fn log_normal_ratio_constant() {
    let (mu, gamma) = (-0.7, 1.3);
    let h = MixingDensity::log_normal(mu, gamma).unwrap();
    let g = SurrogateG::new(1.0 / (2.0 * gamma), mu / gamma - 1.0).unwrap();
    assert!(check_monotone_ratio(&h, g, 0.1).passed());
}

#[test]
fn gamma_fails_every_search_triple() {
    let h = MixingDensity::gamma(2.0, 2.0).unwrap();
    for rho in SEARCH_RHO {
        for tau in SEARCH_TAU {
            for eta in SEARCH_ETA {
                let g = SurrogateG::new(rho, tau).unwrap();
                assert!(!check_monotone_ratio(&h, g, eta).passed(), "({rho}, {tau}, {eta})");
            }
        }
    }
    assert!(search_monotone_ratio(&h).found.is_none());
}

#[test]
fn gig_and_frechet_family_surrogates() {
    let v = 1.7;
    let h = MixingDensity::gig(v, 0.8, 1.5).unwrap();
    assert!(check_monotone_ratio(&h, SurrogateG::new(1.0, v - 1.0).unwrap(), 0.1).passed());
    assert!(search_monotone_ratio(&h).found.is_some());
    let alpha = 1.4;
    let h = MixingDensity::frechet(alpha, 2.0).unwrap();
    assert!(check_monotone_ratio(&h, SurrogateG::new(1.0, -(alpha + 1.0)).unwrap(), 0.1).passed());
    assert!(search_monotone_ratio(&h).found.is_some());
}

#[test]
fn nested_integral_verdicts() {
    let ig = MixingDensity::inverted_gamma(2.0, 1.0).unwrap();
    assert_eq!(check_nested_integral(&ig, 2, 1.5, 0.1).unwrap().verdict, ShellVerdict::Finite);
    let g = MixingDensity::gamma(2.0, 2.0).unwrap();
    assert_eq!(check_nested_integral(&g, 2, 1.5, 0.1).unwrap().verdict, ShellVerdict::Divergent);
    let c = MixingDensity::custom(CustomDensity::iterated_log(2)).unwrap();
    for zeta in [1.1, 1.5, 1.9] {
        assert_eq!(check_nested_integral(&c, 2, zeta, 0.1).unwrap().verdict, ShellVerdict::Divergent);
    }
    assert!(check_nested_integral(&ig, 2, 2.0, 0.1).is_err());
}

#[test]
fn divergence_diagnostic_verdicts() {
    let c = MixingDensity::custom(CustomDensity::iterated_log(2)).unwrap();
    assert_eq!(check_eq_fail(&c, 2).verdict, FailVerdict::FailHolds);
    let g = MixingDensity::student_t(4.0).unwrap();
    assert_eq!(check_eq_fail(&g, 1).verdict, FailVerdict::FailHolds);
    let ig = MixingDensity::inverted_gamma(2.0, 1.0).unwrap();
    assert_eq!(check_eq_fail(&ig, 2).verdict, FailVerdict::FailRefuted);
}

#[test]
fn uniform_trace_bound_closed_form() {
    let h = MixingDensity::custom(CustomDensity::uniform(1.0, 2.0)).unwrap();
    let (n, a) = (6usize, 1.5);
    let b = trace_bound_zero_origin(&h, Dims::new(n, 2, 1, a)).unwrap();
    let total = 2.0 / 3.0 * (2f64.powf(1.5) - 1.0);
    let j = 2.0 / 3.0 * (1.5f64.powf(1.5) - 1.0);
    assert_relative_eq!(total, 1.2190, max_relative = 1e-4);
    assert_relative_eq!(j, 0.5581, max_relative = 1e-3);
    assert_relative_eq!(b.j, j, max_relative = 1e-8);
    let want = 2f64.powf((n as f64 + 2.0 * a - 2.0) / 2.0) * (total / j).powi(n as i32);
    assert_relative_eq!(b.bound, want, max_relative = 1e-7);
}

#[test]
fn haar_existence_cases() {
    for d in 1..=3 {
        let a = (d as f64 + 1.0) / 2.0;
        let f = MixingDensity::frechet(0.3, 1.0).unwrap();
        let r = check_haar_existence(&f, 8, d, a, None);
        assert!(r.automatic && r.exists());
    }
    let g = MixingDensity::gamma(2.0, 2.0).unwrap();
    // (d + 1 − 2a) d / 2 = 2 and E[u²] = k(k + 1)/r² for Gamma(k, r)
    let r = check_haar_existence(&g, 5, 2, 0.5, None);
    assert_eq!(r.exponent, 2.0);
    match r.moment {
        MomentVerdict::Finite(m) => assert_relative_eq!(m, 1.5, max_relative = 1e-10),
        other => panic!("{other:?}"),
    }
    // exponent (d + 1 − 2a) d / 2 = 1.5 ≥ α = 1.2
    let f = MixingDensity::frechet(1.2, 1.0).unwrap();
    let r = check_haar_existence(&f, 8, 2, 0.25, None);
    assert!(!r.exists());
}

#[test]
fn surrogate_limits_fast_decay() {
    for tau in [-3.0, 0.0, 3.0] {
        let r = verify_surrogate_limits(SurrogateG::new(2.0, tau).unwrap(), 2);
        assert!(r.passed(), "{r:?}");
    }
}

#[test]
fn surrogate_limits_slow_decay_still_decreasing() {
    // ρ = 1: the sequences go to zero like u^{2ρ log(3/2)} (log u)³, which is
    // still ~1e-4 at u = 1e-10
    let r = verify_surrogate_limits(SurrogateG::new(1.0, 0.0).unwrap(), 2);
    assert!(r.bounded_non_decreasing && r.tails_decreasing);
    assert!(!r.below_threshold);
    let last = r.l2_sequence.last().unwrap().abs();
    let at_1e10 = r.l2_sequence[8].abs();
    assert!(last < at_1e10);
}

#[test]
fn certify_examples() {
    let dims = Dims::new(15, 2, 2, 1.0);
    let c = certify(&MixingDensity::inverted_gamma(1.5, 2.0).unwrap(), dims);
    assert_eq!(c.verdict, Verdict::TraceClass);
    // threshold (15 − 2 + 2 − 2 − 1)/2 = 6; ν/2 − 1 = 7 exceeds it
    let c = certify(&MixingDensity::student_t(16.0).unwrap(), dims);
    assert_eq!((c.verdict, c.path), (Verdict::GeometricallyErgodic, ConditionPath::OriginPower));
    let c = certify(&MixingDensity::student_t(10.0).unwrap(), dims);
    assert_eq!(c.verdict, Verdict::NotApplicable);
    assert!(c.evidence.iter().any(|e| e.detail.contains("hypothesis unmet")));
    let c = certify(&MixingDensity::custom(CustomDensity::iterated_log(2)).unwrap(), dims);
    assert_eq!((c.verdict, c.path), (Verdict::NotApplicable, ConditionPath::EqFail));
}
