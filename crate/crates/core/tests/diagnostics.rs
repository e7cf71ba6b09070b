use pbi_core::diagnostics::{mmd2, ppc_replicates, ppc_replicates_multi, test_stat, upper_fraction, Bandwidth, PpcOptions, PpcReport, Sided, TestFunction, TieRule};
use pbi_core::engines::GaussianFactory;
use pbi_core::experiments::ks_uniform;
use pbi_core::measures::{mean_of, variance_of, Sample};
use pbi_core::resampler::HorizonRule;
use pbi_core::rng::StreamKey;
use pbi_core::Error;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn normal_sample(n: usize, key: StreamKey) -> Sample {
    let mut rng = key.rng();
    Sample::new((0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
}

proptest! {
    #[test]
    fn self_fitted_chi2_is_n(v in prop::collection::vec(-20.0f64..20.0, 2..60)) {
        prop_assume!(variance_of(&v) > 1e-6);
        let s = Sample::from_slice(&v).unwrap();
        let chi2 = test_stat(&TestFunction::Chi2 { fit: None }, &s, None).unwrap();
        prop_assert!((chi2 - v.len() as f64).abs() < 1e-9 * v.len() as f64);
    }

    #[test]
    fn mmd_of_a_sample_with_itself_is_zero(v in prop::collection::vec(-20.0f64..20.0, 1..60), h in 0.01f64..10.0) {
        prop_assert_eq!(mmd2(&v, &v, Bandwidth::Fixed(h)), 0.0);
        prop_assert_eq!(mmd2(&v, &v, Bandwidth::MedianHeuristic), 0.0);
    }

    #[test]
    fn skewness_is_shift_and_scale_invariant(v in prop::collection::vec(-20.0f64..20.0, 3..60), a in -5.0f64..5.0, b in 0.1f64..5.0) {
        prop_assume!(variance_of(&v) > 1e-3);
        let s = Sample::from_slice(&v).unwrap();
        let t = Sample::new(v.iter().map(|x| a + b * x).collect()).unwrap();
        let (g1, g2) = (test_stat(&TestFunction::SampleSkewness, &s, None).unwrap(), test_stat(&TestFunction::SampleSkewness, &t, None).unwrap());
        prop_assert!((g1 - g2).abs() < 1e-8);
    }
}

#[test]
fn tie_rules_and_sidedness() {
    let reps = [1.0, 2.0, 2.0, 3.0];
    assert_eq!(upper_fraction(2.0, &reps, TieRule::GreaterEqual), 0.75);
    assert_eq!(upper_fraction(2.0, &reps, TieRule::Midrank), 0.5);
    let two = PpcReport::from_stats("v".into(), 10, 0, 2.5, reps.to_vec(), vec![], Sided::Two, TieRule::GreaterEqual);
    assert_eq!((two.u, two.p), (0.25, 0.5));
    let one = PpcReport::from_stats("t".into(), 10, 0, 2.5, reps.to_vec(), vec![], Sided::One, TieRule::GreaterEqual);
    assert_eq!(one.p, 0.25);
}

#[test]
fn two_sample_tests_need_a_reference() {
    let s = Sample::from_slice(&[1.0, 2.0, 3.0]).unwrap();
    assert!(matches!(test_stat(&TestFunction::Wasserstein1, &s, None), Err(Error::MissingReference(_))));
    assert!(matches!(test_stat(&TestFunction::Mmd(Bandwidth::MedianHeuristic), &s, None), Err(Error::MissingReference(_))));
}

#[test]
fn too_few_replicates_rejected() {
    let x = normal_sample(30, StreamKey::new(1));
    let opts = PpcOptions { replicates: 10, ..PpcOptions::default() };
    assert!(ppc_replicates(&x, &GaussianFactory::default(), &TestFunction::SampleVariance, &opts, StreamKey::new(2)).is_err());
}

#[test]
fn skewness_u_is_roughly_uniform_when_well_specified() {
    let root = StreamKey::new(42).named("uniformity");
    let u: Vec<f64> = (0..200u64)
        .map(|r| {
            let x = normal_sample(100, root.child(r));
            ppc_replicates(&x, &GaussianFactory::default(), &TestFunction::SampleSkewness, &PpcOptions::default(), root.child(r).named("ppc")).unwrap().u
        })
        .collect();
    let ks = ks_uniform(&u);
    assert!(ks < 0.12, "KS distance {ks}");
}

#[test]
fn variance_delta_matches_its_exact_expectation() {
    // E[σ_M | σ_n] = σ_n·n(M+1)/((n+1)M) for the unbiased-mean, ML-variance recursion
    let (n, reps) = (100usize, 200u64);
    let m = (n + HorizonRule::Power(1.5).horizon(n).unwrap()) as f64;
    let nf = n as f64;
    let root = StreamKey::new(42).named("delta");
    let gaps: Vec<f64> = (0..reps)
        .map(|r| {
            let x = normal_sample(n, root.child(r));
            let report = ppc_replicates(&x, &GaussianFactory::default(), &TestFunction::SampleVariance, &PpcOptions::default(), root.child(r).named("ppc")).unwrap();
            let expected = nf.sqrt() * x.variance() * (nf * (m + 1.0) / ((nf + 1.0) * m) - 1.0);
            report.mean_delta() - expected
        })
        .collect();
    let se = (variance_of(&gaps) / gaps.len() as f64).sqrt();
    assert!(mean_of(&gaps).abs() < 4.0 * se, "{} ± {se}", mean_of(&gaps));
}

#[test]
fn gamma_data_fail_the_skewness_check() {
    let mut rng = StreamKey::new(3).rng();
    let g = rand_distr::Gamma::new(2.0, 0.5).unwrap();
    let x = Sample::new((0..150).map(|_| g.sample(&mut rng)).collect()).unwrap();
    let tfs = [TestFunction::SampleSkewness, TestFunction::SampleVariance, TestFunction::Wasserstein1, TestFunction::Mmd(Bandwidth::MedianHeuristic)];
    let reports = ppc_replicates_multi(&x, &GaussianFactory::default(), &tfs, &PpcOptions::default(), StreamKey::new(4)).unwrap();
    assert!(reports[0].p < 0.01, "skewness p = {}", reports[0].p);
    assert!(reports[0].mean_delta() < 0.0);
    assert_eq!(reports[3].test_function, "mmd");
    for r in &reports {
        assert_eq!(r.s_rep.len(), 100);
        assert_eq!(r.deltas.len(), 100);
        assert!((0.0..=1.0).contains(&r.p));
    }
}
