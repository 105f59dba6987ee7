use csi_src::classifier::{
    compute_weights, euclidean_distance, fuse_classify, knn_classify, src_classify, FusionMethod, InputMode, SrcModel,
};
use csi_src::solver::{NoiseLevel, SolverConfig};
use csi_src::{ActivityClass, BandDescriptor, CsiVector, Dictionary, LabeledSample, Sample};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2f64.sqrt()
}

fn unit(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn band(n: usize) -> BandDescriptor {
    BandDescriptor::new(5800.0, 20.0, n).unwrap()
}

fn basis(n: usize, k: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    v[k] = Complex64::new(1.0, 0.0);
    v
}

#[test]
fn two_class_orthonormal_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 8;
    let cols = vec![(ActivityClass::E, basis(n, 0)), (ActivityClass::L, basis(n, 1))];
    let dict = Dictionary::from_columns(&cols, true).unwrap();
    for _ in 0..100 {
        let y: Vec<Complex64> = basis(n, 1).into_iter().map(|v| v + cgauss(&mut rng) * 0.01 / (n as f64).sqrt()).collect();
        let (class, _) = src_classify(&dict, &CsiVector::new(y, band(n)).unwrap(), &SolverConfig::default()).unwrap();
        assert_eq!(class, ActivityClass::L);
    }
}

#[test]
fn orthogonal_query_ties_to_first_class() {
    let n = 4;
    let cols = vec![(ActivityClass::L, basis(n, 0)), (ActivityClass::SiB, basis(n, 1))];
    let dict = Dictionary::from_columns(&cols, true).unwrap();
    let y = CsiVector::new(basis(n, 3), band(n)).unwrap();
    let cfg = SolverConfig::default().with_epsilon(NoiseLevel::Absolute(0.01));
    let (class, res) = src_classify(&dict, &y, &cfg).unwrap();
    assert_eq!(class, ActivityClass::L);
    assert!(res.iter().all(|&r| (r - 1.0).abs() < 1e-9));
}

#[test]
fn voting_follows_the_majority_of_exact_atoms() {
    let n = 6;
    let cols = vec![(ActivityClass::StB, basis(n, 0)), (ActivityClass::WL, basis(n, 1))];
    let dict = Dictionary::from_columns(&cols, true).unwrap();
    let noise = |k: usize| basis(n, k).into_iter().map(|v| v * 0.5).collect::<Vec<_>>();
    let ys = [basis(n, 1), noise(4), basis(n, 1), noise(5), basis(n, 1)];
    let window: Vec<Sample> = ys
        .iter()
        .enumerate()
        .map(|(i, y)| Sample::new(CsiVector::new(y.clone(), band(n)).unwrap(), 20.0, i as u64).unwrap())
        .collect();
    let cfg = SolverConfig::default().with_epsilon(NoiseLevel::Relative(0.01));
    let got = fuse_classify(&dict, &window, FusionMethod::Voting, InputMode::Complex, &cfg).unwrap();
    assert_eq!(got, ActivityClass::WL);
}

fn random_model(rng: &mut ChaCha8Rng, n: usize) -> SrcModel {
    let cols: Vec<_> = ActivityClass::ALL
        .iter()
        .flat_map(|&c| (0..3).map(move |_| c))
        .map(|c| (c, (0..n).map(|_| cgauss(rng)).collect()))
        .collect();
    SrcModel::train(&cols, SolverConfig::default().with_epsilon(NoiseLevel::Relative(0.2))).unwrap()
}

#[test]
fn fusion_identities_on_random_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10;
    let model = random_model(&mut rng, n);
    for trial in 0..60 {
        let ws = if trial % 3 == 0 { 1 } else { rng.random_range(2..=5) };
        let window: Vec<Vec<Complex64>> = (0..ws).map(|_| (0..n).map(|_| cgauss(&mut rng)).collect()).collect();
        let snrs: Vec<f64> = (0..ws).map(|_| rng.random_range(0.0..30.0)).collect();
        let decisions = model.solve_window(&window).unwrap();
        let voting = model.fuse(&window, &snrs, &decisions, FusionMethod::Voting).unwrap();
        let sumup = model.fuse(&window, &snrs, &decisions, FusionMethod::Sumup).unwrap();
        let weighting = model.fuse(&window, &snrs, &decisions, FusionMethod::Weighting).unwrap();
        if ws == 1 {
            let single = model.classify(&window[0]).unwrap().class;
            assert_eq!((voting, sumup, weighting), (single, single, single));
        }
        let flat = vec![17.0; ws];
        assert_eq!(
            model.fuse(&window, &flat, &decisions, FusionMethod::Weighting).unwrap(),
            sumup
        );
    }
}

#[test]
fn scaling_observations_and_coefficients_keeps_the_decision() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10;
    let model = random_model(&mut rng, n);
    for _ in 0..20 {
        let window: Vec<Vec<Complex64>> = (0..3).map(|_| (0..n).map(|_| cgauss(&mut rng)).collect()).collect();
        let snrs = [10.0, 14.0, 9.0];
        let decisions = model.solve_window(&window).unwrap();
        let scaled_window: Vec<Vec<Complex64>> = window.iter().map(|y| y.iter().map(|v| v * 3.5).collect()).collect();
        let mut scaled = decisions.clone();
        for d in scaled.iter_mut() {
            d.x_hat.0 *= Complex64::new(3.5, 0.0);
        }
        for m in [FusionMethod::Sumup, FusionMethod::Weighting] {
            assert_eq!(
                model.fuse(&window, &snrs, &decisions, m).unwrap(),
                model.fuse(&scaled_window, &snrs, &scaled, m).unwrap()
            );
        }
    }
}

#[test]
fn knn_is_reproducible_and_exact_on_training_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 6;
    let training: Vec<LabeledSample> = (0..40)
        .map(|i| {
            let label = ActivityClass::ALL[i % 8];
            let v = unit((0..n).map(|_| cgauss(&mut rng)).collect());
            LabeledSample { sample: Sample::new(CsiVector::new(v, band(n)).unwrap(), 20.0, i as u64).unwrap(), label }
        })
        .collect();
    let probe = training[13].sample.clone();
    assert_eq!(
        knn_classify(&training, &[probe.clone()], 1, InputMode::Complex).unwrap(),
        training[13].label
    );
    let a = knn_classify(&training, &[probe.clone()], 5, InputMode::RealAmplitude).unwrap();
    let b = knn_classify(&training, &[probe], 5, InputMode::RealAmplitude).unwrap();
    assert_eq!(a, b);
    assert!(knn_classify(&training, &[training[0].sample.clone()], 41, InputMode::Complex).is_err());
    assert!(knn_classify(&training, &[training[0].sample.clone()], 0, InputMode::Complex).is_err());
}

proptest! {
    #[test]
    fn weights_are_a_shift_invariant_distribution(
        snrs in prop::collection::vec(-30.0f64..60.0, 1..12),
        shift in -50.0f64..50.0,
    ) {
        let w = compute_weights(&snrs).unwrap().0;
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|&x| x > 0.0));
        let shifted: Vec<f64> = snrs.iter().map(|s| s + shift).collect();
        let v = compute_weights(&shifted).unwrap().0;
        for (a, b) in w.iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn complex_distance_dominates_amplitude_distance(
        a in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..16),
        b in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..16),
    ) {
        let n = a.len().min(b.len());
        let a: Vec<Complex64> = a[..n].iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        let b: Vec<Complex64> = b[..n].iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        let amp = |v: &[Complex64]| InputMode::RealAmplitude.represent(v);
        prop_assert!(euclidean_distance(&a, &b) >= euclidean_distance(&amp(&a), &amp(&b)));
    }
}
