use proptest::prelude::*;
use unifront::analysis::*;
use unifront::dsp::{default_padding, frequency_response, gammatone_filterbank, hann_window, FilterBank, FilterOrigin};
use unifront::tensor::Tensor;
use unifront::RandomSource;

const SR: u32 = 16000;

fn bank(rows: &[Vec<f64>]) -> FilterBank {
    let k = rows[0].len();
    FilterBank::new(Tensor::new(&[rows.len(), k], rows.concat()).unwrap(), None, FilterOrigin::Learned, SR).unwrap()
}

fn windowed_cosine(freq: f64, len: usize) -> Vec<f64> {
    hann_window(len)
        .iter()
        .enumerate()
        .map(|(n, w)| w * (std::f64::consts::TAU * freq * n as f64 / SR as f64).cos())
        .collect()
}

fn sorted_keys(a: &[FilterAnalysis], perm: &[usize]) -> Vec<[f64; 3]> {
    perm.iter().map(|&i| [a[i].peak_frequency, a[i].upper_cutoff_3db, a[i].lower_cutoff_3db]).collect()
}

#[test]
fn windowed_cosine_peaks_at_its_frequency() {
    let h = windowed_cosine(2000.0, 256);
    let a = &analyze_filters(&bank(&[h.clone()]), SR)[0];
    let res = frequency_response(&h, SR, default_padding(256)).unwrap().resolution();
    assert!((a.peak_frequency - 2000.0).abs() <= res, "{}", a.peak_frequency);
    assert!(a.is_bandpass());
    assert!(a.lower_cutoff_3db < 2000.0 && a.upper_cutoff_3db > 2000.0);
    // Hann main lobe: -3 dB full width is about 1.44 bins of the kernel length.
    let expected = 1.44 * SR as f64 / 256.0;
    assert!((a.bandwidth() - expected).abs() <= 2.0 * res, "{} vs {expected}", a.bandwidth());
}

#[test]
fn gammatone_bank_is_already_sorted() {
    let g = gammatone_filterbank(40, 256, SR, 150.0, 7600.0).unwrap();
    let a = analyze_filters(&g, SR);
    assert!(a.windows(2).all(|w| w[0].peak_frequency <= w[1].peak_frequency));
    assert!(a.iter().all(FilterAnalysis::is_bandpass));
    let perm = sort_filters(&a);
    assert_eq!(perm, (0..40).collect::<Vec<_>>());
    let rev: Vec<usize> = (0..40).rev().collect();
    let ra = analyze_filters(&g.permuted(&rev).unwrap(), SR);
    assert_eq!(sort_filters(&ra), rev);
}

#[test]
fn constant_peaks_break_every_run() {
    assert_eq!(monotone_runs(&[440.0; 6]), vec![1; 12]);
    let s = ordering_statistic(&[440.0; 6], 0, &mut RandomSource::new(2)).unwrap();
    assert_eq!((s.max_monotone_run, s.mean_monotone_run), (1, 1.0));
    assert_eq!(s.null_p_value, 1.0);
}

#[test]
fn null_mean_run_matches_closed_form() {
    let n = 128;
    let mut rng = RandomSource::new(11);
    let mut xs: Vec<f64> = (0..n).map(f64::from).collect();
    let reps = 4000;
    let mut total = 0.0;
    for _ in 0..reps {
        rng.shuffle(&mut xs);
        let runs = monotone_runs(&xs);
        total += runs.iter().sum::<usize>() as f64 / runs.len() as f64;
    }
    let mean = total / reps as f64;
    let closed = 2.0 * n as f64 / (n as f64 + 1.0);
    assert!((mean - closed).abs() < 0.01 * closed, "{mean} vs {closed}");
    assert!((mean - 2.0).abs() < 0.05 * 2.0);
}

#[test]
fn p_value_is_not_anticonservative_under_null() {
    let mut rng = RandomSource::new(12);
    let mut xs: Vec<f64> = (0..128).map(f64::from).collect();
    let reps = 100;
    let mut ps = Vec::with_capacity(reps);
    for _ in 0..reps {
        rng.shuffle(&mut xs);
        ps.push(ordering_statistic(&xs, MIN_SHUFFLES, &mut rng).unwrap().null_p_value);
    }
    for alpha in [0.1, 0.25, 0.5] {
        let frac = ps.iter().filter(|&&p| p <= alpha).count() as f64 / reps as f64;
        // Binomial(100, alpha) sd is at most 0.05; allow three.
        assert!(frac <= alpha + 0.15, "alpha {alpha}: {frac}");
    }
    assert!(ps.iter().any(|&p| p < 0.5) && ps.iter().any(|&p| p > 0.5));
}

#[test]
fn bank_report_tables_are_consistent() {
    let rows: Vec<Vec<f64>> = [3000.0, 500.0, 1500.0].iter().map(|&f| windowed_cosine(f, 128)).collect();
    let r = emit_bank_report(&bank(&rows), SR, 0, &mut RandomSource::new(3)).unwrap();
    assert_eq!(r.sort_permutation, vec![1, 2, 0]);
    assert_eq!(r.bandpass_fraction, 1.0);
    assert_eq!(r.filters_sorted.lines().count(), 4);
    let first = r.filters_sorted.lines().nth(1).unwrap();
    assert!(first.starts_with("0\t1\t"), "{first}");
    let grid = r.analyses[0].response.as_ref().unwrap().frequencies.len();
    assert_eq!(r.responses_unsorted.lines().count(), 1 + 3 * grid);
    assert!(r.summary().contains("filters\t3\n"));
    let again = emit_bank_report(&bank(&rows), SR, 0, &mut RandomSource::new(3)).unwrap();
    assert_eq!(again, r);
}

#[test]
fn parameter_table_rows() {
    use unifront::frontends::FrontendConfig;
    let rows = [frontend_row(&FrontendConfig::wav2vec_fe(), 512, SR), frontend_row(&FrontendConfig::log_mel(), 512, SR)];
    assert_eq!((rows[0].overall_stride, rows[0].extractor_dim), (640, 512));
    assert!((rows[0].total_params as f64 - 5.0e6).abs() < 0.05e6);
    assert_eq!((rows[1].extractor_params, rows[1].extractor_stride), (0, 160));
    let t = parameter_table(&rows);
    assert_eq!(t.lines().count(), 3);
    assert!(t.lines().nth(1).unwrap().starts_with("wav2vec_fe\t"));
}

fn random_bank(seed: u64, n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut rng = RandomSource::new(seed);
    (0..n).map(|_| (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn analysis_is_scale_invariant(seed in 0u64..1000, alpha in 1e-3f64..1e3) {
        let rows = random_bank(seed, 3, 32);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * alpha).collect()).collect();
        let (a, b) = (analyze_filters(&bank(&rows), SR), analyze_filters(&bank(&scaled), SR));
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.peak_frequency, y.peak_frequency);
            prop_assert_eq!(x.lower_cutoff_3db, y.lower_cutoff_3db);
            prop_assert_eq!(x.upper_cutoff_3db, y.upper_cutoff_3db);
        }
    }

    #[test]
    fn sorted_keys_do_not_depend_on_input_order(seed in 0u64..1000, shuffle_seed in 0u64..1000) {
        let rows = random_bank(seed, 8, 16);
        let a = analyze_filters(&bank(&rows), SR);
        let keys = sorted_keys(&a, &sort_filters(&a));
        prop_assert!(keys.windows(2).all(|w| w[0] <= w[1]));
        let mut perm: Vec<usize> = (0..8).collect();
        RandomSource::new(shuffle_seed).shuffle(&mut perm);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let b = analyze_filters(&bank(&shuffled), SR);
        prop_assert_eq!(sorted_keys(&b, &sort_filters(&b)), keys);
    }

    #[test]
    fn runs_partition_each_direction(xs in prop::collection::vec(-5i32..5, 1..40)) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let runs = monotone_runs(&xs);
        // Ascending and descending runs each tile the sequence once.
        let total: usize = runs.iter().sum();
        prop_assert_eq!(total, 2 * xs.len());
        prop_assert!(runs.iter().all(|&r| r >= 1));
    }
}
