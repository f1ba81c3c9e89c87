use std::f64::consts::PI;
use unifront::dsp::{
    erb, fft_real, frequency_response, gammatone_filterbank, hann_window, istft, mel_filterbank_matrix, resample_speed, stft,
    Complex64, StftConfig, Waveform,
};
use unifront::RandomSource;

fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
    (0..=n / 2)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                acc += Complex64::new(v * ang.cos(), v * ang.sin());
            }
            acc
        })
        .collect()
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RandomSource::new(seed);
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

#[test]
fn fft_matches_naive_dft() {
    let mut n = 2;
    while n <= 512 {
        for len in [n, n / 2 + 1, 1] {
            let x = noise(len, n as u64 + len as u64);
            let fast = fft_real(&x, n).unwrap();
            let slow = naive_dft(&x, n);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() <= 1e-9, "n={n} len={len}");
            }
        }
        n *= 2;
    }
}

#[test]
fn exact_bin_cosine() {
    let n = 64;
    let k0 = 5;
    let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * (k0 * t) as f64 / n as f64).cos()).collect();
    let s = fft_real(&x, n).unwrap();
    for (k, c) in s.iter().enumerate() {
        if k == k0 {
            assert!((c.norm() - n as f64 / 2.0).abs() < 1e-9);
        } else {
            assert!(c.norm() < 1e-9);
        }
    }
}

#[test]
fn one_sided_parseval_per_frame() {
    let x = noise(6000, 3);
    let w = Waveform::new(x.clone(), 16000).unwrap();
    let cfg = StftConfig::new(400, 160);
    let s = stft(&w, cfg).unwrap();
    let win = hann_window(400);
    for t in 0..s.frames() {
        let lhs: f64 = s
            .frame(t)
            .iter()
            .enumerate()
            .map(|(k, c)| if k == 0 || k == cfg.n_fft / 2 { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
            .sum();
        let energy: f64 = (0..400).map(|i| (x[t * 160 + i] * win[i]).powi(2)).sum();
        assert!((lhs - cfg.n_fft as f64 * energy).abs() <= 1e-8 * lhs.max(1.0), "frame {t}");
    }
}

#[test]
fn istft_inverts_stft_on_interior() {
    for hop in [160, 80] {
        let x = noise(8000, hop as u64);
        let w = Waveform::new(x.clone(), 16000).unwrap();
        let s = stft(&w, StftConfig::new(400, hop)).unwrap();
        let y = istft(&s, w.len(), 16000).unwrap();
        let covered = (s.frames() - 1) * hop + 400;
        for n in 400..covered - 400 {
            assert!((x[n] - y.samples()[n]).abs() <= 1e-6, "hop {hop} sample {n}");
        }
    }
}

#[test]
fn mel_matrix_properties() {
    for (n_fft, f_min, f_max) in [(512, 0.0, 8000.0), (400 * 2, 20.0, 7600.0), (1024, 300.0, 4000.0)] {
        let m = mel_filterbank_matrix(80, n_fft, 16000, f_min, f_max).unwrap();
        let (bins, nf) = (m.shape()[0], m.shape()[1]);
        let d = m.data();
        assert!(d.iter().all(|&v| v >= 0.0));
        let bin_hz = 16000.0 / n_fft as f64;
        let mut prev_center = -1.0;
        for j in 0..nf {
            let col: Vec<f64> = (0..bins).map(|k| d[k * nf + j]).collect();
            let support: Vec<usize> = (0..bins).filter(|&k| col[k] > 0.0).collect();
            assert!(!support.is_empty());
            assert_eq!(support.last().unwrap() - support[0] + 1, support.len(), "contiguous support");
            let center = support.iter().map(|&k| col[k] * k as f64).sum::<f64>() / support.iter().map(|&k| col[k]).sum::<f64>();
            assert!(center > prev_center);
            prev_center = center;
        }
        // triangles vanish exactly at their outer edges, so coverage is checked
        // on the open band
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            if f > f_min && f < f_max {
                assert!((0..nf).any(|j| d[k * nf + j] > 0.0), "bin {k} ({f} Hz) uncovered");
            }
        }
    }
}

#[test]
fn gammatone_peaks_near_design_centres() {
    let fb = gammatone_filterbank(80, 256, 16000, 150.0, 7600.0).unwrap();
    let cf = fb.center_frequencies().unwrap().to_vec();
    let mut prev = 0.0;
    for i in 0..fb.n_filters() {
        let r = frequency_response(fb.filter(i), 16000, 16384).unwrap();
        let peak = r.frequencies[r.peak_index()];
        assert!((peak - cf[i]).abs() <= 0.05 * cf[i], "filter {i}: peak {peak} vs {}", cf[i]);
        assert!(peak >= prev);
        prev = peak;
    }
}

#[test]
fn gammatone_bandwidth_tracks_erb() {
    let fb = gammatone_filterbank(1, 256, 16000, 500.0, 500.0).unwrap();
    let r = frequency_response(fb.filter(0), 16000, 16384).unwrap();
    let p = r.peak_index();
    let lo = (0..p).rev().find(|&k| r.db[k] < -3.0).unwrap();
    let hi = (p..r.db.len()).find(|&k| r.db[k] < -3.0).unwrap();
    let bw = r.frequencies[hi] - r.frequencies[lo];
    assert!(bw >= 0.5 * erb(500.0) && bw <= 2.0 * erb(500.0), "bandwidth {bw}");
}

#[test]
fn windowed_cosine_peak() {
    let win = hann_window(256);
    let h: Vec<f64> = (0..256).map(|t| win[t] * (2.0 * PI * 2000.0 * t as f64 / 16000.0).cos()).collect();
    let r = frequency_response(&h, 16000, 1024).unwrap();
    let peak = r.frequencies[r.peak_index()];
    assert!((peak - 2000.0).abs() <= r.resolution());
    assert_eq!(r.db[r.peak_index()], 0.0);
}

fn peak_frequency(w: &Waveform) -> f64 {
    let s = stft(w, StftConfig::new(400, 160)).unwrap();
    let mut acc = vec![0.0; s.bins()];
    for t in 0..s.frames() {
        for (a, c) in acc.iter_mut().zip(s.frame(t)) {
            *a += c.norm();
        }
    }
    let k = acc.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    k as f64 * 16000.0 / s.n_fft() as f64
}

#[test]
fn speed_perturbation_shifts_pitch() {
    let w = Waveform::tone(1000.0, 0.8, 16000, 16000);
    let fast = resample_speed(&w, 1.1).unwrap();
    assert!((peak_frequency(&fast) - 1100.0).abs() <= 16000.0 / 512.0);
    let slow = resample_speed(&w, 0.9).unwrap();
    assert!((peak_frequency(&slow) - 900.0).abs() <= 16000.0 / 512.0);
}

#[test]
fn speed_round_trip_is_close() {
    let sr = 16000.0;
    let x: Vec<f64> = (0..16000)
        .map(|t| {
            let t = t as f64 / sr;
            0.5 * (2.0 * PI * 60.0 * t).sin() + 0.3 * (2.0 * PI * 95.0 * t + 1.0).sin()
        })
        .collect();
    let w = Waveform::new(x.clone(), 16000).unwrap();
    for f in [0.9, 1.1, 1.3] {
        let back = resample_speed(&resample_speed(&w, 1.0 / f).unwrap(), f).unwrap();
        let n = back.len().min(x.len());
        let err: Vec<f64> = (400..n - 400).map(|i| back.samples()[i] - x[i]).collect();
        let rms = (err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64).sqrt();
        assert!(rms <= 1e-3, "factor {f}: rms {rms}");
    }
}
