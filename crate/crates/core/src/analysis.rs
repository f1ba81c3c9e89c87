//! Frequency-domain inspection of first-layer filters: peak and -3 dB
//! cutoffs, peak-ordered sorting, an ordering statistic against a shuffle
//! null, and plain-text report tables.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dsp::{default_padding, frequency_response, FilterBank, FrequencyResponse};
use crate::frontends::{count_parameters, extractor_dim, frontend_stride, overall_stride, FrontendConfig};
use crate::RandomSource;

/// Cutoff level relative to the filter's own peak.
pub const CUTOFF_DB: f64 = -3.0;

/// Filters whose energy is below this fraction of the strongest filter in
/// the bank are reported as degenerate.
pub const DEGENERATE_ENERGY_RATIO: f64 = 1e-12;

pub const MIN_SHUFFLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterAnalysis {
    pub filter_index: usize,
    pub peak_frequency: f64,
    pub lower_cutoff_3db: f64,
    pub upper_cutoff_3db: f64,
    /// True when a -3 dB crossing exists below the peak.
    pub lower_found: bool,
    /// True when a -3 dB crossing exists above the peak.
    pub upper_found: bool,
    pub degenerate: bool,
    #[serde(skip)]
    pub response: Option<FrequencyResponse>,
}

impl FilterAnalysis {
    /// Peak above DC with a finite -3 dB band on both sides.
    pub fn is_bandpass(&self) -> bool {
        !self.degenerate && self.peak_frequency > 0.0 && self.lower_found && self.upper_found
    }

    pub fn bandwidth(&self) -> f64 {
        self.upper_cutoff_3db - self.lower_cutoff_3db
    }
}

fn analyze_one(index: usize, filter: &[f64], sample_rate: u32, degenerate: bool) -> FilterAnalysis {
    let nyquist = sample_rate as f64 / 2.0;
    let flagged = FilterAnalysis {
        filter_index: index,
        peak_frequency: 0.0,
        lower_cutoff_3db: 0.0,
        upper_cutoff_3db: nyquist,
        lower_found: false,
        upper_found: false,
        degenerate: true,
        response: None,
    };
    if degenerate {
        return flagged;
    }
    let Ok(r) = frequency_response(filter, sample_rate, default_padding(filter.len())) else {
        return flagged;
    };
    let p = r.peak_index();
    let lower = (0..p).rev().find(|&k| r.db[k] < CUTOFF_DB);
    let upper = (p + 1..r.db.len()).find(|&k| r.db[k] < CUTOFF_DB);
    FilterAnalysis {
        filter_index: index,
        peak_frequency: r.frequencies[p],
        lower_cutoff_3db: lower.map_or(0.0, |k| r.frequencies[k]),
        upper_cutoff_3db: upper.map_or(nyquist, |k| r.frequencies[k]),
        lower_found: lower.is_some(),
        upper_found: upper.is_some(),
        degenerate: false,
        response: Some(r),
    }
}

/// Per-filter peak and -3 dB cutoffs. Cutoffs are the first grid points
/// below -3 dB walking outwards from the peak, clamped to 0 and Nyquist.
pub fn analyze_filters(bank: &FilterBank, sample_rate: u32) -> Vec<FilterAnalysis> {
    let energies: Vec<f64> = (0..bank.n_filters()).map(|i| bank.filter(i).iter().map(|v| v * v).sum()).collect();
    let max_energy = energies.iter().copied().fold(0.0, f64::max);
    (0..bank.n_filters())
        .map(|i| {
            let degenerate = energies[i] == 0.0 || energies[i] < DEGENERATE_ENERGY_RATIO * max_energy;
            analyze_one(i, bank.filter(i), sample_rate, degenerate)
        })
        .collect()
}

fn sort_key(a: &FilterAnalysis) -> [f64; 3] {
    [a.peak_frequency, a.upper_cutoff_3db, a.lower_cutoff_3db]
}

fn compare(a: &FilterAnalysis, b: &FilterAnalysis) -> Ordering {
    let (ka, kb) = (sort_key(a), sort_key(b));
    ka.iter().zip(&kb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Stable permutation ordering filters by peak, then upper, then lower cutoff.
/// Entry `i` of the result is the position in `analyses` of the `i`-th filter.
pub fn sort_filters(analyses: &[FilterAnalysis]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..analyses.len()).collect();
    idx.sort_by(|&a, &b| compare(&analyses[a], &analyses[b]));
    idx
}

/// Lengths of the maximal strictly ascending runs followed by those of the
/// maximal strictly descending runs.
pub fn monotone_runs(xs: &[f64]) -> Vec<usize> {
    let mut runs = Vec::new();
    for ascending in [true, false] {
        let mut len = 1;
        for w in xs.windows(2) {
            let continues = if ascending { w[1] > w[0] } else { w[1] < w[0] };
            if continues {
                len += 1;
            } else {
                runs.push(len);
                len = 1;
            }
        }
        if !xs.is_empty() {
            runs.push(len);
        }
    }
    runs
}

fn max_run(xs: &[f64]) -> usize {
    monotone_runs(xs).into_iter().max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingStatistic {
    pub max_monotone_run: usize,
    pub mean_monotone_run: f64,
    /// Probability under random reordering of a longest run at least this long.
    pub null_p_value: f64,
    pub shuffles: usize,
}

/// Monotone-run structure of peak frequencies in their learned order,
/// compared against `shuffles` random permutations (at least
/// [`MIN_SHUFFLES`]).
pub fn ordering_statistic(freqs: &[f64], shuffles: usize, rng: &mut RandomSource) -> crate::Result<OrderingStatistic> {
    if freqs.len() < 2 {
        return Err(crate::Error::Argument(format!("need at least 2 filters, got {}", freqs.len())));
    }
    let shuffles = shuffles.max(MIN_SHUFFLES);
    let runs = monotone_runs(freqs);
    let observed = runs.iter().copied().max().unwrap_or(0);
    let mean = runs.iter().sum::<usize>() as f64 / runs.len() as f64;
    let mut perm = freqs.to_vec();
    let mut at_least = 0usize;
    for _ in 0..shuffles {
        rng.shuffle(&mut perm);
        if max_run(&perm) >= observed {
            at_least += 1;
        }
    }
    Ok(OrderingStatistic {
        max_monotone_run: observed,
        mean_monotone_run: mean,
        null_p_value: (at_least + 1) as f64 / (shuffles + 1) as f64,
        shuffles,
    })
}

/// One row of the front-end overview table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendRow {
    pub name: String,
    pub extractor_params: usize,
    pub vgg_params: usize,
    pub linear_params: usize,
    pub total_params: usize,
    pub extractor_stride: usize,
    pub overall_stride: usize,
    pub extractor_dim: usize,
    pub frame_rate_hz: f64,
}

pub fn frontend_row(cfg: &FrontendConfig, model_dim: usize, sample_rate: u32) -> FrontendRow {
    let c = count_parameters(cfg, Some(model_dim));
    let stride = overall_stride(cfg);
    FrontendRow {
        name: cfg.name().to_string(),
        extractor_params: c.extractor,
        vgg_params: c.vgg,
        linear_params: c.linear,
        total_params: c.total(),
        extractor_stride: frontend_stride(cfg),
        overall_stride: stride,
        extractor_dim: extractor_dim(cfg),
        frame_rate_hz: sample_rate as f64 / stride as f64,
    }
}

/// Tab-separated overview, one row per front-end.
pub fn parameter_table(rows: &[FrontendRow]) -> String {
    let mut s = String::from("frontend\textractor_params\tvgg_params\tlinear_params\ttotal_params\textractor_stride\toverall_stride\textractor_dim\tframe_rate_hz\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.name,
            r.extractor_params,
            r.vgg_params,
            r.linear_params,
            r.total_params,
            r.extractor_stride,
            r.overall_stride,
            r.extractor_dim,
            r.frame_rate_hz
        );
    }
    s
}

/// Tab-separated per-filter table listed in `order`.
pub fn filter_table(analyses: &[FilterAnalysis], order: &[usize]) -> String {
    let mut s = String::from("position\tfilter\tpeak_hz\tlower_3db_hz\tupper_3db_hz\tbandpass\tdegenerate\n");
    for (pos, &i) in order.iter().enumerate() {
        let a = &analyses[i];
        let _ = writeln!(
            s,
            "{pos}\t{}\t{}\t{}\t{}\t{}\t{}",
            a.filter_index,
            a.peak_frequency,
            a.lower_cutoff_3db,
            a.upper_cutoff_3db,
            a.is_bandpass(),
            a.degenerate
        );
    }
    s
}

/// Long-format responses: one `(filter, Hz, dB)` line per grid point, filters
/// listed in `order`. Degenerate filters contribute no lines.
pub fn response_table(analyses: &[FilterAnalysis], order: &[usize]) -> String {
    let mut s = String::from("position\tfilter\tfrequency_hz\tdb\n");
    for (pos, &i) in order.iter().enumerate() {
        if let Some(r) = &analyses[i].response {
            for (f, d) in r.frequencies.iter().zip(&r.db) {
                let _ = writeln!(s, "{pos}\t{}\t{f}\t{d}", analyses[i].filter_index);
            }
        }
    }
    s
}

/// Everything written for one filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct BankReport {
    pub analyses: Vec<FilterAnalysis>,
    pub sort_permutation: Vec<usize>,
    pub ordering: OrderingStatistic,
    pub bandpass_fraction: f64,
    pub filters_unsorted: String,
    pub filters_sorted: String,
    pub responses_unsorted: String,
    pub responses_sorted: String,
}

impl BankReport {
    pub fn summary(&self) -> String {
        let o = &self.ordering;
        format!(
            "filters\t{}\nbandpass_fraction\t{}\nmax_monotone_run\t{}\nmean_monotone_run\t{}\nnull_p_value\t{}\nshuffles\t{}\n",
            self.analyses.len(),
            self.bandpass_fraction,
            o.max_monotone_run,
            o.mean_monotone_run,
            o.null_p_value,
            o.shuffles
        )
    }
}

/// Full analysis of a bank in learned and in sorted order.
pub fn emit_bank_report(bank: &FilterBank, sample_rate: u32, shuffles: usize, rng: &mut RandomSource) -> crate::Result<BankReport> {
    let analyses = analyze_filters(bank, sample_rate);
    let perm = sort_filters(&analyses);
    let identity: Vec<usize> = (0..analyses.len()).collect();
    let peaks: Vec<f64> = analyses.iter().map(|a| a.peak_frequency).collect();
    let ordering = ordering_statistic(&peaks, shuffles, rng)?;
    let usable = analyses.iter().filter(|a| !a.degenerate).count();
    let bandpass = analyses.iter().filter(|a| a.is_bandpass()).count();
    Ok(BankReport {
        bandpass_fraction: if usable == 0 { 0.0 } else { bandpass as f64 / usable as f64 },
        filters_unsorted: filter_table(&analyses, &identity),
        filters_sorted: filter_table(&analyses, &perm),
        responses_unsorted: response_table(&analyses, &identity),
        responses_sorted: response_table(&analyses, &perm),
        sort_permutation: perm,
        ordering,
        analyses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FilterOrigin;
    use crate::tensor::Tensor;

    fn bank(rows: Vec<Vec<f64>>) -> FilterBank {
        let k = rows[0].len();
        let n = rows.len();
        FilterBank::new(Tensor::new(&[n, k], rows.concat()).unwrap(), None, FilterOrigin::Learned, 16000).unwrap()
    }

    #[test]
    fn impulse_is_flat_and_clamped() {
        let mut imp = vec![0.0; 64];
        imp[0] = 1.0;
        let a = &analyze_filters(&bank(vec![imp]), 16000)[0];
        assert_eq!(a.peak_frequency, 0.0);
        assert_eq!((a.lower_cutoff_3db, a.upper_cutoff_3db), (0.0, 8000.0));
        assert!(!a.is_bandpass() && !a.degenerate);
    }

    #[test]
    fn zero_filter_flagged() {
        let a = analyze_filters(&bank(vec![vec![0.0; 16], vec![1.0; 16]]), 16000);
        assert!(a[0].degenerate && !a[1].degenerate);
    }

    #[test]
    fn runs_examples() {
        let inc: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(max_run(&inc), 10);
        assert_eq!(monotone_runs(&[3.0; 5]), vec![1; 10]);
        assert_eq!(monotone_runs(&[1.0, 2.0, 1.0]), vec![2, 1, 1, 2]);
    }

    #[test]
    fn increasing_sequence_is_significant() {
        let inc: Vec<f64> = (0..64).map(f64::from).collect();
        let s = ordering_statistic(&inc, 0, &mut RandomSource::new(1)).unwrap();
        assert_eq!(s.max_monotone_run, 64);
        assert_eq!(s.shuffles, MIN_SHUFFLES);
        assert!(s.null_p_value < 1e-3);
        assert!(ordering_statistic(&[1.0], 0, &mut RandomSource::new(1)).is_err());
    }
}
