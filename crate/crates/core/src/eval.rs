//! Episode metrics, summary tables and the study drivers built on them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::episode::{run_batch, EpisodeResult};
use crate::error::{Error, Result};
use crate::seeds;
use crate::sim::generate::Difficulty;
use crate::sim::{Episode, NoiseModel, Scene};
use crate::switch::{evaluate_switch_accuracy, sample_pairs, PairOutcome, SwitchAccuracy};

const PAIR_STREAM: u64 = 0x9a1;

/// Reference success and SPL per stop budget 0..=8, reported next to measured values.
pub const REFERENCE_STOP_BUDGET: [(f64, f64); 9] = [
    (27.8, 10.7),
    (50.8, 17.0),
    (68.4, 21.4),
    (81.2, 25.1),
    (90.9, 28.3),
    (96.2, 30.0),
    (98.8, 31.0),
    (99.8, 31.2),
    (100.0, 31.3),
];
/// Reference explore→exploit and exploit→explore switch accuracies, in percent.
pub const REFERENCE_SWITCH_ACCURACY: (f64, f64) = (92.0, 84.1);

/// One episode's SPL contribution, `S · ℓ / max(p, ℓ)`.
pub fn spl_term(success: bool, shortest_path: f64, path_length: f64) -> f64 {
    if success {
        shortest_path / path_length.max(shortest_path)
    } else {
        0.0
    }
}

/// Results in episode order, so floating sums do not depend on arrival order.
fn ordered(results: &[EpisodeResult]) -> Vec<&EpisodeResult> {
    let mut v: Vec<&EpisodeResult> = results.iter().collect();
    v.sort_by_key(|r| r.index);
    v
}

fn check_nonempty(results: &[EpisodeResult]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Domain("no episode results".into()));
    }
    if let Some(r) = results.iter().find(|r| !(r.shortest_path > 0.0)) {
        return Err(Error::Domain(format!("episode {} has non-positive shortest path", r.index)));
    }
    Ok(())
}

pub fn success_rate(results: &[EpisodeResult]) -> Result<f64> {
    check_nonempty(results)?;
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

pub fn compute_spl(results: &[EpisodeResult]) -> Result<f64> {
    check_nonempty(results)?;
    let sum: f64 = ordered(results).iter().map(|r| spl_term(r.success, r.shortest_path, r.path_length)).sum();
    Ok(sum / results.len() as f64)
}

pub fn mean_final_distance(results: &[EpisodeResult]) -> Result<f64> {
    check_nonempty(results)?;
    let sum: f64 = ordered(results).iter().map(|r| r.final_distance).sum();
    Ok(sum / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub fold: String,
    /// A difficulty name or `overall`.
    pub difficulty: String,
    pub success: f64,
    pub spl: f64,
    pub final_dist: f64,
    pub n_episodes: usize,
}

fn summary_row(fold: &str, difficulty: &str, results: &[EpisodeResult]) -> Result<SummaryRow> {
    Ok(SummaryRow {
        fold: fold.to_string(),
        difficulty: difficulty.to_string(),
        success: success_rate(results)?,
        spl: compute_spl(results)?,
        final_dist: mean_final_distance(results)?,
        n_episodes: results.len(),
    })
}

/// One row per difficulty present, then the overall row.
pub fn summarize(results: &[EpisodeResult], fold: &str) -> Result<Vec<SummaryRow>> {
    check_nonempty(results)?;
    let mut rows = Vec::new();
    for d in Difficulty::ALL {
        let subset: Vec<EpisodeResult> = results.iter().filter(|r| r.difficulty == d).cloned().collect();
        if !subset.is_empty() {
            rows.push(summary_row(fold, d.name(), &subset)?);
        }
    }
    rows.push(summary_row(fold, "overall", results)?);
    Ok(rows)
}

/// Success within a difficulty, or overall when `difficulty` is `None`.
pub fn success_in(results: &[EpisodeResult], difficulty: Option<Difficulty>) -> Result<f64> {
    let subset: Vec<EpisodeResult> =
        results.iter().filter(|r| difficulty.is_none_or(|d| r.difficulty == d)).cloned().collect();
    success_rate(&subset)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("fold,difficulty,success,spl,final_dist,n_episodes\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6},{:.6},{}", r.fold, r.difficulty, r.success, r.spl, r.final_dist, r.n_episodes);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopBudgetRow {
    pub budget: usize,
    pub success: f64,
    pub spl: f64,
    pub final_dist: f64,
    pub n_episodes: usize,
}

/// Per-budget metrics read off runs made with a budget of at least `max_budget`.
pub fn stop_budget_table(results: &[EpisodeResult], max_budget: usize) -> Result<Vec<StopBudgetRow>> {
    check_nonempty(results)?;
    let results = ordered(results);
    let n = results.len() as f64;
    Ok((0..=max_budget)
        .map(|b| {
            let (mut succ, mut spl, mut dist) = (0usize, 0.0, 0.0);
            for r in &results {
                let o = r.at_budget(b);
                succ += o.success as usize;
                spl += spl_term(o.success, r.shortest_path, o.path_length);
                dist += o.final_distance;
            }
            StopBudgetRow { budget: b, success: succ as f64 / n, spl: spl / n, final_dist: dist / n, n_episodes: results.len() }
        })
        .collect())
}

/// Rolls every episode out once with the largest budget and tabulates budgets 0..=max.
pub fn run_stop_budget_study(
    scenes: &[Scene],
    episodes: &[Episode],
    cfg: &Config,
    max_budget: usize,
    seed: u64,
    workers: usize,
) -> Result<(Vec<StopBudgetRow>, Vec<EpisodeResult>)> {
    let mut cfg = cfg.clone();
    cfg.run.stop_budget = max_budget;
    let results = run_batch(scenes, episodes, &cfg, seed, workers)?;
    Ok((stop_budget_table(&results, max_budget)?, results))
}

pub fn stop_budget_csv(rows: &[StopBudgetRow]) -> String {
    let mut out = String::from("budget,success,spl,final_dist,n_episodes,reference_success,reference_spl\n");
    for r in rows {
        let (rs, rp) = REFERENCE_STOP_BUDGET.get(r.budget).map_or((String::new(), String::new()), |(s, p)| (s.to_string(), p.to_string()));
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{},{rs},{rp}", r.budget, r.success, r.spl, r.final_dist, r.n_episodes);
    }
    out
}

/// First Wasserstein distance between two empirical distributions.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("wasserstein_1d needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Domain("wasserstein_1d samples must be finite".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    // Integral of |F_a - F_b| between consecutive pooled sample points.
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut x = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingBin {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub truth: usize,
    pub geometric: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingBiasReport {
    pub samples: usize,
    /// Radians.
    pub w_geometric: f64,
    /// Radians; the constant-zero predictor.
    pub w_zero: f64,
    pub within_15_truth: f64,
    pub within_15_geometric: f64,
    pub within_15_zero: f64,
    pub histogram: Vec<HeadingBin>,
}

/// Exploit-phase headings against ground truth. `None` when no episode
/// reached the Exploit phase.
pub fn heading_bias_report(results: &[EpisodeResult], bin_deg: f64) -> Result<Option<HeadingBiasReport>> {
    if !(bin_deg > 0.0) {
        return Err(Error::Domain("heading bin width must be positive".into()));
    }
    let log: Vec<[f64; 2]> = ordered(results).iter().flat_map(|r| r.heading_log.iter().copied()).collect();
    if log.is_empty() {
        return Ok(None);
    }
    let predicted: Vec<f64> = log.iter().map(|e| e[0]).collect();
    let truth: Vec<f64> = log.iter().map(|e| e[1]).collect();
    let zero = vec![0.0; log.len()];
    let limit = 15f64.to_radians();
    let within = |v: &[f64]| v.iter().filter(|t| t.abs() <= limit).count() as f64 / v.len() as f64;

    let bins = (180.0 / bin_deg).ceil() as i64;
    let index = |t: f64| ((t.to_degrees() / bin_deg).floor() as i64).clamp(-bins, bins - 1);
    let mut histogram: Vec<HeadingBin> = (-bins..bins)
        .map(|k| HeadingBin { lo_deg: k as f64 * bin_deg, hi_deg: (k + 1) as f64 * bin_deg, truth: 0, geometric: 0 })
        .collect();
    for (t, p) in truth.iter().zip(&predicted) {
        histogram[(index(*t) + bins) as usize].truth += 1;
        histogram[(index(*p) + bins) as usize].geometric += 1;
    }
    histogram.retain(|b| b.truth > 0 || b.geometric > 0);

    Ok(Some(HeadingBiasReport {
        samples: log.len(),
        w_geometric: wasserstein_1d(&truth, &predicted)?,
        w_zero: wasserstein_1d(&truth, &zero)?,
        within_15_truth: within(&truth),
        within_15_geometric: within(&predicted),
        within_15_zero: 1.0,
        histogram,
    }))
}

pub fn heading_bias_csv(report: &HeadingBiasReport) -> String {
    let mut out = String::from("predictor,wasserstein_rad,within_15deg\n");
    let _ = writeln!(out, "truth,0,{:.6}", report.within_15_truth);
    let _ = writeln!(out, "geometric,{:.6e},{:.6}", report.w_geometric, report.within_15_geometric);
    let _ = writeln!(out, "zero,{:.6e},{:.6}", report.w_zero, report.within_15_zero);
    out
}

pub fn heading_histogram_csv(report: &HeadingBiasReport) -> String {
    let mut out = String::from("lo_deg,hi_deg,truth,geometric\n");
    for b in &report.histogram {
        let _ = writeln!(out, "{},{},{},{}", b.lo_deg, b.hi_deg, b.truth, b.geometric);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub condition: String,
    pub success: f64,
    pub spl: f64,
    pub final_dist: f64,
    pub n_episodes: usize,
}

/// Named noise settings: none, pose only, pose and depth, then each scale of
/// the configured model.
pub fn noise_conditions(base: &NoiseModel, scales: &[f64]) -> Vec<(String, NoiseModel)> {
    let mut out = vec![
        ("none".to_string(), NoiseModel::none()),
        ("pose".to_string(), NoiseModel { depth_sigma_rel: 0.0, ..base.clone() }),
        ("pose+depth".to_string(), base.clone()),
    ];
    out.extend(scales.iter().map(|s| (format!("x{s}"), base.scaled(*s))));
    out
}

pub fn run_noise_sweep(
    scenes: &[Scene],
    episodes: &[Episode],
    cfg: &Config,
    conditions: &[(String, NoiseModel)],
    seed: u64,
    workers: usize,
) -> Result<Vec<NoiseRow>> {
    conditions
        .iter()
        .map(|(name, noise)| {
            let mut cfg = cfg.clone();
            cfg.noise = noise.clone();
            let results = run_batch(scenes, episodes, &cfg, seed, workers)?;
            Ok(NoiseRow {
                condition: name.clone(),
                success: success_rate(&results)?,
                spl: compute_spl(&results)?,
                final_dist: mean_final_distance(&results)?,
                n_episodes: results.len(),
            })
        })
        .collect()
}

/// Whether success never rises as the scaled noise grows, over the `x…` rows
/// in the order given.
pub fn scaled_trend_non_increasing(rows: &[NoiseRow]) -> bool {
    let scaled: Vec<f64> = rows.iter().filter(|r| r.condition.starts_with('x')).map(|r| r.success).collect();
    scaled.windows(2).all(|w| w[1] <= w[0])
}

pub fn noise_csv(rows: &[NoiseRow]) -> String {
    let mut out = String::from("condition,success,spl,final_dist,n_episodes\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{}", r.condition, r.success, r.spl, r.final_dist, r.n_episodes);
    }
    out
}

/// Samples the configured number of pairs in every scene and scores both switches.
pub fn run_switch_accuracy_study(
    scenes: &[Scene],
    cfg: &Config,
    seed: u64,
    workers: usize,
) -> Result<(SwitchAccuracy, Vec<PairOutcome>)> {
    let intr = cfg.sensor.intrinsics()?;
    let mut matcher = cfg.matcher;
    matcher.depth_noise_rel = cfg.noise.depth_sigma_rel;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut pairs = Vec::new();
        for (i, scene) in scenes.iter().enumerate() {
            let mut rng = seeds::stream(seed, i as u64, PAIR_STREAM);
            pairs.extend(sample_pairs(scene, i, &intr, &cfg.studies.pairs, &mut rng)?);
        }
        evaluate_switch_accuracy(&pairs, scenes, &intr, &matcher, &cfg.ransac, &cfg.switch, seed)
    })
}

pub fn switch_accuracy_csv(acc: &SwitchAccuracy) -> String {
    let mut out = String::from("direction,accuracy,pairs,reference_accuracy\n");
    let _ = writeln!(out, "explore_to_exploit,{:.6},{},{}", acc.explore_to_exploit, acc.pairs, REFERENCE_SWITCH_ACCURACY.0);
    let exploit = acc.exploit_to_explore.map_or(String::new(), |a| format!("{a:.6}"));
    let _ = writeln!(out, "exploit_to_explore,{exploit},{},{}", acc.gated_pairs, REFERENCE_SWITCH_ACCURACY.1);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::StopEvent;
    use proptest::prelude::*;

    pub(crate) fn result(index: usize, success: bool, shortest: f64, path: f64) -> EpisodeResult {
        EpisodeResult {
            index,
            scene_id: "s".into(),
            difficulty: Difficulty::Easy,
            success,
            path_length: path,
            shortest_path: shortest,
            final_distance: if success { 0.5 } else { 3.0 },
            steps: 10,
            stop_issued: success,
            phase_trace: String::new(),
            actions: String::new(),
            heading_log: Vec::new(),
            stop_events: if success {
                vec![StopEvent { step: 9, path_length: path, distance: 0.5, success: true }]
            } else {
                Vec::new()
            },
        }
    }

    #[test]
    fn spl_examples() {
        assert_eq!(compute_spl(&[result(0, true, 2.0, 2.0)]).unwrap(), 1.0);
        assert_eq!(compute_spl(&[result(0, false, 2.0, 2.0)]).unwrap(), 0.0);
        assert_eq!(compute_spl(&[result(0, true, 2.0, 4.0), result(1, false, 2.0, 1.0)]).unwrap(), 0.25);
        assert!(matches!(compute_spl(&[]), Err(Error::Domain(_))));
        assert!(matches!(compute_spl(&[result(0, true, 0.0, 1.0)]), Err(Error::Domain(_))));
    }

    #[test]
    fn summary_rows_and_csv() {
        let mut rs = vec![result(0, true, 2.0, 2.0), result(1, false, 2.0, 3.0)];
        rs[1].difficulty = Difficulty::Hard;
        let rows = summarize(&rs, "synthetic").unwrap();
        assert_eq!(rows.iter().map(|r| r.difficulty.as_str()).collect::<Vec<_>>(), ["easy", "hard", "overall"]);
        assert_eq!(rows[2].success, 0.5);
        let csv = summary_csv(&rows);
        assert!(csv.starts_with("fold,difficulty,success,spl,final_dist,n_episodes\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1d(&[0.1, 0.5, -0.2], &[0.5, -0.2, 0.1]).unwrap(), 0.0);
        assert!((wasserstein_1d(&[0.3], &[-0.4]).unwrap() - 0.7).abs() < 1e-15);
        assert!((wasserstein_1d(&[0.3], &[-0.4, -0.4]).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(wasserstein_1d(&[], &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn heading_report_on_exact_log() {
        let mut r = result(0, true, 2.0, 2.0);
        r.heading_log = vec![[0.4, 0.4]];
        let rep = heading_bias_report(&[r.clone()], 5.0).unwrap().unwrap();
        assert_eq!(rep.w_geometric, 0.0);
        assert!((rep.w_zero - 0.4).abs() < 1e-15);
        assert_eq!(rep.within_15_truth, 0.0);
        assert_eq!(rep.histogram.len(), 1);
        r.heading_log.clear();
        assert!(heading_bias_report(&[r], 5.0).unwrap().is_none());
    }

    #[test]
    fn budget_zero_matches_plain_protocol() {
        let mut r = result(0, false, 2.0, 6.0);
        r.stop_events = vec![
            StopEvent { step: 3, path_length: 1.0, distance: 2.0, success: false },
            StopEvent { step: 8, path_length: 4.0, distance: 0.2, success: true },
        ];
        let rows = stop_budget_table(&[r], 2).unwrap();
        assert_eq!(rows[0].success, 0.0);
        assert_eq!(rows[0].final_dist, 2.0);
        assert_eq!(rows[1].success, 1.0);
        assert_eq!(rows[1].spl, 0.5);
        assert_eq!(rows[2], StopBudgetRow { budget: 2, ..rows[1].clone() });
    }

    proptest! {
        #[test]
        fn spl_bounded_by_success(spec in prop::collection::vec((any::<bool>(), 0.1f64..20.0, 0.0f64..60.0), 1..40)) {
            let rs: Vec<EpisodeResult> = spec.iter().enumerate().map(|(i, (s, l, p))| result(i, *s, *l, *p)).collect();
            let spl = compute_spl(&rs).unwrap();
            let sr = success_rate(&rs).unwrap();
            prop_assert!((0.0..=1.0).contains(&spl));
            prop_assert!(spl <= sr + 1e-12);
        }

        #[test]
        fn aggregation_ignores_arrival_order(spec in prop::collection::vec((any::<bool>(), 0.1f64..20.0, 0.0f64..60.0), 1..40), rot in 0usize..40) {
            let rs: Vec<EpisodeResult> = spec.iter().enumerate().map(|(i, (s, l, p))| result(i, *s, *l, *p)).collect();
            let mut shuffled = rs.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(summarize(&rs, "f").unwrap(), summarize(&shuffled, "f").unwrap());
        }

        #[test]
        fn wasserstein_is_a_metric(a in prop::collection::vec(-3.0f64..3.0, 1..30), b in prop::collection::vec(-3.0f64..3.0, 1..30), c in prop::collection::vec(-3.0f64..3.0, 1..30)) {
            let ab = wasserstein_1d(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - wasserstein_1d(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!(ab <= wasserstein_1d(&a, &c).unwrap() + wasserstein_1d(&c, &b).unwrap() + 1e-9);
        }
    }
}
