//! Exhaustive best-subset regression.
//!
//! The full design `[1 | Z]` is factored once; every subset regression then
//! runs on the small `rank × (|S| + 1)` block of `R`, which gives exactly the
//! same residual sum of squares as refitting on the raw rows.

use std::cmp::Ordering;

use serde::Serialize;

use super::eval::adjusted_r2;
use super::features::Term;
use super::fit::{targets, term_columns, Standardizer};
use super::metrics::MetricsSample;
use super::ModelError;
use crate::linalg::{Matrix, Qr};

/// Enumeration bound: 2^16 subsets.
pub const MAX_CANDIDATES: usize = 16;
/// Models reported per subset size.
pub const TOP_PER_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetFit {
    pub terms: Vec<Term>,
    /// Positions of `terms` in the candidate list, ascending.
    pub indices: Vec<usize>,
    pub rss: f64,
    pub r2: f64,
    pub adj_r2: f64,
    /// `n·ln(RSS/n) + k·ln(n)` with the intercept counted in `k`.
    pub bic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeRanking {
    pub size: usize,
    pub by_adj_r2: Vec<SubsetFit>,
    pub by_bic: Vec<SubsetFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetSearch {
    pub n: usize,
    pub candidates: Vec<Term>,
    pub sizes: Vec<SizeRanking>,
    /// Every non-singular subset that was evaluated, in enumeration order.
    #[serde(skip)]
    pub all: Vec<SubsetFit>,
    /// Subsets skipped because their columns were collinear.
    pub singular: usize,
}

impl SubsetSearch {
    /// All reported models, size by size, best adjusted R² first.
    pub fn ranked(&self) -> impl Iterator<Item = &SubsetFit> {
        self.sizes.iter().flat_map(|s| s.by_adj_r2.iter())
    }

    pub fn size(&self, size: usize) -> Option<&SizeRanking> {
        self.sizes.iter().find(|s| s.size == size)
    }

    /// Printable table: top models per size by adjusted R² and by BIC.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.sizes {
            out.push_str(&format!("== {} term(s) ==\n", s.size));
            out.push_str("  by adjusted R²:\n");
            for f in &s.by_adj_r2 {
                out.push_str(&format!("    {:>9.5}  bic {:>12.2}  {}\n", f.adj_r2, f.bic, join(&f.terms)));
            }
            out.push_str("  by BIC:\n");
            for f in &s.by_bic {
                out.push_str(&format!("    {:>12.2}  adjR² {:>9.5}  {}\n", f.bic, f.adj_r2, join(&f.terms)));
            }
        }
        out
    }
}

fn join(terms: &[Term]) -> String {
    terms.iter().map(ToString::to_string).collect::<Vec<_>>().join(" + ")
}

fn tie_break(a: &SubsetFit, b: &SubsetFit) -> Ordering {
    a.indices.len().cmp(&b.indices.len()).then_with(|| a.indices.cmp(&b.indices))
}

pub fn best_subset_search(
    samples: &[MetricsSample],
    candidates: &[Term],
    max_subset_size: usize,
) -> Result<SubsetSearch, ModelError> {
    let p = candidates.len();
    if p > MAX_CANDIDATES {
        return Err(ModelError::TooManyCandidates { got: p, limit: MAX_CANDIDATES });
    }
    if p == 0 || max_subset_size == 0 || max_subset_size > p {
        return Err(ModelError::InvalidArgument(format!(
            "max subset size {max_subset_size} must be in 1..={p}"
        )));
    }
    for (i, t) in candidates.iter().enumerate() {
        if candidates[..i].contains(t) {
            return Err(ModelError::InvalidSpec(format!("duplicate candidate {t}")));
        }
    }
    let n = samples.len();
    if n <= max_subset_size + 1 {
        return Err(ModelError::TooFewSamples { needed: max_subset_size + 2, got: n });
    }

    let y = targets(samples)?;
    let mut columns = term_columns(samples, candidates);
    Standardizer::from_columns(candidates, &columns)?.apply(&mut columns);
    let mut design = Vec::with_capacity(p + 1);
    design.push(vec![1.0; n]);
    design.extend(columns);
    let full = Qr::new(&Matrix::from_columns(design));
    let r = full.r_block();
    let mut c = y.clone();
    full.apply_qt(&mut c);
    let rank = full.rank();
    let rss_outside: f64 = c[rank..].iter().map(|v| v * v).sum();
    let c_head = &c[..rank];

    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let nf = n as f64;

    let mut all = Vec::new();
    let mut singular = 0;
    for mask in 1u32..(1u32 << p) {
        let size = mask.count_ones() as usize;
        if size > max_subset_size {
            continue;
        }
        let indices: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let mut cols = vec![0];
        cols.extend(indices.iter().map(|i| i + 1));
        let small = Qr::new(&r.select_columns(&cols));
        if !small.is_full_rank() {
            singular += 1;
            continue;
        }
        let rss = (rss_outside + small.solve(c_head).rss).max(0.0);
        let r2 = 1.0 - rss / sst;
        all.push(SubsetFit {
            terms: indices.iter().map(|&i| candidates[i]).collect(),
            adj_r2: adjusted_r2(r2, n, size)?,
            bic: nf * (rss / nf).ln() + (size + 1) as f64 * nf.ln(),
            indices,
            rss,
            r2,
        });
    }

    let sizes = (1..=max_subset_size)
        .map(|size| {
            let mut of_size: Vec<&SubsetFit> = all.iter().filter(|f| f.indices.len() == size).collect();
            of_size.sort_by(|a, b| b.adj_r2.total_cmp(&a.adj_r2).then_with(|| tie_break(a, b)));
            let by_adj_r2 = of_size.iter().take(TOP_PER_SIZE).map(|f| (*f).clone()).collect();
            of_size.sort_by(|a, b| a.bic.total_cmp(&b.bic).then_with(|| tie_break(a, b)));
            let by_bic = of_size.iter().take(TOP_PER_SIZE).map(|f| (*f).clone()).collect();
            SizeRanking { size, by_adj_r2, by_bic }
        })
        .collect();

    Ok(SubsetSearch {
        n,
        candidates: candidates.to_vec(),
        sizes,
        all,
        singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_model::features::{Metric, Os, PowerMode};
    use crate::power_model::fit::fit;
    use crate::power_model::metrics::tests::sample;
    use crate::power_model::FeatureSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn planted(n: usize, seed: u64) -> Vec<MetricsSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let mut s = sample(i as i64);
                s.cpu = rng.random_range(0.0..100.0);
                s.mem = rng.random_range(0.0..100.0);
                s.net_kb = rng.random_range(0.0..300.0);
                s.disk_req = rng.random_range(0.0..40.0);
                s.batt_rate = rng.random_range(-20.0..20.0);
                s.brightness = rng.random_range(0.0..100.0);
                s.real_power = Some(10.0 + 0.2 * s.cpu + 0.05 * s.net_kb + noise.sample(&mut rng));
                s
            })
            .collect()
    }

    fn four() -> Vec<Term> {
        vec![
            Term::Raw(Metric::Cpu),
            Term::Raw(Metric::Mem),
            Term::Raw(Metric::NetKb),
            Term::Raw(Metric::DiskReq),
        ]
    }

    #[test]
    fn planted_pair_wins_size_two() {
        let data = planted(2000, 1);
        let res = best_subset_search(&data, &four(), 4).unwrap();
        let best = &res.size(2).unwrap().by_bic[0];
        assert_eq!(best.indices, vec![0, 2]);
        assert_eq!(res.size(2).unwrap().by_adj_r2[0].indices, vec![0, 2]);
        assert_eq!(res.all.len(), 15);
    }

    #[test]
    fn subset_rss_matches_direct_refit() {
        let data = planted(300, 2);
        let res = best_subset_search(&data, &four(), 3).unwrap();
        for f in res.all.iter().take(8) {
            let spec = FeatureSpec::new(Os::Ubuntu, PowerMode::Normal, f.terms.clone()).unwrap();
            let m = fit(&data, &spec).unwrap();
            let rss: f64 = data
                .iter()
                .map(|s| (s.real_power.unwrap() - m.predict(s).unwrap()).powi(2))
                .sum();
            assert!((rss - f.rss).abs() <= 1e-8 * rss, "{rss} vs {}", f.rss);
        }
    }

    #[test]
    fn single_candidate() {
        let data = planted(100, 3);
        let res = best_subset_search(&data, &[Term::Raw(Metric::Cpu)], 1).unwrap();
        assert_eq!(res.all.len(), 1);
        assert_eq!(res.ranked().count(), 1);
    }

    #[test]
    fn rankings_are_sorted_and_capped() {
        let data = planted(500, 4);
        let mut cands = four();
        cands.extend([Term::Raw(Metric::BattRate), Term::Raw(Metric::Brightness)]);
        let res = best_subset_search(&data, &cands, 6).unwrap();
        for s in &res.sizes {
            assert!(s.by_adj_r2.len() <= TOP_PER_SIZE);
            assert!(s.by_adj_r2.windows(2).all(|w| w[0].adj_r2 >= w[1].adj_r2));
            assert!(s.by_bic.windows(2).all(|w| w[0].bic <= w[1].bic));
        }
        let max_r2 = res.all.iter().map(|f| f.r2).fold(f64::MIN, f64::max);
        let full = res.all.iter().find(|f| f.indices.len() == cands.len()).unwrap();
        assert!(full.r2 >= max_r2 - 1e-12);
    }

    #[test]
    fn refuses_oversized_candidate_sets() {
        let data = planted(100, 5);
        let many: Vec<Term> = Metric::ALL
            .iter()
            .flat_map(|m| [Term::Raw(*m), Term::Squared(*m)])
            .collect();
        assert_eq!(many.len(), 18);
        match best_subset_search(&data, &many, 2) {
            Err(ModelError::TooManyCandidates { got: 18, limit: 16 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collinear_subsets_are_skipped() {
        let data: Vec<_> = planted(200, 6)
            .into_iter()
            .map(|mut s| {
                s.disk_kb = 2.0 * s.cpu;
                s
            })
            .collect();
        let cands = vec![Term::Raw(Metric::Cpu), Term::Raw(Metric::DiskKb), Term::Raw(Metric::Mem)];
        let res = best_subset_search(&data, &cands, 3).unwrap();
        // {cpu, disk_kb} and {cpu, disk_kb, mem}
        assert_eq!(res.singular, 2);
        assert_eq!(res.all.len(), 5);
    }
}
