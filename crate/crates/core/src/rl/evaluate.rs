use super::{Checkpoint, RlAllocator, RlError};
use crate::allocation::{Allocator, Mpdm, Rbts, UniformRandom};
use crate::exec;
use crate::report::{percent_improvement, MetricsRecord};
use crate::sim::{self, Metrics, SimConfig};
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorKind {
    Mpdm,
    Rbts,
    /// Uniform random choice, seeded with the run seed.
    Random,
    /// The learned policy, greedy.
    Rl,
}

impl AllocatorKind {
    pub fn name(self) -> &'static str {
        match self {
            AllocatorKind::Mpdm => "mpdm",
            AllocatorKind::Rbts => "rbts",
            AllocatorKind::Random => "random",
            AllocatorKind::Rl => "dc-mrta",
        }
    }
}

impl std::fmt::Display for AllocatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AllocatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mpdm" => Ok(AllocatorKind::Mpdm),
            "rbts" => Ok(AllocatorKind::Rbts),
            "random" => Ok(AllocatorKind::Random),
            "rl" | "dc-mrta" | "dcmrta" => Ok(AllocatorKind::Rl),
            other => Err(format!("unknown allocator {other:?} (expected mpdm, rbts, random or rl)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub allocator: AllocatorKind,
    pub seed: u64,
    pub metrics: Metrics,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub allocator: AllocatorKind,
    pub runs: usize,
    /// Mean over seeds of the run's total travel delay.
    pub mean_ttd: f64,
    pub mean_makespan: f64,
    pub mean_collisions: f64,
    pub improvement_vs_mpdm: Option<f64>,
    pub improvement_vs_rbts: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub config: SimConfig,
    pub runs: Vec<RunRecord>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, kind: AllocatorKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.allocator == kind)
    }

    pub fn records(&self, with_timing: bool) -> Vec<MetricsRecord> {
        self.runs
            .iter()
            .map(|r| {
                MetricsRecord::from_metrics(
                    self.config.layout.name(),
                    self.config.n_robots,
                    r.allocator.name(),
                    self.config.nav_mode.as_str(),
                    r.seed,
                    &r.metrics,
                    with_timing.then_some(r.wall_clock_s),
                )
            })
            .collect()
    }
}

/// Builds the allocator for one run.
pub fn make_allocator(
    kind: AllocatorKind,
    config: &SimConfig,
    checkpoint: Option<&Checkpoint>,
) -> Result<Box<dyn Allocator + Send>, RlError> {
    Ok(match kind {
        AllocatorKind::Mpdm => Box::new(Mpdm),
        AllocatorKind::Rbts => Box::new(Rbts::default()),
        AllocatorKind::Random => Box::new(UniformRandom::new(config.seed)),
        AllocatorKind::Rl => {
            let ck = checkpoint.ok_or_else(|| RlError::InvalidConfig("the rl allocator needs a checkpoint".into()))?;
            Box::new(RlAllocator::new(
                Arc::new(ck.policy.clone()),
                &ck.normalization,
                &config.layout,
                config.nominal_speed,
            )?)
        }
    })
}

/// Runs every allocator on every seed of `base` and tabulates the results.
/// Cells run in parallel when `parallel` is set; results keep
/// allocator-major, seed-minor order either way.
pub fn evaluate(
    checkpoint: Option<&Checkpoint>,
    base: &SimConfig,
    allocators: &[AllocatorKind],
    seeds: &[u64],
    parallel: bool,
) -> Result<Comparison, RlError> {
    if allocators.contains(&AllocatorKind::Rl) {
        let ck = checkpoint.ok_or_else(|| RlError::InvalidConfig("the rl allocator needs a checkpoint".into()))?;
        if ck.normalization.nominal_speed != base.nominal_speed {
            return Err(RlError::NormalizationMismatch {
                expected: ck.normalization.nominal_speed,
                found: base.nominal_speed,
            });
        }
    }
    let cells: Vec<(AllocatorKind, u64)> =
        allocators.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let results = exec::map(&cells, parallel, |_, &(kind, seed)| {
        let mut config = base.clone();
        config.seed = seed;
        let mut alloc = make_allocator(kind, &config, checkpoint)?;
        let start = Instant::now();
        let metrics =
            sim::run(config, &mut alloc).map_err(|source| RlError::Run { allocator: kind.name(), seed, source })?;
        Ok::<_, RlError>(RunRecord { allocator: kind, seed, metrics, wall_clock_s: start.elapsed().as_secs_f64() })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<ComparisonRow> = allocators
        .iter()
        .map(|&kind| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.allocator == kind).collect();
            let n = mine.len().max(1) as f64;
            ComparisonRow {
                allocator: kind,
                runs: mine.len(),
                mean_ttd: mine.iter().map(|r| r.metrics.ttd_total).sum::<f64>() / n,
                mean_makespan: mine.iter().map(|r| r.metrics.makespan).sum::<f64>() / n,
                mean_collisions: mine.iter().map(|r| r.metrics.collisions as f64).sum::<f64>() / n,
                improvement_vs_mpdm: None,
                improvement_vs_rbts: None,
            }
        })
        .collect();
    let mean_of = |rows: &[ComparisonRow], k| rows.iter().find(|r| r.allocator == k).map(|r| r.mean_ttd);
    let mpdm = mean_of(&rows, AllocatorKind::Mpdm);
    let rbts = mean_of(&rows, AllocatorKind::Rbts);
    for row in &mut rows {
        row.improvement_vs_mpdm = mpdm.map(|b| percent_improvement(b, row.mean_ttd));
        row.improvement_vs_rbts = rbts.map(|b| percent_improvement(b, row.mean_ttd));
    }
    Ok(Comparison { config: base.clone(), runs, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::LayoutPreset;

    fn base() -> SimConfig {
        let mut c = SimConfig::new(Arc::new(LayoutPreset::Small.generate(20, 20, 1).unwrap()));
        c.n_robots = 4;
        c.total_tasks = 30;
        c
    }

    #[test]
    fn self_comparison_is_zero_percent() {
        let cmp = evaluate(None, &base(), &[AllocatorKind::Mpdm], &[1, 2], true).unwrap();
        assert_eq!(cmp.rows[0].improvement_vs_mpdm, Some(0.0));
        assert_eq!(cmp.runs.len(), 2);
    }

    #[test]
    fn rl_without_checkpoint_is_an_error() {
        assert!(evaluate(None, &base(), &[AllocatorKind::Rl], &[1], false).is_err());
    }

    #[test]
    fn speed_mismatch_is_rejected() {
        use rand::SeedableRng;
        let policy = super::super::Policy::new(8, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        let ck = Checkpoint::new(policy, &super::super::TrainConfig { nominal_speed: 2.0, ..Default::default() });
        let r = evaluate(Some(&ck), &base(), &[AllocatorKind::Rl], &[1], false);
        assert!(matches!(r, Err(RlError::NormalizationMismatch { .. })));
    }

    #[test]
    fn failures_name_the_run() {
        let mut c = base();
        c.stall_ticks = 1;
        let err = evaluate(None, &c, &[AllocatorKind::Rbts], &[7], false).unwrap_err();
        assert!(matches!(err, RlError::Run { allocator: "rbts", seed: 7, .. }), "{err}");
    }

    #[test]
    fn names_parse_back() {
        for k in [AllocatorKind::Mpdm, AllocatorKind::Rbts, AllocatorKind::Random, AllocatorKind::Rl] {
            assert_eq!(k.name().parse::<AllocatorKind>().unwrap(), k);
        }
    }
}
