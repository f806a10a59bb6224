//! Regularized evolution over the design space.
//!
//! The population starts from random samples. Each generation picks a parent by
//! tournament, spawns mutated children, evaluates loss and hardware metrics, sorts by
//! criterion and drops the worst entries so the population size never changes.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::TechParams;
use crate::design_space::{mutate_in, sample_in, validate_in, DesignPoint, SpaceDescriptor};
use crate::evaluator::{Evaluator, SurrogateParams};
use crate::mapping::map_model;
use crate::pipeline::{evaluate, LookupModel};
use crate::{Error, Result};

/// Names of the three hardware metrics, in criterion order.
pub const METRICS: [&str; 3] = ["inverse_throughput", "area", "power"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub num_generations: usize,
    pub num_children: usize,
    pub num_mutations: usize,
    pub lambda: [f64; 3],
    /// Normalizers for `[1/throughput, area, power]`; the initial population's
    /// medians when absent.
    pub targets: Option<[f64; 3]>,
    pub population_init_size: usize,
    pub tournament_size: usize,
    pub seed: u64,
    /// Failed child evaluations tolerated over the whole run.
    pub max_skips: usize,
    pub overlap: bool,
    pub surrogate: SurrogateParams,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            num_generations: 240,
            num_children: 8,
            num_mutations: 1,
            lambda: [0.1; 3],
            targets: None,
            population_init_size: 64,
            tournament_size: 10,
            seed: 0,
            max_skips: 256,
            overlap: true,
            surrogate: SurrogateParams::default(),
        }
    }
}

impl SearchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let counts = [
            ("num_generations", self.num_generations),
            ("num_children", self.num_children),
            ("num_mutations", self.num_mutations),
            ("population_init_size", self.population_init_size),
            ("tournament_size", self.tournament_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("search: {name} must be >= 1")));
            }
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidConfig("search: lambda entries must be >= 0".into()));
        }
        if let Some(t) = self.targets {
            if t.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidConfig("search: targets must be > 0".into()));
            }
        }
        self.surrogate.check()
    }
}

/// `loss + sum_i lambda_i * metrics_i / targets_i`.
pub fn criterion(loss: f64, metrics: &[f64; 3], lambda: &[f64; 3], targets: &[f64; 3]) -> f64 {
    let mut c = loss;
    for i in 0..3 {
        c += lambda[i] * metrics[i] / targets[i];
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub point: DesignPoint,
    pub loss: f64,
    /// `[1/throughput, area, power]`.
    pub metrics: [f64; 3],
    pub criterion: f64,
    /// Insertion order, used to break criterion ties.
    pub birth: u64,
}

/// Tournament of `min(tournament_size, |pop|)` distinct entries drawn uniformly; the
/// lowest criterion wins, earliest insertion on ties.
pub fn sample_and_select<'a, R: Rng + ?Sized>(
    population: &'a [PopulationEntry],
    tournament_size: usize,
    rng: &mut R,
) -> Result<&'a PopulationEntry> {
    if population.is_empty() {
        return Err(Error::SearchAborted("empty population".into()));
    }
    let size = tournament_size.clamp(1, population.len());
    let picked = sample(rng, population.len(), size);
    let best = picked
        .iter()
        .map(|i| &population[i])
        .min_by(|a, b| a.criterion.total_cmp(&b.criterion).then(a.birth.cmp(&b.birth)))
        .expect("nonempty tournament");
    Ok(best)
}

/// Everything a candidate evaluation needs besides the point itself.
#[derive(Debug, Clone, Default)]
pub struct SearchContext {
    pub space: SpaceDescriptor,
    pub tech: TechParams,
    pub evaluator: Evaluator,
    pub lookup: LookupModel,
    /// Threads for child evaluation; rayon's global pool when `None`.
    pub workers: Option<usize>,
}

impl SearchContext {
    pub fn new(cfg: &SearchConfig) -> Self {
        Self { evaluator: Evaluator::new(cfg.surrogate.clone()), ..Self::default() }
    }
}

/// Loss and `[1/throughput, area, power]` of one point.
pub fn evaluate_point(ctx: &SearchContext, point: &DesignPoint, overlap: bool) -> Result<(f64, [f64; 3])> {
    let report = validate_in(&ctx.space, point);
    if !report.ok {
        return Err(Error::InvalidPoint(report.violations.join("; ")));
    }
    let mm = map_model(point)?;
    let (cost, tp) = evaluate(&mm, &ctx.tech, &ctx.lookup, overlap)?;
    let loss = ctx.evaluator.evaluate(point).log_loss;
    Ok((loss, [1.0 / tp.throughput, cost.area, cost.peak_power]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub best: f64,
    pub median: f64,
    pub parent_id: String,
    pub child_ids: Vec<String>,
    pub skipped: usize,
}

/// Fixed-seed runs serialize to identical bytes; wall time is reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    pub seed: u64,
    pub lambda: [f64; 3],
    pub targets: [f64; 3],
    pub population_size: usize,
    pub initial_best: f64,
    pub initial_median: f64,
    pub generations: Vec<GenerationLog>,
}

impl SearchLog {
    /// Best criterion after each generation, which never increases.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut run = self.initial_best;
        self.generations
            .iter()
            .map(|g| {
                run = run.min(g.best);
                run
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_canonical_pretty(self)
    }

    /// `generation,best,median` with generation 0 for the initial population.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["generation", "best", "median"]).map_err(io)?;
        w.write_record(["0".to_string(), self.initial_best.to_string(), self.initial_median.to_string()]).map_err(io)?;
        for g in &self.generations {
            w.write_record([g.generation.to_string(), g.best.to_string(), g.median.to_string()]).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Final population, ascending by criterion.
    pub population: Vec<PopulationEntry>,
    pub log: SearchLog,
}

impl SearchOutcome {
    pub fn top(&self, k: usize) -> &[PopulationEntry] {
        &self.population[..k.min(self.population.len())]
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn sort_population(pop: &mut [PopulationEntry]) {
    // stable: equal criteria keep insertion order
    pop.sort_by(|a, b| a.criterion.total_cmp(&b.criterion));
}

type Evaluated = (DesignPoint, Result<(f64, [f64; 3])>);

fn evaluate_batch(ctx: &SearchContext, points: Vec<Result<DesignPoint>>, overlap: bool) -> Vec<Result<Evaluated>> {
    points
        .into_par_iter()
        .map(|p| p.map(|p| {
            let r = evaluate_point(ctx, &p, overlap);
            (p, r)
        }))
        .collect()
}

pub fn run_search(cfg: &SearchConfig, ctx: &SearchContext) -> Result<SearchOutcome> {
    run_search_with(cfg, ctx, |_, _| Ok(()))
}

/// Runs the search, calling `on_generation` after every committed generation.
pub fn run_search_with<F>(cfg: &SearchConfig, ctx: &SearchContext, on_generation: F) -> Result<SearchOutcome>
where
    F: FnMut(&SearchLog, &[PopulationEntry]) -> Result<()> + Send,
{
    cfg.check()?;
    match ctx.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
            .install(|| search_loop(cfg, ctx, on_generation)),
        None => search_loop(cfg, ctx, on_generation),
    }
}

fn search_loop<F>(cfg: &SearchConfig, ctx: &SearchContext, mut on_generation: F) -> Result<SearchOutcome>
where
    F: FnMut(&SearchLog, &[PopulationEntry]) -> Result<()>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut skips = 0usize;
    let mut note_skip = |what: &str, e: &Error| -> Result<()> {
        skips += 1;
        log::warn!("skipping {what}: {e}");
        if skips > cfg.max_skips {
            return Err(Error::SearchAborted(format!("more than {} failed evaluations; last: {e}", cfg.max_skips)));
        }
        Ok(())
    };

    let mut raw: Vec<(DesignPoint, f64, [f64; 3])> = Vec::with_capacity(cfg.population_init_size);
    while raw.len() < cfg.population_init_size {
        let need = cfg.population_init_size - raw.len();
        let points = (0..need).map(|_| Ok(sample_in(&ctx.space, rng.next_u64()))).collect();
        for item in evaluate_batch(ctx, points, cfg.overlap) {
            let (p, r) = item?;
            match r {
                Ok((loss, m)) => raw.push((p, loss, m)),
                Err(e) => note_skip("initial sample", &e)?,
            }
        }
    }

    let targets = cfg.targets.unwrap_or_else(|| {
        std::array::from_fn(|i| {
            let m = median(raw.iter().map(|r| r.2[i]).collect());
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
    });
    let mut birth = 0u64;
    let mut entry = |point: DesignPoint, loss: f64, metrics: [f64; 3]| {
        let e = PopulationEntry { criterion: criterion(loss, &metrics, &cfg.lambda, &targets), point, loss, metrics, birth };
        birth += 1;
        e
    };
    let mut population: Vec<PopulationEntry> = raw.into_iter().map(|(p, l, m)| entry(p, l, m)).collect();
    sort_population(&mut population);

    let mut log = SearchLog {
        seed: cfg.seed,
        lambda: cfg.lambda,
        targets,
        population_size: cfg.population_init_size,
        initial_best: population[0].criterion,
        initial_median: median(population.iter().map(|e| e.criterion).collect()),
        generations: Vec::with_capacity(cfg.num_generations),
    };

    for generation in 1..=cfg.num_generations {
        let parent = sample_and_select(&population, cfg.tournament_size, &mut rng)?.point.clone();
        let seeds: Vec<u64> = (0..cfg.num_children).map(|_| rng.next_u64()).collect();
        let children = seeds.iter().map(|&s| mutate_in(&ctx.space, &parent, s, cfg.num_mutations)).collect();
        let mut child_ids = Vec::with_capacity(cfg.num_children);
        let mut skipped = 0;
        for item in evaluate_batch(ctx, children, cfg.overlap) {
            match item {
                Ok((p, Ok((loss, m)))) => {
                    child_ids.push(p.point_id.clone());
                    population.push(entry(p, loss, m));
                }
                Ok((_, Err(e))) | Err(e) => {
                    skipped += 1;
                    note_skip("child", &e)?;
                }
            }
        }
        sort_population(&mut population);
        population.truncate(cfg.population_init_size);

        log.generations.push(GenerationLog {
            generation,
            best: population[0].criterion,
            median: median(population.iter().map(|e| e.criterion).collect()),
            parent_id: parent.point_id.clone(),
            child_ids,
            skipped,
        });
        on_generation(&log, &population)?;
    }
    Ok(SearchOutcome { population, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::fixtures::minimal_point;

    fn entry(c: f64, birth: u64) -> PopulationEntry {
        PopulationEntry { point: minimal_point(), loss: c, metrics: [0.0; 3], criterion: c, birth }
    }

    #[test]
    fn criterion_arithmetic() {
        let c = criterion(0.44, &[1.0 / 1000.0, 10.0, 5.0], &[0.1; 3], &[1.0 / 2000.0, 20.0, 10.0]);
        assert!((c - 0.74).abs() < 1e-12);
        assert_eq!(criterion(0.44, &[3.0, 4.0, 5.0], &[0.0; 3], &[1.0; 3]), 0.44);
        assert_eq!(criterion(0.5, &[3.0, 4.0, 5.0], &[1.0; 3], &[3.0, 4.0, 5.0]), 3.5);
    }

    #[test]
    fn tournament_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = vec![entry(0.3, 0)];
        assert_eq!(sample_and_select(&one, 10, &mut rng).unwrap().birth, 0);
        let pop = vec![entry(0.5, 0), entry(0.2, 1), entry(0.2, 2), entry(0.9, 3)];
        assert_eq!(sample_and_select(&pop, 4, &mut rng).unwrap().birth, 1);
        let pick = |seed| sample_and_select(&pop, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().birth;
        assert_eq!(pick(7), pick(7));
        assert!(sample_and_select(&[], 3, &mut rng).is_err());
    }

    #[test]
    fn config_checks() {
        assert!(SearchConfig::default().check().is_ok());
        let bad = SearchConfig { num_children: 0, ..SearchConfig::default() };
        assert!(bad.check().is_err());
        let bad = SearchConfig { lambda: [0.1, -1.0, 0.1], ..SearchConfig::default() };
        assert!(bad.check().is_err());
        let bad = SearchConfig { targets: Some([1.0, 0.0, 1.0]), ..SearchConfig::default() };
        assert!(bad.check().is_err());
        let parsed = SearchConfig::from_json("{\"num_generations\": 3}").unwrap();
        assert_eq!(parsed.num_generations, 3);
        assert_eq!(parsed.num_children, 8);
    }

    #[test]
    fn short_run_keeps_size_and_improves_monotonically() {
        let cfg = SearchConfig { num_generations: 12, population_init_size: 16, num_children: 4, ..SearchConfig::default() };
        let ctx = SearchContext::new(&cfg);
        let mut sizes = Vec::new();
        let out = run_search_with(&cfg, &ctx, |_, pop| {
            sizes.push(pop.len());
            Ok(())
        })
        .unwrap();
        assert!(sizes.iter().all(|&s| s == 16));
        let best = out.log.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        for e in &out.population {
            assert_eq!(e.criterion, criterion(e.loss, &e.metrics, &cfg.lambda, &out.log.targets));
        }
    }
}
