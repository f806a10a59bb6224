use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Embedding rows assigned to banks by descending access frequency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingPlacement {
    pub num_banks: usize,
    pub bank_of: BTreeMap<u64, usize>,
    pub frequencies: BTreeMap<u64, u64>,
}

impl EmbeddingPlacement {
    pub fn bank(&self, id: u64) -> Option<usize> {
        self.bank_of.get(&id).copied()
    }

    /// Number of ids per bank.
    pub fn loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.num_banks];
        for &b in self.bank_of.values() {
            loads[b] += 1;
        }
        loads
    }
}

/// Sorts ids by descending count (ties by id) and deals them round-robin over banks.
pub fn place_embeddings(freqs: &BTreeMap<u64, u64>, num_banks: usize) -> Result<EmbeddingPlacement> {
    if num_banks == 0 {
        return Err(Error::InvalidConfig("num_banks must be >= 1".into()));
    }
    let mut ids: Vec<(u64, u64)> = freqs.iter().map(|(&id, &n)| (id, n)).collect();
    ids.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let bank_of = ids.iter().enumerate().map(|(rank, &(id, _))| (id, rank % num_banks)).collect();
    Ok(EmbeddingPlacement { num_banks, bank_of, frequencies: freqs.clone() })
}

/// Per-query lookup time: accesses to the same bank serialize, different banks run
/// in parallel. Repeated ids within a query are fetched once.
pub fn simulate_lookup(trace: &[Vec<u64>], placement: &EmbeddingPlacement, t_bank: f64) -> Result<Vec<f64>> {
    trace
        .iter()
        .map(|query| {
            let mut per_bank = vec![0usize; placement.num_banks];
            for id in query.iter().collect::<BTreeSet<_>>() {
                let b = placement.bank(*id).ok_or(Error::UnplacedId(*id))?;
                per_bank[b] += 1;
            }
            Ok(per_bank.into_iter().max().unwrap_or(0) as f64 * t_bank)
        })
        .collect()
}

pub fn trace_frequencies(trace: &[Vec<u64>]) -> BTreeMap<u64, u64> {
    let mut freqs = BTreeMap::new();
    for id in trace.iter().flatten() {
        *freqs.entry(*id).or_insert(0) += 1;
    }
    freqs
}

/// One query per line, comma-separated ids. Blank lines are empty queries.
pub fn parse_trace(text: &str) -> Result<Vec<Vec<u64>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.trim();
            if line.is_empty() {
                return Ok(Vec::new());
            }
            line.split(',')
                .map(|tok| {
                    tok.trim().parse::<u64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        message: format!("bad embedding id {tok:?}: {e}"),
                    })
                })
                .collect()
        })
        .collect()
}

pub fn load_trace(path: &Path) -> Result<Vec<Vec<u64>>> {
    parse_trace(&std::fs::read_to_string(path)?)
}

/// Queries touching one row of every feature table, rows drawn Zipf(`exponent`).
/// Feature `f`'s row `r` has id `f * rows + r`.
pub fn synthetic_trace(num_features: usize, rows: usize, queries: usize, exponent: f64, seed: u64) -> Result<Vec<Vec<u64>>> {
    let zipf = Zipf::new(rows as f64, exponent)
        .map_err(|e| Error::InvalidConfig(format!("zipf({rows}, {exponent}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..queries)
        .map(|_| {
            (0..num_features)
                .map(|f| {
                    let r = zipf.sample(&mut rng) as u64 - 1;
                    (f * rows) as u64 + r
                })
                .collect()
        })
        .collect())
}

/// Source of the lookup stage time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LookupModel {
    /// No conflicts beyond `ceil(N_s / num_banks)` ids per bank.
    #[default]
    Ideal,
    /// Mean per-query time over a recorded trace, placed by its own frequencies.
    Trace { queries: Vec<Vec<u64>> },
    /// Mean per-query time over a seeded Zipf trace.
    Synthetic { queries: usize, exponent: f64, seed: u64 },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn freqs(pairs: &[(u64, u64)]) -> BTreeMap<u64, u64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn round_robin_by_frequency() {
        // a=1, b=2, c=3, d=4
        let p = place_embeddings(&freqs(&[(1, 9), (2, 7), (3, 5), (4, 3)]), 2).unwrap();
        assert_eq!(p.bank(1), Some(0));
        assert_eq!(p.bank(3), Some(0));
        assert_eq!(p.bank(2), Some(1));
        assert_eq!(p.bank(4), Some(1));
        let one = place_embeddings(&freqs(&[(1, 9), (2, 7), (3, 5)]), 1).unwrap();
        assert!(one.bank_of.values().all(|&b| b == 0));
        let n = place_embeddings(&freqs(&[(1, 1), (2, 1), (3, 1)]), 3).unwrap();
        assert_eq!(n.loads(), vec![1, 1, 1]);
        assert!(place_embeddings(&freqs(&[]), 0).is_err());
    }

    #[test]
    fn lookup_serializes_same_bank() {
        let p = place_embeddings(&freqs(&[(1, 9), (2, 7), (3, 5), (4, 3)]), 2).unwrap();
        let lat = simulate_lookup(&[vec![1, 2], vec![1, 3], vec![]], &p, 5.0).unwrap();
        assert_eq!(lat, vec![5.0, 10.0, 0.0]);
        assert!(matches!(simulate_lookup(&[vec![99]], &p, 5.0), Err(Error::UnplacedId(99))));
    }

    #[test]
    fn trace_parsing() {
        let t = parse_trace("1,2,3\n\n4\n").unwrap();
        assert_eq!(t, vec![vec![1, 2, 3], vec![], vec![4]]);
        match parse_trace("1,2\n3,x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_is_seeded_and_in_range() {
        let a = synthetic_trace(4, 100, 50, 1.1, 7).unwrap();
        assert_eq!(a, synthetic_trace(4, 100, 50, 1.1, 7).unwrap());
        for q in &a {
            assert_eq!(q.len(), 4);
            for (f, &id) in q.iter().enumerate() {
                assert_eq!(id / 100, f as u64);
            }
        }
    }
}
