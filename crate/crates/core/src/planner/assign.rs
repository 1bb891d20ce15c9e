//! Vehicle-to-RSU assignment: nearest-RSU seed and simulated annealing with
//! a tabu list of infeasible plans.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PlanError;

/// Serving RSU of every vehicle. Exclusive service holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment {
    servers: Vec<usize>,
    n_rsu: usize,
}

impl Assignment {
    pub fn new(servers: Vec<usize>, n_rsu: usize) -> Result<Self, PlanError> {
        if n_rsu == 0 {
            return Err(PlanError::InvalidAssignment("no RSUs".into()));
        }
        if let Some(&bad) = servers.iter().find(|&&m| m >= n_rsu) {
            return Err(PlanError::InvalidAssignment(format!("RSU {bad} out of range")));
        }
        Ok(Self { servers, n_rsu })
    }

    pub fn servers(&self) -> &[usize] {
        &self.servers
    }

    pub fn n_rsu(&self) -> usize {
        self.n_rsu
    }

    pub fn n_vehicles(&self) -> usize {
        self.servers.len()
    }

    pub fn served_by(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.servers.iter().enumerate().filter(move |(_, &s)| s == m).map(|(k, _)| k)
    }

    /// Binary service matrix, `n_rsu × n_vehicles`.
    pub fn matrix(&self) -> Vec<Vec<bool>> {
        (0..self.n_rsu).map(|m| self.servers.iter().map(|&s| s == m).collect()).collect()
    }

    /// All `n_rsu^n_vehicles` assignments in lexicographic order.
    pub fn enumerate(n_vehicles: usize, n_rsu: usize) -> Vec<Assignment> {
        let total = n_rsu.pow(n_vehicles as u32);
        (0..total)
            .map(|mut code| {
                let mut servers = vec![0; n_vehicles];
                for s in servers.iter_mut().rev() {
                    *s = code % n_rsu;
                    code /= n_rsu;
                }
                Assignment { servers, n_rsu }
            })
            .collect()
    }

    fn random<R: Rng + ?Sized>(n_vehicles: usize, n_rsu: usize, rng: &mut R) -> Self {
        Self {
            servers: (0..n_vehicles).map(|_| rng.random_range(0..n_rsu)).collect(),
            n_rsu,
        }
    }

    /// Moves one uniformly chosen vehicle to a different, uniformly chosen RSU.
    pub fn neighbor<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Self> {
        if self.n_rsu < 2 || self.servers.is_empty() {
            return None;
        }
        let k = rng.random_range(0..self.servers.len());
        let mut m = rng.random_range(0..self.n_rsu - 1);
        if m >= self.servers[k] {
            m += 1;
        }
        let mut out = self.clone();
        out.servers[k] = m;
        Some(out)
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Each vehicle to its nearest RSU, ties to the lower index.
pub fn greedy_assign(vehicles: &[(f64, f64)], rsus: &[(f64, f64)]) -> Result<Assignment, PlanError> {
    if rsus.is_empty() {
        return Err(PlanError::InvalidAssignment("no RSUs".into()));
    }
    let servers = vehicles
        .iter()
        .map(|&v| {
            let mut best = 0;
            for m in 1..rsus.len() {
                if dist2(v, rsus[m]) < dist2(v, rsus[best]) {
                    best = m;
                }
            }
            best
        })
        .collect();
    Assignment::new(servers, rsus.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    pub initial_temperature: f64,
    pub cooling: f64,
    pub min_temperature: f64,
    pub max_iter: usize,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            initial_temperature: 100.0,
            cooling: 0.95,
            min_temperature: 1e-2,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaStep {
    pub iteration: usize,
    pub temperature: f64,
    pub candidate: Vec<usize>,
    /// `None` for infeasible or tabu candidates.
    pub score: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HhOutcome {
    pub best: Assignment,
    pub score: f64,
    /// Inner solver calls, one per distinct assignment.
    pub evaluations: usize,
    pub tabu: usize,
    pub log: Vec<SaStep>,
}

struct Memo<F> {
    eval: F,
    cache: HashMap<Assignment, Option<f64>>,
    calls: usize,
}

impl<F> Memo<F>
where
    F: FnMut(&Assignment) -> Result<f64, PlanError>,
{
    /// Score of `a`, `None` when infeasible. Other errors propagate.
    fn score(&mut self, a: &Assignment) -> Result<Option<f64>, PlanError> {
        if let Some(&s) = self.cache.get(a) {
            return Ok(s);
        }
        self.calls += 1;
        let s = match (self.eval)(a) {
            Ok(v) => Some(v),
            Err(e) if e.is_infeasibility() => None,
            Err(e) => return Err(e),
        };
        self.cache.insert(a.clone(), s);
        Ok(s)
    }

    fn is_tabu(&self, a: &Assignment) -> bool {
        matches!(self.cache.get(a), Some(None))
    }

    fn n_tabu(&self) -> usize {
        self.cache.values().filter(|s| s.is_none()).count()
    }

    /// A uniformly drawn assignment that is not tabu and scores feasibly.
    /// Small spaces are sampled without replacement so that exhaustion is
    /// detected exactly.
    fn fresh<R: Rng + ?Sized>(&mut self, n_veh: usize, n_rsu: usize, rng: &mut R) -> Result<Option<(Assignment, f64)>, PlanError> {
        const ENUMERATION_LIMIT: f64 = 4096.0;
        if (n_rsu as f64).powi(n_veh as i32) <= ENUMERATION_LIMIT {
            let mut pool: Vec<Assignment> =
                Assignment::enumerate(n_veh, n_rsu).into_iter().filter(|a| !self.is_tabu(a)).collect();
            while !pool.is_empty() {
                let a = pool.swap_remove(rng.random_range(0..pool.len()));
                if let Some(s) = self.score(&a)? {
                    return Ok(Some((a, s)));
                }
            }
            return Ok(None);
        }
        for _ in 0..10_000 {
            let a = Assignment::random(n_veh, n_rsu, rng);
            if self.is_tabu(&a) {
                continue;
            }
            if let Some(s) = self.score(&a)? {
                return Ok(Some((a, s)));
            }
        }
        Ok(None)
    }
}

/// Simulated annealing over assignments started from `seed`. `eval` returns
/// the score (larger is better) or an error; infeasibility errors put the
/// assignment on the tabu list and a fresh random feasible plan replaces it.
/// Every distinct assignment is evaluated at most once.
pub fn hybrid_heuristic<R, F>(seed: Assignment, params: &AnnealParams, eval: F, rng: &mut R) -> Result<HhOutcome, PlanError>
where
    R: Rng + ?Sized,
    F: FnMut(&Assignment) -> Result<f64, PlanError>,
{
    let n_veh = seed.n_vehicles();
    let n_rsu = seed.n_rsu();
    let mut memo = Memo { eval, cache: HashMap::new(), calls: 0 };
    let mut log = Vec::new();

    let (mut current, mut current_score) = match memo.score(&seed)? {
        Some(s) => (seed, s),
        None => match memo.fresh(n_veh, n_rsu, rng)? {
            Some(x) => x,
            None => return Err(PlanError::Exhausted { evaluated: memo.calls }),
        },
    };
    let mut best = current.clone();
    let mut best_score = current_score;
    let mut temperature = params.initial_temperature;

    for iteration in 0..params.max_iter {
        if temperature <= params.min_temperature {
            break;
        }
        let Some(candidate) = current.neighbor(rng) else { break };
        let mut step = SaStep {
            iteration,
            temperature,
            candidate: candidate.servers.clone(),
            score: None,
            accepted: false,
        };
        if !memo.is_tabu(&candidate) {
            match memo.score(&candidate)? {
                Some(s) => {
                    step.score = Some(s);
                    let accept = s >= current_score || rng.random::<f64>() <= ((s - current_score) / temperature).exp();
                    if accept {
                        current = candidate;
                        current_score = s;
                        step.accepted = true;
                    }
                }
                None => {
                    if let Some((a, s)) = memo.fresh(n_veh, n_rsu, rng)? {
                        current = a;
                        current_score = s;
                    }
                }
            }
        }
        if current_score > best_score {
            best = current.clone();
            best_score = current_score;
        }
        log.push(step);
        temperature *= params.cooling;
    }
    Ok(HhOutcome {
        best,
        score: best_score,
        evaluations: memo.calls,
        tabu: memo.n_tabu(),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearest_rsu_wins() {
        let a = greedy_assign(&[(10.0, 0.0)], &[(0.0, 0.0), (60.0, 0.0)]).unwrap();
        assert_eq!(a.servers(), &[0]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let a = greedy_assign(&[(50.0, 3.0)], &[(0.0, 0.0), (100.0, 0.0)]).unwrap();
        assert_eq!(a.servers(), &[0]);
    }

    #[test]
    fn greedy_is_row_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rsus: Vec<(f64, f64)> = (0..3).map(|_| (rng.random_range(0.0..100.0), -5.0)).collect();
        let cars: Vec<(f64, f64)> = (0..30).map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..10.0))).collect();
        let a = greedy_assign(&cars, &rsus).unwrap();
        for (k, &c) in cars.iter().enumerate() {
            let d: Vec<f64> = rsus.iter().map(|&r| dist2(c, r)).collect();
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(d[a.servers()[k]], min);
        }
    }

    #[test]
    fn matrix_has_one_entry_per_column() {
        for a in Assignment::enumerate(3, 2) {
            let x = a.matrix();
            for k in 0..3 {
                assert_eq!((0..2).filter(|&m| x[m][k]).count(), 1);
            }
        }
        assert_eq!(Assignment::enumerate(3, 2).len(), 8);
    }

    fn table_score(a: &Assignment) -> f64 {
        // Arbitrary but fixed landscape with a unique maximum at [1, 0, 1].
        let target = [1, 0, 1];
        let hits = a.servers().iter().zip(target).filter(|(x, y)| **x == *y).count();
        hits as f64 * 3.0 + if a.servers() == target { 2.0 } else { 0.0 }
    }

    #[test]
    fn finds_the_global_best_and_never_loses_to_the_seed() {
        let params = AnnealParams { max_iter: 50, ..AnnealParams::default() };
        let mut found = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = Assignment::new(vec![0, 1, 0], 2).unwrap();
            let start_score = table_score(&start);
            let out = hybrid_heuristic(start, &params, |a| Ok(table_score(a)), &mut rng).unwrap();
            assert!(out.score >= start_score);
            assert!(out.evaluations <= 8);
            if out.best.servers() == [1, 0, 1] {
                found += 1;
            }
        }
        assert!(found >= 95, "{found}");
    }

    #[test]
    fn infeasible_plans_are_evaluated_once() {
        let mut calls: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = Assignment::new(vec![0, 0, 0], 2).unwrap();
        let out = hybrid_heuristic(
            start,
            &AnnealParams::default(),
            |a| {
                *calls.entry(a.servers().to_vec()).or_default() += 1;
                if a.servers()[0] == 0 {
                    Err(PlanError::RatioInfeasible { rsu: 0, fixed: 1.0, budget: 0.5 })
                } else {
                    Ok(table_score(a))
                }
            },
            &mut rng,
        )
        .unwrap();
        assert!(calls.values().all(|&c| c == 1));
        assert_eq!(out.best.servers()[0], 1);
        assert!((1..=4).contains(&out.tabu));
    }

    #[test]
    fn all_infeasible_is_exhaustion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let start = Assignment::new(vec![0, 1], 2).unwrap();
        let err = hybrid_heuristic(
            start,
            &AnnealParams::default(),
            |_| Err(PlanError::Solve(crate::error::SolveError::Infeasible)),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, PlanError::Exhausted { evaluated: 4 }));
    }

    #[test]
    fn improving_neighbor_is_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = Assignment::new(vec![0], 2).unwrap();
        let params = AnnealParams { initial_temperature: 1e-1, max_iter: 1, ..AnnealParams::default() };
        let out = hybrid_heuristic(start, &params, |a| Ok(a.servers()[0] as f64), &mut rng).unwrap();
        assert!(out.log[0].accepted);
        assert_eq!(out.best.servers(), &[1]);
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let start = Assignment::new(vec![0, 0, 1, 1], 2).unwrap();
            hybrid_heuristic(start, &AnnealParams::default(), |a| Ok(table_score(&Assignment::new(a.servers()[..3].to_vec(), 2).unwrap())), &mut rng)
                .unwrap()
                .log
        };
        assert_eq!(run(), run());
    }
}
