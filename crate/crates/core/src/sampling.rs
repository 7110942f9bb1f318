//! Probability-proportional-to-size subsampling plans and Walker alias
//! tables for O(1) with-replacement draws.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::draws::{full_data_lpd_all, DrawsBundle, ObservationId};
use crate::error::{Error, Result};

/// Floor applied to raw size measures `-lpd_i` so that every observation
/// keeps a positive selection probability.
pub const SIZE_FLOOR: f64 = 1e-6;

/// Source of the size measure `π_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `-log p(y_i | y)` from the draws.
    LpdFull,
    /// `-log p(y_i | θ̂)` for a caller-supplied point estimate.
    LpdPoint,
    /// `-E_q[log p(y_i | θ)]`, the column means of the log-likelihood.
    ExpectedLpdQ,
    /// `-log p(y_i | E_q[θ])`.
    LpdAtQMean,
    /// `-log p(y_i | argmax q)`.
    LpdAtQMode,
    /// `-E_y[log p(y_i | y)]`: an expectation over datasets, which one
    /// dataset cannot provide. Always a configuration error.
    ExpectedOverData,
    /// Equal probabilities (simple random sampling with replacement).
    Uniform,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::LpdFull,
        Strategy::LpdPoint,
        Strategy::ExpectedLpdQ,
        Strategy::LpdAtQMean,
        Strategy::LpdAtQMode,
        Strategy::ExpectedOverData,
        Strategy::Uniform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::LpdFull => "lpd_full",
            Strategy::LpdPoint => "lpd_point",
            Strategy::ExpectedLpdQ => "expected_lpd_q",
            Strategy::LpdAtQMean => "lpd_at_q_mean",
            Strategy::LpdAtQMode => "lpd_at_q_mode",
            Strategy::ExpectedOverData => "expected_over_data",
            Strategy::Uniform => "uniform",
        }
    }

    /// Whether the strategy consumes a point log predictive density vector.
    pub fn needs_point_lpd(self) -> bool {
        matches!(
            self,
            Strategy::LpdPoint | Strategy::LpdAtQMean | Strategy::LpdAtQMode
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Normalized selection probabilities `π̃` for every observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub pi_tilde: Vec<f64>,
    pub strategy: Strategy,
    /// Observations whose raw size measure was raised to [`SIZE_FLOOR`].
    pub clamped_count: usize,
}

impl SamplingPlan {
    /// Compute `π̃` for a strategy.
    ///
    /// `bundle` is needed by `lpd_full` and `expected_lpd_q` (the latter
    /// expects draws from `q`); the point strategies need `point_lpd`. For
    /// `uniform` either input supplies `n`.
    pub fn compute(
        strategy: Strategy,
        bundle: Option<&DrawsBundle>,
        point_lpd: Option<&[f64]>,
    ) -> Result<Self> {
        let require_bundle = || {
            bundle.ok_or_else(|| {
                Error::Config(format!("strategy {strategy} requires posterior draws"))
            })
        };
        match strategy {
            Strategy::LpdFull => {
                Self::from_lpd(strategy, &full_data_lpd_all(require_bundle()?))
            }
            Strategy::ExpectedLpdQ => Self::from_lpd(strategy, &require_bundle()?.column_means()),
            Strategy::LpdPoint | Strategy::LpdAtQMean | Strategy::LpdAtQMode => {
                let lpd = point_lpd.ok_or_else(|| {
                    Error::Config(format!(
                        "strategy {strategy} requires a point log predictive density vector"
                    ))
                })?;
                if let Some(b) = bundle {
                    if b.n_obs() != lpd.len() {
                        return Err(Error::Input(format!(
                            "point lpd has length {}, draws have {} observations",
                            lpd.len(),
                            b.n_obs()
                        )));
                    }
                }
                Self::from_lpd(strategy, lpd)
            }
            Strategy::Uniform => {
                let n = bundle
                    .map(DrawsBundle::n_obs)
                    .or(point_lpd.map(<[f64]>::len))
                    .ok_or_else(|| {
                        Error::Config("uniform strategy needs draws or an lpd vector for n".into())
                    })?;
                Ok(Self::uniform(n))
            }
            Strategy::ExpectedOverData => Err(Error::Config(
                "expected_over_data is an expectation over datasets and cannot be computed \
                 from a single dataset"
                    .into(),
            )),
        }
    }

    /// Plan with `π̃_i ∝ max(-lpd_i, ε)`.
    pub fn from_lpd(strategy: Strategy, lpd: &[f64]) -> Result<Self> {
        if lpd.is_empty() {
            return Err(Error::Input("empty lpd vector".into()));
        }
        if let Some(i) = lpd.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite lpd {} at {i}", lpd[i])));
        }
        let mut clamped_count = 0;
        let raw: Vec<f64> = lpd
            .iter()
            .map(|&v| {
                if -v < SIZE_FLOOR {
                    clamped_count += 1;
                    SIZE_FLOOR
                } else {
                    -v
                }
            })
            .collect();
        if clamped_count > 0 {
            log::warn!(
                "{clamped_count} of {} observations have log predictive density >= 0 and were \
                 clamped to the size floor {SIZE_FLOOR}; consider rescaling the data",
                lpd.len()
            );
        }
        let total: f64 = raw.iter().sum();
        Ok(SamplingPlan {
            pi_tilde: raw.into_iter().map(|v| v / total).collect(),
            strategy,
            clamped_count,
        })
    }

    pub fn uniform(n: usize) -> Self {
        SamplingPlan {
            pi_tilde: vec![1.0 / n as f64; n],
            strategy: Strategy::Uniform,
            clamped_count: 0,
        }
    }

    /// Plan from explicit positive probabilities, renormalized to sum to 1.
    pub fn from_probabilities(strategy: Strategy, probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Input("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Input(format!("probabilities must be positive, got {p}")));
        }
        let total: f64 = probs.iter().sum();
        Ok(SamplingPlan {
            pi_tilde: probs.iter().map(|p| p / total).collect(),
            strategy,
            clamped_count: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.pi_tilde.len()
    }

    pub fn alias_table(&self) -> AliasTable {
        AliasTable::new(&self.pi_tilde)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AliasCell {
    prob: f64,
    alias: usize,
}

/// Walker alias table, built with Vose's stable construction.
///
/// Cell probability and alias are stored side by side so a draw touches a
/// single cache line.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    cells: Vec<AliasCell>,
}

impl AliasTable {
    /// Build from a probability vector summing to 1.
    pub fn new(probs: &[f64]) -> Self {
        let n = probs.len();
        assert!(n > 0, "alias table needs at least one category");
        let mut scaled: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
        let mut cells: Vec<AliasCell> = (0..n).map(|i| AliasCell { prob: 1.0, alias: i }).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| scaled[i] < 1.0);

        while let (Some(&l), Some(&g)) = (small.last(), large.last()) {
            small.pop();
            cells[l] = AliasCell {
                prob: scaled[l],
                alias: g,
            };
            scaled[g] = (scaled[g] + scaled[l]) - 1.0;
            if scaled[g] < 1.0 {
                large.pop();
                small.push(g);
            }
        }
        // Leftovers are 1 up to rounding; they keep the default full cell.
        AliasTable { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.cells[i].prob
    }

    pub fn alias(&self, i: usize) -> usize {
        self.cells[i].alias
    }

    /// Per-category probability implied by the table.
    pub fn implied_probabilities(&self) -> Vec<f64> {
        let n = self.cells.len() as f64;
        let mut out = vec![0.0; self.cells.len()];
        for (i, c) in self.cells.iter().enumerate() {
            out[i] += c.prob / n;
            out[c.alias] += (1.0 - c.prob) / n;
        }
        out
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.cells.len());
        self.resolve(i, rng.random::<f64>())
    }

    /// Fill `out` with draws. Consumes the generator exactly as repeated
    /// [`AliasTable::sample`] calls would, but generates a block of
    /// uniforms before touching the table.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [usize]) {
        const BLOCK: usize = 256;
        let n = self.cells.len();
        let mut coins = [0.0f64; BLOCK];
        for chunk in out.chunks_mut(BLOCK) {
            for (slot, coin) in chunk.iter_mut().zip(coins.iter_mut()) {
                *slot = rng.random_range(0..n);
                *coin = rng.random::<f64>();
                prefetch(&self.cells[*slot]);
            }
            for (slot, &coin) in chunk.iter_mut().zip(coins.iter()) {
                *slot = self.resolve(*slot, coin);
            }
        }
    }

    #[inline(always)]
    fn resolve(&self, i: usize, coin: f64) -> usize {
        let cell = self.cells[i];
        let keep = (coin < cell.prob) as usize;
        keep * i + (1 - keep) * cell.alias
    }
}

#[inline(always)]
fn prefetch<T>(item: &T) {
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        // SAFETY: prefetching is a hint and never faults; the pointer is
        // derived from a live reference.
        unsafe { _mm_prefetch::<_MM_HINT_T0>((item as *const T).cast::<i8>()) };
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = item;
}

/// A with-replacement sample of observation indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsample {
    pub seed: u64,
    pub m: usize,
    pub indices: Vec<ObservationId>,
}

impl Subsample {
    /// Sorted distinct indices.
    pub fn distinct(&self) -> Vec<ObservationId> {
        let mut ids = self.indices.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Draw `m` independent categorical indices from the table, seeded.
pub fn draw_subsample(table: &AliasTable, m: usize, seed: u64) -> Result<Subsample> {
    if m == 0 {
        return Err(Error::Input("subsample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![0usize; m];
    table.sample_into(&mut rng, &mut raw);
    let indices = raw.into_iter().map(ObservationId).collect();
    Ok(Subsample { seed, m, indices })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv(counts: &[usize], p: &[f64]) -> f64 {
        let m: usize = counts.iter().sum();
        counts
            .iter()
            .zip(p)
            .map(|(&c, &p)| (c as f64 / m as f64 - p).abs())
            .sum::<f64>()
            / 2.0
    }

    fn counts(sub: &Subsample, n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for i in &sub.indices {
            c[i.0] += 1;
        }
        c
    }

    #[test]
    fn equal_lpd_gives_uniform() {
        let plan = SamplingPlan::from_lpd(Strategy::LpdPoint, &[0.5f64.ln(); 4]).unwrap();
        assert!(plan.pi_tilde.iter().all(|p| (p - 0.25).abs() < 1e-15));
        assert_eq!(plan.clamped_count, 0);
    }

    #[test]
    fn two_point_hand_values() {
        let plan =
            SamplingPlan::from_lpd(Strategy::LpdPoint, &[0.9f64.ln(), 0.1f64.ln()]).unwrap();
        // -ln 0.9 = 0.10536, -ln 0.1 = 2.30259
        assert!((plan.pi_tilde[0] - 0.0438).abs() < 1e-3);
        assert!((plan.pi_tilde[1] - 0.9562).abs() < 1e-3);
    }

    #[test]
    fn positive_lpd_is_clamped() {
        let plan = SamplingPlan::from_lpd(Strategy::LpdPoint, &[0.3, -1.0, -2.0]).unwrap();
        assert_eq!(plan.clamped_count, 1);
        let total = SIZE_FLOOR + 3.0;
        assert!((plan.pi_tilde[0] - SIZE_FLOOR / total).abs() < 1e-18);
        assert!(plan.pi_tilde.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        for st in [Strategy::LpdFull, Strategy::ExpectedLpdQ, Strategy::LpdPoint, Strategy::Uniform]
        {
            assert!(matches!(
                SamplingPlan::compute(st, None, None),
                Err(Error::Config(_))
            ));
        }
        assert!(matches!(
            SamplingPlan::compute(Strategy::ExpectedOverData, None, Some(&[-1.0])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn strategy_names_roundtrip() {
        for st in Strategy::ALL {
            assert_eq!(st.as_str().parse::<Strategy>().unwrap(), st);
            let json = serde_json::to_string(&st).unwrap();
            assert_eq!(json, format!("\"{}\"", st.as_str()));
        }
        assert!("nope".parse::<Strategy>().is_err());
    }

    #[test]
    fn single_category_table() {
        let t = AliasTable::new(&[1.0]);
        assert_eq!((t.prob(0), t.alias(0)), (1.0, 0));
        let sub = draw_subsample(&t, 5, 1).unwrap();
        assert_eq!(sub.indices, vec![ObservationId(0); 5]);
    }

    #[test]
    fn uniform_table_is_full() {
        let t = SamplingPlan::uniform(4).alias_table();
        assert!((0..4).all(|i| t.prob(i) == 1.0));
    }

    #[test]
    fn dyadic_reconstruction() {
        let p = [0.5, 0.25, 0.125, 0.125];
        let implied = AliasTable::new(&p).implied_probabilities();
        for (a, b) in implied.iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_frequencies() {
        for p in [vec![0.25; 4], vec![0.5, 0.25, 0.125, 0.125]] {
            let sub = draw_subsample(&AliasTable::new(&p), 1_000_000, 99).unwrap();
            let d = tv(&counts(&sub, 4), &p);
            assert!(d < 0.005, "tv = {d}");
        }
    }

    #[test]
    fn seeded_draws_are_deterministic() {
        let t = AliasTable::new(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(draw_subsample(&t, 100, 5).unwrap(), draw_subsample(&t, 100, 5).unwrap());
        assert_ne!(draw_subsample(&t, 100, 5).unwrap(), draw_subsample(&t, 100, 6).unwrap());
        assert!(draw_subsample(&t, 0, 5).is_err());
    }

    #[test]
    fn subsample_json_shape() {
        let sub = Subsample {
            seed: 7,
            m: 2,
            indices: vec![ObservationId(3), ObservationId(1)],
        };
        let json = serde_json::to_value(&sub).unwrap();
        assert_eq!(json, serde_json::json!({"seed": 7, "m": 2, "indices": [3, 1]}));
        assert_eq!(sub.distinct(), vec![ObservationId(1), ObservationId(3)]);
    }
}
