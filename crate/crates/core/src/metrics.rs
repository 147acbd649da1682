//! Run metrics and the binomial system-failure model.
//!
//! `binomial_pmf` follows Loader's saddle-point formulation: the mass is
//! assembled from Stirling-series remainders and the deviance term `bd0`,
//! which stays accurate for large `N` where the naive product underflows.

use crate::config::{ProtocolKind, Scenario};
use crate::error::MetricsError;
use crate::fog::{FogEvent, FogEventKind};
use crate::model::Message;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Remainder of Stirling's approximation:
/// `ln n! - (n + 1/2) ln n + n - ln sqrt(2 pi)`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        let mut ln_fact = 0.0;
        let mut i = 2.0;
        while i <= n {
            ln_fact += f64::ln(i);
            i += 1.0;
        }
        return ln_fact - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        return (S0 - S1 / nn) / n;
    }
    if n > 80.0 {
        return (S0 - (S1 - S2 / nn) / nn) / n;
    }
    if n > 35.0 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    }
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance `x ln(x/np) + np - x`, computed by series when `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / np).ln() + np - x
}

/// `C(N, k) p^k (1-p)^(N-k)`.
pub fn binomial_pmf(k: u64, n: u64, p: f64) -> Result<f64, MetricsError> {
    if k > n {
        return Err(MetricsError::KExceedsN { k, n });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(MetricsError::BadProbability(p));
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if q == 0.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let (x, nf) = (k as f64, n as f64);
    if k == 0 {
        if n == 0 {
            return Ok(1.0);
        }
        let lc = if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
        return Ok(lc.exp());
    }
    if k == n {
        let lc = if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
        return Ok(lc.exp());
    }
    let lc = stirlerr(nf) - stirlerr(x) - stirlerr(nf - x) - bd0(x, nf * p) - bd0(nf - x, nf * q);
    let lf = LN_2PI + x.ln() + (-x / nf).ln_1p();
    Ok((lc - 0.5 * lf).exp())
}

/// `Σ_{i=0}^{k_max} binomial_pmf(i, n_v·tmax, d_f)`.
pub fn system_failure_probability(n_v: u64, tmax: u64, d_f: f64, k_max: u64) -> Result<f64, MetricsError> {
    let n = n_v * tmax;
    if k_max > n {
        return Err(MetricsError::KExceedsN { k: k_max, n });
    }
    (0..=k_max).map(|i| binomial_pmf(i, n, d_f)).sum()
}

/// Cumulative curve `(k, P(k))` for every `k` in `0..=n_v·tmax`.
pub fn failure_probability_curve(n_v: u64, tmax: u64, d_f: f64) -> Result<Vec<(u64, f64)>, MetricsError> {
    let n = n_v * tmax;
    let mut acc = 0.0;
    (0..=n)
        .map(|k| {
            acc += binomial_pmf(k, n, d_f)?;
            Ok((k, acc))
        })
        .collect()
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl DelayStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            median: nearest_rank(&sorted, 50.0)?,
            p95: nearest_rank(&sorted, 95.0)?,
        })
    }
}

/// Reception counts at intended receivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReceptionTally {
    pub delivered: u64,
    pub collided: u64,
    pub out_of_range: u64,
}

impl ReceptionTally {
    pub fn total(&self) -> u64 {
        self.delivered + self.collided + self.out_of_range
    }
}

/// Raw products of one run, from which the report is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub protocol: ProtocolKind,
    pub scenario: Scenario,
    pub vehicle_count: u32,
    pub seed: u64,
    pub max_attempts: u32,
    pub messages: Vec<Message>,
    pub events: Vec<FogEvent>,
    pub receptions: ReceptionTally,
    pub attempts: u64,
    pub successful_attempts: u64,
    /// Average member count over live fogs, sampled every tick.
    pub mean_fog_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub protocol: ProtocolKind,
    pub scenario: Scenario,
    pub vehicle_count: u32,
    pub seed: u64,
    pub delay_stats: Option<DelayStats>,
    pub delivery_probability: Option<f64>,
    pub collision_ratio: Option<f64>,
    pub split_count: u64,
    pub merge_count: u64,
    pub destroy_count: u64,
    pub failure_probability_curve: Vec<(u64, f64)>,
}

pub fn compute_report(log: &RunLog) -> RunReport {
    let mut delays = Vec::new();
    let mut targets = 0u64;
    for m in &log.messages {
        targets += m.recipient_ids.len() as u64;
        delays.extend(m.delivered_at.values().map(|at| at - m.created_at));
    }
    let count = |label: &str| log.events.iter().filter(|e| e.kind.label() == label).count() as u64;
    let collision_ratio = match log.receptions.total() {
        0 => None,
        total => Some(log.receptions.collided as f64 / total as f64),
    };
    let failure_probability_curve = match (log.mean_fog_size, log.attempts) {
        (Some(size), attempts) if attempts > 0 => {
            let n_v = (size.round() as u64).max(1);
            let d_f = log.successful_attempts as f64 / attempts as f64;
            failure_probability_curve(n_v, u64::from(log.max_attempts), d_f).unwrap_or_default()
        }
        _ => Vec::new(),
    };
    RunReport {
        protocol: log.protocol,
        scenario: log.scenario,
        vehicle_count: log.vehicle_count,
        seed: log.seed,
        delay_stats: DelayStats::from_samples(&delays),
        delivery_probability: (targets > 0).then(|| delays.len() as f64 / targets as f64),
        collision_ratio,
        split_count: count("SPLIT"),
        merge_count: count("MERGE"),
        destroy_count: count("DESTROY"),
        failure_probability_curve,
    }
}

/// Largest capacity value carried by any event, if any carries one.
pub fn max_event_capacity(events: &[FogEvent]) -> Option<f64> {
    events.iter().filter_map(|e| e.kind.capacity()).reduce(f64::max)
}

/// Count of events of a given kind.
pub fn count_kind(events: &[FogEvent], pred: impl Fn(&FogEventKind) -> bool) -> usize {
    events.iter().filter(|e| pred(&e.kind)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MessageId, VehicleId};
    use num_bigint::BigInt;
    use num_traits::{One, ToPrimitive};
    use proptest::prelude::*;

    /// Exact mass with `p = a / 2^e`: `C(n,k) a^k (2^e - a)^(n-k) / 2^(e n)`.
    fn exact_pmf(k: u64, n: u64, p: f64) -> f64 {
        let mut e = 0u32;
        while (p * 2f64.powi(e as i32)).fract() != 0.0 {
            e += 1;
        }
        let a = BigInt::from((p * 2f64.powi(e as i32)) as u64);
        let b = (BigInt::one() << e) - &a;
        let mut c = BigInt::one();
        for i in 0..k {
            c = c * BigInt::from(n - i) / BigInt::from(i + 1);
        }
        let num = c * num_traits::pow(a, k as usize) * num_traits::pow(b, (n - k) as usize);
        let shift = num.bits().saturating_sub(64);
        let top = (num >> shift).to_f64().unwrap();
        top * 2f64.powf(shift as f64 - f64::from(e) * n as f64)
    }

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    #[test]
    fn pmf_examples() {
        assert!((binomial_pmf(2, 4, 0.5).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(binomial_pmf(0, 17, 0.0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(3, 3, 1.0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(0, 0, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn pmf_precondition_errors() {
        assert_eq!(binomial_pmf(5, 4, 0.5), Err(MetricsError::KExceedsN { k: 5, n: 4 }));
        assert!(matches!(binomial_pmf(1, 4, 1.5), Err(MetricsError::BadProbability(_))));
        assert!(matches!(binomial_pmf(1, 4, f64::NAN), Err(MetricsError::BadProbability(_))));
    }

    #[test]
    fn pmf_against_exact_rationals() {
        let cases = [
            (3, 10, 0.3),
            (0, 50, 0.02),
            (50, 50, 0.97),
            (17, 40, 0.41),
            (120, 300, 0.4),
            (1, 1000, 0.001),
            (4800, 10_000, 0.49),
            (9990, 10_000, 0.999),
            (30, 10_000, 0.002),
        ];
        for (k, n, p) in cases {
            let got = binomial_pmf(k, n, p).unwrap();
            let want = exact_pmf(k, n, p);
            assert!(rel(got, want) < 1e-12, "k={k} n={n} p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn failure_probability_examples() {
        assert!((system_failure_probability(1, 3, 0.2, 1).unwrap() - 0.896).abs() < 1e-12);
        assert_eq!(system_failure_probability(4, 5, 0.0, 0).unwrap(), 1.0);
        assert!((system_failure_probability(7, 9, 0.37, 63).unwrap() - 1.0).abs() < 1e-9);
        assert!(system_failure_probability(2, 2, 0.5, 5).is_err());
    }

    #[test]
    fn curve_ends_at_one() {
        let c = failure_probability_curve(5, 3, 0.6).unwrap();
        assert_eq!(c.len(), 16);
        assert!((c.last().unwrap().1 - 1.0).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn nearest_rank_examples() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(nearest_rank(&s, 50.0), Some(5.0));
        assert_eq!(nearest_rank(&s, 95.0), Some(10.0));
        assert_eq!(nearest_rank(&[0.005], 95.0), Some(0.005));
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    fn log_with(messages: Vec<Message>, receptions: ReceptionTally) -> RunLog {
        RunLog {
            protocol: ProtocolKind::Dfcv,
            scenario: Scenario::Urban,
            vehicle_count: 2,
            seed: 1,
            max_attempts: 3,
            messages,
            events: Vec::new(),
            receptions,
            attempts: 0,
            successful_attempts: 0,
            mean_fog_size: None,
        }
    }

    fn message(id: u64, delivered: Option<f64>) -> Message {
        let mut m = Message::new(MessageId(id), VehicleId(0), [VehicleId(1)].into(), 256, 1.0).unwrap();
        if let Some(d) = delivered {
            m.record_delivery(VehicleId(1), 1.0 + d, 3).unwrap();
        }
        m
    }

    #[test]
    fn report_ratio_definitions() {
        let msgs: Vec<Message> = (0..100).map(|i| message(i, (i < 95).then_some(0.01))).collect();
        let r = compute_report(&log_with(msgs, ReceptionTally { delivered: 10, collided: 0, out_of_range: 0 }));
        assert!((r.delivery_probability.unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(r.collision_ratio, Some(0.0));
    }

    #[test]
    fn singleton_delay_stats() {
        let r = compute_report(&log_with(vec![message(0, Some(0.005))], ReceptionTally::default()));
        let d = r.delay_stats.unwrap();
        assert!((d.mean - 0.005).abs() < 1e-15);
        assert_eq!(d.mean, d.median);
        assert_eq!(d.median, d.p95);
    }

    #[test]
    fn empty_run_has_undefined_metrics() {
        let r = compute_report(&log_with(Vec::new(), ReceptionTally::default()));
        assert_eq!(r.delivery_probability, None);
        assert_eq!(r.delay_stats, None);
        assert_eq!(r.collision_ratio, None);
        assert!(r.failure_probability_curve.is_empty());
    }

    proptest! {
        #[test]
        fn pmf_symmetric_at_half(n in 0u64..400, k_frac in 0.0..=1.0f64) {
            let k = (k_frac * n as f64).floor() as u64;
            let a = binomial_pmf(k, n, 0.5).unwrap();
            let b = binomial_pmf(n - k, n, 0.5).unwrap();
            prop_assert!(rel(a, b) < 1e-13);
        }

        #[test]
        fn full_sum_is_one(n_v in 1u64..=100, tmax in 1u64..=100, d_f in 0.0..=1.0f64) {
            let n = n_v * tmax;
            let total = system_failure_probability(n_v, tmax, d_f, n).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
        }

        #[test]
        fn partial_sums_monotone(n in 1u64..60, d_f in 0.0..=1.0f64) {
            let mut prev = 0.0;
            for k in 0..=n {
                let s = system_failure_probability(n, 1, d_f, k).unwrap();
                prop_assert!(s + 1e-15 >= prev);
                prev = s;
            }
        }
    }
}
