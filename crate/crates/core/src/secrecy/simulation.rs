//! Seeded Monte Carlo runs of the CHSH key-distribution protocol.
//!
//! Generator: `ChaCha20Rng::seed_from_u64(seed)` split into two substreams
//! with `set_stream`. Stream 0 drives input choice: one `next_u64` per round,
//! `x` is bit 0 and `y` is bit 1. Stream 1 drives outcomes: one `next_u64`
//! per round mapped to `u = (v >> 11) · 2⁻⁵³ ∈ [0, 1)`, and the outcome is
//! the first `(a, b)` in the order `00, 01, 10, 11` whose cumulative
//! double-precision probability exceeds `u`. The ChaCha20 keystream is fully
//! specified, so transcripts are identical on every platform.

use std::io;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::{indices, NsBox};
use crate::measures::{nl, CorrelatorSet, NlReport};
use crate::ratio::Ratio;

use super::{joint_to_f64, key_rate, key_rate_from_joint, protocol_transform, KeyRateResult};

type Counts = [[[[u64; 2]; 2]; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTranscript {
    pub seed: u64,
    pub rounds: u64,
    /// `[x, y, a, b]` per round.
    pub records: Vec<[u8; 4]>,
    pub counts: Counts,
    /// Relative frequencies per input pair; `None` while some pair is unvisited.
    #[serde(with = "option_box")]
    pub empirical_box: Option<NsBox>,
    /// Needs every input pair visited.
    pub empirical_nl: Option<NlReport>,
    pub empirical_key_rate: KeyRateResult,
}

mod option_box {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Option<NsBox>, s: S) -> Result<S::Ok, S::Error> {
        b.as_ref().map(NsBox::table).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NsBox>, D::Error> {
        Ok(Option::<crate::boxes::Table>::deserialize(d)?.map(NsBox::from_table))
    }
}

fn unit_interval(v: u64) -> f64 {
    (v >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Runs `rounds` rounds of the protocol on `b`.
pub fn simulate_protocol(b: &NsBox, rounds: u64, seed: u64) -> SimTranscript {
    assert!(rounds >= 1, "at least one round");
    let mut inputs = ChaCha20Rng::seed_from_u64(seed);
    inputs.set_stream(0);
    let mut outcomes = ChaCha20Rng::seed_from_u64(seed);
    outcomes.set_stream(1);

    let cumulative: [[[f64; 4]; 2]; 2] = std::array::from_fn(|x| {
        std::array::from_fn(|y| {
            let mut acc = 0.0;
            std::array::from_fn(|k| {
                acc += b.p(x, y, k >> 1, k & 1).to_f64();
                acc
            })
        })
    });

    let mut records = Vec::with_capacity(rounds as usize);
    let mut counts = Counts::default();
    for _ in 0..rounds {
        let v = inputs.next_u64();
        let (x, y) = ((v & 1) as usize, ((v >> 1) & 1) as usize);
        let u = unit_interval(outcomes.next_u64());
        let cum = &cumulative[x][y];
        let k = cum.iter().position(|&c| u < c).unwrap_or_else(|| {
            // Rounding left u above the last cumulative value.
            (0..4).rev().find(|&k| !b.p(x, y, k >> 1, k & 1).is_zero()).unwrap_or(3)
        });
        let (a, bb) = (k >> 1, k & 1);
        counts[x][y][a][bb] += 1;
        records.push([x as u8, y as u8, a as u8, bb as u8]);
    }
    finish(seed, rounds, records, counts)
}

fn pair_totals(counts: &Counts) -> [[u64; 2]; 2] {
    std::array::from_fn(|x| std::array::from_fn(|y| counts[x][y].iter().flatten().sum()))
}

fn ratio_u(n: u64, d: u64) -> Ratio {
    Ratio::from_bigints(n.into(), d.into())
}

fn empirical_box(counts: &Counts) -> Option<NsBox> {
    let totals = pair_totals(counts);
    if totals.iter().flatten().any(|&n| n == 0) {
        return None;
    }
    Some(NsBox::from_fn(|x, y, a, b| ratio_u(counts[x][y][a][b], totals[x][y])))
}

/// Correlators from per-pair conditional frequencies; marginals pool every
/// round with the relevant input, weighted by `weights[x][y]`.
fn pooled_correlators(cond: &NsBox, weights: &[[Ratio; 2]; 2]) -> CorrelatorSet {
    let mut e: [[Ratio; 2]; 2] = Default::default();
    let mut local_a: [[Ratio; 2]; 2] = Default::default();
    let mut local_b: [[Ratio; 2]; 2] = Default::default();
    for (x, y, a, b) in indices() {
        let p = cond.p(x, y, a, b);
        if a == b {
            e[x][y] += p
        } else {
            e[x][y] -= p
        }
        if a == 0 {
            local_a[x][y] += p
        } else {
            local_a[x][y] -= p
        }
        if b == 0 {
            local_b[x][y] += p
        } else {
            local_b[x][y] -= p
        }
    }
    let ma = std::array::from_fn(|x| {
        (&weights[x][0] * &local_a[x][0] + &weights[x][1] * &local_a[x][1]) / (&weights[x][0] + &weights[x][1])
    });
    let mb = std::array::from_fn(|y| {
        (&weights[0][y] * &local_b[0][y] + &weights[1][y] * &local_b[1][y]) / (&weights[0][y] + &weights[1][y])
    });
    CorrelatorSet { e, ma, mb }
}

fn finish(seed: u64, rounds: u64, records: Vec<[u8; 4]>, counts: Counts) -> SimTranscript {
    let totals = pair_totals(&counts);
    let empirical_box = empirical_box(&counts);
    let weights = totals.map(|row| row.map(|n| ratio_u(n, 1)));
    let empirical_nl = empirical_box.as_ref().map(|b| NlReport::from_correlators(pooled_correlators(b, &weights)));

    let mut joint = [[0u64; 2]; 2];
    for (x, y, a, b) in indices() {
        joint[a][b ^ (x & y)] += counts[x][y][a][b];
    }
    let joint_f = joint.map(|row| row.map(|c| c as f64 / rounds as f64));
    let gate = empirical_nl.as_ref().map_or_else(Ratio::zero, |r| r.nl.clone());
    let empirical_key_rate = key_rate_from_joint(&joint_f, gate);

    SimTranscript { seed, rounds, records, counts, empirical_box, empirical_nl, empirical_key_rate }
}

/// Empirical-vs-analytic comparison with delta-method standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimComparison {
    pub analytic_nl: f64,
    pub empirical_nl: f64,
    pub nl_standard_error: f64,
    pub nl_z: f64,
    pub analytic_i_ab: f64,
    pub empirical_i_ab: f64,
    pub i_ab_standard_error: f64,
    pub i_ab_z: f64,
}

fn z_score(estimate: f64, truth: f64, se: f64) -> f64 {
    let d = estimate - truth;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

impl SimTranscript {
    pub fn write_records<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,a,b")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r[0], r[1], r[2], r[3])?;
        }
        Ok(())
    }

    pub fn pair_counts(&self) -> [[u64; 2]; 2] {
        pair_totals(&self.counts)
    }

    /// Standard error of the empirical `NL` by the delta method: the gradient
    /// with respect to each conditional frequency is taken by exact central
    /// differences and combined with the per-pair multinomial covariance.
    pub fn nl_standard_error(&self) -> Option<f64> {
        let cond = self.empirical_box.as_ref()?;
        let totals = self.pair_counts();
        let weights = totals.map(|row| row.map(|n| ratio_u(n, 1)));
        let step = Ratio::from_bigints(1.into(), num_bigint::BigInt::from(1u64 << 30));
        let eval = |t: &NsBox| NlReport::from_correlators(pooled_correlators(t, &weights)).nl;
        let mut variance = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let mut grad = [0.0; 4];
                let mut probs = [0.0; 4];
                for k in 0..4 {
                    let (a, b) = (k >> 1, k & 1);
                    let shifted = |delta: &Ratio| {
                        let mut t = cond.clone().into_table();
                        t[x][y][a][b] += delta;
                        NsBox::from_table(t)
                    };
                    let up = eval(&shifted(&step));
                    let down = eval(&shifted(&-&step));
                    grad[k] = ((up - down) / (&step + &step)).to_f64();
                    probs[k] = cond.p(x, y, a, b).to_f64();
                }
                let mean: f64 = grad.iter().zip(&probs).map(|(g, p)| g * p).sum();
                let second: f64 = grad.iter().zip(&probs).map(|(g, p)| g * g * p).sum();
                variance += (second - mean * mean).max(0.0) / totals[x][y] as f64;
            }
        }
        Some(variance.sqrt())
    }

    /// Delta-method standard error of the empirical `I(A:B)`.
    pub fn i_ab_standard_error(&self) -> f64 {
        let mut joint = [[0.0f64; 2]; 2];
        for r in 0..16 {
            let (x, y, a, b) = ((r >> 3) & 1, (r >> 2) & 1, (r >> 1) & 1, r & 1);
            joint[a][b ^ (x & y)] += self.counts[x][y][a][b] as f64;
        }
        let n = self.rounds as f64;
        let joint = joint.map(|row| row.map(|c| c / n));
        let pa = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
        let pb = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
        let (mut mean, mut second) = (0.0, 0.0);
        for a in 0..2 {
            for b in 0..2 {
                let p = joint[a][b];
                if p > 0.0 {
                    let g = (p / (pa[a] * pb[b])).log2();
                    mean += p * g;
                    second += p * g * g;
                }
            }
        }
        ((second - mean * mean).max(0.0) / n).sqrt()
    }

    /// z-scores of the empirical `NL` and `I(A:B)` against the exact values
    /// of `b`. `None` when some input pair was never visited.
    pub fn compare(&self, b: &NsBox) -> Option<SimComparison> {
        let empirical_nl = self.empirical_nl.as_ref()?.nl.to_f64();
        let nl_standard_error = self.nl_standard_error()?;
        let analytic_nl = nl(b).nl.to_f64();
        let analytic_i_ab = key_rate(b).i_ab;
        let empirical_i_ab = self.empirical_key_rate.i_ab;
        let i_ab_standard_error = self.i_ab_standard_error();
        Some(SimComparison {
            analytic_nl,
            empirical_nl,
            nl_standard_error,
            nl_z: z_score(empirical_nl, analytic_nl, nl_standard_error),
            analytic_i_ab,
            empirical_i_ab,
            i_ab_standard_error,
            i_ab_z: z_score(empirical_i_ab, analytic_i_ab, i_ab_standard_error),
        })
    }
}

/// Analytic post-flip joint, exposed for callers comparing against counts.
pub fn analytic_joint(b: &NsBox) -> [[f64; 2]; 2] {
    joint_to_f64(&protocol_transform(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secrecy::noisy_pr;

    #[test]
    fn same_seed_same_transcript() {
        let b = noisy_pr([0, 0, 0], &Ratio::new(4, 5)).unwrap();
        let t1 = simulate_protocol(&b, 2000, 42);
        let t2 = simulate_protocol(&b, 2000, 42);
        assert_eq!(t1, t2);
        let t3 = simulate_protocol(&b, 2000, 43);
        assert_ne!(t1.records, t3.records);
    }

    #[test]
    fn single_round_is_degenerate() {
        let t = simulate_protocol(&NsBox::maximally_mixed(), 1, 7);
        assert_eq!(t.records.len(), 1);
        assert!(t.empirical_box.is_none());
        assert!(t.empirical_nl.is_none());
        assert!(t.compare(&NsBox::maximally_mixed()).is_none());
        assert_eq!(t.empirical_key_rate.key_rate_lower_bound, 0.0);
    }

    #[test]
    fn pr_box_rounds_always_agree_after_flip() {
        let t = simulate_protocol(&NsBox::pr(0, 0, 0), 5000, 1);
        for r in &t.records {
            assert_eq!(r[2] ^ r[3], r[0] & r[1]);
        }
        let report = t.empirical_nl.as_ref().unwrap();
        assert_eq!(report.chsh[0], Ratio::from_integer(4));
        // Sampled marginals are not exactly zero, so NL sits just below 4.
        assert!((report.nl.to_f64() - 4.0).abs() < 0.05);
        // Perfect agreement: I(A:B) is the entropy of Alice's sampled bit.
        let ones = t.records.iter().filter(|r| r[2] == 1).count() as f64 / 5000.0;
        let h = crate::secrecy::binary_entropy(ones).unwrap();
        assert!((t.empirical_key_rate.i_ab - h).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_outcomes_never_occur() {
        let b = NsBox::deterministic(1, 0, 1, 1);
        let t = simulate_protocol(&b, 1000, 3);
        for r in &t.records {
            let (x, y, a, bb) = (r[0] as usize, r[1] as usize, r[2] as usize, r[3] as usize);
            assert!(b.p(x, y, a, bb).is_one());
        }
    }

    #[test]
    fn records_csv() {
        let t = simulate_protocol(&NsBox::maximally_mixed(), 3, 11);
        let mut out = Vec::new();
        t.write_records(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("x,y,a,b\n"));
    }

    #[test]
    fn analytic_joint_matches_flip_agreement() {
        let j = analytic_joint(&noisy_pr([0, 0, 0], &Ratio::new(4, 5)).unwrap());
        assert!((j[0][0] + j[1][1] - 0.9).abs() < 1e-15);
    }
}
