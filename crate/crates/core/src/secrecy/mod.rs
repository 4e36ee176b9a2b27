//! The CHSH key-distribution pipeline.
//!
//! Alice and Bob feed uniformly random inputs to the box; Bob flips his
//! output when both inputs are 1, after which a PR box yields perfectly
//! correlated bits. The one-way key rate is bounded below by
//! `I(A:B) − I(A:E)`; when the box has `NL > 0` and Eve is restricted to a
//! two-valued classical state, `I(A:E)` is taken to be zero.
//!
//! Everything up to the post-flip joint distribution is exact; entropies are
//! computed in double precision.

mod simulation;
mod tripartite;

pub use simulation::{analytic_joint, simulate_protocol, SimComparison, SimTranscript};
pub use tripartite::{
    check_factorization, extend_with_dim2_eve, product_extension, FactorizationReport, TripartiteBox,
    TripartiteValidation,
};

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{combine, indices, NsBox};
use crate::measures::{chsh_index, nl, NlReport};
use crate::ratio::{cmp_sqrt, format_sig12, Ratio};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SecrecyError {
    #[error("PR fraction {0} is outside [0, 1]")]
    FractionOutOfRange(Ratio),
    #[error("visibility {0} is outside [0, 1]")]
    VisibilityOutOfRange(String),
    #[error("PR fraction {0} exceeds 1/sqrt(2): not realizable by a Werner state")]
    NotQuantumRealizable(f64),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("invalid grid: {0}")]
    Grid(String),
}

/// `p · P_PR^{αβγ} + (1 − p) · P_N`.
pub fn noisy_pr(label: [u8; 3], p_pr: &Ratio) -> Result<NsBox, SecrecyError> {
    if !p_pr.is_probability() {
        return Err(SecrecyError::FractionOutOfRange(p_pr.clone()));
    }
    let rest = Ratio::one() - p_pr;
    Ok(combine([(p_pr, &NsBox::pr(label[0], label[1], label[2])), (&rest, &NsBox::maximally_mixed())]))
}

/// Exact membership test for the noisy-PR family: the label and weight with
/// `b = noisy_pr(label, p)`, first label in lexicographic order.
pub fn detect_noisy_pr(b: &NsBox) -> Option<([u8; 3], Ratio)> {
    let report = nl(b);
    let four = Ratio::from_integer(4);
    crate::measures::chsh_labels().find_map(|label| {
        let p = &report.chsh[chsh_index(label)] / &four;
        match noisy_pr(label, &p) {
            Ok(candidate) if candidate == *b => Some((label, p)),
            _ => None,
        }
    })
}

/// Threshold flags of the noisy-PR family, decided exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdFlags {
    /// `p > 1/2`: some CHSH inequality is violated.
    pub bell_nonlocal: bool,
    /// `p > 1/(2√2)`.
    pub entanglement_certified: bool,
    /// `p ≤ 1/√2`: reachable with a Werner state.
    pub quantum_realizable: bool,
    /// `p > 0`: dimensionally restricted nonlocality is present.
    pub drn_present: bool,
}

pub fn thresholds(p_pr: &Ratio) -> ThresholdFlags {
    let half = Ratio::half();
    ThresholdFlags {
        bell_nonlocal: *p_pr > half,
        // p > 1/(2√2) ⇔ p > 0 and p² > 1/8
        entanglement_certified: cmp_sqrt(p_pr, &Ratio::new(1, 8)).is_gt(),
        // p ≤ 1/√2 ⇔ p ≤ 0 or p² ≤ 1/2
        quantum_realizable: cmp_sqrt(p_pr, &half).is_le(),
        drn_present: p_pr.is_positive(),
    }
}

/// The same flags for `p = W/√2`, decided exactly on the visibility.
pub fn thresholds_for_werner(w: &Ratio) -> ThresholdFlags {
    ThresholdFlags {
        // W/√2 > 1/2 ⇔ W > 1/√2
        bell_nonlocal: cmp_sqrt(w, &Ratio::half()).is_gt(),
        entanglement_certified: *w > Ratio::half(),
        quantum_realizable: *w <= Ratio::one(),
        drn_present: w.is_positive(),
    }
}

/// `p_PR = W/√2`.
pub fn werner_to_ppr(w: &Ratio) -> Result<f64, SecrecyError> {
    if !w.is_probability() {
        return Err(SecrecyError::VisibilityOutOfRange(w.to_string()));
    }
    Ok(w.to_f64() * FRAC_1_SQRT_2)
}

/// `W = √2 · p_PR`.
pub fn ppr_to_werner(p_pr: f64) -> Result<f64, SecrecyError> {
    if !(0.0..=1.0).contains(&p_pr) {
        return Err(SecrecyError::ProbabilityOutOfRange(p_pr));
    }
    if p_pr > FRAC_1_SQRT_2 {
        return Err(SecrecyError::NotQuantumRealizable(p_pr));
    }
    Ok((p_pr * SQRT_2).min(1.0))
}

/// The noisy-PR box realized by visibility `W`. The irrational weight
/// `W/√2` is replaced by its exact double-precision value.
pub fn noisy_pr_werner(label: [u8; 3], w: &Ratio) -> Result<NsBox, SecrecyError> {
    let p = Ratio::from_f64(werner_to_ppr(w)?).expect("finite");
    noisy_pr(label, &p)
}

/// Joint distribution `P(a, b')` indexed `[a][b']`.
pub type KeyJoint = [[Ratio; 2]; 2];

/// `P(a, b ⊕ xy)` averaged over uniformly random inputs.
pub fn protocol_transform(b: &NsBox) -> KeyJoint {
    let quarter = Ratio::new(1, 4);
    let mut joint: KeyJoint = Default::default();
    for (x, y, a, bb) in indices() {
        joint[a][bb ^ (x & y)] += &quarter * b.p(x, y, a, bb);
    }
    joint
}

pub fn joint_to_f64(joint: &KeyJoint) -> [[f64; 2]; 2] {
    std::array::from_fn(|a| std::array::from_fn(|b| joint[a][b].to_f64()))
}

fn xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// `h(q) = −q log₂ q − (1 − q) log₂(1 − q)`.
pub fn binary_entropy(q: f64) -> Result<f64, SecrecyError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(SecrecyError::ProbabilityOutOfRange(q));
    }
    Ok(-xlog2x(q) - xlog2x(1.0 - q))
}

/// `I(A:B)` in bits for a normalized 2×2 joint.
pub fn mutual_information(joint: &[[f64; 2]; 2]) -> f64 {
    let pa = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let pb = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut i = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let p = joint[a][b];
            if p > 0.0 {
                i += p * (p / (pa[a] * pb[b])).log2();
            }
        }
    }
    i.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    /// `I(A:B)` in bits on the post-flip key bits.
    pub i_ab: f64,
    /// Set when `NL > 0`; `I(A:E)` is then taken as zero.
    pub i_ae_assumed_zero: bool,
    /// An explicitly supplied `I(A:E)`, if any.
    pub i_ae_declared: Option<f64>,
    pub key_rate_lower_bound: f64,
    pub nl_gate: Ratio,
}

fn gated(i_ab: f64, nl_gate: Ratio) -> KeyRateResult {
    let secret = nl_gate.is_positive();
    KeyRateResult {
        i_ab,
        i_ae_assumed_zero: secret,
        i_ae_declared: None,
        key_rate_lower_bound: if secret { i_ab } else { 0.0 },
        nl_gate,
    }
}

/// `K→ ≥ I(A:B)` when `NL > 0`; no certified key otherwise.
pub fn key_rate(b: &NsBox) -> KeyRateResult {
    let i_ab = mutual_information(&joint_to_f64(&protocol_transform(b)));
    gated(i_ab, nl(b).nl)
}

/// The ungated bound `I(A:B) − I(A:E)` for a declared `I(A:E)`.
pub fn key_rate_with_declared_eve(b: &NsBox, i_ae: f64) -> KeyRateResult {
    let i_ab = mutual_information(&joint_to_f64(&protocol_transform(b)));
    KeyRateResult {
        i_ab,
        i_ae_assumed_zero: false,
        i_ae_declared: Some(i_ae),
        key_rate_lower_bound: i_ab - i_ae,
        nl_gate: nl(b).nl,
    }
}

pub(crate) fn key_rate_from_joint(joint: &[[f64; 2]; 2], nl_gate: Ratio) -> KeyRateResult {
    gated(mutual_information(joint), nl_gate)
}

/// `1 − h((1 − W/√2)/2)`.
pub fn werner_key_rate_closed_form(w: f64) -> f64 {
    1.0 - binary_entropy(0.5 * (1.0 - w * FRAC_1_SQRT_2)).expect("in range for W ∈ [0, 1]")
}

/// `n` evenly spaced points from `lo` to `hi`, both included.
pub fn grid(lo: &Ratio, hi: &Ratio, n: usize) -> Result<Vec<Ratio>, SecrecyError> {
    match n {
        0 => Err(SecrecyError::Grid("need at least one point".into())),
        1 if lo == hi => Ok(vec![lo.clone()]),
        1 => Err(SecrecyError::Grid("a single point needs lo = hi".into())),
        _ => {
            let step = (hi - lo) / Ratio::from_integer(n as i64 - 1);
            Ok((0..n).map(|k| lo + &(&step * &Ratio::from_integer(k as i64))).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyParam {
    /// The PR fraction `p`.
    PrFraction,
    /// The Werner visibility `W`, with `p = W/√2`.
    Werner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: Ratio,
    pub nl: Ratio,
    pub chsh_max: Ratio,
    pub i_ab: f64,
    pub key_rate: f64,
    pub flags: Option<ThresholdFlags>,
}

pub const SWEEP_HEADER: &str =
    "param,nl,chsh_max,i_ab,key_rate,bell_nonlocal,entanglement_certified,quantum_realizable";

impl SweepRow {
    pub fn from_box(param: Ratio, b: &NsBox, flags: Option<ThresholdFlags>) -> Self {
        let report: NlReport = nl(b);
        let chsh_max = report.max_chsh().1.abs();
        let kr = key_rate(b);
        SweepRow { param, nl: report.nl, chsh_max, i_ab: kr.i_ab, key_rate: kr.key_rate_lower_bound, flags }
    }

    pub fn csv_line(&self) -> String {
        let flag = |f: fn(&ThresholdFlags) -> bool| self.flags.as_ref().map_or(String::new(), |v| f(v).to_string());
        format!(
            "{},{},{},{},{},{},{},{}",
            format_sig12(self.param.to_f64()),
            format_sig12(self.nl.to_f64()),
            format_sig12(self.chsh_max.to_f64()),
            format_sig12(self.i_ab),
            format_sig12(self.key_rate),
            flag(|f| f.bell_nonlocal),
            flag(|f| f.entanglement_certified),
            flag(|f| f.quantum_realizable),
        )
    }
}

/// One row per grid point of the noisy-PR family, in grid order.
pub fn sweep(label: [u8; 3], param: FamilyParam, points: &[Ratio]) -> Result<Vec<SweepRow>, SecrecyError> {
    points
        .par_iter()
        .map(|v| {
            let (b, flags) = match param {
                FamilyParam::PrFraction => (noisy_pr(label, v)?, thresholds(v)),
                FamilyParam::Werner => (noisy_pr_werner(label, v)?, thresholds_for_werner(v)),
            };
            Ok(SweepRow::from_box(v.clone(), &b, Some(flags)))
        })
        .collect()
}

pub fn write_sweep_csv<W: io::Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_line())?;
    }
    Ok(())
}
