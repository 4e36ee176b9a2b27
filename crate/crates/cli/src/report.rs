//! The `analyze` report and its human-readable rendering.

use std::fmt::{self, Write as _};

use nsbox_core::boxes::{NsBox, ValidationReport};
use nsbox_core::decomposition::{decompose_pr_fraction, PrDecomposition};
use nsbox_core::measures::{
    chsh_index, chsh_labels, is_local_chsh, is_local_lp, nl, LocalityCertificate, LocalityWitness, NlReport,
};
use nsbox_core::ratio::{format_sig12, Ratio};
use nsbox_core::secrecy::{detect_noisy_pr, thresholds, ThresholdFlags};
use serde::{Deserialize, Serialize};

/// `n/d (decimal)`.
pub struct Exact<'a>(pub &'a Ratio);

impl fmt::Display for Exact<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.0, format_sig12(self.0.to_f64()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisyPrMatch {
    pub label: [u8; 3],
    pub p_pr: Ratio,
    pub thresholds: ThresholdFlags,
}

/// Outcome of the PR-fraction split as shown by `analyze`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PrSplit {
    Certified { decomposition: PrDecomposition },
    Counterexample { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub validation: ValidationReport,
    pub nl: NlReport,
    pub locality_chsh: LocalityCertificate,
    pub locality_lp: LocalityCertificate,
    /// `NL / 4`.
    pub pr_fraction: Ratio,
    pub pr_split: PrSplit,
    /// Present only when the box is exactly a noisy PR box.
    pub noisy_pr: Option<NoisyPrMatch>,
}

impl AnalyzeReport {
    /// Analyzes a valid box.
    pub fn new(b: &NsBox) -> Self {
        let report = nl(b);
        let pr_split = match decompose_pr_fraction(b) {
            Ok(decomposition) => PrSplit::Certified { decomposition },
            Err(e) => PrSplit::Counterexample { message: e.to_string() },
        };
        AnalyzeReport {
            validation: b.validate(),
            pr_fraction: report.pr_fraction(),
            nl: report,
            locality_chsh: is_local_chsh(b),
            locality_lp: is_local_lp(b),
            pr_split,
            noisy_pr: detect_noisy_pr(b).map(|(label, p_pr)| NoisyPrMatch {
                label,
                thresholds: thresholds(&p_pr),
                p_pr,
            }),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let r = &self.nl;
        let _ = writeln!(out, "validation: {}", self.validation);
        let e = &r.correlators.e;
        let _ = writeln!(
            out,
            "correlators: e00 = {}, e01 = {}, e10 = {}, e11 = {}",
            Exact(&e[0][0]),
            Exact(&e[0][1]),
            Exact(&e[1][0]),
            Exact(&e[1][1])
        );
        let _ = writeln!(
            out,
            "marginals: <A0> = {}, <A1> = {}, <B0> = {}, <B1> = {}",
            Exact(&r.correlators.ma[0]),
            Exact(&r.correlators.ma[1]),
            Exact(&r.correlators.mb[0]),
            Exact(&r.correlators.mb[1])
        );
        for label in chsh_labels() {
            let value = &r.chsh[chsh_index(label)];
            let _ = writeln!(out, "B_{}{}{} = {}", label[0], label[1], label[2], Exact(value));
        }
        for (i, v) in r.covchsh.iter().enumerate() {
            let _ = writeln!(out, "covB_{i} = {}", Exact(v));
        }
        for (i, v) in r.gamma.iter().enumerate() {
            let _ = writeln!(out, "Gamma_{} = {}", i + 1, Exact(v));
        }
        let _ = writeln!(out, "nl = {}", Exact(&r.nl));
        let _ = writeln!(out, "pr fraction = {}", Exact(&self.pr_fraction));
        let _ = writeln!(out, "locality (chsh facets): {}", certificate(&self.locality_chsh));
        let _ = writeln!(out, "locality (lp): {}", certificate(&self.locality_lp));
        match &self.pr_split {
            PrSplit::Certified { decomposition: d } => {
                let vertex = d.pr_vertex.map_or_else(|| "none".to_string(), |v| v.to_string());
                let _ = writeln!(
                    out,
                    "pr split: {} * {vertex} + rest; reconstructs={} residual_valid={} residual_local={} residual_nl_zero={}",
                    Exact(&d.p_pr),
                    d.checks.reconstructs,
                    d.checks.residual_valid,
                    d.checks.residual_local,
                    d.checks.residual_nl_zero
                );
            }
            PrSplit::Counterexample { message } => {
                let _ = writeln!(out, "pr split: not certified ({message})");
            }
        }
        if let Some(m) = &self.noisy_pr {
            let f = &m.thresholds;
            let _ = writeln!(
                out,
                "noisy pr:{}{}{} with p = {}: bell_nonlocal={} entanglement_certified={} quantum_realizable={} drn_present={}",
                m.label[0],
                m.label[1],
                m.label[2],
                Exact(&m.p_pr),
                f.bell_nonlocal,
                f.entanglement_certified,
                f.quantum_realizable,
                f.drn_present
            );
        }
        out
    }
}

fn certificate(c: &LocalityCertificate) -> String {
    let verdict = if c.is_local { "local" } else { "nonlocal" };
    let witness = match &c.witness {
        LocalityWitness::DeterministicWeights { weights } => {
            let used: Vec<String> =
                weights.iter().filter(|(_, w)| !w.is_zero()).map(|(v, w)| format!("{w}*{v}")).collect();
            format!("weights {}", used.join(" + "))
        }
        LocalityWitness::ChshBounded { label, value } => {
            format!("max |B| at B_{}{}{} = {}", label[0], label[1], label[2], Exact(value))
        }
        LocalityWitness::ChshViolation { label, value } => {
            format!("violation B_{}{}{} = {}", label[0], label[1], label[2], Exact(value))
        }
        LocalityWitness::Infeasible => "no convex weights over deterministic boxes".to_string(),
    };
    format!("{verdict} ({witness})")
}
