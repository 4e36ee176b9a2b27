//! Eve-extended boxes `P(abe|A_xB_yE_z)` and the factorization check.

use serde::{Deserialize, Serialize};

use crate::boxes::NsBox;
use crate::decomposition::Dim2LocalModel;
use crate::ratio::Ratio;

/// Tripartite box with binary outputs, Alice and Bob with two inputs each and
/// Eve with `eve_inputs ≥ 1` inputs. Entries are stored row-major in
/// `[x][y][z][a][b][e]` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripartiteBox {
    eve_inputs: usize,
    q: Vec<Ratio>,
}

/// Per-invariant failures, each with the violating indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripartiteValidation {
    /// `[x, y, z, a, b, e]`.
    pub negative_entries: Vec<[usize; 6]>,
    /// `[x, y, z]`.
    pub unnormalized: Vec<[usize; 3]>,
    /// `[y, z, b, e]`: the `(b, e)` marginal depends on Alice's input.
    pub signaling_from_alice: Vec<[usize; 4]>,
    /// `[x, z, a, e]`: the `(a, e)` marginal depends on Bob's input.
    pub signaling_from_bob: Vec<[usize; 4]>,
    /// `[x, y, a, b]`: the `(a, b)` marginal depends on Eve's input.
    pub signaling_from_eve: Vec<[usize; 4]>,
}

impl TripartiteValidation {
    pub fn is_valid(&self) -> bool {
        self.negative_entries.is_empty()
            && self.unnormalized.is_empty()
            && self.signaling_from_alice.is_empty()
            && self.signaling_from_bob.is_empty()
            && self.signaling_from_eve.is_empty()
    }
}

impl TripartiteBox {
    fn offset(&self, x: usize, y: usize, z: usize, a: usize, b: usize, e: usize) -> usize {
        debug_assert!(x < 2 && y < 2 && z < self.eve_inputs && a < 2 && b < 2 && e < 2);
        ((((x * 2 + y) * self.eve_inputs + z) * 2 + a) * 2 + b) * 2 + e
    }

    pub fn from_entries(eve_inputs: usize, q: Vec<Ratio>) -> Self {
        assert!(eve_inputs >= 1, "Eve needs at least one input");
        assert_eq!(q.len(), 32 * eve_inputs, "entry count");
        TripartiteBox { eve_inputs, q }
    }

    pub fn from_fn<F>(eve_inputs: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize, usize, usize, usize) -> Ratio,
    {
        let mut q = Vec::with_capacity(32 * eve_inputs);
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..eve_inputs {
                    for a in 0..2 {
                        for b in 0..2 {
                            for e in 0..2 {
                                q.push(f(x, y, z, a, b, e));
                            }
                        }
                    }
                }
            }
        }
        TripartiteBox { eve_inputs, q }
    }

    pub fn eve_inputs(&self) -> usize {
        self.eve_inputs
    }

    pub fn q(&self, x: usize, y: usize, z: usize, a: usize, b: usize, e: usize) -> &Ratio {
        &self.q[self.offset(x, y, z, a, b, e)]
    }

    /// `Σ_e P(abe|xyz)` for a fixed Eve input.
    pub fn alice_bob_marginal(&self, z: usize) -> NsBox {
        NsBox::from_fn(|x, y, a, b| self.q(x, y, z, a, b, 0) + self.q(x, y, z, a, b, 1))
    }

    /// `P(e|z)`, read off `x = y = 0`.
    pub fn eve_marginal(&self, z: usize, e: usize) -> Ratio {
        (0..4).map(|k| self.q(0, 0, z, k >> 1, k & 1, e)).sum()
    }

    pub fn validate(&self) -> TripartiteValidation {
        let mut report = TripartiteValidation::default();
        let nz = self.eve_inputs;
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..nz {
                    let mut total = Ratio::zero();
                    for k in 0..8 {
                        let (a, b, e) = (k >> 2, (k >> 1) & 1, k & 1);
                        let v = self.q(x, y, z, a, b, e);
                        if v.is_negative() {
                            report.negative_entries.push([x, y, z, a, b, e]);
                        }
                        total += v;
                    }
                    if !total.is_one() {
                        report.unnormalized.push([x, y, z]);
                    }
                }
            }
        }
        let sum2 = |f: &dyn Fn(usize) -> Ratio| f(0) + f(1);
        for z in 0..nz {
            for y in 0..2 {
                for b in 0..2 {
                    for e in 0..2 {
                        let m = |x: usize| sum2(&|a| self.q(x, y, z, a, b, e).clone());
                        if m(0) != m(1) {
                            report.signaling_from_alice.push([y, z, b, e]);
                        }
                    }
                }
            }
            for x in 0..2 {
                for a in 0..2 {
                    for e in 0..2 {
                        let m = |y: usize| sum2(&|b| self.q(x, y, z, a, b, e).clone());
                        if m(0) != m(1) {
                            report.signaling_from_bob.push([x, z, a, e]);
                        }
                    }
                }
            }
        }
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        let m = |z: usize| sum2(&|e| self.q(x, y, z, a, b, e).clone());
                        let first = m(0);
                        if (1..nz).any(|z| m(z) != first) {
                            report.signaling_from_eve.push([x, y, a, b]);
                        }
                    }
                }
            }
        }
        report
    }
}

/// Eve holds the two-valued hidden variable: one Eve input whose outcome is
/// `λ`, `P(abe|xy) = p_e P_e(a|x) P_e(b|y)`.
pub fn extend_with_dim2_eve(m: &Dim2LocalModel) -> TripartiteBox {
    TripartiteBox::from_fn(1, |x, y, _, a, b, e| &m.weights[e] * &m.alice[e][x][a] * &m.bob[e][y][b])
}

/// `P(ab|xy) · P(e|z)`, with `eve[z] = [P(0|z), P(1|z)]`.
pub fn product_extension(b: &NsBox, eve: &[[Ratio; 2]]) -> TripartiteBox {
    TripartiteBox::from_fn(eve.len(), |x, y, z, a, bb, e| b.p(x, y, a, bb) * &eve[z][e])
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// `[x, y, z, a, b]` where `Σ_e q ≠ P(ab|xy)`.
    pub marginal_mismatches: Vec<[usize; 5]>,
    /// `[x, y, z, a, b, e]` where `q ≠ P(ab|xy) P(e|z)`.
    pub factorization_violations: Vec<[usize; 6]>,
}

impl FactorizationReport {
    pub fn marginal_ok(&self) -> bool {
        self.marginal_mismatches.is_empty()
    }

    pub fn factorizes(&self) -> bool {
        self.marginal_ok() && self.factorization_violations.is_empty()
    }
}

/// Checks, for every Eve input, that the extension marginalizes to `b` and
/// factorizes as `P(ab|xy) P(e|z)`.
pub fn check_factorization(t: &TripartiteBox, b: &NsBox) -> FactorizationReport {
    let mut report = FactorizationReport::default();
    for z in 0..t.eve_inputs() {
        let eve = [t.eve_marginal(z, 0), t.eve_marginal(z, 1)];
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for bb in 0..2 {
                        let target = b.p(x, y, a, bb);
                        if &(t.q(x, y, z, a, bb, 0) + t.q(x, y, z, a, bb, 1)) != target {
                            report.marginal_mismatches.push([x, y, z, a, bb]);
                        }
                        for (e, pe) in eve.iter().enumerate() {
                            if *t.q(x, y, z, a, bb, e) != target * pe {
                                report.factorization_violations.push([x, y, z, a, bb, e]);
                            }
                        }
                    }
                }
            }
        }
    }
    report
}
