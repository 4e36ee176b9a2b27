//! Correlators, CHSH functionals, the covariance-CHSH triad and the `NL`
//! measure, plus two independent Bell-locality certifiers: the complete set
//! of eight CHSH facets and exact LP membership in the local polytope.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{indices, Mixture, NsBox, VertexId};
use crate::lp;
use crate::ratio::{sign, Ratio};

/// `⟨A_xB_y⟩`, `⟨A_x⟩` and `⟨B_y⟩` with outputs mapped to `(−1)^a`, `(−1)^b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelatorSet {
    pub e: [[Ratio; 2]; 2],
    pub ma: [Ratio; 2],
    pub mb: [Ratio; 2],
}

impl CorrelatorSet {
    /// `cov(A_x, B_y) = ⟨A_xB_y⟩ − ⟨A_x⟩⟨B_y⟩`.
    pub fn covariances(&self) -> [[Ratio; 2]; 2] {
        std::array::from_fn(|x| std::array::from_fn(|y| &self.e[x][y] - &(&self.ma[x] * &self.mb[y])))
    }
}

pub fn correlators(b: &NsBox) -> CorrelatorSet {
    let mut e: [[Ratio; 2]; 2] = Default::default();
    for (x, y, a, bb) in indices() {
        let p = b.p(x, y, a, bb);
        if a == bb {
            e[x][y] += p;
        } else {
            e[x][y] -= p;
        }
    }
    let ma = std::array::from_fn(|x| b.alice_marginal(x, 0) - b.alice_marginal(x, 1));
    let mb = std::array::from_fn(|y| b.bob_marginal(y, 0) - b.bob_marginal(y, 1));
    CorrelatorSet { e, ma, mb }
}

/// Index of `B_{αβγ}` in [`NlReport::chsh`].
pub fn chsh_index(label: [u8; 3]) -> usize {
    (label[0] as usize) << 2 | (label[1] as usize) << 1 | label[2] as usize
}

pub fn chsh_labels() -> impl Iterator<Item = [u8; 3]> {
    (0u8..8).map(|k| [(k >> 2) & 1, (k >> 1) & 1, k & 1])
}

/// `B_{αβγ} = (−1)^γ e00 + (−1)^{β⊕γ} e01 + (−1)^{α⊕γ} e10 + (−1)^{α⊕β⊕γ⊕1} e11`.
pub fn chsh_of(e: &[[Ratio; 2]; 2], label: [u8; 3]) -> Ratio {
    let [alpha, beta, gamma] = label;
    sign(gamma) * &e[0][0]
        + sign(beta ^ gamma) * &e[0][1]
        + sign(alpha ^ gamma) * &e[1][0]
        + sign(alpha ^ beta ^ gamma ^ 1) * &e[1][1]
}

pub fn chsh(b: &NsBox, alpha: u8, beta: u8, gamma: u8) -> Ratio {
    chsh_of(&correlators(b).e, [alpha, beta, gamma])
}

/// `covB_i` for `i = 2α + β`, applied to a covariance (or correlator) matrix.
pub fn cov_chsh_of(c: &[[Ratio; 2]; 2], i: usize) -> Ratio {
    assert!(i < 4, "covariance CHSH index {i} out of range");
    let (alpha, beta) = ((i >> 1) as u8, (i & 1) as u8);
    (&c[0][0] + &(sign(beta) * &c[0][1]) + sign(alpha) * &c[1][0] + sign(alpha ^ beta ^ 1) * &c[1][1]).abs()
}

pub fn cov_chsh(b: &NsBox, i: usize) -> Ratio {
    cov_chsh_of(&correlators(b).covariances(), i)
}

/// `Γ_1..3` from the four covariance CHSH values.
pub fn gamma_triad(cb: &[Ratio; 4]) -> [Ratio; 3] {
    let d = |i: usize, j: usize| (&cb[i] - &cb[j]).abs();
    [(d(0, 1) - d(2, 3)).abs(), (d(0, 2) - d(1, 3)).abs(), (d(0, 3) - d(1, 2)).abs()]
}

/// The full pipeline correlators → covariances → covB → Γ → NL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlReport {
    pub correlators: CorrelatorSet,
    /// Indexed by [`chsh_index`].
    pub chsh: [Ratio; 8],
    pub covariances: [[Ratio; 2]; 2],
    /// Indexed by `2α + β`.
    pub covchsh: [Ratio; 4],
    pub gamma: [Ratio; 3],
    pub nl: Ratio,
}

impl NlReport {
    pub fn from_correlators(correlators: CorrelatorSet) -> Self {
        let chsh =
            std::array::from_fn(|k| chsh_of(&correlators.e, [(k >> 2) as u8 & 1, (k >> 1) as u8 & 1, k as u8 & 1]));
        let covariances = correlators.covariances();
        let covchsh = std::array::from_fn(|i| cov_chsh_of(&covariances, i));
        let gamma = gamma_triad(&covchsh);
        let nl = Ratio::min_of(&gamma).expect("three values");
        NlReport { correlators, chsh, covariances, covchsh, gamma, nl }
    }

    /// The label maximizing `|B_{αβγ}|`, first in lexicographic order on ties.
    pub fn max_chsh(&self) -> ([u8; 3], Ratio) {
        let mut best = ([0, 0, 0], self.chsh[0].clone());
        for label in chsh_labels() {
            let v = &self.chsh[chsh_index(label)];
            if v.abs() > best.1.abs() {
                best = (label, v.clone());
            }
        }
        best
    }

    /// The PR-box fraction `NL / 4`.
    pub fn pr_fraction(&self) -> Ratio {
        &self.nl / &Ratio::from_integer(4)
    }
}

pub fn nl(b: &NsBox) -> NlReport {
    NlReport::from_correlators(correlators(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalityWitness {
    /// Convex weights over the 16 deterministic vertices reconstructing the box.
    DeterministicWeights { weights: Vec<(VertexId, Ratio)> },
    /// All eight CHSH values satisfy `|B| ≤ 2`; the largest is reported.
    ChshBounded { label: [u8; 3], value: Ratio },
    /// A CHSH inequality violated with `|B| > 2`.
    ChshViolation { label: [u8; 3], value: Ratio },
    /// The LP over deterministic vertices has no solution.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalityCertificate {
    pub is_local: bool,
    pub witness: LocalityWitness,
}

impl LocalityCertificate {
    /// Checks the witness against `b`: weights reconstruct exactly, CHSH
    /// values are recomputed.
    pub fn is_sound_for(&self, b: &NsBox) -> bool {
        match (&self.witness, self.is_local) {
            (LocalityWitness::DeterministicWeights { weights }, true) => {
                let m = Mixture::new(weights.iter().map(|(v, w)| (w.clone(), v.to_box())).collect());
                !weights.iter().any(|(v, _)| v.is_pr()) && crate::boxes::mix(&m).is_ok_and(|r| &r == b)
            }
            (LocalityWitness::ChshBounded { label, value }, true) => {
                let two = Ratio::from_integer(2);
                chsh(b, label[0], label[1], label[2]) == *value
                    && chsh_labels().all(|l| chsh(b, l[0], l[1], l[2]).abs() <= two)
            }
            (LocalityWitness::ChshViolation { label, value }, false) => {
                chsh(b, label[0], label[1], label[2]) == *value && value.abs() > Ratio::from_integer(2)
            }
            (LocalityWitness::Infeasible, false) => true,
            _ => false,
        }
    }
}

/// Bell locality via the complete facet set: local iff `|B_{αβγ}| ≤ 2` for
/// all eight labels.
pub fn is_local_chsh(b: &NsBox) -> LocalityCertificate {
    let e = correlators(b).e;
    let mut best = ([0u8; 3], chsh_of(&e, [0, 0, 0]));
    for label in chsh_labels().skip(1) {
        let v = chsh_of(&e, label);
        if v.abs() > best.1.abs() {
            best = (label, v);
        }
    }
    let (label, value) = best;
    if value.abs() > Ratio::from_integer(2) {
        LocalityCertificate { is_local: false, witness: LocalityWitness::ChshViolation { label, value } }
    } else {
        LocalityCertificate { is_local: true, witness: LocalityWitness::ChshBounded { label, value } }
    }
}

pub(crate) fn flatten(b: &NsBox) -> Vec<Ratio> {
    indices().map(|(x, y, a, bb)| b.p(x, y, a, bb).clone()).collect()
}

/// Convex weights of `target` over `vertices`, exact.
pub(crate) fn weights_over(vertices: &[NsBox], target: &NsBox) -> Option<Vec<Ratio>> {
    let points: Vec<Vec<Ratio>> = vertices.iter().map(flatten).collect();
    lp::convex_weights(&points, &flatten(target))
}

/// Bell locality via exact membership in the convex hull of the 16
/// deterministic boxes.
pub fn is_local_lp(b: &NsBox) -> LocalityCertificate {
    let ids: Vec<VertexId> = VertexId::deterministic_ids().collect();
    let vertices: Vec<NsBox> = ids.iter().map(|v| v.to_box()).collect();
    match weights_over(&vertices, b) {
        Some(w) => LocalityCertificate {
            is_local: true,
            witness: LocalityWitness::DeterministicWeights { weights: ids.into_iter().zip(w).collect() },
        },
        None => LocalityCertificate { is_local: false, witness: LocalityWitness::Infeasible },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecomposeError {
    #[error("box is not in the nonsignaling polytope: {0}")]
    NotNonsignaling(String),
}

/// Weights over the 24 vertices reconstructing `b` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexDecomposition {
    pub weights: Vec<(VertexId, Ratio)>,
}

impl VertexDecomposition {
    pub fn to_mixture(&self) -> Mixture {
        Mixture::new(self.weights.iter().map(|(v, w)| (w.clone(), v.to_box())).collect())
    }
}

pub fn decompose_over_vertices(b: &NsBox) -> Result<VertexDecomposition, DecomposeError> {
    let ids: Vec<VertexId> = VertexId::all().collect();
    let vertices: Vec<NsBox> = ids.iter().map(|v| v.to_box()).collect();
    let w = weights_over(&vertices, b).ok_or_else(|| DecomposeError::NotNonsignaling(b.validate().to_string()))?;
    Ok(VertexDecomposition { weights: ids.into_iter().zip(w).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::{mix, random_nonsignaling_box, random_product_box, Relabeling};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(n: i64, d: i64) -> Ratio {
        Ratio::new(n, d)
    }

    fn noisy(p: Ratio) -> NsBox {
        let q = Ratio::one() - &p;
        mix(&Mixture::new(vec![(p, NsBox::pr(0, 0, 0)), (q, NsBox::maximally_mixed())])).unwrap()
    }

    #[test]
    fn correlator_examples() {
        let c = correlators(&NsBox::pr(0, 0, 0));
        assert_eq!(c.e, [[r(1, 1), r(1, 1)], [r(1, 1), r(-1, 1)]]);
        assert_eq!(c.ma, [r(0, 1), r(0, 1)]);
        assert_eq!(c.mb, [r(0, 1), r(0, 1)]);

        let c = correlators(&NsBox::deterministic(0, 0, 0, 0));
        assert!(c.e.iter().flatten().chain(&c.ma).chain(&c.mb).all(Ratio::is_one));

        let c = correlators(&NsBox::maximally_mixed());
        assert!(c.e.iter().flatten().chain(&c.ma).chain(&c.mb).all(Ratio::is_zero));
    }

    #[test]
    fn chsh_examples() {
        assert_eq!(chsh(&NsBox::pr(0, 0, 0), 0, 0, 0), r(4, 1));
        for label in chsh_labels() {
            assert!(chsh(&NsBox::maximally_mixed(), label[0], label[1], label[2]).is_zero());
        }
        // Matched labels: B_{αβγ}(P_PR^{αβγ}) = 4.
        for v in VertexId::pr_ids() {
            let VertexId::Pr(l) = v else { unreachable!() };
            assert_eq!(chsh(&v.to_box(), l[0], l[1], l[2]), r(4, 1));
        }
    }

    #[test]
    fn deterministic_boxes_saturate_every_chsh() {
        let two = r(2, 1);
        for v in VertexId::deterministic_ids() {
            let b = v.to_box();
            for l in chsh_labels() {
                assert_eq!(chsh(&b, l[0], l[1], l[2]).abs(), two, "{v} {l:?}");
            }
        }
    }

    #[test]
    fn cov_chsh_examples() {
        assert_eq!(cov_chsh(&NsBox::pr(0, 0, 0), 0), r(4, 1));
        for i in 0..4 {
            assert!(cov_chsh(&NsBox::deterministic(0, 0, 0, 0), i).is_zero());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let b = random_product_box(&mut rng);
            for i in 0..4 {
                assert!(cov_chsh(&b, i).is_zero());
            }
        }
    }

    #[test]
    fn nl_worked_example() {
        let b = mix(&Mixture::new(vec![(r(3, 4), NsBox::pr(0, 0, 0)), (r(1, 4), NsBox::pr(0, 0, 1))])).unwrap();
        let rep = nl(&b);
        assert_eq!(rep.correlators.e, [[r(1, 2), r(1, 2)], [r(1, 2), r(-1, 2)]]);
        assert_eq!(rep.covchsh, [r(2, 1), r(0, 1), r(0, 1), r(0, 1)]);
        assert_eq!(rep.gamma, [r(2, 1), r(2, 1), r(2, 1)]);
        assert_eq!(rep.nl, r(2, 1));
    }

    #[test]
    fn nl_on_vertices_and_noisy_family() {
        for v in VertexId::pr_ids() {
            assert_eq!(nl(&v.to_box()).nl, r(4, 1));
        }
        for v in VertexId::deterministic_ids() {
            assert!(nl(&v.to_box()).nl.is_zero());
        }
        for k in 0..=10 {
            let p = r(k, 10);
            assert_eq!(nl(&noisy(p.clone())).nl, &p * &r(4, 1));
        }
    }

    #[test]
    fn party_exchange_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let exchange = Relabeling { swap_parties: true, ..Relabeling::identity() };
        for _ in 0..50 {
            let b = random_nonsignaling_box(&mut rng);
            let rep = nl(&b);
            let swapped = nl(&exchange.apply(&b));
            // covB_1 and covB_2 trade places, hence Γ_1 ↔ Γ_2 and Γ_3 is fixed.
            assert_eq!(swapped.covchsh[1], rep.covchsh[2]);
            assert_eq!(swapped.covchsh[2], rep.covchsh[1]);
            assert_eq!(swapped.gamma[0], rep.gamma[1]);
            assert_eq!(swapped.gamma[1], rep.gamma[0]);
            assert_eq!(swapped.gamma[2], rep.gamma[2]);
            assert_eq!(swapped.nl, rep.nl);
        }
    }

    #[test]
    fn certifiers_on_noisy_pr() {
        let cert = is_local_chsh(&noisy(r(3, 5)));
        assert!(!cert.is_local);
        assert_eq!(cert.witness, LocalityWitness::ChshViolation { label: [0, 0, 0], value: r(12, 5) });
        assert!(is_local_chsh(&noisy(r(1, 2))).is_local);
        assert!(is_local_lp(&noisy(r(1, 2))).is_local);
        assert!(!is_local_lp(&noisy(r(51, 100))).is_local);
    }

    #[test]
    fn certifiers_agree_on_vertices() {
        for v in VertexId::all() {
            let b = v.to_box();
            let facet = is_local_chsh(&b);
            let lp = is_local_lp(&b);
            assert_eq!(facet.is_local, !v.is_pr());
            assert_eq!(facet.is_local, lp.is_local);
            assert!(facet.is_sound_for(&b) && lp.is_sound_for(&b));
        }
    }

    #[test]
    fn lp_witness_reconstructs_white_noise() {
        let b = NsBox::maximally_mixed();
        let cert = is_local_lp(&b);
        assert!(cert.is_local && cert.is_sound_for(&b));
    }

    #[test]
    fn vertex_decomposition_reconstructs() {
        let pr = NsBox::pr(0, 0, 0);
        let d = decompose_over_vertices(&pr).unwrap();
        assert_eq!(mix(&d.to_mixture()).unwrap(), pr);
        for b in [NsBox::maximally_mixed(), noisy(r(1, 2))] {
            let d = decompose_over_vertices(&b).unwrap();
            assert_eq!(d.weights.len(), 24);
            assert_eq!(mix(&d.to_mixture()).unwrap(), b);
        }
        let signaling = NsBox::from_fn(|x, _, a, b| if a == 0 && b == x { r(1, 1) } else { r(0, 1) });
        assert!(decompose_over_vertices(&signaling).is_err());
    }
}
