//! PR-fraction decompositions and two-valued local hidden variable models.
//!
//! [`decompose_pr_fraction`] splits a box as `p·PR + (1 − p)·L` with
//! `p = NL/4` and certifies the residual `L` exactly (valid, Bell-local,
//! `NL = 0`). [`decompose_pr_mixture`] does the same for mixtures of PR boxes
//! and additionally certifies that the residual is a mixture of pairwise
//! uniform PR midpoints. [`find_dim2_model`] searches for a local model whose
//! shared variable takes two values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{combine, indices, mix, random_response, MixError, Mixture, NsBox, Response, VertexId};
use crate::measures::{chsh, chsh_index, is_local_lp, nl, weights_over};
use crate::ratio::Ratio;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionChecks {
    pub reconstructs: bool,
    pub residual_valid: bool,
    pub residual_local: bool,
    pub residual_nl_zero: bool,
}

impl DecompositionChecks {
    pub fn all(&self) -> bool {
        self.reconstructs && self.residual_valid && self.residual_local && self.residual_nl_zero
    }
}

/// `original = p_pr · PR + (1 − p_pr) · residual`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrDecomposition {
    pub p_pr: Ratio,
    /// `None` only in the degenerate case `p_pr = 0`.
    pub pr_vertex: Option<VertexId>,
    #[serde(with = "crate::format::box_serde")]
    pub residual: NsBox,
    pub checks: DecompositionChecks,
    /// Every PR vertex whose residual passes all checks, in candidate order.
    pub passing_candidates: Vec<VertexId>,
}

impl PrDecomposition {
    pub fn to_mixture(&self) -> Mixture {
        let rest = Ratio::one() - &self.p_pr;
        match self.pr_vertex {
            Some(v) => Mixture::new(vec![(self.p_pr.clone(), v.to_box()), (rest, self.residual.clone())]),
            None => Mixture::new(vec![(rest, self.residual.clone())]),
        }
    }
}

/// How one PR candidate fared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateDiagnostic {
    pub vertex: VertexId,
    pub matched_chsh: Ratio,
    pub checks: DecompositionChecks,
    /// `NL` of the residual when it is a valid box.
    pub residual_nl: Option<Ratio>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecompositionError {
    #[error("input is not a valid nonsignaling box: {0}")]
    InvalidInput(String),
    #[error(
        "no PR vertex yields a certified residual at p_pr = {p_pr} ({} candidates tried)",
        diagnostics.len()
    )]
    NoCertifiedResidual { p_pr: Ratio, diagnostics: Vec<CandidateDiagnostic> },
    #[error("residual is not a mixture of pairwise-uniform PR midpoints")]
    ResidualOffMidpoints { decomposition: Box<PrDecomposition> },
    #[error(transparent)]
    Weights(#[from] MixError),
}

impl DecompositionError {
    pub fn is_verification_failure(&self) -> bool {
        matches!(self, Self::NoCertifiedResidual { .. } | Self::ResidualOffMidpoints { .. })
    }
}

fn pr_label(v: VertexId) -> [u8; 3] {
    match v {
        VertexId::Pr(l) => l,
        VertexId::Deterministic(_) => unreachable!("PR candidates only"),
    }
}

/// PR vertices in descending order of their matched CHSH value on `b`,
/// lexicographic on ties.
fn ordered_candidates(b: &NsBox) -> Vec<(VertexId, Ratio)> {
    let report = nl(b);
    let mut out: Vec<(VertexId, Ratio)> =
        VertexId::pr_ids().map(|v| (v, report.chsh[chsh_index(pr_label(v))].clone())).collect();
    // Stable sort keeps lexicographic order among equal values.
    out.sort_by(|l, r| r.1.cmp(&l.1));
    out
}

fn evaluate_candidate(b: &NsBox, p: &Ratio, vertex: VertexId, matched: Ratio) -> (CandidateDiagnostic, NsBox) {
    let pr = vertex.to_box();
    let rest = Ratio::one() - p;
    let residual = NsBox::from_fn(|x, y, a, bb| (b.p(x, y, a, bb) - &(p * pr.p(x, y, a, bb))) / &rest);
    let mut checks = DecompositionChecks {
        reconstructs: combine([(p, &pr), (&rest, &residual)]) == *b,
        residual_valid: residual.is_valid(),
        ..Default::default()
    };
    let mut residual_nl = None;
    if checks.residual_valid {
        let rnl = nl(&residual).nl;
        checks.residual_nl_zero = rnl.is_zero();
        residual_nl = Some(rnl);
        // The LP is the expensive check; only run it when the rest passed.
        if checks.residual_nl_zero {
            checks.residual_local = is_local_lp(&residual).is_local;
        }
    }
    (CandidateDiagnostic { vertex, matched_chsh: matched, checks, residual_nl }, residual)
}

/// Splits `b` into its PR-box fraction `NL(b)/4` and a certified residual.
pub fn decompose_pr_fraction(b: &NsBox) -> Result<PrDecomposition, DecompositionError> {
    let validation = b.validate();
    if !validation.is_valid() {
        return Err(DecompositionError::InvalidInput(validation.to_string()));
    }
    let p = nl(b).pr_fraction();

    if p.is_zero() {
        let residual_local = is_local_lp(b).is_local;
        return Ok(PrDecomposition {
            p_pr: p,
            pr_vertex: None,
            residual: b.clone(),
            checks: DecompositionChecks {
                reconstructs: true,
                residual_valid: true,
                residual_local,
                residual_nl_zero: true,
            },
            passing_candidates: Vec::new(),
        });
    }

    let candidates = ordered_candidates(b);

    if p.is_one() {
        // Zero weight on the residual; white noise by convention.
        let noise = NsBox::maximally_mixed();
        let passing: Vec<VertexId> = candidates.iter().map(|(v, _)| *v).filter(|v| v.to_box() == *b).collect();
        return match passing.first() {
            Some(&v) => Ok(PrDecomposition {
                p_pr: p,
                pr_vertex: Some(v),
                residual: noise,
                checks: DecompositionChecks {
                    reconstructs: true,
                    residual_valid: true,
                    residual_local: true,
                    residual_nl_zero: true,
                },
                passing_candidates: passing,
            }),
            None => Err(DecompositionError::NoCertifiedResidual {
                p_pr: p,
                diagnostics: candidates
                    .into_iter()
                    .map(|(vertex, matched_chsh)| CandidateDiagnostic {
                        vertex,
                        matched_chsh,
                        checks: DecompositionChecks::default(),
                        residual_nl: None,
                    })
                    .collect(),
            }),
        };
    }

    let mut first: Option<(CandidateDiagnostic, NsBox)> = None;
    let mut passing = Vec::new();
    let mut diagnostics = Vec::new();
    for (vertex, matched) in candidates {
        let (diag, residual) = evaluate_candidate(b, &p, vertex, matched);
        if diag.checks.all() {
            passing.push(vertex);
            if first.is_none() {
                first = Some((diag.clone(), residual));
            }
        }
        diagnostics.push(diag);
    }
    match first {
        Some((diag, residual)) => Ok(PrDecomposition {
            p_pr: p,
            pr_vertex: Some(diag.vertex),
            residual,
            checks: diag.checks,
            passing_candidates: passing,
        }),
        None => Err(DecompositionError::NoCertifiedResidual { p_pr: p, diagnostics }),
    }
}

/// The 28 boxes `(PR_i + PR_j)/2`, `i < j`.
pub fn pr_midpoints() -> Vec<((VertexId, VertexId), NsBox)> {
    let ids: Vec<VertexId> = VertexId::pr_ids().collect();
    let mut out = Vec::with_capacity(28);
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let half = Ratio::half();
            let (bi, bj) = (ids[i].to_box(), ids[j].to_box());
            out.push(((ids[i], ids[j]), combine([(&half, &bi), (&half, &bj)])));
        }
    }
    out
}

/// A PR-mixture decomposition with the residual expressed over PR midpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrMixtureDecomposition {
    pub decomposition: PrDecomposition,
    /// Nonzero weights over pair midpoints reconstructing the residual.
    pub midpoint_weights: Vec<((VertexId, VertexId), Ratio)>,
}

/// Decomposes `Σ w_{αβγ} P_PR^{αβγ}` (weights in label order `000..111`).
pub fn decompose_pr_mixture(weights: &[Ratio; 8]) -> Result<PrMixtureDecomposition, DecompositionError> {
    let m = Mixture::new(weights.iter().cloned().zip(VertexId::pr_ids().map(VertexId::to_box)).collect());
    let b = mix(&m)?;
    let decomposition = decompose_pr_fraction(&b)?;
    let midpoints = pr_midpoints();
    let boxes: Vec<NsBox> = midpoints.iter().map(|(_, b)| b.clone()).collect();
    match weights_over(&boxes, &decomposition.residual) {
        Some(w) => Ok(PrMixtureDecomposition {
            decomposition,
            midpoint_weights: midpoints
                .into_iter()
                .zip(w)
                .filter(|(_, w)| !w.is_zero())
                .map(|((pair, _), w)| (pair, w))
                .collect(),
        }),
        None => Err(DecompositionError::ResidualOffMidpoints { decomposition: Box::new(decomposition) }),
    }
}

/// `P(ab|xy) = Σ_λ p_λ P_λ(a|x) P_λ(b|y)` with `λ ∈ {0, 1}`, exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dim2LocalModel {
    pub weights: [Ratio; 2],
    /// `alice[λ][x][a] = P(a|A_x, λ)`.
    pub alice: [Response; 2],
    /// `bob[λ][y][b] = P(b|B_y, λ)`.
    pub bob: [Response; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("weights must be nonnegative and sum to 1")]
    Weights,
    #[error("response table for {party} at λ = {lambda} is not a conditional distribution")]
    Response { party: &'static str, lambda: usize },
}

fn is_response(t: &Response) -> bool {
    t.iter().all(|col| col.iter().all(|v| !v.is_negative()) && (&col[0] + &col[1]).is_one())
}

impl Dim2LocalModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.weights.iter().any(Ratio::is_negative) || !(&self.weights[0] + &self.weights[1]).is_one() {
            return Err(ModelError::Weights);
        }
        for lambda in 0..2 {
            if !is_response(&self.alice[lambda]) {
                return Err(ModelError::Response { party: "alice", lambda });
            }
            if !is_response(&self.bob[lambda]) {
                return Err(ModelError::Response { party: "bob", lambda });
            }
        }
        Ok(())
    }

    /// A single-λ model of a product box.
    pub fn product(alice: Response, bob: Response) -> Self {
        Dim2LocalModel {
            weights: [Ratio::one(), Ratio::zero()],
            alice: [alice.clone(), alice],
            bob: [bob.clone(), bob],
        }
    }

    pub fn to_box(&self) -> NsBox {
        NsBox::from_fn(|x, y, a, b| (0..2).map(|l| &self.weights[l] * &self.alice[l][x][a] * &self.bob[l][y][b]).sum())
    }
}

/// Which local responses a random model may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    /// Arbitrary conditional distributions with entries in steps of 1/1000.
    Stochastic,
    /// Each `P_λ(·|x)` is a point mass.
    Deterministic,
}

pub fn random_dim2_model<R: Rng + ?Sized>(rng: &mut R, kind: ResponseKind) -> Dim2LocalModel {
    let k = rng.random_range(0..=1000);
    let weights = [Ratio::new(k, 1000), Ratio::new(1000 - k, 1000)];
    let response = |rng: &mut R| match kind {
        ResponseKind::Stochastic => random_response(rng, 1000),
        ResponseKind::Deterministic => random_response(rng, 1),
    };
    let alice = [response(rng), response(rng)];
    let bob = [response(rng), response(rng)];
    Dim2LocalModel { weights, alice, bob }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoValuedFailure {
    pub index: usize,
    pub model: Dim2LocalModel,
    pub nl: Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoValuedReport {
    pub samples: usize,
    pub kind: ResponseKind,
    pub failures: Vec<TwoValuedFailure>,
}

impl TwoValuedReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Samples `n` random two-valued local models with arbitrary rational
/// responses and checks `NL = 0` exactly on each box they generate.
pub fn verify_two_valued_models(n: usize, seed: u64) -> TwoValuedReport {
    verify_two_valued_models_with(n, seed, ResponseKind::Stochastic)
}

pub fn verify_two_valued_models_with(n: usize, seed: u64, kind: ResponseKind) -> TwoValuedReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for index in 0..n {
        let model = random_dim2_model(&mut rng, kind);
        let value = nl(&model.to_box()).nl;
        if !value.is_zero() {
            failures.push(TwoValuedFailure { index, model, nl: value });
        }
    }
    TwoValuedReport { samples: n, kind, failures }
}

/// A two-valued local model in floating point, as produced by the search.
/// Responses are stored as `P(output = 0 | input)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloatDim2Model {
    /// Weight of `λ = 0`.
    pub weight0: f64,
    pub alice0: [[f64; 2]; 2],
    pub bob0: [[f64; 2]; 2],
}

type Probs = [[[[f64; 2]; 2]; 2]; 2];

impl FloatDim2Model {
    fn weight(&self, lambda: usize) -> f64 {
        if lambda == 0 {
            self.weight0
        } else {
            1.0 - self.weight0
        }
    }

    fn alice(&self, lambda: usize, x: usize, a: usize) -> f64 {
        let q = self.alice0[lambda][x];
        if a == 0 {
            q
        } else {
            1.0 - q
        }
    }

    fn bob(&self, lambda: usize, y: usize, b: usize) -> f64 {
        let q = self.bob0[lambda][y];
        if b == 0 {
            q
        } else {
            1.0 - q
        }
    }

    pub fn probabilities(&self) -> Probs {
        let mut out = Probs::default();
        for (x, y, a, b) in indices() {
            out[x][y][a][b] = (0..2).map(|l| self.weight(l) * self.alice(l, x, a) * self.bob(l, y, b)).sum();
        }
        out
    }

    /// The exact binary values of the floats as a rational model.
    pub fn rationalize(&self) -> Dim2LocalModel {
        let q = |v: f64| Ratio::from_f64(v).expect("finite");
        let w0 = q(self.weight0);
        let table = |t: &[[f64; 2]; 2], lambda: usize| -> Response {
            std::array::from_fn(|i| {
                let z = q(t[lambda][i]);
                let o = Ratio::one() - &z;
                [z, o]
            })
        };
        Dim2LocalModel {
            weights: [w0.clone(), Ratio::one() - w0],
            alice: [table(&self.alice0, 0), table(&self.alice0, 1)],
            bob: [table(&self.bob0, 0), table(&self.bob0, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Found,
    NotFound,
}

/// `NotFound` is not a proof that no model exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSearchResult {
    pub status: SearchStatus,
    pub model: Option<FloatDim2Model>,
    /// Best total L1 residual over all restarts run.
    pub residual_l1: f64,
    pub restarts_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dim2SearchConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Found when the L1 residual is at most this.
    pub success_threshold: f64,
    /// Stop a restart when a sweep improves the squared residual by less.
    pub tolerance: f64,
}

impl Default for Dim2SearchConfig {
    fn default() -> Self {
        Dim2SearchConfig { restarts: 50, max_iters: 500, seed: 0, success_threshold: 1e-8, tolerance: 1e-10 }
    }
}

/// Restarts are run in fixed-size batches; the search stops after the first
/// batch containing a success.
const RESTART_BATCH: usize = 8;

fn to_probs(b: &NsBox) -> Probs {
    let mut out = Probs::default();
    for (x, y, a, bb) in indices() {
        out[x][y][a][bb] = b.p(x, y, a, bb).to_f64();
    }
    out
}

fn residual_l1(model: &FloatDim2Model, target: &Probs) -> f64 {
    let p = model.probabilities();
    indices().map(|(x, y, a, b)| (p[x][y][a][b] - target[x][y][a][b]).abs()).sum()
}

fn residual_sq(model: &FloatDim2Model, target: &Probs) -> f64 {
    let p = model.probabilities();
    indices().map(|(x, y, a, b)| (p[x][y][a][b] - target[x][y][a][b]).powi(2)).sum()
}

fn sq_err(g: &[[f64; 2]], h: &[f64], u: [f64; 2]) -> f64 {
    g.iter().zip(h).map(|(gi, hi)| (hi - gi[0] * u[0] - gi[1] * u[1]).powi(2)).sum()
}

/// `argmin ‖h − g u‖²` over `u ∈ [0, 1]²`.
fn bounded_ls2(g: &[[f64; 2]], h: &[f64]) -> [f64; 2] {
    let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (gi, hi) in g.iter().zip(h) {
        s00 += gi[0] * gi[0];
        s01 += gi[0] * gi[1];
        s11 += gi[1] * gi[1];
        t0 += gi[0] * hi;
        t1 += gi[1] * hi;
    }
    let mut candidates: Vec<[f64; 2]> = Vec::with_capacity(9);
    let det = s00 * s11 - s01 * s01;
    if det.abs() > 1e-300 {
        let u = [(s11 * t0 - s01 * t1) / det, (s00 * t1 - s01 * t0) / det];
        if (0.0..=1.0).contains(&u[0]) && (0.0..=1.0).contains(&u[1]) {
            return u;
        }
    }
    // Optimum on the boundary: one coordinate pinned, the other clamped.
    for fixed in [0.0, 1.0] {
        let u0 = if s00 > 0.0 { ((t0 - s01 * fixed) / s00).clamp(0.0, 1.0) } else { 0.5 };
        candidates.push([u0, fixed]);
        let u1 = if s11 > 0.0 { ((t1 - s01 * fixed) / s11).clamp(0.0, 1.0) } else { 0.5 };
        candidates.push([fixed, u1]);
    }
    candidates.into_iter().min_by(|l, r| sq_err(g, h, *l).total_cmp(&sq_err(g, h, *r))).expect("nonempty")
}

/// Refits Bob's tables with Alice's tables and the weights held fixed.
fn update_bob(m: &mut FloatDim2Model, target: &Probs) {
    for y in 0..2 {
        let mut g = Vec::with_capacity(8);
        let mut h = Vec::with_capacity(8);
        for x in 0..2 {
            for a in 0..2 {
                let coef = [m.weight(0) * m.alice(0, x, a), m.weight(1) * m.alice(1, x, a)];
                // b = 0: Σ coef_λ β_λ; b = 1: Σ coef_λ (1 − β_λ).
                g.push(coef);
                h.push(target[x][y][a][0]);
                g.push([-coef[0], -coef[1]]);
                h.push(target[x][y][a][1] - coef[0] - coef[1]);
            }
        }
        let u = bounded_ls2(&g, &h);
        m.bob0[0][y] = u[0];
        m.bob0[1][y] = u[1];
    }
}

fn transpose(p: &Probs) -> Probs {
    let mut out = Probs::default();
    for (x, y, a, b) in indices() {
        out[y][x][b][a] = p[x][y][a][b];
    }
    out
}

fn swap_parties(m: &FloatDim2Model) -> FloatDim2Model {
    FloatDim2Model { weight0: m.weight0, alice0: m.bob0, bob0: m.alice0 }
}

fn update_weight(m: &mut FloatDim2Model, target: &Probs) {
    let mut p0 = *m;
    p0.weight0 = 1.0;
    let mut p1 = *m;
    p1.weight0 = 0.0;
    let (q0, q1) = (p0.probabilities(), p1.probabilities());
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y, a, b) in indices() {
        let d = q0[x][y][a][b] - q1[x][y][a][b];
        num += d * (target[x][y][a][b] - q1[x][y][a][b]);
        den += d * d;
    }
    if den > 0.0 {
        m.weight0 = (num / den).clamp(0.0, 1.0);
    }
}

fn run_restart(target: &Probs, target_t: &Probs, config: &Dim2SearchConfig, index: usize) -> (FloatDim2Model, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let mut m = FloatDim2Model {
        weight0: rng.random::<f64>(),
        alice0: std::array::from_fn(|_| std::array::from_fn(|_| rng.random::<f64>())),
        bob0: std::array::from_fn(|_| std::array::from_fn(|_| rng.random::<f64>())),
    };
    let mut prev = residual_sq(&m, target);
    for _ in 0..config.max_iters {
        update_bob(&mut m, target);
        let mut swapped = swap_parties(&m);
        update_bob(&mut swapped, target_t);
        m = swap_parties(&swapped);
        update_weight(&mut m, target);
        let cur = residual_sq(&m, target);
        if residual_l1(&m, target) <= config.success_threshold || prev - cur < config.tolerance * config.tolerance {
            break;
        }
        prev = cur;
    }
    let l1 = residual_l1(&m, target);
    (m, l1)
}

/// Alternating minimization for a two-valued local model of `b`.
pub fn find_dim2_model(b: &NsBox, config: &Dim2SearchConfig) -> ModelSearchResult {
    assert!(config.restarts >= 1, "at least one restart");
    let target = to_probs(b);
    let target_t = transpose(&target);
    let mut best: Option<(usize, FloatDim2Model, f64)> = None;
    let mut used = 0;
    while used < config.restarts {
        let end = (used + RESTART_BATCH).min(config.restarts);
        let batch: Vec<(usize, FloatDim2Model, f64)> = (used..end)
            .into_par_iter()
            .map(|i| {
                let (m, r) = run_restart(&target, &target_t, config, i);
                (i, m, r)
            })
            .collect();
        used = end;
        for cand in batch {
            let better = match &best {
                None => true,
                Some((bi, _, br)) => cand.2 < *br || (cand.2 == *br && cand.0 < *bi),
            };
            if better {
                best = Some(cand);
            }
        }
        if best.as_ref().is_some_and(|(_, _, r)| *r <= config.success_threshold) {
            break;
        }
    }
    let (_, model, residual) = best.expect("at least one restart ran");
    let found = residual <= config.success_threshold;
    ModelSearchResult {
        status: if found { SearchStatus::Found } else { SearchStatus::NotFound },
        model: found.then_some(model),
        residual_l1: residual,
        restarts_used: used,
    }
}

/// Matched CHSH value of a PR vertex on `b`.
pub fn matched_chsh(b: &NsBox, v: VertexId) -> Ratio {
    let l = pr_label(v);
    chsh(b, l[0], l[1], l[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::random_product_box;

    fn r(n: i64, d: i64) -> Ratio {
        Ratio::new(n, d)
    }

    fn noisy(p: Ratio) -> NsBox {
        let q = Ratio::one() - &p;
        combine([(&p, &NsBox::pr(0, 0, 0)), (&q, &NsBox::maximally_mixed())])
    }

    fn two_pr(w: Ratio) -> NsBox {
        let q = Ratio::one() - &w;
        combine([(&w, &NsBox::pr(0, 0, 0)), (&q, &NsBox::pr(0, 0, 1))])
    }

    #[test]
    fn noisy_pr_fraction() {
        let d = decompose_pr_fraction(&noisy(r(3, 10))).unwrap();
        assert_eq!(d.p_pr, r(3, 10));
        assert_eq!(d.pr_vertex, Some(VertexId::Pr([0, 0, 0])));
        assert_eq!(d.residual, NsBox::maximally_mixed());
        assert!(d.checks.all());
        assert_eq!(mix(&d.to_mixture()).unwrap(), noisy(r(3, 10)));
    }

    #[test]
    fn two_pr_mixture_fraction() {
        let d = decompose_pr_fraction(&two_pr(r(3, 4))).unwrap();
        assert_eq!(d.p_pr, r(1, 2));
        assert_eq!(d.pr_vertex, Some(VertexId::Pr([0, 0, 0])));
        assert_eq!(d.residual, two_pr(r(1, 2)));
        assert!(d.checks.all());
    }

    #[test]
    fn degenerate_fractions() {
        let d = decompose_pr_fraction(&NsBox::pr(0, 0, 0)).unwrap();
        assert!(d.p_pr.is_one());
        assert_eq!(d.residual, NsBox::maximally_mixed());
        assert_eq!(mix(&d.to_mixture()).unwrap(), NsBox::pr(0, 0, 0));

        let b = NsBox::deterministic(1, 0, 1, 1);
        let d = decompose_pr_fraction(&b).unwrap();
        assert!(d.p_pr.is_zero() && d.pr_vertex.is_none());
        assert_eq!(d.residual, b);
        assert!(d.checks.all());
    }

    #[test]
    fn counterexample_is_reported_with_diagnostics() {
        // A local box with NL = 16/9 that admits no certified split.
        let third = r(1, 3);
        let b = combine([
            (&third, &NsBox::deterministic(0, 0, 0, 0)),
            (&third, &NsBox::deterministic(0, 1, 1, 0)),
            (&third, &NsBox::deterministic(1, 0, 0, 1)),
        ]);
        assert_eq!(nl(&b).nl, r(16, 9));
        match decompose_pr_fraction(&b) {
            Err(DecompositionError::NoCertifiedResidual { p_pr, diagnostics }) => {
                assert_eq!(p_pr, r(4, 9));
                assert_eq!(diagnostics.len(), 8);
                assert!(diagnostics.iter().all(|d| d.checks.reconstructs && !d.checks.all()));
            }
            other => panic!("expected counterexample, got {other:?}"),
        }
    }

    #[test]
    fn invalid_input_is_rejected() {
        let signaling = NsBox::from_fn(|x, _, a, b| if a == 0 && b == x { r(1, 1) } else { r(0, 1) });
        assert!(matches!(decompose_pr_fraction(&signaling), Err(DecompositionError::InvalidInput(_))));
    }

    #[test]
    fn pr_mixture_examples() {
        let mut w: [Ratio; 8] = Default::default();
        w[0] = r(1, 1);
        assert!(decompose_pr_mixture(&w).unwrap().decomposition.p_pr.is_one());

        w[0] = r(1, 2);
        w[1] = r(1, 2);
        let d = decompose_pr_mixture(&w).unwrap();
        assert!(d.decomposition.p_pr.is_zero());
        assert_eq!(d.decomposition.residual, two_pr(r(1, 2)));

        w[0] = r(3, 4);
        w[1] = r(1, 4);
        let d = decompose_pr_mixture(&w).unwrap();
        assert_eq!(d.decomposition.p_pr, r(1, 2));
        let mids = pr_midpoints();
        let terms: Vec<(Ratio, NsBox)> = d
            .midpoint_weights
            .iter()
            .map(|(pair, w)| (w.clone(), mids.iter().find(|(p, _)| p == pair).unwrap().1.clone()))
            .collect();
        assert_eq!(combine(terms.iter().map(|(w, b)| (w, b))), d.decomposition.residual);

        let mut bad: [Ratio; 8] = Default::default();
        bad[0] = r(1, 2);
        assert!(matches!(decompose_pr_mixture(&bad), Err(DecompositionError::Weights(_))));
    }

    #[test]
    fn model_box_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_dim2_model(&mut rng, ResponseKind::Stochastic);
        m.validate().unwrap();
        assert!(m.to_box().is_valid());
        let mut bad = m.clone();
        bad.weights[0] = r(2, 1);
        assert_eq!(bad.validate(), Err(ModelError::Weights));
        let mut bad = m;
        bad.bob[1][0][0] = r(-1, 2);
        assert!(matches!(bad.validate(), Err(ModelError::Response { party: "bob", lambda: 1 })));
    }

    #[test]
    fn deterministic_two_valued_models_have_zero_nl() {
        let report = verify_two_valued_models_with(2000, 5, ResponseKind::Deterministic);
        assert!(report.passed(), "{:?}", report.failures.first());
    }

    #[test]
    fn two_valued_special_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let alice = random_response(&mut rng, 100);
        let bob = random_response(&mut rng, 100);
        let m = Dim2LocalModel::product(alice.clone(), bob.clone());
        assert_eq!(m.to_box(), NsBox::product(&alice, &bob));
        assert!(nl(&m.to_box()).nl.is_zero());
    }

    #[test]
    fn stochastic_two_valued_models_can_have_positive_nl() {
        // λ uniform; Alice's ⟨A_x⟩ differs across λ by (1, 1/2), Bob's by (1, 1/2).
        let resp = |q0: Ratio, q1: Ratio| -> Response {
            let o0 = Ratio::one() - &q0;
            let o1 = Ratio::one() - &q1;
            [[q0, o0], [q1, o1]]
        };
        let m = Dim2LocalModel {
            weights: [r(1, 2), r(1, 2)],
            alice: [resp(r(1, 1), r(3, 4)), resp(r(0, 1), r(1, 4))],
            bob: [resp(r(1, 1), r(3, 4)), resp(r(0, 1), r(1, 4))],
        };
        m.validate().unwrap();
        // Zero marginals, cov = u uᵀ with u = (1, 1/2).
        let rep = nl(&m.to_box());
        assert_eq!(rep.covariances, [[r(1, 1), r(1, 2)], [r(1, 2), r(1, 4)]]);
        assert_eq!(rep.covchsh, [r(7, 4), r(5, 4), r(5, 4), r(1, 4)]);
        assert_eq!(rep.gamma, [r(1, 2), r(1, 2), r(3, 2)]);
        assert_eq!(rep.nl, r(1, 2));
    }

    #[test]
    fn search_finds_product_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_product_box(&mut rng);
        let res = find_dim2_model(&b, &Dim2SearchConfig::default());
        assert_eq!(res.status, SearchStatus::Found);
        assert!(res.residual_l1 <= 1e-8);
    }

    #[test]
    fn search_rejects_pr_box() {
        let res = find_dim2_model(&NsBox::pr(0, 0, 0), &Dim2SearchConfig { restarts: 16, ..Default::default() });
        assert_eq!(res.status, SearchStatus::NotFound);
        assert!(res.model.is_none());
        assert!(res.residual_l1 > 0.1);
        assert_eq!(res.restarts_used, 16);
    }

    #[test]
    fn search_is_seed_deterministic() {
        let b = noisy(r(1, 5));
        let cfg = Dim2SearchConfig { restarts: 10, seed: 77, ..Default::default() };
        assert_eq!(find_dim2_model(&b, &cfg), find_dim2_model(&b, &cfg));
    }

    #[test]
    fn bounded_ls_hits_interior_and_boundary() {
        let g = [[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(bounded_ls2(&g, &[0.25, 0.75]), [0.25, 0.75]);
        assert_eq!(bounded_ls2(&g, &[2.0, -1.0]), [1.0, 0.0]);
    }
}
