//! Two-party, two-input, two-output boxes `P(ab|A_xB_y)` in exact arithmetic,
//! the 24 vertices of the nonsignaling polytope, the local relabeling group
//! and convex mixing.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratio::Ratio;

/// Probability table indexed `[x][y][a][b]`.
pub type Table = [[[[Ratio; 2]; 2]; 2]; 2];

/// Local response table `P(a|x)` indexed `[x][a]`.
pub type Response = [[Ratio; 2]; 2];

/// All 16 `(x, y, a, b)` index tuples in lexicographic order.
pub fn indices() -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..16).map(|k| ((k >> 3) & 1, (k >> 2) & 1, (k >> 1) & 1, k & 1))
}

pub(crate) fn table_from_fn<F>(mut f: F) -> Table
where
    F: FnMut(usize, usize, usize, usize) -> Ratio,
{
    std::array::from_fn(|x| std::array::from_fn(|y| std::array::from_fn(|a| std::array::from_fn(|b| f(x, y, a, b)))))
}

fn check_bit(bit: u8) -> usize {
    assert!(bit <= 1, "label {bit} is not a bit");
    bit as usize
}

/// A box `P(ab|A_xB_y)`. Construction does not enforce the nonsignaling
/// invariants; use [`NsBox::validate`] or [`NsBox::try_from_table`].
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NsBox {
    p: Table,
}

impl NsBox {
    pub fn from_table(p: Table) -> Self {
        NsBox { p }
    }

    pub fn try_from_table(p: Table) -> Result<Self, InvalidBox> {
        let b = NsBox { p };
        let report = b.validate();
        if report.is_valid() {
            Ok(b)
        } else {
            Err(InvalidBox(report))
        }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: FnMut(usize, usize, usize, usize) -> Ratio,
    {
        NsBox { p: table_from_fn(f) }
    }

    pub fn table(&self) -> &Table {
        &self.p
    }

    pub fn into_table(self) -> Table {
        self.p
    }

    pub fn p(&self, x: usize, y: usize, a: usize, b: usize) -> &Ratio {
        &self.p[x][y][a][b]
    }

    /// `P(a|A_x)`, read off the `y = 0` row.
    pub fn alice_marginal(&self, x: usize, a: usize) -> Ratio {
        &self.p[x][0][a][0] + &self.p[x][0][a][1]
    }

    /// `P(b|B_y)`, read off the `x = 0` row.
    pub fn bob_marginal(&self, y: usize, b: usize) -> Ratio {
        &self.p[0][y][0][b] + &self.p[0][y][1][b]
    }

    /// The deterministic vertex with `a = αx ⊕ β`, `b = γy ⊕ ε`.
    pub fn deterministic(alpha: u8, beta: u8, gamma: u8, epsilon: u8) -> Self {
        let (alpha, beta, gamma, epsilon) = (check_bit(alpha), check_bit(beta), check_bit(gamma), check_bit(epsilon));
        NsBox::from_fn(
            |x, y, a, b| {
                if a == (alpha & x) ^ beta && b == (gamma & y) ^ epsilon {
                    Ratio::one()
                } else {
                    Ratio::zero()
                }
            },
        )
    }

    /// The PR vertex: `1/2` whenever `a ⊕ b = xy ⊕ αx ⊕ βy ⊕ γ`.
    pub fn pr(alpha: u8, beta: u8, gamma: u8) -> Self {
        let (alpha, beta, gamma) = (check_bit(alpha), check_bit(beta), check_bit(gamma));
        NsBox::from_fn(
            |x, y, a, b| {
                if a ^ b == (x & y) ^ (alpha & x) ^ (beta & y) ^ gamma {
                    Ratio::half()
                } else {
                    Ratio::zero()
                }
            },
        )
    }

    /// White noise, `P_N ≡ 1/4`.
    pub fn maximally_mixed() -> Self {
        NsBox::from_fn(|_, _, _, _| Ratio::new(1, 4))
    }

    /// `P(a|A_x) P(b|B_y)` from response tables indexed `[input][output]`.
    pub fn product(alice: &Response, bob: &Response) -> Self {
        NsBox::from_fn(|x, y, a, b| &alice[x][a] * &bob[y][b])
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (x, y, a, b) in indices() {
            if self.p[x][y][a][b].is_negative() {
                report.negative_entries.push([x as u8, y as u8, a as u8, b as u8]);
            }
        }
        for x in 0..2 {
            for y in 0..2 {
                let total: Ratio = self.p[x][y].iter().flatten().sum();
                if !total.is_one() {
                    report.unnormalized.push([x as u8, y as u8]);
                }
            }
        }
        for y in 0..2 {
            for b in 0..2 {
                let given_x0 = &self.p[0][y][0][b] + &self.p[0][y][1][b];
                let given_x1 = &self.p[1][y][0][b] + &self.p[1][y][1][b];
                if given_x0 != given_x1 {
                    report.signaling_alice_to_bob.push([y as u8, b as u8]);
                }
            }
        }
        for x in 0..2 {
            for a in 0..2 {
                let given_y0 = &self.p[x][0][a][0] + &self.p[x][0][a][1];
                let given_y1 = &self.p[x][1][a][0] + &self.p[x][1][a][1];
                if given_y0 != given_y1 {
                    report.signaling_bob_to_alice.push([x as u8, a as u8]);
                }
            }
        }
        report
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_valid()
    }
}

impl fmt::Debug for NsBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_map();
        for (x, y, a, b) in indices() {
            list.entry(&format_args!("{x}{y}{a}{b}"), &self.p[x][y][a][b]);
        }
        list.finish()
    }
}

/// Per-invariant failures, each with the violating indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `[x, y, a, b]` with `p < 0`.
    pub negative_entries: Vec<[u8; 4]>,
    /// `[x, y]` whose outcome distribution does not sum to 1.
    pub unnormalized: Vec<[u8; 2]>,
    /// `[y, b]` where Bob's marginal depends on Alice's input.
    pub signaling_alice_to_bob: Vec<[u8; 2]>,
    /// `[x, a]` where Alice's marginal depends on Bob's input.
    pub signaling_bob_to_alice: Vec<[u8; 2]>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.negative_entries.is_empty()
            && self.unnormalized.is_empty()
            && self.signaling_alice_to_bob.is_empty()
            && self.signaling_bob_to_alice.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        let mut parts = Vec::new();
        if !self.negative_entries.is_empty() {
            parts.push(format!("negative entries at [x,y,a,b] {:?}", self.negative_entries));
        }
        if !self.unnormalized.is_empty() {
            parts.push(format!("unnormalized at [x,y] {:?}", self.unnormalized));
        }
        if !self.signaling_alice_to_bob.is_empty() {
            parts.push(format!("Bob's marginal depends on x at [y,b] {:?}", self.signaling_alice_to_bob));
        }
        if !self.signaling_bob_to_alice.is_empty() {
            parts.push(format!("Alice's marginal depends on y at [x,a] {:?}", self.signaling_bob_to_alice));
        }
        write!(f, "{}", parts.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid box: {0}")]
pub struct InvalidBox(pub ValidationReport);

/// One of the 24 vertices of the nonsignaling polytope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexId {
    /// Labels `(α, β, γ, ε)`.
    Deterministic([u8; 4]),
    /// Labels `(α, β, γ)`.
    Pr([u8; 3]),
}

impl VertexId {
    pub fn deterministic_ids() -> impl Iterator<Item = VertexId> {
        (0u8..16).map(|k| VertexId::Deterministic([(k >> 3) & 1, (k >> 2) & 1, (k >> 1) & 1, k & 1]))
    }

    pub fn pr_ids() -> impl Iterator<Item = VertexId> {
        (0u8..8).map(|k| VertexId::Pr([(k >> 2) & 1, (k >> 1) & 1, k & 1]))
    }

    /// The 16 deterministic vertices followed by the 8 PR vertices.
    pub fn all() -> impl Iterator<Item = VertexId> {
        Self::deterministic_ids().chain(Self::pr_ids())
    }

    pub fn to_box(self) -> NsBox {
        match self {
            VertexId::Deterministic([a, b, c, d]) => NsBox::deterministic(a, b, c, d),
            VertexId::Pr([a, b, c]) => NsBox::pr(a, b, c),
        }
    }

    pub fn is_pr(self) -> bool {
        matches!(self, VertexId::Pr(_))
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexId::Deterministic(l) => write!(f, "det:{}{}{}{}", l[0], l[1], l[2], l[3]),
            VertexId::Pr(l) => write!(f, "pr:{}{}{}", l[0], l[1], l[2]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid vertex label {0:?}")]
pub struct ParseVertexError(pub String);

pub(crate) fn parse_bits<const N: usize>(s: &str) -> Option<[u8; N]> {
    let bytes = s.as_bytes();
    if bytes.len() != N {
        return None;
    }
    let mut out = [0u8; N];
    for (slot, c) in out.iter_mut().zip(bytes) {
        *slot = match c {
            b'0' => 0,
            b'1' => 1,
            _ => return None,
        };
    }
    Some(out)
}

impl FromStr for VertexId {
    type Err = ParseVertexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseVertexError(s.to_string());
        let (kind, bits) = s.split_once(':').ok_or_else(err)?;
        match kind {
            "det" => parse_bits::<4>(bits).map(VertexId::Deterministic).ok_or_else(err),
            "pr" => parse_bits::<3>(bits).map(VertexId::Pr).ok_or_else(err),
            _ => Err(err()),
        }
    }
}

impl Serialize for VertexId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VertexId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-party part of a relabeling: optional input swap followed by
/// input-conditioned output flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LocalRelabeling {
    pub swap_input: bool,
    /// `flip_output[x]` flips the output reported for (relabeled) input `x`.
    pub flip_output: [bool; 2],
}

impl LocalRelabeling {
    fn input(&self, x: usize) -> usize {
        x ^ self.swap_input as usize
    }

    fn output(&self, x: usize, a: usize) -> usize {
        a ^ self.flip_output[x] as usize
    }

    /// The local map `outer ∘ inner` acting on indices.
    fn then(inner: Self, outer: Self) -> Self {
        let s = inner.swap_input as usize;
        LocalRelabeling {
            swap_input: inner.swap_input ^ outer.swap_input,
            flip_output: [inner.flip_output[0] ^ outer.flip_output[s], inner.flip_output[1] ^ outer.flip_output[1 ^ s]],
        }
    }

    fn inverse(self) -> Self {
        let s = self.swap_input as usize;
        LocalRelabeling { swap_input: self.swap_input, flip_output: [self.flip_output[s], self.flip_output[1 ^ s]] }
    }

    fn all() -> impl Iterator<Item = LocalRelabeling> {
        (0u8..8).map(|k| LocalRelabeling { swap_input: k & 4 != 0, flip_output: [k & 2 != 0, k & 1 != 0] })
    }
}

/// An element of the local symmetry group of the scenario.
///
/// The action is `g·P(x, y, a, b) = P(π_g(x, y, a, b))` with
/// `π_g = local ∘ exchange`, where `exchange` swaps the parties when set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Relabeling {
    pub alice: LocalRelabeling,
    pub bob: LocalRelabeling,
    pub swap_parties: bool,
}

impl Relabeling {
    pub fn identity() -> Self {
        Relabeling::default()
    }

    fn source_index(&self, x: usize, y: usize, a: usize, b: usize) -> (usize, usize, usize, usize) {
        let (x, y, a, b) = if self.swap_parties { (y, x, b, a) } else { (x, y, a, b) };
        (self.alice.input(x), self.bob.input(y), self.alice.output(x, a), self.bob.output(y, b))
    }

    fn exchanged(self) -> Self {
        Relabeling { alice: self.bob, bob: self.alice, ..self }
    }

    /// `self ∘ other`: applying the result equals applying `other` first,
    /// then `self`.
    pub fn compose(&self, other: &Relabeling) -> Relabeling {
        // π_{g∘h} = π_h ∘ π_g; push the inner exchange through h's local part.
        let g = if other.swap_parties { self.exchanged() } else { *self };
        Relabeling {
            alice: LocalRelabeling::then(g.alice, other.alice),
            bob: LocalRelabeling::then(g.bob, other.bob),
            swap_parties: self.swap_parties ^ other.swap_parties,
        }
    }

    pub fn inverse(&self) -> Relabeling {
        let local = Relabeling { alice: self.alice.inverse(), bob: self.bob.inverse(), swap_parties: false };
        if self.swap_parties {
            Relabeling { swap_parties: true, ..local.exchanged() }
        } else {
            local
        }
    }

    pub fn apply(&self, b: &NsBox) -> NsBox {
        NsBox::from_fn(|x, y, a, bb| {
            let (x, y, a, bb) = self.source_index(x, y, a, bb);
            b.p[x][y][a][bb].clone()
        })
    }

    /// 64 elements without party exchange, 128 with.
    pub fn enumerate(include_party_swap: bool) -> Vec<Relabeling> {
        let swaps: &[bool] = if include_party_swap { &[false, true] } else { &[false] };
        let mut out = Vec::with_capacity(64 * swaps.len());
        for &swap_parties in swaps {
            for alice in LocalRelabeling::all() {
                for bob in LocalRelabeling::all() {
                    out.push(Relabeling { alice, bob, swap_parties });
                }
            }
        }
        out
    }
}

pub fn apply_relabeling(g: &Relabeling, b: &NsBox) -> NsBox {
    g.apply(b)
}

/// A finite convex combination of boxes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mixture {
    pub components: Vec<(Ratio, NsBox)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MixError {
    #[error("mixture has no components")]
    Empty,
    #[error("negative weight {weight} on component {index}")]
    NegativeWeight { index: usize, weight: Ratio },
    #[error("weights sum to {0}, not 1")]
    WeightSum(Ratio),
}

impl Mixture {
    pub fn new(components: Vec<(Ratio, NsBox)>) -> Self {
        Mixture { components }
    }

    pub fn push(&mut self, weight: Ratio, b: NsBox) {
        self.components.push((weight, b));
    }

    pub fn total_weight(&self) -> Ratio {
        self.components.iter().map(|(w, _)| w).sum()
    }

    pub fn check(&self) -> Result<(), MixError> {
        if self.components.is_empty() {
            return Err(MixError::Empty);
        }
        if let Some((index, (weight, _))) = self.components.iter().enumerate().find(|(_, (w, _))| w.is_negative()) {
            return Err(MixError::NegativeWeight { index, weight: weight.clone() });
        }
        let total = self.total_weight();
        if !total.is_one() {
            return Err(MixError::WeightSum(total));
        }
        Ok(())
    }
}

/// Entrywise convex combination.
pub fn mix(m: &Mixture) -> Result<NsBox, MixError> {
    m.check()?;
    Ok(combine(m.components.iter().map(|(w, b)| (w, b))))
}

pub(crate) fn combine<'a, I>(terms: I) -> NsBox
where
    I: IntoIterator<Item = (&'a Ratio, &'a NsBox)>,
{
    let mut acc = table_from_fn(|_, _, _, _| Ratio::zero());
    for (w, b) in terms {
        if w.is_zero() {
            continue;
        }
        for (x, y, a, bb) in indices() {
            acc[x][y][a][bb] += w * &b.p[x][y][a][bb];
        }
    }
    NsBox::from_table(acc)
}

/// Random positive weights `k_i / Σk` with `k_i` uniform in `1..=1000`.
pub fn random_weights<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Ratio> {
    let raw: Vec<i64> = (0..n).map(|_| rng.random_range(1..=1000)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|k| Ratio::new(k, total)).collect()
}

/// A random point of the nonsignaling polytope: a random positive mixture of
/// all 24 vertices.
pub fn random_nonsignaling_box<R: Rng + ?Sized>(rng: &mut R) -> NsBox {
    let weights = random_weights(rng, 24);
    let vertices: Vec<NsBox> = VertexId::all().map(VertexId::to_box).collect();
    combine(weights.iter().zip(&vertices))
}

/// A random local response table `P(a|x)` with entries in steps of `1/denom`.
pub fn random_response<R: Rng + ?Sized>(rng: &mut R, denom: i64) -> Response {
    std::array::from_fn(|_| {
        let k = rng.random_range(0..=denom);
        [Ratio::new(k, denom), Ratio::new(denom - k, denom)]
    })
}

pub fn random_product_box<R: Rng + ?Sized>(rng: &mut R) -> NsBox {
    let alice = random_response(rng, 1000);
    let bob = random_response(rng, 1000);
    NsBox::product(&alice, &bob)
}
