//! Virtually free groups given as free-by-finite data `G = F b_0 ∪ ... ∪ F b_m`,
//! their endomorphisms, and the fixed subgroup pipeline.
//!
//! An element is stored as `(w, i)` meaning `w · b_i` with `w` reduced in `F`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Deserialize;
use thiserror::Error;

use crate::automata::{subgroup_generators, Dfa, GroupOps, InverseTransducer, SubgroupConfig};
use crate::gtfix::{build_gt_automaton, reduced_words_dfa, GtAutomaton, GtConfig, GtError, Partiality};
use crate::words::{free_reduce, inv, InvAlphabet, Letter, ReducedWord, Word, WordError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("malformed group file: {0}")]
    Parse(String),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("unknown letter `{0}`")]
    UnknownLetter(String),
    #[error("invalid presentation: {}", .0.join("; "))]
    InvalidPresentation(Vec<String>),
    #[error("not a homomorphism: {}", .0.join("; "))]
    RelationViolated(Vec<String>),
    #[error("group file has no endomorphism")]
    NoEndomorphism,
    #[error("fixed subgroup generators not verified: {0}")]
    VerificationFailed(String),
}

/// `(w, i)` denoting `w · b_i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Element {
    pub w: ReducedWord,
    pub i: usize,
}

impl Element {
    pub fn new(w: ReducedWord, i: usize) -> Self {
        Element { w, i }
    }

    pub fn identity() -> Self {
        Element::default()
    }

    pub fn free(w: &[Letter]) -> Self {
        Element::new(free_reduce(w), 0)
    }

    pub fn coset(i: usize) -> Self {
        Element::new(ReducedWord::empty(), i)
    }
}

#[derive(Clone, Debug)]
pub struct VfPresentation {
    pub free_alphabet: InvAlphabet,
    pub coset_count: usize,
    /// `conj[i][x] = b_i x b_i^-1` for every letter of the doubled alphabet.
    conj: Vec<Vec<ReducedWord>>,
    /// `b_i b_j = mult[i][j].0 · b_{mult[i][j].1}`.
    mult: Vec<Vec<(ReducedWord, usize)>>,
    /// External generators, with their own order.
    pub gen_alphabet: InvAlphabet,
    /// Image of each external base generator.
    pub gen_map: Vec<Element>,
}

impl VfPresentation {
    /// Builds a presentation from base-letter conjugation images and the
    /// multiplication table. Shapes and indices are checked here; the
    /// group axioms are checked by [`validate_presentation`].
    pub fn new(
        free_alphabet: InvAlphabet,
        conj_base: Vec<Vec<ReducedWord>>,
        mult: Vec<Vec<(ReducedWord, usize)>>,
        gen_alphabet: InvAlphabet,
        gen_map: Vec<Element>,
    ) -> Result<Self, GroupError> {
        let m1 = mult.len();
        let k = free_alphabet.base_len();
        let bad = |s: String| Err(GroupError::Parse(s));
        if m1 == 0 {
            return bad("coset_count must be at least 1".into());
        }
        if conj_base.len() != m1 {
            return bad(format!("conj has {} rows, expected {m1}", conj_base.len()));
        }
        for (i, row) in conj_base.iter().enumerate() {
            if row.len() != k {
                return bad(format!("conj row {i} has {} entries, expected {k}", row.len()));
            }
        }
        for (i, row) in mult.iter().enumerate() {
            if row.len() != m1 {
                return bad(format!("mult row {i} has {} entries, expected {m1}", row.len()));
            }
            if let Some((_, c)) = row.iter().find(|(_, c)| *c >= m1) {
                return bad(format!("mult row {i} names coset {c}"));
            }
        }
        if gen_map.len() != gen_alphabet.base_len() {
            return bad("generator map does not cover the generator alphabet".into());
        }
        if let Some(g) = gen_map.iter().find(|g| g.i >= m1) {
            return bad(format!("generator image names coset {}", g.i));
        }
        let conj = conj_base
            .into_iter()
            .map(|row| row.into_iter().flat_map(|w| [w.clone(), w.inverse()]).collect())
            .collect();
        Ok(VfPresentation {
            free_alphabet,
            coset_count: m1,
            conj,
            mult,
            gen_alphabet,
            gen_map,
        })
    }

    /// Size of the doubled free alphabet.
    pub fn letters(&self) -> usize {
        self.free_alphabet.size()
    }

    pub fn conj_letter(&self, i: usize, x: Letter) -> &ReducedWord {
        &self.conj[i][x as usize]
    }

    /// `b_i w b_i^-1`.
    pub fn conj_word(&self, i: usize, w: &[Letter]) -> ReducedWord {
        let mut acc = Vec::new();
        for &x in w {
            crate::words::push_reduced(&mut acc, &self.conj[i][x as usize]);
        }
        ReducedWord::new(Word(acc)).expect("push_reduced keeps words reduced")
    }

    pub fn mult_entry(&self, i: usize, j: usize) -> &(ReducedWord, usize) {
        &self.mult[i][j]
    }

    /// Some `j` with `μ(i, j) = 0`.
    pub fn inverse_coset(&self, i: usize) -> Option<usize> {
        (0..self.coset_count).find(|&j| self.mult[i][j].1 == 0)
    }

    pub fn format_element(&self, g: &Element) -> String {
        format!("({}, {})", self.free_alphabet.format_word(&g.w), g.i)
    }

    /// Parses `word @ coset`, or a bare word in coset 0.
    pub fn parse_element(&self, s: &str) -> Result<Element, GroupError> {
        let (w, i) = match s.split_once('@') {
            Some((w, i)) => (
                w,
                i.trim()
                    .parse::<usize>()
                    .map_err(|_| GroupError::Parse(format!("bad coset index `{}`", i.trim())))?,
            ),
            None => (s, 0),
        };
        if i >= self.coset_count {
            return Err(GroupError::Parse(format!("coset {i} out of range")));
        }
        Ok(Element::new(free_reduce(&self.free_alphabet.parse_word(w)?), i))
    }
}

pub fn multiply(p: &VfPresentation, g: &Element, h: &Element) -> Element {
    let (f, mu) = &p.mult[g.i][h.i];
    let mut acc = g.w.as_word().0.clone();
    for &x in h.w.iter() {
        crate::words::push_reduced(&mut acc, &p.conj[g.i][x as usize]);
    }
    crate::words::push_reduced(&mut acc, f);
    Element::new(ReducedWord::new(Word(acc)).expect("reduced"), *mu)
}

/// Inverse via `b_i^-1 = conj_ι(f_{i,ι}^-1) b_ι` where `μ(i, ι) = 0`.
/// Panics if coset `i` has no inverse (rejected by validation).
pub fn invert_elem(p: &VfPresentation, g: &Element) -> Element {
    let j = p.inverse_coset(g.i).expect("coset without inverse");
    let f = &p.mult[g.i][j].0;
    let binv = Element::new(p.conj_word(j, &f.inverse()), j);
    multiply(p, &binv, &Element::new(g.w.inverse(), 0))
}

/// Evaluates a word over the external generators.
pub fn eval_word(p: &VfPresentation, w: &[Letter]) -> Result<Element, GroupError> {
    let mut acc = Element::identity();
    for &x in w {
        let k = (x / 2) as usize;
        let g = p
            .gen_map
            .get(k)
            .ok_or_else(|| GroupError::UnknownLetter(format!("#{x}")))?;
        let g = if x & 1 == 1 { invert_elem(p, g) } else { g.clone() };
        acc = multiply(p, &acc, &g);
    }
    Ok(acc)
}

/// Parses and evaluates a token word over the external generators.
pub fn eval_str(p: &VfPresentation, s: &str) -> Result<Element, GroupError> {
    let w = p.gen_alphabet.parse_word(s).map_err(|e| match e {
        WordError::UnknownLetter(t) => GroupError::UnknownLetter(t),
        e => GroupError::Word(e),
    })?;
    eval_word(p, &w)
}

/// Whether the words generate the whole free group over `k` base letters,
/// by Stallings folding of the bouquet of loops they spell.
fn generates_free_group(k: usize, words: &[&[Letter]]) -> bool {
    let mut edges: Vec<(usize, Letter, usize)> = Vec::new();
    let mut n = 1;
    for w in words {
        let mut cur = 0;
        for (pos, &x) in w.iter().enumerate() {
            let next = if pos + 1 == w.len() {
                0
            } else {
                n += 1;
                n - 1
            };
            edges.push((cur, x, next));
            cur = next;
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    loop {
        let mut seen: HashMap<(usize, Letter), usize> = HashMap::new();
        let mut merged = false;
        for &(u, x, v) in &edges {
            let (u, v) = (find(&mut parent, u), find(&mut parent, v));
            for (s, l, t) in [(u, x, v), (v, inv(x), u)] {
                match seen.get(&(s, l)).copied() {
                    Some(t2) => {
                        let (a, b) = (find(&mut parent, t2), find(&mut parent, t));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                            merged = true;
                        }
                    }
                    None => {
                        seen.insert((s, l), t);
                    }
                }
            }
        }
        if !merged {
            break;
        }
    }
    // generated iff every letter is a loop at the base vertex
    let mut loops = vec![false; 2 * k];
    for &(u, x, v) in &edges {
        let (u, v) = (find(&mut parent, u), find(&mut parent, v));
        if u == 0 && v == 0 {
            loops[x as usize] = true;
            loops[inv(x) as usize] = true;
        }
    }
    loops.iter().all(|&b| b)
}

/// Checks the group axioms of the free-by-finite data. Returns the list of
/// violated identities; empty means valid.
pub fn validate_presentation(p: &VfPresentation) -> Vec<String> {
    let mut errs = Vec::new();
    let m1 = p.coset_count;
    let fa = &p.free_alphabet;
    let k2 = p.letters() as Letter;
    let show = |w: &[Letter]| fa.format_word(w);
    for j in 0..m1 {
        let (f, mu) = &p.mult[0][j];
        if *mu != j || !f.is_empty() {
            errs.push(format!("b_0 b_{j} = ({}, {mu}), expected b_{j}", show(f)));
        }
        let (f, mu) = &p.mult[j][0];
        if *mu != j || !f.is_empty() {
            errs.push(format!("b_{j} b_0 = ({}, {mu}), expected b_{j}", show(f)));
        }
    }
    for x in 0..k2 {
        if p.conj[0][x as usize][..] != [x] {
            errs.push(format!("conj(0, {}) = {}, expected identity", fa.name(x), show(&p.conj[0][x as usize])));
        }
    }
    for i in 0..m1 {
        let imgs: Vec<&[Letter]> = (0..k2).step_by(2).map(|x| &p.conj[i][x as usize][..]).collect();
        if imgs.iter().any(|w| w.is_empty()) || !generates_free_group(fa.base_len(), &imgs) {
            errs.push(format!("conj({i}, ·) does not extend to an automorphism of F"));
        }
    }
    let mut inverses = true;
    for i in 0..m1 {
        if p.inverse_coset(i).is_none() {
            errs.push(format!("coset {i} has no inverse"));
            inverses = false;
        }
    }
    // (b_i b_j) x = b_i (b_j x)
    for i in 0..m1 {
        for j in 0..m1 {
            let (f, mu) = &p.mult[i][j];
            for x in 0..k2 {
                let lhs = p.conj_word(i, &p.conj[j][x as usize]);
                let rhs = free_reduce(&[&f[..], &p.conj[*mu][x as usize], &f.inverse()].concat());
                if lhs != rhs {
                    errs.push(format!(
                        "associativity fails for conjugation: conj({i}, conj({j}, {})) = {} but f_{i}{j} conj({mu}, ·) f_{i}{j}^-1 gives {}",
                        fa.name(x),
                        show(&lhs),
                        show(&rhs)
                    ));
                }
            }
        }
    }
    // (b_i b_j) b_k = b_i (b_j b_k)
    for i in 0..m1 {
        for j in 0..m1 {
            for k in 0..m1 {
                let l = multiply(p, &multiply(p, &Element::coset(i), &Element::coset(j)), &Element::coset(k));
                let r = multiply(p, &Element::coset(i), &multiply(p, &Element::coset(j), &Element::coset(k)));
                if l != r {
                    errs.push(format!(
                        "associativity fails: (b_{i} b_{j}) b_{k} = {} but b_{i} (b_{j} b_{k}) = {}",
                        p.format_element(&l),
                        p.format_element(&r)
                    ));
                }
            }
        }
    }
    if inverses && errs.is_empty() {
        for i in 0..m1 {
            let g = Element::coset(i);
            if multiply(p, &invert_elem(p, &g), &g) != Element::identity() {
                errs.push(format!("left inverse of b_{i} fails"));
            }
        }
    }
    errs
}

/// An endomorphism given by the images of the free letters and of the coset
/// representatives, with the derived transducer.
#[derive(Clone, Debug)]
pub struct Endomorphism {
    /// `aφ` for every letter of the doubled alphabet.
    pub free_images: Vec<Element>,
    /// `b_i φ`.
    pub coset_images: Vec<Element>,
    /// `h[i * k + a]` with `b_i (aφ) = h_{i,a} b_{δ(i,a)}`.
    pub h: Vec<ReducedWord>,
    pub delta: Vec<usize>,
    pub transducer: InverseTransducer,
}

impl Endomorphism {
    /// Derives `h`, `δ` and `T` from the images of the base free letters and
    /// of the coset representatives.
    pub fn new(p: &VfPresentation, base_images: Vec<Element>, coset_images: Vec<Element>) -> Result<Self, GroupError> {
        let k = p.free_alphabet.base_len();
        if base_images.len() != k || coset_images.len() != p.coset_count {
            return Err(GroupError::Parse("endomorphism does not cover every letter and coset".into()));
        }
        if base_images.iter().chain(&coset_images).any(|g| g.i >= p.coset_count) {
            return Err(GroupError::Parse("endomorphism image names an unknown coset".into()));
        }
        if p.coset_count > 0 && (0..p.coset_count).any(|i| p.inverse_coset(i).is_none()) {
            return Err(GroupError::InvalidPresentation(vec!["coset without inverse".into()]));
        }
        let free_images: Vec<Element> = base_images
            .into_iter()
            .flat_map(|g| {
                let gi = invert_elem(p, &g);
                [g, gi]
            })
            .collect();
        let k2 = p.letters();
        let mut h = Vec::with_capacity(p.coset_count * k2);
        let mut delta = Vec::with_capacity(p.coset_count * k2);
        for i in 0..p.coset_count {
            for img in &free_images {
                let e = multiply(p, &Element::coset(i), img);
                h.push(e.w);
                delta.push(e.i);
            }
        }
        let transducer = InverseTransducer::new(
            k2,
            0,
            delta.iter().map(|&q| q as u32).collect(),
            h.iter().map(|w| w.as_word().clone()).collect(),
        );
        Ok(Endomorphism {
            free_images,
            coset_images,
            h,
            delta,
            transducer,
        })
    }

    pub fn identity(p: &VfPresentation) -> Self {
        let base = (0..p.free_alphabet.base_len() as Letter)
            .map(|x| Element::free(&[2 * x]))
            .collect();
        let cosets = (0..p.coset_count).map(Element::coset).collect();
        Endomorphism::new(p, base, cosets).expect("identity is well formed")
    }

    /// `A_j = (Q, 0, {j}, δ)`.
    pub fn coset_automaton(&self, j: usize) -> Dfa {
        let q = self.coset_images.len();
        let k2 = self.free_images.len();
        let mut d = Dfa::new(q, k2);
        for i in 0..q {
            for x in 0..k2 {
                d.set_transition(i as u32, x as Letter, self.delta[i * k2 + x] as u32);
            }
        }
        d.set_terminal(j as u32, true);
        d
    }

    /// `φ₀` on free words together with `η`, by direct multiplication.
    pub fn image_of_free(&self, p: &VfPresentation, w: &[Letter]) -> Element {
        let mut acc: Vec<Letter> = Vec::new();
        let mut i = 0;
        for &x in w {
            let img = &self.free_images[x as usize];
            for &y in img.w.iter() {
                crate::words::push_reduced(&mut acc, &p.conj[i][y as usize]);
            }
            let (f, mu) = &p.mult[i][img.i];
            crate::words::push_reduced(&mut acc, f);
            i = *mu;
        }
        Element::new(ReducedWord::new(Word(acc)).expect("reduced"), i)
    }
}

/// Checks that `φ` respects the defining relations of the presentation and
/// that the derived transducer is inverse.
pub fn validate_endomorphism(p: &VfPresentation, phi: &Endomorphism) -> Result<(), GroupError> {
    let mut errs = Vec::new();
    let fa = &p.free_alphabet;
    if phi.coset_images[0] != Element::identity() {
        errs.push(format!("b_0 maps to {}, expected 1", p.format_element(&phi.coset_images[0])));
    }
    for x in 0..p.letters() as Letter {
        let e = multiply(p, &phi.free_images[x as usize], &phi.free_images[inv(x) as usize]);
        if e != Element::identity() {
            errs.push(format!("({0}φ)({0}^-1 φ) = {1}", fa.name(x), p.format_element(&e)));
        }
    }
    for i in 0..p.coset_count {
        let bi = &phi.coset_images[i];
        let bi_inv = invert_elem(p, bi);
        for x in (0..p.letters() as Letter).step_by(2) {
            let l = multiply(p, &multiply(p, bi, &phi.free_images[x as usize]), &bi_inv);
            let r = phi.image_of_free(p, p.conj_letter(i, x));
            if l != r {
                errs.push(format!(
                    "image of b_{i} {x} b_{i}^-1 is {} but image of conj({i}, {x}) is {}",
                    p.format_element(&l),
                    p.format_element(&r),
                    x = fa.name(x)
                ));
            }
        }
        for j in 0..p.coset_count {
            let (f, mu) = p.mult_entry(i, j);
            let l = multiply(p, bi, &phi.coset_images[j]);
            let r = multiply(p, &phi.image_of_free(p, f), &phi.coset_images[*mu]);
            if l != r {
                errs.push(format!(
                    "image of b_{i} b_{j} is {} but image of f_{i}{j} b_{mu} is {}",
                    p.format_element(&l),
                    p.format_element(&r)
                ));
            }
        }
    }
    if errs.is_empty() && !phi.transducer.is_inverse() {
        errs.push("derived transducer is not inverse".into());
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(GroupError::RelationViolated(errs))
    }
}

/// `(w b_i)φ = (wφ)(b_i φ)`.
pub fn apply_endo(p: &VfPresentation, phi: &Endomorphism, g: &Element) -> Element {
    multiply(p, &phi.image_of_free(p, &g.w), &phi.coset_images[g.i])
}

/// Composition `g ↦ (gφ)ψ`.
pub fn compose(p: &VfPresentation, phi: &Endomorphism, psi: &Endomorphism) -> Endomorphism {
    let base = (0..p.letters()).step_by(2).map(|x| apply_endo(p, psi, &phi.free_images[x])).collect();
    let cosets = phi.coset_images.iter().map(|g| apply_endo(p, psi, g)).collect();
    Endomorphism::new(p, base, cosets).expect("composition of well formed maps")
}

impl GroupOps for VfPresentation {
    type Elem = Element;
    fn identity(&self) -> Element {
        Element::identity()
    }
    fn mul(&self, g: &Element, h: &Element) -> Element {
        multiply(self, g, h)
    }
    fn inverse(&self, g: &Element) -> Element {
        invert_elem(self, g)
    }
    fn size(&self, g: &Element) -> usize {
        g.w.len()
    }
}

/// All `(w, i)` with `|w| ≤ n` in coset order, then by word.
pub fn free_ball(p: &VfPresentation, n: usize) -> Vec<Element> {
    let words = reduced_words_dfa(p.letters()).enumerate_language(n);
    let mut out = Vec::with_capacity(words.len() * p.coset_count);
    for i in 0..p.coset_count {
        for w in &words {
            out.push(Element::new(ReducedWord::new(w.clone()).expect("reduced"), i));
        }
    }
    out
}

/// Fixed elements with free part of length at most `n`, by exhaustive scan.
pub fn brute_fix_oracle(p: &VfPresentation, phi: &Endomorphism, n: usize) -> BTreeSet<Element> {
    let mut out = BTreeSet::new();
    for w in reduced_words_dfa(p.letters()).enumerate_language(n) {
        let wphi = phi.image_of_free(p, &w);
        for i in 0..p.coset_count {
            let img = multiply(p, &wphi, &phi.coset_images[i]);
            if img.i == i && img.w.as_word() == &w {
                out.insert(Element::new(img.w, i));
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct FixConfig {
    pub gt_depth: Option<usize>,
    pub gt_horizon: Option<usize>,
    /// Radius of the oracle ball used to certify the generators.
    pub radius: usize,
    pub slack: usize,
    pub threads: usize,
}

impl Default for FixConfig {
    fn default() -> Self {
        FixConfig {
            gt_depth: None,
            gt_horizon: None,
            radius: 8,
            slack: 4,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PairAutomata {
    pub i: usize,
    pub j: usize,
    pub z: ReducedWord,
    /// Solutions of `gφ₀ = g z_{i,j}^-1`.
    pub l: GtAutomaton,
    /// `L ∩ L(A_j)`, restricted to reduced words.
    pub x: Dfa,
}

#[derive(Clone, Debug)]
pub struct FixSubgroupReport {
    pub y: Vec<(usize, usize)>,
    pub z: BTreeMap<(usize, usize), ReducedWord>,
    pub pairs: Vec<PairAutomata>,
    pub generators: Vec<Element>,
    pub partial: Option<Partiality>,
}

impl FixSubgroupReport {
    pub fn is_partial(&self) -> bool {
        self.partial.is_some()
    }

    /// Accepted elements of the rational expression `∪ X_{i,j} b_i` with
    /// free part of length at most `n`.
    pub fn rational_elements(&self, n: usize) -> BTreeSet<Element> {
        let mut out = BTreeSet::new();
        for pa in &self.pairs {
            for w in pa.x.enumerate_language(n) {
                out.insert(Element::new(ReducedWord::new(w).expect("reduced language"), pa.i));
            }
        }
        out
    }
}

/// `Y` and `z_{i,j}`: pairs with `b_j (b_i φ) = z_{i,j} b_i`.
pub fn fix_pairs(p: &VfPresentation, phi: &Endomorphism) -> BTreeMap<(usize, usize), ReducedWord> {
    let mut out = BTreeMap::new();
    for i in 0..p.coset_count {
        for j in 0..p.coset_count {
            let e = multiply(p, &Element::coset(j), &phi.coset_images[i]);
            if e.i == i {
                out.insert((i, j), e.w);
            }
        }
    }
    out
}

fn pair_automaton(phi: &Endomorphism, i: usize, j: usize, z: &ReducedWord, cfg: &FixConfig) -> Result<PairAutomata, GtError> {
    let target = z.inverse();
    let gcfg = GtConfig::new(&phi.transducer, &target).with_bounds(cfg.gt_depth, cfg.gt_horizon);
    let l = build_gt_automaton(&phi.transducer, &target, &gcfg)?;
    let k2 = phi.free_images.len();
    let x = l
        .dfa
        .intersect(&phi.coset_automaton(j))
        .intersect(&reduced_words_dfa(k2))
        .trim();
    Ok(PairAutomata {
        i,
        j,
        z: z.clone(),
        l,
        x,
    })
}

/// The fixed subgroup: automata for each `X_{i,j}` and a generating set
/// certified against [`brute_fix_oracle`] on the configured ball.
pub fn fix_subgroup(p: &VfPresentation, phi: &Endomorphism, cfg: &FixConfig) -> Result<FixSubgroupReport, GroupError> {
    let z = fix_pairs(p, phi);
    let y: Vec<(usize, usize)> = z.keys().copied().collect();
    let jobs: Vec<((usize, usize), &ReducedWord)> = z.iter().map(|(&k, v)| (k, v)).collect();
    let mut results: Vec<Option<Result<PairAutomata, GtError>>> = vec![None; jobs.len()];
    let threads = cfg.threads.max(1);
    if threads == 1 || jobs.len() < 2 {
        for (slot, &((i, j), zz)) in results.iter_mut().zip(&jobs) {
            *slot = Some(pair_automaton(phi, i, j, zz, cfg));
        }
    } else {
        let chunk = jobs.len().div_ceil(threads);
        std::thread::scope(|s| {
            for (slots, js) in results.chunks_mut(chunk).zip(jobs.chunks(chunk)) {
                s.spawn(move || {
                    for (slot, &((i, j), zz)) in slots.iter_mut().zip(js) {
                        *slot = Some(pair_automaton(phi, i, j, zz, cfg));
                    }
                });
            }
        });
    }
    let mut pairs = Vec::new();
    for r in results {
        match r.expect("every job runs") {
            Ok(pa) => pairs.push(pa),
            Err(e) => return Err(GroupError::VerificationFailed(e.to_string())),
        }
    }
    let partial = pairs.iter().find_map(|pa| pa.l.partial.clone());
    let target = brute_fix_oracle(p, phi, cfg.radius);
    let langs: Vec<Dfa> = pairs.iter().map(|pa| pa.x.clone()).collect();
    let cosets: Vec<usize> = pairs.iter().map(|pa| pa.i).collect();
    let scfg = SubgroupConfig {
        radius: cfg.radius,
        slack: cfg.slack,
        ..SubgroupConfig::default()
    };
    let generators = subgroup_generators(p, &langs, |idx, w| Element::new(free_reduce(w), cosets[idx]), &target, &scfg)
        .map_err(|e| {
            GroupError::VerificationFailed(format!(
                "{e}; first missing: {}",
                e.missing.first().map(|g| p.format_element(g)).unwrap_or_default()
            ))
        })?;
    Ok(FixSubgroupReport {
        y,
        z,
        pairs,
        generators,
        partial,
    })
}

// ---------------------------------------------------------------------------
// group files

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ElemDef {
    word: String,
    coset: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EndoDef {
    free: BTreeMap<String, ElemDef>,
    cosets: Vec<ElemDef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupFile {
    version: u32,
    free_generators: Vec<String>,
    coset_count: usize,
    conj: Vec<BTreeMap<String, String>>,
    mult: Vec<Vec<ElemDef>>,
    generators: BTreeMap<String, ElemDef>,
    #[serde(default)]
    generator_order: Option<Vec<String>>,
    #[serde(default)]
    endomorphism: Option<EndoDef>,
    #[serde(default)]
    endomorphism_inverse: Option<EndoDef>,
}

/// Presentation plus optional endomorphism (and its inverse) read from a
/// group file.
#[derive(Clone, Debug)]
pub struct GroupData {
    pub presentation: VfPresentation,
    pub endomorphism: Option<Endomorphism>,
    pub inverse: Option<Endomorphism>,
}

impl GroupData {
    pub fn endo(&self) -> Result<&Endomorphism, GroupError> {
        self.endomorphism.as_ref().ok_or(GroupError::NoEndomorphism)
    }
}

fn parse_elem(fa: &InvAlphabet, e: &ElemDef) -> Result<Element, GroupError> {
    Ok(Element::new(free_reduce(&fa.parse_word(&e.word)?), e.coset))
}

fn parse_endo(p: &VfPresentation, def: &EndoDef) -> Result<Endomorphism, GroupError> {
    let fa = &p.free_alphabet;
    let mut base = Vec::new();
    for name in fa.base_names() {
        let e = def
            .free
            .get(name)
            .ok_or_else(|| GroupError::Parse(format!("endomorphism misses letter `{name}`")))?;
        base.push(parse_elem(fa, e)?);
    }
    if def.free.len() != fa.base_len() {
        return Err(GroupError::Parse("endomorphism names unknown letters".into()));
    }
    let cosets = def.cosets.iter().map(|e| parse_elem(fa, e)).collect::<Result<Vec<_>, _>>()?;
    Endomorphism::new(p, base, cosets)
}

/// Reads a group file. The presentation is shape-checked but not validated;
/// endomorphisms are only built when every coset has an inverse.
pub fn load_group(text: &str) -> Result<GroupData, GroupError> {
    let gf: GroupFile = serde_json::from_str(text).map_err(|e| GroupError::Parse(e.to_string()))?;
    if gf.version != 1 {
        return Err(GroupError::Parse(format!("unsupported version {}", gf.version)));
    }
    let fa = InvAlphabet::new(&gf.free_generators);
    if gf.conj.len() != gf.coset_count || gf.mult.len() != gf.coset_count {
        return Err(GroupError::Parse("conj and mult must have coset_count rows".into()));
    }
    let mut conj = Vec::new();
    for (i, row) in gf.conj.iter().enumerate() {
        let mut out = Vec::new();
        for name in fa.base_names() {
            let w = row
                .get(name)
                .ok_or_else(|| GroupError::Parse(format!("conj row {i} misses `{name}`")))?;
            out.push(free_reduce(&fa.parse_word(w)?));
        }
        if row.len() != fa.base_len() {
            return Err(GroupError::Parse(format!("conj row {i} names unknown letters")));
        }
        conj.push(out);
    }
    let mult = gf
        .mult
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| Ok((free_reduce(&fa.parse_word(&e.word)?), e.coset)))
                .collect::<Result<Vec<_>, GroupError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = gf.generators.keys().cloned().collect();
    let ga = match &gf.generator_order {
        Some(order) => InvAlphabet::with_order(&names, order)?,
        None => InvAlphabet::new(&names),
    };
    let gen_map = names
        .iter()
        .map(|n| parse_elem(&fa, &gf.generators[n]))
        .collect::<Result<Vec<_>, _>>()?;
    let presentation = VfPresentation::new(fa, conj, mult, ga, gen_map)?;
    let has_inverses = (0..presentation.coset_count).all(|i| presentation.inverse_coset(i).is_some());
    let endo = |s: &Option<EndoDef>| -> Result<Option<Endomorphism>, GroupError> {
        match s {
            Some(s) if has_inverses => parse_endo(&presentation, s).map(Some),
            _ => Ok(None),
        }
    };
    let endomorphism = endo(&gf.endomorphism)?;
    let inverse = endo(&gf.endomorphism_inverse)?;
    Ok(GroupData {
        presentation,
        endomorphism,
        inverse,
    })
}
