//! Cayley balls over the external generators, shortlex normal forms, the
//! length-nonincreasing rewriting system built from them, the word acceptor
//! and the boundary model given by its infinite paths.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::automata::{AutomataError, Dfa, Lasso, NONE};
use crate::group::{eval_word, invert_elem, multiply, Element, VfPresentation};
use crate::words::{lcp_len, omega_canonicalize, InvAlphabet, Letter, OmegaWord, ReducedWord, Word};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeoError {
    #[error("element lies outside the ball of radius {radius}")]
    OutOfBall { radius: usize },
    #[error("acceptor differs from the one built at radius {}; raise the radius", radius - 1)]
    StabilityWarning {
        radius: usize,
        current: Box<Dfa>,
        previous: Box<Dfa>,
    },
    #[error(transparent)]
    Automata(#[from] AutomataError),
    #[error("left translate did not stabilize after {0} letters")]
    NotStabilized(usize),
    #[error("malformed ball cache: {0}")]
    Cache(String),
    #[error("rule length cap {cap} exceeds the ball radius {radius}")]
    CapTooLarge { cap: usize, radius: usize },
}

/// All elements at distance at most `radius` from 1 in the Cayley graph,
/// in shortlex order of their normal forms.
#[derive(Clone, Debug)]
pub struct Ball {
    pub radius: usize,
    pub presentation: VfPresentation,
    /// Image of each letter of the doubled external alphabet.
    gens: Vec<Element>,
    pub elems: Vec<Element>,
    pub nf: Vec<Word>,
    index: HashMap<Element, u32>,
    /// `step[id * k + x]`: id of `elems[id] · x`, or `NONE` outside the ball.
    step: Vec<u32>,
}

impl Ball {
    pub fn alphabet(&self) -> &InvAlphabet {
        &self.presentation.gen_alphabet
    }

    pub fn letters(&self) -> usize {
        self.gens.len()
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn id(&self, g: &Element) -> Option<u32> {
        self.index.get(g).copied()
    }

    pub fn gen(&self, x: Letter) -> &Element {
        &self.gens[x as usize]
    }

    pub fn step(&self, id: u32, x: Letter) -> Option<u32> {
        let t = self.step[id as usize * self.gens.len() + x as usize];
        (t != NONE).then_some(t)
    }

    /// Geodesic length of `g`, if `g` is in the ball.
    pub fn d1(&self, g: &Element) -> Option<usize> {
        self.id(g).map(|i| self.nf[i as usize].len())
    }

    /// `d1(g, h) = d1(1, g⁻¹h)`.
    pub fn dist(&self, g: &Element, h: &Element) -> Option<usize> {
        let p = &self.presentation;
        self.d1(&multiply(p, &invert_elem(p, g), h))
    }

    pub fn eval(&self, w: &[Letter]) -> Element {
        eval_word(&self.presentation, w).expect("letters of the generator alphabet")
    }

    fn from_elems(p: &VfPresentation, radius: usize, elems: Vec<Element>, nf: Vec<Word>) -> Ball {
        let gens = gen_images(p);
        let index: HashMap<Element, u32> = elems.iter().enumerate().map(|(i, g)| (g.clone(), i as u32)).collect();
        let k = gens.len();
        let mut step = vec![NONE; elems.len() * k];
        for (i, g) in elems.iter().enumerate() {
            for (x, s) in gens.iter().enumerate() {
                if let Some(&j) = index.get(&multiply(p, g, s)) {
                    step[i * k + x] = j;
                }
            }
        }
        Ball {
            radius,
            presentation: p.clone(),
            gens,
            elems,
            nf,
            index,
            step,
        }
    }

    /// Binary encoding: radius, count, then per element its coset, free
    /// word and normal form, all little-endian `u32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = b"VFBALL1\0".to_vec();
        let mut put = |x: usize| out.extend_from_slice(&(x as u32).to_le_bytes());
        put(self.radius);
        put(self.elems.len());
        for (g, w) in self.elems.iter().zip(&self.nf) {
            put(g.i);
            put(g.w.len());
            g.w.iter().for_each(|&x| put(x as usize));
            put(w.len());
            w.iter().for_each(|&x| put(x as usize));
        }
        out
    }

    pub fn from_bytes(p: &VfPresentation, bytes: &[u8]) -> Result<Ball, GeoError> {
        let bad = |s: &str| GeoError::Cache(s.to_string());
        let body = bytes.strip_prefix(b"VFBALL1\0").ok_or_else(|| bad("bad magic"))?;
        let mut it = body.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize);
        let mut next = || it.next().ok_or_else(|| bad("truncated"));
        let radius = next()?;
        let n = next()?;
        let k2 = p.letters() as u32;
        let ke = p.gen_alphabet.size() as u32;
        let mut elems = Vec::with_capacity(n);
        let mut nf = Vec::with_capacity(n);
        for _ in 0..n {
            let i = next()?;
            let len = next()?;
            let w = (0..len).map(|_| next().map(|x| x as Letter)).collect::<Result<Vec<_>, _>>()?;
            let len = next()?;
            let u = (0..len).map(|_| next().map(|x| x as Letter)).collect::<Result<Vec<_>, _>>()?;
            if i >= p.coset_count || w.iter().any(|&x| x >= k2) || u.iter().any(|&x| x >= ke) {
                return Err(bad("index out of range"));
            }
            let w = ReducedWord::new(Word(w)).ok_or_else(|| bad("unreduced word"))?;
            elems.push(Element::new(w, i));
            nf.push(Word(u));
        }
        Ok(Ball::from_elems(p, radius, elems, nf))
    }
}

fn gen_images(p: &VfPresentation) -> Vec<Element> {
    p.gen_map
        .iter()
        .flat_map(|g| [g.clone(), invert_elem(p, g)])
        .collect()
}

/// Breadth-first search from 1 by right multiplication with generators.
/// Parents are expanded in shortlex order and letters in alphabet order,
/// so the first visit of an element is along its shortlex normal form.
pub fn build_ball(p: &VfPresentation, radius: usize) -> Ball {
    let gens = gen_images(p);
    let order: Vec<Letter> = p.gen_alphabet.ordered().to_vec();
    let mut seen: HashSet<Element> = HashSet::new();
    let mut elems = vec![Element::identity()];
    let mut nf = vec![Word::empty()];
    seen.insert(Element::identity());
    let mut level = 0..1;
    for _ in 0..radius {
        let start = elems.len();
        for id in level.clone() {
            for &x in &order {
                let h = multiply(p, &elems[id], &gens[x as usize]);
                if seen.insert(h.clone()) {
                    elems.push(h);
                    nf.push(nf[id].concat(&[x]));
                }
            }
        }
        level = start..elems.len();
        if level.is_empty() {
            break;
        }
    }
    Ball::from_elems(p, radius, elems, nf)
}

pub fn normal_form(b: &Ball, g: &Element) -> Result<Word, GeoError> {
    b.id(g)
        .map(|i| b.nf[i as usize].clone())
        .ok_or(GeoError::OutOfBall { radius: b.radius })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeoConstants {
    /// Fellow traveller constant.
    pub k0: usize,
    /// Prefix-preservation constant for one-letter extensions.
    pub n0: usize,
    /// `K0 · N0 + 1`.
    pub rule_length_cap: usize,
    /// Radius on which both are certified.
    pub radius: usize,
}

/// Elements on some geodesic from 1 to `elems[g]`, grouped by length.
fn interval(b: &Ball, g: u32) -> Vec<Vec<u32>> {
    let d = b.nf[g as usize].len();
    let mut levels = vec![Vec::new(); d + 1];
    levels[d].push(g);
    let mut seen: HashSet<u32> = HashSet::from([g]);
    for n in (1..=d).rev() {
        let cur = std::mem::take(&mut levels[n]);
        let mut below = Vec::new();
        for &x in &cur {
            for y in 0..b.letters() as Letter {
                if let Some(p) = b.step(x, y) {
                    if b.nf[p as usize].len() + 1 == n && seen.insert(p) {
                        below.push(p);
                    }
                }
            }
        }
        levels[n] = cur;
        levels[n - 1] = below;
    }
    levels
}

/// Smallest constants with no counterexample in the ball:
/// - `K0`: for geodesics `u, v` with `d1(uπ, vπ) ≤ 1`, every
///   `d1(u^[n]π, v^[n]π) ≤ K0`;
/// - `N0`: every geodesic `u` and letter `a` admit a geodesic `w` for
///   `(ua)π` with `|u ∧ w| ≥ |u| − N0`.
///
/// Both only use that prefixes of geodesics to `g` are exactly the
/// elements of the geodesic interval `[1, g]`.
pub fn estimate_constants(b: &Ball) -> GeoConstants {
    let k = b.letters() as Letter;
    let n_elems = b.len() as u32;
    let intervals: Vec<Vec<Vec<u32>>> = (0..n_elems).map(|g| interval(b, g)).collect();
    let member: Vec<HashSet<u32>> = intervals.iter().map(|iv| iv.iter().flatten().copied().collect()).collect();
    let dist = |x: u32, y: u32| -> usize {
        b.dist(&b.elems[x as usize], &b.elems[y as usize])
            .unwrap_or(b.radius + 1)
    };
    let mut k0 = 0usize;
    let mut n0 = 1usize;
    for g in 0..n_elems {
        let dg = b.nf[g as usize].len();
        let mut nbrs: Vec<u32> = vec![g];
        nbrs.extend((0..k).filter_map(|x| b.step(g, x)));
        for &h in &nbrs {
            if h < g {
                continue;
            }
            let (ig, ih) = (&intervals[g as usize], &intervals[h as usize]);
            let top = ig.len().max(ih.len());
            for n in 0..top {
                let xs: &[u32] = ig.get(n).map_or(&ig[ig.len() - 1], |v| v);
                let ys: &[u32] = ih.get(n).map_or(&ih[ih.len() - 1], |v| v);
                for &x in xs {
                    for &y in ys {
                        if x != y {
                            k0 = k0.max(dist(x, y));
                        }
                    }
                }
            }
        }
        if dg + 1 > b.radius {
            continue;
        }
        // best[x]: over geodesic paths 1 → x, the least possible index of the
        // last vertex lying in [1, h]
        for x in 0..k {
            let Some(h) = b.step(g, x) else { continue };
            let ih = &member[h as usize];
            let mut best: HashMap<u32, usize> = HashMap::new();
            for (n, lvl) in intervals[g as usize].iter().enumerate() {
                for &v in lvl {
                    let val = if ih.contains(&v) {
                        n
                    } else {
                        (0..k)
                            .filter_map(|y| b.step(v, y))
                            .filter(|&p| b.nf[p as usize].len() + 1 == n)
                            .filter_map(|p| best.get(&p).copied())
                            .min()
                            .unwrap_or(0)
                    };
                    best.insert(v, val);
                }
            }
            n0 = n0.max(dg - best[&g]);
        }
    }
    GeoConstants {
        k0,
        n0,
        rule_length_cap: k0 * n0 + 1,
        radius: b.radius,
    }
}

/// Rules `(u, nf(u))` for external words `u ≠ nf(u)` up to a length cap.
#[derive(Clone, Debug, Default)]
pub struct RewritingSystem {
    pub rules: Vec<(Word, Word)>,
    map: HashMap<Vec<Letter>, Vec<Letter>>,
    max_lhs: usize,
}

impl RewritingSystem {
    pub fn new(rules: Vec<(Word, Word)>) -> Self {
        let map = rules.iter().map(|(l, r)| (l.0.clone(), r.0.clone())).collect();
        let max_lhs = rules.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        RewritingSystem { rules, map, max_lhs }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn max_lhs(&self) -> usize {
        self.max_lhs
    }

    pub fn is_length_nonincreasing(&self) -> bool {
        self.rules.iter().all(|(l, r)| l.len() >= r.len())
    }

    pub fn without_rule(&self, i: usize) -> Self {
        let mut rules = self.rules.clone();
        rules.remove(i);
        RewritingSystem::new(rules)
    }

    /// All words obtained by one rule application.
    pub fn one_step(&self, w: &[Letter]) -> Vec<Word> {
        let mut out = Vec::new();
        for i in 0..w.len() {
            for j in i + 1..=w.len().min(i + self.max_lhs) {
                if let Some(r) = self.map.get(&w[i..j]) {
                    out.push(Word([&w[..i], &r[..], &w[j..]].concat()));
                }
            }
        }
        out
    }

    pub fn is_irreducible(&self, w: &[Letter]) -> bool {
        self.one_step(w).is_empty()
    }
}

/// `R'` with the given cap: every word of length at most `cap` whose
/// normal form differs from it.
pub fn build_rewriting(b: &Ball, cap: usize) -> RewritingSystem {
    assert!(cap <= b.radius, "rule length cap exceeds the ball radius");
    let k = b.letters() as Letter;
    let mut rules = Vec::new();
    // ids of the elements represented by the words of the current length
    let mut level: Vec<(Vec<Letter>, u32)> = vec![(Vec::new(), 0)];
    for _ in 0..cap {
        let mut next = Vec::new();
        for (w, id) in &level {
            for x in 0..k {
                let g = multiply(&b.presentation, &b.elems[*id as usize], b.gen(x));
                let j = b.id(&g).expect("words up to the cap stay in the ball");
                let mut v = w.clone();
                v.push(x);
                if b.nf[j as usize].0 != v {
                    rules.push((Word(v.clone()), b.nf[j as usize].clone()));
                }
                next.push((v, j));
            }
        }
        level = next;
    }
    RewritingSystem::new(rules)
}

/// Rewrites to an irreducible word, always reducing the redex that ends
/// first (and among those the shortest).
pub fn rewrite_nf(rs: &RewritingSystem, w: &[Letter]) -> Word {
    let mut input: Vec<Letter> = w.iter().rev().copied().collect();
    let mut out: Vec<Letter> = Vec::with_capacity(w.len());
    while let Some(x) = input.pop() {
        out.push(x);
        let n = out.len();
        for l in 1..=rs.max_lhs.min(n) {
            if let Some(r) = rs.map.get(&out[n - l..]) {
                out.truncate(n - l);
                input.extend(r.iter().rev());
                // the letters before the redex may now form a new redex with
                // the right-hand side, so they are re-read too
                let back = rs.max_lhs.saturating_sub(1).min(out.len());
                let tail: Vec<Letter> = out.drain(out.len() - back..).collect();
                input.extend(tail.iter().rev());
                break;
            }
        }
    }
    Word(out)
}

#[derive(Clone, Debug, Default)]
pub struct ConfluenceReport {
    pub critical_pairs: usize,
    /// Critical pair words whose two reducts have different irreducible forms.
    pub divergent: Vec<(Word, Word, Word)>,
    pub words_checked: usize,
    /// Ball words whose rewriting disagrees with the ball normal form.
    pub nf_mismatches: Vec<(Word, Word, Word)>,
}

impl ConfluenceReport {
    pub fn is_confluent(&self) -> bool {
        self.divergent.is_empty() && self.nf_mismatches.is_empty()
    }
}

/// Local confluence on every critical pair (overlaps and inclusions of
/// left-hand sides), which with termination gives confluence; plus, for
/// every word `nf(g) x y` with `g` in the ball, that all one-step reducts
/// reach the same irreducible word, equal to the ball normal form when the
/// word evaluates inside the ball.
pub fn check_confluence(rs: &RewritingSystem, b: &Ball) -> ConfluenceReport {
    let mut rep = ConfluenceReport::default();
    let check = |w: Vec<Letter>, rep: &mut ConfluenceReport| {
        let reducts = rs.one_step(&w);
        if reducts.len() < 2 {
            return;
        }
        let first = rewrite_nf(rs, &reducts[0]);
        for r in &reducts[1..] {
            let other = rewrite_nf(rs, r);
            if other != first {
                rep.divergent.push((Word(w.clone()), first.clone(), other));
                return;
            }
        }
    };
    let lhs: Vec<&Word> = rs.rules.iter().map(|(l, _)| l).collect();
    let mut seen: HashSet<Vec<Letter>> = HashSet::new();
    for l1 in &lhs {
        for l2 in &lhs {
            for o in 1..l1.len().min(l2.len()) {
                if l1[l1.len() - o..] == l2[..o] {
                    let w = [&l1[..], &l2[o..]].concat();
                    if seen.insert(w.clone()) {
                        rep.critical_pairs += 1;
                        check(w, &mut rep);
                    }
                }
            }
            if l2.len() < l1.len() && l1.windows(l2.len()).any(|f| f == &l2[..]) && seen.insert(l1.0.clone()) {
                rep.critical_pairs += 1;
                check(l1.0.clone(), &mut rep);
            }
        }
    }
    let k = b.letters() as Letter;
    for (id, u) in b.nf.iter().enumerate() {
        if u.len() + 2 > b.radius {
            continue;
        }
        for x in 0..k {
            for y in 0..k {
                let w = [&u[..], &[x, y]].concat();
                rep.words_checked += 1;
                check(w.clone(), &mut rep);
                let g = multiply(&b.presentation, &multiply(&b.presentation, &b.elems[id], b.gen(x)), b.gen(y));
                let want = &b.nf[b.id(&g).expect("inside the ball") as usize];
                let got = rewrite_nf(rs, &w);
                if &got != want {
                    rep.nf_mismatches.push((Word(w), got, want.clone()));
                }
            }
        }
    }
    rep
}

/// Acceptor built only from elements of length at most `r`. Returns the
/// minimized automaton and whether every class had a representative
/// short enough to read off its transitions consistently.
fn acceptor_at(b: &Ball, r: usize) -> (Dfa, bool) {
    let k = b.letters();
    let h = r / 2;
    let n = b.len();
    // trie children: id → (letter, child) for normal forms extended by one letter
    let mut children: Vec<Vec<(Letter, u32)>> = vec![Vec::new(); n];
    for id in 1..n as u32 {
        let w = &b.nf[id as usize];
        if w.len() > r {
            continue;
        }
        let parent = b.id(&b.eval(&w[..w.len() - 1])).expect("prefix in ball");
        children[parent as usize].push((w[w.len() - 1], id));
    }
    // depth-d subtree signatures
    let mut sig = vec![0u32; n];
    for _ in 0..h {
        let mut table: HashMap<Vec<(Letter, u32)>, u32> = HashMap::new();
        let next: Vec<u32> = (0..n)
            .map(|id| {
                let mut row: Vec<(Letter, u32)> = children[id].iter().map(|&(x, c)| (x, sig[c as usize])).collect();
                row.sort_unstable();
                let len = table.len() as u32;
                *table.entry(row).or_insert(len)
            })
            .collect();
        sig = next;
    }
    let depth = r - h;
    let mut class: HashMap<u32, u32> = HashMap::new();
    let mut reps: Vec<u32> = Vec::new();
    for id in 0..n as u32 {
        if b.nf[id as usize].len() > depth {
            continue;
        }
        class.entry(sig[id as usize]).or_insert_with(|| {
            reps.push(id);
            reps.len() as u32 - 1
        });
    }
    let mut dfa = Dfa::new(reps.len(), k);
    let mut consistent = true;
    for q in 0..reps.len() as u32 {
        dfa.set_terminal(q, true);
    }
    for id in 0..n as u32 {
        let len = b.nf[id as usize].len();
        if len > depth {
            continue;
        }
        let q = class[&sig[id as usize]];
        if len == depth {
            if reps[q as usize] == id {
                consistent = false;
            }
            continue;
        }
        for &(x, c) in &children[id as usize] {
            let t = class[&sig[c as usize]];
            match dfa.next(q, x) {
                None if reps[q as usize] == id => dfa.set_transition(q, x, t),
                Some(old) if old != t => consistent = false,
                _ => {}
            }
        }
    }
    (dfa.minimize(), consistent)
}

/// Word acceptor for the normal forms: states are classes of normal-form
/// prefixes of length at most `R − ⌊R/2⌋` with equal extension profiles to
/// depth `⌊R/2⌋`. Built again from the radius `R − 1` data; a difference
/// (or a class without a usable representative) is a stability warning.
pub fn build_acceptor(b: &Ball) -> Result<Dfa, GeoError> {
    let r = b.radius;
    let (cur, ok) = acceptor_at(b, r);
    let (prev, _) = acceptor_at(b, r.saturating_sub(1));
    if ok && cur == prev {
        Ok(cur)
    } else {
        Err(GeoError::StabilityWarning {
            radius: r,
            current: Box::new(cur),
            previous: Box::new(prev),
        })
    }
}

/// Infinite words all of whose prefixes are accepted.
pub fn boundary_points(acc: &Dfa) -> Result<Vec<OmegaWord>, GeoError> {
    Ok(acc.lasso_set()?.iter().map(Lasso::to_omega).collect())
}

/// `(g|h) = (d1(1,g) + d1(1,h) − d1(g,h)) / 2`.
pub fn gromov_product(b: &Ball, g: &Element, h: &Element) -> Result<f64, GeoError> {
    let oob = GeoError::OutOfBall { radius: b.radius };
    let dg = b.d1(g).ok_or(oob.clone())?;
    let dh = b.d1(h).ok_or(oob.clone())?;
    let dgh = b.dist(g, h).ok_or(oob)?;
    Ok((dg + dh) as f64 / 2.0 - dgh as f64 / 2.0)
}

/// Shortest `(preperiod, period)` explaining `w` with at least `reps`
/// full periods visible.
pub(crate) fn detect_period(w: &[Letter], reps: usize) -> Option<(usize, usize)> {
    let n = w.len();
    let mut best: Option<(usize, usize)> = None;
    for p in 1..=n / reps.max(1) {
        // smallest s with w[i] = w[i + p] for all i ≥ s
        let mut s = n - p;
        while s > 0 && w[s - 1] == w[s - 1 + p] {
            s -= 1;
        }
        if n - s >= reps * p && best.is_none_or(|(bs, bp)| s + p < bs + bp) {
            best = Some((s, p));
        }
    }
    best
}

/// `nf(u α)` as the limit of `nf(u α^[n])`, keeping only the prefixes of
/// length `n − K0·N0 − N0·|u|`, which no longer change.
pub fn left_translate(
    rs: &RewritingSystem,
    consts: &GeoConstants,
    u: &[Letter],
    alpha: &OmegaWord,
) -> Result<OmegaWord, GeoError> {
    let lag = consts.k0 * consts.n0 + consts.n0 * u.len();
    let per = alpha.period().len();
    let mut last: Option<OmegaWord> = None;
    let start = alpha.preperiod().len() + lag + 4 * per + 8;
    let limit = start + 64 * per + 256;
    let mut n = start;
    while n <= limit {
        let w = rewrite_nf(rs, &[u, &alpha.prefix(n)[..]].concat());
        let keep = n.saturating_sub(lag).min(w.len());
        let stable = &w[..keep];
        if let Some((s, p)) = detect_period(stable, 3) {
            let om = omega_canonicalize(Word(stable[..s].to_vec()), Word(stable[s..s + p].to_vec()))
                .expect("nonempty period");
            if last.as_ref() == Some(&om) {
                return Ok(om);
            }
            last = Some(om);
        }
        n += 2 * per.max(1) + 3;
    }
    Err(GeoError::NotStabilized(limit))
}

/// Longest common prefix length of the normal forms of `g` and `h`.
pub fn nf_meet(b: &Ball, g: &Element, h: &Element) -> Option<usize> {
    Some(lcp_len(&normal_form(b, g).ok()?, &normal_form(b, h).ok()?))
}

/// Ball, certified constants, `R′` and the acceptor, bundled so normal
/// forms of elements far outside the ball can still be computed.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub ball: Ball,
    pub consts: GeoConstants,
    pub rs: RewritingSystem,
    pub acceptor: Dfa,
    /// External normal form of each free letter `(x, 0)`.
    free_words: Vec<Word>,
    /// External normal form of each coset representative `(1, i)`.
    coset_words: Vec<Word>,
}

impl Geometry {
    pub fn new(ball: Ball) -> Result<Geometry, GeoError> {
        let consts = estimate_constants(&ball);
        if consts.rule_length_cap > ball.radius {
            return Err(GeoError::CapTooLarge {
                cap: consts.rule_length_cap,
                radius: ball.radius,
            });
        }
        let rs = build_rewriting(&ball, consts.rule_length_cap);
        let acceptor = build_acceptor(&ball)?;
        let p = &ball.presentation;
        let free_words = (0..p.letters() as Letter)
            .map(|x| normal_form(&ball, &Element::free(&[x])))
            .collect::<Result<Vec<_>, _>>()?;
        let coset_words = (0..p.coset_count)
            .map(|i| normal_form(&ball, &Element::coset(i)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Geometry {
            ball,
            consts,
            rs,
            acceptor,
            free_words,
            coset_words,
        })
    }

    pub fn alphabet(&self) -> &InvAlphabet {
        self.ball.alphabet()
    }

    pub fn presentation(&self) -> &VfPresentation {
        &self.ball.presentation
    }

    /// Normal form of any element: read off the ball when possible,
    /// otherwise by rewriting a word for it with `R′`.
    pub fn nf(&self, g: &Element) -> Word {
        if let Some(id) = self.ball.id(g) {
            return self.ball.nf[id as usize].clone();
        }
        let mut w: Vec<Letter> = Vec::new();
        for &x in g.w.iter() {
            w.extend_from_slice(&self.free_words[x as usize]);
        }
        w.extend_from_slice(&self.coset_words[g.i]);
        rewrite_nf(&self.rs, &w)
    }

    /// Normal form of the element represented by an external word.
    pub fn nf_word(&self, w: &[Letter]) -> Word {
        rewrite_nf(&self.rs, w)
    }

    pub fn in_language(&self, w: &[Letter]) -> bool {
        self.acceptor.accepts(w)
    }

    /// Whether every prefix of `α` is a normal form.
    pub fn in_boundary(&self, alpha: &OmegaWord) -> bool {
        let acc = &self.acceptor;
        let Some(mut q) = acc.run(acc.initial(), alpha.preperiod()) else {
            return false;
        };
        let mut seen = HashSet::new();
        while seen.insert(q) {
            match acc.run(q, alpha.period()) {
                Some(r) => q = r,
                None => return false,
            }
        }
        true
    }
}
