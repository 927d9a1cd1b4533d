//! The continuous extension `Φ` of an endomorphism with finite kernel:
//! bounded reduction, the decomposition `u = σ·τ`, `uφ̄ = σ·ρ`, the
//! automata `A′_φ` / `A″_φ` of fixed-point prefixes, and the
//! attractor/repeller test for regular fixed points.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::automata::{AutomataError, Dfa, Lasso};
use crate::geodesic::{detect_period, Ball, GeoError, Geometry};
use crate::group::{apply_endo, compose, invert_elem, multiply, Element, Endomorphism, VfPresentation};
use crate::words::{inv, lcp_len, omega_canonicalize, Letter, OmegaWord, Word};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("`{0}` is not a normal form")]
    NotNormalForm(String),
    #[error("bounded reduction estimate still growing at radius {radius}: {history:?}")]
    NonStabilizing { radius: usize, history: Vec<usize> },
    #[error("no eventual period found in the image within {0} letters")]
    NoPeriodDetected(usize),
    #[error("exploration stopped at depth {depth} with {unresolved} unresolved states")]
    DepthExceeded { depth: usize, unresolved: usize },
    #[error("not an automorphism: {0}")]
    NotAutomorphism(String),
    #[error("could not classify {0}")]
    Unclassified(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KernelVerdict {
    /// Every kernel element found in the ball.
    FiniteWithin(Vec<Element>),
    /// Kernel elements of every length up to the radius.
    GrowingKernel(Vec<Element>),
}

impl KernelVerdict {
    pub fn is_finite(&self) -> bool {
        matches!(self, KernelVerdict::FiniteWithin(_))
    }
}

pub fn kernel_finite_check(b: &Ball, phi: &Endomorphism) -> KernelVerdict {
    let p = &b.presentation;
    let mut ker = Vec::new();
    let mut lengths = HashSet::new();
    for (g, w) in b.elems.iter().zip(&b.nf) {
        if apply_endo(p, phi, g) == Element::identity() {
            ker.push(g.clone());
            lengths.insert(w.len());
        }
    }
    let max_len = b.nf.last().map_or(0, |w| w.len());
    if max_len >= 1 && (1..=max_len).all(|n| lengths.contains(&n)) {
        KernelVerdict::GrowingKernel(ker)
    } else {
        KernelVerdict::FiniteWithin(ker)
    }
}

/// `nf(uφ)`, restricted to images inside the ball.
pub fn normal_phi(b: &Ball, phi: &Endomorphism, u: &[Letter]) -> Result<Word, DynError> {
    let g = apply_endo(&b.presentation, phi, &b.eval(u));
    b.id(&g)
        .map(|i| b.nf[i as usize].clone())
        .ok_or(DynError::Geo(GeoError::OutOfBall { radius: b.radius }))
}

/// Normal forms of the images of the external letters, used to extend
/// `uφ̄` one letter at a time.
#[derive(Clone, Debug)]
pub struct Images<'a> {
    pub geo: &'a Geometry,
    images: Vec<Word>,
}

impl<'a> Images<'a> {
    pub fn new(geo: &'a Geometry, phi: &Endomorphism) -> Self {
        let b = &geo.ball;
        let p = &b.presentation;
        let images = (0..b.letters() as Letter)
            .map(|x| geo.nf(&apply_endo(p, phi, b.gen(x))))
            .collect();
        Images { geo, images }
    }

    pub fn letter(&self, x: Letter) -> &Word {
        &self.images[x as usize]
    }

    /// `(ux)φ̄` from `uφ̄`.
    pub fn step(&self, uphi: &[Letter], x: Letter) -> Word {
        self.geo.nf_word(&[uphi, &self.images[x as usize]].concat())
    }

    /// `uφ̄` for any external word.
    pub fn apply(&self, u: &[Letter]) -> Word {
        let w: Vec<Letter> = u.iter().flat_map(|&x| self.images[x as usize].iter().copied()).collect();
        self.geo.nf_word(&w)
    }

    pub fn max_len(&self) -> usize {
        self.images.iter().map(|w| w.len()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtConstants {
    pub b_phi: usize,
    pub d_phi: usize,
    pub b_inv: Option<usize>,
    pub d_inv: Option<usize>,
    /// `B_φ(D_φ⁻¹ + 1) + B_φ⁻¹(D_φ + 1)`, when the inverse is known.
    pub y0: Option<usize>,
    /// `history[r]`: the estimate using normal forms of length at most `r`.
    pub history: Vec<usize>,
}

/// Max of `|uφ̄| − |uφ̄ ∧ (uv)φ̄|` over `uv` in the ball, by radius.
pub fn reduction_history(geo: &Geometry, phi: &Endomorphism) -> Vec<usize> {
    let b = &geo.ball;
    let ims = Images::new(geo, phi);
    let n = b.len();
    let mut img: Vec<Word> = Vec::with_capacity(n);
    let mut parent: Vec<u32> = Vec::with_capacity(n);
    let mut history = vec![0usize; b.radius + 1];
    for id in 0..n {
        let w = &b.nf[id];
        if w.is_empty() {
            img.push(Word::empty());
            parent.push(0);
            continue;
        }
        let x = w[w.len() - 1];
        let par = b.step(id as u32, inv(x)).expect("prefix of a normal form lies in the ball");
        img.push(ims.step(&img[par as usize], x));
        parent.push(par);
        let mut val = 0;
        let mut a = par as usize;
        loop {
            val = val.max(img[a].len() - lcp_len(&img[a], &img[id]));
            if a == 0 {
                break;
            }
            a = parent[a] as usize;
        }
        history[w.len()] = history[w.len()].max(val);
    }
    for r in 1..history.len() {
        history[r] = history[r].max(history[r - 1]);
    }
    history
}

fn stable_bound(geo: &Geometry, phi: &Endomorphism) -> Result<(usize, Vec<usize>), DynError> {
    let history = reduction_history(geo, phi);
    let r = history.len() - 1;
    if r >= 1 && history[r] > history[r - 1] {
        return Err(DynError::NonStabilizing { radius: r, history });
    }
    Ok((history[r], history))
}

pub fn estimate_bphi(geo: &Geometry, phi: &Endomorphism, inverse: Option<&Endomorphism>) -> Result<ExtConstants, DynError> {
    let (b_phi, history) = stable_bound(geo, phi)?;
    let d_phi = Images::new(geo, phi).max_len();
    let (mut b_inv, mut d_inv, mut y0) = (None, None, None);
    if let Some(psi) = inverse {
        let (bi, _) = stable_bound(geo, psi)?;
        let di = Images::new(geo, psi).max_len();
        b_inv = Some(bi);
        d_inv = Some(di);
        y0 = Some(b_phi * (di + 1) + bi * (d_phi + 1));
    }
    Ok(ExtConstants {
        b_phi,
        d_phi,
        b_inv,
        d_inv,
        y0,
        history,
    })
}

/// `u = σ τ`, `uφ̄ = σ ρ`, `σ = σ′ σ″`, and the acceptor state after `u`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SigmaData {
    pub sigma: Word,
    pub tau: Word,
    pub rho: Word,
    pub sigma_prime: Word,
    pub sigma_dblprime: Word,
    pub state: u32,
}

/// `uξ = (uσ″, uτ, uρ, q₀u)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Xi {
    pub sigma_dblprime: Word,
    pub tau: Word,
    pub rho: Word,
    pub state: u32,
}

impl SigmaData {
    pub fn xi(&self) -> Xi {
        Xi {
            sigma_dblprime: self.sigma_dblprime.clone(),
            tau: self.tau.clone(),
            rho: self.rho.clone(),
            state: self.state,
        }
    }
}

impl Xi {
    pub fn render(&self, geo: &Geometry) -> String {
        let a = geo.alphabet();
        format!(
            "({}, {}, {}, q{})",
            a.format_word(&self.sigma_dblprime),
            a.format_word(&self.tau),
            a.format_word(&self.rho),
            self.state
        )
    }
}

struct Decomposer<'a> {
    ims: Images<'a>,
    b_phi: usize,
}

impl<'a> Decomposer<'a> {
    fn new(geo: &'a Geometry, phi: &Endomorphism, b_phi: usize) -> Self {
        Decomposer {
            ims: Images::new(geo, phi),
            b_phi,
        }
    }

    fn acceptor(&self) -> &Dfa {
        &self.ims.geo.acceptor
    }

    /// `τ ≠ 1` together with `|ρ| > B_φ` rules out every fixed point
    /// through `u`.
    fn pruned(&self, u: &[Letter], uphi: &[Letter]) -> bool {
        let s = lcp_len(u, uphi);
        s < u.len() && uphi.len() - s > self.b_phi
    }

    /// Length of `uσ′`, the meet of `(uv)σ` over extensions `uv ∈ L`.
    /// It never drops more than `B_φ` below `|uσ|`, so the search stops at
    /// that floor, or once the meet has been constant for `B_φ + 1`
    /// extension levels.
    fn sigma_prime_len(&self, u: &[Letter], uphi: &[Letter], s: usize, q: u32) -> usize {
        let floor = s.saturating_sub(self.b_phi);
        let mut meet = s;
        let mut layer: Vec<(Vec<Letter>, Word, u32)> = vec![(u.to_vec(), Word(uphi.to_vec()), q)];
        let mut quiet = 0;
        let acc = self.acceptor();
        while meet > floor && quiet <= self.b_phi && !layer.is_empty() {
            let before = meet;
            let mut next = Vec::new();
            for (w, wphi, p) in &layer {
                for x in 0..acc.alphabet_size() as Letter {
                    let Some(r) = acc.next(*p, x) else { continue };
                    let mut w2 = w.clone();
                    w2.push(x);
                    let img = self.ims.step(wphi, x);
                    meet = meet.min(lcp_len(&w2, &img));
                    next.push((w2, img, r));
                }
            }
            layer = next;
            quiet = if meet == before { quiet + 1 } else { 0 };
        }
        meet
    }

    fn data(&self, u: &[Letter], uphi: &[Letter], q: u32) -> SigmaData {
        let s = lcp_len(u, uphi);
        let sp = self.sigma_prime_len(u, uphi, s, q);
        SigmaData {
            sigma: Word::from_slice(&u[..s]),
            tau: Word::from_slice(&u[s..]),
            rho: Word::from_slice(&uphi[s..]),
            sigma_prime: Word::from_slice(&u[..sp]),
            sigma_dblprime: Word::from_slice(&u[sp..s]),
            state: q,
        }
    }
}

pub fn sigma_decomposition(
    geo: &Geometry,
    phi: &Endomorphism,
    consts: &ExtConstants,
    u: &[Letter],
) -> Result<SigmaData, DynError> {
    let acc = &geo.acceptor;
    let q = acc
        .run(acc.initial(), u)
        .ok_or_else(|| DynError::NotNormalForm(geo.alphabet().format_word(u)))?;
    let d = Decomposer::new(geo, phi, consts.b_phi);
    let uphi = d.ims.apply(u);
    Ok(d.data(u, &uphi, q))
}

/// `|α ∧ w|` for a finite word `w`.
fn meet_omega(alpha: &OmegaWord, w: &[Letter]) -> usize {
    w.iter().enumerate().take_while(|&(i, &x)| alpha.at(i) == x).count()
}

/// `α` with its first `n` letters removed.
pub fn omega_drop(alpha: &OmegaWord, n: usize) -> OmegaWord {
    let pre = alpha.preperiod();
    let per = alpha.period();
    if n <= pre.len() {
        return OmegaWord::new(Word::from_slice(&pre[n..]), per.clone()).expect("nonempty period");
    }
    let r = (n - pre.len()) % per.len();
    let rot = [&per[r..], &per[..r]].concat();
    OmegaWord::new(Word::empty(), Word(rot)).expect("nonempty period")
}

/// `αΦ = lim α^[n]φ̄`. Only the prefix of length `|α^[n]φ̄| − B_φ` is kept
/// at each step, which is already a prefix of the limit.
pub fn phi_omega(geo: &Geometry, phi: &Endomorphism, b_phi: usize, alpha: &OmegaWord) -> Result<OmegaWord, DynError> {
    let ims = Images::new(geo, phi);
    phi_omega_with(&ims, b_phi, alpha)
}

fn phi_omega_with(ims: &Images, b_phi: usize, alpha: &OmegaWord) -> Result<OmegaWord, DynError> {
    let per = alpha.period().len();
    let start = alpha.preperiod().len() + b_phi + 4 * per + 8;
    let limit = start + 64 * per + 256;
    let mut img = Word::empty();
    let mut n = 0;
    let mut last: Option<OmegaWord> = None;
    let mut target = start;
    while target <= limit {
        while n < target {
            img = ims.step(&img, alpha.at(n));
            n += 1;
        }
        let keep = img.len().saturating_sub(b_phi);
        if let Some((s, p)) = detect_period(&img[..keep], 3) {
            let om = omega_canonicalize(Word::from_slice(&img[..s]), Word::from_slice(&img[s..s + p]))
                .expect("nonempty period");
            if last.as_ref() == Some(&om) {
                return Ok(om);
            }
            last = Some(om);
        }
        target += 2 * per + 3;
    }
    Err(DynError::NoPeriodDetected(limit))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrontierOutcome {
    /// The unique continuation is the verified fixed point `α`, which has
    /// the state's representative as a prefix.
    Ray(OmegaWord),
    DeadEnd,
    Unresolved(String),
}

#[derive(Clone, Debug)]
pub struct FixState {
    /// Shortlex-least word reaching the state.
    pub rep: Word,
    pub data: SigmaData,
}

/// The explored part of `A′_φ` and the automaton `A″_φ` derived from it.
#[derive(Clone, Debug)]
pub struct FixAutomata {
    pub depth: usize,
    /// Indexed by `A′_φ` state.
    pub states: Vec<FixState>,
    /// Terminal states are `T′`.
    pub aprime: Dfa,
    /// Unexpanded states at the exploration depth.
    pub frontier: Vec<(u32, FrontierOutcome)>,
    /// States with at least two outgoing edges.
    pub s_states: Vec<u32>,
    /// `A′_φ` states kept in `A″_φ`, in `A″_φ` numbering.
    pub dbl_states: Vec<u32>,
    /// Terminal states are `T″`.
    pub adblprime: Dfa,
    /// Edges cut by the `τ ≠ 1, |ρ| > B_φ` test.
    pub pruned: usize,
    /// States discarded because every continuation was cut.
    pub dead_ends: usize,
    /// Pairs `u, v` with `uξ = vξ` for which `nf(uv⁻¹)` was checked fixed.
    pub merges_checked: usize,
    pub merge_violations: Vec<(Word, Word)>,
}

impl FixAutomata {
    pub fn is_partial(&self) -> bool {
        self.frontier.iter().any(|(_, o)| matches!(o, FrontierOutcome::Unresolved(_))) || !self.merge_violations.is_empty()
    }

    pub fn unresolved(&self) -> usize {
        self.frontier
            .iter()
            .filter(|(_, o)| matches!(o, FrontierOutcome::Unresolved(_)))
            .count()
    }

    pub fn certified(self) -> Result<Self, DynError> {
        if self.is_partial() {
            Err(DynError::DepthExceeded {
                depth: self.depth,
                unresolved: self.unresolved(),
            })
        } else {
            Ok(self)
        }
    }

    pub fn ray_at(&self, q: u32) -> Option<&OmegaWord> {
        self.frontier.iter().find_map(|(p, o)| match o {
            FrontierOutcome::Ray(a) if *p == q => Some(a),
            _ => None,
        })
    }

    pub fn state_labels(&self, geo: &Geometry) -> Vec<String> {
        self.states
            .iter()
            .map(|s| format!("{}ξ = {}", geo.alphabet().format_word(&s.rep), s.data.xi().render(geo)))
            .collect()
    }

    pub fn aprime_dot(&self, geo: &Geometry) -> String {
        self.aprime.to_dot(geo.alphabet(), "A'_phi", Some(&self.state_labels(geo)))
    }

    pub fn adblprime_dot(&self, geo: &Geometry) -> String {
        let labels = self.state_labels(geo);
        let l: Vec<String> = self.dbl_states.iter().map(|&q| labels[q as usize].clone()).collect();
        self.adblprime.to_dot(geo.alphabet(), "A''_phi", Some(&l))
    }
}

/// Checks `nf(uv⁻¹)` is fixed, which must hold whenever `uξ = vξ`.
fn merge_is_fixed(geo: &Geometry, phi: &Endomorphism, u: &[Letter], v: &[Letter]) -> bool {
    let p = geo.presentation();
    let g = multiply(p, &geo.ball.eval(u), &invert_elem(p, &geo.ball.eval(v)));
    apply_endo(p, phi, &g) == g
}

/// Follows the unique surviving continuation from `u` for `steps` letters,
/// then reads off an eventually periodic candidate and verifies it is a
/// boundary point fixed by `Φ`.
fn follow_ray(d: &Decomposer, u: &[Letter], uphi: &[Letter], q: u32, steps: usize) -> FrontierOutcome {
    let acc = d.acceptor();
    let mut w = u.to_vec();
    let mut img = Word::from_slice(uphi);
    let mut q = q;
    for _ in 0..steps {
        let mut alive = Vec::new();
        for x in 0..acc.alphabet_size() as Letter {
            let Some(r) = acc.next(q, x) else { continue };
            let mut w2 = w.clone();
            w2.push(x);
            let img2 = d.ims.step(&img, x);
            if d.pruned(&w2, &img2) {
                continue;
            }
            if img2 == Word(w2.clone()) {
                return FrontierOutcome::Unresolved(format!("fixed element of length {} beyond the depth", w2.len()));
            }
            alive.push((w2, img2, r));
        }
        match alive.len() {
            0 => return FrontierOutcome::DeadEnd,
            1 => (w, img, q) = alive.pop().unwrap(),
            _ => return FrontierOutcome::Unresolved("continuation branches beyond the depth".into()),
        }
    }
    let Some((s, p)) = detect_period(&w, 3) else {
        return FrontierOutcome::Unresolved("no eventual period along the continuation".into());
    };
    let alpha = omega_canonicalize(Word::from_slice(&w[..s]), Word::from_slice(&w[s..s + p])).expect("nonempty period");
    if !d.ims.geo.in_boundary(&alpha) {
        return FrontierOutcome::Unresolved("periodic candidate leaves the language".into());
    }
    match phi_omega_with(&d.ims, d.b_phi, &alpha) {
        Ok(img) if img == alpha => FrontierOutcome::Ray(alpha),
        _ => FrontierOutcome::Unresolved("periodic candidate is not fixed".into()),
    }
}

/// Breadth-first exploration of the states `uξ` up to `depth`, merging
/// equal `ξ`, cutting edges that cannot lead to a fixed point and
/// discarding dead ends.
/// Frontier states are resolved by following their continuation.
pub fn build_fix_automata(geo: &Geometry, phi: &Endomorphism, consts: &ExtConstants, depth: usize) -> FixAutomata {
    let d = Decomposer::new(geo, phi, consts.b_phi);
    let acc = &geo.acceptor;
    let k = acc.alphabet_size() as Letter;
    let root = d.data(&[], &[], acc.initial());
    let mut index: HashMap<Xi, u32> = HashMap::from([(root.xi(), 0)]);
    let mut states = vec![FixState { rep: Word::empty(), data: root }];
    let mut imgs = vec![Word::empty()];
    let mut level = vec![0usize];
    let mut edges: Vec<Vec<(Letter, u32)>> = vec![Vec::new()];
    let mut pruned = 0;
    let mut merges_checked = 0;
    let mut merge_violations = Vec::new();
    let mut frontier_ids = Vec::new();
    let mut queue = VecDeque::from([0u32]);
    while let Some(id) = queue.pop_front() {
        let id = id as usize;
        if level[id] == depth {
            frontier_ids.push(id as u32);
            continue;
        }
        let q = states[id].data.state;
        for x in 0..k {
            if acc.next(q, x).is_none() {
                continue;
            }
            let u = states[id].rep.concat(&[x]);
            let img = d.ims.step(&imgs[id], x);
            if d.pruned(&u, &img) {
                pruned += 1;
                continue;
            }
            let data = d.data(&u, &img, acc.next(q, x).unwrap());
            let t = match index.get(&data.xi()) {
                Some(&t) => {
                    merges_checked += 1;
                    if !merge_is_fixed(geo, phi, &u, &states[t as usize].rep) {
                        merge_violations.push((u, states[t as usize].rep.clone()));
                    }
                    t
                }
                None => {
                    let t = states.len() as u32;
                    index.insert(data.xi(), t);
                    states.push(FixState { rep: u, data });
                    imgs.push(img);
                    level.push(level[id] + 1);
                    edges.push(Vec::new());
                    queue.push_back(t);
                    t
                }
            };
            edges[id].push((x, t));
        }
    }
    let n = states.len();
    let terminal: Vec<bool> = states
        .iter()
        .map(|s| s.data.tau.is_empty() && s.data.rho.is_empty())
        .collect();
    let mut outcome: HashMap<u32, FrontierOutcome> = HashMap::new();
    for &f in &frontier_ids {
        let s = &states[f as usize];
        let o = if terminal[f as usize] {
            FrontierOutcome::Unresolved("fixed element at the depth".into())
        } else {
            follow_ray(&d, &s.rep, &imgs[f as usize], s.data.state, depth.max(12))
        };
        outcome.insert(f, o);
    }
    let mut removed = vec![false; n];
    for (&f, o) in &outcome {
        removed[f as usize] = *o == FrontierOutcome::DeadEnd;
    }
    loop {
        let mut changed = false;
        for id in 0..n {
            if removed[id] || terminal[id] || outcome.contains_key(&(id as u32)) {
                continue;
            }
            if edges[id].iter().all(|&(_, t)| removed[t as usize]) {
                removed[id] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let dead_ends = removed.iter().filter(|&&r| r).count();
    // renumber the kept states breadth-first from the root
    let mut map = vec![u32::MAX; n];
    let mut order = vec![0usize];
    map[0] = 0;
    let mut i = 0;
    while i < order.len() {
        let id = order[i];
        for &(_, t) in &edges[id] {
            if !removed[t as usize] && map[t as usize] == u32::MAX {
                map[t as usize] = order.len() as u32;
                order.push(t as usize);
            }
        }
        i += 1;
    }
    let mut aprime = Dfa::new(order.len(), k as usize);
    for (new, &old) in order.iter().enumerate() {
        aprime.set_terminal(new as u32, terminal[old]);
        for &(x, t) in &edges[old] {
            if !removed[t as usize] {
                aprime.set_transition(new as u32, x, map[t as usize]);
            }
        }
    }
    let mut frontier: Vec<(u32, FrontierOutcome)> = outcome
        .into_iter()
        .filter(|(f, _)| map[*f as usize] != u32::MAX)
        .map(|(f, o)| (map[f as usize], o))
        .collect();
    frontier.sort_by_key(|(f, _)| *f);
    let states: Vec<FixState> = order.iter().map(|&old| states[old].clone()).collect();
    let m = states.len();
    let out_deg: Vec<usize> = (0..m as u32).map(|q| (0..k).filter(|&x| aprime.next(q, x).is_some()).count()).collect();
    let s_states: Vec<u32> = (0..m as u32).filter(|&q| out_deg[q as usize] >= 2).collect();
    // Q″: states with a path into S ∪ T′
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (p, _, q) in aprime.edges() {
        rev[q as usize].push(p);
    }
    let mut in_q2 = vec![false; m];
    let mut stack: Vec<u32> = (0..m as u32)
        .filter(|&q| out_deg[q as usize] >= 2 || aprime.is_terminal(q))
        .collect();
    for &q in &stack {
        in_q2[q as usize] = true;
    }
    while let Some(q) = stack.pop() {
        for &p in &rev[q as usize] {
            if !in_q2[p as usize] {
                in_q2[p as usize] = true;
                stack.push(p);
            }
        }
    }
    let dbl_states: Vec<u32> = (0..m as u32).filter(|&q| in_q2[q as usize]).collect();
    let pos: HashMap<u32, u32> = dbl_states.iter().enumerate().map(|(i, &q)| (q, i as u32)).collect();
    let mut adblprime = Dfa::new(dbl_states.len(), k as usize);
    for (i, &q) in dbl_states.iter().enumerate() {
        adblprime.set_terminal(i as u32, aprime.is_terminal(q));
        for x in 0..k {
            if let Some(t) = aprime.next(q, x).and_then(|t| pos.get(&t)) {
                adblprime.set_transition(i as u32, x, *t);
            }
        }
    }
    FixAutomata {
        depth,
        states,
        aprime,
        frontier,
        s_states,
        dbl_states,
        adblprime,
        pruned,
        dead_ends,
        merges_checked,
        merge_violations,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Classification {
    Attractor,
    Repeller,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Attractor => "attractor",
            Classification::Repeller => "repeller",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegularRep {
    /// Label of the path to the last state of `S ∪ {q′₀}`.
    pub u: Word,
    /// Label of the escape path from there.
    pub alpha: OmegaWord,
    /// `u α`.
    pub point: OmegaWord,
    /// First `n₀` with `α^[n]τ = 1` for all `n ≥ n₀` over the checked window.
    pub tau_vanishes_from: Option<usize>,
    pub classification: Option<Classification>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Singular {
    Finite(Vec<OmegaWord>),
    /// Uncountably many; a few witnesses.
    Infinite(Vec<OmegaWord>),
}

#[derive(Clone, Debug)]
pub struct BoundaryFixReport {
    pub automata: FixAutomata,
    /// Words of `L(A″_φ)` up to `enum_bound`, in shortlex order.
    pub finite_fixed: Vec<Word>,
    /// Whether `L(A″_φ)` is a finite language.
    pub finite_fixed_is_finite: bool,
    pub enum_bound: usize,
    pub singular: Singular,
    pub regular: Vec<RegularRep>,
    pub anomalies: Vec<String>,
    pub partial: bool,
}

impl BoundaryFixReport {
    pub fn regular_points(&self) -> Vec<OmegaWord> {
        self.regular.iter().map(|r| r.point.clone()).collect()
    }
}

/// Inventory of `Fix Φ`: finite fixed points from `A″_φ`, singular points
/// as its infinite paths, regular points as the escape paths leaving
/// `S ∪ {q′₀}` for good. With an inverse, regular points are classified.
pub fn analyze_fixed_points(
    geo: &Geometry,
    phi: &Endomorphism,
    inverse: Option<&Endomorphism>,
    consts: &ExtConstants,
    depth: usize,
    enum_bound: usize,
) -> Result<BoundaryFixReport, DynError> {
    let fa = build_fix_automata(geo, phi, consts, depth);
    let mut anomalies = Vec::new();
    let a = &fa.aprime;
    let k = a.alphabet_size() as Letter;
    let mut starts: BTreeSet<u32> = fa.s_states.iter().copied().collect();
    starts.insert(a.initial());
    let mut points = BTreeSet::new();
    let mut regular = Vec::new();
    let ims = Images::new(geo, phi);
    for &s in &starts {
        for x in 0..k {
            let Some(t) = a.next(s, x) else { continue };
            if starts.contains(&t) {
                continue;
            }
            let mut path = vec![x];
            let mut cur = t;
            let mut seen = HashSet::from([t]);
            loop {
                if let Some(ray) = fa.ray_at(cur) {
                    let tail = omega_drop(ray, fa.states[cur as usize].rep.len());
                    let u = fa.states[s as usize].rep.clone();
                    let alpha = tail.prepend(&path);
                    let point = alpha.prepend(&u);
                    if points.insert(point.clone()) {
                        regular.push(RegularRep {
                            u,
                            alpha,
                            point,
                            tau_vanishes_from: None,
                            classification: None,
                        });
                    }
                    break;
                }
                let Some((y, nxt)) = (0..k).find_map(|y| a.next(cur, y).map(|r| (y, r))) else { break };
                if starts.contains(&nxt) {
                    break;
                }
                if !seen.insert(nxt) {
                    // a cycle through A″ is a singular lasso, reported below
                    if fa.dbl_states.binary_search(&nxt).is_ok() {
                        break;
                    }
                    anomalies.push(format!(
                        "cycle outside A'' after {}",
                        geo.alphabet().format_word(&fa.states[cur as usize].rep)
                    ));
                    break;
                }
                path.push(y);
                cur = nxt;
            }
        }
    }
    for r in &mut regular {
        let name = geo.alphabet().format_omega(&r.point);
        if !geo.in_boundary(&r.point) {
            anomalies.push(format!("{name} is not a boundary point"));
        }
        match phi_omega_with(&ims, consts.b_phi, &r.point) {
            Ok(img) if img == r.point => {}
            Ok(img) => anomalies.push(format!("{name} maps to {}", geo.alphabet().format_omega(&img))),
            Err(e) => anomalies.push(format!("{name}: {e}")),
        }
        r.tau_vanishes_from = tau_vanishes_from(geo, phi, &r.point);
        if let Some(psi) = inverse {
            r.classification = Some(classify_regular(geo, phi, Some(psi), consts, &r.point)?);
        }
    }
    // infinite paths of A″_φ: every state counts, not only T″
    let mut omega = fa.adblprime.clone();
    for q in 0..omega.num_states() as u32 {
        omega.set_terminal(q, true);
    }
    let singular = match omega.lasso_set() {
        Ok(ls) => Singular::Finite(ls.iter().map(Lasso::to_omega).collect()),
        Err(AutomataError::InfiniteOmegaLanguage { witnesses }) => {
            Singular::Infinite(witnesses.iter().map(Lasso::to_omega).collect())
        }
        Err(e) => return Err(DynError::Geo(GeoError::Automata(e))),
    };
    if let Singular::Finite(s) = &singular {
        for p in s {
            if points.contains(p) {
                anomalies.push(format!("{} is both singular and regular", geo.alphabet().format_omega(p)));
            }
        }
    }
    let trimmed = fa.adblprime.trim();
    let finite_fixed_is_finite = trimmed.is_empty() || trimmed.lasso_set().is_ok_and(|l| l.is_empty());
    let mut finite_fixed: Vec<Word> = fa.adblprime.enumerate_language(enum_bound).into_iter().collect();
    finite_fixed.sort_by(|u, v| geo.alphabet().shortlex_cmp(u, v));
    let partial = fa.is_partial() || !anomalies.is_empty();
    Ok(BoundaryFixReport {
        automata: fa,
        finite_fixed,
        finite_fixed_is_finite,
        enum_bound,
        singular,
        regular,
        anomalies,
        partial,
    })
}

/// `α^[n]τ = 1` for each `n ≤ N`, where `N` covers the preperiod and
/// several periods.
fn tau_profile(geo: &Geometry, phi: &Endomorphism, alpha: &OmegaWord) -> Vec<bool> {
    let ims = Images::new(geo, phi);
    let per = alpha.period().len();
    let top = alpha.preperiod().len() + 8 * per + 24;
    let mut out = Vec::with_capacity(top + 1);
    let mut img = Word::empty();
    let prefix = alpha.prefix(top);
    out.push(true);
    for n in 1..=top {
        img = ims.step(&img, prefix[n - 1]);
        out.push(lcp_len(&prefix[..n], &img) == n);
    }
    out
}

/// The least `n₀` after which `α^[n]τ = 1` throughout the checked window,
/// if the last two periods of the window all have `τ = 1`. Along a fixed
/// ray this gives growth `|α ∧ βΦⁿ| ≥ n + |α ∧ β|` once `|α ∧ β| ≥ n₀`.
pub fn tau_vanishes_from(geo: &Geometry, phi: &Endomorphism, alpha: &OmegaWord) -> Option<usize> {
    let prof = tau_profile(geo, phi, alpha);
    let tail = 2 * alpha.period().len() + 1;
    if !prof[prof.len() - tail..].iter().all(|&b| b) {
        return None;
    }
    let mut n0 = prof.len();
    while n0 > 0 && prof[n0 - 1] {
        n0 -= 1;
    }
    Some(n0)
}

/// Checks `ψ` inverts `φ` on every generator.
pub fn check_inverse(p: &VfPresentation, phi: &Endomorphism, psi: &Endomorphism) -> Result<(), DynError> {
    let id = Endomorphism::identity(p);
    for (name, c) in [("φψ", compose(p, phi, psi)), ("ψφ", compose(p, psi, phi))] {
        if c.free_images != id.free_images || c.coset_images != id.coset_images {
            return Err(DynError::NotAutomorphism(format!("{name} is not the identity")));
        }
    }
    Ok(())
}

/// Attractor if `α^[n]τ = 1` from some `n₀` on; repeller if `τ ≠ 1`
/// eventually and `α` passes the attractor test for `φ⁻¹`.
pub fn classify_regular(
    geo: &Geometry,
    phi: &Endomorphism,
    phi_inv: Option<&Endomorphism>,
    _consts: &ExtConstants,
    ray: &OmegaWord,
) -> Result<Classification, DynError> {
    let psi = phi_inv.ok_or_else(|| DynError::NotAutomorphism("no inverse supplied".into()))?;
    check_inverse(geo.presentation(), phi, psi)?;
    let name = geo.alphabet().format_omega(ray);
    if tau_vanishes_from(geo, phi, ray).is_some() {
        return Ok(Classification::Attractor);
    }
    let prof = tau_profile(geo, phi, ray);
    let tail = 2 * ray.period().len() + 1;
    if prof[prof.len() - tail..].iter().any(|&b| b) {
        return Err(DynError::Unclassified(format!("{name}: τ has not settled")));
    }
    if tau_vanishes_from(geo, psi, ray).is_some() {
        Ok(Classification::Repeller)
    } else {
        Err(DynError::Unclassified(format!("{name}: τ ≠ 1 for both φ and φ⁻¹")))
    }
}

#[derive(Clone, Debug)]
pub struct StabilitySample {
    pub beta: Word,
    /// `|α ∧ β|`.
    pub meet: usize,
    /// `|α ∧ βΦⁿ|` for `n = 0..=n_max`.
    pub meets: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub samples: Vec<StabilitySample>,
    /// `(sample, n)` with `|α ∧ βΦⁿ| < n + |α ∧ β|`.
    pub violations: Vec<(usize, usize)>,
    /// Least `(|α ∧ βΦⁿ| − |α ∧ β|) / n` observed.
    pub min_slope: f64,
}

/// Samples finite `β ∈ L` leaving `α` after `k ≥ threshold` letters and
/// iterates `Φ` on them.
pub fn empirical_stability(
    geo: &Geometry,
    phi: &Endomorphism,
    alpha: &OmegaWord,
    trials: usize,
    n_max: usize,
    threshold: usize,
    seed: u64,
) -> StabilityReport {
    let ims = Images::new(geo, phi);
    let acc = &geo.acceptor;
    let k = acc.alphabet_size() as Letter;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kmax = threshold.max(1) + alpha.preperiod().len() + 3 * alpha.period().len() + 6;
    let mut samples = Vec::new();
    let mut attempts = 0;
    while samples.len() < trials && attempts < 100 * trials.max(1) {
        attempts += 1;
        let kk = rng.gen_range(threshold.max(1)..=kmax);
        let mut beta = alpha.prefix(kk).0;
        let q = acc.run(acc.initial(), &beta).expect("α is a boundary point");
        let off: Vec<(Letter, u32)> = (0..k)
            .filter(|&x| x != alpha.at(kk))
            .filter_map(|x| acc.next(q, x).map(|r| (x, r)))
            .collect();
        if off.is_empty() {
            continue;
        }
        let (x, mut q) = off[rng.gen_range(0..off.len())];
        beta.push(x);
        for _ in 0..rng.gen_range(0..4) {
            let next: Vec<(Letter, u32)> = (0..k).filter_map(|y| acc.next(q, y).map(|r| (y, r))).collect();
            if next.is_empty() {
                break;
            }
            let (y, r) = next[rng.gen_range(0..next.len())];
            beta.push(y);
            q = r;
        }
        let mut w = Word(beta.clone());
        let mut meets = vec![meet_omega(alpha, &w)];
        for _ in 0..n_max {
            w = ims.apply(&w);
            meets.push(meet_omega(alpha, &w));
        }
        samples.push(StabilitySample {
            beta: Word(beta),
            meet: meets[0],
            meets,
        });
    }
    let mut violations = Vec::new();
    let mut min_slope = f64::INFINITY;
    for (i, s) in samples.iter().enumerate() {
        for n in 1..=n_max {
            if s.meets[n] < n + s.meet {
                violations.push((i, n));
            }
            min_slope = min_slope.min((s.meets[n] as f64 - s.meet as f64) / n as f64);
        }
    }
    StabilityReport {
        samples,
        violations,
        min_slope,
    }
}
