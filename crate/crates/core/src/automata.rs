//! Deterministic automata and transducers over a doubled alphabet.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::hash::Hash;

use thiserror::Error;

use crate::words::{free_reduce, inv, invert, InvAlphabet, Letter, OmegaWord, ReducedWord, Word};

pub const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutomataError {
    #[error("omega-language is infinite ({} witness lassos)", witnesses.len())]
    InfiniteOmegaLanguage { witnesses: Vec<Lasso> },
    #[error("transducer does not have the inverse-edge property")]
    NotInverse,
}

/// A deterministic automaton with a partial transition function stored
/// densely, `NONE` marking absent edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dfa {
    k: usize,
    trans: Vec<u32>,
    terminal: Vec<bool>,
    initial: u32,
}

impl Dfa {
    /// `n` states, no edges, no terminals, initial state 0.
    pub fn new(n: usize, alphabet_size: usize) -> Self {
        Dfa {
            k: alphabet_size,
            trans: vec![NONE; n * alphabet_size],
            terminal: vec![false; n],
            initial: 0,
        }
    }

    /// The automaton with one non-terminal state and empty language.
    pub fn empty(alphabet_size: usize) -> Self {
        Dfa::new(1, alphabet_size)
    }

    pub fn add_state(&mut self, terminal: bool) -> u32 {
        self.trans.extend(std::iter::repeat_n(NONE, self.k));
        self.terminal.push(terminal);
        (self.terminal.len() - 1) as u32
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    pub fn num_states(&self) -> usize {
        self.terminal.len()
    }

    pub fn initial(&self) -> u32 {
        self.initial
    }

    pub fn set_initial(&mut self, q: u32) {
        self.initial = q;
    }

    pub fn is_terminal(&self, q: u32) -> bool {
        self.terminal[q as usize]
    }

    pub fn set_terminal(&mut self, q: u32, t: bool) {
        self.terminal[q as usize] = t;
    }

    pub fn set_transition(&mut self, p: u32, x: Letter, q: u32) {
        self.trans[p as usize * self.k + x as usize] = q;
    }

    #[inline]
    pub fn next(&self, p: u32, x: Letter) -> Option<u32> {
        match self.trans[p as usize * self.k + x as usize] {
            NONE => None,
            q => Some(q),
        }
    }

    /// Edges `(p, x, q)` in state-then-letter order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, Letter, u32)> + '_ {
        (0..self.num_states() as u32).flat_map(move |p| {
            (0..self.k as Letter).filter_map(move |x| self.next(p, x).map(|q| (p, x, q)))
        })
    }

    pub fn run(&self, from: u32, w: &[Letter]) -> Option<u32> {
        w.iter().try_fold(from, |p, &x| self.next(p, x))
    }

    pub fn accepts(&self, w: &[Letter]) -> bool {
        self.run(self.initial, w).is_some_and(|q| self.is_terminal(q))
    }

    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut stack = vec![self.initial];
        seen[self.initial as usize] = true;
        while let Some(p) = stack.pop() {
            for x in 0..self.k as Letter {
                if let Some(q) = self.next(p, x) {
                    if !seen[q as usize] {
                        seen[q as usize] = true;
                        stack.push(q);
                    }
                }
            }
        }
        seen
    }

    fn coreachable(&self) -> Vec<bool> {
        let n = self.num_states();
        let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (p, _, q) in self.edges() {
            rev[q as usize].push(p);
        }
        let mut seen = self.terminal.clone();
        let mut stack: Vec<u32> = (0..n as u32).filter(|&q| seen[q as usize]).collect();
        while let Some(q) = stack.pop() {
            for &p in &rev[q as usize] {
                if !seen[p as usize] {
                    seen[p as usize] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Restriction to the states in `keep` (must contain the initial state).
    fn restrict(&self, keep: &[bool]) -> (Dfa, Vec<u32>) {
        let mut map = vec![NONE; self.num_states()];
        let mut out = Dfa::new(0, self.k);
        for q in 0..self.num_states() {
            if keep[q] {
                map[q] = out.add_state(self.terminal[q]);
            }
        }
        for (p, x, q) in self.edges() {
            if keep[p as usize] && keep[q as usize] {
                out.set_transition(map[p as usize], x, map[q as usize]);
            }
        }
        out.initial = map[self.initial as usize];
        (out, map)
    }

    /// Trim automaton together with the old-to-new state map (`NONE` for
    /// removed states). An empty language yields a single dead state.
    pub fn trim_with_map(&self) -> (Dfa, Vec<u32>) {
        let r = self.reachable();
        let c = self.coreachable();
        if !c[self.initial as usize] {
            let mut map = vec![NONE; self.num_states()];
            map[self.initial as usize] = 0;
            return (Dfa::empty(self.k), map);
        }
        let keep: Vec<bool> = r.iter().zip(&c).map(|(a, b)| *a && *b).collect();
        self.restrict(&keep)
    }

    pub fn trim(&self) -> Dfa {
        self.trim_with_map().0
    }

    pub fn is_empty(&self) -> bool {
        !self.coreachable()[self.initial as usize]
    }

    /// Renumbers reachable states in breadth-first order (letters in
    /// increasing index), so that isomorphic automata become equal.
    pub fn canonical(&self) -> Dfa {
        let n = self.num_states();
        let mut map = vec![NONE; n];
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        map[self.initial as usize] = 0;
        order.push(self.initial);
        queue.push_back(self.initial);
        while let Some(p) = queue.pop_front() {
            for x in 0..self.k as Letter {
                if let Some(q) = self.next(p, x) {
                    if map[q as usize] == NONE {
                        map[q as usize] = order.len() as u32;
                        order.push(q);
                        queue.push_back(q);
                    }
                }
            }
        }
        let mut out = Dfa::new(order.len(), self.k);
        for (i, &p) in order.iter().enumerate() {
            out.terminal[i] = self.terminal[p as usize];
            for x in 0..self.k as Letter {
                if let Some(q) = self.next(p, x) {
                    out.set_transition(i as u32, x, map[q as usize]);
                }
            }
        }
        out
    }

    /// Minimal trim automaton for the same language, canonically numbered.
    pub fn minimize(&self) -> Dfa {
        let t = self.trim();
        if t.is_empty() {
            return t;
        }
        let n = t.num_states();
        // Moore refinement; the implicit sink is class NONE.
        let mut class: Vec<u32> = t.terminal.iter().map(|&b| b as u32).collect();
        loop {
            let mut sig: HashMap<(u32, Vec<u32>), u32> = HashMap::new();
            let mut next = vec![0u32; n];
            for p in 0..n {
                let row: Vec<u32> = (0..t.k as Letter)
                    .map(|x| t.next(p as u32, x).map_or(NONE, |q| class[q as usize]))
                    .collect();
                let len = sig.len() as u32;
                next[p] = *sig.entry((class[p], row)).or_insert(len);
            }
            let before = class.iter().collect::<HashSet<_>>().len();
            let after = sig.len();
            class = next;
            if after == before {
                break;
            }
        }
        let m = class.iter().copied().max().unwrap() as usize + 1;
        let mut out = Dfa::new(m, t.k);
        for (p, x, q) in t.edges() {
            out.set_transition(class[p as usize], x, class[q as usize]);
        }
        for (p, &term) in t.terminal.iter().enumerate() {
            if term {
                out.terminal[class[p] as usize] = true;
            }
        }
        out.initial = class[t.initial as usize];
        out.canonical()
    }

    /// Product automaton recognizing `L(self) ∩ L(other)`.
    pub fn intersect(&self, other: &Dfa) -> Dfa {
        assert_eq!(self.k, other.k, "alphabet mismatch");
        let mut index: HashMap<(u32, u32), u32> = HashMap::new();
        let mut out = Dfa::new(0, self.k);
        let mut queue = VecDeque::new();
        let start = (self.initial, other.initial);
        index.insert(start, out.add_state(self.is_terminal(start.0) && other.is_terminal(start.1)));
        queue.push_back(start);
        while let Some((p1, p2)) = queue.pop_front() {
            let id = index[&(p1, p2)];
            for x in 0..self.k as Letter {
                if let (Some(q1), Some(q2)) = (self.next(p1, x), other.next(p2, x)) {
                    let qid = match index.get(&(q1, q2)) {
                        Some(&q) => q,
                        None => {
                            let q = out.add_state(self.is_terminal(q1) && other.is_terminal(q2));
                            index.insert((q1, q2), q);
                            queue.push_back((q1, q2));
                            q
                        }
                    };
                    out.set_transition(id, x, qid);
                }
            }
        }
        out
    }

    /// All accepted words of length at most `n`.
    pub fn enumerate_language(&self, n: usize) -> BTreeSet<Word> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<(u32, Vec<Letter>)> = vec![(self.initial, Vec::new())];
        let live = self.coreachable();
        while let Some((p, w)) = stack.pop() {
            if self.is_terminal(p) {
                out.insert(Word(w.clone()));
            }
            if w.len() == n {
                continue;
            }
            for x in 0..self.k as Letter {
                if let Some(q) = self.next(p, x) {
                    if live[q as usize] {
                        let mut v = w.clone();
                        v.push(x);
                        stack.push((q, v));
                    }
                }
            }
        }
        out
    }

    /// Accepted words of length exactly `n`, in increasing letter-index order.
    pub fn words_of_length(&self, n: usize) -> Vec<Word> {
        let live = self.coreachable();
        let mut level: Vec<(u32, Vec<Letter>)> = Vec::new();
        if live[self.initial as usize] {
            level.push((self.initial, Vec::new()));
        }
        for _ in 0..n {
            let mut next = Vec::new();
            for (p, w) in &level {
                for x in 0..self.k as Letter {
                    if let Some(q) = self.next(*p, x) {
                        if live[q as usize] {
                            let mut v = w.clone();
                            v.push(x);
                            next.push((q, v));
                        }
                    }
                }
            }
            level = next;
        }
        level
            .into_iter()
            .filter(|(p, _)| self.is_terminal(*p))
            .map(|(_, w)| Word(w))
            .collect()
    }

    /// Strongly connected component index per state and, per component,
    /// whether it carries a cycle.
    fn sccs(&self) -> (Vec<usize>, Vec<bool>) {
        // iterative Tarjan
        let n = self.num_states();
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut comp = vec![usize::MAX; n];
        let mut ncomp = 0;
        let mut counter = 0;
        for root in 0..n {
            if index[root] != usize::MAX {
                continue;
            }
            let mut call: Vec<(usize, Letter)> = vec![(root, 0)];
            index[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut x)) = call.last_mut() {
                if (*x as usize) < self.k {
                    let letter = *x;
                    *x += 1;
                    if let Some(w) = self.next(v as u32, letter) {
                        let w = w as usize;
                        if index[w] == usize::MAX {
                            index[w] = counter;
                            low[w] = counter;
                            counter += 1;
                            stack.push(w);
                            on_stack[w] = true;
                            call.push((w, 0));
                        } else if on_stack[w] {
                            low[v] = low[v].min(index[w]);
                        }
                    }
                } else {
                    call.pop();
                    if let Some(&(u, _)) = call.last() {
                        low[u] = low[u].min(low[v]);
                    }
                    if low[v] == index[v] {
                        loop {
                            let w = stack.pop().unwrap();
                            on_stack[w] = false;
                            comp[w] = ncomp;
                            if w == v {
                                break;
                            }
                        }
                        ncomp += 1;
                    }
                }
            }
        }
        let mut cyclic = vec![false; ncomp];
        for (p, _, q) in self.edges() {
            if comp[p as usize] == comp[q as usize] {
                cyclic[comp[p as usize]] = true;
            }
        }
        (comp, cyclic)
    }

    fn shortest_paths_from(&self, from: u32, within: Option<(&[usize], usize)>) -> Vec<Option<Vec<Letter>>> {
        let mut path: Vec<Option<Vec<Letter>>> = vec![None; self.num_states()];
        path[from as usize] = Some(Vec::new());
        let mut queue = VecDeque::from([from]);
        while let Some(p) = queue.pop_front() {
            for x in 0..self.k as Letter {
                if let Some(q) = self.next(p, x) {
                    if let Some((comp, c)) = within {
                        if comp[q as usize] != c {
                            continue;
                        }
                    }
                    if path[q as usize].is_none() {
                        let mut w = path[p as usize].clone().unwrap();
                        w.push(x);
                        path[q as usize] = Some(w);
                        queue.push_back(q);
                    }
                }
            }
        }
        path
    }

    /// Lasso representatives of the labels of all infinite paths from the
    /// initial state. The automaton is expected to be trim.
    pub fn lasso_set(&self) -> Result<Vec<Lasso>, AutomataError> {
        let n = self.num_states();
        let (comp, cyclic) = self.sccs();
        let ncomp = cyclic.len();
        // internal out-degree per state for cyclic components
        let mut internal = vec![0usize; n];
        for (p, _, q) in self.edges() {
            if comp[p as usize] == comp[q as usize] {
                internal[p as usize] += 1;
            }
        }
        let mut branching = vec![false; ncomp];
        for q in 0..n {
            if cyclic[comp[q]] && internal[q] > 1 {
                branching[comp[q]] = true;
            }
        }
        // does a cyclic component reach a different cyclic component?
        let mut chained = false;
        for c in 0..ncomp {
            if !cyclic[c] {
                continue;
            }
            let start = (0..n).find(|&q| comp[q] == c).unwrap() as u32;
            let reach = self.shortest_paths_from(start, None);
            if (0..n).any(|q| reach[q].is_some() && comp[q] != c && cyclic[comp[q]]) {
                chained = true;
            }
        }
        if branching.iter().any(|&b| b) || chained {
            return Err(AutomataError::InfiniteOmegaLanguage {
                witnesses: self.cycle_witnesses(&comp, &cyclic),
            });
        }
        // Infinite paths: an acyclic stem, then a single simple cycle forever.
        let mut out = BTreeSet::new();
        let mut stack: Vec<(u32, Vec<Letter>)> = vec![(self.initial, Vec::new())];
        while let Some((p, w)) = stack.pop() {
            if cyclic[comp[p as usize]] {
                let c = comp[p as usize];
                let mut cycle = Vec::new();
                let mut q = p;
                loop {
                    let (x, r) = (0..self.k as Letter)
                        .find_map(|x| self.next(q, x).filter(|&r| comp[r as usize] == c).map(|r| (x, r)))
                        .unwrap();
                    cycle.push(x);
                    q = r;
                    if q == p {
                        break;
                    }
                }
                out.insert(Lasso::new(Word(w), Word(cycle)));
                continue;
            }
            for x in 0..self.k as Letter {
                if let Some(q) = self.next(p, x) {
                    let mut v = w.clone();
                    v.push(x);
                    stack.push((q, v));
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    fn cycle_witnesses(&self, comp: &[usize], cyclic: &[bool]) -> Vec<Lasso> {
        let stems = self.shortest_paths_from(self.initial, None);
        let mut out = BTreeSet::new();
        for (p, x, q) in self.edges() {
            let c = comp[p as usize];
            if !cyclic[c] || comp[q as usize] != c {
                continue;
            }
            let Some(stem) = &stems[p as usize] else { continue };
            let back = self.shortest_paths_from(q, Some((comp, c)));
            let mut cycle = vec![x];
            cycle.extend(back[p as usize].as_ref().unwrap());
            out.insert(Lasso::new(Word(stem.clone()), Word(cycle)));
        }
        out.into_iter().collect()
    }

    /// Graphviz rendering; `labels` optionally names the states.
    pub fn to_dot(&self, alph: &InvAlphabet, name: &str, labels: Option<&[String]>) -> String {
        let mut s = format!("digraph \"{name}\" {{\n  rankdir=LR;\n  __start [shape=point];\n");
        for q in 0..self.num_states() {
            let shape = if self.terminal[q] { "doublecircle" } else { "circle" };
            let label = labels.map_or_else(|| q.to_string(), |l| l[q].clone());
            s += &format!("  q{q} [shape={shape}, label=\"{}\"];\n", escape(&label));
        }
        s += &format!("  __start -> q{};\n", self.initial);
        for (p, x, q) in self.edges() {
            s += &format!("  q{p} -> q{q} [label=\"{}\"];\n", escape(&alph.name(x)));
        }
        s += "}\n";
        s
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// `stem · cycle^ω`, stored in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lasso {
    pub stem: Word,
    pub cycle: Word,
}

impl Lasso {
    pub fn new(stem: Word, cycle: Word) -> Self {
        let o = OmegaWord::new(stem, cycle).expect("nonempty cycle");
        Lasso {
            stem: o.preperiod().clone(),
            cycle: o.period().clone(),
        }
    }

    pub fn to_omega(&self) -> OmegaWord {
        OmegaWord::new(self.stem.clone(), self.cycle.clone()).unwrap()
    }
}

impl From<&OmegaWord> for Lasso {
    fn from(o: &OmegaWord) -> Self {
        Lasso::new(o.preperiod().clone(), o.period().clone())
    }
}

/// A deterministic complete transducer `(Q, q0, δ, λ)` over a doubled
/// alphabet. The inverse-edge property is checked at construction.
#[derive(Clone, Debug)]
pub struct InverseTransducer {
    k: usize,
    initial: u32,
    delta: Vec<u32>,
    lambda: Vec<Word>,
    inverse: bool,
}

impl InverseTransducer {
    /// `delta[q * k + x]` and `lambda[q * k + x]` for state `q`, letter `x`.
    pub fn new(alphabet_size: usize, initial: u32, delta: Vec<u32>, lambda: Vec<Word>) -> Self {
        assert_eq!(delta.len(), lambda.len());
        assert_eq!(delta.len() % alphabet_size, 0);
        let n = delta.len() / alphabet_size;
        assert!(delta.iter().all(|&q| (q as usize) < n), "delta must be total");
        let mut t = InverseTransducer {
            k: alphabet_size,
            initial,
            delta,
            lambda,
            inverse: false,
        };
        t.inverse = t.check_inverse();
        t
    }

    /// Single-state transducer `x ↦ image[x]`.
    pub fn from_morphism(images: Vec<Word>) -> Self {
        let k = images.len();
        InverseTransducer::new(k, 0, vec![0; k], images)
    }

    pub fn identity(alphabet_size: usize) -> Self {
        InverseTransducer::from_morphism((0..alphabet_size as Letter).map(|x| Word(vec![x])).collect())
    }

    fn check_inverse(&self) -> bool {
        (0..self.num_states() as u32).all(|q| {
            (0..self.k as Letter).all(|x| {
                let p = self.step(q, x);
                self.step(p, inv(x)) == q && self.output(p, inv(x)).0 == invert(self.output(q, x)).0
            })
        })
    }

    pub fn is_inverse(&self) -> bool {
        self.inverse
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    pub fn num_states(&self) -> usize {
        self.delta.len() / self.k
    }

    pub fn initial(&self) -> u32 {
        self.initial
    }

    #[inline]
    pub fn step(&self, q: u32, x: Letter) -> u32 {
        self.delta[q as usize * self.k + x as usize]
    }

    #[inline]
    pub fn output(&self, q: u32, x: Letter) -> &Word {
        &self.lambda[q as usize * self.k + x as usize]
    }

    /// `M = max |λ(q, a)|`.
    pub fn max_output_len(&self) -> usize {
        self.lambda.iter().map(|w| w.len()).max().unwrap_or(0)
    }

    pub fn run_state(&self, from: u32, u: &[Letter]) -> u32 {
        u.iter().fold(from, |q, &x| self.step(q, x))
    }

    pub fn transduce(&self, u: &[Letter]) -> Word {
        let mut out = Vec::new();
        let mut q = self.initial;
        for &x in u {
            out.extend_from_slice(self.output(q, x));
            q = self.step(q, x);
        }
        Word(out)
    }

    pub fn induced_reduced(&self, g: &[Letter]) -> Result<ReducedWord, AutomataError> {
        if !self.inverse {
            return Err(AutomataError::NotInverse);
        }
        Ok(free_reduce(&self.transduce(g)))
    }

    pub fn to_dot(&self, alph: &InvAlphabet, name: &str) -> String {
        let mut s = format!("digraph \"{name}\" {{\n  rankdir=LR;\n  __start [shape=point];\n");
        for q in 0..self.num_states() {
            s += &format!("  q{q} [shape=circle, label=\"{q}\"];\n");
        }
        s += &format!("  __start -> q{};\n", self.initial);
        for q in 0..self.num_states() as u32 {
            for x in 0..self.k as Letter {
                let label = format!("{}|{}", alph.name(x), alph.format_word(self.output(q, x)));
                s += &format!("  q{q} -> q{} [label=\"{}\"];\n", self.step(q, x), escape(&label));
            }
        }
        s += "}\n";
        s
    }
}

/// Group operations used by generator extraction.
pub trait GroupOps {
    type Elem: Clone + Ord + Hash + fmt::Debug;
    fn identity(&self) -> Self::Elem;
    fn mul(&self, g: &Self::Elem, h: &Self::Elem) -> Self::Elem;
    fn inverse(&self, g: &Self::Elem) -> Self::Elem;
    /// Size used to bound closures (e.g. free length).
    fn size(&self, g: &Self::Elem) -> usize;
}

#[derive(Clone, Debug)]
pub struct SubgroupConfig {
    /// Radius of the verification ball.
    pub radius: usize,
    /// Extra radius allowed for intermediate products.
    pub slack: usize,
    /// Extra harvest length beyond `2 · |states|`.
    pub bound: usize,
    /// Maximum number of accepted words inspected.
    pub max_words: usize,
}

impl Default for SubgroupConfig {
    fn default() -> Self {
        SubgroupConfig {
            radius: 8,
            slack: 4,
            bound: 8,
            max_words: 2_000_000,
        }
    }
}

#[derive(Debug, Error, Clone)]
#[error("{} target elements not generated by {} harvested generators", missing.len(), generators.len())]
pub struct VerificationFailed<E: fmt::Debug> {
    pub generators: Vec<E>,
    pub missing: Vec<E>,
}

/// Elements of `⟨gens⟩` of size at most `limit`, reached by products that
/// stay within that size.
pub struct BoundedClosure<'a, G: GroupOps> {
    ops: &'a G,
    limit: usize,
    gens: Vec<G::Elem>,
    pub elems: HashSet<G::Elem>,
}

impl<'a, G: GroupOps> BoundedClosure<'a, G> {
    pub fn new(ops: &'a G, limit: usize) -> Self {
        let mut elems = HashSet::new();
        elems.insert(ops.identity());
        BoundedClosure {
            ops,
            limit,
            gens: Vec::new(),
            elems,
        }
    }

    pub fn contains(&self, g: &G::Elem) -> bool {
        self.elems.contains(g)
    }

    /// Adds `s` and `s^-1` to the generators and extends the closure.
    pub fn add(&mut self, s: &G::Elem) {
        let new = [s.clone(), self.ops.inverse(s)];
        let mut queue = VecDeque::new();
        for c in self.elems.iter() {
            for t in &new {
                let g = self.ops.mul(c, t);
                if self.ops.size(&g) <= self.limit && !self.elems.contains(&g) {
                    queue.push_back(g);
                }
            }
        }
        self.gens.extend(new);
        while let Some(g) = queue.pop_front() {
            if !self.elems.insert(g.clone()) {
                continue;
            }
            for t in &self.gens {
                let h = self.ops.mul(&g, t);
                if self.ops.size(&h) <= self.limit && !self.elems.contains(&h) {
                    queue.push_back(h);
                }
            }
        }
    }
}

/// Finite generating set for a subgroup given by accepted words of `langs`
/// under `eval`, certified against `target` (the subgroup elements inside
/// the verification ball). Candidates are harvested by increasing length and
/// kept only when not already generated; a final pass drops redundant ones.
pub fn subgroup_generators<G, F>(
    ops: &G,
    langs: &[Dfa],
    eval: F,
    target: &BTreeSet<G::Elem>,
    cfg: &SubgroupConfig,
) -> Result<Vec<G::Elem>, VerificationFailed<G::Elem>>
where
    G: GroupOps,
    F: Fn(usize, &Word) -> G::Elem,
{
    let limit = cfg.radius + cfg.slack;
    let max_len = langs.iter().map(|d| 2 * d.num_states()).max().unwrap_or(0) + cfg.bound;
    let mut closure = BoundedClosure::new(ops, limit);
    let mut gens: Vec<G::Elem> = Vec::new();
    let covered = |c: &BoundedClosure<G>| target.iter().all(|t| c.contains(t));
    let mut inspected = 0usize;
    'outer: for len in 0..=max_len {
        if covered(&closure) {
            break;
        }
        for (idx, d) in langs.iter().enumerate() {
            for w in d.words_of_length(len) {
                inspected += 1;
                if inspected > cfg.max_words {
                    break 'outer;
                }
                let g = eval(idx, &w);
                if ops.size(&g) > limit || closure.contains(&g) {
                    continue;
                }
                closure.add(&g);
                gens.push(g);
                if covered(&closure) {
                    break 'outer;
                }
            }
        }
    }
    if !covered(&closure) {
        let missing = target.iter().filter(|t| !closure.contains(t)).cloned().collect();
        return Err(VerificationFailed {
            generators: gens,
            missing,
        });
    }
    // drop generators that the others already account for, latest first
    let mut i = gens.len();
    while i > 0 {
        i -= 1;
        let mut c = BoundedClosure::new(ops, limit);
        for (j, g) in gens.iter().enumerate() {
            if j != i {
                c.add(g);
            }
        }
        if covered(&c) {
            gens.remove(i);
        }
    }
    Ok(gens)
}

/// Ball of `⟨gens⟩` restricted to elements of size at most `n`, using
/// intermediate products of size at most `n + slack`.
pub fn bounded_span<G: GroupOps>(ops: &G, gens: &[G::Elem], n: usize, slack: usize) -> BTreeSet<G::Elem> {
    let mut c = BoundedClosure::new(ops, n + slack);
    for g in gens {
        c.add(g);
    }
    c.elems.into_iter().filter(|g| ops.size(g) <= n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // letters: a = 0, a^-1 = 1, b = 2, b^-1 = 3
    fn star_a() -> Dfa {
        let mut d = Dfa::new(1, 4);
        d.set_terminal(0, true);
        d.set_transition(0, 0, 0);
        d
    }

    fn even_a() -> Dfa {
        let mut d = Dfa::new(2, 4);
        d.set_terminal(0, true);
        d.set_transition(0, 0, 1);
        d.set_transition(1, 0, 0);
        d
    }

    #[test]
    fn accepts_basic() {
        let d = star_a();
        assert!(d.accepts(&[0, 0]));
        assert!(!d.accepts(&[2]));
        assert!(d.accepts(&[]));
    }

    #[test]
    fn intersect_and_minimize() {
        let p = star_a().intersect(&even_a());
        assert!(p.accepts(&[0, 0]));
        assert!(!p.accepts(&[0]));
        // two equivalent states for a*
        let mut d = Dfa::new(2, 4);
        d.set_terminal(0, true);
        d.set_terminal(1, true);
        d.set_transition(0, 0, 1);
        d.set_transition(1, 0, 0);
        assert_eq!(d.minimize().num_states(), 1);
        assert_eq!(d.minimize(), star_a().minimize());
    }

    #[test]
    fn trim_removes_unreachable() {
        let mut d = star_a();
        d.add_state(true);
        assert_eq!(d.num_states(), 2);
        assert_eq!(d.trim().num_states(), 1);
    }

    #[test]
    fn enumerate_examples() {
        let got = star_a().enumerate_language(2);
        let want: BTreeSet<Word> = [vec![], vec![0], vec![0, 0]].into_iter().map(Word).collect();
        assert_eq!(got, want);
        assert!(Dfa::empty(4).enumerate_language(5).is_empty());
        assert_eq!(star_a().enumerate_language(0).len(), 1);
        let mut nt = star_a();
        nt.set_terminal(0, false);
        assert!(nt.enumerate_language(0).is_empty());
    }

    #[test]
    fn lasso_examples() {
        let got = star_a().lasso_set().unwrap();
        assert_eq!(got, vec![Lasso::new(Word::empty(), Word(vec![0]))]);
        let mut two = star_a();
        two.set_transition(0, 2, 0);
        match two.lasso_set() {
            Err(AutomataError::InfiniteOmegaLanguage { witnesses }) => assert_eq!(witnesses.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lasso_chained_cycles_infinite() {
        // a* b b* : the a-loop reaches the b-loop
        let mut d = Dfa::new(2, 4);
        d.set_terminal(0, true);
        d.set_terminal(1, true);
        d.set_transition(0, 0, 0);
        d.set_transition(0, 2, 1);
        d.set_transition(1, 2, 1);
        assert!(d.lasso_set().is_err());
    }

    #[test]
    fn lasso_tails() {
        // a^ω, b a^ω, b^-1 (b^-1 a)^ω  from a tree with three tails
        let mut d = Dfa::new(5, 4);
        for q in 0..5 {
            d.set_terminal(q, true);
        }
        d.set_transition(0, 0, 1);
        d.set_transition(1, 0, 1);
        d.set_transition(0, 2, 2);
        d.set_transition(2, 0, 1);
        d.set_transition(0, 3, 3);
        d.set_transition(3, 3, 4);
        d.set_transition(4, 0, 3);
        let got: BTreeSet<OmegaWord> = d.lasso_set().unwrap().iter().map(Lasso::to_omega).collect();
        let want: BTreeSet<OmegaWord> = [
            OmegaWord::new(Word(vec![]), Word(vec![0])).unwrap(),
            OmegaWord::new(Word(vec![2]), Word(vec![0])).unwrap(),
            OmegaWord::new(Word(vec![3]), Word(vec![3, 0])).unwrap(),
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
        for l in d.lasso_set().unwrap() {
            let o = l.to_omega();
            assert!(d.accepts(&o.prefix(l.stem.len() + 3 * l.cycle.len())));
        }
    }

    #[test]
    fn transducer_examples() {
        let id = InverseTransducer::identity(4);
        assert!(id.is_inverse());
        assert_eq!(id.transduce(&[0, 2, 3]), Word(vec![0, 2, 3]));
        assert!(id.transduce(&[]).is_empty());
        let bad = InverseTransducer::from_morphism(vec![
            Word(vec![0, 0]),
            Word(vec![1]),
            Word(vec![2]),
            Word(vec![3]),
        ]);
        assert!(!bad.is_inverse());
        assert_eq!(bad.induced_reduced(&[0]), Err(AutomataError::NotInverse));
        let dbl = InverseTransducer::from_morphism(vec![
            Word(vec![0, 0]),
            Word(vec![1, 1]),
            Word(vec![2]),
            Word(vec![3]),
        ]);
        assert!(dbl.is_inverse());
        assert_eq!(dbl.transduce(&[0, 0]), Word(vec![0, 0, 0, 0]));
        assert_eq!(dbl.induced_reduced(&[0, 2, 3]).unwrap().as_word(), &Word(vec![0, 0]));
    }

    struct Z2;
    impl GroupOps for Z2 {
        type Elem = u8;
        fn identity(&self) -> u8 {
            0
        }
        fn mul(&self, g: &u8, h: &u8) -> u8 {
            g ^ h
        }
        fn inverse(&self, g: &u8) -> u8 {
            *g
        }
        fn size(&self, _: &u8) -> usize {
            0
        }
    }

    #[test]
    fn subgroup_generators_examples() {
        // b b* with b of order two
        let mut d = Dfa::new(2, 4);
        d.set_transition(0, 2, 1);
        d.set_transition(1, 2, 1);
        d.set_terminal(1, true);
        let eval = |_: usize, w: &Word| (w.len() % 2) as u8;
        let target: BTreeSet<u8> = [0, 1].into_iter().collect();
        let gens = subgroup_generators(&Z2, &[d], eval, &target, &SubgroupConfig::default()).unwrap();
        assert_eq!(gens, vec![1]);
        let mut eps = Dfa::new(1, 4);
        eps.set_terminal(0, true);
        let only_id: BTreeSet<u8> = [0].into_iter().collect();
        assert!(subgroup_generators(&Z2, &[eps.clone()], eval, &only_id, &SubgroupConfig::default())
            .unwrap()
            .is_empty());
        let err = subgroup_generators(&Z2, &[eps], eval, &target, &SubgroupConfig::default()).unwrap_err();
        assert_eq!(err.missing, vec![1]);
    }

    fn arb_dfa() -> impl Strategy<Value = Dfa> {
        (1usize..5).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::option::weighted(0.6, 0..n as u32), n * 4),
                prop::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(t, term)| {
                    let mut d = Dfa::new(n, 4);
                    for (i, q) in t.into_iter().enumerate() {
                        if let Some(q) = q {
                            d.set_transition((i / 4) as u32, (i % 4) as u32, q);
                        }
                    }
                    for (q, b) in term.into_iter().enumerate() {
                        d.set_terminal(q as u32, b);
                    }
                    d
                })
        })
    }

    fn arb_transducer() -> impl Strategy<Value = InverseTransducer> {
        // random permutation-style inverse transducer on two letters
        (1usize..4).prop_flat_map(|n| {
            (
                prop::collection::vec(0..n as u32, n * 2),
                prop::collection::vec(prop::collection::vec(0u32..4, 0..3), n * 2),
            )
                .prop_map(move |(targets, outs)| inverse_closure(n, &targets, &outs))
        })
    }

    // Build an inverse transducer on {a, b}: positive letters use `targets`,
    // which are made into permutations per letter by sorting.
    fn inverse_closure(n: usize, targets: &[u32], outs: &[Vec<u32>]) -> InverseTransducer {
        let k = 4;
        let mut delta = vec![0u32; n * k];
        let mut lambda = vec![Word::empty(); n * k];
        for x in 0..2usize {
            // permutation: q ↦ (q + shift) mod n
            let shift = targets[x] as usize;
            for q in 0..n {
                let p = (q + shift) % n;
                let w = Word(outs[q * 2 + x].clone());
                delta[q * k + 2 * x] = p as u32;
                lambda[q * k + 2 * x] = w.clone();
                delta[p * k + 2 * x + 1] = q as u32;
                lambda[p * k + 2 * x + 1] = invert(&w);
            }
        }
        InverseTransducer::new(k, 0, delta, lambda)
    }

    proptest! {
        #[test]
        fn minimize_preserves_language(d in arb_dfa()) {
            prop_assert_eq!(d.minimize().enumerate_language(5), d.enumerate_language(5));
        }

        #[test]
        fn run_state_factors_through_reduction(t in arb_transducer(), u in prop::collection::vec(0u32..4, 0..12)) {
            prop_assert!(t.is_inverse());
            let r = free_reduce(&u);
            prop_assert_eq!(t.run_state(0, &u), t.run_state(0, &r));
            prop_assert_eq!(t.induced_reduced(&u).unwrap(), t.induced_reduced(&r).unwrap());
        }

        #[test]
        fn transduce_concatenation(t in arb_transducer(), u in prop::collection::vec(0u32..4, 0..8), v in prop::collection::vec(0u32..4, 0..8)) {
            let mut uv = u.clone();
            uv.extend(&v);
            let q = t.run_state(0, &u);
            let mut tail = Vec::new();
            let mut p = q;
            for &x in &v {
                tail.extend_from_slice(t.output(p, x));
                p = t.step(p, x);
            }
            prop_assert_eq!(t.transduce(&uv), t.transduce(&u).concat(&tail));
        }
    }
}
