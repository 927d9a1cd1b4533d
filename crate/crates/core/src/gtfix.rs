//! Finite automata for `{ g : gT̃ = gz }` where `T̃` is the map on reduced
//! words induced by an inverse transducer.
//!
//! States are pairs `(g⁻¹·gT̃, q₀g)`. Pairs with short first component form
//! a finite central region `P'`; outside it every state has exactly one
//! compatible outgoing edge (labelled by the first letter of its word), so
//! the compatible edges form a functional graph whose paths either return
//! to `P'`, close a cycle, or escape. Escape is certified by a periodic or
//! an affine growth pattern, and two escaping paths are separated when
//! their front-letter sequences cannot share a tail. Anything left
//! uncertified within the configured bounds makes the result partial; a
//! partial automaton is still exact up to the explored depth.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::automata::{Dfa, InverseTransducer, NONE};
use crate::words::{free_reduce, inv, InvAlphabet, Letter, OmegaWord, ReducedWord, Word};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GtError {
    #[error("transducer does not have the inverse-edge property")]
    NotInverse,
    #[error("automaton is partial: {0}")]
    PartialAutomaton(Partiality),
}

/// Why a constructed automaton may be missing edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Partiality {
    /// Compatible paths neither resolved nor certified escaping.
    DepthExceeded { open_paths: usize },
    /// Escaping paths that might still merge beyond the horizon.
    HorizonExceeded { unresolved_pairs: usize },
}

impl fmt::Display for Partiality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partiality::DepthExceeded { open_paths } => {
                write!(f, "depth exceeded ({open_paths} compatible paths unresolved)")
            }
            Partiality::HorizonExceeded { unresolved_pairs } => {
                write!(f, "horizon exceeded ({unresolved_pairs} escaping pairs may merge later)")
            }
        }
    }
}

/// `(g⁻¹·gT̃, q₀g)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PState {
    pub p1: ReducedWord,
    pub q: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GtConfig {
    /// Maximal output length of the transducer.
    pub m: usize,
    /// Radius of the central region.
    pub n: usize,
    pub depth_bound: usize,
    pub merge_horizon: usize,
}

impl GtConfig {
    pub fn new(t: &InverseTransducer, z: &[Letter]) -> Self {
        let m = t.max_output_len();
        let n = (2 * m + 1).max(free_reduce(z).len());
        let depth_bound = 10 * n + 200;
        GtConfig {
            m,
            n,
            depth_bound,
            merge_horizon: 4 * depth_bound,
        }
    }

    pub fn with_bounds(mut self, depth: Option<usize>, horizon: Option<usize>) -> Self {
        if let Some(d) = depth {
            self.depth_bound = d;
            self.merge_horizon = 4 * d;
        }
        if let Some(h) = horizon {
            self.merge_horizon = h;
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Central,
    Compatible,
    InverseCompatible,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GtStats {
    pub central_states: usize,
    pub explored_states: usize,
    pub walks: usize,
    pub returning_paths: usize,
    pub escaping_paths: usize,
}

/// Finite subautomaton of the state graph; terminals are the states with
/// first component `z`.
#[derive(Clone, Debug)]
pub struct GtAutomaton {
    pub dfa: Dfa,
    pub states: Vec<PState>,
    /// Edge kind per `(state, letter)`, indexed like the transition table.
    kinds: Vec<Option<EdgeKind>>,
    pub z: ReducedWord,
    pub partial: Option<Partiality>,
    /// When partial: the language is still exact on words up to this length.
    pub exact_to: Option<usize>,
    pub stats: GtStats,
    n: usize,
}

impl GtAutomaton {
    pub fn edge_kind(&self, p: u32, x: Letter) -> Option<EdgeKind> {
        self.kinds[p as usize * self.dfa.alphabet_size() + x as usize]
    }

    pub fn is_partial(&self) -> bool {
        self.partial.is_some()
    }

    /// Largest `n` for which accepted words of length `≤ n` are exactly the
    /// solutions of that length; `None` means unbounded.
    pub fn exact_radius(&self) -> Option<usize> {
        self.partial.as_ref().map(|_| self.exact_to.unwrap_or(0))
    }

    pub fn is_central(&self, p: u32) -> bool {
        self.states[p as usize].p1.len() <= self.n
    }

    /// Edge kinds along the run of `w` from the initial state.
    pub fn run_kinds(&self, w: &[Letter]) -> Option<Vec<EdgeKind>> {
        let mut p = self.dfa.initial();
        let mut out = Vec::with_capacity(w.len());
        for &x in w {
            out.push(self.edge_kind(p, x)?);
            p = self.dfa.next(p, x)?;
        }
        Some(out)
    }

    pub fn to_dot(&self, alph: &InvAlphabet, name: &str) -> String {
        let mut s = format!("digraph \"{name}\" {{\n  rankdir=LR;\n  __start [shape=point];\n");
        for (i, st) in self.states.iter().enumerate() {
            let shape = if self.dfa.is_terminal(i as u32) { "doublecircle" } else { "circle" };
            let label = format!("{} / {}", alph.format_word(&st.p1), st.q);
            s += &format!("  q{i} [shape={shape}, label=\"{}\"];\n", crate::automata::escape(&label));
        }
        s += &format!("  __start -> q{};\n", self.dfa.initial());
        for (p, x, q) in self.dfa.edges() {
            let style = match self.edge_kind(p, x) {
                Some(EdgeKind::Central) => "solid",
                _ => "dashed",
            };
            s += &format!(
                "  q{p} -> q{q} [label=\"{}\", style={style}];\n",
                crate::automata::escape(&alph.name(x))
            );
        }
        s += "}\n";
        s
    }
}

/// `P₁(g)` and `q₀g` computed directly from `g`.
pub fn p_state(t: &InverseTransducer, g: &[Letter]) -> PState {
    let g = free_reduce(g);
    let img = free_reduce(&t.transduce(&g));
    PState {
        p1: g.inverse().mul(&img),
        q: t.run_state(t.initial(), &g),
    }
}

/// The state reached from `s` by the letter `a`.
pub fn p_step(t: &InverseTransducer, s: &PState, a: Letter) -> PState {
    let mut v: Vec<Letter> = Vec::with_capacity(s.p1.len() + 1 + t.max_output_len());
    v.push(inv(a));
    v.extend_from_slice(&s.p1);
    let mut acc = Vec::with_capacity(v.len());
    crate::words::push_reduced(&mut acc, &v);
    crate::words::push_reduced(&mut acc, t.output(s.q, a));
    PState {
        p1: ReducedWord::new(Word(acc)).unwrap(),
        q: t.step(s.q, a),
    }
}

/// `{ g reduced : |g| ≤ n, gT̃ = gz }` by exhaustive enumeration.
pub fn brute_fixed_oracle(t: &InverseTransducer, z: &[Letter], n: usize) -> BTreeSet<ReducedWord> {
    let z = free_reduce(z);
    let mut out = BTreeSet::new();
    let k = t.alphabet_size() as Letter;
    // depth-first over reduced words carrying (g, gT̃ unreduced-state)
    let mut stack: Vec<(Vec<Letter>, Vec<Letter>, u32)> = vec![(Vec::new(), Vec::new(), t.initial())];
    while let Some((g, img, q)) = stack.pop() {
        let lhs = free_reduce(&img);
        let rhs = free_reduce(&[g.as_slice(), z.letters()].concat());
        if lhs == rhs {
            out.insert(ReducedWord::new(Word(g.clone())).unwrap());
        }
        if g.len() == n {
            continue;
        }
        for x in 0..k {
            if g.last() == Some(&inv(x)) {
                continue;
            }
            let mut g2 = g.clone();
            g2.push(x);
            let mut img2 = img.clone();
            crate::words::push_reduced(&mut img2, t.output(q, x));
            stack.push((g2, img2, t.step(q, x)));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// exploration

type Cfg = (Box<[u8]>, u32);

fn cfg_step(t: &InverseTransducer, c: &Cfg, a: u8) -> Cfg {
    let (p, q) = c;
    let mut acc: Vec<u8> = Vec::with_capacity(p.len() + 1 + t.max_output_len());
    if p.first() == Some(&a) {
        acc.extend_from_slice(&p[1..]);
    } else {
        acc.push(a ^ 1);
        acc.extend_from_slice(p);
    }
    for &y in t.output(*q, a as Letter).iter() {
        let y = y as u8;
        if acc.last() == Some(&(y ^ 1)) {
            acc.pop();
        } else {
            acc.push(y);
        }
    }
    (acc.into_boxed_slice(), t.step(*q, a as Letter))
}

fn push_u8(acc: &mut Vec<u8>, t: &InverseTransducer, q: u32, x: u8) {
    for &y in t.output(q, x as Letter).iter() {
        let y = y as u8;
        if acc.last() == Some(&(y ^ 1)) {
            acc.pop();
        } else {
            acc.push(y);
        }
    }
}

fn omega_of(pre: &[u8], per: &[u8]) -> OmegaWord {
    OmegaWord::new(
        Word(pre.iter().map(|&x| x as Letter).collect()),
        Word(per.iter().map(|&x| x as Letter).collect()),
    )
    .expect("nonempty period")
}

/// Witness that a compatible path never returns, closes no cycle, and
/// keeps reading the letters in `letters` forever.
#[derive(Clone, Debug)]
enum Cert {
    /// From window start `(p, q)` the configuration after `d ≤ |p|` steps
    /// is `(p·z, q)`; front letters repeat with period `p[..d]`. Stores the
    /// limit words `p[i..]·z^ω` with the state at phase `i`.
    Periodic {
        limits: Vec<(OmegaWord, u32)>,
        letters: BTreeSet<u8>,
    },
    /// Reading all of `w` from `q` gives `w·v` and returns to `q`, and
    /// reading `v` from `q` gives `v`; the configurations at generation
    /// boundaries are `w·vʲ`.
    Affine {
        w: Vec<u8>,
        v: Vec<u8>,
        letters: BTreeSet<u8>,
        /// Run form of the front letters when `v` is a power of one letter.
        runs: Option<Vec<Run>>,
    },
    /// Generation boundaries are `x₁^(e₁+k·d₁)⋯x_r^(e_r+k·d_r)`. Stores
    /// the front-letter sequence as runs `(letter, state, a, b)` whose
    /// length in period `k` is `a + b·k`.
    Runs { runs: Vec<Run>, letters: BTreeSet<u8> },
}

/// `(letter, entry state, a, b)`: a run of length `a + b·k` in period `k`.
type Run = (u8, u32, i64, i64);

/// Front-letter runs of the generations `k = 0, 1, …` given the runs of
/// one generation; `None` if the letters are eventually periodic.
fn run_sequence(gen: &[Run]) -> Option<Vec<Run>> {
    let mut runs: Vec<Run> = Vec::with_capacity(gen.len());
    for &r in gen {
        match runs.last_mut() {
            Some(last) if last.0 == r.0 => {
                last.2 += r.2;
                last.3 += r.3;
            }
            _ => runs.push(r),
        }
    }
    if runs.len() > 1 && runs[0].0 == runs[runs.len() - 1].0 {
        // the last run continues into the next generation's first run
        let first = runs.remove(0);
        let last = runs.last_mut().unwrap();
        last.2 += first.2 + first.3;
        last.3 += first.3;
    }
    if runs.len() < 2 || runs.iter().all(|r| r.3 == 0) {
        return None;
    }
    Some(runs)
}

impl Cert {
    fn letters(&self) -> &BTreeSet<u8> {
        match self {
            Cert::Periodic { letters, .. } | Cert::Affine { letters, .. } | Cert::Runs { letters, .. } => letters,
        }
    }

    fn runs(&self) -> Option<&[Run]> {
        match self {
            Cert::Runs { runs, .. } => Some(runs),
            Cert::Affine { runs, .. } => runs.as_deref(),
            Cert::Periodic { .. } => None,
        }
    }

    /// False only if the two front-letter sequences can never share a tail.
    fn may_merge(&self, other: &Cert) -> bool {
        if self.letters() != other.letters() {
            return false;
        }
        if let (Some(a), Some(b)) = (self.runs(), other.runs()) {
            return run_tails_may_agree(a, b);
        }
        match (self, other) {
            (Cert::Periodic { limits: a, .. }, Cert::Periodic { limits: b, .. }) => {
                let (a0, q0) = &a[0];
                let (b0, r0) = &b[0];
                b.iter().any(|(x, q)| q == q0 && x == a0) || a.iter().any(|(x, q)| q == r0 && x == b0)
            }
            // w·w·v·w·v·v·… is eventually periodic only when w and v commute
            (Cert::Periodic { .. }, Cert::Affine { w, v, .. }) | (Cert::Affine { w, v, .. }, Cert::Periodic { .. }) => {
                [&w[..], &v[..]].concat() == [&v[..], &w[..]].concat()
            }
            (Cert::Affine { .. }, Cert::Affine { .. }) => true,
            // one side has unbounded runs, the other does not
            _ => false,
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Whether `p·K − q·K' = c` holds for all rows with some integers `K, K'`.
fn integer_solvable(eqs: &[(i64, i64, i64)]) -> bool {
    let mut rows = Vec::new();
    for &(p, q, c) in eqs {
        if p == 0 && q == 0 {
            if c != 0 {
                return false;
            }
        } else {
            rows.push((p, q, c));
        }
    }
    let Some(&(p0, q0, c0)) = rows.first() else {
        return true;
    };
    if let Some(&(p1, q1, c1)) = rows.iter().find(|&&(p, q, _)| q0 * p - p0 * q != 0) {
        let det = q0 * p1 - p0 * q1;
        let kn = q0 * c1 - q1 * c0;
        let k2n = p0 * c1 - p1 * c0;
        if kn % det != 0 || k2n % det != 0 {
            return false;
        }
        let (k, k2) = (kn / det, k2n / det);
        return rows.iter().all(|&(p, q, c)| p * k - q * k2 == c);
    }
    // all rows parallel to the first
    let consistent = rows.iter().all(|&(p, q, c)| if p0 != 0 { c * p0 == c0 * p } else { c * q0 == c0 * q });
    consistent && c0 % gcd(p0, q0) == 0
}

/// Whether two run sequences (see [`Cert::Runs`]) can share a tail.
fn run_tails_may_agree(p: &[Run], q: &[Run]) -> bool {
    let (r1, r2) = (p.len(), q.len());
    let l = r1 / gcd(r1 as i64, r2 as i64) as usize * r2;
    for u1 in 0..r1 {
        'shift: for u2 in 0..r2 {
            let mut eqs = Vec::with_capacity(l);
            for j in 0..l {
                let (i1, k1) = ((u1 + j) % r1, ((u1 + j) / r1) as i64);
                let (i2, k2) = ((u2 + j) % r2, ((u2 + j) / r2) as i64);
                let (x, s, a, b) = p[i1];
                let (y, t, c, f) = q[i2];
                if x != y || s != t || b * (l / r1) as i64 != f * (l / r2) as i64 {
                    continue 'shift;
                }
                // a + b·(K + k1) = c + f·(K' + k2)
                eqs.push((b, f, c + f * k2 - a - b * k1));
            }
            if integer_solvable(&eqs) {
                return true;
            }
        }
    }
    false
}

fn runs_of(w: &[u8]) -> Vec<(u8, i64)> {
    let mut out: Vec<(u8, i64)> = Vec::new();
    for &x in w {
        match out.last_mut() {
            Some((y, e)) if *y == x => *e += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

const MAX_PERIOD: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
enum End {
    Open,
    Core,
    Joined(u32),
    Certified,
}

struct Walk {
    path: Vec<u32>,
    end: End,
    cert: Option<usize>,
}

struct Explorer<'a> {
    t: &'a InverseTransducer,
    n: usize,
    verts: Vec<Cfg>,
    index: HashMap<Cfg, u32>,
    np: u32,
    /// owner walk of each non-central vertex and its index on that path
    owner: Vec<u32>,
    pos: Vec<u32>,
    /// compatible successor of each explored vertex (NONE if not stepped)
    succ: Vec<u32>,
    walks: Vec<Walk>,
    certs: Vec<Cert>,
}

impl<'a> Explorer<'a> {
    fn is_core(&self, v: u32) -> bool {
        v < self.np
    }

    fn intern(&mut self, c: Cfg, owner: u32, pos: u32) -> (u32, bool) {
        if let Some(&v) = self.index.get(&c) {
            return (v, false);
        }
        let v = self.verts.len() as u32;
        self.index.insert(c.clone(), v);
        self.verts.push(c);
        self.owner.push(owner);
        self.pos.push(pos);
        self.succ.push(NONE);
        (v, true)
    }

    /// Steps walk `w` up to `budget` times.
    fn advance(&mut self, w: usize, budget: usize) {
        for _ in 0..budget {
            if self.walks[w].end != End::Open && self.walks[w].end != End::Certified {
                return;
            }
            let last = *self.walks[w].path.last().unwrap();
            let c = self.verts[last as usize].clone();
            let next = cfg_step(self.t, &c, c.0[0]);
            let is_core = next.0.len() <= self.n;
            let at = self.walks[w].path.len() as u32;
            let (v, new) = self.intern(next, w as u32, at);
            self.succ[last as usize] = v;
            self.walks[w].path.push(v);
            if is_core {
                debug_assert!(self.is_core(v));
                self.walks[w].end = End::Core;
                return;
            }
            if !new {
                self.walks[w].end = End::Joined(v);
                return;
            }
            if self.walks[w].end == End::Open {
                if let Some(c) = self.certify(w) {
                    self.certs.push(c);
                    self.walks[w].cert = Some(self.certs.len() - 1);
                    self.walks[w].end = End::Certified;
                    return;
                }
            }
        }
    }

    /// Looks for a growth window ending at the last vertex of `w`.
    fn certify(&self, w: usize) -> Option<Cert> {
        let path = &self.walks[w].path;
        let t1 = path.len() - 1;
        let (p1, q1) = &self.verts[path[t1] as usize];
        for d in 1..=MAX_PERIOD.min(t1.saturating_sub(1)) {
            let t0 = t1 - d;
            let (p0, q0) = &self.verts[path[t0] as usize];
            if q0 != q1 || p1.len() <= p0.len() || d > p0.len() || !p1.starts_with(p0) {
                continue;
            }
            if let Some(c) = self.check_periodic(path, t0, d, p0, *q0, &p1[p0.len()..]) {
                return Some(c);
            }
        }
        // a whole generation: t1 - t0 = |p0|
        for l in 1..p1.len().min(t1 + 1) {
            let t0 = t1 - l;
            let (p0, q0) = &self.verts[path[t0] as usize];
            if p0.len() != l || q0 != q1 {
                continue;
            }
            if p1.starts_with(p0) {
                if let Some(c) = self.check_affine(path, t0, p0, *q0, &p1[l..]) {
                    return Some(c);
                }
            }
            if let Some(c) = self.check_runs(p0, *q0, p1) {
                return Some(c);
            }
        }
        None
    }

    fn check_periodic(&self, path: &[u32], t0: usize, d: usize, p: &[u8], q: u32, z: &[u8]) -> Option<Cert> {
        let zl = *z.last().unwrap();
        if z[0] == zl ^ 1 {
            return None;
        }
        let s = &p[p.len() - d..];
        let zs: Vec<u8> = [z, s].concat();
        let sz: Vec<u8> = [s, z].concat();
        if zs != sz {
            return None;
        }
        let mut limits = Vec::with_capacity(d);
        let mut o: Vec<u8> = Vec::new();
        let mut state = q;
        for i in 0..=d {
            if !self.literal_at(path[t0 + i], &p[i..], &o, state, zl) {
                return None;
            }
            if i < d {
                limits.push((omega_of(&p[i..], z), state));
                push_u8(&mut o, self.t, state, p[i]);
                state = self.t.step(state, p[i] as Letter);
            }
        }
        Some(Cert::Periodic {
            limits,
            letters: p[..d].iter().copied().collect(),
        })
    }

    fn check_affine(&self, path: &[u32], t0: usize, w: &[u8], q: u32, v: &[u8]) -> Option<Cert> {
        let vl = *v.last().unwrap();
        if v[0] == vl ^ 1 || w[0] == vl ^ 1 {
            return None;
        }
        let mut o: Vec<u8> = Vec::new();
        let mut state = q;
        for i in 0..=w.len() {
            if !self.literal_at(path[t0 + i], &w[i..], &o, state, vl) {
                return None;
            }
            if i < w.len() {
                push_u8(&mut o, self.t, state, w[i]);
                state = self.t.step(state, w[i] as Letter);
            }
        }
        let mut o: Vec<u8> = Vec::new();
        let mut state = q;
        for &x in v {
            push_u8(&mut o, self.t, state, x);
            state = self.t.step(state, x as Letter);
            if o.first() == Some(&(vl ^ 1)) {
                return None;
            }
        }
        if o != v || state != q {
            return None;
        }
        let runs = if v.iter().all(|&x| x == v[0]) {
            let mut gen: Vec<Run> = Vec::new();
            let mut state = q;
            for (x, e) in runs_of(w) {
                gen.push((x, state, e, 0));
                for _ in 0..e {
                    state = self.t.step(state, x as Letter);
                }
            }
            gen.push((v[0], q, 0, v.len() as i64));
            run_sequence(&gen)
        } else {
            None
        };
        Some(Cert::Affine {
            w: w.to_vec(),
            v: v.to_vec(),
            letters: w.iter().chain(v).copied().collect(),
            runs,
        })
    }

    /// `w` read from `q` gives `w1` and returns to `q`, where `w1` has the
    /// same runs as `w` with lengths grown by `d ≥ 0`. Runs that grow must
    /// loop at their entry state with a one-letter output, and no two output
    /// blocks may cancel, so the same holds with lengths `e + k·d`.
    fn check_runs(&self, w: &[u8], q: u32, w1: &[u8]) -> Option<Cert> {
        let r0 = runs_of(w);
        let r1 = runs_of(w1);
        if r0.len() < 2 || r0.len() != r1.len() {
            return None;
        }
        let mut grows = false;
        for (&(x, e), &(y, f)) in r0.iter().zip(&r1) {
            if x != y || f < e {
                return None;
            }
            grows |= f > e;
        }
        if !grows {
            return None;
        }
        let back = r0.last().unwrap().0;
        // output so far: growing runs (letter, a, b) of length a + b·k,
        // followed by a concrete tail that reduces freely
        let mut out: Vec<(u8, i64, i64)> = Vec::new();
        let mut tail: Vec<u8> = Vec::new();
        let mut entry = Vec::with_capacity(r0.len());
        let mut state = q;
        fn push(out: &mut Vec<(u8, i64, i64)>, x: u8, a: i64, b: i64) {
            match out.last_mut() {
                Some(r) if r.0 == x => {
                    r.1 += a;
                    r.2 += b;
                }
                _ => out.push((x, a, b)),
            }
        }
        for (&(x, e), &(_, f)) in r0.iter().zip(&r1) {
            entry.push(state);
            let d = f - e;
            if d > 0 {
                let o = free_reduce(self.t.output(state, x as Letter));
                if self.t.step(state, x as Letter) != state || o.len() != 1 {
                    return None;
                }
                for y in tail.drain(..) {
                    push(&mut out, y, 1, 0);
                }
                let y = o[0] as u8;
                if y == out.last().map(|r| r.0).unwrap_or(back) ^ 1 {
                    return None;
                }
                push(&mut out, y, e, d);
            } else {
                for _ in 0..e {
                    for &y in self.t.output(state, x as Letter).iter() {
                        let y = y as u8;
                        if tail.last() == Some(&(y ^ 1)) {
                            tail.pop();
                        } else if tail.is_empty() && y == out.last().map(|r| r.0).unwrap_or(back) ^ 1 {
                            return None;
                        } else {
                            tail.push(y);
                        }
                    }
                    state = self.t.step(state, x as Letter);
                }
            }
        }
        for y in tail.drain(..) {
            push(&mut out, y, 1, 0);
        }
        if state != q || out.len() != r1.len() {
            return None;
        }
        for (&(x, a, b), (&(y, f), &(_, e))) in out.iter().zip(r1.iter().zip(&r0)) {
            if x != y || a != f || b != f - e {
                return None;
            }
        }
        let gen: Vec<Run> = r0
            .iter()
            .zip(&r1)
            .zip(&entry)
            .map(|((&(x, e), &(_, f)), &s)| (x, s, e, f - e))
            .collect();
        Some(Cert::Runs {
            runs: run_sequence(&gen)?,
            letters: w.iter().copied().collect(),
        })
    }

    /// Vertex `u` is `(rest·o, state)` literally, and `o` would not cancel
    /// against a back letter `back`.
    fn literal_at(&self, u: u32, rest: &[u8], o: &[u8], state: u32, back: u8) -> bool {
        let (pu, qu) = &self.verts[u as usize];
        *qu == state
            && pu.len() == rest.len() + o.len()
            && pu[..rest.len()] == *rest
            && pu[rest.len()..] == *o
            && o.first() != Some(&(back ^ 1))
    }

    fn root(&self, mut w: usize) -> usize {
        // follow joins to the walk that owns the continuation
        let mut guard = 0;
        while let End::Joined(v) = self.walks[w].end {
            let o = self.owner[v as usize] as usize;
            if o == w {
                return w;
            }
            w = o;
            guard += 1;
            if guard > self.walks.len() {
                break;
            }
        }
        w
    }

    /// Number of explored compatible steps along the route of `w`,
    /// following joins; `None` if the route closes a cycle.
    fn route_len(&self, mut w: usize) -> Option<usize> {
        let mut total = 0usize;
        let mut offset = 0usize;
        for _ in 0..=self.walks.len() {
            let steps = self.walks[w].path.len() - 1;
            total += steps - offset.min(steps);
            match self.walks[w].end {
                End::Joined(v) if !self.is_core(v) => {
                    let o = self.owner[v as usize] as usize;
                    if o == w {
                        return None;
                    }
                    offset = self.pos[v as usize] as usize;
                    w = o;
                }
                _ => return Some(total),
            }
        }
        None
    }
}

/// Builds the finite automaton for `{ g : gT̃ = gz }`.
///
/// The result always accepts a subset of the true language. It equals the
/// true language when `partial` is `None`; otherwise it still agrees on all
/// words of length at most `exact_to`.
pub fn build_gt_automaton(t: &InverseTransducer, z: &[Letter], cfg: &GtConfig) -> Result<GtAutomaton, GtError> {
    if !t.is_inverse() {
        return Err(GtError::NotInverse);
    }
    let k = t.alphabet_size();
    assert!(k <= 256, "alphabet too large");
    let z = free_reduce(z);
    let n = cfg.n.max(z.len()).max(2 * t.max_output_len() + 1);

    // central region: every pair (p1, q) with |p1| ≤ n and q reachable
    let mut ex = Explorer {
        t,
        n,
        verts: Vec::new(),
        index: HashMap::new(),
        np: 0,
        owner: Vec::new(),
        pos: Vec::new(),
        succ: Vec::new(),
        walks: Vec::new(),
        certs: Vec::new(),
    };
    let mut words: Vec<Vec<u8>> = vec![Vec::new()];
    let mut level: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for w in &level {
            for x in 0..k as u8 {
                if w.last() == Some(&(x ^ 1)) {
                    continue;
                }
                let mut v = w.clone();
                v.push(x);
                next.push(v);
            }
        }
        words.extend(next.iter().cloned());
        level = next;
    }
    // only states reachable from the initial one occur as q₀g
    let mut reach = vec![false; t.num_states()];
    let mut stack = vec![t.initial()];
    reach[t.initial() as usize] = true;
    while let Some(q) = stack.pop() {
        for x in 0..k as Letter {
            let r = t.step(q, x);
            if !reach[r as usize] {
                reach[r as usize] = true;
                stack.push(r);
            }
        }
    }
    for q in (0..t.num_states() as u32).filter(|&q| reach[q as usize]) {
        for w in &words {
            ex.intern((w.clone().into_boxed_slice(), q), NONE, 0);
        }
    }
    ex.np = ex.verts.len() as u32;
    let np = ex.np;

    // compatible paths leaving the central region
    for p in 0..np {
        let c = ex.verts[p as usize].clone();
        let Some(&a) = c.0.first() else { continue };
        let next = cfg_step(t, &c, a);
        if next.0.len() <= n {
            continue;
        }
        let w = ex.walks.len();
        ex.walks.push(Walk {
            path: vec![p],
            end: End::Open,
            cert: None,
        });
        let (v, new) = ex.intern(next, w as u32, 1);
        ex.succ[p as usize] = v;
        ex.walks[w].path.push(v);
        if !new {
            ex.walks[w].end = End::Joined(v);
            continue;
        }
        ex.advance(w, cfg.depth_bound);
    }

    // open paths get extended up to the horizon
    let open: Vec<usize> = (0..ex.walks.len()).filter(|&w| ex.walks[w].end == End::Open).collect();
    let extra = cfg.merge_horizon.saturating_sub(cfg.depth_bound);
    for &w in &open {
        ex.advance(w, extra);
    }

    let nw = ex.walks.len();
    let river_end = |ex: &Explorer, r: usize| match &ex.walks[r].end {
        End::Joined(_) => End::Core, // joined its own path: a cycle
        e => e.clone(),
    };
    let mut cert_roots: Vec<usize> = (0..nw)
        .map(|w| ex.root(w))
        .filter(|&r| river_end(&ex, r) == End::Certified)
        .collect();
    cert_roots.sort_unstable();
    cert_roots.dedup();

    // certified rivers that might share a tail: extend both looking for a merge
    let mut suspicious: Vec<(usize, usize)> = Vec::new();
    for (i, &a) in cert_roots.iter().enumerate() {
        for &b in &cert_roots[i + 1..] {
            let ca = &ex.certs[ex.walks[a].cert.unwrap()];
            let cb = &ex.certs[ex.walks[b].cert.unwrap()];
            if ca.may_merge(cb) {
                suspicious.push((a, b));
            }
        }
    }
    if !suspicious.is_empty() {
        let involved: BTreeSet<usize> = suspicious.iter().flat_map(|&(a, b)| [a, b]).collect();
        let chunk = 16;
        let mut spent = 0;
        while spent < cfg.merge_horizon {
            for &w in &involved {
                ex.advance(w, chunk);
            }
            spent += chunk;
            if suspicious.iter().all(|&(a, b)| ex.root(a) == ex.root(b)) {
                break;
            }
        }
    }
    let roots: Vec<usize> = (0..nw).map(|w| ex.root(w)).collect();
    let mut unsettled: BTreeSet<usize> = BTreeSet::new();
    let mut unresolved_pairs = 0;
    for &(a, b) in &suspicious {
        if ex.root(a) != ex.root(b) {
            unresolved_pairs += 1;
            unsettled.insert(ex.root(a));
            unsettled.insert(ex.root(b));
        }
    }
    let open_rivers: BTreeSet<usize> = roots.iter().copied().filter(|&r| river_end(&ex, r) == End::Open).collect();
    unsettled.extend(open_rivers.iter().copied());

    let partial = if !open_rivers.is_empty() {
        Some(Partiality::DepthExceeded {
            open_paths: open_rivers.len(),
        })
    } else if unresolved_pairs > 0 {
        Some(Partiality::HorizonExceeded { unresolved_pairs })
    } else {
        None
    };
    let exact_to = if partial.is_some() {
        (0..nw)
            .filter(|&w| unsettled.contains(&roots[w]))
            .filter_map(|w| ex.route_len(w))
            .min()
    } else {
        None
    };

    // settled escaping rivers only need edges up to the point where all of
    // their walks have joined; everything else keeps every explored edge
    let nv = ex.verts.len();
    let pruned = |w: usize| river_end(&ex, roots[w]) == End::Certified && !unsettled.contains(&roots[w]);
    let mut river_size: HashMap<usize, usize> = HashMap::new();
    for &r in &roots {
        *river_size.entry(r).or_default() += 1;
    }
    // number of walks whose route passes through each non-central vertex
    let mut indeg = vec![0usize; nv];
    for v in np as usize..nv {
        let s = ex.succ[v];
        if s != NONE && !ex.is_core(s) {
            indeg[s as usize] += 1;
        }
    }
    let mut cnt = vec![0usize; nv];
    for w in &ex.walks {
        cnt[w.path[1] as usize] += 1;
    }
    let mut stack: Vec<usize> = (np as usize..nv).filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = stack.pop() {
        let s = ex.succ[v];
        if s != NONE && !ex.is_core(s) {
            cnt[s as usize] += cnt[v];
            indeg[s as usize] -= 1;
            if indeg[s as usize] == 0 {
                stack.push(s as usize);
            }
        }
    }
    let mut keep_edge: Vec<(u32, u8, u32)> = Vec::new();
    let mut keep_vert = vec![false; nv];
    for v in keep_vert.iter_mut().take(np as usize) {
        *v = true;
    }
    for (wi, w) in ex.walks.iter().enumerate() {
        let total = river_size[&roots[wi]];
        let prune = pruned(wi);
        for i in 0..w.path.len() - 1 {
            let u = w.path[i];
            let v = w.path[i + 1];
            let src_cnt = if i == 0 { 1 } else { cnt[u as usize] };
            if prune && src_cnt >= total {
                break;
            }
            let a = ex.verts[u as usize].0[0];
            keep_edge.push((u, a, v));
            keep_vert[u as usize] = true;
            keep_vert[v as usize] = true;
        }
    }

    let zb: Vec<u8> = z.iter().map(|&x| x as u8).collect();
    let mut idmap = vec![NONE; nv];
    let mut states = Vec::new();
    let mut dfa = Dfa::new(0, k);
    for v in 0..nv {
        if keep_vert[v] {
            let (p, q) = &ex.verts[v];
            idmap[v] = dfa.add_state(**p == *zb);
            states.push((p.clone(), *q));
        }
    }
    let mut kinds: Vec<Option<EdgeKind>> = vec![None; states.len() * k];
    for p in 0..np {
        let c = ex.verts[p as usize].clone();
        for a in 0..k as u8 {
            let next = cfg_step(t, &c, a);
            if next.0.len() <= n {
                let q = ex.index[&next];
                dfa.set_transition(idmap[p as usize], a as Letter, idmap[q as usize]);
                kinds[idmap[p as usize] as usize * k + a as usize] = Some(EdgeKind::Central);
            }
        }
    }
    for &(u, a, v) in &keep_edge {
        let (iu, iv) = (idmap[u as usize], idmap[v as usize]);
        dfa.set_transition(iu, a as Letter, iv);
        kinds[iu as usize * k + a as usize] = Some(EdgeKind::Compatible);
        dfa.set_transition(iv, (a ^ 1) as Letter, iu);
        kinds[iv as usize * k + (a ^ 1) as usize] = Some(EdgeKind::InverseCompatible);
    }
    let init = ex.index[&(Vec::new().into_boxed_slice(), t.initial())];
    dfa.set_initial(idmap[init as usize]);

    let stats = GtStats {
        central_states: np as usize,
        explored_states: nv - np as usize,
        walks: nw,
        returning_paths: (0..nw).filter(|&w| river_end(&ex, roots[w]) == End::Core).count(),
        escaping_paths: (0..nw).filter(|&w| river_end(&ex, roots[w]) == End::Certified).count(),
    };

    // restrict to the part reachable from the initial state
    let (trimmed, map) = dfa.trim_with_map();
    let mut new_states = vec![PState { p1: ReducedWord::empty(), q: 0 }; trimmed.num_states()];
    let mut new_kinds = vec![None; trimmed.num_states() * k];
    for (old, &nw_id) in map.iter().enumerate() {
        if nw_id == NONE {
            continue;
        }
        let (p, q) = &states[old];
        new_states[nw_id as usize] = PState {
            p1: ReducedWord::new(Word(p.iter().map(|&x| x as Letter).collect())).unwrap(),
            q: *q,
        };
        for a in 0..k {
            if let Some(target) = dfa.next(old as u32, a as Letter) {
                if map[target as usize] != NONE {
                    new_kinds[nw_id as usize * k + a] = kinds[old * k + a];
                }
            }
        }
    }
    if trimmed.is_empty() {
        new_states = vec![PState {
            p1: ReducedWord::empty(),
            q: t.initial(),
        }];
        new_kinds = vec![None; k];
    }
    Ok(GtAutomaton {
        dfa: trimmed,
        states: new_states,
        kinds: new_kinds,
        z,
        partial,
        exact_to,
        stats,
        n,
    })
}


/// Accepted reduced words of length at most `n`.
pub fn gt_fixed_language(b: &GtAutomaton, n: usize) -> Result<BTreeSet<ReducedWord>, GtError> {
    if let Some(p) = &b.partial {
        return Err(GtError::PartialAutomaton(p.clone()));
    }
    Ok(b.dfa
        .enumerate_language(n)
        .into_iter()
        .filter_map(ReducedWord::new)
        .collect())
}

/// Like [`gt_fixed_language`] but also usable on a partial automaton as
/// long as `n` is within its exact radius.
pub fn gt_fixed_language_upto(b: &GtAutomaton, n: usize) -> Result<BTreeSet<ReducedWord>, GtError> {
    match (&b.partial, b.exact_radius()) {
        (Some(p), Some(r)) if n > r => Err(GtError::PartialAutomaton(p.clone())),
        _ => Ok(b
            .dfa
            .enumerate_language(n)
            .into_iter()
            .filter_map(ReducedWord::new)
            .collect()),
    }
}

/// The automaton of reduced words over an alphabet of size `k`.
pub fn reduced_words_dfa(k: usize) -> Dfa {
    // state 0: start, state 1 + x: last letter x
    let mut d = Dfa::new(k + 1, k);
    for q in 0..=k as u32 {
        d.set_terminal(q, true);
        for x in 0..k as Letter {
            if q > 0 && x == inv(q - 1) {
                continue;
            }
            d.set_transition(q, x, 1 + x);
        }
    }
    d
}
