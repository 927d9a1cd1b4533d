//! Involutive alphabets, finite and eventually periodic words, free
//! reduction, shortlex order, common prefixes and the prefix ultrametric.
//!
//! Letters of the doubled alphabet are small integers: base letter `k` is
//! `2k` and its formal inverse is `2k + 1`, so inversion is `x ^ 1`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Deref;

use thiserror::Error;

/// A letter of the doubled alphabet.
pub type Letter = u32;

/// Formal inverse of a letter.
#[inline]
pub fn inv(x: Letter) -> Letter {
    x ^ 1
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WordError {
    #[error("unknown letter `{0}`")]
    UnknownLetter(String),
    #[error("period of an infinite word must be nonempty")]
    EmptyPeriod,
    #[error("invalid letter order: {0}")]
    BadOrder(String),
}

/// A finite alphabet `A` together with its formal inverses and a total
/// order on the doubled alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvAlphabet {
    names: Vec<String>,
    order: Vec<Letter>,
    rank: Vec<u32>,
}

impl InvAlphabet {
    /// Alphabet with the default order `a < a^-1 < b < b^-1 < ...`.
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let order: Vec<Letter> = (0..2 * names.len() as u32).collect();
        let rank = order.clone();
        InvAlphabet { names, order, rank }
    }

    /// Alphabet with an explicit order given as a list of letter tokens
    /// covering every letter and inverse exactly once.
    pub fn with_order<S: AsRef<str>, T: AsRef<str>>(
        names: &[S],
        order: &[T],
    ) -> Result<Self, WordError> {
        let mut alph = InvAlphabet::new(names);
        let size = alph.size();
        if order.len() != size {
            return Err(WordError::BadOrder(format!(
                "expected {} letters, got {}",
                size,
                order.len()
            )));
        }
        let mut seen = vec![false; size];
        let mut ord = Vec::with_capacity(size);
        for tok in order {
            let x = alph.letter(tok.as_ref())?;
            if seen[x as usize] {
                return Err(WordError::BadOrder(format!("`{}` repeated", tok.as_ref())));
            }
            seen[x as usize] = true;
            ord.push(x);
        }
        let mut rank = vec![0; size];
        for (r, &x) in ord.iter().enumerate() {
            rank[x as usize] = r as u32;
        }
        alph.order = ord;
        alph.rank = rank;
        Ok(alph)
    }

    /// Number of base letters.
    pub fn base_len(&self) -> usize {
        self.names.len()
    }

    /// Size of the doubled alphabet.
    pub fn size(&self) -> usize {
        2 * self.names.len()
    }

    pub fn base_names(&self) -> &[String] {
        &self.names
    }

    /// Letters of the doubled alphabet in increasing order.
    pub fn ordered(&self) -> &[Letter] {
        &self.order
    }

    pub fn rank(&self, x: Letter) -> u32 {
        self.rank[x as usize]
    }

    /// Parses a single token: a base name, optionally suffixed with `^-1`.
    pub fn letter(&self, tok: &str) -> Result<Letter, WordError> {
        let (base, inverse) = match tok.strip_suffix("^-1") {
            Some(b) => (b, true),
            None => (tok, false),
        };
        let k = self
            .names
            .iter()
            .position(|n| n == base)
            .ok_or_else(|| WordError::UnknownLetter(tok.to_string()))?;
        Ok(2 * k as Letter + inverse as Letter)
    }

    pub fn name(&self, x: Letter) -> String {
        let base = &self.names[(x / 2) as usize];
        if x & 1 == 1 {
            format!("{base}^-1")
        } else {
            base.clone()
        }
    }

    /// Parses whitespace separated tokens; `1` (or an empty string) is the
    /// empty word.
    pub fn parse_word(&self, s: &str) -> Result<Word, WordError> {
        let mut out = Vec::new();
        for tok in s.split_whitespace() {
            if tok == "1" {
                continue;
            }
            out.push(self.letter(tok)?);
        }
        Ok(Word(out))
    }

    pub fn format_word(&self, w: &[Letter]) -> String {
        if w.is_empty() {
            return "1".to_string();
        }
        let toks: Vec<String> = w.iter().map(|&x| self.name(x)).collect();
        toks.join(" ")
    }

    pub fn format_omega(&self, w: &OmegaWord) -> String {
        if w.preperiod().is_empty() {
            format!("({})^w", self.format_word(w.period()))
        } else {
            format!(
                "{} ({})^w",
                self.format_word(w.preperiod()),
                self.format_word(w.period())
            )
        }
    }

    /// Compares two words in shortlex order.
    pub fn shortlex_cmp(&self, u: &[Letter], v: &[Letter]) -> Ordering {
        u.len().cmp(&v.len()).then_with(|| {
            for (&x, &y) in u.iter().zip(v) {
                if x != y {
                    return self.rank(x).cmp(&self.rank(y));
                }
            }
            Ordering::Equal
        })
    }
}

/// A finite word over the doubled alphabet.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn from_slice(s: &[Letter]) -> Self {
        Word(s.to_vec())
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Letter> {
        self.0
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|p| p[1] != inv(p[0]))
    }

    /// The prefix of length `min(n, |w|)`.
    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn concat(&self, other: &[Letter]) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(other);
        Word(v)
    }
}

impl Deref for Word {
    type Target = [Letter];
    fn deref(&self) -> &[Letter] {
        &self.0
    }
}

impl From<Vec<Letter>> for Word {
    fn from(v: Vec<Letter>) -> Self {
        Word(v)
    }
}

/// A freely reduced word: no factor `x x^-1`.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ReducedWord(Word);

impl ReducedWord {
    pub fn empty() -> Self {
        ReducedWord(Word::empty())
    }

    /// Wraps `w` if it is reduced.
    pub fn new(w: Word) -> Option<Self> {
        if w.is_reduced() {
            Some(ReducedWord(w))
        } else {
            None
        }
    }

    pub fn as_word(&self) -> &Word {
        &self.0
    }

    pub fn into_word(self) -> Word {
        self.0
    }

    /// Reduced product `self * other`.
    pub fn mul(&self, other: &[Letter]) -> ReducedWord {
        let mut v = self.0 .0.clone();
        push_reduced(&mut v, other);
        ReducedWord(Word(v))
    }

    pub fn inverse(&self) -> ReducedWord {
        ReducedWord(invert(&self.0))
    }
}

impl Deref for ReducedWord {
    type Target = Word;
    fn deref(&self) -> &Word {
        &self.0
    }
}

/// Appends `w` to the reduced buffer `acc`, cancelling as it goes.
pub fn push_reduced(acc: &mut Vec<Letter>, w: &[Letter]) {
    for &x in w {
        if acc.last() == Some(&inv(x)) {
            acc.pop();
        } else {
            acc.push(x);
        }
    }
}

pub fn free_reduce(w: &[Letter]) -> ReducedWord {
    let mut acc = Vec::with_capacity(w.len());
    push_reduced(&mut acc, w);
    ReducedWord(Word(acc))
}

pub fn invert(w: &[Letter]) -> Word {
    Word(w.iter().rev().map(|&x| inv(x)).collect())
}

pub fn shortlex_less(alph: &InvAlphabet, u: &[Letter], v: &[Letter]) -> bool {
    alph.shortlex_cmp(u, v) == Ordering::Less
}

/// Length of the longest common prefix of two finite words.
pub fn lcp_len(u: &[Letter], v: &[Letter]) -> usize {
    u.iter().zip(v).take_while(|(x, y)| x == y).count()
}

/// An eventually periodic infinite word `preperiod · period^ω` in canonical
/// form: primitive period and shortest preperiod.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct OmegaWord {
    pre: Word,
    per: Word,
}

impl OmegaWord {
    pub fn new(pre: Word, per: Word) -> Result<Self, WordError> {
        omega_canonicalize(pre, per)
    }

    pub fn preperiod(&self) -> &Word {
        &self.pre
    }

    pub fn period(&self) -> &Word {
        &self.per
    }

    pub fn at(&self, i: usize) -> Letter {
        if i < self.pre.len() {
            self.pre[i]
        } else {
            self.per[(i - self.pre.len()) % self.per.len()]
        }
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word((0..n).map(|i| self.at(i)).collect())
    }

    /// `u · self`, canonicalized.
    pub fn prepend(&self, u: &[Letter]) -> OmegaWord {
        omega_canonicalize(Word::from_slice(u).concat(&self.pre), self.per.clone())
            .expect("period is nonempty")
    }
}

fn primitive_root(w: &[Letter]) -> &[Letter] {
    let n = w.len();
    for d in 1..=n {
        if n.is_multiple_of(d) && (d..n).all(|i| w[i] == w[i - d]) {
            return &w[..d];
        }
    }
    w
}

pub fn omega_canonicalize(pre: Word, per: Word) -> Result<OmegaWord, WordError> {
    if per.is_empty() {
        return Err(WordError::EmptyPeriod);
    }
    let mut per: Vec<Letter> = primitive_root(&per).to_vec();
    let mut pre = pre.0;
    // Absorb the tail of the preperiod into a rotated period.
    while let Some(&last) = pre.last() {
        if last != *per.last().unwrap() {
            break;
        }
        pre.pop();
        per.rotate_right(1);
    }
    Ok(OmegaWord {
        pre: Word(pre),
        per: Word(per),
    })
}

/// A finite word or an eventually periodic infinite word.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum AnyWord {
    Finite(Word),
    Infinite(OmegaWord),
}

impl AnyWord {
    /// `None` for infinite words.
    pub fn len(&self) -> Option<usize> {
        match self {
            AnyWord::Finite(w) => Some(w.len()),
            AnyWord::Infinite(_) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn at(&self, i: usize) -> Option<Letter> {
        match self {
            AnyWord::Finite(w) => w.get(i).copied(),
            AnyWord::Infinite(o) => Some(o.at(i)),
        }
    }

    pub fn prefix(&self, n: usize) -> Word {
        match self {
            AnyWord::Finite(w) => w.prefix(n),
            AnyWord::Infinite(o) => o.prefix(n),
        }
    }
}

impl From<Word> for AnyWord {
    fn from(w: Word) -> Self {
        AnyWord::Finite(w)
    }
}

impl From<OmegaWord> for AnyWord {
    fn from(w: OmegaWord) -> Self {
        AnyWord::Infinite(w)
    }
}

/// Position of the first difference, `None` when the words are equal.
fn divergence(a: &AnyWord, b: &AnyWord) -> Option<usize> {
    if a == b {
        return None;
    }
    // Two distinct canonical ω-words differ within this many letters
    // (past both preperiods, agreement on |v1| + |v2| letters forces a
    // common period).
    let bound = match (a, b) {
        (AnyWord::Infinite(x), AnyWord::Infinite(y)) => {
            x.pre.len().max(y.pre.len()) + x.per.len() + y.per.len()
        }
        _ => usize::MAX,
    };
    let mut i = 0;
    loop {
        match (a.at(i), b.at(i)) {
            (Some(x), Some(y)) if x == y => {}
            _ => return Some(i),
        }
        i += 1;
        if i > bound {
            unreachable!("canonical forms differ but letter streams agree");
        }
    }
}

/// The longest common prefix `α ∧ β`; returns `α` itself when the two are
/// the same infinite word.
pub fn common_prefix(a: &AnyWord, b: &AnyWord) -> AnyWord {
    match divergence(a, b) {
        None => a.clone(),
        Some(n) => AnyWord::Finite(a.prefix(n)),
    }
}

/// Value of the prefix ultrametric: zero, or `2^-k`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Dist3 {
    Zero,
    Exp(usize),
}

impl Dist3 {
    pub fn value(self) -> f64 {
        match self {
            Dist3::Zero => 0.0,
            Dist3::Exp(k) => 0.5f64.powi(k.min(i32::MAX as usize) as i32),
        }
    }
}

impl Ord for Dist3 {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Dist3::Zero, Dist3::Zero) => Ordering::Equal,
            (Dist3::Zero, _) => Ordering::Less,
            (_, Dist3::Zero) => Ordering::Greater,
            (Dist3::Exp(a), Dist3::Exp(b)) => b.cmp(a),
        }
    }
}

impl PartialOrd for Dist3 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dist3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist3::Zero => write!(f, "0"),
            Dist3::Exp(k) => write!(f, "2^-{k}"),
        }
    }
}

pub fn d3(a: &AnyWord, b: &AnyWord) -> Dist3 {
    match divergence(a, b) {
        None => Dist3::Zero,
        Some(n) => Dist3::Exp(n),
    }
}
