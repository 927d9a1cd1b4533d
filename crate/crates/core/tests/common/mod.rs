#![allow(dead_code)]

use rand::Rng;
use vffix::automata::InverseTransducer;
use vffix::words::{Letter, Word};

/// Random reduced word over `k` letters with length in `0..=max_len`.
pub fn random_reduced<R: Rng>(rng: &mut R, k: usize, max_len: usize) -> Vec<Letter> {
    let n = rng.gen_range(0..=max_len);
    let mut w: Vec<Letter> = Vec::with_capacity(n);
    while w.len() < n {
        let y = rng.gen_range(0..k as Letter);
        if w.last() == Some(&(y ^ 1)) {
            continue;
        }
        w.push(y);
    }
    w
}

/// Random inverse transducer: each base letter permutes the states and
/// carries reduced outputs of length at most `max_out`; inverse letters
/// take the inverse edges.
pub fn random_inverse_transducer<R: Rng>(rng: &mut R, nq: usize, na: usize, max_out: usize) -> InverseTransducer {
    let k = 2 * na;
    let mut delta = vec![0u32; nq * k];
    let mut lambda = vec![Word(Vec::new()); nq * k];
    for x in 0..na {
        let mut perm: Vec<u32> = (0..nq as u32).collect();
        for i in (1..nq).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        for q in 0..nq {
            let w = random_reduced(rng, k, max_out);
            let p = perm[q] as usize;
            delta[q * k + 2 * x] = p as u32;
            delta[p * k + 2 * x + 1] = q as u32;
            lambda[p * k + 2 * x + 1] = vffix::words::invert(&w);
            lambda[q * k + 2 * x] = Word(w);
        }
    }
    InverseTransducer::new(k, 0, delta, lambda)
}

pub fn examples_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

pub fn load(name: &str) -> vffix::group::GroupData {
    let text = std::fs::read_to_string(examples_dir().join(name)).expect("group file");
    vffix::group::load_group(&text).expect("parse")
}

/// Shipped group files with a valid presentation and endomorphism.
pub const VALID_GROUPS: &[&str] = &[
    "zxz2.group",
    "zxz2_identity.group",
    "zxz2_twist.group",
    "f2_swap.group",
    "f2_ab.group",
    "f2_identity.group",
    "f2_zero.group",
    "dinf_swap.group",
    "dinf_identity.group",
    "dinf_cube.group",
    "f2z2_ab.group",
    "f2z2_swap.group",
    "f2z2_twist.group",
    "z_identity.group",
    "z_double.group",
];

/// Outcome of comparing `L(A″_φ)` against the fixed points in a ball.
pub struct FixLanguageCheck {
    pub accepted: std::collections::BTreeSet<vffix::group::Element>,
    pub oracle: std::collections::BTreeSet<vffix::group::Element>,
    /// Fixed elements whose normal form does not label a path of `A′_φ`.
    pub pruned_prefixes: Vec<vffix::words::Word>,
    pub partial: bool,
    pub merge_violations: usize,
}

/// Builds `A″_φ` at the given depth and compares it with two oracles on
/// the ball: direct evaluation of `φ` on every ball element, and the
/// free-by-finite brute force restricted to the ball. Panics only if the
/// two oracles disagree with each other.
pub fn fix_language_check(
    geo: &vffix::geodesic::Geometry,
    phi: &vffix::group::Endomorphism,
    depth: usize,
) -> Result<FixLanguageCheck, vffix::dynamics::DynError> {
    use vffix::dynamics::{build_fix_automata, estimate_bphi};
    use vffix::group::{apply_endo, brute_fix_oracle};
    let b = &geo.ball;
    let p = &b.presentation;
    let consts = estimate_bphi(geo, phi, None)?;
    let fa = build_fix_automata(geo, phi, &consts, depth);
    let by_ball: std::collections::BTreeSet<_> =
        b.elems.iter().filter(|g| apply_endo(p, phi, g) == **g).cloned().collect();
    let max_free = b.elems.iter().map(|g| g.w.len()).max().unwrap_or(0);
    let by_brute: std::collections::BTreeSet<_> = brute_fix_oracle(p, phi, max_free)
        .into_iter()
        .filter(|g| b.id(g).is_some())
        .collect();
    assert_eq!(by_ball, by_brute, "the two fixed-point oracles disagree");
    let accepted = b
        .elems
        .iter()
        .zip(&b.nf)
        .filter(|(_, w)| fa.adblprime.accepts(w))
        .map(|(g, _)| g.clone())
        .collect();
    let pruned_prefixes = by_ball
        .iter()
        .map(|g| b.nf[b.id(g).unwrap() as usize].clone())
        .filter(|w| fa.aprime.run(fa.aprime.initial(), w).is_none())
        .collect();
    Ok(FixLanguageCheck {
        accepted,
        oracle: by_ball,
        pruned_prefixes,
        partial: fa.is_partial(),
        merge_violations: fa.merge_violations.len(),
    })
}

/// Inverse transducer on `na` base letters given by its base-letter
/// edges `(from, letter, to, output)`; inverse edges are filled in.
pub fn transducer(nq: usize, na: usize, edges: &[(u32, Letter, u32, &[Letter])]) -> InverseTransducer {
    let k = 2 * na;
    let mut delta = vec![u32::MAX; nq * k];
    let mut lambda = vec![Word(Vec::new()); nq * k];
    for &(p, x, q, out) in edges {
        let (p, q, x) = (p as usize, q as usize, x as usize);
        delta[p * k + x] = q as u32;
        lambda[p * k + x] = Word(out.to_vec());
        delta[q * k + (x ^ 1)] = p as u32;
        lambda[q * k + (x ^ 1)] = vffix::words::invert(out);
    }
    assert!(delta.iter().all(|&q| q != u32::MAX), "every base edge must be given");
    InverseTransducer::new(k, 0, delta, lambda)
}

const A: Letter = 0;
const A_INV: Letter = 1;
const B: Letter = 2;
const B_INV: Letter = 3;

/// Small transducers with known shapes: morphisms of F₂ and Z, and
/// two-state transducers, each with its target `z`.
pub fn hand_built_transducers() -> Vec<(&'static str, InverseTransducer, Vec<Letter>)> {
    let morph = |a: &[Letter], b: &[Letter]| transducer(1, 2, &[(0, A, 0, a), (0, B, 0, b)]);
    vec![
        ("identity", morph(&[A], &[B]), vec![]),
        ("doubling on Z", transducer(1, 1, &[(0, A, 0, &[A, A])]), vec![]),
        ("transvection", morph(&[A], &[A, B]), vec![]),
        ("swap", morph(&[B], &[A]), vec![]),
        ("transvection, z = a", morph(&[A], &[A, B]), vec![A]),
        ("inversion, z = b a", morph(&[A_INV], &[B_INV]), vec![B, A]),
        (
            "two-state, a swaps states",
            transducer(2, 2, &[(0, A, 1, &[A, B]), (1, A, 0, &[B_INV]), (0, B, 0, &[B]), (1, B, 1, &[B])]),
            vec![],
        ),
        (
            "two-state on Z, z = a",
            transducer(2, 1, &[(0, A, 1, &[A]), (1, A, 0, &[A, A])]),
            vec![A],
        ),
    ]
}

/// The seeded random corpus: 1 to 4 states, 1 to 3 letters, outputs and
/// `z` of length at most 2.
pub fn seeded_transducer(seed: u64) -> (InverseTransducer, Vec<Letter>) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let nq = rng.gen_range(1..=4);
    let na = rng.gen_range(1..=3);
    let t = random_inverse_transducer(&mut rng, nq, na, 2);
    let z = random_reduced(&mut rng, 2 * na, 2);
    (t, z)
}
