use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use vffix::automata::AutomataError;
use vffix::dynamics::{
    analyze_fixed_points, check_inverse, classify_regular, estimate_bphi, sigma_decomposition, tau_vanishes_from,
    BoundaryFixReport, DynError, ExtConstants, FrontierOutcome, Singular, Xi,
};
use vffix::geodesic::{boundary_points, build_ball, check_confluence, rewrite_nf, Ball, GeoError, Geometry};
use vffix::group::{
    eval_str, fix_subgroup, load_group, validate_endomorphism, validate_presentation, Endomorphism, FixConfig,
    GroupData, GroupError,
};
use vffix::words::{InvAlphabet, Word};

const ZXZ2: &str = include_str!("../examples/zxz2.group");

#[derive(Parser)]
#[command(name = "vffix", version, about = "Fixed points of endomorphisms of virtually free groups")]
struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads for the fixed subgroup pipeline.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Ball radius for geodesic computations.
    #[arg(long, global = true, default_value_t = 10, value_parser = parse_radius)]
    radius: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct GroupArg {
    /// Group file.
    #[arg(long)]
    group: PathBuf,
}

#[derive(Args)]
struct FixArgs {
    #[command(flatten)]
    g: GroupArg,
    /// Exploration depth for the fixed point automaton.
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Directory for A′ and A″ DOT files.
    #[arg(long)]
    emit_dot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the presentation and endomorphism of a group file.
    Validate(GroupArg),
    /// Normal form of a word over the generators.
    Nf {
        #[command(flatten)]
        g: GroupArg,
        word: String,
    },
    /// Rewrite a word with the length-reducing system.
    Rewrite {
        #[command(flatten)]
        g: GroupArg,
        word: String,
        /// Also print every rule.
        #[arg(long)]
        rules: bool,
    },
    /// Ball statistics and geodesic constants.
    Ball {
        #[command(flatten)]
        g: GroupArg,
        /// List every element with its normal form.
        #[arg(long)]
        list: bool,
    },
    /// Minimal automaton of the normal forms.
    Acceptor {
        #[command(flatten)]
        g: GroupArg,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Eventually periodic points of the normal form boundary.
    Boundary(GroupArg),
    /// Generators of the fixed subgroup.
    FixSubgroup {
        #[command(flatten)]
        g: GroupArg,
        /// Steps per compatible path before it counts as unresolved.
        #[arg(long)]
        gt_depth: Option<usize>,
        /// Steps spent looking for a merge of two escaping paths.
        #[arg(long)]
        gt_horizon: Option<usize>,
        /// Free length of the brute-force ball certifying the generators.
        #[arg(long, default_value_t = 8)]
        oracle_radius: usize,
        /// Directory for the per-pair automata.
        #[arg(long)]
        emit_dot: Option<PathBuf>,
    },
    /// Finite, singular and regular fixed points of the extension.
    Fix(FixArgs),
    /// As `fix`, plus attractor/repeller classification of regular points.
    Classify(FixArgs),
    /// Walk through the Z × Z₂ doubling example and check every stage.
    DemoZxz2 {
        /// Directory for the acceptor, A′ and A″ DOT files.
        #[arg(long)]
        emit_dot: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Write every automaton of a group file as DOT.
    ExportDot {
        #[command(flatten)]
        g: GroupArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Exploration depth for A′ and A″.
        #[arg(long, default_value_t = 8)]
        depth: usize,
    },
}

fn parse_radius(s: &str) -> Result<usize, String> {
    let r: usize = s.parse().map_err(|e| format!("{e}"))?;
    if r < 4 {
        return Err("radius must be at least 4".into());
    }
    Ok(r)
}

enum Fail {
    Invalid(String),
    Partial(String),
    Assert(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Invalid(_) => 1,
            Fail::Partial(_) => 2,
            Fail::Assert(_) => 3,
        }
    }
}

impl From<GroupError> for Fail {
    fn from(e: GroupError) -> Self {
        match e {
            GroupError::VerificationFailed(_) => Fail::Assert(e.to_string()),
            _ => Fail::Invalid(e.to_string()),
        }
    }
}

impl From<GeoError> for Fail {
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::CapTooLarge { .. } | GeoError::StabilityWarning { .. } | GeoError::OutOfBall { .. } => {
                Fail::Partial(format!("{e}; raise --radius"))
            }
            _ => Fail::Assert(e.to_string()),
        }
    }
}

impl From<DynError> for Fail {
    fn from(e: DynError) -> Self {
        match e {
            DynError::Geo(g) => g.into(),
            DynError::NotNormalForm(_) | DynError::NotAutomorphism(_) => Fail::Invalid(e.to_string()),
            _ => Fail::Partial(e.to_string()),
        }
    }
}

type Res = Result<u8, Fail>;

trait Render: Serialize {
    fn text(&self) -> String;
}

fn emit<T: Render>(fmt: Format, out: &T) {
    match fmt {
        Format::Text => print!("{}", out.text()),
        Format::Json => println!("{}", serde_json::to_string_pretty(out).expect("serializable")),
    }
}

struct Loaded {
    bytes: Vec<u8>,
    data: GroupData,
}

fn read_group(path: &Path) -> Result<Loaded, Fail> {
    let bytes = std::fs::read(path).map_err(|e| Fail::Invalid(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Fail::Invalid("group file is not UTF-8".into()))?;
    let data = load_group(&text)?;
    Ok(Loaded { bytes, data })
}

/// Like [`read_group`] but rejects invalid presentations and endomorphisms.
fn read_valid(path: &Path) -> Result<Loaded, Fail> {
    let l = read_group(path)?;
    let v = violations(&l.data);
    if !v.is_empty() {
        return Err(Fail::Invalid(v.join("\n")));
    }
    Ok(l)
}

fn violations(d: &GroupData) -> Vec<String> {
    let p = &d.presentation;
    let mut v = validate_presentation(p);
    if !v.is_empty() {
        return v;
    }
    for (name, e) in [("endomorphism", &d.endomorphism), ("endomorphism_inverse", &d.inverse)] {
        if let Some(e) = e {
            if let Err(err) = validate_endomorphism(p, e) {
                v.push(format!("{name}: {err}"));
            }
        }
    }
    if let (Some(phi), Some(psi)) = (&d.endomorphism, &d.inverse) {
        if v.is_empty() {
            if let Err(err) = check_inverse(p, phi, psi) {
                v.push(format!("endomorphism_inverse: {err}"));
            }
        }
    }
    v
}

fn cache_dir() -> PathBuf {
    if let Some(d) = std::env::var_os("VFFIX_CACHE_DIR") {
        return PathBuf::from(d);
    }
    if let Some(d) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(d).join("vffix");
    }
    if let Some(h) = std::env::var_os("HOME") {
        return PathBuf::from(h).join(".cache").join("vffix");
    }
    std::env::temp_dir().join("vffix")
}

/// Ball of radius `r`, read from the cache keyed by the file digest and
/// `r` when present. Unreadable or stale entries are rebuilt.
fn cached_ball(bytes: &[u8], d: &GroupData, r: usize) -> Ball {
    let digest: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
    let dir = cache_dir();
    let path = dir.join(format!("{digest}-r{r}.ball"));
    if let Ok(buf) = std::fs::read(&path) {
        if let Ok(b) = Ball::from_bytes(&d.presentation, &buf) {
            if b.radius == r {
                return b;
            }
        }
    }
    let b = build_ball(&d.presentation, r);
    if std::fs::create_dir_all(&dir).is_ok() {
        let tmp = dir.join(format!("{digest}-r{r}.{}.tmp", std::process::id()));
        if std::fs::write(&tmp, b.to_bytes()).is_ok() {
            let _ = std::fs::rename(&tmp, &path);
        }
    }
    b
}

fn geometry(l: &Loaded, r: usize) -> Result<Geometry, Fail> {
    Ok(Geometry::new(cached_ball(&l.bytes, &l.data, r))?)
}

fn write_file(path: &Path, s: &str) -> Result<(), Fail> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Fail::Invalid(format!("{}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, s).map_err(|e| Fail::Invalid(format!("{}: {e}", path.display())))
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.join(", ")
    }
}

// ---------------------------------------------------------------------------
// validate, nf, rewrite, ball, acceptor, boundary

#[derive(Serialize)]
struct ValidateOut {
    valid: bool,
    violations: Vec<String>,
}

impl Render for ValidateOut {
    fn text(&self) -> String {
        if self.valid {
            "valid\n".into()
        } else {
            self.violations.iter().map(|v| format!("{v}\n")).collect()
        }
    }
}

fn cmd_validate(cli: &Cli, g: &GroupArg) -> Res {
    let l = read_group(&g.group)?;
    let violations = violations(&l.data);
    let out = ValidateOut {
        valid: violations.is_empty(),
        violations,
    };
    emit(cli.format, &out);
    Ok(if out.valid { 0 } else { 1 })
}

#[derive(Serialize)]
struct NfOut {
    word: String,
    element: String,
    nf: String,
}

impl Render for NfOut {
    fn text(&self) -> String {
        format!("element: {}\nnf: {}\n", self.element, self.nf)
    }
}

fn cmd_nf(cli: &Cli, g: &GroupArg, word: &str) -> Res {
    let l = read_valid(&g.group)?;
    let geo = geometry(&l, cli.radius)?;
    let p = geo.presentation();
    let e = eval_str(p, word)?;
    let out = NfOut {
        word: word.into(),
        element: p.format_element(&e),
        nf: geo.alphabet().format_word(&geo.nf(&e)),
    };
    emit(cli.format, &out);
    Ok(0)
}

#[derive(Serialize)]
struct RewriteOut {
    k0: usize,
    n0: usize,
    cap: usize,
    rule_count: usize,
    rules: Vec<(String, String)>,
    confluent: bool,
    input: String,
    output: String,
}

impl Render for RewriteOut {
    fn text(&self) -> String {
        let mut s = format!(
            "K0: {}\nN0: {}\ncap: {}\nrules: {}\n",
            self.k0, self.n0, self.cap, self.rule_count
        );
        for (l, r) in &self.rules {
            let _ = writeln!(s, "  {l} -> {r}");
        }
        let _ = writeln!(s, "confluent: {}", if self.confluent { "yes" } else { "no" });
        let _ = writeln!(s, "{} => {}", self.input, self.output);
        s
    }
}

fn cmd_rewrite(cli: &Cli, g: &GroupArg, word: &str, show: bool) -> Res {
    let l = read_valid(&g.group)?;
    let geo = geometry(&l, cli.radius)?;
    let a = geo.alphabet();
    let w = a.parse_word(word).map_err(|e| Fail::Invalid(e.to_string()))?;
    let conf = check_confluence(&geo.rs, &geo.ball);
    let out = RewriteOut {
        k0: geo.consts.k0,
        n0: geo.consts.n0,
        cap: geo.consts.rule_length_cap,
        rule_count: geo.rs.len(),
        rules: if show {
            geo.rs.rules.iter().map(|(l, r)| (a.format_word(l), a.format_word(r))).collect()
        } else {
            Vec::new()
        },
        confluent: conf.is_confluent(),
        input: a.format_word(&w),
        output: a.format_word(&rewrite_nf(&geo.rs, &w)),
    };
    emit(cli.format, &out);
    if !out.confluent {
        eprintln!("rewriting system is not confluent on the ball; raise --radius");
        return Ok(2);
    }
    Ok(0)
}

#[derive(Serialize)]
struct BallOut {
    radius: usize,
    size: usize,
    spheres: Vec<usize>,
    k0: usize,
    n0: usize,
    cap: usize,
    elements: Vec<(String, String)>,
}

impl Render for BallOut {
    fn text(&self) -> String {
        let sph: Vec<String> = self.spheres.iter().map(|n| n.to_string()).collect();
        let mut s = format!(
            "radius: {}\nsize: {}\nspheres: {}\nK0: {}\nN0: {}\ncap: {}\n",
            self.radius,
            self.size,
            sph.join(" "),
            self.k0,
            self.n0,
            self.cap
        );
        for (nf, e) in &self.elements {
            let _ = writeln!(s, "{nf}\t{e}");
        }
        s
    }
}

fn cmd_ball(cli: &Cli, g: &GroupArg, show: bool) -> Res {
    let l = read_valid(&g.group)?;
    let geo = geometry(&l, cli.radius)?;
    let b = &geo.ball;
    let mut spheres = vec![0; b.radius + 1];
    for w in &b.nf {
        spheres[w.len()] += 1;
    }
    let elements = if show {
        b.nf.iter()
            .zip(&b.elems)
            .map(|(w, e)| (geo.alphabet().format_word(w), b.presentation.format_element(e)))
            .collect()
    } else {
        Vec::new()
    };
    emit(
        cli.format,
        &BallOut {
            radius: b.radius,
            size: b.len(),
            spheres,
            k0: geo.consts.k0,
            n0: geo.consts.n0,
            cap: geo.consts.rule_length_cap,
            elements,
        },
    );
    Ok(0)
}

#[derive(Serialize)]
struct AcceptorOut {
    states: usize,
    initial: u32,
    terminal: Vec<u32>,
    edges: Vec<String>,
    counts: Vec<usize>,
}

impl Render for AcceptorOut {
    fn text(&self) -> String {
        let t: Vec<String> = self.terminal.iter().map(|q| format!("q{q}")).collect();
        let c: Vec<String> = self.counts.iter().map(|n| n.to_string()).collect();
        let mut s = format!(
            "states: {}\ninitial: q{}\nterminal: {}\nwords by length: {}\n",
            self.states,
            self.initial,
            t.join(" "),
            c.join(" ")
        );
        for e in &self.edges {
            let _ = writeln!(s, "  {e}");
        }
        s
    }
}

fn edge_lines(d: &vffix::automata::Dfa, a: &InvAlphabet) -> Vec<String> {
    d.edges().map(|(p, x, q)| format!("q{p} -{}-> q{q}", a.name(x))).collect()
}

fn acceptor_out(geo: &Geometry) -> AcceptorOut {
    let acc = geo.acceptor.minimize();
    AcceptorOut {
        states: acc.num_states(),
        initial: acc.initial(),
        terminal: (0..acc.num_states() as u32).filter(|&q| acc.is_terminal(q)).collect(),
        edges: edge_lines(&acc, geo.alphabet()),
        counts: (0..=geo.ball.radius).map(|n| acc.words_of_length(n).len()).collect(),
    }
}

fn cmd_acceptor(cli: &Cli, g: &GroupArg, dot: Option<&Path>) -> Res {
    let l = read_valid(&g.group)?;
    let geo = geometry(&l, cli.radius)?;
    emit(cli.format, &acceptor_out(&geo));
    if let Some(path) = dot {
        write_file(path, &geo.acceptor.minimize().to_dot(geo.alphabet(), "acceptor", None))?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct BoundaryOut {
    infinite: bool,
    points: Vec<String>,
}

impl Render for BoundaryOut {
    fn text(&self) -> String {
        if self.infinite {
            format!("boundary: infinite\nwitnesses: {}\n", list(&self.points))
        } else {
            format!("boundary: {}\n", list(&self.points))
        }
    }
}

fn boundary_out(geo: &Geometry) -> Result<BoundaryOut, Fail> {
    let a = geo.alphabet();
    match boundary_points(&geo.acceptor) {
        Ok(pts) => Ok(BoundaryOut {
            infinite: false,
            points: pts.iter().map(|p| a.format_omega(p)).collect(),
        }),
        Err(GeoError::Automata(AutomataError::InfiniteOmegaLanguage { witnesses })) => Ok(BoundaryOut {
            infinite: true,
            points: witnesses.iter().map(|l| a.format_omega(&l.to_omega())).collect(),
        }),
        Err(e) => Err(e.into()),
    }
}

fn cmd_boundary(cli: &Cli, g: &GroupArg) -> Res {
    let l = read_valid(&g.group)?;
    let geo = geometry(&l, cli.radius)?;
    emit(cli.format, &boundary_out(&geo)?);
    Ok(0)
}

// ---------------------------------------------------------------------------
// fix-subgroup

#[derive(Serialize)]
struct PairOut {
    i: usize,
    j: usize,
    z: String,
    states: usize,
    partial: Option<String>,
}

#[derive(Serialize)]
struct FixSubgroupOut {
    y: Vec<(usize, usize)>,
    pairs: Vec<PairOut>,
    generators: Vec<String>,
    partial: Option<String>,
}

impl Render for FixSubgroupOut {
    fn text(&self) -> String {
        let y: Vec<String> = self.y.iter().map(|(i, j)| format!("({i},{j})")).collect();
        let mut s = format!("Y: {}\n", list(&y));
        for pa in &self.pairs {
            let _ = writeln!(s, "z({},{}) = {}  [{} states]", pa.i, pa.j, pa.z, pa.states);
        }
        let _ = writeln!(s, "generators: {}", list(&self.generators));
        let _ = writeln!(s, "partial: {}", self.partial.as_deref().unwrap_or("no"));
        s
    }
}

fn cmd_fix_subgroup(
    cli: &Cli,
    g: &GroupArg,
    gt_depth: Option<usize>,
    gt_horizon: Option<usize>,
    oracle_radius: usize,
    emit_dot: Option<&Path>,
) -> Res {
    let l = read_valid(&g.group)?;
    let phi = l.data.endo()?;
    let p = &l.data.presentation;
    let cfg = FixConfig {
        gt_depth,
        gt_horizon,
        radius: oracle_radius,
        threads: cli.threads,
        ..FixConfig::default()
    };
    let rep = fix_subgroup(p, phi, &cfg)?;
    let geo = geometry(&l, cli.radius)?;
    let fa = &p.free_alphabet;
    let out = FixSubgroupOut {
        y: rep.y.clone(),
        pairs: rep
            .pairs
            .iter()
            .map(|pa| PairOut {
                i: pa.i,
                j: pa.j,
                z: fa.format_word(&pa.z),
                states: pa.l.dfa.num_states(),
                partial: pa.l.partial.as_ref().map(|x| x.to_string()),
            })
            .collect(),
        generators: rep.generators.iter().map(|e| geo.alphabet().format_word(&geo.nf(e))).collect(),
        partial: rep.partial.as_ref().map(|x| x.to_string()),
    };
    emit(cli.format, &out);
    if let Some(dir) = emit_dot {
        for pa in &rep.pairs {
            write_file(
                &dir.join(format!("gt_{}_{}.dot", pa.i, pa.j)),
                &pa.l.to_dot(fa, &format!("B_{}_{}", pa.i, pa.j)),
            )?;
        }
    }
    Ok(if rep.is_partial() { 2 } else { 0 })
}

// ---------------------------------------------------------------------------
// fix, classify

#[derive(Serialize)]
struct RegularOut {
    point: String,
    u: String,
    alpha: String,
    tau_vanishes_from: Option<usize>,
    /// From the `τ = 1` certificate alone.
    attracting: bool,
    classification: Option<String>,
}

#[derive(Serialize)]
struct FixOut {
    radius: usize,
    depth: usize,
    b_phi: usize,
    history: Vec<usize>,
    states: usize,
    s_states: Vec<String>,
    dbl_states: Vec<String>,
    pruned: usize,
    dead_ends: usize,
    frontier: Vec<(String, String)>,
    finite_is_finite: bool,
    finite_listed_up_to: usize,
    finite: Vec<String>,
    singular_infinite: bool,
    singular: Vec<String>,
    regular: Vec<RegularOut>,
    classification_note: Option<String>,
    anomalies: Vec<String>,
    partial: bool,
}

impl Render for FixOut {
    fn text(&self) -> String {
        let h: Vec<String> = self.history.iter().map(|n| n.to_string()).collect();
        let mut s = format!(
            "radius: {}\ndepth: {}\nB_phi: {}\nreduction history: {}\n",
            self.radius,
            self.depth,
            self.b_phi,
            h.join(" ")
        );
        let _ = writeln!(
            s,
            "A': {} states, S = {{{}}}, pruned {}, dead ends {}",
            self.states,
            self.s_states.join(", "),
            self.pruned,
            self.dead_ends
        );
        let _ = writeln!(s, "A'': {{{}}}", self.dbl_states.join(", "));
        for (q, o) in &self.frontier {
            let _ = writeln!(s, "frontier {q}: {o}");
        }
        if self.finite_is_finite {
            let _ = writeln!(s, "finite: {}", list(&self.finite));
        } else {
            let _ = writeln!(
                s,
                "finite: infinite; up to length {}: {}",
                self.finite_listed_up_to,
                list(&self.finite)
            );
        }
        if self.singular_infinite {
            let _ = writeln!(s, "singular: infinite; e.g. {}", list(&self.singular));
        } else {
            let _ = writeln!(s, "singular: {}", list(&self.singular));
        }
        let pts: Vec<String> = self.regular.iter().map(|r| r.point.clone()).collect();
        let _ = writeln!(s, "regular: {}", list(&pts));
        for r in &self.regular {
            let cert = match r.tau_vanishes_from {
                Some(n) => format!("attracting, tau = 1 from n = {n}"),
                None => "tau does not vanish".into(),
            };
            let _ = writeln!(s, "  {} = {} . {}: {cert}", r.point, r.u, r.alpha);
            if let Some(c) = &r.classification {
                let _ = writeln!(s, "  {}: {c}", r.point);
            }
        }
        if let Some(n) = &self.classification_note {
            let _ = writeln!(s, "classification: {n}");
        }
        for a in &self.anomalies {
            let _ = writeln!(s, "anomaly: {a}");
        }
        let _ = writeln!(s, "partial: {}", if self.partial { "yes" } else { "no" });
        s
    }
}

/// Longest listed length when the finite fixed language is infinite.
const INFINITE_LISTING: usize = 2;

struct FixRun {
    geo: Geometry,
    consts: ExtConstants,
    rep: BoundaryFixReport,
}

fn run_fix(geo: Geometry, phi: &Endomorphism, inverse: Option<&Endomorphism>, depth: usize) -> Result<FixRun, Fail> {
    let consts = estimate_bphi(&geo, phi, inverse)?;
    let rep = analyze_fixed_points(&geo, phi, inverse, &consts, depth, depth)?;
    Ok(FixRun { geo, consts, rep })
}

fn fix_out(run: &FixRun, phi: &Endomorphism, inverse: Option<&Endomorphism>, classify: bool) -> FixOut {
    let FixRun { geo, consts, rep } = run;
    let a = geo.alphabet();
    let fa = &rep.automata;
    let reps: Vec<String> = fa.states.iter().map(|s| format!("{}ξ", a.format_word(&s.rep))).collect();
    let finite_listed_up_to = if rep.finite_fixed_is_finite {
        rep.enum_bound
    } else {
        INFINITE_LISTING.min(rep.enum_bound)
    };
    let finite = rep
        .finite_fixed
        .iter()
        .filter(|w| w.len() <= finite_listed_up_to)
        .map(|w| a.format_word(w))
        .collect();
    let (singular_infinite, singular) = match &rep.singular {
        Singular::Finite(v) => (false, v),
        Singular::Infinite(v) => (true, v),
    };
    let mut note = None;
    let regular = rep
        .regular
        .iter()
        .map(|r| {
            let classification = if classify {
                match classify_regular(geo, phi, inverse, consts, &r.point) {
                    Ok(c) => Some(c.to_string()),
                    Err(DynError::NotAutomorphism(m)) => {
                        note = Some(format!("unavailable, not an automorphism ({m})"));
                        None
                    }
                    Err(e) => Some(format!("unclassified ({e})")),
                }
            } else {
                None
            };
            RegularOut {
                point: a.format_omega(&r.point),
                u: a.format_word(&r.u),
                alpha: a.format_omega(&r.alpha),
                tau_vanishes_from: r.tau_vanishes_from,
                attracting: r.tau_vanishes_from.is_some(),
                classification,
            }
        })
        .collect();
    if classify && rep.regular.is_empty() {
        note = Some("no regular fixed points".into());
    }
    FixOut {
        radius: geo.ball.radius,
        depth: fa.depth,
        b_phi: consts.b_phi,
        history: consts.history.clone(),
        states: fa.states.len(),
        s_states: fa.s_states.iter().map(|&q| reps[q as usize].clone()).collect(),
        dbl_states: fa.dbl_states.iter().map(|&q| reps[q as usize].clone()).collect(),
        pruned: fa.pruned,
        dead_ends: fa.dead_ends,
        frontier: fa
            .frontier
            .iter()
            .map(|(q, o)| {
                let o = match o {
                    FrontierOutcome::Ray(al) => format!("ray {}", a.format_omega(al)),
                    FrontierOutcome::DeadEnd => "dead end".into(),
                    FrontierOutcome::Unresolved(m) => format!("unresolved ({m})"),
                };
                (reps[*q as usize].clone(), o)
            })
            .collect(),
        finite_is_finite: rep.finite_fixed_is_finite,
        finite_listed_up_to,
        finite,
        singular_infinite,
        singular: singular.iter().map(|p| a.format_omega(p)).collect(),
        regular,
        classification_note: note,
        anomalies: rep.anomalies.clone(),
        partial: rep.partial,
    }
}

fn write_fix_dots(dir: &Path, run: &FixRun) -> Result<(), Fail> {
    let fa = &run.rep.automata;
    write_file(&dir.join("aprime.dot"), &fa.aprime_dot(&run.geo))?;
    write_file(&dir.join("adblprime.dot"), &fa.adblprime_dot(&run.geo))
}

fn cmd_fix(cli: &Cli, args: &FixArgs, classify: bool) -> Res {
    let l = read_valid(&args.g.group)?;
    let phi = l.data.endo()?;
    let inverse = l.data.inverse.as_ref();
    let run = run_fix(geometry(&l, cli.radius)?, phi, inverse, args.depth)?;
    let mut out = fix_out(&run, phi, inverse, classify);
    if classify && inverse.is_none() {
        out.classification_note = Some("unavailable, the group file has no endomorphism_inverse".into());
    }
    emit(cli.format, &out);
    if let Some(dir) = &args.emit_dot {
        write_fix_dots(dir, &run)?;
    }
    Ok(if out.partial { 2 } else { 0 })
}

fn cmd_export_dot(cli: &Cli, g: &GroupArg, out: &Path, depth: usize) -> Res {
    let l = read_valid(&g.group)?;
    let geo = geometry(&l, cli.radius)?;
    write_file(
        &out.join("acceptor.dot"),
        &geo.acceptor.minimize().to_dot(geo.alphabet(), "acceptor", None),
    )?;
    let Some(phi) = &l.data.endomorphism else {
        return Ok(0);
    };
    let p = &l.data.presentation;
    let cfg = FixConfig {
        threads: cli.threads,
        ..FixConfig::default()
    };
    let rep = fix_subgroup(p, phi, &cfg)?;
    for pa in &rep.pairs {
        write_file(
            &out.join(format!("gt_{}_{}.dot", pa.i, pa.j)),
            &pa.l.to_dot(&p.free_alphabet, &format!("B_{}_{}", pa.i, pa.j)),
        )?;
    }
    let run = run_fix(geo, phi, l.data.inverse.as_ref(), depth)?;
    write_fix_dots(out, &run)?;
    Ok(if rep.is_partial() || run.rep.partial { 2 } else { 0 })
}

// ---------------------------------------------------------------------------
// demo

#[derive(Serialize)]
struct Check {
    name: String,
    expected: String,
    actual: String,
    ok: bool,
}

#[derive(Serialize)]
struct DemoOut {
    checks: Vec<Check>,
    ok: bool,
}

impl Render for DemoOut {
    fn text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            if c.ok {
                let _ = writeln!(s, "[ok] {}: {}", c.name, c.actual);
            } else {
                let _ = writeln!(s, "[MISMATCH] {}", c.name);
                let _ = writeln!(s, "  - expected: {}", c.expected);
                let _ = writeln!(s, "  + actual:   {}", c.actual);
            }
        }
        let _ = writeln!(s, "{}", if self.ok { "all checks passed" } else { "demo FAILED" });
        s
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn eq(&mut self, name: &str, expected: impl Into<String>, actual: impl Into<String>) {
        let (expected, actual) = (expected.into(), actual.into());
        self.0.push(Check {
            name: name.into(),
            ok: expected == actual,
            expected,
            actual,
        });
    }

    fn fail(&mut self, name: &str, err: String) {
        self.0.push(Check {
            name: name.into(),
            expected: "success".into(),
            actual: err,
            ok: false,
        });
    }
}

fn demo_text(corrupt: bool) -> String {
    if corrupt {
        ZXZ2.replace(r#"["a", "c", "a^-1""#, r#"["c", "a", "a^-1""#)
    } else {
        ZXZ2.to_string()
    }
}

fn power(x: &str, n: usize) -> String {
    if n == 0 {
        "1".into()
    } else {
        vec![x; n].join(" ")
    }
}

/// `a*(1 ∪ c) ∪ (a⁻¹)*(1 ∪ c⁻¹) ∪ b` up to length `n`, in shortlex order.
fn expected_language(a: &InvAlphabet, n: usize) -> Vec<String> {
    let mut ws: Vec<Word> = vec![Word::empty(), a.parse_word("b").unwrap()];
    for k in 1..=n {
        ws.push(a.parse_word(&power("a", k)).unwrap());
        ws.push(a.parse_word(&power("a^-1", k)).unwrap());
    }
    for k in 0..n {
        ws.push(a.parse_word(&format!("{} c", power("a", k))).unwrap());
        ws.push(a.parse_word(&format!("{} c^-1", power("a^-1", k))).unwrap());
    }
    ws.sort_by(|u, v| a.shortlex_cmp(u, v));
    ws.dedup();
    ws.iter().map(|w| a.format_word(w)).collect()
}

fn set_diff(exp: &[String], act: &[String]) -> (String, String) {
    let e: BTreeSet<&String> = exp.iter().collect();
    let x: BTreeSet<&String> = act.iter().collect();
    let missing: Vec<&str> = e.difference(&x).take(5).map(|s| s.as_str()).collect();
    let extra: Vec<&str> = x.difference(&e).take(5).map(|s| s.as_str()).collect();
    (
        format!("{} words; missing {}", exp.len(), missing.join(" | ")),
        format!("{} words; extra {}", act.len(), extra.join(" | ")),
    )
}

const DEMO_RADIUS: usize = 10;
const DEMO_DEPTH: usize = 10;
const DEMO_LANG: usize = 12;

fn run_demo(corrupt: bool, emit_dot: Option<&Path>) -> Result<DemoOut, Fail> {
    let text = demo_text(corrupt);
    let data = load_group(&text)?;
    let mut ck = Checks::default();
    let v = violations(&data);
    ck.eq("group file validates", "valid", if v.is_empty() { "valid".into() } else { v.join("; ") });
    if !v.is_empty() {
        return Ok(finish(ck));
    }
    let l = Loaded {
        bytes: text.into_bytes(),
        data,
    };
    let phi = l.data.endo()?.clone();
    let geo = match geometry(&l, DEMO_RADIUS) {
        Ok(g) => g,
        Err(Fail::Invalid(m) | Fail::Partial(m) | Fail::Assert(m)) => {
            ck.fail("geometry", m);
            return Ok(finish(ck));
        }
    };
    let a = geo.alphabet().clone();

    let lang: Vec<String> = {
        let mut ws: Vec<Word> = geo.acceptor.enumerate_language(DEMO_LANG).into_iter().collect();
        ws.sort_by(|u, v| a.shortlex_cmp(u, v));
        ws.iter().map(|w| a.format_word(w)).collect()
    };
    let exp = expected_language(&a, DEMO_LANG);
    if lang == exp {
        let desc = format!("a*(1 ∪ c) ∪ (a^-1)*(1 ∪ c^-1) ∪ b, {} words", lang.len());
        ck.eq("L up to length 12", desc.clone(), desc);
    } else {
        let (e, x) = set_diff(&exp, &lang);
        ck.eq("L up to length 12", e, x);
    }

    let acc = acceptor_out(&geo);
    let spine = [
        "q0 -a-> q1",
        "q0 -a^-1-> q2",
        "q0 -b-> q3",
        "q0 -c-> q3",
        "q0 -c^-1-> q3",
        "q1 -a-> q1",
        "q1 -c-> q3",
        "q2 -a^-1-> q2",
        "q2 -c^-1-> q3",
    ];
    ck.eq("acceptor states", "4", acc.states.to_string());
    let mut edges = acc.edges.clone();
    edges.sort();
    ck.eq("acceptor edges", spine.join(", "), edges.join(", "));

    match boundary_out(&geo) {
        Ok(b) => ck.eq(
            "boundary",
            "(a)^w, (a^-1)^w",
            if b.infinite { format!("infinite: {}", b.points.join(", ")) } else { b.points.join(", ") },
        ),
        Err(Fail::Invalid(m) | Fail::Partial(m) | Fail::Assert(m)) => ck.fail("boundary", m),
    }

    let consts = match estimate_bphi(&geo, &phi, None) {
        Ok(c) => c,
        Err(e) => {
            ck.fail("B_phi", e.to_string());
            return Ok(finish(ck));
        }
    };
    ck.eq("B_phi at radius 10", "0", consts.b_phi.to_string());

    let mut xis = vec![("1".to_string(), "(1, 1, 1, q0)".to_string()), ("b".into(), "(1, 1, 1, q3)".into())];
    for n in 1..=6 {
        xis.push((power("a", n), format!("(1, 1, {}, q1)", power("a", n))));
        xis.push((power("a^-1", n), format!("(1, 1, {}, q2)", power("a^-1", n))));
    }
    for (u, want) in xis {
        let w = a.parse_word(&u).unwrap();
        let got = match sigma_decomposition(&geo, &phi, &consts, &w) {
            Ok(d) => Xi::render(&d.xi(), &geo),
            Err(e) => e.to_string(),
        };
        ck.eq(&format!("{u}ξ"), want, got);
    }

    let run = match run_fix(geo, &phi, None, DEMO_DEPTH) {
        Ok(r) => r,
        Err(Fail::Invalid(m) | Fail::Partial(m) | Fail::Assert(m)) => {
            ck.fail("fixed point analysis", m);
            return Ok(finish(ck));
        }
    };
    let fa = &run.rep.automata;
    let rep_of = |q: u32| a.format_word(&fa.states[q as usize].rep);
    let mut aedges: Vec<String> = fa
        .aprime
        .edges()
        .map(|(p, x, q)| format!("{}ξ -{}-> {}ξ", rep_of(p), a.name(x), rep_of(q)))
        .collect();
    aedges.sort();
    let mut want: Vec<String> = vec!["1ξ -b-> bξ".into()];
    for n in 0..DEMO_DEPTH {
        for x in ["a", "a^-1"] {
            want.push(format!("{}ξ -{x}-> {}ξ", power(x, n), power(x, n + 1)));
        }
    }
    want.sort();
    ck.eq("A'_phi edges", want.join(", "), aedges.join(", "));
    let rays: Vec<String> = fa
        .frontier
        .iter()
        .map(|(q, o)| match o {
            FrontierOutcome::Ray(al) => format!("{}ξ: {}", rep_of(*q), a.format_omega(al)),
            FrontierOutcome::DeadEnd => format!("{}ξ: dead end", rep_of(*q)),
            FrontierOutcome::Unresolved(m) => format!("{}ξ: unresolved {m}", rep_of(*q)),
        })
        .collect();
    ck.eq(
        "A'_phi frontier",
        format!(
            "{}ξ: (a)^w, {}ξ: (a^-1)^w",
            power("a", DEMO_DEPTH),
            power("a^-1", DEMO_DEPTH)
        ),
        rays.join(", "),
    );

    let out = fix_out(&run, &phi, None, false);
    let mut fix: Vec<String> = out.finite.clone();
    if out.singular_infinite {
        fix.push("infinitely many singular points".into());
    } else {
        fix.extend(out.singular.iter().cloned());
    }
    fix.extend(out.regular.iter().map(|r| r.point.clone()));
    if !out.finite_is_finite {
        fix.push("...".into());
    }
    ck.eq("Fix Phi", "{1, b, (a)^w, (a^-1)^w}", format!("{{{}}}", fix.join(", ")));
    let cls: Vec<String> = run
        .rep
        .regular
        .iter()
        .map(|r| {
            let c = match tau_vanishes_from(&run.geo, &phi, &r.point) {
                Some(_) => "attractor",
                None => "unclassified",
            };
            format!("{} {c}", a.format_omega(&r.point))
        })
        .collect();
    ck.eq(
        "classification",
        "(a)^w attractor, (a^-1)^w attractor",
        cls.join(", "),
    );
    ck.eq("partial", "no", if run.rep.partial { "yes" } else { "no" });

    if let Some(dir) = emit_dot {
        write_file(
            &dir.join("acceptor.dot"),
            &run.geo.acceptor.minimize().to_dot(&a, "acceptor", None),
        )?;
        write_fix_dots(dir, &run)?;
    }
    Ok(finish(ck))
}

fn finish(ck: Checks) -> DemoOut {
    let ok = ck.0.iter().all(|c| c.ok);
    DemoOut { checks: ck.0, ok }
}

fn cmd_demo(cli: &Cli, emit_dot: Option<&Path>, corrupt: bool) -> Res {
    let out = run_demo(corrupt, emit_dot)?;
    emit(cli.format, &out);
    Ok(if out.ok { 0 } else { 3 })
}

fn run(cli: &Cli) -> Res {
    match &cli.cmd {
        Cmd::Validate(g) => cmd_validate(cli, g),
        Cmd::Nf { g, word } => cmd_nf(cli, g, word),
        Cmd::Rewrite { g, word, rules } => cmd_rewrite(cli, g, word, *rules),
        Cmd::Ball { g, list } => cmd_ball(cli, g, *list),
        Cmd::Acceptor { g, dot } => cmd_acceptor(cli, g, dot.as_deref()),
        Cmd::Boundary(g) => cmd_boundary(cli, g),
        Cmd::FixSubgroup {
            g,
            gt_depth,
            gt_horizon,
            oracle_radius,
            emit_dot,
        } => cmd_fix_subgroup(cli, g, *gt_depth, *gt_horizon, *oracle_radius, emit_dot.as_deref()),
        Cmd::Fix(a) => cmd_fix(cli, a, false),
        Cmd::Classify(a) => cmd_fix(cli, a, true),
        Cmd::DemoZxz2 { emit_dot, corrupt } => cmd_demo(cli, emit_dot.as_deref(), *corrupt),
        Cmd::ExportDot { g, out, depth } => cmd_export_dot(cli, g, out, *depth),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (Fail::Invalid(m) | Fail::Partial(m) | Fail::Assert(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
