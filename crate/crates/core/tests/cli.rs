use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn example(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn vffix(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vffix"))
        .args(args)
        .env("VFFIX_CACHE_DIR", cache)
        .output()
        .expect("run vffix")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn cache() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn validate_reports_violations() {
    let c = cache();
    let o = vffix(c.path(), &["validate", "--group", &example("zxz2.group")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "valid\n");

    let o = vffix(c.path(), &["validate", "--group", &example("broken_assoc.group")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("associativity"), "{}", stdout(&o));

    let o = vffix(c.path(), &["validate", "--group", &example("broken_no_inverse.group")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stdout(&o).is_empty());

    let bad = c.path().join("missing.group");
    std::fs::write(&bad, r#"{"version": 1, "coset_count": 1}"#).unwrap();
    let o = vffix(c.path(), &["validate", "--group", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing field `free_generators`"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 1"));
}

#[test]
fn radius_below_four_is_rejected() {
    let c = cache();
    let o = vffix(c.path(), &["ball", "--group", &example("zxz2.group"), "--radius", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at least 4"));
}

#[test]
fn geodesic_commands() {
    let c = cache();
    let g = example("zxz2.group");
    let o = vffix(c.path(), &["nf", "--group", &g, "a b a"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "element: (a a, 1)\nnf: a c\n");

    let o = vffix(c.path(), &["rewrite", "--group", &g, "c c b a^-1"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("cap: 3\n") && s.contains("confluent: yes\n"), "{s}");
    assert!(s.ends_with("c c b a^-1 => c\n"), "{s}");

    let o = vffix(c.path(), &["ball", "--group", &g, "--radius", "6"]);
    assert!(stdout(&o).contains("spheres: 1 5 4 4 4 4 4\n"));

    let dot = c.path().join("acc.dot");
    let o = vffix(c.path(), &["acceptor", "--group", &g, "--dot", dot.to_str().unwrap()]);
    assert!(stdout(&o).starts_with("states: 4\n"));
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));

    let o = vffix(c.path(), &["boundary", "--group", &g]);
    assert_eq!(stdout(&o), "boundary: (a)^w, (a^-1)^w\n");
    let o = vffix(c.path(), &["boundary", "--group", &example("f2_ab.group"), "--radius", "6"]);
    assert!(stdout(&o).starts_with("boundary: infinite\n"));
}

#[test]
fn ball_cache_is_used() {
    let c = cache();
    let g = example("dinf_swap.group");
    let first = vffix(c.path(), &["ball", "--group", &g, "--radius", "7", "--list"]);
    let files: Vec<PathBuf> = std::fs::read_dir(c.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let name = files[0].file_name().unwrap().to_str().unwrap().to_string();
    assert!(name.ends_with("-r7.ball") && name.len() == 64 + "-r7.ball".len(), "{name}");
    let second = vffix(c.path(), &["ball", "--group", &g, "--radius", "7", "--list"]);
    assert_eq!(first.stdout, second.stdout);
    // a damaged entry is rebuilt
    std::fs::write(&files[0], b"garbage").unwrap();
    let third = vffix(c.path(), &["ball", "--group", &g, "--radius", "7", "--list"]);
    assert_eq!(first.stdout, third.stdout);
}

#[test]
fn fix_subgroup_generators() {
    let c = cache();
    let cases = [
        ("zxz2.group", "generators: b\n"),
        ("f2_identity.group", "generators: a, b\n"),
        ("f2_swap.group", "generators: none\n"),
    ];
    for (name, want) in cases {
        let o = vffix(c.path(), &["fix-subgroup", "--group", &example(name), "--radius", "8"]);
        assert_eq!(o.status.code(), Some(0), "{name}");
        let s = stdout(&o);
        assert!(s.contains(want), "{name}: {s}");
        assert!(s.starts_with("Y: ") && s.ends_with("partial: no\n"), "{name}: {s}");
    }
    let o = vffix(
        c.path(),
        &["fix-subgroup", "--group", &example("zxz2.group"), "--radius", "8", "--threads", "2"],
    );
    assert!(stdout(&o).contains("z(0,0) = 1"));
}

#[test]
fn partial_results_exit_two() {
    let c = cache();
    let o = vffix(
        c.path(),
        &["fix-subgroup", "--group", &example("f2_ab.group"), "--radius", "8", "--gt-depth", "1"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("partial: depth exceeded"));
    let o = vffix(c.path(), &["fix", "--group", &example("f2_ab.group"), "--radius", "8", "--depth", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).ends_with("partial: yes\n"));
}

#[test]
fn fix_inventory() {
    let c = cache();
    let o = vffix(c.path(), &["fix", "--group", &example("zxz2.group")]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for line in [
        "B_phi: 0\n",
        "finite: 1, b\n",
        "singular: none\n",
        "regular: (a)^w, (a^-1)^w\n",
        "(a)^w = 1 . (a)^w: attracting, tau = 1 from n = 0\n",
        "(a^-1)^w = 1 . (a^-1)^w: attracting, tau = 1 from n = 0\n",
    ] {
        assert!(s.contains(line), "{line}: {s}");
    }

    let o = vffix(c.path(), &["fix", "--group", &example("f2_identity.group"), "--radius", "8"]);
    assert!(stdout(&o).contains("singular: infinite"));

    let o = vffix(c.path(), &["fix", "--group", &example("f2_swap.group"), "--radius", "8"]);
    let s = stdout(&o);
    assert!(s.contains("finite: 1\nsingular: none\nregular: none\n"), "{s}");
}

#[test]
fn classify_needs_an_inverse() {
    let c = cache();
    let o = vffix(c.path(), &["classify", "--group", &example("zxz2.group"), "--radius", "8"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("classification: unavailable, the group file has no endomorphism_inverse"));
    let o = vffix(c.path(), &["classify", "--group", &example("f2_ab.group"), "--radius", "8"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("classification: no regular fixed points"));
}

#[test]
fn json_output_is_deterministic() {
    let c = cache();
    let args = ["fix", "--group", &example("zxz2.group"), "--format", "json"];
    let a = vffix(c.path(), &args);
    let b = vffix(c.path(), &args);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["finite"], serde_json::json!(["1", "b"]));
    assert_eq!(v["regular"][0]["point"], "(a)^w");
    assert_eq!(v["regular"][0]["tau_vanishes_from"], 0);
    assert_eq!(v["partial"], false);
}

#[test]
fn demo_runs_and_detects_corruption() {
    let c = cache();
    let dots = c.path().join("dots");
    let o = vffix(c.path(), &["demo-zxz2", "--emit-dot", dots.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let s = stdout(&o);
    assert!(!s.contains("MISMATCH"));
    assert!(s.contains("[ok] Fix Phi: {1, b, (a)^w, (a^-1)^w}\n"));
    assert!(s.ends_with("all checks passed\n"));
    for f in ["acceptor.dot", "aprime.dot", "adblprime.dot"] {
        let d = std::fs::read_to_string(dots.join(f)).unwrap();
        assert!(d.starts_with("digraph ") && d.trim_end().ends_with('}'), "{f}");
    }

    let o = vffix(c.path(), &["demo-zxz2", "--corrupt"]);
    assert_eq!(o.status.code(), Some(3));
    let s = stdout(&o);
    assert!(s.contains("[MISMATCH] L up to length 12\n  - expected:"), "{s}");
    assert!(s.contains("  + actual:"));
    assert!(s.ends_with("demo FAILED\n"));
}

#[test]
fn export_dot_writes_every_automaton() {
    let c = cache();
    let out = c.path().join("out");
    let o = vffix(
        c.path(),
        &["export-dot", "--group", &example("zxz2.group"), "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    for f in ["acceptor.dot", "gt_0_0.dot", "gt_1_0.dot", "aprime.dot", "adblprime.dot"] {
        assert!(std::fs::read_to_string(out.join(f)).unwrap().starts_with("digraph "), "{f}");
    }
}
