use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htnrefine"))
        .args(args)
        .env("HTNREFINE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_plane_ready() {
    let dom = fixture("logistics-small.htn");
    let o = run(&["plan", path(&dom), path(&fixture("plane-ready.inst"))]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let plan: Vec<&str> = out.lines().take_while(|l| !l.is_empty()).collect();
    assert_eq!(
        plan,
        [
            "load(pkg1,truck1,whA)",
            "drive(truck1,airpA)",
            "unload(pkg1,truck1,airpA)",
            "load(pkg1,plane1,airpA)",
            "fly(plane1,airpB)",
            "unload(pkg1,plane1,airpB)",
            "load(pkg1,truck2,airpB)",
            "drive(truck2,shopB)",
            "unload(pkg1,truck2,shopB)"
        ]
    );
    assert!(out.contains("(tree"));
}

#[test]
fn plan_failures() {
    let dom = fixture("logistics-small.htn");
    let o = run(&["plan", path(&dom), path(&fixture("plane-away.inst"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "plan",
        "--max-nodes",
        "1",
        path(&dom),
        path(&fixture("plane-ready.inst")),
    ]);
    assert_eq!(o.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.htn");
    fs::write(
        &bad,
        "(domain broken (predicates (p)) (operator (head (a)) (pre (q))",
    )
    .unwrap();
    let o = run(&["plan", path(&bad), path(&fixture("plane-ready.inst"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.htn"));
    let o = run(&["plan", path(&dom), "/nonexistent/x.inst"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&[
        "plan",
        "--budget-ms",
        "0",
        path(&dom),
        path(&fixture("plane-ready.inst")),
    ]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn tiplan_marks_inserted_steps() {
    let dom = fixture("logistics-small.htn");
    let o = run(&["tiplan", path(&dom), path(&fixture("plane-away.inst"))]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let inserted: Vec<&str> = out.lines().filter(|l| l.starts_with('+')).collect();
    assert_eq!(inserted, ["+fly(plane1,airpA)"]);
    assert_eq!(out.lines().nth(3), Some("+fly(plane1,airpA)"));

    let o = run(&["tiplan", path(&dom), path(&fixture("plane-ready.inst"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains('+'));

    let o = run(&[
        "tiplan",
        "--max-insertions",
        "0",
        path(&dom),
        path(&fixture("plane-away.inst")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn refine_then_plan_with_learned_methods() {
    let dom = fixture("logistics-small.htn");
    let dir = tempfile::tempdir().unwrap();
    let methods = dir.path().join("learned.methods");
    let audit = dir.path().join("audit.json");
    let o = run(&[
        "refine",
        path(&dom),
        path(&fixture("plane-away.inst")),
        "--out",
        methods.to_str().unwrap(),
        "--audit",
        audit.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(&methods).unwrap();
    assert_eq!(text.matches("(method\n").count(), 1);
    assert!(text.contains("(id m-air-ship-r1)"));
    assert!(text.contains("(t4 (fly ?plane ?loc1))"));
    assert!(text.contains("(t4 t1) (t4 t2) (t4 t3)"));
    let log: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&audit).unwrap()).unwrap();
    assert_eq!(log["instances"][0]["inserted"], 1);
    assert_eq!(log["instances"][0]["status"], "solved");

    let o = run(&[
        "plan",
        path(&dom),
        path(&fixture("plane-away.inst")),
        "--methods",
        methods.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("fly(plane1,airpA)"));
}

#[test]
fn refine_exit_codes() {
    let dom = fixture("logistics-small.htn");
    let o = run(&["refine", path(&dom), path(&fixture("plane-ready.inst"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "(methods)\n");

    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("plane-away.inst"))
        .unwrap()
        .replace("(package pkg1)", "");
    fs::write(dir.path().join("a.inst"), &text).unwrap();
    fs::write(
        dir.path().join("b.inst"),
        text.replace("plane-away", "other"),
    )
    .unwrap();
    let o = run(&[
        "refine",
        "--max-insertions",
        "2",
        path(&dom),
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&[
        "refine",
        "--prio",
        "nonsense",
        path(&dom),
        path(&fixture("plane-away.inst")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_accepts_planner_trees_and_rejects_tampering() {
    let dom = fixture("logistics-small.htn");
    let inst = fixture("plane-ready.inst");
    let o = run(&["plan", path(&dom), path(&inst)]);
    let out = stdout(&o);
    let tree = &out[out.find("(tree").unwrap()..];
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.tree");
    fs::write(&file, tree).unwrap();
    let o = run(&["validate", path(&dom), path(&inst), file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "valid\n");

    fs::write(&file, tree.replace("(n10 n11) ", "(n11 n10) ")).unwrap();
    let o = run(&["validate", path(&dom), path(&inst), file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!stdout(&o).is_empty());

    let o = run(&[
        "validate",
        path(&dom),
        path(&fixture("plane-away.inst")),
        file.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fmt_is_idempotent() {
    let dom = fixture("logistics-small.htn");
    let o = run(&["fmt", path(&dom)]);
    assert_eq!(o.status.code(), Some(0));
    let once = stdout(&o);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("d.htn");
    fs::write(&file, &once).unwrap();
    assert_eq!(stdout(&run(&["fmt", file.to_str().unwrap()])), once);

    let o = run(&[
        "fmt",
        path(&fixture("plane-ready.inst")),
        "--domain",
        path(&dom),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("(instance plane-ready"));
    let o = run(&["fmt", path(&fixture("plane-ready.inst"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_curve_csv() {
    let o = run(&["eval", "--preset", "MR-H", "--seed", "7", "--sizes", "0,10"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("train_size,solved,total,rate,methods_learned,wall_ms")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], "10");
    assert_eq!(rows[1][3], "1.0");

    let o = run(&["eval", "--test", "0", "--train", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "train_size,solved,total,rate,methods_learned,wall_ms\n"
    );
    let o = run(&["eval", "--preset", "MR-X"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["eval", "--benchmark", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}
