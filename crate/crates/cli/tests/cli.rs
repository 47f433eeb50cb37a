mod common;

use common::{args, det_invocations, liftlab, rand_invocations};

fn golden(name: &str) -> String {
    std::fs::read_to_string(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

#[test]
fn disc_of_xor_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("xor.g");
    std::fs::write(&g, "gadget v1\nlambda=2\n01\n10\n").unwrap();
    let r = liftlab(&args(&["disc", "--gadget", g.to_str().unwrap()]), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let want = golden("disc_xor.json").replace("@GADGET@", g.to_str().unwrap());
    assert_eq!(String::from_utf8(r.stdout).unwrap(), want);
}

#[test]
fn counterexample_toy_matches_golden_report() {
    let r = liftlab(&args(&["counterexample", "--toy", "4,1,2,3"]), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(String::from_utf8(r.stdout).unwrap(), golden("counterexample_toy.json"));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.g");
    std::fs::write(&bad, "gadget v1\nlambda=2\n01\n1x\n").unwrap();
    let bad = bad.to_str().unwrap();
    assert_eq!(liftlab(&args(&["disc", "--gadget", bad]), &[]).code, 2);
    assert_eq!(liftlab(&args(&["disc", "--gadget", "/nonexistent/g"]), &[]).code, 2);
    assert_eq!(liftlab(&args(&["disc", "--builtin", "xor:2", "--bogus"]), &[]).code, 2);
    assert_eq!(liftlab(&args(&["disc", "--builtin", "xor:2", "--mu-x", "1/2,1/3", "--mu-y", "1/2,1/2"]), &[]).code, 2);
    assert_eq!(liftlab(&args(&["counterexample", "--b", "1000"]), &[]).code, 0);
    let fail = liftlab(&args(&["counterexample", "--b", "100"]), &[]);
    assert_eq!(fail.code, 1);
    assert_eq!(fail.json()["passed"], false);
    assert_eq!(liftlab(&args(&["counterexample", "--b", "4"]), &[]).code, 2);
    assert_eq!(liftlab(&args(&["erlang", "--k", "0", "--t", "1"]), &[]).code, 2);
    assert_eq!(liftlab(&args(&["disc", "--builtin", "xor:2"]), &[("LIFTLAB_THREADS", "zero")]).code, 2);
}

#[test]
fn every_deterministic_suite_instance_passes() {
    let dir = tempfile::tempdir().unwrap();
    for inv in det_invocations(dir.path()) {
        let r = liftlab(&inv, &[]);
        assert_eq!(r.code, 0, "{inv:?}: {}", r.stderr);
        let j = r.json();
        assert_eq!(j["result"]["failures"], 0);
        for run in j["result"]["runs"].as_array().unwrap() {
            assert_ne!(run["valid"], false);
            assert_eq!(run["conserves"], true);
        }
    }
}

#[test]
fn csv_trace_has_one_row_per_event() {
    let dir = tempfile::tempdir().unwrap();
    let inv = det_invocations(dir.path()).swap_remove(1);
    let mut single = inv.clone();
    single.extend(args(&["--z", "10"]));
    let json = liftlab(&single, &[]).json();
    let events = json["result"]["runs"][0]["run"]["trace"].as_array().unwrap().len();
    assert!(events > 0);
    single.extend(args(&["--format", "csv"]));
    let csv = String::from_utf8(liftlab(&single, &[]).stdout).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("z,iteration,step,party"));
    assert_eq!(lines.count(), events);
}

#[test]
fn full_tree_agrees_with_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut inv = det_invocations(dir.path()).swap_remove(8);
    inv.push("--full-tree".into());
    let j = liftlab(&inv, &[]).json();
    let tree = &j["result"]["tree"];
    assert_eq!(tree["failure_leaves"], 0);
    assert!(tree["text"].as_str().unwrap().starts_with("decision-tree n=3"));
    assert!(tree["depth"].as_u64().unwrap() <= 3);
}

#[test]
fn randomized_reports_are_exact_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for inv in rand_invocations(dir.path()) {
        let r = liftlab(&inv, &[]);
        assert_eq!(r.code, 0, "{inv:?}: {}", r.stderr);
        let j = r.json();
        if j["result"]["mode"] == "exact" {
            assert_eq!(j["result"]["total_mass"], "1/1");
            assert_eq!(j["result"]["tv"]["halting_consistent"], true);
        } else {
            let total: u64 = j["result"]["counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
            assert_eq!(total, 300);
        }
    }
}

#[test]
fn tight_thresholds_halt_some_mass() {
    let dir = tempfile::tempdir().unwrap();
    let mut inv = rand_invocations(dir.path()).swap_remove(0);
    inv.extend(args(&["--kmsg", "0,0", "--kprt", "0,0"]));
    let j = liftlab(&inv, &[]).json();
    assert_ne!(j["result"]["halted_mass"], "0/1");
    assert_eq!(j["result"]["tv"]["halting_consistent"], true);
}

#[test]
fn thread_count_and_timing_flags() {
    let a = liftlab(&args(&["disc", "--builtin", "random:4:1"]), &[("LIFTLAB_THREADS", "1")]);
    let b = liftlab(&args(&["disc", "--builtin", "random:4:1"]), &[("LIFTLAB_THREADS", "4")]);
    assert_eq!(a.stdout, b.stdout);
    let t = liftlab(&args(&["disc", "--builtin", "xor:2", "--timing"]), &[]);
    assert!(t.json()["timing"]["seconds"].is_number());
    assert!(a.json().get("timing").is_none());
}

#[test]
fn output_flag_writes_the_report_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let r = liftlab(&args(&["erlang", "--k", "2", "--t", "3", "--output", out.to_str().unwrap()]), &[]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.is_empty());
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(j["result"]["tail"].as_f64().unwrap() > 0.0);
}
