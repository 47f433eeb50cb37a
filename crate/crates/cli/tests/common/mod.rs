//! Helpers shared by the CLI test targets: writing instance files and running the binary.

#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use liftlab::dist::UniformSubset;
use liftlab::suite::{det_suite, rand_suite};

pub struct Run {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.stdout).expect("report is JSON")
    }
}

pub fn liftlab(args: &[String], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_liftlab"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Run { code: out.status.code().unwrap_or(-1), stdout: out.stdout, stderr: String::from_utf8_lossy(&out.stderr).into_owned() }
}

pub fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

/// `lift-det` invocations over the whole deterministic suite, with the files written to `dir`.
pub fn det_invocations(dir: &Path) -> Vec<Vec<String>> {
    det_suite()
        .unwrap()
        .into_iter()
        .map(|inst| {
            let g = write(dir, &format!("{}.g", inst.name), &inst.gadget.to_text());
            let p = write(dir, &format!("{}.proto", inst.name), &inst.protocol.to_text());
            let s = write(dir, &format!("{}.search", inst.name), &inst.problem.to_text());
            args(&["lift-det", "--gadget", &g, "--protocol", &p, "--problem", &s])
        })
        .collect()
}

/// `lift-rand` exact and sampled invocations for every randomized instance at `z = 1…1`.
pub fn rand_invocations(dir: &Path) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for inst in rand_suite().unwrap() {
        let g = write(dir, &format!("{}.g", inst.name), &inst.gadget.to_text());
        let p = write(dir, &format!("{}.rproto", inst.name), &inst.protocol.to_text());
        let z = "1".repeat(inst.protocol.n());
        out.push(args(&["lift-rand", "--gadget", &g, "--protocol", &p, "--z", &z]));
        out.push(args(&["lift-rand", "--gadget", &g, "--protocol", &p, "--z", &z, "--mode", "sample", "--seed", "5", "--samples", "300"]));
    }
    out
}

/// Every subcommand at least once; the basis of the determinism check.
pub fn full_suite(dir: &Path) -> Vec<Vec<String>> {
    let y = write(dir, "y.support", &UniformSubset::from_points(2, 4, (0..16).filter(|p| p % 3 != 0).collect()).unwrap().to_text());
    let x = write(dir, "x.support", &UniformSubset::full(2, 4).unwrap().to_text());
    let mut all = vec![
        args(&["disc", "--builtin", "ip:8:2"]),
        args(&["disc", "--builtin", "random:4:3", "--mu-x", "1/2,1/4,1/8,1/8", "--mu-y", "1/3,1/3,1/6,1/6"]),
        args(&["reduce-product", "--builtin", "random:3:9", "--mu-x", "1/2,1/4,1/4", "--mu-y", "1/3,1/3,1/3"]),
        args(&["reduce-product", "--builtin", "xor:2", "--mu-x", "0.3,0.7", "--mu-y", "0.5,0.5", "--eps", "0.1"]),
        args(&["classify", "--builtin", "ip:4:2", "--support", &y, "--x", "1,2"]),
        args(&["mainlemma", "--builtin", "ip:4:2", "--x-support", &x, "--y-support", &y]),
        args(&["counterexample", "--b", "1000"]),
        args(&["counterexample", "--toy", "4,1,2,3"]),
        args(&["erlang", "--k", "4", "--delta", "30"]),
        args(&["erlang", "--sweep", "--format", "csv"]),
    ];
    all.extend(det_invocations(dir));
    all.extend(rand_invocations(dir));
    all
}
