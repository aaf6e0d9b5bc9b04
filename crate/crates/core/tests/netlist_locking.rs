// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;

use common::*;
use platsec_core::locking::{
    compute_ier, compute_ker, compute_output_corruptibility, insert_random_locking,
    CorruptibilityMode, LockedCircuit, LockingKey,
};
use platsec_core::netlist::{extract_metadata, parse_bench, write_bench, Circuit, GateKind};
use proptest::prelude::*;

fn gate_multiset(c: &Circuit) -> BTreeMap<(GateKind, Vec<String>, String), usize> {
    let mut m = BTreeMap::new();
    for g in c.gates() {
        let ins = g
            .inputs
            .iter()
            .map(|&i| c.net_name(i).to_string())
            .collect();
        *m.entry((g.kind, ins, c.net_name(g.output).to_string()))
            .or_insert(0) += 1;
    }
    m
}

fn gate_lines(text: &str) -> usize {
    text.lines()
        .filter(|l| l.contains('=') && !l.trim_start().starts_with('#'))
        .count()
}

#[test]
fn c17_counts() {
    let c = load("c17");
    assert_eq!(c.gates().len(), gate_lines(&bench_text("c17")));
    assert_eq!(c.count_kind(GateKind::Nand), 6);
    assert_eq!(c.primary_inputs().len(), 5);
    assert_eq!(c.primary_outputs().len(), 2);
}

#[test]
fn bundled_round_trip() {
    for name in ["c17", "c432", "c499", "c880", "s27", "s1488_synth"] {
        let c = load(name);
        let back = parse_bench(name, &write_bench(&c)).unwrap();
        assert_eq!(gate_multiset(&c), gate_multiset(&back), "{name}");
        let pis = |c: &Circuit| {
            c.primary_inputs()
                .iter()
                .map(|&n| c.net_name(n).to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(pis(&c), pis(&back));
    }
}

#[test]
fn c17_truth_table() {
    // N22 = (N1 & N3) | (N2 & !(N3 & N6)), N23 = (N2 & !(N3 & N6)) | (!(N3 & N6) & N7)
    let c = load("c17");
    for p in 0..32u64 {
        let x = bits(p, 5);
        let (n1, n2, n3, n6, n7) = (x[0], x[1], x[2], x[3], x[4]);
        let n11 = !(n3 && n6);
        let expect = vec![(n1 && n3) || (n2 && n11), (n2 && n11) || (n11 && n7)];
        assert_eq!(c.evaluate(&x, &[]).unwrap().outputs, expect, "pattern {p}");
    }
}

#[test]
fn metadata_counts_gate_lines() {
    for name in ["c499", "c880", "c1355"] {
        let c = load(name);
        let meta = extract_metadata(&c, 0);
        assert_eq!(meta.num_gates, gate_lines(&bench_text(name)), "{name}");
    }
}

#[test]
fn metadata_of_a_404_gate_design() {
    let mut text = String::from("INPUT(a)\nINPUT(b)\nOUTPUT(g403)\ng0 = AND(a, b)\n");
    for i in 1..404 {
        text.push_str(&format!("g{i} = NAND(g{}, a)\n", i - 1));
    }
    let c = parse_bench("c880_like", &text).unwrap();
    assert_eq!(extract_metadata(&c, 8).num_gates, 404);
}

/// Core PI vector for data inputs `x` and key `k`, built from net names.
fn core_pis(locked: &LockedCircuit, original: &Circuit, x: &[bool], k: &[bool]) -> Vec<bool> {
    let core = locked.core();
    core.primary_inputs()
        .iter()
        .map(|&n| {
            let name = core.net_name(n);
            match name.strip_prefix("keyinput") {
                Some(idx) => k[idx.parse::<usize>().unwrap()],
                None => {
                    let pos = original
                        .primary_inputs()
                        .iter()
                        .position(|&m| original.net_name(m) == name)
                        .unwrap();
                    x[pos]
                }
            }
        })
        .collect()
}

fn locked_outputs(locked: &LockedCircuit, original: &Circuit, x: &[bool], k: &[bool]) -> Vec<bool> {
    naive_response(locked.core(), &core_pis(locked, original, x, k), &[]).0
}

#[test]
fn c17_k4_seed7() {
    let c = load("c17");
    let locked = insert_random_locking(&c, 4, 7).unwrap();
    let mut sites: Vec<_> = locked.lock_sites().iter().map(|s| s.net).collect();
    sites.sort();
    sites.dedup();
    assert_eq!(sites.len(), 4);
    let key = locked.correct_key().bits().to_vec();
    for p in 0..32 {
        let x = bits(p, 5);
        assert_eq!(
            locked_outputs(&locked, &c, &x, &key),
            naive_response(&c, &x, &[]).0
        );
    }
}

#[test]
fn locked_c17_wrong_key_matches_substitution() {
    let c = load("c17");
    let locked = insert_random_locking(&c, 4, 11).unwrap();
    let wrong: Vec<bool> = locked.correct_key().bits().iter().map(|b| !b).collect();
    let key = LockingKey::new(wrong.clone()).unwrap();
    for p in 0..32 {
        let x = bits(p, 5);
        let lib = locked.evaluate_locked(&key, &x, &[]).unwrap().outputs;
        assert_eq!(lib, locked_outputs(&locked, &c, &x, &wrong));
    }
}

#[test]
fn corruptibility_double_loop() {
    let c = load("c17");
    let locked = insert_random_locking(&c, 2, 3).unwrap();
    let correct = locked.correct_key().to_index();
    let mut bad = 0usize;
    for k in (0..4u64).filter(|&k| k != correct) {
        for p in 0..32 {
            let x = bits(p, 5);
            if locked_outputs(&locked, &c, &x, &bits(k, 2)) != naive_response(&c, &x, &[]).0 {
                bad += 1;
            }
        }
    }
    let cr = compute_output_corruptibility(&locked, CorruptibilityMode::Exhaustive).unwrap();
    assert!((cr.value - bad as f64 / 96.0).abs() < 1e-12);
}

#[test]
fn ker_and_ier_brute_force() {
    let c = load("c17");
    let locked = insert_random_locking(&c, 3, 5).unwrap();
    let correct = locked.correct_key().to_index();
    let wrong = (correct + 3) % 8;
    let kb = bits(wrong, 3);
    let ker_bf = (0..32)
        .filter(|&p| {
            let x = bits(p, 5);
            locked_outputs(&locked, &c, &x, &kb) != naive_response(&c, &x, &[]).0
        })
        .count() as f64
        / 32.0;
    let ker = compute_ker(&locked, &LockingKey::new(kb.clone()).unwrap()).unwrap();
    assert!((ker - ker_bf).abs() < 1e-12);

    let m = vec![true, false, true, false, true];
    let good = naive_response(&c, &m, &[]).0;
    let ier_bf = (0..8u64)
        .filter(|&k| k != correct && locked_outputs(&locked, &c, &m, &bits(k, 3)) != good)
        .count() as f64
        / 7.0;
    assert!((compute_ier(&locked, &m).unwrap() - ier_bf).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn topological_eval_equals_fixpoint(seed in any::<u64>(), gates in 1usize..100, ffs in 0usize..4, pattern in any::<u64>()) {
        let c = random_circuit(seed, 6, gates, 3, ffs);
        let x = bits(pattern, 6);
        let s = bits(pattern >> 6, ffs);
        let e = c.evaluate(&x, &s).unwrap();
        let (outs, ns) = naive_response(&c, &x, &s);
        prop_assert_eq!(e.outputs, outs);
        prop_assert_eq!(e.next_state, ns);
    }

    #[test]
    fn write_parse_round_trip(seed in any::<u64>(), gates in 1usize..60, ffs in 0usize..4) {
        let c = random_circuit(seed, 4, gates, 2, ffs);
        let back = parse_bench(c.name(), &write_bench(&c)).unwrap();
        prop_assert_eq!(gate_multiset(&c), gate_multiset(&back));
    }

    #[test]
    fn correct_key_preserves_function(seed in any::<u64>(), k in 1usize..6) {
        let c = random_circuit(seed, 5, 30, 3, 0);
        let locked = insert_random_locking(&c, k, seed ^ 0x55).unwrap();
        for p in 0..32 {
            let x = bits(p, 5);
            let e = locked.evaluate_locked(locked.correct_key(), &x, &[]).unwrap();
            prop_assert_eq!(e.outputs, c.evaluate(&x, &[]).unwrap().outputs);
        }
    }

    #[test]
    fn corruptibility_is_mean_ker(seed in any::<u64>(), k in 1usize..5) {
        let c = random_circuit(seed, 6, 25, 2, 0);
        let locked = insert_random_locking(&c, k, seed).unwrap();
        let correct = locked.correct_key().to_index();
        let kers: Vec<f64> = (0..1u64 << k)
            .filter(|&w| w != correct)
            .map(|w| compute_ker(&locked, &LockingKey::from_index(w, k)).unwrap())
            .collect();
        let mean = kers.iter().sum::<f64>() / kers.len() as f64;
        let cr = compute_output_corruptibility(&locked, CorruptibilityMode::Exhaustive).unwrap();
        prop_assert!((cr.value - mean).abs() < 1e-12);
    }

    #[test]
    fn locking_is_deterministic(seed in any::<u64>()) {
        let c = load("c432");
        let a = insert_random_locking(&c, 8, seed).unwrap();
        let b = insert_random_locking(&c, 8, seed).unwrap();
        prop_assert_eq!(a.lock_sites(), b.lock_sites());
        prop_assert_eq!(a.correct_key(), b.correct_key());
    }
}
