// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::HashSet;

use common::*;
use platsec_core::locking::{insert_random_locking, LockedCircuit, LockingKey};
use platsec_core::netlist::Circuit;
use platsec_core::platform::{
    build_compactor, build_decompressor, compose_platform_frame, frame, platform_attack_model,
    PlatformModel, ScanOracle, ScanTopology,
};
use platsec_core::sat::{
    parse_dimacs, sat_attack, tseitin_encode, AttackBudget, AttackModel, AttackStatus,
    CircuitOracle, Lit, Oracle, SolveResult, SolverBackend,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn nine_flip_flop_frame() {
    let c = random_circuit(9, 3, 40, 2, 9);
    let fm = frame(&c);
    assert_eq!(fm.frame.primary_inputs().len(), 3 + 9);
    assert_eq!(fm.frame.primary_outputs().len(), 2 + 9);
    assert!(fm.frame.flip_flops().is_empty());
}

#[test]
fn combinational_frame_is_unchanged() {
    let c = load("c432");
    let f = frame(&c).frame;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let x = random_bits(&mut rng, c.primary_inputs().len());
        assert_eq!(
            f.evaluate(&x, &[]).unwrap().outputs,
            c.evaluate(&x, &[]).unwrap().outputs
        );
    }
}

#[test]
fn frame_equals_one_clocked_step() {
    let c = random_circuit(20, 4, 20, 3, 5);
    let f = frame(&c).frame;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..100 {
        let x = random_bits(&mut rng, 4);
        let s = random_bits(&mut rng, 5);
        let (outs, ns) = naive_response(&c, &x, &s);
        let mut fx = x.clone();
        fx.extend(&s);
        let got = f.evaluate(&fx, &[]).unwrap().outputs;
        assert_eq!(got[..3], outs[..]);
        assert_eq!(got[3..], ns[..]);
    }
}

#[test]
fn decompressor_reachable_patterns() {
    let t = ScanTopology::new(4, 1, 2).unwrap();
    let d = build_decompressor(&t);
    let reach: HashSet<Vec<bool>> = (0..4)
        .map(|p| d.evaluate(&bits(p, 2), &[]).unwrap().outputs)
        .collect();
    assert_eq!(reach.len(), 4);
    for r in &reach {
        assert_eq!(r[0], r[1]);
        assert_eq!(r[2], r[3]);
    }
}

#[test]
fn compactor_groupwise_parity() {
    let t = ScanTopology::new(4, 1, 2).unwrap();
    let c = build_compactor(&t);
    for p in 0..16 {
        let x = bits(p, 4);
        assert_eq!(
            c.evaluate(&x, &[]).unwrap().outputs,
            vec![x[0] ^ x[1], x[2] ^ x[3]]
        );
    }
}

#[test]
fn nine_cells_three_chains_cr3() {
    let c = random_circuit(93, 2, 50, 1, 9);
    let t = ScanTopology::new(3, 3, 3).unwrap();
    let pm = compose_platform_frame(&frame(&c), &t).unwrap();
    assert_eq!(pm.scan_outputs.len(), 3);
    assert!(pm.scan_outputs.iter().all(|g| g.len() == 1));
    assert_eq!(pm.scan_inputs.len(), 3);
    assert!(pm.scan_inputs.iter().all(|g| g.len() == 1));
}

/// Composed outputs from the frame and separately evaluated compactors.
fn composed_oracle(
    c: &Circuit,
    t: &ScanTopology,
    direct: &[bool],
    scan: &[Vec<bool>],
) -> (Vec<bool>, Vec<Vec<bool>>) {
    let n_ff = c.flip_flops().len();
    let mut state = vec![false; n_ff];
    for (j, s) in state.iter_mut().enumerate() {
        let (ch, p) = t.cell_of(j);
        *s = scan[p][t.channel_of(ch)];
    }
    let (outs, ns) = naive_response(c, direct, &state);
    let comp = build_compactor(t);
    let groups = (0..t.chain_length)
        .map(|p| {
            let so: Vec<bool> = (0..t.num_chains)
                .map(|ch| match t.flip_flop_at(ch, p, n_ff) {
                    Some(j) => ns[j],
                    None => scan[p][t.channel_of(ch)],
                })
                .collect();
            naive_response(&comp, &so, &[]).0
        })
        .collect();
    (outs, groups)
}

fn evaluate_composed(
    pm: &PlatformModel,
    direct: &[bool],
    scan: &[Vec<bool>],
) -> (Vec<bool>, Vec<Vec<bool>>) {
    let circ = &pm.circuit;
    let mut pis = vec![false; circ.primary_inputs().len()];
    for (&n, &v) in pm.direct_inputs.iter().zip(direct) {
        pis[circ.input_position(n).unwrap()] = v;
    }
    for (g, nets) in pm.scan_inputs.iter().enumerate() {
        for (&n, &v) in nets.iter().zip(&scan[g]) {
            pis[circ.input_position(n).unwrap()] = v;
        }
    }
    let vals = circ.net_values(&pis, &[]).unwrap();
    let outs = pm.direct_outputs.iter().map(|&n| vals[n]).collect();
    let groups = pm
        .scan_outputs
        .iter()
        .map(|g| g.iter().map(|&n| vals[n]).collect())
        .collect();
    (outs, groups)
}

#[test]
fn composition_matches_groupwise_compactors() {
    for (seed, chains, cr, ffs) in [(1u64, 4, 2, 7), (2, 6, 3, 11), (3, 8, 4, 16), (4, 4, 1, 5)] {
        let c = random_circuit(seed, 3, 60, 2, ffs);
        let t = ScanTopology::for_flip_flops(ffs, chains, cr).unwrap();
        let pm = compose_platform_frame(&frame(&c), &t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let direct = random_bits(&mut rng, 3);
            let scan: Vec<Vec<bool>> = (0..t.chain_length)
                .map(|_| random_bits(&mut rng, t.external_channels))
                .collect();
            assert_eq!(
                evaluate_composed(&pm, &direct, &scan),
                composed_oracle(&c, &t, &direct, &scan)
            );
        }
    }
}

#[test]
fn cr1_composition_equals_frame_exhaustively() {
    let c = random_circuit(14, 4, 40, 2, 8);
    let t = ScanTopology::for_flip_flops(8, 4, 1).unwrap();
    let pm = compose_platform_frame(&frame(&c), &t).unwrap();
    for p in 0..1u64 << 12 {
        let x = bits(p, 12);
        let direct = &x[..4];
        let scan: Vec<Vec<bool>> = (0..t.chain_length)
            .map(|g| x[4 + g * 4..8 + g * 4].to_vec())
            .collect();
        let (outs, groups) = evaluate_composed(&pm, direct, &scan);
        let mut state = vec![false; 8];
        for (j, s) in state.iter_mut().enumerate() {
            let (ch, pos) = t.cell_of(j);
            *s = scan[pos][ch];
        }
        let (e_outs, e_ns) = naive_response(&c, direct, &state);
        assert_eq!(outs, e_outs);
        for j in 0..8 {
            let (ch, pos) = t.cell_of(j);
            assert_eq!(groups[pos][ch], e_ns[j]);
        }
    }
}

#[test]
fn coarser_compaction_distinguishes_fewer_pairs() {
    let distinguishable = |cr: usize| -> HashSet<(u32, u32)> {
        let comp = build_compactor(&ScanTopology::new(8, 1, cr).unwrap());
        let image: Vec<Vec<bool>> = (0..256)
            .map(|y| comp.evaluate(&bits(y, 8), &[]).unwrap().outputs)
            .collect();
        let mut s = HashSet::new();
        for a in 0..256u32 {
            for b in 0..256u32 {
                if image[a as usize] != image[b as usize] {
                    s.insert((a, b));
                }
            }
        }
        s
    };
    let sets: Vec<_> = [1, 2, 4, 8].map(distinguishable).into_iter().collect();
    for w in sets.windows(2) {
        assert!(w[1].is_subset(&w[0]));
        assert!(w[1].len() < w[0].len());
    }
}

#[test]
fn c17_cnf_matches_brute_force() {
    let c = load("c17");
    let f = tseitin_encode(&c).unwrap();
    for p in 0..32 {
        let x = bits(p, 5);
        let assumptions: Vec<Lit> = c
            .primary_inputs()
            .iter()
            .zip(&x)
            .map(|(&n, &v)| Lit::with_value(f.net_var(n).unwrap(), v))
            .collect();
        let SolveResult::Sat(m) = f.solve(&assumptions).unwrap() else {
            panic!("c17 CNF unsatisfiable under pattern {p}");
        };
        let outs: Vec<bool> = c
            .primary_outputs()
            .iter()
            .map(|&n| m[f.net_var(n).unwrap().index()])
            .collect();
        assert_eq!(outs, naive_response(&c, &x, &[]).0);
    }
}

fn satisfiable_by_enumeration(clauses: &[Vec<i64>], n: usize) -> bool {
    (0..1u64 << n).any(|a| {
        clauses.iter().all(|cl| {
            cl.iter().any(|&l| {
                let v = a >> (l.unsigned_abs() - 1) & 1 == 1;
                if l > 0 {
                    v
                } else {
                    !v
                }
            })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_3cnf_agrees_with_enumeration(
        clauses in prop::collection::vec(prop::collection::vec((1i64..=12, any::<bool>()), 3), 20..70),
    ) {
        let clauses: Vec<Vec<i64>> = clauses
            .into_iter()
            .map(|c| c.into_iter().map(|(v, neg)| if neg { -v } else { v }).collect())
            .collect();
        let mut text = format!("p cnf 12 {}\n", clauses.len());
        for c in &clauses {
            for l in c {
                text.push_str(&format!("{l} "));
            }
            text.push_str("0\n");
        }
        let f = parse_dimacs(&text).unwrap();
        let r = f.solve(&[]).unwrap();
        prop_assert_eq!(r.is_sat(), satisfiable_by_enumeration(&clauses, 12));
        if let SolveResult::Sat(m) = r {
            for c in &clauses {
                prop_assert!(c.iter().any(|&l| m[(l.unsigned_abs() - 1) as usize] == (l > 0)));
            }
        }
    }

    #[test]
    fn attack_soundness_and_progress(seed in any::<u64>(), k in 1usize..7) {
        let c = random_circuit(seed, 6, 40, 3, 0);
        let locked = insert_random_locking(&c, k, seed).unwrap();
        let model = AttackModel::from_locked(&locked).unwrap();
        let mut oracle = CircuitOracle::from_locked(&locked).unwrap();
        let r = sat_attack(&model, &mut oracle, &AttackBudget::default(), &SolverBackend::Builtin { seed }).unwrap();
        prop_assert_eq!(r.status, AttackStatus::Success);
        prop_assert!(r.iterations < 1 << k);
        let dips: HashSet<_> = r.dip_trace.iter().map(|d| d.input.clone()).collect();
        prop_assert_eq!(dips.len(), r.dip_trace.len());
        let key = r.recovered_key.unwrap();
        for p in 0..64 {
            let x = bits(p, 6);
            prop_assert_eq!(
                locked.evaluate_locked(&key, &x, &[]).unwrap().outputs,
                c.evaluate(&x, &[]).unwrap().outputs
            );
        }
    }
}

#[test]
fn tiny_k2_key_is_equivalent() {
    let c = load("c17");
    let locked = insert_random_locking(&c, 2, 1).unwrap();
    let model = AttackModel::from_locked(&locked).unwrap();
    let mut oracle = CircuitOracle::from_locked(&locked).unwrap();
    let r = sat_attack(
        &model,
        &mut oracle,
        &AttackBudget::default(),
        &SolverBackend::default(),
    )
    .unwrap();
    let key = r.recovered_key.unwrap();
    for p in 0..32 {
        let x = bits(p, 5);
        assert_eq!(
            locked.evaluate_locked(&key, &x, &[]).unwrap().outputs,
            locked
                .evaluate_locked(locked.correct_key(), &x, &[])
                .unwrap()
                .outputs
        );
    }
}

fn scan_attack(
    locked: &LockedCircuit,
    t: &ScanTopology,
    seed: u64,
) -> (usize, LockingKey, Vec<Vec<bool>>) {
    let (_, model) = platform_attack_model(locked, t).unwrap();
    let mut oracle = ScanOracle::new(locked, t).unwrap();
    let r = sat_attack(
        &model,
        &mut oracle,
        &AttackBudget::default(),
        &SolverBackend::Builtin { seed },
    )
    .unwrap();
    assert_eq!(r.status, AttackStatus::Success);
    let dips = r.dip_trace.iter().map(|d| d.input.clone()).collect();
    (r.iterations, r.recovered_key.unwrap(), dips)
}

#[test]
fn scan_attack_key_agrees_with_oracle_everywhere() {
    let c = load("s27");
    for cr in [1, 3] {
        let locked = insert_random_locking(&c, 5, 2).unwrap();
        let t = ScanTopology::for_flip_flops(3, 3, cr).unwrap();
        let (_, key, _) = scan_attack(&locked, &t, 0);
        let (_, model) = platform_attack_model(&locked, &t).unwrap();
        let mut oracle = ScanOracle::new(&locked, &t).unwrap();
        let w = oracle.input_width();
        assert!(w <= 16);
        for p in 0..1u64 << w {
            let x = bits(p, w);
            assert_eq!(
                model.evaluate(&key, &x).unwrap(),
                oracle.query(&x).unwrap(),
                "cr {cr} pattern {p}"
            );
        }
    }
}

#[test]
fn attack_replays_identically() {
    let c = load("s298_synth");
    let locked = insert_random_locking(&c, 8, 9).unwrap();
    let t = ScanTopology::for_flip_flops(c.flip_flops().len(), 4, 2).unwrap();
    assert_eq!(scan_attack(&locked, &t, 3), scan_attack(&locked, &t, 3));
}
