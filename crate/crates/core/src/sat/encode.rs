// SPDX-License-Identifier: Apache-2.0

use crate::netlist::GateKind;

use super::{ClauseSink, Lit};

/// A net value during constant-aware encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Const(bool),
    Lit(Lit),
}

impl Signal {
    pub fn negate(self) -> Signal {
        match self {
            Signal::Const(b) => Signal::Const(!b),
            Signal::Lit(l) => Signal::Lit(!l),
        }
    }
}

fn encode_and<S: ClauseSink>(sink: &mut S, ins: &[Lit], out: Lit) {
    let mut big = Vec::with_capacity(ins.len() + 1);
    for &a in ins {
        sink.add_clause(&[!out, a]);
        big.push(!a);
    }
    big.push(out);
    sink.add_clause(&big);
}

fn encode_xor2<S: ClauseSink>(sink: &mut S, a: Lit, b: Lit, out: Lit) {
    sink.add_clause(&[!a, !b, !out]);
    sink.add_clause(&[a, b, !out]);
    sink.add_clause(&[a, !b, out]);
    sink.add_clause(&[!a, b, out]);
}

fn encode_xor<S: ClauseSink>(sink: &mut S, ins: &[Lit], out: Lit) {
    let mut acc = ins[0];
    for (i, &b) in ins.iter().enumerate().skip(1) {
        let target = if i + 1 == ins.len() {
            out
        } else {
            sink.new_var().pos()
        };
        encode_xor2(sink, acc, b, target);
        acc = target;
    }
}

/// Clauses forcing `out = kind(ins)`.
pub(crate) fn encode_gate_lits<S: ClauseSink>(sink: &mut S, kind: GateKind, ins: &[Lit], out: Lit) {
    match kind {
        GateKind::And => encode_and(sink, ins, out),
        GateKind::Nand => encode_and(sink, ins, !out),
        GateKind::Or => {
            let neg: Vec<Lit> = ins.iter().map(|&l| !l).collect();
            encode_and(sink, &neg, !out)
        }
        GateKind::Nor => {
            let neg: Vec<Lit> = ins.iter().map(|&l| !l).collect();
            encode_and(sink, &neg, out)
        }
        GateKind::Xor => encode_xor(sink, ins, out),
        GateKind::Xnor => encode_xor(sink, ins, !out),
        GateKind::Not => {
            sink.add_clause(&[out, ins[0]]);
            sink.add_clause(&[!out, !ins[0]]);
        }
        GateKind::Buf | GateKind::Dff => {
            sink.add_clause(&[!out, ins[0]]);
            sink.add_clause(&[out, !ins[0]]);
        }
    }
}

fn and_signal<S: ClauseSink>(sink: &mut S, ins: impl Iterator<Item = Signal>) -> Signal {
    let mut lits: Vec<Lit> = Vec::new();
    for s in ins {
        match s {
            Signal::Const(false) => return Signal::Const(false),
            Signal::Const(true) => {}
            Signal::Lit(l) => lits.push(l),
        }
    }
    lits.sort_unstable();
    lits.dedup();
    if lits.windows(2).any(|w| w[1] == !w[0]) {
        return Signal::Const(false);
    }
    match lits.len() {
        0 => Signal::Const(true),
        1 => Signal::Lit(lits[0]),
        _ => {
            let out = sink.new_var().pos();
            encode_and(sink, &lits, out);
            Signal::Lit(out)
        }
    }
}

fn xor_signal<S: ClauseSink>(sink: &mut S, ins: impl Iterator<Item = Signal>) -> Signal {
    let mut parity = false;
    let mut lits: Vec<Lit> = Vec::new();
    for s in ins {
        match s {
            Signal::Const(b) => parity ^= b,
            Signal::Lit(l) => {
                // normalize to positive literals, folding signs into parity
                parity ^= l.is_negative();
                lits.push(l.var().pos());
            }
        }
    }
    lits.sort_unstable();
    let mut reduced: Vec<Lit> = Vec::new();
    for l in lits {
        if reduced.last() == Some(&l) {
            reduced.pop();
        } else {
            reduced.push(l);
        }
    }
    let base = match reduced.len() {
        0 => Signal::Const(false),
        1 => Signal::Lit(reduced[0]),
        _ => {
            let out = sink.new_var().pos();
            encode_xor(sink, &reduced, out);
            Signal::Lit(out)
        }
    };
    if parity {
        base.negate()
    } else {
        base
    }
}

/// Encodes one gate over constant-or-literal inputs, folding constants and
/// reusing literals where possible. Inverters cost nothing.
pub fn encode_gate<S: ClauseSink>(sink: &mut S, kind: GateKind, ins: &[Signal]) -> Signal {
    match kind {
        GateKind::And => and_signal(sink, ins.iter().copied()),
        GateKind::Nand => and_signal(sink, ins.iter().copied()).negate(),
        GateKind::Or => and_signal(sink, ins.iter().map(|s| s.negate())).negate(),
        GateKind::Nor => and_signal(sink, ins.iter().map(|s| s.negate())),
        GateKind::Xor => xor_signal(sink, ins.iter().copied()),
        GateKind::Xnor => xor_signal(sink, ins.iter().copied()).negate(),
        GateKind::Not => ins[0].negate(),
        GateKind::Buf | GateKind::Dff => ins[0],
    }
}
