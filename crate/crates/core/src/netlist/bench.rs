// SPDX-License-Identifier: Apache-2.0

//! ISCAS `.bench` reader and writer.

use std::fmt::Write as _;

use super::{Circuit, CircuitBuilder, GateKind, NetlistError};

fn syntax(line: usize, message: impl Into<String>) -> NetlistError {
    NetlistError::Syntax {
        line,
        message: message.into(),
    }
}

fn valid_net_name(s: &str) -> bool {
    !s.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ',' | '=' | '#'))
}

/// Splits `KEYWORD(args)` into the keyword and the raw argument list.
fn split_call(s: &str, line: usize) -> Result<(&str, Vec<&str>), NetlistError> {
    let open = s
        .find('(')
        .ok_or_else(|| syntax(line, format!("expected `(` in `{s}`")))?;
    if !s.ends_with(')') {
        return Err(syntax(line, format!("expected `)` at end of `{s}`")));
    }
    let keyword = s[..open].trim();
    let inner = &s[open + 1..s.len() - 1];
    if inner.contains('(') || inner.contains(')') {
        return Err(syntax(line, "nested parentheses"));
    }
    let args: Vec<&str> = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    for a in &args {
        if !valid_net_name(a) {
            return Err(syntax(line, format!("invalid net name `{a}`")));
        }
    }
    Ok((keyword, args))
}

/// Parses bench source. Gates keep source order; nets may be referenced
/// before they are defined.
pub fn parse_bench(name: &str, text: &str) -> Result<Circuit, NetlistError> {
    let mut builder = CircuitBuilder::new(name);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(eq) = content.find('=') {
            let out = content[..eq].trim();
            if !valid_net_name(out) {
                return Err(syntax(line, format!("invalid net name `{out}`")));
            }
            let (kw, args) = split_call(content[eq + 1..].trim(), line)?;
            let kind = GateKind::from_bench_name(kw)
                .ok_or_else(|| syntax(line, format!("unknown gate type `{kw}`")))?;
            builder.add_gate_at(kind, &args, out, Some(line));
        } else {
            let (kw, args) = split_call(content, line)?;
            if args.len() != 1 {
                return Err(syntax(line, format!("{kw} takes exactly one net")));
            }
            match kw.to_ascii_uppercase().as_str() {
                "INPUT" => builder.add_input_at(args[0], Some(line)),
                "OUTPUT" => builder.add_output_at(args[0], Some(line)),
                _ => return Err(syntax(line, format!("unknown declaration `{kw}`"))),
            };
        }
    }
    builder.build()
}

/// Serializes `circuit`: inputs, outputs, then gates in gate order.
pub fn write_bench(circuit: &Circuit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", circuit.name());
    let _ = writeln!(
        out,
        "# {} inputs, {} outputs, {} flip-flops, {} gates",
        circuit.primary_inputs().len(),
        circuit.primary_outputs().len(),
        circuit.flip_flops().len(),
        circuit.num_logic_gates()
    );
    for &pi in circuit.primary_inputs() {
        let _ = writeln!(out, "INPUT({})", circuit.net_name(pi));
    }
    for &po in circuit.primary_outputs() {
        let _ = writeln!(out, "OUTPUT({})", circuit.net_name(po));
    }
    for g in circuit.gates() {
        let ins: Vec<&str> = g.inputs.iter().map(|&n| circuit.net_name(n)).collect();
        let _ = writeln!(
            out,
            "{} = {}({})",
            circuit.net_name(g.output),
            g.kind.bench_name(),
            ins.join(", ")
        );
    }
    out
}
