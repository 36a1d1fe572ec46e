//! Ladder program representation and its text grammar.
//!
//! A program is an ordered list of rungs. Each rung is a power expression
//! followed by one or more output actions:
//!
//! ```text
//! rung    := expr "=>" action ("," action)*
//! expr    := and ("|" and)*             -- parallel branches
//! and     := atom ("&" atom)*           -- series elements
//! atom    := "NO(" addr ")"             -- normally-open contact
//!          | "NC(" addr ")"             -- normally-closed contact
//!          | "RT(" addr ")"             -- rising-edge contact
//!          | "TON(" name "," int ")"    -- on-delay timer, preset in ms
//!          | "CTU(" name "," int ")"    -- up counter with preset
//!          | CMP "(" operand "," operand ")"   -- LT LE GT GE EQ
//!          | "(" expr ")"
//! action  := "OUT(" addr ")" | "SET(" addr ")" | "RST(" addr ")"
//!          | "MOV(" operand "->" addr ")"
//!          | OP "(" operand "," operand "->" addr ")"   -- ADD SUB MUL
//!          | "SCL(" operand "," int "," int "->" addr ")"
//!          | "RSTC(" name ")"           -- reset a counter
//! operand := addr | int
//! addr    := "%IX"b"."n | "%QX"b"."n | "%IW"n | "%QW"n
//! ```
//!
//! In a series chain, TON and CTU take the accumulated power to their left
//! as their input and pass their done bit onward. Comparators read word
//! operands and AND their result into the chain. `OUT` drives its coil to
//! the rung power every scan; `SET`/`RST` and the data actions only act
//! when the rung is powered.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{AddressKind, LadderAddress, Table};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LadderError {
    #[error("rung {rung}: {message}")]
    Parse { rung: usize, message: String },
    #[error("rung {rung}: {address} is not valid here ({why})")]
    BadOperand { rung: usize, address: LadderAddress, why: &'static str },
    #[error("coil {address} written by rungs {first} and {second} (single-writer rule)")]
    MultipleWriters { address: LadderAddress, first: usize, second: usize },
    #[error("{kind} '{name}' instantiated more than once")]
    DuplicateInstance { kind: &'static str, name: String },
    #[error("RSTC resets unknown counter '{0}'")]
    UnknownCounter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Address(LadderAddress),
    Literal(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// Series elements evaluated left to right.
    And(Vec<Expr>),
    /// Parallel branches OR'd together.
    Or(Vec<Expr>),
    No(LadderAddress),
    Nc(LadderAddress),
    Rt(LadderAddress),
    Ton { name: String, preset_ms: u64 },
    Ctu { name: String, preset: u16 },
    Cmp { op: CmpOp, left: Operand, right: Operand },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Out(LadderAddress),
    Set(LadderAddress),
    Reset(LadderAddress),
    Mov { src: Operand, dst: LadderAddress },
    Arith { op: ArithOp, a: Operand, b: Operand, dst: LadderAddress },
    /// dst = src * out_hi / in_hi, saturating.
    Scale { src: Operand, in_hi: u16, out_hi: u16, dst: LadderAddress },
    ResetCounter(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rung {
    pub expr: Expr,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LadderProgram {
    pub rungs: Vec<Rung>,
}

impl LadderProgram {
    /// Parses and statically validates a program, one rung per line.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(source: &str) -> Result<Self, LadderError> {
        let mut rungs = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            rungs.push(parse_rung(line, i + 1)?);
        }
        let program = LadderProgram { rungs };
        program.validate()?;
        Ok(program)
    }

    pub fn parse_rungs(lines: &[String]) -> Result<Self, LadderError> {
        Self::parse(&lines.join("\n"))
    }

    /// Static checks: operand kinds, single writer per output, unique timer
    /// and counter instances, RSTC targets exist.
    pub fn validate(&self) -> Result<(), LadderError> {
        let mut writers: Vec<(LadderAddress, usize)> = Vec::new();
        let mut timers = BTreeSet::new();
        let mut counters = BTreeSet::new();

        for (idx, rung) in self.rungs.iter().enumerate() {
            let rung_no = idx + 1;
            validate_expr(&rung.expr, rung_no, &mut timers, &mut counters)?;
            for action in &rung.actions {
                match action {
                    Action::Out(addr) | Action::Set(addr) | Action::Reset(addr) => {
                        require_kind(*addr, AddressKind::CoilBit, rung_no, "output must be %QX")?;
                        note_writer(&mut writers, *addr, rung_no)?;
                    }
                    Action::Mov { src, dst } => {
                        require_word_operand(*src, rung_no)?;
                        require_kind(
                            *dst,
                            AddressKind::HoldingWord,
                            rung_no,
                            "move target must be %QW",
                        )?;
                        note_writer(&mut writers, *dst, rung_no)?;
                    }
                    Action::Arith { a, b, dst, .. } => {
                        require_word_operand(*a, rung_no)?;
                        require_word_operand(*b, rung_no)?;
                        require_kind(
                            *dst,
                            AddressKind::HoldingWord,
                            rung_no,
                            "arithmetic target must be %QW",
                        )?;
                        note_writer(&mut writers, *dst, rung_no)?;
                    }
                    Action::Scale { src, dst, in_hi, .. } => {
                        require_word_operand(*src, rung_no)?;
                        if *in_hi == 0 {
                            return Err(LadderError::Parse {
                                rung: rung_no,
                                message: "SCL input span must be non-zero".into(),
                            });
                        }
                        require_kind(
                            *dst,
                            AddressKind::HoldingWord,
                            rung_no,
                            "scale target must be %QW",
                        )?;
                        note_writer(&mut writers, *dst, rung_no)?;
                    }
                    Action::ResetCounter(name) => {
                        if !counters.contains(name) {
                            return Err(LadderError::UnknownCounter(name.clone()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Every address the program reads or writes, used by pollers to size
    /// their transfer windows.
    pub fn referenced_addresses(&self) -> BTreeSet<(Table, u16)> {
        let mut out = BTreeSet::new();
        fn walk_expr(expr: &Expr, out: &mut BTreeSet<(Table, u16)>) {
            match expr {
                Expr::And(items) | Expr::Or(items) => {
                    items.iter().for_each(|e| walk_expr(e, out))
                }
                Expr::No(a) | Expr::Nc(a) | Expr::Rt(a) => {
                    out.insert(a.to_modbus().expect("validated"));
                }
                Expr::Cmp { left, right, .. } => {
                    for op in [left, right] {
                        if let Operand::Address(a) = op {
                            out.insert(a.to_modbus().expect("validated"));
                        }
                    }
                }
                Expr::Ton { .. } | Expr::Ctu { .. } => {}
            }
        }
        for rung in &self.rungs {
            walk_expr(&rung.expr, &mut out);
            for action in &rung.actions {
                match action {
                    Action::Out(a) | Action::Set(a) | Action::Reset(a) => {
                        out.insert(a.to_modbus().expect("validated"));
                    }
                    Action::Mov { src, dst } => {
                        if let Operand::Address(a) = src {
                            out.insert(a.to_modbus().expect("validated"));
                        }
                        out.insert(dst.to_modbus().expect("validated"));
                    }
                    Action::Arith { a, b, dst, .. } => {
                        for op in [a, b] {
                            if let Operand::Address(addr) = op {
                                out.insert(addr.to_modbus().expect("validated"));
                            }
                        }
                        out.insert(dst.to_modbus().expect("validated"));
                    }
                    Action::Scale { src, dst, .. } => {
                        if let Operand::Address(a) = src {
                            out.insert(a.to_modbus().expect("validated"));
                        }
                        out.insert(dst.to_modbus().expect("validated"));
                    }
                    Action::ResetCounter(_) => {}
                }
            }
        }
        out
    }
}

fn note_writer(
    writers: &mut Vec<(LadderAddress, usize)>,
    addr: LadderAddress,
    rung: usize,
) -> Result<(), LadderError> {
    if let Some((_, first)) = writers.iter().find(|(a, r)| *a == addr && *r != rung) {
        return Err(LadderError::MultipleWriters { address: addr, first: *first, second: rung });
    }
    writers.push((addr, rung));
    Ok(())
}

fn require_kind(
    addr: LadderAddress,
    kind: AddressKind,
    rung: usize,
    why: &'static str,
) -> Result<(), LadderError> {
    if addr.kind != kind {
        return Err(LadderError::BadOperand { rung, address: addr, why });
    }
    Ok(())
}

fn require_word_operand(op: Operand, rung: usize) -> Result<(), LadderError> {
    if let Operand::Address(addr) = op {
        if addr.kind.is_bit() {
            return Err(LadderError::BadOperand {
                rung,
                address: addr,
                why: "word operand expected",
            });
        }
    }
    Ok(())
}

fn validate_expr(
    expr: &Expr,
    rung: usize,
    timers: &mut BTreeSet<String>,
    counters: &mut BTreeSet<String>,
) -> Result<(), LadderError> {
    match expr {
        Expr::And(items) | Expr::Or(items) => {
            for item in items {
                validate_expr(item, rung, timers, counters)?;
            }
            Ok(())
        }
        Expr::No(addr) | Expr::Nc(addr) | Expr::Rt(addr) => {
            if !addr.kind.is_bit() {
                return Err(LadderError::BadOperand {
                    rung,
                    address: *addr,
                    why: "contacts read bit addresses",
                });
            }
            Ok(())
        }
        Expr::Ton { name, .. } => {
            if !timers.insert(name.clone()) {
                return Err(LadderError::DuplicateInstance { kind: "timer", name: name.clone() });
            }
            Ok(())
        }
        Expr::Ctu { name, .. } => {
            if !counters.insert(name.clone()) {
                return Err(LadderError::DuplicateInstance {
                    kind: "counter",
                    name: name.clone(),
                });
            }
            Ok(())
        }
        Expr::Cmp { left, right, .. } => {
            require_word_operand(*left, rung)?;
            require_word_operand(*right, rung)
        }
    }
}

// ---------------------------------------------------------------------------
// lexer + recursive-descent parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Address(LadderAddress),
    Int(u64),
    LParen,
    RParen,
    Comma,
    Amp,
    Pipe,
    Gives,
    Arrow,
}

fn lex(line: &str, rung: usize) -> Result<Vec<Token>, LadderError> {
    let err = |message: String| LadderError::Parse { rung, message };
    let mut tokens = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            ',' => {
                tokens.push(Token::Comma);
                i += 1;
            }
            '&' => {
                tokens.push(Token::Amp);
                i += 1;
            }
            '|' => {
                tokens.push(Token::Pipe);
                i += 1;
            }
            '=' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    tokens.push(Token::Gives);
                    i += 2;
                } else {
                    return Err(err("expected '=>'".into()));
                }
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    tokens.push(Token::Arrow);
                    i += 2;
                } else {
                    return Err(err("expected '->'".into()));
                }
            }
            '%' => {
                let start = i;
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.')
                {
                    i += 1;
                }
                let text = &line[start..i];
                let addr: LadderAddress =
                    text.parse().map_err(|e| err(format!("{e}")))?;
                tokens.push(Token::Address(addr));
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let value: u64 =
                    line[start..i].parse().map_err(|_| err("integer overflow".into()))?;
                tokens.push(Token::Int(value));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Token::Ident(line[start..i].to_owned()));
            }
            other => return Err(err(format!("unexpected character '{other}'"))),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    rung: usize,
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, LadderError> {
        Err(LadderError::Parse { rung: self.rung, message: message.into() })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, token: Token) -> Result<(), LadderError> {
        match self.next() {
            Some(t) if t == token => Ok(()),
            other => self.err(format!("expected {token:?}, found {other:?}")),
        }
    }

    fn address(&mut self) -> Result<LadderAddress, LadderError> {
        match self.next() {
            Some(Token::Address(a)) => Ok(a),
            other => self.err(format!("expected address, found {other:?}")),
        }
    }

    fn int(&mut self) -> Result<u64, LadderError> {
        match self.next() {
            Some(Token::Int(v)) => Ok(v),
            other => self.err(format!("expected integer, found {other:?}")),
        }
    }

    fn ident(&mut self) -> Result<String, LadderError> {
        match self.next() {
            Some(Token::Ident(s)) => Ok(s),
            other => self.err(format!("expected name, found {other:?}")),
        }
    }

    fn operand(&mut self) -> Result<Operand, LadderError> {
        match self.next() {
            Some(Token::Address(a)) => Ok(Operand::Address(a)),
            Some(Token::Int(v)) => {
                if v > u16::MAX as u64 {
                    self.err("literal exceeds 16 bits")
                } else {
                    Ok(Operand::Literal(v as u16))
                }
            }
            other => self.err(format!("expected operand, found {other:?}")),
        }
    }

    fn expr(&mut self) -> Result<Expr, LadderError> {
        let mut branches = vec![self.and_chain()?];
        while self.peek() == Some(&Token::Pipe) {
            self.next();
            branches.push(self.and_chain()?);
        }
        Ok(if branches.len() == 1 { branches.pop().unwrap() } else { Expr::Or(branches) })
    }

    fn and_chain(&mut self) -> Result<Expr, LadderError> {
        let mut items = vec![self.atom()?];
        while self.peek() == Some(&Token::Amp) {
            self.next();
            items.push(self.atom()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Expr::And(items) })
    }

    fn atom(&mut self) -> Result<Expr, LadderError> {
        match self.next() {
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            Some(Token::Ident(word)) => {
                self.expect(Token::LParen)?;
                let atom = match word.as_str() {
                    "NO" => Expr::No(self.address()?),
                    "NC" => Expr::Nc(self.address()?),
                    "RT" => Expr::Rt(self.address()?),
                    "TON" => {
                        let name = self.ident()?;
                        self.expect(Token::Comma)?;
                        Expr::Ton { name, preset_ms: self.int()? }
                    }
                    "CTU" => {
                        let name = self.ident()?;
                        self.expect(Token::Comma)?;
                        let preset = self.int()?;
                        if preset > u16::MAX as u64 {
                            return self.err("counter preset exceeds 16 bits");
                        }
                        Expr::Ctu { name, preset: preset as u16 }
                    }
                    "LT" | "LE" | "GT" | "GE" | "EQ" => {
                        let op = match word.as_str() {
                            "LT" => CmpOp::Lt,
                            "LE" => CmpOp::Le,
                            "GT" => CmpOp::Gt,
                            "GE" => CmpOp::Ge,
                            _ => CmpOp::Eq,
                        };
                        let left = self.operand()?;
                        self.expect(Token::Comma)?;
                        Expr::Cmp { op, left, right: self.operand()? }
                    }
                    other => return self.err(format!("unknown element '{other}'")),
                };
                self.expect(Token::RParen)?;
                Ok(atom)
            }
            other => self.err(format!("expected element, found {other:?}")),
        }
    }

    fn action(&mut self) -> Result<Action, LadderError> {
        let word = self.ident()?;
        self.expect(Token::LParen)?;
        let action = match word.as_str() {
            "OUT" => Action::Out(self.address()?),
            "SET" => Action::Set(self.address()?),
            "RST" => Action::Reset(self.address()?),
            "MOV" => {
                let src = self.operand()?;
                self.expect(Token::Arrow)?;
                Action::Mov { src, dst: self.address()? }
            }
            "ADD" | "SUB" | "MUL" => {
                let op = match word.as_str() {
                    "ADD" => ArithOp::Add,
                    "SUB" => ArithOp::Sub,
                    _ => ArithOp::Mul,
                };
                let a = self.operand()?;
                self.expect(Token::Comma)?;
                let b = self.operand()?;
                self.expect(Token::Arrow)?;
                Action::Arith { op, a, b, dst: self.address()? }
            }
            "SCL" => {
                let src = self.operand()?;
                self.expect(Token::Comma)?;
                let in_hi = self.int()?;
                self.expect(Token::Comma)?;
                let out_hi = self.int()?;
                self.expect(Token::Arrow)?;
                if in_hi > u16::MAX as u64 || out_hi > u16::MAX as u64 {
                    return self.err("scale span exceeds 16 bits");
                }
                Action::Scale {
                    src,
                    in_hi: in_hi as u16,
                    out_hi: out_hi as u16,
                    dst: self.address()?,
                }
            }
            "RSTC" => Action::ResetCounter(self.ident()?),
            other => return self.err(format!("unknown action '{other}'")),
        };
        self.expect(Token::RParen)?;
        Ok(action)
    }
}

fn parse_rung(line: &str, rung: usize) -> Result<Rung, LadderError> {
    let mut parser = Parser { tokens: lex(line, rung)?, pos: 0, rung };
    let expr = parser.expr()?;
    parser.expect(Token::Gives)?;
    let mut actions = vec![parser.action()?];
    while parser.peek() == Some(&Token::Comma) {
        parser.next();
        actions.push(parser.action()?);
    }
    if parser.peek().is_some() {
        return parser.err("trailing tokens after rung");
    }
    Ok(Rung { expr, actions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_seal_in_rung() {
        let p = LadderProgram::parse(
            "(NO(%QX101.0) | NO(%QX100.0)) & NC(%QX101.1) => OUT(%QX100.0)",
        )
        .unwrap();
        assert_eq!(p.rungs.len(), 1);
        match &p.rungs[0].expr {
            Expr::And(items) => assert_eq!(items.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_timer_comparator_and_mov() {
        let p = LadderProgram::parse(
            "NO(%IX100.0) & TON(t1, 500) => OUT(%QX100.1)\n\
             RT(%IX100.2) => MOV(%IW100 -> %QW20)\n\
             NO(%IX100.1) & GE(%QW20, %QW10) & LT(%QW20, %QW11) => OUT(%QX100.2)",
        )
        .unwrap();
        assert_eq!(p.rungs.len(), 3);
    }

    #[test]
    fn single_writer_rule_enforced() {
        let err = LadderProgram::parse(
            "NO(%IX100.0) => OUT(%QX100.0)\nNO(%IX100.1) => OUT(%QX100.0)",
        )
        .unwrap_err();
        assert!(matches!(err, LadderError::MultipleWriters { .. }));
    }

    #[test]
    fn contacts_must_read_bits() {
        let err = LadderProgram::parse("NO(%IW100) => OUT(%QX100.0)").unwrap_err();
        assert!(matches!(err, LadderError::BadOperand { .. }));
    }

    #[test]
    fn outputs_must_be_coils() {
        let err = LadderProgram::parse("NO(%IX100.0) => OUT(%IX100.1)").unwrap_err();
        assert!(matches!(err, LadderError::BadOperand { .. }));
    }

    #[test]
    fn duplicate_timer_instance_rejected() {
        let err = LadderProgram::parse(
            "NO(%IX100.0) & TON(t1, 100) => OUT(%QX100.0)\n\
             NO(%IX100.1) & TON(t1, 200) => OUT(%QX100.1)",
        )
        .unwrap_err();
        assert!(matches!(err, LadderError::DuplicateInstance { .. }));
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let p = LadderProgram::parse("# header\n\nNO(%IX100.0) => OUT(%QX100.0)\n").unwrap();
        assert_eq!(p.rungs.len(), 1);
    }

    #[test]
    fn out_of_window_address_rejected_at_parse() {
        let err = LadderProgram::parse("NO(%IX200.0) => OUT(%QX100.0)").unwrap_err();
        assert!(matches!(err, LadderError::Parse { .. }));
    }
}
