//! Concrete syntax for `.chor` files.
//!
//! ```text
//! program := extern* procdef* "main" "{" chor "}"
//! extern  := "extern" NAME INT ("bool" | "int" | "string")
//! procdef := "proc" NAME "(" NAME ("," NAME)* ")" "{" chor "}"
//! chor    := "skip" | (instr (";" instr)*)?
//! instr   := NAME "." expr "->" NAME "." NAME
//!          | NAME "->" NAME "[" NAME "]"
//!          | NAME "." NAME ":=" expr
//!          | "if" NAME "." expr "then" "{" chor "}" "else" "{" chor "}"
//!          | NAME "(" NAME ("," NAME)* ")"
//! expr    := INT | STRING | "true" | "false" | NAME | NAME "(" (expr ("," expr)*)? ")"
//! ```
//!
//! `//` and `#` start line comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::runtime::{Value, ValueType};
use crate::syntax::{Choreography, Expr, ExternDecl, Instr, InstrKind, ProcDef, Program, Span};

const KEYWORDS: &[&str] = &[
    "if", "then", "else", "skip", "true", "false", "main", "proc", "extern",
];

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: Span,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Name(String),
    Int(i64),
    Str(String),
    Dot,
    Semi,
    Comma,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Arrow,
    Assign,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("`{n}`"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Dot => "`.`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Assign => "`:=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let err = |span: Span, message: String| ParseError { span, message };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let advance = |n: usize, i: &mut usize, col: &mut u32| {
            *i += n;
            *col += n as u32;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut i, &mut col),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '.' => {
                out.push((Tok::Dot, span));
                advance(1, &mut i, &mut col);
            }
            ';' => {
                out.push((Tok::Semi, span));
                advance(1, &mut i, &mut col);
            }
            ',' => {
                out.push((Tok::Comma, span));
                advance(1, &mut i, &mut col);
            }
            '(' => {
                out.push((Tok::LParen, span));
                advance(1, &mut i, &mut col);
            }
            ')' => {
                out.push((Tok::RParen, span));
                advance(1, &mut i, &mut col);
            }
            '{' => {
                out.push((Tok::LBrace, span));
                advance(1, &mut i, &mut col);
            }
            '}' => {
                out.push((Tok::RBrace, span));
                advance(1, &mut i, &mut col);
            }
            '[' => {
                out.push((Tok::LBracket, span));
                advance(1, &mut i, &mut col);
            }
            ']' => {
                out.push((Tok::RBracket, span));
                advance(1, &mut i, &mut col);
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push((Tok::Arrow, span));
                advance(2, &mut i, &mut col);
            }
            ':' if chars.get(i + 1) == Some(&'=') => {
                out.push((Tok::Assign, span));
                advance(2, &mut i, &mut col);
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let lit: String = chars[start..j].iter().collect();
                let n = lit
                    .parse::<i64>()
                    .map_err(|_| err(span, format!("integer literal {lit} out of range")))?;
                out.push((Tok::Int(n), span));
                advance(j - start, &mut i, &mut col);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                out.push((Tok::Name(chars[start..j].iter().collect()), span));
                advance(j - start, &mut i, &mut col);
            }
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                let mut ccol = col + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => {
                            return Err(err(span, "unterminated string literal".into()))
                        }
                        Some('"') => {
                            j += 1;
                            ccol += 1;
                            break;
                        }
                        Some('\\') => {
                            let esc = match chars.get(j + 1) {
                                Some('\\') => '\\',
                                Some('"') => '"',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                other => {
                                    return Err(err(
                                        Span { line, col: ccol },
                                        format!("unknown escape {:?}", other.copied().unwrap_or(' ')),
                                    ))
                                }
                            };
                            s.push(esc);
                            j += 2;
                            ccol += 2;
                        }
                        Some(&c) => {
                            s.push(c);
                            j += 1;
                            ccol += 1;
                        }
                    }
                }
                out.push((Tok::Str(s), span));
                i = j;
                col = ccol;
            }
            other => return Err(err(span, format!("unexpected character {other:?}"))),
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError {
            span: self.span(),
            message: format!("expected {expected}, found {}", self.peek().describe()),
        })
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&t.describe())
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn name(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                let n = n.clone();
                self.bump();
                Ok(n)
            }
            _ => self.unexpected("a name"),
        }
    }

    fn names(&mut self) -> PResult<Vec<String>> {
        self.expect(Tok::LParen)?;
        let mut out = vec![self.name()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.name()?);
        }
        self.expect(Tok::RParen)?;
        Ok(out)
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        while self.is_kw("extern") {
            self.bump();
            let name = self.name()?;
            let arity = match self.bump() {
                Tok::Int(n) if n >= 0 => n as usize,
                _ => {
                    self.pos -= 1;
                    return self.unexpected("a non-negative arity");
                }
            };
            let span = self.span();
            let ret = match self.bump() {
                Tok::Name(t) => t.parse::<ValueType>().map_err(|message| ParseError { span, message })?,
                _ => {
                    self.pos -= 1;
                    return self.unexpected("`bool`, `int` or `string`");
                }
            };
            prog.externs.push(ExternDecl { name, arity, ret });
        }
        let mut procs = BTreeMap::new();
        while self.is_kw("proc") {
            let span = self.span();
            self.bump();
            let name_span = self.span();
            let name = self.name()?;
            let formals = self.names()?;
            let body = self.block()?;
            if procs.contains_key(&name) {
                return Err(ParseError {
                    span: name_span,
                    message: format!("procedure {name} defined twice"),
                });
            }
            procs.insert(name, ProcDef { formals, body, span });
        }
        prog.procs = procs;
        self.expect_kw("main")?;
        prog.main = self.block()?;
        if *self.peek() != Tok::Eof {
            return self.unexpected("end of input");
        }
        Ok(prog)
    }

    fn block(&mut self) -> PResult<Choreography> {
        self.expect(Tok::LBrace)?;
        let c = self.chor()?;
        self.expect(Tok::RBrace)?;
        Ok(c)
    }

    fn chor(&mut self) -> PResult<Choreography> {
        if matches!(self.peek(), Tok::RBrace | Tok::Eof) {
            return Ok(Vec::new());
        }
        if self.is_kw("skip") {
            self.bump();
            if !matches!(self.peek(), Tok::RBrace | Tok::Eof) {
                return self.unexpected("`}` (`skip` must stand alone in a block)");
            }
            return Ok(Vec::new());
        }
        let mut out = vec![self.instr()?];
        while *self.peek() == Tok::Semi {
            self.bump();
            out.push(self.instr()?);
        }
        Ok(out)
    }

    fn instr(&mut self) -> PResult<Instr> {
        let span = self.span();
        if self.is_kw("if") {
            self.bump();
            let proc = self.name()?;
            self.expect(Tok::Dot)?;
            let guard = self.expr()?;
            self.expect_kw("then")?;
            let then_branch = self.block()?;
            self.expect_kw("else")?;
            let else_branch = self.block()?;
            return Ok(Instr::cond(&proc, guard, then_branch, else_branch).at(span));
        }
        let first = self.name()?;
        let kind = match self.peek() {
            Tok::LParen => InstrKind::Call {
                name: first,
                args: self.names()?,
            },
            Tok::Arrow => {
                self.bump();
                let to = self.name()?;
                self.expect(Tok::LBracket)?;
                let label = self.name()?;
                self.expect(Tok::RBracket)?;
                InstrKind::Sel {
                    from: first,
                    to,
                    label,
                }
            }
            Tok::Dot => {
                self.bump();
                let lhs_span = self.span();
                let e = self.expr()?;
                match self.peek() {
                    Tok::Assign => {
                        let Expr::Var(var) = e else {
                            return Err(ParseError {
                                span: lhs_span,
                                message: "expected a variable on the left of `:=`".into(),
                            });
                        };
                        self.bump();
                        InstrKind::Assign {
                            proc: first,
                            var,
                            expr: self.expr()?,
                        }
                    }
                    Tok::Arrow => {
                        self.bump();
                        let to = self.name()?;
                        self.expect(Tok::Dot)?;
                        let var = self.name()?;
                        InstrKind::Com {
                            from: first,
                            expr: e,
                            to,
                            var,
                        }
                    }
                    _ => return self.unexpected("`:=` or `->`"),
                }
            }
            _ => return self.unexpected("`.`, `->` or `(`"),
        };
        Ok(Instr { kind, span })
    }

    fn expr(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Const(Value::Int(n)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Const(Value::Str(s)))
            }
            Tok::Name(n) if n == "true" || n == "false" => {
                self.bump();
                Ok(Expr::Const(Value::Bool(n == "true")))
            }
            Tok::Name(_) => {
                let name = self.name()?;
                if *self.peek() != Tok::LParen {
                    return Ok(Expr::Var(name));
                }
                self.bump();
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    args.push(self.expr()?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                }
                self.expect(Tok::RParen)?;
                Ok(Expr::Call(name, args))
            }
            _ => self.unexpected("an expression"),
        }
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    p.program()
}

/// Parses a bare choreography (the contents of a block), for tests and tools.
pub fn parse_chor(text: &str) -> Result<Choreography, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let c = p.chor()?;
    if *p.peek() != Tok::Eof {
        return p.unexpected("end of input");
    }
    Ok(c)
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("cannot print runtime call marker for {proc} : {name}")]
pub struct PrintError {
    pub proc: String,
    pub name: String,
}

/// Renders a program in concrete syntax. Runtime call markers have no
/// source form.
pub fn pretty_print(prog: &Program) -> Result<String, PrintError> {
    let mut out = String::new();
    for e in &prog.externs {
        let _ = writeln!(out, "extern {} {} {}", e.name, e.arity, e.ret);
    }
    if !prog.externs.is_empty() {
        out.push('\n');
    }
    for (name, def) in &prog.procs {
        let _ = writeln!(out, "proc {name}({}) {{", def.formals.join(", "));
        print_chor(&mut out, &def.body, 1)?;
        out.push_str("}\n\n");
    }
    out.push_str("main {\n");
    print_chor(&mut out, &prog.main, 1)?;
    out.push_str("}\n");
    Ok(out)
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_chor(out: &mut String, c: &[Instr], depth: usize) -> Result<(), PrintError> {
    if c.is_empty() {
        indent(out, depth);
        out.push_str("skip\n");
        return Ok(());
    }
    for (k, i) in c.iter().enumerate() {
        indent(out, depth);
        print_instr(out, i, depth)?;
        if k + 1 < c.len() {
            out.push(';');
        }
        out.push('\n');
    }
    Ok(())
}

fn print_instr(out: &mut String, i: &Instr, depth: usize) -> Result<(), PrintError> {
    match &i.kind {
        InstrKind::Com { from, expr, to, var } => {
            let _ = write!(out, "{from}.{expr} -> {to}.{var}");
        }
        InstrKind::Sel { from, to, label } => {
            let _ = write!(out, "{from} -> {to}[{label}]");
        }
        InstrKind::Assign { proc, var, expr } => {
            let _ = write!(out, "{proc}.{var} := {expr}");
        }
        InstrKind::Cond {
            proc,
            guard,
            then_branch,
            else_branch,
        } => {
            let _ = writeln!(out, "if {proc}.{guard} then {{");
            print_chor(out, then_branch, depth + 1)?;
            indent(out, depth);
            out.push_str("} else {\n");
            print_chor(out, else_branch, depth + 1)?;
            indent(out, depth);
            out.push('}');
        }
        InstrKind::Call { name, args } => {
            let _ = write!(out, "{name}({})", args.join(", "));
        }
        InstrKind::RtCall { proc, name, .. } => {
            return Err(PrintError {
                proc: proc.clone(),
                name: name.clone(),
            })
        }
    }
    Ok(())
}
