//! Parsing of model files (`.dlm`) and certificate files (`.cert`).
//!
//! The grammar, bit-exact:
//!
//! * identifiers `[A-Za-z_][A-Za-z0-9_]*`; numbers are decimal (`3`, `0.25`)
//!   or `p/q` rationals (literal quotients fold to exact rationals);
//! * term operators by precedence `^` > unary `-` > `*`,`/` > `+`,`-`;
//! * comparisons `>= > = != <= <`, then `!`, `&`, `|`, `->` (right assoc);
//! * programs: `?F;`, `x := e;`, `{x' = e, ... & F}`, `{a ++ b}`, statement
//!   juxtaposition for sequencing, `{a}*`, `if (F) {a} else {b}`,
//!   `while (F) {a}`, and bare names referencing `program` sections;
//! * modalities `[a] F` and `<a> F`;
//! * comments `//` to end of line; LF or CRLF.
//!
//! Model files are section-based: `model <name>`, `def <name>(<args>) = <term>`,
//! `const <formula>`, `program <name> = <program>`, `theorem <formula>`.
//! Inside a theorem, the keyword `const` denotes the const section's formula.
//! Definitions expand by substitution before analysis; recursion is rejected.
//!
//! Certificate files: `certificate for <model>`, optional
//! `loop_invariant <formula>`, `cut <formula> by <method>` steps where
//! `<method>` is `di_eq`, `di_ineq`, `darboux cofactor <term>` or `domain`,
//! and an optional `variant <term> bound <term>`.

use crate::ast::{desugar_if, desugar_while, CmpOp, Formula, HybridProgram, Rat, Term};
use num_bigint::BigInt;
use num_traits::Zero;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: Pos,
        expected: String,
        found: String,
    },
    #[error("undefined name `{0}`")]
    UndefinedName(String),
    #[error("recursive definition `{0}`")]
    RecursiveDefinition(String),
    #[error("unknown certificate method `{0}`")]
    UnknownMethod(String),
    #[error("`{name}` takes {expected} argument(s), got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid cut formula `{0}`: must be a single comparison")]
    InvalidCutFormula(String),
}

type PResult<T> = Result<T, ParseError>;

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(Rat),
    Plus,
    PlusPlus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Quest,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Assign,
    Le,
    Lt,
    Ge,
    Gt,
    EqSym,
    NeSym,
    Prime,
    KwModel,
    KwDef,
    KwConst,
    KwProgram,
    KwTheorem,
    KwCertificate,
    KwFor,
    KwLoopInvariant,
    KwCut,
    KwBy,
    KwVariant,
    KwBound,
    KwCofactor,
    KwIf,
    KwElse,
    KwWhile,
    KwMin,
    KwMax,
    KwTrue,
    KwFalse,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(_) => "number".to_string(),
            Tok::Eof => "end of input".to_string(),
            Tok::Plus => "`+`".into(),
            Tok::PlusPlus => "`++`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Quest => "`?`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Assign => "`:=`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::EqSym => "`=`".into(),
            Tok::NeSym => "`!=`".into(),
            Tok::Prime => "`'`".into(),
            other => format!("keyword `{other:?}`"),
        }
    }
}

fn keyword(s: &str) -> Option<Tok> {
    Some(match s {
        "model" => Tok::KwModel,
        "def" => Tok::KwDef,
        "const" => Tok::KwConst,
        "program" => Tok::KwProgram,
        "theorem" => Tok::KwTheorem,
        "certificate" => Tok::KwCertificate,
        "for" => Tok::KwFor,
        "loop_invariant" => Tok::KwLoopInvariant,
        "cut" => Tok::KwCut,
        "by" => Tok::KwBy,
        "variant" => Tok::KwVariant,
        "bound" => Tok::KwBound,
        "cofactor" => Tok::KwCofactor,
        "if" => Tok::KwIf,
        "else" => Tok::KwElse,
        "while" => Tok::KwWhile,
        "min" => Tok::KwMin,
        "max" => Tok::KwMax,
        "true" => Tok::KwTrue,
        "false" => Tok::KwFalse,
        _ => return None,
    })
}

fn lex(text: &str) -> PResult<Vec<(Tok, Pos)>> {
    let mut out = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0;
    macro_rules! err {
        ($pos:expr, $expected:expr, $found:expr) => {
            return Err(ParseError::Syntax {
                pos: $pos,
                expected: $expected.to_string(),
                found: $found.to_string(),
            })
        };
    }
    while i < bytes.len() {
        let c = bytes[i];
        let pos = Pos { line, col };
        let bump = |i: &mut usize, col: &mut u32| {
            *i += 1;
            *col += 1;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            '\r' | ' ' | '\t' => bump(&mut i, &mut col),
            '/' if i + 1 < bytes.len() && bytes[i + 1] == '/' => {
                while i < bytes.len() && bytes[i] != '\n' {
                    i += 1;
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_')
                {
                    i += 1;
                    col += 1;
                }
                let word: String = bytes[start..i].iter().collect();
                out.push((keyword(&word).unwrap_or(Tok::Ident(word)), pos));
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                    col += 1;
                }
                let mut num: String = bytes[start..i].iter().collect();
                let mut denom = BigInt::from(1);
                if i < bytes.len() && bytes[i] == '.' {
                    i += 1;
                    col += 1;
                    let fstart = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                        col += 1;
                    }
                    if i == fstart {
                        err!(Pos { line, col }, "digits after decimal point", ".");
                    }
                    let frac: String = bytes[fstart..i].iter().collect();
                    for _ in 0..frac.len() {
                        denom *= 10;
                    }
                    num.push_str(&frac);
                }
                let numer: BigInt = num.parse().expect("digits");
                out.push((Tok::Number(Rat::new(numer, denom)), pos));
            }
            '+' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '+' {
                    i += 2;
                    col += 2;
                    out.push((Tok::PlusPlus, pos));
                } else {
                    bump(&mut i, &mut col);
                    out.push((Tok::Plus, pos));
                }
            }
            '-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '>' {
                    i += 2;
                    col += 2;
                    out.push((Tok::Arrow, pos));
                } else {
                    bump(&mut i, &mut col);
                    out.push((Tok::Minus, pos));
                }
            }
            '*' => {
                bump(&mut i, &mut col);
                out.push((Tok::Star, pos));
            }
            '/' => {
                bump(&mut i, &mut col);
                out.push((Tok::Slash, pos));
            }
            '^' => {
                bump(&mut i, &mut col);
                out.push((Tok::Caret, pos));
            }
            '(' => {
                bump(&mut i, &mut col);
                out.push((Tok::LParen, pos));
            }
            ')' => {
                bump(&mut i, &mut col);
                out.push((Tok::RParen, pos));
            }
            '{' => {
                bump(&mut i, &mut col);
                out.push((Tok::LBrace, pos));
            }
            '}' => {
                bump(&mut i, &mut col);
                out.push((Tok::RBrace, pos));
            }
            '[' => {
                bump(&mut i, &mut col);
                out.push((Tok::LBracket, pos));
            }
            ']' => {
                bump(&mut i, &mut col);
                out.push((Tok::RBracket, pos));
            }
            ',' => {
                bump(&mut i, &mut col);
                out.push((Tok::Comma, pos));
            }
            ';' => {
                bump(&mut i, &mut col);
                out.push((Tok::Semi, pos));
            }
            '?' => {
                bump(&mut i, &mut col);
                out.push((Tok::Quest, pos));
            }
            '!' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    i += 2;
                    col += 2;
                    out.push((Tok::NeSym, pos));
                } else {
                    bump(&mut i, &mut col);
                    out.push((Tok::Bang, pos));
                }
            }
            '&' => {
                bump(&mut i, &mut col);
                out.push((Tok::Amp, pos));
            }
            '|' => {
                bump(&mut i, &mut col);
                out.push((Tok::Pipe, pos));
            }
            '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    i += 2;
                    col += 2;
                    out.push((Tok::Le, pos));
                } else {
                    bump(&mut i, &mut col);
                    out.push((Tok::Lt, pos));
                }
            }
            '>' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    i += 2;
                    col += 2;
                    out.push((Tok::Ge, pos));
                } else {
                    bump(&mut i, &mut col);
                    out.push((Tok::Gt, pos));
                }
            }
            '=' => {
                bump(&mut i, &mut col);
                out.push((Tok::EqSym, pos));
            }
            ':' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    i += 2;
                    col += 2;
                    out.push((Tok::Assign, pos));
                } else {
                    err!(pos, "`:=`", ":");
                }
            }
            '\'' => {
                bump(&mut i, &mut col);
                out.push((Tok::Prime, pos));
            }
            other => err!(pos, "a token", format!("`{other}`")),
        }
    }
    out.push((
        Tok::Eof,
        Pos { line, col },
    ));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Raw trees (definitions and program names not yet expanded)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum RTerm {
    Var(String),
    Lit(Rat),
    App(String, Vec<RTerm>),
    Add(Box<RTerm>, Box<RTerm>),
    Sub(Box<RTerm>, Box<RTerm>),
    Neg(Box<RTerm>),
    Mul(Box<RTerm>, Box<RTerm>),
    Div(Box<RTerm>, Box<RTerm>),
    Pow(Box<RTerm>, u32),
    Min(Box<RTerm>, Box<RTerm>),
    Max(Box<RTerm>, Box<RTerm>),
}

#[derive(Debug, Clone, PartialEq)]
enum RFormula {
    True,
    False,
    ConstRef,
    Cmp(CmpOp, RTerm, RTerm),
    Not(Box<RFormula>),
    And(Box<RFormula>, Box<RFormula>),
    Or(Box<RFormula>, Box<RFormula>),
    Implies(Box<RFormula>, Box<RFormula>),
    Box_(Box<RProgram>, Box<RFormula>),
    Diamond(Box<RProgram>, Box<RFormula>),
}

#[derive(Debug, Clone, PartialEq)]
enum RProgram {
    Test(RFormula),
    Assign(String, RTerm),
    Ode(Vec<(String, RTerm)>, Option<RFormula>),
    Choice(Box<RProgram>, Box<RProgram>),
    Seq(Box<RProgram>, Box<RProgram>),
    Loop(Box<RProgram>),
    Ref(String),
    If(RFormula, Box<RProgram>, Box<RProgram>),
    While(RFormula, Box<RProgram>),
}

// ---------------------------------------------------------------------------
// Token-stream parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        if self.at + 1 < self.toks.len() {
            &self.toks[self.at + 1].0
        } else {
            &Tok::Eof
        }
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            expected: expected.to_string(),
            found: self.peek().describe(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err(what),
        }
    }

    // ---- terms ----

    fn term(&mut self) -> PResult<RTerm> {
        let mut t = self.term_mul()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let r = self.term_mul()?;
                    t = RTerm::Add(Box::new(t), Box::new(r));
                }
                Tok::Minus => {
                    self.bump();
                    let r = self.term_mul()?;
                    t = RTerm::Sub(Box::new(t), Box::new(r));
                }
                _ => return Ok(t),
            }
        }
    }

    fn term_mul(&mut self) -> PResult<RTerm> {
        let mut t = self.term_unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let r = self.term_unary()?;
                    t = RTerm::Mul(Box::new(t), Box::new(r));
                }
                Tok::Slash => {
                    self.bump();
                    let r = self.term_unary()?;
                    // Literal quotients are exact rationals.
                    t = match (&t, &r) {
                        (RTerm::Lit(a), RTerm::Lit(b)) if !b.is_zero() => {
                            RTerm::Lit(a / b)
                        }
                        _ => RTerm::Div(Box::new(t), Box::new(r)),
                    };
                }
                _ => return Ok(t),
            }
        }
    }

    fn term_unary(&mut self) -> PResult<RTerm> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let t = self.term_unary()?;
            Ok(RTerm::Neg(Box::new(t)))
        } else {
            self.term_pow()
        }
    }

    fn term_pow(&mut self) -> PResult<RTerm> {
        let base = self.term_atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let parens = *self.peek() == Tok::LParen;
            if parens {
                self.bump();
            }
            let e = match self.peek().clone() {
                Tok::Number(q) if q.is_integer() && !num_traits::Signed::is_negative(&q) => {
                    self.bump();
                    let digits = q.numer().to_string();
                    digits.parse::<u32>().map_err(|_| ParseError::Syntax {
                        pos: self.pos(),
                        expected: "a small nonnegative integer exponent".into(),
                        found: digits,
                    })?
                }
                _ => return self.err("a nonnegative integer exponent"),
            };
            if parens {
                self.expect(Tok::RParen, "`)`")?;
            }
            Ok(RTerm::Pow(Box::new(base), e))
        } else {
            Ok(base)
        }
    }

    fn term_atom(&mut self) -> PResult<RTerm> {
        match self.peek().clone() {
            Tok::Number(q) => {
                self.bump();
                Ok(RTerm::Lit(q))
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.term()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(RTerm::App(name, args))
                } else {
                    Ok(RTerm::Var(name))
                }
            }
            Tok::KwMin | Tok::KwMax => {
                let is_min = *self.peek() == Tok::KwMin;
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let l = self.term()?;
                self.expect(Tok::Comma, "`,`")?;
                let r = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(if is_min {
                    RTerm::Min(Box::new(l), Box::new(r))
                } else {
                    RTerm::Max(Box::new(l), Box::new(r))
                })
            }
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            _ => self.err("a term"),
        }
    }

    // ---- formulas ----

    fn formula(&mut self) -> PResult<RFormula> {
        let l = self.formula_or()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let r = self.formula()?;
            Ok(RFormula::Implies(Box::new(l), Box::new(r)))
        } else {
            Ok(l)
        }
    }

    fn formula_or(&mut self) -> PResult<RFormula> {
        let mut l = self.formula_and()?;
        while *self.peek() == Tok::Pipe {
            self.bump();
            let r = self.formula_and()?;
            l = RFormula::Or(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn formula_and(&mut self) -> PResult<RFormula> {
        let mut l = self.formula_unary()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            let r = self.formula_unary()?;
            l = RFormula::And(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn formula_unary(&mut self) -> PResult<RFormula> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                let f = self.formula_unary()?;
                Ok(RFormula::Not(Box::new(f)))
            }
            Tok::LBracket => {
                self.bump();
                let p = self.program()?;
                self.expect(Tok::RBracket, "`]`")?;
                let f = self.formula_unary()?;
                Ok(RFormula::Box_(Box::new(p), Box::new(f)))
            }
            Tok::Lt => {
                self.bump();
                let p = self.program()?;
                self.expect(Tok::Gt, "`>`")?;
                let f = self.formula_unary()?;
                Ok(RFormula::Diamond(Box::new(p), Box::new(f)))
            }
            _ => self.formula_atom(),
        }
    }

    fn formula_atom(&mut self) -> PResult<RFormula> {
        match self.peek() {
            Tok::KwTrue => {
                self.bump();
                return Ok(RFormula::True);
            }
            Tok::KwFalse => {
                self.bump();
                return Ok(RFormula::False);
            }
            Tok::KwConst => {
                self.bump();
                return Ok(RFormula::ConstRef);
            }
            _ => {}
        }
        // Try a comparison; fall back to a parenthesized formula.
        let mark = self.at;
        match self.comparison() {
            Ok(c) => Ok(c),
            Err(e) => {
                if self.toks[mark].0 == Tok::LParen {
                    self.at = mark;
                    self.bump();
                    let f = self.formula()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(f)
                } else {
                    Err(e)
                }
            }
        }
    }

    fn comparison(&mut self) -> PResult<RFormula> {
        let l = self.term()?;
        let op = match self.peek() {
            Tok::Ge => CmpOp::Ge,
            Tok::Gt => CmpOp::Gt,
            Tok::EqSym => CmpOp::Eq,
            Tok::NeSym => CmpOp::Ne,
            Tok::Le => CmpOp::Le,
            Tok::Lt => CmpOp::Lt,
            _ => return self.err("a comparison operator"),
        };
        self.bump();
        let r = self.term()?;
        Ok(RFormula::Cmp(op, l, r))
    }

    // ---- programs ----

    fn starts_statement(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Quest | Tok::Ident(_) | Tok::LBrace | Tok::KwIf | Tok::KwWhile
        )
    }

    fn program(&mut self) -> PResult<RProgram> {
        let first = self.statement()?;
        let mut prog = first;
        while self.starts_statement() {
            let next = self.statement()?;
            prog = RProgram::Seq(Box::new(prog), Box::new(next));
        }
        Ok(prog)
    }

    fn statement(&mut self) -> PResult<RProgram> {
        match self.peek().clone() {
            Tok::Quest => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(RProgram::Test(f))
            }
            Tok::Ident(name) => {
                if *self.peek2() == Tok::Assign {
                    self.bump();
                    self.bump();
                    let e = self.term()?;
                    self.expect(Tok::Semi, "`;`")?;
                    Ok(RProgram::Assign(name, e))
                } else {
                    self.bump();
                    if *self.peek() == Tok::Semi {
                        self.bump();
                    }
                    Ok(RProgram::Ref(name))
                }
            }
            Tok::KwIf => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::LBrace, "`{`")?;
                let then_p = self.program()?;
                self.expect(Tok::RBrace, "`}`")?;
                self.expect(Tok::KwElse, "`else`")?;
                self.expect(Tok::LBrace, "`{`")?;
                let else_p = self.program()?;
                self.expect(Tok::RBrace, "`}`")?;
                Ok(RProgram::If(cond, Box::new(then_p), Box::new(else_p)))
            }
            Tok::KwWhile => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::LBrace, "`{`")?;
                let body = self.program()?;
                self.expect(Tok::RBrace, "`}`")?;
                Ok(RProgram::While(cond, Box::new(body)))
            }
            Tok::LBrace => {
                self.bump();
                let inner = self.brace_contents()?;
                if *self.peek() == Tok::Star {
                    self.bump();
                    Ok(RProgram::Loop(Box::new(inner)))
                } else {
                    Ok(inner)
                }
            }
            _ => self.err("a statement"),
        }
    }

    /// Contents after `{`: an ODE system, a choice, or a grouped program.
    /// Consumes the closing `}`.
    fn brace_contents(&mut self) -> PResult<RProgram> {
        if matches!(self.peek(), Tok::Ident(_)) && *self.peek2() == Tok::Prime {
            let mut eqs = Vec::new();
            let mut seen = HashSet::new();
            loop {
                let x = self.ident("an ODE variable")?;
                if !seen.insert(x.clone()) {
                    return Err(ParseError::Syntax {
                        pos: self.pos(),
                        expected: "distinct ODE variables".into(),
                        found: format!("duplicate `{x}'`"),
                    });
                }
                self.expect(Tok::Prime, "`'`")?;
                self.expect(Tok::EqSym, "`=`")?;
                let rhs = self.term()?;
                eqs.push((x, rhs));
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            let dom = if *self.peek() == Tok::Amp {
                self.bump();
                Some(self.formula()?)
            } else {
                None
            };
            self.expect(Tok::RBrace, "`}`")?;
            Ok(RProgram::Ode(eqs, dom))
        } else {
            let left = self.program()?;
            if *self.peek() == Tok::PlusPlus {
                self.bump();
                let right = self.program()?;
                self.expect(Tok::RBrace, "`}`")?;
                Ok(RProgram::Choice(Box::new(left), Box::new(right)))
            } else {
                self.expect(Tok::RBrace, "`}`")?;
                Ok(left)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Definition expansion
// ---------------------------------------------------------------------------

struct Expander<'a> {
    defs: &'a HashMap<String, (Vec<String>, RTerm)>,
    programs: &'a HashMap<String, RProgram>,
    constants: Option<&'a Formula>,
    resolving: Vec<String>,
}

impl<'a> Expander<'a> {
    fn term(&mut self, t: &RTerm, bound: &HashSet<String>) -> PResult<Term> {
        match t {
            RTerm::Var(name) => {
                if !bound.contains(name) {
                    if let Some((params, body)) = self.defs.get(name) {
                        if !params.is_empty() {
                            return Err(ParseError::ArityMismatch {
                                name: name.clone(),
                                expected: params.len(),
                                got: 0,
                            });
                        }
                        return self.expand_def(name, body, &[], bound);
                    }
                }
                Ok(Term::Var(name.clone()))
            }
            RTerm::Lit(q) => Ok(Term::Lit(q.clone())),
            RTerm::App(name, args) => {
                let (params, body) = self
                    .defs
                    .get(name)
                    .ok_or_else(|| ParseError::UndefinedName(name.clone()))?;
                if params.len() != args.len() {
                    return Err(ParseError::ArityMismatch {
                        name: name.clone(),
                        expected: params.len(),
                        got: args.len(),
                    });
                }
                let expanded_args: Vec<Term> = args
                    .iter()
                    .map(|a| self.term(a, bound))
                    .collect::<PResult<_>>()?;
                self.expand_def(name, &body.clone(), &expanded_args, bound)
            }
            RTerm::Add(l, r) => Ok(Term::add(self.term(l, bound)?, self.term(r, bound)?)),
            RTerm::Sub(l, r) => Ok(Term::sub(self.term(l, bound)?, self.term(r, bound)?)),
            RTerm::Neg(x) => Ok(Term::neg(self.term(x, bound)?)),
            RTerm::Mul(l, r) => Ok(Term::mul(self.term(l, bound)?, self.term(r, bound)?)),
            RTerm::Div(l, r) => Ok(Term::div(self.term(l, bound)?, self.term(r, bound)?)),
            RTerm::Pow(b, e) => Ok(Term::Pow(Box::new(self.term(b, bound)?), *e)),
            RTerm::Min(l, r) => Ok(Term::Min(
                Box::new(self.term(l, bound)?),
                Box::new(self.term(r, bound)?),
            )),
            RTerm::Max(l, r) => Ok(Term::Max(
                Box::new(self.term(l, bound)?),
                Box::new(self.term(r, bound)?),
            )),
        }
    }

    fn expand_def(
        &mut self,
        name: &str,
        body: &RTerm,
        args: &[Term],
        outer_bound: &HashSet<String>,
    ) -> PResult<Term> {
        if self.resolving.iter().any(|n| n == name) {
            return Err(ParseError::RecursiveDefinition(name.to_string()));
        }
        self.resolving.push(name.to_string());
        let params = self.defs[name].0.clone();
        // Formal parameters shadow definitions and outer names inside the body.
        let mut bound: HashSet<String> = outer_bound.clone();
        for p in &params {
            bound.insert(p.clone());
        }
        let body = body.clone();
        let expanded = self.term(&body, &bound)?;
        self.resolving.pop();
        let mut result = expanded;
        for (p, a) in params.iter().zip(args) {
            result = result.subst(p, a);
        }
        Ok(result)
    }

    fn formula(&mut self, f: &RFormula, bound: &HashSet<String>) -> PResult<Formula> {
        match f {
            RFormula::True => Ok(Formula::True),
            RFormula::False => Ok(Formula::False),
            RFormula::ConstRef => match self.constants {
                Some(c) => Ok(c.clone()),
                None => Err(ParseError::UndefinedName("const".to_string())),
            },
            RFormula::Cmp(op, l, r) => Ok(Formula::Cmp(
                *op,
                self.term(l, bound)?,
                self.term(r, bound)?,
            )),
            RFormula::Not(x) => Ok(Formula::not(self.formula(x, bound)?)),
            RFormula::And(l, r) => Ok(Formula::and(
                self.formula(l, bound)?,
                self.formula(r, bound)?,
            )),
            RFormula::Or(l, r) => Ok(Formula::or(
                self.formula(l, bound)?,
                self.formula(r, bound)?,
            )),
            RFormula::Implies(l, r) => Ok(Formula::implies(
                self.formula(l, bound)?,
                self.formula(r, bound)?,
            )),
            RFormula::Box_(p, post) => Ok(Formula::Box_(
                Box::new(self.program(p, bound)?),
                Box::new(self.formula(post, bound)?),
            )),
            RFormula::Diamond(p, post) => Ok(Formula::Diamond(
                Box::new(self.program(p, bound)?),
                Box::new(self.formula(post, bound)?),
            )),
        }
    }

    fn program(&mut self, p: &RProgram, bound: &HashSet<String>) -> PResult<HybridProgram> {
        match p {
            RProgram::Test(f) => Ok(HybridProgram::Test(self.formula(f, bound)?)),
            RProgram::Assign(x, e) => {
                Ok(HybridProgram::Assign(x.clone(), self.term(e, bound)?))
            }
            RProgram::Ode(eqs, dom) => {
                let eqs = eqs
                    .iter()
                    .map(|(x, e)| Ok((x.clone(), self.term(e, bound)?)))
                    .collect::<PResult<Vec<_>>>()?;
                let dom = match dom {
                    Some(d) => self.formula(d, bound)?,
                    None => Formula::True,
                };
                Ok(HybridProgram::Ode(eqs, dom))
            }
            RProgram::Choice(l, r) => Ok(HybridProgram::choice(
                self.program(l, bound)?,
                self.program(r, bound)?,
            )),
            RProgram::Seq(l, r) => Ok(HybridProgram::seq(
                self.program(l, bound)?,
                self.program(r, bound)?,
            )),
            RProgram::Loop(b) => Ok(HybridProgram::Loop(Box::new(self.program(b, bound)?))),
            RProgram::Ref(name) => {
                if self.resolving.iter().any(|n| n == name) {
                    return Err(ParseError::RecursiveDefinition(name.clone()));
                }
                let body = self
                    .programs
                    .get(name)
                    .ok_or_else(|| ParseError::UndefinedName(name.clone()))?
                    .clone();
                self.resolving.push(name.clone());
                let expanded = self.program(&body, bound)?;
                self.resolving.pop();
                Ok(expanded)
            }
            RProgram::If(cond, t, e) => Ok(desugar_if(
                self.formula(cond, bound)?,
                self.program(t, bound)?,
                self.program(e, bound)?,
            )),
            RProgram::While(cond, b) => Ok(desugar_while(
                self.formula(cond, bound)?,
                self.program(b, bound)?,
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Model and certificate assembly
// ---------------------------------------------------------------------------

/// A parsed model: named definitions, constant assumptions, named programs
/// and the theorem, all with definitions and program references expanded.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    /// Expanded definition bodies, in declaration order. Parameterized
    /// definitions keep their formals as free variables in the stored body.
    pub defs: Vec<(String, Vec<String>, Term)>,
    pub constants: Formula,
    pub programs: Vec<(String, HybridProgram)>,
    pub theorem: Formula,
}

impl Model {
    pub fn def(&self, name: &str) -> Option<&(String, Vec<String>, Term)> {
        self.defs.iter().find(|(n, _, _)| n == name)
    }

    pub fn program(&self, name: &str) -> Option<&HybridProgram> {
        self.programs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
    }

    /// The unique ODE appearing in the theorem, if there is exactly one
    /// distinct ODE system.
    pub fn unique_ode(&self) -> Option<(Vec<(String, Term)>, Formula)> {
        let mut odes: Vec<(Vec<(String, Term)>, Formula)> = Vec::new();
        fn walk_prog(p: &HybridProgram, out: &mut Vec<(Vec<(String, Term)>, Formula)>) {
            match p {
                HybridProgram::Ode(eqs, dom) => {
                    let item = (eqs.clone(), dom.clone());
                    if !out.contains(&item) {
                        out.push(item);
                    }
                }
                HybridProgram::Choice(l, r) | HybridProgram::Seq(l, r) => {
                    walk_prog(l, out);
                    walk_prog(r, out);
                }
                HybridProgram::Loop(b) => walk_prog(b, out),
                _ => {}
            }
        }
        fn walk_formula(f: &Formula, out: &mut Vec<(Vec<(String, Term)>, Formula)>) {
            match f {
                Formula::Box_(p, post) | Formula::Diamond(p, post) => {
                    walk_prog(p, out);
                    walk_formula(post, out);
                }
                Formula::Not(x) => walk_formula(x, out),
                Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                    walk_formula(l, out);
                    walk_formula(r, out);
                }
                _ => {}
            }
        }
        walk_formula(&self.theorem, &mut odes);
        if odes.len() == 1 {
            odes.pop()
        } else {
            None
        }
    }
}

/// How a cut step is to be discharged.
#[derive(Debug, Clone, PartialEq)]
pub enum CutMethod {
    /// Differential invariant for an equation: the Lie derivative of the
    /// difference vanishes.
    DiEq,
    /// Differential invariant for an inequality: the Lie derivative of the
    /// left-minus-right polynomial is nonnegative.
    DiIneq,
    /// Darboux (in)equality with the given cofactor.
    Darboux(Term),
    /// Pointwise consequence of the evolution domain and earlier cuts.
    Domain,
}

#[derive(Debug, Clone)]
pub struct CutStep {
    pub formula: Formula,
    pub method: CutMethod,
}

/// A proof certificate for one model.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub model: String,
    pub loop_invariant: Option<Formula>,
    pub cuts: Vec<CutStep>,
    pub variant: Option<(Term, Term)>,
}

#[derive(Debug, Clone)]
enum RMethod {
    DiEq,
    DiIneq,
    Darboux(RTerm),
    Domain,
}

/// Certificate with payloads not yet resolved against a model's definitions.
#[derive(Debug, Clone)]
pub struct RawCertificate {
    model: String,
    loop_invariant: Option<RFormula>,
    cuts: Vec<(RFormula, RMethod)>,
    variant: Option<(RTerm, RTerm)>,
}

impl RawCertificate {
    pub fn model_name(&self) -> &str {
        &self.model
    }
}

/// Parse a model document.
pub fn parse_model(text: &str) -> PResult<Model> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };

    let mut name = "unnamed".to_string();
    let mut raw_defs: Vec<(String, Vec<String>, RTerm)> = Vec::new();
    let mut raw_const: Vec<RFormula> = Vec::new();
    let mut raw_programs: Vec<(String, RProgram)> = Vec::new();
    let mut raw_theorem: Option<RFormula> = None;

    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::KwModel => {
                p.bump();
                name = p.ident("a model name")?;
            }
            Tok::KwDef => {
                p.bump();
                let dname = p.ident("a definition name")?;
                let mut params = Vec::new();
                if *p.peek() == Tok::LParen {
                    p.bump();
                    if *p.peek() != Tok::RParen {
                        loop {
                            params.push(p.ident("a parameter name")?);
                            if *p.peek() == Tok::Comma {
                                p.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    p.expect(Tok::RParen, "`)`")?;
                }
                p.expect(Tok::EqSym, "`=`")?;
                let body = p.term()?;
                raw_defs.push((dname, params, body));
            }
            Tok::KwConst => {
                p.bump();
                raw_const.push(p.formula()?);
            }
            Tok::KwProgram => {
                p.bump();
                let pname = p.ident("a program name")?;
                p.expect(Tok::EqSym, "`=`")?;
                let prog = p.program()?;
                raw_programs.push((pname, prog));
            }
            Tok::KwTheorem => {
                p.bump();
                raw_theorem = Some(p.formula()?);
            }
            _ => {
                return p.err("a section (`model`, `def`, `const`, `program`, `theorem`)")
            }
        }
    }

    let raw_theorem = raw_theorem.ok_or_else(|| ParseError::Syntax {
        pos: Pos { line: 1, col: 1 },
        expected: "a `theorem` section".to_string(),
        found: "none".to_string(),
    })?;

    let def_map: HashMap<String, (Vec<String>, RTerm)> = raw_defs
        .iter()
        .map(|(n, ps, b)| (n.clone(), (ps.clone(), b.clone())))
        .collect();
    let prog_map: HashMap<String, RProgram> = raw_programs.iter().cloned().collect();

    // Expand the const section first (no ConstRef allowed inside it), then
    // everything else with the expanded constants available.
    let mut ex = Expander {
        defs: &def_map,
        programs: &prog_map,
        constants: None,
        resolving: Vec::new(),
    };
    let empty = HashSet::new();
    let mut const_parts = Vec::new();
    for rf in &raw_const {
        const_parts.push(ex.formula(rf, &empty)?);
    }
    let constants = Formula::conjoin(const_parts);

    let mut ex = Expander {
        defs: &def_map,
        programs: &prog_map,
        constants: Some(&constants),
        resolving: Vec::new(),
    };

    let mut defs = Vec::new();
    for (dname, params, body) in &raw_defs {
        let bound: HashSet<String> = params.iter().cloned().collect();
        ex.resolving.push(dname.clone());
        let expanded = ex.term(body, &bound)?;
        ex.resolving.pop();
        defs.push((dname.clone(), params.clone(), expanded));
    }

    let mut programs = Vec::new();
    for (pname, prog) in &raw_programs {
        ex.resolving.push(pname.clone());
        let expanded = ex.program(prog, &empty)?;
        ex.resolving.pop();
        programs.push((pname.clone(), expanded));
    }

    let theorem = ex.formula(&raw_theorem, &empty)?;

    let model = Model {
        name,
        defs,
        constants,
        programs,
        theorem,
    };
    validate_model(&model)?;
    Ok(model)
}

/// Every identifier used by the theorem must be written by one of its
/// programs, mentioned in the constant assumptions, or introduced in the
/// theorem's antecedent.
fn validate_model(model: &Model) -> PResult<()> {
    let mut bound = BTreeSet::new();
    fn collect_prog_bound(f: &Formula, out: &mut BTreeSet<String>) {
        match f {
            Formula::Box_(p, post) | Formula::Diamond(p, post) => {
                for v in p.bound_vars() {
                    out.insert(v);
                }
                collect_prog_bound(post, out);
            }
            Formula::Not(x) => collect_prog_bound(x, out),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                collect_prog_bound(l, out);
                collect_prog_bound(r, out);
            }
            _ => {}
        }
    }
    collect_prog_bound(&model.theorem, &mut bound);
    let const_vars = model.constants.vars();
    let antecedent_vars = match &model.theorem {
        Formula::Implies(p, _) => p.vars(),
        _ => BTreeSet::new(),
    };
    for v in model.theorem.vars() {
        if !bound.contains(&v) && !const_vars.contains(&v) && !antecedent_vars.contains(&v) {
            return Err(ParseError::UndefinedName(v));
        }
    }
    Ok(())
}

/// Parse a certificate document. Payloads are resolved against a model with
/// [`bind_certificate`].
pub fn parse_certificate(text: &str) -> PResult<RawCertificate> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };

    p.expect(Tok::KwCertificate, "`certificate`")?;
    p.expect(Tok::KwFor, "`for`")?;
    let model = p.ident("a model name")?;

    let mut loop_invariant = None;
    let mut cuts = Vec::new();
    let mut variant = None;

    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::KwLoopInvariant => {
                p.bump();
                loop_invariant = Some(p.formula()?);
            }
            Tok::KwCut => {
                p.bump();
                let formula = p.formula()?;
                p.expect(Tok::KwBy, "`by`")?;
                let method = match p.peek().clone() {
                    Tok::Ident(m) if m == "di_eq" => {
                        p.bump();
                        RMethod::DiEq
                    }
                    Tok::Ident(m) if m == "di_ineq" => {
                        p.bump();
                        RMethod::DiIneq
                    }
                    Tok::Ident(m) if m == "darboux" => {
                        p.bump();
                        p.expect(Tok::KwCofactor, "`cofactor`")?;
                        let g = p.term()?;
                        RMethod::Darboux(g)
                    }
                    Tok::Ident(m) if m == "domain" => {
                        p.bump();
                        RMethod::Domain
                    }
                    Tok::Ident(m) => return Err(ParseError::UnknownMethod(m)),
                    _ => {
                        return p.err(
                            "a method (`di_eq`, `di_ineq`, `darboux cofactor <term>`, `domain`)",
                        )
                    }
                };
                cuts.push((formula, method));
            }
            Tok::KwVariant => {
                p.bump();
                let progress = p.term()?;
                p.expect(Tok::KwBound, "`bound`")?;
                let bound = p.term()?;
                variant = Some((progress, bound));
            }
            _ => return p.err("`loop_invariant`, `cut`, or `variant`"),
        }
    }

    Ok(RawCertificate {
        model,
        loop_invariant,
        cuts,
        variant,
    })
}

/// Resolve a raw certificate's payloads against a model's definitions.
pub fn bind_certificate(raw: &RawCertificate, model: &Model) -> PResult<Certificate> {
    let defs: HashMap<String, (Vec<String>, RTerm)> = model
        .defs
        .iter()
        .map(|(n, ps, body)| (n.clone(), (ps.clone(), term_to_raw(body))))
        .collect();
    let progs = HashMap::new();
    let mut ex = Expander {
        defs: &defs,
        programs: &progs,
        constants: Some(&model.constants),
        resolving: Vec::new(),
    };
    let empty = HashSet::new();

    let loop_invariant = match &raw.loop_invariant {
        Some(f) => Some(ex.formula(f, &empty)?),
        None => None,
    };
    let mut cuts = Vec::new();
    for (rf, rm) in &raw.cuts {
        let formula = ex.formula(rf, &empty)?;
        let method = match rm {
            RMethod::DiEq => CutMethod::DiEq,
            RMethod::DiIneq => CutMethod::DiIneq,
            RMethod::Darboux(g) => CutMethod::Darboux(ex.term(g, &empty)?),
            RMethod::Domain => CutMethod::Domain,
        };
        if !matches!(method, CutMethod::Domain) && !matches!(formula, Formula::Cmp(..)) {
            return Err(ParseError::InvalidCutFormula(formula.to_string()));
        }
        cuts.push(CutStep { formula, method });
    }
    let variant = match &raw.variant {
        Some((prog, bnd)) => Some((ex.term(prog, &empty)?, ex.term(bnd, &empty)?)),
        None => None,
    };
    Ok(Certificate {
        model: raw.model.clone(),
        loop_invariant,
        cuts,
        variant,
    })
}

/// Re-encode an expanded term as a raw tree (definition bodies are stored
/// expanded; certificates re-expand through the same machinery).
fn term_to_raw(t: &Term) -> RTerm {
    match t {
        Term::Var(v) => RTerm::Var(v.clone()),
        Term::Lit(q) => RTerm::Lit(q.clone()),
        Term::Add(l, r) => RTerm::Add(Box::new(term_to_raw(l)), Box::new(term_to_raw(r))),
        Term::Sub(l, r) => RTerm::Sub(Box::new(term_to_raw(l)), Box::new(term_to_raw(r))),
        Term::Neg(x) => RTerm::Neg(Box::new(term_to_raw(x))),
        Term::Mul(l, r) => RTerm::Mul(Box::new(term_to_raw(l)), Box::new(term_to_raw(r))),
        Term::Div(l, r) => RTerm::Div(Box::new(term_to_raw(l)), Box::new(term_to_raw(r))),
        Term::Pow(b, e) => RTerm::Pow(Box::new(term_to_raw(b)), *e),
        Term::Min(l, r) => RTerm::Min(Box::new(term_to_raw(l)), Box::new(term_to_raw(r))),
        Term::Max(l, r) => RTerm::Max(Box::new(term_to_raw(l)), Box::new(term_to_raw(r))),
    }
}

/// Parse a standalone term (CLI `--term`, tests).
pub fn parse_term_str(text: &str) -> PResult<Term> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };
    let raw = p.term()?;
    if *p.peek() != Tok::Eof {
        return p.err("end of input");
    }
    let defs = HashMap::new();
    let progs = HashMap::new();
    let mut ex = Expander {
        defs: &defs,
        programs: &progs,
        constants: None,
        resolving: Vec::new(),
    };
    ex.term(&raw, &HashSet::new())
}

/// Parse a standalone modal-free formula (CLI `--property`, tests).
pub fn parse_formula_str(text: &str) -> PResult<Formula> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };
    let raw = p.formula()?;
    if *p.peek() != Tok::Eof {
        return p.err("end of input");
    }
    let defs = HashMap::new();
    let progs = HashMap::new();
    let mut ex = Expander {
        defs: &defs,
        programs: &progs,
        constants: None,
        resolving: Vec::new(),
    };
    ex.formula(&raw, &HashSet::new())
}

/// Parse a standalone hybrid program (tests, round-trip checks).
pub fn parse_program_str(text: &str) -> PResult<HybridProgram> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };
    let raw = p.program()?;
    if *p.peek() != Tok::Eof {
        return p.err("end of input");
    }
    let defs = HashMap::new();
    let progs = HashMap::new();
    let mut ex = Expander {
        defs: &defs,
        programs: &progs,
        constants: None,
        resolving: Vec::new(),
    };
    ex.program(&raw, &HashSet::new())
}

/// Parse a term against a model's definitions (used by `lie --term`).
pub fn parse_term_in_model(text: &str, model: &Model) -> PResult<Term> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };
    let raw = p.term()?;
    if *p.peek() != Tok::Eof {
        return p.err("end of input");
    }
    let defs: HashMap<String, (Vec<String>, RTerm)> = model
        .defs
        .iter()
        .map(|(n, ps, body)| (n.clone(), (ps.clone(), term_to_raw(body))))
        .collect();
    let progs = HashMap::new();
    let mut ex = Expander {
        defs: &defs,
        programs: &progs,
        constants: Some(&model.constants),
        resolving: Vec::new(),
    };
    ex.term(&raw, &HashSet::new())
}
