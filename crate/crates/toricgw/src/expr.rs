//! The integrand language: products, sums and powers of `ev(i, Z)`,
//! `Psi(a_1,..,a_m)`, `push_ev(M)` and rational scalars, with a companion
//! mode for divisor/cohomology/curve definitions (`D1..Dr`, `a_point`,
//! `anticanonical`, `mg[i,j]`, named bindings).
//!
//! Grammar:
//!
//! ```text
//! expr     := term (('+'|'-') term)*
//! term     := factor ('*' factor)*
//! factor   := atom ('^' UINT)?
//! atom     := RATIONAL | NAME | 'ev' '(' UINT ',' expr ')'
//!           | 'Psi' '(' UINT (',' UINT)* ')' | 'push_ev' '(' NAME ')'
//!           | 'mg' '[' UINT ',' UINT ']' | '(' expr ')' | '-' atom
//! RATIONAL := UINT ('//' UINT)?
//! ```
//!
//! Psi exponents ride in a single atom per product term; separate psi factors
//! in one term are rejected rather than merged. Sums must be homogeneous;
//! with `push_ev` present, homogeneity is decided symbolically (equal scalar
//! degree and equal multiset of push factors), independently of the curve
//! class.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::cycles::{self, CohomExpr, CurveClass, DivisorClass, MomentGraph};
use crate::equivariant::{ev_factor, psi_factor, push_ev_factor, EvalContext, FlagData};
use crate::error::{Error, Result};
use crate::fan::Fan;
use crate::graphs::DecoratedGraph;
use crate::rat::{rat, Rat};

// ---------------------------------------------------------------------------
// Symbols

#[derive(Debug, Clone)]
pub enum SymbolValue {
    Cohom(CohomExpr),
    Divisor(DivisorClass),
    Curve(CurveClass),
}

impl SymbolValue {
    fn kind(&self) -> &'static str {
        match self {
            SymbolValue::Cohom(_) => "cohomology class",
            SymbolValue::Divisor(_) => "divisor class",
            SymbolValue::Curve(_) => "curve class",
        }
    }
}

/// Name bindings visible to the parser. `D1..Dr`, `a_point` and
/// `anticanonical` are seeded automatically; `mg[i,j]` needs the moment
/// graph attached.
pub struct SymbolTable<'f> {
    pub fan: &'f Fan,
    mg: Option<&'f MomentGraph>,
    named: BTreeMap<String, SymbolValue>,
}

impl<'f> SymbolTable<'f> {
    pub fn new(fan: &'f Fan) -> SymbolTable<'f> {
        let mut named = BTreeMap::new();
        for ray in 0..fan.ray_count() {
            named.insert(
                format!("D{}", ray + 1),
                SymbolValue::Divisor(DivisorClass::unit(fan.ray_count(), ray)),
            );
        }
        named.insert(
            "a_point".to_owned(),
            SymbolValue::Cohom(cycles::point_class(fan)),
        );
        named.insert(
            "anticanonical".to_owned(),
            SymbolValue::Divisor(cycles::anticanonical_divisor(fan)),
        );
        SymbolTable {
            fan,
            mg: None,
            named,
        }
    }

    pub fn with_moment_graph(mut self, mg: &'f MomentGraph) -> SymbolTable<'f> {
        self.mg = Some(mg);
        self
    }

    pub fn define(&mut self, name: &str, value: SymbolValue) {
        self.named.insert(name.to_owned(), value);
    }

    pub fn resolve(&self, name: &str) -> Option<&SymbolValue> {
        self.named.get(name)
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(u64),
    Name(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    DoubleSlash,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Tok::Plus, i));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, i));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, i));
                i += 1;
            }
            '^' => {
                out.push((Tok::Caret, i));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            '[' => {
                out.push((Tok::LBracket, i));
                i += 1;
            }
            ']' => {
                out.push((Tok::RBracket, i));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            '/' => {
                if bytes.get(i + 1) == Some(&b'/') {
                    out.push((Tok::DoubleSlash, i));
                    i += 2;
                } else {
                    return Err(Error::Syntax {
                        pos: i,
                        msg: "single '/' (rationals are written p//q)".into(),
                    });
                }
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let v: u64 = text[start..i].parse().map_err(|_| Error::Syntax {
                    pos: start,
                    msg: "integer literal out of range".into(),
                })?;
                out.push((Tok::Int(v), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Tok::Name(text[start..i].to_owned()), start));
            }
            _ => {
                return Err(Error::Syntax {
                    pos: i,
                    msg: format!("unexpected character '{c}'"),
                })
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Raw syntax tree

#[derive(Debug, Clone)]
enum Raw {
    Num(u64, usize),
    Ratio(u64, u64, usize),
    Name(String, usize),
    Ev(usize, Box<Raw>, usize),
    Psi(Vec<u32>, usize),
    PushEv(String, usize),
    Mg(usize, usize, usize),
    Neg(Box<Raw>),
    Sum(Vec<(bool, Raw)>, usize),
    Prod(Vec<Raw>, usize),
    Pow(Box<Raw>, u32, usize),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|&(_, p)| p).unwrap_or(self.len)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(t, _)| t.clone());
        self.at += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            Err(Error::Syntax {
                pos: self.pos(),
                msg: format!("expected {what}"),
            })
        }
    }

    fn expect_uint(&mut self, what: &str) -> Result<u64> {
        match self.bump() {
            Some(Tok::Int(v)) => Ok(v),
            _ => {
                self.at -= 1;
                Err(Error::Syntax {
                    pos: self.pos(),
                    msg: format!("expected {what}"),
                })
            }
        }
    }

    fn expr(&mut self) -> Result<Raw> {
        let pos = self.pos();
        let first = self.term()?;
        let mut parts = vec![(false, first)];
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.at += 1;
                    parts.push((false, self.term()?));
                }
                Some(Tok::Minus) => {
                    self.at += 1;
                    parts.push((true, self.term()?));
                }
                _ => break,
            }
        }
        if parts.len() == 1 {
            Ok(parts.pop().unwrap().1)
        } else {
            Ok(Raw::Sum(parts, pos))
        }
    }

    fn term(&mut self) -> Result<Raw> {
        let pos = self.pos();
        let mut factors = vec![self.factor()?];
        while self.peek() == Some(&Tok::Star) {
            self.at += 1;
            factors.push(self.factor()?);
        }
        if factors.len() == 1 {
            Ok(factors.pop().unwrap())
        } else {
            Ok(Raw::Prod(factors, pos))
        }
    }

    fn factor(&mut self) -> Result<Raw> {
        let atom = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            let pos = self.pos();
            self.at += 1;
            let e = self.expect_uint("a non-negative integer exponent")?;
            let e = u32::try_from(e).map_err(|_| Error::Syntax {
                pos,
                msg: "exponent out of range".into(),
            })?;
            Ok(Raw::Pow(Box::new(atom), e, pos))
        } else {
            Ok(atom)
        }
    }

    fn atom(&mut self) -> Result<Raw> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Minus) => Ok(Raw::Neg(Box::new(self.atom()?))),
            Some(Tok::Int(v)) => {
                if self.peek() == Some(&Tok::DoubleSlash) {
                    self.at += 1;
                    let den = self.expect_uint("a denominator")?;
                    if den == 0 {
                        return Err(Error::Syntax {
                            pos,
                            msg: "zero denominator".into(),
                        });
                    }
                    Ok(Raw::Ratio(v, den, pos))
                } else {
                    Ok(Raw::Num(v, pos))
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Name(name)) => match name.as_str() {
                "ev" => {
                    self.expect(Tok::LParen, "'(' after ev")?;
                    let idx = self.expect_uint("a mark index")? as usize;
                    self.expect(Tok::Comma, "',' in ev(i, Z)")?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "')' closing ev")?;
                    Ok(Raw::Ev(idx, Box::new(arg), pos))
                }
                "Psi" => {
                    self.expect(Tok::LParen, "'(' after Psi")?;
                    let mut args = vec![self.expect_uint("a psi exponent")? as u32];
                    while self.peek() == Some(&Tok::Comma) {
                        self.at += 1;
                        args.push(self.expect_uint("a psi exponent")? as u32);
                    }
                    self.expect(Tok::RParen, "')' closing Psi")?;
                    Ok(Raw::Psi(args, pos))
                }
                "push_ev" => {
                    self.expect(Tok::LParen, "'(' after push_ev")?;
                    let inner_pos = self.pos();
                    let sym = match self.bump() {
                        Some(Tok::Name(n)) => n,
                        _ => {
                            return Err(Error::Syntax {
                                pos: inner_pos,
                                msg: "push_ev takes a divisor name".into(),
                            })
                        }
                    };
                    self.expect(Tok::RParen, "')' closing push_ev")?;
                    Ok(Raw::PushEv(sym, pos))
                }
                "mg" => {
                    self.expect(Tok::LBracket, "'[' after mg")?;
                    let i = self.expect_uint("a cone index")? as usize;
                    self.expect(Tok::Comma, "',' in mg[i,j]")?;
                    let j = self.expect_uint("a cone index")? as usize;
                    self.expect(Tok::RBracket, "']' closing mg")?;
                    Ok(Raw::Mg(i, j, pos))
                }
                _ => Ok(Raw::Name(name, pos)),
            },
            _ => {
                self.at -= 1;
                Err(Error::Syntax {
                    pos: self.pos(),
                    msg: "expected a rational, name, ev, Psi, push_ev or '('".into(),
                })
            }
        }
    }
}

fn parse_raw(text: &str) -> Result<Raw> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        len: text.len(),
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return Err(Error::Syntax {
            pos: p.pos(),
            msg: "trailing input".into(),
        });
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Definition-mode evaluation (divisors, cohomology classes, curve classes)

#[derive(Debug, Clone)]
enum DefValue {
    Scalar(Rat),
    Cohom(CohomExpr),
    Divisor(DivisorClass),
    Curve(CurveClass),
}

impl DefValue {
    fn kind(&self) -> &'static str {
        match self {
            DefValue::Scalar(_) => "scalar",
            DefValue::Cohom(_) => "cohomology class",
            DefValue::Divisor(_) => "divisor class",
            DefValue::Curve(_) => "curve class",
        }
    }

    fn into_cohom(self, r: usize, pos: usize) -> Result<CohomExpr> {
        match self {
            DefValue::Scalar(s) => Ok(CohomExpr::constant(r, s)),
            DefValue::Cohom(c) => Ok(c),
            DefValue::Divisor(d) => Ok(CohomExpr::from_divisor(&d)),
            DefValue::Curve(_) => Err(Error::SymbolKindMismatch {
                pos,
                name: "<expression>".into(),
                found: "curve class",
                expected: "a cohomology class",
            }),
        }
    }
}

fn def_add(a: DefValue, b: DefValue, negate: bool, r: usize, pos: usize) -> Result<DefValue> {
    let b = if negate { def_neg(b) } else { b };
    match (a, b) {
        (DefValue::Scalar(x), DefValue::Scalar(y)) => Ok(DefValue::Scalar(x + y)),
        (DefValue::Divisor(x), DefValue::Divisor(y)) => Ok(DefValue::Divisor(DivisorClass(
            x.0.iter().zip(&y.0).map(|(a, b)| a + b).collect(),
        ))),
        (DefValue::Curve(x), DefValue::Curve(y)) => Ok(DefValue::Curve(CurveClass(
            x.0.iter().zip(&y.0).map(|(a, b)| a + b).collect(),
        ))),
        (x @ (DefValue::Scalar(_) | DefValue::Cohom(_) | DefValue::Divisor(_)),
         y @ (DefValue::Scalar(_) | DefValue::Cohom(_) | DefValue::Divisor(_))) => {
            let sum = x.into_cohom(r, pos)?.add(&y.into_cohom(r, pos)?);
            match sum {
                Ok(c) => Ok(DefValue::Cohom(c)),
                Err(Error::InhomogeneousSum { .. }) => Err(Error::InhomogeneousSum { pos }),
                Err(e) => Err(e),
            }
        }
        (x, y) => Err(Error::SymbolKindMismatch {
            pos,
            name: "<sum>".into(),
            found: y.kind(),
            expected: kind_static(x.kind()),
        }),
    }
}

fn kind_static(k: &'static str) -> &'static str {
    k
}

fn def_neg(v: DefValue) -> DefValue {
    match v {
        DefValue::Scalar(s) => DefValue::Scalar(-s),
        DefValue::Cohom(c) => DefValue::Cohom(c.scale(&rat(-1))),
        DefValue::Divisor(d) => DefValue::Divisor(DivisorClass(d.0.iter().map(|x| -x).collect())),
        DefValue::Curve(c) => DefValue::Curve(CurveClass(c.0.iter().map(|x| -x).collect())),
    }
}

fn def_mul(a: DefValue, b: DefValue, r: usize, pos: usize) -> Result<DefValue> {
    use DefValue::*;
    match (a, b) {
        (Scalar(x), Scalar(y)) => Ok(Scalar(x * y)),
        (Scalar(s), Curve(c)) | (Curve(c), Scalar(s)) => {
            if s.is_integer() {
                let k = i64::try_from(s.numer()).map_err(|_| Error::Syntax {
                    pos,
                    msg: "curve coefficient out of range".into(),
                })?;
                Ok(Curve(CurveClass(c.0.iter().map(|x| k * x).collect())))
            } else {
                Err(Error::Syntax {
                    pos,
                    msg: "curve classes take integer coefficients".into(),
                })
            }
        }
        (Scalar(s), Divisor(d)) | (Divisor(d), Scalar(s)) => {
            if s.is_integer() {
                let k = i64::try_from(s.numer()).map_err(|_| Error::Syntax {
                    pos,
                    msg: "divisor coefficient out of range".into(),
                })?;
                Ok(Divisor(DivisorClass(d.0.iter().map(|x| k * x).collect())))
            } else {
                Ok(Cohom(CohomExpr::from_divisor(&d).scale(&s)))
            }
        }
        (Scalar(s), Cohom(c)) | (Cohom(c), Scalar(s)) => Ok(Cohom(c.scale(&s))),
        (Curve(_), _) | (_, Curve(_)) => Err(Error::Syntax {
            pos,
            msg: "curve classes only admit integer combinations".into(),
        }),
        (x, y) => {
            let prod = x.into_cohom(r, pos)?.mul(&y.into_cohom(r, pos)?);
            Ok(Cohom(prod))
        }
    }
}

fn def_pow(base: DefValue, exp: u32, r: usize, pos: usize) -> Result<DefValue> {
    match base {
        DefValue::Scalar(s) => {
            let mut acc = Rat::one();
            for _ in 0..exp {
                acc *= s.clone();
            }
            Ok(DefValue::Scalar(acc))
        }
        DefValue::Divisor(d) if exp == 1 => Ok(DefValue::Divisor(d)),
        DefValue::Curve(c) if exp == 1 => Ok(DefValue::Curve(c)),
        DefValue::Curve(_) => Err(Error::Syntax {
            pos,
            msg: "curve classes cannot be raised to powers".into(),
        }),
        other => Ok(DefValue::Cohom(other.into_cohom(r, pos)?.pow(exp))),
    }
}

fn eval_define(raw: &Raw, symbols: &SymbolTable) -> Result<DefValue> {
    let r = symbols.fan.ray_count();
    match raw {
        Raw::Num(v, pos) => {
            let n = i64::try_from(*v).map_err(|_| Error::Syntax {
                pos: *pos,
                msg: "integer out of range".into(),
            })?;
            Ok(DefValue::Scalar(rat(n)))
        }
        Raw::Ratio(p, q, pos) => {
            let p = i64::try_from(*p).map_err(|_| Error::Syntax {
                pos: *pos,
                msg: "numerator out of range".into(),
            })?;
            let q = i64::try_from(*q).map_err(|_| Error::Syntax {
                pos: *pos,
                msg: "denominator out of range".into(),
            })?;
            Ok(DefValue::Scalar(crate::rat::rat_frac(p, q)))
        }
        Raw::Name(name, pos) => match symbols.resolve(name) {
            Some(SymbolValue::Cohom(c)) => Ok(DefValue::Cohom(c.clone())),
            Some(SymbolValue::Divisor(d)) => Ok(DefValue::Divisor(d.clone())),
            Some(SymbolValue::Curve(c)) => Ok(DefValue::Curve(c.clone())),
            None => Err(Error::UnknownSymbol {
                pos: *pos,
                name: name.clone(),
            }),
        },
        Raw::Mg(i, j, pos) => {
            let mg = symbols.mg.ok_or_else(|| Error::Syntax {
                pos: *pos,
                msg: "mg[i,j] is not available in this context".into(),
            })?;
            if *i == 0 || *j == 0 || *i > mg.cone_count() || *j > mg.cone_count() {
                return Err(Error::Syntax {
                    pos: *pos,
                    msg: format!(
                        "mg indices are 1..={} (got [{i},{j}])",
                        mg.cone_count()
                    ),
                });
            }
            let (_, cls) = mg.get(i - 1, j - 1)?;
            Ok(DefValue::Curve(cls.clone()))
        }
        Raw::Neg(inner) => Ok(def_neg(eval_define(inner, symbols)?)),
        Raw::Sum(parts, pos) => {
            let mut acc = eval_define(&parts[0].1, symbols)?;
            if parts[0].0 {
                acc = def_neg(acc);
            }
            for (negate, part) in &parts[1..] {
                let v = eval_define(part, symbols)?;
                acc = def_add(acc, v, *negate, r, *pos)?;
            }
            Ok(acc)
        }
        Raw::Prod(parts, pos) => {
            let mut acc = eval_define(&parts[0], symbols)?;
            for part in &parts[1..] {
                let v = eval_define(part, symbols)?;
                acc = def_mul(acc, v, r, *pos)?;
            }
            Ok(acc)
        }
        Raw::Pow(base, exp, pos) => {
            let b = eval_define(base, symbols)?;
            def_pow(b, *exp, r, *pos)
        }
        Raw::Ev(_, _, pos) | Raw::Psi(_, pos) | Raw::PushEv(_, pos) => Err(Error::Syntax {
            pos: *pos,
            msg: "ev/Psi/push_ev are only valid in integrands".into(),
        }),
    }
}

/// Evaluates a definition-mode expression (used for `define` entries and
/// `beta` in job files).
pub fn parse_define(text: &str, symbols: &SymbolTable) -> Result<SymbolValue> {
    let raw = parse_raw(text)?;
    match eval_define(&raw, symbols)? {
        DefValue::Scalar(s) => Ok(SymbolValue::Cohom(CohomExpr::constant(
            symbols.fan.ray_count(),
            s,
        ))),
        DefValue::Cohom(c) => Ok(SymbolValue::Cohom(c)),
        DefValue::Divisor(d) => Ok(SymbolValue::Divisor(d)),
        DefValue::Curve(c) => Ok(SymbolValue::Curve(c)),
    }
}

/// Evaluates a definition-mode expression that must denote a curve class.
pub fn parse_curve(text: &str, symbols: &SymbolTable) -> Result<CurveClass> {
    let raw = parse_raw(text)?;
    match eval_define(&raw, symbols)? {
        DefValue::Curve(c) => Ok(DefValue::Curve(c)).map(|v| match v {
            DefValue::Curve(c) => c,
            _ => unreachable!(),
        }),
        other => Err(Error::SymbolKindMismatch {
            pos: 0,
            name: text.trim().to_owned(),
            found: other.kind(),
            expected: "a curve class",
        }),
    }
}

// ---------------------------------------------------------------------------
// Integrand

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Scalar(Rat),
    /// 1-based mark index and an index into the class registry.
    Ev(usize, usize),
    Psi(Vec<u32>),
    /// Index into the bundle registry.
    PushEv(usize),
    /// Summands with a subtraction flag.
    Sum(Vec<(bool, Node)>),
    Product(Vec<Node>),
    Power(Box<Node>, u32),
}

/// A parsed integrand: the syntax tree plus registries of the cohomology
/// classes (for `ev`) and line bundles (for `push_ev`) it mentions.
#[derive(Debug, Clone)]
pub struct ParsedIntegrand {
    pub m: usize,
    pub root: Node,
    pub classes: Vec<CohomExpr>,
    pub bundles: Vec<(String, DivisorClass)>,
}

/// Symbolic codimension: a fixed part plus one rank term per push_ev factor
/// (the rank depends on the curve class).
#[derive(Debug, Clone, PartialEq, Eq)]
struct SymCodim {
    fixed: i64,
    pushes: BTreeMap<usize, u32>,
}

impl SymCodim {
    fn constant(c: i64) -> SymCodim {
        SymCodim {
            fixed: c,
            pushes: BTreeMap::new(),
        }
    }

    fn add(&self, other: &SymCodim) -> SymCodim {
        let mut pushes = self.pushes.clone();
        for (k, v) in &other.pushes {
            *pushes.entry(*k).or_insert(0) += v;
        }
        SymCodim {
            fixed: self.fixed + other.fixed,
            pushes,
        }
    }

    fn scale(&self, k: u32) -> SymCodim {
        SymCodim {
            fixed: self.fixed * k as i64,
            pushes: self.pushes.iter().map(|(i, v)| (*i, v * k)).collect(),
        }
    }
}

struct Lowerer<'s, 'f> {
    symbols: &'s SymbolTable<'f>,
    m: usize,
    classes: Vec<CohomExpr>,
    bundles: Vec<(String, DivisorClass)>,
}

impl Lowerer<'_, '_> {
    /// Returns the node, whether the subtree contains a psi factor, and its
    /// symbolic codimension.
    fn lower(&mut self, raw: &Raw) -> Result<(Node, bool, SymCodim)> {
        let r = self.symbols.fan.ray_count();
        match raw {
            Raw::Num(v, pos) => {
                let n = i64::try_from(*v).map_err(|_| Error::Syntax {
                    pos: *pos,
                    msg: "integer out of range".into(),
                })?;
                Ok((Node::Scalar(rat(n)), false, SymCodim::constant(0)))
            }
            Raw::Ratio(p, q, pos) => {
                let p = i64::try_from(*p).map_err(|_| Error::Syntax {
                    pos: *pos,
                    msg: "numerator out of range".into(),
                })?;
                Ok((
                    Node::Scalar(crate::rat::rat_frac(p, *q as i64)),
                    false,
                    SymCodim::constant(0),
                ))
            }
            Raw::Name(name, pos) => match self.symbols.resolve(name) {
                Some(SymbolValue::Cohom(c)) if c.codim() == Some(0) || c.is_zero() => {
                    let value = c
                        .terms()
                        .next()
                        .map(|(_, v)| v.clone())
                        .unwrap_or_else(Rat::zero);
                    Ok((Node::Scalar(value), false, SymCodim::constant(0)))
                }
                Some(v) => Err(Error::SymbolKindMismatch {
                    pos: *pos,
                    name: name.clone(),
                    found: v.kind(),
                    expected: "a scalar here (wrap classes of the target in ev(i, ...))",
                }),
                None => Err(Error::UnknownSymbol {
                    pos: *pos,
                    name: name.clone(),
                }),
            },
            Raw::Ev(index, arg, pos) => {
                if *index == 0 || *index > self.m {
                    return Err(Error::MarkIndexOutOfRange {
                        pos: *pos,
                        index: *index,
                        m: self.m,
                    });
                }
                let class = match eval_define(arg, self.symbols)? {
                    DefValue::Scalar(s) => CohomExpr::constant(r, s),
                    DefValue::Cohom(c) => c,
                    DefValue::Divisor(d) => CohomExpr::from_divisor(&d),
                    DefValue::Curve(_) => {
                        return Err(Error::SymbolKindMismatch {
                            pos: *pos,
                            name: "<ev argument>".into(),
                            found: "curve class",
                            expected: "a cohomology class",
                        })
                    }
                };
                if class.is_zero() {
                    return Err(Error::ZeroCohomClass);
                }
                let codim = class.codim().expect("nonzero class") as i64;
                let idx = match self.classes.iter().position(|c| *c == class) {
                    Some(i) => i,
                    None => {
                        self.classes.push(class);
                        self.classes.len() - 1
                    }
                };
                Ok((Node::Ev(*index, idx), false, SymCodim::constant(codim)))
            }
            Raw::Psi(args, pos) => {
                if args.len() != self.m {
                    return Err(Error::Syntax {
                        pos: *pos,
                        msg: format!(
                            "Psi takes exactly m = {} exponents, got {}",
                            self.m,
                            args.len()
                        ),
                    });
                }
                let total: u32 = args.iter().sum();
                Ok((
                    Node::Psi(args.clone()),
                    true,
                    SymCodim::constant(total as i64),
                ))
            }
            Raw::PushEv(name, pos) => {
                let bundle = match self.symbols.resolve(name) {
                    Some(SymbolValue::Divisor(d)) => d.clone(),
                    Some(v) => {
                        return Err(Error::SymbolKindMismatch {
                            pos: *pos,
                            name: name.clone(),
                            found: v.kind(),
                            expected: "a divisor class (line bundle)",
                        })
                    }
                    None => {
                        return Err(Error::UnknownSymbol {
                            pos: *pos,
                            name: name.clone(),
                        })
                    }
                };
                let idx = match self.bundles.iter().position(|(_, d)| *d == bundle) {
                    Some(i) => i,
                    None => {
                        self.bundles.push((name.clone(), bundle));
                        self.bundles.len() - 1
                    }
                };
                let mut pushes = BTreeMap::new();
                pushes.insert(idx, 1u32);
                Ok((Node::PushEv(idx), false, SymCodim { fixed: 0, pushes }))
            }
            Raw::Mg(_, _, pos) => Err(Error::SymbolKindMismatch {
                pos: *pos,
                name: "mg[i,j]".into(),
                found: "curve class",
                expected: "a scalar or an ev/Psi/push_ev factor",
            }),
            Raw::Neg(inner) => {
                let (node, has_psi, codim) = self.lower(inner)?;
                let node = match node {
                    Node::Scalar(s) => Node::Scalar(-s),
                    other => Node::Product(vec![Node::Scalar(rat(-1)), other]),
                };
                Ok((node, has_psi, codim))
            }
            Raw::Sum(parts, pos) => {
                let mut lowered = Vec::with_capacity(parts.len());
                let mut has_psi = false;
                let mut codim: Option<SymCodim> = None;
                for (negate, part) in parts {
                    let (node, psi, c) = self.lower(part)?;
                    has_psi |= psi;
                    match &codim {
                        None => codim = Some(c),
                        Some(existing) if *existing == c => {}
                        Some(_) => return Err(Error::InhomogeneousSum { pos: *pos }),
                    }
                    lowered.push((*negate, node));
                }
                Ok((Node::Sum(lowered), has_psi, codim.unwrap()))
            }
            Raw::Prod(parts, pos) => {
                let mut lowered = Vec::with_capacity(parts.len());
                let mut psi_children = 0usize;
                let mut has_psi = false;
                let mut codim = SymCodim::constant(0);
                for part in parts {
                    let (node, psi, c) = self.lower(part)?;
                    if psi {
                        psi_children += 1;
                    }
                    has_psi |= psi;
                    codim = codim.add(&c);
                    lowered.push(node);
                }
                if psi_children > 1 {
                    return Err(Error::MultiplePsi { pos: *pos });
                }
                Ok((Node::Product(lowered), has_psi, codim))
            }
            Raw::Pow(base, exp, pos) => {
                let (node, psi, codim) = self.lower(base)?;
                if psi && *exp >= 2 {
                    return Err(Error::MultiplePsi { pos: *pos });
                }
                Ok((
                    Node::Power(Box::new(node), *exp),
                    psi && *exp >= 1,
                    codim.scale(*exp),
                ))
            }
        }
    }
}

/// Parses an integrand over the given symbol table, enforcing mark bounds,
/// the single-psi-per-term rule and homogeneity of sums.
pub fn parse_expression(text: &str, m: usize, symbols: &SymbolTable) -> Result<ParsedIntegrand> {
    let raw = parse_raw(text)?;
    let mut lowerer = Lowerer {
        symbols,
        m,
        classes: Vec::new(),
        bundles: Vec::new(),
    };
    let (root, _, _) = lowerer.lower(&raw)?;
    Ok(ParsedIntegrand {
        m,
        root,
        classes: lowerer.classes,
        bundles: lowerer.bundles,
    })
}

/// Codimension of the integrand against a fixed curve class: each push_ev
/// factor contributes `pair(M, beta) + 1`.
pub fn codimension(expr: &ParsedIntegrand, beta: &CurveClass) -> Result<i64> {
    fn walk(node: &Node, expr: &ParsedIntegrand, beta: &CurveClass) -> Result<i64> {
        Ok(match node {
            Node::Scalar(_) => 0,
            Node::Ev(_, class) => expr.classes[*class].codim().unwrap() as i64,
            Node::Psi(a) => a.iter().map(|&x| x as i64).sum(),
            Node::PushEv(bundle) => cycles::pair(&expr.bundles[*bundle].1, beta)? + 1,
            Node::Sum(parts) => walk(&parts[0].1, expr, beta)?,
            Node::Product(parts) => {
                let mut acc = 0;
                for p in parts {
                    acc += walk(p, expr, beta)?;
                }
                acc
            }
            Node::Power(base, exp) => walk(base, expr, beta)? * *exp as i64,
        })
    }
    walk(&expr.root, expr, beta)
}

/// Atom evaluation hooks; the integrator supplies a table-backed
/// implementation, the direct implementation below delegates to the
/// equivariant module.
pub trait AtomEval {
    fn ev(&mut self, mark: usize, class_idx: usize) -> Result<Rat>;
    fn psi(&mut self, a: &[u32]) -> Result<Rat>;
    fn push_ev(&mut self, bundle_idx: usize) -> Result<Rat>;
}

pub fn evaluate_with(node: &Node, atoms: &mut impl AtomEval) -> Result<Rat> {
    Ok(match node {
        Node::Scalar(s) => s.clone(),
        Node::Ev(mark, class) => atoms.ev(*mark, *class)?,
        Node::Psi(a) => atoms.psi(a)?,
        Node::PushEv(bundle) => atoms.push_ev(*bundle)?,
        Node::Sum(parts) => {
            let mut acc = Rat::zero();
            for (negate, part) in parts {
                let v = evaluate_with(part, atoms)?;
                if *negate {
                    acc -= v;
                } else {
                    acc += v;
                }
            }
            acc
        }
        Node::Product(parts) => {
            let mut acc = Rat::one();
            for part in parts {
                if acc.is_zero() {
                    break;
                }
                acc *= evaluate_with(part, atoms)?;
            }
            acc
        }
        Node::Power(base, exp) => {
            let b = evaluate_with(base, atoms)?;
            crate::rat::ipow(&b, *exp as i64).expect("non-negative exponent")
        }
    })
}

struct DirectAtoms<'a, 'f> {
    expr: &'a ParsedIntegrand,
    ctx: &'a EvalContext<'f>,
    graph: &'a DecoratedGraph,
    fd: &'a FlagData,
}

impl AtomEval for DirectAtoms<'_, '_> {
    fn ev(&mut self, mark: usize, class_idx: usize) -> Result<Rat> {
        ev_factor(self.ctx, self.graph, mark, &self.expr.classes[class_idx])
    }

    fn psi(&mut self, a: &[u32]) -> Result<Rat> {
        psi_factor(self.ctx, self.graph, self.fd, a)
    }

    fn push_ev(&mut self, bundle_idx: usize) -> Result<Rat> {
        push_ev_factor(self.ctx, self.graph, self.fd, &self.expr.bundles[bundle_idx].1)
    }
}

/// Evaluates the integrand on one decorated graph, exact.
pub fn evaluate(
    expr: &ParsedIntegrand,
    ctx: &EvalContext,
    graph: &DecoratedGraph,
    fd: &FlagData,
) -> Result<Rat> {
    let mut atoms = DirectAtoms {
        expr,
        ctx,
        graph,
        fd,
    };
    evaluate_with(&expr.root, &mut atoms)
}

// ---------------------------------------------------------------------------
// Pretty-printing

impl fmt::Display for ParsedIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, self, 0)
    }
}

/// Precedence levels: 0 sum, 1 product, 2 power/atom.
fn write_node(
    f: &mut fmt::Formatter<'_>,
    node: &Node,
    expr: &ParsedIntegrand,
    parent_level: u8,
) -> fmt::Result {
    let level = match node {
        Node::Sum(_) => 0,
        Node::Product(_) => 1,
        _ => 2,
    };
    let parens = level < parent_level;
    if parens {
        write!(f, "(")?;
    }
    match node {
        Node::Scalar(s) => write_scalar(f, s)?,
        Node::Ev(mark, class) => {
            write!(f, "ev({mark},{})", cohom_to_string(&expr.classes[*class]))?
        }
        Node::Psi(a) => {
            write!(f, "Psi(")?;
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, ")")?
        }
        Node::PushEv(bundle) => write!(f, "push_ev({})", expr.bundles[*bundle].0)?,
        Node::Sum(parts) => {
            for (i, (negate, part)) in parts.iter().enumerate() {
                if i > 0 {
                    write!(f, "{}", if *negate { "-" } else { "+" })?;
                } else if *negate {
                    write!(f, "-")?;
                }
                write_node(f, part, expr, 1)?;
            }
        }
        Node::Product(parts) => {
            for (i, part) in parts.iter().enumerate() {
                if i > 0 {
                    write!(f, "*")?;
                }
                write_node(f, part, expr, 2)?;
            }
        }
        Node::Power(base, exp) => {
            // A power's base must be an atom; wrap anything lower.
            match **base {
                Node::Sum(_) | Node::Product(_) | Node::Power(_, _) => {
                    write!(f, "(")?;
                    write_node(f, base, expr, 0)?;
                    write!(f, ")")?;
                }
                _ => write_node(f, base, expr, 2)?,
            }
            write!(f, "^{exp}")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

fn write_scalar(f: &mut fmt::Formatter<'_>, s: &Rat) -> fmt::Result {
    if s.denom().is_one() {
        write!(f, "{}", s.numer())
    } else {
        write!(f, "{}//{}", s.numer(), s.denom())
    }
}

fn scalar_to_string(s: &Rat) -> String {
    if s.denom().is_one() {
        format!("{}", s.numer())
    } else {
        format!("{}//{}", s.numer(), s.denom())
    }
}

/// Canonical polynomial form over D1..Dr, parseable by the define grammar.
pub fn cohom_to_string(c: &CohomExpr) -> String {
    if c.is_zero() {
        return "0".to_owned();
    }
    let mut out = String::new();
    for (i, (exps, coeff)) in c.terms().enumerate() {
        let negative = coeff.is_negative();
        let mag = if negative { -coeff.clone() } else { coeff.clone() };
        if i == 0 {
            if negative {
                out.push('-');
            }
        } else {
            out.push(if negative { '-' } else { '+' });
        }
        let mut factors: Vec<String> = Vec::new();
        if !mag.is_one() || exps.iter().all(|&k| k == 0) {
            factors.push(scalar_to_string(&mag));
        }
        for (ray, &k) in exps.iter().enumerate() {
            if k == 1 {
                factors.push(format!("D{}", ray + 1));
            } else if k > 1 {
                factors.push(format!("D{}^{k}", ray + 1));
            }
        }
        out.push_str(&factors.join("*"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivariant::{sample_weights, OrientationPolicy};
    use crate::graphs;

    fn p3_symbols(fan: &Fan) -> SymbolTable<'_> {
        let mut s = SymbolTable::new(fan);
        let h = SymbolValue::Divisor(DivisorClass::unit(4, 0));
        s.define("h", h);
        s
    }

    #[test]
    fn parses_the_conic_integrand() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        let e = parse_expression(
            "ev(1,h^3)*ev(2,h^3)*ev(3,h^3)*ev(4,h^2)*ev(5,h^2)",
            5,
            &s,
        )
        .unwrap();
        let beta = CurveClass(vec![2, 2, 2, 2]);
        assert_eq!(codimension(&e, &beta).unwrap(), 13);
        assert_eq!(e.classes.len(), 2); // h^3 and h^2, deduplicated
    }

    #[test]
    fn parses_the_tangency_integrand() {
        let p3 = Fan::projective_space(3);
        let mut s = p3_symbols(&p3);
        let four_h = parse_define("4*h", &s).unwrap();
        s.define("l", four_h);
        let e = parse_expression(
            "1//4*(ev(1,l)^3+3*ev(1,l)^2*Psi(1)+2*ev(1,l)*Psi(2))*ev(1,h)^2",
            1,
            &s,
        )
        .unwrap();
        let beta = CurveClass(vec![1, 1, 1, 1]);
        assert_eq!(codimension(&e, &beta).unwrap(), 5);
    }

    #[test]
    fn inhomogeneous_sum_rejected() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        let err = parse_expression("ev(1,h)+ev(1,h^2)", 1, &s).unwrap_err();
        assert_eq!(err.name(), "InhomogeneousSum");
    }

    #[test]
    fn multiple_psi_rejected() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        assert_eq!(
            parse_expression("Psi(1)*Psi(1)", 1, &s).unwrap_err().name(),
            "MultiplePsi"
        );
        assert_eq!(
            parse_expression("Psi(1)^2", 1, &s).unwrap_err().name(),
            "MultiplePsi"
        );
        assert_eq!(
            parse_expression("(ev(1,h)+Psi(1))*Psi(1)", 1, &s)
                .unwrap_err()
                .name(),
            "MultiplePsi"
        );
        // One psi per term is fine, also under a sum.
        assert!(parse_expression("ev(1,h)*Psi(1)+Psi(1)*ev(1,h)", 1, &s).is_ok());
    }

    #[test]
    fn mark_bounds_checked() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        assert_eq!(
            parse_expression("ev(3,h)", 2, &s).unwrap_err().name(),
            "MarkIndexOutOfRange"
        );
        assert_eq!(
            parse_expression("ev(0,h)", 2, &s).unwrap_err().name(),
            "MarkIndexOutOfRange"
        );
        assert_eq!(
            parse_expression("Psi(1,2,3)", 2, &s).unwrap_err().name(),
            "SyntaxError"
        );
    }

    #[test]
    fn syntax_errors_report_positions() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        match parse_expression("ev(1,h) + ", 1, &s).unwrap_err() {
            Error::Syntax { pos, .. } => assert_eq!(pos, 10),
            other => panic!("unexpected {other:?}"),
        }
        match parse_expression("ev(1,hh)", 1, &s).unwrap_err() {
            Error::UnknownSymbol { pos, name } => {
                assert_eq!(pos, 5);
                assert_eq!(name, "hh");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_class_in_ev_rejected() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        assert_eq!(
            parse_expression("ev(1,h-h)", 1, &s).unwrap_err().name(),
            "ZeroCohomClass"
        );
    }

    #[test]
    fn define_mode_arithmetic() {
        let p3 = Fan::projective_space(3);
        let mg = cycles::moment_graph(&p3);
        let mut s = SymbolTable::new(&p3).with_moment_graph(&mg);
        match parse_define("D1+D2", &s).unwrap() {
            SymbolValue::Divisor(d) => assert_eq!(d.0, vec![1, 1, 0, 0]),
            other => panic!("unexpected {other:?}"),
        }
        match parse_define("2*anticanonical", &s).unwrap() {
            SymbolValue::Divisor(d) => assert_eq!(d.0, vec![2, 2, 2, 2]),
            other => panic!("unexpected {other:?}"),
        }
        match parse_define("D1*D2", &s).unwrap() {
            SymbolValue::Cohom(c) => assert_eq!(c.codim(), Some(2)),
            other => panic!("unexpected {other:?}"),
        }
        s.define(
            "line",
            parse_define("mg[1,2]", &s).unwrap(),
        );
        let beta = parse_curve("2*line", &s).unwrap();
        assert_eq!(beta.0, vec![2, 2, 2, 2]);
        let beta = parse_curve("mg[1,2]-mg[1,3]", &s).unwrap();
        assert_eq!(beta.0, vec![0, 0, 0, 0]);
        assert_eq!(
            parse_curve("D1", &s).unwrap_err().name(),
            "SymbolKindMismatch"
        );
    }

    #[test]
    fn evaluation_matches_direct_product_of_factors() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        let e = parse_expression("ev(1,h)*ev(1,h)", 1, &s).unwrap();
        let e_sq = parse_expression("ev(1,h)^2", 1, &s).unwrap();
        let ctx = EvalContext::new(
            &p3,
            sample_weights(4, 7),
            OrientationPolicy::default(),
        )
        .unwrap();
        let beta = CurveClass(vec![1, 1, 1, 1]);
        for g in graphs::decorated_graphs(&p3, &beta, 1).unwrap() {
            let fd = FlagData::new(&ctx, &g.tree, &g.coloring, &g.weights).unwrap();
            let a = evaluate(&e, &ctx, &g, &fd).unwrap();
            let b = evaluate(&e_sq, &ctx, &g, &fd).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn grading_consistent_under_regrouping() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        let beta = CurveClass(vec![1, 1, 1, 1]);
        let pairs = [
            ("ev(1,h)*(ev(1,h)+ev(1,D2))", "ev(1,h)*ev(1,h)+ev(1,h)*ev(1,D2)"),
            ("(ev(1,h)+ev(1,D2))^2", "ev(1,h^2+2*h*D2+D2^2)"),
            ("2*ev(1,h^3)", "ev(1,2*h^3)"),
        ];
        for (a, b) in pairs {
            let ea = parse_expression(a, 1, &s).unwrap();
            let eb = parse_expression(b, 1, &s).unwrap();
            assert_eq!(
                codimension(&ea, &beta).unwrap(),
                codimension(&eb, &beta).unwrap(),
                "{a} vs {b}"
            );
        }
    }

    #[test]
    fn pretty_print_round_trips() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        let sources = [
            ("ev(1,D1^3)*ev(2,D1^2)", 2),
            (
                "1//4*(ev(1,D1)^3+3*ev(1,D1)^2*Psi(1,0)+2*ev(1,D1)*Psi(2,0))*ev(2,D1)^2",
                2,
            ),
            ("push_ev(anticanonical)*Psi(1)", 1),
            ("ev(1,D1+D2)-ev(1,D3)", 1),
            ("-3*ev(1,D1)", 1),
        ];
        for (src, m) in sources {
            let e = parse_expression(src, m, &s).unwrap();
            let printed = e.to_string();
            let reparsed = parse_expression(&printed, m, &s).unwrap();
            assert_eq!(e.root, reparsed.root, "{src} -> {printed}");
            assert_eq!(e.classes, reparsed.classes);
            // And the printer is idempotent on its own output.
            assert_eq!(printed, reparsed.to_string());
        }
    }

    #[test]
    fn push_ev_requires_divisor() {
        let p3 = Fan::projective_space(3);
        let mut s = p3_symbols(&p3);
        s.define("pt", SymbolValue::Cohom(cycles::point_class(&p3)));
        assert_eq!(
            parse_expression("push_ev(pt)", 0, &s).unwrap_err().name(),
            "SymbolKindMismatch"
        );
        assert!(parse_expression("push_ev(anticanonical)", 0, &s).is_ok());
    }

    #[test]
    fn codimension_of_push_ev_depends_on_beta() {
        let p3 = Fan::projective_space(3);
        let s = p3_symbols(&p3);
        let e = parse_expression("push_ev(anticanonical)", 0, &s).unwrap();
        let line = CurveClass(vec![1, 1, 1, 1]);
        let conic = CurveClass(vec![2, 2, 2, 2]);
        assert_eq!(codimension(&e, &line).unwrap(), 5);
        assert_eq!(codimension(&e, &conic).unwrap(), 9);
    }
}
