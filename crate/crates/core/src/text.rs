//! Text encoding for benchmark problems and a small expression language with
//! symbolic differentiation.
//!
//! A problem file is line oriented; `#` starts a comment and a trailing `\`
//! joins the next line:
//!
//! ```text
//! name HS95
//! vars 6
//! let  s = x1*x3                # named subexpression, inlined where used
//! minimize 4.3*x1 + 31.8*x2
//! ineq 17.1*x1 - 169*s - 4.97   # expression >= 0
//! eq   x1 + x2 - 1              # expression = 0
//! bound x1 0 0.31               # lower upper; '-' for none
//! start 0 0 0 0 0 0
//! interior 0.17 0.011 0.048 0.032 0.021 0.0098
//! interior_note how the interior start was chosen
//! reference_objective 0.015621
//! solution 0.0 0.0 ...          # optional
//! epsilon 1e-4                  # optional merit tolerance
//! multipliers gradient           # optional: unit (default) or gradient
//! ```
//!
//! Expressions use `+ - * / ^`, parentheses, numbers, variables `x1..xn`,
//! `let` names and the functions `exp log sqrt sin cos`. Exponents must be
//! constant.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{ComposedProblem, SmoothFunction};
use crate::problems::{table_row, BenchmarkEntry, Source};
use crate::solver::MultiplierStart;

pub const BUILTIN_FILES: [(&str, &str); 7] = [
    ("hs059.nlp", include_str!("../problems/hs059.nlp")),
    ("hs084.nlp", include_str!("../problems/hs084.nlp")),
    ("hs095.nlp", include_str!("../problems/hs095.nlp")),
    ("hs096.nlp", include_str!("../problems/hs096.nlp")),
    ("hs097.nlp", include_str!("../problems/hs097.nlp")),
    ("hs098.nlp", include_str!("../problems/hs098.nlp")),
    ("hs101.nlp", include_str!("../problems/hs101.nlp")),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing '{0}' entry")]
    Missing(&'static str),
    #[error("{0}")]
    Expr(String),
}

// ---------------------------------------------------------------------------
// Expressions

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Node, Node),
    Sub(Node, Node),
    Mul(Node, Node),
    Div(Node, Node),
    Neg(Node),
    /// Constant exponent.
    Pow(Node, f64),
    Exp(Node),
    Log(Node),
    Sqrt(Node),
    Sin(Node),
    Cos(Node),
}

pub type Node = Arc<Expr>;

fn c(v: f64) -> Node {
    Arc::new(Expr::Const(v))
}

fn as_const(e: &Node) -> Option<f64> {
    match **e {
        Expr::Const(v) => Some(v),
        _ => None,
    }
}

fn add(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => c(x + y),
        (Some(z), _) if z == 0.0 => b,
        (_, Some(z)) if z == 0.0 => a,
        _ => Arc::new(Expr::Add(a, b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => c(x - y),
        (_, Some(z)) if z == 0.0 => a,
        (Some(z), _) if z == 0.0 => neg(b),
        _ => Arc::new(Expr::Sub(a, b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => c(x * y),
        (Some(z), _) | (_, Some(z)) if z == 0.0 => c(0.0),
        (Some(o), _) if o == 1.0 => b,
        (_, Some(o)) if o == 1.0 => a,
        _ => Arc::new(Expr::Mul(a, b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) if y != 0.0 => c(x / y),
        (Some(z), _) if z == 0.0 => c(0.0),
        (_, Some(o)) if o == 1.0 => a,
        _ => Arc::new(Expr::Div(a, b)),
    }
}

fn neg(a: Node) -> Node {
    match &*a {
        Expr::Const(x) => c(-x),
        Expr::Neg(inner) => inner.clone(),
        _ => Arc::new(Expr::Neg(a)),
    }
}

fn pow(a: Node, k: f64) -> Node {
    if k == 0.0 {
        return c(1.0);
    }
    if k == 1.0 {
        return a;
    }
    match *a {
        Expr::Const(x) => c(x.powf(k)),
        _ => Arc::new(Expr::Pow(a, k)),
    }
}

fn unary(f: fn(Node) -> Expr, eval: fn(f64) -> f64, a: Node) -> Node {
    match as_const(&a) {
        Some(x) => c(eval(x)),
        None => Arc::new(f(a)),
    }
}

pub fn eval(e: &Expr, x: &[f64]) -> f64 {
    match e {
        Expr::Const(v) => *v,
        Expr::Var(i) => x[*i],
        Expr::Add(a, b) => eval(a, x) + eval(b, x),
        Expr::Sub(a, b) => eval(a, x) - eval(b, x),
        Expr::Mul(a, b) => eval(a, x) * eval(b, x),
        Expr::Div(a, b) => eval(a, x) / eval(b, x),
        Expr::Neg(a) => -eval(a, x),
        Expr::Pow(a, k) => {
            let base = eval(a, x);
            if k.fract() == 0.0 && k.abs() <= 16.0 {
                base.powi(*k as i32)
            } else {
                base.powf(*k)
            }
        }
        Expr::Exp(a) => eval(a, x).exp(),
        Expr::Log(a) => eval(a, x).ln(),
        Expr::Sqrt(a) => eval(a, x).sqrt(),
        Expr::Sin(a) => eval(a, x).sin(),
        Expr::Cos(a) => eval(a, x).cos(),
    }
}

/// Symbolic partial derivative with respect to variable `i`.
pub fn diff(e: &Node, i: usize) -> Node {
    match &**e {
        Expr::Const(_) => c(0.0),
        Expr::Var(j) => c(if *j == i { 1.0 } else { 0.0 }),
        Expr::Add(a, b) => add(diff(a, i), diff(b, i)),
        Expr::Sub(a, b) => sub(diff(a, i), diff(b, i)),
        Expr::Mul(a, b) => add(mul(diff(a, i), b.clone()), mul(a.clone(), diff(b, i))),
        Expr::Div(a, b) => {
            let da = diff(a, i);
            let db = diff(b, i);
            if as_const(&db) == Some(0.0) {
                div(da, b.clone())
            } else {
                div(sub(mul(da, b.clone()), mul(a.clone(), db)), pow(b.clone(), 2.0))
            }
        }
        Expr::Neg(a) => neg(diff(a, i)),
        Expr::Pow(a, k) => mul(mul(c(*k), pow(a.clone(), k - 1.0)), diff(a, i)),
        Expr::Exp(a) => mul(e.clone(), diff(a, i)),
        Expr::Log(a) => div(diff(a, i), a.clone()),
        Expr::Sqrt(a) => div(diff(a, i), mul(c(2.0), e.clone())),
        Expr::Sin(a) => mul(unary(Expr::Cos, f64::cos, a.clone()), diff(a, i)),
        Expr::Cos(a) => neg(mul(unary(Expr::Sin, f64::sin, a.clone()), diff(a, i))),
    }
}

fn max_var(e: &Expr) -> Option<usize> {
    match e {
        Expr::Const(_) => None,
        Expr::Var(i) => Some(*i),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => max_var(a).max(max_var(b)),
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Log(a) | Expr::Sqrt(a) | Expr::Sin(a) | Expr::Cos(a) => max_var(a),
    }
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    lets: &'a HashMap<String, Node>,
    n: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Tok::Num(text.parse().map_err(|_| format!("bad number '{text}'"))?));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(ch) {
            out.push(Tok::Op(ch));
            i += 1;
        } else {
            return Err(format!("unexpected character '{ch}'"));
        }
    }
    Ok(out)
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, String> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = add(lhs, self.term()?);
            } else if self.eat('-') {
                lhs = sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, String> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = mul(lhs, self.unary()?);
            } else if self.eat('/') {
                lhs = div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, String> {
        if self.eat('-') {
            return Ok(neg(self.unary()?));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, String> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            let k = as_const(&exponent).ok_or("exponents must be constant")?;
            return Ok(pow(base, k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, String> {
        let tok = self.peek().cloned().ok_or("unexpected end of expression")?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(c(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err("missing ')'".into());
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                let func: Option<(fn(Node) -> Expr, fn(f64) -> f64)> = match name.as_str() {
                    "exp" => Some((Expr::Exp, f64::exp)),
                    "log" => Some((Expr::Log, f64::ln)),
                    "sqrt" => Some((Expr::Sqrt, f64::sqrt)),
                    "sin" => Some((Expr::Sin, f64::sin)),
                    "cos" => Some((Expr::Cos, f64::cos)),
                    _ => None,
                };
                if let Some((ctor, ev)) = func {
                    if !self.eat('(') {
                        return Err(format!("'{name}' needs an argument in parentheses"));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err("missing ')'".into());
                    }
                    return Ok(unary(ctor, ev, arg));
                }
                if let Some(e) = self.lets.get(&name) {
                    return Ok(e.clone());
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if idx == 0 || idx > self.n {
                        return Err(format!("variable {name} out of range 1..={}", self.n));
                    }
                    return Ok(Arc::new(Expr::Var(idx - 1)));
                }
                Err(format!("unknown name '{name}'"))
            }
            Tok::Op(op) => Err(format!("unexpected '{op}'")),
        }
    }
}

/// Parses one expression over `n` variables.
pub fn parse_expr(s: &str, n: usize, lets: &HashMap<String, Node>) -> Result<Node, String> {
    let mut p = Parser { toks: tokenize(s)?, pos: 0, lets, n };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(format!("trailing input at token {}", p.pos + 1));
    }
    Ok(e)
}

/// Expression component with precomputed symbolic derivatives.
#[derive(Debug, Clone)]
pub struct ExprFunction {
    n: usize,
    value: Node,
    gradient: Vec<Node>,
    /// Upper triangle `j <= k`, row-major.
    hessian: Vec<Node>,
    /// `T_ijk` for `i <= j <= k`.
    third: HashMap<(usize, usize, usize), Node>,
}

impl ExprFunction {
    pub fn new(value: Node, n: usize) -> Self {
        let gradient: Vec<Node> = (0..n).map(|i| diff(&value, i)).collect();
        let mut hessian = Vec::new();
        let mut third = HashMap::new();
        for j in 0..n {
            for k in j..n {
                let hjk = diff(&gradient[j], k);
                for i in 0..=j {
                    let t = diff(&hjk, i);
                    if as_const(&t) != Some(0.0) {
                        third.insert((i, j, k), t);
                    }
                }
                hessian.push(hjk);
            }
        }
        Self { n, value, gradient, hessian, third }
    }
}

impl SmoothFunction for ExprFunction {
    fn value(&self, x: &DVector<f64>) -> f64 {
        eval(&self.value, x.as_slice())
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n, self.gradient.iter().map(|g| eval(g, x.as_slice())))
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        let mut idx = 0;
        for j in 0..self.n {
            for k in j..self.n {
                let v = eval(&self.hessian[idx], x.as_slice());
                h[(j, k)] = v;
                h[(k, j)] = v;
                idx += 1;
            }
        }
        h
    }

    fn third(&self, x: &DVector<f64>, d: &DVector<f64>) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(self.n);
        for (&(i, j, k), t) in &self.third {
            let v = eval(t, x.as_slice());
            // every distinct permutation of (i, j, k) contributes once
            let mut perms = [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)].to_vec();
            perms.sort_unstable();
            perms.dedup();
            for (a, b, cc) in perms {
                out[a] += v * d[b] * d[cc];
            }
        }
        Some(out)
    }
}

// ---------------------------------------------------------------------------
// Problem files

#[derive(Debug, Clone)]
pub struct ParsedProblem {
    pub name: String,
    pub n: usize,
    pub objective: Node,
    pub equalities: Vec<Node>,
    pub inequalities: Vec<Node>,
    pub bounds: Vec<(usize, Option<f64>, Option<f64>)>,
    pub start: Vec<f64>,
    pub interior: Vec<f64>,
    pub interior_note: String,
    pub reference_objective: f64,
    pub solution: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub multipliers: MultiplierStart,
}

fn logical_lines(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim_end();
        let (body, cont) = match line.strip_suffix('\\') {
            Some(b) => (b, true),
            None => (line, false),
        };
        let entry = pending.get_or_insert_with(|| (no + 1, String::new()));
        entry.1.push(' ');
        entry.1.push_str(body);
        if !cont {
            let (l, s) = pending.take().unwrap();
            if !s.trim().is_empty() {
                out.push((l, s.trim().to_string()));
            }
        }
    }
    if let Some((l, s)) = pending {
        if !s.trim().is_empty() {
            out.push((l, s.trim().to_string()));
        }
    }
    out
}

fn numbers(line: usize, s: &str) -> Result<Vec<f64>, ParseError> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| ParseError::Line { line, msg: format!("bad number '{t}'") }))
        .collect()
}

pub fn parse_problem(text: &str) -> Result<ParsedProblem, ParseError> {
    let mut name = None;
    let mut n = None;
    let mut lets = HashMap::new();
    let mut objective = None;
    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();
    let mut bounds = Vec::new();
    let mut start = None;
    let mut interior = None;
    let mut interior_note = String::new();
    let mut reference_objective = None;
    let mut solution = None;
    let mut epsilon = None;
    let mut multipliers = MultiplierStart::Unit;

    for (line, content) in logical_lines(text) {
        let err = |msg: String| ParseError::Line { line, msg };
        let (key, rest) = content.split_once(char::is_whitespace).unwrap_or((content.as_str(), ""));
        let rest = rest.trim();
        let nvars = || n.ok_or_else(|| err("'vars' must come before expressions".into()));
        match key {
            "name" => name = Some(rest.to_string()),
            "vars" => n = Some(rest.parse::<usize>().map_err(|_| err(format!("bad variable count '{rest}'")))?),
            "let" => {
                let (lhs, rhs) = rest.split_once('=').ok_or_else(|| err("expected 'let name = expr'".into()))?;
                let e = parse_expr(rhs, nvars()?, &lets).map_err(err)?;
                lets.insert(lhs.trim().to_string(), e);
            }
            "minimize" => objective = Some(parse_expr(rest, nvars()?, &lets).map_err(err)?),
            "eq" => equalities.push(parse_expr(rest, nvars()?, &lets).map_err(err)?),
            "ineq" => inequalities.push(parse_expr(rest, nvars()?, &lets).map_err(err)?),
            "bound" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(err("expected 'bound xi lower upper'".into()));
                }
                let idx = parts[0]
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&i| i >= 1 && i <= nvars().unwrap_or(0))
                    .ok_or_else(|| err(format!("bad bound variable '{}'", parts[0])))?;
                let num = |t: &str| -> Result<Option<f64>, ParseError> {
                    if t == "-" {
                        Ok(None)
                    } else {
                        t.parse().map(Some).map_err(|_| err(format!("bad bound '{t}'")))
                    }
                };
                bounds.push((idx - 1, num(parts[1])?, num(parts[2])?));
            }
            "start" => start = Some(numbers(line, rest)?),
            "interior" => interior = Some(numbers(line, rest)?),
            "interior_note" => interior_note = rest.to_string(),
            "reference_objective" => {
                reference_objective = Some(rest.parse::<f64>().map_err(|_| err(format!("bad number '{rest}'")))?)
            }
            "solution" => solution = Some(numbers(line, rest)?),
            "epsilon" => epsilon = Some(rest.parse::<f64>().map_err(|_| err(format!("bad number '{rest}'")))?),
            "multipliers" => multipliers = rest.parse().map_err(err)?,
            other => return Err(err(format!("unknown key '{other}'"))),
        }
    }

    let n = n.ok_or(ParseError::Missing("vars"))?;
    let parsed = ParsedProblem {
        name: name.ok_or(ParseError::Missing("name"))?,
        n,
        objective: objective.ok_or(ParseError::Missing("minimize"))?,
        equalities,
        inequalities,
        bounds,
        start: start.ok_or(ParseError::Missing("start"))?,
        interior: interior.ok_or(ParseError::Missing("interior"))?,
        interior_note,
        reference_objective: reference_objective.ok_or(ParseError::Missing("reference_objective"))?,
        solution,
        epsilon,
        multipliers,
    };
    for (what, v) in [("start", Some(&parsed.start)), ("interior", Some(&parsed.interior)), ("solution", parsed.solution.as_ref())] {
        if let Some(v) = v {
            if v.len() != n {
                return Err(ParseError::Expr(format!("{what} has {} entries, expected {n}", v.len())));
            }
        }
    }
    let all = std::iter::once(&parsed.objective).chain(&parsed.equalities).chain(&parsed.inequalities);
    for e in all {
        if max_var(e).is_some_and(|m| m >= n) {
            return Err(ParseError::Expr("variable index out of range".into()));
        }
    }
    Ok(parsed)
}

impl ParsedProblem {
    pub fn to_problem(&self) -> ComposedProblem {
        let mut prob = ComposedProblem::new(self.name.clone(), self.n, ExprFunction::new(self.objective.clone(), self.n));
        for e in &self.equalities {
            prob = prob.equality(ExprFunction::new(e.clone(), self.n));
        }
        for e in &self.inequalities {
            prob = prob.inequality(ExprFunction::new(e.clone(), self.n));
        }
        for &(i, lo, hi) in &self.bounds {
            prob = prob.bounds(i, lo, hi);
        }
        prob
    }

    pub fn into_entry(self) -> BenchmarkEntry {
        let prob = self.to_problem().validated().expect("text problem shape");
        BenchmarkEntry {
            table: table_row(&self.name),
            name: self.name,
            problem: Arc::new(prob),
            standard_start: DVector::from_vec(self.start),
            interior_start: DVector::from_vec(self.interior),
            start_note: self.interior_note,
            multipliers: self.multipliers,
            reference_objective: self.reference_objective,
            reference_solution: self.solution.map(DVector::from_vec),
            epsilon: self.epsilon,
            source: Source::TextFormat,
            note: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, n: usize) -> Node {
        parse_expr(s, n, &HashMap::new()).unwrap()
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(eval(&p("1 + 2*3^2", 0), &[]), 19.0);
        assert_eq!(eval(&p("-2^2", 0), &[]), -4.0);
        assert_eq!(eval(&p("2^-1", 0), &[]), 0.5);
        assert_eq!(eval(&p("(1+2)*3", 0), &[]), 9.0);
        assert_eq!(eval(&p("8/2/2", 0), &[]), 2.0);
        assert_eq!(eval(&p("1.5e-3*1e3", 0), &[]), 1.5);
        assert_eq!(eval(&p("x2^(1/3)", 2), &[0.0, 8.0]), 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        let lets = HashMap::new();
        assert!(parse_expr("x3", 2, &lets).is_err());
        assert!(parse_expr("x1^x2", 2, &lets).is_err());
        assert!(parse_expr("foo(x1)", 2, &lets).is_err());
        assert!(parse_expr("(x1", 2, &lets).is_err());
        assert!(parse_expr("x1 x2", 2, &lets).is_err());
    }

    #[test]
    fn symbolic_derivatives_match_closed_forms() {
        let f = ExprFunction::new(p("x1^3*x2 + exp(x1*x2) + log(x2) - sqrt(x1)/x2", 2), 2);
        let x = DVector::from_row_slice(&[1.3, 0.7]);
        let (a, b): (f64, f64) = (x[0], x[1]);
        let e = (a * b).exp();
        let g = f.gradient(&x);
        let g_ref = [
            3.0 * a * a * b + b * e - 0.5 / (a.sqrt() * b),
            a.powi(3) + a * e + 1.0 / b + a.sqrt() / (b * b),
        ];
        for i in 0..2 {
            assert!((g[i] - g_ref[i]).abs() < 1e-12, "{i}: {} vs {}", g[i], g_ref[i]);
        }
        let h = f.hessian(&x);
        let h11 = 6.0 * a * b + b * b * e + 0.25 / (a.powf(1.5) * b);
        let h12 = 3.0 * a * a + e + a * b * e + 0.5 / (a.sqrt() * b * b);
        let h22 = a * a * e - 1.0 / (b * b) - 2.0 * a.sqrt() / b.powi(3);
        assert!((h[(0, 0)] - h11).abs() < 1e-12);
        assert!((h[(0, 1)] - h12).abs() < 1e-12 && (h[(1, 0)] - h12).abs() < 1e-12);
        assert!((h[(1, 1)] - h22).abs() < 1e-12);
    }

    #[test]
    fn third_order_contraction_of_a_cubic() {
        // f = x1^2 x2: T_112 = 2 (all permutations)
        let f = ExprFunction::new(p("x1^2*x2", 2), 2);
        let x = DVector::from_row_slice(&[0.3, -1.1]);
        let d = DVector::from_row_slice(&[0.5, 2.0]);
        let t = f.third(&x, &d).unwrap();
        assert!((t[0] - 2.0 * 2.0 * d[0] * d[1]).abs() < 1e-14);
        assert!((t[1] - 2.0 * d[0] * d[0]).abs() < 1e-14);
    }

    #[test]
    fn file_round_trip() {
        let text = "name T1\nvars 2\nlet s = x1 + \\\n  x2\nminimize s^2  # comment\nineq 1 - s\neq x1 - x2\nbound x1 0 -\nstart 0.1 0.1\ninterior 0.1 0.1\nreference_objective 0\n";
        let pp = parse_problem(text).unwrap();
        assert_eq!(pp.name, "T1");
        assert_eq!(pp.bounds, vec![(0, Some(0.0), None)]);
        let prob = pp.to_problem();
        use crate::model::NlpProblem;
        assert_eq!((prob.n(), prob.m(), prob.p()), (2, 1, 2));
        let x = DVector::from_row_slice(&[0.25, 0.5]);
        assert_eq!(prob.f(&x), 0.5625);
        assert_eq!(prob.g(&x), DVector::from_row_slice(&[0.25, 0.25]));
    }

    #[test]
    fn missing_and_unknown_keys() {
        assert_eq!(parse_problem("vars 1\n").unwrap_err(), ParseError::Missing("name"));
        assert!(matches!(parse_problem("name a\nfoo 1\n"), Err(ParseError::Line { line: 2, .. })));
        assert!(matches!(parse_problem("name a\nminimize x1\n"), Err(ParseError::Line { line: 2, .. })));
    }

    #[test]
    fn builtin_files_parse() {
        for (file, text) in BUILTIN_FILES {
            parse_problem(text).unwrap_or_else(|e| panic!("{file}: {e}"));
        }
    }
}
