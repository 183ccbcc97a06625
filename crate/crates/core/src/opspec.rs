// SPDX-License-Identifier: Apache-2.0

//! Model files (`*.model`).
//!
//! A model file has three sections:
//!
//! ```text
//! [lattice]
//! sites = 2
//! boundary = open            # or periodic
//!
//! [hamiltonian]
//! hopping = 1.0              # J
//! interaction = 4.0          # U, attractive for U > 0
//! chemical_potential = 2.0   # mu
//!
//! [dissipators]
//! loss[r]: 0.2 * c(r,dn)*c(r,up)
//! ```
//!
//! A dissipator line is `label: rate * expr`. The rate is a real literal and
//! everything after the first `*` is the jump operator. A label ending in
//! `[r]` is a per-site template: the line is expanded once per site with `r`
//! bound to the site index, producing labels `loss[0]`, `loss[1]`, ...
//!
//! Expressions use `*` for products, `+`/`-` for sums, parentheses, real
//! literals (`2`, `0.5`, `1e-3`), imaginary literals (`2.5i`), the bare
//! imaginary unit `i`, and the ladder operators `c(site,spin)`,
//! `cdag(site,spin)` and `n(site,spin)` with `spin` one of `up`, `dn`.
//!
//! Parsed expressions are kept in a canonical form (see [`OperatorExpr`]) so
//! that printing a [`ModelSpec`] and parsing it back gives the same tree.

use std::fmt;

use num_complex::Complex64;

/// Largest lattice the exact tier accepts.
pub const MAX_SITES: usize = 6;

/// Deepest expression nesting accepted by the parser and the validator.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Dn,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Dn => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Spin::Up => "up",
            Spin::Dn => "dn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LadderKind {
    /// `c(site,spin)`
    Annihilate,
    /// `cdag(site,spin)`
    Create,
    /// `n(site,spin)`
    Number,
}

impl LadderKind {
    fn keyword(self) -> &'static str {
        match self {
            LadderKind::Annihilate => "c",
            LadderKind::Create => "cdag",
            LadderKind::Number => "n",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

impl Boundary {
    pub fn label(self) -> &'static str {
        match self {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        }
    }
}

/// Second-quantized operator expression.
///
/// Build composite expressions with [`OperatorExpr::product`] and
/// [`OperatorExpr::sum`]; they keep the tree canonical:
///
/// * nested products and nested sums are flattened;
/// * all scalar factors of a product are folded into one leading coefficient,
///   which is dropped when it equals one;
/// * all scalar terms of a sum are folded into one trailing constant, which is
///   dropped when it equals zero;
/// * single-element products and sums collapse to their element.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorExpr {
    Scalar(Complex64),
    Ladder { kind: LadderKind, site: usize, spin: Spin },
    Product(Vec<OperatorExpr>),
    Sum(Vec<OperatorExpr>),
}

impl OperatorExpr {
    pub fn c(site: usize, spin: Spin) -> Self {
        OperatorExpr::Ladder { kind: LadderKind::Annihilate, site, spin }
    }

    pub fn cdag(site: usize, spin: Spin) -> Self {
        OperatorExpr::Ladder { kind: LadderKind::Create, site, spin }
    }

    pub fn n(site: usize, spin: Spin) -> Self {
        OperatorExpr::Ladder { kind: LadderKind::Number, site, spin }
    }

    pub fn scalar(re: f64, im: f64) -> Self {
        OperatorExpr::Scalar(Complex64::new(re, im))
    }

    pub fn product(factors: Vec<OperatorExpr>) -> Self {
        let mut coeff = Complex64::new(1.0, 0.0);
        let mut rest = Vec::with_capacity(factors.len());
        let mut stack: Vec<OperatorExpr> = factors.into_iter().rev().collect();
        while let Some(f) = stack.pop() {
            match f {
                OperatorExpr::Scalar(z) => coeff *= z,
                OperatorExpr::Product(inner) => stack.extend(inner.into_iter().rev()),
                other => rest.push(other),
            }
        }
        if rest.is_empty() {
            return OperatorExpr::Scalar(coeff);
        }
        if coeff == Complex64::new(1.0, 0.0) {
            if rest.len() == 1 {
                return rest.pop().unwrap();
            }
            return OperatorExpr::Product(rest);
        }
        let mut out = Vec::with_capacity(rest.len() + 1);
        out.push(OperatorExpr::Scalar(coeff));
        out.extend(rest);
        OperatorExpr::Product(out)
    }

    pub fn sum(terms: Vec<OperatorExpr>) -> Self {
        let mut constant: Option<Complex64> = None;
        let mut rest = Vec::with_capacity(terms.len());
        let mut stack: Vec<OperatorExpr> = terms.into_iter().rev().collect();
        while let Some(t) = stack.pop() {
            match t {
                OperatorExpr::Scalar(z) => *constant.get_or_insert(Complex64::new(0.0, 0.0)) += z,
                OperatorExpr::Sum(inner) => stack.extend(inner.into_iter().rev()),
                other => rest.push(other),
            }
        }
        if rest.is_empty() {
            return OperatorExpr::Scalar(constant.unwrap_or_default());
        }
        if let Some(z) = constant {
            if z != Complex64::new(0.0, 0.0) {
                rest.push(OperatorExpr::Scalar(z));
            }
        }
        if rest.len() == 1 {
            return rest.pop().unwrap();
        }
        OperatorExpr::Sum(rest)
    }

    pub fn scaled(self, z: Complex64) -> Self {
        OperatorExpr::product(vec![OperatorExpr::Scalar(z), self])
    }

    /// Hermitian conjugate, with factor order reversed.
    pub fn adjoint(&self) -> Self {
        match self {
            OperatorExpr::Scalar(z) => OperatorExpr::Scalar(z.conj()),
            OperatorExpr::Ladder { kind, site, spin } => {
                let kind = match kind {
                    LadderKind::Annihilate => LadderKind::Create,
                    LadderKind::Create => LadderKind::Annihilate,
                    LadderKind::Number => LadderKind::Number,
                };
                OperatorExpr::Ladder { kind, site: *site, spin: *spin }
            }
            OperatorExpr::Product(fs) => OperatorExpr::product(fs.iter().rev().map(|f| f.adjoint()).collect()),
            OperatorExpr::Sum(ts) => OperatorExpr::sum(ts.iter().map(|t| t.adjoint()).collect()),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            OperatorExpr::Scalar(_) | OperatorExpr::Ladder { .. } => 1,
            OperatorExpr::Product(xs) | OperatorExpr::Sum(xs) => 1 + xs.iter().map(|x| x.depth()).max().unwrap_or(0),
        }
    }

    /// Sorted, deduplicated site indices the expression touches.
    pub fn sites(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let OperatorExpr::Ladder { site, .. } = e {
                out.push(*site);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn all_coefficients_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |e| {
            if let OperatorExpr::Scalar(z) = e {
                ok &= z.re.is_finite() && z.im.is_finite();
            }
        });
        ok
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a OperatorExpr)) {
        f(self);
        if let OperatorExpr::Product(xs) | OperatorExpr::Sum(xs) = self {
            for x in xs {
                x.visit(f);
            }
        }
    }
}

fn write_real(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    write!(f, "{x:?}")
}

fn write_scalar(f: &mut fmt::Formatter<'_>, z: Complex64) -> fmt::Result {
    if z.im == 0.0 {
        write_real(f, z.re)
    } else if z.re == 0.0 {
        write!(f, "{:?}i", z.im)
    } else {
        write!(f, "({:?} + {:?}i)", z.re, z.im)
    }
}

impl fmt::Display for OperatorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorExpr::Scalar(z) => write_scalar(f, *z),
            OperatorExpr::Ladder { kind, site, spin } => {
                write!(f, "{}({},{})", kind.keyword(), site, spin.label())
            }
            OperatorExpr::Product(fs) => {
                for (i, x) in fs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    match x {
                        OperatorExpr::Sum(_) => write!(f, "({x})")?,
                        _ => write!(f, "{x}")?,
                    }
                }
                Ok(())
            }
            OperatorExpr::Sum(ts) => {
                for (i, x) in ts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dissipator {
    pub label: String,
    pub rate: f64,
    pub expr: OperatorExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub num_sites: usize,
    pub hopping: f64,
    pub interaction: f64,
    pub chemical_potential: f64,
    pub boundary: Boundary,
    pub dissipators: Vec<Dissipator>,
}

impl ModelSpec {
    /// Hubbard chain without dissipators.
    pub fn hubbard(num_sites: usize, hopping: f64, interaction: f64, mu: f64) -> Self {
        ModelSpec {
            num_sites,
            hopping,
            interaction,
            chemical_potential: mu,
            boundary: Boundary::Open,
            dissipators: Vec::new(),
        }
    }

    pub fn with_dissipator(mut self, label: impl Into<String>, rate: f64, expr: OperatorExpr) -> Self {
        self.dissipators.push(Dissipator { label: label.into(), rate, expr });
        self
    }

    /// Adds one copy of `make(r)` per site, labelled `prefix[r]`.
    pub fn with_site_dissipators(mut self, prefix: &str, rate: f64, make: impl Fn(usize) -> OperatorExpr) -> Self {
        for r in 0..self.num_sites {
            self.dissipators.push(Dissipator { label: format!("{prefix}[{r}]"), rate, expr: make(r) });
        }
        self
    }

    /// Nearest-neighbour bonds `(r, r+1)`; the wrap-around bond is added for
    /// periodic chains longer than two sites.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let l = self.num_sites;
        let mut b: Vec<(usize, usize)> = (0..l.saturating_sub(1)).map(|r| (r, r + 1)).collect();
        if self.boundary == Boundary::Periodic && l > 2 {
            b.push((l - 1, 0));
        }
        b
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[lattice]")?;
        writeln!(f, "sites = {}", self.num_sites)?;
        writeln!(f, "boundary = {}", self.boundary.label())?;
        writeln!(f)?;
        writeln!(f, "[hamiltonian]")?;
        write!(f, "hopping = ")?;
        write_real(f, self.hopping)?;
        write!(f, "\ninteraction = ")?;
        write_real(f, self.interaction)?;
        write!(f, "\nchemical_potential = ")?;
        write_real(f, self.chemical_potential)?;
        writeln!(f)?;
        writeln!(f)?;
        writeln!(f, "[dissipators]")?;
        for d in &self.dissipators {
            write!(f, "{}: ", d.label)?;
            write_real(f, d.rate)?;
            match d.expr {
                OperatorExpr::Sum(_) => writeln!(f, " * ({})", d.expr)?,
                _ => writeln!(f, " * {}", d.expr)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("site index {site} out of range for {num_sites} site(s)")]
    SiteOutOfRange { site: usize, num_sites: usize },
    #[error("expression nested deeper than {0} levels")]
    TooDeep(usize),
    #[error("number `{0}` is not finite")]
    NonFinite(String),
}

/// Parse failure located at a 1-based line and column.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(line: usize, col: usize, kind: ParseErrorKind) -> Self {
        ParseError { line, col, kind }
    }

    fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError::new(line, col, ParseErrorKind::Syntax(msg.into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Imag(f64),
    Ident(String),
    Star,
    Plus,
    Minus,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn lex(text: &str, line: usize, col0: usize) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        let col = col0 + i;
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match ch {
            '*' => Some(Tok::Star),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Spanned { tok, col });
            i += 1;
            continue;
        }
        if ch.is_ascii_digit() || ch == '.' {
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
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let raw: String = chars[start..i].iter().collect();
            let value: f64 =
                raw.parse().map_err(|_| ParseError::new(line, col, ParseErrorKind::UnknownToken(raw.clone())))?;
            if !value.is_finite() {
                return Err(ParseError::new(line, col, ParseErrorKind::NonFinite(raw)));
            }
            let imag_suffix = i < chars.len()
                && chars[i] == 'i'
                && !chars.get(i + 1).is_some_and(|c| c.is_alphanumeric() || *c == '_');
            if imag_suffix {
                i += 1;
                out.push(Spanned { tok: Tok::Imag(value), col });
            } else {
                out.push(Spanned { tok: Tok::Num(value, raw), col });
            }
            continue;
        }
        if ch.is_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Spanned { tok: Tok::Ident(chars[start..i].iter().collect()), col });
            continue;
        }
        return Err(ParseError::new(line, col, ParseErrorKind::UnknownToken(ch.to_string())));
    }
    Ok(out)
}

struct SiteRef {
    site: usize,
    col: usize,
}

struct ExprParser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    line: usize,
    end_col: usize,
    template_site: Option<usize>,
    sites: Vec<SiteRef>,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |s| s.col)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::syntax(self.line, self.col(), msg)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn expr(&mut self, depth: usize) -> Result<OperatorExpr, ParseError> {
        self.guard(depth)?;
        let mut terms = vec![self.term(depth + 1)?];
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    terms.push(self.term(depth + 1)?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let t = self.term(depth + 1)?;
                    terms.push(t.scaled(Complex64::new(-1.0, 0.0)));
                }
                _ => break,
            }
        }
        Ok(OperatorExpr::sum(terms))
    }

    fn term(&mut self, depth: usize) -> Result<OperatorExpr, ParseError> {
        self.guard(depth)?;
        let mut factors = vec![self.unary(depth + 1)?];
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            factors.push(self.unary(depth + 1)?);
        }
        Ok(OperatorExpr::product(factors))
    }

    fn unary(&mut self, depth: usize) -> Result<OperatorExpr, ParseError> {
        self.guard(depth)?;
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(self.unary(depth + 1)?.scaled(Complex64::new(-1.0, 0.0)))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary(depth + 1)
            }
            _ => self.atom(depth + 1),
        }
    }

    fn atom(&mut self, depth: usize) -> Result<OperatorExpr, ParseError> {
        self.guard(depth)?;
        let col = self.col();
        let tok = self.peek().cloned().ok_or_else(|| self.err("unexpected end of expression"))?;
        self.pos += 1;
        match tok {
            Tok::Num(x, _) => Ok(OperatorExpr::scalar(x, 0.0)),
            Tok::Imag(x) => Ok(OperatorExpr::scalar(0.0, x)),
            Tok::LParen => {
                let e = self.expr(depth + 1)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "i" => Ok(OperatorExpr::scalar(0.0, 1.0)),
                "c" | "cdag" | "n" => {
                    let kind = match name.as_str() {
                        "c" => LadderKind::Annihilate,
                        "cdag" => LadderKind::Create,
                        _ => LadderKind::Number,
                    };
                    self.expect(Tok::LParen, "`(` after operator name")?;
                    let site = self.site()?;
                    self.expect(Tok::Comma, "`,` between site and spin")?;
                    let spin = self.spin()?;
                    self.expect(Tok::RParen, "`)` closing operator arguments")?;
                    Ok(OperatorExpr::Ladder { kind, site, spin })
                }
                _ => Err(ParseError::new(self.line, col, ParseErrorKind::UnknownToken(name))),
            },
            Tok::RParen => Err(ParseError::syntax(self.line, col, "unexpected `)`")),
            Tok::Comma => Err(ParseError::syntax(self.line, col, "unexpected `,`")),
            Tok::Star => Err(ParseError::syntax(self.line, col, "unexpected `*`")),
            Tok::Plus | Tok::Minus => unreachable!("handled in unary"),
        }
    }

    fn site(&mut self) -> Result<usize, ParseError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Num(_, raw)) => {
                self.pos += 1;
                let site: usize = raw.parse().map_err(|_| {
                    ParseError::syntax(self.line, col, format!("site index `{raw}` is not a non-negative integer"))
                })?;
                self.sites.push(SiteRef { site, col });
                Ok(site)
            }
            Some(Tok::Ident(name)) if name == "r" => {
                self.pos += 1;
                self.template_site.ok_or_else(|| {
                    ParseError::syntax(self.line, col, "site variable `r` outside a `label[r]` template")
                })
            }
            Some(Tok::Ident(name)) => Err(ParseError::new(self.line, col, ParseErrorKind::UnknownToken(name))),
            _ => Err(self.err("expected site index")),
        }
    }

    fn spin(&mut self) -> Result<Spin, ParseError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "up" => Ok(Spin::Up),
                    "dn" => Ok(Spin::Dn),
                    _ => Err(ParseError::new(self.line, col, ParseErrorKind::UnknownToken(name))),
                }
            }
            _ => Err(self.err("expected spin `up` or `dn`")),
        }
    }

    fn guard(&self, depth: usize) -> Result<(), ParseError> {
        if depth > 4 * MAX_DEPTH {
            Err(ParseError::new(self.line, self.col(), ParseErrorKind::TooDeep(MAX_DEPTH)))
        } else {
            Ok(())
        }
    }
}

/// Parses a standalone operator expression (no template variable).
pub fn parse_expr(text: &str) -> Result<OperatorExpr, ParseError> {
    let toks = lex(text, 1, 1)?;
    let (expr, _) = parse_tokens(&toks, 1, text.chars().count() + 1, None)?;
    Ok(expr)
}

fn parse_tokens(
    toks: &[Spanned],
    line: usize,
    end_col: usize,
    template_site: Option<usize>,
) -> Result<(OperatorExpr, Vec<SiteRef>), ParseError> {
    let mut p = ExprParser { toks, pos: 0, line, end_col, template_site, sites: Vec::new() };
    if toks.is_empty() {
        return Err(p.err("empty expression"));
    }
    let e = p.expr(0)?;
    if p.pos != toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    if e.depth() > MAX_DEPTH {
        return Err(ParseError::new(line, 1, ParseErrorKind::TooDeep(MAX_DEPTH)));
    }
    Ok((e, p.sites))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Lattice,
    Hamiltonian,
    Dissipators,
}

struct PendingDissipator {
    line: usize,
    label: String,
    template: bool,
    rate: f64,
    toks: Vec<Spanned>,
    end_col: usize,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn leading_ws(s: &str) -> usize {
    s.chars().take_while(|c| c.is_whitespace()).count()
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '[' | ']'))
}

/// Parses a model file.
pub fn parse_model(text: &str) -> Result<ModelSpec, ParseError> {
    let mut section = Section::None;
    let mut num_sites: Option<usize> = None;
    let mut boundary: Option<Boundary> = None;
    let mut ham: [Option<f64>; 3] = [None; 3];
    let mut pending: Vec<PendingDissipator> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let body = strip_comment(raw_line);
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = leading_ws(body);
        if trimmed.starts_with('[') && trimmed.ends_with(']') && section_name(trimmed).is_some() {
            section = section_name(trimmed).unwrap();
            continue;
        }
        if trimmed.starts_with('[') && !trimmed.contains(':') && !trimmed.contains('=') {
            return Err(ParseError::new(line_no, indent + 1, ParseErrorKind::UnknownToken(trimmed.to_string())));
        }
        match section {
            Section::None => {
                return Err(ParseError::syntax(line_no, indent + 1, "content before the first section header"));
            }
            Section::Lattice | Section::Hamiltonian => {
                let eq =
                    body.find('=').ok_or_else(|| ParseError::syntax(line_no, indent + 1, "expected `key = value`"))?;
                let key = body[..eq].trim();
                let val_raw = &body[eq + 1..];
                let val = val_raw.trim();
                let val_col = eq + 2 + leading_ws(val_raw);
                if val.is_empty() {
                    return Err(ParseError::syntax(line_no, val_col, "missing value"));
                }
                if section == Section::Lattice {
                    match key {
                        "sites" => {
                            if num_sites.is_some() {
                                return Err(ParseError::syntax(line_no, indent + 1, "duplicate key `sites`"));
                            }
                            let n: usize = val.parse().map_err(|_| {
                                ParseError::syntax(line_no, val_col, format!("`{val}` is not a non-negative integer"))
                            })?;
                            num_sites = Some(n);
                        }
                        "boundary" => {
                            if boundary.is_some() {
                                return Err(ParseError::syntax(line_no, indent + 1, "duplicate key `boundary`"));
                            }
                            boundary = Some(match val {
                                "open" => Boundary::Open,
                                "periodic" => Boundary::Periodic,
                                other => {
                                    return Err(ParseError::new(
                                        line_no,
                                        val_col,
                                        ParseErrorKind::UnknownToken(other.to_string()),
                                    ))
                                }
                            });
                        }
                        other => {
                            return Err(ParseError::new(
                                line_no,
                                indent + 1,
                                ParseErrorKind::UnknownToken(other.to_string()),
                            ))
                        }
                    }
                } else {
                    let slot = match key {
                        "hopping" | "J" => 0,
                        "interaction" | "U" => 1,
                        "chemical_potential" | "mu" => 2,
                        other => {
                            return Err(ParseError::new(
                                line_no,
                                indent + 1,
                                ParseErrorKind::UnknownToken(other.to_string()),
                            ))
                        }
                    };
                    if ham[slot].is_some() {
                        return Err(ParseError::syntax(line_no, indent + 1, format!("duplicate key `{key}`")));
                    }
                    ham[slot] = Some(parse_real(val, line_no, val_col)?);
                }
            }
            Section::Dissipators => pending.push(parse_dissipator_line(body, line_no)?),
        }
    }

    let num_sites = num_sites.ok_or_else(|| ParseError::syntax(1, 1, "missing `sites` in [lattice]"))?;
    let mut dissipators = Vec::new();
    for p in pending {
        if p.template {
            let stem = &p.label[..p.label.len() - 3];
            for r in 0..num_sites {
                let (expr, refs) = parse_tokens(&p.toks, p.line, p.end_col, Some(r))?;
                check_sites(&refs, num_sites, p.line)?;
                dissipators.push(Dissipator { label: format!("{stem}[{r}]"), rate: p.rate, expr });
            }
        } else {
            let (expr, refs) = parse_tokens(&p.toks, p.line, p.end_col, None)?;
            check_sites(&refs, num_sites, p.line)?;
            dissipators.push(Dissipator { label: p.label, rate: p.rate, expr });
        }
    }

    Ok(ModelSpec {
        num_sites,
        hopping: ham[0].unwrap_or(0.0),
        interaction: ham[1].unwrap_or(0.0),
        chemical_potential: ham[2].unwrap_or(0.0),
        boundary: boundary.unwrap_or_default(),
        dissipators,
    })
}

fn section_name(s: &str) -> Option<Section> {
    match s[1..s.len() - 1].trim() {
        "lattice" => Some(Section::Lattice),
        "hamiltonian" => Some(Section::Hamiltonian),
        "dissipators" => Some(Section::Dissipators),
        _ => None,
    }
}

fn check_sites(refs: &[SiteRef], num_sites: usize, line: usize) -> Result<(), ParseError> {
    match refs.iter().find(|s| s.site >= num_sites) {
        Some(s) => Err(ParseError::new(line, s.col, ParseErrorKind::SiteOutOfRange { site: s.site, num_sites })),
        None => Ok(()),
    }
}

fn parse_real(val: &str, line: usize, col: usize) -> Result<f64, ParseError> {
    let x: f64 = val.parse().map_err(|_| ParseError::new(line, col, ParseErrorKind::UnknownToken(val.to_string())))?;
    if !x.is_finite() {
        return Err(ParseError::new(line, col, ParseErrorKind::NonFinite(val.to_string())));
    }
    Ok(x)
}

fn parse_dissipator_line(body: &str, line: usize) -> Result<PendingDissipator, ParseError> {
    let indent = leading_ws(body);
    let colon = body.find(':').ok_or_else(|| ParseError::syntax(line, indent + 1, "expected `label: rate * expr`"))?;
    let label = body[..colon].trim().to_string();
    if !valid_label(&label) {
        return Err(ParseError::syntax(line, indent + 1, format!("invalid label `{label}`")));
    }
    let template = label.ends_with("[r]");
    let rest = &body[colon + 1..];
    let col0 = body[..colon + 1].chars().count() + 1;
    let toks = lex(rest, line, col0)?;
    let end_col = col0 + rest.chars().count();

    let mut pos = 0;
    let mut sign = 1.0;
    while let Some(Spanned { tok: Tok::Minus | Tok::Plus, .. }) = toks.get(pos) {
        if toks[pos].tok == Tok::Minus {
            sign = -sign;
        }
        pos += 1;
    }
    let rate = match toks.get(pos) {
        Some(Spanned { tok: Tok::Num(x, _), .. }) => sign * x,
        Some(s) => return Err(ParseError::syntax(line, s.col, "expected a real rate before `*`")),
        None => return Err(ParseError::syntax(line, end_col, "missing rate")),
    };
    pos += 1;
    match toks.get(pos) {
        Some(Spanned { tok: Tok::Star, .. }) => pos += 1,
        Some(s) => return Err(ParseError::syntax(line, s.col, "expected `*` after the rate")),
        None => return Err(ParseError::syntax(line, end_col, "missing jump operator after the rate")),
    }
    Ok(PendingDissipator { line, label, template, rate, toks: toks[pos..].to_vec(), end_col })
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    NoSites,
    CapacityExceeded { num_sites: usize, max: usize },
    NegativeRate { label: String, rate: f64 },
    NonFiniteRate { label: String },
    NonFiniteParameter { name: &'static str },
    SiteOutOfRange { label: String, site: usize },
    NonFiniteCoefficient { label: String },
    TooDeep { label: String, depth: usize },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoSites => write!(f, "lattice has no sites"),
            Issue::CapacityExceeded { num_sites, max } => {
                write!(f, "capacity exceeded: {num_sites} sites (max {max})")
            }
            Issue::NegativeRate { label, rate } => write!(f, "negative rate {rate} on `{label}`"),
            Issue::NonFiniteRate { label } => write!(f, "non-finite rate on `{label}`"),
            Issue::NonFiniteParameter { name } => write!(f, "non-finite {name}"),
            Issue::SiteOutOfRange { label, site } => write!(f, "site index {site} out of range in `{label}`"),
            Issue::NonFiniteCoefficient { label } => write!(f, "non-finite coefficient in `{label}`"),
            Issue::TooDeep { label, depth } => {
                write!(f, "expression `{label}` has depth {depth} (max {MAX_DEPTH})")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.issues.iter().map(|i| i.to_string()).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.messages().join("; "))
    }
}

/// Lists every invariant violation of `spec`; the report is empty iff the
/// spec is well formed.
pub fn validate(spec: &ModelSpec) -> ValidationReport {
    let mut issues = Vec::new();
    if spec.num_sites == 0 {
        issues.push(Issue::NoSites);
    }
    if spec.num_sites > MAX_SITES {
        issues.push(Issue::CapacityExceeded { num_sites: spec.num_sites, max: MAX_SITES });
    }
    for (name, x) in
        [("hopping", spec.hopping), ("interaction", spec.interaction), ("chemical_potential", spec.chemical_potential)]
    {
        if !x.is_finite() {
            issues.push(Issue::NonFiniteParameter { name });
        }
    }
    for d in &spec.dissipators {
        if !d.rate.is_finite() {
            issues.push(Issue::NonFiniteRate { label: d.label.clone() });
        } else if d.rate < 0.0 {
            issues.push(Issue::NegativeRate { label: d.label.clone(), rate: d.rate });
        }
        if let Some(&site) = d.expr.sites().iter().find(|&&s| s >= spec.num_sites) {
            issues.push(Issue::SiteOutOfRange { label: d.label.clone(), site });
        }
        if !d.expr.all_coefficients_finite() {
            issues.push(Issue::NonFiniteCoefficient { label: d.label.clone() });
        }
        let depth = d.expr.depth();
        if depth > MAX_DEPTH {
            issues.push(Issue::TooDeep { label: d.label.clone(), depth });
        }
    }
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HUBBARD_LOSS: &str = "\
[lattice]
sites = 2
boundary = open

[hamiltonian]
hopping = 1
interaction = 4
chemical_potential = 2

[dissipators]
loss[r]: 0.1 * c(r,dn)*c(r,up)
";

    fn two_body_loss(r: usize) -> OperatorExpr {
        OperatorExpr::Product(vec![OperatorExpr::c(r, Spin::Dn), OperatorExpr::c(r, Spin::Up)])
    }

    #[test]
    fn single_loss_line() {
        let m = parse_model("[lattice]\nsites=1\n[dissipators]\nloss: 0.1 * c(0,dn)*c(0,up)\n").unwrap();
        assert_eq!(m.dissipators.len(), 1);
        assert_eq!(m.dissipators[0].rate, 0.1);
        assert_eq!(m.dissipators[0].expr, two_body_loss(0));
    }

    #[test]
    fn hubbard_template_expands_per_site() {
        let m = parse_model(HUBBARD_LOSS).unwrap();
        let want = ModelSpec::hubbard(2, 1.0, 4.0, 2.0).with_site_dissipators("loss", 0.1, two_body_loss);
        assert_eq!(m, want);
        assert_eq!(m.dissipators[1].label, "loss[1]");
    }

    #[test]
    fn site_out_of_range_reports_position() {
        let err = parse_model("[lattice]\nsites = 2\n[dissipators]\nx: 1 * c(9,up)\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::SiteOutOfRange { site: 9, num_sites: 2 });
        assert_eq!((err.line, err.col), (4, 10));
        assert!(err.to_string().starts_with("4:10: "));
    }

    #[test]
    fn unknown_token_and_syntax() {
        let e = parse_expr("c(0,up) * q(1,dn)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownToken("q".into()));
        assert_eq!(e.col, 11);
        let e = parse_expr("c(0,up) $").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownToken("$".into()));
        let e = parse_expr("c(0,sideways)").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::UnknownToken(_)));
        let e = parse_expr("c(0,up) *").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        let e = parse_expr("(c(0,up)").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        let e = parse_model("[lattice]\nsites = 2\n[dissipators]\nx: c(0,up)\n").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        let e = parse_model("[lattice]\nsites = 2\n[bogus]\n").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::UnknownToken(_)));
    }

    #[test]
    fn scalars_fold() {
        assert_eq!(parse_expr("2*3").unwrap(), OperatorExpr::scalar(6.0, 0.0));
        assert_eq!(parse_expr("2.5i").unwrap(), OperatorExpr::scalar(0.0, 2.5));
        assert_eq!(parse_expr("i*i").unwrap(), OperatorExpr::scalar(-1.0, 0.0));
        assert_eq!(parse_expr("1*n(0,up)").unwrap(), OperatorExpr::n(0, Spin::Up));
        assert_eq!(
            parse_expr("2*c(0,up)*3").unwrap(),
            OperatorExpr::Product(vec![OperatorExpr::scalar(6.0, 0.0), OperatorExpr::c(0, Spin::Up)])
        );
        assert_eq!(
            parse_expr("n(0,up) - n(0,dn)").unwrap(),
            OperatorExpr::Sum(vec![
                OperatorExpr::n(0, Spin::Up),
                OperatorExpr::Product(vec![OperatorExpr::scalar(-1.0, 0.0), OperatorExpr::n(0, Spin::Dn)]),
            ])
        );
    }

    #[test]
    fn template_variable_outside_template_is_rejected() {
        let e = parse_model("[lattice]\nsites = 2\n[dissipators]\nx: 1 * c(r,up)\n").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn depth_limit() {
        let deep = format!("{}c(0,up){}", "(".repeat(400), ")".repeat(400));
        let e = parse_expr(&deep).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::TooDeep(MAX_DEPTH));
    }

    #[test]
    fn print_parse_round_trip() {
        let m = parse_model(HUBBARD_LOSS).unwrap().with_dissipator(
            "pair",
            0.3,
            parse_expr("(0.5 - 2i)*(c(0,up)*c(0,dn) + cdag(0,up)*cdag(0,dn)) + 1e-20").unwrap(),
        );
        let text = m.to_string();
        assert_eq!(parse_model(&text).unwrap(), m);
    }

    #[test]
    fn validate_reports() {
        let good = parse_model(HUBBARD_LOSS).unwrap();
        assert!(validate(&good).is_empty());

        let neg = good.clone().with_dissipator("bad", -1.0, OperatorExpr::n(0, Spin::Up));
        let r = validate(&neg);
        assert_eq!(r.issues.len(), 1);
        assert!(r.messages()[0].contains("negative rate"));

        let mut big = good.clone();
        big.num_sites = 12;
        assert!(validate(&big).messages()[0].contains("capacity exceeded"));

        let mut empty = good.clone();
        empty.num_sites = 0;
        assert!(validate(&empty).issues.contains(&Issue::NoSites));
    }

    #[test]
    fn periodic_bonds() {
        let mut m = ModelSpec::hubbard(3, 1.0, 0.0, 0.0);
        assert_eq!(m.bonds(), vec![(0, 1), (1, 2)]);
        m.boundary = Boundary::Periodic;
        assert_eq!(m.bonds(), vec![(0, 1), (1, 2), (2, 0)]);
        m.num_sites = 2;
        assert_eq!(m.bonds(), vec![(0, 1)]);
    }

    #[test]
    fn adjoint_swaps_ladders() {
        let e = parse_expr("2i*c(0,dn)*c(0,up)").unwrap();
        assert_eq!(e.adjoint(), parse_expr("-2i*cdag(0,up)*cdag(0,dn)").unwrap());
    }
}
