//! Line-based mechanism text format.
//!
//! ```text
//! # comment
//! species H2 {H:2}
//! species hv
//! A + B -> C : const(2.0)
//! 2 A -> A2 : arrhenius(A=1.0e-13, Ea=15.76)
//! X + Y -> Z : const(1) order(X=1.5)
//! ```
//!
//! Species are declared on first use unless strict mode is requested.
//! Names match `[A-Za-z][A-Za-z0-9_+-]*`, so `Ar+`, `e-` and `C4F8` are all
//! names; a `+` separator between two names therefore needs surrounding
//! whitespace. Removing a species from a mechanism amounts to deleting every
//! line that mentions it.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::network::{NetworkError, RateModel, Reaction, ReactionNetwork, Species};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownRateForm(String),
    NonIntegerCount(String),
    DuplicateSpecies(String),
    UndeclaredSpecies(String),
    InvalidValue(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownRateForm(n) => write!(f, "unknown rate form `{n}`"),
            ParseErrorKind::NonIntegerCount(c) => {
                write!(f, "stoichiometric count `{c}` is not a positive integer")
            }
            ParseErrorKind::DuplicateSpecies(n) => write!(f, "duplicate species `{n}`"),
            ParseErrorKind::UndeclaredSpecies(n) => write!(f, "undeclared species `{n}`"),
            ParseErrorKind::InvalidValue(m) => write!(f, "invalid value: {m}"),
        }
    }
}

/// A parse diagnostic; `line` and `column` are 1-based, columns count
/// characters.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Require every species to be declared before use, and reject repeated
    /// declarations.
    pub strict: bool,
}

/// Parsed mechanism: species and reactions plus the source line of each.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismDocument {
    pub species: Vec<Species>,
    pub reactions: Vec<Reaction>,
    /// Line on which each species was first declared or used.
    pub species_lines: Vec<usize>,
    /// Line of each reaction statement.
    pub reaction_lines: Vec<usize>,
}

impl MechanismDocument {
    pub fn into_network(self) -> Result<ReactionNetwork, NetworkError> {
        ReactionNetwork::new(self.species, self.reactions)
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Int(String),
    Float(String),
    Plus,
    Arrow,
    Colon,
    Comma,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Eq,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Name(s) | Tok::Int(s) | Tok::Float(s) => write!(f, "`{s}`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Eq => f.write_str("`=`"),
        }
    }
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic()
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '+' || c == '-'
}

/// Tokens of one line with their 1-based columns. Stops at `#`.
fn lex(line: &str, line_no: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, msg: String| ParseError { line: line_no, column: col, kind: ParseErrorKind::Syntax(msg) };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        if is_name_start(c) {
            let start = i;
            while i < chars.len() && is_name_char(chars[i]) {
                // `->` terminates a name.
                if chars[i] == '-' && chars.get(i + 1) == Some(&'>') {
                    break;
                }
                i += 1;
            }
            out.push((Tok::Name(chars[start..i].iter().collect()), col));
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.'));
        if starts_number {
            let start = i;
            let mut is_float = false;
            if c == '-' {
                i += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
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
                    is_float = true;
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            if text == "-" || text == "." || text == "-." {
                return Err(err(col, format!("malformed number `{text}`")));
            }
            out.push((if is_float { Tok::Float(text) } else { Tok::Int(text) }, col));
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 1;
                Tok::Arrow
            }
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '=' => Tok::Eq,
            other => return Err(err(col, format!("unexpected character `{}`", other.escape_debug()))),
        };
        out.push((tok, col));
        i += 1;
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |&(_, c)| c)
    }

    fn next(&mut self) -> Option<(&'a Tok, usize)> {
        let t = self.toks.get(self.pos).map(|(t, c)| (t, *c));
        self.pos += 1;
        t
    }

    fn error_at(&self, col: usize, kind: ParseErrorKind) -> ParseError {
        ParseError { line: self.line, column: col, kind }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let found = match self.peek() {
            Some(t) => format!("found {t}"),
            None => "found end of line".to_string(),
        };
        self.error_at(self.col(), ParseErrorKind::Syntax(format!("expected {expected}, {found}")))
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<usize, ParseError> {
        match self.peek() {
            Some(t) if *t == tok => Ok(self.next().unwrap().1),
            _ => Err(self.unexpected(expected)),
        }
    }

    fn name(&mut self, expected: &str) -> Result<(String, usize), ParseError> {
        match self.peek() {
            Some(Tok::Name(n)) => {
                let col = self.next().unwrap().1;
                Ok((n.clone(), col))
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    fn number(&mut self) -> Result<(f64, usize), ParseError> {
        match self.peek() {
            Some(Tok::Int(s)) | Some(Tok::Float(s)) => {
                let col = self.next().unwrap().1;
                let v: f64 = s
                    .parse()
                    .map_err(|_| self.error_at(col, ParseErrorKind::Syntax(format!("malformed number `{s}`"))))?;
                if !v.is_finite() {
                    return Err(self.error_at(col, ParseErrorKind::InvalidValue(format!("`{s}` is not finite"))));
                }
                Ok((v, col))
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

struct Builder {
    opts: ParseOptions,
    species: Vec<Species>,
    species_lines: Vec<usize>,
    declared: Vec<bool>,
    reactions: Vec<Reaction>,
    reaction_lines: Vec<usize>,
}

impl Builder {
    fn lookup(&mut self, name: &str, line: usize, col: usize) -> Result<usize, ParseError> {
        if let Some(i) = self.species.iter().position(|s| s.name == name) {
            return Ok(i);
        }
        if self.opts.strict {
            return Err(ParseError { line, column: col, kind: ParseErrorKind::UndeclaredSpecies(name.to_string()) });
        }
        self.species.push(Species::new(name));
        self.species_lines.push(line);
        self.declared.push(false);
        Ok(self.species.len() - 1)
    }

    fn declare(
        &mut self,
        name: String,
        composition: BTreeMap<String, u32>,
        line: usize,
        col: usize,
    ) -> Result<(), ParseError> {
        let dup = || ParseError { line, column: col, kind: ParseErrorKind::DuplicateSpecies(name.clone()) };
        match self.species.iter().position(|s| s.name == name) {
            None => {
                self.species.push(Species { name: name.clone(), composition, mass: None });
                self.species_lines.push(line);
                self.declared.push(true);
            }
            Some(i) => {
                if self.opts.strict && self.declared[i] {
                    return Err(dup());
                }
                let existing = &mut self.species[i].composition;
                if !existing.is_empty() && !composition.is_empty() && *existing != composition {
                    return Err(dup());
                }
                if existing.is_empty() {
                    *existing = composition;
                }
                self.declared[i] = true;
            }
        }
        Ok(())
    }

    fn species_decl(&mut self, cur: &mut Cursor<'_>) -> Result<(), ParseError> {
        loop {
            let (name, col) = cur.name("a species name")?;
            let mut composition = BTreeMap::new();
            if cur.peek() == Some(&Tok::LBrace) {
                cur.next();
                loop {
                    let (element, ecol) = cur.name("an element symbol")?;
                    cur.expect(Tok::Colon, "`:`")?;
                    let count = match cur.next() {
                        Some((Tok::Int(s), c)) => s.parse::<u32>().map_err(|_| {
                            cur.error_at(c, ParseErrorKind::InvalidValue(format!("element count `{s}`")))
                        })?,
                        Some((t, c)) => {
                            return Err(cur.error_at(
                                c,
                                ParseErrorKind::Syntax(format!("expected an integer element count, found {t}")),
                            ))
                        }
                        None => {
                            cur.pos -= 1;
                            return Err(cur.unexpected("an integer element count"));
                        }
                    };
                    if composition.insert(element.clone(), count).is_some() {
                        return Err(cur.error_at(
                            ecol,
                            ParseErrorKind::InvalidValue(format!("element `{element}` listed twice")),
                        ));
                    }
                    match cur.peek() {
                        Some(Tok::Comma) => {
                            cur.next();
                        }
                        Some(Tok::RBrace) => {
                            cur.next();
                            break;
                        }
                        _ => return Err(cur.unexpected("`,` or `}`")),
                    }
                }
            }
            self.declare(name, composition, cur.line, col)?;
            match cur.peek() {
                None => return Ok(()),
                Some(Tok::Comma) => {
                    cur.next();
                }
                _ => return Err(cur.unexpected("`,` or end of line")),
            }
        }
    }

    fn side(&mut self, cur: &mut Cursor<'_>, what: &str) -> Result<Vec<(usize, u32)>, ParseError> {
        let mut terms = Vec::new();
        let mut plus_col: Option<usize> = None;
        loop {
            let count = match cur.peek() {
                Some(Tok::Int(s)) => {
                    let col = cur.next().unwrap().1;
                    match s.parse::<u32>() {
                        Ok(c) if c > 0 => c,
                        _ => return Err(cur.error_at(col, ParseErrorKind::NonIntegerCount(s.clone()))),
                    }
                }
                Some(Tok::Float(s)) => {
                    let col = cur.col();
                    return Err(cur.error_at(col, ParseErrorKind::NonIntegerCount(s.clone())));
                }
                _ => 1,
            };
            match cur.peek() {
                Some(Tok::Name(n)) => {
                    let col = cur.next().unwrap().1;
                    let idx = self.lookup(n, cur.line, col)?;
                    terms.push((idx, count));
                }
                _ => {
                    if let Some(col) = plus_col {
                        let found = cur.peek().map_or("end of line".to_string(), |t| t.to_string());
                        return Err(
                            cur.error_at(col, ParseErrorKind::Syntax(format!("dangling `+` (followed by {found})")))
                        );
                    }
                    return Err(cur.unexpected(what));
                }
            }
            if cur.peek() == Some(&Tok::Plus) {
                plus_col = Some(cur.next().unwrap().1);
            } else {
                return Ok(terms);
            }
        }
    }

    fn rate(&mut self, cur: &mut Cursor<'_>) -> Result<RateModel, ParseError> {
        let (form, col) = cur.name("a rate form (`const` or `arrhenius`)")?;
        let model = match form.as_str() {
            "const" => {
                cur.expect(Tok::LParen, "`(`")?;
                let (k, _) = cur.number()?;
                cur.expect(Tok::RParen, "`)`")?;
                RateModel::Constant { k }
            }
            "arrhenius" => {
                cur.expect(Tok::LParen, "`(`")?;
                match cur.name("`A`")? {
                    (n, _) if n == "A" => {}
                    (n, c) => return Err(cur.error_at(c, ParseErrorKind::Syntax(format!("expected `A`, found `{n}`")))),
                }
                cur.expect(Tok::Eq, "`=`")?;
                let (a, _) = cur.number()?;
                cur.expect(Tok::Comma, "`,`")?;
                match cur.name("`Ea`")? {
                    (n, _) if n == "Ea" => {}
                    (n, c) => {
                        return Err(cur.error_at(c, ParseErrorKind::Syntax(format!("expected `Ea`, found `{n}`"))))
                    }
                }
                cur.expect(Tok::Eq, "`=`")?;
                let (ea, _) = cur.number()?;
                cur.expect(Tok::RParen, "`)`")?;
                RateModel::Arrhenius { a, ea }
            }
            other => return Err(cur.error_at(col, ParseErrorKind::UnknownRateForm(other.to_string()))),
        };
        model.validate().map_err(|e| cur.error_at(col, ParseErrorKind::InvalidValue(e.to_string())))?;
        Ok(model)
    }

    fn reaction(&mut self, cur: &mut Cursor<'_>) -> Result<(), ParseError> {
        let start_col = cur.col();
        let reactants = self.side(cur, "a reactant")?;
        cur.expect(Tok::Arrow, "`->` or `+`")?;
        let products = self.side(cur, "a product")?;
        cur.expect(Tok::Colon, "`:` before the rate")?;
        let rate = self.rate(cur)?;
        let mut rxn = Reaction::new(reactants, products, rate)
            .map_err(|e| cur.error_at(start_col, ParseErrorKind::InvalidValue(e.to_string())))?;
        if let Some(Tok::Name(n)) = cur.peek() {
            if n == "order" {
                cur.next();
                cur.expect(Tok::LParen, "`(`")?;
                loop {
                    let (name, col) = cur.name("a species name")?;
                    cur.expect(Tok::Eq, "`=`")?;
                    let (order, _) = cur.number()?;
                    let idx = self.species.iter().position(|s| s.name == name).ok_or_else(|| {
                        cur.error_at(col, ParseErrorKind::InvalidValue(format!("`{name}` is not a reactant")))
                    })?;
                    rxn = rxn
                        .with_order(idx, order)
                        .map_err(|e| cur.error_at(col, ParseErrorKind::InvalidValue(e.to_string())))?;
                    match cur.peek() {
                        Some(Tok::Comma) => {
                            cur.next();
                        }
                        Some(Tok::RParen) => {
                            cur.next();
                            break;
                        }
                        _ => return Err(cur.unexpected("`,` or `)`")),
                    }
                }
            }
        }
        if !cur.at_end() {
            return Err(cur.unexpected("end of line"));
        }
        self.reactions.push(rxn);
        self.reaction_lines.push(cur.line);
        Ok(())
    }
}

/// Parses mechanism text with default (non-strict) options.
pub fn parse_network(text: &str) -> Result<MechanismDocument, ParseError> {
    parse_network_with(text, ParseOptions::default())
}

pub fn parse_network_with(text: &str, opts: ParseOptions) -> Result<MechanismDocument, ParseError> {
    let mut b = Builder {
        opts,
        species: Vec::new(),
        species_lines: Vec::new(),
        declared: Vec::new(),
        reactions: Vec::new(),
        reaction_lines: Vec::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = lex(raw, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor { toks: &toks, pos: 0, line: line_no, end_col: raw.chars().count() + 1 };
        let is_decl = matches!(toks.first(), Some((Tok::Name(n), _)) if n == "species")
            && matches!(toks.get(1), Some((Tok::Name(_), _)));
        if is_decl {
            cur.next();
            b.species_decl(&mut cur)?;
        } else {
            b.reaction(&mut cur)?;
        }
    }
    Ok(MechanismDocument {
        species: b.species,
        reactions: b.reactions,
        species_lines: b.species_lines,
        reaction_lines: b.reaction_lines,
    })
}

/// Canonical text for a float: six decimals when that is exact, otherwise
/// the shortest exact scientific form.
pub fn format_value(x: f64) -> String {
    let fixed = format!("{x:.6}");
    let in_range = x == 0.0 || (1e-4..1e7).contains(&x.abs());
    if in_range && fixed.parse::<f64>() == Ok(x) {
        fixed
    } else {
        format!("{x:e}")
    }
}

fn format_side(side: &[(usize, u32)], species: &[Species]) -> String {
    side.iter()
        .map(|&(i, c)| if c > 1 { format!("{c} {}", species[i].name) } else { species[i].name.clone() })
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Canonical text for one reaction.
pub fn format_reaction(rxn: &Reaction, species: &[Species]) -> String {
    let rate = match *rxn.rate() {
        RateModel::Constant { k } => format!("const({})", format_value(k)),
        RateModel::Arrhenius { a, ea } => {
            format!("arrhenius(A={}, Ea={})", format_value(a), format_value(ea))
        }
    };
    let mut line =
        format!("{} -> {} : {}", format_side(rxn.reactants(), species), format_side(rxn.products(), species), rate);
    if !rxn.order_overrides().is_empty() {
        let orders: Vec<String> =
            rxn.order_overrides().iter().map(|(&i, &o)| format!("{}={}", species[i].name, format_value(o))).collect();
        line.push_str(&format!(" order({})", orders.join(", ")));
    }
    line
}

/// Canonical mechanism text: a header comment, one `species` line per
/// species (fixing index order), then one reaction per line.
pub fn serialize_network(species: &[Species], reactions: &[Reaction]) -> String {
    let mut out = String::from("# cpn mechanism\n");
    for sp in species {
        out.push_str("species ");
        out.push_str(&sp.name);
        if !sp.composition.is_empty() {
            let parts: Vec<String> = sp.composition.iter().map(|(e, c)| format!("{e}:{c}")).collect();
            out.push_str(&format!(" {{{}}}", parts.join(", ")));
        }
        out.push('\n');
    }
    for rxn in reactions {
        out.push_str(&format_reaction(rxn, species));
        out.push('\n');
    }
    out
}
