//! Atoms, polynomial orbit-finite sorts, values, permutations, equality types
//! and equivariant pattern functions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Name = Arc<str>;

/// An element of the infinite set of atoms. Only equality is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(pub u32);

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::L => Side::R,
            Side::R => Side::L,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Atom,
    Unit(Name),
    Prod(Box<Sort>, Box<Sort>),
    Sum(Box<Sort>, Box<Sort>),
    List(Box<Sort>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Atom(Atom),
    Unit(Name),
    Pair(Box<Value>, Box<Value>),
    Inj(Side, Box<Value>),
    List(Vec<Value>),
}

/// Glyphs accepted on input and the unit names they stand for.
const ALIASES: &[(&str, &str)] = &[
    ("ε", "eps"),
    ("↓", "down"),
    ("|", "sep"),
    ("⊥", "bot"),
    ("⊢", "lend"),
    ("⊣", "rend"),
];

fn unalias(name: &str) -> &str {
    ALIASES
        .iter()
        .find(|(glyph, _)| *glyph == name)
        .map(|(_, n)| *n)
        .unwrap_or(name)
}

impl Sort {
    pub fn unit(name: &str) -> Sort {
        Sort::Unit(Arc::from(unalias(name)))
    }

    pub fn prod(a: Sort, b: Sort) -> Sort {
        Sort::Prod(Box::new(a), Box::new(b))
    }

    pub fn sum(a: Sort, b: Sort) -> Sort {
        Sort::Sum(Box::new(a), Box::new(b))
    }

    pub fn list(a: Sort) -> Sort {
        Sort::List(Box::new(a))
    }

    /// `unit(yes) + unit(no)`
    pub fn bool() -> Sort {
        Sort::sum(Sort::unit("yes"), Sort::unit("no"))
    }

    /// `A + unit(bot)`, the contents of a register.
    pub fn maybe_atom() -> Sort {
        Sort::sum(Sort::Atom, Sort::unit("bot"))
    }

    /// A finite sort with one unit per name, nested to the right.
    pub fn finite<S: AsRef<str>>(names: &[S]) -> Sort {
        match names {
            [] => panic!("finite sort needs at least one name"),
            [n] => Sort::unit(n.as_ref()),
            [n, rest @ ..] => Sort::sum(Sort::unit(n.as_ref()), Sort::finite(rest)),
        }
    }

    /// Tuples of `k` atoms, nested to the right; `k = 0` is `unit(nil)`.
    pub fn atoms_tuple(k: usize) -> Sort {
        match k {
            0 => Sort::unit("nil"),
            1 => Sort::Atom,
            _ => Sort::prod(Sort::Atom, Sort::atoms_tuple(k - 1)),
        }
    }

    /// The tape alphabet of a machine with endmarkers.
    pub fn tape(input: &Sort) -> Sort {
        Sort::sum(
            input.clone(),
            Sort::sum(Sort::unit("lend"), Sort::unit("rend")),
        )
    }

    pub fn is_polynomial(&self) -> bool {
        match self {
            Sort::Atom | Sort::Unit(_) => true,
            Sort::Prod(a, b) | Sort::Sum(a, b) => a.is_polynomial() && b.is_polynomial(),
            Sort::List(_) => false,
        }
    }

    /// Maximal number of atoms in a value of this sort; `None` for list sorts.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Sort::Atom => Some(1),
            Sort::Unit(_) => Some(0),
            Sort::Prod(a, b) => Some(a.dimension()? + b.dimension()?),
            Sort::Sum(a, b) => Some(a.dimension()?.max(b.dimension()?)),
            Sort::List(_) => None,
        }
    }

    pub fn has_atoms(&self) -> bool {
        match self {
            Sort::Atom => true,
            Sort::Unit(_) => false,
            Sort::Prod(a, b) | Sort::Sum(a, b) => a.has_atoms() || b.has_atoms(),
            Sort::List(a) => a.has_atoms(),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Sort::Atom, Value::Atom(_)) => true,
            (Sort::Unit(n), Value::Unit(m)) => n == m,
            (Sort::Prod(a, b), Value::Pair(x, y)) => a.contains(x) && b.contains(y),
            (Sort::Sum(a, _), Value::Inj(Side::L, x)) => a.contains(x),
            (Sort::Sum(_, b), Value::Inj(Side::R, x)) => b.contains(x),
            (Sort::List(a), Value::List(xs)) => xs.iter().all(|x| a.contains(x)),
            _ => false,
        }
    }

    pub fn check(&self, v: &Value) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::mismatch(v, self))
        }
    }

    pub fn check_word(&self, w: &[Value]) -> Result<()> {
        w.iter().try_for_each(|v| self.check(v))
    }

    /// Interprets a loosely written value in this sort: injections may be
    /// omitted wherever exactly one branch of a sum accepts the value.
    pub fn coerce(&self, v: &Value) -> Result<Value> {
        self.coerce_opt(v).ok_or_else(|| Error::mismatch(v, self))
    }

    fn coerce_opt(&self, v: &Value) -> Option<Value> {
        match (self, v) {
            (Sort::Atom, Value::Atom(_)) => Some(v.clone()),
            (Sort::Unit(n), Value::Unit(m)) if n == m => Some(v.clone()),
            (Sort::Prod(a, b), Value::Pair(x, y)) => {
                Some(Value::pair(a.coerce_opt(x)?, b.coerce_opt(y)?))
            }
            (Sort::List(a), Value::List(xs)) => Some(Value::List(
                xs.iter().map(|x| a.coerce_opt(x)).collect::<Option<_>>()?,
            )),
            (Sort::Sum(a, b), _) => {
                if let Value::Inj(side, x) = v {
                    let inner = if *side == Side::L { a } else { b };
                    if let Some(x) = inner.coerce_opt(x) {
                        return Some(Value::Inj(*side, Box::new(x)));
                    }
                }
                match (a.coerce_opt(v), b.coerce_opt(v)) {
                    (Some(x), None) => Some(Value::inl(x)),
                    (None, Some(y)) => Some(Value::inr(y)),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Parses a value literal and coerces it into this sort.
    pub fn parse_value(&self, text: &str) -> Result<Value> {
        self.coerce(&text.parse::<Value>()?)
    }

    /// Parses a comma-separated word literal over this sort.
    pub fn parse_word(&self, text: &str) -> Result<Vec<Value>> {
        split_top_level(text)?
            .into_iter()
            .map(|piece| self.parse_value(piece))
            .collect()
    }

    /// Shortest literal that parses back to `v` in this sort.
    pub fn show(&self, v: &Value) -> String {
        let bare = v.strip_injections();
        match self.coerce_opt(&bare) {
            Some(back) if &back == v => bare.to_string(),
            _ => v.to_string(),
        }
    }

    pub fn show_word(&self, w: &[Value]) -> String {
        w.iter().map(|v| self.show(v)).collect::<Vec<_>>().join(",")
    }
}

fn split_top_level(text: &str) -> Result<Vec<&str>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut depth = 0i32;
    let mut start = 0;
    let mut out = Vec::new();
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(Error::Parse(format!("unbalanced brackets in {text:?}")));
        }
    }
    out.push(text[start..].trim());
    Ok(out)
}

impl Value {
    pub fn atom(n: u32) -> Value {
        Value::Atom(Atom(n))
    }

    pub fn unit(name: &str) -> Value {
        Value::Unit(Arc::from(unalias(name)))
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn inl(a: Value) -> Value {
        Value::Inj(Side::L, Box::new(a))
    }

    pub fn inr(a: Value) -> Value {
        Value::Inj(Side::R, Box::new(a))
    }

    pub fn bool(b: bool) -> Value {
        if b {
            Value::inl(Value::unit("yes"))
        } else {
            Value::inr(Value::unit("no"))
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Inj(Side::L, _) => Some(true),
            Value::Inj(Side::R, _) => Some(false),
            _ => None,
        }
    }

    /// Register contents: `L:#n` for an atom, `R:bot` for undefined.
    pub fn maybe_atom(a: Option<Atom>) -> Value {
        match a {
            Some(a) => Value::inl(Value::Atom(a)),
            None => Value::inr(Value::unit("bot")),
        }
    }

    pub fn as_maybe_atom(&self) -> Option<Atom> {
        match self {
            Value::Inj(Side::L, x) => match **x {
                Value::Atom(a) => Some(a),
                _ => None,
            },
            _ => None,
        }
    }

    /// The `i`-th element of `Sort::finite(names)` with `n` names.
    pub fn finite(n: usize, i: usize, names: &[&str]) -> Value {
        assert!(i < n && names.len() == n);
        if n == 1 {
            Value::unit(names[0])
        } else if i == 0 {
            Value::inl(Value::unit(names[0]))
        } else {
            Value::inr(Value::finite(n - 1, i - 1, &names[1..]))
        }
    }

    /// Index of a value of a finite sort with `n` names.
    pub fn finite_index(&self, n: usize) -> Option<usize> {
        match (n, self) {
            (1, Value::Unit(_)) => Some(0),
            (_, Value::Inj(Side::L, _)) if n > 1 => Some(0),
            (_, Value::Inj(Side::R, x)) if n > 1 => Some(1 + x.finite_index(n - 1)?),
            _ => None,
        }
    }

    pub fn tuple(atoms: &[Atom]) -> Value {
        match atoms {
            [] => Value::unit("nil"),
            [a] => Value::Atom(*a),
            [a, rest @ ..] => Value::pair(Value::Atom(*a), Value::tuple(rest)),
        }
    }

    /// Atom leaves from left to right, with repetitions.
    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<Atom>) {
        match self {
            Value::Atom(a) => out.push(*a),
            Value::Unit(_) => {}
            Value::Pair(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            Value::Inj(_, a) => a.collect_atoms(out),
            Value::List(xs) => xs.iter().for_each(|x| x.collect_atoms(out)),
        }
    }

    pub fn is_atomless(&self) -> bool {
        match self {
            Value::Atom(_) => false,
            Value::Unit(_) => true,
            Value::Pair(a, b) => a.is_atomless() && b.is_atomless(),
            Value::Inj(_, a) => a.is_atomless(),
            Value::List(xs) => xs.iter().all(Value::is_atomless),
        }
    }

    pub fn map_atoms(&self, f: &mut impl FnMut(Atom) -> Atom) -> Value {
        match self {
            Value::Atom(a) => Value::Atom(f(*a)),
            Value::Unit(_) => self.clone(),
            Value::Pair(a, b) => Value::pair(a.map_atoms(f), b.map_atoms(f)),
            Value::Inj(s, a) => Value::Inj(*s, Box::new(a.map_atoms(f))),
            Value::List(xs) => Value::List(xs.iter().map(|x| x.map_atoms(f)).collect()),
        }
    }

    fn strip_injections(&self) -> Value {
        match self {
            Value::Atom(_) | Value::Unit(_) => self.clone(),
            Value::Pair(a, b) => Value::pair(a.strip_injections(), b.strip_injections()),
            Value::Inj(_, a) => a.strip_injections(),
            Value::List(xs) => Value::List(xs.iter().map(Value::strip_injections).collect()),
        }
    }
}

/// Atoms of a word, in order of first occurrence.
pub fn word_atoms(w: &[Value]) -> Vec<Atom> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for v in w {
        for a in v.atoms() {
            if seen.insert(a) {
                out.push(a);
            }
        }
    }
    out
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Atom(a) => write!(f, "{a}"),
            Value::Unit(n) => write!(f, "{n}"),
            Value::Pair(a, b) => write!(f, "({a},{b})"),
            Value::Inj(s, a) => write!(f, "{s:?}:{a}"),
            Value::List(xs) => {
                write!(f, "[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, s: &Sort) -> fmt::Result {
            match s {
                Sort::Prod(..) | Sort::Sum(..) => write!(f, "({s})"),
                _ => write!(f, "{s}"),
            }
        }
        match self {
            Sort::Atom => write!(f, "A"),
            Sort::Unit(n) => write!(f, "unit({n})"),
            Sort::Prod(a, b) => {
                child(f, a)?;
                write!(f, "*")?;
                child(f, b)
            }
            Sort::Sum(a, b) => {
                child(f, a)?;
                write!(f, "+")?;
                child(f, b)
            }
            Sort::List(a) => write!(f, "list({a})"),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_raw() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_raw(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek_raw()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{c}'")))
        }
    }

    fn error(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at offset {} in {:?}", self.pos, self.src))
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek_raw() {
            if c.is_whitespace() || "()[],:#*+".contains(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        if self.pos == start {
            Err(self.error("expected identifier"))
        } else {
            Ok(&self.src[start..self.pos])
        }
    }

    fn number(&mut self) -> Result<u32> {
        let start = self.pos;
        while matches!(self.peek_raw(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| self.error("expected atom number"))
    }

    fn finish(&mut self) -> Result<()> {
        if self.peek().is_some() {
            Err(self.error("trailing input"))
        } else {
            Ok(())
        }
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek() {
            Some('#') => {
                self.pos += 1;
                Ok(Value::atom(self.number()?))
            }
            Some('(') => {
                self.pos += 1;
                let a = self.value()?;
                self.expect(',')?;
                let b = self.value()?;
                self.expect(')')?;
                Ok(Value::pair(a, b))
            }
            Some('[') => {
                self.pos += 1;
                let mut xs = Vec::new();
                if !self.eat(']') {
                    loop {
                        xs.push(self.value()?);
                        if self.eat(']') {
                            break;
                        }
                        self.expect(',')?;
                    }
                }
                Ok(Value::List(xs))
            }
            Some(_) => {
                let id = self.ident()?;
                if (id == "L" || id == "R") && self.eat(':') {
                    let side = if id == "L" { Side::L } else { Side::R };
                    Ok(Value::Inj(side, Box::new(self.value()?)))
                } else {
                    Ok(Value::unit(id))
                }
            }
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn sort(&mut self) -> Result<Sort> {
        let left = self.sort_prod()?;
        if self.eat('+') {
            Ok(Sort::sum(left, self.sort()?))
        } else {
            Ok(left)
        }
    }

    fn sort_prod(&mut self) -> Result<Sort> {
        let left = self.sort_atom()?;
        if self.eat('*') {
            Ok(Sort::prod(left, self.sort_prod()?))
        } else {
            Ok(left)
        }
    }

    fn sort_atom(&mut self) -> Result<Sort> {
        if self.eat('(') {
            let s = self.sort()?;
            self.expect(')')?;
            return Ok(s);
        }
        match self.ident()? {
            "A" => Ok(Sort::Atom),
            "unit" => {
                self.expect('(')?;
                let n = self.ident()?;
                self.expect(')')?;
                Ok(Sort::unit(n))
            }
            "list" => {
                self.expect('(')?;
                let s = self.sort()?;
                self.expect(')')?;
                Ok(Sort::list(s))
            }
            other => Err(self.error(&format!("unknown sort {other:?}"))),
        }
    }
}

impl FromStr for Value {
    type Err = Error;
    fn from_str(s: &str) -> Result<Value> {
        let mut lx = Lexer::new(s);
        let v = lx.value()?;
        lx.finish()?;
        Ok(v)
    }
}

impl FromStr for Sort {
    type Err = Error;
    fn from_str(s: &str) -> Result<Sort> {
        let mut lx = Lexer::new(s);
        let v = lx.sort()?;
        lx.finish()?;
        Ok(v)
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Value);
string_serde!(Sort);

/// A permutation of finitely many atoms, identity elsewhere.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Perm {
    map: BTreeMap<Atom, Atom>,
}

impl Perm {
    pub fn identity() -> Perm {
        Perm::default()
    }

    /// Builds a permutation from an injective partial map. Atoms in the image
    /// but not in the domain are sent back along their chains, which closes
    /// every chain into a cycle.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Atom, Atom)>) -> Result<Perm> {
        let mut map = BTreeMap::new();
        let mut inverse = BTreeMap::new();
        for (a, b) in pairs {
            if let Some(old) = map.insert(a, b) {
                if old != b {
                    return Err(Error::Perm(format!("{a} mapped twice")));
                }
            }
            if let Some(old) = inverse.insert(b, a) {
                if old != a {
                    return Err(Error::Perm(format!("{b} hit twice")));
                }
            }
        }
        let ends: Vec<Atom> = inverse
            .keys()
            .filter(|b| !map.contains_key(b))
            .copied()
            .collect();
        for end in ends {
            let mut start = end;
            while let Some(&prev) = inverse.get(&start) {
                start = prev;
            }
            map.insert(end, start);
        }
        map.retain(|a, b| a != b);
        Ok(Perm { map })
    }

    pub fn transposition(a: Atom, b: Atom) -> Perm {
        Perm::from_pairs([(a, b), (b, a)]).expect("transposition is injective")
    }

    pub fn apply_atom(&self, a: Atom) -> Atom {
        self.map.get(&a).copied().unwrap_or(a)
    }

    pub fn apply(&self, v: &Value) -> Value {
        v.map_atoms(&mut |a| self.apply_atom(a))
    }

    pub fn apply_word(&self, w: &[Value]) -> Vec<Value> {
        w.iter().map(|v| self.apply(v)).collect()
    }

    pub fn inverse(&self) -> Perm {
        Perm {
            map: self.map.iter().map(|(a, b)| (*b, *a)).collect(),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Perm) -> Perm {
        let domain: BTreeSet<Atom> = self.map.keys().chain(other.map.keys()).copied().collect();
        let map = domain
            .into_iter()
            .map(|a| (a, self.apply_atom(other.apply_atom(a))))
            .filter(|(a, b)| a != b)
            .collect();
        Perm { map }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (Atom, Atom)> + '_ {
        self.map.iter().map(|(a, b)| (*a, *b))
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (a, b)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}↦{}", a.0, b.0)?;
        }
        write!(f, "}}")
    }
}

/// Relabels atoms in first-occurrence order from `#0`. Returns the canonical
/// value and the original atoms, indexed by their new labels.
pub fn canonicalize(v: &Value) -> (Value, Vec<Atom>) {
    let mut support: Vec<Atom> = Vec::new();
    let rep = v.map_atoms(&mut |a| match support.iter().position(|b| *b == a) {
        Some(i) => Atom(i as u32),
        None => {
            support.push(a);
            Atom(support.len() as u32 - 1)
        }
    });
    (rep, support)
}

/// Canonical form of a whole word, labels shared across letters.
pub fn canonicalize_word(w: &[Value]) -> (Vec<Value>, Vec<Atom>) {
    let mut support: Vec<Atom> = Vec::new();
    let rep = w
        .iter()
        .map(|v| {
            v.map_atoms(&mut |a| match support.iter().position(|b| *b == a) {
                Some(i) => Atom(i as u32),
                None => {
                    support.push(a);
                    Atom(support.len() as u32 - 1)
                }
            })
        })
        .collect();
    (rep, support)
}

/// Orbit of a value: its skeleton together with the equality pattern of its
/// atom leaves. Stored as the canonical representative.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EqualityType {
    rep: Value,
}

impl EqualityType {
    pub fn of(v: &Value) -> EqualityType {
        EqualityType {
            rep: canonicalize(v).0,
        }
    }

    pub fn representative(&self) -> &Value {
        &self.rep
    }

    /// Blocks of atom-leaf positions (numbered from 1) holding equal atoms.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (i, a) in self.rep.atoms().into_iter().enumerate() {
            let k = a.0 as usize;
            if k == blocks.len() {
                blocks.push(Vec::new());
            }
            blocks[k].push(i + 1);
        }
        blocks
    }

    /// The value with every atom replaced by `#0`.
    pub fn skeleton(&self) -> Value {
        self.rep.map_atoms(&mut |_| Atom(0))
    }
}

pub fn equality_type(v: &Value) -> EqualityType {
    EqualityType::of(v)
}

pub fn least_support(v: &Value) -> Vec<Atom> {
    canonicalize(v).1
}

/// One representative per orbit, atoms labelled in first-occurrence order.
pub fn enumerate_orbit_reps(s: &Sort) -> Vec<Value> {
    assert!(
        s.is_polynomial(),
        "orbit enumeration needs a polynomial sort"
    );
    let mut out = Vec::new();
    for skel in skeletons(s) {
        let holes = skel.atoms().len();
        for rgs in restricted_growth_strings(holes) {
            let mut it = rgs.into_iter();
            out.push(skel.map_atoms(&mut |_| Atom(it.next().unwrap())));
        }
    }
    out
}

pub(crate) fn skeletons(s: &Sort) -> Vec<Value> {
    match s {
        Sort::Atom => vec![Value::atom(0)],
        Sort::Unit(n) => vec![Value::Unit(n.clone())],
        Sort::Prod(a, b) => {
            let right = skeletons(b);
            skeletons(a)
                .into_iter()
                .flat_map(|x| right.iter().map(move |y| Value::pair(x.clone(), y.clone())))
                .collect()
        }
        Sort::Sum(a, b) => skeletons(a)
            .into_iter()
            .map(Value::inl)
            .chain(skeletons(b).into_iter().map(Value::inr))
            .collect(),
        Sort::List(_) => unreachable!(),
    }
}

/// All restricted growth strings of length `n` in lexicographic order.
pub fn restricted_growth_strings(n: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn go(n: usize, next: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for k in 0..=next {
            cur.push(k);
            go(n, next.max(k + 1), cur, out);
            cur.pop();
        }
    }
    go(n, 0, &mut cur, &mut out);
    out
}

/// A finitely represented equivariant function: one output template per
/// orbit of the domain. A template uses the labels of its guard, which is the
/// canonical representative of the orbit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternFn {
    domain: Sort,
    codomain: Sort,
    cases: Vec<(Value, Value)>,
    index: HashMap<Value, usize>,
}

impl PatternFn {
    pub fn new(domain: Sort, codomain: Sort, cases: Vec<(Value, Value)>) -> Result<PatternFn> {
        if !domain.is_polynomial() {
            return Err(Error::Pattern("domain must be polynomial".into()));
        }
        let mut index = HashMap::new();
        for (i, (guard, template)) in cases.iter().enumerate() {
            domain.check(guard)?;
            codomain.check(template)?;
            let (rep, _) = canonicalize(guard);
            if &rep != guard {
                return Err(Error::Pattern(format!(
                    "guard {guard} is not canonical (expected {rep})"
                )));
            }
            let known: BTreeSet<Atom> = guard.atoms().into_iter().collect();
            if let Some(a) = template.atoms().into_iter().find(|a| !known.contains(a)) {
                return Err(Error::Pattern(format!(
                    "template {template} uses {a}, absent from guard {guard}"
                )));
            }
            if index.insert(guard.clone(), i).is_some() {
                return Err(Error::Pattern(format!("duplicate guard {guard}")));
            }
        }
        let reps = enumerate_orbit_reps(&domain);
        if let Some(missing) = reps.iter().find(|r| !index.contains_key(*r)) {
            return Err(Error::Pattern(format!("no case for orbit {missing}")));
        }
        Ok(PatternFn {
            domain,
            codomain,
            cases,
            index,
        })
    }

    /// Tabulates a host function on orbit representatives. Fails if the
    /// function invents atoms, which no equivariant function can do.
    pub fn from_fn(domain: Sort, codomain: Sort, f: impl Fn(&Value) -> Value) -> Result<PatternFn> {
        let cases = enumerate_orbit_reps(&domain)
            .into_iter()
            .map(|rep| {
                let out = f(&rep);
                (rep, out)
            })
            .collect();
        PatternFn::new(domain, codomain, cases)
    }

    pub fn constant(domain: Sort, codomain: Sort, value: Value) -> Result<PatternFn> {
        if !value.is_atomless() {
            return Err(Error::Pattern(format!("constant {value} is not atomless")));
        }
        PatternFn::from_fn(domain, codomain, |_| value.clone())
    }

    pub fn domain(&self) -> &Sort {
        &self.domain
    }

    pub fn codomain(&self) -> &Sort {
        &self.codomain
    }

    pub fn cases(&self) -> &[(Value, Value)] {
        &self.cases
    }

    pub fn apply(&self, v: &Value) -> Result<Value> {
        self.domain.check(v)?;
        let (rep, support) = canonicalize(v);
        let template = &self.cases[self.index[&rep]].1;
        Ok(template.map_atoms(&mut |a| support[a.0 as usize]))
    }
}

#[derive(Serialize, Deserialize)]
struct CaseRepr {
    guard: Value,
    template: Value,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PatternRepr {
    cases: Vec<CaseRepr>,
}

impl PatternFn {
    pub(crate) fn to_repr(&self) -> PatternRepr {
        PatternRepr {
            cases: self
                .cases
                .iter()
                .map(|(g, t)| CaseRepr {
                    guard: g.clone(),
                    template: t.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds from the file form; guards and templates are coerced into the
    /// given sorts so injections can be left out.
    pub(crate) fn from_repr(
        domain: &Sort,
        codomain: &Sort,
        repr: PatternRepr,
    ) -> Result<PatternFn> {
        let cases = repr
            .cases
            .into_iter()
            .map(|c| Ok((domain.coerce(&c.guard)?, codomain.coerce(&c.template)?)))
            .collect::<Result<_>>()?;
        PatternFn::new(domain.clone(), codomain.clone(), cases)
    }
}

/// Random value of a sort with atoms drawn from `0..pool`.
pub fn sample_value(s: &Sort, rng: &mut impl Rng, pool: u32, max_list: usize) -> Value {
    match s {
        Sort::Atom => Value::atom(rng.gen_range(0..pool.max(1))),
        Sort::Unit(n) => Value::Unit(n.clone()),
        Sort::Prod(a, b) => Value::pair(
            sample_value(a, rng, pool, max_list),
            sample_value(b, rng, pool, max_list),
        ),
        Sort::Sum(a, b) => {
            if rng.gen_bool(0.5) {
                Value::inl(sample_value(a, rng, pool, max_list))
            } else {
                Value::inr(sample_value(b, rng, pool, max_list))
            }
        }
        Sort::List(a) => {
            let n = rng.gen_range(0..=max_list);
            Value::List(
                (0..n)
                    .map(|_| sample_value(a, rng, pool, max_list))
                    .collect(),
            )
        }
    }
}

pub fn sample_word(s: &Sort, rng: &mut impl Rng, len: usize, pool: u32) -> Vec<Value> {
    (0..len).map(|_| sample_value(s, rng, pool, 3)).collect()
}

/// Random permutation moving the given atoms, possibly onto fresh ones.
pub fn sample_perm(atoms: &[Atom], rng: &mut impl Rng) -> Perm {
    let fresh_base = atoms.iter().map(|a| a.0 + 1).max().unwrap_or(0);
    let mut targets: Vec<Atom> = atoms.to_vec();
    targets.extend((0..atoms.len() as u32).map(|i| Atom(fresh_base + i)));
    targets.shuffle(rng);
    let pairs = atoms.iter().copied().zip(targets);
    Perm::from_pairs(pairs).expect("shuffled targets are distinct")
}

/// Tests `f(π·v) = π·f(v)` on random values and permutations. Returns the
/// first violating pair.
pub fn check_equivariance(
    f: impl Fn(&Value) -> Value,
    domain: &Sort,
    samples: usize,
    seed: u64,
) -> std::result::Result<(), (Value, Perm)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let v = sample_value(domain, &mut rng, 6, 4);
        let mut touched = least_support(&v);
        touched.push(Atom(0));
        touched.sort();
        touched.dedup();
        let p = sample_perm(&touched, &mut rng);
        if f(&p.apply(&v)) != p.apply(&f(&v)) {
            return Err((v, p));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    fn bell(n: usize) -> usize {
        let mut row = vec![1usize];
        for _ in 0..n {
            let mut next = vec![*row.last().unwrap()];
            for x in &row {
                next.push(next.last().unwrap() + x);
            }
            row = next;
        }
        row[0]
    }

    #[test]
    fn perm_examples() {
        let p = Perm::from_pairs([(Atom(1), Atom(2)), (Atom(2), Atom(1))]).unwrap();
        assert_eq!(p.apply(&v("(#1,#2)")), v("(#2,#1)"));
        assert_eq!(Perm::identity().apply(&v("L:#7")), v("L:#7"));
        let p = Perm::from_pairs([(Atom(3), Atom(9))]).unwrap();
        assert_eq!(p.apply(&v("((#3,a),#3)")), v("((#9,a),#9)"));
        assert_eq!(p.apply_atom(Atom(9)), Atom(3));
    }

    #[test]
    fn perm_rejects_non_injective() {
        assert!(Perm::from_pairs([(Atom(1), Atom(5)), (Atom(2), Atom(5))]).is_err());
    }

    #[test]
    fn perm_group_laws() {
        let p = Perm::from_pairs([(Atom(1), Atom(2)), (Atom(2), Atom(3))]).unwrap();
        let q = Perm::transposition(Atom(3), Atom(4));
        let x = v("(#1,(#2,(#3,#4)))");
        assert_eq!(p.compose(&q).apply(&x), p.apply(&q.apply(&x)));
        assert_eq!(p.inverse().apply(&p.apply(&x)), x);
    }

    #[test]
    fn equality_type_examples() {
        assert_eq!(equality_type(&v("(#5,#5)")).partition(), vec![vec![1, 2]]);
        assert_eq!(
            equality_type(&v("(#1,#2)")).partition(),
            vec![vec![1], vec![2]]
        );
        let x = v("(#1,(#2,#1))");
        let atoms = x.atoms();
        let mut brute: Vec<Vec<usize>> = Vec::new();
        for i in 0..atoms.len() {
            if brute.iter().any(|b| b.contains(&(i + 1))) {
                continue;
            }
            brute.push(
                (i..atoms.len())
                    .filter(|&j| atoms[j] == atoms[i])
                    .map(|j| j + 1)
                    .collect(),
            );
        }
        assert_eq!(equality_type(&x).partition(), brute);
        assert_eq!(equality_type(&x).skeleton(), v("(#0,(#0,#0))"));
    }

    #[test]
    fn least_support_examples() {
        assert_eq!(least_support(&v("(#5,#5)")), vec![Atom(5)]);
        assert_eq!(least_support(&v("a")), vec![]);
        assert_eq!(least_support(&v("(#2,(a,#7))")), vec![Atom(2), Atom(7)]);
    }

    #[test]
    fn orbit_rep_counts_match_bell_numbers() {
        let pair = Sort::prod(Sort::Atom, Sort::Atom);
        assert_eq!(enumerate_orbit_reps(&Sort::Atom), vec![v("#0")]);
        assert_eq!(
            enumerate_orbit_reps(&pair),
            vec![v("(#0,#0)"), v("(#0,#1)")]
        );
        for k in 0..6 {
            assert_eq!(enumerate_orbit_reps(&Sort::atoms_tuple(k)).len(), bell(k));
        }
        let s: Sort = "A*(A+unit(x))".parse().unwrap();
        assert_eq!(enumerate_orbit_reps(&s).len(), bell(2) + bell(1));
    }

    #[test]
    fn pattern_examples() {
        let pair = Sort::prod(Sort::Atom, Sort::Atom);
        let eq = PatternFn::from_fn(pair.clone(), Sort::bool(), |x| {
            let a = x.atoms();
            Value::bool(a[0] == a[1])
        })
        .unwrap();
        assert_eq!(eq.apply(&v("(#3,#3)")).unwrap(), v("L:yes"));
        assert_eq!(eq.apply(&v("(#3,#4)")).unwrap(), v("R:no"));
        let proj =
            PatternFn::from_fn(pair.clone(), Sort::Atom, |x| Value::Atom(x.atoms()[0])).unwrap();
        assert_eq!(proj.apply(&v("(#1,#2)")).unwrap(), v("#1"));
        let swap = PatternFn::from_fn(pair.clone(), pair.clone(), |x| {
            let a = x.atoms();
            Value::pair(Value::Atom(a[1]), Value::Atom(a[0]))
        })
        .unwrap();
        assert_eq!(swap.apply(&v("(#4,#9)")).unwrap(), v("(#9,#4)"));
        assert!(matches!(
            swap.apply(&v("#4")),
            Err(Error::SortMismatch { .. })
        ));
    }

    #[test]
    fn pattern_construction_checks() {
        let pair = Sort::prod(Sort::Atom, Sort::Atom);
        let bad = PatternFn::new(pair.clone(), Sort::Atom, vec![(v("(#0,#0)"), v("#0"))]);
        assert!(bad.is_err());
        let invented = PatternFn::from_fn(Sort::Atom, Sort::Atom, |_| v("#5"));
        assert!(invented.is_err());
    }

    #[test]
    fn equivariance_checker_finds_constant_atom() {
        let constant = |_: &Value| v("#0");
        assert!(check_equivariance(constant, &Sort::Atom, 50, 1).is_err());
        assert!(check_equivariance(|x: &Value| x.clone(), &Sort::Atom, 50, 1).is_ok());
    }

    #[test]
    fn literal_round_trip_and_coercion() {
        let s: Sort = "A+(unit(eps)+unit(down))".parse().unwrap();
        assert_eq!(s.to_string(), "A+(unit(eps)+unit(down))");
        let w = s.parse_word("#1,eps,↓").unwrap();
        assert_eq!(w, vec![v("L:#1"), v("R:L:eps"), v("R:R:down")]);
        assert_eq!(s.show_word(&w), "#1,eps,down");
        let amb: Sort = "A+A".parse().unwrap();
        assert!(amb.parse_value("#1").is_err());
        assert_eq!(amb.show(&v("R:#1")), "R:#1");
        assert_eq!(v("[(#1,a),L:[]]").to_string(), "[(#1,a),L:[]]");
    }

    #[test]
    fn finite_sorts() {
        let names = ["0", "1", "2"];
        let s = Sort::finite(&names);
        for i in 0..3 {
            let x = Value::finite(3, i, &names);
            assert!(s.contains(&x));
            assert_eq!(x.finite_index(3), Some(i));
            assert_eq!(s.show(&x), names[i]);
        }
    }
}
