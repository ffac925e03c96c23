//! Bounded equivalence over orbit representatives, differential fuzzing and
//! deatomisation.
//!
//! Agreement on every canonical word of length at most `n` is agreement on
//! every word of length at most `n`, since all models here are equivariant.
//! This is a bounded check, not a decision procedure.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::atoms::{
    canonicalize_word, restricted_growth_strings, sample_word, skeletons, Atom, Side, Sort, Value,
};
use crate::error::{Error, Result};
use crate::machines::{Kind, Machine, Outcome};
use crate::primes::{Pipeline, PrimeFn};
use crate::reglist::Rlf;
use crate::sst::{Sst, SstOutcome};

/// Any model that maps words to words or to a verdict.
#[derive(Debug, Clone)]
pub enum Runner {
    Machine(Machine),
    Pipeline(Pipeline),
    Sst(Sst),
    Rlf(Rlf),
}

/// Result of applying a runner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Word(Vec<Value>),
    Bool(bool),
    /// Rejected or looping.
    Undefined,
}

impl Output {
    pub fn to_json(&self, sort: Option<&Sort>) -> serde_json::Value {
        match self {
            Output::Word(w) => match sort {
                Some(s) => serde_json::json!(s.show_word(w)),
                None => serde_json::json!(w
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")),
            },
            Output::Bool(b) => serde_json::json!(b),
            Output::Undefined => serde_json::Value::Null,
        }
    }
}

impl Runner {
    /// Loads any supported model file, trying each format in turn.
    pub fn from_json(v: serde_json::Value) -> Result<Runner> {
        let mut errors = Vec::new();
        match Sst::from_json(v.clone()) {
            Ok(s) => return Ok(Runner::Sst(s)),
            Err(e) => errors.push(format!("sst: {e}")),
        }
        match Machine::from_json(v.clone()) {
            Ok(m) => return Ok(Runner::Machine(m)),
            Err(e) => errors.push(format!("machine: {e}")),
        }
        match Pipeline::from_json(v.clone()) {
            Ok(p) => return Ok(Runner::Pipeline(p)),
            Err(e) => errors.push(format!("pipeline: {e}")),
        }
        match PrimeFn::from_json(v.clone()) {
            Ok(p) => return Ok(Runner::Pipeline(Pipeline::prime(p))),
            Err(e) => errors.push(format!("prime: {e}")),
        }
        match Rlf::from_json(v) {
            Ok(e) => return Ok(Runner::Rlf(e)),
            Err(e) => errors.push(format!("rlf: {e}")),
        }
        Err(Error::Format(format!(
            "unrecognised model file ({})",
            errors.join("; ")
        )))
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Runner::Machine(m) => m.to_json(),
            Runner::Pipeline(p) => p.to_json(),
            Runner::Sst(s) => s.to_json(),
            Runner::Rlf(e) => e.to_json(),
        }
    }

    pub fn input_sort(&self) -> Result<Sort> {
        Ok(match self {
            Runner::Machine(m) => m.input_sort.clone(),
            Runner::Pipeline(p) => p.domain(),
            Runner::Sst(s) => s.input_sort.clone(),
            Runner::Rlf(e) => match e.domain()? {
                Sort::List(s) => *s,
                other => {
                    return Err(Error::mismatch(
                        format!("expression over {other}"),
                        "a list sort",
                    ))
                }
            },
        })
    }

    /// Output letter sort, or `None` for word predicates.
    pub fn output_sort(&self) -> Result<Option<Sort>> {
        Ok(match self {
            Runner::Machine(m) if m.kind.is_automaton() => None,
            Runner::Machine(m) => Some(m.output_sort.clone()),
            Runner::Pipeline(p) => Some(p.codomain()),
            Runner::Sst(s) => Some(s.output_sort.clone()),
            Runner::Rlf(e) => match e.codomain()? {
                Sort::List(s) => Some(*s),
                _ => None,
            },
        })
    }

    pub fn apply(&self, w: &[Value]) -> Result<Output> {
        Ok(match self {
            Runner::Machine(m) if m.kind.is_automaton() => Output::Bool(m.accepts(w)?),
            Runner::Machine(m) => match m.run(w)? {
                Outcome::Accepted(out) => Output::Word(out),
                _ => Output::Undefined,
            },
            Runner::Pipeline(p) => Output::Word(p.eval(w)?),
            Runner::Sst(s) => match s.eval(w)? {
                SstOutcome::Accepted(out) => Output::Word(out),
                _ => Output::Undefined,
            },
            Runner::Rlf(e) => match e.eval(&Value::List(w.to_vec()))? {
                Value::List(xs) => Output::Word(xs),
                v => Output::Bool(
                    v.as_bool()
                        .ok_or_else(|| Error::mismatch(&v, Sort::bool()))?,
                ),
            },
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Runner::Machine(m) if m.kind == Kind::Mealy => "mealy",
            Runner::Machine(_) => "machine",
            Runner::Pipeline(_) => "pipeline",
            Runner::Sst(_) => "sst",
            Runner::Rlf(_) => "rlf",
        }
    }
}

impl From<Machine> for Runner {
    fn from(m: Machine) -> Runner {
        Runner::Machine(m)
    }
}

impl From<Pipeline> for Runner {
    fn from(p: Pipeline) -> Runner {
        Runner::Pipeline(p)
    }
}

impl From<PrimeFn> for Runner {
    fn from(p: PrimeFn) -> Runner {
        Runner::Pipeline(Pipeline::prime(p))
    }
}

impl From<Sst> for Runner {
    fn from(s: Sst) -> Runner {
        Runner::Sst(s)
    }
}

impl From<Rlf> for Runner {
    fn from(e: Rlf) -> Runner {
        Runner::Rlf(e)
    }
}

/// One word per orbit of `s^len`, atoms labelled `#0, #1, …` in order of
/// first occurrence.
pub fn canonical_words(s: &Sort, len: usize) -> impl Iterator<Item = Vec<Value>> {
    let skels = skeletons(s);
    let mut seqs: Vec<Vec<Value>> = vec![vec![]];
    for _ in 0..len {
        seqs = seqs
            .into_iter()
            .flat_map(|w| {
                skels.iter().map(move |x| {
                    let mut w = w.clone();
                    w.push(x.clone());
                    w
                })
            })
            .collect();
    }
    seqs.into_iter().flat_map(|w| {
        let holes: usize = w.iter().map(|v| v.atoms().len()).sum();
        restricted_growth_strings(holes)
            .into_iter()
            .map(move |rgs| {
                let mut it = rgs.into_iter();
                w.iter()
                    .map(|v| v.map_atoms(&mut |_| Atom(it.next().unwrap())))
                    .collect()
            })
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub word: String,
    pub out1: serde_json::Value,
    pub out2: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    pub lengths_checked: Vec<usize>,
    pub words_checked: usize,
    pub seed: Option<u64>,
}

impl Report {
    pub fn is_equal(&self) -> bool {
        self.counterexample.is_none()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

fn check_sorts(r1: &Runner, r2: &Runner) -> Result<Sort> {
    let (i1, i2) = (r1.input_sort()?, r2.input_sort()?);
    if i1 != i2 {
        return Err(Error::mismatch(format!("input sort {i1}"), i2));
    }
    let (o1, o2) = (r1.output_sort()?, r2.output_sort()?);
    if o1 != o2 {
        let show = |o: Option<Sort>| o.map_or("a verdict".to_string(), |s| s.to_string());
        return Err(Error::mismatch(
            format!("output sort {}", show(o1)),
            show(o2),
        ));
    }
    Ok(i1)
}

fn witness(sort: &Sort, out: Option<&Sort>, w: &[Value], a: &Output, b: &Output) -> Counterexample {
    Counterexample {
        word: sort.show_word(w),
        out1: a.to_json(out),
        out2: b.to_json(out),
    }
}

/// First disagreement among the canonical words of one length, with the
/// number of words examined.
fn scan_length(
    r1: &Runner,
    r2: &Runner,
    sort: &Sort,
    len: usize,
) -> Result<(usize, Option<Counterexample>)> {
    let out = r1.output_sort()?;
    let mut n = 0;
    for w in canonical_words(sort, len) {
        n += 1;
        let (a, b) = (r1.apply(&w)?, r2.apply(&w)?);
        if a != b {
            return Ok((n, Some(witness(sort, out.as_ref(), &w, &a, &b))));
        }
    }
    Ok((n, None))
}

/// Compares two runners on every canonical word of length at most
/// `max_len`. Lengths are scanned in parallel; the reported counterexample
/// is the first one in (length, enumeration order).
pub fn bounded_equiv(r1: &Runner, r2: &Runner, max_len: usize) -> Result<Report> {
    let sort = check_sorts(r1, r2)?;
    let results: Vec<Result<(usize, Option<Counterexample>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..=max_len)
            .map(|len| {
                scope.spawn({
                    let sort = &sort;
                    move || scan_length(r1, r2, sort, len)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut words_checked = 0;
    let mut lengths_checked = Vec::new();
    for (len, r) in results.into_iter().enumerate() {
        let (n, cex) = r?;
        words_checked += n;
        lengths_checked.push(len);
        if cex.is_some() {
            return Ok(Report {
                verdict: "counterexample",
                counterexample: cex,
                lengths_checked,
                words_checked,
                seed: None,
            });
        }
    }
    Ok(Report {
        verdict: "equal",
        counterexample: None,
        lengths_checked,
        words_checked,
        seed: None,
    })
}

/// Compares two runners on seeded random words of length at most `max_len`
/// with atoms drawn from `0..atom_pool`.
pub fn fuzz(
    r1: &Runner,
    r2: &Runner,
    trials: usize,
    max_len: usize,
    atom_pool: u32,
    seed: u64,
) -> Result<Report> {
    let sort = check_sorts(r1, r2)?;
    let out = r1.output_sort()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lengths = std::collections::BTreeSet::new();
    for i in 0..trials.max(1) {
        let len = rng.gen_range(0..=max_len);
        lengths.insert(len);
        let w = sample_word(&sort, &mut rng, len, atom_pool);
        let (a, b) = (r1.apply(&w)?, r2.apply(&w)?);
        if a != b {
            return Ok(Report {
                verdict: "counterexample",
                counterexample: Some(witness(&sort, out.as_ref(), &w, &a, &b)),
                lengths_checked: lengths.into_iter().collect(),
                words_checked: i + 1,
                seed: Some(seed),
            });
        }
    }
    Ok(Report {
        verdict: "equal",
        counterexample: None,
        lengths_checked: lengths.into_iter().collect(),
        words_checked: trials.max(1),
        seed: Some(seed),
    })
}

/// The canonical representative of the orbit of a word.
pub fn canonical_form(w: &[Value]) -> Vec<Value> {
    canonicalize_word(w).0
}

// ---------------------------------------------------------------------------
// Deatomisation

pub const DIAMOND: char = '◇';
pub const CIRCLE: char = '∘';

/// Encoding of atoms as blocks `◇ⁿ∘`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Deatomisation {
    map: BTreeMap<Atom, usize>,
}

impl Deatomisation {
    pub fn new(pairs: impl IntoIterator<Item = (Atom, usize)>) -> Result<Deatomisation> {
        let map: BTreeMap<Atom, usize> = pairs.into_iter().collect();
        if let Some((a, _)) = map.iter().find(|(_, n)| **n == 0) {
            return Err(Error::Format(format!("atom {a} needs a positive count")));
        }
        Ok(Deatomisation { map })
    }

    /// `#i ↦ ◇^i∘` on the given atoms; `#0` is left out.
    pub fn by_name(atoms: &[Atom]) -> Deatomisation {
        Deatomisation {
            map: atoms
                .iter()
                .filter(|a| a.0 > 0)
                .map(|a| (*a, a.0 as usize))
                .collect(),
        }
    }

    /// Parses `1:1,3:3` style specifications.
    pub fn parse(text: &str) -> Result<Deatomisation> {
        let pairs = text
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|item| {
                let (a, n) = item
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("expected atom:count, got {item}")))?;
                let a = a
                    .trim()
                    .trim_start_matches('#')
                    .parse::<u32>()
                    .map_err(|e| Error::Parse(format!("{a}: {e}")))?;
                let n = n
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("{n}: {e}")))?;
                Ok((Atom(a), n))
            })
            .collect::<Result<Vec<_>>>()?;
        Deatomisation::new(pairs)
    }

    pub fn get(&self, a: Atom) -> Option<usize> {
        self.map.get(&a).copied()
    }

    pub fn is_injective(&self) -> bool {
        let mut counts: Vec<usize> = self.map.values().copied().collect();
        counts.sort_unstable();
        counts.windows(2).all(|w| w[0] != w[1])
    }

    pub fn value(&self, v: &Value) -> Result<String> {
        let mut out = String::new();
        self.write(v, &mut out)?;
        Ok(out)
    }

    /// The concatenation of the letters' encodings.
    pub fn word(&self, w: &[Value]) -> Result<String> {
        let mut out = String::new();
        for v in w {
            self.write(v, &mut out)?;
        }
        Ok(out)
    }

    fn write(&self, v: &Value, out: &mut String) -> Result<()> {
        match v {
            Value::Atom(a) => {
                let n = self
                    .get(*a)
                    .ok_or_else(|| Error::MissingAtom(a.to_string()))?;
                out.extend(std::iter::repeat_n(DIAMOND, n));
                out.push(CIRCLE);
            }
            Value::Unit(n) => out.push_str(n),
            Value::Pair(a, b) => {
                out.push('(');
                self.write(a, out)?;
                out.push(',');
                self.write(b, out)?;
                out.push(')');
            }
            Value::Inj(side, x) => {
                out.push(if *side == Side::L { 'L' } else { 'R' });
                self.write(x, out)?;
            }
            Value::List(xs) => {
                out.push('[');
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    self.write(x, out)?;
                }
                out.push(']');
            }
        }
        Ok(())
    }

    /// Reads back a word of letters of sort `s`. Needs an injective map.
    pub fn parse_word(&self, s: &Sort, text: &str) -> Result<Vec<Value>> {
        if !self.is_injective() {
            return Err(Error::Unsupported(
                "parsing needs an injective deatomisation".into(),
            ));
        }
        let inverse: BTreeMap<usize, Atom> = self.map.iter().map(|(a, n)| (*n, *a)).collect();
        let chars: Vec<char> = text.chars().collect();
        let mut p = Reader {
            chars: &chars,
            pos: 0,
            inverse: &inverse,
        };
        let mut out = Vec::new();
        while p.pos < chars.len() {
            out.push(p.value(s)?);
        }
        Ok(out)
    }
}

struct Reader<'a> {
    chars: &'a [char],
    pos: usize,
    inverse: &'a BTreeMap<usize, Atom>,
}

impl Reader<'_> {
    fn fail(&self, what: &str) -> Error {
        Error::Parse(format!("expected {what} at offset {}", self.pos))
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.chars.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.fail(&format!("'{c}'")))
        }
    }

    fn value(&mut self, s: &Sort) -> Result<Value> {
        match s {
            Sort::Atom => {
                let mut n = 0;
                while self.chars.get(self.pos) == Some(&DIAMOND) {
                    n += 1;
                    self.pos += 1;
                }
                self.expect(CIRCLE)?;
                self.inverse
                    .get(&n)
                    .map(|a| Value::Atom(*a))
                    .ok_or_else(|| self.fail("a known atom block"))
            }
            Sort::Unit(name) => {
                for c in name.chars() {
                    self.expect(c)?;
                }
                Ok(Value::Unit(name.clone()))
            }
            Sort::Prod(a, b) => {
                self.expect('(')?;
                let x = self.value(a)?;
                self.expect(',')?;
                let y = self.value(b)?;
                self.expect(')')?;
                Ok(Value::pair(x, y))
            }
            Sort::Sum(a, b) => match self.chars.get(self.pos) {
                Some('L') => {
                    self.pos += 1;
                    Ok(Value::inl(self.value(a)?))
                }
                Some('R') => {
                    self.pos += 1;
                    Ok(Value::inr(self.value(b)?))
                }
                _ => Err(self.fail("L or R")),
            },
            Sort::List(a) => {
                self.expect('[')?;
                let mut xs = Vec::new();
                if self.chars.get(self.pos) == Some(&']') {
                    self.pos += 1;
                    return Ok(Value::List(xs));
                }
                loop {
                    xs.push(self.value(a)?);
                    match self.chars.get(self.pos) {
                        Some(',') => self.pos += 1,
                        Some(']') => {
                            self.pos += 1;
                            return Ok(Value::List(xs));
                        }
                        _ => return Err(self.fail("',' or ']'")),
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::{with_sep, Group};
    use crate::reglist;

    fn bell(n: usize) -> usize {
        restricted_growth_strings(n).len()
    }

    #[test]
    fn canonical_word_counts() {
        assert_eq!(canonical_words(&Sort::Atom, 2).count(), 2);
        assert_eq!(canonical_words(&Sort::Atom, 3).count(), 5);
        assert_eq!(canonical_words(&Sort::finite(&["a", "b"]), 2).count(), 4);
        assert_eq!(canonical_words(&Sort::Atom, 5).count(), bell(5));
        let s = with_sep(&Sort::Atom);
        let words: Vec<_> = canonical_words(&s, 4).collect();
        let mut dedup = words.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(words.len(), dedup.len());
        assert!(words.iter().all(|w| canonical_form(w) == *w));
    }

    #[test]
    fn canonical_words_are_complete() {
        let s = with_sep(&Sort::Atom);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in 0..=5 {
            let all: std::collections::HashSet<_> = canonical_words(&s, len).collect();
            for _ in 0..20 {
                let w = sample_word(&s, &mut rng, len, 6);
                assert!(all.contains(&canonical_form(&w)));
            }
        }
    }

    #[test]
    fn derived_map_reverse_matches_prime() {
        let s = Sort::Atom;
        let a = Runner::from(reglist::derived("mapReverse", &s).unwrap());
        let b = Runner::from(PrimeFn::MapReverse(s));
        let r = bounded_equiv(&a, &b, 6).unwrap();
        assert!(r.is_equal(), "{r:?}");
        assert_eq!(r.lengths_checked, (0..=6).collect::<Vec<_>>());
        assert!(bounded_equiv(&a, &a, 3).unwrap().is_equal());
    }

    #[test]
    fn counterexamples_are_genuine() {
        let ff = Runner::from(PrimeFn::FlipFlop);
        let dom = PrimeFn::FlipFlop.domain();
        let cod = PrimeFn::FlipFlop.codomain();
        let first = canonical_words(&cod, 1).next().unwrap()[0].clone();
        let konst = Runner::from(PrimeFn::LpHom(
            crate::atoms::PatternFn::constant(dom.clone(), cod, first).unwrap(),
        ));
        let r = bounded_equiv(&ff, &konst, 4).unwrap();
        let cex = r.counterexample.expect("the two differ");
        let w = dom.parse_word(&cex.word).unwrap();
        assert_ne!(ff.apply(&w).unwrap(), konst.apply(&w).unwrap());
    }

    #[test]
    fn fuzz_finds_group_difference() {
        let z3 = Runner::from(PrimeFn::GroupTransducer(Group::cyclic(3)));
        let r = fuzz(&z3, &z3, 100, 8, 4, 42).unwrap();
        assert!(r.is_equal());
        let g = Group::cyclic(3);
        let s = g.sort();
        // ℤ₃ letters read modulo 2, multiplied in ℤ₂, written back
        let down = PrimeFn::LpHom(
            crate::atoms::PatternFn::from_fn(s.clone(), Group::cyclic(2).sort(), |v| {
                Group::cyclic(2).element(g.index(v).unwrap() % 2)
            })
            .unwrap(),
        );
        let up = PrimeFn::LpHom(
            crate::atoms::PatternFn::from_fn(Group::cyclic(2).sort(), s, |v| {
                g.element(Group::cyclic(2).index(v).unwrap())
            })
            .unwrap(),
        );
        let z2 = Runner::from(Pipeline::seq(
            Pipeline::prime(down),
            Pipeline::seq(
                Pipeline::prime(PrimeFn::GroupTransducer(Group::cyclic(2))),
                Pipeline::prime(up),
            ),
        ));
        let r = fuzz(&z3, &z2, 500, 6, 1, 7).unwrap();
        assert_eq!(r.verdict, "counterexample");
    }

    #[test]
    fn deatomise_examples() {
        let alpha = Deatomisation::new([(Atom(1), 1), (Atom(3), 3)]).unwrap();
        let w: Vec<Value> = [3, 1, 1, 3].iter().map(|&i| Value::atom(i)).collect();
        assert_eq!(alpha.word(&w).unwrap(), "◇◇◇∘◇∘◇∘◇◇◇∘");
        assert_eq!(alpha.parse_word(&Sort::Atom, "◇◇◇∘◇∘◇∘◇◇◇∘").unwrap(), w);
        assert_eq!(Deatomisation::by_name(&[Atom(1), Atom(3)]), alpha);
        assert_eq!(alpha.value(&Value::unit("eps")).unwrap(), "eps");
        let collide = Deatomisation::new([(Atom(1), 1), (Atom(2), 1)]).unwrap();
        assert!(!collide.is_injective());
        assert_eq!(
            collide.word(&[Value::atom(1), Value::atom(2)]).unwrap(),
            "◇∘◇∘"
        );
        assert_eq!(
            alpha.word(&[Value::atom(9)]),
            Err(Error::MissingAtom("#9".into()))
        );
    }

    #[test]
    fn deatomise_round_trip() {
        let s = Sort::sum(Sort::prod(Sort::Atom, Sort::Atom), Sort::unit("sep"));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let w = sample_word(&s, &mut rng, 6, 5);
            let alpha =
                Deatomisation::new(crate::atoms::word_atoms(&w).into_iter().zip(1..)).unwrap();
            assert_eq!(alpha.parse_word(&s, &alpha.word(&w).unwrap()).unwrap(), w);
        }
    }
}
