//! Prime functions, their sequential and parallel compositions, Mealy
//! machines computing them, and the product construction for sequential
//! composition of single-use Mealy machines.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::atoms::{
    canonicalize, enumerate_orbit_reps, Atom, PatternFn, PatternRepr, Side, Sort, Value,
};
use crate::error::{Error, Result};
use crate::machines::{
    Action, Branch, Builder, Kind, Machine, MachineRepr, Outcome, Question, Reg, Transition,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    table: Vec<Vec<usize>>,
}

impl Group {
    /// A multiplication table with element 0 as identity.
    pub fn new(table: Vec<Vec<usize>>) -> Result<Group> {
        let n = table.len();
        let bad = |m: &str| Err(Error::Invalid(format!("group table: {m}")));
        if n == 0
            || table
                .iter()
                .any(|row| row.len() != n || row.iter().any(|&x| x >= n))
        {
            return bad("not a square table over its elements");
        }
        for a in 0..n {
            if table[0][a] != a || table[a][0] != a {
                return bad("0 is not the identity");
            }
            if !(0..n).any(|b| table[a][b] == 0 && table[b][a] == 0) {
                return bad("missing inverse");
            }
            for b in 0..n {
                for c in 0..n {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return bad("not associative");
                    }
                }
            }
        }
        Ok(Group { table })
    }

    pub fn cyclic(n: usize) -> Group {
        Group::new(
            (0..n)
                .map(|a| (0..n).map(|b| (a + b) % n).collect())
                .collect(),
        )
        .expect("cyclic group")
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.order()).map(|i| i.to_string()).collect()
    }

    pub fn sort(&self) -> Sort {
        Sort::finite(&self.names())
    }

    pub fn element(&self, i: usize) -> Value {
        let names = self.names();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Value::finite(self.order(), i, &refs)
    }

    pub fn index(&self, v: &Value) -> Option<usize> {
        v.finite_index(self.order())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrimeFn {
    /// Letter-to-letter homomorphism.
    LpHom(PatternFn),
    /// Homomorphism; the function maps each letter to a list of letters.
    Hom(PatternFn),
    ClassicalMealy(Box<Machine>),
    AtomPropagation,
    GroupTransducer(Group),
    FlipFlop,
    MapReverse(Sort),
    MapDuplicate(Sort),
    AppendEndmark(Sort),
    ParWithId(Box<PrimeFn>, Sort),
}

pub fn atom_prop_input() -> Sort {
    Sort::sum(Sort::Atom, Sort::sum(Sort::unit("eps"), Sort::unit("down")))
}

pub fn flip_flop_input() -> Sort {
    Sort::finite(&["a", "b", "1"])
}

pub fn flip_flop_output() -> Sort {
    Sort::finite(&["a", "b"])
}

pub fn with_sep(s: &Sort) -> Sort {
    Sort::sum(s.clone(), Sort::unit("sep"))
}

pub fn sep() -> Value {
    Value::inr(Value::unit("sep"))
}

fn is_sep(v: &Value) -> bool {
    matches!(v, Value::Inj(Side::R, _))
}

impl PrimeFn {
    pub fn identity(s: &Sort) -> PrimeFn {
        PrimeFn::LpHom(PatternFn::from_fn(s.clone(), s.clone(), |v| v.clone()).expect("identity"))
    }

    pub fn domain(&self) -> Sort {
        match self {
            PrimeFn::LpHom(f) | PrimeFn::Hom(f) => f.domain().clone(),
            PrimeFn::ClassicalMealy(m) => m.input_sort.clone(),
            PrimeFn::AtomPropagation => atom_prop_input(),
            PrimeFn::GroupTransducer(g) => g.sort(),
            PrimeFn::FlipFlop => flip_flop_input(),
            PrimeFn::MapReverse(s) | PrimeFn::MapDuplicate(s) => with_sep(s),
            PrimeFn::AppendEndmark(s) => s.clone(),
            PrimeFn::ParWithId(p, s) => Sort::prod(p.domain(), s.clone()),
        }
    }

    pub fn codomain(&self) -> Sort {
        match self {
            PrimeFn::LpHom(f) => f.codomain().clone(),
            PrimeFn::Hom(f) => match f.codomain() {
                Sort::List(x) => (**x).clone(),
                other => other.clone(),
            },
            PrimeFn::ClassicalMealy(m) => m.output_sort.clone(),
            PrimeFn::AtomPropagation => Sort::maybe_atom(),
            PrimeFn::GroupTransducer(g) => g.sort(),
            PrimeFn::FlipFlop => flip_flop_output(),
            PrimeFn::MapReverse(s) | PrimeFn::MapDuplicate(s) => with_sep(s),
            PrimeFn::AppendEndmark(s) => Sort::sum(s.clone(), Sort::unit("rend")),
            PrimeFn::ParWithId(p, s) => Sort::prod(p.codomain(), s.clone()),
        }
    }

    pub fn is_length_preserving(&self) -> bool {
        match self {
            PrimeFn::LpHom(_)
            | PrimeFn::ClassicalMealy(_)
            | PrimeFn::AtomPropagation
            | PrimeFn::GroupTransducer(_)
            | PrimeFn::FlipFlop
            | PrimeFn::MapReverse(_) => true,
            PrimeFn::Hom(_) | PrimeFn::MapDuplicate(_) | PrimeFn::AppendEndmark(_) => false,
            PrimeFn::ParWithId(p, _) => p.is_length_preserving(),
        }
    }

    /// Checks the side conditions of each prime.
    pub fn check(&self) -> Result<()> {
        match self {
            PrimeFn::Hom(f) if !matches!(f.codomain(), Sort::List(_)) => {
                Err(Error::Invalid("homomorphism images must be lists".into()))
            }
            PrimeFn::ClassicalMealy(m) => {
                if m.kind != Kind::Mealy
                    || !m.registers.is_empty()
                    || m.input_sort.has_atoms()
                    || m.output_sort.has_atoms()
                {
                    Err(Error::Invalid(
                        "classical Mealy machines are atomless Mealy machines".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            PrimeFn::ParWithId(p, _) => p.check(),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, w: &[Value]) -> Result<Vec<Value>> {
        self.domain().check_word(w)?;
        Ok(match self {
            PrimeFn::LpHom(f) => w.iter().map(|v| f.apply(v)).collect::<Result<_>>()?,
            PrimeFn::Hom(f) => {
                let mut out = Vec::new();
                for v in w {
                    match f.apply(v)? {
                        Value::List(xs) => out.extend(xs),
                        other => return Err(Error::mismatch(other, f.codomain())),
                    }
                }
                out
            }
            PrimeFn::ClassicalMealy(m) => match m.run(w)? {
                Outcome::Accepted(out) => out,
                other => {
                    return Err(Error::Invalid(format!(
                        "classical Mealy machine did not accept: {other:?}"
                    )))
                }
            },
            PrimeFn::AtomPropagation => {
                let mut last: Option<Atom> = None;
                w.iter()
                    .map(|v| match v {
                        Value::Inj(Side::L, a) => {
                            last = a.atoms().first().copied();
                            Value::maybe_atom(None)
                        }
                        Value::Inj(Side::R, x) if matches!(**x, Value::Inj(Side::R, _)) => {
                            Value::maybe_atom(last.take())
                        }
                        _ => Value::maybe_atom(None),
                    })
                    .collect()
            }
            PrimeFn::GroupTransducer(g) => {
                let mut acc = 0;
                w.iter()
                    .map(|v| {
                        acc = g.mul(acc, g.index(v).expect("checked letter"));
                        g.element(acc)
                    })
                    .collect()
            }
            PrimeFn::FlipFlop => {
                let mut last = 0;
                w.iter()
                    .map(|v| {
                        let out = Value::finite(2, last, &["a", "b"]);
                        match v.finite_index(3) {
                            Some(2) | None => {}
                            Some(i) => last = i,
                        }
                        out
                    })
                    .collect()
            }
            PrimeFn::MapReverse(_) => blocks(w, |b| b.iter().rev().cloned().collect()),
            PrimeFn::MapDuplicate(_) => blocks(w, |b| b.iter().chain(b.iter()).cloned().collect()),
            PrimeFn::AppendEndmark(_) => {
                let mut out: Vec<Value> = w.iter().cloned().map(Value::inl).collect();
                out.push(Value::inr(Value::unit("rend")));
                out
            }
            PrimeFn::ParWithId(p, _) => {
                let (xs, ys): (Vec<Value>, Vec<Value>) = w.iter().map(unpair).unzip();
                let out = p.eval(&xs)?;
                if out.len() != ys.len() {
                    return Err(Error::LengthMismatch(
                        "inner prime changed the length".into(),
                    ));
                }
                out.into_iter()
                    .zip(ys)
                    .map(|(a, b)| Value::pair(a, b))
                    .collect()
            }
        })
    }
}

fn unpair(v: &Value) -> (Value, Value) {
    match v {
        Value::Pair(a, b) => ((**a).clone(), (**b).clone()),
        _ => panic!("letter {v} is not a pair"),
    }
}

/// Applies `f` to every maximal separator-free block, keeping separators.
fn blocks(w: &[Value], f: impl Fn(&[Value]) -> Vec<Value>) -> Vec<Value> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, v) in w.iter().enumerate() {
        if is_sep(v) {
            out.extend(f(&w[start..i]));
            out.push(v.clone());
            start = i + 1;
        }
    }
    out.extend(f(&w[start..]));
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pipeline {
    Prime(PrimeFn),
    /// Apply the left pipeline, then the right one.
    Seq(Box<Pipeline>, Box<Pipeline>),
    /// Apply each side to its component of a word of pairs.
    Par(Box<Pipeline>, Box<Pipeline>),
}

impl Pipeline {
    pub fn prime(p: PrimeFn) -> Pipeline {
        Pipeline::Prime(p)
    }

    pub fn seq(a: Pipeline, b: Pipeline) -> Pipeline {
        Pipeline::Seq(Box::new(a), Box::new(b))
    }

    pub fn par(a: Pipeline, b: Pipeline) -> Pipeline {
        Pipeline::Par(Box::new(a), Box::new(b))
    }

    pub fn domain(&self) -> Sort {
        match self {
            Pipeline::Prime(p) => p.domain(),
            Pipeline::Seq(a, _) => a.domain(),
            Pipeline::Par(a, b) => Sort::prod(a.domain(), b.domain()),
        }
    }

    pub fn codomain(&self) -> Sort {
        match self {
            Pipeline::Prime(p) => p.codomain(),
            Pipeline::Seq(_, b) => b.codomain(),
            Pipeline::Par(a, b) => Sort::prod(a.codomain(), b.codomain()),
        }
    }

    pub fn is_length_preserving(&self) -> bool {
        match self {
            Pipeline::Prime(p) => p.is_length_preserving(),
            Pipeline::Seq(a, b) | Pipeline::Par(a, b) => {
                a.is_length_preserving() && b.is_length_preserving()
            }
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            Pipeline::Prime(p) => p.check(),
            Pipeline::Seq(a, b) => {
                a.check()?;
                b.check()?;
                if a.codomain() != b.domain() {
                    return Err(Error::Invalid(format!(
                        "sequential composition: {} does not match {}",
                        a.codomain(),
                        b.domain()
                    )));
                }
                Ok(())
            }
            Pipeline::Par(a, b) => {
                a.check()?;
                b.check()?;
                if !a.is_length_preserving() || !b.is_length_preserving() {
                    return Err(Error::NotLengthPreserving("parallel operands".into()));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, w: &[Value]) -> Result<Vec<Value>> {
        match self {
            Pipeline::Prime(p) => p.eval(w),
            Pipeline::Seq(a, b) => b.eval(&a.eval(w)?),
            Pipeline::Par(a, b) => {
                self.domain().check_word(w)?;
                let (xs, ys): (Vec<Value>, Vec<Value>) = w.iter().map(unpair).unzip();
                let (xs, ys) = (a.eval(&xs)?, b.eval(&ys)?);
                if xs.len() != w.len() || ys.len() != w.len() {
                    return Err(Error::LengthMismatch(
                        "parallel operand changed the length".into(),
                    ));
                }
                Ok(xs
                    .into_iter()
                    .zip(ys)
                    .map(|(x, y)| Value::pair(x, y))
                    .collect())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Mealy machines for length-preserving primes

fn pattern(domain: Sort, codomain: Sort, f: impl Fn(&Value) -> Value) -> PatternFn {
    PatternFn::from_fn(domain, codomain, f).expect("equivariant by construction")
}

/// `f(t) = template` with atom `#i` of the template read as `t_i`.
fn on_tuple(k: usize, codomain: &Sort, template: &Value) -> PatternFn {
    pattern(Sort::atoms_tuple(k), codomain.clone(), |t| {
        let atoms = t.atoms();
        template.map_atoms(&mut |a| atoms[a.0 as usize])
    })
}

/// Distinct atom labels of a canonical template, in increasing order.
fn labels(v: &Value) -> Vec<u32> {
    let mut xs: Vec<u32> = v.atoms().into_iter().map(|a| a.0).collect();
    xs.sort();
    xs.dedup();
    xs
}

/// Reads the letter under the head, branching on the orbit of `view(letter)`:
/// for each orbit representative `o`, stores the atoms labelled `wanted(o)`
/// into `regs[0..]` and continues in the state returned by `then(o, ..)`.
fn read_letter(
    b: &mut Builder,
    q: usize,
    viewed: &Sort,
    view: impl Fn(&Value) -> Value,
    regs: &[Reg],
    wanted: impl Fn(&Value) -> Vec<u32>,
    mut then: impl FnMut(&Value, &mut Builder) -> usize,
) {
    let orbits = enumerate_orbit_reps(viewed);
    let view = &view;
    let mut cur = q;
    for (i, o) in orbits.iter().enumerate() {
        let entry = then(o, b);
        let mut actions: Vec<Action> = wanted(o)
            .into_iter()
            .enumerate()
            .map(|(j, label)| {
                b.store(regs[j], |v| {
                    let (rep, support) = canonicalize(&view(v));
                    (rep == *o).then(|| support[label as usize])
                })
            })
            .collect();
        let (first, target) = if actions.is_empty() {
            (Action::Nop, entry)
        } else {
            let first = actions.remove(0);
            if actions.is_empty() {
                (first, entry)
            } else {
                let s = b.fresh_state("read");
                b.chain(s, actions, entry);
                (first, s)
            }
        };
        if i + 1 == orbits.len() {
            b.go(cur, first, target);
        } else {
            let test = b.pred(|v| canonicalize(&view(v)).0 == *o);
            let next = b.fresh_state("test");
            b.set(cur, test, (target, first), (next, Action::Nop));
            cur = next;
        }
    }
}

impl PrimeFn {
    pub fn as_mealy(&self) -> Result<Machine> {
        match self {
            PrimeFn::LpHom(f) => {
                let mut b = Builder::new(Kind::Mealy, f.domain().clone(), f.codomain().clone());
                let q = b.state("q");
                let k = enumerate_orbit_reps(f.domain())
                    .iter()
                    .map(|o| labels(&f.apply(o).unwrap()).len())
                    .max()
                    .unwrap_or(0);
                let regs: Vec<Reg> = (0..k).map(|i| b.reg(&format!("r{i}"))).collect();
                let out = f.codomain().clone();
                read_letter(
                    &mut b,
                    q,
                    &f.domain().clone(),
                    |v| v.clone(),
                    &regs,
                    |o| labels(&f.apply(o).unwrap()),
                    |o, b| {
                        let image = f.apply(o).unwrap();
                        let used = labels(&image);
                        let template = image.map_atoms(&mut |a| {
                            Atom(used.iter().position(|x| *x == a.0).unwrap() as u32)
                        });
                        let s = b.fresh_state("emit");
                        let act = Action::OutputMove(
                            on_tuple(used.len(), &out, &template),
                            regs[..used.len()].to_vec(),
                        );
                        b.go(s, act, q);
                        s
                    },
                );
                b.build("q")
            }
            PrimeFn::ClassicalMealy(m) => {
                self.check()?;
                Ok((**m).clone())
            }
            PrimeFn::AtomPropagation => {
                let mut b = Builder::new(Kind::Mealy, atom_prop_input(), Sort::maybe_atom());
                let r = b.reg("r");
                let empty = b.state("empty");
                let full = b.state("full");
                let bot = b.output_move(vec![], |_| Value::maybe_atom(None));
                let is_atom = b.pred(|v| matches!(v, Value::Inj(Side::L, _)));
                let is_down = b.pred(|v| matches!(v, Value::Inj(Side::R, x) if matches!(**x, Value::Inj(Side::R, _))));
                let store = b.store(r, |v| v.atoms().first().copied());
                let pass = b.output_move(vec![r], |a| Value::maybe_atom(Some(a[0])));
                for (q, name) in [(empty, "empty"), (full, "full")] {
                    let stored = b.state(&format!("{name}-stored"));
                    let other = b.state(&format!("{name}-other"));
                    b.set(
                        q,
                        is_atom.clone(),
                        (stored, store.clone()),
                        (other, Action::Nop),
                    );
                    b.go(stored, bot.clone(), full);
                    if q == full {
                        b.set(
                            other,
                            is_down.clone(),
                            (empty, pass.clone()),
                            (full, bot.clone()),
                        );
                    } else {
                        b.go(other, bot.clone(), empty);
                    }
                }
                b.build("empty")
            }
            PrimeFn::GroupTransducer(g) => {
                let mut b = Builder::new(Kind::Mealy, g.sort(), g.sort());
                let n = g.order();
                let ids: Vec<usize> = (0..n).map(|i| b.state(&format!("g{i}"))).collect();
                for a in 0..n {
                    let mut cur = ids[a];
                    for h in 0..n {
                        let prod = g.mul(a, h);
                        let emit = b.output_move(vec![], |_| g.element(prod));
                        if h + 1 == n {
                            b.go(cur, emit, ids[prod]);
                        } else {
                            let gh = g.clone();
                            let test = b.pred(move |v| gh.index(v) == Some(h));
                            let next = b.state(&format!("g{a}-not{h}"));
                            b.set(cur, test, (ids[prod], emit), (next, Action::Nop));
                            cur = next;
                        }
                    }
                }
                b.build("g0")
            }
            PrimeFn::FlipFlop => {
                let mut b = Builder::new(Kind::Mealy, flip_flop_input(), flip_flop_output());
                let sa = b.state("a");
                let sb = b.state("b");
                let out = |i: usize| Value::finite(2, i, &["a", "b"]);
                let oa = b.output_move(vec![], move |_| out(0));
                let ob = b.output_move(vec![], move |_| out(1));
                let is_b = b.pred(|v| v.finite_index(3) == Some(1));
                let is_a = b.pred(|v| v.finite_index(3) == Some(0));
                b.set(sa, is_b, (sb, oa.clone()), (sa, oa));
                b.set(sb, is_a, (sa, ob.clone()), (sb, ob));
                b.build("a")
            }
            PrimeFn::ParWithId(p, s) => par_with_id(&p.as_mealy()?, s),
            PrimeFn::Hom(_)
            | PrimeFn::MapReverse(_)
            | PrimeFn::MapDuplicate(_)
            | PrimeFn::AppendEndmark(_) => Err(Error::NotLengthPreserving(format!("{self:?}"))),
        }
    }
}

/// Extends a Mealy machine to pairs, copying the second component through.
pub fn par_with_id(m: &Machine, s: &Sort) -> Result<Machine> {
    if m.kind != Kind::Mealy {
        return Err(Error::KindMismatch(
            "parallel product needs a Mealy machine".into(),
        ));
    }
    let input = Sort::prod(m.input_sort.clone(), s.clone());
    let output = Sort::prod(m.output_sort.clone(), s.clone());
    let mut b = Builder::new(Kind::Mealy, input.clone(), output.clone());
    for r in &m.registers {
        b.reg(r);
    }
    let d = s.dimension().unwrap_or(0);
    let extra: Vec<Reg> = (0..d).map(|i| b.reg(&format!("id{i}"))).collect();
    let first = |v: &Value| unpair(v).0;
    let second = |v: &Value| unpair(v).1;
    let lift_letter =
        |f: &PatternFn, cod: Sort| pattern(input.clone(), cod, |v| f.apply(&first(v)).unwrap());
    let orbits = enumerate_orbit_reps(s);
    let name = |q: usize, o: Option<usize>| match o {
        None => format!("{}@read", m.states[q]),
        Some(i) => format!("{}@{i}", m.states[q]),
    };
    for q in 0..m.states.len() {
        let entry = b.state(&name(q, None));
        let orbit_state: Vec<usize> = (0..orbits.len())
            .map(|i| b.state(&name(q, Some(i))))
            .collect();
        read_letter(&mut b, entry, s, second, &extra, labels, |o, _| {
            orbit_state[orbits.iter().position(|x| x == o).unwrap()]
        });
    }
    for q in 0..m.states.len() {
        for (i, o) in orbits.iter().enumerate() {
            let t = &m.delta[q];
            let here = b.state(&name(q, Some(i)));
            let question = match &t.question {
                Question::Letter(f) => Question::Letter(lift_letter(f, Sort::bool())),
                Question::RegEq(x, y) => Question::RegEq(*x, *y),
            };
            let mut branch = |br: &Branch| -> (usize, Action) {
                match &br.action {
                    Action::Store(r, f) => (
                        b.state(&name(br.target, Some(i))),
                        Action::Store(*r, lift_letter(f, Sort::maybe_atom())),
                    ),
                    Action::OutputMove(f, rs) => {
                        let k = rs.len();
                        let used = labels(o).len();
                        let mut all = rs.clone();
                        all.extend(&extra[..used]);
                        let o = o.clone();
                        let g = pattern(Sort::atoms_tuple(k + used), output.clone(), |t| {
                            let atoms = t.atoms();
                            let left = f.apply(&Value::tuple(&atoms[..k])).unwrap();
                            let right = o.map_atoms(&mut |a| atoms[k + a.0 as usize]);
                            Value::pair(left, right)
                        });
                        (b.state(&name(br.target, None)), Action::OutputMove(g, all))
                    }
                    other => (b.state(&name(br.target, Some(i))), other.clone()),
                }
            };
            let yes = branch(&t.yes);
            let no = branch(&t.no);
            b.set(here, question, yes, no);
        }
    }
    b.build(&name(m.initial, None))
}

// ---------------------------------------------------------------------------
// Sequential composition of Mealy machines

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Mode {
    /// Simulating the first machine in the given state.
    F(usize),
    /// Writing the remaining copies of a stored register.
    FStore {
        branch: (usize, bool),
        rest: Vec<u16>,
        next: usize,
    },
    /// Comparing copies of the output registers to learn the letter's orbit.
    Det {
        branch: (usize, bool),
        next: usize,
        results: Vec<bool>,
    },
    /// Simulating the second machine on the known letter.
    G {
        branch: (usize, bool),
        next: usize,
        tuple: Value,
        classes: Vec<Vec<Reg>>,
    },
    Loop,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Desc {
    mode: Mode,
    gq: usize,
    avail: Vec<Vec<u16>>,
    gmap: Vec<Option<u16>>,
}

struct Product<'a> {
    f: &'a Machine,
    g: &'a Machine,
    bank: usize,
    always: PatternFn,
}

const Z1: u16 = 0;
const Z2: u16 = 1;

impl<'a> Product<'a> {
    fn phys(&self, r: Reg, i: usize) -> u16 {
        (2 + r * self.bank + i) as u16
    }

    fn branch_of(&self, (q, ans): (usize, bool)) -> &'a Branch {
        let t = &self.f.delta[q];
        if ans {
            &t.yes
        } else {
            &t.no
        }
    }

    fn out_of(&self, br: (usize, bool)) -> (&'a PatternFn, &'a [Reg]) {
        match &self.branch_of(br).action {
            Action::OutputMove(p, rs) => (p, rs),
            _ => unreachable!("branch is an output"),
        }
    }

    fn with(&self, d: &Desc, mode: Mode) -> Desc {
        Desc { mode, ..d.clone() }
    }

    fn always(&self, action: Action, target: Desc) -> (Question, (Action, Desc), (Action, Desc)) {
        (
            Question::Letter(self.always.clone()),
            (action.clone(), target.clone()),
            (action, target),
        )
    }

    fn reject(&self, d: &Desc) -> (Question, (Action, Desc), (Action, Desc)) {
        let r = self.with(d, Mode::Reject);
        (
            Question::RegEq(Z1 as usize, Z2 as usize),
            (Action::Nop, r.clone()),
            (Action::Nop, r),
        )
    }

    fn expand(&self, d: &Desc) -> (Question, (Action, Desc), (Action, Desc)) {
        match &d.mode {
            Mode::Loop => self.always(Action::Nop, d.clone()),
            Mode::Reject => self.reject(d),
            Mode::F(q) => {
                let t = &self.f.delta[*q];
                match &t.question {
                    Question::Letter(p) => (
                        Question::Letter(p.clone()),
                        self.f_branch(d, (*q, true)),
                        self.f_branch(d, (*q, false)),
                    ),
                    Question::RegEq(a, b) => {
                        let (Some(&pa), Some(&pb)) = (d.avail[*a].last(), d.avail[*b].last())
                        else {
                            return self.reject(d);
                        };
                        let mut after = d.clone();
                        after.avail[*a].clear();
                        after.avail[*b].clear();
                        (
                            Question::RegEq(pa as usize, pb as usize),
                            self.f_branch(&after, (*q, true)),
                            self.f_branch(&after, (*q, false)),
                        )
                    }
                }
            }
            Mode::FStore { branch, rest, next } => {
                let Action::Store(_, p) = &self.branch_of(*branch).action else {
                    unreachable!()
                };
                let mode = if rest.len() == 1 {
                    Mode::F(*next)
                } else {
                    Mode::FStore {
                        branch: *branch,
                        rest: rest[1..].to_vec(),
                        next: *next,
                    }
                };
                self.always(
                    Action::Store(rest[0] as usize, p.clone()),
                    self.with(d, mode),
                )
            }
            Mode::Det {
                branch,
                next,
                results,
            } => {
                let (_, rs) = self.out_of(*branch);
                let k = rs.len();
                let pairs: Vec<(usize, usize)> = if k == 1 {
                    vec![(0, 0)]
                } else {
                    (0..k)
                        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                        .collect()
                };
                let (i, j) = pairs[results.len()];
                let mut after = d.clone();
                let pa = after.avail[rs[i]].pop();
                let pb = after.avail[rs[j]].pop();
                let (Some(pa), Some(pb)) = (pa, pb) else {
                    return self.reject(d);
                };
                let outcome = |eq: bool| {
                    let mut res = results.clone();
                    res.push(eq);
                    let mode = if res.len() == pairs.len() {
                        self.letter_mode(*branch, *next, &pairs, &res)
                    } else {
                        Mode::Det {
                            branch: *branch,
                            next: *next,
                            results: res,
                        }
                    };
                    (Action::Nop, self.with(&after, mode))
                };
                (
                    Question::RegEq(pa as usize, pb as usize),
                    outcome(true),
                    outcome(false),
                )
            }
            Mode::G {
                branch,
                next,
                tuple,
                classes,
            } => {
                let (pf, _) = self.out_of(*branch);
                let letter = pf.apply(tuple).expect("letter of the output sort");
                let t = &self.g.delta[d.gq];
                match &t.question {
                    Question::Letter(p) => {
                        let ans = p
                            .apply(&letter)
                            .ok()
                            .and_then(|v| v.as_bool())
                            .unwrap_or(false);
                        let br = if ans { &t.yes } else { &t.no };
                        let (a, next_d) = self.g_branch(d, br, &letter, classes, *branch, *next);
                        self.always(a, next_d)
                    }
                    Question::RegEq(x, y) => {
                        let (Some(px), Some(py)) = (d.gmap[*x], d.gmap[*y]) else {
                            return self.reject(d);
                        };
                        let mut after = d.clone();
                        after.gmap[*x] = None;
                        after.gmap[*y] = None;
                        (
                            Question::RegEq(px as usize, py as usize),
                            self.g_branch(&after, &t.yes, &letter, classes, *branch, *next),
                            self.g_branch(&after, &t.no, &letter, classes, *branch, *next),
                        )
                    }
                }
            }
        }
    }

    fn letter_mode(
        &self,
        branch: (usize, bool),
        next: usize,
        pairs: &[(usize, usize)],
        results: &[bool],
    ) -> Mode {
        let (_, rs) = self.out_of(branch);
        let k = rs.len();
        let mut class: Vec<usize> = (0..k).collect();
        for (&(i, j), &eq) in pairs.iter().zip(results) {
            if eq && i != j {
                let (ci, cj) = (class[i], class[j]);
                for c in class.iter_mut() {
                    if *c == cj {
                        *c = ci;
                    }
                }
            }
        }
        let atoms: Vec<Atom> = class.iter().map(|c| Atom(*c as u32)).collect();
        let (tuple, support) = canonicalize(&Value::tuple(&atoms));
        let classes = support
            .iter()
            .map(|a| {
                (0..k)
                    .filter(|i| class[*i] == a.0 as usize)
                    .map(|i| rs[i])
                    .collect()
            })
            .collect();
        Mode::G {
            branch,
            next,
            tuple,
            classes,
        }
    }

    fn f_branch(&self, d: &Desc, at: (usize, bool)) -> (Action, Desc) {
        let br = self.branch_of(at);
        match &br.action {
            Action::Store(r, p) => {
                let owned: Vec<u16> = d.gmap.iter().flatten().copied().collect();
                let targets: Vec<u16> = (0..self.bank)
                    .map(|i| self.phys(*r, i))
                    .filter(|x| !owned.contains(x))
                    .collect();
                let mut after = d.clone();
                after.avail[*r] = targets.clone();
                let mode = if targets.len() == 1 {
                    Mode::F(br.target)
                } else {
                    Mode::FStore {
                        branch: at,
                        rest: targets[1..].to_vec(),
                        next: br.target,
                    }
                };
                (
                    Action::Store(targets[0] as usize, p.clone()),
                    self.with(&after, mode),
                )
            }
            Action::OutputMove(_, rs) => {
                let mode = if rs.is_empty() {
                    self.letter_mode(at, br.target, &[], &[])
                } else {
                    Mode::Det {
                        branch: at,
                        next: br.target,
                        results: Vec::new(),
                    }
                };
                (Action::Nop, self.with(d, mode))
            }
            Action::Nop => (Action::Nop, self.with(d, Mode::F(br.target))),
            other => unreachable!("Mealy action {other:?}"),
        }
    }

    fn g_branch(
        &self,
        d: &Desc,
        br: &Branch,
        letter: &Value,
        classes: &[Vec<Reg>],
        fbranch: (usize, bool),
        fnext: usize,
    ) -> (Action, Desc) {
        debug_assert!(matches!(d.mode, Mode::G { .. }));
        let stay = d.mode.clone();
        let mut after = d.clone();
        after.gq = br.target;
        match &br.action {
            Action::Store(s, p) => {
                let value = p.apply(letter).ok().and_then(|v| v.as_maybe_atom());
                after.gmap[*s] = None;
                if let Some(c) = value {
                    let source = classes[c.0 as usize]
                        .iter()
                        .find(|r| !after.avail[**r].is_empty());
                    match source {
                        Some(&r) => after.gmap[*s] = after.avail[r].pop(),
                        None => return (Action::Nop, self.with(d, Mode::Loop)),
                    }
                }
                (Action::Nop, self.with(&after, stay))
            }
            Action::OutputMove(p, rs) => {
                let mut phys = Vec::new();
                for r in rs {
                    match d.gmap[*r] {
                        Some(x) => phys.push(x as usize),
                        None => return (Action::Nop, self.with(d, Mode::Reject)),
                    }
                    after.gmap[*r] = None;
                }
                let (_, frs) = self.out_of(fbranch);
                for r in frs {
                    after.avail[*r].clear();
                }
                (
                    Action::OutputMove(p.clone(), phys),
                    self.with(&after, Mode::F(fnext)),
                )
            }
            Action::Nop => (Action::Nop, self.with(&after, stay)),
            other => unreachable!("Mealy action {other:?}"),
        }
    }
}

/// A single-use Mealy machine computing `g ∘ f`. The first machine's
/// registers are kept in several copies so that every atom of an output
/// letter can be handed to the second machine as often as it stores it.
pub fn compose_mealy(f: &Machine, g: &Machine) -> Result<Machine> {
    if f.kind != Kind::Mealy || g.kind != Kind::Mealy {
        return Err(Error::KindMismatch(
            "composition needs Mealy machines".into(),
        ));
    }
    if f.output_sort != g.input_sort {
        return Err(Error::mismatch(&f.output_sort, &g.input_sort));
    }
    let stay = g.stay_bound();
    if stay > 64 {
        return Err(Error::Unsupported(format!(
            "stay bound {stay} of the second machine is too large"
        )));
    }
    let k = f
        .delta
        .iter()
        .flat_map(|t| [&t.yes, &t.no])
        .filter_map(|b| match &b.action {
            Action::OutputMove(_, rs) => Some(rs.len()),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let copies = 2.max(k.saturating_sub(1)) + stay as usize;
    let bank = copies + g.registers.len();
    let product = Product {
        f,
        g,
        bank,
        always: pattern(f.input_sort.clone(), Sort::bool(), |_| Value::bool(true)),
    };
    let start = Desc {
        mode: Mode::F(f.initial),
        gq: g.initial,
        avail: vec![Vec::new(); f.registers.len()],
        gmap: vec![None; g.registers.len()],
    };
    let mut ids: HashMap<Desc, usize> = HashMap::new();
    let mut order: Vec<Desc> = Vec::new();
    let mut queue = VecDeque::new();
    ids.insert(start.clone(), 0);
    order.push(start.clone());
    queue.push_back(start);
    let mut delta = Vec::new();
    while let Some(d) = queue.pop_front() {
        let (question, (ya, yd), (na, nd)) = product.expand(&d);
        let mut id = |x: Desc| -> usize {
            if let Some(&i) = ids.get(&x) {
                return i;
            }
            let i = order.len();
            ids.insert(x.clone(), i);
            order.push(x.clone());
            queue.push_back(x);
            i
        };
        let yes = Branch {
            target: id(yd),
            action: ya,
        };
        let no = Branch {
            target: id(nd),
            action: na,
        };
        delta.push(Transition { question, yes, no });
        if delta.len() > 200_000 {
            return Err(Error::Unsupported("product machine too large".into()));
        }
    }
    let mut registers = vec!["z1".to_string(), "z2".to_string()];
    for (r, name) in f.registers.iter().enumerate() {
        for i in 0..bank {
            registers.push(format!("{name}.{i}"));
            debug_assert_eq!(registers.len() - 1, product.phys(r, i) as usize);
        }
    }
    let m = Machine {
        kind: Kind::Mealy,
        input_sort: f.input_sort.clone(),
        output_sort: g.output_sort.clone(),
        states: (0..order.len()).map(|i| format!("s{i}")).collect(),
        initial: 0,
        registers,
        delta,
        single_use: true,
    };
    m.validate().map_err(|e| Error::Invalid(e.join("; ")))?;
    Ok(m)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
enum PrimeRepr {
    LpHom {
        domain: Sort,
        codomain: Sort,
        #[serde(rename = "fn")]
        f: PatternRepr,
    },
    Hom {
        domain: Sort,
        codomain: Sort,
        #[serde(rename = "fn")]
        f: PatternRepr,
    },
    ClassicalMealy {
        machine: MachineRepr,
    },
    AtomPropagation,
    GroupTransducer {
        table: Vec<Vec<usize>>,
    },
    FlipFlop,
    MapReverse {
        sort: Sort,
    },
    MapDuplicate {
        sort: Sort,
    },
    AppendEndmark {
        sort: Sort,
    },
    ParWithId {
        inner: Box<PrimeRepr>,
        id_sort: Sort,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PipelineRepr {
    Prime(PrimeRepr),
    Seq(Vec<PipelineRepr>),
    Par(Vec<PipelineRepr>),
}

impl PrimeFn {
    fn to_repr(&self) -> PrimeRepr {
        match self {
            PrimeFn::LpHom(f) => PrimeRepr::LpHom {
                domain: f.domain().clone(),
                codomain: f.codomain().clone(),
                f: f.to_repr(),
            },
            PrimeFn::Hom(f) => PrimeRepr::Hom {
                domain: f.domain().clone(),
                codomain: self.codomain(),
                f: f.to_repr(),
            },
            PrimeFn::ClassicalMealy(m) => PrimeRepr::ClassicalMealy {
                machine: m.to_repr(),
            },
            PrimeFn::AtomPropagation => PrimeRepr::AtomPropagation,
            PrimeFn::GroupTransducer(g) => PrimeRepr::GroupTransducer {
                table: g.table.clone(),
            },
            PrimeFn::FlipFlop => PrimeRepr::FlipFlop,
            PrimeFn::MapReverse(s) => PrimeRepr::MapReverse { sort: s.clone() },
            PrimeFn::MapDuplicate(s) => PrimeRepr::MapDuplicate { sort: s.clone() },
            PrimeFn::AppendEndmark(s) => PrimeRepr::AppendEndmark { sort: s.clone() },
            PrimeFn::ParWithId(p, s) => PrimeRepr::ParWithId {
                inner: Box::new(p.to_repr()),
                id_sort: s.clone(),
            },
        }
    }

    fn from_repr(r: PrimeRepr) -> Result<PrimeFn> {
        let p = match r {
            PrimeRepr::LpHom {
                domain,
                codomain,
                f,
            } => PrimeFn::LpHom(PatternFn::from_repr(&domain, &codomain, f)?),
            PrimeRepr::Hom {
                domain,
                codomain,
                f,
            } => PrimeFn::Hom(PatternFn::from_repr(&domain, &Sort::list(codomain), f)?),
            PrimeRepr::ClassicalMealy { machine } => {
                PrimeFn::ClassicalMealy(Box::new(Machine::from_repr(machine)?))
            }
            PrimeRepr::AtomPropagation => PrimeFn::AtomPropagation,
            PrimeRepr::GroupTransducer { table } => PrimeFn::GroupTransducer(Group::new(table)?),
            PrimeRepr::FlipFlop => PrimeFn::FlipFlop,
            PrimeRepr::MapReverse { sort } => PrimeFn::MapReverse(sort),
            PrimeRepr::MapDuplicate { sort } => PrimeFn::MapDuplicate(sort),
            PrimeRepr::AppendEndmark { sort } => PrimeFn::AppendEndmark(sort),
            PrimeRepr::ParWithId { inner, id_sort } => {
                PrimeFn::ParWithId(Box::new(PrimeFn::from_repr(*inner)?), id_sort)
            }
        };
        p.check()?;
        Ok(p)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_repr()).expect("prime serializes")
    }

    pub fn from_json(v: serde_json::Value) -> Result<PrimeFn> {
        PrimeFn::from_repr(serde_json::from_value(v)?)
    }
}

impl Pipeline {
    fn to_repr(&self) -> PipelineRepr {
        match self {
            Pipeline::Prime(p) => PipelineRepr::Prime(p.to_repr()),
            Pipeline::Seq(a, b) => PipelineRepr::Seq(vec![a.to_repr(), b.to_repr()]),
            Pipeline::Par(a, b) => PipelineRepr::Par(vec![a.to_repr(), b.to_repr()]),
        }
    }

    fn from_repr(r: PipelineRepr) -> Result<Pipeline> {
        let fold =
            |xs: Vec<PipelineRepr>, mk: fn(Pipeline, Pipeline) -> Pipeline| -> Result<Pipeline> {
                let mut parts = xs
                    .into_iter()
                    .map(Pipeline::from_repr)
                    .collect::<Result<Vec<_>>>()?;
                if parts.is_empty() {
                    return Err(Error::Format("empty composition".into()));
                }
                let last = parts.pop().unwrap();
                Ok(parts.into_iter().rev().fold(last, |acc, p| mk(p, acc)))
            };
        match r {
            PipelineRepr::Prime(p) => Ok(Pipeline::Prime(PrimeFn::from_repr(p)?)),
            PipelineRepr::Seq(xs) => fold(xs, Pipeline::seq),
            PipelineRepr::Par(xs) => fold(xs, Pipeline::par),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_repr()).expect("pipeline serializes")
    }

    pub fn from_json(v: serde_json::Value) -> Result<Pipeline> {
        let p = Pipeline::from_repr(serde_json::from_value(v)?)?;
        p.check()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(s: &Sort, text: &str) -> Vec<Value> {
        s.parse_word(text).unwrap()
    }

    #[test]
    fn group_axioms_are_checked() {
        assert!(Group::new(vec![vec![0, 1], vec![1, 1]]).is_err());
        assert!(Group::new(vec![vec![1, 0], vec![0, 1]]).is_err());
        assert_eq!(Group::cyclic(3).mul(2, 2), 1);
    }

    #[test]
    fn atom_propagation_mealy_agrees_on_table() {
        let s = atom_prop_input();
        let w = word(&s, "#1,#2,eps,eps,down,down,#3,eps,eps,down,eps,down");
        let m = PrimeFn::AtomPropagation.as_mealy().unwrap();
        assert_eq!(m.registers.len(), 1);
        let expect = PrimeFn::AtomPropagation.eval(&w).unwrap();
        assert_eq!(m.run(&w).unwrap(), Outcome::Accepted(expect));
    }

    #[test]
    fn flip_flop_mealy_is_atomless() {
        let m = PrimeFn::FlipFlop.as_mealy().unwrap();
        assert!(m.registers.is_empty());
        let w = word(&flip_flop_input(), "1,1,b,1,1,b,1,1,a,b,b");
        assert_eq!(
            m.run(&w).unwrap().output().unwrap(),
            PrimeFn::FlipFlop.eval(&w).unwrap()
        );
    }

    #[test]
    fn lp_hom_mealy_swaps_pairs() {
        let s = Sort::prod(Sort::Atom, Sort::Atom);
        let f = PatternFn::from_fn(s.clone(), s.clone(), |v| {
            let (a, b) = unpair(v);
            Value::pair(b, a)
        })
        .unwrap();
        let p = PrimeFn::LpHom(f);
        let m = p.as_mealy().unwrap();
        let w = word(&s, "(#1,#2),(#3,#3),(#4,#1)");
        assert_eq!(m.run(&w).unwrap().output().unwrap(), p.eval(&w).unwrap());
    }

    #[test]
    fn compose_group_with_itself() {
        let g = Group::cyclic(3);
        let m = PrimeFn::GroupTransducer(g.clone()).as_mealy().unwrap();
        let c = compose_mealy(&m, &m).unwrap();
        let w = word(&g.sort(), "1,2,0,0,2,1,0,1,1,2,2");
        let once = m.run(&w).unwrap().output().unwrap().to_vec();
        let twice = m.run(&once).unwrap();
        assert_eq!(c.run(&w).unwrap(), twice);
    }

    #[test]
    fn pipeline_json_round_trip() {
        let p = Pipeline::seq(
            Pipeline::prime(PrimeFn::MapReverse(Sort::Atom)),
            Pipeline::prime(PrimeFn::MapDuplicate(Sort::Atom)),
        );
        let back = Pipeline::from_json(p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    fn agree(f: &Machine, g: &Machine, len: usize, seed: u64) {
        use rand::SeedableRng;
        let c = compose_mealy(f, g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for n in 0..len {
            let w = crate::atoms::sample_word(&f.input_sort, &mut rng, n, 4);
            let mid = f.run(&w).unwrap().output().unwrap().to_vec();
            assert_eq!(c.run(&w).unwrap(), g.run(&mid).unwrap(), "on {w:?}");
            assert_eq!(c.audit_single_use(&w).unwrap(), Ok(()));
        }
    }

    #[test]
    fn compose_propagation_with_doubling() {
        let ap = PrimeFn::AtomPropagation.as_mealy().unwrap();
        let ma = Sort::maybe_atom();
        let twice = pattern(ma.clone(), Sort::prod(ma.clone(), ma.clone()), |v| {
            Value::pair(v.clone(), v.clone())
        });
        let dbl = PrimeFn::LpHom(twice).as_mealy().unwrap();
        agree(&ap, &dbl, 12, 1);
    }

    #[test]
    fn compose_identity_then_propagation() {
        let s = atom_prop_input();
        let id = PrimeFn::identity(&s).as_mealy().unwrap();
        let ap = PrimeFn::AtomPropagation.as_mealy().unwrap();
        agree(&id, &ap, 12, 2);
    }

    #[test]
    fn par_with_id_matches_eval() {
        use rand::SeedableRng;
        let p = PrimeFn::ParWithId(
            Box::new(PrimeFn::AtomPropagation),
            Sort::prod(Sort::Atom, Sort::Atom),
        );
        let m = p.as_mealy().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 0..10 {
            let w = crate::atoms::sample_word(&p.domain(), &mut rng, n, 4);
            assert_eq!(m.run(&w).unwrap().output().unwrap(), p.eval(&w).unwrap());
        }
    }
}
