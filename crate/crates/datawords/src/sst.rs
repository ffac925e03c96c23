//! Streaming string transducers with atoms: a one-way single-use machine
//! whose output is assembled in string registers.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::atoms::{
    canonicalize, enumerate_orbit_reps, Atom, PatternFn, PatternRepr, Side, Sort, Value,
};
use crate::error::{Error, Result};
use crate::machines::{inner_letter, Action, Question, Reg, StateId};
use crate::primes::{sep, Group, PrimeFn};

pub type StrReg = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SAction {
    /// Store, MoveRight, Accept, Reject or Nop.
    Base(Action),
    /// Overwrite a string register with one letter built from atom registers.
    SetLetter {
        dst: StrReg,
        f: PatternFn,
        regs: Vec<Reg>,
    },
    /// `dst := a · b`; `a` and `b` become empty unless one of them is `dst`.
    Concat { dst: StrReg, a: StrReg, b: StrReg },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SBranch {
    pub target: StateId,
    pub action: SAction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct STransition {
    pub question: Question,
    pub yes: SBranch,
    pub no: SBranch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sst {
    pub input_sort: Sort,
    pub output_sort: Sort,
    pub states: Vec<String>,
    pub initial: StateId,
    pub registers: Vec<String>,
    pub strings: Vec<String>,
    pub output_register: StrReg,
    pub delta: Vec<STransition>,
    /// False for the copyful variant: nothing is reset after use.
    pub single_use: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SstOutcome {
    Accepted(Vec<Value>),
    Rejected,
    Loop,
}

impl SstOutcome {
    pub fn output(&self) -> Option<&[Value]> {
        match self {
            SstOutcome::Accepted(w) => Some(w),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLabel {
    Leaf(Value),
    Concat(Option<usize>, Option<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestNode {
    /// Tape position at which the action was performed.
    pub column: usize,
    pub label: NodeLabel,
}

/// The string-register actions of a run; children are the most recent
/// actions on the two concatenated registers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterForest {
    pub nodes: Vec<ForestNode>,
    pub root: Option<usize>,
}

impl RegisterForest {
    /// Left-to-right leaves below the root.
    pub fn dfs(&self) -> Vec<Value> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(n) = stack.pop() {
            match &self.nodes[n].label {
                NodeLabel::Leaf(v) => out.push(v.clone()),
                NodeLabel::Concat(a, b) => {
                    stack.extend(b.iter().copied());
                    stack.extend(a.iter().copied());
                }
            }
        }
        out
    }

    /// True if some node is the child of two parents.
    pub fn has_sharing(&self) -> bool {
        let mut seen = HashSet::new();
        self.nodes.iter().any(|n| match n.label {
            NodeLabel::Concat(a, b) => a.into_iter().chain(b).any(|c| !seen.insert(c)),
            NodeLabel::Leaf(_) => false,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.dfs().len()
    }
}

impl Sst {
    pub fn letter_sort(&self) -> Sort {
        Sort::tape(&self.input_sort)
    }

    fn tape(&self, w: &[Value]) -> Vec<Value> {
        let mut t = vec![crate::machines::lend()];
        t.extend(w.iter().cloned().map(Value::inl));
        t.push(crate::machines::rend());
        t
    }

    fn simulate(&self, w: &[Value], forest: bool) -> Result<(SstOutcome, RegisterForest)> {
        self.input_sort.check_word(w)?;
        let tape = self.tape(w);
        let mut regs: Vec<Option<Atom>> = vec![None; self.registers.len()];
        let mut strings: Vec<Vec<Value>> = vec![Vec::new(); self.strings.len()];
        let mut last: Vec<Option<usize>> = vec![None; self.strings.len()];
        let mut nodes: Vec<ForestNode> = Vec::new();
        let mut pos = 0;
        let mut q = self.initial;
        let mut seen = HashSet::new();
        let done =
            |o: SstOutcome, nodes: Vec<ForestNode>, root| Ok((o, RegisterForest { nodes, root }));
        loop {
            if !seen.insert((pos, q, regs.clone())) {
                return done(SstOutcome::Loop, nodes, None);
            }
            let t = &self.delta[q];
            let letter = &tape[pos];
            let answer = match &t.question {
                Question::Letter(f) => f.apply(letter)?.as_bool().unwrap_or(false),
                Question::RegEq(a, b) => {
                    let (x, y) = (regs[*a], regs[*b]);
                    if self.single_use {
                        regs[*a] = None;
                        regs[*b] = None;
                    }
                    match (x, y) {
                        (Some(x), Some(y)) => x == y,
                        _ => return done(SstOutcome::Rejected, nodes, None),
                    }
                }
            };
            let br = if answer { &t.yes } else { &t.no };
            q = br.target;
            match &br.action {
                SAction::Base(Action::Store(r, f)) => regs[*r] = f.apply(letter)?.as_maybe_atom(),
                SAction::Base(Action::MoveRight) => {
                    pos += 1;
                    if pos >= tape.len() {
                        return done(SstOutcome::Rejected, nodes, None);
                    }
                }
                SAction::Base(Action::Accept) => {
                    let out = std::mem::take(&mut strings[self.output_register]);
                    let root = last[self.output_register];
                    return done(SstOutcome::Accepted(out), nodes, root);
                }
                SAction::Base(Action::Reject) => return done(SstOutcome::Rejected, nodes, None),
                SAction::Base(_) => {}
                SAction::SetLetter { dst, f, regs: rs } => {
                    let mut atoms = Vec::with_capacity(rs.len());
                    for r in rs {
                        match regs[*r] {
                            Some(a) => atoms.push(a),
                            None => return done(SstOutcome::Rejected, nodes, None),
                        }
                    }
                    if self.single_use {
                        for r in rs {
                            regs[*r] = None;
                        }
                    }
                    let v = f.apply(&Value::tuple(&atoms))?;
                    if forest {
                        nodes.push(ForestNode {
                            column: pos,
                            label: NodeLabel::Leaf(v.clone()),
                        });
                        last[*dst] = Some(nodes.len() - 1);
                    }
                    strings[*dst] = vec![v];
                }
                SAction::Concat { dst, a, b } => {
                    let mut s = strings[*a].clone();
                    s.extend(strings[*b].iter().cloned());
                    if forest {
                        nodes.push(ForestNode {
                            column: pos,
                            label: NodeLabel::Concat(last[*a], last[*b]),
                        });
                        if self.single_use {
                            last[*a] = None;
                            last[*b] = None;
                        }
                        last[*dst] = Some(nodes.len() - 1);
                    }
                    if self.single_use {
                        strings[*a].clear();
                        strings[*b].clear();
                    }
                    strings[*dst] = s;
                }
            }
        }
    }

    pub fn eval(&self, w: &[Value]) -> Result<SstOutcome> {
        Ok(self.simulate(w, false)?.0)
    }

    pub fn register_forest(&self, w: &[Value]) -> Result<RegisterForest> {
        match self.simulate(w, true)? {
            (SstOutcome::Accepted(_), f) => Ok(f),
            _ => Err(Error::NotAccepting),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let n = self.states.len();
        let (nr, ns) = (self.registers.len(), self.strings.len());
        let letters = self.letter_sort();
        if self.delta.len() != n {
            errs.push(format!("{} states but {} transitions", n, self.delta.len()));
        }
        if self.initial >= n || self.output_register >= ns {
            errs.push("initial state or output register out of range".into());
        }
        for (q, t) in self.delta.iter().enumerate() {
            let at = |m: &str| format!("state {}: {m}", self.states.get(q).map_or("?", |s| s));
            match &t.question {
                Question::Letter(f) if f.domain() != &letters || f.codomain() != &Sort::bool() => {
                    errs.push(at("letter predicate has wrong sorts"))
                }
                Question::RegEq(a, b) if a == b || *a >= nr || *b >= nr => {
                    errs.push(at("registers must be distinct"))
                }
                _ => {}
            }
            for br in [&t.yes, &t.no] {
                if br.target >= n {
                    errs.push(at("target out of range"));
                }
                match &br.action {
                    SAction::Base(Action::Store(r, f)) => {
                        if *r >= nr || f.domain() != &letters || f.codomain() != &Sort::maybe_atom()
                        {
                            errs.push(at("bad store"));
                        }
                    }
                    SAction::Base(Action::MoveLeft) => {
                        errs.push(at("streaming transducers forbid previous"))
                    }
                    SAction::Base(Action::Output(..) | Action::OutputMove(..)) => {
                        errs.push(at("streaming transducers output through string registers"))
                    }
                    SAction::Base(_) => {}
                    SAction::SetLetter { dst, f, regs } => {
                        let distinct: HashSet<_> = regs.iter().collect();
                        if distinct.len() != regs.len() || regs.iter().any(|r| *r >= nr) {
                            errs.push(at("registers must be distinct"));
                        }
                        if *dst >= ns {
                            errs.push(at("unknown string register"));
                        }
                        if f.domain() != &Sort::atoms_tuple(regs.len())
                            || f.codomain() != &self.output_sort
                        {
                            errs.push(at("letter function has wrong sorts"));
                        }
                    }
                    SAction::Concat { dst, a, b } => {
                        if *dst >= ns || *a >= ns || *b >= ns {
                            errs.push(at("unknown string register"));
                        }
                        if a == b && self.single_use {
                            errs.push(at("concatenated registers must be distinct"));
                        }
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// Counts output positions that hold some other letter and sit next to an
/// occurrence of `last`; the bound for `k` string registers is `2k`.
pub fn adjacency_letter_check(output: &[Value], last: &Value, k: usize) -> bool {
    let near = (0..output.len())
        .filter(|&i| &output[i] != last)
        .filter(|&i| (i > 0 && &output[i - 1] == last) || output.get(i + 1) == Some(last))
        .count();
    near <= 2 * k
}

// ---------------------------------------------------------------------------
// Construction helpers

#[derive(Debug, Clone)]
pub struct SstBuilder {
    input_sort: Sort,
    output_sort: Sort,
    states: Vec<String>,
    registers: Vec<String>,
    strings: Vec<String>,
    delta: BTreeMap<StateId, STransition>,
    single_use: bool,
    fresh: usize,
}

impl SstBuilder {
    pub fn new(input_sort: Sort, output_sort: Sort) -> SstBuilder {
        SstBuilder {
            input_sort,
            output_sort,
            states: Vec::new(),
            registers: Vec::new(),
            strings: Vec::new(),
            delta: BTreeMap::new(),
            single_use: true,
            fresh: 0,
        }
    }

    pub fn copyful(mut self) -> SstBuilder {
        self.single_use = false;
        self
    }

    pub fn letter_sort(&self) -> Sort {
        Sort::tape(&self.input_sort)
    }

    pub fn state(&mut self, name: &str) -> StateId {
        intern(&mut self.states, name)
    }

    pub fn fresh_state(&mut self, hint: &str) -> StateId {
        self.fresh += 1;
        let name = format!("{hint}~{}", self.fresh);
        self.state(&name)
    }

    pub fn reg(&mut self, name: &str) -> Reg {
        intern(&mut self.registers, name)
    }

    pub fn string(&mut self, name: &str) -> StrReg {
        intern(&mut self.strings, name)
    }

    pub fn set(
        &mut self,
        q: StateId,
        question: Question,
        yes: (StateId, SAction),
        no: (StateId, SAction),
    ) {
        let t = STransition {
            question,
            yes: SBranch {
                target: yes.0,
                action: yes.1,
            },
            no: SBranch {
                target: no.0,
                action: no.1,
            },
        };
        assert!(
            self.delta.insert(q, t).is_none(),
            "state {} given two transitions",
            self.states[q]
        );
    }

    pub fn go(&mut self, q: StateId, action: SAction, target: StateId) {
        let always = self.pred(|_| true);
        self.set(q, always, (target, action.clone()), (target, action));
    }

    /// Performs the actions in order through fresh intermediate states.
    pub fn chain(&mut self, q: StateId, actions: Vec<SAction>, target: StateId) {
        if actions.is_empty() {
            self.go(q, SAction::Base(Action::Nop), target);
            return;
        }
        let n = actions.len();
        let mut cur = q;
        for (i, a) in actions.into_iter().enumerate() {
            let next = if i + 1 == n {
                target
            } else {
                self.fresh_state(&self.states[q].clone())
            };
            self.go(cur, a, next);
            cur = next;
        }
    }

    pub fn pred(&self, f: impl Fn(&Value) -> bool) -> Question {
        Question::Letter(
            PatternFn::from_fn(self.letter_sort(), Sort::bool(), |v| Value::bool(f(v)))
                .expect("atomless"),
        )
    }

    pub fn store(&self, r: Reg, pick: impl Fn(&Value) -> Option<Atom>) -> SAction {
        let f = PatternFn::from_fn(self.letter_sort(), Sort::maybe_atom(), |v| {
            Value::maybe_atom(pick(v))
        })
        .expect("stored atoms come from the letter");
        SAction::Base(Action::Store(r, f))
    }

    pub fn set_letter(&self, dst: StrReg, regs: Vec<Reg>, f: impl Fn(&[Atom]) -> Value) -> SAction {
        let f = PatternFn::from_fn(
            Sort::atoms_tuple(regs.len()),
            self.output_sort.clone(),
            |t| f(&t.atoms()),
        )
        .expect("letters use register atoms only");
        SAction::SetLetter { dst, f, regs }
    }

    pub fn concat(&self, dst: StrReg, a: StrReg, b: StrReg) -> SAction {
        SAction::Concat { dst, a, b }
    }

    pub fn build(self, initial: &str, output: &str) -> Result<Sst> {
        let m = self.assemble(initial, output)?;
        m.validate().map_err(|e| Error::Invalid(e.join("; ")))?;
        Ok(m)
    }

    fn assemble(self, initial: &str, output: &str) -> Result<Sst> {
        let initial = self
            .states
            .iter()
            .position(|s| s == initial)
            .ok_or_else(|| Error::Invalid(format!("unknown initial state {initial}")))?;
        let output_register = self
            .strings
            .iter()
            .position(|s| s == output)
            .ok_or_else(|| Error::Invalid(format!("unknown output register {output}")))?;
        let mut delta_map = self.delta;
        let delta = (0..self.states.len())
            .map(|q| {
                delta_map.remove(&q).ok_or_else(|| {
                    Error::Invalid(format!("state {} has no transition", self.states[q]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sst {
            input_sort: self.input_sort,
            output_sort: self.output_sort,
            states: self.states,
            initial,
            registers: self.registers,
            strings: self.strings,
            output_register,
            delta,
            single_use: self.single_use,
        })
    }
}

fn intern(names: &mut Vec<String>, name: &str) -> usize {
    match names.iter().position(|s| s == name) {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    }
}

fn pattern(domain: Sort, codomain: Sort, f: impl Fn(&Value) -> Value) -> PatternFn {
    PatternFn::from_fn(domain, codomain, f).expect("equivariant by construction")
}

/// Template over `k` atoms: atom label `labels[j]` of `v` is read as `t_j`.
fn letter_fn(v: &Value, labels: &[u32], codomain: &Sort) -> PatternFn {
    pattern(Sort::atoms_tuple(labels.len()), codomain.clone(), |t| {
        let atoms = t.atoms();
        v.map_atoms(&mut |a| {
            atoms[labels
                .iter()
                .position(|l| *l == a.0)
                .expect("label in template")]
        })
    })
}

fn labels(v: &Value) -> Vec<u32> {
    let mut xs: Vec<u32> = v.atoms().into_iter().map(|a| a.0).collect();
    xs.sort();
    xs.dedup();
    xs
}

/// Per input letter, writes the letter into `T` and appends (or prepends)
/// it to the output register: the identity and reverse functions.
fn letterwise(sigma: &Sort, prepend: bool) -> Result<Sst> {
    let mut b = SstBuilder::new(sigma.clone(), sigma.clone());
    let out = b.string("O");
    let t = b.string("T");
    let k = sigma.dimension().unwrap_or(0);
    let regs: Vec<Reg> = (0..k).map(|i| b.reg(&format!("r{i}"))).collect();
    let scan = b.state("scan");
    let is_left = b.pred(|v| *v == crate::machines::lend());
    let is_right = b.pred(|v| *v == crate::machines::rend());
    let right_test = b.fresh_state("end");
    let mv = SAction::Base(Action::MoveRight);
    let done = b.state("done");
    b.go(done, SAction::Base(Action::Accept), done);
    b.set(
        scan,
        is_left,
        (scan, mv.clone()),
        (right_test, SAction::Base(Action::Nop)),
    );
    let mut cur = b.fresh_state("letter");
    b.set(
        right_test,
        is_right,
        (done, SAction::Base(Action::Nop)),
        (cur, SAction::Base(Action::Nop)),
    );
    let orbits = enumerate_orbit_reps(sigma);
    for (i, o) in orbits.iter().enumerate() {
        let ls = labels(o);
        let mut actions: Vec<SAction> = ls
            .iter()
            .enumerate()
            .map(|(j, &l)| {
                b.store(regs[j], |v| {
                    let (rep, support) = canonicalize(inner_letter(v)?);
                    (rep == *o).then(|| support[l as usize])
                })
            })
            .collect();
        actions.push(SAction::SetLetter {
            dst: t,
            f: letter_fn(o, &ls, sigma),
            regs: regs[..ls.len()].to_vec(),
        });
        actions.push(if prepend {
            b.concat(out, t, out)
        } else {
            b.concat(out, out, t)
        });
        actions.push(mv.clone());
        let body = b.fresh_state("write");
        b.chain(body, actions, scan);
        if i + 1 == orbits.len() {
            b.go(cur, SAction::Base(Action::Nop), body);
        } else {
            let test = b.pred(|v| inner_letter(v).map(|x| canonicalize(x).0) == Some(o.clone()));
            let next = b.fresh_state("letter");
            b.set(
                cur,
                test,
                (body, SAction::Base(Action::Nop)),
                (next, SAction::Base(Action::Nop)),
            );
            cur = next;
        }
    }
    b.build("scan", "O")
}

pub fn identity_sst(sigma: &Sort) -> Result<Sst> {
    letterwise(sigma, false)
}

pub fn reverse_sst(sigma: &Sort) -> Result<Sst> {
    letterwise(sigma, true)
}

/// Map reverse over `𝔸 + sep`: `A := aA` on atoms, `B := B|A` on separators.
pub fn map_reverse_sst() -> Result<Sst> {
    blockwise(false)
}

/// Map duplicate over `𝔸 + sep`, keeping two copies of the current block.
pub fn map_duplicate_sst() -> Result<Sst> {
    blockwise(true)
}

fn blockwise(duplicate: bool) -> Result<Sst> {
    let sigma = crate::primes::with_sep(&Sort::Atom);
    let mut b = SstBuilder::new(sigma.clone(), sigma.clone());
    let out = b.string("B");
    let a1 = b.string("A");
    let a2 = if duplicate {
        Some(b.string("A2"))
    } else {
        None
    };
    let t = b.string("T");
    let r = b.reg("r");
    let s = b.reg("s");
    let scan = b.state("scan");
    let mv = SAction::Base(Action::MoveRight);
    let atom = |v: &Value| match inner_letter(v) {
        Some(Value::Inj(Side::L, a)) => a.atoms().first().copied(),
        _ => None,
    };
    let is_atom = b.pred(|v| atom(v).is_some());
    let is_sep = b.pred(|v| inner_letter(v).is_some_and(|x| matches!(x, Value::Inj(Side::R, _))));
    let is_end = b.pred(|v| *v == crate::machines::rend());
    let on_atom = b.state("atom");
    let not_atom = b.state("not-atom");
    let on_sep = b.state("sep");
    let not_sep = b.state("not-sep");
    let on_end = b.state("end");
    let done = b.state("done");
    b.set(
        scan,
        is_atom,
        (on_atom, SAction::Base(Action::Nop)),
        (not_atom, SAction::Base(Action::Nop)),
    );
    b.set(
        not_atom,
        is_sep,
        (on_sep, SAction::Base(Action::Nop)),
        (not_sep, SAction::Base(Action::Nop)),
    );
    b.set(
        not_sep,
        is_end,
        (on_end, SAction::Base(Action::Nop)),
        (scan, mv.clone()),
    );
    let id = |x: &[Atom]| Value::inl(Value::Atom(x[0]));
    let mut atom_actions = vec![b.store(r, atom), b.set_letter(t, vec![r], id)];
    atom_actions.push(if duplicate {
        b.concat(a1, a1, t)
    } else {
        b.concat(a1, t, a1)
    });
    if let Some(a2) = a2 {
        atom_actions.extend([
            b.store(s, atom),
            b.set_letter(t, vec![s], id),
            b.concat(a2, a2, t),
        ]);
    }
    atom_actions.push(mv.clone());
    b.chain(on_atom, atom_actions, scan);
    let mut flush = vec![b.concat(out, out, a1)];
    if let Some(a2) = a2 {
        flush.push(b.concat(out, out, a2));
    }
    let mut sep_actions = flush.clone();
    sep_actions.extend([
        b.set_letter(t, vec![], |_| sep()),
        b.concat(out, out, t),
        mv,
    ]);
    b.chain(on_sep, sep_actions, scan);
    b.chain(on_end, flush, done);
    b.go(done, SAction::Base(Action::Accept), done);
    b.build("scan", "B")
}

/// Copyful machine over `𝔸` that doubles its output register at every
/// input letter; the output has `2^n` letters.
pub fn doubling_sst() -> Result<Sst> {
    let out_sort = Sort::unit("x");
    let mut b = SstBuilder::new(Sort::Atom, out_sort).copyful();
    let o = b.string("O");
    let start = b.state("start");
    let scan = b.state("scan");
    let done = b.state("done");
    let body = b.state("double");
    let seed = b.set_letter(o, vec![], |_| Value::unit("x"));
    b.go(start, seed, scan);
    let is_end = b.pred(|v| *v == crate::machines::rend());
    let is_left = b.pred(|v| *v == crate::machines::lend());
    let not_end = b.fresh_state("letter");
    b.set(
        scan,
        is_end,
        (done, SAction::Base(Action::Accept)),
        (not_end, SAction::Base(Action::Nop)),
    );
    let skip = b.fresh_state("skip");
    b.set(
        not_end,
        is_left,
        (skip, SAction::Base(Action::Nop)),
        (body, SAction::Base(Action::Nop)),
    );
    b.go(skip, SAction::Base(Action::MoveRight), scan);
    let dbl = b.concat(o, o, o);
    b.chain(body, vec![dbl, SAction::Base(Action::MoveRight)], scan);
    b.go(done, SAction::Base(Action::Accept), done);
    b.build("start", "O")
}

// ---------------------------------------------------------------------------
// Post-composition with two-way primes

/// Bookkeeping kept in the state for each string register of the inner
/// machine; `pend` is the physical atom register of a pending atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
struct Abs {
    tag: u8,
    val: usize,
    pend: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Src {
    A(usize),
    B(usize),
    /// A letter of the output alphabet; atoms are labels of the classes of
    /// the letter being written.
    Letter(Value),
    /// The pending atom of the left operand, as an output letter.
    PendA,
}

struct Update {
    parts: Vec<(usize, Vec<Src>)>,
    abs: Abs,
    /// Class of the letter's atom that becomes pending.
    take: Option<u32>,
}

// Abs tags for atom propagation.
const TRANSPARENT: u8 = 0;
const PENDING: u8 = 1;
const OPEN: u8 = 2;
const CLOSED: u8 = 3;

enum Strategy {
    Reverse,
    Duplicate,
    Hom(PatternFn),
    Propagate,
    Group(Group),
    Flip,
}

fn bot() -> Value {
    Value::maybe_atom(None)
}

fn flip_letter(i: usize) -> Value {
    Value::finite(2, i, &["a", "b"])
}

impl Strategy {
    fn parts(&self) -> usize {
        match self {
            Strategy::Reverse | Strategy::Flip => 3,
            Strategy::Duplicate => 5,
            Strategy::Hom(_) => 1,
            Strategy::Propagate => 2,
            Strategy::Group(g) => g.order(),
        }
    }

    /// Copies of a letter atom needed to write the image of one letter.
    fn uses(&self) -> usize {
        match self {
            Strategy::Duplicate => 2,
            Strategy::Hom(h) => h
                .cases()
                .iter()
                .map(|(_, t)| t.atoms().len())
                .max()
                .unwrap_or(0)
                .max(1),
            _ => 1,
        }
    }

    fn letter(&self, l: &Value) -> Update {
        use Src::Letter as L;
        let upd = |parts, tag, val| Update {
            parts,
            abs: Abs {
                tag,
                val,
                pend: None,
            },
            take: None,
        };
        match self {
            Strategy::Reverse if is_separator(l) => upd(vec![(1, vec![L(l.clone())])], 1, 0),
            Strategy::Reverse => upd(vec![(0, vec![L(l.clone())])], 0, 0),
            Strategy::Duplicate if is_separator(l) => upd(vec![(2, vec![L(l.clone())])], 1, 0),
            Strategy::Duplicate => {
                upd(vec![(0, vec![L(l.clone())]), (1, vec![L(l.clone())])], 0, 0)
            }
            Strategy::Hom(h) => {
                let image = match h.apply(l).expect("letter of the domain") {
                    Value::List(xs) => xs,
                    other => vec![other],
                };
                upd(vec![(0, image.into_iter().map(L).collect())], 0, 0)
            }
            Strategy::Propagate => match l {
                Value::Inj(Side::L, a) => Update {
                    parts: vec![(0, vec![L(bot())])],
                    abs: Abs {
                        tag: PENDING,
                        val: 0,
                        pend: None,
                    },
                    take: Some(a.atoms()[0].0),
                },
                Value::Inj(Side::R, x) if matches!(**x, Value::Inj(Side::R, _)) => {
                    upd(vec![], OPEN, 0)
                }
                _ => upd(vec![(0, vec![L(bot())])], TRANSPARENT, 0),
            },
            Strategy::Group(g) => {
                let h = g.index(l).expect("group letter");
                upd(
                    (0..g.order())
                        .map(|q| (q, vec![L(g.element(g.mul(q, h)))]))
                        .collect(),
                    0,
                    h,
                )
            }
            Strategy::Flip => {
                let i = l.finite_index(3).expect("flip-flop letter");
                let val = if i == 2 { 0 } else { i + 1 };
                upd(
                    vec![(0, vec![L(flip_letter(0))]), (1, vec![L(flip_letter(1))])],
                    0,
                    val,
                )
            }
        }
    }

    /// Parts of `a · b` from the parts of `a` and `b`.
    fn concat(&self, a: Abs, b: Abs) -> (Vec<(usize, Vec<Src>)>, Abs) {
        use Src::{A, B};
        let same = |tag, val, pend| Abs { tag, val, pend };
        match self {
            Strategy::Reverse => match (a.tag, b.tag) {
                (0, 0) => (vec![(0, vec![B(0), A(0)])], same(0, 0, None)),
                (0, _) => (
                    vec![(0, vec![B(0), A(0)]), (1, vec![B(1)]), (2, vec![B(2)])],
                    same(1, 0, None),
                ),
                (_, 0) => (
                    vec![(0, vec![A(0)]), (1, vec![A(1)]), (2, vec![B(0), A(2)])],
                    same(1, 0, None),
                ),
                _ => (
                    vec![
                        (0, vec![A(0)]),
                        (1, vec![A(1), B(0), A(2), B(1)]),
                        (2, vec![B(2)]),
                    ],
                    same(1, 0, None),
                ),
            },
            Strategy::Duplicate => match (a.tag, b.tag) {
                (0, 0) => (
                    vec![(0, vec![A(0), B(0)]), (1, vec![A(1), B(1)])],
                    same(0, 0, None),
                ),
                (0, _) => (
                    vec![
                        (0, vec![A(0), B(0)]),
                        (1, vec![A(1), B(1)]),
                        (2, vec![B(2)]),
                        (3, vec![B(3)]),
                        (4, vec![B(4)]),
                    ],
                    same(1, 0, None),
                ),
                (_, 0) => (
                    vec![
                        (0, vec![A(0)]),
                        (1, vec![A(1)]),
                        (2, vec![A(2)]),
                        (3, vec![A(3), B(0)]),
                        (4, vec![A(4), B(1)]),
                    ],
                    same(1, 0, None),
                ),
                _ => (
                    vec![
                        (0, vec![A(0)]),
                        (1, vec![A(1)]),
                        (2, vec![A(2), A(3), B(0), A(4), B(1), B(2)]),
                        (3, vec![B(3)]),
                        (4, vec![B(4)]),
                    ],
                    same(1, 0, None),
                ),
            },
            Strategy::Hom(_) => (vec![(0, vec![A(0), B(0)])], Abs::default()),
            Strategy::Propagate => {
                let a_down = a.tag >= OPEN;
                let pending = if b.tag == TRANSPARENT { a.pend } else { b.pend };
                let pend_tag = |t: u8| {
                    if t == TRANSPARENT && pending.is_some() {
                        PENDING
                    } else {
                        t
                    }
                };
                if !a_down {
                    match b.tag {
                        TRANSPARENT | PENDING => (
                            vec![(0, vec![A(0), B(0)])],
                            same(pend_tag(a.tag.max(b.tag)), 0, pending),
                        ),
                        OPEN if a.tag == PENDING => (
                            vec![(0, vec![A(0), B(0)]), (1, vec![Src::PendA, B(1)])],
                            same(CLOSED, 0, b.pend),
                        ),
                        _ => (
                            vec![(0, vec![A(0), B(0)]), (1, vec![B(1)])],
                            same(b.tag, 0, b.pend),
                        ),
                    }
                } else {
                    let mid = match b.tag {
                        TRANSPARENT | PENDING => vec![A(1), B(0)],
                        OPEN if a.pend.is_some() => vec![A(1), B(0), Src::PendA, B(1)],
                        OPEN => vec![A(1), B(0), Src::Letter(bot()), B(1)],
                        _ => vec![A(1), B(0), B(1)],
                    };
                    (vec![(0, vec![A(0)]), (1, mid)], same(a.tag, 0, pending))
                }
            }
            Strategy::Group(g) => {
                let parts = (0..g.order())
                    .map(|q| (q, vec![A(q), B(g.mul(q, a.val))]))
                    .collect();
                (parts, same(0, g.mul(a.val, b.val), None))
            }
            Strategy::Flip => {
                let val = if b.val != 0 { b.val } else { a.val };
                if a.val != 0 {
                    (
                        vec![
                            (0, vec![A(0)]),
                            (1, vec![A(1)]),
                            (2, vec![A(2), B(a.val - 1), B(2)]),
                        ],
                        same(0, val, None),
                    )
                } else {
                    (
                        vec![
                            (0, vec![A(0), B(0)]),
                            (1, vec![A(1), B(1)]),
                            (2, vec![B(2)]),
                        ],
                        same(0, val, None),
                    )
                }
            }
        }
    }

    /// The whole output of the prime on a register's contents.
    fn finish(&self, a: Abs) -> Vec<Src> {
        use Src::A;
        match self {
            Strategy::Reverse => {
                if a.tag == 0 {
                    vec![A(0)]
                } else {
                    vec![A(0), A(1), A(2)]
                }
            }
            Strategy::Duplicate => {
                if a.tag == 0 {
                    vec![A(0), A(1)]
                } else {
                    (0..5).map(A).collect()
                }
            }
            Strategy::Hom(_) | Strategy::Group(_) => vec![A(0)],
            Strategy::Propagate => match a.tag {
                OPEN => vec![A(0), Src::Letter(bot()), A(1)],
                CLOSED => vec![A(0), A(1)],
                _ => vec![A(0)],
            },
            Strategy::Flip => vec![A(0), A(2)],
        }
    }
}

fn is_separator(v: &Value) -> bool {
    matches!(v, Value::Inj(Side::R, _))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Mode {
    F(StateId),
    /// Comparing copies of the registers of a letter write.
    Det {
        branch: (StateId, bool),
        results: Vec<bool>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Desc {
    mode: Mode,
    avail: Vec<Vec<u16>>,
    abs: Vec<Abs>,
}

struct Post<'a> {
    f: &'a Sst,
    strategy: Strategy,
    out_sort: Sort,
    bank: usize,
    parts: usize,
    temps: usize,
    // physical string registers
    scratch: StrReg,
    empty: StrReg,
    junk: StrReg,
    out: StrReg,
    ids: HashMap<Desc, StateId>,
    queue: VecDeque<Desc>,
    delta: Vec<Option<STransition>>,
    always: PatternFn,
}

type Outgoing = (StateId, SAction);

impl<'a> Post<'a> {
    fn phys(&self, r: Reg, i: usize) -> u16 {
        (r * self.bank + i) as u16
    }

    fn part(&self, x: StrReg, i: usize) -> StrReg {
        x * self.parts + i
    }

    fn temp(&self, i: usize) -> StrReg {
        self.f.strings.len() * self.parts + i
    }

    fn state_of(&mut self, d: Desc) -> StateId {
        if let Some(&q) = self.ids.get(&d) {
            return q;
        }
        let q = self.delta.len();
        self.delta.push(None);
        self.ids.insert(d.clone(), q);
        self.queue.push_back(d);
        q
    }

    fn fresh(&mut self) -> StateId {
        self.delta.push(None);
        self.delta.len() - 1
    }

    fn go(&mut self, q: StateId, a: SAction, target: StateId) {
        let question = Question::Letter(self.always.clone());
        self.delta[q] = Some(STransition {
            question,
            yes: SBranch {
                target,
                action: a.clone(),
            },
            no: SBranch { target, action: a },
        });
    }

    /// Performs `actions` and continues in `dest`; returns the first step.
    fn chain(&mut self, mut actions: Vec<SAction>, dest: StateId) -> Outgoing {
        if actions.is_empty() {
            return (dest, SAction::Base(Action::Nop));
        }
        let first = actions.remove(0);
        let mut target = dest;
        for a in actions.into_iter().rev() {
            let q = self.fresh();
            self.go(q, a, target);
            target = q;
        }
        (target, first)
    }

    fn branch(&self, (q, yes): (StateId, bool)) -> &'a SBranch {
        let t = &self.f.delta[q];
        if yes {
            &t.yes
        } else {
            &t.no
        }
    }

    fn take_copy(avail: &mut [Vec<u16>], class: &[Reg]) -> Result<u16> {
        class
            .iter()
            .find_map(|r| avail[*r].pop())
            .ok_or_else(|| Error::Unsupported("register copies exhausted".into()))
    }

    /// Physical actions writing the given pieces into fresh temporaries and
    /// then into the targets; leftover parts of `clear` are emptied.
    fn assemble(
        &self,
        d: &mut Desc,
        a: StrReg,
        b: StrReg,
        assigns: Vec<(StrReg, Vec<Src>)>,
        classes: &[Vec<Reg>],
        clear: &[StrReg],
    ) -> Result<Vec<SAction>> {
        let mut acts = Vec::new();
        let mut used = HashSet::new();
        let pend_a = d.abs[a].pend;
        for (i, (_, pieces)) in assigns.iter().enumerate() {
            let t = self.temp(i);
            for p in pieces {
                let src = match p {
                    Src::A(j) => self.part(a, *j),
                    Src::B(j) => self.part(b, *j),
                    Src::Letter(v) => {
                        let ls = labels(v);
                        let mut regs = Vec::new();
                        for l in &ls {
                            regs.push(
                                Self::take_copy(&mut d.avail, &classes[*l as usize])? as usize
                            );
                        }
                        acts.push(SAction::SetLetter {
                            dst: self.scratch,
                            f: letter_fn(v, &ls, &self.out_sort),
                            regs,
                        });
                        self.scratch
                    }
                    Src::PendA => {
                        let p = pend_a.expect("pending atom");
                        let f = pattern(Sort::atoms_tuple(1), self.out_sort.clone(), |t| {
                            Value::maybe_atom(t.atoms().first().copied())
                        });
                        acts.push(SAction::SetLetter {
                            dst: self.scratch,
                            f,
                            regs: vec![p as usize],
                        });
                        self.scratch
                    }
                };
                used.insert(src);
                acts.push(SAction::Concat {
                    dst: t,
                    a: t,
                    b: src,
                });
            }
        }
        let targets: HashSet<StrReg> = assigns.iter().map(|(t, _)| *t).collect();
        for (i, (target, _)) in assigns.iter().enumerate() {
            acts.push(SAction::Concat {
                dst: *target,
                a: self.temp(i),
                b: self.empty,
            });
        }
        for r in clear {
            if !used.contains(r) && !targets.contains(r) {
                acts.push(SAction::Concat {
                    dst: self.junk,
                    a: self.junk,
                    b: *r,
                });
            }
        }
        Ok(acts)
    }

    fn all_parts(&self, x: StrReg) -> Vec<StrReg> {
        (0..self.parts).map(|i| self.part(x, i)).collect()
    }

    /// Handles one branch of the inner machine from descriptor `d`.
    fn f_branch(&mut self, d: &Desc, at: (StateId, bool)) -> Result<Outgoing> {
        let br = self.branch(at);
        let mut next = d.clone();
        next.mode = Mode::F(br.target);
        match &br.action {
            SAction::Base(Action::Store(r, phi)) => {
                let owned: Vec<u16> = d.abs.iter().filter_map(|x| x.pend).collect();
                let targets: Vec<u16> = (0..self.bank)
                    .map(|i| self.phys(*r, i))
                    .filter(|x| !owned.contains(x))
                    .collect();
                next.avail[*r] = targets.clone();
                let acts = targets
                    .iter()
                    .map(|p| SAction::Base(Action::Store(*p as usize, phi.clone())))
                    .collect();
                let dest = self.state_of(next);
                Ok(self.chain(acts, dest))
            }
            SAction::Base(Action::Accept) => {
                let o = self.f.output_register;
                let pieces = self.strategy.finish(d.abs[o]);
                let mut acts =
                    self.assemble(&mut next, o, o, vec![(self.out, pieces)], &[], &[])?;
                acts.push(SAction::Base(Action::Accept));
                let dest = self.state_of(next);
                Ok(self.chain(acts, dest))
            }
            SAction::Base(a) => Ok((self.state_of(next), SAction::Base(a.clone()))),
            SAction::SetLetter { regs, .. } => {
                if regs.is_empty() {
                    self.write_letter(&next, at, &[], &[])
                } else {
                    let mut det = d.clone();
                    det.mode = Mode::Det {
                        branch: at,
                        results: Vec::new(),
                    };
                    Ok((self.state_of(det), SAction::Base(Action::Nop)))
                }
            }
            SAction::Concat { dst, a, b } => {
                let (plan, abs) = self.strategy.concat(d.abs[*a], d.abs[*b]);
                let assigns = plan
                    .into_iter()
                    .map(|(i, s)| (self.part(*dst, i), s))
                    .collect();
                let mut clear = self.all_parts(*a);
                clear.extend(self.all_parts(*b));
                clear.extend(self.all_parts(*dst));
                let acts = self.assemble(&mut next, *a, *b, assigns, &[], &clear)?;
                next.abs[*a] = Abs::default();
                next.abs[*b] = Abs::default();
                next.abs[*dst] = abs;
                let dest = self.state_of(next);
                Ok(self.chain(acts, dest))
            }
        }
    }

    /// Writes the letter of a SetLetter branch once its orbit is known.
    fn write_letter(
        &mut self,
        d: &Desc,
        at: (StateId, bool),
        pairs: &[(usize, usize)],
        results: &[bool],
    ) -> Result<Outgoing> {
        let br = self.branch(at);
        let SAction::SetLetter { dst, f, regs } = &br.action else {
            unreachable!()
        };
        let k = regs.len();
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
        let classes: Vec<Vec<Reg>> = support
            .iter()
            .map(|a| {
                (0..k)
                    .filter(|i| class[*i] == a.0 as usize)
                    .map(|i| regs[i])
                    .collect()
            })
            .collect();
        let letter = f.apply(&tuple)?;
        let upd = self.strategy.letter(&letter);
        let mut next = d.clone();
        next.mode = Mode::F(br.target);
        let assigns = upd
            .parts
            .into_iter()
            .map(|(i, s)| (self.part(*dst, i), s))
            .collect();
        let acts = self.assemble(
            &mut next,
            *dst,
            *dst,
            assigns,
            &classes,
            &self.all_parts(*dst),
        )?;
        let mut abs = upd.abs;
        if let Some(c) = upd.take {
            abs.pend = Some(Self::take_copy(&mut next.avail, &classes[c as usize])?);
        }
        next.abs[*dst] = abs;
        for r in regs {
            next.avail[*r].clear();
        }
        let dest = self.state_of(next);
        Ok(self.chain(acts, dest))
    }

    fn expand(&mut self, d: &Desc) -> Result<STransition> {
        let reject = || SAction::Base(Action::Reject);
        let always = Question::Letter(self.always.clone());
        match &d.mode {
            Mode::F(q) => {
                let t = &self.f.delta[*q];
                match &t.question {
                    Question::Letter(p) => {
                        let yes = self.f_branch(d, (*q, true))?;
                        let no = self.f_branch(d, (*q, false))?;
                        Ok(STransition {
                            question: Question::Letter(p.clone()),
                            yes: SBranch {
                                target: yes.0,
                                action: yes.1,
                            },
                            no: SBranch {
                                target: no.0,
                                action: no.1,
                            },
                        })
                    }
                    Question::RegEq(a, b) => {
                        let (Some(&pa), Some(&pb)) = (d.avail[*a].last(), d.avail[*b].last())
                        else {
                            let here = self.state_of(d.clone());
                            return Ok(STransition {
                                question: always,
                                yes: SBranch {
                                    target: here,
                                    action: reject(),
                                },
                                no: SBranch {
                                    target: here,
                                    action: reject(),
                                },
                            });
                        };
                        let mut after = d.clone();
                        after.avail[*a].clear();
                        after.avail[*b].clear();
                        let yes = self.f_branch(&after, (*q, true))?;
                        let no = self.f_branch(&after, (*q, false))?;
                        Ok(STransition {
                            question: Question::RegEq(pa as usize, pb as usize),
                            yes: SBranch {
                                target: yes.0,
                                action: yes.1,
                            },
                            no: SBranch {
                                target: no.0,
                                action: no.1,
                            },
                        })
                    }
                }
            }
            Mode::Det { branch, results } => {
                let SAction::SetLetter { regs, .. } = &self.branch(*branch).action else {
                    unreachable!()
                };
                let k = regs.len();
                let pairs: Vec<(usize, usize)> = if k == 1 {
                    vec![(0, 0)]
                } else {
                    (0..k)
                        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                        .collect()
                };
                let (i, j) = pairs[results.len()];
                let mut after = d.clone();
                let pa = after.avail[regs[i]].pop();
                let pb = after.avail[regs[j]].pop();
                let (Some(pa), Some(pb)) = (pa, pb) else {
                    let here = self.state_of(d.clone());
                    return Ok(STransition {
                        question: always,
                        yes: SBranch {
                            target: here,
                            action: reject(),
                        },
                        no: SBranch {
                            target: here,
                            action: reject(),
                        },
                    });
                };
                let mut outcome = |eq: bool| -> Result<Outgoing> {
                    let mut res = results.clone();
                    res.push(eq);
                    if res.len() == pairs.len() {
                        self.write_letter(&after, *branch, &pairs, &res)
                    } else {
                        let mut next = after.clone();
                        next.mode = Mode::Det {
                            branch: *branch,
                            results: res,
                        };
                        Ok((self.state_of(next), SAction::Base(Action::Nop)))
                    }
                };
                let yes = outcome(true)?;
                let no = outcome(false)?;
                Ok(STransition {
                    question: Question::RegEq(pa as usize, pb as usize),
                    yes: SBranch {
                        target: yes.0,
                        action: yes.1,
                    },
                    no: SBranch {
                        target: no.0,
                        action: no.1,
                    },
                })
            }
        }
    }
}

/// An SST computing `g ∘ f` for a two-way prime `g`: each string register
/// of `f` is split into parts from which the image under `g` of any
/// concatenation can be assembled.
pub fn post_compose_prime(f: &Sst, g: &PrimeFn) -> Result<Sst> {
    if !f.single_use {
        return Err(Error::Unsupported(
            "post-composition of copyful transducers".into(),
        ));
    }
    if f.output_sort != g.domain() {
        return Err(Error::mismatch(&f.output_sort, g.domain()));
    }
    let strategy = match g {
        PrimeFn::MapReverse(_) => Strategy::Reverse,
        PrimeFn::MapDuplicate(_) => Strategy::Duplicate,
        PrimeFn::Hom(h) | PrimeFn::LpHom(h) => {
            let h = if matches!(g, PrimeFn::LpHom(_)) {
                pattern(h.domain().clone(), Sort::list(h.codomain().clone()), |v| {
                    Value::List(vec![h.apply(v).unwrap()])
                })
            } else {
                h.clone()
            };
            Strategy::Hom(h)
        }
        PrimeFn::AtomPropagation => Strategy::Propagate,
        PrimeFn::GroupTransducer(grp) => Strategy::Group(grp.clone()),
        PrimeFn::FlipFlop => Strategy::Flip,
        other => {
            return Err(Error::Unsupported(format!(
                "post-composition with {other:?}"
            )))
        }
    };
    let kmax = f
        .delta
        .iter()
        .flat_map(|t| [&t.yes, &t.no])
        .filter_map(|b| match &b.action {
            SAction::SetLetter { regs, .. } => Some(regs.len()),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let copies = 2.max(kmax.saturating_sub(1)) + strategy.uses() * kmax.max(1);
    let bank = copies + f.strings.len();
    let parts = strategy.parts();
    let temps = parts.max(1);
    let base = f.strings.len() * parts + temps;
    let mut post = Post {
        f,
        out_sort: g.codomain(),
        strategy,
        bank,
        parts,
        temps,
        scratch: base,
        empty: base + 1,
        junk: base + 2,
        out: base + 3,
        ids: HashMap::new(),
        queue: VecDeque::new(),
        delta: Vec::new(),
        always: pattern(f.letter_sort(), Sort::bool(), |_| Value::bool(true)),
    };
    let start = Desc {
        mode: Mode::F(f.initial),
        avail: vec![Vec::new(); f.registers.len()],
        abs: vec![Abs::default(); f.strings.len()],
    };
    post.state_of(start);
    while let Some(d) = post.queue.pop_front() {
        let q = post.ids[&d];
        let t = post.expand(&d)?;
        post.delta[q] = Some(t);
        if post.delta.len() > 500_000 {
            return Err(Error::Unsupported("composed transducer too large".into()));
        }
    }
    let mut strings = Vec::new();
    for name in &f.strings {
        for i in 0..parts {
            strings.push(format!("{name}.{i}"));
        }
    }
    strings.extend((0..post.temps).map(|i| format!("tmp{i}")));
    strings.extend(["scratch", "empty", "junk", "out"].map(String::from));
    let mut registers = Vec::new();
    for name in &f.registers {
        for i in 0..bank {
            registers.push(format!("{name}.{i}"));
        }
    }
    let delta: Vec<STransition> = post
        .delta
        .into_iter()
        .map(|t| t.expect("every state expanded"))
        .collect();
    let m = Sst {
        input_sort: f.input_sort.clone(),
        output_sort: post.out_sort,
        states: (0..delta.len()).map(|i| format!("s{i}")).collect(),
        initial: 0,
        registers,
        strings,
        output_register: post.out,
        delta,
        single_use: true,
    };
    m.validate().map_err(|e| Error::Invalid(e.join("; ")))?;
    Ok(m)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum QuestionRepr {
    Letter(PatternRepr),
    Regeq(String, String),
}

#[derive(Serialize, Deserialize)]
struct LetterRepr {
    #[serde(rename = "fn")]
    f: PatternRepr,
    #[serde(default)]
    atom_regs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PartRepr {
    Reg(String),
    Letter { letter: LetterRepr },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SActionRepr {
    Store {
        reg: String,
        #[serde(rename = "fn")]
        f: PatternRepr,
    },
    MoveRight,
    Accept,
    Reject,
    Nop,
    Setletter {
        reg: String,
        #[serde(rename = "fn")]
        f: PatternRepr,
        #[serde(default)]
        atom_regs: Vec<String>,
    },
    Concat {
        dst: String,
        a: String,
        b: String,
    },
    /// `dst := p1 p2 …`, desugared into letter writes and concatenations.
    Assign {
        dst: String,
        parts: Vec<PartRepr>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ActionsRepr {
    One(SActionRepr),
    Many(Vec<SActionRepr>),
}

#[derive(Serialize, Deserialize)]
struct SBranchRepr {
    state: String,
    action: ActionsRepr,
}

#[derive(Serialize, Deserialize)]
struct STransitionRepr {
    question: QuestionRepr,
    yes: SBranchRepr,
    no: SBranchRepr,
}

#[derive(Serialize, Deserialize)]
struct SstRepr {
    input_sort: Sort,
    output_sort: Sort,
    states: Vec<String>,
    initial: String,
    registers: Vec<String>,
    string_registers: Vec<String>,
    output_register: String,
    #[serde(default = "yes")]
    single_use: bool,
    transitions: BTreeMap<String, STransitionRepr>,
}

fn yes() -> bool {
    true
}

impl Sst {
    pub fn to_json(&self) -> serde_json::Value {
        let reg = |r: &Reg| self.registers[*r].clone();
        let sreg = |r: &StrReg| self.strings[*r].clone();
        let action = |a: &SAction| {
            ActionsRepr::One(match a {
                SAction::Base(Action::Store(r, f)) => SActionRepr::Store {
                    reg: reg(r),
                    f: f.to_repr(),
                },
                SAction::Base(Action::MoveRight) => SActionRepr::MoveRight,
                SAction::Base(Action::Accept) => SActionRepr::Accept,
                SAction::Base(Action::Reject) => SActionRepr::Reject,
                SAction::Base(_) => SActionRepr::Nop,
                SAction::SetLetter { dst, f, regs } => SActionRepr::Setletter {
                    reg: sreg(dst),
                    f: f.to_repr(),
                    atom_regs: regs.iter().map(reg).collect(),
                },
                SAction::Concat { dst, a, b } => SActionRepr::Concat {
                    dst: sreg(dst),
                    a: sreg(a),
                    b: sreg(b),
                },
            })
        };
        let transitions = self
            .delta
            .iter()
            .enumerate()
            .map(|(q, t)| {
                let question = match &t.question {
                    Question::Letter(f) => QuestionRepr::Letter(f.to_repr()),
                    Question::RegEq(a, b) => QuestionRepr::Regeq(reg(a), reg(b)),
                };
                let branch = |b: &SBranch| SBranchRepr {
                    state: self.states[b.target].clone(),
                    action: action(&b.action),
                };
                (
                    self.states[q].clone(),
                    STransitionRepr {
                        question,
                        yes: branch(&t.yes),
                        no: branch(&t.no),
                    },
                )
            })
            .collect();
        let repr = SstRepr {
            input_sort: self.input_sort.clone(),
            output_sort: self.output_sort.clone(),
            states: self.states.clone(),
            initial: self.states[self.initial].clone(),
            registers: self.registers.clone(),
            string_registers: self.strings.clone(),
            output_register: self.strings[self.output_register].clone(),
            single_use: self.single_use,
            transitions,
        };
        serde_json::to_value(repr).expect("transducer serializes")
    }

    pub fn from_json(v: serde_json::Value) -> Result<Sst> {
        let m = Sst::from_json_unchecked(v)?;
        m.validate().map_err(|e| Error::Invalid(e.join("; ")))?;
        Ok(m)
    }

    pub fn from_json_unchecked(v: serde_json::Value) -> Result<Sst> {
        let repr: SstRepr = serde_json::from_value(v)?;
        let letters = Sort::tape(&repr.input_sort);
        let mut b = SstBuilder::new(repr.input_sort.clone(), repr.output_sort.clone());
        if !repr.single_use {
            b = b.copyful();
        }
        for s in &repr.states {
            b.state(s);
        }
        for r in &repr.registers {
            b.reg(r);
        }
        for s in &repr.string_registers {
            b.string(s);
        }
        let find = |names: &[String], s: &str, what: &str| {
            names
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::Invalid(format!("unknown {what} {s}")))
        };
        let regs = repr.registers.clone();
        let mut strings = repr.string_registers.clone();
        let rid = |s: &str| find(&regs, s, "register");
        let out_sort = repr.output_sort.clone();
        let letter = |f: PatternRepr, atom_regs: &[String]| -> Result<(PatternFn, Vec<Reg>)> {
            let rs = atom_regs
                .iter()
                .map(|r| rid(r))
                .collect::<Result<Vec<_>>>()?;
            Ok((
                PatternFn::from_repr(&Sort::atoms_tuple(rs.len()), &out_sort, f)?,
                rs,
            ))
        };
        let mut aux = 0;
        let mut lower = |a: SActionRepr,
                         strings: &mut Vec<String>,
                         b: &mut SstBuilder|
         -> Result<Vec<SAction>> {
            let sid = |s: &str, strings: &mut Vec<String>| -> Result<StrReg> {
                let i = find(strings, s, "string register")?;
                Ok(i)
            };
            Ok(match a {
                SActionRepr::Store { reg, f } => {
                    vec![SAction::Base(Action::Store(
                        rid(&reg)?,
                        PatternFn::from_repr(&letters, &Sort::maybe_atom(), f)?,
                    ))]
                }
                SActionRepr::MoveRight => vec![SAction::Base(Action::MoveRight)],
                SActionRepr::Accept => vec![SAction::Base(Action::Accept)],
                SActionRepr::Reject => vec![SAction::Base(Action::Reject)],
                SActionRepr::Nop => vec![SAction::Base(Action::Nop)],
                SActionRepr::Setletter { reg, f, atom_regs } => {
                    let (f, regs) = letter(f, &atom_regs)?;
                    vec![SAction::SetLetter {
                        dst: sid(&reg, strings)?,
                        f,
                        regs,
                    }]
                }
                SActionRepr::Concat { dst, a, b } => {
                    vec![SAction::Concat {
                        dst: sid(&dst, strings)?,
                        a: sid(&a, strings)?,
                        b: sid(&b, strings)?,
                    }]
                }
                SActionRepr::Assign { dst, parts } => {
                    let dst = sid(&dst, strings)?;
                    let mut acts = Vec::new();
                    let mut srcs = Vec::new();
                    for p in parts {
                        match p {
                            PartRepr::Reg(r) => srcs.push(sid(&r, strings)?),
                            PartRepr::Letter { letter: l } => {
                                aux += 1;
                                let name = format!("aux~{aux}");
                                strings.push(name.clone());
                                let t = b.string(&name);
                                let (f, regs) = letter(l.f, &l.atom_regs)?;
                                acts.push(SAction::SetLetter { dst: t, f, regs });
                                srcs.push(t);
                            }
                        }
                    }
                    aux += 1;
                    let name = format!("aux~{aux}");
                    strings.push(name.clone());
                    let acc = b.string(&name);
                    for s in srcs {
                        acts.push(SAction::Concat {
                            dst: acc,
                            a: acc,
                            b: s,
                        });
                    }
                    aux += 1;
                    let empty = format!("aux~{aux}");
                    strings.push(empty.clone());
                    let e = b.string(&empty);
                    acts.push(SAction::Concat { dst, a: acc, b: e });
                    acts
                }
            })
        };
        for (name, t) in repr.transitions {
            let q = find(&repr.states, &name, "state")?;
            let question = match t.question {
                QuestionRepr::Letter(f) => {
                    Question::Letter(PatternFn::from_repr(&letters, &Sort::bool(), f)?)
                }
                QuestionRepr::Regeq(x, y) => Question::RegEq(rid(&x)?, rid(&y)?),
            };
            let mut branch = |br: SBranchRepr,
                              strings: &mut Vec<String>,
                              b: &mut SstBuilder|
             -> Result<(StateId, SAction)> {
                let target = find(&repr.states, &br.state, "state")?;
                let acts = match br.action {
                    ActionsRepr::One(a) => lower(a, strings, b)?,
                    ActionsRepr::Many(xs) => {
                        let mut all = Vec::new();
                        for a in xs {
                            all.extend(lower(a, strings, b)?);
                        }
                        all
                    }
                };
                if acts.len() == 1 {
                    return Ok((target, acts.into_iter().next().unwrap()));
                }
                let mid = b.fresh_state(&br.state);
                let mut rest = acts;
                if rest.is_empty() {
                    return Ok((target, SAction::Base(Action::Nop)));
                }
                let first = rest.remove(0);
                b.chain(mid, rest, target);
                Ok((mid, first))
            };
            let yes = branch(t.yes, &mut strings, &mut b)?;
            let no = branch(t.no, &mut strings, &mut b)?;
            b.set(q, question, yes, no);
        }
        b.assemble(&repr.initial, &repr.output_register)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::with_sep;

    fn word(s: &Sort, t: &str) -> Vec<Value> {
        s.parse_word(t).unwrap()
    }

    #[test]
    fn map_reverse_and_duplicate_examples() {
        let s = with_sep(&Sort::Atom);
        let w = word(&s, "#1,#2,sep,sep,#3,#4,#5,sep,#6,#7,#8,sep,#9");
        let rev = map_reverse_sst().unwrap().eval(&w).unwrap();
        assert_eq!(
            rev.output().unwrap(),
            word(&s, "#2,#1,sep,sep,#5,#4,#3,sep,#8,#7,#6,sep,#9")
        );
        let dup = map_duplicate_sst()
            .unwrap()
            .eval(&word(&s, "#1,#2,sep"))
            .unwrap();
        assert_eq!(dup.output().unwrap(), word(&s, "#1,#2,#1,#2,sep"));
        assert_eq!(
            map_reverse_sst().unwrap().eval(&[]).unwrap(),
            SstOutcome::Accepted(vec![])
        );
    }

    #[test]
    fn forest_replays_output() {
        let s = with_sep(&Sort::Atom);
        let m = map_reverse_sst().unwrap();
        let w = word(&s, "#1,sep,#2,#3");
        let f = m.register_forest(&w).unwrap();
        assert_eq!(f.dfs(), m.eval(&w).unwrap().output().unwrap());
        assert!(!f.has_sharing());
        let d = doubling_sst().unwrap();
        let f = d.register_forest(&word(&Sort::Atom, "#1,#2,#3")).unwrap();
        assert_eq!(f.leaf_count(), 8);
        assert!(f.has_sharing());
    }

    #[test]
    fn adjacency_examples() {
        let w: Vec<Value> = "554543543254321"
            .chars()
            .map(|c| Value::atom(c.to_digit(10).unwrap()))
            .collect();
        let five = Value::atom(5);
        assert!(!adjacency_letter_check(&w, &five, 1));
        assert!(!adjacency_letter_check(&w, &five, 2));
        assert!(adjacency_letter_check(&[Value::atom(1)], &five, 0));
        assert!(adjacency_letter_check(
            &[five.clone(), five.clone(), five.clone()],
            &five,
            1
        ));
    }

    #[test]
    fn post_compose_reverse_is_involution() {
        let s = with_sep(&Sort::Atom);
        let m = post_compose_prime(
            &map_reverse_sst().unwrap(),
            &PrimeFn::MapReverse(Sort::Atom),
        )
        .unwrap();
        for t in ["#1,#2,sep,#3,#4", "", "sep", "#1,sep,sep,#2,#3,#4,sep"] {
            let w = word(&s, t);
            assert_eq!(m.eval(&w).unwrap().output().unwrap(), w);
        }
    }

    fn agrees(f: &Sst, g: &PrimeFn) {
        use rand::SeedableRng;
        let m = post_compose_prime(f, g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in 0..200 {
            let w = crate::atoms::sample_word(&f.input_sort, &mut rng, n % 9, 4);
            let want = match f.eval(&w).unwrap() {
                SstOutcome::Accepted(u) => Some(g.eval(&u).unwrap()),
                _ => None,
            };
            let got = m.eval(&w).unwrap().output().map(|u| u.to_vec());
            assert_eq!(got, want, "on {}", f.input_sort.show_word(&w));
        }
    }

    #[test]
    fn post_compose_all_primes() {
        let s = with_sep(&Sort::Atom);
        let ap = crate::primes::atom_prop_input();
        let z3 = Group::cyclic(3);
        let ff = crate::primes::flip_flop_input();
        for f in [
            identity_sst(&s).unwrap(),
            reverse_sst(&s).unwrap(),
            map_reverse_sst().unwrap(),
            map_duplicate_sst().unwrap(),
        ] {
            agrees(&f, &PrimeFn::MapReverse(Sort::Atom));
            agrees(&f, &PrimeFn::MapDuplicate(Sort::Atom));
        }
        for f in [identity_sst(&ap).unwrap(), reverse_sst(&ap).unwrap()] {
            agrees(&f, &PrimeFn::AtomPropagation);
        }
        for f in [
            identity_sst(&z3.sort()).unwrap(),
            reverse_sst(&z3.sort()).unwrap(),
        ] {
            agrees(&f, &PrimeFn::GroupTransducer(z3.clone()));
        }
        for f in [identity_sst(&ff).unwrap(), reverse_sst(&ff).unwrap()] {
            agrees(&f, &PrimeFn::FlipFlop);
        }
        let pair = Sort::prod(Sort::Atom, Sort::Atom);
        let swap = PatternFn::from_fn(pair.clone(), Sort::list(pair.clone()), |v| {
            let a = v.atoms();
            Value::List(vec![Value::tuple(&[a[1], a[0]]), v.clone()])
        })
        .unwrap();
        agrees(&reverse_sst(&pair).unwrap(), &PrimeFn::Hom(swap));
    }

    #[test]
    fn json_round_trip() {
        let m = map_duplicate_sst().unwrap();
        let back = Sst::from_json(m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
