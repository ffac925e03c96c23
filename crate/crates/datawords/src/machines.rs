//! Two-way single-use transducers and their special cases: one-way
//! transducers, automata and single-use Mealy machines.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::atoms::{Atom, PatternFn, PatternRepr, Sort, Value};
use crate::error::{Error, Result};

pub type StateId = usize;
pub type Reg = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    TwoWay,
    OneWay,
    Automaton2W,
    Automaton1W,
    Mealy,
}

impl Kind {
    pub fn is_automaton(self) -> bool {
        matches!(self, Kind::Automaton1W | Kind::Automaton2W)
    }

    pub fn is_one_way(self) -> bool {
        matches!(self, Kind::OneWay | Kind::Automaton1W | Kind::Mealy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Question {
    /// Equivariant predicate of the letter under the head.
    Letter(PatternFn),
    /// Equality of two registers; both are cleared in single-use mode.
    RegEq(Reg, Reg),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Store(Reg, PatternFn),
    Output(PatternFn, Vec<Reg>),
    /// Mealy output: emit a letter and advance the head.
    OutputMove(PatternFn, Vec<Reg>),
    MoveLeft,
    MoveRight,
    Accept,
    Reject,
    Nop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub target: StateId,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub question: Question,
    pub yes: Branch,
    pub no: Branch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    pub kind: Kind,
    pub input_sort: Sort,
    pub output_sort: Sort,
    pub states: Vec<String>,
    pub initial: StateId,
    pub registers: Vec<String>,
    pub delta: Vec<Transition>,
    pub single_use: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Accepted(Vec<Value>),
    Rejected,
    Loop,
}

impl Outcome {
    pub fn output(&self) -> Option<&[Value]> {
        match self {
            Outcome::Accepted(w) => Some(w),
            _ => None,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, Outcome::Accepted(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Config {
    pub pos: usize,
    pub state: StateId,
    pub regs: Vec<Option<Atom>>,
}

/// One executed transition.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub before: Config,
    pub answer: bool,
    /// Registers read by the question or the action.
    pub reads: Vec<Reg>,
    pub emitted: Option<Value>,
    pub after: Config,
}

/// How a simulation from some configuration ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stop {
    Accept,
    Reject,
    Loop,
    ExitLeft(Config),
    ExitRight(Config),
}

enum Step {
    Go,
    Stop(Stop),
}

impl Machine {
    /// The alphabet seen by the head: the input sort, plus endmarkers unless
    /// this is a Mealy machine.
    pub fn letter_sort(&self) -> Sort {
        if self.kind == Kind::Mealy {
            self.input_sort.clone()
        } else {
            Sort::tape(&self.input_sort)
        }
    }

    pub fn tape(&self, w: &[Value]) -> Vec<Value> {
        if self.kind == Kind::Mealy {
            w.to_vec()
        } else {
            let mut t = Vec::with_capacity(w.len() + 2);
            t.push(lend());
            t.extend(w.iter().cloned().map(Value::inl));
            t.push(rend());
            t
        }
    }

    pub fn initial_config(&self) -> Config {
        Config {
            pos: 0,
            state: self.initial,
            regs: vec![None; self.registers.len()],
        }
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    pub fn reg_id(&self, name: &str) -> Option<Reg> {
        self.registers.iter().position(|s| s == name)
    }

    fn step(
        &self,
        tape: &[Value],
        cfg: &mut Config,
        out: &mut Vec<Value>,
        reads: &mut Vec<Reg>,
    ) -> (bool, Step) {
        let t = &self.delta[cfg.state];
        let letter = &tape[cfg.pos];
        let answer = match &t.question {
            Question::Letter(f) => f
                .apply(letter)
                .ok()
                .and_then(|v| v.as_bool())
                .unwrap_or(false),
            Question::RegEq(a, b) => {
                reads.extend([*a, *b]);
                let (x, y) = (cfg.regs[*a], cfg.regs[*b]);
                if self.single_use {
                    cfg.regs[*a] = None;
                    cfg.regs[*b] = None;
                }
                match (x, y) {
                    (Some(x), Some(y)) => x == y,
                    _ => return (false, Step::Stop(Stop::Reject)),
                }
            }
        };
        let branch = if answer { &t.yes } else { &t.no };
        cfg.state = branch.target;
        let step = match &branch.action {
            Action::Store(r, f) => {
                cfg.regs[*r] = f.apply(letter).ok().and_then(|v| v.as_maybe_atom());
                Step::Go
            }
            Action::Output(f, rs) | Action::OutputMove(f, rs) => {
                reads.extend(rs.iter().copied());
                let mut atoms = Vec::with_capacity(rs.len());
                for r in rs {
                    match cfg.regs[*r] {
                        Some(a) => atoms.push(a),
                        None => return (answer, Step::Stop(Stop::Reject)),
                    }
                }
                if self.single_use {
                    for r in rs {
                        cfg.regs[*r] = None;
                    }
                }
                match f.apply(&Value::tuple(&atoms)) {
                    Ok(v) => out.push(v),
                    Err(_) => return (answer, Step::Stop(Stop::Reject)),
                }
                if matches!(branch.action, Action::OutputMove(..)) {
                    self.advance(tape, cfg, 1)
                } else {
                    Step::Go
                }
            }
            Action::MoveLeft => self.advance(tape, cfg, -1),
            Action::MoveRight => self.advance(tape, cfg, 1),
            Action::Accept => Step::Stop(Stop::Accept),
            Action::Reject => Step::Stop(Stop::Reject),
            Action::Nop => Step::Go,
        };
        (answer, step)
    }

    fn advance(&self, tape: &[Value], cfg: &mut Config, d: isize) -> Step {
        if d < 0 && cfg.pos == 0 {
            Step::Stop(Stop::ExitLeft(cfg.clone()))
        } else if d > 0 && cfg.pos + 1 >= tape.len() {
            cfg.pos = tape.len();
            Step::Stop(Stop::ExitRight(cfg.clone()))
        } else {
            cfg.pos = (cfg.pos as isize + d) as usize;
            Step::Go
        }
    }

    /// Runs from an arbitrary configuration on an arbitrary tape until the
    /// head leaves the tape, the machine halts, or a configuration repeats.
    pub fn simulate(
        &self,
        tape: &[Value],
        start: Config,
        mut observe: impl FnMut(TraceStep),
    ) -> (Stop, Vec<Value>) {
        let mut cfg = start;
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        if tape.is_empty() {
            return (Stop::ExitRight(cfg), out);
        }
        loop {
            if !seen.insert(cfg.clone()) {
                return (Stop::Loop, out);
            }
            let before = cfg.clone();
            let mut reads = Vec::new();
            let len = out.len();
            let (answer, step) = self.step(tape, &mut cfg, &mut out, &mut reads);
            observe(TraceStep {
                before,
                answer,
                reads,
                emitted: out.get(len).cloned(),
                after: cfg.clone(),
            });
            if let Step::Stop(s) = step {
                return (s, out);
            }
        }
    }

    fn finish(&self, stop: Stop, out: Vec<Value>) -> Outcome {
        match stop {
            Stop::Accept => Outcome::Accepted(out),
            Stop::ExitRight(_) if self.kind == Kind::Mealy => Outcome::Accepted(out),
            Stop::Loop => Outcome::Loop,
            _ => Outcome::Rejected,
        }
    }

    pub fn run(&self, w: &[Value]) -> Result<Outcome> {
        self.input_sort.check_word(w)?;
        let (stop, out) = self.simulate(&self.tape(w), self.initial_config(), |_| {});
        Ok(self.finish(stop, out))
    }

    pub fn run_traced(&self, w: &[Value]) -> Result<(Outcome, Vec<TraceStep>)> {
        self.input_sort.check_word(w)?;
        let mut trace = Vec::new();
        let (stop, out) = self.simulate(&self.tape(w), self.initial_config(), |s| trace.push(s));
        Ok((self.finish(stop, out), trace))
    }

    pub fn accepts(&self, w: &[Value]) -> Result<bool> {
        if !self.kind.is_automaton() {
            return Err(Error::KindMismatch(format!(
                "{:?} is not an automaton",
                self.kind
            )));
        }
        Ok(self.run(w)?.is_accepted())
    }

    /// Replays the run and reports the first step that reads a register whose
    /// current value has already been read.
    pub fn audit_single_use(&self, w: &[Value]) -> Result<std::result::Result<(), usize>> {
        let (_, trace) = self.run_traced(w)?;
        let mut consumed = vec![false; self.registers.len()];
        for (i, step) in trace.iter().enumerate() {
            for &r in &step.reads {
                if consumed[r] && step.before.regs[r].is_some() {
                    return Ok(Err(i));
                }
                consumed[r] = true;
            }
            if let Action::Store(r, _) = &self.branch_taken(step).action {
                consumed[*r] = false;
            }
        }
        Ok(Ok(()))
    }

    pub fn branch_taken(&self, step: &TraceStep) -> &Branch {
        let t = &self.delta[step.before.state];
        if step.answer {
            &t.yes
        } else {
            &t.no
        }
    }

    /// `|Q| · (2 + dim(input))^|R|`: a bound on consecutive steps in one place.
    pub fn stay_bound(&self) -> u128 {
        let dim = self.input_sort.dimension().unwrap_or(0) as u128;
        let base = 2 + dim;
        let mut k = self.states.len() as u128;
        for _ in 0..self.registers.len() {
            k = k.saturating_mul(base);
        }
        k
    }

    /// Longest stretch of consecutive steps spent at one position.
    pub fn max_stay(&self, w: &[Value]) -> Result<usize> {
        let (_, trace) = self.run_traced(w)?;
        let mut best = 0;
        let mut cur = 0;
        let mut pos = usize::MAX;
        for s in &trace {
            if s.before.pos == pos {
                cur += 1;
            } else {
                pos = s.before.pos;
                cur = 1;
            }
            best = best.max(cur);
        }
        Ok(best)
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let n = self.states.len();
        let nr = self.registers.len();
        if self.delta.len() != n {
            errs.push(format!("{} states but {} transitions", n, self.delta.len()));
        }
        if self.initial >= n {
            errs.push("initial state out of range".into());
        }
        let letters = self.letter_sort();
        let mut names = HashSet::new();
        for r in &self.registers {
            if !names.insert(r) {
                errs.push(format!("register {r} declared twice"));
            }
        }
        for (q, t) in self.delta.iter().enumerate() {
            let at = |msg: &str| format!("state {}: {msg}", self.states.get(q).map_or("?", |s| s));
            match &t.question {
                Question::Letter(f) => {
                    if f.domain() != &letters || f.codomain() != &Sort::bool() {
                        errs.push(at("letter predicate has wrong sorts"));
                    }
                }
                Question::RegEq(a, b) => {
                    if a == b {
                        errs.push(at("registers must be distinct"));
                    }
                    if *a >= nr || *b >= nr {
                        errs.push(at("unknown register"));
                    }
                }
            }
            for br in [&t.yes, &t.no] {
                if br.target >= n {
                    errs.push(at("target out of range"));
                }
                match &br.action {
                    Action::Store(r, f) => {
                        if *r >= nr {
                            errs.push(at("unknown register"));
                        }
                        if f.domain() != &letters || f.codomain() != &Sort::maybe_atom() {
                            errs.push(at("store function has wrong sorts"));
                        }
                    }
                    Action::Output(f, rs) | Action::OutputMove(f, rs) => {
                        let distinct: HashSet<_> = rs.iter().collect();
                        if distinct.len() != rs.len() {
                            errs.push(at("registers must be distinct"));
                        }
                        if rs.iter().any(|r| *r >= nr) {
                            errs.push(at("unknown register"));
                        }
                        if f.domain() != &Sort::atoms_tuple(rs.len())
                            || f.codomain() != &self.output_sort
                        {
                            errs.push(at("output function has wrong sorts"));
                        }
                        if self.kind.is_automaton() {
                            errs.push(at("automata have no output"));
                        }
                        let is_move = matches!(br.action, Action::OutputMove(..));
                        if is_move && self.kind != Kind::Mealy {
                            errs.push(at("output-and-move is for Mealy machines only"));
                        }
                        if !is_move && self.kind == Kind::Mealy {
                            errs.push(at("Mealy output must advance the head"));
                        }
                    }
                    Action::MoveLeft => {
                        if self.kind == Kind::Mealy {
                            errs.push(at("Mealy forbids previous"));
                        } else if self.kind.is_one_way() {
                            errs.push(at("one-way machines forbid previous"));
                        }
                    }
                    Action::MoveRight if self.kind == Kind::Mealy => {
                        errs.push(at("Mealy advances only by output"));
                    }
                    Action::Accept | Action::Reject if self.kind == Kind::Mealy => {
                        errs.push(at("Mealy has no accept or reject"));
                    }
                    _ => {}
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn run_graph(&self, w: &[Value]) -> Result<RunGraph> {
        let (outcome, trace) = self.run_traced(w)?;
        if !outcome.is_accepted() {
            return Err(Error::NotAccepting);
        }
        let columns = self.tape(w).len().max(1);
        Ok(RunGraph::from_trace(columns, &trace))
    }
}

pub fn lend() -> Value {
    Value::inr(Value::inl(Value::unit("lend")))
}

pub fn rend() -> Value {
    Value::inr(Value::inr(Value::unit("rend")))
}

/// A row is one visit: a maximal stretch of consecutive configurations at
/// one position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub emitted: Vec<Value>,
    pub next: Option<(i8, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunGraph {
    pub columns: Vec<Vec<Row>>,
}

impl RunGraph {
    fn from_trace(ncols: usize, trace: &[TraceStep]) -> RunGraph {
        let mut columns: Vec<Vec<Row>> = vec![Vec::new(); ncols];
        let mut last: Option<(usize, usize)> = None;
        for step in trace {
            let pos = step.before.pos;
            let (col, row) = match last {
                Some((c, r)) if c == pos => (c, r),
                prev => {
                    columns[pos].push(Row {
                        emitted: Vec::new(),
                        next: None,
                    });
                    let here = (pos, columns[pos].len() - 1);
                    if let Some((c, r)) = prev {
                        columns[c][r].next = Some(((pos as isize - c as isize) as i8, here.1));
                    }
                    here
                }
            };
            if let Some(v) = &step.emitted {
                columns[col][row].emitted.push(v.clone());
            }
            last = Some((col, row));
        }
        RunGraph { columns }
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Follows the edges from the unique row without predecessors and
    /// concatenates the emitted words.
    pub fn replay(&self) -> Option<Vec<Value>> {
        let mut indeg: HashMap<(usize, usize), usize> = HashMap::new();
        for (c, col) in self.columns.iter().enumerate() {
            for (r, row) in col.iter().enumerate() {
                indeg.entry((c, r)).or_insert(0);
                if let Some((d, t)) = row.next {
                    let target = ((c as isize + d as isize) as usize, t);
                    *indeg.entry(target).or_insert(0) += 1;
                }
            }
        }
        let starts: Vec<_> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let [mut at] = starts[..] else {
            return if indeg.is_empty() {
                Some(Vec::new())
            } else {
                None
            };
        };
        let mut out = Vec::new();
        let mut steps = 0;
        loop {
            let row = self.columns.get(at.0)?.get(at.1)?;
            out.extend(row.emitted.iter().cloned());
            steps += 1;
            if steps > indeg.len() {
                return None;
            }
            match row.next {
                None => return Some(out),
                Some((d, t)) => at = ((at.0 as isize + d as isize) as usize, t),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Construction helpers

/// Incremental construction of machines with named states and registers.
/// States are created on first mention; every state must eventually receive
/// exactly one transition.
#[derive(Debug, Clone)]
pub struct Builder {
    kind: Kind,
    input_sort: Sort,
    output_sort: Sort,
    states: Vec<String>,
    registers: Vec<String>,
    delta: BTreeMap<StateId, Transition>,
    single_use: bool,
    fresh: usize,
}

impl Builder {
    pub fn new(kind: Kind, input_sort: Sort, output_sort: Sort) -> Builder {
        Builder {
            kind,
            input_sort,
            output_sort,
            states: Vec::new(),
            registers: Vec::new(),
            delta: BTreeMap::new(),
            single_use: true,
            fresh: 0,
        }
    }

    pub fn multiple_use(mut self) -> Builder {
        self.single_use = false;
        self
    }

    pub fn letter_sort(&self) -> Sort {
        if self.kind == Kind::Mealy {
            self.input_sort.clone()
        } else {
            Sort::tape(&self.input_sort)
        }
    }

    pub fn output_sort(&self) -> &Sort {
        &self.output_sort
    }

    pub fn state(&mut self, name: &str) -> StateId {
        match self.states.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                self.states.push(name.to_string());
                self.states.len() - 1
            }
        }
    }

    pub fn fresh_state(&mut self, hint: &str) -> StateId {
        self.fresh += 1;
        let name = format!("{hint}~{}", self.fresh);
        self.state(&name)
    }

    pub fn reg(&mut self, name: &str) -> Reg {
        match self.registers.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                self.registers.push(name.to_string());
                self.registers.len() - 1
            }
        }
    }

    pub fn set(
        &mut self,
        q: StateId,
        question: Question,
        yes: (StateId, Action),
        no: (StateId, Action),
    ) {
        let t = Transition {
            question,
            yes: Branch {
                target: yes.0,
                action: yes.1,
            },
            no: Branch {
                target: no.0,
                action: no.1,
            },
        };
        let prev = self.delta.insert(q, t);
        assert!(
            prev.is_none(),
            "state {} given two transitions",
            self.states[q]
        );
    }

    /// Unconditional transition.
    pub fn go(&mut self, q: StateId, action: Action, target: StateId) {
        let always = self.always();
        self.set(q, always, (target, action.clone()), (target, action));
    }

    /// Performs the actions in order through fresh intermediate states.
    pub fn chain(&mut self, q: StateId, actions: Vec<Action>, target: StateId) {
        let mut cur = q;
        let n = actions.len();
        if n == 0 {
            self.go(q, Action::Nop, target);
            return;
        }
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

    /// Letter predicate from a host closure over orbit representatives.
    pub fn pred(&self, f: impl Fn(&Value) -> bool) -> Question {
        Question::Letter(
            PatternFn::from_fn(self.letter_sort(), Sort::bool(), |v| Value::bool(f(v)))
                .expect("predicates are atomless"),
        )
    }

    pub fn always(&self) -> Question {
        self.pred(|_| true)
    }

    /// Store the atom chosen by `pick` (or ⊥).
    pub fn store(&self, r: Reg, pick: impl Fn(&Value) -> Option<Atom>) -> Action {
        let f = PatternFn::from_fn(self.letter_sort(), Sort::maybe_atom(), |v| {
            Value::maybe_atom(pick(v))
        })
        .expect("stored atoms come from the letter");
        Action::Store(r, f)
    }

    fn out_fn(&self, k: usize, f: impl Fn(&[Atom]) -> Value) -> PatternFn {
        PatternFn::from_fn(Sort::atoms_tuple(k), self.output_sort.clone(), |t| {
            f(&t.atoms())
        })
        .expect("outputs use register atoms only")
    }

    pub fn output(&self, regs: Vec<Reg>, f: impl Fn(&[Atom]) -> Value) -> Action {
        Action::Output(self.out_fn(regs.len(), f), regs)
    }

    pub fn output_move(&self, regs: Vec<Reg>, f: impl Fn(&[Atom]) -> Value) -> Action {
        Action::OutputMove(self.out_fn(regs.len(), f), regs)
    }

    pub fn build(self, initial: &str) -> Result<Machine> {
        let initial = self
            .states
            .iter()
            .position(|s| s == initial)
            .ok_or_else(|| Error::Invalid(format!("unknown initial state {initial}")))?;
        let mut delta = Vec::with_capacity(self.states.len());
        let mut delta_map = self.delta;
        for (q, name) in self.states.iter().enumerate() {
            delta.push(
                delta_map
                    .remove(&q)
                    .ok_or_else(|| Error::Invalid(format!("state {name} has no transition")))?,
            );
        }
        let m = Machine {
            kind: self.kind,
            input_sort: self.input_sort,
            output_sort: self.output_sort,
            states: self.states,
            initial,
            registers: self.registers,
            delta,
            single_use: self.single_use,
        };
        m.validate().map_err(|e| Error::Invalid(e.join("; ")))?;
        Ok(m)
    }
}

/// For letters of a tape sort, the input letter inside, if any.
pub fn inner_letter(v: &Value) -> Option<&Value> {
    match v {
        Value::Inj(crate::atoms::Side::L, x) => Some(x),
        _ => None,
    }
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
#[serde(rename_all = "snake_case")]
enum ActionRepr {
    Store {
        reg: String,
        #[serde(rename = "fn")]
        f: PatternRepr,
    },
    Output {
        #[serde(rename = "fn")]
        f: PatternRepr,
        regs: Vec<String>,
    },
    OutputMove {
        #[serde(rename = "fn")]
        f: PatternRepr,
        regs: Vec<String>,
    },
    MoveLeft,
    MoveRight,
    Accept,
    Reject,
    Nop,
}

#[derive(Serialize, Deserialize)]
struct BranchRepr {
    state: String,
    action: ActionRepr,
}

#[derive(Serialize, Deserialize)]
struct TransitionRepr {
    question: QuestionRepr,
    yes: BranchRepr,
    no: BranchRepr,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct MachineRepr {
    kind: Kind,
    input_sort: Sort,
    output_sort: Sort,
    states: Vec<String>,
    initial: String,
    registers: Vec<String>,
    #[serde(default = "yes")]
    single_use: bool,
    transitions: BTreeMap<String, TransitionRepr>,
}

fn yes() -> bool {
    true
}

impl Machine {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_repr()).expect("machine serializes")
    }

    pub fn from_json(v: serde_json::Value) -> Result<Machine> {
        let repr: MachineRepr = serde_json::from_value(v)?;
        let m = Machine::from_repr(repr)?;
        m.validate().map_err(|e| Error::Invalid(e.join("; ")))?;
        Ok(m)
    }

    /// Parses without validation so that ill-formed machines can be reported.
    pub fn from_json_unchecked(v: serde_json::Value) -> Result<Machine> {
        Machine::from_repr(serde_json::from_value(v)?)
    }

    pub(crate) fn to_repr(&self) -> MachineRepr {
        let reg = |r: &Reg| self.registers[*r].clone();
        let action = |a: &Action| match a {
            Action::Store(r, f) => ActionRepr::Store {
                reg: reg(r),
                f: f.to_repr(),
            },
            Action::Output(f, rs) => ActionRepr::Output {
                f: f.to_repr(),
                regs: rs.iter().map(reg).collect(),
            },
            Action::OutputMove(f, rs) => ActionRepr::OutputMove {
                f: f.to_repr(),
                regs: rs.iter().map(reg).collect(),
            },
            Action::MoveLeft => ActionRepr::MoveLeft,
            Action::MoveRight => ActionRepr::MoveRight,
            Action::Accept => ActionRepr::Accept,
            Action::Reject => ActionRepr::Reject,
            Action::Nop => ActionRepr::Nop,
        };
        let branch = |b: &Branch| BranchRepr {
            state: self.states[b.target].clone(),
            action: action(&b.action),
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
                (
                    self.states[q].clone(),
                    TransitionRepr {
                        question,
                        yes: branch(&t.yes),
                        no: branch(&t.no),
                    },
                )
            })
            .collect();
        MachineRepr {
            kind: self.kind,
            input_sort: self.input_sort.clone(),
            output_sort: self.output_sort.clone(),
            states: self.states.clone(),
            initial: self.states[self.initial].clone(),
            registers: self.registers.clone(),
            single_use: self.single_use,
            transitions,
        }
    }

    pub(crate) fn from_repr(repr: MachineRepr) -> Result<Machine> {
        let states = repr.states;
        let registers = repr.registers;
        let sid = |s: &str| {
            states
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::Invalid(format!("unknown state {s}")))
        };
        let rid = |s: &str| {
            registers
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::Invalid(format!("unknown register {s}")))
        };
        let letters = if repr.kind == Kind::Mealy {
            repr.input_sort.clone()
        } else {
            Sort::tape(&repr.input_sort)
        };
        let output_sort = repr.output_sort.clone();
        let action = |a: ActionRepr| -> Result<Action> {
            Ok(match a {
                ActionRepr::Store { reg, f } => Action::Store(
                    rid(&reg)?,
                    PatternFn::from_repr(&letters, &Sort::maybe_atom(), f)?,
                ),
                ActionRepr::Output { f, regs } => {
                    let rs = regs.iter().map(|r| rid(r)).collect::<Result<Vec<_>>>()?;
                    Action::Output(
                        PatternFn::from_repr(&Sort::atoms_tuple(rs.len()), &output_sort, f)?,
                        rs,
                    )
                }
                ActionRepr::OutputMove { f, regs } => {
                    let rs = regs.iter().map(|r| rid(r)).collect::<Result<Vec<_>>>()?;
                    Action::OutputMove(
                        PatternFn::from_repr(&Sort::atoms_tuple(rs.len()), &output_sort, f)?,
                        rs,
                    )
                }
                ActionRepr::MoveLeft => Action::MoveLeft,
                ActionRepr::MoveRight => Action::MoveRight,
                ActionRepr::Accept => Action::Accept,
                ActionRepr::Reject => Action::Reject,
                ActionRepr::Nop => Action::Nop,
            })
        };
        let mut delta: Vec<Option<Transition>> = vec![None; states.len()];
        for (name, t) in repr.transitions {
            let q = sid(&name)?;
            let question = match t.question {
                QuestionRepr::Letter(f) => {
                    Question::Letter(PatternFn::from_repr(&letters, &Sort::bool(), f)?)
                }
                QuestionRepr::Regeq(a, b) => Question::RegEq(rid(&a)?, rid(&b)?),
            };
            delta[q] = Some(Transition {
                question,
                yes: Branch {
                    target: sid(&t.yes.state)?,
                    action: action(t.yes.action)?,
                },
                no: Branch {
                    target: sid(&t.no.state)?,
                    action: action(t.no.action)?,
                },
            });
        }
        let delta = delta
            .into_iter()
            .enumerate()
            .map(|(q, t)| {
                t.ok_or_else(|| Error::Invalid(format!("state {} has no transition", states[q])))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Machine {
            kind: repr.kind,
            input_sort: repr.input_sort,
            output_sort: repr.output_sort,
            initial: sid(&repr.initial)?,
            states,
            registers,
            delta,
            single_use: repr.single_use,
        })
    }
}
