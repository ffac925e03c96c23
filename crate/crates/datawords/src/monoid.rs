//! Shepherdson profiles: what a machine does on a fixed infix, for every
//! entry state, entry side and register valuation.
//!
//! A profile is kept symbolically. For each entry state and side there is a
//! decision tree whose tests ask about the entry valuation (is register `i`
//! defined, does it hold the word atom `a`, do registers `i` and `j` hold
//! the same atom) and whose leaves are the results, with exit valuations
//! written in terms of word atoms and entry values. The finite table over
//! canonical valuations is obtained by evaluating the trees.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::atoms::{word_atoms, Atom, Perm, Side, Value};
use crate::error::{Error, Result};
use crate::machines::{Action, Kind, Machine, Question, StateId};

/// A register value seen from inside the infix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sym {
    Bot,
    Word(Atom),
    /// The value register `i` had on entry.
    Entry(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cond {
    Defined(u16),
    EqAtom(u16, Atom),
    EqEntry(u16, u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tree {
    Test(Cond, Box<Tree>, Box<Tree>),
    Accept,
    /// Looping or rejecting.
    Loop,
    Exit {
        state: StateId,
        regs: Vec<Sym>,
        side: Side,
    },
}

/// Result of a profile on one concrete entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Accept,
    Loop,
    Exit {
        state: StateId,
        regs: Vec<Option<Atom>>,
        side: Side,
    },
}

#[derive(Debug, Clone)]
pub struct Profile {
    machine: Arc<Machine>,
    /// Atoms of the infix in order of first occurrence.
    pub atoms: Vec<Atom>,
    pub length: usize,
    /// Indexed by state, then entry side (left, right).
    trees: Vec<[Tree; 2]>,
}

fn side_ix(s: Side) -> usize {
    match s {
        Side::L => 0,
        Side::R => 1,
    }
}

// ---------------------------------------------------------------------------
// Knowledge about the entry valuation along one branch

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Entry(u16),
    Atom(Atom),
}

/// Association list; contexts are small and cloned at every branch.
#[derive(Debug, Clone)]
struct SmallMap<K, V>(Vec<(K, V)>);

impl<K, V> Default for SmallMap<K, V> {
    fn default() -> Self {
        SmallMap(Vec::new())
    }
}

impl<K: PartialEq, V> SmallMap<K, V> {
    fn get(&self, k: &K) -> Option<&V> {
        self.0.iter().find(|(x, _)| x == k).map(|(_, v)| v)
    }

    fn insert(&mut self, k: K, v: V) {
        match self.0.iter_mut().find(|(x, _)| *x == k) {
            Some(slot) => slot.1 = v,
            None => self.0.push((k, v)),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Ctx {
    parent: SmallMap<Node, Node>,
    /// Entries known to be undefined (`true`) or defined (`false`).
    bot: SmallMap<u16, bool>,
    neq: Vec<(Node, Node)>,
}

enum Answer {
    Known(bool),
    Open,
}

impl Ctx {
    fn find(&self, mut n: Node) -> Node {
        while let Some(&p) = self.parent.get(&n) {
            n = p;
        }
        n
    }

    /// The word atom in the class of `n`, if any; roots of classes with an
    /// atom are atoms.
    fn atom_of(&self, n: Node) -> Option<Atom> {
        match self.find(n) {
            Node::Atom(a) => Some(a),
            Node::Entry(_) => None,
        }
    }

    fn union(&mut self, a: Node, b: Node) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match (ra, rb) {
            (Node::Entry(_), _) => self.parent.insert(ra, rb),
            _ => self.parent.insert(rb, ra),
        }
    }

    fn ask(&self, c: Cond) -> Answer {
        match c {
            Cond::Defined(i) => match self.bot.get(&i) {
                Some(b) => Answer::Known(!b),
                None => Answer::Open,
            },
            Cond::EqAtom(i, a) => self.ask_eq(Node::Entry(i), Node::Atom(a)),
            Cond::EqEntry(i, j) => self.ask_eq(Node::Entry(i), Node::Entry(j)),
        }
    }

    fn ask_eq(&self, x: Node, y: Node) -> Answer {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return Answer::Known(true);
        }
        if let (Some(a), Some(b)) = (self.atom_of(rx), self.atom_of(ry)) {
            return Answer::Known(a == b);
        }
        if self.neq.iter().any(|&(p, q)| {
            let (rp, rq) = (self.find(p), self.find(q));
            (rp == rx && rq == ry) || (rp == ry && rq == rx)
        }) {
            return Answer::Known(false);
        }
        Answer::Open
    }

    fn assume(&mut self, c: Cond, yes: bool) {
        match c {
            Cond::Defined(i) => {
                self.bot.insert(i, !yes);
            }
            Cond::EqAtom(i, a) => self.assume_eq(Node::Entry(i), Node::Atom(a), yes),
            Cond::EqEntry(i, j) => self.assume_eq(Node::Entry(i), Node::Entry(j), yes),
        }
    }

    fn assume_eq(&mut self, x: Node, y: Node, yes: bool) {
        if yes {
            self.union(x, y)
        } else {
            self.neq.push((x, y))
        }
    }
}

/// Resolves a condition against the context, branching when it is open.
fn decide(ctx: &Ctx, c: Cond, mut k: impl FnMut(Ctx, bool) -> Tree) -> Tree {
    match ctx.ask(c) {
        Answer::Known(b) => k(ctx.clone(), b),
        Answer::Open => {
            let mut y = ctx.clone();
            y.assume(c, true);
            let mut n = ctx.clone();
            n.assume(c, false);
            let yes = k(y, true);
            let no = k(n, false);
            if yes == no {
                yes
            } else {
                Tree::Test(c, Box::new(yes), Box::new(no))
            }
        }
    }
}

/// Equality of two symbolic atoms, both known to be defined.
fn sym_eq(ctx: &Ctx, a: Sym, b: Sym, k: impl FnMut(Ctx, bool) -> Tree) -> Tree {
    let mut k = k;
    match (a, b) {
        (Sym::Word(x), Sym::Word(y)) => k(ctx.clone(), x == y),
        (Sym::Entry(i), Sym::Word(x)) | (Sym::Word(x), Sym::Entry(i)) => {
            decide(ctx, Cond::EqAtom(i, x), k)
        }
        (Sym::Entry(i), Sym::Entry(j)) if i == j => k(ctx.clone(), true),
        (Sym::Entry(i), Sym::Entry(j)) => decide(ctx, Cond::EqEntry(i.min(j), i.max(j)), k),
        _ => unreachable!("undefined registers are handled by the caller"),
    }
}

/// Continues with `k` if every symbol is defined, otherwise loops.
fn all_defined(ctx: &Ctx, syms: &[Sym], mut k: impl FnMut(Ctx) -> Tree) -> Tree {
    all_defined_dyn(ctx, syms, &mut k)
}

fn all_defined_dyn(ctx: &Ctx, syms: &[Sym], k: &mut dyn FnMut(Ctx) -> Tree) -> Tree {
    match syms.split_first() {
        None => k(ctx.clone()),
        Some((Sym::Bot, _)) => Tree::Loop,
        Some((Sym::Word(_), rest)) => all_defined_dyn(ctx, rest, k),
        Some((Sym::Entry(i), rest)) => decide(ctx, Cond::Defined(*i), |c, yes| {
            if yes {
                all_defined_dyn(&c, rest, k)
            } else {
                Tree::Loop
            }
        }),
    }
}

// ---------------------------------------------------------------------------
// Building profiles by simulation

struct Sim<'a> {
    m: &'a Machine,
    word: &'a [Value],
    /// Letter answers and stored atoms, per state and position.
    answers: RefCell<HashMap<(StateId, usize), bool>>,
    stores: RefCell<HashMap<(StateId, usize, bool), Option<Atom>>>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct SymConfig {
    pos: isize,
    state: StateId,
    regs: Vec<Sym>,
}

impl<'a> Sim<'a> {
    /// Simulates from `cfg`; `visited` holds the configurations of the
    /// current path and is restored before returning.
    fn run(&self, ctx: Ctx, cfg: SymConfig, visited: &mut HashSet<SymConfig>) -> Tree {
        let mut added = Vec::new();
        let t = self.run_path(ctx, cfg, visited, &mut added);
        for c in &added {
            visited.remove(c);
        }
        t
    }

    fn run_path(
        &self,
        ctx: Ctx,
        cfg: SymConfig,
        visited: &mut HashSet<SymConfig>,
        added: &mut Vec<SymConfig>,
    ) -> Tree {
        let mut cfg = cfg;
        loop {
            let n = self.word.len() as isize;
            if cfg.pos < 0 {
                return Tree::Exit {
                    state: cfg.state,
                    regs: cfg.regs,
                    side: Side::L,
                };
            }
            if cfg.pos >= n {
                return Tree::Exit {
                    state: cfg.state,
                    regs: cfg.regs,
                    side: Side::R,
                };
            }
            if !visited.insert(cfg.clone()) {
                return Tree::Loop;
            }
            added.push(cfg.clone());
            let t = &self.m.delta[cfg.state];
            let letter = &self.word[cfg.pos as usize];
            match &t.question {
                Question::Letter(f) => {
                    let key = (cfg.state, cfg.pos as usize);
                    let cached = self.answers.borrow().get(&key).copied();
                    let yes = cached.unwrap_or_else(|| {
                        let yes = f
                            .apply(letter)
                            .ok()
                            .and_then(|v| v.as_bool())
                            .unwrap_or(false);
                        self.answers.borrow_mut().insert(key, yes);
                        yes
                    });
                    if let Some(leaf) = self.act(&ctx, &mut cfg, yes, visited) {
                        return leaf;
                    }
                }
                Question::RegEq(a, b) => {
                    let (x, y) = (cfg.regs[*a], cfg.regs[*b]);
                    if self.m.single_use {
                        cfg.regs[*a] = Sym::Bot;
                        cfg.regs[*b] = Sym::Bot;
                    }
                    return all_defined(&ctx, &[x, y], |c| {
                        sym_eq(&c, x, y, |c, yes| {
                            let mut cfg = cfg.clone();
                            match self.act(&c, &mut cfg, yes, visited) {
                                Some(leaf) => leaf,
                                None => self.run(c, cfg, visited),
                            }
                        })
                    });
                }
            }
        }
    }

    /// Performs the branch action; returns a leaf if the run ends here.
    fn act(
        &self,
        ctx: &Ctx,
        cfg: &mut SymConfig,
        yes: bool,
        visited: &mut HashSet<SymConfig>,
    ) -> Option<Tree> {
        let t_state = cfg.state;
        let t = &self.m.delta[cfg.state];
        let br = if yes { &t.yes } else { &t.no };
        let letter = &self.word[cfg.pos as usize];
        cfg.state = br.target;
        match &br.action {
            Action::Store(r, f) => {
                let key = (t_state, cfg.pos as usize, yes);
                let cached = self.stores.borrow().get(&key).copied();
                let atom = cached.unwrap_or_else(|| {
                    let a = f.apply(letter).ok().and_then(|v| v.as_maybe_atom());
                    self.stores.borrow_mut().insert(key, a);
                    a
                });
                cfg.regs[*r] = match atom {
                    Some(a) => Sym::Word(a),
                    None => Sym::Bot,
                }
            }
            Action::Output(_, rs) | Action::OutputMove(_, rs) => {
                let syms: Vec<Sym> = rs.iter().map(|r| cfg.regs[*r]).collect();
                if self.m.single_use {
                    for r in rs {
                        cfg.regs[*r] = Sym::Bot;
                    }
                }
                if matches!(br.action, Action::OutputMove(..)) {
                    cfg.pos += 1;
                }
                if syms.iter().any(|s| matches!(s, Sym::Entry(_))) {
                    let cfg = cfg.clone();
                    return Some(all_defined(ctx, &syms, |c| {
                        self.run(c, cfg.clone(), visited)
                    }));
                } else if syms.contains(&Sym::Bot) {
                    return Some(Tree::Loop);
                }
            }
            Action::MoveLeft => cfg.pos -= 1,
            Action::MoveRight => cfg.pos += 1,
            Action::Accept => return Some(Tree::Accept),
            Action::Reject => return Some(Tree::Loop),
            Action::Nop => {}
        }
        None
    }
}

impl Profile {
    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn registers(&self) -> usize {
        self.machine.registers.len()
    }

    pub fn tree(&self, state: StateId, side: Side) -> &Tree {
        &self.trees[state][side_ix(side)]
    }

    /// The profile of the empty infix: every entry passes straight through.
    pub fn identity(m: &Arc<Machine>) -> Profile {
        let k = m.registers.len() as u16;
        let regs: Vec<Sym> = (0..k).map(Sym::Entry).collect();
        let trees = (0..m.states.len())
            .map(|q| {
                [
                    Tree::Exit {
                        state: q,
                        regs: regs.clone(),
                        side: Side::R,
                    },
                    Tree::Exit {
                        state: q,
                        regs: regs.clone(),
                        side: Side::L,
                    },
                ]
            })
            .collect();
        Profile {
            machine: m.clone(),
            atoms: vec![],
            length: 0,
            trees,
        }
    }

    /// The profile of an infix given as letters of the head alphabet, which
    /// may include endmarkers.
    pub fn of(m: &Arc<Machine>, w: &[Value]) -> Result<Profile> {
        m.letter_sort().check_word(w)?;
        if w.is_empty() {
            return Ok(Profile::identity(m));
        }
        let k = m.registers.len() as u16;
        let sim = Sim {
            m,
            word: w,
            answers: Default::default(),
            stores: Default::default(),
        };
        let trees = (0..m.states.len())
            .map(|q| {
                [Side::L, Side::R].map(|side| {
                    let pos = if side == Side::L {
                        0
                    } else {
                        w.len() as isize - 1
                    };
                    let cfg = SymConfig {
                        pos,
                        state: q,
                        regs: (0..k).map(Sym::Entry).collect(),
                    };
                    sim.run(Ctx::default(), cfg, &mut HashSet::new())
                })
            })
            .collect();
        Ok(Profile {
            machine: m.clone(),
            atoms: word_atoms(w),
            length: w.len(),
            trees,
        })
    }

    /// The profile of an input word, without endmarkers.
    pub fn of_input(m: &Arc<Machine>, w: &[Value]) -> Result<Profile> {
        m.input_sort.check_word(w)?;
        if m.kind == Kind::Mealy {
            return Profile::of(m, w);
        }
        let letters: Vec<Value> = w.iter().cloned().map(Value::inl).collect();
        Profile::of(m, &letters)
    }

    /// Result on one concrete entry.
    pub fn lookup(&self, state: StateId, regs: &[Option<Atom>], side: Side) -> Outcome {
        let mut t = self.tree(state, side);
        loop {
            match t {
                Tree::Test(c, y, n) => {
                    let holds = match *c {
                        Cond::Defined(i) => regs[i as usize].is_some(),
                        Cond::EqAtom(i, a) => regs[i as usize] == Some(a),
                        Cond::EqEntry(i, j) => {
                            regs[i as usize].is_some() && regs[i as usize] == regs[j as usize]
                        }
                    };
                    t = if holds { y } else { n };
                }
                Tree::Accept => return Outcome::Accept,
                Tree::Loop => return Outcome::Loop,
                Tree::Exit {
                    state,
                    regs: out,
                    side,
                } => {
                    let regs = out
                        .iter()
                        .map(|s| match s {
                            Sym::Bot => None,
                            Sym::Word(a) => Some(*a),
                            Sym::Entry(i) => regs[*i as usize],
                        })
                        .collect();
                    return Outcome::Exit {
                        state: *state,
                        regs,
                        side: *side,
                    };
                }
            }
        }
    }

    fn same_machine(&self, other: &Profile) -> bool {
        Arc::ptr_eq(&self.machine, &other.machine) || self.machine == other.machine
    }

    /// The profile of the concatenation of the two infixes.
    pub fn compose(&self, other: &Profile) -> Result<Profile> {
        if !self.same_machine(other) {
            return Err(Error::MachineMismatch);
        }
        if self.length == 0 {
            return Ok(other.clone());
        }
        if other.length == 0 {
            return Ok(self.clone());
        }
        let k = self.registers() as u16;
        let parts = [self, other];
        let trees = (0..self.machine.states.len())
            .map(|q| {
                [Side::L, Side::R].map(|side| {
                    let part = if side == Side::L { 0 } else { 1 };
                    let cross = Crossing {
                        part,
                        side,
                        state: q,
                        regs: (0..k).map(Sym::Entry).collect(),
                    };
                    boundary(&parts, Ctx::default(), cross, &mut HashSet::new())
                })
            })
            .collect();
        let mut atoms = self.atoms.clone();
        for a in &other.atoms {
            if !atoms.contains(a) {
                atoms.push(*a);
            }
        }
        Ok(Profile {
            machine: self.machine.clone(),
            atoms,
            length: self.length + other.length,
            trees,
        })
    }

    /// Semantic equality: the same result on every entry.
    pub fn same_as(&self, other: &Profile) -> bool {
        self.same_machine(other)
            && self
                .trees
                .iter()
                .zip(&other.trees)
                .all(|(a, b)| (0..2).all(|s| trees_equal(&Ctx::default(), &a[s], &b[s])))
    }

    /// The profile transported along an atom permutation.
    pub fn permute(&self, p: &Perm) -> Profile {
        let f = |a: Atom| p.apply_atom(a);
        let trees = self
            .trees
            .iter()
            .map(|ts| [rename(&ts[0], &f), rename(&ts[1], &f)])
            .collect();
        Profile {
            machine: self.machine.clone(),
            atoms: self.atoms.iter().map(|a| f(*a)).collect(),
            length: self.length,
            trees,
        }
    }

    /// The least support: the infix atoms moved by some swap with a fresh
    /// atom.
    pub fn minimal_support(&self) -> Vec<Atom> {
        let fresh = Atom(self.atoms.iter().map(|a| a.0).max().map_or(0, |m| m + 1));
        self.atoms
            .iter()
            .copied()
            .filter(|&a| !self.permute(&Perm::transposition(a, fresh)).same_as(self))
            .collect()
    }

    /// Canonical entry valuations: each register is ⊥, an infix atom, or a
    /// fresh atom, fresh atoms numbered in order of first use.
    pub fn canonical_valuations(&self, limit: usize) -> Result<Vec<Vec<Option<Atom>>>> {
        let k = self.registers();
        let base = self.atoms.iter().map(|a| a.0).max().map_or(0, |m| m + 1);
        let mut out = vec![vec![]];
        for _ in 0..k {
            let mut next = Vec::new();
            for v in &out {
                let used = v.iter().flatten().filter(|a: &&Atom| a.0 >= base).count() as u32;
                let mut push = |x: Option<Atom>| {
                    let mut w: Vec<Option<Atom>> = v.clone();
                    w.push(x);
                    next.push(w);
                };
                push(None);
                for a in &self.atoms {
                    push(Some(*a));
                }
                for f in 0..=used {
                    push(Some(Atom(base + f)));
                }
                if next.len() > limit {
                    return Err(Error::Unsupported(format!(
                        "more than {limit} canonical valuations"
                    )));
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// The finite table over canonical valuations, as JSON.
    pub fn to_table(&self, limit: usize) -> Result<serde_json::Value> {
        let m = &self.machine;
        let vals = self.canonical_valuations(limit)?;
        if vals.len() * m.states.len() * 2 > limit {
            return Err(Error::Unsupported(format!(
                "table has more than {limit} rows"
            )));
        }
        let show = |regs: &[Option<Atom>]| -> Vec<String> {
            regs.iter()
                .map(|r| r.map_or("⊥".to_string(), |a| a.to_string()))
                .collect()
        };
        let mut rows = Vec::new();
        for q in 0..m.states.len() {
            for side in [Side::L, Side::R] {
                for v in &vals {
                    let result = match self.lookup(q, v, side) {
                        Outcome::Accept => serde_json::json!("accept"),
                        Outcome::Loop => serde_json::json!("loop"),
                        Outcome::Exit { state, regs, side } => serde_json::json!({
                            "exit": {"state": m.states[state], "valuation": show(&regs), "side": side}
                        }),
                    };
                    rows.push(serde_json::json!({
                        "state": m.states[q],
                        "side": side,
                        "valuation": show(v),
                        "result": result,
                    }));
                }
            }
        }
        Ok(serde_json::json!({
            "atoms": self.atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "registers": m.registers,
            "rows": rows,
        }))
    }
}

fn rename(t: &Tree, f: &impl Fn(Atom) -> Atom) -> Tree {
    let sym = |s: &Sym| match s {
        Sym::Word(a) => Sym::Word(f(*a)),
        other => *other,
    };
    match t {
        Tree::Test(c, y, n) => {
            let c = match *c {
                Cond::EqAtom(i, a) => Cond::EqAtom(i, f(a)),
                other => other,
            };
            Tree::Test(c, Box::new(rename(y, f)), Box::new(rename(n, f)))
        }
        Tree::Exit { state, regs, side } => Tree::Exit {
            state: *state,
            regs: regs.iter().map(sym).collect(),
            side: *side,
        },
        other => other.clone(),
    }
}

/// Whether two symbolic atoms are equal under every valuation allowed by
/// the context.
fn forced_equal(ctx: &Ctx, a: Sym, b: Sym) -> bool {
    match (a, b) {
        (Sym::Bot, Sym::Bot) => true,
        (Sym::Word(x), Sym::Word(y)) => x == y,
        (Sym::Entry(i), Sym::Bot) | (Sym::Bot, Sym::Entry(i)) => ctx.bot.get(&i) == Some(&true),
        (Sym::Entry(i), Sym::Word(x)) | (Sym::Word(x), Sym::Entry(i)) => {
            matches!(
                ctx.ask_eq(Node::Entry(i), Node::Atom(x)),
                Answer::Known(true)
            )
        }
        (Sym::Entry(i), Sym::Entry(j)) => {
            i == j
                || ctx.bot.get(&i) == Some(&true) && ctx.bot.get(&j) == Some(&true)
                || matches!(
                    ctx.ask_eq(Node::Entry(i), Node::Entry(j)),
                    Answer::Known(true)
                )
        }
        _ => false,
    }
}

fn trees_equal(ctx: &Ctx, a: &Tree, b: &Tree) -> bool {
    let split = |c: Cond, ya: &Tree, na: &Tree, other: &Tree, flip: bool| match ctx.ask(c) {
        Answer::Known(v) => {
            let t = if v { ya } else { na };
            if flip {
                trees_equal(ctx, other, t)
            } else {
                trees_equal(ctx, t, other)
            }
        }
        Answer::Open => [true, false].iter().all(|&v| {
            let mut c2 = ctx.clone();
            c2.assume(c, v);
            let t = if v { ya } else { na };
            if flip {
                trees_equal(&c2, other, t)
            } else {
                trees_equal(&c2, t, other)
            }
        }),
    };
    match (a, b) {
        (Tree::Test(c, y, n), _) => split(*c, y, n, b, false),
        (_, Tree::Test(c, y, n)) => split(*c, y, n, a, true),
        (Tree::Accept, Tree::Accept) | (Tree::Loop, Tree::Loop) => true,
        (
            Tree::Exit {
                state: s1,
                regs: r1,
                side: d1,
            },
            Tree::Exit {
                state: s2,
                regs: r2,
                side: d2,
            },
        ) => s1 == s2 && d1 == d2 && r1.iter().zip(r2).all(|(x, y)| forced_equal(ctx, *x, *y)),
        _ => false,
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Crossing {
    part: usize,
    side: Side,
    state: StateId,
    regs: Vec<Sym>,
}

/// Runs across the boundary between two infixes, consulting their trees
/// with register values substituted.
fn boundary(
    parts: &[&Profile; 2],
    ctx: Ctx,
    cross: Crossing,
    visited: &mut HashSet<Crossing>,
) -> Tree {
    if !visited.insert(cross.clone()) {
        return Tree::Loop;
    }
    let tree = parts[cross.part].tree(cross.state, cross.side);
    let t = walk(parts, &ctx, tree, &cross, visited);
    visited.remove(&cross);
    t
}

fn walk(
    parts: &[&Profile; 2],
    ctx: &Ctx,
    t: &Tree,
    cross: &Crossing,
    visited: &mut HashSet<Crossing>,
) -> Tree {
    let regs = &cross.regs;
    match t {
        Tree::Test(c, y, n) => {
            let mut go = |c2: Ctx, v: bool| walk(parts, &c2, if v { y } else { n }, cross, visited);
            match *c {
                Cond::Defined(i) => match regs[i as usize] {
                    Sym::Bot => go(ctx.clone(), false),
                    Sym::Word(_) => go(ctx.clone(), true),
                    Sym::Entry(j) => decide(ctx, Cond::Defined(j), go),
                },
                Cond::EqAtom(i, a) => match regs[i as usize] {
                    Sym::Bot => go(ctx.clone(), false),
                    s => sym_eq(ctx, s, Sym::Word(a), go),
                },
                Cond::EqEntry(i, j) => match (regs[i as usize], regs[j as usize]) {
                    (Sym::Bot, _) | (_, Sym::Bot) => go(ctx.clone(), false),
                    (x, y) => sym_eq(ctx, x, y, go),
                },
            }
        }
        Tree::Accept => Tree::Accept,
        Tree::Loop => Tree::Loop,
        Tree::Exit {
            state,
            regs: out,
            side,
        } => {
            let regs: Vec<Sym> = out
                .iter()
                .map(|s| match s {
                    Sym::Entry(i) => regs[*i as usize],
                    other => *other,
                })
                .collect();
            match (cross.part, side) {
                (0, Side::L) | (1, Side::R) => Tree::Exit {
                    state: *state,
                    regs,
                    side: *side,
                },
                (0, Side::R) => boundary(
                    parts,
                    ctx.clone(),
                    Crossing {
                        part: 1,
                        side: Side::L,
                        state: *state,
                        regs,
                    },
                    visited,
                ),
                _ => boundary(
                    parts,
                    ctx.clone(),
                    Crossing {
                        part: 0,
                        side: Side::R,
                        state: *state,
                        regs,
                    },
                    visited,
                ),
            }
        }
    }
}

pub fn profile_of(m: &Arc<Machine>, w: &[Value]) -> Result<Profile> {
    Profile::of(m, w)
}

pub fn compose_profiles(pu: &Profile, pv: &Profile) -> Result<Profile> {
    pu.compose(pv)
}

pub fn minimal_support(p: &Profile) -> Vec<Atom> {
    p.minimal_support()
}

/// Acceptance of an automaton through the profile of the whole tape.
pub fn accepts_via_profile(m: &Arc<Machine>, w: &[Value]) -> Result<bool> {
    if !m.kind.is_automaton() {
        return Err(Error::KindMismatch(format!(
            "{:?} is not an automaton",
            m.kind
        )));
    }
    m.input_sort.check_word(w)?;
    let p = Profile::of(m, &m.tape(w))?;
    let bot = vec![None; m.registers.len()];
    Ok(p.lookup(m.initial, &bot, Side::L) == Outcome::Accept)
}

/// The bound `2|Q|·2^(k+1)` on least supports of profiles of single-use
/// machines.
pub fn support_bound(m: &Machine) -> u128 {
    2 * m.states.len() as u128 * 2u128.pow(m.registers.len() as u32 + 1)
}

/// A bound on how often an accepting run of a single-use machine visits one
/// position: the configurations there use at most the support of the two
/// profiles around it, the registers on first arrival and the letter.
pub fn width_bound(m: &Machine) -> u128 {
    let k = m.registers.len() as u32;
    let dim = m.letter_sort().dimension().unwrap_or(0) as u128;
    let atoms = support_bound(m).saturating_mul(2) + k as u128 + dim;
    (atoms + 1)
        .saturating_pow(k)
        .saturating_mul(m.states.len() as u128)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::Sort;
    use crate::library;
    use crate::machines::{Config, Stop};
    use rand::{Rng, SeedableRng};

    fn concrete(
        m: &Machine,
        w: &[Value],
        q: StateId,
        regs: &[Option<Atom>],
        side: Side,
    ) -> Outcome {
        let pos = if side == Side::L { 0 } else { w.len() - 1 };
        let (stop, _) = m.simulate(
            w,
            Config {
                pos,
                state: q,
                regs: regs.to_vec(),
            },
            |_| {},
        );
        match stop {
            Stop::Accept => Outcome::Accept,
            Stop::Reject | Stop::Loop => Outcome::Loop,
            Stop::ExitLeft(c) => Outcome::Exit {
                state: c.state,
                regs: c.regs,
                side: Side::L,
            },
            Stop::ExitRight(c) => Outcome::Exit {
                state: c.state,
                regs: c.regs,
                side: Side::R,
            },
        }
    }

    fn random_letters(m: &Machine, rng: &mut impl Rng, len: usize) -> Vec<Value> {
        crate::atoms::sample_word(&m.input_sort, rng, len, 5)
            .into_iter()
            .map(Value::inl)
            .collect()
    }

    #[test]
    fn trees_agree_with_simulation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for m in [
            library::map_reverse_2w().unwrap(),
            library::first_letter_again().unwrap(),
            library::three_letters().unwrap(),
        ] {
            let m = Arc::new(m);
            for _ in 0..5 {
                let len = rng.gen_range(1..5);
                let w = random_letters(&m, &mut rng, len);
                let p = Profile::of(&m, &w).unwrap();
                let vals = p
                    .canonical_valuations(1 << 20)
                    .unwrap_or_else(|_| vec![vec![None; m.registers.len()]]);
                for q in (0..m.states.len()).step_by(7) {
                    for v in vals.iter().take(40) {
                        for side in [Side::L, Side::R] {
                            assert_eq!(p.lookup(q, v, side), concrete(&m, &w, q, v, side));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn composition_is_a_homomorphism() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = Arc::new(library::map_duplicate_2w().unwrap());
        for _ in 0..20 {
            let (a, b) = (rng.gen_range(0..4), rng.gen_range(0..4));
            let u = random_letters(&m, &mut rng, a);
            let v = random_letters(&m, &mut rng, b);
            let uv: Vec<Value> = u.iter().chain(&v).cloned().collect();
            let composed = Profile::of(&m, &u)
                .unwrap()
                .compose(&Profile::of(&m, &v).unwrap())
                .unwrap();
            assert!(composed.same_as(&Profile::of(&m, &uv).unwrap()));
        }
    }

    #[test]
    fn acceptance_through_profiles() {
        let m = Arc::new(library::three_letters().unwrap());
        let w = |xs: &[u32]| xs.iter().map(|&i| Value::atom(i)).collect::<Vec<_>>();
        assert!(accepts_via_profile(&m, &w(&[1, 2, 1, 3])).unwrap());
        assert!(!accepts_via_profile(&m, &w(&[1, 2, 3, 4])).unwrap());
        assert!(accepts_via_profile(&m, &[]).unwrap());
    }

    #[test]
    fn identity_and_associativity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let m = Arc::new(library::three_letters().unwrap());
        let e = Profile::identity(&m);
        for _ in 0..10 {
            let ps: Vec<Profile> = (0..3)
                .map(|_| {
                    let len = rng.gen_range(0..4);
                    Profile::of(&m, &random_letters(&m, &mut rng, len)).unwrap()
                })
                .collect();
            assert!(ps[0].compose(&e).unwrap().same_as(&ps[0]));
            assert!(e.compose(&ps[0]).unwrap().same_as(&ps[0]));
            let left = ps[0].compose(&ps[1]).unwrap().compose(&ps[2]).unwrap();
            let right = ps[0].compose(&ps[1].compose(&ps[2]).unwrap()).unwrap();
            assert!(left.same_as(&right));
        }
    }

    #[test]
    fn equivariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m = Arc::new(library::map_reverse_2w().unwrap());
        for _ in 0..10 {
            let w = random_letters(&m, &mut rng, 4);
            let p = crate::atoms::sample_perm(&word_atoms(&w), &mut rng);
            let moved = Profile::of(&m, &p.apply_word(&w)).unwrap();
            assert!(moved.same_as(&Profile::of(&m, &w).unwrap().permute(&p)));
        }
    }

    #[test]
    fn one_way_entry_right() {
        let m = Arc::new(library::identity_1w(&Sort::Atom).unwrap());
        let w = vec![Value::inl(Value::atom(1)), Value::inl(Value::atom(2))];
        let p = Profile::of(&m, &w).unwrap();
        for q in 0..m.states.len() {
            let v = vec![Some(Atom(7)); m.registers.len()];
            assert_eq!(p.lookup(q, &v, Side::R), concrete(&m, &w, q, &v, Side::R));
        }
        let three = Arc::new(library::three_letters().unwrap());
        let t = Profile::of(&three, &[Value::inl(Value::atom(1))]).unwrap();
        let bot = vec![None; three.registers.len()];
        assert!(matches!(
            t.lookup(three.initial, &bot, Side::L),
            Outcome::Exit { side: Side::R, .. }
        ));
    }

    #[test]
    fn single_use_support_is_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let m = Arc::new(library::three_letters().unwrap());
        for _ in 0..3 {
            let w = random_letters(&m, &mut rng, 12);
            let s = Profile::of(&m, &w).unwrap().minimal_support();
            assert!(s.len() as u128 <= support_bound(&m));
        }
    }

    #[test]
    fn support_grows_for_multiple_use() {
        let m = Arc::new(library::first_letter_again().unwrap());
        let sizes: Vec<usize> = (1..=5u32)
            .map(|d| {
                let w: Vec<Value> = (0..d).map(|i| Value::inl(Value::atom(i))).collect();
                Profile::of(&m, &w).unwrap().minimal_support().len()
            })
            .collect();
        assert!(sizes.windows(2).all(|x| x[0] < x[1]), "{sizes:?}");
    }
}
