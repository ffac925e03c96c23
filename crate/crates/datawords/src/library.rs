//! Hand-built machines used throughout the examples and tests.

use std::collections::{HashMap, VecDeque};

use crate::atoms::PatternFn;
use crate::atoms::{Atom, Side, Sort, Value};
use crate::error::Result;
use crate::machines::{
    inner_letter, lend, rend, Action, Branch, Builder, Kind, Machine, Question, Transition,
};
use crate::primes::{atom_prop_input, sep, with_sep, Group, Pipeline, PrimeFn};
use crate::{reglist, sst};

fn atom_of(v: &Value) -> Option<Atom> {
    match inner_letter(v)? {
        Value::Atom(a) => Some(*a),
        Value::Inj(Side::L, x) => match **x {
            Value::Atom(a) => Some(a),
            _ => None,
        },
        _ => None,
    }
}

fn is_sep(v: &Value) -> bool {
    matches!(inner_letter(v), Some(Value::Inj(Side::R, _)))
}

/// Copies of the letters seen so far, most recently seen first.
const COPIES: [usize; 3] = [3, 2, 1];
const BANK: usize = 6;

/// `layout[r]` is the recency rank of the letter held by register `r`.
type Layout = [Option<u8>; BANK];

fn layout_name(l: &Layout) -> String {
    l.iter()
        .map(|x| x.map_or('.', |r| (b'a' + r) as char))
        .collect()
}

fn fill(l: &mut Layout, rank: u8, n: usize) -> Vec<usize> {
    let empty: Vec<usize> = (0..BANK).filter(|&r| l[r].is_none()).take(n).collect();
    for &r in &empty {
        l[r] = Some(rank);
    }
    empty
}

/// The single-use automaton for "at most three distinct letters". The
/// three letters seen most recently are kept in 3, 2 and 1 copies. A new
/// letter is compared with one copy of each, most recent first; a match
/// reveals the letter, so the consumed copies of it are stored again from
/// the input, and the copy counts stay 3, 2, 1 in the new recency order.
pub fn three_letters() -> Result<Machine> {
    let mut b = Builder::new(Kind::Automaton1W, Sort::Atom, Sort::unit("nil"));
    let regs: Vec<_> = (0..BANK).map(|i| b.reg(&format!("r{i}"))).collect();
    let scratch = b.reg("d");
    let is_end = b.pred(|v| *v == rend());
    let is_start = b.pred(|v| *v == lend());
    let store = |b: &Builder, r| b.store(r, atom_of);
    let start: Layout = [None; BANK];
    let mut seen: HashMap<Layout, ()> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    seen.insert(start, ());
    while let Some(l) = queue.pop_front() {
        let q = b.state(&layout_name(&l));
        let not_end = b.fresh_state("letter");
        b.set(
            q,
            is_end.clone(),
            (q, Action::Accept),
            (not_end, Action::Nop),
        );
        let compare = b.fresh_state("compare");
        b.set(
            not_end,
            is_start.clone(),
            (q, Action::MoveRight),
            (compare, Action::Nop),
        );
        let k = l
            .iter()
            .flatten()
            .map(|&r| r as usize + 1)
            .max()
            .unwrap_or(0);
        let mut next_layout = |b: &mut Builder, target: Layout, refill: Vec<usize>, from: usize| {
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(target) {
                e.insert(());
                queue.push_back(target);
            }
            let t = b.state(&layout_name(&target));
            let mut acts: Vec<Action> = refill.into_iter().map(|r| store(b, regs[r])).collect();
            acts.push(Action::MoveRight);
            b.chain(from, acts, t);
        };
        let mut cur = compare;
        let mut consumed = l;
        for rank in 0..k as u8 {
            let r = (0..BANK)
                .find(|&r| l[r] == Some(rank))
                .expect("every rank has a copy");
            consumed[r] = None;
            let ask = b.fresh_state("ask");
            b.go(cur, store(&b, scratch), ask);
            let hit = b.fresh_state("hit");
            let miss = b.fresh_state("miss");
            b.set(
                ask,
                Question::RegEq(scratch, regs[r]),
                (hit, Action::Nop),
                (miss, Action::Nop),
            );
            let mut after = consumed;
            for x in after.iter_mut().flatten() {
                if *x < rank {
                    *x += 1;
                } else if *x == rank {
                    *x = 0;
                }
            }
            let have = after.iter().filter(|x| **x == Some(0)).count();
            let refill = fill(&mut after, 0, COPIES[0] - have);
            next_layout(&mut b, after, refill, hit);
            cur = miss;
        }
        if k == 3 {
            b.go(cur, Action::Reject, cur);
        } else {
            let mut after = consumed;
            for x in after.iter_mut().flatten() {
                *x += 1;
            }
            let refill = fill(&mut after, 0, COPIES[0]);
            next_layout(&mut b, after, refill, cur);
        }
    }
    b.build(&layout_name(&start))
}

/// The multiple-use one-way automaton for "the first letter appears
/// again": the first letter is kept in one register and compared with
/// every later letter.
pub fn first_letter_again() -> Result<Machine> {
    let mut b = Builder::new(Kind::Automaton1W, Sort::Atom, Sort::unit("nil")).multiple_use();
    let first = b.reg("first");
    let cur = b.reg("cur");
    let q0 = b.state("start");
    let store_first = b.state("first");
    let scan = b.state("scan");
    let compare = b.state("compare");
    let is_end = b.pred(|v| *v == rend());
    b.go(q0, Action::MoveRight, store_first);
    let move_on = b.fresh_state("first");
    let has_first = b.fresh_state("first");
    b.set(
        store_first,
        is_end.clone(),
        (store_first, Action::Reject),
        (has_first, Action::Nop),
    );
    b.go(has_first, b.store(first, atom_of), move_on);
    b.go(move_on, Action::MoveRight, scan);
    b.set(
        scan,
        is_end,
        (scan, Action::Reject),
        (compare, b.store(cur, atom_of)),
    );
    let next = b.fresh_state("scan");
    b.set(
        compare,
        Question::RegEq(first, cur),
        (compare, Action::Accept),
        (next, Action::Nop),
    );
    b.go(next, Action::MoveRight, scan);
    b.build("start")
}

/// Two-way single-use transducer for map reverse over `𝔸 + sep`: each
/// block is scanned to its end, output right to left, and skipped again.
pub fn map_reverse_2w() -> Result<Machine> {
    let s = with_sep(&Sort::Atom);
    let mut b = Builder::new(Kind::TwoWay, s.clone(), s);
    let r = b.reg("r");
    let start = b.state("start");
    let scan = b.state("scan");
    let back = b.state("back");
    let fwd = b.state("forward");
    let is_atom = b.pred(|v| atom_of(v).is_some());
    let is_sep = b.pred(is_sep);
    b.go(start, Action::MoveRight, scan);
    b.set(
        scan,
        is_atom.clone(),
        (scan, Action::MoveRight),
        (back, Action::MoveLeft),
    );
    let emit = b.fresh_state("emit");
    let emitted = b.fresh_state("emit");
    b.set(
        back,
        is_atom.clone(),
        (emit, b.store(r, atom_of)),
        (fwd, Action::MoveRight),
    );
    b.go(
        emit,
        b.output(vec![r], |a| Value::inl(Value::Atom(a[0]))),
        emitted,
    );
    b.go(emitted, Action::MoveLeft, back);
    let not_atom = b.fresh_state("forward");
    b.set(
        fwd,
        is_atom,
        (fwd, Action::MoveRight),
        (not_atom, Action::Nop),
    );
    let sep_out = b.fresh_state("forward");
    let done = b.fresh_state("forward");
    b.set(
        not_atom,
        is_sep,
        (sep_out, b.output(vec![], |_| sep())),
        (done, Action::Accept),
    );
    b.go(sep_out, Action::MoveRight, scan);
    b.go(done, Action::Accept, done);
    b.build("start")
}

/// Two-way single-use transducer for map duplicate over `𝔸 + sep`: each
/// block is output left to right, revisited, and output again.
pub fn map_duplicate_2w() -> Result<Machine> {
    let s = with_sep(&Sort::Atom);
    let mut b = Builder::new(Kind::TwoWay, s.clone(), s);
    let r = b.reg("r");
    let start = b.state("start");
    let first = b.state("first");
    let back = b.state("back");
    let second = b.state("second");
    let is_atom = b.pred(|v| atom_of(v).is_some());
    let is_sep = b.pred(is_sep);
    b.go(start, Action::MoveRight, first);
    let copy = |b: &mut Builder, from, to| {
        let emit = b.fresh_state("emit");
        let emitted = b.fresh_state("emit");
        b.go(from, b.store(r, atom_of), emit);
        b.go(
            emit,
            b.output(vec![r], |a| Value::inl(Value::Atom(a[0]))),
            emitted,
        );
        b.go(emitted, Action::MoveRight, to);
    };
    let first_atom = b.fresh_state("first");
    b.set(
        first,
        is_atom.clone(),
        (first_atom, Action::Nop),
        (back, Action::MoveLeft),
    );
    copy(&mut b, first_atom, first);
    b.set(
        back,
        is_atom.clone(),
        (back, Action::MoveLeft),
        (second, Action::MoveRight),
    );
    let second_atom = b.fresh_state("second");
    let not_atom = b.fresh_state("second");
    b.set(
        second,
        is_atom,
        (second_atom, Action::Nop),
        (not_atom, Action::Nop),
    );
    copy(&mut b, second_atom, second);
    let sep_out = b.fresh_state("second");
    let done = b.fresh_state("second");
    b.set(
        not_atom,
        is_sep,
        (sep_out, b.output(vec![], |_| sep())),
        (done, Action::Accept),
    );
    b.go(sep_out, Action::MoveRight, first);
    b.go(done, Action::Accept, done);
    b.build("start")
}

/// One-way single-use transducer copying its input over `σ`.
pub fn identity_1w(sigma: &Sort) -> Result<Machine> {
    let mut b = Builder::new(Kind::OneWay, sigma.clone(), sigma.clone());
    let k = sigma.dimension().unwrap_or(0);
    let regs: Vec<_> = (0..k).map(|i| b.reg(&format!("r{i}"))).collect();
    let scan = b.state("scan");
    let is_start = b.pred(|v| *v == lend());
    let is_end = b.pred(|v| *v == rend());
    let letter = b.fresh_state("letter");
    let inner = b.fresh_state("letter");
    b.set(
        scan,
        is_start,
        (scan, Action::MoveRight),
        (letter, Action::Nop),
    );
    let done = b.state("done");
    b.set(letter, is_end, (done, Action::Accept), (inner, Action::Nop));
    b.go(done, Action::Accept, done);
    let orbits = crate::atoms::enumerate_orbit_reps(sigma);
    let mut cur = inner;
    for (i, o) in orbits.iter().enumerate() {
        let body = b.fresh_state("copy");
        let labels = {
            let mut xs: Vec<u32> = o.atoms().into_iter().map(|a| a.0).collect();
            xs.sort();
            xs.dedup();
            xs
        };
        let mut acts: Vec<Action> = labels
            .iter()
            .enumerate()
            .map(|(j, &l)| {
                let o = o.clone();
                b.store(regs[j], move |v| {
                    let (rep, support) = crate::atoms::canonicalize(inner_letter(v)?);
                    (rep == o).then(|| support[l as usize])
                })
            })
            .collect();
        let template = o.clone();
        let ls = labels.clone();
        acts.push(b.output(regs[..labels.len()].to_vec(), move |atoms| {
            template.map_atoms(&mut |a| atoms[ls.iter().position(|l| *l == a.0).expect("label")])
        }));
        acts.push(Action::MoveRight);
        b.chain(body, acts, scan);
        if i + 1 == orbits.len() {
            b.go(cur, Action::Nop, body);
        } else {
            let o = o.clone();
            let test = b.pred(move |v| {
                inner_letter(v).map(|x| crate::atoms::canonicalize(x).0) == Some(o.clone())
            });
            let next = b.fresh_state("letter");
            b.set(cur, test, (body, Action::Nop), (next, Action::Nop));
            cur = next;
        }
    }
    b.build("scan")
}

/// A Mealy machine that moves left, rejected by validation.
pub fn bad_mealy() -> Machine {
    let always = crate::atoms::PatternFn::constant(Sort::Atom, Sort::bool(), Value::bool(true))
        .expect("atomless");
    let left = Branch {
        target: 0,
        action: Action::MoveLeft,
    };
    Machine {
        kind: Kind::Mealy,
        input_sort: Sort::Atom,
        output_sort: Sort::Atom,
        states: vec!["q".into()],
        initial: 0,
        registers: vec![],
        delta: vec![Transition {
            question: Question::Letter(always),
            yes: left.clone(),
            no: left,
        }],
        single_use: true,
    }
}

/// Letter-to-letter relabelling `A+⊥ → A+{ε,↓}`: atoms stay, `⊥` becomes `↓`.
pub fn relabel_bot() -> Result<PrimeFn> {
    let f = PatternFn::from_fn(Sort::maybe_atom(), atom_prop_input(), |v| match v {
        Value::Inj(Side::L, a) => Value::inl((**a).clone()),
        _ => Value::inr(Value::inr(Value::unit("down"))),
    })?;
    Ok(PrimeFn::LpHom(f))
}

/// Every bundled fixture, keyed by file name.
pub fn corpus() -> Result<Vec<(&'static str, serde_json::Value)>> {
    let a = Sort::Atom;
    let z2 = PrimeFn::GroupTransducer(Group::cyclic(2));
    let z3 = PrimeFn::GroupTransducer(Group::cyclic(3));
    Ok(vec![
        (
            "atomprop.json",
            PrimeFn::AtomPropagation.as_mealy()?.to_json(),
        ),
        (
            "atomprop.prime.json",
            Pipeline::prime(PrimeFn::AtomPropagation).to_json(),
        ),
        ("relabel.json", relabel_bot()?.as_mealy()?.to_json()),
        ("flipflop.json", PrimeFn::FlipFlop.as_mealy()?.to_json()),
        (
            "flipflop.prime.json",
            Pipeline::prime(PrimeFn::FlipFlop).to_json(),
        ),
        ("z2.json", z2.as_mealy()?.to_json()),
        ("z2.prime.json", Pipeline::prime(z2).to_json()),
        ("z3.json", z3.as_mealy()?.to_json()),
        ("z3.prime.json", Pipeline::prime(z3).to_json()),
        (
            "mapreverse.prime.json",
            Pipeline::prime(PrimeFn::MapReverse(a.clone())).to_json(),
        ),
        (
            "mapduplicate.prime.json",
            Pipeline::prime(PrimeFn::MapDuplicate(a.clone())).to_json(),
        ),
        ("mapreverse.rlf.json", reglist::map_reverse(&a).to_json()),
        (
            "mapduplicate.rlf.json",
            reglist::map_duplicate(&a).to_json(),
        ),
        ("mapreverse.sst.json", sst::map_reverse_sst()?.to_json()),
        ("mapduplicate.sst.json", sst::map_duplicate_sst()?.to_json()),
        ("reverse.sst.json", sst::reverse_sst(&a)?.to_json()),
        ("doubling.sst.json", sst::doubling_sst()?.to_json()),
        ("mapreverse.2w.json", map_reverse_2w()?.to_json()),
        ("mapduplicate.2w.json", map_duplicate_2w()?.to_json()),
        ("identity.1w.json", identity_1w(&with_sep(&a))?.to_json()),
        ("threeletters.json", three_letters()?.to_json()),
        (
            "threeletters.rlf.json",
            reglist::at_most_three_letters().to_json(),
        ),
        ("firstletter.json", first_letter_again()?.to_json()),
        ("bad_mealy.json", bad_mealy().to_json()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::restricted_growth_strings;

    fn atoms(xs: &[u32]) -> Vec<Value> {
        xs.iter().map(|&i| Value::atom(i)).collect()
    }

    #[test]
    fn three_letters_by_brute_force() {
        let m = three_letters().unwrap();
        assert_eq!(m.registers.len(), 7);
        for n in 0..=7 {
            for w in restricted_growth_strings(n) {
                let distinct = w.iter().max().map_or(0, |m| m + 1);
                assert_eq!(m.accepts(&atoms(&w)).unwrap(), distinct <= 3, "{w:?}");
            }
        }
        assert!(m.accepts(&atoms(&[1, 2, 1, 3])).unwrap());
        assert!(!m.accepts(&atoms(&[1, 2, 3, 4])).unwrap());
    }

    #[test]
    fn first_letter_again_uses_registers_twice() {
        let m = first_letter_again().unwrap();
        assert!(m.accepts(&atoms(&[1, 2, 1])).unwrap());
        assert!(!m.accepts(&atoms(&[1, 2, 3])).unwrap());
        assert!(m.audit_single_use(&atoms(&[1, 2, 1])).unwrap().is_err());
    }

    #[test]
    fn two_way_map_functions() {
        let s = with_sep(&Sort::Atom);
        let w = s.parse_word("#1,#2,|,|,#3,#4,#5,|,#6,#7,#8,|,#9").unwrap();
        let rev = map_reverse_2w().unwrap();
        let out = rev.run(&w).unwrap();
        assert_eq!(
            s.show_word(out.output().unwrap()),
            s.show_word(&s.parse_word("#2,#1,|,|,#5,#4,#3,|,#8,#7,#6,|,#9").unwrap())
        );
        assert!(rev.run_graph(&w).unwrap().width() <= 3);
        let dup = map_duplicate_2w().unwrap();
        let w = s.parse_word("#1,#2,|").unwrap();
        let g = dup.run_graph(&w).unwrap();
        assert_eq!(g.replay().unwrap(), s.parse_word("#1,#2,#1,#2,|").unwrap());
    }

    #[test]
    fn identity_copies() {
        let s = Sort::prod(Sort::Atom, Sort::Atom);
        let m = identity_1w(&s).unwrap();
        let w = s.parse_word("(#1,#2),(#3,#3)").unwrap();
        assert_eq!(m.run(&w).unwrap().output().unwrap(), w);
    }
}
