use std::sync::Arc;

use datawords::atoms::{PatternFn, Side, Sort, Value};
use datawords::library;
use datawords::machines::{Action, Branch, Builder, Kind, Machine, Question, Transition};
use datawords::monoid::Profile;
use datawords::primes::{atom_prop_input, with_sep, PrimeFn};
use datawords::Error;

fn atoms(xs: &[u32]) -> Vec<Value> {
    xs.iter().map(|&i| Value::atom(i)).collect()
}

#[test]
fn validation_reports_violations() {
    let bad = library::bad_mealy();
    let errs = bad.validate().unwrap_err();
    assert!(
        errs.iter().any(|e| e.contains("Mealy forbids previous")),
        "{errs:?}"
    );

    let mut b = Builder::new(Kind::OneWay, Sort::Atom, Sort::atoms_tuple(2));
    let r = b.reg("r");
    let q = b.state("q");
    let out = b.output(vec![r, r], Value::tuple);
    b.go(q, out, q);
    let errs = b.build("q").unwrap_err().to_string();
    assert!(errs.contains("registers must be distinct"), "{errs}");

    assert!(PrimeFn::AtomPropagation
        .as_mealy()
        .unwrap()
        .validate()
        .is_ok());
}

#[test]
fn atom_propagation_table() {
    let m = PrimeFn::AtomPropagation.as_mealy().unwrap();
    let s = atom_prop_input();
    let w = s.parse_word("#1,#2,ε,ε,↓,↓,#3,ε,ε,↓,ε,↓").unwrap();
    let out = m.run(&w).unwrap();
    assert_eq!(
        Sort::maybe_atom().show_word(out.output().unwrap()),
        "bot,bot,bot,bot,#2,bot,bot,bot,bot,#3,bot,bot"
    );
    assert_eq!(m.run(&[]).unwrap().output(), Some(&[][..]));
}

#[test]
fn automata_accept_words() {
    let m = library::three_letters().unwrap();
    assert!(m.accepts(&atoms(&[1, 2, 1, 3])).unwrap());
    assert!(!m.accepts(&atoms(&[1, 2, 3, 4])).unwrap());
    assert!(m.accepts(&[]).unwrap());
    let first = library::first_letter_again().unwrap();
    assert!(first.accepts(&atoms(&[1, 2, 1])).unwrap());
    assert!(!first.accepts(&atoms(&[1, 2, 3])).unwrap());
    let mealy = PrimeFn::FlipFlop.as_mealy().unwrap();
    assert!(matches!(mealy.accepts(&[]), Err(Error::KindMismatch(_))));
}

#[test]
fn audit_finds_reused_registers() {
    let first = library::first_letter_again().unwrap();
    let w = atoms(&[1, 2, 1]);
    let (_, trace) = first.run_traced(&w).unwrap();
    let step = first.audit_single_use(&w).unwrap().unwrap_err();
    let comparisons: Vec<usize> = trace
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(first.delta[s.before.state].question, Question::RegEq(..)))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(step, comparisons[1]);

    let ap = PrimeFn::AtomPropagation.as_mealy().unwrap();
    let w = atom_prop_input()
        .parse_word("#1,down,down,#2,eps,down")
        .unwrap();
    assert_eq!(ap.audit_single_use(&w).unwrap(), Ok(()));
    let id = library::identity_1w(&Sort::finite(&["a", "b"])).unwrap();
    assert_eq!(
        id.audit_single_use(&Sort::finite(&["a", "b"]).parse_word("a,b,a").unwrap())
            .unwrap(),
        Ok(())
    );
}

#[test]
fn run_graphs() {
    let id = library::identity_1w(&Sort::Atom).unwrap();
    let g = id.run_graph(&atoms(&[1, 2, 3, 4, 5])).unwrap();
    assert_eq!(g.width(), 1);
    assert_eq!(g.replay().unwrap(), atoms(&[1, 2, 3, 4, 5]));

    let mr = library::map_reverse_2w().unwrap();
    let w = with_sep(&Sort::Atom)
        .parse_word("#1,#2,|,|,#3,#4,#5,|,#6,#7,#8,|,#9")
        .unwrap();
    let g = mr.run_graph(&w).unwrap();
    assert!(g.width() <= 3);
    assert_eq!(g.replay().unwrap(), mr.run(&w).unwrap().output().unwrap());

    let three = library::three_letters().unwrap();
    assert_eq!(
        three.run_graph(&atoms(&[1, 2, 3, 4])),
        Err(Error::NotAccepting)
    );
}

#[test]
fn loops_are_detected() {
    let always =
        PatternFn::constant(Sort::tape(&Sort::Atom), Sort::bool(), Value::bool(true)).unwrap();
    let stay = Branch {
        target: 0,
        action: Action::Nop,
    };
    let m = Machine {
        kind: Kind::Automaton2W,
        input_sort: Sort::Atom,
        output_sort: Sort::Atom,
        states: vec!["q".into()],
        initial: 0,
        registers: vec![],
        delta: vec![Transition {
            question: Question::Letter(always),
            yes: stay.clone(),
            no: stay,
        }],
        single_use: true,
    };
    assert!(m.validate().is_ok());
    assert_eq!(
        m.run(&atoms(&[1])).unwrap(),
        datawords::machines::Outcome::Loop
    );
}

#[test]
fn profiles_of_atomless_behaviour_have_empty_support() {
    let m = Arc::new(library::identity_1w(&Sort::finite(&["a", "b"])).unwrap());
    let w: Vec<Value> = Sort::finite(&["a", "b"])
        .parse_word("a,b")
        .unwrap()
        .into_iter()
        .map(Value::inl)
        .collect();
    assert!(Profile::of(&m, &w).unwrap().minimal_support().is_empty());

    let walker = Arc::new(library::identity_1w(&Sort::Atom).unwrap());
    let w: Vec<Value> = atoms(&[4, 5]).into_iter().map(Value::inl).collect();
    let p = Profile::of(&walker, &w).unwrap();
    let bot = vec![None; walker.registers.len()];
    let e = Profile::identity(&walker);
    assert!(matches!(
        e.lookup(walker.initial, &bot, Side::L),
        datawords::monoid::Outcome::Exit { side: Side::R, .. }
    ));
    assert!(p.minimal_support().len() <= 2);
    let table = p.to_table(10_000).unwrap();
    assert_eq!(table["atoms"], serde_json::json!(["#4", "#5"]));
}
