//! One line per acceptance criterion. Run with `cargo test --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use datawords::atoms::{sample_perm, sample_word, word_atoms, Atom, PatternFn, Perm, Sort, Value};
use datawords::equiv::{bounded_equiv, canonical_words, fuzz, Output, Runner};
use datawords::library::{self, corpus};
use datawords::machines::{Action, Machine, Question};
use datawords::monoid::{support_bound, width_bound, Profile};
use datawords::primes::{compose_mealy, with_sep, Group, Pipeline, PrimeFn};
use datawords::sst::{self, adjacency_letter_check, post_compose_prime, Sst};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LIMIT: Duration = Duration::from_secs(60);

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn fixtures() -> Vec<(&'static str, Runner)> {
    corpus()
        .unwrap()
        .into_iter()
        .filter(|(name, _)| *name != "bad_mealy.json")
        .map(|(name, json)| (name, Runner::from_json(json).unwrap()))
        .collect()
}

fn machine_fixtures() -> Vec<(&'static str, Machine)> {
    fixtures()
        .into_iter()
        .filter_map(|(name, r)| match r {
            Runner::Machine(m) => Some((name, m)),
            _ => None,
        })
        .collect()
}

fn cli(args: &[&str]) -> (String, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_datawords"))
        .args(args)
        .env("DATAWORDS_CORPUS", corpus_dir())
        .output()
        .expect("binary runs");
    (
        String::from_utf8(out.stdout).unwrap(),
        out.status.code().unwrap_or(-1),
    )
}

fn golden_examples() -> Check {
    let ap = "#1,#2,eps,eps,down,down,#3,eps,eps,down,eps,down";
    let mr = "#1,#2,|,|,#3,#4,#5,|,#6,#7,#8,|,#9";
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (
            vec!["run", "--machine", "atomprop.json", "--input", ap],
            r##"{"outcome":"accepted","output":"bot,bot,bot,bot,#2,bot,bot,bot,bot,#3,bot,bot"}"##,
        ),
        (
            vec![
                "eval-pipeline",
                "--pipeline",
                "atomprop.prime.json",
                "--input",
                ap,
            ],
            r##"{"output":"bot,bot,bot,bot,#2,bot,bot,bot,bot,#3,bot,bot"}"##,
        ),
        (
            vec![
                "run",
                "--machine",
                "z3.json",
                "--input",
                "1,2,0,0,2,1,0,1,1,2,2",
            ],
            r#"{"outcome":"accepted","output":"1,0,0,0,2,0,0,1,2,1,0"}"#,
        ),
        (
            vec![
                "run",
                "--machine",
                "flipflop.json",
                "--input",
                "1,1,b,1,1,b,1,1,a,b,b",
            ],
            r#"{"outcome":"accepted","output":"a,a,a,b,b,b,b,b,b,a,b"}"#,
        ),
        (
            vec![
                "eval-pipeline",
                "--pipeline",
                "mapreverse.prime.json",
                "--input",
                mr,
            ],
            r##"{"output":"#2,#1,sep,sep,#5,#4,#3,sep,#8,#7,#6,sep,#9"}"##,
        ),
        (
            vec!["eval-rlf", "--rlf", "mapreverse.rlf.json", "--input", mr],
            r##"{"output":"#2,#1,sep,sep,#5,#4,#3,sep,#8,#7,#6,sep,#9"}"##,
        ),
        (
            vec!["sst-run", "--sst", "mapreverse.sst.json", "--input", mr],
            r##"{"outcome":"accepted","output":"#2,#1,sep,sep,#5,#4,#3,sep,#8,#7,#6,sep,#9"}"##,
        ),
        (
            vec!["run", "--machine", "mapreverse.2w.json", "--input", mr],
            r##"{"outcome":"accepted","output":"#2,#1,sep,sep,#5,#4,#3,sep,#8,#7,#6,sep,#9"}"##,
        ),
        (
            vec![
                "eval-pipeline",
                "--pipeline",
                "mapduplicate.prime.json",
                "--input",
                mr,
            ],
            r##"{"output":"#1,#2,#1,#2,sep,sep,#3,#4,#5,#3,#4,#5,sep,#6,#7,#8,#6,#7,#8,sep,#9,#9"}"##,
        ),
        (
            vec!["eval-rlf", "--rlf", "mapduplicate.rlf.json", "--input", mr],
            r##"{"output":"#1,#2,#1,#2,sep,sep,#3,#4,#5,#3,#4,#5,sep,#6,#7,#8,#6,#7,#8,sep,#9,#9"}"##,
        ),
        (
            vec!["sst-run", "--sst", "mapduplicate.sst.json", "--input", mr],
            r##"{"outcome":"accepted","output":"#1,#2,#1,#2,sep,sep,#3,#4,#5,#3,#4,#5,sep,#6,#7,#8,#6,#7,#8,sep,#9,#9"}"##,
        ),
        (
            vec!["run", "--machine", "mapduplicate.2w.json", "--input", mr],
            r##"{"outcome":"accepted","output":"#1,#2,#1,#2,sep,sep,#3,#4,#5,#3,#4,#5,sep,#6,#7,#8,#6,#7,#8,sep,#9,#9"}"##,
        ),
        (
            vec!["deatomise", "--input", "#3,#1,#1,#3", "--alpha", "1:1,3:3"],
            r#"{"injective":true,"output":"◇◇◇∘◇∘◇∘◇◇◇∘"}"#,
        ),
    ];
    for (args, want) in &cases {
        let (got, code) = cli(args);
        ensure(code == 0 && got == format!("{want}\n"), || {
            format!("{} gave {got:?} (exit {code})", args.join(" "))
        })?;
    }
    Ok(format!("{} CLI outputs byte-identical", cases.len()))
}

fn permute_output(p: &Perm, o: &Output) -> Output {
    match o {
        Output::Word(w) => Output::Word(p.apply_word(w)),
        other => other.clone(),
    }
}

fn equivariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fx = fixtures();
    for (name, r) in &fx {
        let sort = r.input_sort().map_err(|e| e.to_string())?;
        let max_len = if *name == "doubling.sst.json" { 8 } else { 10 };
        for _ in 0..1000 {
            let len = rng.gen_range(0..=max_len);
            let w = sample_word(&sort, &mut rng, len, 6);
            let p = sample_perm(&word_atoms(&w), &mut rng);
            let lhs = r.apply(&p.apply_word(&w)).map_err(|e| e.to_string())?;
            let rhs = permute_output(&p, &r.apply(&w).map_err(|e| e.to_string())?);
            ensure(lhs == rhs, || {
                format!("{name} on {} with {p}", sort.show_word(&w))
            })?;
        }
    }
    Ok(format!(
        "{} fixtures x 1000 (word, permutation) pairs",
        fx.len()
    ))
}

fn single_use() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0;
    let machines = machine_fixtures();
    for (name, m) in machines.iter().filter(|(_, m)| m.single_use) {
        for _ in 0..200 {
            let len = rng.gen_range(0..=10);
            let w = sample_word(&m.input_sort, &mut rng, len, 4);
            let (_, trace) = m.run_traced(&w).map_err(|e| e.to_string())?;
            for s in &trace {
                let stored = match &m.branch_taken(s).action {
                    Action::Store(r, _) => Some(*r),
                    _ => None,
                };
                let reads_regs = matches!(m.delta[s.before.state].question, Question::RegEq(..))
                    || matches!(
                        m.branch_taken(s).action,
                        Action::Output(..) | Action::OutputMove(..)
                    );
                if reads_regs {
                    steps += 1;
                }
                for &r in &s.reads {
                    ensure(Some(r) == stored || s.after.regs[r].is_none(), || {
                        format!("{name}: register {} survives a read", m.registers[r])
                    })?;
                }
            }
            ensure(m.audit_single_use(&w).unwrap() == Ok(()), || {
                format!("{name} fails the audit")
            })?;
        }
    }
    let first = library::first_letter_again().unwrap();
    let w: Vec<Value> = [1, 2, 1].iter().map(|&i| Value::atom(i)).collect();
    ensure(first.audit_single_use(&w).unwrap().is_err(), || {
        "first-letter machine passes the audit".into()
    })?;
    ensure(first.accepts(&w).unwrap(), || {
        "first-letter machine rejects #1,#2,#1".into()
    })?;
    Ok(format!(
        "{steps} register-reading steps reset; audit flags the multiple-use machine"
    ))
}

fn cross_model() -> Check {
    let load = |name: &str| {
        Runner::from_json(
            serde_json::from_str(&std::fs::read_to_string(corpus_dir().join(name)).unwrap())
                .unwrap(),
        )
        .unwrap()
    };
    let models = [
        "mapreverse.rlf.json",
        "mapreverse.prime.json",
        "mapreverse.2w.json",
        "mapreverse.sst.json",
    ]
    .map(load);
    let sort = with_sep(&Sort::Atom);
    let mut words = 0;
    for r in &models {
        ensure(r.input_sort().unwrap() == sort, || {
            "unexpected input sort".into()
        })?;
    }
    for r in &models[1..] {
        let report = bounded_equiv(&models[0], r, 6).map_err(|e| e.to_string())?;
        ensure(report.is_equal(), || {
            format!("{} differs: {:?}", r.kind_name(), report.counterexample)
        })?;
        words = report.words_checked;
        let report = fuzz(&models[0], r, 500, 20, 8, 42).map_err(|e| e.to_string())?;
        ensure(report.is_equal(), || {
            format!(
                "{} differs on a random word: {:?}",
                r.kind_name(),
                report.counterexample
            )
        })?;
    }
    Ok(format!(
        "4 models agree on {words} canonical words (len <= 6) and 500 random words (len <= 20)"
    ))
}

fn profile_words(m: &Machine, rng: &mut ChaCha8Rng, max_len: usize) -> Vec<Value> {
    let len = rng.gen_range(0..=max_len);
    sample_word(&m.letter_sort(), rng, len, 5)
}

fn homomorphism() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let machines = [
        library::map_reverse_2w(),
        library::map_duplicate_2w(),
        library::three_letters(),
    ];
    for m in machines {
        let m = Arc::new(m.unwrap());
        let e = Profile::identity(&m);
        for i in 0..100 {
            let u = profile_words(&m, &mut rng, 5);
            let v = profile_words(&m, &mut rng, 5);
            let uv: Vec<Value> = u.iter().chain(&v).cloned().collect();
            let (pu, pv) = (Profile::of(&m, &u).unwrap(), Profile::of(&m, &v).unwrap());
            let composed = pu.compose(&pv).unwrap();
            ensure(composed.same_as(&Profile::of(&m, &uv).unwrap()), || {
                format!("pair {i} breaks the homomorphism")
            })?;
            ensure(
                pu.compose(&e).unwrap().same_as(&pu) && e.compose(&pu).unwrap().same_as(&pu),
                || "identity fails".into(),
            )?;
        }
        for i in 0..50 {
            let ps: Vec<Profile> = (0..3)
                .map(|_| Profile::of(&m, &profile_words(&m, &mut rng, 4)).unwrap())
                .collect();
            let left = ps[0].compose(&ps[1]).unwrap().compose(&ps[2]).unwrap();
            let right = ps[0].compose(&ps[1].compose(&ps[2]).unwrap()).unwrap();
            ensure(left.same_as(&right), || {
                format!("triple {i} is not associative")
            })?;
        }
    }
    Ok("3 machines x 100 pairs, identity both sides, 50 associative triples".into())
}

fn bounded_support() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut largest = 0;
    let mut profiled = 0;
    for (name, m) in machine_fixtures().into_iter().filter(|(_, m)| m.single_use) {
        let m = Arc::new(m);
        let bound = support_bound(&m);
        for _ in 0..20 {
            let w = profile_words(&m, &mut rng, 12);
            let s = Profile::of(&m, &w).unwrap().minimal_support();
            profiled += 1;
            largest = largest.max(s.len());
            ensure(s.len() as u128 <= bound, || {
                format!("{name}: support {} exceeds {bound}", s.len())
            })?;
        }
    }
    let m = Arc::new(library::first_letter_again().unwrap());
    let sizes: Vec<usize> = (1..=5u32)
        .map(|d| {
            let w: Vec<Value> = (1..=d).map(|i| Value::inl(Value::atom(i))).collect();
            Profile::of(&m, &w).unwrap().minimal_support().len()
        })
        .collect();
    ensure(sizes.windows(2).all(|x| x[0] < x[1]), || {
        format!("multiple-use supports {sizes:?}")
    })?;
    Ok(format!("{profiled} single-use profiles, largest support {largest}; multiple-use supports {sizes:?}"))
}

fn relabel_pipeline() -> PrimeFn {
    library::relabel_bot().unwrap()
}

fn mealy_closure() -> Check {
    let z3 = PrimeFn::GroupTransducer(Group::cyclic(3));
    let pairs = [
        (z3.clone(), z3),
        (PrimeFn::AtomPropagation, relabel_pipeline()),
        (relabel_pipeline(), PrimeFn::AtomPropagation),
    ];
    let mut words = 0;
    let mut worst = 0;
    for (f, g) in pairs {
        let c = compose_mealy(&f.as_mealy().unwrap(), &g.as_mealy().unwrap())
            .map_err(|e| e.to_string())?;
        let seq = Pipeline::seq(Pipeline::prime(f.clone()), Pipeline::prime(g));
        let bound = c.stay_bound();
        for len in 0..=5 {
            for w in canonical_words(&f.domain(), len) {
                words += 1;
                let got = c.run(&w).unwrap();
                let want = seq.eval(&w).unwrap();
                ensure(got.output() == Some(&want[..]), || {
                    format!("composition differs on {}", f.domain().show_word(&w))
                })?;
                let stay = c.max_stay(&w).unwrap();
                worst = worst.max(stay);
                ensure(stay as u128 <= bound, || {
                    format!("stay {stay} exceeds {bound}")
                })?;
            }
        }
    }
    Ok(format!(
        "3 pairs agree on {words} canonical words; max stay {worst}"
    ))
}

fn post_composition() -> Check {
    let a = Sort::Atom;
    let sep_sort = with_sep(&a);
    let ap = datawords::primes::atom_prop_input();
    let z3 = Group::cyclic(3).sort();
    let ff = datawords::primes::flip_flop_input();
    let two = |s: &Sort| vec![sst::identity_sst(s).unwrap(), sst::reverse_sst(s).unwrap()];
    let maps = || {
        vec![
            sst::map_reverse_sst().unwrap(),
            sst::map_duplicate_sst().unwrap(),
        ]
    };
    let double = PatternFn::from_fn(sep_sort.clone(), Sort::list(sep_sort.clone()), |v| {
        Value::List(vec![v.clone(), v.clone()])
    })
    .unwrap();
    let shape = PatternFn::from_fn(sep_sort.clone(), Sort::finite(&["x", "y"]), |v| match v {
        Value::Inj(datawords::atoms::Side::L, _) => Value::finite(2, 0, &["x", "y"]),
        _ => Value::finite(2, 1, &["x", "y"]),
    })
    .unwrap();
    let cases: Vec<(PrimeFn, Vec<Sst>)> = vec![
        (PrimeFn::MapReverse(a.clone()), maps()),
        (PrimeFn::MapDuplicate(a.clone()), maps()),
        (PrimeFn::Hom(double), maps()),
        (PrimeFn::LpHom(shape), maps()),
        (PrimeFn::AtomPropagation, two(&ap)),
        (PrimeFn::GroupTransducer(Group::cyclic(3)), two(&z3)),
        (PrimeFn::FlipFlop, two(&ff)),
    ];
    let mut words = 0;
    for (g, ssts) in &cases {
        for f in ssts {
            let h = post_compose_prime(f, g).map_err(|e| format!("{g:?}: {e}"))?;
            for len in 0..=6 {
                for w in canonical_words(&f.input_sort, len) {
                    words += 1;
                    let want = f.eval(&w).unwrap().output().map(|out| g.eval(out).unwrap());
                    let got = h.eval(&w).unwrap().output().map(|out| out.to_vec());
                    ensure(got == want, || {
                        format!(
                            "post-composition with {g:?} differs on {}",
                            f.input_sort.show_word(&w)
                        )
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "{} primes x 2 SSTs agree on {words} canonical words",
        cases.len()
    ))
}

fn run_graphs() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut report = Vec::new();
    for (name, m) in machine_fixtures().into_iter().filter(|(_, m)| m.single_use) {
        let bound = width_bound(&m);
        let mut widest = 0;
        for _ in 0..200 {
            let len = rng.gen_range(0..=30);
            let w = sample_word(&m.input_sort, &mut rng, len, 6);
            let Ok(g) = m.run_graph(&w) else { continue };
            widest = widest.max(g.width());
            ensure(g.width() as u128 <= bound, || {
                format!("{name}: width {} exceeds {bound}", g.width())
            })?;
            let back: datawords::machines::RunGraph =
                serde_json::from_value(serde_json::to_value(&g).unwrap()).unwrap();
            let out = m.run(&w).unwrap();
            ensure(back.replay().as_deref() == out.output(), || {
                format!("{name}: replay differs")
            })?;
        }
        report.push(format!("{}={widest}", name.trim_end_matches(".json")));
    }
    let mut forests = 0;
    for (name, r) in fixtures() {
        let Runner::Sst(s) = r else { continue };
        let max_len = if name == "doubling.sst.json" { 10 } else { 30 };
        for _ in 0..200 {
            let len = rng.gen_range(0..=max_len);
            let w = sample_word(&s.input_sort, &mut rng, len, 6);
            if let Some(out) = s.eval(&w).unwrap().output() {
                forests += 1;
                ensure(s.register_forest(&w).unwrap().dfs() == out, || {
                    format!("{name}: forest DFS differs")
                })?;
            }
        }
    }
    Ok(format!(
        "widths {}; {forests} forests replay",
        report.join(" ")
    ))
}

fn adjacency() -> Check {
    let suffixes: Vec<Value> = "554543543254321"
        .chars()
        .map(|c| Value::atom(c.to_digit(10).unwrap()))
        .collect();
    let last = Value::atom(5);
    ensure(!adjacency_letter_check(&suffixes, &last, 1), || {
        "k=1 passes".into()
    })?;
    ensure(!adjacency_letter_check(&suffixes, &last, 2), || {
        "k=2 passes".into()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut checked = 0;
    for (name, r) in fixtures() {
        let Runner::Sst(s) = r else { continue };
        if !s.single_use {
            continue;
        }
        let Sort::Sum(letter, _) = &s.input_sort else {
            continue;
        };
        if **letter != Sort::Atom {
            continue;
        }
        for _ in 0..200 {
            let len = rng.gen_range(0..=15);
            let mut w = sample_word(&s.input_sort, &mut rng, len, 4);
            let fresh = Value::inl(Value::Atom(Atom(100)));
            w.push(fresh.clone());
            if let Some(out) = s.eval(&w).unwrap().output() {
                checked += 1;
                ensure(adjacency_letter_check(out, &fresh, s.strings.len()), || {
                    format!("{name} fails on {}", s.input_sort.show_word(&w))
                })?;
            }
        }
    }
    Ok(format!(
        "suffix output fails for k=1,2; {checked} single-use SST outputs pass"
    ))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        ("golden examples", golden_examples),
        ("equivariance", equivariance),
        ("single-use enforcement", single_use),
        ("cross-model agreement", cross_model),
        ("profile homomorphism", homomorphism),
        ("bounded support", bounded_support),
        ("Mealy composition", mealy_closure),
        ("SST post-composition", post_composition),
        ("run graphs and forests", run_graphs),
        ("adjacency invariant", adjacency),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(_) if took > LIMIT => Err(format!("took {:.1}s", took.as_secs_f64())),
            other => other,
        };
        match result {
            Ok(detail) => println!(
                "criterion {:>2} PASS {name} ({:.1}s): {detail}",
                i + 1,
                took.as_secs_f64()
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "criterion {:>2} FAIL {name} ({:.1}s): {detail}",
                    i + 1,
                    took.as_secs_f64()
                );
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
