//! Regular list functions with atoms: prime list functions closed under
//! composition, pairing, co-pairing and map.

use serde::{Deserialize, Serialize};

use crate::atoms::{Side, Sort, Value};
use crate::error::{Error, Result};
use crate::primes::{with_sep, Group};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ListPrime {
    Id(Sort),
    /// `σ0 × σ1 → σi`
    Project(usize, Sort, Sort),
    /// `σi → σ0 + σ1`
    Coproject(usize, Sort, Sort),
    /// `(σ1 + σ2) × τ → (σ1 × τ) + (σ2 × τ)`
    Distr(Sort, Sort, Sort),
    Reverse(Sort),
    /// `(σ*)* → σ*`
    Concat(Sort),
    /// `σ × σ* → σ*`
    Append(Sort),
    /// `σ* → (σ × σ*) + ⊥`
    Coappend(Sort),
    /// `(σ + τ)* → (σ* + τ*)*`
    Block(Sort, Sort),
    /// `(G × σ)* → (G × σ)*`, each letter tagged with the product of the
    /// group elements before it.
    Group(Group, Sort),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rlf {
    /// Constant function from `domain`; the value must be atomless.
    Const {
        domain: Sort,
        sort: Sort,
        value: Value,
    },
    Eq,
    Prime(ListPrime),
    /// `Comp(f, g)(x) = f(g(x))`
    Comp(Box<Rlf>, Box<Rlf>),
    Pair(Box<Rlf>, Box<Rlf>),
    Cases(Box<Rlf>, Box<Rlf>),
    Map(Box<Rlf>),
}

fn bot() -> Sort {
    Sort::unit("bot")
}

fn type_err(path: &[String], msg: impl Into<String>) -> Error {
    Error::Type {
        path: if path.is_empty() {
            "root".into()
        } else {
            path.join("/")
        },
        msg: msg.into(),
    }
}

impl ListPrime {
    pub fn signature(&self) -> (Sort, Sort) {
        use Sort as S;
        let l = |s: &Sort| S::list(s.clone());
        match self {
            ListPrime::Id(s) => (s.clone(), s.clone()),
            ListPrime::Project(i, a, b) => (
                S::prod(a.clone(), b.clone()),
                if *i == 0 { a.clone() } else { b.clone() },
            ),
            ListPrime::Coproject(i, a, b) => (
                if *i == 0 { a.clone() } else { b.clone() },
                S::sum(a.clone(), b.clone()),
            ),
            ListPrime::Distr(a, b, t) => (
                S::prod(S::sum(a.clone(), b.clone()), t.clone()),
                S::sum(S::prod(a.clone(), t.clone()), S::prod(b.clone(), t.clone())),
            ),
            ListPrime::Reverse(s) => (l(s), l(s)),
            ListPrime::Concat(s) => (l(&l(s)), l(s)),
            ListPrime::Append(s) => (S::prod(s.clone(), l(s)), l(s)),
            ListPrime::Coappend(s) => (l(s), S::sum(S::prod(s.clone(), l(s)), bot())),
            ListPrime::Block(a, b) => (l(&S::sum(a.clone(), b.clone())), l(&S::sum(l(a), l(b)))),
            ListPrime::Group(g, s) => {
                let t = l(&S::prod(g.sort(), s.clone()));
                (t.clone(), t)
            }
        }
    }

    fn apply(&self, v: Value) -> Result<Value> {
        let shape = || Error::mismatch(&v, self.signature().0);
        Ok(match (self, &v) {
            (ListPrime::Id(_), _) => v.clone(),
            (ListPrime::Project(i, ..), Value::Pair(a, b)) => {
                if *i == 0 {
                    (**a).clone()
                } else {
                    (**b).clone()
                }
            }
            (ListPrime::Coproject(i, ..), _) => {
                Value::Inj(if *i == 0 { Side::L } else { Side::R }, Box::new(v.clone()))
            }
            (ListPrime::Distr(..), Value::Pair(x, t)) => match &**x {
                Value::Inj(side, a) => {
                    Value::Inj(*side, Box::new(Value::Pair(a.clone(), t.clone())))
                }
                _ => return Err(shape()),
            },
            (ListPrime::Reverse(_), Value::List(xs)) => {
                Value::List(xs.iter().rev().cloned().collect())
            }
            (ListPrime::Concat(_), Value::List(xs)) => {
                let mut out = Vec::new();
                for x in xs {
                    match x {
                        Value::List(ys) => out.extend(ys.iter().cloned()),
                        _ => return Err(shape()),
                    }
                }
                Value::List(out)
            }
            (ListPrime::Append(_), Value::Pair(a, l)) => match &**l {
                Value::List(xs) => {
                    let mut out = vec![(**a).clone()];
                    out.extend(xs.iter().cloned());
                    Value::List(out)
                }
                _ => return Err(shape()),
            },
            (ListPrime::Coappend(_), Value::List(xs)) => match xs.split_first() {
                None => Value::inr(Value::unit("bot")),
                Some((a, rest)) => Value::inl(Value::pair(a.clone(), Value::List(rest.to_vec()))),
            },
            (ListPrime::Block(..), Value::List(xs)) => {
                let mut blocks: Vec<(Side, Vec<Value>)> = Vec::new();
                for x in xs {
                    let Value::Inj(side, a) = x else {
                        return Err(shape());
                    };
                    match blocks.last_mut() {
                        Some((s, b)) if s == side => b.push((**a).clone()),
                        _ => blocks.push((*side, vec![(**a).clone()])),
                    }
                }
                Value::List(
                    blocks
                        .into_iter()
                        .map(|(s, b)| Value::Inj(s, Box::new(Value::List(b))))
                        .collect(),
                )
            }
            (ListPrime::Group(g, _), Value::List(xs)) => {
                let mut acc = 0;
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    let Value::Pair(h, a) = x else {
                        return Err(shape());
                    };
                    out.push(Value::pair(g.element(acc), (**a).clone()));
                    acc = g.mul(acc, g.index(h).ok_or_else(shape)?);
                }
                Value::List(out)
            }
            _ => return Err(shape()),
        })
    }
}

impl Rlf {
    pub fn prime(p: ListPrime) -> Rlf {
        Rlf::Prime(p)
    }

    /// Domain and codomain; errors name the path to the offending node.
    pub fn typecheck(&self) -> Result<(Sort, Sort)> {
        self.check_at(&mut Vec::new())
    }

    pub fn domain(&self) -> Result<Sort> {
        Ok(self.typecheck()?.0)
    }

    pub fn codomain(&self) -> Result<Sort> {
        Ok(self.typecheck()?.1)
    }

    fn check_at(&self, path: &mut Vec<String>) -> Result<(Sort, Sort)> {
        let sub = |name: &str, e: &Rlf, path: &mut Vec<String>| {
            path.push(name.to_string());
            let r = e.check_at(path);
            path.pop();
            r
        };
        match self {
            Rlf::Const {
                domain,
                sort,
                value,
            } => {
                if !value.is_atomless() {
                    return Err(type_err(path, "constants must be atomless"));
                }
                sort.check(value)
                    .map_err(|e| type_err(path, e.to_string()))?;
                Ok((domain.clone(), sort.clone()))
            }
            Rlf::Eq => Ok((Sort::prod(Sort::Atom, Sort::Atom), Sort::bool())),
            Rlf::Prime(p) => Ok(p.signature()),
            Rlf::Comp(f, g) => {
                let (gd, gc) = sub("comp.1", g, path)?;
                let (fd, fc) = sub("comp.0", f, path)?;
                if gc != fd {
                    return Err(type_err(
                        path,
                        format!("inner codomain {gc} differs from outer domain {fd}"),
                    ));
                }
                Ok((gd, fc))
            }
            Rlf::Pair(f, g) => {
                let (fd, fc) = sub("pair.0", f, path)?;
                let (gd, gc) = sub("pair.1", g, path)?;
                if fd != gd {
                    return Err(type_err(
                        path,
                        format!("paired domains {fd} and {gd} differ"),
                    ));
                }
                Ok((fd, Sort::prod(fc, gc)))
            }
            Rlf::Cases(f, g) => {
                let (fd, fc) = sub("cases.0", f, path)?;
                let (gd, gc) = sub("cases.1", g, path)?;
                if fc != gc {
                    return Err(type_err(
                        path,
                        format!("case codomains {fc} and {gc} differ"),
                    ));
                }
                Ok((Sort::sum(fd, gd), fc))
            }
            Rlf::Map(f) => {
                let (fd, fc) = sub("map", f, path)?;
                Ok((Sort::list(fd), Sort::list(fc)))
            }
        }
    }

    pub fn eval(&self, v: &Value) -> Result<Value> {
        let (dom, _) = self.typecheck()?;
        let v = dom.coerce(v)?;
        self.apply(v)
    }

    fn apply(&self, v: Value) -> Result<Value> {
        match self {
            Rlf::Const { value, .. } => Ok(value.clone()),
            Rlf::Eq => match &v {
                Value::Pair(a, b) => match (&**a, &**b) {
                    (Value::Atom(x), Value::Atom(y)) => Ok(Value::bool(x == y)),
                    _ => Err(Error::mismatch(&v, Sort::prod(Sort::Atom, Sort::Atom))),
                },
                _ => Err(Error::mismatch(&v, Sort::prod(Sort::Atom, Sort::Atom))),
            },
            Rlf::Prime(p) => p.apply(v),
            Rlf::Comp(f, g) => f.apply(g.apply(v)?),
            Rlf::Pair(f, g) => Ok(Value::pair(f.apply(v.clone())?, g.apply(v)?)),
            Rlf::Cases(f, g) => match v {
                Value::Inj(Side::L, a) => f.apply(*a),
                Value::Inj(Side::R, b) => g.apply(*b),
                other => Err(Error::mismatch(other, "a sum")),
            },
            Rlf::Map(f) => match v {
                Value::List(xs) => Ok(Value::List(
                    xs.into_iter().map(|x| f.apply(x)).collect::<Result<_>>()?,
                )),
                other => Err(Error::mismatch(other, "a list")),
            },
        }
    }

    /// Applies the expression to a word given as a list.
    pub fn eval_word(&self, w: &[Value]) -> Result<Vec<Value>> {
        match self.eval(&Value::List(w.to_vec()))? {
            Value::List(xs) => Ok(xs),
            other => Err(Error::mismatch(other, "a list")),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_repr()).expect("expression serializes")
    }

    pub fn from_json(v: serde_json::Value) -> Result<Rlf> {
        let repr: RlfRepr = serde_json::from_value(v)?;
        let e = Rlf::from_repr(repr)?;
        e.typecheck()?;
        Ok(e)
    }

    fn to_repr(&self) -> RlfRepr {
        let b = |e: &Rlf| Box::new(e.to_repr());
        match self {
            Rlf::Const {
                domain,
                sort,
                value,
            } => RlfRepr::Const {
                domain: domain.clone(),
                sort: sort.clone(),
                value: sort.show(value),
            },
            Rlf::Eq => RlfRepr::Eq,
            Rlf::Prime(p) => match p.clone() {
                ListPrime::Id(s) => RlfRepr::Id(s),
                ListPrime::Project(i, left, right) => RlfRepr::Project { i, left, right },
                ListPrime::Coproject(i, left, right) => RlfRepr::Coproject { i, left, right },
                ListPrime::Distr(left, right, tau) => RlfRepr::Distr { left, right, tau },
                ListPrime::Reverse(s) => RlfRepr::Reverse(s),
                ListPrime::Concat(s) => RlfRepr::Concat(s),
                ListPrime::Append(s) => RlfRepr::Append(s),
                ListPrime::Coappend(s) => RlfRepr::Coappend(s),
                ListPrime::Block(left, right) => RlfRepr::Block { left, right },
                ListPrime::Group(g, sort) => RlfRepr::Group {
                    table: g.table().to_vec(),
                    sort,
                },
            },
            Rlf::Comp(f, g) => RlfRepr::Comp(b(f), b(g)),
            Rlf::Pair(f, g) => RlfRepr::Pair(b(f), b(g)),
            Rlf::Cases(f, g) => RlfRepr::Cases(b(f), b(g)),
            Rlf::Map(f) => RlfRepr::Map(b(f)),
        }
    }

    fn from_repr(r: RlfRepr) -> Result<Rlf> {
        let b = |e: Box<RlfRepr>| Rlf::from_repr(*e).map(Box::new);
        let p = |p| Ok(Rlf::Prime(p));
        match r {
            RlfRepr::Const {
                domain,
                sort,
                value,
            } => {
                let value = sort.parse_value(&value)?;
                Ok(Rlf::Const {
                    domain,
                    sort,
                    value,
                })
            }
            RlfRepr::Eq => Ok(Rlf::Eq),
            RlfRepr::Id(s) => p(ListPrime::Id(s)),
            RlfRepr::Project { i, left, right } if i < 2 => p(ListPrime::Project(i, left, right)),
            RlfRepr::Coproject { i, left, right } if i < 2 => {
                p(ListPrime::Coproject(i, left, right))
            }
            RlfRepr::Project { .. } | RlfRepr::Coproject { .. } => {
                Err(Error::Format("index must be 0 or 1".into()))
            }
            RlfRepr::Distr { left, right, tau } => p(ListPrime::Distr(left, right, tau)),
            RlfRepr::Reverse(s) => p(ListPrime::Reverse(s)),
            RlfRepr::Concat(s) => p(ListPrime::Concat(s)),
            RlfRepr::Append(s) => p(ListPrime::Append(s)),
            RlfRepr::Coappend(s) => p(ListPrime::Coappend(s)),
            RlfRepr::Block { left, right } => p(ListPrime::Block(left, right)),
            RlfRepr::Group { table, sort } => p(ListPrime::Group(Group::new(table)?, sort)),
            RlfRepr::Comp(f, g) => Ok(Rlf::Comp(b(f)?, b(g)?)),
            RlfRepr::Pair(f, g) => Ok(Rlf::Pair(b(f)?, b(g)?)),
            RlfRepr::Cases(f, g) => Ok(Rlf::Cases(b(f)?, b(g)?)),
            RlfRepr::Map(f) => Ok(Rlf::Map(b(f)?)),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RlfRepr {
    Const {
        domain: Sort,
        sort: Sort,
        value: String,
    },
    Eq,
    Id(Sort),
    Project {
        i: usize,
        left: Sort,
        right: Sort,
    },
    Coproject {
        i: usize,
        left: Sort,
        right: Sort,
    },
    Distr {
        left: Sort,
        right: Sort,
        tau: Sort,
    },
    Reverse(Sort),
    Concat(Sort),
    Append(Sort),
    Coappend(Sort),
    Block {
        left: Sort,
        right: Sort,
    },
    Group {
        table: Vec<Vec<usize>>,
        sort: Sort,
    },
    Comp(Box<RlfRepr>, Box<RlfRepr>),
    Pair(Box<RlfRepr>, Box<RlfRepr>),
    Cases(Box<RlfRepr>, Box<RlfRepr>),
    Map(Box<RlfRepr>),
}

/// A word predicate given by an expression of type `Σ* → {yes, no}`.
#[derive(Debug, Clone)]
pub struct Acceptor {
    pub expr: Rlf,
    pub alphabet: Sort,
}

impl Acceptor {
    pub fn accepts(&self, w: &[Value]) -> Result<bool> {
        self.alphabet.check_word(w)?;
        let v = self.expr.apply(Value::List(w.to_vec()))?;
        v.as_bool().ok_or_else(|| Error::mismatch(v, Sort::bool()))
    }
}

fn has_lists(s: &Sort) -> bool {
    match s {
        Sort::Atom | Sort::Unit(_) => false,
        Sort::Prod(a, b) | Sort::Sum(a, b) => has_lists(a) || has_lists(b),
        Sort::List(_) => true,
    }
}

pub fn as_language_acceptor(e: &Rlf) -> Result<Acceptor> {
    let (dom, cod) = e.typecheck()?;
    let alphabet = match dom {
        Sort::List(a) if !has_lists(&a) => *a,
        other => return Err(type_err(&[], format!("domain {other} is not a word sort"))),
    };
    if cod != Sort::bool() {
        return Err(type_err(&[], format!("codomain {cod} is not boolean")));
    }
    Ok(Acceptor {
        expr: e.clone(),
        alphabet,
    })
}

// ---------------------------------------------------------------------------
// Derived functions

fn sorts(e: &Rlf) -> (Sort, Sort) {
    e.typecheck().expect("derived expressions typecheck")
}

pub fn id(s: &Sort) -> Rlf {
    Rlf::Prime(ListPrime::Id(s.clone()))
}

/// `comp(f, g) = f ∘ g`
pub fn comp(f: Rlf, g: Rlf) -> Rlf {
    Rlf::Comp(Box::new(f), Box::new(g))
}

/// Applies the stages left to right.
pub fn chain(stages: Vec<Rlf>) -> Rlf {
    stages
        .into_iter()
        .reduce(|g, f| comp(f, g))
        .expect("at least one stage")
}

pub fn pair(f: Rlf, g: Rlf) -> Rlf {
    Rlf::Pair(Box::new(f), Box::new(g))
}

pub fn cases(f: Rlf, g: Rlf) -> Rlf {
    Rlf::Cases(Box::new(f), Box::new(g))
}

pub fn map(f: Rlf) -> Rlf {
    Rlf::Map(Box::new(f))
}

pub fn constant(domain: &Sort, sort: &Sort, value: Value) -> Rlf {
    Rlf::Const {
        domain: domain.clone(),
        sort: sort.clone(),
        value,
    }
}

pub fn empty_list(domain: &Sort, elem: &Sort) -> Rlf {
    constant(domain, &Sort::list(elem.clone()), Value::List(vec![]))
}

/// Projection out of the domain of `e`, which must be a product.
fn proj_of(i: usize, s: &Sort) -> Rlf {
    match s {
        Sort::Prod(a, b) => Rlf::Prime(ListPrime::Project(i, (**a).clone(), (**b).clone())),
        other => panic!("projection from non-product {other}"),
    }
}

/// `x ↦ [x]`
pub fn singleton(s: &Sort) -> Rlf {
    comp(
        Rlf::Prime(ListPrime::Append(s.clone())),
        pair(id(s), empty_list(s, s)),
    )
}

pub fn not() -> Rlf {
    let unit = |n| Sort::unit(n);
    cases(
        constant(&unit("yes"), &Sort::bool(), Value::bool(false)),
        constant(&unit("no"), &Sort::bool(), Value::bool(true)),
    )
}

/// `x ↦ if test(x) then yes(x) else no(x)`
pub fn conditional(test: Rlf, yes: Rlf, no: Rlf) -> Rlf {
    let (dom, _) = sorts(&test);
    let distr = Rlf::Prime(ListPrime::Distr(
        Sort::unit("yes"),
        Sort::unit("no"),
        dom.clone(),
    ));
    let y = proj_of(1, &Sort::prod(Sort::unit("yes"), dom.clone()));
    let n = proj_of(1, &Sort::prod(Sort::unit("no"), dom.clone()));
    chain(vec![
        pair(test, id(&dom)),
        distr,
        cases(comp(yes, y), comp(no, n)),
    ])
}

pub fn or(f: Rlf, g: Rlf) -> Rlf {
    let (dom, _) = sorts(&f);
    conditional(f, constant(&dom, &Sort::bool(), Value::bool(true)), g)
}

/// Keeps the list items satisfying `pred`.
pub fn filter(pred: Rlf) -> Rlf {
    let (s, _) = sorts(&pred);
    chain(vec![
        map(conditional(pred, singleton(&s), empty_list(&s, &s))),
        Rlf::Prime(ListPrime::Concat(s)),
    ])
}

/// `[x1,…,xn] ↦ [(x1,x2),(x2,x3),…,(x(n−1),xn)]`: each item is written
/// twice around a marker, and the two-item blocks between markers are
/// exactly the windows.
pub fn windows(s: &Sort) -> Rlf {
    let mark = Sort::unit("mark");
    let tagged = Sort::sum(s.clone(), mark.clone());
    let pair_sort = Sort::prod(s.clone(), s.clone());
    let left = Rlf::Prime(ListPrime::Coproject(0, s.clone(), mark.clone()));
    let marker = constant(s, &tagged, Value::inr(Value::unit("mark")));
    let append = |t: &Sort| Rlf::Prime(ListPrime::Append(t.clone()));
    let triple = comp(
        append(&tagged),
        pair(
            left.clone(),
            comp(
                append(&tagged),
                pair(marker, comp(singleton(&tagged), left)),
            ),
        ),
    );
    let rest = Sort::prod(s.clone(), Sort::list(s.clone()));
    let coappend = Rlf::Prime(ListPrime::Coappend(s.clone()));
    let second = chain(vec![
        pair(comp(coappend.clone(), proj_of(1, &rest)), proj_of(0, &rest)),
        Rlf::Prime(ListPrime::Distr(rest.clone(), bot(), s.clone())),
        cases(
            chain(vec![
                pair(
                    proj_of(1, &Sort::prod(rest.clone(), s.clone())),
                    comp(
                        proj_of(0, &rest),
                        proj_of(0, &Sort::prod(rest.clone(), s.clone())),
                    ),
                ),
                singleton(&pair_sort),
            ]),
            empty_list(&Sort::prod(bot(), s.clone()), &pair_sort),
        ),
    ]);
    let two = comp(cases(second, empty_list(&bot(), &pair_sort)), coappend);
    chain(vec![
        map(triple),
        Rlf::Prime(ListPrime::Concat(tagged)),
        Rlf::Prime(ListPrime::Block(s.clone(), mark.clone())),
        map(cases(two, empty_list(&Sort::list(mark), &pair_sort))),
        Rlf::Prime(ListPrime::Concat(pair_sort)),
    ])
}

/// `w ↦ ww`, through `(w,[w])` and `[w,w]`.
pub fn duplicate(s: &Sort) -> Rlf {
    let l = Sort::list(s.clone());
    chain(vec![
        pair(id(&l), singleton(&l)),
        Rlf::Prime(ListPrime::Append(l)),
        Rlf::Prime(ListPrime::Concat(s.clone())),
    ])
}

/// Applies `f: σ* → σ*` to every maximal separator-free block of a word
/// over `σ + sep`.
fn blockwise(s: &Sort, f: Rlf) -> Rlf {
    let sep = Sort::unit("sep");
    let full = with_sep(s);
    let inject = |i| map(Rlf::Prime(ListPrime::Coproject(i, s.clone(), sep.clone())));
    chain(vec![
        Rlf::Prime(ListPrime::Block(s.clone(), sep.clone())),
        map(cases(comp(inject(0), f), inject(1))),
        Rlf::Prime(ListPrime::Concat(full)),
    ])
}

pub fn map_reverse(s: &Sort) -> Rlf {
    blockwise(s, Rlf::Prime(ListPrime::Reverse(s.clone())))
}

pub fn map_duplicate(s: &Sort) -> Rlf {
    blockwise(s, duplicate(s))
}

/// `σ* → {yes,no}`, true on nonempty lists.
pub fn nonempty(s: &Sort) -> Rlf {
    let yes = constant(
        &Sort::prod(s.clone(), Sort::list(s.clone())),
        &Sort::bool(),
        Value::bool(true),
    );
    let no = constant(&bot(), &Sort::bool(), Value::bool(false));
    comp(cases(yes, no), Rlf::Prime(ListPrime::Coappend(s.clone())))
}

/// Words over `𝔸` with at most three distinct letters. After removing
/// immediate repetitions, call a position a switch if its letter differs
/// from the letter two positions back; the word is accepted iff the letter
/// at every switch occurs among the three letters ending at the previous
/// switch.
pub fn at_most_three_letters() -> Rlf {
    let a = Sort::Atom;
    let aa = Sort::prod(a.clone(), a.clone());
    let neq = comp(not(), Rlf::Eq);
    let p = |i, s: &Sort| proj_of(i, s);
    let collapse = {
        let rest = Sort::prod(a.clone(), Sort::list(a.clone()));
        let tail = chain(vec![
            Rlf::Prime(ListPrime::Append(a.clone())),
            windows(&a),
            filter(neq.clone()),
            map(p(1, &aa)),
        ]);
        let nonempty = comp(
            Rlf::Prime(ListPrime::Append(a.clone())),
            pair(p(0, &rest), tail),
        );
        comp(
            cases(nonempty, empty_list(&bot(), &a)),
            Rlf::Prime(ListPrime::Coappend(a.clone())),
        )
    };
    let tri = Sort::prod(a.clone(), aa.clone());
    let win = Sort::prod(aa.clone(), aa.clone());
    let triples = chain(vec![
        windows(&a),
        windows(&aa),
        map(pair(
            comp(p(0, &aa), p(0, &win)),
            pair(comp(p(1, &aa), p(0, &win)), comp(p(1, &aa), p(1, &win))),
        )),
    ]);
    let switch = comp(neq, pair(p(0, &tri), comp(p(1, &aa), p(1, &tri))));
    let two = Sort::prod(tri.clone(), tri.clone());
    let last = comp(comp(p(1, &aa), p(1, &tri)), p(1, &two));
    let prev = |f: Rlf| comp(f, p(0, &two));
    let member = or(
        comp(Rlf::Eq, pair(last.clone(), prev(p(0, &tri)))),
        or(
            comp(
                Rlf::Eq,
                pair(last.clone(), prev(comp(p(0, &aa), p(1, &tri)))),
            ),
            comp(Rlf::Eq, pair(last, prev(comp(p(1, &aa), p(1, &tri))))),
        ),
    );
    chain(vec![
        collapse,
        triples,
        filter(switch),
        windows(&tri),
        filter(comp(not(), member)),
        nonempty(&two),
        not(),
    ])
}

/// The derived library by name, over the letter sort `s`.
pub fn derived(name: &str, s: &Sort) -> Result<Rlf> {
    Ok(match name {
        "mapReverse" | "map_reverse" => map_reverse(s),
        "mapDuplicate" | "map_duplicate" => map_duplicate(s),
        "duplicate" => duplicate(s),
        "windows" => windows(s),
        "nonempty" => nonempty(s),
        "atMostThreeLetters" | "at_most_three_letters" => at_most_three_letters(),
        other => return Err(Error::Unsupported(format!("no derived function {other}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(s: &Sort, t: &str) -> Value {
        Value::List(s.parse_word(t).unwrap())
    }

    #[test]
    fn block_splits_atom_propagation_input() {
        let s = crate::primes::atom_prop_input();
        let (a, d) = (Sort::sum(Sort::Atom, Sort::unit("eps")), Sort::unit("down"));
        let regroup = map(cases(
            comp(
                Rlf::Prime(ListPrime::Coproject(0, a.clone(), d.clone())),
                Rlf::Prime(ListPrime::Coproject(0, Sort::Atom, Sort::unit("eps"))),
            ),
            cases(
                comp(
                    Rlf::Prime(ListPrime::Coproject(0, a.clone(), d.clone())),
                    Rlf::Prime(ListPrime::Coproject(1, Sort::Atom, Sort::unit("eps"))),
                ),
                Rlf::Prime(ListPrime::Coproject(1, a.clone(), d.clone())),
            ),
        ));
        let e = comp(Rlf::Prime(ListPrime::Block(a.clone(), d.clone())), regroup);
        let out = e.eval(&list(&s, "#1,#2,ε,ε,↓,↓,#3,ε,ε,↓,ε,↓")).unwrap();
        let cod = e.codomain().unwrap();
        assert_eq!(
            cod.show(&out),
            "[[#1,#2,eps,eps],[down,down],[#3,eps,eps],[down],[eps],[down]]"
        );
    }

    #[test]
    fn prime_examples() {
        let a = Sort::Atom;
        let co = Rlf::Prime(ListPrime::Coappend(a.clone()));
        assert_eq!(
            co.eval(&Value::List(vec![])).unwrap(),
            Value::inr(Value::unit("bot"))
        );
        let g = Group::cyclic(3);
        let s = Sort::prod(g.sort(), Sort::unit("x"));
        let e = Rlf::Prime(ListPrime::Group(g.clone(), Sort::unit("x")));
        let w = |t: &[usize]| {
            Value::List(
                t.iter()
                    .map(|&i| Value::pair(g.element(i), Value::unit("x")))
                    .collect(),
            )
        };
        assert_eq!(e.eval(&w(&[1, 2, 0])).unwrap(), w(&[0, 1, 0]));
        assert!(s.contains(&Value::pair(g.element(0), Value::unit("x"))));
        assert_eq!(
            Rlf::Eq
                .eval(&Value::pair(Value::atom(3), Value::atom(3)))
                .unwrap(),
            Value::bool(true)
        );
    }

    #[test]
    fn derived_examples() {
        let s = with_sep(&Sort::Atom);
        let w = list(&s, "#1,#2,|,|,#3,#4,#5,|,#6,#7,#8,|,#9");
        let out = map_reverse(&Sort::Atom).eval(&w).unwrap();
        assert_eq!(out, list(&s, "#2,#1,|,|,#5,#4,#3,|,#8,#7,#6,|,#9"));
        let a = Sort::Atom;
        assert_eq!(
            duplicate(&a).eval(&list(&a, "#1,#2")).unwrap(),
            list(&a, "#1,#2,#1,#2")
        );
        let win = windows(&a).eval(&list(&a, "#1,#2,#3")).unwrap();
        assert_eq!(
            Sort::list(Sort::prod(a.clone(), a.clone())).show(&win),
            "[(#1,#2),(#2,#3)]"
        );
        assert_eq!(
            windows(&a).eval(&list(&a, "#1")).unwrap(),
            Value::List(vec![])
        );
    }

    #[test]
    fn three_letters_by_brute_force() {
        let acc = as_language_acceptor(&at_most_three_letters()).unwrap();
        for n in 0..=6 {
            for rgs in crate::atoms::restricted_growth_strings(n) {
                let w: Vec<Value> = rgs.iter().map(|&i| Value::atom(i)).collect();
                let distinct = rgs.iter().max().map_or(0, |m| m + 1);
                assert_eq!(acc.accepts(&w).unwrap(), distinct <= 3, "{rgs:?}");
            }
        }
    }

    #[test]
    fn type_errors_carry_paths() {
        let e = comp(Rlf::Prime(ListPrime::Reverse(Sort::Atom)), map(Rlf::Eq));
        match e.typecheck() {
            Err(Error::Type { path, .. }) => assert_eq!(path, "root"),
            other => panic!("{other:?}"),
        }
        let e = pair(
            id(&Sort::Atom),
            comp(Rlf::Eq, Rlf::Prime(ListPrime::Reverse(Sort::Atom))),
        );
        match e.typecheck() {
            Err(Error::Type { path, .. }) => assert_eq!(path, "pair.1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let e = at_most_three_letters();
        assert_eq!(Rlf::from_json(e.to_json()).unwrap(), e);
    }
}
