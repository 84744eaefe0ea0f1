mod common;

use prophic::abstraction::{abstract_arrays, Mode};
use prophic::axioms::{classify, AxiomInstance, Classification, IndexEntry, Provenance, Schema};
use prophic::bmc::{self, UnrollOptions};
use prophic::refiner::{reduce_axioms, refine_arrays, RefineOptions};
use prophic::sts::{AuxRecord, Property, TransitionSystem};
use prophic::{Op, Sort, TermStore, VarKind};

#[test]
fn classification_follows_the_step_span() {
    let mut st = TermStore::new();
    let int = st.int_sort();
    let x = st.new_var("x", int, VarKind::State).unwrap();
    let y = st.new_var("y", int, VarKind::State).unwrap();
    let (x0, x2, y3, y4) = (st.timed_term(x, 0), st.timed_term(x, 2), st.timed_term(y, 3), st.timed_term(y, 4));
    let entry = IndexEntry {
        term: x2,
        untimed: st.var_term(x),
        step: 2,
        provenance: Provenance::ReadIdx,
        frozen: false,
    };
    let wide = st.eq(x0, x2).unwrap();
    assert_eq!(
        classify(&st, wide, Some(&entry)),
        Classification::NonConsecutive { index: x2, step: 2 }
    );
    let near = st.lt(y3, y4).unwrap();
    assert_eq!(classify(&st, near, Some(&entry)), Classification::Consecutive);
    // Without an instantiating index the formula cannot be made consecutive.
    assert_eq!(classify(&st, wide, None), Classification::Consecutive);
}

#[test]
fn abstraction_round_trips_every_conjunct() {
    for mode in [Mode::Weak, Mode::Strong] {
        for name in common::CORPUS {
            let mut store = TermStore::new();
            let (sys, prop) = common::load(&mut store, name);
            let (abs, aprop, map) = abstract_arrays(&mut store, &sys, prop, mode).unwrap();
            let user: Vec<_> = abs.trans.iter().filter(|t| !map.frozen_eqs.contains(t)).copied().collect();
            assert_eq!(user.len(), sys.trans.len(), "{name}");
            for (a, c) in abs.init.iter().zip(&sys.init).chain(user.iter().zip(&sys.trans)) {
                assert_eq!(map.concretize(&mut store, *a).unwrap(), *c, "{name}");
            }
            assert_eq!(map.concretize(&mut store, aprop.formula).unwrap(), prop.formula);
        }
    }
}

#[test]
fn equality_vocabulary_matches_the_mode() {
    for name in common::CORPUS {
        for mode in [Mode::Weak, Mode::Strong] {
            let mut store = TermStore::new();
            let (sys, prop) = common::load(&mut store, name);
            let (abs, aprop, map) = abstract_arrays(&mut store, &sys, prop, mode).unwrap();
            let mut roots = abs.init.clone();
            roots.extend(abs.trans.iter().filter(|t| !map.frozen_eqs.contains(t)));
            roots.push(aprop.formula);
            for r in roots {
                for u in store.subterms(r) {
                    match store.op(u) {
                        Some(Op::Apply(f)) if map.is_eq(f) => assert_eq!(mode, Mode::Weak, "{name}"),
                        Some(Op::Eq) => {
                            let s = store.sort_of(store.children(u)[0]);
                            if mode == Mode::Weak {
                                assert!(!map.is_abstract_array_sort(s), "{name}: {}", store.display(u));
                            }
                        }
                        _ => {}
                    }
                }
            }
            for &v in &abs.state_vars {
                assert!(!matches!(store.sort(store.var(v).sort), Sort::Array { .. }), "{name}");
            }
        }
    }
}

#[test]
fn abstraction_preserves_concrete_counterexamples() {
    let factory = common::factory();
    for name in common::CORPUS {
        let mut store = TermStore::new();
        let (sys, prop) = common::load(&mut store, name);
        let (abs, aprop, _) = abstract_arrays(&mut store, &sys, prop, Mode::Weak).unwrap();
        for k in 1..=4 {
            let o = UnrollOptions::default();
            if common::bmc_sat(&factory, &mut store, &sys, &prop, k, o) {
                assert!(common::bmc_sat(&factory, &mut store, &abs, &aprop, k, o), "{name} k={k}");
            }
        }
    }
}

#[test]
fn refined_bounds_stay_refuted() {
    let factory = common::factory();
    for name in ["running", "array_copy", "divergence"] {
        let mut store = TermStore::new();
        let (sys, prop) = common::load(&mut store, name);
        let (mut abs, mut aprop, mut map) = abstract_arrays(&mut store, &sys, prop, Mode::Weak).unwrap();
        let opts = RefineOptions::default();
        for k in 1..=4 {
            let out = refine_arrays(&factory, &mut store, &abs, aprop, &mut map, k, opts).unwrap();
            assert!(out.refined, "{name} k={k}");
            for r in &out.added_aux {
                if let AuxRecord::Prophecy { delay, .. } = r {
                    assert!(*delay < k, "{name} k={k} delay {delay}");
                }
            }
            abs = out.system;
            aprop = out.property;
            for j in 1..=k {
                let sat = common::bmc_sat(&factory, &mut store, &abs, &aprop, j, opts.unroll);
                assert!(!sat, "{name}: bound {j} reopened after refining {k}");
            }
        }
    }
}

#[test]
fn already_refuted_bound_changes_nothing() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "running");
    let (abs, aprop, mut map) = abstract_arrays(&mut store, &sys, prop, Mode::Strong).unwrap();
    let out = refine_arrays(&common::factory(), &mut store, &abs, aprop, &mut map, 1, RefineOptions::default()).unwrap();
    assert!(out.refined);
    assert!(out.added_aux.is_empty());
    assert!(out.added_lemmas.is_empty());
    assert_eq!(out.system.trans, abs.trans);
}

#[test]
fn genuine_counterexample_is_not_refined() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "write_read_unsafe");
    let (abs, aprop, mut map) = abstract_arrays(&mut store, &sys, prop, Mode::Weak).unwrap();
    let factory = common::factory();
    let o = RefineOptions::default();
    let mut k = 1;
    let (mut abs, mut aprop) = (abs, aprop);
    let out = loop {
        let out = refine_arrays(&factory, &mut store, &abs, aprop, &mut map, k, o).unwrap();
        if !out.refined {
            break out;
        }
        abs = out.system;
        aprop = out.property;
        k += 1;
        assert!(k <= 5, "no counterexample found");
    };
    let trace = out.trace.expect("counterexample trace");
    assert_eq!(trace.len() as u32, k);
    let ok = prophic::prover::replay_trace(&factory, &mut store, &sys, prop.original, &trace).unwrap();
    assert!(ok);
}

#[test]
fn refinement_without_reductions_still_refutes() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "running");
    let (abs, aprop, mut map) = abstract_arrays(&mut store, &sys, prop, Mode::Weak).unwrap();
    let opts = RefineOptions {
        prophecy_reduction: false,
        unsat_core_reduction: false,
        axiom_reduction: false,
        ..RefineOptions::default()
    };
    let out = refine_arrays(&common::factory(), &mut store, &abs, aprop, &mut map, 3, opts).unwrap();
    assert!(out.refined);
    assert!(!out.added_lemmas.is_empty());
}

fn instance(f: prophic::TermId) -> AxiomInstance {
    AxiomInstance {
        schema: Schema::WriteCase,
        formula: f,
        trigger: f,
        inst_index: None,
        classification: Classification::Consecutive,
    }
}

/// Reduces candidate upper bounds on `x@0`, `y@0` or their sum (`s`)
/// against the goal `x + y >= 10`.
fn reduce(bounds: &[(&str, i64)]) -> Option<Vec<usize>> {
    let mut store = TermStore::new();
    let int = store.int_sort();
    let mut sys = TransitionSystem::new();
    let x = store.new_var("x", int, VarKind::State).unwrap();
    let y = store.new_var("y", int, VarKind::State).unwrap();
    sys.add_state_var(&mut store, x);
    sys.add_state_var(&mut store, y);
    let (xt, yt) = (store.var_term(x), store.var_term(y));
    let sum = store.add(vec![xt, yt]).unwrap();
    let ten = store.int(10);
    let prop = Property::new(store.lt(sum, ten).unwrap());
    let u = bmc::unroll(&mut store, &sys, &prop, 1, &[], UnrollOptions::default()).unwrap();
    let cands: Vec<AxiomInstance> = bounds
        .iter()
        .map(|&(v, c)| {
            let t = match v {
                "s" => bmc::time_term(&mut store, sum, 0).unwrap(),
                _ => store.timed_term(store.var_by_name(v).unwrap(), 0),
            };
            let c = store.int(c);
            instance(store.lt(t, c).unwrap())
        })
        .collect();
    let factory = common::factory();
    let mut s = factory.open("ALL").unwrap();
    reduce_axioms(&mut s, &store, &u, &cands, false).unwrap()
}

#[test]
fn reduce_axioms_keeps_one_sufficient_candidate() {
    let kept = reduce(&[("s", 3), ("s", 4)]).unwrap();
    assert_eq!(kept.len(), 1);
    let kept = reduce(&[("x", 3), ("s", 9), ("y", 3)]).unwrap();
    assert!(kept == vec![1] || kept == vec![0, 2], "{kept:?}");
}

#[test]
fn reduce_axioms_keeps_jointly_required_candidates() {
    assert_eq!(reduce(&[("x", 5), ("y", 5)]), Some(vec![0, 1]));
}

#[test]
fn reduce_axioms_reports_insufficient_sets() {
    assert_eq!(reduce(&[("x", 8), ("y", 8)]), None);
    assert_eq!(reduce(&[]), Some(vec![]));
}
