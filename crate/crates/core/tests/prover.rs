mod common;

use prophic::abstraction::{abstract_arrays, Mode};
use prophic::bmc::UnrollOptions;
use prophic::prover::{self, Certificate, Proof, ProveOptions, ProveResult, ProverError};
use prophic::refiner::{refine_arrays, RefineOptions};
use prophic::TermStore;

#[test]
fn unrefined_abstraction_is_falsified_early() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "running");
    let (abs, aprop, _) = abstract_arrays(&mut store, &sys, prop, Mode::Strong).unwrap();
    let factory = common::factory();
    match prover::prove(&factory, &mut store, &abs, aprop, &ProveOptions::default()).unwrap() {
        ProveResult::Falsified { k, .. } => assert_eq!(k, 2),
        other => panic!("{other:?}"),
    }
    let o = UnrollOptions { assume_prestate: true };
    assert!(common::bmc_sat(&factory, &mut store, &abs, &aprop, 3, o));
}

#[test]
fn refined_abstraction_is_proven_with_a_checkable_certificate() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "running");
    let (mut abs, mut aprop, mut map) = abstract_arrays(&mut store, &sys, prop, Mode::Weak).unwrap();
    let factory = common::factory();
    let opts = ProveOptions::default();
    let mut rounds = 0;
    let proof = loop {
        match prover::prove(&factory, &mut store, &abs, aprop, &opts).unwrap() {
            ProveResult::Proven(Some(proof)) => break proof,
            ProveResult::Falsified { k, .. } => {
                let out = refine_arrays(&factory, &mut store, &abs, aprop, &mut map, k, RefineOptions::default()).unwrap();
                assert!(out.refined);
                abs = out.system;
                aprop = out.property;
            }
            other => panic!("{other:?}"),
        }
        rounds += 1;
        assert!(rounds < 10);
    };
    if let Certificate::KInductive { depth, .. } = proof.cert {
        assert!(depth <= 3);
    }
    assert!(prover::check_certificate(&factory, &mut store, &abs, aprop.formula, &proof).unwrap());
}

#[test]
fn prophecy_invariant_is_inductive_on_the_concrete_system() {
    let mut store = TermStore::new();
    let (mut sys, prop) = common::load(&mut store, "running");
    let ir = store.var_term(store.var_by_name("ir").unwrap());
    let (wprop, p) = sys.prophecize(&mut store, prop, ir, 1).unwrap();
    let h = sys.history_vars().next().unwrap();
    let a = store.var_term(store.var_by_name("a").unwrap());
    let dr = store.var_term(store.var_by_name("dr").unwrap());
    let (pt, ht) = (store.var_term(p), store.var_term(h));
    let k200 = store.int(200);
    let rd = store.read(a, pt).unwrap();
    let c1 = store.lt(rd, k200).unwrap();
    let same = store.eq(pt, ht).unwrap();
    let small = store.lt(dr, k200).unwrap();
    let c2 = store.implies(same, small).unwrap();
    let inv = store.and2(c1, c2).unwrap();
    let factory = common::factory();
    let proof = |inv| Proof {
        cert: Certificate::Inductive { inv },
        assumption: None,
    };
    assert!(prover::check_certificate(&factory, &mut store, &sys, wprop.formula, &proof(inv)).unwrap());
    // The bare property is not inductive.
    assert!(!prover::check_certificate(&factory, &mut store, &sys, wprop.formula, &proof(c2)).unwrap());
    let f = store.fls();
    assert!(!prover::check_certificate(&factory, &mut store, &sys, wprop.formula, &proof(f)).unwrap());
}

#[test]
fn trivial_invariant_fails_on_an_unsafe_system() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "running_unsafe");
    let t = store.tru();
    let proof = Proof {
        cert: Certificate::Inductive { inv: t },
        assumption: None,
    };
    let factory = common::factory();
    assert!(!prover::check_certificate(&factory, &mut store, &sys, prop.formula, &proof).unwrap());
}

#[test]
fn empty_trace_is_invalid() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "running");
    let factory = common::factory();
    assert!(matches!(
        prover::replay_trace(&factory, &mut store, &sys, prop.formula, &Vec::new()),
        Err(ProverError::InvalidTrace)
    ));
}

#[test]
fn spurious_abstract_trace_does_not_replay() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "running");
    let (abs, aprop, _) = abstract_arrays(&mut store, &sys, prop, Mode::Weak).unwrap();
    let factory = common::factory();
    // The abstract read is unconstrained at path length 2; replay the
    // abstract model's scalar values on the concrete system.
    let u = prophic::bmc::unroll(&mut store, &abs, &aprop, 2, &[], UnrollOptions { assume_prestate: true }).unwrap();
    let mut s = factory.open("ALL").unwrap();
    let model = match prophic::bmc::bmc_check(&mut s, &store, &u, prophic::smt::Want::Model).unwrap() {
        prophic::smt::CheckResult::Sat(m) => m,
        other => panic!("{other:?}"),
    };
    let mut trace = vec![Default::default(); 2];
    for &v in &sys.state_vars {
        for (n, state) in trace.iter_mut().enumerate() {
            let tv = store.timed(v, n as u32);
            if let Some(val) = model.scalar(tv) {
                let st: &mut std::collections::BTreeMap<_, _> = state;
                st.insert(v, val.clone());
            }
        }
    }
    assert!(!prover::replay_trace(&factory, &mut store, &sys, prop.formula, &trace).unwrap());
}
