mod common;

use prophic::abstraction::{abstract_arrays, Mode};
use prophic::bmc::UnrollOptions;
use prophic::vmt::{self, VmtError};
use prophic::TermStore;

const HEADER: &str = "(declare-fun x () Int)\n(declare-fun x.n () Int)\n(define-fun .x () Int (! x :next x.n))\n";

#[test]
fn running_example_has_the_expected_variables() {
    let mut store = TermStore::new();
    let (sys, _) = common::load(&mut store, "running");
    let mut names: Vec<&str> = sys.state_vars.iter().map(|&v| store.var(v).name.as_str()).collect();
    names.sort();
    assert_eq!(names, ["a", "dr", "dw", "ir", "iw"]);
    assert!(sys.input_vars.is_empty());
    assert_eq!(sys.init.len(), 2);
    assert_eq!(sys.trans.len(), 2);
}

#[test]
fn undeclared_next_partner_makes_an_input() {
    let mut store = TermStore::new();
    let (sys, _) = common::load(&mut store, "divergence");
    let mut inputs: Vec<&str> = sys.input_vars.iter().map(|&v| store.var(v).name.as_str()).collect();
    inputs.sort();
    assert_eq!(inputs, ["i0", "i1", "ir"]);
}

#[test]
fn emit_then_parse_preserves_bmc_verdicts() {
    let factory = common::factory();
    for name in common::CORPUS {
        let mut store = TermStore::new();
        let (sys, prop) = common::load(&mut store, name);
        let text = vmt::emit_vmt(&mut store, &sys, &[prop]);
        let mut store2 = TermStore::new();
        let back = vmt::parse_vmt(&mut store2, &text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
        let prop2 = back.property(0).unwrap();
        assert_eq!(back.system.state_vars.len(), sys.state_vars.len(), "{name}");
        assert_eq!(back.system.input_vars.len(), sys.input_vars.len(), "{name}");
        for k in 1..=3 {
            let a = common::bmc_sat(&factory, &mut store, &sys, &prop, k, UnrollOptions::default());
            let b = common::bmc_sat(&factory, &mut store2, &back.system, &prop2, k, UnrollOptions::default());
            assert_eq!(a, b, "{name} at k={k}");
        }
    }
}

#[test]
fn abstract_system_emits_sorts_and_functions() {
    let mut store = TermStore::new();
    let (sys, prop) = common::load(&mut store, "running");
    let (abs, aprop, map) = abstract_arrays(&mut store, &sys, prop, Mode::Weak).unwrap();
    let text = vmt::emit_vmt(&mut store, &abs, &[aprop]);
    assert!(text.contains("(declare-sort "), "{text}");
    let ops = map.sorts.values().next().unwrap();
    for f in [ops.read, ops.write] {
        let name = &store.fun(f).name;
        assert!(text.contains(&format!("(declare-fun {}", prophic::terms::quote_symbol(name))), "{name}");
    }
    let mut store2 = TermStore::new();
    let back = vmt::parse_vmt(&mut store2, &text).unwrap();
    assert_eq!(back.system.trans.len(), abs.trans.len());
}

#[test]
fn auxiliary_variables_survive_emission() {
    let mut store = TermStore::new();
    let (mut sys, prop) = common::load(&mut store, "running");
    let ir = store.var_term(store.var_by_name("ir").unwrap());
    let (prop, _) = sys.prophecize(&mut store, prop, ir, 1).unwrap();
    let text = vmt::emit_vmt(&mut store, &sys, &[prop]);
    let mut store2 = TermStore::new();
    let back = vmt::parse_vmt(&mut store2, &text).unwrap();
    assert_eq!(back.system.state_vars.len(), 7);
    let frozen = back
        .system
        .state_vars
        .iter()
        .filter(|&&v| back.system.is_frozen(&store2, v).unwrap())
        .count();
    assert_eq!(frozen, 1);
}

#[test]
fn quantified_transition_is_rejected() {
    let text = format!(
        "{HEADER}(define-fun .init () Bool (! (= x 0) :init true))\n\
         (define-fun .trans () Bool (! (forall ((y Int)) (< x.n y)) :trans true))\n\
         (define-fun .p () Bool (! (>= x 0) :invar-property 0))\n"
    );
    let mut store = TermStore::new();
    assert!(matches!(
        vmt::parse_vmt(&mut store, &text),
        Err(VmtError::UnsupportedLogic { .. })
    ));
}

#[test]
fn two_init_sections_are_rejected() {
    let text = format!(
        "{HEADER}(define-fun .i1 () Bool (! (= x 0) :init true))\n\
         (define-fun .i2 () Bool (! (= x 1) :init true))\n\
         (define-fun .trans () Bool (! (= x.n x) :trans true))\n\
         (define-fun .p () Bool (! (>= x 0) :invar-property 0))\n"
    );
    let mut store = TermStore::new();
    assert!(matches!(
        vmt::parse_vmt(&mut store, &text),
        Err(VmtError::DuplicateSection(_))
    ));
}

#[test]
fn missing_property_is_reported() {
    let text = format!(
        "{HEADER}(define-fun .init () Bool (! (= x 0) :init true))\n\
         (define-fun .trans () Bool (! (= x.n x) :trans true))\n"
    );
    let mut store = TermStore::new();
    assert!(matches!(
        vmt::parse_vmt(&mut store, &text),
        Err(VmtError::MissingSection(_))
    ));
}

#[test]
fn bitvector_indices_are_rejected() {
    let text = "(declare-fun a () (Array (_ BitVec 8) Int))\n(declare-fun a.n () (Array (_ BitVec 8) Int))\n\
                (define-fun .a () (Array (_ BitVec 8) Int) (! a :next a.n))\n\
                (define-fun .init () Bool (! true :init true))\n\
                (define-fun .trans () Bool (! (= a.n a) :trans true))\n\
                (define-fun .p () Bool (! true :invar-property 0))\n";
    let mut store = TermStore::new();
    let err = vmt::parse_vmt(&mut store, text).unwrap_err();
    assert!(matches!(err, VmtError::UnsupportedLogic { .. }), "{err}");
    assert!(err.to_string().contains("infinite"), "{err}");
}

#[test]
fn properties_are_selected_by_index() {
    let text = format!(
        "{HEADER}(define-fun .init () Bool (! (= x 0) :init true))\n\
         (define-fun .trans () Bool (! (= x.n (+ x 1)) :trans true))\n\
         (define-fun .p0 () Bool (! (>= x 0) :invar-property 0))\n\
         (define-fun .p3 () Bool (! (< x 5) :invar-property 3))\n"
    );
    let mut store = TermStore::new();
    let doc = vmt::parse_vmt(&mut store, &text).unwrap();
    assert!(doc.property(0).is_some());
    assert!(doc.property(3).is_some());
    assert!(doc.property(1).is_none());
    let p3 = doc.property(3).unwrap();
    assert_eq!(store.display(p3.formula).to_string(), "(< x 5)");
}

#[test]
fn syntax_errors_carry_a_position() {
    let mut store = TermStore::new();
    let err = vmt::parse_vmt(&mut store, "(declare-fun x () Int)\n(define-fun .p () Bool (! (< x 1 :invar-property 0))").unwrap_err();
    match err {
        VmtError::ParseError { line, .. } => assert!(line >= 1),
        e => panic!("{e}"),
    }
}
