#![allow(dead_code)]

use std::path::PathBuf;

use prophic::smt::{SolverConfig, SolverFactory};
use prophic::sts::{Property, TransitionSystem};
use prophic::vmt;
use prophic::TermStore;

pub const CORPUS: &[&str] = &[
    "running",
    "running_unsafe",
    "divergence",
    "array_init",
    "array_init_unsafe",
    "array_copy",
    "array_find",
    "const_read",
    "equal_arrays",
    "write_read_unsafe",
    "random0",
    "random1",
    "random2",
    "random3",
];

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(format!("{name}.vmt"))
}

pub fn load(store: &mut TermStore, name: &str) -> (TransitionSystem, Property) {
    let text = std::fs::read_to_string(corpus_path(name)).unwrap();
    let problem = vmt::parse_vmt(store, &text).unwrap();
    let prop = problem.property(0).unwrap();
    (problem.system, prop)
}

pub fn factory() -> SolverFactory {
    SolverFactory::new(SolverConfig::resolve(None))
}

use prophic::bmc::{self, UnrollOptions};
use prophic::smt::Want;
use prophic::{Op, TermId};
use rand::Rng;

/// Read and write indices of `sys` that are valid auxiliary targets.
pub fn index_targets(store: &TermStore, sys: &TransitionSystem, prop: &Property) -> Vec<TermId> {
    let mut roots = sys.init.clone();
    roots.extend(&sys.trans);
    roots.push(prop.formula);
    let mut out = std::collections::BTreeSet::new();
    for r in roots {
        for u in store.subterms(r) {
            if matches!(store.op(u), Some(Op::Read | Op::Write)) {
                let i = store.children(u)[1];
                let ok = store.free_vars(i).into_iter().all(|v| sys.is_state(v) || sys.is_input(v));
                if ok && !store.free_vars(i).is_empty() {
                    out.insert(i);
                }
            }
        }
    }
    out.into_iter().collect()
}

pub fn bmc_sat(
    factory: &SolverFactory,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: &Property,
    k: u32,
    opts: UnrollOptions,
) -> bool {
    let u = bmc::unroll(store, sys, prop, k, &[], opts).unwrap();
    let mut s = factory.open("ALL").unwrap();
    let r = bmc::bmc_check(&mut s, store, &u, Want::Nothing).unwrap();
    assert!(r.is_sat() || r.is_unsat(), "solver gave up at k={k}");
    r.is_sat()
}

/// Outcome of one delay/prophecize trial.
#[derive(Debug)]
pub struct Trial {
    pub system: &'static str,
    pub target: String,
    pub n: u32,
    pub k: u32,
    pub base: bool,
    pub delayed: bool,
    pub prophesied: bool,
}

impl Trial {
    pub fn agrees(&self) -> bool {
        self.base == self.delayed && self.base == self.prophesied
    }
}

/// Picks a corpus system, an index target, a delay `n <= 2` and a bound
/// `k <= 4`, and decides BMC before and after each transformation.
pub fn equisat_trial(factory: &SolverFactory, rng: &mut impl Rng) -> Trial {
    loop {
        let name = CORPUS[rng.gen_range(0..CORPUS.len())];
        let mut store = TermStore::new();
        let (sys, prop) = load(&mut store, name);
        let targets = index_targets(&store, &sys, &prop);
        if targets.is_empty() {
            continue;
        }
        let t = targets[rng.gen_range(0..targets.len())];
        let n = rng.gen_range(0..=2u32);
        let k = rng.gen_range(1..=4u32);
        let opts = UnrollOptions::default();
        let base = bmc_sat(factory, &mut store, &sys, &prop, k, opts);
        let mut dsys = sys.clone();
        if n > 0 {
            dsys.delay(&mut store, t, n).unwrap();
        }
        let delayed = bmc_sat(factory, &mut store, &dsys, &prop, k, opts);
        let mut psys = sys.clone();
        let (pprop, _) = psys.prophecize(&mut store, prop, t, n).unwrap();
        let prophesied = bmc_sat(factory, &mut store, &psys, &pprop, k, opts);
        return Trial {
            system: name,
            target: store.display(t).to_string(),
            n,
            k,
            base,
            delayed,
            prophesied,
        };
    }
}
