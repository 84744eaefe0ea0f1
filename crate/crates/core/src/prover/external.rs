//! Runs an external model checker on the system written as VMT.
//!
//! The engine is invoked as `<engine> <file.vmt>` and must print
//! `safe`, `unsafe <k>` or `unknown` on its first line. After `safe`, the
//! remaining output may hold an invariant as an SMT-LIB term over the
//! variable names of the script.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::{Certificate, Proof, ProveOptions, ProveResult, ProverError};
use crate::model::CexModel;
use crate::sts::{Property, TransitionSystem};
use crate::terms::TermStore;
use crate::vmt;

pub(crate) fn prove_external(
    engine: &Path,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: Property,
    opts: &ProveOptions,
) -> Result<ProveResult, ProverError> {
    let mut sys = sys.clone();
    if opts.assume_prestate && prop.original != prop.formula {
        sys.trans.push(prop.original);
    }
    let text = vmt::emit_vmt(store, &sys, &[prop]);
    let file = tempfile::Builder::new()
        .suffix(".vmt")
        .tempfile()
        .map_err(|e| ProverError::Io(e.to_string()))?;
    std::fs::write(file.path(), text).map_err(|e| ProverError::Io(e.to_string()))?;
    let mut child = Command::new(engine)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| ProverError::EngineCrashed(format!("{}: {e}", engine.display())))?;
    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait().map_err(|e| ProverError::Io(e.to_string()))? {
            break status;
        }
        if opts.engine_timeout.is_some_and(|t| start.elapsed() > t) {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(ProveResult::Unknown("external engine timed out".into()));
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let mut out = String::new();
    if let Some(mut so) = child.stdout.take() {
        let _ = so.read_to_string(&mut out);
    }
    let mut err = String::new();
    if let Some(mut se) = child.stderr.take() {
        let _ = se.read_to_string(&mut err);
    }
    let mut lines = out.lines();
    let first = lines.next().unwrap_or("").trim().to_string();
    let mut words = first.split_whitespace();
    match (words.next(), words.next()) {
        (Some("safe"), _) => {
            let rest: String = lines.collect::<Vec<_>>().join("\n");
            if rest.trim().is_empty() {
                return Ok(ProveResult::Proven(None));
            }
            let inv = vmt::parse_term(store, &rest)
                .map_err(|e| ProverError::EngineCrashed(format!("unreadable invariant: {e}")))?;
            Ok(ProveResult::Proven(Some(Proof {
                cert: Certificate::Inductive { inv },
                assumption: (opts.assume_prestate && prop.original != prop.formula).then_some(prop.original),
            })))
        }
        (Some("unsafe"), Some(k)) => {
            let k: u32 = k
                .parse()
                .map_err(|_| ProverError::EngineCrashed(format!("bad bound in `{first}`")))?;
            Ok(ProveResult::Falsified {
                k: k.max(1),
                model: CexModel::default(),
            })
        }
        (Some("unknown"), _) => Ok(ProveResult::Unknown("external engine returned unknown".into())),
        _ => Err(ProverError::EngineCrashed(format!(
            "exit status {status}, output `{first}`{}",
            if err.is_empty() { String::new() } else { format!(", stderr: {}", err.trim()) }
        ))),
    }
}
