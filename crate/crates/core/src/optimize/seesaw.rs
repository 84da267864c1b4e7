//! Alternating see-saw search over processes and instruments.
//!
//! Per restart: random instruments, `W ← OptW`, then `sweeps` rounds of
//! `inner` (OptB, OptA) alternations followed by OptW, keeping the best
//! tuple. Restarts run in parallel with one ChaCha stream each.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::channels::{random_instrument, InstrumentSet};
use crate::error::{Error, Result};
use crate::operator_algebra::SystemLabel;
use crate::process::{born_probabilities, CorrelationFunctional, ProcessMatrix, Theory};

use super::problems::{build_opt_instrument, build_opt_w, Party};
use super::sdp::{solve, Backend, SolverTolerances};

#[derive(Clone, Debug, PartialEq)]
pub struct SeesawConfig {
    pub seed: u64,
    pub restarts: usize,
    pub sweeps: usize,
    pub inner: usize,
    pub theory: Theory,
    pub functional: CorrelationFunctional,
    pub backend: Backend,
    pub tolerances: SolverTolerances,
    /// Worker threads for restarts; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Legs `A1, A2, B1, B2`.
    pub legs: [SystemLabel; 4],
}

impl SeesawConfig {
    /// Seed 1, 10 restarts, 20 sweeps, 5 inner updates on qubit legs.
    pub fn new(theory: Theory, functional: CorrelationFunctional) -> Self {
        SeesawConfig {
            seed: 1,
            restarts: 10,
            sweeps: 20,
            inner: 5,
            theory,
            functional,
            backend: Backend::Clarabel,
            tolerances: SolverTolerances::default(),
            threads: None,
            legs: ["A1", "A2", "B1", "B2"].map(|n| SystemLabel::new(n, 2)),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.inner == 0 {
            return Err(Error::Unsupported("restarts and inner updates must be at least 1".into()));
        }
        if self.functional.outcomes.len() != 2 {
            return Err(Error::Unsupported("see-saw is bipartite".into()));
        }
        Ok(())
    }
}

/// Values recorded by one restart.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartTrace {
    pub restart: usize,
    /// Functional value after the initial OptW and after every sweep; a
    /// failed sweep records the incumbent.
    pub values: Vec<f64>,
    pub failed_sweeps: usize,
    /// Set when no OptW call succeeded.
    pub discarded: bool,
}

impl RestartTrace {
    pub fn best_so_far(&self) -> Vec<f64> {
        self.values
            .iter()
            .scan(f64::NEG_INFINITY, |m, &v| {
                *m = m.max(v);
                Some(*m)
            })
            .collect()
    }

    pub fn best(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeesawResult {
    pub w: ProcessMatrix,
    pub ma: InstrumentSet,
    pub mb: InstrumentSet,
    pub value: f64,
    pub restart: usize,
    pub traces: Vec<RestartTrace>,
}

#[derive(Clone)]
struct Tuple {
    w: ProcessMatrix,
    ma: InstrumentSet,
    mb: InstrumentSet,
    value: f64,
}

/// Functional value recomputed through the Born rule.
pub fn evaluate(
    w: &ProcessMatrix,
    ma: &InstrumentSet,
    mb: &InstrumentSet,
    functional: &CorrelationFunctional,
) -> Result<f64> {
    functional.evaluate(&born_probabilities(w, ma, mb)?)
}

struct Stepper<'a> {
    theory: &'a Theory,
    functional: &'a CorrelationFunctional,
    backend: Backend,
    tol: &'a SolverTolerances,
}

impl Stepper<'_> {
    fn opt_w(&self, ma: &InstrumentSet, mb: &InstrumentSet) -> Result<ProcessMatrix> {
        let p = build_opt_w(ma, mb, self.theory, self.functional)?;
        p.extract(&solve(&p.sdp, self.backend, self.tol)?)
    }

    fn opt_instrument(&self, party: Party, w: &ProcessMatrix, other: &InstrumentSet, like: &InstrumentSet) -> Result<InstrumentSet> {
        let p = build_opt_instrument(party, w, other, self.theory, self.functional, like.settings(), like.outcomes())?;
        p.extract(&solve(&p.sdp, self.backend, self.tol)?)
    }

    /// `inner` rounds of (OptB, OptA) for a fixed process.
    fn instruments(&self, w: &ProcessMatrix, ma: &InstrumentSet, mb: &InstrumentSet, inner: usize) -> Result<(InstrumentSet, InstrumentSet)> {
        let (mut ma, mut mb) = (ma.clone(), mb.clone());
        for _ in 0..inner {
            mb = self.opt_instrument(Party::B, w, &ma, &mb)?;
            ma = self.opt_instrument(Party::A, w, &mb, &ma)?;
        }
        Ok((ma, mb))
    }
}

fn run_restart(cfg: &SeesawConfig, restart: usize) -> (RestartTrace, Option<Tuple>) {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut trace = RestartTrace { restart, values: Vec::new(), failed_sweeps: 0, discarded: false };
    let field = cfg.theory.field();
    let [a1, a2, b1, b2] = &cfg.legs;
    let (no, ns) = (&cfg.functional.outcomes, &cfg.functional.settings);
    let init = random_instrument("A", field, ns[0], no[0], a1, a2, &mut rng)
        .and_then(|ma| Ok((ma, random_instrument("B", field, ns[1], no[1], b1, b2, &mut rng)?)));
    let step = Stepper { theory: &cfg.theory, functional: &cfg.functional, backend: cfg.backend, tol: &cfg.tolerances };
    let first = init.and_then(|(ma, mb)| {
        let w = step.opt_w(&ma, &mb)?;
        let value = evaluate(&w, &ma, &mb, &cfg.functional)?;
        Ok(Tuple { w, ma, mb, value })
    });
    let mut best = match first {
        Ok(t) => t,
        Err(_) => {
            trace.discarded = true;
            return (trace, None);
        }
    };
    trace.values.push(best.value);
    let mut current = best.clone();
    for _ in 0..cfg.sweeps {
        let sweep = step.instruments(&current.w, &current.ma, &current.mb, cfg.inner).and_then(|(ma, mb)| {
            let w = step.opt_w(&ma, &mb)?;
            let value = evaluate(&w, &ma, &mb, &cfg.functional)?;
            Ok(Tuple { w, ma, mb, value })
        });
        match sweep {
            Ok(t) => {
                if t.value > best.value {
                    best = t.clone();
                }
                trace.values.push(t.value);
                current = t;
            }
            Err(_) => {
                trace.failed_sweeps += 1;
                current = best.clone();
                trace.values.push(best.value);
            }
        }
    }
    (trace, Some(best))
}

/// Runs the search; ties between restarts go to the lower index.
pub fn seesaw(cfg: &SeesawConfig) -> Result<SeesawResult> {
    cfg.validate()?;
    let run = || (0..cfg.restarts).into_par_iter().map(|r| run_restart(cfg, r)).collect::<Vec<_>>();
    let outcomes = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::SearchFailed(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut traces = Vec::with_capacity(outcomes.len());
    let mut best: Option<(usize, Tuple)> = None;
    for (trace, tuple) in outcomes {
        if let Some(t) = tuple {
            if best.as_ref().is_none_or(|(_, b)| t.value > b.value) {
                best = Some((trace.restart, t));
            }
        }
        traces.push(trace);
    }
    let (restart, t) =
        best.ok_or_else(|| Error::SearchFailed(format!("all {} restarts failed to solve OptW", cfg.restarts)))?;
    Ok(SeesawResult { w: t.w, ma: t.ma, mb: t.mb, value: t.value, restart, traces })
}

/// Alternating instrument optimization for a fixed process, starting from
/// the given instruments; returns the improved instruments and their value.
pub fn optimize_instruments(
    w: &ProcessMatrix,
    ma: &InstrumentSet,
    mb: &InstrumentSet,
    theory: &Theory,
    functional: &CorrelationFunctional,
    rounds: usize,
    backend: Backend,
    tol: &SolverTolerances,
) -> Result<(InstrumentSet, InstrumentSet, f64)> {
    let step = Stepper { theory, functional, backend, tol };
    let (ma, mb) = step.instruments(w, ma, mb, rounds)?;
    let value = evaluate(w, &ma, &mb, functional)?;
    Ok((ma, mb, value))
}
