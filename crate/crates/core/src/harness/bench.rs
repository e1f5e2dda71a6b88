use std::collections::BTreeMap;
use std::fmt;

use super::{backend_name, run_threads, RunConfig};
use crate::base_objects::Backend;
use crate::error::{Error, Result};
use crate::swap::SwapObject;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Percentiles {
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
}

impl Percentiles {
    /// Nearest-rank percentiles; `None` for an empty sample.
    pub fn of(mut sample: Vec<u64>) -> Option<Self> {
        if sample.is_empty() {
            return None;
        }
        sample.sort_unstable();
        let rank =
            |p: f64| sample[((p * sample.len() as f64).ceil() as usize).clamp(1, sample.len()) - 1];
        Some(Percentiles {
            p50: rank(0.50),
            p90: rank(0.90),
            p99: rank(0.99),
            max: *sample.last().expect("non-empty"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendBench {
    pub backend: Backend,
    pub swaps: usize,
    pub base_ops: BTreeMap<u32, u64>,
    /// Native-unit steps per swap (register accesses for the tree).
    pub register_ops: BTreeMap<u64, u64>,
    /// For the tree: one read and one write of depth+1 accesses each plus the
    /// test-and-set.
    pub register_ops_bound: Option<u64>,
    pub latency_ns: Option<Percentiles>,
    pub capacity_error: Option<Error>,
}

impl BackendBench {
    pub fn passed(&self) -> bool {
        self.capacity_error.is_none()
            && self.base_ops.keys().all(|k| *k == 2 || *k == 3)
            && self.register_ops_bound.is_none_or(|bound| {
                self.register_ops
                    .keys()
                    .next_back()
                    .is_none_or(|m| *m <= bound)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchReport {
    pub procs: usize,
    pub ops_per_proc: usize,
    pub backends: Vec<BackendBench>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.backends.iter().all(BackendBench::passed)
    }

    pub fn capacity_error(&self) -> Option<&Error> {
        self.backends.iter().find_map(|b| b.capacity_error.as_ref())
    }
}

/// Measures both backends on the configured workload.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchReport> {
    let inputs = cfg
        .patterns()
        .first()
        .copied()
        .unwrap_or(super::InputPattern::Random)
        .inputs(cfg.procs, cfg.ops_per_proc, cfg.seed);
    let backends = [
        Backend::Atomic,
        Backend::RegTree {
            capacity: cfg.tree_capacity(),
        },
    ];
    let mut out = Vec::new();
    for backend in backends {
        let obj = SwapObject::new(cfg.init, backend)?;
        let register_ops_bound = match backend {
            Backend::Atomic => None,
            Backend::RegTree { capacity } => Some(2 * (capacity.trailing_zeros() as u64 + 1) + 1),
        };
        let mut bench = BackendBench {
            backend,
            swaps: 0,
            base_ops: BTreeMap::new(),
            register_ops: BTreeMap::new(),
            register_ops_bound,
            latency_ns: None,
            capacity_error: None,
        };
        match run_threads(&obj, &inputs, true) {
            Ok(run) => {
                bench.swaps = run.records.len();
                for r in &run.records {
                    *bench.base_ops.entry(r.base_ops).or_default() += 1;
                    *bench.register_ops.entry(r.register_ops).or_default() += 1;
                }
                bench.latency_ns = Percentiles::of(run.latencies_ns);
            }
            Err(e @ Error::Capacity { .. }) => bench.capacity_error = Some(e),
            Err(e) => return Err(e),
        }
        out.push(bench);
    }
    Ok(BenchReport {
        procs: cfg.procs,
        ops_per_proc: cfg.ops_per_proc,
        backends: out,
    })
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bench: procs={} ops={}", self.procs, self.ops_per_proc)?;
        for b in &self.backends {
            writeln!(f, "  backend={} swaps={}", backend_name(b.backend), b.swaps)?;
            if let Some(e) = &b.capacity_error {
                writeln!(f, "    capacity exhausted: {e}")?;
                continue;
            }
            let hist: Vec<String> = b.base_ops.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            writeln!(f, "    base-ops histogram [{}]", hist.join(" "))?;
            if let Some(bound) = b.register_ops_bound {
                let hist: Vec<String> = b
                    .register_ops
                    .iter()
                    .map(|(k, v)| format!("{k}:{v}"))
                    .collect();
                writeln!(
                    f,
                    "    register-ops histogram [{}] bound={bound}",
                    hist.join(" ")
                )?;
            }
            if let Some(p) = b.latency_ns {
                writeln!(
                    f,
                    "    latency ns p50={} p90={} p99={} max={}",
                    p.p50, p.p90, p.p99, p.max
                )?;
            }
        }
        write!(f, "verdict={}", if self.passed() { "pass" } else { "fail" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Mode;

    #[test]
    fn histogram_support() {
        let mut cfg = RunConfig::new(Mode::Bench);
        cfg.procs = 2;
        cfg.ops_per_proc = 2_000;
        cfg.capacity = Some(1 << 16);
        let r = cmd_bench(&cfg).unwrap();
        assert!(r.passed(), "{r}");
        for b in &r.backends {
            assert!(b.base_ops.keys().all(|k| *k == 2 || *k == 3));
        }
        assert_eq!(r.backends[1].register_ops_bound, Some(35));
    }

    #[test]
    fn zero_ops_empty_histogram() {
        let mut cfg = RunConfig::new(Mode::Bench);
        cfg.procs = 2;
        cfg.ops_per_proc = 0;
        let r = cmd_bench(&cfg).unwrap();
        assert!(r
            .backends
            .iter()
            .all(|b| b.base_ops.is_empty() && b.latency_ns.is_none()));
    }

    #[test]
    fn capacity_exhaustion_is_reported() {
        let mut cfg = RunConfig::new(Mode::Bench);
        cfg.procs = 1;
        cfg.ops_per_proc = 100;
        cfg.capacity = Some(8);
        let r = cmd_bench(&cfg).unwrap();
        assert!(!r.passed());
        assert!(matches!(r.capacity_error(), Some(Error::Capacity { .. })));
    }

    #[test]
    fn percentiles() {
        let p = Percentiles::of((1..=100).collect()).unwrap();
        assert_eq!((p.p50, p.p90, p.p99, p.max), (50, 90, 99, 100));
        assert!(Percentiles::of(vec![]).is_none());
    }
}
