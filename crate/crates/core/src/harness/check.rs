use std::fmt;
use std::path::{Path, PathBuf};

use super::RunConfig;
use crate::error::{Error, Result};
use crate::history::{decode_records, records_for, History};
use crate::lin_check::{
    brute_force_linearizable_bounded, verify_records, Verdict, DEFAULT_MAX_OPS,
};

/// Sidecar records file for a history at `path`: the same name plus
/// `.records`.
pub fn records_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".records");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub path: PathBuf,
    pub operations: usize,
    /// `None` when the history was too large for brute force.
    pub brute_force: Option<bool>,
    /// `None` when no records sidecar was found.
    pub explicit: Option<Verdict>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.brute_force != Some(false) && self.explicit.as_ref().is_none_or(Verdict::is_pass)
    }
}

/// Checks the history at `cfg.input` with brute force when it is small
/// enough and with the explicit verifier when a records sidecar exists.
pub fn cmd_check(cfg: &RunConfig) -> Result<CheckReport> {
    let path = cfg
        .input
        .clone()
        .ok_or_else(|| Error::contract("check needs a history file"))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::parse(0, format!("cannot read {}: {e}", path.display())))?;
    let history = History::decode(&text)?;
    let ops = history.operations()?;
    let completed = ops.iter().filter(|o| o.output.is_some()).count();

    let bound = if cfg.force_large {
        usize::MAX
    } else {
        DEFAULT_MAX_OPS
    };
    let brute_force = if completed <= bound {
        Some(brute_force_linearizable_bounded(&history, bound)?.is_linearizable())
    } else {
        None
    };

    let sidecar = records_path(&path);
    let explicit = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar)
            .map_err(|e| Error::parse(0, format!("cannot read {}: {e}", sidecar.display())))?;
        let lines = decode_records(&text)?;
        let records = records_for(&history, &lines)?;
        Some(verify_records(&records, &history)?)
    } else {
        None
    };

    if brute_force.is_none() && explicit.is_none() {
        return Err(Error::Refusal {
            what: "completed operations without a records file",
            count: completed as u128,
            bound: DEFAULT_MAX_OPS as u128,
        });
    }
    Ok(CheckReport {
        path,
        operations: ops.len(),
        brute_force,
        explicit,
    })
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "check: {} operations={}",
            self.path.display(),
            self.operations
        )?;
        match self.brute_force {
            Some(true) => writeln!(f, "  brute-force: linearizable")?,
            Some(false) => writeln!(f, "  brute-force: NOT linearizable")?,
            None => writeln!(f, "  brute-force: skipped (too large)")?,
        }
        match &self.explicit {
            Some(v) => writeln!(f, "  explicit-verifier: {v}")?,
            None => writeln!(f, "  explicit-verifier: skipped (no records file)")?,
        }
        write!(f, "verdict={}", if self.passed() { "pass" } else { "fail" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Mode;

    fn check_text(history: &str, records: Option<&str>) -> Result<CheckReport> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.txt");
        std::fs::write(&path, history).unwrap();
        if let Some(r) = records {
            std::fs::write(records_path(&path), r).unwrap();
        }
        let mut cfg = RunConfig::new(Mode::Check);
        cfg.input = Some(path);
        cmd_check(&cfg)
    }

    #[test]
    fn pass_and_fail() {
        let ok = "# swap-history v1 init=0\n0 0 0 inv 1\n1 1 0 inv 1\n2 0 0 res 0\n3 1 0 res 1\n";
        assert!(check_text(ok, None).unwrap().passed());
        let bad = "# swap-history v1 init=0\n0 0 0 inv 1\n1 1 0 inv 1\n2 0 0 res 1\n3 1 0 res 1\n";
        assert!(!check_text(bad, None).unwrap().passed());
        assert!(check_text("", None).unwrap().passed());
    }

    #[test]
    fn with_records() {
        let h = "# swap-history v1 init=0\n0 0 0 inv 1\n1 1 0 inv 1\n2 0 0 res 0\n3 1 0 res 1\n";
        let r = "# swap-records v1\n0 0 1 0 3 3 0\n1 0 1 1 4 3 1\n";
        let rep = check_text(h, Some(r)).unwrap();
        assert_eq!(rep.explicit, Some(Verdict::Pass));
        let tampered = "# swap-records v1\n0 0 1 1 3 3 0\n1 0 1 0 4 3 1\n";
        assert!(!check_text(h, Some(tampered)).unwrap().passed());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            check_text("nonsense\n", None),
            Err(Error::Parse { line: 1, .. })
        ));
        let mut big = String::from("# swap-history v1 init=0\n");
        for k in 0..13 {
            big.push_str(&format!(
                "{} 0 {k} inv 0\n{} 0 {k} res 0\n",
                2 * k,
                2 * k + 1
            ));
        }
        assert!(matches!(check_text(&big, None), Err(Error::Refusal { .. })));
    }
}
