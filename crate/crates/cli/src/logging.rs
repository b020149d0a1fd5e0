use std::collections::BTreeSet;
use std::sync::{Mutex, OnceLock};

use log::{Level, LevelFilter, Log, Metadata, Record};

/// Echoes records to stderr and keeps library warnings for `run.log`.
struct Capture {
    echo: LevelFilter,
    warnings: Mutex<BTreeSet<String>>,
}

static LOGGER: OnceLock<Capture> = OnceLock::new();

impl Log for Capture {
    fn enabled(&self, m: &Metadata) -> bool {
        m.level() <= Level::Warn || m.level() <= self.echo
    }

    fn log(&self, r: &Record) {
        if !self.enabled(r.metadata()) {
            return;
        }
        let line = format!("{}: {}", r.target(), r.args());
        let fresh = r.level() > Level::Warn
            || self.warnings.lock().expect("log lock").insert(line.clone());
        if fresh && r.level() <= self.echo {
            eprintln!("{line}");
        }
    }

    fn flush(&self) {}
}

pub fn init(verbosity: u8) {
    let echo = match verbosity {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        2 => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    let logger = LOGGER.get_or_init(|| Capture {
        echo,
        warnings: Mutex::new(BTreeSet::new()),
    });
    if log::set_logger(logger).is_ok() {
        log::set_max_level(echo.max(LevelFilter::Warn));
    }
}

/// Distinct warnings seen so far, sorted so that parallel runs log the same
/// text.
pub fn warnings() -> Vec<String> {
    LOGGER
        .get()
        .map(|l| l.warnings.lock().expect("log lock").iter().cloned().collect())
        .unwrap_or_default()
}
