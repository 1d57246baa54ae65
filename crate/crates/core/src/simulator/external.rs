//! File-exchange adapter for external electromagnetic solvers.
//!
//! A request file (design record + sweep) is written into the exchange
//! directory, the configured command is invoked with the request and reply
//! paths appended to its argument list, and the reply is parsed as either a
//! two-column CSV (`freq_GHz,S11_dB`) or a one-port Touchstone file.

use super::{CostLedger, Fidelity, Response, Simulator, SimulatorError, SweepSpec};
use crate::geometry::{DesignRecord, DesignVector};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// Solver executable; invoked as `command [args..] <request> <reply>`.
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub exchange_dir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    600.0
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestFile {
    design: DesignRecord,
    sweep: SweepSpec,
}

/// Invoke the external solver once and parse its reply. The ledger entry is
/// recorded by the caller; this function returns the measured wall time in
/// the response's `cost_units`.
pub fn run_external(
    x: &DesignVector,
    sweep: &SweepSpec,
    cfg: &AdapterConfig,
) -> Result<Response, SimulatorError> {
    std::fs::create_dir_all(&cfg.exchange_dir)?;
    let request_path = cfg.exchange_dir.join("request.json");
    let reply_path = cfg.exchange_dir.join("reply.dat");
    let request = RequestFile {
        design: DesignRecord::from(x),
        sweep: *sweep,
    };
    std::fs::write(
        &request_path,
        serde_json::to_string_pretty(&request).expect("serializable request"),
    )?;
    let _ = std::fs::remove_file(&reply_path);

    let started = Instant::now();
    let mut child = Command::new(&cfg.command)
        .args(&cfg.args)
        .arg(&request_path)
        .arg(&reply_path)
        .spawn()?;
    loop {
        if let Some(status) = child.try_wait()? {
            if !status.success() {
                return Err(SimulatorError::ParseError {
                    line: 0,
                    message: format!("solver exited with {status}"),
                });
            }
            break;
        }
        if started.elapsed().as_secs_f64() > cfg.timeout_secs {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SimulatorError::AdapterTimeout(cfg.timeout_secs));
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    let wall = started.elapsed().as_secs_f64();
    let text = std::fs::read_to_string(&reply_path)?;
    let (freqs, levels) = parse_reply(&text)?;
    Ok(Response {
        freqs,
        levels,
        fidelity: Fidelity::High,
        cost_units: wall,
    })
}

/// Parse a solver reply: Touchstone v1 when an option line is present,
/// otherwise CSV with optional header and '#'-prefixed comments.
pub fn parse_reply(text: &str) -> Result<(Vec<f64>, Vec<f64>), SimulatorError> {
    if touchstone_option_line(text).is_some() {
        parse_touchstone(text)
    } else {
        parse_csv(text)
    }
}

fn touchstone_option_line(text: &str) -> Option<(f64, TsFormat)> {
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let tokens: Vec<String> = rest.split_whitespace().map(str::to_uppercase).collect();
            let mut unit = None;
            let mut format = None;
            for t in &tokens {
                match t.as_str() {
                    "HZ" => unit = Some(1e-9),
                    "KHZ" => unit = Some(1e-6),
                    "MHZ" => unit = Some(1e-3),
                    "GHZ" => unit = Some(1.0),
                    "DB" => format = Some(TsFormat::Db),
                    "MA" => format = Some(TsFormat::Ma),
                    "RI" => format = Some(TsFormat::Ri),
                    _ => {}
                }
            }
            if unit.is_some() || format.is_some() {
                // Touchstone defaults: GHz, MA.
                return Some((unit.unwrap_or(1.0), format.unwrap_or(TsFormat::Ma)));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy)]
enum TsFormat {
    Db,
    Ma,
    Ri,
}

fn parse_touchstone(text: &str) -> Result<(Vec<f64>, Vec<f64>), SimulatorError> {
    let (unit, format) = touchstone_option_line(text).expect("checked by caller");
    let mut freqs = Vec::new();
    let mut levels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(SimulatorError::ParseError {
                line: idx + 1,
                message: format!("expected 3 columns, got {}: {raw:?}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, SimulatorError> {
            s.parse().map_err(|_| SimulatorError::ParseError {
                line: idx + 1,
                message: format!("not a number: {s:?}"),
            })
        };
        let f = parse(fields[0])? * unit;
        let (a, b) = (parse(fields[1])?, parse(fields[2])?);
        let db = match format {
            TsFormat::Db => a,
            TsFormat::Ma => 20.0 * a.log10(),
            TsFormat::Ri => 20.0 * (a * a + b * b).sqrt().log10(),
        };
        push_monotone(&mut freqs, f, idx + 1)?;
        levels.push(db);
    }
    if freqs.is_empty() {
        return Err(SimulatorError::ParseError {
            line: 0,
            message: "reply contains no data rows".into(),
        });
    }
    Ok((freqs, levels))
}

fn parse_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>), SimulatorError> {
    let mut freqs = Vec::new();
    let mut levels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() < 2 {
            return Err(SimulatorError::ParseError {
                line: idx + 1,
                message: format!("expected 2 columns: {raw:?}"),
            });
        }
        let parsed: Result<Vec<f64>, _> = fields[..2].iter().map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                push_monotone(&mut freqs, v[0], idx + 1)?;
                levels.push(v[1]);
            }
            Err(_) if freqs.is_empty() && idx == first_content_line(text) => {
                // Header row.
                continue;
            }
            Err(_) => {
                return Err(SimulatorError::ParseError {
                    line: idx + 1,
                    message: format!("malformed row: {raw:?}"),
                });
            }
        }
    }
    if freqs.is_empty() {
        return Err(SimulatorError::ParseError {
            line: 0,
            message: "reply contains no data rows".into(),
        });
    }
    Ok((freqs, levels))
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .unwrap_or(0)
}

fn push_monotone(freqs: &mut Vec<f64>, f: f64, line: usize) -> Result<(), SimulatorError> {
    if let Some(&last) = freqs.last() {
        if f <= last {
            return Err(SimulatorError::NonMonotoneGrid(line));
        }
    }
    freqs.push(f);
    Ok(())
}

/// `Simulator` backed by the file-exchange adapter. Both fidelities map to
/// the same external command; the ledger tracks them separately so cost
/// summaries stay meaningful.
#[derive(Debug)]
pub struct ExternalSimulator {
    cfg: AdapterConfig,
    ledger: CostLedger,
}

impl ExternalSimulator {
    pub fn new(cfg: AdapterConfig) -> Self {
        Self {
            cfg,
            ledger: CostLedger::default(),
        }
    }
}

impl Simulator for ExternalSimulator {
    fn simulate(
        &self,
        x: &DesignVector,
        sweep: &SweepSpec,
        fidelity: Fidelity,
    ) -> Result<Response, SimulatorError> {
        let mut r = run_external(x, sweep, &self.cfg)?;
        r.fidelity = fidelity;
        self.ledger.record(fidelity);
        Ok(r)
    }

    fn ledger(&self) -> &CostLedger {
        &self.ledger
    }
}

/// Render a response as a one-port Touchstone file in dB/angle format.
pub fn to_touchstone(r: &Response) -> String {
    let mut out = String::from("! one-port reflection response\n# GHZ S DB R 50\n");
    for (f, s) in r.freqs.iter().zip(&r.levels) {
        out.push_str(&format!("{f:.6} {s:.6} 0.0\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn csv_round_trip_with_header_and_comments() {
        let text = "# produced by stub solver\nfreq_GHz,S11_dB\n5.0,-3.0\n5.5,-12.5\n6.0,-4.0\n";
        let (f, s) = parse_reply(text).unwrap();
        assert_eq!(f, vec![5.0, 5.5, 6.0]);
        assert_eq!(s, vec![-3.0, -12.5, -4.0]);
    }

    #[test]
    fn touchstone_ri_magnitude() {
        let text = "! comment\n# GHz S RI R 50\n5.0 0.6 0.8\n";
        let (f, s) = parse_reply(text).unwrap();
        assert_eq!(f, vec![5.0]);
        // |0.6 + 0.8i| = 1.0 -> 0 dB.
        assert_abs_diff_eq!(s[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn touchstone_db_and_mhz_units() {
        let text = "# MHz S DB R 50\n5500 -11.0 30.0\n5600 -9.0 31.0\n";
        let (f, s) = parse_reply(text).unwrap();
        assert_abs_diff_eq!(f[0], 5.5, epsilon = 1e-12);
        assert_eq!(s, vec![-11.0, -9.0]);
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "5.0,-3.0\n5.5, abc\n";
        match parse_reply(text) {
            Err(SimulatorError::ParseError { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn non_monotone_grid_rejected() {
        let text = "5.0,-3.0\n4.9,-2.0\n";
        assert!(matches!(
            parse_reply(text),
            Err(SimulatorError::NonMonotoneGrid(2))
        ));
    }

    #[test]
    fn touchstone_writer_round_trips() {
        let r = Response {
            freqs: vec![5.0, 5.5],
            levels: vec![-3.25, -10.5],
            fidelity: Fidelity::High,
            cost_units: 0.0,
        };
        let (f, s) = parse_reply(&to_touchstone(&r)).unwrap();
        assert_eq!(f, r.freqs);
        for (a, b) in s.iter().zip(&r.levels) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }
}
