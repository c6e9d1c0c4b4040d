//! Results CSV shared by `sweep` and `simulate`.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::config::Settings;
use crate::experiment::{run_method, EvaluationKind, Instance, Method, Outcome};

pub const HEADER: [&str; 9] = [
    "n",
    "method",
    "expected_t",
    "evaluation_kind",
    "std_error",
    "episodes",
    "seed",
    "ratio_to_optimal",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub n: usize,
    pub method: String,
    pub expected_t: Option<f64>,
    pub evaluation_kind: Option<EvaluationKind>,
    pub std_error: Option<f64>,
    pub episodes: Option<u64>,
    pub seed: Option<u64>,
    /// `expected_t / w*` when policy iteration ran for the same n.
    pub ratio_to_optimal: Option<f64>,
    pub error: Option<String>,
}

impl Row {
    pub fn from_outcome(n: usize, o: &Outcome) -> Self {
        Row {
            n,
            method: o.method.name().into(),
            expected_t: Some(o.expected_time),
            evaluation_kind: Some(o.kind),
            std_error: o.std_error,
            episodes: o.episodes,
            seed: o.seed,
            ratio_to_optimal: None,
            error: None,
        }
    }

    pub fn failed(n: usize, method: Method, error: String) -> Self {
        Row {
            n,
            method: method.name().into(),
            expected_t: None,
            evaluation_kind: None,
            std_error: None,
            episodes: None,
            seed: None,
            ratio_to_optimal: None,
            error: Some(error),
        }
    }

    fn record(&self) -> [String; 9] {
        let num = |x: Option<f64>| x.map(format_number).unwrap_or_default();
        let int = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
        [
            self.n.to_string(),
            self.method.clone(),
            num(self.expected_t),
            self.evaluation_kind
                .map(|k| k.name().to_string())
                .unwrap_or_default(),
            num(self.std_error),
            int(self.episodes),
            int(self.seed),
            num(self.ratio_to_optimal),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Fills `ratio_to_optimal` from the policy-iteration row of each n.
pub fn attach_ratios(rows: &mut [Row]) {
    let optimal: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.method == Method::PolicyIteration.name())
        .filter_map(|r| Some((r.n, r.expected_t?)))
        .collect();
    for r in rows.iter_mut() {
        if let (Some(w), Some(&(_, w_star))) =
            (r.expected_t, optimal.iter().find(|(n, _)| *n == r.n))
        {
            r.ratio_to_optimal = Some(w / w_star);
        }
    }
}

/// Appends rows, writing the header first if the file is new or empty. An
/// existing file must carry the same header.
pub fn append_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let fresh = match std::fs::File::open(path) {
        Ok(f) => {
            let mut first = String::new();
            BufReader::new(f).read_line(&mut first)?;
            if first.is_empty() {
                true
            } else if first.trim_end() != HEADER.join(",") {
                bail!(
                    "{} has a different header; refusing to append",
                    path.display()
                );
            } else {
                false
            }
        }
        Err(_) => true,
    };
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(HEADER)?;
    }
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// The n values a sweep covers.
pub fn n_range(settings: &Settings) -> Result<Vec<usize>> {
    let (lo, hi) = match (settings.n, settings.n_max) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, a),
        (None, Some(b)) => (2, b),
        (None, None) => bail!("a sweep needs --n and/or --n-max"),
    };
    if lo < 2 || lo > hi {
        bail!("invalid n range {lo}..={hi}");
    }
    Ok((lo..=hi).collect())
}

/// Runs every (n, method) cell. Failures become rows with an error tag;
/// `on_row` sees each row as soon as it is complete.
pub fn run(settings: &Settings, mut on_row: impl FnMut(&Row) -> Result<()>) -> Result<Vec<Row>> {
    let explicit = !settings.methods.is_empty();
    let mut rows = Vec::new();
    for n in n_range(settings)? {
        let methods: Vec<Method> = if explicit {
            settings.methods.clone()
        } else {
            // by default the closed form only runs where it applies
            Method::ALL
                .into_iter()
                .filter(|&m| m != Method::AnalyticN2 || n == 2)
                .collect()
        };
        let inst = Instance::build(
            &settings.regime,
            n,
            settings.reduced,
            settings.exact_state_limit,
        );
        let mut cell_rows = Vec::new();
        for &m in &methods {
            let row = match &inst {
                Ok(inst) => match run_method(inst, m, settings) {
                    Ok(o) => Row::from_outcome(n, &o),
                    Err(e) => Row::failed(n, m, format!("{e:#}")),
                },
                Err(e) => Row::failed(n, m, format!("{e:#}")),
            };
            cell_rows.push(row);
        }
        attach_ratios(&mut cell_rows);
        for r in &cell_rows {
            on_row(r)?;
        }
        rows.extend(cell_rows);
    }
    Ok(rows)
}
