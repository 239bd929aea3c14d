//! File formats: long-format panel CSV input, decomposition / series /
//! weights / simulation-table CSV output, and JSON reports.
//!
//! Derived floats are written at 12 significant digits; observed outcomes are
//! written in shortest round-trip form so a decomposition file reloads to the
//! identical panel. Every file is written to a temporary sibling and renamed
//! into place.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::estimators::{CounterfactualReport, WeightComparison};
use crate::filter::FilterFit;
use crate::panel::PanelData;
use crate::sim::MseRatioReport;

pub const PANEL_HEADER: [&str; 3] = ["unit", "period", "value"];

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn fmt_sig(x: f64) -> String {
    format!("{}", round_sig(x))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

/// Reads a long-format `unit,period,value` panel from a file.
pub fn load_panel_csv(path: impl AsRef<Path>, treated_label: &str, t0_label: i64) -> Result<PanelData> {
    let file = std::fs::File::open(path.as_ref())?;
    read_panel_csv(file, treated_label, t0_label)
}

/// Reads a long-format panel, moving `treated_label` to the front and
/// resolving `t0_label` to a 1-based period index.
pub fn read_panel_csv<R: Read>(reader: R, treated_label: &str, t0_label: i64) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != PANEL_HEADER {
        return Err(Error::Csv(format!("expected header unit,period,value, got {}", header.join(","))));
    }
    let mut units: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut cells: BTreeMap<(usize, i64), f64> = BTreeMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let unit = record.get(0).unwrap_or_default().to_owned();
        if unit.is_empty() {
            return Err(Error::Csv(format!("line {row}: empty unit")));
        }
        let period: i64 = record
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Csv(format!("line {row}: period is not an integer")))?;
        let value: f64 = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Csv(format!("line {row}: value is not a number")))?;
        if !value.is_finite() {
            return Err(Error::Csv(format!("line {row}: value is not finite")));
        }
        let next = units.len();
        let idx = *unit_index.entry(unit.clone()).or_insert_with(|| {
            units.push(unit.clone());
            next
        });
        if cells.insert((idx, period), value).is_some() {
            return Err(Error::DuplicateCell { unit, period });
        }
    }
    if units.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    let mut periods: Vec<i64> = cells.keys().map(|&(_, p)| p).collect();
    periods.sort_unstable();
    periods.dedup();
    if let Some(w) = periods.windows(2).find(|w| w[1] != w[0] + 1) {
        return Err(Error::NonContiguousPeriods(format!(
            "no observations between {} and {}",
            w[0], w[1]
        )));
    }
    let missing: Vec<(String, i64)> = units
        .iter()
        .enumerate()
        .flat_map(|(i, u)| {
            let cells = &cells;
            periods
                .iter()
                .filter(move |&&p| !cells.contains_key(&(i, p)))
                .map(move |&p| (u.clone(), p))
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnbalancedPanel { missing });
    }
    let treated = unit_index
        .get(treated_label)
        .ok_or_else(|| Error::UnknownTreatedLabel(treated_label.to_owned()))?;
    let first = periods[0];
    let t0 = t0_label - first + 1;
    if t0 < 1 || t0 as usize > periods.len() {
        return Err(Error::UnknownPeriodLabel(t0_label));
    }
    let outcomes = (0..units.len())
        .map(|i| periods.iter().map(|&p| cells[&(i, p)]).collect())
        .collect();
    PanelData::with_treated(outcomes, treated + 1, t0 as usize, units, periods)
}

/// `unit,period,observed,trend,cycle` for every unit and period; trend and
/// cycle are blank outside the fit window.
pub fn decomposition_csv(panel: &PanelData, fits: &[FilterFit]) -> String {
    let mut out = String::from("unit,period,observed,trend,cycle\n");
    for fit in fits {
        let label = csv_field(&panel.unit_labels()[fit.unit]);
        let first = fit.window.first_fit_period;
        for t in 1..=panel.n_periods() {
            let (trend, cycle) = if fit.window.periods().contains(&t) {
                (fmt_sig(fit.trend[t - first]), fmt_sig(fit.cycle[t - first]))
            } else {
                (String::new(), String::new())
            };
            let _ = writeln!(
                out,
                "{label},{},{},{trend},{cycle}",
                panel.period_label(t),
                panel.value(fit.unit, t)
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Fitted (pre) or predicted (post) value of a report at 1-based period `t`.
fn report_value(r: &CounterfactualReport, t: usize) -> Option<f64> {
    if r.window.periods().contains(&t) {
        Some(r.pre_fitted[t - r.window.first_fit_period])
    } else if t > r.t0 && t <= r.t0 + r.horizon() {
        Some(r.post_counterfactual[t - r.t0 - 1])
    } else {
        None
    }
}

/// `period,actual,counterfactual_sc,counterfactual_sbc,effect_sc,effect_sbc`
/// from period 1 through the longer of the two horizons.
pub fn series_csv(panel: &PanelData, sc: &CounterfactualReport, sbc: &CounterfactualReport) -> String {
    let mut out = String::from("period,actual,counterfactual_sc,counterfactual_sbc,effect_sc,effect_sbc\n");
    let last = (sc.t0 + sc.horizon()).max(sbc.t0 + sbc.horizon());
    for t in 1..=last {
        let actual = panel.value(0, t);
        let (a, b) = (report_value(sc, t), report_value(sbc, t));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            panel.period_label(t),
            actual,
            fmt_opt(a),
            fmt_opt(b),
            fmt_opt(a.map(|v| actual - v)),
            fmt_opt(b.map(|v| actual - v)),
        );
    }
    out
}

/// Grouped-bar data: `donor,w_raw,w_trend,w_cycle`.
pub fn weights_csv(cmp: &WeightComparison) -> String {
    let mut out = String::from("donor,w_raw,w_trend,w_cycle\n");
    for (i, donor) in cmp.donors.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(donor),
            fmt_sig(cmp.raw.weights[i]),
            fmt_sig(cmp.trend.weights[i]),
            fmt_sig(cmp.cycle.weights[i])
        );
    }
    out
}

/// Simulation table: `model,regime,parameter,T0,pre,post`.
pub fn table_csv(reports: &[MseRatioReport]) -> String {
    let mut out = String::from("model,regime,parameter,T0,pre,post\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.spec.model_label(),
            r.spec.regime.name(),
            csv_field(&r.spec.parameter_label()),
            r.spec.t0,
            fmt_sig(r.pre_ratio),
            fmt_sig(r.post_ratio)
        );
    }
    out
}

#[derive(Serialize)]
struct PeriodValue {
    period: i64,
    actual: f64,
    fitted: f64,
}

#[derive(Serialize)]
struct PeriodEffect {
    period: i64,
    actual: f64,
    counterfactual: f64,
    effect: f64,
}

/// JSON view of a report keyed by donor and period labels.
pub fn report_value_json(panel: &PanelData, r: &CounterfactualReport) -> Value {
    let weights: Map<String, Value> = panel
        .donor_labels()
        .iter()
        .zip(&r.weights.weights)
        .map(|(d, w)| (d.clone(), Value::from(*w)))
        .collect();
    let fitted: Vec<PeriodValue> = r
        .window
        .periods()
        .enumerate()
        .map(|(k, t)| PeriodValue {
            period: panel.period_label(t),
            actual: r.pre_actual[k],
            fitted: r.pre_fitted[k],
        })
        .collect();
    let effects: Vec<PeriodEffect> = (0..r.horizon())
        .map(|k| PeriodEffect {
            period: panel.period_label(r.t0 + 1 + k),
            actual: r.post_actual[k],
            counterfactual: r.post_counterfactual[k],
            effect: r.effects[k],
        })
        .collect();
    let mut m = Map::new();
    m.insert("method".into(), serde_json::to_value(r.method).expect("serializable"));
    m.insert("regime".into(), Value::from(r.regime.name()));
    m.insert("include_intercept".into(), Value::from(r.weights.intercept.is_some()));
    m.insert("t0_period".into(), Value::from(panel.period_label(r.t0)));
    m.insert(
        "fit_window".into(),
        serde_json::json!({
            "first_period": panel.period_label(r.window.first_fit_period),
            "last_period": panel.period_label(r.window.last_fit_period),
            "effective_size": r.window.effective_size,
        }),
    );
    m.insert("weights".into(), Value::Object(weights));
    m.insert("intercept".into(), r.weights.intercept.map_or(Value::Null, Value::from));
    m.insert("objective".into(), Value::from(r.weights.objective));
    m.insert("kkt_residual".into(), Value::from(r.weights.kkt_residual));
    m.insert("iterations".into(), Value::from(r.weights.iterations));
    m.insert("collinear".into(), Value::from(r.weights.collinear));
    m.insert("pre_mse".into(), Value::from(r.pre_mse));
    m.insert("post_mse_vs_actual".into(), Value::from(r.post_mse_vs_actual));
    m.insert("fitted".into(), serde_json::to_value(fitted).expect("serializable"));
    m.insert("effects".into(), serde_json::to_value(effects).expect("serializable"));
    if let Some(trend) = &r.trend_forecast {
        m.insert("trend_forecast".into(), serde_json::to_value(trend).expect("serializable"));
    }
    Value::Object(m)
}

/// Rounds every float in `v` to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and rounded floats, newline terminated.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = round_json(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so the target is either complete or absent.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "unit,period,value\n\
        A,2000,1.0\nA,2001,2.0\nA,2002,3.0\nA,2003,4.0\nA,2004,5.0\n\
        B,2000,1.5\nB,2001,2.5\nB,2002,3.5\nB,2003,4.5\nB,2004,5.5\n\
        C,2000,0.5\nC,2001,0.7\nC,2002,0.1\nC,2003,0.2\nC,2004,0.9\n";

    #[test]
    fn loads_small_panel() {
        let p = read_panel_csv(SMALL.as_bytes(), "B", 2002).unwrap();
        assert_eq!(p.n_donors(), 2);
        assert_eq!(p.n_periods(), 5);
        assert_eq!(p.t0(), 3);
        assert_eq!(p.unit_labels(), ["B", "A", "C"]);
        assert_eq!(p.treated(), [1.5, 2.5, 3.5, 4.5, 5.5]);
        assert_eq!(p.period_labels(), [2000, 2001, 2002, 2003, 2004]);
    }

    #[test]
    fn unbalanced_names_missing_cell() {
        let csv = "unit,period,value\nunitA,1971,1\nunitA,1972,2\nunitB,1971,3\n";
        match read_panel_csv(csv.as_bytes(), "unitA", 1971).unwrap_err() {
            Error::UnbalancedPanel { missing } => assert_eq!(missing, vec![("unitB".to_string(), 1972)]),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn loader_errors() {
        let dup = "unit,period,value\nA,1,1\nA,1,2\nB,1,3\n";
        assert!(matches!(read_panel_csv(dup.as_bytes(), "A", 1), Err(Error::DuplicateCell { .. })));
        let gap = "unit,period,value\nA,1,1\nA,3,2\nB,1,3\nB,3,3\n";
        assert!(matches!(read_panel_csv(gap.as_bytes(), "A", 1), Err(Error::NonContiguousPeriods(_))));
        assert!(matches!(read_panel_csv(SMALL.as_bytes(), "Z", 2002), Err(Error::UnknownTreatedLabel(_))));
        assert!(matches!(read_panel_csv(SMALL.as_bytes(), "A", 1990), Err(Error::UnknownPeriodLabel(1990))));
        let bad_header = "country,year,gdp\nA,1,1\n";
        assert!(matches!(read_panel_csv(bad_header.as_bytes(), "A", 1), Err(Error::Csv(_))));
        let bad_value = "unit,period,value\nA,1,1,0\n";
        assert!(read_panel_csv(bad_value.as_bytes(), "A", 1).is_err());
    }

    #[test]
    fn round_sig_keeps_twelve_digits() {
        assert_eq!(round_sig(0.123456789012345), 0.123456789012);
        assert_eq!(round_sig(123456.7890123456), 123456.789012);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(fmt_sig(0.41), "0.41");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn json_keys_sorted_and_rounded() {
        let s = to_json_string(&serde_json::json!({"b": 1.0 / 3.0, "a": [2.0_f64.sqrt()]})).unwrap();
        assert_eq!(s, "{\n  \"a\": [\n    1.41421356237\n  ],\n  \"b\": 0.333333333333\n}\n");
    }

    mod roundtrip {
        use super::*;
        use crate::filter::{decompose_panel, FilterSpec};
        use proptest::prelude::*;

        fn observed_columns(decomp: &str) -> String {
            let mut out = String::from("unit,period,value\n");
            for line in decomp.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                let _ = writeln!(out, "{},{},{}", f[0], f[1], f[2]);
            }
            out
        }

        proptest! {
            #[test]
            fn decomposition_reloads_to_same_panel(
                values in proptest::collection::vec(-1e6f64..1e6, 3 * 14),
                first in 1900i64..2000,
                treated in 0usize..3,
            ) {
                let rows: Vec<Vec<f64>> = values.chunks(14).map(|c| c.to_vec()).collect();
                let labels: Vec<String> = ["u0", "u1", "u2"].iter().map(|s| s.to_string()).collect();
                let periods: Vec<i64> = (first..first + 14).collect();
                let panel = PanelData::with_treated(rows, treated + 1, 10, labels, periods).unwrap();
                let fits = decompose_panel(&panel, &FilterSpec::new(2, 2).unwrap()).unwrap();
                let text = observed_columns(&decomposition_csv(&panel, &fits));
                let back = read_panel_csv(text.as_bytes(), &panel.unit_labels()[0], first + 9).unwrap();
                prop_assert_eq!(back.unit_labels(), panel.unit_labels());
                prop_assert_eq!(back.period_labels(), panel.period_labels());
                prop_assert_eq!(back.t0(), panel.t0());
                for u in 0..3 {
                    prop_assert_eq!(back.series(u), panel.series(u));
                }
            }
        }
    }
}
