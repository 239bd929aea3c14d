//! Synthetic annual country panel with known structure, used by tests and
//! examples: 17 units over 1960-2003, treatment after 1990.
//!
//! Each unit is a level plus a slow wave (its trend) plus white noise (its
//! cycle). One donor shares the treated unit's trend only, another shares
//! its cycle only. Wave frequencies are drawn from a narrow band so that
//! the filter coefficients, and hence the filtered cycles, are similar
//! across units, while the waves themselves stay distinct.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::panel::PanelData;

pub const FIRST_PERIOD: i64 = 1960;
pub const LAST_PERIOD: i64 = 2003;
pub const T0_PERIOD: i64 = 1990;
pub const N_UNITS: usize = 17;
pub const TREATED: &str = "C00";
pub const TREND_DONOR: &str = "C01";
pub const CYCLE_DONOR: &str = "C02";

/// Level plus a sinusoid. A sinusoid of frequency `w` satisfies
/// `y_t = a y_{t-4} + b y_{t-5}` exactly, with `a, b` near `0, -1` for
/// `w` close to `2 pi / 10`, so the filter recovers it as trend.
fn wave_trend(len: usize, rng: &mut ChaCha20Rng, n: &Normal<f64>) -> Vec<f64> {
    let level = 100.0 + 20.0 * n.sample(rng);
    let amp = 30.0 * (1.0 + rng.random::<f64>());
    let w = 0.6 + 0.1 * rng.random::<f64>();
    let phase = std::f64::consts::TAU * rng.random::<f64>();
    (0..len).map(|t| level + amp * (w * t as f64 + phase).sin()).collect()
}

/// Long-format panel text (`unit,period,value`) and its parsed form.
pub struct CountryPanel {
    pub csv: String,
    pub panel: PanelData,
}

pub fn country_panel(seed: u64) -> Result<CountryPanel> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let periods: Vec<i64> = (FIRST_PERIOD..=LAST_PERIOD).collect();
    let len = periods.len();
    let mut trends: Vec<Vec<f64>> = (0..N_UNITS).map(|_| wave_trend(len, &mut rng, &n)).collect();
    let mut cycles: Vec<Vec<f64>> = (0..N_UNITS)
        .map(|_| (0..len).map(|_| n.sample(&mut rng)).collect())
        .collect();
    trends[1] = trends[0].clone();
    cycles[2] = cycles[0].clone();
    let rows: Vec<Vec<f64>> = trends
        .iter()
        .zip(&cycles)
        .map(|(tr, cy)| tr.iter().zip(cy).map(|(a, b)| a + b).collect())
        .collect();
    let labels: Vec<String> = (0..N_UNITS).map(|i| format!("C{i:02}")).collect();
    let mut csv = String::from("unit,period,value\n");
    for (label, row) in labels.iter().zip(&rows) {
        for (p, v) in periods.iter().zip(row) {
            csv.push_str(&format!("{label},{p},{v}\n"));
        }
    }
    let t0 = (T0_PERIOD - FIRST_PERIOD + 1) as usize;
    let panel = PanelData::with_treated(rows, 1, t0, labels, periods)?;
    Ok(CountryPanel { csv, panel })
}
