//! Forcing data: CSV ingestion, synthetic climates and city presets.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bem::{ForcingStep, HvacSetpoints, TEMP_RANGE_K, TIMESTEP_S};
use crate::env::{default_controller, normalize_city, EPISODE_STEPS};
use crate::error::{Error, Result};

pub const FORCING_CSV_HEADER: &str =
    "step,t_canopy_k,t_roof_inner_k,t_sunwall_inner_k,t_shadewall_inner_k";

/// Steps per day at the model time step.
const DAY_STEPS: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSeries {
    pub steps: Vec<ForcingStep>,
    pub timestep_s: f64,
    pub label: String,
    pub year_tag: Option<String>,
}

impl ForcingSeries {
    pub fn new(steps: Vec<ForcingStep>, label: impl Into<String>) -> Self {
        Self {
            steps,
            timestep_s: TIMESTEP_S,
            label: label.into(),
            year_tag: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn canopy(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.t_canopy_k)
    }

    /// Strictly increasing step indices and plausible temperatures.
    pub fn validate(&self) -> Result<()> {
        for (i, pair) in self.steps.windows(2).enumerate() {
            if pair[1].step_index <= pair[0].step_index {
                return Err(Error::InvalidInput(format!(
                    "forcing `{}`: step index {} at position {} does not increase",
                    self.label,
                    pair[1].step_index,
                    i + 1
                )));
            }
        }
        for s in &self.steps {
            s.validate()?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.steps.len() * 64);
        out.push_str(FORCING_CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            // `{}` on f64 prints the shortest representation that round-trips.
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.step_index, s.t_canopy_k, s.t_roof_inner_k, s.t_sunwall_inner_k, s.t_shadewall_inner_k
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Strict reader for the forcing CSV schema.
pub fn load_forcing_csv(path: &Path) -> Result<ForcingSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_forcing_csv(&text, path, label)
}

pub fn parse_forcing_csv(text: &str, origin: &Path, label: String) -> Result<ForcingSeries> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((n, l)) => break (n + 1, l.trim()),
            None => return Err(Error::parse(origin, 1, "empty forcing file")),
        }
    };
    if header.1 != FORCING_CSV_HEADER {
        return Err(Error::parse(
            origin,
            header.0,
            format!("bad header `{}`, expected `{FORCING_CSV_HEADER}`", header.1),
        ));
    }

    let mut steps = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected 5 columns, found {}", fields.len()),
            ));
        }
        let step_index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, line_no, format!("bad step index `{}`", fields[0])))?;
        let mut temps = [0.0f64; 4];
        let names = ["t_canopy_k", "t_roof_inner_k", "t_sunwall_inner_k", "t_shadewall_inner_k"];
        for (k, slot) in temps.iter_mut().enumerate() {
            let v: f64 = fields[k + 1].trim().parse().map_err(|_| {
                Error::parse(origin, line_no, format!("bad {} value `{}`", names[k], fields[k + 1]))
            })?;
            if !v.is_finite() || v < TEMP_RANGE_K.0 || v > TEMP_RANGE_K.1 {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!(
                        "{} = {v} outside [{}, {}] K",
                        names[k], TEMP_RANGE_K.0, TEMP_RANGE_K.1
                    ),
                ));
            }
            *slot = v;
        }
        if let Some(prev) = steps.last().map(|s: &ForcingStep| s.step_index) {
            if step_index <= prev {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("step index {step_index} does not increase (previous {prev})"),
                ));
            }
        }
        steps.push(ForcingStep {
            step_index,
            t_canopy_k: temps[0],
            t_roof_inner_k: temps[1],
            t_sunwall_inner_k: temps[2],
            t_shadewall_inner_k: temps[3],
        });
    }
    if steps.is_empty() {
        return Err(Error::parse(origin, header.0, "no data rows"));
    }
    Ok(ForcingSeries::new(steps, label))
}

/// Parameters of a sinusoidal stand-in climate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticClimateSpec {
    pub mean_k: f64,
    pub annual_amplitude_k: f64,
    pub diurnal_amplitude_k: f64,
    pub noise_std_k: f64,
    pub inner_node_lag_steps: usize,
    pub seed: u64,
}

impl SyntheticClimateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.annual_amplitude_k >= 0.0
            && self.diurnal_amplitude_k >= 0.0
            && self.noise_std_k >= 0.0)
        {
            return Err(Error::Config("climate amplitudes and noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Canopy temperature is an annual plus a diurnal sine with Gaussian noise.
/// The three inner-node series are the canopy series delayed by
/// `inner_node_lag_steps` and smoothed by a trailing one-day moving average
/// (indices before the start clamp to the first value).
pub fn generate_synthetic(spec: &SyntheticClimateSpec, steps: usize) -> Result<ForcingSeries> {
    spec.validate()?;
    if steps == 0 {
        return Err(Error::InvalidInput("synthetic forcing needs at least one step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std_k)
        .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;
    let tau = std::f64::consts::TAU;
    let canopy: Vec<f64> = (0..steps)
        .map(|k| {
            let k = k as f64;
            let mut t = spec.mean_k
                + spec.annual_amplitude_k * (tau * k / EPISODE_STEPS as f64).sin()
                + spec.diurnal_amplitude_k * (tau * k / DAY_STEPS as f64).sin();
            if spec.noise_std_k > 0.0 {
                t += noise.sample(&mut rng);
            }
            t
        })
        .collect();

    let lagged = |k: isize| -> f64 { canopy[k.max(0) as usize] };
    let mut inner = Vec::with_capacity(steps);
    for k in 0..steps as isize {
        let end = k - spec.inner_node_lag_steps as isize;
        let sum: f64 = (0..DAY_STEPS as isize).map(|j| lagged(end - j)).sum();
        inner.push(sum / DAY_STEPS as f64);
    }

    let series = canopy
        .iter()
        .zip(&inner)
        .enumerate()
        .map(|(k, (&c, &i))| ForcingStep {
            step_index: k,
            t_canopy_k: c,
            t_roof_inner_k: i,
            t_sunwall_inner_k: i,
            t_shadewall_inner_k: i,
        })
        .collect();
    let mut out = ForcingSeries::new(series, format!("synthetic-{}", spec.seed));
    out.year_tag = Some(format!("seed{}", spec.seed));
    Ok(out)
}

/// Seed offset separating a preset's evaluation year from its training year.
pub const EVAL_SEED_OFFSET: u64 = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CityPreset {
    pub name: &'static str,
    pub latitude_deg: f64,
    pub default_setpoints: HvacSetpoints,
    pub climate: SyntheticClimateSpec,
}

impl CityPreset {
    pub fn train_forcing(&self, steps: usize) -> Result<ForcingSeries> {
        let mut f = generate_synthetic(&self.climate, steps)?;
        f.label = format!("{}-train", self.name);
        Ok(f)
    }

    /// A different synthetic year for held-out evaluation.
    pub fn eval_forcing(&self, steps: usize) -> Result<ForcingSeries> {
        let spec = SyntheticClimateSpec {
            seed: self.climate.seed + EVAL_SEED_OFFSET,
            ..self.climate
        };
        let mut f = generate_synthetic(&spec, steps)?;
        f.label = format!("{}-eval", self.name);
        Ok(f)
    }
}

/// The five study cities. Climates are temperature-regime stand-ins
/// (cold-variable through hot-stable), not observations.
pub fn city_presets() -> Vec<CityPreset> {
    let table: [(&'static str, f64, f64, f64, f64, u64); 5] = [
        ("london", 51.5, 284.0, 7.0, 3.0, 11),
        ("new_york", 40.7, 285.0, 12.0, 5.0, 12),
        ("beijing", 39.9, 286.0, 15.0, 6.0, 13),
        ("hong_kong", 22.3, 296.0, 6.0, 3.0, 14),
        ("singapore", 1.35, 300.5, 1.0, 2.0, 15),
    ];
    table
        .into_iter()
        .map(|(name, lat, mean, annual, diurnal, seed)| CityPreset {
            name,
            latitude_deg: lat,
            default_setpoints: default_controller(name).expect("preset names are known"),
            climate: SyntheticClimateSpec {
                mean_k: mean,
                annual_amplitude_k: annual,
                diurnal_amplitude_k: diurnal,
                noise_std_k: 1.0,
                inner_node_lag_steps: 4,
                seed,
            },
        })
        .collect()
}

pub fn city_preset(name: &str) -> Result<CityPreset> {
    let key = normalize_city(name);
    city_presets()
        .into_iter()
        .find(|p| p.name == key)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Human-readable dump of every preset, one `key=value` block per city.
pub fn presets_report() -> String {
    let mut out = String::new();
    for p in city_presets() {
        let c = &p.climate;
        let _ = writeln!(out, "[{}]", p.name);
        let _ = writeln!(out, "latitude_deg={}", p.latitude_deg);
        let _ = writeln!(out, "default_ac_setpoint_k={}", p.default_setpoints.t_max_k);
        let _ = writeln!(out, "default_heat_setpoint_k={}", p.default_setpoints.t_min_k);
        let _ = writeln!(out, "default_vent_ach={}", p.default_setpoints.vent_ach);
        let _ = writeln!(out, "mean_k={}", c.mean_k);
        let _ = writeln!(out, "annual_amplitude_k={}", c.annual_amplitude_k);
        let _ = writeln!(out, "diurnal_amplitude_k={}", c.diurnal_amplitude_k);
        let _ = writeln!(out, "noise_std_k={}", c.noise_std_k);
        let _ = writeln!(out, "inner_node_lag_steps={}", c.inner_node_lag_steps);
        let _ = writeln!(out, "seed={}", c.seed);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn flat(mean: f64) -> SyntheticClimateSpec {
        SyntheticClimateSpec {
            mean_k: mean,
            annual_amplitude_k: 0.0,
            diurnal_amplitude_k: 0.0,
            noise_std_k: 0.0,
            inner_node_lag_steps: 3,
            seed: 1,
        }
    }

    fn parse(text: &str) -> Result<ForcingSeries> {
        parse_forcing_csv(text, &PathBuf::from("f.csv"), "f".into())
    }

    #[test]
    fn flat_climate_is_constant() {
        let s = generate_synthetic(&flat(288.0), 500).unwrap();
        assert!(s.steps.iter().all(|f| f.t_canopy_k == 288.0 && f.t_roof_inner_k == 288.0));
    }

    #[test]
    fn same_seed_same_series() {
        let spec = city_preset("beijing").unwrap().climate;
        let a = generate_synthetic(&spec, 2000).unwrap();
        let b = generate_synthetic(&spec, 2000).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic(&SyntheticClimateSpec { seed: 99, ..spec }, 2000).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn annual_extrema_match_the_sine() {
        let spec = SyntheticClimateSpec {
            annual_amplitude_k: 10.0,
            ..flat(288.0)
        };
        let s = generate_synthetic(&spec, EPISODE_STEPS).unwrap();
        let max = s.canopy().fold(f64::MIN, f64::max);
        let min = s.canopy().fold(f64::MAX, f64::min);
        assert!((max - 298.0).abs() < 1e-9, "{max}");
        assert!((min - 278.0).abs() < 1e-9, "{min}");
    }

    #[test]
    fn inner_nodes_are_lagged_moving_average() {
        let spec = SyntheticClimateSpec {
            diurnal_amplitude_k: 5.0,
            noise_std_k: 0.5,
            inner_node_lag_steps: 6,
            ..flat(290.0)
        };
        let s = generate_synthetic(&spec, 400).unwrap();
        let c: Vec<f64> = s.canopy().collect();
        let k = 300;
        let expected: f64 = (0..48).map(|j| c[k - 6 - j]).sum::<f64>() / 48.0;
        assert!((s.steps[k].t_roof_inner_k - expected).abs() < 1e-9);
        assert_eq!(s.steps[k].t_roof_inner_k, s.steps[k].t_shadewall_inner_k);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let spec = city_preset("hong_kong").unwrap().climate;
        let s = generate_synthetic(&spec, 1000).unwrap();
        let back = parse(&s.to_csv()).unwrap();
        assert_eq!(back.steps, s.steps);
    }

    #[test]
    fn loader_rejects_bad_rows_with_line_numbers() {
        let good = format!("{FORCING_CSV_HEADER}\n0,290,291,292,293\n");
        assert_eq!(parse(&good).unwrap().len(), 1);

        let neg = format!("{FORCING_CSV_HEADER}\n0,290,291,292,293\n1,-10,291,292,293\n");
        let err = parse(&neg).unwrap_err().to_string();
        assert!(err.contains("f.csv:3"), "{err}");

        let nan = format!("{FORCING_CSV_HEADER}\n0,NaN,291,292,293\n");
        assert!(parse(&nan).is_err());

        let extra = "step,t_canopy_k,t_roof_inner_k,t_sunwall_inner_k,t_shadewall_inner_k,rh\n";
        assert!(parse(&format!("{extra}0,290,291,292,293,50\n")).is_err());

        let wide = format!("{FORCING_CSV_HEADER}\n0,290,291,292,293,1\n");
        assert!(parse(&wide).is_err());

        let backwards = format!("{FORCING_CSV_HEADER}\n1,290,291,292,293\n1,290,291,292,293\n");
        assert!(parse(&backwards).is_err());

        assert!(parse("").is_err());
        assert!(parse(FORCING_CSV_HEADER).is_err());
    }

    #[test]
    fn five_presets_with_published_setpoints() {
        let presets = city_presets();
        assert_eq!(presets.len(), 5);
        let sg = city_preset("singapore").unwrap();
        assert_eq!(sg.default_setpoints.t_max_k, 380.00);
        let london = city_preset("london").unwrap();
        assert!(london.climate.annual_amplitude_k > sg.climate.annual_amplitude_k);
        for p in &presets {
            assert!(p.default_setpoints.t_min_k < p.default_setpoints.t_max_k);
        }
        assert!(city_preset("atlantis").is_err());
    }

    #[test]
    fn eval_year_differs_from_train_year() {
        let p = city_preset("beijing").unwrap();
        let train = p.train_forcing(200).unwrap();
        let eval = p.eval_forcing(200).unwrap();
        assert_ne!(train.steps, eval.steps);
    }
}
