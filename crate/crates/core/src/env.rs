//! Episodic HVAC-control environment around the surrogate building model.
//!
//! An episode walks through one year of half-hourly forcing. At every step
//! the agent's action becomes the thermostat/ventilation set points, the
//! building is advanced one step, and the reward trades primary energy use
//! against thermal discomfort.

use std::sync::Arc;

use crate::bem::{self, BuildingParams, HvacSetpoints, StepFluxes, ThermalState, TIMESTEP_S};
use crate::config::KeyValues;
use crate::data::ForcingSeries;
use crate::error::{Error, Result};

/// Half-hour steps in a year.
pub const EPISODE_STEPS: usize = 17_520;

pub const KELVIN_OFFSET: f64 = 273.15;

/// Dimension of [`Observation::to_array`].
pub const OBS_DIM: usize = 5;

/// What the agent sees: the set points currently in force, indoor air and
/// canopy air temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub ac_setpoint_k: f64,
    pub heat_setpoint_k: f64,
    pub vent_ach: f64,
    pub t_indoor_k: f64,
    pub t_canopy_k: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.ac_setpoint_k,
            self.heat_setpoint_k,
            self.vent_ach,
            self.t_indoor_k,
            self.t_canopy_k,
        ]
    }

    pub fn from_array(v: [f64; OBS_DIM]) -> Self {
        Self {
            ac_setpoint_k: v[0],
            heat_setpoint_k: v[1],
            vent_ach: v[2],
            t_indoor_k: v[3],
            t_canopy_k: v[4],
        }
    }
}

/// Continuous set-point decision: AC and heating set points in °C plus
/// ventilation intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousAction {
    pub ac_setpoint_c: f64,
    pub heat_setpoint_c: f64,
    pub vent: f64,
}

impl ContinuousAction {
    /// Closed `(low, high)` interval of each component, in field order.
    pub const BOUNDS: [(f64, f64); 3] = [(25.0, 35.0), (10.0, 20.0), (0.3, 0.5)];

    pub fn to_array(&self) -> [f64; 3] {
        [self.ac_setpoint_c, self.heat_setpoint_c, self.vent]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self {
            ac_setpoint_c: v[0],
            heat_setpoint_c: v[1],
            vent: v[2],
        }
    }

    pub fn lower_bounds() -> [f64; 3] {
        Self::BOUNDS.map(|(lo, _)| lo)
    }

    pub fn upper_bounds() -> [f64; 3] {
        Self::BOUNDS.map(|(_, hi)| hi)
    }

    pub fn in_bounds(&self) -> bool {
        self.to_array()
            .iter()
            .zip(Self::BOUNDS)
            .all(|(v, (lo, hi))| *v >= lo && *v <= hi)
    }

    /// Clip into bounds; the flag reports whether anything moved. NaN
    /// components are clipped to the lower bound.
    pub fn clipped(&self) -> (Self, bool) {
        let mut changed = false;
        let mut out = self.to_array();
        for (v, (lo, hi)) in out.iter_mut().zip(Self::BOUNDS) {
            let c = if v.is_nan() { lo } else { v.clamp(lo, hi) };
            if c != *v || v.is_nan() {
                changed = true;
            }
            *v = c;
        }
        (Self::from_array(out), changed)
    }

    pub fn to_setpoints(&self) -> HvacSetpoints {
        HvacSetpoints {
            t_max_k: self.ac_setpoint_c + KELVIN_OFFSET,
            t_min_k: self.heat_setpoint_c + KELVIN_OFFSET,
            vent_ach: self.vent,
        }
    }
}

/// One of the eight on/off combinations used by the discrete agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteAction(u8);

impl DiscreteAction {
    pub const COUNT: usize = 8;
    /// AC set point choices (K): 26 °C or effectively off at 55 °C.
    pub const AC_LEVELS_K: [f64; 2] = [299.15, 328.15];
    /// Heating set point choices (K): 15 °C or effectively off at -15 °C.
    pub const HEAT_LEVELS_K: [f64; 2] = [288.15, 258.15];
    pub const VENT_LEVELS: [f64; 2] = [0.3, 0.5];

    pub fn new(index: usize) -> Result<Self> {
        if index < Self::COUNT {
            Ok(Self(index as u8))
        } else {
            Err(Error::InvalidInput(format!(
                "discrete action index {index} outside 0..{}",
                Self::COUNT
            )))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = DiscreteAction> {
        (0..Self::COUNT as u8).map(DiscreteAction)
    }

    /// Bits, most significant first: AC level, heating level, ventilation level.
    pub fn to_setpoints(self) -> HvacSetpoints {
        let i = self.index();
        HvacSetpoints {
            t_max_k: Self::AC_LEVELS_K[(i >> 2) & 1],
            t_min_k: Self::HEAT_LEVELS_K[(i >> 1) & 1],
            vent_ach: Self::VENT_LEVELS[i & 1],
        }
    }

    /// Inverse of [`DiscreteAction::to_setpoints`]; `None` for set points
    /// outside the table.
    pub fn from_setpoints(sp: &HvacSetpoints) -> Option<Self> {
        let ac = Self::AC_LEVELS_K.iter().position(|&v| v == sp.t_max_k)?;
        let heat = Self::HEAT_LEVELS_K.iter().position(|&v| v == sp.t_min_k)?;
        let vent = Self::VENT_LEVELS.iter().position(|&v| v == sp.vent_ach)?;
        Some(Self((ac << 2 | heat << 1 | vent) as u8))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Continuous(ContinuousAction),
    Discrete(DiscreteAction),
    /// Raw set points, used by fixed baseline controllers.
    Setpoints(HvacSetpoints),
}

/// Weights and comfort band of the energy/discomfort reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Energy weight; discomfort gets `1 - w`.
    pub w: f64,
    pub lambda_p: f64,
    pub lambda_t: f64,
    pub t_comfort_min_k: f64,
    pub t_comfort_max_k: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w: 0.1,
            lambda_p: 1.0,
            lambda_t: 1.0,
            t_comfort_min_k: 18.0 + KELVIN_OFFSET,
            t_comfort_max_k: 24.0 + KELVIN_OFFSET,
        }
    }
}

impl RewardConfig {
    pub fn with_weight(mut self, w: f64) -> Self {
        self.w = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::Config(format!("reward weight w must lie in [0, 1], got {}", self.w)));
        }
        if !(self.lambda_p > 0.0 && self.lambda_t > 0.0) {
            return Err(Error::Config("lambda_p and lambda_t must be positive".into()));
        }
        if !(self.t_comfort_min_k < self.t_comfort_max_k) {
            return Err(Error::Config("comfort band minimum must be below maximum".into()));
        }
        Ok(())
    }
}

/// Reward settings plus the episode-level knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub reward: RewardConfig,
    pub gamma: f64,
    pub episode_steps: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            gamma: 0.99,
            episode_steps: EPISODE_STEPS,
        }
    }
}

impl EpisodeConfig {
    pub const KEYS: [&'static str; 7] = [
        "w",
        "lambda_p",
        "lambda_t",
        "t_comfort_min_c",
        "t_comfort_max_c",
        "gamma",
        "episode_steps",
    ];

    /// Defaults overridden by the keys present; comfort bounds are given in °C.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&Self::KEYS)?;
        let mut cfg = Self::default();
        kv.apply("w", &mut cfg.reward.w)?;
        kv.apply("lambda_p", &mut cfg.reward.lambda_p)?;
        kv.apply("lambda_t", &mut cfg.reward.lambda_t)?;
        if let Some(c) = kv.parse_value::<f64>("t_comfort_min_c")? {
            cfg.reward.t_comfort_min_k = c + KELVIN_OFFSET;
        }
        if let Some(c) = kv.parse_value::<f64>("t_comfort_max_c")? {
            cfg.reward.t_comfort_max_k = c + KELVIN_OFFSET;
        }
        kv.apply("gamma", &mut cfg.gamma)?;
        kv.apply("episode_steps", &mut cfg.episode_steps)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.episode_steps == 0 {
            return Err(Error::Config("episode_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Primary energy demand: each HVAC flux divided by its COP and power-plant
/// efficiency.
pub fn energy_term(f_cool_wm2: f64, f_heat_wm2: f64, params: &BuildingParams) -> f64 {
    f_cool_wm2 / (params.cop_ac * params.peff_ac) + f_heat_wm2 / (params.cop_heat * params.peff_heat)
}

/// Distance to both comfort bounds; equals the band width inside the band.
pub fn comfort_term(t_indoor_k: f64, config: &RewardConfig) -> f64 {
    (t_indoor_k - config.t_comfort_min_k).abs() + (config.t_comfort_max_k - t_indoor_k).abs()
}

/// Reward from precomputed energy and comfort terms.
pub fn reward_from_terms(energy_term: f64, comfort_term: f64, config: &RewardConfig) -> f64 {
    -config.w * config.lambda_p * energy_term - (1.0 - config.w) * config.lambda_t * comfort_term
}

pub fn reward(energy_term: f64, t_indoor_k: f64, config: &RewardConfig) -> f64 {
    reward_from_terms(energy_term, comfort_term(t_indoor_k, config), config)
}

/// Discounted return `Σ γ^k R_k` of a reward sequence.
pub fn episode_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Fixed set points of a city's out-of-the-box HVAC configuration.
pub fn default_controller(city: &str) -> Result<HvacSetpoints> {
    let (t_max_k, t_min_k) = match normalize_city(city).as_str() {
        "london" => (380.00, 290.10),
        "new_york" => (310.00, 285.10),
        "beijing" => (310.00, 285.10),
        "hong_kong" => (310.10, 290.10),
        "singapore" => (380.00, 285.10),
        _ => return Err(Error::UnknownPreset(city.to_string())),
    };
    Ok(HvacSetpoints {
        t_max_k,
        t_min_k,
        vent_ach: 0.3,
    })
}

/// Lowercase with `_` separators, so "New York" and "new-york" both work.
pub fn normalize_city(city: &str) -> String {
    city.trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c })
        .collect()
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub energy_term: f64,
    pub comfort_term: f64,
    pub done: bool,
    /// The continuous action had to be clipped into bounds.
    pub clipped: bool,
    pub fluxes: StepFluxes,
}

#[derive(Debug, Clone)]
pub struct HvacEnv {
    params: BuildingParams,
    forcing: Arc<ForcingSeries>,
    config: EpisodeConfig,
    state: ThermalState,
    setpoints: HvacSetpoints,
    cursor: usize,
    active: bool,
    clip_count: u64,
}

impl HvacEnv {
    /// Set points in force right after a reset: both HVAC loops off.
    pub const INITIAL_SETPOINTS: HvacSetpoints = HvacSetpoints {
        t_max_k: 328.15,
        t_min_k: 258.15,
        vent_ach: 0.3,
    };

    pub fn new(
        params: BuildingParams,
        forcing: Arc<ForcingSeries>,
        config: EpisodeConfig,
    ) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        if forcing.len() < config.episode_steps {
            return Err(Error::Config(format!(
                "forcing `{}` has {} steps but an episode needs {}",
                forcing.label,
                forcing.len(),
                config.episode_steps
            )));
        }
        let t0 = forcing.steps[0].t_canopy_k;
        Ok(Self {
            params,
            forcing,
            config,
            state: ThermalState::uniform(t0),
            setpoints: Self::INITIAL_SETPOINTS,
            cursor: 0,
            active: false,
            clip_count: 0,
        })
    }

    pub fn params(&self) -> &BuildingParams {
        &self.params
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn forcing(&self) -> &Arc<ForcingSeries> {
        &self.forcing
    }

    pub fn episode_steps(&self) -> usize {
        self.config.episode_steps
    }

    pub fn thermal_state(&self) -> &ThermalState {
        &self.state
    }

    /// Steps taken in the current episode.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Continuous actions clipped since construction.
    pub fn clip_count(&self) -> u64 {
        self.clip_count
    }

    /// Start a new episode at the beginning of the forcing. Every temperature
    /// starts at the first canopy value.
    pub fn reset(&mut self) -> Observation {
        let t0 = self.forcing.steps[0].t_canopy_k;
        self.state = ThermalState::uniform(t0);
        self.setpoints = Self::INITIAL_SETPOINTS;
        self.cursor = 0;
        self.active = true;
        self.observation()
    }

    /// Current observation. The canopy component is the temperature the next
    /// step will be simulated under.
    pub fn observation(&self) -> Observation {
        let idx = self.cursor.min(self.forcing.len() - 1);
        Observation {
            ac_setpoint_k: self.setpoints.t_max_k,
            heat_setpoint_k: self.setpoints.t_min_k,
            vent_ach: self.setpoints.vent_ach,
            t_indoor_k: self.state.t_indoor_k,
            t_canopy_k: self.forcing.steps[idx].t_canopy_k,
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if !self.active {
            return Err(Error::InvalidInput(
                "environment stepped outside an active episode; call reset first".into(),
            ));
        }
        let mut clipped = false;
        self.setpoints = match action {
            Action::Continuous(a) => {
                let (a, c) = a.clipped();
                clipped = c;
                a.to_setpoints()
            }
            Action::Discrete(d) => d.to_setpoints(),
            Action::Setpoints(sp) => sp,
        };
        if clipped {
            self.clip_count += 1;
        }
        let forcing = self.forcing.steps[self.cursor];
        let (next, fluxes) =
            bem::step(&self.state, &forcing, &self.setpoints, &self.params, TIMESTEP_S)?;
        self.state = next;
        self.cursor += 1;
        let done = self.cursor == self.config.episode_steps;
        if done {
            self.active = false;
        }

        let energy = energy_term(fluxes.f_cool_wm2, fluxes.f_heat_wm2, &self.params);
        let comfort = comfort_term(next.t_indoor_k, &self.config.reward);
        Ok(StepOutcome {
            observation: self.observation(),
            reward: reward_from_terms(energy, comfort, &self.config.reward),
            energy_term: energy,
            comfort_term: comfort,
            done,
            clipped,
            fluxes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ForcingSeries;
    use crate::bem::ForcingStep;
    use proptest::prelude::*;

    fn c(t: f64) -> f64 {
        t + KELVIN_OFFSET
    }

    fn constant_forcing(t_k: f64, steps: usize) -> Arc<ForcingSeries> {
        Arc::new(ForcingSeries::new(
            (0..steps).map(|k| ForcingStep::uniform(k, t_k)).collect(),
            "constant",
        ))
    }

    fn short_env(t_k: f64, steps: usize) -> HvacEnv {
        let cfg = EpisodeConfig {
            episode_steps: steps,
            ..EpisodeConfig::default()
        };
        HvacEnv::new(BuildingParams::default(), constant_forcing(t_k, steps), cfg).unwrap()
    }

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        assert!((reward(0.0, c(21.0), &cfg) - -5.4).abs() < 1e-12);
        let w1 = cfg.with_weight(1.0);
        assert!((reward(10.0, c(3.0), &w1) - -10.0).abs() < 1e-12);
        assert!((reward(10.0, c(26.0), &cfg) - -10.0).abs() < 1e-12);
    }

    #[test]
    fn energy_term_examples() {
        let p = BuildingParams::default();
        assert_eq!(energy_term(0.0, 0.0, &p), 0.0);
        assert!((energy_term(8.64, 0.0, &p) - 10.0).abs() < 1e-12);
        assert!((energy_term(0.0, 1.548, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discounted_return_examples() {
        assert!((episode_return(&[1.0, 1.0, 1.0], 0.5) - 1.75).abs() < 1e-12);
        assert_eq!(episode_return(&[-3.0, 7.0, 2.0], 0.0), -3.0);
        assert_eq!(episode_return(&[], 0.9), 0.0);
    }

    #[test]
    fn default_controllers() {
        let l = default_controller("london").unwrap();
        assert_eq!((l.t_max_k, l.t_min_k, l.vent_ach), (380.00, 290.10, 0.3));
        let b = default_controller("beijing").unwrap();
        assert_eq!((b.t_max_k, b.t_min_k, b.vent_ach), (310.00, 285.10, 0.3));
        let h = default_controller("Hong Kong").unwrap();
        assert_eq!((h.t_max_k, h.t_min_k), (310.10, 290.10));
        assert!(matches!(default_controller("atlantis"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn discrete_table_is_a_bijection() {
        let mut seen = Vec::new();
        for a in DiscreteAction::all() {
            let sp = a.to_setpoints();
            assert!(sp.t_min_k < sp.t_max_k);
            assert_eq!(DiscreteAction::from_setpoints(&sp), Some(a));
            seen.push((sp.t_max_k.to_bits(), sp.t_min_k.to_bits(), sp.vent_ach.to_bits()));
        }
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 8);
        assert!(DiscreteAction::new(8).is_err());
    }

    #[test]
    fn reset_initializes_from_first_canopy_value() {
        let mut env = short_env(290.0, 10);
        let obs = env.reset();
        assert_eq!(obs.to_array(), [328.15, 258.15, 0.3, 290.0, 290.0]);
        assert_eq!(env.reset(), obs);
    }

    #[test]
    fn short_forcing_is_rejected() {
        let err = HvacEnv::new(
            BuildingParams::default(),
            constant_forcing(290.0, 100),
            EpisodeConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn hvac_off_action_uses_no_energy_in_mild_weather() {
        let mut env = short_env(293.0, 50);
        env.reset();
        let off = DiscreteAction::from_setpoints(&HvacEnv::INITIAL_SETPOINTS).unwrap();
        assert_eq!(off.index(), 6);
        for _ in 0..50 {
            let out = env.step(Action::Discrete(off)).unwrap();
            assert_eq!(out.energy_term, 0.0);
        }
    }

    #[test]
    fn continuous_action_converts_to_kelvin() {
        let mut env = short_env(293.0, 5);
        env.reset();
        let out = env
            .step(Action::Continuous(ContinuousAction::from_array([25.0, 20.0, 0.5])))
            .unwrap();
        let o = out.observation;
        assert!((o.ac_setpoint_k - 298.15).abs() < 1e-12);
        assert!((o.heat_setpoint_k - 293.15).abs() < 1e-12);
        assert_eq!(o.vent_ach, 0.5);
        assert!(!out.clipped);
    }

    #[test]
    fn out_of_range_actions_are_clipped_and_counted() {
        let mut env = short_env(293.0, 5);
        env.reset();
        let out = env
            .step(Action::Continuous(ContinuousAction::from_array([40.0, 5.0, 0.4])))
            .unwrap();
        assert!(out.clipped);
        assert_eq!(env.clip_count(), 1);
        assert!((out.observation.ac_setpoint_k - c(35.0)).abs() < 1e-12);
        assert!((out.observation.heat_setpoint_k - c(10.0)).abs() < 1e-12);
    }

    #[test]
    fn episode_ends_after_configured_steps() {
        let mut env = short_env(293.0, 7);
        env.reset();
        for k in 1..=7 {
            let out = env.step(Action::Setpoints(HvacEnv::INITIAL_SETPOINTS)).unwrap();
            assert_eq!(out.done, k == 7);
        }
        assert!(env.step(Action::Setpoints(HvacEnv::INITIAL_SETPOINTS)).is_err());
    }

    #[test]
    fn episode_config_from_file() {
        let kv = KeyValues::parse("w=0.3\nt_comfort_min_c=19\nepisode_steps=48", "e").unwrap();
        let cfg = EpisodeConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.reward.w, 0.3);
        assert!((cfg.reward.t_comfort_min_k - 292.15).abs() < 1e-12);
        assert_eq!(cfg.episode_steps, 48);
        let bad = KeyValues::parse("w=1.5", "e").unwrap();
        assert!(EpisodeConfig::from_key_values(&bad).is_err());
        let unknown = KeyValues::parse("alpha=1", "e").unwrap();
        assert!(EpisodeConfig::from_key_values(&unknown).is_err());
    }

    proptest! {
        #[test]
        fn comfort_term_floor(t in 250.0f64..330.0) {
            let cfg = RewardConfig::default();
            let width = cfg.t_comfort_max_k - cfg.t_comfort_min_k;
            let term = comfort_term(t, &cfg);
            prop_assert!(term >= width - 1e-12);
            let inside = t >= cfg.t_comfort_min_k && t <= cfg.t_comfort_max_k;
            prop_assert_eq!(inside, (term - width).abs() < 1e-9);
        }

        #[test]
        fn reward_reconstructs_from_terms(
            actions in prop::collection::vec((25.0f64..35.0, 10.0f64..20.0, 0.3f64..0.5), 20),
            w in 0.0f64..1.0,
        ) {
            let cfg = EpisodeConfig {
                reward: RewardConfig::default().with_weight(w),
                episode_steps: 20,
                ..EpisodeConfig::default()
            };
            let forcing: Vec<_> = (0..20)
                .map(|k| ForcingStep::uniform(k, 280.0 + k as f64 * 1.5))
                .collect();
            let mut env = HvacEnv::new(
                BuildingParams::default(),
                Arc::new(ForcingSeries::new(forcing.clone(), "ramp")),
                cfg,
            ).unwrap();
            env.reset();
            for (k, (ac, heat, vent)) in actions.into_iter().enumerate() {
                let out = env
                    .step(Action::Continuous(ContinuousAction::from_array([ac, heat, vent])))
                    .unwrap();
                let expected = -w * out.energy_term - (1.0 - w) * out.comfort_term;
                prop_assert_eq!(out.reward, expected);
                // Canopy temperature comes from the forcing, whatever the action.
                let next = (k + 1).min(19);
                prop_assert_eq!(out.observation.t_canopy_k, forcing[next].t_canopy_k);
            }
        }
    }
}
