//! Run configuration. Every field has a default, and the resolved config is
//! echoed into each report together with its SHA-256 hash.

use std::path::{Path, PathBuf};

use biest::exact::{Exact, Rat};
use biest::forms::parse_rat;
use biest::packets::Window;
use biest::tiles::OrderConstants;
use biest::whitney::{CoverBox, CoverSpec, SingularSet, WhitneyConstants};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub window: WindowConfig,
    /// Base order constants; `desk_overrides` replaces individual fields.
    pub order: OrderConstants,
    pub desk_overrides: Option<OrderOverrides>,
    pub whitney: WhitneyConfig,
    pub seeds: SeedConfig,
    pub budgets: Budgets,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub log2_length: i32,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderOverrides {
    pub c_order: Option<i128>,
    pub c_lesssim: Option<i128>,
    pub c_scale: Option<i128>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhitneyConfig {
    pub c_lo: i64,
    pub c_hi: i64,
    /// Cover box half width, as an integer or fraction.
    pub half_width: String,
    pub j_min: i32,
    pub j_max: i32,
    pub k_max: usize,
    pub grid: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub start: u64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Largest collection on which the modified energy is solved exactly.
    pub exact_energy: usize,
    /// Tile cap for the exact energy packing search.
    pub energy_search: usize,
    /// Bin-triple cap for the direct trilinear operator.
    pub direct_t: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Constant in the exceptional set, exact decimal or fraction.
    pub c_omega: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Reports go to stdout; with a directory they are also written there.
    pub dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window: WindowConfig::default(),
            order: OrderConstants::NOMINAL,
            desk_overrides: Some(OrderOverrides {
                c_order: None,
                c_lesssim: Some(OrderConstants::DESK.c_lesssim),
                c_scale: Some(OrderConstants::DESK.c_scale),
            }),
            whitney: WhitneyConfig::default(),
            seeds: SeedConfig::default(),
            budgets: Budgets::default(),
            experiment: ExperimentConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { log2_length: 6, samples: 1024 }
    }
}

impl Default for WhitneyConfig {
    fn default() -> Self {
        WhitneyConfig {
            c_lo: WhitneyConstants::DESK.c_lo,
            c_hi: WhitneyConstants::DESK.c_hi,
            half_width: "1".into(),
            j_min: -7,
            j_max: -4,
            k_max: 5,
            grid: biest::whitney::DEFAULT_GRID,
            delta: 0.25,
        }
    }
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig { start: 0, count: 10 }
    }
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            exact_energy: biest::functionals::DEFAULT_EXACT_LIMIT,
            energy_search: biest::functionals::DEFAULT_ENERGY_BUDGET,
            direct_t: 1 << 24,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { c_omega: "8".into() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Order constants after applying the desk overrides.
    pub fn order_constants(&self) -> OrderConstants {
        let mut c = self.order;
        if let Some(o) = &self.desk_overrides {
            c.c_order = o.c_order.unwrap_or(c.c_order);
            c.c_lesssim = o.c_lesssim.unwrap_or(c.c_lesssim);
            c.c_scale = o.c_scale.unwrap_or(c.c_scale);
        }
        c
    }

    pub fn window(&self) -> Window {
        Window::new(self.window.log2_length, self.window.samples)
    }

    pub fn whitney_constants(&self) -> WhitneyConstants {
        WhitneyConstants { c_lo: self.whitney.c_lo, c_hi: self.whitney.c_hi }
    }

    pub fn cover_spec(&self, set: SingularSet) -> Result<CoverSpec, String> {
        let half: Exact = self.whitney.half_width.parse().map_err(|e| format!("whitney.half_width: {e}"))?;
        CoverSpec::new(
            set,
            self.whitney_constants(),
            CoverBox { half_width: half, j_min: self.whitney.j_min, j_max: self.whitney.j_max },
            self.order_constants(),
        )
        .map_err(|e| format!("whitney: {e}"))
    }

    pub fn c_omega(&self) -> Result<Rat, String> {
        parse_rat(&self.experiment.c_omega)
            .filter(|c| *c > Rat::from_integer(0))
            .ok_or_else(|| format!("experiment.c_omega must be a positive number, got {:?}", self.experiment.c_omega))
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds.count as u64).map(|k| self.seeds.start.wrapping_add(k)).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        self.order.validate()?;
        self.order_constants().validate()?;
        let w = &self.window;
        if !w.samples.is_power_of_two() || w.samples < 16 {
            return Err(format!("window.samples must be a power of two >= 16, got {}", w.samples));
        }
        if !(0..=20).contains(&w.log2_length) {
            return Err(format!("window.log2_length must lie in 0..=20, got {}", w.log2_length));
        }
        if self.seeds.count == 0 {
            return Err("seeds.count must be positive".into());
        }
        let b = &self.budgets;
        if b.exact_energy == 0 || b.energy_search == 0 || b.direct_t == 0 {
            return Err("budgets must be positive".into());
        }
        let wh = &self.whitney;
        if wh.k_max < 3 || wh.grid < 4 || !(wh.delta > 0.0 && wh.delta.is_finite()) {
            return Err("whitney: k_max >= 3, grid >= 4 and delta > 0 are required".into());
        }
        self.cover_spec(SingularSet::Double)?;
        self.c_omega()?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
