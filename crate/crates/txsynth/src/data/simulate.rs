//! Parametric population simulator.
//!
//! Stands in for a real card-transaction extract: draws a client segment,
//! auxiliary attributes, per-category Bernoulli activations, and log-normal
//! amounts for the active categories, then injects rare multiplicative
//! outliers. A latent per-client wealth factor drives salary, credit limit,
//! and balance, and couples into activation probabilities and amounts, so
//! profiles correlate with the auxiliary attributes. Segments shift both
//! the age distribution and which category blocks a client favours, which
//! makes the spending mix partially recoverable from aux data alone.
//!
//! Every client draws from its own substream derived from (seed, index),
//! so results do not depend on iteration order.

use serde::{Deserialize, Serialize};

use crate::data::table::{AuxTable, ProfileTable, Space};
use crate::error::{Error, Result};
use crate::num::{Matrix, RngStream};

/// Ground-truth population description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    pub n_clients: usize,
    pub k_categories: usize,
    pub segment_count: usize,
    /// Relative segment sizes; normalized internally.
    pub segment_weights: Vec<f64>,
    /// Base activation probability per segment and category (S x K).
    pub segment_activation: Vec<Vec<f64>>,
    /// Log-normal location per category (natural log of dollars).
    pub amount_log_mean: Vec<f64>,
    /// Log-normal scale per category.
    pub amount_log_std: Vec<f64>,
    /// Added activation probability per unit of positive wealth factor.
    pub aux_coupling: Vec<f64>,
    pub outlier_rate: f64,
    pub outlier_scale: f64,
    pub seed: u64,
}

/// How strongly the wealth factor scales active amounts.
const WEALTH_AMOUNT_COEF: f64 = 0.25;

/// Per-segment age distribution (mean, std) and wealth shift; segments
/// beyond four cycle through these.
const SEGMENT_AGE: [(f64, f64); 4] = [(27.0, 4.0), (40.0, 5.0), (53.0, 5.0), (68.0, 6.0)];
const SEGMENT_WEALTH_SHIFT: [f64; 4] = [-0.4, 0.2, 0.4, 0.0];

pub const DEFAULT_CATEGORIES: [&str; 26] = [
    "grocery_stores",
    "restaurants",
    "gas_stations",
    "clothing_stores",
    "pharmacies",
    "utilities",
    "telecom",
    "fast_food",
    "department_stores",
    "online_retail",
    "airlines",
    "hotels",
    "entertainment",
    "insurance",
    "medical_services",
    "home_improvement",
    "electronics",
    "sporting_goods",
    "bookstores",
    "taxi_rideshare",
    "parking",
    "education",
    "charity",
    "pet_services",
    "furniture",
    "car_rental",
];

/// Median dollar amounts per default category, cycled past 26.
const DEFAULT_AMOUNT_BASE: [f64; 26] = [
    180.0, 95.0, 70.0, 85.0, 40.0, 110.0, 55.0, 35.0, 75.0, 60.0, 240.0, 150.0, 45.0, 90.0, 120.0,
    65.0, 130.0, 50.0, 25.0, 30.0, 15.0, 200.0, 35.0, 40.0, 160.0, 70.0,
];

pub fn default_categories(k: usize) -> Vec<String> {
    (0..k)
        .map(|i| {
            if i < DEFAULT_CATEGORIES.len() {
                DEFAULT_CATEGORIES[i].to_string()
            } else {
                format!("category_{i:02}")
            }
        })
        .collect()
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        let k = 26;
        let segments = 4;
        // Popularity decays with category rank; each segment boosts its own
        // block of categories and damps the rest.
        let mut segment_activation = Vec::with_capacity(segments);
        for s in 0..segments {
            let mut row = Vec::with_capacity(k);
            for cat in 0..k {
                let popularity = 0.02 + 0.85 * 0.82f64.powi(cat as i32);
                let boost = if cat % segments == s { 1.6 } else { 0.75 };
                row.push((popularity * boost).clamp(0.01, 0.97));
            }
            segment_activation.push(row);
        }
        SimulatorConfig {
            n_clients: 20_000,
            k_categories: k,
            segment_count: segments,
            segment_weights: vec![0.3, 0.3, 0.25, 0.15],
            segment_activation,
            amount_log_mean: (0..k).map(|i| DEFAULT_AMOUNT_BASE[i % 26].ln()).collect(),
            amount_log_std: vec![0.8; k],
            aux_coupling: vec![0.08; k],
            outlier_rate: 0.01,
            outlier_scale: 150.0,
            seed: 0,
        }
    }
}

impl SimulatorConfig {
    /// Default population resized to `n` clients.
    pub fn with_clients(n: usize) -> Self {
        SimulatorConfig { n_clients: n, ..SimulatorConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.n_clients == 0 {
            issues.push("n_clients must be >= 1".to_string());
        }
        if self.k_categories == 0 {
            issues.push("k_categories must be >= 1".to_string());
        }
        if self.segment_count == 0 {
            issues.push("segment_count must be >= 1".to_string());
        }
        if self.segment_weights.len() != self.segment_count {
            issues.push(format!(
                "segment_weights has {} entries, expected segment_count = {}",
                self.segment_weights.len(),
                self.segment_count
            ));
        }
        if self.segment_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            issues.push("segment_weights must be non-negative and finite".to_string());
        }
        if self.segment_weights.iter().sum::<f64>() <= 0.0 {
            issues.push("segment_weights must sum to a positive value".to_string());
        }
        if self.segment_activation.len() != self.segment_count {
            issues.push(format!(
                "segment_activation has {} rows, expected segment_count = {}",
                self.segment_activation.len(),
                self.segment_count
            ));
        }
        for (s, row) in self.segment_activation.iter().enumerate() {
            if row.len() != self.k_categories {
                issues.push(format!(
                    "segment_activation[{s}] has {} entries, expected k_categories = {}",
                    row.len(),
                    self.k_categories
                ));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                issues.push(format!("segment_activation[{s}] has probabilities outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("amount_log_mean", &self.amount_log_mean),
            ("amount_log_std", &self.amount_log_std),
            ("aux_coupling", &self.aux_coupling),
        ] {
            if v.len() != self.k_categories {
                issues.push(format!(
                    "{name} has {} entries, expected k_categories = {}",
                    v.len(),
                    self.k_categories
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                issues.push(format!("{name} has non-finite entries"));
            }
        }
        if self.amount_log_std.iter().any(|s| *s < 0.0) {
            issues.push("amount_log_std must be non-negative".to_string());
        }
        if !(0.0..=0.05).contains(&self.outlier_rate) {
            issues.push(format!("outlier_rate must be in [0, 0.05] (got {})", self.outlier_rate));
        }
        if !(self.outlier_scale > 0.0 && self.outlier_scale.is_finite()) {
            issues.push(format!("outlier_scale must be positive (got {})", self.outlier_scale));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(issues))
        }
    }

    /// Activation probability for one client: base rate for the segment
    /// plus the wealth coupling, clamped to [0, 1]. Monotone in the
    /// coupling coefficient for every fixed (segment, wealth) draw.
    pub fn activation_probability(&self, segment: usize, category: usize, wealth: f64) -> f64 {
        let base = self.segment_activation[segment][category];
        (base + self.aux_coupling[category] * wealth.max(0.0)).clamp(0.0, 1.0)
    }
}

fn pick_segment(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Draw the full population. Deterministic per seed.
pub fn simulate_population(cfg: &SimulatorConfig) -> Result<(ProfileTable, AuxTable)> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed);
    let k = cfg.k_categories;
    let mut amounts = Matrix::zeros(cfg.n_clients, k);
    let mut aux = Matrix::zeros(cfg.n_clients, 5);
    let mut active = Vec::with_capacity(k);

    for i in 0..cfg.n_clients {
        let mut rng = root.substream_index(i as u64);

        let segment = pick_segment(&cfg.segment_weights, rng.next_uniform());
        let (age_mean, age_std) = SEGMENT_AGE[segment % 4];
        let age = (age_mean + age_std * rng.next_normal()).clamp(18.0, 95.0);
        let wealth = SEGMENT_WEALTH_SHIFT[segment % 4] + rng.next_normal();
        let salary = 28_000.0 * (0.45 * wealth + 0.15 * rng.next_normal()).exp();
        let credit_limit = 1_500.0 + 0.12 * salary * (0.25 * rng.next_normal()).exp();
        let balance = 400.0 * (0.5 * wealth + 0.4 * rng.next_normal()).exp();
        let last_repayment = balance * (0.15 + 0.8 * rng.next_uniform());
        for (col, v) in [age, salary, credit_limit, balance, last_repayment].into_iter().enumerate() {
            aux.set(i, col, v);
        }

        // All activation draws happen before any amount draw so that
        // changing amount or coupling parameters cannot shift which
        // uniforms decide activation.
        active.clear();
        for cat in 0..k {
            if rng.next_uniform() < cfg.activation_probability(segment, cat, wealth) {
                active.push(cat);
            }
        }
        for &cat in &active {
            let amount = (cfg.amount_log_mean[cat]
                + cfg.amount_log_std[cat] * rng.next_normal()
                + WEALTH_AMOUNT_COEF * wealth)
                .exp();
            amounts.set(i, cat, amount);
        }
        if !active.is_empty() && rng.next_uniform() < cfg.outlier_rate {
            let cat = active[rng.next_below(active.len() as u64) as usize];
            let v = amounts.get(i, cat);
            amounts.set(i, cat, v * cfg.outlier_scale);
        }
    }

    let ids: Vec<String> = (0..cfg.n_clients).map(|i| format!("c{i:06}")).collect();
    let profiles = ProfileTable::new(ids.clone(), default_categories(k), amounts, Space::Dollars)?;
    let aux_table = AuxTable::new(ids, aux, false)?;
    Ok((profiles, aux_table))
}
