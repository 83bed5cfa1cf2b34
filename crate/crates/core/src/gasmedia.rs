//! Refractive index and Kerr nonlinearity of filling gases.
//!
//! Coefficients live in a TOML data file (bundled copy in `data/gases.toml`,
//! overridable through [`GAS_DATA_ENV`]). The same file carries the silica
//! model used by the fiber cladding.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming an alternative gas data file.
pub const GAS_DATA_ENV: &str = "HCFWM_GAS_DATA";

/// Temperature used when a configuration does not specify one.
pub const DEFAULT_TEMPERATURE_K: f64 = 293.15;

const BUNDLED_GAS_DATA: &str = include_str!("../data/gases.toml");

/// One pole of a Sellmeier expansion, `B lambda^2 / (lambda^2 - C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellmeierTerm {
    pub b: f64,
    /// Pole position in um^2.
    pub c_um2: f64,
}

/// `n^2 - 1 = sum_k B_k lambda^2 / (lambda^2 - C_k)` at reference conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellmeierModel {
    pub species: String,
    pub terms: Vec<SellmeierTerm>,
    /// Validity window (min, max) in nm.
    pub valid_range_nm: (f64, f64),
    pub p0_bar: f64,
    pub t0_k: f64,
}

impl SellmeierModel {
    pub fn new(
        species: impl Into<String>,
        terms: Vec<SellmeierTerm>,
        valid_range_nm: (f64, f64),
        p0_bar: f64,
        t0_k: f64,
    ) -> Result<Self> {
        let species = species.into();
        if terms.is_empty() {
            return Err(Error::validation(
                format!("{species}.B"),
                "Sellmeier model needs at least one term",
            ));
        }
        let (lo, hi) = valid_range_nm;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::validation(
                format!("{species}.lambda_min_nm"),
                format!("invalid validity window [{lo}, {hi}] nm"),
            ));
        }
        if !(p0_bar > 0.0 && t0_k > 0.0) {
            return Err(Error::validation(
                format!("{species}.P0_bar"),
                "reference pressure and temperature must be positive",
            ));
        }
        let lo2 = (lo * 1e-3).powi(2);
        let hi2 = (hi * 1e-3).powi(2);
        for t in &terms {
            if !t.b.is_finite() || !t.c_um2.is_finite() {
                return Err(Error::validation(
                    format!("{species}.B"),
                    "coefficients must be finite",
                ));
            }
            if t.c_um2 >= lo2 && t.c_um2 <= hi2 {
                return Err(Error::validation(
                    format!("{species}.C_um2"),
                    format!("pole at {:.1} nm lies inside the validity window", t.c_um2.sqrt() * 1e3),
                ));
            }
        }
        Ok(Self {
            species,
            terms,
            valid_range_nm,
            p0_bar,
            t0_k,
        })
    }

    /// Constant-index model (`C = 0`) valid everywhere in `range`.
    pub fn constant(species: impl Into<String>, index: f64, range: (f64, f64)) -> Result<Self> {
        Self::new(
            species,
            vec![SellmeierTerm {
                b: index * index - 1.0,
                c_um2: 0.0,
            }],
            range,
            1.0,
            273.15,
        )
    }

    pub fn contains(&self, lambda_nm: f64) -> bool {
        lambda_nm >= self.valid_range_nm.0 && lambda_nm <= self.valid_range_nm.1
    }

    fn check_range(&self, lambda_nm: f64) -> Result<()> {
        if self.contains(lambda_nm) {
            Ok(())
        } else {
            Err(Error::Range {
                species: self.species.clone(),
                lambda_nm,
                min_nm: self.valid_range_nm.0,
                max_nm: self.valid_range_nm.1,
            })
        }
    }

    /// `n^2 - 1` at reference conditions.
    pub fn susceptibility(&self, lambda_nm: f64) -> Result<f64> {
        self.check_range(lambda_nm)?;
        let l2 = (lambda_nm * 1e-3).powi(2);
        Ok(self.terms.iter().map(|t| t.b * l2 / (l2 - t.c_um2)).sum())
    }
}

/// Index at the model's reference conditions.
pub fn sellmeier_index(model: &SellmeierModel, lambda_nm: f64) -> Result<f64> {
    Ok((1.0 + model.susceptibility(lambda_nm)?).sqrt())
}

/// A gas fill at a given pressure and temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasState {
    pub species: String,
    pub sellmeier: SellmeierModel,
    pub pressure_bar: f64,
    pub temperature_k: f64,
    /// Kerr index per unit pressure, m^2/W/bar.
    pub n2_per_bar: f64,
}

impl GasState {
    pub fn new(
        sellmeier: SellmeierModel,
        pressure_bar: f64,
        temperature_k: f64,
        n2_per_bar: f64,
    ) -> Result<Self> {
        if !(pressure_bar >= 0.0 && pressure_bar.is_finite()) {
            return Err(Error::validation(
                "gas.pressure_bar",
                format!("must be >= 0, got {pressure_bar}"),
            ));
        }
        if !(temperature_k > 0.0 && temperature_k.is_finite()) {
            return Err(Error::validation(
                "gas.temperature_K",
                format!("must be > 0, got {temperature_k}"),
            ));
        }
        if !(n2_per_bar >= 0.0 && n2_per_bar.is_finite()) {
            return Err(Error::validation(
                "gas.n2_per_bar_m2W",
                format!("must be >= 0, got {n2_per_bar}"),
            ));
        }
        Ok(Self {
            species: sellmeier.species.clone(),
            sellmeier,
            pressure_bar,
            temperature_k,
            n2_per_bar,
        })
    }

    /// Same gas at another pressure.
    pub fn with_pressure(&self, pressure_bar: f64) -> Result<Self> {
        Self::new(
            self.sellmeier.clone(),
            pressure_bar,
            self.temperature_k,
            self.n2_per_bar,
        )
    }

    /// Density scaling factor `(P / P0) (T0 / T)`.
    pub fn density_ratio(&self) -> f64 {
        (self.pressure_bar / self.sellmeier.p0_bar) * (self.sellmeier.t0_k / self.temperature_k)
    }

    /// `n^2 - 1` at the gas's pressure and temperature.
    pub fn susceptibility(&self, lambda_nm: f64) -> Result<f64> {
        Ok(self.sellmeier.susceptibility(lambda_nm)? * self.density_ratio())
    }

    /// `n - 1`, computed without cancellation.
    pub fn index_excess(&self, lambda_nm: f64) -> Result<f64> {
        let chi = self.susceptibility(lambda_nm)?;
        Ok(chi / (1.0 + (1.0 + chi).sqrt()))
    }
}

/// Gas index at pressure P and temperature T by scaling the reference
/// susceptibility with the number density.
pub fn gas_index(gas: &GasState, lambda_nm: f64) -> Result<f64> {
    Ok((1.0 + gas.susceptibility(lambda_nm)?).sqrt())
}

/// Kerr index of the fill, m^2/W.
pub fn nonlinear_index(gas: &GasState) -> f64 {
    gas.n2_per_bar * gas.pressure_bar
}

/// One species entry of the gas data file. Key names are part of the file
/// format.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasRecord {
    pub B: Vec<f64>,
    pub C_um2: Vec<f64>,
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub P0_bar: f64,
    pub T0_K: f64,
    pub n2_per_bar_m2W: f64,
}

/// Parsed gas data file, keyed by species name.
#[derive(Debug, Clone, PartialEq)]
pub struct GasDatabase {
    records: BTreeMap<String, GasRecord>,
}

impl GasDatabase {
    pub fn parse(text: &str) -> Result<Self> {
        let records: BTreeMap<String, GasRecord> = toml::from_str(text)?;
        let db = Self { records };
        for name in db.records.keys() {
            db.model(name)?;
        }
        Ok(db)
    }

    /// The data file shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_GAS_DATA).expect("bundled gas data is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Bundled data unless [`GAS_DATA_ENV`] points elsewhere.
    pub fn load() -> Result<Self> {
        match std::env::var_os(GAS_DATA_ENV) {
            Some(path) if !path.is_empty() => Self::from_path(path),
            _ => Ok(Self::bundled()),
        }
    }

    pub fn species(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn record(&self, species: &str) -> Result<&GasRecord> {
        self.records
            .get(species)
            .ok_or_else(|| Error::UnknownSpecies(species.to_string()))
    }

    pub fn model(&self, species: &str) -> Result<SellmeierModel> {
        let r = self.record(species)?;
        if r.B.len() != r.C_um2.len() {
            return Err(Error::validation(
                format!("{species}.C_um2"),
                "B and C_um2 must have the same length",
            ));
        }
        let terms = r
            .B
            .iter()
            .zip(&r.C_um2)
            .map(|(&b, &c_um2)| SellmeierTerm { b, c_um2 })
            .collect();
        SellmeierModel::new(
            species,
            terms,
            (r.lambda_min_nm, r.lambda_max_nm),
            r.P0_bar,
            r.T0_K,
        )
    }

    pub fn gas(&self, species: &str, pressure_bar: f64, temperature_k: f64) -> Result<GasState> {
        let n2 = self.record(species)?.n2_per_bar_m2W;
        GasState::new(self.model(species)?, pressure_bar, temperature_k, n2)
    }

    pub fn silica(&self) -> Result<SellmeierModel> {
        self.model("silica")
    }
}
