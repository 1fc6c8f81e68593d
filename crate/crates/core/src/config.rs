//! Protocol and traffic parameters.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validated parameter tuple of a frameless ALOHA system.
///
/// `num_users` terminals, per-slot access probability `tx_prob` (slot 1 of a
/// contention period is always used by every active user), per-slot per-user
/// generation probability `gen_prob`, and maximum contention-period length
/// `max_cp_len` in slots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    num_users: usize,
    tx_prob: f64,
    gen_prob: f64,
    max_cp_len: usize,
}

impl SystemConfig {
    pub fn new(num_users: usize, tx_prob: f64, gen_prob: f64, max_cp_len: usize) -> Result<Self> {
        if num_users < 1 {
            return Err(Error::param("users", "must be at least 1"));
        }
        // q = 0 would silence every slot after the first, leaving the chains
        // for n >= 2 without any decoding path.
        if !(tx_prob > 0.0 && tx_prob <= 1.0) {
            return Err(Error::param("q", format!("{tx_prob} is outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&gen_prob) {
            return Err(Error::param("gamma", format!("{gen_prob} is outside [0, 1]")));
        }
        if max_cp_len < 1 {
            return Err(Error::param("dmax", "must be at least 1 slot"));
        }
        Ok(SystemConfig {
            num_users,
            tx_prob,
            gen_prob,
            max_cp_len,
        })
    }

    /// Builds a config from the channel load `gamma * users` instead of `gamma`.
    pub fn with_load(num_users: usize, tx_prob: f64, load: f64, max_cp_len: usize) -> Result<Self> {
        if num_users < 1 {
            return Err(Error::param("users", "must be at least 1"));
        }
        if !(load >= 0.0 && load <= num_users as f64) {
            return Err(Error::param(
                "load",
                format!("{load} is outside [0, {num_users}]"),
            ));
        }
        Self::new(num_users, tx_prob, load / num_users as f64, max_cp_len)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn tx_prob(&self) -> f64 {
        self.tx_prob
    }

    pub fn gen_prob(&self) -> f64 {
        self.gen_prob
    }

    pub fn max_cp_len(&self) -> usize {
        self.max_cp_len
    }

    /// Mean number of packets generated per slot, `gamma * users`.
    pub fn load(&self) -> f64 {
        self.gen_prob * self.num_users as f64
    }

    pub fn with_tx_prob(&self, q: f64) -> Result<Self> {
        Self::new(self.num_users, q, self.gen_prob, self.max_cp_len)
    }

    pub fn with_max_cp_len(&self, max_cp_len: usize) -> Result<Self> {
        Self::new(self.num_users, self.tx_prob, self.gen_prob, max_cp_len)
    }

    pub fn with_gen_prob(&self, gamma: f64) -> Result<Self> {
        Self::new(self.num_users, self.tx_prob, gamma, self.max_cp_len)
    }

    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            users: Some(self.num_users),
            q: Some(self.tx_prob),
            gamma: Some(self.gen_prob),
            load: None,
            dmax: Some(self.max_cp_len),
        }
    }
}

impl fmt::Display for SystemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "U={} q={} gamma={} (gammaU={}) dmax={}",
            self.num_users,
            self.tx_prob,
            self.gen_prob,
            self.load(),
            self.max_cp_len
        )
    }
}

/// Unvalidated parameters as they come from flags or a config file.
/// Either `gamma` or `load` (= gamma * users) may be given, not both.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawConfig {
    pub users: Option<usize>,
    pub q: Option<f64>,
    pub gamma: Option<f64>,
    pub load: Option<f64>,
    pub dmax: Option<usize>,
}

impl RawConfig {
    /// Reads the recognised keys out of a flat parameter map. Unknown keys are
    /// left for the caller.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        fn parse<T: std::str::FromStr>(
            map: &BTreeMap<String, String>,
            key: &'static str,
        ) -> Result<Option<T>> {
            map.get(key)
                .map(|v| {
                    v.trim()
                        .parse::<T>()
                        .map_err(|_| Error::param(key, format!("cannot parse {v:?}")))
                })
                .transpose()
        }
        Ok(RawConfig {
            users: parse(map, "users")?,
            q: parse(map, "q")?,
            gamma: parse(map, "gamma")?,
            load: parse(map, "load")?,
            dmax: parse(map, "dmax")?,
        })
    }

    /// Fields set in `other` replace the ones in `self`. Setting either of
    /// `gamma`/`load` clears the other.
    pub fn overlay(&self, other: &RawConfig) -> RawConfig {
        let (gamma, load) = if other.gamma.is_some() || other.load.is_some() {
            (other.gamma, other.load)
        } else {
            (self.gamma, self.load)
        };
        RawConfig {
            users: other.users.or(self.users),
            q: other.q.or(self.q),
            gamma,
            load,
            dmax: other.dmax.or(self.dmax),
        }
    }
}

/// Validates raw parameters into a [`SystemConfig`]. When the load form is
/// given, `gamma = load / users`.
pub fn validate_config(raw: &RawConfig) -> Result<SystemConfig> {
    let users = raw.users.ok_or(Error::MissingParameter("users"))?;
    let q = raw.q.ok_or(Error::MissingParameter("q"))?;
    let dmax = raw.dmax.ok_or(Error::MissingParameter("dmax"))?;
    match (raw.gamma, raw.load) {
        (Some(_), Some(_)) => Err(Error::param(
            "gamma",
            "give either gamma or load, not both",
        )),
        (Some(g), None) => SystemConfig::new(users, q, g, dmax),
        (None, Some(l)) => SystemConfig::with_load(users, q, l, dmax),
        (None, None) => Err(Error::MissingParameter("gamma")),
    }
}
