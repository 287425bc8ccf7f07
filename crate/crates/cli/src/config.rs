//! Run parameters: a JSON config file merged with command-line flags, the
//! flags taking precedence.

use std::path::{Path, PathBuf};

use clap::Args;
use rotbec::asymptotics::{GridPolicy, Rotation};
use rotbec::potentials::TrapPotential;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Fixed angular velocity (sub-linear regime).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub epsilon: Vec<f64>,
    /// Rotation values of a TF rate sweep.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub omega0_list: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// `trial`, `random` or a checkpoint path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// `(coefficient, exponent)` terms of a general potential.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<(f64, f64)>,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Trap exponent (s > 2).
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// Scaled rotation ω₀ = εω (linear regime).
    #[arg(long, allow_negative_numbers = true)]
    pub omega0: Option<f64>,
    /// Prefactor of ω = ω₁ ε^{-1-α} (super-linear regime).
    #[arg(long, allow_negative_numbers = true)]
    pub omega1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Fixed angular velocity (sub-linear regime).
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// One value, or a comma-separated list for sweeps.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub epsilon: Vec<f64>,
    /// Comma-separated ω₀ values for a TF rate sweep.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub omega0_list: Vec<f64>,
    /// Grid cells per side (overrides the ε-based policy).
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Box half-width in units of R_out.
    #[arg(long, allow_negative_numbers = true)]
    pub box_factor: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// GP initial state: `trial`, `random` or a checkpoint file.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Homogeneity exponent of a general potential.
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    /// Homogeneity constant of a general potential.
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    /// Potential term `COEFFICIENT:EXPONENT`; repeat for a sum.
    #[arg(long = "term", value_parser = parse_term, allow_hyphen_values = true)]
    pub terms: Vec<(f64, f64)>,
}

fn parse_term(text: &str) -> Result<(f64, f64), String> {
    let (a, e) = text
        .split_once(':')
        .ok_or_else(|| format!("expected COEFFICIENT:EXPONENT, got {text:?}"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((num(a)?, num(e)?))
}

impl Flags {
    /// Loads the config file (if any) and applies the flags on top.
    pub fn resolve(&self) -> Result<RunConfig, Failure> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(base.overridden_by(self))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn overridden_by(mut self, flags: &Flags) -> Self {
        fn set<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        set(&mut self.s, &flags.s);
        set(&mut self.omega0, &flags.omega0);
        set(&mut self.omega1, &flags.omega1);
        set(&mut self.alpha, &flags.alpha);
        set(&mut self.omega, &flags.omega);
        set(&mut self.grid_n, &flags.grid_n);
        set(&mut self.box_factor, &flags.box_factor);
        set(&mut self.out, &flags.out);
        set(&mut self.init, &flags.init);
        set(&mut self.seed, &flags.seed);
        set(&mut self.kappa, &flags.kappa);
        set(&mut self.c, &flags.c);
        if !flags.epsilon.is_empty() {
            self.epsilon.clone_from(&flags.epsilon);
        }
        if !flags.omega0_list.is_empty() {
            self.omega0_list.clone_from(&flags.omega0_list);
        }
        if !flags.terms.is_empty() {
            self.terms.clone_from(&flags.terms);
        }
        self
    }

    pub fn s(&self) -> Result<f64, Failure> {
        self.s.ok_or_else(|| Failure::Usage("--s is required".into()))
    }

    pub fn omega0(&self) -> Result<f64, Failure> {
        self.omega0.ok_or_else(|| Failure::Usage("--omega0 is required".into()))
    }

    /// The single `ε` of a point run.
    pub fn single_epsilon(&self) -> Result<f64, Failure> {
        match self.epsilon[..] {
            [eps] => Ok(eps),
            [] => Err(Failure::Usage("--epsilon is required".into())),
            _ => Err(Failure::Usage("this command takes a single --epsilon".into())),
        }
    }

    /// `--omega0` alone (linear; 0 means no rotation), `--omega1` with
    /// `--alpha` (super-linear) or `--omega` (sub-linear).
    pub fn rotation(&self) -> Result<Rotation, Failure> {
        let rotation = match (self.omega0, self.omega1, self.alpha, self.omega) {
            (Some(0.0), None, None, None) => Rotation::Sub { omega: 0.0 },
            (Some(omega0), None, None, None) => Rotation::Linear { omega0 },
            (None, Some(omega1), Some(alpha), None) => Rotation::Super { omega1, alpha },
            (None, None, None, Some(omega)) => Rotation::Sub { omega },
            _ => {
                return Err(Failure::Usage(
                    "give exactly one of --omega0, --omega1 with --alpha, or --omega".into(),
                ))
            }
        };
        rotation.validate()?;
        Ok(rotation)
    }

    pub fn policy(&self) -> GridPolicy {
        let mut policy = GridPolicy::default();
        if let Some(b) = self.box_factor {
            policy.box_factor = b;
        }
        if let Some(n) = self.grid_n {
            policy.min_n = n;
            policy.max_n = n;
        }
        policy
    }

    /// `r^s`, or the declared polynomial when terms are given.
    pub fn potential(&self) -> Result<TrapPotential, Failure> {
        let s = self.s()?;
        if self.terms.is_empty() {
            return Ok(TrapPotential::homogeneous(s)?);
        }
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Failure::Usage(format!("--{name} is required with --term")))
        };
        Ok(TrapPotential::polynomial(
            s,
            need(self.kappa, "kappa")?,
            need(self.c, "c")?,
            self.terms.clone(),
        )?)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}
