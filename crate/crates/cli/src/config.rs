//! Run configuration: a flat TOML table. Every key has a default, and the
//! resolved table is written next to the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use covcop::copula::Rotation;
use covcop::links::{Elicited, GBetaSpec, Link};
use covcop::mcmc::{ChainConfig, InitOptions, ProposalConfig};
use covcop::posterior::TauLinkMode;
use covcop::settings::PriorSettings;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Price files (date, close, optional high, low) of the two series.
    pub data_1: String,
    pub data_2: String,
    /// Ready-made design (y1, y2, m1:<cov>..., m2:<cov>...), used instead
    /// of the price files when set. Taken as already standardized.
    pub design_file: String,
    /// Covariates to keep, by name; empty keeps all.
    pub covariates: Vec<String>,
    /// Drop all covariates (intercept-only model).
    pub no_covariates: bool,
    pub train_fraction: f64,

    pub seed: u64,
    pub chains: usize,
    /// 0 uses all cores.
    pub threads: usize,
    pub sweeps: usize,
    pub burn_in: usize,

    /// "conditional" or "truncated".
    pub tau_link: String,
    /// "logit" or "glogit".
    pub lambda_link: String,
    pub lambda_glogit_lower: f64,
    pub lambda_glogit_upper: f64,
    pub rotation: u32,
    pub independence: bool,
    pub select_margins: bool,
    pub select_copula: bool,

    pub prior_mu_mean: f64,
    pub prior_mu_var: f64,
    pub prior_phi_mean: f64,
    pub prior_phi_var: f64,
    pub prior_nu_mean: f64,
    pub prior_nu_var: f64,
    pub prior_kappa_mean: f64,
    pub prior_kappa_var: f64,
    pub prior_lambda_mean: f64,
    pub prior_lambda_sd: f64,
    pub prior_tau_mean: f64,
    pub prior_tau_sd: f64,
    pub slope_scale: f64,
    pub inclusion_prob: f64,

    pub newton_steps: usize,
    pub proposal_df: f64,
    pub p_prop: f64,
    pub rw_scale: f64,
    pub init_rounds: usize,
    pub init_lbfgs_iters: usize,

    pub grid_resolution: usize,
    /// Existing τ table to load instead of building one.
    pub taugrid_file: String,

    pub sim_n: usize,
    pub sim_ar: f64,
    /// Coefficients as rows `block, b0, slope...`; empty uses the built-in
    /// reference design with two covariates per margin.
    pub sim_truth_file: String,

    /// Draws to score; empty reads draws.csv in the output directory.
    pub eval_draws_file: String,
    pub eval_label: String,
    pub eval_max_draws: usize,
    pub eval_sequential: bool,

    pub empcopula_levels: usize,
    /// Posterior draws used for features_timeseries.csv.
    pub feature_draws: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PriorSettings::default();
        let (mu_m, mu_v) = elicited_moments(p.mu);
        let (phi_m, phi_v) = elicited_moments(p.phi);
        let (nu_m, nu_v) = elicited_moments(p.nu);
        let (ka_m, ka_v) = elicited_moments(p.kappa);
        let prop = ProposalConfig::default();
        let init = InitOptions::default();
        Self {
            data_1: String::new(),
            data_2: String::new(),
            design_file: String::new(),
            covariates: Vec::new(),
            no_covariates: false,
            train_fraction: 0.8,
            seed: 1,
            chains: 1,
            threads: 0,
            sweeps: 2000,
            burn_in: 400,
            tau_link: "conditional".into(),
            lambda_link: "logit".into(),
            lambda_glogit_lower: 0.0,
            lambda_glogit_upper: 1.0,
            rotation: 0,
            independence: false,
            select_margins: true,
            select_copula: true,
            prior_mu_mean: mu_m,
            prior_mu_var: mu_v,
            prior_phi_mean: phi_m,
            prior_phi_var: phi_v,
            prior_nu_mean: nu_m,
            prior_nu_var: nu_v,
            prior_kappa_mean: ka_m,
            prior_kappa_var: ka_v,
            prior_lambda_mean: p.lambda_l.m,
            prior_lambda_sd: p.lambda_l.sigma,
            prior_tau_mean: p.tau.m,
            prior_tau_sd: p.tau.sigma,
            slope_scale: p.slope_scale,
            inclusion_prob: p.inclusion_prob,
            newton_steps: prop.newton_steps,
            proposal_df: prop.df,
            p_prop: prop.p_prop,
            rw_scale: prop.rw_scale,
            init_rounds: init.max_rounds,
            init_lbfgs_iters: init.lbfgs_iters,
            grid_resolution: 512,
            taugrid_file: String::new(),
            sim_n: 300,
            sim_ar: 0.5,
            sim_truth_file: String::new(),
            eval_draws_file: String::new(),
            eval_label: "model".into(),
            eval_max_draws: 1000,
            eval_sequential: false,
            empcopula_levels: 20,
            feature_draws: 200,
        }
    }
}

fn elicited_moments(e: Elicited) -> (f64, f64) {
    match e {
        Elicited::Normal { mean, var } | Elicited::LogNormal { mean, var } => (mean, var),
        Elicited::GBeta(g) => (g.m, g.sigma * g.sigma),
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat table serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(config_err(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.chains == 0 {
            return Err(config_err("chains must be at least 1"));
        }
        if self.sweeps == 0 || self.burn_in >= self.sweeps {
            return Err(config_err(format!(
                "need burn_in < sweeps, got {} and {}",
                self.burn_in, self.sweeps
            )));
        }
        if self.grid_resolution < 2 {
            return Err(config_err("grid_resolution must be at least 2"));
        }
        if self.empcopula_levels == 0 {
            return Err(config_err("empcopula_levels must be positive"));
        }
        self.tau_mode()?;
        self.lambda_link()?;
        self.rotation()?;
        self.priors()?;
        self.proposal().validate().map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }

    pub fn tau_mode(&self) -> Result<TauLinkMode, CliError> {
        match self.tau_link.as_str() {
            "conditional" => Ok(TauLinkMode::Conditional),
            "truncated" => Ok(TauLinkMode::Truncated),
            other => Err(config_err(format!(
                "tau_link `{other}`: expected conditional or truncated"
            ))),
        }
    }

    pub fn lambda_link(&self) -> Result<Link<f64>, CliError> {
        match self.lambda_link.as_str() {
            "logit" => Ok(Link::Logit),
            "glogit" => {
                Link::glogit(self.lambda_glogit_lower, self.lambda_glogit_upper).map_err(|e| config_err(e.to_string()))
            }
            other => Err(config_err(format!("lambda_link `{other}`: expected logit or glogit"))),
        }
    }

    pub fn rotation(&self) -> Result<Rotation, CliError> {
        Rotation::from_degrees(self.rotation).map_err(|e| config_err(e.to_string()))
    }

    pub fn priors(&self) -> Result<PriorSettings, CliError> {
        let gbeta = |m, s| GBetaSpec::new(0.0, 1.0, m, s).map_err(|e| config_err(e.to_string()));
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("{name} must be positive, got {v}")))
            }
        };
        for (name, v) in [
            ("prior_mu_var", self.prior_mu_var),
            ("prior_phi_mean", self.prior_phi_mean),
            ("prior_phi_var", self.prior_phi_var),
            ("prior_nu_mean", self.prior_nu_mean),
            ("prior_nu_var", self.prior_nu_var),
            ("prior_kappa_mean", self.prior_kappa_mean),
            ("prior_kappa_var", self.prior_kappa_var),
            ("slope_scale", self.slope_scale),
        ] {
            positive(name, v)?;
        }
        if !(self.inclusion_prob > 0.0 && self.inclusion_prob < 1.0) {
            return Err(config_err(format!(
                "inclusion_prob {} outside (0, 1)",
                self.inclusion_prob
            )));
        }
        Ok(PriorSettings {
            mu: Elicited::Normal {
                mean: self.prior_mu_mean,
                var: self.prior_mu_var,
            },
            phi: Elicited::LogNormal {
                mean: self.prior_phi_mean,
                var: self.prior_phi_var,
            },
            nu: Elicited::LogNormal {
                mean: self.prior_nu_mean,
                var: self.prior_nu_var,
            },
            kappa: Elicited::LogNormal {
                mean: self.prior_kappa_mean,
                var: self.prior_kappa_var,
            },
            lambda_l: gbeta(self.prior_lambda_mean, self.prior_lambda_sd)?,
            tau: gbeta(self.prior_tau_mean, self.prior_tau_sd)?,
            slope_scale: self.slope_scale,
            inclusion_prob: self.inclusion_prob,
        })
    }

    pub fn proposal(&self) -> ProposalConfig {
        ProposalConfig {
            newton_steps: self.newton_steps,
            df: self.proposal_df,
            p_prop: self.p_prop,
            rw_scale: self.rw_scale,
            ..ProposalConfig::default()
        }
    }

    pub fn chain(&self) -> ChainConfig {
        ChainConfig {
            sweeps: self.sweeps,
            burn_in: Some(self.burn_in),
            proposal: self.proposal(),
        }
    }

    pub fn init(&self) -> InitOptions {
        InitOptions {
            max_rounds: self.init_rounds,
            lbfgs_iters: self.init_lbfgs_iters,
            ..InitOptions::default()
        }
    }

    /// Relative paths in the config are taken from the working directory.
    pub fn path(&self, p: &str) -> Option<PathBuf> {
        (!p.is_empty()).then(|| PathBuf::from(p))
    }
}
