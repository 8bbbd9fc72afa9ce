//! Model parameters, priors, the generative simulator, conditional observation
//! densities and the reparameterizations that leave the likelihood unchanged.

mod density;
mod identify;
pub(crate) mod params;
mod prior;
mod simulate;

pub use density::{conditional_obs_logdensity, DensityWorkspace, PreparedModel};
pub use identify::{flip_factor_signs, permute_factors, rescale_factors};
pub use params::MslParams;
pub use prior::{inv_gamma_logpdf, log_prior, normal_logpdf, sample_prior, uniform_logpdf, PriorSpec};
pub use simulate::{simulate, LatentPath, Simulation};
