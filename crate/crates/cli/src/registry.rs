//! Method registry: one key per LLE variant, dispatched to the core library.

use clap::ValueEnum;
use llekit::dataset::DataMatrix;
use llekit::dataset::StreamBatch;
use llekit::error::LleError;
use llekit::kernel_lle::{kernel_lle, KernelDescriptor};
use llekit::lle_core::{embed, embedding_matrix, lle, scatter_weights};
use llekit::neighbors::{knn_graph, pairwise_euclidean};
use llekit::robust::{rlle, rlle_elastic_net_weight_rows, rlle_l2_weight_rows, ElasticNetSettings, IrlsSettings};
use llekit::scalable::{incremental_update, lll_embed, nystrom_lle, select_landmarks, IncrementalState, LandmarkStrategy, OptimizerSettings};
use llekit::supervised::{eslle, glle, plle, semi_supervised_lle, sllep_fit, slle};
use llekit::weighted_variants::{deformed_lle, iterative_lle, mlle, occurrence_weighted_lle, weight_adjusted_lle, SRule};
use llekit::{fusion, Result};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Lle,
    KernelLle,
    Slle,
    Eslle,
    Sllep,
    Plle,
    SemiLle,
    Glle,
    Rlle,
    RlleL2,
    RlleEnet,
    Isolle,
    LlePca,
    Ullelda,
    Dlle,
    Mlle,
    IterativeLle,
    WlleDeformed,
    WlleProb,
    LandmarkNystrom,
    LandmarkLll,
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Linear,
    Gaussian,
}

/// How a method uses labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelUse {
    Ignored,
    Optional,
    Partial,
    Required,
}

impl Method {
    pub fn key(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }

    pub fn all() -> &'static [Method] {
        Method::value_variants()
    }

    pub fn labels(self) -> LabelUse {
        match self {
            Method::Slle | Method::Eslle | Method::Sllep | Method::Plle | Method::Glle | Method::Ullelda | Method::Dlle => LabelUse::Required,
            Method::SemiLle => LabelUse::Partial,
            Method::Lle => LabelUse::Optional,
            _ => LabelUse::Ignored,
        }
    }

    /// Methods that take a second point set (`--test`).
    pub fn uses_test(self) -> bool {
        matches!(self, Method::Sllep | Method::Plle | Method::Incremental)
    }

    pub fn summary(self) -> &'static str {
        match self {
            Method::Lle => "plain LLE; with --labeled and --delta, supervised weight adjustment",
            Method::KernelLle => "kernel LLE (--kernel linear|gaussian, --sigma)",
            Method::Slle => "supervised LLE, class distance offset (--alpha)",
            Method::Eslle => "extended supervised LLE, exponential distance (--alpha)",
            Method::Sllep => "SLLE followed by a ridge linear projection (--beta ridge); projects --test when given",
            Method::Plle => "probabilistic SLLE on training + --test points (--alpha)",
            Method::SemiLle => "semi-supervised LLE, blank labels allowed (--alpha)",
            Method::Glle => "label-guided LLE (--alpha)",
            Method::Rlle => "robust LLE with IRLS reliability weights (--iterations)",
            Method::RlleL2 => "LLE with l2-penalized weights (--gamma)",
            Method::RlleEnet => "LLE with elastic-net weights (--gamma, --alpha)",
            Method::Isolle => "LLE with geodesic neighbors",
            Method::LlePca => "LLE-PCA display of the centered data",
            Method::Ullelda => "LLE followed by Fisher discriminant projection",
            Method::Dlle => "discriminant LLE projection",
            Method::Mlle => "modified LLE (--s)",
            Method::IterativeLle => "iterative nonnegative LLE (--iterations)",
            Method::WlleDeformed => "weighted LLE with deformed-distance neighbors",
            Method::WlleProb => "occurrence-probability weighted LLE (--probs)",
            Method::LandmarkNystrom => "Nystrom landmark LLE (--m, --mu, --seed)",
            Method::LandmarkLll => "locally linear landmarks (--m, --seed)",
            Method::Incremental => "LLE on the input, then an incremental update with --test",
        }
    }
}

/// Variant parameters; `None` takes the method default.
#[derive(Debug, Clone, Default)]
pub struct Params {
    pub k: usize,
    pub p: usize,
    pub eps_scale: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub m: Option<usize>,
    pub s: Option<usize>,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub kernel: Option<KernelKind>,
    pub sigma: Option<f64>,
}

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_GAMMA: f64 = 1e-3;

/// Inputs of one embedding run.
pub struct Inputs<'a> {
    pub x: &'a DataMatrix,
    pub labels: Option<&'a [Option<usize>]>,
    pub test: Option<&'a DataMatrix>,
    pub probs: Option<&'a [f64]>,
}

fn full_labels(method: Method, labels: Option<&[Option<usize>]>) -> Result<Vec<usize>> {
    let labels = labels.ok_or_else(|| LleError::InvalidArgument(format!("method {} needs a labeled input (--labeled)", method.key())))?;
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| LleError::InvalidArgument(format!("method {} needs every point labeled; row {i} has no label", method.key()))))
        .collect()
}

fn need_test<'a>(method: Method, test: Option<&'a DataMatrix>) -> Result<&'a DataMatrix> {
    test.ok_or_else(|| LleError::InvalidArgument(format!("method {} needs --test", method.key())))
}

/// Run `method` and return the rows to write.
pub fn run_method(method: Method, inp: &Inputs<'_>, prm: &Params) -> Result<DMatrix<f64>> {
    let (x, k, p, eps) = (inp.x, prm.k, prm.p, prm.eps_scale);
    let alpha = prm.alpha.unwrap_or(DEFAULT_ALPHA);
    let y = match method {
        Method::Lle => match (inp.labels, prm.delta) {
            (Some(_), Some(delta)) => weight_adjusted_lle(x, &full_labels(method, inp.labels)?, k, p, delta, eps)?.embedding.y,
            _ => lle(x, k, p, eps)?.y,
        },
        Method::KernelLle => {
            let desc = match prm.kernel.unwrap_or(KernelKind::Gaussian) {
                KernelKind::Linear => KernelDescriptor::Linear,
                KernelKind::Gaussian => KernelDescriptor::Gaussian { sigma: prm.sigma },
            };
            kernel_lle(x, desc, k, p, eps)?.y
        }
        Method::Slle => slle(x, &full_labels(method, inp.labels)?, alpha, k, p, eps)?.embedding.y,
        Method::Eslle => eslle(x, &full_labels(method, inp.labels)?, alpha, k, p, eps)?.embedding.y,
        Method::Sllep => {
            let fit = slle(x, &full_labels(method, inp.labels)?, alpha, k, p, eps)?;
            let proj = sllep_fit(x, &fit.embedding.y, prm.beta.unwrap_or(DEFAULT_RIDGE))?;
            proj.apply(inp.test.unwrap_or(x))?
        }
        Method::Plle => plle(x, &full_labels(method, inp.labels)?, need_test(method, inp.test)?, k, p, alpha, eps)?.fit.embedding.y,
        Method::SemiLle => {
            let labels = inp.labels.ok_or_else(|| LleError::InvalidArgument("method semi-lle needs a labeled input (--labeled)".into()))?;
            semi_supervised_lle(x, labels, alpha, k, p, eps)?.embedding.y
        }
        Method::Glle => glle(x, &full_labels(method, inp.labels)?, k, p, alpha, eps)?.y,
        Method::Rlle => {
            let settings = IrlsSettings { max_iters: prm.iterations.unwrap_or(IrlsSettings::default().max_iters), ..IrlsSettings::default() };
            rlle(x, k, p, eps, settings)?.embedding.y
        }
        Method::RlleL2 | Method::RlleEnet => {
            let g = knn_graph(&pairwise_euclidean(x), k)?;
            let gamma = prm.gamma.unwrap_or(DEFAULT_GAMMA);
            let rows = if method == Method::RlleL2 {
                rlle_l2_weight_rows(x, &g, gamma)?
            } else {
                rlle_elastic_net_weight_rows(x, &g, gamma, alpha, ElasticNetSettings::default())?
            };
            embed(&embedding_matrix(&scatter_weights(&rows, &g)?), p)?.y
        }
        Method::Isolle => fusion::isolle(x, k, p, eps)?.embedding.y,
        Method::LlePca => fusion::lle_pca(x, k, p, eps)?.y,
        Method::Ullelda => fusion::ullelda(x, &full_labels(method, inp.labels)?, k, p, eps)?.embedding.y,
        Method::Dlle => fusion::dlle(x, &full_labels(method, inp.labels)?, k, p, eps)?.embedding.y,
        Method::Mlle => {
            let rule = prm.s.map_or(SRule::KMinusP, SRule::Fixed);
            mlle(x, k, p, rule, eps)?.y
        }
        Method::IterativeLle => iterative_lle(x, k, p, prm.iterations.unwrap_or(3), eps)?.embedding.y,
        Method::WlleDeformed => deformed_lle(x, k, p, eps)?.embedding.y,
        Method::WlleProb => {
            let ones = vec![1.0; x.len()];
            if inp.probs.is_none() {
                log::warn!("no --probs given; every point gets occurrence probability 1");
            }
            occurrence_weighted_lle(x, inp.probs.unwrap_or(&ones), k, p, eps)?.embedding.y
        }
        Method::LandmarkNystrom | Method::LandmarkLll => {
            let m = prm.m.unwrap_or_else(|| (x.len() / 10).max(p + 2).min(x.len()));
            let set = select_landmarks(x.len(), m, LandmarkStrategy::UniformRandom(prm.seed))?;
            if method == Method::LandmarkNystrom {
                nystrom_lle(x, k, p, &set, prm.mu, eps)?.y
            } else {
                lll_embed(x, k, p, &set, eps)?.0.y
            }
        }
        Method::Incremental => {
            let batch = need_test(method, inp.test)?;
            let state = IncrementalState::fit(x.clone(), k, p, eps, OptimizerSettings::default())?;
            incremental_update(&state, &StreamBatch::new(batch.matrix().clone())?)?.y
        }
    };
    if y.iter().any(|v| !v.is_finite()) {
        return Err(LleError::NonFinite(format!("{} produced a non-finite coordinate", method.key())));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_keys() {
        let keys: Vec<String> = Method::all().iter().map(|m| m.key()).collect();
        assert_eq!(
            keys,
            [
                "lle", "kernel-lle", "slle", "eslle", "sllep", "plle", "semi-lle", "glle", "rlle", "rlle-l2", "rlle-enet", "isolle", "lle-pca",
                "ullelda", "dlle", "mlle", "iterative-lle", "wlle-deformed", "wlle-prob", "landmark-nystrom", "landmark-lll", "incremental"
            ]
        );
    }
}
