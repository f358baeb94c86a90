//! Optimal sequential grouping (OSG) for temporal sequence partitioning.
//!
//! Splits an ordered sequence of feature vectors (for video: one vector per
//! shot) into contiguous groups by minimizing the total intra-group pairwise
//! distance with an exact dynamic program. Around that solver the crate
//! provides group-count estimation from the singular spectrum, two-modality
//! fusion, differentiable division probabilities, metric-learning losses,
//! a small trainable embedding, Coverage/Overflow evaluation and a seeded
//! synthetic corpus generator.

pub mod distance;
pub mod dp;
pub mod embed;
pub mod error;
pub mod k_estim;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod prob;
pub mod synth;

pub use metrics::{f_score, MetricsReport};

pub use distance::{cosine_distance, DistanceMatrix};
pub use dp::{brute_force, division_cost, g_row, solve, solve_fused, DpTable, GRow};
pub use error::{OsgError, Result};
pub use k_estim::{estimate_k, log_elbow, singular_spectrum, SingularSpectrum};

pub use model::{division_to_labels, labels_to_division, Division, FeatureSequence, SceneLabels};
pub use prob::{ce_loss, ce_loss_backward, division_scores, prob_table, DivisionScores, ProbTable};

