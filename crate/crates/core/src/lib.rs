//! Learning to quantify: estimating class prevalences in unlabelled samples.
//!
//! The crate covers the classify-and-count family (CC, PCC, ACC, PACC), the
//! EMQ, HDy and MLPE baselines, the artificial-prevalence sampling protocol,
//! and grid-search model selection driven by quantification error rather than
//! classification accuracy.
//!
//! ```
//! use quantlearn::{acc_quantify, cc_quantify, ClassRates};
//!
//! let cc = cc_quantify(&[1, 1, 0, 1, 0]).unwrap();
//! let rates = ClassRates::new(0.8, 0.2).unwrap();
//! let adjusted = acc_quantify(&cc, &rates).unwrap();
//! assert!((adjusted.pos() - 2.0 / 3.0).abs() < 1e-12);
//! ```

pub mod error;
pub mod learners;
pub mod optim;
pub mod prevalence;
pub mod quantifiers;
pub mod sampling;
pub mod selection;
pub mod stats;
pub mod synthetic;
pub mod text;

pub use error::{QuantError, Result};
pub use learners::{
    class_weights, estimate_rates_hard, estimate_rates_soft, platt_calibrate, train, CalibrationMap, Classifier,
    ClassifierOutputs, LearnerConfig, LearnerKind,
};
pub use prevalence::{
    absolute_error, clip_normalize, prevalence_from_labels, relative_absolute_error, smooth, BinaryLabelVector,
    ClassRates, Label, PrevalenceVector,
};
pub use quantifiers::{
    acc_quantify, cc_quantify, emq_quantify, fit, hdy_quantify, mlpe_quantify, pacc_quantify, pcc_quantify,
    EmqSettings, FitOptions, HdySettings, Method, QuantifierModel,
};
pub use sampling::{
    default_grid, derive_seed, generate_indices, protocol_samples, stratified_split, GridPoint, ProtocolPlan,
    SampleIndex, SampleSpec,
};
pub use selection::{evaluate_on_samples, grid_for, select, ParamGrid, SelectionLoss, SelectionReport};
pub use stats::{paired_ttest, TTestVerdict, Verdict};
pub use text::{build_vocabulary, tokenize, vectorize, Corpus, FeatureSet, SparseDocMatrix, Vocabulary};
