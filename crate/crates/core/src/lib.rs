//! Keyphrase recommendation by constrained permutation of title tokens.
//!
//! Training groups curated buyer queries by leaf category and builds one
//! bipartite token → keyphrase graph per leaf, stored as CSR. Inference
//! walks the title's tokens through the leaf graph, counts how many title
//! tokens reach each keyphrase, and ranks the candidates by alignment score
//! with search and recall tie-breaks.
//!
//! ```
//! use graphex::{build, curate, CurateOptions, DefaultNormalizer, RawKeyphraseRow, Recommender, Scratch};
//!
//! let rows = ["audeze maxwell", "audeze headphones", "gaming headphones xbox"]
//!     .iter()
//!     .enumerate()
//!     .map(|(i, k)| RawKeyphraseRow {
//!         keyphrase: k.to_string(),
//!         leaf_category: 1,
//!         search_score: 100.0 - i as f64,
//!         recall_score: 10.0,
//!     });
//! let curated = curate(rows, &CurateOptions::default(), &DefaultNormalizer::new());
//! let model = build(&curated.dataset);
//! let preds = Recommender::new(&model)
//!     .recommend("audeze maxwell gaming headphones for xbox", 1, &mut Scratch::new())
//!     .unwrap();
//! assert_eq!(preds[0].keyphrase, "gaming headphones xbox");
//! ```

pub mod curation;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod model_file;
pub mod vocab;

pub use curation::{
    curate, ingest, ingest_reader, CategoryId, CurateOptions, CuratedDataset, CuratedKeyphrase, CurationError,
    CurationOutcome, CurationStatus, IngestReport, RawKeyphraseRow, RowError, ScoreOrientation,
};
pub use graph::{build, DegreeStats, GraphError, KeyphraseId, KeyphraseRef, LeafGraph, Model};
pub use inference::{
    dc, enumerate, lta, prune_by_count_groups, rank, ranking_order, title_tokens, Alignment, BatchItem, BatchResult,
    Candidate, InferenceError, Prediction, RecommendOptions, Recommender, Scratch, TitleTokens,
};
pub use model_file::{load, save, ModelFileError};
pub use vocab::{tokenize, DefaultNormalizer, IdentityStemmer, Normalizer, Stemmer, TokenId, Vocabulary};
