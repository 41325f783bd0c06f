//! Annual-report driven stock selection.
//!
//! The crate is organised as a pipeline of independent stages:
//!
//! - [`corpus`]: resolve, fetch, clean, persist and chunk 10-K filings.
//! - [`embed_index`]: embed chunks through a provider and answer exact
//!   cosine top-k queries.
//! - [`llm_scoring`]: ask a fixed question set against each filing and turn
//!   the answers into 0-100 feature scores.
//! - [`market_data`]: filing-window returns for stocks and the benchmark.
//! - [`labeling`]: per-year rank-normalised, binned targets.
//! - [`regression`]: linear regression with non-negative coefficients.
//! - [`backtest`]: walk-forward top-k selection and wealth compounding.
//!
//! [`hashing`] and [`net`] hold helpers shared by the stages.

pub mod backtest;
pub mod corpus;
pub mod embed_index;
pub mod hashing;
pub mod labeling;
pub mod llm_scoring;
pub mod market_data;
pub mod net;
pub mod regression;

mod key;

pub use key::{FilingKey, DATE_FORMAT};

pub use backtest::{BacktestReport, KSpec, ReturnBasis, SplitSpec, YearRange};
pub use corpus::{Chunk, Filing, TickerUniverse};
pub use embed_index::{EmbeddingProvider, EmbeddingVector, VectorIndex};
pub use labeling::{LabeledExample, SourceField};
pub use llm_scoring::{FeatureRow, FeatureTable, LlmProvider, QuestionSet};
pub use market_data::{PriceSeries, ReturnRecord};
pub use regression::{DesignMatrix, NnlsModel};
