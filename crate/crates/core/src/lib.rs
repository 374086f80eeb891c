//! Federated short-term load forecasting for retail energy providers.
//!
//! Retailers (clients) each hold a private half-hourly load series. A control
//! centre distributes a stacked-LSTM forecaster, every selected retailer
//! trains it locally, sanitizes and encodes the resulting weights, and the
//! centre combines them with sample-weighted federated averaging. A
//! centralized baseline trains the same model on the pooled data.
//!
//! | module      | contents                                                     |
//! |-------------|--------------------------------------------------------------|
//! | [`data`]    | CSV ingestion, GC filtering, postcode aggregation, scaling, windows |
//! | [`model`]   | LSTM forward pass, BPTT, SGD, parameter exchange format       |
//! | [`privacy`] | L2 clipping, Gaussian mechanism, transport codec              |
//! | [`fed`]     | client selection, client update, aggregation, rounds, baseline |
//! | [`metrics`] | MSE, holdout evaluation, scenario summaries                   |
//! | [`cli`]     | config files and the `fedrep` commands                        |
//!
//! Everything is deterministic given a master seed, independent of the
//! number of worker threads.

pub mod cli;
pub mod data;
pub mod fed;
pub mod metrics;
pub mod model;
pub mod privacy;
pub mod seed;
