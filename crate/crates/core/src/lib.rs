pub mod corpus;
pub mod embeddings;
pub mod entities;
pub mod filter;
pub mod fixture;
pub mod graph;
pub mod imagesim;
pub mod lexicon;
pub mod pipeline;
pub mod store;
