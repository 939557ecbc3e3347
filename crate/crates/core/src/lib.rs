pub mod blobstore;
pub mod cli;
pub mod engine;
pub mod methpipe;
pub mod perfmodel;
pub mod shuffle;
pub mod workflow;
