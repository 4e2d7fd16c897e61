//! Instance files, generators and the experiment runner behind the
//! `shellforest` command line tool.

pub mod experiment;
pub mod generate;
pub mod instance;
pub mod report;
