pub mod element;
pub mod parser;
pub mod registry;
pub mod scheduler;
pub mod source;
pub mod executor;
pub mod bcm;
pub mod cli;
