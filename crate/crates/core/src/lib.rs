pub mod grammar;
pub mod lexer;
pub mod parser;
pub mod ast;
pub mod table;
pub mod skeleton;
pub mod scope;
pub mod resolve;
pub mod types;
pub mod pipeline;
pub mod par;
pub mod trainer;
pub mod dataflow;
pub mod inject;
pub mod diversity;
pub mod campaign;
