pub mod elicit;
pub mod eval;
pub mod explain;
pub mod model;
pub mod opt;
pub mod oracle;
pub mod sat;
