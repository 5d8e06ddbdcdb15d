pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod graphs;
pub mod model;
pub mod numerics;
pub mod training;
