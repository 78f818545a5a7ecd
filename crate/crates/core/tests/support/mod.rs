pub mod oracles;
pub mod models;
