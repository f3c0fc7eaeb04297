pub mod oracles;
pub mod fixtures;
