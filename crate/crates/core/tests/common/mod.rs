pub mod gradients;
pub mod oracles;
