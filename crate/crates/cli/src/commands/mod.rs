pub mod eval;
pub mod export;
pub mod generate;
pub mod gradcheck;
pub mod train;
