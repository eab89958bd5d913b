pub mod accountant;
pub mod spectrum;
pub mod train;
pub mod verify;
