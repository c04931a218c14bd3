pub mod analyze;
pub mod attack;
pub mod capacity;
pub mod simulate;
pub mod verify;
