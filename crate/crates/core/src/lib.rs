pub mod cli;
pub mod expr;
pub mod fem;
pub mod mesh;
pub mod model;
pub mod schemes;
pub mod sparse;
pub mod verify;
