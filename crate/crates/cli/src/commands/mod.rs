pub mod chat;
pub mod doe;
pub mod inverse;
pub mod serve;
pub mod sweep;
