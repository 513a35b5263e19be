pub mod beta;
pub mod fourcorner;
pub mod geom;
pub mod io;
pub mod multiscale;
pub mod snowflake;
pub mod source;
pub mod tree;
pub mod verify;
