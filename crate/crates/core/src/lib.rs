pub mod words;
pub mod automata;
pub mod gtfix;
pub mod group;
pub mod geodesic;
pub mod dynamics;
