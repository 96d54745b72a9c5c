pub mod bundle;
pub mod curate;
pub mod eval;
pub mod kg;
pub mod pathmeta;
pub mod rules;
pub mod split;
pub mod synth;
