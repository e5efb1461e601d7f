//! Core library: hybrid-program ASTs, parsing, exact polynomial algebra,
//! certificate checking, numeric simulation and randomized falsification.

pub mod ast;
pub mod certify;
pub mod corpus;
pub mod parser;
pub mod poly;
pub mod rng;
pub mod falsify;
pub mod simulate;

pub use ast::{CmpOp, Formula, HybridProgram, Rat, Term};
pub use parser::{
    bind_certificate, parse_certificate, parse_formula_str, parse_model, parse_term_in_model,
    parse_term_str, Certificate, CutMethod, CutStep, Model, ParseError,
};
pub use poly::{
    evaluate_exact, evaluate_f64, lie_derivative, to_polynomial, to_ratpoly, PolyError,
    Polynomial, RatPoly, VarCtx, VectorField,
};
