//! Write a custom coefficient to the JSON exchange format and read it back.

use lowrank_control::coefficient::{Preset, SeparableCoefficient, Univariate};
use lowrank_control::experiment::{coefficient_to_json, parse_coefficient};

fn main() -> lowrank_control::Result<()> {
    let coeff = SeparableCoefficient::new(
        2,
        vec![
            vec![Univariate::Preset(Preset::SinCosPlus1), Univariate::Polynomial(vec![1.0, 0.5])],
            vec![Univariate::custom(|x| 1.0 + x * x), Univariate::Constant(0.25)],
        ],
    )?;
    let text = coefficient_to_json(&coeff, 33)?;
    println!("{}", &text[..text.len().min(400)]);
    let back = parse_coefficient(&text)?;
    let x = [0.3, 0.7];
    println!("a(0.3, 0.7): original {:.6}, reloaded {:.6}", coeff.eval(&x), back.eval(&x));
    match parse_coefficient("{\"d\": 2, \"R\": 1, \"factors\": [[{\"samples\": [1.0, -1.0]}, {\"preset\": \"one\"}]]}") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => println!("unexpectedly accepted"),
    }
    Ok(())
}
