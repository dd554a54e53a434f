use fewnist::dataset::synth::{ascii_art, render_digit, Distortion};
use fewnist::rng::SeededRng;

fn main() {
    let d = Distortion::default();
    let mut rng = SeededRng::new(42);
    for digit in [2u8, 8, 4, 9] {
        for _ in 0..2 {
            let img = render_digit(digit, &d, &mut rng);
            println!("digit {digit}:");
            println!("{}", ascii_art(&img));
        }
    }
}
