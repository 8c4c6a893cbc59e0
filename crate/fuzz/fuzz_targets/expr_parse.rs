#![no_main]
use flatmap::expr::{eval_constant, parse_field};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = parse_field(src) {
        for (x, y) in [(0.0, 0.0), (0.5, 1.0), (1.0, 2.0)] {
            let _ = e.eval(x, y);
        }
        let _ = e.depends_on_position();
    }
    let _ = eval_constant(src);
});
