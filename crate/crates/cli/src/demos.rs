//! Bundled demo configurations.

pub const NEUMANN_CONSTANT: &str = r#"
[run]
mode = "verify"

[problem]
rho = "1"
bc0 = [0.0, 1.0]
bc1 = [0.0, 1.0]
T = 0.4
tau = 0.2
s = 1.6
u0 = "cos(pi*x)"

[knobs]
n_eig = 30
n_gen = 60
bump_m = 1.0

[verify]
threshold = 1e-3
"#;

pub const DEGENERATE_SQRT: &str = r#"
[run]
mode = "verify"

[problem]
a = [{ x_lo = 0.0, x_hi = 1.0, left_exp = 0.5, smooth = "1" }]
p = 2.0
bc0 = [0.0, 1.0]
bc1 = [0.0, 1.0]
T = 0.4
tau = 0.2
s = 1.4
u0 = "cos(pi*x)"

[knobs]
n_eig = 30
n_gen = 120
bump_m = 0.3
"#;

pub const DISCONTINUOUS_A: &str = r#"
[run]
mode = "verify"

[problem]
a = [
  { x_lo = 0.0, x_hi = 0.5, smooth = "1" },
  { x_lo = 0.5, x_hi = 1.0, smooth = "3" },
]
bc0 = [0.0, 1.0]
bc1 = [0.0, 1.0]
T = 0.4
tau = 0.2
s = 1.6
u0 = "cos(pi*x)"

[knobs]
n_eig = 30
n_gen = 60
"#;

pub const INVERSE_SQUARE_CRITICAL: &str = r#"
[run]
mode = "verify"

[problem]
kind = "inverse-square"
mu = 0.25
bc1 = [1.0, 1.0]
T = 0.4
tau = 0.2
s = 1.6
u0 = "sin(pi*x)"

[knobs]
n_eig = 30
n_gen = 60
"#;

pub const RADIAL_2D: &str = r#"
[run]
mode = "verify"

[problem]
kind = "radial"
dimension = 2
bc1 = [1.0, 0.0]
T = 0.4
tau = 0.2
s = 1.6
u0 = "cos(pi*x/2)"

[knobs]
n_eig = 30
n_gen = 60
"#;

pub const INTERNAL_CONTROL: &str = r#"
[run]
mode = "internal"

[problem]
bc0 = [0.0, 1.0]
bc1 = [0.0, 1.0]
T = 0.4
tau = 0.2
s = 1.6
u0 = "cos(pi*x)"

[internal]
omega = [0.3, 0.7]
inner = [0.4, 0.6]

[knobs]
n_eig = 30
n_gen = 60
"#;

pub const DEMOS: [(&str, &str); 6] = [
    ("neumann-constant", NEUMANN_CONSTANT),
    ("degenerate-sqrt", DEGENERATE_SQRT),
    ("discontinuous-a", DISCONTINUOUS_A),
    ("inverse-square-critical", INVERSE_SQUARE_CRITICAL),
    ("radial-2d", RADIAL_2D),
    ("internal-control", INTERNAL_CONTROL),
];

pub fn demo_config(name: &str) -> Option<&'static str> {
    DEMOS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn every_demo_parses() {
        for (name, text) in DEMOS {
            let c = parse_config(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(c.problem.is_some(), "{name}");
        }
        assert!(demo_config("nope").is_none());
    }
}
